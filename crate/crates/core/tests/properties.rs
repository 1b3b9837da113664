//! Property tests for the invariants of the numerical stack.

use num_complex::Complex64;
use proptest::prelude::*;
use specloc::locus::{self, hausdorff, Bounds, QesLocus, TraceOptions};
use specloc::qes;
use specloc::shooting::{determinant, determinant_real};
use specloc::spectrum::{self, Rect};
use specloc::{CPoly, Problem, ShootOptions};

fn cplx() -> impl Strategy<Value = Complex64> {
    (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

fn poly(max_deg: usize) -> impl Strategy<Value = CPoly> {
    proptest::collection::vec(cplx(), 1..=max_deg + 1).prop_map(CPoly::new)
}

proptest! {
    #[test]
    fn product_evaluates_pointwise(a in poly(5), b in poly(5), z in cplx()) {
        let lhs = (&a * &b).eval(z);
        let rhs = a.eval(z) * b.eval(z);
        prop_assert!((lhs - rhs).norm() <= 1e-9 * (1.0 + rhs.norm()));
    }

    #[test]
    fn division_identity(a in poly(7), b in poly(3)) {
        prop_assume!(b.degree().is_some() && b.leading().norm() > 0.1);
        let (q, r) = a.divrem(&b).unwrap();
        let back = &(&q * &b) + &r;
        prop_assert!((&back - &a).max_abs_coeff() < 1e-8 * (1.0 + a.max_abs_coeff()));
        prop_assert!(r.degree().is_none_or(|d| d < b.degree().unwrap()));
    }

    #[test]
    fn roots_recover_factors(roots in proptest::collection::vec(cplx(), 1..7)) {
        let sep = roots.iter().enumerate()
            .flat_map(|(i, a)| roots[i + 1..].iter().map(move |b| (a - b).norm()))
            .fold(f64::INFINITY, f64::min);
        prop_assume!(sep > 0.1);
        let p = CPoly::from_roots(&roots);
        let found = p.roots(1e-12).unwrap();
        prop_assert_eq!(found.len(), roots.len());
        for r in &roots {
            let d = found.iter().map(|f| (f - r).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(d < 1e-7, "root {} missed by {}", r, d);
        }
    }

    #[test]
    fn bethe_roots_ignore_seed_order(n in 1usize..5, b in -2.0..2.0f64, k in 0usize..5, shift in 0usize..5) {
        let pts = qes::qes_points(n, b).unwrap();
        let pt = &pts[k % pts.len()];
        prop_assume!(!pt.degenerate);
        let seeds = qes::seeds_from_point(pt);
        let mut rotated = seeds.clone();
        rotated.rotate_left(shift % n);
        rotated.reverse();
        let bc = Complex64::new(b, 0.0);
        let a = qes::bethe_solve(n, bc, &seeds).unwrap();
        let c = qes::bethe_solve(n, bc, &rotated).unwrap();
        for z in &a {
            let d = c.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(d < 1e-8);
        }
        let l = qes::lambda_from_roots(&c, bc);
        prop_assert!((l - pt.lambda).norm() < 1e-8 * (1.0 + l.norm()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn determinant_is_seed_scale_invariant(a in -3.0..3.0f64, mu in -5.0..5.0f64, s in cplx()) {
        prop_assume!(s.norm() > 0.1);
        let p = Problem::cubic_pt(a).unwrap();
        let base = ShootOptions::default();
        let scaled = ShootOptions { seed_scale: s, ..base };
        let x = determinant_real(&p, mu, &base).unwrap();
        let y = determinant_real(&p, mu, &scaled).unwrap();
        prop_assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()), "{} {}", x, y);
    }

    #[test]
    fn determinant_is_conjugate_symmetric(a in -3.0..3.0f64, c in -2.0..2.0f64, mu in cplx()) {
        // For real parameters the zero set is closed under conjugation, and
        // with mirrored rays F(conj mu) = -conj F(mu) up to a positive factor.
        let p = Problem::quartic_i(a, c).unwrap();
        let o = ShootOptions { match_radius: Some(1.0), ..ShootOptions::default() };
        let f = determinant(&p, mu, &o).unwrap();
        let g = determinant(&p, mu.conj(), &o).unwrap();
        let (uf, ug) = (f / f.norm(), -(g / g.norm()).conj());
        prop_assert!((uf - ug).norm() < 1e-6, "{} {}", f, g);
    }

    #[test]
    fn eigenvalues_survive_radius_doubling(a in -1.0..4.0f64) {
        let p = Problem::cubic_pt(a).unwrap();
        let o = ShootOptions::default();
        let e1 = spectrum::real_eigenvalues(&p, 0.0, 12.0, 480, &o).unwrap();
        let e2 = spectrum::real_eigenvalues(&p, 0.0, 12.0, 480, &ShootOptions { radius_factor: 2.0, ..o }).unwrap();
        prop_assert_eq!(e1.len(), e2.len());
        for (x, y) in e1.iter().zip(&e2) {
            prop_assert!((x - y).abs() < 1e-7, "{} {}", x, y);
        }
    }

    #[test]
    fn box_counts_are_mirror_symmetric(a in -4.0..-1.0f64, re0 in -2.0..2.0f64, im0 in 0.05..1.0f64) {
        let p = Problem::cubic_pt(a).unwrap();
        let o = ShootOptions::default();
        let up = Rect::new(re0, re0 + 3.0, im0, im0 + 2.0).unwrap();
        let down = Rect::new(re0, re0 + 3.0, -im0 - 2.0, -im0).unwrap();
        match (spectrum::count_eigenvalues(&p, &up, &o), spectrum::count_eigenvalues(&p, &down, &o)) {
            (Ok(x), Ok(y)) => prop_assert_eq!(x, y),
            // An eigenvalue on the contour is rejected on both sides alike.
            (Err(_), Err(_)) => {}
            (x, y) => prop_assert!(false, "{:?} vs {:?}", x, y),
        }
    }

    #[test]
    fn retrace_in_reverse_covers_same_curve(n in 0usize..4, b in 1.0..4.0f64, k in 0usize..4) {
        let roots = qes::spectral_poly(n, b).q.roots(1e-13).unwrap();
        let real: Vec<f64> = roots.iter().filter(|z| z.im.abs() < 1e-7).map(|z| z.re).collect();
        prop_assume!(!real.is_empty());
        let l = real[k % real.len()];
        let step = 0.05;
        let bounds = Bounds { x0: -6.0, x1: 6.0, l0: -100.0, l1: 100.0 };
        let h = QesLocus { n };
        let fwd = locus::trace(&h, (b, l), &TraceOptions::new(step, bounds)).unwrap();
        let rev = locus::trace(&h, (b, l), &TraceOptions { reverse: true, ..TraceOptions::new(step, bounds) }).unwrap();
        prop_assert!(hausdorff(&fwd, &rev) < 2.0 * step);
        // Reversal flips the orientation: an open curve's endpoints swap.
        if !fwd.closed {
            let (f0, f1) = (fwd.points[0], fwd.points[fwd.points.len() - 1]);
            let (r0, r1) = (rev.points[0], rev.points[rev.points.len() - 1]);
            prop_assert!((f0.x - r1.x).hypot(f0.lambda - r1.lambda) < 2.0 * step);
            prop_assert!((f1.x - r0.x).hypot(f1.lambda - r0.lambda) < 2.0 * step);
        }
    }
}
