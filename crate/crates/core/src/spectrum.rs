//! Real and complex eigenvalues, eigenfunction zero counts, reality checks.
//!
//! Eigenvalues are reported in the family's own convention (`λ`); the
//! internal `mu` never leaks out of this module.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::sync::Mutex;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oscillator::{Family, Problem};
use crate::shooting::{
    auto_radius, determinant, determinant_real, eigenfunction_values, ShootOptions,
};

/// An eigenvalue with optional zero counts of its eigenfunction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenRecord {
    pub family: Family,
    pub lambda: Complex64,
    /// Position in the sorted real spectrum of the scan, if real.
    pub index: Option<usize>,
    pub n_real_zeros: Option<usize>,
    pub n_nonreal_zeros: Option<usize>,
    /// `|F|` at the reported eigenvalue.
    pub residual: f64,
    pub method: String,
}

/// Rectangle `[re0, re1] x [im0, im1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub re0: f64,
    pub re1: f64,
    pub im0: f64,
    pub im1: f64,
}

impl Rect {
    pub fn new(re0: f64, re1: f64, im0: f64, im1: f64) -> Result<Self> {
        if !(re0 < re1 && im0 < im1) || ![re0, re1, im0, im1].iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "empty rectangle [{re0}, {re1}] x [{im0}, {im1}]"
            )));
        }
        Ok(Rect { re0, re1, im0, im1 })
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new(0.5 * (self.re0 + self.re1), 0.5 * (self.im0 + self.im1))
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.re >= self.re0 && z.re <= self.re1 && z.im >= self.im0 && z.im <= self.im1
    }

    /// Same rectangle scaled about its center.
    pub fn scaled(&self, s: f64) -> Rect {
        let c = self.center();
        let hw = 0.5 * (self.re1 - self.re0) * s;
        let hh = 0.5 * (self.im1 - self.im0) * s;
        Rect {
            re0: c.re - hw,
            re1: c.re + hw,
            im0: c.im - hh,
            im1: c.im + hh,
        }
    }

    fn corners(&self) -> [Complex64; 4] {
        [
            Complex64::new(self.re0, self.im0),
            Complex64::new(self.re1, self.im0),
            Complex64::new(self.re1, self.im1),
            Complex64::new(self.re0, self.im1),
        ]
    }

    fn width(&self) -> f64 {
        self.re1 - self.re0
    }

    fn height(&self) -> f64 {
        self.im1 - self.im0
    }
}

/// Shooting options with the seed radius frozen at the largest automatic
/// radius over both rays and the given sample eigenvalues, plus one, and
/// the matching radius frozen at its value for their mean.
///
/// Frozen radii make the determinant a smooth function of `λ` across a
/// whole search, which finite-difference derivatives rely on.
pub fn frozen_options(problem: &Problem, lambdas: &[Complex64], opts: &ShootOptions) -> ShootOptions {
    if opts.radius.is_some() && opts.match_radius.is_some() {
        return *opts;
    }
    let mut r = 0.0f64;
    for &l in lambdas {
        let mu = problem.mu_of_lambda(l);
        for theta in [problem.theta_a, problem.theta_b] {
            r = r.max(auto_radius(&problem.potential, mu, theta, &opts.seed));
        }
    }
    let center = lambdas.iter().sum::<Complex64>() / lambdas.len().max(1) as f64;
    let fixed = ShootOptions {
        radius: opts.radius.or(Some((r + 1.0) * opts.radius_factor)),
        ..*opts
    };
    let r_m = match opts.match_radius {
        Some(r) => r,
        None => crate::shooting::matching_point(problem, problem.mu_of_lambda(center), &fixed)
            .map(|(r, _)| r)
            .unwrap_or(0.0),
    };
    ShootOptions {
        match_radius: Some(r_m),
        ..fixed
    }
}

fn det_lambda(problem: &Problem, lambda: Complex64, opts: &ShootOptions) -> Result<Complex64> {
    determinant(problem, problem.mu_of_lambda(lambda), opts)
}

fn det_real_lambda(problem: &Problem, lambda: f64, opts: &ShootOptions) -> Result<f64> {
    determinant_real(problem, problem.mu_map.mu_re(lambda), opts)
}

/// Root of a continuous `f` on a sign-changing bracket (Illinois variant of
/// regula falsi, falling back to bisection).
pub fn bracket_root<F>(f: F, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    let mut side = 0i32;
    for it in 0..200 {
        if (b - a).abs() <= tol {
            return Ok(0.5 * (a + b));
        }
        let mut c = (a * fb - b * fa) / (fb - fa);
        let lo = a.min(b);
        let span = (b - a).abs();
        if !c.is_finite() || c <= lo + 0.01 * span || c >= lo + 0.99 * span || it % 6 == 5 {
            c = 0.5 * (a + b);
        }
        let fc = f(c)?;
        if fc == 0.0 {
            return Ok(c);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Err(Error::NonConvergence {
        iterations: 200,
        residual: (b - a).abs(),
    })
}

/// Real eigenvalues in `[lambda_min, lambda_max]`, sorted ascending.
///
/// Sign changes of the real determinant on a uniform grid of `grid_n`
/// intervals are refined to `1e-10 (1 + |λ|)`. Even-order zeros and pairs
/// closer than the grid spacing are missed; refine the grid to resolve them.
pub fn real_eigenvalues(
    problem: &Problem,
    lambda_min: f64,
    lambda_max: f64,
    grid_n: usize,
    opts: &ShootOptions,
) -> Result<Vec<f64>> {
    if grid_n < 16 || !(lambda_min < lambda_max) {
        return Err(Error::InvalidParams(format!(
            "need grid_n >= 16 and a nonempty range (got {grid_n}, [{lambda_min}, {lambda_max}])"
        )));
    }
    if !problem.conjugate_symmetric {
        return Err(Error::NotSymmetric);
    }
    let h = (lambda_max - lambda_min) / grid_n as f64;
    let grid: Vec<f64> = (0..=grid_n).map(|k| lambda_min + h * k as f64).collect();
    let vals: Vec<f64> = grid
        .par_iter()
        .map(|&l| det_real_lambda(problem, l, opts))
        .collect::<Result<_>>()?;
    let mut brackets = Vec::new();
    for k in 0..grid_n {
        let (fa, fb) = (vals[k], vals[k + 1]);
        if fa == 0.0 {
            brackets.push((grid[k], grid[k], fa, fa));
        } else if fa * fb < 0.0 {
            brackets.push((grid[k], grid[k + 1], fa, fb));
        }
    }
    if vals[grid_n] == 0.0 {
        brackets.push((lambda_max, lambda_max, 0.0, 0.0));
    }
    let mut roots: Vec<f64> = brackets
        .par_iter()
        .map(|&(a, b, fa, fb)| {
            let tol = 1e-10 * (1.0 + a.abs().max(b.abs()));
            bracket_root(|l| det_real_lambda(problem, l, opts), a, b, fa, fb, tol)
        })
        .collect::<Result<_>>()?;
    roots.sort_by(f64::total_cmp);
    Ok(roots)
}

/// Real eigenvalues of an even potential with opposite rays, split by parity.
///
/// Along ray `A` the solution `Y(t) = y(e^{iθ} t)` of such a problem is real
/// for real `λ` (its seed is real), so `Re y(0)` vanishes exactly at the odd
/// eigenvalues and `Re(e^{iθ} y'(0))` exactly at the even ones. Scanning the
/// two separately resolves pairs that are nearly degenerate, as in a deep
/// double well, where a scan of the determinant would see no sign change.
/// Returns `(even, odd)`, each ascending.
pub fn parity_eigenvalues(
    problem: &Problem,
    lambda_min: f64,
    lambda_max: f64,
    grid_n: usize,
    opts: &ShootOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let v = &problem.potential;
    let even = (1..=v.degree().unwrap_or(0)).step_by(2).all(|k| v.coeff(k).norm() == 0.0);
    let opposite = ((problem.theta_b - problem.theta_a).rem_euclid(TAU) - PI).abs() < 1e-12;
    let axis = (2.0 * problem.theta_a).sin().abs() < 1e-12;
    if !even || !opposite || !axis || !v.has_real_coeffs() {
        return Err(Error::InvalidParams(
            "parity split needs an even real potential and opposite rays on an axis".into(),
        ));
    }
    if grid_n < 16 || !(lambda_min < lambda_max) {
        return Err(Error::InvalidParams(format!(
            "need grid_n >= 16 and a nonempty range (got {grid_n}, [{lambda_min}, {lambda_max}])"
        )));
    }
    let rot = crate::shooting::direction(problem.theta_a);
    let parts = |l: f64| -> Result<(f64, f64)> {
        let mu = Complex64::new(problem.mu_map.mu_re(l), 0.0);
        let shot = crate::shooting::integrate_ray(problem, mu, problem.theta_a, opts)?;
        Ok(((rot * shot.dy0).re, shot.y0.re))
    };
    let h = (lambda_max - lambda_min) / grid_n as f64;
    let grid: Vec<f64> = (0..=grid_n).map(|k| lambda_min + h * k as f64).collect();
    let vals: Vec<(f64, f64)> = grid.par_iter().map(|&l| parts(l)).collect::<Result<_>>()?;
    let mut out = (Vec::new(), Vec::new());
    for which in 0..2 {
        let pick = |v: (f64, f64)| if which == 0 { v.0 } else { v.1 };
        let brackets: Vec<(f64, f64, f64, f64)> = (0..grid_n)
            .filter_map(|k| {
                let (fa, fb) = (pick(vals[k]), pick(vals[k + 1]));
                (fa * fb < 0.0 || fa == 0.0).then_some((grid[k], grid[k + 1], fa, fb))
            })
            .collect();
        let mut roots: Vec<f64> = brackets
            .par_iter()
            .map(|&(a, b, fa, fb)| {
                let tol = 1e-10 * (1.0 + a.abs().max(b.abs()));
                bracket_root(|l| parts(l).map(pick), a, b, fa, fb, tol)
            })
            .collect::<Result<_>>()?;
        roots.sort_by(f64::total_cmp);
        if which == 0 {
            out.0 = roots;
        } else {
            out.1 = roots;
        }
    }
    Ok(out)
}

/// Sampled closed contour with the logarithm of a nonvanishing function.
struct Contour {
    nodes: Vec<Complex64>,
    logs: Vec<Complex64>,
}

/// Winding of `f` around a closed polygon, by summing principal increments of
/// `log f` between nodes refined until each increment is small.
///
/// `log_eval` returns `ln|f| + i arg f` at each point.
fn contour_winding<F>(corners: &[Complex64], per_edge: usize, log_eval: &F) -> Result<(i64, Contour)>
where
    F: Fn(&[Complex64]) -> Result<Vec<Complex64>> + Sync,
{
    contour_winding_with(corners, &vec![per_edge; corners.len()], log_eval)
}

/// As [`contour_winding`] with a separate initial node count per edge.
fn contour_winding_with<F>(corners: &[Complex64], per_edge: &[usize], log_eval: &F) -> Result<(i64, Contour)>
where
    F: Fn(&[Complex64]) -> Result<Vec<Complex64>> + Sync,
{
    let mut nodes = Vec::new();
    for (i, &a) in corners.iter().enumerate() {
        let b = corners[(i + 1) % corners.len()];
        let n = per_edge[i];
        for k in 0..n {
            nodes.push(a + (b - a) * (k as f64 / n as f64));
        }
    }
    let mut logs = log_eval(&nodes)?;
    let wrap = |x: f64| x - TAU * (x / TAU).round();
    let coarse = |a: Complex64, b: Complex64| {
        wrap(b.im - a.im).abs() > 0.5 || (b.re - a.re).abs() > 2.0
    };
    for _round in 0..16 {
        let n = nodes.len();
        let bad: Vec<usize> = (0..n)
            .filter(|&i| coarse(logs[i], logs[(i + 1) % n]))
            .collect();
        if bad.is_empty() {
            let total: f64 = (0..n).map(|i| wrap(logs[(i + 1) % n].im - logs[i].im)).sum();
            let w = total / TAU;
            let residual = (w - w.round()).abs();
            if residual > 0.1 {
                return Err(Error::ContourThroughZero { residual });
            }
            return Ok((w.round() as i64, Contour { nodes, logs }));
        }
        let mids: Vec<Complex64> = bad
            .iter()
            .map(|&i| 0.5 * (nodes[i] + nodes[(i + 1) % n]))
            .collect();
        let mid_logs = log_eval(&mids)?;
        let mut new_nodes = Vec::with_capacity(n + mids.len());
        let mut new_logs = Vec::with_capacity(n + mids.len());
        let mut j = 0;
        for i in 0..n {
            new_nodes.push(nodes[i]);
            new_logs.push(logs[i]);
            if j < bad.len() && bad[j] == i {
                new_nodes.push(mids[j]);
                new_logs.push(mid_logs[j]);
                j += 1;
            }
        }
        nodes = new_nodes;
        logs = new_logs;
    }
    let n = nodes.len();
    let worst = (0..n)
        .map(|i| wrap(logs[(i + 1) % n].im - logs[i].im).abs())
        .fold(0.0, f64::max);
    Err(Error::ContourThroughZero {
        residual: worst / PI,
    })
}

/// Memoized determinant evaluations keyed by exact `λ`.
struct DetCache<'a> {
    problem: &'a Problem,
    opts: ShootOptions,
    map: Mutex<HashMap<(u64, u64), Complex64>>,
}

impl<'a> DetCache<'a> {
    fn logs(&self, pts: &[Complex64]) -> Result<Vec<Complex64>> {
        let vals: Vec<Complex64> = pts
            .par_iter()
            .map(|&l| {
                let key = (l.re.to_bits(), l.im.to_bits());
                if let Some(&v) = self.map.lock().unwrap().get(&key) {
                    return Ok(v);
                }
                let v = det_lambda(self.problem, l, &self.opts)?;
                self.map.lock().unwrap().insert(key, v);
                Ok(v)
            })
            .collect::<Result<_>>()?;
        vals.iter()
            .map(|v| {
                if v.norm() < 1e-12 {
                    Err(Error::ContourThroughZero { residual: v.norm() })
                } else {
                    Ok(v.ln())
                }
            })
            .collect()
    }
}

/// Number of eigenvalues inside `rect` (argument principle).
pub fn count_eigenvalues(problem: &Problem, rect: &Rect, opts: &ShootOptions) -> Result<usize> {
    let corners = rect.corners();
    let fo = ShootOptions {
        match_radius: opts.match_radius,
        ..frozen_options(problem, &corners, opts)
    };
    let cache = DetCache {
        problem,
        opts: fo,
        map: Mutex::new(HashMap::new()),
    };
    let (w, _) = contour_winding(&corners, 16, &|p: &[Complex64]| cache.logs(p))?;
    usize::try_from(w).map_err(|_| Error::ContourThroughZero { residual: w as f64 })
}

/// Newton iteration on the determinant with a central-difference derivative.
fn newton_polish(
    problem: &Problem,
    start: Complex64,
    max_step: f64,
    opts: &ShootOptions,
) -> Result<(Complex64, f64)> {
    let mut l = start;
    let mut f = det_lambda(problem, l, opts)?;
    for _ in 0..40 {
        let h = 1e-6 * (1.0 + l.norm());
        let fp = det_lambda(problem, l + h, opts)?;
        let fm = det_lambda(problem, l - h, opts)?;
        let d = (fp - fm) / (2.0 * h);
        if d.norm() == 0.0 {
            break;
        }
        let mut step = f / d;
        if step.norm() > max_step {
            step *= max_step / step.norm();
        }
        if (l - step - start).norm() > 4.0 * max_step {
            break;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let cand = l - step * t;
            let fc = det_lambda(problem, cand, opts)?;
            if fc.norm() < f.norm() || (step * t).norm() < 1e-12 * (1.0 + l.norm()) {
                l = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        if (step * t).norm() < 1e-10 * (1.0 + l.norm()) {
            return Ok((l, f.norm()));
        }
    }
    Err(Error::NonConvergence { iterations: 40, residual: f.norm() })
}

/// All eigenvalues inside `rect` of the `λ`-plane.
///
/// The box is split into quadrants until each cell contains at most one
/// eigenvalue (argument principle), then each is polished by Newton's
/// method. Split lines that pass too close to an eigenvalue are shifted.
/// `max_subdiv` bounds the recursion depth.
pub fn complex_eigenvalues_box(
    problem: &Problem,
    rect: &Rect,
    max_subdiv: usize,
    opts: &ShootOptions,
) -> Result<Vec<Complex64>> {
    let mut rect = *rect;
    let corners = rect.corners();
    let fo = ShootOptions {
        match_radius: opts.match_radius,
        ..frozen_options(problem, &corners, opts)
    };
    let cache = DetCache {
        problem,
        opts: fo,
        map: Mutex::new(HashMap::new()),
    };
    let eval = |p: &[Complex64]| cache.logs(p);
    // Nudge the outer box outward if it passes through an eigenvalue.
    let mut outer = None;
    for k in 0..6 {
        match contour_winding(&rect.corners(), 32, &eval) {
            Ok((w, _)) => {
                outer = Some(w);
                break;
            }
            Err(Error::ContourThroughZero { .. }) if k < 5 => {
                let e = 1e-3 * (1.0 + k as f64) * rect.width().max(rect.height());
                rect = Rect::new(rect.re0 - e, rect.re1 + 0.7 * e, rect.im0 - 0.9 * e, rect.im1 + 0.8 * e)?;
            }
            Err(e) => return Err(e),
        }
    }
    let total = outer.unwrap_or(0).max(0) as usize;
    let mut out = Vec::new();
    subdivide(problem, &rect, total, 0, max_subdiv, &cache, &eval, &mut out)?;
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn subdivide<F>(
    problem: &Problem,
    rect: &Rect,
    count: usize,
    depth: usize,
    max_depth: usize,
    cache: &DetCache,
    eval: &F,
    out: &mut Vec<Complex64>,
) -> Result<()>
where
    F: Fn(&[Complex64]) -> Result<Vec<Complex64>> + Sync,
{
    if count == 0 {
        return Ok(());
    }
    if count == 1 {
        let size = rect.width().max(rect.height());
        let local = ShootOptions {
            match_radius: None,
            ..cache.opts
        };
        let local = frozen_options(problem, &[rect.center()], &local);
        let polished = newton_polish(problem, rect.center(), 0.5 * size, &local);
        let slack = 0.05 * rect.width().max(rect.height());
        let grown = Rect {
            re0: rect.re0 - slack,
            re1: rect.re1 + slack,
            im0: rect.im0 - slack,
            im1: rect.im1 + slack,
        };
        if let Ok((l, _)) = polished {
            if grown.contains(l) {
                out.push(l);
                return Ok(());
            }
        }
    }
    if depth >= max_depth {
        return Err(Error::SubdivisionLimit { remaining: count });
    }
    // Split into quadrants; shift split lines away from eigenvalues.
    let shifts = [0.0, 0.0371, -0.0529, 0.0813, -0.1093];
    for (k, &s) in shifts.iter().enumerate() {
        let xm = rect.re0 + (0.5 + s) * rect.width();
        let ym = rect.im0 + (0.5 - 0.7 * s) * rect.height();
        let quads = [
            Rect { re0: rect.re0, re1: xm, im0: rect.im0, im1: ym },
            Rect { re0: xm, re1: rect.re1, im0: rect.im0, im1: ym },
            Rect { re0: xm, re1: rect.re1, im0: ym, im1: rect.im1 },
            Rect { re0: rect.re0, re1: xm, im0: ym, im1: rect.im1 },
        ];
        let counts: Result<Vec<i64>> = quads
            .iter()
            .map(|q| contour_winding(&q.corners(), 16, eval).map(|(w, _)| w))
            .collect();
        match counts {
            Ok(c) if c.iter().all(|&x| x >= 0) && c.iter().sum::<i64>() == count as i64 => {
                for (q, &n) in quads.iter().zip(&c) {
                    subdivide(problem, q, n as usize, depth + 1, max_depth, cache, eval, out)?;
                }
                return Ok(());
            }
            Ok(_) | Err(Error::ContourThroughZero { .. }) if k + 1 < shifts.len() => continue,
            Ok(c) => {
                return Err(Error::ContourThroughZero {
                    residual: (c.iter().sum::<i64>() - count as i64).abs() as f64,
                })
            }
            Err(e) => return Err(e),
        }
    }
    unreachable!()
}

/// Zero counts of an eigenfunction inside a rectangle of the `z`-plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroCount {
    pub n_real: usize,
    pub n_nonreal: usize,
    pub total: usize,
    pub rect: Rect,
    /// Residual of the real phase normalization on the real segment.
    pub phase_residual: f64,
}

/// Largest accepted phase residual in [`count_zeros`]. An eigenvalue error
/// `δ` mixes in the partner of a tunnelling pair with gap `g` at relative
/// size `δ/g`, so deep double wells sit well above round-off here.
pub const PHASE_RESIDUAL_MAX: f64 = 1e-4;

/// Zeros of the eigenfunction at eigenvalue `lambda` inside `rect`.
///
/// The total comes from the argument principle on the boundary; real zeros
/// are sign changes of the eigenfunction on the real segment after removing
/// a constant phase (fitted by least squares, residual required below
/// [`PHASE_RESIDUAL_MAX`]). The rectangle should be symmetric about the
/// real axis.
pub fn count_zeros(problem: &Problem, lambda: Complex64, rect: &Rect, opts: &ShootOptions) -> Result<ZeroCount> {
    let mu = problem.mu_of_lambda(lambda);
    let eval = |pts: &[Complex64]| -> Result<Vec<Complex64>> {
        let vals = eigenfunction_values(problem, mu, pts, opts)?;
        vals.iter()
            .map(|v| {
                if v.y.norm() == 0.0 {
                    Err(Error::BoundaryZero { distance: 0.0 })
                } else {
                    Ok(Complex64::new(v.ln_abs(), v.y.arg()))
                }
            })
            .collect()
    };
    // Initial spacing from the WKB phase rate |sqrt(V - mu)|, so that no
    // node-to-node phase increment aliases by a whole turn.
    let corners = rect.corners();
    let counts: Vec<usize> = (0..4)
        .map(|i| {
            let (a, b) = (corners[i], corners[(i + 1) % 4]);
            let m = 256;
            let phase: f64 = (0..m)
                .map(|k| {
                    let z = a + (b - a) * ((k as f64 + 0.5) / m as f64);
                    (problem.potential.eval(z) - mu).norm().sqrt() * (b - a).norm() / m as f64
                })
                .sum();
            ((4.0 * phase).ceil() as usize).max(64)
        })
        .collect();
    let (w, contour) = match contour_winding_with(&corners, &counts, &eval) {
        Ok(x) => x,
        Err(Error::ContourThroughZero { .. }) => return Err(Error::BoundaryZero { distance: 1e-6 }),
        Err(e) => return Err(e),
    };
    // Near-zero on the boundary: a sharp dip of ln|y| relative to neighbours.
    let n = contour.nodes.len();
    for i in 0..n {
        let a = contour.logs[(i + n - 1) % n].re;
        let b = contour.logs[(i + 1) % n].re;
        let h = (contour.nodes[(i + 1) % n] - contour.nodes[i]).norm();
        if contour.logs[i].re < 0.5 * (a + b) - 8.0 && h < 1e-3 {
            return Err(Error::BoundaryZero { distance: h });
        }
    }
    let total = usize::try_from(w).map_err(|_| Error::BoundaryZero { distance: 0.0 })?;
    if rect.im0 > 0.0 || rect.im1 < 0.0 {
        return Ok(ZeroCount {
            n_real: 0,
            n_nonreal: total,
            total,
            rect: *rect,
            phase_residual: 0.0,
        });
    }
    // Real segment sampled finely relative to the local wavelength.
    let vmax = [rect.re0, rect.re1, 0.0]
        .iter()
        .map(|&x| (problem.potential.eval(Complex64::new(x, 0.0)) - mu).norm())
        .fold(1.0, f64::max);
    let dx = (0.05f64).min(0.3 / vmax.sqrt());
    let m = (rect.width() / dx).ceil().max(200.0) as usize;
    let xs: Vec<Complex64> = (0..=m)
        .map(|k| Complex64::new(rect.re0 + rect.width() * k as f64 / m as f64, 0.0))
        .collect();
    let vals = eigenfunction_values(problem, mu, &xs, opts)?;
    // Common scale: largest sample has modulus ~1.
    let top = vals.iter().map(|v| v.ln_abs()).fold(f64::NEG_INFINITY, f64::max);
    let units: Vec<Complex64> = vals
        .iter()
        .map(|v| v.y / v.y.norm() * (v.ln_abs() - top).exp())
        .collect();
    let s: Complex64 = units.iter().map(|u| u * u).sum();
    let phase = Complex64::from_polar(1.0, -0.5 * s.arg());
    let resid = (units.iter().map(|u| (u * phase).im.powi(2)).sum::<f64>()
        / units.iter().map(|u| u.norm_sqr()).sum::<f64>())
    .sqrt();
    if resid > PHASE_RESIDUAL_MAX {
        return Err(Error::InvalidParams(format!(
            "eigenfunction is not real on the real axis (phase residual {resid:e})"
        )));
    }
    let signs: Vec<f64> = units.iter().map(|u| (u * phase).re.signum()).collect();
    let n_real = signs.windows(2).filter(|w| w[0] != w[1]).count();
    Ok(ZeroCount {
        n_real,
        n_nonreal: total.saturating_sub(n_real),
        total,
        rect: *rect,
        phase_residual: resid,
    })
}

/// Outcome of a reality check for `L_J`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealityReport {
    pub b: f64,
    pub j: f64,
    /// Checked eigenvalues, by decreasing real part.
    pub eigenvalues: Vec<Complex64>,
    /// QES eigenvalues found and excluded (integer `J >= 1` only).
    pub qes: Vec<Complex64>,
    pub max_abs_im: f64,
}

/// Settings for [`reality_check`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealityOptions {
    pub strip_im: f64,
    pub window: f64,
    pub max_windows: usize,
}

impl Default for RealityOptions {
    fn default() -> Self {
        RealityOptions {
            strip_im: 5.0,
            window: 12.0,
            max_windows: 40,
        }
    }
}

/// Upper bound used to start the downward scan of the spectrum of `L_J`
/// (its eigenvalues are bounded above and tend to `-∞`).
pub fn spectrum_top(b: f64, j: f64) -> f64 {
    (3.0 * b * b + 4.0 * j.abs() + 10.0).max(10.0)
}

/// First `n` eigenvalues of `L_J` (largest real parts) and the largest
/// imaginary part among them, with QES eigenvalues excluded for integer
/// `J >= 1`.
///
/// Eigenvalues are located in successive windows of a horizontal strip by
/// the argument principle, so non-real ones are found as well as real ones.
pub fn reality_check(b: f64, j: f64, n: usize, ropts: &RealityOptions, opts: &ShootOptions) -> Result<RealityReport> {
    if n == 0 || n > 20 {
        return Err(Error::InvalidParams(format!("N = {n} outside 1..=20")));
    }
    let problem = Problem::quartic_ii(b, j)?;
    let qes_roots: Vec<Complex64> = if j >= 1.0 && j.fract() == 0.0 {
        crate::qes::spectral_poly(j as usize - 1, b).q.roots(1e-12)?
    } else {
        Vec::new()
    };
    let top = spectrum_top(b, j);
    let above = Rect::new(top, top + ropts.window, -ropts.strip_im, ropts.strip_im)?;
    if count_eigenvalues(&problem, &above, opts)? != 0 {
        return Err(Error::InvalidParams(format!(
            "eigenvalues found above the scan start {top}"
        )));
    }
    let mut found: Vec<Complex64> = Vec::new();
    let mut hi = top;
    // Windows overlap so that no eigenvalue sits on a shared edge.
    let pad = 0.0618 * ropts.window;
    let is_qes = |z: &Complex64| qes_roots.iter().any(|q| (*q - *z).norm() < 1e-6 * (1.0 + q.norm()));
    for _ in 0..ropts.max_windows {
        let lo = hi - ropts.window;
        let rect = Rect::new(lo - pad, hi + pad, -ropts.strip_im, ropts.strip_im)?;
        found.extend(complex_eigenvalues_box(&problem, &rect, 12, opts)?);
        found.sort_by(|a, b| b.re.total_cmp(&a.re));
        found.dedup_by(|a, b| (*a - *b).norm() < 1e-7 * (1.0 + a.norm()));
        hi = lo;
        if found.iter().filter(|z| !is_qes(z)).count() >= n {
            break;
        }
    }
    let (qes, rest): (Vec<Complex64>, Vec<Complex64>) = found.into_iter().partition(is_qes);
    if rest.len() < n {
        return Err(Error::NonConvergence {
            iterations: ropts.max_windows,
            residual: rest.len() as f64,
        });
    }
    let eigenvalues: Vec<Complex64> = rest.into_iter().take(n).collect();
    let max_abs_im = eigenvalues.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    Ok(RealityReport {
        b,
        j,
        eigenvalues,
        qes,
        max_abs_im,
    })
}

/// Eigenvalue records for a real scan.
pub fn real_records(
    problem: &Problem,
    lambdas: &[f64],
    opts: &ShootOptions,
) -> Result<Vec<EigenRecord>> {
    lambdas
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let r = det_real_lambda(problem, l, opts)?.abs();
            Ok(EigenRecord {
                family: problem.family,
                lambda: Complex64::new(l, 0.0),
                index: Some(i),
                n_real_zeros: None,
                n_nonreal_zeros: None,
                residual: r,
                method: "real-scan".into(),
            })
        })
        .collect()
}

/// Eigenvalue records for a box search.
pub fn complex_records(
    problem: &Problem,
    lambdas: &[Complex64],
    opts: &ShootOptions,
) -> Result<Vec<EigenRecord>> {
    let fo = frozen_options(problem, lambdas, opts);
    lambdas
        .iter()
        .map(|&l| {
            Ok(EigenRecord {
                family: problem.family,
                lambda: l,
                index: None,
                n_real_zeros: None,
                n_nonreal_zeros: None,
                residual: det_lambda(problem, l, &fo)?.norm(),
                method: "argument-principle".into(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::CPoly;

    fn harmonic() -> Problem {
        Problem::custom(CPoly::from_real(&[0.0, 0.0, 1.0]), 0.0, PI).unwrap()
    }

    #[test]
    fn harmonic_real_scan() {
        let ev = real_eigenvalues(&harmonic(), 0.0, 8.0, 64, &ShootOptions::default()).unwrap();
        assert_eq!(ev.len(), 4);
        for (k, l) in ev.iter().enumerate() {
            assert!((l - (2 * k + 1) as f64).abs() < 1e-6, "{l}");
        }
    }

    #[test]
    fn harmonic_box() {
        let o = ShootOptions::default();
        let h = harmonic();
        let z = complex_eigenvalues_box(&h, &Rect::new(2.5, 3.5, -0.5, 0.5).unwrap(), 8, &o).unwrap();
        assert_eq!(z.len(), 1);
        assert!((z[0] - 3.0).norm() < 1e-8);
        let z = complex_eigenvalues_box(&h, &Rect::new(1.5, 2.5, -0.5, 0.5).unwrap(), 8, &o).unwrap();
        assert!(z.is_empty());
        let z = complex_eigenvalues_box(&h, &Rect::new(-0.3, 7.7, -1.0, 1.0).unwrap(), 8, &o).unwrap();
        assert_eq!(z.len(), 4);
    }

    #[test]
    fn quartic_qes_in_scan() {
        let p = Problem::quartic_ii(1.0, 2.0).unwrap();
        let ev = real_eigenvalues(&p, -6.0, 4.0, 64, &ShootOptions::default()).unwrap();
        for target in [-3.0, 1.0] {
            assert!(ev.iter().any(|l| (l - target).abs() < 1e-7), "{ev:?}");
        }
    }

    #[test]
    fn cubic_known_values() {
        // Eigenvalues of -y'' + i x^3 y on the real line.
        let p = Problem::cubic_pt(0.0).unwrap();
        let ev = real_eigenvalues(&p, 0.0, 12.0, 48, &ShootOptions::default()).unwrap();
        let known = [1.156267072, 4.109228752, 7.562273854, 11.314421820];
        assert_eq!(ev.len(), 4, "{ev:?}");
        for (a, b) in ev.iter().zip(known) {
            assert!((a - b).abs() < 5e-8, "{a} {b}");
        }
        let tight = ShootOptions::with_rtol(1e-12);
        let ev2 = real_eigenvalues(&p, 0.0, 12.0, 48, &tight).unwrap();
        for (a, b) in ev.iter().zip(&ev2) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn harmonic_zero_counts() {
        let h = harmonic();
        let z = count_zeros(&h, Complex64::new(5.0, 0.0), &Rect::new(-4.0, 4.0, -1.0, 1.0).unwrap(), &ShootOptions::default()).unwrap();
        assert_eq!((z.n_real, z.n_nonreal), (2, 0));
    }

    #[test]
    fn qes_zero_count() {
        let p = Problem::quartic_ii(1.0, 2.0).unwrap();
        let r = Rect::new(-3.0, 3.0, -2.0, 2.0).unwrap();
        let z = count_zeros(&p, Complex64::new(1.0, 0.0), &r, &ShootOptions::default()).unwrap();
        assert_eq!((z.n_real, z.n_nonreal), (1, 0));
    }

    #[test]
    fn reality_keeps_eigenvalues_on_window_edges() {
        // The scan starts at 21 with width 12, so -3 lies on a window edge.
        let r = reality_check(1.0, 2.0, 3, &RealityOptions::default(), &ShootOptions::default()).unwrap();
        let mut q: Vec<f64> = r.qes.iter().map(|z| z.re).collect();
        q.sort_by(f64::total_cmp);
        assert_eq!(q.len(), 2);
        assert!((q[0] + 3.0).abs() < 1e-8 && (q[1] - 1.0).abs() < 1e-8);
        assert!(r.max_abs_im < 1e-8);
    }
}
