//! Real spectral loci traced as plane curves.
//!
//! A locus is the zero set of a real function `H(x, λ)` of one real
//! parameter and the eigenvalue. [`trace`] follows a connected component by
//! pseudo-arclength continuation; the family-specific entry points seed it
//! from eigenvalues and label the result by eigenfunction zero counts.

use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oscillator::Problem;
use crate::qes;
use crate::shooting::{determinant_real, ShootOptions};
use crate::spectrum::{self, count_zeros, frozen_options, Rect};

/// A point of a traced curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// Arclength from the first point.
    pub s: f64,
    pub x: f64,
    pub lambda: f64,
    /// `|H| / |∇H|`, the distance to the zero set to first order.
    pub residual: f64,
}

/// Which component a trace belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchLabel {
    /// `Γ_n` of the cubic family.
    Gamma(usize),
    /// `Γ_{n,m}` of the QES locus.
    GammaNm(usize, usize),
    /// Plane section of `S_n` of the type-I quartic family.
    Section(usize),
}

impl BranchLabel {
    pub fn tag(&self) -> String {
        match *self {
            BranchLabel::Gamma(n) => format!("G{n}"),
            BranchLabel::GammaNm(n, m) => format!("G{n}_{m}"),
            BranchLabel::Section(n) => format!("S{n}"),
        }
    }

    pub fn parse(tag: &str) -> Option<BranchLabel> {
        if let Some(rest) = tag.strip_prefix('S') {
            return rest.parse().ok().map(BranchLabel::Section);
        }
        let rest = tag.strip_prefix('G')?;
        match rest.split_once('_') {
            Some((n, m)) => Some(BranchLabel::GammaNm(n.parse().ok()?, m.parse().ok()?)),
            None => rest.parse().ok().map(BranchLabel::Gamma),
        }
    }
}

/// A traced connected component (or the part of it inside the bounds).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveTrace {
    pub points: Vec<TracePoint>,
    /// Parameters held fixed along the trace (the plane `a = a0` of a
    /// section), written before `x` in CSV output.
    pub fixed: Vec<f64>,
    pub branch_label: Option<BranchLabel>,
    pub closed: bool,
    /// Indices of points where `x` is locally extremal along the curve.
    pub turning_points: Vec<usize>,
}

impl CurveTrace {
    pub fn arclength(&self) -> f64 {
        let open = self.points.last().map_or(0.0, |p| p.s);
        if self.closed && self.points.len() > 1 {
            let (a, b) = (self.points[0], self.points[self.points.len() - 1]);
            open + (a.x - b.x).hypot(a.lambda - b.lambda)
        } else {
            open
        }
    }

    /// `λ` values where the curve crosses the vertical line at `x`, by
    /// linear interpolation between neighbouring points, ascending.
    pub fn lambda_at(&self, x: f64) -> Vec<f64> {
        let p = &self.points;
        let mut segs: Vec<(usize, usize)> = (1..p.len()).map(|i| (i - 1, i)).collect();
        if self.closed && p.len() > 2 {
            segs.push((p.len() - 1, 0));
        }
        let mut out: Vec<f64> = segs
            .into_iter()
            .filter_map(|(i, j)| {
                let (a, b) = (p[i], p[j]);
                if (a.x - x) * (b.x - x) > 0.0 || a.x == b.x || (b.x == x && j != 0 && j + 1 < p.len()) {
                    return None;
                }
                let t = (x - a.x) / (b.x - a.x);
                Some(a.lambda + t * (b.lambda - a.lambda))
            })
            .collect();
        out.sort_by(f64::total_cmp);
        out
    }
}

/// Smallest distance between points of two traces.
pub fn min_separation(a: &CurveTrace, b: &CurveTrace) -> f64 {
    a.points
        .par_iter()
        .map(|p| {
            b.points
                .iter()
                .map(|q| (p.x - q.x).hypot(p.lambda - q.lambda))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// Hausdorff distance between the point sets of two traces.
pub fn hausdorff(a: &CurveTrace, b: &CurveTrace) -> f64 {
    let directed = |u: &CurveTrace, v: &CurveTrace| {
        u.points
            .par_iter()
            .map(|p| {
                v.points
                    .iter()
                    .map(|q| (p.x - q.x).hypot(p.lambda - q.lambda))
                    .fold(f64::INFINITY, f64::min)
            })
            .reduce(|| 0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

/// `H` restricted to a neighbourhood of one continuation step.
pub type Frozen<'a> = Box<dyn Fn(f64, f64) -> Result<f64> + Sync + 'a>;

/// Source of the function whose zero set is traced.
///
/// `freeze` returns a version of `H` that is smooth near `(x, λ)`; for
/// shooting determinants this fixes the seed and matching radii, which
/// otherwise jump with the parameters. Different freezes may differ by a
/// positive factor but share the zero set.
pub trait Evaluator: Sync {
    fn freeze(&self, x: f64, lambda: f64) -> Result<Frozen<'_>>;
}

impl<F> Evaluator for F
where
    F: Fn(f64, f64) -> Result<f64> + Sync,
{
    fn freeze(&self, _x: f64, _lambda: f64) -> Result<Frozen<'_>> {
        Ok(Box::new(move |x, l| self(x, l)))
    }
}

/// The real spectral determinant of a one-parameter family of problems.
pub struct DeterminantLocus<B> {
    pub build: B,
    pub opts: ShootOptions,
}

impl<B> Evaluator for DeterminantLocus<B>
where
    B: Fn(f64) -> Result<Problem> + Sync,
{
    fn freeze(&self, x: f64, lambda: f64) -> Result<Frozen<'_>> {
        let p = (self.build)(x)?;
        let fo = frozen_options(&p, &[Complex64::new(lambda, 0.0)], &self.opts);
        Ok(Box::new(move |x, l| {
            let p = (self.build)(x)?;
            determinant_real(&p, p.mu_map.mu_re(l), &fo)
        }))
    }
}

/// The spectral polynomial `Q_{n+1}(b, λ)` of the QES family.
pub struct QesLocus {
    pub n: usize,
}

impl Evaluator for QesLocus {
    fn freeze(&self, _x: f64, _lambda: f64) -> Result<Frozen<'_>> {
        Ok(Box::new(move |b, l| Ok(qes::spectral_value(self.n, b, l))))
    }
}

/// Rectangle in the `(x, λ)` plane; traces stop when they leave it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x0: f64,
    pub x1: f64,
    pub l0: f64,
    pub l1: f64,
}

impl Bounds {
    pub fn contains(&self, x: f64, l: f64) -> bool {
        x >= self.x0 && x <= self.x1 && l >= self.l0 && l <= self.l1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceOptions {
    pub step: f64,
    pub bounds: Bounds,
    pub max_points: usize,
    /// Start along the opposite tangent.
    pub reverse: bool,
}

impl TraceOptions {
    pub fn new(step: f64, bounds: Bounds) -> Self {
        TraceOptions {
            step,
            bounds,
            max_points: 20_000,
            reverse: false,
        }
    }
}

const SINGULAR_GRADIENT: f64 = 1e-10;
const CORRECTOR_TOL: f64 = 1e-9;
const MAX_CORRECTOR_ITERS: usize = 12;

type P2 = [f64; 2];

fn norm(v: P2) -> f64 {
    v[0].hypot(v[1])
}

fn fd_step(coord: f64, step: f64) -> f64 {
    (1e-5 * (1.0 + coord.abs())).min(0.1 * step)
}

/// Value and central-difference gradient of `f` at `u`.
fn value_grad(f: &Frozen<'_>, u: P2, step: f64) -> Result<(f64, P2)> {
    let (ex, el) = (fd_step(u[0], step), fd_step(u[1], step));
    let pts = [
        u,
        [u[0] + ex, u[1]],
        [u[0] - ex, u[1]],
        [u[0], u[1] + el],
        [u[0], u[1] - el],
    ];
    let v: Vec<f64> = pts.par_iter().map(|p| f(p[0], p[1])).collect::<Result<_>>()?;
    Ok((v[0], [(v[1] - v[2]) / (2.0 * ex), (v[3] - v[4]) / (2.0 * el)]))
}

fn singular(u: P2, g: P2) -> Option<Error> {
    (norm(g) < SINGULAR_GRADIENT).then_some(Error::SingularPoint {
        x: u[0],
        lambda: u[1],
        gradient: norm(g),
    })
}

/// Unit tangent `∇H^⊥`, oriented along `prev` when given.
fn tangent(g: P2, prev: Option<P2>) -> P2 {
    let n = norm(g);
    let t = [-g[1] / n, g[0] / n];
    match prev {
        Some(p) if t[0] * p[0] + t[1] * p[1] < 0.0 => [-t[0], -t[1]],
        _ => t,
    }
}

/// Newton corrector for `H = 0`, `t·(v - u) = h`, from the predictor.
/// Returns the corrected point, its residual and gradient.
fn correct(f: &Frozen<'_>, u: P2, t: P2, h: f64, step: f64) -> Result<(P2, f64, P2)> {
    let mut v = [u[0] + h * t[0], u[1] + h * t[1]];
    for _ in 0..MAX_CORRECTOR_ITERS {
        let (hv, g) = value_grad(f, v, step)?;
        let gn = norm(g);
        if let Some(e) = singular(v, g) {
            return Err(e);
        }
        let dist = hv.abs() / gn;
        let r2 = t[0] * (v[0] - u[0]) + t[1] * (v[1] - u[1]) - h;
        if dist < CORRECTOR_TOL * (1.0 + norm(v)) && r2.abs() < 1e-3 * h {
            return Ok((v, dist, g));
        }
        let det = g[0] * t[1] - g[1] * t[0];
        if det.abs() < 1e-3 * gn {
            break;
        }
        let dx = (-hv * t[1] + r2 * g[1]) / det;
        let dl = (-g[0] * r2 + t[0] * hv) / det;
        v = [v[0] + dx, v[1] + dl];
        // The frozen evaluator is only trusted near the predictor.
        if !(v[0].is_finite() && v[1].is_finite()) || norm([v[0] - u[0], v[1] - u[1]]) > 2.0 * h {
            break;
        }
    }
    Err(Error::CorrectorDiverged { x: u[0], lambda: u[1] })
}

/// Projects `start` onto the zero set along the gradient.
fn settle(f: &Frozen<'_>, start: P2, step: f64) -> Result<(P2, f64, P2)> {
    let mut u = start;
    for _ in 0..20 {
        let (hv, g) = value_grad(f, u, step)?;
        if let Some(e) = singular(u, g) {
            return Err(e);
        }
        let gn2 = g[0] * g[0] + g[1] * g[1];
        let dist = hv.abs() / gn2.sqrt();
        if dist < CORRECTOR_TOL * (1.0 + norm(u)) {
            return Ok((u, dist, g));
        }
        u = [u[0] - hv * g[0] / gn2, u[1] - hv * g[1] / gn2];
        if norm([u[0] - start[0], u[1] - start[1]]) > step {
            break;
        }
    }
    Err(Error::CorrectorDiverged {
        x: start[0],
        lambda: start[1],
    })
}

struct March {
    points: Vec<(P2, f64)>,
    closed: bool,
}

fn march<E: Evaluator + ?Sized>(h: &E, u0: P2, t0: P2, g0: P2, opts: &TraceOptions, budget: usize) -> Result<March> {
    let step = opts.step;
    let mut gu = g0;
    let (hmin, hmax) = (step / 64.0, 1.75 * step);
    let mut u = u0;
    let mut t = t0;
    let mut hs = step;
    let mut easy = 0;
    let mut travelled = 0.0;
    let mut pending = 0.0;
    let mut out = March {
        points: Vec::new(),
        closed: false,
    };
    while out.points.len() < budget {
        let f = h.freeze(u[0], u[1])?;
        let attempt = correct(&f, u, t, hs, step).and_then(|(v, dist, g)| {
            let tn = tangent(g, Some(t));
            let chord = norm([v[0] - u[0], v[1] - u[1]]);
            if tn[0] * t[0] + tn[1] * t[1] < 0.5 || chord > 1.5 * hs {
                Err(Error::CorrectorDiverged { x: u[0], lambda: u[1] })
            } else {
                Ok((v, dist, tn, chord, g))
            }
        });
        let (v, dist, tn, chord, g) = match attempt {
            Ok(x) => x,
            Err(e @ Error::SingularPoint { .. }) => return Err(e),
            Err(_) => {
                hs *= 0.5;
                easy = 0;
                if hs < hmin {
                    return Err(Error::CorrectorDiverged { x: u[0], lambda: u[1] });
                }
                continue;
            }
        };
        // The gradient reverses across a crossing of two branches.
        if g[0] * gu[0] + g[1] * gu[1] < 0.0 {
            let m = [0.5 * (u[0] + v[0]), 0.5 * (u[1] + v[1])];
            let gm = value_grad(&f, m, step)?.1;
            return Err(Error::SingularPoint {
                x: m[0],
                lambda: m[1],
                gradient: norm(gm),
            });
        }
        if !opts.bounds.contains(v[0], v[1]) {
            break;
        }
        travelled += chord;
        pending += chord;
        // Closure: the step passes within step/2 of the start, heading the same way.
        if travelled > 3.0 * step {
            let d = [v[0] - u[0], v[1] - u[1]];
            let w = [u0[0] - u[0], u0[1] - u[1]];
            let along = ((w[0] * d[0] + w[1] * d[1]) / (chord * chord)).clamp(0.0, 1.0);
            let near = norm([w[0] - along * d[0], w[1] - along * d[1]]);
            if near < 0.5 * step.max(hs) && tn[0] * t0[0] + tn[1] * t0[1] > 0.0 {
                out.closed = true;
                break;
            }
        }
        if pending >= 0.25 * step {
            out.points.push((v, dist));
            pending = 0.0;
        }
        u = v;
        t = tn;
        gu = g;
        easy += 1;
        if easy >= 5 {
            hs = (2.0 * hs).min(hmax);
            easy = 0;
        }
    }
    Ok(out)
}

/// Follow the component of `H = 0` through `start` in both directions.
///
/// Pseudo-arclength continuation: the predictor steps along the tangent
/// `∇H^⊥` (central differences), the corrector solves `H = 0` on the line
/// orthogonal to the tangent. Steps halve on corrector failure and double
/// after five easy steps, within `[step/64, 1.75 step]`; points are recorded
/// at least `step/4` apart. Tracing stops at the bounds, after
/// `max_points`, or when the curve returns to within `step/2` of the start
/// with the same heading (`closed`).
pub fn trace<E: Evaluator + ?Sized>(h: &E, start: (f64, f64), opts: &TraceOptions) -> Result<CurveTrace> {
    if !(opts.step > 0.0) || opts.max_points < 2 {
        return Err(Error::InvalidParams(format!(
            "need step > 0 and max_points >= 2 (got {}, {})",
            opts.step, opts.max_points
        )));
    }
    let f = h.freeze(start.0, start.1)?;
    let (u0, d0, g0) = settle(&f, [start.0, start.1], opts.step)?;
    drop(f);
    let mut t0 = tangent(g0, None);
    if opts.reverse {
        t0 = [-t0[0], -t0[1]];
    }
    let fwd = march(h, u0, t0, g0, opts, opts.max_points - 1)?;
    let mut pts: Vec<(P2, f64)> = Vec::new();
    let closed = fwd.closed;
    if !closed {
        let left = opts.max_points - 1 - fwd.points.len();
        let back = march(h, u0, [-t0[0], -t0[1]], g0, opts, left)?;
        pts.extend(back.points.into_iter().rev());
    }
    pts.push((u0, d0));
    pts.extend(fwd.points);
    let mut s = 0.0;
    let mut points = Vec::with_capacity(pts.len());
    for (i, &(u, r)) in pts.iter().enumerate() {
        if i > 0 {
            let p = pts[i - 1].0;
            s += norm([u[0] - p[0], u[1] - p[1]]);
        }
        points.push(TracePoint {
            s,
            x: u[0],
            lambda: u[1],
            residual: r,
        });
    }
    let turning_points = turning_indices(&points, closed);
    Ok(CurveTrace {
        points,
        fixed: Vec::new(),
        branch_label: None,
        closed,
        turning_points,
    })
}

fn turning_indices(p: &[TracePoint], closed: bool) -> Vec<usize> {
    let n = p.len();
    if n < 3 {
        return Vec::new();
    }
    let idx: Vec<usize> = if closed { (0..n).collect() } else { (1..n - 1).collect() };
    idx.into_iter()
        .filter(|&i| {
            let (a, b) = (p[(i + n - 1) % n].x, p[(i + 1) % n].x);
            let x = p[i].x;
            (x - a) * (b - x) < 0.0 || (x > a && x == b) || (x < a && x == b)
        })
        .collect()
}

/// Turning points of a trace (local extrema of `x`), refined on the curve.
///
/// Near a fold `λ` parameterizes the curve; `x(λ)` is found by Newton's
/// method on `H(·, λ) = 0` and the extremum by a root of `∂H/∂λ` along it,
/// to `1e-10 (1 + |λ|)` in `λ` (so `x` to well below `1e-8`). Folds that
/// cannot be bracketed fall back to a parabola through the three points.
pub fn turning_points<E: Evaluator + ?Sized>(trace: &CurveTrace, h: &E) -> Vec<(f64, f64)> {
    let p = &trace.points;
    let n = p.len();
    trace
        .turning_points
        .iter()
        .map(|&i| {
            let (a, b, c) = (p[(i + n - 1) % n], p[i], p[(i + 1) % n]);
            refine_fold(h, a, b, c).unwrap_or_else(|| parabola(a, b, c))
        })
        .collect()
}

fn parabola(a: TracePoint, b: TracePoint, c: TracePoint) -> (f64, f64) {
    // x as a quadratic in λ through the three points.
    let (l0, l1, l2) = (a.lambda, b.lambda, c.lambda);
    let d01 = (b.x - a.x) / (l1 - l0);
    let d12 = (c.x - b.x) / (l2 - l1);
    let q = (d12 - d01) / (l2 - l0);
    if !(q.abs() > 0.0) || !q.is_finite() {
        return (b.x, b.lambda);
    }
    let lin = d01 - q * (l0 + l1);
    let ls = -lin / (2.0 * q);
    let xs = a.x + d01 * (ls - l0) + q * (ls - l0) * (ls - l1);
    (xs, ls)
}

fn refine_fold<E: Evaluator + ?Sized>(h: &E, a: TracePoint, b: TracePoint, c: TracePoint) -> Option<(f64, f64)> {
    let f = h.freeze(b.x, b.lambda).ok()?;
    let scale = (a.lambda - c.lambda).abs().max(1e-12);
    let x_of = |l: f64| -> Result<f64> {
        let mut x = b.x;
        for _ in 0..30 {
            let e = fd_step(x, scale);
            let v = f(x, l)?;
            let d = (f(x + e, l)? - f(x - e, l)?) / (2.0 * e);
            let dx = v / d;
            x -= dx;
            if !x.is_finite() {
                break;
            }
            if dx.abs() < 1e-13 * (1.0 + x.abs()) {
                return Ok(x);
            }
        }
        if x.is_finite() {
            Ok(x)
        } else {
            Err(Error::CorrectorDiverged { x: b.x, lambda: l })
        }
    };
    let g = |l: f64| -> Result<f64> {
        let x = x_of(l)?;
        let e = fd_step(l, scale);
        Ok((f(x, l + e)? - f(x, l - e)?) / (2.0 * e))
    };
    let (la, lc) = (a.lambda, c.lambda);
    let (ga, gc) = (g(la).ok()?, g(lc).ok()?);
    if ga * gc > 0.0 {
        return None;
    }
    let tol = 1e-10 * (1.0 + la.abs().max(lc.abs()));
    let ls = spectrum::bracket_root(g, la.min(lc), la.max(lc), if la < lc { ga } else { gc }, if la < lc { gc } else { ga }, tol).ok()?;
    Some((x_of(ls).ok()?, ls))
}

/// Settings for the family-specific tracers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocusOptions {
    /// Parameter at which cubic branches are seeded.
    pub a_seed: f64,
    pub max_points: usize,
    /// Traces stop when `|λ|` exceeds this.
    pub lambda_bound: f64,
}

impl Default for LocusOptions {
    fn default() -> Self {
        LocusOptions {
            a_seed: 3.0,
            max_points: 20_000,
            lambda_bound: 1e3,
        }
    }
}

/// Radius of the region containing the non-real eigenfunction zeros.
fn zero_box(problem: &Problem, lambda: f64) -> f64 {
    let d = problem.degree() as f64;
    let mu = problem.mu_of_lambda(Complex64::new(lambda, 0.0)).norm();
    let v = &problem.potential;
    let lead = v.leading().norm();
    let mut r = (mu / lead).powf(1.0 / d);
    for k in 1..problem.degree() {
        let ck = v.coeff(k).norm();
        if ck > 0.0 {
            r = r.max((ck / lead).powf(1.0 / (d - k as f64)));
        }
    }
    2.0 * r + 2.0
}

/// Number of non-real zeros of the eigenfunction at a real eigenvalue of a
/// conjugate-symmetric problem.
pub fn nonreal_zero_count(problem: &Problem, lambda: f64, opts: &ShootOptions) -> Result<usize> {
    let r = zero_box(problem, lambda);
    let mut last = None;
    for k in 0..4 {
        let rr = r * (1.0 + 0.037 * k as f64);
        let rect = Rect::new(-rr, rr * (1.0 + 0.013 * k as f64), -rr, rr)?;
        match count_zeros(problem, Complex64::new(lambda, 0.0), &rect, opts) {
            Ok(z) => return Ok(z.n_nonreal),
            Err(e @ Error::BoundaryZero { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// The lowest `count` real eigenvalues found by a real scan from `lo`.
fn lowest_real(problem: &Problem, count: usize, lo: f64, opts: &ShootOptions) -> Result<Vec<f64>> {
    let mut hi = lo + 20.0;
    loop {
        let n = ((hi - lo) * 40.0) as usize;
        let ev = spectrum::real_eigenvalues(problem, lo, hi, n, opts)?;
        if ev.len() >= count {
            return Ok(ev);
        }
        if hi - lo > 1e4 {
            return Err(Error::NonConvergence {
                iterations: 0,
                residual: ev.len() as f64,
            });
        }
        hi = lo + 2.0 * (hi - lo);
    }
}

pub const MAX_WIDENINGS: usize = 6;

/// `Γ_n` of the cubic family `V = z^3 - az`, restricted to `a_range`.
///
/// The seed is the `(2n+1)`-th real eigenvalue at `a = a_seed`: for `a > 0`
/// each `Γ_n` is a double cover of the `a`-axis, carrying eigenvalues
/// `2n+1` and `2n+2`. The label comes from the non-real zero count at the
/// seed.
///
/// When the fold joining the two sheets lies left of `a_range`, the lower
/// end is moved left in steps of 4 (at most [`MAX_WIDENINGS`] times) until
/// the trace is connected, so the result may extend below `a_range.0`.
pub fn trace_gamma_cubic(
    n: usize,
    a_range: (f64, f64),
    step: f64,
    lopts: &LocusOptions,
    opts: &ShootOptions,
) -> Result<CurveTrace> {
    let a0 = lopts.a_seed;
    if !(a_range.0 <= a0 && a0 <= a_range.1) {
        return Err(Error::InvalidParams(format!(
            "seed a = {a0} outside the range [{}, {}]",
            a_range.0, a_range.1
        )));
    }
    let problem = Problem::cubic_pt(a0)?;
    let ev = lowest_real(&problem, 2 * n + 2, -10.0 - a0.abs().powf(1.5), opts)?;
    let (l0, partner) = (ev[2 * n], ev[2 * n + 1]);
    let locus = DeterminantLocus {
        build: Problem::cubic_pt,
        opts: *opts,
    };
    let mut bounds = Bounds {
        x0: a_range.0,
        x1: a_range.1,
        l0: -lopts.lambda_bound,
        l1: lopts.lambda_bound,
    };
    // The fold joining the two sheets can lie left of the range; widen
    // until the trace comes back on the partner eigenvalue.
    let mut t;
    let mut widenings = 0;
    loop {
        t = trace(&locus, (a0, l0), &TraceOptions {
            max_points: lopts.max_points,
            ..TraceOptions::new(step, bounds)
        })?;
        let joined = t
            .lambda_at(a0)
            .iter()
            .any(|&l| (l - partner).abs() < 1e-4 * (1.0 + partner.abs()));
        if joined || widenings == MAX_WIDENINGS {
            break;
        }
        bounds.x0 -= 4.0;
        widenings += 1;
    }
    let z = nonreal_zero_count(&problem, l0, opts)?;
    t.branch_label = Some(BranchLabel::Gamma(z / 2));
    Ok(t)
}

/// Sections of the surfaces `S_0, …, S_{n_max}` of the type-I quartic family
/// by the plane `a = a0`, as curves in `(c, λ)`.
///
/// At `c = 0` the potential is even; `S_n` passes through the `n`-th even
/// eigenvalue and its odd partner. The step is reduced to a sixteenth of
/// that pair's gap, which is tiny for the tunnelling pairs of a deep double
/// well. Traces are labelled by `n`; the eigenfunctions along `S_n` have
/// `2n` non-real zeros, which [`nonreal_zero_count`] confirms where the
/// count is affordable (it slows down sharply as `a0` grows).
pub fn section_sn(
    a0: f64,
    n_max: usize,
    c_range: (f64, f64),
    step: f64,
    lopts: &LocusOptions,
    opts: &ShootOptions,
) -> Result<Vec<CurveTrace>> {
    if !(c_range.0 <= 0.0 && 0.0 <= c_range.1) {
        return Err(Error::InvalidParams(format!(
            "c range [{}, {}] must contain 0",
            c_range.0, c_range.1
        )));
    }
    let problem = Problem::quartic_i(a0, 0.0)?;
    let lo = -(0.25 * a0 * a0 + 10.0);
    let mut hi = lo + 30.0;
    let (even, odd) = loop {
        let grid = ((hi - lo) * 20.0) as usize;
        let (e, o) = spectrum::parity_eigenvalues(&problem, lo, hi, grid, opts)?;
        if e.len() > n_max && o.len() > n_max {
            break (e, o);
        }
        if hi - lo > 1e4 {
            return Err(Error::NonConvergence {
                iterations: 0,
                residual: e.len() as f64,
            });
        }
        hi = lo + 2.0 * (hi - lo);
    };
    let bounds = Bounds {
        x0: c_range.0,
        x1: c_range.1,
        l0: -lopts.lambda_bound,
        l1: lopts.lambda_bound,
    };
    (0..=n_max)
        .into_par_iter()
        .map(|n| {
            let gap = (odd[n] - even[n]).abs();
            let h = step.min(gap / 16.0);
            let locus = DeterminantLocus {
                build: move |c: f64| Problem::quartic_i(a0, c),
                opts: *opts,
            };
            let mut t = trace(&locus, (0.0, even[n]), &TraceOptions {
                max_points: lopts.max_points,
                ..TraceOptions::new(h, bounds)
            })?;
            t.fixed = vec![a0];
            t.branch_label = Some(BranchLabel::Section(n));
            Ok(t)
        })
        .collect()
}

/// Real components of the QES locus `Q_{n+1}(b, λ) = 0` within `b_range`.
///
/// Every component reaches `|b| → ∞`, so seeds are the real roots of
/// `Q_{n+1}` at both ends of the range. Each component is labelled
/// `Γ_{n,m}` with `n - 2m` the number of real roots of the polynomial factor
/// of the eigenfunction at its middle point.
pub fn qes_components(n: usize, b_range: (f64, f64), step: f64, lopts: &LocusOptions) -> Result<Vec<CurveTrace>> {
    if !(b_range.0 < b_range.1) {
        return Err(Error::InvalidParams(format!(
            "empty b range [{}, {}]",
            b_range.0, b_range.1
        )));
    }
    let locus = QesLocus { n };
    let bounds = Bounds {
        x0: b_range.0,
        x1: b_range.1,
        l0: -lopts.lambda_bound,
        l1: lopts.lambda_bound,
    };
    let mut seeds = Vec::new();
    for b in [b_range.1 - 0.5 * step, b_range.0 + 0.5 * step] {
        let roots = qes::spectral_poly(n, b).q.roots(1e-13)?;
        let scale = 1.0 + roots.iter().map(|r| r.norm()).fold(0.0, f64::max);
        let mut real: Vec<f64> = roots
            .iter()
            .filter(|r| r.im.abs() < 1e-7 * scale)
            .map(|r| r.re)
            .collect();
        real.sort_by(f64::total_cmp);
        seeds.extend(real.into_iter().map(|l| (b, l)));
    }
    let mut out: Vec<CurveTrace> = Vec::new();
    for s in seeds {
        let covered = out.iter().any(|t| {
            t.points
                .iter()
                .any(|p| (p.x - s.0).hypot(p.lambda - s.1) < 2.0 * step)
        });
        if covered {
            continue;
        }
        let mut t = trace(&locus, s, &TraceOptions {
            max_points: lopts.max_points,
            ..TraceOptions::new(step, bounds)
        })?;
        let mid = t.points[t.points.len() / 2];
        let real = qes::real_root_count(n, mid.x, mid.lambda)?;
        t.branch_label = Some(BranchLabel::GammaNm(n, n.saturating_sub(real) / 2));
        out.push(t);
    }
    Ok(out)
}

/// Real components of the spectral locus of the type-II family at fixed `j`,
/// within `b_range`, traced on the determinant of `L_j`.
///
/// Seeds are the largest `count` real eigenvalues at the upper end of the
/// range. For a positive integer `J` the non-QES part of `Z_J` is the locus
/// of `L_{-J}`, which has no crossings with the QES curves, so callers pass
/// `j = -J` for it.
pub fn quartic_ii_components(
    j: f64,
    count: usize,
    b_range: (f64, f64),
    step: f64,
    lopts: &LocusOptions,
    opts: &ShootOptions,
) -> Result<Vec<CurveTrace>> {
    if !(b_range.0 < b_range.1) {
        return Err(Error::InvalidParams(format!(
            "empty b range [{}, {}]",
            b_range.0, b_range.1
        )));
    }
    let b1 = b_range.1 - 0.5 * step;
    let problem = Problem::quartic_ii(b1, j)?;
    // The spectrum is bounded above; take the largest eigenvalues.
    let mut hi = spectrum::spectrum_top(b1, j);
    let mut ev: Vec<f64> = Vec::new();
    for _ in 0..50 {
        let lo = hi - 20.0;
        let mut w = spectrum::real_eigenvalues(&problem, lo, hi, 800, opts)?;
        w.sort_by(|a, b| b.total_cmp(a));
        ev.extend(w);
        hi = lo;
        if ev.len() >= count {
            break;
        }
    }
    let locus = DeterminantLocus {
        build: move |b: f64| Problem::quartic_ii(b, j),
        opts: *opts,
    };
    let bounds = Bounds {
        x0: b_range.0,
        x1: b_range.1,
        l0: -lopts.lambda_bound,
        l1: lopts.lambda_bound,
    };
    let mut out: Vec<CurveTrace> = Vec::new();
    for &l in ev.iter().take(count) {
        let covered = out.iter().any(|t| {
            t.points
                .iter()
                .any(|p| (p.x - b1).hypot(p.lambda - l) < 2.0 * step)
        });
        if covered {
            continue;
        }
        let mut t = trace(&locus, (b1, l), &TraceOptions {
            max_points: lopts.max_points,
            ..TraceOptions::new(step, bounds)
        })?;
        t.fixed = vec![j];
        out.push(t);
    }
    Ok(out)
}

/// The component `Γ_{n,m}` of the QES locus within `b_range`.
pub fn trace_gamma_nm(n: usize, m: usize, b_range: (f64, f64), step: f64, lopts: &LocusOptions) -> Result<CurveTrace> {
    if m > n / 2 {
        return Err(Error::InvalidParams(format!("need m <= n/2 (got n = {n}, m = {m})")));
    }
    qes_components(n, b_range, step, lopts)?
        .into_iter()
        .find(|t| t.branch_label == Some(BranchLabel::GammaNm(n, m)))
        .ok_or_else(|| Error::InvalidParams(format!("no component G{n}_{m} in the b range")))
}

/// CSV header for traces with `params` parameter columns.
pub fn csv_header(params: usize) -> String {
    let cols: Vec<String> = (1..=params).map(|k| format!("param{k}")).collect();
    format!("branch,point_index,arclength,{},lambda,residual", cols.join(","))
}

/// Traces as CSV. Each trace is introduced by a comment line recording its
/// label, closure and turning-point indices; unlabelled traces are tagged
/// `curve<k>`.
pub fn to_csv(traces: &[CurveTrace]) -> Result<String> {
    let params = traces.first().map_or(1, |t| t.fixed.len() + 1);
    if traces.iter().any(|t| t.fixed.len() + 1 != params) {
        return Err(Error::InvalidParams("traces have different parameter counts".into()));
    }
    let mut out = String::new();
    writeln!(out, "{}", csv_header(params)).expect("write to string");
    for (k, t) in traces.iter().enumerate() {
        let tag = t.branch_label.map_or(format!("curve{k}"), |l| l.tag());
        let tp: Vec<String> = t.turning_points.iter().map(|i| i.to_string()).collect();
        writeln!(out, "# trace {tag} closed={} turning_points={}", t.closed, tp.join(";")).expect("write to string");
        for (i, p) in t.points.iter().enumerate() {
            let mut row = format!("{tag},{i},{:.16e}", p.s);
            for v in t.fixed.iter().chain(std::iter::once(&p.x)) {
                write!(row, ",{v:.16e}").expect("write to string");
            }
            write!(row, ",{:.16e},{:.16e}", p.lambda, p.residual).expect("write to string");
            writeln!(out, "{row}").expect("write to string");
        }
    }
    Ok(out)
}

/// Parse the output of [`to_csv`]. Other comment lines are skipped.
pub fn from_csv(text: &str) -> Result<Vec<CurveTrace>> {
    let bad = |msg: String| Error::InvalidParams(format!("trace CSV: {msg}"));
    let mut out: Vec<CurveTrace> = Vec::new();
    let mut params = None;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(rest) = line.strip_prefix("# trace ") {
            let mut it = rest.split_whitespace();
            let tag = it.next().ok_or_else(|| bad("missing tag".into()))?;
            let mut t = CurveTrace {
                points: Vec::new(),
                fixed: Vec::new(),
                branch_label: BranchLabel::parse(tag),
                closed: false,
                turning_points: Vec::new(),
            };
            for kv in it {
                match kv.split_once('=') {
                    Some(("closed", v)) => t.closed = v.parse().map_err(|_| bad(format!("closed={v}")))?,
                    Some(("turning_points", "")) => {}
                    Some(("turning_points", v)) => {
                        t.turning_points = v
                            .split(';')
                            .map(|s| s.parse().map_err(|_| bad(format!("turning point {s}"))))
                            .collect::<Result<_>>()?
                    }
                    _ => return Err(bad(format!("unknown field {kv}"))),
                }
            }
            out.push(t);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        if line.starts_with("branch,") {
            let cols = line.split(',').count();
            params = Some(cols.checked_sub(5).filter(|&p| p >= 1).ok_or_else(|| bad("header".into()))?);
            continue;
        }
        let p = params.ok_or_else(|| bad("row before header".into()))?;
        let t = out.last_mut().ok_or_else(|| bad("row before trace line".into()))?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != p + 5 {
            return Err(bad(format!("expected {} columns: {line}", p + 5)));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("number {s}")));
        let vals: Vec<f64> = f[2..].iter().map(|s| num(s)).collect::<Result<_>>()?;
        if t.points.is_empty() {
            t.fixed = vals[1..p].to_vec();
        }
        t.points.push(TracePoint {
            s: vals[0],
            x: vals[p],
            lambda: vals[p + 1],
            residual: vals[p + 2],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(x: f64, l: f64) -> Result<f64> {
        Ok(x * x + l * l - 1.0)
    }

    fn bounds(r: f64) -> Bounds {
        Bounds {
            x0: -r,
            x1: r,
            l0: -r,
            l1: r,
        }
    }

    #[test]
    fn circle_closes_with_length_two_pi() {
        let t = trace(&circle, (1.0, 0.0), &TraceOptions::new(0.01, bounds(2.0))).unwrap();
        assert!(t.closed);
        assert!((t.arclength() - std::f64::consts::TAU).abs() < 1e-3, "{}", t.arclength());
        for w in t.points.windows(2) {
            let d = w[1].s - w[0].s;
            assert!(d >= 0.0025 - 1e-12 && d <= 0.02 + 1e-12, "{d}");
        }
        assert!(t.points.iter().all(|p| p.residual < 1e-8));
    }

    #[test]
    fn circle_turning_points() {
        let t = trace(&circle, (0.0, 1.0), &TraceOptions::new(0.01, bounds(2.0))).unwrap();
        let mut tp = turning_points(&t, &circle);
        tp.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_eq!(tp.len(), 2);
        assert!((tp[0].0 + 1.0).abs() < 1e-8 && tp[0].1.abs() < 1e-6, "{tp:?}");
        assert!((tp[1].0 - 1.0).abs() < 1e-8 && tp[1].1.abs() < 1e-6, "{tp:?}");
    }

    #[test]
    fn crossing_lines_are_singular() {
        let h = |x: f64, l: f64| Ok(x * x - l * l);
        let r = trace(&h, (1.0, 1.0), &TraceOptions::new(0.01, bounds(2.0)));
        match r {
            Err(Error::SingularPoint { x, lambda, .. }) => assert!(x.abs() < 0.05 && lambda.abs() < 0.05),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn open_curve_stops_at_bounds() {
        let h = |x: f64, l: f64| Ok(l - x * x);
        let t = trace(&h, (0.0, 0.0), &TraceOptions::new(0.02, bounds(1.0))).unwrap();
        assert!(!t.closed);
        let (a, b) = (t.points[0], t.points[t.points.len() - 1]);
        assert!(a.x < -0.9 && b.x > 0.9 || a.x > 0.9 && b.x < -0.9);
        assert!(t.turning_points.is_empty());
    }

    #[test]
    fn q2_fold_at_origin() {
        // Q_2 = (λ + b²)² - 4b: the two real branches λ = -b² ± 2√b meet at
        // (0, 0), where ∂Q/∂λ = 0 but ∂Q/∂b = -4, a smooth fold.
        let lopts = LocusOptions::default();
        let comps = qes_components(1, (-1.0, 4.0), 0.01, &lopts).unwrap();
        assert_eq!(comps.len(), 1);
        let t = &comps[0];
        assert_eq!(t.branch_label, Some(BranchLabel::GammaNm(1, 0)));
        let tp = turning_points(t, &QesLocus { n: 1 });
        assert_eq!(tp.len(), 1);
        assert!(tp[0].0.abs() < 1e-8 && tp[0].1.abs() < 1e-4, "{tp:?}");
        for p in &t.points {
            if p.x > 0.5 {
                let r = 2.0 * p.x.sqrt();
                let d = (p.lambda + p.x * p.x - r).abs().min((p.lambda + p.x * p.x + r).abs());
                assert!(d < 1e-7, "{p:?}");
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut t = trace(&circle, (1.0, 0.0), &TraceOptions::new(0.1, bounds(2.0))).unwrap();
        t.branch_label = Some(BranchLabel::Section(2));
        t.fixed = vec![-9.0];
        let u = CurveTrace {
            branch_label: None,
            ..t.clone()
        };
        let text = to_csv(&[t.clone(), u.clone()]).unwrap();
        let back = from_csv(&text).unwrap();
        assert_eq!(back, vec![t, u]);
    }

    #[test]
    fn labels_parse() {
        for l in [BranchLabel::Gamma(3), BranchLabel::GammaNm(4, 2), BranchLabel::Section(0)] {
            assert_eq!(BranchLabel::parse(&l.tag()), Some(l));
        }
        assert_eq!(BranchLabel::parse("curve1"), None);
    }
}
