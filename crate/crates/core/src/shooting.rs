//! Recessive solutions and spectral determinants.
//!
//! A solution decaying along a ray `z = t e^{iθ}` is started at a large
//! radius `R` from its WKB asymptotics and integrated *inward* to the origin.
//! Inward, the recessive solution is the dominant one, so errors in the seed
//! and in each step are damped rather than amplified.
//!
//! The integrator is a one-step Taylor-series method. For
//! `y'' = (V(z) - mu) y` with polynomial `V` the Taylor coefficients obey the
//! exact recurrence
//!
//! ```text
//! (k+1)(k+2) c_{k+2} = sum_{j=0}^{min(k, deg V)} w_j c_{k-j},
//! ```
//!
//! where `w_j` are the Taylor coefficients of `V - mu` at the expansion
//! point. Each step uses [`TAYLOR_ORDER`] terms. The step length is chosen so
//! the last two terms (the error estimate) stay below `rtol` relative to the
//! state, and so that the series never sums terms much larger than the
//! result. States are rescaled by positive factors whenever they leave
//! `[1e-150, 1e150]`; the accumulated log-scale is recorded.


use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oscillator::Problem;
use crate::polyalg::CPoly;

/// Number of Taylor terms per step.
pub const TAYLOR_ORDER: usize = 40;
const GROWTH_CAP: f64 = 30.0;
const RENORM_HI: f64 = 1e150;
const RENORM_LO: f64 = 1e-150;
const MAX_STEPS: usize = 2_000_000;

/// Rules for the automatic seed radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedCriteria {
    pub min_radius: f64,
    /// Lower bound on `|V(R e^{iθ}) - mu|`.
    pub min_magnitude: f64,
    /// Upper bound on the WKB ratio `|V'| / |V - mu|^{3/2}`.
    pub max_wkb_ratio: f64,
}

impl Default for SeedCriteria {
    fn default() -> Self {
        SeedCriteria {
            min_radius: 5.0,
            min_magnitude: 1e4,
            max_wkb_ratio: 1e-3,
        }
    }
}

/// Integrator settings shared by every shooting routine.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShootOptions {
    pub rtol: f64,
    /// Seed radius; chosen by [`auto_radius`] when `None`.
    pub radius: Option<f64>,
    /// Multiplies the automatically chosen radius.
    pub radius_factor: f64,
    pub seed: SeedCriteria,
    /// Multiplies the WKB seed; only the projective class of a shot matters.
    pub seed_scale: Complex64,
    /// Radius on the boundary rays where the determinant shots leave the
    /// rays for the matching point; chosen by [`matching_point`] when `None`.
    #[serde(default)]
    pub match_radius: Option<f64>,
}

impl Default for ShootOptions {
    fn default() -> Self {
        ShootOptions {
            rtol: 1e-10,
            radius: None,
            radius_factor: 1.0,
            seed: SeedCriteria::default(),
            seed_scale: Complex64::new(1.0, 0.0),
            match_radius: None,
        }
    }
}

impl ShootOptions {
    pub fn with_rtol(rtol: f64) -> Self {
        ShootOptions {
            rtol,
            ..Default::default()
        }
    }

    fn check(&self) -> Result<()> {
        if !(1e-14..=1e-6).contains(&self.rtol) {
            return Err(Error::InvalidParams(format!(
                "rtol {} outside [1e-14, 1e-6]",
                self.rtol
            )));
        }
        Ok(())
    }
}

/// Recessive solution at the origin after inward integration along a ray.
///
/// `(y0, dy0)` has unit Euclidean norm; the discarded positive scale is
/// `exp(log_scale)` relative to the seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotResult {
    pub y0: Complex64,
    pub dy0: Complex64,
    pub r_used: f64,
    pub steps: usize,
    pub est_error: f64,
    pub log_scale: f64,
}

/// Unit vector `e^{iθ}`, exact on the axes.
pub fn direction(theta: f64) -> Complex64 {
    let snap = |x: f64| {
        if x.abs() < 1e-15 {
            0.0
        } else if (x.abs() - 1.0).abs() < 1e-15 {
            x.signum()
        } else {
            x
        }
    };
    Complex64::new(snap(theta.cos()), snap(theta.sin()))
}

/// WKB seed `(y, y')` at `z = R e^{iθ}` for the solution decaying outward.
///
/// With `s = sqrt(V - mu)` on the branch `Re(e^{iθ} s) > 0`, the seed is
/// `y = (e^{iθ} s)^{-1/2}`, `y' = -s y`. This differs from the principal
/// `(V - mu)^{-1/4}` only by the constant phase `e^{-iθ/2}`, and is
/// continuous in `mu` and conjugation-covariant in `θ`.
pub fn wkb_seed(v: &CPoly, mu: Complex64, theta: f64, r: f64) -> Result<(Complex64, Complex64)> {
    let dir = direction(theta);
    let q = v.eval(dir * r) - mu;
    if q.norm() == 0.0 {
        return Err(Error::BranchAmbiguous {
            theta,
            radius: r,
            ratio: 0.0,
        });
    }
    let mut s = q.sqrt();
    let proj = (dir * s).re;
    let ratio = proj.abs() / s.norm();
    if ratio < 1e-6 {
        return Err(Error::BranchAmbiguous {
            theta,
            radius: r,
            ratio,
        });
    }
    if proj < 0.0 {
        s = -s;
    }
    let y = (dir * s).sqrt().inv();
    Ok((y, -s * y))
}

/// Smallest `R >= min_radius` (on a 0.25 grid) meeting the seed criteria.
pub fn auto_radius(v: &CPoly, mu: Complex64, theta: f64, crit: &SeedCriteria) -> f64 {
    let dir = direction(theta);
    let dv = v.derivative();
    let mut r = crit.min_radius;
    while r < 1e4 {
        let z = dir * r;
        let q = v.eval(z) - mu;
        let qn = q.norm();
        if qn >= crit.min_magnitude && dv.eval(z).norm() / qn.powf(1.5) <= crit.max_wkb_ratio {
            let s = q.sqrt();
            if (dir * s).re.abs() >= 1e-3 * s.norm() {
                return r;
            }
        }
        r += 0.25;
    }
    r
}

/// State `(y, y')` with a separate positive log-scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionValue {
    pub z: Complex64,
    pub y: Complex64,
    pub dy: Complex64,
    /// The represented values are `(y, dy) * exp(log_scale)`.
    pub log_scale: f64,
}

impl FunctionValue {
    /// `y'/y`, independent of scale.
    pub fn log_derivative(&self) -> Complex64 {
        self.dy / self.y
    }

    /// `ln |y|` including the scale.
    pub fn ln_abs(&self) -> f64 {
        self.y.norm().ln() + self.log_scale
    }
}

/// Taylor coefficients of `p` about `z0`: `p(z0 + u) = sum out[k] u^k`.
pub(crate) fn taylor_shift(p: &CPoly, z0: Complex64, out: &mut Vec<Complex64>) {
    out.clear();
    out.extend_from_slice(p.coeffs());
    let n = out.len();
    for i in 0..n {
        for k in (i..n - 1).rev() {
            let next = out[k + 1];
            out[k] += z0 * next;
        }
    }
}

/// Integration state along straight segments.
pub(crate) struct Integrator<'a> {
    v: &'a CPoly,
    mu: Complex64,
    rtol: f64,
    w: Vec<Complex64>,
    c: Vec<Complex64>,
    pub steps: usize,
    pub est_error: f64,
}

impl<'a> Integrator<'a> {
    pub fn new(v: &'a CPoly, mu: Complex64, rtol: f64) -> Self {
        Integrator {
            v,
            mu,
            rtol,
            w: Vec::with_capacity(8),
            c: vec![Complex64::new(0.0, 0.0); TAYLOR_ORDER + 1],
            steps: 0,
            est_error: 0.0,
        }
    }

    /// Advance `state` from `state.z` to `target` along the chord.
    pub fn advance(&mut self, state: &mut FunctionValue, target: Complex64) -> Result<()> {
        let total = (target - state.z).norm();
        if total == 0.0 {
            return Ok(());
        }
        let dir = (target - state.z) / total;
        let start = state.z;
        let mut done = 0.0;
        while done < total {
            if self.steps >= MAX_STEPS {
                return Err(Error::StepFailure {
                    t: done,
                    h: 0.0,
                });
            }
            let z0 = start + dir * done;
            let remaining = total - done;
            if remaining <= 1e-13 * (1.0 + z0.norm()) {
                state.z = target;
                break;
            }
            let (h, last) = self.step(state, z0, dir, remaining)?;
            if last {
                done = total;
                state.z = target;
            } else {
                done += h;
                state.z = start + dir * done;
            }
            self.steps += 1;
            let norm = state.y.norm() + state.dy.norm();
            if !(RENORM_LO..=RENORM_HI).contains(&norm) {
                if norm == 0.0 || !norm.is_finite() {
                    return Err(Error::StepFailure { t: done, h });
                }
                state.y /= norm;
                state.dy /= norm;
                state.log_scale += norm.ln();
            }
        }
        Ok(())
    }

    /// One Taylor step from `z0` along unit direction `dir`, at most `max_h`.
    fn step(
        &mut self,
        state: &mut FunctionValue,
        z0: Complex64,
        dir: Complex64,
        max_h: f64,
    ) -> Result<(f64, bool)> {
        taylor_shift(self.v, z0, &mut self.w);
        if self.w.is_empty() {
            self.w.push(Complex64::new(0.0, 0.0));
        }
        self.w[0] -= self.mu;
        let n = TAYLOR_ORDER;
        let sigma = self.w[0].norm().sqrt().max(1.0);
        // Work on the state scaled to unit size; the scale is restored below.
        let scale = state.y.norm() + state.dy.norm() / sigma;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::StepFailure { t: z0.norm(), h: 0.0 });
        }
        let c = &mut self.c;
        c[0] = state.y / scale;
        c[1] = state.dy / scale;
        for k in 0..=n - 2 {
            let jmax = k.min(self.w.len() - 1);
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..=jmax {
                acc += self.w[j] * c[k - j];
            }
            c[k + 2] = acc / ((k + 1) * (k + 2)) as f64;
        }
        let base = 1.0;
        let mut h = max_h;
        for (k, ck) in c.iter().enumerate().skip(2) {
            let m = ck.norm();
            if m > 0.0 {
                let limit = if k >= n - 1 {
                    (0.5 * self.rtol * base / m).powf(1.0 / k as f64)
                        .min((GROWTH_CAP * base / m).powf(1.0 / k as f64))
                } else {
                    (GROWTH_CAP * base / m).powf(1.0 / k as f64)
                };
                h = h.min(limit);
            }
        }
        if !(h > 1e-14 * (1.0 + z0.norm())) {
            return Err(Error::StepFailure {
                t: z0.norm(),
                h,
            });
        }
        let last = h >= max_h;
        let hc = dir * h;
        // Horner on the truncated series and its derivative.
        let mut y = Complex64::new(0.0, 0.0);
        let mut dy = Complex64::new(0.0, 0.0);
        for k in (0..=n).rev() {
            y = y * hc + c[k];
            if k >= 1 {
                dy = dy * hc + c[k] * k as f64;
            }
        }
        let tail = (c[n - 1] * hc.powu((n - 1) as u32)).norm() + (c[n] * hc.powu(n as u32)).norm();
        let new_base = y.norm() + dy.norm() / sigma;
        self.est_error += tail / new_base.max(f64::MIN_POSITIVE);
        state.y = y * scale;
        state.dy = dy * scale;
        Ok((h, last))
    }
}

fn seed_radius(problem: &Problem, mu: Complex64, theta: f64, opts: &ShootOptions) -> f64 {
    match opts.radius {
        Some(r) => r,
        None => auto_radius(&problem.potential, mu, theta, &opts.seed) * opts.radius_factor,
    }
}

/// Start a ray integration: the seeded state at radius `R`.
fn seeded_state(
    problem: &Problem,
    mu: Complex64,
    theta: f64,
    opts: &ShootOptions,
) -> Result<(FunctionValue, f64)> {
    opts.check()?;
    let r = seed_radius(problem, mu, theta, opts);
    let (y, dy) = wkb_seed(&problem.potential, mu, theta, r)?;
    Ok((
        FunctionValue {
            z: direction(theta) * r,
            y: y * opts.seed_scale,
            dy: dy * opts.seed_scale,
            log_scale: 0.0,
        },
        r,
    ))
}

fn normalize(state: &mut FunctionValue) {
    let n = (state.y.norm_sqr() + state.dy.norm_sqr()).sqrt();
    state.y /= n;
    state.dy /= n;
    state.log_scale += n.ln();
}

/// Integrate the solution recessive along `theta` from its seed to `z = 0`.
pub fn integrate_ray(
    problem: &Problem,
    mu: Complex64,
    theta: f64,
    opts: &ShootOptions,
) -> Result<ShotResult> {
    let (mut state, r) = seeded_state(problem, mu, theta, opts)?;
    let mut integ = Integrator::new(&problem.potential, mu, opts.rtol);
    integ.advance(&mut state, Complex64::new(0.0, 0.0))?;
    normalize(&mut state);
    Ok(ShotResult {
        y0: state.y,
        dy0: state.dy,
        r_used: r,
        steps: integ.steps,
        est_error: integ.est_error,
        log_scale: state.log_scale,
    })
}

/// Ray integration that also records the state at the given radii
/// (descending order is not required).
pub(crate) fn integrate_ray_with_stops(
    problem: &Problem,
    mu: Complex64,
    theta: f64,
    opts: &ShootOptions,
    radii: &[f64],
) -> Result<(ShotResult, Vec<FunctionValue>)> {
    let (mut state, r) = seeded_state(problem, mu, theta, opts)?;
    let dir = direction(theta);
    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by(|&a, &b| radii[b].total_cmp(&radii[a]));
    let mut integ = Integrator::new(&problem.potential, mu, opts.rtol);
    let mut out = vec![state; radii.len()];
    for i in order {
        let t = radii[i].clamp(0.0, r);
        integ.advance(&mut state, dir * t)?;
        out[i] = state;
    }
    integ.advance(&mut state, Complex64::new(0.0, 0.0))?;
    normalize(&mut state);
    // Express checkpoints relative to the normalized origin state.
    let shift = state.log_scale;
    for v in &mut out {
        v.log_scale -= shift;
    }
    state.log_scale = shift;
    Ok((
        ShotResult {
            y0: state.y,
            dy0: state.dy,
            r_used: r,
            steps: integ.steps,
            est_error: integ.est_error,
            log_scale: shift,
        },
        out,
    ))
}

/// Point where the determinant shots are compared.
///
/// For rays on the real axis (or any non-mirrored pair) this is the origin.
///
/// Near the origin both recessive solutions can be dominated by the same
/// exponential, so their Wronskian cancels catastrophically there. For
/// mirrored rays `θ_b = -θ_a` the comparison is moved to a real point `z_m`,
/// where `y_b = conj(y_a)`:
///
/// * Rays off the imaginary axis: each shot runs down its ray to radius
///   `r_m` and then vertically to `z_m = r_m cos θ_a`. In the inner region
///   the recessive solution behaves like `C e^{-sz} + D e^{sz}`; its norm
///   along the real axis is smallest where both terms balance, and that is
///   where the normalized Wronskian is best conditioned. `r_m` is chosen on
///   a grid of 40 radii by minimizing the norm of the ray-A solution at the
///   foot of the vertical leg.
/// * Rays on the imaginary axis: each shot runs down its ray to radius
///   `|x_m|` and then along the chord to `z_m = x_m`. Near an eigenvalue the
///   ray-A solution is close to the eigenfunction, and the comparison is
///   best conditioned where that is largest, since both shots then
///   integrate in growing directions. `x_m` is chosen on a grid of 81
///   points in `[-X, X]`, `X = (|mu| / |lead|)^{1/d} + 1`, by maximizing the
///   norm of the ray-A solution. The signed `x_m` is reported as the radius.
///
/// Moving the matching point only rescales the normalized determinant by a
/// positive factor. Returns `(r_m, z_m)`.
pub fn matching_point(problem: &Problem, mu: Complex64, opts: &ShootOptions) -> Result<(f64, Complex64)> {
    matched_shot(problem, mu, opts).map(|(r, z, _)| (r, z))
}

fn on_axis(problem: &Problem) -> bool {
    direction(problem.theta_a).re == 0.0
}

fn foot(problem: &Problem, r_m: f64) -> Complex64 {
    let x = if on_axis(problem) { r_m } else { r_m * direction(problem.theta_a).re };
    Complex64::new(if x.abs() < 1e-15 { 0.0 } else { x }, 0.0)
}

fn uses_matching(problem: &Problem) -> bool {
    problem.rays_are_mirror() && !problem.rays_are_real()
}

/// Ray-A shot at the matching point, with the matching radius.
fn matched_shot(
    problem: &Problem,
    mu: Complex64,
    opts: &ShootOptions,
) -> Result<(f64, Complex64, FunctionValue)> {
    let zero = Complex64::new(0.0, 0.0);
    if !uses_matching(problem) {
        let st = shoot_to(problem, mu, problem.theta_a, 0.0, zero, opts)?;
        return Ok((0.0, zero, st));
    }
    if let Some(r_m) = opts.match_radius {
        let z_m = foot(problem, r_m);
        let st = shoot_to(problem, mu, problem.theta_a, r_m, z_m, opts)?;
        return Ok((r_m, z_m, st));
    }
    let d = problem.degree().max(1) as f64;
    let lead = problem.potential.leading().norm();
    let r_seed = seed_radius(problem, mu, problem.theta_a, opts);
    let axis = on_axis(problem);
    let radii: Vec<f64> = if axis {
        let x = ((mu.norm() / lead).powf(1.0 / d) + 1.0).min(r_seed);
        (0..81).map(|k| x * (k as f64 - 40.0) / 40.0).collect()
    } else {
        let r_max = (2.0 * (mu.norm() / lead).powf(1.0 / d) + 2.0).min(r_seed);
        (0..40).map(|k| r_max * k as f64 / 39.0).collect()
    };
    let stop_radii: Vec<f64> = radii.iter().map(|r| r.abs()).collect();
    let (_, stops) = integrate_ray_with_stops(problem, mu, problem.theta_a, opts, &stop_radii)?;
    let mut best: Option<(f64, f64, FunctionValue)> = None;
    for (&r, start) in radii.iter().zip(&stops) {
        let mut st = *start;
        Integrator::new(&problem.potential, mu, opts.rtol).advance(&mut st, foot(problem, r))?;
        let size = 0.5 * (st.y.norm_sqr() + st.dy.norm_sqr()).ln() + st.log_scale;
        if best.as_ref().is_none_or(|b| size < b.1) {
            best = Some((r, size, st));
        }
    }
    let (r_m, _, mut st) = best.expect("nonempty grid");
    normalize(&mut st);
    Ok((r_m, foot(problem, r_m), st))
}

/// Normalized recessive state at `z_m`, reached along the ray `theta` down
/// to radius `|r_m|` and then along the chord.
fn shoot_to(
    problem: &Problem,
    mu: Complex64,
    theta: f64,
    r_m: f64,
    z_m: Complex64,
    opts: &ShootOptions,
) -> Result<FunctionValue> {
    let (mut state, r) = seeded_state(problem, mu, theta, opts)?;
    let mut integ = Integrator::new(&problem.potential, mu, opts.rtol);
    integ.advance(&mut state, direction(theta) * r_m.abs().min(r))?;
    integ.advance(&mut state, z_m)?;
    normalize(&mut state);
    Ok(state)
}

/// Wronskian of the two recessive solutions at the matching point (the
/// origin unless the rays are mirrored, see [`matching_point`]).
///
/// Both shots are normalized to unit norm there, so `|F| <= 1`, and the
/// zero set with multiplicities is that of the spectral determinant. The
/// phase of `F` differs from an analytic normalization only by a smooth
/// positive factor, so winding numbers are preserved.
pub fn determinant(problem: &Problem, mu: Complex64, opts: &ShootOptions) -> Result<Complex64> {
    let (r_m, z_m, a) = matched_shot(problem, mu, opts)?;
    let b = shoot_to(problem, mu, problem.theta_b, r_m, z_m, opts)?;
    Ok(a.y * b.dy - a.dy * b.y)
}

/// Real-valued determinant for conjugate-symmetric problems and real `mu`.
///
/// For mirrored rays `theta_b = -theta_a` the reflected solution
/// `y_b(z) = conj(y_a(conj z))` is recessive along `theta_b`, so one
/// integration suffices: at the real matching point `F = 2i Im(y_a conj(y_a'))`
/// and `Im(y_a conj(y_a'))` is returned. For rays on the real axis both
/// shots are real and `F` itself is returned. The result is invariant under
/// complex rescaling of the seed up to a positive factor.
pub fn determinant_real(problem: &Problem, mu: f64, opts: &ShootOptions) -> Result<f64> {
    if !problem.conjugate_symmetric {
        return Err(Error::NotSymmetric);
    }
    let m = Complex64::new(mu, 0.0);
    if problem.rays_are_mirror() && !problem.rays_are_real() {
        let (_, _, a) = matched_shot(problem, m, opts)?;
        Ok((a.y * a.dy.conj()).im)
    } else if problem.rays_are_real() {
        let a = integrate_ray(problem, m, problem.theta_a, opts)?;
        let b = integrate_ray(problem, m, problem.theta_b, opts)?;
        Ok((a.y0 * b.dy0 - a.dy0 * b.y0).re)
    } else {
        Err(Error::NotSymmetric)
    }
}

/// Values of the eigenfunction at eigenvalue `mu` at arbitrary points.
///
/// The eigenfunction is recessive only in the Stokes sectors of the two
/// boundary rays, where it is smallest along the sector's central ray.
/// Points in those sectors are reached by integrating inward along the
/// central ray from a WKB seed down to radius `|z|` and then along the
/// chord to the point; that solution is rescaled to match the ray-A data at
/// the origin. Every other point is reached by integrating straight out
/// from the origin, along which the eigenfunction grows or oscillates.
/// Both routes move in stable directions. All values share the scale where
/// `(y(0), y'(0))` from ray `A` has unit norm.
pub fn eigenfunction_values(
    problem: &Problem,
    mu: Complex64,
    points: &[Complex64],
    opts: &ShootOptions,
) -> Result<Vec<FunctionValue>> {
    use rayon::prelude::*;
    let a = integrate_ray(problem, mu, problem.theta_a, opts)?;
    let d = problem.degree();
    let m = (d + 2) as f64;
    let alpha = problem.potential.leading().arg();
    let tau = std::f64::consts::TAU;
    let sector = |theta: f64| ((m * theta + alpha) / tau).round();
    let centre = |j: f64| (tau * j - alpha) / m;
    let origin = FunctionValue {
        z: Complex64::new(0.0, 0.0),
        y: a.y0,
        dy: a.dy0,
        log_scale: 0.0,
    };
    let mut out = vec![origin; points.len()];
    let mut rest: Vec<usize> = (0..points.len()).collect();
    for theta in [problem.theta_a, problem.theta_b] {
        let j = sector(theta);
        let jm = (j as i64).rem_euclid(d as i64 + 2);
        let (inside, others): (Vec<usize>, Vec<usize>) = rest.into_iter().partition(|&i| {
            let p = points[i];
            p.norm() > 0.0 && (sector(p.arg()) as i64).rem_euclid(d as i64 + 2) == jm
        });
        rest = others;
        if inside.is_empty() {
            continue;
        }
        let radii: Vec<f64> = inside.iter().map(|&i| points[i].norm()).collect();
        let vals = recessive_sector_values(problem, mu, centre(j), &origin, &radii, opts);
        match vals {
            Ok(stops) => {
                let vals: Vec<Result<FunctionValue>> = inside
                    .par_iter()
                    .zip(stops.par_iter())
                    .map(|(&i, start)| {
                        let mut st = *start;
                        Integrator::new(&problem.potential, mu, opts.rtol).advance(&mut st, points[i])?;
                        Ok(st)
                    })
                    .collect();
                for (&i, v) in inside.iter().zip(vals) {
                    out[i] = v?;
                }
            }
            Err(_) => rest.extend(inside),
        }
    }
    let vals: Vec<Result<FunctionValue>> = rest
        .par_iter()
        .map(|&i| {
            let mut st = origin;
            Integrator::new(&problem.potential, mu, opts.rtol).advance(&mut st, points[i])?;
            Ok(st)
        })
        .collect();
    for (&i, v) in rest.iter().zip(vals) {
        out[i] = v?;
    }
    Ok(out)
}

/// States of the solution recessive along `theta` at the given radii on that
/// ray, scaled so that its data at the origin best match `origin`.
fn recessive_sector_values(
    problem: &Problem,
    mu: Complex64,
    theta: f64,
    origin: &FunctionValue,
    radii: &[f64],
    opts: &ShootOptions,
) -> Result<Vec<FunctionValue>> {
    let far = radii.iter().fold(0.0f64, |a, &b| a.max(b));
    let r = auto_radius(&problem.potential, mu, theta, &opts.seed)
        .max(opts.radius.unwrap_or(0.0))
        .max(1.1 * far + 1.0);
    let ray = ShootOptions {
        radius: Some(r),
        ..*opts
    };
    let (shot, mut stops) = integrate_ray_with_stops(problem, mu, theta, &ray, radii)?;
    // origin ≈ c · shot at z = 0; stops are relative to the normalized shot.
    let den = shot.y0.norm_sqr() + shot.dy0.norm_sqr();
    let c = (origin.y * shot.y0.conj() + origin.dy * shot.dy0.conj()) / den;
    for v in &mut stops {
        v.y *= c;
        v.dy *= c;
        v.log_scale += origin.log_scale;
    }
    Ok(stops)
}

/// Solution with prescribed data at the origin, evaluated at `points` by
/// straight integration from `0`.
pub fn solution_from_origin(
    problem: &Problem,
    mu: Complex64,
    y0: Complex64,
    dy0: Complex64,
    points: &[Complex64],
    rtol: f64,
) -> Result<Vec<FunctionValue>> {
    points
        .iter()
        .map(|&p| {
            let mut st = FunctionValue {
                z: Complex64::new(0.0, 0.0),
                y: y0,
                dy: dy0,
                log_scale: 0.0,
            };
            Integrator::new(&problem.potential, mu, rtol).advance(&mut st, p)?;
            Ok(st)
        })
        .collect()
}

/// Finite-difference Schwarzian of `f = y1 / y0` against `-2 (V - mu)`.
///
/// `y0` is the eigenfunction (data from the ray-A shot at the origin), `y1`
/// an independent solution with data `(conj y0'(0), -conj y0(0))`. The
/// derivatives use central differences of step `h` on real points around
/// each `x`, so the error is `O(h^2)`. Returns the largest absolute
/// deviation over `xs`.
pub fn schwarzian_deviation(
    problem: &Problem,
    mu: Complex64,
    xs: &[f64],
    h: f64,
    opts: &ShootOptions,
) -> Result<f64> {
    let shot = integrate_ray(problem, mu, problem.theta_a, opts)?;
    let (a0, da0) = (shot.y0, shot.dy0);
    let (b0, db0) = (shot.dy0.conj(), -shot.y0.conj());
    let mut worst = 0.0f64;
    for &x in xs {
        let pts: Vec<Complex64> = (-2..=2)
            .map(|k| Complex64::new(x + k as f64 * h, 0.0))
            .collect();
        let ya = solution_from_origin(problem, mu, a0, da0, &pts, opts.rtol)?;
        let yb = solution_from_origin(problem, mu, b0, db0, &pts, opts.rtol)?;
        let f: Vec<Complex64> = ya
            .iter()
            .zip(&yb)
            .map(|(p, q)| q.y / p.y * (q.log_scale - p.log_scale).exp())
            .collect();
        let d1 = (f[3] - f[1]) / (2.0 * h);
        let d2 = (f[3] - 2.0 * f[2] + f[1]) / (h * h);
        let d3 = (f[4] - 2.0 * f[3] + 2.0 * f[1] - f[0]) / (2.0 * h * h * h);
        let schwarzian = d3 / d1 - 1.5 * (d2 / d1) * (d2 / d1);
        let expected = -2.0 * (problem.potential.eval(pts[2]) - mu);
        worst = worst.max((schwarzian - expected).norm());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn harmonic() -> Problem {
        Problem::custom(CPoly::from_real(&[0.0, 0.0, 1.0]), 0.0, PI).unwrap()
    }

    #[test]
    fn taylor_shift_matches_evaluation() {
        let p = CPoly::from_real(&[1.0, -2.0, 0.5, 3.0]);
        let z0 = c(0.3, -1.1);
        let mut w = Vec::new();
        taylor_shift(&p, z0, &mut w);
        let u = c(0.2, 0.1);
        let direct = p.eval(z0 + u);
        let series: Complex64 = w.iter().enumerate().map(|(k, &a)| a * u.powu(k as u32)).sum();
        assert!((direct - series).norm() < 1e-13);
    }

    #[test]
    fn seed_harmonic() {
        let (y, dy) = wkb_seed(&CPoly::from_real(&[0.0, 0.0, 1.0]), c(0.0, 0.0), 0.0, 10.0).unwrap();
        assert!((y - c(10f64.powf(-0.5), 0.0)).norm() < 1e-15);
        assert!((dy + 10.0 * y).norm() < 1e-14);
    }

    #[test]
    fn seed_decays_outward() {
        // Cubic along +i: exp(-∫ s dz) must decrease with t.
        let v = CPoly::from_real(&[0.0, 0.0, 0.0, 1.0]);
        let (y, dy) = wkb_seed(&v, c(0.0, 0.0), FRAC_PI_2, 10.0).unwrap();
        let s = -dy / y;
        assert!((c(0.0, 1.0) * s).re > 0.0);
        // Integrate the WKB phase numerically from t = 10 to 11.
        let mut acc = c(0.0, 0.0);
        let n = 1000;
        for k in 0..n {
            let t = 10.0 + (k as f64 + 0.5) / n as f64;
            let z = c(0.0, t);
            let mut sk = v.eval(z).sqrt();
            if (c(0.0, 1.0) * sk).re < 0.0 {
                sk = -sk;
            }
            acc += sk * c(0.0, 1.0) / n as f64;
        }
        assert!((-acc).exp().norm() < 1.0);
    }

    #[test]
    fn seed_type_one() {
        // V = -z^4 on the imaginary axis: s = -i t^2, decay rate t^2.
        let v = CPoly::from_real(&[0.0, 0.0, 0.0, 0.0, -1.0]);
        let (y, dy) = wkb_seed(&v, c(0.0, 0.0), FRAC_PI_2, 6.0).unwrap();
        let s = -dy / y;
        assert!((c(0.0, 1.0) * s - c(36.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn seed_branch_ambiguous() {
        // On the anti-Stokes line of z^2 the decay rate vanishes.
        let v = CPoly::from_real(&[0.0, 0.0, 1.0]);
        assert!(matches!(
            wkb_seed(&v, c(0.0, 0.0), PI / 4.0, 10.0),
            Err(Error::BranchAmbiguous { .. })
        ));
    }

    #[test]
    fn harmonic_ground_state_parity() {
        let p = harmonic();
        let opts = ShootOptions::default();
        for theta in [0.0, PI] {
            let s = integrate_ray(&p, c(1.0, 0.0), theta, &opts).unwrap();
            assert!((s.dy0 / s.y0).norm() < 1e-6, "{theta}: {}", s.dy0 / s.y0);
        }
    }

    #[test]
    fn quartic_qes_ratio() {
        // L_2 at b = 1: eigenfunctions (z + 1) e^h at λ = 1 and (z - 1) e^h at
        // λ = -3, with h = z^3/3 - z; y'/y at 0 is p'/p + h' = 0 and -2.
        let p = Problem::quartic_ii(1.0, 2.0).unwrap();
        let opts = ShootOptions::default();
        for (mu, ratio) in [(1.0, 0.0), (-3.0, -2.0)] {
            let s = integrate_ray(&p, c(mu, 0.0), FRAC_PI_3, &opts).unwrap();
            assert!((s.dy0 / s.y0 - c(ratio, 0.0)).norm() < 1e-5, "mu={mu}");
        }
    }

    #[test]
    fn determinant_zeros() {
        let h = harmonic();
        let opts = ShootOptions::default();
        assert!(determinant(&h, c(1.0, 0.0), &opts).unwrap().norm() < 1e-6);
        assert!(determinant(&h, c(2.0, 0.0), &opts).unwrap().norm() > 1e-2);
        let q = Problem::quartic_ii(1.0, 2.0).unwrap();
        assert!(determinant(&q, c(1.0, 0.0), &opts).unwrap().norm() < 1e-6);
    }

    #[test]
    fn real_determinant_brackets() {
        let h = harmonic();
        let opts = ShootOptions::default();
        let lo = determinant_real(&h, 0.5, &opts).unwrap();
        let hi = determinant_real(&h, 1.5, &opts).unwrap();
        assert!(lo * hi < 0.0);
        let q = Problem::quartic_ii(1.0, 2.0).unwrap();
        for mu in [1.0, -3.0] {
            assert!(determinant_real(&q, mu, &opts).unwrap().abs() < 1e-7);
        }
        let skew = Problem::custom(CPoly::from_real(&[0.0, 0.0, 0.0, 1.0]), FRAC_PI_2, 7.0 * PI / 5.0 + 0.1);
        assert_eq!(
            determinant_real(&skew.unwrap(), 1.0, &opts),
            Err(Error::NotSymmetric)
        );
    }

    #[test]
    fn mirrored_determinant_consistent() {
        // determinant() from two shots equals 2i * determinant_real().
        let p = Problem::cubic_pt(1.5).unwrap();
        let opts = ShootOptions::default();
        for mu in [-3.0, -0.7, 2.0] {
            let full = determinant(&p, c(mu, 0.0), &opts).unwrap();
            let half = determinant_real(&p, mu, &opts).unwrap();
            let expected = c(0.0, 2.0 * half);
            assert!((full - expected).norm() < 1e-6 * full.norm().max(1e-3), "{full} {expected}");
        }
    }

    #[test]
    fn seed_scale_invariance() {
        let p = Problem::cubic_pt(0.0).unwrap();
        let base = ShootOptions::default();
        let scaled = ShootOptions {
            seed_scale: c(-3.0, 7.0),
            ..base
        };
        for mu in [-4.0, -1.0, 0.5] {
            let a = determinant_real(&p, mu, &base).unwrap();
            let b = determinant_real(&p, mu, &scaled).unwrap();
            assert!((a - b).abs() < 1e-9, "{a} {b}");
        }
    }

    #[test]
    fn harmonic_eigenfunction_values() {
        let h = harmonic();
        let opts = ShootOptions::default();
        let pts: Vec<Complex64> = (-8..=8).map(|k| c(0.25 * k as f64, 0.0)).collect();
        let vals = eigenfunction_values(&h, c(1.0, 0.0), &pts, &opts).unwrap();
        let reference = vals[8].y * vals[8].log_scale.exp();
        for (p, v) in pts.iter().zip(&vals) {
            let expect = reference * (-p.re * p.re / 2.0).exp();
            let got = v.y * v.log_scale.exp();
            assert!((got - expect).norm() < 1e-6 * reference.norm(), "{p}: {got} vs {expect}");
        }
        let odd = eigenfunction_values(&h, c(3.0, 0.0), &[c(0.0, 0.0), c(1.0, 0.0)], &opts).unwrap();
        assert!(odd[0].y.norm() * odd[0].log_scale.exp() < 1e-7 * odd[1].y.norm() * odd[1].log_scale.exp());
    }

    #[test]
    fn qes_eigenfunction_zero() {
        let q = Problem::quartic_ii(1.0, 2.0).unwrap();
        let opts = ShootOptions::default();
        let v = eigenfunction_values(&q, c(1.0, 0.0), &[c(-1.0, 0.0), c(1.0, 0.0)], &opts).unwrap();
        let at_zero = v[0].y.norm() * v[0].log_scale.exp();
        let elsewhere = v[1].y.norm() * v[1].log_scale.exp();
        assert!(at_zero < 1e-7 * elsewhere, "{at_zero} {elsewhere}");
        let v = eigenfunction_values(&q, c(-3.0, 0.0), &[c(1.0, 0.0)], &opts).unwrap();
        assert!(v[0].y.norm() * v[0].log_scale.exp() < 1e-7);
    }

    #[test]
    fn schwarzian_second_order() {
        let q = Problem::quartic_ii(1.0, 2.0).unwrap();
        let opts = ShootOptions::default();
        let xs = [-0.4, 0.1, 0.35];
        let e1 = schwarzian_deviation(&q, c(1.0, 0.0), &xs, 0.02, &opts).unwrap();
        let e2 = schwarzian_deviation(&q, c(1.0, 0.0), &xs, 0.01, &opts).unwrap();
        let rate = (e1 / e2).log2();
        assert!(e2 < 5e-2 && (rate - 2.0).abs() < 0.3, "{e1} {e2} rate {rate}");
    }
}
