//! Potentials, Stokes sectors and boundary rays.
//!
//! Every problem is stored in the internal form `y'' = (V(z) - mu) y` with the
//! eigenfunction decaying along two rays `theta_a`, `theta_b`. The named
//! families keep the sign convention of their defining equation through a
//! [`MuMap`], so user-facing eigenvalues are always reported in that
//! convention:
//!
//! | family | equation | `V` | `mu` | rays |
//! |---|---|---|---|---|
//! | `CubicPT(a)` | `-y'' + (z^3 - a z) y = -λ y` | `z^3 - a z` | `-λ` | `±π/2` |
//! | `QuarticI(a, c)` | `-y'' + (-z^4 + a z^2 + c z) y = -λ y` | `-z^4 + a z^2 + c z` | `-λ` | `±π/2` |
//! | `QuarticII(b, J)` | `-y'' + (z^4 - 2b z^2 + 2J z) y = λ y` | `z^4 - 2b z^2 + 2J z` | `λ` | `±π/3` |

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polyalg::CPoly;

/// One of the `d + 2` Stokes sectors of `z^d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StokesSector {
    pub d: usize,
    pub j: usize,
    pub center_angle: f64,
    pub half_width: f64,
}

impl StokesSector {
    /// Whether the open sector contains the direction `theta`.
    pub fn contains(&self, theta: f64) -> bool {
        angle_distance(theta, self.center_angle) < self.half_width
    }

    pub fn is_adjacent(&self, other: &StokesSector) -> bool {
        let m = self.d + 2;
        let diff = (self.j + m - other.j) % m;
        diff == 1 || diff == m - 1
    }
}

/// Stokes sectors `S_j = {|arg z - 2πj/(d+2)| < π/(d+2)}`, `j = 0..=d+1`.
pub fn stokes_sectors(d: usize) -> Vec<StokesSector> {
    let m = d + 2;
    (0..m)
        .map(|j| StokesSector {
            d,
            j,
            center_angle: TAU * j as f64 / m as f64,
            half_width: PI / m as f64,
        })
        .collect()
}

/// Unsigned angular distance on the circle, in `[0, π]`.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Index of the Stokes sector of `leading * z^d` containing direction
/// `theta`, or `None` if `theta` lies on a sector boundary (within `1e-9`).
///
/// For a leading coefficient with phase `α` the sector centres are
/// `(2πj - α)/(d+2)`; for monic potentials this reduces to [`stokes_sectors`].
pub fn sector_index(theta: f64, d: usize, leading: Complex64) -> Option<usize> {
    let m = (d + 2) as f64;
    let alpha = leading.arg();
    let x = (m * theta + alpha) / TAU;
    let j = x.round();
    let center = (TAU * j - alpha) / m;
    let half = PI / m;
    if half - angle_distance(theta, center) < 1e-9 {
        return None;
    }
    Some((j as i64).rem_euclid(d as i64 + 2) as usize)
}

/// Affine map between the family's eigenvalue `λ` and the internal `mu`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuMap {
    pub sign: f64,
    pub shift: f64,
}

impl MuMap {
    pub const IDENTITY: MuMap = MuMap {
        sign: 1.0,
        shift: 0.0,
    };
    pub const NEGATE: MuMap = MuMap {
        sign: -1.0,
        shift: 0.0,
    };

    pub fn mu(&self, lambda: Complex64) -> Complex64 {
        lambda * self.sign + self.shift
    }

    pub fn lambda(&self, mu: Complex64) -> Complex64 {
        (mu - self.shift) * self.sign
    }

    pub fn mu_re(&self, lambda: f64) -> f64 {
        self.sign * lambda + self.shift
    }

    pub fn lambda_re(&self, mu: f64) -> f64 {
        (mu - self.shift) * self.sign
    }
}

/// Which equation a [`Problem`] was built from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    CubicPt { a: f64 },
    QuarticI { a: f64, c: f64 },
    QuarticIi { b: f64, j: f64 },
    Custom,
}

impl Family {
    /// CLI name of the family.
    pub fn tag(&self) -> &'static str {
        match self {
            Family::CubicPt { .. } => "cubic-pt",
            Family::QuarticI { .. } => "quartic-i",
            Family::QuarticIi { .. } => "quartic-ii",
            Family::Custom => "custom",
        }
    }
}

/// A boundary eigenvalue problem `y'' = (V - mu) y`, `y -> 0` along two rays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub potential: CPoly,
    pub theta_a: f64,
    pub theta_b: f64,
    pub mu_map: MuMap,
    pub family: Family,
    pub conjugate_symmetric: bool,
}

fn check_finite(vals: &[f64]) -> Result<()> {
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("non-finite parameter in {vals:?}")))
    }
}

impl Problem {
    fn build(potential: CPoly, theta_a: f64, theta_b: f64, mu_map: MuMap, family: Family) -> Self {
        let conjugate_symmetric = potential.has_real_coeffs() && {
            let (a, b) = (theta_a, theta_b);
            let same = |x: f64, y: f64| angle_distance(x, y) < 1e-12;
            (same(-a, a) && same(-b, b)) || (same(-a, b) && same(-b, a))
        };
        Problem {
            potential,
            theta_a,
            theta_b,
            mu_map,
            family,
            conjugate_symmetric,
        }
    }

    /// `-y'' + (z^3 - a z) y = -λ y`, `y(±i∞) = 0`.
    pub fn cubic_pt(a: f64) -> Result<Self> {
        check_finite(&[a])?;
        Ok(Self::build(
            CPoly::from_real(&[0.0, -a, 0.0, 1.0]),
            FRAC_PI_2,
            -FRAC_PI_2,
            MuMap::NEGATE,
            Family::CubicPt { a },
        ))
    }

    /// `-y'' + (-z^4 + a z^2 + c z) y = -λ y`, `y(±i∞) = 0`.
    pub fn quartic_i(a: f64, c: f64) -> Result<Self> {
        check_finite(&[a, c])?;
        Ok(Self::build(
            CPoly::from_real(&[0.0, c, a, 0.0, -1.0]),
            FRAC_PI_2,
            -FRAC_PI_2,
            MuMap::NEGATE,
            Family::QuarticI { a, c },
        ))
    }

    /// `-y'' + (z^4 - 2b z^2 + 2J z) y = λ y`, `y(r e^{±iπ/3}) -> 0`.
    ///
    /// Any real `J` is accepted; negative `J` gives the Darboux partner.
    pub fn quartic_ii(b: f64, j: f64) -> Result<Self> {
        check_finite(&[b, j])?;
        Ok(Self::build(
            CPoly::from_real(&[0.0, 2.0 * j, -2.0 * b, 0.0, 1.0]),
            FRAC_PI_3,
            -FRAC_PI_3,
            MuMap::IDENTITY,
            Family::QuarticIi { b, j },
        ))
    }

    /// Arbitrary potential in the internal form `-y'' + V y = λ y` (so `mu = λ`).
    pub fn custom(potential: CPoly, theta_a: f64, theta_b: f64) -> Result<Self> {
        check_finite(&[theta_a, theta_b])?;
        if potential
            .coeffs()
            .iter()
            .any(|c| !c.re.is_finite() || !c.im.is_finite())
        {
            return Err(Error::InvalidParams("non-finite potential coefficient".into()));
        }
        if potential.degree().unwrap_or(0) < 1 {
            return Err(Error::InvalidParams(
                "potential must have degree >= 1".into(),
            ));
        }
        Ok(Self::build(
            potential,
            theta_a,
            theta_b,
            MuMap::IDENTITY,
            Family::Custom,
        ))
    }

    pub fn from_family(family: Family) -> Result<Self> {
        match family {
            Family::CubicPt { a } => Self::cubic_pt(a),
            Family::QuarticI { a, c } => Self::quartic_i(a, c),
            Family::QuarticIi { b, j } => Self::quartic_ii(b, j),
            Family::Custom => Err(Error::InvalidParams(
                "custom problems need an explicit potential".into(),
            )),
        }
    }

    pub fn degree(&self) -> usize {
        self.potential.degree().unwrap_or(0)
    }

    pub fn mu_of_lambda(&self, lambda: Complex64) -> Complex64 {
        self.mu_map.mu(lambda)
    }

    pub fn lambda_of_mu(&self, mu: Complex64) -> Complex64 {
        self.mu_map.lambda(mu)
    }

    /// Whether `theta_b` is the mirror image of `theta_a`.
    pub fn rays_are_mirror(&self) -> bool {
        angle_distance(-self.theta_a, self.theta_b) < 1e-12
    }

    /// Whether both rays lie on the real axis.
    pub fn rays_are_real(&self) -> bool {
        let real = |t: f64| angle_distance(t, 0.0) < 1e-12 || angle_distance(t, PI) < 1e-12;
        real(self.theta_a) && real(self.theta_b)
    }

    /// Well-posedness checks; see [`Validation`].
    pub fn validate(&self) -> Result<Validation> {
        let d = self.degree();
        if d < 1 {
            return Err(Error::InvalidParams("constant potential".into()));
        }
        let lead = self.potential.leading();
        let sector = |theta: f64| {
            sector_index(theta, d, lead).ok_or_else(|| Error::RayNotRecessive {
                theta,
                reason: "ray lies on a Stokes sector boundary".into(),
            })
        };
        let sa = sector(self.theta_a)?;
        let sb = sector(self.theta_b)?;
        let m = d + 2;
        let diff = (sa + m - sb) % m;
        if diff == 0 || diff == 1 || diff == m - 1 {
            return Err(Error::AdjacentSectors {
                theta_a: self.theta_a,
                theta_b: self.theta_b,
                sector_a: sa,
                sector_b: sb,
            });
        }

        if self.family != Family::Custom {
            let sub = self.potential.coeff(d - 1);
            if (lead.norm() - 1.0).abs() > 1e-14 || sub.norm() > 0.0 {
                return Err(Error::NotNormalized(format!(
                    "expected V = ±z^{d} + O(z^{}), got {}",
                    d - 2,
                    self.potential
                )));
            }
        }

        let mut margins = [0.0; 2];
        for (slot, &theta) in [self.theta_a, self.theta_b].iter().enumerate() {
            let r0 = crate::shooting::auto_radius(
                &self.potential,
                Complex64::new(0.0, 0.0),
                theta,
                &crate::shooting::SeedCriteria::default(),
            );
            let dir = Complex64::from_polar(1.0, theta);
            let mut worst = f64::INFINITY;
            for k in 0..=16 {
                let t = r0 * (0.5 + 0.5 * k as f64 / 16.0);
                let s = (self.potential.eval(dir * t)).sqrt();
                let ratio = (dir * s).re.abs() / s.norm().max(f64::MIN_POSITIVE);
                worst = worst.min(ratio);
            }
            if worst < 1e-3 {
                return Err(Error::RayNotRecessive {
                    theta,
                    reason: format!("decay margin {worst:e} on the outer range"),
                });
            }
            margins[slot] = worst;
        }
        Ok(Validation {
            sector_a: sa,
            sector_b: sb,
            recession_margin: margins,
        })
    }
}

/// Outcome of [`Problem::validate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub sector_a: usize,
    pub sector_b: usize,
    /// Minimum of `|Re(e^{iθ} s)| / |s|` over the outer part of each ray.
    pub recession_margin: [f64; 2],
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sectors_cubic() {
        let s = stokes_sectors(3);
        assert_eq!(s.len(), 5);
        assert!((s[0].half_width - 36f64.to_radians()).abs() < 1e-15);
        assert!(s[1].contains(FRAC_PI_2));
        assert!(s[4].contains(1.5 * PI));
        assert!(s[4].contains(-FRAC_PI_2));
    }

    #[test]
    fn sectors_quartic_and_harmonic() {
        let s = stokes_sectors(4);
        assert_eq!(s.len(), 6);
        assert!((s[1].center_angle - FRAC_PI_3).abs() < 1e-15);
        let h = stokes_sectors(2);
        assert!(h[0].contains(0.0));
        assert!(h[2].contains(PI));
    }

    #[test]
    fn adjacency_rule() {
        let s = stokes_sectors(3);
        assert!(s[0].is_adjacent(&s[1]));
        assert!(s[0].is_adjacent(&s[4]));
        assert!(!s[1].is_adjacent(&s[4]));
        assert!(!s[0].is_adjacent(&s[0]));
    }

    #[test]
    fn sectors_tile_directions() {
        for d in 1..7 {
            let s = stokes_sectors(d);
            for k in 0..997 {
                let theta = TAU * (k as f64 + 0.5) / 997.0;
                let hits = s.iter().filter(|x| x.contains(theta)).count();
                let boundary = s
                    .iter()
                    .any(|x| (x.half_width - angle_distance(theta, x.center_angle)).abs() < 1e-9);
                assert!(hits == 1 || boundary, "d={d} theta={theta}");
                if hits == 1 && !boundary {
                    let j = s.iter().position(|x| x.contains(theta)).unwrap();
                    assert_eq!(sector_index(theta, d, Complex64::new(1.0, 0.0)), Some(j), "d={d} theta={theta}");
                }
            }
        }
    }

    #[test]
    fn family_constructors() {
        let p = Problem::cubic_pt(0.0).unwrap();
        assert_eq!(p.potential, CPoly::from_real(&[0.0, 0.0, 0.0, 1.0]));
        assert_eq!(p.mu_of_lambda(Complex64::new(2.0, 0.0)), Complex64::new(-2.0, 0.0));
        assert_eq!((p.theta_a, p.theta_b), (FRAC_PI_2, -FRAC_PI_2));
        assert!(p.conjugate_symmetric);

        let q = Problem::quartic_ii(1.0, 2.0).unwrap();
        assert_eq!(q.potential.to_string(), "z^4 - 2*z^2 + 4*z");
        assert_eq!(q.mu_map, MuMap::IDENTITY);
        assert_eq!((q.theta_a, q.theta_b), (FRAC_PI_3, -FRAC_PI_3));
        assert!(q.conjugate_symmetric);

        let h = Problem::custom(CPoly::from_real(&[0.0, 0.0, 1.0]), 0.0, PI).unwrap();
        assert!(h.conjugate_symmetric);
        assert!(h.rays_are_real());
        assert!(!h.rays_are_mirror());

        assert!(Problem::quartic_i(-9.0, 0.0).unwrap().conjugate_symmetric);
        assert!(matches!(Problem::cubic_pt(f64::NAN), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn mu_map_inverts() {
        for m in [MuMap::IDENTITY, MuMap::NEGATE, MuMap { sign: -1.0, shift: 2.5 }] {
            for l in [-3.0, 0.0, 1.25, 1e6] {
                let z = Complex64::new(l, 0.5);
                assert_eq!(m.lambda(m.mu(z)), z);
                assert_eq!(m.lambda_re(m.mu_re(l)), l);
            }
        }
    }

    #[test]
    fn validation_outcomes() {
        assert!(Problem::cubic_pt(1.0).unwrap().validate().is_ok());
        assert!(Problem::quartic_ii(1.0, 2.0).unwrap().validate().is_ok());
        // Leading -z^4: the imaginary axis is recessive.
        let v = Problem::quartic_i(-9.0, 0.0).unwrap().validate().unwrap();
        assert!(v.recession_margin.iter().all(|&m| m > 0.5));

        let adjacent = Problem::custom(
            CPoly::from_real(&[0.0, 0.0, 0.0, 1.0]),
            TAU / 5.0,
            2.0 * TAU / 5.0,
        )
        .unwrap();
        assert!(matches!(adjacent.validate(), Err(Error::AdjacentSectors { .. })));

        let boundary = Problem::custom(CPoly::from_real(&[0.0, 0.0, 1.0]), PI / 4.0, PI).unwrap();
        assert!(matches!(boundary.validate(), Err(Error::RayNotRecessive { .. })));

        let mut bad = Problem::cubic_pt(0.0).unwrap();
        bad.potential = CPoly::from_real(&[0.0, 0.0, 1.0, 1.0]);
        assert!(matches!(bad.validate(), Err(Error::NotNormalized(_))));
    }
}
