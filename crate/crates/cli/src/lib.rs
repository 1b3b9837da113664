//! Command-line front end of `specloc`.
//!
//! [`run`] executes a parsed [`Cli`] and returns the text to write; the
//! binary only handles process concerns (output file, exit code).

pub mod formats;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};
use specloc::locus::{self, CurveTrace, LocusOptions};
use specloc::oscillator::stokes_sectors;
use specloc::shooting::{determinant, determinant_real};
use specloc::spectrum::{self, RealityOptions, Rect};
use specloc::{qes, CPoly, Error, Problem, ShootOptions};

use formats::{num, BetheRecord, DetRecord};

#[derive(Parser, Debug)]
#[command(
    name = "specloc",
    version,
    about = "Eigenvalues and real spectral loci of polynomial oscillators in the complex plane"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: Global,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Relative tolerance of the ODE integrator.
    #[arg(long, global = true, env = "SPECLOC_RTOL", default_value_t = 1e-10)]
    pub rtol: f64,
    /// Seed radius on the boundary rays (chosen automatically by default).
    #[arg(long, global = true)]
    pub radius: Option<f64>,
    /// Write the output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    /// `-y'' + (z^3 - a z) y = -λ y`, rays `±π/2`.
    CubicPt,
    /// `-y'' + (-z^4 + a z^2 + c z) y = -λ y`, rays `±π/2`.
    QuarticI,
    /// `-y'' + (z^4 - 2b z^2 + 2J z) y = λ y`, rays `±π/3`.
    QuarticIi,
    /// `y'' = (V - λ) y` with `--potential` and `--rays`.
    Custom,
}

#[derive(Args, Debug, Clone)]
pub struct FamilyArgs {
    #[arg(long, value_enum)]
    pub family: FamilyKind,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub c: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub j: Option<f64>,
    /// Potential of the custom family, e.g. `z^4 - 2*z^2 + 3i*z`.
    #[arg(long)]
    pub potential: Option<String>,
    /// Boundary ray angles of the custom family, e.g. `0,pi` or `pi/3,-pi/3`.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_rays)]
    pub rays: Option<(f64, f64)>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Stokes sectors of `z^d`.
    Sectors {
        #[arg(long)]
        d: usize,
    },
    /// Eigenvalues on a real interval (`--range`) or in a box (`--box`).
    Eig {
        #[command(flatten)]
        fam: FamilyArgs,
        #[arg(long, allow_hyphen_values = true, value_parser = parse_range)]
        range: Option<(f64, f64)>,
        #[arg(long = "box", allow_hyphen_values = true, value_parser = parse_box)]
        rect: Option<Rect>,
        /// Sample points of the real scan (default 40 per unit, at least 200).
        #[arg(long)]
        grid: Option<usize>,
        /// Subdivision depth of the box search.
        #[arg(long, default_value_t = 12)]
        depth: usize,
    },
    /// Spectral determinant at one eigenvalue parameter.
    Det {
        #[command(flatten)]
        fam: FamilyArgs,
        /// `re` or `re,im`.
        #[arg(long, allow_hyphen_values = true, value_parser = parse_complex)]
        lambda: Complex64,
    },
    /// Real spectral locus curves.
    ///
    /// cubic-pt: Γ_n for `--n` over an `a` range. quartic-i: sections
    /// S_0..S_n at `--a` over a `c` range. quartic-ii: for positive integer
    /// `--j` the QES curves plus `--extra` other branches over a `b` range.
    Trace {
        #[command(flatten)]
        fam: FamilyArgs,
        #[arg(long, default_value_t = 0)]
        n: usize,
        #[arg(long, allow_hyphen_values = true, value_parser = parse_range)]
        range: Option<(f64, f64)>,
        #[arg(long, default_value_t = 0.05)]
        step: f64,
        /// Non-QES branches to trace (quartic-ii).
        #[arg(long, default_value_t = 0)]
        extra: usize,
        #[arg(long, default_value_t = 20_000)]
        max_points: usize,
    },
    /// QES eigenvalues, polynomial factors and equivalence checks of `L_{n+1}`.
    Qes {
        #[arg(long)]
        n: usize,
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
    },
    /// Solve the Bethe equations for `n` roots.
    Bethe {
        #[arg(long)]
        n: usize,
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
        /// Seed from the `k`-th QES point instead of Chebyshev nodes.
        #[arg(long)]
        index: Option<usize>,
    },
    /// Darboux transform `L_{n+1} -> L_{-(n+1)}` and its spectral check.
    Darboux {
        #[arg(long)]
        n: usize,
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
        /// Eigenvalues compared.
        #[arg(long, default_value_t = 5)]
        count: usize,
    },
    /// Level crossings of the QES curve of `L_J` with the spectrum of `L_{-J}`.
    Crossings {
        #[arg(long)]
        j: usize,
        #[arg(long, allow_hyphen_values = true)]
        bmin: f64,
        #[arg(long, default_value_t = 5)]
        kmax: usize,
    },
    /// Largest eigenvalues of `L_J` and their imaginary parts.
    Reality {
        #[arg(long, allow_hyphen_values = true)]
        j: f64,
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
        #[arg(long, default_value_t = 8)]
        n: usize,
    },
}

/// Failure of a run, with its exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
    Io(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    pub fn name(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "UsageError",
            CliError::Io(_) => "IoError",
            CliError::Core(e) => e.name(),
        }
    }

    /// 1 for bad arguments or problem definitions, 2 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Core(e) => match e {
                Error::InvalidParams(_)
                | Error::AdjacentSectors { .. }
                | Error::NotNormalized(_)
                | Error::RayNotRecessive { .. }
                | Error::NotSymmetric => 1,
                _ => 2,
            },
        }
    }

    /// One-line JSON diagnostic for stderr.
    pub fn render(&self) -> String {
        json!({ "error": self.name(), "message": self.to_string() }).to_string()
    }
}

fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

/// A number or a multiple of π: `1.5`, `pi`, `-pi/3`, `2pi/3`, `2*pi`.
pub fn parse_angle(s: &str) -> Result<f64, String> {
    let t = s.trim().to_ascii_lowercase();
    let (sign, body) = match t.strip_prefix('-') {
        Some(rest) => (-1.0, rest.trim()),
        None => (1.0, t.strip_prefix('+').unwrap_or(&t).trim()),
    };
    let value = match body.split_once("pi") {
        None => body.parse::<f64>().map_err(|_| format!("bad angle {s:?}"))?,
        Some((coef, rest)) => {
            let coef = coef.trim().trim_end_matches('*').trim();
            let k = if coef.is_empty() {
                1.0
            } else {
                coef.parse::<f64>().map_err(|_| format!("bad angle {s:?}"))?
            };
            let rest = rest.trim();
            let d = match rest.strip_prefix('/') {
                Some(d) => d.trim().parse::<f64>().map_err(|_| format!("bad angle {s:?}"))?,
                None if rest.is_empty() => 1.0,
                None => return Err(format!("bad angle {s:?}")),
            };
            k * PI / d
        }
    };
    Ok(sign * value)
}

fn parse_list(s: &str, n: usize, what: &str) -> Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| format!("bad number {x:?} in {what}")))
        .collect::<Result<_, _>>()?;
    if v.len() != n {
        return Err(format!("{what} needs {n} comma-separated numbers, got {}", v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(format!("{what} must be finite"));
    }
    Ok(v)
}

pub fn parse_rays(s: &str) -> Result<(f64, f64), String> {
    match s.split(',').collect::<Vec<_>>().as_slice() {
        [a, b] => Ok((parse_angle(a)?, parse_angle(b)?)),
        _ => Err(format!("rays need two angles, got {s:?}")),
    }
}

pub fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let v = parse_list(s, 2, "range")?;
    if !(v[0] < v[1]) {
        return Err(format!("empty range {s:?}"));
    }
    Ok((v[0], v[1]))
}

pub fn parse_box(s: &str) -> Result<Rect, String> {
    let v = parse_list(s, 4, "box")?;
    Rect::new(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())
}

pub fn parse_complex(s: &str) -> Result<Complex64, String> {
    match s.split(',').count() {
        1 => parse_list(s, 1, "value").map(|v| Complex64::new(v[0], 0.0)),
        _ => parse_list(s, 2, "value").map(|v| Complex64::new(v[0], v[1])),
    }
}

fn need(x: Option<f64>, flag: &str, family: &str) -> Result<f64, CliError> {
    match x {
        Some(v) if v.is_finite() => Ok(v),
        Some(v) => usage(format!("--{flag} must be finite (got {v})")),
        None => usage(format!("family {family} needs --{flag}")),
    }
}

impl FamilyArgs {
    pub fn problem(&self) -> Result<Problem, CliError> {
        let name = self.family.to_possible_value().expect("named").get_name().to_string();
        let p = match self.family {
            FamilyKind::CubicPt => Problem::cubic_pt(need(self.a, "a", &name)?)?,
            FamilyKind::QuarticI => Problem::quartic_i(need(self.a, "a", &name)?, need(self.c, "c", &name)?)?,
            FamilyKind::QuarticIi => Problem::quartic_ii(need(self.b, "b", &name)?, need(self.j, "j", &name)?)?,
            FamilyKind::Custom => {
                let Some(src) = &self.potential else {
                    return usage("family custom needs --potential");
                };
                let v: CPoly = src
                    .parse()
                    .map_err(|e| CliError::Usage(format!("--potential {src:?}: {e}")))?;
                let Some((ta, tb)) = self.rays else {
                    return usage("family custom needs --rays");
                };
                let p = Problem::custom(v, ta, tb)?;
                p.validate()?;
                p
            }
        };
        Ok(p)
    }
}

/// Result of one subcommand before formatting.
struct Output {
    tolerances: Vec<(&'static str, String)>,
    csv: String,
    json: Value,
}

fn to_json<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("plain data serializes")
}

/// The invocation as one line, quoting arguments that need it.
pub fn invocation(args: &[String]) -> String {
    let mut words = vec!["specloc".to_string()];
    for a in args {
        let plain = !a.is_empty()
            && a.chars().all(|c| c.is_ascii_alphanumeric() || "-_.,/=+:^*".contains(c));
        words.push(if plain { a.clone() } else { format!("'{}'", a.replace('\'', "'\\''")) });
    }
    words.join(" ")
}

/// Runs the command and returns the complete output text. `args` are the
/// command-line arguments after the program name, recorded in the header.
pub fn run(cli: &Cli, args: &[String]) -> Result<String, CliError> {
    let g = &cli.global;
    if !(g.rtol > 0.0) {
        return usage(format!("--rtol must be positive (got {})", g.rtol));
    }
    if let Some(r) = g.radius {
        if !(r > 0.0) {
            return usage(format!("--radius must be positive (got {r})"));
        }
    }
    let opts = ShootOptions {
        radius: g.radius,
        ..ShootOptions::with_rtol(g.rtol)
    };
    let mut out = execute(&cli.command, &opts)?;
    let mut tol = vec![("rtol", num(g.rtol))];
    if let Some(r) = g.radius {
        tol.push(("radius", num(r)));
    }
    tol.append(&mut out.tolerances);
    let inv = invocation(args);
    Ok(match g.format {
        Format::Csv => {
            let t: Vec<String> = tol.iter().map(|(k, v)| format!("{k}={v}")).collect();
            format!("# {inv} ; tolerances: {}\n{}", t.join(" "), out.csv)
        }
        Format::Json => {
            let t: BTreeMap<&str, &String> = tol.iter().map(|(k, v)| (*k, v)).collect();
            let doc = json!({ "invocation": inv, "tolerances": t, "result": out.json });
            serde_json::to_string_pretty(&doc).expect("json") + "\n"
        }
    })
}

fn execute(cmd: &Command, opts: &ShootOptions) -> Result<Output, CliError> {
    match cmd {
        Command::Sectors { d } => {
            if *d == 0 {
                return usage("--d must be at least 1");
            }
            let s = stokes_sectors(*d);
            Ok(Output {
                tolerances: Vec::new(),
                csv: formats::sectors_csv(&s),
                json: to_json(&s),
            })
        }
        Command::Eig {
            fam,
            range,
            rect,
            grid,
            depth,
        } => {
            let p = fam.problem()?;
            let (records, tol) = match (range, rect) {
                (Some((lo, hi)), None) => {
                    let n = grid.unwrap_or((((hi - lo) * 40.0) as usize).max(200));
                    if n < 2 {
                        return usage("--grid must be at least 2");
                    }
                    let ev = spectrum::real_eigenvalues(&p, *lo, *hi, n, opts)?;
                    (spectrum::real_records(&p, &ev, opts)?, ("grid", n.to_string()))
                }
                (None, Some(r)) => {
                    let ev = spectrum::complex_eigenvalues_box(&p, r, *depth, opts)?;
                    (spectrum::complex_records(&p, &ev, opts)?, ("depth", depth.to_string()))
                }
                _ => return usage("eig needs exactly one of --range and --box"),
            };
            Ok(Output {
                tolerances: vec![tol],
                csv: formats::eig_csv(&p.family, &records),
                json: json!({ "family": to_json(&p.family), "eigenvalues": to_json(&records) }),
            })
        }
        Command::Det { fam, lambda } => {
            let p = fam.problem()?;
            let mu = p.mu_of_lambda(*lambda);
            let f = determinant(&p, mu, opts)?;
            let f_real = if lambda.im == 0.0 && (p.rays_are_mirror() || p.rays_are_real()) {
                match determinant_real(&p, mu.re, opts) {
                    Ok(v) => Some(v),
                    Err(Error::NotSymmetric) => None,
                    Err(e) => return Err(e.into()),
                }
            } else {
                None
            };
            let d = DetRecord {
                lambda: *lambda,
                mu,
                f,
                f_real,
            };
            Ok(Output {
                tolerances: Vec::new(),
                csv: formats::det_csv(&d),
                json: to_json(&d),
            })
        }
        Command::Trace {
            fam,
            n,
            range,
            step,
            extra,
            max_points,
        } => {
            if !(*step > 0.0) {
                return usage(format!("--step must be positive (got {step})"));
            }
            let lopts = LocusOptions {
                max_points: *max_points,
                ..Default::default()
            };
            let traces = trace(fam, *n, *range, *step, *extra, &lopts, opts)?;
            Ok(Output {
                tolerances: vec![("step", num(*step)), ("max_points", max_points.to_string())],
                csv: locus::to_csv(&traces)?,
                json: to_json(&traces),
            })
        }
        Command::Qes { n, b } => {
            let sp = qes::spectral_poly(*n, *b);
            let pts = qes::qes_points(*n, *b)?;
            let rows = pts
                .into_iter()
                .map(|pt| {
                    let e = qes::equivalence_check(&pt.p, pt.b)?;
                    Ok((pt, e))
                })
                .collect::<Result<Vec<_>, Error>>()?;
            let json_pts: Vec<Value> = rows
                .iter()
                .map(|(p, e)| json!({ "point": to_json(p), "equivalence": to_json(e) }))
                .collect();
            Ok(Output {
                tolerances: Vec::new(),
                csv: formats::qes_csv(&sp.q, &rows),
                json: json!({ "spectral_poly": to_json(&sp.q), "points": json_pts }),
            })
        }
        Command::Bethe { n, b, index } => {
            let bc = Complex64::new(*b, 0.0);
            let seeds = match index {
                None => qes::chebyshev_seeds(*n, bc),
                Some(k) => {
                    let pts = qes::qes_points(*n, *b)?;
                    match pts.get(*k) {
                        Some(pt) => qes::seeds_from_point(pt),
                        None => return usage(format!("--index {k} but there are {} QES points", pts.len())),
                    }
                }
            };
            let roots = qes::bethe_solve(*n, bc, &seeds)?;
            let r = BetheRecord {
                n: *n,
                b: *b,
                lambda: qes::lambda_from_roots(&roots, bc),
                residuals: qes::bethe_residuals(&roots, bc).iter().map(|z| z.norm()).collect(),
                roots,
            };
            Ok(Output {
                tolerances: Vec::new(),
                csv: formats::bethe_csv(&r),
                json: to_json(&r),
            })
        }
        Command::Darboux { n, b, count } => {
            let d = qes::darboux(*n, *b)?;
            let c = qes::spectral_complement(n + 1, *b, *count, opts)?;
            Ok(Output {
                tolerances: Vec::new(),
                csv: formats::darboux_csv(&d, &c),
                json: json!({ "darboux": to_json(&d), "complement": to_json(&c) }),
            })
        }
        Command::Crossings { j, bmin, kmax } => {
            let cs = qes::level_crossings(*j, *bmin, *kmax, opts)?;
            Ok(Output {
                tolerances: Vec::new(),
                csv: formats::crossings_csv(&cs),
                json: to_json(&cs),
            })
        }
        Command::Reality { j, b, n } => {
            let r = spectrum::reality_check(*b, *j, *n, &RealityOptions::default(), opts)?;
            Ok(Output {
                tolerances: Vec::new(),
                csv: formats::reality_csv(&r),
                json: to_json(&r),
            })
        }
    }
}

fn trace(
    fam: &FamilyArgs,
    n: usize,
    range: Option<(f64, f64)>,
    step: f64,
    extra: usize,
    lopts: &LocusOptions,
    opts: &ShootOptions,
) -> Result<Vec<CurveTrace>, CliError> {
    match fam.family {
        FamilyKind::CubicPt => Ok(vec![locus::trace_gamma_cubic(
            n,
            range.unwrap_or((-6.0, 8.0)),
            step,
            lopts,
            opts,
        )?]),
        FamilyKind::QuarticI => {
            let a = need(fam.a, "a", "quartic-i")?;
            Ok(locus::section_sn(a, n, range.unwrap_or((-60.0, 60.0)), step, lopts, opts)?)
        }
        FamilyKind::QuarticIi => {
            let j = need(fam.j, "j", "quartic-ii")?;
            let range = range.unwrap_or((-10.0, 10.0));
            let qes_j = j >= 1.0 && j.fract() == 0.0;
            let mut traces = if qes_j {
                locus::qes_components(j as usize - 1, range, step, lopts)?
            } else {
                Vec::new()
            };
            if extra > 0 {
                let det_j = if qes_j { -j } else { j };
                traces.extend(locus::quartic_ii_components(det_j, extra, range, step, lopts, opts)?);
            }
            if traces.is_empty() {
                return usage("nothing to trace: --j is not a positive integer and --extra is 0");
            }
            for t in &mut traces {
                t.fixed = vec![j];
            }
            Ok(traces)
        }
        FamilyKind::Custom => usage("trace supports cubic-pt, quartic-i and quartic-ii"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angles() {
        assert_eq!(parse_angle("pi").unwrap(), PI);
        assert_eq!(parse_angle("-pi/3").unwrap(), -PI / 3.0);
        assert_eq!(parse_angle("2pi/3").unwrap(), 2.0 * PI / 3.0);
        assert_eq!(parse_angle("2*pi").unwrap(), 2.0 * PI);
        assert_eq!(parse_angle("0.25").unwrap(), 0.25);
        assert!(parse_angle("pie").is_err());
        assert_eq!(parse_rays("0,pi").unwrap(), (0.0, PI));
    }

    #[test]
    fn ranges_and_boxes() {
        assert_eq!(parse_range("-6,8").unwrap(), (-6.0, 8.0));
        assert!(parse_range("3,1").is_err());
        assert!(parse_range("1").is_err());
        assert!(parse_box("0,1,-1,1").is_ok());
        assert!(parse_box("1,0,-1,1").is_err());
        assert_eq!(parse_complex("1.5,-2").unwrap(), Complex64::new(1.5, -2.0));
    }

    #[test]
    fn quoting() {
        let args = vec!["eig".to_string(), "--potential".into(), "z^4 - 2*z".into()];
        assert_eq!(invocation(&args), "specloc eig --potential 'z^4 - 2*z'");
    }

    #[test]
    fn exit_code_classes() {
        assert_eq!(CliError::Core(Error::NotSymmetric).exit_code(), 1);
        assert_eq!(CliError::Core(Error::SubdivisionLimit { remaining: 1 }).exit_code(), 2);
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        let v: Value = serde_json::from_str(&CliError::Core(Error::NotSymmetric).render()).unwrap();
        assert_eq!(v["error"], "NotSymmetric");
    }
}
