//! CSV writers and the parsers that read them back.
//!
//! Numbers are written with 17 significant digits (`{:.16e}`), which is
//! enough for every `f64` to round-trip exactly. Lines starting with `#`
//! are comments; the first row after them is the column header.

use std::fmt::{self, Write};

use num_complex::Complex64;
use specloc::oscillator::StokesSector;
use specloc::qes::{ComplementReport, Crossing, DarbouxReport, EquivalenceReport, QesPoint};
use specloc::spectrum::{EigenRecord, RealityReport};
use specloc::{CPoly, Family};

/// Malformed CSV input.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError(pub String);

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CSV parse error: {}", self.0)
    }
}

impl std::error::Error for ParseError {}

type Parsed<T> = Result<T, ParseError>;

fn bad<T>(msg: impl Into<String>) -> Parsed<T> {
    Err(ParseError(msg.into()))
}

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_usize(x: Option<usize>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

fn parse_f64(s: &str) -> Parsed<f64> {
    s.trim().parse().or_else(|_| bad(format!("not a number: {s:?}")))
}

fn parse_usize(s: &str) -> Parsed<usize> {
    s.trim().parse().or_else(|_| bad(format!("not an index: {s:?}")))
}

fn parse_opt_usize(s: &str) -> Parsed<Option<usize>> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        parse_usize(s).map(Some)
    }
}

fn parse_bool(s: &str) -> Parsed<bool> {
    s.trim().parse().or_else(|_| bad(format!("not a boolean: {s:?}")))
}

fn complex(re: &str, im: &str) -> Parsed<Complex64> {
    Ok(Complex64::new(parse_f64(re)?, parse_f64(im)?))
}

/// Non-comment lines split on commas; the first must start with `header`.
fn table<'a>(text: &'a str, header: &str) -> Parsed<(Vec<&'a str>, Vec<Vec<&'a str>>)> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let head = match lines.next() {
        Some(h) if h.starts_with(header) => h.split(',').collect::<Vec<_>>(),
        Some(h) => return bad(format!("expected header {header:?}, found {h:?}")),
        None => return bad("empty input"),
    };
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    if let Some(r) = rows.iter().find(|r| r.len() != head.len()) {
        return bad(format!("row has {} columns, header {}: {}", r.len(), head.len(), r.join(",")));
    }
    Ok((head, rows))
}

/// Value of a `# key: value` comment line.
fn comment<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    let prefix = format!("# {key}: ");
    text.lines().find_map(|l| l.trim().strip_prefix(prefix.as_str()))
}

const SECTORS: &str = "d,j,center_angle,half_width";

pub fn sectors_csv(sectors: &[StokesSector]) -> String {
    let mut out = format!("{SECTORS}\n");
    for s in sectors {
        writeln!(out, "{},{},{},{}", s.d, s.j, num(s.center_angle), num(s.half_width)).unwrap();
    }
    out
}

pub fn parse_sectors(text: &str) -> Parsed<Vec<StokesSector>> {
    let (_, rows) = table(text, SECTORS)?;
    rows.iter()
        .map(|r| {
            Ok(StokesSector {
                d: parse_usize(r[0])?,
                j: parse_usize(r[1])?,
                center_angle: parse_f64(r[2])?,
                half_width: parse_f64(r[3])?,
            })
        })
        .collect()
}

const EIG: &str = "index,lambda_re,lambda_im,n_real_zeros,n_nonreal_zeros,residual,method";

/// Eigenvalue records. The family goes into a `# family:` comment as JSON,
/// since all records of one run share it.
pub fn eig_csv(family: &Family, records: &[EigenRecord]) -> String {
    let fam = serde_json::to_string(family).expect("family serializes");
    let mut out = format!("# family: {fam}\n{EIG}\n");
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            opt_usize(r.index),
            num(r.lambda.re),
            num(r.lambda.im),
            opt_usize(r.n_real_zeros),
            opt_usize(r.n_nonreal_zeros),
            num(r.residual),
            r.method
        )
        .unwrap();
    }
    out
}

pub fn parse_eig(text: &str) -> Parsed<Vec<EigenRecord>> {
    let fam = comment(text, "family").ok_or_else(|| ParseError("missing family comment".into()))?;
    let family: Family = serde_json::from_str(fam).map_err(|e| ParseError(format!("family: {e}")))?;
    let (_, rows) = table(text, EIG)?;
    rows.iter()
        .map(|r| {
            Ok(EigenRecord {
                family,
                index: parse_opt_usize(r[0])?,
                lambda: complex(r[1], r[2])?,
                n_real_zeros: parse_opt_usize(r[3])?,
                n_nonreal_zeros: parse_opt_usize(r[4])?,
                residual: parse_f64(r[5])?,
                method: r[6].to_string(),
            })
        })
        .collect()
}

/// One evaluation of the spectral determinant.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DetRecord {
    pub lambda: Complex64,
    pub mu: Complex64,
    pub f: Complex64,
    /// The real form, for conjugate-symmetric problems at real `λ`.
    pub f_real: Option<f64>,
}

const DET: &str = "lambda_re,lambda_im,mu_re,mu_im,f_re,f_im,f_real";

pub fn det_csv(d: &DetRecord) -> String {
    format!(
        "{DET}\n{},{},{},{},{},{},{}\n",
        num(d.lambda.re),
        num(d.lambda.im),
        num(d.mu.re),
        num(d.mu.im),
        num(d.f.re),
        num(d.f.im),
        d.f_real.map_or(String::new(), num)
    )
}

pub fn parse_det(text: &str) -> Parsed<DetRecord> {
    let (_, rows) = table(text, DET)?;
    let [r] = rows.as_slice() else {
        return bad(format!("expected one row, found {}", rows.len()));
    };
    Ok(DetRecord {
        lambda: complex(r[0], r[1])?,
        mu: complex(r[2], r[3])?,
        f: complex(r[4], r[5])?,
        f_real: if r[6].is_empty() { None } else { Some(parse_f64(r[6])?) },
    })
}

fn poly_cells(p: &CPoly, len: usize) -> String {
    (0..len)
        .map(|k| {
            let c = p.coeff(k);
            format!("{},{}", num(c.re), num(c.im))
        })
        .collect::<Vec<_>>()
        .join(",")
}

fn poly_line(p: &CPoly) -> String {
    p.coeffs()
        .iter()
        .map(|c| format!("{} {}", num(c.re), num(c.im)))
        .collect::<Vec<_>>()
        .join(";")
}

fn parse_poly_line(s: &str) -> Parsed<CPoly> {
    if s.trim().is_empty() {
        return Ok(CPoly::new(Vec::new()));
    }
    s.split(';')
        .map(|pair| match pair.split_whitespace().collect::<Vec<_>>().as_slice() {
            [re, im] => complex(re, im),
            _ => bad(format!("coefficient {pair:?}")),
        })
        .collect::<Parsed<Vec<_>>>()
        .map(CPoly::new)
}

/// QES points of `L_{n+1}` with their equivalence reports, at real `b`.
///
/// Columns: `n, b, λ`, the `n + 1` coefficients of `p` (ascending), its `n`
/// roots, then the degeneracy flag, residual and the six equivalence
/// quantities. The spectral polynomial goes into a `# spectral_poly:`
/// comment (ascending `re im` pairs).
pub fn qes_csv(q: &CPoly, points: &[(QesPoint, EquivalenceReport)]) -> String {
    let n = points.first().map_or(0, |(p, _)| p.n);
    let mut head = vec!["n".to_string(), "b".into(), "lambda_re".into(), "lambda_im".into()];
    for k in 0..=n {
        head.push(format!("p{k}_re"));
        head.push(format!("p{k}_im"));
    }
    for k in 1..=n {
        head.push(format!("z{k}_re"));
        head.push(format!("z{k}_im"));
    }
    for c in [
        "degenerate",
        "residual",
        "div_norm",
        "max_residue",
        "bethe_residual",
        "div_scaled",
        "residue_scaled",
        "bethe_scaled",
    ] {
        head.push(c.into());
    }
    let mut out = format!("# spectral_poly: {}\n{}\n", poly_line(q), head.join(","));
    for (p, e) in points {
        let mut row = format!("{},{},{},{}", p.n, num(p.b.re), num(p.lambda.re), num(p.lambda.im));
        write!(row, ",{}", poly_cells(&p.p, n + 1)).unwrap();
        for z in &p.roots {
            write!(row, ",{},{}", num(z.re), num(z.im)).unwrap();
        }
        write!(row, ",{},{}", p.degenerate, num(p.residual)).unwrap();
        for v in [e.div_norm, e.max_residue, e.bethe_residual, e.div_scaled, e.residue_scaled, e.bethe_scaled] {
            write!(row, ",{}", num(v)).unwrap();
        }
        writeln!(out, "{row}").unwrap();
    }
    out
}

/// Spectral polynomial and points of [`qes_csv`].
pub fn parse_qes(text: &str) -> Parsed<(CPoly, Vec<(QesPoint, EquivalenceReport)>)> {
    let q = parse_poly_line(comment(text, "spectral_poly").unwrap_or(""))?;
    let (head, rows) = table(text, "n,b,lambda_re,lambda_im")?;
    // 4 + 2(n+1) + 2n + 8 columns.
    let n = match (head.len() - 14) % 4 {
        0 => (head.len() - 14) / 4,
        _ => return bad(format!("{} columns do not fit any n", head.len())),
    };
    let points = rows
        .iter()
        .map(|r| {
            if parse_usize(r[0])? != n {
                return bad(format!("row n = {} in a table for n = {n}", r[0]));
            }
            let p: Vec<Complex64> = (0..=n)
                .map(|k| complex(r[4 + 2 * k], r[5 + 2 * k]))
                .collect::<Parsed<_>>()?;
            let base = 6 + 2 * n;
            let roots: Vec<Complex64> = (0..n)
                .map(|k| complex(r[base + 2 * k], r[base + 1 + 2 * k]))
                .collect::<Parsed<_>>()?;
            let t = base + 2 * n;
            let f = |i: usize| parse_f64(r[t + i]);
            Ok((
                QesPoint {
                    n,
                    b: Complex64::new(parse_f64(r[1])?, 0.0),
                    lambda: complex(r[2], r[3])?,
                    p: CPoly::new(p),
                    roots,
                    degenerate: parse_bool(r[t])?,
                    residual: f(1)?,
                },
                EquivalenceReport {
                    div_norm: f(2)?,
                    max_residue: f(3)?,
                    bethe_residual: f(4)?,
                    div_scaled: f(5)?,
                    residue_scaled: f(6)?,
                    bethe_scaled: f(7)?,
                },
            ))
        })
        .collect::<Parsed<_>>()?;
    Ok((q, points))
}

/// Bethe roots with the residual of each equation, and the eigenvalue they
/// determine.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BetheRecord {
    pub n: usize,
    pub b: f64,
    pub lambda: Complex64,
    pub roots: Vec<Complex64>,
    pub residuals: Vec<f64>,
}

const BETHE: &str = "k,z_re,z_im,residual";

pub fn bethe_csv(r: &BetheRecord) -> String {
    let mut out = format!(
        "# bethe: n={} b={} lambda_re={} lambda_im={}\n{BETHE}\n",
        r.n,
        num(r.b),
        num(r.lambda.re),
        num(r.lambda.im)
    );
    for (k, (z, e)) in r.roots.iter().zip(&r.residuals).enumerate() {
        writeln!(out, "{},{},{},{}", k + 1, num(z.re), num(z.im), num(*e)).unwrap();
    }
    out
}

pub fn parse_bethe(text: &str) -> Parsed<BetheRecord> {
    let info = comment(text, "bethe").ok_or_else(|| ParseError("missing bethe comment".into()))?;
    let mut kv = std::collections::HashMap::new();
    for item in info.split_whitespace() {
        let (k, v) = item.split_once('=').ok_or_else(|| ParseError(format!("field {item:?}")))?;
        kv.insert(k, v);
    }
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| ParseError(format!("missing {k}")));
    let (_, rows) = table(text, BETHE)?;
    let mut roots = Vec::new();
    let mut residuals = Vec::new();
    for r in &rows {
        roots.push(complex(r[1], r[2])?);
        residuals.push(parse_f64(r[3])?);
    }
    Ok(BetheRecord {
        n: parse_usize(get("n")?)?,
        b: parse_f64(get("b")?)?,
        lambda: complex(get("lambda_re")?, get("lambda_im")?)?,
        roots,
        residuals,
    })
}

const DARBOUX: &str = "section,k,re,im";

/// Darboux report and spectral complement as `section,k,re,im` rows.
///
/// Sections: `w_poly` and `v_new` coefficients, `shift`, `deviation`,
/// `potential_error`, the three eigenvalue lists and `max_diff`; `n`, `b`,
/// `j` are single rows too.
pub fn darboux_csv(d: &DarbouxReport, c: &ComplementReport) -> String {
    let mut out = format!("{DARBOUX}\n");
    let mut row = |sec: &str, k: usize, z: Complex64| {
        writeln!(out, "{sec},{k},{},{}", num(z.re), num(z.im)).unwrap();
    };
    let r = |x: f64| Complex64::new(x, 0.0);
    row("n", 0, r(d.n as f64));
    row("b", 0, d.b);
    for (k, z) in d.w_poly.coeffs().iter().enumerate() {
        row("w_poly", k, *z);
    }
    for (k, z) in d.v_new.coeffs().iter().enumerate() {
        row("v_new", k, *z);
    }
    row("shift", 0, d.shift);
    row("deviation", 0, r(d.deviation));
    row("potential_error", 0, r(d.potential_error));
    row("j", 0, r(c.j as f64));
    row("complement_b", 0, r(c.b));
    for (name, v) in [("transformed", &c.transformed), ("original", &c.original), ("qes", &c.qes)] {
        for (k, x) in v.iter().enumerate() {
            row(name, k, r(*x));
        }
    }
    row("max_diff", 0, r(c.max_diff));
    out
}

pub fn parse_darboux(text: &str) -> Parsed<(DarbouxReport, ComplementReport)> {
    let (_, rows) = table(text, DARBOUX)?;
    let mut d = DarbouxReport {
        n: 0,
        b: Complex64::new(0.0, 0.0),
        w_poly: CPoly::new(Vec::new()),
        v_new: CPoly::new(Vec::new()),
        shift: Complex64::new(0.0, 0.0),
        deviation: 0.0,
        potential_error: 0.0,
    };
    let mut c = ComplementReport {
        j: 0,
        b: 0.0,
        transformed: Vec::new(),
        original: Vec::new(),
        qes: Vec::new(),
        max_diff: 0.0,
    };
    let (mut w, mut v) = (Vec::new(), Vec::new());
    for r in &rows {
        let z = complex(r[2], r[3])?;
        match r[0] {
            "n" => d.n = z.re as usize,
            "b" => d.b = z,
            "w_poly" => w.push(z),
            "v_new" => v.push(z),
            "shift" => d.shift = z,
            "deviation" => d.deviation = z.re,
            "potential_error" => d.potential_error = z.re,
            "j" => c.j = z.re as usize,
            "complement_b" => c.b = z.re,
            "transformed" => c.transformed.push(z.re),
            "original" => c.original.push(z.re),
            "qes" => c.qes.push(z.re),
            "max_diff" => c.max_diff = z.re,
            other => return bad(format!("unknown section {other:?}")),
        }
    }
    d.w_poly = CPoly::new(w);
    d.v_new = CPoly::new(v);
    Ok((d, c))
}

const CROSSINGS: &str = "k,b_k,lambda_k,b_asym,ratio,branch";

pub fn crossings_csv(cs: &[Crossing]) -> String {
    let mut out = format!("{CROSSINGS}\n");
    for c in cs {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            c.k,
            num(c.b_k),
            num(c.lambda_k),
            num(c.b_asym),
            num(c.ratio),
            c.branch
        )
        .unwrap();
    }
    out
}

pub fn parse_crossings(text: &str) -> Parsed<Vec<Crossing>> {
    let (_, rows) = table(text, CROSSINGS)?;
    rows.iter()
        .map(|r| {
            Ok(Crossing {
                k: parse_usize(r[0])?,
                b_k: parse_f64(r[1])?,
                lambda_k: parse_f64(r[2])?,
                b_asym: parse_f64(r[3])?,
                ratio: parse_f64(r[4])?,
                branch: parse_usize(r[5])?,
            })
        })
        .collect()
}

const REALITY: &str = "b,j,kind,k,lambda_re,lambda_im";

/// Checked eigenvalues (`kind = eig`) and excluded QES ones (`kind = qes`).
pub fn reality_csv(r: &RealityReport) -> String {
    let mut out = format!("{REALITY}\n");
    for (kind, v) in [("eig", &r.eigenvalues), ("qes", &r.qes)] {
        for (k, z) in v.iter().enumerate() {
            writeln!(out, "{},{},{kind},{k},{},{}", num(r.b), num(r.j), num(z.re), num(z.im)).unwrap();
        }
    }
    out
}

pub fn parse_reality(text: &str) -> Parsed<RealityReport> {
    let (_, rows) = table(text, REALITY)?;
    let first = rows.first().ok_or_else(|| ParseError("no rows".into()))?;
    let mut r = RealityReport {
        b: parse_f64(first[0])?,
        j: parse_f64(first[1])?,
        eigenvalues: Vec::new(),
        qes: Vec::new(),
        max_abs_im: 0.0,
    };
    for row in &rows {
        let z = complex(row[4], row[5])?;
        match row[2] {
            "eig" => r.eigenvalues.push(z),
            "qes" => r.qes.push(z),
            other => return bad(format!("unknown kind {other:?}")),
        }
    }
    r.max_abs_im = r.eigenvalues.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![any::<f64>().prop_filter("finite", |x| x.is_finite()), Just(0.0), Just(-0.0)]
    }

    proptest! {
        #[test]
        fn crossings_round_trip(rows in proptest::collection::vec((1usize..50, finite(), finite(), finite(), finite(), 0usize..4), 0..8)) {
            let cs: Vec<Crossing> = rows
                .into_iter()
                .map(|(k, b_k, lambda_k, b_asym, ratio, branch)| Crossing { k, branch, b_k, lambda_k, b_asym, ratio })
                .collect();
            let back = parse_crossings(&crossings_csv(&cs)).unwrap();
            prop_assert_eq!(back.len(), cs.len());
            for (a, b) in back.iter().zip(&cs) {
                prop_assert_eq!(a.b_k.to_bits(), b.b_k.to_bits());
                prop_assert_eq!(a.ratio.to_bits(), b.ratio.to_bits());
            }
        }

        #[test]
        fn det_round_trip(v in proptest::collection::vec(finite(), 6), real in proptest::option::of(finite())) {
            let d = DetRecord {
                lambda: Complex64::new(v[0], v[1]),
                mu: Complex64::new(v[2], v[3]),
                f: Complex64::new(v[4], v[5]),
                f_real: real,
            };
            prop_assert_eq!(parse_det(&det_csv(&d)).unwrap(), d);
        }
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(parse_crossings("k,b\n1,2\n").is_err());
        assert!(parse_sectors("").is_err());
    }

    #[test]
    fn poly_comment_round_trip() {
        let p = CPoly::new(vec![Complex64::new(1.5, -2.0), Complex64::new(0.0, 1e-300)]);
        assert_eq!(parse_poly_line(&poly_line(&p)).unwrap(), p);
    }
}
