//! CSV ingestion and the seeded synthetic-data generator.
//!
//! File layout: a header `# p=<int> q=<int> classes=<n_1,...,n_c>`, then
//! `p + q` comma-separated rows of `n` decimals. Rows `1..=p` hold `A`.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dcca::{mean_center, PairedDataset};
use crate::error::{Error, Result};

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_header(line: &str) -> Result<(usize, usize, Vec<usize>)> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| parse_err(1, "header must start with `# p=<int> q=<int> classes=<n_1,...>`"))?;
    let (mut p, mut q, mut classes) = (None, None, None);
    for tok in body.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| parse_err(1, format!("malformed header field `{tok}`")))?;
        let int = |s: &str| s.parse::<usize>().map_err(|_| parse_err(1, format!("`{s}` is not a non-negative integer")));
        match k {
            "p" => p = Some(int(v)?),
            "q" => q = Some(int(v)?),
            "classes" => classes = Some(v.split(',').map(int).collect::<Result<Vec<_>>>()?),
            _ => return Err(parse_err(1, format!("unknown header field `{k}`"))),
        }
    }
    match (p, q, classes) {
        (Some(p), Some(q), Some(c)) => Ok((p, q, c)),
        _ => Err(parse_err(1, "header needs p, q and classes")),
    }
}

pub fn parse_dataset(text: &str) -> Result<PairedDataset> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let (p, q, classes) = parse_header(header.trim())?;
    if p == 0 || q == 0 {
        return Err(parse_err(1, "p and q must be at least 1"));
    }
    if classes.iter().any(|&c| c == 0) {
        return Err(parse_err(1, "class sizes must be positive"));
    }
    let n: usize = classes.iter().sum();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(p + q);
    let mut last = 1;
    for (idx, line) in lines {
        let ln = idx + 1;
        last = ln;
        if rows.len() == p + q {
            return Err(parse_err(ln, format!("more than p + q = {} data rows", p + q)));
        }
        let vals = line
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| parse_err(ln, format!("`{}` is not a decimal number", s.trim()))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != n {
            return Err(parse_err(ln, format!("row has {} values, classes sum to n = {n}", vals.len())));
        }
        if let Some(v) = vals.iter().find(|v| !v.is_finite()) {
            return Err(parse_err(ln, format!("non-finite value {v}")));
        }
        rows.push(vals);
    }
    if rows.len() != p + q {
        return Err(parse_err(last, format!("expected p + q = {} data rows, found {}", p + q, rows.len())));
    }
    let a = DMatrix::from_fn(p, n, |r, c| rows[r][c]);
    let b = DMatrix::from_fn(q, n, |r, c| rows[p + r][c]);
    PairedDataset::new(a, b, classes)
}

pub fn load_dataset(path: &Path) -> Result<PairedDataset> {
    parse_dataset(&std::fs::read_to_string(path)?)
}

pub fn format_dataset(data: &PairedDataset) -> String {
    let classes: Vec<String> = data.class_sizes().iter().map(|c| c.to_string()).collect();
    let mut out = format!("# p={} q={} classes={}\n", data.p(), data.q(), classes.join(","));
    for m in [data.a(), data.b()] {
        for r in 0..m.nrows() {
            let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
    }
    out
}

pub fn save_dataset(data: &PairedDataset, path: &Path) -> Result<()> {
    std::fs::write(path, format_dataset(data))?;
    Ok(())
}

/// Generated entries are multiples of this, so they are exact in the
/// default fixed-point format.
pub const VALUE_GRID: f64 = 1.0 / 16.0;

fn snap(x: f64) -> f64 {
    (x / VALUE_GRID).round() * VALUE_GRID
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub p: usize,
    pub q: usize,
    pub classes: Vec<usize>,
    /// Entries lie in `[−scale, scale]`.
    pub scale: f64,
    /// Weight of the shared class signal against per-sample noise, in
    /// `[0, 1]`; 0 makes the classes statistically identical.
    pub separation: f64,
    /// Collapse most entries of each row onto the row mean so that at least
    /// 60% of centered entries fall below `m0`.
    pub violate_m0: bool,
    pub m0: Option<f64>,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self { p: 2, q: 2, classes: vec![3, 3], scale: 2.0, separation: 0.7, violate_m0: false, m0: None, seed: 0 }
    }
}

impl GeneratorSpec {
    /// The `m0` the generator audits against: given, or `scale/4`.
    pub fn audit_m0(&self) -> f64 {
        self.m0.unwrap_or(self.scale / 4.0)
    }
}

pub fn generate_dataset(spec: &GeneratorSpec) -> Result<PairedDataset> {
    if spec.p == 0 || spec.q == 0 || spec.classes.is_empty() || spec.classes.iter().any(|&c| c == 0) {
        return Err(Error::InvalidArgument("generator needs p, q >= 1 and positive class sizes".into()));
    }
    if !(spec.separation >= 0.0 && spec.separation <= 1.0) {
        return Err(Error::InvalidArgument(format!("separation {} not in [0, 1]", spec.separation)));
    }
    if !(spec.scale >= 4.0 * VALUE_GRID && spec.scale <= 1024.0) {
        return Err(Error::InvalidArgument(format!("scale {} outside [{}, 1024]", spec.scale, 4.0 * VALUE_GRID)));
    }
    let n: usize = spec.classes.iter().sum();
    if spec.violate_m0 && n < 4 {
        return Err(Error::InvalidArgument("m0-violating mode needs n >= 4".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rank = spec.p.min(spec.q);
    let c = spec.classes.len();
    // class latents shared by both views, with view-specific loadings
    let latent = DMatrix::from_fn(rank, c, |_, _| rng.gen_range(-1.0..1.0));
    let view = |rows: usize, rng: &mut ChaCha8Rng| {
        let load = DMatrix::from_fn(rows, rank, |_, _| rng.gen_range(-1.0..1.0));
        let signal = &load * &latent / (rank as f64).sqrt();
        let mut m = DMatrix::zeros(rows, n);
        let mut col = 0;
        for (i, &size) in spec.classes.iter().enumerate() {
            for _ in 0..size {
                for r in 0..rows {
                    let noise: f64 = rng.gen_range(-1.0..1.0);
                    let v = spec.separation * signal[(r, i)] + (1.0 - spec.separation) * noise;
                    m[(r, col)] = snap((v * spec.scale).clamp(-spec.scale, spec.scale));
                }
                col += 1;
            }
        }
        if spec.violate_m0 {
            collapse_rows(&mut m, rng);
        }
        m
    };
    let a = view(spec.p, &mut rng);
    let b = view(spec.q, &mut rng);
    PairedDataset::new(a, b, spec.classes.clone())
}

/// Keep a quarter of each row (at least one entry) and set the rest to the
/// snapped mean of the kept entries.
fn collapse_rows(m: &mut DMatrix<f64>, rng: &mut ChaCha8Rng) {
    let n = m.ncols();
    let keep = (n / 4).max(1);
    for r in 0..m.nrows() {
        let mut cols: Vec<usize> = (0..n).collect();
        for k in 0..keep {
            let j = rng.gen_range(k..n);
            cols.swap(k, j);
        }
        let mean = cols[..keep].iter().map(|&j| m[(r, j)]).sum::<f64>() / keep as f64;
        for &j in &cols[keep..] {
            m[(r, j)] = snap(mean);
        }
    }
}

/// Fraction of centered entries with magnitude below `m0`.
pub fn fraction_below_m0(data: &PairedDataset, m0: f64) -> f64 {
    let x = mean_center(data).stacked();
    x.iter().filter(|v| v.abs() < m0).count() as f64 / x.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcca::reference_instance;

    #[test]
    fn reference_round_trip() {
        let d = reference_instance();
        let text = format_dataset(&d);
        assert_eq!(text, "# p=1 q=1 classes=2,2\n1,2,3,4\n1,1,2,2\n");
        assert_eq!(parse_dataset(&text).unwrap(), d);
    }

    #[test]
    fn class_mismatch_rejected_with_line() {
        let err = parse_dataset("# p=1 q=1 classes=2,2\n1,2,3,4,5\n1,1,2,2,2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn empty_and_malformed_rejected() {
        assert!(matches!(parse_dataset(""), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_dataset("p=1 q=1 classes=2\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_dataset("# p=1 q=1 classes=2\n1,x\n1,1\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_dataset("# p=1 q=1 classes=2\n1,2\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_dataset("# p=1 q=1 classes=2\n1,2\n1,1\n3,3\n"), Err(Error::Parse { line: 4, .. })));
    }

    #[test]
    fn generator_is_deterministic() {
        let spec = GeneratorSpec { seed: 11, ..GeneratorSpec::default() };
        let a = format_dataset(&generate_dataset(&spec).unwrap());
        let b = format_dataset(&generate_dataset(&spec).unwrap());
        assert_eq!(a, b);
        assert_eq!(parse_dataset(&a).unwrap(), generate_dataset(&spec).unwrap());
    }

    #[test]
    fn violating_mode_audit() {
        for seed in 0..10 {
            let spec = GeneratorSpec { p: 2, q: 3, classes: vec![4, 4], violate_m0: true, seed, ..GeneratorSpec::default() };
            let d = generate_dataset(&spec).unwrap();
            assert!(fraction_below_m0(&d, spec.audit_m0()) >= 0.6);
        }
    }

    #[test]
    fn infeasible_specs_rejected() {
        assert!(generate_dataset(&GeneratorSpec { classes: vec![2, 0], ..GeneratorSpec::default() }).is_err());
        assert!(generate_dataset(&GeneratorSpec { separation: 1.5, ..GeneratorSpec::default() }).is_err());
        assert!(generate_dataset(&GeneratorSpec { scale: 0.0, ..GeneratorSpec::default() }).is_err());
    }
}
