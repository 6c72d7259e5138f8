//! Wigner-matrix concentration experiments.
//!
//! Pipeline: sample `Y` with i.i.d. upper-triangle entries (diagonal
//! included), normalize `X = Y/√n`, optionally mollify `X̃ = (Y + √δ G)/√n`,
//! and compare empirical deviation frequencies of `∫ f dμ_X` against the
//! concentration envelope assembled from the three-term split at `ε/3`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::bg::{compute_bg, BgError};
use crate::measure::{Measure1D, MeasureError, MeasureSpec};
use crate::mollify::{MollifiedDensity, MollifyError};
use crate::quad::{integrate, QuadOptions};
use crate::rng::{box_muller, StreamKey};
use crate::special::{log_norm_pdf, norm_cdf};

#[derive(Debug, Error)]
pub enum RmtError {
    #[error("unknown entry law: {0}")]
    UnknownLaw(String),
    #[error("invalid entry law: {0}")]
    InvalidLaw(String),
    #[error("unknown test function: {0}")]
    UnknownFunction(String),
    #[error("mollification variance must be nonnegative, got {0}")]
    NegativeDelta(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("argument must be positive: {0}")]
    NonPositiveArg(String),
    #[error("no tabulated delta has c <= {0}")]
    NoFeasibleDelta(usize),
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Bg(#[from] BgError),
    #[error(transparent)]
    Mollify(#[from] MollifyError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

pub type Result<T> = std::result::Result<T, RmtError>;

/// Real symmetric matrix stored as its packed upper triangle, row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * (n + 1) / 2] }
    }

    pub fn from_fn<F: FnMut(usize, usize) -> f64>(n: usize, mut f: F) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let k = m.index(i, j);
                m.data[k] = f(i, j);
            }
        }
        m
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self::from_fn(d.len(), |i, j| if i == j { d[i] } else { 0.0 })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Packed position of `(min(i,j), max(i,j))`.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        // row i starts after Σ_{r<i} (n - r) entries
        i * self.n - i * i.saturating_sub(1) / 2 + (j - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.index(i, j);
        self.data[k] = v;
    }

    pub fn packed(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// `Tr(A²) = Σ_ij a_ij²`.
    pub fn frobenius_sq(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in i..self.n {
                let v = self.get(i, j);
                s += if i == j { v * v } else { 2.0 * v * v };
            }
        }
        s
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|v| v * c).collect() }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(RmtError::DimensionMismatch(self.n, other.n));
        }
        Ok(Self { n: self.n, data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() })
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }
}

/// Sorted eigenvalues, ascending.
pub fn spectrum(a: &SymmetricMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = a.to_dmatrix().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Law of the matrix entries.
#[derive(Debug, Clone, PartialEq)]
pub enum EntryLaw {
    /// `±1` with equal probability.
    TwoPoint,
    Uniform {
        a: f64,
        b: f64,
    },
    Gaussian {
        mean: f64,
        var: f64,
    },
    Exponential {
        rate: f64,
    },
    AtomMixture(Measure1D),
}

fn field(obj: &serde_json::Map<String, Value>, key: &str, default: Option<f64>) -> Result<f64> {
    match obj.get(key) {
        Some(v) => v.as_f64().ok_or_else(|| RmtError::InvalidLaw(format!("{key} must be a number"))),
        None => default.ok_or_else(|| RmtError::InvalidLaw(format!("missing field {key}"))),
    }
}

impl EntryLaw {
    /// Parses `"two_point"` or `{"kind": "...", ...}`.
    pub fn from_value(v: &Value) -> Result<Self> {
        let (kind, obj) = match v {
            Value::String(s) => (s.as_str(), serde_json::Map::new()),
            Value::Object(o) => {
                let kind = o
                    .get("kind")
                    .and_then(Value::as_str)
                    .ok_or_else(|| RmtError::UnknownLaw("object law needs a string \"kind\"".into()))?;
                (kind, o.clone())
            }
            other => return Err(RmtError::UnknownLaw(other.to_string())),
        };
        let law = match kind {
            "two_point" => EntryLaw::TwoPoint,
            "uniform" => EntryLaw::Uniform { a: field(&obj, "a", Some(-1.0))?, b: field(&obj, "b", Some(1.0))? },
            "gaussian" => {
                EntryLaw::Gaussian { mean: field(&obj, "mean", Some(0.0))?, var: field(&obj, "var", Some(1.0))? }
            }
            "exponential" => EntryLaw::Exponential { rate: field(&obj, "rate", Some(1.0))? },
            "atom_mixture" => {
                let spec = obj
                    .get("measure")
                    .ok_or_else(|| RmtError::InvalidLaw("atom_mixture needs a \"measure\"".into()))?;
                let spec: MeasureSpec =
                    serde_json::from_value(spec.clone()).map_err(|e| RmtError::InvalidLaw(e.to_string()))?;
                EntryLaw::AtomMixture(crate::measure::build_measure(&spec)?)
            }
            other => return Err(RmtError::UnknownLaw(other.to_string())),
        };
        law.validate()?;
        Ok(law)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            EntryLaw::Uniform { a, b } if !(a < b && a.is_finite() && b.is_finite()) => {
                Err(RmtError::InvalidLaw(format!("uniform needs a < b, got ({a}, {b})")))
            }
            EntryLaw::Gaussian { mean, var } if !(var > 0.0 && mean.is_finite() && var.is_finite()) => {
                Err(RmtError::InvalidLaw(format!("gaussian needs var > 0, got {var}")))
            }
            EntryLaw::Exponential { rate } if !(rate > 0.0 && rate.is_finite()) => {
                Err(RmtError::InvalidLaw(format!("exponential needs rate > 0, got {rate}")))
            }
            _ => Ok(()),
        }
    }

    /// One draw from two independent uniforms in `(0, 1)`.
    pub fn sample(&self, u1: f64, u2: f64) -> f64 {
        match self {
            EntryLaw::TwoPoint => {
                if u1 < 0.5 {
                    -1.0
                } else {
                    1.0
                }
            }
            EntryLaw::Uniform { a, b } => a + (b - a) * u1,
            EntryLaw::Gaussian { mean, var } => mean + var.sqrt() * box_muller(u1, u2),
            EntryLaw::Exponential { rate } => -u1.ln() / rate,
            EntryLaw::AtomMixture(m) => m.quantile(u1),
        }
    }

    /// The law as a compactly supported measure, when it is one.
    pub fn compact_measure(&self) -> Option<Measure1D> {
        match self {
            EntryLaw::TwoPoint => Some(Measure1D::two_point()),
            EntryLaw::Uniform { a, b } => Measure1D::uniform(*a, *b).ok(),
            EntryLaw::AtomMixture(m) => Some(m.clone()),
            _ => None,
        }
    }

    /// An LSI constant for the law convolved with `N(0, δ)`, if one is
    /// available: exact for Gaussians, the upper bracket for compact laws
    /// with `δ > 0`, `None` otherwise.
    pub fn lsi_constant(&self, delta: f64) -> Result<Option<f64>> {
        if let EntryLaw::Gaussian { var, .. } = self {
            return Ok(Some(var + delta));
        }
        if delta > 0.0 {
            if let Some(m) = self.compact_measure() {
                return Ok(Some(compute_bg(&MollifiedDensity::new(m, delta)?).c_upper));
            }
        }
        Ok(None)
    }

    /// `E[Y²; |Y| >= c]`.
    pub fn tail_second_moment(&self, c: f64) -> f64 {
        let c = c.max(0.0);
        match self {
            EntryLaw::Exponential { rate } => {
                let l = *rate;
                (-l * c).exp() * (c * c + 2.0 * c / l + 2.0 / (l * l))
            }
            EntryLaw::Gaussian { mean, var } => {
                let s = var.sqrt();
                if *mean == 0.0 {
                    let z = c / s;
                    return 2.0 * var * (z * log_norm_pdf(z).exp() + norm_cdf(-z));
                }
                let dens = |y: f64| y * y * log_norm_pdf((y - mean) / s).exp() / s;
                let opts = QuadOptions { rel_tol: 1e-12, abs_tol: 1e-300, ..QuadOptions::default() };
                let reach = mean.abs() + 40.0 * s;
                integrate(dens, c, c.max(reach), &[*mean], &opts).value
                    + integrate(dens, (-c).min(-reach), -c, &[*mean], &opts).value
            }
            other => {
                let m = other.compact_measure().expect("remaining laws are compact");
                m.integrate(|t| if t.abs() >= c { t * t } else { 0.0 }, &[-c, c])
            }
        }
    }

    pub fn to_value(&self) -> Value {
        match self {
            EntryLaw::TwoPoint => serde_json::json!({"kind": "two_point"}),
            EntryLaw::Uniform { a, b } => serde_json::json!({"kind": "uniform", "a": a, "b": b}),
            EntryLaw::Gaussian { mean, var } => serde_json::json!({"kind": "gaussian", "mean": mean, "var": var}),
            EntryLaw::Exponential { rate } => serde_json::json!({"kind": "exponential", "rate": rate}),
            EntryLaw::AtomMixture(m) => serde_json::json!({"kind": "atom_mixture", "measure": m.to_spec()}),
        }
    }
}

/// Test functions with a known Lipschitz constant.
#[derive(Debug, Clone, PartialEq)]
pub enum LipschitzFn {
    Identity,
    Abs,
    Arctan,
    /// Linear interpolation through `(x, y)` knots, constant outside.
    PiecewiseLinear(Vec<(f64, f64)>),
}

impl LipschitzFn {
    pub fn from_value(v: &Value) -> Result<Self> {
        let (kind, obj) = match v {
            Value::String(s) => (s.as_str(), None),
            Value::Object(o) => (
                o.get("kind")
                    .and_then(Value::as_str)
                    .ok_or_else(|| RmtError::UnknownFunction("object function needs a string \"kind\"".into()))?,
                Some(o),
            ),
            other => return Err(RmtError::UnknownFunction(other.to_string())),
        };
        match kind {
            "identity" => Ok(LipschitzFn::Identity),
            "abs" => Ok(LipschitzFn::Abs),
            "arctan" => Ok(LipschitzFn::Arctan),
            "piecewise_linear" => {
                let knots = obj
                    .and_then(|o| o.get("knots"))
                    .ok_or_else(|| RmtError::UnknownFunction("piecewise_linear needs \"knots\"".into()))?;
                let knots: Vec<(f64, f64)> = serde_json::from_value(knots.clone())
                    .map_err(|e| RmtError::UnknownFunction(format!("bad knots: {e}")))?;
                Self::piecewise_linear(knots)
            }
            other => Err(RmtError::UnknownFunction(other.to_string())),
        }
    }

    pub fn piecewise_linear(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() || knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(RmtError::UnknownFunction("knots must be nonempty and strictly increasing".into()));
        }
        Ok(LipschitzFn::PiecewiseLinear(knots))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            LipschitzFn::Identity => x,
            LipschitzFn::Abs => x.abs(),
            LipschitzFn::Arctan => x.atan(),
            LipschitzFn::PiecewiseLinear(k) => {
                if x <= k[0].0 {
                    return k[0].1;
                }
                if x >= k[k.len() - 1].0 {
                    return k[k.len() - 1].1;
                }
                let i = k.partition_point(|p| p.0 <= x) - 1;
                let (x0, y0) = k[i];
                let (x1, y1) = k[i + 1];
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
        }
    }

    pub fn lip(&self) -> f64 {
        match self {
            LipschitzFn::Identity | LipschitzFn::Abs | LipschitzFn::Arctan => 1.0,
            LipschitzFn::PiecewiseLinear(k) => {
                k.windows(2).map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs()).fold(0.0, f64::max)
            }
        }
    }

    pub fn to_value(&self) -> Value {
        match self {
            LipschitzFn::Identity => Value::from("identity"),
            LipschitzFn::Abs => Value::from("abs"),
            LipschitzFn::Arctan => Value::from("arctan"),
            LipschitzFn::PiecewiseLinear(k) => serde_json::json!({"kind": "piecewise_linear", "knots": k}),
        }
    }
}

/// `(1/n) Σ f(λ_i)`.
pub fn empirical_law_integral(eigenvalues: &[f64], f: &LipschitzFn) -> f64 {
    eigenvalues.iter().map(|&l| f.eval(l)).sum::<f64>() / eigenvalues.len() as f64
}

const DOMAIN_WIGNER: u64 = 1;
const DOMAIN_NOISE: u64 = 2;
const DOMAIN_PILOT: u64 = 3;

fn domain(kind: u64, n: usize) -> u64 {
    (kind << 32) | n as u64
}

fn wigner_from_key(n: usize, law: &EntryLaw, key: &StreamKey, trial: u64) -> SymmetricMatrix {
    let mut s = key.trial(trial);
    let mut m = SymmetricMatrix::zeros(n);
    for (k, v) in m.data.iter_mut().enumerate() {
        let (u1, u2) = s.uniforms(k as u64);
        *v = law.sample(u1, u2);
    }
    m
}

fn noise_from_key(n: usize, key: &StreamKey, trial: u64) -> SymmetricMatrix {
    let mut s = key.trial(trial);
    let mut m = SymmetricMatrix::zeros(n);
    for (k, v) in m.data.iter_mut().enumerate() {
        *v = s.normal(k as u64);
    }
    m
}

/// Symmetric matrix with i.i.d. upper-triangle entries (diagonal included).
pub fn sample_wigner(n: usize, law: &EntryLaw, seed: u64) -> SymmetricMatrix {
    wigner_from_key(n, law, &StreamKey::new(seed, domain(DOMAIN_WIGNER, n)), 0)
}

/// `Y + √δ G` with `G` standard Gaussian on an independent stream.
pub fn mollify_ensemble(y: &SymmetricMatrix, delta: f64, seed: u64) -> Result<SymmetricMatrix> {
    add_noise(y, delta, &StreamKey::new(seed, domain(DOMAIN_NOISE, y.n)), 0)
}

fn add_noise(y: &SymmetricMatrix, delta: f64, key: &StreamKey, trial: u64) -> Result<SymmetricMatrix> {
    if !(delta >= 0.0) {
        return Err(RmtError::NegativeDelta(delta));
    }
    if delta == 0.0 {
        return Ok(y.clone());
    }
    let g = noise_from_key(y.n, key, trial);
    let s = delta.sqrt();
    Ok(SymmetricMatrix { n: y.n, data: y.data.iter().zip(&g.data).map(|(a, b)| a + s * b).collect() })
}

/// Entrywise truncation: entries with `|y| >= c` become zero.
pub fn cutoff(y: &SymmetricMatrix, c: f64) -> SymmetricMatrix {
    SymmetricMatrix { n: y.n, data: y.data.iter().map(|&v| if v.abs() < c { v } else { 0.0 }).collect() }
}

/// A level `C` with `E[Y²; |Y| >= C] < target`, found by bisection on the
/// closed-form or quadrature tail moment.
pub fn cutoff_level(law: &EntryLaw, target: f64) -> Result<f64> {
    if !(target > 0.0) {
        return Err(RmtError::NonPositiveArg(format!("cutoff target {target}")));
    }
    let mut hi = 1.0;
    while law.tail_second_moment(hi) >= target {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(RmtError::InvalidLaw("tail second moment does not vanish".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if law.tail_second_moment(mid) < target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `(Σ(λᴬ_i - λᴮ_i)², Tr[(A - B)²])` with both spectra sorted.
pub fn hoffman_wielandt_gap(a: &SymmetricMatrix, b: &SymmetricMatrix) -> Result<(f64, f64)> {
    let diff = a.sub(b)?;
    let la = spectrum(a);
    let lb = spectrum(b);
    let lhs = la.iter().zip(&lb).map(|(x, y)| (x - y).powi(2)).sum();
    Ok((lhs, diff.frobenius_sq()))
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 {
        Ok(())
    } else {
        Err(RmtError::NonPositiveArg(format!("{name} = {v}")))
    }
}

/// `2 exp(-n²ε² / (k c lip²))` with `k = 4`, or `k = 36` for the `ε/3`
/// split; capped at 2. `c = ∞` gives 2.
pub fn guionnet_bound(n: usize, eps: f64, c: f64, lip: f64, third: bool) -> Result<f64> {
    positive("n", n as f64)?;
    positive("epsilon", eps)?;
    positive("c", c)?;
    positive("lip", lip)?;
    let k = if third { 36.0 } else { 4.0 };
    let n = n as f64;
    Ok((2.0 * (-(n * n * eps * eps) / (k * c * lip * lip)).exp()).min(2.0))
}

/// `min(1, 9 lip² δ / ε²)`.
pub fn term1_bound(eps: f64, lip: f64, delta: f64) -> Result<f64> {
    positive("epsilon", eps)?;
    positive("lip", lip)?;
    if !(delta >= 0.0) {
        return Err(RmtError::NegativeDelta(delta));
    }
    Ok((9.0 * lip * lip * delta / (eps * eps)).min(1.0))
}

/// One row of a `δ(n)` schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleRow {
    pub n: usize,
    pub delta: f64,
    pub c_of_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaSchedule {
    pub rows: Vec<ScheduleRow>,
}

impl DeltaSchedule {
    pub fn delta_for(&self, n: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.n == n).map(|r| r.delta)
    }
}

/// For each `n`, the smallest tabulated `δ` with `c(δ) <= n`.
pub fn delta_schedule(c_table: &[(f64, f64)], ns: &[usize]) -> Result<DeltaSchedule> {
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let best = c_table
            .iter()
            .filter(|(_, c)| *c <= n as f64)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .ok_or(RmtError::NoFeasibleDelta(n))?;
        rows.push(ScheduleRow { n, delta: best.0, c_of_delta: best.1 });
    }
    Ok(DeltaSchedule { rows })
}

/// Builds the `(δ, c_upper)` table for a compact law.
pub fn c_table(law: &EntryLaw, deltas: &[f64]) -> Result<Vec<(f64, f64)>> {
    let m = law
        .compact_measure()
        .ok_or_else(|| RmtError::InvalidConfig("schedule mode needs a compactly supported law".into()))?;
    deltas.iter().map(|&d| Ok((d, compute_bg(&MollifiedDensity::new(m.clone(), d)?).c_upper))).collect()
}

/// Per-trial statistics.
#[derive(Debug, Clone, Copy)]
struct TrialStats {
    fx: f64,
    fx_tilde: f64,
    chain_ok: bool,
}

fn run_trial(n: usize, law: &EntryLaw, f: &LipschitzFn, delta: f64, seed: u64, trial: u64) -> TrialStats {
    let y = wigner_from_key(n, law, &StreamKey::new(seed, domain(DOMAIN_WIGNER, n)), trial);
    let scale = 1.0 / (n as f64).sqrt();
    let x = y.scaled(scale);
    let fx = empirical_law_integral(&spectrum(&x), f);
    if delta == 0.0 {
        return TrialStats { fx, fx_tilde: fx, chain_ok: true };
    }
    let yt = add_noise(&y, delta, &StreamKey::new(seed, domain(DOMAIN_NOISE, n)), trial).expect("delta checked");
    let xt = yt.scaled(scale);
    let fx_tilde = empirical_law_integral(&spectrum(&xt), f);
    let tr = x.sub(&xt).expect("same size").frobenius_sq();
    let rhs = f.lip() * scale * tr.sqrt();
    let chain_ok = (fx - fx_tilde).abs() <= rhs + 1e-9 * (1.0 + rhs);
    TrialStats { fx, fx_tilde, chain_ok }
}

fn pilot_trial(n: usize, law: &EntryLaw, f: &LipschitzFn, seed: u64, trial: u64) -> f64 {
    let y = wigner_from_key(n, law, &StreamKey::new(seed, domain(DOMAIN_PILOT, n)), trial);
    empirical_law_integral(&spectrum(&y.scaled(1.0 / (n as f64).sqrt())), f)
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let t = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / t;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (t - 1.0);
    (mean, (var / t).sqrt())
}

fn bernoulli_stderr(p: f64, trials: usize) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

/// Monte Carlo estimate of `|E∫f dμ_X̃ - E∫f dμ_X|` and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Term3Check {
    pub gap: f64,
    pub stderr: f64,
    /// `lip · √δ`
    pub bound: f64,
    /// `ε / 3`
    pub threshold: f64,
}

impl Term3Check {
    pub fn within_bound(&self) -> bool {
        self.gap <= self.bound + 3.0 * self.stderr
    }
}

fn term3_from(stats: &[TrialStats], eps: f64, lip: f64, delta: f64) -> Term3Check {
    let diffs: Vec<f64> = stats.iter().map(|s| s.fx_tilde - s.fx).collect();
    let (gap, stderr) = mean_and_stderr(&diffs);
    Term3Check { gap: gap.abs(), stderr, bound: lip * delta.sqrt(), threshold: eps / 3.0 }
}

fn simulate(n: usize, law: &EntryLaw, f: &LipschitzFn, delta: f64, trials: usize, seed: u64) -> Vec<TrialStats> {
    (0..trials as u64).into_par_iter().map(|t| run_trial(n, law, f, delta, seed, t)).collect()
}

pub fn term3_check(
    law: &EntryLaw,
    f: &LipschitzFn,
    n: usize,
    eps: f64,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<Term3Check> {
    positive("epsilon", eps)?;
    if !(delta >= 0.0) {
        return Err(RmtError::NegativeDelta(delta));
    }
    if trials == 0 {
        return Err(RmtError::NonPositiveArg("trials = 0".into()));
    }
    Ok(term3_from(&simulate(n, law, f, delta, trials, seed), eps, f.lip(), delta))
}

/// Where the mollification variance comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum DeltaSource {
    #[default]
    None,
    Fixed {
        value: f64,
    },
    /// `δ(n)` from the `c_upper` table over `deltas`.
    Schedule {
        deltas: Vec<f64>,
    },
}

/// Experiment description, e.g.
/// `{"law":"two_point","f":"arctan","n":[20,50],"eps":[0.3],"trials":200,"seed":42,"delta":{"mode":"fixed","value":0.25}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub law: Value,
    pub f: Value,
    pub n: Vec<usize>,
    pub eps: Vec<f64>,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub delta: DeltaSource,
}

/// One `(n, ε)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationCell {
    pub n: usize,
    pub eps: f64,
    pub trials: usize,
    pub mean_estimate: f64,
    pub empirical_freq: f64,
    pub mc_stderr: f64,
    /// Full-`ε` bound without mollification, `ε/3` variant otherwise.
    pub guionnet_bound: f64,
    pub term1_bound: f64,
    pub term1_freq: f64,
    pub term1_stderr: f64,
    pub term3: Term3Check,
    /// `1` when `lip √δ >= ε/3`, so the third term cannot be ruled out.
    pub term3_indicator: f64,
    pub envelope: f64,
    pub delta_used: f64,
    pub c_used: Option<f64>,
    pub f_lip: f64,
    pub chain_violations: usize,
}

impl ConcentrationCell {
    pub fn envelope_ok(&self) -> bool {
        self.empirical_freq <= self.envelope + 5.0 * self.mc_stderr
    }

    pub fn term1_ok(&self) -> bool {
        self.term1_freq <= self.term1_bound + 3.0 * self.term1_stderr
    }

    pub fn term3_ok(&self) -> bool {
        self.term3.within_bound()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub law: Value,
    pub f: Value,
    pub trials: usize,
    pub seed: u64,
    pub schedule: Option<DeltaSchedule>,
    pub cells: Vec<ConcentrationCell>,
}

impl ConcentrationReport {
    pub const CSV_HEADER: &'static str = "n,eps,trials,freq,stderr,bound,term1,term3,delta,c_upper";

    pub fn cell(&self, n: usize, eps: f64) -> Option<&ConcentrationCell> {
        self.cells.iter().find(|c| c.n == n && c.eps == eps)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for c in &self.cells {
            out.push_str(&format!(
                "{},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
                c.n,
                c.eps,
                c.trials,
                c.empirical_freq,
                c.mc_stderr,
                c.guionnet_bound,
                c.term1_bound,
                c.term3.gap,
                c.delta_used,
                c.c_used.map_or_else(|| "inf".to_string(), |v| format!("{v:.16e}"))
            ));
        }
        out
    }
}

/// Runs every `(n, ε)` cell of the experiment. Trials run in parallel;
/// all reductions are sequential over trial index, so the report does not
/// depend on the thread count.
pub fn concentration_experiment(cfg: &ExperimentConfig) -> Result<ConcentrationReport> {
    let law = EntryLaw::from_value(&cfg.law)?;
    let f = LipschitzFn::from_value(&cfg.f)?;
    if cfg.n.contains(&0) {
        return Err(RmtError::InvalidConfig("matrix sizes must be positive".into()));
    }
    if cfg.eps.iter().any(|&e| !(e > 0.0)) {
        return Err(RmtError::InvalidConfig("eps values must be positive".into()));
    }
    let mut report = ConcentrationReport {
        law: law.to_value(),
        f: f.to_value(),
        trials: cfg.trials,
        seed: cfg.seed,
        schedule: None,
        cells: Vec::new(),
    };
    if cfg.trials == 0 {
        return Ok(report);
    }
    let delta_for: Vec<f64> = match &cfg.delta {
        DeltaSource::None => vec![0.0; cfg.n.len()],
        DeltaSource::Fixed { value } => {
            if !(*value >= 0.0) {
                return Err(RmtError::NegativeDelta(*value));
            }
            vec![*value; cfg.n.len()]
        }
        DeltaSource::Schedule { deltas } => {
            if deltas.iter().any(|&d| !(d > 0.0)) {
                return Err(RmtError::InvalidConfig("schedule deltas must be positive".into()));
            }
            let schedule = delta_schedule(&c_table(&law, deltas)?, &cfg.n)?;
            let v = cfg.n.iter().map(|&n| schedule.delta_for(n).expect("row per n")).collect();
            report.schedule = Some(schedule);
            v
        }
    };

    let lip = f.lip();
    let mut c_cache: Vec<(f64, Option<f64>)> = Vec::new();
    for (&n, &delta) in cfg.n.iter().zip(&delta_for) {
        let c = match c_cache.iter().find(|(d, _)| *d == delta) {
            Some(&(_, c)) => c,
            None => {
                let c = law.lsi_constant(delta)?;
                c_cache.push((delta, c));
                c
            }
        };
        let stats = simulate(n, &law, &f, delta, cfg.trials, cfg.seed);
        let pilot: Vec<f64> =
            (0..cfg.trials as u64).into_par_iter().map(|t| pilot_trial(n, &law, &f, cfg.seed, t)).collect();
        let mean = pilot.iter().sum::<f64>() / pilot.len() as f64;
        let chain_violations = stats.iter().filter(|s| !s.chain_ok).count();
        for &eps in &cfg.eps {
            let t = cfg.trials as f64;
            let hits = stats.iter().filter(|s| (s.fx - mean).abs() >= eps).count();
            let freq = hits as f64 / t;
            let t1_hits = stats.iter().filter(|s| (s.fx - s.fx_tilde).abs() >= eps / 3.0).count();
            let t1_freq = t1_hits as f64 / t;
            let mollified = delta > 0.0;
            let guionnet = match c {
                Some(c) => guionnet_bound(n, eps, c, lip, mollified)?,
                None => 2.0,
            };
            let (t1_bound, indicator) = if mollified {
                (term1_bound(eps, lip, delta)?, if lip * delta.sqrt() >= eps / 3.0 { 1.0 } else { 0.0 })
            } else {
                (0.0, 0.0)
            };
            report.cells.push(ConcentrationCell {
                n,
                eps,
                trials: cfg.trials,
                mean_estimate: mean,
                empirical_freq: freq,
                mc_stderr: bernoulli_stderr(freq, cfg.trials),
                guionnet_bound: guionnet,
                term1_bound: t1_bound,
                term1_freq: t1_freq,
                term1_stderr: bernoulli_stderr(t1_freq, cfg.trials),
                term3: term3_from(&stats, eps, lip, delta),
                term3_indicator: indicator,
                envelope: t1_bound + guionnet + indicator,
                delta_used: delta,
                c_used: c,
                f_lip: lip,
                chain_violations,
            });
        }
    }
    Ok(report)
}
