//! Mollified atom clouds in ℝⁿ and curvature certificates for them.
//!
//! For `p = μ ∗ N(0, δI)` with `μ` a finite atom cloud,
//! `Hess(-ln p)(x) = I/δ - Cov(x)/δ²`, where `Cov(x)` is the covariance of
//! the atoms under weights proportional to `w_k exp(-|x - y_k|²/2δ)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::StreamKey;
use crate::special::log_sum_exp;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HighDimError {
    #[error("invalid measure: {0}")]
    InvalidSpec(String),
    #[error("total mass {0} differs from 1 by more than 1e-9")]
    MassMismatch(f64),
    #[error("delta must be positive, got {0}")]
    NonPositiveDelta(f64),
    #[error("point has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("constants must be positive, got ({0}, {1})")]
    NonPositive(f64, f64),
}

pub type Result<T> = std::result::Result<T, HighDimError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomND {
    pub x: Vec<f64>,
    pub w: f64,
}

/// JSON form: `{"dim": 2, "atoms": [{"x": [1.0, 0.0], "w": 0.5}, ...]}` with
/// an optional `"center"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureNDSpec {
    pub dim: usize,
    pub atoms: Vec<AtomND>,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
}

/// A finite atom cloud with a ball `B(center, radius)` containing it.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureND {
    dim: usize,
    points: Vec<DVector<f64>>,
    weights: Vec<f64>,
    center: DVector<f64>,
    radius: f64,
}

impl MeasureND {
    /// Validates the cloud. Without an explicit center the bounding-box
    /// midpoint is used; the radius is the largest atom distance from it.
    pub fn new(spec: &MeasureNDSpec) -> Result<Self> {
        let dim = spec.dim;
        if dim == 0 || spec.atoms.is_empty() {
            return Err(HighDimError::InvalidSpec("need dim >= 1 and at least one atom".into()));
        }
        let mut points = Vec::with_capacity(spec.atoms.len());
        let mut weights = Vec::with_capacity(spec.atoms.len());
        for a in &spec.atoms {
            if a.x.len() != dim {
                return Err(HighDimError::DimensionMismatch { expected: dim, got: a.x.len() });
            }
            if !(a.w >= 0.0 && a.w.is_finite()) || a.x.iter().any(|v| !v.is_finite()) {
                return Err(HighDimError::InvalidSpec("atoms need finite coordinates and weights >= 0".into()));
            }
            points.push(DVector::from_column_slice(&a.x));
            weights.push(a.w);
        }
        let mass: f64 = weights.iter().sum();
        if !((mass - 1.0).abs() <= 1e-9) {
            return Err(HighDimError::MassMismatch(mass));
        }
        for w in &mut weights {
            *w /= mass;
        }
        let center = match &spec.center {
            Some(c) if c.len() != dim => return Err(HighDimError::DimensionMismatch { expected: dim, got: c.len() }),
            Some(c) => DVector::from_column_slice(c),
            None => DVector::from_fn(dim, |i, _| {
                let lo = points.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min);
                let hi = points.iter().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max);
                0.5 * (lo + hi)
            }),
        };
        let radius = points.iter().map(|p| (p - &center).norm()).fold(0.0, f64::max);
        Ok(Self { dim, points, weights, center, radius })
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, Box<dyn std::error::Error + Send + Sync>> {
        let spec: MeasureNDSpec = serde_json::from_str(text)?;
        Ok(Self::new(&spec)?)
    }

    pub fn single_atom(x: &[f64]) -> Self {
        Self::new(&MeasureNDSpec { dim: x.len(), atoms: vec![AtomND { x: x.to_vec(), w: 1.0 }], center: None })
            .expect("a single atom is valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    fn check(&self, x: &DVector<f64>, delta: f64) -> Result<()> {
        if !(delta > 0.0) {
            return Err(HighDimError::NonPositiveDelta(delta));
        }
        if x.len() != self.dim {
            return Err(HighDimError::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(())
    }

    /// `ln w_k - |x - y_k|²/2δ` per atom.
    fn log_kernel_weights(&self, x: &DVector<f64>, delta: f64) -> Vec<f64> {
        self.points.iter().zip(&self.weights).map(|(y, &w)| w.ln() - (x - y).norm_squared() / (2.0 * delta)).collect()
    }
}

/// `ln p(x)` for `p = μ ∗ N(0, δI)`.
pub fn log_density_nd(m: &MeasureND, delta: f64, x: &DVector<f64>) -> Result<f64> {
    m.check(x, delta)?;
    let norm = -0.5 * m.dim as f64 * (2.0 * std::f64::consts::PI * delta).ln();
    Ok(log_sum_exp(&m.log_kernel_weights(x, delta)) + norm)
}

/// `Hess(-ln p)(x) = I/δ - Cov(x)/δ²`, symmetric by construction.
pub fn hessian_neg_log_p(m: &MeasureND, delta: f64, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    m.check(x, delta)?;
    let lw = m.log_kernel_weights(x, delta);
    let total = log_sum_exp(&lw);
    let w: Vec<f64> = lw.iter().map(|l| (l - total).exp()).collect();
    let n = m.dim;
    let mut mean = DVector::<f64>::zeros(n);
    for (y, &wk) in m.points.iter().zip(&w) {
        mean.axpy(wk, y, 1.0);
    }
    let mut cov = DMatrix::<f64>::zeros(n, n);
    for (y, &wk) in m.points.iter().zip(&w) {
        let d = y - &mean;
        for i in 0..n {
            for j in i..n {
                cov[(i, j)] += wk * d[i] * d[j];
            }
        }
    }
    let mut h = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = if i == j { 1.0 / delta } else { 0.0 } - cov[(i, j)] / (delta * delta);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}

/// Deterministic probe set: a grid of `resolution` points per axis over
/// `center ± (R + 6√δ)`, `random` seeded uniform points in the same box, and
/// the center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub resolution: usize,
    pub random: usize,
    pub seed: u64,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self { resolution: 21, random: 200, seed: 0 }
    }
}

pub fn probe_points(m: &MeasureND, delta: f64, spec: &ProbeSpec) -> Vec<DVector<f64>> {
    let n = m.dim;
    let half = m.radius + 6.0 * delta.sqrt();
    let mut out = vec![m.center.clone()];
    if spec.resolution >= 2 {
        let r = spec.resolution;
        let total = r.checked_pow(n as u32).unwrap_or(usize::MAX).min(1 << 20);
        for idx in 0..total {
            let mut k = idx;
            let p = DVector::from_fn(n, |i, _| {
                let step = k % r;
                k /= r;
                m.center[i] - half + 2.0 * half * step as f64 / (r - 1) as f64
            });
            out.push(p);
        }
    }
    let key = StreamKey::new(spec.seed, 0x6864);
    for t in 0..spec.random as u64 {
        let mut s = key.trial(t);
        out.push(DVector::from_fn(n, |i, _| m.center[i] - half + 2.0 * half * s.uniforms(i as u64).0));
    }
    out
}

/// Probe-based curvature certificate; heuristic, not a proof.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HessianCertificate {
    pub delta: f64,
    #[serde(rename = "R")]
    pub radius: f64,
    pub n: usize,
    pub min_eig: f64,
    /// `1 / min_eig` when positive.
    pub c_candidate: Option<f64>,
    /// `δ > 2R²n`
    pub threshold_ok: bool,
    /// `2R²/δ`
    pub perturbation_bound: f64,
    /// `(δ - 2R²n)/δ²`, a lower bound on the curvature when the threshold holds.
    pub analytic_floor: f64,
    pub probes_evaluated: usize,
    pub argmin: Vec<f64>,
}

pub fn bakry_emery_certificate(m: &MeasureND, delta: f64, probes: &ProbeSpec) -> Result<HessianCertificate> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(HighDimError::NonPositiveDelta(delta));
    }
    let pts = probe_points(m, delta, probes);
    let mins: Vec<f64> = pts
        .par_iter()
        .map(|x| {
            let h = hessian_neg_log_p(m, delta, x).expect("probe dimensions match");
            h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
        })
        .collect();
    // first occurrence of the minimum in probe order
    let (arg, min_eig) =
        mins.iter().enumerate().fold((0, f64::INFINITY), |best, (i, &v)| if v < best.1 { (i, v) } else { best });
    let r2 = m.radius * m.radius;
    let n = m.dim;
    Ok(HessianCertificate {
        delta,
        radius: m.radius,
        n,
        min_eig,
        c_candidate: if min_eig > 0.0 { Some(1.0 / min_eig) } else { None },
        threshold_ok: threshold_check(m.radius, n, delta),
        perturbation_bound: 2.0 * r2 / delta,
        analytic_floor: (delta - 2.0 * r2 * n as f64) / (delta * delta),
        probes_evaluated: pts.len(),
        argmin: pts[arg].iter().copied().collect(),
    })
}

/// `δ > 2R²n`.
pub fn threshold_check(radius: f64, n: usize, delta: f64) -> bool {
    delta > 2.0 * radius * radius * n as f64
}

/// LSI constant of a product measure from those of its factors.
pub fn gross_compose(c1: f64, c2: f64) -> Result<f64> {
    if !(c1 > 0.0 && c2 > 0.0) {
        return Err(HighDimError::NonPositive(c1, c2));
    }
    Ok(c1.max(c2))
}
