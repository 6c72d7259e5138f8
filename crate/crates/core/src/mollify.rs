//! Gaussian mollification `p = μ ∗ γ_δ` evaluated in log space.
//!
//! Atom contributions use the closed-form Gaussian density and CDF. Piece
//! contributions are integrated with the adaptive log-space rule, except
//! constant pieces, whose convolution is a difference of normal CDFs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measure::{Measure1D, Piece};
use crate::quad::{log_integrate, QuadOptions};
use crate::special::{log_ndtr, log_ndtr_diff, log_norm_pdf, log_sum_exp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MollifyError {
    #[error("mollification variance must be positive, got {0}")]
    NonPositiveDelta(f64),
    #[error("x = {x} is not strictly {side:?} of the support [{lo}, {hi}]")]
    InsideSupport { x: f64, side: Side, lo: f64, hi: f64 },
}

/// Which side of the median (or support) a quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

impl std::str::FromStr for Side {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            other => Err(format!("side must be left or right, got {other:?}")),
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

/// The density of `μ ∗ N(0, δ)`.
#[derive(Debug, Clone)]
pub struct MollifiedDensity {
    base: Measure1D,
    delta: f64,
    sigma: f64,
    quadrature_tol: f64,
}

impl MollifiedDensity {
    pub fn new(base: Measure1D, delta: f64) -> Result<Self, MollifyError> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(MollifyError::NonPositiveDelta(delta));
        }
        Ok(Self { base, delta, sigma: delta.sqrt(), quadrature_tol: 1e-12 })
    }

    pub fn with_quadrature_tol(mut self, tol: f64) -> Self {
        self.quadrature_tol = tol;
        self
    }

    pub fn base(&self) -> &Measure1D {
        &self.base
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn quadrature_tol(&self) -> f64 {
        self.quadrature_tol
    }

    fn opts(&self) -> QuadOptions {
        QuadOptions::with_rel_tol(self.quadrature_tol)
    }

    /// Kernel break points around `x` clipped to the piece.
    fn kernel_breaks(&self, x: f64) -> [f64; 5] {
        let s = self.sigma;
        [x - 10.0 * s, x - 5.0 * s, x, x + 5.0 * s, x + 10.0 * s]
    }

    /// `ln ∫ P(t) φ_σ(x - t) dt` over one piece.
    fn log_piece_density(&self, p: &Piece, x: f64) -> f64 {
        if p.coeffs.len() == 1 {
            let c = p.coeffs[0];
            if c <= 0.0 {
                return f64::NEG_INFINITY;
            }
            return c.ln() + log_ndtr_diff((x - p.lo) / self.sigma, (x - p.hi) / self.sigma);
        }
        let s = self.sigma;
        let ln_s = s.ln();
        log_integrate(
            |t| p.log_eval(t) + log_norm_pdf((x - t) / s) - ln_s,
            p.lo,
            p.hi,
            &self.kernel_breaks(x),
            &self.opts(),
        )
        .log_value
    }

    /// `ln p(x)`.
    pub fn log_density(&self, x: f64) -> f64 {
        let s = self.sigma;
        let ln_s = s.ln();
        let mut terms: Vec<f64> =
            self.base.atom_list().iter().map(|a| a.w.ln() + log_norm_pdf((x - a.x) / s) - ln_s).collect();
        terms.extend(self.base.piece_list().iter().map(|p| self.log_piece_density(p, x)));
        log_sum_exp(&terms)
    }

    /// Score `p'(x) / p(x) = -(x - E[t | x]) / δ`, where the conditional
    /// mean is taken under `φ_σ(x - t) dμ(t)` normalized.
    pub fn log_density_ratio_grad(&self, x: f64) -> f64 {
        let s = self.sigma;
        let ln_s = s.ln();
        let a = self.base.support().0;
        // mass and first moment of (t - a) under the posterior, both in logs
        let mut den = Vec::new();
        let mut num = Vec::new();
        for at in self.base.atom_list() {
            let lw = at.w.ln() + log_norm_pdf((x - at.x) / s) - ln_s;
            den.push(lw);
            let off = at.x - a;
            num.push(if off > 0.0 { lw + off.ln() } else { f64::NEG_INFINITY });
        }
        for p in self.base.piece_list() {
            den.push(self.log_piece_density(p, x));
            num.push(
                log_integrate(
                    |t| {
                        let off = t - a;
                        if off > 0.0 {
                            p.log_eval(t) + log_norm_pdf((x - t) / s) - ln_s + off.ln()
                        } else {
                            f64::NEG_INFINITY
                        }
                    },
                    p.lo,
                    p.hi,
                    &self.kernel_breaks(x),
                    &self.opts(),
                )
                .log_value,
            );
        }
        let ln_den = log_sum_exp(&den);
        let ln_num = log_sum_exp(&num);
        let shift = if ln_num == f64::NEG_INFINITY { 0.0 } else { (ln_num - ln_den).exp() };
        -((x - a) - shift) / self.delta
    }

    /// `ln F(x)` (left) or `ln(1 - F(x))` (right).
    pub fn tail_mass(&self, x: f64, side: Side) -> f64 {
        let s = self.sigma;
        let sg = side.sign();
        // left: Φ((x - t)/σ); right: Φ((t - x)/σ)
        let mut terms: Vec<f64> =
            self.base.atom_list().iter().map(|a| a.w.ln() + log_ndtr(-sg * (x - a.x) / s)).collect();
        for p in self.base.piece_list() {
            terms.push(
                log_integrate(
                    |t| p.log_eval(t) + log_ndtr(-sg * (x - t) / s),
                    p.lo,
                    p.hi,
                    &self.kernel_breaks(x),
                    &self.opts(),
                )
                .log_value,
            );
        }
        log_sum_exp(&terms).min(0.0)
    }

    /// The unique `m` with `F(m) = 1/2`.
    pub fn median(&self) -> f64 {
        let (a, b) = self.base.support();
        let (mut lo, mut hi) = (a - 20.0 * self.sigma, b + 20.0 * self.sigma);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.tail_mass(mid, Side::Left) >= self.tail_mass(mid, Side::Right) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Support points and piece ends inside `(lo, hi)`, used to seed panels.
    fn support_breaks(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut v: Vec<f64> = self.base.atom_list().iter().map(|a| a.x).collect();
        v.extend(self.base.break_points());
        v.retain(|&t| t > lo && t < hi);
        v
    }

    /// `ln ∫ 1/p` over `[x, y]` (either order); `-inf` when `x == y`.
    pub fn log_reciprocal_segment(&self, x: f64, y: f64) -> f64 {
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        if lo == hi {
            return f64::NEG_INFINITY;
        }
        let opts = QuadOptions::with_rel_tol(self.quadrature_tol.max(1e-11));
        log_integrate(|t| -self.log_density(t), lo, hi, &self.support_breaks(lo, hi), &opts).log_value
    }

    /// `ln ∫ 1/p(t) dt` between `x` and `m`.
    pub fn reciprocal_integral(&self, x: f64, m: f64) -> f64 {
        self.log_reciprocal_segment(x, m)
    }

    /// The three tail quotients at `x`, which tend to one as `|x| → ∞`.
    pub fn asymptotic_ratios(&self, x: f64, side: Side) -> Result<AsymptoticReport, MollifyError> {
        let (a, b) = self.base.support();
        let outside = match side {
            Side::Left => x < a,
            Side::Right => x > b,
        };
        if !outside || !x.is_finite() {
            return Err(MollifyError::InsideSupport { x, side, lo: a, hi: b });
        }
        let m = self.median();
        let lp = self.log_density(x);
        let ln_scale = self.delta.ln() - x.abs().ln();
        let ratio_score = self.delta * self.log_density_ratio_grad(x) / (-x);
        let ratio_tail = (self.tail_mass(x, side) - (ln_scale + lp)).exp();
        let ratio_reciprocal = (self.reciprocal_integral(x, m) - (ln_scale - lp)).exp();
        Ok(AsymptoticReport { x, side, ratio_score, ratio_tail, ratio_reciprocal })
    }
}

/// Quotients of exact quantities by their large-`|x|` asymptotics:
/// `δp'/(-xp)`, tail mass over `(δ/|x|) p`, and `∫ 1/p` between `x` and
/// the median over `δ/(|x| p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticReport {
    pub x: f64,
    pub side: Side,
    pub ratio_score: f64,
    pub ratio_tail: f64,
    pub ratio_reciprocal: f64,
}

impl AsymptoticReport {
    pub fn max_deviation(&self) -> f64 {
        [self.ratio_score, self.ratio_tail, self.ratio_reciprocal].iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max)
    }
}
