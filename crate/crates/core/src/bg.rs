//! Bobkov–Götze functionals of mollified measures and the quantities built
//! on them: two-sided LSI brackets, small-δ blow-up scans, a detector for
//! densities whose functional diverges, and the Herbst tail bound.

use serde::Serialize;
use thiserror::Error;

use crate::measure::Measure1D;
use crate::mollify::{MollifiedDensity, MollifyError, Side};
use crate::quad::{log_integrate, QuadOptions};
use crate::special::{log_add_exp, log_ndtr, LN_SQRT_2PI};

/// Lower bracket factor: `c >= (D0 + D1) / LOWER_DIVISOR`.
pub const LOWER_DIVISOR: f64 = 150.0;
/// Upper bracket factor: `c <= UPPER_FACTOR * (D0 + D1)`.
pub const UPPER_FACTOR: f64 = 468.0;
/// Points in the coarse scan on each side of the median.
pub const SCAN_POINTS: usize = 2048;
/// Local maxima of the scan that get refined.
pub const REFINED_MAXIMA: usize = 5;
/// Golden-section stopping width in `x`.
pub const SEARCH_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BgError {
    #[error("x = {x} is not on the {side:?} of the median {m}")]
    WrongSide { x: f64, m: f64, side: Side },
    #[error("measure support has no gap")]
    NoGap,
    #[error("invalid delta list: {0}")]
    InvalidDeltas(String),
    #[error("constant must be positive, got {0}")]
    NonPositiveConstant(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Mollify(#[from] MollifyError),
}

/// `ln[T(x) ln(1/T(x)) ∫ 1/p]` where `T` is the tail beyond `x` on `side`
/// and the integral runs between `x` and `m`.
pub fn bg_integrand(d: &MollifiedDensity, m: f64, x: f64, side: Side) -> Result<f64, BgError> {
    let ok = match side {
        Side::Left => x < m,
        Side::Right => x > m,
    };
    if !ok {
        return Err(BgError::WrongSide { x, m, side });
    }
    let lt = d.tail_mass(x, side);
    Ok(assemble(lt, d.reciprocal_integral(x, m)))
}

/// `ln T + ln(-ln T) + ln R`, `-inf` when `T = 1`.
fn assemble(log_tail: f64, log_recip: f64) -> f64 {
    if log_tail >= 0.0 {
        return f64::NEG_INFINITY;
    }
    log_tail + (-log_tail).ln() + log_recip
}

/// Which candidate produced a reported supremum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SupremumBranch {
    Interior,
    WindowEdge,
    TailLimit,
}

/// One side of the functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SideSupremum {
    pub value: f64,
    pub x_star: f64,
    pub interior_max: f64,
    pub edge_value: f64,
    pub branch: SupremumBranch,
}

/// Both functionals, the resulting LSI bracket, and the search settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BGReport {
    pub delta: f64,
    pub median: f64,
    #[serde(rename = "D0")]
    pub d0: f64,
    #[serde(rename = "D1")]
    pub d1: f64,
    pub x_star_0: f64,
    pub x_star_1: f64,
    pub c_lower: f64,
    pub c_upper: f64,
    pub tail_limit_estimate: f64,
    pub edge_value_0: f64,
    pub edge_value_1: f64,
    pub branch_0: SupremumBranch,
    pub branch_1: SupremumBranch,
    pub search_window: (f64, f64),
    pub quadrature_tol: f64,
    pub search_tol: f64,
}

impl BGReport {
    pub const CSV_HEADER: &'static str = "delta,D0,D1,x_star_0,x_star_1,c_lower,c_upper";

    pub fn d_total(&self) -> f64 {
        self.d0 + self.d1
    }

    pub fn contains(&self, c: f64) -> bool {
        self.c_lower <= c && c <= self.c_upper
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.delta, self.d0, self.d1, self.x_star_0, self.x_star_1, self.c_lower, self.c_upper
        )
    }
}

/// Search half-width `(b - a) + 30√δ`.
pub fn search_half_width(d: &MollifiedDensity) -> f64 {
    let (a, b) = d.base().support();
    (b - a) + 30.0 * d.sigma()
}

/// Supremum of the integrand on one side of `m`, over distances `(0, w]`.
fn side_supremum(d: &MollifiedDensity, m: f64, w: f64, side: Side) -> SideSupremum {
    let sg = side.sign();
    let h = w / SCAN_POINTS as f64;
    let at = |u: f64| m + sg * u;
    // log ∫ 1/p from m out to distance u_j, accumulated segment by segment
    let mut log_recip = vec![f64::NEG_INFINITY; SCAN_POINTS + 1];
    let mut values = vec![f64::NEG_INFINITY; SCAN_POINTS + 1];
    for j in 1..=SCAN_POINTS {
        let seg = d.log_reciprocal_segment(at((j - 1) as f64 * h), at(j as f64 * h));
        log_recip[j] = log_add_exp(log_recip[j - 1], seg);
        values[j] = assemble(d.tail_mass(at(j as f64 * h), side), log_recip[j]);
    }

    let mut peaks: Vec<usize> = (1..=SCAN_POINTS)
        .filter(|&j| values[j] >= values[j - 1] && (j == SCAN_POINTS || values[j] >= values[j + 1]))
        .collect();
    peaks.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    peaks.truncate(REFINED_MAXIMA);

    let mut best = (f64::NEG_INFINITY, m);
    for &j in &peaks {
        let lo = (j - 1) as f64 * h;
        let hi = if j == SCAN_POINTS { j as f64 * h } else { (j + 1) as f64 * h };
        let base = log_recip[j - 1];
        let f = |u: f64| {
            let r = log_add_exp(base, d.log_reciprocal_segment(at(lo), at(u)));
            assemble(d.tail_mass(at(u), side), r)
        };
        let (u, v) = golden_max(f, lo, hi, SEARCH_TOL);
        let (u, v) = if values[j] > v { (j as f64 * h, values[j]) } else { (u, v) };
        let x = at(u);
        // values are logs, so a 1e-12 window is a relative tie; ties go to the smaller abscissa
        let better = v > best.0 + 1e-12 || ((v - best.0).abs() <= 1e-12 && x < best.1);
        if better {
            best = (v, x);
        }
    }

    let interior_max = best.0.exp();
    let edge_value = values[SCAN_POINTS].exp();
    let tail_limit = 0.5 * d.delta();
    let (value, x_star, branch) = if interior_max >= edge_value && interior_max >= tail_limit {
        (interior_max, best.1, SupremumBranch::Interior)
    } else if edge_value >= tail_limit {
        (edge_value, at(w), SupremumBranch::WindowEdge)
    } else {
        (tail_limit, at(w), SupremumBranch::TailLimit)
    };
    SideSupremum { value, x_star, interior_max, edge_value, branch }
}

/// Maximizes a unimodal-on-bracket function by golden-section search.
fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut e = a + r * (b - a);
    let mut fc = f(c);
    let mut fe = f(e);
    while (b - a) > tol {
        if fc >= fe {
            b = e;
            e = c;
            fe = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + r * (b - a);
            fe = f(e);
        }
    }
    if fc >= fe {
        (c, fc)
    } else {
        (e, fe)
    }
}

/// Evaluates both functionals and the bracket `[(D0+D1)/150, 468(D0+D1)]`.
pub fn compute_bg(d: &MollifiedDensity) -> BGReport {
    let m = d.median();
    let w = search_half_width(d);
    let left = side_supremum(d, m, w, Side::Left);
    let right = side_supremum(d, m, w, Side::Right);
    let total = left.value + right.value;
    BGReport {
        delta: d.delta(),
        median: m,
        d0: left.value,
        d1: right.value,
        x_star_0: left.x_star,
        x_star_1: right.x_star,
        c_lower: total / LOWER_DIVISOR,
        c_upper: UPPER_FACTOR * total,
        tail_limit_estimate: 0.5 * d.delta(),
        edge_value_0: left.edge_value,
        edge_value_1: right.edge_value,
        branch_0: left.branch,
        branch_1: right.branch,
        search_window: (m - w, m + w),
        quadrature_tol: d.quadrature_tol(),
        search_tol: SEARCH_TOL,
    }
}

/// `log(D0 + D1)` across a decreasing list of variances for a gapped
/// measure, with a least-squares fit against `1/δ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupScan {
    pub deltas: Vec<f64>,
    pub log_d_totals: Vec<f64>,
    pub reports: Vec<BGReport>,
    pub gap: (f64, f64),
    pub fitted_slope_vs_inv_delta: f64,
    /// Slope after removing the `δ^{3/2}` prefactor of the asymptotic rate.
    pub prefactor_corrected_slope: f64,
    pub theoretical_exponent: f64,
}

impl BlowupScan {
    /// `Some(slope >= 0.9 · exponent)` once the grid reaches `δ <= gap²/80`;
    /// `None` while the grid is too coarse for the check to apply.
    pub fn meets_rate(&self) -> Option<bool> {
        let min = self.deltas.iter().copied().fold(f64::INFINITY, f64::min);
        let width = self.gap.1 - self.gap.0;
        if min <= width * width / 80.0 {
            Some(self.fitted_slope_vs_inv_delta >= 0.9 * self.theoretical_exponent)
        } else {
            None
        }
    }

    pub fn strictly_increasing(&self) -> bool {
        self.log_d_totals.windows(2).all(|w| w[1] > w[0])
    }
}

/// Widest interval `(b, c)` between support components carrying no mass.
pub fn largest_gap(m: &Measure1D) -> Option<(f64, f64)> {
    let mut comps: Vec<(f64, f64)> = m.atom_list().iter().map(|a| (a.x, a.x)).collect();
    comps.extend(m.piece_list().iter().map(|p| (p.lo, p.hi)));
    comps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best: Option<(f64, f64)> = None;
    let mut reach = comps[0].1;
    for &(lo, hi) in &comps[1..] {
        if lo > reach && best.is_none_or(|(b, c)| lo - reach > c - b) {
            best = Some((reach, lo));
        }
        reach = reach.max(hi);
    }
    best
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

pub fn blowup_scan(m: &Measure1D, deltas: &[f64]) -> Result<BlowupScan, BgError> {
    if deltas.len() < 2 {
        return Err(BgError::InvalidDeltas("need at least 2 deltas for a slope".into()));
    }
    if deltas.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
        return Err(BgError::InvalidDeltas("deltas must be positive".into()));
    }
    if deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(BgError::InvalidDeltas("deltas must be strictly decreasing".into()));
    }
    let gap = largest_gap(m).ok_or(BgError::NoGap)?;
    let mut reports = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        reports.push(compute_bg(&MollifiedDensity::new(m.clone(), delta)?));
    }
    let log_d_totals: Vec<f64> = reports.iter().map(|r| r.d_total().ln()).collect();
    let inv: Vec<f64> = deltas.iter().map(|d| 1.0 / d).collect();
    let corrected: Vec<f64> = log_d_totals.iter().zip(deltas).map(|(l, d)| l - 1.5 * d.ln()).collect();
    Ok(BlowupScan {
        deltas: deltas.to_vec(),
        fitted_slope_vs_inv_delta: least_squares_slope(&inv, &log_d_totals),
        prefactor_corrected_slope: least_squares_slope(&inv, &corrected),
        log_d_totals,
        reports,
        gap,
        theoretical_exponent: (gap.1 - gap.0).powi(2) / 8.0,
    })
}

/// A density on the whole line known in closed form, for checking whether
/// the right-hand functional stays bounded.
pub trait ClosedFormDensity {
    fn log_pdf(&self, x: f64) -> f64;
    /// `ln(1 - F(x))`.
    fn log_sf(&self, x: f64) -> f64;

    fn median(&self) -> f64 {
        let (mut lo, mut hi) = (-50.0, 50.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.log_sf(mid) > -std::f64::consts::LN_2 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// `ln[(1-F) ln(1/(1-F)) ∫_m^x 1/p]` for `x > m`.
    fn log_right_integrand(&self, x: f64) -> f64 {
        let m = self.median();
        let r = log_integrate(|t| -self.log_pdf(t), m, x, &[], &QuadOptions::with_rel_tol(1e-10)).log_value;
        assemble(self.log_sf(x), r)
    }
}

/// Law of `E + Z` with `E ~ Exp(1)`, `Z ~ N(0, 1)`:
/// `p(x) = e^{-x+1/2} Φ(x - 1)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpGaussConvolution;

impl ClosedFormDensity for ExpGaussConvolution {
    fn log_pdf(&self, x: f64) -> f64 {
        -x + 0.5 + log_ndtr(x - 1.0)
    }

    fn log_sf(&self, x: f64) -> f64 {
        log_add_exp(log_ndtr(-x), -x + 0.5 + log_ndtr(x - 1.0))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StandardGaussian;

impl ClosedFormDensity for StandardGaussian {
    fn log_pdf(&self, x: f64) -> f64 {
        -0.5 * x * x - LN_SQRT_2PI
    }

    fn log_sf(&self, x: f64) -> f64 {
        log_ndtr(-x)
    }

    fn median(&self) -> f64 {
        0.0
    }
}

/// `p(x) ∝ exp(-x²/2 - x⁴)`, lighter than Gaussian in both tails.
#[derive(Debug, Clone, Copy)]
pub struct QuarticDensity {
    log_norm: f64,
}

impl QuarticDensity {
    fn log_kernel(x: f64) -> f64 {
        -0.5 * x * x - x.powi(4)
    }

    pub fn new() -> Self {
        let z = log_integrate(Self::log_kernel, -8.0, 8.0, &[0.0], &QuadOptions::with_rel_tol(1e-13));
        Self { log_norm: z.log_value }
    }
}

impl Default for QuarticDensity {
    fn default() -> Self {
        Self::new()
    }
}

impl ClosedFormDensity for QuarticDensity {
    fn log_pdf(&self, x: f64) -> f64 {
        Self::log_kernel(x) - self.log_norm
    }

    fn log_sf(&self, x: f64) -> f64 {
        let opts = QuadOptions::with_rel_tol(1e-13);
        if x >= 0.0 {
            log_integrate(Self::log_kernel, x, x + 8.0, &[], &opts).log_value - self.log_norm
        } else {
            let left = log_integrate(Self::log_kernel, x - 8.0, x, &[], &opts).log_value - self.log_norm;
            crate::special::log_sub_exp(0.0, left)
        }
    }

    fn median(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Bounded,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnboundedReport {
    pub verdict: Verdict,
    /// `(x, integrand)` pairs along the probe schedule.
    pub witness: Vec<(f64, f64)>,
}

/// Probe abscissae used by default.
pub const DEFAULT_PROBES: [f64; 4] = [10.0, 20.0, 40.0, 80.0];

/// Evaluates the right-hand integrand along `probes` and calls it
/// unbounded when every value at least doubles the previous one.
pub fn unbounded_detector<D: ClosedFormDensity + ?Sized>(density: &D, probes: &[f64]) -> UnboundedReport {
    let witness: Vec<(f64, f64)> = probes.iter().map(|&x| (x, density.log_right_integrand(x).exp())).collect();
    let doubling = witness.len() >= 2 && witness.windows(2).all(|w| w[1].1 >= 2.0 * w[0].1);
    UnboundedReport { verdict: if doubling { Verdict::Unbounded } else { Verdict::Bounded }, witness }
}

/// `2 exp(-λ² / (2c·lip²))`, capped at 2.
pub fn herbst_bound(c: f64, lip: f64, lambda: f64) -> Result<f64, BgError> {
    if !(c > 0.0) {
        return Err(BgError::NonPositiveConstant(c));
    }
    if !(lip > 0.0) {
        return Err(BgError::InvalidArgument(format!("Lipschitz constant must be positive, got {lip}")));
    }
    if !(lambda >= 0.0) {
        return Err(BgError::InvalidArgument(format!("deviation must be nonnegative, got {lambda}")));
    }
    Ok((2.0 * (-lambda * lambda / (2.0 * c * lip * lip)).exp()).min(2.0))
}
