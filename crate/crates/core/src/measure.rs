//! Compactly supported probability measures on the line and the entropy
//! functionals evaluated against them.
//!
//! A [`Measure1D`] is a finite list of atoms plus a finite list of
//! polynomial density pieces with disjoint interiors. Everything the other
//! modules need (mass, CDF, quantiles, convolution kernels) can be computed
//! exactly on atoms and by quadrature on pieces.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad::{integrate, QuadOptions};

/// Largest supported polynomial degree for density pieces.
pub const MAX_DEGREE: usize = 6;

/// Mass mismatch that is silently rescaled away.
pub const MASS_RESCALE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("density is negative on [{lo}, {hi}] (minimum {min:e} at t = {at})")]
    NegativeDensity { lo: f64, hi: f64, min: f64, at: f64 },
    #[error("total mass {0} differs from 1 by more than 1e-9")]
    MassMismatch(f64),
    #[error("pieces [{0}, {1}] and [{2}, {3}] overlap")]
    OverlappingPieces(f64, f64, f64, f64),
    #[error("invalid measure description: {0}")]
    InvalidSpec(String),
    #[error("integrand is not integrable against the measure: {0}")]
    NonIntegrable(String),
    #[error("integrand is negative ({value:e} at t = {at})")]
    NegativeInput { value: f64, at: f64 },
    #[error("LSI constant must be positive, got {0}")]
    NonPositiveConstant(f64),
    #[error("gap ({lo}, {hi}) carries mass {mass:e}")]
    GapHasMass { lo: f64, hi: f64, mass: f64 },
    #[error("one side of the gap ({lo}, {hi}) has no mass")]
    EmptySide { lo: f64, hi: f64 },
}

pub type Result<T> = std::result::Result<T, MeasureError>;

/// JSON form of a measure:
/// `{"atoms":[{"x":-1.0,"w":0.5}],"pieces":[{"lo":0.0,"hi":1.0,"coeffs":[1.0]}]}`.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    #[serde(default)]
    pub atoms: Vec<AtomSpec>,
    #[serde(default)]
    pub pieces: Vec<PieceSpec>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub x: f64,
    pub w: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PieceSpec {
    pub lo: f64,
    pub hi: f64,
    pub coeffs: Vec<f64>,
}

impl MeasureSpec {
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Atom {
    pub x: f64,
    pub w: f64,
}

/// Density `t ↦ Σ c_k t^k` on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub coeffs: Vec<f64>,
}

impl Piece {
    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    fn eval_derivative(&self, t: f64) -> f64 {
        self.coeffs.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, &c)| acc * t + k as f64 * c)
    }

    /// `ln` of the density, `-inf` where it vanishes.
    pub fn log_eval(&self, t: f64) -> f64 {
        let v = self.eval(t);
        if v > 0.0 {
            v.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn antiderivative(&self, t: f64) -> f64 {
        self.coeffs.iter().enumerate().rev().fold(0.0, |acc, (k, &c)| acc * t + c / (k + 1) as f64) * t
    }

    /// Exact mass of the piece restricted to `[lo, hi] ∩ [from, to]`.
    pub fn mass_between(&self, from: f64, to: f64) -> f64 {
        let l = from.max(self.lo);
        let h = to.min(self.hi);
        if h <= l {
            return 0.0;
        }
        self.antiderivative(h) - self.antiderivative(l)
    }

    pub fn mass(&self) -> f64 {
        self.mass_between(self.lo, self.hi)
    }

    /// Minimum of the polynomial on its interval and where it is attained.
    fn minimum(&self) -> (f64, f64) {
        const GRID: usize = 512;
        let h = (self.hi - self.lo) / GRID as f64;
        let mut best = (self.eval(self.lo), self.lo);
        let mut consider = |t: f64| {
            let v = self.eval(t);
            if v < best.0 {
                best = (v, t);
            }
        };
        consider(self.hi);
        let mut prev_t = self.lo;
        let mut prev_d = self.eval_derivative(prev_t);
        for i in 1..=GRID {
            let t = if i == GRID { self.hi } else { self.lo + h * i as f64 };
            consider(t);
            let d = self.eval_derivative(t);
            if prev_d < 0.0 && d >= 0.0 {
                // local minimum of the polynomial in (prev_t, t]
                let (mut a, mut b) = (prev_t, t);
                for _ in 0..80 {
                    let m = 0.5 * (a + b);
                    if self.eval_derivative(m) < 0.0 {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                consider(0.5 * (a + b));
            }
            prev_t = t;
            prev_d = d;
        }
        best
    }
}

/// A validated compactly supported probability measure on ℝ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measure1D {
    atoms: Vec<Atom>,
    pieces: Vec<Piece>,
    support: (f64, f64),
}

/// Validates a description and produces a [`Measure1D`].
///
/// Total mass within `1e-9` of one is rescaled to exactly one (up to
/// rounding); anything further off is rejected.
pub fn build_measure(spec: &MeasureSpec) -> Result<Measure1D> {
    if spec.atoms.is_empty() && spec.pieces.is_empty() {
        return Err(MeasureError::InvalidSpec("measure has neither atoms nor pieces".into()));
    }
    let mut atoms = Vec::with_capacity(spec.atoms.len());
    for a in &spec.atoms {
        if !a.x.is_finite() || !a.w.is_finite() {
            return Err(MeasureError::InvalidSpec(format!("non-finite atom ({}, {})", a.x, a.w)));
        }
        if a.w < 0.0 {
            return Err(MeasureError::InvalidSpec(format!("negative atom weight {} at {}", a.w, a.x)));
        }
        if a.w > 0.0 {
            atoms.push(Atom { x: a.x, w: a.w });
        }
    }
    let mut pieces = Vec::with_capacity(spec.pieces.len());
    for p in &spec.pieces {
        if !(p.lo.is_finite() && p.hi.is_finite() && p.lo < p.hi) {
            return Err(MeasureError::InvalidSpec(format!("bad piece interval [{}, {}]", p.lo, p.hi)));
        }
        if p.coeffs.is_empty() || p.coeffs.len() > MAX_DEGREE + 1 {
            return Err(MeasureError::InvalidSpec(format!(
                "piece [{}, {}] needs 1..={} coefficients, got {}",
                p.lo,
                p.hi,
                MAX_DEGREE + 1,
                p.coeffs.len()
            )));
        }
        if p.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(MeasureError::InvalidSpec(format!("non-finite coefficient on [{}, {}]", p.lo, p.hi)));
        }
        let piece = Piece { lo: p.lo, hi: p.hi, coeffs: p.coeffs.clone() };
        let (min, at) = piece.minimum();
        let scale = piece.coeffs.iter().map(|c| c.abs()).fold(0.0, f64::max)
            * p.lo.abs().max(p.hi.abs()).max(1.0).powi(piece.coeffs.len() as i32 - 1);
        if min < -1e-12 * scale.max(1.0) {
            return Err(MeasureError::NegativeDensity { lo: p.lo, hi: p.hi, min, at });
        }
        pieces.push(piece);
    }
    pieces.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    for w in pieces.windows(2) {
        if w[1].lo < w[0].hi {
            return Err(MeasureError::OverlappingPieces(w[0].lo, w[0].hi, w[1].lo, w[1].hi));
        }
    }
    atoms.sort_by(|a, b| a.x.total_cmp(&b.x));

    let mass: f64 = atoms.iter().map(|a| a.w).sum::<f64>() + pieces.iter().map(Piece::mass).sum::<f64>();
    if !((mass - 1.0).abs() <= MASS_RESCALE_TOL) {
        return Err(MeasureError::MassMismatch(mass));
    }
    for a in &mut atoms {
        a.w /= mass;
    }
    for p in &mut pieces {
        for c in &mut p.coeffs {
            *c /= mass;
        }
    }

    let lo = atoms.iter().map(|a| a.x).chain(pieces.iter().map(|p| p.lo)).fold(f64::INFINITY, f64::min);
    let hi = atoms.iter().map(|a| a.x).chain(pieces.iter().map(|p| p.hi)).fold(f64::NEG_INFINITY, f64::max);
    Ok(Measure1D { atoms, pieces, support: (lo, hi) })
}

impl Measure1D {
    pub fn point_mass(x: f64) -> Self {
        build_measure(&MeasureSpec { atoms: vec![AtomSpec { x, w: 1.0 }], pieces: vec![] })
            .expect("point mass is valid")
    }

    /// Equal-weight atoms at `-1` and `+1`.
    pub fn two_point() -> Self {
        Self::atoms(&[(-1.0, 0.5), (1.0, 0.5)]).expect("two-point measure is valid")
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        build_measure(&MeasureSpec { atoms: vec![], pieces: vec![PieceSpec { lo, hi, coeffs: vec![1.0 / (hi - lo)] }] })
    }

    pub fn atoms(list: &[(f64, f64)]) -> Result<Self> {
        build_measure(&MeasureSpec { atoms: list.iter().map(|&(x, w)| AtomSpec { x, w }).collect(), pieces: vec![] })
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, Box<dyn std::error::Error + Send + Sync>> {
        let spec = MeasureSpec::from_json(text)?;
        Ok(build_measure(&spec)?)
    }

    pub fn to_spec(&self) -> MeasureSpec {
        MeasureSpec {
            atoms: self.atoms.iter().map(|a| AtomSpec { x: a.x, w: a.w }).collect(),
            pieces: self.pieces.iter().map(|p| PieceSpec { lo: p.lo, hi: p.hi, coeffs: p.coeffs.clone() }).collect(),
        }
    }

    pub fn atom_list(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn piece_list(&self) -> &[Piece] {
        &self.pieces
    }

    /// `(a, b)` with `supp μ ⊆ [a, b]`.
    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.w).sum::<f64>() + self.pieces.iter().map(Piece::mass).sum::<f64>()
    }

    /// The same measure shifted by `shift`.
    pub fn translated(&self, shift: f64) -> Self {
        let spec = MeasureSpec {
            atoms: self.atoms.iter().map(|a| AtomSpec { x: a.x + shift, w: a.w }).collect(),
            pieces: self
                .pieces
                .iter()
                .map(|p| PieceSpec { lo: p.lo + shift, hi: p.hi + shift, coeffs: shift_poly(&p.coeffs, shift) })
                .collect(),
        };
        build_measure(&spec).expect("translation preserves validity")
    }

    /// `μ((-∞, x])`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < self.support.0 {
            return 0.0;
        }
        if x >= self.support.1 {
            return 1.0;
        }
        let atoms: f64 = self.atoms.iter().filter(|a| a.x <= x).map(|a| a.w).sum();
        let pieces: f64 = self.pieces.iter().map(|p| p.mass_between(p.lo, x)).sum();
        (atoms + pieces).clamp(0.0, 1.0)
    }

    /// `μ((lo, hi))`, open interval.
    pub fn mass_open(&self, lo: f64, hi: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().filter(|a| a.x > lo && a.x < hi).map(|a| a.w).sum();
        let pieces: f64 = self.pieces.iter().map(|p| p.mass_between(lo, hi)).sum();
        atoms + pieces
    }

    /// Generalized inverse `inf { x : F(x) >= u }`.
    pub fn quantile(&self, u: f64) -> f64 {
        let (mut lo, mut hi) = self.support;
        if u <= 0.0 {
            return lo;
        }
        if self.cdf(lo) >= u {
            return lo;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) >= u {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// Points where piece densities start or stop, for quadrature seeding.
    pub fn break_points(&self) -> Vec<f64> {
        self.pieces.iter().flat_map(|p| [p.lo, p.hi]).collect()
    }

    /// `∫ h dμ`: exact sum over atoms, adaptive quadrature over pieces.
    pub fn integrate<F: Fn(f64) -> f64>(&self, h: F, breaks: &[f64]) -> f64 {
        let opts = QuadOptions { rel_tol: 1e-13, abs_tol: 1e-16, ..QuadOptions::default() };
        let atoms: f64 = self.atoms.iter().map(|a| a.w * h(a.x)).sum();
        let pieces: f64 =
            self.pieces.iter().map(|p| integrate(|t| h(t) * p.eval(t), p.lo, p.hi, breaks, &opts).value).sum();
        atoms + pieces
    }
}

/// Coefficients of `t ↦ P(t - shift)`.
fn shift_poly(coeffs: &[f64], shift: f64) -> Vec<f64> {
    // Horner-style Taylor shift
    let mut out = coeffs.to_vec();
    let n = out.len();
    for i in 0..n {
        for j in (i..n - 1).rev() {
            out[j] -= shift * out[j + 1];
        }
    }
    out
}

/// Shape of a [`TestFunction`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunctionKind {
    /// Linear interpolation between knots, constant outside; knot slopes unused.
    PiecewiseLinear,
    /// C¹ cubic Hermite interpolation of knot values and slopes, extended
    /// linearly with the end slopes outside the knot range.
    PiecewiseCubicSmooth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    pub x: f64,
    pub value: f64,
    pub slope: f64,
}

/// A test function `g` for the log-Sobolev inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub kind: TestFunctionKind,
    pub knots: Vec<Knot>,
}

impl TestFunction {
    pub fn new(kind: TestFunctionKind, knots: Vec<Knot>) -> Result<Self> {
        if knots.is_empty() {
            return Err(MeasureError::InvalidSpec("test function needs at least one knot".into()));
        }
        if knots.iter().any(|k| !(k.x.is_finite() && k.value.is_finite() && k.slope.is_finite())) {
            return Err(MeasureError::InvalidSpec("non-finite knot".into()));
        }
        if knots.windows(2).any(|w| w[1].x <= w[0].x) {
            return Err(MeasureError::InvalidSpec("knots must be strictly increasing".into()));
        }
        Ok(Self { kind, knots })
    }

    pub fn linear(points: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            TestFunctionKind::PiecewiseLinear,
            points.iter().map(|&(x, value)| Knot { x, value, slope: 0.0 }).collect(),
        )
    }

    pub fn cubic(points: &[(f64, f64, f64)]) -> Result<Self> {
        Self::new(
            TestFunctionKind::PiecewiseCubicSmooth,
            points.iter().map(|&(x, value, slope)| Knot { x, value, slope }).collect(),
        )
    }

    pub fn knot_positions(&self) -> Vec<f64> {
        self.knots.iter().map(|k| k.x).collect()
    }

    /// Index `i` with `knots[i].x <= x < knots[i+1].x`, or `None` outside.
    fn segment(&self, x: f64) -> Option<usize> {
        let k = &self.knots;
        if k.len() < 2 || x < k[0].x || x >= k[k.len() - 1].x {
            return None;
        }
        let i = k.partition_point(|kn| kn.x <= x);
        Some(i - 1)
    }

    pub fn value(&self, x: f64) -> f64 {
        let k = &self.knots;
        let first = k[0];
        let last = k[k.len() - 1];
        match self.segment(x) {
            None => match self.kind {
                TestFunctionKind::PiecewiseLinear => {
                    if x < first.x {
                        first.value
                    } else {
                        last.value
                    }
                }
                TestFunctionKind::PiecewiseCubicSmooth => {
                    if x < first.x {
                        first.value + first.slope * (x - first.x)
                    } else {
                        last.value + last.slope * (x - last.x)
                    }
                }
            },
            Some(i) => {
                let (l, r) = (k[i], k[i + 1]);
                let h = r.x - l.x;
                let s = (x - l.x) / h;
                match self.kind {
                    TestFunctionKind::PiecewiseLinear => l.value + s * (r.value - l.value),
                    TestFunctionKind::PiecewiseCubicSmooth => {
                        let s2 = s * s;
                        let s3 = s2 * s;
                        (2.0 * s3 - 3.0 * s2 + 1.0) * l.value
                            + (s3 - 2.0 * s2 + s) * h * l.slope
                            + (-2.0 * s3 + 3.0 * s2) * r.value
                            + (s3 - s2) * h * r.slope
                    }
                }
            }
        }
    }

    /// Derivative; for the piecewise-linear kind this is the right derivative
    /// at knots.
    pub fn derivative(&self, x: f64) -> f64 {
        let k = &self.knots;
        let first = k[0];
        let last = k[k.len() - 1];
        match self.segment(x) {
            None => match self.kind {
                TestFunctionKind::PiecewiseLinear => 0.0,
                TestFunctionKind::PiecewiseCubicSmooth => {
                    if x < first.x {
                        first.slope
                    } else {
                        last.slope
                    }
                }
            },
            Some(i) => {
                let (l, r) = (k[i], k[i + 1]);
                let h = r.x - l.x;
                let s = (x - l.x) / h;
                match self.kind {
                    TestFunctionKind::PiecewiseLinear => (r.value - l.value) / h,
                    TestFunctionKind::PiecewiseCubicSmooth => {
                        let s2 = s * s;
                        ((6.0 * s2 - 6.0 * s) * l.value
                            + (3.0 * s2 - 4.0 * s + 1.0) * h * l.slope
                            + (-6.0 * s2 + 6.0 * s) * r.value
                            + (3.0 * s2 - 2.0 * s) * h * r.slope)
                            / h
                    }
                }
            }
        }
    }
}

/// `Ent_μ(f) = ∫ f ln f dμ − ∫ f dμ · ln ∫ f dμ` for a nonnegative `f`.
///
/// Atoms use `0 · ln 0 = 0`; on density pieces `f` is clamped below at
/// `1e-300` before the logarithm.
pub fn entropy_functional<F: Fn(f64) -> f64>(m: &Measure1D, f: F, breaks: &[f64]) -> Result<f64> {
    let check = |t: f64| -> Result<f64> {
        let v = f(t);
        if !v.is_finite() {
            return Err(MeasureError::NonIntegrable(format!("f({t}) = {v}")));
        }
        if v < 0.0 {
            return Err(MeasureError::NegativeInput { value: v, at: t });
        }
        Ok(v)
    };
    for a in m.atom_list() {
        check(a.x)?;
    }
    // probe the pieces before integrating so sign errors surface as errors
    for p in m.piece_list() {
        for i in 0..=64 {
            check(p.lo + (p.hi - p.lo) * i as f64 / 64.0)?;
        }
    }
    let mut seeds = m.break_points();
    seeds.extend_from_slice(breaks);

    let x_log_x = |v: f64| if v > 0.0 { v * v.ln() } else { 0.0 };
    let atom_mass: f64 = m.atom_list().iter().map(|a| a.w * f(a.x)).sum();
    let atom_ent: f64 = m.atom_list().iter().map(|a| a.w * x_log_x(f(a.x))).sum();
    let opts = QuadOptions { rel_tol: 1e-13, abs_tol: 1e-16, ..QuadOptions::default() };
    let mut piece_mass = 0.0;
    let mut piece_ent = 0.0;
    for p in m.piece_list() {
        let mass = integrate(|t| f(t).max(0.0) * p.eval(t), p.lo, p.hi, &seeds, &opts);
        let ent = integrate(
            |t| {
                let v = f(t).max(0.0);
                v * v.max(1e-300).ln() * p.eval(t)
            },
            p.lo,
            p.hi,
            &seeds,
            &opts,
        );
        if !mass.value.is_finite() || !ent.value.is_finite() {
            return Err(MeasureError::NonIntegrable("quadrature diverged".into()));
        }
        piece_mass += mass.value;
        piece_ent += ent.value;
    }
    let mass = atom_mass + piece_mass;
    if mass <= 0.0 {
        return Ok(0.0);
    }
    let ent = atom_ent + piece_ent - mass * mass.ln();
    debug_assert!(ent >= -1e-10, "entropy {ent} violates Jensen");
    Ok(ent.max(0.0))
}

/// `∫ (g')² dμ`.
pub fn dirichlet_energy(m: &Measure1D, g: &TestFunction) -> f64 {
    let mut seeds = m.break_points();
    seeds.extend(g.knot_positions());
    m.integrate(|t| g.derivative(t).powi(2), &seeds)
}

/// `Ent_μ(g²) − 2c ∫ (g')² dμ`. A positive value shows `c` is not an LSI
/// constant for `μ`.
pub fn lsi_defect(m: &Measure1D, g: &TestFunction, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(MeasureError::NonPositiveConstant(c));
    }
    let ent = entropy_functional(m, |t| g.value(t).powi(2), &g.knot_positions())?;
    Ok(ent - 2.0 * c * dirichlet_energy(m, g))
}

/// Entropy and energy of the step witness `g = 0` left of the gap, `g = 1`
/// right of it, flat on the support.
///
/// Returns `(μ_R ln(1/μ_R), 0)` where `μ_R` is the mass right of the gap,
/// computed through the general entropy and energy functionals.
pub fn disconnected_witness(m: &Measure1D, gap: (f64, f64)) -> Result<(f64, f64)> {
    let (lo, hi) = gap;
    if !(lo < hi) {
        return Err(MeasureError::InvalidSpec(format!("gap ({lo}, {hi}) is empty")));
    }
    let inside = m.mass_open(lo, hi);
    if inside > 0.0 {
        return Err(MeasureError::GapHasMass { lo, hi, mass: inside });
    }
    let left = m.cdf(lo);
    if left <= 0.0 || left >= 1.0 {
        return Err(MeasureError::EmptySide { lo, hi });
    }
    let g = TestFunction::cubic(&[(lo, 0.0, 0.0), (hi, 1.0, 0.0)])?;
    let ent = entropy_functional(m, |t| g.value(t).powi(2), &[lo, hi])?;
    let energy = dirichlet_energy(m, &g);
    Ok((ent, energy))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform01() -> Measure1D {
        Measure1D::uniform(0.0, 1.0).unwrap()
    }

    #[test]
    fn builds_the_basic_examples() {
        let d = Measure1D::point_mass(0.0);
        assert_eq!(d.support(), (0.0, 0.0));
        let u = uniform01();
        assert!((u.total_mass() - 1.0).abs() < 1e-15);
        let tp = Measure1D::two_point();
        assert_eq!(tp.support(), (-1.0, 1.0));
        assert_eq!(tp.atom_list().len(), 2);
    }

    #[test]
    fn rejects_bad_specs() {
        let neg = MeasureSpec { atoms: vec![], pieces: vec![PieceSpec { lo: 0.0, hi: 1.0, coeffs: vec![-0.5, 3.0] }] };
        assert!(matches!(build_measure(&neg), Err(MeasureError::NegativeDensity { .. })));

        // interior dip: 3(t - 1/2)^2 * 4 - 0.01 has a negative minimum at 1/2
        let dip = MeasureSpec {
            atoms: vec![],
            pieces: vec![PieceSpec { lo: 0.0, hi: 1.0, coeffs: vec![3.0 - 0.01, -12.0, 12.0] }],
        };
        assert!(matches!(build_measure(&dip), Err(MeasureError::NegativeDensity { .. })));

        let heavy = MeasureSpec { atoms: vec![AtomSpec { x: 0.0, w: 1.1 }], pieces: vec![] };
        assert!(matches!(build_measure(&heavy), Err(MeasureError::MassMismatch(_))));

        let overlap = MeasureSpec {
            atoms: vec![],
            pieces: vec![
                PieceSpec { lo: 0.0, hi: 1.0, coeffs: vec![0.5] },
                PieceSpec { lo: 0.5, hi: 1.5, coeffs: vec![0.5] },
            ],
        };
        assert!(matches!(build_measure(&overlap), Err(MeasureError::OverlappingPieces(..))));
    }

    #[test]
    fn rescales_tiny_mass_error() {
        let spec = MeasureSpec {
            atoms: vec![AtomSpec { x: -1.0, w: 0.5 + 4e-10 }, AtomSpec { x: 1.0, w: 0.5 }],
            pieces: vec![],
        };
        let m = build_measure(&spec).unwrap();
        assert!((m.total_mass() - 1.0).abs() < 1e-15);
        assert!((m.cdf(1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn json_rejects_unknown_keys() {
        assert!(MeasureSpec::from_json(r#"{"atoms":[{"x":0.0,"w":1.0}],"extra":1}"#).is_err());
        assert!(MeasureSpec::from_json(r#"{"atoms":[{"x":0.0,"w":1.0,"z":2}]}"#).is_err());
        let m = Measure1D::from_json(r#"{"atoms":[{"x":-1.0,"w":0.5}],"pieces":[{"lo":0.0,"hi":1.0,"coeffs":[0.5]}]}"#)
            .unwrap();
        assert_eq!(m.support(), (-1.0, 1.0));
    }

    #[test]
    fn cdf_examples() {
        assert!((uniform01().cdf(0.25) - 0.25).abs() < 1e-15);
        assert_eq!(uniform01().cdf(-1.0), 0.0);
        assert_eq!(Measure1D::two_point().cdf(0.0), 0.5);
        // right-continuity at an atom
        assert_eq!(Measure1D::two_point().cdf(-1.0), 0.5);
        assert_eq!(Measure1D::two_point().cdf(-1.0 - 1e-12), 0.0);
    }

    #[test]
    fn quantile_of_mixed_measure() {
        let m = Measure1D::from_json(r#"{"atoms":[{"x":0.0,"w":0.5}],"pieces":[{"lo":1.0,"hi":2.0,"coeffs":[0.5]}]}"#)
            .unwrap();
        assert_eq!(m.quantile(0.3), 0.0);
        assert!((m.quantile(0.75) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn translation_moves_polynomials() {
        let m = Measure1D::from_json(r#"{"pieces":[{"lo":0.0,"hi":1.0,"coeffs":[0.0, 2.0]}]}"#).unwrap();
        let t = m.translated(3.0);
        assert_eq!(t.support(), (3.0, 4.0));
        assert!((t.cdf(3.5) - m.cdf(0.5)).abs() < 1e-13);
    }

    #[test]
    fn entropy_of_constant_is_zero() {
        for m in [uniform01(), Measure1D::two_point(), Measure1D::point_mass(2.0)] {
            let e = entropy_functional(&m, |_| 1.0, &[]).unwrap();
            assert!(e.abs() < 1e-14);
        }
    }

    #[test]
    fn entropy_of_linear_density_against_simpson() {
        // Simpson oracle on 10^6 + 1 points for ∫ 2t ln 2t dt on [0, 1]
        let n = 1_000_000usize;
        let h = 1.0 / n as f64;
        let g = |t: f64| if t > 0.0 { 2.0 * t * (2.0 * t).ln() } else { 0.0 };
        let mut s = g(0.0) + g(1.0);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(i as f64 * h);
        }
        let oracle = s * h / 3.0; // ∫ f dμ = 1, so the second term vanishes
        let e = entropy_functional(&uniform01(), |t| 2.0 * t, &[]).unwrap();
        assert!((e - oracle).abs() < 1e-8, "{e} vs {oracle}");
    }

    #[test]
    fn witness_on_two_point() {
        let (ent, energy) = disconnected_witness(&Measure1D::two_point(), (-1.0, 1.0)).unwrap();
        assert!((ent - 0.5 * std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(energy, 0.0);

        let skew = Measure1D::atoms(&[(-1.0, 0.9), (1.0, 0.1)]).unwrap();
        let (ent, energy) = disconnected_witness(&skew, (-1.0, 1.0)).unwrap();
        assert!((ent - 0.1 * 10f64.ln()).abs() < 1e-12);
        assert_eq!(energy, 0.0);
    }

    #[test]
    fn witness_on_split_uniform() {
        let m = Measure1D::from_json(
            r#"{"pieces":[{"lo":0.0,"hi":1.0,"coeffs":[0.5]},{"lo":2.0,"hi":3.0,"coeffs":[0.5]}]}"#,
        )
        .unwrap();
        let (ent, energy) = disconnected_witness(&m, (1.0, 2.0)).unwrap();
        assert!((ent - 0.5 * std::f64::consts::LN_2).abs() < 1e-12, "{ent}");
        assert!(energy.abs() < 1e-15);
        assert!(matches!(disconnected_witness(&m, (0.5, 2.0)), Err(MeasureError::GapHasMass { .. })));
        assert!(matches!(disconnected_witness(&m, (3.5, 4.0)), Err(MeasureError::EmptySide { .. })));
    }

    #[test]
    fn defect_examples() {
        let g = TestFunction::cubic(&[(-1.0, 0.0, 0.0), (1.0, 1.0, 0.0)]).unwrap();
        for c in [0.1, 1.0, 1e6] {
            let d = lsi_defect(&Measure1D::two_point(), &g, c).unwrap();
            assert!((d - 0.5 * std::f64::consts::LN_2).abs() < 1e-12);
        }
        let flat = TestFunction::linear(&[(0.0, 3.0)]).unwrap();
        assert!(lsi_defect(&uniform01(), &flat, 5.0).unwrap().abs() < 1e-13);
        assert!(lsi_defect(&uniform01(), &flat, 0.0).is_err());
    }

    #[test]
    fn defect_of_identity_on_uniform() {
        // Simpson oracle for Ent(t²) and ∫1 on [0,1]
        let n = 200_000usize;
        let h = 1.0 / n as f64;
        let f = |t: f64| if t > 0.0 { t * t * (t * t).ln() } else { 0.0 };
        let mut s = f(0.0) + f(1.0);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        let mean = 1.0 / 3.0;
        let ent = s * h / 3.0 - mean * f64::ln(mean);
        let oracle = ent - 2.0 * 10.0 * 1.0;
        let g = TestFunction::linear(&[(0.0, 0.0), (1.0, 1.0)]).unwrap();
        let d = lsi_defect(&uniform01(), &g, 10.0).unwrap();
        assert!((d - oracle).abs() < 1e-9, "{d} vs {oracle}");
        assert!(d <= 0.0);
    }

    #[test]
    fn hermite_interpolates_values_and_slopes() {
        let g = TestFunction::cubic(&[(0.0, 1.0, 2.0), (1.0, -1.0, 0.5), (3.0, 0.0, 0.0)]).unwrap();
        assert!((g.value(1.0) + 1.0).abs() < 1e-15);
        assert!((g.derivative(1.0) - 0.5).abs() < 1e-14);
        let h = 1e-6;
        for &x in &[0.3, 1.7, 2.9, -0.5, 4.0] {
            let fd = (g.value(x + h) - g.value(x - h)) / (2.0 * h);
            assert!((fd - g.derivative(x)).abs() < 1e-7);
        }
    }
}
