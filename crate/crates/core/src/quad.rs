//! Globally adaptive Gauss–Legendre quadrature.
//!
//! Each panel is integrated with a 15-point Gauss–Legendre rule and again on
//! its two halves; the difference of the two estimates is the panel's error
//! estimate. The panel with the largest estimated error is bisected until the
//! summed error falls below the requested relative tolerance.
//!
//! [`log_integrate`] does the same thing for integrands supplied as
//! `ln f(t)`: every panel factors out its own maximum before summing, so
//! integrands like `exp(t²/2δ)` over long intervals never overflow.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use crate::special::{log_add_exp, log_sub_exp};

const GL_POINTS: usize = 15;

/// Nodes and weights of the `GL_POINTS`-point Gauss–Legendre rule on [-1, 1].
fn gauss_legendre() -> &'static ([f64; GL_POINTS], [f64; GL_POINTS]) {
    static RULE: OnceLock<([f64; GL_POINTS], [f64; GL_POINTS])> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_POINTS;
        let mut nodes = [0.0; GL_POINTS];
        let mut weights = [0.0; GL_POINTS];
        for i in 0..n {
            // Tricomi initial guess, then Newton on P_n
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let k = k as f64;
                    let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    })
}

/// Settings shared by both integrators.
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    /// Target for `total_error / |total|`.
    pub rel_tol: f64,
    /// Absolute error floor for the linear-scale integrator.
    pub abs_tol: f64,
    /// Maximum bisection depth of a single panel.
    pub max_depth: u32,
    /// Hard cap on the number of live panels.
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-12, abs_tol: 0.0, max_depth: 60, max_panels: 4000 }
    }
}

impl QuadOptions {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Self { rel_tol, ..Self::default() }
    }
}

/// Result of a log-space integration.
#[derive(Debug, Clone, Copy)]
pub struct LogIntegral {
    /// `ln ∫ f`.
    pub log_value: f64,
    /// `ln` of the estimated absolute error.
    pub log_error: f64,
    /// Whether the tolerance was met before a depth or panel limit.
    pub converged: bool,
}

impl LogIntegral {
    pub fn relative_error(&self) -> f64 {
        if self.log_value == f64::NEG_INFINITY {
            0.0
        } else {
            (self.log_error - self.log_value).exp()
        }
    }
}

fn gl_log<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (nodes, weights) = gauss_legendre();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut terms = [f64::NEG_INFINITY; GL_POINTS];
    let mut max = f64::NEG_INFINITY;
    for i in 0..GL_POINTS {
        let v = f(mid + half * nodes[i]);
        let v = if v.is_nan() { f64::NEG_INFINITY } else { v };
        terms[i] = v + weights[i].ln();
        max = max.max(terms[i]);
    }
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s: f64 = terms.iter().map(|&t| (t - max).exp()).sum();
    max + s.ln() + half.ln()
}

/// `ln((b - a) f(endpoint))` when `ln f` rises by more than 10 between the
/// outermost half-panel node and an endpoint, `-inf` otherwise.
fn edge_spike<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (nodes, _) = gauss_legendre();
    let outer = nodes.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let off = 0.25 * (b - a) * (1.0 - outer);
    let clean = |v: f64| if v.is_nan() { f64::NEG_INFINITY } else { v };
    let mut out = f64::NEG_INFINITY;
    for (end, inner) in [(a, a + off), (b, b - off)] {
        let fe = clean(f(end));
        if fe > clean(f(inner)) + 10.0 {
            out = out.max((b - a).ln() + fe);
        }
    }
    out
}

fn gl_linear<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (nodes, weights) = gauss_legendre();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut s = 0.0;
    for i in 0..GL_POINTS {
        s += weights[i] * f(mid + half * nodes[i]);
    }
    s * half
}

struct Panel {
    a: f64,
    b: f64,
    depth: u32,
    /// value of the refined (two-half) estimate
    value: f64,
    /// key for the heap: error on the same scale as `value`
    error: f64,
    /// the two half-panel estimates, reused on bisection
    halves: (f64, f64),
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Sorted, de-duplicated interior break points of `[a, b]`, endpoints included.
fn partition(a: f64, b: f64, breaks: &[f64], min_panels: usize) -> Vec<f64> {
    let mut pts: Vec<f64> = Vec::with_capacity(breaks.len() + min_panels + 1);
    for k in 0..=min_panels {
        pts.push(a + (b - a) * k as f64 / min_panels as f64);
    }
    pts.extend(breaks.iter().copied().filter(|&t| t > a && t < b));
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|x, y| (*x - *y).abs() <= 1e-15 * (1.0 + y.abs()));
    *pts.last_mut().unwrap() = b;
    pts[0] = a;
    pts
}

/// Integrates `exp(log_f)` over `[a, b]` and returns the logarithm of the
/// result. `breaks` seeds the initial partition (points outside `(a, b)` are
/// ignored). `a >= b` yields `-inf`.
pub fn log_integrate<F: Fn(f64) -> f64>(log_f: F, a: f64, b: f64, breaks: &[f64], opts: &QuadOptions) -> LogIntegral {
    if !(b > a) {
        return LogIntegral { log_value: f64::NEG_INFINITY, log_error: f64::NEG_INFINITY, converged: true };
    }
    let make = |a: f64, b: f64, depth: u32, whole: f64| -> Panel {
        let m = 0.5 * (a + b);
        let l = gl_log(&log_f, a, m);
        let r = gl_log(&log_f, m, b);
        let value = log_add_exp(l, r);
        let mut error = if whole >= value { log_sub_exp(whole, value) } else { log_sub_exp(value, whole) };
        // a spike hidden between an endpoint and the outermost nodes leaves
        // both estimates blind; a steep rise into the endpoint flags it
        let edge = edge_spike(&log_f, a, b);
        if edge > error {
            error = edge;
        }
        Panel { a, b, depth, value, error, halves: (l, r) }
    };

    let pts = partition(a, b, breaks, 2);
    let mut heap = BinaryHeap::new();
    for w in pts.windows(2) {
        let whole = gl_log(&log_f, w[0], w[1]);
        heap.push(make(w[0], w[1], 0, whole));
    }
    let log_tol = opts.rel_tol.ln();
    let mut finished: Vec<Panel> = Vec::new();
    let mut converged = true;
    loop {
        let total = heap.iter().chain(finished.iter()).fold(f64::NEG_INFINITY, |acc, p| log_add_exp(acc, p.value));
        let err = heap.iter().chain(finished.iter()).fold(f64::NEG_INFINITY, |acc, p| log_add_exp(acc, p.error));
        if err == f64::NEG_INFINITY || err <= log_tol + total {
            return LogIntegral { log_value: total, log_error: err, converged: true };
        }
        if heap.is_empty() {
            return LogIntegral { log_value: total, log_error: err, converged };
        }
        if heap.len() + finished.len() >= opts.max_panels {
            return LogIntegral { log_value: total, log_error: err, converged: false };
        }
        let worst = heap.pop().unwrap();
        if worst.depth >= opts.max_depth || (worst.b - worst.a) <= 4.0 * f64::EPSILON * worst.a.abs().max(worst.b.abs())
        {
            converged = false;
            finished.push(worst);
            continue;
        }
        let m = 0.5 * (worst.a + worst.b);
        heap.push(make(worst.a, m, worst.depth + 1, worst.halves.0));
        heap.push(make(m, worst.b, worst.depth + 1, worst.halves.1));
    }
}

/// Result of a linear-scale integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

/// Integrates `f` over `[a, b]` to `max(abs_tol, rel_tol·|I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], opts: &QuadOptions) -> Integral {
    if !(b > a) {
        return Integral { value: 0.0, error: 0.0, converged: true };
    }
    let make = |a: f64, b: f64, depth: u32, whole: f64| -> Panel {
        let m = 0.5 * (a + b);
        let l = gl_linear(&f, a, m);
        let r = gl_linear(&f, m, b);
        Panel { a, b, depth, value: l + r, error: (whole - (l + r)).abs(), halves: (l, r) }
    };
    let pts = partition(a, b, breaks, 2);
    let mut heap = BinaryHeap::new();
    for w in pts.windows(2) {
        let whole = gl_linear(&f, w[0], w[1]);
        heap.push(make(w[0], w[1], 0, whole));
    }
    let mut finished: Vec<Panel> = Vec::new();
    let mut converged = true;
    loop {
        let total: f64 = heap.iter().chain(finished.iter()).map(|p| p.value).sum();
        let err: f64 = heap.iter().chain(finished.iter()).map(|p| p.error).sum();
        let target = opts.abs_tol.max(opts.rel_tol * total.abs());
        if err <= target {
            return Integral { value: total, error: err, converged: true };
        }
        if heap.is_empty() {
            return Integral { value: total, error: err, converged };
        }
        if !err.is_finite() || heap.len() + finished.len() >= opts.max_panels {
            return Integral { value: total, error: err, converged: false };
        }
        let worst = heap.pop().unwrap();
        if worst.depth >= opts.max_depth {
            converged = false;
            finished.push(worst);
            continue;
        }
        let m = 0.5 * (worst.a + worst.b);
        heap.push(make(worst.a, m, worst.depth + 1, worst.halves.0));
        heap.push(make(m, worst.b, worst.depth + 1, worst.halves.1));
    }
}
