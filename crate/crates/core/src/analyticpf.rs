//! The entire-function family `F_a(z) = Σ_k B_k ∏_{j≠k} (1 - z/β_j)²` that
//! interpolates the partial sums `s_k` of a binary sequence at `β_k`,
//! together with its growth and derivative estimates, the increment
//! identity after `t = 1/x`, the window condition on antiderivatives, and
//! the finite part of Laurent polynomials.
//!
//! Coefficients and products are carried as sign plus log-magnitude: the
//! raw products leave the double range once `K` reaches a dozen or so.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::dd::Dd;
use crate::quad::{self, QuadError};
use crate::realfunc::{AnchoredAntiderivative, FunctionHandle};
use crate::summation::BinarySeq;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("base {base} must exceed 5")]
    BaseTooSmall { base: f64 },
    #[error("invalid truncation: {0}")]
    InvalidOrder(String),
    #[error("contour quadrature did not settle with {nodes} nodes")]
    QuadratureDivergence { nodes: usize },
    #[error(transparent)]
    Quad(#[from] QuadError),
}

/// `β_k = base^k`, `k = 1..=K`, with `g = log_base` and `W(t) = t^{2g(t)-1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaSequence {
    pub base: f64,
    pub betas: Vec<f64>,
}

impl BetaSequence {
    pub fn k(&self) -> usize {
        self.betas.len()
    }

    /// `β_j` for any `j >= 1`.
    pub fn beta(&self, j: usize) -> f64 {
        self.base.powi(j as i32)
    }

    pub fn g(&self, x: f64) -> f64 {
        x.ln() / self.base.ln()
    }

    /// `ln W(t) = (2 g(t) - 1) ln t`.
    pub fn log_w(&self, t: f64) -> f64 {
        (2.0 * self.g(t) - 1.0) * t.ln()
    }

    /// `α_k = 1/β_k`.
    pub fn alpha(&self, k: usize) -> f64 {
        1.0 / self.beta(k)
    }
}

pub fn make_beta(k: usize, base: f64) -> Result<BetaSequence, AnalyticError> {
    if !(base > 5.0) || !base.is_finite() {
        return Err(AnalyticError::BaseTooSmall { base });
    }
    if k == 0 {
        return Err(AnalyticError::InvalidOrder("K must be at least 1".into()));
    }
    Ok(BetaSequence { base, betas: (1..=k).map(|j| base.powi(j as i32)).collect() })
}

/// A real number as `sign * exp(log_magnitude)`; `sign = 0` encodes zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignLog {
    pub sign: i8,
    pub log_magnitude: f64,
}

impl SignLog {
    pub const ZERO: SignLog = SignLog { sign: 0, log_magnitude: f64::NEG_INFINITY };

    pub fn value(&self) -> f64 {
        if self.sign == 0 {
            0.0
        } else {
            self.sign as f64 * self.log_magnitude.exp()
        }
    }
}

/// Number of terms beyond `K` whose magnitudes enter the error bound.
const EXTRA_TERMS: usize = 10;

#[derive(Debug, Clone, Serialize)]
pub struct InterpolationSystem {
    pub beta: BetaSequence,
    #[serde(serialize_with = "serialize_seq")]
    pub a: BinarySeq,
    /// `s_k` for `k = 1..=K + 10`.
    pub partial_sums: Vec<f64>,
    /// `B_k` for `k = 1..=K + 10`, products truncated at `j <= J`.
    pub coefficients: Vec<SignLog>,
    pub j_trunc: usize,
}

fn serialize_seq<S: serde::Serializer>(a: &BinarySeq, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&a.to_string())
}

impl InterpolationSystem {
    /// Bits map as `a_k = seq[k-1]`, so `s_k = Σ_{j<k} seq[j]`.
    pub fn new(beta: BetaSequence, a: BinarySeq, j_trunc: usize) -> Result<Self, AnalyticError> {
        let k = beta.k();
        if j_trunc < k {
            return Err(AnalyticError::InvalidOrder(format!("J = {j_trunc} is below K = {k}")));
        }
        let mut partial_sums = Vec::with_capacity(k + EXTRA_TERMS);
        let mut acc = 0.0;
        for i in 0..k + EXTRA_TERMS {
            acc += a.get(i) as f64;
            partial_sums.push(acc);
        }
        let mut sys = Self { beta, a, partial_sums, coefficients: Vec::new(), j_trunc };
        sys.coefficients = (1..=k + EXTRA_TERMS).map(|kk| sys.compute_b(kk, j_trunc)).collect();
        Ok(sys)
    }

    /// Default truncation `J = K + 10`.
    pub fn with_default_truncation(beta: BetaSequence, a: BinarySeq) -> Result<Self, AnalyticError> {
        let j = beta.k() + 10;
        Self::new(beta, a, j)
    }

    pub fn k(&self) -> usize {
        self.beta.k()
    }

    /// Whether the sequence starts with `a_1 = 0`.
    pub fn leading_bit_zero(&self) -> bool {
        self.a.get(0) == 0
    }

    pub fn s(&self, k: usize) -> f64 {
        self.partial_sums[k - 1]
    }

    fn compute_b(&self, k: usize, j_trunc: usize) -> SignLog {
        let s = self.partial_sums[k - 1];
        if s == 0.0 {
            return SignLog::ZERO;
        }
        let bk = self.beta.beta(k);
        let mut log_prod = 0.0;
        for j in (1..=j_trunc.max(k)).filter(|&j| j != k) {
            log_prod += 2.0 * (1.0 - bk / self.beta.beta(j)).abs().ln();
        }
        SignLog { sign: s.signum() as i8, log_magnitude: s.abs().ln() - log_prod }
    }

    fn log_product_real(&self, k: usize, x: f64) -> f64 {
        let mut acc = 0.0;
        for j in (1..=self.j_trunc.max(k)).filter(|&j| j != k) {
            acc += 2.0 * (1.0 - x / self.beta.beta(j)).abs().ln();
        }
        acc
    }

    fn log_product_complex(&self, k: usize, z: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in (1..=self.j_trunc.max(k)).filter(|&j| j != k) {
            acc += 2.0 * (Complex64::new(1.0, 0.0) - z / self.beta.beta(j)).ln();
        }
        acc
    }

    /// Relative effect of dropping the factors `j > J` at `|z|`.
    fn product_tail(&self, modulus: f64) -> f64 {
        let base = self.beta.base;
        let next = self.beta.beta(self.j_trunc + 1);
        if modulus >= next {
            return f64::INFINITY;
        }
        let sum = 2.0 * modulus * base.powi(-(self.j_trunc as i32)) / (base - 1.0);
        (sum / (1.0 - modulus / next)).exp_m1()
    }
}

/// `B_k` as stored (truncation `J` of the system).
pub fn coeff_b(sys: &InterpolationSystem, k: usize) -> SignLog {
    sys.coefficients[k - 1]
}

/// `B_k` recomputed with another product truncation.
pub fn coeff_b_with_truncation(sys: &InterpolationSystem, k: usize, j_trunc: usize) -> SignLog {
    sys.compute_b(k, j_trunc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RealEval {
    /// `NaN` when the magnitude overflows; see `log_magnitude`.
    pub value: f64,
    pub sign: i8,
    pub log_magnitude: f64,
    pub error_bound: f64,
    pub overflow: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplexEval {
    pub re: f64,
    pub im: f64,
    pub log_magnitude: f64,
    pub error_bound: f64,
    pub overflow: bool,
}

impl ComplexEval {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

const MAX_LOG: f64 = 700.0;

fn log_sum_real(terms: &[(f64, f64)]) -> (f64, i8, f64) {
    // terms: (sign, log|term|); returns (scaled sum, sign, log scale)
    let m = terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return (0.0, 0, f64::NEG_INFINITY);
    }
    let mut sum = 0.0;
    for &(s, l) in terms {
        sum += s * (l - m).exp();
    }
    (sum, sum.signum() as i8, m)
}

/// `F_a(x)` for real `x`.
pub fn eval_f_real(sys: &InterpolationSystem, x: f64) -> RealEval {
    let k = sys.k();
    let mut terms = Vec::with_capacity(k);
    for kk in 1..=k {
        let b = coeff_b(sys, kk);
        if b.sign == 0 {
            continue;
        }
        let lp = sys.log_product_real(kk, x);
        terms.push((b.sign as f64, b.log_magnitude + lp));
    }
    let (scaled, sign, m) = log_sum_real(&terms);
    let log_magnitude = if sign == 0 { f64::NEG_INFINITY } else { m + scaled.abs().ln() };
    let abs_terms_log = terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    let mut err = (abs_terms_log.exp() * terms.len() as f64) * 2.0 * sys.product_tail(x.abs());
    for kk in k + 1..=k + EXTRA_TERMS {
        let b = coeff_b(sys, kk);
        if b.sign != 0 {
            err += (b.log_magnitude + sys.log_product_real(kk, x)).exp();
        }
    }
    let overflow = log_magnitude > MAX_LOG;
    RealEval {
        value: if overflow { f64::NAN } else { scaled * m.exp() * if m.is_finite() { 1.0 } else { 0.0 } },
        sign,
        log_magnitude,
        error_bound: err,
        overflow,
    }
}

/// `F_a(z)` for complex `z`, accumulated as complex logarithms.
pub fn eval_f(sys: &InterpolationSystem, z: Complex64) -> ComplexEval {
    let k = sys.k();
    let mut logs = Vec::with_capacity(k);
    for kk in 1..=k {
        let b = coeff_b(sys, kk);
        if b.sign == 0 {
            continue;
        }
        let mut l = sys.log_product_complex(kk, z) + b.log_magnitude;
        if b.sign < 0 {
            l += Complex64::new(0.0, PI);
        }
        logs.push(l);
    }
    let m = logs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return ComplexEval { re: 0.0, im: 0.0, log_magnitude: f64::NEG_INFINITY, error_bound: 0.0, overflow: false };
    }
    let scaled: Complex64 = logs.iter().map(|l| (l - m).exp()).sum();
    let log_magnitude = m + scaled.norm().ln();
    let mut err = m.exp() * logs.len() as f64 * 2.0 * sys.product_tail(z.norm());
    for kk in k + 1..=k + EXTRA_TERMS {
        let b = coeff_b(sys, kk);
        if b.sign != 0 {
            err += (b.log_magnitude + sys.log_product_complex(kk, z).re).exp();
        }
    }
    let overflow = log_magnitude > MAX_LOG;
    let v = if overflow { Complex64::new(f64::NAN, f64::NAN) } else { scaled * m.exp() };
    ComplexEval { re: v.re, im: v.im, log_magnitude, error_bound: err, overflow }
}

/// The real data of a system in double-double precision.
struct DdSystem {
    betas: Vec<Dd>,
    /// `(k, B_k)` for the nonzero coefficients.
    coeffs: Vec<(usize, Dd)>,
}

impl DdSystem {
    fn new(sys: &InterpolationSystem) -> Self {
        let jmax = sys.j_trunc.max(sys.k());
        let base = Dd::from(sys.beta.base);
        let betas: Vec<Dd> = (1..=jmax).map(|j| base.powi(j as u32)).collect();
        let one = Dd::ONE;
        let coeffs = (1..=sys.k())
            .filter(|&k| sys.s(k) != 0.0)
            .map(|k| {
                let mut denom = one;
                for (_, &bj) in betas.iter().enumerate().filter(|(j, _)| j + 1 != k) {
                    let c = one - betas[k - 1] / bj;
                    denom *= c * c;
                }
                (k, Dd::from(sys.s(k)) / denom)
            })
            .collect();
        Self { betas, coeffs }
    }

    fn deriv(&self, x: Dd) -> Dd {
        let one = Dd::ONE;
        let mut total = Dd::ZERO;
        for &(k, b) in &self.coeffs {
            let mut prod = one;
            let mut sum = Dd::ZERO;
            let mut root = false;
            for (_, &bj) in self.betas.iter().enumerate().filter(|(j, _)| j + 1 != k) {
                let f = one - x / bj;
                if f.hi == 0.0 {
                    root = true;
                    break;
                }
                prod *= f * f;
                sum += Dd::from(-2.0) / (bj * f);
            }
            if !root {
                total += b * prod * sum;
            }
        }
        total
    }
}

/// `F_a'(x)` for real `x` by differentiating each product termwise, in
/// double-double arithmetic: between consecutive `β_k` the terms exceed the
/// result by many orders of magnitude and cancel.
pub fn deriv_termwise_real(sys: &InterpolationSystem, x: f64) -> f64 {
    let v = DdSystem::new(sys).deriv(Dd::from(x));
    v.to_f64()
}

/// Romberg integration in double-double; `f_1` oscillates with amplitude far
/// above its integral, so nodes, weights and sums all need the extra digits.
fn romberg_dd(f: &dyn Fn(Dd) -> Dd, lo: Dd, hi: Dd) -> Result<Dd, AnalyticError> {
    const LEVELS: usize = 16;
    let h0 = hi - lo;
    let mut row = vec![(f(lo) + f(hi)) * h0 * 0.5];
    let mut scale = row[0].abs();
    for level in 1..LEVELS {
        let n = 1usize << level;
        let h = h0 / n as f64;
        let mut mid = Dd::ZERO;
        for i in (1..n).step_by(2) {
            let v = f(lo + h * i as f64);
            if (v.abs() * h0).hi > scale.hi {
                scale = v.abs() * h0;
            }
            mid += v;
        }
        let mut next = vec![row[0] * 0.5 + mid * h];
        let mut factor = 1.0;
        for m in 1..=level {
            factor *= 4.0;
            let prev = next[m - 1];
            next.push(prev + (prev - row[m - 1]) / (factor - 1.0));
        }
        let diff = (next[level] - row[level - 1]).abs();
        row = next;
        if level >= 4 && diff.hi <= 1e-26 * scale.hi {
            return Ok(row[level]);
        }
    }
    Err(AnalyticError::QuadratureDivergence { nodes: 1 << (LEVELS - 1) })
}

/// `F_a'(z)` by the product rule: `P_k' = P_k Σ_j (-2/β_j)/(1 - z/β_j)`.
pub fn deriv_termwise(sys: &InterpolationSystem, z: Complex64) -> Complex64 {
    let one = Complex64::new(1.0, 0.0);
    let mut total = Complex64::new(0.0, 0.0);
    for kk in 1..=sys.k() {
        let b = coeff_b(sys, kk);
        if b.sign == 0 {
            continue;
        }
        let js: Vec<usize> = (1..=sys.j_trunc.max(kk)).filter(|&j| j != kk).collect();
        let factors: Vec<Complex64> = js.iter().map(|&j| one - z / sys.beta.beta(j)).collect();
        if factors.iter().any(|f| f.norm() == 0.0) {
            continue;
        }
        let log_p: Complex64 = factors.iter().map(|f| 2.0 * f.ln()).sum();
        let sum: Complex64 = js
            .iter()
            .zip(&factors)
            .map(|(&j, f)| Complex64::new(-2.0 / sys.beta.beta(j), 0.0) / f)
            .sum();
        let mag = (log_p + b.log_magnitude).exp();
        total += b.sign as f64 * mag * sum;
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CauchyDerivative {
    pub re: f64,
    pub im: f64,
    pub nodes: usize,
    pub radius: f64,
    /// Roundoff floor of the trapezoid sum, `ε · mean |F(s)| R/|s-z|²`.
    pub roundoff_floor: f64,
}

/// Contour radius as a multiple of `ρ`.
pub const RADIUS_FACTOR: f64 = 2.0;

/// `F'(z) = (1/2πi) ∮_{|s|=2ρ} F(s)/(s-z)² ds`, trapezoid rule with node
/// doubling from 64 to 2^16.
pub fn deriv_via_cauchy(sys: &InterpolationSystem, z: Complex64, rho: f64) -> Result<CauchyDerivative, AnalyticError> {
    let radius = RADIUS_FACTOR * rho;
    if !(z.norm() <= rho) {
        return Err(AnalyticError::InvalidOrder(format!("|z| = {} exceeds rho = {rho}", z.norm())));
    }
    let sample = |theta: f64| -> (Complex64, f64) {
        let e = Complex64::from_polar(1.0, theta);
        let s = e * radius;
        let f = eval_f(sys, s).value();
        let w = radius * e / ((s - z) * (s - z));
        (f * w, (f.norm() * w.norm()))
    };
    let mut nodes = 64;
    let (mut prev, _) = trapezoid(&sample, nodes);
    while nodes < (1 << 16) {
        nodes *= 2;
        let (cur, floor) = trapezoid(&sample, nodes);
        if (cur - prev).norm() <= (1e-13 * cur.norm()).max(64.0 * floor) {
            return Ok(CauchyDerivative { re: cur.re, im: cur.im, nodes, radius, roundoff_floor: floor });
        }
        prev = cur;
    }
    Err(AnalyticError::QuadratureDivergence { nodes })
}

fn trapezoid(sample: &dyn Fn(f64) -> (Complex64, f64), nodes: usize) -> (Complex64, f64) {
    let mut sum = Complex64::new(0.0, 0.0);
    let mut abs = 0.0;
    for i in 0..nodes {
        let (v, a) = sample(2.0 * PI * i as f64 / nodes as f64);
        sum += v;
        abs += a;
    }
    (sum / nodes as f64, f64::EPSILON * abs / nodes as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthEntry {
    pub rho: f64,
    pub log_abs_f: f64,
    pub log_bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    /// `ln C`, fitted on the first `ρ` where `F(-ρ) ≠ 0`.
    pub log_c: f64,
    pub entries: Vec<GrowthEntry>,
    pub holds: bool,
}

/// `|F(-ρ)| ≤ C (4ρ²)^{g(ρ)}` with `C` fitted once on the smallest `ρ`.
pub fn check_growth(sys: &InterpolationSystem, rhos: &[f64]) -> GrowthReport {
    let mut rhos = rhos.to_vec();
    rhos.sort_by(|a, b| a.total_cmp(b));
    let shape = |rho: f64| sys.beta.g(rho) * (4.0 * rho * rho).ln();
    let logs: Vec<f64> = rhos.iter().map(|&r| eval_f_real(sys, -r).log_magnitude).collect();
    let log_c = rhos
        .iter()
        .zip(&logs)
        .find(|(_, l)| l.is_finite())
        .map(|(&r, &l)| l - shape(r))
        .unwrap_or(f64::NEG_INFINITY);
    let entries: Vec<GrowthEntry> = rhos
        .iter()
        .zip(&logs)
        .map(|(&rho, &l)| {
            let bound = log_c + shape(rho);
            GrowthEntry { rho, log_abs_f: l, log_bound: bound, holds: l == f64::NEG_INFINITY || l <= bound + 1e-9 }
        })
        .collect();
    let holds = entries.iter().all(|e| e.holds);
    GrowthReport { log_c, entries, holds }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeBoundEntry {
    pub rho: f64,
    /// `ln max |F'|` over sampled `|z| ≤ ρ`.
    pub log_max_derivative: f64,
    /// `ln(C W(ρ))` with the fitted `C`.
    pub log_bound: f64,
    /// Cauchy estimate `2ρ max_{|s|=2ρ} |F(s)| / ρ²`, in log form.
    pub log_cauchy_estimate: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeBoundReport {
    pub log_c: f64,
    pub entries: Vec<DerivativeBoundEntry>,
    pub holds: bool,
}

/// Sampled `max_{|z|≤ρ} |F'(z)|` against `C W(ρ)` (fitted on the smallest
/// `ρ`) and against the Cauchy estimate on the circle of radius `2ρ`.
pub fn check_derivative_bound(sys: &InterpolationSystem, rhos: &[f64]) -> DerivativeBoundReport {
    let mut rhos = rhos.to_vec();
    rhos.sort_by(|a, b| a.total_cmp(b));
    let samples = 64;
    let measured: Vec<(f64, f64)> = rhos
        .iter()
        .map(|&rho| {
            let mut max_d = 0.0_f64;
            let mut max_f = f64::NEG_INFINITY;
            for i in 0..samples {
                let th = 2.0 * PI * i as f64 / samples as f64;
                for frac in [0.25, 0.5, 1.0] {
                    max_d = max_d.max(deriv_termwise(sys, Complex64::from_polar(frac * rho, th)).norm());
                }
                max_f = max_f.max(eval_f(sys, Complex64::from_polar(RADIUS_FACTOR * rho, th)).log_magnitude);
            }
            // contour radius 2ρ, distance at least ρ from any |z| ≤ ρ
            let cauchy = max_f + (RADIUS_FACTOR * rho).ln() - 2.0 * rho.ln();
            (max_d.ln(), cauchy)
        })
        .collect();
    let log_c = rhos
        .iter()
        .zip(&measured)
        .find(|(_, m)| m.0.is_finite())
        .map(|(&r, m)| m.0 - sys.beta.log_w(r))
        .unwrap_or(f64::NEG_INFINITY);
    let entries: Vec<DerivativeBoundEntry> = rhos
        .iter()
        .zip(&measured)
        .map(|(&rho, &(d, c))| {
            let bound = log_c + sys.beta.log_w(rho);
            let ok = d == f64::NEG_INFINITY || (d <= bound + 1e-9 && d <= c + 1e-9);
            DerivativeBoundEntry { rho, log_max_derivative: d, log_bound: bound, log_cauchy_estimate: c, holds: ok }
        })
        .collect();
    let holds = entries.iter().all(|e| e.holds);
    DerivativeBoundReport { log_c, entries, holds }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncrementEntry {
    pub k: usize,
    /// `a_{k+1}`.
    pub bit: u8,
    /// `F(β_{k+1}) - F(β_k)`.
    pub difference: f64,
    /// `∫_{α_{k+1}}^{α_k} F'(1/t) t^{-2} dt`.
    pub quadrature: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncrementReport {
    pub leading_bit_zero: bool,
    pub entries: Vec<IncrementEntry>,
    pub max_route_gap: f64,
    pub holds: bool,
}

/// Both routes to `∫_{α_{k+1}}^{α_k} f_1 = a_{k+1}` for `k = 1..K-1`.
pub fn increment_check(sys: &InterpolationSystem, tol: f64) -> Result<IncrementReport, AnalyticError> {
    let dd = DdSystem::new(sys);
    let mut entries = Vec::new();
    let mut max_gap = 0.0_f64;
    for k in 1..sys.k() {
        let bit = sys.a.get(k);
        let difference = eval_f_real(sys, sys.beta.beta(k + 1)).value - eval_f_real(sys, sys.beta.beta(k)).value;
        let quadrature = quadrature_increment(&dd, sys.beta.alpha(k + 1), sys.beta.alpha(k))?;
        let gap = (difference - quadrature).abs();
        max_gap = max_gap.max(gap);
        let holds = (difference - bit as f64).abs() <= tol && (quadrature - bit as f64).abs() <= tol && gap <= tol;
        entries.push(IncrementEntry { k, bit, difference, quadrature, holds });
    }
    let leading_bit_zero = sys.leading_bit_zero();
    let holds = leading_bit_zero && entries.iter().all(|e| e.holds);
    Ok(IncrementReport { leading_bit_zero, entries, max_route_gap: max_gap, holds })
}

/// `∫_lo^hi F'(1/t) t^{-2} dt` over geometric pieces of ratio at most 5/4,
/// which keep the pole of `f_1` at 0 far from each piece.
fn quadrature_increment(dd: &DdSystem, lo: f64, hi: f64) -> Result<f64, AnalyticError> {
    let pieces = ((hi / lo).ln() / 1.25f64.ln()).ceil().max(1.0) as usize;
    let ratio = (hi / lo).powf(1.0 / pieces as f64);
    let f1 = |t: Dd| {
        let u = Dd::ONE / t;
        dd.deriv(u) * u * u
    };
    let mut total = Dd::ZERO;
    let mut a = Dd::from(lo);
    for i in 1..=pieces {
        let b = if i == pieces { Dd::from(hi) } else { Dd::from(lo * ratio.powi(i as i32)) };
        total += romberg_dd(&f1, a, b)?;
        a = b;
    }
    Ok(total.to_f64())
}

/// Laurent polynomial `Σ c_n x^n`, finitely many terms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaurentData {
    /// `(n, c_n)` pairs.
    pub coefficients: Vec<(i32, f64)>,
}

impl LaurentData {
    pub fn new(mut coefficients: Vec<(i32, f64)>) -> Self {
        coefficients.sort_by_key(|c| c.0);
        Self { coefficients }
    }

    /// Order of the pole at 0 (`0` when there is none).
    pub fn pole_order(&self) -> u32 {
        self.coefficients.iter().filter(|c| c.1 != 0.0).map(|c| (-c.0).max(0) as u32).max().unwrap_or(0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().map(|&(n, c)| c * x.powi(n)).sum()
    }

    pub fn scale_add(&self, a: f64, other: &LaurentData, b: f64) -> LaurentData {
        let mut out: Vec<(i32, f64)> = self.coefficients.iter().map(|&(n, c)| (n, a * c)).collect();
        for &(n, c) in &other.coefficients {
            match out.iter_mut().find(|e| e.0 == n) {
                Some(e) => e.1 += b * c,
                None => out.push((n, b * c)),
            }
        }
        LaurentData::new(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeromorphicPf {
    /// `Σ_{n≠-1} c_n x^{n+1}/(n+1)`.
    pub finite_part: f64,
    /// Coefficient of `ln x` (that is, `c_{-1}`).
    pub log_coefficient: f64,
}

/// Finite part from 0 of a Laurent polynomial: termwise antiderivatives with
/// the endpoint values at 0 discarded; the `1/x` term is returned as the
/// coefficient of `ln x`.
pub fn pf_meromorphic(l: &LaurentData, x: f64) -> MeromorphicPf {
    let mut finite_part = 0.0;
    let mut log_coefficient = 0.0;
    for &(n, c) in &l.coefficients {
        if n == -1 {
            log_coefficient += c;
        } else {
            finite_part += c * x.powi(n + 1) / (n + 1) as f64;
        }
    }
    MeromorphicPf { finite_part, log_coefficient }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CondaWindow {
    pub n: usize,
    pub lo: f64,
    pub hi: f64,
    pub integral_f1: f64,
    pub integral_f2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CondaReport {
    pub windows: Vec<CondaWindow>,
    pub hypotheses_hold: bool,
    /// `(P f1)(α_1)` and `(P f2)(α_1)`.
    pub anchored: (f64, f64),
    /// `None` when the window hypotheses fail ("not applicable").
    pub conclusion_holds: Option<bool>,
}

/// Window condition on the `x` side: the windows `[α_{n+1}, α_n]` with
/// `α_n = 1/β_n` are the images of `[β_n, β_{n+1}]` under `t = 1/x`.
pub fn verify_conda(
    f1: &FunctionHandle,
    f2: &FunctionHandle,
    beta: &BetaSequence,
    p: &AnchoredAntiderivative,
    tol: f64,
) -> Result<CondaReport, AnalyticError> {
    let mut windows = Vec::new();
    for n in 1..beta.k() {
        let (lo, hi) = (beta.alpha(n + 1), beta.alpha(n));
        let i1 = quad::integrate(f1, lo, hi, tol * 1e-2)?.value;
        let i2 = quad::integrate(f2, lo, hi, tol * 1e-2)?.value;
        windows.push(CondaWindow { n, lo, hi, integral_f1: i1, integral_f2: i2 });
    }
    let hypotheses_hold = windows.iter().all(|w| (w.integral_f1 - w.integral_f2).abs() <= tol);
    let at = beta.alpha(1);
    let anchored = (p.value_at(f1, at)?, p.value_at(f2, at)?);
    let conclusion_holds = hypotheses_hold.then(|| (anchored.0 - anchored.1).abs() <= tol);
    Ok(CondaReport { windows, hypotheses_hold, anchored, conclusion_holds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn system(bits: &str, k: usize, j: usize) -> InterpolationSystem {
        InterpolationSystem::new(make_beta(k, 6.0).unwrap(), bits.parse().unwrap(), j).unwrap()
    }

    #[test]
    fn beta_examples() {
        assert_eq!(make_beta(3, 6.0).unwrap().betas, vec![6.0, 36.0, 216.0]);
        assert_eq!(make_beta(8, 6.0).unwrap().betas[7], 1_679_616.0);
        assert!(matches!(make_beta(3, 5.0), Err(AnalyticError::BaseTooSmall { .. })));
        let b = make_beta(8, 6.0).unwrap();
        assert!(b.betas.iter().enumerate().all(|(i, &v)| v > 5f64.powi(i as i32 + 1)));
    }

    #[test]
    fn coefficient_examples() {
        let sys = system("0[1]*", 6, 20);
        assert_eq!(coeff_b(&sys, 1), SignLog::ZERO);
        let b2 = coeff_b(&sys, 2);
        assert_eq!(sys.s(2), 1.0);
        let c = b2.value() * 36.0;
        assert!(c > 0.0 && c <= 4.0, "{c}");
        // independent product: B_2 = 1/∏_{j≠2} (1 - 36/6^j)^2
        let mut prod = 1.0;
        for j in (1..=20).filter(|&j| j != 2) {
            prod *= (1.0 - 36.0 / 6f64.powi(j)).powi(2);
        }
        assert!((b2.value() - 1.0 / prod).abs() < 1e-15);
    }

    #[test]
    fn truncation_stability() {
        let sys = system("0[1]*", 6, 18);
        for k in 2..=6 {
            let a = coeff_b_with_truncation(&sys, k, k + 12).log_magnitude;
            let b = coeff_b_with_truncation(&sys, k, 2 * (k + 12)).log_magnitude;
            assert!((a - b).abs() < 1e-9, "k = {k}: {}", (a - b).abs());
        }
    }

    #[test]
    fn interpolation_and_zero_system() {
        let sys = system("0110101", 8, 18);
        for k in 1..=8 {
            let v = eval_f_real(&sys, sys.beta.beta(k));
            assert!((v.value - sys.s(k)).abs() / sys.s(k).max(1.0) < 1e-6, "k = {k}");
        }
        let zero = system("0", 6, 16);
        assert_eq!(eval_f_real(&zero, 3.0).value, 0.0);
        assert_eq!(eval_f(&zero, Complex64::new(1.0, 2.0)).value(), Complex64::new(0.0, 0.0));
        let g = check_growth(&zero, &[6.0, 36.0]);
        assert!(g.holds);
    }

    #[test]
    fn real_and_complex_paths_agree() {
        let sys = system("0111", 6, 16);
        for x in [-50.0, -3.0, 2.5, 100.0, 5000.0] {
            let r = eval_f_real(&sys, x).value;
            let c = eval_f(&sys, Complex64::new(x, 0.0));
            assert!((r - c.re).abs() <= 1e-10 * r.abs().max(1.0), "{x}: {r} vs {}", c.re);
            assert!(c.im.abs() <= 1e-10 * r.abs().max(1.0));
        }
    }

    #[test]
    fn large_k_reports_log_magnitude() {
        let sys = system("0[1]*", 16, 26);
        let v = eval_f_real(&sys, -1e13);
        assert!(v.log_magnitude.is_finite());
        let k = eval_f_real(&sys, sys.beta.beta(16));
        assert!((k.value - 15.0).abs() < 1e-6 * 15.0, "{}", k.value);
    }

    #[test]
    fn growth_bound_holds() {
        let sys = system("0[1]*", 6, 16);
        let r = check_growth(&sys, &[6.0, 36.0, 216.0]);
        assert!(r.holds, "{r:?}");
        let single = system("01", 1, 11);
        assert!(check_growth(&single, &[6.0, 36.0]).holds);
    }

    #[test]
    fn cauchy_matches_product_rule() {
        let sys = system("01", 2, 12);
        for z in [Complex64::new(1.0, 0.0), Complex64::new(-2.0, 1.5), Complex64::new(0.0, -4.0)] {
            let c = deriv_via_cauchy(&sys, z, 6.0).unwrap();
            let t = deriv_termwise(&sys, z);
            assert!((Complex64::new(c.re, c.im) - t).norm() < 1e-8 * t.norm().max(1.0));
        }
        let zero = system("0", 3, 13);
        let c = deriv_via_cauchy(&zero, Complex64::new(1.0, 0.0), 6.0).unwrap();
        assert_eq!((c.re, c.im), (0.0, 0.0));
    }

    #[test]
    fn termwise_derivative_matches_finite_difference() {
        let sys = system("0110", 5, 15);
        for x in [3.0, 20.0, 150.0, 1000.0] {
            let h = 1e-5 * x;
            let fd = (eval_f_real(&sys, x + h).value - eval_f_real(&sys, x - h).value) / (2.0 * h);
            let d = deriv_termwise_real(&sys, x);
            assert!((fd - d).abs() <= 1e-6 * d.abs().max(1.0), "{x}: {fd} vs {d}");
        }
    }

    #[test]
    fn derivative_bound_holds() {
        let sys = system("0[1]*", 6, 16);
        let r = check_derivative_bound(&sys, &[6.0, 36.0, 216.0]);
        assert!(r.holds, "{r:?}");
    }

    #[test]
    fn increments_follow_bits() {
        let sys = system("0110", 6, 16);
        let r = increment_check(&sys, 1e-6).unwrap();
        let bits: Vec<u8> = r.entries.iter().map(|e| e.bit).collect();
        assert_eq!(&bits[..3], &[1, 1, 0]);
        assert!(r.holds, "{r:?}");
        let zero = system("0", 6, 16);
        assert!(increment_check(&zero, 1e-6).unwrap().entries.iter().all(|e| e.difference == 0.0));
    }

    #[test]
    fn meromorphic_examples() {
        let one = LaurentData::new(vec![(0, 1.0)]);
        assert_eq!(pf_meromorphic(&one, 0.5), MeromorphicPf { finite_part: 0.5, log_coefficient: 0.0 });
        let pole = LaurentData::new(vec![(-2, 1.0)]);
        assert_eq!(pf_meromorphic(&pole, 0.5).finite_part, -2.0);
        let log = LaurentData::new(vec![(-1, 3.0)]);
        assert_eq!(pf_meromorphic(&log, 0.3), MeromorphicPf { finite_part: 0.0, log_coefficient: 3.0 });
        assert_eq!(pole.pole_order(), 2);
    }

    #[test]
    fn conda_examples() {
        let beta = make_beta(4, 6.0).unwrap();
        let p = AnchoredAntiderivative::integral_from(beta.alpha(4));
        let f1 = FunctionHandle::new("x", |x| x);
        let r = verify_conda(&f1, &f1, &beta, &p, 1e-10).unwrap();
        assert_eq!(r.conclusion_holds, Some(true));
        // zero-mass bump inside the second window
        let (lo, hi) = (beta.alpha(3), beta.alpha(2));
        let bump = move |x: f64| if x > lo && x < hi { (2.0 * PI * (x - lo) / (hi - lo)).sin() } else { 0.0 };
        let f2 = FunctionHandle::new("x+bump", move |x| x + bump(x)).with_breakpoints(vec![lo, hi]);
        let r = verify_conda(&f1, &f2, &beta, &p, 1e-10).unwrap();
        assert!(r.hypotheses_hold && r.conclusion_holds == Some(true));
        let f3 = FunctionHandle::new("x+mass", move |x| if x > lo && x < hi { x + 1.0 / (hi - lo) } else { x })
            .with_breakpoints(vec![lo, hi]);
        let r = verify_conda(&f1, &f3, &beta, &p, 1e-10).unwrap();
        assert!(!r.hypotheses_hold && r.conclusion_holds.is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn meromorphic_linear_and_differentiates_back(
            c1 in proptest::collection::vec(-3.0f64..3.0, 9),
            c2 in proptest::collection::vec(-3.0f64..3.0, 9),
            a in -2.0f64..2.0,
            b in -2.0f64..2.0,
            x in 0.1f64..0.95,
        ) {
            let l1 = LaurentData::new(c1.iter().enumerate().map(|(i, &c)| (i as i32 - 5, c)).collect());
            let l2 = LaurentData::new(c2.iter().enumerate().map(|(i, &c)| (i as i32 - 5, c)).collect());
            let combo = l1.scale_add(a, &l2, b);
            let lhs = pf_meromorphic(&combo, x);
            let (p1, p2) = (pf_meromorphic(&l1, x), pf_meromorphic(&l2, x));
            let scale = p1.finite_part.abs().max(p2.finite_part.abs()).max(1.0);
            prop_assert!((lhs.finite_part - (a * p1.finite_part + b * p2.finite_part)).abs() < 1e-12 * scale * 10.0);
            prop_assert!((lhs.log_coefficient - (a * p1.log_coefficient + b * p2.log_coefficient)).abs() < 1e-12);
            let h = 1e-6 * x;
            let d = (pf_meromorphic(&l1, x + h).finite_part - pf_meromorphic(&l1, x - h).finite_part) / (2.0 * h);
            let recon = d + p1.log_coefficient / x;
            let direct = l1.eval(x);
            prop_assert!((recon - direct).abs() < 1e-5 * direct.abs().max(1.0) * x.powi(-6));
        }

        #[test]
        fn real_axis_is_real(x in -500.0f64..500.0) {
            let sys = system("0101", 5, 15);
            let c = eval_f(&sys, Complex64::new(x, 0.0));
            prop_assert!(c.im.abs() <= 1e-12 * c.re.abs().max(1.0));
            let conj = eval_f(&sys, Complex64::new(x, 0.7));
            let other = eval_f(&sys, Complex64::new(x, -0.7));
            prop_assert!((conj.value() - other.value().conj()).norm() <= 1e-12 * conj.value().norm().max(1.0));
        }
    }
}
