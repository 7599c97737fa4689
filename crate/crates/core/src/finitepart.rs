//! Hadamard finite part `Γ(α) J^α f(x) = p.f. ∫_0^x s^{α-1} f(s) ds` through
//! repeated integration by parts (Riesz regularization).
//!
//! For depth `n`,
//!
//! ```text
//! Γ(α) J^α f(x) = Σ_{k<n} (-1)^k r(α,k) f^(k)(x) x^{α+k}
//!               + (-1)^n r(α,n-1) ∫_0^x s^{α+n-1} f^(n)(s) ds
//! ```
//!
//! with `r(α,k) = 1/∏_{j=0}^{k}(α+j)`. The right side is analytic in `α`
//! for `Re α > -n`, so every admissible depth yields the same value.

use serde::Serialize;
use statrs::function::gamma::gamma;
use thiserror::Error;

use crate::quad::{self, L1Verdict, QuadError, QuadResult};
use crate::realfunc::{eval_deriv, FuncError, FunctionHandle};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PfError {
    #[error("alpha + {j} = 0: coefficient pole")]
    PoleAt { j: usize },
    #[error("alpha = {alpha} hits the pole at -{j}; logarithmic case not covered")]
    PoleAtNonpositiveInteger { alpha: f64, j: usize },
    #[error("precondition failed: {0}")]
    PreconditionFailed(SufcReport),
    #[error("tail integral of `{label}` did not converge")]
    TailNotConvergent { label: String },
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Func(#[from] FuncError),
}

const POLE_TOL: f64 = 1e-14;

/// `Γ(α)/Γ(α+k+1) = 1/∏_{j=0}^{k}(α+j)`, computed as a product.
pub fn pochhammer_ratio(alpha: f64, k: usize) -> Result<f64, PfError> {
    let mut prod = 1.0;
    for j in 0..=k {
        let factor = alpha + j as f64;
        if factor.abs() < POLE_TOL {
            return Err(PfError::PoleAt { j });
        }
        prod *= factor;
    }
    Ok(1.0 / prod)
}

/// Outcome of the smoothness condition: `f` has an order-`n` derivative and
/// `s^{α+n-1} f^(n)(s)` is absolutely integrable near 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SufcReport {
    pub holds: bool,
    pub alpha: f64,
    pub n: usize,
    pub order_available: bool,
    pub verdict: Option<L1Verdict>,
    pub reason: String,
}

impl std::fmt::Display for SufcReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "alpha = {}, n = {}: {}", self.alpha, self.n, self.reason)
    }
}

/// `s -> s^{α+n-1} f^(n)(s)`, sharing the oscillation phase of `f`.
pub fn tail_integrand(f: &FunctionHandle, alpha: f64, n: usize) -> FunctionHandle {
    let g = f.clone();
    let exponent = alpha + n as f64 - 1.0;
    let mut h = FunctionHandle::new(format!("s^({exponent})*D{n}[{}]", f.label()), move |s| {
        let d = eval_deriv(&g, n, s).map(|d| d.value).unwrap_or(f64::NAN);
        if d == 0.0 {
            0.0
        } else {
            s.powf(exponent) * d
        }
    })
    .with_breakpoints(f.breakpoints_in(0.0, 1.0));
    if let Some(p) = f.phase() {
        h = h.with_phase(p.clone());
    }
    h
}

pub fn check_sufc(f: &FunctionHandle, alpha: f64, n: usize) -> SufcReport {
    let mut report = SufcReport { holds: false, alpha, n, order_available: false, verdict: None, reason: String::new() };
    if let Err(e) = eval_deriv(f, n, 0.5) {
        report.reason = format!("OrderUnavailable: {e}");
        return report;
    }
    report.order_available = true;
    let verdict = quad::l1_classify(&tail_integrand(f, alpha, n), 1e-10);
    report.verdict = Some(verdict);
    report.holds = verdict == L1Verdict::L1;
    report.reason = match verdict {
        L1Verdict::L1 => "tail integrand is L1".into(),
        L1Verdict::NotL1 => "tail integrand is not L1".into(),
        L1Verdict::Unknown => "tail integrand integrability undecided".into(),
    };
    report
}

#[derive(Clone)]
pub struct PFQuery {
    pub f: FunctionHandle,
    pub alpha: f64,
    pub x: f64,
    pub n: usize,
}

impl PFQuery {
    pub fn new(f: FunctionHandle, alpha: f64, x: f64, n: usize) -> Self {
        Self { f, alpha, x, n }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PFResult {
    /// `Γ(α) J^α f(x)`.
    pub value: f64,
    /// `(-1)^k r(α,k) f^(k)(x) x^{α+k}` for `k < n`.
    pub boundary_terms: Vec<f64>,
    /// `(-1)^n r(α,n-1)`; `1` when `n = 0`.
    pub tail_coefficient: f64,
    /// `∫_0^x s^{α+n-1} f^(n)(s) ds`.
    pub tail_integral: QuadResult,
    pub condition_report: SufcReport,
}

impl PFResult {
    /// Error estimate inherited from the tail quadrature.
    pub fn error_estimate(&self) -> f64 {
        self.tail_coefficient.abs() * self.tail_integral.abs_error_estimate
    }
}

pub fn pf_riesz(q: &PFQuery, tol: f64) -> Result<PFResult, PfError> {
    if !(q.x > 0.0 && q.x <= 1.0) {
        return Err(FuncError::DomainError { x: q.x }.into());
    }
    let (alpha, x, n) = (q.alpha, q.x, q.n);
    for j in 0..n {
        if (alpha + j as f64).abs() < POLE_TOL {
            return Err(PfError::PoleAtNonpositiveInteger { alpha, j });
        }
    }
    let sufc = check_sufc(&q.f, alpha, n);
    if !sufc.holds {
        return Err(PfError::PreconditionFailed(sufc));
    }

    let mut boundary = Vec::with_capacity(n);
    for k in 0..n {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let r = pochhammer_ratio(alpha, k)?;
        let d = eval_deriv(&q.f, k, x)?.value;
        boundary.push(sign * r * d * x.powf(alpha + k as f64));
    }
    let tail_coefficient = if n == 0 {
        1.0
    } else {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        sign * pochhammer_ratio(alpha, n - 1)?
    };

    let g = tail_integrand(&q.f, alpha, n);
    let split = 0.5 * x;
    let near = quad::improper_integral_on(&g, split, tol);
    let (near_value, near_err) = match near.kind {
        quad::ImproperKind::Convergent { value, error } => (value, error),
        _ => return Err(PfError::TailNotConvergent { label: g.label().to_string() }),
    };
    let far = quad::integrate(&g, split, x, tol)?;
    let tail_integral = QuadResult {
        value: near_value + far.value,
        abs_error_estimate: near_err + far.abs_error_estimate,
        subdivisions: far.subdivisions,
        converged: true,
    };

    let mut value = 0.0;
    for b in &boundary {
        value += b;
    }
    value += tail_coefficient * tail_integral.value;
    Ok(PFResult { value, boundary_terms: boundary, tail_coefficient, tail_integral, condition_report: sufc })
}

/// `J^α f(x)`: the finite part divided by `Γ(α)`.
pub fn riesz_potential(q: &PFQuery, tol: f64) -> Result<f64, PfError> {
    let r = pf_riesz(q, tol)?;
    Ok(r.value / gamma(q.alpha))
}

/// `|pf_riesz(n1) - pf_riesz(n2)|`, which vanishes by uniqueness of the
/// analytic continuation in `α`.
pub fn pf_depth_consistency(f: &FunctionHandle, alpha: f64, x: f64, n1: usize, n2: usize, tol: f64) -> Result<f64, PfError> {
    let a = pf_riesz(&PFQuery::new(f.clone(), alpha, x, n1), tol)?;
    if n1 == n2 {
        return Ok(0.0);
    }
    let b = pf_riesz(&PFQuery::new(f.clone(), alpha, x, n2), tol)?;
    Ok((a.value - b.value).abs())
}

/// `s -> s^m` with exact derivatives of every order.
pub fn monomial(m: u32) -> FunctionHandle {
    FunctionHandle::new(format!("s^{m}"), move |s| s.powi(m as i32)).with_derivative_family(
        crate::realfunc::Smoothness::Infinite,
        move |k, s| {
            if k as u32 > m {
                return 0.0;
            }
            let mut c = 1.0;
            for i in 0..k as u32 {
                c *= (m - i) as f64;
            }
            c * s.powi((m - k as u32) as i32)
        },
    )
}

/// `cos`, `exp` and `1/(1+s)` with exact derivatives of every order.
pub fn cos_handle() -> FunctionHandle {
    FunctionHandle::new("cos(s)", f64::cos).with_derivative_family(crate::realfunc::Smoothness::Infinite, |k, s| {
        (s + k as f64 * std::f64::consts::FRAC_PI_2).cos()
    })
}

pub fn exp_handle() -> FunctionHandle {
    FunctionHandle::new("exp(s)", f64::exp).with_derivative_family(crate::realfunc::Smoothness::Infinite, |_, s| s.exp())
}

pub fn reciprocal_shift_handle() -> FunctionHandle {
    FunctionHandle::new("1/(1+s)", |s| 1.0 / (1.0 + s)).with_derivative_family(crate::realfunc::Smoothness::Infinite, |k, s| {
        let mut c = if k % 2 == 0 { 1.0 } else { -1.0 };
        for i in 1..=k {
            c *= i as f64;
        }
        c / (1.0 + s).powi(k as i32 + 1)
    })
}
