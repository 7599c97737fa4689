//! Functions on `(0,1]`, their derivatives, germ equivalence near `0+`,
//! smooth gluing profiles, the multiplicative semigroup `f^⋈`, and anchored
//! antiderivatives together with runtime checkers for the axioms an
//! extension of the integral from zero has to satisfy.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::numeric::{binomial, geometric_grid, smooth_step};
use crate::quad::{self, L1Verdict, QuadError};
use crate::Tolerance;

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type DerivativeFamily = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FuncError {
    #[error("derivative of order {order} unavailable for `{label}`")]
    OrderUnavailable { label: String, order: usize },
    #[error("x = {x} is outside (0,1]")]
    DomainError { x: f64 },
    #[error("gluing profile takes value {value} at x = {x}, outside [-1,1]")]
    ProfileOutOfRange { x: f64, value: f64 },
    #[error("invalid gluing profile: {0}")]
    InvalidProfile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Smoothness {
    Finite(usize),
    Infinite,
}

impl Smoothness {
    pub fn admits(self, order: usize) -> bool {
        match self {
            Smoothness::Finite(k) => order <= k,
            Smoothness::Infinite => true,
        }
    }

    fn min(self, other: Smoothness) -> Smoothness {
        match (self, other) {
            (Smoothness::Infinite, s) | (s, Smoothness::Infinite) => s,
            (Smoothness::Finite(a), Smoothness::Finite(b)) => Smoothness::Finite(a.min(b)),
        }
    }
}

/// Monotone oscillation phase of an integrand, e.g. `x -> 1/x` for
/// `sin(1/x)`. Quadrature and level-set scans use it to place one
/// breakpoint per half-oscillation.
#[derive(Clone)]
pub struct Phase {
    map: RealFn,
    inverse: Option<RealFn>,
}

impl fmt::Debug for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Phase")
            .field("has_inverse", &self.inverse.is_some())
            .finish()
    }
}

impl Phase {
    pub fn new(map: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { map: Arc::new(map), inverse: None }
    }

    pub fn with_inverse(mut self, inverse: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.inverse = Some(Arc::new(inverse));
        self
    }

    /// The phase `c/x` with its exact inverse.
    pub fn reciprocal(c: f64) -> Self {
        Phase::new(move |x| c / x).with_inverse(move |u| c / u)
    }

    pub fn value(&self, x: f64) -> f64 {
        (self.map)(x)
    }

    /// Number of half-oscillations between `lo` and `hi`.
    pub fn half_periods(&self, lo: f64, hi: f64) -> f64 {
        ((self.value(hi) - self.value(lo)) / PI).abs()
    }

    /// Interior points of `(lo, hi)` where the phase crosses a multiple of
    /// pi, ascending. `None` when there are more than `max_points`.
    pub fn arch_points(&self, lo: f64, hi: f64, max_points: usize) -> Option<Vec<f64>> {
        if !(hi > lo) {
            return Some(Vec::new());
        }
        let (pl, ph) = (self.value(lo), self.value(hi));
        if !pl.is_finite() || !ph.is_finite() {
            return None;
        }
        let (a, b) = if pl <= ph { (pl, ph) } else { (ph, pl) };
        let k0 = (a / PI).floor() as i64 + 1;
        let k1 = (b / PI).ceil() as i64 - 1;
        if k1 < k0 {
            return Some(Vec::new());
        }
        if (k1 - k0 + 1) as usize > max_points {
            return None;
        }
        let increasing = ph >= pl;
        let mut out = Vec::with_capacity((k1 - k0 + 1) as usize);
        for k in k0..=k1 {
            let target = k as f64 * PI;
            let x = match &self.inverse {
                Some(inv) => inv(target),
                None => self.bisect(lo, hi, target, increasing),
            };
            if x > lo && x < hi {
                out.push(x);
            }
        }
        out.sort_by(|a, b| a.total_cmp(b));
        out.dedup();
        Some(out)
    }

    fn bisect(&self, mut lo: f64, mut hi: f64, target: f64, increasing: bool) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let above = self.value(mid) >= target;
            if above == increasing {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Step to the left of `x` that advances the phase by about `fraction * pi`.
    pub(crate) fn left_step(&self, x: f64, fraction: f64) -> f64 {
        let dx = x * 1e-7;
        let slope = ((self.value(x) - self.value(x - dx)) / dx).abs();
        if !slope.is_finite() || slope == 0.0 {
            return f64::INFINITY;
        }
        fraction * PI / slope
    }
}

/// Provenance of a semigroup element `h f`: the generating function and the
/// accumulated multiplier.
#[derive(Debug, Clone)]
pub struct SemigroupOrigin {
    pub base: FunctionHandle,
    pub profile: GluingProfile,
}

/// An evaluable real function on `(0,1]` with optional exact derivatives.
#[derive(Clone)]
pub struct FunctionHandle {
    label: String,
    eval: RealFn,
    derivs: Option<(DerivativeFamily, Smoothness)>,
    smoothness: Smoothness,
    numeric_fallback: bool,
    phase: Option<Phase>,
    breakpoints: Option<Arc<Vec<f64>>>,
    origin: Option<Arc<SemigroupOrigin>>,
}

impl fmt::Debug for FunctionHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionHandle")
            .field("label", &self.label)
            .field("smoothness", &self.smoothness)
            .field("exact_orders", &self.derivs.as_ref().map(|d| d.1))
            .field("phase", &self.phase)
            .finish()
    }
}

impl FunctionHandle {
    pub fn new(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            eval: Arc::new(f),
            derivs: None,
            smoothness: Smoothness::Infinite,
            numeric_fallback: true,
            phase: None,
            breakpoints: None,
            origin: None,
        }
    }

    /// Exact derivatives of orders `1..=list.len()`.
    pub fn with_derivatives(mut self, list: Vec<RealFn>) -> Self {
        let k = list.len();
        let list = Arc::new(list);
        let family: DerivativeFamily = Arc::new(move |order, x| list[order - 1](x));
        self.derivs = Some((family, Smoothness::Finite(k)));
        self
    }

    /// Exact derivatives of every order up to `available`, given as a family
    /// `(order, x) -> f^(order)(x)`.
    pub fn with_derivative_family(
        mut self,
        available: Smoothness,
        family: impl Fn(usize, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.derivs = Some((Arc::new(family), available));
        self
    }

    pub fn with_smoothness(mut self, k: Smoothness) -> Self {
        self.smoothness = k;
        self
    }

    pub fn without_numeric_fallback(mut self) -> Self {
        self.numeric_fallback = false;
        self
    }

    pub fn with_phase(mut self, phase: Phase) -> Self {
        self.phase = Some(phase);
        self
    }

    /// Structural points (kinks of derivatives, narrow transitions) that
    /// quadrature should not straddle.
    pub fn with_breakpoints(mut self, mut points: Vec<f64>) -> Self {
        points.retain(|p| p.is_finite());
        points.sort_by(|a, b| a.total_cmp(b));
        points.dedup();
        self.breakpoints = Some(Arc::new(points));
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn phase(&self) -> Option<&Phase> {
        self.phase.as_ref()
    }

    pub fn origin(&self) -> Option<&SemigroupOrigin> {
        self.origin.as_deref()
    }

    pub fn has_exact_derivative(&self, order: usize) -> bool {
        order == 0 || self.derivs.as_ref().is_some_and(|(_, k)| k.admits(order))
    }

    /// Evaluate without domain checks.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    pub fn try_eval(&self, x: f64) -> Result<f64, FuncError> {
        check_domain(x)?;
        Ok(self.eval(x))
    }

    pub fn breakpoints_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        match &self.breakpoints {
            None => Vec::new(),
            Some(pts) => {
                let start = pts.partition_point(|&p| p <= lo);
                let end = pts.partition_point(|&p| p < hi);
                pts[start..end].to_vec()
            }
        }
    }

    fn all_breakpoints(&self) -> Vec<f64> {
        self.breakpoints.as_ref().map(|b| b.as_ref().clone()).unwrap_or_default()
    }

    fn derived(&self, label: String, eval: RealFn) -> FunctionHandle {
        FunctionHandle {
            label,
            eval,
            derivs: None,
            smoothness: self.smoothness,
            numeric_fallback: self.numeric_fallback,
            phase: self.phase.clone(),
            breakpoints: self.breakpoints.clone(),
            origin: None,
        }
    }

    /// `c * f`, keeping exact derivatives.
    pub fn scale(&self, c: f64) -> FunctionHandle {
        let f = self.eval.clone();
        let mut out = self.derived(format!("{c}*({})", self.label), Arc::new(move |x| c * f(x)));
        if let Some((fam, k)) = &self.derivs {
            let fam = fam.clone();
            out.derivs = Some((Arc::new(move |o, x| c * fam(o, x)), *k));
        }
        out
    }

    /// `f + g`, keeping exact derivatives up to the common order.
    pub fn add(&self, other: &FunctionHandle) -> FunctionHandle {
        let (f, g) = (self.eval.clone(), other.eval.clone());
        let mut out = self.derived(
            format!("({})+({})", self.label, other.label),
            Arc::new(move |x| f(x) + g(x)),
        );
        out.smoothness = self.smoothness.min(other.smoothness);
        out.numeric_fallback = self.numeric_fallback && other.numeric_fallback;
        out.phase = self.phase.clone().or_else(|| other.phase.clone());
        let mut bps = self.all_breakpoints();
        bps.extend(other.all_breakpoints());
        out = out.with_breakpoints(bps);
        if let (Some((fa, ka)), Some((fb, kb))) = (&self.derivs, &other.derivs) {
            let (fa, fb) = (fa.clone(), fb.clone());
            out.derivs = Some((Arc::new(move |o, x| fa(o, x) + fb(o, x)), ka.min(*kb)));
        }
        out
    }

    /// Pointwise map of the values; derivatives are dropped.
    pub fn map_values(&self, label: impl Into<String>, m: impl Fn(f64) -> f64 + Send + Sync + 'static) -> FunctionHandle {
        let f = self.eval.clone();
        let mut out = self.derived(label.into(), Arc::new(move |x| m(f(x))));
        out.smoothness = Smoothness::Finite(0);
        out
    }

    pub fn abs(&self) -> FunctionHandle {
        self.map_values(format!("|{}|", self.label), f64::abs)
    }

    pub fn positive_part(&self) -> FunctionHandle {
        self.map_values(format!("({})+", self.label), |v| v.max(0.0))
    }

    pub fn negative_part(&self) -> FunctionHandle {
        self.map_values(format!("({})-", self.label), |v| (-v).max(0.0))
    }
}

fn check_domain(x: f64) -> Result<(), FuncError> {
    if x > 0.0 && x <= 1.0 {
        Ok(())
    } else {
        Err(FuncError::DomainError { x })
    }
}

/// A derivative value; `error_estimate` is zero for exact derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Derivative {
    pub value: f64,
    pub error_estimate: f64,
    pub exact: bool,
}

/// `f^(order)(x)`: the supplied derivative when available, otherwise a
/// Richardson-extrapolated central difference.
pub fn eval_deriv(f: &FunctionHandle, order: usize, x: f64) -> Result<Derivative, FuncError> {
    check_domain(x)?;
    if order == 0 {
        return Ok(Derivative { value: f.eval(x), error_estimate: 0.0, exact: true });
    }
    let unavailable = || FuncError::OrderUnavailable { label: f.label.clone(), order };
    if !f.smoothness.admits(order) {
        return Err(unavailable());
    }
    if let Some((family, k)) = &f.derivs {
        if k.admits(order) {
            return Ok(Derivative { value: family(order, x), error_estimate: 0.0, exact: true });
        }
    }
    if !f.numeric_fallback {
        return Err(unavailable());
    }
    Ok(numeric_derivative(&*f.eval, order, x))
}

fn central_difference(f: &dyn Fn(f64) -> f64, order: usize, x: f64, h: f64) -> f64 {
    let m = order as f64;
    let mut acc = 0.0;
    for i in 0..=order {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * binomial(order, i) * f(x + (0.5 * m - i as f64) * h);
    }
    acc / h.powi(order as i32)
}

/// Ridders-style extrapolation of central differences. The starting step is
/// `max(1e-5, 1e-3 x)` for first derivatives, widened for higher orders and
/// capped so every stencil point stays inside `(0, 1]`-ish territory near 0.
pub(crate) fn numeric_derivative(f: &dyn Fn(f64) -> f64, order: usize, x: f64) -> Derivative {
    const LEVELS: usize = 8;
    let base = (1e-5_f64).max(1e-3 * x);
    let widen = 8.0_f64.powi(order as i32 - 1);
    let cap = 0.9 * x / (0.5 * order as f64 + 1.0);
    let mut h = (base * widen * 4.0).min(cap);
    let mut table = [[0.0_f64; LEVELS]; LEVELS];
    let mut best = central_difference(f, order, x, h);
    let mut best_err = f64::INFINITY;
    table[0][0] = best;
    for i in 1..LEVELS {
        h *= 0.5;
        table[i][0] = central_difference(f, order, x, h);
        let mut factor = 1.0;
        for j in 1..=i {
            factor *= 4.0;
            table[i][j] = table[i][j - 1] + (table[i][j - 1] - table[i - 1][j - 1]) / (factor - 1.0);
            let err = (table[i][j] - table[i][j - 1])
                .abs()
                .max((table[i][j] - table[i - 1][j - 1]).abs());
            if err <= best_err {
                best_err = err;
                best = table[i][j];
            }
        }
        if (table[i][i] - table[i - 1][i - 1]).abs() >= 2.0 * best_err {
            break;
        }
    }
    Derivative { value: best, error_estimate: best_err, exact: false }
}

/// Sampled test of `f ~_0 g` witnessed on `(0, a]`: compares the two
/// functions on a geometric grid of `grid` points from `a` down to
/// `a * 2^-40`. A `false` answer is certain; `true` only means no
/// disagreement was observed.
pub fn germ_equal(f: &FunctionHandle, g: &FunctionHandle, a: f64, grid: usize) -> bool {
    germ_equal_with(f, g, a, grid, Tolerance::default())
}

pub fn germ_equal_with(f: &FunctionHandle, g: &FunctionHandle, a: f64, grid: usize, tol: Tolerance) -> bool {
    if !(a > 0.0 && a <= 1.0) || grid < 2 {
        return false;
    }
    geometric_grid(a * 2f64.powi(-40), a, grid)
        .into_iter()
        .all(|x| tol.close(f.eval(x), g.eval(x)))
}

/// One smooth plateau of a gluing profile: equal to `height` on `[lo, hi]`,
/// rising over `(lo - left_width, lo)` and falling over `(hi, hi + right_width)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Core {
    pub lo: f64,
    pub hi: f64,
    pub left_width: f64,
    pub right_width: f64,
    pub height: f64,
}

impl Core {
    pub fn new(lo: f64, hi: f64, left_width: f64, right_width: f64) -> Self {
        Self { lo, hi, left_width, right_width, height: 1.0 }
    }

    pub fn with_height(mut self, height: f64) -> Self {
        self.height = height;
        self
    }
}

#[derive(Debug, Clone)]
struct Layer {
    cores: Arc<Vec<Core>>,
}

impl Layer {
    fn eval(&self, x: f64) -> f64 {
        let cores = &self.cores;
        let idx = cores.partition_point(|c| c.lo <= x);
        if idx > 0 {
            let c = &cores[idx - 1];
            if x <= c.hi {
                return c.height;
            }
            if x < c.hi + c.right_width {
                return c.height * smooth_step(1.0 - (x - c.hi) / c.right_width);
            }
        }
        if idx < cores.len() {
            let c = &cores[idx];
            let start = c.lo - c.left_width;
            if x > start {
                return c.height * smooth_step((x - start) / c.left_width);
            }
        }
        0.0
    }
}

/// Smooth multiplier built from plateaus joined by C^inf transitions.
/// Products of profiles are profiles again (layers multiply pointwise).
#[derive(Debug, Clone)]
pub struct GluingProfile {
    layers: Vec<Layer>,
}

impl GluingProfile {
    /// Cores may be given in any order; they must not overlap once their
    /// transition bands are included.
    pub fn new(mut cores: Vec<Core>) -> Result<Self, FuncError> {
        cores.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        for c in &cores {
            if !(c.lo <= c.hi) || c.left_width < 0.0 || c.right_width < 0.0 || !c.height.is_finite() {
                return Err(FuncError::InvalidProfile(format!("malformed core {c:?}")));
            }
        }
        for pair in cores.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if a.hi + a.right_width > b.lo - b.left_width + 1e-15 * b.lo.abs() {
                return Err(FuncError::InvalidProfile(format!(
                    "cores [{}, {}] and [{}, {}] overlap with their transitions",
                    a.lo, a.hi, b.lo, b.hi
                )));
            }
        }
        Ok(Self { layers: vec![Layer { cores: Arc::new(cores) }] })
    }

    /// The constant profile 1.
    pub fn identity() -> Self {
        Self { layers: vec![Layer { cores: Arc::new(vec![Core::new(0.0, f64::INFINITY, 0.0, 0.0)]) }] }
    }

    /// Every core height multiplied by `c` (e.g. `-1` for the sign-flipped
    /// witness).
    pub fn scaled(&self, c: f64) -> Self {
        let mut layers = self.layers.clone();
        if let Some(first) = layers.first_mut() {
            first.cores = Arc::new(first.cores.iter().map(|k| k.with_height(k.height * c)).collect());
        }
        Self { layers }
    }

    /// Pointwise product.
    pub fn product(&self, other: &GluingProfile) -> GluingProfile {
        let mut layers = self.layers.clone();
        layers.extend(other.layers.iter().cloned());
        Self { layers }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.layers.iter().map(|l| l.eval(x)).product()
    }

    /// Cores of the first layer, ascending.
    pub fn cores(&self) -> &[Core] {
        &self.layers[0].cores
    }

    /// Upper bound on `sup |h|` from the core heights.
    pub fn sup_bound(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.cores.iter().fold(0.0_f64, |m, c| m.max(c.height.abs())))
            .product()
    }

    /// All plateau ends and transition ends.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts = Vec::new();
        for l in &self.layers {
            for c in l.cores.iter() {
                pts.extend([c.lo - c.left_width, c.lo, c.hi, c.hi + c.right_width]);
            }
        }
        pts.retain(|p| p.is_finite() && *p > 0.0);
        pts.sort_by(|a, b| a.total_cmp(b));
        pts.dedup();
        pts
    }

    /// Finite-difference smoothness probe at every transition end inside
    /// `(0,1)`: one-sided difference quotients of orders 1..=`max_order`
    /// taken just inside and just outside each end must agree. Returns the
    /// largest mismatch, scaled by the band width to the power of the order.
    pub fn smoothness_defect(&self, max_order: usize) -> f64 {
        let mut worst = 0.0_f64;
        for l in &self.layers {
            for c in l.cores.iter() {
                let ends = [
                    (c.lo - c.left_width, c.left_width),
                    (c.lo, c.left_width),
                    (c.hi, c.right_width),
                    (c.hi + c.right_width, c.right_width),
                ];
                for (e, w) in ends {
                    if !(w > 0.0) || !(e > 0.0 && e < 1.0) || !w.is_finite() {
                        continue;
                    }
                    let h = w * 1e-2;
                    let g = |x: f64| self.eval(x);
                    for order in 1..=max_order {
                        let step = h / (order as f64 + 1.0);
                        let left = central_difference(&g, order, e - h, step);
                        let right = central_difference(&g, order, e + h, step);
                        let scale = w.powi(order as i32) / c.height.abs().max(1e-300);
                        worst = worst.max((left - right).abs() * scale);
                    }
                }
            }
        }
        worst
    }
}

/// `h f` as an element of `f^⋈`, with provenance pointing at the generator.
pub fn make_semigroup_element(f: &FunctionHandle, h: &GluingProfile) -> Result<FunctionHandle, FuncError> {
    const SLACK: f64 = 1e-12;
    if h.sup_bound() > 1.0 + SLACK {
        let probe = h
            .breakpoints()
            .into_iter()
            .chain(geometric_grid(1e-12, 1.0, 257))
            .filter(|x| *x > 0.0 && *x <= 1.0)
            .map(|x| (x, h.eval(x)))
            .find(|(_, v)| v.abs() > 1.0 + SLACK);
        let (x, value) = probe.unwrap_or((f64::NAN, h.sup_bound()));
        return Err(FuncError::ProfileOutOfRange { x, value });
    }
    let (base, profile) = match f.origin() {
        Some(o) => (o.base.clone(), o.profile.product(h)),
        None => (f.clone(), h.clone()),
    };
    let fe = f.eval.clone();
    let he = h.clone();
    let mut out = f.derived(format!("h*({})", f.label), Arc::new(move |x| he.eval(x) * fe(x)));
    let mut bps = f.all_breakpoints();
    bps.extend(h.breakpoints());
    out = out.with_breakpoints(bps);
    out.origin = Some(Arc::new(SemigroupOrigin { base, profile }));
    Ok(out)
}

/// How the constant `C(g)` of an anchored antiderivative is chosen.
#[derive(Clone)]
pub enum ConstantFunctional {
    /// The same constant for every input.
    Fixed(f64),
    /// `C(g) = ∫_lower^anchor g`, so that `P g (x) = ∫_lower^x g`.
    IntegralFrom(f64),
    /// `C(g) = ∫_0^anchor g` as an improper integral; fails on non-L1 input.
    IntegralFromZero,
    Custom(Arc<dyn Fn(&FunctionHandle) -> Result<f64, QuadError> + Send + Sync>),
}

impl fmt::Debug for ConstantFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fixed(c) => write!(f, "Fixed({c})"),
            Self::IntegralFrom(l) => write!(f, "IntegralFrom({l})"),
            Self::IntegralFromZero => write!(f, "IntegralFromZero"),
            Self::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Any right inverse of differentiation on `(0,1]` has the form
/// `x -> ∫_anchor^x g + C(g)`; this type represents it exactly that way.
#[derive(Debug, Clone)]
pub struct AnchoredAntiderivative {
    anchor: f64,
    constant: ConstantFunctional,
    tol: f64,
}

impl AnchoredAntiderivative {
    pub fn new(anchor: f64, constant: ConstantFunctional) -> Result<Self, FuncError> {
        check_domain(anchor)?;
        Ok(Self { anchor, constant, tol: 1e-11 })
    }

    /// The Lebesgue integral from 0 (improper limit), anchored at 1.
    pub fn lebesgue_from_zero() -> Self {
        Self { anchor: 1.0, constant: ConstantFunctional::IntegralFromZero, tol: 1e-11 }
    }

    /// `x -> ∫_lower^x g`, anchored at 1.
    pub fn integral_from(lower: f64) -> Self {
        Self { anchor: 1.0, constant: ConstantFunctional::IntegralFrom(lower), tol: 1e-11 }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn constant_for(&self, g: &FunctionHandle) -> Result<f64, QuadError> {
        match &self.constant {
            ConstantFunctional::Fixed(c) => Ok(*c),
            ConstantFunctional::IntegralFrom(lower) => signed_integral(g, *lower, self.anchor, self.tol),
            ConstantFunctional::IntegralFromZero => {
                let v = quad::improper_integral_on(g, self.anchor, self.tol);
                match v.kind {
                    quad::ImproperKind::Convergent { value, .. } => Ok(value),
                    _ => Err(QuadError::NotConvergent { label: g.label().to_string() }),
                }
            }
            ConstantFunctional::Custom(c) => c(g),
        }
    }

    /// `[P g](x)`.
    pub fn value_at(&self, g: &FunctionHandle, x: f64) -> Result<f64, QuadError> {
        // Same value as the anchored form, but without the cancellation
        // between the constant and the anchored integral.
        match &self.constant {
            ConstantFunctional::IntegralFrom(lower) => return signed_integral(g, *lower, x, self.tol),
            ConstantFunctional::IntegralFromZero => {
                return quad::improper_integral_on(g, x, self.tol)
                    .value()
                    .ok_or_else(|| QuadError::NotConvergent { label: g.label().to_string() });
            }
            _ => {}
        }
        let c = self.constant_for(g)?;
        Ok(signed_integral(g, self.anchor, x, self.tol)? + c)
    }

    /// `P g` as a function handle whose first derivative is `g` itself.
    /// Evaluation failures of the inner quadrature surface as NaN.
    pub fn apply(&self, g: &FunctionHandle) -> Result<FunctionHandle, QuadError> {
        let c = self.constant_for(g)?;
        let (gi, anchor, tol) = (g.clone(), self.anchor, self.tol);
        let gd = g.clone();
        let label = format!("P[{}]", g.label());
        Ok(FunctionHandle::new(label, move |x| {
            signed_integral(&gi, anchor, x, tol).map(|v| v + c).unwrap_or(f64::NAN)
        })
        .with_derivatives(vec![Arc::new(move |x| gd.eval(x))]))
    }
}

/// `∫_a^b g` with orientation, `a` and `b` in `(0,1]`.
pub(crate) fn signed_integral(g: &FunctionHandle, a: f64, b: f64, tol: f64) -> Result<f64, QuadError> {
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    Ok(sign * quad::integrate(g, lo, hi, tol)?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Axiom {
    /// Linearity.
    Linearity,
    /// Agreement with the Lebesgue integral from 0 on L1 inputs.
    LebesgueAgreement,
    /// Eventual positivity near 0 for strictly positive inputs.
    Positivity,
    /// `(P f)' = f`.
    Derivative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct AxiomCheck {
    pub axiom: Axiom,
    pub subject: String,
    pub status: CheckStatus,
    pub discrepancy: f64,
    pub note: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ExtensionReport {
    pub checks: Vec<AxiomCheck>,
}

impl ExtensionReport {
    pub fn passed(&self, axiom: Axiom) -> bool {
        self.checks
            .iter()
            .filter(|c| c.axiom == axiom)
            .all(|c| c.status != CheckStatus::Fail)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn worst(&self, axiom: Axiom) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.axiom == axiom && c.status != CheckStatus::Skipped)
            .fold(0.0, |m, c| m.max(c.discrepancy))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AxiomOptions {
    pub seed: u64,
    pub linear_pairs: usize,
    pub sample_points: usize,
    pub tol: f64,
}

impl Default for AxiomOptions {
    fn default() -> Self {
        Self { seed: 0, linear_pairs: 4, sample_points: 5, tol: 1e-7 }
    }
}

pub fn verify_extension_axioms(p: &AnchoredAntiderivative, fs: &[FunctionHandle]) -> ExtensionReport {
    verify_extension_axioms_with(p, fs, AxiomOptions::default())
}

pub fn verify_extension_axioms_with(
    p: &AnchoredAntiderivative,
    fs: &[FunctionHandle],
    opts: AxiomOptions,
) -> ExtensionReport {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = ExtensionReport::default();
    let xs: Vec<f64> = (0..opts.sample_points)
        .map(|i| 0.1 + 0.85 * (i as f64 + 0.5) / opts.sample_points as f64)
        .collect();
    fn push(checks: &mut Vec<AxiomCheck>, axiom: Axiom, subject: String, result: Result<f64, String>, limit: f64) {
        let (status, discrepancy, note) = match result {
            Ok(d) if d <= limit => (CheckStatus::Pass, d, String::new()),
            Ok(d) => (CheckStatus::Fail, d, format!("exceeds {limit:e}")),
            Err(e) => (CheckStatus::Fail, f64::NAN, e),
        };
        checks.push(AxiomCheck { axiom, subject, status, discrepancy, note });
    }

    if !fs.is_empty() {
        for _ in 0..opts.linear_pairs {
            let f = &fs[rng.random_range(0..fs.len())];
            let g = &fs[rng.random_range(0..fs.len())];
            let a: f64 = rng.random_range(-2.0..2.0);
            let b: f64 = rng.random_range(-2.0..2.0);
            let combo = f.scale(a).add(&g.scale(b));
            let result = xs
                .iter()
                .map(|&x| -> Result<f64, QuadError> {
                    let lhs = p.value_at(&combo, x)?;
                    let rhs = a * p.value_at(f, x)? + b * p.value_at(g, x)?;
                    Ok((lhs - rhs).abs() / (1.0 + lhs.abs()))
                })
                .try_fold(0.0_f64, |m, d| d.map(|d| m.max(d)))
                .map_err(|e| e.to_string());
            push(&mut report.checks, Axiom::Linearity, format!("{a:.3}*{} + {b:.3}*{}", f.label(), g.label()), result, opts.tol);
        }
    }

    for f in fs {
        match quad::l1_classify(f, opts.tol * 1e-2) {
            L1Verdict::L1 => {
                let result = xs
                    .iter()
                    .map(|&x| -> Result<f64, String> {
                        let lebesgue = match quad::improper_integral_on(f, x, opts.tol * 1e-2).kind {
                            quad::ImproperKind::Convergent { value, .. } => value,
                            other => return Err(format!("reference integral {other:?}")),
                        };
                        let pv = p.value_at(f, x).map_err(|e| e.to_string())?;
                        Ok((pv - lebesgue).abs())
                    })
                    .try_fold(0.0_f64, |m, d| d.map(|d| m.max(d)));
                push(&mut report.checks, Axiom::LebesgueAgreement, f.label().to_string(), result, opts.tol);
            }
            verdict => report.checks.push(AxiomCheck {
                axiom: Axiom::LebesgueAgreement,
                subject: f.label().to_string(),
                status: CheckStatus::Skipped,
                discrepancy: 0.0,
                note: format!("input classified {verdict:?}"),
            }),
        }

        let probe = geometric_grid(1e-9, 1.0, 64);
        if probe.iter().all(|&x| f.eval(x) > 0.0) {
            let near_zero = &probe[probe.len() - 8..];
            let result = near_zero
                .iter()
                .map(|&x| p.value_at(f, x))
                .collect::<Result<Vec<_>, _>>()
                .map(|v| if v.iter().all(|&y| y > 0.0) { 0.0 } else { 1.0 })
                .map_err(|e| e.to_string());
            push(&mut report.checks, Axiom::Positivity, f.label().to_string(), result, 0.5);
        } else {
            report.checks.push(AxiomCheck {
                axiom: Axiom::Positivity,
                subject: f.label().to_string(),
                status: CheckStatus::Skipped,
                discrepancy: 0.0,
                note: "input not strictly positive".into(),
            });
        }

        let result = xs
            .iter()
            .map(|&x| -> Result<f64, QuadError> {
                let h = 1e-4 * x;
                let up = p.value_at(f, x + h)?;
                let down = p.value_at(f, x - h)?;
                let fd = (up - down) / (2.0 * h);
                Ok((fd - f.eval(x)).abs() / (1.0 + f.eval(x).abs()))
            })
            .try_fold(0.0_f64, |m, d| d.map(|d| m.max(d)))
            .map_err(|e| e.to_string());
        push(&mut report.checks, Axiom::Derivative, f.label().to_string(), result, 1e-5);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity() -> FunctionHandle {
        FunctionHandle::new("x", |x| x)
    }

    #[test]
    fn exact_polynomial_derivative() {
        let f = FunctionHandle::new("x^2", |x| x * x)
            .with_derivatives(vec![Arc::new(|x| 2.0 * x), Arc::new(|_| 2.0)]);
        let d = eval_deriv(&f, 1, 0.5).unwrap();
        assert_eq!(d.value, 1.0);
        assert!(d.exact);
    }

    #[test]
    fn exact_cos_second_derivative() {
        let f = FunctionHandle::new("cos", f64::cos)
            .with_derivative_family(Smoothness::Infinite, |k, x| (x + k as f64 * PI / 2.0).cos());
        let d = eval_deriv(&f, 2, 1.0).unwrap();
        assert!((d.value + 1f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn numeric_fallback_oscillatory() {
        let f = FunctionHandle::new("sin(1/x)", |x| (1.0 / x).sin());
        let d = eval_deriv(&f, 1, 0.1).unwrap();
        let exact = -(10.0_f64).cos() / 0.01;
        assert!(!d.exact);
        assert!((d.value - exact).abs() < 1e-6, "{} vs {}", d.value, exact);
    }

    #[test]
    fn numeric_higher_orders_on_smooth_function() {
        let f = FunctionHandle::new("exp", f64::exp);
        for order in 1..=3 {
            let d = eval_deriv(&f, order, 0.7).unwrap();
            assert!((d.value - 0.7f64.exp()).abs() < 1e-6, "order {order}: {}", d.value);
        }
    }

    #[test]
    fn derivative_errors() {
        let f = FunctionHandle::new("plain", |x| x).without_numeric_fallback();
        assert!(matches!(eval_deriv(&f, 1, 0.5), Err(FuncError::OrderUnavailable { order: 1, .. })));
        let g = identity().with_smoothness(Smoothness::Finite(1));
        assert!(matches!(eval_deriv(&g, 2, 0.5), Err(FuncError::OrderUnavailable { .. })));
        assert!(matches!(eval_deriv(&g, 1, 0.0), Err(FuncError::DomainError { .. })));
        assert!(matches!(eval_deriv(&g, 1, 1.5), Err(FuncError::DomainError { .. })));
    }

    #[test]
    fn germ_examples() {
        assert!(germ_equal(&identity(), &identity(), 1.0, 64));
        let g = FunctionHandle::new("x+kink", |x| x + if x > 0.5 { x - 0.5 } else { 0.0 });
        assert!(germ_equal(&identity(), &g, 0.5, 64));
        assert!(!germ_equal(&identity(), &g, 1.0, 64));
        let two = FunctionHandle::new("2x", |x| 2.0 * x);
        assert!(!germ_equal(&identity(), &two, 0.3, 64));
    }

    #[test]
    fn profile_plateau_and_bands() {
        let h = GluingProfile::new(vec![Core::new(0.5, 1.0, 0.1, 0.0)]).unwrap();
        assert_eq!(h.eval(0.75), 1.0);
        assert_eq!(h.eval(0.5), 1.0);
        assert_eq!(h.eval(0.4), 0.0);
        assert_eq!(h.eval(0.2), 0.0);
        let mid = h.eval(0.45);
        assert!((mid - 0.5).abs() < 1e-12);
        assert!(h.smoothness_defect(4) < 1e-6, "{}", h.smoothness_defect(4));
    }

    #[test]
    fn profile_rejects_overlap() {
        let err = GluingProfile::new(vec![Core::new(0.1, 0.3, 0.0, 0.1), Core::new(0.35, 0.5, 0.1, 0.0)]);
        assert!(matches!(err, Err(FuncError::InvalidProfile(_))));
    }

    #[test]
    fn degenerate_core_is_a_point_plateau() {
        let h = GluingProfile::new(vec![Core::new(0.5, 0.5, 0.1, 0.1)]).unwrap();
        assert_eq!(h.eval(0.5), 1.0);
        assert!(h.eval(0.45) > 0.0 && h.eval(0.45) < 1.0);
        assert_eq!(h.eval(0.3), 0.0);
        assert_eq!(h.eval(0.7), 0.0);
    }

    #[test]
    fn semigroup_identity_profile() {
        let f = FunctionHandle::new("sin(1/x)/x", |x| (1.0 / x).sin() / x);
        let hf = make_semigroup_element(&f, &GluingProfile::identity()).unwrap();
        for x in geometric_grid(1e-6, 1.0, 50) {
            assert_eq!(hf.eval(x), f.eval(x));
        }
        assert_eq!(hf.origin().unwrap().base.label(), f.label());
    }

    #[test]
    fn semigroup_single_core() {
        let f = FunctionHandle::new("1/x", |x| 1.0 / x);
        let h = GluingProfile::new(vec![Core::new(0.5, 1.0, 0.05, 0.0)]).unwrap();
        let hf = make_semigroup_element(&f, &h).unwrap();
        for i in 0..=20 {
            let x = 0.5 + 0.5 * i as f64 / 20.0;
            assert_eq!(hf.eval(x), 1.0 / x);
        }
        for i in 1..=20 {
            let x = 0.45 * i as f64 / 20.0;
            assert_eq!(hf.eval(x), 0.0);
        }
    }

    #[test]
    fn semigroup_rejects_large_profile() {
        let f = identity();
        let h = GluingProfile::new(vec![Core::new(0.2, 0.8, 0.1, 0.1)]).unwrap().scaled(1.5);
        assert!(matches!(make_semigroup_element(&f, &h), Err(FuncError::ProfileOutOfRange { .. })));
    }

    #[test]
    fn lebesgue_antiderivative_passes_axioms() {
        let p = AnchoredAntiderivative::lebesgue_from_zero();
        let f = identity();
        let report = verify_extension_axioms(&p, &[f.clone()]);
        assert!(report.all_passed(), "{report:?}");
        let v = p.value_at(&f, 0.6).unwrap();
        assert!((v - 0.18).abs() < 1e-12);
    }

    #[test]
    fn offset_constant_breaks_lebesgue_agreement() {
        let p = AnchoredAntiderivative::new(
            1.0,
            ConstantFunctional::Custom(Arc::new(|g| {
                match quad::improper_integral_on(g, 1.0, 1e-12).kind {
                    quad::ImproperKind::Convergent { value, .. } => Ok(value + 5.0),
                    _ => Err(QuadError::NotConvergent { label: g.label().into() }),
                }
            })),
        )
        .unwrap();
        let report = verify_extension_axioms(&p, &[identity()]);
        assert!(!report.passed(Axiom::LebesgueAgreement));
        assert!((report.worst(Axiom::LebesgueAgreement) - 5.0).abs() < 1e-8);
        assert!(report.passed(Axiom::Derivative));
    }

    #[test]
    fn anchored_additivity_on_constant() {
        let p = AnchoredAntiderivative::new(0.5, ConstantFunctional::Fixed(0.0)).unwrap();
        let one = FunctionHandle::new("1", |_| 1.0);
        let two = one.scale(2.0);
        let sum = one.add(&two);
        for x in [0.1, 0.3, 0.9, 1.0] {
            let lhs = p.value_at(&sum, x).unwrap();
            let rhs = p.value_at(&one, x).unwrap() + p.value_at(&two, x).unwrap();
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn apply_returns_exact_first_derivative() {
        let p = AnchoredAntiderivative::integral_from(0.25);
        let g = FunctionHandle::new("cos", f64::cos);
        let pg = p.apply(&g).unwrap();
        assert!((pg.eval(0.25)).abs() < 1e-12);
        assert!((pg.eval(0.8) - (0.8f64.sin() - 0.25f64.sin())).abs() < 1e-11);
        assert_eq!(eval_deriv(&pg, 1, 0.3).unwrap().value, 0.3f64.cos());
    }
}
