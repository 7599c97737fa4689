//! Divergence witnesses: a nonnegative `τ` with `∫_0^1 τ = ∞`, built either
//! from a non-integrable `f` (as an element `hf` of its semigroup) or from a
//! weight `w` with its exponent `p`, together with the unit-mass partition
//! `θ(α_k) = k` where `θ(x) = ∫_x^1 τ`.

use std::sync::{Arc, OnceLock};

use serde::Serialize;
use thiserror::Error;

use crate::numeric::{geometric_grid, smooth_step};
use crate::quad::{self, ImproperKind, QuadConfig, QuadError};
use crate::realfunc::{make_semigroup_element, Core, FuncError, FunctionHandle, GluingProfile, Phase};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WitnessError {
    #[error("neither f+ nor f- has a divergent integral near 0 (f+: {plus:?}, f-: {minus:?})")]
    NotDivergentPositive { plus: ImproperKind, minus: ImproperKind },
    #[error("level set not found at level {level}")]
    LevelSetNotFound { level: usize },
    #[error("non-inclusion criterion fails: {0:?}")]
    CriterionFails(Box<CriterionReport>),
    #[error("weight must be monotone near 0 for p = 1 (violated near x = {x})")]
    NonMonotoneWeight { x: f64 },
    #[error("invalid weight: {0}")]
    InvalidWeight(String),
    #[error("requested {requested} unit masses but only {reachable} is reachable above x = {floor}")]
    RangeExhausted { requested: usize, reachable: f64, floor: f64 },
    #[error(transparent)]
    Func(#[from] FuncError),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum WitnessSource {
    /// Built from a non-integrable `f`; `sign = -1` when `f-` carries the divergence.
    LevelSets { f: String, sign: f64 },
    /// Built from a weight.
    Weighted { w: String, p: f64 },
    Custom { tau: String },
}

/// Lowest scale reached by the level-set construction by default (`2^-20`).
pub const DEFAULT_DEPTH: u32 = 20;
/// Lowest scale of weighted witnesses (`2^-40`).
pub const WEIGHTED_FLOOR_EXP: i32 = 40;
/// Number of weight level sets realized for `p = 1`.
pub const P1_LEVELS: usize = 40;

#[derive(Debug, Clone)]
struct MassTable {
    xs: Vec<f64>,
    theta: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct WitnessBundle {
    pub tau: FunctionHandle,
    pub h: Option<GluingProfile>,
    /// Core intervals `(b_j, c_j)`, descending.
    pub intervals: Vec<(f64, f64)>,
    /// Transition widths: entry `j` sits in the gap below core `j`.
    pub epsilons: Vec<f64>,
    pub source: WitnessSource,
    /// `τ` is realized (and `θ` tabulated) on `[floor, 1]`.
    pub floor: f64,
    mass: Arc<OnceLock<MassTable>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WitnessSummary {
    pub source: WitnessSource,
    pub floor: f64,
    pub intervals: Vec<(f64, f64)>,
    pub epsilons: Vec<f64>,
    pub divergence_trace: Vec<(f64, f64)>,
}

impl WitnessBundle {
    /// Wrap an arbitrary nonnegative `τ` realized on `[floor, 1]`.
    pub fn from_tau(tau: FunctionHandle, floor: f64) -> Self {
        let label = tau.label().to_string();
        Self::assemble(tau, None, Vec::new(), Vec::new(), WitnessSource::Custom { tau: label }, floor)
    }

    fn assemble(
        tau: FunctionHandle,
        h: Option<GluingProfile>,
        intervals: Vec<(f64, f64)>,
        epsilons: Vec<f64>,
        source: WitnessSource,
        floor: f64,
    ) -> Self {
        Self { tau, h, intervals, epsilons, source, floor, mass: Arc::new(OnceLock::new()) }
    }

    fn table(&self) -> &MassTable {
        self.mass.get_or_init(|| build_mass_table(&self.tau, self.floor))
    }

    /// `θ(x) = ∫_x^1 τ` for `x ∈ [floor, 1]`.
    pub fn theta(&self, x: f64) -> f64 {
        let t = self.table();
        if x >= 1.0 {
            return 0.0;
        }
        let x = x.max(self.floor);
        // xs is descending; piece i spans [xs[i+1], xs[i]]
        let i = t.xs.partition_point(|&p| p > x).saturating_sub(1);
        t.theta[i] + piece_integral(&self.tau, x, t.xs[i])
    }

    /// `θ(floor)`: the largest mass reachable numerically.
    pub fn reachable_mass(&self) -> f64 {
        *self.table().theta.last().unwrap_or(&0.0)
    }

    /// `(2^-n, θ(2^-n))` for `n = 0..` down to the floor.
    pub fn divergence_trace(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut n = 0;
        loop {
            let eps = 2f64.powi(-n);
            if eps < self.floor * (1.0 - 1e-12) {
                break;
            }
            out.push((eps, self.theta(eps)));
            n += 1;
        }
        out
    }

    pub fn summary(&self) -> WitnessSummary {
        WitnessSummary {
            source: self.source.clone(),
            floor: self.floor,
            intervals: self.intervals.clone(),
            epsilons: self.epsilons.clone(),
            divergence_trace: self.divergence_trace(),
        }
    }

    /// Largest sampled value of `τ` on `[lo, hi]`, including breakpoints.
    pub fn sampled_max(&self, lo: f64, hi: f64) -> f64 {
        let mut pts = geometric_grid(lo.max(1e-300), hi, 257);
        pts.extend(self.tau.breakpoints_in(lo, hi));
        pts.into_iter().map(|x| self.tau.eval(x)).fold(0.0, f64::max)
    }
}

fn piece_integral(tau: &FunctionHandle, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let eval = |x: f64| tau.eval(x);
    let cfg = QuadConfig::absolute(1e-15).with_rel(1e-13);
    quad::integrate_fn(&eval, lo, hi, &[], cfg).map(|r| r.value).unwrap_or(f64::NAN)
}

fn build_mass_table(tau: &FunctionHandle, floor: f64) -> MassTable {
    let mut pts: Vec<f64> = Vec::new();
    let mut n = 0;
    loop {
        let d = 2f64.powi(-n);
        if d <= floor {
            break;
        }
        pts.push(d);
        n += 1;
    }
    pts.push(floor);
    pts.extend(quad::handle_breakpoints(tau, floor, 1.0));
    pts.retain(|&p| p >= floor && p <= 1.0);
    pts.sort_by(|a, b| b.total_cmp(a));
    pts.dedup();
    let mut theta = Vec::with_capacity(pts.len());
    theta.push(0.0);
    let (mut sum, mut comp) = (0.0_f64, 0.0_f64);
    for w in pts.windows(2) {
        let v = piece_integral(tau, w[1], w[0]);
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
        theta.push(sum + comp);
    }
    MassTable { xs: pts, theta }
}

/// Scan from `start` toward `limit` for the first point where `pred(g(x))`
/// holds and return it, refined by bisection. Steps are `|x|/128` or an
/// eighth of a half-oscillation of the phase, whichever is smaller.
fn first_hit(
    g: &dyn Fn(f64) -> f64,
    phase: Option<&Phase>,
    start: f64,
    limit: f64,
    pred: &dyn Fn(f64) -> bool,
) -> Option<f64> {
    if pred(g(start)) {
        return Some(start);
    }
    let dir = if limit < start { -1.0 } else { 1.0 };
    let mut x = start;
    loop {
        let mut step = x.abs() / 128.0;
        if let Some(p) = phase {
            step = step.min(p.left_step(x, 0.125));
        }
        let mut next = x + dir * step;
        if (dir < 0.0 && next <= limit) || (dir > 0.0 && next >= limit) {
            next = limit;
        }
        if pred(g(next)) {
            let (mut miss, mut hit) = (x, next);
            for _ in 0..200 {
                let mid = 0.5 * (miss + hit);
                if mid == miss || mid == hit {
                    break;
                }
                if pred(g(mid)) {
                    hit = mid;
                } else {
                    miss = mid;
                }
            }
            return Some(hit);
        }
        if next == limit {
            return None;
        }
        x = next;
    }
}

/// Witness for a non-integrable `f`: `τ = hf ≥ 0` where `h` is 1 on the
/// cores `[b_j, c_j]` cut out by the level sets `{±f ≥ 1/2}` and
/// `{±f ≤ 1/4}` and vanishes away from small transition bands. The
/// construction runs down to `2^-depth`; below the last core `h = 0`.
pub fn build_tau_l10(f: &FunctionHandle, depth: u32) -> Result<WitnessBundle, WitnessError> {
    let plus = quad::improper_integral(&f.positive_part(), 1e-9).kind;
    let sign = if plus == ImproperKind::DivergentPlus {
        1.0
    } else {
        let minus = quad::improper_integral(&f.negative_part(), 1e-9).kind;
        if minus == ImproperKind::DivergentPlus {
            -1.0
        } else {
            return Err(WitnessError::NotDivergentPositive { plus, minus });
        }
    };
    let floor = 2f64.powi(-(depth as i32));
    let fe = f.clone();
    let g = move |x: f64| sign * fe.eval(x);
    let phase = f.phase();

    let ge_half = |v: f64| v >= 0.5;
    let le_quarter = |v: f64| v <= 0.25;
    let le_eighth = |v: f64| v <= 0.125;

    let c0 = first_hit(&g, phase, 1.0, floor, &ge_half).ok_or(WitnessError::LevelSetNotFound { level: 0 })?;
    let mut cores: Vec<(f64, f64)> = Vec::new();
    let mut c = c0;
    loop {
        match first_hit(&g, phase, c, floor / 16.0, &le_quarter) {
            None => {
                cores.push((0.0, c));
                break;
            }
            Some(b) => {
                cores.push((b, c));
                match first_hit(&g, phase, b, floor, &ge_half) {
                    Some(nc) if nc < b => c = nc,
                    _ => break,
                }
            }
        }
    }

    // epsilons[j] lives in the gap (c_{j+1}, b_j)
    let mut epsilons = Vec::with_capacity(cores.len());
    for j in 0..cores.len() {
        let (b, c) = cores[j];
        if b == 0.0 {
            epsilons.push(0.0);
            continue;
        }
        let below = cores.get(j + 1).map(|n| n.1).unwrap_or(0.0);
        let gap = b - below;
        let left = first_hit(&g, phase, b, below, &le_eighth).map(|p| b - p).unwrap_or(gap);
        let mut eps = (0.4 * (c - b)).min(0.4 * gap).min(left);
        if let Some(&(_, cn)) = cores.get(j + 1) {
            let right = first_hit(&g, phase, cn, b, &le_eighth).map(|p| p - cn).unwrap_or(gap);
            eps = eps.min(right);
        }
        epsilons.push(eps);
    }
    let top = if c0 < 1.0 {
        let right = first_hit(&g, phase, c0, 1.0, &le_eighth).map(|p| p - c0).unwrap_or(1.0 - c0);
        (0.4 * (1.0 - c0)).min(right)
    } else {
        0.0
    };

    let profile_cores: Vec<Core> = cores
        .iter()
        .enumerate()
        .map(|(j, &(b, c))| {
            let right = if j == 0 { top } else { epsilons[j - 1] };
            Core::new(b, c, epsilons[j], right)
        })
        .collect();
    let h = GluingProfile::new(profile_cores)?.scaled(sign);
    let tau = make_semigroup_element(f, &h)?.with_label(format!("tau[{}]", f.label()));
    Ok(WitnessBundle::assemble(
        tau,
        Some(h),
        cores,
        epsilons,
        WitnessSource::LevelSets { f: f.label().to_string(), sign },
        floor,
    ))
}

/// Weighted space `L^p_w`, `p ∈ [1, ∞]` (`f64::INFINITY` for `p = ∞`).
#[derive(Debug, Clone)]
pub struct WeightSpec {
    pub p: f64,
    pub w: FunctionHandle,
}

impl WeightSpec {
    pub fn new(p: f64, w: FunctionHandle) -> Self {
        Self { p, w }
    }

    /// Hölder conjugate `p/(p-1)`.
    pub fn conjugate(&self) -> f64 {
        if self.p.is_infinite() {
            1.0
        } else {
            self.p / (self.p - 1.0)
        }
    }
}

/// Both criterion integrals near 0 for `p ∈ (1, ∞)`: exponent `-1/(p-1)`
/// and exponent `-p/(p-1)`. For `p = ∞` both entries describe `∫ 1/w`; for
/// `p = 1` they hold the dyadic limit probe of `w(0+)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    pub p: f64,
    pub statement_exponent: f64,
    pub statement_verdict: ImproperKind,
    pub proof_exponent: f64,
    pub proof_verdict: ImproperKind,
    /// `w(2^-40)/w(1)` for `p = 1`.
    pub weight_at_floor: Option<f64>,
    pub holds: bool,
}

fn power_of_weight(w: &FunctionHandle, e: f64) -> FunctionHandle {
    let wc = w.clone();
    FunctionHandle::new(format!("({})^({e})", w.label()), move |x| wc.eval(x).powf(e))
        .with_breakpoints(w.breakpoints_in(0.0, 1.0))
}

fn validate_weight(spec: &WeightSpec) -> Result<(), WitnessError> {
    if !(spec.p >= 1.0) {
        return Err(WitnessError::InvalidWeight(format!("p = {} is below 1", spec.p)));
    }
    for x in geometric_grid(2f64.powi(-WEIGHTED_FLOOR_EXP), 1.0, 200) {
        let v = spec.w.eval(x);
        if !(v > 0.0 && v.is_finite()) {
            return Err(WitnessError::InvalidWeight(format!("w({x}) = {v}")));
        }
    }
    Ok(())
}

pub fn criterion(spec: &WeightSpec) -> Result<CriterionReport, WitnessError> {
    validate_weight(spec)?;
    let p = spec.p;
    if p == 1.0 {
        let top = spec.w.eval(1.0);
        let samples: Vec<f64> = (32..=WEIGHTED_FLOOR_EXP).map(|n| spec.w.eval(2f64.powi(-n)) / top).collect();
        let last = *samples.last().unwrap();
        let decaying = samples.windows(2).all(|s| s[1] <= s[0] * 0.999) || last <= 1e-12;
        return Ok(CriterionReport {
            p,
            statement_exponent: 0.0,
            statement_verdict: ImproperKind::Unknown,
            proof_exponent: 0.0,
            proof_verdict: ImproperKind::Unknown,
            weight_at_floor: Some(last),
            holds: decaying,
        });
    }
    let (se, pe) = if p.is_infinite() { (-1.0, -1.0) } else { (-1.0 / (p - 1.0), -p / (p - 1.0)) };
    let sv = quad::improper_integral(&power_of_weight(&spec.w, se), 1e-9).kind;
    let pv = if pe == se { sv } else { quad::improper_integral(&power_of_weight(&spec.w, pe), 1e-9).kind };
    Ok(CriterionReport {
        p,
        statement_exponent: se,
        statement_verdict: sv,
        proof_exponent: pe,
        proof_verdict: pv,
        weight_at_floor: None,
        holds: pv == ImproperKind::DivergentPlus,
    })
}

/// Cumulative table of `D(x) = ∫_x^1 w^e` on dyadic points, completed by
/// an adaptive integral inside the containing panel.
struct TailTable {
    w: FunctionHandle,
    e: f64,
    xs: Vec<f64>,
    cum: Vec<f64>,
}

impl TailTable {
    fn new(w: FunctionHandle, e: f64, floor: f64) -> Self {
        let mut xs = vec![1.0, 0.75, 0.5];
        let mut n = 2;
        loop {
            let d = 2f64.powi(-n);
            if d < floor {
                break;
            }
            xs.push(d);
            n += 1;
        }
        xs.dedup();
        let mut table = Self { w, e, xs, cum: vec![0.0] };
        let mut acc = 0.0;
        for i in 1..table.xs.len() {
            acc += table.panel(table.xs[i], table.xs[i - 1]);
            table.cum.push(acc);
        }
        table
    }

    fn panel(&self, lo: f64, hi: f64) -> f64 {
        let (w, e) = (&self.w, self.e);
        let f = |x: f64| w.eval(x).powf(e);
        let cfg = QuadConfig::absolute(0.0).with_rel(1e-15);
        quad::integrate_fn(&f, lo, hi, &w.breakpoints_in(lo, hi), cfg)
            .map(|r| r.value)
            .unwrap_or(f64::NAN)
    }

    fn eval(&self, x: f64) -> f64 {
        if x >= 1.0 {
            return 0.0;
        }
        let i = self.xs.partition_point(|&p| p > x).saturating_sub(1);
        self.cum[i] + self.panel(x, self.xs[i])
    }
}

/// Witness for a weight: `τ ∈ L^p_w` with `∫_0^1 τ = ∞`.
///
/// * `p = ∞`: `τ = 1/w`.
/// * `p ∈ (1,∞)`: `τ = w^{-q}/∫_x^1 w^{-q}` with `q = p/(p-1)` on `(0, 1/2]`,
///   blended smoothly into the constant `τ(1/2)` over `[1/2, 3/4]`.
/// * `p = 1`: `w` is normalized to `w(1) = 1` and must be nondecreasing;
///   `τ` is a smoothed `Σ χ_{A_k}/m(A_k)` over `A_k = {w ∈ [1/(k+1)², 1/k²)}`,
///   for `k ≤ 40`.
pub fn build_tau_weighted(spec: &WeightSpec) -> Result<WitnessBundle, WitnessError> {
    let report = criterion(spec)?;
    if !report.holds {
        return Err(WitnessError::CriterionFails(Box::new(report)));
    }
    let floor = 2f64.powi(-WEIGHTED_FLOOR_EXP);
    let source = WitnessSource::Weighted { w: spec.w.label().to_string(), p: spec.p };
    let w = spec.w.clone();
    if spec.p.is_infinite() {
        let tau = FunctionHandle::new(format!("1/({})", w.label()), move |x| 1.0 / w.eval(x))
            .with_breakpoints(spec.w.breakpoints_in(0.0, 1.0));
        return Ok(WitnessBundle::assemble(tau, None, Vec::new(), Vec::new(), source, floor));
    }
    if spec.p == 1.0 {
        return build_p1(spec, source);
    }
    let q = spec.conjugate();
    let table = Arc::new(TailTable::new(w.clone(), -q, floor));
    let core = {
        let (w, table) = (w.clone(), table.clone());
        move |x: f64| w.eval(x).powf(-q) / table.eval(x)
    };
    let at_half = core(0.5);
    let tau = FunctionHandle::new(format!("w^-q/D[{}]", spec.w.label()), move |x| {
        if x <= 0.5 {
            core(x)
        } else if x >= 0.75 {
            at_half
        } else {
            let s = smooth_step((x - 0.5) / 0.25);
            (1.0 - s) * core(x) + s * at_half
        }
    })
    .with_breakpoints({
        let mut b = spec.w.breakpoints_in(0.0, 1.0);
        b.extend([0.5, 0.75]);
        b
    });
    Ok(WitnessBundle::assemble(tau, None, Vec::new(), Vec::new(), source, floor))
}

fn build_p1(spec: &WeightSpec, source: WitnessSource) -> Result<WitnessBundle, WitnessError> {
    let floor = 2f64.powi(-WEIGHTED_FLOOR_EXP);
    let top = spec.w.eval(1.0);
    let wn = |x: f64| spec.w.eval(x) / top;
    let grid = geometric_grid(floor, 1.0, 2000);
    for pair in grid.windows(2) {
        // grid descends, so w must not increase along it
        if wn(pair[1]) > wn(pair[0]) * (1.0 + 1e-12) {
            return Err(WitnessError::NonMonotoneWeight { x: pair[1] });
        }
    }
    let crossing = |level: f64| -> Option<f64> {
        if wn(1.0) < level {
            return None;
        }
        if wn(floor) >= level {
            return None;
        }
        let (mut lo, mut hi) = (floor, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if wn(mid) >= level {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    };
    let mut xs = vec![1.0];
    for k in 2..=P1_LEVELS + 1 {
        match crossing(1.0 / (k * k) as f64) {
            Some(x) if x < *xs.last().unwrap() => xs.push(x),
            _ => break,
        }
    }
    if xs.len() < 3 {
        return Err(WitnessError::LevelSetNotFound { level: xs.len() });
    }
    let mut cores = Vec::new();
    let mut intervals = Vec::new();
    let mut epsilons = Vec::new();
    for pair in xs.windows(2) {
        let (hi, lo) = (pair[0], pair[1]);
        let m = hi - lo;
        let eps = 0.1 * m;
        cores.push(Core::new(lo + eps, hi - eps, eps, eps).with_height(1.0 / m));
        intervals.push((lo, hi));
        epsilons.push(eps);
    }
    let profile = GluingProfile::new(cores)?;
    let prof = profile.clone();
    let tau = FunctionHandle::new(format!("levelsets[{}]", spec.w.label()), move |x| prof.eval(x))
        .with_breakpoints(profile.breakpoints());
    let last = *xs.last().unwrap();
    Ok(WitnessBundle::assemble(tau, Some(profile), intervals, epsilons, source, last))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderReport {
    pub epsilon: f64,
    pub lhs: f64,
    pub weighted_norm: f64,
    pub dual_norm: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `∫τ ≤ (∫(wτ)^p)^{1/p} (∫ w^{-q})^{1/q}` with `q = p/(p-1)`, all on
/// `[1e-6, 1]`.
pub fn holder_check(spec: &WeightSpec, tau: &FunctionHandle) -> Result<HolderReport, WitnessError> {
    let p = spec.p;
    if !(p > 1.0 && p.is_finite()) {
        return Err(WitnessError::InvalidWeight(format!("Hölder check needs p in (1,inf), got {p}")));
    }
    let q = spec.conjugate();
    let eps = 1e-6;
    let cfg = QuadConfig::absolute(1e-13).with_rel(1e-12);
    let (w, t) = (&spec.w, tau);
    let mut bps = w.breakpoints_in(eps, 1.0);
    bps.extend(t.breakpoints_in(eps, 1.0));
    let integral = |f: &dyn Fn(f64) -> f64| -> Result<f64, QuadError> {
        let r = quad::integrate_fn(f, eps, 1.0, &bps, cfg)?;
        Ok(r.value)
    };
    let lhs = integral(&|x| t.eval(x))?;
    let weighted = integral(&|x| (w.eval(x) * t.eval(x)).abs().powf(p))?.powf(1.0 / p);
    let dual = integral(&|x| w.eval(x).powf(-q))?.powf(1.0 / q);
    let rhs = weighted * dual;
    Ok(HolderReport { epsilon: eps, lhs, weighted_norm: weighted, dual_norm: dual, rhs, holds: lhs <= rhs * (1.0 + 1e-9) + 1e-12 })
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionSequence {
    /// `α_0 = 1 > α_1 > … > α_K`.
    pub alphas: Vec<f64>,
    /// `θ(α_k)` as tabulated.
    pub thetas: Vec<f64>,
    pub source: WitnessSource,
}

impl PartitionSequence {
    pub fn depth(&self) -> usize {
        self.alphas.len() - 1
    }
}

/// Invert `θ` at the integers `0..=K`.
pub fn build_partition(bundle: &WitnessBundle, k_max: usize) -> Result<PartitionSequence, WitnessError> {
    let reachable = bundle.reachable_mass();
    if (k_max as f64) > reachable {
        return Err(WitnessError::RangeExhausted { requested: k_max, reachable, floor: bundle.floor });
    }
    let table = bundle.table();
    let mut alphas = vec![1.0];
    let mut thetas = vec![0.0];
    for k in 1..=k_max {
        let target = k as f64;
        // piece i spans [xs[i+1], xs[i]] with theta[i] <= target <= theta[i+1]
        let i = table.theta.partition_point(|&t| t < target).saturating_sub(1).min(table.xs.len() - 2);
        let (mut lo, mut hi) = (table.xs[i + 1], table.xs[i]);
        let base = table.theta[i];
        let theta_at = |x: f64| base + piece_integral(&bundle.tau, x, table.xs[i]);
        let mut x = 0.5 * (lo + hi);
        let mut value = theta_at(x);
        for _ in 0..200 {
            let resid = value - target;
            if resid.abs() < 1e-11 {
                break;
            }
            if resid > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let slope = bundle.tau.eval(x);
            let mut next = x + resid / slope;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if next == x {
                break;
            }
            x = next;
            value = theta_at(x);
        }
        alphas.push(x);
        thetas.push(value);
    }
    Ok(PartitionSequence { alphas, thetas, source: bundle.source.clone() })
}
