use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use hpf_core::analyticpf::{self, AnalyticError, InterpolationSystem};
use hpf_core::finitepart::{pf_riesz, PFQuery, PfError};
use hpf_core::quad::{self, ImproperKind};
use hpf_core::realfunc::FunctionHandle;
use hpf_core::summation::{
    default_antiderivative, interface_sum, s_dblstar, verify_based_at_infinity, BinarySeq, SummationError,
};
use hpf_core::witness::{
    build_partition, build_tau_l10, build_tau_weighted, criterion, WeightSpec, WitnessBundle, WitnessError,
    WEIGHTED_FLOOR_EXP,
};

use crate::expr::{parse_handle, ParseError};
use crate::report::{Record, Report};
use crate::suite;

pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const TOLERANCE_ENV: &str = "HPF_TOLERANCE";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("computation failed: {0}")]
    Compute(String),
}

impl CliError {
    /// 1 = check failure, 2 = precondition, 3 = parse/config.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Config(_) => 3,
            CliError::Precondition(_) => 2,
            CliError::Compute(_) => 1,
        }
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        CliError::Parse(e.to_string())
    }
}

impl From<PfError> for CliError {
    fn from(e: PfError) -> Self {
        match e {
            PfError::PreconditionFailed(_) | PfError::PoleAt { .. } | PfError::PoleAtNonpositiveInteger { .. } => {
                CliError::Precondition(e.to_string())
            }
            _ => CliError::Compute(e.to_string()),
        }
    }
}

impl From<WitnessError> for CliError {
    fn from(e: WitnessError) -> Self {
        match e {
            WitnessError::Func(_) | WitnessError::Quad(_) => CliError::Compute(e.to_string()),
            _ => CliError::Precondition(e.to_string()),
        }
    }
}

impl From<SummationError> for CliError {
    fn from(e: SummationError) -> Self {
        match e {
            SummationError::Parse { .. } => CliError::Parse(e.to_string()),
            SummationError::PartitionTooShallow { .. } => CliError::Precondition(e.to_string()),
            _ => CliError::Compute(e.to_string()),
        }
    }
}

impl From<AnalyticError> for CliError {
    fn from(e: AnalyticError) -> Self {
        match e {
            AnalyticError::BaseTooSmall { .. } | AnalyticError::InvalidOrder(_) => CliError::Precondition(e.to_string()),
            _ => CliError::Compute(e.to_string()),
        }
    }
}

/// Global tolerance: `HPF_TOLERANCE` when set, otherwise 1e-9.
pub fn default_tolerance() -> Result<f64, CliError> {
    match std::env::var(TOLERANCE_ENV) {
        Ok(s) => match s.trim().parse::<f64>() {
            Ok(t) if t > 0.0 && t.is_finite() => Ok(t),
            _ => Err(CliError::Config(format!("{TOLERANCE_ENV}={s} is not a positive number"))),
        },
        Err(_) => Ok(DEFAULT_TOLERANCE),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Parser, Serialize)]
#[command(name = "hpf", version, about = "Finite parts, divergence witnesses and summation interfaces")]
pub struct Cli {
    #[arg(long, global = true, value_enum, default_value = "json")]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Finite part Γ(α)J^α f(x) by integration by parts
    Pf(PfArgs),
    /// Build a divergence witness τ
    Witness(WitnessArgs),
    /// Unit-mass partition α_k of a witness
    Partition(PartitionArgs),
    /// Summation interface on a binary sequence
    Summation(SummationArgs),
    /// Interpolating entire family and its checks
    Analytic(AnalyticArgs),
    /// Full verification suite
    VerifyAll(VerifyArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PfArgs {
    /// Expression for f, e.g. "cos(s)"
    #[arg(long)]
    pub f: String,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub x: f64,
    /// Integration-by-parts depth; defaults to the least n with α + n > 0
    #[arg(long)]
    pub n: Option<usize>,
    /// Inclusive depth range "a..b" for a consistency sweep
    #[arg(long)]
    pub sweep_n: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Default)]
pub struct SourceArgs {
    /// Level-set witness from a non-L¹ function f
    #[arg(long)]
    pub f: Option<String>,
    /// Weight w of the space L^p_w
    #[arg(long)]
    pub w: Option<String>,
    /// Exponent p: a number >= 1 or "inf"
    #[arg(long)]
    pub p: Option<String>,
    /// Explicit τ realized down to 2^-40
    #[arg(long)]
    pub tau: Option<String>,
    /// Dyadic depth of the level-set construction
    #[arg(long, default_value_t = hpf_core::witness::DEFAULT_DEPTH)]
    pub depth: u32,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct WitnessArgs {
    #[command(flatten)]
    pub source: SourceArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PartitionArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Take τ from the witness builder (default source: w = x, p = inf)
    #[arg(long)]
    pub tau_from_witness: bool,
    #[arg(long = "K", default_value_t = 20)]
    pub k: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SummationArgs {
    /// Binary sequence, e.g. "0110[01]*"
    #[arg(long)]
    pub a: String,
    /// Eventually-equal sequence to compare against
    #[arg(long)]
    pub compare: Option<String>,
    #[arg(long = "N", default_value_t = 16)]
    pub n: usize,
    #[command(flatten)]
    pub source: SourceArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnalyticArgs {
    #[arg(long, default_value = "0[1]*")]
    pub a: String,
    #[arg(long = "K", default_value_t = 6)]
    pub k: usize,
    #[arg(long, default_value_t = 6.0)]
    pub base: f64,
    /// Product truncation; defaults to K + 10
    #[arg(long = "J")]
    pub j: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(cli: &Cli) -> Result<Report, CliError> {
    let tol = default_tolerance()?;
    match &cli.command {
        Command::Pf(a) => cmd_pf(a, tol),
        Command::Witness(a) => cmd_witness(a),
        Command::Partition(a) => cmd_partition(a),
        Command::Summation(a) => cmd_summation(a),
        Command::Analytic(a) => cmd_analytic(a),
        Command::VerifyAll(a) => Ok(suite::verify_all(a.seed)),
    }
}

pub const PF_ANCHOR: &str = "riesz-integration-by-parts";
pub const L10_ANCHOR: &str = "level-set-witness";
pub const WEIGHTED_ANCHOR: &str = "weighted-witness";
pub const PARTITION_ANCHOR: &str = "unit-mass-partition";
pub const SUMMATION_ANCHOR: &str = "summation-interface";
pub const ANALYTIC_ANCHOR: &str = "interpolating-entire-family";

fn parse_range(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Config(format!("sweep range `{s}` is not of the form a..b"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
    if a > b {
        return Err(bad());
    }
    Ok((a, b))
}

/// Least `n >= 0` with `α + n > 0`.
pub fn min_depth(alpha: f64) -> usize {
    if alpha > 0.0 {
        0
    } else {
        (-alpha).floor() as usize + 1
    }
}

/// `∫_0^x s^{α-1} f(s) ds` directly, for `α > 0`.
pub fn direct_riesz(f: &FunctionHandle, alpha: f64, x: f64, tol: f64) -> Option<f64> {
    let g = f.clone();
    let mut h = FunctionHandle::new("direct", move |s| s.powf(alpha - 1.0) * g.eval(s));
    if let Some(ph) = f.phase() {
        h = h.with_phase(ph.clone());
    }
    match quad::improper_integral_on(&h, x, tol).kind {
        ImproperKind::Convergent { value, .. } => Some(value),
        _ => None,
    }
}

pub fn cmd_pf(args: &PfArgs, default_tol: f64) -> Result<Report, CliError> {
    let tol = args.tol.unwrap_or(default_tol);
    if !(args.x > 0.0 && args.x <= 1.0) {
        return Err(CliError::Config(format!("x = {} is outside (0, 1]", args.x)));
    }
    let f = parse_handle(&args.f)?;
    let n = args.n.unwrap_or_else(|| min_depth(args.alpha));
    let mut report = Report::new("pf", args);
    let res = pf_riesz(&PFQuery::new(f.clone(), args.alpha, args.x, n), tol)?;
    report.push(Record::info("pf-value", PF_ANCHOR, res.value).with_tolerance(res.error_estimate()));
    report.set_data("pf", &res);
    if args.alpha > 0.0 {
        match direct_riesz(&f, args.alpha, args.x, tol) {
            Some(direct) => report.push(Record::close("direct-quadrature", PF_ANCHOR, res.value, direct, 1e-6)),
            None => report.push(
                Record::flag("direct-quadrature", PF_ANCHOR, false).with_detail("direct integral did not converge"),
            ),
        }
    }
    if let Some(range) = &args.sweep_n {
        let (lo, hi) = parse_range(range)?;
        let mut sweep = Vec::new();
        for depth in lo..=hi {
            let r = pf_riesz(&PFQuery::new(f.clone(), args.alpha, args.x, depth), tol)?;
            sweep.push((depth, r.value));
        }
        let max = sweep.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        let min = sweep.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        report.push(Record::at_most("depth-consistency-spread", PF_ANCHOR, max - min, 1e-7));
        report.set_data("sweep", &sweep);
    }
    Ok(report)
}

pub fn parse_p(s: &str) -> Result<f64, CliError> {
    match s.trim() {
        "inf" | "infinity" | "∞" => Ok(f64::INFINITY),
        t => t.parse::<f64>().map_err(|_| CliError::Config(format!("p = `{s}` is not a number or `inf`"))),
    }
}

/// The bundle selected by the source flags, with its anchor tag.
pub fn build_source(src: &SourceArgs, default_weight: bool) -> Result<(WitnessBundle, &'static str), CliError> {
    let chosen = [src.f.is_some(), src.w.is_some(), src.tau.is_some()].iter().filter(|b| **b).count();
    if chosen > 1 {
        return Err(CliError::Config("give only one of --f, --w, --tau".into()));
    }
    if let Some(f) = &src.f {
        let f = parse_handle(f)?;
        return Ok((build_tau_l10(&f, src.depth)?, L10_ANCHOR));
    }
    if let Some(t) = &src.tau {
        let tau = parse_handle(t)?;
        return Ok((WitnessBundle::from_tau(tau, 2f64.powi(-WEIGHTED_FLOOR_EXP)), PARTITION_ANCHOR));
    }
    let w = match (&src.w, default_weight) {
        (Some(w), _) => w.clone(),
        (None, true) => "x".to_string(),
        (None, false) => return Err(CliError::Config("one of --f, --w, --tau is required".into())),
    };
    let p = parse_p(src.p.as_deref().unwrap_or("inf"))?;
    let spec = WeightSpec::new(p, parse_handle(&w)?);
    Ok((build_tau_weighted(&spec)?, WEIGHTED_ANCHOR))
}

/// Nonnegativity of `τ` on a geometric grid of `[floor, 1]` plus its
/// breakpoints; returns the minimum found.
pub fn tau_minimum(bundle: &WitnessBundle, samples: usize) -> f64 {
    let (lo, hi) = (bundle.floor.ln(), 0.0f64);
    let mut m = f64::INFINITY;
    for i in 0..samples {
        let x = (lo + (hi - lo) * (i as f64 + 0.5) / samples as f64).exp();
        m = m.min(bundle.tau.eval(x));
    }
    for b in bundle.tau.breakpoints_in(bundle.floor, 1.0) {
        m = m.min(bundle.tau.eval(b));
    }
    m
}

pub fn trace_strictly_increasing(bundle: &WitnessBundle, first: i32, last: i32) -> bool {
    let thetas: Vec<f64> = (first..=last).map(|n| bundle.theta(2f64.powi(-n))).collect();
    thetas.windows(2).all(|w| w[1] > w[0])
}

pub fn cmd_witness(args: &WitnessArgs) -> Result<Report, CliError> {
    let (bundle, anchor) = build_source(&args.source, false)?;
    let mut report = Report::new("witness", args);
    if let (Some(w), Some(_)) = (&args.source.w, &args.source.p) {
        let spec = WeightSpec::new(parse_p(args.source.p.as_deref().unwrap_or("inf"))?, parse_handle(w)?);
        let c = criterion(&spec)?;
        report.push(Record::flag("criterion", anchor, c.holds));
        report.set_data("criterion", &c);
    }
    report.push(Record::at_most("tau-negativity", anchor, -tau_minimum(&bundle, 10_000), 0.0));
    if let Some(h) = &bundle.h {
        report.push(Record::at_most("h-sup-norm", anchor, h.sup_bound(), 1.0));
    }
    let last = (-bundle.floor.log2()).round() as i32;
    report.push(Record::flag("divergence-trace-increasing", anchor, trace_strictly_increasing(&bundle, 0, last)));
    report.push(Record::info("reachable-mass", anchor, bundle.reachable_mass()));
    report.set_data("witness", &bundle.summary());
    Ok(report)
}

/// `max_k |∫_{α_{k+1}}^{α_k} τ - 1|` by direct quadrature.
pub fn unit_mass_defect(bundle: &WitnessBundle, alphas: &[f64]) -> Result<f64, CliError> {
    let cfg = quad::QuadConfig::absolute(1e-13).with_rel(1e-12);
    let mut worst = 0.0_f64;
    for w in alphas.windows(2) {
        let m = quad::integrate_with(&bundle.tau, w[1], w[0], cfg).map_err(|e| CliError::Compute(e.to_string()))?;
        worst = worst.max((m.value - 1.0).abs());
    }
    Ok(worst)
}

pub fn cmd_partition(args: &PartitionArgs) -> Result<Report, CliError> {
    let (bundle, _) = build_source(&args.source, args.tau_from_witness || args.source.tau.is_none())?;
    let part = build_partition(&bundle, args.k)?;
    let mut report = Report::new("partition", args);
    let defect = unit_mass_defect(&bundle, &part.alphas)?;
    report.push(Record::at_most("unit-mass-defect", PARTITION_ANCHOR, defect, 1e-6));
    report.set_data("partition", &part);
    Ok(report)
}

fn parse_seq(s: &str) -> Result<BinarySeq, CliError> {
    s.parse::<BinarySeq>().map_err(CliError::from)
}

/// Checks of one interface run: increments, mask bound and constancy of `S*`.
pub fn summation_records(
    a: &BinarySeq,
    trace: &hpf_core::summation::SummationTrace,
    label: &str,
) -> Vec<Record> {
    let inc = trace
        .increments
        .iter()
        .enumerate()
        .map(|(n, d)| (d - a.get(n) as f64).abs())
        .fold(0.0, f64::max);
    let star = match s_dblstar(&trace.s_terms, a, f64::INFINITY) {
        Ok(c) => c.deviation,
        Err(_) => f64::INFINITY,
    };
    vec![
        Record::at_most(format!("{label}increment-identity"), SUMMATION_ANCHOR, inc, 1e-6),
        Record::at_most(format!("{label}mask-defect"), SUMMATION_ANCHOR, trace.mask_defect, 0.5),
        Record::at_most(format!("{label}s-star-deviation"), SUMMATION_ANCHOR, star, 1e-6),
    ]
}

pub fn cmd_summation(args: &SummationArgs) -> Result<Report, CliError> {
    let a = parse_seq(&args.a)?;
    let (bundle, _) = build_source(&args.source, true)?;
    let part = build_partition(&bundle, args.n)?;
    let p = default_antiderivative(&part, args.n);
    let build = |s: &BinarySeq| interface_sum(s, &part, &bundle, &p, args.n);
    let trace = build(&a)?;
    let mut report = Report::new("summation", args);
    report.extend(summation_records(&a, &trace, ""));
    report.set_data("trace", &trace);
    if let Some(c) = &args.compare {
        let a2 = parse_seq(c)?;
        let horizon = args.n + 64;
        let from = (0..horizon).rev().find(|&i| a.get(i) != a2.get(i)).map_or(0, |i| i + 1);
        if from > args.n {
            return Err(CliError::Precondition(format!(
                "sequences differ at index {} beyond the depth N = {}",
                from - 1,
                args.n
            )));
        }
        let r = verify_based_at_infinity(build, &a, &a2, from, 1e-6)?;
        report.push(Record::flag("based-at-infinity", SUMMATION_ANCHOR, r.holds));
        report.set_data("based_at_infinity", &r);
    }
    Ok(report)
}

/// All checks on one interpolation system: interpolation, coefficient
/// bound, increments, growth, derivative bound and a Cauchy cross-check.
pub fn analytic_records(sys: &InterpolationSystem, label: &str) -> Result<(Vec<Record>, serde_json::Value), CliError> {
    let mut out = Vec::new();
    let k = sys.k();
    let interp = (1..=k)
        .map(|i| {
            let v = analyticpf::eval_f_real(sys, sys.beta.beta(i)).value;
            (v - sys.s(i)).abs() / sys.s(i).abs().max(1.0)
        })
        .fold(0.0, f64::max);
    out.push(Record::at_most(format!("{label}interpolation"), ANALYTIC_ANCHOR, interp, 1e-6));

    // |B_k| <= C s_k base^{-2k}, C fitted on the first nonzero coefficient
    let ratios: Vec<f64> = (1..=k)
        .filter(|&i| sys.s(i) != 0.0)
        .map(|i| {
            let b = analyticpf::coeff_b(sys, i);
            (b.log_magnitude - sys.s(i).abs().ln() + 2.0 * i as f64 * sys.beta.base.ln()).exp()
        })
        .collect();
    let c = ratios.first().copied().unwrap_or(0.0);
    let worst = ratios.iter().fold(0.0_f64, |m, r| m.max(r / c.max(f64::MIN_POSITIVE)));
    out.push(Record::info(format!("{label}coefficient-constant"), ANALYTIC_ANCHOR, c));
    out.push(Record::at_most(format!("{label}coefficient-bound-ratio"), ANALYTIC_ANCHOR, worst, 1.0 + 1e-12));

    let inc = analyticpf::increment_check(sys, 1e-6)?;
    out.push(Record::flag(format!("{label}leading-bit-zero"), ANALYTIC_ANCHOR, inc.leading_bit_zero));
    let bits = inc
        .entries
        .iter()
        .map(|e| (e.difference - e.bit as f64).abs().max((e.quadrature - e.bit as f64).abs()))
        .fold(0.0, f64::max);
    out.push(Record::at_most(format!("{label}increment-bits"), ANALYTIC_ANCHOR, bits, 1e-6));
    out.push(Record::at_most(format!("{label}increment-route-gap"), ANALYTIC_ANCHOR, inc.max_route_gap, 1e-6));

    let rhos: Vec<f64> = sys.beta.betas.clone();
    let growth = analyticpf::check_growth(sys, &rhos);
    out.push(Record::info(format!("{label}growth-log-constant"), ANALYTIC_ANCHOR, growth.log_c));
    out.push(Record::flag(format!("{label}growth-bound"), ANALYTIC_ANCHOR, growth.holds));
    let dbound = analyticpf::check_derivative_bound(sys, &rhos);
    out.push(Record::info(format!("{label}derivative-log-constant"), ANALYTIC_ANCHOR, dbound.log_c));
    out.push(Record::flag(format!("{label}derivative-bound"), ANALYTIC_ANCHOR, dbound.holds));

    let z = num_complex::Complex64::new(1.0, 0.5);
    let cauchy = analyticpf::deriv_via_cauchy(sys, z, sys.beta.beta(1))?;
    let term = analyticpf::deriv_termwise(sys, z);
    let gap = (num_complex::Complex64::new(cauchy.re, cauchy.im) - term).norm() / term.norm().max(1.0);
    out.push(Record::at_most(format!("{label}cauchy-vs-termwise"), ANALYTIC_ANCHOR, gap, 1e-8));

    let data = serde_json::json!({
        "system": sys,
        "increments": inc,
        "growth": growth,
        "derivative_bound": dbound,
        "cauchy": cauchy,
    });
    Ok((out, data))
}

pub fn cmd_analytic(args: &AnalyticArgs) -> Result<Report, CliError> {
    let a = parse_seq(&args.a)?;
    let beta = analyticpf::make_beta(args.k, args.base)?;
    let sys = InterpolationSystem::new(beta, a, args.j.unwrap_or(args.k + 10))?;
    let mut report = Report::new("analytic", args);
    let (records, data) = analytic_records(&sys, "")?;
    report.extend(records);
    report.set_data("analytic", &data);
    Ok(report)
}
