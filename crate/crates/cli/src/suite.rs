//! The consolidated verification suite behind `verify-all`: eight
//! independent check groups, run concurrently and assembled in order.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use hpf_core::analyticpf::{self, pf_meromorphic, InterpolationSystem, LaurentData};
use hpf_core::finitepart::{
    cos_handle, exp_handle, monomial, pf_depth_consistency, pf_riesz, reciprocal_shift_handle, PFQuery,
};
use hpf_core::quad::{self, QuadConfig};
use hpf_core::realfunc::FunctionHandle;
use hpf_core::summation::{
    default_antiderivative, interface_sum, verify_based_at_infinity, BinarySeq, Tail,
};
use hpf_core::witness::{
    build_partition, build_tau_l10, build_tau_weighted, holder_check, WeightSpec, WitnessBundle,
};

use crate::commands::{
    analytic_records, direct_riesz, summation_records, tau_minimum, trace_strictly_increasing, unit_mass_defect,
    ANALYTIC_ANCHOR, L10_ANCHOR, PARTITION_ANCHOR, PF_ANCHOR, SUMMATION_ANCHOR, WEIGHTED_ANCHOR,
};
use crate::expr::parse_handle;
use crate::report::{Record, Report};

pub const MEROMORPHIC_ANCHOR: &str = "meromorphic-finite-part";

#[derive(Debug, Clone, Copy, Serialize)]
struct SuiteConfig {
    seed: u64,
    groups: usize,
}

type Group = fn(u64) -> Vec<Record>;

const GROUPS: [(&str, Group); 8] = [
    ("closed-forms", closed_forms),
    ("continuation", continuation),
    ("level-set-witness", level_set_witness),
    ("weighted-witness", weighted_witness),
    ("partition", partition),
    ("summation", summation),
    ("appendix", appendix),
    ("meromorphic", meromorphic),
];

/// Run every group with the given seed; record order is fixed.
pub fn verify_all(seed: u64) -> Report {
    let mut report = Report::new("verify-all", &SuiteConfig { seed, groups: GROUPS.len() });
    let results: Vec<Vec<Record>> = GROUPS
        .par_iter()
        .enumerate()
        .map(|(i, (name, g))| {
            let rs = g(seed.wrapping_add(i as u64));
            rs.into_iter().map(|mut r| {
                r.name = format!("{name}/{}", r.name);
                r
            }).collect()
        })
        .collect();
    for rs in results {
        report.extend(rs);
    }
    report
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn failure(name: &str, anchor: &str, e: impl std::fmt::Display) -> Record {
    Record::flag(name, anchor, false).with_detail(e.to_string())
}

/// `s^m` against `x^{α+m}/(α+m)`.
pub fn closed_forms(_seed: u64) -> Vec<Record> {
    let mut out = Vec::new();
    for m in 0..=3u32 {
        for alpha in [-0.5, -1.5, -2.5] {
            for x in [0.25, 0.5, 1.0] {
                let e = alpha + m as f64;
                let name = format!("s^{m} alpha={alpha} x={x}");
                let n = crate::commands::min_depth(alpha);
                match pf_riesz(&PFQuery::new(monomial(m), alpha, x, n), 1e-12) {
                    Ok(r) => out.push(Record::close(name, PF_ANCHOR, r.value, x.powf(e) / e, 1e-8)),
                    Err(err) => out.push(failure(&name, PF_ANCHOR, err)),
                }
            }
        }
    }
    out
}

fn test_functions() -> [FunctionHandle; 3] {
    [cos_handle(), exp_handle(), reciprocal_shift_handle()]
}

/// Convergent regime against direct quadrature; depth independence for
/// `α ∈ (-1, 0)`.
pub fn continuation(seed: u64) -> Vec<Record> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    let mut pos = vec![0.25, 0.5, 0.75];
    pos.push(r.random_range(0.05..0.95));
    let mut negs = vec![-0.25, -0.5, -0.75];
    negs.push(r.random_range(-0.95..-0.05));
    for f in test_functions() {
        for &alpha in &pos {
            let name = format!("{} alpha={alpha:.6} direct", f.label());
            let pf = pf_riesz(&PFQuery::new(f.clone(), alpha, 1.0, 0), 1e-12);
            match (pf, direct_riesz(&f, alpha, 1.0, 1e-12)) {
                (Ok(p), Some(d)) => out.push(Record::close(name, PF_ANCHOR, p.value, d, 1e-6)),
                (Err(e), _) => out.push(failure(&name, PF_ANCHOR, e)),
                (_, None) => out.push(failure(&name, PF_ANCHOR, "direct integral did not converge")),
            }
        }
        for &alpha in &negs {
            for (n1, n2) in [(1, 2), (1, 3), (2, 3)] {
                let name = format!("{} alpha={alpha:.6} depths {n1},{n2}", f.label());
                match pf_depth_consistency(&f, alpha, 1.0, n1, n2, 1e-12) {
                    Ok(d) => out.push(Record::at_most(name, PF_ANCHOR, d, 1e-7)),
                    Err(e) => out.push(failure(&name, PF_ANCHOR, e)),
                }
            }
        }
    }
    out
}

pub fn oscillating_example() -> FunctionHandle {
    parse_handle("sin(1/x)/x").expect("fixed expression parses")
}

/// The level-set bundle of `sin(1/x)/x` at the default depth, shared by
/// the witness and partition groups.
pub fn l10_bundle() -> Result<&'static WitnessBundle, String> {
    static CELL: OnceLock<Result<WitnessBundle, String>> = OnceLock::new();
    CELL.get_or_init(|| build_tau_l10(&oscillating_example(), hpf_core::witness::DEFAULT_DEPTH).map_err(|e| e.to_string()))
        .as_ref()
        .map_err(|e| e.clone())
}

/// `∫_lo^hi (f⁺ - τ)`.
pub fn positive_part_excess(f: &FunctionHandle, bundle: &WitnessBundle, lo: f64) -> Result<f64, String> {
    let cfg = QuadConfig::absolute(1e-10).with_rel(1e-10);
    let fp = quad::integrate_with(&f.positive_part(), lo, 1.0, cfg).map_err(|e| e.to_string())?;
    let t = quad::integrate_with(&bundle.tau, lo, 1.0, cfg).map_err(|e| e.to_string())?;
    Ok(fp.value - t.value)
}

pub fn level_set_witness(seed: u64) -> Vec<Record> {
    let bundle = match l10_bundle() {
        Ok(b) => b,
        Err(e) => return vec![failure("build", L10_ANCHOR, e)],
    };
    let mut out = Vec::new();
    let mut r = rng(seed);
    let mut min_tau = tau_minimum(bundle, 5_000);
    for _ in 0..5_000 {
        let x: f64 = r.random_range(bundle.floor..1.0);
        min_tau = min_tau.min(bundle.tau.eval(x));
    }
    out.push(Record::at_most("tau-negativity", L10_ANCHOR, -min_tau, 0.0));
    let h_sup = bundle.h.as_ref().map_or(f64::INFINITY, |h| h.sup_bound());
    out.push(Record::at_most("h-sup-norm", L10_ANCHOR, h_sup, 1.0));
    out.push(Record::flag("divergence-trace-increasing", L10_ANCHOR, trace_strictly_increasing(bundle, 4, 20)));
    match positive_part_excess(&oscillating_example(), bundle, 1e-6) {
        Ok(v) => out.push(Record::at_most("positive-part-excess", L10_ANCHOR, v, 1.0 + 1e-3)),
        Err(e) => out.push(failure("positive-part-excess", L10_ANCHOR, e)),
    }
    out
}

fn power_handle(e: f64) -> FunctionHandle {
    FunctionHandle::new(format!("x^{e}"), move |x: f64| x.powf(e))
}

/// Largest `|τ(x) - expected(x)| / |expected(x)|` on a geometric grid.
pub fn relative_gap(tau: &FunctionHandle, expected: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    (0..n)
        .map(|i| {
            let x = lo * (hi / lo).powf(i as f64 / (n - 1) as f64);
            let e = expected(x);
            (tau.eval(x) - e).abs() / e.abs()
        })
        .fold(0.0, f64::max)
}

pub fn weighted_witness(seed: u64) -> Vec<Record> {
    let mut out = Vec::new();
    let x_weight = || FunctionHandle::new("x", |x| x);
    match build_tau_weighted(&WeightSpec::new(f64::INFINITY, x_weight())) {
        Ok(b) => out.push(Record::at_most("p=inf reciprocal", WEIGHTED_ANCHOR, relative_gap(&b.tau, |x| 1.0 / x, 1e-12, 1.0, 2000), 1e-10)),
        Err(e) => out.push(failure("p=inf reciprocal", WEIGHTED_ANCHOR, e)),
    }
    match build_tau_weighted(&WeightSpec::new(2.0, x_weight())) {
        Ok(b) => out.push(Record::at_most(
            "p=2 closed form",
            WEIGHTED_ANCHOR,
            relative_gap(&b.tau, |x| 1.0 / (x * (1.0 - x)), 1e-12, 0.5, 2000),
            1e-10,
        )),
        Err(e) => out.push(failure("p=2 closed form", WEIGHTED_ANCHOR, e)),
    }
    let mut r = rng(seed);
    let mut worst = f64::NEG_INFINITY;
    let mut errors = 0;
    for _ in 0..50 {
        let p: f64 = r.random_range(1.2..4.0);
        let q = p / (p - 1.0);
        let gamma = r.random_range(0.05..0.95) / q;
        let beta: f64 = r.random_range(0.1..1.5);
        let spec = WeightSpec::new(p, power_handle(gamma));
        match holder_check(&spec, &power_handle(-beta)) {
            Ok(h) => worst = worst.max((h.lhs - h.rhs) / h.rhs),
            Err(_) => errors += 1,
        }
    }
    out.push(Record::at_most("holder 50 cases (lhs-rhs)/rhs", WEIGHTED_ANCHOR, worst, 1e-9));
    out.push(Record::at_most("holder errors", WEIGHTED_ANCHOR, errors as f64, 0.0));
    out
}

pub fn partition(_seed: u64) -> Vec<Record> {
    let mut out = Vec::new();
    let spec = WeightSpec::new(f64::INFINITY, FunctionHandle::new("x", |x| x));
    match build_tau_weighted(&spec).map_err(|e| e.to_string()).and_then(|b| build_partition(&b, 20).map_err(|e| e.to_string())) {
        Ok(p) => {
            let gap = p.alphas.iter().enumerate().map(|(k, a)| (a - (-(k as f64)).exp()).abs()).fold(0.0, f64::max);
            out.push(Record::at_most("reciprocal alpha_k = e^-k", PARTITION_ANCHOR, gap, 1e-9));
        }
        Err(e) => out.push(failure("reciprocal alpha_k = e^-k", PARTITION_ANCHOR, e)),
    }
    let l10 = l10_bundle().and_then(|b| {
        let k = b.reachable_mass().floor() as usize;
        let p = build_partition(b, k).map_err(|e| e.to_string())?;
        let d = unit_mass_defect(b, &p.alphas).map_err(|e| e.to_string())?;
        Ok((k, d))
    });
    match l10 {
        Ok((k, d)) => {
            out.push(Record::info("level-set realized depth", PARTITION_ANCHOR, k as f64));
            out.push(Record::at_most("level-set unit masses", PARTITION_ANCHOR, d, 1e-6));
        }
        Err(e) => out.push(failure("level-set unit masses", PARTITION_ANCHOR, e)),
    }
    out
}

/// Depth of the summation group.
pub const SUMMATION_DEPTH: usize = 16;

pub fn random_seq(r: &mut impl Rng, prefix: usize) -> BinarySeq {
    let bits: Vec<u8> = (0..prefix).map(|_| r.random_range(0..=1u8)).collect();
    let tail = if r.random_bool(0.5) {
        Tail::EventuallyZero
    } else {
        let len = r.random_range(1..=3);
        let mut cycle: Vec<u8> = (0..len).map(|_| r.random_range(0..=1u8)).collect();
        cycle[0] = 1;
        Tail::Periodic(cycle)
    };
    BinarySeq::new(bits, tail).expect("bits are binary")
}

pub fn summation(seed: u64) -> Vec<Record> {
    let n = SUMMATION_DEPTH;
    let spec = WeightSpec::new(f64::INFINITY, FunctionHandle::new("x", |x| x));
    let setup = build_tau_weighted(&spec).map_err(|e| e.to_string()).and_then(|b| {
        let p = build_partition(&b, n).map_err(|e| e.to_string())?;
        Ok((b, p))
    });
    let (bundle, part) = match setup {
        Ok(v) => v,
        Err(e) => return vec![failure("setup", SUMMATION_ANCHOR, e)],
    };
    let p = default_antiderivative(&part, n);
    let build = |s: &BinarySeq| interface_sum(s, &part, &bundle, &p, n);
    let mut r = rng(seed);
    let seqs: Vec<BinarySeq> = (0..100).map(|_| random_seq(&mut r, n + 4)).collect();
    let pairs: Vec<(BinarySeq, BinarySeq, usize)> = (0..100)
        .map(|_| {
            let a = random_seq(&mut r, n + 4);
            let m = r.random_range(1..n);
            let mut b = a.clone();
            for i in 0..m {
                if r.random_bool(0.5) {
                    b = b.with_bit(i, 1 - a.get(i));
                }
            }
            (a, b, m)
        })
        .collect();

    let per_seq: Vec<Vec<Record>> = seqs
        .par_iter()
        .map(|a| match build(a) {
            Ok(t) => summation_records(a, &t, ""),
            Err(e) => vec![failure("interface", SUMMATION_ANCHOR, e)],
        })
        .collect();
    let mut worst: [(f64, String); 3] = Default::default();
    let mut failures = Vec::new();
    for rs in per_seq {
        for (i, rec) in rs.into_iter().enumerate() {
            if rec.measured.is_none() {
                failures.push(rec);
                continue;
            }
            let m = rec.measured.unwrap_or(f64::INFINITY);
            if i < 3 && m >= worst[i].0 {
                worst[i] = (m, rec.name.clone());
            }
        }
    }
    let mut out = vec![
        Record::at_most("100 seqs max increment error", SUMMATION_ANCHOR, worst[0].0, 1e-6),
        Record::at_most("100 seqs max mask defect", SUMMATION_ANCHOR, worst[1].0, 0.5),
        Record::at_most("100 seqs max S* deviation", SUMMATION_ANCHOR, worst[2].0, 1e-6),
    ];
    out.extend(failures);

    let pair_ok: Vec<Result<bool, String>> = pairs
        .par_iter()
        .map(|(a, b, m)| verify_based_at_infinity(build, a, b, *m, 1e-6).map(|r| r.holds).map_err(|e| e.to_string()))
        .collect();
    let held = pair_ok.iter().filter(|r| matches!(r, Ok(true))).count();
    out.push(Record::at_most("100 eventually-equal pairs violations", SUMMATION_ANCHOR, (100 - held) as f64, 0.0));
    out
}

pub fn appendix(seed: u64) -> Vec<Record> {
    let mut r = rng(seed);
    let mut seqs = vec!["0110".to_string(), "0[1]*".to_string()];
    for _ in 0..2 {
        let bits: String = (0..8).map(|i| if i > 0 && r.random_bool(0.5) { '1' } else { '0' }).collect();
        seqs.push(bits);
    }
    let mut out = Vec::new();
    for s in seqs {
        let label = format!("a={s} ");
        let sys = analyticpf::make_beta(6, 6.0)
            .map_err(|e| e.to_string())
            .and_then(|b| InterpolationSystem::new(b, s.parse().map_err(|e: hpf_core::summation::SummationError| e.to_string())?, 16).map_err(|e| e.to_string()));
        match sys.map(|sys| analytic_records(&sys, &label)) {
            Ok(Ok((rs, _))) => out.extend(rs),
            Ok(Err(e)) => out.push(failure(&label, ANALYTIC_ANCHOR, e)),
            Err(e) => out.push(failure(&label, ANALYTIC_ANCHOR, e)),
        }
    }
    out
}

pub fn random_laurent(r: &mut impl Rng) -> LaurentData {
    let order = r.random_range(0..=5i32);
    let top = r.random_range(0..=4i32);
    LaurentData::new((-order..=top).map(|n| (n, r.random_range(-3.0..3.0))).collect())
}

/// Linearity and the derivative reconstruction `d/dx pf + c_{-1}/x = L(x)`.
pub fn meromorphic(seed: u64) -> Vec<Record> {
    let mut r = rng(seed);
    let mut lin = 0.0_f64;
    let mut recon = 0.0_f64;
    for _ in 0..20 {
        let (l1, l2) = (random_laurent(&mut r), random_laurent(&mut r));
        let (a, b) = (r.random_range(-2.0..2.0), r.random_range(-2.0..2.0));
        let combo = l1.scale_add(a, &l2, b);
        for i in 0..20 {
            let x = 0.05 + 0.9 * (i as f64 + 0.5) / 20.0;
            let (p1, p2, pc) = (pf_meromorphic(&l1, x), pf_meromorphic(&l2, x), pf_meromorphic(&combo, x));
            let scale = (a * p1.finite_part).abs() + (b * p2.finite_part).abs() + 1.0;
            lin = lin.max((pc.finite_part - a * p1.finite_part - b * p2.finite_part).abs() / scale);
            lin = lin.max((pc.log_coefficient - a * p1.log_coefficient - b * p2.log_coefficient).abs());
            let h = 1e-5 * x;
            let d = (pf_meromorphic(&l1, x + h).finite_part - pf_meromorphic(&l1, x - h).finite_part) / (2.0 * h);
            let direct = l1.eval(x);
            let mag: f64 = l1.coefficients.iter().map(|&(n, c)| (c * x.powi(n)).abs()).sum::<f64>() + 1.0;
            recon = recon.max((d + p1.log_coefficient / x - direct).abs() / mag);
        }
    }
    vec![
        Record::at_most("linearity relative residual", MEROMORPHIC_ANCHOR, lin, 1e-12),
        Record::at_most("derivative reconstruction relative error", MEROMORPHIC_ANCHOR, recon, 1e-6),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cheap_groups_pass() {
        for g in [closed_forms as Group, meromorphic, weighted_witness] {
            let rs = g(3);
            assert!(rs.iter().all(|r| r.status != crate::report::Status::Fail), "{rs:?}");
        }
    }
}
