//! Acceptance gate: one check per criterion, each against an oracle
//! computed here independently of the library, with a runtime budget.
//! Prints one PASS/FAIL line per criterion.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hpf_cli::expr::parse_handle;
use hpf_cli::suite::{l10_bundle, random_laurent, random_seq};
use hpf_cli::verify_all;
use hpf_core::analyticpf::{
    check_derivative_bound, check_growth, coeff_b, eval_f_real, increment_check, make_beta, pf_meromorphic,
    InterpolationSystem,
};
use hpf_core::finitepart::{cos_handle, exp_handle, monomial, pf_riesz, reciprocal_shift_handle, PFQuery};
use hpf_core::quad::{self, QuadConfig};
use hpf_core::realfunc::FunctionHandle;
use hpf_core::summation::{default_antiderivative, interface_sum, BinarySeq};
use hpf_core::witness::{build_partition, build_tau_weighted, holder_check, WeightSpec};

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome { ok, detail: detail.into() }
}

/// Composite Simpson rule with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// 10-point Gauss-Legendre on `[a, b]`.
fn gauss10(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const X: [f64; 5] = [
        0.148_874_338_981_631_2,
        0.433_395_394_129_247_2,
        0.679_409_568_299_024_4,
        0.865_063_366_688_984_5,
        0.973_906_528_517_171_7,
    ];
    const W: [f64; 5] = [
        0.295_524_224_714_752_9,
        0.269_266_719_309_996_4,
        0.219_086_362_515_982_0,
        0.149_451_349_150_580_6,
        0.066_671_344_308_688_1,
    ];
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    X.iter().zip(W).map(|(&x, w)| w * (f(c - r * x) + f(c + r * x))).sum::<f64>() * r
}

/// `∫_0^1 s^{α-1} f(s) ds`, analytically continued, for the three test
/// functions: power series for cos and exp, Simpson after `u = s^α` (or
/// after subtracting `1/α`) for `1/(1+s)`.
fn continued_integral(which: usize, alpha: f64) -> f64 {
    match which {
        0 => {
            let mut sum = 0.0;
            let mut fact = 1.0;
            for k in 0..30 {
                if k > 0 {
                    fact *= ((2 * k - 1) * (2 * k)) as f64;
                }
                sum += if k % 2 == 0 { 1.0 } else { -1.0 } / (fact * (alpha + 2.0 * k as f64));
            }
            sum
        }
        1 => {
            let mut sum = 0.0;
            let mut fact = 1.0;
            for k in 0..40 {
                if k > 0 {
                    fact *= k as f64;
                }
                sum += 1.0 / (fact * (alpha + k as f64));
            }
            sum
        }
        _ => {
            if alpha > 0.0 {
                let p = 1.0 / alpha;
                simpson(|u: f64| 1.0 / (1.0 + u.powf(p)), 0.0, 1.0, 20_000) / alpha
            } else {
                // s^{α-1}/(1+s) = s^{α-1} - s^α/(1+s)
                let p = 1.0 / (alpha + 1.0);
                1.0 / alpha - simpson(|u: f64| 1.0 / (1.0 + u.powf(p)), 0.0, 1.0, 20_000) / (alpha + 1.0)
            }
        }
    }
}

fn criterion_1() -> Outcome {
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for m in 0..=3u32 {
        for alpha in [-0.5, -1.5, -2.5] {
            for x in [0.25, 0.5, 1.0] {
                let e = alpha + m as f64;
                let n = (-alpha).floor() as usize + 1;
                let v = pf_riesz(&PFQuery::new(monomial(m), alpha, x, n), 1e-12).expect("monomial p.f.").value;
                let oracle = f64::powf(x, e) / e;
                worst = worst.max((v - oracle).abs());
                cases += 1;
            }
        }
    }
    outcome(worst <= 1e-8, format!("{cases} cases, max |pf - x^(a+m)/(a+m)| = {worst:.3e}"))
}

fn criterion_2() -> Outcome {
    let fs = [cos_handle(), exp_handle(), reciprocal_shift_handle()];
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let mut direct = 0.0_f64;
    let mut depth = 0.0_f64;
    let mut continued = 0.0_f64;
    for (i, f) in fs.iter().enumerate() {
        for _ in 0..4 {
            let alpha = r.random_range(0.05..0.95);
            let v = pf_riesz(&PFQuery::new(f.clone(), alpha, 1.0, 0), 1e-12).expect("convergent regime").value;
            direct = direct.max((v - continued_integral(i, alpha)).abs());
        }
        for _ in 0..4 {
            let alpha = r.random_range(-0.95..-0.05);
            let vals: Vec<f64> = (1..=3)
                .map(|n| pf_riesz(&PFQuery::new(f.clone(), alpha, 1.0, n), 1e-12).expect("continued").value)
                .collect();
            for a in 0..3 {
                for b in a + 1..3 {
                    depth = depth.max((vals[a] - vals[b]).abs());
                }
            }
            continued = continued.max((vals[0] - continued_integral(i, alpha)).abs());
        }
    }
    outcome(
        direct <= 1e-6 && depth <= 1e-7 && continued <= 1e-7,
        format!("direct {direct:.3e}, depth spread {depth:.3e}, vs continuation oracle {continued:.3e}"),
    )
}

/// `∫_1^U (sin u)^+ / u du`, arch by arch.
fn positive_arches(upper: f64) -> f64 {
    let mut total = 0.0;
    let mut k = 0.0;
    loop {
        let (a, b) = (k * PI, (k + 1.0) * PI);
        if a >= upper {
            break;
        }
        let (lo, hi) = (a.max(1.0), b.min(upper));
        if hi > lo && (k as u64) % 2 == 0 {
            total += gauss10(|u| u.sin().max(0.0) / u, lo, hi);
        }
        k += 1.0;
    }
    total
}

fn criterion_3() -> Outcome {
    let bundle = l10_bundle().expect("level-set witness of sin(1/x)/x");
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let h = bundle.h.as_ref().expect("level-set witness carries h");
    let mut min_tau = f64::INFINITY;
    let mut max_h = h.sup_bound();
    for _ in 0..10_000 {
        let x = (r.random_range(bundle.floor.ln()..0.0)).exp();
        min_tau = min_tau.min(bundle.tau.eval(x));
        max_h = max_h.max(h.eval(x).abs());
    }
    let cfg = QuadConfig::absolute(1e-12).with_rel(1e-10);
    let mut increasing = true;
    for n in 5..=20 {
        let piece = quad::integrate_with(&bundle.tau, 2f64.powi(-n), 2f64.powi(-(n - 1)), cfg).expect("piece");
        increasing &= piece.value > 0.0;
    }
    let plus = positive_arches(1e6);
    let tau_mass = quad::integrate_with(&bundle.tau, 1e-6, 1.0, cfg).expect("tau mass").value;
    let excess = plus - tau_mass;
    outcome(
        min_tau >= 0.0 && max_h <= 1.0 && increasing && excess <= 1.0 + 1e-3,
        format!("min tau {min_tau:.3e}, sup|h| {max_h:.6}, trace increasing {increasing}, int(f+ - tau) = {excess:.6}"),
    )
}

fn criterion_4() -> Outcome {
    let x_weight = FunctionHandle::new("x", |x| x);
    let inf = build_tau_weighted(&WeightSpec::new(f64::INFINITY, x_weight.clone())).expect("p = inf");
    let two = build_tau_weighted(&WeightSpec::new(2.0, x_weight)).expect("p = 2");
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let (mut e_inf, mut e_two) = (0.0_f64, 0.0_f64);
    for _ in 0..2_000 {
        let x = r.random_range((1e-12f64).ln()..0.0).exp();
        e_inf = e_inf.max((inf.tau.eval(x) * x - 1.0).abs());
        let y = x.min(0.5);
        e_two = e_two.max((two.tau.eval(y) * y * (1.0 - y) - 1.0).abs());
    }
    // Hölder on [ε, 1] for w = x^γ, τ = x^{-β}, all integrals in closed form
    let eps: f64 = 1e-6;
    let power_int = |e: f64| if (e + 1.0).abs() < 1e-14 { -eps.ln() } else { (1.0 - eps.powf(e + 1.0)) / (e + 1.0) };
    let mut holder_ok = true;
    let mut worst_gap = 0.0_f64;
    for _ in 0..50 {
        let p: f64 = r.random_range(1.2..4.0);
        let q = p / (p - 1.0);
        let gamma = r.random_range(0.05..0.95) / q;
        let beta: f64 = r.random_range(0.1..1.5);
        let lhs = power_int(-beta);
        let rhs = power_int(p * (gamma - beta)).powf(1.0 / p) * power_int(-q * gamma).powf(1.0 / q);
        holder_ok &= lhs <= rhs * (1.0 + 1e-12);
        let w = FunctionHandle::new("w", move |x: f64| x.powf(gamma));
        let t = FunctionHandle::new("tau", move |x: f64| x.powf(-beta));
        let rep = holder_check(&WeightSpec::new(p, w), &t).expect("holder check");
        holder_ok &= rep.holds;
        worst_gap = worst_gap.max(((rep.lhs - lhs) / lhs).abs()).max(((rep.rhs - rhs) / rhs).abs());
    }
    outcome(
        e_inf <= 1e-10 && e_two <= 1e-10 && holder_ok && worst_gap <= 1e-8,
        format!("p=inf rel {e_inf:.3e}, p=2 rel {e_two:.3e}, 50 Holder cases hold {holder_ok} (library vs closed form {worst_gap:.3e})"),
    )
}

fn criterion_5() -> Outcome {
    let tau = FunctionHandle::new("1/x", |x| 1.0 / x);
    let b = hpf_core::witness::WitnessBundle::from_tau(tau, 2f64.powi(-40));
    let part = build_partition(&b, 20).expect("partition of 1/x");
    let closed = part.alphas.iter().enumerate().map(|(k, a)| (a - (-(k as f64)).exp()).abs()).fold(0.0, f64::max);
    let l10 = l10_bundle().expect("level-set witness");
    let k = l10.reachable_mass().floor() as usize;
    let lp = build_partition(l10, k).expect("level-set partition");
    let cfg = QuadConfig::absolute(1e-13).with_rel(1e-12);
    let mut mass = 0.0_f64;
    for w in lp.alphas.windows(2) {
        let m = quad::integrate_with(&l10.tau, w[1], w[0], cfg).expect("window mass").value;
        mass = mass.max((m - 1.0).abs());
    }
    outcome(closed <= 1e-9 && mass < 1e-6, format!("|alpha_k - e^-k| {closed:.3e}; level-set windows k<={k}: {mass:.3e}"))
}

fn criterion_6() -> Outcome {
    let n = 16;
    let spec = WeightSpec::new(f64::INFINITY, FunctionHandle::new("x", |x| x));
    let bundle = build_tau_weighted(&spec).expect("tau = 1/x");
    let part = build_partition(&bundle, n).expect("partition");
    let p = default_antiderivative(&part, n);
    let run = |a: &BinarySeq| interface_sum(a, &part, &bundle, &p, n).expect("interface");
    let mut r = ChaCha8Rng::seed_from_u64(6);
    let (mut inc, mut mask, mut star) = (0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..100 {
        let a = random_seq(&mut r, n + 4);
        let t = run(&a);
        let mut partial = 0.0;
        let mut first = None;
        for i in 0..n {
            inc = inc.max((t.increments[i] - a.get(i) as f64).abs());
            partial += a.get(i) as f64;
            // S_i - Σ_{j<=i} a_j must not depend on i
            let s_star = t.s_terms[i] - partial;
            let c = *first.get_or_insert(s_star);
            star = star.max((s_star - c).abs());
        }
        mask = mask.max(t.mask_defect);
    }
    let mut pair_violations = 0;
    for _ in 0..100 {
        let a = random_seq(&mut r, n + 4);
        let m = r.random_range(1..n);
        let mut b = a.clone();
        for i in 0..m {
            if r.random_bool(0.5) {
                b = b.with_bit(i, 1 - a.get(i));
            }
        }
        let (ta, tb) = (run(&a), run(&b));
        if (m..n).any(|i| (ta.s_terms[i] - tb.s_terms[i]).abs() > 1e-6) {
            pair_violations += 1;
        }
    }
    outcome(
        inc <= 1e-6 && mask < 0.5 && star <= 1e-6 && pair_violations == 0,
        format!("increments {inc:.3e}, mask {mask:.3e}, S* spread {star:.3e}, pair violations {pair_violations}/100"),
    )
}

fn criterion_7() -> Outcome {
    let (k, j) = (6, 16);
    let mut ok = true;
    let mut notes = Vec::new();
    for bits in ["0110", "0[1]*", "00101101"] {
        let a: BinarySeq = bits.parse().expect("sequence");
        let sys = InterpolationSystem::new(make_beta(k, 6.0).expect("base 6"), a.clone(), j).expect("system");
        let s: Vec<f64> = (1..=k).map(|i| (0..i).map(|t| a.get(t) as f64).sum()).collect();
        let beta = |i: usize| 6f64.powi(i as i32);
        // direct products in f64 (no overflow at K = 6)
        let direct_b = |i: usize| {
            let prod: f64 = (1..=j).filter(|&t| t != i).map(|t| (1.0 - beta(i) / beta(t)).powi(2)).product();
            s[i - 1] / prod
        };
        let mut interp = 0.0_f64;
        let mut coeff = 0.0_f64;
        for i in 1..=k {
            let v = eval_f_real(&sys, beta(i)).value;
            interp = interp.max((v - s[i - 1]).abs() / s[i - 1].max(1.0));
            let b = coeff_b(&sys, i).value();
            coeff = coeff.max((b - direct_b(i)).abs() / direct_b(i).abs().max(1e-300));
        }
        let ratios: Vec<f64> = (1..=k).filter(|&i| s[i - 1] > 0.0).map(|i| direct_b(i) / (s[i - 1] * 6f64.powi(-2 * i as i32))).collect();
        let c = ratios[0];
        let bound_ok = ratios.iter().all(|&q| q <= c * (1.0 + 1e-12));
        let z: f64 = -10.0;
        let direct_f: f64 = (1..=k)
            .map(|i| direct_b(i) * (1..=j).filter(|&t| t != i).map(|t| (1.0 - z / beta(t)).powi(2)).product::<f64>())
            .sum();
        let f_gap = (eval_f_real(&sys, z).value - direct_f).abs() / direct_f.abs().max(1.0);
        let inc = increment_check(&sys, 1e-6).expect("increments");
        let bits_ok = inc.entries.iter().all(|e| e.bit == a.get(e.k) && e.holds);
        let rhos: Vec<f64> = (1..=k).map(beta).collect();
        let g = check_growth(&sys, &rhos);
        let d = check_derivative_bound(&sys, &rhos);
        ok &= interp <= 1e-6 && coeff <= 1e-12 && bound_ok && f_gap <= 1e-10 && bits_ok && inc.max_route_gap <= 1e-6 && g.holds && d.holds;
        notes.push(format!(
            "a={bits}: interp {interp:.1e}, C {c:.4}, routes {:.1e}, ln C_growth {:.4}, ln C_deriv {:.4}",
            inc.max_route_gap, g.log_c, d.log_c
        ));
    }
    outcome(ok, notes.join("; "))
}

fn criterion_8() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let mut lin = 0.0_f64;
    let mut recon = 0.0_f64;
    for _ in 0..50 {
        let (l1, l2) = (random_laurent(&mut r), random_laurent(&mut r));
        let (a, b) = (r.random_range(-2.0..2.0), r.random_range(-2.0..2.0));
        let combo = l1.scale_add(a, &l2, b);
        for i in 0..20 {
            let x = 0.05 + 0.9 * (i as f64 + 0.5) / 20.0;
            // closed-form antiderivative, log term separate
            let anti = |l: &hpf_core::analyticpf::LaurentData, x: f64| -> f64 {
                l.coefficients.iter().filter(|c| c.0 != -1).map(|&(n, c)| c * x.powi(n + 1) / (n + 1) as f64).sum()
            };
            let pc = pf_meromorphic(&combo, x);
            let scale = (a * anti(&l1, x)).abs() + (b * anti(&l2, x)).abs() + 1.0;
            lin = lin.max((pc.finite_part - a * anti(&l1, x) - b * anti(&l2, x)).abs() / scale);
            let h = 1e-5 * x;
            let fd = (pf_meromorphic(&l1, x + h).finite_part - pf_meromorphic(&l1, x - h).finite_part) / (2.0 * h);
            let c_m1: f64 = l1.coefficients.iter().filter(|c| c.0 == -1).map(|c| c.1).sum();
            let value: f64 = l1.coefficients.iter().map(|&(n, c)| c * x.powi(n)).sum();
            let mag: f64 = l1.coefficients.iter().map(|&(n, c)| (c * x.powi(n)).abs()).sum::<f64>() + 1.0;
            recon = recon.max((fd + c_m1 / x - value).abs() / mag);
        }
    }
    outcome(lin < 1e-12 && recon < 1e-6, format!("linearity residual {lin:.3e}, reconstruction {recon:.3e}"))
}

fn criterion_9() -> Outcome {
    let first = verify_all(7);
    let a = first.to_json();
    let b = verify_all(7).to_json();
    let other = verify_all(8).to_json();
    outcome(
        a == b && !first.failed(),
        format!("{} bytes identical: {}, seed 8 differs: {}, failures {}", a.len(), a == b, a != other, first.summary.failed),
    )
}

#[test]
fn acceptance() {
    let parse_ok = parse_handle("sin(1/x)/x").is_ok();
    assert!(parse_ok);
    let criteria: [(&str, fn() -> Outcome, u64); 9] = [
        ("finite-part closed forms", criterion_1, 5),
        ("continuation consistency", criterion_2, 30),
        ("level-set witness", criterion_3, 60),
        ("weighted witness", criterion_4, 30),
        ("unit-mass partition", criterion_5, 30),
        ("summation interface", criterion_6, 120),
        ("appendix suite", criterion_7, 60),
        ("meromorphic finite part", criterion_8, 5),
        ("verify-all determinism", criterion_9, 300),
    ];
    let mut failed = Vec::new();
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let elapsed = start.elapsed();
        let in_time = elapsed < Duration::from_secs(*budget);
        let pass = o.ok && in_time;
        println!(
            "criterion {} [{}]: {} ({:.2} s of {} s) {}",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget,
            o.detail
        );
        if !pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
