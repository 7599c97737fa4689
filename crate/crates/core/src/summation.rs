//! Binary sequences, the standard summation `Σ`, and the explicit route from
//! an antiderivative and a divergence witness to a summation operator based
//! at infinity.
//!
//! Only finitely describable sequences are representable: a finite prefix
//! followed by zeros or by a repeating pattern. Every trace is truncated at a
//! depth `N`, and every integral is taken over `[α_N, 1]`, where the masked
//! integrand is locally integrable.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::quad::{self, QuadConfig, QuadError};
use crate::realfunc::{make_semigroup_element, AnchoredAntiderivative, Core, FuncError, FunctionHandle, GluingProfile};
use crate::witness::{PartitionSequence, WitnessBundle};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SummationError {
    #[error("cannot parse binary sequence `{input}`: {reason}")]
    Parse { input: String, reason: String },
    #[error("partition has depth {available}, {needed} required")]
    PartitionTooShallow { needed: usize, available: usize },
    #[error("S - Σ deviates from a constant by {deviation:e}")]
    NotConstant { deviation: f64 },
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Func(#[from] FuncError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub enum Tail {
    EventuallyZero,
    Periodic(Vec<u8>),
}

/// An element of `{0,1}^ℕ`, indexed from 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct BinarySeq {
    prefix: Vec<u8>,
    tail: Tail,
}

impl BinarySeq {
    pub fn new(prefix: Vec<u8>, tail: Tail) -> Result<Self, SummationError> {
        let bad = |s: &[u8]| s.iter().any(|&b| b > 1);
        let pattern_bad = match &tail {
            Tail::Periodic(p) => p.is_empty() || bad(p),
            Tail::EventuallyZero => false,
        };
        if bad(&prefix) || pattern_bad {
            return Err(SummationError::Parse {
                input: format!("{prefix:?} {tail:?}"),
                reason: "entries must be 0 or 1 and periodic tails non-empty".into(),
            });
        }
        Ok(Self { prefix, tail })
    }

    /// Finite bits followed by zeros.
    pub fn from_bits(bits: Vec<u8>) -> Self {
        Self { prefix: bits.into_iter().map(|b| b.min(1)).collect(), tail: Tail::EventuallyZero }
    }

    pub fn zeros() -> Self {
        Self { prefix: Vec::new(), tail: Tail::EventuallyZero }
    }

    pub fn ones() -> Self {
        Self { prefix: Vec::new(), tail: Tail::Periodic(vec![1]) }
    }

    pub fn get(&self, i: usize) -> u8 {
        if i < self.prefix.len() {
            return self.prefix[i];
        }
        match &self.tail {
            Tail::EventuallyZero => 0,
            Tail::Periodic(p) => p[(i - self.prefix.len()) % p.len()],
        }
    }

    pub fn take(&self, n: usize) -> Vec<u8> {
        (0..n).map(|i| self.get(i)).collect()
    }

    /// Copy with bit `i` replaced.
    pub fn with_bit(&self, i: usize, bit: u8) -> Self {
        let mut prefix = self.take(self.prefix.len().max(i + 1));
        prefix[i] = bit.min(1);
        if let Tail::Periodic(p) = &self.tail {
            // keep the tail phase: pad the prefix to a whole number of periods past the old one
            let extra = (prefix.len() - self.prefix.len()) % p.len();
            if extra != 0 {
                let pad = p.len() - extra;
                let start = prefix.len();
                prefix.extend((start..start + pad).map(|j| self.get(j)));
            }
        }
        Self { prefix, tail: self.tail.clone() }
    }
}

impl fmt::Display for BinarySeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.prefix {
            write!(f, "{b}")?;
        }
        if let Tail::Periodic(p) = &self.tail {
            write!(f, "[")?;
            for b in p {
                write!(f, "{b}")?;
            }
            write!(f, "]*")?;
        }
        Ok(())
    }
}

/// `"0110"` (then zeros) or `"0110[01]*"` (then `01` repeated).
impl FromStr for BinarySeq {
    type Err = SummationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let err = |reason: &str| SummationError::Parse { input: s.to_string(), reason: reason.to_string() };
        let bits = |t: &str| -> Result<Vec<u8>, SummationError> {
            t.chars()
                .map(|c| match c {
                    '0' => Ok(0),
                    '1' => Ok(1),
                    _ => Err(err("unexpected character")),
                })
                .collect()
        };
        match s.find('[') {
            None => Ok(Self::from_bits(bits(s)?)),
            Some(open) => {
                let rest = &s[open + 1..];
                let close = rest.find(']').ok_or_else(|| err("missing `]`"))?;
                if &rest[close + 1..] != "*" {
                    return Err(err("periodic tail must end with `]*`"));
                }
                let pattern = bits(&rest[..close])?;
                if pattern.is_empty() {
                    return Err(err("empty periodic pattern"));
                }
                Self::new(bits(&s[..open])?, Tail::Periodic(pattern))
            }
        }
    }
}

/// One sequence per line; blank lines and `#` comments are skipped.
pub fn parse_corpus(text: &str) -> Result<Vec<BinarySeq>, SummationError> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(BinarySeq::from_str)
        .collect()
}

/// Partial sums `(a_0, a_0 + a_1, …)`, `N` terms.
pub fn standard_sum(a: &BinarySeq, n: usize) -> Vec<f64> {
    let mut acc = 0.0;
    (0..n)
        .map(|i| {
            acc += a.get(i) as f64;
            acc
        })
        .collect()
}

/// Mask `h` that is 1 on the complement of `O_a = ∪_{a_n=0} (α_{n+1}, α_n)`
/// and vanishes inside each removed gap away from two transition bands.
#[derive(Debug, Clone, Serialize)]
pub struct Mask {
    #[serde(skip)]
    pub profile: GluingProfile,
    /// Transition width used inside gap `n` (0 when `a_n = 1`).
    pub band_widths: Vec<f64>,
    /// `∫_{α_K}^1 |χ_{O_a^c} τ - τ h|`.
    pub defect: f64,
}

pub fn build_mask(a: &BinarySeq, part: &PartitionSequence, bundle: &WitnessBundle) -> Result<Mask, SummationError> {
    let k = part.depth();
    let al = &part.alphas;
    let mut widths = vec![0.0; k];
    for n in 0..k {
        if a.get(n) == 0 {
            let (lo, hi) = (al[n + 1], al[n]);
            let peak = bundle.sampled_max(lo, hi).max(f64::MIN_POSITIVE);
            widths[n] = (0.4 * (hi - lo)).min(2f64.powi(-(n as i32 + 3)) / (2.0 * peak));
        }
    }
    let mut cores = Vec::new();
    let mut top = 0;
    for n in 0..k {
        if a.get(n) == 0 {
            let right = if top == 0 { 0.0 } else { widths[top - 1] };
            cores.push(Core::new(al[n], al[top], widths[n], right));
            top = n + 1;
        }
    }
    let right = if top == 0 { 0.0 } else { widths[top - 1] };
    cores.push(Core::new(0.0, al[top], 0.0, right));
    let profile = GluingProfile::new(cores)?;

    let cfg = QuadConfig::absolute(1e-14).with_rel(1e-12);
    let mut defect = 0.0;
    for n in 0..k {
        let w = widths[n];
        if w == 0.0 {
            continue;
        }
        let f = |x: f64| bundle.tau.eval(x) * profile.eval(x);
        let (lo, hi) = (al[n + 1], al[n]);
        defect += quad::integrate_fn(&f, lo, lo + w, &[], cfg)?.value;
        defect += quad::integrate_fn(&f, hi - w, hi, &[], cfg)?.value;
    }
    Ok(Mask { profile, band_widths: widths, defect })
}

#[derive(Debug, Clone, Serialize)]
pub struct SummationTrace {
    /// `x_{k;a}` for `k = 0..=N`.
    pub x_values: Vec<f64>,
    /// `S(a)_n = x_{n+1;a}` for `n = 0..N`.
    pub s_terms: Vec<f64>,
    /// `x_{0;a}`, the summation constant.
    pub constant_estimate: f64,
    /// `x_{n+1;a} - x_{n;a}`.
    pub increments: Vec<f64>,
    pub mask_defect: f64,
}

/// The default antiderivative for depth `N`: `x -> ∫_{α_N}^x`.
pub fn default_antiderivative(part: &PartitionSequence, n: usize) -> AnchoredAntiderivative {
    AnchoredAntiderivative::integral_from(part.alphas[n]).with_tolerance(1e-12)
}

/// `x_{k;a} = -([P(τh)](α_k) + ∫_{α_N}^{α_k} (χ_{O_a^c} τ - τ h))`, so that
/// `x_{n+1;a} - x_{n;a} = ∫_{α_{n+1}}^{α_n} χ_{O_a^c} τ = a_n`, and
/// `S(a)_n = x_{n+1;a} = Σ(a)_n + x_{0;a}`.
pub fn interface_sum(
    a: &BinarySeq,
    part: &PartitionSequence,
    bundle: &WitnessBundle,
    p: &AnchoredAntiderivative,
    n: usize,
) -> Result<SummationTrace, SummationError> {
    if n > part.depth() || n == 0 {
        return Err(SummationError::PartitionTooShallow { needed: n.max(1), available: part.depth() });
    }
    let mask = build_mask(a, part, bundle)?;
    let tau_h: FunctionHandle = make_semigroup_element(&bundle.tau, &mask.profile)?;
    let al = &part.alphas;
    let cfg = QuadConfig::absolute(1e-14).with_rel(1e-12);

    // gap_diff[m] = ∫ over gap m of (χ τ - τ h)
    let mut gap_diff = vec![0.0; n];
    for m in 0..n {
        let (lo, hi) = (al[m + 1], al[m]);
        let masked = quad::integrate_with(&tau_h, lo, hi, cfg)?.value;
        let chi = if a.get(m) == 1 { quad::integrate_with(&bundle.tau, lo, hi, cfg)?.value } else { 0.0 };
        gap_diff[m] = chi - masked;
    }
    let mut x_values = vec![0.0; n + 1];
    let mut tail = 0.0;
    for k in (0..=n).rev() {
        if k < n {
            tail += gap_diff[k];
        }
        let pv = p.value_at(&tau_h, al[k])?;
        x_values[k] = -(pv + tail);
    }
    let increments: Vec<f64> = x_values.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(SummationTrace {
        s_terms: x_values[1..].to_vec(),
        constant_estimate: x_values[0],
        x_values,
        increments,
        mask_defect: mask.defect,
    })
}

/// `S*(a) = S(a) - Σ(a)` termwise.
pub fn s_star(s_terms: &[f64], a: &BinarySeq) -> Vec<f64> {
    let sigma = standard_sum(a, s_terms.len());
    s_terms.iter().zip(sigma).map(|(s, t)| s - t).collect()
}

/// Common value of `S*` and its maximal deviation from constancy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StarConstant {
    pub value: f64,
    pub deviation: f64,
}

pub fn s_dblstar(s_terms: &[f64], a: &BinarySeq, tol: f64) -> Result<StarConstant, SummationError> {
    let star = s_star(s_terms, a);
    let Some(&value) = star.first() else {
        return Ok(StarConstant { value: 0.0, deviation: 0.0 });
    };
    let deviation = star.iter().map(|v| (v - value).abs()).fold(0.0, f64::max);
    if deviation > tol {
        return Err(SummationError::NotConstant { deviation });
    }
    Ok(StarConstant { value, deviation })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasedAtInfinityReport {
    /// First index from which both traces agree to the end of the window.
    pub agree_from: Option<usize>,
    pub window: usize,
    pub holds: bool,
}

/// Compare the traces of two sequences that agree at every index `>= n`.
/// Holds when the traces agree from some index `N' <= n` to the end of the
/// window.
pub fn verify_based_at_infinity<F>(
    build: F,
    a: &BinarySeq,
    a2: &BinarySeq,
    n: usize,
    tol: f64,
) -> Result<BasedAtInfinityReport, SummationError>
where
    F: Fn(&BinarySeq) -> Result<SummationTrace, SummationError>,
{
    let s1 = build(a)?.s_terms;
    let s2 = build(a2)?.s_terms;
    let window = s1.len().min(s2.len());
    let mut agree_from = None;
    for i in (0..window).rev() {
        if (s1[i] - s2[i]).abs() <= tol {
            agree_from = Some(i);
        } else {
            break;
        }
    }
    Ok(BasedAtInfinityReport { agree_from, window, holds: agree_from.is_some_and(|i| i <= n) })
}
