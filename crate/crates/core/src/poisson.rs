//! Poisson(n) randomization sums.
//!
//! Weights `P{X_n = m} = nᵐe⁻ⁿ/m!` are evaluated with the saddle-point form
//! `exp(−stirlerr(m) − bd0(m, n)) / √(2πm)`, which stays accurate where the
//! naive log-space formula loses digits to cancellation at large `n`. Sums run
//! over the window `[max(0, n−w), n+w]`, `w = max(60, 12√n)`, with Neumaier
//! compensation.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::defects::{AuditContext, BoundAudit, BoundId};
use crate::error::{Error, Result};

pub const N_MAX: u64 = 1_000_000;

/// `ln k! − (k+½)ln k + k − ½ln 2π` for `k = 1..=15`.
#[allow(clippy::excessive_precision)]
const STIRLERR_TABLE: [f64; 15] = [
    0.081_061_466_795_327_258,
    0.041_340_695_955_409_294,
    0.027_677_925_684_998_339,
    0.020_790_672_103_765_093,
    0.016_644_691_189_821_192,
    0.013_876_128_823_070_748,
    0.011_896_709_945_891_770,
    0.010_411_265_261_972_096,
    0.009_255_462_182_712_733,
    0.008_330_563_433_362_871,
    0.007_573_675_487_951_841,
    0.006_942_840_107_209_530,
    0.006_408_994_188_004_207,
    0.005_951_370_112_758_848,
    0.005_554_733_551_962_801,
];

fn stirlerr(k: u64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if k <= 15 {
        return STIRLERR_TABLE[k as usize - 1];
    }
    let n = k as f64;
    let nn = n * n;
    if k > 500 {
        (S0 - S1 / nn) / n
    } else if k > 80 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if k > 35 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term `x ln(x/np) + np − x`, computed without cancellation near `x = np`.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

/// `P{X = m}` for `X ~ Poisson(lambda)`.
pub fn pmf(m: u64, lambda: f64) -> f64 {
    if m == 0 {
        return (-lambda).exp();
    }
    let x = m as f64;
    (-stirlerr(m) - bd0(x, lambda)).exp() / (2.0 * PI * x).sqrt()
}

/// Neumaier-compensated accumulator.
#[derive(Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.comp
    }
}

/// Poisson(n) weights over the summation window.
#[derive(Clone, Debug, PartialEq)]
pub struct PoissonWindow {
    pub n: u64,
    pub m_lo: u64,
    pub m_hi: u64,
    pub weights: Vec<f64>,
}

impl PoissonWindow {
    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        (self.m_lo..=self.m_hi).zip(self.weights.iter().copied())
    }

    pub fn mass(&self) -> f64 {
        let mut s = CompensatedSum::default();
        self.weights.iter().for_each(|&w| s.add(w));
        s.value()
    }

    fn sum_by(&self, mut f: impl FnMut(u64) -> Option<f64>) -> f64 {
        let mut s = CompensatedSum::default();
        for (m, w) in self.iter() {
            if let Some(g) = f(m) {
                s.add(w * g);
            }
        }
        s.value()
    }
}

fn check_n(n: u64) -> Result<()> {
    if (1..=N_MAX).contains(&n) {
        Ok(())
    } else {
        Err(Error::input(format!("Poisson parameter n = {n} outside [1, {N_MAX}]")))
    }
}

/// Window half-width `max(60, 12√n)`, rounded up.
pub fn window_half_width(n: u64) -> u64 {
    (12.0 * (n as f64).sqrt()).max(60.0).ceil() as u64
}

pub fn poisson_pmf_window(n: u64) -> Result<PoissonWindow> {
    check_n(n)?;
    let w = window_half_width(n);
    let m_lo = n.saturating_sub(w);
    let m_hi = n + w;
    let lambda = n as f64;
    let weights = (m_lo..=m_hi).map(|m| pmf(m, lambda)).collect();
    Ok(PoissonWindow { n, m_lo, m_hi, weights })
}

/// `Σ_m P{X_n = m} (m−n)²`, which equals `Var X_n = n`.
pub fn poisson_var_sum(n: u64) -> Result<f64> {
    let win = poisson_pmf_window(n)?;
    Ok(win.sum_by(|m| {
        let d = m as f64 - n as f64;
        Some(d * d)
    }))
}

/// `E|X_n − n| = Σ_m P{X_n = m} |m−n|`.
pub fn poisson_abs_moment(n: u64) -> Result<f64> {
    let win = poisson_pmf_window(n)?;
    Ok(win.sum_by(|m| Some((m as f64 - n as f64).abs())))
}

/// Central/tail decomposition at threshold `ε_n = n^{δ+½}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoissonSplit {
    pub n: u64,
    pub delta: f64,
    pub epsilon_n: f64,
    /// `Σ_{|m−n| ≤ ε_n} P{X_n = m}|m−n|`
    pub central_abs: f64,
    /// `Σ_{|m−n| > ε_n} P{X_n = m}|m−n|`
    pub tail_abs: f64,
    /// `P{|X_n − n| > ε_n}`
    pub tail_prob: f64,
    pub var_sum: f64,
}

impl PoissonSplit {
    pub fn abs_moment(&self) -> f64 {
        self.central_abs + self.tail_abs
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if (-0.5..=0.5).contains(&delta) {
        Ok(())
    } else {
        Err(Error::input(format!("delta = {delta} outside [-1/2, 1/2]")))
    }
}

pub fn epsilon_n(n: u64, delta: f64) -> f64 {
    (n as f64).powf(delta + 0.5)
}

pub fn poisson_split(n: u64, delta: f64) -> Result<PoissonSplit> {
    check_delta(delta)?;
    let win = poisson_pmf_window(n)?;
    let eps = epsilon_n(n, delta);
    let nf = n as f64;
    let dev = |m: u64| (m as f64 - nf).abs();
    let central_abs = win.sum_by(|m| (dev(m) <= eps).then(|| dev(m)));
    let tail_abs = win.sum_by(|m| (dev(m) > eps).then(|| dev(m)));
    let tail_prob = win.sum_by(|m| (dev(m) > eps).then_some(1.0)).clamp(0.0, 1.0);
    let var_sum = win.sum_by(|m| Some(dev(m) * dev(m)));
    Ok(PoissonSplit { n, delta, epsilon_n: eps, central_abs, tail_abs, tail_prob, var_sum })
}

/// The tail audit: the `|m−n|`-weighted tail against `n/ε_n² = n^{−2δ}`, and
/// the probability form `2·P{tail} ≤ 2·n/ε_n²` that follows from Tchebychev.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailClaimAudit {
    pub split: PoissonSplit,
    pub claim: BoundAudit,
    pub tchebychev: BoundAudit,
}

pub fn tail_claim_audit(n: u64, delta: f64) -> Result<TailClaimAudit> {
    let split = poisson_split(n, delta)?;
    let ratio = n as f64 / (split.epsilon_n * split.epsilon_n);
    let ctx = |bound_id| AuditContext { n, delta, bound_id, fingerprint: "poisson".into() };
    let claim = BoundAudit::new(split.tail_abs, ratio, ctx(BoundId::TailClaim));
    let tchebychev = BoundAudit::new(2.0 * split.tail_prob, 2.0 * ratio, ctx(BoundId::TailTchebychev));
    Ok(TailClaimAudit { split, claim, tchebychev })
}

pub const CSV_HEADER: &str =
    "n,delta,epsilon,central_abs,tail_abs,tail_prob,var_sum,abs_moment,claim_rhs,verdict,tchebychev_lhs,tchebychev_rhs,tchebychev_verdict";

impl TailClaimAudit {
    pub fn csv_row(&self) -> String {
        let s = &self.split;
        let mut out = String::new();
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.n,
            s.delta,
            s.epsilon_n,
            s.central_abs,
            s.tail_abs,
            s.tail_prob,
            s.var_sum,
            s.abs_moment(),
            self.claim.rhs,
            self.claim.verdict,
            self.tchebychev.lhs,
            self.tchebychev.rhs,
            self.tchebychev.verdict,
        );
        out
    }
}
