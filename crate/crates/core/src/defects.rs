//! Chernoff defects, the bounds on them, the Ritt constant, and audits.
//!
//! The defect of a contraction `C` at step `n` is `Cⁿ − e^{n(C−𝟙)}`, measured
//! in operator norm or on a vector. Each bound formula is a plain function of
//! its scalar inputs so it can be evaluated and plotted independently of any
//! operator.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{expm, opnorm, powm, CVec, Mat, C64};
use crate::poisson::epsilon_n;

/// Operator-norm slack allowed when checking contraction inputs.
pub const CONTRACTION_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundId {
    /// `√n ‖(C−𝟙)x‖`
    SqrtN,
    /// `(n^{−2δ} + n^{δ+½}) ‖(𝟙−C)x‖`
    Lemma2,
    /// `2n^{−2δ}‖x‖ + n^{δ+½}‖(𝟙−C)x‖`
    Thm22,
    /// `2n^{−2δ} + 2K n^{δ−½}`
    QuasiSectorial,
    /// `|m−n|`-weighted Poisson tail against `n^{−2δ}`
    TailClaim,
    /// `2·P{tail}` against `2n^{−2δ}`
    TailTchebychev,
}

impl BoundId {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundId::SqrtN => "sqrt_n",
            BoundId::Lemma2 => "lemma2",
            BoundId::Thm22 => "thm22",
            BoundId::QuasiSectorial => "quasi_sectorial",
            BoundId::TailClaim => "tail_claim",
            BoundId::TailTchebychev => "tail_tchebychev",
        }
    }

    /// Bounds with a complete proof; violations of these fail `--strict` runs.
    pub fn is_asserted(self) -> bool {
        matches!(self, BoundId::SqrtN | BoundId::Thm22 | BoundId::QuasiSectorial)
    }
}

impl fmt::Display for BoundId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Violated,
    /// Outside the parameter range where the bound's derivation applies.
    OutOfRegime,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Holds => "holds",
            Verdict::Violated => "violated",
            Verdict::OutOfRegime => "out_of_regime",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditContext {
    pub n: u64,
    pub delta: f64,
    pub bound_id: BoundId,
    pub fingerprint: String,
}

/// One bound-versus-defect comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundAudit {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub verdict: Verdict,
    pub context: AuditContext,
}

pub fn verdict_tolerance(rhs: f64) -> f64 {
    1e-9 * (1.0 + rhs)
}

impl BoundAudit {
    pub fn new(lhs: f64, rhs: f64, context: AuditContext) -> Self {
        let margin = rhs - lhs;
        let verdict = if margin >= -verdict_tolerance(rhs) { Verdict::Holds } else { Verdict::Violated };
        BoundAudit { lhs, rhs, margin, verdict, context }
    }

    pub fn out_of_regime(lhs: f64, rhs: f64, context: AuditContext) -> Self {
        BoundAudit { lhs, rhs, margin: rhs - lhs, verdict: Verdict::OutOfRegime, context }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.context.bound_id,
            self.context.n,
            self.context.delta,
            self.lhs,
            self.rhs,
            self.margin,
            self.verdict,
            self.context.fingerprint
        )
    }
}

pub const AUDIT_CSV_HEADER: &str = "bound_id,n,delta,lhs,rhs,margin,verdict,fingerprint";

fn check_contraction(c: &Mat) -> Result<()> {
    let norm = opnorm(c)?;
    if norm > 1.0 + CONTRACTION_TOL {
        return Err(Error::input(format!("not a contraction: ‖C‖ = {norm}")));
    }
    Ok(())
}

/// `Cⁿ − e^{n(C−𝟙)}` without the contraction check.
pub fn chernoff_difference(c: &Mat, n: u64) -> Result<Mat> {
    let gen = c.shift(C64::new(-1.0, 0.0)).scale_real(n as f64);
    Ok(&powm(c, n) - &expm(&gen)?)
}

/// `‖Cⁿ − e^{n(C−𝟙)}‖`.
pub fn chernoff_defect_norm(c: &Mat, n: u64) -> Result<f64> {
    check_contraction(c)?;
    if n == 0 {
        return Err(Error::input("n must be at least 1"));
    }
    opnorm(&chernoff_difference(c, n)?)
}

/// `(‖(Cⁿ − e^{n(C−𝟙)})x‖, ‖(C−𝟙)x‖)`.
pub fn chernoff_defect_vec(c: &Mat, x: &CVec, n: u64) -> Result<(f64, f64)> {
    check_contraction(c)?;
    if n == 0 {
        return Err(Error::input("n must be at least 1"));
    }
    if x.norm() == 0.0 {
        return Err(Error::input("probe vector must be non-zero"));
    }
    let diff = chernoff_difference(c, n)?;
    let lhs = diff.apply(x)?.norm();
    let drive = c.shift(C64::new(-1.0, 0.0)).apply(x)?.norm();
    Ok((lhs, drive))
}

pub fn bound_sqrt_n(n: u64, drive: f64) -> f64 {
    (n as f64).sqrt() * drive
}

pub fn bound_lemma2(n: u64, delta: f64, drive: f64) -> f64 {
    let nf = n as f64;
    (nf.powf(-2.0 * delta) + nf.powf(delta + 0.5)) * drive
}

pub fn bound_thm22(n: u64, delta: f64, x_norm: f64, phi_drive: f64) -> f64 {
    let nf = n as f64;
    2.0 * nf.powf(-2.0 * delta) * x_norm + nf.powf(delta + 0.5) * phi_drive
}

/// `2n^{−2δ} + 2K n^{δ−½}`.
pub fn bound_quasisectorial(n: u64, delta: f64, k: f64) -> f64 {
    let nf = n as f64;
    2.0 * nf.powf(-2.0 * delta) + 2.0 * k * nf.powf(delta - 0.5)
}

/// `(2K+2)/n^{1/3}`, the `δ = 1/6` case of [`bound_quasisectorial`].
pub fn bound_cube_root(n: u64, k: f64) -> f64 {
    (2.0 * k + 2.0) / (n as f64).cbrt()
}

/// Whether `[ε_n] ≤ (n+1)/2`, the range where the central-part estimate with
/// `C^{n−[ε_n]}` applies.
pub fn quasi_sectorial_in_regime(n: u64, delta: f64) -> bool {
    let k = epsilon_n(n, delta).floor();
    k <= (n as f64 + 1.0) / 2.0
}

/// Measured Ritt constant `max_{1≤n≤N} (n+1)‖Cⁿ(𝟙−C)‖`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RittEstimate {
    pub k_hat: f64,
    pub n_max: u64,
    pub argmax_n: u64,
    /// Set when the maximum sits at `n_max`; the sequence may not have settled.
    pub max_at_boundary: bool,
}

impl RittEstimate {
    /// `M = 2K + 2`.
    pub fn m_constant(&self) -> f64 {
        2.0 * self.k_hat + 2.0
    }
}

pub fn ritt_constant(c: &Mat, n_max: u64) -> Result<RittEstimate> {
    check_contraction(c)?;
    if n_max < 16 {
        return Err(Error::input(format!("N_max must be at least 16, got {n_max}")));
    }
    let one_minus = &Mat::identity(c.dim()) - c;
    let mut p = c * &one_minus;
    let mut best = (f64::NEG_INFINITY, 0u64);
    for n in 1..=n_max {
        let v = (n as f64 + 1.0) * opnorm(&p)?;
        if v > best.0 {
            best = (v, n);
        }
        if n < n_max {
            p = c * &p;
        }
    }
    Ok(RittEstimate { k_hat: best.0, n_max, argmax_n: best.1, max_at_boundary: best.1 == n_max && best.0 > 0.0 })
}

/// What the defect is measured on.
#[derive(Clone, Debug)]
pub enum Probe {
    Vector(CVec),
    Norm,
}

/// Audits of one bound over an `n`-sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditSweep {
    pub audits: Vec<BoundAudit>,
    /// Smallest margin over in-regime audits (`None` when there are none).
    pub min_margin: Option<f64>,
    pub violations: usize,
    pub out_of_regime: usize,
}

impl AuditSweep {
    pub fn from_audits(audits: Vec<BoundAudit>) -> Self {
        let in_regime = audits.iter().filter(|a| a.verdict != Verdict::OutOfRegime);
        let min_margin = in_regime.map(|a| a.margin).reduce(f64::min);
        let violations = audits.iter().filter(|a| a.verdict == Verdict::Violated).count();
        let out_of_regime = audits.iter().filter(|a| a.verdict == Verdict::OutOfRegime).count();
        AuditSweep { audits, min_margin, violations, out_of_regime }
    }
}

/// Compares one bound with the measured defect for each `n` in `n_sweep`.
///
/// `quasi_sectorial` needs a [`RittEstimate`] and operator-norm probing;
/// audits with `[ε_n] > (n+1)/2` are marked out of regime.
pub fn audit_bound(
    c: &Mat,
    probe: &Probe,
    n_sweep: &[u64],
    delta: f64,
    bound_id: BoundId,
    ritt: Option<&RittEstimate>,
) -> Result<AuditSweep> {
    check_contraction(c)?;
    match (bound_id, probe) {
        (BoundId::TailClaim | BoundId::TailTchebychev, _) => {
            return Err(Error::input(format!("{bound_id} is a Poisson-sum audit, not an operator bound")))
        }
        (BoundId::QuasiSectorial, Probe::Vector(_)) => {
            return Err(Error::input("quasi_sectorial is an operator-norm bound; use norm probing"))
        }
        (BoundId::QuasiSectorial, Probe::Norm) if ritt.is_none() => {
            return Err(Error::input("quasi_sectorial audit requires a Ritt estimate"))
        }
        _ => {}
    }
    if let Probe::Vector(x) = probe {
        if x.dim() != c.dim() || x.norm() == 0.0 {
            return Err(Error::input("probe vector must be non-zero and match the operator dimension"));
        }
    }
    let fingerprint = c.fingerprint();
    let c_minus_one = c.shift(C64::new(-1.0, 0.0));
    let (x_norm, drive) = match probe {
        Probe::Vector(x) => (x.norm(), c_minus_one.apply(x)?.norm()),
        Probe::Norm => (1.0, opnorm(&c_minus_one)?),
    };
    let mut audits = Vec::with_capacity(n_sweep.len());
    for &n in n_sweep {
        if n == 0 {
            return Err(Error::input("n must be at least 1"));
        }
        let diff = chernoff_difference(c, n)?;
        let lhs = match probe {
            Probe::Vector(x) => diff.apply(x)?.norm(),
            Probe::Norm => opnorm(&diff)?,
        };
        let ctx = AuditContext { n, delta, bound_id, fingerprint: fingerprint.clone() };
        let audit = match bound_id {
            BoundId::SqrtN => BoundAudit::new(lhs, bound_sqrt_n(n, drive), ctx),
            BoundId::Lemma2 => BoundAudit::new(lhs, bound_lemma2(n, delta, drive), ctx),
            BoundId::Thm22 => BoundAudit::new(lhs, bound_thm22(n, delta, x_norm, drive), ctx),
            BoundId::QuasiSectorial => {
                let k = ritt.map(|r| r.k_hat).unwrap_or_default();
                let rhs = bound_quasisectorial(n, delta, k);
                if quasi_sectorial_in_regime(n, delta) {
                    BoundAudit::new(lhs, rhs, ctx)
                } else {
                    BoundAudit::out_of_regime(lhs, rhs, ctx)
                }
            }
            BoundId::TailClaim | BoundId::TailTchebychev => unreachable!("rejected above"),
        };
        audits.push(audit);
    }
    Ok(AuditSweep::from_audits(audits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    fn d1(z: C64) -> Mat {
        Mat::scalar(z).unwrap()
    }

    #[test]
    fn defect_norm_examples() {
        for n in [1, 5, 100] {
            assert_eq!(chernoff_defect_norm(&Mat::identity(3), n).unwrap(), 0.0);
        }
        let v = chernoff_defect_norm(&d1(c(0.0, 0.0)), 1).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        let v = chernoff_defect_norm(&d1(c(0.5, 0.0)), 2).unwrap();
        assert!((v - ((-1.0f64).exp() - 0.25)).abs() < 1e-15);
        assert!((v - 0.117_879_4).abs() < 1e-7);
        assert!(matches!(chernoff_defect_norm(&d1(c(1.1, 0.0)), 1), Err(Error::Input(_))));
    }

    #[test]
    fn defect_vec_examples() {
        let x = CVec::from_real(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(chernoff_defect_vec(&Mat::identity(3), &x, 7).unwrap(), (0.0, 0.0));
        let cm = Mat::from_real_diag(&[0.5, 1.0]).unwrap();
        let x = CVec::from_real(&[0.0, 1.0]).unwrap();
        assert_eq!(chernoff_defect_vec(&cm, &x, 9).unwrap(), (0.0, 0.0));
        let (lhs, drive) = chernoff_defect_vec(&d1(c(0.0, 0.0)), &CVec::from_real(&[1.0]).unwrap(), 1).unwrap();
        assert!((lhs - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(drive, 1.0);
        let zero = CVec::from_real(&[0.0]).unwrap();
        assert!(chernoff_defect_vec(&d1(c(0.5, 0.0)), &zero, 1).is_err());
    }

    #[test]
    fn bound_formulas() {
        assert_eq!(bound_sqrt_n(4, 1.0), 2.0);
        assert_eq!(bound_sqrt_n(1, 0.0), 0.0);
        assert!((bound_sqrt_n(2, 0.5) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);

        for d in [-0.4, -1.0 / 6.0, 0.0, 0.3] {
            assert_eq!(bound_lemma2(1, d, 1.0), 2.0);
        }
        assert!((bound_lemma2(49, 0.0, 2.0) - 2.0 * 8.0).abs() < 1e-12);
        assert!((bound_lemma2(8, -1.0 / 6.0, 1.0) - 4.0).abs() < 1e-12);

        assert!((bound_thm22(1, 1.0 / 6.0, 1.0, 0.0) - 2.0).abs() < 1e-15);
        assert!((bound_thm22(64, 1.0 / 6.0, 1.0, 1.0) - (2.0 / 4.0 + 16.0)).abs() < 1e-12);
        assert_eq!(bound_thm22(64, 1.0 / 6.0, 0.0, 0.0), 0.0);

        for n in [1u64, 8, 100, 4096] {
            for k in [0.0, 0.5, 2.0] {
                let a = bound_quasisectorial(n, 1.0 / 6.0, k);
                assert!((a - bound_cube_root(n, k)).abs() < 1e-12 * a);
            }
        }
        assert_eq!(bound_quasisectorial(1, 0.2, 1.5), 2.0 + 3.0);
        assert!((bound_quasisectorial(16, 0.25, 0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn regime_guard() {
        assert!(quasi_sectorial_in_regime(8, 1.0 / 6.0));
        assert!((1..=4096).all(|n| quasi_sectorial_in_regime(n, 1.0 / 6.0)));
        // δ = 1/2: ε_n = n exceeds (n+1)/2 once n ≥ 2.
        assert!(quasi_sectorial_in_regime(1, 0.5));
        assert!(!quasi_sectorial_in_regime(2, 0.5));
    }

    #[test]
    fn ritt_examples() {
        let j = Mat::from_real_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let r = ritt_constant(&j, 16).unwrap();
        assert!((r.k_hat - 2.0).abs() < 1e-14);
        assert_eq!(r.argmax_n, 1);
        assert!(!r.max_at_boundary);
        assert_eq!(ritt_constant(&Mat::identity(2), 16).unwrap().k_hat, 0.0);
        assert!(ritt_constant(&j, 15).is_err());
        assert_eq!(r.m_constant(), 6.0);
    }

    #[test]
    fn ritt_of_odd_grid_is_discrete_maximum() {
        // Grid k/511 misses λ = 1/2; the maximum is 2λ(1−λ) at λ = 255/511.
        let grid: Vec<f64> = (0..=511).map(|k| k as f64 / 511.0).collect();
        let r = ritt_constant(&Mat::from_real_diag(&grid).unwrap(), 16).unwrap();
        let expected = 2.0 * (255.0 * 256.0) / (511.0 * 511.0);
        assert!((r.k_hat - expected).abs() < 1e-14);
        assert_eq!(r.argmax_n, 1);
    }

    #[test]
    fn scalar_probe_audits() {
        let theta = 1e-3;
        let cm = d1(C64::from_polar(1.0, theta));
        let x = Probe::Vector(CVec::from_real(&[1.0]).unwrap());
        let n = 1_000_000;
        // Independent scalar evaluation.
        let z = C64::from_polar(1.0, theta);
        let lhs = (C64::from_polar(1.0, n as f64 * theta) - ((z - 1.0) * n as f64).exp()).norm();
        let drive = (z - 1.0).norm();
        let ratio = lhs / drive;
        assert!((ratio - 393.5).abs() < 1.0, "{ratio}");

        let s = audit_bound(&cm, &x, &[n], 0.0, BoundId::SqrtN, None).unwrap();
        let a = &s.audits[0];
        assert!((a.lhs / drive - ratio).abs() < 1e-6);
        assert!((a.rhs / drive - 1000.0).abs() < 1e-9);
        assert_eq!(a.verdict, Verdict::Holds);

        let s = audit_bound(&cm, &x, &[n], -1.0 / 6.0, BoundId::Lemma2, None).unwrap();
        assert!((s.audits[0].rhs / drive - 200.0).abs() < 1e-9);
        assert_eq!(s.audits[0].verdict, Verdict::Violated);
        assert_eq!(s.violations, 1);
    }

    #[test]
    fn audit_identity_and_half() {
        for b in [BoundId::SqrtN, BoundId::Lemma2, BoundId::Thm22] {
            let s = audit_bound(&Mat::identity(2), &Probe::Norm, &[1, 2, 3], 0.1, b, None).unwrap();
            assert!(s.audits.iter().all(|a| a.verdict == Verdict::Holds && a.margin == a.rhs));
        }
        let n: Vec<u64> = (1..=64).collect();
        let s = audit_bound(&d1(c(0.5, 0.0)), &Probe::Norm, &n, 0.0, BoundId::SqrtN, None).unwrap();
        assert_eq!(s.violations, 0);
        assert_eq!(s.audits.len(), 64);
    }

    #[test]
    fn audit_rejects_mismatched_bounds() {
        let cm = d1(c(0.5, 0.0));
        let x = Probe::Vector(CVec::from_real(&[1.0]).unwrap());
        let r = ritt_constant(&cm, 16).unwrap();
        assert!(audit_bound(&cm, &x, &[1], 1.0 / 6.0, BoundId::QuasiSectorial, Some(&r)).is_err());
        assert!(audit_bound(&cm, &Probe::Norm, &[1], 1.0 / 6.0, BoundId::QuasiSectorial, None).is_err());
        assert!(audit_bound(&cm, &Probe::Norm, &[1], 1.0 / 6.0, BoundId::TailClaim, None).is_err());
        let s = audit_bound(&cm, &Probe::Norm, &[1, 2, 4], 0.5, BoundId::QuasiSectorial, Some(&r)).unwrap();
        assert_eq!(s.out_of_regime, 2);
    }

    #[test]
    fn self_adjoint_closed_form() {
        let lam = [0.0, 0.13, 0.5, 0.87, 0.99, 1.0];
        let cm = Mat::from_real_diag(&lam).unwrap();
        for n in [1u64, 3, 17, 200] {
            let expected =
                lam.iter().map(|&l: &f64| (l.powi(n as i32) - (n as f64 * (l - 1.0)).exp()).abs()).fold(0.0, f64::max);
            assert!((chernoff_defect_norm(&cm, n).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn verdict_tolerance_absorbs_ties() {
        let ctx = AuditContext { n: 1, delta: 0.0, bound_id: BoundId::SqrtN, fingerprint: "x".into() };
        assert_eq!(BoundAudit::new(1.0 + 1e-10, 1.0, ctx.clone()).verdict, Verdict::Holds);
        assert_eq!(BoundAudit::new(1.0 + 1e-8, 1.0, ctx).verdict, Verdict::Violated);
    }
}
