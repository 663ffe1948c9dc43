//! Product-formula approximants of matrix semigroups `e^{−tA}`.
//!
//! A [`ChernoffFamily`] is a map `t ↦ Φ(t)` into contractions with
//! `Φ(0) = 𝟙`; its iterates `Φ(t/n)ⁿ` approximate the semigroup generated by
//! `−Φ'(+0)`. The built-in families are the Euler resolvent `(𝟙+tA)⁻¹`, the
//! Lie-Trotter product `e^{−tA}e^{−tB}`, and the exact semigroup itself.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::defects::CONTRACTION_TOL;
use crate::error::{Error, Result};
use crate::linalg::{expm, opnorm, powm, resolvent, Mat, MatJson, C64};

/// A map from `t ≥ 0` to contractions with `Φ(0) = 𝟙`.
///
/// Implementors provide [`eval_unchecked`](ChernoffFamily::eval_unchecked);
/// [`eval`](ChernoffFamily::eval) re-checks the contract on every call.
pub trait ChernoffFamily: Send + Sync {
    fn label(&self) -> String;

    fn dim(&self) -> usize;

    fn eval_unchecked(&self, t: f64) -> Result<Mat>;

    fn eval(&self, t: f64) -> Result<Mat> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::input(format!("family time must be finite and non-negative, got {t}")));
        }
        let phi = self.eval_unchecked(t)?;
        let norm = opnorm(&phi)?;
        if norm > 1.0 + CONTRACTION_TOL {
            return Err(Error::FamilyContract(format!("{}: ‖Φ({t})‖ = {norm} exceeds 1", self.label())));
        }
        if t == 0.0 {
            let dev = (&phi - &Mat::identity(self.dim())).max_abs();
            if dev > 1e-12 {
                return Err(Error::FamilyContract(format!("{}: Φ(0) deviates from identity by {dev:e}", self.label())));
            }
        }
        Ok(phi)
    }
}

/// `Φ(t) = (𝟙 + tA)⁻¹`.
#[derive(Clone, Debug)]
pub struct EulerFamily {
    pub a: Mat,
}

impl ChernoffFamily for EulerFamily {
    fn label(&self) -> String {
        "euler".into()
    }

    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn eval_unchecked(&self, t: f64) -> Result<Mat> {
        resolvent(&self.a.scale_real(t), C64::new(1.0, 0.0))
    }
}

/// Factor order in the Lie-Trotter product.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrotterOrder {
    /// `e^{−tA} e^{−tB}`
    #[default]
    AFirst,
    /// `e^{−tB} e^{−tA}`
    BFirst,
}

/// `Φ(t) = e^{−tA} e^{−tB}` (or the reversed order).
#[derive(Clone, Debug)]
pub struct TrotterFamily {
    pub a: Mat,
    pub b: Mat,
    pub order: TrotterOrder,
}

impl TrotterFamily {
    pub fn new(a: Mat, b: Mat) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::input("Trotter generators must have equal dimension"));
        }
        Ok(TrotterFamily { a, b, order: TrotterOrder::AFirst })
    }

    pub fn with_order(mut self, order: TrotterOrder) -> Self {
        self.order = order;
        self
    }
}

impl ChernoffFamily for TrotterFamily {
    fn label(&self) -> String {
        match self.order {
            TrotterOrder::AFirst => "trotter".into(),
            TrotterOrder::BFirst => "trotter_reversed".into(),
        }
    }

    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn eval_unchecked(&self, t: f64) -> Result<Mat> {
        let ea = expm(&self.a.scale_real(-t))?;
        let eb = expm(&self.b.scale_real(-t))?;
        Ok(match self.order {
            TrotterOrder::AFirst => &ea * &eb,
            TrotterOrder::BFirst => &eb * &ea,
        })
    }
}

/// `Φ(t) = e^{−tA}`; its iterates reproduce the semigroup for every `n`.
#[derive(Clone, Debug)]
pub struct ExactFamily {
    pub a: Mat,
}

impl ChernoffFamily for ExactFamily {
    fn label(&self) -> String {
        "exact".into()
    }

    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn eval_unchecked(&self, t: f64) -> Result<Mat> {
        exact_semigroup(&self.a, t)
    }
}

/// On-disk family description referenced as `file:<path>`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyFile {
    pub kind: String,
    pub a: MatJson,
    #[serde(default)]
    pub b: Option<MatJson>,
    #[serde(default)]
    pub order: TrotterOrder,
}

impl FamilyFile {
    /// Generator whose semigroup the family approximates: `A`, or `A + B` for Trotter pairs.
    pub fn generator(&self) -> Result<Mat> {
        let a = self.a.to_mat()?;
        match &self.b {
            Some(b) => {
                let b = b.to_mat()?;
                if b.dim() != a.dim() {
                    return Err(Error::input("A and B differ in dimension"));
                }
                Ok(&a + &b)
            }
            None => Ok(a),
        }
    }
}

/// Resolves `"euler"`, `"trotter"`, `"exact"` or `"file:<path>"` to a family.
pub fn family_by_name(name: &str, a: Option<&Mat>, b: Option<&Mat>) -> Result<Box<dyn ChernoffFamily>> {
    let need = |m: Option<&Mat>, which: &str| {
        m.cloned().ok_or_else(|| Error::input(format!("family '{name}' needs generator {which}")))
    };
    match name {
        "euler" => Ok(Box::new(EulerFamily { a: need(a, "A")? })),
        "exact" => Ok(Box::new(ExactFamily { a: need(a, "A")? })),
        "trotter" => Ok(Box::new(TrotterFamily::new(need(a, "A")?, need(b, "B")?)?)),
        _ => match name.strip_prefix("file:") {
            Some(path) => family_from_file(path),
            None => Err(Error::input(format!("unknown family '{name}'"))),
        },
    }
}

pub fn family_from_file(path: impl AsRef<Path>) -> Result<Box<dyn ChernoffFamily>> {
    let spec: FamilyFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    let a = spec.a.to_mat()?;
    let b = spec.b.as_ref().map(MatJson::to_mat).transpose()?;
    if spec.kind.starts_with("file:") {
        return Err(Error::input("family files cannot reference other files"));
    }
    let fam = family_by_name(&spec.kind, Some(&a), b.as_ref())?;
    if spec.kind == "trotter" && spec.order == TrotterOrder::BFirst {
        let b = b.expect("checked by family_by_name");
        return Ok(Box::new(TrotterFamily::new(a, b)?.with_order(TrotterOrder::BFirst)));
    }
    Ok(fam)
}

fn check_n(n: u64) -> Result<()> {
    if n == 0 {
        Err(Error::input("n must be at least 1"))
    } else {
        Ok(())
    }
}

/// `Φ(t/n)ⁿ`.
pub fn chernoff_iterate(f: &dyn ChernoffFamily, t: f64, n: u64) -> Result<Mat> {
    check_n(n)?;
    Ok(powm(&f.eval(t / n as f64)?, n))
}

/// `A_n(s) = (𝟙 − Φ(s/n))/(s/n)`.
pub fn generator_approx(f: &dyn ChernoffFamily, s: f64, n: u64) -> Result<Mat> {
    check_n(n)?;
    if s.is_nan() || s <= 0.0 {
        return Err(Error::input("s must be positive"));
    }
    let h = s / n as f64;
    let phi = f.eval(h)?;
    Ok((&Mat::identity(f.dim()) - &phi).scale_real(1.0 / h))
}

/// `(e^{−tA/n} e^{−tB/n})ⁿ`.
pub fn trotter_approx(a: &Mat, b: &Mat, t: f64, n: u64) -> Result<Mat> {
    trotter_approx_ordered(a, b, t, n, TrotterOrder::AFirst)
}

pub fn trotter_approx_ordered(a: &Mat, b: &Mat, t: f64, n: u64, order: TrotterOrder) -> Result<Mat> {
    let fam = TrotterFamily::new(a.clone(), b.clone())?.with_order(order);
    chernoff_iterate(&fam, t, n)
}

/// `(𝟙 + tA/n)⁻ⁿ`.
pub fn euler_approx(a: &Mat, t: f64, n: u64) -> Result<Mat> {
    check_n(n)?;
    let step = resolvent(&a.scale_real(t / n as f64), C64::new(1.0, 0.0))?;
    Ok(powm(&step, n))
}

/// `e^{−tA}`.
pub fn exact_semigroup(a: &Mat, t: f64) -> Result<Mat> {
    expm(&a.scale_real(-t))
}

/// `‖Φ(t/n)ⁿ − e^{−tA}‖` for a family whose generator is `A`.
pub fn iterate_defect(f: &dyn ChernoffFamily, generator: &Mat, t: f64, n: u64) -> Result<f64> {
    let approx = chernoff_iterate(f, t, n)?;
    opnorm(&(&approx - &exact_semigroup(generator, t)?))
}

/// Uniform-resolvent defect for `X(s) = (𝟙 − (𝟙+sA)⁻¹)/s` against `X₀ = A`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolventDefect {
    /// `‖(ζ𝟙 + X(s))⁻¹ − (ζ𝟙 + A)⁻¹‖`, by direct subtraction.
    pub defect: f64,
    /// `s‖A(ζ𝟙 + A + ζsA)⁻¹ · A(ζ𝟙 + A)⁻¹‖`.
    pub product_form: f64,
}

/// Both routes to the resolvent defect.
///
/// `X(s)` is formed as `A(𝟙+sA)⁻¹`, equal to `(𝟙 − (𝟙+sA)⁻¹)/s` but free of
/// the `O(ε/s)` cancellation in the subtraction.
pub fn resolvent_defect(a: &Mat, s: f64, zeta: C64) -> Result<ResolventDefect> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::input("s must be positive"));
    }
    let one = C64::new(1.0, 0.0);
    let x_s = a * &resolvent(&a.scale_real(s), one)?;
    let r_x = resolvent(&x_s, zeta)?;
    let r_a = resolvent(a, zeta)?;
    let defect = opnorm(&(&r_x - &r_a))?;

    let left = a * &resolvent(&a.scale(one + zeta * s), zeta)?;
    let right = a * &r_a;
    let product_form = s * opnorm(&(&left * &right))?;
    Ok(ResolventDefect { defect, product_form })
}

/// Finite-difference check of `Φ'(+0) = −G` at step `h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCheck {
    pub h: f64,
    pub deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares `(𝟙 − Φ(h))/h` with the expected generator; tolerance `1e-3·(1+‖G‖)`.
pub fn derivative_check(f: &dyn ChernoffFamily, generator: &Mat, h: f64) -> Result<DerivativeCheck> {
    let approx = generator_approx(f, h, 1)?;
    let deviation = opnorm(&(&approx - generator))?;
    let tolerance = 1e-3 * (1.0 + opnorm(generator)?);
    Ok(DerivativeCheck { h, deviation, tolerance, passed: deviation <= tolerance })
}
