//! Seeded generators for the operator classes under test.
//!
//! Every operator is a pure function of `(kind, dim, seed, params)`. Random
//! draws come from ChaCha20 seeded with `seed_from_u64`; complex normals use
//! Box-Muller on pairs of uniforms so the stream is easy to reproduce in
//! other languages. Draw order is documented per kind.

use std::f64::consts::PI;
use std::fs;
use std::path::PathBuf;

use nalgebra::{DMatrix, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use rayon::prelude::*;

use crate::linalg::{resolvent, unitary_conjugate, CVec, Mat, MatJson, C64, MAX_DIM};
use crate::regions::{certify, RegionKind, SectorialCert, DEFAULT_N_ANGLES};

/// Identifier recorded in reports so corpora can be regenerated elsewhere.
pub const RNG_ALGORITHM: &str = "chacha20/seed_from_u64/box-muller";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    RandomContraction,
    SelfadjointContraction,
    Msectorial,
    ResolventQuasisectorial,
    ScalarUnitaryProbe,
    JordanBlock,
    DiagonalFile,
}

/// Eigenvalue layout for self-adjoint contractions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spectrum {
    /// i.i.d. uniform on `[0, 1]`.
    #[default]
    Uniform,
    /// `k/(d−1)`, `k = 0..d`.
    Grid,
    /// `1 − 10^{−4k/(d−1)}`: gaps to 1 log-spaced from 1 down to 1e-4.
    LogGrid,
}

/// Kind-specific parameters; fields not used by a kind are ignored.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyParams {
    /// Sector semi-angle for `msectorial` / `resolvent_quasisectorial`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Largest eigenvalue modulus of the m-sectorial generator (default 4).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    /// Resolvent time for `resolvent_quasisectorial` (default 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    /// Phase of `scalar_unitary_probe`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Spectrum>,
    /// Inline diagonal for `diagonal_file`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    /// File for `diagonal_file`: a JSON array of reals or a matrix literal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: FamilyParams,
}

impl FamilySpec {
    pub fn new(kind: FamilyKind, dim: usize, seed: u64) -> Self {
        FamilySpec { kind, dim, seed, params: FamilyParams::default() }
    }

    pub fn with_params(mut self, params: FamilyParams) -> Self {
        self.params = params;
        self
    }
}

/// A generated operator with its certificate and, for normal constructions,
/// the planted spectrum.
#[derive(Clone, Debug)]
pub struct GeneratedOperator {
    pub spec: FamilySpec,
    pub mat: Mat,
    pub cert: SectorialCert,
    pub planted_spectrum: Option<Vec<C64>>,
}

struct Draws(ChaCha20Rng);

impl Draws {
    fn new(seed: u64) -> Self {
        Draws(ChaCha20Rng::seed_from_u64(seed))
    }

    fn uniform(&mut self) -> f64 {
        self.0.random::<f64>()
    }

    /// Standard complex normal (`E|z|² = 1`) from two uniforms.
    fn complex_normal(&mut self) -> C64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        C64::from_polar(r * std::f64::consts::FRAC_1_SQRT_2, 2.0 * PI * u2)
    }

    /// `d×d` complex Gaussian, row-major draw order.
    fn gaussian(&mut self, d: usize) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] = self.complex_normal();
            }
        }
        m
    }

    /// Haar unitary: QR of a complex Gaussian with `R`'s diagonal made positive.
    fn unitary(&mut self, d: usize) -> Mat {
        let qr = self.gaussian(d).qr();
        let (mut q, r) = qr.unpack();
        for j in 0..d {
            let rjj = r[(j, j)];
            let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { C64::new(1.0, 0.0) };
            q.column_mut(j).iter_mut().for_each(|z| *z *= phase);
        }
        Mat::from_dmatrix(q).expect("unitary is finite and square")
    }
}

fn gen_err(msg: impl Into<String>) -> Error {
    Error::Generation(msg.into())
}

fn msectorial_parts(d: usize, seed: u64, p: &FamilyParams) -> Result<(Mat, Vec<C64>)> {
    let alpha = p.alpha.ok_or_else(|| Error::input("msectorial families need params.alpha"))?;
    if !(0.0..std::f64::consts::FRAC_PI_2).contains(&alpha) {
        return Err(Error::input(format!("alpha = {alpha} outside [0, π/2)")));
    }
    let r_max = p.r_max.unwrap_or(4.0);
    if !(r_max > 0.0 && r_max.is_finite()) {
        return Err(Error::input("r_max must be positive"));
    }
    let mut rng = Draws::new(seed);
    let v = rng.unitary(d);
    let eig: Vec<C64> = (0..d)
        .map(|_| {
            let r = r_max * rng.uniform();
            let phi = alpha * (2.0 * rng.uniform() - 1.0);
            C64::from_polar(r, phi)
        })
        .collect();
    Ok((unitary_conjugate(&v, &eig), eig))
}

fn read_diagonal(p: &FamilyParams) -> Result<Mat> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum DiagFile {
        Values(Vec<f64>),
        Matrix(MatJson),
    }
    if let Some(v) = &p.values {
        return Mat::from_real_diag(v);
    }
    let path = p.path.as_ref().ok_or_else(|| Error::input("diagonal_file needs params.values or params.path"))?;
    match serde_json::from_str::<DiagFile>(&fs::read_to_string(path)?)? {
        DiagFile::Values(v) => Mat::from_real_diag(&v),
        DiagFile::Matrix(m) => m.to_mat(),
    }
}

fn build(spec: &FamilySpec) -> Result<(Mat, Option<Vec<C64>>, RegionKind)> {
    let d = spec.dim;
    if spec.kind != FamilyKind::DiagonalFile && !(1..=MAX_DIM).contains(&d) {
        return Err(Error::input(format!("dim must be in [1, {MAX_DIM}], got {d}")));
    }
    let p = &spec.params;
    let real = |x: f64| C64::new(x, 0.0);
    match spec.kind {
        FamilyKind::RandomContraction => {
            let mut rng = Draws::new(spec.seed);
            let g = rng.gaussian(d) / real((d as f64).sqrt());
            let svd = SVD::try_new(g, true, true, f64::EPSILON, 0).ok_or_else(|| gen_err("SVD did not converge"))?;
            let u = svd.u.expect("requested");
            let vt = svd.v_t.expect("requested");
            let sigma = DMatrix::from_diagonal(&svd.singular_values.map(|s| real(s.min(1.0))));
            Ok((Mat::from_dmatrix(u * sigma * vt)?, None, RegionKind::DAlpha))
        }
        FamilyKind::SelfadjointContraction => {
            let mut rng = Draws::new(spec.seed);
            let u = rng.unitary(d);
            let denom = (d.max(2) - 1) as f64;
            let lambda: Vec<f64> = match p.spectrum.unwrap_or_default() {
                Spectrum::Uniform => (0..d).map(|_| rng.uniform()).collect(),
                Spectrum::Grid => (0..d).map(|k| if d == 1 { 1.0 } else { k as f64 / denom }).collect(),
                Spectrum::LogGrid => (0..d).map(|k| 1.0 - 10f64.powf(-4.0 * k as f64 / denom)).collect(),
            };
            let eig: Vec<C64> = lambda.iter().map(|&l| real(l)).collect();
            let m = unitary_conjugate(&u, &eig);
            // Exact Hermitian symmetry.
            let m = (&m + &m.adjoint()).scale_real(0.5);
            Ok((m, Some(eig), RegionKind::DAlpha))
        }
        FamilyKind::Msectorial => {
            let (a, eig) = msectorial_parts(d, spec.seed, p)?;
            Ok((a, Some(eig), RegionKind::SAlpha))
        }
        FamilyKind::ResolventQuasisectorial => {
            let t = p.t.unwrap_or(1.0);
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::input("t must be non-negative"));
            }
            let (a, eig) = msectorial_parts(d, spec.seed, p)?;
            let c = resolvent(&a.scale_real(t), real(1.0))?;
            let eig = eig.iter().map(|z| (real(1.0) + z * t).inv()).collect();
            Ok((c, Some(eig), RegionKind::DAlpha))
        }
        FamilyKind::ScalarUnitaryProbe => {
            if d != 1 {
                return Err(Error::input("scalar_unitary_probe has dim 1"));
            }
            let theta = p.theta.ok_or_else(|| Error::input("scalar_unitary_probe needs params.theta"))?;
            let z = C64::from_polar(1.0, theta);
            Ok((Mat::scalar(z)?, Some(vec![z]), RegionKind::DAlpha))
        }
        FamilyKind::JordanBlock => {
            let m = DMatrix::from_fn(d, d, |i, j| if j == i + 1 { real(1.0) } else { real(0.0) });
            Ok((Mat::from_dmatrix(m)?, Some(vec![real(0.0)]), RegionKind::DAlpha))
        }
        FamilyKind::DiagonalFile => {
            let m = read_diagonal(p)?;
            if d != 0 && d != m.dim() {
                return Err(Error::input(format!("dim {d} does not match file dimension {}", m.dim())));
            }
            let eig = m.is_diagonal().then(|| m.diagonal());
            let region =
                if crate::linalg::opnorm(&m)? <= 1.0 + 1e-10 { RegionKind::DAlpha } else { RegionKind::SAlpha };
            Ok((m, eig, region))
        }
    }
}

fn confirm_class(spec: &FamilySpec, cert: &SectorialCert) -> Result<()> {
    let angle = cert.semi_angle_min.map(|a| a.radians());
    let fail = |what: &str| Err(gen_err(format!("{:?} (seed {}): {what}", spec.kind, spec.seed)));
    match spec.kind {
        FamilyKind::RandomContraction | FamilyKind::ScalarUnitaryProbe | FamilyKind::JordanBlock => {
            if !cert.is_contraction {
                return fail("not a contraction");
            }
        }
        FamilyKind::SelfadjointContraction => {
            if !cert.is_contraction {
                return fail("not a contraction");
            }
            if !matches!(angle, Some(a) if a <= 1e-6) {
                return fail("self-adjoint contraction is not in D_0");
            }
        }
        FamilyKind::Msectorial => {
            let alpha = spec.params.alpha.unwrap_or_default();
            if !matches!(angle, Some(a) if a <= alpha + 1e-6) {
                return fail("numerical range leaves the sector");
            }
        }
        FamilyKind::ResolventQuasisectorial => {
            let alpha = spec.params.alpha.unwrap_or_default();
            if !cert.is_contraction {
                return fail("not a contraction");
            }
            if !matches!(angle, Some(a) if a <= alpha + 1e-3) {
                return fail("numerical range leaves D_alpha");
            }
        }
        FamilyKind::DiagonalFile => {}
    }
    Ok(())
}

/// Builds the operator described by `spec` and confirms its advertised class.
pub fn make_operator(spec: &FamilySpec) -> Result<GeneratedOperator> {
    make_operator_with(spec, DEFAULT_N_ANGLES)
}

pub fn make_operator_with(spec: &FamilySpec, n_angles: usize) -> Result<GeneratedOperator> {
    let (mat, planted_spectrum, region) = build(spec)?;
    let cert = certify(&mat, region, n_angles)?;
    confirm_class(spec, &cert)?;
    Ok(GeneratedOperator { spec: spec.clone(), mat, cert, planted_spectrum })
}

/// `count` complex Gaussian vectors of dimension `dim`, normalised to unit length.
pub fn random_unit_vectors(dim: usize, count: usize, seed: u64) -> Result<Vec<CVec>> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::input(format!("vector dimension {dim} outside 1..={MAX_DIM}")));
    }
    let mut rng = Draws::new(seed);
    (0..count)
        .map(|_| {
            let v: Vec<C64> = (0..dim).map(|_| rng.complex_normal()).collect();
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            CVec::new(v.into_iter().map(|z| z / norm).collect())
        })
        .collect()
}

/// Member `i` uses `specs[i % len]` with seed `spec.seed + i`.
pub fn corpus(specs: &[FamilySpec], count: usize) -> Result<Vec<GeneratedOperator>> {
    if specs.is_empty() || count == 0 {
        return Err(Error::input("corpus needs at least one spec and count ≥ 1"));
    }
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut s = specs[i % specs.len()].clone();
            s.seed = s.seed.wrapping_add(i as u64);
            make_operator(&s)
        })
        .collect()
}
