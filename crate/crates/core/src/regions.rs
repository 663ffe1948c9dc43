//! Geometry of the drop-shaped region `D_α`, the sector `S_α`, and sampled
//! numerical ranges.
//!
//! `D_α = {|z| ≤ sin α} ∪ {|arg(1−z)| ≤ α, |z−1| ≤ cos α}` is the convex hull
//! of the vertex `1` and the disc of radius `sin α`; `S_α = {|arg z| ≤ α}`.
//! Both are treated as closed sets. `arg` is the principal value with
//! `arg(0) = 0`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{herm_top_eigenpair, opnorm, Mat, C64};

/// Bisection resolution for [`min_semi_angle`], radians.
pub const SEMI_ANGLE_RESOLUTION: f64 = 1e-6;
/// Largest semi-angle tried before declaring a contraction not quasi-sectorial.
pub const SEMI_ANGLE_CAP: f64 = FRAC_PI_2 - 1e-6;
/// Membership tolerance for boundary samples in [`min_semi_angle`].
pub const SAMPLE_TOL: f64 = 1e-9;
/// Default number of sweep angles.
pub const DEFAULT_N_ANGLES: usize = 256;
/// Samples this close to the unit circle but away from the vertex `1` rule
/// out every `D_α` with `α < π/2`.
const UNIT_CIRCLE_TOL: f64 = 1e-9;
const VERTEX_SEPARATION: f64 = 1e-6;

/// Semi-angle `α ∈ [0, π/2)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SemiAngle(f64);

impl SemiAngle {
    pub fn new(alpha: f64) -> Result<Self> {
        if (0.0..FRAC_PI_2).contains(&alpha) {
            Ok(SemiAngle(alpha))
        } else {
            Err(Error::input(format!("semi-angle {alpha} outside [0, π/2)")))
        }
    }

    pub fn radians(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for SemiAngle {
    type Error = Error;
    fn try_from(a: f64) -> Result<Self> {
        SemiAngle::new(a)
    }
}

impl From<SemiAngle> for f64 {
    fn from(a: SemiAngle) -> f64 {
        a.0
    }
}

/// Default membership tolerance `1e-9·(1+|z|)`.
pub fn default_tol(z: C64) -> f64 {
    1e-9 * (1.0 + z.norm())
}

/// Principal argument with `arg(0) = 0`.
pub fn arg(z: C64) -> f64 {
    if z.re == 0.0 && z.im == 0.0 {
        0.0
    } else {
        z.im.atan2(z.re)
    }
}

fn dist_to_segment(p: C64, a: C64, b: C64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = (((p - a) * ab.conj()).re / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Distance from `w` to the circular sector `{r e^{iφ}: r ≤ radius, |φ| ≤ alpha}`.
fn dist_to_circular_sector(w: C64, alpha: f64, radius: f64) -> f64 {
    let phi = arg(w);
    if phi.abs() <= alpha {
        return (w.norm() - radius).max(0.0);
    }
    let origin = C64::new(0.0, 0.0);
    let upper = C64::from_polar(radius, alpha);
    let lower = C64::from_polar(radius, -alpha);
    dist_to_segment(w, origin, upper).min(dist_to_segment(w, origin, lower))
}

/// Euclidean distance from `z` to the closed region `D_α`.
pub fn dist_to_d_alpha(z: C64, alpha: SemiAngle) -> f64 {
    let a = alpha.0;
    let disc = (z.norm() - a.sin()).max(0.0);
    // Map the vertex to the origin: the drop's sector opens along +Re in w = 1 − z.
    let w = C64::new(1.0, 0.0) - z;
    disc.min(dist_to_circular_sector(w, a, a.cos()))
}

/// Distance from `z` to the closed sector `S_α`.
pub fn dist_to_sector(z: C64, alpha: SemiAngle) -> f64 {
    let excess = arg(z).abs() - alpha.0;
    if excess <= 0.0 {
        0.0
    } else if excess >= FRAC_PI_2 {
        z.norm()
    } else {
        z.norm() * excess.sin()
    }
}

/// True iff `z` lies within `tol` of `D_α`.
pub fn in_d_alpha(z: C64, alpha: SemiAngle, tol: f64) -> bool {
    dist_to_d_alpha(z, alpha) <= tol
}

/// True iff `z` lies within `tol` of `S_α`.
pub fn in_sector(z: C64, alpha: SemiAngle, tol: f64) -> bool {
    dist_to_sector(z, alpha) <= tol
}

/// Sampled boundary of the numerical range `W(M)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericalRangeBoundary {
    pub angles: Vec<f64>,
    pub points: Vec<C64>,
}

impl NumericalRangeBoundary {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// CSV with header `theta,re,im`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,re,im\n");
        for (t, z) in self.angles.iter().zip(&self.points) {
            let _ = writeln!(out, "{t},{},{}", z.re, z.im);
        }
        out
    }
}

/// Samples the boundary of `W(M)` on a uniform grid of `n_angles` directions.
///
/// For each `θ` the top eigenvector `v` of the Hermitian part of `e^{iθ}M`
/// is found and the Rayleigh quotient `v*Mv` recorded; it is the point of
/// `W(M)` extreme in direction `e^{-iθ}`.
pub fn numerical_range_boundary(m: &Mat, n_angles: usize) -> Result<NumericalRangeBoundary> {
    if n_angles < 64 {
        return Err(Error::input(format!("n_angles must be at least 64, got {n_angles}")));
    }
    let mut angles = Vec::with_capacity(n_angles);
    let mut points = Vec::with_capacity(n_angles);
    let adj = m.adjoint();
    for k in 0..n_angles {
        let theta = 2.0 * PI * k as f64 / n_angles as f64;
        let rot = C64::from_polar(1.0, theta);
        let h = (&m.scale(rot) + &adj.scale(rot.conj())).scale_real(0.5);
        let (_, v) = herm_top_eigenpair(&h)?;
        let mv = m.apply(&v)?;
        let z: C64 = v.as_dvector().iter().zip(mv.as_dvector().iter()).map(|(a, b)| a.conj() * b).sum();
        angles.push(theta);
        points.push(z);
    }
    Ok(NumericalRangeBoundary { angles, points })
}

/// Outcome of the quasi-sectoriality search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "class", content = "alpha")]
pub enum QuasiSectoriality {
    SemiAngle(SemiAngle),
    NotQuasiSectorial,
}

impl QuasiSectoriality {
    pub fn angle(self) -> Option<SemiAngle> {
        match self {
            QuasiSectoriality::SemiAngle(a) => Some(a),
            QuasiSectoriality::NotQuasiSectorial => None,
        }
    }
}

fn all_in_d_alpha(points: &[C64], alpha: f64) -> bool {
    let a = SemiAngle(alpha);
    points.iter().all(|&z| in_d_alpha(z, a, SAMPLE_TOL))
}

/// Least `α` (to 1e-6 rad) with every boundary sample inside `D_α`.
pub fn min_semi_angle_of_samples(points: &[C64]) -> QuasiSectoriality {
    // A point on the unit circle other than 1 is outside every D_α, α < π/2,
    // but sits within tolerance of the cap region; reject it explicitly.
    let touches_circle =
        points.iter().any(|&z| z.norm() >= 1.0 - UNIT_CIRCLE_TOL && (z - 1.0).norm() > VERTEX_SEPARATION);
    if touches_circle || !all_in_d_alpha(points, SEMI_ANGLE_CAP) {
        return QuasiSectoriality::NotQuasiSectorial;
    }
    if all_in_d_alpha(points, 0.0) {
        return QuasiSectoriality::SemiAngle(SemiAngle(0.0));
    }
    let (mut lo, mut hi) = (0.0, SEMI_ANGLE_CAP);
    while hi - lo > SEMI_ANGLE_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        if all_in_d_alpha(points, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    QuasiSectoriality::SemiAngle(SemiAngle(hi))
}

/// Least semi-angle of a contraction at the default sampling resolution.
pub fn min_semi_angle(m: &Mat) -> Result<QuasiSectoriality> {
    min_semi_angle_with(m, DEFAULT_N_ANGLES)
}

pub fn min_semi_angle_with(m: &Mat, n_angles: usize) -> Result<QuasiSectoriality> {
    let norm = opnorm(m)?;
    if norm > 1.0 + 1e-10 {
        return Err(Error::input(format!("not a contraction: ‖M‖ = {norm}")));
    }
    let b = numerical_range_boundary(m, n_angles)?;
    Ok(min_semi_angle_of_samples(&b.points))
}

/// Least sector angle `max |arg z|` over samples; `None` if it reaches π/2.
pub fn min_sector_angle_of_samples(points: &[C64]) -> Option<SemiAngle> {
    let worst = points.iter().filter(|z| z.norm() > SAMPLE_TOL).map(|&z| arg(z).abs()).fold(0.0, f64::max);
    SemiAngle::new(worst).ok()
}

/// Which region a certificate was checked against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    DAlpha,
    SAlpha,
}

/// Classification record attached to a generated operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorialCert {
    pub is_contraction: bool,
    /// `1 − ‖M‖`.
    pub contraction_slack: f64,
    pub semi_angle_min: Option<SemiAngle>,
    pub region_checked: RegionKind,
    pub n_angles: usize,
}

/// Classifies `m` as a contraction / quasi-sectorial contraction (`D_α`) or,
/// when `region` is `SAlpha`, by its least sector angle.
pub fn certify(m: &Mat, region: RegionKind, n_angles: usize) -> Result<SectorialCert> {
    let norm = opnorm(m)?;
    let is_contraction = norm <= 1.0 + 1e-10;
    let boundary = numerical_range_boundary(m, n_angles)?;
    let semi_angle_min = match region {
        RegionKind::DAlpha if is_contraction => min_semi_angle_of_samples(&boundary.points).angle(),
        RegionKind::DAlpha => None,
        RegionKind::SAlpha => min_sector_angle_of_samples(&boundary.points),
    };
    Ok(SectorialCert {
        is_contraction,
        contraction_slack: 1.0 - norm,
        semi_angle_min,
        region_checked: region,
        n_angles,
    })
}

/// Convex hull (counter-clockwise, no collinear points) by the monotone chain.
pub fn convex_hull(points: &[C64]) -> Vec<C64> {
    let mut pts: Vec<C64> = points.to_vec();
    pts.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let cross = |o: C64, a: C64, b: C64| (a - o).re * (b - o).im - (a - o).im * (b - o).re;
    let mut lower: Vec<C64> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<C64> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Distance from `z` to the convex hull of `points` (0 inside).
pub fn dist_to_hull(z: C64, points: &[C64]) -> f64 {
    let hull = convex_hull(points);
    match hull.len() {
        0 => f64::INFINITY,
        1 => (z - hull[0]).norm(),
        2 => dist_to_segment(z, hull[0], hull[1]),
        k => {
            let inside = (0..k).all(|i| {
                let a = hull[i];
                let b = hull[(i + 1) % k];
                (b - a).re * (z - a).im - (b - a).im * (z - a).re >= 0.0
            });
            if inside {
                0.0
            } else {
                (0..k).map(|i| dist_to_segment(z, hull[i], hull[(i + 1) % k])).fold(f64::INFINITY, f64::min)
            }
        }
    }
}
