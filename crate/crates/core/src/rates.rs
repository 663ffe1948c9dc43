//! `n`-sweeps of defects and least-squares power-law fits `value ≈ c·n^{−p}`.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::approximants::{iterate_defect, resolvent_defect, ChernoffFamily, EulerFamily, TrotterFamily, TrotterOrder};
use crate::defects::chernoff_defect_norm;
use crate::error::{Error, Result};
use crate::linalg::{Mat, C64};

/// Values at or below this are excluded from fits.
pub const LOG_FLOOR: f64 = 1e-14;

/// Dyadic grid `16, 32, …, 4096`.
pub fn default_grid() -> Vec<u64> {
    (4..=12).map(|k| 1u64 << k).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: u64,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    /// `p` in `c·n^{−p}`.
    pub exponent: f64,
    pub prefactor: f64,
    /// RMS residual in log space.
    pub residual: f64,
}

/// Least-squares fit of `ln value = ln c − p ln n` over points with `value > 1e-14`.
pub fn fit_power(points: &[(f64, f64)]) -> Result<PowerFit> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(n, v)| *n > 0.0 && *v > LOG_FLOOR && v.is_finite())
        .map(|&(n, v)| (n.ln(), v.ln()))
        .collect();
    if usable.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 points above {LOG_FLOOR:e}, got {}", usable.len())));
    }
    let k = usable.len() as f64;
    // Centre on the first point so constant data gives exact zeros.
    let (x0, y0) = usable[0];
    let mx = x0 + usable.iter().map(|(x, _)| x - x0).sum::<f64>() / k;
    let my = y0 + usable.iter().map(|(_, y)| y - y0).sum::<f64>() / k;
    let sxx: f64 = usable.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let sxy: f64 = usable.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all points share the same n".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (usable
        .iter()
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum::<f64>()
        / k)
        .sqrt();
    Ok(PowerFit { exponent: -slope, prefactor: intercept.exp(), residual })
}

/// Raw sweep points plus the fit over them.
#[derive(Clone, Debug, PartialEq)]
pub struct RateReport {
    pub points: Vec<RatePoint>,
    /// `None` when fewer than three points clear the log floor.
    pub fit: Option<PowerFit>,
    /// `(n_min, n_max)` of the points that entered the fit.
    pub window: Option<(u64, u64)>,
}

impl RateReport {
    pub fn from_points(mut points: Vec<RatePoint>) -> Result<Self> {
        points.sort_by_key(|p| p.n);
        if points.windows(2).any(|w| w[0].n == w[1].n) {
            return Err(Error::input("sweep grid has repeated n"));
        }
        let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.n as f64, p.value)).collect();
        let fit = fit_power(&pairs).ok();
        let used: Vec<u64> =
            points.iter().filter(|p| p.value > LOG_FLOOR && p.value.is_finite()).map(|p| p.n).collect();
        let window = match (fit, used.first(), used.last()) {
            (Some(_), Some(&a), Some(&b)) => Some((a, b)),
            _ => None,
        };
        Ok(RateReport { points, fit, window })
    }

    pub fn exponent(&self) -> Option<f64> {
        self.fit.map(|f| f.exponent)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let undefined = || json!("undefined");
        json!({
            "points": self.points,
            "fit_exponent": self.fit.map_or_else(undefined, |f| json!(f.exponent)),
            "fit_prefactor": self.fit.map_or_else(undefined, |f| json!(f.prefactor)),
            "fit_residual": self.fit.map_or_else(undefined, |f| json!(f.residual)),
            "window": self.window,
        })
    }

    /// `n,value,fingerprint,config_hash` rows and a `fit,p,c,residual` footer.
    pub fn to_csv(&self, fingerprint: &str, config_hash: &str) -> String {
        let mut out = String::from("n,value,fingerprint,config_hash\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{fingerprint},{config_hash}", p.n, p.value);
        }
        match self.fit {
            Some(f) => {
                let _ = writeln!(out, "fit,{},{},{}", f.exponent, f.prefactor, f.residual);
            }
            None => out.push_str("fit,undefined,undefined,undefined\n"),
        }
        out
    }
}

/// Reads `(n, value)` pairs from the first two columns of a CSV with a
/// header row; rows whose first field is `fit` are skipped.
pub fn read_points_csv(path: impl AsRef<Path>) -> Result<Vec<RatePoint>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path.as_ref())
        .map_err(|e| Error::input(format!("cannot read CSV: {e}")))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::input(format!("bad CSV row: {e}")))?;
        let first = rec.get(0).unwrap_or("").trim();
        if first == "fit" || first.is_empty() {
            continue;
        }
        let n: u64 = first.parse().map_err(|_| Error::input(format!("n must be a positive integer, got '{first}'")))?;
        let v: f64 = rec
            .get(1)
            .ok_or_else(|| Error::input("CSV row lacks a value column"))?
            .trim()
            .parse()
            .map_err(|_| Error::input("value column must be numeric"))?;
        if n == 0 || v.is_nan() || v < 0.0 {
            return Err(Error::input("n must be ≥ 1 and values non-negative"));
        }
        out.push(RatePoint { n, value: v });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectKind {
    /// `max_C ‖Cⁿ − e^{n(C−𝟙)}‖`
    Chernoff,
    /// `‖(e^{−tA/n}e^{−tB/n})ⁿ − e^{−t(A+B)}‖`
    Trotter,
    /// `max_A ‖(𝟙+tA/n)⁻ⁿ − e^{−tA}‖`
    Euler,
    /// Resolvent defect at `s = 1/n`.
    ResolventS,
}

#[derive(Clone)]
pub enum SweepSubject {
    /// Chernoff or Euler sweeps; the reported value is the maximum over operators.
    Operators(Vec<Mat>),
    Pair {
        a: Mat,
        b: Mat,
        order: TrotterOrder,
    },
    Resolvent {
        a: Mat,
        zeta: C64,
    },
    /// Arbitrary Chernoff families with the generators they approximate, for
    /// `trotter` or `euler` sweeps; the reported value is the maximum over members.
    Families(Vec<(Arc<dyn ChernoffFamily>, Mat)>),
}

impl fmt::Debug for SweepSubject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepSubject::Operators(ops) => f.debug_tuple("Operators").field(&ops.len()).finish(),
            SweepSubject::Pair { order, .. } => f.debug_struct("Pair").field("order", order).finish(),
            SweepSubject::Resolvent { zeta, .. } => f.debug_struct("Resolvent").field("zeta", zeta).finish(),
            SweepSubject::Families(fams) => {
                let labels: Vec<String> = fams.iter().map(|(fam, _)| fam.label()).collect();
                f.debug_tuple("Families").field(&labels).finish()
            }
        }
    }
}

/// Evaluates the defect at every grid point and fits the result.
pub fn sweep(kind: DefectKind, subject: &SweepSubject, t: f64, n_grid: &[u64]) -> Result<RateReport> {
    if n_grid.is_empty() {
        return Err(Error::input("n_grid must be non-empty"));
    }
    if n_grid.windows(2).any(|w| w[1] <= w[0]) || n_grid[0] == 0 {
        return Err(Error::input("n_grid must be positive and strictly increasing"));
    }
    let max_over = |ops: &[Mat], f: &dyn Fn(&Mat) -> Result<f64>| -> Result<f64> {
        if ops.is_empty() {
            return Err(Error::input("sweep needs at least one operator"));
        }
        ops.iter().map(f).try_fold(0.0f64, |m, v| v.map(|v| m.max(v)))
    };
    let eval = |n: u64| -> Result<RatePoint> {
        let value = match (kind, subject) {
            (DefectKind::Chernoff, SweepSubject::Operators(ops)) => max_over(ops, &|c| chernoff_defect_norm(c, n))?,
            (DefectKind::Euler, SweepSubject::Operators(ops)) => {
                max_over(ops, &|a| iterate_defect(&EulerFamily { a: a.clone() }, a, t, n))?
            }
            (DefectKind::Trotter, SweepSubject::Pair { a, b, order }) => {
                let fam = TrotterFamily::new(a.clone(), b.clone())?.with_order(*order);
                iterate_defect(&fam, &(a + b), t, n)?
            }
            (DefectKind::Trotter | DefectKind::Euler, SweepSubject::Families(fams)) => {
                if fams.is_empty() {
                    return Err(Error::input("sweep needs at least one family"));
                }
                fams.iter()
                    .map(|(fam, generator)| iterate_defect(fam.as_ref(), generator, t, n))
                    .try_fold(0.0f64, |m, v| v.map(|v| m.max(v)))?
            }
            (DefectKind::ResolventS, SweepSubject::Resolvent { a, zeta }) => {
                resolvent_defect(a, 1.0 / n as f64, *zeta)?.defect
            }
            _ => return Err(Error::input(format!("defect kind {kind:?} is incompatible with the given subject"))),
        };
        Ok(RatePoint { n, value })
    };
    let points = n_grid.par_iter().map(|&n| eval(n)).collect::<Result<Vec<_>>>()?;
    RateReport::from_points(points)
}
