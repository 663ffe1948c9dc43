//! The `sgbench` command runner.
//!
//! Every command reads a JSON config (unknown keys rejected), computes in
//! memory, and then writes `<command>.csv`, `<command>.json` and, with
//! `--svg`, `<command>.svg` atomically into the output directory. Each CSV
//! row carries the operator fingerprint and a hash of the effective config.
//!
//! Exit status: 0 on success, 1 when `--strict` is set and an asserted bound
//! (`sqrt_n`, `thm22`, in-regime `quasi_sectorial`) is violated, 2 on any
//! error, with a JSON error object on stderr.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, ValueEnum};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::approximants::{
    family_by_name, family_from_file, resolvent_defect, ChernoffFamily, FamilyFile, TrotterOrder,
};
use crate::defects::{audit_bound, ritt_constant, AuditSweep, BoundAudit, BoundId, Probe, Verdict, AUDIT_CSV_HEADER};
use crate::error::{Error, Result};
use crate::families::{corpus, make_operator, random_unit_vectors, FamilyKind, FamilyParams, FamilySpec};
use crate::linalg::{opnorm, CVec, Mat, MatJson, C64};
use crate::poisson::{tail_claim_audit, TailClaimAudit, CSV_HEADER as POISSON_CSV_HEADER};
use crate::rates::{default_grid, fit_power, read_points_csv, sweep, DefectKind, RateReport, SweepSubject};
use crate::regions::{
    certify, convex_hull, min_sector_angle_of_samples, numerical_range_boundary, RegionKind, DEFAULT_N_ANGLES,
};
use crate::svg::{plot, Axes, Series};

/// Defect curve of the first operator plus its bound overlays.
type PlotData = (Vec<(f64, f64)>, Vec<Series>);

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Poisson identities and tail-claim audits over n and δ grids.
    Poisson,
    /// Chernoff defects audited against the bound formulas.
    Defect,
    /// Lie-Trotter defect sweep and rate fit.
    Trotter,
    /// Euler (implicit) defect sweep and rate fit.
    Euler,
    /// Resolvent defect sweep at s = 1/n and rate fit.
    Resolvent,
    /// Numerical-range boundary export and classification.
    Numrange,
    /// Power-law fit of an external (n, value) CSV.
    Fit,
    /// Scalar unitary probe audits.
    Probe,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Poisson => "poisson",
            Command::Defect => "defect",
            Command::Trotter => "trotter",
            Command::Euler => "euler",
            Command::Resolvent => "resolvent",
            Command::Numrange => "numrange",
            Command::Fit => "fit",
            Command::Probe => "probe",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sgbench", version, about = "Semigroup product-formula defects, bound audits and rate fits")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON config for the command.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Also write a standalone SVG plot.
    #[arg(long)]
    pub svg: bool,
    /// Exit with status 1 when an asserted bound is violated.
    #[arg(long)]
    pub strict: bool,
    /// Overrides the seed of every generated operator in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub svg: bool,
    pub seed: Option<u64>,
}

/// One output file, held in memory until written.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub file_name: String,
    pub contents: String,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub command: Command,
    pub config_hash: String,
    pub artifacts: Vec<Artifact>,
    /// Violations of bounds with a complete proof.
    pub asserted_violations: usize,
}

/// Where an operator comes from: a generated family member, a seeded corpus,
/// an inline matrix literal, or a path to a matrix JSON file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OperatorSource {
    Corpus(CorpusSource),
    Spec(FamilySpec),
    Inline(MatJson),
    Path(PathBuf),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSource {
    pub corpus: FamilySpec,
    pub count: usize,
}

fn scalar_one() -> OperatorSource {
    OperatorSource::Inline(MatJson { dim: 1, re: vec![vec![1.0]], im: vec![vec![0.0]] })
}

fn default_t() -> f64 {
    1.0
}

fn default_poisson_grid() -> Vec<u64> {
    vec![1, 10, 100, 1000, 10000]
}

fn default_tail_deltas() -> Vec<f64> {
    vec![1.0 / 6.0]
}

fn default_defect_grid() -> Vec<u64> {
    (0..=10).map(|k| 1u64 << k).collect()
}

fn default_defect_deltas() -> Vec<f64> {
    vec![-1.0 / 6.0, 0.0, 1.0 / 6.0]
}

fn default_defect_bounds() -> Vec<BoundId> {
    vec![BoundId::SqrtN, BoundId::Lemma2, BoundId::Thm22, BoundId::QuasiSectorial]
}

fn default_ritt_n_max() -> u64 {
    512
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonConfig {
    #[serde(default = "default_poisson_grid")]
    pub n_grid: Vec<u64>,
    #[serde(default = "default_tail_deltas")]
    pub delta: Vec<f64>,
}

/// How defects are measured: operator norm, given vector, or seeded random unit vectors.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProbeSpec {
    #[default]
    Norm,
    RandomVectors {
        count: usize,
        #[serde(default)]
        seed: u64,
    },
    Vector {
        re: Vec<f64>,
        #[serde(default)]
        im: Option<Vec<f64>>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefectConfig {
    pub operators: Vec<OperatorSource>,
    #[serde(default)]
    pub probe: ProbeSpec,
    #[serde(default = "default_defect_grid")]
    pub n_grid: Vec<u64>,
    #[serde(default = "default_defect_deltas")]
    pub delta: Vec<f64>,
    #[serde(default = "default_defect_bounds")]
    pub bounds: Vec<BoundId>,
    #[serde(default = "default_ritt_n_max")]
    pub ritt_n_max: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrotterConfig {
    #[serde(default)]
    pub a: Option<OperatorSource>,
    #[serde(default)]
    pub b: Option<OperatorSource>,
    /// `"trotter"` (default), `"euler"`, `"exact"` or `"file:<path>"`.
    #[serde(default)]
    pub family: Option<String>,
    #[serde(default)]
    pub order: TrotterOrder,
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(default = "default_grid")]
    pub n_grid: Vec<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EulerConfig {
    #[serde(default = "default_euler_operators")]
    pub operators: Vec<OperatorSource>,
    /// `"euler"` (default), `"exact"` or `"file:<path>"`.
    #[serde(default)]
    pub family: Option<String>,
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(default = "default_grid")]
    pub n_grid: Vec<u64>,
}

fn default_euler_operators() -> Vec<OperatorSource> {
    vec![scalar_one()]
}

fn default_zeta() -> [f64; 2] {
    [1.0, 0.0]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolventConfig {
    #[serde(default = "scalar_one")]
    pub operator: OperatorSource,
    /// `[re, im]`.
    #[serde(default = "default_zeta")]
    pub zeta: [f64; 2],
    #[serde(default = "default_grid")]
    pub n_grid: Vec<u64>,
}

fn default_n_angles() -> usize {
    DEFAULT_N_ANGLES
}

fn default_region() -> RegionKind {
    RegionKind::DAlpha
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumrangeConfig {
    pub operator: OperatorSource,
    #[serde(default = "default_n_angles")]
    pub n_angles: usize,
    #[serde(default = "default_region")]
    pub region: RegionKind,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// CSV whose first two columns are `n` and `value`, with a header row.
    pub input: PathBuf,
}

fn default_theta() -> f64 {
    1e-3
}

fn default_probe_grid() -> Vec<u64> {
    vec![1_000_000]
}

fn default_probe_delta() -> f64 {
    -1.0 / 6.0
}

fn default_probe_bounds() -> Vec<BoundId> {
    vec![BoundId::SqrtN, BoundId::Lemma2, BoundId::Thm22]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_probe_grid")]
    pub n_grid: Vec<u64>,
    #[serde(default = "default_probe_delta")]
    pub delta: f64,
    #[serde(default = "default_probe_bounds")]
    pub bounds: Vec<BoundId>,
}

/// Parses `args` (program name first), runs, writes outputs and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            report_error("usage", &e.to_string());
            return 2;
        }
    };
    let opts = RunOptions { svg: cli.svg, seed: cli.seed };
    let result = run(cli.command, &cli.config, &opts).and_then(|out| {
        let paths = write_artifacts(&cli.out, &out.artifacts)?;
        Ok((out, paths))
    });
    match result {
        Ok((out, paths)) => {
            let summary = json!({
                "command": out.command,
                "config_hash": out.config_hash,
                "outputs": paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
                "asserted_violations": out.asserted_violations,
            });
            println!("{summary}");
            exit_status(cli.strict, out.asserted_violations)
        }
        Err(e) => {
            report_error(e.kind(), &e.to_string());
            2
        }
    }
}

/// 1 when `strict` and an asserted bound was violated, else 0.
pub fn exit_status(strict: bool, asserted_violations: usize) -> i32 {
    i32::from(strict && asserted_violations > 0)
}

fn report_error(kind: &str, message: &str) {
    let body = json!({ "error": { "kind": kind, "message": message.trim_end() } });
    let _ = writeln!(std::io::stderr(), "{body}");
}

/// Writes each artifact through a temporary file in `dir` and renames it into place.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let target = dir.join(&a.file_name);
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(a.contents.as_bytes())?;
        tmp.as_file().sync_all()?;
        tmp.persist(&target).map_err(|e| Error::Io(e.error))?;
        paths.push(target);
    }
    Ok(paths)
}

/// Loads the config at `config_path` and runs `command` in memory.
pub fn run(command: Command, config_path: &Path, opts: &RunOptions) -> Result<RunOutput> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| Error::input(format!("cannot read config {}: {e}", config_path.display())))?;
    let base = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    run_str(command, &text, &base, opts)
}

/// Runs `command` on config text; relative paths inside resolve against `base`.
pub fn run_str(command: Command, config: &str, base: &Path, opts: &RunOptions) -> Result<RunOutput> {
    let ctx = Ctx { base: base.to_path_buf(), opts: opts.clone() };
    match command {
        Command::Poisson => cmd_poisson(&ctx, parse_config(config)?),
        Command::Defect => {
            let mut c: DefectConfig = parse_config(config)?;
            c.operators.iter_mut().for_each(|o| ctx.apply_seed(o));
            cmd_defect(&ctx, c)
        }
        Command::Trotter => {
            let mut c: TrotterConfig = parse_config(config)?;
            c.a.iter_mut().chain(c.b.iter_mut()).for_each(|o| ctx.apply_seed(o));
            cmd_trotter(&ctx, c)
        }
        Command::Euler => {
            let mut c: EulerConfig = parse_config(config)?;
            c.operators.iter_mut().for_each(|o| ctx.apply_seed(o));
            cmd_euler(&ctx, c)
        }
        Command::Resolvent => {
            let mut c: ResolventConfig = parse_config(config)?;
            ctx.apply_seed(&mut c.operator);
            cmd_resolvent(&ctx, c)
        }
        Command::Numrange => {
            let mut c: NumrangeConfig = parse_config(config)?;
            ctx.apply_seed(&mut c.operator);
            cmd_numrange(&ctx, c)
        }
        Command::Fit => cmd_fit(&ctx, parse_config(config)?),
        Command::Probe => cmd_probe(&ctx, parse_config(config)?),
    }
}

fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::input(format!("invalid config: {e}")))
}

/// First 16 hex digits of SHA-256 over the command name and the effective config.
fn config_hash<T: Serialize>(command: Command, config: &T) -> String {
    let canonical = serde_json::to_string(config).expect("configs serialize");
    let digest = Sha256::new()
        .chain_update(command.name().as_bytes())
        .chain_update(b"\n")
        .chain_update(canonical.as_bytes())
        .finalize();
    digest.iter().take(8).fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Single fingerprint for a set of operators.
fn combined_fingerprint(fps: &[String]) -> String {
    match fps {
        [one] => one.clone(),
        _ => {
            let digest = Sha256::digest(fps.join(",").as_bytes());
            let hex = digest.iter().take(8).fold(String::new(), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            });
            format!("set{}-{hex}", fps.len())
        }
    }
}

fn check_grid(n_grid: &[u64]) -> Result<()> {
    if n_grid.is_empty() || n_grid[0] == 0 || n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::input("n_grid must be non-empty, positive and strictly increasing"));
    }
    Ok(())
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::input("t must be positive and finite"));
    }
    Ok(())
}

struct Ctx {
    base: PathBuf,
    opts: RunOptions,
}

impl Ctx {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn apply_seed(&self, src: &mut OperatorSource) {
        if let Some(seed) = self.opts.seed {
            match src {
                OperatorSource::Corpus(c) => c.corpus.seed = seed,
                OperatorSource::Spec(s) => s.seed = seed,
                OperatorSource::Inline(_) | OperatorSource::Path(_) => {}
            }
        }
    }

    fn resolve_spec(&self, spec: &FamilySpec) -> FamilySpec {
        let mut s = spec.clone();
        if let Some(p) = &s.params.path {
            s.params.path = Some(self.resolve(p));
        }
        s
    }

    fn operators(&self, src: &OperatorSource) -> Result<Vec<Mat>> {
        match src {
            OperatorSource::Corpus(c) => {
                Ok(corpus(&[self.resolve_spec(&c.corpus)], c.count)?.into_iter().map(|g| g.mat).collect())
            }
            OperatorSource::Spec(s) => Ok(vec![make_operator(&self.resolve_spec(s))?.mat]),
            OperatorSource::Inline(m) => Ok(vec![m.to_mat()?]),
            OperatorSource::Path(p) => Ok(vec![Mat::read_json(self.resolve(p))
                .map_err(|e| Error::input(format!("cannot load matrix {}: {e}", p.display())))?]),
        }
    }

    fn all_operators(&self, srcs: &[OperatorSource]) -> Result<Vec<Mat>> {
        let mut out = Vec::new();
        for s in srcs {
            out.extend(self.operators(s)?);
        }
        if out.is_empty() {
            return Err(Error::input("no operators given"));
        }
        Ok(out)
    }

    fn single_operator(&self, src: &OperatorSource, what: &str) -> Result<Mat> {
        let mut ops = self.operators(src)?;
        if ops.len() != 1 {
            return Err(Error::input(format!("{what} must be a single operator")));
        }
        Ok(ops.remove(0))
    }

    fn family_file(&self, name: &str) -> Option<PathBuf> {
        name.strip_prefix("file:").map(|p| self.resolve(Path::new(p)))
    }
}

fn json_artifact(name: &str, v: &Value) -> Artifact {
    let mut contents = serde_json::to_string_pretty(v).expect("report JSON serializes");
    contents.push('\n');
    Artifact { file_name: format!("{name}.json"), contents }
}

fn csv_artifact(name: &str, contents: String) -> Artifact {
    Artifact { file_name: format!("{name}.csv"), contents }
}

fn svg_artifact(name: &str, contents: String) -> Artifact {
    Artifact { file_name: format!("{name}.svg"), contents }
}

fn cmd_poisson(ctx: &Ctx, cfg: PoissonConfig) -> Result<RunOutput> {
    check_grid(&cfg.n_grid)?;
    if cfg.delta.is_empty() {
        return Err(Error::input("delta list must be non-empty"));
    }
    let hash = config_hash(Command::Poisson, &cfg);
    let mut rows: Vec<TailClaimAudit> = Vec::new();
    for &delta in &cfg.delta {
        for &n in &cfg.n_grid {
            rows.push(tail_claim_audit(n, delta)?);
        }
    }
    let mut csv = format!("{POISSON_CSV_HEADER},fingerprint,config_hash\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{hash}", r.csv_row(), r.claim.context.fingerprint);
    }
    let json_rows: Vec<Value> = rows
        .iter()
        .map(|r| {
            json!({
                "n": r.split.n,
                "delta": r.split.delta,
                "var_sum": r.split.var_sum,
                "abs_moment": r.split.abs_moment(),
                "split": r.split,
                "tail_claim": r.claim,
                "tail_tchebychev": r.tchebychev,
            })
        })
        .collect();
    let mut artifacts = vec![
        csv_artifact("poisson", csv),
        json_artifact("poisson", &json!({ "command": "poisson", "config_hash": hash, "rows": json_rows })),
    ];
    if ctx.opts.svg {
        let mut series = Vec::new();
        for &delta in &cfg.delta {
            let sel: Vec<&TailClaimAudit> = rows.iter().filter(|r| r.split.delta == delta).collect();
            series.push(Series::solid(
                format!("tail_abs δ={delta:.4}"),
                sel.iter().map(|r| (r.split.n as f64, r.split.tail_abs)).collect(),
            ));
            series.push(Series::dashed(
                format!("n^(-2δ) δ={delta:.4}"),
                sel.iter().map(|r| (r.split.n as f64, r.claim.rhs)).collect(),
            ));
        }
        artifacts.push(svg_artifact("poisson", plot("Poisson tail sums", "n", "value", Axes::LogLog, &series)));
    }
    Ok(RunOutput { command: Command::Poisson, config_hash: hash, artifacts, asserted_violations: 0 })
}

fn probe_vectors(probe: &ProbeSpec, dim: usize, op_index: usize) -> Result<Vec<(String, Probe)>> {
    match probe {
        ProbeSpec::Norm => Ok(vec![("norm".into(), Probe::Norm)]),
        ProbeSpec::RandomVectors { count, seed } => {
            if *count == 0 {
                return Err(Error::input("random_vectors.count must be at least 1"));
            }
            let seed = seed.wrapping_add((op_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            Ok(random_unit_vectors(dim, *count, seed)?
                .into_iter()
                .enumerate()
                .map(|(k, v)| (format!("v{k}"), Probe::Vector(v)))
                .collect())
        }
        ProbeSpec::Vector { re, im } => {
            let im = im.clone().unwrap_or_else(|| vec![0.0; re.len()]);
            if im.len() != re.len() {
                return Err(Error::input("vector.re and vector.im differ in length"));
            }
            if re.len() != dim {
                return Err(Error::input(format!(
                    "vector has length {} but the operator has dimension {dim}",
                    re.len()
                )));
            }
            let v = CVec::new(re.iter().zip(&im).map(|(&a, &b)| C64::new(a, b)).collect())?;
            Ok(vec![("v0".into(), Probe::Vector(v))])
        }
    }
}

fn asserted_violations(audits: &[BoundAudit]) -> usize {
    audits.iter().filter(|a| a.verdict == Verdict::Violated && a.context.bound_id.is_asserted()).count()
}

fn cmd_defect(ctx: &Ctx, cfg: DefectConfig) -> Result<RunOutput> {
    check_grid(&cfg.n_grid)?;
    if cfg.bounds.is_empty() {
        return Err(Error::input("bounds must be non-empty"));
    }
    if cfg.bounds.iter().any(|b| matches!(b, BoundId::TailClaim | BoundId::TailTchebychev)) {
        return Err(Error::input("tail bounds belong to the poisson command"));
    }
    if cfg.delta.is_empty() && cfg.bounds.iter().any(|b| *b != BoundId::SqrtN) {
        return Err(Error::input("delta list must be non-empty"));
    }
    if cfg.ritt_n_max < 16 {
        return Err(Error::input("ritt_n_max must be at least 16"));
    }
    let hash = config_hash(Command::Defect, &cfg);
    let ops = ctx.all_operators(&cfg.operators)?;

    let mut csv = format!("{AUDIT_CSV_HEADER},probe,config_hash\n");
    let mut op_reports = Vec::new();
    let mut sweep_reports = Vec::new();
    let mut all_audits: Vec<BoundAudit> = Vec::new();
    let mut plot_data: Option<PlotData> = None;

    for (i, c) in ops.iter().enumerate() {
        let ritt =
            if cfg.bounds.contains(&BoundId::QuasiSectorial) { Some(ritt_constant(c, cfg.ritt_n_max)?) } else { None };
        op_reports.push(json!({
            "index": i,
            "fingerprint": c.fingerprint(),
            "dim": c.dim(),
            "opnorm": opnorm(c)?,
            "ritt": ritt,
        }));
        let probes = probe_vectors(&cfg.probe, c.dim(), i)?;
        for &bound in &cfg.bounds {
            // sqrt_n does not depend on δ; it is evaluated once and recorded with δ = 0.
            let deltas: Vec<f64> = if bound == BoundId::SqrtN { vec![0.0] } else { cfg.delta.clone() };
            let bound_probes: Vec<(String, Probe)> =
                if bound == BoundId::QuasiSectorial { vec![("norm".into(), Probe::Norm)] } else { probes.clone() };
            for &delta in &deltas {
                for (label, probe) in &bound_probes {
                    let sw = audit_bound(c, probe, &cfg.n_grid, delta, bound, ritt.as_ref())?;
                    for a in &sw.audits {
                        let _ = writeln!(csv, "{},{label},{hash}", a.csv_row());
                    }
                    sweep_reports.push(sweep_summary(i, label, bound, delta, &sw));
                    if i == 0 && (label == "norm" || label == "v0") {
                        let (defect, series) = plot_data.get_or_insert_with(|| {
                            (sw.audits.iter().map(|a| (a.context.n as f64, a.lhs)).collect(), Vec::new())
                        });
                        let _ = defect;
                        if delta == deltas[0] || bound == BoundId::SqrtN {
                            series.push(Series::dashed(
                                format!("{bound} δ={delta:.4} ({label})"),
                                sw.audits.iter().map(|a| (a.context.n as f64, a.rhs)).collect(),
                            ));
                        }
                    }
                    all_audits.extend(sw.audits);
                }
            }
        }
    }
    let asserted = asserted_violations(&all_audits);
    let other =
        all_audits.iter().filter(|a| a.verdict == Verdict::Violated && !a.context.bound_id.is_asserted()).count();
    let out_of_regime = all_audits.iter().filter(|a| a.verdict == Verdict::OutOfRegime).count();
    let report = json!({
        "command": "defect",
        "config_hash": hash,
        "operators": op_reports,
        "sweeps": sweep_reports,
        "summary": {
            "audits": all_audits.len(),
            "asserted_violations": asserted,
            "audited_violations": other,
            "out_of_regime": out_of_regime,
        },
    });
    let mut artifacts = vec![csv_artifact("defect", csv), json_artifact("defect", &report)];
    if ctx.opts.svg {
        if let Some((defect, mut bounds)) = plot_data {
            let mut series = vec![Series::solid("defect (operator 0)", defect)];
            series.append(&mut bounds);
            artifacts
                .push(svg_artifact("defect", plot("Chernoff defect and bounds", "n", "value", Axes::LogLog, &series)));
        }
    }
    Ok(RunOutput { command: Command::Defect, config_hash: hash, artifacts, asserted_violations: asserted })
}

fn sweep_summary(index: usize, probe: &str, bound: BoundId, delta: f64, sw: &AuditSweep) -> Value {
    json!({
        "operator": index,
        "probe": probe,
        "bound_id": bound,
        "delta": delta,
        "min_margin": sw.min_margin,
        "violations": sw.violations,
        "out_of_regime": sw.out_of_regime,
    })
}

fn rate_outputs(
    ctx: &Ctx,
    command: Command,
    hash: String,
    fingerprint: &str,
    extra: Value,
    report: &RateReport,
) -> RunOutput {
    let name = command.name();
    let mut doc = json!({
        "command": name,
        "config_hash": hash,
        "fingerprint": fingerprint,
        "report": report.to_json_value(),
    });
    if let (Value::Object(d), Value::Object(e)) = (&mut doc, extra) {
        d.extend(e);
    }
    let mut artifacts = vec![csv_artifact(name, report.to_csv(fingerprint, &hash)), json_artifact(name, &doc)];
    if ctx.opts.svg {
        artifacts.push(svg_artifact(name, rate_plot(name, report)));
    }
    RunOutput { command, config_hash: hash, artifacts, asserted_violations: 0 }
}

fn rate_plot(name: &str, report: &RateReport) -> String {
    let mut series =
        vec![Series::solid(format!("{name} defect"), report.points.iter().map(|p| (p.n as f64, p.value)).collect())];
    if let Some(f) = report.fit {
        series.push(Series::dashed(
            format!("fit c·n^-p, p={:.3}", f.exponent),
            report.points.iter().map(|p| (p.n as f64, f.prefactor * (p.n as f64).powf(-f.exponent))).collect(),
        ));
    }
    plot(&format!("{name} sweep"), "n", "defect", Axes::LogLog, &series)
}

/// A named family together with the generator it approximates.
fn named_family(ctx: &Ctx, name: &str, a: Option<&Mat>, b: Option<&Mat>) -> Result<(Arc<dyn ChernoffFamily>, Mat)> {
    if let Some(path) = ctx.family_file(name) {
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::input(format!("cannot read family file {}: {e}", path.display())))?;
        let file: FamilyFile = serde_json::from_str(&text)
            .map_err(|e| Error::input(format!("invalid family file {}: {e}", path.display())))?;
        let fam: Arc<dyn ChernoffFamily> = family_from_file(&path)?.into();
        return Ok((fam, file.generator()?));
    }
    let fam: Arc<dyn ChernoffFamily> = family_by_name(name, a, b)?.into();
    let generator = match (a, b) {
        (Some(a), Some(b)) if name == "trotter" => a + b,
        (Some(a), _) => a.clone(),
        (None, _) => return Err(Error::input(format!("family '{name}' needs an operator"))),
    };
    Ok((fam, generator))
}

fn cmd_trotter(ctx: &Ctx, cfg: TrotterConfig) -> Result<RunOutput> {
    check_grid(&cfg.n_grid)?;
    check_t(cfg.t)?;
    let hash = config_hash(Command::Trotter, &cfg);
    let a = cfg.a.as_ref().map(|s| ctx.single_operator(s, "a")).transpose()?;
    let b = cfg.b.as_ref().map(|s| ctx.single_operator(s, "b")).transpose()?;
    let name = cfg.family.clone().unwrap_or_else(|| "trotter".into());
    let (subject, fingerprint, label) = if name == "trotter" {
        let (a, b) = match (a, b) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::input("trotter needs operators a and b")),
        };
        let fp = format!("{}+{}", a.fingerprint(), b.fingerprint());
        let label = match cfg.order {
            TrotterOrder::AFirst => "trotter",
            TrotterOrder::BFirst => "trotter_reversed",
        };
        (SweepSubject::Pair { a, b, order: cfg.order }, fp, label.to_string())
    } else {
        let (fam, generator) = named_family(ctx, &name, a.as_ref(), b.as_ref())?;
        let label = fam.label();
        (SweepSubject::Families(vec![(fam, generator.clone())]), generator.fingerprint(), label)
    };
    let report = sweep(DefectKind::Trotter, &subject, cfg.t, &cfg.n_grid)?;
    let extra = json!({ "family": label, "t": cfg.t });
    Ok(rate_outputs(ctx, Command::Trotter, hash, &fingerprint, extra, &report))
}

fn cmd_euler(ctx: &Ctx, cfg: EulerConfig) -> Result<RunOutput> {
    check_grid(&cfg.n_grid)?;
    check_t(cfg.t)?;
    let hash = config_hash(Command::Euler, &cfg);
    let name = cfg.family.clone().unwrap_or_else(|| "euler".into());
    let (subject, fingerprint, label) = if name == "euler" {
        let ops = ctx.all_operators(&cfg.operators)?;
        let fps: Vec<String> = ops.iter().map(Mat::fingerprint).collect();
        (SweepSubject::Operators(ops), combined_fingerprint(&fps), "euler".to_string())
    } else if ctx.family_file(&name).is_some() {
        let (fam, generator) = named_family(ctx, &name, None, None)?;
        let label = fam.label();
        (SweepSubject::Families(vec![(fam, generator.clone())]), generator.fingerprint(), label)
    } else {
        let ops = ctx.all_operators(&cfg.operators)?;
        let fps: Vec<String> = ops.iter().map(Mat::fingerprint).collect();
        let fams = ops.iter().map(|a| named_family(ctx, &name, Some(a), None)).collect::<Result<Vec<_>>>()?;
        let label = fams[0].0.label();
        (SweepSubject::Families(fams), combined_fingerprint(&fps), label)
    };
    let report = sweep(DefectKind::Euler, &subject, cfg.t, &cfg.n_grid)?;
    let extra = json!({ "family": label, "t": cfg.t });
    Ok(rate_outputs(ctx, Command::Euler, hash, &fingerprint, extra, &report))
}

fn cmd_resolvent(ctx: &Ctx, cfg: ResolventConfig) -> Result<RunOutput> {
    check_grid(&cfg.n_grid)?;
    let hash = config_hash(Command::Resolvent, &cfg);
    let a = ctx.single_operator(&cfg.operator, "operator")?;
    let zeta = C64::new(cfg.zeta[0], cfg.zeta[1]);
    let report = sweep(DefectKind::ResolventS, &SweepSubject::Resolvent { a: a.clone(), zeta }, 0.0, &cfg.n_grid)?;
    let mut routes = Vec::with_capacity(cfg.n_grid.len());
    for &n in &cfg.n_grid {
        let s = 1.0 / n as f64;
        let r = resolvent_defect(&a, s, zeta)?;
        let gap = (r.defect - r.product_form).abs() / r.defect.abs().max(r.product_form.abs()).max(f64::MIN_POSITIVE);
        routes.push(json!({
            "n": n,
            "s": s,
            "defect": r.defect,
            "product_form": r.product_form,
            "defect_over_s": r.defect / s,
            "route_rel_gap": gap,
        }));
    }
    let extra = json!({ "zeta": cfg.zeta, "routes": routes });
    Ok(rate_outputs(ctx, Command::Resolvent, hash, &a.fingerprint(), extra, &report))
}

fn cmd_numrange(ctx: &Ctx, cfg: NumrangeConfig) -> Result<RunOutput> {
    if cfg.n_angles < 64 {
        return Err(Error::input("n_angles must be at least 64"));
    }
    let hash = config_hash(Command::Numrange, &cfg);
    let m = ctx.single_operator(&cfg.operator, "operator")?;
    let fp = m.fingerprint();
    let boundary = numerical_range_boundary(&m, cfg.n_angles)?;
    let cert = certify(&m, cfg.region, cfg.n_angles)?;
    let class = match (cfg.region, cert.is_contraction, cert.semi_angle_min) {
        (RegionKind::DAlpha, false, _) => "not_contraction",
        (RegionKind::DAlpha, true, Some(_)) => "quasi_sectorial",
        (RegionKind::DAlpha, true, None) => "not_quasi_sectorial",
        (RegionKind::SAlpha, _, Some(_)) => "sectorial",
        (RegionKind::SAlpha, _, None) => "not_sectorial",
    };
    let mut csv = String::from("theta,re,im,fingerprint,config_hash\n");
    for (th, z) in boundary.angles.iter().zip(&boundary.points) {
        let _ = writeln!(csv, "{th},{},{},{fp},{hash}", z.re, z.im);
    }
    let hull: Vec<[f64; 2]> = convex_hull(&boundary.points).iter().map(|z| [z.re, z.im]).collect();
    let report = json!({
        "command": "numrange",
        "config_hash": hash,
        "fingerprint": fp,
        "opnorm": opnorm(&m)?,
        "classification": class,
        "certificate": cert,
        "sector_angle": min_sector_angle_of_samples(&boundary.points),
        "hull": hull,
    });
    let mut artifacts = vec![csv_artifact("numrange", csv), json_artifact("numrange", &report)];
    if ctx.opts.svg {
        let mut pts: Vec<(f64, f64)> = boundary.points.iter().map(|z| (z.re, z.im)).collect();
        if let Some(&first) = pts.first() {
            pts.push(first);
        }
        let circle: Vec<(f64, f64)> = (0..=128)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / 128.0;
                (t.cos(), t.sin())
            })
            .collect();
        let series = vec![Series::solid("W(M) boundary", pts), Series::dashed("unit circle", circle)];
        artifacts.push(svg_artifact("numrange", plot("Numerical range", "Re", "Im", Axes::Linear, &series)));
    }
    Ok(RunOutput { command: Command::Numrange, config_hash: hash, artifacts, asserted_violations: 0 })
}

fn cmd_fit(ctx: &Ctx, cfg: FitConfig) -> Result<RunOutput> {
    let hash = config_hash(Command::Fit, &cfg);
    let path = ctx.resolve(&cfg.input);
    let raw = fs::read(&path).map_err(|e| Error::input(format!("cannot read {}: {e}", path.display())))?;
    let fingerprint = {
        let d = Sha256::digest(&raw);
        let hex = d.iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        });
        format!("csv-{hex}")
    };
    let points = read_points_csv(&path)?;
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.n as f64, p.value)).collect();
    fit_power(&pairs)?;
    let report = RateReport::from_points(points)?;
    Ok(rate_outputs(ctx, Command::Fit, hash, &fingerprint, json!({}), &report))
}

fn cmd_probe(ctx: &Ctx, cfg: ProbeConfig) -> Result<RunOutput> {
    check_grid(&cfg.n_grid)?;
    if cfg.bounds.is_empty() {
        return Err(Error::input("bounds must be non-empty"));
    }
    if cfg.bounds.iter().any(|b| !matches!(b, BoundId::SqrtN | BoundId::Lemma2 | BoundId::Thm22)) {
        return Err(Error::input("probe audits sqrt_n, lemma2 and thm22 only"));
    }
    let hash = config_hash(Command::Probe, &cfg);
    let spec = FamilySpec::new(FamilyKind::ScalarUnitaryProbe, 1, 0)
        .with_params(FamilyParams { theta: Some(cfg.theta), ..FamilyParams::default() });
    let c = make_operator(&spec)?.mat;
    let fp = c.fingerprint();
    let x = Probe::Vector(CVec::from_real(&[1.0])?);
    let drive = (c.get(0, 0) - C64::new(1.0, 0.0)).norm();
    if drive == 0.0 {
        return Err(Error::input("theta = 0 gives a zero drive; ratios are undefined"));
    }

    let mut sweeps = Vec::new();
    for &b in &cfg.bounds {
        sweeps.push(audit_bound(&c, &x, &cfg.n_grid, cfg.delta, b, None)?);
    }
    let mut csv = format!("{AUDIT_CSV_HEADER},lhs_over_drive,rhs_over_drive,config_hash\n");
    let mut points = Vec::new();
    for (k, &n) in cfg.n_grid.iter().enumerate() {
        let lhs = sweeps[0].audits[k].lhs;
        let mut bounds = serde_json::Map::new();
        for sw in &sweeps {
            let a = &sw.audits[k];
            let _ = writeln!(csv, "{},{},{},{hash}", a.csv_row(), a.lhs / drive, a.rhs / drive);
            bounds.insert(
                a.context.bound_id.to_string(),
                json!({
                    "rhs": a.rhs,
                    "rhs_over_drive": a.rhs / drive,
                    "margin": a.margin,
                    "verdict": a.verdict,
                    "asserted": a.context.bound_id.is_asserted(),
                }),
            );
        }
        points.push(json!({ "n": n, "lhs": lhs, "ratio": lhs / drive, "bounds": bounds }));
    }
    let all: Vec<BoundAudit> = sweeps.iter().flat_map(|s| s.audits.iter().cloned()).collect();
    let asserted = asserted_violations(&all);
    let report = json!({
        "command": "probe",
        "config_hash": hash,
        "fingerprint": fp,
        "theta": cfg.theta,
        "delta": cfg.delta,
        "drive": drive,
        "points": points,
        "asserted_violations": asserted,
    });
    let mut artifacts = vec![csv_artifact("probe", csv), json_artifact("probe", &report)];
    if ctx.opts.svg {
        let mut series = vec![Series::solid(
            "defect / drive",
            sweeps[0].audits.iter().map(|a| (a.context.n as f64, a.lhs / drive)).collect(),
        )];
        for sw in &sweeps {
            series.push(Series::dashed(
                sw.audits[0].context.bound_id.to_string(),
                sw.audits.iter().map(|a| (a.context.n as f64, a.rhs / drive)).collect(),
            ));
        }
        artifacts
            .push(svg_artifact("probe", plot("Scalar unitary probe", "n", "ratio to drive", Axes::LogLog, &series)));
    }
    Ok(RunOutput { command: Command::Probe, config_hash: hash, artifacts, asserted_violations: asserted })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_json(command: Command, config: &str) -> (RunOutput, Value) {
        let out = run_str(command, config, Path::new("."), &RunOptions::default()).unwrap();
        let json = out
            .artifacts
            .iter()
            .find(|a| a.file_name.ends_with(".json"))
            .map(|a| serde_json::from_str(&a.contents).unwrap())
            .unwrap();
        (out, json)
    }

    #[test]
    fn poisson_var_sum_column() {
        let (out, _) = run_json(Command::Poisson, r#"{"n_grid": [1, 10, 100]}"#);
        let csv = &out.artifacts[0].contents;
        let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
        let col = header.iter().position(|h| *h == "var_sum").unwrap();
        for (line, n) in csv.lines().skip(1).zip([1.0, 10.0, 100.0]) {
            let v: f64 = line.split(',').nth(col).unwrap().parse().unwrap();
            assert!((v - n).abs() <= 1e-10 * n);
            assert!(line.ends_with(&out.config_hash));
        }
    }

    #[test]
    fn probe_reports_ratio_and_verdicts() {
        let (out, j) = run_json(Command::Probe, "{}");
        let p = &j["points"][0];
        assert!((p["ratio"].as_f64().unwrap() - 393.5).abs() < 1.0);
        assert_eq!(p["bounds"]["lemma2"]["verdict"], "violated");
        assert_eq!(p["bounds"]["sqrt_n"]["verdict"], "holds");
        assert!((p["bounds"]["lemma2"]["rhs_over_drive"].as_f64().unwrap() - 200.0).abs() < 1e-6);
        assert_eq!(out.asserted_violations, 0);
    }

    #[test]
    fn euler_defaults_fit_first_order() {
        let (_, j) = run_json(Command::Euler, "{}");
        let p = j["report"]["fit_exponent"].as_f64().unwrap();
        assert!((p - 1.0).abs() < 0.05);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = run_str(Command::Poisson, r#"{"n_grid": [1], "bogus": 1}"#, Path::new("."), &RunOptions::default())
            .unwrap_err();
        assert_eq!(e.kind(), "input");
        assert!(run_str(Command::Euler, r#"{"t": -1}"#, Path::new("."), &RunOptions::default()).is_err());
    }

    #[test]
    fn operator_sources_parse() {
        let src: Vec<OperatorSource> = serde_json::from_str(
            r#"[{"kind": "random_contraction", "dim": 3, "seed": 4},
                {"corpus": {"kind": "random_contraction", "dim": 2}, "count": 3},
                {"dim": 1, "re": [[0.5]], "im": [[0.0]]},
                "m.json"]"#,
        )
        .unwrap();
        assert!(matches!(src[0], OperatorSource::Spec(_)));
        assert!(matches!(src[1], OperatorSource::Corpus(_)));
        assert!(matches!(src[2], OperatorSource::Inline(_)));
        assert!(matches!(src[3], OperatorSource::Path(_)));
    }

    #[test]
    fn seed_override_changes_hash_and_output() {
        let cfg =
            r#"{"operators": [{"kind": "random_contraction", "dim": 3}], "n_grid": [1, 2, 4], "bounds": ["sqrt_n"]}"#;
        let a = run_str(Command::Defect, cfg, Path::new("."), &RunOptions::default()).unwrap();
        let b = run_str(Command::Defect, cfg, Path::new("."), &RunOptions { svg: false, seed: Some(9) }).unwrap();
        let a2 = run_str(Command::Defect, cfg, Path::new("."), &RunOptions::default()).unwrap();
        assert_ne!(a.config_hash, b.config_hash);
        assert_ne!(a.artifacts, b.artifacts);
        assert_eq!(a.artifacts, a2.artifacts);
    }

    #[test]
    fn commuting_trotter_is_undefined_fit() {
        let cfg = r#"{"a": {"dim": 2, "re": [[0,0],[0,0]], "im": [[0,0],[0,0]]},
                      "b": {"dim": 2, "re": [[0,0],[0,0]], "im": [[0,0],[0,0]]}}"#;
        let (_, j) = run_json(Command::Trotter, cfg);
        assert_eq!(j["report"]["fit_exponent"], "undefined");
    }

    #[test]
    fn strict_only_fails_on_asserted_violations() {
        assert_eq!(exit_status(false, 3), 0);
        assert_eq!(exit_status(true, 0), 0);
        assert_eq!(exit_status(true, 1), 1);
    }

    #[test]
    fn svg_only_when_requested() {
        let opts = RunOptions { svg: true, seed: None };
        let out = run_str(Command::Euler, "{}", Path::new("."), &opts).unwrap();
        assert!(out.artifacts.iter().any(|a| a.file_name == "euler.svg"));
        let out = run_str(Command::Euler, "{}", Path::new("."), &RunOptions::default()).unwrap();
        assert!(!out.artifacts.iter().any(|a| a.file_name.ends_with(".svg")));
    }
}
