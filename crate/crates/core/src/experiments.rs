//! Batch experiments behind the `scgl` binary.
//!
//! Every run is described by an [`ExperimentManifest`]: the experiment kind,
//! the fully resolved configuration, the seed and the output directory. The
//! manifest hash (SHA-256 over the crate version, kind, seed and canonical
//! configuration) heads every output file. Apart from `run.log`, which holds
//! wall-clock information, re-running a manifest reproduces its files byte
//! for byte.

use crate::bel::{self, BelConfig, BELReport, GradientBoundSpec};
use crate::config::{Scheme, SolverConfig};
use crate::dyadic::{besov_norm, BesovParams, DyadicPartition, Exponent};
use crate::error::{Error, Result};
use crate::kernels::{log_profile, script_k};
use crate::ou::{renorm_constant, wick_bundle_with, NoiseIncrement, OUState, OuPropagator, RenormConstant};
use crate::rng::{self, purpose};
use crate::snapshot::Snapshot;
use crate::solver::{
    self, scheme_gap, BrownianPath, ComingDownRow, GalerkinStepper, Sample, SolverState, SplitState, SplitStepper,
};
use crate::spectral::{Grid, PhysParams, SpectralField};
use crate::stats::{least_squares, median, Estimate, LinearFit};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

/// Version of the record schema written to JSONL files.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    RenormScan,
    BesovScan,
    KernelCheck,
    Convergence,
    ComingDown,
    BelCheck,
    Selftest,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::RenormScan => "renorm-scan",
            ExperimentKind::BesovScan => "besov-scan",
            ExperimentKind::KernelCheck => "kernel-check",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::ComingDown => "coming-down",
            ExperimentKind::BelCheck => "bel-check",
            ExperimentKind::Selftest => "selftest",
        }
    }
}

/// `renorm-scan` settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenormScanSpec {
    pub mu: Vec<f64>,
    pub n: Vec<usize>,
    /// Allowed relative deviation of the fitted slope from `1/(4πμ)`.
    pub tolerance: f64,
}

impl Default for RenormScanSpec {
    fn default() -> Self {
        Self {
            mu: vec![0.5, 1.0, 2.0],
            n: vec![16, 32, 64, 128, 256, 512],
            tolerance: 0.1,
        }
    }
}

/// `besov-scan` settings: norms of stationary OU samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BesovScanSpec {
    pub n: Vec<usize>,
    pub alpha: Vec<f64>,
    pub p: Vec<Exponent>,
    pub q: Vec<Exponent>,
    pub samples: usize,
}

impl Default for BesovScanSpec {
    fn default() -> Self {
        Self {
            n: vec![8, 16, 32],
            alpha: vec![-0.75, -0.5, -0.25, 0.0],
            p: vec![Exponent::Finite(2.0), Exponent::Finite(4.0), Exponent::Infinity],
            q: vec![Exponent::Finite(2.0), Exponent::Infinity],
            samples: 4,
        }
    }
}

/// `kernel-check` settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelCheckSpec {
    pub mu: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
    pub tol: f64,
    /// Largest acceptable deviation from the logarithmic profile.
    pub max_deviation: f64,
    /// Largest acceptable `|slope|` of the deviation against `log|x|`.
    pub max_slope: f64,
}

impl Default for KernelCheckSpec {
    fn default() -> Self {
        Self {
            mu: 1.0,
            x_min: 1e-4,
            x_max: 0.4,
            points: 41,
            tol: 1e-10,
            max_deviation: 1.0,
            max_slope: 0.02,
        }
    }
}

/// Coupled Wick-power ladder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WickLadderSpec {
    pub ladder: Vec<usize>,
    pub t_end: f64,
    pub samples: usize,
    pub replicas: usize,
    pub alpha: f64,
    pub p: f64,
}

impl Default for WickLadderSpec {
    fn default() -> Self {
        Self {
            ladder: vec![8, 16, 32, 64],
            t_end: 0.1,
            samples: 2,
            replicas: 64,
            alpha: 0.3,
            p: 4.0,
        }
    }
}

/// Time-step self-convergence table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimestepSpec {
    pub n: usize,
    pub t_end: f64,
    /// Coarsest first; each entry is compared with the run at half the step.
    pub h: Vec<f64>,
    pub replicas: usize,
}

impl Default for TimestepSpec {
    fn default() -> Self {
        Self {
            n: 16,
            t_end: 0.5,
            h: vec![4e-3, 2e-3, 1e-3],
            replicas: 8,
        }
    }
}

/// Coupled cutoff ladder for the full solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolutionLadderSpec {
    pub ladder: Vec<usize>,
    pub t_end: f64,
    pub h: f64,
    pub replicas: usize,
    pub alpha: f64,
}

impl Default for SolutionLadderSpec {
    fn default() -> Self {
        Self {
            ladder: vec![8, 16],
            t_end: 0.2,
            h: 2e-3,
            replicas: 8,
            alpha: 0.5,
        }
    }
}

/// Mode-0 statistic of the direct scheme across cutoffs, with and without
/// the Wick constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenormLadderSpec {
    pub ladder: Vec<usize>,
    pub t_end: f64,
    pub h: f64,
    pub replicas: usize,
    pub u0: f64,
    /// Collocation sizes per cutoff; `4n + 4` when empty.
    pub points: Vec<usize>,
}

impl Default for RenormLadderSpec {
    fn default() -> Self {
        Self {
            ladder: vec![16, 32, 64],
            t_end: 0.5,
            h: 2e-3,
            replicas: 32,
            u0: 1.0,
            points: vec![],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSpec {
    pub wick: WickLadderSpec,
    pub timestep: TimestepSpec,
    pub solution: SolutionLadderSpec,
    pub renorm: RenormLadderSpec,
    /// Sections to run, any of `wick`, `timestep`, `solution`, `renorm`.
    pub sections: Vec<String>,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        Self {
            wick: WickLadderSpec::default(),
            timestep: TimestepSpec::default(),
            solution: SolutionLadderSpec::default(),
            renorm: RenormLadderSpec::default(),
            sections: vec!["wick".into(), "timestep".into(), "solution".into()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComingDownSpec {
    pub amplitudes: Vec<f64>,
    pub t0: f64,
    pub replicas: usize,
    pub alpha: f64,
    pub p_moment: f64,
    /// Largest acceptable ratio between the largest and smallest median.
    pub max_ratio: f64,
}

impl Default for ComingDownSpec {
    fn default() -> Self {
        Self {
            amplitudes: vec![0.0, 10.0, 1e2, 1e3, 1e4],
            t0: 0.5,
            replicas: 64,
            alpha: 0.5,
            p_moment: 2.0,
            max_ratio: 2.0,
        }
    }
}

/// `bel-check` settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BelCheckSpec {
    pub run: BelConfig,
    /// `u₀ = v0 · e_0`.
    pub v0: f64,
    /// Direction `h = e_0 + direction_e1 · e_{(1,0)}`.
    pub direction_e1: [f64; 2],
    /// `"tanh_mean"` or `"mean"`.
    pub observable: String,
    pub max_z: f64,
}

impl Default for BelCheckSpec {
    fn default() -> Self {
        Self {
            run: BelConfig::default(),
            v0: 0.5,
            direction_e1: [0.5, 0.2],
            observable: "tanh_mean".into(),
            max_z: 3.0,
        }
    }
}

impl BelCheckSpec {
    pub fn fields(&self) -> Result<(SpectralField, SpectralField)> {
        let g = self.run.grid();
        let v0 = SpectralField::constant(g, Complex64::new(self.v0, 0.0));
        let mut h = SpectralField::constant(g, Complex64::new(1.0, 0.0));
        h.set((1, 0), Complex64::new(self.direction_e1[0], self.direction_e1[1]))?;
        Ok((v0, h))
    }

    pub fn observable(&self) -> Result<Box<dyn bel::Observable>> {
        match self.observable.as_str() {
            "tanh_mean" => Ok(Box::new(bel::TanhMeanReal)),
            "mean" => Ok(Box::new(bel::MeanReal)),
            other => Err(Error::Config(format!("unknown observable {other:?}"))),
        }
    }
}

/// Everything a run reads: the solver configuration at the top level of the
/// TOML file plus one optional table per experiment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub renorm_scan: RenormScanSpec,
    pub besov_scan: BesovScanSpec,
    pub kernel_check: KernelCheckSpec,
    pub convergence: ConvergenceSpec,
    pub coming_down: ComingDownSpec,
    pub bel: BelCheckSpec,
    pub gradient_bound: GradientBoundSpec,
}


fn section<T: for<'de> Deserialize<'de> + Default>(table: &mut toml::Table, key: &str) -> Result<T> {
    match table.remove(key) {
        None => Ok(T::default()),
        Some(v) => v
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("[{key}]: {e}"))),
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        let cfg = RunConfig {
            renorm_scan: section(&mut table, "renorm_scan")?,
            besov_scan: section(&mut table, "besov_scan")?,
            kernel_check: section(&mut table, "kernel_check")?,
            convergence: section(&mut table, "convergence")?,
            coming_down: section(&mut table, "coming_down")?,
            bel: section(&mut table, "bel")?,
            gradient_bound: section(&mut table, "gradient_bound")?,
            solver: toml::Value::Table(table)
                .try_into()
                .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?,
        };
        cfg.solver.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Same seed everywhere a seed is read.
    pub fn set_seed(&mut self, seed: u64) {
        self.solver.seed = seed;
        self.bel.run.seed = seed;
    }

    /// Canonical JSON used for hashing.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("run config always serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub kind: ExperimentKind,
    pub config: RunConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub hash: String,
}

impl ExperimentManifest {
    pub fn new(kind: ExperimentKind, mut config: RunConfig, seed: u64, out_dir: PathBuf) -> Self {
        config.set_seed(seed);
        let mut h = Sha256::new();
        h.update(env!("CARGO_PKG_VERSION").as_bytes());
        h.update([0]);
        h.update(kind.name().as_bytes());
        h.update([0]);
        h.update(seed.to_le_bytes());
        h.update(config.canonical_json().as_bytes());
        let hash = h.finalize().iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        });
        Self {
            kind,
            config,
            seed,
            out_dir,
            hash,
        }
    }

    fn manifest_path(&self) -> PathBuf {
        self.out_dir.join("manifest.json")
    }

    /// Writes `manifest.json`; with `resume`, requires an existing manifest
    /// with the same hash instead.
    fn prepare(&self, resume: bool) -> Result<()> {
        fs::create_dir_all(&self.out_dir)?;
        let path = self.manifest_path();
        if resume {
            let text = fs::read_to_string(&path)
                .map_err(|e| Error::Config(format!("cannot resume: {}: {e}", path.display())))?;
            let old: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::Format(format!("manifest.json: {e}")))?;
            if old.get("hash").and_then(|h| h.as_str()) != Some(self.hash.as_str()) {
                return Err(Error::Config(format!(
                    "manifest hash mismatch in {}: cannot resume a different run",
                    path.display()
                )));
            }
            return Ok(());
        }
        let mut v = serde_json::to_value(self).expect("manifest serializes");
        v["schema"] = SCHEMA_VERSION.into();
        fs::write(&path, serde_json::to_string_pretty(&v).expect("json") + "\n")?;
        Ok(())
    }
}

/// One line of a results file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema: u32,
    pub experiment: String,
    pub replica: u64,
    pub step: u64,
    pub t: f64,
    pub metrics: BTreeMap<String, f64>,
    pub blowup: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<String>,
}

/// Long-form table written as CSV.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self, hash: &str) -> String {
        let mut s = format!("# manifest_hash={hash}\n{}\n", self.columns.join(","));
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

/// Outcome of one experiment: the acceptance verdict, human-readable check
/// lines, and the files written.
#[derive(Clone, Debug, Default)]
pub struct RunOutcome {
    pub passed: bool,
    pub checks: Vec<(String, bool)>,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    fn check(&mut self, name: impl Into<String>, ok: bool) {
        self.checks.push((name.into(), ok));
    }

    fn finish(mut self) -> Self {
        self.passed = self.checks.iter().all(|(_, ok)| *ok);
        self
    }
}

struct Writer<'a> {
    manifest: &'a ExperimentManifest,
    files: Vec<PathBuf>,
}

impl<'a> Writer<'a> {
    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.manifest.out_dir.join(name);
        fs::write(&path, body)?;
        self.files.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let v = serde_json::json!({
            "schema": SCHEMA_VERSION,
            "manifest_hash": self.manifest.hash,
            "experiment": self.manifest.kind.name(),
            "report": value,
        });
        self.write(name, &(serde_json::to_string_pretty(&v).expect("json") + "\n"))
    }

    fn csv(&mut self, name: &str, table: &Table) -> Result<()> {
        self.write(name, &table.to_csv(&self.manifest.hash))
    }
}

fn header_line(m: &ExperimentManifest) -> String {
    serde_json::json!({
        "schema": SCHEMA_VERSION,
        "manifest_hash": m.hash,
        "experiment": m.kind.name(),
    })
    .to_string()
}

/// Dispatches the manifest. `workers` sizes the thread pool (0 = rayon
/// default); results never depend on it.
pub fn run_manifest(manifest: &ExperimentManifest, workers: usize, resume: bool) -> Result<RunOutcome> {
    manifest.prepare(resume)?;
    let started = std::time::SystemTime::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcome = pool.install(|| dispatch(manifest, resume))?;
    let elapsed = started.elapsed().map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let stamp = started
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut log = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(manifest.out_dir.join("run.log"))?;
    writeln!(
        log,
        "started_unix={stamp} elapsed_s={elapsed:.3} experiment={} hash={} passed={}",
        manifest.kind.name(),
        manifest.hash,
        outcome.passed
    )?;
    Ok(outcome)
}

fn dispatch(m: &ExperimentManifest, resume: bool) -> Result<RunOutcome> {
    let mut w = Writer {
        manifest: m,
        files: Vec::new(),
    };
    let mut out = match m.kind {
        ExperimentKind::Simulate => simulate(m, &mut w, resume)?,
        ExperimentKind::RenormScan => renorm_scan_exp(m, &mut w)?,
        ExperimentKind::BesovScan => besov_scan_exp(m, &mut w)?,
        ExperimentKind::KernelCheck => kernel_check_exp(m, &mut w)?,
        ExperimentKind::Convergence => convergence_exp(m, &mut w)?,
        ExperimentKind::ComingDown => coming_down_exp(m, &mut w)?,
        ExperimentKind::BelCheck => bel_check_exp(m, &mut w)?,
        ExperimentKind::Selftest => selftest_exp(m, &mut w)?,
    };
    out.files = w.files;
    Ok(out.finish())
}

// ---------------------------------------------------------------- simulate

fn snapshot_name(replica: u64, step: u64, part: &str) -> String {
    format!("r{replica:04}_s{step:08}_{part}.wcgl")
}

fn write_state_snapshot(dir: &Path, replica: u64, state: &SolverState, seed: u64) -> Result<String> {
    let t = state.t();
    let step = state.step();
    match state {
        SolverState::Split(s) => {
            for (part, field) in [("y", &s.y), ("z", &s.ou.z)] {
                Snapshot {
                    t,
                    seed,
                    field: field.clone(),
                }
                .write(&dir.join(snapshot_name(replica, step, part)))?;
            }
            Ok(format!("snapshots/{}", snapshot_name(replica, step, "y")))
        }
        SolverState::Direct { u, .. } => {
            let name = snapshot_name(replica, step, "u");
            Snapshot {
                t,
                seed,
                field: u.clone(),
            }
            .write(&dir.join(&name))?;
            Ok(format!("snapshots/{name}"))
        }
    }
}

/// Latest complete snapshot of `replica`, as a solver state.
fn restore_latest(dir: &Path, replica: u64, cfg: &SolverConfig) -> Result<Option<SolverState>> {
    if !dir.exists() {
        return Ok(None);
    }
    let prefix = format!("r{replica:04}_s");
    let part = match cfg.scheme {
        Scheme::SplitExpEuler => "z",
        Scheme::GalerkinSde => "u",
    };
    let mut steps: Vec<u64> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let rest = name.strip_prefix(&prefix)?;
            let (step, tail) = rest.split_once('_')?;
            (tail == format!("{part}.wcgl")).then(|| step.parse().ok())?
        })
        .collect();
    steps.sort_unstable();
    let Some(&step) = steps.last() else {
        return Ok(None);
    };
    let mut c = renorm_constant(cfg.n, cfg.mu)?;
    if let Some(v) = cfg.c_override {
        c = c.with_value(v);
    }
    let grid = cfg.grid()?;
    let read = |part: &str| -> Result<Snapshot> {
        let s = Snapshot::read(&dir.join(snapshot_name(replica, step, part)))?;
        if s.field.grid != grid || s.seed != cfg.seed {
            return Err(Error::Format(format!(
                "snapshot {} does not match the configuration",
                snapshot_name(replica, step, part)
            )));
        }
        Ok(s)
    };
    Ok(Some(match cfg.scheme {
        Scheme::SplitExpEuler => {
            let y = read("y")?;
            let z = read("z")?;
            SolverState::Split(SplitState {
                t: y.t,
                step,
                y: y.field,
                ou: OUState { t: z.t, z: z.field },
                c,
            })
        }
        Scheme::GalerkinSde => {
            let u = read("u")?;
            SolverState::Direct {
                t: u.t,
                step,
                u: u.field,
                c,
            }
        }
    }))
}

fn sample_record(m: &ExperimentManifest, s: &Sample, snapshot: Option<String>) -> ResultRecord {
    ResultRecord {
        schema: SCHEMA_VERSION,
        experiment: m.kind.name().into(),
        replica: s.replica,
        step: s.step,
        t: s.t,
        metrics: s.metrics.clone(),
        blowup: false,
        snapshot,
    }
}

/// Runs one replica, streaming records to `partial/` so an interrupted run
/// can be resumed from its latest snapshot.
fn simulate_replica(m: &ExperimentManifest, replica: u64, resume: bool) -> Result<(Vec<String>, Option<solver::BlowUpRecord>)> {
    let cfg = &m.config.solver;
    let snap_dir = m.out_dir.join("snapshots");
    let partial_dir = m.out_dir.join("partial");
    let partial = partial_dir.join(format!("replica{replica:04}.jsonl"));
    let mut lines: Vec<String> = Vec::new();
    let mut start = None;
    if resume {
        if let Some(state) = restore_latest(&snap_dir, replica, cfg)? {
            let upto = state.step();
            if partial.exists() {
                for line in std::io::BufReader::new(fs::File::open(&partial)?).lines() {
                    let line = line?;
                    let rec: ResultRecord =
                        serde_json::from_str(&line).map_err(|e| Error::Format(format!("{}: {e}", partial.display())))?;
                    if rec.step <= upto {
                        lines.push(line);
                    }
                }
            }
            start = Some(state);
        }
    }
    let mut sink = fs::File::create(&partial)?;
    for l in &lines {
        writeln!(sink, "{l}")?;
    }
    let mut observer = |state: &SolverState, s: &Sample| -> Result<()> {
        let snap = if cfg.write_snapshots {
            Some(write_state_snapshot(&snap_dir, replica, state, cfg.seed)?)
        } else {
            None
        };
        let line = serde_json::to_string(&sample_record(m, s, snap)).expect("record serializes");
        writeln!(sink, "{line}")?;
        sink.flush()?;
        lines.push(line);
        Ok(())
    };
    let out = solver::run_replica_from(cfg, replica, start, &mut observer)?;
    if let Some(b) = &out.blowup {
        let rec = ResultRecord {
            schema: SCHEMA_VERSION,
            experiment: m.kind.name().into(),
            replica,
            step: out.final_state.step(),
            t: b.t,
            metrics: b.last_metrics.clone(),
            blowup: true,
            snapshot: None,
        };
        lines.push(serde_json::to_string(&rec).expect("record serializes"));
    }
    Ok((lines, out.blowup))
}

fn simulate(m: &ExperimentManifest, w: &mut Writer, resume: bool) -> Result<RunOutcome> {
    let cfg = &m.config.solver;
    fs::create_dir_all(m.out_dir.join("partial"))?;
    if cfg.write_snapshots {
        fs::create_dir_all(m.out_dir.join("snapshots"))?;
    }
    let results: Vec<Result<(Vec<String>, Option<solver::BlowUpRecord>)>> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| simulate_replica(m, r, resume))
        .collect();
    let mut body = header_line(m) + "\n";
    let mut summary = Table::new(&["replica", "t", "metric", "value"]);
    let mut out = RunOutcome::default();
    let mut blowups = 0;
    let mut all_finite = true;
    for (r, res) in results.into_iter().enumerate() {
        let (lines, blow) = res?;
        for l in &lines {
            body.push_str(l);
            body.push('\n');
        }
        if blow.is_some() {
            blowups += 1;
        }
        if let Some(last) = lines.iter().rev().find_map(|l| {
            serde_json::from_str::<ResultRecord>(l).ok().filter(|rec| !rec.blowup)
        }) {
            for (k, v) in &last.metrics {
                all_finite &= v.is_finite();
                summary.push(vec![r.to_string(), num(last.t), k.clone(), num(*v)]);
            }
        }
    }
    w.write("results.jsonl", &body)?;
    w.csv("summary.csv", &summary)?;
    fs::remove_dir_all(m.out_dir.join("partial"))?;
    out.check(format!("simulate: {blowups} blow-ups"), blowups == 0);
    out.check("simulate: final metrics finite", all_finite);
    Ok(out)
}

// ------------------------------------------------------------ renorm-scan

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RenormScanRow {
    pub mu: f64,
    pub n: usize,
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RenormSlope {
    pub mu: f64,
    pub fit: LinearFit,
    pub expected: f64,
    pub relative_error: f64,
}

/// `c_n` over the ladder and the least-squares slope against `ln n`.
pub fn renorm_scan(spec: &RenormScanSpec) -> Result<(Vec<RenormScanRow>, Vec<RenormSlope>)> {
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for &mu in &spec.mu {
        let cs: Vec<f64> = spec
            .n
            .par_iter()
            .map(|&n| renorm_constant(n, mu).map(|c| c.value))
            .collect::<Result<_>>()?;
        let x: Vec<f64> = spec.n.iter().map(|&n| (n as f64).ln()).collect();
        let fit = least_squares(&x, &cs);
        let expected = crate::ou::log_slope(mu);
        fits.push(RenormSlope {
            mu,
            fit,
            expected,
            relative_error: (fit.slope - expected).abs() / expected,
        });
        rows.extend(spec.n.iter().zip(cs).map(|(&n, c)| RenormScanRow { mu, n, c }));
    }
    Ok((rows, fits))
}

fn renorm_scan_exp(m: &ExperimentManifest, w: &mut Writer) -> Result<RunOutcome> {
    let spec = &m.config.renorm_scan;
    let (rows, fits) = renorm_scan(spec)?;
    let mut t = Table::new(&["mu", "n", "c_n"]);
    for r in &rows {
        t.push(vec![num(r.mu), r.n.to_string(), num(r.c)]);
    }
    w.csv("renorm_scan.csv", &t)?;
    w.json("renorm_scan.json", &serde_json::json!({"rows": rows, "fits": fits}))?;
    let mut out = RunOutcome::default();
    for f in &fits {
        out.check(
            format!(
                "renorm-scan mu={}: slope {:.5} vs {:.5} (rel err {:.3})",
                f.mu, f.fit.slope, f.expected, f.relative_error
            ),
            f.relative_error <= spec.tolerance,
        );
    }
    Ok(out)
}

// ------------------------------------------------------------- besov-scan

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BesovScanRow {
    pub n: usize,
    pub sample: usize,
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
    pub norm: f64,
}

/// Norms of stationary OU samples plus the count of monotonicity
/// violations (in `α` up, `q` down, `p` up).
pub fn besov_scan(spec: &BesovScanSpec, seed: u64, mu: f64) -> Result<(Vec<BesovScanRow>, usize)> {
    let mut rows = Vec::new();
    let mut violations = 0;
    for &n in &spec.n {
        let grid = Grid::with_default_points(n);
        let part = DyadicPartition::for_band(n);
        for s in 0..spec.samples {
            let z = OUState::stationary(grid, mu, &mut rng::stream(seed, s as u64, n as u64, purpose::AUX)).z;
            let mut table = BTreeMap::new();
            for (ia, &alpha) in spec.alpha.iter().enumerate() {
                for (ip, p) in spec.p.iter().enumerate() {
                    for (iq, q) in spec.q.iter().enumerate() {
                        let params = BesovParams { alpha, p: *p, q: *q };
                        let v = besov_norm(&z, &params, &part)?;
                        table.insert((ia, ip, iq), v);
                        rows.push(BesovScanRow {
                            n,
                            sample: s,
                            alpha,
                            p: p.value(),
                            q: q.value(),
                            norm: v,
                        });
                    }
                }
            }
            let slack = |a: f64, b: f64| a <= b * (1.0 + 1e-12) + 1e-300;
            for (&(ia, ip, iq), &v) in &table {
                if ia + 1 < spec.alpha.len() && spec.alpha[ia + 1] > spec.alpha[ia] && !slack(v, table[&(ia + 1, ip, iq)]) {
                    violations += 1;
                }
                if ip + 1 < spec.p.len() && spec.p[ip + 1].value() > spec.p[ip].value() && !slack(v, table[&(ia, ip + 1, iq)]) {
                    violations += 1;
                }
                if iq + 1 < spec.q.len() && spec.q[iq + 1].value() > spec.q[iq].value() && !slack(table[&(ia, ip, iq + 1)], v) {
                    violations += 1;
                }
            }
        }
    }
    Ok((rows, violations))
}

fn besov_scan_exp(m: &ExperimentManifest, w: &mut Writer) -> Result<RunOutcome> {
    let (rows, violations) = besov_scan(&m.config.besov_scan, m.seed, m.config.solver.mu)?;
    let mut t = Table::new(&["n", "sample", "alpha", "p", "q", "norm"]);
    for r in &rows {
        t.push(vec![
            r.n.to_string(),
            r.sample.to_string(),
            num(r.alpha),
            num(r.p),
            num(r.q),
            num(r.norm),
        ]);
    }
    w.csv("besov_scan.csv", &t)?;
    w.json("besov_scan.json", &serde_json::json!({"violations": violations, "rows": rows.len()}))?;
    let mut out = RunOutcome::default();
    out.check(format!("besov-scan: {violations} monotonicity violations"), violations == 0);
    Ok(out)
}

// ----------------------------------------------------------- kernel-check

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelRow {
    pub x: f64,
    pub kernel_re: f64,
    pub kernel_im: f64,
    pub profile: f64,
    pub deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelReport {
    pub rows: Vec<KernelRow>,
    pub max_deviation: f64,
    /// Fit of the deviation against `ln|x|`.
    pub trend: LinearFit,
}

/// `𝒦(0; x)` against `(1/4πμ) log₊|x|⁻¹` for `x = (r, 0)` on a log-spaced
/// sweep of `r`.
pub fn kernel_check(spec: &KernelCheckSpec) -> Result<KernelReport> {
    if !(spec.x_min > 0.0 && spec.x_max > spec.x_min && spec.points >= 2) {
        return Err(Error::Config("kernel-check needs 0 < x_min < x_max and points >= 2".into()));
    }
    let ratio = (spec.x_max / spec.x_min).ln() / (spec.points - 1) as f64;
    let rows: Vec<KernelRow> = (0..spec.points)
        .into_par_iter()
        .map(|i| {
            let r = spec.x_min * (ratio * i as f64).exp();
            let k = script_k(0.0, (r, 0.0), spec.mu, spec.tol)?;
            let profile = log_profile((r, 0.0), spec.mu);
            Ok(KernelRow {
                x: r,
                kernel_re: k.re,
                kernel_im: k.im,
                profile,
                deviation: (k - profile).norm(),
            })
        })
        .collect::<Result<_>>()?;
    let lx: Vec<f64> = rows.iter().map(|r| r.x.ln()).collect();
    let dev: Vec<f64> = rows.iter().map(|r| r.deviation).collect();
    Ok(KernelReport {
        max_deviation: dev.iter().cloned().fold(0.0, f64::max),
        trend: least_squares(&lx, &dev),
        rows,
    })
}

fn kernel_check_exp(m: &ExperimentManifest, w: &mut Writer) -> Result<RunOutcome> {
    let spec = &m.config.kernel_check;
    let rep = kernel_check(spec)?;
    let mut t = Table::new(&["x", "kernel_re", "kernel_im", "log_profile", "deviation"]);
    for r in &rep.rows {
        t.push(vec![num(r.x), num(r.kernel_re), num(r.kernel_im), num(r.profile), num(r.deviation)]);
    }
    w.csv("kernel_check.csv", &t)?;
    w.json("kernel_check.json", &rep)?;
    let mut out = RunOutcome::default();
    out.check(
        format!("kernel-check: max deviation {:.4}", rep.max_deviation),
        rep.max_deviation <= spec.max_deviation,
    );
    out.check(
        format!("kernel-check: deviation slope {:.5}", rep.trend.slope),
        rep.trend.slope.abs() < spec.max_slope,
    );
    Ok(out)
}

// ------------------------------------------------------------ convergence

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WickRung {
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub median_sup: f64,
    pub mean_sup: f64,
}

fn wick_component(b: &crate::ou::WickBundle, k: usize, l: usize) -> &SpectralField {
    match (k, l) {
        (1, 1) => &b.z11,
        (2, 1) => &b.z21,
        (2, 0) => &b.z20,
        _ => &b.z10,
    }
}

/// `sup_t ‖Z^{:k,l:}_n − Z^{:k,l:}_{2n}‖_{B^{−α}_{p,p}}` per rung on
/// coupled stationary OU fields, for `(k,l) ∈ {(1,1), (2,1)}`. Each Wick
/// power is the band-limited representative on its own cutoff.
pub fn wick_ladder(spec: &WickLadderSpec, mu: f64, seed: u64) -> Result<Vec<WickRung>> {
    if spec.ladder.is_empty() || spec.samples == 0 || spec.replicas == 0 {
        return Err(Error::Config("wick ladder needs rungs, samples and replicas".into()));
    }
    let mut ns: Vec<usize> = spec.ladder.clone();
    ns.push(2 * spec.ladder.last().unwrap());
    let dt = spec.t_end / spec.samples as f64;
    let pairs = [(1usize, 1usize), (2, 1)];
    let besov = BesovParams::new(-spec.alpha, spec.p, spec.p)?;
    let per_replica: Vec<Result<Vec<f64>>> = (0..spec.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let grids: Vec<Grid> = ns.iter().map(|&n| Grid::with_default_points(n)).collect();
            let cs: Vec<f64> = ns
                .iter()
                .map(|&n| renorm_constant(n, mu).map(|c| c.value))
                .collect::<Result<_>>()?;
            let props: Vec<OuPropagator> = grids.iter().map(|&g| OuPropagator::new(g, mu, dt)).collect();
            let mut states: Vec<OUState> = grids
                .iter()
                .map(|&g| OUState::stationary(g, mu, &mut rng::stream(seed, r, 0, purpose::STATIONARY_INIT)))
                .collect();
            let mut sup = vec![0.0f64; spec.ladder.len() * pairs.len()];
            for step in 0..spec.samples as u64 {
                for (s, p) in states.iter_mut().zip(&props) {
                    p.exact_step(s, &mut rng::stream(seed, r, step, purpose::NOISE));
                }
                let bundles: Vec<_> = states
                    .iter()
                    .zip(&cs)
                    .map(|(s, &c)| wick_bundle_with(&s.z, c))
                    .collect::<Result<_>>()?;
                for i in 0..spec.ladder.len() {
                    let fine = grids[i + 1];
                    let part = DyadicPartition::for_band(fine.n);
                    for (j, &(k, l)) in pairs.iter().enumerate() {
                        let coarse = wick_component(&bundles[i], k, l).resize(fine);
                        let diff = coarse.sub(wick_component(&bundles[i + 1], k, l))?;
                        let v = besov_norm(&diff, &besov, &part)?;
                        let slot = &mut sup[i * pairs.len() + j];
                        *slot = slot.max(v);
                    }
                }
            }
            Ok(sup)
        })
        .collect();
    let per_replica: Vec<Vec<f64>> = per_replica.into_iter().collect::<Result<_>>()?;
    let mut rungs = Vec::new();
    for (i, &n) in spec.ladder.iter().enumerate() {
        for (j, &(k, l)) in pairs.iter().enumerate() {
            let xs: Vec<f64> = per_replica.iter().map(|v| v[i * pairs.len() + j]).collect();
            rungs.push(WickRung {
                n,
                k,
                l,
                median_sup: median(&xs),
                mean_sup: Estimate::from_samples(&xs).mean,
            });
        }
    }
    Ok(rungs)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimestepRow {
    pub scheme: String,
    pub h: f64,
    /// Mean over replicas of `‖u_h(T) − u_{h/2}(T)‖_{L²}`.
    pub error: f64,
    /// `error(h) / error(h/2)`; NaN on the last row.
    pub ratio: f64,
}

fn run_on_path(scheme: Scheme, u0: &SpectralField, params: &PhysParams, path: &BrownianPath, ratio: u64, t_end: f64) -> Result<SpectralField> {
    let grid = u0.grid;
    let h = path.h_base * ratio as f64;
    let c = renorm_constant(grid.n, params.mu)?;
    let steps = (t_end / h).round() as u64;
    match scheme {
        Scheme::SplitExpEuler => {
            let st = SplitStepper::new(grid, *params, h, c.value, 0.5)?;
            let mut s = SplitState {
                t: 0.0,
                step: 0,
                y: u0.clone(),
                ou: OUState::zero(grid),
                c,
            };
            for k in 0..steps {
                st.step_shared(&mut s, &path.increment(k, ratio))?;
            }
            Ok(s.solution())
        }
        Scheme::GalerkinSde => {
            let st = GalerkinStepper::new(grid, *params, h, c.value, 0.5)?;
            let mut u = u0.clone();
            for k in 0..steps {
                st.step(&mut u, &path.increment(k, ratio), k as f64 * h)?;
            }
            Ok(u)
        }
    }
}

/// Self-convergence of both schemes: each `h` against `h/2` on one path.
pub fn timestep_table(spec: &TimestepSpec, params: &PhysParams, seed: u64) -> Result<Vec<TimestepRow>> {
    let hmin = spec.h.iter().cloned().fold(f64::INFINITY, f64::min);
    let base = hmin / 2.0;
    let grid = Grid::with_default_points(spec.n);
    let u0 = SpectralField::constant(grid, Complex64::new(1.0, 0.0));
    let mut rows = Vec::new();
    for (scheme, name) in [(Scheme::SplitExpEuler, "split_exp_euler"), (Scheme::GalerkinSde, "galerkin_sde")] {
        let errs: Vec<Result<Vec<f64>>> = (0..spec.replicas as u64)
            .into_par_iter()
            .map(|r| {
                let path = BrownianPath {
                    grid,
                    h_base: base,
                    seed,
                    replica: r,
                };
                spec.h
                    .iter()
                    .map(|&h| {
                        let ratio = (h / base).round() as u64;
                        let a = run_on_path(scheme, &u0, params, &path, ratio, spec.t_end)?;
                        let b = run_on_path(scheme, &u0, params, &path, ratio / 2, spec.t_end)?;
                        Ok(a.sub(&b)?.l2_norm())
                    })
                    .collect()
            })
            .collect();
        let errs: Vec<Vec<f64>> = errs.into_iter().collect::<Result<_>>()?;
        let means: Vec<f64> = (0..spec.h.len())
            .map(|i| Estimate::from_samples(&errs.iter().map(|e| e[i]).collect::<Vec<_>>()).mean)
            .collect();
        for (i, &h) in spec.h.iter().enumerate() {
            rows.push(TimestepRow {
                scheme: name.into(),
                h,
                error: means[i],
                ratio: if i + 1 < means.len() { means[i] / means[i + 1] } else { f64::NAN },
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolutionRung {
    pub n: usize,
    pub median: f64,
}

/// `‖u_n(T) − u_{2n}(T)‖_{B^{−α}_{∞,∞}}` with coupled exact OU noise.
pub fn solution_ladder(spec: &SolutionLadderSpec, params: &PhysParams, seed: u64) -> Result<Vec<SolutionRung>> {
    let mut ns = spec.ladder.clone();
    ns.push(2 * spec.ladder.last().copied().unwrap_or(8));
    let per: Vec<Result<Vec<f64>>> = (0..spec.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let finals: Vec<SpectralField> = ns
                .iter()
                .map(|&n| {
                    let grid = Grid::with_default_points(n);
                    let c = renorm_constant(n, params.mu)?;
                    let st = SplitStepper::new(grid, *params, spec.h, c.value, 0.5)?;
                    let mut s = SplitState {
                        t: 0.0,
                        step: 0,
                        y: SpectralField::constant(grid, Complex64::new(1.0, 0.0)),
                        ou: OUState::zero(grid),
                        c,
                    };
                    for _ in 0..(spec.t_end / spec.h).round() as u64 {
                        st.step_exact(&mut s, seed, r)?;
                    }
                    Ok(s.solution())
                })
                .collect::<Result<_>>()?;
            (0..spec.ladder.len())
                .map(|i| {
                    let fine = finals[i + 1].grid;
                    let d = finals[i].resize(fine).sub(&finals[i + 1])?;
                    besov_norm(&d, &BesovParams::holder(-spec.alpha), &DyadicPartition::for_band(fine.n))
                })
                .collect()
        })
        .collect();
    let per: Vec<Vec<f64>> = per.into_iter().collect::<Result<_>>()?;
    Ok(spec
        .ladder
        .iter()
        .enumerate()
        .map(|(i, &n)| SolutionRung {
            n,
            median: median(&per.iter().map(|v| v[i]).collect::<Vec<_>>()),
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RenormLadderRow {
    pub renormalized: bool,
    pub n: usize,
    /// `Re u_{(0,0)}(T)` over replicas.
    pub mean: Estimate,
    /// Paired difference against the first rung.
    pub shift: Estimate,
}

/// Direct scheme from `u₀ = u0·e_0` with coupled noise across the ladder,
/// once with `c_n` and once with `c = 0`.
pub fn renorm_ladder(spec: &RenormLadderSpec, params: &PhysParams, seed: u64) -> Result<Vec<RenormLadderRow>> {
    let mut rows = Vec::new();
    for renormalized in [true, false] {
        let per: Vec<Result<Vec<f64>>> = (0..spec.replicas as u64)
            .into_par_iter()
            .map(|r| {
                spec.ladder
                    .iter()
                    .enumerate()
                    .map(|(i, &n)| {
                        let points = spec.points.get(i).copied().unwrap_or(4 * n + 4);
                        let grid = Grid::new(n, points)?;
                        let c = if renormalized { renorm_constant(n, params.mu)?.value } else { 0.0 };
                        let st = GalerkinStepper::new(grid, *params, spec.h, c, 0.5)?;
                        let mut u = SpectralField::constant(grid, Complex64::new(spec.u0, 0.0));
                        for k in 0..(spec.t_end / spec.h).round() as u64 {
                            let dw = NoiseIncrement::for_step(grid, spec.h, seed, r, k);
                            st.step_exact_noise(&mut u, &dw, k as f64 * spec.h)?;
                        }
                        Ok(u.get((0, 0)).re)
                    })
                    .collect()
            })
            .collect();
        let per: Vec<Vec<f64>> = per.into_iter().collect::<Result<_>>()?;
        for (i, &n) in spec.ladder.iter().enumerate() {
            let xs: Vec<f64> = per.iter().map(|v| v[i]).collect();
            let d: Vec<f64> = per.iter().map(|v| v[i] - v[0]).collect();
            rows.push(RenormLadderRow {
                renormalized,
                n,
                mean: Estimate::from_samples(&xs),
                shift: Estimate::from_samples(&d),
            });
        }
    }
    Ok(rows)
}

/// Verdicts for a renormalization ladder: with `c = 0` the shifts are
/// monotone and the last exceeds `3σ`; with `c_n` every shift is within `3σ`.
pub fn renorm_ladder_verdict(rows: &[RenormLadderRow]) -> (bool, bool) {
    let pick = |on: bool| rows.iter().filter(|r| r.renormalized == on).collect::<Vec<_>>();
    let off = pick(false);
    let on = pick(true);
    let shifts: Vec<f64> = off.iter().map(|r| r.shift.mean).collect();
    let monotone = shifts.windows(2).all(|w| w[1] > w[0]) || shifts.windows(2).all(|w| w[1] < w[0]);
    let last = off.last().map(|r| r.shift.mean.abs() > 3.0 * r.shift.stderr).unwrap_or(false);
    let stable = on.iter().skip(1).all(|r| r.shift.mean.abs() <= 3.0 * r.shift.stderr);
    (monotone && last, stable)
}

fn convergence_exp(m: &ExperimentManifest, w: &mut Writer) -> Result<RunOutcome> {
    let spec = &m.config.convergence;
    let params = m.config.solver.params()?;
    let mut out = RunOutcome::default();
    let has = |s: &str| spec.sections.iter().any(|x| x == s);
    let mut report = serde_json::Map::new();
    if has("wick") {
        let rungs = wick_ladder(&spec.wick, params.mu, m.seed)?;
        let mut t = Table::new(&["n", "k", "l", "median_sup", "mean_sup"]);
        for r in &rungs {
            t.push(vec![r.n.to_string(), r.k.to_string(), r.l.to_string(), num(r.median_sup), num(r.mean_sup)]);
        }
        w.csv("wick_ladder.csv", &t)?;
        for (k, l) in [(1, 1), (2, 1)] {
            let med: Vec<f64> = rungs.iter().filter(|r| r.k == k && r.l == l).map(|r| r.median_sup).collect();
            out.check(
                format!("convergence: wick ({k},{l}) rung medians strictly decreasing {med:?}"),
                med.windows(2).all(|x| x[1] < x[0]),
            );
        }
        report.insert("wick".into(), serde_json::to_value(&rungs).expect("json"));
    }
    if has("timestep") {
        let rows = timestep_table(&spec.timestep, &params, m.seed)?;
        let mut t = Table::new(&["scheme", "h", "error", "ratio"]);
        for r in &rows {
            t.push(vec![r.scheme.clone(), num(r.h), num(r.error), num(r.ratio)]);
        }
        w.csv("timestep.csv", &t)?;
        for r in rows.iter().filter(|r| r.scheme == "split_exp_euler" && r.ratio.is_finite()) {
            out.check(
                format!("convergence: split error ratio at h={} is {:.3}", r.h, r.ratio),
                (1.5..=2.5).contains(&r.ratio),
            );
        }
        report.insert("timestep".into(), serde_json::to_value(&rows).expect("json"));
    }
    if has("solution") {
        let rungs = solution_ladder(&spec.solution, &params, m.seed)?;
        let mut t = Table::new(&["n", "median"]);
        for r in &rungs {
            t.push(vec![r.n.to_string(), num(r.median)]);
        }
        w.csv("solution_ladder.csv", &t)?;
        let med: Vec<f64> = rungs.iter().map(|r| r.median).collect();
        out.check(
            format!("convergence: solution rung medians decreasing {med:?}"),
            med.windows(2).all(|x| x[1] < x[0]),
        );
        report.insert("solution".into(), serde_json::to_value(&rungs).expect("json"));
    }
    if has("renorm") {
        let rows = renorm_ladder(&spec.renorm, &params, m.seed)?;
        let mut t = Table::new(&["renormalized", "n", "mean", "stderr", "shift", "shift_stderr"]);
        for r in &rows {
            t.push(vec![
                r.renormalized.to_string(),
                r.n.to_string(),
                num(r.mean.mean),
                num(r.mean.stderr),
                num(r.shift.mean),
                num(r.shift.stderr),
            ]);
        }
        w.csv("renorm_ladder.csv", &t)?;
        let (drift, stable) = renorm_ladder_verdict(&rows);
        out.check("convergence: c = 0 statistic drifts with n", drift);
        out.check("convergence: c = c_n statistic stable in n", stable);
        report.insert("renorm".into(), serde_json::to_value(&rows).expect("json"));
    }
    w.json("convergence.json", &report)?;
    Ok(out)
}

// ------------------------------------------------------------ coming-down

fn coming_down_exp(m: &ExperimentManifest, w: &mut Writer) -> Result<RunOutcome> {
    let spec = &m.config.coming_down;
    let rows: Vec<ComingDownRow> = solver::coming_down_experiment(
        &spec.amplitudes,
        spec.t0,
        spec.replicas,
        spec.alpha,
        spec.p_moment,
        &m.config.solver,
    )?;
    let mut t = Table::new(&["amplitude", "median_norm", "p_mean_norm", "median_sup_lp", "blowups", "replicas"]);
    for r in &rows {
        t.push(vec![
            num(r.amplitude),
            num(r.median_norm),
            num(r.p_mean_norm),
            num(r.median_sup_lp),
            r.blowups.to_string(),
            r.replicas.to_string(),
        ]);
    }
    w.csv("coming_down.csv", &t)?;
    w.json("coming_down.json", &rows)?;
    let (lo, hi) = rows
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.median_norm), hi.max(r.median_norm)));
    let blowups: usize = rows.iter().map(|r| r.blowups).sum();
    let mut out = RunOutcome::default();
    out.check(format!("coming-down: median ratio {:.3}", hi / lo), hi / lo <= spec.max_ratio);
    out.check(format!("coming-down: {blowups} blow-ups"), blowups == 0);
    Ok(out)
}

// --------------------------------------------------------------- bel-check

fn bel_check_exp(m: &ExperimentManifest, w: &mut Writer) -> Result<RunOutcome> {
    let spec = &m.config.bel;
    let (v0, h) = spec.fields()?;
    let phi = spec.observable()?;
    let rep: BELReport = bel::bel_estimator(phi.as_ref(), &v0, &h, &spec.run)?;
    w.json("bel_check.json", &rep)?;
    let mut out = RunOutcome::default();
    out.check(
        format!(
            "bel-check: lhs {:.6} ± {:.6}, rhs {:.6} ± {:.6}, z = {:.3}",
            rep.lhs.mean,
            rep.lhs.stderr,
            rep.rhs.mean,
            rep.rhs.stderr,
            rep.z_score()
        ),
        rep.z_score() <= spec.max_z,
    );
    out.check(
        format!("bel-check: discarded fraction {:.5}", rep.discarded_fraction),
        !rep.unreliable,
    );
    Ok(out)
}

// ----------------------------------------------------------------- selftest

/// Fast invariant suite: Hermite identities, partition of unity, dealiasing,
/// OU semigroup property and the renormalization slope.
pub fn selftest_checks(seed: u64) -> Result<Vec<(String, bool)>> {
    use crate::wick::Hermite;
    let mut checks = Vec::new();
    let mut r = rng::stream(seed, 0, 0, purpose::AUX);
    let herm = Hermite::new(10);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let z = rng::complex_normal(&mut r, 2.0);
        let c = 0.1 + rng::standard_normal(&mut r).abs();
        for k in 1..5 {
            for l in 0..5 {
                // H_{k+1,l} = z H_{k,l} − l c H_{k,l−1}.
                let lhs = herm.eval(k + 1, l, z, c)?;
                let prev = if l > 0 { herm.eval(k, l - 1, z, c)? } else { Complex64::new(0.0, 0.0) };
                let rhs = z * herm.eval(k, l, z, c)? - prev * (l as f64 * c);
                worst = worst.max((lhs - rhs).norm() / (1.0 + lhs.norm()));
            }
        }
    }
    checks.push((format!("hermite recursion, max rel err {worst:.2e}"), worst < 1e-12));

    let grid = Grid::smooth(12);
    let part = DyadicPartition::for_band(12);
    let f = SpectralField::random(grid, 12, 0.5, &mut r);
    let mut sum = SpectralField::zeros(grid);
    for k in part.blocks() {
        sum = sum.add(&crate::dyadic::lp_block(&f, k, &part)?)?;
    }
    let err = sum.sub(&f)?.max_coeff();
    checks.push((format!("partition of unity, max err {err:.2e}"), err < 1e-12));

    let g8 = Grid::smooth(6);
    let u = SpectralField::random(g8, 6, 0.5, &mut r);
    let fast = crate::spectral::dealiased_cubic(&u)?;
    let mut worst: f64 = 0.0;
    for (i, m) in g8.modes() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (_, a) in g8.modes() {
            for (_, b) in g8.modes() {
                let c = (m.0 - a.0 - b.0, m.1 - a.1 - b.1);
                if crate::spectral::in_ball(6, c) {
                    acc += u.get(a) * u.get(b) * u.get((-c.0, -c.1)).conj();
                }
            }
        }
        worst = worst.max((acc - fast.coeffs[i]).norm());
    }
    checks.push((format!("dealiased cubic vs convolution, max err {worst:.2e}"), worst < 1e-12));

    let g = Grid::smooth(6);
    let state = OUState::stationary(g, 1.0, &mut r);
    let z = crate::spectral::semigroup_apply(&state.z, 0.2, &crate::spectral::LinearSymbol::a(1.0))?;
    let twice = crate::spectral::semigroup_apply(
        &crate::spectral::semigroup_apply(&state.z, 0.1, &crate::spectral::LinearSymbol::a(1.0))?,
        0.1,
        &crate::spectral::LinearSymbol::a(1.0),
    )?;
    let err = z.sub(&twice)?.max_coeff();
    checks.push((format!("OU semigroup property, max err {err:.2e}"), err < 1e-14));

    let (_, fits) = renorm_scan(&RenormScanSpec {
        mu: vec![1.0],
        ..RenormScanSpec::default()
    })?;
    checks.push((
        format!("renormalization slope rel err {:.3}", fits[0].relative_error),
        fits[0].relative_error <= 0.1,
    ));
    Ok(checks)
}

fn selftest_exp(m: &ExperimentManifest, w: &mut Writer) -> Result<RunOutcome> {
    let checks = selftest_checks(m.seed)?;
    let mut t = Table::new(&["check", "passed"]);
    for (name, ok) in &checks {
        t.push(vec![format!("\"{name}\""), ok.to_string()]);
    }
    w.csv("selftest.csv", &t)?;
    Ok(RunOutcome {
        checks,
        ..RunOutcome::default()
    })
}

/// `RenormConstant` with an optional override, as used by the solver.
pub fn effective_constant(cfg: &SolverConfig) -> Result<RenormConstant> {
    let c = renorm_constant(cfg.n, cfg.mu)?;
    Ok(match cfg.c_override {
        Some(v) => c.with_value(v),
        None => c,
    })
}

/// `sup_k` scheme gap for each ratio, averaged over replicas.
pub fn scheme_gap_table(
    n: usize,
    params: &PhysParams,
    h_base: f64,
    ratios: &[u64],
    t_end: f64,
    replicas: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let grid = Grid::with_default_points(n);
    let u0 = SpectralField::constant(grid, Complex64::new(1.0, 0.0));
    let per: Vec<Result<Vec<f64>>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let path = BrownianPath {
                grid,
                h_base,
                seed,
                replica: r,
            };
            ratios.iter().map(|&k| scheme_gap(&u0, params, &path, k, t_end)).collect()
        })
        .collect();
    let per: Vec<Vec<f64>> = per.into_iter().collect::<Result<_>>()?;
    Ok(ratios
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let xs: Vec<f64> = per.iter().map(|v| v[i]).collect();
            (h_base * k as f64, Estimate::from_samples(&xs).mean)
        })
        .collect())
}
