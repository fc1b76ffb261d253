//! Experiment driver behind the `dynembed` binary.
//!
//! A run reads a JSON [`ExperimentConfig`], produces or loads a snapshot
//! sequence, embeds it with one method, evaluates the requested tasks and
//! writes everything plus a `manifest.json` of SHA-256 digests into the
//! output directory. Outputs carry no timestamps, so identical configs give
//! byte-identical directories.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use dynembed::ae::{
    aealign_series, d2v_ae_series, dyngem_series, save_model, static_ae_series, AeConfig, AeError, AeSeriesOutput,
    D2vPredictor,
};
use dynembed::eval::{
    self, export_projection, migration_proximity_stat, node_classification, reconstruction_eval, static_lp_eval,
    static_lp_split, temporal_lp_eval, EvalError, EvalReport, LpMode, Move,
};
use dynembed::graph::{load_snapshots, GraphError};
use dynembed::sbm::{parse_labels_text, parse_migrations_text, DynamicSbmSeries, Migration, SbmError, SbmParams};
use dynembed::series::{load_series, SeriesError};
use dynembed::svd_embed::{
    incremental_svd_series, optimal_svd_series, rerun_svd_series, restart_log_text, SvdEmbedError,
};
use dynembed::{EmbeddingSeries, Mat, SeededRng, SnapshotSequence};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Caps the worker threads used for metric computation.
pub const THREADS_ENV: &str = "DYNEMBED_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Sbm(#[from] SbmError),
    #[error(transparent)]
    Svd(#[from] SvdEmbedError),
    #[error(transparent)]
    Ae(#[from] AeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error("{path}: {msg}")]
    Input { path: PathBuf, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

fn config_err(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Optsvd,
    Incsvd,
    Rerunsvd,
    AeStatic,
    Aealign,
    Dyngem,
    D2vAe,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Optsvd => "optsvd",
            Method::Incsvd => "incsvd",
            Method::Rerunsvd => "rerunsvd",
            Method::AeStatic => "ae_static",
            Method::Aealign => "aealign",
            Method::Dyngem => "dyngem",
            Method::D2vAe => "d2v_ae",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        serde_json::from_value(serde_json::Value::String(tag.to_string())).ok()
    }

    fn is_svd(self) -> bool {
        matches!(self, Method::Optsvd | Method::Incsvd | Method::Rerunsvd)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Sbm(SbmParams),
    File {
        path: PathBuf,
        #[serde(default)]
        labels: Option<PathBuf>,
        #[serde(default)]
        migrations: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvdConfig {
    pub d: usize,
    /// Restart tolerance for `rerunsvd`; `null` means never restart.
    pub theta: Option<f64>,
}

impl Default for SvdConfig {
    fn default() -> Self {
        Self { d: 128, theta: Some(0.1) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankingTask {
    #[serde(default = "default_k_grid")]
    pub k_grid: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticLpTask {
    #[serde(default = "default_k_grid")]
    pub k_grid: Vec<usize>,
    #[serde(default = "default_hide")]
    pub hide_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemporalLpTask {
    #[serde(default = "default_k_grid")]
    pub k_grid: Vec<usize>,
    #[serde(default = "default_modes")]
    pub modes: Vec<LpMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassificationTask {
    #[serde(default = "default_train_frac")]
    pub train_frac: f64,
}

fn default_k_grid() -> Vec<usize> {
    vec![10, 100, 1000]
}
fn default_hide() -> f64 {
    0.2
}
fn default_modes() -> Vec<LpMode> {
    vec![LpMode::All, LpMode::New]
}
fn default_train_frac() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TasksConfig {
    pub reconstruction: Option<RankingTask>,
    pub static_lp: Option<StaticLpTask>,
    pub temporal_lp: Option<TemporalLpTask>,
    pub classification: Option<ClassificationTask>,
    pub migration_proximity: bool,
    pub projection: bool,
}

impl Default for TasksConfig {
    fn default() -> Self {
        Self {
            reconstruction: Some(RankingTask { k_grid: default_k_grid() }),
            static_lp: None,
            temporal_lp: None,
            classification: None,
            migration_proximity: false,
            projection: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub method: Method,
    #[serde(default)]
    pub svd: SvdConfig,
    #[serde(default)]
    pub ae: AeConfig,
    #[serde(default)]
    pub tasks: TasksConfig,
    pub output_dir: PathBuf,
    /// When set, overrides the generator and autoencoder seeds.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(&path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    /// Propagates the top-level seed and checks every module invariant.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        match self.seed {
            Some(seed) => {
                self.ae.seed = seed;
                if let DataSource::Sbm(p) = &mut self.data {
                    p.seed = seed;
                }
            }
            None => self.seed = Some(self.ae.seed),
        }
        if let DataSource::Sbm(p) = &self.data {
            p.validate().map_err(|e| config_err("data.sbm", e))?;
        }
        if self.method.is_svd() {
            if self.svd.d == 0 {
                return Err(config_err("svd.d", "must be >= 1"));
            }
            if let Some(theta) = self.svd.theta {
                if !(theta > 0.0) {
                    return Err(config_err("svd.theta", "must be > 0"));
                }
            }
        } else {
            self.ae.validate().map_err(|e| config_err("ae", e))?;
        }
        let t = &self.tasks;
        if let Some(s) = &t.static_lp {
            if !(s.hide_fraction > 0.0 && s.hide_fraction < 1.0) {
                return Err(config_err("tasks.static_lp.hide_fraction", "must lie in (0,1)"));
            }
        }
        if let Some(c) = &t.classification {
            if !(c.train_frac > 0.0 && c.train_frac < 1.0) {
                return Err(config_err("tasks.classification.train_frac", "must lie in (0,1)"));
            }
        }
        let needs_labels = t.classification.is_some() || t.migration_proximity;
        if let DataSource::File { labels, migrations, .. } = &self.data {
            if needs_labels && labels.is_none() {
                return Err(config_err("data.file.labels", "required by classification/migration tasks"));
            }
            if t.migration_proximity && migrations.is_none() {
                return Err(config_err("data.file.migrations", "required by migration_proximity"));
            }
        }
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Digest of the experiment definition; the output location is left out
    /// so the same experiment written elsewhere keeps its identity.
    pub fn digest(&self) -> String {
        let mut located = self.clone();
        located.output_dir = PathBuf::new();
        sha256_hex(located.canonical_json().as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Snapshot sequence with optional ground truth.
pub struct Dataset {
    pub sequence: SnapshotSequence,
    pub labels: Option<Vec<Vec<usize>>>,
    pub migrations: Option<Vec<Migration>>,
    /// Files this dataset came from, for the manifest.
    pub inputs: Vec<PathBuf>,
    pub generated: Option<DynamicSbmSeries>,
}

impl Dataset {
    fn labels_at(&self, t: usize) -> Option<&[usize]> {
        let labels = self.labels.as_ref()?;
        labels.get(t).or(labels.last()).map(Vec::as_slice)
    }

    /// Moves that happened at or before `t`, keeping each node's first origin
    /// and latest destination.
    fn moves_until(&self, t: usize) -> Vec<Move> {
        let mut by_node: std::collections::BTreeMap<usize, Move> = Default::default();
        for m in self.migrations.iter().flatten().filter(|m| m.t <= t) {
            by_node
                .entry(m.node)
                .and_modify(|e| e.to = m.to)
                .or_insert(Move { node: m.node, from: m.from, to: m.to });
        }
        by_node.into_values().filter(|m| m.from != m.to).collect()
    }
}

fn read_input(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input { path: path.to_path_buf(), msg: e.to_string() })
}

pub fn load_labels(path: &Path, n: usize) -> Result<Vec<Vec<usize>>, CliError> {
    parse_labels_text(&read_input(path)?, n).map_err(|e| CliError::Input { path: path.to_path_buf(), msg: e.to_string() })
}

pub fn load_migrations(path: &Path) -> Result<Vec<Migration>, CliError> {
    parse_migrations_text(&read_input(path)?).map_err(|e| CliError::Input { path: path.to_path_buf(), msg: e.to_string() })
}

pub fn load_dataset(source: &DataSource) -> Result<Dataset, CliError> {
    match source {
        DataSource::Sbm(params) => {
            let s = DynamicSbmSeries::generate(params)?;
            Ok(Dataset {
                sequence: s.sequence.clone(),
                labels: Some(s.labels.clone()),
                migrations: Some(s.migrations.clone()),
                inputs: Vec::new(),
                generated: Some(s),
            })
        }
        DataSource::File { path, labels, migrations } => {
            let sequence = load_snapshots(path)?;
            let mut inputs = vec![path.clone()];
            let labels = labels
                .as_ref()
                .map(|p| {
                    inputs.push(p.clone());
                    load_labels(p, sequence.n())
                })
                .transpose()?;
            let migrations = migrations
                .as_ref()
                .map(|p| {
                    inputs.push(p.clone());
                    load_migrations(p)
                })
                .transpose()?;
            Ok(Dataset { sequence, labels, migrations, inputs, generated: None })
        }
    }
}

/// An embedded sequence together with whatever produces pair scores.
pub enum Embedded {
    Svd { series: EmbeddingSeries, extra: Option<(String, String)> },
    Ae(AeSeriesOutput),
    D2v(AeSeriesOutput, D2vPredictor),
}

impl Embedded {
    pub fn series(&self) -> &EmbeddingSeries {
        match self {
            Embedded::Svd { series, .. } => series,
            Embedded::Ae(out) | Embedded::D2v(out, _) => &out.series,
        }
    }

    /// Pair scores available after snapshot `t`: `Y_src·Y_tgtᵀ` for SVD
    /// methods, the decoder output otherwise. For the lookback model this is
    /// the prediction of snapshot `t + 1`.
    pub fn scores(&self, seq: &SnapshotSequence, t: usize) -> Result<Mat, CliError> {
        match self {
            Embedded::Svd { series, .. } => series
                .get(t)
                .map(|s| s.scores())
                .ok_or_else(|| CliError::Eval(EvalError::TimeOutOfRange(t))),
            Embedded::Ae(out) => Ok(out.reconstruction(seq, t)?),
            Embedded::D2v(_, predictor) => Ok(predictor.predict_next(seq, t)?),
        }
    }
}

pub fn embed(method: Method, seq: &SnapshotSequence, svd: &SvdConfig, ae: &AeConfig) -> Result<Embedded, CliError> {
    let d = svd.d.min(seq.n());
    Ok(match method {
        Method::Optsvd => Embedded::Svd { series: optimal_svd_series(seq, d)?, extra: None },
        Method::Incsvd => {
            let (series, losses) = incremental_svd_series(seq, d)?;
            let text: String = losses
                .iter()
                .enumerate()
                .map(|(t, l)| format!("{t} {}\n", dynembed::numerics::format::fmt_real(*l)))
                .collect();
            Embedded::Svd { series, extra: Some(("losses.txt".into(), text)) }
        }
        Method::Rerunsvd => {
            let (series, log) = rerun_svd_series(seq, d, svd.theta.unwrap_or(f64::INFINITY))?;
            Embedded::Svd { series, extra: Some(("restarts.txt".into(), restart_log_text(&log))) }
        }
        Method::AeStatic => Embedded::Ae(static_ae_series(seq, ae)?),
        Method::Aealign => Embedded::Ae(aealign_series(seq, ae)?),
        Method::Dyngem => Embedded::Ae(dyngem_series(seq, ae)?),
        Method::D2vAe => {
            let (out, predictor) = d2v_ae_series(seq, ae)?;
            Embedded::D2v(out, predictor)
        }
    })
}

/// Files written by a run, relative to the output directory, and the reports.
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub reports: Vec<EvalReport>,
    pub manifest: PathBuf,
}

fn write_file(dir: &Path, name: &str, contents: &str, files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    std::fs::write(dir.join(name), contents)?;
    files.push(PathBuf::from(name));
    Ok(())
}

fn evaluate(cfg: &ExperimentConfig, data: &Dataset, emb: &Embedded) -> Result<Vec<EvalReport>, CliError> {
    let seq = &data.sequence;
    let series = emb.series();
    let method = cfg.method.tag();
    let last = series.last().map(|s| s.t).ok_or_else(|| CliError::Config("method produced no embeddings".into()))?;
    let tasks = &cfg.tasks;
    let mut reports = Vec::new();

    if let Some(task) = &tasks.reconstruction {
        for t in series.times() {
            let g = seq.get(t).expect("embedded snapshot exists");
            if g.edge_count() == 0 {
                let mut r = EvalReport::new("reconstruction", method);
                r.t = Some(t);
                r.empty = true;
                reports.push(r);
                continue;
            }
            let mut r = reconstruction_eval(&emb.scores(seq, t)?, g, &task.k_grid, method)?;
            r.t = Some(t);
            reports.push(r);
        }
    }

    if let Some(task) = &tasks.temporal_lp {
        for t in series.times().into_iter().filter(|&t| t + 1 < seq.len()) {
            let scores = emb.scores(seq, t)?;
            for &mode in &task.modes {
                reports.push(temporal_lp_eval(&scores, seq, t, &task.k_grid, mode, method)?);
            }
        }
    }

    if let Some(task) = &tasks.static_lp {
        // Re-embed with the final snapshot's training graph in place.
        let mut rng = SeededRng::new(cfg.seed().wrapping_add(1));
        let final_graph = seq.get(last).expect("final snapshot");
        let (train, hidden) = static_lp_split(final_graph, task.hide_fraction, &mut rng)?;
        let mut snapshots = seq.snapshots().to_vec();
        snapshots[last] = train.clone();
        let masked = SnapshotSequence::new(snapshots)?;
        let re = embed(cfg.method, &masked, &cfg.svd, &cfg.ae)?;
        let mut r = static_lp_eval(&re.scores(&masked, last)?, &train, &hidden, &task.k_grid, method)?;
        r.t = Some(last);
        reports.push(r);
    }

    if let Some(task) = &tasks.classification {
        let labels = data.labels_at(last).ok_or_else(|| config_err("tasks.classification", "no labels"))?;
        let emb_t = &series.get(last).expect("last step").src;
        let c = node_classification(emb_t, labels, task.train_frac, &mut SeededRng::new(cfg.seed().wrapping_add(2)))?;
        let mut r = EvalReport::new("classification", method);
        r.t = Some(last);
        r.micro_f1 = Some(c.micro_f1);
        r.macro_f1 = Some(c.macro_f1);
        reports.push(r);
    }

    if tasks.migration_proximity {
        let labels = data.labels_at(last).ok_or_else(|| config_err("tasks.migration_proximity", "no labels"))?;
        let mut r = EvalReport::new("migration_proximity", method);
        r.t = Some(last);
        let moves = data.moves_until(last);
        if moves.is_empty() {
            r.empty = true;
        } else {
            r.proximity = Some(migration_proximity_stat(series, labels, &moves, last)?);
        }
        reports.push(r);
    }

    let digest = cfg.digest();
    Ok(reports.into_iter().map(|r| r.with_provenance(cfg.seed(), &digest)).collect())
}

#[derive(Serialize)]
struct ManifestEntry {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a ExperimentConfig,
    config_digest: String,
    inputs: Vec<ManifestEntry>,
    outputs: Vec<ManifestEntry>,
}

fn digest_entries(base: Option<&Path>, paths: &[PathBuf]) -> Result<Vec<ManifestEntry>, CliError> {
    paths
        .iter()
        .map(|p| {
            let full = base.map_or_else(|| p.clone(), |b| b.join(p));
            Ok(ManifestEntry {
                path: p.to_string_lossy().replace('\\', "/"),
                sha256: sha256_hex(&std::fs::read(full)?),
            })
        })
        .collect()
}

/// Full pipeline: data, embedding, evaluation, outputs and manifest.
pub fn run_experiment(cfg: ExperimentConfig) -> Result<RunOutcome, CliError> {
    let cfg = cfg.resolve()?;
    let out = cfg.output_dir.clone();
    std::fs::create_dir_all(&out)?;
    let data = load_dataset(&cfg.data)?;
    log::info!("embedding {} snapshots with {}", data.sequence.len(), cfg.method.tag());
    let emb = embed(cfg.method, &data.sequence, &cfg.svd, &cfg.ae)?;
    let mut files = Vec::new();

    if let Some(s) = &data.generated {
        write_file(&out, "graph.txt", &s.sequence.to_text(), &mut files)?;
        write_file(&out, "labels.txt", &s.labels_text(), &mut files)?;
        write_file(&out, "migrations.txt", &s.migrations_text(), &mut files)?;
    }
    let series = emb.series();
    for p in series.save(&out, "embedding")? {
        files.push(p.strip_prefix(&out).expect("inside output dir").to_path_buf());
    }
    match &emb {
        Embedded::Svd { extra: Some((name, text)), .. } => write_file(&out, name, text, &mut files)?,
        Embedded::Svd { .. } => {}
        Embedded::Ae(o) => {
            for (t, model) in &o.models {
                let (e, d) = (format!("model_t{t}.enc"), format!("model_t{t}.dec"));
                save_model(model, &out.join(&e), &out.join(&d))?;
                files.extend([PathBuf::from(e), PathBuf::from(d)]);
            }
        }
        Embedded::D2v(_, predictor) => {
            save_model(&predictor.params, &out.join("model.enc"), &out.join("model.dec"))?;
            files.extend([PathBuf::from("model.enc"), PathBuf::from("model.dec")]);
        }
    }

    let reports = evaluate(&cfg, &data, &emb)?;
    let json = serde_json::to_string_pretty(&reports).expect("reports serialize") + "\n";
    write_file(&out, "reports.json", &json, &mut files)?;

    if cfg.tasks.projection {
        let n = data.sequence.n();
        for t in series.times() {
            let labels = data.labels_at(t).map_or_else(|| vec![0; n], <[usize]>::to_vec);
            let moved: BTreeSet<usize> = data.moves_until(t).iter().map(|m| m.node).collect();
            let flags: Vec<bool> = (0..n).map(|u| moved.contains(&u)).collect();
            let name = format!("projection_t{t}.txt");
            export_projection(series, t, &labels, &flags, &out.join(&name))?;
            files.push(PathBuf::from(name));
        }
    }

    files.sort();
    let manifest = Manifest {
        tool: "dynembed",
        version: env!("CARGO_PKG_VERSION"),
        config: &cfg,
        config_digest: cfg.digest(),
        inputs: digest_entries(None, &data.inputs)?,
        outputs: digest_entries(Some(&out), &files)?,
    };
    let manifest_path = out.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n")?;
    Ok(RunOutcome { files, reports, manifest: manifest_path })
}

/// Generates an SBM series and writes `graph.txt`, `labels.txt`, `migrations.txt`.
pub fn generate_to(params: &SbmParams, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    params.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let s = DynamicSbmSeries::generate(params)?;
    std::fs::create_dir_all(dir)?;
    let paths = ["graph.txt", "labels.txt", "migrations.txt"].map(|f| dir.join(f));
    s.save(&paths[0], &paths[1], &paths[2])?;
    Ok(paths.to_vec())
}

/// Embeds a snapshot file and writes the series (and method extras) to `dir`.
pub fn embed_to(
    graph: &Path,
    method: Method,
    svd: &SvdConfig,
    ae: &AeConfig,
    dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    if method.is_svd() && svd.d == 0 {
        return Err(config_err("d", "must be >= 1"));
    }
    if !method.is_svd() {
        ae.validate().map_err(|e| config_err("ae", e))?;
    }
    let seq = load_snapshots(graph)?;
    let emb = embed(method, &seq, svd, ae)?;
    std::fs::create_dir_all(dir)?;
    let mut paths = emb.series().save(dir, "embedding")?;
    if let Embedded::Svd { extra: Some((name, text)), .. } = &emb {
        std::fs::write(dir.join(name), text)?;
        paths.push(dir.join(name));
    }
    Ok(paths)
}

/// Reconstruction and next-step link prediction from saved embeddings
/// (scores `Y_src·Y_tgtᵀ`), plus classification when labels are given.
pub fn evaluate_saved(
    graph: &Path,
    embeddings: &Path,
    labels: Option<&Path>,
    k_grid: &[usize],
    seed: u64,
) -> Result<Vec<EvalReport>, CliError> {
    let seq = load_snapshots(graph)?;
    let series = load_series(embeddings, "embedding", "saved")?;
    if series.steps().is_empty() {
        return Err(CliError::Input { path: embeddings.to_path_buf(), msg: "no embedding files".into() });
    }
    let mut reports = Vec::new();
    for step in series.steps() {
        let g = seq.get(step.t).ok_or(EvalError::TimeOutOfRange(step.t))?;
        let scores = step.scores();
        if g.edge_count() > 0 {
            let mut r = reconstruction_eval(&scores, g, k_grid, "saved")?;
            r.t = Some(step.t);
            reports.push(r);
        }
        if step.t + 1 < seq.len() {
            for mode in [LpMode::All, LpMode::New] {
                reports.push(temporal_lp_eval(&scores, &seq, step.t, k_grid, mode, "saved")?);
            }
        }
    }
    if let Some(path) = labels {
        let all = load_labels(path, seq.n())?;
        let last = series.last().expect("non-empty");
        let lab = all.get(last.t).or(all.last()).ok_or_else(|| CliError::Input {
            path: path.to_path_buf(),
            msg: "no labels".into(),
        })?;
        let c = node_classification(&last.src, lab, 0.5, &mut SeededRng::new(seed))?;
        let mut r = EvalReport::new("classification", "saved");
        r.t = Some(last.t);
        r.micro_f1 = Some(c.micro_f1);
        r.macro_f1 = Some(c.macro_f1);
        reports.push(r);
    }
    Ok(reports.into_iter().map(|r| r.with_provenance(seed, "")).collect())
}

/// Writes the 2-D projection of saved embeddings at `t`.
pub fn project_saved(
    embeddings: &Path,
    t: usize,
    labels: Option<&Path>,
    migrations: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let series = load_series(embeddings, "embedding", "saved")?;
    let n = series.steps().first().map(|s| s.src.nrows()).unwrap_or(0);
    let lab = match labels {
        Some(p) => {
            let all = load_labels(p, n)?;
            all.get(t).or(all.last()).cloned().unwrap_or_else(|| vec![0; n])
        }
        None => vec![0; n],
    };
    let moved: BTreeSet<usize> = match migrations {
        Some(p) => load_migrations(p)?.into_iter().filter(|m| m.t <= t).map(|m| m.node).collect(),
        None => BTreeSet::new(),
    };
    let flags: Vec<bool> = (0..n).map(|u| moved.contains(&u)).collect();
    eval::export_projection(&series, t, &lab, &flags, out)?;
    Ok(())
}

/// Reads the thread cap from the environment and sizes the global pool.
pub fn init_thread_pool() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // Fails only if the pool already exists; the first size wins.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}
