//! File-based experiment steps: generate datasets, train models, evaluate.
//!
//! An [`ExperimentSpec`] names a scenario, a list of SNRs, a label scheme and
//! a set of detectors. Each `(scenario, snr, scheme)` triple is a cell with
//! its own directory under the output root:
//!
//! ```text
//! <out>/<scenario>_<snr>db_<scheme>/
//!     train.csv  train.meta.json  test.csv  test.meta.json
//!     nn.json  nn-train.csv  rf.json  rf-trees.csv
//!     report-<det>.json  confusion-<det>.csv  confusion-<det>-counts.csv
//!     roc-<det>.csv  roc-<det>.json
//!     spec-gen.json  spec-train.json  spec-eval.json
//! ```
//!
//! The `spec-<step>.json` records hold the full spec and seeds behind every
//! other file in the directory.
//!
//! Specs come from a plain `key = value` file and can be overridden key by key.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{preamble_symbols, Scenario, ScenarioConfig};
use crate::correlator::{self, CorrelatorError, RocPoint, DEFAULT_SWEEP_POINTS};
use crate::dataset::{self, Dataset, DatasetError, FeatureVector, LabelScheme};
use crate::exec::Exec;
use crate::forest::{self, ForestConfig, ForestError, ForestIoError, ForestModel};
use crate::metrics::{EvalReport, MetricsError, ReportMeta};
use crate::mlp::{self, MlpError, MlpModel, TrainConfig};
use crate::rng::{stream, stream_seed};

const NN_INIT_STREAM: u64 = 0x01;
const NN_TRAIN_STREAM: u64 = 0x02;
const RF_STREAM: u64 = 0x03;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error("missing dataset {0} (run `gen` first)")]
    MissingDataset(PathBuf),
    #[error("missing model {0} (run `train` first)")]
    MissingModel(PathBuf),
    #[error("model was trained on the {model} scheme but the test set uses {data}")]
    SchemeMismatch {
        model: LabelScheme,
        data: LabelScheme,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    ForestIo(#[from] ForestIoError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Correlator(#[from] CorrelatorError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detector {
    Corr,
    Nn,
    Rf,
}

impl Detector {
    pub fn as_str(self) -> &'static str {
        match self {
            Detector::Corr => "corr",
            Detector::Nn => "nn",
            Detector::Rf => "rf",
        }
    }
}

impl std::str::FromStr for Detector {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "corr" | "correlation" => Ok(Detector::Corr),
            "nn" => Ok(Detector::Nn),
            "rf" => Ok(Detector::Rf),
            other => Err(PipelineError::InvalidSpec(format!(
                "unknown detector `{other}` (expected corr, nn or rf)"
            ))),
        }
    }
}

impl std::fmt::Display for Detector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub snrs: Vec<f64>,
    pub scheme: LabelScheme,
    pub detectors: Vec<Detector>,
    pub seed_train: u64,
    pub seed_test: u64,
    pub size: usize,
    pub out: PathBuf,
    pub nn: TrainConfig,
    pub rf: ForestConfig,
}

pub const DEFAULT_SEED_TRAIN: u64 = 20_200_001;
pub const DEFAULT_SEED_TEST: u64 = 20_200_002;
pub const DEFAULT_SIZE: usize = 10_000;

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            scenario: Scenario::Awgn,
            snrs: vec![3.0],
            scheme: LabelScheme::Binary,
            detectors: vec![Detector::Corr, Detector::Nn, Detector::Rf],
            seed_train: DEFAULT_SEED_TRAIN,
            seed_test: DEFAULT_SEED_TEST,
            size: DEFAULT_SIZE,
            out: PathBuf::from("runs"),
            nn: TrainConfig::default(),
            rf: ForestConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, PipelineError>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| PipelineError::InvalidSpec(format!("{key} = {value}: {e}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, PipelineError>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl ExperimentSpec {
    /// Sets one field from its textual form. Keys match the CLI flags.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        let key = key.trim().replace('-', "_");
        match key.as_str() {
            "scenario" => self.scenario = parse(&key, value)?,
            "snr" | "snr_db" => self.snrs = parse_list(&key, value)?,
            "scheme" => self.scheme = parse(&key, value)?,
            "detector" | "detectors" => self.detectors = parse_list(&key, value)?,
            "seed_train" => self.seed_train = parse(&key, value)?,
            "seed_test" => self.seed_test = parse(&key, value)?,
            "size" => self.size = parse(&key, value)?,
            "out" => self.out = PathBuf::from(value.trim()),
            "nn_epochs" => self.nn.epochs = parse(&key, value)?,
            "nn_learning_rate" => self.nn.learning_rate = parse(&key, value)?,
            "nn_batch_size" => self.nn.batch_size = parse(&key, value)?,
            "nn_validation_fraction" => self.nn.validation_fraction = parse(&key, value)?,
            "nn_patience" => {
                self.nn.patience = match value.trim() {
                    "none" | "off" => None,
                    v => Some(parse(&key, v)?),
                }
            }
            "rf_trees" => self.rf.num_trees = parse(&key, value)?,
            "rf_features_per_split" => self.rf.features_per_split = parse(&key, value)?,
            "rf_min_ig" => self.rf.min_ig = parse(&key, value)?,
            other => return Err(PipelineError::InvalidSpec(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_config(&mut self, text: &str) -> Result<(), PipelineError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                PipelineError::InvalidSpec(format!("line {}: expected `key = value`", n + 1))
            })?;
            self.apply(key, value)?;
        }
        Ok(())
    }

    pub fn from_config_file(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut spec = Self::default();
        spec.apply_config(&text)?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.size == 0 {
            return Err(PipelineError::InvalidSpec("size must be positive".into()));
        }
        if self.seed_train == self.seed_test {
            return Err(PipelineError::InvalidSpec(
                "train and test seeds must differ".into(),
            ));
        }
        if self.snrs.is_empty() || self.snrs.iter().any(|s| !s.is_finite()) {
            return Err(PipelineError::InvalidSpec(
                "need at least one finite SNR".into(),
            ));
        }
        if self.detectors.is_empty() {
            return Err(PipelineError::InvalidSpec(
                "need at least one detector".into(),
            ));
        }
        if !self.scheme.supports(self.scenario) {
            return Err(PipelineError::InvalidSpec(format!(
                "scheme {} is not defined for the {} scenario",
                self.scheme, self.scenario
            )));
        }
        self.nn.validate()?;
        Ok(())
    }

    pub fn cells(&self) -> Vec<Cell> {
        self.snrs
            .iter()
            .map(|&snr_db| Cell {
                scenario: self.scenario,
                snr_db,
                scheme: self.scheme,
            })
            .collect()
    }

    fn nn_config(&self) -> TrainConfig {
        TrainConfig {
            seed: stream_seed(self.seed_train, NN_TRAIN_STREAM),
            ..self.nn.clone()
        }
    }

    fn rf_config(&self) -> ForestConfig {
        ForestConfig {
            seed: stream_seed(self.seed_train, RF_STREAM),
            ..self.rf.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub scenario: Scenario,
    pub snr_db: f64,
    pub scheme: LabelScheme,
}

impl Cell {
    pub fn name(&self) -> String {
        format!("{}_{}db_{}", self.scenario, self.snr_db, self.scheme)
    }

    pub fn dir(&self, root: &Path) -> PathBuf {
        root.join(self.name())
    }
}

fn create_dir(path: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, &text)
}

#[derive(Serialize)]
struct StepRecord<'a> {
    step: &'a str,
    version: &'a str,
    cell: &'a Cell,
    spec: &'a ExperimentSpec,
}

/// Audit record for one step in one cell.
fn write_step_record(
    dir: &Path,
    step: &str,
    cell: &Cell,
    spec: &ExperimentSpec,
) -> Result<(), PipelineError> {
    write_json(
        &dir.join(format!("spec-{step}.json")),
        &StepRecord {
            step,
            version: env!("CARGO_PKG_VERSION"),
            cell,
            spec,
        },
    )
}

fn read_split(cell: &Cell, root: &Path, split: &str) -> Result<Dataset, PipelineError> {
    let path = cell.dir(root).join(format!("{split}.csv"));
    if !path.exists() {
        return Err(PipelineError::MissingDataset(path));
    }
    Ok(dataset::read_dataset(&path)?)
}

/// Writes train and test sets for every cell; returns the files written.
pub fn cmd_gen(spec: &ExperimentSpec) -> Result<Vec<PathBuf>, PipelineError> {
    spec.validate()?;
    let mut written = Vec::new();
    for cell in spec.cells() {
        let dir = cell.dir(&spec.out);
        create_dir(&dir)?;
        write_step_record(&dir, "gen", &cell, spec)?;
        for (split, seed) in [("train", spec.seed_train), ("test", spec.seed_test)] {
            let cfg = ScenarioConfig::new(cell.scenario, cell.snr_db, seed);
            let ds = dataset::build_dataset(&cfg, cell.scheme, spec.size)?;
            let path = dir.join(format!("{split}.csv"));
            dataset::write_dataset(&ds, &path)?;
            written.push(dataset::meta_path(&path));
            written.push(path);
        }
    }
    Ok(written)
}

/// Summary line per trained detector.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainNote {
    pub cell: Cell,
    pub detector: Detector,
    pub message: String,
}

#[derive(Debug, Serialize)]
struct NnModelProvenance<'a> {
    cell: &'a Cell,
    seed_train: u64,
    train_size: usize,
    best_epoch: usize,
    epochs_run: usize,
}

pub fn cmd_train(spec: &ExperimentSpec) -> Result<Vec<TrainNote>, PipelineError> {
    spec.validate()?;
    let mut notes = Vec::new();
    for cell in spec.cells() {
        let dir = cell.dir(&spec.out);
        let needs_data = spec.detectors.iter().any(|d| *d != Detector::Corr);
        let train_set = if needs_data {
            Some(read_split(&cell, &spec.out, "train")?)
        } else {
            None
        };
        create_dir(&dir)?;
        write_step_record(&dir, "train", &cell, spec)?;
        for &detector in &spec.detectors {
            let message = match (detector, &train_set) {
                (Detector::Corr, _) => "correlation needs no training".to_string(),
                (Detector::Nn, Some(ds)) => {
                    let init = mlp::init_model(
                        ds.num_classes(),
                        &mut stream(spec.seed_train, NN_INIT_STREAM),
                    );
                    let out = mlp::train(init, ds, &spec.nn_config())?;
                    out.model.save(&dir.join("nn.json"))?;
                    write_json(
                        &dir.join("nn.provenance.json"),
                        &NnModelProvenance {
                            cell: &cell,
                            seed_train: spec.seed_train,
                            train_size: ds.len(),
                            best_epoch: out.best_epoch,
                            epochs_run: out.log.len(),
                        },
                    )?;
                    let mut log = String::from("epoch,train_loss,val_accuracy\n");
                    for e in &out.log {
                        let acc = e.val_accuracy.map_or(String::new(), |a| format!("{a:.6}"));
                        let _ = writeln!(log, "{},{:.8},{}", e.epoch, e.train_loss, acc);
                    }
                    write_file(&dir.join("nn-train.csv"), &log)?;
                    format!(
                        "layers {:?}, {} epochs, best epoch {}",
                        out.model.layer_sizes,
                        out.log.len(),
                        out.best_epoch
                    )
                }
                (Detector::Rf, Some(ds)) => {
                    let model = forest::train_forest(ds, &spec.rf_config())?;
                    model.save(&dir.join("rf.json"))?;
                    let stats = model.stats();
                    let mut log = String::from("tree,depth,leaves\n");
                    for s in &stats {
                        let _ = writeln!(log, "{},{},{}", s.tree, s.depth, s.leaves);
                    }
                    write_file(&dir.join("rf-trees.csv"), &log)?;
                    let mean_depth =
                        stats.iter().map(|s| s.depth as f64).sum::<f64>() / stats.len() as f64;
                    format!("{} trees, mean depth {mean_depth:.1}", model.trees.len())
                }
                _ => unreachable!("training data loaded for learned detectors"),
            };
            notes.push(TrainNote {
                cell,
                detector,
                message,
            });
        }
    }
    Ok(notes)
}

/// Scores ROC written next to a detector's report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocReport {
    pub meta: ReportMeta,
    /// What the score is: correlation output, preamble probability or vote share.
    pub score: String,
    pub positives: usize,
    pub negatives: usize,
    pub points: Vec<RocPoint>,
}

/// Everything computed for one detector in one cell.
#[derive(Debug, Clone)]
pub struct DetectorEval {
    pub cell: Cell,
    pub detector: Detector,
    /// Classification report; `None` for correlation.
    pub report: Option<EvalReport>,
    /// Operating points at every distinct score.
    pub roc: Vec<RocPoint>,
}

enum Model {
    Nn(Box<MlpModel>),
    Rf(Box<ForestModel>),
}

fn load_model(cell: &Cell, root: &Path, detector: Detector) -> Result<Model, PipelineError> {
    let path = cell.dir(root).join(format!("{detector}.json"));
    if !path.exists() {
        return Err(PipelineError::MissingModel(path));
    }
    Ok(match detector {
        Detector::Nn => Model::Nn(Box::new(MlpModel::load(&path)?)),
        Detector::Rf => Model::Rf(Box::new(ForestModel::load(&path)?)),
        Detector::Corr => unreachable!("correlation has no model file"),
    })
}

/// Positive flags for ROC curves: any packet-aligned window.
fn aligned(test: &Dataset) -> Vec<bool> {
    test.samples
        .iter()
        .map(|s| s.label.is_aligned_preamble())
        .collect()
}

pub fn cmd_eval(spec: &ExperimentSpec) -> Result<Vec<DetectorEval>, PipelineError> {
    spec.validate()?;
    let exec = Exec::default();
    let mut evals = Vec::new();
    for cell in spec.cells() {
        let dir = cell.dir(&spec.out);
        let test = read_split(&cell, &spec.out, "test")?;
        write_step_record(&dir, "eval", &cell, spec)?;
        let positives = aligned(&test);
        let features: Vec<FeatureVector> = test.features();
        for &detector in &spec.detectors {
            let meta = ReportMeta {
                detector: detector.to_string(),
                scenario: cell.scenario.to_string(),
                scheme: test.scheme.to_string(),
                snr_db: cell.snr_db,
                train_seed: (detector != Detector::Corr).then_some(spec.seed_train),
                test_seed: test.cfg.seed,
                model_seed: match detector {
                    Detector::Corr => None,
                    Detector::Nn => Some(spec.nn_config().seed),
                    Detector::Rf => Some(spec.rf_config().seed),
                },
                test_size: test.len(),
            };
            let (report, scores, score_name) = match detector {
                Detector::Corr => {
                    let template = preamble_symbols();
                    let s = correlator::scores(&test, &template);
                    (None, s, "correlation")
                }
                Detector::Nn | Detector::Rf => {
                    let model = load_model(&cell, &spec.out, detector)?;
                    let model_scheme = match &model {
                        Model::Nn(m) => m.scheme.unwrap_or(LabelScheme::Binary),
                        Model::Rf(m) => m.scheme,
                    };
                    if model_scheme != test.scheme {
                        return Err(PipelineError::SchemeMismatch {
                            model: model_scheme,
                            data: test.scheme,
                        });
                    }
                    let p = LabelScheme::preamble_class();
                    let (predictions, scores, name) = match &model {
                        Model::Nn(m) => {
                            let probs = m.probabilities_all(exec, &features)?;
                            let preds = probs
                                .rows()
                                .into_iter()
                                .map(|r| mlp::argmax(r.as_slice().expect("standard layout")))
                                .collect::<Vec<_>>();
                            (preds, probs.column(p).to_vec(), "preamble probability")
                        }
                        Model::Rf(m) => (
                            m.predict_all(exec, &features),
                            m.vote_fractions(exec, &features, p),
                            "preamble vote share",
                        ),
                    };
                    let class_names = test
                        .scheme
                        .classes()
                        .iter()
                        .map(|l| l.to_string())
                        .collect();
                    let report = EvalReport::build(
                        meta.clone(),
                        &predictions,
                        &test.classes(),
                        class_names,
                        p,
                    )?;
                    (Some(report), scores, name)
                }
            };
            let roc = correlator::roc_exact(&scores, &positives)?;
            let sweep = correlator::roc_from_scores(
                exec,
                &scores,
                &positives,
                &correlator::spanning_thresholds(&scores, DEFAULT_SWEEP_POINTS),
            )?;
            let mut csv = Vec::new();
            correlator::write_roc_csv(&sweep, &mut csv)
                .map_err(|e| PipelineError::InvalidSpec(e.to_string()))?;
            let roc_path = dir.join(format!("roc-{detector}.csv"));
            fs::write(&roc_path, csv).map_err(io_err(&roc_path))?;
            let n_pos = positives.iter().filter(|&&p| p).count();
            write_json(
                &dir.join(format!("roc-{detector}.json")),
                &RocReport {
                    meta: meta.clone(),
                    score: score_name.to_string(),
                    positives: n_pos,
                    negatives: positives.len() - n_pos,
                    points: sweep,
                },
            )?;
            if let Some(r) = &report {
                write_json(&dir.join(format!("report-{detector}.json")), r)?;
                let names: Vec<&str> = r.class_names.iter().map(String::as_str).collect();
                write_file(
                    &dir.join(format!("confusion-{detector}.csv")),
                    &r.confusion.to_csv(&names),
                )?;
                write_file(
                    &dir.join(format!("confusion-{detector}-counts.csv")),
                    &r.confusion.counts_csv(&names),
                )?;
            }
            evals.push(DetectorEval {
                cell,
                detector,
                report,
                roc,
            });
        }
    }
    Ok(evals)
}

/// Runs gen, train and eval in sequence.
pub fn run_all(spec: &ExperimentSpec) -> Result<Vec<DetectorEval>, PipelineError> {
    cmd_gen(spec)?;
    cmd_train(spec)?;
    cmd_eval(spec)
}
