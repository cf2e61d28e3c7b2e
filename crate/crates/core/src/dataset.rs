//! Labeled feature vectors extracted from synthesized windows.
//!
//! A feature vector is 16 consecutive received samples `r[l..l+16]` followed
//! by their aggregate power. Each AWGN window contributes the syncword-aligned
//! vector plus 4 uniformly drawn offsets; each interference window the 3
//! aligned vectors plus 12 random offsets. Labels always follow the ground
//! truth of the window, so a random offset that lands on a packet start is a
//! preamble sample.
//!
//! Datasets are stored as CSV (`f0,...,f16,label,window_id,offset`) with a
//! JSON sidecar holding the scenario, seed and label scheme.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{
    synth_window, ChannelError, Scenario, ScenarioConfig, SymbolWindow, PACKET_LEN, PREAMBLE_LEN,
};
use crate::exec::Exec;
use crate::rng::{rng_from_seed, stream_seed};

pub const NUM_FEATURES: usize = PREAMBLE_LEN + 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("offset {offset} out of range for window of {len} samples")]
    OffsetOutOfRange { offset: usize, len: usize },
    #[error("target dataset size must be positive")]
    EmptyTarget,
    #[error("label scheme {scheme} cannot be used with the {scenario} scenario")]
    SchemeMismatch {
        scheme: LabelScheme,
        scenario: Scenario,
    },
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("unknown label scheme `{0}`")]
    UnknownScheme(String),
    #[error("line {line}: label `{label}` is not part of the {scheme} scheme")]
    LabelNotInScheme {
        line: u64,
        label: Label,
        scheme: LabelScheme,
    },
    #[error("line {line}: expected {NUM_FEATURES} features, found {found}")]
    FeatureCount { line: u64, found: usize },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("bad header: expected `{expected}`")]
    BadHeader { expected: String },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; NUM_FEATURES]);

impl FeatureVector {
    /// Builds the vector from exactly 16 samples.
    pub fn from_samples(samples: &[f64]) -> Self {
        assert_eq!(samples.len(), PREAMBLE_LEN);
        let mut values = [0.0; NUM_FEATURES];
        values[..PREAMBLE_LEN].copy_from_slice(samples);
        values[PREAMBLE_LEN] = samples.iter().map(|v| v * v).sum();
        FeatureVector(values)
    }

    pub fn samples(&self) -> &[f64] {
        &self.0[..PREAMBLE_LEN]
    }

    pub fn power(&self) -> f64 {
        self.0[PREAMBLE_LEN]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn extract_features(
    window: &SymbolWindow,
    offset: usize,
) -> Result<FeatureVector, DatasetError> {
    if offset + PREAMBLE_LEN > window.len() {
        return Err(DatasetError::OffsetOutOfRange {
            offset,
            len: window.len(),
        });
    }
    Ok(FeatureVector::from_samples(
        &window.samples[offset..offset + PREAMBLE_LEN],
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    /// `n`: noise only.
    Noise,
    /// `p`: window starts exactly at a packet start.
    Preamble,
    /// `n-p`: noise followed by the head of a preamble.
    NoisePreamble,
    /// `p-d`: starts inside the preamble, runs into data.
    PreambleData,
    /// `d`: data only.
    Data,
    /// `d-n`: end of a packet followed by noise.
    DataNoise,
    /// `np`: anything that is not an aligned preamble.
    NotPreamble,
    /// `p+1`: aligned preamble overlapped by one other packet.
    PreambleOneInterferer,
    /// `p+m`: aligned preamble overlapped by two or more packets.
    PreambleMultiInterferer,
}

impl Label {
    pub fn token(self) -> &'static str {
        match self {
            Label::Noise => "n",
            Label::Preamble => "p",
            Label::NoisePreamble => "n-p",
            Label::PreambleData => "p-d",
            Label::Data => "d",
            Label::DataNoise => "d-n",
            Label::NotPreamble => "np",
            Label::PreambleOneInterferer => "p+1",
            Label::PreambleMultiInterferer => "p+m",
        }
    }

    pub fn from_token(token: &str) -> Result<Self, DatasetError> {
        Ok(match token {
            "n" => Label::Noise,
            "p" => Label::Preamble,
            "n-p" => Label::NoisePreamble,
            "p-d" => Label::PreambleData,
            "d" => Label::Data,
            "d-n" => Label::DataNoise,
            "np" => Label::NotPreamble,
            "p+1" => Label::PreambleOneInterferer,
            "p+m" => Label::PreambleMultiInterferer,
            other => return Err(DatasetError::UnknownLabel(other.to_string())),
        })
    }

    /// Whether the window is aligned with a packet start.
    pub fn is_aligned_preamble(self) -> bool {
        matches!(
            self,
            Label::Preamble | Label::PreambleOneInterferer | Label::PreambleMultiInterferer
        )
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelScheme {
    /// `np`, `p`.
    Binary,
    /// `n`, `p`, `n-p`, `p-d`, `d`, `d-n`.
    Awgn6,
    /// `np`, `p`, `p+1`, `p+m`.
    Interf4,
}

const BINARY_CLASSES: [Label; 2] = [Label::NotPreamble, Label::Preamble];
const AWGN6_CLASSES: [Label; 6] = [
    Label::Noise,
    Label::Preamble,
    Label::NoisePreamble,
    Label::PreambleData,
    Label::Data,
    Label::DataNoise,
];
const INTERF4_CLASSES: [Label; 4] = [
    Label::NotPreamble,
    Label::Preamble,
    Label::PreambleOneInterferer,
    Label::PreambleMultiInterferer,
];

impl LabelScheme {
    /// Class labels in index order. The preamble class is always index 1.
    pub fn classes(self) -> &'static [Label] {
        match self {
            LabelScheme::Binary => &BINARY_CLASSES,
            LabelScheme::Awgn6 => &AWGN6_CLASSES,
            LabelScheme::Interf4 => &INTERF4_CLASSES,
        }
    }

    pub fn num_classes(self) -> usize {
        self.classes().len()
    }

    pub fn class_index(self, label: Label) -> Option<usize> {
        self.classes().iter().position(|&l| l == label)
    }

    pub fn label(self, class: usize) -> Label {
        self.classes()[class]
    }

    pub const fn preamble_class() -> usize {
        1
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LabelScheme::Binary => "binary",
            LabelScheme::Awgn6 => "awgn6",
            LabelScheme::Interf4 => "interf4",
        }
    }

    pub fn supports(self, scenario: Scenario) -> bool {
        !matches!(
            (self, scenario),
            (LabelScheme::Awgn6, Scenario::Interference) | (LabelScheme::Interf4, Scenario::Awgn)
        )
    }

    /// Maps a label of the scenario's detailed scheme into this scheme.
    pub fn collapse(self, label: Label) -> Label {
        match self {
            LabelScheme::Binary if label.is_aligned_preamble() => Label::Preamble,
            LabelScheme::Binary => Label::NotPreamble,
            _ => label,
        }
    }
}

impl std::str::FromStr for LabelScheme {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "binary" => Ok(LabelScheme::Binary),
            "awgn6" | "6class" => Ok(LabelScheme::Awgn6),
            "interf4" | "4class" => Ok(LabelScheme::Interf4),
            other => Err(DatasetError::UnknownScheme(other.to_string())),
        }
    }
}

impl std::fmt::Display for LabelScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Six-way label of the span `[offset, offset + 16)` relative to a packet at `start`.
pub fn awgn6_label_for(start: usize, offset: usize) -> Label {
    let (l, s, end) = (offset, start, start + PACKET_LEN);
    if l == s {
        Label::Preamble
    } else if l + PREAMBLE_LEN <= s || l >= end {
        Label::Noise
    } else if l < s {
        Label::NoisePreamble
    } else if l < s + PREAMBLE_LEN {
        Label::PreambleData
    } else if l + PREAMBLE_LEN <= end {
        Label::Data
    } else {
        Label::DataNoise
    }
}

/// Label for an AWGN window (exactly one placement).
pub fn label_awgn6(window: &SymbolWindow, offset: usize) -> Label {
    assert_eq!(window.placements.len(), 1, "AWGN windows hold one packet");
    awgn6_label_for(window.placements[0], offset)
}

/// Four-way label of `offset` given all packet starts in the window.
///
/// Interferers are counted against the 16 preamble symbols only.
pub fn interf4_label_for(starts: &[usize], offset: usize) -> Label {
    let Some(own) = starts.iter().position(|&s| s == offset) else {
        return Label::NotPreamble;
    };
    let span_end = offset + PREAMBLE_LEN;
    let interferers = starts
        .iter()
        .enumerate()
        .filter(|&(j, &s)| j != own && s < span_end && offset < s + PACKET_LEN)
        .count();
    match interferers {
        0 => Label::Preamble,
        1 => Label::PreambleOneInterferer,
        _ => Label::PreambleMultiInterferer,
    }
}

pub fn label_interf4(window: &SymbolWindow, offset: usize) -> Label {
    interf4_label_for(&window.placements, offset)
}

/// Label of `offset` in `window` under `scheme`.
pub fn label_for(
    scheme: LabelScheme,
    scenario: Scenario,
    window: &SymbolWindow,
    offset: usize,
) -> Label {
    let detailed = match scenario {
        Scenario::Awgn => label_awgn6(window, offset),
        Scenario::Interference => label_interf4(window, offset),
    };
    scheme.collapse(detailed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub features: FeatureVector,
    pub label: Label,
    /// Seed of the window the sample was cut from; see [`regenerate_window`].
    pub window_id: u64,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub scheme: LabelScheme,
    pub cfg: ScenarioConfig,
    pub samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.scheme.num_classes()
    }

    /// Class indices of every sample under the dataset's scheme.
    pub fn classes(&self) -> Vec<usize> {
        self.samples
            .iter()
            .map(|s| {
                self.scheme
                    .class_index(s.label)
                    .expect("sample label belongs to the dataset scheme")
            })
            .collect()
    }

    pub fn features(&self) -> Vec<FeatureVector> {
        self.samples.iter().map(|s| s.features).collect()
    }

    /// Same samples relabeled under the binary scheme.
    pub fn to_binary(&self) -> Dataset {
        Dataset {
            scheme: LabelScheme::Binary,
            cfg: self.cfg.clone(),
            samples: self
                .samples
                .iter()
                .map(|s| LabeledSample {
                    label: LabelScheme::Binary.collapse(s.label),
                    ..s.clone()
                })
                .collect(),
        }
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            scenario: self.cfg.scenario,
            snr_db: self.cfg.snr_db,
            seed: self.cfg.seed,
            scheme: self.scheme,
            size: self.len(),
            window_len: self.cfg.window_len,
            num_packets: self.cfg.num_packets,
        }
    }
}

/// Rebuilds the window a sample was cut from.
pub fn regenerate_window(cfg: &ScenarioConfig, window_id: u64) -> SymbolWindow {
    synth_window(cfg, &mut rng_from_seed(window_id))
}

fn random_offsets(scenario: Scenario) -> usize {
    match scenario {
        Scenario::Awgn => 4,
        Scenario::Interference => 12,
    }
}

fn window_samples(cfg: &ScenarioConfig, scheme: LabelScheme, index: u64) -> Vec<LabeledSample> {
    let window_id = stream_seed(cfg.seed, index);
    let mut rng = rng_from_seed(window_id);
    let window = synth_window(cfg, &mut rng);
    let max_offset = cfg.window_len - PREAMBLE_LEN;
    let mut offsets = window.placements.clone();
    offsets.extend((0..random_offsets(cfg.scenario)).map(|_| rng.random_range(0..=max_offset)));
    offsets
        .into_iter()
        .map(|offset| LabeledSample {
            features: FeatureVector::from_samples(&window.samples[offset..offset + PREAMBLE_LEN]),
            label: label_for(scheme, cfg.scenario, &window, offset),
            window_id,
            offset,
        })
        .collect()
}

pub fn build_dataset(
    cfg: &ScenarioConfig,
    scheme: LabelScheme,
    target_size: usize,
) -> Result<Dataset, DatasetError> {
    build_dataset_with(Exec::default(), cfg, scheme, target_size)
}

/// [`build_dataset`] with an explicit execution mode.
pub fn build_dataset_with(
    exec: Exec,
    cfg: &ScenarioConfig,
    scheme: LabelScheme,
    target_size: usize,
) -> Result<Dataset, DatasetError> {
    if target_size == 0 {
        return Err(DatasetError::EmptyTarget);
    }
    cfg.validate()?;
    if !scheme.supports(cfg.scenario) {
        return Err(DatasetError::SchemeMismatch {
            scheme,
            scenario: cfg.scenario,
        });
    }
    let per_window = cfg.num_packets + random_offsets(cfg.scenario);
    let windows = target_size.div_ceil(per_window);
    let mut samples: Vec<LabeledSample> = exec
        .map_range(windows, |i| window_samples(cfg, scheme, i as u64))
        .into_iter()
        .flatten()
        .collect();
    samples.truncate(target_size);
    Ok(Dataset {
        scheme,
        cfg: cfg.clone(),
        samples,
    })
}

/// Sidecar metadata written next to every dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub scenario: Scenario,
    pub snr_db: f64,
    pub seed: u64,
    pub scheme: LabelScheme,
    pub size: usize,
    pub window_len: usize,
    pub num_packets: usize,
}

pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

fn header() -> Vec<String> {
    (0..NUM_FEATURES)
        .map(|i| format!("f{i}"))
        .chain(["label", "window_id", "offset"].map(String::from))
        .collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the CSV and its metadata sidecar.
pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    writer.write_record(header())?;
    for s in &dataset.samples {
        let mut record: Vec<String> = s.features.0.iter().map(|v| format!("{v:.16e}")).collect();
        record.push(s.label.token().to_string());
        record.push(s.window_id.to_string());
        record.push(s.offset.to_string());
        writer.write_record(&record)?;
    }
    writer.flush().map_err(io_err(path))?;

    let meta = meta_path(path);
    let mut out = BufWriter::new(File::create(&meta).map_err(io_err(&meta))?);
    serde_json::to_writer_pretty(&mut out, &dataset.meta()).map_err(|source| {
        DatasetError::Json {
            path: meta.clone(),
            source,
        }
    })?;
    out.write_all(b"\n").map_err(io_err(&meta))?;
    Ok(())
}

pub fn read_meta(csv_path: &Path) -> Result<DatasetMeta, DatasetError> {
    let meta = meta_path(csv_path);
    let file = File::open(&meta).map_err(io_err(&meta))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|source| DatasetError::Json { path: meta, source })
}

pub fn read_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    let meta = read_meta(path)?;
    let cfg = ScenarioConfig {
        scenario: meta.scenario,
        snr_db: meta.snr_db,
        window_len: meta.window_len,
        num_packets: meta.num_packets,
        seed: meta.seed,
    };
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(BufReader::new(file));
    let expected = header();
    if reader
        .headers()?
        .iter()
        .ne(expected.iter().map(String::as_str))
    {
        return Err(DatasetError::BadHeader {
            expected: expected.join(","),
        });
    }
    let mut samples = Vec::with_capacity(meta.size);
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != NUM_FEATURES + 3 {
            return Err(DatasetError::FeatureCount {
                line,
                found: record.len().saturating_sub(3),
            });
        }
        let malformed = |message: String| DatasetError::Malformed { line, message };
        let mut values = [0.0; NUM_FEATURES];
        for (i, v) in values.iter_mut().enumerate() {
            *v = record[i]
                .trim()
                .parse()
                .map_err(|e| malformed(format!("feature f{i}: {e}")))?;
        }
        let label = Label::from_token(record[NUM_FEATURES].trim())?;
        if meta.scheme.class_index(label).is_none() {
            return Err(DatasetError::LabelNotInScheme {
                line,
                label,
                scheme: meta.scheme,
            });
        }
        let window_id = record[NUM_FEATURES + 1]
            .trim()
            .parse()
            .map_err(|e| malformed(format!("window_id: {e}")))?;
        let offset = record[NUM_FEATURES + 2]
            .trim()
            .parse()
            .map_err(|e| malformed(format!("offset: {e}")))?;
        samples.push(LabeledSample {
            features: FeatureVector(values),
            label,
            window_id,
            offset,
        });
    }
    Ok(Dataset {
        scheme: meta.scheme,
        cfg,
        samples,
    })
}
