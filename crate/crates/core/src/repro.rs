//! Reproduction runs: fixed experiment grids plus the checks that grade them.
//!
//! Each id expands a base [`ExperimentSpec`] into a scenario/scheme/SNR grid,
//! runs gen, train and eval, then compares obtained values against reference
//! values and tolerances.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::channel::Scenario;
use crate::correlator::{best_pd_at_pfa, best_pfa_at_pd};
use crate::dataset::LabelScheme;
use crate::pipeline::{self, Detector, DetectorEval, ExperimentSpec, PipelineError};

pub const REPRO_IDS: [&str; 4] = ["fig3", "table2", "fig4", "table3"];

#[derive(Debug, Error)]
pub enum ReproError {
    #[error("unknown reproduction id `{id}` (valid ids: {})", REPRO_IDS.join(", "))]
    UnknownId { id: String },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bound {
    AtLeast { min: f64 },
    AtMost { max: f64 },
    Within { min: f64, max: f64 },
}

impl Bound {
    pub fn holds(self, x: f64) -> bool {
        match self {
            Bound::AtLeast { min } => x >= min,
            Bound::AtMost { max } => x <= max,
            Bound::Within { min, max } => (min..=max).contains(&x),
        }
    }
}

impl std::fmt::Display for Bound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            Bound::AtLeast { min } => write!(f, ">= {}", num(min)),
            Bound::AtMost { max } => write!(f, "<= {}", num(max)),
            Bound::Within { min, max } => write!(f, "in [{}, {}]", num(min), num(max)),
        }
    }
}

fn num(x: f64) -> String {
    if x == 0.0 || (1e-3..1e6).contains(&x.abs()) {
        let s = format!("{x:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{x:.3e}")
    }
}

fn opt_num(v: Option<f64>) -> String {
    v.map_or("n/a".to_string(), num)
}

/// One graded quantity. A missing value fails.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub criterion: String,
    pub quantity: String,
    pub reference: Option<f64>,
    pub obtained: Option<f64>,
    pub bound: Bound,
    pub pass: bool,
}

impl Check {
    pub fn new(
        criterion: &str,
        quantity: impl Into<String>,
        reference: Option<f64>,
        obtained: Option<f64>,
        bound: Bound,
    ) -> Self {
        Self {
            criterion: criterion.to_string(),
            quantity: quantity.into(),
            reference,
            obtained,
            bound,
            pass: obtained.is_some_and(|x| bound.holds(x)),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {} {}: obtained {} (reference {}), required {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.criterion,
            self.quantity,
            opt_num(self.obtained),
            opt_num(self.reference),
            self.bound
        )
    }
}

pub fn render_table(checks: &[Check]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<4} {:<46} {:>10} {:>10}  {:<16} result",
        "id", "quantity", "reference", "obtained", "required"
    );
    for c in checks {
        let _ = writeln!(
            out,
            "{:<4} {:<46} {:>10} {:>10}  {:<16} {}",
            c.criterion,
            c.quantity,
            opt_num(c.reference),
            opt_num(c.obtained),
            c.bound.to_string(),
            if c.pass { "PASS" } else { "FAIL" }
        );
    }
    out
}

fn find(evals: &[DetectorEval], snr_db: f64, detector: Detector) -> Option<&DetectorEval> {
    evals
        .iter()
        .find(|e| e.detector == detector && e.cell.snr_db == snr_db)
}

fn report_value(
    evals: &[DetectorEval],
    snr_db: f64,
    detector: Detector,
    f: impl Fn(&crate::metrics::EvalReport) -> Option<f64>,
) -> Option<f64> {
    find(evals, snr_db, detector)
        .and_then(|e| e.report.as_ref())
        .and_then(f)
}

fn roc_pd_at_pfa(
    evals: &[DetectorEval],
    snr_db: f64,
    detector: Detector,
    max_pfa: f64,
) -> Option<f64> {
    find(evals, snr_db, detector)
        .and_then(|e| best_pd_at_pfa(&e.roc, max_pfa))
        .map(|p| p.pd)
}

fn roc_pfa_at_pd(
    evals: &[DetectorEval],
    snr_db: f64,
    detector: Detector,
    min_pd: f64,
) -> Option<f64> {
    find(evals, snr_db, detector)
        .and_then(|e| best_pfa_at_pd(&e.roc, min_pd))
        .map(|p| p.pfa)
}

/// Binary AWGN detection at 0 dB.
pub fn checks_binary_awgn(evals: &[DetectorEval]) -> Vec<Check> {
    let c = "C1";
    vec![
        Check::new(
            c,
            "nn accuracy @0dB",
            Some(0.9771),
            report_value(evals, 0.0, Detector::Nn, |r| Some(r.accuracy)),
            Bound::AtLeast { min: 0.95 },
        ),
        Check::new(
            c,
            "rf accuracy @0dB",
            Some(0.9502),
            report_value(evals, 0.0, Detector::Rf, |r| Some(r.accuracy)),
            Bound::AtLeast { min: 0.92 },
        ),
        Check::new(
            c,
            "nn pd @0dB",
            None,
            report_value(evals, 0.0, Detector::Nn, |r| r.pd),
            Bound::AtLeast { min: 0.90 },
        ),
        Check::new(
            c,
            "nn pfa (precision complement) @0dB",
            None,
            report_value(evals, 0.0, Detector::Nn, |r| r.pfa_precision),
            Bound::AtMost { max: 0.05 },
        ),
    ]
}

/// Six-class AWGN confusion at 3 dB.
pub fn checks_awgn6(evals: &[DetectorEval]) -> Vec<Check> {
    let c = "C2";
    let p = LabelScheme::preamble_class();
    let diag = |r: &crate::metrics::EvalReport| Some(r.confusion.normalized[p][p]);
    vec![
        Check::new(
            c,
            "nn accuracy @3dB",
            Some(0.6329),
            report_value(evals, 3.0, Detector::Nn, |r| Some(r.accuracy)),
            Bound::Within {
                min: 0.58,
                max: 0.70,
            },
        ),
        Check::new(
            c,
            "rf accuracy @3dB",
            Some(0.6421),
            report_value(evals, 3.0, Detector::Rf, |r| Some(r.accuracy)),
            Bound::Within {
                min: 0.59,
                max: 0.70,
            },
        ),
        Check::new(
            c,
            "nn confusion pd @3dB",
            Some(0.9958),
            report_value(evals, 3.0, Detector::Nn, |r| r.pd_cm),
            Bound::AtLeast { min: 0.95 },
        ),
        Check::new(
            c,
            "rf confusion pd @3dB",
            Some(0.9616),
            report_value(evals, 3.0, Detector::Rf, |r| r.pd_cm),
            Bound::AtLeast { min: 0.95 },
        ),
        Check::new(
            c,
            "nn confusion pfa @3dB",
            Some(0.0198),
            report_value(evals, 3.0, Detector::Nn, |r| r.pfa_cm),
            Bound::AtMost { max: 0.06 },
        ),
        Check::new(
            c,
            "rf confusion pfa @3dB",
            Some(0.0438),
            report_value(evals, 3.0, Detector::Rf, |r| r.pfa_cm),
            Bound::AtMost { max: 0.06 },
        ),
        Check::new(
            c,
            "nn (p) column diagonal @3dB",
            Some(0.9958),
            report_value(evals, 3.0, Detector::Nn, diag),
            Bound::AtLeast { min: 0.93 },
        ),
        Check::new(
            c,
            "rf (p) column diagonal @3dB",
            Some(0.9616),
            report_value(evals, 3.0, Detector::Rf, diag),
            Bound::AtLeast { min: 0.93 },
        ),
    ]
}

/// Correlation ROC in AWGN against the forest at 3 and 8 dB.
pub fn checks_correlation_roc(evals: &[DetectorEval]) -> Vec<Check> {
    let c = "C3";
    vec![
        Check::new(
            c,
            "corr best pd with pfa <= 0.09 @8dB",
            None,
            roc_pd_at_pfa(evals, 8.0, Detector::Corr, 0.09),
            Bound::AtLeast { min: 0.93 },
        ),
        Check::new(
            c,
            "corr least pfa with pd >= 0.90 @3dB",
            None,
            roc_pfa_at_pd(evals, 3.0, Detector::Corr, 0.90),
            Bound::AtLeast { min: 0.30 },
        ),
        Check::new(
            c,
            "corr best pd with pfa <= 0.003 @3dB",
            Some(0.11),
            roc_pd_at_pfa(evals, 3.0, Detector::Corr, 0.003),
            Bound::AtMost { max: 0.25 },
        ),
        Check::new(
            c,
            "rf pd @3dB",
            Some(0.995),
            report_value(evals, 3.0, Detector::Rf, |r| r.pd),
            Bound::AtLeast { min: 0.95 },
        ),
        Check::new(
            c,
            "rf pfa (precision complement) @3dB",
            None,
            report_value(evals, 3.0, Detector::Rf, |r| r.pfa_precision),
            Bound::AtMost { max: 0.003 },
        ),
    ]
}

/// Four-class interference confusion at 3 dB.
pub fn checks_interf4(evals: &[DetectorEval]) -> Vec<Check> {
    let c = "C4";
    // p+1 and p+m rows of the p+m column.
    let multi_mass = |r: &crate::metrics::EvalReport| {
        Some(r.confusion.normalized[2][3] + r.confusion.normalized[3][3])
    };
    vec![
        Check::new(
            c,
            "nn accuracy @3dB",
            Some(0.9335),
            report_value(evals, 3.0, Detector::Nn, |r| Some(r.accuracy)),
            Bound::Within {
                min: 0.90,
                max: 0.96,
            },
        ),
        Check::new(
            c,
            "rf accuracy @3dB",
            Some(0.8920),
            report_value(evals, 3.0, Detector::Rf, |r| Some(r.accuracy)),
            Bound::Within {
                min: 0.85,
                max: 0.93,
            },
        ),
        Check::new(
            c,
            "nn pd @3dB",
            Some(0.9714),
            report_value(evals, 3.0, Detector::Nn, |r| r.pd),
            Bound::AtLeast { min: 0.94 },
        ),
        Check::new(
            c,
            "nn pfa (precision complement) @3dB",
            Some(0.0272),
            report_value(evals, 3.0, Detector::Nn, |r| r.pfa_precision),
            Bound::AtMost { max: 0.06 },
        ),
        Check::new(
            c,
            "nn p+m column mass on p+1,p+m @3dB",
            Some(0.8308),
            report_value(evals, 3.0, Detector::Nn, multi_mass),
            Bound::AtLeast { min: 0.70 },
        ),
    ]
}

/// Binary interference ROC at 8 dB.
pub fn checks_interference_roc(evals: &[DetectorEval]) -> Vec<Check> {
    let c = "C5";
    let mut checks = vec![Check::new(
        c,
        "corr best pd with pfa <= 0.01 @8dB",
        Some(0.5734),
        roc_pd_at_pfa(evals, 8.0, Detector::Corr, 0.01),
        Bound::Within {
            min: 0.45,
            max: 0.70,
        },
    )];
    for (d, reference) in [(Detector::Nn, Some(0.975)), (Detector::Rf, None)] {
        checks.push(Check::new(
            c,
            format!("{d} pd @8dB"),
            reference,
            report_value(evals, 8.0, d, |r| r.pd),
            Bound::AtLeast { min: 0.95 },
        ));
        checks.push(Check::new(
            c,
            format!("{d} pfa (precision complement) @8dB"),
            None,
            report_value(evals, 8.0, d, |r| r.pfa_precision),
            Bound::AtMost { max: 0.03 },
        ));
    }
    checks
}

/// Expands `id` into a grid, keeping seeds, size, output root and hyperparameters from `base`.
pub fn spec_for(id: &str, base: &ExperimentSpec) -> Result<ExperimentSpec, ReproError> {
    let all = vec![Detector::Corr, Detector::Nn, Detector::Rf];
    let learned = vec![Detector::Nn, Detector::Rf];
    let (scenario, scheme, snrs, detectors) = match id {
        "fig3" => (
            Scenario::Awgn,
            LabelScheme::Binary,
            vec![0.0, 3.0, 8.0],
            all,
        ),
        "table2" => (Scenario::Awgn, LabelScheme::Awgn6, vec![3.0], learned),
        "fig4" => (
            Scenario::Interference,
            LabelScheme::Binary,
            vec![0.0, 3.0, 8.0],
            all,
        ),
        "table3" => (
            Scenario::Interference,
            LabelScheme::Interf4,
            vec![3.0],
            learned,
        ),
        _ => return Err(ReproError::UnknownId { id: id.to_string() }),
    };
    Ok(ExperimentSpec {
        scenario,
        scheme,
        snrs,
        detectors,
        ..base.clone()
    })
}

pub fn checks_for(id: &str, evals: &[DetectorEval]) -> Result<Vec<Check>, ReproError> {
    Ok(match id {
        "fig3" => {
            let mut c = checks_binary_awgn(evals);
            c.extend(checks_correlation_roc(evals));
            c
        }
        "table2" => checks_awgn6(evals),
        "fig4" => checks_interference_roc(evals),
        "table3" => checks_interf4(evals),
        _ => return Err(ReproError::UnknownId { id: id.to_string() }),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ReproOutcome {
    pub id: String,
    pub spec: ExperimentSpec,
    pub checks: Vec<Check>,
}

impl ReproOutcome {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Runs the grid for `id` and writes `repro-<id>.json` under the output root.
pub fn run(id: &str, base: &ExperimentSpec) -> Result<ReproOutcome, ReproError> {
    let spec = spec_for(id, base)?;
    let evals = pipeline::run_all(&spec)?;
    let outcome = ReproOutcome {
        id: id.to_string(),
        checks: checks_for(id, &evals)?,
        spec,
    };
    let path = Path::new(&outcome.spec.out).join(format!("repro-{id}.json"));
    let text = serde_json::to_string_pretty(&outcome).map_err(PipelineError::from)?;
    std::fs::write(&path, text + "\n").map_err(|source| PipelineError::Io { path, source })?;
    Ok(outcome)
}
