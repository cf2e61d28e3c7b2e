//! Preamble detection for short packets on an asynchronous ALOHA channel.
//!
//! The crate simulates BPSK packets carrying the 16-symbol CCSDS syncword over
//! AWGN (one packet per window) or an interference channel (three packets per
//! window, load 0.75), turns the received stream into 17-component feature
//! vectors, and compares three detectors on them:
//!
//! * [`correlator`]: sliding-window correlation against the syncword with a
//!   threshold, swept into a ROC curve;
//! * [`mlp`]: a 17-325-320-K feedforward network trained with back-propagation
//!   and mini-batch gradient descent;
//! * [`forest`]: 100 information-gain decision trees with majority voting.
//!
//! [`metrics`] computes accuracy, detection and false-alarm estimators and
//! confusion matrices. [`pipeline`] wires everything into file-based
//! `gen`/`train`/`eval` steps and [`repro`] runs the reference experiments.
//!
//! Data-parallel loops (window synthesis, tree growth, batch prediction,
//! threshold sweeps) go through [`exec`], which uses rayon when the `parallel`
//! feature is enabled and plain iteration otherwise. Every random draw comes
//! from a stream derived from `(seed, index)`, so results do not depend on the
//! number of worker threads.

pub mod channel;
pub mod correlator;
pub mod dataset;
pub mod exec;
pub mod forest;
pub mod metrics;
pub mod mlp;
pub mod pipeline;
pub mod repro;
pub mod rng;

pub use channel::{Scenario, ScenarioConfig, SymbolWindow, PACKET_LEN, PREAMBLE_LEN};
pub use dataset::{Dataset, FeatureVector, Label, LabelScheme, LabeledSample, NUM_FEATURES};
pub use exec::Exec;
