//! Functional model of a delta-threshold GRU inference accelerator.
//!
//! The pipeline: a float GRU model is quantized and packed into the
//! column-major, bias-appended weight layout ([`model`]), the engine
//! ([`engine`]) runs the INT16/INT8 fixed-point datapath with delta-threshold
//! column skipping and LUT nonlinearities ([`fixedpoint`]), and the traces it
//! emits drive a closed-form throughput estimator plus a cycle-approximate
//! simulator ([`perfmodel`]). Double-precision references ([`gru_reference`])
//! anchor the numerics, and [`decoder`] scores outputs with greedy CTC
//! decoding and word error rate.

pub mod decoder;
pub mod engine;
pub mod error;
pub mod fixedpoint;
pub mod gru_reference;
pub mod io;
pub mod mat;
pub mod model;
pub mod perfmodel;
pub mod synth;

pub use decoder::{greedy_decode, wer, LabelSeq};
pub use engine::{reset, run_sequence, step, ColumnEvent, DeltaState, StepTrace};
pub use error::Error;
pub use fixedpoint::{dequantize, mac, quantize, requantize, NluFunction, NluLut, QFormat, QTensor};
pub use gru_reference::{deltagru_step_f, gru_step_f, FloatState};
pub use mat::MatF;
pub use model::{
    column_descriptor, convert, BurstDescriptor, ColumnSource, GruLayerParamsF, NetworkConfig,
    PackedLayer, PackedModel,
};
pub use perfmodel::{
    estimate, measure_sparsity, op_count, simulate, HwConfig, PerfReport, RunSummary,
    SparsityStats, TraceCollector,
};
pub use synth::FeatureProfile;
