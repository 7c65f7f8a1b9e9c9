//! Reproducible studies built on the fitting pipeline, and their output.

pub mod plot;
pub mod report;
pub mod stats;
mod studies;

pub use report::{
    read_report, write_report, Cell, Figure, FigureKind, Report, Series, Stat, Table,
};
pub use studies::{
    align_slots, conclusive_time, parameter_columns, regularizer_variants, run_exact_recovery,
    run_noise_sweep, run_rate_comparison, run_regularizer_comparison, run_truncation_study,
    RateSpec, RecoverySpec, RegularizerComparison, SweepSpec, TruncationSpec, Variant,
};
