//! Parameter schedule and the DGD / NDGD iterations.

mod export;
mod run;
mod schedule;
mod step;

pub use export::{read_trace_csv, trace_csv_string, trace_header, write_trace_csv};
pub use run::{
    check_consensual_stationarity, escape_iteration, final_average, run, Algorithm, RunConfig, RunTrace,
    StationarityReport, StepParams, TraceRow,
};
pub use schedule::{build_schedule, consensus_bound, required_rho, Schedule, StationarityThresholds};
pub use step::{dgd_step, gdq_step, ndgd_step, sample_perturbation};
