//! Experiment orchestration: configuration, seeded ensembles, sweeps,
//! scaling fits, the trade-off intersection and file export.

pub mod config;
pub mod export;
pub mod fit;
pub mod run;

pub use config::{
    default_speed_grid, EnsembleSettings, FitSettings, IntegratorSettings, NoiseSettings,
    RunConfig, SweepAxis, SweepSettings,
};
pub use export::{
    curve_csv, gaps_csv, parse_curve_csv, read_curve_csv, read_jsonl, svg_chart, trace_csv,
    write_curve_csv, write_gaps_csv, write_jsonl, write_svg, write_trace_csv, SvgSeries,
};
pub use fit::{
    find_tradeoff, fit_power_law, jackknife_gamma, polynomial_region, ScalingFit,
    TradeoffResult,
};
pub use run::{
    aggregate, run_ensemble, run_realization, split_seed, sweep, validate_against_oracle,
    CurvePoint, EnsembleResult, EventRecord, RealizationRecord, SuccessPoint, SweepCurve,
};
