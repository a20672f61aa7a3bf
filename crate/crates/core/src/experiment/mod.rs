//! Sweeps over width, sample size and label noise, and the tooling around
//! their output: CSV records, power-law fits, checkpoint verification and
//! plots.

pub mod config;
pub mod fit;
pub mod plot;
pub mod record;
pub mod sweep;
pub mod verify;

pub use config::{DataSource, DatasetKind, ExperimentProfile, SweepConfig};
pub use fit::{fit_csv, fit_power_law, grouped_means, PowerFit};
pub use plot::{plot, render_svg, series, PlotSpec, Series};
pub use record::{read_sweep_csv, write_sweep_csv, CsvTable, SweepRecord, COLUMNS, SCHEMA_VERSION, TIMING_COLUMNS};
pub use sweep::{final_checkpoint_path, grid, init_checkpoint_path, run_sweep, GridPoint, SWEEP_CSV};
pub use verify::{verify_bounds, BoundCheck, VerifyReport};
