//! Scenario engine: road mobility, slotted simulation of grouping,
//! beamforming and alignment, configuration parsing and CSV / plot output.

use thiserror::Error;

use crate::baselines::BaselineError;
use crate::beamalign::AlignError;
use crate::formation::FormationError;
use crate::gnnbeam::GnnError;
use crate::rfmodel::RfError;

mod config;
mod mobility;
mod plot;
mod scenario;

pub use config::{
    BeamformingMethod, ConfigError, EvalSettings, FuzzSettings, RoadConfig, ScenarioConfig,
    TrainSettings,
};
pub use mobility::{mobility_step, place_vehicles, VehicleState, MIN_SPACING_M};
pub use plot::{emit_plot_script, PlotData, PlotFiles};
pub use scenario::{
    run_scenario, sweep_align, write_links_csv, write_metrics_csv, LinkRecord, MetricsRecord,
    ScenarioOutput, FORMATION_LIMIT_S, LINKS_CSV_HEADER, METRICS_CSV_HEADER,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("the gnn method needs a model checkpoint")]
    MissingCheckpoint,
    #[error("beamwidth {0} deg outside (0, 360]")]
    InvalidWidth(f64),
    #[error("nothing to plot")]
    EmptyData,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Rf(#[from] RfError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Formation(#[from] FormationError),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

impl SimError {
    /// Whether the error stems from user input rather than a failure while
    /// running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            SimError::Config(_)
                | SimError::MissingCheckpoint
                | SimError::InvalidWidth(_)
                | SimError::EmptyData
        )
    }
}

#[cfg(test)]
mod tests;
