//! Closed-loop fleet simulation: scenario construction, the per-tick control
//! pipeline, metrics, the training protocol for the lower level, and trace,
//! metrics and plot export.

mod compare;
mod metrics;
mod plot;
mod run;
mod scenario;
mod trace;
mod training;

pub use compare::{compare, ArmSummary, Comparison, VehicleSaving};
pub use metrics::{soc_corrected_fuel, Metrics, VehicleMetrics};
pub use plot::{plot_svg, PlotKind};
pub use run::{run_scenario, SimOutput};
pub use scenario::{ControllerPair, HigherLevel, LowerLevel, Scenario, TrainingConfig};
pub use trace::{read_trace, write_trace, write_trace_to, TraceRow, TRACE_HEADER};
pub use training::{collect_profiles, train_models, TrainedModels};

use std::path::Path;

use crate::error::{Error, Result};

/// Write `trace.csv`, `metrics.json` and the standard plots into `dir`.
pub fn export(output: &SimOutput, scenario: &Scenario, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_trace(&dir.join("trace.csv"), &output.trace)?;
    let json = serde_json::to_string_pretty(&output.metrics)?;
    let path = dir.join("metrics.json");
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    for kind in PlotKind::ALL {
        let svg = plot_svg(&output.trace, kind, scenario)?;
        let path = dir.join(format!("{}.svg", kind.as_str()));
        std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
