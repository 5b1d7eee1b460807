use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpc::SolverStatus;
use crate::spat::LightState;

/// Column order of the trace CSV. One row per active vehicle per tick; the
/// state columns (`s`, `v`, `soc`) are at the start of the tick, the rest
/// describe the interval `[t, t + dt)`.
pub const TRACE_HEADER: &str = "t,id,s,v,u,a,soc,throttle,p_dem,p_en,p_b,i_b,fuel_rate,fuel_cum,\
engine_speed,engine_torque,d_ia,light_state,solver_status,solver_iterations,solver_residual,\
window_violation,split_clamped,cold_state,violations";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    /// s
    pub t: f64,
    /// 0 is the front vehicle
    pub id: usize,
    /// m
    pub s: f64,
    /// m/s
    pub v: f64,
    /// commanded control, m/s^2
    pub u: f64,
    /// realized acceleration over the tick, m/s^2
    pub a: f64,
    pub soc: f64,
    pub throttle: f64,
    /// W
    pub p_dem: f64,
    pub p_en: f64,
    pub p_b: f64,
    /// A
    pub i_b: f64,
    /// g/s
    pub fuel_rate: f64,
    /// g, including this tick
    pub fuel_cum: f64,
    /// rad/s
    pub engine_speed: f64,
    /// Nm
    pub engine_torque: f64,
    /// distance to the next stop line, empty past the last light
    pub d_ia: Option<f64>,
    pub light_state: Option<LightState>,
    /// empty for controllers without a solver
    pub solver_status: Option<SolverStatus>,
    pub solver_iterations: usize,
    pub solver_residual: f64,
    pub window_violation: bool,
    /// battery power was clamped, so the power balance is not exact
    pub split_clamped: bool,
    /// the learned policy had never visited this state
    pub cold_state: bool,
    /// powertrain constraint violations this tick
    pub violations: usize,
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trace_to(std::io::BufWriter::new(file), rows).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Trace CSV into any writer; `write_trace` is this plus a file.
pub fn write_trace_to<W: std::io::Write>(out: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(TRACE_HEADER.split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(Path::new("<trace>"), e))?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != TRACE_HEADER {
        return Err(Error::Format {
            what: "trace",
            detail: format!("unexpected header '{}'", header.join(",")),
        });
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
