use std::io::Write;
use std::time::Duration;

use serde::Serialize;

use crate::model::ModelParams;

/// Largest absolute entry change of each parameter block in one iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ParamDeltas {
    pub w: f64,
    pub sigma: f64,
    pub pi: f64,
    pub mu: f64,
    pub psi: f64,
}

impl ParamDeltas {
    pub fn between(a: &ModelParams, b: &ModelParams) -> Self {
        ParamDeltas {
            w: (&a.w - &b.w).amax(),
            sigma: (&a.sigma - &b.sigma).amax(),
            pi: (&a.pi - &b.pi).amax(),
            mu: (&a.mu - &b.mu).amax(),
            psi: (&a.psi - &b.psi).amax(),
        }
    }

    pub fn max(&self) -> f64 {
        self.w.max(self.sigma).max(self.pi).max(self.mu).max(self.psi)
    }
}

/// One EM iteration. `log_likelihood` is evaluated at the parameters the
/// iteration started from (the truncated engine reports its restricted-sum
/// surrogate instead).
#[derive(Clone, Debug, PartialEq)]
pub struct EmTrace {
    pub iteration: usize,
    pub log_likelihood: f64,
    pub param_deltas: ParamDeltas,
    pub wall_time: Duration,
}

pub const TRACE_CSV_HEADER: &str = "iteration,log_likelihood,max_param_delta,wall_time_ms";

pub fn write_trace_csv<W: Write>(mut out: W, trace: &[EmTrace]) -> std::io::Result<()> {
    writeln!(out, "{TRACE_CSV_HEADER}")?;
    for t in trace {
        writeln!(
            out,
            "{},{:.17e},{:.17e},{:.3}",
            t.iteration,
            t.log_likelihood,
            t.param_deltas.max(),
            t.wall_time.as_secs_f64() * 1e3
        )?;
    }
    Ok(())
}
