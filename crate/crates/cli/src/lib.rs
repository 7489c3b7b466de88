//! Batch front-end for `hmc-core`: configuration, multi-chain execution and output.

use hmc_core::diagnose::{is_low_e_bfmi, RHAT_THRESHOLD};

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_args, parse_config, Args, ConfigError, FileConfig, Init, RunConfig, SamplerName};
pub use output::write_output;
pub use run::{run, RunError, RunOutput};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const RUNTIME: i32 = 2;
    pub const WARNINGS: i32 = 3;
}

/// Exit code for a completed run. Divergences, a split R-hat above 1.01 or a
/// low E-BFMI count as warnings; tree-depth saturation alone does not.
pub fn exit_code(output: &RunOutput) -> i32 {
    let r = &output.report;
    let rhat = r
        .parameters
        .iter()
        .any(|p| p.rhat.is_some_and(|v| v > RHAT_THRESHOLD));
    let bfmi = r.e_bfmi.iter().flatten().any(|v| is_low_e_bfmi(*v));
    if r.divergences > 0 || rhat || bfmi {
        exit::WARNINGS
    } else {
        exit::SUCCESS
    }
}
