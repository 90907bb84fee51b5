//! Configuration, panel files and report writers behind the command line.

pub mod config;
mod panel;
mod report;

pub use config::{
    load_config, parse_config, ConfigError, IoConfig, RawConfig, RawModel, RawSim, RunConfig,
};
pub use panel::{load_panel, read_panel, write_panel, PanelError, PANEL_HEADER};
pub use report::{
    feller_json, feller_text, params_csv, write_simulation_csv, write_yields_csv, SIMULATION_HEADER,
};

/// Environment variable that fixes the worker thread count.
pub const THREADS_ENV: &str = "ATSM_THREADS";

/// Thread count from `ATSM_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Result<Option<usize>, String> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(format!(
                "{THREADS_ENV} must be a positive integer, got '{v}'"
            )),
        },
    }
}
