//! Synthetic panels from the physical dynamics.

use super::panel::{MaturitySchedule, PanelData};
use crate::linalg::Vec2;
use crate::model::{ModelError, PhysicalParams, StateVec};
use crate::montecarlo::rng::PathRng;
use crate::montecarlo::step_p;
use crate::riccati::riccati_p;
use crate::units;

#[derive(Debug, Clone, PartialEq)]
pub struct PanelSimOptions {
    /// State at the first quarter; the equilibrium when `None`.
    pub x_start: Option<StateVec<f64>>,
    /// `[S_{-2}, S_{-1}, S_0]`.
    pub seasonal_init: [f64; 3],
}

impl Default for PanelSimOptions {
    fn default() -> Self {
        PanelSimOptions {
            x_start: None,
            seasonal_init: [-0.4, 0.1, 0.5],
        }
    }
}

/// Panel together with the latent paths that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPanel {
    pub panel: PanelData,
    /// `x_t` for every row.
    pub states: Vec<StateVec<f64>>,
    /// `S_t` for every row.
    pub seasonal: Vec<f64>,
}

pub fn simulate_panel(
    p: &PhysicalParams<f64>,
    quarters: usize,
    seed: u64,
    schedule: &MaturitySchedule,
) -> Result<SimulatedPanel, ModelError> {
    simulate_panel_with(p, quarters, seed, schedule, &PanelSimOptions::default())
}

/// Simulates `quarters` rows. Row `t` holds the short rate of `x_t`, the
/// inflation rate `π_t = x2_{t-1} + S_t + noise` and the yields of `x_t`
/// for every maturity already switched on by `schedule`. Pre-sample
/// volatilities are those of the start state.
pub fn simulate_panel_with(
    p: &PhysicalParams<f64>,
    quarters: usize,
    seed: u64,
    schedule: &MaturitySchedule,
    opts: &PanelSimOptions,
) -> Result<SimulatedPanel, ModelError> {
    let x0 = match opts.x_start {
        Some(x) => x,
        None => p.equilibrium_state()?,
    };
    let maturities = schedule.maturities();
    let table = riccati_p(p, maturities.iter().copied().max().unwrap_or(0));
    let mut panel = PanelData::empty(schedule.start, quarters, &maturities);
    let mut rng = PathRng::new(seed, 0);
    let sqrt_floor = |v: Vec2<f64>| v.map(|vi| vi.max(0.0).sqrt());

    let mut states = Vec::with_capacity(quarters);
    let mut seasonal = Vec::with_capacity(quarters);
    // Lags: seasonal [S_{t-3}, S_{t-2}, S_{t-1}], volatilities at t-1, t-2.
    let mut s_lags = opts.seasonal_init;
    let mut x_prev = x0;
    let mut v_lag1 = p.volatility(x0);
    let mut v_lag2 = v_lag1;
    let mut x = x0;

    for t in 0..quarters {
        let eps = Vec2::new(rng.normal(), rng.normal());
        if t > 0 {
            x = step_p(p, x_prev, eps);
        }
        let xi_s = rng.normal();
        let xi_pi = rng.normal();
        let sd2 = sqrt_floor(v_lag2);
        let s_t = if t == 0 {
            s_lags[2]
        } else {
            -(s_lags[0] + s_lags[1] + s_lags[2]) + p.omega_s * sd2.0[1] * xi_s
        };
        if t > 0 {
            s_lags = [s_lags[1], s_lags[2], s_t];
        }
        let pi_t = x_prev.0[1] + s_t + p.omega_pi * sd2.0[1] * xi_pi;

        panel.short_rate[t] = Some(x.0[0] + x.0[1]);
        panel.inflation[t] = Some(pi_t);
        let sd1 = sqrt_floor(v_lag1);
        let nu_sd = p.nu0 + p.nu1 * sd1.0[0] + p.nu2 * sd1.0[1];
        for (&n, &start) in &schedule.yield_starts {
            let xi = rng.normal();
            if t >= start {
                let y = table.analytic_yield(x, n).expect("maturity in table") + nu_sd * xi;
                panel.yields.get_mut(&n).expect("column")[t] = Some(units::to_annual_percent(y));
            }
        }
        states.push(x);
        seasonal.push(s_t);
        v_lag2 = v_lag1;
        v_lag1 = p.volatility(x);
        x_prev = x;
    }
    Ok(SimulatedPanel {
        panel,
        states,
        seasonal,
    })
}
