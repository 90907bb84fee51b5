//! Extended Kalman filter for the augmented state
//! `z_t = (x1_t, x2_t, S_{t+1}, S_t, S_{t-1})`.
//!
//! Step `t` processes the short rate of quarter `t`, the inflation rate of
//! quarter `t + 1` (which loads on `x2_t` and `S_{t+1}`) and the yields of
//! quarter `t`. Measurement noise scales use the volatility of the filtered
//! state one quarter earlier; the transition noise uses that of the current
//! filtered state (see [`VolEvaluation`]).

use nalgebra::{SMatrix, SVector};
use statrs::function::erf::erfc;
use thiserror::Error;

use super::panel::{PanelData, Quarter};
use crate::linalg::Vec2;
use crate::model::{short_rate_loading, ModelError, PhysicalParams, StateVec};
use crate::riccati::{riccati_p, RiccatiTable};

pub type Mat5 = SMatrix<f64, 5, 5>;
pub type Vec5 = SVector<f64, 5>;

/// Lower bound on `V` inside covariance matrices.
pub const VOL_EPS: f64 = 1e-8;
/// Variance of the short-rate observation, which the model treats as exact.
pub const SHORT_RATE_VARIANCE: f64 = 1e-12;
/// Lower bound on any measurement variance.
pub const MIN_MEASUREMENT_VARIANCE: f64 = 1e-16;
/// Prior variance of each seasonal component. The seasonal recursion has
/// unit-modulus roots, so it has no stationary distribution.
pub const SEASONAL_PRIOR_VARIANCE: f64 = 100.0;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Short rate and inflation.
    One,
    /// Adds the yield columns.
    Two,
}

/// Filter state vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedState {
    pub x: StateVec<f64>,
    /// `[S_{t+1}, S_t, S_{t-1}]`: the seasonal block runs one quarter ahead
    /// of `x` because inflation over the next quarter loads on it.
    pub seasonal: [f64; 3],
}

impl AugmentedState {
    pub fn to_vector(&self) -> Vec5 {
        Vec5::new(
            self.x.0[0],
            self.x.0[1],
            self.seasonal[0],
            self.seasonal[1],
            self.seasonal[2],
        )
    }

    pub fn from_vector(v: &Vec5) -> Self {
        AugmentedState {
            x: Vec2::new(v[0], v[1]),
            seasonal: [v[2], v[3], v[4]],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Series {
    ShortRate,
    Inflation,
    Yield(usize),
}

/// Linear measurement `y = intercept + loadingᵀ z + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRow {
    pub series: Series,
    pub intercept: f64,
    pub loading: Vec5,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("stage 2 needs a Riccati table covering maturity {0}")]
    MissingTable(usize),
    #[error("panel is empty")]
    EmptyPanel,
    #[error("malformed panel: {0}")]
    Panel(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("filter diverged at {quarter} (row {row}): {reason}")]
    Diverged {
        quarter: Quarter,
        row: usize,
        reason: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub stage: Stage,
    pub transition: Mat5,
    pub offset: Vec5,
    pub rows: Vec<MeasurementRow>,
    /// True when inflation, seasonal or (stage 2) yield noise scales are all
    /// zero, so that some measurement variances sit at their floor.
    pub degenerate_noise: bool,
    params: PhysicalParams<f64>,
}

/// Transition and measurement structure for `p`. Stage 2 needs `table` to
/// cover every maturity in `maturities`.
pub fn build_state_space(
    p: &PhysicalParams<f64>,
    stage: Stage,
    table: Option<&RiccatiTable<f64>>,
    maturities: &[usize],
) -> Result<StateSpace, FilterError> {
    let m = p.persistence();
    let mut transition = Mat5::zeros();
    for i in 0..2 {
        for j in 0..2 {
            transition[(i, j)] = m.at(i, j);
        }
    }
    transition[(2, 2)] = -1.0;
    transition[(2, 3)] = -1.0;
    transition[(2, 4)] = -1.0;
    transition[(3, 2)] = 1.0;
    transition[(4, 3)] = 1.0;
    let offset = Vec5::new(p.b_hat.0[0], p.b_hat.0[1], 0.0, 0.0, 0.0);

    let delta = short_rate_loading::<f64>();
    let mut rows = vec![
        MeasurementRow {
            series: Series::ShortRate,
            intercept: 0.0,
            loading: Vec5::new(delta.0[0], delta.0[1], 0.0, 0.0, 0.0),
        },
        MeasurementRow {
            series: Series::Inflation,
            intercept: 0.0,
            loading: Vec5::new(0.0, 1.0, 1.0, 0.0, 0.0),
        },
    ];
    let mut degenerate_noise = p.omega_pi == 0.0 || p.omega_s == 0.0;
    if stage == Stage::Two {
        for &n in maturities {
            let (a, b) = table
                .ok_or(FilterError::MissingTable(n))?
                .yield_loading(n)
                .map_err(|_| FilterError::MissingTable(n))?;
            rows.push(MeasurementRow {
                series: Series::Yield(n),
                intercept: a,
                loading: Vec5::new(b.0[0], b.0[1], 0.0, 0.0, 0.0),
            });
        }
        degenerate_noise |= p.nu0 == 0.0 && p.nu1 == 0.0 && p.nu2 == 0.0;
    }
    Ok(StateSpace {
        stage,
        transition,
        offset,
        rows,
        degenerate_noise,
        params: *p,
    })
}

impl StateSpace {
    pub fn params(&self) -> &PhysicalParams<f64> {
        &self.params
    }

    /// `V ∨ ε` at `x`.
    pub fn vol_at(&self, x: StateVec<f64>) -> Vec2<f64> {
        self.params.volatility(x).map(|v| v.max(VOL_EPS))
    }

    /// `E[V ∨ 0] ∨ ε` for `x` Gaussian with mean `x` and covariance `cov`.
    pub fn expected_vol(&self, x: StateVec<f64>, cov: &Mat5) -> Vec2<f64> {
        let m = self.params.volatility(x);
        let b = &self.params.beta;
        let mut out = [0.0; 2];
        #[allow(clippy::needless_range_loop)]
        for i in 0..2 {
            let (b0, b1) = (b.at(i, 0), b.at(i, 1));
            let var = b0 * b0 * cov[(0, 0)] + 2.0 * b0 * b1 * cov[(0, 1)] + b1 * b1 * cov[(1, 1)];
            let sd = var.max(0.0).sqrt();
            let mi = m.0[i];
            out[i] = if sd > 0.0 {
                let z = mi / sd;
                let cdf = 0.5 * erfc(-z * std::f64::consts::FRAC_1_SQRT_2);
                let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
                mi * cdf + sd * pdf
            } else {
                mi.max(0.0)
            }
            .max(VOL_EPS);
        }
        Vec2::new(out[0], out[1])
    }

    /// Transition noise covariance given the volatility at `t`.
    pub fn state_noise(&self, v: Vec2<f64>) -> Mat5 {
        let s = &self.params.sigma;
        let mut q = Mat5::zeros();
        for i in 0..2 {
            for j in 0..2 {
                q[(i, j)] = s.at(i, 0) * v.0[0] * s.at(j, 0) + s.at(i, 1) * v.0[1] * s.at(j, 1);
            }
        }
        q[(2, 2)] = self.params.omega_s * self.params.omega_s * v.0[1];
        q
    }

    /// Measurement variance given the filtered state one quarter earlier.
    pub fn measurement_variance(&self, series: Series, v: Vec2<f64>) -> f64 {
        let p = &self.params;
        let var = match series {
            Series::ShortRate => SHORT_RATE_VARIANCE,
            Series::Inflation => p.omega_pi * p.omega_pi * v.0[1],
            Series::Yield(_) => {
                let sd = p.nu0 + p.nu1 * v.0[0].sqrt() + p.nu2 * v.0[1].sqrt();
                sd * sd
            }
        };
        var.max(MIN_MEASUREMENT_VARIANCE)
    }

    /// Stationary mean and covariance of `x` at the equilibrium volatility,
    /// with a diffuse seasonal block.
    pub fn initial_state(&self) -> Result<(Vec5, Mat5), FilterError> {
        let x_star = self.params.equilibrium_state()?;
        let q = self.state_noise(self.vol_at(x_star));
        let f = self.transition.fixed_view::<2, 2>(0, 0).into_owned();
        // vec(P) = (I − F⊗F)⁻¹ vec(Q), column-major vec.
        let mut lhs = SMatrix::<f64, 4, 4>::identity();
        for (col, (k, l)) in [(0, 0), (1, 0), (0, 1), (1, 1)].into_iter().enumerate() {
            for (row, (i, j)) in [(0, 0), (1, 0), (0, 1), (1, 1)].into_iter().enumerate() {
                lhs[(row, col)] -= f[(i, k)] * f[(j, l)];
            }
        }
        let rhs = SVector::<f64, 4>::new(q[(0, 0)], q[(1, 0)], q[(0, 1)], q[(1, 1)]);
        let sol = lhs.lu().solve(&rhs).ok_or(ModelError::NonStationary)?;
        let mut cov = Mat5::zeros();
        cov[(0, 0)] = sol[0];
        cov[(1, 0)] = 0.5 * (sol[1] + sol[2]);
        cov[(0, 1)] = cov[(1, 0)];
        cov[(1, 1)] = sol[3];
        for k in 2..5 {
            cov[(k, k)] = SEASONAL_PRIOR_VARIANCE;
        }
        let mean = Vec5::new(x_star.0[0], x_star.0[1], 0.0, 0.0, 0.0);
        Ok((mean, cov))
    }
}

/// Filtered moments after processing step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub mean: AugmentedState,
    pub cov: Mat5,
    pub loglik_accum: f64,
}

/// How the filter turns a filtered state distribution into the volatility
/// that scales the noise covariances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VolEvaluation {
    /// `E[V ∨ 0]` under the filtered Gaussian, floored at [`VOL_EPS`].
    /// Equals `V(x̂) ∨ ε` when the filtered covariance vanishes, and keeps
    /// the filter from collapsing its noise to `ε` whenever the filtered
    /// mean crosses the boundary `V = 0`.
    #[default]
    Expected,
    /// `V(x̂) ∨ ε` at the filtered mean.
    AtMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FilterOptions {
    /// Record the smallest covariance eigenvalue seen before flooring.
    pub diagnostics: bool,
    pub vol: VolEvaluation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    pub loglik: f64,
    pub path: Vec<FilterState>,
    /// Number of scalar observations used.
    pub observations: usize,
    /// Smallest eigenvalue of any covariance before flooring; only computed
    /// with diagnostics on.
    pub min_eigenvalue: Option<f64>,
    /// How often a covariance needed the eigenvalue floor.
    pub floor_repairs: usize,
}

impl FilterRun {
    pub fn states(&self) -> Vec<StateVec<f64>> {
        self.path.iter().map(|s| s.mean.x).collect()
    }
}

pub fn ekf_loglik(
    p: &PhysicalParams<f64>,
    data: &PanelData,
    stage: Stage,
) -> Result<FilterRun, FilterError> {
    ekf_loglik_with(p, data, stage, FilterOptions::default())
}

pub fn ekf_loglik_with(
    p: &PhysicalParams<f64>,
    data: &PanelData,
    stage: Stage,
    opts: FilterOptions,
) -> Result<FilterRun, FilterError> {
    if data.is_empty() {
        return Err(FilterError::EmptyPanel);
    }
    data.check_shape().map_err(FilterError::Panel)?;
    let maturities = if stage == Stage::Two {
        data.maturities()
    } else {
        Vec::new()
    };
    let table = match maturities.iter().max() {
        Some(&n) => Some(riccati_p(p, n)),
        None => None,
    };
    let ss = build_state_space(p, stage, table.as_ref(), &maturities)?;
    run_filter(&ss, data, opts)
}

struct Psd {
    min_eigenvalue: Option<f64>,
    repairs: usize,
    diagnostics: bool,
}

impl Psd {
    /// Symmetrizes `m` and clips negative eigenvalues to zero.
    fn enforce(&mut self, m: &mut Mat5) {
        *m = (*m + m.transpose()) * 0.5;
        if self.diagnostics {
            let min = m.symmetric_eigenvalues().min();
            self.min_eigenvalue = Some(self.min_eigenvalue.map_or(min, |e| e.min(min)));
        }
        if m.cholesky().is_some() {
            return;
        }
        let eig = m.symmetric_eigen();
        if eig.eigenvalues.min() >= 0.0 {
            return;
        }
        self.repairs += 1;
        let clipped = eig.eigenvalues.map(|e| e.max(0.0));
        *m = eig.eigenvectors * Mat5::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        *m = (*m + m.transpose()) * 0.5;
    }
}

fn run_filter(
    ss: &StateSpace,
    data: &PanelData,
    opts: FilterOptions,
) -> Result<FilterRun, FilterError> {
    let t_len = data.len();
    let (mut mean, mut cov) = ss.initial_state()?;
    let x_star = StateVec::new(mean[0], mean[1]);
    let mut psd = Psd {
        min_eigenvalue: None,
        repairs: 0,
        diagnostics: opts.diagnostics,
    };
    let mut loglik = 0.0;
    let mut observations = 0usize;
    let mut path = Vec::with_capacity(t_len);
    let mut v_lag = ss.vol_at(x_star);
    let identity = Mat5::identity();

    for t in 0..t_len {
        let diverged = |reason| FilterError::Diverged {
            quarter: data.quarters[t],
            row: t,
            reason,
        };
        for row in &ss.rows {
            let y = match row.series {
                Series::ShortRate => data.short_rate_per_quarter(t),
                Series::Inflation => data.inflation.get(t + 1).copied().flatten(),
                Series::Yield(n) => data.yield_per_quarter(n, t),
            };
            let Some(y) = y else { continue };
            let h = &row.loading;
            let r = ss.measurement_variance(row.series, v_lag);
            let ph = cov * h;
            let f = h.dot(&ph) + r;
            let v = y - row.intercept - h.dot(&mean);
            if !(f > 0.0 && f.is_finite() && v.is_finite()) {
                return Err(diverged("innovation variance not positive and finite"));
            }
            let k = ph / f;
            mean += k * v;
            let ikh = identity - k * h.transpose();
            cov = ikh * cov * ikh.transpose() + k * k.transpose() * r;
            loglik -= 0.5 * (LN_2PI + f.ln() + v * v / f);
            observations += 1;
        }
        if !loglik.is_finite() || mean.iter().any(|m| !m.is_finite()) {
            return Err(diverged("non-finite likelihood"));
        }
        psd.enforce(&mut cov);
        let filtered = AugmentedState::from_vector(&mean);
        path.push(FilterState {
            mean: filtered,
            cov,
            loglik_accum: loglik,
        });

        let v = match opts.vol {
            VolEvaluation::Expected => ss.expected_vol(filtered.x, &cov),
            VolEvaluation::AtMean => ss.vol_at(filtered.x),
        };
        v_lag = v;
        let q = ss.state_noise(v);
        mean = ss.transition * mean + ss.offset;
        cov = ss.transition * cov * ss.transition.transpose() + q;
        psd.enforce(&mut cov);
    }
    Ok(FilterRun {
        loglik,
        path,
        observations,
        min_eigenvalue: psd.min_eigenvalue,
        floor_repairs: psd.repairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn dimensions() {
        let p = fixtures::table1_proportional();
        let table = riccati_p(&p, 120);
        let s1 = build_state_space(&p, Stage::One, None, &[]).unwrap();
        assert_eq!(s1.rows.len(), 2);
        assert_eq!(s1.transition.nrows(), 5);
        let s2 =
            build_state_space(&p, Stage::Two, Some(&table), &[4, 8, 16, 28, 40, 60, 120]).unwrap();
        assert_eq!(s2.rows.len(), 9);
        assert!(!s2.degenerate_noise);
        assert_eq!(
            build_state_space(&p, Stage::Two, None, &[4]),
            Err(FilterError::MissingTable(4))
        );
        let short = riccati_p(&p, 10);
        assert!(build_state_space(&p, Stage::Two, Some(&short), &[40]).is_err());
    }

    #[test]
    fn zero_noise_scales_are_flagged() {
        let mut p = fixtures::table1_proportional();
        p.omega_pi = 0.0;
        p.omega_s = 0.0;
        p.nu0 = 0.0;
        let ss = build_state_space(&p, Stage::One, None, &[]).unwrap();
        assert!(ss.degenerate_noise);
        assert_eq!(
            ss.measurement_variance(Series::Inflation, ss.vol_at(Vec2::new(2.0, 3.0))),
            MIN_MEASUREMENT_VARIANCE
        );
    }

    #[test]
    fn seasonal_block_is_companion_form() {
        let p = fixtures::table1_proportional();
        let ss = build_state_space(&p, Stage::One, None, &[]).unwrap();
        let z = Vec5::new(0.0, 0.0, 1.0, 2.0, 3.0);
        let next = ss.transition * z;
        assert_eq!([next[2], next[3], next[4]], [-6.0, 1.0, 2.0]);
    }

    #[test]
    fn initial_covariance_solves_lyapunov() {
        let p = fixtures::table1_dependent();
        let ss = build_state_space(&p, Stage::One, None, &[]).unwrap();
        let (mean, cov) = ss.initial_state().unwrap();
        let x = StateVec::new(mean[0], mean[1]);
        let f = ss.transition.fixed_view::<2, 2>(0, 0).into_owned();
        let p2 = cov.fixed_view::<2, 2>(0, 0).into_owned();
        let q = ss
            .state_noise(ss.vol_at(x))
            .fixed_view::<2, 2>(0, 0)
            .into_owned();
        let resid = f * p2 * f.transpose() + q - p2;
        assert!(resid.abs().max() < 1e-10);
    }

    #[test]
    fn expected_vol_reduces_to_floored_mean() {
        let p = fixtures::table1_proportional();
        let ss = build_state_space(&p, Stage::One, None, &[]).unwrap();
        let x = Vec2::new(0.5, 0.5);
        assert_eq!(ss.expected_vol(x, &Mat5::zeros()), ss.vol_at(x));
        let cov = Mat5::identity();
        let e = ss.expected_vol(x, &cov);
        let m = ss.vol_at(x);
        assert!(e.0[0] > m.0[0] && e.0[1] > m.0[1]);
        // Far inside the positive region the floor is irrelevant.
        let far = Vec2::new(20.0, 20.0);
        let e = ss.expected_vol(far, &(cov * 1e-4));
        assert!((e - ss.vol_at(far)).max_abs() < 1e-12);
    }

    #[test]
    fn empty_panel_is_rejected() {
        let p = fixtures::table1_proportional();
        let data = PanelData::default();
        assert_eq!(
            ekf_loglik(&p, &data, Stage::One),
            Err(FilterError::EmptyPanel)
        );
    }

    #[test]
    fn nonstationary_params_are_rejected() {
        let mut p = fixtures::table1_proportional();
        p.a_hat = crate::linalg::Mat2::new(0.01, 0.0, 0.0, -0.1);
        let data = PanelData::empty(Quarter { year: 2000, q: 1 }, 3, &[]);
        assert!(matches!(
            ekf_loglik(&p, &data, Stage::One),
            Err(FilterError::Model(_))
        ));
    }
}
