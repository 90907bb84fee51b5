use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::normal::inverse_normal_cdf;
use super::rng::PathRng;
use crate::feller::Measure;
use crate::linalg::{Mat2, Vec2};
use crate::model::{short_rate, vol_floor, PhysicalParams, StateVec};
use crate::riccati::riccati_p;
use crate::units::{self, BP_PER_PERCENT};

/// Paths per work unit. Fixed so that results do not depend on the thread
/// count.
const BLOCK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dynamics {
    /// Physical drift minus the floored risk-premium correction.
    Cutoff,
    /// Affine risk-neutral drift.
    Raw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub paths: usize,
    /// Longest path length in quarters.
    pub horizon: usize,
    pub seed: u64,
    pub dynamics: Dynamics,
    /// `P` simulates the physical dynamics (the dynamics flag is then
    /// ignored); `Q` prices.
    pub measure: Measure,
    pub ci_level: f64,
    /// `None` uses the ambient rayon pool.
    pub threads: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            paths: 1_000_000,
            horizon: 200,
            seed: 0,
            dynamics: Dynamics::Cutoff,
            measure: Measure::Q,
            ci_level: 0.99,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{field}: {message}")]
pub struct SimConfigError {
    pub field: &'static str,
    pub message: &'static str,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimConfigError> {
        if self.paths < 1 {
            return Err(SimConfigError {
                field: "paths",
                message: "need at least one path",
            });
        }
        if self.horizon < 1 {
            return Err(SimConfigError {
                field: "horizon",
                message: "need at least one quarter",
            });
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(SimConfigError {
                field: "ci_level",
                message: "must lie in (0, 1)",
            });
        }
        if self.threads == Some(0) {
            return Err(SimConfigError {
                field: "threads",
                message: "must be positive",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error(transparent)]
    Config(#[from] SimConfigError),
    #[error("maturity {n} exceeds the simulation horizon {horizon}")]
    BeyondHorizon { n: usize, horizon: usize },
    #[error("maturity must be at least one quarter")]
    ZeroMaturity,
    #[error("no maturities requested")]
    NoMaturities,
    #[error("a confidence band needs at least two paths, got {0}")]
    TooFewPaths(usize),
    #[error("cannot build thread pool: {0}")]
    ThreadPool(String),
}

/// Rounding slack, in basis points, for deciding whether a band covers zero.
pub const BAND_ROUNDING_BP: f64 = 1e-9;

/// Estimate for one maturity. Yields are annualized percent, differences
/// basis points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MCEstimate {
    pub maturity: usize,
    pub price_mean: f64,
    /// Standard error of the mean.
    pub price_se: f64,
    pub price_ci: [f64; 2],
    pub yield_point: f64,
    pub yield_ci: [f64; 2],
    pub analytic_price: f64,
    pub analytic_yield: f64,
    pub diff_bp: f64,
    pub diff_ci_bp: [f64; 2],
    /// Fraction of visited states `x_0..x_{n-1}` with `V_i < 0`.
    pub floor_frac: [f64; 2],
}

impl MCEstimate {
    /// True when the band for the yield difference contains zero, up to
    /// [`BAND_ROUNDING_BP`]. At `n = 1` the price is deterministic and the
    /// band collapses to a point that differs from zero only by rounding.
    pub fn band_contains_zero(&self) -> bool {
        self.diff_ci_bp[0] <= BAND_ROUNDING_BP && -BAND_ROUNDING_BP <= self.diff_ci_bp[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationRun {
    pub estimates: Vec<MCEstimate>,
    pub paths: usize,
    pub steps: usize,
    /// Number of simulated states with `V_i < 0`, over all paths and times.
    pub floored_states: [u64; 2],
    pub total_states: u64,
}

impl SimulationRun {
    pub fn floor_fraction(&self) -> [f64; 2] {
        let t = self.total_states.max(1) as f64;
        [
            self.floored_states[0] as f64 / t,
            self.floored_states[1] as f64 / t,
        ]
    }
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    #[inline]
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = self.count + other.count;
        let delta = other.mean - self.mean;
        let w = other.count as f64 / n as f64;
        self.mean += delta * w;
        self.m2 += other.m2 + delta * delta * self.count as f64 * w;
        self.count = n;
    }

    fn sample_variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        (self.m2 / (self.count - 1) as f64).max(0.0)
    }
}

struct BlockResult {
    moments: Vec<Moments>,
    floored: Vec<[u64; 2]>,
}

/// Precomputed transition `x' = Mx + c − [cutoff] Σ((V∨0)⊙λ) + Σ(√(V∨0)⊙ε)`.
struct Stepper {
    persistence: Mat2<f64>,
    offset: Vec2<f64>,
    alpha: Vec2<f64>,
    beta: Mat2<f64>,
    sigma: Mat2<f64>,
    correction: Option<Vec2<f64>>,
}

impl Stepper {
    fn new(p: &PhysicalParams<f64>, cfg: &SimConfig) -> Self {
        let (persistence, offset, correction) = match (cfg.measure, cfg.dynamics) {
            (Measure::P, _) => (p.persistence(), p.b_hat, None),
            (Measure::Q, Dynamics::Cutoff) => (p.persistence(), p.b_hat, Some(p.lambda)),
            (Measure::Q, Dynamics::Raw) => {
                let rn = p.to_risk_neutral();
                (Mat2::identity() + rn.a, rn.b, None)
            }
        };
        Stepper {
            persistence,
            offset,
            alpha: p.alpha,
            beta: p.beta,
            sigma: p.sigma,
            correction,
        }
    }

    #[inline]
    fn volatility(&self, x: StateVec<f64>) -> Vec2<f64> {
        self.alpha + self.beta.mul_vec(x)
    }

    #[inline]
    fn step(&self, x: StateVec<f64>, v: Vec2<f64>, eps: Vec2<f64>) -> StateVec<f64> {
        let vf = vol_floor(v);
        let mut next = self.persistence.mul_vec(x) + self.offset;
        if let Some(lambda) = self.correction {
            next = next - self.sigma.mul_vec(vf.hadamard(lambda));
        }
        next + self.sigma.mul_vec(vf.map(f64::sqrt).hadamard(eps))
    }
}

fn simulate_block(
    stepper: &Stepper,
    x0: StateVec<f64>,
    base_rng: &PathRng,
    paths: std::ops::Range<usize>,
    record_at: &[Option<usize>],
    n_requested: usize,
) -> BlockResult {
    let len = record_at.len();
    let mut moments = vec![Moments::default(); n_requested];
    let mut floored = vec![[0u64; 2]; len];
    for path in paths {
        let mut rng = base_rng.for_path(path as u64);
        let mut x = x0;
        let mut log_discount = 0.0;
        for k in 0..len {
            let v = stepper.volatility(x);
            if v.0[0] < 0.0 {
                floored[k][0] += 1;
            }
            if v.0[1] < 0.0 {
                floored[k][1] += 1;
            }
            log_discount -= short_rate(x);
            if let Some(slot) = record_at[k] {
                moments[slot].push(log_discount.exp());
            }
            if k + 1 < len {
                let eps = Vec2::new(rng.normal(), rng.normal());
                x = stepper.step(x, v, eps);
            }
        }
    }
    BlockResult { moments, floored }
}

/// Estimates zero-coupon bond prices `E[exp(-Σ_{k<n} r_k)]` from `x0` for
/// every requested maturity, evaluating all maturities on the same paths.
pub fn price_bond_mc(
    p: &PhysicalParams<f64>,
    x0: StateVec<f64>,
    maturities: &[usize],
    cfg: &SimConfig,
) -> Result<SimulationRun, McError> {
    cfg.validate()?;
    if maturities.is_empty() {
        return Err(McError::NoMaturities);
    }
    if maturities.contains(&0) {
        return Err(McError::ZeroMaturity);
    }
    let max_n = *maturities.iter().max().expect("nonempty");
    if max_n > cfg.horizon {
        return Err(McError::BeyondHorizon {
            n: max_n,
            horizon: cfg.horizon,
        });
    }
    if cfg.paths < 2 {
        return Err(McError::TooFewPaths(cfg.paths));
    }

    // record_at[k] = slot of maturity k + 1 among the distinct maturities.
    let mut distinct: Vec<usize> = maturities.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let mut record_at = vec![None; max_n];
    for (slot, &n) in distinct.iter().enumerate() {
        record_at[n - 1] = Some(slot);
    }

    let stepper = Stepper::new(p, cfg);
    let base_rng = PathRng::new(cfg.seed, 0);
    let blocks: Vec<std::ops::Range<usize>> = (0..cfg.paths)
        .step_by(BLOCK)
        .map(|start| start..(start + BLOCK).min(cfg.paths))
        .collect();
    let run_blocks = || -> Vec<BlockResult> {
        blocks
            .par_iter()
            .map(|r| {
                simulate_block(
                    &stepper,
                    x0,
                    &base_rng,
                    r.clone(),
                    &record_at,
                    distinct.len(),
                )
            })
            .collect()
    };
    let results = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| McError::ThreadPool(e.to_string()))?
            .install(run_blocks),
        None => run_blocks(),
    };

    let mut moments = vec![Moments::default(); distinct.len()];
    let mut floored = vec![[0u64; 2]; max_n];
    for block in &results {
        for (m, b) in moments.iter_mut().zip(&block.moments) {
            m.merge(b);
        }
        for (f, b) in floored.iter_mut().zip(&block.floored) {
            f[0] += b[0];
            f[1] += b[1];
        }
    }

    let table = riccati_p(p, max_n);
    let z = inverse_normal_cdf(0.5 + cfg.ci_level / 2.0);
    let m = cfg.paths as f64;
    let mut cumulative = vec![[0u64; 2]; max_n + 1];
    for k in 0..max_n {
        cumulative[k + 1] = [
            cumulative[k][0] + floored[k][0],
            cumulative[k][1] + floored[k][1],
        ];
    }
    let to_yield = |price: f64, n: usize| -> f64 {
        if price > 0.0 {
            units::to_annual_percent(-price.ln() / n as f64)
        } else {
            f64::INFINITY
        }
    };

    let estimates = maturities
        .iter()
        .map(|&n| {
            let slot = distinct.binary_search(&n).expect("maturity recorded");
            let mo = &moments[slot];
            let mean = mo.mean;
            let se = (mo.sample_variance() / m).sqrt();
            let price_ci = [mean - z * se, mean + z * se];
            let analytic_price = table.analytic_price(x0, n).expect("within table");
            let analytic_yield = table.analytic_yield_annual(x0, n).expect("within table");
            let yield_point = to_yield(mean, n);
            let yield_ci = [to_yield(price_ci[1], n), to_yield(price_ci[0], n)];
            let visited = n as f64 * m;
            MCEstimate {
                maturity: n,
                price_mean: mean,
                price_se: se,
                price_ci,
                yield_point,
                yield_ci,
                analytic_price,
                analytic_yield,
                diff_bp: (yield_point - analytic_yield) * BP_PER_PERCENT,
                diff_ci_bp: [
                    (yield_ci[0] - analytic_yield) * BP_PER_PERCENT,
                    (yield_ci[1] - analytic_yield) * BP_PER_PERCENT,
                ],
                floor_frac: [
                    cumulative[n][0] as f64 / visited,
                    cumulative[n][1] as f64 / visited,
                ],
            }
        })
        .collect();

    Ok(SimulationRun {
        estimates,
        paths: cfg.paths,
        steps: max_n,
        floored_states: cumulative[max_n],
        total_states: (max_n * cfg.paths) as u64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YieldDiffRecord {
    pub maturity: usize,
    pub diff_bp: f64,
    pub ci_lo_bp: f64,
    pub ci_hi_bp: f64,
}

/// Simulated minus analytic yield per maturity, with its confidence band.
pub fn yield_diff_curve(
    p: &PhysicalParams<f64>,
    x0: StateVec<f64>,
    maturities: &[usize],
    cfg: &SimConfig,
) -> Result<Vec<YieldDiffRecord>, McError> {
    let run = price_bond_mc(p, x0, maturities, cfg)?;
    Ok(run
        .estimates
        .iter()
        .map(|e| YieldDiffRecord {
            maturity: e.maturity,
            diff_bp: e.diff_bp,
            ci_lo_bp: e.diff_ci_bp[0],
            ci_hi_bp: e.diff_ci_bp[1],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn cfg(paths: usize, seed: u64) -> SimConfig {
        SimConfig {
            paths,
            horizon: 120,
            seed,
            ..SimConfig::default()
        }
    }

    fn deterministic() -> PhysicalParams<f64> {
        let mut p = fixtures::table1_proportional();
        p.alpha = Vec2::zero();
        p.beta = Mat2::zero();
        p
    }

    #[test]
    fn deterministic_rates_price_exactly() {
        let p = deterministic();
        let x0 = Vec2::new(1.0, 4.0);
        let ns: Vec<usize> = (1..=120).collect();
        for dynamics in [Dynamics::Cutoff, Dynamics::Raw] {
            let c = SimConfig {
                dynamics,
                ..cfg(3000, 1)
            };
            let run = price_bond_mc(&p, x0, &ns, &c).unwrap();
            for e in &run.estimates {
                assert!(
                    (e.price_mean - e.analytic_price).abs() <= 1e-12,
                    "n={}",
                    e.maturity
                );
                assert_eq!(e.price_se, 0.0);
            }
        }
        let curve = yield_diff_curve(&p, x0, &ns, &cfg(100, 2)).unwrap();
        assert!(curve.iter().all(|r| r.diff_bp.abs() < 1e-8));
    }

    #[test]
    fn bands_are_ordered() {
        let p = fixtures::table1_dependent();
        let x0 = p.equilibrium_state().unwrap();
        let run = price_bond_mc(&p, x0, &[1, 4, 40, 120], &cfg(4000, 3)).unwrap();
        for e in &run.estimates {
            assert!(e.price_ci[0] <= e.price_mean && e.price_mean <= e.price_ci[1]);
            assert!(e.yield_ci[0] <= e.yield_point && e.yield_point <= e.yield_ci[1]);
            assert!(e.diff_ci_bp[0] <= e.diff_bp && e.diff_bp <= e.diff_ci_bp[1]);
        }
        // One-quarter bond is deterministic given x0.
        assert_eq!(run.estimates[0].price_se, 0.0);
    }

    #[test]
    fn output_does_not_depend_on_thread_count() {
        let p = fixtures::table1_independent();
        let x0 = p.equilibrium_state().unwrap();
        let ns = [1, 2, 3, 10, 60];
        let a = price_bond_mc(
            &p,
            x0,
            &ns,
            &SimConfig {
                threads: Some(1),
                ..cfg(5000, 9)
            },
        )
        .unwrap();
        let b = price_bond_mc(
            &p,
            x0,
            &ns,
            &SimConfig {
                threads: Some(3),
                ..cfg(5000, 9)
            },
        )
        .unwrap();
        assert_eq!(a, b);
        let c = price_bond_mc(
            &p,
            x0,
            &ns,
            &SimConfig {
                threads: Some(1),
                ..cfg(5000, 10)
            },
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn errors() {
        let p = fixtures::table1_proportional();
        let x0 = Vec2::new(2.0, 3.0);
        assert_eq!(
            price_bond_mc(&p, x0, &[121], &cfg(10, 0)),
            Err(McError::BeyondHorizon {
                n: 121,
                horizon: 120
            })
        );
        assert_eq!(
            price_bond_mc(&p, x0, &[5], &cfg(1, 0)),
            Err(McError::TooFewPaths(1))
        );
        assert_eq!(
            price_bond_mc(&p, x0, &[0, 5], &cfg(10, 0)),
            Err(McError::ZeroMaturity)
        );
        let bad = SimConfig {
            ci_level: 1.0,
            ..cfg(10, 0)
        };
        assert!(matches!(
            price_bond_mc(&p, x0, &[5], &bad),
            Err(McError::Config(_))
        ));
    }

    #[test]
    fn floor_statistics_are_recorded() {
        let p = fixtures::table1_proportional();
        // V < 0 at the start, so every path floors at k = 0.
        let x0 = Vec2::new(0.0, 0.0);
        let run = price_bond_mc(&p, x0, &[1, 8], &cfg(2000, 4)).unwrap();
        assert_eq!(run.estimates[0].floor_frac, [1.0, 1.0]);
        assert!(run.estimates[1].floor_frac[0] >= 1.0 / 8.0);
        assert!(run.floor_fraction()[0] > 0.0);
        assert_eq!(run.total_states, 8 * 2000);
    }

    #[test]
    fn moments_merge_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let mut whole = Moments::default();
        xs.iter().for_each(|&x| whole.push(x));
        let mut left = Moments::default();
        let mut right = Moments::default();
        xs[..333].iter().for_each(|&x| left.push(x));
        xs[333..].iter().for_each(|&x| right.push(x));
        left.merge(&right);
        assert!((left.mean - whole.mean).abs() < 1e-12);
        assert!((left.sample_variance() - whole.sample_variance()).abs() < 1e-9);
    }
}
