//! Two-step maximum likelihood: stage 1 fits the state dynamics to the
//! short rate and inflation, stage 2 fits `λ` and the yield noise loadings
//! with the stage-1 parameters held fixed.
//!
//! Both stages run Nelder-Mead on an unconstrained parameter vector. Sign
//! restrictions are built into the parameterization and the identification
//! rules of the model kind hold by construction.

use argmin::core::{CostFunction, Error as ArgminError, Executor, State, TerminationReason};
use argmin::solver::neldermead::NelderMead;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use super::filter::{ekf_loglik, FilterError, Stage};
use super::panel::PanelData;
use crate::feller::{check_feller, FellerReport, Measure, Tolerances};
use crate::linalg::{Mat2, Vec2};
use crate::model::{is_stable, ModelKind, PhysicalParams};

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationOptions {
    /// Number of Nelder-Mead runs. Each run after the first starts from a
    /// random perturbation of the best point so far.
    pub restarts: usize,
    pub max_iters: u64,
    /// Stop when the standard deviation of the simplex costs falls below this.
    pub sd_tolerance: f64,
    pub seed: u64,
    /// Stage 1 only: penalize violated Feller conditions under the physical
    /// measure.
    pub impose_feller: bool,
    /// Penalty weight of the first run, multiplied by `feller_growth` for
    /// each later run until the conditions hold.
    pub feller_weight: f64,
    pub feller_growth: f64,
    /// Equality tolerance used to decide whether the conditions hold.
    pub feller_tol_eq: f64,
    /// Scale of the restart perturbation relative to the simplex steps.
    pub restart_scale: f64,
}

impl Default for EstimationOptions {
    fn default() -> Self {
        EstimationOptions {
            restarts: 3,
            max_iters: 4000,
            sd_tolerance: 1e-7,
            seed: 0,
            impose_feller: false,
            feller_weight: 1e6,
            feller_growth: 10.0,
            feller_tol_eq: 1e-4,
            restart_scale: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub loglik: f64,
    pub iterations: u64,
    pub evaluations: u64,
    pub converged: bool,
    pub feller_weight: Option<f64>,
    pub feller_pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationReport {
    pub params: PhysicalParams<f64>,
    pub loglik: f64,
    /// Loglik at the starting point.
    pub start_loglik: f64,
    pub converged: bool,
    pub runs: Vec<RunSummary>,
    /// Physical-measure Feller report of the estimate (stage 1 with the
    /// conditions imposed).
    pub feller: Option<FellerReport<f64>>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    #[error("likelihood at the starting point is not finite: {0}")]
    BadStart(FilterError),
    #[error("starting point is not admissible: {0}")]
    Inadmissible(String),
    #[error("no run converged within {max_iters} iterations (best loglik {loglik})", loglik = .report.loglik)]
    NotConverged {
        max_iters: u64,
        report: Box<EstimationReport>,
    },
    #[error("optimizer failed: {0}")]
    Optimizer(String),
}

fn softplus(u: f64) -> f64 {
    if u > 30.0 {
        u
    } else {
        u.exp().ln_1p()
    }
}

fn softplus_inv(w: f64) -> f64 {
    let w = w.max(1e-12);
    if w > 30.0 {
        w
    } else {
        w.exp_m1().ln()
    }
}

/// Free parameters of stage 1 for one model kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stage1Layout {
    pub kind: ModelKind,
}

const COMMON: [&str; 6] = ["m11", "m12", "m21", "m22", "eq1", "eq2"];

impl Stage1Layout {
    pub fn new(kind: ModelKind) -> Self {
        Stage1Layout { kind }
    }

    /// Coordinate names. `m` is `I + â`, `eq` the equilibrium state, `u_*`
    /// softplus preimages and `log_c` the log of the dependent offset.
    pub fn names(&self) -> Vec<&'static str> {
        let own: &[&str] = match self.kind {
            ModelKind::Proportional => &["alpha", "beta1", "beta2", "sigma21", "sigma22"],
            ModelKind::DependentNonProportional => &[
                "alpha1", "log_c", "beta1", "beta2", "sigma12", "sigma21", "sigma22",
            ],
            ModelKind::Independent => &[
                "alpha1", "alpha2", "beta11", "beta12", "beta21", "beta22", "sigma12", "sigma21",
            ],
        };
        COMMON
            .iter()
            .chain(own)
            .chain(&["u_omega_pi", "u_omega_s"])
            .copied()
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.names().len()
    }

    /// Simplex step per coordinate.
    fn steps(&self) -> Vec<f64> {
        self.names()
            .iter()
            .map(|n| match *n {
                "m11" | "m12" | "m21" | "m22" => 0.02,
                "eq1" | "eq2" => 0.3,
                "log_c" | "u_omega_pi" | "u_omega_s" => 0.3,
                n if n.starts_with("alpha") => 0.1,
                n if n.starts_with("beta") => 0.03,
                _ => 0.1,
            })
            .collect()
    }

    /// Encodes `p`, which must satisfy the identification rules of the kind
    /// and have a nonsingular drift.
    pub fn encode(&self, p: &PhysicalParams<f64>) -> Result<Vec<f64>, EstimationError> {
        let x = p
            .equilibrium_state()
            .map_err(|e| EstimationError::Inadmissible(e.to_string()))?;
        let m = p.persistence();
        let mut v = vec![
            m.at(0, 0),
            m.at(0, 1),
            m.at(1, 0),
            m.at(1, 1),
            x.0[0],
            x.0[1],
        ];
        let (a, b, s) = (p.alpha, p.beta, p.sigma);
        match self.kind {
            ModelKind::Proportional => {
                v.extend([a.0[0], b.at(0, 0), b.at(0, 1), s.at(1, 0), s.at(1, 1)])
            }
            ModelKind::DependentNonProportional => {
                let c = p.dependent_offset();
                if c <= 0.0 {
                    return Err(EstimationError::Inadmissible(
                        "dependent offset must be positive".into(),
                    ));
                }
                v.extend([
                    a.0[0],
                    c.ln(),
                    b.at(0, 0),
                    b.at(0, 1),
                    s.at(0, 1),
                    s.at(1, 0),
                    s.at(1, 1),
                ])
            }
            ModelKind::Independent => v.extend([
                a.0[0],
                a.0[1],
                b.at(0, 0),
                b.at(0, 1),
                b.at(1, 0),
                b.at(1, 1),
                s.at(0, 1),
                s.at(1, 0),
            ]),
        }
        v.extend([softplus_inv(p.omega_pi), softplus_inv(p.omega_s)]);
        Ok(v)
    }

    /// Builds parameters from `theta`, taking `λ` and `ν` from `template`.
    pub fn decode(&self, theta: &[f64], template: &PhysicalParams<f64>) -> PhysicalParams<f64> {
        let m = Mat2::new(theta[0], theta[1], theta[2], theta[3]);
        let x_star = Vec2::new(theta[4], theta[5]);
        let t = &theta[6..];
        let (alpha, beta, sigma, rest) = match self.kind {
            ModelKind::Proportional => {
                let row = Vec2::new(t[1], t[2]);
                (
                    Vec2::splat(t[0]),
                    Mat2::from_rows(row, row),
                    Mat2::new(1.0, 0.0, t[3], t[4]),
                    &t[5..],
                )
            }
            ModelKind::DependentNonProportional => {
                let row = Vec2::new(t[2], t[3]);
                (
                    Vec2::new(t[0], t[0] + t[1].exp()),
                    Mat2::from_rows(row, row),
                    Mat2::new(1.0, t[4], t[5], t[6]),
                    &t[7..],
                )
            }
            ModelKind::Independent => (
                Vec2::new(t[0], t[1]),
                Mat2::new(t[2], t[3], t[4], t[5]),
                Mat2::new(1.0, t[6], t[7], 1.0),
                &t[8..],
            ),
        };
        PhysicalParams {
            a_hat: m - Mat2::identity(),
            b_hat: Vec2::zero(),
            alpha,
            beta,
            sigma,
            omega_pi: softplus(rest[0]),
            omega_s: softplus(rest[1]),
            kind: self.kind,
            ..*template
        }
        .with_equilibrium(x_star)
    }
}

/// Starting values from sample moments of the panel: equilibrium at the
/// sample means, diagonal persistence 0.9 and a volatility level near 0.5
/// at the equilibrium.
pub fn stage1_start(kind: ModelKind, data: &PanelData) -> PhysicalParams<f64> {
    let mean = |c: &[Option<f64>]| {
        let obs: Vec<f64> = c.iter().flatten().copied().collect();
        if obs.is_empty() {
            0.0
        } else {
            obs.iter().sum::<f64>() / obs.len() as f64
        }
    };
    let infl = mean(&data.inflation);
    let x_star = Vec2::new(mean(&data.short_rate) - infl, infl);
    let target = 0.5;
    let (alpha, beta, sigma) = match kind {
        ModelKind::Proportional => {
            let beta = Mat2::new(0.1, 0.1, 0.1, 0.1);
            let a = target - beta.row(0).dot(x_star);
            (Vec2::splat(a), beta, Mat2::new(1.0, 0.0, 0.0, 0.5))
        }
        ModelKind::DependentNonProportional => {
            let beta = Mat2::new(0.1, 0.1, 0.1, 0.1);
            let a = target - beta.row(0).dot(x_star);
            (Vec2::new(a, a + 0.2), beta, Mat2::new(1.0, 0.0, 0.0, 0.5))
        }
        ModelKind::Independent => {
            let beta = Mat2::new(0.1, 0.0, 0.0, 0.1);
            (
                Vec2::splat(target) - beta.mul_vec(x_star),
                beta,
                Mat2::identity(),
            )
        }
    };
    let a_hat = Mat2::new(-0.1, 0.0, 0.0, -0.1);
    PhysicalParams {
        a_hat,
        b_hat: -a_hat.mul_vec(x_star),
        alpha,
        beta,
        sigma,
        lambda: Vec2::zero(),
        omega_pi: 1.0,
        omega_s: 0.1,
        nu0: 1e-4,
        nu1: 0.0,
        nu2: 0.0,
        kind,
    }
}

/// Returns `None` when `p` is outside the admissible region.
fn stage1_loglik(p: &PhysicalParams<f64>, data: &PanelData) -> Option<f64> {
    if !is_stable(&p.persistence()) || p.a_hat.inverse().is_none() {
        return None;
    }
    if p.kind == ModelKind::Independent && p.beta.det() == 0.0 {
        return None;
    }
    ekf_loglik(p, data, Stage::One)
        .ok()
        .map(|r| r.loglik)
        .filter(|l| l.is_finite())
}

/// Extra penalized runs allowed beyond `restarts` when no feasible point has
/// been found.
const MAX_EXTRA_FELLER_RUNS: usize = 6;

/// Sum of squared shortfalls over the physical-measure Feller conditions.
fn feller_penalty(p: &PhysicalParams<f64>) -> f64 {
    match check_feller(p, Measure::P, Tolerances::new(0.0, 0.0)) {
        Ok(report) => report
            .conditions
            .iter()
            .map(|c| match c.kind {
                crate::feller::ConditionKind::EqZero => c.margin * c.margin,
                _ => {
                    let short = (-c.margin).max(0.0);
                    short * short
                }
            })
            .sum(),
        Err(_) => f64::INFINITY,
    }
}

struct Stage1Cost<'a> {
    layout: Stage1Layout,
    template: PhysicalParams<f64>,
    data: &'a PanelData,
    feller_weight: Option<f64>,
}

impl CostFunction for Stage1Cost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, theta: &Self::Param) -> Result<f64, ArgminError> {
        let p = self.layout.decode(theta, &self.template);
        let Some(ll) = stage1_loglik(&p, self.data) else {
            return Ok(f64::INFINITY);
        };
        let penalty = self.feller_weight.map_or(0.0, |w| w * feller_penalty(&p));
        Ok(-ll + penalty)
    }
}

struct Stage2Cost<'a> {
    stage1: PhysicalParams<f64>,
    data: &'a PanelData,
}

/// Stage-2 coordinates: `λ1, λ2` and softplus preimages of `ν0, ν1, ν2`.
fn stage2_decode(theta: &[f64], stage1: &PhysicalParams<f64>) -> PhysicalParams<f64> {
    PhysicalParams {
        lambda: Vec2::new(theta[0], theta[1]),
        nu0: softplus(theta[2]),
        nu1: softplus(theta[3]),
        nu2: softplus(theta[4]),
        ..*stage1
    }
}

fn stage2_encode(p: &PhysicalParams<f64>) -> Vec<f64> {
    vec![
        p.lambda.0[0],
        p.lambda.0[1],
        softplus_inv(p.nu0),
        softplus_inv(p.nu1),
        softplus_inv(p.nu2),
    ]
}

impl CostFunction for Stage2Cost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, theta: &Self::Param) -> Result<f64, ArgminError> {
        let p = stage2_decode(theta, &self.stage1);
        Ok(match ekf_loglik(&p, self.data, Stage::Two) {
            Ok(r) if r.loglik.is_finite() => -r.loglik,
            _ => f64::INFINITY,
        })
    }
}

struct RunResult {
    theta: Vec<f64>,
    cost: f64,
    iterations: u64,
    evaluations: u64,
    converged: bool,
}

fn nelder_mead<C>(
    cost: C,
    start: &[f64],
    steps: &[f64],
    opts: &EstimationOptions,
) -> Result<RunResult, EstimationError>
where
    C: CostFunction<Param = Vec<f64>, Output = f64>,
{
    let mut simplex = vec![start.to_vec()];
    for (i, s) in steps.iter().enumerate() {
        let mut v = start.to_vec();
        v[i] += s;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(opts.sd_tolerance)
        .map_err(|e| EstimationError::Optimizer(e.to_string()))?;
    let res = Executor::new(cost, solver)
        .configure(|s| s.max_iters(opts.max_iters))
        .run()
        .map_err(|e| EstimationError::Optimizer(e.to_string()))?;
    let state = res.state();
    Ok(RunResult {
        theta: state
            .get_best_param()
            .cloned()
            .unwrap_or_else(|| start.to_vec()),
        cost: state.get_best_cost(),
        iterations: state.get_iter(),
        evaluations: state
            .get_func_counts()
            .get("cost_count")
            .copied()
            .unwrap_or(0),
        converged: matches!(
            state.get_termination_reason(),
            Some(TerminationReason::SolverConverged)
        ),
    })
}

fn perturb(theta: &[f64], steps: &[f64], scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    theta
        .iter()
        .zip(steps)
        .map(|(t, s)| {
            let z: f64 = StandardNormal.sample(rng);
            t + scale * s * z
        })
        .collect()
}

/// Fits the stage-1 parameters of `init.kind` to the short rate and
/// inflation. `λ` and `ν` are carried over from `init` unchanged.
pub fn estimate_stage1(
    data: &PanelData,
    init: &PhysicalParams<f64>,
    opts: &EstimationOptions,
) -> Result<EstimationReport, EstimationError> {
    let layout = Stage1Layout::new(init.kind);
    let start = layout.encode(init)?;
    let start_p = layout.decode(&start, init);
    let start_loglik = ekf_loglik(&start_p, data, Stage::One)
        .map_err(EstimationError::BadStart)?
        .loglik;
    let steps = layout.steps();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let feller_eq = Tolerances::new(opts.feller_tol_eq, 0.0);
    let passes = |p: &PhysicalParams<f64>| {
        check_feller(p, Measure::P, feller_eq)
            .map(|r| r.overall)
            .unwrap_or(false)
    };

    let mut weight = opts.impose_feller.then_some(opts.feller_weight);
    let mut runs = Vec::new();
    // Best candidate: (feasible, loglik, theta).
    let mut best: Option<(bool, f64, Vec<f64>)> = None;
    let mut converged = false;
    // With the conditions imposed, keep escalating the weight past the
    // restart budget until a feasible point turns up.
    let budget = opts.restarts.max(1);
    let limit = if opts.impose_feller {
        budget + MAX_EXTRA_FELLER_RUNS
    } else {
        budget
    };
    for k in 0..limit {
        if k >= budget && best.as_ref().is_some_and(|(feasible, _, _)| *feasible) {
            break;
        }
        let from = match (&best, k) {
            (Some((_, _, theta)), k) if k > 0 => {
                perturb(theta, &steps, opts.restart_scale, &mut rng)
            }
            _ => start.clone(),
        };
        let cost = Stage1Cost {
            layout,
            template: *init,
            data,
            feller_weight: weight,
        };
        let run = nelder_mead(cost, &from, &steps, opts)?;
        let p = layout.decode(&run.theta, init);
        let ll = stage1_loglik(&p, data).unwrap_or(f64::NEG_INFINITY);
        let feasible = !opts.impose_feller || passes(&p);
        converged |= run.converged;
        runs.push(RunSummary {
            loglik: ll,
            iterations: run.iterations,
            evaluations: run.evaluations,
            converged: run.converged,
            feller_weight: weight,
            feller_pass: opts.impose_feller.then_some(feasible),
        });
        let better = match &best {
            None => true,
            Some((f, l, _)) => (feasible, ll) > (*f, *l) && run.cost.is_finite(),
        };
        if better && ll.is_finite() {
            best = Some((feasible, ll, run.theta));
        }
        if let Some(w) = weight.as_mut() {
            if !feasible {
                *w *= opts.feller_growth;
            }
        }
    }
    let Some((_, loglik, theta)) = best else {
        return Err(EstimationError::Optimizer(
            "no run reached a finite likelihood".into(),
        ));
    };
    let params = layout.decode(&theta, init);
    let report = EstimationReport {
        params,
        loglik,
        start_loglik,
        converged,
        runs,
        feller: opts
            .impose_feller
            .then(|| check_feller(&params, Measure::P, feller_eq).ok())
            .flatten(),
    };
    if !converged {
        return Err(EstimationError::NotConverged {
            max_iters: opts.max_iters,
            report: Box::new(report),
        });
    }
    Ok(report)
}

/// Fits `λ` and `ν` with every stage-1 parameter of `stage1` held fixed.
/// `init` supplies the starting `λ` and `ν`.
pub fn estimate_stage2(
    data: &PanelData,
    stage1: &PhysicalParams<f64>,
    init: &PhysicalParams<f64>,
    opts: &EstimationOptions,
) -> Result<EstimationReport, EstimationError> {
    let start = stage2_encode(init);
    let start_loglik = ekf_loglik(&stage2_decode(&start, stage1), data, Stage::Two)
        .map_err(EstimationError::BadStart)?
        .loglik;
    let steps = vec![0.1, 0.1, 1.0, 1.0, 1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut runs = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut converged = false;
    for k in 0..opts.restarts.max(1) {
        let from = match &best {
            Some((_, theta)) if k > 0 => perturb(theta, &steps, opts.restart_scale, &mut rng),
            _ => start.clone(),
        };
        let run = nelder_mead(
            Stage2Cost {
                stage1: *stage1,
                data,
            },
            &from,
            &steps,
            opts,
        )?;
        converged |= run.converged;
        let ll = -run.cost;
        runs.push(RunSummary {
            loglik: ll,
            iterations: run.iterations,
            evaluations: run.evaluations,
            converged: run.converged,
            feller_weight: None,
            feller_pass: None,
        });
        if ll.is_finite() && best.as_ref().is_none_or(|(b, _)| ll > *b) {
            best = Some((ll, run.theta));
        }
    }
    let Some((loglik, theta)) = best else {
        return Err(EstimationError::Optimizer(
            "no run reached a finite likelihood".into(),
        ));
    };
    let report = EstimationReport {
        params: stage2_decode(&theta, stage1),
        loglik,
        start_loglik,
        converged,
        runs,
        feller: None,
    };
    if !converged {
        return Err(EstimationError::NotConverged {
            max_iters: opts.max_iters,
            report: Box::new(report),
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamStdErr {
    pub name: &'static str,
    pub value: f64,
    /// NaN when the observed information is not positive definite.
    pub se: f64,
}

impl ParamStdErr {
    pub fn t_value(&self) -> f64 {
        self.value / self.se
    }
}

/// Standard errors of the stage-1 coordinates from the inverse of a
/// central finite-difference Hessian of the loglik.
pub fn stage1_standard_errors(
    data: &PanelData,
    p: &PhysicalParams<f64>,
) -> Result<Vec<ParamStdErr>, EstimationError> {
    let layout = Stage1Layout::new(p.kind);
    let theta = layout.encode(p)?;
    let names = layout.names();
    let n = theta.len();
    let f = |t: &[f64]| stage1_loglik(&layout.decode(t, p), data).unwrap_or(f64::NEG_INFINITY);
    let h: Vec<f64> = theta.iter().map(|t| 1e-4 * t.abs().max(1.0)).collect();
    let f0 = f(&theta);
    let shifted = |moves: &[(usize, f64)]| {
        let mut t = theta.clone();
        for &(i, d) in moves {
            t[i] += d;
        }
        f(&t)
    };
    let mut hess = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        hess[(i, i)] = (shifted(&[(i, h[i])]) - 2.0 * f0 + shifted(&[(i, -h[i])])) / (h[i] * h[i]);
        for j in 0..i {
            let v = (shifted(&[(i, h[i]), (j, h[j])])
                - shifted(&[(i, h[i]), (j, -h[j])])
                - shifted(&[(i, -h[i]), (j, h[j])])
                + shifted(&[(i, -h[i]), (j, -h[j])]))
                / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let info = -hess;
    let cov = info.clone().cholesky().map(|c| c.inverse());
    Ok(names
        .into_iter()
        .enumerate()
        .map(|(i, name)| ParamStdErr {
            name,
            value: theta[i],
            se: cov.as_ref().map_or(f64::NAN, |c| c[(i, i)].sqrt()),
        })
        .collect())
}
