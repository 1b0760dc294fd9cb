//! Weighted-MMSE block-coordinate optimizer for sum-SE and proportional
//! fairness under per-AP power budgets.
//!
//! Each outer iteration updates the receive scalars `v`, the MSEs `e` and the
//! weights `omega` in closed form, then solves a convex QCQP for the powers.
//! A candidate that lowers the utility (possible when the QCQP is solved only
//! approximately, or for PF where the weight function is not concave over the
//! whole MSE range) is pulled back toward the previous iterate by halving.

mod subproblem;

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heuristic;
use crate::precoding::{sinr_unchecked, PowerAllocation, SeParameters};

pub use subproblem::{project, Qcqp, QcqpSolution, SubproblemSolver, CONVEXITY_FLOOR};

/// Bounds applied to the MSE before computing the weights.
pub const MSE_CLAMP: f64 = 1e-12;
const MAX_BACKTRACKS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    SumSe,
    Pf,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::SumSe => "sumse",
            Objective::Pf => "pf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    EqualPower,
    FractionalHeuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub objective: Objective,
    /// Stop when the squared utility change falls below this value.
    pub eps_outer: f64,
    pub max_outer_iters: usize,
    pub subproblem: SubproblemSolver,
    pub init: InitScheme,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            objective: Objective::SumSe,
            eps_outer: 1e-4,
            max_outer_iters: 500,
            subproblem: SubproblemSolver::default(),
            init: InitScheme::EqualPower,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_outer > 0.0) || self.max_outer_iters == 0 {
            return Err(Error::InvalidConfig("eps_outer and max_outer_iters must be positive".into()));
        }
        self.subproblem.validate()
    }

    /// Starting point for [`wmmse_solve`].
    pub fn initial_allocation(&self, beta: &DMatrix<f64>, v_exponent: f64, budget: f64) -> Result<PowerAllocation> {
        match self.init {
            InitScheme::EqualPower => Ok(heuristic::equal_power(beta.nrows(), beta.ncols(), budget)),
            InitScheme::FractionalHeuristic => heuristic::heuristic_allocation(beta, v_exponent, budget),
        }
    }
}

/// Sum-SE or PF utility of the per-UE SINRs (pre-log factor omitted).
pub fn utility(objective: Objective, sinr: &[f64]) -> f64 {
    match objective {
        Objective::SumSe => sinr.iter().map(|s| (1.0 + s).log2()).sum(),
        Objective::Pf => sinr.iter().map(|s| (1.0 + s).log2().ln()).sum(),
    }
}

pub fn utility_of(params: &SeParameters, objective: Objective, mu: &DMatrix<f64>) -> f64 {
    utility(objective, &sinr_unchecked(params, mu))
}

/// MSE weight: `1/e` for sum-SE, `-1/(e ln e)` for PF.
pub fn weight(objective: Objective, e: f64) -> f64 {
    match objective {
        Objective::SumSe => 1.0 / e,
        Objective::Pf => -1.0 / (e * e.ln()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Auxiliaries {
    pub v: Vec<f64>,
    /// MSEs after clamping to `[MSE_CLAMP, 1 - MSE_CLAMP]`.
    pub e: Vec<f64>,
    pub omega: Vec<f64>,
    pub clamp_events: usize,
}

pub fn update_auxiliaries(params: &SeParameters, mu: &DMatrix<f64>, objective: Objective) -> Auxiliaries {
    let k_count = params.num_ues();
    let mut aux = Auxiliaries {
        v: Vec::with_capacity(k_count),
        e: Vec::with_capacity(k_count),
        omega: Vec::with_capacity(k_count),
        clamp_events: 0,
    };
    for k in 0..k_count {
        let s = params.signal(k, mu);
        let d = params.received_power(k, mu);
        let e_raw = 1.0 - s * s / d;
        let e = e_raw.clamp(MSE_CLAMP, 1.0 - MSE_CLAMP);
        if e != e_raw {
            aux.clamp_events += 1;
        }
        aux.v.push(s / d);
        aux.e.push(e);
        aux.omega.push(weight(objective, e));
    }
    aux
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iter: usize,
    pub utility: f64,
    pub max_violation: f64,
}

#[derive(Debug, Clone)]
pub struct WmmseOutcome {
    /// Nonnegative, budget-feasible solution.
    pub allocation: PowerAllocation,
    /// Last iterate before negative entries were replaced by their magnitude.
    pub signed: DMatrix<f64>,
    /// Utility per outer iteration, starting with the initial point.
    pub trace: Vec<TraceEntry>,
    /// Utility of `allocation` (after replacing negative entries by their magnitude).
    pub final_utility: f64,
    pub converged: bool,
    /// QCQP solves that hit their iteration limit.
    pub subproblem_exhausted: usize,
    pub clamp_events: usize,
    /// Outer iterations whose candidate needed step halving.
    pub backtracks: usize,
    /// Entries of the signed solution that were negative.
    pub flipped: usize,
}

impl WmmseOutcome {
    pub fn iterations(&self) -> usize {
        self.trace.len() - 1
    }
}

fn max_violation(mu: &DMatrix<f64>, budget: f64) -> f64 {
    mu.column_iter()
        .map(|c| (c.norm_squared() / budget - 1.0).max(0.0))
        .fold(0.0, f64::max)
}

/// Runs the WMMSE iterations from `init` until the squared utility change is
/// below `eps_outer` or the iteration limit is reached.
pub fn wmmse_solve(params: &SeParameters, cfg: &SolverConfig, init: &PowerAllocation) -> Result<WmmseOutcome> {
    params.check_dims(init.mu())?;
    let budget = init.budget();
    let objective = cfg.objective;
    let mut mu = init.mu().clone();
    let sinr0 = sinr_unchecked(params, &mu);
    if objective == Objective::Pf {
        if let Some(k) = sinr0.iter().position(|&s| s <= 0.0) {
            return Err(Error::ZeroInitialSinr(k));
        }
    }
    let mut current = utility(objective, &sinr0);
    let mut trace = vec![TraceEntry { iter: 0, utility: current, max_violation: max_violation(&mu, budget) }];
    let mut out = WmmseOutcome {
        allocation: init.clone(),
        signed: DMatrix::zeros(0, 0),
        trace: Vec::new(),
        final_utility: current,
        converged: false,
        subproblem_exhausted: 0,
        clamp_events: 0,
        backtracks: 0,
        flipped: 0,
    };

    for iter in 1..=cfg.max_outer_iters {
        let aux = update_auxiliaries(params, &mu, objective);
        out.clamp_events += aux.clamp_events;
        let qp = Qcqp::from_wmmse(params, &aux.omega, &aux.v, budget)?;
        let sol = qp.solve(&cfg.subproblem, Some(&mu));
        if sol.exhausted {
            out.subproblem_exhausted += 1;
        }
        let mut candidate = sol.mu;
        let mut cand_utility = utility_of(params, objective, &candidate);
        if cand_utility < current {
            out.backtracks += 1;
            let direction = &candidate - &mu;
            let mut accepted = false;
            let mut t = 1.0;
            for _ in 0..MAX_BACKTRACKS {
                t *= 0.5;
                let trial = &mu + &direction * t;
                let u = utility_of(params, objective, &trial);
                if u >= current {
                    candidate = trial;
                    cand_utility = u;
                    accepted = true;
                    break;
                }
            }
            if !accepted {
                candidate = mu.clone();
                cand_utility = current;
            }
        }
        let delta = cand_utility - current;
        mu = candidate;
        current = cand_utility;
        trace.push(TraceEntry { iter, utility: current, max_violation: max_violation(&mu, budget) });
        if delta * delta < cfg.eps_outer {
            out.converged = true;
            break;
        }
    }

    out.flipped = mu.iter().filter(|x| **x < 0.0).count();
    out.signed = mu.clone();
    let mu = mu.map(f64::abs);
    out.final_utility = utility_of(params, objective, &mu);
    out.allocation = PowerAllocation::new(mu, budget)?;
    out.trace = trace;
    Ok(out)
}

/// Writes `iter,utility,max_violation` rows.
pub fn write_trace_csv(mut w: impl Write, trace: &[TraceEntry]) -> Result<()> {
    writeln!(w, "iter,utility,max_constraint_violation")?;
    for t in trace {
        writeln!(w, "{},{:.12e},{:.6e}", t.iter, t.utility, t.max_violation)?;
    }
    Ok(())
}
