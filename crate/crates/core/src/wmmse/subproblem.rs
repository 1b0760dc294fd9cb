//! Convex QCQP solved in every WMMSE iteration:
//!
//! ```text
//! minimize   sum_i  mu_i^T C_i mu_i - 2 c_i^T mu_i
//! subject to sum_k  mu_kl^2 <= P          for every AP l
//! ```
//!
//! Internally the problem is normalized to `x = mu / sqrt(P)` and
//! `Q_i = C_i / s` with `s = max_i tr(C_i) / L`, so every ball has unit radius
//! and the objective reported as "normalized" is `objective / (s P)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::precoding::SeParameters;

/// Relative eigenvalue floor below which `C_i` is declared non-convex.
pub const CONVEXITY_FLOOR: f64 = -1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum SubproblemSolver {
    Admm { rho: f64, eps_inner: f64, max_iters: usize },
    /// `step <= 0` selects `1 / (2 lambda_max)`.
    ProjectedGradient { step: f64, eps_inner: f64, max_iters: usize },
}

impl Default for SubproblemSolver {
    fn default() -> Self {
        SubproblemSolver::Admm { rho: 1.0, eps_inner: 1e-6, max_iters: 20_000 }
    }
}

impl SubproblemSolver {
    pub fn eps_inner(&self) -> f64 {
        match *self {
            SubproblemSolver::Admm { eps_inner, .. } | SubproblemSolver::ProjectedGradient { eps_inner, .. } => {
                eps_inner
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            SubproblemSolver::Admm { rho, eps_inner, max_iters } => rho > 0.0 && eps_inner > 0.0 && max_iters > 0,
            SubproblemSolver::ProjectedGradient { eps_inner, max_iters, .. } => eps_inner > 0.0 && max_iters > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("subproblem tolerances and iteration limits must be positive".into()))
        }
    }
}

/// One instance of the QCQP in normalized form.
#[derive(Debug, Clone)]
pub struct Qcqp {
    /// Normalized quadratic terms `Q_i`, PSD.
    pub quad: Vec<DMatrix<f64>>,
    /// Normalized linear terms `q_i`, `K x L`.
    pub lin: DMatrix<f64>,
    pub budget: f64,
    /// Objective scale `s`.
    pub scale: f64,
}

fn clip_psd(m: DMatrix<f64>, scale: f64) -> Result<DMatrix<f64>> {
    let eig = m.symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < CONVEXITY_FLOOR * scale {
        return Err(Error::NotConvex(min / scale));
    }
    if min >= 0.0 {
        return Ok(eig.recompose());
    }
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose())
}

impl Qcqp {
    /// Builds the problem from raw `C_i` (symmetrized here) and `c_i`.
    pub fn new(quad: Vec<DMatrix<f64>>, lin: DMatrix<f64>, budget: f64) -> Result<Self> {
        let l_count = lin.ncols();
        if quad.len() != lin.nrows() || quad.iter().any(|q| q.shape() != (l_count, l_count)) {
            return Err(Error::Dimension("QCQP blocks do not match the linear term".into()));
        }
        let scale = quad.iter().map(|q| q.trace()).fold(0.0, f64::max) / l_count.max(1) as f64;
        let scale = if scale > 0.0 && scale.is_finite() { scale } else { 1.0 };
        let quad = quad
            .into_iter()
            .map(|q| clip_psd((&q + q.transpose()) * (0.5 / scale), 1.0))
            .collect::<Result<Vec<_>>>()?;
        let lin = lin / (scale * budget.sqrt());
        Ok(Qcqp { quad, lin, budget, scale })
    }

    /// WMMSE step-5 problem: `C_i = sum_k w_k v_k^2 B_ki`, `c_i = w_i v_i a_i`.
    pub fn from_wmmse(params: &SeParameters, omega: &[f64], v: &[f64], budget: f64) -> Result<Self> {
        let (k_count, l_count) = (params.num_ues(), params.num_aps());
        let mut quad = vec![DMatrix::zeros(l_count, l_count); k_count];
        for (i, q) in quad.iter_mut().enumerate() {
            let qs = q.as_mut_slice();
            for k in 0..k_count {
                let w = omega[k] * v[k] * v[k];
                if w == 0.0 {
                    continue;
                }
                let blk = params.b_block(k, i);
                // blk is row-major and symmetric, so the column-major view is the same
                for (dst, src) in qs.iter_mut().zip(blk) {
                    *dst += w * src;
                }
            }
        }
        let lin = DMatrix::from_fn(k_count, l_count, |i, l| omega[i] * v[i] * params.a[(i, l)]);
        Qcqp::new(quad, lin, budget)
    }

    pub fn num_ues(&self) -> usize {
        self.lin.nrows()
    }

    pub fn num_aps(&self) -> usize {
        self.lin.ncols()
    }

    fn normalized_of(&self, x: &DMatrix<f64>) -> f64 {
        let mut total = 0.0;
        for i in 0..self.num_ues() {
            let xi = x.row(i).transpose();
            total += (xi.transpose() * &self.quad[i] * &xi)[(0, 0)] - 2.0 * self.lin.row(i).dot(&x.row(i));
        }
        total
    }

    /// Objective on the normalized scale for an allocation `mu` in sqrt(W).
    pub fn normalized_objective(&self, mu: &DMatrix<f64>) -> f64 {
        self.normalized_of(&(mu / self.budget.sqrt()))
    }

    /// Objective in the original units.
    pub fn objective(&self, mu: &DMatrix<f64>) -> f64 {
        self.normalized_objective(mu) * self.scale * self.budget
    }

    pub fn solve(&self, solver: &SubproblemSolver, warm: Option<&DMatrix<f64>>) -> QcqpSolution {
        let x0 = match warm {
            Some(mu) => project(mu / self.budget.sqrt()),
            None => DMatrix::zeros(self.num_ues(), self.num_aps()),
        };
        let (x, iterations, exhausted) = match *solver {
            SubproblemSolver::Admm { rho, eps_inner, max_iters } => self.admm(x0, rho, eps_inner, max_iters),
            SubproblemSolver::ProjectedGradient { step, eps_inner, max_iters } => {
                self.projected_gradient(x0, step, eps_inner, max_iters)
            }
        };
        let objective = self.normalized_of(&x);
        QcqpSolution { mu: x * self.budget.sqrt(), normalized_objective: objective, iterations, exhausted }
    }

    /// Scaled-dual ADMM on the split `x = z`, `z` in the product of unit balls.
    /// Each `(Q_i + rho I)` is factorized once per call.
    fn admm(&self, x0: DMatrix<f64>, rho: f64, eps: f64, max_iters: usize) -> (DMatrix<f64>, usize, bool) {
        let (k_count, l_count) = (self.num_ues(), self.num_aps());
        let factors: Vec<_> = self
            .quad
            .iter()
            .map(|q| {
                (q + DMatrix::identity(l_count, l_count) * rho)
                    .cholesky()
                    .expect("PSD plus rho I is positive definite")
            })
            .collect();
        let tol = eps;
        let mut z = x0.clone();
        let mut x = x0;
        let mut u = DMatrix::zeros(k_count, l_count);
        let mut rhs = DVector::zeros(l_count);
        let mut best = (f64::INFINITY, z.clone());
        for it in 1..=max_iters {
            for i in 0..k_count {
                for l in 0..l_count {
                    rhs[l] = self.lin[(i, l)] + rho * (z[(i, l)] - u[(i, l)]);
                }
                factors[i].solve_mut(&mut rhs);
                for l in 0..l_count {
                    x[(i, l)] = rhs[l];
                }
            }
            let z_prev = std::mem::replace(&mut z, project(&x + &u));
            let mut primal = 0.0;
            let mut dual = 0.0;
            for idx in 0..k_count * l_count {
                let r = x[idx] - z[idx];
                u[idx] += r;
                primal += r * r;
                let d = z[idx] - z_prev[idx];
                dual += d * d;
            }
            let primal = primal.sqrt();
            let dual = rho * dual.sqrt();
            if primal < tol && dual < tol {
                return (z, it, false);
            }
            if it % 64 == 0 {
                let obj = self.normalized_of(&z);
                if obj < best.0 {
                    best = (obj, z.clone());
                }
            }
        }
        let obj = self.normalized_of(&z);
        if obj < best.0 {
            best = (obj, z);
        }
        (best.1, max_iters, true)
    }

    fn projected_gradient(&self, x0: DMatrix<f64>, step: f64, eps: f64, max_iters: usize) -> (DMatrix<f64>, usize, bool) {
        let step = if step > 0.0 {
            step
        } else {
            let lmax = self
                .quad
                .iter()
                .map(|q| q.clone().symmetric_eigen().eigenvalues.max())
                .fold(0.0, f64::max);
            0.5 / lmax.max(1e-12)
        };
        let k_count = self.num_ues();
        let tol = 0.01 * eps;
        let mut x = x0;
        for it in 1..=max_iters {
            let mut grad = DMatrix::zeros(k_count, self.num_aps());
            for i in 0..k_count {
                let g = (&self.quad[i] * x.row(i).transpose() - self.lin.row(i).transpose()) * 2.0;
                grad.set_row(i, &g.transpose());
            }
            let next = project(&x - grad * step);
            let moved = (&next - &x).norm() / step;
            x = next;
            if moved < tol {
                return (x, it, false);
            }
        }
        (x, max_iters, true)
    }
}

/// Projects every AP column onto the unit ball.
pub fn project(mut x: DMatrix<f64>) -> DMatrix<f64> {
    for mut col in x.column_iter_mut() {
        let norm = col.norm();
        if norm > 1.0 {
            col /= norm;
        }
    }
    x
}

#[derive(Debug, Clone)]
pub struct QcqpSolution {
    /// Feasible (possibly signed) square-root powers.
    pub mu: DMatrix<f64>,
    pub normalized_objective: f64,
    pub iterations: usize,
    /// Iteration limit reached; `mu` is the best feasible iterate seen.
    pub exhausted: bool,
}
