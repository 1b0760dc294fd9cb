//! Closed-form allocations driven by large-scale fading only.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::precoding::PowerAllocation;

/// Fractional coefficients of one AP: `sqrt(P) beta_k^v / sum_i beta_i^v`.
pub fn fractional_heuristic(beta_col: &[f64], v: f64, budget: f64) -> Vec<f64> {
    let shaped: Vec<f64> = beta_col.iter().map(|b| b.powf(v)).collect();
    let total: f64 = shaped.iter().sum();
    let scale = budget.sqrt() / total;
    shaped.into_iter().map(|x| x * scale).collect()
}

/// Fractional coefficients for every AP, `K x L`.
pub fn fractional_matrix(beta: &DMatrix<f64>, v: f64, budget: f64) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(beta.nrows(), beta.ncols());
    for l in 0..beta.ncols() {
        let col: Vec<f64> = beta.column(l).iter().copied().collect();
        for (k, x) in fractional_heuristic(&col, v, budget).into_iter().enumerate() {
            out[(k, l)] = x;
        }
    }
    out
}

/// Side-information ratios: each UE's shaped gain to AP `l` relative to all APs.
pub fn side_info_ratios(beta: &DMatrix<f64>, v: f64, budget: f64) -> DMatrix<f64> {
    let shaped = beta.map(|b| b.powf(v));
    let root = budget.sqrt();
    let mut out = shaped.clone();
    for k in 0..beta.nrows() {
        let total: f64 = shaped.row(k).iter().sum();
        for l in 0..beta.ncols() {
            out[(k, l)] = root * shaped[(k, l)] / total;
        }
    }
    out
}

pub fn equal_power(num_ues: usize, num_aps: usize, budget: f64) -> PowerAllocation {
    let mu = DMatrix::from_element(num_ues, num_aps, (budget / num_ues as f64).sqrt());
    PowerAllocation::new(mu, budget).expect("equal split uses exactly the budget")
}

/// Fractional allocation used as a baseline: powers proportional to
/// `beta_kl^v`, each AP spending its full budget.
pub fn heuristic_allocation(beta: &DMatrix<f64>, v: f64, budget: f64) -> Result<PowerAllocation> {
    let rho = fractional_matrix(beta, v, budget);
    // rho' sums to sqrt(P) per AP, so sqrt(P) * rho' sums to P
    let root = budget.sqrt();
    let mu = rho.map(|x| (x * root).sqrt());
    PowerAllocation::new(mu, budget)
}
