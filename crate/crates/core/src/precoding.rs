//! Precoding and the statistical SE bound.
//!
//! The SE of UE `k` under a power allocation `mu` depends on the channels only
//! through `a_kl = E{h_kl^H w_kl}` and `b_ki^{lm} = Re E{h_kl^H w_il w_im^H h_km}`,
//! estimated here by Monte Carlo over coherence blocks.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::network::C64;
use crate::pilots::{ChannelBatch, LinkArray};

/// Minimum number of realizations accepted by [`estimate_se_parameters`].
pub const MIN_REALIZATIONS: usize = 100;
/// Unnormalized precoders below this norm are treated as zero.
pub const DEGENERATE_NORM: f64 = 1e-30;
/// Relative slack on the per-AP power budget.
pub const BUDGET_SLACK: f64 = 1e-9;

const CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Precoder {
    Mr,
    Rzf,
}

impl Precoder {
    pub fn name(self) -> &'static str {
        match self {
            Precoder::Mr => "mr",
            Precoder::Rzf => "rzf",
        }
    }
}

/// Unit-norm precoding vectors `w_kl` for every realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoders {
    pub w: LinkArray,
    /// Number of (realization, UE, AP) triples whose precoder was zero.
    pub degenerate: usize,
}

fn normalize(v: &mut [C64]) -> bool {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm < DEGENERATE_NORM || !norm.is_finite() {
        v.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        false
    } else {
        v.iter_mut().for_each(|z| *z /= norm);
        true
    }
}

pub fn compute_precoders(batch: &ChannelBatch, scheme: Precoder, pilot_power: f64, sigma2: f64) -> Precoders {
    let h_hat = &batch.h_hat;
    let (k_count, l_count, n) = (h_hat.num_ues, h_hat.num_aps, h_hat.antennas);
    let mut w = h_hat.clone();
    let stride = k_count * l_count * n;
    if stride == 0 {
        return Precoders { w, degenerate: 0 };
    }
    let degenerate: usize = w
        .data
        .par_chunks_mut(stride)
        .enumerate()
        .map(|(r, block)| {
            if scheme == Precoder::Rzf {
                for l in 0..l_count {
                    let mut m = DMatrix::<C64>::identity(n, n) * C64::new(sigma2, 0.0);
                    for i in 0..k_count {
                        let v = nalgebra::DVector::from_column_slice(h_hat.get(r, i, l));
                        m += &v * v.adjoint() * C64::new(pilot_power, 0.0);
                    }
                    // sigma2 > 0 keeps m positive definite
                    let chol = m.cholesky().expect("regularized Gram matrix is positive definite");
                    for k in 0..k_count {
                        let rhs = nalgebra::DVector::from_column_slice(h_hat.get(r, k, l)) * C64::new(pilot_power, 0.0);
                        let sol = chol.solve(&rhs);
                        block[(k * l_count + l) * n..(k * l_count + l + 1) * n].copy_from_slice(sol.as_slice());
                    }
                }
            }
            block.chunks_mut(n).map(|v| usize::from(!normalize(v))).sum::<usize>()
        })
        .sum();
    Precoders { w, degenerate }
}

/// Statistics of the SE lower bound; the only input the optimizers see.
#[derive(Debug, Clone, PartialEq)]
pub struct SeParameters {
    /// `K x L`, nonnegative.
    pub a: DMatrix<f64>,
    /// Flattened `B_ki^{lm}` at `((k * K + i) * L + l) * L + m`.
    pub b: Vec<f64>,
    pub sigma2: f64,
    pub prelog: f64,
    pub n_real: usize,
    /// Largest per-UE `|Im mean| / |mean|` over the AP vector of `a_k` (not serialized).
    pub imag_residue: f64,
}

impl SeParameters {
    pub fn num_ues(&self) -> usize {
        self.a.nrows()
    }

    pub fn num_aps(&self) -> usize {
        self.a.ncols()
    }

    /// `L x L` row-major block `B_ki`.
    #[inline]
    pub fn b_block(&self, k: usize, i: usize) -> &[f64] {
        let l = self.num_aps();
        let start = (k * self.num_ues() + i) * l * l;
        &self.b[start..start + l * l]
    }

    #[inline]
    pub fn b_entry(&self, k: usize, i: usize, l: usize, m: usize) -> f64 {
        self.b_block(k, i)[l * self.num_aps() + m]
    }

    /// `mu_i^T B_ki mu_i` for the `i`-th row of `mu`.
    pub fn quad(&self, k: usize, i: usize, mu: &DMatrix<f64>) -> f64 {
        let l_count = self.num_aps();
        let blk = self.b_block(k, i);
        let mut acc = 0.0;
        for l in 0..l_count {
            let ml = mu[(i, l)];
            if ml == 0.0 {
                continue;
            }
            let row = &blk[l * l_count..(l + 1) * l_count];
            let mut s = 0.0;
            for m in 0..l_count {
                s += row[m] * mu[(i, m)];
            }
            acc += ml * s;
        }
        acc
    }

    /// `a_k^T mu_k`.
    pub fn signal(&self, k: usize, mu: &DMatrix<f64>) -> f64 {
        (0..self.num_aps()).map(|l| self.a[(k, l)] * mu[(k, l)]).sum()
    }

    /// `sum_i mu_i^T B_ki mu_i + sigma^2`.
    pub fn received_power(&self, k: usize, mu: &DMatrix<f64>) -> f64 {
        (0..self.num_ues()).map(|i| self.quad(k, i, mu)).sum::<f64>() + self.sigma2
    }

    pub fn check_dims(&self, mu: &DMatrix<f64>) -> Result<()> {
        if mu.shape() != self.a.shape() {
            return Err(Error::Dimension(format!(
                "allocation is {:?}, parameters are {:?}",
                mu.shape(),
                self.a.shape()
            )));
        }
        Ok(())
    }
}

/// Pairwise reduction in a fixed tree order, independent of thread scheduling.
fn pairwise_sum(mut parts: Vec<Vec<f64>>) -> Vec<f64> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut left) = it.next() {
            if let Some(right) = it.next() {
                left.iter_mut().zip(&right).for_each(|(x, y)| *x += y);
            }
            next.push(left);
        }
        parts = next;
    }
    parts.pop().unwrap_or_default()
}

/// Monte Carlo estimate of `a` and `B`.
///
/// Entries of `a` are the modulus of the sample mean of `h_kl^H w_kl`; the
/// phase of that mean is zero in expectation for MR and RZF. `imag_residue`
/// keeps the largest per-UE ratio `|Im a_k| / |a_k|` over the AP vector, so
/// links buried in Monte Carlo noise do not dominate it.
pub fn estimate_se_parameters(batch: &ChannelBatch, precoders: &Precoders, cfg: &NetworkConfig) -> Result<SeParameters> {
    let n_real = batch.n_real();
    if n_real < MIN_REALIZATIONS {
        return Err(Error::TooFewRealizations { needed: MIN_REALIZATIONS, got: n_real });
    }
    let (k_count, l_count, n) = (batch.num_ues(), batch.num_aps(), batch.antennas());
    let b_len = k_count * k_count * l_count * l_count;
    let a_len = 2 * k_count * l_count;

    let chunks: Vec<(usize, usize)> = (0..n_real)
        .step_by(CHUNK)
        .map(|s| (s, (s + CHUNK).min(n_real)))
        .collect();
    let parts: Vec<Vec<f64>> = chunks
        .par_iter()
        .map(|&(start, end)| {
            let mut acc = vec![0.0; a_len + b_len];
            let mut g = vec![C64::new(0.0, 0.0); k_count * k_count * l_count];
            for r in start..end {
                // g[(k, i, l)] = h_kl^H w_il
                for k in 0..k_count {
                    for i in 0..k_count {
                        for l in 0..l_count {
                            let hv = batch.h.get(r, k, l);
                            let wv = precoders.w.get(r, i, l);
                            let mut s = C64::new(0.0, 0.0);
                            for t in 0..n {
                                s += hv[t].conj() * wv[t];
                            }
                            g[(k * k_count + i) * l_count + l] = s;
                        }
                    }
                }
                for k in 0..k_count {
                    for l in 0..l_count {
                        let z = g[(k * k_count + k) * l_count + l];
                        acc[2 * (k * l_count + l)] += z.re;
                        acc[2 * (k * l_count + l) + 1] += z.im;
                    }
                    for i in 0..k_count {
                        let gi = &g[(k * k_count + i) * l_count..(k * k_count + i + 1) * l_count];
                        let blk = &mut acc[a_len + (k * k_count + i) * l_count * l_count..];
                        for l in 0..l_count {
                            let x = gi[l];
                            for m in l..l_count {
                                let y = gi[m];
                                // Re(x conj(y))
                                blk[l * l_count + m] += x.re * y.re + x.im * y.im;
                            }
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let total = pairwise_sum(parts);
    let inv = 1.0 / n_real as f64;

    let mut a = DMatrix::zeros(k_count, l_count);
    let mut imag_residue: f64 = 0.0;
    for k in 0..k_count {
        let (mut imag, mut norm) = (0.0, 0.0);
        for l in 0..l_count {
            let mean = C64::new(total[2 * (k * l_count + l)] * inv, total[2 * (k * l_count + l) + 1] * inv);
            a[(k, l)] = mean.norm();
            imag += mean.im * mean.im;
            norm += mean.norm_sqr();
        }
        if norm > 0.0 {
            imag_residue = imag_residue.max((imag / norm).sqrt());
        }
    }
    let mut b = vec![0.0; b_len];
    for blk in 0..k_count * k_count {
        let src = &total[a_len + blk * l_count * l_count..a_len + (blk + 1) * l_count * l_count];
        let dst = &mut b[blk * l_count * l_count..(blk + 1) * l_count * l_count];
        for l in 0..l_count {
            for m in l..l_count {
                let v = src[l * l_count + m] * inv;
                dst[l * l_count + m] = v;
                dst[m * l_count + l] = v;
            }
        }
    }
    if imag_residue > 0.01 {
        log::debug!("largest relative imaginary part of a is {imag_residue:.4}");
    }
    Ok(SeParameters { a, b, sigma2: cfg.noise_power(), prelog: cfg.prelog(), n_real, imag_residue })
}

/// Square-root powers `mu_kl`, validated against the per-AP budget.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    mu: DMatrix<f64>,
    budget: f64,
}

impl PowerAllocation {
    /// Rejects negative or non-finite entries and any AP above `budget * (1 + 1e-9)`.
    pub fn new(mu: DMatrix<f64>, budget: f64) -> Result<Self> {
        for k in 0..mu.nrows() {
            for l in 0..mu.ncols() {
                let v = mu[(k, l)];
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::NegativePower { ue: k, ap: l, value: v });
                }
            }
        }
        for l in 0..mu.ncols() {
            let used: f64 = mu.column(l).iter().map(|x| x * x).sum();
            if used > budget * (1.0 + BUDGET_SLACK) {
                return Err(Error::BudgetViolation { ap: l, used, budget });
            }
        }
        Ok(PowerAllocation { mu, budget })
    }

    pub fn zeros(num_ues: usize, num_aps: usize, budget: f64) -> Self {
        PowerAllocation { mu: DMatrix::zeros(num_ues, num_aps), budget }
    }

    pub fn mu(&self) -> &DMatrix<f64> {
        &self.mu
    }

    pub fn into_mu(self) -> DMatrix<f64> {
        self.mu
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn num_ues(&self) -> usize {
        self.mu.nrows()
    }

    pub fn num_aps(&self) -> usize {
        self.mu.ncols()
    }

    /// Transmit power of AP `l`, `sum_k mu_kl^2`.
    pub fn ap_power(&self, l: usize) -> f64 {
        self.mu.column(l).iter().map(|x| x * x).sum()
    }

    /// Largest relative budget excess over all APs (zero when strictly feasible).
    pub fn max_violation(&self) -> f64 {
        (0..self.num_aps())
            .map(|l| (self.ap_power(l) / self.budget - 1.0).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// Effective SINR of every UE without any feasibility check.
pub fn sinr_unchecked(params: &SeParameters, mu: &DMatrix<f64>) -> Vec<f64> {
    (0..params.num_ues())
        .map(|k| {
            let s = params.signal(k, mu);
            let d = params.received_power(k, mu) - s * s;
            if s == 0.0 {
                0.0
            } else {
                s * s / d
            }
        })
        .collect()
}

pub fn compute_sinr(params: &SeParameters, alloc: &PowerAllocation) -> Result<Vec<f64>> {
    let mu = alloc.mu();
    params.check_dims(mu)?;
    let floor = params.sigma2 * (1.0 - BUDGET_SLACK);
    (0..params.num_ues())
        .map(|k| {
            let s = params.signal(k, mu);
            let d = params.received_power(k, mu) - s * s;
            if d < floor {
                return Err(Error::DenominatorBelowNoise { ue: k, value: d, floor });
            }
            Ok(s * s / d)
        })
        .collect()
}

/// Per-UE SE in bit/s/Hz, `prelog * log2(1 + SINR_k)`.
pub fn compute_se(params: &SeParameters, alloc: &PowerAllocation) -> Result<Vec<f64>> {
    Ok(compute_sinr(params, alloc)?
        .into_iter()
        .map(|s| params.prelog * (1.0 + s).log2())
        .collect())
}
