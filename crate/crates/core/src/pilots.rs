//! Pilot assignment, channel sampling and MMSE channel estimation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::network::{ChannelStatistics, C64};
use crate::seeds;

/// Pilot index per UE, zero-based (`0..tau_p`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PilotAssignment {
    pub pilots: Vec<usize>,
    pub tau_p: usize,
}

impl PilotAssignment {
    /// UEs that share the pilot of UE `k`, including `k`.
    pub fn sharing(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        let t = self.pilots[k];
        self.pilots.iter().enumerate().filter(move |(_, &ti)| ti == t).map(|(i, _)| i)
    }
}

/// Sequential assignment: the first `tau_p` UEs get distinct pilots, every later
/// UE takes the pilot with the least accumulated LSF gain at its master AP.
/// Ties resolve to the lowest index.
pub fn assign_pilots(beta: &DMatrix<f64>, tau_p: usize) -> Result<PilotAssignment> {
    if tau_p == 0 {
        return Err(Error::InvalidConfig("tau_p must be at least 1".into()));
    }
    let (k_count, l_count) = beta.shape();
    let mut pilots = Vec::with_capacity(k_count);
    for k in 0..k_count {
        if k < tau_p {
            pilots.push(k);
            continue;
        }
        let mut master = 0;
        for l in 1..l_count {
            if beta[(k, l)] > beta[(k, master)] {
                master = l;
            }
        }
        let mut load = vec![0.0; tau_p];
        for (i, &t) in pilots.iter().enumerate() {
            load[t] += beta[(i, master)];
        }
        let mut best = 0;
        for t in 1..tau_p {
            if load[t] < load[best] {
                best = t;
            }
        }
        pilots.push(best);
    }
    Ok(PilotAssignment { pilots, tau_p })
}

/// Flat storage of one complex `N`-vector per (realization, UE, AP).
#[derive(Debug, Clone, PartialEq)]
pub struct LinkArray {
    pub n_real: usize,
    pub num_ues: usize,
    pub num_aps: usize,
    pub antennas: usize,
    pub data: Vec<C64>,
}

impl LinkArray {
    pub fn zeros(n_real: usize, num_ues: usize, num_aps: usize, antennas: usize) -> Self {
        LinkArray {
            n_real,
            num_ues,
            num_aps,
            antennas,
            data: vec![C64::new(0.0, 0.0); n_real * num_ues * num_aps * antennas],
        }
    }

    fn stride(&self) -> usize {
        self.num_ues * self.num_aps * self.antennas
    }

    #[inline]
    pub fn get(&self, r: usize, k: usize, l: usize) -> &[C64] {
        let n = self.antennas;
        let start = r * self.stride() + (k * self.num_aps + l) * n;
        &self.data[start..start + n]
    }

    /// All links of realization `r`.
    pub fn realization(&self, r: usize) -> &[C64] {
        let s = self.stride();
        &self.data[r * s..(r + 1) * s]
    }
}

/// Sampled channel realizations `h_kl ~ CN(0, R_kl)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRealizations {
    pub h: LinkArray,
}

/// Hermitian PSD square root through the eigendecomposition; small negative
/// eigenvalues from rounding are clipped.
pub fn psd_sqrt(r: &DMatrix<C64>) -> DMatrix<C64> {
    let eig = r.clone().symmetric_eigen();
    let sqrt_vals = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| C64::new(v.max(0.0).sqrt(), 0.0)));
    &eig.eigenvectors * sqrt_vals * eig.eigenvectors.adjoint()
}

fn fill_cn(rng: &mut impl Rng, out: &mut [C64], var: f64) {
    let s = (var / 2.0).sqrt();
    for z in out {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *z = C64::new(s * re, s * im);
    }
}

fn mat_vec(m: &DMatrix<C64>, v: &[C64], out: &mut [C64]) {
    let n = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..n {
            acc += m[(i, j)] * v[j];
        }
        *o = acc;
    }
}

/// Draws `n_real` independent coherence blocks. Realization `r` uses its own
/// stream derived from `(seed, r)`, so the output does not depend on the
/// number of worker threads.
pub fn sample_channels(stats: &ChannelStatistics, n_real: usize, seed: u64) -> RawRealizations {
    let (k_count, l_count, n) = (stats.num_ues(), stats.num_aps(), stats.antennas);
    let roots: Vec<DMatrix<C64>> = stats.correlation.iter().map(psd_sqrt).collect();
    let mut h = LinkArray::zeros(n_real, k_count, l_count, n);
    let stride = h.stride();
    if stride == 0 {
        return RawRealizations { h };
    }
    h.data.par_chunks_mut(stride).enumerate().for_each(|(r, block)| {
        let mut rng = seeds::rng(seeds::derive(seed, r as u64));
        let mut z = vec![C64::new(0.0, 0.0); n];
        for (link, out) in block.chunks_mut(n).enumerate() {
            fill_cn(&mut rng, &mut z, 1.0);
            mat_vec(&roots[link], &z, out);
        }
    });
    RawRealizations { h }
}

/// True channels with their MMSE estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelBatch {
    pub h: LinkArray,
    pub h_hat: LinkArray,
    /// Received-pilot correlation `Psi_kl`, indexed `k * L + l`.
    pub psi: Vec<DMatrix<C64>>,
    /// Estimation matrices `sqrt(tau_p p_k) R_kl Psi_kl^{-1}`, indexed like `psi`.
    pub estimator: Vec<DMatrix<C64>>,
    pub pilots: PilotAssignment,
}

impl ChannelBatch {
    pub fn n_real(&self) -> usize {
        self.h.n_real
    }

    pub fn num_ues(&self) -> usize {
        self.h.num_ues
    }

    pub fn num_aps(&self) -> usize {
        self.h.num_aps
    }

    pub fn antennas(&self) -> usize {
        self.h.antennas
    }

    /// Covariance of the estimate, `tau_p p_k R_kl Psi_kl^{-1} R_kl = A Psi A^H`.
    pub fn estimate_covariance(&self, k: usize, l: usize) -> DMatrix<C64> {
        let idx = k * self.num_aps() + l;
        let a = &self.estimator[idx];
        a * &self.psi[idx] * a.adjoint()
    }
}

/// MMSE estimation from noisy pilot observations. All UEs transmit pilots with
/// power `cfg.pilot_power_w`; receiver noise is drawn from streams derived from
/// `noise_seed`, independent of the channel streams.
pub fn mmse_estimate(
    raw: &RawRealizations,
    stats: &ChannelStatistics,
    pilots: &PilotAssignment,
    cfg: &NetworkConfig,
    noise_seed: u64,
) -> Result<ChannelBatch> {
    let h = &raw.h;
    let (k_count, l_count, n) = (h.num_ues, h.num_aps, h.antennas);
    if stats.num_ues() != k_count || stats.num_aps() != l_count || pilots.pilots.len() != k_count {
        return Err(Error::Dimension("statistics, pilots and realizations disagree".into()));
    }
    if pilots.pilots.iter().any(|&t| t >= cfg.tau_p) {
        return Err(Error::Dimension("pilot index outside 0..tau_p".into()));
    }
    let tau_p = cfg.tau_p;
    let tp = tau_p as f64 * cfg.pilot_power_w;
    let sigma2 = cfg.noise_power();

    let mut psi = Vec::with_capacity(k_count * l_count);
    let mut estimator = Vec::with_capacity(k_count * l_count);
    for k in 0..k_count {
        for l in 0..l_count {
            let mut m = DMatrix::<C64>::identity(n, n) * C64::new(sigma2, 0.0);
            for i in pilots.sharing(k) {
                m += stats.r(i, l) * C64::new(tp, 0.0);
            }
            let chol = m
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Singular(format!("Psi for UE {k}, AP {l}")))?;
            // (R Psi^{-1})^H = Psi^{-1} R since both are Hermitian
            let a = chol.solve(stats.r(k, l)).adjoint() * C64::new(tp.sqrt(), 0.0);
            psi.push(m);
            estimator.push(a);
        }
    }

    let mut h_hat = LinkArray::zeros(h.n_real, k_count, l_count, n);
    let stride = k_count * l_count * n;
    if stride > 0 {
        let amp = tp.sqrt();
        h_hat.data.par_chunks_mut(stride).enumerate().for_each(|(r, block)| {
            let mut rng = seeds::rng(seeds::derive(noise_seed, r as u64));
            // received pilot signal per (pilot, AP)
            let mut y = vec![C64::new(0.0, 0.0); tau_p * l_count * n];
            fill_cn(&mut rng, &mut y, sigma2);
            for (i, &t) in pilots.pilots.iter().enumerate() {
                for l in 0..l_count {
                    let hv = h.get(r, i, l);
                    let yv = &mut y[(t * l_count + l) * n..(t * l_count + l + 1) * n];
                    for (yy, hh) in yv.iter_mut().zip(hv) {
                        *yy += hh * amp;
                    }
                }
            }
            for k in 0..k_count {
                let t = pilots.pilots[k];
                for l in 0..l_count {
                    let yv = &y[(t * l_count + l) * n..(t * l_count + l + 1) * n];
                    let out = &mut block[(k * l_count + l) * n..(k * l_count + l + 1) * n];
                    mat_vec(&estimator[k * l_count + l], yv, out);
                }
            }
        });
    }

    Ok(ChannelBatch { h: h.clone(), h_hat, psi, estimator, pilots: pilots.clone() })
}

/// Sample second moment `E{x x^H}` of one link over all realizations.
pub fn sample_covariance(arr: &LinkArray, k: usize, l: usize) -> DMatrix<C64> {
    let n = arr.antennas;
    let mut acc = DMatrix::<C64>::zeros(n, n);
    for r in 0..arr.n_real {
        let v = DVector::from_column_slice(arr.get(r, k, l));
        acc += &v * v.adjoint();
    }
    acc / C64::new(arr.n_real as f64, 0.0)
}
