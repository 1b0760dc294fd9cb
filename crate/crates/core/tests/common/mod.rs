#![allow(dead_code)]

use cellfree::precoding::SeParameters;
use cellfree::seeds;
use cellfree::ExperimentConfig;
use nalgebra::DMatrix;
use rand::Rng;

/// Statistics built as first and second moments of a synthetic gain tensor,
/// so `B_kk - a_k a_k^T` is PSD as for real channels.
pub fn synthetic_params(seed: u64, k_count: usize, l_count: usize, sigma2: f64) -> SeParameters {
    let mut rng = seeds::rng(seed);
    let samples = 200;
    let scale: Vec<f64> = (0..k_count * l_count).map(|_| rng.random_range(0.05..1.0)).collect();
    let mut a = DMatrix::zeros(k_count, l_count);
    let mut b = vec![0.0; k_count * k_count * l_count * l_count];
    let mut g = vec![0.0; k_count * k_count * l_count];
    for _ in 0..samples {
        for k in 0..k_count {
            for i in 0..k_count {
                for l in 0..l_count {
                    let s = scale[k * l_count + l];
                    g[(k * k_count + i) * l_count + l] = if i == k {
                        s * (1.0 + 0.3 * rng.random_range(-1.0..1.0))
                    } else {
                        0.3 * s * rng.random_range(-1.0..1.0)
                    };
                }
            }
        }
        for k in 0..k_count {
            for l in 0..l_count {
                a[(k, l)] += g[(k * k_count + k) * l_count + l] / samples as f64;
            }
            for i in 0..k_count {
                for l in 0..l_count {
                    for m in 0..l_count {
                        b[((k * k_count + i) * l_count + l) * l_count + m] +=
                            g[(k * k_count + i) * l_count + l] * g[(k * k_count + i) * l_count + m] / samples as f64;
                    }
                }
            }
        }
    }
    SeParameters { a, b, sigma2, prelog: 0.95, n_real: samples, imag_residue: 0.0 }
}

/// Desk preset with fewer realizations for quick pipeline tests.
pub fn quick_desk(realizations: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk();
    cfg.realizations = realizations;
    cfg
}
