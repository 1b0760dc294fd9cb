//! Network geometry and large-scale channel statistics.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix};
use rand::Rng;

use crate::config::{ApPlacement, CorrelationModel, NetworkConfig};
use crate::error::{Error, Result};
use crate::seeds::{self, Stream};

pub type C64 = Complex<f64>;

/// Distances are clamped to this floor before entering the pathloss model.
pub const MIN_DISTANCE_M: f64 = 1.0;

const AP_LAYOUT_SALT: u64 = 0xa9_1a_70_u64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// Displacement from `p` to the closest of the nine torus images of `q`.
pub fn wrap_delta(p: Point, q: Point, area_m: f64) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for sx in [-1.0, 0.0, 1.0] {
        for sy in [-1.0, 0.0, 1.0] {
            let dx = q.x + sx * area_m - p.x;
            let dy = q.y + sy * area_m - p.y;
            let d2 = dx * dx + dy * dy;
            if d2 < best.0 {
                best = (d2, dx, dy);
            }
        }
    }
    (best.1, best.2)
}

/// Wrap-around distance between two points of the square `[0, area_m)^2`,
/// floored at [`MIN_DISTANCE_M`].
pub fn wrap_distance(p: Point, q: Point, area_m: f64) -> f64 {
    let (dx, dy) = wrap_delta(p, q, area_m);
    dx.hypot(dy).max(MIN_DISTANCE_M)
}

/// Log-distance pathloss `beta = offset - slope * log10(d / 1 m)` in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pathloss {
    pub offset_db: f64,
    pub slope_db: f64,
}

impl Default for Pathloss {
    fn default() -> Self {
        Pathloss { offset_db: -30.5, slope_db: 36.7 }
    }
}

impl Pathloss {
    pub fn from_config(cfg: &NetworkConfig) -> Self {
        Pathloss { offset_db: cfg.pathloss_offset_db, slope_db: cfg.pathloss_slope_db }
    }

    pub fn gain_db(&self, d: f64) -> Result<f64> {
        if !(d >= MIN_DISTANCE_M) {
            return Err(Error::DistanceBelowFloor(d));
        }
        Ok(self.offset_db - self.slope_db * d.log10())
    }

    /// Linear-scale large-scale fading gain.
    pub fn gain(&self, d: f64) -> Result<f64> {
        Ok(10f64.powf(self.gain_db(d)? / 10.0))
    }
}

/// Linear LSF gain at distance `d` with the default urban-microcell constants.
pub fn pathloss_beta(d: f64) -> Result<f64> {
    Pathloss::default().gain(d)
}

/// One drop of APs and UEs.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub area_m: f64,
    pub ap_positions: Vec<Point>,
    pub ue_positions: Vec<Point>,
    /// `K x L` wrap-around distances in metres.
    pub distances: DMatrix<f64>,
}

impl Scenario {
    pub fn from_positions(area_m: f64, ap_positions: Vec<Point>, ue_positions: Vec<Point>) -> Self {
        let distances = DMatrix::from_fn(ue_positions.len(), ap_positions.len(), |k, l| {
            wrap_distance(ap_positions[l], ue_positions[k], area_m)
        });
        Scenario { area_m, ap_positions, ue_positions, distances }
    }

    pub fn num_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn num_ues(&self) -> usize {
        self.ue_positions.len()
    }
}

/// AP layout of the network; fixed for all drops of a configuration.
pub fn ap_layout(cfg: &NetworkConfig) -> Result<Vec<Point>> {
    let l = cfg.num_aps;
    match cfg.ap_placement {
        ApPlacement::Grid => {
            let side = (l as f64).sqrt().round() as usize;
            if side * side != l {
                return Err(Error::NonSquareGrid(l));
            }
            let spacing = cfg.area_m / side as f64;
            Ok((0..l)
                .map(|i| {
                    let (row, col) = (i / side, i % side);
                    Point::new((col as f64 + 0.5) * spacing, (row as f64 + 0.5) * spacing)
                })
                .collect())
        }
        ApPlacement::UniformRandom => {
            let mut rng = seeds::rng(seeds::derive(cfg.seed, AP_LAYOUT_SALT));
            Ok((0..l)
                .map(|_| Point::new(rng.random_range(0.0..cfg.area_m), rng.random_range(0.0..cfg.area_m)))
                .collect())
        }
    }
}

/// Drops `K` UEs uniformly on the square; APs follow [`ap_layout`].
pub fn drop_scenario(cfg: &NetworkConfig, seed: u64) -> Result<Scenario> {
    let aps = ap_layout(cfg)?;
    let mut rng = seeds::rng(seeds::stream_seed(seed, Stream::UePositions));
    let ues = (0..cfg.num_ues)
        .map(|_| Point::new(rng.random_range(0.0..cfg.area_m), rng.random_range(0.0..cfg.area_m)))
        .collect();
    Ok(Scenario::from_positions(cfg.area_m, aps, ues))
}

/// Per-link statistics: LSF gains and spatial correlation matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStatistics {
    pub antennas: usize,
    /// `K x L` linear LSF gains.
    pub beta: DMatrix<f64>,
    /// Correlation matrices, indexed `k * L + l`.
    pub correlation: Vec<DMatrix<C64>>,
}

impl ChannelStatistics {
    pub fn num_ues(&self) -> usize {
        self.beta.nrows()
    }

    pub fn num_aps(&self) -> usize {
        self.beta.ncols()
    }

    pub fn r(&self, k: usize, l: usize) -> &DMatrix<C64> {
        &self.correlation[k * self.num_aps() + l]
    }

    /// Builds `R_kl = beta_kl * I` for a given gain matrix.
    pub fn uncorrelated(beta: DMatrix<f64>, antennas: usize) -> Self {
        let correlation = (0..beta.nrows())
            .flat_map(|k| (0..beta.ncols()).map(move |l| (k, l)))
            .map(|(k, l)| DMatrix::<C64>::identity(antennas, antennas) * C64::new(beta[(k, l)], 0.0))
            .collect();
        ChannelStatistics { antennas, beta, correlation }
    }
}

/// Local-scattering correlation of a half-wavelength ULA, normalized to unit
/// diagonal. `angle` is the nominal angle of arrival, `spread` the standard
/// deviation of the Gaussian angular perturbation (both radians).
pub fn local_scattering(antennas: usize, angle: f64, spread: f64) -> DMatrix<C64> {
    DMatrix::from_fn(antennas, antennas, |m, n| {
        let dist = m as f64 - n as f64;
        let phase = PI * dist * angle.sin();
        let damp = (-0.5 * spread * spread * (PI * dist * angle.cos()).powi(2)).exp();
        C64::from_polar(damp, phase)
    })
}

pub fn build_statistics(cfg: &NetworkConfig, scenario: &Scenario) -> Result<ChannelStatistics> {
    let pathloss = Pathloss::from_config(cfg);
    let (k_count, l_count) = (scenario.num_ues(), scenario.num_aps());
    let mut beta = DMatrix::zeros(k_count, l_count);
    for k in 0..k_count {
        for l in 0..l_count {
            beta[(k, l)] = pathloss.gain(scenario.distances[(k, l)])?;
        }
    }
    match cfg.correlation {
        CorrelationModel::Uncorrelated => Ok(ChannelStatistics::uncorrelated(beta, cfg.antennas)),
        CorrelationModel::LocalScattering { angular_spread_deg } => {
            let spread = angular_spread_deg.to_radians();
            let mut correlation = Vec::with_capacity(k_count * l_count);
            for k in 0..k_count {
                for l in 0..l_count {
                    let (dx, dy) = wrap_delta(
                        scenario.ap_positions[l],
                        scenario.ue_positions[k],
                        scenario.area_m,
                    );
                    let r = local_scattering(cfg.antennas, dy.atan2(dx), spread);
                    let trace: f64 = (0..cfg.antennas).map(|i| r[(i, i)].re).sum();
                    let scale = beta[(k, l)] * cfg.antennas as f64 / trace;
                    correlation.push(r * C64::new(scale, 0.0));
                }
            }
            Ok(ChannelStatistics { antennas: cfg.antennas, beta, correlation })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_wrap(p: Point, q: Point, area: f64) -> f64 {
        let mut best = f64::INFINITY;
        for i in -1..=1 {
            for j in -1..=1 {
                let x = q.x + i as f64 * area;
                let y = q.y + j as f64 * area;
                best = best.min(((x - p.x).powi(2) + (y - p.y).powi(2)).sqrt());
            }
        }
        best.max(1.0)
    }

    #[test]
    fn wrap_distance_examples() {
        let o = Point::new(0.0, 0.0);
        assert_eq!(wrap_distance(o, o, 1000.0), 1.0);
        assert!((wrap_distance(o, Point::new(999.0, 0.0), 1000.0) - 1.0).abs() < 1e-12);
        let p = Point::new(100.0, 100.0);
        let q = Point::new(600.0, 900.0);
        // images: (600,900)->(500,800) direct, (600,-100)->(500,-200)
        let expected = (500.0f64 * 500.0 + 200.0 * 200.0).sqrt();
        assert!((wrap_distance(p, q, 1000.0) - expected).abs() < 1e-9);
        assert_eq!(wrap_distance(p, q, 1000.0), brute_wrap(p, q, 1000.0));
    }

    #[test]
    fn pathloss_examples() {
        assert_eq!(Pathloss::default().gain_db(1.0).unwrap(), -30.5);
        assert!((Pathloss::default().gain_db(10.0).unwrap() + 67.2).abs() < 1e-12);
        assert!((pathloss_beta(1.0).unwrap() - 10f64.powf(-3.05)).abs() < 1e-18);
        assert!(matches!(pathloss_beta(0.5), Err(Error::DistanceBelowFloor(_))));
        assert!(pathloss_beta(f64::NAN).is_err());
    }

    #[test]
    fn pathloss_at_353m_matches_hand_computation() {
        // 30-digit evaluation of 10^((-30.5 - 36.7 log10 353) / 10)
        let expected = 3.978_018_799_729_413e-13;
        assert!((pathloss_beta(353.0).unwrap() / expected - 1.0).abs() < 1e-13);
    }

    #[test]
    fn grid_layout() {
        let cfg = NetworkConfig { num_aps: 16, ..NetworkConfig::full_scale() };
        let aps = ap_layout(&cfg).unwrap();
        assert_eq!(aps[0], Point::new(125.0, 125.0));
        assert_eq!(aps[1], Point::new(375.0, 125.0));
        assert_eq!(aps[15], Point::new(875.0, 875.0));
        let bad = NetworkConfig { num_aps: 15, ..cfg };
        assert!(matches!(ap_layout(&bad), Err(Error::NonSquareGrid(15))));
    }

    #[test]
    fn drops_are_deterministic() {
        let cfg = NetworkConfig::full_scale();
        assert_eq!(drop_scenario(&cfg, 42).unwrap(), drop_scenario(&cfg, 42).unwrap());
        assert_ne!(drop_scenario(&cfg, 42).unwrap(), drop_scenario(&cfg, 43).unwrap());
    }

    #[test]
    fn ue_drops_are_uniform() {
        let cfg = NetworkConfig { num_ues: 100_000, ..NetworkConfig::full_scale() };
        let s = drop_scenario(&cfg, 5).unwrap();
        let n = s.num_ues() as f64;
        let (mx, my) = s
            .ue_positions
            .iter()
            .fold((0.0, 0.0), |(a, b), p| (a + p.x / n, b + p.y / n));
        // standard error of the mean of U(0, 1000)
        let se = 1000.0 / 12f64.sqrt() / n.sqrt();
        assert!((mx - 500.0).abs() < 3.0 * se, "{mx}");
        assert!((my - 500.0).abs() < 3.0 * se, "{my}");
        for p in &s.ue_positions {
            assert!((0.0..1000.0).contains(&p.x) && (0.0..1000.0).contains(&p.y));
        }
    }

    #[test]
    fn uncorrelated_statistics() {
        let stats = ChannelStatistics::uncorrelated(DMatrix::from_element(1, 1, 0.01), 3);
        let r = stats.r(0, 0);
        assert_eq!(*r, DMatrix::identity(3, 3) * C64::new(0.01, 0.0));
    }

    fn hermitian_eigs(r: &DMatrix<C64>) -> Vec<f64> {
        r.clone().symmetric_eigen().eigenvalues.iter().copied().collect()
    }

    #[test]
    fn local_scattering_statistics_are_normalized_psd() {
        let cfg = NetworkConfig {
            correlation: CorrelationModel::LocalScattering { angular_spread_deg: 10.0 },
            ..NetworkConfig::full_scale()
        };
        let s = drop_scenario(&cfg, 3).unwrap();
        let stats = build_statistics(&cfg, &s).unwrap();
        for k in 0..cfg.num_ues {
            for l in 0..cfg.num_aps {
                let r = stats.r(k, l);
                let beta = stats.beta[(k, l)];
                let tr: f64 = (0..cfg.antennas).map(|i| r[(i, i)].re).sum();
                assert!((tr / cfg.antennas as f64 / beta - 1.0).abs() < 1e-12);
                assert!((r - r.adjoint()).norm() <= 1e-15 * r.norm());
                for ev in hermitian_eigs(r) {
                    assert!(ev / beta >= -1e-10);
                }
                assert!(beta > 0.0 && beta <= 10f64.powf(-3.05));
            }
        }
    }

    #[test]
    fn zero_spread_is_rank_one() {
        let n = 4;
        let beta = 2e-9;
        let r = local_scattering(n, 0.4, 1e-6) * C64::new(beta, 0.0);
        let mut eigs = hermitian_eigs(&r);
        eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((eigs[0] / (n as f64 * beta) - 1.0).abs() < 1e-9);
        assert!(eigs[1].abs() / beta < 1e-9);
    }

    #[test]
    fn pathloss_is_decreasing() {
        let mut prev = f64::INFINITY;
        for i in 0..2000 {
            let d = 1.0 + i as f64 * 0.71;
            let b = pathloss_beta(d).unwrap();
            assert!(b < prev);
            prev = b;
        }
    }
}
