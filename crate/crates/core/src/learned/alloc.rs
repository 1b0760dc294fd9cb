use nalgebra::DMatrix;

use super::mlp::Mlp;
use super::scaler::RobustScaler;
use super::train::{train, TrainConfig, TrainReport};
use super::ModelKind;
use crate::error::{Error, Result};
use crate::heuristic::{fractional_heuristic, side_info_ratios};
use crate::network::Point;
use crate::precoding::PowerAllocation;

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// A trained network together with the APs it serves and its input scaler.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedModel {
    pub kind: ModelKind,
    pub num_ues: usize,
    /// APs covered, in output order.
    pub aps: Vec<usize>,
    pub scaler: RobustScaler,
    pub mlp: Mlp,
}

/// Unscaled dB features of one model's group of APs.
pub fn group_features(kind: ModelKind, beta: &DMatrix<f64>, v: f64, budget: f64, aps: &[usize]) -> Vec<f64> {
    let side = (kind == ModelKind::DdnnSi).then(|| side_info_ratios(beta, v, budget));
    features_with(kind, beta, side.as_ref(), v, budget, aps)
}

/// As [`group_features`], with the side-information ratios supplied by the caller.
fn features_with(
    kind: ModelKind,
    beta: &DMatrix<f64>,
    side: Option<&DMatrix<f64>>,
    v: f64,
    budget: f64,
    aps: &[usize],
) -> Vec<f64> {
    let k_count = beta.nrows();
    let mut out = Vec::with_capacity(2 * k_count * aps.len());
    match kind {
        ModelKind::Ddnn | ModelKind::DdnnSi => {
            let mut col = vec![0.0; k_count];
            for &l in aps {
                col.iter_mut().zip(beta.column(l).iter()).for_each(|(c, b)| *c = *b);
                out.extend(fractional_heuristic(&col, v, budget).into_iter().map(to_db));
            }
            if kind == ModelKind::DdnnSi {
                let side = side.expect("side information is required");
                for &l in aps {
                    out.extend(side.column(l).iter().map(|x| to_db(*x)));
                }
            }
        }
        ModelKind::Cdnn => {
            for &l in aps {
                out.extend(beta.column(l).iter().map(|x| to_db(*x)));
            }
        }
    }
    out
}

/// Per-AP blocks `[mu_{:,l}, sum_k mu_kl^2]` for every AP of the group.
pub fn group_labels(mu: &DMatrix<f64>, aps: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity((mu.nrows() + 1) * aps.len());
    for &l in aps {
        let col = mu.column(l);
        out.extend(col.iter());
        out.push(col.norm_squared());
    }
    out
}

/// Fits the scaler on the training split, then trains a fresh network.
pub fn fit_group(
    kind: ModelKind,
    aps: Vec<usize>,
    num_ues: usize,
    raw_features: &[Vec<f64>],
    labels: &[Vec<f64>],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(LearnedModel, TrainReport)> {
    if raw_features.is_empty() {
        return Err(Error::Dimension("no training samples".into()));
    }
    let (train_idx, _) = super::split_indices(raw_features.len(), cfg);
    let train_rows: Vec<Vec<f64>> = train_idx.iter().map(|&i| raw_features[i].clone()).collect();
    let scaler = RobustScaler::fit(&train_rows);
    let scaled: Vec<Vec<f64>> = raw_features.iter().map(|r| scaler.transform(r)).collect();
    let mut mlp = kind.build(num_ues, aps.len(), seed)?;
    let report = train(&mut mlp, &scaled, labels, cfg)?;
    Ok((LearnedModel { kind, num_ues, aps, scaler, mlp }, report))
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub allocation: PowerAllocation,
    /// APs whose predicted direction was all zeros (they stay silent).
    pub degenerate_aps: Vec<usize>,
}

/// Runs every model and turns its outputs into a feasible allocation: the
/// first `K` outputs per AP give the direction, the last one the total power.
pub fn predict_allocation(models: &[LearnedModel], beta: &DMatrix<f64>, v: f64, budget: f64) -> Result<Prediction> {
    let (k_count, l_count) = beta.shape();
    let mut owner = vec![None; l_count];
    for (idx, m) in models.iter().enumerate() {
        if m.num_ues != k_count {
            return Err(Error::Dimension(format!("model for {} UEs, network has {k_count}", m.num_ues)));
        }
        for &l in &m.aps {
            if l >= l_count {
                return Err(Error::Dimension(format!("model covers AP {l}, network has {l_count}")));
            }
            owner[l] = Some(idx);
        }
    }
    if let Some(l) = owner.iter().position(Option::is_none) {
        return Err(Error::MissingModel(format!("AP {l}")));
    }

    let side = models
        .iter()
        .any(|m| m.kind == ModelKind::DdnnSi)
        .then(|| side_info_ratios(beta, v, budget));
    let mut mu = DMatrix::zeros(k_count, l_count);
    let mut degenerate_aps = Vec::new();
    for m in models {
        let mut x = features_with(m.kind, beta, side.as_ref(), v, budget, &m.aps);
        m.scaler.apply(&mut x);
        let y = m.mlp.predict(&x);
        for (j, &l) in m.aps.iter().enumerate() {
            let block = &y[j * (k_count + 1)..(j + 1) * (k_count + 1)];
            let (dir, total) = (&block[..k_count], block[k_count]);
            let norm = dir.iter().map(|d| d.max(0.0).powi(2)).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                degenerate_aps.push(l);
                continue;
            }
            let scale = total.clamp(0.0, budget).sqrt() / norm;
            for k in 0..k_count {
                mu[(k, l)] = dir[k].max(0.0) * scale;
            }
        }
    }
    degenerate_aps.sort_unstable();
    Ok(Prediction { allocation: PowerAllocation::new(mu, budget)?, degenerate_aps })
}

/// Splits the APs into disjoint clusters of `cluster_size`. APs are ordered
/// row by row; on a square grid whose side is a multiple of a square cluster
/// size the clusters are square tiles, otherwise consecutive runs.
pub fn cluster_partition(ap_positions: &[Point], cluster_size: usize) -> Result<Vec<Vec<usize>>> {
    let l_count = ap_positions.len();
    if cluster_size == 0 || !l_count.is_multiple_of(cluster_size) {
        return Err(Error::ClusterSize { l: l_count, c: cluster_size });
    }
    let mut order: Vec<usize> = (0..l_count).collect();
    order.sort_by(|&a, &b| {
        let (p, q) = (ap_positions[a], ap_positions[b]);
        p.y.total_cmp(&q.y).then(p.x.total_cmp(&q.x)).then(a.cmp(&b))
    });

    let side = (l_count as f64).sqrt().round() as usize;
    let tile = (cluster_size as f64).sqrt().round() as usize;
    let is_grid = side * side == l_count
        && order.chunks(side).all(|row| row.iter().all(|&i| ap_positions[i].y == ap_positions[row[0]].y));
    let mut clusters: Vec<Vec<usize>> = if is_grid && tile * tile == cluster_size && side.is_multiple_of(tile) {
        let per_row = side / tile;
        let mut c = vec![Vec::with_capacity(cluster_size); l_count / cluster_size];
        for (rank, &ap) in order.iter().enumerate() {
            let (row, col) = (rank / side, rank % side);
            c[(row / tile) * per_row + col / tile].push(ap);
        }
        c
    } else {
        order.chunks(cluster_size).map(<[usize]>::to_vec).collect()
    };
    for c in &mut clusters {
        c.sort_unstable();
    }
    Ok(clusters)
}
