//! Learned power allocators: per-AP networks (with and without side
//! information) and per-cluster networks, trained to imitate WMMSE solutions.

mod alloc;
mod mlp;
mod scaler;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use alloc::{
    cluster_partition, fit_group, group_features, group_labels, predict_allocation, to_db, LearnedModel, Prediction,
};
pub use mlp::{Activation, Dense, Gradients, Mlp};
pub use scaler::{quantile, RobustScaler, IQR_FLOOR};
pub use train::{split_indices, train, Adam, TrainConfig, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// One network per AP fed with that AP's fractional coefficients.
    Ddnn,
    /// Per-AP network that also sees each UE's share across all APs.
    DdnnSi,
    /// One network per AP cluster fed with the cluster's LSF gains.
    Cdnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Ddnn, ModelKind::DdnnSi, ModelKind::Cdnn];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ddnn => "ddnn",
            ModelKind::DdnnSi => "ddnn-si",
            ModelKind::Cdnn => "cdnn",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            ModelKind::Ddnn => 0,
            ModelKind::DdnnSi => 1,
            ModelKind::Cdnn => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.tag() == tag)
            .ok_or_else(|| Error::Format(format!("unknown model kind {tag}")))
    }

    /// APs served by one model.
    pub fn group_size(self, cluster_size: usize) -> usize {
        match self {
            ModelKind::Cdnn => cluster_size,
            _ => 1,
        }
    }

    /// Layer sizes (input first) and per-layer activations.
    pub fn layout(self, num_ues: usize, cluster_size: usize) -> (Vec<usize>, Vec<Activation>) {
        use Activation::*;
        let k = num_ues;
        match self {
            ModelKind::Ddnn => (vec![k, 32, 64, 32, k + 1], vec![Linear, Tanh, Tanh, Relu]),
            ModelKind::DdnnSi => (vec![2 * k, 64, 128, 64, 32, k + 1], vec![Linear, Elu, Tanh, Tanh, Relu]),
            ModelKind::Cdnn => {
                let c = cluster_size;
                (vec![c * k, 128, 512, 256, 128, c * (k + 1)], vec![Linear, Elu, Tanh, Tanh, Relu])
            }
        }
    }

    pub fn build(self, num_ues: usize, cluster_size: usize, seed: u64) -> Result<Mlp> {
        let (sizes, acts) = self.layout(num_ues, cluster_size);
        Mlp::new(&sizes, &acts, seed)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown model kind '{s}'")))
    }
}
