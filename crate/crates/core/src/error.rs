use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("distance {0} m is below the 1 m pathloss reference")]
    DistanceBelowFloor(f64),

    #[error("grid AP placement needs a square AP count, got L = {0}")]
    NonSquareGrid(usize),

    #[error("cluster size {c} does not divide the AP count {l}")]
    ClusterSize { l: usize, c: usize },

    #[error("power allocation violates the budget of AP {ap}: {used} W > {budget} W")]
    BudgetViolation { ap: usize, used: f64, budget: f64 },

    #[error("negative power coefficient at (UE {ue}, AP {ap}): {value}")]
    NegativePower { ue: usize, ap: usize, value: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("need at least {needed} channel realizations, got {got}")]
    TooFewRealizations { needed: usize, got: usize },

    #[error("SINR denominator of UE {ue} fell below the noise floor ({value:e} < {floor:e})")]
    DenominatorBelowNoise { ue: usize, value: f64, floor: f64 },

    #[error("proportional fairness needs strictly positive initial SINR; UE {0} has zero")]
    ZeroInitialSinr(usize),

    #[error("subproblem is not convex: eigenvalue {0:e} below floor")]
    NotConvex(f64),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("missing model for {0}")]
    MissingModel(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
