//! Fourth-moment estimators: the bias-corrected matricized moment, its
//! sample-split projection, and Catoni's robust directional estimate.

mod catoni;
mod cumulant;

pub use catoni::{
    catoni_mean, catoni_theta, psi, sample_kurtosis, CatoniConfig, CatoniScale, KurtosisEstimate,
    KurtosisMethod,
};
pub use cumulant::{split_halves, CumulantKind, CumulantOperator};
