//! Disorder ensembles: bootstrap statistics, curve fits, Γ grids and the
//! campaign runners.

pub mod campaign;
pub mod fit;
pub mod grid;
pub mod stats;

pub use campaign::{
    run_gateway_campaign, run_scaling_campaign, CampaignMode, CampaignSpec, EnsembleRecord, GatewayCampaignResult, Profile,
    ScalingCampaignResult, Statistic,
};
pub use fit::{fit_model, FitModel, FitResult};
pub use grid::GammaGrid;
pub use stats::{bootstrap_median, Estimate};
