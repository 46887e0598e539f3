//! Raw anomaly signals computed from trained backbones and input features.

pub mod bundle;
pub mod causal;
pub mod mahalanobis;
pub mod scores;
pub mod usd;

pub use bundle::{SignalBundle, SignalId, SignalSuite};
pub use causal::{fit_causal, CausalModel, MAX_CAUSAL_DIM};
pub use mahalanobis::{fit_mahalanobis, FeatureSpace, MahalanobisModel};
pub use scores::{energy_score, entropy_and_mi, gauss_score, odin_score};
pub use usd::{scaled_covariance_noise, train_usd, UsdClassifier};
