//! The multi-signal detector: pseudo-OOD generation, percentile
//! normalization, direction correction, validation ranking, adaptive top-k
//! fusion, and end-to-end fit/score.

pub mod calibration;
pub mod detector;
pub mod pseudo_ood;

pub use calibration::{calibrate, correct_direction, normalize_signal, CalibrationState};
pub use detector::{
    build_suite, fit_shared_components, spectre_fit, train_gauss_ensemble, DetectorManifest,
    SharedComponents, SpectreConfig, SpectreDetector,
};
pub use pseudo_ood::{gen_pseudo_ood, PseudoOodSet, MAX_PSEUDO_OOD};
