//! Versatile value estimation and the polynomial-regression bound machinery.

mod regression;
mod versatile;

pub use regression::{
    denormalize_threshold, estimation_error_bound, fit_B_beta, fit_z_poly, inverse_normal_cdf,
    leverage_max, normalize_threshold, poly_row, prediction_interval, z_alpha_half, BoundFit,
    Interval, PolyDesign, PolyFit, DEFAULT_GRID_RESOLUTION,
};
pub use versatile::{
    q_distribution_compare, wasserstein_1d, Batch, CriticPair, FeatureMap, FitMode, QCompare,
    ThresholdEmbedding, VersatileQ,
};

/// Default feature dimension.
pub const DEFAULT_FEATURE_DIM: usize = 32;
