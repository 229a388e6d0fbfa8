//! Generalized Pareto and mixed Gaussian–GPD distributions.

mod gpd;
mod mixed;
mod normal;

pub use gpd::{GpdParams, XI_SERIES, XI_ZERO};
pub use mixed::{
    default_threshold, learnable_view, learnable_view_tape, mixed_log_pdf_tape, MixedGpdParams,
    DEFAULT_BULK_MASS, SIGMA_FLOOR,
};
pub use normal::{std_normal_cdf, std_normal_log_pdf, std_normal_quantile, std_normal_sf, HALF_LN_2PI};
