use statrs::distribution::{ContinuousCDF, Normal};
use std::sync::OnceLock;

fn standard() -> &'static Normal {
    static N: OnceLock<Normal> = OnceLock::new();
    N.get_or_init(|| Normal::new(0.0, 1.0).expect("valid standard normal"))
}

/// Standard normal CDF Φ.
pub fn std_normal_cdf(z: f64) -> f64 {
    standard().cdf(z)
}

/// Standard normal upper tail `1 − Φ(z)` without cancellation.
pub fn std_normal_sf(z: f64) -> f64 {
    standard().sf(z)
}

/// Φ⁻¹.
pub fn std_normal_quantile(p: f64) -> f64 {
    standard().inverse_cdf(p)
}

pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

pub fn std_normal_log_pdf(z: f64) -> f64 {
    -0.5 * z * z - HALF_LN_2PI
}
