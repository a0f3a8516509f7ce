//! Normal-distribution helpers and Poisson/Gamma tail functions.

use libm::erfc;
use statrs::function::gamma::{gamma_ur, ln_gamma};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Above this point the Mills ratio is evaluated by continued fraction
/// instead of `pdf / survival`.
const MILLS_SWITCH: f64 = 8.0;

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// `1 - Φ(z)` without cancellation for large positive `z`.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z * FRAC_1_SQRT_2)
}

/// Mills ratio `φ(z) / (1 - Φ(z))`.
pub fn mills_ratio(z: f64) -> f64 {
    if z <= MILLS_SWITCH {
        normal_pdf(z) / normal_sf(z)
    } else {
        1.0 / survival_over_pdf_cf(z)
    }
}

/// Laplace continued fraction for `(1 - Φ(z)) / φ(z)`:
/// `1/(z + 1/(z + 2/(z + 3/(z + ...))))`, evaluated bottom-up.
fn survival_over_pdf_cf(z: f64) -> f64 {
    let mut tail = z;
    for k in (1..=80).rev() {
        tail = z + k as f64 / tail;
    }
    1.0 / tail
}

/// Natural log of the Poisson probability mass at `n` with mean `mean > 0`.
pub fn ln_poisson_pmf(n: u64, mean: f64) -> f64 {
    let n = n as f64;
    -mean + n * mean.ln() - ln_gamma(n + 1.0)
}

/// Upper regularized incomplete gamma `Q(shape, x)`.
pub fn gamma_q(shape: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_ur(shape, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn survival_reference_values() {
        // Reference values from mpmath at 30 digits.
        assert_relative_eq!(normal_sf(1.0), 0.158_655_253_931_457_05, max_relative = 1e-13);
        assert_relative_eq!(normal_sf(5.0), 2.866_515_718_791_939e-7, max_relative = 1e-12);
        assert_relative_eq!(normal_sf(10.0), 7.619_853_024_160_527e-24, max_relative = 1e-12);
        assert_relative_eq!(normal_cdf(-1.0), normal_sf(1.0), max_relative = 1e-15);
    }

    #[test]
    fn mills_routes_agree_at_switch() {
        let direct = normal_pdf(MILLS_SWITCH) / normal_sf(MILLS_SWITCH);
        let cf = 1.0 / survival_over_pdf_cf(MILLS_SWITCH);
        assert_relative_eq!(direct, cf, max_relative = 1e-12);
    }

    #[test]
    fn mills_large_argument_is_finite_and_close_to_z() {
        for z in [10.0, 40.0, 1e3] {
            let m = mills_ratio(z);
            assert!(m.is_finite());
            assert!(m > z && m < z + 1.0 / z);
        }
    }

    #[test]
    fn poisson_pmf_sums_to_one() {
        let total: f64 = (0..200).map(|n| ln_poisson_pmf(n, 35.0).exp()).sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn gamma_q_integer_shape_matches_erlang_sum() {
        for (n, x) in [(1u32, 0.5), (5, 3.0), (40, 55.0), (60, 55.0)] {
            let mut term = 1.0;
            let mut sum = 1.0;
            for j in 1..n {
                term *= x / j as f64;
                sum += term;
            }
            assert_relative_eq!(gamma_q(n as f64, x), (-x as f64).exp() * sum, max_relative = 1e-11);
        }
    }
}
