//! Probability integral transform and the Gaussian probit link.

use num_traits::Float;
use statrs::function::erf::{erfc, erfc_inv};

use super::quantile::QuantileCurve;
use crate::error::{Error, Result};

/// Clamp applied to PIT values so the probit stays finite.
pub const PIT_EPSILON: f64 = 1e-6;

/// Maps an observation to `[ε, 1 − ε]` through the curve's distribution
/// function.
pub fn pit_transform<T: Float>(observation: T, curve: &QuantileCurve<T>) -> T {
    let eps = T::from(PIT_EPSILON).unwrap();
    curve.cdf(observation).max(eps).min(T::one() - eps)
}

/// Standard normal quantile function.
pub fn probit<T: Float>(w: T) -> Result<T> {
    let v = w.to_f64().unwrap_or(f64::NAN);
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::Domain(format!("probit argument {v} outside (0, 1)")));
    }
    // Work in the lower tail so the complement is exact, then polish the
    // approximate inverse with Newton steps on the distribution function.
    let tail = v.min(1.0 - v);
    let mut x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * tail);
    for _ in 0..2 {
        let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if density > 0.0 {
            x -= (0.5 * erfc(-x / std::f64::consts::SQRT_2) - tail) / density;
        }
    }
    if v > 0.5 {
        x = -x;
    }
    Ok(T::from(x).unwrap())
}

/// Standard normal distribution function.
pub fn inverse_probit<T: Float>(x: T) -> T {
    let v = x.to_f64().unwrap_or(f64::NAN);
    let w = if v <= 0.0 {
        0.5 * erfc(-v / std::f64::consts::SQRT_2)
    } else {
        1.0 - 0.5 * erfc(v / std::f64::consts::SQRT_2)
    };
    T::from(w).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn probit_of_half_is_zero() {
        assert_eq!(probit(0.5f64).unwrap(), 0.0);
    }

    #[test]
    fn probit_matches_normal_quantile() {
        // Tabulated 0.975 quantile of N(0, 1).
        assert!((probit(0.975f64).unwrap() - 1.959_963_985).abs() < 1e-4);
    }

    #[test]
    fn probit_rejects_boundary() {
        assert!(probit(0.0f64).is_err());
        assert!(probit(1.0f64).is_err());
        assert!(probit(f64::NAN).is_err());
    }

    #[test]
    fn probit_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let w: f64 = rng.random_range(1e-9..1.0 - 1e-9);
            let back = inverse_probit(probit(w).unwrap());
            worst = worst.max((back - w).abs());
        }
        assert!(worst < 1e-12, "max round-trip error {worst}");
    }

    #[test]
    fn median_maps_to_half() {
        let c = QuantileCurve::new(vec![0.1, 0.5, 0.9], vec![10.0, 20.0, 40.0]).unwrap();
        assert_eq!(pit_transform(20.0, &c), 0.5);
    }

    #[test]
    fn far_lower_tail_is_clamped() {
        let c = QuantileCurve::new(vec![0.1, 0.5, 0.9], vec![10.0, 20.0, 40.0]).unwrap();
        assert_eq!(pit_transform(-1e9, &c), PIT_EPSILON);
        assert_eq!(pit_transform(1e9, &c), 1.0 - PIT_EPSILON);
        let w = pit_transform(9.0, &c);
        assert!(w > PIT_EPSILON && w < 0.1);
    }
}
