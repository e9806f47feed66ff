use crate::error::{Error, Result};
use crate::linalg;

/// Euclidean distance from `x` to the nearest point of `set`; `+inf` for
/// an empty set.
pub fn nearest_distance(x: &[f64], set: &[Vec<f64>]) -> f64 {
    set.iter()
        .map(|p| linalg::dist(x, p))
        .fold(f64::INFINITY, f64::min)
}

/// Truncation of a raw distance `d > 0` at scale `delta`: the identity up
/// to `delta`, linear interpolation to 1 on `(delta, 2 delta)`, and 1 from
/// `2 delta` on.
#[inline]
pub fn truncate(d: f64, delta: f64) -> f64 {
    if d <= delta {
        d
    } else if d < 2.0 * delta {
        ((1.0 - delta) / delta) * d + 2.0 * delta - 1.0
    } else {
        1.0
    }
}

pub fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("delta = {delta} outside (0, 1/2)")))
    }
}

/// The delta-truncated distance from `x` to the equilibria.
pub fn truncated_distance(x: &[f64], equilibria: &[Vec<f64>], delta: f64) -> Result<f64> {
    check_delta(delta)?;
    let d = nearest_distance(x, equilibria);
    if d == 0.0 {
        return Err(Error::OnEquilibrium);
    }
    Ok(truncate(d, delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn at(d: f64) -> f64 {
        truncated_distance(&[d, 0.0, 0.0], &[vec![0.0; 3]], 0.1).unwrap()
    }

    #[test]
    fn branches() {
        assert_eq!(at(0.5), 1.0);
        assert!((at(0.1) - 0.1).abs() < 1e-15);
        assert!((at(0.15) - 0.55).abs() < 1e-14);
        // Both breakpoints are continuous.
        assert!((truncate(0.2, 0.1) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn errors() {
        assert_eq!(
            truncated_distance(&[0.0; 3], &[vec![0.0; 3]], 0.1),
            Err(Error::OnEquilibrium)
        );
        assert!(truncated_distance(&[1.0; 3], &[], 0.5).is_err());
        assert_eq!(truncated_distance(&[1.0; 3], &[], 0.1), Ok(1.0));
    }

    proptest! {
        #[test]
        fn lipschitz_in_d(delta in 0.001f64..0.499, d1 in 1e-9f64..2.0, d2 in 1e-9f64..2.0) {
            let lhs = (truncate(d1, delta) - truncate(d2, delta)).abs();
            let rhs = (1.0 - delta) / delta * (d1 - d2).abs();
            prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-15);
        }

        #[test]
        fn range_is_unit_interval(delta in 0.001f64..0.499, d in 1e-12f64..10.0) {
            let v = truncate(d, delta);
            prop_assert!(v > 0.0 && v <= 1.0);
        }
    }
}
