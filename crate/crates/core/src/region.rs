//! Axis-aligned box regions of feature space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An open box `a_i < x_i < b_i` over a subset of coordinates. Coordinates
/// not listed are unconstrained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    /// (coordinate index, lower bound, upper bound) per constrained dim.
    pub dims: Vec<(usize, f64, f64)>,
}

impl BoxRegion {
    pub fn new(dims: Vec<(usize, f64, f64)>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for &(i, a, b) in &dims {
            if a >= b || a.is_nan() || b.is_nan() {
                return Err(Error::invalid(
                    "region",
                    format!("dim {i} requires lower < upper, got [{a}, {b}]"),
                ));
            }
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::invalid("region", format!("dim {i} bounds not finite")));
            }
            if !seen.insert(i) {
                return Err(Error::invalid("region", format!("dim {i} listed twice")));
            }
        }
        Ok(BoxRegion { dims })
    }

    /// Rectangle over coordinates 0 and 1 from two opposite corners.
    pub fn rect2d(corner_a: (f64, f64), corner_b: (f64, f64)) -> Result<Self> {
        BoxRegion::new(vec![
            (0, corner_a.0.min(corner_b.0), corner_a.0.max(corner_b.0)),
            (1, corner_a.1.min(corner_b.1), corner_a.1.max(corner_b.1)),
        ])
    }

    /// Empty constraint set: contains nothing.
    pub fn empty() -> Self {
        BoxRegion {
            dims: vec![(0, f64::NEG_INFINITY, f64::NEG_INFINITY)],
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.dims
            .iter()
            .all(|&(i, a, b)| x.get(i).is_some_and(|&v| a < v && v < b))
    }

    pub fn max_coordinate(&self) -> usize {
        self.dims.iter().map(|&(i, _, _)| i).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn containment_is_strict() {
        let r = BoxRegion::rect2d((2.0, 0.0), (2.75, 1.5)).unwrap();
        assert!(r.contains(&[2.5, 1.0]));
        assert!(!r.contains(&[2.0, 1.0]));
        assert!(!r.contains(&[2.5, 1.5]));
        assert!(!r.contains(&[3.0, 0.5]));
    }

    #[test]
    fn rejects_bad_bounds() {
        assert!(BoxRegion::new(vec![(0, 1.0, 1.0)]).is_err());
        assert!(BoxRegion::new(vec![(0, 0.0, 1.0), (0, 0.0, 2.0)]).is_err());
    }

    #[test]
    fn empty_contains_nothing() {
        let r = BoxRegion::empty();
        assert!(!r.contains(&[0.0, 0.0]));
        assert!(!r.contains(&[-1e300]));
    }
}
