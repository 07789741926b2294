use serde::{Deserialize, Serialize};

use crate::cost::CostExponent;
use crate::data::{DiscreteMeasure, FeatureTable};
use crate::error::{Error, Result};
use crate::sdot;

/// Both sides of a label-preservation check.
///
/// `left_margin` is the sup over class-1 samples and `right_margin` the inf
/// over class-2 samples of `min_{y ∈ μ̂1} d̃(x, y) − min_{z ∈ μ̂2} d̃(x, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostCheckResult {
    pub holds: bool,
    pub left_margin: f64,
    pub right_margin: f64,
    pub gap: f64,
}

/// Residual test applied to the per-class weights before the componentwise check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualCheck {
    pub epsilon: f64,
    pub tolerance: f64,
}

impl Default for ResidualCheck {
    fn default() -> Self {
        ResidualCheck {
            epsilon: sdot::DEFAULT_EPSILON,
            tolerance: 1e-3,
        }
    }
}

fn nearest(x: &[f64], protos: &DiscreteMeasure, w: &[f64], p: CostExponent) -> f64 {
    (0..protos.len())
        .map(|j| p.cost(x, protos.point(j)) - w[j])
        .fold(f64::INFINITY, f64::min)
}

fn check_shapes(
    class1: &FeatureTable,
    class2: &FeatureTable,
    proto1: &DiscreteMeasure,
    proto2: &DiscreteMeasure,
    w1: &[f64],
    w2: &[f64],
) -> Result<()> {
    let d = proto1.dim();
    for actual in [class1.dim(), class2.dim(), proto2.dim()] {
        if actual != d {
            return Err(Error::DimensionMismatch { expected: d, actual });
        }
    }
    if w1.len() != proto1.len() {
        return Err(Error::DimensionMismatch {
            expected: proto1.len(),
            actual: w1.len(),
        });
    }
    if w2.len() != proto2.len() {
        return Err(Error::DimensionMismatch {
            expected: proto2.len(),
            actual: w2.len(),
        });
    }
    Ok(())
}

fn margins(
    class1: &FeatureTable,
    class2: &FeatureTable,
    proto1: &DiscreteMeasure,
    proto2: &DiscreteMeasure,
    w1: &[f64],
    w2: &[f64],
    p: CostExponent,
) -> (f64, f64) {
    let g = |x: &[f64]| nearest(x, proto1, w1, p) - nearest(x, proto2, w2, p);
    let left = class1.rows().map(g).fold(f64::NEG_INFINITY, f64::max);
    let right = class2.rows().map(g).fold(f64::INFINITY, f64::min);
    (left, right)
}

/// Checks `left ≤ 0 ≤ right` for a joint dual `w` whose first
/// `proto1.len()` entries belong to `proto1` and the rest to `proto2`.
pub fn postcheck_binary(
    class1: &FeatureTable,
    class2: &FeatureTable,
    proto1: &DiscreteMeasure,
    proto2: &DiscreteMeasure,
    w: &[f64],
    p: CostExponent,
) -> Result<PostCheckResult> {
    let m1 = proto1.len();
    if w.len() != m1 + proto2.len() {
        return Err(Error::DimensionMismatch {
            expected: m1 + proto2.len(),
            actual: w.len(),
        });
    }
    let (w1, w2) = w.split_at(m1);
    check_shapes(class1, class2, proto1, proto2, w1, w2)?;
    let (left, right) = margins(class1, class2, proto1, proto2, w1, w2, p);
    Ok(PostCheckResult {
        holds: left <= 0.0 && 0.0 <= right,
        left_margin: left,
        right_margin: right,
        gap: right - left,
    })
}

/// Checks `left ≤ right` with separately solved per-class duals: `m` for
/// class 1 against `proto1` and `l` for class 2 against `proto2`.
///
/// When `residual_check` is given, both duals must reach a marginal residual
/// below its tolerance on their own class or a precondition error is returned.
pub fn postcheck_componentwise(
    class1: &FeatureTable,
    class2: &FeatureTable,
    proto1: &DiscreteMeasure,
    proto2: &DiscreteMeasure,
    m: &[f64],
    l: &[f64],
    p: CostExponent,
    residual_check: Option<ResidualCheck>,
) -> Result<PostCheckResult> {
    check_shapes(class1, class2, proto1, proto2, m, l)?;
    if let Some(check) = residual_check {
        for (name, samples, protos, w) in [("m", class1, proto1, m), ("l", class2, proto2, l)] {
            let r = sdot::marginal_residual(samples, protos, w, check.epsilon, p)?;
            if !(r < check.tolerance) {
                return Err(Error::Precondition(format!(
                    "weights {name} do not solve their class problem: residual {r:e} >= {:e}",
                    check.tolerance
                )));
            }
        }
    }
    let (left, right) = margins(class1, class2, proto1, proto2, m, l, p);
    Ok(PostCheckResult {
        holds: left <= right,
        left_margin: left,
        right_margin: right,
        gap: right - left,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn table(rows: &[[f64; 2]]) -> FeatureTable {
        FeatureTable::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn separated_clusters_hold() {
        let c1 = table(&[[0.0, 0.0], [0.5, 0.5]]);
        let c2 = table(&[[10.0, 0.0], [10.5, -0.5]]);
        let p1 = DiscreteMeasure::uniform(array![[0.2, 0.1]]).unwrap();
        let p2 = DiscreteMeasure::uniform(array![[10.1, 0.0]]).unwrap();
        let r = postcheck_binary(&c1, &c2, &p1, &p2, &[0.0, 0.0], CostExponent::One).unwrap();
        assert!(r.holds);
        assert!(r.left_margin < 0.0 && r.right_margin > 0.0);
        assert_eq!(r.gap, r.right_margin - r.left_margin);

        let c = postcheck_componentwise(&c1, &c2, &p1, &p2, &[0.0], &[0.0], CostExponent::One, Some(ResidualCheck::default()))
            .unwrap();
        assert!(c.holds);
    }

    #[test]
    fn swapped_clusters_fail() {
        let c1 = table(&[[10.0, 0.0]]);
        let c2 = table(&[[0.0, 0.0]]);
        let p1 = DiscreteMeasure::uniform(array![[0.0, 0.0]]).unwrap();
        let p2 = DiscreteMeasure::uniform(array![[10.0, 0.0]]).unwrap();
        let r = postcheck_binary(&c1, &c2, &p1, &p2, &[0.0, 0.0], CostExponent::One).unwrap();
        assert!(!r.holds);
        assert!(r.left_margin > 0.0);
    }

    #[test]
    fn componentwise_shift_invariant() {
        let c1 = table(&[[0.0, 0.0], [1.0, 3.0]]);
        let c2 = table(&[[5.0, 0.0], [4.0, 2.0]]);
        let p1 = DiscreteMeasure::uniform(array![[0.0, 0.0], [1.0, 3.0]]).unwrap();
        let p2 = DiscreteMeasure::uniform(array![[5.0, 0.0], [4.0, 2.0]]).unwrap();
        let base = postcheck_componentwise(&c1, &c2, &p1, &p2, &[0.0, 0.0], &[0.0, 0.0], CostExponent::One, None)
            .unwrap();
        let shifted =
            postcheck_componentwise(&c1, &c2, &p1, &p2, &[7.0, 7.0], &[-2.0, -2.0], CostExponent::One, None).unwrap();
        assert_eq!(base.holds, shifted.holds);
        assert!((base.left_margin - 9.0 - shifted.left_margin).abs() < 1e-12);
    }

    #[test]
    fn residual_precondition() {
        let c1 = table(&[[0.0, 0.0], [1.0, 0.0]]);
        let c2 = table(&[[9.0, 0.0]]);
        let p1 = DiscreteMeasure::uniform(array![[0.0, 0.0], [1.0, 0.0]]).unwrap();
        let p2 = DiscreteMeasure::uniform(array![[9.0, 0.0]]).unwrap();
        // these weights send both class-1 samples to the first prototype
        let err = postcheck_componentwise(&c1, &c2, &p1, &p2, &[5.0, 0.0], &[0.0], CostExponent::One, Some(ResidualCheck::default()));
        assert!(matches!(err, Err(Error::Precondition(_))));
    }
}
