//! Conserved quantities of the overparameterized flow.
//!
//! For each adjacent pair of layers the imbalance matrix
//! `C_i = W_i W_iᵀ − W_{i+1}ᵀ W_{i+1}` stays constant along exact solutions.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linnet::LayerStack;

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantSet {
    /// `C_1, …, C_{N−1}`, each `k×k`.
    pub matrices: Vec<DMatrix<f64>>,
    pub traces: Vec<f64>,
    /// `2 tr(C_1²) − (tr C_1)²`, only for two-layer stacks with `n = 1`.
    pub imbalance_c: Option<f64>,
}

pub fn invariants(stack: &LayerStack) -> Result<InvariantSet> {
    let layers = stack.layers();
    if layers.len() < 2 {
        return Err(Error::InvalidArgument("invariants need depth >= 2".into()));
    }
    let matrices: Vec<DMatrix<f64>> = layers
        .windows(2)
        .map(|pair| &pair[0] * pair[0].transpose() - pair[1].transpose() * &pair[1])
        .collect();
    let traces = matrices.iter().map(|c| c.trace()).collect();
    let shape = stack.shape();
    let imbalance_c = (shape.depth == 2 && shape.n == 1).then(|| scalar_of(&matrices[0]));
    Ok(InvariantSet {
        matrices,
        traces,
        imbalance_c,
    })
}

fn scalar_of(c: &DMatrix<f64>) -> f64 {
    let tr = c.trace();
    2.0 * (c * c).trace() - tr * tr
}

/// `c = 2 tr(C_1²) − (tr C_1)²` for a two-layer stack.
pub fn imbalance_scalar(inv: &InvariantSet) -> Result<f64> {
    match inv.matrices.as_slice() {
        [c] => Ok(scalar_of(c)),
        other => Err(Error::InvalidArgument(format!(
            "imbalance scalar is defined for depth 2 only (got {} invariant matrices)",
            other.len()
        ))),
    }
}

/// `|‖W_i‖²_F − ‖W_{i+1}‖²_F − tr C_i(0)|` for each adjacent pair.
pub fn norm_chain_residual(stack: &LayerStack, inv0: &InvariantSet) -> Result<Vec<f64>> {
    let layers = stack.layers();
    if layers.len() != inv0.traces.len() + 1 {
        return Err(Error::dims(
            format!("{} layers", inv0.traces.len() + 1),
            format!("{} layers", layers.len()),
        ));
    }
    Ok(layers
        .windows(2)
        .zip(&inv0.traces)
        .map(|(pair, tr0)| (pair[0].norm_squared() - pair[1].norm_squared() - tr0).abs())
        .collect())
}

/// Normalized deviation `max_i ‖C_i − C_i(0)‖_F / (1 + ‖C_i(0)‖_F)`.
pub fn deviation(inv: &InvariantSet, inv0: &InvariantSet) -> f64 {
    inv.matrices
        .iter()
        .zip(&inv0.matrices)
        .map(|(c, c0)| (c - c0).norm() / (1.0 + c0.norm()))
        .fold(0.0, f64::max)
}

/// Largest normalized invariant deviation over a sequence of stacks, measured
/// against the first one.
pub fn drift_of<'a, I>(stacks: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a LayerStack>,
{
    let mut iter = stacks.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::InvalidArgument("empty trajectory".into()))?;
    if first.depth() < 2 {
        return Ok(0.0);
    }
    let inv0 = invariants(first)?;
    let mut worst: f64 = 0.0;
    for s in iter {
        worst = worst.max(deviation(&invariants(s)?, &inv0));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linnet::{balanced_init, random_init, Embedding, NetShape};
    use nalgebra::{dmatrix, DVector};
    use proptest::prelude::*;

    fn pair(w1: DMatrix<f64>, w2: DMatrix<f64>) -> LayerStack {
        let shape = NetShape::new(w2.nrows(), w1.nrows(), 2).unwrap();
        LayerStack::new(shape, vec![w1, w2]).unwrap()
    }

    #[test]
    fn invariant_examples() {
        let s = balanced_init(&DMatrix::identity(2, 2), NetShape::new(2, 3, 3).unwrap(), Embedding::Identity).unwrap();
        let inv = invariants(&s).unwrap();
        assert!(inv.matrices.iter().all(|c| c.norm() < 1e-14));
        assert!(inv.imbalance_c.is_none());

        let inv = invariants(&pair(dmatrix![2.0], dmatrix![1.0])).unwrap();
        assert_eq!(inv.matrices[0], dmatrix![3.0]);
        assert_eq!(imbalance_scalar(&inv).unwrap(), 9.0);
        assert_eq!(inv.imbalance_c, Some(9.0));

        let inv = invariants(&pair(dmatrix![1.0; 0.0], dmatrix![0.0, 1.0])).unwrap();
        assert_eq!(inv.matrices[0], dmatrix![1.0, 0.0; 0.0, -1.0]);
        assert_eq!(imbalance_scalar(&inv).unwrap(), 4.0);
    }

    #[test]
    fn imbalance_scalar_zero_and_wrong_depth() {
        let s = balanced_init(&DMatrix::identity(1, 1), NetShape::new(1, 2, 2).unwrap(), Embedding::Identity).unwrap();
        assert!(imbalance_scalar(&invariants(&s).unwrap()).unwrap().abs() < 1e-14);
        let s = random_init(NetShape::new(1, 2, 3).unwrap(), 1, 1.0).unwrap();
        assert!(imbalance_scalar(&invariants(&s).unwrap()).is_err());
    }

    #[test]
    fn chain_residual_at_start_and_after_rescale() {
        let s = random_init(NetShape::new(2, 3, 4).unwrap(), 2, 1.0).unwrap();
        let inv0 = invariants(&s).unwrap();
        let r = norm_chain_residual(&s, &inv0).unwrap();
        assert_eq!(r.len(), 3);
        assert!(r.iter().all(|v| *v < 1e-12));

        let scaled = s.rescale_pair(2, 2.0).unwrap();
        let r = norm_chain_residual(&scaled, &inv0).unwrap();
        assert!(r[1] > 1e-3);

        let short = random_init(NetShape::new(2, 3, 2).unwrap(), 2, 1.0).unwrap();
        assert!(norm_chain_residual(&short, &inv0).is_err());
    }

    #[test]
    fn drift_single_sample_and_empty() {
        let s = random_init(NetShape::new(2, 3, 2).unwrap(), 2, 1.0).unwrap();
        assert_eq!(drift_of([&s]).unwrap(), 0.0);
        assert!(drift_of(std::iter::empty()).is_err());
    }

    proptest! {
        #[test]
        fn invariants_are_symmetric(seed in 0u64..5000, depth in 2usize..=4, n in 1usize..=3, extra in 0usize..=2) {
            let s = random_init(NetShape::new(n, n + extra, depth).unwrap(), seed, 1.0).unwrap();
            for c in invariants(&s).unwrap().matrices {
                prop_assert!((&c - c.transpose()).norm() < 1e-12);
            }
        }

        #[test]
        fn vector_case_identities(seed in 0u64..5000, k in 1usize..=4, sign in prop::bool::ANY) {
            let s = random_init(NetShape::new(1, k, 2).unwrap(), seed, 1.0).unwrap();
            let w1 = DVector::from_column_slice(s.layer(1).as_slice());
            let w2 = DVector::from_row_slice(s.layer(2).transpose().as_slice());
            let c = imbalance_scalar(&invariants(&s).unwrap()).unwrap();
            let total = w1.norm_squared() + w2.norm_squared();
            let z = w2.dot(&w1);
            let d = total * total - 4.0 * z * z;
            prop_assert!((c - d).abs() < 1e-10 * (1.0 + d.abs()));
            let sgn = if sign { 1.0 } else { -1.0 };
            let u = &w1 - &w2 * sgn;
            let v = &w1 + &w2 * sgn;
            let uv = u.norm_squared() * v.norm_squared();
            prop_assert!((c - uv).abs() < 1e-10 * (1.0 + uv.abs()));
        }

        #[test]
        fn rescale_touches_only_neighbouring_invariants(seed in 0u64..5000, depth in 3usize..=5, eta in 0.2f64..5.0) {
            let s = random_init(NetShape::new(2, 3, depth).unwrap(), seed, 1.0).unwrap();
            let before = invariants(&s).unwrap();
            for i in 1..depth {
                let after = invariants(&s.rescale_pair(i, eta).unwrap()).unwrap();
                // one-based C_j involves layers j and j+1; layers i and i+1 were scaled
                for j in 1..depth {
                    if j + 1 < i || j > i + 1 {
                        prop_assert!((&after.matrices[j - 1] - &before.matrices[j - 1]).norm() < 1e-14);
                    }
                }
            }
        }
    }
}
