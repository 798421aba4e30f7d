//! Deep linear networks: layer stacks, the end-to-end product and the
//! gradient of `g(W_1, …, W_N) = f(W_N ⋯ W_1)` with respect to each layer.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cost::MatrixCost;
use crate::error::{Error, Result};

/// Input/output dimension `n`, hidden width `k` and depth `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NetShape {
    pub n: usize,
    pub k: usize,
    pub depth: usize,
}

impl NetShape {
    pub fn new(n: usize, k: usize, depth: usize) -> Result<Self> {
        if n == 0 || k < n || depth < 2 {
            return Err(Error::InvalidArgument(format!(
                "net shape requires k >= n >= 1 and depth >= 2 (got n={n}, k={k}, depth={depth})"
            )));
        }
        Ok(Self { n, k, depth })
    }

    /// `k == n` works but is narrower than the usual overparameterized regime.
    pub fn degenerate_width(&self) -> bool {
        self.k == self.n
    }

    /// `(rows, cols)` of layer `i` (zero based).
    pub fn layer_dims(&self, i: usize) -> (usize, usize) {
        if self.depth == 1 {
            return (self.n, self.n);
        }
        let rows = if i + 1 == self.depth { self.n } else { self.k };
        let cols = if i == 0 { self.n } else { self.k };
        (rows, cols)
    }

    /// Total number of scalar parameters.
    pub fn num_params(&self) -> usize {
        (0..self.depth)
            .map(|i| {
                let (r, c) = self.layer_dims(i);
                r * c
            })
            .sum()
    }
}

/// The layers `W_1, …, W_N`, stored first-to-last.
///
/// `W_1` is `k×n`, the middle layers are `k×k` and `W_N` is `n×k`. A stack of
/// depth one holds a plain `n×n` matrix and is used for the baseline flow.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    shape: NetShape,
    layers: Vec<DMatrix<f64>>,
}

/// `∇_{W_i} g` for every layer, same shapes as the stack.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub layers: Vec<DMatrix<f64>>,
}

impl LayerGradients {
    pub fn norm(&self) -> f64 {
        self.layers.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt()
    }
}

impl LayerStack {
    pub fn new(shape: NetShape, layers: Vec<DMatrix<f64>>) -> Result<Self> {
        if layers.len() != shape.depth {
            return Err(Error::dims(format!("{} layers", shape.depth), format!("{} layers", layers.len())));
        }
        for (i, w) in layers.iter().enumerate() {
            let (r, c) = shape.layer_dims(i);
            if w.shape() != (r, c) {
                return Err(Error::dims(
                    format!("layer {} of {r}x{c}", i + 1),
                    format!("{}x{}", w.nrows(), w.ncols()),
                ));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("layer {}", i + 1)));
            }
        }
        Ok(Self { shape, layers })
    }

    /// Depth-one stack wrapping an `n×n` matrix (baseline flow state).
    pub fn single(w: DMatrix<f64>) -> Result<Self> {
        if w.nrows() != w.ncols() || w.nrows() == 0 {
            return Err(Error::dims("square matrix", format!("{}x{}", w.nrows(), w.ncols())));
        }
        let n = w.nrows();
        Ok(Self {
            shape: NetShape { n, k: n, depth: 1 },
            layers: vec![w],
        })
    }

    pub fn zeros(shape: NetShape) -> Self {
        let layers = (0..shape.depth)
            .map(|i| {
                let (r, c) = shape.layer_dims(i);
                DMatrix::zeros(r, c)
            })
            .collect();
        Self { shape, layers }
    }

    pub fn shape(&self) -> NetShape {
        self.shape
    }
    pub fn depth(&self) -> usize {
        self.shape.depth
    }
    pub fn layers(&self) -> &[DMatrix<f64>] {
        &self.layers
    }
    /// Layer `W_i` with `i` one based, as in the usual notation.
    pub fn layer(&self, i: usize) -> &DMatrix<f64> {
        &self.layers[i - 1]
    }

    /// Concatenated column-major entries of every layer.
    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(self.shape.num_params());
        for w in &self.layers {
            v.extend_from_slice(w.as_slice());
        }
        DVector::from_vec(v)
    }

    /// Inverse of [`to_vector`](Self::to_vector); does not check finiteness.
    pub fn from_slice(shape: NetShape, data: &[f64]) -> Result<Self> {
        if data.len() != shape.num_params() {
            return Err(Error::dims(shape.num_params(), data.len()));
        }
        let mut off = 0;
        let layers = (0..shape.depth)
            .map(|i| {
                let (r, c) = shape.layer_dims(i);
                let w = DMatrix::from_column_slice(r, c, &data[off..off + r * c]);
                off += r * c;
                w
            })
            .collect();
        Ok(Self { shape, layers })
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|w| w.iter().all(|v| v.is_finite()))
    }

    /// The end-to-end map `W_N ⋯ W_1`.
    pub fn product(&self) -> DMatrix<f64> {
        let mut acc = self.layers[0].clone();
        for w in &self.layers[1..] {
            acc = w * acc;
        }
        acc
    }

    /// `∇_{W_i} g = (W_N ⋯ W_{i+1})ᵀ ∇f(W̄) (W_{i−1} ⋯ W_1)ᵀ`; empty
    /// products are identities.
    pub fn layer_gradients(&self, cost: &MatrixCost) -> Result<LayerGradients> {
        let n = self.shape.n;
        if cost.dim() != n {
            return Err(Error::dims(format!("cost on {n}x{n}"), format!("cost on {0}x{0}", cost.dim())));
        }
        let depth = self.depth();
        // below[i] = W_i ⋯ W_1 (below[0] = I_n)
        let mut below = Vec::with_capacity(depth + 1);
        below.push(DMatrix::<f64>::identity(n, n));
        for w in &self.layers {
            let next = w * below.last().unwrap();
            below.push(next);
        }
        let grad_f = cost.grad_unchecked(&below[depth]);
        // above[i] = W_N ⋯ W_{i+1} (above[depth] = I_n)
        let mut above = vec![DMatrix::<f64>::identity(n, n); depth + 1];
        for i in (0..depth).rev() {
            above[i] = &above[i + 1] * &self.layers[i];
        }
        let layers = (0..depth)
            .map(|i| above[i + 1].transpose() * &grad_f * below[i].transpose())
            .collect();
        Ok(LayerGradients { layers })
    }

    /// `W_i ← η W_i`, `W_{i+1} ← W_{i+1}/η` (one-based `i`); the product is
    /// unchanged.
    pub fn rescale_pair(&self, i: usize, eta: f64) -> Result<Self> {
        if i == 0 || i >= self.depth() {
            return Err(Error::InvalidArgument(format!(
                "pair index {i} outside 1..{}",
                self.depth()
            )));
        }
        if eta == 0.0 || !eta.is_finite() {
            return Err(Error::InvalidArgument(format!("rescale factor {eta} must be finite and nonzero")));
        }
        let mut out = self.clone();
        out.layers[i - 1] *= eta;
        out.layers[i] /= eta;
        Ok(out)
    }
}

/// Cost of the overparameterized problem, `g(W) = f(W_N ⋯ W_1)`.
pub fn overparam_cost(stack: &LayerStack, cost: &MatrixCost) -> Result<f64> {
    cost.eval(&stack.product())
}

/// Orthonormal-column embeddings used by [`balanced_init`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Embedding {
    /// First `n` columns of the `k×k` identity.
    #[default]
    Identity,
    /// Random orthonormal columns drawn from the given seed.
    Seeded(u64),
}

fn embeddings(k: usize, n: usize, count: usize, emb: Embedding) -> Vec<DMatrix<f64>> {
    match emb {
        Embedding::Identity => vec![DMatrix::identity(k, n); count],
        Embedding::Seeded(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, 1.0).unwrap();
            (0..count)
                .map(|_| {
                    let g = DMatrix::from_fn(k, n, |_, _| normal.sample(&mut rng));
                    g.qr().q()
                })
                .collect()
        }
    }
}

/// A stack whose product is `target` and whose imbalance matrices all
/// vanish.
///
/// With `target = U Σ Vᵀ`: `W_1 = Q_1 Σ^{1/N} Vᵀ`,
/// `W_i = Q_i Σ^{1/N} Q_{i−1}ᵀ` and `W_N = U Σ^{1/N} Q_{N−1}ᵀ`.
pub fn balanced_init(target: &DMatrix<f64>, shape: NetShape, emb: Embedding) -> Result<LayerStack> {
    let n = shape.n;
    if target.shape() != (n, n) {
        return Err(Error::dims(format!("{n}x{n}"), format!("{}x{}", target.nrows(), target.ncols())));
    }
    let svd = target.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    if !(sv.min() > 1e-12 * smax.max(1.0)) {
        return Err(Error::RankDeficient(sv.min()));
    }
    let u = svd.u.unwrap();
    let v_t = svd.v_t.unwrap();
    let root = DMatrix::from_diagonal(&sv.map(|s| s.powf(1.0 / shape.depth as f64)));
    let q = embeddings(shape.k, n, shape.depth - 1, emb);
    let depth = shape.depth;
    let layers = (0..depth)
        .map(|i| {
            if i == 0 {
                &q[0] * &root * &v_t
            } else if i + 1 == depth {
                &u * &root * q[i - 1].transpose()
            } else {
                &q[i] * &root * q[i - 1].transpose()
            }
        })
        .collect();
    LayerStack::new(shape, layers)
}

/// Entries i.i.d. `N(0, scale²)` from a ChaCha8 stream seeded with `seed`.
pub fn random_init(shape: NetShape, seed: u64, scale: f64) -> Result<LayerStack> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidArgument(format!("scale {scale} must be positive")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, scale).unwrap();
    let layers = (0..shape.depth)
        .map(|i| {
            let (r, c) = shape.layer_dims(i);
            DMatrix::from_fn(r, c, |_, _| normal.sample(&mut rng))
        })
        .collect();
    LayerStack::new(shape, layers)
}

/// Balanced stack through a random Gaussian `n×n` product.
pub fn balanced_random_init(shape: NetShape, seed: u64, scale: f64) -> Result<LayerStack> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidArgument(format!("scale {scale} must be positive")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, scale).unwrap();
    let m = DMatrix::from_fn(shape.n, shape.n, |_, _| normal.sample(&mut rng));
    balanced_init(&m, shape, Embedding::Identity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::invariant::invariants;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    fn quad(t: DMatrix<f64>) -> MatrixCost {
        MatrixCost::quadratic(t).unwrap()
    }

    /// Central differences of g in every parameter.
    fn fd_gradients(stack: &LayerStack, cost: &MatrixCost) -> Vec<f64> {
        let x = stack.to_vector();
        let h = 1e-6;
        (0..x.len())
            .map(|j| {
                let mut p = x.clone();
                let mut m = x.clone();
                p[j] += h;
                m[j] -= h;
                let gp = overparam_cost(&LayerStack::from_slice(stack.shape(), p.as_slice()).unwrap(), cost).unwrap();
                let gm = overparam_cost(&LayerStack::from_slice(stack.shape(), m.as_slice()).unwrap(), cost).unwrap();
                (gp - gm) / (2.0 * h)
            })
            .collect()
    }

    fn flat(g: &LayerGradients) -> Vec<f64> {
        g.layers.iter().flat_map(|m| m.as_slice().to_vec()).collect()
    }

    #[test]
    fn shape_validation() {
        assert!(NetShape::new(2, 1, 2).is_err());
        assert!(NetShape::new(2, 3, 1).is_err());
        assert!(NetShape::new(0, 3, 2).is_err());
        assert!(NetShape::new(2, 2, 2).unwrap().degenerate_width());
        let s = NetShape::new(2, 3, 3).unwrap();
        assert_eq!(s.layer_dims(0), (3, 2));
        assert_eq!(s.layer_dims(1), (3, 3));
        assert_eq!(s.layer_dims(2), (2, 3));
        assert_eq!(s.num_params(), 6 + 9 + 6);
    }

    #[test]
    fn product_examples() {
        let shape = NetShape::new(1, 2, 2).unwrap();
        let s = LayerStack::new(shape, vec![dmatrix![1.0; 0.0], dmatrix![1.0, 0.0]]).unwrap();
        assert_eq!(s.product(), dmatrix![1.0]);
        let z = LayerStack::zeros(NetShape::new(2, 3, 4).unwrap());
        assert_eq!(z.product(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn product_is_association_independent() {
        let s = random_init(NetShape::new(2, 4, 4).unwrap(), 9, 0.8).unwrap();
        let [a, b, c, d] = [s.layer(1), s.layer(2), s.layer(3), s.layer(4)];
        let right = d * (c * (b * a));
        let left = ((d * c) * b) * a;
        assert!((s.product() - &right).norm() < 1e-14);
        assert!((left - right).norm() < 1e-13);
    }

    #[test]
    fn gradients_vanish_at_target_and_origin() {
        let t = dmatrix![2.0, 0.0; 0.0, 0.5];
        let cost = quad(t.clone());
        let s = balanced_init(&t, NetShape::new(2, 3, 3).unwrap(), Embedding::Identity).unwrap();
        assert!(s.layer_gradients(&cost).unwrap().norm() < 1e-12);

        let cost = quad(DMatrix::identity(2, 2));
        let z = LayerStack::zeros(NetShape::new(2, 3, 2).unwrap());
        assert_eq!(z.layer_gradients(&cost).unwrap().norm(), 0.0);
    }

    #[test]
    fn gradients_match_finite_differences_seed7() {
        let shape = NetShape::new(2, 3, 3).unwrap();
        let s = random_init(shape, 7, 1.0).unwrap();
        let cost = quad(dmatrix![1.5, 0.2; -0.3, 0.8]);
        let g = flat(&s.layer_gradients(&cost).unwrap());
        let fd = fd_gradients(&s, &cost);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() / b.abs().max(1.0) < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn gradient_shape_mismatch() {
        let s = random_init(NetShape::new(2, 3, 2).unwrap(), 1, 1.0).unwrap();
        let cost = quad(DMatrix::identity(3, 3));
        assert!(matches!(s.layer_gradients(&cost), Err(Error::Dimension { .. })));
    }

    #[test]
    fn balanced_init_examples() {
        let s = balanced_init(&DMatrix::identity(2, 2), NetShape::new(2, 3, 2).unwrap(), Embedding::Identity).unwrap();
        let inv = invariants(&s).unwrap();
        assert!(inv.matrices[0].norm() < 1e-14);

        let t = dmatrix![2.0, 0.0; 0.0, 0.5];
        for emb in [Embedding::Identity, Embedding::Seeded(4)] {
            let s = balanced_init(&t, NetShape::new(2, 4, 3).unwrap(), emb).unwrap();
            assert!((s.product() - &t).norm() < 1e-10);
            let inv = invariants(&s).unwrap();
            assert!(inv.matrices.iter().all(|c| c.norm() < 1e-10));
        }

        let s = balanced_init(&t, NetShape::new(2, 2, 2).unwrap(), Embedding::Identity).unwrap();
        let w1 = s.layer(1);
        assert!((w1[(0, 0)].abs() - 2f64.sqrt()).abs() < 1e-14);
        assert!((w1[(1, 1)].abs() - 0.5f64.sqrt()).abs() < 1e-14);
        assert!(w1[(0, 1)].abs() < 1e-14 && w1[(1, 0)].abs() < 1e-14);
        assert!((s.product() - &t).norm() < 1e-12);
    }

    #[test]
    fn balanced_init_rejects_singular_target() {
        let r = balanced_init(&dmatrix![1.0, 0.0; 0.0, 0.0], NetShape::new(2, 3, 2).unwrap(), Embedding::Identity);
        assert!(matches!(r, Err(Error::RankDeficient(_))));
    }

    #[test]
    fn random_init_is_deterministic() {
        let shape = NetShape::new(2, 3, 3).unwrap();
        assert_eq!(random_init(shape, 5, 0.5).unwrap(), random_init(shape, 5, 0.5).unwrap());
        assert_ne!(random_init(shape, 1, 0.5).unwrap(), random_init(shape, 2, 0.5).unwrap());
        assert!(random_init(shape, 1, 0.0).is_err());
    }

    #[test]
    fn rescale_pair_examples() {
        let s = random_init(NetShape::new(2, 3, 3).unwrap(), 3, 1.0).unwrap();
        assert_eq!(s.rescale_pair(1, 1.0).unwrap(), s);
        assert!(s.rescale_pair(1, 0.0).is_err());
        assert!(s.rescale_pair(0, 2.0).is_err());
        assert!(s.rescale_pair(3, 2.0).is_err());

        let shape = NetShape::new(1, 1, 2).unwrap();
        let s = LayerStack::new(shape, vec![dmatrix![1.0], dmatrix![1.0]]).unwrap();
        let r = s.rescale_pair(1, 2.0).unwrap();
        assert_eq!(r.layer(1)[(0, 0)], 2.0);
        assert_eq!(r.layer(2)[(0, 0)], 0.5);
        assert_eq!(r.product()[(0, 0)], 1.0);
        let c = crate::invariant::imbalance_scalar(&invariants(&r).unwrap()).unwrap();
        assert!((c - 14.0625).abs() < 1e-12);
    }

    #[test]
    fn vector_roundtrip() {
        let s = random_init(NetShape::new(2, 3, 4).unwrap(), 8, 1.0).unwrap();
        let back = LayerStack::from_slice(s.shape(), s.to_vector().as_slice()).unwrap();
        assert_eq!(back, s);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn layer_gradients_match_fd(depth in 2usize..=4, n in 1usize..=3, extra in 0usize..=3, seed in 0u64..10_000) {
            let shape = NetShape::new(n, n + extra, depth).unwrap();
            let s = random_init(shape, seed, 0.8).unwrap();
            let target = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 + i as f64 } else { 0.25 });
            let cost = quad(target);
            let g = flat(&s.layer_gradients(&cost).unwrap());
            let fd = fd_gradients(&s, &cost);
            for (a, b) in g.iter().zip(&fd) {
                prop_assert!((a - b).abs() / b.abs().max(1.0) < 1e-6, "{} vs {}", a, b);
            }
        }

        #[test]
        fn rescale_preserves_product(seed in 0u64..10_000, depth in 2usize..=4, eta_idx in 0usize..3) {
            let eta = [0.1, 2.0, 10.0][eta_idx];
            let s = random_init(NetShape::new(2, 3, depth).unwrap(), seed, 1.0).unwrap();
            for i in 1..depth {
                let r = s.rescale_pair(i, eta).unwrap();
                prop_assert!((r.product() - s.product()).norm() < 1e-12);
            }
        }
    }
}
