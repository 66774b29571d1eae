//! Reference chains used by tests, the acceptance suite and the CLI.

use rand::Rng;

use super::{SubsetSpec, SymmetricChain};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

fn star<T: Scalar>(kill0: f64, direct: f64) -> SymmetricChain<T> {
    let mut q = DenseMatrix::zeros(3, 3);
    for (a, b, v) in [(0, 1, 1.0), (0, 2, 2.0), (1, 2, direct)] {
        q[(a, b)] = T::lit(v);
        q[(b, a)] = T::lit(v);
    }
    SymmetricChain::from_jump_rates(q, vec![T::lit(kill0), T::zero(), T::zero()], vec![T::one(); 3])
        .expect("fixture is valid")
}

/// States {0,1,2}, unit weights, `Q(0,1) = 1`, `Q(0,2) = 2`, conservative.
pub fn c1<T: Scalar>() -> SymmetricChain<T> {
    star(0.0, 0.0)
}

/// `c1` plus killing at rate 1 in state 0.
pub fn c2<T: Scalar>() -> SymmetricChain<T> {
    star(1.0, 0.0)
}

/// `c1` with a direct rate 5 between the two trace states.
pub fn c1_direct<T: Scalar>() -> SymmetricChain<T> {
    star(0.0, 5.0)
}

/// `F = {1, 2}` for the three-state fixtures.
pub fn fixture_subset() -> SubsetSpec {
    SubsetSpec::new(3, &[1, 2]).expect("valid subset")
}

/// Parameters for [`random_chain`].
#[derive(Debug, Clone, Copy)]
pub struct RandomChainSpec {
    pub states: usize,
    /// Probability that a pair of states is linked.
    pub density: f64,
    /// Probability that a state carries killing.
    pub kill_fraction: f64,
}

/// Random irreducible symmetric chain: random weights in `[0.5, 2]`, a
/// spanning path plus random extra links with symmetric conductances
/// `c(x,y)`, `Q(x,y) = c(x,y) / m(x)`.
pub fn random_chain<R: Rng + ?Sized>(rng: &mut R, spec: RandomChainSpec) -> SymmetricChain<f64> {
    let n = spec.states.max(2);
    let m: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut c = DenseMatrix::zeros(n, n);
    for w in order.windows(2) {
        let v = rng.random_range(0.1..2.0);
        c[(w[0], w[1])] = v;
        c[(w[1], w[0])] = v;
    }
    for x in 0..n {
        for y in x + 1..n {
            if c[(x, y)] == 0.0 && rng.random_bool(spec.density) {
                let v = rng.random_range(0.1..2.0);
                c[(x, y)] = v;
                c[(y, x)] = v;
            }
        }
    }
    let q = DenseMatrix::from_fn(n, n, |x, y| c[(x, y)] / m[x]);
    let kill = (0..n)
        .map(|_| {
            if rng.random_bool(spec.kill_fraction) {
                rng.random_range(0.05..1.0)
            } else {
                0.0
            }
        })
        .collect();
    SymmetricChain::from_jump_rates(q, kill, m).expect("random chain is valid by construction")
}

/// Random proper subset with between 1 and `n - 1` elements.
pub fn random_subset<R: Rng + ?Sized>(rng: &mut R, n: usize) -> SubsetSpec {
    let k = rng.random_range(1..n);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    SubsetSpec::new(n, &idx[..k]).expect("proper subset")
}
