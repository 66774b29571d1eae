//! Exact Feller measures and trace forms for finite symmetric chains.
//!
//! On a finite state space every object of the trace theory is a closed
//! form matrix expression: the killed process on `E0 = E \ F` is the
//! sub-generator `Q00`, the hitting operator is `(-Q00)^{-1} Q0F`, the
//! energy functional is `<-Q00 f, g>_m`, and the trace form is the Schur
//! complement of `Q` onto `F`. The functions here compute those objects and
//! check the identities linking them.

mod error;
pub mod fixtures;
pub mod io;
pub mod lattice;
mod trace;

use std::collections::VecDeque;

pub use error::{ChainError, Violation};
pub use trace::{
    hitting_time_measure, time_change_chain, trace_form, trace_jump_kill, verify_identities,
    IdentityReport, JumpKillCertificate, Residual, TraceDecomposition,
};

use crate::linalg::{DenseMatrix, Lu};
use crate::scalar::Scalar;
use crate::tolerances;

/// Finite chain with rate matrix `Q` symmetric with respect to weights `m`.
///
/// `Q` carries its diagonal; the killing rate is the row defect
/// `k(x) = -Σ_y Q(x,y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricChain<T> {
    labels: Vec<String>,
    weights: Vec<T>,
    rates: DenseMatrix<T>,
    kill: Vec<T>,
}

impl<T: Scalar> SymmetricChain<T> {
    /// Validates a full rate table (diagonal included) against detailed
    /// balance, sign, row-sum and irreducibility constraints. Every
    /// violation found is reported, not just the first.
    pub fn validate(rates: DenseMatrix<T>, weights: Vec<T>) -> Result<Self, ChainError> {
        let mut bad = Vec::new();
        if !rates.is_square() {
            return Err(ChainError::Invalid(vec![Violation::NotSquare {
                rows: rates.rows(),
                cols: rates.cols(),
            }]));
        }
        let n = rates.rows();
        if weights.len() != n {
            return Err(ChainError::Invalid(vec![Violation::WeightCount {
                expected: n,
                found: weights.len(),
            }]));
        }
        for (x, &w) in weights.iter().enumerate() {
            if w <= T::zero() || !w.as_f64().is_finite() {
                bad.push(Violation::NonPositiveWeight { state: x });
            }
        }
        let tol = T::tolerance(tolerances::DETAILED_BALANCE);
        for x in 0..n {
            for y in 0..n {
                let q = rates[(x, y)];
                if !q.as_f64().is_finite() {
                    bad.push(Violation::NonFinite { from: x, to: y });
                    continue;
                }
                if x == y {
                    continue;
                }
                if q < T::zero() {
                    bad.push(Violation::NegativeRate { from: x, to: y });
                }
                if y > x {
                    let fwd = weights[x] * q;
                    let bwd = weights[y] * rates[(y, x)];
                    let scale = fwd.abs().max_of(bwd.abs());
                    if (fwd - bwd).abs() > tol * scale {
                        bad.push(Violation::SymmetryViolation {
                            from: x,
                            to: y,
                            forward: fwd.as_f64(),
                            backward: bwd.as_f64(),
                        });
                    }
                }
            }
        }
        let mut kill = Vec::with_capacity(n);
        for x in 0..n {
            let row = rates.row(x);
            let sum = row.iter().fold(T::zero(), |a, &b| a + b);
            let scale = row.iter().fold(T::zero(), |a, &b| a + b.abs());
            if sum > tol * scale {
                bad.push(Violation::PositiveRowSum {
                    state: x,
                    sum: sum.as_f64(),
                });
            }
            kill.push((-sum).max_of(T::zero()));
        }
        let components = components(n, |x, y| rates[(x, y)] > T::zero() || rates[(y, x)] > T::zero());
        if components.len() > 1 {
            bad.push(Violation::NotIrreducible { components });
        }
        if !bad.is_empty() {
            return Err(ChainError::Invalid(bad));
        }
        Ok(Self {
            labels: (0..n).map(|i| i.to_string()).collect(),
            weights,
            rates,
            kill,
        })
    }

    /// Builds `Q` from off-diagonal rates and killing rates, filling the
    /// diagonal, then validates.
    pub fn from_jump_rates(
        jump: DenseMatrix<T>,
        kill: Vec<T>,
        weights: Vec<T>,
    ) -> Result<Self, ChainError> {
        let n = jump.rows();
        if kill.len() != n {
            return Err(ChainError::Dimension {
                expected: n,
                found: kill.len(),
            });
        }
        let mut q = jump;
        for x in 0..n {
            q[(x, x)] = T::zero();
            let out = q.row(x).iter().fold(T::zero(), |a, &b| a + b);
            q[(x, x)] = -(out + kill[x]);
        }
        Self::validate(q, weights)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        assert_eq!(labels.len(), self.len());
        self.labels = labels;
        self
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn rates(&self) -> &DenseMatrix<T> {
        &self.rates
    }

    pub fn kill_rates(&self) -> &[T] {
        &self.kill
    }

    pub fn rate(&self, x: usize, y: usize) -> T {
        self.rates[(x, y)]
    }

    pub fn total_mass(&self) -> T {
        self.weights.iter().fold(T::zero(), |a, &b| a + b)
    }

    pub fn is_conservative(&self) -> bool {
        self.kill.iter().all(|k| k.is_zero())
    }

    /// Total exit rate `-Q(x,x)` (jumps plus killing).
    pub fn exit_rate(&self, x: usize) -> T {
        -self.rates[(x, x)]
    }

    /// `max_x m(x)(-Q(x,x))`, the size of the largest diagonal entry of the
    /// energy matrix.
    pub fn energy_scale(&self) -> T {
        (0..self.len()).fold(T::zero(), |acc, x| acc.max_of(self.weights[x] * self.exit_rate(x)))
    }

    /// `E(f, g) = Σ_x m(x) (-Q f)(x) g(x)`.
    pub fn energy(&self, f: &[T], g: &[T]) -> T {
        let qf = self.rates.matvec(f);
        qf.iter()
            .zip(g)
            .zip(&self.weights)
            .fold(T::zero(), |acc, ((&a, &b), &m)| acc - m * a * b)
    }

    /// `E(f, f)` through its Beurling-Deny sum
    /// `Σ_{x<y} m(x)Q(x,y)(f(x)-f(y))² + Σ_x m(x)k(x)f(x)²`.
    pub fn energy_pairwise(&self, f: &[T]) -> T {
        let n = self.len();
        let mut e = T::zero();
        for x in 0..n {
            for y in x + 1..n {
                let d = f[x] - f[y];
                e = e + self.weights[x] * self.rates[(x, y)] * d * d;
            }
            e = e + self.weights[x] * self.kill[x] * f[x] * f[x];
        }
        e
    }
}

fn components(n: usize, linked: impl Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
    let mut label = vec![usize::MAX; n];
    let mut out = Vec::new();
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut comp = vec![s];
        label[s] = id;
        let mut queue = VecDeque::from([s]);
        while let Some(x) = queue.pop_front() {
            for y in 0..n {
                if label[y] == usize::MAX && y != x && linked(x, y) {
                    label[y] = id;
                    comp.push(y);
                    queue.push_back(y);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// A trace set `F` and its complement `E0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetSpec {
    states: usize,
    trace: Vec<usize>,
    outer: Vec<usize>,
}

impl SubsetSpec {
    pub fn new(states: usize, trace: &[usize]) -> Result<Self, ChainError> {
        let mut member = vec![false; states];
        for &i in trace {
            if i >= states {
                return Err(ChainError::IndexOutOfRange { index: i, states });
            }
            member[i] = true;
        }
        let trace: Vec<usize> = (0..states).filter(|&i| member[i]).collect();
        if trace.is_empty() || trace.len() == states {
            return Err(ChainError::ImproperSubset { states });
        }
        let outer = (0..states).filter(|&i| !member[i]).collect();
        Ok(Self {
            states,
            trace,
            outer,
        })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    /// Indices of `F`, ascending.
    pub fn trace(&self) -> &[usize] {
        &self.trace
    }

    /// Indices of `E0`, ascending.
    pub fn complement(&self) -> &[usize] {
        &self.outer
    }

    pub fn contains(&self, x: usize) -> bool {
        self.trace.binary_search(&x).is_ok()
    }

    /// Position of `x` within `F`.
    pub fn trace_position(&self, x: usize) -> Option<usize> {
        self.trace.binary_search(&x).ok()
    }

    pub fn complement_position(&self, x: usize) -> Option<usize> {
        self.outer.binary_search(&x).ok()
    }

    /// Membership mask over all states.
    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.states];
        for &i in &self.trace {
            m[i] = true;
        }
        m
    }
}

/// Blocks of `Q` split along `E0 | F`, with the killed generator factored.
#[derive(Debug, Clone)]
pub struct KilledBlocks<T> {
    pub subset: SubsetSpec,
    pub q00: DenseMatrix<T>,
    pub q0f: DenseMatrix<T>,
    pub qf0: DenseMatrix<T>,
    pub qff: DenseMatrix<T>,
    pub m0: Vec<T>,
    pub mf: Vec<T>,
    pub kill0: Vec<T>,
    pub killf: Vec<T>,
    neg_q00: Lu<T>,
}

/// Splits the chain along `F` and factors `-Q00`.
pub fn split_blocks<T: Scalar>(
    chain: &SymmetricChain<T>,
    subset: &SubsetSpec,
) -> Result<KilledBlocks<T>, ChainError> {
    if subset.states() != chain.len() {
        return Err(ChainError::Dimension {
            expected: chain.len(),
            found: subset.states(),
        });
    }
    let (o, f) = (subset.complement(), subset.trace());
    let q = chain.rates();
    let q00 = q.select(o, o);
    let neg_q00 = Lu::factor(&q00.map(|v| -v)).map_err(|_| ChainError::SingularKilledGenerator)?;
    let pick = |v: &[T], idx: &[usize]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
    Ok(KilledBlocks {
        subset: subset.clone(),
        q0f: q.select(o, f),
        qf0: q.select(f, o),
        qff: q.select(f, f),
        m0: pick(chain.weights(), o),
        mf: pick(chain.weights(), f),
        kill0: pick(chain.kill_rates(), o),
        killf: pick(chain.kill_rates(), f),
        q00,
        neg_q00,
    })
}

impl<T: Scalar> KilledBlocks<T> {
    /// Potential operator `G0 = (-Q00)^{-1}` applied to `v`.
    pub fn potential(&self, v: &[T]) -> Vec<T> {
        self.neg_q00.solve(v)
    }

    /// Reassembles the full rate matrix from the four blocks.
    pub fn reassemble(&self) -> DenseMatrix<T> {
        let n = self.subset.states();
        let (o, f) = (self.subset.complement(), self.subset.trace());
        let mut q = DenseMatrix::zeros(n, n);
        for (a, &x) in o.iter().enumerate() {
            for (b, &y) in o.iter().enumerate() {
                q[(x, y)] = self.q00[(a, b)];
            }
            for (b, &y) in f.iter().enumerate() {
                q[(x, y)] = self.q0f[(a, b)];
                q[(y, x)] = self.qf0[(b, a)];
            }
        }
        for (a, &x) in f.iter().enumerate() {
            for (b, &y) in f.iter().enumerate() {
                q[(x, y)] = self.qff[(a, b)];
            }
        }
        q
    }
}

/// Hitting probabilities of `F` from `E0`, plain and α-discounted.
#[derive(Debug, Clone)]
pub struct HittingData<T> {
    /// `H(x, ξ) = P_x(X_{σF} = ξ)`, rows over `E0`.
    pub h: DenseMatrix<T>,
    /// Escape probability `q = 1 - H 1`, computed as `G0 k0`.
    pub q: Vec<T>,
    pub alphas: Vec<T>,
    /// `H^α = (α - Q00)^{-1} Q0F`, one per entry of `alphas`.
    pub h_alpha: Vec<DenseMatrix<T>>,
}

pub fn hitting_operator<T: Scalar>(
    blocks: &KilledBlocks<T>,
    alphas: &[T],
) -> Result<HittingData<T>, ChainError> {
    if let Some(&a) = alphas.iter().find(|&&a| a < T::zero()) {
        return Err(ChainError::NegativeRate(a.as_f64()));
    }
    let h = blocks.neg_q00.solve_matrix(&blocks.q0f);
    // q = 1 - H1 = G0 k0; the potential form has no cancellation
    let q = blocks.potential(&blocks.kill0);
    let n0 = blocks.q00.rows();
    let h_alpha = alphas
        .iter()
        .map(|&a| {
            let shifted = DenseMatrix::from_fn(n0, n0, |i, j| {
                let d = if i == j { a } else { T::zero() };
                d - blocks.q00[(i, j)]
            });
            Ok(Lu::factor(&shifted)
                .map_err(|_| ChainError::SingularKilledGenerator)?
                .solve_matrix(&blocks.q0f))
        })
        .collect::<Result<Vec<_>, ChainError>>()?;
    Ok(HittingData {
        h,
        q,
        alphas: alphas.to_vec(),
        h_alpha,
    })
}

impl<T: Scalar> HittingData<T> {
    /// Harmonic extension of `u` on `F` to all states.
    pub fn extend(&self, subset: &SubsetSpec, u: &[T]) -> Vec<T> {
        assert_eq!(u.len(), subset.trace().len());
        let inner = self.h.matvec(u);
        let mut out = vec![T::zero(); subset.states()];
        for (&x, &v) in subset.trace().iter().zip(u) {
            out[x] = v;
        }
        for (&x, v) in subset.complement().iter().zip(inner) {
            out[x] = v;
        }
        out
    }
}

fn check_len<T>(v: &[T], n: usize) -> Result<(), ChainError> {
    if v.len() != n {
        return Err(ChainError::Dimension {
            expected: n,
            found: v.len(),
        });
    }
    Ok(())
}

/// Energy functional `L(f, g) = Σ_{E0} m (-Q00 f) g` of the killed chain.
///
/// `f` must be excessive for the killed chain (`Q00 f <= 0`); on a finite
/// chain this equals the increasing limit of `α <f - α G_α f, g>_m`.
pub fn energy_functional<T: Scalar>(
    blocks: &KilledBlocks<T>,
    f: &[T],
    g: &[T],
) -> Result<T, ChainError> {
    let n0 = blocks.m0.len();
    check_len(f, n0)?;
    check_len(g, n0)?;
    let qf = blocks.q00.matvec(f);
    let norm = f.iter().fold(T::zero(), |a, &b| a.max_of(b.abs()));
    let slack = T::tolerance(tolerances::EXCESSIVE) * norm;
    let bad: Vec<usize> = qf
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > slack)
        .map(|(i, _)| blocks.subset.complement()[i])
        .collect();
    if !bad.is_empty() {
        return Err(ChainError::NotExcessive { states: bad });
    }
    Ok(qf
        .iter()
        .zip(g)
        .zip(&blocks.m0)
        .fold(T::zero(), |acc, ((&a, &b), &m)| acc - m * a * b))
}

/// `α <f - α G_α f, g>_m`, the pre-limit of the energy functional.
pub fn energy_functional_at<T: Scalar>(
    blocks: &KilledBlocks<T>,
    alpha: T,
    f: &[T],
    g: &[T],
) -> Result<T, ChainError> {
    let n0 = blocks.m0.len();
    check_len(f, n0)?;
    check_len(g, n0)?;
    let shifted = DenseMatrix::from_fn(n0, n0, |i, j| {
        let d = if i == j { alpha } else { T::zero() };
        d - blocks.q00[(i, j)]
    });
    let gf = Lu::factor(&shifted)?.solve(f);
    Ok((0..n0).fold(T::zero(), |acc, i| {
        acc + alpha * blocks.m0[i] * (f[i] - alpha * gf[i]) * g[i]
    }))
}

/// Zero-order potential `G0 ν = (-Q00)^{-1} (ν / m0)` of a measure on `E0`.
pub fn zero_order_potential<T: Scalar>(
    blocks: &KilledBlocks<T>,
    nu: &[T],
) -> Result<Vec<T>, ChainError> {
    check_len(nu, blocks.m0.len())?;
    if let Some(i) = nu.iter().position(|&v| v < T::zero()) {
        return Err(ChainError::NonPositiveWeight {
            state: blocks.subset.complement()[i],
        });
    }
    let density: Vec<T> = nu.iter().zip(&blocks.m0).map(|(&v, &m)| v / m).collect();
    Ok(blocks.potential(&density))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Exact,
    MonteCarlo,
}

/// Feller matrix `U`, supplementary vector `V`, and the α-order family.
#[derive(Debug, Clone)]
pub struct FellerData<T> {
    pub u: DenseMatrix<T>,
    pub v: Vec<T>,
    pub alphas: Vec<T>,
    pub u_alpha: Vec<DenseMatrix<T>>,
    pub provenance: Provenance,
}

/// `U(ξ,η) = Σ_{E0} m(x) Q(x,ξ) H(x,η)`, `V(ξ) = Σ_{E0} m(x) Q(x,ξ) q(x)`,
/// `U_α(ξ,η) = α Σ_{E0} m(x) H^α(x,ξ) H(x,η)`.
///
/// The diagonal of `U` is kept: it is the mass of excursions that return to
/// their starting state. Identities only ever see off-diagonal entries.
pub fn feller_measures<T: Scalar>(blocks: &KilledBlocks<T>, hit: &HittingData<T>) -> FellerData<T> {
    let weighted_q = blocks.q0f.scale_rows(&blocks.m0);
    let u = weighted_q.transpose().matmul(&hit.h);
    let v = weighted_q.vecmat(&hit.q);
    let mh = hit.h.scale_rows(&blocks.m0);
    let u_alpha = hit
        .alphas
        .iter()
        .zip(&hit.h_alpha)
        .map(|(&a, ha)| ha.transpose().matmul(&mh).scale(a))
        .collect();
    FellerData {
        u,
        v,
        alphas: hit.alphas.clone(),
        u_alpha,
        provenance: Provenance::Exact,
    }
}

/// Convenience: blocks, hitting data and Feller data in one call.
pub fn feller_for<T: Scalar>(
    chain: &SymmetricChain<T>,
    subset: &SubsetSpec,
    alphas: &[T],
) -> Result<(KilledBlocks<T>, HittingData<T>, FellerData<T>), ChainError> {
    let blocks = split_blocks(chain, subset)?;
    let hit = hitting_operator(&blocks, alphas)?;
    let feller = feller_measures(&blocks, &hit);
    Ok((blocks, hit, feller))
}

/// Jumping matrix `J(x,y) = ½ m(x) Q(x,y)` (zero diagonal) and killing
/// vector `κ(x) = m(x) k(x)`.
pub fn beurling_deny<T: Scalar>(chain: &SymmetricChain<T>) -> (DenseMatrix<T>, Vec<T>) {
    let n = chain.len();
    let half = T::one() / (T::one() + T::one());
    let m = chain.weights();
    let j = DenseMatrix::from_fn(n, n, |x, y| {
        if x == y {
            T::zero()
        } else {
            half * m[x] * chain.rate(x, y)
        }
    });
    let kappa = m.iter().zip(chain.kill_rates()).map(|(&a, &b)| a * b).collect();
    (j, kappa)
}

/// Energy measure of `f`, split by part. The strongly local part is zero
/// on chains and carried only to keep the decomposition explicit.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyMeasure<T> {
    pub jump_part: Vec<T>,
    pub kill_part: Vec<T>,
    pub local_part: Vec<T>,
}

impl<T: Scalar> EnergyMeasure<T> {
    /// `μ<f>(x)` summed over parts.
    pub fn total_at(&self, x: usize) -> T {
        self.jump_part[x] + self.kill_part[x] + self.local_part[x]
    }

    pub fn total_over(&self, states: &[usize]) -> T {
        states.iter().fold(T::zero(), |a, &x| a + self.total_at(x))
    }

    pub fn total(&self) -> T {
        (0..self.jump_part.len()).fold(T::zero(), |a, x| a + self.total_at(x))
    }

    pub fn kill_over(&self, states: &[usize]) -> T {
        states.iter().fold(T::zero(), |a, &x| a + self.kill_part[x])
    }

    pub fn jump_over(&self, states: &[usize]) -> T {
        states.iter().fold(T::zero(), |a, &x| a + self.jump_part[x])
    }
}

/// `jump(x) = m(x) Σ_y Q(x,y)(f(y)-f(x))²`, `kill(x) = m(x) k(x) f(x)²`.
pub fn energy_measure<T: Scalar>(chain: &SymmetricChain<T>, f: &[T]) -> Result<EnergyMeasure<T>, ChainError> {
    let n = chain.len();
    check_len(f, n)?;
    let m = chain.weights();
    let jump_part = (0..n)
        .map(|x| {
            let s = (0..n)
                .filter(|&y| y != x)
                .fold(T::zero(), |acc, y| {
                    let d = f[y] - f[x];
                    acc + chain.rate(x, y) * d * d
                });
            m[x] * s
        })
        .collect();
    let kill_part = (0..n)
        .map(|x| m[x] * chain.kill_rates()[x] * f[x] * f[x])
        .collect();
    Ok(EnergyMeasure {
        jump_part,
        kill_part,
        local_part: vec![T::zero(); n],
    })
}
