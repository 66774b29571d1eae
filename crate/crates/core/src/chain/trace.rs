use super::{
    beurling_deny, check_len, energy_measure, feller_for, feller_measures, hitting_operator,
    split_blocks, ChainError, FellerData, SubsetSpec, SymmetricChain,
};
use crate::linalg::DenseMatrix;
use crate::scalar::{rel_diff, Scalar};
use crate::tolerances;

/// Trace of the chain on `F`: the form matrix, its generator and the
/// Beurling-Deny data of the time-changed chain.
#[derive(Debug, Clone)]
pub struct TraceDecomposition<T> {
    /// `A` with `Ě(u, v) = u^T A v`, from the Schur complement.
    pub form: DenseMatrix<T>,
    /// `A` recomputed as `E(Hu, Hv)` over harmonic extensions.
    pub form_by_energy: DenseMatrix<T>,
    /// Schur complement `QFF - QF0 Q00^{-1} Q0F` (the trace generator for
    /// time-change weights `m|F`).
    pub generator: DenseMatrix<T>,
    /// `Ĵ(ξ,η) = ½ m(ξ) Q̌(ξ,η)`, zero diagonal.
    pub jump: DenseMatrix<T>,
    /// `κ̂(ξ) = m(ξ) (-Σ_η Q̌(ξ,η))`.
    pub kill: Vec<T>,
    /// Time-change weights on `F`.
    pub mu: Vec<T>,
    /// Relative disagreement between the two routes to `A`.
    pub route_residual: T,
}

impl<T: Scalar> TraceDecomposition<T> {
    /// `Ě(u, v)`.
    pub fn energy(&self, u: &[T], v: &[T]) -> T {
        self.form.bilinear(u, v)
    }

    /// Generator of the chain time-changed by `mu`: `-diag(mu)^{-1} A`.
    pub fn time_changed_generator(&self) -> DenseMatrix<T> {
        let inv: Vec<T> = self.mu.iter().map(|&w| -(T::one() / w)).collect();
        self.form.scale_rows(&inv)
    }

    /// `Σ_{ξ≠η} (u(ξ)-u(η))² Ĵ(ξ,η) + Σ u² κ̂`.
    pub fn energy_beurling_deny(&self, u: &[T]) -> T {
        let k = self.kill.len();
        let mut e = T::zero();
        for a in 0..k {
            for b in 0..k {
                if a != b {
                    let d = u[a] - u[b];
                    e = e + d * d * self.jump[(a, b)];
                }
            }
            e = e + u[a] * u[a] * self.kill[a];
        }
        e
    }
}

/// Trace form on `F` with time-change weights `mu`, computed both as
/// `E(Hu, Hv)` and as the Schur complement of `Q`.
pub fn trace_form<T: Scalar>(
    chain: &SymmetricChain<T>,
    subset: &SubsetSpec,
    mu: &[T],
) -> Result<TraceDecomposition<T>, ChainError> {
    let f = subset.trace();
    check_len(mu, f.len())?;
    if let Some(i) = mu.iter().position(|&w| w <= T::zero()) {
        return Err(ChainError::NonPositiveWeight { state: f[i] });
    }
    let blocks = split_blocks(chain, subset)?;
    let hit = hitting_operator(&blocks, &[])?;

    // Off-diagonal entries are sums of nonnegative terms. The diagonal is
    // rebuilt from the row sums and the trace killing `k_F + QF0 q`, as in
    // eliminating E0 from the chain augmented with the cemetery.
    let mut generator = blocks.qff.add(&blocks.qf0.matmul(&hit.h));
    let trace_kill: Vec<T> = blocks
        .qf0
        .matvec(&hit.q)
        .into_iter()
        .zip(&blocks.killf)
        .map(|(a, &b)| a + b)
        .collect();
    for a in 0..f.len() {
        let off = (0..f.len())
            .filter(|&b| b != a)
            .fold(T::zero(), |acc, b| acc + generator[(a, b)]);
        generator[(a, a)] = -(off + trace_kill[a]);
    }
    let form = generator.scale_rows(&blocks.mf).map(|v| -v);

    let k = f.len();
    let n = chain.len();
    let ext = DenseMatrix::from_fn(n, k, |x, j| {
        if let Some(p) = subset.trace_position(x) {
            if p == j {
                T::one()
            } else {
                T::zero()
            }
        } else {
            hit.h[(subset.complement_position(x).expect("partition"), j)]
        }
    });
    let form_by_energy = pairwise_gram(chain, &ext);
    let floor = T::tolerance(tolerances::RESIDUAL_FLOOR) * chain.energy_scale();
    let route_scale = form.max_abs().max_of(form_by_energy.max_abs()).max_of(floor);
    let route_residual = if route_scale.is_zero() {
        T::zero()
    } else {
        form.max_abs_diff(&form_by_energy) / route_scale
    };

    let slack = T::tolerance(tolerances::MARKOV_SLACK) * generator.max_abs();
    for a in 0..k {
        for b in 0..k {
            if a != b && generator[(a, b)] < -slack {
                return Err(ChainError::NonMarkovTrace {
                    from: f[a],
                    to: f[b],
                    value: generator[(a, b)].as_f64(),
                });
            }
        }
    }
    let half = T::one() / (T::one() + T::one());
    let jump = DenseMatrix::from_fn(k, k, |a, b| {
        if a == b {
            T::zero()
        } else {
            half * blocks.mf[a] * generator[(a, b)]
        }
    });
    let kill = generator
        .row_sums()
        .into_iter()
        .zip(&blocks.mf)
        .map(|(s, &m)| -(m * s))
        .collect();
    Ok(TraceDecomposition {
        form,
        form_by_energy,
        generator,
        jump,
        kill,
        mu: mu.to_vec(),
        route_residual,
    })
}

/// `G(a,b) = Σ_{x<y} c(x,y) Δ_a Δ_b + Σ_x κ(x) e(x,a) e(x,b)` with
/// `Δ_a = e(x,a) - e(y,a)`: the energy Gram matrix of the columns of `ext`,
/// summed over edges so that constant columns give exact zeros.
fn pairwise_gram<T: Scalar>(chain: &SymmetricChain<T>, ext: &DenseMatrix<T>) -> DenseMatrix<T> {
    let (c, kappa) = beurling_deny(chain);
    let (n, k) = (ext.rows(), ext.cols());
    let two = T::one() + T::one();
    let mut g = DenseMatrix::zeros(k, k);
    let mut d = vec![T::zero(); k];
    for x in 0..n {
        for y in x + 1..n {
            let w = two * c[(x, y)];
            if w.is_zero() {
                continue;
            }
            for (a, da) in d.iter_mut().enumerate() {
                *da = ext[(x, a)] - ext[(y, a)];
            }
            for a in 0..k {
                if d[a].is_zero() {
                    continue;
                }
                let wa = w * d[a];
                for b in a..k {
                    g[(a, b)] = g[(a, b)] + wa * d[b];
                }
            }
        }
        if !kappa[x].is_zero() {
            for a in 0..k {
                let wa = kappa[x] * ext[(x, a)];
                for b in a..k {
                    g[(a, b)] = g[(a, b)] + wa * ext[(x, b)];
                }
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            g[(a, b)] = g[(b, a)];
        }
    }
    g
}

/// Jump and killing data of the trace assembled from Feller measures,
/// `Ĵ = ½U + J|F×F` (off-diagonal) and `κ̂ = V + κ|F`, checked against the
/// Schur complement.
#[derive(Debug, Clone)]
pub struct JumpKillCertificate<T> {
    pub jump: DenseMatrix<T>,
    pub kill: Vec<T>,
    pub jump_residual: T,
    pub kill_residual: T,
}

impl<T: Scalar> JumpKillCertificate<T> {
    pub fn max_residual(&self) -> T {
        self.jump_residual.max_of(self.kill_residual)
    }
}

pub fn trace_jump_kill<T: Scalar>(
    chain: &SymmetricChain<T>,
    subset: &SubsetSpec,
) -> Result<JumpKillCertificate<T>, ChainError> {
    let (blocks, _, feller) = feller_for(chain, subset, &[])?;
    let (j, kappa) = beurling_deny(chain);
    let f = subset.trace();
    let k = f.len();
    let half = T::one() / (T::one() + T::one());
    let jump = DenseMatrix::from_fn(k, k, |a, b| {
        if a == b {
            T::zero()
        } else {
            half * feller.u[(a, b)] + j[(f[a], f[b])]
        }
    });
    let kill: Vec<T> = (0..k).map(|a| feller.v[a] + kappa[f[a]]).collect();
    let schur = trace_form(chain, subset, &blocks.mf)?;
    // Both residuals share one scale: on conservative chains the killing
    // vanishes and would otherwise be compared against round-off.
    let scale = kill
        .iter()
        .chain(&schur.kill)
        .fold(jump.max_abs().max_of(schur.jump.max_abs()), |acc, &x| acc.max_of(x.abs()))
        .max_of(T::tolerance(tolerances::RESIDUAL_FLOOR) * chain.energy_scale());
    let rel = |d: T| if scale.is_zero() { T::zero() } else { d / scale };
    let kill_diff = kill
        .iter()
        .zip(&schur.kill)
        .fold(T::zero(), |acc, (&x, &y)| acc.max_of((x - y).abs()));
    let cert = JumpKillCertificate {
        jump_residual: rel(jump.max_abs_diff(&schur.jump)),
        kill_residual: rel(kill_diff),
        jump,
        kill,
    };
    if !T::EXACT && cert.max_residual() > T::tolerance(tolerances::IDENTITY) {
        return Err(ChainError::IdentityViolation {
            residual: cert.max_residual().as_f64(),
        });
    }
    if T::EXACT && !cert.max_residual().is_zero() {
        return Err(ChainError::IdentityViolation {
            residual: cert.max_residual().as_f64(),
        });
    }
    Ok(cert)
}

/// Both sides of one identity and their relative gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual<T> {
    pub lhs: T,
    pub rhs: T,
    pub rel: T,
}

impl<T: Scalar> Residual<T> {
    pub fn new(lhs: T, rhs: T) -> Self {
        Self::with_floor(lhs, rhs, T::zero())
    }

    /// `|lhs - rhs| / max(|lhs|, |rhs|, floor)`.
    pub fn with_floor(lhs: T, rhs: T, floor: T) -> Self {
        Self {
            lhs,
            rhs,
            rel: rel_diff(lhs, rhs, floor),
        }
    }
}

/// Residuals of the trace identities for one boundary function `u`.
#[derive(Debug, Clone)]
pub struct IdentityReport<T> {
    /// `μ<Hu>(E0) + 2Σ_{E0×F}(Hu-u)²J + Σ_{E0}(Hu)²κ`
    /// vs `Σ_{F×F}(u(ξ)-u(η))²U + 2Σ u²V`.
    pub jump_kill_balance: Residual<T>,
    /// `E(Hu,Hu)` vs `Σ_{F×F}(u(ξ)-u(η))²(½U + J) + Σ u²(V + κ)`.
    pub trace_decomposition: Residual<T>,
    /// `E(Hu,Hu)` vs `½μ(E0) + ½μᵏ(E0) + ½μʲ(F) + μᵏ(F)`.
    pub energy_split: Residual<T>,
    /// Schur route vs energy route for `Ě(u,u)`.
    pub schur_energy: Residual<T>,
    /// `max|U - U^T| / max|U|`.
    pub feller_symmetry: T,
    /// Off-diagonal `U_α` entries never decrease along the α grid.
    pub alpha_monotone: bool,
    /// `max|U_α - U| / max|U|` at the largest α.
    pub alpha_gap: T,
}

impl<T: Scalar> IdentityReport<T> {
    /// Largest relative residual over the exact identities.
    pub fn max_identity_residual(&self) -> T {
        self.jump_kill_balance
            .rel
            .max_of(self.trace_decomposition.rel)
            .max_of(self.energy_split.rel)
            .max_of(self.schur_energy.rel)
    }
}

/// Evaluates the trace identities for `u` on `F`. Nothing is thresholded
/// here; callers compare against [`tolerances`].
pub fn verify_identities<T: Scalar>(
    chain: &SymmetricChain<T>,
    subset: &SubsetSpec,
    u: &[T],
    alphas: &[T],
) -> Result<IdentityReport<T>, ChainError> {
    let f = subset.trace();
    let e0 = subset.complement();
    check_len(u, f.len())?;
    let blocks = split_blocks(chain, subset)?;
    let hit = hitting_operator(&blocks, alphas)?;
    let feller = feller_measures(&blocks, &hit);
    let (j, kappa) = beurling_deny(chain);
    let hu = hit.extend(subset, u);
    let mu = energy_measure(chain, &hu)?;
    let two = T::one() + T::one();
    let half = T::one() / two;
    let k = f.len();

    let mut cross = T::zero();
    for &x in e0 {
        for (a, &xi) in f.iter().enumerate() {
            let d = hu[x] - u[a];
            cross = cross + d * d * j[(x, xi)];
        }
    }
    let kill_e0 = e0
        .iter()
        .fold(T::zero(), |acc, &x| acc + hu[x] * hu[x] * kappa[x]);
    let mut diff_u = T::zero();
    let mut diff_trace = T::zero();
    for a in 0..k {
        for b in 0..k {
            if a == b {
                continue;
            }
            let d = u[a] - u[b];
            diff_u = diff_u + d * d * feller.u[(a, b)];
            diff_trace = diff_trace + d * d * (half * feller.u[(a, b)] + j[(f[a], f[b])]);
        }
    }
    let v_u2 = (0..k).fold(T::zero(), |acc, a| acc + u[a] * u[a] * feller.v[a]);
    let vk_u2 = (0..k).fold(T::zero(), |acc, a| {
        acc + u[a] * u[a] * (feller.v[a] + kappa[f[a]])
    });

    let u_sq = u.iter().fold(T::zero(), |acc, &x| acc + x * x);
    let floor = T::tolerance(tolerances::RESIDUAL_FLOOR) * chain.energy_scale() * u_sq;
    let balance = Residual::with_floor(
        mu.total_over(e0) + two * cross + kill_e0,
        diff_u + two * v_u2,
        floor,
    );
    let energy = chain.energy_pairwise(&hu);
    let decomposition = Residual::with_floor(energy, diff_trace + vk_u2, floor);
    let split = Residual::with_floor(
        energy,
        half * mu.total_over(e0) + half * mu.kill_over(e0) + half * mu.jump_over(f) + mu.kill_over(f),
        floor,
    );
    let schur = trace_form(chain, subset, &blocks.mf)?;
    let schur_energy = Residual::with_floor(schur.energy(u, u), energy, floor);

    let mut monotone = true;
    for w in feller.u_alpha.windows(2) {
        for a in 0..k {
            for b in 0..k {
                let slack = T::tolerance(tolerances::IDENTITY) * feller.u.max_abs();
                if a != b && w[1][(a, b)] < w[0][(a, b)] - slack {
                    monotone = false;
                }
            }
        }
    }
    let alpha_gap = feller
        .u_alpha
        .last()
        .map(|ua| {
            let offdiag = |m: &DenseMatrix<T>| {
                DenseMatrix::from_fn(k, k, |a, b| if a == b { T::zero() } else { m[(a, b)] })
            };
            offdiag(ua).rel_diff(&offdiag(&feller.u))
        })
        .unwrap_or_else(T::zero);

    Ok(IdentityReport {
        jump_kill_balance: balance,
        trace_decomposition: decomposition,
        energy_split: split,
        schur_energy,
        feller_symmetry: feller.u.asymmetry(),
        alpha_monotone: monotone,
        alpha_gap,
    })
}

/// Slows the chain on `E0` by the density `phi`: weights become `phi·m` on
/// `E0`, rates out of `x ∈ E0` are divided by `phi(x)`. Returns the new
/// chain and its Feller data, which must coincide with the original.
pub fn time_change_chain<T: Scalar>(
    chain: &SymmetricChain<T>,
    subset: &SubsetSpec,
    phi: &[T],
) -> Result<(SymmetricChain<T>, FellerData<T>), ChainError> {
    let e0 = subset.complement();
    check_len(phi, e0.len())?;
    if let Some(i) = phi.iter().position(|&p| p <= T::zero()) {
        return Err(ChainError::NonPositiveDensity { state: e0[i] });
    }
    let n = chain.len();
    let mut scale = vec![T::one(); n];
    for (&x, &p) in e0.iter().zip(phi) {
        scale[x] = p;
    }
    let weights: Vec<T> = chain
        .weights()
        .iter()
        .zip(&scale)
        .map(|(&m, &s)| m * s)
        .collect();
    let rates = DenseMatrix::from_fn(n, n, |x, y| chain.rate(x, y) / scale[x]);
    let z = SymmetricChain::validate(rates, weights)?.with_labels(chain.labels().to_vec());
    let (_, _, feller) = feller_for(&z, subset, &[])?;
    Ok((z, feller))
}

/// `μ(ξ) = Σ_x g(x) m(x) P_x(X_{σF} = ξ)`; `g` defaults to 1.
pub fn hitting_time_measure<T: Scalar>(
    chain: &SymmetricChain<T>,
    subset: &SubsetSpec,
    g: Option<&[T]>,
) -> Result<Vec<T>, ChainError> {
    let n = chain.len();
    let ones = vec![T::one(); n];
    let g = g.unwrap_or(&ones);
    check_len(g, n)?;
    if let Some(x) = g.iter().position(|&v| v <= T::zero()) {
        return Err(ChainError::NonPositiveWeight { state: x });
    }
    let blocks = split_blocks(chain, subset)?;
    let hit = hitting_operator(&blocks, &[])?;
    let m = chain.weights();
    let mut mu: Vec<T> = subset.trace().iter().map(|&x| g[x] * m[x]).collect();
    for (a, &x) in subset.complement().iter().enumerate() {
        let w = g[x] * m[x];
        for (b, v) in mu.iter_mut().enumerate() {
            *v = *v + w * hit.h[(a, b)];
        }
    }
    Ok(mu)
}
