use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::excursion::{excursion_decompose, PostState};
use super::sim::{Simulator, Start};
use super::{batch_ranges, require_events, BatchMeans, EstimatorReport, McError, RngStream, Tally};
use crate::chain::{feller_for, SubsetSpec, SymmetricChain};
use crate::linalg::{expm, expm_with_integral, DenseMatrix};
use crate::scalar::Scalar;
use crate::sphere::gauss_legendre;
use crate::tolerances;

/// Runs `n` independent trials, trial `i` on `stream.child(offset + i)`,
/// and tallies `(value, events)` into contiguous batches. The result does
/// not depend on the thread count.
fn run_batches<F>(n: u64, stream: RngStream, offset: u64, trial: F) -> BatchMeans
where
    F: Fn(&mut ChaCha8Rng) -> (f64, u64) + Sync,
{
    let ranges = batch_ranges(n, tolerances::BATCHES);
    let tallies: Vec<(usize, Tally)> = ranges
        .par_iter()
        .map(|&(b, lo, hi)| {
            let mut t = Tally::default();
            for i in lo..hi {
                let mut rng = stream.child(offset + i).rng();
                let (v, e) = trial(&mut rng);
                t.add(v, e);
            }
            (b, t)
        })
        .collect();
    let mut out = BatchMeans::new(tolerances::BATCHES);
    for (b, t) in tallies {
        out.batches[b] = out.batches[b].merge(&t);
    }
    out
}

fn positive(name: &str, v: f64) -> Result<(), McError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(McError::InvalidArgument(format!("{name} must be positive, got {v}")))
    }
}

fn to_f64<T: Scalar>(chain: &SymmetricChain<T>) -> DenseMatrix<f64> {
    let n = chain.len();
    DenseMatrix::from_fn(n, n, |x, y| chain.rate(x, y).as_f64())
}

/// One trial of the finite-time readings: start from `m / m(E)`, run to
/// `t`, and follow an excursion begun at or before `t` to its end. Every
/// excursion that starts in `(0, t]` after an `F` visit is reported with
/// its pre-state and its end.
fn straddle_trial(
    sim: &Simulator,
    subset: &SubsetSpec,
    t: f64,
    rng: &mut ChaCha8Rng,
    mut on_excursion: impl FnMut(usize, PostState),
) {
    let mut x = sim.draw_start(&Start::Stationary, rng);
    let mut clock = 0.0;
    let mut open: Option<usize> = None;
    loop {
        let (hold, next) = sim.step(x, rng);
        clock += hold;
        if clock > t && open.is_none() {
            return;
        }
        match next {
            None => {
                if let Some(pre) = open {
                    on_excursion(pre, PostState::Death);
                }
                return;
            }
            Some(y) => {
                if subset.contains(y) {
                    if let Some(pre) = open.take() {
                        on_excursion(pre, PostState::State(y));
                    }
                    if clock > t {
                        return;
                    }
                } else if subset.contains(x) {
                    open = Some(x);
                }
                x = y;
            }
        }
    }
}

/// How `∫ψ dU` is read off simulated excursions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FellerMode {
    /// Long-run pair rate from a stationary start, times `m(E)`.
    Ergodic,
    /// `(1/t) E_m[Σ ψ]` at `t` and `t/2`, combined as `2 est(t/2) - est(t)`.
    FiniteTime,
}

/// Feller estimate with the pair histogram of the excursions it counted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FellerRun {
    pub mode: FellerMode,
    pub report: EstimatorReport,
    /// `(pre, post) -> count`, chain indices, for excursions between
    /// distinct states of `F`.
    pub histogram: BTreeMap<(usize, usize), u64>,
}

fn psi_check(psi: &DenseMatrix<f64>, k: usize) -> Result<(), McError> {
    if psi.rows() != k || psi.cols() != k {
        return Err(McError::InvalidArgument(format!(
            "psi must be {k}x{k}, got {}x{}",
            psi.rows(),
            psi.cols()
        )));
    }
    if (0..k).any(|a| psi[(a, a)] != 0.0) {
        return Err(McError::InvalidArgument("psi must vanish on the diagonal".into()));
    }
    Ok(())
}

/// `∫ψ dU` from simulated excursions, with the exact value as reference.
///
/// `psi` is indexed by positions in `subset.trace()`. Conservative chains
/// use the ergodic reading with paths of length `horizon`; chains with
/// killing use finite-time runs at `horizon` and `horizon / 2`. Events are
/// completed excursions between distinct states of `F`.
pub fn estimate_feller_mc<T: Scalar>(
    chain: &SymmetricChain<T>,
    subset: &SubsetSpec,
    psi: &DenseMatrix<f64>,
    horizon: f64,
    n_paths: u64,
    stream: RngStream,
) -> Result<FellerRun, McError> {
    positive("horizon", horizon)?;
    let k = subset.trace().len();
    psi_check(psi, k)?;
    if n_paths < 2 {
        return Err(McError::InvalidArgument("need at least two paths".into()));
    }
    let (_, _, feller) = feller_for(chain, subset, &[])?;
    let mut exact = 0.0;
    for a in 0..k {
        for b in 0..k {
            if a != b {
                exact += psi[(a, b)] * feller.u[(a, b)].as_f64();
            }
        }
    }
    let sim = Simulator::new(chain);
    let mass: f64 = sim.weights().iter().sum();
    let pair = |pre: usize, post: usize| {
        psi[(subset.trace_position(pre).unwrap(), subset.trace_position(post).unwrap())]
    };
    let conservative = chain.is_conservative();
    // ergodic: excursions completed before the horizon; finite time:
    // excursions starting by `t`, followed to their end
    let trial = |t: f64, rng: &mut ChaCha8Rng| {
        let mut sum = 0.0;
        let mut pairs = Vec::new();
        let mut record = |pre: usize, post: PostState| {
            if let PostState::State(post) = post {
                if post != pre {
                    sum += pair(pre, post);
                    pairs.push((pre, post));
                }
            }
        };
        if conservative {
            let path = sim.run(&Start::Stationary, t, rng);
            for e in excursion_decompose(&path, subset) {
                record(e.pre_state, e.post);
            }
        } else {
            straddle_trial(&sim, subset, t, rng, &mut record);
        }
        (sum * mass / t, pairs)
    };
    let histogram_of = |t: f64, offset: u64| -> BTreeMap<(usize, usize), u64> {
        let ranges = batch_ranges(n_paths, tolerances::BATCHES);
        let parts: Vec<BTreeMap<(usize, usize), u64>> = ranges
            .par_iter()
            .map(|&(_, lo, hi)| {
                let mut h = BTreeMap::new();
                for i in lo..hi {
                    let mut rng = stream.child(offset + i).rng();
                    for p in trial(t, &mut rng).1 {
                        *h.entry(p).or_insert(0) += 1;
                    }
                }
                h
            })
            .collect();
        let mut h = BTreeMap::new();
        for part in parts {
            for (key, c) in part {
                *h.entry(key).or_insert(0) += c;
            }
        }
        h
    };
    let run = |t: f64, offset: u64| {
        run_batches(n_paths, stream, offset, |rng| {
            let (v, pairs) = trial(t, rng);
            (v, pairs.len() as u64)
        })
    };
    let (mode, report, histogram) = if conservative {
        let b = run(horizon, 0);
        let (mean, se) = b.mean_and_error();
        let events = b.total().events;
        require_events(events)?;
        (FellerMode::Ergodic, EstimatorReport::new(mean, se, events), histogram_of(horizon, 0))
    } else {
        let full = run(horizon, 0);
        let half = run(0.5 * horizon, n_paths);
        let (m1, s1) = full.mean_and_error();
        let (m2, s2) = half.mean_and_error();
        let events = full.total().events + half.total().events;
        require_events(events)?;
        let est = 2.0 * m2 - m1;
        let se = (4.0 * s2 * s2 + s1 * s1).sqrt();
        let mut h = histogram_of(horizon, 0);
        for (key, c) in histogram_of(0.5 * horizon, n_paths) {
            *h.entry(key).or_insert(0) += c;
        }
        (FellerMode::FiniteTime, EstimatorReport::new(est, se, events), h)
    };
    Ok(FellerRun {
        mode,
        report: report.with_exact(exact),
        histogram,
    })
}

/// One point of a time grid and its estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub t: f64,
    pub report: EstimatorReport,
}

/// Per-`t` estimates of `(1/t) E_m[f(X_{γ-}); γ ≤ t]` and their linear
/// extrapolation to `t = 0`, where the exact value is `Σ f V`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupplementaryReport {
    pub points: Vec<CurvePoint>,
    pub extrapolated: EstimatorReport,
}

/// Weighted least-squares line through `(t, y ± se)`; returns the
/// intercept and its standard error.
fn intercept(points: &[(f64, f64, f64)]) -> (f64, f64) {
    let (mut s0, mut s1, mut s2, mut r0, mut r1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(t, y, se) in points {
        let w = if se > 0.0 { 1.0 / (se * se) } else { 1.0 };
        s0 += w;
        s1 += w * t;
        s2 += w * t * t;
        r0 += w * y;
        r1 += w * t * y;
    }
    let det = s0 * s2 - s1 * s1;
    let a = (s2 * r0 - s1 * r1) / det;
    let all_zero = points.iter().all(|p| p.2 == 0.0);
    let var = if all_zero { 0.0 } else { s2 / det };
    (a, var.sqrt())
}

/// Supplementary Feller measure `Σ f V` from last exits out of `F`.
///
/// Each trial starts from `m / m(E)` and runs to `t`; if it is then inside
/// an excursion that began after an `F` visit, the excursion is followed
/// to its end. A death during such an excursion is an event weighted by
/// `f` at the state left. Deaths directly from `F` are not events.
/// `n_paths` trials are run per grid point.
pub fn estimate_supplementary_mc<T: Scalar>(
    chain: &SymmetricChain<T>,
    subset: &SubsetSpec,
    f: &[f64],
    t_grid: &[f64],
    n_paths: u64,
    stream: RngStream,
) -> Result<SupplementaryReport, McError> {
    let k = subset.trace().len();
    if f.len() != k {
        return Err(McError::InvalidArgument(format!(
            "f has {} entries, trace set has {k}",
            f.len()
        )));
    }
    if t_grid.len() < 2 {
        return Err(McError::InvalidArgument("t_grid needs at least two points".into()));
    }
    for &t in t_grid {
        positive("t", t)?;
    }
    let (_, _, feller) = feller_for(chain, subset, &[])?;
    let v: Vec<f64> = feller.v.iter().map(|x| x.as_f64()).collect();
    let exact_limit: f64 = f.iter().zip(&v).map(|(a, b)| a * b).sum();
    let q = to_f64(chain);
    let sim = Simulator::new(chain);
    let mass: f64 = sim.weights().iter().sum();
    let trial = |t: f64, rng: &mut ChaCha8Rng| -> (f64, u64) {
        let mut out = (0.0, 0);
        straddle_trial(&sim, subset, t, rng, |pre, post| {
            if post == PostState::Death {
                out = (f[subset.trace_position(pre).unwrap()] * mass / t, 1);
            }
        });
        out
    };
    let mut points = Vec::with_capacity(t_grid.len());
    for (j, &t) in t_grid.iter().enumerate() {
        let b = run_batches(n_paths, stream, j as u64 * n_paths, |rng| trial(t, rng));
        let (mean, se) = b.mean_and_error();
        let events = b.total().events;
        // (1/t) ∫_0^t P_s 1 ds, by symmetry of P_s with respect to m
        let (_, integral) = expm_with_integral(&q, t);
        let survive = integral.row_sums();
        let exact: f64 = subset
            .trace()
            .iter()
            .enumerate()
            .map(|(a, &x)| f[a] * v[a] * survive[x] / t)
            .sum();
        points.push(CurvePoint {
            t,
            report: EstimatorReport::new(mean, se, events).with_exact(exact),
        });
    }
    let total_events: u64 = points.iter().map(|p| p.report.n_events).sum();
    let fit: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|p| (p.t, p.report.estimate, p.report.std_error))
        .collect();
    let (a, se) = intercept(&fit);
    let extrapolated = EstimatorReport::new(a, se, total_events).with_exact(exact_limit);
    if f.iter().zip(&v).any(|(a, b)| a * b != 0.0) {
        require_events(total_events)?;
    }
    Ok(SupplementaryReport { points, extrapolated })
}

/// Pair function on jumps `(x, y)` and deaths `(x, ∂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpTarget {
    /// `n × (n+1)`; the last column holds the death values.
    table: DenseMatrix<f64>,
}

impl JumpTarget {
    pub fn zero(n: usize) -> Self {
        Self {
            table: DenseMatrix::zeros(n, n + 1),
        }
    }

    pub fn states(&self) -> usize {
        self.table.rows()
    }

    pub fn set(mut self, from: usize, to: PostState, value: f64) -> Self {
        let col = match to {
            PostState::State(y) => y,
            PostState::Death => self.states(),
        };
        self.table[(from, col)] = value;
        self
    }

    pub fn value(&self, from: usize, to: Option<usize>) -> f64 {
        self.table[(from, to.unwrap_or(self.states()))]
    }
}

/// `E_x[Σ_{s≤t} f(X_{s-}, X_s)]` by simulation against
/// `∫_0^t Σ_y P_s(x,y) (Σ_z Q(y,z) f(y,z) + k(y) f(y,∂)) ds`.
pub fn levy_jump_check<T: Scalar>(
    chain: &SymmetricChain<T>,
    x: usize,
    f: &JumpTarget,
    t: f64,
    n_paths: u64,
    stream: RngStream,
) -> Result<EstimatorReport, McError> {
    positive("t", t)?;
    let n = chain.len();
    if x >= n || f.states() != n {
        return Err(McError::InvalidArgument(format!(
            "state {x} or jump table size {} does not fit a chain with {n} states",
            f.states()
        )));
    }
    let sim = Simulator::new(chain);
    let b = run_batches(n_paths, stream, 0, |rng| {
        let mut y = x;
        let mut clock = 0.0;
        let mut sum = 0.0;
        let mut events = 0;
        loop {
            let (hold, next) = sim.step(y, rng);
            clock += hold;
            if clock > t {
                break;
            }
            let v = f.value(y, next);
            if v != 0.0 {
                sum += v;
                events += 1;
            }
            match next {
                Some(z) => y = z,
                None => break,
            }
        }
        (sum, events)
    });
    let (mean, se) = b.mean_and_error();
    let q = to_f64(chain);
    let (_, integral) = expm_with_integral(&q, t);
    let g: Vec<f64> = (0..n)
        .map(|y| {
            (0..n)
                .filter(|&z| z != y)
                .map(|z| sim.rate(y, z) * f.value(y, Some(z)))
                .sum::<f64>()
                + sim.kill_rates()[y] * f.value(y, None)
        })
        .collect();
    let exact: f64 = (0..n).map(|y| integral[(x, y)] * g[y]).sum();
    Ok(EstimatorReport::new(mean, se, b.total().events).with_exact(exact))
}

/// `(1/t) E_m[A_t; ζ ≤ t]` along `t_grid`, where `A_t` is the occupation
/// integral of `mu / m`. The exact reference is
/// `(1/t) ∫_0^t Σ_y mu(y) P_s 1(y) (1 - P_{t-s} 1(y)) ds`.
pub fn killing_limit_curve<T: Scalar>(
    chain: &SymmetricChain<T>,
    mu: &[f64],
    t_grid: &[f64],
    n_paths: u64,
    stream: RngStream,
) -> Result<Vec<CurvePoint>, McError> {
    let n = chain.len();
    if mu.len() != n || mu.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(McError::InvalidArgument(
            "mu must be a finite nonnegative vector over all states".into(),
        ));
    }
    for &t in t_grid {
        positive("t", t)?;
    }
    let sim = Simulator::new(chain);
    let m = sim.weights().to_vec();
    let mass: f64 = m.iter().sum();
    let density: Vec<f64> = mu.iter().zip(&m).map(|(a, b)| a / b).collect();
    let q = to_f64(chain);
    let (nodes, weights) = gauss_legendre(48);
    let survival = |s: f64| expm(&q.scale(s)).row_sums();
    let mut out = Vec::with_capacity(t_grid.len());
    for (j, &t) in t_grid.iter().enumerate() {
        let b = run_batches(n_paths, stream, j as u64 * n_paths, |rng| {
            let p = sim.run(&Start::Stationary, t, rng);
            if p.death_time.is_none() {
                return (0.0, 0);
            }
            let a: f64 = p.holdings().map(|(s, from, to)| (to - from) * density[s]).sum();
            (a * mass / t, 1)
        });
        let (mean, se) = b.mean_and_error();
        let mut exact = 0.0;
        for (&u, &w) in nodes.iter().zip(&weights) {
            let s = 0.5 * t * (u + 1.0);
            let a = survival(s);
            let c = survival(t - s);
            exact += 0.5 * t * w * (0..n).map(|y| mu[y] * a[y] * (1.0 - c[y])).sum::<f64>();
        }
        out.push(CurvePoint {
            t,
            report: EstimatorReport::new(mean, se, b.total().events).with_exact(exact / t),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::fixtures::{c1, c2, fixture_subset};

    fn off_diagonal(k: usize) -> DenseMatrix<f64> {
        DenseMatrix::from_fn(k, k, |a, b| if a == b { 0.0 } else { 1.0 })
    }

    #[test]
    fn intercept_of_exact_line() {
        let (a, _) = intercept(&[(0.4, 1.4, 0.1), (0.2, 1.2, 0.1), (0.1, 1.1, 0.1)]);
        assert!((a - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_psi_gives_zero() {
        let r = estimate_feller_mc(
            &c1::<f64>(),
            &fixture_subset(),
            &DenseMatrix::zeros(2, 2),
            200.0,
            64,
            RngStream::new(1, 0),
        )
        .unwrap();
        assert_eq!(r.report.estimate, 0.0);
        assert_eq!(r.report.std_error, 0.0);
        assert_eq!(r.report.z_score, Some(0.0));
    }

    #[test]
    fn diagonal_psi_rejected() {
        let bad = DenseMatrix::from_fn(2, 2, |_, _| 1.0);
        assert!(estimate_feller_mc(&c1::<f64>(), &fixture_subset(), &bad, 1.0, 10, RngStream::new(1, 0)).is_err());
    }

    #[test]
    fn c1_pair_rate_small_run() {
        let r = estimate_feller_mc(
            &c1::<f64>(),
            &fixture_subset(),
            &off_diagonal(2),
            500.0,
            128,
            RngStream::new(3, 0),
        )
        .unwrap();
        assert_eq!(r.mode, FellerMode::Ergodic);
        assert!((r.report.exact.unwrap() - 4.0 / 3.0).abs() < 1e-12);
        assert!(r.report.within(4.0), "{:?}", r.report);
        assert_eq!(r.histogram.values().sum::<u64>(), r.report.n_events);
    }

    #[test]
    fn c2_finite_time_reading() {
        let r = estimate_feller_mc(
            &c2::<f64>(),
            &fixture_subset(),
            &off_diagonal(2),
            0.5,
            200_000,
            RngStream::new(4, 0),
        )
        .unwrap();
        assert_eq!(r.mode, FellerMode::FiniteTime);
        assert!((r.report.exact.unwrap() - 1.0).abs() < 1e-12);
        assert!(r.report.relative_error().unwrap() < 0.1, "{:?}", r.report);
    }

    #[test]
    fn supplementary_vanishes_without_killing() {
        let r = estimate_supplementary_mc(
            &c1::<f64>(),
            &fixture_subset(),
            &[1.0, 1.0],
            &[0.4, 0.2, 0.1],
            2000,
            RngStream::new(5, 0),
        )
        .unwrap();
        assert_eq!(r.extrapolated.estimate, 0.0);
        assert_eq!(r.extrapolated.exact, Some(0.0));
    }

    #[test]
    fn supplementary_total_on_c2() {
        let r = estimate_supplementary_mc(
            &c2::<f64>(),
            &fixture_subset(),
            &[1.0, 1.0],
            &[0.4, 0.2, 0.1],
            200_000,
            RngStream::new(6, 0),
        )
        .unwrap();
        assert!((r.extrapolated.exact.unwrap() - 0.75).abs() < 1e-12);
        for p in &r.points {
            assert!(p.report.within(4.0), "{p:?}");
        }
        assert!(r.extrapolated.relative_error().unwrap() < 0.1, "{:?}", r.extrapolated);
    }

    #[test]
    fn levy_hub_to_two() {
        let f = JumpTarget::zero(3).set(0, PostState::State(2), 1.0);
        let r = levy_jump_check(&c1::<f64>(), 0, &f, 0.1, 100_000, RngStream::new(7, 0)).unwrap();
        // spectral oracle: Q is symmetric (unit weights), P_s(0,0) = Σ v_k(0)² e^{λ_k s}
        let q = nalgebra::Matrix3::<f64>::new(-3.0, 1.0, 2.0, 1.0, -1.0, 0.0, 2.0, 0.0, -2.0);
        let eig = q.symmetric_eigen();
        let s = 0.1_f64;
        let exact: f64 = 2.0
            * (0..3)
                .map(|k| {
                    let l = eig.eigenvalues[k];
                    let w = eig.eigenvectors[(0, k)].powi(2);
                    if l.abs() < 1e-12 {
                        w * s
                    } else {
                        w * ((l * s).exp() - 1.0) / l
                    }
                })
                .sum::<f64>();
        assert!((r.exact.unwrap() - exact).abs() < 1e-12);
        assert!(r.within(4.0), "{r:?}");
        let zero = levy_jump_check(&c1::<f64>(), 0, &JumpTarget::zero(3), 0.1, 100, RngStream::new(7, 0)).unwrap();
        assert_eq!((zero.estimate, zero.exact), (0.0, Some(0.0)));
    }

    #[test]
    fn killing_curve_conservative_is_zero() {
        let pts = killing_limit_curve(&c1::<f64>(), &[1.0; 3], &[0.1, 0.05], 1000, RngStream::new(8, 0)).unwrap();
        for p in pts {
            assert_eq!(p.report.estimate, 0.0);
            assert!(p.report.exact.unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn killing_curve_exact_below_death_probability() {
        let pts = killing_limit_curve(&c2::<f64>(), &[1.0; 3], &[0.1], 100_000, RngStream::new(9, 0)).unwrap();
        let p = pts[0];
        let death = 1.0 / 3.0 * (3.0 - expm(&to_f64(&c2::<f64>()).scale(0.1)).row_sums().iter().sum::<f64>());
        assert!(p.report.exact.unwrap() > 0.0);
        // A_t ≤ t on {ζ ≤ t} here, so the value is at most m(E) P_m-normalised death probability
        assert!(p.report.exact.unwrap() <= 3.0 * death);
        assert!(p.report.within(4.0), "{p:?}");
    }
}
