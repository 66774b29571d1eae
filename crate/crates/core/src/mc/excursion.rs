use serde::Serialize;

use super::sim::PathRecord;
use super::McError;
use crate::chain::SubsetSpec;
use crate::linalg::DenseMatrix;

/// Where an excursion ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum PostState {
    /// Return to this state of `F` (chain index).
    State(usize),
    /// Death inside `E0`.
    Death,
}

/// One maximal stay in `E0` after the first visit to `F`.
///
/// `right` is the return time, or `∞` when the path dies in `E0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExcursionRecord {
    pub left: f64,
    pub right: f64,
    pub pre_state: usize,
    pub post: PostState,
}

/// Excursions of `path` away from `F`. Stays in `E0` before the first `F`
/// visit are skipped, and an excursion still open at the horizon is
/// dropped.
pub fn excursion_decompose(path: &PathRecord, subset: &SubsetSpec) -> Vec<ExcursionRecord> {
    let mut out = Vec::new();
    let mut last_f: Option<usize> = None;
    let mut open: Option<(f64, usize)> = None;
    for (k, &s) in path.states.iter().enumerate() {
        let entered = if k == 0 { 0.0 } else { path.jump_times[k - 1] };
        if subset.contains(s) {
            if let Some((left, pre)) = open.take() {
                out.push(ExcursionRecord {
                    left,
                    right: entered,
                    pre_state: pre,
                    post: PostState::State(s),
                });
            }
            last_f = Some(s);
        } else if open.is_none() {
            if let Some(pre) = last_f {
                open = Some((entered, pre));
            }
        }
    }
    if let (Some((left, pre)), Some(_)) = (open, path.death_time) {
        out.push(ExcursionRecord {
            left,
            right: f64::INFINITY,
            pre_state: pre,
            post: PostState::Death,
        });
    }
    out
}

/// Path of the time-changed process on `F`, with states given as
/// positions in `subset.trace()` and times on the clock `A^μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedPath {
    pub path: PathRecord,
    /// `X`-time of the first visit to `F`, where `Y` starts.
    pub entry_time: f64,
    /// For every jump of `Y`: true when it came from an excursion through
    /// `E0`, false for a direct `F`-to-`F` jump of `X`.
    pub via_excursion: Vec<bool>,
}

/// Time change of `path` by `A_t = ∫ μ(X_s)/m(X_s) 1_F(X_s) ds`. Returns
/// `None` when the path never reaches `F`. Excursions that return to
/// their starting state are invisible to `Y`.
pub fn trace_path(
    path: &PathRecord,
    subset: &SubsetSpec,
    mu: &[f64],
    m: &[f64],
) -> Result<Option<TracedPath>, McError> {
    let f = subset.trace();
    if mu.len() != f.len() {
        return Err(McError::InvalidArgument(format!(
            "mu has {} entries, trace set has {}",
            mu.len(),
            f.len()
        )));
    }
    if mu.iter().any(|&v| !(v > 0.0)) {
        return Err(McError::InvalidArgument("mu must be positive on the trace set".into()));
    }
    let mut clock = 0.0;
    let mut entry_time = None;
    let mut y_times = Vec::new();
    let mut y_states: Vec<usize> = Vec::new();
    let mut via = Vec::new();
    let mut excursion_since_f = false;
    for (s, from, to) in path.holdings() {
        match subset.trace_position(s) {
            Some(a) => {
                if entry_time.is_none() {
                    entry_time = Some(from);
                    y_states.push(a);
                } else if *y_states.last().unwrap() != a {
                    y_times.push(clock);
                    y_states.push(a);
                    via.push(excursion_since_f);
                }
                excursion_since_f = false;
                clock += (to - from) * mu[a] / m[s];
            }
            None => {
                if entry_time.is_some() {
                    excursion_since_f = true;
                }
            }
        }
    }
    let Some(entry_time) = entry_time else {
        return Ok(None);
    };
    let death_time = path.death_time.map(|_| clock);
    Ok(Some(TracedPath {
        path: PathRecord {
            start_state: y_states[0],
            jump_times: y_times,
            states: y_states,
            death_time,
            horizon: clock,
        },
        entry_time,
        via_excursion: via,
    }))
}

/// Jump counts and occupation times of traced paths, and the rate
/// estimates `N_ab / T_a` with Poisson standard errors `√N_ab / T_a`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalGenerator {
    pub counts: Vec<Vec<u64>>,
    pub deaths: Vec<u64>,
    pub occupation: Vec<f64>,
}

impl EmpiricalGenerator {
    pub fn new(k: usize) -> Self {
        Self {
            counts: vec![vec![0; k]; k],
            deaths: vec![0; k],
            occupation: vec![0.0; k],
        }
    }

    pub fn add(&mut self, y: &PathRecord) {
        for (a, from, to) in y.holdings() {
            self.occupation[a] += to - from;
        }
        for w in y.states.windows(2) {
            self.counts[w[0]][w[1]] += 1;
        }
        if y.death_time.is_some() {
            self.deaths[y.final_state()] += 1;
        }
    }

    pub fn merge(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (a, row) in other.counts.iter().enumerate() {
            for (b, c) in row.iter().enumerate() {
                out.counts[a][b] += c;
            }
            out.deaths[a] += other.deaths[a];
            out.occupation[a] += other.occupation[a];
        }
        out
    }

    pub fn total_jumps(&self) -> u64 {
        self.counts.iter().flatten().sum::<u64>() + self.deaths.iter().sum::<u64>()
    }

    /// Off-diagonal rate estimates.
    pub fn rates(&self) -> DenseMatrix<f64> {
        let k = self.deaths.len();
        DenseMatrix::from_fn(k, k, |a, b| {
            if a == b || self.occupation[a] == 0.0 {
                0.0
            } else {
                self.counts[a][b] as f64 / self.occupation[a]
            }
        })
    }

    pub fn rate_errors(&self) -> DenseMatrix<f64> {
        let k = self.deaths.len();
        DenseMatrix::from_fn(k, k, |a, b| {
            if a == b || self.occupation[a] == 0.0 {
                0.0
            } else {
                (self.counts[a][b] as f64).sqrt() / self.occupation[a]
            }
        })
    }

    pub fn kill_rates(&self) -> Vec<f64> {
        self.deaths
            .iter()
            .zip(&self.occupation)
            .map(|(&d, &t)| if t > 0.0 { d as f64 / t } else { 0.0 })
            .collect()
    }

    pub fn kill_errors(&self) -> Vec<f64> {
        self.deaths
            .iter()
            .zip(&self.occupation)
            .map(|(&d, &t)| if t > 0.0 { (d as f64).sqrt() / t } else { 0.0 })
            .collect()
    }

    /// Largest `|estimate - target| / std_error` over off-diagonal and
    /// killing entries. Entries with no observed events are compared with
    /// an error of one event, `1 / T_a`.
    pub fn max_z(&self, target: &DenseMatrix<f64>, target_kill: &[f64]) -> f64 {
        let k = self.deaths.len();
        let z = |est: f64, count: u64, t: f64, exact: f64| {
            let se = (count.max(1) as f64).sqrt() / t;
            (est - exact).abs() / se
        };
        let rates = self.rates();
        let kills = self.kill_rates();
        let mut worst: f64 = 0.0;
        for a in 0..k {
            let t = self.occupation[a];
            if t == 0.0 {
                continue;
            }
            for b in 0..k {
                if a != b {
                    worst = worst.max(z(rates[(a, b)], self.counts[a][b], t, target[(a, b)]));
                }
            }
            worst = worst.max(z(kills[a], self.deaths[a], t, target_kill[a]));
        }
        worst
    }
}

/// Accumulates the empirical generator over traced paths with `k` states.
pub fn empirical_generator<'a>(paths: impl IntoIterator<Item = &'a TracedPath>, k: usize) -> EmpiricalGenerator {
    let mut g = EmpiricalGenerator::new(k);
    for p in paths {
        g.add(&p.path);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::fixtures::fixture_subset;

    fn path(states: Vec<usize>, times: Vec<f64>, death: Option<f64>, horizon: f64) -> PathRecord {
        PathRecord {
            start_state: states[0],
            jump_times: times,
            states,
            death_time: death,
            horizon,
        }
    }

    #[test]
    fn single_crossing() {
        let p = path(vec![1, 0, 2], vec![0.5, 0.8], None, 2.0);
        let e = excursion_decompose(&p, &fixture_subset());
        assert_eq!(
            e,
            vec![ExcursionRecord {
                left: 0.5,
                right: 0.8,
                pre_state: 1,
                post: PostState::State(2)
            }]
        );
    }

    #[test]
    fn death_in_complement() {
        let p = path(vec![1, 0], vec![0.5], Some(0.9), 2.0);
        let e = excursion_decompose(&p, &fixture_subset());
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].pre_state, 1);
        assert_eq!(e[0].post, PostState::Death);
        assert!(e[0].right.is_infinite());
    }

    #[test]
    fn edge_cases() {
        let s = fixture_subset();
        assert!(excursion_decompose(&path(vec![1], vec![], None, 1.0), &s).is_empty());
        // starts in E0: the first stay does not count
        assert!(excursion_decompose(&path(vec![0, 1], vec![0.3], None, 1.0), &s).is_empty());
        // open at the horizon: dropped
        assert!(excursion_decompose(&path(vec![2, 0], vec![0.3], None, 1.0), &s).is_empty());
    }

    #[test]
    fn trace_clock_and_jumps() {
        let s = fixture_subset();
        let p = path(vec![1, 0, 2, 0, 2], vec![0.5, 0.8, 1.0, 1.5], None, 2.0);
        let y = trace_path(&p, &s, &[2.0, 1.0], &[1.0; 3]).unwrap().unwrap();
        // clock: 0.5 at state 1 with weight 2, then 0.2 and 0.5 at state 2
        assert_eq!(y.path.states, vec![0, 1]);
        assert_eq!(y.path.jump_times, vec![1.0]);
        assert!((y.path.horizon - 1.7).abs() < 1e-12);
        assert_eq!(y.via_excursion, vec![true]);
        assert_eq!(y.entry_time, 0.0);
    }

    #[test]
    fn trace_of_path_inside_f_is_identity() {
        let s = fixture_subset();
        let p = path(vec![1, 2, 1], vec![0.3, 0.7], None, 1.0);
        let y = trace_path(&p, &s, &[1.0, 1.0], &[1.0; 3]).unwrap().unwrap();
        assert_eq!(y.path.jump_times, p.jump_times);
        assert_eq!(y.path.states, vec![0, 1, 0]);
        assert_eq!(y.via_excursion, vec![false, false]);
        assert!(trace_path(&path(vec![0], vec![], None, 1.0), &s, &[1.0, 1.0], &[1.0; 3])
            .unwrap()
            .is_none());
    }
}
