use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::McError;
use crate::chain::SymmetricChain;
use crate::scalar::Scalar;

/// Where a path starts.
#[derive(Debug, Clone, PartialEq)]
pub enum Start {
    State(usize),
    /// Start drawn from the normalised weights.
    Weights(Vec<f64>),
    /// Start drawn from `m / m(E)`.
    Stationary,
}

/// One simulated trajectory up to `min(horizon, ζ)`.
///
/// `states[k]` is occupied on `[jump_times[k-1], jump_times[k])`, with
/// `jump_times[-1] = 0`; so `states.len() == jump_times.len() + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub start_state: usize,
    pub jump_times: Vec<f64>,
    pub states: Vec<usize>,
    pub death_time: Option<f64>,
    pub horizon: f64,
}

impl PathRecord {
    /// End of the observed stretch: death time or horizon.
    pub fn end(&self) -> f64 {
        self.death_time.unwrap_or(self.horizon)
    }

    /// `(state, from, to)` for every holding interval, the last one cut at
    /// [`PathRecord::end`].
    pub fn holdings(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        let end = self.end();
        self.states.iter().enumerate().map(move |(k, &s)| {
            let from = if k == 0 { 0.0 } else { self.jump_times[k - 1] };
            let to = self.jump_times.get(k).copied().unwrap_or(end);
            (s, from, to)
        })
    }

    /// State at time `t`, `None` once dead or past the horizon.
    pub fn state_at(&self, t: f64) -> Option<usize> {
        if t < 0.0 || t >= self.end() {
            return None;
        }
        let k = self.jump_times.partition_point(|&s| s <= t);
        Some(self.states[k])
    }

    pub fn final_state(&self) -> usize {
        *self.states.last().expect("path has a start state")
    }

    /// Checks the structural invariants; used by tests.
    pub fn is_well_formed(&self) -> bool {
        self.states.len() == self.jump_times.len() + 1
            && self.states.first() == Some(&self.start_state)
            && self.jump_times.windows(2).all(|w| w[0] < w[1])
            && self.states.windows(2).all(|w| w[0] != w[1])
            && self.jump_times.iter().all(|&t| t > 0.0 && t <= self.horizon)
            && self
                .death_time
                .is_none_or(|d| d <= self.horizon && self.jump_times.last().is_none_or(|&t| d > t))
    }
}

/// Precomputed jump tables of a chain.
#[derive(Debug, Clone)]
pub struct Simulator {
    exit: Vec<f64>,
    /// Per state: reachable targets and cumulative jump probabilities.
    /// A draw past the last entry means death.
    targets: Vec<Vec<usize>>,
    cumulative: Vec<Vec<f64>>,
    weights: Vec<f64>,
    kill: Vec<f64>,
    rates: Vec<Vec<f64>>,
}

impl Simulator {
    pub fn new<T: Scalar>(chain: &SymmetricChain<T>) -> Self {
        let n = chain.len();
        let mut exit = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        let mut cumulative = Vec::with_capacity(n);
        let mut rates = Vec::with_capacity(n);
        let kill: Vec<f64> = chain.kill_rates().iter().map(|k| k.as_f64()).collect();
        for x in 0..n {
            let row: Vec<f64> = (0..n)
                .map(|y| if y == x { 0.0 } else { chain.rate(x, y).as_f64() })
                .collect();
            let total: f64 = row.iter().sum::<f64>() + kill[x];
            let mut t = Vec::new();
            let mut c = Vec::new();
            let mut acc = 0.0;
            for (y, &q) in row.iter().enumerate() {
                if q > 0.0 {
                    acc += q / total;
                    t.push(y);
                    c.push(acc);
                }
            }
            if kill[x] == 0.0 {
                // absorb rounding so the last target always catches the draw
                if let Some(last) = c.last_mut() {
                    *last = 1.0;
                }
            }
            exit.push(total);
            targets.push(t);
            cumulative.push(c);
            rates.push(row);
        }
        Self {
            exit,
            targets,
            cumulative,
            weights: chain.weights().iter().map(|w| w.as_f64()).collect(),
            kill,
            rates,
        }
    }

    pub fn len(&self) -> usize {
        self.exit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exit.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kill_rates(&self) -> &[f64] {
        &self.kill
    }

    /// Off-diagonal rate `Q(x,y)`.
    pub fn rate(&self, x: usize, y: usize) -> f64 {
        self.rates[x][y]
    }

    pub fn exit_rate(&self, x: usize) -> f64 {
        self.exit[x]
    }

    pub fn check_start(&self, start: &Start) -> Result<(), McError> {
        match start {
            Start::State(s) if *s >= self.len() => Err(McError::InvalidArgument(format!(
                "start state {s} outside 0..{}",
                self.len()
            ))),
            Start::Weights(w) if w.len() != self.len() => Err(McError::InvalidArgument(format!(
                "start weights have length {}, chain has {} states",
                w.len(),
                self.len()
            ))),
            Start::Weights(w) if w.iter().any(|&v| !(v >= 0.0)) || w.iter().sum::<f64>() <= 0.0 => {
                Err(McError::InvalidArgument(
                    "start weights must be nonnegative with positive total".into(),
                ))
            }
            _ => Ok(()),
        }
    }

    fn draw_from<R: Rng + ?Sized>(w: &[f64], rng: &mut R) -> usize {
        let total: f64 = w.iter().sum();
        let mut u = rng.random::<f64>() * total;
        for (i, &v) in w.iter().enumerate() {
            if u < v {
                return i;
            }
            u -= v;
        }
        w.iter().rposition(|&v| v > 0.0).unwrap_or(0)
    }

    pub fn draw_start<R: Rng + ?Sized>(&self, start: &Start, rng: &mut R) -> usize {
        match start {
            Start::State(s) => *s,
            Start::Weights(w) => Self::draw_from(w, rng),
            Start::Stationary => Self::draw_from(&self.weights, rng),
        }
    }

    /// Next event from `x`: holding time and the target (`None` for death).
    pub fn step<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> (f64, Option<usize>) {
        let rate = self.exit[x];
        if rate <= 0.0 {
            return (f64::INFINITY, None);
        }
        let hold: f64 = Exp1.sample(rng);
        let u: f64 = rng.random();
        let c = &self.cumulative[x];
        let k = c.partition_point(|&p| p <= u);
        (hold / rate, self.targets[x].get(k).copied())
    }

    /// Path from a given state up to `min(horizon, ζ)`.
    pub fn run_from<R: Rng + ?Sized>(&self, x0: usize, horizon: f64, rng: &mut R) -> PathRecord {
        let mut jump_times = Vec::new();
        let mut states = vec![x0];
        let mut death_time = None;
        let mut t = 0.0;
        let mut x = x0;
        loop {
            let (hold, next) = self.step(x, rng);
            let s = t + hold;
            if s > horizon {
                break;
            }
            t = s;
            match next {
                Some(y) => {
                    jump_times.push(t);
                    states.push(y);
                    x = y;
                }
                None => {
                    death_time = Some(t);
                    break;
                }
            }
        }
        PathRecord {
            start_state: x0,
            jump_times,
            states,
            death_time,
            horizon,
        }
    }

    pub fn run<R: Rng + ?Sized>(&self, start: &Start, horizon: f64, rng: &mut R) -> PathRecord {
        let x0 = self.draw_start(start, rng);
        self.run_from(x0, horizon, rng)
    }
}

/// Exact-in-law path of `chain` from `start` up to `min(horizon, ζ)`.
pub fn simulate_path<T: Scalar, R: Rng + ?Sized>(
    chain: &SymmetricChain<T>,
    start: &Start,
    horizon: f64,
    rng: &mut R,
) -> Result<PathRecord, McError> {
    if !(horizon > 0.0) {
        return Err(McError::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    let sim = Simulator::new(chain);
    sim.check_start(start)?;
    Ok(sim.run(start, horizon, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::fixtures::{c1, c2};
    use crate::mc::RngStream;

    #[test]
    fn holding_time_at_hub() {
        let sim = Simulator::new(&c1::<f64>());
        let mut rng = RngStream::new(7, 0).rng();
        let n = 100_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let (h, next) = sim.step(0, &mut rng);
            assert!(next.is_some());
            sum += h;
            sq += h * h;
        }
        let mean = sum / n as f64;
        let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!(((mean - 1.0 / 3.0) / se).abs() < 4.0, "mean {mean}");
    }

    #[test]
    fn first_event_death_probability() {
        let sim = Simulator::new(&c2::<f64>());
        let mut rng = RngStream::new(8, 0).rng();
        let n = 100_000;
        let deaths = (0..n).filter(|_| sim.step(0, &mut rng).1.is_none()).count();
        let p = deaths as f64 / n as f64;
        let se = (0.25 * 0.75 / n as f64).sqrt();
        assert!(((p - 0.25) / se).abs() < 4.0, "p {p}");
    }

    #[test]
    fn conservative_paths_never_die() {
        let chain = c1::<f64>();
        let mut rng = RngStream::new(9, 0).rng();
        for _ in 0..200 {
            let p = simulate_path(&chain, &Start::Stationary, 20.0, &mut rng).unwrap();
            assert!(p.death_time.is_none());
            assert!(p.is_well_formed());
        }
    }

    #[test]
    fn killed_paths_are_well_formed() {
        let chain = c2::<f64>();
        let mut rng = RngStream::new(10, 0).rng();
        let mut died = 0;
        for _ in 0..500 {
            let p = simulate_path(&chain, &Start::State(1), 50.0, &mut rng).unwrap();
            assert!(p.is_well_formed());
            if let Some(d) = p.death_time {
                died += 1;
                assert_eq!(p.final_state(), 0);
                assert_eq!(p.state_at(d), None);
            }
        }
        assert!(died > 450);
    }

    #[test]
    fn reproducible_per_stream() {
        let chain = c2::<f64>();
        let a = simulate_path(&chain, &Start::Stationary, 10.0, &mut RngStream::new(1, 3).rng()).unwrap();
        let b = simulate_path(&chain, &Start::Stationary, 10.0, &mut RngStream::new(1, 3).rng()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_arguments() {
        let chain = c1::<f64>();
        let mut rng = RngStream::new(1, 0).rng();
        assert!(simulate_path(&chain, &Start::State(3), 1.0, &mut rng).is_err());
        assert!(simulate_path(&chain, &Start::State(0), 0.0, &mut rng).is_err());
        assert!(simulate_path(&chain, &Start::Weights(vec![1.0]), 1.0, &mut rng).is_err());
    }

    #[test]
    fn state_lookup() {
        let p = PathRecord {
            start_state: 1,
            jump_times: vec![0.5, 1.0],
            states: vec![1, 0, 2],
            death_time: None,
            horizon: 2.0,
        };
        assert_eq!(p.state_at(0.2), Some(1));
        assert_eq!(p.state_at(0.5), Some(0));
        assert_eq!(p.state_at(1.5), Some(2));
        assert_eq!(p.state_at(2.0), None);
        let h: Vec<_> = p.holdings().collect();
        assert_eq!(h, vec![(1, 0.0, 0.5), (0, 0.5, 1.0), (2, 1.0, 2.0)]);
    }
}
