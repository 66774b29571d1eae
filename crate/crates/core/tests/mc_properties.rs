use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use trace_forms::chain::fixtures::{c1, c2, fixture_subset, random_chain, random_subset, RandomChainSpec};
use trace_forms::chain::{feller_for, trace_form, SubsetSpec, SymmetricChain};
use trace_forms::linalg::DenseMatrix;
use trace_forms::mc::{
    empirical_generator, estimate_feller_mc, excursion_decompose, trace_path, PostState, RngStream, Simulator, Start,
    TracedPath,
};
use trace_forms::tolerances;

fn simulate(chain: &SymmetricChain<f64>, horizon: f64, seed: u64) -> trace_forms::mc::PathRecord {
    let sim = Simulator::new(chain);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sim.run(&Start::Stationary, horizon, &mut rng)
}

fn mf(chain: &SymmetricChain<f64>, subset: &SubsetSpec) -> Vec<f64> {
    subset.trace().iter().map(|&x| chain.weights()[x]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn excursions_partition_time_off_the_trace_set(seed in any::<u64>(), states in 3usize..=15, conservative in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = RandomChainSpec { states, density: 0.3, kill_fraction: if conservative { 0.0 } else { 0.3 } };
        let chain = random_chain(&mut rng, spec);
        let subset = random_subset(&mut rng, states);
        let path = simulate(&chain, 50.0, seed ^ 0x5eed);
        prop_assert!(path.is_well_formed());

        let ex = excursion_decompose(&path, &subset);
        for w in ex.windows(2) {
            prop_assert!(w[0].right <= w[1].left);
        }
        for e in &ex {
            prop_assert!(subset.contains(e.pre_state));
            prop_assert!(e.left < e.right);
            match e.post {
                PostState::State(y) => {
                    prop_assert!(subset.contains(y));
                    prop_assert_eq!(path.state_at(e.right), Some(y));
                }
                PostState::Death => prop_assert!(e.right.is_infinite() && path.death_time.is_some()),
            }
            prop_assert!(!subset.contains(path.state_at(e.left).unwrap()));
        }

        // time in E0 after the first F visit is covered by excursions,
        // up to a final excursion cut by the horizon
        let first_f = path.holdings().find(|(s, _, _)| subset.contains(*s)).map(|(_, from, _)| from);
        if let Some(t0) = first_f {
            let in_e0: f64 = path
                .holdings()
                .filter(|(s, from, _)| !subset.contains(*s) && *from >= t0)
                .map(|(_, from, to)| to - from)
                .sum();
            let covered: f64 = ex.iter().map(|e| e.right.min(path.end()) - e.left).sum();
            prop_assert!(covered <= in_e0 + 1e-9);
            let open_tail = path
                .holdings()
                .last()
                .filter(|(s, _, _)| !subset.contains(*s) && path.death_time.is_none())
                .is_some();
            if !open_tail {
                prop_assert!((covered - in_e0).abs() <= 1e-9 * path.end().max(1.0));
            }
        }

        // the traced path only moves between distinct states of F, and its
        // clock is the time spent in F
        let mu = mf(&chain, &subset);
        if let Some(TracedPath { path: y, .. }) = trace_path(&path, &subset, &mu, chain.weights()).unwrap() {
            prop_assert!(y.is_well_formed());
            let in_f: f64 = path.holdings().filter(|(s, _, _)| subset.contains(*s)).map(|(_, a, b)| b - a).sum();
            prop_assert!((y.horizon - in_f).abs() <= 1e-9 * in_f.max(1.0));
            prop_assert!(y.states.iter().all(|&a| a < subset.trace().len()));
        }
    }
}

fn generator_z(chain: &SymmetricChain<f64>, subset: &SubsetSpec, horizon: f64, paths: u64, seed: u64) -> (f64, u64) {
    let mu = mf(chain, subset);
    let t = trace_form(chain, subset, &mu).unwrap();
    let q = t.generator;
    let k = mu.len();
    let kill: Vec<f64> = (0..k).map(|a| -(0..k).map(|b| q[(a, b)]).sum::<f64>()).collect();
    let traced: Vec<TracedPath> = (0..paths)
        .filter_map(|i| trace_path(&simulate(chain, horizon, seed + i), subset, &mu, chain.weights()).unwrap())
        .collect();
    let g = empirical_generator(&traced, k);
    (g.max_z(&q, &kill.iter().map(|v| v.max(0.0)).collect::<Vec<_>>()), g.total_jumps())
}

#[test]
fn empirical_trace_generator_on_fixtures() {
    let (z, jumps) = generator_z(&c1(), &fixture_subset(), 5_000.0, 4, 101);
    assert!(jumps > 5_000, "{jumps}");
    assert!(z < tolerances::Z_BOUND, "c1: z = {z}");
    let (z, jumps) = generator_z(&c2(), &fixture_subset(), 50.0, 4_000, 202);
    assert!(jumps > 5_000, "{jumps}");
    assert!(z < tolerances::Z_BOUND, "c2: z = {z}");
}

#[test]
fn feller_estimates_on_random_conservative_chains() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..4u64 {
        let states = 4 + 2 * i as usize;
        let chain = random_chain(&mut rng, RandomChainSpec { states, density: 0.4, kill_fraction: 0.0 });
        let subset = loop {
            let s = random_subset(&mut rng, states);
            if s.trace().len() >= 2 {
                break s;
            }
        };
        let k = subset.trace().len();
        let psi = DenseMatrix::from_fn(k, k, |a, b| if a == b { 0.0 } else { 1.0 + (a * k + b) as f64 / 10.0 });
        let run = estimate_feller_mc(&chain, &subset, &psi, 500.0, 200, RngStream::new(99, i)).unwrap();
        let (_, _, feller) = feller_for(&chain, &subset, &[]).unwrap();
        let mut exact = 0.0;
        for a in 0..k {
            for b in 0..k {
                exact += psi[(a, b)] * feller.u[(a, b)];
            }
        }
        let r = &run.report;
        assert!((r.exact.unwrap() - exact).abs() <= 1e-12 * exact.abs(), "chain {i}");
        assert!(r.within(tolerances::Z_BOUND), "chain {i}: z = {:?}", r.z_score);
    }
}
