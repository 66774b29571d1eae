use rand::Rng;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use trace_forms::bm::{
    escape_probability_mc, estimate_feller_sphere_mc, exterior_hit_law, AngularBins, FarField, ShellConfig,
};
use trace_forms::chain::fixtures::{c1, c2, fixture_subset};
use trace_forms::chain::io::read_chain_file;
use trace_forms::chain::lattice::prototype_lattice;
use trace_forms::chain::{
    feller_for, time_change_chain, trace_form, trace_jump_kill, verify_identities, ChainError, SubsetSpec,
    SymmetricChain,
};
use trace_forms::linalg::DenseMatrix;
use trace_forms::mc::{
    estimate_feller_mc, estimate_supplementary_mc, killing_limit_curve, levy_jump_check, EstimatorReport,
    JumpTarget, McError, PostState, RngStream,
};
use trace_forms::sphere::{prototype_trace_energy, verify_energy_identity, BoundaryFunction, SphereRule, SphereSpec};

use crate::config::{ExperimentConfig, FarFieldMode, Fixture, Kind};
use crate::report::ReportBundle;
use crate::CliError;

/// Stream ids per experiment part; a part's walks or paths are children of
/// its stream.
mod streams {
    pub const TIME_CHANGE: u64 = 1;
    pub const FELLER: u64 = 2;
    pub const SUPPLEMENTARY: u64 = 3;
    pub const LEVY: u64 = 4;
    pub const CURVE: u64 = 5;
    pub const ESCAPE: u64 = 6;
    pub const HIT_LAW: u64 = 7;
    pub const SHELL: u64 = 8;
}

fn run_error(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

/// Runs the experiment named by `config.kind` on a pool of
/// `config.workers` threads and returns the finalized bundle.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ReportBundle, CliError> {
    config.validate()?;
    let kind = config
        .kind
        .ok_or_else(|| CliError::Config("no experiment kind given".into()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(run_error)?;
    pool.install(|| {
        let mut b = ReportBundle::new(kind, config.seed);
        match kind {
            Kind::ChainVerify => chain_verify(config, &mut b)?,
            Kind::ChainMc => chain_mc(config, &mut b)?,
            Kind::SphereVerify => sphere_verify(config, &mut b)?,
            Kind::SphereMc => sphere_mc(config, &mut b)?,
            Kind::Prototype => prototype(config, &mut b)?,
        }
        Ok(b.finalize())
    })
}

fn load_chain(config: &ExperimentConfig) -> Result<(SymmetricChain<f64>, SubsetSpec), CliError> {
    let c = &config.chain;
    let (chain, file_subset) = match &c.file {
        Some(path) => {
            let f = read_chain_file::<f64>(path).map_err(|e| CliError::Config(e.to_string()))?;
            (f.chain, f.subset)
        }
        None => {
            let chain = match c.fixture {
                Fixture::C1 => c1(),
                Fixture::C2 => c2(),
            };
            (chain, Some(fixture_subset()))
        }
    };
    let subset = match &c.trace {
        Some(t) => SubsetSpec::new(chain.len(), t).map_err(|e| CliError::Config(format!("chain.trace: {e}")))?,
        None => file_subset.ok_or_else(|| CliError::Config("no trace set: give chain.trace or an `F:` line".into()))?,
    };
    Ok((chain, subset))
}

fn boundary_function(config: &ExperimentConfig, k: usize) -> Result<Vec<f64>, CliError> {
    match &config.chain.u {
        Some(u) if u.len() != k => Err(CliError::Config(format!(
            "chain.u has {} entries, the trace set has {k}",
            u.len()
        ))),
        Some(u) => Ok(u.clone()),
        None => Ok((1..=k).map(|i| i as f64).collect()),
    }
}

fn matrix_rows(m: &DenseMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

/// Identity, decomposition and route checks shared by `chain-verify` and
/// `prototype`.
fn chain_checks(
    config: &ExperimentConfig,
    b: &mut ReportBundle,
    chain: &SymmetricChain<f64>,
    subset: &SubsetSpec,
    u: &[f64],
) -> Result<(), CliError> {
    let tol = &config.tolerances;
    let alphas = &config.chain.alphas;
    let rep = verify_identities(chain, subset, u, alphas).map_err(run_error)?;
    b.check("jump_kill_balance", rep.jump_kill_balance.rel, tol.identity);
    b.check("trace_decomposition", rep.trace_decomposition.rel, tol.identity);
    b.check("energy_split", rep.energy_split.rel, tol.identity);
    b.check("schur_vs_energy", rep.schur_energy.rel, tol.identity);
    b.check("feller_symmetry", rep.feller_symmetry, tol.feller_symmetry);
    if !alphas.is_empty() {
        b.flag("alpha_monotone", rep.alpha_monotone);
        b.data("alpha_gap", rep.alpha_gap);
    }
    match trace_jump_kill(chain, subset) {
        Ok(cert) => b.check("beurling_deny_vs_schur", cert.max_residual(), tol.identity),
        Err(ChainError::IdentityViolation { residual }) => b.check("beurling_deny_vs_schur", residual, tol.identity),
        Err(e) => return Err(run_error(e)),
    }
    let (blocks, _, _) = feller_for(chain, subset, &[]).map_err(run_error)?;
    let t = trace_form(chain, subset, &blocks.mf).map_err(run_error)?;
    b.check("trace_form_routes", t.route_residual, tol.routes);
    b.data("trace_energy", t.energy(u, u));
    Ok(())
}

fn chain_verify(config: &ExperimentConfig, b: &mut ReportBundle) -> Result<(), CliError> {
    let (chain, subset) = load_chain(config)?;
    let u = boundary_function(config, subset.trace().len())?;
    chain_checks(config, b, &chain, &subset, &u)?;
    let (_, _, feller) = feller_for(&chain, &subset, &config.chain.alphas).map_err(run_error)?;
    let scale = feller.u.max_abs().max(feller.v.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let mut rng = RngStream::new(config.seed, streams::TIME_CHANGE).rng();
    let mut worst: f64 = 0.0;
    for _ in 0..config.chain.reweightings {
        let phi: Vec<f64> = subset.complement().iter().map(|_| rng.random_range(0.1..10.0)).collect();
        let (_, f) = time_change_chain(&chain, &subset, &phi).map_err(run_error)?;
        worst = worst.max(f.u.max_abs_diff(&feller.u));
        for (x, y) in f.v.iter().zip(&feller.v) {
            worst = worst.max((x - y).abs());
        }
    }
    if config.chain.reweightings > 0 {
        b.check("time_change_invariance", if scale > 0.0 { worst / scale } else { worst }, config.tolerances.time_change);
    }
    b.data("trace_set", subset.trace());
    b.data("feller_u", matrix_rows(&feller.u));
    b.data("feller_v", &feller.v);
    b.data("alphas", &feller.alphas);
    b.data("feller_u_alpha", feller.u_alpha.iter().map(matrix_rows).collect::<Vec<_>>());
    Ok(())
}

/// Records `r`, or marks the estimator inconclusive on too few events.
fn record_mc<T>(
    b: &mut ReportBundle,
    name: &str,
    z_bound: f64,
    result: Result<T, McError>,
    pick: impl FnOnce(&mut ReportBundle, T) -> EstimatorReport,
) -> Result<(), CliError> {
    match result {
        Ok(v) => {
            let r = pick(b, v);
            b.estimator(name, &r, z_bound);
            Ok(())
        }
        Err(e @ McError::InsufficientEvents { .. }) => {
            b.inconclusive(name, e.to_string());
            Ok(())
        }
        Err(e) => Err(run_error(e)),
    }
}

fn chain_mc(config: &ExperimentConfig, b: &mut ReportBundle) -> Result<(), CliError> {
    let (chain, subset) = load_chain(config)?;
    let s = &config.samples;
    let z = config.tolerances.z_bound;
    let seed = config.seed;
    let k = subset.trace().len();
    let n = chain.len();
    let conservative = chain.is_conservative();

    let psi = DenseMatrix::from_fn(k, k, |a, c| if a == c { 0.0 } else { 1.0 });
    let (horizon, paths) = if conservative {
        (s.feller_horizon, s.feller_paths)
    } else {
        (s.feller_t, s.feller_finite_paths)
    };
    let feller = estimate_feller_mc(&chain, &subset, &psi, horizon, paths, RngStream::new(seed, streams::FELLER));
    record_mc(b, "feller_offdiagonal", z, feller, |b, run| {
        b.data("feller_mode", run.mode);
        let mut csv = String::from("pre_state,post_state,count\n");
        for ((pre, post), c) in &run.histogram {
            csv.push_str(&format!("{pre},{post},{c}\n"));
        }
        b.csv("feller_pairs.csv", csv);
        run.report
    })?;

    if !conservative {
        let sup = estimate_supplementary_mc(
            &chain,
            &subset,
            &vec![1.0; k],
            &s.t_grid,
            s.supplementary_paths,
            RngStream::new(seed, streams::SUPPLEMENTARY),
        );
        record_mc(b, "supplementary_total", z, sup, |b, rep| {
            b.data("supplementary_points", &rep.points);
            rep.extrapolated
        })?;
    }

    let mut all_jumps = JumpTarget::zero(n);
    for x in 0..n {
        for y in 0..n {
            if x != y && chain.rate(x, y) > 0.0 {
                all_jumps = all_jumps.set(x, PostState::State(y), 1.0);
            }
        }
        if chain.kill_rates()[x] > 0.0 {
            all_jumps = all_jumps.set(x, PostState::Death, 1.0);
        }
    }
    let start = subset.complement().first().copied().unwrap_or(0);
    let levy = levy_jump_check(&chain, start, &all_jumps, s.levy_t, s.levy_paths, RngStream::new(seed, streams::LEVY));
    record_mc(b, "levy_jump_count", z, levy, |_, r| r)?;

    if conservative {
        return Ok(());
    }
    let curve = killing_limit_curve(&chain, chain.weights(), &s.curve_t, s.curve_paths, RngStream::new(seed, streams::CURVE));
    match curve {
        Ok(points) => {
            for p in &points {
                b.estimator(format!("killing_curve_t{}", p.t), &p.report, z);
            }
        }
        Err(e @ McError::InsufficientEvents { .. }) => b.inconclusive("killing_curve", e.to_string()),
        Err(e) => return Err(run_error(e)),
    }
    Ok(())
}

#[derive(Serialize)]
struct IdentityRow {
    function: String,
    lhs: f64,
    rhs: f64,
    jump_term: f64,
    kill_term: f64,
    residual: f64,
}

fn sphere_of(config: &ExperimentConfig) -> Result<SphereSpec, CliError> {
    SphereSpec::new(config.sphere.dim, config.sphere.radius).map_err(|e| CliError::Config(format!("sphere: {e}")))
}

/// Test functions up to `max_degree`: real spherical harmonics in three
/// dimensions, products of distinct coordinates otherwise.
fn test_functions(dim: usize, max_degree: usize) -> Vec<(String, BoundaryFunction)> {
    let mut out = vec![("constant".to_string(), BoundaryFunction::constant(1.0))];
    if dim == 3 {
        for l in 1..=max_degree {
            for m in -(l as i64)..=(l as i64) {
                out.push((format!("Y_{l}^{m}"), BoundaryFunction::Harmonics(vec![(l, m, 1.0)])));
            }
        }
    } else {
        for l in 1..=max_degree.min(dim) {
            let name = (0..l).map(|i| format!("x{i}")).collect::<Vec<_>>().join("*");
            out.push((name, BoundaryFunction::from_fn(l, move |x| x[..l].iter().product())));
        }
    }
    out
}

fn sphere_verify(config: &ExperimentConfig, b: &mut ReportBundle) -> Result<(), CliError> {
    let s = sphere_of(config)?;
    let rule = SphereRule::product(&s, config.sphere.order);
    let mut rows = Vec::new();
    for (name, phi) in test_functions(s.dim(), config.sphere.max_degree) {
        let e = verify_energy_identity(&s, &phi, &rule).map_err(run_error)?;
        let tol = if name == "constant" {
            config.tolerances.identity
        } else {
            config.tolerances.sphere_identity
        };
        b.check(format!("energy_identity_{name}"), e.residual, tol);
        rows.push(IdentityRow {
            function: name,
            lhs: e.lhs,
            rhs: e.rhs,
            jump_term: e.jump_term,
            kill_term: e.kill_term,
            residual: e.residual,
        });
    }
    b.data("quadrature_order", config.sphere.order);
    b.data("identities", rows);
    Ok(())
}

fn sphere_mc(config: &ExperimentConfig, b: &mut ReportBundle) -> Result<(), CliError> {
    let sp = &config.sphere;
    let s = sphere_of(config)?;
    let smp = &config.samples;
    let z = config.tolerances.z_bound;
    let seed = config.seed;
    let r = s.radius();
    let mut cfg = ShellConfig::new(&s, sp.eps[0]);
    cfg.kill_radius = sp.far_radius * r;
    cfg.validate(&s).map_err(|e| CliError::Config(format!("sphere: {e}")))?;

    let esc = escape_probability_mc(&s, &sp.point, &cfg, smp.walks, RngStream::new(seed, streams::ESCAPE))
        .map_err(run_error)?;
    b.estimator("hit_probability_annulus", &esc.hit, z);
    let factor = 1.0 - (r / cfg.kill_radius).powi(s.dim() as i32 - 2);
    let corrected = EstimatorReport::new(esc.corrected_escape, esc.escape.std_error * factor, esc.escape.n_events)
        .with_exact(esc.q_exact);
    b.estimator("escape_probability_corrected", &corrected, z);
    b.data("walks_max_steps_exceeded", esc.max_steps_exceeded);

    let restart = cfg.with_far_field(FarField::Restart);
    let law = exterior_hit_law(&s, &sp.point, sp.hit_bins, smp.hits, &restart, RngStream::new(seed, streams::HIT_LAW))
        .map_err(run_error)?;
    let crit = ChiSquared::new(law.dof as f64)
        .map_err(run_error)?
        .inverse_cdf(1.0 - config.tolerances.chi2_level);
    b.check("hit_law_chi2", law.chi2, crit);
    b.data("hit_law", &law);

    let shell_cfg = cfg.with_far_field(match sp.far_field {
        FarFieldMode::Absorb => FarField::Absorb,
        FarFieldMode::Restart => FarField::Restart,
    });
    let bins = AngularBins::standard();
    let rep = estimate_feller_sphere_mc(&s, &bins, &sp.eps, smp.shell_trials, &shell_cfg, RngStream::new(seed, streams::SHELL))
        .map_err(run_error)?;
    for bin in rep.bins.iter().filter(|x| x.estimated) {
        let name = format!("feller_bin_{}_{}", bin.lo_deg, bin.hi_deg);
        match &bin.extrapolated {
            Some(x) => b.estimator_rel(name, x, z, config.tolerances.shell_rel),
            None => b.inconclusive(name, "too few returns in the bin"),
        }
    }
    b.estimator("supplementary_density", &rep.v_hat, z);
    b.data("shell_max_steps_exceeded", rep.max_steps_exceeded);
    b.data("shell_v_rows", &rep.v_rows);
    b.csv("shell_bins.csv", rep.csv());
    Ok(())
}

fn prototype(config: &ExperimentConfig, b: &mut ReportBundle) -> Result<(), CliError> {
    let (l, geom) = prototype_lattice().map_err(run_error)?;
    let f = l.subset.trace();
    let u: Vec<f64> = match &config.chain.u {
        Some(u) => {
            if u.len() != f.len() {
                return Err(CliError::Config(format!(
                    "chain.u has {} entries, the prototype trace set has {}",
                    u.len(),
                    f.len()
                )));
            }
            u.clone()
        }
        None => f
            .iter()
            .map(|&x| {
                let c = &l.coords[x];
                1.0 + 0.5 * c[0] - c[1] * c[2]
            })
            .collect(),
    };
    chain_checks(config, b, &l.chain, &l.subset, &u)?;
    let (blocks, _, feller) = feller_for(&l.chain, &l.subset, &[]).map_err(run_error)?;
    let t = trace_form(&l.chain, &l.subset, &blocks.mf).map_err(run_error)?;
    let exact = t.energy(&u, &u);
    let e = prototype_trace_energy(&l, &u, Some(&feller)).map_err(run_error)?;
    b.check("prototype_energy", (e.total - exact).abs() / exact.abs(), config.tolerances.identity);
    b.data("sites", l.chain.len());
    b.data("trace_sites", f.len());
    b.data("ball_sites", f.iter().filter(|&&x| geom.in_ball(&l.coords[x])).count());
    b.data("stable_amplitude", l.stable_amplitude);
    b.data("prototype_energy", e);
    Ok(())
}
