use std::io::Write;
use std::process::ExitCode;

use log::{debug, info};
use serde_json::json;

use wardrop_logit::dynamics::{self, contraction_certificate, ContractionCertificate, LogitParams};
use wardrop_logit::equilibrium::{
    distance_to_set, oracle_aggregates, solve_fixed_point, wardrop_bruteforce, EquilibriumReport,
    OracleParams, DEFAULT_ETA_SEQUENCE, DEFAULT_ORACLE_CAP,
};
use wardrop_logit::game::{collapse_to_parallel, FlowState, RoutingGame};
use wardrop_logit::graph::{series_decompose, simplicity, Simplicity};
use wardrop_logit::scenario::{InitSpec, Scenario};
use wardrop_logit::{Error, Result};

use crate::{CheckArgs, InitArg, SimulateArgs, SolveArgs, SweepArgs};

fn success() -> ExitCode {
    ExitCode::SUCCESS
}

fn not_stationary() -> ExitCode {
    ExitCode::from(2u8)
}

fn no_guarantee() -> ExitCode {
    ExitCode::from(3u8)
}

/// Writes `body` to `--out` or stdout.
fn emit(out: &Option<std::path::PathBuf>, body: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, body)?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(body.as_bytes())?;
        }
    }
    Ok(())
}

fn run_in_pool<T: Send>(jobs: usize, work: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if jobs <= 1 {
        return work();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidParams(format!("cannot build a {jobs}-thread pool: {e}")))?;
    pool.install(work)
}

pub fn simulate(args: &SimulateArgs) -> Result<ExitCode> {
    let scenario = args.common.load()?;
    let game = scenario.build_game()?;
    let params = scenario.logit_params()?;
    let initial = scenario.initial_state(&game)?;
    info!(
        "simulate: {} populations, {} routes, eta={}, step={}, horizon={}",
        game.num_populations(),
        game.num_routes(),
        params.eta,
        params.step,
        params.horizon
    );

    let outcome = dynamics::run_dynamics(&game, &initial, &params, true, None)?;
    let trajectory = outcome.trajectory.expect("recording requested");
    let mut body = Vec::new();
    dynamics::write_trajectory_csv(&game, &trajectory, &mut body)?;
    let body = String::from_utf8(body).expect("CSV is ASCII");
    emit(&args.common.out, &body)?;

    if outcome.stationary {
        Ok(success())
    } else {
        info!("trajectory still moving at the horizon");
        Ok(not_stationary())
    }
}

/// Initial states for a multi-start solve. Seeded starts are the default;
/// an explicit uniform/file init is honored for a single start only.
fn solve_initial_states(
    scenario: &Scenario,
    game: &RoutingGame,
    init: &Option<InitArg>,
    starts: usize,
) -> Result<Vec<(u64, FlowState)>> {
    if starts == 0 {
        return Err(Error::InvalidParams("--starts must be at least 1".into()));
    }
    let base_seed = match (&init, &scenario.init) {
        (Some(InitArg::SeededRandom(seed)), _) => *seed,
        (Some(_), _) if starts == 1 => {
            let state = scenario.initial_state(game)?;
            return Ok(vec![(0, state)]);
        }
        (Some(_), _) => {
            return Err(Error::InvalidParams(
                "multi-start solve needs seeded initial states; pass --init seeded-random:SEED \
                 or drop --init"
                    .into(),
            ));
        }
        (None, InitSpec::SeededRandom { seed }) => *seed,
        (None, _) => 0,
    };
    Ok((0..starts as u64)
        .map(|k| {
            let seed = base_seed + k;
            (seed, FlowState::seeded(game, seed))
        })
        .collect())
}

pub fn solve(args: &SolveArgs) -> Result<ExitCode> {
    let scenario = args.common.load()?;
    let game = scenario.build_game()?;
    let params = scenario.logit_params()?;
    let initials = solve_initial_states(&scenario, &game, &args.common.init, args.starts)?;

    let reports: Vec<(u64, EquilibriumReport)> = run_in_pool(args.common.jobs, || {
        use rayon::prelude::*;
        initials
            .par_iter()
            .map(|(seed, state)| solve_fixed_point(&game, &params, state).map(|r| (*seed, r)))
            .collect()
    })?;

    let aggregates: Vec<Vec<f64>> = reports
        .iter()
        .map(|(_, r)| {
            wardrop_logit::game::aggregate_flows(&game, &r.fixed_point).map(|f| f.total)
        })
        .collect::<Result<_>>()?;
    let mut max_pairwise = 0.0f64;
    for i in 0..aggregates.len() {
        for j in (i + 1)..aggregates.len() {
            let d: f64 = aggregates[i]
                .iter()
                .zip(&aggregates[j])
                .map(|(a, b)| (a - b).abs())
                .sum();
            max_pairwise = max_pairwise.max(d);
        }
    }
    let verdict = if max_pairwise <= 1e-6 { "unique" } else { "multiple" };
    let all_converged = reports.iter().all(|(_, r)| r.converged);

    let starts_json: Vec<serde_json::Value> = reports
        .iter()
        .map(|(seed, r)| {
            let mut value = r.to_json(&game);
            value["seed"] = json!(seed);
            value
        })
        .collect();
    let document = json!({
        "scenario": scenario.name,
        "eta": params.eta,
        "starts": starts_json,
        "verdict": verdict,
        "max_pairwise_aggregate_l1": max_pairwise,
    });
    emit(
        &args.common.out,
        &format!("{}\n", serde_json::to_string_pretty(&document).expect("json")),
    )?;

    debug!("verdict: {verdict} (max pairwise {max_pairwise:.3e})");
    Ok(if all_converged { success() } else { not_stationary() })
}

pub fn sweep_eta(args: &SweepArgs) -> Result<ExitCode> {
    let scenario = args.common.load()?;
    let game = scenario.build_game()?;
    let base = scenario.logit_params()?;
    let etas = args
        .etas
        .clone()
        .unwrap_or_else(|| DEFAULT_ETA_SEQUENCE.to_vec());
    if etas.is_empty() || etas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams(
            "--etas must be a strictly increasing, non-empty list".into(),
        ));
    }
    let oracle = OracleParams {
        grid_step: args.grid_step,
        cap: args.oracle_cap.unwrap_or(DEFAULT_ORACLE_CAP),
        residual_tol: None,
    };

    // one shared oracle set, then independent per-eta solves
    let oracle_states = wardrop_bruteforce(&game, &oracle)?;
    if oracle_states.is_empty() {
        return Err(Error::Validation(
            "oracle found no equilibria on its grid; refine --grid-step".into(),
        ));
    }
    let aggregates = oracle_aggregates(&game, &oracle_states)?;
    info!(
        "sweeping {} etas against {} oracle equilibria",
        etas.len(),
        oracle_states.len()
    );

    let initial = FlowState::uniform(&game);
    let reports: Vec<EquilibriumReport> = run_in_pool(args.common.jobs, || {
        use rayon::prelude::*;
        etas.par_iter()
            .map(|&eta| {
                let params = LogitParams::with(eta, base.step, base.horizon)?;
                solve_fixed_point(&game, &params, &initial)
            })
            .collect()
    })?;

    let mut body = String::from("eta,wardrop_distance,residual\n");
    let mut all_converged = true;
    for report in &reports {
        let flows = wardrop_logit::game::aggregate_flows(&game, &report.fixed_point)?.total;
        let distance = distance_to_set(&flows, &aggregates).expect("oracle set is non-empty");
        all_converged &= report.converged;
        body.push_str(&format!("{},{},{}\n", report.eta, distance, report.residual));
    }
    emit(&args.common.out, &body)?;
    Ok(if all_converged { success() } else { not_stationary() })
}

fn certificate_line(label: &str, eta: f64, cert: &ContractionCertificate) -> String {
    format!(
        "contraction certificate{label} (eta={eta}): metzler_ok={}, min_offdiag={:.3e}, \
         max_column_sum_error={:.3e}, samples={}\n",
        cert.metzler_ok, cert.min_offdiag, cert.max_column_sum_error, cert.samples
    )
}

pub fn check_graph(args: &CheckArgs) -> Result<ExitCode> {
    let scenario = args.common.load()?;
    let game = scenario.build_game()?;
    let eta = scenario.dynamics.eta;
    let graph = game.graph();

    let mut body = String::new();
    if let Some(name) = &scenario.name {
        body.push_str(&format!("scenario: {name}\n"));
    }
    body.push_str(&format!(
        "graph: {} nodes, {} edges, {} routes ({} -> {})\n",
        graph.nodes().len(),
        graph.num_edges(),
        game.num_routes(),
        graph.origin(),
        graph.destination(),
    ));

    let samples = args.certificate_samples;
    let guaranteed = match game.simplicity() {
        Simplicity::Simple => {
            body.push_str("classification: simple\n");
            let collapsed = collapse_to_parallel(&game)?;
            let cert = contraction_certificate(&collapsed, eta, samples)?;
            body.push_str(&certificate_line("", eta, &cert));
            true
        }
        Simplicity::SharedEdge(_) => {
            let components = series_decompose(graph)?;
            let mut all_simple = components.len() > 1;
            let mut witness_text = None;
            for component in &components {
                let routes = wardrop_logit::graph::enumerate_routes(component)?;
                if let Simplicity::SharedEdge(w) = simplicity(component, &routes) {
                    all_simple = false;
                    witness_text = Some(format!(
                        "edge {} is shared by routes {} and {}",
                        w.edge, w.route_a, w.route_b
                    ));
                    break;
                }
            }
            if all_simple {
                body.push_str(&format!(
                    "classification: series-of-simple ({} components)\n",
                    components.len()
                ));
                for (i, component) in components.iter().enumerate() {
                    let sub = game.restrict_to(component.clone())?;
                    body.push_str(&format!(
                        "component {}: {} -> {}, {} edges, {} routes\n",
                        i + 1,
                        component.origin(),
                        component.destination(),
                        component.num_edges(),
                        sub.num_routes(),
                    ));
                    let collapsed = collapse_to_parallel(&sub)?;
                    let cert = contraction_certificate(&collapsed, eta, samples)?;
                    body.push_str(&certificate_line(
                        &format!(" [component {}]", i + 1),
                        eta,
                        &cert,
                    ));
                }
                true
            } else {
                let witness = witness_text.unwrap_or_else(|| {
                    match game.simplicity() {
                        Simplicity::SharedEdge(w) => format!(
                            "edge {} is shared by routes {} and {}",
                            w.edge, w.route_a, w.route_b
                        ),
                        Simplicity::Simple => unreachable!("classified as shared"),
                    }
                });
                body.push_str(&format!("classification: neither ({witness})\n"));
                false
            }
        }
    };
    body.push_str(&format!(
        "convergence guaranteed: {}\n",
        if guaranteed { "yes" } else { "no" }
    ));
    emit(&args.common.out, &body)?;
    Ok(if guaranteed { success() } else { no_guarantee() })
}
