//! Implementations of the CLI subcommands.

use std::fs;
use std::io::Write;
use std::path::Path;

use leaktree::io::{parse_scenario, read_measurements, write_measurements, Scenario};
use leaktree::localization::{localize_single_pipe, localize_tree, LocalizeOptions};
use leaktree::solver::{self, measurements_of};
use leaktree::uncertainty::{confidence_interval, mc_experiment, variance_x, NoiseSpec};
use leaktree::{Error, LeakSpec, Result};

use crate::report;
use crate::OutputFormat;

fn load_scenario(path: &Path) -> Result<Scenario> {
    parse_scenario(&fs::read_to_string(path)?)
}

pub fn validate(path: &Path) -> Result<()> {
    let scenario = load_scenario(path)?;
    println!(
        "scenario ok: {} vertices, {} pipes, {} leaves, leak {}, noise {}",
        scenario.network.vertex_count(),
        scenario.network.pipe_count(),
        scenario.network.leaves().len(),
        if scenario.leak.is_some() { "present" } else { "absent" },
        if scenario.noise.is_some() { "present" } else { "absent" },
    );
    Ok(())
}

pub fn simulate(path: &Path, out: &Path, seed: Option<u64>, format: OutputFormat) -> Result<()> {
    let scenario = load_scenario(path)?;
    let state = match &scenario.leak {
        Some(leak) => {
            solver::solve_with_leak(&scenario.network, &scenario.boundary, leak, &scenario.constants)?
        }
        None => solver::solve_no_leak(&scenario.network, &scenario.boundary, &scenario.constants)?,
    };
    let mut meas = measurements_of(&state, "0")?;
    if let Some(noise) = scenario.noise {
        let seed = seed.or(scenario.seed).ok_or_else(|| {
            Error::InvalidArgument(
                "scenario has a noise section; pass --seed or set `seed` in the file".into(),
            )
        })?;
        meas = meas
            .with_noise(noise.sigma_head, noise.sigma_flow, seed)?
            .with_sigmas(noise.sigma_head, noise.sigma_flow);
    }
    let file = fs::File::create(out)?;
    write_measurements(file, std::slice::from_ref(&meas))?;

    let report = report::state_report(&state);
    match format {
        OutputFormat::Json => {
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"))
        }
        OutputFormat::Csv => print!("{}", report.to_csv()),
        OutputFormat::Text => print_state_text(&report),
    }
    eprintln!("{}; wrote {} leaf measurements to {}", report.summary(), meas.len(), out.display());
    Ok(())
}

fn print_state_text(report: &report::StateReport) {
    println!("heads (m):");
    for h in &report.heads {
        let marker = if h.is_leak_vertex { "  (leak vertex)" } else { "" };
        println!("  vertex {:>4}: {:.6}{}", h.vertex, h.head, marker);
    }
    println!("flows (m^3/s, from -> to):");
    for f in &report.flows {
        println!("  {:>4} -> {:<4}: {:.8}", f.from, f.to, f.flow);
    }
    if let Some(l) = &report.leak {
        println!(
            "leak: vertex {} at head {:.6} m, demand {:.8} m^3/s",
            l.vertex, l.head, l.demand
        );
    } else {
        println!("leak: none");
    }
    if !report.transitional_pipes.is_empty() {
        println!("transitional-regime pipes: {:?}", report.transitional_pipes);
    }
    println!(
        "solver: {} iterations, residual {:.3e} m^3/s",
        report.solver_iterations, report.solver_residual
    );
}

pub fn localize(
    scenario_path: &Path,
    measurements_path: &Path,
    out: Option<&Path>,
    format: OutputFormat,
) -> Result<()> {
    let scenario = load_scenario(scenario_path)?;
    let sets = read_measurements(fs::File::open(measurements_path)?)?;
    if sets.len() > 2 {
        return Err(Error::InvalidMeasurement(format!(
            "expected 1 or 2 snapshots, found {}",
            sets.len()
        )));
    }
    let noisy = sets
        .iter()
        .any(|s| s.iter().any(|(_, m)| m.sigma_head.is_some() || m.sigma_flow.is_some()));
    let opts = if noisy { LocalizeOptions::noisy() } else { LocalizeOptions::default() };
    let result = localize_tree(
        &scenario.network,
        &sets[0],
        sets.get(1),
        &scenario.constants,
        &opts,
    )?;

    let ci = match &result.end_sigmas {
        Some(sigmas) => {
            let noise = NoiseSpec::from_channel_sigmas(sigmas);
            let geom = scenario.network.pipe(result.pipe)?.geometry;
            let variance = variance_x(
                result.x,
                &result.final_snapshot,
                &geom,
                &scenario.constants,
                &noise,
            )?;
            Some(confidence_interval(result.x, variance.sqrt(), sets.len(), 0.95)?)
        }
        None => None,
    };
    let report =
        report::localize_report(&scenario.network, &result, ci.map(|c| c.sigma_x), ci);
    eprintln!("{}", report.summary());
    let machine = match format {
        OutputFormat::Json => {
            format!("{}\n", serde_json::to_string_pretty(&report).expect("report serializes"))
        }
        OutputFormat::Csv | OutputFormat::Text => report.to_csv(),
    };
    match out {
        Some(path) => fs::write(path, machine)?,
        None => print!("{machine}"),
    }
    Ok(())
}

pub fn sweep(path: &Path, step: f64, out: &Path) -> Result<()> {
    let scenario = load_scenario(path)?;
    if scenario.network.vertex_count() != 2 {
        return Err(Error::InvalidArgument(
            "sweep requires a single-pipe scenario (2 vertices)".into(),
        ));
    }
    let template = scenario.leak.ok_or_else(|| {
        Error::InvalidArgument("sweep requires a [leak] section as the injection template".into())
    })?;
    if step <= 0.0 || !step.is_finite() {
        return Err(Error::InvalidArgument(format!("--step must be positive, got {step}")));
    }
    let geometry = scenario.network.pipe(template.pipe)?.geometry;
    let opposite = scenario
        .network
        .pipe(template.pipe)?
        .opposite(template.from)
        .expect("pipe endpoint");

    let mut file = fs::File::create(out)?;
    writeln!(file, "true_x,estimated_x,abs_error,junction_proximate")?;
    let mut worst = 0.0f64;
    let mut rows = 0usize;
    let mut k = 0usize;
    loop {
        let x = (k as f64) * step;
        if x > geometry.length * (1.0 + 1e-12) {
            break;
        }
        let leak = LeakSpec { distance: x.min(geometry.length), ..template };
        let state =
            solver::solve_with_leak(&scenario.network, &scenario.boundary, &leak, &scenario.constants)?;
        let meas = measurements_of(&state, "0")?;
        let near = meas.reading(template.from)?;
        let far = meas.reading(opposite)?;
        let snapshot = leaktree::localization::SinglePipeSnapshot {
            head_0: near.head,
            head_1: far.head,
            flow_0: near.flow,
            flow_1: far.flow,
        };
        let est = localize_single_pipe(
            &snapshot,
            &geometry,
            &scenario.constants,
            &LocalizeOptions::default(),
        )?;
        let err = (est.x - leak.distance).abs();
        worst = worst.max(err);
        writeln!(file, "{},{},{},{}", leak.distance, est.x, err, est.junction_proximate)?;
        rows += 1;
        k += 1;
    }
    println!("swept {rows} positions at {step} m spacing; max |error| = {worst:.6e} m");
    Ok(())
}

pub fn noise(
    path: &Path,
    trials: usize,
    levels: &str,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let scenario = load_scenario(path)?;
    if scenario.network.vertex_count() != 2 {
        return Err(Error::InvalidArgument(
            "the noise experiment requires a single-pipe scenario (2 vertices)".into(),
        ));
    }
    let leak = scenario.leak.ok_or_else(|| {
        Error::InvalidArgument("the noise experiment requires a [leak] section".into())
    })?;
    let noise_spec = scenario.noise.ok_or_else(|| {
        Error::InvalidArgument("the noise experiment requires a [noise] section".into())
    })?;
    let seed = seed.or(scenario.seed).ok_or_else(|| {
        Error::InvalidArgument("pass --seed or set `seed` in the scenario file".into())
    })?;
    let n_list: Vec<usize> = levels
        .split(',')
        .map(|token| {
            token.trim().parse::<usize>().map_err(|_| {
                Error::InvalidArgument(format!("--levels entry {token:?} is not a count"))
            })
        })
        .collect::<Result<_>>()?;

    let state =
        solver::solve_with_leak(&scenario.network, &scenario.boundary, &leak, &scenario.constants)?;
    let meas = measurements_of(&state, "0")?;
    let opposite = scenario.network.pipe(leak.pipe)?.opposite(leak.from).expect("pipe endpoint");
    let near = meas.reading(leak.from)?;
    let far = meas.reading(opposite)?;
    let snapshot = leaktree::localization::SinglePipeSnapshot {
        head_0: near.head,
        head_1: far.head,
        flow_0: near.flow,
        flow_1: far.flow,
    };
    let geometry = scenario.network.pipe(leak.pipe)?.geometry;
    let rows = mc_experiment(
        &snapshot,
        leak.distance,
        &geometry,
        &scenario.constants,
        &NoiseSpec::uniform(noise_spec.sigma_head, noise_spec.sigma_flow),
        &n_list,
        trials,
        seed,
        0.95,
    )?;

    let mut file = fs::File::create(out)?;
    writeln!(file, "snapshots,mse,predicted_mse,coverage")?;
    for row in &rows {
        writeln!(file, "{},{},{},{}", row.snapshots, row.mse, row.predicted_mse, row.coverage)?;
    }
    println!(
        "ran {} trials for {} snapshot counts with seed {seed}; wrote {}",
        trials,
        rows.len(),
        out.display()
    );
    Ok(())
}
