//! Batch front end: configuration ingestion, pipeline orchestration
//! (build → analyze → sweep → project), persistence, and static SVG/CSV
//! figure emission.
//!
//! One command per process. Exit codes: 0 success, 2 configuration error,
//! 3 numeric non-convergence, 4 truncated mesh. Environment overrides are
//! limited to the output directory (`GAITMESH_OUT`) and worker count
//! (`GAITMESH_THREADS`).

pub mod config;
pub mod figures;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::dynamics::{simulation_call_count, DisturbanceProfile, Model};
use crate::error::{Error, Result};
use crate::geometry::{estimate_dimension, pca_project, PoincareState, Provenance};
use crate::markov::{
    assemble_stochastic, dangerous_states, sensitivity_sweep, spectral_summary_with,
    MfptOptions, StochasticMatrix,
};
use crate::meshing::{
    build_mesh, load_bundle, lump_trajectory, mesh_growth_sweep, save_bundle, BuildOptions,
    MeshBundle,
};
use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "gaitmesh",
    version,
    about = "Mesh-based stability and robustness analysis for cyclic walkers"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the reachable-state mesh and deterministic transition table.
    Build(BuildArgs),
    /// Compute metastability metrics from an existing bundle, optionally
    /// under a different disturbance distribution (no re-simulation).
    Analyze(AnalyzeArgs),
    /// Per-disturbance MFPT sensitivity sweep over a bundle.
    Sweep(SweepArgs),
    /// Mesh-growth threshold sweep and manifold-dimension fit.
    Dims(DimsArgs),
    /// PCA or raw-axis projection of mesh states for visualization.
    Project(ProjectArgs),
    /// Lump an observed state sequence without exploring.
    Lump(LumpArgs),
}

#[derive(Debug, Args)]
struct BuildArgs {
    /// Declarative run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker-thread bound; never changes outputs.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Bundle directory from a previous build.
    #[arg(long)]
    bundle: PathBuf,
    /// Optional config whose [profile] overrides the bundle distribution.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    bundle: PathBuf,
    /// Optional config supplying [analysis] sweep weights.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct DimsArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct ProjectArgs {
    /// Bundle directory to project.
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// State-sequence CSV to lump and project instead of a bundle.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of principal components.
    #[arg(long)]
    k: Option<usize>,
    /// Raw coordinate axes, e.g. "0,2,3": slice mode instead of PCA.
    #[arg(long)]
    axes: Option<String>,
    /// Lumping threshold for trajectory input.
    #[arg(long)]
    d_tr: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LumpArgs {
    /// State-sequence CSV, one comma-separated state per line.
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long)]
    d_tr: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Runs the CLI and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Build(a) => cmd_build(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Dims(a) => cmd_dims(a),
        Command::Project(a) => cmd_project(a),
        Command::Lump(a) => cmd_lump(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            let kind = match &e {
                Error::Config(_)
                | Error::InvalidInput(_)
                | Error::Json(_)
                | Error::UnknownModel(_)
                | Error::DimensionMismatch { .. } => "config",
                Error::NonConvergence { .. } => "non-convergence",
                Error::Protocol(_) => "protocol",
                Error::Io(_) => "io",
            };
            eprintln!(
                "{}",
                json!({ "error": e.to_string(), "kind": kind })
            );
            match kind {
                "config" => 2,
                "non-convergence" => 3,
                _ => 1,
            }
        }
    }
}

fn resolve_out(flag: Option<PathBuf>, cfg: Option<&RunConfig>) -> PathBuf {
    flag.or_else(|| std::env::var_os("GAITMESH_OUT").map(PathBuf::from))
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("gaitmesh-out"))
}

fn resolve_threads(flag: Option<usize>, cfg: Option<&RunConfig>) -> Option<usize> {
    flag.or_else(|| {
        std::env::var("GAITMESH_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .or_else(|| cfg.and_then(|c| c.threads))
}

/// Runs `f` under a bounded rayon pool when a thread count is set.
fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// JSON value for an f64 that may be infinite.
fn json_f64(x: f64) -> Value {
    if x.is_nan() {
        Value::String("nan".into())
    } else if x == f64::INFINITY {
        Value::String("inf".into())
    } else if x == f64::NEG_INFINITY {
        Value::String("-inf".into())
    } else {
        json!(x)
    }
}

/// CSV cell for an f64 that may be infinite.
fn csv_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, content)?;
    Ok(())
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn cmd_build(args: BuildArgs) -> Result<i32> {
    let cfg = RunConfig::load(&args.config)?;
    let out = resolve_out(args.out, Some(&cfg));
    let threads = resolve_threads(args.threads, Some(&cfg));
    let model = Model::from_spec(&cfg.model)?;
    let profile = cfg.profile.to_profile()?;
    let d_tr = cfg
        .build
        .d_tr
        .ok_or_else(|| Error::Config("build.d_tr is required for `build`".into()))?;
    let initial = match &cfg.initial_state {
        Some(coords) => PoincareState::new(coords.clone())?,
        None => model.default_initial(),
    };
    let options = BuildOptions {
        state_cap: cfg.build.state_cap,
        threads,
        weights: cfg.build.weights.clone(),
        seeds: cfg.seeds.clone(),
    };

    let started = Instant::now();
    let build = build_mesh(
        &initial,
        &cfg.policies,
        &profile,
        d_tr,
        &model,
        &cfg.sim,
        &options,
    )?;
    let wall = started.elapsed().as_secs_f64();
    let truncated = build.truncated;

    let bundle = MeshBundle::from_build(
        build,
        cfg.model.clone(),
        cfg.policies.clone(),
        profile,
        cfg.sim.clone(),
    );
    let bundle_dir = out.join("bundle");
    save_bundle(&bundle_dir, &bundle)?;

    let config_digest = cfg.digest()?;
    let bundle_digest = bundle.digest();

    let mut resolved = cfg.resolved_toml()?;
    resolved.push_str(&format!("\n# config_digest = \"{config_digest}\"\n"));
    write_text(&out.join("resolved_config.toml"), &resolved)?;

    let mut states_csv = format!("# config_digest={config_digest} bundle_digest={bundle_digest}\n");
    {
        let mut buf = Vec::new();
        crate::meshing::write_states_csv(&bundle.mesh, &mut buf)?;
        states_csv.push_str(&String::from_utf8_lossy(&buf));
    }
    write_text(&out.join("states.csv"), &states_csv)?;

    let mut transitions_csv =
        format!("# config_digest={config_digest} bundle_digest={bundle_digest}\n");
    {
        let mut buf = Vec::new();
        crate::meshing::write_transitions_csv(&bundle.table, &mut buf)?;
        transitions_csv.push_str(&String::from_utf8_lossy(&buf));
    }
    write_text(&out.join("transitions.csv"), &transitions_csv)?;

    let failure_total: u64 = bundle.failure_tally.values().sum();
    let tally_json: BTreeMap<String, u64> = bundle
        .failure_tally
        .iter()
        .map(|(k, v)| (format!("{k:?}").to_lowercase(), *v))
        .collect();
    let summary = json!({
        "n_states": bundle.mesh.len(),
        "n_non_failure": bundle.mesh.len() - 1,
        "dim": bundle.mesh.dim(),
        "d_tr": d_tr,
        "truncated": truncated,
        "failure_transitions": tally_json,
        "failure_transitions_total": failure_total,
        "simulations": bundle.simulations,
        "config_digest": config_digest,
        "bundle_digest": bundle_digest,
        "provenance_digest": bundle.mesh.provenance().digest(),
    });
    write_json(&out.join("build_summary.json"), &summary)?;

    println!(
        "built mesh: {} states ({} non-failure), {} simulations, {} failure transitions, {:.2}s wall{}",
        bundle.mesh.len(),
        bundle.mesh.len() - 1,
        bundle.simulations,
        failure_total,
        wall,
        if truncated { " [TRUNCATED]" } else { "" }
    );
    println!("bundle: {}", bundle_dir.display());
    Ok(if truncated { 4 } else { 0 })
}

/// Loads the override profile (when a config is supplied) and checks it
/// against the bundle's disturbance axis.
fn effective_profile(
    bundle: &MeshBundle,
    cfg: Option<&RunConfig>,
) -> Result<DisturbanceProfile> {
    let profile = match cfg {
        Some(c) => c.profile.to_profile()?,
        None => bundle.profile.clone(),
    };
    if profile.len() != bundle.table.n_disturbances() {
        return Err(Error::Config(format!(
            "profile has {} disturbances but the bundle axis has {}",
            profile.len(),
            bundle.table.n_disturbances()
        )));
    }
    Ok(profile)
}

fn assemble_for(
    bundle: &MeshBundle,
    profile: &DisturbanceProfile,
    controller: usize,
) -> Result<StochasticMatrix> {
    assemble_stochastic(&bundle.table, controller, profile)
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<i32> {
    let cfg = args.config.as_deref().map(RunConfig::load).transpose()?;
    let out = resolve_out(args.out, cfg.as_ref());
    let threads = resolve_threads(args.threads, cfg.as_ref());
    let bundle = load_bundle(&args.bundle)?;
    let profile = effective_profile(&bundle, cfg.as_ref())?;
    let analysis = cfg
        .as_ref()
        .map(|c| c.analysis.clone())
        .unwrap_or_default();

    let sims_before = simulation_call_count();
    let (summary, dangerous) = with_threads(threads, || -> Result<_> {
        let t = assemble_for(&bundle, &profile, analysis.controller)?;
        let s = spectral_summary_with(&t, &MfptOptions::default(), analysis.gap_ratio)?;
        let dangerous = dangerous_states(&t, analysis.dangerous_threshold)?;
        Ok((s, dangerous))
    })??;
    let sims_used = simulation_call_count() - sims_before;

    let config_digest = cfg.as_ref().map(|c| c.digest()).transpose()?;
    let bundle_digest = bundle.digest();

    let mut doc = json!({
        "bundle_digest": bundle_digest,
        "config_digest": config_digest,
        "profile_id": profile.id,
        "controller": analysis.controller,
        "n_states": bundle.mesh.len(),
        "lambda2": json_f64(summary.lambda2),
        "lambda3_bound": json_f64(summary.lambda3_bound),
        "gap_ok": summary.gap_ok,
        "phi_unique": summary.phi_unique,
        "m_exact": json_f64(summary.m_exact),
        "m_eigen": json_f64(summary.m_eigen),
        "dangerous_threshold": analysis.dangerous_threshold,
        "dangerous_count": dangerous.len(),
        "dangerous_states": dangerous,
        "simulation_calls": sims_used,
    });
    if analysis.full_vectors {
        doc["phi"] = Value::Array(summary.phi.iter().map(|p| json_f64(*p)).collect());
        doc["m"] = Value::Array(summary.m.iter().map(|m| json_f64(*m)).collect());
    }
    write_json(&out.join("analysis.json"), &doc)?;

    let digest_line = format!(
        "# bundle_digest={bundle_digest}{}\n",
        config_digest
            .as_ref()
            .map(|d| format!(" config_digest={d}"))
            .unwrap_or_default()
    );
    let mut mfpt_csv = digest_line.clone();
    mfpt_csv.push_str("state,mfpt\n");
    for (i, m) in summary.m.iter().enumerate() {
        mfpt_csv.push_str(&format!("{i},{}\n", csv_f64(*m)));
    }
    write_text(&out.join("mfpt.csv"), &mfpt_csv)?;

    let mut phi_csv = digest_line.clone();
    phi_csv.push_str("state,phi\n");
    for (i, p) in summary.phi.iter().enumerate() {
        phi_csv.push_str(&format!("{},{}\n", i + 1, csv_f64(*p)));
    }
    write_text(&out.join("phi.csv"), &phi_csv)?;

    let t = assemble_for(&bundle, &profile, analysis.controller)?;
    let mut danger_csv = digest_line;
    danger_csv.push_str("state,p_fail\n");
    for i in &dangerous {
        danger_csv.push_str(&format!("{i},{}\n", csv_f64(t.prob(*i, 0))));
    }
    write_text(&out.join("dangerous.csv"), &danger_csv)?;

    println!(
        "lambda2 = {}, M_exact = {}, M_eigen = {}, gap_ok = {}, dangerous = {}, simulation_calls = {}",
        summary.lambda2,
        csv_f64(summary.m_exact),
        csv_f64(summary.m_eigen),
        summary.gap_ok,
        dangerous.len(),
        sims_used
    );
    Ok(0)
}

fn cmd_sweep(args: SweepArgs) -> Result<i32> {
    let cfg = args.config.as_deref().map(RunConfig::load).transpose()?;
    let out = resolve_out(args.out, cfg.as_ref());
    let threads = resolve_threads(args.threads, cfg.as_ref());
    let bundle = load_bundle(&args.bundle)?;
    let profile = effective_profile(&bundle, cfg.as_ref())?;
    let analysis = cfg
        .as_ref()
        .map(|c| c.analysis.clone())
        .unwrap_or_default();

    let results = with_threads(threads, || {
        sensitivity_sweep(
            &bundle.table,
            analysis.controller,
            &profile,
            &analysis.sweep,
        )
    })??;

    let bundle_digest = bundle.digest();
    let config_digest = cfg.as_ref().map(|c| c.digest()).transpose()?;
    let mut csv = format!(
        "# bundle_digest={bundle_digest}{}\n",
        config_digest
            .as_ref()
            .map(|d| format!(" config_digest={d}"))
            .unwrap_or_default()
    );
    csv.push_str("index,magnitude,start_time,M\n");
    let mut entries = Vec::new();
    let mut rows = Vec::new();
    for (d, m) in &results {
        let gamma = &profile.disturbances[*d];
        let cell = match m {
            Ok(v) => csv_f64(*v),
            Err(_) => "error".into(),
        };
        csv.push_str(&format!(
            "{d},{},{},{cell}\n",
            gamma.magnitude, gamma.start_time
        ));
        entries.push((*d, m.as_ref().ok().copied()));
        rows.push(json!({
            "index": d,
            "magnitude": gamma.magnitude,
            "start_time": gamma.start_time,
            "M": match m {
                Ok(v) => json_f64(*v),
                Err(e) => Value::String(format!("error: {e}")),
            },
        }));
    }
    write_text(&out.join("sweep.csv"), &csv)?;
    write_json(
        &out.join("sweep.json"),
        &json!({
            "bundle_digest": bundle_digest,
            "config_digest": config_digest,
            "p_null": analysis.sweep.p_null,
            "p_interest": analysis.sweep.p_interest,
            "results": rows,
        }),
    )?;
    let svg = figures::sweep_figure(&entries, "system MFPT per disturbance of interest");
    write_text(&out.join("sweep.svg"), &svg)?;
    println!("sweep over {} disturbances written", results.len());
    Ok(0)
}

fn cmd_dims(args: DimsArgs) -> Result<i32> {
    let cfg = RunConfig::load(&args.config)?;
    let out = resolve_out(args.out, Some(&cfg));
    let threads = resolve_threads(args.threads, Some(&cfg));
    if cfg.build.d_tr_sweep.len() < 2 {
        return Err(Error::Config(
            "build.d_tr_sweep needs at least two thresholds for `dims`".into(),
        ));
    }
    let model = Model::from_spec(&cfg.model)?;
    let profile = cfg.profile.to_profile()?;
    let initial = match &cfg.initial_state {
        Some(coords) => PoincareState::new(coords.clone())?,
        None => model.default_initial(),
    };
    let options = BuildOptions {
        state_cap: cfg.build.state_cap,
        threads,
        weights: cfg.build.weights.clone(),
        seeds: cfg.seeds.clone(),
    };
    let sweep = mesh_growth_sweep(
        &initial,
        &cfg.policies,
        &profile,
        &cfg.build.d_tr_sweep,
        &model,
        &cfg.sim,
        &options,
    )?;

    let pairs: Vec<(f64, usize)> = sweep
        .iter()
        .filter_map(|(d, n)| n.as_ref().ok().map(|n| (*d, *n)))
        .collect();
    let fit = estimate_dimension(&pairs)?;
    let config_digest = cfg.digest()?;

    let mut csv = format!("# config_digest={config_digest}\n");
    csv.push_str("d_tr,n_states\n");
    for (d, n) in &sweep {
        match n {
            Ok(n) => csv.push_str(&format!("{d},{n}\n")),
            Err(e) => csv.push_str(&format!("{d},error: {e}\n")),
        }
    }
    write_text(&out.join("dims.csv"), &csv)?;
    write_json(
        &out.join("dims.json"),
        &json!({
            "config_digest": config_digest,
            "samples": fit.samples,
            "slope": fit.slope,
            "intercept": fit.intercept,
            "n_hat": fit.n_hat,
            "r_squared": fit.r_squared,
        }),
    )?;
    let svg = figures::loglog_figure(&fit.samples, fit.slope, fit.intercept, fit.n_hat);
    write_text(&out.join("dims.svg"), &svg)?;
    println!(
        "dimension fit: n_hat = {:.3} (r^2 = {:.4}) over {} thresholds",
        fit.n_hat,
        fit.r_squared,
        fit.samples.len()
    );
    Ok(0)
}

fn parse_axes(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|e| Error::InvalidInput(format!("bad axes spec {s:?}: {e}")))
        })
        .collect()
}

/// Reads a state sequence: one comma-separated coordinate row per line,
/// `#` comments and an optional non-numeric header allowed.
fn read_trajectory(path: &Path) -> Result<Vec<PoincareState>> {
    let text = std::fs::read_to_string(path)?;
    let mut states = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        match parsed {
            Ok(coords) => states.push(PoincareState::new(coords)?),
            Err(_) if states.is_empty() => continue, // header row
            Err(e) => {
                return Err(Error::InvalidInput(format!(
                    "bad trajectory line {line:?}: {e}"
                )))
            }
        }
    }
    if states.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no states found in {}",
            path.display()
        )));
    }
    Ok(states)
}

fn cmd_project(args: ProjectArgs) -> Result<i32> {
    let cfg = args.config.as_deref().map(RunConfig::load).transpose()?;
    let out = resolve_out(args.out, cfg.as_ref());
    let analysis = cfg
        .as_ref()
        .map(|c| c.analysis.clone())
        .unwrap_or_default();
    let k = args.k.unwrap_or(analysis.pca_k);
    let axes = match (&args.axes, &analysis.axes) {
        (Some(s), _) => Some(parse_axes(s)?),
        (None, Some(a)) => Some(a.clone()),
        (None, None) => None,
    };

    // Collect states, marker weights, and the dangerous set.
    let (states, weights, dangerous, digest_line): (Vec<PoincareState>, Vec<f64>, Vec<bool>, String) =
        match (&args.bundle, &args.trajectory) {
            (Some(bundle_dir), None) => {
                let bundle = load_bundle(bundle_dir)?;
                let profile = effective_profile(&bundle, cfg.as_ref())?;
                let t = assemble_for(&bundle, &profile, analysis.controller)?;
                let phi = crate::markov::metastable_distribution(&t)?;
                let dangerous_idx = dangerous_states(&t, analysis.dangerous_threshold)?;
                let mut dangerous = vec![false; bundle.mesh.len()];
                for i in &dangerous_idx {
                    dangerous[*i] = true;
                }
                let states: Vec<PoincareState> = bundle
                    .mesh
                    .non_failure()
                    .map(|(_, s)| s.clone())
                    .collect();
                let flags: Vec<bool> = (1..bundle.mesh.len()).map(|i| dangerous[i]).collect();
                let digest = format!("# bundle_digest={}\n", bundle.digest());
                (states, phi, flags, digest)
            }
            (None, Some(traj)) => {
                let states = read_trajectory(traj)?;
                let d_tr = args
                    .d_tr
                    .or(cfg.as_ref().and_then(|c| c.build.d_tr))
                    .ok_or_else(|| {
                        Error::Config("trajectory projection needs --d-tr for lumping".into())
                    })?;
                let lump = lump_trajectory(&states, d_tr, None, Provenance::default())?;
                let mesh_states: Vec<PoincareState> = lump
                    .mesh
                    .non_failure()
                    .map(|(_, s)| s.clone())
                    .collect();
                let weights: Vec<f64> = (1..lump.mesh.len())
                    .map(|i| lump.visit_counts[i] as f64)
                    .collect();
                let flags = vec![false; mesh_states.len()];
                (mesh_states, weights, flags, String::new())
            }
            _ => {
                return Err(Error::Config(
                    "project needs exactly one of --bundle or --trajectory".into(),
                ))
            }
        };

    let (rows, variance, x_label, y_label): (Vec<Vec<f64>>, Option<Vec<f64>>, String, String) =
        match &axes {
            Some(axes) => {
                if axes.is_empty() || axes.iter().any(|&a| a >= states[0].dim()) {
                    return Err(Error::InvalidInput(format!(
                        "axes {axes:?} out of range for dim {}",
                        states[0].dim()
                    )));
                }
                let rows = states
                    .iter()
                    .map(|s| axes.iter().map(|&a| s.coords()[a]).collect())
                    .collect();
                (
                    rows,
                    None,
                    format!("x{}", axes[0]),
                    format!("x{}", axes.get(1).copied().unwrap_or(axes[0])),
                )
            }
            None => {
                let p = pca_project(&states, k)?;
                (
                    p.projected.clone(),
                    Some(p.variance_explained.clone()),
                    "pc1".into(),
                    "pc2".into(),
                )
            }
        };

    let mut csv = digest_line.clone();
    csv.push_str("index");
    for j in 0..rows[0].len() {
        csv.push_str(&format!(",c{j}"));
    }
    csv.push_str(",weight,dangerous\n");
    for (i, row) in rows.iter().enumerate() {
        csv.push_str(&format!("{}", i + 1));
        for v in row {
            csv.push_str(&format!(",{v}"));
        }
        csv.push_str(&format!(
            ",{},{}\n",
            csv_f64(weights[i]),
            u8::from(dangerous[i])
        ));
    }
    write_text(&out.join("projection.csv"), &csv)?;

    if let Some(variance) = &variance {
        let mut vcsv = digest_line.clone();
        vcsv.push_str("component,variance_share\n");
        for (i, v) in variance.iter().enumerate() {
            vcsv.push_str(&format!("{},{}\n", i + 1, csv_f64(*v)));
        }
        write_text(&out.join("variance.csv"), &vcsv)?;
    }

    let points: Vec<figures::ScatterPoint> = rows
        .iter()
        .zip(&weights)
        .zip(&dangerous)
        .map(|((row, w), d)| figures::ScatterPoint {
            x: row[0],
            y: row.get(1).copied().unwrap_or(0.0),
            weight: *w,
            dangerous: *d,
        })
        .collect();
    let title = match &variance {
        Some(v) => format!(
            "PCA projection ({}% variance in 2)",
            ((v.first().unwrap_or(&0.0) + v.get(1).unwrap_or(&0.0)) * 100.0).round()
        ),
        None => "coordinate slice".into(),
    };
    let svg = figures::scatter_figure(&points, &x_label, &y_label, &title);
    write_text(&out.join("projection.svg"), &svg)?;
    println!(
        "projected {} states onto {} axes",
        rows.len(),
        rows[0].len()
    );
    Ok(0)
}

fn cmd_lump(args: LumpArgs) -> Result<i32> {
    let cfg = args.config.as_deref().map(RunConfig::load).transpose()?;
    let out = resolve_out(args.out, cfg.as_ref());
    let states = read_trajectory(&args.trajectory)?;
    let d_tr = args
        .d_tr
        .or(cfg.as_ref().and_then(|c| c.build.d_tr))
        .ok_or_else(|| Error::Config("lump needs --d-tr (or build.d_tr in a config)".into()))?;
    let lump = lump_trajectory(&states, d_tr, None, Provenance::default())?;

    let mut mesh_csv = String::from("index");
    for kdx in 0..lump.mesh.dim() {
        mesh_csv.push_str(&format!(",x{kdx}"));
    }
    mesh_csv.push_str(",visits\n");
    for (i, s) in lump.mesh.non_failure() {
        mesh_csv.push_str(&format!("{i}"));
        for c in s.coords() {
            mesh_csv.push_str(&format!(",{c}"));
        }
        mesh_csv.push_str(&format!(",{}\n", lump.visit_counts[i]));
    }
    write_text(&out.join("lump_mesh.csv"), &mesh_csv)?;

    let mut assign_csv = String::from("step,mesh_index\n");
    for (t, a) in lump.assignments.iter().enumerate() {
        assign_csv.push_str(&format!("{t},{a}\n"));
    }
    write_text(&out.join("lump_assignments.csv"), &assign_csv)?;
    println!(
        "lumped {} observed states onto {} mesh points (d_tr = {d_tr})",
        states.len(),
        lump.mesh.len() - 1
    );
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axes_specs_parse() {
        assert_eq!(parse_axes("0,2,3").unwrap(), vec![0, 2, 3]);
        assert_eq!(parse_axes(" 1 , 4 ").unwrap(), vec![1, 4]);
        assert!(parse_axes("a,b").is_err());
    }

    #[test]
    fn json_and_csv_infinity_rendering() {
        assert_eq!(json_f64(f64::INFINITY), Value::String("inf".into()));
        assert_eq!(json_f64(2.5), serde_json::json!(2.5));
        assert_eq!(csv_f64(f64::INFINITY), "inf");
        assert_eq!(csv_f64(1.5), "1.5");
    }

    #[test]
    fn trajectory_reader_skips_headers_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        std::fs::write(&path, "# comment\nx,y\n1.0,2.0\n3.0,4.0\n").unwrap();
        let states = read_trajectory(&path).unwrap();
        assert_eq!(states.len(), 2);
        assert_eq!(states[1].coords(), &[3.0, 4.0]);
    }
}
