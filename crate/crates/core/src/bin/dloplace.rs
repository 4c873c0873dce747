//! Command-line surface of the DLO placement toolkit: planning,
//! closed-loop simulation, shape fitting, dataset generation, and SVG
//! rendering.
//!
//! Exit codes: 0 success, 1 usage/I-O/validation error, 2 domain
//! failure (planning, fitting, or an unsuccessful simulation).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dlo_placement::characterize::{fit_elastica, ObservedShape};
use dlo_placement::config::ToolConfig;
use dlo_placement::controller::{generate_corpus, run_simulation};
use dlo_placement::elastica::{eval_shape, ElasticaParams, Pose};
use dlo_placement::elliptic::Modulus;
use dlo_placement::error::Error;
use dlo_placement::io::{
    read_plan_json, read_points_csv, read_shape_csv, write_frames_csv, write_plan_json,
    write_points_csv, write_summary_json, SimSummary,
};
use dlo_placement::placement::StageIConfig;
use dlo_placement::planner::{plan_full, Stage};
use dlo_placement::render::{render_plan, shape_layer, Stroke};

#[derive(Parser)]
#[command(
    name = "dloplace",
    about = "Plan, simulate, fit, and render elastica-based DLO placement",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a three-stage placement path from a start state
    Plan(PlanArgs),
    /// Run the closed-loop controller over a plan (or a generated corpus)
    Simulate(SimulateArgs),
    /// Fit elastica parameters to an observed point CSV
    Fit(FitArgs),
    /// Generate the labelled shape dataset over the parameter grid
    DatasetGen(DatasetGenArgs),
    /// Render a plan or shape file to a deterministic SVG
    Render(RenderArgs),
}

#[derive(Args)]
struct PlanArgs {
    /// Tool configuration JSON
    #[arg(long)]
    config: PathBuf,
    /// Start state JSON: {"base": {...}, "params": {...}}
    #[arg(long)]
    start: PathBuf,
    /// Output plan JSON path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Plan JSON to execute (omit with --corpus)
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Output directory for frames CSV and summary JSON
    #[arg(long)]
    out_dir: PathBuf,
    /// Corpus mode: generate this many randomized paths and run them all
    #[arg(long)]
    corpus: Option<usize>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    config: PathBuf,
    /// Observed points CSV (JSON header line with base pose and L)
    #[arg(long)]
    points: PathBuf,
    /// Output candidate-set JSON path
    #[arg(long)]
    out: PathBuf,
    /// Multi-start budget
    #[arg(long, default_value_t = 64)]
    starts: usize,
}

#[derive(Args)]
struct DatasetGenArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory for labels.csv and per-shape point CSVs
    #[arg(long)]
    out_dir: PathBuf,
    /// Points per shape sample
    #[arg(long, default_value_t = 33)]
    samples: usize,
}

#[derive(Args)]
struct RenderArgs {
    /// Plan JSON (.json) or shape CSV (.csv)
    #[arg(long)]
    input: PathBuf,
    /// Output SVG path
    #[arg(long)]
    out: PathBuf,
    /// Shape CSVs drawn dashed on top (fitted/observed)
    #[arg(long)]
    overlay: Vec<PathBuf>,
    /// Polyline samples per rendered shape
    #[arg(long, default_value_t = 96)]
    samples: usize,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::PlanningFailed { .. }
        | Error::FitFailed(_)
        | Error::SimulationFailed(_)
        | Error::Degenerate(_) => 2,
        _ => 1,
    }
}

/// DLO_OUT_DIR, when set, re-roots every output path: directories are
/// replaced, files keep their name under the override directory.
fn override_out_dir(dir: PathBuf) -> PathBuf {
    match std::env::var_os("DLO_OUT_DIR") {
        Some(v) => PathBuf::from(v),
        None => dir,
    }
}

fn override_out_file(file: PathBuf) -> PathBuf {
    match std::env::var_os("DLO_OUT_DIR") {
        Some(v) => {
            let name = file.file_name().map(ToOwned::to_owned).unwrap_or_default();
            PathBuf::from(v).join(name)
        }
        None => file,
    }
}

fn load_config(path: &Path) -> Result<ToolConfig, Error> {
    let mut cfg = ToolConfig::load(path)?;
    // DLO_SEED, when set, overrides the configured seed
    if let Ok(seed) = std::env::var("DLO_SEED") {
        cfg.controller.seed = seed
            .parse::<u64>()
            .map_err(|e| Error::Config(format!("DLO_SEED: {e}")))?;
    }
    Ok(cfg)
}

fn cmd_plan(args: &PlanArgs) -> Result<(), Error> {
    let cfg = load_config(&args.config)?;
    let start: StageIConfig =
        serde_json::from_str(&std::fs::read_to_string(&args.start)?)?;
    let plan = plan_full(&start, &cfg.surface, cfg.direction, &cfg.grid, &cfg.stiffness)?;
    let out = override_out_file(args.out.clone());
    write_plan_json(&out, &plan)?;
    for stage in [Stage::I, Stage::II, Stage::III] {
        println!("stage {stage:?}: {} nodes", plan.stage_nodes(stage).count());
    }
    println!("total: {} nodes -> {}", plan.nodes.len(), out.display());
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Error> {
    let cfg = load_config(&args.config)?;
    let out_dir = override_out_dir(args.out_dir.clone());
    std::fs::create_dir_all(&out_dir)?;

    let plans = match (args.corpus, &args.plan) {
        (Some(n), _) => generate_corpus(
            n,
            &cfg.surface,
            cfg.direction,
            &cfg.grid,
            &cfg.stiffness,
            cfg.controller.seed,
        )?,
        (None, Some(path)) => vec![read_plan_json(path)?],
        (None, None) => {
            return Err(Error::InvalidArgument(
                "either --plan or --corpus is required".into(),
            ))
        }
    };

    let mut all_success = true;
    let mut total_frames = 0usize;
    let mut total_under = 0usize;
    let mut total_replans = 0usize;
    for (i, plan) in plans.iter().enumerate() {
        let mut run_cfg = cfg.controller;
        run_cfg.seed = cfg.controller.seed.wrapping_add(i as u64);
        let res = run_simulation(plan, &run_cfg, &cfg.stiffness, &cfg.surface)?;
        let summary = SimSummary::from_result(&res);
        let prefix = if plans.len() == 1 {
            String::new()
        } else {
            format!("run_{i:02}_")
        };
        write_frames_csv(&out_dir.join(format!("{prefix}frames.csv")), &res.frames)?;
        write_summary_json(&out_dir.join(format!("{prefix}summary.json")), &summary)?;
        all_success &= summary.success;
        total_frames += summary.frames;
        total_under += (summary.under_epsilon_rate * summary.frames as f64).round() as usize;
        total_replans += summary.replans;
        println!(
            "run {i}: {} frames, under-epsilon {:.1}%, replans {}, success {}",
            summary.frames,
            100.0 * summary.under_epsilon_rate,
            summary.replans,
            summary.success
        );
    }
    if plans.len() > 1 {
        let rate = total_under as f64 / total_frames.max(1) as f64;
        let aggregate = serde_json::json!({
            "runs": plans.len(),
            "frames": total_frames,
            "under_epsilon_rate": rate,
            "replans": total_replans,
            "success": all_success,
        });
        std::fs::write(
            out_dir.join("summary.json"),
            serde_json::to_string_pretty(&aggregate)?,
        )?;
        println!(
            "corpus: {} runs, {} frames, under-epsilon {:.1}%",
            plans.len(),
            total_frames,
            100.0 * rate
        );
    }
    if !all_success {
        return Err(Error::SimulationFailed("one or more runs did not complete".into()));
    }
    Ok(())
}

fn cmd_fit(args: &FitArgs) -> Result<(), Error> {
    let cfg = load_config(&args.config)?;
    let (points, base, length) = read_points_csv(&args.points)?;
    if (length - cfg.stiffness.length).abs() > 0.1 * cfg.stiffness.length {
        return Err(Error::InvalidArgument(format!(
            "points file declares L = {length}, config has L = {}",
            cfg.stiffness.length
        )));
    }
    let obs = ObservedShape::new(points, base, length)?;
    let set = fit_elastica(&obs, &cfg.stiffness, args.starts)?;
    let out = override_out_file(args.out.clone());
    std::fs::write(&out, serde_json::to_string_pretty(&set)?)?;
    println!(
        "{} candidate(s), best residual {:.3e}{} -> {}",
        set.candidates.len(),
        set.best().residual,
        if set.degenerate { " (degenerate)" } else { "" },
        out.display()
    );
    Ok(())
}

fn cmd_dataset_gen(args: &DatasetGenArgs) -> Result<(), Error> {
    use std::fmt::Write as _;
    let cfg = load_config(&args.config)?;
    let out_dir = override_out_dir(args.out_dir.clone());
    let shapes_dir = out_dir.join("shapes");
    std::fs::create_dir_all(&shapes_dir)?;
    let length = cfg.stiffness.length;
    let dk = cfg.grid.dk;
    let dlt = cfg.grid.d_full_period;
    // k on (0, 0.95] by dk; Ltilde on [L, 8 L] by dLtilde; both phases
    let n_k = (0.95 / dk + 1e-9).floor() as usize;
    let n_lt = (7.0 * length / dlt + 1e-9).floor() as usize + 1;
    let mut labels = String::from("id,file,k,s0,Ltilde\n");
    let mut count = 0usize;
    let base = Pose::planar(0.0, 0.0, 0.0);
    for ik in 1..=n_k {
        let k = Modulus::new(ik as f64 * dk)?;
        for ilt in 0..n_lt {
            let lt = length + ilt as f64 * dlt;
            for (phase, frac) in [(0usize, 0.25), (1usize, 0.75)] {
                let params = ElasticaParams::new(k, frac * lt, lt)?;
                let shape = eval_shape(base, &params, &cfg.stiffness, args.samples)?;
                let points: Vec<(f64, f64)> =
                    shape.samples().iter().map(|st| (st.x, st.y)).collect();
                let id = format!("k{ik:03}_lt{ilt:03}_p{phase}");
                let file = format!("shapes/{id}.csv");
                write_points_csv(&out_dir.join(&file), &points, &base, length)?;
                writeln!(labels, "{id},{file},{},{},{}", k.get(), params.s0(), lt)
                    .expect("string write");
                count += 1;
            }
        }
    }
    std::fs::write(out_dir.join("labels.csv"), labels)?;
    println!(
        "{count} shapes ({n_k} k values x {n_lt} Ltilde values x 2 phases) -> {}",
        out_dir.display()
    );
    Ok(())
}

fn cmd_render(args: &RenderArgs) -> Result<(), Error> {
    let mut overlays = Vec::new();
    for path in &args.overlay {
        overlays.push(read_shape_csv(path)?);
    }
    let svg = if args.input.extension().is_some_and(|e| e == "json") {
        let plan: dlo_placement::planner::PlanPath =
            serde_json::from_str(&std::fs::read_to_string(&args.input)?)?;
        render_plan(&plan, &plan.stiffness, args.samples, &overlays)?
    } else {
        let shape = read_shape_csv(&args.input)?;
        let mut layers = vec![shape_layer(&shape, Stroke::Solid)];
        layers.extend(overlays.iter().map(|s| shape_layer(s, Stroke::Dashed)));
        dlo_placement::render::render_document(&layers, 0.0)
    };
    let out = override_out_file(args.out.clone());
    std::fs::write(&out, svg)?;
    println!("rendered -> {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Plan(a) => cmd_plan(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::DatasetGen(a) => cmd_dataset_gen(a),
        Command::Render(a) => cmd_render(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
