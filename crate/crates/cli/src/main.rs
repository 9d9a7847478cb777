//! `cts`: generate, equilibrate, analyse and deploy clustered cable nets.

mod manifest;
mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cts_core::assembly::member_lengths;
use cts_core::deployment::rest_length_for;
use cts_core::fixtures::{self, GenerateSpec, RestLengthRule};
use cts_core::io::{self, parse_assignments};
use cts_core::scenario::{ControlMode, DeployConfig, ErrorSpec};
use cts_core::statics::{form_find, free_node_load, modal_analysis, prestress_design};
use cts_core::{AngleSpacing, CableNetParams, Model, SolverOptions};
use log::{info, warn};
use serde_json::json;

use manifest::Manifest;
use report::Table;

#[derive(Parser)]
#[command(name = "cts", version, about = "Clustered tensegrity cable net toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a saddle cable net and write its model file.
    Generate(GenerateArgs),
    /// Find the equilibrium of a model under its rest lengths and loads.
    Formfind(FormfindArgs),
    /// Design the prestress of an equilibrated model.
    Prestress(PrestressArgs),
    /// Natural frequencies and stiffness eigenvalues.
    Modal(ModalArgs),
    /// Plan and execute a deployment, writing CSV histories.
    Deploy(DeployArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Fixture {
    SaddlePaper,
    SaddleLab,
}

#[derive(Args)]
struct GenerateArgs {
    /// Start from a shipped fixture; other flags are ignored.
    #[arg(long, value_enum, conflicts_with = "spec")]
    fixture: Option<Fixture>,
    /// Generator spec as JSON.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value = "net")]
    name: String,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long, default_value_t = 1)]
    skew: usize,
    #[arg(long)]
    rx: Option<f64>,
    #[arg(long)]
    ry: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    /// Space boundary nodes by equal arc length instead of equal angle.
    #[arg(long)]
    arc_length: bool,
    /// Young's modulus, Pa.
    #[arg(long, default_value_t = 1.6e11)]
    modulus: f64,
    /// Cable cross-section, m².
    #[arg(long, default_value_t = 1e-4)]
    area: f64,
    /// kg/m³.
    #[arg(long, default_value_t = 7870.0)]
    density: f64,
    /// Initial tension of every cluster at the generated shape, N.
    #[arg(long, default_value_t = 1e3, conflicts_with = "rest_lengths")]
    tension: f64,
    /// Explicit cluster rest lengths, comma separated, m.
    #[arg(long, value_delimiter = ',')]
    rest_lengths: Option<Vec<f64>>,
    /// Pulley weight at free nodes, N.
    #[arg(long, default_value_t = 0.0)]
    free_pulley_weight: f64,
    /// Pulley weight at fixed nodes, N.
    #[arg(long, default_value_t = 0.0)]
    fixed_pulley_weight: f64,
    /// Apply standard gravity along −z.
    #[arg(long)]
    gravity: bool,
    /// Damping ratio ξ.
    #[arg(long, default_value_t = 0.0)]
    damping: f64,
    /// Replace the generated shape by the equilibrium of its rest lengths.
    #[arg(long)]
    settle: bool,
    /// Output model file; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FormfindArgs {
    model: PathBuf,
    /// JSON result file.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Write the model with its configuration replaced by the equilibrium.
    #[arg(long)]
    write_model: Option<PathBuf>,
}

#[derive(Args)]
struct PrestressArgs {
    model: PathBuf,
    /// Designed cluster tensions, e.g. `ODC=1e4`.
    #[arg(long)]
    design: String,
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Write the model with the rest lengths realising the design.
    #[arg(long)]
    write_model: Option<PathBuf>,
}

#[derive(Args)]
struct ModalArgs {
    model: PathBuf,
    /// Number of modes to report.
    #[arg(long, default_value_t = 4)]
    modes: usize,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Open,
    Closed,
}

#[derive(Args)]
struct DeployArgs {
    /// Model file; not needed with --manifest.
    #[arg(required_unless_present = "manifest")]
    model: Option<PathBuf>,
    /// Re-execute the run recorded in a manifest.
    #[arg(long, conflicts_with_all = ["model", "plan"])]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    substeps: usize,
    /// Actuated clusters, comma separated.
    #[arg(long, value_delimiter = ',')]
    clusters: Vec<String>,
    /// Total rest-length reduction, one value or one per cluster, m.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    delta: Vec<f64>,
    /// Prescribed tensions at every state, e.g. `ODC=1e4`.
    #[arg(long)]
    redesign: Option<String>,
    #[arg(long, value_enum, default_value = "open")]
    mode: ModeArg,
    /// Cluster measured by the closed loop.
    #[arg(long, default_value = "HC")]
    feedback: String,
    /// Relative tension tolerance of the closed loop.
    #[arg(long, default_value_t = 1e-3)]
    tolerance: f64,
    /// Integrate the equations of motion over this ramp duration, s.
    #[arg(long)]
    dynamics: Option<f64>,
    /// Time step of a dynamic run, s.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, default_value_t = 1)]
    record_every: usize,
    /// Injected errors: `bias=0.01` (actuated clusters), `bias.DC=0.01`,
    /// `noise=1e-3`, `offset=1e-3`, `seed=7`.
    #[arg(long)]
    error: Option<String>,
    /// Use this plan file instead of designing one.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CTS_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Formfind(a) => formfind(a),
        Command::Prestress(a) => prestress(a),
        Command::Modal(a) => modal(a),
        Command::Deploy(a) => deploy(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<cts_core::Error>() {
        Some(core) => core.exit_code() as u8,
        None => 2,
    }
}

fn load_model(path: &Path) -> Result<Model> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    io::model_from_json(&text).with_context(|| format!("loading {}", path.display()))
}

fn write_json(path: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    if let Some(path) = path {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn named(model: &Model, values: impl IntoIterator<Item = f64>) -> BTreeMap<String, f64> {
    model.topology.cluster_names().into_iter().zip(values).collect()
}

fn generate(args: GenerateArgs) -> Result<()> {
    let spec = if let Some(f) = args.fixture {
        match f {
            Fixture::SaddlePaper => fixtures::saddle_paper_spec(),
            Fixture::SaddleLab => fixtures::saddle_lab_spec(),
        }
    } else if let Some(path) = &args.spec {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| cts_core::Error::Validation(format!("generator spec: {e}")))?
    } else {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| cts_core::Error::Validation(format!("--{name} is required")))
        };
        GenerateSpec {
            name: args.name.clone(),
            params: CableNetParams {
                p: args.p.ok_or_else(|| cts_core::Error::Validation("--p is required".into()))?,
                q: args.q.ok_or_else(|| cts_core::Error::Validation("--q is required".into()))?,
                rx: need(args.rx, "rx")?,
                ry: need(args.ry, "ry")?,
                a: need(args.a, "a")?,
                b: need(args.b, "b")?,
                c: need(args.c, "c")?,
                angle_spacing: if args.arc_length {
                    AngleSpacing::Arclength
                } else {
                    AngleSpacing::Parametric
                },
                skew: args.skew,
            },
            modulus: args.modulus,
            area: args.area,
            density: args.density,
            rest_length: match &args.rest_lengths {
                Some(v) => RestLengthRule::Explicit(v.clone()),
                None => RestLengthRule::InitialTension(args.tension),
            },
            free_pulley_weight: args.free_pulley_weight,
            fixed_pulley_weight: args.fixed_pulley_weight,
            gravity: if args.gravity {
                [0.0, 0.0, -fixtures::STANDARD_GRAVITY]
            } else {
                [0.0; 3]
            },
            damping_coeff: args.damping,
            options: SolverOptions::default(),
        }
    };
    let mut model = fixtures::generate(&spec)?;
    if args.settle || args.fixture.is_some() {
        fixtures::settle(&mut model)?;
    }
    let text = io::model_to_json(&model)?;
    match &args.out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            let mut t = Table::new(["model", "nodes", "members", "clusters"]);
            t.row([
                model.name.clone(),
                model.topology.node_count().to_string(),
                model.topology.member_count().to_string(),
                model.topology.cluster_names().join(","),
            ]);
            print!("{t}");
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn formfind(args: FormfindArgs) -> Result<()> {
    let mut model = load_model(&args.model)?;
    let res = form_find(&model, &model.config, &model.spec.rest_lengths())?;
    for r in &res.history {
        info!(
            "iteration {} residual {:.3e} step {:.3e} scale {}",
            r.iteration, r.residual, r.step_norm, r.step_scale
        );
    }
    let mut t = Table::new(["cluster", "tension_N", "rest_length_m"]);
    for (name, (tc, l0)) in model
        .topology
        .cluster_names()
        .into_iter()
        .zip(res.tensions.iter().zip(res.rest_lengths.iter()))
    {
        t.row([name, format!("{tc:.6e}"), format!("{l0:.6}")]);
    }
    println!(
        "converged in {} iterations, residual {:.3e} N (tolerance {:.3e} N)",
        res.iterations, res.residual, res.tolerance
    );
    print!("{t}");
    write_json(
        args.out.as_deref(),
        &json!({
            "converged": res.converged,
            "iterations": res.iterations,
            "residual": res.residual,
            "tolerance": res.tolerance,
            "tensions": named(&model, res.tensions.iter().copied()),
            "nodes": res.config.points(),
            "history": res.history,
        }),
    )?;
    if let Some(path) = &args.write_model {
        model.config = res.config;
        io::write_model(path, &model)?;
    }
    Ok(())
}

fn cluster_targets(model: &Model, text: &str, flag: &str) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut idx = Vec::new();
    let mut val = Vec::new();
    for (name, v) in parse_assignments(text)? {
        let c = model.topology.cluster_index(&name).ok_or_else(|| {
            cts_core::Error::Validation(format!(
                "{flag}: unknown cluster `{name}` (model has {})",
                model.topology.cluster_names().join(", ")
            ))
        })?;
        idx.push(c);
        val.push(v);
    }
    Ok((idx, val))
}

fn prestress(args: PrestressArgs) -> Result<()> {
    let mut model = load_model(&args.model)?;
    let (designed, targets) = cluster_targets(&model, &args.design, "--design")?;
    let rest = model.spec.rest_lengths();
    let w_a = free_node_load(&model, &model.config, &rest)?;
    let sol = prestress_design(&model, &model.config, &w_a, &designed, &targets)?;
    if sol.loaded {
        warn!("the free nodes are loaded; a self-equilibrated prestress needs zero load");
    }
    let geom = member_lengths(&model.topology, &model.config)?;
    let new_rest = rest_length_for(&sol.tensions, &geom.cluster_lengths, &model.spec.axial_stiffness())?;
    println!(
        "rank {} of {} clusters, {} self-stress mode(s), {} mechanism mode(s)",
        sol.rank,
        model.topology.cluster_count(),
        sol.self_stress_modes.ncols(),
        sol.mechanism_modes.ncols()
    );
    let mut t = Table::new(["cluster", "tension_N", "rest_length_m"]);
    for (name, (tc, l0)) in model
        .topology
        .cluster_names()
        .into_iter()
        .zip(sol.tensions.iter().zip(new_rest.iter()))
    {
        t.row([name, format!("{tc:.6e}"), format!("{l0:.6}")]);
    }
    print!("{t}");
    write_json(
        args.out.as_deref(),
        &json!({
            "rank": sol.rank,
            "singular_values": sol.singular_values,
            "self_stress_modes": sol.self_stress_modes.ncols(),
            "mechanism_modes": sol.mechanism_modes.ncols(),
            "tensions": named(&model, sol.tensions.iter().copied()),
            "rest_lengths": named(&model, new_rest.iter().copied()),
            "residual": sol.residual,
        }),
    )?;
    if let Some(path) = &args.write_model {
        model.spec.rest_length = new_rest.iter().copied().collect();
        io::write_model(path, &model)?;
    }
    Ok(())
}

fn modal(args: ModalArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let res = modal_analysis(&model, &model.config, &model.spec.rest_lengths(), args.modes)?;
    let mut t = Table::new(["mode", "frequency_Hz", "stiffness_eig_N_per_m"]);
    for (i, (f, k)) in res.frequencies.iter().zip(&res.stiffness_eigenvalues).enumerate() {
        t.row([(i + 1).to_string(), format!("{f:.6}"), format!("{k:.6e}")]);
    }
    print!("{t}");
    let shapes: Vec<Vec<f64>> = res
        .mode_shapes
        .column_iter()
        .map(|c| c.iter().copied().collect())
        .collect();
    write_json(
        args.out.as_deref(),
        &json!({
            "frequencies_hz": res.frequencies,
            "omega_squared": res.omega_squared,
            "stiffness_eigenvalues": res.stiffness_eigenvalues,
            "mode_shapes": shapes,
        }),
    )
}

fn error_spec(model: &Model, clusters: &[String], text: &str) -> Result<ErrorSpec> {
    let mut spec = ErrorSpec::default();
    for (key, v) in parse_assignments(text)? {
        match key.as_str() {
            "bias" => {
                for c in clusters {
                    spec.bias.insert(c.clone(), v);
                }
            }
            "noise" => spec.noise = v,
            "offset" => spec.offset = v,
            "seed" => {
                if v < 0.0 || v.fract() != 0.0 {
                    bail!(cts_core::Error::Validation(format!("--error seed must be a non-negative integer, found {v}")));
                }
                spec.seed = v as u64;
            }
            other => match other.strip_prefix("bias.") {
                Some(name) if model.topology.cluster_index(name).is_some() => {
                    spec.bias.insert(name.to_string(), v);
                }
                _ => bail!(cts_core::Error::Validation(format!("--error: unknown key `{other}`"))),
            },
        }
    }
    Ok(spec)
}

fn deploy(args: DeployArgs) -> Result<()> {
    let (model, config, plan_text) = match &args.manifest {
        Some(path) => {
            let m = Manifest::read(path)?;
            (m.model()?, m.deploy, m.plan)
        }
        None => {
            let model = load_model(args.model.as_deref().expect("clap requires a model"))?;
            let mut config = DeployConfig::new(args.substeps, args.clusters.clone(), args.delta.clone());
            if let Some(r) = &args.redesign {
                config.redesign = parse_assignments(r)?;
            }
            config.mode = match args.mode {
                ModeArg::Open => ControlMode::Open,
                ModeArg::Closed => ControlMode::Closed,
            };
            config.feedback = args.feedback.clone();
            config.tolerance = args.tolerance;
            config.dynamics = args.dynamics;
            config.dt = args.dt;
            config.record_every = args.record_every;
            if let Some(e) = &args.error {
                config.error = error_spec(&model, &args.clusters, e)?;
            }
            let plan_text = match &args.plan {
                Some(p) => Some(fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?),
                None => None,
            };
            (model, config, plan_text)
        }
    };
    let plan = match &plan_text {
        Some(text) => io::plan_from_json(&model, text)?,
        None => config.plan(&model)?,
    };
    info!("plan with {} substeps", plan.len());
    let history = config.execute(&model, &plan)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    fs::write(args.out.join("plan.json"), io::plan_to_json(&model, &plan)?)?;
    io::write_history(&args.out, &model, &history)?;
    Manifest::new(&model, &config, plan_text).write(&args.out.join("manifest.json"))?;

    let last = history.last();
    let mut t = Table::new(["cluster", "final_tension_N", "planned_tension_N", "rest_length_m"]);
    let target = plan.substeps.last().unwrap_or(&plan.initial);
    for (c, name) in model.topology.cluster_names().into_iter().enumerate() {
        t.row([
            name,
            format!("{:.6e}", last.tensions[c]),
            format!("{:.6e}", target.tensions[c]),
            format!("{:.6}", last.rest_lengths[c]),
        ]);
    }
    println!("{} records written to {}", history.records.len(), args.out.display());
    print!("{t}");
    Ok(())
}
