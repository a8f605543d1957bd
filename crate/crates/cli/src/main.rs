//! `hypnet`: configuration ingestion, subcommand dispatch, and report and
//! trajectory emission for hyperbolic systems on metric graphs.
//!
//! Exit codes: 0 on success, 1 when `--strict` is set and a check reports a
//! certified failure, 2 on input errors.

use clap::{Args, Parser, Subcommand, ValueEnum};
use hypnet_core::config::{self, ConfigDocument, SimulationSection};
use hypnet_core::evolve::{
    assemble_discrete_generator, simulate, Method, SimOptions, Trajectory,
};
use hypnet_core::models;
use hypnet_core::qualinv::{check_property, DynamicVerdict, ProbeOptions, QualProperty, StaticVerdict};
use hypnet_core::resolvent::{apply_a, pair_norm_d, solve_a0};
use hypnet_core::state::{random_domain_state, StateVector};
use hypnet_core::wellposed::{
    adjoint_cone_check, boundary_form, classify, cone_check, ConeMode, Verdict,
};
use hypnet_core::HyperbolicSystem;
use ndarray::Array2;
use ndarray_linalg::c64;
use rand::SeedableRng;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "hypnet", version, about = "verification and simulation for hyperbolic systems on metric graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// exit 1 on certified-failure verdicts
    #[arg(long, global = true, default_value_t = false)]
    strict: bool,
    /// output directory for artifacts (defaults to the current directory)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// tolerance overrides (CLI > config > defaults)
    #[arg(long)]
    tol_sym: Option<f64>,
    #[arg(long)]
    tol_det: Option<f64>,
    #[arg(long)]
    tol_sub: Option<f64>,
    #[arg(long)]
    tol_rank: Option<f64>,
    #[arg(long)]
    tol_eig: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Rk4,
    Expm,
}

#[derive(Clone, Copy, ValueEnum)]
enum PropertyArg {
    Real,
    Positive,
    Linf,
}

#[derive(Subcommand)]
enum Command {
    /// validate the standing assumptions and emit the report
    Check {
        config: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// run the well-posedness certificates and emit the classification report
    Classify {
        config: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
        /// additionally check the theorem cone at this shift
        #[arg(long)]
        lambda: Option<f64>,
        /// additionally check the adjoint cone at this shift
        #[arg(long)]
        mu: Option<f64>,
    },
    /// solve the stationary boundary problem for sampled right-hand sides
    Resolvent {
        config: PathBuf,
        /// directory with f_<edge>.csv files and an optional g.json
        #[arg(long)]
        rhs: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// evolve the coupled system and emit trajectory and energy CSV files
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        t_final: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long)]
        cells: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        outputs: Option<usize>,
    },
    /// qualitative property certificates and falsification probes
    Qual {
        config: PathBuf,
        #[arg(long, value_enum)]
        property: PropertyArg,
        #[command(flatten)]
        common: CommonOpts,
        /// number of random probe trials (0 disables the dynamic probe)
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        cells: Option<usize>,
        #[arg(long)]
        t_final: Option<f64>,
    },
    /// list the built-in model presets or dump one as a config document
    Models {
        #[command(subcommand)]
        action: ModelsAction,
    },
}

#[derive(Subcommand)]
enum ModelsAction {
    List,
    Dump {
        name: String,
        /// JSON object with model parameters
        #[arg(long, default_value = "{}")]
        params: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    hypnet_core::linalg::ensure_deterministic_blas();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn load_system(
    path: &Path,
    common: &CommonOpts,
) -> anyhow::Result<(HyperbolicSystem, ConfigDocument, Vec<String>)> {
    let text = fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    let mut doc = config::parse(&text)?;
    // CLI tolerance overrides take precedence over the config section
    let mut tols = doc.tolerances.unwrap_or_default();
    if let Some(v) = common.tol_sym {
        tols.sym = Some(v);
    }
    if let Some(v) = common.tol_det {
        tols.det = Some(v);
    }
    if let Some(v) = common.tol_sub {
        tols.sub = Some(v);
    }
    if let Some(v) = common.tol_rank {
        tols.rank = Some(v);
    }
    if let Some(v) = common.tol_eig {
        tols.eig = Some(v);
    }
    doc.tolerances = Some(tols);
    let (system, warnings) = config::to_system(&doc)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    Ok((system, doc, warnings))
}

fn out_dir(common: &CommonOpts) -> anyhow::Result<PathBuf> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_json(dir: &Path, name: &str, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(dir.join(name), &text)?;
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Check { config, common } => {
            let (system, _, _) = load_system(&config, &common)?;
            let report = system.validate_assumptions();
            let dir = out_dir(&common)?;
            write_json(&dir, "assumptions.json", &report)?;
            if !report.passed {
                for item in report.items.iter().filter(|i| !i.passed) {
                    eprintln!(
                        "assumption failed: {} (witness {:.3e}, at {})",
                        item.name,
                        item.witness,
                        item.location.as_deref().unwrap_or("-")
                    );
                }
                return Ok(ExitCode::from(2));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Classify {
            config,
            common,
            lambda,
            mu,
        } => {
            let (system, _, _) = load_system(&config, &common)?;
            let report = classify(&system);
            let dir = out_dir(&common)?;
            let mut value = serde_json::to_value(&report)?;
            if lambda.is_some() || mu.is_some() {
                let mut shift_checks = Vec::new();
                for site in system.sites() {
                    let label = site.id.label(&system.graph);
                    if let Some(l) = lambda {
                        let vc = system.condition(&site);
                        let mut form = boundary_form(&system, &site);
                        form = form - vc.q.mapv(|z| z * l);
                        let res = cone_check(&form, &vc.y, ConeMode::Nonpositive, system.tol.eig);
                        shift_checks.push(serde_json::json!({
                            "site": label, "kind": "lambda", "shift": l,
                            "holds": res.holds, "extremal_value": res.extremal_value,
                        }));
                    }
                    if let Some(m) = mu {
                        let res = adjoint_cone_check(&system, &site, m, ConeMode::Nonpositive);
                        shift_checks.push(serde_json::json!({
                            "site": label, "kind": "mu", "shift": m,
                            "holds": res.holds, "extremal_value": res.extremal_value,
                        }));
                    }
                }
                value["requested_shift_checks"] = serde_json::Value::Array(shift_checks);
            }
            let text = serde_json::to_string_pretty(&value)?;
            fs::write(dir.join("classification.json"), &text)?;
            println!("{text}");
            if common.strict && report.verdict == Verdict::Inconclusive {
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Resolvent {
            config,
            rhs,
            common,
        } => {
            let (system, _, _) = load_system(&config, &common)?;
            let (f, g) = read_rhs(&system, &rhs)?;
            let dir = out_dir(&common)?;
            let state = solve_a0(&system, &f, &g)?;
            write_solution_csv(&system, &state, &dir)?;
            let (edge_part, vertex_part) = apply_a(&system, &state)?;
            let mut residual2 = 0.0f64;
            for (ei, edge) in system.graph.edges().iter().enumerate() {
                let n = edge_part[ei].nrows() - 1;
                let h = edge.length / n as f64;
                for i in 0..=n {
                    let w = if i == 0 || i == n { 0.5 * h } else { h };
                    for comp in 0..edge.fiber_dim {
                        let d = edge_part[ei][[i, comp]] - f[ei][[i, comp]];
                        residual2 += w * d.norm_sqr();
                    }
                }
            }
            for (si, gpart) in g.iter().enumerate() {
                let d = &vertex_part[si] - gpart;
                residual2 += d.iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
            let summary = serde_json::json!({
                "residual": residual2.sqrt(),
                "relative_residual": residual2.sqrt() / pair_norm_d(&system, &f, &g).max(1e-300),
            });
            write_json(&dir, "resolvent_summary.json", &summary)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            config,
            common,
            t_final,
            dt,
            method,
            cells,
            seed,
            outputs,
        } => {
            let (system, doc, _) = load_system(&config, &common)?;
            let sim = doc.simulation.unwrap_or_default();
            let sim = SimulationSection {
                cells: cells.unwrap_or(sim.cells),
                t_final: t_final.unwrap_or(sim.t_final),
                dt: dt.or(sim.dt),
                method: method
                    .map(|m| match m {
                        MethodArg::Rk4 => "rk4".to_string(),
                        MethodArg::Expm => "expm".to_string(),
                    })
                    .unwrap_or(sim.method),
                outputs: outputs.unwrap_or(sim.outputs),
                seed: seed.unwrap_or(sim.seed),
            };
            let n_cells = vec![sim.cells; system.graph.edge_count()];
            let gen = assemble_discrete_generator(&system, &n_cells)?;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(sim.seed);
            let initial = random_domain_state(&system, &n_cells, &mut rng);
            let opts = SimOptions {
                t_final: sim.t_final,
                method: match sim.method.as_str() {
                    "rk4" => Method::Rk4,
                    _ => Method::Expm,
                },
                dt: sim.dt,
                n_outputs: sim.outputs,
                cfl: 0.4,
            };
            let traj = simulate(&system, &gen, &initial, &opts)?;
            if traj.initial_projection_residual > system.tol.proj {
                eprintln!(
                    "warning: initial data projected onto the constraints (residual {:.3e})",
                    traj.initial_projection_residual
                );
            }
            let dir = out_dir(&common)?;
            write_trajectory_csv(&system, &traj, &dir)?;
            println!(
                "simulated to t = {} ({} outputs); energy {:.6e} -> {:.6e}",
                sim.t_final,
                traj.times.len() - 1,
                traj.energies.first().unwrap(),
                traj.energies.last().unwrap()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Qual {
            config,
            property,
            common,
            trials,
            seed,
            cells,
            t_final,
        } => {
            let (system, _, _) = load_system(&config, &common)?;
            let prop = match property {
                PropertyArg::Real => QualProperty::Real,
                PropertyArg::Positive => QualProperty::Positive,
                PropertyArg::Linf => QualProperty::LinfContractive,
            };
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let opts = ProbeOptions {
                trials,
                t_final: t_final.unwrap_or(1.0),
                n_cells: cells.unwrap_or(64),
                threshold: 1e-6,
            };
            let probe = if trials > 0 {
                Some((&opts, &mut rng))
            } else {
                None
            };
            let report = check_property(&system, prop, probe)?;
            let dir = out_dir(&common)?;
            write_json(&dir, "qual_report.json", &report)?;
            let failed = report.static_verdict == StaticVerdict::NotCertified
                || matches!(report.dynamic_verdict, Some(DynamicVerdict::Violated { .. }));
            if common.strict && failed {
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Models { action } => match action {
            ModelsAction::List => {
                let listing = models::list_models();
                println!("{}", serde_json::to_string_pretty(&listing)?);
                Ok(ExitCode::SUCCESS)
            }
            ModelsAction::Dump { name, params, out } => {
                let params: serde_json::Value = serde_json::from_str(&params)?;
                let preset = models::instantiate(&name, &params)?;
                let doc = config::from_system(&preset.system);
                let text = config::render(&doc);
                match out {
                    Some(path) => fs::write(&path, &text)?,
                    None => println!("{text}"),
                }
                Ok(ExitCode::SUCCESS)
            }
        },
    }
}

/// Read per-edge right-hand sides `f_<edge>.csv` (columns `x, re_i, im_i` per
/// component) and the optional per-site boundary datum `g.json`.
fn read_rhs(
    sys: &HyperbolicSystem,
    dir: &Path,
) -> anyhow::Result<(Vec<Array2<c64>>, Vec<ndarray::Array1<c64>>)> {
    let mut f = Vec::with_capacity(sys.graph.edge_count());
    for edge in sys.graph.edges() {
        let path = dir.join(format!("f_{}.csv", edge.id));
        let text = fs::read_to_string(&path)
            .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        let mut rows = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (ln == 0 && line.starts_with("x,")) {
                continue;
            }
            let cols: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| anyhow::anyhow!("{}:{}: {e}", path.display(), ln + 1))?;
            if cols.len() != 1 + 2 * edge.fiber_dim {
                anyhow::bail!(
                    "{}:{}: expected {} columns, got {}",
                    path.display(),
                    ln + 1,
                    1 + 2 * edge.fiber_dim,
                    cols.len()
                );
            }
            rows.push(cols);
        }
        if rows.len() < 2 {
            anyhow::bail!("{}: needs at least 2 sample rows", path.display());
        }
        let mut arr = Array2::zeros((rows.len(), edge.fiber_dim));
        for (i, cols) in rows.iter().enumerate() {
            for comp in 0..edge.fiber_dim {
                arr[[i, comp]] = c64::new(cols[1 + 2 * comp], cols[2 + 2 * comp]);
            }
        }
        f.push(arr);
    }
    let sites = sys.sites();
    let mut g: Vec<ndarray::Array1<c64>> = sites
        .iter()
        .map(|s| ndarray::Array1::zeros(s.dim()))
        .collect();
    let g_path = dir.join("g.json");
    if g_path.exists() {
        let text = fs::read_to_string(&g_path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        for (si, site) in sites.iter().enumerate() {
            let label = site.id.label(&sys.graph);
            if let Some(entries) = value.get(&label).and_then(|v| v.as_array()) {
                if entries.len() != site.dim() {
                    anyhow::bail!("g.json entry {label} must have {} components", site.dim());
                }
                for (i, entry) in entries.iter().enumerate() {
                    let pair = entry
                        .as_array()
                        .filter(|a| a.len() == 2)
                        .ok_or_else(|| anyhow::anyhow!("g.json {label}[{i}] must be [re, im]"))?;
                    g[si][i] = c64::new(
                        pair[0].as_f64().unwrap_or(0.0),
                        pair[1].as_f64().unwrap_or(0.0),
                    );
                }
            }
        }
    }
    Ok((f, g))
}

fn write_solution_csv(
    sys: &HyperbolicSystem,
    state: &StateVector,
    dir: &Path,
) -> anyhow::Result<()> {
    for (ei, edge) in sys.graph.edges().iter().enumerate() {
        let vals = &state.edge_values[ei];
        let n = vals.nrows() - 1;
        let mut text = String::from("x");
        for comp in 0..edge.fiber_dim {
            text.push_str(&format!(",re_{comp},im_{comp}"));
        }
        text.push('\n');
        for i in 0..=n {
            let x = edge.length * i as f64 / n as f64;
            text.push_str(&format!("{x:.12e}"));
            for comp in 0..edge.fiber_dim {
                let z = vals[[i, comp]];
                text.push_str(&format!(",{:.12e},{:.12e}", z.re, z.im));
            }
            text.push('\n');
        }
        fs::write(dir.join(format!("solution_{}.csv", edge.id)), text)?;
    }
    Ok(())
}

fn write_trajectory_csv(
    sys: &HyperbolicSystem,
    traj: &Trajectory,
    dir: &Path,
) -> anyhow::Result<()> {
    // energy file: t, E, constraint_residual
    let mut energy = String::from("t,E,constraint_residual\n");
    for (k, &t) in traj.times.iter().enumerate() {
        energy.push_str(&format!(
            "{t:.12e},{:.12e},{:.12e}\n",
            traj.energies[k], traj.constraint_residuals[k]
        ));
    }
    fs::write(dir.join("energy.csv"), energy)?;

    // per-edge files: t, x, components
    for (ei, edge) in sys.graph.edges().iter().enumerate() {
        let mut text = String::from("t,x");
        for comp in 0..edge.fiber_dim {
            text.push_str(&format!(",re_{comp},im_{comp}"));
        }
        text.push('\n');
        for (k, &t) in traj.times.iter().enumerate() {
            let vals = &traj.snapshots[k].edge_values[ei];
            let n = vals.nrows() - 1;
            for i in 0..=n {
                let x = edge.length * i as f64 / n as f64;
                text.push_str(&format!("{t:.12e},{x:.12e}"));
                for comp in 0..edge.fiber_dim {
                    let z = vals[[i, comp]];
                    text.push_str(&format!(",{:.12e},{:.12e}", z.re, z.im));
                }
                text.push('\n');
            }
        }
        fs::write(dir.join(format!("edge_{}.csv", edge.id)), text)?;
    }

    // boundary file: t, per-site components
    let sites = sys.sites();
    let mut header = String::from("t");
    for site in &sites {
        let label = site.id.label(&sys.graph);
        for i in 0..site.dim() {
            header.push_str(&format!(",{label}_{i}_re,{label}_{i}_im"));
        }
    }
    header.push('\n');
    let mut boundary = header;
    for (k, &t) in traj.times.iter().enumerate() {
        boundary.push_str(&format!("{t:.12e}"));
        for (si, site) in sites.iter().enumerate() {
            let x = &traj.snapshots[k].boundary[si];
            for i in 0..site.dim() {
                boundary.push_str(&format!(",{:.12e},{:.12e}", x[i].re, x[i].im));
            }
        }
        boundary.push('\n');
    }
    fs::write(dir.join("boundary.csv"), boundary)?;
    Ok(())
}
