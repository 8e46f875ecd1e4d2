//! Command-line front end: trajectory dumps, the adaptive multilevel
//! estimator, and the study harness (convergence tables, histograms,
//! complexity sweeps), all writing seeded, reproducible CSV/JSON.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use srn_mlmc::harness::{
    self, complexity_csv, complexity_sweep, convergence_study, histogram_pass, Method,
};
use srn_mlmc::kernels::{coupled_trajectory, LevelSpec, SLOTS_PER_REACTION};
use srn_mlmc::mlmc::{mlmc_estimate, MlmcConfig};
use srn_mlmc::models::{self, NamedModel};
use srn_mlmc::network::{ModelFile, Observable, ReactionNetwork, StateVector};
use srn_mlmc::rng::path_streams;

#[derive(Parser)]
#[command(
    name = "srn-mlmc",
    version,
    about = "Monte Carlo toolkit for stochastic reaction networks: exact simulation, \
             coupled tau-leaping with importance sampling, and multilevel estimation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Dump one coupled fine/coarse trajectory as CSV
    Simulate {
        /// Bundled model name (decay|gene|mm) or a model JSON file
        #[arg(long, default_value = "decay")]
        model: String,
        /// Observable: proj:<species-index> or linear:<w0,w1,...>
        #[arg(long)]
        observable: Option<String>,
        /// Fine grid level (>= 1)
        #[arg(long, default_value_t = 3)]
        level: u32,
        /// Boost exponent in [0, 1); 0 disables the measure change
        #[arg(long, default_value_t = 0.75)]
        delta: f64,
        #[arg(long, default_value_t = 1.0)]
        dt0: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Replicate index within the seed's stream family
        #[arg(long, default_value_t = 0)]
        replicate: u64,
        /// Output CSV path
        #[arg(long, default_value = "trajectory.csv")]
        out: PathBuf,
    },
    /// Run the adaptive multilevel estimator; writes levels.csv and result.json
    Mlmc {
        /// Bundled model name (decay|gene|mm) or a model JSON file
        #[arg(long)]
        model: String,
        /// Observable: proj:<species-index> or linear:<w0,w1,...>
        #[arg(long)]
        observable: Option<String>,
        /// Target root-mean-square accuracy
        #[arg(long)]
        tol: f64,
        /// Boost exponent in [0, 1)
        #[arg(long, default_value_t = 0.75)]
        delta: f64,
        /// Enable the importance-sampled coupling (default)
        #[arg(long = "is", overrides_with = "no_is")]
        is: bool,
        /// Disable the importance-sampled coupling
        #[arg(long = "no-is")]
        no_is: bool,
        /// Coarsest level; defaults to the bundled model's choice
        #[arg(long)]
        l0: Option<u32>,
        #[arg(long, default_value_t = 1.0)]
        dt0: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 25)]
        max_level: u32,
        /// Output directory
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Per-level statistics and fitted rates across measure-change settings
    Convergence {
        /// Restrict to one bundled model (default: all three)
        #[arg(long)]
        model: Option<String>,
        /// Coupled pairs per level (default: desk scale)
        #[arg(long)]
        m: Option<u64>,
        /// Use the full-scale sample count
        #[arg(long)]
        full: bool,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Deep-level coupling and boosted-jump histograms
    Histogram {
        /// Restrict to one bundled model (default: all three)
        #[arg(long)]
        model: Option<String>,
        /// Level to probe; defaults to the model's deepest study level
        #[arg(long)]
        level: Option<u32>,
        /// Boost exponent in [0, 1)
        #[arg(long, default_value_t = 0.75)]
        delta: f64,
        /// Sample the plain coupling instead of the boosted one
        #[arg(long = "no-is")]
        no_is: bool,
        #[arg(long)]
        m: Option<u64>,
        #[arg(long)]
        full: bool,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Work versus tolerance for SSA MC, plain MLMC, and MLMC with IS
    Complexity {
        /// Bundled model name
        #[arg(long, default_value = "gene")]
        model: String,
        /// Comma-separated tolerance list
        #[arg(long, default_value = "0.08,0.04,0.02,0.01")]
        tols: String,
        /// Comma-separated methods from {mc_ssa, mlmc, mlmc_is}
        #[arg(long, default_value = "mlmc,mlmc_is")]
        methods: String,
        /// Boost exponent used by mlmc_is
        #[arg(long, default_value_t = 0.75)]
        delta: f64,
        /// Independent repetitions per (tol, method)
        #[arg(long, default_value_t = 1)]
        runs: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 25)]
        max_level: u32,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.cmd {
        Cmd::Simulate { model, observable, level, delta, dt0, seed, replicate, out } => {
            let (name, net, x0, t_final, default_g, _) = load_model(&model)?;
            let g = resolve_observable(observable.as_deref(), &net, default_g)?;
            let fine = LevelSpec::new(level, dt0).map_err(|e| e.to_string())?;
            let n_streams = (SLOTS_PER_REACTION * net.num_reactions()) as u32;
            let mut streams = path_streams(seed, level, replicate, n_streams);
            let traj = coupled_trajectory(&net, &x0, t_final, &fine, &g, delta, &mut streams)
                .map_err(|e| e.to_string())?;
            let mut csv = format!(
                "# seed={seed} model={name} delta={delta} version={} level={level} replicate={replicate}\n",
                env!("CARGO_PKG_VERSION")
            );
            csv.push_str("t");
            for s in net.species_names() {
                let _ = write!(csv, ",{s}_fine");
            }
            for s in net.species_names() {
                let _ = write!(csv, ",{s}_coarse");
            }
            csv.push_str(",cumulative_log_likelihood\n");
            for i in 0..traj.times.len() {
                let _ = write!(csv, "{}", traj.times[i]);
                for v in &traj.fine_states[i] {
                    let _ = write!(csv, ",{v}");
                }
                for v in &traj.coarse_states[i] {
                    let _ = write!(csv, ",{v}");
                }
                let _ = writeln!(csv, ",{}", traj.cumulative_log_likelihood[i]);
            }
            write_file(&out, &csv)?;
            println!(
                "wrote {} ({} grid points, g_fine={}, g_coarse={}, log_likelihood={})",
                out.display(),
                traj.times.len(),
                traj.sample.g_fine,
                traj.sample.g_coarse,
                traj.sample.log_likelihood
            );
            Ok(())
        }
        Cmd::Mlmc {
            model,
            observable,
            tol,
            delta,
            is: _,
            no_is,
            l0,
            dt0,
            seed,
            max_level,
            out,
        } => {
            let (name, net, x0, t_final, default_g, default_l0) = load_model(&model)?;
            let g = resolve_observable(observable.as_deref(), &net, default_g)?;
            let cfg = MlmcConfig {
                tol,
                delta,
                use_is: !no_is,
                l0: l0.unwrap_or(default_l0),
                dt0,
                seed,
                max_level,
            };
            let res = mlmc_estimate(&net, &x0, t_final, &g, &cfg).map_err(|e| e.to_string())?;
            fs::create_dir_all(&out).map_err(|e| e.to_string())?;
            let mut csv = format!(
                "# seed={seed} model={name} delta={delta} version={}\n",
                env!("CARGO_PKG_VERSION")
            );
            csv.push_str(
                "level,dt,samples,mean_diff,var_diff,kurtosis,mean_abs_diff,cost_per_sample_draws,cost_per_sample_seconds,avg_is_steps\n",
            );
            for s in &res.levels {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{},{}",
                    s.level,
                    s.dt,
                    s.samples,
                    s.mean_diff,
                    s.var_diff,
                    s.kurtosis,
                    s.mean_abs_diff,
                    s.cost_per_sample_draws,
                    s.cost_per_sample_seconds,
                    s.avg_is_steps
                );
            }
            write_file(&out.join("levels.csv"), &csv)?;
            let json = serde_json::to_string_pretty(&res).map_err(|e| e.to_string())?;
            write_file(&out.join("result.json"), &json)?;
            println!(
                "estimate {} (statistical error {}, bias estimate {}) over levels {}..={}, work {} draws",
                res.estimate,
                res.statistical_error,
                res.bias_estimate,
                res.levels.first().map(|s| s.level).unwrap_or(0),
                res.levels.last().map(|s| s.level).unwrap_or(0),
                res.total_work_draws
            );
            println!("wrote {} and {}", out.join("levels.csv").display(), out.join("result.json").display());
            Ok(())
        }
        Cmd::Convergence { model, m, full, seed, out } => {
            let m = m.unwrap_or(if full { harness::FULL_M } else { harness::DESK_M });
            fs::create_dir_all(&out).map_err(|e| e.to_string())?;
            for named in selected_models(model.as_deref())? {
                let levels = harness::study_levels(named.name);
                let study =
                    convergence_study(&named, &harness::DELTA_GRID, levels, m, seed)
                        .map_err(|e| e.to_string())?;
                let level_path = out.join(format!("convergence_{}.csv", named.name));
                let rates_path = out.join(format!("rates_{}.csv", named.name));
                write_file(&level_path, &study.to_level_csv())?;
                write_file(&rates_path, &study.to_rates_csv())?;
                println!("wrote {} and {}", level_path.display(), rates_path.display());
                for g in &study.groups {
                    println!(
                        "  {}: delta={} alpha={:.3} beta={:.3} gamma={:.3} kappa_deepest={:.3}",
                        named.name,
                        harness::delta_label(g.delta),
                        g.rates.alpha,
                        g.rates.beta,
                        g.rates.gamma,
                        g.kappa_deepest
                    );
                }
            }
            Ok(())
        }
        Cmd::Histogram { model, level, delta, no_is, m, full, seed, out } => {
            let m = m.unwrap_or(if full { harness::FULL_M } else { harness::DESK_M });
            let delta = if no_is { None } else { Some(delta) };
            fs::create_dir_all(&out).map_err(|e| e.to_string())?;
            for named in selected_models(model.as_deref())? {
                let level = level.unwrap_or(*harness::study_levels(named.name).end() + match named.name {
                    "decay" => 1,
                    _ => 0,
                });
                let h = histogram_pass(&named, level, delta, m, seed).map_err(|e| e.to_string())?;
                let label = harness::delta_label(delta);
                let diff_path =
                    out.join(format!("coupling_hist_{}_l{}_{}.csv", named.name, level, label));
                let jump_path =
                    out.join(format!("jump_hist_{}_l{}_{}.csv", named.name, level, label));
                write_file(&diff_path, &h.to_diff_csv())?;
                write_file(&jump_path, &h.to_jump_csv())?;
                println!(
                    "{} level {} delta {}: P(diff=0)={} avg_is_steps={} (wrote {}, {})",
                    named.name,
                    level,
                    label,
                    h.zero_fraction,
                    h.avg_is_steps,
                    diff_path.display(),
                    jump_path.display()
                );
            }
            Ok(())
        }
        Cmd::Complexity { model, tols, methods, delta, runs, seed, max_level, out } => {
            let named = bundled_model(&model)?;
            let tols = parse_f64_list(&tols)?;
            let methods = parse_methods(&methods, delta)?;
            let rows = complexity_sweep(&named, &tols, &methods, runs, seed, max_level)
                .map_err(|e| e.to_string())?;
            fs::create_dir_all(&out).map_err(|e| e.to_string())?;
            let path = out.join(format!("complexity_{}.csv", named.name));
            write_file(&path, &complexity_csv(named.name, seed, &rows))?;
            for r in &rows {
                println!(
                    "tol={} method={} seed={} estimate={} work_draws={}",
                    r.tol, r.method, r.seed, r.estimate, r.work_draws
                );
            }
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn write_file(path: &Path, content: &str) -> Result<(), String> {
    fs::write(path, content).map_err(|e| format!("writing {}: {e}", path.display()))
}

fn bundled_model(name: &str) -> Result<NamedModel, String> {
    models::by_name(name).ok_or_else(|| {
        format!("unknown model '{name}'; expected one of {}", models::MODEL_NAMES.join(", "))
    })
}

fn selected_models(name: Option<&str>) -> Result<Vec<NamedModel>, String> {
    match name {
        Some(n) => Ok(vec![bundled_model(n)?]),
        None => Ok(models::MODEL_NAMES.iter().map(|n| bundled_model(n)).collect::<Result<_, _>>()?),
    }
}

/// Resolves either a bundled model name or a model JSON file into its
/// parts. File models default to observing species 0 at level base 0.
#[allow(clippy::type_complexity)]
fn load_model(
    spec: &str,
) -> Result<(String, ReactionNetwork, StateVector, f64, Observable, u32), String> {
    if let Some(named) = models::by_name(spec) {
        return Ok((
            named.name.to_string(),
            named.network,
            named.x0,
            named.t_final,
            named.observable,
            named.default_l0,
        ));
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(format!(
            "'{spec}' is neither a bundled model ({}) nor an existing file",
            models::MODEL_NAMES.join(", ")
        ));
    }
    let text = fs::read_to_string(path).map_err(|e| format!("reading {spec}: {e}"))?;
    let file = ModelFile::from_json(&text).map_err(|e| format!("parsing {spec}: {e}"))?;
    let (net, x0, t_final) = file.build().map_err(|e| format!("building {spec}: {e}"))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
    Ok((name, net, x0, t_final, Observable::Projection(0), 0))
}

fn resolve_observable(
    spec: Option<&str>,
    net: &ReactionNetwork,
    default: Observable,
) -> Result<Observable, String> {
    let g = match spec {
        None => default,
        Some(s) => parse_observable(s)?,
    };
    g.validate(net).map_err(|e| e.to_string())?;
    Ok(g)
}

fn parse_observable(spec: &str) -> Result<Observable, String> {
    if let Some(idx) = spec.strip_prefix("proj:") {
        let i: usize = idx.parse().map_err(|_| format!("bad species index '{idx}'"))?;
        return Ok(Observable::Projection(i));
    }
    if let Some(ws) = spec.strip_prefix("linear:") {
        let weights: Result<Vec<f64>, _> = ws.split(',').map(|w| w.trim().parse()).collect();
        return weights
            .map(Observable::Linear)
            .map_err(|_| format!("bad weight list '{ws}'"));
    }
    Err(format!("bad observable '{spec}'; use proj:<i> or linear:<w0,w1,...>"))
}

fn parse_f64_list(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number '{t}'")))
        .collect()
}

fn parse_methods(text: &str, delta: f64) -> Result<Vec<Method>, String> {
    text.split(',')
        .map(|t| match t.trim() {
            "mc_ssa" => Ok(Method::McSsa),
            "mlmc" => Ok(Method::Mlmc),
            "mlmc_is" => Ok(Method::MlmcIs(delta)),
            other => Err(format!("unknown method '{other}'")),
        })
        .collect()
}
