use clap::{Args, Parser, Subcommand};
use nptest::harness::{
    asn_for_power, canned, fit_cached, fit_experiment, heatmap_export, reproduce, run_experiment, validate, AsnOptions, Comparator,
    Exhibit, ExperimentConfig, Metric, ResultRow, ResultsTable,
};
use nptest::pipeline::{calibrate_constant_cutoff, load_bundle, recalibrate, save_bundle, CriticalValue, FittedTest};
use nptest::scenario::{Summary, Truth};
use nptest::{Error, RandomStream, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "nptest", version, about = "Neural-network hypothesis tests with learned critical values")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config file, or the name of a canned config (musec, known-sigma, unknown-sigma, behrens-fisher).
    #[arg(long, global = true)]
    config: Option<String>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Multiplies every Monte Carlo size, in (0, 1].
    #[arg(long, global = true)]
    scale: Option<f64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory for bundles, tables and caches.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate training data and fit both networks; writes a bundle to --out.
    Train,
    /// Refit the critical value of an existing bundle under the config's sizes.
    Calibrate {
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Estimate type I error and power at the config's validation points.
    Validate {
        /// Use this bundle instead of fitting (or reading the cache).
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
    /// Simulate one adaptive trial and print the path and decisions.
    SimulateTrial {
        #[arg(long)]
        pi_p: f64,
        #[arg(long)]
        pi_t: f64,
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
    /// Per-group ASN needed for a target power, by bisection on n2_max.
    Asn {
        #[arg(long, default_value_t = 0.27)]
        pi_p: f64,
        #[arg(long, default_value_t = 0.40)]
        pi_t: f64,
        #[arg(long, default_value_t = 0.9)]
        target: f64,
        #[arg(long, default_value_t = 1200)]
        cap: u32,
        /// Reuse the statistic network and refit only the critical network at each cap.
        #[arg(long)]
        recalibrate_only: bool,
    },
    /// Conditional rejection probability for every stage-1 outcome.
    Heatmap {
        #[arg(long, default_value_t = 0.27)]
        pi_p: f64,
        #[arg(long, default_value_t = 0.27)]
        pi_t: f64,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
    },
    /// Rerun a published exhibit (T1..T6, F1) at a Monte Carlo scale.
    Reproduce { exhibit: String },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.global.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: [setup] {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                Error::Stage { .. } => eprintln!("error: {e}"),
                _ => eprintln!("error: [{}] {e}", stage_of(&e)),
            }
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn stage_of(e: &Error) -> &'static str {
    match e {
        Error::Usage(_) => "usage",
        Error::Config(_) => "config",
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => "io",
        Error::Load(_) => "load",
        _ => "run",
    }
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let name = g.config.as_deref().ok_or_else(|| Error::Usage("--config is required for this command".into()))?;
    let path = Path::new(name);
    let mut config = if path.exists() { ExperimentConfig::load(path)? } else { canned(name)? };
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if let Some(scale) = g.scale {
        config = config.scaled(scale)?;
    }
    if let Some(out) = &g.out {
        config.output_dir = Some(out.clone());
    }
    Ok(config)
}

fn out_dir(g: &Global) -> Result<&Path> {
    g.out.as_deref().ok_or_else(|| Error::Usage("--out is required for this command".into()))
}

fn print_table(table: &ResultsTable) {
    print!("{}", table.render());
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Train => {
            let config = load_config(g).map_err(|e| e.at_stage("config"))?;
            let out = out_dir(g)?;
            let test = fit_experiment(&config)?;
            save_bundle(&test, &out.join("bundle")).map_err(|e| e.at_stage("write"))?;
            let sel = &test.provenance.statistic_selection;
            println!("statistic network: hidden {:?}, validation loss {:.6}", sel.selected_spec().hidden_layers, sel.selected_loss());
            match &test.critical {
                CriticalValue::Constant { value } => println!("critical value: constant {value:.6}"),
                CriticalValue::Network { .. } => {
                    println!("critical value: network, fit mse {:.3e}", test.provenance.critical_fit_mse.unwrap_or(f64::NAN))
                }
            }
            println!("bundle written to {}", out.join("bundle").display());
        }
        Command::Calibrate { bundle } => {
            let config = load_config(g).map_err(|e| e.at_stage("config"))?;
            let out = out_dir(g)?;
            let test = load_bundle(&bundle).map_err(|e| e.at_stage("load"))?;
            let sim = test.simulator().clone();
            let stream = RandomStream::new(config.seed, 0).labeled("recalibrate");
            let critical = if sim.critical_dim() == 0 {
                let value = calibrate_constant_cutoff(&test.statistic_net, &sim, config.scenario.counts.b_prime, test.alpha, &stream)
                    .map_err(|e| e.at_stage("calibrate"))?;
                CriticalValue::Constant { value }
            } else {
                let (sp, cp) = config.pools(&sim)?;
                let (net, fit) = recalibrate(&test.statistic_net, &sim, &config.plan(&sp, &cp), &stream)?;
                println!("critical fit mse {:.3e}", fit.fit_mse);
                CriticalValue::Network { net }
            };
            let updated = test.with_critical(critical, sim)?;
            save_bundle(&updated, &out.join("bundle")).map_err(|e| e.at_stage("write"))?;
            println!("bundle written to {}", out.join("bundle").display());
        }
        Command::Validate { bundle } => {
            let config = load_config(g).map_err(|e| e.at_stage("config"))?;
            let table = match bundle {
                Some(dir) => {
                    let test = load_bundle(&dir).map_err(|e| e.at_stage("load"))?;
                    let table = validate(&test, &config).map_err(|e| e.at_stage("validate"))?;
                    if let Some(out) = &config.output_dir {
                        std::fs::create_dir_all(out)?;
                        table.write_csv(&out.join(format!("{}.csv", config.name)))?;
                    }
                    table
                }
                None => run_experiment(&config)?.table,
            };
            print_table(&table);
        }
        Command::SimulateTrial { pi_p, pi_t, bundle } => {
            let config = load_config(g).map_err(|e| e.at_stage("config"))?;
            let test = match bundle {
                Some(dir) => Some(load_bundle(&dir).map_err(|e| e.at_stage("load"))?),
                None => None,
            };
            let sim = match &test {
                Some(t) => t.simulator().clone(),
                None => nptest::scenario::Simulator::new(config.scenario.clone())?,
            };
            let truth = Truth::Binary { pi_p, pi_t };
            let summary = sim.draw_many(&truth, 1, &RandomStream::new(config.seed, 0).labeled("simulate-trial"))?[0];
            let Summary::Trial(path) = summary else {
                return Err(Error::Usage("simulate-trial needs an adaptive config".into()));
            };
            let mut report = serde_json::json!({ "path": path });
            for c in &config.comparators {
                report[c.name()] = serde_json::json!(c.decide(sim.spec(), &summary)?);
            }
            if let Some(t) = &test {
                let d = t.decide_batch(&[summary])?[0];
                report["dnn"] = serde_json::json!({ "statistic": d.statistic, "cutoff": d.cutoff, "reject": d.reject });
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Asn { pi_p, pi_t, target, cap, recalibrate_only } => {
            let config = load_config(g).map_err(|e| e.at_stage("config"))?;
            let (test, _) = fit_cached(&config)?;
            let mut opts = AsnOptions::new(Truth::Binary { pi_p, pi_t }, target);
            opts.n2_cap = cap;
            opts.refit_statistic = !recalibrate_only;
            if !config.comparators.iter().any(|c| matches!(c, Comparator::Bm { .. })) {
                opts.methods.retain(|m| m != "bm");
            }
            let mut table = ResultsTable::default();
            for o in asn_for_power(&test, &config, &opts)? {
                let status = if o.reached { "reached" } else { "unreachable" };
                println!("{:<6} n2_max {:>5} power {:.4} asn {:>7.1} ({status})", o.method, o.n2_max, o.power, o.asn);
                table.rows.push(ResultRow {
                    experiment: config.name.clone(),
                    point: format!("pi_p={pi_p} pi_t={pi_t} n2_max={}", o.n2_max),
                    method: o.method.clone(),
                    metric: Metric::Asn,
                    value: if o.reached { o.asn } else { f64::NAN },
                    se: o.asn_se,
                    reps: o.reps,
                    published: None,
                });
            }
            if let Some(out) = &config.output_dir {
                std::fs::create_dir_all(out)?;
                table.write_csv(&out.join(format!("{}-asn.csv", config.name)))?;
            }
        }
        Command::Heatmap { pi_p, pi_t, reps } => {
            let config = load_config(g).map_err(|e| e.at_stage("config"))?;
            let out = out_dir(g)?;
            let (test, _): (FittedTest, bool) = fit_cached(&config)?;
            let bm = config.comparators.iter().find_map(|c| match c {
                Comparator::Bm { level } => Some(*level),
                _ => None,
            });
            let stream = RandomStream::new(config.seed, 0).labeled("heatmap");
            let map = heatmap_export(&test, Truth::Binary { pi_p, pi_t }, reps, bm, &stream).map_err(|e| e.at_stage("heatmap"))?;
            std::fs::create_dir_all(out)?;
            let path = out.join(format!("{}-heatmap.csv", config.name));
            map.write_csv(&path)?;
            println!("{} cells written to {}", map.cells.len(), path.display());
        }
        Command::Reproduce { exhibit } => {
            let exhibit: Exhibit = exhibit.parse()?;
            let table = reproduce(exhibit, g.scale.unwrap_or(1.0), g.out.as_deref())?;
            print_table(&table);
        }
    }
    Ok(())
}
