use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use flowsched::bench::{self, BestKnown, Method, ScenarioConfig};
use flowsched::dataset::{self, InstanceStore, SplitConfig};
use flowsched::env::{self, Env, LogSink};
use flowsched::generate::{random_instance_seeded, GeneratorConfig};
use flowsched::instance::{Diagnostic, Instance, Severity, TaskId};
use flowsched::observation::{build_observation, serialize};
use flowsched::psplib::write_psplib;
use flowsched::samples::toy_project;
use flowsched::ssgs::{check_schedule, execute_list, rule_rollout, PriorityList, Rule};
use flowsched::uncertainty::{
    derive_triples, sample_scenario_with, scenario_batch_with, write_scenarios_csv,
    DistributionKind, Factor, UncertaintyModel,
};
use flowsched::FlowState;

#[derive(Parser)]
#[command(
    name = "flowsched",
    version,
    about = "Stochastic project scheduling on resource-flow networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Lower duration factor (decimal or n/d).
    #[arg(long, default_value = "0.85")]
    low: Factor,
    /// Upper duration factor (decimal or n/d).
    #[arg(long, default_value = "1.3")]
    high: Factor,
    #[arg(long, default_value = "triangular")]
    distribution: DistributionKind,
}

impl ModelArgs {
    fn model(&self) -> Result<UncertaintyModel> {
        Ok(UncertaintyModel::new(
            self.low,
            self.high,
            self.distribution,
        )?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check an instance file and list its diagnostics.
    Validate {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Build a schedule from a rule or a priority list.
    Schedule {
        file: PathBuf,
        #[arg(
            long,
            value_name = "spt|lpt|mis|grpw",
            conflicts_with = "list",
            required_unless_present = "list"
        )]
        rule: Option<Rule>,
        /// File with one task id per line.
        #[arg(long)]
        list: Option<PathBuf>,
        /// Execute under the scenario of this seed instead of base durations.
        #[arg(long)]
        scenario_seed: Option<u64>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        json: bool,
    },
    /// Write the graph observation of a partial schedule as JSON.
    ExportObs {
        file: PathBuf,
        /// Comma-separated task ids inserted after the source.
        #[arg(long, value_delimiter = ',')]
        after_actions: Vec<TaskId>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Serve the reset/step protocol over TCP, or stdio without --port.
    Serve {
        #[arg(long)]
        instances: PathBuf,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Append finished-episode action logs (JSON lines) to this file.
        #[arg(long)]
        action_log: Option<PathBuf>,
    },
    /// Evaluate methods over a dataset and sampled scenarios.
    Bench {
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated: spt, lpt, mis, grpw, list:<file-or-dir>.
        #[arg(long, default_value = "spt,lpt,mis,grpw")]
        methods: String,
        #[arg(long, default_value_t = 100)]
        scenarios: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV `instance,best`; defaults to the best method per instance.
        #[arg(long)]
        best: Option<PathBuf>,
        /// Only evaluate the files named in this manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "bench-out")]
        out: PathBuf,
        /// Also write a gnuplot-readable summary.dat.
        #[arg(long)]
        gnuplot: bool,
    },
    /// Split a directory of instances into train / usn / ukn manifests.
    Split {
        dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        ukn_cells: usize,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the sample project or a seeded random instance.
    Generate {
        /// Emit the eight-task sample project instead of a random one.
        #[arg(long)]
        toy: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        min_tasks: usize,
        #[arg(long, default_value_t = 40)]
        max_tasks: usize,
        #[arg(long, default_value_t = 4)]
        max_resources: usize,
        /// `sm` (PSPLib) or `inst` (canonical dump).
        #[arg(long, default_value = "sm")]
        format: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Sample a scenario batch and write it as CSV.
    Scenarios {
        file: PathBuf,
        #[arg(long, default_value_t = 100)]
        scenarios: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate { file, json } => validate(&file, json),
        Command::Schedule {
            file,
            rule,
            list,
            scenario_seed,
            model,
            json,
        } => schedule(
            &file,
            rule,
            list.as_deref(),
            scenario_seed,
            &model.model()?,
            json,
        ),
        Command::ExportObs {
            file,
            after_actions,
            model,
            output: out,
        } => {
            let instance = dataset::load_instance(&file)?;
            let triples = derive_triples(&instance, &model.model()?);
            let mut state = FlowState::initial(&instance, &triples);
            for &t in after_actions.iter().filter(|&&t| t != instance.source()) {
                state
                    .insert_task(&instance, t)
                    .with_context(|| format!("inserting task {t}"))?;
            }
            let obs = build_observation(&state, &instance, &triples);
            let mut w = output(out.as_deref())?;
            w.write_all(&serialize(&obs))?;
            writeln!(w)?;
            w.flush()?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve {
            instances,
            port,
            host,
            action_log,
        } => {
            let store = Arc::new(InstanceStore::load_dir(&instances)?);
            log::info!("{} instance(s) loaded", store.len());
            let sink: Option<LogSink> = match action_log {
                Some(p) => {
                    let f = fs::OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(&p)
                        .with_context(|| format!("opening {}", p.display()))?;
                    Some(Arc::new(Mutex::new(Box::new(f))))
                }
                None => None,
            };
            match port {
                Some(port) => {
                    let listener = TcpListener::bind((host.as_str(), port))?;
                    eprintln!("listening on {}", listener.local_addr()?);
                    env::serve_tcp(listener, store, sink)?;
                }
                None => {
                    let mut env = Env::new(store);
                    env::serve_stream(
                        &mut env,
                        io::stdin().lock(),
                        io::stdout().lock(),
                        sink.as_ref(),
                    )?;
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench {
            dataset: dir,
            methods,
            scenarios,
            seed,
            best,
            manifest,
            model,
            out,
            gnuplot,
        } => run_bench(
            &dir,
            &methods,
            scenarios,
            seed,
            best.as_deref(),
            manifest.as_deref(),
            &model.model()?,
            &out,
            gnuplot,
        ),
        Command::Split {
            dir,
            seed,
            ukn_cells,
            train_fraction,
            out,
        } => {
            let split = dataset::split_dataset(
                &dir,
                &SplitConfig {
                    seed,
                    ukn_cells,
                    train_fraction,
                },
            )?;
            dataset::write_manifests(&split, &out)?;
            println!(
                "train {} usn {} ukn {}",
                split.train.len(),
                split.usn.len(),
                split.ukn.len()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Generate {
            toy,
            seed,
            min_tasks,
            max_tasks,
            max_resources,
            format,
            output: out,
        } => {
            if min_tasks < 2 || min_tasks > max_tasks || max_resources == 0 {
                bail!("need 2 <= min-tasks <= max-tasks and max-resources >= 1");
            }
            let instance = if toy {
                toy_project()
            } else {
                let config = GeneratorConfig {
                    tasks: min_tasks..=max_tasks,
                    resources: 1..=max_resources,
                    ..GeneratorConfig::default()
                };
                random_instance_seeded(&config, seed)
            };
            let text = match format.as_str() {
                "sm" => write_psplib(&instance),
                "inst" => instance.to_canonical(),
                other => bail!("unknown format `{other}` (expected sm or inst)"),
            };
            let mut w = output(out.as_deref())?;
            w.write_all(text.as_bytes())?;
            w.flush()?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Scenarios {
            file,
            scenarios,
            seed,
            model,
            output: out,
        } => {
            let instance = dataset::load_instance(&file)?;
            let model = model.model()?;
            let triples = derive_triples(&instance, &model);
            let batch = scenario_batch_with(&triples, model.kind, seed, scenarios);
            let mut w = output(out.as_deref())?;
            write_scenarios_csv(&batch, &mut w)?;
            w.flush()?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn validate(file: &Path, json: bool) -> Result<ExitCode> {
    let text = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let diagnostics: Vec<Diagnostic> = match dataset::parse_instance(file, &text) {
        Ok(instance) => instance.validate(),
        Err(dataset::LoadError::Invalid { diagnostics, .. }) => diagnostics,
        Err(e) => {
            if json {
                println!(
                    "{}",
                    serde_json::json!({ "valid": false, "error": e.to_string() })
                );
            } else {
                println!("{e}");
            }
            return Ok(ExitCode::FAILURE);
        }
    };
    let valid = !diagnostics.iter().any(|d| d.severity() == Severity::Error);
    if json {
        println!(
            "{}",
            serde_json::json!({ "valid": valid, "diagnostics": diagnostics })
        );
    } else {
        for d in &diagnostics {
            let level = match d.severity() {
                Severity::Error => "error",
                Severity::Warning => "warning",
            };
            println!("{level}: {d}");
        }
        println!(
            "{}: {}",
            file.display(),
            if valid { "valid" } else { "invalid" }
        );
    }
    Ok(if valid {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn schedule(
    file: &Path,
    rule: Option<Rule>,
    list: Option<&Path>,
    scenario_seed: Option<u64>,
    model: &UncertaintyModel,
    json: bool,
) -> Result<ExitCode> {
    let instance = dataset::load_instance(file)?;
    let triples = derive_triples(&instance, model);
    let durations = match scenario_seed {
        Some(seed) => sample_scenario_with(&triples, model.kind, seed).realized,
        None => instance.durations(),
    };
    let list = match (rule, list) {
        (Some(rule), _) => {
            let mode: Vec<_> = triples.iter().map(|t| t.mode).collect();
            rule_rollout(rule, &instance, &triples, &mode)?.0
        }
        (None, Some(path)) => {
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            PriorityList::read(&instance, BufReader::new(f))?
        }
        (None, None) => bail!("either --rule or --list is required"),
    };
    let sched = execute_list(&instance, &list, &durations)?;
    let report = check_schedule(&instance, &sched, &durations);
    if !report.is_feasible() {
        bail!(
            "internal error: infeasible schedule: {:?}",
            report.violations
        );
    }
    if json {
        println!(
            "{}",
            serde_json::json!({
                "list": list.as_slice(),
                "durations": durations,
                "start": sched.start,
                "makespan": sched.makespan,
            })
        );
    } else {
        print_schedule(&instance, list.as_slice(), &durations, &sched.start);
        println!("makespan {}", sched.makespan);
    }
    Ok(ExitCode::SUCCESS)
}

fn print_schedule(instance: &Instance, order: &[TaskId], durations: &[u64], start: &[u64]) {
    println!(
        "list {}",
        order
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    );
    println!(
        "{:>5} {:>8} {:>8} {:>8}",
        "task", "duration", "start", "end"
    );
    for t in 0..instance.num_tasks() {
        println!(
            "{:>5} {:>8} {:>8} {:>8}",
            t,
            durations[t],
            start[t],
            start[t] + durations[t]
        );
    }
}

#[allow(clippy::too_many_arguments)]
fn run_bench(
    dir: &Path,
    methods: &str,
    scenarios: usize,
    seed: u64,
    best: Option<&Path>,
    manifest: Option<&Path>,
    model: &UncertaintyModel,
    out: &Path,
    gnuplot: bool,
) -> Result<ExitCode> {
    let methods: Vec<Method> = bench::parse_methods(methods)?;
    if methods.is_empty() {
        bail!("no methods given");
    }
    let mut files = dataset::instance_files(dir)?;
    if let Some(m) = manifest {
        let keep = dataset::read_manifest(m)?;
        files.retain(|p| {
            p.file_name()
                .is_some_and(|n| keep.iter().any(|k| k.as_str() == n.to_string_lossy()))
        });
    }
    if files.is_empty() {
        bail!("{}: no instance files", dir.display());
    }
    let mut instances = Vec::with_capacity(files.len());
    for p in &files {
        instances.push((
            dataset::instance_id(p),
            Arc::new(dataset::load_instance(p)?),
        ));
    }
    let best = match best {
        Some(p) => {
            let b = BestKnown::read_path(p).with_context(|| format!("reading {}", p.display()))?;
            b.check_bounds(&instances, model)?;
            Some(b)
        }
        None => None,
    };
    let config = ScenarioConfig {
        count: scenarios,
        base_seed: seed,
        model: *model,
    };
    let eval = bench::evaluate(&instances, &methods, &config);
    let agg = bench::aggregate(&eval, best.as_ref());
    fs::create_dir_all(out)?;
    bench::write_scenario_csv(
        &eval.rows,
        BufWriter::new(File::create(out.join("scenarios.csv"))?),
    )?;
    bench::write_aggregate_csv(
        &agg,
        BufWriter::new(File::create(out.join("aggregate.csv"))?),
    )?;
    if gnuplot {
        bench::write_gnuplot(&agg, BufWriter::new(File::create(out.join("summary.dat"))?))?;
    }
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |x| format!("{x:.2}"));
    println!("{:<24} {:>10} {:>8} {:>8}", "method", "mks", "gap%", "cov%");
    for r in &agg {
        println!(
            "{:<24} {:>10} {:>8} {:>8.1}",
            r.method,
            cell(r.mean_makespan),
            cell(r.mean_gap),
            r.coverage
        );
    }
    Ok(ExitCode::SUCCESS)
}
