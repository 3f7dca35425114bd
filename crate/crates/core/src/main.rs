use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use xgnn_attack::attack::{run_attack, Method};
use xgnn_attack::datasets::{save_dataset, DatasetSpec};
use xgnn_attack::explainer::{explain, ConstraintKind};
use xgnn_attack::gcn::save_model;
use xgnn_attack::harness::{
    ablation_sweep, attack_instance, export_dot, instance_setup, prepare_model, run_experiment, sweep_csv, train_on,
    ExperimentConfig, SweepParameter,
};
use xgnn_attack::{Error, Result};

#[derive(Parser)]
#[command(version, about = "Train GCNs, explain them, and attack the explanations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a dataset as edge-list files plus a manifest.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a GCN and save a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Explain one instance.
    Explain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        instance: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Attack one instance with the selected methods.
    Attack {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        instance: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full evaluation and write the results table.
    Evaluate {
        #[command(flatten)]
        common: Common,
    },
    /// Repeat the evaluation over values of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// One of k, n, gamma, beta, xi.
        #[arg(long)]
        param: SweepParameter,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render one instance, optionally after an attack, as DOT.
    ExportDot {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        instance: usize,
        /// Attack to apply before rendering.
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Flags shared by every subcommand. Each one overrides the matching field
/// of the `--config` file.
#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in dataset name or path to a manifest.json.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Model checkpoint to load instead of training.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    cases: Option<usize>,
    #[arg(long)]
    train_epochs: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    constraint: Option<ConstraintKind>,
    #[arg(long)]
    explainer_epochs: Option<usize>,
    #[arg(long)]
    explainer_lr: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    d_min: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Record per-method wall-clock time (outputs then differ across runs).
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(name) = &self.dataset {
            cfg.dataset = DatasetSpec::named(name)?;
        }
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = &self.$flag {
                    cfg.$($field).+ = v.clone();
                })*
            };
        }
        set!(
            seed => seed,
            workers => workers,
            train_epochs => train.epochs,
            hidden_dim => train.hidden_dim,
            constraint => explainer.constraint,
            explainer_epochs => explainer.epochs,
            explainer_lr => explainer.learn_rate,
            budget => attack.budget,
            gamma => attack.gamma,
            beta => attack.beta,
            samples => attack.sample_count,
            tau => attack.tau,
            d_min => attack.d_min,
            methods => methods,
        );
        if let Some(path) = &self.model {
            cfg.model = Some(path.clone());
        }
        if let Some(n) = self.cases {
            cfg.case_count = Some(n);
        }
        if let Some(k) = self.k {
            cfg.k = Some(k);
        }
        if let Some(path) = &self.csv {
            cfg.output.csv = Some(path.clone());
        }
        if let Some(path) = &self.json {
            cfg.output.json = Some(path.clone());
        }
        cfg.timing |= self.timing;
        Ok(cfg)
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common, out } => {
            let cfg = common.config()?;
            let dataset = cfg.dataset.build(cfg.seed)?;
            let manifest = save_dataset(&out, &dataset)?;
            eprintln!("wrote {}", manifest.display());
        }
        Command::Train { common, out } => {
            let cfg = common.config()?;
            let dataset = cfg.dataset.build(cfg.seed)?;
            let train = xgnn_attack::gcn::TrainConfig {
                seed: cfg.seed,
                ..cfg.train.clone()
            };
            let (model, report) = train_on(&dataset, &train)?;
            save_model(&out, &model)?;
            print!("{}", json(&report)?);
        }
        Command::Explain { common, instance, out } => {
            let cfg = common.config()?;
            let dataset = cfg.dataset.build(cfg.seed)?;
            let (model, _) = prepare_model(&cfg, &dataset)?;
            let (ctx, explainer, _) = instance_setup(&dataset, &model, instance, &cfg)?;
            let x = explain(&model, &ctx.graph, ctx.target, ctx.class, &explainer)?;
            let record = serde_json::json!({
                "instance": instance,
                "class": ctx.class,
                "explanatory_edges": ctx.edges_to_host(&x.explanatory_edges),
                "local": x.to_record(),
            });
            emit(&json(&record)?, out.as_deref())?;
        }
        Command::Attack { common, instance, out } => {
            let cfg = common.config()?;
            cfg.validate()?;
            let dataset = cfg.dataset.build(cfg.seed)?;
            let (model, _) = prepare_model(&cfg, &dataset)?;
            let record = attack_instance(&dataset, &model, instance, &cfg)?;
            emit(&json(&record)?, out.as_deref())?;
        }
        Command::Evaluate { common } => {
            let cfg = common.config()?;
            let out = run_experiment(&cfg)?;
            if cfg.output.csv.is_none() {
                print!("{}", out.table.to_csv()?);
            }
        }
        Command::Sweep {
            common,
            param,
            values,
            out,
        } => {
            let cfg = common.config()?;
            let points = ablation_sweep(&cfg, param, &values)?;
            emit(&sweep_csv(param, &points)?, out.as_deref())?;
        }
        Command::ExportDot {
            common,
            instance,
            method,
            out,
        } => {
            let cfg = common.config()?;
            let dataset = cfg.dataset.build(cfg.seed)?;
            let (model, _) = prepare_model(&cfg, &dataset)?;
            let (ctx, explainer, attack) = instance_setup(&dataset, &model, instance, &cfg)?;
            let clean = explain(&model, &ctx.graph, ctx.target, ctx.class, &explainer)?;
            let perturbation = match method {
                Some(m) => Some(run_attack(m, &ctx, &clean, &attack, &explainer)?.perturbation),
                None => None,
            };
            emit(
                &export_dot(&ctx.graph, &clean.explanatory_edges, perturbation.as_ref()),
                out.as_deref(),
            )?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
