use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use voxadapt::arch::{build_sepconv, build_stdconv, count_macs, count_params, Scope};
use voxadapt::data::{Domain, Utterance};
use voxadapt::eval::{
    invariance_set, lambda_sweep, run_experiment, train_full, ExperimentConfig, Workbench,
};
use voxadapt::report::{
    emit_plot_data, export_features, pca2d, tsne2d, FeatureDump, PlotData, TsneConfig,
};
use voxadapt::train::{load_checkpoint, save_checkpoint, Monitor, Strategy, TrainData};

#[derive(Parser)]
#[command(
    name = "voxadapt",
    version,
    about = "Noise-robust voice-disorder classification experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print parameter and MAC counts of both architectures.
    Resources {
        #[arg(long)]
        csv: bool,
    },
    /// Train one strategy on the full synthetic source set.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = parse_strategy)]
        strategy: Strategy,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate all configured strategies; writes table1.csv and significance.csv.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeated DAT training across λ values; writes lambda_box.csv.
    AblateLambda {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.5,1,2,5,10")]
        lambdas: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump penultimate features of a checkpoint on the three-condition evaluation set.
    ExportFeatures {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = parse_strategy)]
        strategy: Strategy,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Embed a feature dump in two dimensions; writes tsne.csv.
    Embed {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Tsne)]
        method: Method,
        #[arg(long, default_value_t = 30.0)]
        perplexity: f64,
        #[arg(long, default_value_t = 500)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Tsne,
    Pca,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn resources(csv: bool) -> Result<()> {
    let sep = build_sepconv();
    let std = build_stdconv();
    let input = sep.input;
    for (name, spec) in [("sepconv", &sep), ("stdconv", &std)] {
        let params = count_params(spec, Scope::Inference)?;
        let macs = count_macs(spec, input)?;
        if csv {
            println!("# {name} params\n{}", params.to_csv());
            println!("# {name} macs\n{}", macs.to_csv());
        } else {
            println!("{name}\n{}", macs.to_table());
            println!("inference parameters: {}\n", params.total_params());
        }
    }
    let (p, _) =
        count_params(&sep, Scope::Inference)?.reduction_vs(&count_params(&std, Scope::Inference)?);
    let (_, m) = count_macs(&sep, input)?.reduction_vs(&count_macs(&std, input)?);
    println!(
        "parameter reduction {:.2}%, MAC reduction {:.2}%",
        100.0 * p,
        100.0 * m
    );
    Ok(())
}

fn train_cmd(config: &ExperimentConfig, strategy: Strategy, out: &Path) -> Result<()> {
    let bench = Workbench::new(config)?;
    let outcome = if config.monitor {
        let eval = invariance_set(config)?;
        let (clean, noisy): (Vec<Utterance>, Vec<Utterance>) =
            eval.into_iter().partition(|u| u.domain == Domain::Clean);
        let tc = config.train_config(strategy, voxadapt::eval::derive_seed(config.seed, 0, 0));
        let data = TrainData {
            source: &bench.clean,
            target: &bench.adaptation,
        };
        let monitor = Monitor {
            source: &clean,
            target: &noisy,
        };
        voxadapt::train::train(&tc, data, None, Some(monitor))?
    } else {
        train_full(config, &bench, strategy)?
    };
    fs::create_dir_all(out)?;
    save_checkpoint(
        out.join("model.ckpt"),
        &outcome.network,
        Some(&outcome.optimizer),
    )?;
    write(&out.join("training_log.csv"), &outcome.log.to_csv())?;
    emit_plot_data(
        &PlotData::TrainingCurves(std::slice::from_ref(&outcome.log)),
        out,
    )?;
    println!("wrote {}", out.join("model.ckpt").display());
    Ok(())
}

fn evaluate_cmd(config: &ExperimentConfig, out: &Path) -> Result<()> {
    let report = run_experiment(config)?;
    report.write_csvs(out)?;
    if config.monitor {
        let logs: Vec<_> = report
            .cells
            .iter()
            .filter(|c| c.repeat == 1 && c.fold == 1)
            .map(|c| c.log.clone())
            .collect();
        emit_plot_data(&PlotData::TrainingCurves(&logs), out)?;
    }
    print!("{}", report.table1_csv());
    Ok(())
}

fn embed_cmd(
    features: &Path,
    method: Method,
    tsne: TsneConfig,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let text =
        fs::read_to_string(features).with_context(|| format!("reading {}", features.display()))?;
    let dump = FeatureDump::from_csv(&text)?;
    let x = dump.matrix();
    let coords = match method {
        Method::Tsne => {
            let r = tsne2d(&x, &tsne, seed)?;
            eprintln!("KL {:.4} -> {:.4}", r.initial_kl(), r.final_kl());
            r.coords
        }
        Method::Pca => pca2d(&x)?.coords,
    };
    let path = emit_plot_data(
        &PlotData::Tsne {
            dump: &dump,
            coords: &coords,
        },
        out,
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Resources { csv } => resources(csv),
        Command::Train {
            config,
            strategy,
            out,
        } => train_cmd(&load_config(config.as_deref())?, strategy, &out),
        Command::Evaluate { config, out } => evaluate_cmd(&load_config(config.as_deref())?, &out),
        Command::AblateLambda {
            config,
            lambdas,
            trials,
            out,
        } => {
            let config = load_config(config.as_deref())?;
            let sweep = lambda_sweep(&config, &lambdas, trials)?;
            let path = emit_plot_data(&PlotData::LambdaBox(&sweep), &out)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::ExportFeatures {
            config,
            strategy,
            checkpoint,
            out,
        } => {
            let config = load_config(config.as_deref())?;
            let spec = strategy.model_spec(config.lambda)?;
            let mut net = load_checkpoint(&checkpoint, &spec)
                .with_context(|| format!("loading {}", checkpoint.display()))?
                .network;
            let dump = export_features(&mut net, &invariance_set(&config)?)?;
            write(&out, &dump.to_csv())?;
            println!("wrote {} rows to {}", dump.len(), out.display());
            Ok(())
        }
        Command::Embed {
            features,
            method,
            perplexity,
            iterations,
            seed,
            out,
        } => {
            if iterations == 0 {
                bail!("at least one iteration required");
            }
            let tsne = TsneConfig {
                perplexity,
                iterations,
                ..TsneConfig::default()
            };
            embed_cmd(&features, method, tsne, seed, &out)
        }
    }
}
