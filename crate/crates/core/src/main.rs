use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use synthact::config::load_config;
use synthact::dataset::{self, generate_dataset, read_manifest, read_split, recompute_flow, tree_checksum, SourceKind};
use synthact::experiment::{report_per_class, run_experiment, ExperimentConfig};
use synthact::tsn::{
    evaluate, extract_features, read_checkpoint, train_network, write_checkpoint, write_loss_csv, NetworkKind,
    VideoFeatures,
};
use synthact::{Error, Result};

#[derive(Parser)]
#[command(
    name = "synthact",
    version,
    about = "Synthetic action videos, optical flow and temporal-segment classification"
)]
struct Cli {
    /// Overrides the generation seed (gen), training seed (train) or seed list (exp).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a dataset and its optical flow.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-estimate every flow file of a dataset.
    Flow {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Train a network on one split and write a checkpoint.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        split: u8,
        #[arg(long)]
        network: String,
        #[arg(long)]
        out: PathBuf,
        /// Model, training and feature settings.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the test videos of a split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        split: u8,
        /// Directory for per_class.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment and write its reports.
    Exp {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn config_or_default(path: Option<&Path>) -> Result<ExperimentConfig> {
    path.map_or_else(|| Ok(ExperimentConfig::default()), load_config)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { config, out } => {
            let mut g = load_config(&config)?.generation;
            if let Some(s) = cli.seed {
                g.global_seed = s;
            }
            let m = generate_dataset(&g, &out)?;
            println!("{} videos, {} classes", m.records.len(), m.num_classes());
            println!("checksum {}", tree_checksum(&out)?);
        }
        Command::Flow { dataset } => {
            let m = recompute_flow(&dataset)?;
            println!("recomputed flow for {} videos", m.records.len());
        }
        Command::Train {
            dataset,
            split,
            network,
            out,
            config,
        } => {
            let kind = NetworkKind::from_name(&network)
                .ok_or_else(|| Error::invalid(format!("unknown network {network:?}; use net1, net2 or net3")))?;
            let mut x = config_or_default(config.as_deref())?;
            x.set_network_kind(kind);
            if let Some(s) = cli.seed {
                x.network.train.seed = s;
            }
            if kind == NetworkKind::Net1 {
                return Err(Error::invalid(
                    "net1 needs a background pool; train it through `exp` with experiment_id = E1",
                ));
            }
            let m = read_manifest(&dataset)?;
            let sp = read_split(&dataset, split)?;
            let feats = extract_features(&dataset, &m, sp.train(&m), &x.network.features)?;
            let pick = |k: SourceKind| -> Vec<&VideoFeatures> { feats.iter().filter(|v| v.source_kind == k).collect() };
            let (net, hist) = train_network(
                &x.network,
                &pick(SourceKind::RealLike),
                &pick(SourceKind::Simplified),
                m.num_classes(),
            )?;
            write_checkpoint(&out, &net)?;
            for ((def, _), h) in net.streams.iter().zip(&hist) {
                let p = out.with_extension(format!("{}.loss.csv", def.name));
                write_loss_csv(&p, h)?;
                info!("{}: final loss {:.4}", def.name, h.last().copied().unwrap_or(f64::NAN));
            }
            println!("wrote {}", out.display());
        }
        Command::Eval {
            ckpt,
            dataset,
            split,
            out,
        } => {
            let net = read_checkpoint(&ckpt)?;
            let m = read_manifest(&dataset)?;
            if net.num_classes() != m.num_classes() {
                return Err(Error::data("checkpoint and dataset class counts differ"));
            }
            let sp = read_split(&dataset, split)?;
            let mut pairs = Vec::new();
            for rec in sp.test(&m) {
                let frames = dataset::load_frames(&dataset, rec)?;
                let flows = dataset::load_flows(&dataset, rec, m.flow_bound)?;
                pairs.push((rec.class_index, net.predict_decoded(&frames, &flows)?.class));
            }
            let r = evaluate(&pairs, m.num_classes())?;
            let table = report_per_class(&r, &m.classes);
            println!("accuracy {:.4} ({} test videos)\n", r.accuracy, r.total());
            print!("{}", table.to_text());
            if let Some(dir) = out {
                fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                let p = dir.join("per_class.csv");
                fs::write(&p, table.to_csv()).map_err(|e| Error::io(&p, e))?;
            }
        }
        Command::Exp { config, out } => {
            let mut x = load_config(&config)?;
            if let Some(s) = cli.seed {
                x.seeds = vec![s];
            }
            let report = run_experiment(&x)?;
            report.write(&out)?;
            let copy = out.join("config.ini");
            fs::copy(&config, &copy).map_err(|e| Error::io(&copy, e))?;
            print!("{}", report.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Debug
        } else {
            log::LevelFilter::Warn
        })
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
