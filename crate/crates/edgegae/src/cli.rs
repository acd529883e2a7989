//! The `edgegae` command-line tool.

use std::ffi::OsString;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use edgegae_core::metrics::EvalConfig;
use edgegae_core::model::BatchedGraph;
use edgegae_core::metrics::optimal_gap;
use edgegae_core::oracle::{held_karp, heuristic_oracle, DatasetSpec, EXACT_CUTOFF};
use edgegae_core::search::SearchConfig;
use edgegae_core::train::{init_seed, labeled_graphs, TrainConfig, Trainer};
use edgegae_core::tsp::knn_sparsify;
use edgegae_core::{EdgeGae, ModelConfig};

use crate::config::{resolve, EvalArgs, EvalSettings, GenerateArgs, GenerateSettings, Settings, SolveArgs, SolveSettings, TrainArgs, TrainSettings, Value};
use crate::error::{write_atomic, Error, Result};
use crate::io::{self, Checkpoint, Gap, SolutionLine};
use crate::parallel;

#[derive(Debug, Parser)]
#[command(name = "edgegae", version, about = "Learned heatmaps and guided search for Euclidean TSP")]
pub struct Cli {
    /// Worker threads for parallel stages (0 = all CPUs)
    #[arg(long, global = true, env = "EDGEGAE_THREADS")]
    pub threads: Option<usize>,
    /// `key = value` settings file; flags override it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labelled dataset with a size-imbalanced allocation
    Generate(GenerateArgs),
    /// Train a model and write checkpoints and a loss log
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset and write a CSV report
    Eval(EvalArgs),
    /// Solve one instance with a checkpoint
    Solve(SolveArgs),
}

/// Parses arguments, runs the command and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let config = cli.config.as_deref();
    match &cli.command {
        Command::Generate(a) => generate(&resolve(config, &a.overrides())?, cli.threads),
        Command::Train(a) => train(resolve(config, &a.overrides())?),
        Command::Eval(a) => eval(&resolve(config, &a.overrides())?, cli.threads),
        Command::Solve(a) => solve(&resolve(config, &a.overrides())?, cli.threads),
    }
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value.as_deref().ok_or_else(|| Error::Usage(format!("--{flag} is required")))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes the resolved settings next to the primary output.
fn echo(settings: &impl Settings, out: &Path) -> Result<()> {
    write_atomic(&with_suffix(out, ".config"), settings.render().as_bytes())
}

pub fn generate(s: &GenerateSettings, threads: Option<usize>) -> Result<()> {
    let out = required(&s.out, "out")?;
    let spec = DatasetSpec {
        n_min: s.n_min,
        n_max: s.n_max,
        total: s.total,
        seed: s.seed,
        oracle_mode: s.oracle,
        exact_cutoff: s.exact_cutoff,
        heuristic_restarts: s.restarts,
    };
    spec.validate()?;
    let pool = parallel::thread_pool(threads)?;
    let data = parallel::build_dataset(&spec, &pool)?;
    io::write_dataset(out, &data)?;
    echo(s, out)?;
    eprintln!("wrote {} instances to {}", data.len(), out.display());
    Ok(())
}

pub fn train(mut s: TrainSettings) -> Result<()> {
    let data_path = required(&s.data, "data")?.to_path_buf();
    let out = required(&s.out, "out")?.to_path_buf();
    let instances = io::read_dataset(&data_path)?;

    let resumed = match &s.resume {
        Some(p) => Some(Checkpoint::load(p)?),
        None => None,
    };
    if let Some(c) = &resumed {
        let m = &c.meta;
        s.hidden = m.hidden;
        s.layers = m.layers;
        s.knn = m.knn;
        s.mlp_layers = m.mlp_layers;
        s.delta = m.delta;
        s.lr = m.lr;
        s.beta1 = m.beta1;
        s.beta2 = m.beta2;
        s.adam_eps = m.eps;
        s.sampling = m.sampling;
        s.batch = m.batch_size;
        s.pos_weight = m.pos_weight;
        s.seed = m.seed;
    }

    let (graphs, deficit) = labeled_graphs(&instances, s.knn)?;
    if deficit > 0 {
        eprintln!("warning: {deficit} tour edges fall outside the {}-NN graphs", s.knn);
    }
    let mut trainer = match resumed {
        Some(c) => c.into_trainer(graphs, s.epochs)?,
        None => {
            let model_cfg = ModelConfig {
                layers: s.layers,
                hidden: s.hidden,
                knn: s.knn,
                mlp_layers: s.mlp_layers,
                delta: s.delta,
            };
            let cfg = TrainConfig {
                epochs: s.epochs,
                batch_size: s.batch,
                lr: s.lr,
                sampling: s.sampling,
                pos_weight: s.pos_weight,
                seed: s.seed,
            };
            let model = EdgeGae::new(model_cfg, init_seed(s.seed))?;
            let mut t = Trainer::new(model, cfg, graphs)?;
            t.set_adam(edgegae_core::nn::Adam { lr: s.lr, beta1: s.beta1, beta2: s.beta2, eps: s.adam_eps });
            t
        }
    };
    echo(&s, &out)?;

    let log_path = s.log.clone().unwrap_or_else(|| with_suffix(&out, ".log.csv"));
    let append = s.resume.is_some() && log_path.exists();
    let mut log = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    if !append {
        writeln!(log, "epoch,mean_loss,steps,sampling").map_err(|e| Error::io(&log_path, e))?;
    }
    let mode = s.sampling.render();
    while trainer.epochs_done < trainer.config.epochs {
        let stats = trainer.run_epoch()?;
        writeln!(log, "{},{},{},{mode}", stats.epoch, stats.mean_loss, stats.steps).map_err(|e| Error::io(&log_path, e))?;
        log.flush().map_err(|e| Error::io(&log_path, e))?;
        eprintln!("epoch {} loss {:.6} ({} steps)", stats.epoch, stats.mean_loss, stats.steps);
        let done = trainer.epochs_done;
        if s.checkpoint_every > 0 && done % s.checkpoint_every == 0 && done < trainer.config.epochs {
            Checkpoint::from_trainer(&trainer).save(&with_suffix(&out, &format!(".epoch{done}")))?;
        }
    }
    Checkpoint::from_trainer(&trainer).save(&out)?;
    Ok(())
}

pub fn eval(s: &EvalSettings, threads: Option<usize>) -> Result<()> {
    let ckpt = required(&s.ckpt, "ckpt")?;
    let data_path = required(&s.data, "data")?;
    let out = required(&s.out, "out")?;
    let model = Checkpoint::load(ckpt)?.model;
    if let Some(k) = s.knn {
        if k != model.config().knn {
            return Err(edgegae_core::Error::InvalidArgument(format!(
                "--knn {k} does not match the checkpoint's k = {}",
                model.config().knn
            ))
            .into());
        }
    }
    let instances = io::read_dataset(data_path)?;
    let config = EvalConfig {
        search: SearchConfig {
            strategy: s.strategy,
            samples: s.samples,
            beam_width: s.beam_width,
            two_opt: s.two_opt,
            epsilon_prob: s.epsilon_prob,
            seed: s.seed,
        },
        f1_threshold: s.threshold,
    };
    config.search.validate()?;
    let pool = parallel::thread_pool(threads)?;
    let report = parallel::evaluate(&model, &instances, &config, &pool)?;
    io::write_report(out, &report)?;
    echo(s, out)?;
    let all = report.overall();
    eprintln!(
        "{} instances: f1 {:.4} auc {:.4} gap {:.4}%",
        all.count, all.f1.mean, all.auc.mean, all.gap.mean
    );
    Ok(())
}

pub fn solve(s: &SolveSettings, threads: Option<usize>) -> Result<()> {
    let ckpt = required(&s.ckpt, "ckpt")?;
    let input = required(&s.input, "input")?;
    let model = Checkpoint::load(ckpt)?.model;
    let text = std::fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let points = io::parse_coordinates(&text).map_err(|e| Error::Format(format!("{}: {e}", input.display())))?;

    let graph = knn_sparsify(&points, model.config().knn)?;
    let batch = BatchedGraph::new(&[&graph])?;
    let probs = model.predict(&batch)?;
    let heatmap = batch.heatmaps(&probs).pop().expect("one graph in batch");
    if let Some(p) = &s.heatmap_out {
        io::write_heatmap(p, &heatmap)?;
    }
    let search = SearchConfig {
        strategy: s.strategy,
        samples: s.samples,
        beam_width: s.beam_width,
        two_opt: s.two_opt,
        epsilon_prob: s.epsilon_prob,
        seed: s.seed,
    };
    let pool = parallel::thread_pool(threads)?;
    let (tour, _, elapsed) = parallel::solve(&points, &heatmap, &search, &pool)?;

    let gap = if !s.oracle {
        Gap::None
    } else if points.len() <= EXACT_CUTOFF {
        Gap::Exact(optimal_gap(tour.length, held_karp(&points)?.length)?)
    } else {
        let reference = heuristic_oracle(&points, 50, s.seed)?;
        Gap::Approximate(optimal_gap(tour.length, reference.length)?)
    };
    let line = SolutionLine { id: 0, length: tour.length, gap, tour: tour.order };
    match &s.out {
        Some(out) => {
            write_atomic(out, format!("{line}\n").as_bytes())?;
            echo(s, out)?;
        }
        None => println!("{line}"),
    }
    eprintln!("n = {} length {} search {:.3}s", points.len(), line.length, elapsed.as_secs_f64());
    Ok(())
}
