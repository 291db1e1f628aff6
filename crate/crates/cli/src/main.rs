use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use dynglr::dataio::{count_raw_rows, load_csv, prepare, Split};
use dynglr::experiment::{error_rate, dataset_path, read_rows, run_grid, CellSeeds, ExperimentGrid, Report, DESK_SCALE_LIMIT};
use dynglr::graph::{build_laplacian, gft_spectrum, write_edge_list, write_spectrum};
use dynglr::par::Exec;
use dynglr::pipeline::{diagnostic_state, labeled_subsample, Pipeline, PipelineConfig, RunManifest, Variant, RUN_MANIFEST_VERSION};
use dynglr::signal::LabelSignal;
use dynglr::{Error, Result};

#[derive(Parser)]
#[command(name = "dynglr", version, about = "Graph-based classification under noisy labels")]
struct Cli {
    /// Directory holding `<id>.csv` datasets.
    #[arg(long, global = true, env = "DYNGLR_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,
    /// Disable data-parallel execution.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Deduplicate a CSV and write it with its dataset manifest.
    Prepare {
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dataset id used for the output file names (default: input file stem).
        #[arg(long)]
        id: Option<String>,
    },
    /// Train one variant on one noisy split and evaluate it on the test split.
    Train {
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value = "G-12312")]
        variant: Variant,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run directory (default: runs/<dataset>-<variant>-<noise>-<seed>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Stratified subsample size; oversized datasets default to a desk-scale cap.
        #[arg(long)]
        max_nodes: Option<usize>,
        /// Keep every instance of oversized datasets.
        #[arg(long)]
        full_size: bool,
        #[arg(long)]
        epoch_divisor: Option<usize>,
        /// Skip writing per-iteration state snapshots.
        #[arg(long)]
        no_state: bool,
    },
    /// Re-evaluate a trained run on its test split.
    Eval {
        #[arg(long)]
        run: PathBuf,
        /// Evaluate another variant supported by the trained stages.
        #[arg(long)]
        variant: Option<Variant>,
    },
    /// Run an experiment grid described by a JSON file.
    Ablate {
        #[arg(long)]
        grid: PathBuf,
        /// Results CSV (appended to and resumed from).
        #[arg(long, default_value = "grid_results.csv")]
        out: PathBuf,
    },
    /// Graph Fourier spectrum of a label signal on one iteration's graph.
    Spectrum {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Iteration whose graph is used (0 = G-Net graph).
        #[arg(long)]
        iteration: Option<usize>,
        #[arg(long, value_enum, default_value_t = SignalKind::Clean)]
        signal: SignalKind,
        #[arg(long, default_value_t = 500)]
        max_nodes: usize,
        /// Also dump the graph as `<dir>/graph_r<k>.{csv,json}`.
        #[arg(long)]
        graph_dir: Option<PathBuf>,
    },
    /// Summarize a grid results file.
    Report {
        #[arg(long)]
        grid_results: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Md)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SignalKind {
    Clean,
    Noisy,
    Denoised,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Md,
    Csv,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    match cli.command {
        Command::Prepare { csv, out, id } => cmd_prepare(&csv, &out, id),
        Command::Train {
            dataset,
            variant,
            noise,
            seed,
            out,
            max_nodes,
            full_size,
            epoch_divisor,
            no_state,
        } => {
            let opts = TrainOpts {
                max_nodes,
                full_size,
                epoch_divisor,
                no_state,
            };
            cmd_train(&cli.data_dir, &dataset, variant, noise, seed, out, opts, exec)
        }
        Command::Eval { run, variant } => cmd_eval(&run, variant, exec),
        Command::Ablate { grid, out } => {
            let grid = ExperimentGrid::load(&grid)?;
            let report = run_grid(&grid, &cli.data_dir, &out, exec)?;
            print!("{}", report.to_markdown());
            Ok(())
        }
        Command::Spectrum {
            run,
            out,
            iteration,
            signal,
            max_nodes,
            graph_dir,
        } => cmd_spectrum(&run, &out, iteration, signal, max_nodes, graph_dir),
        Command::Report { grid_results, format } => {
            let report = Report::from_rows(read_rows(&grid_results)?, None);
            match format {
                Format::Md => print!("{}", report.to_markdown()),
                Format::Csv => print!("{}", report.to_csv()),
            }
            Ok(())
        }
    }
}

fn cmd_prepare(csv: &Path, out: &Path, id: Option<String>) -> Result<()> {
    let text = std::fs::read_to_string(csv).map_err(|e| Error::io(csv, e))?;
    let raw_rows = count_raw_rows(&text);
    let ds = load_csv(csv)?;
    let id = id.unwrap_or_else(|| csv.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into()));
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let data = dataset_path(out, &id);
    ds.write_csv(&data)?;
    let mut manifest = serde_json::to_value(ds.manifest())?;
    manifest["id"] = id.clone().into();
    manifest["raw_rows"] = raw_rows.into();
    let mpath = out.join(format!("{id}.manifest.json"));
    std::fs::write(&mpath, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&mpath, e))?;
    println!(
        "{id}: {raw_rows} rows, {} after deduplication, {} features -> {}",
        ds.n_nodes(),
        ds.n_features(),
        data.display()
    );
    Ok(())
}

struct TrainOpts {
    max_nodes: Option<usize>,
    full_size: bool,
    epoch_divisor: Option<usize>,
    no_state: bool,
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    data_dir: &Path,
    dataset: &str,
    variant: Variant,
    noise: f64,
    seed: u64,
    out: Option<PathBuf>,
    opts: TrainOpts,
    exec: Exec,
) -> Result<()> {
    if !(0.0..=1.0).contains(&noise) {
        return Err(Error::Config(format!("noise must lie in [0, 1], got {noise}")));
    }
    let data_path = dataset_path(data_dir, dataset);
    let raw = load_csv(&data_path)?;
    let max_nodes = opts
        .max_nodes
        .or((!opts.full_size && raw.n_nodes() > DESK_SCALE_LIMIT).then_some(DESK_SCALE_LIMIT));
    let seeds = CellSeeds::new(seed, dataset, noise, 0);
    let ds = prepare(&raw, max_nodes, seeds.prep(), noise)?;
    let mut cfg = PipelineConfig::preset(dataset).with_variant(variant).with_seed(seeds.pipeline);
    if let Some(f) = opts.epoch_divisor {
        cfg = cfg.scaled_epochs(f);
    }
    let start = Instant::now();
    let pipe = Pipeline::fit(&ds, &cfg, exec)?;
    let (test, pred) = pipe.predict_test(&ds, variant, exec)?;
    let truth: Vec<i8> = test.iter().map(|&i| ds.clean_labels[i]).collect();
    let err = error_rate(&pred, &truth)?;
    log::info!("trained and evaluated in {:.1} s", start.elapsed().as_secs_f64());
    let state = if opts.no_state { None } else { Some(pipe.state(&ds)?) };
    let dir = out.unwrap_or_else(|| PathBuf::from(format!("runs/{dataset}-{variant}-{noise}-{seed}")));
    let manifest = RunManifest {
        version: RUN_MANIFEST_VERSION,
        dataset: dataset.to_string(),
        data_path: std::fs::canonicalize(&data_path).unwrap_or(data_path),
        max_nodes,
        seeds: seeds.prep(),
        noise_rate: noise,
        config: cfg,
        gamma0: pipe.model.gamma0,
        stages: pipe.reports.clone(),
        checkpoints: BTreeMap::new(),
        state_snapshots: Vec::new(),
        test_error: Some(err),
    };
    let path = manifest.write(&dir, &pipe, state.as_ref())?;
    println!("{dataset} {variant} noise {noise} seed {seed}: test error {err:.2}% ({})", path.display());
    Ok(())
}

fn load_run(path: &Path) -> Result<(RunManifest, dynglr::dataio::Dataset, Pipeline)> {
    let manifest = RunManifest::load(path)?;
    let ds = manifest.dataset()?;
    let model = manifest.load_model(path)?;
    let pipe = Pipeline::from_model(&ds, manifest.config.clone(), model, manifest.stages.clone())?;
    Ok((manifest, ds, pipe))
}

fn cmd_eval(path: &Path, variant: Option<Variant>, exec: Exec) -> Result<()> {
    let (manifest, ds, pipe) = load_run(path)?;
    let variant = variant.unwrap_or(manifest.config.variant);
    let (test, pred) = pipe.predict_test(&ds, variant, exec)?;
    let truth: Vec<i8> = test.iter().map(|&i| ds.clean_labels[i]).collect();
    let err = error_rate(&pred, &truth)?;
    println!(
        "{}",
        serde_json::json!({
            "dataset": manifest.dataset,
            "variant": variant.to_string(),
            "noise": manifest.noise_rate,
            "n_test": test.len(),
            "error_rate": err,
        })
    );
    Ok(())
}

fn cmd_spectrum(
    path: &Path,
    out: &Path,
    iteration: Option<usize>,
    signal: SignalKind,
    max_nodes: usize,
    graph_dir: Option<PathBuf>,
) -> Result<()> {
    let (_, ds, pipe) = load_run(path)?;
    let nodes = labeled_subsample(&ds, max_nodes, pipe.config.seed);
    let state = diagnostic_state(&pipe.model, &ds, &pipe.inputs, &nodes, pipe.model.depth(), &pipe.config)?;
    let it = match iteration {
        Some(r) => state
            .iteration(r)
            .ok_or_else(|| Error::Usage(format!("run has no iteration {r}")))?,
        None => state.last(),
    };
    let y = match signal {
        SignalKind::Clean => LabelSignal(nodes.iter().map(|&i| ds.clean_labels[i] as f64).collect()),
        SignalKind::Noisy => LabelSignal(
            nodes
                .iter()
                .map(|&i| if ds.split[i] == Split::Train { ds.noisy_labels[i] as f64 } else { 0.0 })
                .collect(),
        ),
        SignalKind::Denoised => it.signal.clone(),
    };
    let spectrum = gft_spectrum(&build_laplacian(&it.graph), &y)?;
    let file = File::create(out).map_err(|e| Error::io(out, e))?;
    write_spectrum(&spectrum, file)?;
    if let Some(dir) = graph_dir {
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_edge_list(&it.graph, &dir, &format!("graph_r{}", it.r))?;
    }
    let mut stdout = std::io::stdout();
    let _ = writeln!(stdout, "wrote {} coefficients for iteration {} to {}", spectrum.len(), it.r, out.display());
    Ok(())
}

