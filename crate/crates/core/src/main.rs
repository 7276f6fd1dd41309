use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use smm::autoenc::save_checkpoint;
use smm::corpus::{read_posts, write_posts, RawPost};
use smm::embed::{embed_table, save_embeddings, EmbeddingVector, ProviderKind};
use smm::eval::{evaluate, format_report_table, read_events, read_goldens, write_events, write_goldens, write_report_jsonl, EvalReport, GoldenTopic};
use smm::pipeline::{fit_autoencoder, prepare, run, PipelineConfig, Preset};
use smm::synth::{generate, SynthConfig};
use smm::{Error, Result};

#[derive(Parser)]
#[command(name = "smm", version, about = "Windowed event detection over post streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect and rank events in every window.
    Run(RunArgs),
    /// Score an event report against golden topics.
    Eval(EvalArgs),
    /// Write a synthetic corpus with planted events.
    GenSynth(GenSynthArgs),
    /// Embed cleaned posts into an SMMEMB file.
    Embed(EmbedArgs),
    /// Fit the autoencoder on the training period and save it.
    TrainAe(TrainAeArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Pipeline configuration (TOML).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Reference hyperparameter column: facup, supertuesday or uselection.
    #[arg(long, conflicts_with = "config")]
    preset: Option<Preset>,
    #[arg(long)]
    provider: Option<ProviderKind>,
    /// Precomputed embeddings; implies `--provider file`.
    #[arg(long, value_name = "PATH")]
    embeddings: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match (&self.config, self.preset) {
            (Some(path), _) => PipelineConfig::load(path)?,
            (None, Some(p)) => PipelineConfig::preset(p),
            (None, None) => PipelineConfig::default(),
        };
        if let Some(path) = &self.embeddings {
            cfg.embeddings_path = Some(path.clone());
            cfg.provider = ProviderKind::File;
        }
        if let Some(p) = self.provider {
            cfg.provider = p;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_name = "PATH")]
    posts: PathBuf,
    #[arg(long, value_name = "PATH")]
    goldens: Option<PathBuf>,
    /// Output directory; events go to stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Skip the autoencoder filter.
    #[arg(long)]
    no_dda: bool,
    /// Rank by cluster size instead of by score.
    #[arg(long)]
    no_rp: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Pipeline configuration; supplies the cutoffs and stopword list.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    events: PathBuf,
    #[arg(long, value_name = "PATH")]
    goldens: PathBuf,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenSynthArgs {
    /// Corpus generator settings (TOML).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Directory for posts.jsonl, goldens.jsonl and pipeline.toml.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_name = "PATH")]
    posts: PathBuf,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainAeArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_name = "PATH")]
    posts: PathBuf,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| Error::PathIo {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| Error::PathIo {
        path: path.to_path_buf(),
        source,
    })
}

fn load_posts(path: &Path) -> Result<Vec<RawPost>> {
    let parsed = read_posts(path)?;
    if parsed.skipped > 0 {
        log::warn!("skipped {} malformed post records", parsed.skipped);
    }
    Ok(parsed.posts)
}

fn write_eval(report: &EvalReport, dir: &Path) -> Result<()> {
    let mut w = create(&dir.join("eval.jsonl"))?;
    write_report_jsonl(report, &mut w)?;
    w.flush()?;
    fs::write(dir.join("eval.txt"), format_report_table(report)).map_err(|source| Error::PathIo {
        path: dir.join("eval.txt"),
        source,
    })
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let mut cfg = args.config.resolve()?;
    if args.no_dda {
        cfg.dda_enabled = false;
    }
    if args.no_rp {
        cfg.rp_enabled = false;
    }
    let posts = load_posts(&args.posts)?;
    let goldens = args.goldens.as_deref().map(read_goldens).transpose()?;
    let report = run(&cfg, &posts, goldens.as_deref())?;
    log::info!(
        "{} windows, {} events, {} posts dropped in cleanup",
        report.windows.len(),
        report.windows.iter().map(|w| w.events.len()).sum::<usize>(),
        report.dropped_posts
    );
    let events = report.event_records();
    match &args.out {
        Some(dir) => {
            create_dir(dir)?;
            let mut w = create(&dir.join("events.jsonl"))?;
            write_events(&events, &mut w)?;
            w.flush()?;
            if let Some(eval) = &report.eval {
                write_eval(eval, dir)?;
                print!("{}", format_report_table(eval));
            }
        }
        None => {
            let mut out = io::stdout().lock();
            write_events(&events, &mut out)?;
            out.flush()?;
            if let Some(eval) = &report.eval {
                eprint!("{}", format_report_table(eval));
            }
        }
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let cfg = match &args.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let pre = cfg.preprocessor()?;
    let events = read_events(&args.events)?;
    let goldens: Vec<GoldenTopic> = read_goldens(&args.goldens)?.iter().map(|g| g.normalized(&pre)).collect();
    let report = evaluate(&events, &goldens, &cfg.eval_ks);
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        write_eval(&report, dir)?;
    }
    print!("{}", format_report_table(&report));
    Ok(())
}

fn cmd_gen_synth(args: &GenSynthArgs) -> Result<()> {
    let mut scfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| Error::PathIo {
                path: path.clone(),
                source,
            })?;
            toml::from_str::<SynthConfig>(&text).map_err(|e| Error::Config(e.to_string()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(seed) = args.seed {
        scfg.seed = seed;
    }
    let corpus = generate(&scfg)?;
    create_dir(&args.out)?;

    let mut w = create(&args.out.join("posts.jsonl"))?;
    write_posts(&corpus.posts, &mut w)?;
    w.flush()?;
    let mut w = create(&args.out.join("goldens.jsonl"))?;
    write_goldens(&corpus.goldens, &mut w)?;
    w.flush()?;

    let cfg = PipelineConfig {
        window_minutes: scfg.window_minutes,
        start_ms: Some(corpus.start_ms),
        train_before_ms: Some(corpus.train_before_ms),
        seed: scfg.seed,
        ..PipelineConfig::default()
    };
    let path = args.out.join("pipeline.toml");
    fs::write(&path, cfg.to_toml()).map_err(|source| Error::PathIo { path, source })?;
    log::info!(
        "wrote {} posts and {} golden topics to {}",
        corpus.posts.len(),
        corpus.goldens.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_embed(args: &EmbedArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    cfg.validate()?;
    let posts = load_posts(&args.posts)?;
    let (docs, dropped) = cfg.preprocessor()?.preprocess_all(&posts);
    let provider = cfg.provider()?;
    let vectors: Vec<EmbeddingVector> = provider.embed_docs(&docs)?;
    save_embeddings(&vectors, provider.dim(), &args.out)?;
    log::info!("embedded {} documents ({} dropped in cleanup)", vectors.len(), dropped);
    Ok(())
}

fn cmd_train_ae(args: &TrainAeArgs) -> Result<()> {
    let mut cfg = args.config.resolve()?;
    cfg.ae_checkpoint = None;
    cfg.validate()?;
    let posts = load_posts(&args.posts)?;
    let prepared = prepare(&cfg, &posts)?;
    let training: Vec<_> = prepared.training_docs().cloned().collect();
    let provider = cfg.provider()?;
    let embeddings = embed_table(provider.as_ref(), &training)?;
    let (params, summary) = fit_autoencoder(&cfg, &prepared, &embeddings, provider.dim())?;
    save_checkpoint(&params, &args.out)?;
    if let Some(s) = summary {
        println!("trained on {} documents: loss {:.6} -> {:.6}", s.n_docs, s.initial_loss, s.final_loss);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::GenSynth(a) => cmd_gen_synth(a),
        Command::Embed(a) => cmd_embed(a),
        Command::TrainAe(a) => cmd_train_ae(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 2 } else { 1 })
        }
    }
}
