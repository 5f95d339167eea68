//! The `btot` command-line driver.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure.

pub mod config;
pub mod error;
pub mod io;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use btot_core::corpus::{build_corpus, read_raw_documents_file, split};
use btot_core::eval::{self, DispersionMode, Ranking};
use btot_core::model::{sweep, SweepOptions};
use btot_core::schema::{check_json, JsonKind};
use btot_core::snapshot::Snapshot;
use btot_core::stability::{run_stability_demo, StabilityConfig, Status};
use btot_core::synth::{generate_corpus, DocLength, GenKind, SynthConfig};
use btot_core::train::train;
use btot_core::{ModelKind, NyScheme};
use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "btot", version, about = "Topic models over time: LDA, ToT, BToT and WBToT")]
pub struct Cli {
    /// Log more (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a corpus directory from line-delimited raw documents
    Prep(PrepArgs),
    /// Train a model on a corpus directory
    Train(TrainArgs),
    /// Export metrics of a trained model
    Eval(EvalArgs),
    /// Generate a synthetic corpus with its ground truth
    Synth(SynthArgs),
    /// Run naive online ToT and online BToT/WBToT on an adversarial stream
    StabilityDemo(StabilityArgs),
}

#[derive(Debug, Args)]
pub struct PrepArgs {
    /// JSONL records {id, tokens | counts, timestamp}
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub min_df: usize,
    #[arg(long, default_value_t = 1.0)]
    pub max_df_frac: f64,
    #[arg(long, default_value_t = 0.01)]
    pub margin: f64,
    /// Also write train.jsonl and test.jsonl
    #[arg(long)]
    pub test_frac: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunConfig,
}

pub const METRICS: [&str; 5] = ["histograms", "dispersion", "topwords", "coherence", "symkl"];

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub snapshot: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated subset of histograms,dispersion,topwords,coherence,symkl
    #[arg(long, value_delimiter = ',', default_value = "histograms,dispersion,topwords,coherence,symkl")]
    pub metrics: Vec<String>,
    /// beta or r_log
    #[arg(long, default_value = "beta")]
    pub ranking: Ranking,
    #[arg(long, default_value_t = eval::DEFAULT_TOP_N)]
    pub top_n: usize,
    /// Histogram bin width in raw time units (default: span / 50)
    #[arg(long)]
    pub bin_width: Option<f64>,
    #[arg(long, default_value = "weighted")]
    pub dispersion_mode: String,
    #[arg(long, default_value_t = eval::DEFAULT_CV_WINDOW)]
    pub window: usize,
    #[arg(long, default_value_t = eval::DEFAULT_NPMI_EPS)]
    pub npmi_eps: f64,
    /// Raw token sequences for coherence (default: the corpus itself)
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 200)]
    pub v: usize,
    #[arg(long, default_value_t = 1000)]
    pub d: usize,
    /// lda, tot or wbtot (btot generates like tot)
    #[arg(long, default_value = "tot")]
    pub model: ModelKind,
    /// Token weights for wbtot generation
    #[arg(long, default_value = "sqrt")]
    pub ny: NyScheme,
    #[arg(long, default_value_t = 50.0)]
    pub mean_len: f64,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.05)]
    pub eta: f64,
    #[arg(long, default_value_t = 60.0)]
    pub time_concentration: f64,
    #[arg(long)]
    pub test_frac: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    /// Replace the adversarial batch with an ordinary one
    #[arg(long)]
    pub benign: bool,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 200)]
    pub v: usize,
    #[arg(long, default_value_t = 100)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.7)]
    pub t_common: f64,
    #[arg(long, default_value_t = 0)]
    pub topic_starved: usize,
    #[arg(long, default_value_t = 3)]
    pub warmup: usize,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.7)]
    pub kappa: f64,
    #[arg(long, default_value = "sqrt")]
    pub ny: NyScheme,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    /// Write the JSON report here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { error::EXIT_USAGE } else { 0 };
            let _ = e.print();
            return if code == 0 { Ok(()) } else { Err(CliError { code, msg: String::new() }) };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match cli.command {
        Command::Prep(a) => cmd_prep(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::StabilityDemo(a) => cmd_stability_demo(&a),
    }
}

fn print_summary(c: &btot_core::Corpus) {
    let raw: Vec<f64> = (0..c.num_docs()).map(|d| c.raw_time(d)).collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    println!("documents  {}", c.num_docs());
    println!("vocabulary {}", c.vocab_size());
    println!("tokens     {}", c.num_tokens());
    println!("timespan   {lo} .. {hi}");
}

pub fn cmd_prep(a: &PrepArgs) -> CliResult<()> {
    let docs = read_raw_documents_file(&a.input).map_err(|e| CliError::from(e).context(a.input.display()))?;
    let corpus = build_corpus(&docs, a.min_df, a.max_df_frac, a.margin)?;
    let dropped = docs.len() - corpus.num_docs();
    if dropped > 0 {
        log::info!("dropped {dropped} documents with no in-vocabulary tokens");
    }
    let parts = a.test_frac.map(|f| split(&corpus, f, a.seed)).transpose()?;
    io::write_corpus_dir(&a.out, &corpus, parts.as_ref().map(|(tr, te)| (tr, te)))?;
    print_summary(&corpus);
    if let Some((tr, te)) = &parts {
        println!("split      {} train / {} test", tr.num_docs(), te.num_docs());
    }
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    let file = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let run = file.overlay(a.run.clone());
    let cfg = run.resolve()?;
    let (cdir, out) = (run.corpus_dir()?, run.out_dir()?);
    let data = io::read_corpus_dir(cdir)?;
    let start = Instant::now();
    let res = train(&data.train, data.test.as_ref(), &cfg)?;
    let snap = Snapshot::from_state(&res.state, data.train.time_scale);
    io::write_atomic(&out.join("snapshot.json"), |w| {
        snap.write_to(&mut *w)?;
        Ok(writeln!(w)?)
    })?;
    io::write_atomic(&out.join("train_log.jsonl"), |w| {
        for rec in &res.log {
            serde_json::to_writer(&mut *w, rec)?;
            writeln!(w)?;
        }
        Ok(())
    })?;
    io::write_atomic(&out.join("run_config.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &cfg)?;
        Ok(writeln!(w)?)
    })?;
    println!("model        {} (K = {}, {})", cfg.model.kind, cfg.model.k, cfg.mode);
    println!("restart      {} of {}", res.restart + 1, cfg.restarts);
    println!("elbo         {:.6}", res.elbo);
    println!("perplexity   {:.6}", res.perplexity);
    if let Some(h) = res.log.last().and_then(|r| r.heldout_perplexity) {
        println!("heldout      {h:.6}");
    }
    println!("iterations   {}", res.log.len());
    println!("seconds      {:.2}", start.elapsed().as_secs_f64());
    Ok(())
}

/// Validates the metric list before any work is done.
pub fn parse_metrics(names: &[String]) -> CliResult<Vec<&'static str>> {
    let mut out = Vec::new();
    for n in names.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
        let m = METRICS
            .iter()
            .find(|&&m| m == n)
            .ok_or_else(|| CliError::usage(format!("unknown metric '{n}'; valid metrics: {}", METRICS.join(", "))))?;
        if !out.contains(m) {
            out.push(*m);
        }
    }
    if out.is_empty() {
        return Err(CliError::usage(format!("no metrics requested; valid metrics: {}", METRICS.join(", "))));
    }
    Ok(out)
}

pub fn cmd_eval(a: &EvalArgs) -> CliResult<()> {
    let metrics = parse_metrics(&a.metrics)?;
    let mode = match a.dispersion_mode.as_str() {
        "weighted" => DispersionMode::Weighted,
        "literal" => DispersionMode::Literal,
        other => return Err(CliError::usage(format!("unknown dispersion mode '{other}' (weighted or literal)"))),
    };
    let file = std::fs::File::open(&a.snapshot).map_err(|e| CliError::data(format!("{}: {e}", a.snapshot.display())))?;
    let snap = Snapshot::read_from(std::io::BufReader::new(file)).map_err(|e| CliError::from(e).context(a.snapshot.display()))?;
    let state = snap.to_state().map_err(|e| CliError::from(e).context(a.snapshot.display()))?;
    let corpus = io::read_corpus_dir(&a.corpus)?.full;
    if corpus.vocab_size() != state.v() {
        return Err(CliError::data(format!(
            "snapshot has {} words but the corpus vocabulary has {}",
            state.v(),
            corpus.vocab_size()
        )));
    }
    let lda = state.lda();
    let needs_gammas = metrics.iter().any(|m| matches!(*m, "histograms" | "dispersion"));
    let hists = if needs_gammas {
        let opts = SweepOptions { accumulate: false, ..Default::default() };
        let sw = sweep(&state, &corpus.documents, None, &opts)?;
        let width = a.bin_width.unwrap_or_else(|| {
            let ts = &corpus.time_scale;
            let span = ts.raw_max - ts.raw_min;
            if span > 0.0 { span / 50.0 } else { 1.0 }
        });
        Some(eval::topic_time_histogram(&corpus, &sw.gammas, width)?)
    } else {
        None
    };
    let top = eval::all_top_words(lda, a.top_n, a.ranking)?;
    for m in metrics {
        let path = a.out.join(format!("{m}.csv"));
        match m {
            "histograms" => {
                let h = hists.as_ref().expect("computed above");
                io::write_atomic(&path, |w| Ok(eval::write_histograms_csv(w, h)?))?
            }
            "dispersion" => {
                let h = hists.clone().expect("computed above");
                let report = eval::dispersion_report(&[(state.kind().to_string(), h)], mode)?;
                io::write_atomic(&path, |w| Ok(eval::write_dispersion_csv(w, &report)?))?;
                for s in &report.summary {
                    println!("dispersion   {} mean MAD {:.6} mean IQR {:.6}", s.model, s.mean_mad, s.mean_iqr);
                }
            }
            "topwords" => io::write_atomic(&path, |w| Ok(eval::write_top_words_csv(w, &top, &corpus.vocab)?))?,
            "coherence" => {
                let sequences = match &a.reference {
                    Some(p) => {
                        let raw = read_raw_documents_file(p).map_err(|e| CliError::from(e).context(p.display()))?;
                        eval::sequences_from_raw(&raw, &corpus.vocab)
                    }
                    None => {
                        log::warn!("no --reference text; coherence windows run over bag-of-words documents");
                        eval::sequences_from_corpus(&corpus)
                    }
                };
                let ids: Vec<Vec<usize>> = top.iter().map(|t| t.ids()).collect();
                let rows = eval::coherence_cv(&ids, &sequences, a.window, a.npmi_eps)?;
                io::write_atomic(&path, |w| Ok(eval::write_coherence_csv(w, &rows, &corpus.vocab)?))?;
                let mean = rows.iter().map(|r| r.cv).sum::<f64>() / rows.len().max(1) as f64;
                println!("coherence    mean C_V {mean:.6}");
            }
            "symkl" => {
                let m = eval::sym_kl_matrix(lda)?;
                io::write_atomic(&path, |w| Ok(eval::write_sym_kl_csv(w, &m)?))?
            }
            _ => unreachable!("validated by parse_metrics"),
        }
        println!("wrote        {}", path.display());
    }
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs) -> CliResult<()> {
    let mut cfg = SynthConfig::new(a.k, a.v, a.d);
    cfg.doc_len = DocLength::Poisson(a.mean_len);
    cfg.kind = match a.model {
        ModelKind::Lda => GenKind::Lda,
        ModelKind::Tot | ModelKind::Btot => GenKind::TotBtot,
        ModelKind::Wbtot => GenKind::Wbtot(a.ny),
    };
    cfg.alpha = a.alpha;
    cfg.eta = a.eta;
    cfg.time_concentration = a.time_concentration;
    let (corpus, truth) = generate_corpus(&cfg, None, a.seed)?;
    let parts = a.test_frac.map(|f| split(&corpus, f, a.seed)).transpose()?;
    io::write_corpus_dir(&a.out, &corpus, parts.as_ref().map(|(tr, te)| (tr, te)))?;
    let snap = Snapshot::from_truth(&truth, a.eta);
    io::write_atomic(&a.out.join("truth.json"), |w| {
        snap.write_to(&mut *w)?;
        Ok(writeln!(w)?)
    })?;
    print_summary(&corpus);
    Ok(())
}

pub fn cmd_stability_demo(a: &StabilityArgs) -> CliResult<()> {
    let cfg = StabilityConfig {
        k: a.k,
        v: a.v,
        batch_size: a.batch_size,
        t_common: a.t_common,
        topic_starved: a.topic_starved,
        warmup_batches: a.warmup,
        tau: a.tau,
        kappa: a.kappa,
        ny: a.ny,
        benign: a.benign,
        seed: a.seed,
        ..Default::default()
    };
    let report = run_stability_demo(&cfg)?;
    let json = serde_json::to_string_pretty(&report)?;
    check_json(JsonKind::StabilityReport, &json)?;
    println!("{} mini-batch (t = {}, starved topic {})", report.batch, report.t_common, report.topic_starved);
    println!("{:<8} {:<10} {:>12} {:>7} {:>6}  reason", "model", "status", "max rho", "holder", "steps");
    for m in &report.models {
        let status = match m.status {
            Status::Bounded => "bounded",
            Status::Diverged => "diverged",
        };
        let rho = m.max_rho.map_or("-".to_string(), |r| format!("{r:.4e}"));
        println!(
            "{:<8} {:<10} {:>12} {:>7} {:>6}  {}",
            m.model.to_string(),
            status,
            rho,
            if m.holder_ok { "ok" } else { "FAIL" },
            m.steps,
            m.reason.as_deref().unwrap_or("")
        );
    }
    if let Some(p) = &a.out {
        io::write_atomic(p, |w| {
            w.write_all(json.as_bytes())?;
            Ok(writeln!(w)?)
        })?;
    }
    Ok(())
}
