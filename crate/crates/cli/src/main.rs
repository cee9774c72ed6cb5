//! `d2s`: corpus statistics, vocabulary building, training, generation,
//! evaluation and n-gram LM tooling for description-to-story generation.

mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use d2s_core::corpus::{
    build_vocab, compute_stats, default_stopwords, encode_all, load_stopwords, read_jsonl,
    tokenize, CorpusStats, Vocab, DEFAULT_MAX_SIZE, DEFAULT_MIN_COUNT,
};
use d2s_core::generator::{generate_stories, DecodeOptions, Strategy};
use d2s_core::metrics::evaluate_files;
use d2s_core::model::Hyperparams;
use d2s_core::ngram_lm::{self, LmConfig};
use d2s_core::trainer::{
    self, Checkpoint, TrainConfig, BEST_CHECKPOINT, DEFAULT_LR, LAST_CHECKPOINT,
};

#[derive(Debug, Parser)]
#[command(
    name = "d2s",
    version,
    about = "Story generation from image-description sequences"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Args)]
#[command(next_help_heading = "Global options")]
struct GlobalOpts {
    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Run single-threaded unless --threads is given.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// `key = value` file; flags take precedence over its entries.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Print corpus statistics.
    Stats(StatsArgs),
    /// Build a vocabulary file from a corpus.
    BuildVocab(BuildVocabArgs),
    /// Train a model, writing a CSV log and checkpoints.
    Train(TrainArgs),
    /// Generate one story per input document.
    Generate(GenerateArgs),
    /// Score hypothesis stories against references.
    Evaluate(EvaluateArgs),
    /// Train a Kneser-Ney n-gram language model.
    LmTrain(LmTrainArgs),
    /// Perplexity of text under a trained language model.
    LmScore(LmScoreArgs),
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Corpus in JSON Lines format.
    #[arg(long)]
    input: PathBuf,
    /// Stopword list, one token per line (built-in English list if absent).
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct BuildVocabArgs {
    /// Corpus in JSON Lines format.
    #[arg(long)]
    input: PathBuf,
    /// Vocabulary file to write (`token<TAB>count` per line).
    #[arg(long)]
    output: PathBuf,
    /// Drop tokens seen fewer times than this.
    #[arg(long, default_value_t = DEFAULT_MIN_COUNT)]
    min_count: u64,
    /// Keep at most this many non-reserved tokens.
    #[arg(long, default_value_t = DEFAULT_MAX_SIZE)]
    max_size: usize,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Training corpus (JSON Lines).
    #[arg(long)]
    train: PathBuf,
    /// Validation corpus (JSON Lines).
    #[arg(long)]
    val: PathBuf,
    /// Vocabulary file; built from the training corpus if absent.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Minimum count when building the vocabulary.
    #[arg(long, default_value_t = DEFAULT_MIN_COUNT)]
    min_count: u64,
    /// Maximum size when building the vocabulary.
    #[arg(long, default_value_t = DEFAULT_MAX_SIZE)]
    max_size: usize,
    /// Directory for best.ckpt and last.ckpt.
    #[arg(long)]
    out_dir: PathBuf,
    /// CSV log path [default: <out-dir>/train_log.csv].
    #[arg(long)]
    log: Option<PathBuf>,
    /// Embedding size: 50, 128 or 256.
    #[arg(long, default_value_t = 256, value_parser = parse_dim)]
    dim: usize,
    /// Hidden size [default: same as --dim].
    #[arg(long)]
    hidden: Option<usize>,
    /// Pairs per minibatch.
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Optimizer steps.
    #[arg(long, default_value_t = 10_000)]
    iterations: u64,
    /// Validate every N iterations (and at the last one).
    #[arg(long, default_value_t = 500)]
    eval_every: u64,
    /// Drop probability.
    #[arg(long, default_value_t = 0.2)]
    dropout: f64,
    /// Adam learning rate.
    #[arg(long, default_value_t = DEFAULT_LR)]
    lr: f64,
    /// Global gradient-norm clip.
    #[arg(long, default_value = "5.0")]
    clip: f64,
    /// Longest generated story, in tokens.
    #[arg(long, default_value_t = 100)]
    max_decode_len: usize,
    /// Beam width recorded in the checkpoint.
    #[arg(long, default_value_t = 5)]
    beam: usize,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Trained model checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Documents to narrate (JSON Lines; stories are ignored).
    #[arg(long)]
    input: PathBuf,
    /// Output file [default: standard output].
    #[arg(long)]
    output: Option<PathBuf>,
    /// Vocabulary file overriding the one stored in the checkpoint.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Beam width.
    #[arg(long, default_value_t = 5)]
    beam: usize,
    /// Greedy decoding instead of beam search.
    #[arg(long)]
    greedy: bool,
    /// Never emit the unknown-word token.
    #[arg(long)]
    suppress_unk: bool,
    /// Maximum story length in tokens [default: value stored in the checkpoint].
    #[arg(long)]
    max_len: Option<usize>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Hypothesis stories, one per line.
    #[arg(long)]
    hyp: PathBuf,
    /// Reference stories, one per line.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Add-one smoothing for BLEU n-gram orders above 1.
    #[arg(long)]
    smoothing: bool,
    /// Also write the JSON report to this file.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TextFormat {
    /// `.jsonl` files as corpora, anything else as text.
    Auto,
    /// Stories of a JSON Lines corpus.
    Jsonl,
    /// One story per line.
    Text,
}

#[derive(Debug, Args)]
struct LmTrainArgs {
    /// Training text.
    #[arg(long)]
    input: PathBuf,
    /// Model file to write.
    #[arg(long)]
    output: PathBuf,
    /// How to read --input.
    #[arg(long, value_enum, default_value_t = TextFormat::Auto)]
    format: TextFormat,
    /// N-gram order.
    #[arg(long, default_value_t = 5)]
    order: usize,
    /// Absolute discount.
    #[arg(long, default_value_t = 0.75)]
    discount: f64,
}

#[derive(Debug, Args)]
struct LmScoreArgs {
    /// Model file written by lm-train.
    #[arg(long)]
    model: PathBuf,
    /// Text to score.
    #[arg(long)]
    input: PathBuf,
    /// How to read --input.
    #[arg(long, value_enum, default_value_t = TextFormat::Auto)]
    format: TextFormat,
    /// Print the perplexity of every line before the total.
    #[arg(long)]
    per_line: bool,
}

fn parse_dim(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(d @ (50 | 128 | 256)) => Ok(d),
        _ => Err(format!("{s:?} is not one of 50, 128, 256")),
    }
}

fn main() -> ExitCode {
    let argv: Vec<OsString> = std::env::args_os().collect();
    let cli = match parse_cli(argv) {
        Ok(cli) => cli,
        Err(Failure::Usage(e)) => e.exit(),
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

enum Failure {
    Usage(clap::Error),
    Domain(anyhow::Error),
}

/// Parse flags, then re-parse with config-file values for options left unset.
fn parse_cli(argv: Vec<OsString>) -> Result<Cli, Failure> {
    let mut cmd = Cli::command();
    cmd.build();
    let matches = cmd
        .clone()
        .try_get_matches_from(&argv)
        .map_err(Failure::Usage)?;
    let Some((sub, sub_matches)) = matches.subcommand() else {
        unreachable!("subcommand is required")
    };
    let Some(path) = sub_matches.get_one::<PathBuf>("config") else {
        return Cli::from_arg_matches(&matches).map_err(Failure::Usage);
    };
    if !path.exists() {
        return Err(Failure::Domain(anyhow::anyhow!(
            "{}: file not found",
            path.display()
        )));
    }
    let extra = config::injected_args(&cmd, sub, sub_matches, path).map_err(|e| {
        Failure::Usage(cmd.error(clap::error::ErrorKind::InvalidValue, format!("{e:#}")))
    })?;
    let merged = cmd
        .try_get_matches_from(argv.into_iter().chain(extra))
        .map_err(Failure::Usage)?;
    Cli::from_arg_matches(&merged).map_err(Failure::Usage)
}

fn run(cli: Cli) -> Result<()> {
    let threads = match (cli.global.threads, cli.global.deterministic) {
        (0, true) => 1,
        (n, _) => n,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("configuring worker threads")?;
    let seed = cli.global.seed;
    match cli.command {
        Cmd::Stats(a) => stats(a),
        Cmd::BuildVocab(a) => build_vocab_cmd(a),
        Cmd::Train(a) => train(a, seed),
        Cmd::Generate(a) => generate(a),
        Cmd::Evaluate(a) => evaluate(a),
        Cmd::LmTrain(a) => lm_train(a),
        Cmd::LmScore(a) => lm_score(a),
    }
}

fn require(path: &Path) -> Result<()> {
    if !path.exists() {
        bail!("{}: file not found", path.display());
    }
    Ok(())
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("{}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(out.flush()?)
        }
    }
}

fn render_stats(s: &CorpusStats) -> String {
    let rows = [
        ("documents", s.doc_count.to_string(), String::new()),
        (
            "sentences per document",
            format!("{:.2}", s.avg_sentences_caption),
            format!("{:.2}", s.avg_sentences_story),
        ),
        (
            "words per document",
            format!("{:.2}", s.avg_words_caption),
            format!("{:.2}", s.avg_words_story),
        ),
        (
            "non-overlapping words",
            String::new(),
            format!("{:.2}", s.avg_nonoverlap_words),
        ),
        (
            "unseen non-stop tokens",
            String::new(),
            format!("{:.2}%", 100.0 * s.unseen_nonstop_fraction),
        ),
        (
            "unseen non-stop share of all",
            String::new(),
            format!("{:.2}%", 100.0 * s.unseen_nonstop_story_share),
        ),
    ];
    let mut out = format!("{:<30}{:>12}{:>12}\n", "", "captions", "stories");
    for (name, cap, story) in rows {
        out.push_str(&format!("{name:<30}{cap:>12}{story:>12}\n"));
    }
    out
}

fn stats(a: StatsArgs) -> Result<()> {
    require(&a.input)?;
    let examples = read_jsonl(&a.input)?;
    let stop = match &a.stopwords {
        Some(p) => {
            require(p)?;
            load_stopwords(p)?
        }
        None => default_stopwords(),
    };
    let s = compute_stats(&examples, &stop)?;
    let text = if a.json {
        format!("{}\n", serde_json::to_string(&s)?)
    } else {
        render_stats(&s)
    };
    write_output(None, &text)
}

fn build_vocab_cmd(a: BuildVocabArgs) -> Result<()> {
    require(&a.input)?;
    let examples = read_jsonl(&a.input)?;
    let vocab = build_vocab(&examples, a.min_count, a.max_size)?;
    vocab.save(&a.output)?;
    eprintln!("{} tokens written to {}", vocab.len(), a.output.display());
    Ok(())
}

fn train(a: TrainArgs, seed: u64) -> Result<()> {
    require(&a.train)?;
    require(&a.val)?;
    let train_ex = read_jsonl(&a.train)?;
    let val_ex = read_jsonl(&a.val)?;
    let vocab = match &a.vocab {
        Some(p) => {
            require(p)?;
            Vocab::load(p)?
        }
        None => build_vocab(&train_ex, a.min_count, a.max_size)?,
    };
    let train_pairs = encode_all(&train_ex, &vocab)?;
    let val_pairs = encode_all(&val_ex, &vocab)?;
    let hidden = a.hidden.unwrap_or(a.dim);
    let hp = Hyperparams {
        embed_dim: a.dim,
        hidden_dim: hidden,
        dropout_rate: a.dropout,
        vocab_size: vocab.len(),
        max_decode_len: a.max_decode_len,
        beam_width: a.beam,
        ..Hyperparams::default()
    };
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("{}", a.out_dir.display()))?;
    let log = a
        .log
        .clone()
        .unwrap_or_else(|| a.out_dir.join("train_log.csv"));
    let config = TrainConfig {
        batch_size: a.batch_size,
        eval_every: a.eval_every,
        clip_norm: a.clip,
        learning_rate: a.lr,
        seed,
        checkpoint_dir: Some(a.out_dir.clone()),
        log_path: Some(log.clone()),
        ..TrainConfig::new(hp, a.iterations)
    };
    eprintln!(
        "training on {} pairs ({} validation), vocabulary {}, E={} H={}",
        train_pairs.len(),
        val_pairs.len(),
        vocab.len(),
        a.dim,
        hidden
    );
    let init = d2s_core::model::init_params(&config.hp, seed)?;
    let outcome =
        trainer::train_with(&config, &train_pairs, &val_pairs, Some(&vocab), init, |r| {
            if let Some(b) = r.val_bleu4 {
                eprintln!(
                    "iteration {} loss {:.4} validation BLEU-4 {:.2}",
                    r.iteration, r.loss, b
                );
            }
        })?;
    eprintln!(
        "wrote {} and {} to {}, log {}",
        LAST_CHECKPOINT,
        BEST_CHECKPOINT,
        a.out_dir.display(),
        log.display()
    );
    if let Some(b) = outcome.best_bleu {
        eprintln!("best validation BLEU-4 {b:.2}");
    }
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<()> {
    require(&a.checkpoint)?;
    require(&a.input)?;
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let vocab = match (&a.vocab, ckpt.vocab) {
        (Some(p), _) => {
            require(p)?;
            Vocab::load(p)?
        }
        (None, Some(v)) => v,
        (None, None) => bail!("{} has no vocabulary; pass --vocab", a.checkpoint.display()),
    };
    if vocab.len() != ckpt.hp.vocab_size {
        bail!(
            "vocabulary has {} tokens but the model expects {}",
            vocab.len(),
            ckpt.hp.vocab_size
        );
    }
    let examples = read_jsonl(&a.input)?;
    let opts = DecodeOptions {
        max_len: a.max_len.unwrap_or(ckpt.hp.max_decode_len),
        suppress_unk: a.suppress_unk,
    };
    let strategy = if a.greedy {
        Strategy::Greedy
    } else {
        Strategy::Beam(a.beam)
    };
    let stories = generate_stories(&ckpt.params, &ckpt.hp, &vocab, &examples, strategy, &opts)?;
    let mut text = String::new();
    for s in stories {
        text.push_str(&s);
        text.push('\n');
    }
    write_output(a.output.as_deref(), &text)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    require(&a.hyp)?;
    require(&a.reference)?;
    let report = evaluate_files(&a.hyp, &a.reference, a.smoothing)?;
    let json = report.to_json();
    if let Some(p) = &a.json {
        std::fs::write(p, format!("{json}\n")).with_context(|| format!("{}", p.display()))?;
    }
    write_output(
        None,
        &format!("{}\n{json}\n", report.render_table().trim_end()),
    )
}

fn read_stories(path: &Path, format: TextFormat) -> Result<Vec<Vec<String>>> {
    require(path)?;
    let jsonl = match format {
        TextFormat::Jsonl => true,
        TextFormat::Text => false,
        TextFormat::Auto => path.extension().is_some_and(|e| e == "jsonl"),
    };
    let texts: Vec<String> = if jsonl {
        read_jsonl(path)?.into_iter().map(|e| e.story).collect()
    } else {
        let text = std::fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
        text.lines().map(str::to_string).collect()
    };
    Ok(texts.iter().map(|t| tokenize(t)).collect())
}

fn lm_train(a: LmTrainArgs) -> Result<()> {
    let stories = read_stories(&a.input, a.format)?;
    let config = LmConfig {
        order: a.order,
        discount: a.discount,
        ..LmConfig::default()
    };
    let model = ngram_lm::train(&stories, config)?;
    ngram_lm::save_model(&model, &a.output)?;
    eprintln!(
        "order-{} model over {} word types written to {}",
        a.order,
        model.vocab_size(),
        a.output.display()
    );
    Ok(())
}

fn lm_score(a: LmScoreArgs) -> Result<()> {
    require(&a.model)?;
    let model = ngram_lm::load_model(&a.model)?;
    let stories: Vec<Vec<String>> = read_stories(&a.input, a.format)?
        .into_iter()
        .filter(|s| !s.is_empty())
        .collect();
    if stories.is_empty() {
        bail!("{}: no text to score", a.input.display());
    }
    let mut text = String::new();
    if a.per_line {
        for s in &stories {
            text.push_str(&format!("{:.4}\n", model.perplexity(s)?));
        }
    }
    let events: usize = stories.iter().map(|s| s.len() + 1).sum();
    text.push_str(&format!(
        "perplexity {:.4} over {} sentences ({} events)\n",
        model.corpus_perplexity(&stories)?,
        stories.len(),
        events
    ));
    write_output(None, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<OsString> {
        s.split_whitespace().map(OsString::from).collect()
    }

    #[test]
    fn dim_presets_only() {
        assert_eq!(parse_dim("128"), Ok(128));
        assert!(parse_dim("64").is_err());
        assert!(parse_dim("x").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn config_fills_unset_options_only() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(
            &cfg,
            "beam = 9\ngreedy = true\nsuppress_unk = false\norder = 3\nseed = 4\n",
        )
        .unwrap();
        let cli = parse_cli(args(&format!(
            "d2s generate --checkpoint c --input i --beam 2 --config {}",
            cfg.display()
        )))
        .ok()
        .unwrap();
        let Cmd::Generate(g) = cli.command else {
            panic!()
        };
        assert_eq!(g.beam, 2);
        assert!(g.greedy);
        assert!(!g.suppress_unk);
        assert_eq!(cli.global.seed, 4);
    }

    #[test]
    fn unknown_config_key_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "colour = blue\n").unwrap();
        let res = parse_cli(args(&format!(
            "d2s evaluate --hyp h --ref r --config {}",
            cfg.display()
        )));
        assert!(matches!(res, Err(Failure::Usage(_))));
    }
}
