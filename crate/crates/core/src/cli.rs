//! The `kws` command line.
//!
//! Every subcommand is deterministic given its flags. Exit codes: 0 on
//! success, 2 for usage and data errors, 3 when an internal check fails.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::corpus::{
    anchor_classes, experiment_fuzzy_map, held_out_classes, read_dataset, synth_pairs,
    write_corpus, CorpusError, ExperimentConfig,
};
use crate::ctc::SearchError;
use crate::matcher::{
    gradient_check, load_weights_inferred, save_weights, small_case, train, MatcherConfig,
    MatcherError, MatcherWeights, TrainHyper,
};
use crate::metrics::{read_score_csv, report, roc_points, write_roc_csv, MetricsError, ScoreSet};
use crate::phoneme::{tokenize, FuzzyMap, Lexicon, PhonemeError, PhonemeInventory};
use crate::pipeline::{
    enroll, featurize, frame_to_seconds, read_features, read_manifest, run, score_dump,
    write_features, LinearEncoder, Mode, PipelineConfig, PipelineError, Stage2,
};
use crate::posteriorgram::{read_pgrm, synthesize, write_pgrm, PgrmError, SynthSpec};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Phoneme(#[from] PhonemeError),
    #[error(transparent)]
    Posteriorgram(#[from] PgrmError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Matcher(#[from] MatcherError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("config {path}: {message}")]
    Config { path: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    /// A self-check failed.
    #[error("{0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invariant(_) => 3,
            _ => 2,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Formats with 6 significant digits, `%g` style.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..6).contains(&exp) {
        let s = format!("{:.*}", (5 - exp).max(0) as usize, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.5e}")
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "kws",
    version,
    about = "Two-stage user-defined keyword spotting"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML file with `inventory`, `lexicon`, `fuzzy` and `weights` paths,
    /// relative to the file. Flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub inventory: Option<PathBuf>,
    #[arg(long, global = true)]
    pub lexicon: Option<PathBuf>,
    #[arg(long, global = true)]
    pub fuzzy: Option<PathBuf>,
    #[arg(long, global = true)]
    pub weights: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Attention heads of the matcher (weight files do not record it).
    #[arg(long, global = true, default_value_t = 2)]
    pub heads: usize,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct StageArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::M0)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 0.5)]
    pub s1_threshold: f64,
    #[arg(long, default_value_t = 0.5)]
    pub s2_threshold: f64,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    /// Frames to skip after a detection; defaults to 4 per keyword phoneme.
    #[arg(long)]
    pub min_gap: Option<usize>,
    /// Context frames on each side of a stage-one span.
    #[arg(long, default_value_t = 2)]
    pub padding: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    M0,
    M1,
    M2,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::M0 => Mode::M0,
            ModeArg::M1 => Mode::M1,
            ModeArg::M2 => Mode::M2,
        }
    }
}

impl StageArgs {
    fn pipeline_config(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig {
            mode: self.mode.into(),
            s1_threshold: self.s1_threshold,
            s2_threshold: self.s2_threshold,
            padding: self.padding,
            ..PipelineConfig::default()
        };
        cfg.search.patience = self.patience;
        cfg.search.min_gap = self.min_gap;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the phoneme symbols and indices of a text.
    Tokenize { text: String },
    /// Synthesize a posteriorgram with one planted keyword.
    Synth(SynthArgs),
    /// Detect keywords in one posteriorgram, printing detections as JSON lines.
    Search(SearchArgs),
    /// Score a pair manifest: detections, per-record scores and metrics.
    Run(RunArgs),
    /// Train matcher weights on a dataset written by `synth-corpus`.
    TrainMatcher(TrainArgs),
    /// Compare analytic and finite-difference matcher gradients.
    GradCheck {
        #[arg(long, default_value_t = 1e-4)]
        step: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Write a synthetic anchor corpus: streams, manifest and training set.
    SynthCorpus(CorpusArgs),
    /// AUC, EER and Recall@FAR from a score CSV.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub keyword: String,
    #[arg(long)]
    pub frames: usize,
    #[arg(long, default_value_t = 4)]
    pub fpp: usize,
    #[arg(long, default_value_t = 0.95)]
    pub peak: f64,
    /// First keyword frame; centred when omitted.
    #[arg(long)]
    pub insert: Option<usize>,
    /// Also write FEAT1 stage-one features of this width.
    #[arg(long)]
    pub features_dim: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub pgrm: PathBuf,
    /// Keyword text; repeat for several keywords.
    #[arg(long = "keyword", required = true)]
    pub keywords: Vec<String>,
    /// FEAT1 features aligned with the posteriorgram, needed for M1.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[command(flatten)]
    pub stage: StageArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub stage: StageArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `train.jsonl` of a dataset.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lr_decay: f64,
    #[arg(long, default_value_t = 64)]
    pub d_model: usize,
    #[arg(long, default_value_t = 64)]
    pub d_gru: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Heldout,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Anchor classes to draw. Training classes are a prefix of one seeded
    /// sequence, so smaller corpora are subsets of larger ones.
    #[arg(long, default_value_t = 200)]
    pub classes: usize,
    #[arg(long, value_enum, default_value_t = Split::Train)]
    pub split: Split,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub scores: PathBuf,
    /// Score column; `s2` when every row has one, else `s1`, by default.
    #[arg(long, value_enum)]
    pub column: Option<Column>,
    /// Duration of the negative audio, enabling Recall@FAR.
    #[arg(long)]
    pub negative_hours: Option<f64>,
    #[arg(long)]
    pub roc: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Column {
    S1,
    S2,
}

#[derive(Debug, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    inventory: Option<PathBuf>,
    lexicon: Option<PathBuf>,
    fuzzy: Option<PathBuf>,
    weights: Option<PathBuf>,
}

/// Paths after merging the config file with flags.
struct Resources {
    inventory: Option<PathBuf>,
    lexicon: Option<PathBuf>,
    fuzzy: Option<PathBuf>,
    weights: Option<PathBuf>,
}

impl Resources {
    fn resolve(g: &GlobalArgs) -> Result<Self> {
        let mut file = FileConfig::default();
        if let Some(path) = &g.config {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            file = toml::from_str(&text).map_err(|e| CliError::Config {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            let base = path.parent().unwrap_or(Path::new(""));
            for p in [
                &mut file.inventory,
                &mut file.lexicon,
                &mut file.fuzzy,
                &mut file.weights,
            ]
            .into_iter()
            .flatten()
            {
                *p = base.join(&*p);
            }
        }
        Ok(Self {
            inventory: g.inventory.clone().or(file.inventory),
            lexicon: g.lexicon.clone().or(file.lexicon),
            fuzzy: g.fuzzy.clone().or(file.fuzzy),
            weights: g.weights.clone().or(file.weights),
        })
    }

    fn inventory(&self) -> Result<PhonemeInventory> {
        Ok(match &self.inventory {
            Some(p) => PhonemeInventory::load(p)?,
            None => PhonemeInventory::default_english(),
        })
    }

    fn lexicon(&self, inv: &PhonemeInventory) -> Result<Lexicon> {
        Ok(match &self.lexicon {
            Some(p) => Lexicon::load(p, inv)?,
            None => Lexicon::default_english(),
        })
    }

    fn fuzzy(&self, inv: &PhonemeInventory) -> Result<FuzzyMap> {
        Ok(match &self.fuzzy {
            Some(p) => FuzzyMap::load(p, inv)?,
            None if self.inventory.is_none() => FuzzyMap::default_english(),
            None => FuzzyMap::identity(inv),
        })
    }

    /// Weights, reading the config back from the file's tensor shapes.
    fn weights(&self, inv: &PhonemeInventory, heads: usize) -> Result<Option<MatcherWeights>> {
        let Some(path) = &self.weights else {
            return Ok(None);
        };
        let w = load_weights_inferred(path, heads)?;
        if w.config.vocab_size != inv.len() {
            return Err(MatcherError::ShapeMismatch(format!(
                "{} was trained on {} symbols, the inventory has {}",
                path.display(),
                w.config.vocab_size,
                inv.len()
            ))
            .into());
        }
        Ok(Some(w))
    }
}

fn out_path(g: &GlobalArgs, what: &str) -> Result<PathBuf> {
    g.out
        .clone()
        .ok_or_else(|| CliError::Usage(format!("{what} needs --out")))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

/// Parses `args` and runs the command, writing human output to `stdout`.
/// Returns the process exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 {
                write!(stdout, "{e}")
            } else {
                write!(stderr, "{e}")
            };
            return code;
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let g = &cli.global;
    let res = Resources::resolve(g)?;
    match &cli.command {
        Command::Tokenize { text } => cmd_tokenize(&res, text, out),
        Command::Synth(a) => cmd_synth(g, &res, a, out),
        Command::Search(a) => cmd_search(g, &res, a, out),
        Command::Run(a) => cmd_run(g, &res, a, out),
        Command::TrainMatcher(a) => cmd_train(g, &res, a, out),
        Command::GradCheck { step, tolerance } => cmd_grad_check(g, *step, *tolerance, out),
        Command::SynthCorpus(a) => cmd_synth_corpus(g, a, out),
        Command::Metrics(a) => cmd_metrics(g, a, out),
    }
}

macro_rules! say {
    ($out:expr, $($arg:tt)*) => {
        writeln!($out, $($arg)*).map_err(|source| CliError::Io { path: "<stdout>".into(), source })
    };
}

fn cmd_tokenize(res: &Resources, text: &str, out: &mut dyn Write) -> Result<()> {
    let inv = res.inventory()?;
    let seq = tokenize(text, &res.lexicon(&inv)?, &inv)?;
    say!(out, "{}", seq.symbols(&inv).join(" "))?;
    let idx: Vec<String> = seq.tokens().iter().map(usize::to_string).collect();
    say!(out, "{}", idx.join(" "))
}

fn cmd_synth(g: &GlobalArgs, res: &Resources, a: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let path = out_path(g, "synth")?;
    let inv = res.inventory()?;
    let keyword = tokenize(&a.keyword, &res.lexicon(&inv)?, &inv)?;
    let span = keyword.len() * a.fpp;
    let insert = a.insert.unwrap_or(a.frames.saturating_sub(span) / 2);
    let (pg, truth) = synthesize(
        &SynthSpec {
            keyword,
            total_frames: a.frames,
            frames_per_phoneme: a.fpp,
            insert_at: insert,
            peak_prob: a.peak,
            seed: g.seed,
        },
        &inv,
    )?;
    write_pgrm(&pg, &path)?;
    let shift = pg.frame_shift_s();
    let truth_json = serde_json::json!({
        "keyword": a.keyword,
        "phonemes": truth.keyword.symbols(&inv).join(" "),
        "start_frame": truth.start_frame,
        "end_frame": truth.end_frame,
        "t_start_s": frame_to_seconds(truth.start_frame, shift),
        "t_end_s": frame_to_seconds(truth.end_frame + 1, shift),
    });
    let truth_path = path.with_extension("truth.json");
    write_text(&truth_path, &format!("{truth_json}\n"))?;
    say!(
        out,
        "wrote {} ({} frames x {} symbols)",
        path.display(),
        pg.num_frames(),
        pg.vocab_size()
    )?;
    say!(
        out,
        "truth frames {}..={} -> {}",
        truth.start_frame,
        truth.end_frame,
        truth_path.display()
    )?;
    if let Some(d) = a.features_dim {
        let enc = LinearEncoder::new(inv.len(), d, 0);
        let feats = featurize(&pg, &enc, a.noise, g.seed ^ 0x5eed);
        let feat_path = path.with_extension("feat");
        write_features(&feats, &feat_path)?;
        say!(out, "features {} -> {}", d, feat_path.display())?;
    }
    Ok(())
}

fn cmd_search(g: &GlobalArgs, res: &Resources, a: &SearchArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = a.stage.pipeline_config()?;
    let inv = res.inventory()?;
    let lex = res.lexicon(&inv)?;
    let fuzzy = res.fuzzy(&inv)?;
    let pg = read_pgrm(&a.pgrm)?;
    pg.check_inventory(&inv)?;
    let specs = a
        .keywords
        .iter()
        .map(|k| enroll(k, &lex, &inv, &fuzzy))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let weights = res.weights(&inv, g.heads)?;
    let features = a.features.as_ref().map(read_features).transpose()?;
    let stage2 = Stage2 {
        weights: weights.as_ref(),
        features: features.as_ref(),
        encoder: None,
    };
    for d in run(&pg, &specs, stage2, &cfg)? {
        say!(
            out,
            "{}",
            serde_json::to_string(&d).expect("detection serializes")
        )?;
    }
    Ok(())
}

fn cmd_run(g: &GlobalArgs, res: &Resources, a: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let dir = out_path(g, "run")?;
    let cfg = a.stage.pipeline_config()?;
    let inv = res.inventory()?;
    let lex = res.lexicon(&inv)?;
    let fuzzy = res.fuzzy(&inv)?;
    let weights = res.weights(&inv, g.heads)?;
    if cfg.mode != Mode::M0 && weights.is_none() {
        return Err(PipelineError::MissingWeights(cfg.mode).into());
    }
    let records = read_manifest(&a.manifest)?;
    let base = a.manifest.parent().unwrap_or(Path::new(""));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let eval = score_dump(
        &records,
        base,
        &lex,
        &inv,
        &fuzzy,
        weights.as_ref(),
        &cfg,
        dir.join("scores.csv"),
    )?;

    let mut lines = String::new();
    for d in &eval.detections {
        lines.push_str(&serde_json::to_string(d).expect("detection serializes"));
        lines.push('\n');
    }
    write_text(&dir.join("detections.jsonl"), &lines)?;

    let scores = eval.final_scores()?;
    let hours = (eval.negative_seconds > 0.0).then(|| eval.negative_hours());
    let rep = report(&scores, hours, &[0.5, 1.0])?;
    let json = serde_json::to_string_pretty(&rep).expect("report serializes");
    write_text(&dir.join("metrics.json"), &(json + "\n"))?;
    write_roc_csv(dir.join("roc.csv"), &roc_points(&scores)?)?;

    say!(
        out,
        "records {}  detections {}  mode {}",
        eval.rows.len(),
        eval.detections.len(),
        cfg.mode
    )?;
    print_report(out, &rep)?;
    say!(out, "wrote {}", dir.display())
}

fn print_report(out: &mut dyn Write, rep: &crate::metrics::MetricsReport) -> Result<()> {
    say!(out, "auc {}", sig6(rep.auc))?;
    say!(out, "eer {}", sig6(rep.eer))?;
    for (rate, recall) in &rep.recall_at_far {
        say!(out, "recall@{rate}fa/h {}", sig6(*recall))?;
    }
    Ok(())
}

fn cmd_train(g: &GlobalArgs, res: &Resources, a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let path = out_path(g, "train-matcher")?;
    let inv = res.inventory()?;
    let data = read_dataset(&a.dataset, &inv)?;
    let d_enc = data.first().map_or(0, |e| e.audio_features.ncols());
    let config = MatcherConfig {
        vocab_size: inv.len(),
        d_model: a.d_model,
        d_enc,
        n_attn_layers: a.layers,
        n_heads: g.heads,
        d_gru: a.d_gru,
        seed: g.seed,
    };
    let hyper = TrainHyper {
        lr: a.lr,
        momentum: a.momentum,
        epochs: a.epochs,
        batch_size: a.batch,
        seed: g.seed,
        lr_decay: a.lr_decay,
        ..TrainHyper::default()
    };
    let outcome = train(&data, &config, &hyper)?;
    if !outcome.weights.is_finite() {
        return Err(CliError::Invariant(
            "training produced non-finite weights".into(),
        ));
    }
    save_weights(&outcome.weights, &path)?;
    say!(
        out,
        "examples {}  parameters {}",
        data.len(),
        outcome.weights.num_parameters()
    )?;
    let mut log = String::from("epoch,loss\n");
    for (i, l) in outcome.epoch_losses.iter().enumerate() {
        say!(out, "epoch {:>3}  loss {}", i + 1, sig6(*l))?;
        log.push_str(&format!("{},{l}\n", i + 1));
    }
    write_text(&path.with_extension("loss.csv"), &log)?;
    say!(out, "objective: utterance + phoneme matching loss; the CTC term of the total objective is not trained here (stage one is frozen)")?;
    say!(out, "wrote {}", path.display())
}

fn cmd_grad_check(g: &GlobalArgs, step: f64, tol: f64, out: &mut dyn Write) -> Result<()> {
    let (w, ex) = small_case(g.seed);
    let rep = gradient_check(&w, &ex, step)?;
    for (name, err) in &rep.per_tensor {
        say!(out, "{name:<28} {}", sig6(*err))?;
    }
    let max = rep.max_relative_error();
    say!(out, "max relative error {}", sig6(max))?;
    if max > tol {
        return Err(CliError::Invariant(format!(
            "gradient check failed: {} > {}",
            sig6(max),
            sig6(tol)
        )));
    }
    Ok(())
}

fn cmd_synth_corpus(g: &GlobalArgs, a: &CorpusArgs, out: &mut dyn Write) -> Result<()> {
    let dir = out_path(g, "synth-corpus")?;
    let inv = PhonemeInventory::default_english();
    let fuzzy = experiment_fuzzy_map(&inv)?;
    let mut exp = ExperimentConfig {
        seed: g.seed,
        ..ExperimentConfig::default()
    };
    let classes = match a.split {
        Split::Heldout => {
            exp.heldout_classes = a.classes;
            exp.corpus.scrambled_per_class = 0;
            held_out_classes(&exp, &inv)?
        }
        Split::Train => {
            let held = held_out_classes(&exp, &inv)?;
            let exclude = held.iter().map(|c| c.seq.tokens().to_vec()).collect();
            anchor_classes(a.classes, "ANCH", &inv, &exp.corpus, g.seed, &exclude)?
        }
    };
    let pair_seed = match a.split {
        Split::Train => g.seed ^ 0x1,
        Split::Heldout => g.seed ^ 0x3,
    };
    let pairs = synth_pairs(&classes, &exp.corpus, &inv, &fuzzy, pair_seed)?;
    let search_cfg = exp.pipeline.search_config();
    write_corpus(
        &dir,
        &classes,
        &pairs,
        &exp.corpus,
        &inv,
        &fuzzy,
        &search_cfg,
        g.seed ^ 0x2,
    )?;
    say!(
        out,
        "classes {}  pairs {}  -> {}",
        classes.len(),
        pairs.len(),
        dir.display()
    )
}

fn cmd_metrics(g: &GlobalArgs, a: &MetricsArgs, out: &mut dyn Write) -> Result<()> {
    let rows = read_score_csv(&a.scores)?;
    let column = a
        .column
        .unwrap_or(if !rows.is_empty() && rows.iter().all(|r| r.s2.is_some()) {
            Column::S2
        } else {
            Column::S1
        });
    let labelled = rows
        .iter()
        .map(|r| {
            let s = match column {
                Column::S1 => Some(r.s1),
                Column::S2 => r.s2,
            };
            s.map(|s| (r.label == 1, s))
                .ok_or_else(|| CliError::Usage(format!("{}: no s2 score", r.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let scores = ScoreSet::from_labelled(labelled)?;
    let rep = report(&scores, a.negative_hours, &[0.5, 1.0])?;
    print_report(out, &rep)?;
    if let Some(path) = &g.out {
        let json = serde_json::to_string_pretty(&rep).expect("report serializes");
        write_text(path, &(json + "\n"))?;
    }
    if let Some(path) = &a.roc {
        write_roc_csv(path, &roc_points(&scores)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.5), "0.5");
        assert_eq!(sig6(1.0 / 3.0), "0.333333");
        assert_eq!(sig6(2.0 / 3.0), "0.666667");
        assert_eq!(sig6(123456.7), "123457");
        assert_eq!(sig6(1234567.0), "1.23457e6");
        assert_eq!(sig6(1.5e-7), "1.50000e-7");
        assert_eq!(sig6(-0.25), "-0.25");
        assert_eq!(sig6(0.0), "0");
    }

    #[test]
    fn help_exits_zero_and_bad_flags_exit_two() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(main_with_args(["kws", "--help"], &mut o, &mut e), 0);
        assert_eq!(main_with_args(["kws", "bogus"], &mut o, &mut e), 2);
    }
}
