use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use threeplayer_core::oracle::ObjectiveForm;
use threeplayer_core::players::{GameConfig, Sparsity};
use threeplayer_core::trainer::{Schedule, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "threeplayer", version, about = "Three-player selective rationalization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Write a synthetic dataset with planted rationales as JSONL.
    Synth(SynthArgs),
    /// Train the generator, predictor and complement predictor.
    Train(TrainArgs),
    /// Score a checkpoint on a labelled dataset.
    Eval(EvalArgs),
    /// Write per-example rationales and the `*`-masked text export.
    Rationalize(RationalizeArgs),
    /// Enumerate every mask function of a finite task and certify the minimizers.
    Verify(VerifyArgs),
    /// Cut single-aspect spans out of multi-aspect reviews.
    ExtractAspect(ExtractArgs),
    /// Render training logs or evaluation reports as a plain-text table.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    Planted,
    Degeneration,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 20)]
    pub len: usize,
    #[arg(long, default_value_t = 50)]
    pub vocab: usize,
    /// Contiguous signal tokens per example (planted only).
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Probability that a signal token is flipped to the other class (planted only).
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Game and training overrides, applied on top of `--config`.
#[derive(Args, Debug, Default)]
pub struct ConfigOverrides {
    /// JSON file `{"game": {...}, "train": {...}}`; flags win over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lambda_g: Option<f64>,
    #[arg(long)]
    pub lambda_s: Option<f64>,
    #[arg(long)]
    pub lambda_cont: Option<f64>,
    #[arg(long)]
    pub h: Option<f64>,
    /// Sparsity budget as a fraction of the sequence length.
    #[arg(long, conflicts_with = "sparsity_count")]
    pub sparsity_fraction: Option<f64>,
    /// Sparsity budget as a token count.
    #[arg(long)]
    pub sparsity_count: Option<f64>,
    #[arg(long)]
    pub continuity_c: Option<f64>,
    #[arg(long)]
    pub max_pieces: Option<usize>,
    #[arg(long)]
    pub explore: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub reward_margin: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr_predictors: Option<f64>,
    #[arg(long)]
    pub lr_generator: Option<f64>,
    #[arg(long)]
    pub baseline_decay: Option<f64>,
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleArg>,
    #[arg(long)]
    pub pretrain_epochs_classifier: Option<usize>,
    #[arg(long)]
    pub pretrain_epochs_generator: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub predictor_steps: Option<usize>,
    #[arg(long)]
    pub generator_steps: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub init_scale: Option<f64>,
    #[arg(long)]
    pub introspective: Option<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    Joint,
    ThreeStep,
}

impl From<ScheduleArg> for Schedule {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::Joint => Schedule::Joint,
            ScheduleArg::ThreeStep => Schedule::ThreeStep,
        }
    }
}

macro_rules! set {
    ($src:expr => $dst:expr) => {
        if let Some(v) = $src {
            $dst = v.into();
        }
    };
}

impl ConfigOverrides {
    pub fn apply_game(&self, g: &mut GameConfig) {
        set!(self.lambda_g => g.lambda_g);
        set!(self.lambda_s => g.lambda_s);
        set!(self.lambda_cont => g.lambda_cont);
        set!(self.h => g.h);
        if let Some(f) = self.sparsity_fraction {
            g.sparsity = Sparsity::Fraction(f);
        }
        if let Some(c) = self.sparsity_count {
            g.sparsity = Sparsity::Count(c);
        }
        set!(self.continuity_c => g.continuity_c);
        set!(self.max_pieces => g.max_pieces);
        set!(self.explore => g.explore);
        set!(self.threshold => g.threshold);
        set!(self.reward_margin => g.reward_margin);
    }

    pub fn apply_train(&self, t: &mut TrainConfig) {
        set!(self.epochs => t.epochs);
        set!(self.batch_size => t.batch_size);
        set!(self.lr_predictors => t.lr_predictors);
        set!(self.lr_generator => t.lr_generator);
        set!(self.baseline_decay => t.baseline_decay);
        set!(self.schedule => t.schedule);
        set!(self.pretrain_epochs_classifier => t.pretrain_epochs_classifier);
        set!(self.pretrain_epochs_generator => t.pretrain_epochs_generator);
        set!(self.seed => t.seed);
        set!(self.eval_every => t.eval_every);
        set!(self.predictor_steps => t.predictor_steps);
        set!(self.generator_steps => t.generator_steps);
        set!(self.embed_dim => t.model.embed_dim);
        set!(self.hidden_dim => t.model.hidden_dim);
        set!(self.init_scale => t.model.init_scale);
        set!(self.introspective => t.model.introspective);
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training JSONL.
    #[arg(long)]
    pub train: PathBuf,
    /// Development JSONL for per-epoch evaluation and best-checkpoint selection.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub overrides: ConfigOverrides,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Evaluate per-example top-k masks at this selection ratio instead of the threshold.
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Accuracy slack above the majority rate for the degeneration verdict.
    #[arg(long, default_value_t = threeplayer_core::eval::DEFAULT_SLACK)]
    pub slack: f64,
    /// Output JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RationalizeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Rationale records (JSONL).
    #[arg(long)]
    pub out: PathBuf,
    /// Masked-text export (JSONL) with selected words replaced by `*`.
    #[arg(long)]
    pub masked_out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormArg {
    Entropy,
    Xent,
}

impl From<FormArg> for ObjectiveForm {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::Entropy => ObjectiveForm::Entropy,
            FormArg::Xent => ObjectiveForm::Xent,
        }
    }
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// FiniteTask JSON; the built-in position-2 task when omitted.
    #[arg(long)]
    pub task: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormArg::Entropy)]
    pub form: FormArg,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_g: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_s: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_cont: f64,
    /// Gap margin in bits; half the label entropy when omitted.
    #[arg(long)]
    pub h: Option<f64>,
    /// Sparsity budget in tokens.
    #[arg(long, default_value_t = 1.0)]
    pub sparsity_count: f64,
    #[arg(long, default_value_t = 1)]
    pub max_pieces: usize,
    /// Output JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    /// Plain text, one whitespace-tokenized review per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Target anchor word (repeatable), e.g. `appearance` for `appearance :`.
    #[arg(long = "aspect", required = true)]
    pub aspects: Vec<String>,
    /// An anchor needs strictly more occurrences than this.
    #[arg(long, default_value_t = 0)]
    pub threshold: usize,
    /// One extracted span per line.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Training logs (JSONL): one table of epochs per log.
    #[arg(long = "log")]
    pub logs: Vec<PathBuf>,
    /// Evaluation outputs of `eval`: one row per file.
    #[arg(long = "eval")]
    pub evals: Vec<PathBuf>,
    /// Text output; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
