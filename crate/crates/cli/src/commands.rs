use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use threeplayer_core::checkpoint::{read_training_log, write_training_log, Checkpoint};
use threeplayer_core::data::{
    self as data, gen_degeneration_dataset, gen_planted_dataset, load_jsonl, load_jsonl_with_vocab, Dataset,
    DegenerationSpec, FiniteTask, PlantedSpec, Vocab, UNK_WORD,
};
use threeplayer_core::eval::{degeneration_report, evaluate, infer_dataset, DegenerationReport, EvalReport, MaskRule};
use threeplayer_core::oracle::{
    check_conditions, enumerate_best_masks, label_entropy, ConditionReport, Enumeration, MaskFunction,
};
use threeplayer_core::players::{star_masked, GameConfig, RationaleRecord, Sparsity};
use threeplayer_core::trainer::{run_training, EpochRecord, TrainConfig};

use crate::args::{
    EvalArgs, ExtractArgs, RationalizeArgs, ReportArgs, SynthArgs, SynthKind, TrainArgs, VerifyArgs,
};
use crate::manifest::{sibling_path, Manifest};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const BEST_CHECKPOINT_FILE: &str = "best.ckpt";
pub const LOG_FILE: &str = "log.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_data(path: &Path, vocab: Option<&Vocab>) -> Result<Dataset> {
    match vocab {
        Some(v) => load_jsonl_with_vocab(path, v),
        None => load_jsonl(path),
    }
    .with_context(|| format!("loading {}", path.display()))
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum SynthConfig {
    Planted { spec: PlantedSpec, seed: u64 },
    Degeneration { spec: DegenerationSpec, seed: u64 },
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let (data, config) = match a.kind {
        SynthKind::Planted => {
            let spec = PlantedSpec {
                num_examples: a.n,
                len: a.len,
                vocab_size: a.vocab,
                signal_positions: a.k,
                noise_rate: a.noise,
            };
            (gen_planted_dataset(&spec, a.seed)?, SynthConfig::Planted { spec, seed: a.seed })
        }
        SynthKind::Degeneration => {
            let spec = DegenerationSpec {
                num_examples: a.n,
                len: a.len,
                vocab_size: a.vocab,
            };
            (gen_degeneration_dataset(&spec, a.seed)?, SynthConfig::Degeneration { spec, seed: a.seed })
        }
    };
    data.write_jsonl(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    let mut m = Manifest::new("synth", Some(a.seed), &config)?;
    m.output(&a.out)?;
    m.write(&sibling_path(&a.out))
}

/// Configuration file accepted by `train --config`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub game: GameConfig,
    pub train: TrainConfig,
}

fn resolve_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = match &a.overrides.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => RunConfig::default(),
    };
    a.overrides.apply_game(&mut cfg.game);
    a.overrides.apply_train(&mut cfg.train);
    Ok(cfg)
}

pub fn train(a: TrainArgs) -> Result<()> {
    let cfg = resolve_config(&a)?;
    let mut train_set = load_data(&a.train, None)?;
    let mut dev_set = a.dev.as_deref().map(|p| load_data(p, Some(&train_set.vocab))).transpose()?;
    let classes = dev_set
        .iter()
        .map(|d| d.num_classes)
        .fold(train_set.num_classes, usize::max)
        .max(2);
    train_set.num_classes = classes;
    if let Some(d) = dev_set.as_mut() {
        d.num_classes = classes;
    }

    let state = run_training(&train_set, dev_set.as_ref(), &cfg.game, &cfg.train)?;

    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let mut m = Manifest::new("train", Some(cfg.train.seed), &cfg)?;
    m.input(&a.train)?;
    if let Some(d) = &a.dev {
        m.input(d)?;
    }
    if let Some(c) = &a.overrides.config {
        m.input(c)?;
    }
    let vocab = &train_set.vocab;
    let ckpt_path = a.out_dir.join(CHECKPOINT_FILE);
    Checkpoint::from_state(&state, &state.params, &cfg.game, &cfg.train, vocab).save(&ckpt_path)?;
    m.output(&ckpt_path)?;
    if let Some(best) = &state.best {
        let path = a.out_dir.join(BEST_CHECKPOINT_FILE);
        let mut ck = Checkpoint::from_state(&state, &best.params, &cfg.game, &cfg.train, vocab);
        ck.header.epoch = best.epoch;
        ck.save(&path)?;
        m.output(&path)?;
    }
    let log_path = a.out_dir.join(LOG_FILE);
    write_training_log(&log_path, &state.history)?;
    m.output(&log_path)?;
    m.write(&a.out_dir.join(MANIFEST_FILE))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))
}

fn load_for_checkpoint(path: &Path, ck: &Checkpoint) -> Result<Dataset> {
    let mut data = load_data(path, Some(&ck.header.vocab))?;
    if data.num_classes > ck.header.num_classes {
        bail!(
            "{}: labels need {} classes but the checkpoint has {}",
            path.display(),
            data.num_classes,
            ck.header.num_classes
        );
    }
    data.num_classes = ck.header.num_classes;
    Ok(data)
}

#[derive(Serialize)]
struct EvalOutput {
    report: EvalReport,
    degeneration: DegenerationReport,
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let data = load_for_checkpoint(&a.data, &ck)?;
    let game = &ck.header.game;
    let report = evaluate(&data, &ck.params, game, a.ratio)?;
    let degeneration = degeneration_report(&data, &ck.params, game, a.slack)?;
    write_json(&a.out, &EvalOutput { report, degeneration })?;
    let mut m = Manifest::new("eval", Some(ck.header.seed), serde_json::json!({"ratio": a.ratio, "slack": a.slack}))?;
    m.input(&a.checkpoint)?;
    m.input(&a.data)?;
    m.output(&a.out)?;
    m.write(&sibling_path(&a.out))
}

#[derive(Serialize)]
struct MaskedRecord<'a> {
    tokens: &'a [String],
    label: usize,
}

fn words_of(ex: &threeplayer_core::data::TokenSequence, vocab: &Vocab) -> Vec<String> {
    match &ex.raw {
        Some(raw) => raw.clone(),
        None => ex
            .tokens
            .iter()
            .map(|&t| vocab.word(t).unwrap_or(UNK_WORD).to_string())
            .collect(),
    }
}

pub fn rationalize(a: RationalizeArgs) -> Result<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let data = load_for_checkpoint(&a.data, &ck)?;
    let rule = match a.ratio {
        Some(r) => MaskRule::Ratio(r),
        None => MaskRule::Threshold(ck.header.game.threshold),
    };
    let inferred = infer_dataset(&data, &ck.params, rule)?;
    let mut records = BufWriter::new(fs::File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?);
    let mut masked = BufWriter::new(
        fs::File::create(&a.masked_out).with_context(|| format!("creating {}", a.masked_out.display()))?,
    );
    for (ex, inf) in data.examples.iter().zip(inferred) {
        let words = words_of(ex, &ck.header.vocab);
        let starred = star_masked(&words, &inf.mask);
        serde_json::to_writer(
            &mut masked,
            &MaskedRecord {
                tokens: &starred,
                label: ex.label,
            },
        )?;
        masked.write_all(b"\n")?;
        let rec = RationaleRecord {
            tokens: words,
            label: ex.label,
            predicted: inf.predicted,
            mask: inf.mask,
            probs: inf.probs,
        };
        serde_json::to_writer(&mut records, &rec)?;
        records.write_all(b"\n")?;
    }
    records.flush()?;
    masked.flush()?;
    let mut m = Manifest::new("rationalize", Some(ck.header.seed), serde_json::json!({"ratio": a.ratio}))?;
    m.input(&a.checkpoint)?;
    m.input(&a.data)?;
    m.output(&a.out)?;
    m.output(&a.masked_out)?;
    m.write(&sibling_path(&a.out))
}

#[derive(Serialize)]
struct VerifyOutput {
    task: String,
    config: GameConfig,
    label_entropy_bits: f64,
    enumeration: Enumeration,
    minimizer_conditions: Vec<ConditionReport>,
    all_minimizers_certified: bool,
}

fn format_mask_fn(m: &MaskFunction) -> String {
    m.table
        .iter()
        .map(|z| z.iter().map(|b| char::from(b'0' + b)).collect::<String>())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn verify(a: VerifyArgs) -> Result<()> {
    let task = match &a.task {
        Some(p) => FiniteTask::from_json_file(p).with_context(|| format!("loading {}", p.display()))?,
        None => FiniteTask::position2(),
    };
    let hy = label_entropy(&task);
    let config = GameConfig {
        lambda_g: a.lambda_g,
        lambda_s: a.lambda_s,
        lambda_cont: a.lambda_cont,
        h: a.h.unwrap_or(0.5 * hy),
        sparsity: Sparsity::Count(a.sparsity_count),
        max_pieces: a.max_pieces,
        ..GameConfig::default()
    };
    let enumeration = enumerate_best_masks(&task, &config, a.form.into())?;
    let conditions = enumeration
        .minimizers
        .iter()
        .map(|m| check_conditions(&task, m, &config))
        .collect::<threeplayer_core::Result<Vec<_>>>()?;
    let certified = conditions.iter().all(ConditionReport::all);

    let inputs: Vec<String> = task
        .iter()
        .map(|(ex, _)| format!("{:?}->{}", ex.tokens, ex.label))
        .collect();
    println!("task: {}", task.description);
    println!("inputs: {}", inputs.join(" "));
    println!(
        "candidates: {}  best objective: {:.6}  minimizers: {}",
        enumeration.candidates,
        enumeration.best_value,
        enumeration.minimizers.len()
    );
    for (m, c) in enumeration.minimizers.iter().zip(&conditions) {
        println!(
            "  {}  sufficient={} comprehensive={} compact={}",
            format_mask_fn(m),
            c.sufficient,
            c.comprehensive,
            c.compact
        );
    }

    let out = VerifyOutput {
        task: task.description.clone(),
        config: config.clone(),
        label_entropy_bits: hy,
        enumeration,
        minimizer_conditions: conditions,
        all_minimizers_certified: certified,
    };
    write_json(&a.out, &out)?;
    let mut m = Manifest::new("verify", None, &config)?;
    if let Some(p) = &a.task {
        m.input(p)?;
    }
    m.output(&a.out)?;
    m.write(&sibling_path(&a.out))
}

pub fn extract_aspect(a: ExtractArgs) -> Result<()> {
    let text = fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let reviews: Vec<Vec<&str>> = text.lines().map(|l| l.split_whitespace().collect()).collect();
    let targets: HashSet<String> = a.aspects.iter().cloned().collect();
    let spans = data::extract_aspect(&reviews, &targets, a.threshold);
    let mut out = String::new();
    for s in &spans {
        out.push_str(&s.join(" "));
        out.push('\n');
    }
    fs::write(&a.out, out).with_context(|| format!("writing {}", a.out.display()))?;
    let mut aspects = a.aspects.clone();
    aspects.sort();
    let mut m = Manifest::new(
        "extract-aspect",
        None,
        serde_json::json!({"aspects": aspects, "threshold": a.threshold}),
    )?;
    m.input(&a.input)?;
    m.output(&a.out)?;
    m.write(&sibling_path(&a.out))
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.2}", 100.0 * x))
}

fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            if i == 0 {
                let _ = write!(s, "{c:<w$}");
            } else {
                let _ = write!(s, "{c:>w$}");
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out.push_str(&line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect()));
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

pub fn log_table(history: &[EpochRecord]) -> String {
    let rows: Vec<Vec<String>> = history
        .iter()
        .map(|r| {
            vec![
                r.epoch.to_string(),
                format!("{:?}", r.phase).to_lowercase(),
                format!("{:.4}", r.l_p),
                format!("{:.4}", r.l_c),
                format!("{:.4}", r.reward),
                format!("{:.4}", r.baseline),
                pct(r.dev_acc),
                pct(r.dev_acc_c),
                pct(r.dev_precision),
                pct(Some(r.mean_selected_fraction)),
            ]
        })
        .collect();
    render_table(
        &["Epoch", "Phase", "L_p", "L_c", "Reward", "Baseline", "Acc", "Acc^c", "Prec", "%Highlight"],
        &rows,
    )
}

#[derive(Deserialize)]
struct EvalFile {
    report: EvalReport,
}

pub fn eval_table(rows: &[(String, EvalReport)]) -> String {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, r)| {
            vec![
                name.clone(),
                pct(Some(r.accuracy)),
                pct(Some(r.accuracy_c)),
                pct(r.precision),
                pct(r.recall),
                pct(Some(r.mean_selected_fraction)),
                format!("{:.2}", r.mean_pieces),
            ]
        })
        .collect();
    render_table(&["Model", "Acc", "Acc^c", "Prec", "Rec", "%Highlight", "Pieces"], &rows)
}

fn display_name(p: &Path) -> String {
    p.display().to_string()
}

pub fn report(a: ReportArgs) -> Result<()> {
    if a.logs.is_empty() && a.evals.is_empty() {
        bail!("nothing to report: pass --log and/or --eval");
    }
    let mut out = String::new();
    if !a.evals.is_empty() {
        let mut rows = Vec::new();
        for p in &a.evals {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let f: EvalFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            rows.push((display_name(p), f.report));
        }
        out.push_str(&eval_table(&rows));
    }
    for p in &a.logs {
        let history = read_training_log(p)?;
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = writeln!(out, "{}", display_name(p));
        out.push_str(&log_table(&history));
    }
    match &a.out {
        Some(path) => fs::write(path, out).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}
