//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::collections::HashSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use threeplayer_core::checkpoint::{write_training_log, Checkpoint};
use threeplayer_core::data::{
    extract_aspect, gen_degeneration_dataset, gen_planted_dataset, Dataset, DegenerationSpec, FiniteTask,
    PlantedSpec, TokenSequence,
};
use threeplayer_core::eval::{evaluate, infer_dataset, EvalReport, MaskRule};
use threeplayer_core::numkit::{grad_check, ParamSet};
use threeplayer_core::objectives::generator_objective;
use threeplayer_core::oracle::{
    check_conditions, enumerate_best_masks, oracle_config, positional_code_mask, MaskFunction, ObjectiveForm,
};
use threeplayer_core::players::{
    apply_mask, classifier_xent, classifier_xent_backward, generator_backward, generator_forward, mask_log_likelihood,
    mask_log_likelihood_grad, GameConfig, ModelConfig, PlayerParams, Sparsity, SEL_B, SEL_W,
};
use threeplayer_core::trainer::{
    policy_gradient, reinforce_step, run_training, train_predictors_step, Schedule, TrainConfig, TrainState,
};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

// ---------------------------------------------------------------- 1

fn criterion_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let introspective = i % 2 == 1;
        let model = ModelConfig {
            embed_dim: 5,
            hidden_dim: 4,
            init_scale: 0.5,
            introspective,
        };
        let vocab = 15;
        let params = PlayerParams::init(vocab, 3, &model, 100 + i);
        let len = rng.random_range(2..=8);
        let tokens: Vec<usize> = (0..len).map(|_| rng.random_range(2..vocab)).collect();
        let label = rng.random_range(0..3);
        let z: Vec<u8> = (0..len).map(|_| rng.random_range(0..2)).collect();
        let adv: f64 = rng.random_range(-1.0..1.0);
        let views = apply_mask(&tokens, &z).unwrap();

        // both predictors on their masked views, and the introspection classifier
        let mut classifiers = vec![
            (params.predictor.clone(), views.rationale.clone()),
            (params.complement_predictor.clone(), views.complement.clone()),
        ];
        if let Some(c) = &params.introspection_classifier {
            classifiers.push((c.clone(), tokens.clone()));
        }
        for (mut p, view) in classifiers {
            let mut g = p.zero_grads();
            classifier_xent_backward(&view, label, &p, &mut g).unwrap();
            p.accumulate(&g, 1.0);
            worst = worst.max(grad_check(|q| classifier_xent(&view, label, q).unwrap(), &p, 1e-4));
        }

        // generator through the REINFORCE surrogate −adv·log π(z)
        let y = introspective.then(|| rng.random_range(0..3));
        let mut p: ParamSet = params.generator.clone();
        let trace = generator_forward(&tokens, &p, y).unwrap();
        let d: Vec<f64> = mask_log_likelihood_grad(&z, &trace.probs)
            .into_iter()
            .map(|g| -adv * g)
            .collect();
        let mut g = p.zero_grads();
        generator_backward(&tokens, &trace, &d, &p, &mut g).unwrap();
        p.accumulate(&g, 1.0);
        let surrogate = |q: &ParamSet| -adv * mask_log_likelihood(&z, &generator_forward(&tokens, q, y).unwrap().probs);
        worst = worst.max(grad_check(surrogate, &p, 1e-4));
    }
    Outcome::new(worst < 1e-4, format!("max relative error {worst:.2e} over 20 examples"))
}

// ---------------------------------------------------------------- 2

fn criterion_oracle() -> Outcome {
    let task = FiniteTask::position2();
    let cfg = oracle_config(
        &task,
        &GameConfig {
            lambda_g: 1.0,
            lambda_s: 1.0,
            lambda_cont: 1.0,
            sparsity: Sparsity::Count(1.0),
            max_pieces: 1,
            ..GameConfig::default()
        },
    );
    let middle = MaskFunction::constant(&task, &[0, 1, 0]);
    let e = enumerate_best_masks(&task, &cfg, ObjectiveForm::Entropy).unwrap();
    let only_middle = e.minimizers == vec![middle.clone()];
    let contains_middle = e.minimizers.contains(&middle);
    let certified = e
        .minimizers
        .iter()
        .all(|m| check_conditions(&task, m, &cfg).unwrap().all());
    let degenerate = check_conditions(&task, &positional_code_mask(&task), &cfg).unwrap();
    let rejects = degenerate.sufficient && degenerate.compact && !degenerate.comprehensive;
    let pass = only_middle && certified && rejects && e.candidates <= 4096;
    Outcome::new(
        pass,
        format!(
            "{} candidates, best {:.3e}, {} minimizers (exact set {{middle}}: {}, middle among them: {}), \
             all certified: {certified}, degenerate mask rejected on comprehensiveness only: {rejects}",
            e.candidates,
            e.best_value,
            e.minimizers.len(),
            only_middle,
            contains_middle
        ),
    )
}

// ---------------------------------------------------------------- 3, 4, 5

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn acceptance_train(introspective: bool, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 12,
        batch_size: 32,
        schedule: Schedule::ThreeStep,
        pretrain_epochs_classifier: 3,
        pretrain_epochs_generator: 2,
        seed,
        model: ModelConfig {
            introspective,
            ..ModelConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn acceptance_game(lambda_g: f64) -> GameConfig {
    GameConfig {
        lambda_g,
        sparsity: Sparsity::Fraction(0.15),
        ..GameConfig::default()
    }
}

struct Run {
    label: String,
    game: GameConfig,
    report: EvalReport,
}

impl Run {
    fn converged(&self) -> bool {
        self.report.accuracy > 0.8
    }
}

fn train_and_eval(data: &Dataset, game: &GameConfig, tc: &TrainConfig, label: String) -> Run {
    let (train, dev) = data.split_at(2000);
    let state = run_training(&train, Some(&dev), game, tc).unwrap();
    let report = evaluate(&dev, &state.params, game, None).unwrap();
    Run {
        label,
        game: game.clone(),
        report,
    }
}

fn criterion_degeneration(runs: &mut Vec<Run>) -> Outcome {
    let mut arms: Vec<Vec<EvalReport>> = Vec::new();
    for lambda_g in [0.0, 1.0] {
        let mut reports = Vec::new();
        for seed in SEEDS {
            let data = gen_degeneration_dataset(
                &DegenerationSpec {
                    num_examples: 2500,
                    len: 20,
                    vocab_size: 50,
                },
                seed,
            )
            .unwrap();
            let run = train_and_eval(
                &data,
                &acceptance_game(lambda_g),
                &acceptance_train(true, seed),
                format!("degeneration λ_g={lambda_g} seed {seed}"),
            );
            reports.push(run.report.clone());
            runs.push(run);
        }
        arms.push(reports);
    }
    let col = |arm: &[EvalReport], f: fn(&EvalReport) -> f64| arm.iter().map(f).collect::<Vec<_>>();
    let (a, b) = (&arms[0], &arms[1]);
    let (acc_a, accc_a, prec_a) = (col(a, |r| r.accuracy), col(a, |r| r.accuracy_c), col(a, |r| r.precision.unwrap()));
    let (acc_b, accc_b, prec_b) = (col(b, |r| r.accuracy), col(b, |r| r.accuracy_c), col(b, |r| r.precision.unwrap()));
    let clause_a = median(acc_a.clone()) >= 0.90 && median(accc_a.clone()) >= 0.75;
    let clause_b = median(acc_b.clone()) >= 0.85 && median(accc_b.clone()) < 0.65;
    let clause_c = median(prec_b.clone()) - median(prec_a.clone()) >= 0.2;
    Outcome::new(
        clause_a && clause_b && clause_c,
        format!(
            "(a) λ_g=0 acc {} acc_c {} → {clause_a}; (b) λ_g=1 acc {} acc_c {} → {clause_b}; \
             (c) precision {} → {}, Δmedian {:.3} → {clause_c}",
            fmt(&acc_a),
            fmt(&accc_a),
            fmt(&acc_b),
            fmt(&accc_b),
            fmt(&prec_a),
            fmt(&prec_b),
            median(prec_b.clone()) - median(prec_a.clone())
        ),
    )
}

fn criterion_planted(runs: &mut Vec<Run>) -> Outcome {
    let mut precision = Vec::new();
    let mut recall = Vec::new();
    for seed in SEEDS {
        let data = gen_planted_dataset(
            &PlantedSpec {
                num_examples: 2500,
                len: 20,
                vocab_size: 50,
                signal_positions: 3,
                noise_rate: 0.0,
            },
            seed,
        )
        .unwrap();
        let run = train_and_eval(
            &data,
            &acceptance_game(1.0),
            &acceptance_train(false, seed),
            format!("planted seed {seed}"),
        );
        precision.push(run.report.precision.unwrap());
        recall.push(run.report.recall.unwrap());
        runs.push(run);
    }
    let (mp, mr) = (median(precision.clone()), median(recall.clone()));
    Outcome::new(
        mp >= 0.8 && mr >= 0.7,
        format!("precision {} (median {mp:.3}), recall {} (median {mr:.3})", fmt(&precision), fmt(&recall)),
    )
}

fn criterion_compliance(runs: &[Run]) -> Outcome {
    let mut violations = Vec::new();
    let mut checked = 0;
    for r in runs.iter().filter(|r| r.converged()) {
        checked += 1;
        let s = match r.game.sparsity {
            Sparsity::Fraction(f) => f,
            Sparsity::Count(_) => unreachable!("acceptance runs use a fractional budget"),
        };
        let frac_ok = r.report.mean_selected_fraction <= s + 0.1;
        let pieces_ok = r.report.mean_pieces <= r.game.max_pieces as f64 + 1.0;
        if !(frac_ok && pieces_ok) {
            violations.push(format!(
                "{} (selected {:.3}, pieces {:.3})",
                r.label, r.report.mean_selected_fraction, r.report.mean_pieces
            ));
        }
    }
    let detail = if violations.is_empty() {
        format!("{checked} converged runs within budget")
    } else {
        format!("{} of {checked} converged runs over budget: {}", violations.len(), violations.join("; "))
    };
    Outcome::new(checked > 0 && violations.is_empty(), detail)
}

// ---------------------------------------------------------------- 6

fn criterion_two_player() -> Outcome {
    let data = gen_planted_dataset(
        &PlantedSpec {
            num_examples: 96,
            len: 12,
            vocab_size: 30,
            signal_positions: 2,
            noise_rate: 0.1,
        },
        9,
    )
    .unwrap();
    let game = GameConfig {
        explore: 0.0,
        ..GameConfig::default().cooperative_only()
    };
    let tc = TrainConfig {
        batch_size: 16,
        model: ModelConfig {
            embed_dim: 8,
            hidden_dim: 8,
            ..ModelConfig::default()
        },
        ..TrainConfig::default()
    };
    let mut state = TrainState::new(data.vocab.len(), 2, &tc);
    let mut exact = true;
    let mut batches = 0;
    for chunk in data.examples.chunks(tc.batch_size) {
        let batch: Vec<&TokenSequence> = chunk.iter().collect();
        let before = state.params.clone();
        let stats = train_predictors_step(&mut state, &batch, &game, &tc, "two-player").unwrap();
        // masks sampled during the step
        for b in &stats.losses {
            exact &= b.total.to_bits() == b.l_p.to_bits();
        }
        let sum_total: f64 = stats.losses.iter().map(|b| b.total).sum();
        let sum_lp: f64 = stats.losses.iter().map(|b| b.l_p).sum();
        exact &= sum_total.to_bits() == sum_lp.to_bits();

        // deterministic inference masks: objective from an independent forward pass
        let inferred = infer_dataset(
            &Dataset {
                examples: chunk.to_vec(),
                vocab: data.vocab.clone(),
                num_classes: 2,
            },
            &before,
            MaskRule::Threshold(game.threshold),
        )
        .unwrap();
        for (ex, inf) in chunk.iter().zip(&inferred) {
            let v = apply_mask(&ex.tokens, &inf.mask).unwrap();
            let l_p = classifier_xent(&v.rationale, ex.label, &before.predictor).unwrap();
            let l_c = classifier_xent(&v.complement, ex.label, &before.complement_predictor).unwrap();
            exact &= generator_objective(l_p, l_c, &inf.mask, &game).total.to_bits() == l_p.to_bits();
        }
        batches += 1;
    }
    Outcome::new(exact, format!("{batches} batches, generator objective bit-identical to L_p: {exact}"))
}

// ---------------------------------------------------------------- 7

fn criterion_reinforce() -> Outcome {
    let model = ModelConfig {
        embed_dim: 8,
        hidden_dim: 8,
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        model: model.clone(),
        lr_generator: 1e-2,
        ..TrainConfig::default()
    };
    let ex = TokenSequence::new(vec![2], 0);
    let batch = vec![&ex; 16];

    let mut state = TrainState::new(3, 2, &tc);
    state.params.generator.value_mut(SEL_W).fill(0.0);
    state.params.generator.value_mut(SEL_B).fill(0.0);
    let prob = |s: &TrainState| s.params.selection_probs(&[2]).unwrap().0[0];
    let start = prob(&state);
    let mut steps_needed = None;
    for step in 1..=500 {
        reinforce_step(&mut state, &batch, 0.05, &tc, "bandit", |_, _, z| Ok(f64::from(z[0]))).unwrap();
        if steps_needed.is_none() && prob(&state) > 0.95 {
            steps_needed = Some(step);
        }
    }
    let bandit = start == 0.5 && prob(&state) > 0.95;

    // sign test: reward = z, so the averaged descent gradient on the
    // selection bias must be negative at 3σ
    let mut sign_ok = true;
    let mut zs = Vec::new();
    for bias in [0.0, 1.5, -2.0] {
        let mut params = PlayerParams::init(3, 2, &model, 4);
        params.generator.value_mut(SEL_W).fill(0.0);
        params.generator.value_mut(SEL_B).fill(bias);
        let p = params.selection_probs(&[2]).unwrap().0[0];
        let many = vec![&ex; 10_000];
        let pg = policy_gradient(&params, &many, 0.0, 0.05, 3, 1, |_, z| Ok(f64::from(z[0]))).unwrap();
        let samples: Vec<f64> = pg.rewards.iter().map(|&r| -r * (r - p)).collect();
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let sd = (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let z = -mean / (sd / n.sqrt());
        let summed = pg.generator.get(SEL_B).get(0, 0) / n;
        sign_ok &= z > 3.0 && (summed - mean).abs() < 1e-12;
        zs.push(z);
    }
    Outcome::new(
        bandit && sign_ok,
        format!(
            "bandit p {start} → {:.4} (> 0.95 after {} steps); sign-test z-scores {}",
            prob(&state),
            steps_needed.map_or("-".to_string(), |s| s.to_string()),
            fmt(&zs)
        ),
    )
}

// ---------------------------------------------------------------- 8

fn criterion_determinism() -> Outcome {
    let data = gen_degeneration_dataset(
        &DegenerationSpec {
            num_examples: 200,
            len: 10,
            vocab_size: 24,
        },
        77,
    )
    .unwrap();
    let (train, dev) = data.split_at(160);
    let game = GameConfig::default();
    let tc = TrainConfig {
        epochs: 2,
        batch_size: 16,
        schedule: Schedule::ThreeStep,
        pretrain_epochs_classifier: 1,
        pretrain_epochs_generator: 1,
        seed: 31,
        model: ModelConfig {
            embed_dim: 12,
            hidden_dim: 10,
            introspective: true,
            ..ModelConfig::default()
        },
        ..TrainConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let artifacts = |threads: usize, tag: &str| {
        let state = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_training(&train, Some(&dev), &game, &tc).unwrap());
        let ck = Checkpoint::from_state(&state, &state.params, &game, &tc, &train.vocab);
        let ck_path = dir.path().join(format!("{tag}.ckpt"));
        ck.save(&ck_path).unwrap();
        let log_path = dir.path().join(format!("{tag}.jsonl"));
        write_training_log(&log_path, &state.history).unwrap();
        (std::fs::read(ck_path).unwrap(), std::fs::read(log_path).unwrap())
    };
    let a = artifacts(1, "a");
    let b = artifacts(1, "b");
    let c = artifacts(3, "c");
    let same = a == b && a == c;
    Outcome::new(
        same,
        format!(
            "checkpoint {} bytes, log {} bytes; identical across repeat and thread count: {same}",
            a.0.len(),
            a.1.len()
        ),
    )
}

// ---------------------------------------------------------------- 9

fn criterion_aspect() -> Outcome {
    // anchor counts: a 30, t 28, m 22 (all above the threshold of 5);
    // `note :` occurs 3 times and is therefore not a boundary
    let templates: [(&str, usize, Option<&str>); 5] = [
        ("a : golden clear head t : sweet malt", 15, Some("golden clear head")),
        ("overall nice . a : hazy orange m : thin body", 12, Some("hazy orange")),
        ("t : bitter finish m : creamy", 10, None),
        ("a : ruby note : slight haze t : roasty", 3, Some("ruby note : slight haze")),
        ("no aspect markers here , just text", 10, None),
    ];
    let mut reviews: Vec<Vec<String>> = Vec::new();
    let mut expected: Vec<String> = Vec::new();
    let mut remaining: Vec<usize> = templates.iter().map(|t| t.1).collect();
    while remaining.iter().any(|&r| r > 0) {
        for (i, (text, _, span)) in templates.iter().enumerate() {
            if remaining[i] > 0 {
                remaining[i] -= 1;
                reviews.push(text.split_whitespace().map(String::from).collect());
                if let Some(s) = span {
                    expected.push(s.to_string());
                }
            }
        }
    }
    assert_eq!(reviews.len(), 50);
    let targets = |w: &[&str]| w.iter().map(|s| s.to_string()).collect::<HashSet<_>>();
    let got: Vec<String> = extract_aspect(&reviews, &targets(&["a"]), 5)
        .into_iter()
        .map(|s| s.join(" "))
        .collect();
    let main = got == expected;
    let below: Vec<Vec<String>> = extract_aspect(&reviews, &targets(&["note"]), 5);
    let negative = below.is_empty();
    let taste: Vec<String> = extract_aspect(&reviews, &targets(&["t"]), 5)
        .into_iter()
        .map(|s| s.join(" "))
        .collect();
    let taste_ok = taste.iter().filter(|s| *s == "sweet malt").count() == 15
        && taste.iter().filter(|s| *s == "bitter finish").count() == 10
        && taste.iter().filter(|s| *s == "roasty").count() == 3
        && taste.len() == 28;
    Outcome::new(
        main && negative && taste_ok,
        format!(
            "{} spans for `a` (exact match: {main}); below-threshold `note` emits nothing: {negative}; \
             `t` spans exact: {taste_ok}",
            got.len()
        ),
    )
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut record = |n: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        println!(
            "criterion {n} [{name}]: {} ({:.1}s) {}",
            if o.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            o.detail
        );
        results.push((n, name, o));
    };
    let mut runs = Vec::new();
    record(1, "gradient integrity", &mut criterion_gradients);
    record(2, "oracle minimizers", &mut criterion_oracle);
    record(3, "degeneration A/B", &mut || criterion_degeneration(&mut runs));
    record(4, "planted recovery", &mut || criterion_planted(&mut runs));
    record(5, "sparsity/continuity compliance", &mut || criterion_compliance(&runs));
    record(6, "two-player reduction", &mut criterion_two_player);
    record(7, "REINFORCE sanity", &mut criterion_reinforce);
    record(8, "determinism", &mut criterion_determinism);
    record(9, "aspect extractor", &mut criterion_aspect);
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} passed, {} failed ({:.0}s)",
        results.len() - failed.len(),
        failed.len(),
        started.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
