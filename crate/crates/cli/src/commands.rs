//! Subcommand implementations. Every command returns the process exit code
//! on the success path (`cat validate` and `gradcheck` report failed checks
//! through it) and a library error otherwise; `main` maps error classes to
//! the exit-status contract.

use crate::config::{Settings, TrainArgs};
use dyntag_core::categories::{category_arity, parse_category, print_category, validate_tags};
use dyntag_core::corpus::{build_vocab_tagset, load_corpus, load_embeddings, CharVocab};
use dyntag_core::dynwin::GateVariant;
use dyntag_core::gradcheck::{compare_grads, GradCheckConfig};
use dyntag_core::model_io::{load_model, save_model};
use dyntag_core::networks::{Model, NetConfig, NetKind};
use dyntag_core::synth::{generate, generate_pipe, SynthConfig};
use dyntag_core::training::{evaluate, prepare, train_loop};
use dyntag_core::{features::FeatureConfig, Error, Result};
use std::io::Write as _;
use std::path::{Path, PathBuf};

/// Read a text file, keeping the path in the error ("line 0" marks a
/// whole-file problem).
fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::data(path.display().to_string(), 0, e.to_string()))
}

pub fn train(args: &TrainArgs) -> Result<u8> {
    let settings = Settings::resolve(args)?;
    let train_path = settings.required(&settings.train_path, "train")?;
    let dev_path = settings.required(&settings.dev_path, "dev")?;
    let model_out = settings.required(&settings.model_out, "model_out")?;

    let train_sents = load_corpus(train_path)?;
    let dev_sents = load_corpus(dev_path)?;
    let (vocab, tags) = build_vocab_tagset(&train_sents, settings.min_count)?;
    let char_vocab = CharVocab::build(&train_sents);
    let pretrained = match &settings.embeddings {
        Some(path) => Some(load_embeddings(path, settings.net.feature.word_dim)?),
        None => None,
    };
    let model = Model::new(
        settings.net.clone(),
        vocab,
        char_vocab,
        tags,
        pretrained.as_ref(),
        settings.train.seed,
    )?;
    let train_data = prepare(&train_sents, &model.tags);
    let dev_data = prepare(&dev_sents, &model.tags);

    let (best, state) = train_loop(model, &train_data, &dev_data, &settings.train, |r| {
        println!("{}\t{:.6}\t{:.4}", r.epoch, r.train_loss, r.dev_acc);
    })?;

    // With --epochs 0 the loop returns the initialized model untouched;
    // report its dev accuracy so the summary line is still meaningful.
    let (best_acc, best_epoch) = match state.best_epoch {
        Some(e) => (state.best_dev_acc, e),
        None => (evaluate(&best, &dev_data)?.accuracy(), 0),
    };

    save_model(&best, model_out)?;
    if let Some(path) = &settings.history_out {
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| Error::data(path.display().to_string(), 0, e.to_string()))?;
        w.write_record(["epoch", "train_loss", "dev_acc"])
            .and_then(|()| {
                state.history.iter().try_for_each(|r| {
                    w.write_record([
                        r.epoch.to_string(),
                        format!("{}", r.train_loss),
                        format!("{}", r.dev_acc),
                    ])
                })
            })
            .and_then(|()| w.flush().map_err(csv::Error::from))
            .map_err(|e| Error::data(path.display().to_string(), 0, e.to_string()))?;
    }
    println!("best_dev_acc={best_acc:.4} at epoch={best_epoch}");
    Ok(0)
}

pub fn tag(model_path: &Path, input: &Path) -> Result<u8> {
    let model = load_model(model_path)?;
    let text = read_text(input)?;
    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    for line in text.lines() {
        let surfaces: Vec<&str> = line.split_whitespace().collect();
        if surfaces.is_empty() {
            writeln!(out)?;
            continue;
        }
        let ids = model.tag(&surfaces);
        let mut first = true;
        for (surface, id) in surfaces.iter().zip(ids) {
            if !first {
                write!(out, " ")?;
            }
            write!(out, "{surface}|{}", model.tags.tag(id))?;
            first = false;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(0)
}

pub fn eval(model_path: &Path, gold: &Path) -> Result<u8> {
    let model = load_model(model_path)?;
    let gold_sents = load_corpus(gold)?;
    let data = prepare(&gold_sents, &model.tags);
    let stats = evaluate(&model, &data)?;
    if stats.unknown_gold > 0 {
        eprintln!(
            "warning: {} gold tags are not in the model's tagset and count as wrong",
            stats.unknown_gold
        );
    }
    println!("acc={:.4} tokens={}", stats.accuracy(), stats.tokens);
    Ok(0)
}

pub fn gates(
    model_path: &Path,
    input: &Path,
    out: Option<&Path>,
    reduce: Option<&str>,
) -> Result<u8> {
    let model = load_model(model_path)?;
    match reduce {
        None if model.cfg.gate_variant == GateVariant::Elementwise => {
            return Err(Error::config(
                "the elementwise variant learns one gate per input dimension, not per \
                 window slot; pass `--reduce mean` to export per-slot means",
            ))
        }
        None | Some("mean") => {}
        Some(other) => {
            return Err(Error::config(format!(
                "unknown --reduce mode {other:?}; only \"mean\" is supported"
            )))
        }
    }
    let text = read_text(input)?;
    let slots = model.cfg.feature.slots();
    let radius = model.cfg.feature.window_radius as isize;
    let feat_dim = model.cfg.feature.token_dim();

    let sink: Box<dyn std::io::Write> = match out {
        Some(path) => Box::new(
            std::fs::File::create(path)
                .map_err(|e| Error::data(path.display().to_string(), 0, e.to_string()))?,
        ),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["sentence".to_string(), "token".to_string(), "surface".to_string()];
    header.extend((0..slots).map(|k| format!("g{}", k as isize - radius)));
    w.write_record(&header).map_err(io_csv)?;

    for (si, line) in text.lines().enumerate() {
        let surfaces: Vec<&str> = line.split_whitespace().collect();
        if surfaces.is_empty() {
            continue;
        }
        let fwd = model.forward_test(&surfaces);
        for (ti, gate) in fwd.gates.iter().enumerate() {
            let per_slot: Vec<f64> = if gate.len() == slots {
                gate.clone()
            } else {
                // Elementwise: collapse each slot's span of per-dimension
                // gates to its mean.
                gate.chunks(feat_dim)
                    .map(|c| c.iter().sum::<f64>() / c.len() as f64)
                    .collect()
            };
            let mut record = vec![si.to_string(), ti.to_string(), surfaces[ti].to_string()];
            record.extend(per_slot.iter().map(|v| format!("{v}")));
            w.write_record(&record).map_err(io_csv)?;
        }
    }
    w.flush()?;
    Ok(0)
}

fn io_csv(e: csv::Error) -> Error {
    Error::data("<csv output>", 0, e.to_string())
}

pub fn gradcheck(
    arch: &str,
    gate_variant: &str,
    threshold: f64,
    step: f64,
    seed: u64,
) -> Result<u8> {
    let kinds: Vec<NetKind> = if arch == "all" {
        NetKind::ALL.to_vec()
    } else {
        vec![NetKind::from_name(arch)?]
    };
    let variants: Vec<GateVariant> = if gate_variant == "all" {
        GateVariant::ALL.to_vec()
    } else {
        vec![GateVariant::from_name(gate_variant)?]
    };

    // A captive corpus keeps the subcommand self-contained; dims stay tiny
    // so the sweep is exhaustive over every parameter.
    let corpus = generate(&SynthConfig {
        sentences: 3,
        distractor_rate: 0.0,
        seed: 23,
    });
    let (vocab, tags) = build_vocab_tagset(&corpus, 1)?;
    let char_vocab = CharVocab::build(&corpus);
    let data = prepare(&corpus, &tags);
    let surfaces: Vec<String> = data[0].surfaces.iter().take(4).cloned().collect();
    let gold: Vec<usize> = data[0].gold.iter().take(4).copied().collect();

    let mut all_pass = true;
    for &kind in &kinds {
        for &variant in &variants {
            let cfg = NetConfig {
                kind,
                hidden: 5,
                depth: 2,
                feature: FeatureConfig {
                    word_dim: 3,
                    cap_dim: 2,
                    char_dim: 2,
                    chars_per_side: 1,
                    window_radius: 1,
                },
                gate_variant: variant,
                two_layer_hidden: 4,
                gate_drop: 0.4,
                hidden_drop: 0.5,
                ..NetConfig::default()
            };
            let mut model = Model::new(
                cfg,
                vocab.clone(),
                char_vocab.clone(),
                tags.clone(),
                None,
                11,
            )?;
            let report = compare_grads(
                &mut model,
                &surfaces,
                &gold,
                &GradCheckConfig {
                    threshold,
                    step,
                    seed,
                    ..GradCheckConfig::default()
                },
            )?;
            println!("== {} + {} ==", kind.name(), variant.name());
            println!("{report}");
            all_pass &= report.pass();
        }
    }
    if all_pass {
        println!("gradcheck: PASS");
        Ok(0)
    } else {
        println!("gradcheck: FAIL");
        Ok(2)
    }
}

pub fn cat_parse(category: &str) -> Result<u8> {
    println!("{}", print_category(&parse_category(category)?));
    Ok(0)
}

pub fn cat_arity(category: &str) -> Result<u8> {
    println!("{}", category_arity(&parse_category(category)?));
    Ok(0)
}

pub fn cat_validate(file: &Path) -> Result<u8> {
    let text = read_text(file)?;
    let entries: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim()))
        .collect();
    let v = validate_tags(entries.iter().map(|(_, s)| *s));
    if v.all_ok() {
        println!("ok: {} categories", v.total);
        Ok(0)
    } else {
        for (idx, tag, err) in &v.failures {
            println!("line {}: {tag:?}: {err}", entries[*idx].0);
        }
        println!("{} of {} categories failed to parse", v.failures.len(), v.total);
        Ok(2)
    }
}

pub fn gen_corpus(
    sentences: usize,
    distractor_rate: f64,
    seed: u64,
    out: Option<&PathBuf>,
) -> Result<u8> {
    let text = generate_pipe(&SynthConfig {
        sentences,
        distractor_rate,
        seed,
    });
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Error::data(path.display().to_string(), 0, e.to_string()))?,
        None => print!("{text}"),
    }
    Ok(0)
}
