//! Model persistence: a versioned, line-oriented text format.
//!
//! A model file is self-contained — configuration header, the three
//! vocabularies, then every parameter matrix by name:
//!
//! ```text
//! dyntag-model v1
//! arch = bi-lstm
//! hidden = 512
//! ...
//!
//! [vocab]
//! 0	<PAD>
//! 1	<UNK>
//! ...
//! [charvocab]
//! ...
//! [tagset]
//! ...
//! [matrix L_w 20003 200]
//! 0.0124693 -0.0035192 ...
//! ...
//! ```
//!
//! Floats are written with Rust's shortest-round-trip formatting, so a
//! load/save cycle is bit-exact. The loader rejects unknown versions,
//! unknown or missing header keys, truncated payloads, and any disagreement
//! between the header's dimensions and the matrices that follow — including
//! the cross-architecture case, where the matrix names themselves will not
//! match the declared `arch`.

use crate::corpus::{CharVocab, TagSet, Vocab};
use crate::dynwin::{GateMode, GateVariant};
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::networks::{DropScope, Model, NetConfig, NetKind};
use crate::numerics::Matrix;
use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

pub const MODEL_MAGIC: &str = "dyntag-model v1";

/// Header keys in the order they are written. The loader accepts any order
/// but requires every key exactly once.
const HEADER_KEYS: [&str; 20] = [
    "arch",
    "hidden",
    "depth",
    "word_dim",
    "cap_dim",
    "char_dim",
    "chars_per_side",
    "window_radius",
    "gate_mode",
    "gate_variant",
    "two_layer_hidden",
    "detach_gates",
    "gate_dropout",
    "hidden_dropout",
    "hidden_drop_scope",
    "biases",
    "lstm_candidate_sigmoid",
    "force_reset_zero",
    "init_scale",
    "seed",
];

pub fn model_to_string(model: &Model) -> String {
    let c = &model.cfg;
    let f = &c.feature;
    let mut out = String::new();
    let w = &mut out;
    writeln!(w, "{MODEL_MAGIC}").unwrap();
    writeln!(w, "arch = {}", c.kind.name()).unwrap();
    writeln!(w, "hidden = {}", c.hidden).unwrap();
    writeln!(w, "depth = {}", c.depth).unwrap();
    writeln!(w, "word_dim = {}", f.word_dim).unwrap();
    writeln!(w, "cap_dim = {}", f.cap_dim).unwrap();
    writeln!(w, "char_dim = {}", f.char_dim).unwrap();
    writeln!(w, "chars_per_side = {}", f.chars_per_side).unwrap();
    writeln!(w, "window_radius = {}", f.window_radius).unwrap();
    writeln!(w, "gate_mode = {}", c.gate_mode.name()).unwrap();
    writeln!(w, "gate_variant = {}", c.gate_variant.name()).unwrap();
    writeln!(w, "two_layer_hidden = {}", c.two_layer_hidden).unwrap();
    writeln!(w, "detach_gates = {}", c.detach_gates).unwrap();
    writeln!(w, "gate_dropout = {}", c.gate_drop).unwrap();
    writeln!(w, "hidden_dropout = {}", c.hidden_drop).unwrap();
    writeln!(w, "hidden_drop_scope = {}", c.hidden_drop_scope.name()).unwrap();
    writeln!(w, "biases = {}", c.biases).unwrap();
    writeln!(w, "lstm_candidate_sigmoid = {}", c.lstm_candidate_sigmoid).unwrap();
    writeln!(w, "force_reset_zero = {}", c.force_reset_zero).unwrap();
    writeln!(w, "init_scale = {}", c.init_scale).unwrap();
    writeln!(w, "seed = {}", model.seed).unwrap();
    writeln!(w).unwrap();
    writeln!(w, "[vocab]").unwrap();
    out.push_str(&model.vocab.to_tsv());
    writeln!(out, "[charvocab]").unwrap();
    out.push_str(&model.char_vocab.to_tsv());
    writeln!(out, "[tagset]").unwrap();
    out.push_str(&model.tags.to_tsv());
    for (name, m) in model.param_blocks() {
        writeln!(out, "[matrix {name} {} {}]", m.rows(), m.cols()).unwrap();
        for r in 0..m.rows() {
            let mut line = String::new();
            for v in &m.data()[r * m.cols()..(r + 1) * m.cols()] {
                if !line.is_empty() {
                    line.push(' ');
                }
                // Display prints the shortest digits that parse back to
                // the identical f64.
                write!(line, "{v}").unwrap();
            }
            out.push_str(&line);
            out.push('\n');
        }
    }
    out
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_string(model))
        .map_err(|e| Error::ModelFormat(format!("{}: {e}", path.display())))
}

pub fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::ModelFormat(format!("{}: {e}", path.display())))?;
    model_from_str(&text, &path.display().to_string())
}

fn fail(label: &str, line: usize, msg: impl std::fmt::Display) -> Error {
    Error::ModelFormat(format!("{label} line {line}: {msg}"))
}

pub fn model_from_str(text: &str, label: &str) -> Result<Model> {
    let lines: Vec<&str> = text.lines().collect();
    // Index into `lines`; error messages report it 1-based.
    let mut pos = match lines.first() {
        Some(&l) if l == MODEL_MAGIC => 1usize,
        Some(&l) => {
            return Err(fail(
                label,
                1,
                format!("unsupported model file version {l:?}; this build reads {MODEL_MAGIC:?}"),
            ))
        }
        None => return Err(Error::ModelFormat(format!("{label}: empty model file"))),
    };

    // Header: "key = value" until the blank separator line.
    let mut header: HashMap<&str, &str> = HashMap::new();
    while pos < lines.len() {
        let line = lines[pos];
        pos += 1;
        if line.trim().is_empty() {
            break;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| fail(label, pos, format!("expected \"key = value\", got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if !HEADER_KEYS.contains(&key) {
            return Err(fail(label, pos, format!("unknown header key {key:?}")));
        }
        if header.insert(key, value).is_some() {
            return Err(fail(label, pos, format!("duplicate header key {key:?}")));
        }
    }
    let get = |key: &str| -> Result<&str> {
        header
            .get(key)
            .copied()
            .ok_or_else(|| Error::ModelFormat(format!("{label}: missing header key {key:?}")))
    };
    fn parsed<T: std::str::FromStr>(label: &str, key: &str, value: &str) -> Result<T> {
        value.parse().map_err(|_| {
            Error::ModelFormat(format!("{label}: header key {key:?} has bad value {value:?}"))
        })
    }
    macro_rules! field {
        ($key:literal) => {
            parsed(label, $key, get($key)?)?
        };
    }
    let cfg = NetConfig {
        kind: NetKind::from_name(get("arch")?)?,
        hidden: field!("hidden"),
        depth: field!("depth"),
        feature: FeatureConfig {
            word_dim: field!("word_dim"),
            cap_dim: field!("cap_dim"),
            char_dim: field!("char_dim"),
            chars_per_side: field!("chars_per_side"),
            window_radius: field!("window_radius"),
        },
        gate_mode: GateMode::from_name(get("gate_mode")?)?,
        gate_variant: GateVariant::from_name(get("gate_variant")?)?,
        two_layer_hidden: field!("two_layer_hidden"),
        detach_gates: field!("detach_gates"),
        gate_drop: field!("gate_dropout"),
        hidden_drop: field!("hidden_dropout"),
        hidden_drop_scope: DropScope::from_name(get("hidden_drop_scope")?)?,
        biases: field!("biases"),
        lstm_candidate_sigmoid: field!("lstm_candidate_sigmoid"),
        force_reset_zero: field!("force_reset_zero"),
        init_scale: field!("init_scale"),
    };
    let seed: u64 = field!("seed");

    // The three vocabulary sections, in writing order.
    let section = |want: &str, pos: &mut usize| -> Result<String> {
        while *pos < lines.len() && lines[*pos].trim().is_empty() {
            *pos += 1;
        }
        let heading = format!("[{want}]");
        if *pos >= lines.len() || lines[*pos] != heading {
            return Err(fail(label, *pos + 1, format!("expected section {heading}")));
        }
        *pos += 1;
        let start = *pos;
        while *pos < lines.len() && !lines[*pos].starts_with('[') {
            *pos += 1;
        }
        let mut body = lines[start..*pos].join("\n");
        body.push('\n');
        Ok(body)
    };
    let vocab = Vocab::from_tsv(&section("vocab", &mut pos)?, label)?;
    let char_vocab = CharVocab::from_tsv(&section("charvocab", &mut pos)?, label)?;
    let tags = TagSet::from_tsv(&section("tagset", &mut pos)?, label)?;

    // Matrix payload.
    let mut matrices: Vec<(String, Matrix)> = Vec::new();
    while pos < lines.len() {
        let line = lines[pos];
        pos += 1;
        if line.trim().is_empty() {
            continue;
        }
        let inner = line
            .strip_prefix('[')
            .and_then(|l| l.strip_suffix(']'))
            .ok_or_else(|| fail(label, pos, format!("expected [matrix ...], got {line:?}")))?;
        let parts: Vec<&str> = inner.split_whitespace().collect();
        let (name, rows, cols) = match parts.as_slice() {
            ["matrix", name, rows, cols] => (
                name.to_string(),
                parsed::<usize>(label, "rows", rows)?,
                parsed::<usize>(label, "cols", cols)?,
            ),
            _ => return Err(fail(label, pos, format!("malformed section header {line:?}"))),
        };
        if matrices.iter().any(|(n, _)| *n == name) {
            return Err(fail(label, pos, format!("matrix {name:?} appears twice")));
        }
        if rows == 0 || cols == 0 {
            return Err(fail(label, pos, format!("matrix {name:?} has a zero dimension")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            if pos >= lines.len() {
                return Err(fail(
                    label,
                    pos,
                    format!("truncated file: matrix {name:?} row {r} missing"),
                ));
            }
            let row_line = lines[pos];
            pos += 1;
            let before = data.len();
            for tok in row_line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| {
                    fail(label, pos, format!("bad float {tok:?} in matrix {name:?}"))
                })?;
                if !v.is_finite() {
                    return Err(fail(
                        label,
                        pos,
                        format!("non-finite value {tok:?} in matrix {name:?}"),
                    ));
                }
                data.push(v);
            }
            if data.len() - before != cols {
                return Err(fail(
                    label,
                    pos,
                    format!(
                        "matrix {name:?} row {r} has {} values, header says {cols}",
                        data.len() - before
                    ),
                ));
            }
        }
        matrices.push((name, Matrix::from_data(rows, cols, data)));
    }

    // Build a model of the declared shape, then overwrite every block.
    // Any mismatch between the header and the payload surfaces here.
    let mut model = Model::new(cfg, vocab, char_vocab, tags, None, seed)?;
    let kind_name = model.cfg.kind.name();
    let mut blocks = model.param_blocks_mut();
    let mut filled: HashSet<String> = HashSet::new();
    for (name, loaded) in matrices {
        let slot = blocks.iter_mut().find(|(n, _)| *n == name).ok_or_else(|| {
            Error::ModelFormat(format!(
                "{label}: matrix {name:?} is not a parameter of a {kind_name} model with this config"
            ))
        })?;
        let dst = &mut slot.1;
        if (loaded.rows(), loaded.cols()) != (dst.rows(), dst.cols()) {
            return Err(Error::ModelFormat(format!(
                "{label}: matrix {name:?} is {}x{} but the header config implies {}x{}",
                loaded.rows(),
                loaded.cols(),
                dst.rows(),
                dst.cols()
            )));
        }
        dst.data_mut().copy_from_slice(loaded.data());
        filled.insert(name);
    }
    if let Some((missing, _)) = blocks.iter().find(|(n, _)| !filled.contains(n)) {
        return Err(Error::ModelFormat(format!(
            "{label}: truncated file: matrix {missing:?} missing"
        )));
    }
    drop(blocks);
    Ok(model)
}
