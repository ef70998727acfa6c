//! Run configuration: defaults, overridden by a "key = value" file,
//! overridden by command-line flags.
//!
//! The file shares key names with the model-file header (`arch`, `hidden`,
//! `gate_dropout`, ...) plus the paths and optimizer keys that only make
//! sense for a run (`train`, `dev`, `model_out`, `learning_rate`, ...).
//! Unknown keys are hard errors so a typo cannot silently fall back to a
//! default. Blank lines and `#` comments are ignored; on repeated keys the
//! last value wins.

use clap::Args;
use dyntag_core::dynwin::{GateMode, GateVariant};
use dyntag_core::networks::{DropScope, NetConfig, NetKind};
use dyntag_core::training::TrainConfig;
use dyntag_core::{Error, Result};
use std::path::PathBuf;

/// Everything `train` needs, after precedence is applied.
#[derive(Clone, Debug)]
pub struct Settings {
    pub net: NetConfig,
    pub train: TrainConfig,
    /// Words seen fewer times than this in training featurize as UNK.
    pub min_count: usize,
    pub train_path: Option<PathBuf>,
    pub dev_path: Option<PathBuf>,
    pub model_out: Option<PathBuf>,
    pub history_out: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            net: NetConfig::default(),
            train: TrainConfig::default(),
            min_count: 1,
            train_path: None,
            dev_path: None,
            model_out: None,
            history_out: None,
            embeddings: None,
        }
    }
}

/// Flags for `dyntag train`. Every setting is optional here; absent flags
/// leave the config-file value (or the default) in place.
#[derive(Args, Clone, Debug)]
pub struct TrainArgs {
    /// "key = value" configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Training corpus (pipe format: "word|supertag ..." per line).
    #[arg(long)]
    pub train: Option<PathBuf>,

    /// Development corpus for model selection.
    #[arg(long)]
    pub dev: Option<PathBuf>,

    /// Where to write the best-on-dev model.
    #[arg(long)]
    pub model_out: Option<PathBuf>,

    /// Where to write the per-epoch history CSV.
    #[arg(long)]
    pub history_out: Option<PathBuf>,

    /// Pretrained word embeddings ("word v1 ... vn" per line).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,

    /// Architecture: mlp, elman, jordan, lstm or bi-lstm [default: bi-lstm].
    #[arg(long)]
    pub arch: Option<String>,

    /// Hidden units per layer (per direction for bi-lstm) [default: 512].
    #[arg(long)]
    pub hidden: Option<usize>,

    /// Bi-LSTM stack depth [default: 2].
    #[arg(long)]
    pub depth: Option<usize>,

    /// Word-embedding dimension [default: 200].
    #[arg(long)]
    pub word_dim: Option<usize>,

    /// Capitalization-embedding dimension [default: 5].
    #[arg(long)]
    pub cap_dim: Option<usize>,

    /// Character-embedding dimension [default: 5].
    #[arg(long)]
    pub char_dim: Option<usize>,

    /// Characters taken from each end of the word [default: 5].
    #[arg(long)]
    pub chars_per_side: Option<usize>,

    /// Context-window radius ρ; the window covers 2ρ+1 slots [default: 4].
    #[arg(long)]
    pub window_radius: Option<usize>,

    /// Gate mode: learned, or ones for the static-window baseline
    /// [default: learned].
    #[arg(long)]
    pub gate_mode: Option<String>,

    /// Gate variant: scalar-concat, elementwise, two-layer or
    /// weighted-average [default: scalar-concat].
    #[arg(long)]
    pub gate_variant: Option<String>,

    /// Hidden width of the two-layer gate [default: 64].
    #[arg(long)]
    pub two_layer_hidden: Option<usize>,

    /// Treat the gates as constants in the input gradient [default: false].
    #[arg(long)]
    pub detach_gates: Option<bool>,

    /// Word-level dropout rate on the gates [default: 0.5].
    #[arg(long)]
    pub gate_dropout: Option<f64>,

    /// Dropout rate on hidden-layer outputs [default: 0.5].
    #[arg(long)]
    pub hidden_dropout: Option<f64>,

    /// Hidden-dropout scope: all-layers or final-only [default: all-layers].
    #[arg(long)]
    pub hidden_drop_scope: Option<String>,

    /// Learn additive biases [default: true].
    #[arg(long)]
    pub biases: Option<bool>,

    /// Compute the LSTM candidate with σ instead of tanh [default: false].
    #[arg(long)]
    pub lstm_candidate_sigmoid: Option<bool>,

    /// Force the RNN reset gate to 0, severing recurrence [default: false].
    #[arg(long)]
    pub force_reset_zero: Option<bool>,

    /// Gaussian init scale (σ = scale/√fan_in) [default: 0.1].
    #[arg(long)]
    pub init_scale: Option<f64>,

    /// SGD learning rate [default: 0.02].
    #[arg(long)]
    pub learning_rate: Option<f64>,

    /// Training epochs; 0 evaluates the initialized model once [default: 40].
    #[arg(long)]
    pub epochs: Option<usize>,

    /// Shuffle the sentence order each epoch [default: true].
    #[arg(long)]
    pub shuffle: Option<bool>,

    /// Seed for init, shuffling and dropout [default: 1].
    #[arg(long)]
    pub seed: Option<u64>,

    /// Words below this training count featurize as UNK [default: 1].
    #[arg(long)]
    pub min_count: Option<usize>,
}

impl Settings {
    /// Defaults → config file (if given) → flags.
    pub fn resolve(args: &TrainArgs) -> Result<Settings> {
        let mut s = Settings::default();
        if let Some(path) = &args.config {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::config(format!("cannot read config file {}: {e}", path.display()))
            })?;
            s.apply_file(&text, &path.display().to_string())?;
        }
        s.apply_flags(args)?;
        Ok(s)
    }

    fn apply_file(&mut self, text: &str, label: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!(
                    "{label} line {}: expected \"key = value\", got {line:?}",
                    i + 1
                ))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::config(format!("{label} line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::config(format!("bad value {value:?} for key {key:?}")))
        }
        match key {
            "train" => self.train_path = Some(PathBuf::from(value)),
            "dev" => self.dev_path = Some(PathBuf::from(value)),
            "model_out" => self.model_out = Some(PathBuf::from(value)),
            "history_out" => self.history_out = Some(PathBuf::from(value)),
            "embeddings" => self.embeddings = Some(PathBuf::from(value)),
            "arch" => self.net.kind = NetKind::from_name(value)?,
            "hidden" => self.net.hidden = num(key, value)?,
            "depth" => self.net.depth = num(key, value)?,
            "word_dim" => self.net.feature.word_dim = num(key, value)?,
            "cap_dim" => self.net.feature.cap_dim = num(key, value)?,
            "char_dim" => self.net.feature.char_dim = num(key, value)?,
            "chars_per_side" => self.net.feature.chars_per_side = num(key, value)?,
            "window_radius" => self.net.feature.window_radius = num(key, value)?,
            "gate_mode" => self.net.gate_mode = GateMode::from_name(value)?,
            "gate_variant" => self.net.gate_variant = GateVariant::from_name(value)?,
            "two_layer_hidden" => self.net.two_layer_hidden = num(key, value)?,
            "detach_gates" => self.net.detach_gates = num(key, value)?,
            "gate_dropout" => self.net.gate_drop = num(key, value)?,
            "hidden_dropout" => self.net.hidden_drop = num(key, value)?,
            "hidden_drop_scope" => self.net.hidden_drop_scope = DropScope::from_name(value)?,
            "biases" => self.net.biases = num(key, value)?,
            "lstm_candidate_sigmoid" => self.net.lstm_candidate_sigmoid = num(key, value)?,
            "force_reset_zero" => self.net.force_reset_zero = num(key, value)?,
            "init_scale" => self.net.init_scale = num(key, value)?,
            "learning_rate" => self.train.learning_rate = num(key, value)?,
            "epochs" => self.train.epochs = num(key, value)?,
            "shuffle" => self.train.shuffle = num(key, value)?,
            "seed" => self.train.seed = num(key, value)?,
            "min_count" => self.min_count = num(key, value)?,
            _ => return Err(Error::config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    fn apply_flags(&mut self, a: &TrainArgs) -> Result<()> {
        macro_rules! copy {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = &a.$flag { self.$($field).+ = v.clone(); })*
            };
        }
        copy! {
            hidden => net.hidden,
            depth => net.depth,
            word_dim => net.feature.word_dim,
            cap_dim => net.feature.cap_dim,
            char_dim => net.feature.char_dim,
            chars_per_side => net.feature.chars_per_side,
            window_radius => net.feature.window_radius,
            two_layer_hidden => net.two_layer_hidden,
            detach_gates => net.detach_gates,
            gate_dropout => net.gate_drop,
            hidden_dropout => net.hidden_drop,
            biases => net.biases,
            lstm_candidate_sigmoid => net.lstm_candidate_sigmoid,
            force_reset_zero => net.force_reset_zero,
            init_scale => net.init_scale,
            learning_rate => train.learning_rate,
            epochs => train.epochs,
            shuffle => train.shuffle,
            seed => train.seed,
            min_count => min_count,
        }
        if let Some(v) = &a.arch {
            self.net.kind = NetKind::from_name(v)?;
        }
        if let Some(v) = &a.gate_mode {
            self.net.gate_mode = GateMode::from_name(v)?;
        }
        if let Some(v) = &a.gate_variant {
            self.net.gate_variant = GateVariant::from_name(v)?;
        }
        if let Some(v) = &a.hidden_drop_scope {
            self.net.hidden_drop_scope = DropScope::from_name(v)?;
        }
        for (flag, slot) in [
            (&a.train, &mut self.train_path),
            (&a.dev, &mut self.dev_path),
            (&a.model_out, &mut self.model_out),
            (&a.history_out, &mut self.history_out),
            (&a.embeddings, &mut self.embeddings),
        ] {
            if flag.is_some() {
                *slot = flag.clone();
            }
        }
        Ok(())
    }

    /// Fetch a path that train cannot run without.
    pub fn required<'a>(&self, slot: &'a Option<PathBuf>, key: &str) -> Result<&'a PathBuf> {
        slot.as_ref().ok_or_else(|| {
            Error::config(format!(
                "missing required setting {key:?} (config key {key} or flag --{})",
                key.replace('_', "-")
            ))
        })
    }
}
