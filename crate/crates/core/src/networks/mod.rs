//! The tagger architectures: window MLP, Elman and Jordan RNNs with a
//! recurrent reset gate, a forward LSTM, and a stacked bidirectional LSTM.
//!
//! All five share one input pipeline — context window → filter gates →
//! word-level dropout → gated input x̃ — and one output head, an affine map
//! to tag logits followed by softmax. Backward passes are exact (full BPTT
//! for the recurrent models) and are validated coordinate-by-coordinate
//! against finite differences in the gradcheck module.

pub mod lstm;
pub mod mlp;
pub mod rnn;

use crate::corpus::{CharVocab, EmbeddingTable, TagSet, Vocab};
use crate::dynwin::{
    dynwin_backward, dynwin_forward, sample_gate_mask, sample_hidden_mask, test_gate_scaling,
    DynwinCache, GateConfig, GateGrads, GateMode, GateParams, GateScaling, GateVariant,
};
use crate::error::{Error, Result};
use crate::features::{
    featurize, FeatureConfig, LookupTables, SentenceFeatures, TableGrads,
};
use crate::numerics::{axpy, softmax, Matrix, Rng, Vector};

pub use lstm::{BiLstmParams, LstmLayer, LstmParams};
pub use mlp::MlpParams;
pub use rnn::RnnParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetKind {
    Mlp,
    Elman,
    Jordan,
    Lstm,
    BiLstm,
}

impl NetKind {
    pub const ALL: [NetKind; 5] = [
        NetKind::Mlp,
        NetKind::Elman,
        NetKind::Jordan,
        NetKind::Lstm,
        NetKind::BiLstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NetKind::Mlp => "mlp",
            NetKind::Elman => "elman",
            NetKind::Jordan => "jordan",
            NetKind::Lstm => "lstm",
            NetKind::BiLstm => "bi-lstm",
        }
    }

    pub fn from_name(s: &str) -> Result<NetKind> {
        if s == "bilstm" {
            return Ok(NetKind::BiLstm);
        }
        NetKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown architecture {s:?}; expected one of mlp, elman, jordan, lstm, bi-lstm"
                ))
            })
    }

    /// The conventional window radius: 4 for the MLP, 1 for the recurrent
    /// models (which carry context through their state).
    pub fn default_radius(self) -> usize {
        match self {
            NetKind::Mlp => 4,
            _ => 1,
        }
    }
}

/// Where hidden-layer dropout applies in a stacked model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DropScope {
    /// Every layer's output (between layers and into the head).
    AllLayers,
    /// Only the final layer's output, into the head.
    FinalOnly,
}

impl DropScope {
    pub fn name(self) -> &'static str {
        match self {
            DropScope::AllLayers => "all-layers",
            DropScope::FinalOnly => "final-only",
        }
    }

    pub fn from_name(s: &str) -> Result<DropScope> {
        match s {
            "all-layers" => Ok(DropScope::AllLayers),
            "final-only" => Ok(DropScope::FinalOnly),
            _ => Err(Error::config(format!(
                "unknown dropout scope {s:?}; expected all-layers or final-only"
            ))),
        }
    }
}

/// Everything needed to build a model (except the data-dependent vocabs).
#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    pub kind: NetKind,
    /// Hidden units H per layer (per direction for the bi-LSTM).
    pub hidden: usize,
    /// Stack depth of the bi-LSTM; other architectures ignore it.
    pub depth: usize,
    pub feature: FeatureConfig,
    pub gate_mode: GateMode,
    pub gate_variant: GateVariant,
    pub two_layer_hidden: usize,
    pub detach_gates: bool,
    /// Word-level drop rate on the gates (probability of zero).
    pub gate_drop: f64,
    /// Drop rate on hidden-layer outputs.
    pub hidden_drop: f64,
    pub hidden_drop_scope: DropScope,
    /// Learn additive biases (the cited equations omit them).
    pub biases: bool,
    /// Fidelity flag: compute the LSTM candidate with σ instead of tanh.
    pub lstm_candidate_sigmoid: bool,
    /// Diagnostic: force the RNN reset gate s to 0, severing recurrence.
    pub force_reset_zero: bool,
    /// Gaussian init scale (σ = scale/√fan_in).
    pub init_scale: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            kind: NetKind::BiLstm,
            hidden: 512,
            depth: 2,
            feature: FeatureConfig {
                window_radius: 1,
                ..FeatureConfig::default()
            },
            gate_mode: GateMode::Learned,
            gate_variant: GateVariant::ScalarConcat,
            two_layer_hidden: 64,
            detach_gates: false,
            gate_drop: 0.5,
            hidden_drop: 0.5,
            hidden_drop_scope: DropScope::AllLayers,
            biases: true,
            lstm_candidate_sigmoid: false,
            force_reset_zero: false,
            init_scale: 0.1,
        }
    }
}

impl NetConfig {
    pub fn gate_config(&self) -> GateConfig {
        GateConfig {
            variant: self.gate_variant,
            slots: self.feature.slots(),
            feat_dim: self.feature.token_dim(),
            two_layer_hidden: self.two_layer_hidden,
            detach_gates: self.detach_gates,
        }
    }

    /// Dimension of x̃, the first layer's input.
    pub fn input_dim(&self) -> usize {
        self.gate_config().output_dim()
    }

    /// Dimension of the vector entering the output head.
    pub fn head_input_dim(&self) -> usize {
        match self.kind {
            NetKind::BiLstm => 2 * self.hidden,
            _ => self.hidden,
        }
    }

    /// Number of distinct hidden-dropout sites.
    fn drop_sites(&self) -> usize {
        match (self.kind, self.hidden_drop_scope) {
            (NetKind::BiLstm, DropScope::AllLayers) => self.depth,
            _ => 1,
        }
    }

    /// Width of each dropout site's mask.
    fn drop_dim(&self) -> usize {
        match self.kind {
            NetKind::BiLstm => 2 * self.hidden,
            _ => self.hidden,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.feature.validate()?;
        if self.hidden == 0 {
            return Err(Error::config("hidden size must be >= 1"));
        }
        if self.kind == NetKind::BiLstm && self.depth == 0 {
            return Err(Error::config("bi-lstm depth must be >= 1"));
        }
        for (name, p) in [("gate_dropout", self.gate_drop), ("hidden_dropout", self.hidden_drop)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::config(format!("{name} must lie in [0, 1)")));
            }
        }
        if self.init_scale <= 0.0 {
            return Err(Error::config("init_scale must be > 0"));
        }
        self.gate_config().validate()
    }
}

/// Architecture-specific parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Arch {
    Mlp(MlpParams),
    Elman(RnnParams),
    Jordan(RnnParams),
    Lstm(LstmParams),
    BiLstm(BiLstmParams),
}

/// A complete tagger: vocabularies, lookup tables, gate weights, and the
/// architecture core.
#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: NetConfig,
    pub vocab: Vocab,
    pub char_vocab: CharVocab,
    pub tags: TagSet,
    pub tables: LookupTables,
    /// None when gates are forced to 1 (`GateMode::Ones`).
    pub gate: Option<GateParams>,
    pub arch: Arch,
    /// The seed all parameters were drawn from (provenance only).
    pub seed: u64,
}

impl Model {
    /// Initializes all parameters from `seed`, in a fixed draw order:
    /// lookup tables, then architecture weights, then gate weights last —
    /// so learned-gate and forced-ones models share every other weight on
    /// the same seed.
    pub fn new(
        cfg: NetConfig,
        vocab: Vocab,
        char_vocab: CharVocab,
        tags: TagSet,
        pretrained: Option<&EmbeddingTable>,
        seed: u64,
    ) -> Result<Model> {
        cfg.validate()?;
        let mut rng = Rng::new(seed);
        let tables = LookupTables::init(&cfg.feature, &vocab, &char_vocab, pretrained, &mut rng)?;
        let k = tags.len();
        let arch = match cfg.kind {
            NetKind::Mlp => Arch::Mlp(MlpParams::init(&cfg, k, &mut rng)),
            NetKind::Elman => Arch::Elman(RnnParams::init(&cfg, k, false, &mut rng)),
            NetKind::Jordan => Arch::Jordan(RnnParams::init(&cfg, k, true, &mut rng)),
            NetKind::Lstm => Arch::Lstm(LstmParams::init(&cfg, k, &mut rng)),
            NetKind::BiLstm => Arch::BiLstm(BiLstmParams::init(&cfg, k, &mut rng)),
        };
        let gate = match cfg.gate_mode {
            GateMode::Learned => Some(GateParams::init(&cfg.gate_config(), &mut rng)?),
            GateMode::Ones => None,
        };
        Ok(Model {
            cfg,
            vocab,
            char_vocab,
            tags,
            tables,
            gate,
            arch,
            seed,
        })
    }

    pub fn featurize<S: AsRef<str>>(&self, surfaces: &[S]) -> SentenceFeatures {
        featurize(
            &self.tables,
            &self.cfg.feature,
            &self.vocab,
            &self.char_vocab,
            surfaces,
        )
    }

    /// Fresh train-mode dropout masks for a sentence of `len` tokens.
    /// Draw order: gate masks token by token, then each hidden site token
    /// by token.
    pub fn sample_masks(&self, len: usize, rng: &mut Rng) -> Masks {
        let gcfg = self.cfg.gate_config();
        let gate = (0..len)
            .map(|_| sample_gate_mask(&gcfg, self.cfg.gate_drop, rng))
            .collect();
        let hidden = (0..self.cfg.drop_sites())
            .map(|_| {
                (0..len)
                    .map(|_| sample_hidden_mask(self.cfg.drop_dim(), self.cfg.hidden_drop, rng))
                    .collect()
            })
            .collect();
        Masks { gate, hidden }
    }

    /// Deterministic test-mode scaling by the keep probabilities.
    pub fn test_masks(&self, len: usize) -> Masks {
        Masks {
            gate: (0..len).map(|_| test_gate_scaling(self.cfg.gate_drop)).collect(),
            hidden: (0..self.cfg.drop_sites())
                .map(|_| {
                    (0..len)
                        .map(|_| GateScaling::Scale(1.0 - self.cfg.hidden_drop))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn forward(&self, sf: &SentenceFeatures, masks: &Masks) -> Forward {
        debug_assert_eq!(masks.gate.len(), sf.len());
        match &self.arch {
            Arch::Mlp(p) => mlp::forward(self, p, sf, masks),
            Arch::Elman(p) => rnn::forward(self, p, false, sf, masks),
            Arch::Jordan(p) => rnn::forward(self, p, true, sf, masks),
            Arch::Lstm(p) => lstm::forward(self, p, sf, masks),
            Arch::BiLstm(p) => lstm::bi_forward(self, p, sf, masks),
        }
    }

    /// Test-mode forward over raw surfaces.
    pub fn forward_test<S: AsRef<str>>(&self, surfaces: &[S]) -> Forward {
        let sf = self.featurize(surfaces);
        self.forward(&sf, &self.test_masks(sf.len()))
    }

    /// 1-best tag ids (argmax per token, test mode).
    pub fn tag<S: AsRef<str>>(&self, surfaces: &[S]) -> Vec<usize> {
        self.forward_test(surfaces)
            .probs
            .iter()
            .map(|y| argmax(y))
            .collect()
    }

    /// Accumulates the gradients of the mean sentence NLL into `grads`.
    /// `masks` and `fwd` must come from the same forward pass.
    pub fn backward(
        &self,
        sf: &SentenceFeatures,
        masks: &Masks,
        fwd: &Forward,
        gold: &[usize],
        grads: &mut Grads,
    ) {
        debug_assert_eq!(gold.len(), sf.len());
        match (&self.arch, &fwd.cache, &mut grads.arch) {
            (Arch::Mlp(p), Cache::Mlp(c), ArchGrads::Mlp(g)) => {
                mlp::backward(self, p, sf, masks, fwd, c, gold, g, &mut grads.gate, &mut grads.tables)
            }
            (Arch::Elman(p), Cache::Rnn(c), ArchGrads::Rnn(g)) => rnn::backward(
                self, p, false, sf, masks, fwd, c, gold, g, &mut grads.gate, &mut grads.tables,
            ),
            (Arch::Jordan(p), Cache::Rnn(c), ArchGrads::Rnn(g)) => rnn::backward(
                self, p, true, sf, masks, fwd, c, gold, g, &mut grads.gate, &mut grads.tables,
            ),
            (Arch::Lstm(p), Cache::Lstm(c), ArchGrads::Lstm(g)) => {
                lstm::backward(self, p, sf, masks, fwd, c, gold, g, &mut grads.gate, &mut grads.tables)
            }
            (Arch::BiLstm(p), Cache::BiLstm(c), ArchGrads::BiLstm(g)) => lstm::bi_backward(
                self, p, sf, masks, fwd, c, gold, g, &mut grads.gate, &mut grads.tables,
            ),
            _ => panic!("forward cache or gradient container does not match architecture"),
        }
    }

    /// Named views of every parameter block, lookup tables and gate
    /// weights included. Names align with `Grads::blocks`.
    pub fn param_blocks(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> = vec![
            ("L_w".into(), &self.tables.word),
            ("L_a".into(), &self.tables.cap),
            ("L_c".into(), &self.tables.chars),
        ];
        match &self.arch {
            Arch::Mlp(p) => p.push_blocks(&mut out),
            Arch::Elman(p) | Arch::Jordan(p) => p.push_blocks(&mut out),
            Arch::Lstm(p) => p.push_blocks(&mut out),
            Arch::BiLstm(p) => p.push_blocks(&mut out),
        }
        match &self.gate {
            Some(GateParams::OneLayer { w_xr }) => out.push(("W_xr".into(), w_xr)),
            Some(GateParams::TwoLayer { w_xu, w_ur }) => {
                out.push(("W_xu".into(), w_xu));
                out.push(("W_ur".into(), w_ur));
            }
            None => {}
        }
        out
    }

    /// Mutable twin of `param_blocks`, same names and order.
    pub fn param_blocks_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out: Vec<(String, &mut Matrix)> = vec![
            ("L_w".into(), &mut self.tables.word),
            ("L_a".into(), &mut self.tables.cap),
            ("L_c".into(), &mut self.tables.chars),
        ];
        match &mut self.arch {
            Arch::Mlp(p) => p.push_blocks_mut(&mut out),
            Arch::Elman(p) | Arch::Jordan(p) => p.push_blocks_mut(&mut out),
            Arch::Lstm(p) => p.push_blocks_mut(&mut out),
            Arch::BiLstm(p) => p.push_blocks_mut(&mut out),
        }
        match &mut self.gate {
            Some(GateParams::OneLayer { w_xr }) => out.push(("W_xr".into(), w_xr)),
            Some(GateParams::TwoLayer { w_xu, w_ur }) => {
                out.push(("W_xu".into(), w_xu));
                out.push(("W_ur".into(), w_ur));
            }
            None => {}
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.param_blocks().iter().map(|(_, m)| m.data().len()).sum()
    }
}

/// Per-sentence dropout state: one gate scaling per token, and one scaling
/// per token at each hidden-dropout site.
#[derive(Clone, Debug)]
pub struct Masks {
    pub gate: Vec<GateScaling>,
    /// hidden[site][token]
    pub hidden: Vec<Vec<GateScaling>>,
}

/// Output of a forward pass, with the caches backward needs.
#[derive(Clone, Debug)]
pub struct Forward {
    /// Per-token tag distributions, each summing to 1.
    pub probs: Vec<Vector>,
    /// Per-token raw gate activations (pre-dropout), for export.
    pub gates: Vec<Vector>,
    pub(crate) cache: Cache,
}

#[derive(Clone, Debug)]
pub(crate) enum Cache {
    Mlp(mlp::MlpCache),
    Rnn(rnn::RnnCache),
    Lstm(lstm::LstmCache),
    BiLstm(lstm::BiLstmCache),
}

/// Gradient accumulator shaped like a `Model`.
#[derive(Clone, Debug)]
pub struct Grads {
    pub tables: TableGrads,
    pub gate: Option<GateGrads>,
    pub arch: ArchGrads,
}

#[derive(Clone, Debug)]
pub enum ArchGrads {
    Mlp(mlp::MlpGrads),
    Rnn(rnn::RnnGrads),
    Lstm(lstm::LstmGrads),
    BiLstm(lstm::BiLstmGrads),
}

impl Grads {
    pub fn zeros_like(model: &Model) -> Grads {
        Grads {
            tables: TableGrads::zeros_like(&model.tables),
            gate: model.gate.as_ref().map(GateGrads::zeros_like),
            arch: match &model.arch {
                Arch::Mlp(p) => ArchGrads::Mlp(mlp::MlpGrads::zeros_like(p)),
                Arch::Elman(p) | Arch::Jordan(p) => ArchGrads::Rnn(rnn::RnnGrads::zeros_like(p)),
                Arch::Lstm(p) => ArchGrads::Lstm(lstm::LstmGrads::zeros_like(p)),
                Arch::BiLstm(p) => ArchGrads::BiLstm(lstm::BiLstmGrads::zeros_like(p)),
            },
        }
    }

    /// θ ← θ − lr·g for every block, then clears the accumulator.
    pub fn apply_sgd(&mut self, model: &mut Model, lr: f64) {
        self.tables.apply_sgd(&mut model.tables, lr);
        if let (Some(g), Some(p)) = (self.gate.as_mut(), model.gate.as_mut()) {
            g.apply_sgd(p, lr);
        }
        match (&mut self.arch, &mut model.arch) {
            (ArchGrads::Mlp(g), Arch::Mlp(p)) => g.apply_sgd(p, lr),
            (ArchGrads::Rnn(g), Arch::Elman(p)) | (ArchGrads::Rnn(g), Arch::Jordan(p)) => {
                g.apply_sgd(p, lr)
            }
            (ArchGrads::Lstm(g), Arch::Lstm(p)) => g.apply_sgd(p, lr),
            (ArchGrads::BiLstm(g), Arch::BiLstm(p)) => g.apply_sgd(p, lr),
            _ => panic!("gradient container does not match architecture"),
        }
    }

    pub fn clear(&mut self) {
        self.tables.clear();
        if let Some(g) = self.gate.as_mut() {
            g.clear();
        }
        match &mut self.arch {
            ArchGrads::Mlp(g) => g.clear(),
            ArchGrads::Rnn(g) => g.clear(),
            ArchGrads::Lstm(g) => g.clear(),
            ArchGrads::BiLstm(g) => g.clear(),
        }
    }

    /// Named views of every gradient block; names align with
    /// `Model::param_blocks`.
    pub fn blocks(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> = vec![
            ("L_w".into(), &self.tables.word),
            ("L_a".into(), &self.tables.cap),
            ("L_c".into(), &self.tables.chars),
        ];
        match &self.arch {
            ArchGrads::Mlp(g) => g.push_blocks(&mut out),
            ArchGrads::Rnn(g) => g.push_blocks(&mut out),
            ArchGrads::Lstm(g) => g.push_blocks(&mut out),
            ArchGrads::BiLstm(g) => g.push_blocks(&mut out),
        }
        match &self.gate {
            Some(GateGrads::OneLayer { w_xr }) => out.push(("W_xr".into(), w_xr)),
            Some(GateGrads::TwoLayer { w_xu, w_ur }) => {
                out.push(("W_xu".into(), w_xu));
                out.push(("W_ur".into(), w_ur));
            }
            None => {}
        }
        out
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

// ---- shared building blocks for the architecture modules ----

pub(crate) fn maybe_bias(dim: usize, enabled: bool) -> Option<Matrix> {
    enabled.then(|| Matrix::zeros(1, dim))
}

pub(crate) fn add_bias(v: &mut [f64], b: &Option<Matrix>) {
    if let Some(b) = b {
        axpy(v, 1.0, b.row(0));
    }
}

pub(crate) fn push_opt<'a>(
    out: &mut Vec<(String, &'a Matrix)>,
    name: &str,
    m: &'a Option<Matrix>,
) {
    if let Some(m) = m {
        out.push((name.to_string(), m));
    }
}

pub(crate) fn push_opt_mut<'a>(
    out: &mut Vec<(String, &'a mut Matrix)>,
    name: &str,
    m: &'a mut Option<Matrix>,
) {
    if let Some(m) = m {
        out.push((name.to_string(), m));
    }
}

pub(crate) fn sgd_opt(p: &mut Option<Matrix>, g: &mut Option<Matrix>, lr: f64) {
    if let (Some(p), Some(g)) = (p.as_mut(), g.as_mut()) {
        p.add_scaled(g, -lr);
        g.fill(0.0);
    }
}

pub(crate) fn clear_opt(g: &mut Option<Matrix>) {
    if let Some(g) = g {
        g.fill(0.0);
    }
}

/// One token's gated input: raw window → gates → dropout → x̃.
pub(crate) fn input_forward(
    model: &Model,
    sf: &SentenceFeatures,
    t: usize,
    scaling: &GateScaling,
) -> (Vector, DynwinCache) {
    let x = sf.context_window(t, model.cfg.feature.window_radius);
    dynwin_forward(
        model.gate.as_ref(),
        &model.cfg.gate_config(),
        x,
        scaling.clone(),
    )
}

/// Backward of `input_forward`: routes grad_x̃ through the gates and
/// scatters the window gradient onto per-position feature gradients.
#[allow(clippy::too_many_arguments)]
pub(crate) fn input_backward(
    model: &Model,
    sf: &SentenceFeatures,
    t: usize,
    cache: &DynwinCache,
    grad_xtilde: &[f64],
    gate_grads: &mut Option<GateGrads>,
    feat_grads: &mut [Vector],
    pad_grad: &mut Vector,
) {
    let grad_x = dynwin_backward(
        model.gate.as_ref(),
        &model.cfg.gate_config(),
        cache,
        grad_xtilde,
        gate_grads.as_mut(),
    );
    sf.scatter_window_grad(t, model.cfg.feature.window_radius, &grad_x, feat_grads, pad_grad);
}

/// Flushes per-position feature gradients into the lookup-table rows.
pub(crate) fn scatter_tables(
    model: &Model,
    sf: &SentenceFeatures,
    feat_grads: &[Vector],
    pad_grad: &Vector,
    tables: &mut TableGrads,
) {
    for (ids, gf) in sf.ids.iter().zip(feat_grads) {
        tables.add_token(&model.cfg.feature, ids, gf);
    }
    tables.add_token(&model.cfg.feature, &sf.pad_ids, pad_grad);
}

/// Output head: y = softmax(W_hy v + b_y).
pub(crate) fn head_forward(w_hy: &Matrix, b_y: &Option<Matrix>, v: &[f64]) -> Vector {
    let mut z = w_hy.matvec(v);
    add_bias(&mut z, b_y);
    softmax(&z)
}

/// Head backward for a given logit gradient dz; returns dv.
pub(crate) fn head_backward(
    w_hy: &Matrix,
    g_w_hy: &mut Matrix,
    g_b_y: &mut Option<Matrix>,
    dz: &[f64],
    v: &[f64],
) -> Vector {
    g_w_hy.add_outer(dz, v);
    if let Some(b) = g_b_y {
        axpy(b.row_mut(0), 1.0, dz);
    }
    w_hy.matvec_t(dz)
}

/// Gradient of the mean sentence NLL on the logits at one position:
/// dL/dz = (y − onehot(gold)) / T.
pub(crate) fn loss_seed(y: &[f64], gold: usize, sentence_len: usize) -> Vector {
    let t = sentence_len as f64;
    let mut dz: Vector = y.iter().map(|&p| p / t).collect();
    dz[gold] -= 1.0 / t;
    dz
}
