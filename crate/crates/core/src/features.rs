//! Per-token distributed features and context-window assembly.
//!
//! A token's feature vector concatenates its word embedding, a
//! capitalization embedding, and character embeddings for the leftmost and
//! rightmost `chars_per_side` characters of the preprocessed form. The
//! network input at position t concatenates the feature vectors of the
//! 2ρ+1 window slots around t, with a learned PAD pseudo-token filling
//! out-of-range slots (zero padding would interact degenerately with the
//! multiplicative gates downstream).

use crate::corpus::{
    capitalization_class, preprocess_token, CapClass, CharVocab, EmbeddingTable, Vocab,
    NUM_CAP_CLASSES,
};
use crate::error::{Error, Result};
use crate::numerics::{axpy, init_gaussian, Matrix, Rng, Vector};

/// Dimensions of the feature pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureConfig {
    /// Word-embedding dimension n.
    pub word_dim: usize,
    /// Capitalization-embedding dimension m.
    pub cap_dim: usize,
    /// Character-embedding dimension.
    pub char_dim: usize,
    /// Characters taken from each side of the word.
    pub chars_per_side: usize,
    /// Window radius ρ: the window covers 2ρ+1 slots.
    pub window_radius: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            word_dim: 200,
            cap_dim: 5,
            char_dim: 5,
            chars_per_side: 5,
            window_radius: 4,
        }
    }
}

impl FeatureConfig {
    /// Token feature dimension F = n + m + 2·chars_per_side·char_dim.
    pub fn token_dim(&self) -> usize {
        self.word_dim + self.cap_dim + 2 * self.chars_per_side * self.char_dim
    }

    /// Number of window slots, 2ρ+1.
    pub fn slots(&self) -> usize {
        2 * self.window_radius + 1
    }

    /// Window input dimension I = (2ρ+1)·F.
    pub fn window_dim(&self) -> usize {
        self.slots() * self.token_dim()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("word_dim", self.word_dim),
            ("cap_dim", self.cap_dim),
            ("char_dim", self.char_dim),
            ("chars_per_side", self.chars_per_side),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// The three trainable lookup tables of Eq-style token features.
#[derive(Clone, Debug, PartialEq)]
pub struct LookupTables {
    /// |V_w| × word_dim
    pub word: Matrix,
    /// NUM_CAP_CLASSES × cap_dim
    pub cap: Matrix,
    /// |V_c| × char_dim
    pub chars: Matrix,
}

impl LookupTables {
    /// Gaussian-initializes all rows, then overwrites word rows covered by
    /// the pretrained table. Drawing everything first keeps the RNG stream
    /// independent of pretrained coverage.
    pub fn init(
        cfg: &FeatureConfig,
        vocab: &Vocab,
        char_vocab: &CharVocab,
        pretrained: Option<&EmbeddingTable>,
        rng: &mut Rng,
    ) -> Result<LookupTables> {
        cfg.validate()?;
        if let Some(table) = pretrained {
            if table.dim() != cfg.word_dim {
                return Err(Error::config(format!(
                    "pretrained vectors have dim {}, word_dim is {}",
                    table.dim(),
                    cfg.word_dim
                )));
            }
        }
        let mut word = init_gaussian(vocab.len(), cfg.word_dim, cfg.word_dim, 0.1, rng);
        let cap = init_gaussian(NUM_CAP_CLASSES, cfg.cap_dim, cfg.cap_dim, 0.1, rng);
        let chars = init_gaussian(char_vocab.len(), cfg.char_dim, cfg.char_dim, 0.1, rng);
        if let Some(table) = pretrained {
            for id in 0..vocab.len() {
                if let Some(row) = table.get(vocab.token(id)) {
                    word.row_mut(id).copy_from_slice(row);
                }
            }
        }
        Ok(LookupTables { word, cap, chars })
    }
}

/// Lookup-table row indices for one token (or for the PAD pseudo-token).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenIds {
    pub word: usize,
    pub cap: usize,
    pub left_chars: Vec<usize>,
    pub right_chars: Vec<usize>,
}

/// Resolves a surface form to table indices. Unknown words and characters
/// fall back to their UNK rows; nothing here can fail.
pub fn token_ids(
    cfg: &FeatureConfig,
    vocab: &Vocab,
    char_vocab: &CharVocab,
    surface: &str,
) -> TokenIds {
    let form = preprocess_token(surface);
    let cs: Vec<char> = form.chars().collect();
    let k = cfg.chars_per_side;
    let mut left = vec![CharVocab::PAD; k];
    let mut right = vec![CharVocab::PAD; k];
    for (slot, c) in cs.iter().take(k).enumerate() {
        left[slot] = char_vocab.id_or_unk(*c);
    }
    // Rightmost characters keep their order, padding on the left:
    // "ab" with k=5 fills slots [PAD, PAD, PAD, a, b].
    let tail = cs.len().min(k);
    for (i, c) in cs[cs.len() - tail..].iter().enumerate() {
        right[k - tail + i] = char_vocab.id_or_unk(*c);
    }
    TokenIds {
        word: vocab.id_or_unk(&form),
        cap: capitalization_class(surface).id(),
        left_chars: left,
        right_chars: right,
    }
}

/// Indices of the learned PAD pseudo-token used for window boundaries.
pub fn pad_ids(cfg: &FeatureConfig) -> TokenIds {
    TokenIds {
        word: Vocab::PAD,
        cap: CapClass::NoAlpha.id(),
        left_chars: vec![CharVocab::PAD; cfg.chars_per_side],
        right_chars: vec![CharVocab::PAD; cfg.chars_per_side],
    }
}

/// Gathers one token's feature vector (dim F) from the tables.
pub fn token_feature(tables: &LookupTables, cfg: &FeatureConfig, ids: &TokenIds) -> Vector {
    let mut f = Vec::with_capacity(cfg.token_dim());
    f.extend_from_slice(tables.word.row(ids.word));
    f.extend_from_slice(tables.cap.row(ids.cap));
    for &c in ids.left_chars.iter().chain(ids.right_chars.iter()) {
        f.extend_from_slice(tables.chars.row(c));
    }
    f
}

/// Feature vectors for a whole sentence plus the shared PAD feature.
#[derive(Clone, Debug)]
pub struct SentenceFeatures {
    pub ids: Vec<TokenIds>,
    pub feats: Vec<Vector>,
    pub pad_ids: TokenIds,
    pub pad_feat: Vector,
}

pub fn featurize<S: AsRef<str>>(
    tables: &LookupTables,
    cfg: &FeatureConfig,
    vocab: &Vocab,
    char_vocab: &CharVocab,
    surfaces: &[S],
) -> SentenceFeatures {
    let ids: Vec<TokenIds> = surfaces
        .iter()
        .map(|s| token_ids(cfg, vocab, char_vocab, s.as_ref()))
        .collect();
    let feats = ids.iter().map(|i| token_feature(tables, cfg, i)).collect();
    let pad = pad_ids(cfg);
    let pad_feat = token_feature(tables, cfg, &pad);
    SentenceFeatures {
        ids,
        feats,
        pad_ids: pad,
        pad_feat,
    }
}

impl SentenceFeatures {
    pub fn len(&self) -> usize {
        self.feats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.feats.is_empty()
    }

    /// Window input at position t: slots t−ρ … t+ρ concatenated, PAD
    /// feature for out-of-range slots. Output dim (2ρ+1)·F.
    pub fn context_window(&self, t: usize, radius: usize) -> Vector {
        assert!(t < self.len(), "window position out of range");
        let f = self.pad_feat.len();
        let mut x = Vec::with_capacity((2 * radius + 1) * f);
        for off in -(radius as isize)..=(radius as isize) {
            let pos = t as isize + off;
            if pos < 0 || pos >= self.len() as isize {
                x.extend_from_slice(&self.pad_feat);
            } else {
                x.extend_from_slice(&self.feats[pos as usize]);
            }
        }
        x
    }

    /// Adjoint of `context_window`: scatters a window-space gradient back
    /// onto per-position feature gradients and the PAD feature gradient.
    pub fn scatter_window_grad(
        &self,
        t: usize,
        radius: usize,
        grad_x: &[f64],
        feat_grads: &mut [Vector],
        pad_grad: &mut Vector,
    ) {
        let f = self.pad_feat.len();
        assert_eq!(grad_x.len(), (2 * radius + 1) * f);
        assert_eq!(feat_grads.len(), self.len());
        for (slot, off) in (-(radius as isize)..=(radius as isize)).enumerate() {
            let seg = &grad_x[slot * f..(slot + 1) * f];
            let pos = t as isize + off;
            if pos < 0 || pos >= self.len() as isize {
                axpy(pad_grad, 1.0, seg);
            } else {
                axpy(&mut feat_grads[pos as usize], 1.0, seg);
            }
        }
    }
}

/// Gradient accumulator for the lookup tables. Word and character tables
/// can be large, so rows are tracked and cleared sparsely; the 5-row cap
/// table is handled densely.
#[derive(Clone, Debug)]
pub struct TableGrads {
    pub word: Matrix,
    pub cap: Matrix,
    pub chars: Matrix,
    word_touched: Vec<usize>,
    word_mark: Vec<bool>,
    char_touched: Vec<usize>,
    char_mark: Vec<bool>,
}

impl TableGrads {
    pub fn zeros_like(tables: &LookupTables) -> TableGrads {
        TableGrads {
            word: Matrix::zeros(tables.word.rows(), tables.word.cols()),
            cap: Matrix::zeros(tables.cap.rows(), tables.cap.cols()),
            chars: Matrix::zeros(tables.chars.rows(), tables.chars.cols()),
            word_touched: Vec::new(),
            word_mark: vec![false; tables.word.rows()],
            char_touched: Vec::new(),
            char_mark: vec![false; tables.chars.rows()],
        }
    }

    fn touch_word(&mut self, id: usize) {
        if !self.word_mark[id] {
            self.word_mark[id] = true;
            self.word_touched.push(id);
        }
    }

    fn touch_char(&mut self, id: usize) {
        if !self.char_mark[id] {
            self.char_mark[id] = true;
            self.char_touched.push(id);
        }
    }

    /// Accumulates a token-feature gradient (dim F) into the table rows
    /// named by `ids`, splitting it into its word/cap/char segments.
    pub fn add_token(&mut self, cfg: &FeatureConfig, ids: &TokenIds, grad_f: &[f64]) {
        assert_eq!(grad_f.len(), cfg.token_dim());
        let (n, m, d) = (cfg.word_dim, cfg.cap_dim, cfg.char_dim);
        axpy(self.word.row_mut(ids.word), 1.0, &grad_f[..n]);
        self.touch_word(ids.word);
        axpy(self.cap.row_mut(ids.cap), 1.0, &grad_f[n..n + m]);
        let mut offset = n + m;
        for &c in ids.left_chars.iter().chain(ids.right_chars.iter()) {
            axpy(self.chars.row_mut(c), 1.0, &grad_f[offset..offset + d]);
            self.touch_char(c);
            offset += d;
        }
    }

    /// θ ← θ − lr·grad on every touched row, then clears the accumulator.
    pub fn apply_sgd(&mut self, tables: &mut LookupTables, lr: f64) {
        for &id in &self.word_touched {
            axpy(tables.word.row_mut(id), -lr, self.word.row(id));
            self.word.row_mut(id).fill(0.0);
            self.word_mark[id] = false;
        }
        self.word_touched.clear();
        for r in 0..self.cap.rows() {
            axpy(tables.cap.row_mut(r), -lr, self.cap.row(r));
            self.cap.row_mut(r).fill(0.0);
        }
        for &id in &self.char_touched {
            axpy(tables.chars.row_mut(id), -lr, self.chars.row(id));
            self.chars.row_mut(id).fill(0.0);
            self.char_mark[id] = false;
        }
        self.char_touched.clear();
    }

    pub fn clear(&mut self) {
        for &id in &self.word_touched {
            self.word.row_mut(id).fill(0.0);
            self.word_mark[id] = false;
        }
        self.word_touched.clear();
        self.cap.fill(0.0);
        for &id in &self.char_touched {
            self.chars.row_mut(id).fill(0.0);
            self.char_mark[id] = false;
        }
        self.char_touched.clear();
    }

    /// Row indices touched since the last clear (for sparsity tests).
    pub fn touched_word_rows(&self) -> &[usize] {
        &self.word_touched
    }

    pub fn touched_char_rows(&self) -> &[usize] {
        &self.char_touched
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab_tagset, parse_corpus, parse_embeddings, Sentence};

    fn toy_setup() -> (FeatureConfig, Vocab, CharVocab, Vec<Sentence>) {
        let sents = parse_corpus("The|NP/N dog|N runs|S\\NP\nA|NP/N dog|N ab|N", "t").unwrap();
        let (vocab, _) = build_vocab_tagset(&sents, 1).unwrap();
        let cv = CharVocab::build(&sents);
        let cfg = FeatureConfig {
            word_dim: 4,
            cap_dim: 2,
            char_dim: 3,
            chars_per_side: 5,
            window_radius: 1,
        };
        (cfg, vocab, cv, sents)
    }

    #[test]
    fn default_dims_match_the_reference_configuration() {
        let cfg = FeatureConfig::default();
        assert_eq!(cfg.token_dim(), 255); // 200 + 5 + 5·5 + 5·5
        assert_eq!(cfg.slots(), 9);
        assert_eq!(cfg.window_dim(), 9 * 255);
        let rnn = FeatureConfig {
            window_radius: 1,
            ..cfg
        };
        assert_eq!(rnn.slots(), 3);
    }

    #[test]
    fn short_word_char_slots() {
        let (cfg, vocab, cv, _) = toy_setup();
        let ids = token_ids(&cfg, &vocab, &cv, "ab");
        let a = cv.id_or_unk('a');
        let b = cv.id_or_unk('b');
        let p = CharVocab::PAD;
        assert_eq!(ids.left_chars, vec![a, b, p, p, p]);
        assert_eq!(ids.right_chars, vec![p, p, p, a, b]);

        // Long word: both sides read their own end, in order.
        let ids = token_ids(&cfg, &vocab, &cv, "sleeps");
        let ch = |c| cv.id_or_unk(c);
        assert_eq!(
            ids.left_chars,
            vec![ch('s'), ch('l'), ch('e'), ch('e'), ch('p')]
        );
        assert_eq!(
            ids.right_chars,
            vec![ch('l'), ch('e'), ch('e'), ch('p'), ch('s')]
        );
    }

    #[test]
    fn unknown_word_and_char_fall_back() {
        let (cfg, vocab, cv, _) = toy_setup();
        let ids = token_ids(&cfg, &vocab, &cv, "zQ9");
        assert_eq!(ids.word, Vocab::UNK);
        assert_eq!(ids.cap, CapClass::Mixed.id());
        assert_eq!(ids.left_chars[0], CharVocab::UNK); // 'z' unseen
        assert_eq!(ids.left_chars[2], CharVocab::UNK); // '9' unseen
    }

    #[test]
    fn token_feature_layout_and_determinism() {
        let (cfg, vocab, cv, _) = toy_setup();
        let tables =
            LookupTables::init(&cfg, &vocab, &cv, None, &mut Rng::new(1)).unwrap();
        let ids = token_ids(&cfg, &vocab, &cv, "dog");
        let f = token_feature(&tables, &cfg, &ids);
        assert_eq!(f.len(), cfg.token_dim());
        assert_eq!(&f[..4], tables.word.row(ids.word));
        assert_eq!(&f[4..6], tables.cap.row(CapClass::AllLower.id()));
        assert_eq!(&f[6..9], tables.chars.row(cv.id_or_unk('d')));
        // Same surface → identical vector.
        let f2 = token_feature(&tables, &cfg, &token_ids(&cfg, &vocab, &cv, "dog"));
        assert_eq!(f, f2);
    }

    #[test]
    fn pretrained_rows_are_copied() {
        let (cfg, vocab, cv, _) = toy_setup();
        let table = parse_embeddings("dog 1 2 3 4\n", "e", 4).unwrap();
        let tables =
            LookupTables::init(&cfg, &vocab, &cv, Some(&table), &mut Rng::new(1)).unwrap();
        assert_eq!(tables.word.row(vocab.id("dog").unwrap()), &[1.0, 2.0, 3.0, 4.0]);
        // Uncovered rows keep their Gaussian init (nonzero, small).
        let runs = tables.word.row(vocab.id("runs").unwrap());
        assert!(runs.iter().any(|&v| v != 0.0));
        assert!(runs.iter().all(|&v| v.abs() < 1.0));
        // Dim mismatch is a construction error.
        let bad = parse_embeddings("dog 1 2\n", "e", 2).unwrap();
        assert!(LookupTables::init(&cfg, &vocab, &cv, Some(&bad), &mut Rng::new(1)).is_err());
    }

    fn toy_features() -> (FeatureConfig, SentenceFeatures) {
        let (cfg, vocab, cv, _) = toy_setup();
        let tables =
            LookupTables::init(&cfg, &vocab, &cv, None, &mut Rng::new(2)).unwrap();
        let sf = featurize(&tables, &cfg, &vocab, &cv, &["The", "dog", "runs"]);
        (cfg, sf)
    }

    #[test]
    fn context_window_boundaries() {
        let (cfg, sf) = toy_features();
        let f = cfg.token_dim();
        let x = sf.context_window(0, 1);
        assert_eq!(x.len(), 3 * f);
        assert_eq!(&x[..f], sf.pad_feat.as_slice());
        assert_eq!(&x[f..2 * f], sf.feats[0].as_slice());
        assert_eq!(&x[2 * f..], sf.feats[1].as_slice());

        // ρ=0 is exactly the token feature.
        assert_eq!(sf.context_window(1, 0), sf.feats[1]);

        // Every in-range slot equals the feature at its position.
        for t in 0..3 {
            let x = sf.context_window(t, 2);
            for (slot, off) in (-2isize..=2).enumerate() {
                let pos = t as isize + off;
                let seg = &x[slot * f..(slot + 1) * f];
                if (0..3).contains(&pos) {
                    assert_eq!(seg, sf.feats[pos as usize].as_slice());
                } else {
                    assert_eq!(seg, sf.pad_feat.as_slice());
                }
            }
        }
    }

    #[test]
    fn scatter_is_adjoint_of_gather() {
        // ⟨window(t), g⟩ == Σ_pos ⟨feat_pos, scatter(g)_pos⟩ + ⟨pad, scatter(g)_pad⟩
        let (cfg, sf) = toy_features();
        let radius = 2;
        let mut rng = Rng::new(33);
        for t in 0..sf.len() {
            let g: Vector = (0..(2 * radius + 1) * cfg.token_dim())
                .map(|_| rng.standard_normal())
                .collect();
            let x = sf.context_window(t, radius);
            let lhs = crate::numerics::dot(&x, &g);
            let mut feat_grads = vec![vec![0.0; cfg.token_dim()]; sf.len()];
            let mut pad_grad = vec![0.0; cfg.token_dim()];
            sf.scatter_window_grad(t, radius, &g, &mut feat_grads, &mut pad_grad);
            let mut rhs = crate::numerics::dot(&sf.pad_feat, &pad_grad);
            for (fv, gv) in sf.feats.iter().zip(&feat_grads) {
                rhs += crate::numerics::dot(fv, gv);
            }
            assert!((lhs - rhs).abs() < 1e-10, "t={t}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn table_grads_touch_only_seen_rows() {
        let (cfg, vocab, cv, _) = toy_setup();
        let mut tables =
            LookupTables::init(&cfg, &vocab, &cv, None, &mut Rng::new(3)).unwrap();
        let before = tables.clone();
        let mut grads = TableGrads::zeros_like(&tables);
        let ids = token_ids(&cfg, &vocab, &cv, "dog");
        let gf: Vector = (0..cfg.token_dim()).map(|i| i as f64 + 1.0).collect();
        grads.add_token(&cfg, &ids, &gf);
        assert_eq!(grads.touched_word_rows(), &[ids.word]);
        grads.apply_sgd(&mut tables, 0.5);

        for id in 0..vocab.len() {
            if id == ids.word {
                assert_ne!(tables.word.row(id), before.word.row(id));
            } else {
                assert_eq!(tables.word.row(id), before.word.row(id));
            }
        }
        // 'd','o','g' rows changed; an unrelated row did not.
        assert_ne!(
            tables.chars.row(cv.id_or_unk('d')),
            before.chars.row(cv.id_or_unk('d'))
        );
        assert_eq!(
            tables.chars.row(cv.id_or_unk('t')),
            before.chars.row(cv.id_or_unk('t'))
        );
        // Accumulator cleared by apply.
        assert!(grads.touched_word_rows().is_empty());
        assert_eq!(grads.word.max_abs(), 0.0);

        // apply twice with cleared grads is a no-op.
        let after = tables.clone();
        grads.apply_sgd(&mut tables, 0.5);
        assert_eq!(tables, after);
    }
}
