//! Corpus loading, token preprocessing, and vocabulary construction.
//!
//! Corpus files are line-oriented: one sentence per line, tokens separated
//! by whitespace, each token `surface|supertag` or `surface|POS|supertag`
//! (the POS field is read and discarded). Preprocessing lowercases and maps
//! every ASCII digit to '9'; capitalization is read off the original surface
//! before that and carried as a separate feature.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Vector;

/// Reserved vocabulary token for window padding (a learned row).
pub const PAD_TOKEN: &str = "<PAD>";
/// Reserved vocabulary token for unknown/rare words.
pub const UNK_TOKEN: &str = "<UNK>";
/// Reserved tag id for categories unseen in training.
pub const RARE_TAG: &str = "<RARE>";

/// One corpus token: the original surface, its preprocessed form, and the
/// gold supertag string.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub form: String,
    pub tag: String,
}

/// A non-empty tagged sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Lowercases and maps every ASCII digit to '9'. Idempotent.
pub fn preprocess_token(surface: &str) -> String {
    surface
        .to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_digit() { '9' } else { c })
        .collect()
}

/// Capitalization shape of the original surface. The id doubles as the row
/// index into the capitalization lookup table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CapClass {
    AllLower = 0,
    FirstUpper = 1,
    AllUpper = 2,
    Mixed = 3,
    NoAlpha = 4,
}

pub const NUM_CAP_CLASSES: usize = 5;

impl CapClass {
    pub fn id(self) -> usize {
        self as usize
    }
}

pub fn capitalization_class(surface: &str) -> CapClass {
    let alpha: Vec<char> = surface.chars().filter(|c| c.is_alphabetic()).collect();
    if alpha.is_empty() {
        return CapClass::NoAlpha;
    }
    if alpha.iter().all(|c| c.is_uppercase()) {
        return CapClass::AllUpper;
    }
    if alpha.iter().all(|c| c.is_lowercase()) {
        return CapClass::AllLower;
    }
    let first_is_upper = surface
        .chars()
        .next()
        .is_some_and(|c| c.is_uppercase());
    if first_is_upper && alpha[1..].iter().all(|c| c.is_lowercase()) {
        CapClass::FirstUpper
    } else {
        CapClass::Mixed
    }
}

/// Parses corpus text. `label` names the source in error messages.
pub fn parse_corpus(text: &str, label: &str) -> Result<Vec<Sentence>> {
    let mut sentences = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let mut tokens = Vec::new();
        for raw in line.split_whitespace() {
            let fields: Vec<&str> = raw.split('|').collect();
            let (surface, tag) = match fields.as_slice() {
                [surface, tag] => (*surface, *tag),
                // POS in the middle is read and discarded.
                [surface, _pos, tag] => (*surface, *tag),
                _ => {
                    return Err(Error::data(
                        label,
                        lineno,
                        format!(
                            "token {raw:?} has {} pipe-separated fields, expected 2 or 3",
                            fields.len()
                        ),
                    ));
                }
            };
            if surface.is_empty() || tag.is_empty() {
                return Err(Error::data(
                    label,
                    lineno,
                    format!("token {raw:?} has an empty surface or tag field"),
                ));
            }
            tokens.push(Token {
                surface: surface.to_string(),
                form: preprocess_token(surface),
                tag: tag.to_string(),
            });
        }
        if tokens.is_empty() {
            return Err(Error::data(label, lineno, "empty sentence line"));
        }
        sentences.push(Sentence { tokens });
    }
    Ok(sentences)
}

pub fn load_corpus(path: &Path) -> Result<Vec<Sentence>> {
    let text = fs::read_to_string(path)?;
    parse_corpus(&text, &path.display().to_string())
}

/// Word vocabulary over preprocessed forms, with reserved PAD and UNK ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocab {
    ids: HashMap<String, usize>,
    tokens: Vec<String>,
    counts: Vec<usize>,
}

impl Vocab {
    pub const PAD: usize = 0;
    pub const UNK: usize = 1;

    fn with_reserved() -> Vocab {
        let mut v = Vocab {
            ids: HashMap::new(),
            tokens: Vec::new(),
            counts: Vec::new(),
        };
        v.push(PAD_TOKEN.to_string(), 0);
        v.push(UNK_TOKEN.to_string(), 0);
        v
    }

    fn push(&mut self, token: String, count: usize) -> usize {
        let id = self.tokens.len();
        self.ids.insert(token.clone(), id);
        self.tokens.push(token);
        self.counts.push(count);
        id
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.ids.get(word).copied()
    }

    pub fn id_or_unk(&self, word: &str) -> usize {
        self.id(word).unwrap_or(Vocab::UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn count(&self, id: usize) -> usize {
        self.counts[id]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved entries are always present
    }

    pub fn to_tsv(&self) -> String {
        tsv_of(&self.tokens)
    }

    pub fn from_tsv(text: &str, label: &str) -> Result<Vocab> {
        let tokens = tsv_tokens(text, label)?;
        if tokens.len() < 2 || tokens[0] != PAD_TOKEN || tokens[1] != UNK_TOKEN {
            return Err(Error::data(
                label,
                1,
                format!("vocab must start with {PAD_TOKEN} and {UNK_TOKEN}"),
            ));
        }
        let mut v = Vocab {
            ids: HashMap::new(),
            tokens: Vec::new(),
            counts: Vec::new(),
        };
        for t in tokens {
            v.push(t, 0);
        }
        Ok(v)
    }
}

/// Supertag inventory with a reserved RARE bucket for unseen categories.
#[derive(Clone, Debug, PartialEq)]
pub struct TagSet {
    ids: HashMap<String, usize>,
    tags: Vec<String>,
}

impl TagSet {
    pub const RARE: usize = 0;

    pub fn id(&self, tag: &str) -> Option<usize> {
        self.ids.get(tag).copied()
    }

    pub fn id_or_rare(&self, tag: &str) -> usize {
        self.id(tag).unwrap_or(TagSet::RARE)
    }

    pub fn tag(&self, id: usize) -> &str {
        &self.tags[id]
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        false // RARE is always present
    }

    /// Tags in id order (RARE first).
    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn to_tsv(&self) -> String {
        tsv_of(&self.tags)
    }

    pub fn from_tsv(text: &str, label: &str) -> Result<TagSet> {
        let tags = tsv_tokens(text, label)?;
        if tags.first().map(String::as_str) != Some(RARE_TAG) {
            return Err(Error::data(label, 1, format!("tagset must start with {RARE_TAG}")));
        }
        let mut ids = HashMap::new();
        for (i, t) in tags.iter().enumerate() {
            ids.insert(t.clone(), i);
        }
        Ok(TagSet { ids, tags })
    }
}

fn tsv_of(tokens: &[String]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        out.push_str(&format!("{i}\t{t}\n"));
    }
    out
}

fn tsv_tokens(text: &str, label: &str) -> Result<Vec<String>> {
    let mut tokens = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let (id, token) = line
            .split_once('\t')
            .ok_or_else(|| Error::data(label, lineno, "expected id<TAB>token"))?;
        let id: usize = id
            .parse()
            .map_err(|_| Error::data(label, lineno, format!("bad id {id:?}")))?;
        if id != tokens.len() {
            return Err(Error::data(
                label,
                lineno,
                format!("ids must be dense and in order; expected {}, got {id}", tokens.len()),
            ));
        }
        tokens.push(token.to_string());
    }
    Ok(tokens)
}

/// Builds the word vocabulary and tagset from the training split. Words
/// occurring fewer than `min_word_count` times map to UNK; every distinct
/// training tag gets an id, and RARE absorbs anything unseen later.
pub fn build_vocab_tagset(train: &[Sentence], min_word_count: usize) -> Result<(Vocab, TagSet)> {
    if train.is_empty() {
        return Err(Error::config("empty training set"));
    }

    let mut counts: HashMap<&str, usize> = HashMap::new();
    for s in train {
        for t in &s.tokens {
            *counts.entry(t.form.as_str()).or_insert(0) += 1;
        }
    }

    let mut vocab = Vocab::with_reserved();
    let mut tags = TagSet {
        ids: HashMap::from([(RARE_TAG.to_string(), 0)]),
        tags: vec![RARE_TAG.to_string()],
    };

    // Second pass in corpus order keeps id assignment deterministic
    // (first occurrence wins), independent of hash iteration order.
    let threshold = min_word_count.max(1);
    for s in train {
        for t in &s.tokens {
            let c = counts[t.form.as_str()];
            if c >= threshold {
                if vocab.id(&t.form).is_none() {
                    vocab.push(t.form.clone(), c);
                }
            } else {
                // Below-threshold occurrences accumulate on the UNK row.
                vocab.counts[Vocab::UNK] += 1;
            }
            if tags.id(&t.tag).is_none() {
                let id = tags.tags.len();
                tags.ids.insert(t.tag.clone(), id);
                tags.tags.push(t.tag.clone());
            }
        }
    }
    Ok((vocab, tags))
}

/// Character inventory over preprocessed forms, with PAD (for short words)
/// and UNK (for unseen characters) reserved.
#[derive(Clone, Debug, PartialEq)]
pub struct CharVocab {
    ids: HashMap<char, usize>,
    chars: Vec<char>,
}

impl CharVocab {
    pub const PAD: usize = 0;
    pub const UNK: usize = 1;

    pub fn build(train: &[Sentence]) -> CharVocab {
        let mut v = CharVocab {
            ids: HashMap::new(),
            chars: Vec::new(),
        };
        // '\0' placeholders: reserved slots have no printable character.
        v.chars.push('\0');
        v.chars.push('\0');
        for s in train {
            for t in &s.tokens {
                for c in t.form.chars() {
                    if !v.ids.contains_key(&c) {
                        let id = v.chars.len();
                        v.ids.insert(c, id);
                        v.chars.push(c);
                    }
                }
            }
        }
        v
    }

    pub fn id_or_unk(&self, c: char) -> usize {
        self.ids.get(&c).copied().unwrap_or(CharVocab::UNK)
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, c) in self.chars.iter().enumerate() {
            if i < 2 {
                out.push_str(&format!("{i}\t\n"));
            } else {
                out.push_str(&format!("{i}\t{c}\n"));
            }
        }
        out
    }

    pub fn from_tsv(text: &str, label: &str) -> Result<CharVocab> {
        let mut chars = Vec::new();
        let mut ids = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let (id, rest) = line
                .split_once('\t')
                .ok_or_else(|| Error::data(label, lineno, "expected id<TAB>char"))?;
            let id: usize = id
                .parse()
                .map_err(|_| Error::data(label, lineno, format!("bad id {id:?}")))?;
            if id != chars.len() {
                return Err(Error::data(label, lineno, "ids must be dense and in order"));
            }
            if id < 2 {
                chars.push('\0');
                continue;
            }
            let mut it = rest.chars();
            let c = it
                .next()
                .ok_or_else(|| Error::data(label, lineno, "missing character"))?;
            if it.next().is_some() {
                return Err(Error::data(label, lineno, "expected a single character"));
            }
            ids.insert(c, id);
            chars.push(c);
        }
        if chars.len() < 2 {
            return Err(Error::data(label, 1, "char vocab missing reserved rows"));
        }
        Ok(CharVocab { ids, chars })
    }
}

/// Pretrained word vectors: token → row, all rows of one dimension.
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    dim: usize,
    ids: HashMap<String, usize>,
    rows: Vec<Vector>,
    /// Non-fatal anomalies found while loading (duplicate tokens).
    pub warnings: Vec<String>,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.ids.get(token).map(|&i| self.rows[i].as_slice())
    }
}

pub fn parse_embeddings(text: &str, label: &str, expected_dim: usize) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable {
        dim: expected_dim,
        ids: HashMap::new(),
        rows: Vec::new(),
        warnings: Vec::new(),
    };
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let mut fields = line.split_whitespace();
        let token = match fields.next() {
            Some(t) => t,
            None => continue, // blank trailing line
        };
        let values: Vec<&str> = fields.collect();
        if values.len() != expected_dim {
            return Err(Error::data(
                label,
                lineno,
                format!(
                    "expected {expected_dim} values for {token:?}, found {}",
                    values.len()
                ),
            ));
        }
        let mut row = Vec::with_capacity(expected_dim);
        for v in values {
            let x: f64 = v
                .parse()
                .map_err(|_| Error::data(label, lineno, format!("unreadable number {v:?}")))?;
            row.push(x);
        }
        if let Some(&old) = table.ids.get(token) {
            table
                .warnings
                .push(format!("{label}:{lineno}: duplicate token {token:?}; last occurrence wins"));
            table.rows[old] = row;
        } else {
            let id = table.rows.len();
            table.ids.insert(token.to_string(), id);
            table.rows.push(row);
        }
    }
    Ok(table)
}

pub fn load_embeddings(path: &Path, expected_dim: usize) -> Result<EmbeddingTable> {
    let text = fs::read_to_string(path)?;
    parse_embeddings(&text, &path.display().to_string(), expected_dim)
}

impl fmt::Display for CapClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CapClass::AllLower => "all-lower",
            CapClass::FirstUpper => "first-upper",
            CapClass::AllUpper => "all-upper",
            CapClass::Mixed => "mixed",
            CapClass::NoAlpha => "no-alphabetic",
        };
        f.write_str(s)
    }
}
