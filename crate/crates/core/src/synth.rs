//! Seeded generator for the bundled synthetic corpora.
//!
//! CCGBank is licensed, so the test suite ships a tiny artificial language
//! instead: a template grammar over a twelve-category toy CCG tagset whose
//! ambiguous word forms are resolved by nearby context. Prepositions take
//! one of three categories depending on what they attach to, and a handful
//! of noun/verb-ambiguous forms ("dreams", "fish", ...) resolve on the word
//! to their left, so a tagger has to actually read the window to label them.
//!
//! With `distractor_rate > 0` the same templates are spliced with nonce
//! filler tokens ("zorpik", "bleesh", ...). Fillers are drawn from a large
//! form inventory, so almost every occurrence is a singleton that drops out
//! of a min-count vocabulary and featurizes as UNK. They say nothing about
//! neighboring tags; they only push the disambiguating word deeper into the
//! window. A model that can close the gate on a junk slot keeps the cue
//! crisp, while a fixed window has to average the junk in — which is exactly
//! the contrast the dynamic-window comparison tests exercise.
//!
//! Everything is a pure function of [`SynthConfig`], so the bundled corpus
//! files can be byte-checked against regeneration.

use crate::corpus::{parse_corpus, Sentence};
use crate::numerics::Rng;
use std::fmt::Write as _;

/// The twelve categories the toy language uses. All of them are ordinary
/// CCG categories over the atoms N, NP, PP and S.
pub const TOY_TAGS: [&str; 12] = [
    T_NOUN, T_NAME, T_DET, T_ADJ, T_IVERB, T_TVERB, T_PVERB, T_PARG, T_ADV, T_PVP, T_PNP, T_INTRO,
];

const T_NOUN: &str = "N";
const T_NAME: &str = "NP";
const T_DET: &str = "NP/N";
const T_ADJ: &str = "N/N";
const T_IVERB: &str = "S\\NP";
const T_TVERB: &str = "(S\\NP)/NP";
const T_PVERB: &str = "(S\\NP)/PP";
const T_PARG: &str = "PP/NP";
const T_ADV: &str = "(S\\NP)\\(S\\NP)";
const T_PVP: &str = "((S\\NP)\\(S\\NP))/NP";
const T_PNP: &str = "(NP\\NP)/NP";
const T_INTRO: &str = "S/S";

// The closed lexicon. PREPS and AMBIG are the deliberately ambiguous forms:
// a preposition is (NP\NP)/NP after a noun or name, ((S\NP)\(S\NP))/NP after
// a verb or adverb, and PP/NP after one of the PP-taking verbs; an AMBIG
// form is a noun after a determiner or adjective and a verb after a
// completed noun phrase.
pub const DETS: [&str; 4] = ["the", "a", "this", "every"];
pub const ADJS: [&str; 5] = ["big", "small", "old", "happy", "green"];
pub const NOUNS: [&str; 8] = [
    "cat", "dog", "bird", "farmer", "child", "apple", "river", "garden",
];
pub const AMBIG: [&str; 4] = ["dreams", "runs", "waves", "fish"];
pub const NAMES: [&str; 4] = ["Alice", "Bob", "Carol", "Dave"];
pub const IVERBS: [&str; 3] = ["sleeps", "smiles", "laughs"];
pub const TVERBS: [&str; 4] = ["sees", "likes", "chases", "feeds"];
pub const PVERBS: [&str; 2] = ["looks", "stares"];
pub const PREPS: [&str; 4] = ["near", "with", "at", "in"];
pub const INTROS: [&str; 3] = ["Today", "Yesterday", "Sometimes"];
pub const ADVS: [&str; 3] = ["quickly", "quietly", "happily"];

// Syllable parts for filler forms: 18 × 9 × 16 = 2592 distinct nonce words,
// enough that independent draws rarely repeat.
const ONSETS: [&str; 18] = [
    "bl", "br", "cl", "dr", "fl", "gl", "gr", "kr", "pl", "pr", "sk", "sl", "sn", "sp", "tr",
    "vr", "zw", "thr",
];
const NUCLEI: [&str; 9] = ["a", "e", "i", "o", "u", "oo", "ee", "ai", "or"];
const CODAS: [&str; 16] = [
    "b", "ck", "d", "g", "k", "lp", "m", "n", "p", "rp", "sh", "t", "x", "z", "nk", "mp",
];

/// The seed behind `data/synthetic/toy50.pipe`, the bundled 50-sentence
/// clean corpus used by the overfit benchmark.
pub const TOY_CORPUS_SEED: u64 = 7;

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub sentences: usize,
    /// Probability of splicing a filler token at each eligible site;
    /// 0.0 generates the clean language.
    pub distractor_rate: f64,
    pub seed: u64,
}

struct Gen<'a> {
    rng: &'a mut Rng,
    rate: f64,
    toks: Vec<(String, &'static str)>,
}

impl Gen<'_> {
    fn coin(&mut self, p: f64) -> bool {
        self.rng.uniform() < p
    }

    fn pick<'b>(&mut self, words: &[&'b str]) -> &'b str {
        let i = (self.rng.uniform() * words.len() as f64) as usize;
        words[i.min(words.len() - 1)]
    }

    fn push(&mut self, surface: &str, tag: &'static str) {
        self.toks.push((surface.to_string(), tag));
    }

    fn filler_form(&mut self) -> String {
        let onset = self.pick(&ONSETS);
        let nucleus = self.pick(&NUCLEI);
        let coda = self.pick(&CODAS);
        format!("{onset}{nucleus}{coda}")
    }

    /// Zero, one or two filler tokens, each tagged as the modifier category
    /// grammatical at the splice site (junk adjectives inside noun phrases,
    /// junk adverbs after verbs).
    fn fillers(&mut self, tag: &'static str) {
        for _ in 0..2 {
            if !self.coin(self.rate) {
                break;
            }
            let form = self.filler_form();
            self.push(&form, tag);
        }
    }

    /// A noun phrase; `allow_pp` bounds recursion so a modifier phrase never
    /// nests another one.
    fn np(&mut self, allow_pp: bool) {
        if self.coin(0.35) {
            let name = self.pick(&NAMES);
            self.push(name, T_NAME);
        } else {
            let det = self.pick(&DETS);
            self.push(det, T_DET);
            self.fillers(T_ADJ);
            if self.coin(0.4) {
                let adj = self.pick(&ADJS);
                self.push(adj, T_ADJ);
            }
            let noun = if self.coin(0.3) {
                self.pick(&AMBIG)
            } else {
                self.pick(&NOUNS)
            };
            self.push(noun, T_NOUN);
        }
        if allow_pp && self.coin(0.3) {
            let p = self.pick(&PREPS);
            self.push(p, T_PNP);
            self.np(false);
        }
    }

    fn vp(&mut self) {
        let roll = self.rng.uniform();
        if roll < 0.40 {
            let v = if self.coin(0.35) {
                self.pick(&AMBIG)
            } else {
                self.pick(&IVERBS)
            };
            self.push(v, T_IVERB);
            self.fillers(T_ADV);
            if self.coin(0.35) {
                let adv = self.pick(&ADVS);
                self.push(adv, T_ADV);
            }
            if self.coin(0.35) {
                let p = self.pick(&PREPS);
                self.push(p, T_PVP);
                self.np(false);
            }
        } else if roll < 0.75 {
            let v = self.pick(&TVERBS);
            self.push(v, T_TVERB);
            self.np(true);
            self.fillers(T_ADV);
            if self.coin(0.3) {
                let adv = self.pick(&ADVS);
                self.push(adv, T_ADV);
            }
        } else {
            let v = self.pick(&PVERBS);
            self.push(v, T_PVERB);
            self.fillers(T_ADV);
            let p = self.pick(&PREPS);
            self.push(p, T_PARG);
            self.np(false);
        }
    }

    fn sentence(&mut self) -> Vec<(String, &'static str)> {
        self.toks.clear();
        if self.coin(0.25) {
            let intro = self.pick(&INTROS);
            self.push(intro, T_INTRO);
        }
        self.np(true);
        self.vp();
        std::mem::take(&mut self.toks)
    }
}

/// Generate the corpus as pipe-format text, one sentence per line.
pub fn generate_pipe(cfg: &SynthConfig) -> String {
    let mut rng = Rng::new(cfg.seed);
    let mut gen = Gen {
        rng: &mut rng,
        rate: cfg.distractor_rate,
        toks: Vec::new(),
    };
    let mut out = String::new();
    for _ in 0..cfg.sentences {
        let toks = gen.sentence();
        let mut first = true;
        for (surface, tag) in &toks {
            if !first {
                out.push(' ');
            }
            write!(out, "{surface}|{tag}").expect("string write");
            first = false;
        }
        out.push('\n');
    }
    out
}

/// Generate the corpus already parsed into sentences.
pub fn generate(cfg: &SynthConfig) -> Vec<Sentence> {
    parse_corpus(&generate_pipe(cfg), "synthetic").expect("generator emits well-formed pipe text")
}
