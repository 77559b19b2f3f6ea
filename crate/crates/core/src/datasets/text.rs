//! Token streams for language modeling: vocabularies, a seeded toy
//! character corpus and a loader for whitespace-tokenized word corpora.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const UNK: &str = "<unk>";
pub const EOS: &str = "<eos>";

/// Bijective token/id mapping. Id 0 is always [`UNK`].
#[derive(Clone, Debug, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocab {
    /// Ids are assigned in order of first appearance after [`UNK`].
    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v = Self {
            tokens: Vec::new(),
            ids: HashMap::new(),
        };
        v.insert(UNK);
        for t in tokens {
            v.insert(t);
        }
        v
    }

    fn insert(&mut self, token: &str) -> usize {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        self.ids.insert(token.to_string(), self.tokens.len());
        self.tokens.push(token.to_string());
        self.tokens.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn unk(&self) -> usize {
        0
    }

    /// Id of `token`, or the unknown id.
    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(0)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn encode<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Vec<usize> {
        tokens.into_iter().map(|t| self.id(t)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TextCorpus {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub vocab: Vocab,
}

pub const TOY_CORPUS_CHARS: usize = 100_000;
const TOY_WORDS: usize = 40;
const CONSONANTS: &[u8] = b"bcdfghklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// A seeded character corpus with word and word-transition structure.
///
/// Forty pseudo-words alternate consonants and vowels. Each word has three
/// preferred successors taken 75% of the time; sentences of 4 to 10 words
/// end in `". "`. Characters are tokens and the stream is split 80/10/10.
pub fn toy_corpus(seed: u64) -> TextCorpus {
    let mut rng = Rng::derive(seed, crate::train::streams::DATA);
    let words: Vec<String> = (0..TOY_WORDS)
        .map(|_| {
            let len = 2 + rng.below(6);
            let start_vowel = rng.below(2) == 0;
            (0..len)
                .map(|i| {
                    let pool = if (i % 2 == 0) != start_vowel { CONSONANTS } else { VOWELS };
                    pool[rng.below(pool.len())] as char
                })
                .collect()
        })
        .collect();
    let successors: Vec<[usize; 3]> = (0..TOY_WORDS)
        .map(|_| [rng.below(TOY_WORDS), rng.below(TOY_WORDS), rng.below(TOY_WORDS)])
        .collect();

    let mut text = String::with_capacity(TOY_CORPUS_CHARS + 16);
    let mut word = rng.below(TOY_WORDS);
    while text.len() < TOY_CORPUS_CHARS {
        let n = 4 + rng.below(7);
        for k in 0..n {
            if k > 0 {
                text.push(' ');
            }
            text.push_str(&words[word]);
            word = if rng.uniform() < 0.75 {
                successors[word][rng.below(3)]
            } else {
                rng.below(TOY_WORDS)
            };
        }
        text.push_str(". ");
    }
    text.truncate(TOY_CORPUS_CHARS);

    let chars: Vec<String> = text.chars().map(String::from).collect();
    let n_train = chars.len() * 8 / 10;
    let n_val = chars.len() / 10;
    let vocab = Vocab::build(chars[..n_train].iter().map(String::as_str));
    let encode = |range: &[String]| vocab.encode(range.iter().map(String::as_str));
    TextCorpus {
        train: encode(&chars[..n_train]),
        val: encode(&chars[n_train..n_train + n_val]),
        test: encode(&chars[n_train + n_val..]),
        vocab: vocab.clone(),
    }
}

fn word_stream(text: &str) -> Vec<&str> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .flat_map(|l| l.split_whitespace().chain(std::iter::once(EOS)))
        .collect()
}

/// Word-level corpus from raw split texts: whitespace tokens, one sentence
/// per line followed by [`EOS`], vocabulary from the train split only.
pub fn word_corpus(train: &str, val: &str, test: &str) -> TextCorpus {
    let train_tokens = word_stream(train);
    let vocab = Vocab::build(train_tokens.iter().copied());
    TextCorpus {
        train: vocab.encode(train_tokens),
        val: vocab.encode(word_stream(val)),
        test: vocab.encode(word_stream(test)),
        vocab,
    }
}

/// Reads `ptb.train.txt`, `ptb.valid.txt` and `ptb.test.txt` from `dir`.
pub fn load_ptb(dir: &Path) -> Result<TextCorpus> {
    let names = ["ptb.train.txt", "ptb.valid.txt", "ptb.test.txt"];
    let paths: Vec<_> = names.iter().map(|n| dir.join(n)).collect();
    let missing: Vec<_> = paths.iter().filter(|p| !p.is_file()).cloned().collect();
    if !missing.is_empty() {
        return Err(Error::MissingData {
            root: dir.to_path_buf(),
            missing,
        });
    }
    let read = |i: usize| std::fs::read_to_string(&paths[i]);
    Ok(word_corpus(&read(0)?, &read(1)?, &read(2)?))
}

/// Add-one smoothed unigram model fit on `train`, scored as perplexity on `eval`.
pub fn unigram_perplexity(train: &[usize], eval: &[usize], vocab_size: usize) -> Result<f64> {
    if eval.is_empty() {
        return Err(Error::Contract("unigram perplexity needs evaluation tokens".into()));
    }
    let mut counts = vec![1.0; vocab_size];
    for &t in train {
        counts[t] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    let nll: f64 = eval.iter().map(|&t| -(counts[t] / total).ln()).sum();
    crate::train::perplexity(nll, eval.len())
}

/// Consecutive windows of `len + 1` tokens overlapping by one, so each
/// window holds `len` (input, next token) pairs. A short tail is kept if it
/// has at least one pair.
pub fn bptt_windows(stream: &[usize], len: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    while start + 1 < stream.len() {
        let end = (start + len + 1).min(stream.len());
        out.push(stream[start..end].to_vec());
        start += len;
    }
    out
}
