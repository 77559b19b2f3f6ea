//! Task data: activity-recognition windows and language-model corpora.

pub mod har;
pub mod text;

pub use har::{expected_paths, load_har, load_har_unchecked, HarData, HarSample};
pub use text::{bptt_windows, load_ptb, toy_corpus, unigram_perplexity, word_corpus, TextCorpus, Vocab};
