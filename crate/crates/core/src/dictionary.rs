//! Vocabulary construction and hashed n-gram featurization.
//!
//! A corpus line holds whitespace-separated tokens; tokens carrying the
//! `__label__` prefix are labels, everything else is a word. Words below
//! `min_count` are pruned. N-grams of surviving words are mapped into
//! `bucket` hash bins above the word-id range, so the full feature space
//! is `nwords + bucket` ids.

use std::collections::HashMap;
use std::io::BufRead;

use crate::error::{Error, Result};

pub const LABEL_PREFIX: &str = "__label__";

/// Multiplier of the rolling n-gram hash (word2vec lineage).
const NGRAM_HASH_MULT: u64 = 116_049_371;

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    words: Vec<(String, u64)>,
    word_index: HashMap<String, u32>,
    labels: Vec<(String, u64)>,
    label_index: HashMap<String, u32>,
    bucket: u64,
    ngram_order: u32,
    min_count: u64,
    /// Total word tokens seen at build time (including pruned words).
    ntokens: u64,
}

/// Normalized bag of feature ids for one document: unigram word ids
/// followed by hashed n-gram ids, each weighted `1 / len(ids)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub ids: Vec<u64>,
    pub weight: f64,
}

impl FeatureVector {
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Splits a line into (labels, words), stripping the label prefix.
pub fn tokenize(line: &str) -> (Vec<&str>, Vec<&str>) {
    let mut labels = Vec::new();
    let mut words = Vec::new();
    for tok in line.split_whitespace() {
        match tok.strip_prefix(LABEL_PREFIX) {
            Some(l) => labels.push(l),
            None => words.push(tok),
        }
    }
    (labels, words)
}

impl Dictionary {
    /// Builds the dictionary in one counting pass plus a prune/sort pass.
    ///
    /// Word ids are assigned in descending count order, ties by first
    /// occurrence. All labels are kept unless `label_min_count` > 1.
    pub fn build<R: BufRead>(
        reader: R,
        min_count: u64,
        label_min_count: u64,
        ngram_order: u32,
        bucket: u64,
    ) -> Result<Dictionary> {
        // (count, first-occurrence index)
        let mut word_counts: HashMap<String, (u64, usize)> = HashMap::new();
        let mut label_counts: HashMap<String, (u64, usize)> = HashMap::new();
        let mut ntokens = 0u64;

        for line in reader.lines() {
            let line = line?;
            let (labels, words) = tokenize(&line);
            for w in words {
                ntokens += 1;
                let next = word_counts.len();
                word_counts.entry(w.to_owned()).or_insert((0, next)).0 += 1;
            }
            for l in labels {
                let next = label_counts.len();
                label_counts.entry(l.to_owned()).or_insert((0, next)).0 += 1;
            }
        }

        let words = prune_and_sort(word_counts, min_count);
        let labels = prune_and_sort(label_counts, label_min_count);
        if words.is_empty() {
            return Err(Error::Config(format!(
                "no words survive min_count={min_count}"
            )));
        }
        if labels.is_empty() {
            return Err(Error::Config("corpus contains no labels".into()));
        }

        let word_index = index_of(&words);
        let label_index = index_of(&labels);
        Ok(Dictionary {
            words,
            word_index,
            labels,
            label_index,
            bucket,
            ngram_order,
            min_count,
            ntokens,
        })
    }

    pub fn nwords(&self) -> usize {
        self.words.len()
    }

    pub fn nlabels(&self) -> usize {
        self.labels.len()
    }

    /// Size of the full feature-id space: word ids plus hash bins.
    pub fn nfeatures(&self) -> u64 {
        self.words.len() as u64 + self.bucket
    }

    pub fn bucket(&self) -> u64 {
        self.bucket
    }

    pub fn ngram_order(&self) -> u32 {
        self.ngram_order
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn ntokens(&self) -> u64 {
        self.ntokens
    }

    pub fn words(&self) -> &[(String, u64)] {
        &self.words
    }

    pub fn labels(&self) -> &[(String, u64)] {
        &self.labels
    }

    pub fn label_counts(&self) -> Vec<u64> {
        self.labels.iter().map(|(_, c)| *c).collect()
    }

    pub fn word_id(&self, token: &str) -> Option<u32> {
        self.word_index.get(token).copied()
    }

    pub fn label_id(&self, token: &str) -> Option<u32> {
        self.label_index.get(token).copied()
    }

    pub fn label_token(&self, id: u32) -> &str {
        &self.labels[id as usize].0
    }

    /// Rolling hash of a word-id window into the n-gram bin range.
    /// The result is always in `[nwords, nwords + bucket)`.
    pub fn ngram_hash(&self, window: &[u32]) -> u64 {
        debug_assert!(window.len() >= 2, "unigrams use raw word ids");
        let mut h = window[0] as u64;
        for &w in &window[1..] {
            h = h.wrapping_mul(NGRAM_HASH_MULT).wrapping_add(w as u64);
        }
        self.words.len() as u64 + h % self.bucket
    }

    /// Maps word tokens to the normalized feature vector: in-vocabulary
    /// unigram ids (OOV words dropped), then hashed ids of every
    /// contiguous window of length 2..=ngram_order.
    pub fn featurize<S: AsRef<str>>(&self, words: &[S]) -> FeatureVector {
        let uni: Vec<u32> = words
            .iter()
            .filter_map(|w| self.word_id(w.as_ref()))
            .collect();
        let mut ids: Vec<u64> = uni.iter().map(|&w| w as u64).collect();
        if self.bucket > 0 {
            for n in 2..=self.ngram_order as usize {
                for window in uni.windows(n) {
                    ids.push(self.ngram_hash(window));
                }
            }
        }
        let weight = if ids.is_empty() {
            0.0
        } else {
            1.0 / ids.len() as f64
        };
        FeatureVector { ids, weight }
    }

    /// Reassembles a dictionary from serialized entries (persistence).
    pub(crate) fn from_parts(
        words: Vec<(String, u64)>,
        labels: Vec<(String, u64)>,
        bucket: u64,
        ngram_order: u32,
        min_count: u64,
        ntokens: u64,
    ) -> Dictionary {
        let word_index = index_of(&words);
        let label_index = index_of(&labels);
        Dictionary {
            words,
            word_index,
            labels,
            label_index,
            bucket,
            ngram_order,
            min_count,
            ntokens,
        }
    }
}

fn prune_and_sort(counts: HashMap<String, (u64, usize)>, min_count: u64) -> Vec<(String, u64)> {
    let mut entries: Vec<(String, u64, usize)> = counts
        .into_iter()
        .filter(|(_, (c, _))| *c >= min_count)
        .map(|(t, (c, first))| (t, c, first))
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    entries.into_iter().map(|(t, c, _)| (t, c)).collect()
}

fn index_of(entries: &[(String, u64)]) -> HashMap<String, u32> {
    entries
        .iter()
        .enumerate()
        .map(|(i, (t, _))| (t.clone(), i as u32))
        .collect()
}
