//! Evaluation over a labeled test file: precision@k, recall@k and
//! throughput. Examples without any gold label are excluded; examples
//! whose features all fall out of vocabulary score zero but still count.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::Instant;

use crate::dictionary::{tokenize, Dictionary};
use crate::error::Result;
use crate::model::Model;
use crate::predictor::{predict, Prediction};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n_examples: u64,
    /// Lines excluded for having no known gold label.
    pub n_excluded: u64,
    pub precision_at_k: f64,
    pub recall_at_k: f64,
    pub k: usize,
    pub elapsed_secs: f64,
    pub tokens_per_sec: f64,
}

impl EvalReport {
    /// The `N` / `P@k` / `R@k` lines printed by the CLI.
    pub fn format_lines(&self) -> String {
        format!(
            "N {}\nP@{} {:.3}\nR@{} {:.3}",
            self.n_examples, self.k, self.precision_at_k, self.k, self.recall_at_k
        )
    }
}

/// Per-example precision and recall of the top-k predictions against a
/// gold set. The precision denominator is k even when fewer entries or
/// gold labels exist.
pub fn precision_recall_at_k(
    prediction: &Prediction,
    gold: &HashSet<u32>,
    k: usize,
) -> (f64, f64) {
    debug_assert!(k >= 1 && !gold.is_empty());
    let hits = prediction
        .entries
        .iter()
        .take(k)
        .filter(|(label, _)| gold.contains(label))
        .count();
    (hits as f64 / k as f64, hits as f64 / gold.len() as f64)
}

pub fn evaluate<P: AsRef<Path>>(
    model: &Model,
    dict: &Dictionary,
    test_path: P,
    k: usize,
) -> Result<EvalReport> {
    let start = Instant::now();
    let reader = BufReader::new(File::open(test_path)?);
    let mut n = 0u64;
    let mut excluded = 0u64;
    let mut tokens = 0u64;
    let mut p_sum = 0.0f64;
    let mut r_sum = 0.0f64;

    for line in reader.lines() {
        let line = line?;
        let (label_toks, words) = tokenize(&line);
        tokens += words.len() as u64;
        let gold: HashSet<u32> = label_toks.iter().filter_map(|l| dict.label_id(l)).collect();
        if gold.is_empty() {
            if !label_toks.is_empty() || !words.is_empty() {
                excluded += 1;
            }
            continue;
        }
        n += 1;
        let features = dict.featurize(&words);
        if features.is_empty() {
            continue; // counted with zero hits
        }
        let prediction = predict(model, &features, k)?;
        let (p, r) = precision_recall_at_k(&prediction, &gold, k);
        p_sum += p;
        r_sum += r;
    }

    let elapsed = start.elapsed().as_secs_f64();
    Ok(EvalReport {
        n_examples: n,
        n_excluded: excluded,
        precision_at_k: if n > 0 { p_sum / n as f64 } else { 0.0 },
        recall_at_k: if n > 0 { r_sum / n as f64 } else { 0.0 },
        k,
        elapsed_secs: elapsed,
        tokens_per_sec: tokens as f64 / elapsed.max(1e-9),
    })
}
