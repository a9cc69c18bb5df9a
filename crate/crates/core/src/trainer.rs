//! Asynchronous multi-worker SGD over a corpus file.
//!
//! Workers share the model matrices without locks (hogwild) and a single
//! atomic token counter that doubles as the linear learning-rate decay
//! clock. Each worker streams its own byte-offset slice of the file,
//! cycling the slice until the counter reaches `epochs × corpus tokens`.

use std::fs::File;
use std::io::{BufRead, BufReader, Seek, SeekFrom};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dictionary::{tokenize, Dictionary};
use crate::error::{Error, Result};
use crate::huffman::HuffmanTree;
use crate::model::{LossKind, Model, ModelImpl, ScratchState};

/// How often (in examples) a worker re-reads the shared decay clock.
const LR_REFRESH_INTERVAL: u32 = 64;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub dim: usize,
    pub epochs: u32,
    pub lr0: f64,
    pub ngram_order: u32,
    /// Hash bins for n-grams; `None` picks 0 / 10M / 100M by order.
    pub bucket: Option<u64>,
    pub min_count: u64,
    pub label_min_count: u64,
    /// `None` = full softmax up to 64 labels, hierarchical above.
    pub loss: Option<LossKind>,
    pub threads: usize,
    pub seed: u64,
    pub verbose: bool,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            dim: 10,
            epochs: 5,
            lr0: 0.1,
            ngram_order: 1,
            bucket: None,
            min_count: 1,
            label_min_count: 1,
            loss: None,
            threads: 1,
            seed: 42,
            verbose: false,
        }
    }
}

impl TrainConfig {
    pub fn effective_bucket(&self) -> u64 {
        match self.bucket {
            Some(b) => b,
            None => match self.ngram_order {
                0 | 1 => 0,
                2 => 10_000_000,
                _ => 100_000_000,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 1 || self.epochs < 1 || self.threads < 1 {
            return Err(Error::Config(
                "dim, epochs and threads must all be at least 1".into(),
            ));
        }
        if self.lr0 <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.ngram_order < 1 {
            return Err(Error::Config("ngram order must be at least 1".into()));
        }
        Ok(())
    }

    pub fn resolve_loss(&self, nlabels: usize) -> LossKind {
        self.loss.unwrap_or(if nlabels <= 64 {
            LossKind::FullSoftmax
        } else {
            LossKind::HierarchicalSoftmax
        })
    }
}

/// Shared decay clock: monotone, saturating at `total`.
pub struct ProgressCounter {
    processed: AtomicU64,
    total: u64,
}

impl ProgressCounter {
    pub fn new(total: u64) -> ProgressCounter {
        ProgressCounter {
            processed: AtomicU64::new(0),
            total,
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn processed(&self) -> u64 {
        self.processed.load(Ordering::Relaxed)
    }

    /// Adds up to `n`, never exceeding the total. Returns false once
    /// the clock is exhausted.
    pub fn add(&self, n: u64) -> bool {
        let mut cur = self.processed.load(Ordering::Relaxed);
        loop {
            if cur >= self.total {
                return false;
            }
            let next = (cur + n).min(self.total);
            match self.processed.compare_exchange_weak(
                cur,
                next,
                Ordering::Relaxed,
                Ordering::Relaxed,
            ) {
                Ok(_) => return true,
                Err(seen) => cur = seen,
            }
        }
    }

    pub fn fraction(&self) -> f64 {
        self.processed().min(self.total) as f64 / self.total as f64
    }

    pub fn done(&self) -> bool {
        self.processed() >= self.total
    }
}

/// Linearly decaying learning rate, clamped at zero.
pub fn lr_at(progress: f64, lr0: f64) -> f64 {
    (lr0 * (1.0 - progress)).max(0.0)
}

/// Uniform choice among an example's labels for this visit.
pub fn pick_label<R: Rng>(labels: &[u32], rng: &mut R) -> u32 {
    debug_assert!(!labels.is_empty());
    labels[rng.gen_range(0..labels.len())]
}

#[derive(Debug, Clone, Copy)]
pub struct TrainStats {
    pub elapsed_secs: f64,
    pub tokens_per_sec: f64,
    pub tokens_processed: u64,
}

pub struct TrainOutput {
    pub model: Model,
    pub dict: Dictionary,
    pub stats: TrainStats,
}

/// Builds the dictionary and tree, then runs `threads` hogwild workers
/// over the corpus for `epochs` passes worth of tokens.
pub fn train<P: AsRef<Path>>(corpus: P, config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;
    let path = corpus.as_ref();
    let dict = Dictionary::build(
        BufReader::new(File::open(path)?),
        config.min_count,
        config.label_min_count,
        config.ngram_order,
        config.effective_bucket(),
    )?;
    if dict.ntokens() == 0 {
        return Err(Error::Config("corpus has no word tokens".into()));
    }
    let loss = config.resolve_loss(dict.nlabels());
    if dict.nlabels() < 2 && loss == LossKind::HierarchicalSoftmax {
        return Err(Error::Config(
            "hierarchical softmax needs at least 2 labels".into(),
        ));
    }
    let tree = match loss {
        LossKind::HierarchicalSoftmax => Some(HuffmanTree::build(&dict.label_counts())?),
        LossKind::FullSoftmax => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model: Model = ModelImpl::init(
        dict.nfeatures(),
        dict.nlabels(),
        config.dim,
        loss,
        tree,
        &mut rng,
    );

    let total = dict.ntokens() * config.epochs as u64;
    let counter = ProgressCounter::new(total);
    let file_len = std::fs::metadata(path)?.len();

    let start = Instant::now();
    std::thread::scope(|scope| -> Result<()> {
        let mut handles = Vec::new();
        for wid in 0..config.threads {
            let shard_start = file_len * wid as u64 / config.threads as u64;
            let shard_end = file_len * (wid as u64 + 1) / config.threads as u64;
            let (dict, model, counter) = (&dict, &model, &counter);
            handles.push(scope.spawn(move || {
                run_worker(
                    path,
                    shard_start,
                    shard_end,
                    dict,
                    model,
                    counter,
                    config,
                    config.seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(wid as u64 + 1)),
                )
            }));
        }
        if config.verbose {
            let counter = &counter;
            handles.push(scope.spawn(move || {
                report_progress(counter, config.lr0, start);
                Ok(())
            }));
        }
        for h in handles {
            h.join().expect("worker panicked")?;
        }
        Ok(())
    })?;

    let elapsed = start.elapsed().as_secs_f64();
    let stats = TrainStats {
        elapsed_secs: elapsed,
        tokens_per_sec: total as f64 / elapsed.max(1e-9),
        tokens_processed: counter.processed(),
    };
    if config.verbose {
        eprintln!(
            "\ntrained on {} tokens in {:.1}s ({:.0} tokens/sec)",
            stats.tokens_processed, stats.elapsed_secs, stats.tokens_per_sec
        );
    }
    Ok(TrainOutput { model, dict, stats })
}

#[allow(clippy::too_many_arguments)]
fn run_worker(
    path: &Path,
    shard_start: u64,
    shard_end: u64,
    dict: &Dictionary,
    model: &Model,
    counter: &ProgressCounter,
    config: &TrainConfig,
    seed: u64,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nout = model.b().rows();
    let mut scratch: ScratchState<f32> = ScratchState::new(model.dim(), nout);
    let mut reader = BufReader::new(File::open(path)?);
    let mut pos = seek_to_line_start(&mut reader, shard_start)?;
    let mut line = String::new();
    let mut lr = lr_at(counter.fraction(), config.lr0) as f32;
    let mut since_refresh = 0u32;
    let mut advanced_this_lap = false;

    while !counter.done() {
        if pos >= shard_end.max(shard_start + 1) {
            if !advanced_this_lap {
                // shard holds no full line; yield while others finish
                std::thread::sleep(Duration::from_millis(1));
            }
            advanced_this_lap = false;
            pos = seek_to_line_start(&mut reader, shard_start)?;
            continue;
        }
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 {
            if !advanced_this_lap {
                std::thread::sleep(Duration::from_millis(1));
            }
            advanced_this_lap = false;
            pos = seek_to_line_start(&mut reader, shard_start)?;
            continue;
        }
        pos += n as u64;

        let (label_toks, words) = tokenize(&line);
        let ntok = words.len() as u64;
        if ntok > 0 {
            if !counter.add(ntok) {
                break;
            }
            advanced_this_lap = true;
        }
        since_refresh += 1;
        if since_refresh >= LR_REFRESH_INTERVAL {
            since_refresh = 0;
            lr = lr_at(counter.fraction(), config.lr0) as f32;
        }

        let labels: Vec<u32> = label_toks
            .iter()
            .filter_map(|l| dict.label_id(l))
            .collect();
        if labels.is_empty() {
            continue;
        }
        let features = dict.featurize(&words);
        if features.is_empty() {
            continue;
        }
        let label = pick_label(&labels, &mut rng);
        match model.loss_kind() {
            LossKind::FullSoftmax => {
                model.full_softmax_step(&features, label, lr, &mut scratch);
            }
            LossKind::HierarchicalSoftmax => {
                model.hierarchical_softmax_step(&features, label, lr, &mut scratch);
            }
        }
    }
    Ok(())
}

/// Seeks to `offset` and discards the partial line there, returning the
/// byte position of the first full line.
fn seek_to_line_start<R: BufRead + Seek>(reader: &mut R, offset: u64) -> Result<u64> {
    reader.seek(SeekFrom::Start(offset))?;
    if offset == 0 {
        return Ok(0);
    }
    let mut skipped = Vec::new();
    let n = reader.read_until(b'\n', &mut skipped)?;
    Ok(offset + n as u64)
}

fn report_progress(counter: &ProgressCounter, lr0: f64, start: Instant) {
    let mut last_tokens = 0u64;
    let mut last_time = start;
    while !counter.done() {
        std::thread::sleep(Duration::from_millis(500));
        let now = Instant::now();
        let tokens = counter.processed();
        let rate = (tokens - last_tokens) as f64 / (now - last_time).as_secs_f64();
        let progress = counter.fraction();
        eprint!(
            "\rprogress: {:5.1}%  lr: {:.6}  tokens/sec: {:.0}   ",
            progress * 100.0,
            lr_at(progress, lr0),
            rate
        );
        last_tokens = tokens;
        last_time = now;
    }
}
