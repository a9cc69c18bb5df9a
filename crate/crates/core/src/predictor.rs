//! Top-T inference: exhaustive scoring for the flat softmax, and a
//! depth-first tree search with probability pruning plus a bounded
//! min-heap for the hierarchical softmax.
//!
//! Path log-probability is monotone non-increasing with depth, so a
//! branch whose accumulated log-probability falls strictly below the
//! heap minimum (once the heap holds T entries) can never contribute a
//! top-T leaf; discarding it is lossless.

use crate::dictionary::FeatureVector;
use crate::error::{Error, Result};
use crate::model::{log_sigmoid_f64, LossKind, Model};

/// Ranked (label id, natural-log probability) pairs, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub entries: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    logp: f64,
    label: u32,
}

impl Eq for Entry {}

impl Ord for Entry {
    // ties in log-probability break toward the smaller label id, so the
    // larger id is treated as smaller and evicted first
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.logp
            .total_cmp(&other.logp)
            .then(other.label.cmp(&self.label))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-heap holding at most `capacity` entries; the root is the worst
/// retained candidate. Insert and evict are O(log T).
pub struct BoundedMinHeap {
    capacity: usize,
    items: Vec<Entry>,
}

impl BoundedMinHeap {
    pub fn new(capacity: usize) -> BoundedMinHeap {
        assert!(capacity > 0);
        BoundedMinHeap {
            capacity,
            items: Vec::with_capacity(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() == self.capacity
    }

    /// Minimum retained log-probability, or -inf while not full.
    pub fn floor(&self) -> f64 {
        if self.is_full() {
            self.items[0].logp
        } else {
            f64::NEG_INFINITY
        }
    }

    fn push(&mut self, e: Entry) {
        if self.items.len() < self.capacity {
            self.items.push(e);
            self.sift_up(self.items.len() - 1);
        } else if e > self.items[0] {
            self.items[0] = e;
            self.sift_down(0);
        }
    }

    fn sift_up(&mut self, mut i: usize) {
        while i > 0 {
            let parent = (i - 1) / 2;
            if self.items[i] < self.items[parent] {
                self.items.swap(i, parent);
                i = parent;
            } else {
                break;
            }
        }
    }

    fn sift_down(&mut self, mut i: usize) {
        loop {
            let (l, r) = (2 * i + 1, 2 * i + 2);
            let mut smallest = i;
            if l < self.items.len() && self.items[l] < self.items[smallest] {
                smallest = l;
            }
            if r < self.items.len() && self.items[r] < self.items[smallest] {
                smallest = r;
            }
            if smallest == i {
                break;
            }
            self.items.swap(i, smallest);
            i = smallest;
        }
    }

    fn into_sorted_prediction(mut self) -> Prediction {
        self.items
            .sort_by(|a, b| b.logp.total_cmp(&a.logp).then(a.label.cmp(&b.label)));
        Prediction {
            entries: self.items.into_iter().map(|e| (e.label, e.logp)).collect(),
        }
    }

    #[cfg(test)]
    fn assert_valid(&self) {
        for i in 1..self.items.len() {
            assert!(
                self.items[(i - 1) / 2] <= self.items[i],
                "heap property violated at index {i}"
            );
        }
    }
}

/// Top-T dispatch on the model's loss kind.
pub fn predict(model: &Model, features: &FeatureVector, t: usize) -> Result<Prediction> {
    match model.loss_kind() {
        LossKind::FullSoftmax => predict_full(model, features, t),
        LossKind::HierarchicalSoftmax => predict_hs(model, features, t),
    }
}

/// Exhaustive top-T over all k classes of a full-softmax model.
pub fn predict_full(model: &Model, features: &FeatureVector, t: usize) -> Result<Prediction> {
    assert_eq!(model.loss_kind(), LossKind::FullSoftmax);
    if features.is_empty() {
        return Err(Error::EmptyFeatures);
    }
    let mut hidden = vec![0.0f32; model.dim()];
    model.compute_hidden(features, &mut hidden);

    let k = model.b().rows();
    let mut scores: Vec<f64> = (0..k)
        .map(|i| {
            model
                .b()
                .row(i)
                .iter()
                .zip(&hidden)
                .map(|(&b, &h)| b as f64 * h as f64)
                .sum()
        })
        .collect();
    // log-softmax
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    for s in scores.iter_mut() {
        *s -= lse;
    }

    let mut heap = BoundedMinHeap::new(t.min(k));
    for (label, &logp) in scores.iter().enumerate() {
        heap.push(Entry { logp, label: label as u32 });
    }
    Ok(heap.into_sorted_prediction())
}

/// Pruned DFS top-T over the label tree of a hierarchical model.
pub fn predict_hs(model: &Model, features: &FeatureVector, t: usize) -> Result<Prediction> {
    predict_hs_counting(model, features, t).map(|(p, _)| p)
}

/// Number of internal nodes scored while answering a top-T query.
pub fn count_visited_nodes(model: &Model, features: &FeatureVector, t: usize) -> Result<usize> {
    predict_hs_counting(model, features, t).map(|(_, n)| n)
}

fn predict_hs_counting(
    model: &Model,
    features: &FeatureVector,
    t: usize,
) -> Result<(Prediction, usize)> {
    assert_eq!(model.loss_kind(), LossKind::HierarchicalSoftmax);
    if features.is_empty() {
        return Err(Error::EmptyFeatures);
    }
    let tree = model.tree().expect("hierarchical model carries a tree");
    let k = tree.num_labels() as u32;
    let mut hidden = vec![0.0f32; model.dim()];
    model.compute_hidden(features, &mut hidden);

    let mut heap = BoundedMinHeap::new(t.min(k as usize));
    let mut visited = 0usize;
    let mut stack: Vec<(u32, f64)> = vec![(tree.root(), 0.0)];
    while let Some((node, logp)) = stack.pop() {
        // strict comparison keeps equal-probability leaves in play
        if heap.is_full() && logp < heap.floor() {
            continue;
        }
        if node < k {
            heap.push(Entry { logp, label: node });
            continue;
        }
        visited += 1;
        let s = model.node_score(&hidden, node);
        let n = tree.node(node);
        let left = (n.left.unwrap(), logp + log_sigmoid_f64(s));
        let right = (n.right.unwrap(), logp + log_sigmoid_f64(-s));
        // explore the higher-probability branch first
        if left.1 >= right.1 {
            stack.push(right);
            stack.push(left);
        } else {
            stack.push(left);
            stack.push(right);
        }
    }
    Ok((heap.into_sorted_prediction(), visited))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::huffman::HuffmanTree;
    use crate::model::ModelImpl;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fv(ids: Vec<u64>) -> FeatureVector {
        let weight = 1.0 / ids.len() as f64;
        FeatureVector { ids, weight }
    }

    fn random_hs_model(k: usize, dim: usize, rng: &mut ChaCha8Rng) -> Model {
        let counts: Vec<u64> = (0..k).map(|_| rng.gen_range(1..50)).collect();
        let tree = HuffmanTree::build(&counts).unwrap();
        let m: Model =
            ModelImpl::init(8, k, dim, LossKind::HierarchicalSoftmax, Some(tree), rng);
        for r in 0..m.b().rows() {
            for v in m.b().row_mut(r) {
                *v = rng.gen_range(-2.0..2.0f32);
            }
        }
        m
    }

    /// Oracle: rank every leaf by its full-path log-probability.
    fn enumerate_all(m: &Model, features: &FeatureVector) -> Vec<(u32, f64)> {
        let mut hidden = vec![0.0f32; m.dim()];
        m.compute_hidden(features, &mut hidden);
        let k = m.tree().unwrap().num_labels() as u32;
        let mut all: Vec<(u32, f64)> = (0..k)
            .map(|l| (l, m.leaf_log_probability(&hidden, l)))
            .collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        all
    }

    #[test]
    fn heap_keeps_top_capacity_items() {
        let mut heap = BoundedMinHeap::new(3);
        for (i, lp) in [-5.0, -1.0, -3.0, -0.5, -4.0, -0.25].iter().enumerate() {
            heap.push(Entry { logp: *lp, label: i as u32 });
            heap.assert_valid();
        }
        let p = heap.into_sorted_prediction();
        assert_eq!(
            p.entries.iter().map(|e| e.0).collect::<Vec<_>>(),
            vec![5, 3, 1]
        );
    }

    #[test]
    fn heap_tie_prefers_smaller_label() {
        let mut heap = BoundedMinHeap::new(2);
        for label in [9u32, 4, 7, 2] {
            heap.push(Entry { logp: -1.0, label });
            heap.assert_valid();
        }
        let p = heap.into_sorted_prediction();
        assert_eq!(
            p.entries.iter().map(|e| e.0).collect::<Vec<_>>(),
            vec![2, 4]
        );
    }

    #[test]
    fn full_prediction_zero_model_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m: Model = ModelImpl::init(4, 2, 3, LossKind::FullSoftmax, None, &mut rng);
        let p = predict_full(&m, &fv(vec![0, 1]), 2).unwrap();
        assert_eq!(p.entries.len(), 2);
        for (_, lp) in &p.entries {
            assert!((lp - 0.5f64.ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn full_prediction_truncates_at_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m: Model = ModelImpl::init(4, 5, 3, LossKind::FullSoftmax, None, &mut rng);
        let p = predict_full(&m, &fv(vec![0]), 50).unwrap();
        assert_eq!(p.entries.len(), 5);
    }

    #[test]
    fn full_prediction_matches_full_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = 50;
        let m: Model = ModelImpl::init(8, k, 4, LossKind::FullSoftmax, None, &mut rng);
        for r in 0..k {
            for v in m.b().row_mut(r) {
                *v = rng.gen_range(-2.0..2.0f32);
            }
        }
        let features = fv(vec![1, 3, 5]);
        let p = predict_full(&m, &features, 5).unwrap();

        let all = predict_full(&m, &features, k).unwrap();
        assert_eq!(&all.entries[..5], &p.entries[..]);
        let total: f64 = all.entries.iter().map(|(_, lp)| lp.exp()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn hs_zero_model_prefers_shallow_leaf() {
        let tree = HuffmanTree::build(&[2, 1, 1]).unwrap();
        let m: Model = ModelImpl::from_parts(
            crate::model::Matrix::from_vec(2, 2, vec![0.5, 0.5, 0.5, 0.5]),
            crate::model::Matrix::zeros(2, 2),
            LossKind::HierarchicalSoftmax,
            Some(tree),
        );
        let p = predict_hs(&m, &fv(vec![0]), 1).unwrap();
        assert_eq!(p.entries.len(), 1);
        assert_eq!(p.entries[0].0, 0);
        assert!((p.entries[0].1 - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn hs_matches_enumeration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let k = rng.gen_range(3..120);
            let m = random_hs_model(k, 4, &mut rng);
            let features = fv(vec![rng.gen_range(0..8), rng.gen_range(0..8)]);
            let all = enumerate_all(&m, &features);
            for t in [1usize, 5, k] {
                let p = predict_hs(&m, &features, t).unwrap();
                let want = &all[..t.min(k)];
                assert_eq!(p.entries.len(), want.len());
                for ((gl, glp), (wl, wlp)) in p.entries.iter().zip(want) {
                    assert_eq!(gl, wl);
                    assert!((glp - wlp).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn visited_node_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // k=2: exactly one internal node, always visited
        let m = random_hs_model(2, 3, &mut rng);
        assert_eq!(count_visited_nodes(&m, &fv(vec![0]), 1).unwrap(), 1);

        // T=k: no pruning possible, every internal node scored
        let k = 33;
        let m = random_hs_model(k, 3, &mut rng);
        assert_eq!(count_visited_nodes(&m, &fv(vec![1]), k).unwrap(), k - 1);

        // T=1 never exceeds the full count
        assert!(count_visited_nodes(&m, &fv(vec![1]), 1).unwrap() <= k - 1);
    }

    #[test]
    fn empty_features_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = random_hs_model(4, 3, &mut rng);
        let empty = FeatureVector { ids: vec![], weight: 0.0 };
        assert!(matches!(
            predict_hs(&m, &empty, 1),
            Err(Error::EmptyFeatures)
        ));
        let mf: Model = ModelImpl::init(4, 3, 3, LossKind::FullSoftmax, None, &mut rng);
        assert!(matches!(
            predict_full(&mf, &empty, 1),
            Err(Error::EmptyFeatures)
        ));
    }

    #[test]
    fn all_log_probabilities_nonpositive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let m = random_hs_model(rng.gen_range(3..40), 4, &mut rng);
            let p = predict_hs(&m, &fv(vec![2, 4]), 10).unwrap();
            assert!(p.entries.iter().all(|(_, lp)| *lp <= 0.0));
        }
    }
}
