//! Huffman coding tree over label frequencies for the hierarchical softmax.
//!
//! Leaves are label ids `0..k`, internal nodes are `k..2k-1` in merge
//! order, so `node_id - k` indexes the output-matrix row of an internal
//! node. Every leaf carries its precomputed root-to-leaf internal-node
//! path and binary code (0 = left child, 1 = right child).

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub count: u64,
    pub parent: Option<u32>,
    pub left: Option<u32>,
    pub right: Option<u32>,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.left.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HuffmanTree {
    k: usize,
    nodes: Vec<Node>,
    /// Per leaf: internal-node ids from the root down to the direct parent.
    paths: Vec<Vec<u32>>,
    /// Per leaf: branch digit taken at each path node (same length).
    codes: Vec<Vec<u8>>,
}

impl HuffmanTree {
    /// Standard Huffman construction: repeatedly merge the two
    /// least-count nodes, ties broken by lower node id. Zero counts are
    /// clamped to 1 so the tree stays full and every label reachable.
    pub fn build(label_counts: &[u64]) -> Result<HuffmanTree> {
        let k = label_counts.len();
        if k < 2 {
            return Err(Error::Config(format!(
                "hierarchical softmax needs at least 2 labels, got {k}"
            )));
        }
        let mut nodes: Vec<Node> = label_counts
            .iter()
            .map(|&c| Node {
                count: c.max(1),
                parent: None,
                left: None,
                right: None,
            })
            .collect();

        let mut heap: BinaryHeap<Reverse<(u64, u32)>> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| Reverse((n.count, i as u32)))
            .collect();
        while heap.len() > 1 {
            let Reverse((c1, n1)) = heap.pop().unwrap();
            let Reverse((c2, n2)) = heap.pop().unwrap();
            let id = nodes.len() as u32;
            nodes[n1 as usize].parent = Some(id);
            nodes[n2 as usize].parent = Some(id);
            nodes.push(Node {
                count: c1 + c2,
                parent: None,
                left: Some(n1),
                right: Some(n2),
            });
            heap.push(Reverse((c1 + c2, id)));
        }

        let mut paths = Vec::with_capacity(k);
        let mut codes = Vec::with_capacity(k);
        for leaf in 0..k {
            let mut path = Vec::new();
            let mut code = Vec::new();
            let mut cur = leaf as u32;
            while let Some(p) = nodes[cur as usize].parent {
                code.push(if nodes[p as usize].left == Some(cur) { 0 } else { 1 });
                path.push(p);
                cur = p;
            }
            path.reverse();
            code.reverse();
            paths.push(path);
            codes.push(code);
        }
        Ok(HuffmanTree { k, nodes, paths, codes })
    }

    pub fn num_labels(&self) -> usize {
        self.k
    }

    pub fn num_internal(&self) -> usize {
        self.k - 1
    }

    pub fn root(&self) -> u32 {
        (2 * self.k - 2) as u32
    }

    pub fn node(&self, id: u32) -> &Node {
        &self.nodes[id as usize]
    }

    /// Root-to-leaf internal-node ids and the branch digits taken.
    pub fn path(&self, label: u32) -> (&[u32], &[u8]) {
        (&self.paths[label as usize], &self.codes[label as usize])
    }

    pub fn depth(&self, label: u32) -> usize {
        self.paths[label as usize].len()
    }

    pub fn weighted_path_length(&self, label_counts: &[u64]) -> u64 {
        label_counts
            .iter()
            .enumerate()
            .map(|(l, &c)| c.max(1) * self.depth(l as u32) as u64)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Minimum weighted path length over all full binary trees on the
    /// given leaf counts, by brute-force merging (every tree is reachable
    /// by some merge order).
    fn brute_force_optimum(counts: &[u64]) -> u64 {
        // depth-weighted cost accumulates as the sum of all merge weights
        fn go(pool: &mut Vec<u64>) -> u64 {
            if pool.len() == 1 {
                return 0;
            }
            let mut best = u64::MAX;
            for i in 0..pool.len() {
                for j in i + 1..pool.len() {
                    let (a, b) = (pool[i], pool[j]);
                    let mut next = pool.clone();
                    next.swap_remove(j);
                    next.swap_remove(i);
                    next.push(a + b);
                    best = best.min(a + b + go(&mut next));
                }
            }
            best
        }
        go(&mut counts.to_vec())
    }

    #[test]
    fn two_labels_single_internal_node() {
        let t = HuffmanTree::build(&[1, 1]).unwrap();
        assert_eq!(t.depth(0), 1);
        assert_eq!(t.depth(1), 1);
        assert_eq!(t.path(0).1, &[0]);
        assert_eq!(t.path(1).1, &[1]);
        assert_eq!(t.root(), 2);
    }

    #[test]
    fn equal_counts_give_balanced_tree() {
        let t = HuffmanTree::build(&[1, 1, 1, 1]).unwrap();
        for l in 0..4 {
            assert_eq!(t.depth(l), 2);
        }
    }

    #[test]
    fn skewed_counts_match_known_depths() {
        let t = HuffmanTree::build(&[5, 2, 1, 1]).unwrap();
        let depths: Vec<usize> = (0..4).map(|l| t.depth(l)).collect();
        assert_eq!(depths, vec![1, 2, 3, 3]);
        assert_eq!(t.weighted_path_length(&[5, 2, 1, 1]), 15);
        assert_eq!(brute_force_optimum(&[5, 2, 1, 1]), 15);
    }

    #[test]
    fn frequent_label_sits_at_root() {
        // merges (1,1)->2 then (2,2)->4; label 0 hangs off the root
        let t = HuffmanTree::build(&[2, 1, 1]).unwrap();
        let (path, _) = t.path(0);
        assert_eq!(path.len(), 1);
        assert_eq!(path[0], t.root());
    }

    #[test]
    fn deepest_siblings_share_path_prefix() {
        let t = HuffmanTree::build(&[8, 4, 2, 1, 1]).unwrap();
        let (p3, c3) = t.path(3);
        let (p4, c4) = t.path(4);
        assert_eq!(p3, p4);
        assert_eq!(&c3[..c3.len() - 1], &c4[..c4.len() - 1]);
        assert_ne!(c3.last(), c4.last());
    }

    #[test]
    fn internal_counts_are_children_sums() {
        let t = HuffmanTree::build(&[9, 3, 3, 2, 1]).unwrap();
        for id in t.num_labels()..2 * t.num_labels() - 1 {
            let n = t.node(id as u32);
            let l = t.node(n.left.unwrap()).count;
            let r = t.node(n.right.unwrap()).count;
            assert_eq!(n.count, l + r);
        }
    }

    #[test]
    fn replaying_codes_reaches_the_leaf() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let k = rng.gen_range(2..=8);
            let counts: Vec<u64> = (0..k).map(|_| rng.gen_range(0..10)).collect();
            let t = HuffmanTree::build(&counts).unwrap();
            for leaf in 0..k as u32 {
                let (path, code) = t.path(leaf);
                assert_eq!(path[0], t.root());
                let mut cur = t.root();
                for (&n, &c) in path.iter().zip(code) {
                    assert_eq!(n, cur);
                    let node = t.node(cur);
                    cur = if c == 0 { node.left.unwrap() } else { node.right.unwrap() };
                }
                assert_eq!(cur, leaf);
            }
        }
    }

    #[test]
    fn kraft_equality_holds() {
        let t = HuffmanTree::build(&[7, 5, 3, 2, 1, 1, 1]).unwrap();
        let sum: f64 = (0..7).map(|l| 0.5f64.powi(t.depth(l) as i32)).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn optimal_for_all_small_multisets() {
        // exhaustive check over multisets is the acceptance criterion;
        // spot-check a few shapes here
        for counts in [
            vec![1u64, 2, 3],
            vec![1, 1, 4, 4],
            vec![6, 1, 1, 1, 1],
            vec![3, 3, 3, 1],
        ] {
            let t = HuffmanTree::build(&counts).unwrap();
            assert_eq!(
                t.weighted_path_length(&counts),
                brute_force_optimum(&counts)
            );
        }
    }

    #[test]
    fn deterministic_rebuild() {
        let counts = vec![4, 4, 2, 2, 1, 1];
        let a = HuffmanTree::build(&counts).unwrap();
        let b = HuffmanTree::build(&counts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_label_rejected() {
        assert!(HuffmanTree::build(&[5]).is_err());
    }
}
