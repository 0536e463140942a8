//! BK-tree index over perceptual hashes.
//!
//! A BK-tree exploits the triangle inequality of a discrete metric (here,
//! Hamming distance on 64-bit hashes): each node keys its children by their
//! distance to the node, so a radius query can skip any subtree whose edge
//! distance differs from the query-to-node distance by more than the
//! radius. Frames with *identical* hashes share a node rather than forming
//! distance-0 chains.

use std::collections::BTreeMap;

use crate::frame::FrameId;
use crate::phash::{hamming, PerceptualHash};

#[derive(Debug)]
struct Node {
    hash: PerceptualHash,
    /// Every frame whose hash equals `hash`, in insertion order.
    frames: Vec<FrameId>,
    /// Children keyed by Hamming distance to `hash` (1..=64). A BTreeMap
    /// keeps traversal — and therefore query output — deterministic.
    children: BTreeMap<u32, Node>,
}

/// Metric index mapping hashes to the frames that carry them.
#[derive(Debug, Default)]
pub struct BkTree {
    root: Option<Node>,
    len: usize,
}

impl BkTree {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of inserted frames (not distinct hashes).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn insert(&mut self, hash: PerceptualHash, frame: FrameId) {
        self.len += 1;
        let Some(root) = self.root.as_mut() else {
            self.root = Some(Node { hash, frames: vec![frame], children: BTreeMap::new() });
            return;
        };
        let mut node = root;
        loop {
            let d = hamming(node.hash, hash);
            if d == 0 {
                node.frames.push(frame);
                return;
            }
            // The borrow checker can't see that the or-insert branch
            // returns, so look up the child in two steps.
            if node.children.contains_key(&d) {
                node = node.children.get_mut(&d).unwrap();
            } else {
                node.children
                    .insert(d, Node { hash, frames: vec![frame], children: BTreeMap::new() });
                return;
            }
        }
    }

    /// All entries within `radius` bits of `hash` (inclusive), as
    /// `(hash, frame)` pairs in deterministic traversal order.
    pub fn query(&self, hash: PerceptualHash, radius: u32) -> Vec<(PerceptualHash, FrameId)> {
        let mut out = Vec::new();
        let Some(root) = &self.root else { return out };
        let mut stack = vec![root];
        while let Some(node) = stack.pop() {
            let d = hamming(node.hash, hash);
            if d <= radius {
                out.extend(node.frames.iter().map(|f| (node.hash, f.clone())));
            }
            // Triangle inequality: a child at edge distance e can contain
            // matches only if |e - d| <= radius.
            let lo = d.saturating_sub(radius);
            let hi = d + radius;
            for (_, child) in node.children.range(lo..=hi) {
                stack.push(child);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(n: u32) -> FrameId {
        FrameId::new("A", "", n)
    }

    /// Exhaustive scan — the oracle the tree must agree with.
    fn linear_scan(
        entries: &[(PerceptualHash, FrameId)],
        hash: PerceptualHash,
        radius: u32,
    ) -> Vec<(PerceptualHash, FrameId)> {
        entries.iter().filter(|(h, _)| hamming(*h, hash) <= radius).cloned().collect()
    }

    fn sorted(mut v: Vec<(PerceptualHash, FrameId)>) -> Vec<(PerceptualHash, FrameId)> {
        v.sort();
        v
    }

    #[test]
    fn empty_tree_returns_nothing() {
        let tree = BkTree::new();
        assert!(tree.query(0xDEAD_BEEF, 64).is_empty());
        assert!(tree.is_empty());
    }

    #[test]
    fn identical_hashes_share_a_node() {
        let mut tree = BkTree::new();
        tree.insert(42, id(1));
        tree.insert(42, id(2));
        tree.insert(43, id(3));
        assert_eq!(tree.len(), 3);
        let hits = sorted(tree.query(42, 0));
        assert_eq!(hits, vec![(42, id(1)), (42, id(2))]);
    }

    #[test]
    fn radius_zero_is_exact_lookup() {
        let mut tree = BkTree::new();
        for (i, h) in [0u64, u64::MAX, 0x00FF_00FF].into_iter().enumerate() {
            tree.insert(h, id(i as u32));
        }
        assert_eq!(tree.query(u64::MAX, 0), vec![(u64::MAX, id(1))]);
        assert!(tree.query(1, 0).is_empty());
    }

    #[test]
    fn agrees_with_linear_scan_on_random_data() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let mut tree = BkTree::new();
        let mut entries = Vec::new();
        for i in 0..500 {
            // Mix of clustered hashes (few bits flipped off a base) and
            // uniform ones, plus occasional exact repeats.
            let h: u64 = match i % 3 {
                0 => rng.gen(),
                1 => 0xABCD_EF01_2345_6789 ^ (1u64 << rng.gen_range(0..64)),
                _ => 0xABCD_EF01_2345_6789,
            };
            entries.push((h, id(i)));
            tree.insert(h, id(i));
        }
        for _ in 0..50 {
            let q: u64 = rng.gen();
            for radius in [0, 1, 4, 8, 16, 32, 64] {
                assert_eq!(
                    sorted(tree.query(q, radius)),
                    sorted(linear_scan(&entries, q, radius)),
                    "radius {radius}"
                );
            }
        }
    }

    #[test]
    fn radius_64_returns_everything() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(22);
        let mut tree = BkTree::new();
        for i in 0..100 {
            tree.insert(rng.gen(), id(i));
        }
        assert_eq!(tree.query(rng.gen(), 64).len(), 100);
    }
}
