//! Near-duplicate detection and removal.
//!
//! Consecutive or revisited viewpoints add almost no parallax information
//! but cost reconstruction and training time, so frames whose perceptual
//! hashes sit within `h_s` bits of an earlier frame are collapsed onto that
//! earlier representative.
//!
//! Clustering is greedy in frame order: the first unclustered frame whose
//! radius-`h_s` ball contains another unclustered frame becomes a
//! representative and absorbs every such frame as a member. Because any
//! frame within `h_s` of an earlier seed was already absorbed by it, the
//! surviving representatives are pairwise more than `h_s` apart, and the
//! representative of every cluster is its earliest frame.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::bktree::BkTree;
use crate::frame::{FrameId, FrameSet, Provenance};
use crate::phash::{hamming, phash64, PerceptualHash};

/// One group of near-duplicates. The representative is kept; members are
/// removed. `members` is sorted by frame id and never contains the
/// representative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateCluster {
    pub representative: FrameId,
    /// `(member, hamming distance to the representative's hash)`.
    pub members: Vec<(FrameId, u32)>,
}

/// Hashes every frame and clusters near-duplicates within `h_s` bits.
pub fn find_duplicates(frames: &FrameSet, h_s: u32) -> Vec<DuplicateCluster> {
    debug_assert_eq!(frames.provenance(), Provenance::Deblurred, "dedup runs after blur removal");
    let hashes: Vec<(FrameId, PerceptualHash)> =
        frames.iter().map(|f| (f.id.clone(), phash64(f))).collect();
    cluster_hashes(&hashes, h_s)
}

/// Clustering core, separated so callers can reuse cached hashes.
/// `hashes` must be in frame order.
pub fn cluster_hashes(hashes: &[(FrameId, PerceptualHash)], h_s: u32) -> Vec<DuplicateCluster> {
    assert!(h_s <= 64, "Hamming radius over 64 bits is meaningless");
    let mut tree = BkTree::new();
    for (id, hash) in hashes {
        tree.insert(*hash, id.clone());
    }
    let mut clustered: HashSet<FrameId> = HashSet::new();
    let mut clusters = Vec::new();
    for (id, hash) in hashes {
        if clustered.contains(id) {
            continue;
        }
        let mut members: Vec<(FrameId, u32)> = tree
            .query(*hash, h_s)
            .into_iter()
            .filter(|(_, hit)| hit != id && !clustered.contains(hit))
            .map(|(hit_hash, hit)| (hit, hamming(hit_hash, *hash)))
            .collect();
        if members.is_empty() {
            continue; // singleton: no cluster formed
        }
        members.sort();
        clustered.insert(id.clone());
        clustered.extend(members.iter().map(|(m, _)| m.clone()));
        clusters.push(DuplicateCluster { representative: id.clone(), members });
    }
    clusters
}

/// Drops every cluster member, keeping representatives and unclustered
/// frames in their original order.
pub fn reduce_duplicates(frames: &FrameSet, clusters: &[DuplicateCluster]) -> FrameSet {
    debug_assert_eq!(frames.provenance(), Provenance::Deblurred);
    let removed: HashSet<&FrameId> =
        clusters.iter().flat_map(|c| c.members.iter().map(|(m, _)| m)).collect();
    frames.retain(Provenance::Deduped, |f| !removed.contains(&f.id))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(cam: &str, n: u32) -> FrameId {
        FrameId::new(cam, "", n)
    }

    #[test]
    fn exact_duplicates_cluster_on_earliest() {
        let hashes = vec![
            (id("A", 0), 0x1111u64),
            (id("A", 1), 0xFFFF_0000_FFFF_0000),
            (id("A", 2), 0x1111),
            (id("A", 3), 0x1111),
        ];
        let clusters = cluster_hashes(&hashes, 0);
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].representative, id("A", 0));
        assert_eq!(clusters[0].members, vec![(id("A", 2), 0), (id("A", 3), 0)]);
    }

    #[test]
    fn greedy_assignment_is_first_come() {
        // b is within radius of both a and c; a seeds first and takes b,
        // and c (outside a's ball) stays unclustered.
        let a = 0u64;
        let b = 0b11u64; // d(a,b) = 2
        let c = 0b1111u64; // d(b,c) = 2, d(a,c) = 4
        let hashes = vec![(id("A", 0), a), (id("A", 1), b), (id("A", 2), c)];
        let clusters = cluster_hashes(&hashes, 2);
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].representative, id("A", 0));
        assert_eq!(clusters[0].members, vec![(id("A", 1), 2)]);
    }

    #[test]
    fn representatives_stay_apart() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let base: u64 = rng.gen();
        let mut hashes = Vec::new();
        for i in 0..200u32 {
            // Clumps around several bases.
            let clump = base ^ ((i as u64 / 20) << 40);
            let mut h = clump;
            for _ in 0..rng.gen_range(0..3) {
                h ^= 1 << rng.gen_range(0..64);
            }
            hashes.push((id("A", i), h));
        }
        let h_s = 6;
        let clusters = cluster_hashes(&hashes, h_s);
        let reps: Vec<u64> = clusters
            .iter()
            .map(|c| hashes.iter().find(|(i, _)| *i == c.representative).unwrap().1)
            .collect();
        for (i, &a) in reps.iter().enumerate() {
            for &b in &reps[i + 1..] {
                assert!(hamming(a, b) > h_s, "representatives within radius");
            }
        }
        // Every member is within h_s of its representative, and no frame
        // appears in two clusters.
        let mut seen = HashSet::new();
        for c in &clusters {
            assert!(seen.insert(c.representative.clone()));
            for (m, d) in &c.members {
                assert!(seen.insert(m.clone()), "{m} clustered twice");
                assert!(*d <= h_s);
                assert!(c.representative < *m, "representative is the earliest frame");
            }
        }
    }

    #[test]
    fn distinct_hashes_produce_no_clusters() {
        let hashes = vec![
            (id("A", 0), 0u64),
            (id("A", 1), u64::MAX),
            (id("B", 0), 0x00FF_00FF_00FF_00FFu64),
        ];
        assert!(cluster_hashes(&hashes, 10).is_empty());
    }
}
