//! Small deterministic helpers shared across modules.

use sha2::{Digest, Sha256};

/// Stable 64-bit hash of a seed and a list of byte strings.
///
/// Parts are length-prefixed so `("ab", "c")` and `("a", "bc")` differ.
/// The value depends only on the inputs, never on the platform or the
/// toolchain, which makes it usable for sub-seeds and shuffle keys.
pub fn stable_hash<I, P>(seed: u64, parts: I) -> u64
where
    I: IntoIterator<Item = P>,
    P: AsRef<[u8]>,
{
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for part in parts {
        let part = part.as_ref();
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let digest = hasher.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(word)
}

/// Hex-encoded SHA-256 of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Apportions `total` units across `weights` by the largest-remainder
/// method. The result always sums to `total`; remainder ties go to the
/// earlier index.
pub fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    if weights.is_empty() {
        return Vec::new();
    }
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights
        .iter()
        .map(|w| if sum > 0.0 { w / sum * total as f64 } else { 0.0 })
        .collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut leftover = total.saturating_sub(assigned);
    for &i in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        counts[i] += 1;
        leftover -= 1;
    }
    counts
}

/// Canonical relabeling: clusters are renumbered by first appearance.
/// Returns the new labels and the old-to-new mapping.
pub fn relabel_by_first_appearance(labels: &[usize], k: usize) -> (Vec<usize>, Vec<usize>) {
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    for &l in labels {
        if map[l] == usize::MAX {
            map[l] = next;
            next += 1;
        }
    }
    for slot in map.iter_mut() {
        if *slot == usize::MAX {
            *slot = next;
            next += 1;
        }
    }
    (labels.iter().map(|&l| map[l]).collect(), map)
}

/// Formats a float with the shortest representation that parses back to
/// the same value.
pub fn fmt_f64(value: f64) -> String {
    format!("{value:?}")
}
