use rand::seq::SliceRandom;
use rand::Rng as _;

use super::loss::Triplet;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::signal::LabelSignal;

/// Uniform anchors among labeled nodes, positives from the anchor's class and
/// negatives from the other class. Unlabeled (zero) nodes are never used.
pub fn sample_triplets(labels: &LabelSignal, count: usize, seed: u64) -> Result<Vec<Triplet>> {
    let mut r = rng::rng(seed, &[rng::tag("triplets")]);
    sample_triplets_with(labels, count, &mut r)
}

pub fn sample_triplets_with(
    labels: &LabelSignal,
    count: usize,
    rng: &mut Rng,
) -> Result<Vec<Triplet>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels.sign(i) > 0).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels.sign(i) < 0).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Sampling(format!(
            "need both classes, found {} positive and {} negative",
            pos.len(),
            neg.len()
        )));
    }
    // An anchor needs a distinct partner in its own class.
    let mut anchors = Vec::new();
    if pos.len() >= 2 {
        anchors.extend_from_slice(&pos);
    }
    if neg.len() >= 2 {
        anchors.extend_from_slice(&neg);
    }
    if anchors.is_empty() {
        return Err(Error::Sampling(
            "no class has two labeled members".to_string(),
        ));
    }
    anchors.sort_unstable();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let a = *anchors.choose(rng).expect("nonempty");
        let (same, other) = if labels.sign(a) > 0 { (&pos, &neg) } else { (&neg, &pos) };
        let p = loop {
            let c = same[rng.gen_range(0..same.len())];
            if c != a {
                break c;
            }
        };
        let n = *other.choose(rng).expect("nonempty");
        out.push(Triplet {
            anchor: a,
            positive: p,
            negative: n,
        });
    }
    Ok(out)
}
