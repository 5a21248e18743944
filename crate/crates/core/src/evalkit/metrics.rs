use std::collections::HashMap;
use std::hash::Hash;

use crate::kb::normalize_text;
use crate::scalar::Scalar;

/// Whitespace tokens of the NFC-normalized, lowercased text.
pub fn tokenize(text: &str) -> Vec<String> {
    normalize_text(text, false).split_whitespace().map(str::to_string).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bleu<F> {
    pub score: F,
    /// Modified n-gram precisions for n = 1..=4, after smoothing.
    pub precisions: [F; 4],
    pub brevity_penalty: F,
    /// Set when the candidate or the reference set was empty.
    pub degenerate: bool,
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence-level BLEU-4 with uniform weights.
///
/// Clipped n-gram precisions against the per-n-gram maximum reference
/// count; for n >= 2 a zero count is smoothed by adding one to numerator
/// and denominator. The brevity penalty uses the reference length closest
/// to the candidate (shorter wins ties). An empty candidate or reference
/// set scores zero and is flagged `degenerate`.
pub fn bleu4<F: Scalar, T: Eq + Hash, R: AsRef<[T]>>(candidate: &[T], references: &[R]) -> Bleu<F> {
    if candidate.is_empty() || references.is_empty() {
        return Bleu {
            score: F::zero(),
            precisions: [F::zero(); 4],
            brevity_penalty: F::zero(),
            degenerate: true,
        };
    }
    let mut precisions = [F::zero(); 4];
    for (i, p) in precisions.iter_mut().enumerate() {
        let n = i + 1;
        let cand = ngram_counts(candidate, n);
        let mut max_ref: HashMap<&[T], usize> = HashMap::new();
        for r in references {
            for (g, c) in ngram_counts(r.as_ref(), n) {
                let slot = max_ref.entry(g).or_insert(0);
                *slot = (*slot).max(c);
            }
        }
        let clipped: usize = cand
            .iter()
            .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        let total = candidate.len().saturating_sub(n - 1);
        *p = if n >= 2 && clipped == 0 {
            F::one() / F::count(total + 1)
        } else if total == 0 {
            F::zero()
        } else {
            F::count(clipped) / F::count(total)
        };
    }
    let c = candidate.len();
    let r = references
        .iter()
        .map(|r| r.as_ref().len())
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap_or(0);
    let brevity_penalty = if c > r {
        F::one()
    } else {
        (F::one() - F::count(r) / F::count(c)).exp()
    };
    let score = if precisions.iter().any(|p| *p <= F::zero()) {
        F::zero()
    } else {
        let mean_log = precisions.iter().map(|p| p.ln()).fold(F::zero(), |a, b| a + b) / F::count(4);
        brevity_penalty * mean_log.exp()
    };
    Bleu {
        score,
        precisions,
        brevity_penalty,
        degenerate: false,
    }
}

pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 (beta = 1) from the longest common subsequence.
pub fn rouge_l<F: Scalar, T: Eq>(candidate: &[T], reference: &[T]) -> F {
    let l = lcs_len(candidate, reference);
    if l == 0 {
        return F::zero();
    }
    let p = F::count(l) / F::count(candidate.len());
    let r = F::count(l) / F::count(reference.len());
    F::of(2.0) * p * r / (p + r)
}

/// Exact-match METEOR variant without stemming or synonyms.
///
/// Each candidate token aligns to the earliest unused equal reference
/// token, left to right. Chunks are maximal runs of matches adjacent in
/// both sequences. F-mean = 10PR / (R + 9P); penalty = 0.5 (chunks / m)^3.
pub fn meteor_lite<F: Scalar, T: Eq>(candidate: &[T], reference: &[T]) -> F {
    let mut used = vec![false; reference.len()];
    let mut alignment: Vec<usize> = Vec::new();
    for tok in candidate {
        if let Some(j) = (0..reference.len()).find(|&j| !used[j] && reference[j] == *tok) {
            used[j] = true;
            alignment.push(j);
        } else {
            alignment.push(usize::MAX);
        }
    }
    let matched: Vec<(usize, usize)> = alignment
        .iter()
        .enumerate()
        .filter(|(_, j)| **j != usize::MAX)
        .map(|(i, j)| (i, *j))
        .collect();
    let m = matched.len();
    if m == 0 {
        return F::zero();
    }
    let chunks = 1 + matched
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count();
    let p = F::count(m) / F::count(candidate.len());
    let r = F::count(m) / F::count(reference.len());
    let fmean = F::of(10.0) * p * r / (r + F::of(9.0) * p);
    let frag = F::count(chunks) / F::count(m);
    let penalty = F::of(0.5) * frag * frag * frag;
    fmean * (F::one() - penalty)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn identical_sentences_score_one() {
        let s = toks("bánh xèo là món bánh chiên giòn của Việt Nam");
        let b: Bleu<f64> = bleu4(&s, std::slice::from_ref(&s));
        assert_eq!(b.score, 1.0);
        assert_eq!(rouge_l::<f64, _>(&s, &s), 1.0);
        assert_eq!(bleu4::<f32, _, _>(&s, std::slice::from_ref(&s)).score, 1.0);
    }

    #[test]
    fn empty_inputs_are_degenerate() {
        let s = toks("một hai");
        let empty: Vec<String> = Vec::new();
        let b: Bleu<f64> = bleu4(&empty, std::slice::from_ref(&s));
        assert!(b.degenerate);
        assert_eq!(b.score, 0.0);
        let none: [Vec<String>; 0] = [];
        assert!(bleu4::<f64, _, _>(&s, &none).degenerate);
    }

    #[test]
    fn meteor_hand_computed() {
        // candidate "a b x c", reference "a b c d": m = 3, chunks = 2
        let c = toks("a b x c");
        let r = toks("a b c d");
        let p = 0.75_f64;
        let rr = 0.75_f64;
        let f = 10.0 * p * rr / (rr + 9.0 * p);
        let expected = f * (1.0 - 0.5 * (2.0_f64 / 3.0).powi(3));
        assert!((meteor_lite::<f64, _>(&c, &r) - expected).abs() < 1e-12);
    }

    #[test]
    fn tokenize_normalizes_case_and_composition() {
        assert_eq!(tokenize("  Bánh   XÈO "), vec!["bánh", "xèo"]);
        assert_eq!(tokenize("Be\u{0300}"), tokenize("Bè"));
    }
}
