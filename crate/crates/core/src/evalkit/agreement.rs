use std::collections::BTreeSet;
use std::io::BufRead;

use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum KappaError {
    #[error("label sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no labels to compare")]
    Empty,
    #[error("confusion matrix must be square")]
    NotSquare,
    #[error("line {line}: expected two tab-separated labels")]
    Malformed { line: usize },
    #[error("reading labels: {0}")]
    Io(String),
}

/// Cohen's kappa from a confusion matrix (`counts[a][b]` = items labelled
/// `a` by the first annotator and `b` by the second).
///
/// When chance agreement is 1 (a single label used throughout) kappa is
/// defined as 1.0 for full agreement.
pub fn cohen_kappa_from_confusion<F: Scalar>(counts: &[Vec<u64>]) -> Result<F, KappaError> {
    let k = counts.len();
    if counts.iter().any(|row| row.len() != k) {
        return Err(KappaError::NotSquare);
    }
    let n: u64 = counts.iter().flatten().sum();
    if n == 0 {
        return Err(KappaError::Empty);
    }
    let agree: u64 = (0..k).map(|i| counts[i][i]).sum();
    let rows: Vec<u64> = counts.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<u64> = (0..k).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
    let chance: u128 = rows.iter().zip(&cols).map(|(&r, &c)| u128::from(r) * u128::from(c)).sum();
    let n2 = u128::from(n) * u128::from(n);
    if chance == n2 {
        return Ok(if agree == n { F::one() } else { F::zero() });
    }
    // (p_o - p_e) / (1 - p_e) scaled by n^2 to stay in integers until the end
    let num = i128::try_from(u128::from(agree) * u128::from(n)).unwrap_or(i128::MAX) - chance as i128;
    let den = (n2 - chance) as f64;
    Ok(F::of(num as f64 / den))
}

/// Cohen's kappa over two parallel label sequences.
pub fn cohen_kappa<F: Scalar, L: Ord>(a: &[L], b: &[L]) -> Result<F, KappaError> {
    if a.len() != b.len() {
        return Err(KappaError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(KappaError::Empty);
    }
    let labels: Vec<&L> = a.iter().chain(b).collect::<BTreeSet<_>>().into_iter().collect();
    let idx = |l: &L| labels.binary_search(&l).unwrap_or(0);
    let mut m = vec![vec![0u64; labels.len()]; labels.len()];
    for (x, y) in a.iter().zip(b) {
        m[idx(x)][idx(y)] += 1;
    }
    cohen_kappa_from_confusion(&m)
}

/// Reads `label_a<TAB>label_b` lines; blank lines and `#` comments are skipped.
pub fn load_label_pairs<R: BufRead>(source: R) -> Result<(Vec<String>, Vec<String>), KappaError> {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (i, line) in source.lines().enumerate() {
        let line = line.map_err(|e| KappaError::Io(e.to_string()))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut parts = t.split('\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(x), Some(y), None) if !x.trim().is_empty() && !y.trim().is_empty() => {
                a.push(x.trim().to_string());
                b.push(y.trim().to_string());
            }
            _ => return Err(KappaError::Malformed { line: i + 1 }),
        }
    }
    Ok((a, b))
}
