use std::collections::HashMap;
use std::sync::OnceLock;

use unicode_normalization::UnicodeNormalization;

const FOLD_TABLE: &str = include_str!("../../data/fold_vi.tsv");

fn fold_table() -> &'static HashMap<char, char> {
    static TABLE: OnceLock<HashMap<char, char>> = OnceLock::new();
    TABLE.get_or_init(|| {
        FOLD_TABLE
            .lines()
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                let mut cols = l.split('\t');
                let from = cols.next().and_then(|s| s.chars().next());
                let to = cols.next().and_then(|s| s.chars().next());
                match (from, to) {
                    (Some(f), Some(t)) => (f, t),
                    _ => panic!("bad fold table row: {l:?}"),
                }
            })
            .collect()
    })
}

fn is_combining_mark(c: char) -> bool {
    ('\u{0300}'..='\u{036F}').contains(&c)
}

/// Canonical matching form of a piece of text.
///
/// NFC-composed, lowercased, whitespace collapsed to single spaces and
/// trimmed. With `fold_diacritics`, Vietnamese tone and vowel marks are
/// removed and `đ` becomes `d`.
pub fn normalize_text(input: &str, fold_diacritics: bool) -> String {
    let lowered: String = input.nfc().flat_map(char::to_lowercase).collect();
    let mut out = String::with_capacity(lowered.len());
    for word in lowered.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    let composed: String = out.nfc().collect();
    if !fold_diacritics {
        return composed;
    }
    let table = fold_table();
    composed
        .chars()
        .filter(|c| !is_combining_mark(*c))
        .map(|c| table.get(&c).copied().unwrap_or(c))
        .collect()
}
