//! Text normalization and blocking-key generation.
//!
//! Everything downstream of ingestion (indexing, candidate retrieval, field
//! scoring) works on normalized text, so this module is the single place
//! where case folding, diacritic stripping, and punctuation handling happen.
//! It also produces the two kinds of blocking keys used by the index:
//! positional character q-grams and Soundex phonetic codes.

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Normalizes a string for matching: Unicode NFKD decomposition, lowercase,
/// combining marks removed, every non-alphanumeric character treated as a
/// separator, and separator runs collapsed to single spaces with no leading
/// or trailing space.
///
/// ```
/// use recon_core::textproc::normalize;
/// assert_eq!(normalize("  O'Neill & Co.  "), "o neill co");
/// assert_eq!(normalize("naïve Café"), "naive cafe");
/// ```
pub fn normalize(input: &str) -> String {
    let mut out = String::with_capacity(input.len());
    let mut pending_space = false;
    for c in input.nfkd() {
        if is_combining_mark(c) {
            continue;
        }
        for lc in c.to_lowercase() {
            if lc.is_alphanumeric() {
                if pending_space && !out.is_empty() {
                    out.push(' ');
                }
                pending_space = false;
                out.push(lc);
            } else {
                pending_space = true;
            }
        }
    }
    out
}

/// Splits a string into normalized word tokens. Equivalent to normalizing
/// and splitting on spaces; an input with no alphanumeric content yields an
/// empty vector.
pub fn tokenize(input: &str) -> Vec<String> {
    normalize(input)
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

/// Returns the character q-grams of the normalized, space-removed input as a
/// multiset in positional order. Grams may span word boundaries; a string
/// shorter than `q` after despacing yields an empty bag.
///
/// ```
/// use recon_core::textproc::qgrams;
/// assert_eq!(qgrams("Oracle", 3), vec!["ora", "rac", "acl", "cle"]);
/// assert!(qgrams("ab", 3).is_empty());
/// ```
///
/// # Panics
///
/// Panics if `q` is zero.
pub fn qgrams(input: &str, q: usize) -> Vec<String> {
    assert!(q >= 1, "q-gram width must be at least 1");
    let despaced: Vec<char> = normalize(input).chars().filter(|c| *c != ' ').collect();
    if despaced.len() < q {
        return Vec::new();
    }
    despaced
        .windows(q)
        .map(|w| w.iter().collect())
        .collect()
}

/// Computes the classic four-character American Soundex code of the first
/// token of the normalized input: initial letter kept, subsequent consonants
/// mapped to digit classes with adjacent duplicates collapsed, `h` and `w`
/// transparent to duplicate collapsing, vowels acting as separators, padded
/// with zeros. Input with no letters in its first token codes to `"0000"`.
///
/// ```
/// use recon_core::textproc::soundex;
/// assert_eq!(soundex("Will"), "W400");
/// assert_eq!(soundex("Wil"), "W400");
/// ```
pub fn soundex(input: &str) -> String {
    let normalized = normalize(input);
    let first_token = normalized.split_whitespace().next().unwrap_or("");
    let letters: Vec<u8> = first_token
        .bytes()
        .filter(u8::is_ascii_lowercase)
        .collect();
    let Some((&first, rest)) = letters.split_first() else {
        return "0000".to_owned();
    };
    let mut code = String::with_capacity(4);
    code.push(first.to_ascii_uppercase() as char);
    let mut last_digit = soundex_digit(first);
    for &b in rest {
        match soundex_digit(b) {
            Some(d) => {
                if last_digit != Some(d) {
                    code.push((b'0' + d) as char);
                    if code.len() == 4 {
                        return code;
                    }
                }
                last_digit = Some(d);
            }
            // h and w are invisible to duplicate collapsing; every other
            // uncoded letter (the vowels and y) breaks a duplicate run.
            None if b == b'h' || b == b'w' => {}
            None => last_digit = None,
        }
    }
    while code.len() < 4 {
        code.push('0');
    }
    code
}

fn soundex_digit(letter: u8) -> Option<u8> {
    match letter {
        b'b' | b'f' | b'p' | b'v' => Some(1),
        b'c' | b'g' | b'j' | b'k' | b'q' | b's' | b'x' | b'z' => Some(2),
        b'd' | b't' => Some(3),
        b'l' => Some(4),
        b'm' | b'n' => Some(5),
        b'r' => Some(6),
        _ => None,
    }
}
