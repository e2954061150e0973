//! Shared tokenizer and the rule-based lemmatizer used by the word-level
//! precision/recall analysis.

/// Lowercases and splits on anything that is not a letter or digit.
/// Punctuation never survives as a token.
pub fn tokenize(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}

// Irregular forms that the suffix rules below would mangle.
const IRREGULAR: &[(&str, &str)] = &[
    ("men", "man"),
    ("women", "woman"),
    ("children", "child"),
    ("people", "person"),
    ("feet", "foot"),
    ("teeth", "tooth"),
    ("mice", "mouse"),
    ("geese", "goose"),
    ("skis", "ski"),
    ("skiing", "ski"),
];

fn ends_with_double_consonant(w: &str) -> bool {
    let b = w.as_bytes();
    if b.len() < 2 {
        return false;
    }
    let (a, c) = (b[b.len() - 2], b[b.len() - 1]);
    a == c && !b"aeiou".contains(&c) && c.is_ascii_alphabetic()
}

/// Deterministic suffix stripper. Rules, applied in order, first match wins:
///
/// 1. irregular table lookup
/// 2. "-ies" -> "-y"            (cities -> city)
/// 3. "-sses"/"-shes"/"-ches"/"-xes"/"-zes" -> drop "es"
/// 4. "-s" -> drop              (unless "-ss", "-us", "-is")
/// 5. "-ing" -> drop, then undouble a final doubled consonant
///    (running -> run); keep stems of at least 3 letters
/// 6. "-ied" -> "-y"            (carried -> carry)
/// 7. "-ed" -> drop, then undouble (stopped -> stop); stems >= 3 letters
pub fn lemmatize(word: &str) -> String {
    let w = word.to_lowercase();
    for (from, to) in IRREGULAR {
        if w == *from {
            return (*to).to_string();
        }
    }
    if let Some(stem) = w.strip_suffix("ies") {
        if stem.len() >= 2 {
            return format!("{stem}y");
        }
    }
    for suf in ["sses", "shes", "ches", "xes", "zes"] {
        if let Some(stem) = w.strip_suffix(suf) {
            return format!("{}{}", stem, &suf[..suf.len() - 2]);
        }
    }
    if w.ends_with('s') && !w.ends_with("ss") && !w.ends_with("us") && !w.ends_with("is") {
        let stem = &w[..w.len() - 1];
        if stem.len() >= 2 {
            return stem.to_string();
        }
    }
    if let Some(stem) = w.strip_suffix("ing") {
        if stem.len() >= 3 {
            if ends_with_double_consonant(stem) {
                return stem[..stem.len() - 1].to_string();
            }
            return stem.to_string();
        }
    }
    if let Some(stem) = w.strip_suffix("ied") {
        if stem.len() >= 2 {
            return format!("{stem}y");
        }
    }
    if let Some(stem) = w.strip_suffix("ed") {
        if stem.len() >= 3 {
            if ends_with_double_consonant(stem) {
                return stem[..stem.len() - 1].to_string();
            }
            return stem.to_string();
        }
    }
    w
}
