//! The one tokenizer and sentence splitter used everywhere.

/// Abbreviations whose trailing period never ends a sentence. Compared
/// case-insensitively against the whitespace-delimited word including the
/// period.
const ABBREVIATIONS: &[&str] = &[
    "dr.", "mr.", "mrs.", "ms.", "prof.", "st.", "vs.", "etc.", "e.g.", "i.e.", "inc.", "ltd.", "co.", "corp.",
    "u.s.", "u.k.", "no.", "fig.", "approx.", "jr.", "sr.", "mg.", "al.",
];

/// Lowercases and splits on anything that is not alphanumeric. A hyphen
/// joining two alphanumerics stays inside the token so names such as
/// `co-trimoxazole` survive as one term.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if c == '-'
            && !cur.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            cur.push('-');
        } else if !cur.is_empty() {
            tokens.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

/// Same segmentation as [`tokenize`] but keeps the original casing and the
/// byte span of each token. Used where capitalisation matters.
pub fn tokenize_with_spans(text: &str) -> Vec<(String, std::ops::Range<usize>)> {
    let idx: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (k, &(b, c)) in idx.iter().enumerate() {
        let joins = c == '-' && start.is_some() && idx.get(k + 1).is_some_and(|(_, n)| n.is_alphanumeric());
        if c.is_alphanumeric() || joins {
            start.get_or_insert(b);
        } else if let Some(s) = start.take() {
            out.push((text[s..b].to_string(), s..b));
        }
    }
    if let Some(s) = start {
        out.push((text[s..].to_string(), s..text.len()));
    }
    out
}

/// Splits on `.`, `!` or `?` followed by whitespace and an uppercase
/// letter, unless the word ending at the punctuation is a known
/// abbreviation. Returned sentences are trimmed slices of the input.
pub fn split_sentences(text: &str) -> Vec<String> {
    let idx: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut k = 0usize;
    while k < idx.len() {
        let (b, c) = idx[k];
        if matches!(c, '.' | '!' | '?') {
            let mut j = k + 1;
            while j < idx.len() && idx[j].1.is_whitespace() {
                j += 1;
            }
            let has_space = j > k + 1;
            if has_space && j < idx.len() && idx[j].1.is_uppercase() && !ends_with_abbreviation(&text[start..b + 1]) {
                let s = text[start..b + 1].trim();
                if !s.is_empty() {
                    out.push(s.to_string());
                }
                start = idx[j].0;
                k = j;
                continue;
            }
        }
        k += 1;
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        out.push(rest.to_string());
    }
    out
}

fn ends_with_abbreviation(segment: &str) -> bool {
    let word = segment.rsplit(char::is_whitespace).next().unwrap_or("");
    let word = word.trim_start_matches(|c: char| !c.is_alphanumeric());
    let lower = word.to_lowercase();
    // single initials such as "J." also never end a sentence
    ABBREVIATIONS.contains(&lower.as_str()) || (lower.len() == 2 && lower.starts_with(|c: char| c.is_alphabetic()))
}

/// Collapses runs of whitespace so texts can be compared "modulo
/// whitespace".
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_keeps_hyphenated_names() {
        assert_eq!(tokenize("Co-trimoxazole is sold by ACME, Inc."), vec!["co-trimoxazole", "is", "sold", "by", "acme", "inc"]);
        assert_eq!(tokenize("a -b c- d--e"), vec!["a", "b", "c", "d", "e"]);
        assert!(tokenize("  ,.;  ").is_empty());
    }

    #[test]
    fn spans_agree_with_tokens() {
        let t = "Vexol-XR was marketed in the United States. It works!";
        let spans = tokenize_with_spans(t);
        let lowered: Vec<String> = spans.iter().map(|(s, _)| s.to_lowercase()).collect();
        assert_eq!(lowered, tokenize(t));
        for (s, r) in spans {
            assert_eq!(&t[r], s);
        }
    }

    #[test]
    fn sentence_splitting() {
        let t = "Dr. Smith studied it. The drug was approved in the U.S. Later it was sold! Was it? yes.";
        assert_eq!(
            split_sentences(t),
            vec!["Dr. Smith studied it.", "The drug was approved in the U.S. Later it was sold!", "Was it? yes."]
        );
        assert_eq!(split_sentences("no terminal punctuation"), vec!["no terminal punctuation"]);
        assert!(split_sentences("   ").is_empty());
    }

    #[test]
    fn sentences_cover_text() {
        let t = "One sentence here.  Another one follows!\nAnd a third? Yes.";
        let joined = split_sentences(t).join(" ");
        assert_eq!(normalize_whitespace(&joined), normalize_whitespace(t));
    }
}
