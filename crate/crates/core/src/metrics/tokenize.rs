use crate::textcore::{is_punct_or_symbol, normalize, DANDA, DOUBLE_DANDA};

/// Whitespace split, then every punctuation or symbol code point becomes a
/// standalone token. Script-agnostic; the text is normalized first.
pub fn tokenize(text: &str) -> Vec<String> {
    let text = normalize(text);
    let mut tokens = Vec::new();
    for word in text.words() {
        let mut current = String::new();
        for c in word.chars() {
            if is_punct_or_symbol(c) || c == DANDA || c == DOUBLE_DANDA {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(c.to_string());
            } else {
                current.push(c);
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}
