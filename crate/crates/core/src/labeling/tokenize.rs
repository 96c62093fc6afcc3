/// Identifier recorded in serialized models.
pub const TOKENIZER_ID: &str = "unicode-casefold-alnum/1";

/// Splits on every non-alphanumeric char (whitespace and punctuation alike),
/// lowercases, and keeps at most `max_tokens` tokens.
pub fn tokenize(text: &str, max_tokens: usize) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .take(max_tokens)
        .map(str::to_lowercase)
        .collect()
}
