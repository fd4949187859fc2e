/// Characters peeled off the edges of a whitespace chunk into their own tokens.
fn is_peelable(c: char) -> bool {
    matches!(
        c,
        '.' | ','
            | ';'
            | ':'
            | '!'
            | '?'
            | '"'
            | '\''
            | '('
            | ')'
            | '['
            | ']'
            | '{'
            | '}'
            | '`'
            | '\u{201c}'
            | '\u{201d}'
            | '\u{2018}'
            | '\u{2019}'
    )
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Splits text into sentences of tokens, keeping the original casing.
///
/// A sentence ends after a whitespace-delimited chunk whose last character is
/// `.`, `!` or `?`. Leading and trailing punctuation of each chunk becomes
/// separate tokens; punctuation inside a chunk (`3.5`, `don't`) stays put.
pub fn tokenize_cased(text: &str) -> Vec<Vec<String>> {
    let mut sentences = Vec::new();
    let mut current: Vec<String> = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let lead = chars.iter().take_while(|c| is_peelable(**c)).count();
        if lead == chars.len() {
            current.extend(chars.iter().map(|c| c.to_string()));
        } else {
            let trail = chars.iter().rev().take_while(|c| is_peelable(**c)).count();
            current.extend(chars[..lead].iter().map(|c| c.to_string()));
            current.push(chars[lead..chars.len() - trail].iter().collect());
            current.extend(chars[chars.len() - trail..].iter().map(|c| c.to_string()));
        }
        if chars.last().copied().is_some_and(is_terminal) {
            sentences.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    sentences
}

/// [`tokenize_cased`] followed by lowercasing.
pub fn tokenize(text: &str) -> Vec<Vec<String>> {
    tokenize_cased(text)
        .into_iter()
        .map(|s| s.into_iter().map(|t| t.to_lowercase()).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &[&[&str]]) -> Vec<Vec<String>> {
        s.iter()
            .map(|x| x.iter().map(|t| t.to_string()).collect())
            .collect()
    }

    #[test]
    fn splits_sentences_and_peels_punctuation() {
        assert_eq!(
            tokenize("The cat sat. It slept."),
            v(&[&["the", "cat", "sat", "."], &["it", "slept", "."]])
        );
        assert_eq!(tokenize("hello"), v(&[&["hello"]]));
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \n\t ").is_empty());
    }

    #[test]
    fn keeps_inner_punctuation_and_digits() {
        assert_eq!(
            tokenize("It cost 3.5 dollars, (roughly)!"),
            v(&[&["it", "cost", "3.5", "dollars", ",", "(", "roughly", ")", "!"]])
        );
        assert_eq!(tokenize("@entity3 won"), v(&[&["@entity3", "won"]]));
    }

    #[test]
    fn cased_variant_preserves_case() {
        assert_eq!(tokenize_cased("Obama spoke"), v(&[&["Obama", "spoke"]]));
    }
}
