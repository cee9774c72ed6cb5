const PUNCTUATION: &[char] = &['.', ',', '!', '?', ';', ':', '\'', '"', '(', ')', '-'];

fn is_punct(c: char) -> bool {
    PUNCTUATION.contains(&c)
}

/// Lowercase, split on whitespace, and break each of `.,!?;:'"()-` out into its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for c in chunk.chars() {
            if is_punct(c) {
                if !word.is_empty() {
                    tokens.push(std::mem::take(&mut word));
                }
                tokens.push(c.to_string());
            } else {
                word.extend(c.to_lowercase());
            }
        }
        if !word.is_empty() {
            tokens.push(word);
        }
    }
    tokens
}

/// True for tokens made only of punctuation marks.
pub fn is_punctuation_token(token: &str) -> bool {
    !token.is_empty() && token.chars().all(is_punct)
}

/// Space-joined surface form; re-tokenizing it yields the same tokens.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(t.as_ref());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_punctuation_and_lowercases() {
        assert_eq!(
            tokenize("The cat's mat."),
            vec!["the", "cat", "'", "s", "mat", "."]
        );
    }

    #[test]
    fn empty_and_whitespace() {
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("a  b"), vec!["a", "b"]);
        assert_eq!(tokenize(" \t a\n"), vec!["a"]);
    }

    #[test]
    fn hyphens_quotes_and_parens() {
        assert_eq!(
            tokenize("(Well-known) \"Yes!\""),
            vec!["(", "well", "-", "known", ")", "\"", "yes", "!", "\""]
        );
    }

    #[test]
    fn detokenize_round_trips() {
        let toks = tokenize("We went to the park, then home!");
        assert_eq!(tokenize(&detokenize(&toks)), toks);
    }

    #[test]
    fn punctuation_tokens() {
        assert!(is_punctuation_token("."));
        assert!(is_punctuation_token("--"));
        assert!(!is_punctuation_token("a."));
        assert!(!is_punctuation_token(""));
    }
}
