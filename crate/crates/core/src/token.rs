//! Math tokens: the node labels of layout and operator trees.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Coarse symbol class of a token. Each kind has a one-letter tag used in
/// the serialized `KIND!value` form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TokenKind {
    Variable,
    Number,
    Operator,
    Function,
    Fraction,
    Radical,
    Matrix,
    Relation,
    Group,
}

impl TokenKind {
    pub const ALL: [TokenKind; 9] = [
        TokenKind::Variable,
        TokenKind::Number,
        TokenKind::Operator,
        TokenKind::Function,
        TokenKind::Fraction,
        TokenKind::Radical,
        TokenKind::Matrix,
        TokenKind::Relation,
        TokenKind::Group,
    ];

    pub fn tag(self) -> char {
        match self {
            TokenKind::Variable => 'V',
            TokenKind::Number => 'N',
            TokenKind::Operator => 'O',
            TokenKind::Function => 'T',
            TokenKind::Fraction => 'F',
            TokenKind::Radical => 'R',
            TokenKind::Matrix => 'M',
            TokenKind::Relation => 'U',
            TokenKind::Group => 'G',
        }
    }

    pub fn from_tag(tag: char) -> Option<Self> {
        TokenKind::ALL.into_iter().find(|k| k.tag() == tag)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenError {
    #[error("token `{0}` has no `KIND!` prefix")]
    MissingSeparator(String),
    #[error("unknown token kind tag `{0}`")]
    UnknownKind(String),
    #[error("token value `{0}` is empty or contains whitespace or `!`")]
    InvalidValue(String),
}

/// A node symbol such as `V!a`, `N!3` or `O!plus`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MathToken {
    kind: TokenKind,
    value: String,
}

impl MathToken {
    pub fn new(kind: TokenKind, value: impl Into<String>) -> Result<Self, TokenError> {
        let value = value.into();
        if value.is_empty() || value.contains('!') || value.chars().any(char::is_whitespace) {
            return Err(TokenError::InvalidValue(value));
        }
        Ok(Self { kind, value })
    }

    /// Constructor for values produced by the parser itself, which are valid by construction.
    pub(crate) fn known(kind: TokenKind, value: &str) -> Self {
        debug_assert!(!value.is_empty() && !value.contains('!'), "bad token value {value:?}");
        Self { kind, value: value.to_string() }
    }

    pub fn kind(&self) -> TokenKind {
        self.kind
    }

    pub fn value(&self) -> &str {
        &self.value
    }
}

impl fmt::Display for MathToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}!{}", self.kind.tag(), self.value)
    }
}

impl FromStr for MathToken {
    type Err = TokenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (tag, value) = s.split_once('!').ok_or_else(|| TokenError::MissingSeparator(s.to_string()))?;
        let mut chars = tag.chars();
        let kind = match (chars.next(), chars.next()) {
            (Some(c), None) => TokenKind::from_tag(c),
            _ => None,
        }
        .ok_or_else(|| TokenError::UnknownKind(tag.to_string()))?;
        MathToken::new(kind, value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_and_parse_agree() {
        for (s, kind) in [("V!a", TokenKind::Variable), ("N!3.5", TokenKind::Number), ("U!eq", TokenKind::Relation)] {
            let t: MathToken = s.parse().unwrap();
            assert_eq!(t.kind(), kind);
            assert_eq!(t.to_string(), s);
        }
    }

    #[test]
    fn rejects_bad_values() {
        assert!(MathToken::new(TokenKind::Variable, "").is_err());
        assert!(MathToken::new(TokenKind::Variable, "a b").is_err());
        assert!(MathToken::new(TokenKind::Variable, "a!b").is_err());
        assert!("Q!a".parse::<MathToken>().is_err());
        assert!("Va".parse::<MathToken>().is_err());
    }

    #[test]
    fn tags_are_distinct() {
        let mut tags: Vec<char> = TokenKind::ALL.iter().map(|k| k.tag()).collect();
        tags.sort_unstable();
        tags.dedup();
        assert_eq!(tags.len(), TokenKind::ALL.len());
    }
}
