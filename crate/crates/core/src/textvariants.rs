//! The four textual views of a standardized post.
//!
//! `Original` keeps the text; `Tag` masks hashtags with the literal `TAG`;
//! `Miss` deletes hashtags; `Structure` reduces every token to T (hashtag),
//! U (the URL sentinel), or W (anything else).

use serde::{Deserialize, Serialize};

use crate::corpus::{is_hashtag_token, URL_SENTINEL};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantKind {
    Original,
    Tag,
    Miss,
    Structure,
}

impl VariantKind {
    pub const ALL: [VariantKind; 4] =
        [VariantKind::Original, VariantKind::Tag, VariantKind::Miss, VariantKind::Structure];

    pub fn as_str(&self) -> &'static str {
        match self {
            VariantKind::Original => "original",
            VariantKind::Tag => "tag",
            VariantKind::Miss => "miss",
            VariantKind::Structure => "structure",
        }
    }

    pub fn parse(s: &str) -> Result<VariantKind> {
        match s.to_ascii_lowercase().as_str() {
            "original" => Ok(VariantKind::Original),
            "tag" => Ok(VariantKind::Tag),
            "miss" => Ok(VariantKind::Miss),
            "structure" => Ok(VariantKind::Structure),
            other => Err(Error::Config(format!("unknown text variant '{other}'"))),
        }
    }
}

/// Apply one variant to an already-standardized text. Tokenization is plain
/// whitespace splitting; punctuation never splits a token.
pub fn apply_variant(std_text: &str, kind: VariantKind) -> String {
    match kind {
        VariantKind::Original => std_text.to_string(),
        VariantKind::Tag => std_text
            .split_whitespace()
            .map(|t| if is_hashtag_token(t) { "TAG" } else { t })
            .collect::<Vec<_>>()
            .join(" "),
        VariantKind::Miss => std_text
            .split_whitespace()
            .filter(|t| !is_hashtag_token(t))
            .collect::<Vec<_>>()
            .join(" "),
        VariantKind::Structure => std_text
            .split_whitespace()
            .map(|t| {
                if is_hashtag_token(t) {
                    "T"
                } else if t == URL_SENTINEL {
                    "U"
                } else {
                    "W"
                }
            })
            .collect::<Vec<_>>()
            .join(" "),
    }
}
