//! Coarse part-of-speech tagging.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PosTag {
    NN,
    NNS,
    VB,
    VBD,
    VBZ,
    VBP,
    VBN,
    JJ,
    JJS,
    JJR,
    RB,
    IN,
    DT,
    PRP,
    CD,
    OTHER,
}

impl PosTag {
    pub const ALL: [PosTag; 16] = [
        PosTag::NN,
        PosTag::NNS,
        PosTag::VB,
        PosTag::VBD,
        PosTag::VBZ,
        PosTag::VBP,
        PosTag::VBN,
        PosTag::JJ,
        PosTag::JJS,
        PosTag::JJR,
        PosTag::RB,
        PosTag::IN,
        PosTag::DT,
        PosTag::PRP,
        PosTag::CD,
        PosTag::OTHER,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::NN => "NN",
            PosTag::NNS => "NNS",
            PosTag::VB => "VB",
            PosTag::VBD => "VBD",
            PosTag::VBZ => "VBZ",
            PosTag::VBP => "VBP",
            PosTag::VBN => "VBN",
            PosTag::JJ => "JJ",
            PosTag::JJS => "JJS",
            PosTag::JJR => "JJR",
            PosTag::RB => "RB",
            PosTag::IN => "IN",
            PosTag::DT => "DT",
            PosTag::PRP => "PRP",
            PosTag::CD => "CD",
            PosTag::OTHER => "OTHER",
        }
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PosTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PosTag::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown POS tag {s:?}"))
    }
}

/// Anything that assigns exactly one tag per token.
pub trait PosTagger {
    fn tag(&self, tokens: &[&str]) -> Vec<PosTag>;
}

const LEXICON: &[(&str, PosTag)] = &[
    ("the", PosTag::DT),
    ("a", PosTag::DT),
    ("an", PosTag::DT),
    ("this", PosTag::DT),
    ("that", PosTag::DT),
    ("these", PosTag::DT),
    ("those", PosTag::DT),
    ("every", PosTag::DT),
    ("each", PosTag::DT),
    ("some", PosTag::DT),
    ("any", PosTag::DT),
    ("no", PosTag::DT),
    ("all", PosTag::DT),
    ("both", PosTag::DT),
    ("another", PosTag::DT),
    ("in", PosTag::IN),
    ("on", PosTag::IN),
    ("at", PosTag::IN),
    ("of", PosTag::IN),
    ("for", PosTag::IN),
    ("with", PosTag::IN),
    ("by", PosTag::IN),
    ("from", PosTag::IN),
    ("to", PosTag::IN),
    ("about", PosTag::IN),
    ("into", PosTag::IN),
    ("over", PosTag::IN),
    ("under", PosTag::IN),
    ("after", PosTag::IN),
    ("before", PosTag::IN),
    ("between", PosTag::IN),
    ("through", PosTag::IN),
    ("during", PosTag::IN),
    ("without", PosTag::IN),
    ("within", PosTag::IN),
    ("than", PosTag::IN),
    ("like", PosTag::IN),
    ("as", PosTag::IN),
    ("because", PosTag::IN),
    ("if", PosTag::IN),
    ("while", PosTag::IN),
    ("since", PosTag::IN),
    ("until", PosTag::IN),
    ("i", PosTag::PRP),
    ("you", PosTag::PRP),
    ("he", PosTag::PRP),
    ("she", PosTag::PRP),
    ("it", PosTag::PRP),
    ("we", PosTag::PRP),
    ("they", PosTag::PRP),
    ("me", PosTag::PRP),
    ("him", PosTag::PRP),
    ("her", PosTag::PRP),
    ("us", PosTag::PRP),
    ("them", PosTag::PRP),
    ("my", PosTag::PRP),
    ("your", PosTag::PRP),
    ("his", PosTag::PRP),
    ("its", PosTag::PRP),
    ("our", PosTag::PRP),
    ("their", PosTag::PRP),
    ("is", PosTag::VBZ),
    ("has", PosTag::VBZ),
    ("does", PosTag::VBZ),
    ("works", PosTag::VBZ),
    ("are", PosTag::VBP),
    ("am", PosTag::VBP),
    ("have", PosTag::VBP),
    ("do", PosTag::VBP),
    ("was", PosTag::VBD),
    ("were", PosTag::VBD),
    ("had", PosTag::VBD),
    ("did", PosTag::VBD),
    ("bought", PosTag::VBD),
    ("got", PosTag::VBD),
    ("be", PosTag::VB),
    ("get", PosTag::VB),
    ("buy", PosTag::VB),
    ("use", PosTag::VB),
    ("make", PosTag::VB),
    ("recommend", PosTag::VB),
    ("love", PosTag::VB),
    ("been", PosTag::VBN),
    ("made", PosTag::VBN),
    ("done", PosTag::VBN),
    ("gone", PosTag::VBN),
    ("not", PosTag::RB),
    ("n't", PosTag::RB),
    ("very", PosTag::RB),
    ("too", PosTag::RB),
    ("so", PosTag::RB),
    ("also", PosTag::RB),
    ("just", PosTag::RB),
    ("still", PosTag::RB),
    ("always", PosTag::RB),
    ("never", PosTag::RB),
    ("well", PosTag::RB),
    ("quite", PosTag::RB),
    ("pretty", PosTag::RB),
    ("good", PosTag::JJ),
    ("great", PosTag::JJ),
    ("bad", PosTag::JJ),
    ("nice", PosTag::JJ),
    ("cheap", PosTag::JJ),
    ("poor", PosTag::JJ),
    ("better", PosTag::JJR),
    ("worse", PosTag::JJR),
    ("bigger", PosTag::JJR),
    ("smaller", PosTag::JJR),
    ("best", PosTag::JJS),
    ("worst", PosTag::JJS),
    ("one", PosTag::CD),
    ("two", PosTag::CD),
    ("three", PosTag::CD),
    ("four", PosTag::CD),
    ("five", PosTag::CD),
    ("ten", PosTag::CD),
];

/// Suffix rules, checked in order after the lexicon. A rule only fires if
/// the stem left after removing the suffix has at least two characters.
const SUFFIXES: &[(&str, PosTag)] = &[
    ("ly", PosTag::RB),
    ("est", PosTag::JJS),
    ("ing", PosTag::VB),
    ("ed", PosTag::VBD),
    ("ous", PosTag::JJ),
    ("ful", PosTag::JJ),
    ("ive", PosTag::JJ),
    ("able", PosTag::JJ),
    ("ible", PosTag::JJ),
    ("less", PosTag::JJ),
    ("ic", PosTag::JJ),
];

/// Lexicon lookup, then suffix rules, then `NN`. Overrides (for example a
/// gold-tag lexicon) take precedence over everything.
#[derive(Debug, Clone, Default)]
pub struct RuleTagger {
    overrides: HashMap<String, PosTag>,
}

impl RuleTagger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_overrides<I: IntoIterator<Item = (String, PosTag)>>(overrides: I) -> Self {
        RuleTagger {
            overrides: overrides.into_iter().collect(),
        }
    }

    pub fn tag_word(&self, word: &str) -> PosTag {
        if let Some(&t) = self.overrides.get(word) {
            return t;
        }
        if let Some(&(_, t)) = LEXICON.iter().find(|(w, _)| *w == word) {
            return t;
        }
        if word.chars().all(|c| !c.is_alphanumeric()) {
            return PosTag::OTHER;
        }
        if word.chars().all(|c| c.is_ascii_digit() || c == '.' || c == ',')
            && word.chars().any(|c| c.is_ascii_digit())
        {
            return PosTag::CD;
        }
        let n = word.chars().count();
        for &(suffix, tag) in SUFFIXES {
            if word.ends_with(suffix) && n >= suffix.len() + 2 {
                return tag;
            }
        }
        if word.ends_with('s')
            && n >= 3
            && !word.ends_with("ss")
            && !word.ends_with("us")
            && !word.ends_with("is")
        {
            return PosTag::NNS;
        }
        PosTag::NN
    }
}

impl PosTagger for RuleTagger {
    fn tag(&self, tokens: &[&str]) -> Vec<PosTag> {
        tokens.iter().map(|t| self.tag_word(t)).collect()
    }
}
