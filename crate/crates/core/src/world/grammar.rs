use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Category, Color, Half, QuestionSemantics, SizeClass};

/// Type taxonomy used for per-type accuracy and question distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionType {
    Object,
    Color,
    Size,
    Location,
    Other,
}

impl QuestionType {
    pub const ALL: [QuestionType; 5] = [
        QuestionType::Object,
        QuestionType::Color,
        QuestionType::Size,
        QuestionType::Location,
        QuestionType::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QuestionType::Object => "object",
            QuestionType::Color => "color",
            QuestionType::Size => "size",
            QuestionType::Location => "location",
            QuestionType::Other => "other",
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

/// Lowercase, trim, drop trailing `?`, collapse internal whitespace.
pub fn normalize_question(text: &str) -> String {
    let lower = text.trim().to_lowercase();
    let stripped = lower.trim_end_matches(|c: char| c == '?' || c.is_whitespace());
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn tokenize(text: &str) -> Vec<String> {
    normalize_question(text)
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

pub fn parse_question(text: &str) -> QuestionSemantics {
    let norm = normalize_question(text);
    let words: Vec<&str> = norm.split_whitespace().collect();
    match words.as_slice() {
        ["is", "it", "a" | "an", cat] => cat
            .parse::<Category>()
            .map(QuestionSemantics::Category)
            .unwrap_or(QuestionSemantics::Unparseable),
        ["is", "it", "on", "the", half] => half
            .parse::<Half>()
            .map(|half| QuestionSemantics::LocationHalf {
                half,
                category: None,
            })
            .unwrap_or(QuestionSemantics::Unparseable),
        ["is", "it", "the", cat, "on", "the", half @ ("left" | "right")] => {
            match (cat.parse::<Category>(), half.parse::<Half>()) {
                (Ok(c), Ok(h)) => QuestionSemantics::LocationHalf {
                    half: h,
                    category: Some(c),
                },
                _ => QuestionSemantics::Unparseable,
            }
        }
        ["is", "it", word] => {
            if let Ok(c) = word.parse::<Color>() {
                QuestionSemantics::Color(c)
            } else if let Ok(s) = word.parse::<SizeClass>() {
                QuestionSemantics::SizeClass(s)
            } else {
                QuestionSemantics::Unparseable
            }
        }
        _ => QuestionSemantics::Unparseable,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_each_template() {
        assert_eq!(
            parse_question("is it a person?"),
            QuestionSemantics::Category(Category::Person)
        );
        assert_eq!(
            parse_question("Is it on the left?"),
            QuestionSemantics::LocationHalf {
                half: Half::Left,
                category: None
            }
        );
        assert_eq!(
            parse_question("is it red"),
            QuestionSemantics::Color(Color::Red)
        );
        assert_eq!(
            parse_question("is it  large ?"),
            QuestionSemantics::SizeClass(SizeClass::Large)
        );
        assert_eq!(
            parse_question("is it the dog on the right?"),
            QuestionSemantics::LocationHalf {
                half: Half::Right,
                category: Some(Category::Dog)
            }
        );
        assert_eq!(
            parse_question("is it an ball?"),
            QuestionSemantics::Category(Category::Ball)
        );
    }

    #[test]
    fn rejects_off_grammar() {
        assert_eq!(
            parse_question("does it sparkle?"),
            QuestionSemantics::Unparseable
        );
        assert_eq!(
            parse_question("is it a unicorn?"),
            QuestionSemantics::Unparseable
        );
        assert_eq!(
            parse_question("is it the dog on the top?"),
            QuestionSemantics::Unparseable
        );
        assert_eq!(parse_question(""), QuestionSemantics::Unparseable);
    }

    #[test]
    fn canonical_text_round_trips() {
        let all = [
            QuestionSemantics::Category(Category::Chair),
            QuestionSemantics::Color(Color::Pink),
            QuestionSemantics::SizeClass(SizeClass::Small),
            QuestionSemantics::LocationHalf {
                half: Half::Bottom,
                category: None,
            },
            QuestionSemantics::LocationHalf {
                half: Half::Left,
                category: Some(Category::Bus),
            },
        ];
        for q in all {
            assert_eq!(parse_question(&q.text()), q);
        }
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_question("  Is It RED?? "), "is it red");
        assert_eq!(tokenize("is it red?"), vec!["is", "it", "red"]);
    }
}
