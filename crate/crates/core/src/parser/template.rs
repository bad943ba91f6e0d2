//! Deterministic grammar parser for template utterances.
//!
//! ```text
//! <det>? <attr>* <target-class> <relation-phrase> <det>? <attr>* <anchor-class>
//! ```
//!
//! Phrases are matched longest-first, leftmost, against every vocabulary
//! token, so "coffee table" wins over "table" and "next to" over "next".

use std::collections::BTreeMap;

use log::warn;
use nalgebra::DMatrix;

use super::{align::align_word, key_for_family, tokenize, ParseError, ParsedClues, CATEGORY_KEY};
use crate::vocab::{ConceptVocabulary, Family};

/// Words skipped silently when they are not part of a vocabulary phrase.
const STOPWORDS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "which", "who", "is", "are", "it", "its",
    "find", "select", "choose", "pick", "locate", "show", "me", "please", "object", "one", "thing",
    "there", "of", "to", "from", "with", "at", "by", "in", "and", "located", "placed", "sitting",
    "standing", "lying", "set", "positioned",
];

#[derive(Clone, Debug, PartialEq)]
enum Item {
    Class(String),
    Relation(String),
    Attribute(String, String),
}

/// Template parser with an optional embedding fallback for words outside
/// the vocabulary ("sofa" resolving to "couch").
#[derive(Clone, Debug)]
pub struct TemplateParser {
    /// Minimum similarity between the aligned word vector and the nearest
    /// concept for the fallback to accept it.
    pub fallback_threshold: f64,
    /// Softmax temperature of the word alignment.
    pub fallback_temperature: f64,
    /// Word alignment matrix; identity when absent.
    pub alignment: Option<DMatrix<f64>>,
}

impl Default for TemplateParser {
    fn default() -> Self {
        TemplateParser {
            fallback_threshold: 0.6,
            fallback_temperature: 50.0,
            alignment: None,
        }
    }
}

impl TemplateParser {
    pub fn parse(&self, utterance: &str, vocab: &ConceptVocabulary) -> Result<ParsedClues, ParseError> {
        let words = tokenize(utterance);
        if words.is_empty() {
            return Err(ParseError::EmptyUtterance);
        }
        let items = self.segment(&words, vocab);
        let relations: Vec<usize> = items
            .iter()
            .enumerate()
            .filter(|(_, it)| matches!(it, Item::Relation(_)))
            .map(|(i, _)| i)
            .collect();

        if relations.is_empty() {
            let classes: Vec<usize> = items
                .iter()
                .enumerate()
                .filter(|(_, it)| matches!(it, Item::Class(_)))
                .map(|(i, _)| i)
                .collect();
            return match classes.as_slice() {
                [] => Err(ParseError::NoTargetFound),
                [c] => Ok(ParsedClues {
                    target: properties(&items[..=*c], *c),
                    relation: None,
                    anchor: BTreeMap::new(),
                }),
                many => Err(ParseError::AmbiguousParse(
                    many.iter()
                        .map(|&c| ParsedClues {
                            target: properties(&items[..=c], c),
                            relation: None,
                            anchor: BTreeMap::new(),
                        })
                        .collect(),
                )),
            };
        }

        let mut candidates: Vec<ParsedClues> = Vec::new();
        for &r in &relations {
            if let Some(c) = clue_around(&items, r) {
                if !candidates.contains(&c) {
                    candidates.push(c);
                }
            }
        }
        match candidates.len() {
            0 => Err(ParseError::NoTargetFound),
            1 => Ok(candidates.remove(0)),
            _ => Err(ParseError::AmbiguousParse(candidates)),
        }
    }

    fn segment(&self, words: &[String], vocab: &ConceptVocabulary) -> Vec<Item> {
        let phrases: BTreeMap<Vec<&str>, (&str, &Family)> = vocab
            .entries()
            .iter()
            .map(|c| (c.token.split_whitespace().collect(), (c.token.as_str(), &c.family)))
            .collect();
        let longest = phrases.keys().map(Vec::len).max().unwrap_or(1);

        let mut items = Vec::new();
        let mut i = 0;
        while i < words.len() {
            let span = (1..=longest.min(words.len() - i)).rev().find_map(|n| {
                let key: Vec<&str> = words[i..i + n].iter().map(String::as_str).collect();
                phrases.get(&key).map(|hit| (n, *hit))
            });
            match span {
                Some((n, (token, family))) => {
                    items.push(item_for(token, family));
                    i += n;
                }
                None => {
                    let word = &words[i];
                    if !STOPWORDS.contains(&word.as_str()) {
                        match self.fallback(word, vocab) {
                            Some(item) => items.push(item),
                            None => warn!("ignoring unrecognized word {word:?}"),
                        }
                    }
                    i += 1;
                }
            }
        }
        items
    }

    fn fallback(&self, word: &str, vocab: &ConceptVocabulary) -> Option<Item> {
        vocab.word_vector(word)?;
        let aligned = align_word(word, vocab, self.alignment.as_ref(), self.fallback_temperature);
        let (concept, score) = vocab.nearest_concept(&aligned.vector, None).ok()?;
        if score < self.fallback_threshold {
            return None;
        }
        warn!("mapped {word:?} to concept {:?} (similarity {score:.3})", concept.token);
        Some(item_for(&concept.token, &concept.family))
    }
}

fn item_for(token: &str, family: &Family) -> Item {
    match family {
        Family::Category => Item::Class(token.to_string()),
        Family::Relation => Item::Relation(token.to_string()),
        Family::Attribute(name) => Item::Attribute(name.clone(), token.to_string()),
    }
}

/// Category at `class` plus the attributes in `span`; the first token seen
/// for a family wins.
fn properties(span: &[Item], class: usize) -> BTreeMap<String, String> {
    let mut props = BTreeMap::new();
    if let Item::Class(token) = &span[class] {
        props.insert(CATEGORY_KEY.to_string(), token.clone());
    }
    for item in span {
        if let Item::Attribute(family, token) = item {
            let key = key_for_family(&Family::attribute(family.as_str())).unwrap_or_default();
            props.entry(key).or_insert_with(|| token.clone());
        }
    }
    props
}

/// Parse built around the relation at index `r`: the nearest class before it
/// is the target, the first class after it the anchor. Attributes between
/// the previous relation and `r` describe the target, those between `r` and
/// the anchor class describe the anchor.
fn clue_around(items: &[Item], r: usize) -> Option<ParsedClues> {
    let start = items[..r]
        .iter()
        .rposition(|it| matches!(it, Item::Relation(_)))
        .map_or(0, |p| p + 1);
    let target_idx = (start..r).rev().find(|&i| matches!(items[i], Item::Class(_)))?;
    let target = properties(&items[start..r], target_idx - start);

    let end = items[r + 1..]
        .iter()
        .position(|it| matches!(it, Item::Relation(_)))
        .map_or(items.len(), |p| r + 1 + p);
    let anchor = match (r + 1..end).find(|&i| matches!(items[i], Item::Class(_))) {
        Some(a) => properties(&items[r + 1..=a], a - r - 1),
        None => BTreeMap::new(),
    };
    let Item::Relation(rel) = &items[r] else {
        return None;
    };
    Some(ParsedClues {
        target,
        relation: Some(rel.clone()),
        anchor,
    })
}

/// Parses with the default [`TemplateParser`].
pub fn parse_template(utterance: &str, vocab: &ConceptVocabulary) -> Result<ParsedClues, ParseError> {
    TemplateParser::default().parse(utterance, vocab)
}
