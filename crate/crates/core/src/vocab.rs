//! Semantic concept vocabulary: category, attribute and relation concepts
//! embedded in a shared d-dimensional space.
//!
//! A vocabulary is assembled from a JSON manifest that assigns every token to
//! a family, plus a GloVe-format text table of word vectors. Multi-word tokens
//! ("next to") resolve to an underscore-joined row (`next_to`) when the table
//! has one, otherwise to the mean of their word vectors.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{self, Embedding};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";

const BUILTIN_MANIFEST: &str = include_str!("../data/vocab/manifest.json");
const BUILTIN_EMBEDDINGS: &str = include_str!("../data/vocab/embeddings.txt");

/// Unit-normalization is skipped for vectors already this close to unit norm,
/// so that load -> serialize -> load is bit-exact.
const UNIT_NORM_SLACK: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("no embedding for concept token {0:?}")]
    MissingEmbedding(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("duplicate concept token {0:?}")]
    DuplicateToken(String),
    #[error("family {0} has no concepts")]
    EmptyFamily(String),
    #[error("vocabulary has no concepts to search")]
    EmptyVocabulary,
    #[error("unknown concept family {0:?}")]
    UnknownFamily(String),
    #[error("non-finite value in embedding for {0:?}")]
    NonFinite(String),
    #[error("embedding table line {line}: {message}")]
    Table { line: usize, message: String },
    #[error("invalid manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which partition of the vocabulary a concept belongs to.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Category,
    Relation,
    Attribute(String),
}

impl Family {
    pub fn attribute(name: impl Into<String>) -> Self {
        Family::Attribute(name.into())
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Category => f.write_str("category"),
            Family::Relation => f.write_str("relation"),
            Family::Attribute(name) => write!(f, "attr:{name}"),
        }
    }
}

impl FromStr for Family {
    type Err = VocabError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "category" => Ok(Family::Category),
            "relation" => Ok(Family::Relation),
            _ => match s.strip_prefix("attr:") {
                Some(name) if !name.is_empty() => Ok(Family::Attribute(name.to_string())),
                _ => Err(VocabError::UnknownFamily(s.to_string())),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Concept {
    pub token: String,
    pub family: Family,
    pub embedding: Embedding,
}

#[derive(Clone, Copy, Debug)]
pub struct VocabConfig {
    /// Scale every concept and word vector to unit Euclidean norm.
    pub normalize: bool,
}

impl Default for VocabConfig {
    fn default() -> Self {
        Self { normalize: true }
    }
}

/// On-disk concept manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptManifest {
    pub dim: usize,
    pub families: BTreeMap<String, Vec<String>>,
    /// Table row used as the no-content concept in soft word alignment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null_concept: Option<String>,
}

impl ConceptManifest {
    pub fn from_json(text: &str) -> Result<Self, VocabError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// GloVe-format word vector table: `token v1 v2 ... vd` per line.
#[derive(Clone, Debug, Default)]
pub struct EmbeddingTable {
    dim: Option<usize>,
    vectors: HashMap<String, Embedding>,
}

impl EmbeddingTable {
    pub fn parse(text: &str) -> Result<Self, VocabError> {
        Self::from_reader(text.as_bytes())
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, VocabError> {
        let mut table = EmbeddingTable::default();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else {
                continue;
            };
            let vector = fields
                .map(|f| {
                    f.parse::<f64>().map_err(|e| VocabError::Table {
                        line: lineno,
                        message: format!("{f:?}: {e}"),
                    })
                })
                .collect::<Result<Embedding, _>>()?;
            if vector.is_empty() {
                return Err(VocabError::Table {
                    line: lineno,
                    message: format!("token {token:?} has no components"),
                });
            }
            if !embedding::all_finite(&vector) {
                return Err(VocabError::NonFinite(token.to_string()));
            }
            match table.dim {
                Some(d) if d != vector.len() => {
                    return Err(VocabError::DimensionMismatch {
                        expected: d,
                        found: vector.len(),
                    })
                }
                None => table.dim = Some(vector.len()),
                _ => {}
            }
            // GloVe files occasionally repeat a token; the first row wins.
            table.vectors.entry(token.to_string()).or_insert(vector);
        }
        Ok(table)
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&Embedding> {
        self.vectors.get(word)
    }

    /// Resolves a possibly multi-word token: exact row, then the
    /// underscore-joined row, then the mean of the constituent words.
    pub fn resolve(&self, token: &str) -> Option<Embedding> {
        if let Some(v) = self.vectors.get(token) {
            return Some(v.clone());
        }
        let words: Vec<&str> = token.split_whitespace().collect();
        if words.len() > 1 {
            if let Some(v) = self.vectors.get(&words.join("_")) {
                return Some(v.clone());
            }
            let parts = words
                .iter()
                .map(|w| self.vectors.get(*w).map(Vec::as_slice))
                .collect::<Option<Vec<_>>>()?;
            return embedding::mean(parts);
        }
        None
    }
}

#[derive(Clone, Debug)]
pub struct ConceptVocabulary {
    dim: usize,
    entries: Vec<Concept>,
    families: Vec<Family>,
    index: HashMap<String, usize>,
    null_concept: Option<Embedding>,
    words: HashMap<String, Embedding>,
    normalized: bool,
}

fn normalize_in_place(v: &mut [f64]) {
    let n = embedding::norm(v);
    if n > 0.0 && (n - 1.0).abs() > UNIT_NORM_SLACK {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Builds and validates a vocabulary from a manifest and a word-vector table.
pub fn load_vocabulary(
    manifest: &ConceptManifest,
    table: &EmbeddingTable,
    config: VocabConfig,
) -> Result<ConceptVocabulary, VocabError> {
    if let Some(d) = table.dim() {
        if d != manifest.dim {
            return Err(VocabError::DimensionMismatch {
                expected: manifest.dim,
                found: d,
            });
        }
    }
    let mut concepts = Vec::new();
    for (family_name, tokens) in &manifest.families {
        let family: Family = family_name.parse()?;
        if tokens.is_empty() {
            return Err(VocabError::EmptyFamily(family.to_string()));
        }
        for token in tokens {
            let embedding = table
                .resolve(token)
                .ok_or_else(|| VocabError::MissingEmbedding(token.clone()))?;
            concepts.push(Concept {
                token: token.clone(),
                family: family.clone(),
                embedding,
            });
        }
    }
    let null_concept = match &manifest.null_concept {
        Some(token) => Some(
            table
                .resolve(token)
                .ok_or_else(|| VocabError::MissingEmbedding(token.clone()))?,
        ),
        None => None,
    };
    let mut vocab = ConceptVocabulary::from_concepts(manifest.dim, concepts, null_concept, config)?;
    let mut words = table.vectors.clone();
    if config.normalize {
        words.values_mut().for_each(|v| normalize_in_place(v));
    }
    vocab.words = words;
    Ok(vocab)
}

impl ConceptVocabulary {
    /// Validates a concept list directly. Requires non-empty category and
    /// relation families.
    pub fn from_concepts(
        dim: usize,
        mut entries: Vec<Concept>,
        null_concept: Option<Embedding>,
        config: VocabConfig,
    ) -> Result<Self, VocabError> {
        if dim == 0 {
            return Err(VocabError::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        let mut index = HashMap::with_capacity(entries.len());
        let mut families: Vec<Family> = Vec::new();
        for (i, c) in entries.iter_mut().enumerate() {
            if c.token.trim().is_empty() {
                return Err(VocabError::MissingEmbedding(c.token.clone()));
            }
            if c.embedding.len() != dim {
                return Err(VocabError::DimensionMismatch {
                    expected: dim,
                    found: c.embedding.len(),
                });
            }
            if !embedding::all_finite(&c.embedding) {
                return Err(VocabError::NonFinite(c.token.clone()));
            }
            if config.normalize {
                normalize_in_place(&mut c.embedding);
            }
            if index.insert(c.token.clone(), i).is_some() {
                return Err(VocabError::DuplicateToken(c.token.clone()));
            }
            if !families.contains(&c.family) {
                families.push(c.family.clone());
            }
        }
        for required in [Family::Category, Family::Relation] {
            if !families.contains(&required) {
                return Err(VocabError::EmptyFamily(required.to_string()));
            }
        }
        families.sort();
        let null_concept = match null_concept {
            Some(mut v) => {
                if v.len() != dim {
                    return Err(VocabError::DimensionMismatch {
                        expected: dim,
                        found: v.len(),
                    });
                }
                if config.normalize {
                    normalize_in_place(&mut v);
                }
                Some(v)
            }
            None => None,
        };
        Ok(Self {
            dim,
            entries,
            families,
            index,
            null_concept,
            words: HashMap::new(),
            normalized: config.normalize,
        })
    }

    /// The vocabulary shipped with the crate: one-hot embeddings over a small
    /// indoor-scene concept set (20 categories, 10 relations, 9 attribute
    /// families).
    pub fn builtin() -> Self {
        let manifest = ConceptManifest::from_json(BUILTIN_MANIFEST).expect("builtin manifest");
        let table = EmbeddingTable::parse(BUILTIN_EMBEDDINGS).expect("builtin embeddings");
        load_vocabulary(&manifest, &table, VocabConfig::default()).expect("builtin vocabulary")
    }

    /// Loads `manifest.json` and `embeddings.txt` from a directory.
    pub fn load_dir(dir: &Path, config: VocabConfig) -> Result<Self, VocabError> {
        let manifest = ConceptManifest::from_json(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        let file = std::fs::File::open(dir.join(EMBEDDINGS_FILE))?;
        let table = EmbeddingTable::from_reader(std::io::BufReader::new(file))?;
        load_vocabulary(&manifest, &table, config)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn entries(&self) -> &[Concept] {
        &self.entries
    }

    /// Families in sorted order (attributes first, then category, relation).
    pub fn families(&self) -> &[Family] {
        &self.families
    }

    pub fn has_family(&self, family: &Family) -> bool {
        self.families.contains(family)
    }

    pub fn null_concept(&self) -> Option<&Embedding> {
        self.null_concept.as_ref()
    }

    pub fn get(&self, token: &str) -> Option<&Concept> {
        self.index.get(token).map(|&i| &self.entries[i])
    }

    pub fn embedding(&self, token: &str) -> Option<&Embedding> {
        self.get(token).map(|c| &c.embedding)
    }

    pub fn family_of(&self, token: &str) -> Option<&Family> {
        self.get(token).map(|c| &c.family)
    }

    pub fn concepts_in<'a>(&'a self, family: &'a Family) -> impl Iterator<Item = &'a Concept> + 'a {
        self.entries.iter().filter(move |c| &c.family == family)
    }

    pub fn tokens_in(&self, family: &Family) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|c| &c.family == family)
            .map(|c| c.token.as_str())
            .collect()
    }

    pub fn categories(&self) -> Vec<&str> {
        self.tokens_in(&Family::Category)
    }

    /// Word vector for an arbitrary (possibly multi-word) surface string.
    /// Concept tokens resolve to their concept embedding.
    pub fn word_vector(&self, word: &str) -> Option<Embedding> {
        if let Some(c) = self.get(word) {
            return Some(c.embedding.clone());
        }
        if let Some(v) = self.words.get(word) {
            return Some(v.clone());
        }
        let words: Vec<&str> = word.split_whitespace().collect();
        if words.len() > 1 {
            if let Some(v) = self.words.get(&words.join("_")) {
                return Some(v.clone());
            }
            let parts = words
                .iter()
                .map(|w| self.words.get(*w).map(Vec::as_slice))
                .collect::<Option<Vec<_>>>()?;
            return embedding::mean(parts);
        }
        None
    }

    /// Returns the concept maximizing similarity with `query`, optionally
    /// restricted to one family. Equal scores resolve to the smaller token.
    pub fn nearest_concept(
        &self,
        query: &[f64],
        family: Option<&Family>,
    ) -> Result<(&Concept, f64), VocabError> {
        if query.len() != self.dim {
            return Err(VocabError::DimensionMismatch {
                expected: self.dim,
                found: query.len(),
            });
        }
        if let Some(f) = family {
            if !self.has_family(f) {
                return Err(VocabError::UnknownFamily(f.to_string()));
            }
        }
        let mut best: Option<(&Concept, f64)> = None;
        for c in self
            .entries
            .iter()
            .filter(|c| family.is_none_or(|f| &c.family == f))
        {
            let score = embedding::dot(query, &c.embedding);
            best = match best {
                None => Some((c, score)),
                Some((b, bs)) if score > bs || (score == bs && c.token < b.token) => Some((c, score)),
                keep => keep,
            };
        }
        best.ok_or(VocabError::EmptyVocabulary)
    }

    pub fn to_manifest(&self) -> ConceptManifest {
        let mut families: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for c in &self.entries {
            families
                .entry(c.family.to_string())
                .or_default()
                .push(c.token.clone());
        }
        ConceptManifest {
            dim: self.dim,
            families,
            null_concept: self.null_concept.as_ref().map(|_| NULL_CONCEPT_ROW.to_string()),
        }
    }

    /// Writes the concept embeddings (and the null concept, if any) as a
    /// GloVe-format table. Multi-word tokens are written underscore-joined.
    pub fn write_embeddings<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut write_row = |token: &str, v: &[f64]| -> std::io::Result<()> {
            out.write_all(token.replace(' ', "_").as_bytes())?;
            for x in v {
                write!(out, " {x}")?;
            }
            out.write_all(b"\n")
        };
        for c in &self.entries {
            write_row(&c.token, &c.embedding)?;
        }
        if let Some(v) = &self.null_concept {
            write_row(NULL_CONCEPT_ROW, v)?;
        }
        Ok(())
    }

    pub fn save_dir(&self, dir: &Path) -> Result<(), VocabError> {
        std::fs::create_dir_all(dir)?;
        let manifest = serde_json::to_string_pretty(&self.to_manifest())?;
        std::fs::write(dir.join(MANIFEST_FILE), manifest)?;
        let file = std::fs::File::create(dir.join(EMBEDDINGS_FILE))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_embeddings(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

const NULL_CONCEPT_ROW: &str = "<null>";

/// Dot-product similarity; equals cosine similarity for unit vectors.
pub fn similarity(a: &[f64], b: &[f64]) -> Result<f64, VocabError> {
    if a.len() != b.len() {
        return Err(VocabError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(embedding::dot(a, b))
}

/// One-hot vocabulary over the given families: concept i gets basis vector
/// e_i, in the order given. Handy for exact symbolic behaviour in tests.
pub fn one_hot_vocabulary(families: &[(Family, &[&str])]) -> Result<ConceptVocabulary, VocabError> {
    let dim: usize = families.iter().map(|(_, t)| t.len()).sum();
    let mut concepts = Vec::with_capacity(dim);
    let mut i = 0;
    for (family, tokens) in families {
        if tokens.is_empty() {
            return Err(VocabError::EmptyFamily(family.to_string()));
        }
        for t in tokens.iter() {
            let mut e = embedding::zeros(dim);
            e[i] = 1.0;
            i += 1;
            concepts.push(Concept {
                token: t.to_string(),
                family: family.clone(),
                embedding: e,
            });
        }
    }
    ConceptVocabulary::from_concepts(dim, concepts, None, VocabConfig::default())
}
