//! Text-side registration: phoneme inventory, lexicon G2P, tokenization and
//! fuzzy phoneme groups.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use thiserror::Error;

/// Symbol that must occupy index 0 of every inventory.
pub const BLANK_SYMBOL: &str = "<blk>";

const DEFAULT_INVENTORY: &str = include_str!("../data/inventory.txt");
const DEFAULT_LEXICON: &str = include_str!("../data/lexicon.dict");
const DEFAULT_FUZZY: &str = include_str!("../data/fuzzy.txt");

#[derive(Debug, Error)]
pub enum PhonemeError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("inventory is empty")]
    EmptyInventory,
    #[error("inventory needs at least 2 symbols, found {0}")]
    InventoryTooSmall(usize),
    #[error("first inventory symbol must be {BLANK_SYMBOL}, found {0:?}")]
    MissingBlank(String),
    #[error("duplicate symbol {0:?}")]
    DuplicateSymbol(String),
    #[error("unknown phoneme symbol {symbol:?} (line {line})")]
    UnknownSymbol { symbol: String, line: usize },
    #[error("malformed line {line}: {content:?}")]
    MalformedLine { line: usize, content: String },
    #[error("word {0:?} has an empty pronunciation")]
    EmptyPronunciation(String),
    #[error("OOV: {0}")]
    OovWord(String),
    #[error("text is empty after normalization")]
    EmptyText,
    #[error("phoneme {0:?} appears in more than one fuzzy group")]
    OverlappingGroups(String),
    #[error("blank symbol cannot belong to a fuzzy group (line {0})")]
    BlankInGroup(usize),
    #[error("fuzzy group on line {0} needs at least two symbols")]
    GroupTooSmall(usize),
    #[error("token index {index} is not a non-blank symbol of a {size}-symbol inventory")]
    InvalidToken { index: usize, size: usize },
    #[error("phoneme sequence is empty")]
    EmptySequence,
}

fn read_file(path: &Path) -> Result<String, PhonemeError> {
    fs::read_to_string(path).map_err(|source| PhonemeError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Lines that carry content: trimmed, non-empty, not `#` comments.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Ordered token alphabet shared by the search and the matcher. Blank is
/// always index 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeInventory {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl PhonemeInventory {
    pub fn from_symbols<S: Into<String>>(
        symbols: impl IntoIterator<Item = S>,
    ) -> Result<Self, PhonemeError> {
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        match symbols.first() {
            None => return Err(PhonemeError::EmptyInventory),
            Some(first) if first != BLANK_SYMBOL => {
                return Err(PhonemeError::MissingBlank(first.clone()))
            }
            _ => {}
        }
        if symbols.len() < 2 {
            return Err(PhonemeError::InventoryTooSmall(symbols.len()));
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(PhonemeError::DuplicateSymbol(s.clone()));
            }
        }
        Ok(Self { symbols, index })
    }

    pub fn parse(text: &str) -> Result<Self, PhonemeError> {
        Self::from_symbols(content_lines(text).map(|(_, l)| l.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PhonemeError> {
        Self::parse(&read_file(path.as_ref())?)
    }

    /// The shipped 71-symbol inventory.
    pub fn default_english() -> Self {
        Self::parse(DEFAULT_INVENTORY).expect("shipped inventory is valid")
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn blank_index(&self) -> usize {
        0
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn symbol(&self, index: usize) -> Option<&str> {
        self.symbols.get(index).map(String::as_str)
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    /// Indices of every non-blank symbol.
    pub fn phoneme_indices(&self) -> std::ops::Range<usize> {
        1..self.symbols.len()
    }
}

/// Word to pronunciation dictionary; only the first pronunciation of each
/// word is kept.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashMap<String, Vec<String>>,
}

impl Lexicon {
    /// Parses CMU-dict style text: `WORD  PH1 PH2 ...`. Lines starting with
    /// `;;;` or `#` are comments and `WORD(n)` alternates are skipped.
    pub fn parse(text: &str, inv: &PhonemeInventory) -> Result<Self, PhonemeError> {
        let mut entries = HashMap::new();
        for (line_no, line) in text.lines().enumerate() {
            let line_no = line_no + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with(";;;") || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let word = fields.next().expect("non-empty line has a field");
            if word.ends_with(')') && word.contains('(') {
                continue;
            }
            let phones: Vec<String> = fields.map(str::to_string).collect();
            if phones.is_empty() {
                return Err(PhonemeError::EmptyPronunciation(word.to_string()));
            }
            for p in &phones {
                if inv.index_of(p).is_none_or(|i| i == inv.blank_index()) {
                    return Err(PhonemeError::UnknownSymbol {
                        symbol: p.clone(),
                        line: line_no,
                    });
                }
            }
            entries.entry(word.to_uppercase()).or_insert(phones);
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>, inv: &PhonemeInventory) -> Result<Self, PhonemeError> {
        Self::parse(&read_file(path.as_ref())?, inv)
    }

    /// The shipped fixture dictionary, bound to [`PhonemeInventory::default_english`].
    pub fn default_english() -> Self {
        Self::parse(DEFAULT_LEXICON, &PhonemeInventory::default_english())
            .expect("shipped lexicon is valid")
    }

    /// Adds or replaces an entry after validating it against `inv`.
    pub fn insert(
        &mut self,
        word: &str,
        phones: Vec<String>,
        inv: &PhonemeInventory,
    ) -> Result<(), PhonemeError> {
        if phones.is_empty() {
            return Err(PhonemeError::EmptyPronunciation(word.to_string()));
        }
        for p in &phones {
            if inv.index_of(p).is_none_or(|i| i == inv.blank_index()) {
                return Err(PhonemeError::UnknownSymbol {
                    symbol: p.clone(),
                    line: 0,
                });
            }
        }
        self.entries.insert(word.to_uppercase(), phones);
        Ok(())
    }

    pub fn get(&self, word: &str) -> Option<&[String]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Writes the lexicon in CMU-dict style, words sorted.
    pub fn to_dict_string(&self) -> String {
        let mut words: Vec<_> = self.entries.iter().collect();
        words.sort();
        let mut out = String::new();
        for (w, p) in words {
            out.push_str(w);
            out.push_str("  ");
            out.push_str(&p.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Token indices for a keyword. Never empty, never contains blank.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PhonemeSeq {
    tokens: Vec<usize>,
    source_text: String,
}

impl PhonemeSeq {
    pub fn new(
        tokens: Vec<usize>,
        source_text: impl Into<String>,
        inv: &PhonemeInventory,
    ) -> Result<Self, PhonemeError> {
        if tokens.is_empty() {
            return Err(PhonemeError::EmptySequence);
        }
        if let Some(&bad) = tokens
            .iter()
            .find(|&&t| t == inv.blank_index() || t >= inv.len())
        {
            return Err(PhonemeError::InvalidToken {
                index: bad,
                size: inv.len(),
            });
        }
        Ok(Self {
            tokens,
            source_text: source_text.into(),
        })
    }

    /// Builds a sequence from phoneme symbols, e.g. `["HH", "EY1"]`.
    pub fn from_symbols<S: AsRef<str>>(
        symbols: &[S],
        inv: &PhonemeInventory,
    ) -> Result<Self, PhonemeError> {
        let tokens = symbols
            .iter()
            .map(|s| {
                inv.index_of(s.as_ref())
                    .ok_or_else(|| PhonemeError::UnknownSymbol {
                        symbol: s.as_ref().to_string(),
                        line: 0,
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let text = symbols
            .iter()
            .map(AsRef::as_ref)
            .collect::<Vec<_>>()
            .join(" ");
        Self::new(tokens, text, inv)
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn source_text(&self) -> &str {
        &self.source_text
    }

    pub fn symbols<'a>(&self, inv: &'a PhonemeInventory) -> Vec<&'a str> {
        self.tokens
            .iter()
            .map(|&t| inv.symbol(t).expect("token validated against inventory"))
            .collect()
    }
}

/// Uppercases, strips punctuation (apostrophes inside words survive) and
/// splits on whitespace.
pub fn normalize_words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric() || *c == '\'')
                .collect::<String>()
                .trim_matches('\'')
                .to_uppercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Text to token indices: lexicon lookup per word, then symbol to index.
pub fn tokenize(
    text: &str,
    lex: &Lexicon,
    inv: &PhonemeInventory,
) -> Result<PhonemeSeq, PhonemeError> {
    let words = normalize_words(text);
    if words.is_empty() {
        return Err(PhonemeError::EmptyText);
    }
    let mut tokens = Vec::new();
    for word in &words {
        let phones = lex
            .get(word)
            .ok_or_else(|| PhonemeError::OovWord(word.clone()))?;
        for p in phones {
            let idx = inv.index_of(p).ok_or_else(|| PhonemeError::UnknownSymbol {
                symbol: p.clone(),
                line: 0,
            })?;
            tokens.push(idx);
        }
    }
    PhonemeSeq::new(tokens, text, inv)
}

/// Disjoint groups of confusable phonemes. Every phoneme not listed forms
/// its own singleton set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FuzzyMap {
    groups: Vec<Vec<usize>>,
    members: Vec<Vec<usize>>,
}

impl FuzzyMap {
    pub fn identity(inv: &PhonemeInventory) -> Self {
        Self {
            groups: Vec::new(),
            members: (0..inv.len()).map(|p| vec![p]).collect(),
        }
    }

    pub fn from_groups(
        groups: Vec<Vec<usize>>,
        inv: &PhonemeInventory,
    ) -> Result<Self, PhonemeError> {
        let mut members: Vec<Vec<usize>> = (0..inv.len()).map(|p| vec![p]).collect();
        let mut seen = vec![false; inv.len()];
        let mut normalized = Vec::with_capacity(groups.len());
        for (gi, group) in groups.into_iter().enumerate() {
            let set: BTreeSet<usize> = group.into_iter().collect();
            if set.len() < 2 {
                return Err(PhonemeError::GroupTooSmall(gi + 1));
            }
            for &p in &set {
                if p >= inv.len() {
                    return Err(PhonemeError::InvalidToken {
                        index: p,
                        size: inv.len(),
                    });
                }
                if p == inv.blank_index() {
                    return Err(PhonemeError::BlankInGroup(gi + 1));
                }
                if seen[p] {
                    return Err(PhonemeError::OverlappingGroups(
                        inv.symbol(p).unwrap_or_default().to_string(),
                    ));
                }
                seen[p] = true;
            }
            let set: Vec<usize> = set.into_iter().collect();
            for &p in &set {
                members[p] = set.clone();
            }
            normalized.push(set);
        }
        Ok(Self {
            groups: normalized,
            members,
        })
    }

    pub fn parse(text: &str, inv: &PhonemeInventory) -> Result<Self, PhonemeError> {
        let mut groups = Vec::new();
        for (line_no, line) in content_lines(text) {
            let mut group = Vec::new();
            for sym in line.split_whitespace() {
                let idx = inv
                    .index_of(sym)
                    .ok_or_else(|| PhonemeError::UnknownSymbol {
                        symbol: sym.to_string(),
                        line: line_no,
                    })?;
                if idx == inv.blank_index() {
                    return Err(PhonemeError::BlankInGroup(line_no));
                }
                group.push(idx);
            }
            if group.len() < 2 {
                return Err(PhonemeError::GroupTooSmall(line_no));
            }
            groups.push(group);
        }
        Self::from_groups(groups, inv)
    }

    pub fn load(path: impl AsRef<Path>, inv: &PhonemeInventory) -> Result<Self, PhonemeError> {
        Self::parse(&read_file(path.as_ref())?, inv)
    }

    /// The shipped default groups (AY1/EY1).
    pub fn default_english() -> Self {
        Self::parse(DEFAULT_FUZZY, &PhonemeInventory::default_english())
            .expect("shipped fuzzy map is valid")
    }

    /// Sorted members of the group containing `phoneme` (itself when ungrouped).
    pub fn fuzzy_set(&self, phoneme: usize) -> &[usize] {
        &self.members[phoneme]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn vocab_size(&self) -> usize {
        self.members.len()
    }

    /// One group per line, in the format [`FuzzyMap::parse`] reads.
    pub fn to_text(&self, inv: &PhonemeInventory) -> String {
        self.groups
            .iter()
            .map(|g| {
                let syms: Vec<&str> = g.iter().filter_map(|&p| inv.symbol(p)).collect();
                syms.join(" ") + "\n"
            })
            .collect()
    }
}
