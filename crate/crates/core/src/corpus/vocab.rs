use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenize::{sentences, tokenize};
use crate::error::{Error, Result};
use crate::hash::sha256_hex;

pub const UNK: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const NUM_SPECIALS: usize = 3;

const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["<unk>", "<s>", "</s>"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub token: String,
    pub count: u64,
}

/// Frequency-ranked token/id map. Ids `0..3` are `<unk>`, `<s>`, `</s>`;
/// the rest are sorted by descending count, ties lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    entries: Vec<VocabEntry>,
    index: HashMap<String, u32>,
}

/// Counts word tokens over a stream of documents.
pub fn count_tokens<'a, I>(docs: I) -> HashMap<String, u64>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut counts: HashMap<String, u64> = HashMap::new();
    for doc in docs {
        for tok in tokenize(doc) {
            match counts.get_mut(tok) {
                Some(c) => *c += 1,
                None => {
                    counts.insert(tok.to_string(), 1);
                }
            }
        }
    }
    counts
}

/// Builds a vocabulary of at most `size` entries (specials included).
pub fn build_vocab<'a, I>(docs: I, size: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a str>,
{
    if size < NUM_SPECIALS + 1 {
        return Err(Error::InvalidArgument(format!(
            "vocabulary size {size} leaves no room beside the {NUM_SPECIALS} specials"
        )));
    }
    let counts = count_tokens(docs);
    if counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(Vocabulary::from_counts(counts, size))
}

impl Vocabulary {
    pub fn from_counts(counts: HashMap<String, u64>, size: usize) -> Self {
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(size.saturating_sub(NUM_SPECIALS));

        let entries = SPECIAL_TOKENS
            .iter()
            .map(|t| VocabEntry {
                token: t.to_string(),
                count: 0,
            })
            .chain(
                ranked
                    .into_iter()
                    .map(|(token, count)| VocabEntry { token, count }),
            )
            .collect();
        Self::from_entries(entries)
    }

    fn from_entries(entries: Vec<VocabEntry>) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.token.clone(), i as u32))
            .collect();
        Vocabulary { entries, index }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.entries.get(id as usize).map(|e| e.token.as_str())
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < NUM_SPECIALS
    }

    /// Maps text to ids. With `sentence_marks`, every non-empty line is
    /// framed as `<s> ... </s>`.
    pub fn encode(&self, text: &str, sentence_marks: bool) -> Vec<u32> {
        let mut out = Vec::new();
        self.encode_into(text, sentence_marks, &mut out);
        out
    }

    pub fn encode_into(&self, text: &str, sentence_marks: bool, out: &mut Vec<u32>) {
        if sentence_marks {
            for line in sentences(text) {
                out.push(BOS);
                out.extend(tokenize(line).into_iter().map(|t| self.id_or_unk(t)));
                out.push(EOS);
            }
        } else {
            out.extend(tokenize(text).into_iter().map(|t| self.id_or_unk(t)));
        }
    }

    pub fn decode(&self, ids: &[u32]) -> String {
        let mut s = String::new();
        for (i, &id) in ids.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            s.push_str(self.token(id).unwrap_or("<unk>"));
        }
        s
    }

    /// Line-oriented `token<TAB>id<TAB>count`, specials first.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (i, e) in self.entries.iter().enumerate() {
            let _ = writeln!(s, "{}\t{}\t{}", e.token, i, e.count);
        }
        s
    }

    pub fn from_tsv(text: &str, path: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(parse_err(lineno, "expected token<TAB>id<TAB>count".into()));
            }
            let id: usize = fields[1]
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad id {:?}", fields[1])))?;
            let count: u64 = fields[2]
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad count {:?}", fields[2])))?;
            if id != entries.len() {
                return Err(parse_err(lineno, format!("id {id} out of sequence")));
            }
            entries.push(VocabEntry {
                token: fields[0].to_string(),
                count,
            });
        }
        if entries.len() < NUM_SPECIALS
            || entries
                .iter()
                .zip(SPECIAL_TOKENS)
                .any(|(e, s)| e.token != s)
        {
            return Err(parse_err(1, "vocabulary must start with the specials".into()));
        }
        Ok(Self::from_entries(entries))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_tsv().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text, path)
    }

    /// Digest of the persisted form; identifies tokenization across artifacts.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_tsv().as_bytes())
    }
}
