//! Text ingestion, word-level tokenization, vocabulary construction,
//! train/dev splitting and batch streaming.

mod batches;
mod tokenize;
mod vocab;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use batches::{Batch, BatchStream};
pub use tokenize::{sentences, tokenize};
pub use vocab::{build_vocab, count_tokens, VocabEntry, Vocabulary, BOS, EOS, NUM_SPECIALS, UNK};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    pub path: PathBuf,
    pub bytes: u64,
}

/// Raw documents in load order, plus where they came from.
#[derive(Debug, Clone, Default)]
pub struct Documents {
    pub docs: Vec<String>,
    pub sources: Vec<SourceFile>,
}

impl Documents {
    /// Loads documents from files and directories. A directory contributes
    /// one document per file (sorted by name); a file is split into
    /// documents at blank lines.
    pub fn load<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        let mut out = Documents::default();
        for p in paths {
            let p = p.as_ref();
            if p.is_dir() {
                let mut files: Vec<PathBuf> = std::fs::read_dir(p)
                    .map_err(|e| Error::io(p, e))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.is_file())
                    .collect();
                files.sort();
                for f in files {
                    let text = crate::io::read_to_string(&f)?;
                    out.sources.push(SourceFile {
                        path: f,
                        bytes: text.len() as u64,
                    });
                    if !text.trim().is_empty() {
                        out.docs.push(text);
                    }
                }
            } else {
                let text = crate::io::read_to_string(p)?;
                out.sources.push(SourceFile {
                    path: p.to_path_buf(),
                    bytes: text.len() as u64,
                });
                out.docs.extend(split_documents(&text));
            }
        }
        Ok(out)
    }

    pub fn from_texts<S: Into<String>>(docs: impl IntoIterator<Item = S>) -> Self {
        Documents {
            docs: docs.into_iter().map(Into::into).collect(),
            sources: Vec::new(),
        }
    }

    /// Index where the dev split begins: the last 1% of documents, at
    /// least one.
    pub fn dev_start(&self) -> Result<usize> {
        let n = self.docs.len();
        if n == 0 {
            return Err(Error::EmptyCorpus);
        }
        if n < 2 {
            return Err(Error::InvalidArgument(
                "need at least 2 documents for a train/dev split".into(),
            ));
        }
        Ok(n - (n / 100).max(1))
    }

    pub fn train_docs(&self) -> Result<&[String]> {
        Ok(&self.docs[..self.dev_start()?])
    }

    pub fn dev_docs(&self) -> Result<&[String]> {
        Ok(&self.docs[self.dev_start()?..])
    }
}

/// Splits a text into blank-line-separated documents.
pub fn split_documents(text: &str) -> Vec<String> {
    let mut docs = Vec::new();
    let mut cur = String::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                docs.push(std::mem::take(&mut cur));
            }
        } else {
            cur.push_str(line);
            cur.push('\n');
        }
    }
    if !cur.is_empty() {
        docs.push(cur);
    }
    docs
}

/// Train and dev token streams, with sentence marks, under one vocabulary.
#[derive(Debug, Clone)]
pub struct TokenizedCorpus {
    pub train: Vec<u32>,
    pub dev: Vec<u32>,
    pub vocab_hash: String,
    pub vocab_size: usize,
    pub source_manifest: Vec<SourceFile>,
}

impl TokenizedCorpus {
    pub fn new(docs: &Documents, vocab: &Vocabulary) -> Result<Self> {
        let encode = |docs: &[String]| {
            let mut ids = Vec::new();
            for d in docs {
                vocab.encode_into(d, true, &mut ids);
            }
            ids
        };
        let train = encode(docs.train_docs()?);
        let dev = encode(docs.dev_docs()?);
        if train.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(TokenizedCorpus {
            train,
            dev,
            vocab_hash: vocab.hash(),
            vocab_size: vocab.len(),
            source_manifest: docs.sources.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blank_lines_separate_documents() {
        let docs = split_documents("a b\nc\n\n\n d e \n\nf");
        assert_eq!(docs, vec!["a b\nc\n", " d e \n", "f\n"]);
    }

    #[test]
    fn dev_split_is_last_percent() {
        let d = Documents::from_texts((0..250).map(|i| format!("w{i}")));
        assert_eq!(d.dev_start().unwrap(), 248);
        let d = Documents::from_texts(["a", "b", "c"]);
        assert_eq!(d.dev_docs().unwrap(), &["c".to_string()]);
        assert!(Documents::from_texts(["a"]).dev_start().is_err());
    }

    #[test]
    fn tokenized_corpus_split_at_document_boundary() {
        let docs = Documents::from_texts(["a b\nb", "c a"]);
        let vocab = build_vocab(docs.train_docs().unwrap().iter().map(String::as_str), 10).unwrap();
        let tc = TokenizedCorpus::new(&docs, &vocab).unwrap();
        let a = vocab.id("a").unwrap();
        let b = vocab.id("b").unwrap();
        assert_eq!(tc.train, vec![BOS, a, b, EOS, BOS, b, EOS]);
        assert_eq!(tc.dev, vec![BOS, UNK, a, EOS]);
        assert!(tc.train.iter().chain(&tc.dev).all(|&i| (i as usize) < vocab.len()));
    }

    #[test]
    fn loads_directory_and_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("b.txt"), "two\n").unwrap();
        std::fs::write(dir.path().join("a.txt"), "one\n").unwrap();
        let multi = dir.path().join("multi.corpus");
        std::fs::write(&multi, "x\n\ny\n").unwrap();
        let sub = dir.path().join("docs");
        std::fs::create_dir(&sub).unwrap();
        std::fs::write(sub.join("1.txt"), "p\n\nq\n").unwrap();
        let d = Documents::load(&[sub.clone(), multi.clone()]).unwrap();
        assert_eq!(d.docs, vec!["p\n\nq\n", "x\n", "y\n"]);
        assert_eq!(d.sources.len(), 2);
        assert_eq!(d.sources[1].bytes, 5);
    }
}
