use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::io::{read_to_string, write_atomic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalPair {
    pub pair_id: u32,
    pub sentence_good: String,
    pub sentence_bad: String,
    /// Syntactic depth of the good sentence, when annotated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Challenge {
    pub uid: String,
    /// Super-phenomenon.
    pub linguistics_term: String,
    pub field: String,
    pub pairs: Vec<MinimalPair>,
}

/// Challenges sorted by uid, pairs by pair id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChallengeSuite {
    pub challenges: Vec<Challenge>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteFormat {
    BlimpJsonl,
    /// BLIMP layout plus a required `depth` annotation on every line.
    Synthetic,
}

impl ChallengeSuite {
    pub fn new(mut challenges: Vec<Challenge>) -> Result<Self> {
        challenges.sort_by(|a, b| a.uid.cmp(&b.uid));
        for w in challenges.windows(2) {
            if w[0].uid == w[1].uid {
                return Err(Error::DuplicateChallenge(w[0].uid.clone()));
            }
        }
        for c in &mut challenges {
            if c.pairs.is_empty() {
                return Err(Error::InvalidArgument(format!("challenge {} has no pairs", c.uid)));
            }
            c.pairs.sort_by_key(|p| p.pair_id);
            if let Some(w) = c.pairs.windows(2).find(|w| w[0].pair_id == w[1].pair_id) {
                return Err(Error::InvalidArgument(format!(
                    "challenge {}: duplicate pair id {}",
                    c.uid, w[0].pair_id
                )));
            }
        }
        Ok(ChallengeSuite { challenges })
    }

    pub fn len(&self) -> usize {
        self.challenges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.challenges.is_empty()
    }

    pub fn num_pairs(&self) -> usize {
        self.challenges.iter().map(|c| c.pairs.len()).sum()
    }

    pub fn uids(&self) -> Vec<&str> {
        self.challenges.iter().map(|c| c.uid.as_str()).collect()
    }

    pub fn get(&self, uid: &str) -> Option<&Challenge> {
        self.challenges
            .binary_search_by(|c| c.uid.as_str().cmp(uid))
            .ok()
            .map(|i| &self.challenges[i])
    }

    /// One `{uid}.jsonl` file per challenge, BLIMP key names.
    pub fn write_jsonl(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for c in &self.challenges {
            write_atomic(&dir.join(format!("{}.jsonl", c.uid)), challenge_jsonl(c).as_bytes())?;
        }
        Ok(())
    }
}

pub fn challenge_jsonl(c: &Challenge) -> String {
    let mut out = String::new();
    for p in &c.pairs {
        let mut obj = Map::new();
        obj.insert("sentence_good".into(), p.sentence_good.clone().into());
        obj.insert("sentence_bad".into(), p.sentence_bad.clone().into());
        obj.insert("field".into(), c.field.clone().into());
        obj.insert("linguistics_term".into(), c.linguistics_term.clone().into());
        obj.insert("UID".into(), c.uid.clone().into());
        obj.insert("pairID".into(), p.pair_id.to_string().into());
        if let Some(d) = p.depth {
            obj.insert("depth".into(), d.into());
        }
        out.push_str(&Value::Object(obj).to_string());
        out.push('\n');
    }
    out
}

fn jsonl_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let rd = std::fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    let mut files = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| Error::io(path, e))?.path();
        if p.is_file() && p.extension().is_some_and(|e| e == "jsonl") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

fn string_key(obj: &Map<String, Value>, key: &str, path: &Path, line: usize) -> Result<String> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(parse_err(path, line, format!("key `{key}` is not a string"))),
        None => Err(parse_err(path, line, format!("missing key `{key}`"))),
    }
}

fn parse_err(path: &Path, line: usize, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    }
}

/// Loads a directory of per-challenge JSONL files, or a single file.
pub fn load_suite(path: &Path, format: SuiteFormat) -> Result<ChallengeSuite> {
    // uid -> (source file, challenge)
    let mut by_uid: BTreeMap<String, (PathBuf, Challenge)> = BTreeMap::new();
    for file in jsonl_files(path)? {
        let text = read_to_string(&file)?;
        let mut local: BTreeMap<String, Challenge> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let obj = match serde_json::from_str::<Value>(raw) {
                Ok(Value::Object(o)) => o,
                Ok(_) => return Err(parse_err(&file, line, "expected a JSON object".into())),
                Err(e) => return Err(parse_err(&file, line, e.to_string())),
            };
            let good = string_key(&obj, "sentence_good", &file, line)?;
            let bad = string_key(&obj, "sentence_bad", &file, line)?;
            let uid = string_key(&obj, "UID", &file, line)?;
            let term = string_key(&obj, "linguistics_term", &file, line)?;
            let field = string_key(&obj, "field", &file, line)?;
            if good.trim().is_empty() || bad.trim().is_empty() {
                return Err(parse_err(&file, line, "empty sentence".into()));
            }
            let pair_id = match obj.get("pairID") {
                None => i as u32,
                Some(Value::String(s)) => s
                    .parse()
                    .map_err(|_| parse_err(&file, line, format!("bad pairID `{s}`")))?,
                Some(Value::Number(n)) => n
                    .as_u64()
                    .and_then(|n| u32::try_from(n).ok())
                    .ok_or_else(|| parse_err(&file, line, format!("bad pairID `{n}`")))?,
                Some(_) => return Err(parse_err(&file, line, "bad pairID".into())),
            };
            let depth = match (obj.get("depth"), format) {
                (Some(Value::Number(n)), _) => n.as_f64(),
                (Some(_), _) => return Err(parse_err(&file, line, "key `depth` is not a number".into())),
                (None, SuiteFormat::Synthetic) => return Err(parse_err(&file, line, "missing key `depth`".into())),
                (None, SuiteFormat::BlimpJsonl) => None,
            };
            let ch = local.entry(uid.clone()).or_insert_with(|| Challenge {
                uid,
                linguistics_term: term,
                field,
                pairs: Vec::new(),
            });
            ch.pairs.push(MinimalPair {
                pair_id,
                sentence_good: good,
                sentence_bad: bad,
                depth,
            });
        }
        for (uid, ch) in local {
            if by_uid.contains_key(&uid) {
                return Err(Error::DuplicateChallenge(uid));
            }
            by_uid.insert(uid, (file.clone(), ch));
        }
    }
    if by_uid.is_empty() {
        return Err(Error::NoChallenges(path.to_path_buf()));
    }
    ChallengeSuite::new(by_uid.into_values().map(|(_, c)| c).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE_ONE: &str = r#"{"sentence_good": "Galileo had talked to Bell.", "sentence_bad": "This car had talked to Bell.", "field": "syntax", "linguistics_term": "s-selection", "UID": "animate_subject_passive", "pairID": "0"}"#;

    fn write(dir: &Path, name: &str, body: &str) {
        std::fs::write(dir.join(name), body).unwrap();
    }

    #[test]
    fn loads_blimp_line() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), "animate_subject_passive.jsonl", &format!("{TABLE_ONE}\n"));
        let s = load_suite(d.path(), SuiteFormat::BlimpJsonl).unwrap();
        assert_eq!(s.len(), 1);
        let c = &s.challenges[0];
        assert_eq!(c.uid, "animate_subject_passive");
        assert_eq!(c.field, "syntax");
        assert_eq!(c.pairs.len(), 1);
        assert_eq!(c.pairs[0].sentence_good, "Galileo had talked to Bell.");
        assert_eq!(c.pairs[0].sentence_bad, "This car had talked to Bell.");
        assert_eq!(c.pairs[0].depth, None);
        // a single file works too
        let one = load_suite(&d.path().join("animate_subject_passive.jsonl"), SuiteFormat::BlimpJsonl).unwrap();
        assert_eq!(one, s);
    }

    #[test]
    fn empty_directory() {
        let d = tempfile::tempdir().unwrap();
        let err = load_suite(d.path(), SuiteFormat::BlimpJsonl).unwrap_err();
        assert!(err.to_string().contains("no challenges found"), "{err}");
    }

    #[test]
    fn missing_key_names_file_and_line() {
        let d = tempfile::tempdir().unwrap();
        let body = format!("{TABLE_ONE}\n{}\n", TABLE_ONE.replace(r#""field": "syntax", "#, ""));
        write(d.path(), "x.jsonl", &body);
        let err = load_suite(d.path(), SuiteFormat::BlimpJsonl).unwrap_err().to_string();
        assert!(err.contains("x.jsonl:2:"), "{err}");
        assert!(err.contains("field"), "{err}");
    }

    #[test]
    fn synthetic_format_requires_depth() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), "x.jsonl", &format!("{TABLE_ONE}\n"));
        let err = load_suite(d.path(), SuiteFormat::Synthetic).unwrap_err().to_string();
        assert!(err.contains("depth"), "{err}");
    }

    #[test]
    fn duplicate_uid_across_files() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), "a.jsonl", &format!("{TABLE_ONE}\n"));
        write(d.path(), "b.jsonl", &format!("{TABLE_ONE}\n"));
        assert!(matches!(
            load_suite(d.path(), SuiteFormat::BlimpJsonl),
            Err(Error::DuplicateChallenge(_))
        ));
    }

    #[test]
    fn ordering_and_round_trip() {
        let mk = |uid: &str, ids: &[u32]| Challenge {
            uid: uid.into(),
            linguistics_term: "t".into(),
            field: "f".into(),
            pairs: ids
                .iter()
                .map(|&i| MinimalPair {
                    pair_id: i,
                    sentence_good: format!("good {i} ."),
                    sentence_bad: format!("bad {i} ."),
                    depth: Some(i as f64 + 0.5),
                })
                .collect(),
        };
        let s = ChallengeSuite::new(vec![mk("zeta", &[2, 0, 1]), mk("alpha", &[5, 3])]).unwrap();
        assert_eq!(s.uids(), vec!["alpha", "zeta"]);
        assert_eq!(s.challenges[1].pairs[0].pair_id, 0);
        let d = tempfile::tempdir().unwrap();
        s.write_jsonl(d.path()).unwrap();
        assert_eq!(load_suite(d.path(), SuiteFormat::Synthetic).unwrap(), s);
        assert!(ChallengeSuite::new(vec![mk("a", &[1, 1])]).is_err());
    }
}
