//! Tokenization, corpora and transfer-output files.
//!
//! Corpora are plain text, one pre-tokenized sentence per line. Transfer
//! outputs are JSON lines, one [`TransferRecord`] per line, with an optional
//! `<file>.meta.json` sidecar carrying checkpoint metadata.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A whitespace-tokenized sentence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Sentence {
    tokens: Vec<String>,
}

impl Sentence {
    /// Builds a sentence from tokens. Tokens must not contain whitespace.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if let Some(bad) = tokens
            .iter()
            .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(Error::Invalid(format!("token {bad:?} is empty or contains whitespace")));
        }
        Ok(Sentence { tokens })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

/// Splits on runs of whitespace, optionally lowercasing every token.
pub fn tokenize(raw: &str, lowercase: bool) -> Sentence {
    let tokens = raw
        .split_whitespace()
        .map(|t| if lowercase { t.to_lowercase() } else { t.to_owned() })
        .collect();
    Sentence { tokens }
}

/// One of the two styles of a task.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StyleLabel {
    pub id: u8,
    pub name: String,
}

impl StyleLabel {
    pub fn new(id: u8, name: impl Into<String>) -> Self {
        assert!(id <= 1, "style ids are binary");
        StyleLabel {
            id,
            name: name.into(),
        }
    }
}

impl fmt::Display for StyleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// The sentences of one style.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub style: StyleLabel,
    pub sentences: Vec<Sentence>,
    pub source_path: String,
}

impl Corpus {
    /// Builds a corpus from raw lines, skipping blank ones.
    pub fn from_lines<'a, I>(style: StyleLabel, lines: I, source: impl Into<String>) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let source = source.into();
        let sentences: Vec<Sentence> = lines
            .into_iter()
            .map(|l| tokenize(l, true))
            .filter(|s| !s.is_empty())
            .collect();
        if sentences.is_empty() {
            return Err(Error::EmptyCorpus(PathBuf::from(source)));
        }
        Ok(Corpus {
            style,
            sentences,
            source_path: source,
        })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

/// Reads a one-sentence-per-line corpus. Blank lines are skipped.
pub fn load_corpus(path: impl AsRef<Path>, style: StyleLabel) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Corpus::from_lines(style, text.lines(), path.display().to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferRecord {
    pub id: String,
    pub original: Sentence,
    /// May be empty: a degenerate system output is scored, not rejected.
    pub transferred: Sentence,
    pub source_style: StyleLabel,
    pub target_style: StyleLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model_name: String,
    pub epoch: f64,
}

/// A non-empty batch of transfer outputs sharing one label pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferSet {
    records: Vec<TransferRecord>,
    pub checkpoint_meta: Option<CheckpointMeta>,
}

/// On-disk shape of one transfer record line.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: String,
    original: String,
    transferred: String,
    source_style: String,
    target_style: String,
}

/// Assigns binary ids to a pair of style names: "0"/"1" keep their value,
/// anything else is ordered lexicographically.
fn label_pair(a: &str, b: &str) -> [StyleLabel; 2] {
    let (first, second) = match (a, b) {
        ("1", "0") => (b, a),
        ("0", "1") => (a, b),
        _ if a <= b => (a, b),
        _ => (b, a),
    };
    [StyleLabel::new(0, first), StyleLabel::new(1, second)]
}

impl TransferSet {
    /// Validates and wraps records: non-empty, non-empty originals, a style
    /// flip on every record and one shared label pair.
    pub fn new(records: Vec<TransferRecord>, checkpoint_meta: Option<CheckpointMeta>) -> Result<Self> {
        let Some(first) = records.first() else {
            return Err(Error::Invalid("transfer set is empty".into()));
        };
        let mut pair = [first.source_style.clone(), first.target_style.clone()];
        pair.sort_by_key(|l| l.id);
        for r in &records {
            if r.original.is_empty() {
                return Err(Error::Invalid(format!("record {}: original sentence is empty", r.id)));
            }
            if r.source_style == r.target_style {
                return Err(Error::Invalid(format!(
                    "record {}: source and target style are both {}",
                    r.id, r.source_style
                )));
            }
            let mut p = [r.source_style.clone(), r.target_style.clone()];
            p.sort_by_key(|l| l.id);
            if p != pair {
                return Err(Error::Invalid(format!(
                    "record {}: label pair ({}, {}) differs from ({}, {})",
                    r.id, p[0], p[1], pair[0], pair[1]
                )));
            }
        }
        Ok(TransferSet {
            records,
            checkpoint_meta,
        })
    }

    pub fn records(&self) -> &[TransferRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The two style labels, ordered by id.
    pub fn labels(&self) -> [StyleLabel; 2] {
        let r = &self.records[0];
        let mut p = [r.source_style.clone(), r.target_style.clone()];
        p.sort_by_key(|l| l.id);
        p
    }

    /// Writes the records as JSON lines, plus the sidecar when metadata is set.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        for r in &self.records {
            let line = RecordLine {
                id: r.id.clone(),
                original: r.original.to_string(),
                transferred: r.transferred.to_string(),
                source_style: r.source_style.name.clone(),
                target_style: r.target_style.name.clone(),
            };
            serde_json::to_writer(&mut buf, &line)?;
            buf.push(b'\n');
        }
        write_file(path, &buf)?;
        if let Some(meta) = &self.checkpoint_meta {
            let meta_path = meta_path(path);
            write_file(&meta_path, serde_json::to_string_pretty(meta)?.as_bytes())?;
        }
        Ok(())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Path of the checkpoint sidecar for a transfer file: `<file>.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Reads a JSON-lines transfer file and its optional sidecar.
pub fn load_transfer_set(path: impl AsRef<Path>) -> Result<TransferSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;

    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line: RecordLine =
            serde_json::from_str(raw).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        lines.push((i + 1, line));
    }
    let Some((_, first)) = lines.first() else {
        return Err(Error::Invalid(format!("{}: transfer set is empty", path.display())));
    };
    let labels = label_pair(&first.source_style, &first.target_style);
    let lookup = |name: &str, line_no: usize| -> Result<StyleLabel> {
        labels
            .iter()
            .find(|l| l.name == name)
            .cloned()
            .ok_or_else(|| {
                Error::Invalid(format!(
                    "{}:{}: style {:?} is not in the label pair ({}, {})",
                    path.display(),
                    line_no,
                    name,
                    labels[0],
                    labels[1]
                ))
            })
    };

    let mut records = Vec::with_capacity(lines.len());
    for (line_no, l) in lines {
        let record = TransferRecord {
            source_style: lookup(&l.source_style, line_no)?,
            target_style: lookup(&l.target_style, line_no)?,
            original: tokenize(&l.original, true),
            transferred: tokenize(&l.transferred, true),
            id: l.id,
        };
        if record.original.is_empty() {
            return Err(Error::parse(path, line_no, "field `original` is blank"));
        }
        records.push(record);
    }

    let sidecar = meta_path(path);
    let meta = if sidecar.exists() {
        let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        Some(serde_json::from_str(&text).map_err(|e| Error::parse(&sidecar, 1, e.to_string()))?)
    } else {
        None
    };
    TransferSet::new(records, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &Sentence) -> Vec<&str> {
        s.tokens().iter().map(String::as_str).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(toks(&tokenize("Good Food .", true)), ["good", "food", "."]);
        assert!(tokenize("", true).is_empty());
        assert_eq!(toks(&tokenize("  a \t b ", true)), ["a", "b"]);
        assert_eq!(toks(&tokenize("Good", false)), ["Good"]);
    }

    proptest! {
        #[test]
        fn tokenize_is_idempotent(raw in "\\PC{0,40}", lower in any::<bool>()) {
            let once = tokenize(&raw, lower);
            let twice = tokenize(&once.to_string(), lower);
            prop_assert_eq!(once, twice);
        }
    }

    #[test]
    fn corpus_skips_blank_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        fs::write(&p, "a b\n\n  \nc d\n\ne\n").unwrap();
        let c = load_corpus(&p, StyleLabel::new(0, "neg")).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.sentences[1].to_string(), "c d");
    }

    #[test]
    fn corpus_errors() {
        let dir = tempfile::tempdir().unwrap();
        let missing = load_corpus(dir.path().join("nope.txt"), StyleLabel::new(0, "neg"));
        assert!(matches!(missing, Err(Error::Io { .. })));

        let p = dir.path().join("blank.txt");
        fs::write(&p, "\n \n").unwrap();
        assert!(matches!(load_corpus(&p, StyleLabel::new(0, "neg")), Err(Error::EmptyCorpus(_))));
    }

    const TWO: &str = r#"{"id":"1","original":"the food was bad","transferred":"the food was good","source_style":"negative","target_style":"positive"}
{"id":"2","original":"great service","transferred":"","source_style":"positive","target_style":"negative"}
"#;

    #[test]
    fn transfer_set_loads() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        fs::write(&p, TWO).unwrap();
        let ts = load_transfer_set(&p).unwrap();
        assert_eq!(ts.len(), 2);
        assert_eq!(ts.labels()[0].name, "negative");
        assert_eq!(ts.records()[0].target_style.id, 1);
        assert!(ts.records()[1].transferred.is_empty());
        assert!(ts.checkpoint_meta.is_none());
    }

    #[test]
    fn transfer_set_missing_field_names_it() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        fs::write(
            &p,
            "{\"id\":\"1\",\"original\":\"a\",\"transferred\":\"b\",\"source_style\":\"x\",\"target_style\":\"y\"}\n{\"id\":\"2\",\"original\":\"a\",\"source_style\":\"x\",\"target_style\":\"y\"}\n",
        )
        .unwrap();
        match load_transfer_set(&p) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("transferred"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn transfer_set_rejects_mixed_pairs() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        fs::write(
            &p,
            "{\"id\":\"1\",\"original\":\"a\",\"transferred\":\"b\",\"source_style\":\"neg\",\"target_style\":\"pos\"}\n{\"id\":\"2\",\"original\":\"a\",\"transferred\":\"b\",\"source_style\":\"formal\",\"target_style\":\"informal\"}\n",
        )
        .unwrap();
        assert!(matches!(load_transfer_set(&p), Err(Error::Invalid(_))));
    }

    #[test]
    fn transfer_set_rejects_same_style_and_blank_original() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        fs::write(
            &p,
            "{\"id\":\"1\",\"original\":\"a\",\"transferred\":\"b\",\"source_style\":\"neg\",\"target_style\":\"neg\"}\n",
        )
        .unwrap();
        assert!(load_transfer_set(&p).is_err());
        fs::write(
            &p,
            "{\"id\":\"1\",\"original\":\"  \",\"transferred\":\"b\",\"source_style\":\"neg\",\"target_style\":\"pos\"}\n",
        )
        .unwrap();
        assert!(matches!(load_transfer_set(&p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn numeric_labels_keep_their_ids() {
        let [a, b] = label_pair("1", "0");
        assert_eq!((a.id, a.name.as_str(), b.id, b.name.as_str()), (0, "0", 1, "1"));
        let [a, _] = label_pair("positive", "negative");
        assert_eq!(a.name, "negative");
    }

    fn arb_sentence(min: usize) -> impl Strategy<Value = Sentence> {
        prop::collection::vec("[a-z.!]{1,6}", min..6).prop_map(|t| Sentence::from_tokens(t).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn transfer_set_round_trips(
            pairs in prop::collection::vec((arb_sentence(1), arb_sentence(0), any::<bool>()), 1..8),
            epoch in proptest::option::of(0.0f64..100.0),
        ) {
            let labels = [StyleLabel::new(0, "negative"), StyleLabel::new(1, "positive")];
            let records = pairs
                .into_iter()
                .enumerate()
                .map(|(i, (o, t, flip))| {
                    let (s, d) = if flip { (1, 0) } else { (0, 1) };
                    TransferRecord {
                        id: format!("r{i}"),
                        original: o,
                        transferred: t,
                        source_style: labels[s].clone(),
                        target_style: labels[d].clone(),
                    }
                })
                .collect();
            let meta = epoch.map(|epoch| CheckpointMeta { model_name: "m".into(), epoch });
            let ts = TransferSet::new(records, meta).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("t.jsonl");
            ts.write(&p).unwrap();
            prop_assert_eq!(load_transfer_set(&p).unwrap(), ts);
        }
    }
}
