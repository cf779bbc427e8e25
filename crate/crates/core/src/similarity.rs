//! Idf-weighted sentence embeddings and the semantic similarity metric.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{Corpus, Sentence, TransferSet};

/// Word vectors in the usual text format: `word v1 v2 ... vdim` per line.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    data: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        EmbeddingTable {
            dim,
            index: HashMap::new(),
            data: Vec::new(),
        }
    }

    /// Inserts a vector unless the word is already present. Returns whether
    /// the vector was stored.
    pub fn insert(&mut self, word: &str, vector: &[f32]) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("vector for {word:?} has a non-finite entry")));
        }
        if self.index.contains_key(word) {
            return Ok(false);
        }
        self.index.insert(word.to_owned(), self.index.len());
        self.data.extend_from_slice(vector);
        Ok(true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.index
            .get(word)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }
}

/// Reads an embedding text file. Duplicate words keep their first vector.
pub fn load_embeddings(path: impl AsRef<Path>, expected_dim: usize) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut table = EmbeddingTable::new(expected_dim);
    let mut values = Vec::with_capacity(expected_dim);

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else {
            continue;
        };
        values.clear();
        for f in fields {
            let v: f32 = f
                .parse()
                .map_err(|_| Error::parse(path, line_no, format!("cannot parse {f:?} as a real")))?;
            if !v.is_finite() {
                return Err(Error::parse(path, line_no, format!("non-finite value {f:?}")));
            }
            values.push(v);
        }
        if values.len() != expected_dim {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected {expected_dim} values for {word:?}, found {}", values.len()),
            ));
        }
        if !table.insert(word, &values)? {
            log::warn!("{}:{line_no}: duplicate word {word:?} ignored", path.display());
        }
    }
    if table.is_empty() {
        return Err(Error::Invalid(format!("{}: no embeddings found", path.display())));
    }
    Ok(table)
}

/// Inverse document frequencies over sentences, natural log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    corpus_size: usize,
    weights: BTreeMap<String, f64>,
}

impl IdfTable {
    /// `idf(q) = ln(|C| / df(q))` with `df` counted once per sentence.
    pub fn build(corpora: &[&Corpus]) -> Result<Self> {
        let mut df: HashMap<&str, usize> = HashMap::new();
        let mut corpus_size = 0;
        for c in corpora {
            for s in &c.sentences {
                corpus_size += 1;
                let unique: HashSet<&str> = s.tokens().iter().map(String::as_str).collect();
                for w in unique {
                    *df.entry(w).or_default() += 1;
                }
            }
        }
        if corpus_size == 0 {
            return Err(Error::Invalid("idf needs at least one sentence".into()));
        }
        let n = corpus_size as f64;
        let weights = df
            .into_iter()
            .map(|(w, d)| (w.to_owned(), (n / d as f64).ln()))
            .collect();
        Ok(IdfTable {
            corpus_size,
            weights,
        })
    }

    pub fn corpus_size(&self) -> usize {
        self.corpus_size
    }

    /// Weight of a word; words never seen get `ln |C|`, the df = 1 value.
    pub fn weight(&self, word: &str) -> f64 {
        self.weights
            .get(word)
            .copied()
            .unwrap_or_else(|| self.unseen_weight())
    }

    pub fn unseen_weight(&self) -> f64 {
        (self.corpus_size as f64).ln()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: IdfTable = serde_json::from_str(&text).map_err(|e| Error::parse(path, 1, e.to_string()))?;
        if table.corpus_size == 0 {
            return Err(Error::Invalid(format!("{}: corpus_size is 0", path.display())));
        }
        if let Some((w, v)) = table.weights.iter().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::Invalid(format!("{}: weight {v} for {w:?} is not a nonnegative real", path.display())));
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceVector {
    pub values: Vec<f64>,
    pub is_zero: bool,
}

/// Idf-weighted sum of the sentence's word vectors. Words without an
/// embedding are skipped. The sum rather than the mean is kept because the
/// cosine cancels the normalizer.
pub fn sentence_vector(s: &Sentence, emb: &EmbeddingTable, idf: &IdfTable) -> SentenceVector {
    let mut values = vec![0.0f64; emb.dim()];
    for w in s.tokens() {
        if let Some(v) = emb.get(w) {
            let weight = idf.weight(w);
            for (acc, &x) in values.iter_mut().zip(v) {
                *acc += weight * f64::from(x);
            }
        }
    }
    let is_zero = values.iter().all(|&v| v == 0.0);
    SentenceVector { values, is_zero }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cosine {
    pub value: f64,
    /// Set when either side is the zero vector; `value` is then 0.
    pub degenerate: bool,
}

pub fn cosine(u: &SentenceVector, v: &SentenceVector) -> Result<Cosine> {
    if u.values.len() != v.values.len() {
        return Err(Error::DimensionMismatch {
            expected: u.values.len(),
            found: v.values.len(),
        });
    }
    if u.is_zero || v.is_zero {
        return Ok(Cosine {
            value: 0.0,
            degenerate: true,
        });
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.values.iter().zip(&v.values) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    let value = (dot / (nu * nv).sqrt()).clamp(-1.0, 1.0);
    Ok(Cosine {
        value,
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub sim: f64,
    pub per_pair: Vec<f64>,
    pub degenerate: Vec<bool>,
    pub degenerate_count: usize,
}

/// Mean cosine between original and transferred vectors over all records.
/// Degenerate pairs contribute 0.
pub fn sim_transfer_set(ts: &TransferSet, emb: &EmbeddingTable, idf: &IdfTable) -> SimResult {
    let scored: Vec<Cosine> = ts
        .records()
        .par_iter()
        .map(|r| {
            let a = sentence_vector(&r.original, emb, idf);
            let b = sentence_vector(&r.transferred, emb, idf);
            cosine(&a, &b).expect("vectors share the table dimension")
        })
        .collect();
    let per_pair: Vec<f64> = scored.iter().map(|c| c.value).collect();
    let degenerate: Vec<bool> = scored.iter().map(|c| c.degenerate).collect();
    let degenerate_count = degenerate.iter().filter(|&&d| d).count();
    let sim = per_pair.iter().sum::<f64>() / per_pair.len() as f64;
    SimResult {
        sim,
        per_pair,
        degenerate,
        degenerate_count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{tokenize, StyleLabel};
    use approx::assert_abs_diff_eq;

    fn corpus(lines: &[&str]) -> Corpus {
        Corpus::from_lines(StyleLabel::new(0, "a"), lines.iter().copied(), "mem").unwrap()
    }

    #[test]
    fn idf_values() {
        let c = corpus(&["the cat", "the dog", "the cat cat", "the bird"]);
        let idf = IdfTable::build(&[&c]).unwrap();
        assert_eq!(idf.weight("the"), 0.0);
        assert_abs_diff_eq!(idf.weight("dog"), 4f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(idf.weight("dog"), 1.3863, epsilon = 1e-4);
        // df counts sentences, not occurrences
        assert_abs_diff_eq!(idf.weight("cat"), 2f64.ln(), epsilon = 1e-12);
        assert_eq!(idf.weight("zebra"), 4f64.ln());
        assert_eq!(idf.corpus_size(), 4);
    }

    #[test]
    fn idf_spans_both_corpora() {
        let a = corpus(&["x y"]);
        let b = corpus(&["y z", "z"]);
        let idf = IdfTable::build(&[&a, &b]).unwrap();
        assert_abs_diff_eq!(idf.weight("x"), 3f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(idf.weight("z"), 1.5f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn idf_json_round_trip() {
        let c = corpus(&["a b", "b c"]);
        let idf = IdfTable::build(&[&c]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("idf.json");
        idf.save(&p).unwrap();
        assert_eq!(IdfTable::load(&p).unwrap(), idf);
    }

    fn table(entries: &[(&str, &[f32])]) -> EmbeddingTable {
        let mut t = EmbeddingTable::new(entries[0].1.len());
        for (w, v) in entries {
            t.insert(w, v).unwrap();
        }
        t
    }

    #[test]
    fn load_embeddings_cases() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.txt");
        fs::write(&p, "a 1 2 3\nb 0 0 1\nc 1 1 1\nd -1 0.5 2\na 9 9 9\n").unwrap();
        let t = load_embeddings(&p, 3).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(t.dim(), 3);
        assert_eq!(t.get("a").unwrap(), &[1.0, 2.0, 3.0]);

        fs::write(&p, "a 1 2 3\nb 1 2\n").unwrap();
        match load_embeddings(&p, 3) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        fs::write(&p, "a 1 x 3\n").unwrap();
        assert!(matches!(load_embeddings(&p, 3), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            load_embeddings(dir.path().join("missing"), 3),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn sentence_vector_cases() {
        let emb = table(&[("w", &[1.0, 2.0]), ("x", &[3.0, -1.0]), ("y", &[0.5, 0.5])]);
        let c = corpus(&["w x", "y", "w y", "x"]);
        let idf = IdfTable::build(&[&c]).unwrap();

        let v = sentence_vector(&tokenize("w", true), &emb, &idf);
        let u = 2f64.ln();
        assert_eq!(v.values, vec![u, 2.0 * u]);
        assert!(!v.is_zero);

        let z = sentence_vector(&tokenize("nothing here", true), &emb, &idf);
        assert!(z.is_zero);
        assert_eq!(z.values, vec![0.0, 0.0]);

        // w and x both have df 2 -> same weight u
        let v = sentence_vector(&tokenize("w x", true), &emb, &idf);
        assert_abs_diff_eq!(v.values[0], u * 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.values[1], u * 1.0, epsilon = 1e-12);
    }

    fn sv(values: &[f64]) -> SentenceVector {
        SentenceVector {
            values: values.to_vec(),
            is_zero: values.iter().all(|&v| v == 0.0),
        }
    }

    #[test]
    fn cosine_cases() {
        let u = sv(&[0.3, -1.7, 2.2]);
        assert_eq!(cosine(&u, &u).unwrap().value, 1.0);
        assert_eq!(cosine(&sv(&[1.0, 0.0]), &sv(&[0.0, 1.0])).unwrap().value, 0.0);
        let d = cosine(&sv(&[0.0, 0.0]), &sv(&[1.0, 0.0])).unwrap();
        assert_eq!(d, Cosine { value: 0.0, degenerate: true });
        assert!(matches!(
            cosine(&sv(&[1.0]), &sv(&[1.0, 0.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
