//! Yearly CSV ingestion and the time-sliced bag-of-words dataset.
//!
//! The pipeline is: CSV rows → paragraphs → lowercase alphabetic tokens →
//! stopword removal → document-frequency filter → slice assignment by year
//! rank → seeded shuffle → train/val/test partition.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DATASET_FORMAT_VERSION: u32 = 1;

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawRecord {
    pub year: i32,
    pub text: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RawCorpus {
    pub records: Vec<RawRecord>,
}

impl RawCorpus {
    pub fn distinct_years(&self) -> Vec<i32> {
        let mut years: Vec<i32> = self.records.iter().map(|r| r.year).collect();
        years.sort_unstable();
        years.dedup();
        years
    }
}

/// Dense term ↔ id mapping.
#[derive(Clone, Debug, Default)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, u32>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.terms == other.terms
    }
}

impl Vocabulary {
    pub fn new(terms: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Invalid(format!("bad vocabulary term {t:?} at id {i}")));
            }
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Invalid(format!("duplicate vocabulary term {t:?}")));
            }
        }
        Ok(Self { terms, index })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn id(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn term(&self, id: u32) -> Option<&str> {
        self.terms.get(id as usize).map(String::as_str)
    }

    /// SHA-256 of the serialized `vocab.txt`.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_text().as_bytes())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.terms {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::new(text.lines().map(str::to_string).collect())
    }
}

/// One document as sorted `(term id, count)` pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BowDocument {
    pub slice: usize,
    pub counts: Vec<(u32, u32)>,
}

impl BowDocument {
    /// Builds a document from unsorted `(id, count)` pairs, merging repeats.
    pub fn new(slice: usize, pairs: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut map = BTreeMap::new();
        for (id, c) in pairs {
            if c > 0 {
                *map.entry(id).or_insert(0u32) += c;
            }
        }
        Self {
            slice,
            counts: map.into_iter().collect(),
        }
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().map(|&(_, c)| c).sum()
    }

    /// Term-frequency vector normalized to sum to one, as sparse pairs.
    pub fn normalized(&self) -> Vec<(u32, f64)> {
        let n = self.total() as f64;
        self.counts.iter().map(|&(id, c)| (id, c as f64 / n)).collect()
    }

    fn validate(&self, vocab_size: usize, num_slices: usize) -> Result<()> {
        if self.counts.is_empty() {
            return Err(Error::Invalid("document with no terms".into()));
        }
        if self.slice >= num_slices {
            return Err(Error::OutOfRange(format!(
                "slice {} with {num_slices} slices",
                self.slice
            )));
        }
        let mut prev: Option<u32> = None;
        for &(id, c) in &self.counts {
            if id as usize >= vocab_size || c == 0 || prev.is_some_and(|p| p >= id) {
                return Err(Error::Invalid(format!("bad bow entry {id}:{c}")));
            }
            prev = Some(id);
        }
        Ok(())
    }

    fn to_line(&self) -> String {
        let mut s = format!("{}\t", self.slice);
        for (i, (id, c)) in self.counts.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            write!(s, "{id}:{c}").unwrap();
        }
        s
    }

    fn from_line(line: &str) -> Option<Self> {
        let (slice, rest) = line.split_once('\t')?;
        let slice = slice.parse().ok()?;
        let counts = rest
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(|p| {
                let (id, c) = p.split_once(':')?;
                Some((id.parse().ok()?, c.parse().ok()?))
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Self { slice, counts })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for Fractions {
    fn default() -> Self {
        Self {
            train: 0.85,
            val: 0.05,
            test: 0.10,
        }
    }
}

impl Fractions {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::Invalid(format!("split fractions must be > 0: {all:?}")));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// `(train, val, test)` sizes for `n` documents; val and test are
    /// floored, train takes the remainder.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let val = (self.val * n as f64 + 1e-9).floor() as usize;
        let test = (self.test * n as f64 + 1e-9).floor() as usize;
        (n - val - test, val, test)
    }
}

/// Settings that produced a dataset; persisted in its manifest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub min_df: usize,
    pub seed: u64,
    pub fractions: Fractions,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeSlicedCorpus {
    pub vocabulary: Vocabulary,
    /// Calendar year of each slice, strictly increasing.
    pub slices: Vec<i32>,
    pub train: Vec<BowDocument>,
    pub val: Vec<BowDocument>,
    pub test: Vec<BowDocument>,
    pub meta: DatasetMeta,
}

impl TimeSlicedCorpus {
    pub fn num_slices(&self) -> usize {
        self.slices.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    /// Checks every structural invariant of the dataset.
    pub fn validate(&self) -> Result<()> {
        if self.vocabulary.is_empty() {
            return Err(Error::Invalid("empty vocabulary".into()));
        }
        if self.slices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid("slice years are not strictly increasing".into()));
        }
        let (v, t) = (self.vocab_size(), self.num_slices());
        for d in self.train.iter().chain(&self.val).chain(&self.test) {
            d.validate(v, t)?;
        }
        let mut used = vec![false; t];
        for d in &self.train {
            used[d.slice] = true;
        }
        if let Some(s) = used.iter().position(|u| !u) {
            return Err(Error::Invalid(format!(
                "slice {s} (year {}) has no training documents",
                self.slices[s]
            )));
        }
        Ok(())
    }

    /// Average of the normalized term-frequency vectors of the training
    /// documents in each slice, as a dense `T × V` row-major buffer.
    pub fn slice_means(&self) -> Vec<f64> {
        let v = self.vocab_size();
        let mut means = vec![0.0; self.num_slices() * v];
        let mut counts = vec![0usize; self.num_slices()];
        for d in &self.train {
            counts[d.slice] += 1;
            let row = &mut means[d.slice * v..(d.slice + 1) * v];
            for (id, f) in d.normalized() {
                row[id as usize] += f;
            }
        }
        for (t, &n) in counts.iter().enumerate() {
            if n > 0 {
                means[t * v..(t + 1) * v]
                    .iter_mut()
                    .for_each(|x| *x /= n as f64);
            }
        }
        means
    }
}

// ---------------------------------------------------------------------------
// Ingestion

/// Reads a `year,text` CSV (header required, RFC 4180 quoting).
pub fn load_yearly_csv(path: &Path) -> Result<RawCorpus> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_yearly_csv(file)
}

pub fn read_yearly_csv(reader: impl std::io::Read) -> Result<RawCorpus> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Invalid(format!("CSV header lacks a {name:?} column")))
    };
    let (year_col, text_col) = (col("year")?, col("text")?);

    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        let year_field = rec.get(year_col).map(str::trim).unwrap_or("");
        if year_field.is_empty() {
            return Err(Error::MalformedRow {
                row,
                message: "missing year".into(),
            });
        }
        let year: i32 = year_field.parse().map_err(|_| Error::MalformedRow {
            row,
            message: format!("non-integer year {year_field:?}"),
        })?;
        let text = rec.get(text_col).unwrap_or("");
        if text.trim().is_empty() {
            return Err(Error::MalformedRow {
                row,
                message: "empty text".into(),
            });
        }
        records.push(RawRecord {
            year,
            text: text.to_string(),
        });
    }
    Ok(RawCorpus { records })
}

fn paragraph_break() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\r?\n(?:[ \t]*\r?\n)+").unwrap())
}

/// One record per blank-line-separated paragraph; empty paragraphs dropped.
pub fn split_paragraphs(raw: &RawCorpus) -> RawCorpus {
    let re = paragraph_break();
    let records = raw
        .records
        .iter()
        .flat_map(|r| {
            re.split(&r.text)
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(move |p| RawRecord {
                    year: r.year,
                    text: p.to_string(),
                })
        })
        .collect();
    RawCorpus { records }
}

pub fn default_stopwords() -> HashSet<String> {
    parse_stopwords(DEFAULT_STOPWORDS)
}

pub fn load_stopwords(path: &Path) -> Result<HashSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_stopwords(&text))
}

fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

/// Lowercases and splits on every non-alphabetic character, keeping tokens
/// of at least two characters that are not stopwords.
pub fn tokenize<'a>(text: &'a str, stopwords: &'a HashSet<String>) -> impl Iterator<Item = String> + 'a {
    text.split(|c: char| !c.is_alphabetic())
        .filter(|t| t.chars().nth(1).is_some())
        .map(str::to_lowercase)
        .filter(move |t| !stopwords.contains(t))
}

#[cfg(feature = "parallel")]
fn tokenize_all(records: &[RawRecord], stopwords: &HashSet<String>) -> Vec<Vec<String>> {
    use rayon::prelude::*;
    records
        .par_iter()
        .map(|r| tokenize(&r.text, stopwords).collect())
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn tokenize_all(records: &[RawRecord], stopwords: &HashSet<String>) -> Vec<Vec<String>> {
    records
        .iter()
        .map(|r| tokenize(&r.text, stopwords).collect())
        .collect()
}

/// Seeded Fisher–Yates permutation of `0..n`.
///
/// Generator: ChaCha8 seeded with `seed_from_u64(seed)`; walking `i` from
/// `n − 1` down to 1, swap `i` with `j = next_u64() mod (i + 1)`.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        p.swap(i, j);
    }
    p
}

/// Builds the time-sliced dataset from already paragraph-split records.
pub fn build_dataset(
    raw: &RawCorpus,
    stopwords: &HashSet<String>,
    min_df: usize,
    fractions: Fractions,
    seed: u64,
) -> Result<TimeSlicedCorpus> {
    if min_df == 0 {
        return Err(Error::Invalid("min_df must be at least 1".into()));
    }
    fractions.validate()?;

    let tokens = tokenize_all(&raw.records, stopwords);

    let mut df: HashMap<&str, usize> = HashMap::new();
    for doc in &tokens {
        let unique: HashSet<&str> = doc.iter().map(String::as_str).collect();
        for t in unique {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let mut terms: Vec<String> = df
        .into_iter()
        .filter(|&(_, n)| n >= min_df)
        .map(|(t, _)| t.to_string())
        .collect();
    if terms.is_empty() {
        return Err(Error::Invalid(format!("no term reaches min_df = {min_df}")));
    }
    terms.sort_unstable();
    let vocabulary = Vocabulary::new(terms)?;

    // documents that keep at least one in-vocabulary token
    let mut kept: Vec<(i32, Vec<(u32, u32)>)> = Vec::new();
    for (rec, doc) in raw.records.iter().zip(&tokens) {
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for t in doc {
            if let Some(id) = vocabulary.id(t) {
                *counts.entry(id).or_insert(0) += 1;
            }
        }
        if !counts.is_empty() {
            kept.push((rec.year, counts.into_iter().collect()));
        }
    }

    let mut slices: Vec<i32> = kept.iter().map(|(y, _)| *y).collect();
    slices.sort_unstable();
    slices.dedup();
    let slice_of: HashMap<i32, usize> = slices.iter().enumerate().map(|(i, &y)| (y, i)).collect();

    let docs: Vec<BowDocument> = kept
        .into_iter()
        .map(|(year, counts)| BowDocument {
            slice: slice_of[&year],
            counts,
        })
        .collect();

    let perm = permutation(docs.len(), seed);
    let (n_train, n_val, _) = fractions.sizes(docs.len());
    let mut train = Vec::with_capacity(n_train);
    let mut val = Vec::with_capacity(n_val);
    let mut test = Vec::new();
    for (rank, &i) in perm.iter().enumerate() {
        let d = docs[i].clone();
        if rank < n_train {
            train.push(d);
        } else if rank < n_train + n_val {
            val.push(d);
        } else {
            test.push(d);
        }
    }

    let corpus = TimeSlicedCorpus {
        vocabulary,
        slices,
        train,
        val,
        test,
        meta: DatasetMeta {
            min_df,
            seed,
            fractions,
        },
    };
    corpus.validate()?;
    Ok(corpus)
}

// ---------------------------------------------------------------------------
// Serialization

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub vocab: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub min_df: usize,
    pub seed: u64,
    pub fractions: Fractions,
    pub counts: SplitCounts,
    pub slices: Vec<i32>,
}

const SPLIT_FILES: [&str; 3] = ["train.bow", "val.bow", "test.bow"];

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        write!(s, "{b:02x}").unwrap();
    }
    s
}

/// Writes `files` (name, bytes) into `dir` plus a `checksums.txt` listing
/// the SHA-256 of each, in the order given.
pub(crate) fn write_checksummed(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut sums = String::new();
    for (name, bytes) in files {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        writeln!(sums, "{}  {name}", sha256_hex(bytes)).unwrap();
    }
    let p = dir.join("checksums.txt");
    fs::write(&p, sums).map_err(|e| Error::io(&p, e))
}

/// Verifies `checksums.txt` in `dir` and returns the listed files' bytes.
pub(crate) fn read_checksummed(dir: &Path) -> Result<HashMap<String, Vec<u8>>> {
    let p = dir.join("checksums.txt");
    let sums = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let mut out = HashMap::new();
    for line in sums.lines().filter(|l| !l.trim().is_empty()) {
        let (hash, name) = line
            .split_once("  ")
            .ok_or_else(|| Error::Invalid(format!("bad checksums line {line:?}")))?;
        let fp = dir.join(name);
        let bytes = fs::read(&fp).map_err(|e| Error::io(&fp, e))?;
        if sha256_hex(&bytes) != hash {
            return Err(Error::Checksum(name.to_string()));
        }
        out.insert(name.to_string(), bytes);
    }
    Ok(out)
}

pub(crate) fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    bytes
}

impl TimeSlicedCorpus {
    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            format_version: DATASET_FORMAT_VERSION,
            min_df: self.meta.min_df,
            seed: self.meta.seed,
            fractions: self.meta.fractions,
            counts: SplitCounts {
                vocab: self.vocab_size(),
                train: self.train.len(),
                val: self.val.len(),
                test: self.test.len(),
            },
            slices: self.slices.clone(),
        }
    }
}

pub fn save_dataset(corpus: &TimeSlicedCorpus, dir: &Path) -> Result<()> {
    if corpus.train.is_empty() {
        return Err(Error::Invalid("refusing to save a dataset with an empty train split".into()));
    }
    corpus.validate()?;
    let split_bytes = |docs: &[BowDocument]| {
        let mut s = String::new();
        for d in docs {
            s.push_str(&d.to_line());
            s.push('\n');
        }
        s.into_bytes()
    };
    let files = vec![
        ("manifest.json".to_string(), to_json_bytes(&corpus.manifest())),
        ("vocab.txt".to_string(), corpus.vocabulary.to_text().into_bytes()),
        (SPLIT_FILES[0].to_string(), split_bytes(&corpus.train)),
        (SPLIT_FILES[1].to_string(), split_bytes(&corpus.val)),
        (SPLIT_FILES[2].to_string(), split_bytes(&corpus.test)),
    ];
    write_checksummed(dir, &files)
}

pub fn load_dataset_manifest(dir: &Path) -> Result<DatasetManifest> {
    let p = dir.join("manifest.json");
    let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::json(&p, e))
}

pub fn load_dataset(dir: &Path) -> Result<TimeSlicedCorpus> {
    let mut files = read_checksummed(dir)?;
    let mut take = |name: &str| {
        files
            .remove(name)
            .ok_or_else(|| Error::Invalid(format!("{name} missing from checksums.txt")))
    };
    let manifest_bytes = take("manifest.json")?;
    let manifest: DatasetManifest =
        serde_json::from_slice(&manifest_bytes).map_err(|e| Error::json(dir.join("manifest.json"), e))?;
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::Version {
            found: manifest.format_version,
            expected: DATASET_FORMAT_VERSION,
        });
    }
    let vocab_text = String::from_utf8(take("vocab.txt")?)
        .map_err(|_| Error::Invalid("vocab.txt is not UTF-8".into()))?;
    let vocabulary = Vocabulary::from_text(&vocab_text)?;

    let mut splits = Vec::with_capacity(3);
    for name in SPLIT_FILES {
        let text = String::from_utf8(take(name)?)
            .map_err(|_| Error::Invalid(format!("{name} is not UTF-8")))?;
        let docs = text
            .lines()
            .enumerate()
            .map(|(i, l)| {
                BowDocument::from_line(l).ok_or_else(|| Error::MalformedRow {
                    row: i + 1,
                    message: format!("{name}: unparseable line"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        splits.push(docs);
    }
    let test = splits.pop().unwrap();
    let val = splits.pop().unwrap();
    let train = splits.pop().unwrap();

    let corpus = TimeSlicedCorpus {
        vocabulary,
        slices: manifest.slices.clone(),
        train,
        val,
        test,
        meta: DatasetMeta {
            min_df: manifest.min_df,
            seed: manifest.seed,
            fractions: manifest.fractions,
        },
    };
    if corpus.manifest() != manifest {
        return Err(Error::Invalid("manifest counts disagree with dataset files".into()));
    }
    corpus.validate()?;
    Ok(corpus)
}
