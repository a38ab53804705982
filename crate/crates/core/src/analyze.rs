//! Topic selection by keyword mass, top-word tables at year intervals and
//! per-word probability trends, plus their CSV/JSON/SVG export.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{to_json_bytes, Vocabulary};
use crate::error::{Error, Result};
use crate::model::BetaTensor;
use crate::svg::{self, Series};

pub const DEFAULT_KEYWORDS: [&str; 4] = ["carbon", "capture", "storage", "ccs"];

/// A beta tensor together with the vocabulary and slice years it refers to.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledBeta {
    pub beta: BetaTensor,
    pub vocabulary: Vocabulary,
    pub years: Vec<i32>,
}

impl LabeledBeta {
    pub fn new(beta: BetaTensor, vocabulary: Vocabulary, years: Vec<i32>) -> Result<Self> {
        if beta.vocab_size() != vocabulary.len() || beta.num_slices() != years.len() {
            return Err(Error::Shape(format!(
                "beta {:?} does not match vocabulary {} and {} years",
                beta.shape(),
                vocabulary.len(),
                years.len()
            )));
        }
        Ok(Self { beta, vocabulary, years })
    }

    fn term_id(&self, term: &str) -> Result<u32> {
        self.vocabulary.id(term).ok_or_else(|| Error::UnknownTerm {
            term: term.to_string(),
            suggestions: nearest_terms(&self.vocabulary, term, 5),
        })
    }

    fn check_topic(&self, topic: usize) -> Result<()> {
        if topic >= self.beta.num_topics() {
            return Err(Error::OutOfRange(format!("topic {topic} with {} topics", self.beta.num_topics())));
        }
        Ok(())
    }
}

/// Vocabulary terms sharing the longest prefix with `term`.
pub fn nearest_terms(vocab: &Vocabulary, term: &str, max: usize) -> Vec<String> {
    let common = |t: &str| t.chars().zip(term.chars()).take_while(|(a, b)| a == b).count();
    let best = vocab.terms().iter().map(|t| common(t)).max().unwrap_or(0);
    if best == 0 {
        return Vec::new();
    }
    vocab.terms().iter().filter(|t| common(t) == best).take(max).cloned().collect()
}

/// Ids of the `n` largest entries, descending, ties by ascending id.
pub fn top_word_ids(row: &[f64], n: usize) -> Vec<u32> {
    let mut ids: Vec<u32> = (0..row.len() as u32).collect();
    let cmp = |a: &u32, b: &u32| row[*b as usize].total_cmp(&row[*a as usize]).then(a.cmp(b));
    if n < ids.len() {
        ids.select_nth_unstable_by(n, cmp);
        ids.truncate(n);
    }
    ids.sort_by(cmp);
    ids
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedTerm {
    pub term: String,
    pub probability: f64,
}

pub fn top_words(lb: &LabeledBeta, topic: usize, slice: usize, n: usize) -> Result<Vec<RankedTerm>> {
    lb.check_topic(topic)?;
    if slice >= lb.beta.num_slices() {
        return Err(Error::OutOfRange(format!("slice {slice} with {} slices", lb.beta.num_slices())));
    }
    if n > lb.beta.vocab_size() {
        return Err(Error::OutOfRange(format!("{n} words from a vocabulary of {}", lb.beta.vocab_size())));
    }
    let row = lb.beta.row(slice, topic);
    Ok(top_word_ids(row, n)
        .into_iter()
        .map(|id| RankedTerm {
            term: lb.vocabulary.term(id).unwrap().to_string(),
            probability: row[id as usize],
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicSelection {
    pub topic: usize,
    /// Average keyword mass per topic.
    pub scores: Vec<f64>,
    pub used_keywords: Vec<String>,
    pub missing_keywords: Vec<String>,
}

/// Picks the topic whose word distributions carry the most keyword mass on
/// average over all slices; ties go to the lowest topic id. Keywords are
/// lowercased and deduplicated.
pub fn select_topic_by_keywords<S: AsRef<str>>(lb: &LabeledBeta, keywords: &[S]) -> Result<TopicSelection> {
    let set: BTreeSet<String> = keywords.iter().map(|k| k.as_ref().trim().to_lowercase()).filter(|k| !k.is_empty()).collect();
    let (mut used, mut missing) = (Vec::new(), Vec::new());
    let mut ids = Vec::new();
    for kw in set {
        match lb.vocabulary.id(&kw) {
            Some(id) => {
                ids.push(id as usize);
                used.push(kw);
            }
            None => missing.push(kw),
        }
    }
    if ids.is_empty() {
        return Err(Error::Invalid(format!("none of the keywords {missing:?} is in the vocabulary")));
    }
    let (t_n, k_n) = (lb.beta.num_slices(), lb.beta.num_topics());
    let scores: Vec<f64> = (0..k_n)
        .map(|k| {
            let mass: f64 = (0..t_n).map(|t| ids.iter().map(|&w| lb.beta.get(t, k, w)).sum::<f64>()).sum();
            mass / t_n as f64
        })
        .collect();
    let mut topic = 0;
    for (k, &s) in scores.iter().enumerate() {
        if s > scores[topic] {
            topic = k;
        }
    }
    Ok(TopicSelection {
        topic,
        scores,
        used_keywords: used,
        missing_keywords: missing,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub year: i32,
    pub probability: f64,
}

pub fn word_trend(lb: &LabeledBeta, topic: usize, term: &str) -> Result<Vec<TrendPoint>> {
    lb.check_topic(topic)?;
    let id = lb.term_id(term)? as usize;
    Ok(lb
        .years
        .iter()
        .enumerate()
        .map(|(t, &year)| TrendPoint {
            year,
            probability: lb.beta.get(t, topic, id),
        })
        .collect())
}

/// Nearest year in `years` (sorted) to `target`; ties go to the earlier year.
pub fn snap_year(years: &[i32], target: i32) -> i32 {
    let mut best = years[0];
    for &y in years {
        if (y - target).abs() < (best - target).abs() {
            best = y;
        }
    }
    best
}

/// Report years: `start, start + interval, …` up to the last slice year,
/// each snapped to an existing year, always ending with the last year.
pub fn report_years(years: &[i32], start: i32, interval: i32) -> Result<Vec<i32>> {
    if !years.contains(&start) {
        return Err(Error::Invalid(format!("start year {start} is not a slice year")));
    }
    if interval <= 0 {
        return Err(Error::Invalid("interval must be positive".into()));
    }
    let last = *years.last().unwrap();
    let mut out: Vec<i32> = Vec::new();
    let mut target = start;
    while target <= last {
        let y = snap_year(years, target);
        if out.last() != Some(&y) {
            out.push(y);
        }
        target += interval;
    }
    if out.last() != Some(&last) {
        out.push(last);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub year: i32,
    pub words: Vec<RankedTerm>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryTrend {
    pub term: String,
    pub series: Vec<TrendPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionReport {
    pub topic: usize,
    pub selection: Option<TopicSelection>,
    pub rows: Vec<ReportRow>,
    pub query_trends: Vec<QueryTrend>,
}

pub fn evolution_report<S: AsRef<str>>(
    lb: &LabeledBeta,
    topic: usize,
    start_year: i32,
    interval_years: i32,
    n: usize,
    query_terms: &[S],
) -> Result<EvolutionReport> {
    lb.check_topic(topic)?;
    let mut rows = Vec::new();
    for year in report_years(&lb.years, start_year, interval_years)? {
        let slice = lb.years.iter().position(|&y| y == year).unwrap();
        rows.push(ReportRow {
            year,
            words: top_words(lb, topic, slice, n)?,
        });
    }
    let query_trends = query_terms
        .iter()
        .map(|q| {
            let term = q.as_ref().trim().to_lowercase();
            word_trend(lb, topic, &term).map(|series| QueryTrend { term, series })
        })
        .collect::<Result<_>>()?;
    Ok(EvolutionReport {
        topic,
        selection: None,
        rows,
        query_trends,
    })
}

/// Writes `report.json`, `trends.csv`, `topwords.csv`, `trends.svg` and
/// `topwords.svg` into `dir`.
pub fn export_report(report: &EvolutionReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, bytes: &[u8]| {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
    };
    write("report.json", &to_json_bytes(report))?;

    let mut trends = String::from("term,year,probability\n");
    for q in &report.query_trends {
        for p in &q.series {
            writeln!(trends, "{},{},{:e}", q.term, p.year, p.probability).unwrap();
        }
    }
    write("trends.csv", trends.as_bytes())?;

    let mut top = String::from("year,rank,term,probability\n");
    for row in &report.rows {
        for (rank, w) in row.words.iter().enumerate() {
            writeln!(top, "{},{},{},{:e}", row.year, rank + 1, w.term, w.probability).unwrap();
        }
    }
    write("topwords.csv", top.as_bytes())?;

    let series: Vec<Series> = report
        .query_trends
        .iter()
        .map(|q| Series {
            label: q.term.clone(),
            points: q.series.iter().map(|p| (p.year as f64, p.probability)).collect(),
        })
        .collect();
    let title = format!("Topic {} word probabilities", report.topic);
    write("trends.svg", svg::line_chart(&title, "year", "probability", &series).as_bytes())?;

    let panels: Vec<svg::Panel> = report
        .rows
        .iter()
        .map(|r| svg::Panel {
            title: r.year.to_string(),
            bars: r.words.iter().map(|w| (w.term.clone(), w.probability)).collect(),
        })
        .collect();
    write("topwords.svg", svg::bar_panels(&format!("Topic {} top words", report.topic), &panels).as_bytes())?;
    Ok(())
}

pub fn load_report(path: &Path) -> Result<EvolutionReport> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn session_years() -> Vec<i32> {
        (1995..=2023).filter(|&y| y != 2020).collect()
    }

    fn labeled(t: usize, k: usize, values: Vec<f64>, terms: &[&str]) -> LabeledBeta {
        let v = terms.len();
        LabeledBeta::new(
            BetaTensor::new(t, k, v, values).unwrap(),
            Vocabulary::new(terms.iter().map(|s| s.to_string()).collect()).unwrap(),
            (2000..2000 + t as i32).collect(),
        )
        .unwrap()
    }

    #[test]
    fn tie_break_by_id() {
        assert_eq!(top_word_ids(&[0.25; 4], 3), vec![0, 1, 2]);
        assert_eq!(top_word_ids(&[0.5, 0.3, 0.2], 2), vec![0, 1]);
        assert_eq!(top_word_ids(&[0.1, 0.3, 0.3, 0.3], 4), vec![1, 2, 3, 0]);
    }

    #[test]
    fn top_words_errors() {
        let lb = labeled(1, 1, vec![0.5, 0.5], &["a", "b"]);
        assert!(top_words(&lb, 1, 0, 1).is_err());
        assert!(top_words(&lb, 0, 1, 1).is_err());
        assert!(top_words(&lb, 0, 0, 3).is_err());
    }

    #[test]
    fn keyword_selection() {
        // topic 1 holds all the keyword mass
        let lb = labeled(2, 2, vec![0.45, 0.45, 0.1, 0.05, 0.05, 0.9, 0.4, 0.4, 0.2, 0.1, 0.1, 0.8], &["aa", "bb", "carbon"]);
        let s = select_topic_by_keywords(&lb, &["carbon", "storage"]).unwrap();
        assert_eq!(s.topic, 1);
        assert_eq!(s.missing_keywords, vec!["storage".to_string()]);
        assert!((s.scores[1] - 0.85).abs() < 1e-12);
        let dup = select_topic_by_keywords(&lb, &["CARBON", "carbon", " Carbon "]).unwrap();
        assert_eq!(dup.scores, select_topic_by_keywords(&lb, &["carbon"]).unwrap().scores);
        assert!(select_topic_by_keywords(&lb, &["storage"]).is_err());

        let same = labeled(1, 3, vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5], &["carbon", "x"]);
        assert_eq!(select_topic_by_keywords(&same, &DEFAULT_KEYWORDS).unwrap().topic, 0);
    }

    #[test]
    fn trend_recovers_constructed_ramp() {
        let t_n = 5;
        let mut values = Vec::new();
        for t in 0..t_n {
            let r = 0.1 + 0.05 * t as f64;
            values.extend([r, 1.0 - r]);
        }
        let lb = labeled(t_n, 1, values, &["finance", "other"]);
        let s = word_trend(&lb, 0, "finance").unwrap();
        for (t, p) in s.iter().enumerate() {
            assert_eq!(p.year, 2000 + t as i32);
            assert_eq!(p.probability, 0.1 + 0.05 * t as f64);
        }
        match word_trend(&lb, 0, "fin") {
            Err(Error::UnknownTerm { suggestions, .. }) => assert_eq!(suggestions, vec!["finance".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn six_year_rows_over_session_years() {
        let years = session_years();
        assert_eq!(years.len(), 28);
        assert_eq!(report_years(&years, 1995, 6).unwrap(), vec![1995, 2001, 2007, 2013, 2019, 2023]);
        assert_eq!(report_years(&years, 1995, 40).unwrap(), vec![1995, 2023]);
        assert!(report_years(&years, 2020, 6).is_err());
        // 2020 is equidistant from 2019 and 2021
        assert_eq!(snap_year(&years, 2020), 2019);
    }

    proptest! {
        #[test]
        fn snapping_is_idempotent(target in 1980i32..2040) {
            let years = session_years();
            let y = snap_year(&years, target);
            prop_assert_eq!(snap_year(&years, y), y);
        }
    }
}
