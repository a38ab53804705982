//! wasm-bindgen wrapper around `tempora` for the static demo page in `www/`.
//!
//! A [`Demo`] owns one trained model. The page can ask for the top words of
//! a topic in a year, pick a topic by keywords, and draw word trends.

use tempora::analyze::{self, LabeledBeta};
use tempora::corpus::{self, Fractions, RawCorpus};
use tempora::model::ModelHyper;
use tempora::svg::{self, Series};
use tempora::synthetic::{policy_corpus, session_years};
use tempora::train::{self, TrainConfig};
use wasm_bindgen::prelude::*;

fn js<E: std::fmt::Display>(e: E) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    beta: LabeledBeta,
    elbo: Vec<f64>,
}

impl Demo {
    pub fn from_raw(raw: &RawCorpus, min_df: usize, topics: usize, epochs: usize, seed: u64) -> tempora::Result<Demo> {
        let docs = corpus::split_paragraphs(raw);
        let dataset = corpus::build_dataset(&docs, &corpus::default_stopwords(), min_df, Fractions::default(), seed)?;
        let config = TrainConfig {
            hyper: ModelHyper {
                num_topics: topics,
                embed_size: 32,
                theta_hidden: 64,
                eta_hidden: 32,
                ..ModelHyper::default()
            },
            epochs,
            batch_size: 64,
            lr: 0.02,
            seed,
            ..TrainConfig::default()
        }
        .resolve(&dataset)?;
        let (params, history) = train::train(&dataset, &config)?;
        let beta = LabeledBeta::new(train::export_beta(&params)?, dataset.vocabulary, dataset.slices)?;
        Ok(Demo { beta, elbo: history.train_elbo })
    }

    pub fn labeled(&self) -> &LabeledBeta {
        &self.beta
    }
}

#[wasm_bindgen]
impl Demo {
    /// Trains on the built-in synthetic policy corpus (28 session years, the
    /// same text as the bundled toy CSV).
    pub fn synthetic(topics: usize, epochs: usize, seed: u64) -> Result<Demo, JsError> {
        let raw = policy_corpus(&session_years(), 4, 4, 2023);
        Demo::from_raw(&raw, 5, topics, epochs, seed).map_err(js)
    }

    /// Trains on a `year,text` CSV supplied by the page.
    #[wasm_bindgen(js_name = fromCsv)]
    pub fn from_csv(csv: &str, min_df: usize, topics: usize, epochs: usize, seed: u64) -> Result<Demo, JsError> {
        let raw = corpus::read_yearly_csv(csv.as_bytes()).map_err(js)?;
        Demo::from_raw(&raw, min_df, topics, epochs, seed).map_err(js)
    }

    #[wasm_bindgen(getter)]
    pub fn years(&self) -> Vec<i32> {
        self.beta.years.clone()
    }

    #[wasm_bindgen(getter, js_name = numTopics)]
    pub fn num_topics(&self) -> usize {
        self.beta.beta.shape()[1]
    }

    #[wasm_bindgen(getter, js_name = vocabSize)]
    pub fn vocab_size(&self) -> usize {
        self.beta.vocabulary.len()
    }

    /// Per-epoch training ELBO per document.
    #[wasm_bindgen(getter)]
    pub fn elbo(&self) -> Vec<f64> {
        self.elbo.clone()
    }

    /// JSON array of `{term, probability}` for the slice nearest to `year`.
    #[wasm_bindgen(js_name = topWords)]
    pub fn top_words(&self, topic: usize, year: i32, n: usize) -> Result<String, JsError> {
        let year = analyze::snap_year(&self.beta.years, year);
        let slice = self.beta.years.iter().position(|&y| y == year).unwrap_or(0);
        let words = analyze::top_words(&self.beta, topic, slice, n).map_err(js)?;
        serde_json::to_string(&words).map_err(js)
    }

    /// JSON `{topic, scores, used_keywords, missing_keywords}`; `keywords` is comma separated.
    #[wasm_bindgen(js_name = selectTopic)]
    pub fn select_topic(&self, keywords: &str) -> Result<String, JsError> {
        let kws: Vec<&str> = keywords.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        let sel = analyze::select_topic_by_keywords(&self.beta, &kws).map_err(js)?;
        serde_json::to_string(&sel).map_err(js)
    }

    /// SVG line chart of p(term | topic, year) for comma-separated terms.
    #[wasm_bindgen(js_name = trendSvg)]
    pub fn trend_svg(&self, topic: usize, terms: &str) -> Result<String, JsError> {
        let mut series = Vec::new();
        for term in terms.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let points = analyze::word_trend(&self.beta, topic, term).map_err(js)?;
            series.push(Series {
                label: term.to_string(),
                points: points.iter().map(|p| (p.year as f64, p.probability)).collect(),
            });
        }
        Ok(svg::line_chart(&format!("topic {topic}"), "year", "probability", &series))
    }
}
