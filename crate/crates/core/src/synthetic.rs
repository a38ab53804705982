//! Synthetic corpora: bag-of-words documents sampled from a planted dynamic
//! topic model (with its ground-truth β), and year-stamped policy-like prose
//! for exercising the preprocessing pipeline.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};

use crate::corpus::{permutation, BowDocument, DatasetMeta, Fractions, RawCorpus, RawRecord, TimeSlicedCorpus, Vocabulary};
use crate::error::{Error, Result};
use crate::model::BetaTensor;
use crate::numkit::ops::softmax_in_place;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantedConfig {
    pub num_topics: usize,
    pub vocab_size: usize,
    pub num_slices: usize,
    pub docs_per_slice: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Standard deviation of the per-slice random-walk step of topic logits.
    pub drift: f64,
    /// Standard deviation of the per-slice step of the mean topic logits.
    pub eta_drift: f64,
    pub first_year: i32,
    pub fractions: Fractions,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            num_topics: 3,
            vocab_size: 50,
            num_slices: 5,
            docs_per_slice: 2000,
            min_len: 30,
            max_len: 60,
            drift: 0.1,
            eta_drift: 0.3,
            first_year: 2001,
            fractions: Fractions::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PlantedCorpus {
    pub corpus: TimeSlicedCorpus,
    /// Ground-truth topic-word distributions, `T × K × V`.
    pub beta: BetaTensor,
}

/// Samples documents from a dynamic topic model whose topics own disjoint
/// word blocks (logits `4 − 0.25·rank` inside the block, `−1` elsewhere)
/// and drift by a Gaussian random walk over slices.
pub fn planted_corpus(cfg: &PlantedConfig) -> Result<PlantedCorpus> {
    let (k_n, v_n, t_n) = (cfg.num_topics, cfg.vocab_size, cfg.num_slices);
    if k_n == 0 || t_n == 0 || v_n < k_n || cfg.min_len == 0 || cfg.min_len > cfg.max_len || cfg.docs_per_slice == 0 {
        return Err(Error::Invalid(format!("bad planted corpus configuration {cfg:?}")));
    }
    cfg.fractions.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let step = Normal::new(0.0, cfg.drift).map_err(|e| Error::Invalid(e.to_string()))?;
    let eta_step = Normal::new(0.0, cfg.eta_drift).map_err(|e| Error::Invalid(e.to_string()))?;

    let block = v_n / k_n;
    let mut logits = vec![-1.0; k_n * v_n];
    for k in 0..k_n {
        for r in 0..block {
            logits[k * v_n + k * block + r] = 4.0 - 0.25 * r as f64;
        }
    }
    let mut beta = Vec::with_capacity(t_n * k_n * v_n);
    for t in 0..t_n {
        if t > 0 {
            logits.iter_mut().for_each(|x| *x += step.sample(&mut rng));
        }
        let mut b = logits.clone();
        for row in b.chunks_mut(v_n) {
            softmax_in_place(row);
        }
        beta.extend(b);
    }
    let beta = BetaTensor::new(t_n, k_n, v_n, beta)?;

    let mut eta: Vec<f64> = (0..k_n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mut docs = Vec::with_capacity(t_n * cfg.docs_per_slice);
    for t in 0..t_n {
        if t > 0 {
            eta.iter_mut().for_each(|x| *x += eta_step.sample(&mut rng));
        }
        let block_t = beta.slice(t);
        for _ in 0..cfg.docs_per_slice {
            let mut theta: Vec<f64> = eta.iter().map(|e| e + rng.sample::<f64, _>(StandardNormal)).collect();
            softmax_in_place(&mut theta);
            let mix: Vec<f64> = (0..v_n).map(|w| (0..k_n).map(|k| theta[k] * block_t[k * v_n + w]).sum()).collect();
            let words = WeightedIndex::new(&mix).map_err(|e| Error::Invalid(e.to_string()))?;
            let len = rng.random_range(cfg.min_len..=cfg.max_len);
            let pairs: Vec<(u32, u32)> = (0..len).map(|_| (words.sample(&mut rng) as u32, 1)).collect();
            docs.push(BowDocument::new(t, pairs));
        }
    }

    let (_, n_val, n_test) = cfg.fractions.sizes(docs.len());
    let order = permutation(docs.len(), cfg.seed);
    let mut shuffled: Vec<BowDocument> = order.iter().map(|&i| docs[i].clone()).collect();
    let test = shuffled.split_off(shuffled.len() - n_test);
    let val = shuffled.split_off(shuffled.len() - n_val);
    let width = (v_n - 1).to_string().len();
    let corpus = TimeSlicedCorpus {
        vocabulary: Vocabulary::new((0..v_n).map(|w| format!("w{w:0width$}")).collect())?,
        slices: (0..t_n as i32).map(|t| cfg.first_year + t).collect(),
        train: shuffled,
        val,
        test,
        meta: DatasetMeta {
            min_df: 1,
            seed: cfg.seed,
            fractions: cfg.fractions,
        },
    };
    corpus.validate()?;
    Ok(PlantedCorpus { corpus, beta })
}

/// The 28 session years 1995–2023 without 2020.
pub fn session_years() -> Vec<i32> {
    (1995..=2023).filter(|&y| y != 2020).collect()
}

const THEMES: [(&str, &[&str]); 6] = [
    (
        "ccs",
        &[
            "carbon", "capture", "storage", "geological", "dioxide", "ccs", "formations", "injection", "sites", "monitoring", "leakage",
            "reservoirs", "permanence", "sequestration",
        ],
    ),
    (
        "finance",
        &[
            "finance", "financial", "fund", "gef", "resources", "contributions", "mobilization", "donors", "grants", "investment",
            "mechanism", "replenishment",
        ],
    ),
    (
        "implementation",
        &[
            "implementation", "reporting", "review", "compliance", "inventories", "guidelines", "communications", "parties",
            "procedures", "transparency", "verification", "commitments",
        ],
    ),
    (
        "greenhouse",
        &[
            "greenhouse", "gas", "emissions", "reduction", "mitigation", "targets", "protocol", "annex", "limitation", "levels",
            "baseline", "trading",
        ],
    ),
    (
        "adaptation",
        &[
            "adaptation", "vulnerable", "developing", "resilience", "impacts", "loss", "damage", "countries", "least", "island",
            "risk", "plans",
        ],
    ),
    (
        "forests",
        &[
            "forests", "deforestation", "degradation", "land", "use", "redd", "conservation", "sinks", "forestry", "sustainable",
            "management", "tropical",
        ],
    ),
];

const FILLER: [&str; 24] = [
    "the", "conference", "of", "the", "parties", "decides", "requests", "secretariat", "to", "and", "further", "notes", "with",
    "appreciation", "invites", "subsidiary", "body", "for", "scientific", "technological", "advice", "session", "article", "paragraph",
];

/// Relative weight of each theme in `year`: CCS rises after 2005, finance
/// and adaptation grow steadily, the greenhouse/protocol theme fades.
fn theme_weights(year: i32) -> [f64; 6] {
    let s = (year - 1995) as f64 / 28.0;
    let ccs = if year >= 2005 { 0.2 + 1.2 * ((year - 2005) as f64 / 18.0) } else { 0.05 };
    [ccs, 0.4 + s, 1.0, 1.4 - s, 0.3 + 1.2 * s, 0.5 + 0.5 * (6.0 * s).sin().abs()]
}

/// Year-stamped decision texts with `paragraphs_per_doc` blank-line
/// separated paragraphs each, mixing themed vocabulary with boilerplate.
pub fn policy_corpus(years: &[i32], docs_per_year: usize, paragraphs_per_doc: usize, seed: u64) -> RawCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(years.len() * docs_per_year);
    for &year in years {
        let themes = WeightedIndex::new(theme_weights(year)).unwrap();
        for _ in 0..docs_per_year {
            let mut paragraphs = Vec::with_capacity(paragraphs_per_doc);
            for _ in 0..paragraphs_per_doc {
                let theme = THEMES[themes.sample(&mut rng)].1;
                let len = rng.random_range(12..=28);
                let mut words = Vec::with_capacity(len);
                for i in 0..len {
                    let w = if rng.random_bool(0.55) {
                        theme[rng.random_range(0..theme.len())]
                    } else {
                        FILLER[rng.random_range(0..FILLER.len())]
                    };
                    words.push(if i == 0 { capitalize(w) } else { w.to_string() });
                }
                paragraphs.push(format!("{}.", words.join(" ")));
            }
            records.push(RawRecord {
                year,
                text: paragraphs.join("\n\n"),
            });
        }
    }
    RawCorpus { records }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Serializes a raw corpus as a `year,text` CSV.
pub fn to_csv(raw: &RawCorpus) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["year", "text"])?;
    for r in &raw.records {
        w.write_record([r.year.to_string().as_str(), r.text.as_str()])?;
    }
    w.into_inner().map_err(|e| Error::Invalid(e.to_string()))
}
