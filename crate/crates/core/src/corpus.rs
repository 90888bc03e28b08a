//! Synthetic summary-first caption corpus.
//!
//! Every record pairs an image vector with a caption whose first sentence
//! names all of the record's concepts (the summary shortcut) and whose
//! remaining sentences each elaborate exactly one concept with distractor
//! words. Concept sets are unique per record, so a bag-of-words match over
//! the detail sentences alone identifies the record — retrieval is solvable
//! without ever reading the summary.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augmentation::PAD_SENTENCE;
use crate::text_pipeline::Vocabulary;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid corpus spec: {0}")]
    SpecInvalid(String),
    #[error("corpus file is empty")]
    Empty,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("missing corpus schema header")]
    MissingHeader,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryMode {
    /// "a photo of x, y and z."
    Union,
    /// "an image showing x, y and z together."
    ParaphraseLite,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticCorpusSpec {
    pub n_samples: usize,
    pub concepts_per_image: usize,
    pub sentences_min: usize,
    pub sentences_max: usize,
    /// Number of distinct concept nouns; also the image vector dimension.
    pub vocab_size: usize,
    pub summary_mode: SummaryMode,
    pub image_noise_sigma: f64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        SyntheticCorpusSpec {
            n_samples: 2000,
            concepts_per_image: 3,
            sentences_min: 4,
            sentences_max: 6,
            vocab_size: 24,
            summary_mode: SummaryMode::Union,
            image_noise_sigma: 0.05,
        }
    }
}

const NOUNS: &[&str] = &[
    "boat", "cat", "dog", "tree", "house", "car", "bird", "flower", "mountain", "river", "bridge",
    "lamp", "chair", "horse", "sheep", "tram", "plane", "tower", "fountain", "bench", "kite",
    "bottle", "guitar", "piano", "clock", "door", "statue", "tent", "wagon", "mirror", "ladder",
    "basket",
];

const ADJECTIVES: &[&str] = &[
    "bright", "small", "large", "old", "quiet", "shiny", "dusty", "colorful", "round", "narrow",
    "tall", "soft",
];

const PLACES: &[&str] = &[
    "background", "corner", "foreground", "distance", "center", "shade", "middle", "edge",
];

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let fail = |m: String| Err(CorpusError::SpecInvalid(m));
        if self.n_samples == 0 {
            return fail("n_samples must be positive".into());
        }
        if self.sentences_min < 2 {
            return fail("need at least 2 sentences (summary + one detail)".into());
        }
        if self.sentences_max < self.sentences_min {
            return fail("sentences_max below sentences_min".into());
        }
        if self.concepts_per_image == 0 || self.concepts_per_image > self.vocab_size {
            return fail(format!(
                "concepts_per_image {} outside 1..={}",
                self.concepts_per_image, self.vocab_size
            ));
        }
        if self.vocab_size > NOUNS.len() {
            return fail(format!("vocab_size capped at {}", NOUNS.len()));
        }
        if self.image_noise_sigma < 0.0 {
            return fail("image_noise_sigma must be non-negative".into());
        }
        // unique concept sets need enough combinations
        let mut combos: u128 = 1;
        for i in 0..self.concepts_per_image {
            combos = combos.saturating_mul((self.vocab_size - i) as u128);
            combos /= (i + 1) as u128;
        }
        if combos < self.n_samples as u128 {
            return fail(format!(
                "only {combos} distinct concept sets for {} samples",
                self.n_samples
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: u64,
    pub caption: String,
    pub concepts: Vec<String>,
    pub image: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Corpus {
    pub spec: SyntheticCorpusSpec,
    pub records: Vec<CorpusRecord>,
}

fn join_concepts(words: &[&str]) -> String {
    match words {
        [] => unreachable!("validated non-empty"),
        [only] => (*only).to_string(),
        [head @ .., last] => format!("{} and {}", head.join(", "), last),
    }
}

/// Generate a deterministic corpus from the spec and RNG.
pub fn generate_corpus<R: Rng + ?Sized>(
    spec: &SyntheticCorpusSpec,
    rng: &mut R,
) -> Result<Corpus, CorpusError> {
    spec.validate()?;
    let nouns = &NOUNS[..spec.vocab_size];
    let m = spec.concepts_per_image;
    let noise = Normal::new(0.0, spec.image_noise_sigma.max(f64::MIN_POSITIVE))
        .expect("valid sigma");
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut records = Vec::with_capacity(spec.n_samples);
    for id in 0..spec.n_samples {
        // unique sorted concept index set, by rejection
        let concept_idx: Vec<usize> = loop {
            let mut pool: Vec<usize> = (0..spec.vocab_size).collect();
            for i in 0..m {
                let j = rng.random_range(i..pool.len());
                pool.swap(i, j);
            }
            let mut pick: Vec<usize> = pool[..m].to_vec();
            pick.sort_unstable();
            if seen.insert(pick.clone()) {
                break pick;
            }
        };
        let concepts: Vec<&str> = concept_idx.iter().map(|&i| nouns[i]).collect();

        let k = rng.random_range(spec.sentences_min..=spec.sentences_max);
        let mut sentences = Vec::with_capacity(k);
        let list = join_concepts(&concepts);
        sentences.push(match spec.summary_mode {
            SummaryMode::Union => format!("a photo of {list}."),
            SummaryMode::ParaphraseLite => format!("an image showing {list} together."),
        });
        for i in 0..k - 1 {
            let noun = concepts[i % m];
            let adj = *ADJECTIVES.choose(rng).expect("non-empty");
            let place = *PLACES.choose(rng).expect("non-empty");
            let s = match rng.random_range(0..3u8) {
                0 => format!("the {noun} appears {adj} in the {place}."),
                1 => format!("a {adj} {noun} stands near the {place}."),
                _ => format!("you can spot the {adj} {noun} toward the {place}."),
            };
            sentences.push(s);
        }
        let caption = sentences.join(" ");

        let mut image = vec![0.0f64; spec.vocab_size];
        for &ci in &concept_idx {
            image[ci] = 1.0;
        }
        if spec.image_noise_sigma > 0.0 {
            for x in image.iter_mut() {
                *x += noise.sample(rng);
            }
        }
        records.push(CorpusRecord {
            id: id as u64,
            caption,
            concepts: concepts.iter().map(|s| s.to_string()).collect(),
            image,
        });
    }
    Ok(Corpus {
        spec: spec.clone(),
        records,
    })
}

#[derive(Serialize, Deserialize)]
struct Header<'a> {
    schema: &'a str,
    spec: SyntheticCorpusSpec,
}

const SCHEMA: &str = "longcap-corpus/1";

impl Corpus {
    /// Image vector dimensionality.
    pub fn image_dim(&self) -> usize {
        self.spec.vocab_size
    }

    /// Token vocabulary over all captions plus the pad filler sentence.
    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::build(
            self.records
                .iter()
                .map(|r| r.caption.as_str())
                .chain(std::iter::once(PAD_SENTENCE)),
        )
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), CorpusError> {
        let header = Header {
            schema: SCHEMA,
            spec: self.spec.clone(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut lines = reader.lines();
        let first = lines.next().ok_or(CorpusError::Empty)??;
        let header: Header = serde_json::from_str(&first).map_err(|_| CorpusError::MissingHeader)?;
        if header.schema != SCHEMA {
            return Err(CorpusError::MissingHeader);
        }
        let mut records = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line)?);
        }
        if records.is_empty() {
            return Err(CorpusError::Empty);
        }
        Ok(Corpus {
            spec: header.spec,
            records,
        })
    }
}
