//! Cohort ingestion, validation, CSV round-tripping, and deterministic
//! synthesis.
//!
//! A respondent is 20 ratings (raw 0..=10, stored as value/10) plus the
//! background answers BQ1..BQ9. BQ3 is free text: it is carried through
//! verbatim and never analyzed.

use crate::seed::{self, Categorical};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

/// The numeric-coded background questions, in analysis order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "UPPERCASE")]
pub enum Bq {
    Bq1,
    Bq2,
    Bq4,
    Bq5,
    Bq6,
    Bq7,
    Bq8,
    Bq9,
}

pub const ALL_BQS: [Bq; 8] = [
    Bq::Bq1,
    Bq::Bq2,
    Bq::Bq4,
    Bq::Bq5,
    Bq::Bq6,
    Bq::Bq7,
    Bq::Bq8,
    Bq::Bq9,
];

impl Bq {
    pub fn name(self) -> &'static str {
        match self {
            Bq::Bq1 => "BQ1",
            Bq::Bq2 => "BQ2",
            Bq::Bq4 => "BQ4",
            Bq::Bq5 => "BQ5",
            Bq::Bq6 => "BQ6",
            Bq::Bq7 => "BQ7",
            Bq::Bq8 => "BQ8",
            Bq::Bq9 => "BQ9",
        }
    }

    /// Admissible answer range; upper bound None means unbounded (age).
    pub fn range(self) -> (i64, Option<i64>) {
        match self {
            Bq::Bq1 | Bq::Bq5 | Bq::Bq6 | Bq::Bq7 => (1, Some(9)),
            Bq::Bq2 | Bq::Bq4 | Bq::Bq8 => (1, Some(2)),
            Bq::Bq9 => (16, None),
        }
    }

    fn admits(self, v: i64) -> bool {
        let (lo, hi) = self.range();
        v >= lo && hi.map_or(true, |h| v <= h)
    }
}

impl fmt::Display for Bq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Bq {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL_BQS
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown background question {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundAnswers {
    pub bq1: i64,
    pub bq2: i64,
    /// Verbatim multi-select text, excluded from every analysis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bq3: Option<String>,
    pub bq4: i64,
    pub bq5: i64,
    pub bq6: i64,
    pub bq7: i64,
    pub bq8: i64,
    pub bq9: i64,
}

impl BackgroundAnswers {
    pub fn get(&self, bq: Bq) -> i64 {
        match bq {
            Bq::Bq1 => self.bq1,
            Bq::Bq2 => self.bq2,
            Bq::Bq4 => self.bq4,
            Bq::Bq5 => self.bq5,
            Bq::Bq6 => self.bq6,
            Bq::Bq7 => self.bq7,
            Bq::Bq8 => self.bq8,
            Bq::Bq9 => self.bq9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Respondent {
    pub id: String,
    /// ES1..ES20 transformed to the unit interval (multiples of 0.1).
    pub ratings: [f64; 20],
    pub background: BackgroundAnswers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub respondents: Vec<Respondent>,
    pub source: String,
}

impl Cohort {
    pub fn len(&self) -> usize {
        self.respondents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.respondents.is_empty()
    }

    /// Transformed ratings of one expression statement (0-based index).
    pub fn rating_column(&self, es: usize) -> Vec<f64> {
        assert!(es < 20, "expression statement index out of range");
        self.respondents.iter().map(|r| r.ratings[es]).collect()
    }

    pub fn background_column(&self, bq: Bq) -> Vec<i64> {
        self.respondents.iter().map(|r| r.background.get(bq)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DatasetError {
    #[error("empty input: no data rows")]
    EmptyFile,
    #[error("cohort needs at least 2 rows, found {0}")]
    TooFewRows(usize),
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error("data row {row}, column {column}: value {value:?} out of range")]
    OutOfRangeValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("duplicate respondent id {0:?}")]
    DuplicateId(String),
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for DatasetError {
    fn from(e: csv::Error) -> Self {
        DatasetError::Csv(e.to_string())
    }
}

/// Raw 11-point rating to the unit interval.
pub fn transform_rating(raw: u8) -> f64 {
    assert!(raw <= 10, "raw rating out of range");
    f64::from(raw) / 10.0
}

const ES_COUNT: usize = 20;

fn es_name(i: usize) -> String {
    format!("ES{}", i + 1)
}

/// Parse a cohort from CSV with a header row naming columns id, ES1..ES20,
/// BQ1, BQ2, BQ4..BQ9 (BQ3 optional, carried verbatim). Column order is
/// free; unknown columns are ignored; row order is preserved.
pub fn parse_cohort(input: impl Read) -> Result<Cohort, DatasetError> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(input);
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| col(name).ok_or_else(|| DatasetError::MissingColumn(name.into()));

    let id_col = require("id")?;
    let mut es_cols = [0usize; ES_COUNT];
    for (i, c) in es_cols.iter_mut().enumerate() {
        *c = require(&es_name(i))?;
    }
    let mut bq_cols = [0usize; 8];
    for (i, bq) in ALL_BQS.iter().enumerate() {
        bq_cols[i] = require(bq.name())?;
    }
    let bq3_col = col("BQ3");

    let mut respondents = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = idx + 1; // 1-based data row, header excluded
        let cell = |c: usize| record.get(c).unwrap_or("");

        let id = cell(id_col).to_string();
        if !seen.insert(id.clone()) {
            return Err(DatasetError::DuplicateId(id));
        }

        let mut ratings = [0.0; ES_COUNT];
        for (i, &c) in es_cols.iter().enumerate() {
            let raw: u8 = cell(c)
                .trim()
                .parse()
                .ok()
                .filter(|&v| v <= 10)
                .ok_or_else(|| DatasetError::OutOfRangeValue {
                    row,
                    column: es_name(i),
                    value: cell(c).to_string(),
                })?;
            ratings[i] = transform_rating(raw);
        }

        let mut parsed = [0i64; 8];
        for (i, bq) in ALL_BQS.iter().enumerate() {
            parsed[i] = cell(bq_cols[i])
                .trim()
                .parse()
                .ok()
                .filter(|&v| bq.admits(v))
                .ok_or_else(|| DatasetError::OutOfRangeValue {
                    row,
                    column: bq.name().into(),
                    value: cell(bq_cols[i]).to_string(),
                })?;
        }
        let bq3 = bq3_col.map(cell).filter(|s| !s.is_empty()).map(String::from);

        respondents.push(Respondent {
            id,
            ratings,
            background: BackgroundAnswers {
                bq1: parsed[0],
                bq2: parsed[1],
                bq3,
                bq4: parsed[2],
                bq5: parsed[3],
                bq6: parsed[4],
                bq7: parsed[5],
                bq8: parsed[6],
                bq9: parsed[7],
            },
        });
    }

    match respondents.len() {
        0 => Err(DatasetError::EmptyFile),
        1 => Err(DatasetError::TooFewRows(1)),
        _ => Ok(Cohort { respondents, source: "csv".into() }),
    }
}

/// Write a cohort back to CSV in the canonical column order. Ratings are
/// written as their raw 0..=10 values, so parse(write(c)) = c.
pub fn write_cohort(cohort: &Cohort, out: impl Write) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(out);
    let with_bq3 = cohort
        .respondents
        .iter()
        .any(|r| r.background.bq3.is_some());

    let mut header: Vec<String> = vec!["id".into()];
    header.extend((0..ES_COUNT).map(es_name));
    for bq in ALL_BQS {
        header.push(bq.name().into());
        if bq == Bq::Bq2 && with_bq3 {
            header.push("BQ3".into());
        }
    }
    w.write_record(&header)?;

    for r in &cohort.respondents {
        let mut record: Vec<String> = vec![r.id.clone()];
        for &rating in &r.ratings {
            record.push(((rating * 10.0).round() as u8).to_string());
        }
        for bq in ALL_BQS {
            record.push(r.background.get(bq).to_string());
            if bq == Bq::Bq2 && with_bq3 {
                record.push(r.background.bq3.clone().unwrap_or_default());
            }
        }
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| DatasetError::Csv(e.to_string()))?;
    Ok(())
}

/// How background marginals are realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Deal out answer values so the integer marginals hold exactly.
    ExactQuota,
    /// Independent draws from the normalized weights.
    Iid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    #[default]
    Below,
    AtOrAbove,
}

/// A planted mean shift on selected expression statements, conditioned on a
/// background answer threshold. The shift acts on the 0-1 scale and the
/// result is re-quantized to the 11-point grid (round half away from zero,
/// clamped).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    /// 1-based expression statement indices.
    pub es: Vec<usize>,
    pub bq: Bq,
    pub cut: i64,
    #[serde(default)]
    pub side: Side,
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub size: usize,
    pub sampling: Sampling,
    /// Per-question answer-value weights; counts for exact-quota mode.
    pub backgrounds: BTreeMap<Bq, BTreeMap<i64, f64>>,
    /// Either one shared 11-weight row or 20 per-statement rows.
    pub ratings: Vec<Vec<f64>>,
    #[serde(default)]
    pub effects: Vec<Effect>,
}

impl SynthSpec {
    pub fn from_json(json: &str) -> Result<SynthSpec, DatasetError> {
        let spec: SynthSpec =
            serde_json::from_str(json).map_err(|e| DatasetError::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::InvalidSpec(m));
        if self.size < 2 {
            return bad(format!("size must be at least 2, got {}", self.size));
        }
        for bq in ALL_BQS {
            let marginal = match self.backgrounds.get(&bq) {
                Some(m) if !m.is_empty() => m,
                _ => return bad(format!("{bq} marginal missing or empty")),
            };
            let mut sum = 0.0;
            for (&v, &w) in marginal {
                if !bq.admits(v) {
                    return bad(format!("{bq} value {v} out of range"));
                }
                if !(w >= 0.0) {
                    return bad(format!("{bq} weight for {v} is negative"));
                }
                sum += w;
            }
            if sum <= 0.0 {
                return bad(format!("{bq} weights sum to zero"));
            }
            if self.sampling == Sampling::ExactQuota {
                let total: f64 = marginal.values().sum();
                if marginal.values().any(|&w| w.fract() != 0.0) {
                    return bad(format!("{bq} exact-quota counts must be integers"));
                }
                if total != self.size as f64 {
                    return bad(format!(
                        "{bq} exact-quota counts sum to {total}, want {}",
                        self.size
                    ));
                }
            }
        }
        if self.ratings.len() != 1 && self.ratings.len() != ES_COUNT {
            return bad(format!(
                "ratings must have 1 shared row or {ES_COUNT} rows, got {}",
                self.ratings.len()
            ));
        }
        for (i, row) in self.ratings.iter().enumerate() {
            if row.len() != 11 {
                return bad(format!("ratings row {i} must have 11 weights"));
            }
            if row.iter().any(|&w| !(w >= 0.0)) {
                return bad(format!("ratings row {i} has a negative weight"));
            }
            if row.iter().sum::<f64>() <= 0.0 {
                return bad(format!("ratings row {i} sums to zero"));
            }
        }
        for (i, eff) in self.effects.iter().enumerate() {
            if eff.es.is_empty() || eff.es.iter().any(|&e| e == 0 || e > ES_COUNT) {
                return bad(format!("effect {i}: es indices must be in 1..=20"));
            }
            if !(eff.shift >= -1.0 && eff.shift <= 1.0) {
                return bad(format!("effect {i}: shift {} outside [-1,1]", eff.shift));
            }
        }
        Ok(())
    }
}

/// Deterministic for (spec, seed): background answers first (one column per
/// BQ in fixed order), then ratings respondent-major, then planted effects.
/// Single-threaded by construction, so output never depends on worker count.
pub fn synthesize_cohort(spec: &SynthSpec, seed: u64) -> Result<Cohort, DatasetError> {
    spec.validate()?;
    let n = spec.size;
    let mut rng = seed::stream(seed, 0);

    let mut answers: BTreeMap<Bq, Vec<i64>> = BTreeMap::new();
    for bq in ALL_BQS {
        let marginal = &spec.backgrounds[&bq];
        let column = match spec.sampling {
            Sampling::ExactQuota => {
                let mut pool = Vec::with_capacity(n);
                for (&v, &c) in marginal {
                    pool.extend(std::iter::repeat(v).take(c as usize));
                }
                seed::shuffle(&mut rng, &mut pool);
                pool
            }
            Sampling::Iid => {
                let values: Vec<i64> = marginal.keys().copied().collect();
                let weights: Vec<f64> = marginal.values().copied().collect();
                let cat = Categorical::new(&weights).expect("validated weights");
                (0..n).map(|_| values[cat.sample(&mut rng)]).collect()
            }
        };
        answers.insert(bq, column);
    }

    let shared = spec.ratings.len() == 1;
    let cats: Vec<Categorical> = spec
        .ratings
        .iter()
        .map(|row| Categorical::new(row).expect("validated weights"))
        .collect();
    let mut raw = vec![[0i64; ES_COUNT]; n];
    for person in raw.iter_mut() {
        for (es, slot) in person.iter_mut().enumerate() {
            let cat = if shared { &cats[0] } else { &cats[es] };
            *slot = cat.sample(&mut rng) as i64;
        }
    }

    for eff in &spec.effects {
        let column = &answers[&eff.bq];
        for (person, &answer) in raw.iter_mut().zip(column) {
            let applies = match eff.side {
                Side::Below => answer < eff.cut,
                Side::AtOrAbove => answer >= eff.cut,
            };
            if applies {
                for &es in &eff.es {
                    let shifted = person[es - 1] as f64 + eff.shift * 10.0;
                    person[es - 1] = shifted.round().clamp(0.0, 10.0) as i64;
                }
            }
        }
    }

    let respondents = (0..n)
        .map(|i| {
            let mut ratings = [0.0; ES_COUNT];
            for (es, r) in ratings.iter_mut().enumerate() {
                *r = transform_rating(raw[i][es] as u8);
            }
            Respondent {
                id: format!("r{:04}", i + 1),
                ratings,
                background: BackgroundAnswers {
                    bq1: answers[&Bq::Bq1][i],
                    bq2: answers[&Bq::Bq2][i],
                    bq3: None,
                    bq4: answers[&Bq::Bq4][i],
                    bq5: answers[&Bq::Bq5][i],
                    bq6: answers[&Bq::Bq6][i],
                    bq7: answers[&Bq::Bq7][i],
                    bq8: answers[&Bq::Bq8][i],
                    bq9: answers[&Bq::Bq9][i],
                },
            }
        })
        .collect();

    Ok(Cohort {
        respondents,
        source: format!("synthetic(seed={seed})"),
    })
}
