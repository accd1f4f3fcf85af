//! Python bindings over the cohort pipeline: parsing and synthesizing
//! questionnaire data, grouping, the rank/ANOVA test battery, profile
//! image encoding, network auditing, and the training/report loop.
//!
//! Long-running entry points (train, analyze) release the interpreter
//! lock so the rayon pool can use every core.

use std::fmt::Display;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::str::FromStr;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use rating_influence::dataset::{parse_cohort, synthesize_cohort, write_cohort, Bq, SynthSpec};
use rating_influence::encoder::{
    decode_profile, encode_profile as encode_ratings, read_pgm, write_pgm, LabeledImageSet,
};
use rating_influence::grouping::{
    chance_baseline, default_groupings, group_by_explicit_thresholds, group_three_most_even,
    group_two_by_mean, parse_grouping_config, DEFAULT_GROUPINGS_JSON,
};
use rating_influence::influence::{build_report, grouping_label, render_report, InfluenceReport};
use rating_influence::nn::canonical_network;
use rating_influence::stats::{self, TestKind, TestResult};
use rating_influence::trainer::{run_experiment, MetricSummary, TrainConfig};

fn value_err(e: impl Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: impl Display) -> PyErr {
    PyIOError::new_err(e.to_string())
}

fn parse_bq(name: &str) -> PyResult<Bq> {
    Bq::from_str(name).map_err(PyValueError::new_err)
}

/// 1-based ES index from Python -> 0-based column index.
fn es_index(es: usize) -> PyResult<usize> {
    if (1..=20).contains(&es) {
        Ok(es - 1)
    } else {
        Err(PyValueError::new_err(format!(
            "expression statement index must be in 1..=20, got {es}"
        )))
    }
}

fn train_config(
    config_json: Option<&str>,
    seed: Option<u64>,
    sequences: Option<usize>,
) -> PyResult<TrainConfig> {
    let mut cfg: TrainConfig = match config_json {
        Some(json) => serde_json::from_str(json).map_err(value_err)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Some(n) = sequences {
        cfg.sequences = n;
    }
    cfg.validate().map_err(value_err)?;
    Ok(cfg)
}

/// A parsed questionnaire cohort; rows are respondents, columns are the 20
/// rating statements plus the background answers.
#[pyclass(name = "Cohort", module = "rating_influence")]
pub struct PyCohort {
    inner: rating_influence::dataset::Cohort,
}

#[pymethods]
impl PyCohort {
    /// Parse a cohort from a CSV file on disk.
    #[staticmethod]
    fn from_csv(path: &str) -> PyResult<Self> {
        let file = File::open(path).map_err(io_err)?;
        let mut inner = parse_cohort(BufReader::new(file)).map_err(value_err)?;
        inner.source = path.to_string();
        Ok(PyCohort { inner })
    }

    /// Parse a cohort from CSV text.
    #[staticmethod]
    fn from_csv_str(text: &str) -> PyResult<Self> {
        let inner = parse_cohort(text.as_bytes()).map_err(value_err)?;
        Ok(PyCohort { inner })
    }

    /// Draw a synthetic cohort from a sampling-spec JSON document.
    #[staticmethod]
    #[pyo3(signature = (spec_json, seed = 0))]
    fn synthesize(spec_json: &str, seed: u64) -> PyResult<Self> {
        let spec = SynthSpec::from_json(spec_json).map_err(value_err)?;
        let inner = synthesize_cohort(&spec, seed).map_err(value_err)?;
        Ok(PyCohort { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Cohort(n={})", self.inner.len())
    }

    fn respondent_ids(&self) -> Vec<String> {
        self.inner.respondents.iter().map(|r| r.id.clone()).collect()
    }

    /// Ratings of one statement across the cohort; es is 1-based (1..=20).
    fn rating_column(&self, es: usize) -> PyResult<Vec<f64>> {
        Ok(self.inner.rating_column(es_index(es)?))
    }

    /// Answers to one background question, e.g. "BQ1".
    fn background_column(&self, bq: &str) -> PyResult<Vec<i64>> {
        Ok(self.inner.background_column(parse_bq(bq)?))
    }

    fn to_csv(&self, path: &str) -> PyResult<()> {
        let file = File::create(path).map_err(io_err)?;
        write_cohort(&self.inner, BufWriter::new(file)).map_err(io_err)
    }

    fn to_csv_str(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        write_cohort(&self.inner, &mut buf).map_err(value_err)?;
        String::from_utf8(buf).map_err(value_err)
    }

    /// Partition the cohort on one background question. Explicit `cuts` are
    /// ascending thresholds (group = number of cuts <= answer); omitting
    /// them selects the mean rule for two groups and the most-even rule for
    /// three.
    #[pyo3(signature = (bq, arity = 2, cuts = None))]
    fn group(&self, bq: &str, arity: usize, cuts: Option<Vec<i64>>) -> PyResult<PyGrouping> {
        let bq = parse_bq(bq)?;
        let inner = match (cuts, arity) {
            (Some(c), _) => group_by_explicit_thresholds(&self.inner, bq, &c),
            (None, 2) => group_two_by_mean(&self.inner, bq),
            (None, 3) => group_three_most_even(&self.inner, bq),
            (None, a) => {
                return Err(PyValueError::new_err(format!(
                    "automatic cut selection handles 2 or 3 groups, got {a}"
                )))
            }
        }
        .map_err(value_err)?;
        Ok(PyGrouping { inner })
    }
}

/// A two- or three-way partition of a cohort by one background question.
#[pyclass(name = "Grouping", module = "rating_influence")]
pub struct PyGrouping {
    inner: rating_influence::grouping::Grouping,
}

#[pymethods]
impl PyGrouping {
    #[getter]
    fn bq(&self) -> &'static str {
        self.inner.bq.name()
    }

    #[getter]
    fn arity(&self) -> usize {
        self.inner.arity
    }

    #[getter]
    fn thresholds(&self) -> Vec<i64> {
        self.inner.thresholds.clone()
    }

    #[getter]
    fn sizes(&self) -> Vec<usize> {
        self.inner.sizes.clone()
    }

    /// Per-respondent group index, cohort order.
    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels.clone()
    }

    /// Accuracy of always guessing the largest group.
    fn chance(&self) -> f64 {
        chance_baseline(&self.inner).value
    }

    /// Report-style description, e.g.
    /// "BQ1, two groups: x<7 (n1=263), x>=7 (n2=410)".
    fn label(&self) -> String {
        grouping_label(&self.inner)
    }

    /// Threshold description of one group, e.g. "x<7" or "6<=x<8".
    fn range_label(&self, group: usize) -> PyResult<String> {
        if group >= self.inner.arity {
            return Err(PyValueError::new_err(format!(
                "group index {group} out of range for {} groups",
                self.inner.arity
            )));
        }
        Ok(self.inner.range_label(group))
    }

    /// Ratings of one statement (1-based) split into per-group lists.
    fn split_ratings(&self, cohort: &PyCohort, es: usize) -> PyResult<Vec<Vec<f64>>> {
        if cohort.inner.len() != self.inner.labels.len() {
            return Err(PyValueError::new_err(format!(
                "grouping covers {} respondents, cohort has {}",
                self.inner.labels.len(),
                cohort.inner.len()
            )));
        }
        Ok(self.inner.split_ratings(&cohort.inner, es_index(es)?))
    }

    fn __repr__(&self) -> String {
        format!(
            "Grouping({}, {} groups, cuts={:?})",
            self.inner.bq.name(),
            self.inner.arity,
            self.inner.thresholds
        )
    }
}

fn summary_dict<'py>(py: Python<'py>, s: &MetricSummary) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("mean", s.mean)?;
    d.set_item("median", s.median)?;
    d.set_item("sd", s.sd)?;
    Ok(d)
}

fn test_dict<'py>(py: Python<'py>, r: &TestResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let kind = match r.test_kind {
        TestKind::Wilcoxon => "wilcoxon",
        TestKind::KruskalWallis => "kruskal_wallis",
        TestKind::Anova => "anova",
    };
    d.set_item("test", kind)?;
    d.set_item("statistic", r.statistic)?;
    d.set_item("p_value", r.p_value)?;
    d.set_item("stars", r.stars.as_str())?;
    d.set_item("diff_of_means", r.diff_of_means)?;
    d.set_item("group_means", r.group_means.clone())?;
    d.set_item("group_medians", r.group_medians.clone())?;
    d.set_item("group_sds", r.group_sds.clone())?;
    Ok(d)
}

/// Two-sample rank-sum test (exact for small untied samples, otherwise the
/// tie-corrected normal approximation).
#[pyfunction]
fn wilcoxon_rank_sum<'py>(
    py: Python<'py>,
    a: Vec<f64>,
    b: Vec<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let r = stats::wilcoxon_rank_sum(&a, &b).map_err(value_err)?;
    test_dict(py, &r)
}

/// K-sample rank test with tie correction.
#[pyfunction]
fn kruskal_wallis<'py>(py: Python<'py>, groups: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
    let r = stats::kruskal_wallis(&groups).map_err(value_err)?;
    test_dict(py, &r)
}

/// One-way fixed-effects analysis of variance.
#[pyfunction]
fn anova_one_way<'py>(py: Python<'py>, groups: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
    let r = stats::anova_one_way(&groups).map_err(value_err)?;
    test_dict(py, &r)
}

/// Kendall tau-b with tie handling; exact p for small samples.
#[pyfunction]
fn kendall_tau_b<'py>(py: Python<'py>, x: Vec<f64>, y: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let r = stats::kendall_tau_b(&x, &y).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("tau", r.tau)?;
    d.set_item("p_value", r.p_value)?;
    d.set_item("n", r.n)?;
    Ok(d)
}

/// Encode a 20-rating profile as a binary PGM image (returned as bytes).
#[pyfunction]
fn encode_profile<'py>(py: Python<'py>, ratings: Vec<f64>) -> PyResult<Bound<'py, PyBytes>> {
    let arr: [f64; 20] = ratings.as_slice().try_into().map_err(|_| {
        PyValueError::new_err(format!("expected 20 ratings, got {}", ratings.len()))
    })?;
    for (i, r) in arr.iter().enumerate() {
        if !(0.0..=1.0).contains(r) {
            return Err(PyValueError::new_err(format!(
                "rating {} out of [0, 1]: {r}",
                i + 1
            )));
        }
    }
    let img = encode_ratings(&arr);
    Ok(PyBytes::new(py, &write_pgm(&img)))
}

/// Recover the 20 ratings from PGM bytes produced by encode_profile.
#[pyfunction]
fn decode_pgm(data: &[u8]) -> PyResult<Vec<f64>> {
    let img = read_pgm(data).map_err(value_err)?;
    Ok(decode_profile(&img).to_vec())
}

/// Layer-by-layer shape and parameter audit of the classifier network for
/// a given number of output classes.
#[pyfunction]
fn network_audit<'py>(py: Python<'py>, arity: usize) -> PyResult<Bound<'py, PyDict>> {
    let net = canonical_network(arity);
    let audit = net.audit().map_err(value_err)?;
    let layers = audit
        .iter()
        .map(|layer| {
            let d = PyDict::new(py);
            d.set_item("layer", layer.name)?;
            d.set_item("output_shape", layer.output_shape.dims())?;
            d.set_item("params", layer.params)?;
            Ok(d.unbind())
        })
        .collect::<PyResult<Vec<_>>>()?;
    let top = PyDict::new(py);
    top.set_item("layers", layers)?;
    top.set_item("total_params", net.total_params().map_err(value_err)?)?;
    Ok(top)
}

/// Train the full repeated-sequence experiment for one grouping and return
/// the aggregate metrics. `config_json` takes the same document as the CLI;
/// `seed` and `sequences` override single fields of it.
#[pyfunction]
#[pyo3(signature = (cohort, grouping, config_json = None, seed = None, sequences = None))]
fn train<'py>(
    py: Python<'py>,
    cohort: &PyCohort,
    grouping: &PyGrouping,
    config_json: Option<&str>,
    seed: Option<u64>,
    sequences: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = train_config(config_json, seed, sequences)?;
    let images = LabeledImageSet::from_grouping(&cohort.inner, &grouping.inner);
    let result = py
        .detach(|| run_experiment(&images, &cfg))
        .map_err(value_err)?;
    let agg = &result.aggregate;
    let d = PyDict::new(py);
    d.set_item("sequences", agg.sequences)?;
    d.set_item("epoch_step", summary_dict(py, &agg.epoch_step)?)?;
    d.set_item("train_loss", summary_dict(py, &agg.train_loss)?)?;
    d.set_item("train_acc", summary_dict(py, &agg.train_acc)?)?;
    d.set_item("val_loss", summary_dict(py, &agg.val_loss)?)?;
    d.set_item("val_acc", summary_dict(py, &agg.val_acc)?)?;
    Ok(d)
}

/// Run the whole influence analysis (test battery, training per grouping,
/// ranking, figures) and return the report as a JSON document. Groupings
/// default to the built-in thirteen.
#[pyfunction]
#[pyo3(signature = (cohort, groupings_json = None, config_json = None, seed = None,
                    sequences = None, delta_flag = 0.02, top_k = 5))]
#[allow(clippy::too_many_arguments)]
fn analyze(
    py: Python<'_>,
    cohort: &PyCohort,
    groupings_json: Option<&str>,
    config_json: Option<&str>,
    seed: Option<u64>,
    sequences: Option<usize>,
    delta_flag: f64,
    top_k: usize,
) -> PyResult<String> {
    let requests = match groupings_json {
        Some(json) => parse_grouping_config(json).map_err(value_err)?,
        None => default_groupings(),
    };
    let cfg = train_config(config_json, seed, sequences)?;
    let fcfg = rating_influence::influence::FindingsConfig { delta_flag, top_k };
    let inner = &cohort.inner;
    let report = py
        .detach(|| build_report(inner, &requests, &cfg, &fcfg))
        .map_err(value_err)?;
    serde_json::to_string_pretty(&report).map_err(value_err)
}

/// Render a report JSON document into its file set; returns
/// (relative path, contents) pairs ready to be written out.
#[pyfunction]
fn render_report_files(report_json: &str) -> PyResult<Vec<(String, String)>> {
    let report: InfluenceReport = serde_json::from_str(report_json).map_err(value_err)?;
    Ok(render_report(&report))
}

#[pymodule]
fn _native(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCohort>()?;
    m.add_class::<PyGrouping>()?;
    m.add_function(wrap_pyfunction!(wilcoxon_rank_sum, m)?)?;
    m.add_function(wrap_pyfunction!(kruskal_wallis, m)?)?;
    m.add_function(wrap_pyfunction!(anova_one_way, m)?)?;
    m.add_function(wrap_pyfunction!(kendall_tau_b, m)?)?;
    m.add_function(wrap_pyfunction!(encode_profile, m)?)?;
    m.add_function(wrap_pyfunction!(decode_pgm, m)?)?;
    m.add_function(wrap_pyfunction!(network_audit, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(render_report_files, m)?)?;
    m.add("DEFAULT_GROUPINGS_JSON", DEFAULT_GROUPINGS_JSON)?;
    Ok(())
}
