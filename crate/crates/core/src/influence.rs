//! Per-grouping analysis: the rank-test battery contrasted with the learned
//! classifier's validation accuracy over chance, plus the report bundle
//! (summary grid, appendix tables, figure data).

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Bq, Cohort};
use crate::encoder::LabeledImageSet;
use crate::grouping::{
    apply_request, chance_baseline, ChanceBaseline, Grouping, GroupingError, GroupingRequest,
};
use crate::seed;
use crate::stats::{
    anova_one_way, correlation_matrix, kruskal_wallis, stars, wilcoxon_rank_sum,
    CorrelationMatrix, Stars, StatsError, TestResult,
};
use crate::trainer::{run_experiment, AggregateMetrics, MetricSummary, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum InfluenceError {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Grouping(#[from] GroupingError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// One grouping's full record: the test battery, the experiment metrics,
/// and the chance contrast.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupingAnalysis {
    pub grouping: Grouping,
    /// Wilcoxon rank-sum for two groups, Kruskal-Wallis for three; one per
    /// expression statement.
    pub rank_tests: Vec<TestResult>,
    pub anova_tests: Vec<TestResult>,
    pub metrics: AggregateMetrics,
    pub chance: ChanceBaseline,
    /// metrics.val_acc.mean - chance.value, stored so readers need not
    /// recompute it.
    pub delta: f64,
}

impl GroupingAnalysis {
    /// Row label, e.g. "BQ1, two groups: x<7 (n1=263), x>=7 (n2=410)".
    pub fn label(&self) -> String {
        grouping_label(&self.grouping)
    }
}

pub fn grouping_label(g: &Grouping) -> String {
    let word = match g.arity {
        2 => "two groups",
        3 => "three groups",
        n => return format!("{}, {} groups", g.bq, n),
    };
    let parts: Vec<String> = (0..g.arity)
        .map(|k| format!("{} (n{}={})", g.range_label(k), k + 1, g.sizes[k]))
        .collect();
    format!("{}, {}: {}", g.bq, word, parts.join(", "))
}

/// The 20 rank tests (Wilcoxon or Kruskal-Wallis by arity) and the 20
/// one-way ANOVA counterparts for one grouping.
pub fn grouping_tests(
    cohort: &Cohort,
    g: &Grouping,
) -> Result<(Vec<TestResult>, Vec<TestResult>), StatsError> {
    let mut rank = Vec::with_capacity(20);
    let mut anova = Vec::with_capacity(20);
    for es in 0..20 {
        let groups = g.split_ratings(cohort, es);
        let r = match g.arity {
            2 => wilcoxon_rank_sum(&groups[0], &groups[1])?,
            _ => kruskal_wallis(&groups)?,
        };
        rank.push(r);
        anova.push(anova_one_way(&groups)?);
    }
    Ok((rank, anova))
}

/// Runs the test battery, encodes the cohort under the grouping's labels,
/// trains the experiment, and contrasts validation accuracy with chance.
pub fn analyze_grouping(
    cohort: &Cohort,
    g: &Grouping,
    cfg: &TrainConfig,
) -> Result<GroupingAnalysis, InfluenceError> {
    let (rank_tests, anova_tests) = grouping_tests(cohort, g)?;
    let images = LabeledImageSet::from_grouping(cohort, g);
    let result = run_experiment(&images, cfg)?;
    let chance = chance_baseline(g);
    let delta = result.aggregate.val_acc.mean - chance.value;
    Ok(GroupingAnalysis {
        grouping: g.clone(),
        rank_tests,
        anova_tests,
        metrics: result.aggregate,
        chance,
        delta,
    })
}

/// One entry of a ranked significant-statement list; es is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedEs {
    pub es: usize,
    pub p_value: f64,
    pub diff: f64,
    pub stars: Stars,
}

/// Statements with stars, sorted by p ascending, then |diff| descending,
/// then statement index.
pub fn rank_significant(tests: &[TestResult]) -> Vec<RankedEs> {
    let mut out: Vec<RankedEs> = tests
        .iter()
        .enumerate()
        .filter(|(_, t)| t.stars != Stars::None)
        .map(|(i, t)| RankedEs {
            es: i + 1,
            p_value: t.p_value,
            diff: t.diff_of_means,
            stars: t.stars,
        })
        .collect();
    out.sort_by(|a, b| {
        a.p_value
            .partial_cmp(&b.p_value)
            .unwrap()
            .then(b.diff.abs().partial_cmp(&a.diff.abs()).unwrap())
            .then(a.es.cmp(&b.es))
    });
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FindingsConfig {
    /// A grouping is flagged when delta exceeds this.
    pub delta_flag: f64,
    /// Significant statements listed per grouping, from the top of the
    /// ranking.
    pub top_k: usize,
}

impl Default for FindingsConfig {
    fn default() -> FindingsConfig {
        FindingsConfig { delta_flag: 0.02, top_k: 5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Finding {
    pub grouping: String,
    pub delta: f64,
    /// 1-based statement indices, ranking order.
    pub top_es: Vec<usize>,
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FigureTables {
    pub fig2: String,
    pub fig3: String,
    pub fig4: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfluenceReport {
    pub analyses: Vec<GroupingAnalysis>,
    /// Parallel to analyses: the ranked significant statements of each.
    pub ranked: Vec<Vec<RankedEs>>,
    /// 1-based statement index -> indices into analyses where it is
    /// significant under the rank test.
    pub es_significant_in: BTreeMap<usize, Vec<usize>>,
    pub matrix: CorrelationMatrix,
    pub findings: Vec<Finding>,
    pub figures: FigureTables,
}

/// Full pipeline over a set of grouping requests. Analyses run concurrently;
/// grouping i trains with master seed mix(cfg.master_seed, i) so groupings
/// stay decorrelated while the whole report follows one seed.
pub fn build_report(
    cohort: &Cohort,
    requests: &[GroupingRequest],
    cfg: &TrainConfig,
    fcfg: &FindingsConfig,
) -> Result<InfluenceReport, InfluenceError> {
    let groupings: Vec<Grouping> = requests
        .iter()
        .map(|r| apply_request(cohort, r))
        .collect::<Result<_, _>>()?;
    let analyses: Vec<GroupingAnalysis> = groupings
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let per = TrainConfig {
                master_seed: seed::mix(cfg.master_seed, i as u64),
                ..cfg.clone()
            };
            analyze_grouping(cohort, g, &per)
        })
        .collect::<Result<_, _>>()?;
    let ranked: Vec<Vec<RankedEs>> =
        analyses.iter().map(|a| rank_significant(&a.rank_tests)).collect();
    let mut es_significant_in: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (gi, list) in ranked.iter().enumerate() {
        for r in list {
            es_significant_in.entry(r.es).or_default().push(gi);
        }
    }
    let findings = analyses
        .iter()
        .zip(&ranked)
        .map(|(a, list)| Finding {
            grouping: a.label(),
            delta: a.delta,
            top_es: list.iter().take(fcfg.top_k).map(|r| r.es).collect(),
            flagged: a.delta > fcfg.delta_flag,
        })
        .collect();
    Ok(InfluenceReport {
        analyses,
        ranked,
        es_significant_in,
        matrix: correlation_matrix(cohort),
        findings,
        figures: figure_tables(cohort),
    })
}

fn mean_of(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Figure data at full precision: per-answer rating means against BQ1 with
/// the ES20 baseline deltas, rating-value frequency distributions bucketed
/// by BQ1 and BQ9 answers, and the two-group BQ1 mean profile.
pub fn figure_tables(cohort: &Cohort) -> FigureTables {
    let bq1 = cohort.background_column(Bq::Bq1);

    // fig2: mean rating per BQ1 answer value 1..9, plus deltas from the
    // ES20 row
    let per_answer = |es: usize| -> Vec<Option<f64>> {
        (1..=9)
            .map(|a| {
                let vals: Vec<f64> = cohort
                    .respondents
                    .iter()
                    .zip(&bq1)
                    .filter(|(_, &ans)| ans == a)
                    .map(|(r, _)| r.ratings[es])
                    .collect();
                mean_of(&vals)
            })
            .collect()
    };
    let baseline = per_answer(19);
    let mut fig2 = String::from("es");
    for a in 1..=9 {
        fig2.push_str(&format!(",mean_a{a}"));
    }
    for a in 1..=9 {
        fig2.push_str(&format!(",delta_a{a}"));
    }
    fig2.push('\n');
    for es in 0..20 {
        let means = per_answer(es);
        fig2.push_str(&format!("ES{}", es + 1));
        for m in &means {
            fig2.push(',');
            fig2.push_str(&opt_cell(*m));
        }
        for (m, b) in means.iter().zip(&baseline) {
            fig2.push(',');
            fig2.push_str(&opt_cell(m.and_then(|x| b.map(|y| x - y))));
        }
        fig2.push('\n');
    }

    // fig3: relative frequency of each rating level within answer buckets
    // of BQ1 and BQ9, plus the whole cohort
    let mut fig3 = String::from("bq,bucket,es,rating,freq\n");
    let mut blocks: Vec<(String, String, Vec<usize>)> = Vec::new();
    for bq in [Bq::Bq1, Bq::Bq9] {
        let col = cohort.background_column(bq);
        let mut values: Vec<i64> = col.clone();
        values.sort_unstable();
        values.dedup();
        for v in values {
            let idx: Vec<usize> =
                (0..cohort.len()).filter(|&i| col[i] == v).collect();
            blocks.push((bq.name().into(), v.to_string(), idx));
        }
    }
    blocks.push(("all".into(), "all".into(), (0..cohort.len()).collect()));
    for (bq, bucket, idx) in &blocks {
        for es in 0..20 {
            let mut counts = [0usize; 11];
            for &i in idx {
                let level = (cohort.respondents[i].ratings[es] * 10.0).round() as usize;
                counts[level.min(10)] += 1;
            }
            for (level, &c) in counts.iter().enumerate() {
                fig3.push_str(&format!(
                    "{bq},{bucket},ES{},{},{}\n",
                    es + 1,
                    level as f64 / 10.0,
                    c as f64 / idx.len() as f64
                ));
            }
        }
    }

    // fig4: the published two-group BQ1 profile (cut at 7)
    let mut fig4 = String::from("es,group1_mean,group2_mean\n");
    for es in 0..20 {
        let (mut lo, mut hi) = (Vec::new(), Vec::new());
        for (r, &a) in cohort.respondents.iter().zip(&bq1) {
            if a < 7 {
                lo.push(r.ratings[es]);
            } else {
                hi.push(r.ratings[es]);
            }
        }
        fig4.push_str(&format!(
            "ES{},{},{}\n",
            es + 1,
            opt_cell(mean_of(&lo)),
            opt_cell(mean_of(&hi))
        ));
    }

    FigureTables { fig2, fig3, fig4 }
}

/// Half-away-from-zero rounding to `decimals` places, with a one-ulp-scale
/// guard so values like -0.085 (stored just below the midpoint) still round
/// outward the way their decimal reading suggests.
pub fn round_half_away(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let r = x.signum() * (x.abs() * scale + 0.5 + 1e-9).floor() / scale;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn dec2(x: f64) -> String {
    format!("{:.2}", round_half_away(x, 2))
}

fn dec3(x: f64) -> String {
    format!("{:.3}", round_half_away(x, 3))
}

/// Four significant figures, plain below 1, scientific below 1e-4; matches
/// the way the appendix grids print p-values.
fn sig4(p: f64) -> String {
    if p == 0.0 {
        return "0".into();
    }
    let e = p.abs().log10().floor() as i32;
    let scale = 10f64.powi(3 - e);
    let r = (p * scale).round() / scale;
    if r >= 1e-4 {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

fn star_suffix(s: Stars) -> String {
    if s == Stars::None {
        String::new()
    } else {
        format!(" {s}")
    }
}

fn significant_cell(list: &[RankedEs]) -> String {
    if list.is_empty() {
        return "—".into();
    }
    list.iter()
        .map(|r| format!("ES{} ({}){}", r.es, dec2(r.diff), r.stars))
        .collect::<Vec<_>>()
        .join(", ")
}

fn metric_cell(m: &MetricSummary, integer_median: bool) -> String {
    let mdn = if integer_median {
        format!("{}", m.median)
    } else {
        dec2(m.median)
    };
    format!("M={} Mdn={} SD={}", dec2(m.mean), mdn, dec2(m.sd))
}

fn csv_row(fields: &[String]) -> String {
    let quoted: Vec<String> = fields
        .iter()
        .map(|f| {
            if f.contains(',') || f.contains('"') || f.contains('\n') {
                format!("\"{}\"", f.replace('"', "\"\""))
            } else {
                f.clone()
            }
        })
        .collect();
    let mut row = quoted.join(",");
    row.push('\n');
    row
}

fn table6(report: &InfluenceReport) -> String {
    let mut out = csv_row(&[
        "grouping".into(),
        "significant_rating_differences".into(),
        "epoch_step".into(),
        "training_loss".into(),
        "training_accuracy".into(),
        "validation_loss".into(),
        "validation_accuracy".into(),
        "chance".into(),
        "delta".into(),
    ]);
    for (a, list) in report.analyses.iter().zip(&report.ranked) {
        out.push_str(&csv_row(&[
            a.label(),
            significant_cell(list),
            metric_cell(&a.metrics.epoch_step, true),
            metric_cell(&a.metrics.train_loss, false),
            metric_cell(&a.metrics.train_acc, false),
            metric_cell(&a.metrics.val_loss, false),
            metric_cell(&a.metrics.val_acc, false),
            dec2(a.chance.value),
            dec2(a.delta),
        ]));
    }
    out
}

fn table_a1(m: &CorrelationMatrix) -> String {
    let mut header = vec![String::new()];
    header.extend(m.labels.iter().cloned());
    let mut out = csv_row(&header);
    for (i, label) in m.labels.iter().enumerate() {
        let mut row = vec![label.clone()];
        for j in 0..m.labels.len() {
            use std::cmp::Ordering::*;
            let cell = &m.cells[i][j];
            row.push(match i.cmp(&j) {
                Equal => String::new(),
                // upper-right: Kendall with stars; lower-left: cosine
                Less => match (cell.tau, cell.p_value) {
                    (Some(t), Some(p)) => format!("{}{}", dec2(t), star_suffix(stars(p))),
                    _ => "na".into(),
                },
                Greater => cell.cosine.map(dec2).unwrap_or_else(|| "na".into()),
            });
        }
        out.push_str(&csv_row(&row));
    }
    out
}

fn es_header(first: &str) -> Vec<String> {
    let mut h = vec![first.to_string()];
    h.extend((1..=20).map(|k| format!("ES{k}")));
    h
}

type TestRow<'a> = (String, &'a [TestResult]);

/// A2-A4: per-group mean/median/SD grids; the mean grid carries the rank
/// test's stars, matching the published layout.
fn table_group_summary(
    rows: &[TestRow],
    pick: impl Fn(&TestResult) -> &Vec<f64>,
    prefix: &str,
    with_stars: bool,
) -> String {
    let mut out = csv_row(&es_header("grouping"));
    for (label, tests) in rows {
        let mut row = vec![label.clone()];
        for t in *tests {
            let vals = pick(t);
            let mut cell = vals
                .iter()
                .enumerate()
                .map(|(k, v)| format!("{prefix}{}={}", k + 1, dec3(*v)))
                .collect::<Vec<_>>()
                .join(" ");
            if with_stars {
                cell.push_str(&star_suffix(t.stars));
            }
            row.push(cell);
        }
        out.push_str(&csv_row(&row));
    }
    out
}

fn table_p_grid(rows: &[TestRow]) -> String {
    let mut out = csv_row(&es_header("grouping"));
    for (label, tests) in rows {
        let mut row = vec![label.clone()];
        for t in *tests {
            row.push(format!("{}{}", sig4(t.p_value), star_suffix(t.stars)));
        }
        out.push_str(&csv_row(&row));
    }
    out
}

fn appendix_tables(
    matrix: &CorrelationMatrix,
    rank_rows: &[TestRow],
    anova_rows: &[TestRow],
) -> Vec<(String, String)> {
    vec![
        ("tableA1.csv".into(), table_a1(matrix)),
        (
            "tableA2.csv".into(),
            table_group_summary(rank_rows, |t| &t.group_means, "M", true),
        ),
        (
            "tableA3.csv".into(),
            table_group_summary(rank_rows, |t| &t.group_medians, "Mdn", false),
        ),
        (
            "tableA4.csv".into(),
            table_group_summary(rank_rows, |t| &t.group_sds, "SD", false),
        ),
        ("tableA5.csv".into(), table_p_grid(rank_rows)),
        ("tableA6.csv".into(), table_p_grid(anova_rows)),
    ]
}

/// Test battery without the learning experiment: the correlation matrix and
/// the per-grouping rank/ANOVA grids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsBundle {
    pub labels: Vec<String>,
    pub rank_tests: Vec<Vec<TestResult>>,
    pub anova_tests: Vec<Vec<TestResult>>,
    pub matrix: CorrelationMatrix,
}

/// Computes the matrix and every grouping's tests. A grouping that cannot
/// be formed or tested on this cohort (degenerate split, too little data)
/// is skipped with a warning instead of failing the whole run.
pub fn stats_bundle(
    cohort: &Cohort,
    requests: &[GroupingRequest],
) -> (StatsBundle, Vec<String>) {
    let mut bundle = StatsBundle {
        labels: Vec::new(),
        rank_tests: Vec::new(),
        anova_tests: Vec::new(),
        matrix: correlation_matrix(cohort),
    };
    let mut warnings = Vec::new();
    for req in requests {
        let g = match apply_request(cohort, req) {
            Ok(g) => g,
            Err(e) => {
                warnings.push(format!("skipping {} ({} groups): {e}", req.bq, req.arity));
                continue;
            }
        };
        match grouping_tests(cohort, &g) {
            Ok((rank, anova)) => {
                bundle.labels.push(grouping_label(&g));
                bundle.rank_tests.push(rank);
                bundle.anova_tests.push(anova);
            }
            Err(e) => warnings.push(format!("skipping {}: {e}", grouping_label(&g))),
        }
    }
    (bundle, warnings)
}

pub fn render_stats(bundle: &StatsBundle) -> Vec<(String, String)> {
    let rank_rows: Vec<TestRow> = bundle
        .labels
        .iter()
        .zip(&bundle.rank_tests)
        .map(|(l, t)| (l.clone(), t.as_slice()))
        .collect();
    let anova_rows: Vec<TestRow> = bundle
        .labels
        .iter()
        .zip(&bundle.anova_tests)
        .map(|(l, t)| (l.clone(), t.as_slice()))
        .collect();
    appendix_tables(&bundle.matrix, &rank_rows, &anova_rows)
}

fn report_text(report: &InfluenceReport) -> String {
    let mut out = String::new();
    let n: usize = report
        .analyses
        .first()
        .map(|a| a.grouping.labels.len())
        .unwrap_or(0);
    out.push_str(&format!(
        "Influence report: {} groupings, n={}\n",
        report.analyses.len(),
        n
    ));
    out.push_str(&format!(
        "Metrics averaged over {} training sequences per grouping.\n\n",
        report.analyses.first().map(|a| a.metrics.sequences).unwrap_or(0)
    ));
    for (a, list) in report.analyses.iter().zip(&report.ranked) {
        out.push_str(&a.label());
        out.push('\n');
        out.push_str(&format!("  significant: {}\n", significant_cell(list)));
        out.push_str(&format!(
            "  epoch step       {}\n",
            metric_cell(&a.metrics.epoch_step, true)
        ));
        out.push_str(&format!(
            "  training loss    {}\n",
            metric_cell(&a.metrics.train_loss, false)
        ));
        out.push_str(&format!(
            "  training acc     {}\n",
            metric_cell(&a.metrics.train_acc, false)
        ));
        out.push_str(&format!(
            "  validation loss  {}\n",
            metric_cell(&a.metrics.val_loss, false)
        ));
        out.push_str(&format!(
            "  validation acc   {}\n",
            metric_cell(&a.metrics.val_acc, false)
        ));
        out.push_str(&format!(
            "  chance {}  delta {}\n\n",
            dec2(a.chance.value),
            dec2(a.delta)
        ));
    }
    out.push_str("Findings\n");
    for f in &report.findings {
        let tops = if f.top_es.is_empty() {
            "—".to_string()
        } else {
            f.top_es
                .iter()
                .map(|e| format!("ES{e}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        out.push_str(&format!(
            "- {}: delta {}{}; top: {}\n",
            f.grouping,
            dec2(f.delta),
            if f.flagged { " [flagged]" } else { "" },
            tops
        ));
    }
    out
}

/// The rendered bundle as (relative path, contents) pairs; the canonical
/// report.json is the serialization of the report itself and is written by
/// the caller.
pub fn render_report(report: &InfluenceReport) -> Vec<(String, String)> {
    let rank_rows: Vec<TestRow> = report
        .analyses
        .iter()
        .map(|a| (a.label(), a.rank_tests.as_slice()))
        .collect();
    let anova_rows: Vec<TestRow> = report
        .analyses
        .iter()
        .map(|a| (a.label(), a.anova_tests.as_slice()))
        .collect();
    let mut files = vec![("table6.csv".to_string(), table6(report))];
    files.extend(appendix_tables(&report.matrix, &rank_rows, &anova_rows));
    files.push(("report.txt".into(), report_text(report)));
    files.push(("figures/fig2.csv".into(), report.figures.fig2.clone()));
    files.push(("figures/fig3.csv".into(), report.figures.fig3.clone()));
    files.push(("figures/fig4.csv".into(), report.figures.fig4.clone()));
    files
}
