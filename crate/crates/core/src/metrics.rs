//! Evaluation kernels: string metrics, detection metrics, total absolute
//! difference, suggestion coverage/diversity/collision/utilization, and
//! Lorenz points for value-recovery analysis.
//!
//! Everything in this module is a pure function; report structs carry both
//! full-precision values and 1-decimal rendering for the emitters.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{normalize_fund_name, FundPortfolio};
use crate::ingest::CorpusLabel;
use crate::refine::SchemaSuggestion;
use crate::schema::UnmatchedHolding;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no label for document {0}")]
    UnlabeledDocument(String),
}

/// Unit-cost edit distance (insert / delete / substitute), computed over
/// Unicode scalar values with a two-row DP table.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            cur[j + 1] = (prev[j + 1] + 1).min(cur[j] + 1).min(prev[j] + cost);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Similarity in [0, 1] used for suggestion deduplication:
/// `1 - levenshtein(a, b) / max(|a|, |b|)`, and 1.0 when both are empty.
pub fn normalized_levenshtein_similarity(a: &str, b: &str) -> f64 {
    let la = a.chars().count();
    let lb = b.chars().count();
    let max = la.max(lb);
    if max == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / max as f64
}

fn lcs_len(a: &[char], b: &[char]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for &ca in a {
        for (j, &cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance restricted to insertions and deletions.
pub fn indel_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    a.len() + b.len() - 2 * lcs_len(&a, &b)
}

/// Indel similarity on a 0..=100 scale:
/// `100 * (1 - D_indel(a, b) / (|a| + |b|))`, 100 when both inputs are empty.
pub fn indel_similarity(a: &str, b: &str) -> f64 {
    let total = a.chars().count() + b.chars().count();
    if total == 0 {
        return 100.0;
    }
    100.0 * (1.0 - indel_distance(a, b) as f64 / total as f64)
}

/// `2pr / (p + r)`, 0 when `p + r` is 0. Inputs and output share the same
/// scale (either ratios or percentages).
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        return 0.0;
    }
    2.0 * precision * recall / (precision + recall)
}

/// Detection confusion counts and the ratios derived from them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionReport {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// Set when there were no predictions to score.
    pub no_data: bool,
}

impl DetectionReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let total = tp + fp + fn_ + tn;
        let recall = ratio(tp, tp + fn_);
        let precision = ratio(tp, tp + fp);
        DetectionReport {
            tp,
            fp,
            fn_,
            tn,
            recall,
            precision,
            f1: f1_score(precision, recall),
            accuracy: ratio(tp + tn, total),
            no_data: total == 0,
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("tp,fp,fn,tn,recall,precision,f1,accuracy\n");
        out.push_str(&format!(
            "{},{},{},{},{:.1},{:.1},{:.1},{:.1}\n",
            self.tp,
            self.fp,
            self.fn_,
            self.tn,
            self.recall * 100.0,
            self.precision * 100.0,
            self.f1 * 100.0,
            self.accuracy * 100.0
        ));
        out
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores page-level detection predictions against labeled holdings pages.
///
/// Truth for a page is membership in the union of `holdings_pages` across the
/// document's labels. Every predicted page must belong to a labeled document.
pub fn detection_metrics(
    preds: &[((String, u32), bool)],
    labels: &[CorpusLabel],
) -> Result<DetectionReport, MetricsError> {
    let mut truth: BTreeMap<&str, BTreeSet<u32>> = BTreeMap::new();
    let mut labeled_docs: BTreeSet<&str> = BTreeSet::new();
    for label in labels {
        labeled_docs.insert(&label.doc_id);
        truth
            .entry(&label.doc_id)
            .or_default()
            .extend(label.holdings_pages.iter().copied());
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for ((doc_id, page_no), predicted) in preds {
        if !labeled_docs.contains(doc_id.as_str()) {
            return Err(MetricsError::UnlabeledDocument(doc_id.clone()));
        }
        let actual = truth
            .get(doc_id.as_str())
            .is_some_and(|pages| pages.contains(page_no));
        match (*predicted, actual) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(DetectionReport::from_counts(tp, fp, fn_, tn))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FundComparison {
    pub doc_id: String,
    pub fund_name: String,
    pub ground_truth_nav: f64,
    pub declared_value: f64,
    pub absolute_difference: f64,
}

/// Per-fund NAV reconciliation plus the corpus-level TAD and unaccounted
/// percentage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub per_fund: Vec<FundComparison>,
    /// Extracted funds that matched no label; excluded from TAD.
    pub unlabeled_funds: Vec<(String, String)>,
    /// Labels that matched no extracted fund; excluded from TAD.
    pub unmatched_labels: Vec<(String, String)>,
    pub total_absolute_difference: f64,
    pub unaccounted_pct: f64,
}

impl ExtractionReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv_string(&self) -> String {
        let mut out =
            String::from("doc_id,fund_name,ground_truth_nav,declared_value,absolute_difference\n");
        for fund in &self.per_fund {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                csv_field(&fund.doc_id),
                csv_field(&fund.fund_name),
                fund.ground_truth_nav,
                fund.declared_value,
                fund.absolute_difference
            ));
        }
        out.push_str(&format!(
            "TOTAL,,,{},{}\n",
            self.total_absolute_difference, self.unaccounted_pct
        ));
        out
    }
}

fn csv_field(value: &str) -> String {
    if value.contains(',') || value.contains('"') || value.contains('\n') {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

/// Total absolute difference between declared fund values and labeled NAVs.
///
/// Funds join labels on `(doc_id, normalized fund name)`; per-fund
/// `|declared - truth|` terms are summed without netting, and
/// `unaccounted_pct = TAD / sum(truth) * 100`.
pub fn tad(funds: &[FundPortfolio], labels: &[CorpusLabel]) -> ExtractionReport {
    let mut label_index: BTreeMap<(String, String), &CorpusLabel> = BTreeMap::new();
    for label in labels {
        label_index.insert(
            (label.doc_id.clone(), normalize_fund_name(&label.fund_name)),
            label,
        );
    }
    let mut per_fund = Vec::new();
    let mut unlabeled = Vec::new();
    let mut matched_keys: BTreeSet<(String, String)> = BTreeSet::new();
    for fund in funds {
        let key = (fund.doc_id.clone(), normalize_fund_name(&fund.fund_name));
        match label_index.get(&key) {
            Some(label) => {
                matched_keys.insert(key);
                per_fund.push(FundComparison {
                    doc_id: fund.doc_id.clone(),
                    fund_name: fund.fund_name.clone(),
                    ground_truth_nav: label.net_asset_value,
                    declared_value: fund.declared_value,
                    absolute_difference: (fund.declared_value - label.net_asset_value).abs(),
                });
            }
            None => unlabeled.push((fund.doc_id.clone(), fund.fund_name.clone())),
        }
    }
    let unmatched_labels = label_index
        .iter()
        .filter(|(key, _)| !matched_keys.contains(*key))
        .map(|(_, label)| (label.doc_id.clone(), label.fund_name.clone()))
        .collect();
    let total: f64 = per_fund.iter().map(|f| f.absolute_difference).sum();
    let truth_sum: f64 = per_fund.iter().map(|f| f.ground_truth_nav).sum();
    ExtractionReport {
        per_fund,
        unlabeled_funds: unlabeled,
        unmatched_labels,
        total_absolute_difference: total,
        unaccounted_pct: if truth_sum == 0.0 {
            0.0
        } else {
            total / truth_sum * 100.0
        },
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CoverageStats {
    pub count: usize,
    pub pct: f64,
    pub nav_pct: f64,
}

/// A holding is covered iff the best indel similarity between its description
/// and any suggestion's example or name clears `threshold`. `nav_pct` weights
/// holdings by `|market_value|`.
pub fn coverage(
    unmatched: &[UnmatchedHolding],
    suggestions: &[SchemaSuggestion],
    threshold: f64,
) -> CoverageStats {
    let mut covered = 0usize;
    let mut covered_nav = 0.0f64;
    let mut total_nav = 0.0f64;
    for holding in unmatched {
        let nav = holding.market_value.map_or(0.0, f64::abs);
        total_nav += nav;
        let hit = suggestions.iter().any(|s| {
            indel_similarity(&holding.description, &s.example) >= threshold
                || indel_similarity(&holding.description, &s.name) >= threshold
        });
        if hit {
            covered += 1;
            covered_nav += nav;
        }
    }
    CoverageStats {
        count: covered,
        pct: if unmatched.is_empty() {
            0.0
        } else {
            covered as f64 / unmatched.len() as f64 * 100.0
        },
        nav_pct: if total_nav == 0.0 {
            0.0
        } else {
            covered_nav / total_nav * 100.0
        },
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PairwiseStats {
    pub avg: f64,
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DiversityReport {
    pub name: PairwiseStats,
    pub schema: PairwiseStats,
    /// True when fewer than two unique suggestions were available.
    pub insufficient: bool,
}

/// Average / min / max pairwise Levenshtein distance over unique suggestions,
/// on the name and on the suggested schema separately.
pub fn diversity(suggestions: &[SchemaSuggestion]) -> DiversityReport {
    let mut unique: Vec<&SchemaSuggestion> = Vec::new();
    for s in suggestions {
        if !unique
            .iter()
            .any(|u| u.name == s.name && u.suggested_schema == s.suggested_schema)
        {
            unique.push(s);
        }
    }
    if unique.len() < 2 {
        let zero = PairwiseStats {
            avg: 0.0,
            min: 0,
            max: 0,
        };
        return DiversityReport {
            name: zero,
            schema: zero,
            insufficient: true,
        };
    }
    let stats = |extract: fn(&SchemaSuggestion) -> &str| {
        let mut sum = 0usize;
        let mut min = usize::MAX;
        let mut max = 0usize;
        let mut pairs = 0usize;
        for i in 0..unique.len() {
            for j in i + 1..unique.len() {
                let d = levenshtein(extract(unique[i]), extract(unique[j]));
                sum += d;
                min = min.min(d);
                max = max.max(d);
                pairs += 1;
            }
        }
        PairwiseStats {
            avg: sum as f64 / pairs as f64,
            min,
            max,
        }
    };
    DiversityReport {
        name: stats(|s| &s.name),
        schema: stats(|s| &s.suggested_schema),
        insufficient: false,
    }
}

/// `(total_emitted - unique) / total_emitted * 100`, 0 when nothing was
/// emitted.
pub fn collision_rate(total_emitted: usize, unique: usize) -> f64 {
    assert!(unique <= total_emitted, "unique exceeds total emitted");
    if total_emitted == 0 {
        return 0.0;
    }
    (total_emitted - unique) as f64 / total_emitted as f64 * 100.0
}

/// Count-level utilization kernel: `utilized / total * 100`, 0 when `total`
/// is 0.
pub fn utilization_counts(utilized: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    utilized as f64 / total as f64 * 100.0
}

/// Fraction of suggestions that matched at least one holding, keyed by
/// suggestion name in `match_counts`.
pub fn utilization(
    selected: &[SchemaSuggestion],
    match_counts: &BTreeMap<String, usize>,
) -> (f64, bool) {
    if selected.is_empty() {
        return (0.0, true);
    }
    let utilized = selected
        .iter()
        .filter(|s| match_counts.get(&s.name).copied().unwrap_or(0) >= 1)
        .count();
    (utilization_counts(utilized, selected.len()), false)
}

/// Schema-refinement summary row, mirroring the utilization-efficiency and
/// diversity report columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuggestionReport {
    pub batch_size: usize,
    pub total_emitted: usize,
    pub unique: usize,
    pub selected: usize,
    pub utilized: usize,
    pub covered_count: usize,
    pub coverage_pct: f64,
    pub coverage_nav_pct: f64,
    pub utilization_pct: f64,
    pub collision_count: usize,
    pub collision_rate_pct: f64,
    pub diversity: DiversityReport,
}

impl SuggestionReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn csv_header() -> &'static str {
        "batch_size,total_emitted,unique,selected,utilized,covered_count,coverage_pct,\
         coverage_nav_pct,utilization_pct,collision_count,collision_rate_pct,\
         name_diversity_avg,name_diversity_min,name_diversity_max,\
         schema_diversity_avg,schema_diversity_min,schema_diversity_max\n"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.1},{:.1},{:.1},{},{:.1},{:.2},{},{},{:.2},{},{}\n",
            self.batch_size,
            self.total_emitted,
            self.unique,
            self.selected,
            self.utilized,
            self.covered_count,
            self.coverage_pct,
            self.coverage_nav_pct,
            self.utilization_pct,
            self.collision_count,
            self.collision_rate_pct,
            self.diversity.name.avg,
            self.diversity.name.min,
            self.diversity.name.max,
            self.diversity.schema.avg,
            self.diversity.schema.min,
            self.diversity.schema.max
        )
    }
}

/// Lorenz curve points for value recovery: values sorted descending, point k
/// is `(k / N, sum of top-k / sum of all)`. All-zero input yields the
/// diagonal.
pub fn lorenz_points(values: &[f64]) -> Vec<(f64, f64)> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite values"));
    let total: f64 = sorted.iter().sum();
    let mut points = Vec::with_capacity(n);
    let mut running = 0.0;
    for (k, v) in sorted.iter().enumerate() {
        running += v;
        let x = (k + 1) as f64 / n as f64;
        let y = if total == 0.0 { x } else { running / total };
        points.push((x, y));
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::PageRef;

    fn sugg(name: &str, schema: &str, example: &str) -> SchemaSuggestion {
        SchemaSuggestion {
            name: name.to_string(),
            suggested_schema: schema.to_string(),
            example: example.to_string(),
        }
    }

    fn unmatched(description: &str, mv: Option<f64>) -> UnmatchedHolding {
        UnmatchedHolding {
            description: description.to_string(),
            name: "Unknown".to_string(),
            market_value: mv,
            source: PageRef {
                doc_id: "d".to_string(),
                page_no: 1,
            },
        }
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("a", "a"), 0);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
    }

    #[test]
    fn indel_examples() {
        assert_eq!(indel_similarity("same", "same"), 100.0);
        assert_eq!(indel_similarity("ab", "cd"), 0.0);
        assert_eq!(indel_similarity("abcd", "abce"), 75.0);
        assert_eq!(indel_similarity("", ""), 100.0);
    }

    #[test]
    fn detection_metrics_perfect() {
        let labels = vec![CorpusLabel {
            doc_id: "d".into(),
            fund_name: "F".into(),
            holdings_pages: vec![2, 3],
            net_asset_value: 1.0,
            value_in_thousands: false,
        }];
        let preds = vec![
            (("d".to_string(), 1), false),
            (("d".to_string(), 2), true),
            (("d".to_string(), 3), true),
        ];
        let report = detection_metrics(&preds, &labels).unwrap();
        assert_eq!(report.recall, 1.0);
        assert_eq!(report.precision, 1.0);
        assert_eq!(report.f1, 1.0);
        assert_eq!(report.accuracy, 1.0);
    }

    #[test]
    fn detection_metrics_unlabeled_doc_errors() {
        let preds = vec![(("ghost".to_string(), 1), true)];
        assert!(detection_metrics(&preds, &[]).is_err());
    }

    #[test]
    fn f1_matches_published_rows() {
        // (precision, recall, printed f1), percentage scale
        let rows = [
            (38.62, 100.0, 55.73),
            (34.42, 100.0, 51.21),
            (32.75, 99.76, 49.31),
            (17.56, 28.02, 21.59),
            (12.72, 14.01, 13.33),
            (21.50, 42.62, 28.58),
            (23.46, 56.92, 33.23),
        ];
        for (p, r, printed) in rows {
            assert!(
                (f1_score(p, r) - printed).abs() <= 0.02,
                "f1({p}, {r}) = {} vs {printed}",
                f1_score(p, r)
            );
        }
    }

    #[test]
    fn coverage_arithmetic() {
        let holdings = vec![
            unmatched("alpha one", Some(10.0)),
            unmatched("beta two", Some(80.0)),
            unmatched("gamma three", Some(10.0)),
        ];
        let suggestions = vec![
            sugg("Beta", "{}", "beta two"),
            sugg("Gamma", "{}", "gamma three"),
        ];
        let stats = coverage(&holdings, &suggestions, 70.0);
        assert_eq!(stats.count, 2);
        assert!((stats.pct - 66.666).abs() < 0.1);
        assert!((stats.nav_pct - 90.0).abs() < 1e-9);
        let none = coverage(&holdings, &[], 70.0);
        assert_eq!((none.count, none.pct, none.nav_pct), (0, 0.0, 0.0));
    }

    #[test]
    fn diversity_examples() {
        let two = vec![sugg("Warrant", "{}", "x"), sugg("Warrants", "{}", "y")];
        let report = diversity(&two);
        assert_eq!(report.name.min, 1);
        assert_eq!(report.name.max, 1);
        assert!((report.name.avg - 1.0).abs() < 1e-12);

        let identical = vec![sugg("A", "{}", "x"), sugg("A", "{}", "x")];
        assert!(diversity(&identical).insufficient);

        let three = vec![
            sugg("A", "{}", "x"),
            sugg("B", "{}", "y"),
            sugg("AB", "{}", "z"),
        ];
        let report = diversity(&three);
        assert!((report.name.avg - 1.0).abs() < 1e-12);
        assert_eq!(report.name.min, 1);
        assert_eq!(report.name.max, 1);
    }

    #[test]
    fn collision_rate_published_rows() {
        assert!((collision_rate(867 + 2409, 867) - 73.5).abs() <= 0.1);
        assert!((collision_rate(184 + 30, 184) - 14.0).abs() <= 0.1);
        assert_eq!(collision_rate(5, 5), 0.0);
        assert_eq!(collision_rate(0, 0), 0.0);
    }

    #[test]
    fn utilization_published_rows() {
        assert!((utilization_counts(109, 184) - 59.2).abs() <= 0.1);
        assert!((utilization_counts(251, 867) - 29.0).abs() <= 0.1);
        assert_eq!(utilization_counts(3, 3), 100.0);
        let (pct, flagged) = utilization(&[], &BTreeMap::new());
        assert_eq!(pct, 0.0);
        assert!(flagged);
    }

    #[test]
    fn lorenz_shapes() {
        let uniform = lorenz_points(&[1.0, 1.0, 1.0, 1.0]);
        let ys: Vec<f64> = uniform.iter().map(|p| p.1).collect();
        assert_eq!(ys, vec![0.25, 0.5, 0.75, 1.0]);

        let heavy = lorenz_points(&[97.0, 1.0, 1.0, 1.0]);
        assert_eq!(heavy[0], (0.25, 0.97));
        assert_eq!(heavy.last().copied(), Some((1.0, 1.0)));

        assert_eq!(lorenz_points(&[5.0]), vec![(1.0, 1.0)]);
        let zeros = lorenz_points(&[0.0, 0.0]);
        assert_eq!(zeros, vec![(0.5, 0.5), (1.0, 1.0)]);
    }

    #[test]
    fn tad_arithmetic() {
        let fund = FundPortfolio {
            doc_id: "d".into(),
            fund_name: "Fund A".into(),
            pages: vec![2],
            portfolio: crate::schema::Portfolio::default(),
            declared_value: 990_000.0,
        };
        let labels = vec![CorpusLabel {
            doc_id: "d".into(),
            fund_name: "fund a".into(),
            holdings_pages: vec![2],
            net_asset_value: 1_000_000.0,
            value_in_thousands: false,
        }];
        let report = tad(&[fund], &labels);
        assert_eq!(report.total_absolute_difference, 10_000.0);
        assert!((report.unaccounted_pct - 1.0).abs() < 1e-9);
        assert!(report.unlabeled_funds.is_empty());
        assert!(report.unmatched_labels.is_empty());
    }

    #[test]
    fn unaccounted_matches_published_value() {
        let pct: f64 = 102_836_797.0 / 731.7e9 * 100.0;
        assert!((pct - 0.014).abs() <= 0.001);
    }
}
