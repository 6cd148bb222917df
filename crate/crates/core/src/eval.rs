//! Ranking metrics over graded judgments: bpref, DCG, nDCG and F1 of two scores.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

/// Grades at or above this value count as relevant for bpref.
pub const RELEVANT_GRADE: u8 = 3;
pub const MAX_GRADE: u8 = 4;
/// Default evaluation depth.
pub const DEFAULT_DEPTH: usize = 1000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("query has no judged relevant documents")]
    NoRelevantJudged,
    #[error("query has no judgments with a positive grade")]
    NoPositiveJudgments,
    #[error("F1 needs scores in (0, 1], got {0} and {1}")]
    ZeroInput(f64, f64),
    #[error("no run query has judgments")]
    EmptyIntersection,
    #[error("no run files given")]
    NoTrials,
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Judgments of one query: formula id to grade.
pub type Judgments = BTreeMap<String, u8>;

/// Graded relevance judgments keyed by query.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QrelSet {
    pub queries: BTreeMap<String, Judgments>,
}

impl QrelSet {
    pub fn get(&self, query: &str) -> Option<&Judgments> {
        self.queries.get(query)
    }

    pub fn insert(&mut self, query: &str, formula: &str, grade: u8) -> Result<(), String> {
        if grade > MAX_GRADE {
            return Err(format!("grade {grade} outside 0..=4"));
        }
        let q = self.queries.entry(query.to_string()).or_default();
        if q.insert(formula.to_string(), grade).is_some() {
            return Err(format!("duplicate judgment for ({query}, {formula})"));
        }
        Ok(())
    }

    /// Parses `query_id formula_id grade` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut set = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| EvalError::Malformed { line: line_no, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [q, f, g] = fields[..] else {
                return Err(bad(format!("expected 3 fields, found {}", fields.len())));
            };
            let grade: u8 = g.parse().map_err(|_| bad(format!("grade {g:?} is not an integer")))?;
            set.insert(q, f, grade).map_err(bad)?;
        }
        Ok(set)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (q, js) in &self.queries {
            for (f, g) in js {
                out.push_str(&format!("{q} {f} {g}\n"));
            }
        }
        out
    }
}

/// Ranked formula ids per query, as read from a run file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Run {
    pub queries: BTreeMap<String, Vec<String>>,
}

impl Run {
    /// Parses `query_id formula_id rank score` lines and orders each query by rank.
    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut raw: BTreeMap<String, Vec<(usize, String)>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| EvalError::Malformed { line: line_no, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [q, f, rank, score] = fields[..] else {
                return Err(bad(format!("expected 4 fields, found {}", fields.len())));
            };
            let rank: usize = rank.parse().ok().filter(|&r| r >= 1).ok_or_else(|| bad(format!("rank {rank:?} is not a positive integer")))?;
            score.parse::<f64>().map_err(|_| bad(format!("score {score:?} is not a number")))?;
            raw.entry(q.to_string()).or_default().push((rank, f.to_string()));
        }
        let mut queries = BTreeMap::new();
        for (q, mut hits) in raw {
            hits.sort();
            let mut seen = HashSet::new();
            let mut prev = 0;
            for (rank, f) in &hits {
                if *rank == prev {
                    return Err(EvalError::Malformed { line: 0, message: format!("query {q} repeats rank {rank}") });
                }
                prev = *rank;
                if !seen.insert(f.clone()) {
                    return Err(EvalError::Malformed { line: 0, message: format!("query {q} lists {f} twice") });
                }
            }
            queries.insert(q, hits.into_iter().map(|(_, f)| f).collect());
        }
        Ok(Self { queries })
    }
}

/// Binary preference.
///
/// With `R` judged relevant and `N` judged irrelevant documents, each retrieved relevant
/// document contributes `1 − min(n_above, min(R, N)) / min(R, N)`, where `n_above` counts
/// judged irrelevant documents ranked above it. The sum is divided by `R`. Unjudged
/// documents are ignored. With `N = 0` every retrieved relevant document contributes 1.
pub fn bpref(ranked: &[&str], judgments: &Judgments) -> Result<f64, EvalError> {
    let r = judgments.values().filter(|&&g| g >= RELEVANT_GRADE).count();
    if r == 0 {
        return Err(EvalError::NoRelevantJudged);
    }
    let n = judgments.len() - r;
    let cap = r.min(n);
    let mut irrelevant_above = 0usize;
    let mut sum = 0.0;
    let mut seen = HashSet::new();
    for id in ranked {
        if !seen.insert(*id) {
            continue;
        }
        match judgments.get(*id) {
            None => {}
            Some(&g) if g >= RELEVANT_GRADE => {
                sum += if cap == 0 { 1.0 } else { 1.0 - irrelevant_above.min(cap) as f64 / cap as f64 };
            }
            Some(_) => irrelevant_above += 1,
        }
    }
    Ok(sum / r as f64)
}

/// `Σ_{i=1}^{min(K, len)} r_i / log2(i + 1)`.
pub fn dcg(grades: &[u8], k: usize) -> f64 {
    grades.iter().take(k).enumerate().map(|(i, &g)| g as f64 / ((i + 2) as f64).log2()).sum()
}

/// DCG of the judged part of the ranking over the ideal DCG of all judgments.
pub fn ndcg(ranked: &[&str], judgments: &Judgments, k: usize) -> Result<f64, EvalError> {
    if !judgments.values().any(|&g| g > 0) {
        return Err(EvalError::NoPositiveJudgments);
    }
    let mut seen = HashSet::new();
    let grades: Vec<u8> = ranked.iter().filter(|id| seen.insert(**id)).filter_map(|id| judgments.get(*id).copied()).collect();
    let mut ideal: Vec<u8> = judgments.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    Ok(dcg(&grades, k) / dcg(&ideal, k))
}

/// Harmonic mean of two scores in (0, 1].
pub fn f1_combine(a: f64, b: f64) -> Result<f64, EvalError> {
    let ok = |x: f64| x > 0.0 && x <= 1.0;
    if !(ok(a) && ok(b)) {
        return Err(EvalError::ZeroInput(a, b));
    }
    Ok(2.0 * a * b / (a + b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub query_id: String,
    /// Absent when the query has no judged relevant document.
    pub bpref: Option<f64>,
    /// Absent when the query has no positive judgment.
    pub ndcg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub per_query: Vec<QueryMetrics>,
    pub mean_bpref: f64,
    pub mean_ndcg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation across trials; 0 for a single trial.
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub depth: usize,
    pub trials: Vec<TrialReport>,
    pub bpref: Summary,
    pub ndcg: Summary,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn evaluate_trial(run: &Run, qrels: &QrelSet, k: usize) -> Result<TrialReport, EvalError> {
    let mut per_query = Vec::new();
    for (q, ranked) in &run.queries {
        let Some(judgments) = qrels.get(q) else { continue };
        let ids: Vec<&str> = ranked.iter().take(k).map(String::as_str).collect();
        per_query.push(QueryMetrics { query_id: q.clone(), bpref: bpref(&ids, judgments).ok(), ndcg: ndcg(&ids, judgments, k).ok() });
    }
    if per_query.is_empty() {
        return Err(EvalError::EmptyIntersection);
    }
    let mean_bpref = mean(per_query.iter().filter_map(|m| m.bpref));
    let mean_ndcg = mean(per_query.iter().filter_map(|m| m.ndcg));
    Ok(TrialReport { per_query, mean_bpref, mean_ndcg })
}

/// Scores each run (trial) at depth `k` and summarizes per-trial means across trials.
pub fn evaluate_run(runs: &[Run], qrels: &QrelSet, k: usize) -> Result<MetricReport, EvalError> {
    if runs.is_empty() {
        return Err(EvalError::NoTrials);
    }
    let trials = runs.iter().map(|r| evaluate_trial(r, qrels, k)).collect::<Result<Vec<_>, _>>()?;
    let bpref = Summary::of(&trials.iter().map(|t| t.mean_bpref).collect::<Vec<_>>());
    let ndcg = Summary::of(&trials.iter().map(|t| t.mean_ndcg).collect::<Vec<_>>());
    Ok(MetricReport { depth: k, trials, bpref, ndcg })
}

/// F1 of the SLT and OPT mean scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinedReport {
    pub bpref: f64,
    pub ndcg: f64,
}

pub fn combine_reports(slt: &MetricReport, opt: &MetricReport) -> Result<CombinedReport, EvalError> {
    Ok(CombinedReport {
        bpref: f1_combine(slt.bpref.mean, opt.bpref.mean)?,
        ndcg: f1_combine(slt.ndcg.mean, opt.ndcg.mean)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn judged(pairs: &[(&str, u8)]) -> Judgments {
        pairs.iter().map(|(k, g)| (k.to_string(), *g)).collect()
    }

    #[test]
    fn bpref_fixtures() {
        let j = judged(&[("r1", 4), ("r2", 3), ("n", 1)]);
        assert_eq!(bpref(&["r1", "r2", "n"], &j).unwrap(), 1.0);
        assert_eq!(bpref(&["n", "r1", "r2"], &j).unwrap(), 0.0);
        assert_eq!(bpref(&["r1", "n", "r2"], &j).unwrap(), 0.5);
        assert_eq!(bpref(&["u", "r1", "x", "r2"], &judged(&[("r1", 4), ("r2", 4)])).unwrap(), 1.0);
        assert_eq!(bpref(&["r1"], &j).unwrap(), 0.5);
        assert_eq!(bpref(&["n"], &judged(&[("n", 2)])), Err(EvalError::NoRelevantJudged));
    }

    #[test]
    fn dcg_and_ndcg_fixtures() {
        assert_eq!(dcg(&[4], 10), 4.0);
        assert!((dcg(&[4, 3, 0], 3) - 5.892789).abs() < 1e-6);
        assert_eq!(dcg(&[], 5), 0.0);
        let j = judged(&[("a", 0), ("b", 4)]);
        assert!((ndcg(&["a", "b"], &j, 2).unwrap() - 0.630930).abs() < 1e-6);
        assert_eq!(ndcg(&["b", "u", "a"], &j, 2).unwrap(), 1.0);
        assert_eq!(ndcg(&["a"], &judged(&[("a", 0)]), 5), Err(EvalError::NoPositiveJudgments));
        let many: Judgments = (0..90).map(|i| (format!("f{i}"), (i % 5) as u8)).collect();
        let order: Vec<String> = (0..90).map(|i| format!("f{i}")).collect();
        let ids: Vec<&str> = order.iter().map(String::as_str).collect();
        let full = ndcg(&ids, &many, 1000).unwrap();
        let cut = ndcg(&ids, &many, 89).unwrap();
        assert!(full > 0.0 && full <= 1.0 && full != cut);
    }

    #[test]
    fn f1_fixtures() {
        assert_eq!(format!("{:.3}", f1_combine(0.680, 0.660).unwrap()), "0.670");
        assert_eq!(format!("{:.3}", f1_combine(0.855, 0.864).unwrap()), "0.859");
        assert!((f1_combine(0.37, 0.37).unwrap() - 0.37).abs() < 1e-15);
        assert!(f1_combine(0.0, 0.5).is_err());
    }

    #[test]
    fn trial_summary_uses_sample_std() {
        let s = Summary::of(&[0.6, 0.8]);
        assert!((s.mean - 0.7).abs() < 1e-12);
        assert!((s.std - 0.141421).abs() < 1e-6);
        assert_eq!(Summary::of(&[0.3]).std, 0.0);
    }

    #[test]
    fn run_evaluation() {
        let qrels = QrelSet::parse("q1 a 4\nq1 b 0\n# comment\n\nq2 c 3\n").unwrap();
        let perfect = Run::parse("q1 a 1 0.9\nq1 b 2 0.1\n").unwrap();
        let r = evaluate_run(std::slice::from_ref(&perfect), &qrels, 1000).unwrap();
        assert_eq!(r.bpref.mean, 1.0);
        assert_eq!(r.ndcg.mean, 1.0);
        let worse = Run::parse("q1 b 1 0.9\nq1 a 2 0.1\n").unwrap();
        let r = evaluate_run(&[perfect, worse], &qrels, 1000).unwrap();
        assert_eq!(r.trials.len(), 2);
        assert!((r.bpref.mean - 0.5).abs() < 1e-12);
        let unjudged = Run::parse("zz a 1 1.0\n").unwrap();
        assert_eq!(evaluate_run(&[unjudged], &qrels, 10), Err(EvalError::EmptyIntersection));
    }

    #[test]
    fn parse_errors_name_the_line() {
        assert!(matches!(QrelSet::parse("q a 4\nq b 9\n"), Err(EvalError::Malformed { line: 2, .. })));
        assert!(matches!(QrelSet::parse("q a\n"), Err(EvalError::Malformed { line: 1, .. })));
        assert!(matches!(QrelSet::parse("q a 1\nq a 2\n"), Err(EvalError::Malformed { line: 2, .. })));
        assert!(matches!(Run::parse("q a 0 1.0\n"), Err(EvalError::Malformed { line: 1, .. })));
        assert!(matches!(Run::parse("q a 1 x\n"), Err(EvalError::Malformed { line: 1, .. })));
        let q = QrelSet::parse("q1 a 4\nq1 b 0\n").unwrap();
        assert_eq!(QrelSet::parse(&q.to_text()).unwrap(), q);
    }

    fn case() -> impl Strategy<Value = (Vec<Option<u8>>, Vec<u8>)> {
        // ranked items (None = unjudged) plus judged-but-unretrieved grades
        (prop::collection::vec(prop::option::of(0u8..=4), 1..12), prop::collection::vec(0u8..=4, 0..4))
    }

    fn materialize(items: &[Option<u8>], extra: &[u8]) -> (Vec<String>, Judgments) {
        let ids: Vec<String> = (0..items.len()).map(|i| format!("d{i}")).collect();
        let mut j = Judgments::new();
        for (id, g) in ids.iter().zip(items) {
            if let Some(g) = g {
                j.insert(id.clone(), *g);
            }
        }
        for (i, g) in extra.iter().enumerate() {
            j.insert(format!("x{i}"), *g);
        }
        (ids, j)
    }

    proptest! {
        #[test]
        fn metrics_stay_in_unit_range((items, extra) in case()) {
            let (ids, j) = materialize(&items, &extra);
            let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
            if let Ok(b) = bpref(&ids, &j) {
                prop_assert!((0.0..=1.0).contains(&b));
            }
            if let Ok(n) = ndcg(&ids, &j, 1000) {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&n));
            }
        }

        #[test]
        fn unjudged_insertions_leave_bpref_unchanged((items, extra) in case(), at in 0usize..12) {
            let (ids, j) = materialize(&items, &extra);
            let mut with: Vec<&str> = ids.iter().map(String::as_str).collect();
            let base = bpref(&with, &j);
            with.insert(at.min(with.len()), "unjudged");
            prop_assert_eq!(base, bpref(&with, &j));
        }

        #[test]
        fn promoting_relevant_never_hurts((items, extra) in case(), at in 0usize..11) {
            let (ids, j) = materialize(&items, &extra);
            let mut ids: Vec<&str> = ids.iter().map(String::as_str).collect();
            if at + 1 >= ids.len() {
                return Ok(());
            }
            let (a, b) = (j.get(ids[at]).copied(), j.get(ids[at + 1]).copied());
            // an irrelevant item directly above a strictly better one
            if let (Some(ga), Some(gb)) = (a, b) {
                if gb > ga {
                    let before = (bpref(&ids, &j).ok(), ndcg(&ids, &j, 1000).ok());
                    ids.swap(at, at + 1);
                    let after = (bpref(&ids, &j).ok(), ndcg(&ids, &j, 1000).ok());
                    if let (Some(x), Some(y)) = (before.0, after.0) { prop_assert!(y >= x - 1e-12); }
                    if let (Some(x), Some(y)) = (before.1, after.1) { prop_assert!(y >= x - 1e-12); }
                }
            }
        }
    }
}
