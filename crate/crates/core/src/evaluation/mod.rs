//! IO decoding, span-exact scoring, macro-averaged P/R/F1 and token-level
//! false positive / false negative rates.

mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{ArgumentSpan, Document};
use crate::error::{Error, Result};

pub use report::{render_table, Report};

/// Per-token class labels: `0..n` are argument types, `n` is O.
pub fn encode_spans(spans: &[ArgumentSpan], len: usize, active_types: &[String]) -> Vec<usize> {
    let n = active_types.len();
    let mut labels = vec![n; len];
    for span in spans {
        if let Some(c) = active_types.iter().position(|t| *t == span.role) {
            for l in &mut labels[span.start.min(len)..span.end.min(len)] {
                *l = c;
            }
        }
    }
    labels
}

/// Maximal runs of one argument label become spans; O and type changes end a run.
pub fn decode_spans(labels: &[usize], active_types: &[String]) -> Vec<ArgumentSpan> {
    let n = active_types.len();
    let mut spans = Vec::new();
    let mut start = 0;
    for t in 0..=labels.len() {
        let current = labels.get(t).copied();
        let previous = t.checked_sub(1).map(|p| labels[p]);
        if current != previous {
            if let Some(prev) = previous.filter(|&p| p < n) {
                spans.push(ArgumentSpan::new(start, t, active_types[prev].clone()));
            }
            start = t;
        }
    }
    spans
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl SpanCounts {
    pub fn gold(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn predicted(&self) -> usize {
        self.tp + self.fp
    }

    fn add(&mut self, other: &SpanCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    /// Precision, recall and F1 as fractions, with 0/0 taken as 0.
    pub fn prf(&self) -> (f64, f64, f64) {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let p = ratio(self.tp, self.predicted());
        let r = ratio(self.tp, self.gold());
        let f1 = if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        };
        (p, r, f1)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCounts {
    pub gold_o: usize,
    pub gold_o_predicted_arg: usize,
    pub gold_arg: usize,
    pub gold_arg_predicted_o: usize,
}

impl TokenCounts {
    fn add(&mut self, other: &TokenCounts) {
        self.gold_o += other.gold_o;
        self.gold_o_predicted_arg += other.gold_o_predicted_arg;
        self.gold_arg += other.gold_arg;
        self.gold_arg_predicted_o += other.gold_arg_predicted_o;
    }

    /// `(fp_rate, fn_rate)` in percent.
    pub fn rates(&self) -> (f64, f64) {
        let pct = |a: usize, b: usize| {
            if b == 0 {
                0.0
            } else {
                100.0 * a as f64 / b as f64
            }
        };
        (
            pct(self.gold_o_predicted_arg, self.gold_o),
            pct(self.gold_arg_predicted_o, self.gold_arg),
        )
    }
}

pub fn token_counts(pred: &[usize], gold: &[usize], nota: usize) -> TokenCounts {
    assert_eq!(pred.len(), gold.len(), "label sequences must be aligned");
    let mut c = TokenCounts::default();
    for (&p, &g) in pred.iter().zip(gold) {
        if g == nota {
            c.gold_o += 1;
            c.gold_o_predicted_arg += usize::from(p != nota);
        } else {
            c.gold_arg += 1;
            c.gold_arg_predicted_o += usize::from(p == nota);
        }
    }
    c
}

/// `(fp_rate, fn_rate)` in percent for aligned label sequences.
pub fn fp_fn_analysis(pred: &[usize], gold: &[usize], nota: usize) -> (f64, f64) {
    token_counts(pred, gold, nota).rates()
}

/// Span and token counts for one episode.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeScore {
    pub spans: BTreeMap<String, SpanCounts>,
    pub tokens: TokenCounts,
}

impl EpisodeScore {
    fn add(&mut self, other: &EpisodeScore) {
        for (role, c) in &other.spans {
            self.spans.entry(role.clone()).or_default().add(c);
        }
        self.tokens.add(&other.tokens);
    }

    /// Scores predicted token labels against the gold spans of `queries`.
    pub fn from_predictions(
        pred_labels: &[Vec<usize>],
        queries: &[Document],
        active_types: &[String],
    ) -> Self {
        assert_eq!(
            pred_labels.len(),
            queries.len(),
            "one label sequence per query"
        );
        let pred: Vec<Vec<ArgumentSpan>> = pred_labels
            .iter()
            .map(|l| decode_spans(l, active_types))
            .collect();
        let gold: Vec<Vec<ArgumentSpan>> = queries.iter().map(|d| d.arguments.clone()).collect();
        let mut score = score_episode(&pred, &gold, active_types);
        for (labels, doc) in pred_labels.iter().zip(queries) {
            let gold_labels = encode_spans(&doc.arguments, doc.len(), active_types);
            score
                .tokens
                .add(&token_counts(labels, &gold_labels, active_types.len()));
        }
        score
    }
}

/// Exact `(start, end, role)` matching per document, counted per active type.
/// Spans whose role is not active are ignored.
pub fn score_episode(
    pred: &[Vec<ArgumentSpan>],
    gold: &[Vec<ArgumentSpan>],
    active_types: &[String],
) -> EpisodeScore {
    assert_eq!(
        pred.len(),
        gold.len(),
        "pred and gold must cover the same documents"
    );
    let mut spans: BTreeMap<String, SpanCounts> = active_types
        .iter()
        .map(|t| (t.clone(), SpanCounts::default()))
        .collect();
    for (p, g) in pred.iter().zip(gold) {
        let p: BTreeSet<&ArgumentSpan> = p.iter().collect();
        let g: BTreeSet<&ArgumentSpan> = g.iter().collect();
        for s in &p {
            if let Some(c) = spans.get_mut(&s.role) {
                if g.contains(s) {
                    c.tp += 1;
                } else {
                    c.fp += 1;
                }
            }
        }
        for s in g.difference(&p) {
            if let Some(c) = spans.get_mut(&s.role) {
                c.fn_ += 1;
            }
        }
    }
    EpisodeScore {
        spans,
        tokens: TokenCounts::default(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacroMode {
    /// Pool counts over all episodes, then average over types.
    #[default]
    Global,
    /// Macro-average within each episode, then average over episodes.
    PerEpisode,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub p: f64,
    pub r: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeScore {
    pub role: String,
    pub p: f64,
    pub r: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Aggregate scores; all figures are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(rename = "macro")]
    pub macro_scores: Prf,
    pub per_type: Vec<TypeScore>,
    pub fp_rate: f64,
    pub fn_rate: f64,
    pub episode_count: usize,
}

/// Unweighted mean over types with gold support; zeros when there are none.
fn macro_over(spans: &BTreeMap<String, SpanCounts>) -> Prf {
    let scored: Vec<(f64, f64, f64)> = spans
        .values()
        .filter(|c| c.gold() > 0)
        .map(SpanCounts::prf)
        .collect();
    if scored.is_empty() {
        return Prf::default();
    }
    let n = scored.len() as f64;
    Prf {
        p: 100.0 * scored.iter().map(|s| s.0).sum::<f64>() / n,
        r: 100.0 * scored.iter().map(|s| s.1).sum::<f64>() / n,
        f1: 100.0 * scored.iter().map(|s| s.2).sum::<f64>() / n,
    }
}

pub fn aggregate(episodes: &[EpisodeScore], mode: MacroMode) -> Result<EvalReport> {
    if episodes.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let mut total = EpisodeScore::default();
    for e in episodes {
        total.add(e);
    }
    let macro_scores = match mode {
        MacroMode::Global => macro_over(&total.spans),
        MacroMode::PerEpisode => {
            let per: Vec<Prf> = episodes
                .iter()
                .filter(|e| e.spans.values().any(|c| c.gold() > 0))
                .map(|e| macro_over(&e.spans))
                .collect();
            let n = per.len().max(1) as f64;
            Prf {
                p: per.iter().map(|x| x.p).sum::<f64>() / n,
                r: per.iter().map(|x| x.r).sum::<f64>() / n,
                f1: per.iter().map(|x| x.f1).sum::<f64>() / n,
            }
        }
    };
    let per_type = total
        .spans
        .iter()
        .map(|(role, c)| {
            let (p, r, f1) = c.prf();
            TypeScore {
                role: role.clone(),
                p: 100.0 * p,
                r: 100.0 * r,
                f1: 100.0 * f1,
                tp: c.tp,
                fp: c.fp,
                fn_: c.fn_,
            }
        })
        .collect();
    let (fp_rate, fn_rate) = total.tokens.rates();
    Ok(EvalReport {
        macro_scores,
        per_type,
        fp_rate,
        fn_rate,
        episode_count: episodes.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(n: &[&str]) -> Vec<String> {
        n.iter().map(|s| s.to_string()).collect()
    }

    fn span(s: usize, e: usize, r: &str) -> ArgumentSpan {
        ArgumentSpan::new(s, e, r)
    }

    #[test]
    fn decoding_examples() {
        let t = names(&["A", "B"]);
        assert!(decode_spans(&[2, 2, 2], &t).is_empty());
        assert_eq!(
            decode_spans(&[2, 0, 0, 2, 1], &t),
            [span(1, 3, "A"), span(4, 5, "B")]
        );
        assert_eq!(
            decode_spans(&[0, 1, 1], &t),
            [span(0, 1, "A"), span(1, 3, "B")]
        );
        assert!(decode_spans(&[], &t).is_empty());
    }

    #[test]
    fn scoring_examples() {
        let t = names(&["A"]);
        let s = score_episode(&[vec![span(1, 3, "A")]], &[vec![span(1, 3, "A")]], &t);
        assert_eq!(
            s.spans["A"],
            SpanCounts {
                tp: 1,
                fp: 0,
                fn_: 0
            }
        );
        let s = score_episode(&[vec![span(1, 2, "A")]], &[vec![span(1, 3, "A")]], &t);
        assert_eq!(
            s.spans["A"],
            SpanCounts {
                tp: 0,
                fp: 1,
                fn_: 1
            }
        );
    }

    #[test]
    fn aggregate_degenerate_cases() {
        let t = names(&["A", "B"]);
        let gold = vec![vec![span(0, 2, "A"), span(3, 4, "B")]];
        let perfect = score_episode(&gold, &gold, &t);
        let r = aggregate(&[perfect], MacroMode::Global).unwrap();
        assert_eq!(
            r.macro_scores,
            Prf {
                p: 100.0,
                r: 100.0,
                f1: 100.0
            }
        );
        let none = score_episode(&[vec![]], &gold, &t);
        let r = aggregate(&[none], MacroMode::Global).unwrap();
        assert_eq!(r.macro_scores, Prf::default());
        assert!(matches!(
            aggregate(&[], MacroMode::Global),
            Err(Error::EmptyEvaluation)
        ));
    }

    #[test]
    fn hand_scored_three_episodes() {
        // episode 1: A gold 2, pred 2 with 1 correct; B gold 1 predicted exactly
        let e1 = score_episode(
            &[vec![span(0, 1, "A"), span(5, 6, "A"), span(8, 9, "B")]],
            &[vec![span(0, 1, "A"), span(3, 4, "A"), span(8, 9, "B")]],
            &names(&["A", "B"]),
        );
        // episode 2: A gold 1 missed; C gold 1 found plus 1 spurious
        let e2 = score_episode(
            &[vec![span(2, 4, "C"), span(6, 7, "C")]],
            &[vec![span(0, 2, "A"), span(2, 4, "C")]],
            &names(&["A", "C"]),
        );
        // episode 3: D active but absent from gold, one spurious prediction
        let e3 = score_episode(&[vec![span(1, 2, "D")]], &[vec![]], &names(&["D"]));
        let r = aggregate(&[e1.clone(), e2.clone(), e3.clone()], MacroMode::Global).unwrap();
        // A: tp1 fp1 fn2 -> p 1/2, r 1/3, f1 0.4; B: 1,1,1; C: p 1/2, r 1, f1 2/3; D excluded
        let f1 = (0.4 + 1.0 + 2.0 / 3.0) / 3.0 * 100.0;
        let p = (0.5 + 1.0 + 0.5) / 3.0 * 100.0;
        let rec = (1.0 / 3.0 + 1.0 + 1.0) / 3.0 * 100.0;
        assert!((r.macro_scores.f1 - f1).abs() < 1e-9);
        assert!((r.macro_scores.p - p).abs() < 1e-9);
        assert!((r.macro_scores.r - rec).abs() < 1e-9);
        assert_eq!(r.per_type.iter().find(|t| t.role == "D").unwrap().fp, 1);

        // per-episode: e1 A (p .5 r .5 f .5), B 1 -> .75; e2 A 0, C 2/3 -> 1/3; e3 skipped
        let r = aggregate(&[e1, e2, e3], MacroMode::PerEpisode).unwrap();
        assert!((r.macro_scores.f1 - (0.75 + 1.0 / 3.0) / 2.0 * 100.0).abs() < 1e-9);
    }

    #[test]
    fn token_rates() {
        assert_eq!(fp_fn_analysis(&[0, 2, 1], &[0, 2, 1], 2), (0.0, 0.0));
        assert_eq!(
            fp_fn_analysis(&[2, 2, 2, 2], &[0, 2, 1, 2], 2),
            (0.0, 100.0)
        );
        assert_eq!(
            fp_fn_analysis(&[0, 0, 2, 2], &[2, 2, 2, 1], 2),
            (200.0 / 3.0, 100.0)
        );
    }

    #[test]
    fn from_predictions_combines_spans_and_tokens() {
        let doc = Document {
            doc_id: "q".into(),
            title: String::new(),
            event_type: "E".into(),
            tokens: (0..6).map(|i| i.to_string()).collect(),
            arguments: vec![span(1, 3, "A")],
        };
        let t = names(&["A", "B"]);
        let s = EpisodeScore::from_predictions(&[vec![2, 0, 2, 2, 2, 1]], &[doc], &t);
        assert_eq!(
            s.spans["A"],
            SpanCounts {
                tp: 0,
                fp: 1,
                fn_: 1
            }
        );
        assert_eq!(
            s.spans["B"],
            SpanCounts {
                tp: 0,
                fp: 1,
                fn_: 0
            }
        );
        assert_eq!(s.tokens.gold_o_predicted_arg, 1);
        assert_eq!(s.tokens.gold_arg_predicted_o, 1);
    }

    fn random_labels(rng: &mut ChaCha8Rng, len: usize, n: usize) -> Vec<usize> {
        // sticky labels so runs of varying length occur
        let mut out = Vec::with_capacity(len);
        let mut cur = n;
        for _ in 0..len {
            if rng.gen_bool(0.3) {
                cur = rng.gen_range(0..=n);
            }
            out.push(cur);
        }
        out
    }

    /// Counts by comparing every predicted span against every gold span.
    fn brute_force(
        p: &[ArgumentSpan],
        g: &[ArgumentSpan],
        t: &[String],
    ) -> BTreeMap<String, SpanCounts> {
        let mut out: BTreeMap<String, SpanCounts> = t
            .iter()
            .map(|r| (r.clone(), SpanCounts::default()))
            .collect();
        for x in p {
            let hit = g
                .iter()
                .any(|y| y.start == x.start && y.end == x.end && y.role == x.role);
            let c = out.get_mut(&x.role).unwrap();
            if hit {
                c.tp += 1
            } else {
                c.fp += 1
            }
        }
        for y in g {
            if !p
                .iter()
                .any(|x| x.start == y.start && x.end == y.end && x.role == y.role)
            {
                out.get_mut(&y.role).unwrap().fn_ += 1;
            }
        }
        out
    }

    #[test]
    fn scoring_matches_brute_force_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let t = names(&["A", "B", "C"]);
        for _ in 0..1000 {
            let len = rng.gen_range(0..40);
            let p = decode_spans(&random_labels(&mut rng, len, 3), &t);
            let g = decode_spans(&random_labels(&mut rng, len, 3), &t);
            let s = score_episode(&[p.clone()], &[g.clone()], &t);
            assert_eq!(s.spans, brute_force(&p, &g, &t));
        }
    }

    proptest! {
        #[test]
        fn encode_then_decode_round_trips(seed in 0u64..2000, len in 0usize..50) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = names(&["A", "B", "C"]);
            let labels = random_labels(&mut rng, len, 3);
            let spans = decode_spans(&labels, &t);
            prop_assert_eq!(encode_spans(&spans, len, &t), labels.clone());
            prop_assert_eq!(decode_spans(&encode_spans(&spans, len, &t), &t), spans);
        }

        #[test]
        fn relabeling_types_permutes_counts(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = names(&["A", "B", "C"]);
            let renamed = names(&["z", "x", "y"]);
            let len = 30;
            let pl = random_labels(&mut rng, len, 3);
            let gl = random_labels(&mut rng, len, 3);
            let a = score_episode(&[decode_spans(&pl, &t)], &[decode_spans(&gl, &t)], &t);
            let b = score_episode(&[decode_spans(&pl, &renamed)], &[decode_spans(&gl, &renamed)], &renamed);
            for (old, new) in t.iter().zip(&renamed) {
                prop_assert_eq!(a.spans[old], b.spans[new]);
            }
        }

        #[test]
        fn macro_f1_extremes(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = names(&["A", "B"]);
            let gold = decode_spans(&random_labels(&mut rng, 40, 2), &t);
            prop_assume!(!gold.is_empty());
            let none = aggregate(&[score_episode(&[vec![]], &[gold.clone()], &t)], MacroMode::Global).unwrap();
            prop_assert_eq!(none.macro_scores.f1, 0.0);
            let same = aggregate(&[score_episode(&[gold.clone()], &[gold.clone()], &t)], MacroMode::Global).unwrap();
            prop_assert!((same.macro_scores.f1 - 100.0).abs() < 1e-12);
            let other = decode_spans(&random_labels(&mut rng, 40, 2), &t);
            let r = aggregate(&[score_episode(&[other.clone()], &[gold.clone()], &t)], MacroMode::Global).unwrap();
            let gold_types: BTreeSet<&String> = gold.iter().map(|s| &s.role).collect();
            let exact = gold_types.iter().all(|ty| {
                let a: BTreeSet<_> = other.iter().filter(|s| &&s.role == ty).collect();
                let b: BTreeSet<_> = gold.iter().filter(|s| &&s.role == ty).collect();
                a == b
            });
            prop_assert_eq!((r.macro_scores.f1 - 100.0).abs() < 1e-12, exact);
        }

        #[test]
        fn single_episode_aggregate_is_direct_mean(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = names(&["A", "B", "C"]);
            let s = score_episode(
                &[decode_spans(&random_labels(&mut rng, 50, 3), &t)],
                &[decode_spans(&random_labels(&mut rng, 50, 3), &t)],
                &t,
            );
            let f1s: Vec<f64> = s.spans.values().filter(|c| c.gold() > 0).map(|c| c.prf().2).collect();
            let direct = if f1s.is_empty() { 0.0 } else { 100.0 * f1s.iter().sum::<f64>() / f1s.len() as f64 };
            let r = aggregate(&[s], MacroMode::Global).unwrap();
            prop_assert!((r.macro_scores.f1 - direct).abs() < 1e-9);
            prop_assert!((0.0..=100.0).contains(&r.fp_rate) && (0.0..=100.0).contains(&r.fn_rate));
        }
    }
}
