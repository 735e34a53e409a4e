//! Splitting, top-k identification rates, PIN search-space arithmetic, random
//! baselines and the rank-correlation used for survey tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::model::DatasetMode;

/// Number of digits in a PIN.
pub const PIN_LENGTH: u32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitRatios {
    fn check(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::invalid("split ratios must be finite and non-negative"));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("split ratios must sum to 1"));
        }
        Ok(())
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

fn floor_share(ratio: f64, n: usize) -> usize {
    (ratio * n as f64 + 1e-9).floor() as usize
}

/// Largest-remainder apportionment of `n` units; ties go to the earlier part.
fn apportion(ratios: [f64; 3], n: usize) -> [usize; 3] {
    let mut out = ratios.map(|r| floor_share(r, n));
    let mut order = [0, 1, 2];
    let frac = |j: usize| ratios[j] * n as f64 - out[j] as f64;
    order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
    let mut left = n - out.iter().sum::<usize>();
    for j in order.into_iter().cycle() {
        if left == 0 {
            break;
        }
        out[j] += 1;
        left -= 1;
    }
    out
}

/// Per-class `[train, val, test]` counts.
///
/// Global part sizes are apportioned by largest remainder. Each class gets
/// the floor of its ideal share in every part, and the leftover units go to
/// the parts still short of their global size, at most one per part and
/// class, so every count stays within one of its ideal value.
fn allocate(class_sizes: &[usize], ratios: [f64; 3]) -> Vec<[usize; 3]> {
    let total: usize = class_sizes.iter().sum();
    let global = apportion(ratios, total);

    let mut counts: Vec<[usize; 3]> = class_sizes.iter().map(|&n| ratios.map(|r| floor_share(r, n))).collect();
    let mut deficit = [0usize; 3];
    for j in 0..3 {
        deficit[j] = global[j] - counts.iter().map(|c| c[j]).sum::<usize>();
    }
    let remainder = |c: usize, counts: &[[usize; 3]]| class_sizes[c] - counts[c].iter().sum::<usize>();
    let mut order: Vec<usize> = (0..class_sizes.len()).collect();
    order.sort_by_key(|&c| std::cmp::Reverse(remainder(c, &counts)));
    for c in order {
        let mut used = [false; 3];
        while remainder(c, &counts) > 0 {
            let pick = |allow_used: bool| {
                (0..3)
                    .filter(|&j| deficit[j] > 0 && (allow_used || !used[j]))
                    .max_by_key(|&j| (deficit[j], std::cmp::Reverse(j)))
            };
            let j = pick(false)
                .or_else(|| pick(true))
                .expect("leftover units always match the total deficit");
            counts[c][j] += 1;
            deficit[j] -= 1;
            used[j] = true;
        }
    }
    counts
}

/// Stratified split into train/validation/test. Classes are visited in label
/// order and shuffled with `seed`; each part keeps the input order.
pub fn stratified_split<T: Clone>(
    items: &[T],
    label_of: impl Fn(&T) -> &str,
    ratios: SplitRatios,
    seed: u64,
) -> Result<Split<T>> {
    ratios.check()?;
    let mut classes: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        classes.entry(label_of(item)).or_default().push(i);
    }
    if let Some((label, idx)) = classes.iter().find(|(_, idx)| idx.len() < 3) {
        return Err(Error::ClassTooSmall {
            label: label.to_string(),
            count: idx.len(),
        });
    }
    let sizes: Vec<usize> = classes.values().map(Vec::len).collect();
    let counts = allocate(&sizes, ratios.as_array());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for (mut idx, [n_train, n_val, _]) in classes.into_values().zip(counts) {
        idx.shuffle(&mut rng);
        let (train, rest) = idx.split_at(n_train);
        let (val, test) = rest.split_at(n_val);
        parts[0].extend_from_slice(train);
        parts[1].extend_from_slice(val);
        parts[2].extend_from_slice(test);
    }
    let [train, val, test] = parts.map(|mut p| {
        p.sort_unstable();
        p.into_iter().map(|i| items[i].clone()).collect::<Vec<T>>()
    });
    Ok(Split { train, val, test })
}

pub fn split_features(rows: &[FeatureVector], ratios: SplitRatios, seed: u64) -> Result<Split<FeatureVector>> {
    stratified_split(rows, |r| r.label.as_str(), ratios, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: DatasetMode,
    pub n_test: usize,
    pub label_space: Vec<String>,
    /// Fraction of test samples whose label is among the `k` most probable.
    pub top_k_rates: BTreeMap<usize, f64>,
    /// `confusion[true][predicted]` over top-1 predictions.
    pub confusion: Vec<Vec<u64>>,
    pub baselines: BTreeMap<String, f64>,
    /// Quantities derived from the rates, e.g. PIN success from digit rates.
    pub derived: BTreeMap<String, f64>,
}

impl EvalReport {
    pub fn rate(&self, k: usize) -> Option<f64> {
        self.top_k_rates.get(&k).copied()
    }

    /// Rates are in `[0, 1]` and non-decreasing in k, and confusion rows sum
    /// to the per-class test counts.
    pub fn check_invariants(&self, test: &[FeatureVector]) -> Result<()> {
        let mut prev = 0.0;
        for (k, r) in &self.top_k_rates {
            if !(0.0..=1.0).contains(r) || *r < prev {
                return Err(Error::invalid(format!("top-{k} rate {r} breaks monotonicity")));
            }
            prev = *r;
        }
        for (i, label) in self.label_space.iter().enumerate() {
            let expected = test.iter().filter(|r| &r.label == label).count() as u64;
            let row: u64 = self.confusion[i].iter().sum();
            if row != expected {
                return Err(Error::invalid(format!(
                    "confusion row {label:?} sums to {row}, expected {expected}"
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn attempt_name(k: usize) -> String {
    match k {
        1 => "One".into(),
        2 => "Two".into(),
        3 => "Three".into(),
        4 => "Four".into(),
        5 => "Five".into(),
        k => format!("k={k}"),
    }
}

/// Plain-text table of identification rates: one row per number of
/// attempts, one column per named report.
pub fn format_rate_table(columns: &[(&str, &EvalReport)]) -> String {
    let ks: std::collections::BTreeSet<usize> = columns
        .iter()
        .flat_map(|(_, r)| r.top_k_rates.keys().copied())
        .collect();
    let mut out = String::new();
    let width = columns.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(8);
    let _ = write!(out, "{:<10}", "Attempts");
    for (name, _) in columns {
        let _ = write!(out, "| {name:>width$} ");
    }
    out.push('\n');
    let _ = writeln!(out, "{}", "-".repeat(10 + columns.len() * (width + 3)));
    for k in ks {
        let _ = write!(out, "{:<10}", attempt_name(k));
        for (_, report) in columns {
            match report.rate(k) {
                Some(r) => {
                    let cell = format!("{:.2}%", 100.0 * r);
                    let _ = write!(out, "| {cell:>width$} ");
                }
                None => {
                    let _ = write!(out, "| {:>width$} ", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Position of `truth` in the descending ranking of `probs` (ties broken by
/// lower index first).
fn rank_of(probs: &[f64], truth: usize) -> usize {
    let pt = probs[truth];
    probs
        .iter()
        .enumerate()
        .filter(|&(i, &p)| p > pt || (p == pt && i < truth))
        .count()
}

/// Evaluates `model` on `test`, computing top-k rates for every k in `ks`
/// and the top-1 confusion matrix.
pub fn evaluate<C: Classifier + Sync + ?Sized>(
    model: &C,
    test: &[FeatureVector],
    ks: &[usize],
    mode: DatasetMode,
) -> Result<EvalReport> {
    let labels = model.label_space();
    let n_labels = labels.len();
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > n_labels) {
        return Err(Error::invalid(format!("k must be in 1..={n_labels}, got {k}")));
    }
    let outcomes: Vec<(usize, usize, usize)> = test
        .par_iter()
        .map(|row| {
            let truth = labels
                .iter()
                .position(|l| *l == row.label)
                .ok_or_else(|| Error::UnknownLabel(row.label.clone()))?;
            let probs = model.probabilities(&row.values)?;
            if probs.len() != n_labels {
                return Err(Error::Dimension {
                    expected: n_labels,
                    actual: probs.len(),
                });
            }
            let predicted = rank_top1(&probs);
            Ok((truth, predicted, rank_of(&probs, truth)))
        })
        .collect::<Result<_>>()?;

    let mut confusion = vec![vec![0u64; n_labels]; n_labels];
    for &(truth, predicted, _) in &outcomes {
        confusion[truth][predicted] += 1;
    }
    let n = outcomes.len();
    let top_k_rates: BTreeMap<usize, f64> = ks
        .iter()
        .map(|&k| {
            let hits = outcomes.iter().filter(|o| o.2 < k).count();
            (k, hits as f64 / n as f64)
        })
        .collect();

    let mut derived = BTreeMap::new();
    if mode == DatasetMode::Digit10 {
        if let Some(&r) = top_k_rates.get(&3) {
            derived.insert("pin_success_top3_per_digit".to_string(), pin_success_from_digit_rate(r)?);
            derived.insert("pin_candidate_set_size".to_string(), candidate_set_size(3) as f64);
        }
    }
    Ok(EvalReport {
        mode,
        n_test: n,
        label_space: labels.to_vec(),
        top_k_rates,
        confusion,
        baselines: random_baselines(mode),
        derived,
    })
}

fn rank_top1(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = i;
        }
    }
    best
}

/// Probability of recovering a whole PIN when each digit is independently
/// recovered with probability `p`.
pub fn pin_success_from_digit_rate(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("per-digit rate must be in [0, 1], got {p}")));
    }
    Ok(p.powi(PIN_LENGTH as i32))
}

/// Number of candidate PINs when each digit is guessed from its
/// `attempts_per_digit` best candidates.
pub fn candidate_set_size(attempts_per_digit: u32) -> u64 {
    u64::from(attempts_per_digit).pow(PIN_LENGTH)
}

/// Success rate of guessing uniformly at random.
pub fn random_baselines(mode: DatasetMode) -> BTreeMap<String, f64> {
    let k = mode.label_count() as f64;
    let mut out = BTreeMap::new();
    out.insert("random_attempts_1".to_string(), 1.0 / k);
    out.insert("random_attempts_3".to_string(), 3.0 / k);
    if mode == DatasetMode::Digit10 {
        let space = 10f64.powi(PIN_LENGTH as i32);
        out.insert(
            "random_pin_attempts_81".to_string(),
            candidate_set_size(3) as f64 / space,
        );
    }
    out
}

/// Ranks starting at 1; tied values share the mean of the ranks they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rank correlation: Pearson correlation of the average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "spearman inputs differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::invalid("spearman needs at least 2 observations"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid("spearman inputs must be finite"));
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let mean = (a.len() as f64 + 1.0) / 2.0;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        let (dx, dy) = (x - mean, y - mean);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::invalid("spearman is undefined for a constant input"));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Ordinal 1–5 answers to one question: rows are participants, columns are
/// sensors.
#[derive(Clone, Debug, PartialEq)]
pub struct LikertTable {
    pub sensors: Vec<String>,
    pub scores: Vec<Vec<u8>>,
}

impl LikertTable {
    pub fn new(sensors: Vec<String>, scores: Vec<Vec<u8>>) -> Result<Self> {
        for (p, row) in scores.iter().enumerate() {
            if row.len() != sensors.len() {
                return Err(Error::invalid(format!(
                    "participant {} has {} answers for {} sensors",
                    p + 1,
                    row.len(),
                    sensors.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !(1..=5).contains(*v)) {
                return Err(Error::invalid(format!(
                    "participant {}: score {v} outside 1-5",
                    p + 1
                )));
            }
        }
        if scores.is_empty() {
            return Err(Error::invalid("Likert table has no participants"));
        }
        Ok(LikertTable { sensors, scores })
    }

    /// Header row of sensor names, then one row per participant.
    pub fn from_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let sensors: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut scores = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| {
                    s.parse::<u8>().map_err(|_| Error::Parse {
                        line: i + 2,
                        message: format!("score {s:?} is not an integer 1-5"),
                    })
                })
                .collect::<Result<Vec<u8>>>()?;
            scores.push(row);
        }
        LikertTable::new(sensors, scores)
    }

    pub fn sensor_means(&self) -> Vec<f64> {
        let n = self.scores.len() as f64;
        (0..self.sensors.len())
            .map(|j| self.scores.iter().map(|r| f64::from(r[j])).sum::<f64>() / n)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurveyCorrelation {
    pub sensors: Vec<String>,
    pub knowledge_mean: Vec<f64>,
    pub concern_mean: Vec<f64>,
    pub knowledge_rank: Vec<f64>,
    pub concern_rank: Vec<f64>,
    pub rho: f64,
}

/// Ranks sensors by mean knowledge and by mean concern and correlates the two
/// rankings.
pub fn survey_correlation(knowledge: &LikertTable, concern: &LikertTable) -> Result<SurveyCorrelation> {
    if knowledge.sensors != concern.sensors {
        return Err(Error::invalid(
            "knowledge and concern tables must list the same sensors in the same order",
        ));
    }
    let knowledge_mean = knowledge.sensor_means();
    let concern_mean = concern.sensor_means();
    let rho = spearman(&knowledge_mean, &concern_mean)?;
    Ok(SurveyCorrelation {
        sensors: knowledge.sensors.clone(),
        knowledge_rank: average_ranks(&knowledge_mean),
        concern_rank: average_ranks(&concern_mean),
        knowledge_mean,
        concern_mean,
        rho,
    })
}

impl SurveyCorrelation {
    pub fn to_table(&self) -> String {
        let w = self.sensors.iter().map(String::len).max().unwrap_or(6).max(6);
        let mut out = format!(
            "{:<w$}  {:>9}  {:>6}  {:>9}  {:>6}\n",
            "sensor", "knowledge", "rank", "concern", "rank"
        );
        for i in 0..self.sensors.len() {
            let _ = writeln!(
                out,
                "{:<w$}  {:>9.3}  {:>6.1}  {:>9.3}  {:>6.1}",
                self.sensors[i],
                self.knowledge_mean[i],
                self.knowledge_rank[i],
                self.concern_mean[i],
                self.concern_rank[i]
            );
        }
        let _ = writeln!(out, "rho = {:.3}", self.rho);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rows(labels: &[&str]) -> Vec<FeatureVector> {
        labels
            .iter()
            .map(|l| FeatureVector {
                values: vec![],
                label: l.to_string(),
                user_id: "u".into(),
            })
            .collect()
    }

    fn balanced(classes: usize, per_class: usize) -> Vec<FeatureVector> {
        let labels: Vec<String> = (0..classes * per_class).map(|i| format!("c{}", i % classes)).collect();
        rows(&labels.iter().map(String::as_str).collect::<Vec<_>>())
    }

    #[test]
    fn split_exact_proportions() {
        let data = balanced(10, 10);
        let s = split_features(&data, SplitRatios::default(), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (70, 15, 15));
        for c in 0..10 {
            let label = format!("c{c}");
            let count = |part: &[FeatureVector]| part.iter().filter(|r| r.label == label).count();
            assert_eq!(count(&s.train), 7);
            assert!((1..=2).contains(&count(&s.val)));
            assert!((1..=2).contains(&count(&s.test)));
        }
    }

    #[test]
    fn split_is_deterministic_and_seed_dependent() {
        let mut data = balanced(5, 12);
        for (i, r) in data.iter_mut().enumerate() {
            r.user_id = i.to_string();
        }
        let a = split_features(&data, SplitRatios::default(), 3).unwrap();
        let b = split_features(&data, SplitRatios::default(), 3).unwrap();
        let c = split_features(&data, SplitRatios::default(), 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn split_rejects_tiny_classes_and_bad_ratios() {
        let data = rows(&["a", "a", "a", "b", "b"]);
        match split_features(&data, SplitRatios::default(), 0) {
            Err(Error::ClassTooSmall { label, count }) => {
                assert_eq!(label, "b");
                assert_eq!(count, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad = SplitRatios {
            train: 0.7,
            val: 0.2,
            test: 0.2,
        };
        assert!(split_features(&balanced(2, 5), bad, 0).is_err());
    }

    proptest! {
        #[test]
        fn split_is_a_partition_within_one_of_ideal(
            sizes in prop::collection::vec(3usize..60, 1..30),
            seed in any::<u64>(),
        ) {
            let mut data = Vec::new();
            for (c, &n) in sizes.iter().enumerate() {
                for i in 0..n {
                    data.push(FeatureVector { values: vec![], label: format!("c{c}"), user_id: format!("{c}-{i}") });
                }
            }
            let s = split_features(&data, SplitRatios::default(), seed).unwrap();
            let total = data.len();
            prop_assert_eq!(s.train.len() + s.val.len() + s.test.len(), total);
            let mut ids: Vec<&str> = s.train.iter().chain(&s.val).chain(&s.test).map(|r| r.user_id.as_str()).collect();
            ids.sort();
            ids.dedup();
            prop_assert_eq!(ids.len(), total);
            for (c, &n) in sizes.iter().enumerate() {
                let label = format!("c{c}");
                for (part, ratio) in [(&s.train, 0.70), (&s.val, 0.15), (&s.test, 0.15)] {
                    let got = part.iter().filter(|r| r.label == label).count() as f64;
                    prop_assert!((got - ratio * n as f64).abs() <= 1.0 + 1e-9);
                }
            }
        }
    }

    struct Fixed {
        labels: Vec<String>,
        probs: Vec<f64>,
    }

    impl Classifier for Fixed {
        fn label_space(&self) -> &[String] {
            &self.labels
        }
        fn probabilities(&self, _: &[f64]) -> Result<Vec<f64>> {
            Ok(self.probs.clone())
        }
    }

    #[test]
    fn evaluate_counts_and_confusion() {
        let model = Fixed {
            labels: vec!["a".into(), "b".into(), "c".into()],
            probs: vec![0.2, 0.5, 0.3],
        };
        let test = rows(&["a", "b", "c", "c"]);
        let r = evaluate(&model, &test, &[1, 2, 3], DatasetMode::Activity3).unwrap();
        assert_eq!(r.rate(1), Some(0.25));
        assert_eq!(r.rate(2), Some(0.75));
        assert_eq!(r.rate(3), Some(1.0));
        assert_eq!(r.confusion, vec![vec![0, 1, 0], vec![0, 1, 0], vec![0, 2, 0]]);
        r.check_invariants(&test).unwrap();
        assert!(evaluate(&model, &rows(&["z"]), &[1], DatasetMode::Activity3).is_err());
        assert!(evaluate(&model, &test, &[4], DatasetMode::Activity3).is_err());
    }

    #[test]
    fn evaluate_is_order_invariant() {
        let model = Fixed {
            labels: vec!["a".into(), "b".into()],
            probs: vec![0.4, 0.6],
        };
        let test = rows(&["a", "b", "b", "a", "a"]);
        let mut rev = test.clone();
        rev.reverse();
        let a = evaluate(&model, &test, &[1, 2], DatasetMode::Activity3).unwrap();
        let b = evaluate(&model, &rev, &[1, 2], DatasetMode::Activity3).unwrap();
        assert_eq!(a.top_k_rates, b.top_k_rates);
        assert_eq!(a.confusion, b.confusion);
    }

    struct Oracle(Vec<String>);

    impl Classifier for Oracle {
        fn label_space(&self) -> &[String] {
            &self.0
        }
        fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
            let mut p = vec![0.0; self.0.len()];
            p[x[0] as usize] = 1.0;
            Ok(p)
        }
    }

    fn labelled(n: usize, k: usize, seed: u64) -> Vec<FeatureVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let c = rand::Rng::random_range(&mut rng, 0..k);
                FeatureVector {
                    values: vec![c as f64],
                    label: format!("c{c:02}"),
                    user_id: "u".into(),
                }
            })
            .collect()
    }

    #[test]
    fn oracle_model_scores_one() {
        let labels: Vec<String> = (0..50).map(|c| format!("c{c:02}")).collect();
        let test = labelled(500, 50, 1);
        let r = evaluate(&Oracle(labels), &test, &[1, 2, 3], DatasetMode::Pin50).unwrap();
        assert!(r.top_k_rates.values().all(|&v| v == 1.0));
    }

    #[test]
    fn uniform_model_hits_chance() {
        let model = Fixed {
            labels: (0..50).map(|c| format!("c{c:02}")).collect(),
            probs: vec![0.02; 50],
        };
        let test = labelled(5000, 50, 2);
        let r = evaluate(&model, &test, &[1, 2, 3], DatasetMode::Pin50).unwrap();
        let sigma = (0.02 * 0.98 / 5000.0f64).sqrt();
        assert!((r.rate(1).unwrap() - 0.02).abs() <= 3.0 * sigma, "{:?}", r.top_k_rates);
        r.check_invariants(&test).unwrap();
    }

    #[test]
    fn search_space_arithmetic() {
        assert!((pin_success_from_digit_rate(0.9206).unwrap() - 0.7182).abs() < 1e-4);
        assert_eq!(pin_success_from_digit_rate(1.0).unwrap(), 1.0);
        assert!((pin_success_from_digit_rate(0.96).unwrap() - 0.84934656).abs() < 1e-15);
        assert!(pin_success_from_digit_rate(1.01).is_err());
        assert!(pin_success_from_digit_rate(-0.01).is_err());
        assert_eq!(candidate_set_size(3), 81);
        let b = random_baselines(DatasetMode::Pin50);
        assert_eq!(b["random_attempts_1"], 0.02);
        assert_eq!(b["random_attempts_3"], 0.06);
        assert_eq!(random_baselines(DatasetMode::Digit10)["random_pin_attempts_81"], 0.0081);
    }

    proptest! {
        #[test]
        fn pin_success_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(pin_success_from_digit_rate(lo).unwrap() <= pin_success_from_digit_rate(hi).unwrap());
        }

        #[test]
        fn spearman_symmetric_and_self_one(v in prop::collection::vec(1u8..=5, 2..30), w in prop::collection::vec(1u8..=5, 2..30)) {
            let n = v.len().min(w.len());
            let a: Vec<f64> = v[..n].iter().map(|&x| f64::from(x)).collect();
            let b: Vec<f64> = w[..n].iter().map(|&x| f64::from(x)).collect();
            let const_a = a.iter().all(|x| *x == a[0]);
            let const_b = b.iter().all(|x| *x == b[0]);
            if !const_a {
                prop_assert!((spearman(&a, &a).unwrap() - 1.0).abs() < 1e-12);
            }
            if !const_a && !const_b {
                let r = spearman(&a, &b).unwrap();
                prop_assert_eq!(r, spearman(&b, &a).unwrap());
                prop_assert!(r.abs() <= 1.0);
            }
        }
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 40.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(spearman(&[1.0, 2.0], &[1.0]).is_err());
        assert!(spearman(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn average_ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
        assert_eq!(average_ranks(&[5.0, 5.0, 5.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn likert_parsing_and_survey() {
        let k = "acc,gyro,light,gps\n1,2,3,5\n2,2,4,5\n";
        let c = "acc,gyro,light,gps\n1,1,2,4\n1,3,3,5\n";
        let k = LikertTable::from_csv(k.as_bytes()).unwrap();
        let c = LikertTable::from_csv(c.as_bytes()).unwrap();
        let s = survey_correlation(&k, &c).unwrap();
        assert!((s.rho - 1.0).abs() < 1e-12);
        assert!(s.to_table().ends_with("rho = 1.000\n"));

        assert!(LikertTable::from_csv("a,b\n1,6\n".as_bytes()).is_err());
        assert!(LikertTable::from_csv("a,b\n1,x\n".as_bytes()).is_err());
        let other = LikertTable::from_csv("a,b\n1,2\n".as_bytes()).unwrap();
        assert!(survey_correlation(&k, &other).is_err());
    }

    #[test]
    fn rate_table_layout() {
        let model = Fixed {
            labels: vec!["a".into(), "b".into(), "c".into()],
            probs: vec![0.2, 0.5, 0.3],
        };
        let r = evaluate(&model, &rows(&["b", "c"]), &[1, 2, 3], DatasetMode::Activity3).unwrap();
        let t = format_rate_table(&[("Multiple-users", &r)]);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].starts_with("Attempts"));
        assert!(lines[2].starts_with("One") && lines[2].ends_with("50.00% "));
        assert!(lines[4].starts_with("Three") && lines[4].ends_with("100.00% "));
    }
}
