//! Smoothed per-feature likelihood ratios and quality-based feature
//! selection.

use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::{Label, LabeledExample};

use super::ClassifierError;

/// Occurrences of one feature in the positive and negative training tokens.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TokenCounts {
    pub positive: u64,
    pub negative: u64,
}

impl TokenCounts {
    pub fn total(self) -> u64 {
        self.positive + self.negative
    }
}

/// Token counts gathered from a labeled set.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FeatureCounts {
    features: BTreeMap<String, TokenCounts>,
    positive_tokens: u64,
    negative_tokens: u64,
}

impl FeatureCounts {
    pub fn from_examples(labeled: &[LabeledExample]) -> Self {
        let mut counts = Self::default();
        for example in labeled {
            for token in &example.tokens {
                counts.add(token, example.label, 1);
            }
        }
        counts
    }

    pub(crate) fn add(&mut self, feature: &str, label: Label, n: u64) {
        let entry = match self.features.get_mut(feature) {
            Some(e) => e,
            None => self.features.entry(feature.to_owned()).or_default(),
        };
        match label {
            Label::Positive => {
                entry.positive += n;
                self.positive_tokens += n;
            }
            Label::Negative => {
                entry.negative += n;
                self.negative_tokens += n;
            }
        }
    }

    /// Total number of tokens in the positive training examples.
    pub fn positive_tokens(&self) -> u64 {
        self.positive_tokens
    }

    /// Total number of tokens in the negative training examples.
    pub fn negative_tokens(&self) -> u64 {
        self.negative_tokens
    }

    /// Number of distinct candidate features.
    pub fn distinct(&self) -> usize {
        self.features.len()
    }

    pub fn get(&self, feature: &str) -> Option<TokenCounts> {
        self.features.get(feature).copied()
    }

    /// Candidates in ascending feature order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, TokenCounts)> {
        self.features.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// The smoothed ratio P(w|C) / P(w|C̄) for a feature seen `positive` times
/// among `positive_tokens` positive tokens and `negative` times among
/// `negative_tokens` negative tokens, with `distinct` candidate features.
///
/// Each class gets a pseudo-count proportional to its share of the tokens
/// (plus one half), which keeps the ratio finite and nonzero even when one
/// class has no tokens at all. Requires `distinct >= 1`.
pub fn likelihood_ratio(
    positive: u64,
    negative: u64,
    positive_tokens: u64,
    negative_tokens: u64,
    distinct: usize,
) -> f64 {
    let (p_num, p_den, n_num, n_den) =
        ratio_terms(positive, negative, positive_tokens, negative_tokens, distinct);
    (p_num / p_den) / (n_num / n_den)
}

/// Natural log of [`likelihood_ratio`], computed from the same terms.
pub fn log_likelihood_ratio(
    positive: u64,
    negative: u64,
    positive_tokens: u64,
    negative_tokens: u64,
    distinct: usize,
) -> f64 {
    let (p_num, p_den, n_num, n_den) =
        ratio_terms(positive, negative, positive_tokens, negative_tokens, distinct);
    (p_num.ln() - p_den.ln()) - (n_num.ln() - n_den.ln())
}

fn ratio_terms(
    positive: u64,
    negative: u64,
    positive_tokens: u64,
    negative_tokens: u64,
    distinct: usize,
) -> (f64, f64, f64, f64) {
    let n_p = positive_tokens as f64;
    let n_n = negative_tokens as f64;
    let d = distinct as f64;
    let total = n_p + n_n + 1.0;
    let prior_p = (n_p + 0.5) / total;
    let prior_n = (n_n + 0.5) / total;
    (
        positive as f64 + prior_p,
        n_p + d * prior_p,
        negative as f64 + prior_n,
        n_n + d * prior_n,
    )
}

/// Signed quality of a feature: its total occurrence count times its log
/// likelihood ratio.
pub fn feature_quality(counts: TokenCounts, log_ratio: f64) -> f64 {
    counts.total() as f64 * log_ratio
}

/// Log likelihood ratios for every candidate feature of a labeled set, plus
/// the counts they were computed from.
#[derive(Clone, Debug, PartialEq)]
pub struct LikelihoodTable {
    log_ratios: BTreeMap<String, f64>,
    counts: FeatureCounts,
}

impl LikelihoodTable {
    pub fn from_counts(counts: FeatureCounts) -> Result<Self, ClassifierError> {
        if counts.distinct() == 0 {
            return Err(ClassifierError::NoTokens);
        }
        let d = counts.distinct();
        let (n_p, n_n) = (counts.positive_tokens, counts.negative_tokens);
        let log_ratios = counts
            .iter()
            .map(|(f, c)| {
                (
                    f.to_owned(),
                    log_likelihood_ratio(c.positive, c.negative, n_p, n_n, d),
                )
            })
            .collect();
        Ok(Self { log_ratios, counts })
    }

    pub fn counts(&self) -> &FeatureCounts {
        &self.counts
    }

    pub fn log_ratio(&self, feature: &str) -> Option<f64> {
        self.log_ratios.get(feature).copied()
    }

    pub fn quality(&self, feature: &str) -> Option<f64> {
        let counts = self.counts.get(feature)?;
        Some(feature_quality(counts, self.log_ratios[feature]))
    }

    pub fn len(&self) -> usize {
        self.log_ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_ratios.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.log_ratios.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Counts the tokens of `labeled` and computes the smoothed log likelihood
/// ratio of every distinct token.
pub fn estimate_ratios(labeled: &[LabeledExample]) -> Result<LikelihoodTable, ClassifierError> {
    if labeled.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    LikelihoodTable::from_counts(FeatureCounts::from_examples(labeled))
}

/// Features retained for scoring.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    pub selected: BTreeSet<String>,
    pub required: BTreeSet<String>,
    pub selection_fraction: f64,
}

impl FeatureSet {
    pub fn contains(&self, feature: &str) -> bool {
        self.selected.contains(feature)
    }
}

pub const DEFAULT_SELECTION_FRACTION: f64 = 0.7;

/// Picks features by quality, separately for positive and negative log
/// ratios: within each group features are taken in descending |quality|
/// until the running total reaches `fraction` of the group total. Required
/// features are always added. Ties are broken by feature string.
pub fn select_features(
    table: &LikelihoodTable,
    required: &BTreeSet<String>,
    fraction: f64,
) -> Result<FeatureSet, ClassifierError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(ClassifierError::InvalidFraction(fraction));
    }
    if let Some(missing) = required.iter().find(|f| table.log_ratio(f).is_none()) {
        return Err(ClassifierError::UnknownRequiredFeature(missing.clone()));
    }

    let mut positive_group = Vec::new();
    let mut negative_group = Vec::new();
    for (feature, counts) in table.counts.iter() {
        let lr = table.log_ratios[feature];
        let q = feature_quality(counts, lr);
        if q > 0.0 {
            positive_group.push((feature, q));
        } else if q < 0.0 {
            negative_group.push((feature, -q));
        }
    }

    let mut selected = required.clone();
    for mut group in [positive_group, negative_group] {
        // BTreeMap iteration already yields ascending feature order, so a
        // stable sort on quality alone keeps the tie rule.
        group.sort_by(|a, b| b.1.total_cmp(&a.1));
        let total: f64 = group.iter().map(|(_, q)| q).sum();
        let target = fraction * total;
        let mut cumulative = 0.0;
        for (feature, q) in group {
            if fraction < 1.0 && cumulative >= target {
                break;
            }
            selected.insert(feature.to_owned());
            cumulative += q;
        }
    }

    Ok(FeatureSet {
        selected,
        required: required.clone(),
        selection_fraction: fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example(id: &str, words: &[&str], label: Label) -> LabeledExample {
        LabeledExample::new(id, words.iter().map(|s| s.to_string()).collect(), label)
    }

    #[test]
    fn symmetric_counts_give_unit_ratio() {
        for d in [1, 2, 7, 1000] {
            assert_eq!(likelihood_ratio(3, 3, 10, 10, d), 1.0);
            assert_eq!(log_likelihood_ratio(3, 3, 10, 10, d), 0.0);
            assert_eq!(likelihood_ratio(0, 0, 10, 10, d), 1.0);
        }
    }

    #[test]
    fn one_class_ratio_matches_hand_evaluation() {
        // Numerator (2 + 6.5/7) / (6 + 4 * 6.5/7); denominator
        // (0.5/7) / (4 * 0.5/7) = 1/4.
        let numerator = (2.0 + 6.5 / 7.0) / (6.0 + 4.0 * 6.5 / 7.0);
        let expected = numerator / 0.25;
        let r = likelihood_ratio(2, 0, 6, 0, 4);
        assert!((r - expected).abs() < 1e-12);
        assert!((r - 1.205_882_352_941_176_4).abs() < 1e-12, "{r}");
        assert!((log_likelihood_ratio(2, 0, 6, 0, 4) - r.ln()).abs() < 1e-12);
    }

    #[test]
    fn quality_examples() {
        let q = feature_quality(TokenCounts { positive: 5, negative: 1 }, 2f64.ln());
        assert!((q - 6.0 * 2f64.ln()).abs() < 1e-12);
        assert!((q - 4.158_883_083_359_672).abs() < 1e-12);
        assert_eq!(feature_quality(TokenCounts { positive: 9, negative: 2 }, 0.0), 0.0);
        assert_eq!(feature_quality(TokenCounts::default(), 1.3), 0.0);
    }

    #[test]
    fn estimate_rejects_empty_inputs() {
        assert!(matches!(estimate_ratios(&[]), Err(ClassifierError::EmptyTrainingSet)));
        let blank = [example("a", &[], Label::Positive)];
        assert!(matches!(estimate_ratios(&blank), Err(ClassifierError::NoTokens)));
    }

    #[test]
    fn estimate_counts_and_distinct() {
        let labeled = [
            example("a", &["bond", "sale", "bond"], Label::Positive),
            example("b", &["football", "sale"], Label::Negative),
        ];
        let table = estimate_ratios(&labeled).unwrap();
        let counts = table.counts();
        assert_eq!(counts.positive_tokens(), 3);
        assert_eq!(counts.negative_tokens(), 2);
        assert_eq!(counts.distinct(), 3);
        assert_eq!(counts.get("bond"), Some(TokenCounts { positive: 2, negative: 0 }));
        assert!(table.log_ratio("bond").unwrap() > 0.0);
        assert!(table.log_ratio("football").unwrap() < 0.0);
        let lr = log_likelihood_ratio(1, 1, 3, 2, 3);
        assert_eq!(table.log_ratio("sale"), Some(lr));
    }

    /// Cumulative scan written independently of `select_features`.
    fn brute_force_prefix(qualities: &[(String, f64)], fraction: f64) -> BTreeSet<String> {
        let mut items = qualities.to_vec();
        items.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let total: f64 = items.iter().map(|x| x.1).sum();
        let mut out = BTreeSet::new();
        let mut acc = 0.0;
        for (name, q) in items {
            if acc >= fraction * total {
                break;
            }
            out.insert(name);
            acc += q;
        }
        out
    }

    #[test]
    fn cumulative_rule_on_five_three_one_one() {
        let items: Vec<(String, f64)> = [5.0, 3.0, 1.0, 1.0]
            .iter()
            .enumerate()
            .map(|(i, q)| (format!("f{i}"), *q))
            .collect();
        let expected = brute_force_prefix(&items, 0.7);
        assert_eq!(expected, ["f0", "f1"].iter().map(|s| s.to_string()).collect());

        // Same shape through the real selector: counts 5,3,1,1 of positive-only
        // features against a large negative class give a positive group whose
        // qualities are ordered like the counts.
        let mut counts = FeatureCounts::default();
        for (i, c) in [5u64, 3, 1, 1].iter().enumerate() {
            counts.add(&format!("f{i}"), Label::Positive, *c);
        }
        for i in 0..20 {
            counts.add(&format!("n{i:02}"), Label::Negative, 5);
        }
        let table = LikelihoodTable::from_counts(counts).unwrap();
        let group: Vec<(String, f64)> = table
            .iter()
            .filter(|(_, lr)| *lr > 0.0)
            .map(|(f, _)| (f.to_owned(), table.quality(f).unwrap()))
            .collect();
        assert_eq!(group.len(), 4);
        let fs = select_features(&table, &BTreeSet::new(), 0.7).unwrap();
        let chosen_pos: BTreeSet<String> = fs
            .selected
            .iter()
            .filter(|f| f.starts_with('f'))
            .cloned()
            .collect();
        assert_eq!(chosen_pos, brute_force_prefix(&group, 0.7));
    }

    #[test]
    fn dominant_feature_is_selected_alone() {
        let mut counts = FeatureCounts::default();
        counts.add("big", Label::Positive, 40);
        counts.add("small", Label::Positive, 1);
        for i in 0..30 {
            counts.add(&format!("n{i}"), Label::Negative, 3);
        }
        let table = LikelihoodTable::from_counts(counts).unwrap();
        let qb = table.quality("big").unwrap();
        let qs = table.quality("small").unwrap();
        assert!(qb > 0.0 && qs > 0.0 && qb / (qb + qs) > 0.7);
        let fs = select_features(&table, &BTreeSet::new(), 0.7).unwrap();
        assert!(fs.contains("big"));
        assert!(!fs.contains("small"));
    }

    #[test]
    fn full_fraction_keeps_every_nonzero_feature() {
        let labeled = [
            example("a", &["bond", "sale", "rate"], Label::Positive),
            example("b", &["football", "sale", "rate", "game"], Label::Negative),
            example("c", &["sale"], Label::Negative),
        ];
        let table = estimate_ratios(&labeled).unwrap();
        let required: BTreeSet<String> = ["bond".to_string()].into();
        let fs = select_features(&table, &required, 1.0).unwrap();
        let expected: BTreeSet<String> = table
            .iter()
            .filter(|(f, _)| table.quality(f).unwrap() != 0.0)
            .map(|(f, _)| f.to_owned())
            .chain(required.iter().cloned())
            .collect();
        assert_eq!(fs.selected, expected);
    }

    #[test]
    fn required_features_are_always_selected() {
        let labeled = [
            example("a", &["bond", "bond", "bond", "filler"], Label::Positive),
            example("b", &["football"], Label::Negative),
        ];
        let table = estimate_ratios(&labeled).unwrap();
        let required: BTreeSet<String> = ["filler".to_string()].into();
        let fs = select_features(&table, &required, 0.1).unwrap();
        assert!(fs.selected.is_superset(&required));
        let unknown: BTreeSet<String> = ["nowhere".to_string()].into();
        assert!(matches!(
            select_features(&table, &unknown, 0.7),
            Err(ClassifierError::UnknownRequiredFeature(_))
        ));
        assert!(select_features(&table, &BTreeSet::new(), 0.0).is_err());
        assert!(select_features(&table, &BTreeSet::new(), 1.5).is_err());
    }

    fn arb_labeled() -> impl Strategy<Value = Vec<LabeledExample>> {
        let word = prop::sample::select(vec!["a", "b", "c", "d", "e", "f", "g", "h"]);
        let doc = (prop::collection::vec(word, 1..6), any::<bool>());
        prop::collection::vec(doc, 1..12).prop_map(|docs| {
            docs.into_iter()
                .enumerate()
                .map(|(i, (words, pos))| {
                    example(&format!("d{i}"), &words, Label::from_bool(pos))
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn ratio_positive_and_finite(
            c_p in 0u64..1000, c_n in 0u64..1000,
            extra_p in 0u64..100_000, extra_n in 0u64..100_000,
            zero_p in any::<bool>(), zero_n in any::<bool>(),
            d in 1usize..10_000,
        ) {
            let (c_p, n_p) = if zero_p { (0, 0) } else { (c_p, c_p + extra_p) };
            let (c_n, n_n) = if zero_n { (0, 0) } else { (c_n, c_n + extra_n) };
            let r = likelihood_ratio(c_p, c_n, n_p, n_n, d);
            prop_assert!(r.is_finite() && r > 0.0);
            prop_assert!(log_likelihood_ratio(c_p, c_n, n_p, n_n, d).is_finite());
        }

        #[test]
        fn counts_are_conserved(labeled in arb_labeled()) {
            let counts = FeatureCounts::from_examples(&labeled);
            let sum_p: u64 = counts.iter().map(|(_, c)| c.positive).sum();
            let sum_n: u64 = counts.iter().map(|(_, c)| c.negative).sum();
            prop_assert_eq!(sum_p, counts.positive_tokens());
            prop_assert_eq!(sum_n, counts.negative_tokens());
            let tokens: usize = labeled.iter().map(|e| e.tokens.len()).sum();
            prop_assert_eq!((sum_p + sum_n) as usize, tokens);
        }

        #[test]
        fn selection_is_monotone_in_fraction(labeled in arb_labeled(), f in 0.01f64..1.0) {
            let table = estimate_ratios(&labeled).unwrap();
            let required: BTreeSet<String> =
                labeled[0].tokens.iter().cloned().collect();
            let small = select_features(&table, &required, f).unwrap();
            let full = select_features(&table, &required, 1.0).unwrap();
            prop_assert!(full.selected.is_superset(&small.selected));
            prop_assert!(small.selected.is_superset(&required));
        }
    }
}
