//! ROUGE-1 unigram overlap.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OverlapScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// ROUGE-1 with clipped unigram counts over the corpus tokenizer.
/// Either side empty gives all zeros.
pub fn rouge1(candidate: &str, reference: &str) -> OverlapScore {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    if cand.is_empty() || refr.is_empty() {
        return OverlapScore::default();
    }
    let mut ref_counts: HashMap<&str, usize> = HashMap::new();
    for t in refr.iter() {
        *ref_counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in cand.iter() {
        if let Some(c) = ref_counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    let precision = overlap as f64 / cand.len() as f64;
    let recall = overlap as f64 / refr.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    OverlapScore {
        precision,
        recall,
        f1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(rouge1("seven feet", "seven feet").f1, 1.0);
        assert_eq!(rouge1("red", "blue").f1, 0.0);
        let s = rouge1("the big cat", "big cat");
        assert_abs_diff_eq!(s.precision, 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(s.recall, 1.0);
        assert_abs_diff_eq!(s.f1, 0.8, epsilon = 1e-15);
        // QA answer "feet" against "seven feet": P = 1, R = 1/2.
        assert_abs_diff_eq!(rouge1("feet", "seven feet").f1, 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(rouge1("", "x"), OverlapScore::default());
    }

    #[test]
    fn clipped_counts() {
        let s = rouge1("cat cat cat", "cat dog");
        assert_abs_diff_eq!(s.precision, 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.recall, 0.5, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(a in "[a-d ]{0,20}", b in "[a-d ]{0,20}") {
            let ab = rouge1(&a, &b);
            let ba = rouge1(&b, &a);
            prop_assert_eq!(ab.f1, ba.f1);
            prop_assert_eq!(ab.precision, ba.recall);
            for v in [ab.precision, ab.recall, ab.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert_eq!(ab, rouge1(&a.to_uppercase(), &b));
        }

        #[test]
        fn self_overlap_is_one(a in "[a-z]{1,5}( [a-z]{1,5}){0,5}") {
            prop_assert_eq!(rouge1(&a, &a).f1, 1.0);
        }
    }
}
