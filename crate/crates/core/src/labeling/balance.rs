//! Seeded partial oversampling of minority classes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LabelingError;
use crate::model::EmotionLabel;

/// Smallest count each present class must reach: `ceil(ratio * majority)`.
pub fn balance_target(majority: usize, ratio: f64) -> usize {
    (ratio * majority as f64).ceil() as usize
}

/// Duplicates random members (with replacement) of every present class whose
/// count is below `ceil(ratio * majority)` until it reaches that count.
///
/// Originals are kept in input order; duplicates are appended class by class in
/// label order. Classes absent from the input stay absent. Never downsamples.
pub fn balance_classes<T: Clone>(
    items: &[T],
    label_of: impl Fn(&T) -> EmotionLabel,
    ratio: f64,
    seed: u64,
) -> Result<Vec<T>, LabelingError> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(LabelingError::InvalidBalanceRatio(ratio));
    }
    let mut members: [Vec<usize>; 4] = Default::default();
    for (i, item) in items.iter().enumerate() {
        members[label_of(item).index()].push(i);
    }
    let majority = members.iter().map(Vec::len).max().unwrap_or(0);
    let target = balance_target(majority, ratio);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = items.to_vec();
    for class in &members {
        if class.is_empty() || class.len() >= target {
            continue;
        }
        for _ in class.len()..target {
            let pick = class[rng.random_range(0..class.len())];
            out.push(items[pick].clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use EmotionLabel::*;

    fn counts(items: &[EmotionLabel]) -> [usize; 4] {
        let mut c = [0; 4];
        for l in items {
            c[l.index()] += 1;
        }
        c
    }

    fn make(spec: &[(EmotionLabel, usize)]) -> Vec<EmotionLabel> {
        spec.iter()
            .flat_map(|(l, n)| std::iter::repeat_n(*l, *n))
            .collect()
    }

    #[test]
    fn balanced_input_unchanged() {
        let items = make(&[(Positive, 10), (Negative, 10), (Neutral, 10), (Mixed, 10)]);
        let out = balance_classes(&items, |l| *l, 0.5, 3).unwrap();
        assert_eq!(out, items);
    }

    #[test]
    fn minority_raised_to_ratio() {
        let items = make(&[(Positive, 10), (Negative, 2)]);
        let out = balance_classes(&items, |l| *l, 0.5, 3).unwrap();
        assert_eq!(counts(&out), [10, 5, 0, 0]);
        assert_eq!(&out[..items.len()], &items[..]);
    }

    #[test]
    fn seeded_determinism() {
        let items: Vec<(usize, EmotionLabel)> = (0..40)
            .map(|i| (i, if i % 7 == 0 { Mixed } else { Neutral }))
            .collect();
        let a = balance_classes(&items, |x| x.1, 0.8, 11).unwrap();
        let b = balance_classes(&items, |x| x.1, 0.8, 11).unwrap();
        let c = balance_classes(&items, |x| x.1, 0.8, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_ratio() {
        for r in [0.0, -1.0, 1.5, f64::NAN] {
            assert!(balance_classes(&[Positive], |l| *l, r, 0).is_err());
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn min_count_reaches_target(
                raw in prop::collection::vec(0usize..4, 1..300),
                ratio in 0.01f64..=1.0,
                seed in any::<u64>(),
            ) {
                let items: Vec<EmotionLabel> = raw.iter().map(|i| EmotionLabel::ALL[*i]).collect();
                let before = counts(&items);
                let out = balance_classes(&items, |l| *l, ratio, seed).unwrap();
                let after = counts(&out);
                let target = balance_target(*before.iter().max().unwrap(), ratio);
                for k in 0..4 {
                    prop_assert!(after[k] >= before[k]);
                    if before[k] > 0 {
                        prop_assert!(after[k] >= target);
                    } else {
                        prop_assert_eq!(after[k], 0);
                    }
                }
                prop_assert_eq!(&out[..items.len()], &items[..]);
            }
        }
    }
}
