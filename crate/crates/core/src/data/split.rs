use std::collections::BTreeSet;

use eegvit_tensor::RngStream;

use super::{DataError, Dataset};

/// Partitions subjects (not samples) into train and validation sets.
///
/// Subject ids are sorted, shuffled with `seed`, and the first
/// `round(train_fraction · n)` (clamped to `1..n`) go to training. The
/// result depends only on the set of subjects, never on sample order.
pub fn split_by_subject(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::Split(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let mut subjects: Vec<u32> = ds.subjects().into_iter().collect();
    let n = subjects.len();
    if n < 2 {
        return Err(DataError::Split(format!(
            "{n} distinct subject(s); subject-disjoint splitting needs at least 2"
        )));
    }
    RngStream::new(seed).shuffle(&mut subjects);
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let train: BTreeSet<u32> = subjects[..n_train].iter().copied().collect();
    let val: BTreeSet<u32> = subjects[n_train..].iter().copied().collect();
    Ok((ds.filter_subjects(&train)?, ds.filter_subjects(&val)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;

    fn ds(subjects: &[u32]) -> Dataset {
        let samples = subjects
            .iter()
            .map(|s| Sample {
                subject: *s,
                label: [*s as f32, 0.0],
                signal: vec![0.0; 2],
            })
            .collect();
        Dataset::new(1, 2, samples).unwrap()
    }

    #[test]
    fn seven_three_on_ten() {
        let d = ds(&(0..10).flat_map(|s| [s, s]).collect::<Vec<_>>());
        let (tr, va) = split_by_subject(&d, 0.7, 3).unwrap();
        assert_eq!(tr.subjects().len(), 7);
        assert_eq!(va.subjects().len(), 3);
        assert_eq!(tr.len() + va.len(), d.len());
    }

    #[test]
    fn single_subject_is_an_error() {
        assert!(matches!(split_by_subject(&ds(&[5, 5, 5]), 0.7, 0), Err(DataError::Split(_))));
    }

    #[test]
    fn independent_of_sample_order() {
        let a = ds(&[1, 2, 3, 4, 1, 2, 3, 4]);
        let b = ds(&[4, 4, 3, 3, 2, 2, 1, 1]);
        let (ta, _) = split_by_subject(&a, 0.5, 11).unwrap();
        let (tb, _) = split_by_subject(&b, 0.5, 11).unwrap();
        assert_eq!(ta.subjects(), tb.subjects());
    }
}
