//! Train/test splitting and balanced class weights.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::record::RecordSet;
use crate::error::{Error, Result};
use crate::rng::substream;

/// Per-class loss weights; label 0 is show, label 1 is no-show.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub w_show: f64,
    pub w_no_show: f64,
}

impl ClassWeights {
    pub const UNIT: ClassWeights = ClassWeights {
        w_show: 1.0,
        w_no_show: 1.0,
    };

    pub fn new(w_show: f64, w_no_show: f64) -> Result<Self> {
        for w in [w_show, w_no_show] {
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::Weight(format!("weight {w} must be finite and positive")));
            }
        }
        Ok(ClassWeights { w_show, w_no_show })
    }

    pub fn for_label(&self, label: u8) -> f64 {
        if label == 1 {
            self.w_no_show
        } else {
            self.w_show
        }
    }
}

/// Balanced weights `n / (2 n_c)`, which equalize the weighted class totals.
pub fn class_weights(labels: &[u8]) -> Result<ClassWeights> {
    let n = labels.len();
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Weight(format!(
            "both classes required (show {n_neg}, no-show {n_pos})"
        )));
    }
    ClassWeights::new(n as f64 / (2.0 * n_neg as f64), n as f64 / (2.0 * n_pos as f64))
}

/// Sizes `k_c` with `sum k_c = total` and `|k_c - f n_c| < 1`, assigned by
/// largest remainder.
pub(crate) fn apportion(class_sizes: &[usize], fraction: f64, total: usize) -> Vec<usize> {
    let targets: Vec<f64> = class_sizes.iter().map(|&n| fraction * n as f64).collect();
    let mut sizes: Vec<usize> = targets.iter().map(|t| t.floor() as usize).collect();
    let mut assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..class_sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = targets[a] - targets[a].floor();
        let rb = targets[b] - targets[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut i = 0;
    while assigned < total && i < order.len() * 2 {
        let c = order[i % order.len()];
        if sizes[c] < class_sizes[c] {
            sizes[c] += 1;
            assigned += 1;
        }
        i += 1;
    }
    sizes
}

/// Split into (train, test) deterministically for `seed`. The train size is
/// `train_fraction * n` rounded to nearest; with `stratify`, each class keeps
/// its share to within one record.
pub fn split(records: &RecordSet, train_fraction: f64, stratify: bool, seed: u64) -> Result<(RecordSet, RecordSet)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Split(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let n = records.len();
    let total = (train_fraction * n as f64).round() as usize;
    if total == 0 || total == n {
        return Err(Error::Split(format!(
            "{n} records cannot be split with fraction {train_fraction}"
        )));
    }
    let mut rng = substream(seed, 0);
    let mut train = Vec::with_capacity(total);
    if stratify {
        let labels = records.labels();
        let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for (i, &y) in labels.iter().enumerate() {
            by_class[y as usize].push(i);
        }
        if by_class.iter().any(|c| c.len() < 2) {
            return Err(Error::Split(format!(
                "stratified split needs at least 2 records per class (show {}, no-show {})",
                by_class[0].len(),
                by_class[1].len()
            )));
        }
        let sizes = apportion(&[by_class[0].len(), by_class[1].len()], train_fraction, total);
        for (members, k) in by_class.iter_mut().zip(sizes) {
            members.shuffle(&mut rng);
            train.extend_from_slice(&members[..k]);
        }
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        train.extend_from_slice(&all[..total]);
    }
    train.sort_unstable();
    let mut in_train = vec![false; n];
    for &i in &train {
        in_train[i] = true;
    }
    let test: Vec<usize> = (0..n).filter(|&i| !in_train[i]).collect();
    Ok((records.select(&train), records.select(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::record::*;
    use proptest::prelude::*;

    fn records(n: usize, positives: usize) -> RecordSet {
        RecordSet::new(
            (0..n)
                .map(|i| AppointmentRecord {
                    record_id: i as u64,
                    gender: Gender::Female,
                    age_years: 20,
                    zone_id: "Z".into(),
                    zone_income: ZoneIncome::Low,
                    service: Service::YAP,
                    facility_id: "F".into(),
                    lead_time_days: 1,
                    month: 2,
                    day_of_week: DayOfWeek::Wed,
                    outcome: if i % n.max(1) < positives { Outcome::NoShow } else { Outcome::Show },
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn ten_records_split_seven_three() {
        let (train, test) = split(&records(10, 4), 0.7, false, 1).unwrap();
        assert_eq!((train.len(), test.len()), (7, 3));
    }

    #[test]
    fn same_seed_same_partition() {
        let set = records(50, 20);
        let a = split(&set, 0.7, true, 9).unwrap();
        let b = split(&set, 0.7, true, 9).unwrap();
        assert_eq!(a, b);
        let c = split(&set, 0.7, true, 10).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn stratified_thousand_keeps_203_positives() {
        let (train, test) = split(&records(1000, 290), 0.7, true, 3).unwrap();
        assert_eq!(train.len(), 700);
        let pos = train.labels().iter().filter(|&&y| y == 1).count();
        assert_eq!(pos, 203);
        assert_eq!(test.len(), 300);
    }

    #[test]
    fn stratify_needs_two_per_class() {
        assert!(matches!(split(&records(10, 1), 0.7, true, 0), Err(Error::Split(_))));
    }

    #[test]
    fn balanced_weights() {
        let w = class_weights(&[0, 1, 0, 1]).unwrap();
        assert_eq!((w.w_show, w.w_no_show), (1.0, 1.0));
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i < 25)).collect();
        let w = class_weights(&labels).unwrap();
        assert!((w.w_show - 100.0 / 150.0).abs() < 1e-15);
        assert_eq!(w.w_no_show, 2.0);
        assert!((75.0 * w.w_show - 25.0 * w.w_no_show).abs() < 1e-12);
        assert!(matches!(class_weights(&[1, 1]), Err(Error::Weight(_))));
    }

    proptest! {
        #[test]
        fn stratified_rate_within_one_over_train_size(
            n in 10usize..300, pos_frac in 0.1f64..0.9, frac in 0.2f64..0.9, seed in 0u64..1000
        ) {
            let positives = ((n as f64 * pos_frac) as usize).clamp(2, n - 2);
            let set = records(n, positives);
            if let Ok((train, test)) = split(&set, frac, true, seed) {
                prop_assert_eq!(train.len() + test.len(), n);
                let overall = positives as f64 / n as f64;
                let rate = train.no_show_rate();
                prop_assert!((rate - overall).abs() <= 1.0 / train.len() as f64 + 1e-12);
            }
        }

        #[test]
        fn weights_equalize_class_mass(labels in prop::collection::vec(0u8..2, 2..200)) {
            if let Ok(w) = class_weights(&labels) {
                let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
                let neg = labels.len() as f64 - pos;
                prop_assert!((w.w_no_show * pos - w.w_show * neg).abs() < 1e-9);
            }
        }
    }
}
