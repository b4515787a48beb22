use proptest::prelude::*;

use noshow_core::dataset::{encode_with, EncodeOptions, FeatureSchema, Variable};
use noshow_core::evaluation::{auroc, evaluate_policy, GroupFractions};
use noshow_core::explain::lrp;
use noshow_core::linear::{odds_ratios, FittedLinearModel};
use noshow_core::neural::{init_mlp, init_mlp_with_schema};
use noshow_core::synth::{generate, GeneratorSpec};

fn labelled_scores() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..300).prop_flat_map(|n| {
        (
            prop::collection::vec((0u8..20).prop_map(|v| f64::from(v) / 4.0 - 2.0), n),
            prop::collection::vec(0u8..2, n),
        )
    })
}

proptest! {
    #[test]
    fn auroc_ignores_monotone_transforms((scores, labels) in labelled_scores()) {
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let base = auroc(&scores, &labels).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|s| 1.0 / (1.0 + (-3.0 * s).exp())).collect();
        let cubed: Vec<f64> = scores.iter().map(|s| s * s * s + 5.0 * s).collect();
        prop_assert_eq!(base, auroc(&squashed, &labels).unwrap());
        prop_assert_eq!(base, auroc(&cubed, &labels).unwrap());
    }

    #[test]
    fn groups_partition_the_no_shows((scores, labels) in labelled_scores(), fa in 0.05f64..0.6, fc in 0.05f64..0.35) {
        prop_assume!(labels.contains(&1));
        let f = GroupFractions::new(fa, 1.0 - fa - fc, fc).unwrap();
        let scored: Vec<(u64, f64, u8)> = scores.iter().zip(&labels).enumerate().map(|(i, (&s, &y))| (i as u64, s, y)).collect();
        let (_, m) = evaluate_policy(&scored, f).unwrap();
        prop_assert_eq!(m.no_show_counts.iter().sum::<usize>(), m.total_no_shows);
        prop_assert_eq!(m.group_sizes.iter().sum::<usize>(), scores.len());
        let b = m.no_show_counts[1] as f64 / m.total_no_shows as f64;
        prop_assert!((m.coverage + m.risk + b - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn averaged_odds_ratio_is_geometric_mean(betas in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 1..12)) {
        let models: Vec<FittedLinearModel> = betas.iter().map(|b| FittedLinearModel {
            schema_version: 1,
            feature_schema: FeatureSchema::raw(4),
            intercept: 0.0,
            coefficients: b.clone(),
            penalty_lambda: 0.01,
        }).collect();
        let table = odds_ratios(&models).unwrap();
        for (j, row) in table.rows.iter().enumerate() {
            let geo = models.iter().map(|m| m.coefficients[j].exp()).product::<f64>().powf(1.0 / models.len() as f64);
            prop_assert!((row.odds_ratio - geo).abs() <= 1e-12 * geo.max(1.0));
            prop_assert!((row.odds_ratio * row.show_odds_ratio - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn mlp_probability_is_strictly_inside_unit_interval(
        n in 1usize..12, h in 1usize..12, seed in any::<u64>(),
        x in prop::collection::vec(-3.0f64..3.0, 12),
    ) {
        let m = init_mlp(n, h, seed).unwrap();
        let p = m.forward(&x[..n]).unwrap().probability;
        prop_assert!(p > 0.0 && p < 1.0);
    }

    #[test]
    fn relevance_scales_with_positive_input_scaling(
        n in 1usize..20, h in 1usize..20, seed in any::<u64>(), c in 0.1f64..10.0,
        x in prop::collection::vec(-1.0f64..1.0, 20),
    ) {
        let m = init_mlp(n, h, seed).unwrap();
        let x = &x[..n];
        let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
        let r1 = lrp(&m, x).unwrap();
        let r2 = lrp(&m, &scaled).unwrap();
        // The stabilizer breaks exact homogeneity by about eps / |z|.
        let fwd = m.forward(&scaled).unwrap();
        let smallest = fwd.hidden_pre.iter().map(|z| z.abs()).fold(r2.output_relevance.abs(), f64::min);
        prop_assume!(smallest > 1e-4);
        let ratio = r2.output_relevance / r1.output_relevance;
        prop_assert!((ratio - c).abs() <= 1e-9 * c);
        let scale = r2.per_column.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in r1.per_column.iter().zip(&r2.per_column) {
            prop_assert!((b - ratio * a).abs() <= 1e-4 * scale);
        }
    }

    #[test]
    fn zero_valued_columns_get_zero_relevance(
        n in 2usize..20, h in 1usize..10, seed in any::<u64>(),
        x in prop::collection::vec(prop_oneof![Just(0.0), -1.0f64..1.0], 20),
    ) {
        let mut m = init_mlp(n, h, seed).unwrap();
        m.b1.iter_mut().enumerate().for_each(|(k, b)| *b = 0.1 * (k as f64 - 2.0));
        let r = lrp(&m, &x[..n]).unwrap();
        for (v, rel) in x[..n].iter().zip(&r.per_column) {
            if *v == 0.0 {
                prop_assert_eq!(*rel, 0.0);
            }
        }
    }

    #[test]
    fn variable_rollup_sums_bit_exactly(seed in any::<u64>(), h in 1usize..16) {
        let records = generate(&GeneratorSpec::uniform(40, seed)).unwrap();
        let options = EncodeOptions {
            variables: vec![Variable::Gender, Variable::Zone, Variable::ZoneIncome, Variable::Month, Variable::Day, Variable::Facility],
            drop_reference: false,
            interactions: Vec::new(),
        };
        let x = encode_with(&records, &[], &options).unwrap();
        let m = init_mlp_with_schema(x.schema().clone(), h, seed).unwrap();
        for row in x.rows() {
            let r = lrp(&m, row).unwrap();
            prop_assert_eq!(r.per_variable.len(), options.variables.len());
            prop_assert_eq!(r.rollup_total().to_bits(), r.total().to_bits());
        }
    }
}
