use std::collections::BTreeMap;

use earthvl_core::metrics::{bleu, overall_accuracy, rmse_counting, rouge_l, McRecord, NumericPair, OeRecord};
use earthvl_core::qa::QType;
use proptest::prelude::*;

const WORDS: [&str; 8] = ["road", "water", "the", "a", "north", "runs", "building", "near"];

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(0..WORDS.len(), 1..8).prop_map(|ix| ix.iter().map(|&i| WORDS[i]).collect::<Vec<_>>().join(" "))
}

fn oe_record() -> impl Strategy<Value = OeRecord> {
    (sentence(), prop::collection::vec(sentence(), 1..4))
        .prop_map(|(p, refs)| OeRecord { qid: "q".into(), predicted: p, references: refs })
}

fn mc_record() -> impl Strategy<Value = McRecord> {
    (0..QType::MULTIPLE_CHOICE.len(), 0u64..4, 0u64..4).prop_map(|(q, a, b)| McRecord {
        qid: "q".into(),
        qtype: QType::MULTIPLE_CHOICE[q],
        predicted: a.to_string(),
        ground_truth: b.to_string(),
        numeric: Some(NumericPair { y_pr: a, y_gt: b }),
    })
}

proptest! {
    #[test]
    fn accuracy_matches_recount(recs in prop::collection::vec(mc_record(), 1..60)) {
        let rep = overall_accuracy(&recs).unwrap();
        let mut per: BTreeMap<QType, (usize, usize)> = BTreeMap::new();
        for r in &recs {
            let e = per.entry(r.qtype).or_default();
            if r.predicted == r.ground_truth { e.0 += 1; }
            e.1 += 1;
        }
        for (q, (c, t)) in per {
            prop_assert_eq!(rep.per_qtype[&q].correct, c);
            prop_assert!((rep.per_qtype[&q].accuracy - 100.0 * c as f64 / t as f64).abs() < 1e-12);
        }
        let good = recs.iter().filter(|r| r.predicted == r.ground_truth).count();
        prop_assert!((rep.overall.accuracy - 100.0 * good as f64 / recs.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn rmse_matches_formula(recs in prop::collection::vec(mc_record(), 1..60)) {
        let rep = rmse_counting(&recs).unwrap();
        let mut se = 0.0;
        for r in &recs {
            let p = r.numeric.unwrap();
            se += (p.y_pr as f64 - p.y_gt as f64) * (p.y_pr as f64 - p.y_gt as f64);
        }
        prop_assert!((rep.overall.rmse - (se / recs.len() as f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mc_metrics_ignore_order(mut recs in prop::collection::vec(mc_record(), 1..40), seed in any::<u64>()) {
        let a = (overall_accuracy(&recs).unwrap(), rmse_counting(&recs).unwrap());
        let n = recs.len();
        recs.rotate_left((seed % n as u64) as usize);
        recs.reverse();
        prop_assert_eq!(a, (overall_accuracy(&recs).unwrap(), rmse_counting(&recs).unwrap()));
    }

    #[test]
    fn caption_metrics_ignore_order(mut recs in prop::collection::vec(oe_record(), 1..10)) {
        let b = bleu(&recs).unwrap();
        let r = rouge_l(&recs).unwrap().corpus;
        recs.reverse();
        let b2 = bleu(&recs).unwrap();
        for k in 0..4 { prop_assert!((b[k] - b2[k]).abs() < 1e-12); }
        prop_assert!((r - rouge_l(&recs).unwrap().corpus).abs() < 1e-12);
    }

    #[test]
    fn bleu_cannot_drop_when_prediction_becomes_a_reference(rec in oe_record()) {
        let before = bleu(std::slice::from_ref(&rec)).unwrap();
        let mut with = rec.clone();
        with.references.push(rec.predicted.clone());
        let after = bleu(&[with]).unwrap();
        // the smoothing constants move scores by ~1e-9 when the brevity ratio
        // lands exactly on 1
        for k in 0..4 { prop_assert!(after[k] >= before[k] - 1e-8, "{:?} -> {:?}", before, after); }
    }
}
