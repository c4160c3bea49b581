use super::*;
use crate::inference::ScoreKind;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rec(truth: Truth, y_star: usize, xi: f64) -> EvalRecord {
    EvalRecord {
        sample_id: String::new(),
        truth,
        y_star,
        xi,
        kind: ScoreKind::ClsM,
    }
}

fn scored(known: &[f64], unknown: &[f64]) -> Vec<EvalRecord> {
    known
        .iter()
        .map(|&x| rec(Truth::InSet(0), 0, x))
        .chain(unknown.iter().map(|&x| rec(Truth::OutOfSet, 0, x)))
        .collect()
}

/// `P(xi_u < xi_k) + P(tie) / 2` by direct pair enumeration.
fn pairwise_auc(known: &[f64], unknown: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &k in known {
        for &u in unknown {
            if u < k {
                wins += 1.0;
            } else if u == k {
                wins += 0.5;
            }
        }
    }
    wins / (known.len() * unknown.len()) as f64
}

#[test]
fn trapezoid_matches_pairwise_statistic() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..200 {
        let nk = rng.gen_range(1..500);
        let nu = rng.gen_range(1..500);
        // Coarse grids on some cases force many ties.
        let levels = if case % 3 == 0 { 7.0 } else { 1e6 };
        let mut draw = |shift: f64| ((rng.gen::<f64>() + shift) * levels).round() / levels;
        let known: Vec<f64> = (0..nk).map(|_| draw(0.3)).collect();
        let unknown: Vec<f64> = (0..nu).map(|_| draw(0.0)).collect();
        let auc = au_roc(&scored(&known, &unknown)).unwrap();
        assert!((auc - pairwise_auc(&known, &unknown)).abs() < 1e-9, "case {case}");
    }
}

#[test]
fn separable_and_identical_sets() {
    let sep = scored(&[10.0, 9.0], &[1.0, 2.0]);
    let curve = roc_curve(&sep).unwrap();
    assert!(curve.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
    assert_eq!(au_roc(&sep).unwrap(), 1.0);
    assert_eq!(eer(&curve).unwrap(), 0.0);

    let same = scored(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]);
    let curve = roc_curve(&same).unwrap();
    assert!(curve.iter().all(|p| (p.fpr - p.tpr).abs() < 1e-12));
    assert!((au_roc(&same).unwrap() - 0.5).abs() < 1e-12);
    assert!((eer(&curve).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn roc_hand_point() {
    let recs = scored(&[3.0, 1.0], &[2.0]);
    let p = point_at(&recs, 2.5).unwrap();
    assert_eq!((p.fpr, p.tpr), (0.5, 1.0));
    let curve = roc_curve(&recs).unwrap();
    assert_eq!((curve[0].fpr, curve[0].tpr), (0.0, 0.0));
    let last = curve.last().unwrap();
    assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
}

#[test]
fn oscr_hand_table() {
    let recs = vec![
        rec(Truth::InSet(0), 0, 3.0),
        rec(Truth::InSet(1), 0, 1.0),
        rec(Truth::OutOfSet, 1, 2.0),
    ];
    let curve = roc_curve(&recs).unwrap();
    let table: Vec<(f64, f64, f64, f64)> = curve.iter().map(|p| (p.nu, p.fpr, p.fnr, p.ccr)).collect();
    assert_eq!(
        table,
        vec![
            (f64::NEG_INFINITY, 0.0, 1.0, 0.5),
            (1.5, 0.5, 1.0, 0.5),
            (2.5, 0.5, 0.0, 0.5),
            (f64::INFINITY, 1.0, 0.0, 0.0),
        ]
    );
    assert_eq!(au_oscr(&recs).unwrap(), 0.5);
    assert_eq!(au_roc(&recs).unwrap(), 0.5);
    assert_eq!(eer(&curve).unwrap(), 0.5);
    // No rejection: CCR equals the closed-set accuracy at FNR 1.
    assert_eq!(oscr_curve(&recs).unwrap().last().unwrap().ccr, closed_set_accuracy(&recs).unwrap());
}

#[test]
fn eer_interpolates_between_points() {
    let pt = |fpr: f64, tpr: f64| CurvePoint {
        nu: 0.0,
        fpr,
        tpr,
        fnr: 1.0 - tpr,
        ccr: 0.0,
    };
    let curve = [pt(0.0, 0.0), pt(0.2, 0.6), pt(0.6, 0.9), pt(1.0, 1.0)];
    assert!((eer(&curve).unwrap() - (0.2 + 0.8 / 7.0)).abs() < 1e-12);
}

#[test]
fn area_rejects_unsorted_curves() {
    let pt = |fpr: f64| CurvePoint {
        nu: 0.0,
        fpr,
        tpr: 0.0,
        fnr: 1.0,
        ccr: 0.0,
    };
    assert!(area_under(&[pt(0.5), pt(0.2)], |p| p.fpr, |p| p.tpr).is_err());
    let diag: Vec<CurvePoint> = [0.0, 0.5, 1.0].iter().map(|&v| CurvePoint { tpr: v, ..pt(v) }).collect();
    assert_eq!(area_under(&diag, |p| p.fpr, |p| p.tpr).unwrap(), 0.5);
}

#[test]
fn one_sided_records_are_an_error() {
    assert!(roc_curve(&scored(&[1.0], &[])).is_err());
    assert!(roc_curve(&scored(&[], &[1.0])).is_err());
    assert!(roc_curve(&scored(&[f64::NAN], &[1.0])).is_err());
}

#[test]
fn threshold_order_statistics() {
    let scores: Vec<f64> = (0..100).rev().map(f64::from).collect();
    let nu = threshold_at_fpr(&scores, 0.05).unwrap();
    assert!(4.0 < nu && nu < 5.0);
    let nu = threshold_at_fpr(&scores, 0.0).unwrap();
    assert!(nu < 0.0 && scores.iter().all(|&s| s > nu));
    let nu = threshold_at_fpr(&scores, 1.0).unwrap();
    assert!(scores.iter().all(|&s| s < nu));
    assert_eq!(threshold_at_fpr(&[2.0, 2.0, 2.0, 5.0], 0.5).unwrap(), 2.0f64.next_down());
    assert!(threshold_at_fpr(&[], 0.1).is_err());
    assert!(threshold_at_fpr(&[1.0], 1.5).is_err());
}

#[test]
fn confusion_hand_tally() {
    let recs = vec![
        rec(Truth::InSet(0), 0, 1.0),
        rec(Truth::InSet(0), 1, 1.0),
        rec(Truth::InSet(1), 1, 0.0),
        rec(Truth::InSet(1), 1, 2.0),
        rec(Truth::OutOfSet, 0, 0.2),
        rec(Truth::OutOfSet, 1, 0.9),
    ];
    let m = confusion_with_rejection(&recs, 2, 0.5).unwrap();
    assert_eq!(
        m.rows,
        vec![Some(vec![0.5, 0.5, 0.0]), Some(vec![0.0, 0.5, 0.5]), Some(vec![0.0, 0.5, 0.5])]
    );
    let m = confusion_with_rejection(&recs, 3, 100.0).unwrap();
    assert_eq!(m.rows[2], None);
    assert!(m.rows.iter().flatten().all(|r| r[..3].iter().all(|&v| v == 0.0) && r[3] == 1.0));
    let csv = m.to_csv(&["a".into(), "b".into(), "c".into()]);
    assert!(csv.starts_with("true,a,b,c,reject\n"));
    assert!(csv.contains("\nc,,,,\n"));
}

#[test]
fn ideal_and_diagonal_summaries() {
    let mut recs = vec![rec(Truth::InSet(0), 0, 9.0), rec(Truth::InSet(1), 1, 8.0)];
    recs.extend([rec(Truth::OutOfSet, 0, 1.0), rec(Truth::OutOfSet, 1, 2.0)]);
    let s = summarize(&recs, 2, 0.0, None).unwrap();
    assert_eq!((s.accuracy, s.au_roc, s.au_oscr, s.eer), (1.0, 1.0, 1.0, 0.0));
    assert_eq!(s.tpr_at_fpr, 1.0);
    assert_eq!(s.confusion.rows[0], Some(vec![1.0, 0.0, 0.0]));

    let s = summarize(&scored(&[1.0, 2.0], &[1.0, 2.0]), 2, 0.05, None).unwrap();
    assert!((s.au_roc - 0.5).abs() < 1e-12);
}

fn arb_records() -> impl Strategy<Value = Vec<EvalRecord>> {
    prop::collection::vec((0usize..4, 0usize..3, -50i32..50), 2..120).prop_map(|raw| {
        let mut recs: Vec<EvalRecord> = raw
            .into_iter()
            .map(|(t, y, xi)| {
                let truth = if t == 3 { Truth::OutOfSet } else { Truth::InSet(t) };
                rec(truth, y, f64::from(xi) / 4.0)
            })
            .collect();
        recs[0].truth = Truth::InSet(0);
        recs[1].truth = Truth::OutOfSet;
        recs
    })
}

proptest! {
    #[test]
    fn curves_are_monotone_and_bounded(recs in arb_records()) {
        let curve = roc_curve(&recs).unwrap();
        for w in curve.windows(2) {
            prop_assert!(w[0].nu < w[1].nu);
            prop_assert!(w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr);
            prop_assert!(w[0].ccr >= w[1].ccr);
        }
        for p in &curve {
            prop_assert!(p.ccr <= 1.0 - p.fpr + 1e-12);
            prop_assert_eq!(*p, point_at(&recs, p.nu).unwrap());
        }
        let s = summarize(&recs, 3, 0.05, None).unwrap();
        prop_assert!(s.au_oscr <= s.au_roc + 1e-12);
        prop_assert!(s.ccr_at_fpr <= s.accuracy + 1e-12);
        prop_assert!((0.0..=1.0).contains(&s.au_roc) && (0.0..=1.0).contains(&s.eer));
        for row in s.confusion.rows.iter().flatten() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn metrics_are_rank_statistics(recs in arb_records(), scale in 0.1f64..5.0, shift in -3.0f64..3.0) {
        let mapped: Vec<EvalRecord> = recs.iter().map(|r| EvalRecord { xi: (r.xi * scale + shift).exp(), ..r.clone() }).collect();
        let (a, b) = (summarize(&recs, 3, 0.1, None).unwrap(), summarize(&mapped, 3, 0.1, None).unwrap());
        prop_assert!((a.au_roc - b.au_roc).abs() < 1e-12);
        prop_assert!((a.au_oscr - b.au_oscr).abs() < 1e-12);
        prop_assert!((a.eer - b.eer).abs() < 1e-12);
        prop_assert_eq!(a.tpr_at_fpr, b.tpr_at_fpr);
        prop_assert_eq!(a.confusion, b.confusion);
    }
}
