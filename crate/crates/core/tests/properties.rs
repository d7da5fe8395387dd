use std::path::Path;

use ndarray::{Array1, Array2};
use postspec::attract_repel::{ar_specialise, ArConfig};
use postspec::constraints::{partition_vocab, ConstraintSet, WordPair};
use postspec::embedding::{cosine, read_embeddings, write_embeddings, EmbeddingSpace, LoadOptions};
use postspec::evaluation::spearman_rho;
use postspec::mapping::{apply_mapping, read_model, write_model, MappingModel, ModelKind};
use postspec::rng::stage_rng;
use proptest::prelude::*;

fn vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, dim)
}

fn matrix(rows: std::ops::Range<usize>, dim: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(vector(dim), rows).prop_map(move |rs| {
        let n = rs.len();
        Array2::from_shape_vec((n, dim), rs.concat()).unwrap()
    })
}

fn space(m: Array2<f64>) -> EmbeddingSpace {
    let words = (0..m.nrows()).map(|i| format!("w{i}")).collect();
    EmbeddingSpace::new(words, m).unwrap()
}

proptest! {
    #[test]
    fn cosine_is_symmetric_bounded_and_scale_free(u in vector(6), v in vector(6), k in 0.01f64..100.0) {
        let (u, v) = (Array1::from(u), Array1::from(v));
        let c = cosine(u.view(), v.view()).unwrap();
        prop_assert!((-1.0..=1.0).contains(&c));
        prop_assert_eq!(c, cosine(v.view(), u.view()).unwrap());
        let scaled = &u * k;
        prop_assert!((cosine(scaled.view(), v.view()).unwrap() - c).abs() < 1e-12);
    }

    #[test]
    fn normalisation_is_idempotent(m in matrix(1..20, 5)) {
        let once = space(m).unit_normalize();
        for (i, row) in once.space.vectors().outer_iter().enumerate() {
            if !once.zero_rows.contains(&i) {
                prop_assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-12);
            }
        }
        let twice = once.space.unit_normalize();
        for (a, b) in once.space.vectors().iter().zip(twice.space.vectors().iter()) {
            prop_assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn vector_files_round_trip_exactly(m in matrix(1..15, 4)) {
        let s = space(m);
        let mut buf = Vec::new();
        write_embeddings(&s, &mut buf).unwrap();
        let (back, stats) = read_embeddings(buf.as_slice(), Path::new("mem"), LoadOptions::default()).unwrap();
        prop_assert_eq!(stats.header, Some((s.len(), 4)));
        prop_assert_eq!(back.words(), s.words());
        prop_assert_eq!(back.vectors(), s.vectors());
    }

    #[test]
    fn spearman_ignores_monotone_transforms(
        gold in prop::collection::vec(-5i32..5, 3..30),
        pred in prop::collection::vec(-5i32..5, 3..30),
    ) {
        let n = gold.len().min(pred.len());
        let gold: Vec<f64> = gold[..n].iter().map(|&g| g as f64).collect();
        let pred: Vec<f64> = pred[..n].iter().map(|&p| p as f64).collect();
        if let Ok(rho) = spearman_rho(&gold, &pred) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&rho));
            let warped: Vec<f64> = pred.iter().map(|p| (p / 3.0).exp() + 7.0).collect();
            prop_assert!((spearman_rho(&gold, &warped).unwrap() - rho).abs() < 1e-12);
            let flipped: Vec<f64> = pred.iter().map(|p| -p).collect();
            prop_assert!((spearman_rho(&gold, &flipped).unwrap() + rho).abs() < 1e-12);
            prop_assert!((spearman_rho(&gold, &gold).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn word_pairs_are_unordered(a in "[a-d]{1,2}", b in "[a-d]{1,2}") {
        match (WordPair::new(a.clone(), b.clone()), WordPair::new(b.clone(), a.clone())) {
            (Some(x), Some(y)) => {
                prop_assert_eq!(&x, &y);
                prop_assert!(x.first() <= x.second());
            }
            (None, None) => prop_assert_eq!(a, b),
            _ => prop_assert!(false, "asymmetric construction"),
        }
    }

    #[test]
    fn attract_and_repel_never_overlap(
        att in prop::collection::vec((0u8..8, 0u8..8), 0..30),
        rep in prop::collection::vec((0u8..8, 0u8..8), 0..30),
    ) {
        let named = |v: &[(u8, u8)]| v.iter().map(|&(a, b)| (format!("w{a}"), format!("w{b}"))).collect::<Vec<_>>();
        let (cs, _) = ConstraintSet::from_pairs(named(&att), named(&rep));
        prop_assert!(cs.attract.is_disjoint(&cs.repel));
        for p in cs.attract.iter().chain(&cs.repel) {
            prop_assert!(p.first() < p.second());
        }
    }

    #[test]
    fn model_files_round_trip_exactly(dim in 1usize..6, hidden in 0usize..4, width in 1usize..6, seed in any::<u64>()) {
        for kind in [ModelKind::Linear, ModelKind::Dffn { hidden, width }] {
            let m = MappingModel::new(kind, dim, &mut stage_rng(seed, "prop")).unwrap();
            let mut buf = Vec::new();
            write_model(&m, &mut buf).unwrap();
            prop_assert_eq!(read_model(buf.as_slice(), Path::new("mem")).unwrap(), m);
        }
    }

    #[test]
    fn mapping_keeps_vocabulary(m in matrix(1..30, 3), seed in any::<u64>()) {
        let s = space(m);
        let model = MappingModel::new(ModelKind::Dffn { hidden: 2, width: 4 }, 3, &mut stage_rng(seed, "prop")).unwrap();
        let out = apply_mapping(&model, &s).unwrap();
        prop_assert_eq!(out.words(), s.words());
        let direct = model.forward(s.vectors()).unwrap();
        prop_assert_eq!(out.vectors(), direct.view());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn specialisation_touches_only_seen_words(
        m in matrix(12..25, 4),
        att in prop::collection::vec((0usize..10, 0usize..10), 1..12),
        rep in prop::collection::vec((0usize..10, 0usize..10), 0..12),
        seed in any::<u64>(),
    ) {
        let s = space(m);
        let named = |v: &[(usize, usize)]| v.iter().map(|&(a, b)| (format!("w{a}"), format!("w{b}"))).collect::<Vec<_>>();
        let (cs, _) = ConstraintSet::from_pairs(named(&att), named(&rep));
        let cfg = ArConfig { epochs: 2, seed, ..ArConfig::default() };
        let out = ar_specialise(&s, &cs, &cfg).unwrap().space;
        let part = partition_vocab(&cs, &s);
        for &i in &part.unseen {
            prop_assert_eq!(out.row(i), s.row(i));
        }
        for &i in &part.seen {
            let row = out.row(i);
            let norm = row.dot(&row).sqrt();
            prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-9);
        }
    }
}
