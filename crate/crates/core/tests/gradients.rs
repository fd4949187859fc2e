mod common;

use common::{gradient_check, random_example, seeded, variants};
use s2sm_core::corpus::LvtVocab;
use s2sm_core::model::Model;

#[test]
fn every_variant_matches_finite_differences() {
    for (name, config) in variants() {
        for seed in 0..3 {
            let mut rng = seeded(seed);
            let model = Model::new(config.clone(), seed).unwrap();
            let a = random_example(&mut rng, &config, 12, 5);
            let b = random_example(&mut rng, &config, 12, 5);
            let lvt = LvtVocab::from_ids((0..4).chain([5, 7, 9, 11, 13, 15, 17, 19])).unwrap();
            let (err, at) = gradient_check(&model, &[&a, &b], &lvt, &mut rng);
            assert!(err < 1e-4, "{name} seed {seed}: {at} (rel {err:e})");
        }
    }
}

#[test]
fn padding_adds_no_loss() {
    for (name, config) in variants() {
        let mut rng = seeded(11);
        let model = Model::new(config.clone(), 3).unwrap();
        let ex = random_example(&mut rng, &config, 6, 4);
        let lvt = LvtVocab::full(config.tgt_vocab).unwrap();
        let mut tape = model.tape();
        let plain = model
            .example_loss(&mut tape, &ex, ex.doc_len(), &lvt)
            .unwrap();
        let padded = model
            .example_loss(&mut tape, &ex, ex.doc_len() + 5, &lvt)
            .unwrap();
        let (a, b) = (tape.scalar(plain.loss), tape.scalar(padded.loss));
        assert!((a - b).abs() < 1e-12, "{name}: {a} vs {b}");
    }
}
