//! End-to-end behaviour of the staged pipeline on small synthetic data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dynglr::dataio::{prepare, Dataset, PrepSeeds, Split};
use dynglr::experiment::error_rate;
use dynglr::par::Exec;
use dynglr::pipeline::{node_gates, Ladder, Pipeline, PipelineConfig, Variant};

/// Two classes whose means differ along the first three of six features.
fn blobs(n: usize, gap: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y: i8 = if i % 2 == 0 { 1 } else { -1 };
        rows.push(
            (0..6)
                .map(|d| {
                    let shift = if d < 3 { gap * y as f64 / 2.0 } else { 0.0 };
                    shift + rng.gen_range(-1.0..1.0) + rng.gen_range(-1.0..1.0)
                })
                .collect(),
        );
        labels.push(y);
    }
    Dataset::from_rows("blobs", rows, labels).unwrap()
}

fn prepared(noise: f64) -> Dataset {
    let seeds = PrepSeeds {
        subsample: 1,
        split: 2,
        noise: 3,
    };
    prepare(&blobs(600, 2.5, 9), None, seeds, noise).unwrap()
}

fn config(variant: Variant) -> PipelineConfig {
    PipelineConfig::spambase().scaled_epochs(10).with_variant(variant).with_seed(5)
}

#[test]
fn shallow_stages_do_not_depend_on_variant() {
    let ds = prepared(0.2);
    let g2 = Pipeline::fit(&ds, &config("G-2".parse().unwrap()), Exec::default()).unwrap();
    let full = Pipeline::fit(&ds, &config(Variant::FULL), Exec::default()).unwrap();
    assert_eq!(g2.model.gnet, full.model.gnet);
    assert_eq!(g2.model.gamma0, full.model.gamma0);
    assert!(g2.model.wnet1.is_none());
    let g12 = Pipeline::fit(&ds, &config(Variant::G12), Exec::default()).unwrap();
    assert_eq!(g12.model.wnet1, full.model.wnet1);

    let state = full.state(&ds).unwrap();
    let g2_state = g2.state(&ds).unwrap();
    assert_eq!(state.iterations[0].graph, g2_state.iterations[0].graph);
}

#[test]
fn full_variant_runs_two_glr_iterations_with_recorded_gates() {
    let ds = prepared(0.2);
    let cfg = config(Variant::FULL);
    let pipe = Pipeline::fit(&ds, &cfg, Exec::default()).unwrap();
    assert_eq!(pipe.model.depth(), Ladder::G12312);
    let state = pipe.state(&ds).unwrap();
    assert_eq!(state.iterations.len(), 3, "Y^0 plus two GLR iterations");
    for (r, eps) in [(1, cfg.eps1), (2, cfg.eps2)] {
        let prev = &state.iterations[r - 1].signal;
        let cur = &state.iterations[r].signal;
        assert_eq!(state.iterations[r].gates, node_gates(prev, cur, eps));
    }
    assert!(state.update.is_some());
}

#[test]
fn clean_labels_are_rarely_flagged() {
    let ds = prepared(0.0);
    let pipe = Pipeline::fit(&ds, &config(Variant::G12), Exec::default()).unwrap();
    let state = pipe.state(&ds).unwrap();
    let rows = state.train_rows(&ds);
    let gates = &state.iterations[1].gates;
    let flagged = rows.iter().filter(|&&k| gates[k] == 0.0).count() as f64 / rows.len() as f64;
    assert!(flagged < 0.10, "flagged fraction {flagged}");
}

#[test]
fn graph_variants_beat_chance_and_every_variant_predicts() {
    let ds = prepared(0.2);
    let pipe = Pipeline::fit(&ds, &config(Variant::FULL), Exec::default()).unwrap();
    let test = ds.indices(Split::Test);
    let truth: Vec<i8> = test.iter().map(|&i| ds.clean_labels[i]).collect();
    for v in ["DML-KNN", "G-2", "G-12", "G-1232", "G-12312", "G-12s", "G-12312s"] {
        let v: Variant = v.parse().unwrap();
        let pred = pipe.predict(&ds, &test, v, Exec::default()).unwrap();
        assert!(pred.iter().all(|&p| p == 1 || p == -1));
        let err = error_rate(&pred, &truth).unwrap();
        assert!(err < 25.0, "{v}: {err}");
    }
}

#[test]
fn fitting_is_deterministic_across_execution_modes() {
    let ds = prepared(0.1);
    let cfg = config("G-12312s".parse().unwrap());
    let a = Pipeline::fit(&ds, &cfg, Exec::Sequential).unwrap();
    let b = Pipeline::fit(&ds, &cfg, Exec::Parallel).unwrap();
    assert_eq!(a.model.wnet2, b.model.wnet2);
    let pa = a.predict_test(&ds, cfg.variant, Exec::Sequential).unwrap();
    let pb = b.predict_test(&ds, cfg.variant, Exec::Parallel).unwrap();
    assert_eq!(pa, pb);
}

#[test]
fn shallower_model_refuses_deeper_variant() {
    let ds = prepared(0.1);
    let pipe = Pipeline::fit(&ds, &config(Variant::G12), Exec::default()).unwrap();
    let test = ds.indices(Split::Test);
    assert!(pipe.predict(&ds, &test, Variant::FULL, Exec::default()).is_err());
}
