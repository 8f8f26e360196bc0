#[path = "support/oracles.rs"]
mod oracles;

use std::collections::{BTreeMap, HashSet};

use coldrec_core::data::{synth_benchmark, SynthConfig};
use coldrec_core::embedding::{synth_table, EntityVector};
use coldrec_core::evaluation::*;
use coldrec_core::model::{init_model, train, InitMode, ModelConfig, TrainConfig};
use coldrec_core::tokenizer::train_bpe;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<u32>, HashSet<u32>, usize) {
    let universe = rng.random_range(1..40u32);
    let mut ranked: Vec<u32> = (0..universe).collect();
    ranked.shuffle(rng);
    ranked.truncate(rng.random_range(0..=universe as usize));
    let n_rel = rng.random_range(1..=universe as usize);
    let relevant: HashSet<u32> = (0..n_rel).map(|_| rng.random_range(0..universe + 5)).collect();
    (ranked, relevant, rng.random_range(1..25))
}

#[test]
fn metrics_match_brute_force_references() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..1000 {
        let (ranked, relevant, k) = random_instance(&mut rng);
        let r = recall_at_k(&ranked, &relevant, k).unwrap();
        let n = ndcg_at_k(&ranked, &relevant, k).unwrap();
        let h = hit_rate_at_k(&ranked, &relevant, k).unwrap();
        assert!((r - oracles::recall_ref(&ranked, &relevant, k)).abs() <= 1e-12);
        assert!((n - oracles::ndcg_ref(&ranked, &relevant, k)).abs() <= 1e-12);
        assert!((h - oracles::hit_ref(&ranked, &relevant, k)).abs() <= 1e-12);
        for m in [r, n, h] {
            assert!((0.0..=1.0).contains(&m));
        }
        assert!(h >= r);
    }
}

#[test]
fn metric_relations() {
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    for _ in 0..500 {
        let (ranked, relevant, k) = random_instance(&mut rng);
        let (r, h) = (recall_at_k(&ranked, &relevant, k).unwrap(), hit_rate_at_k(&ranked, &relevant, k).unwrap());
        if relevant.len() <= k {
            assert!(recall_at_k(&ranked, &relevant, k + 1).unwrap() >= r);
        }
        assert!(hit_rate_at_k(&ranked, &relevant, k + 1).unwrap() >= h);
        // NDCG is 1 exactly when the first min(|rel|, k) positions are all hits.
        let ideal = relevant.len().min(k);
        let top_all_hits = ranked.len() >= ideal && ranked[..ideal].iter().all(|i| relevant.contains(i));
        let n = ndcg_at_k(&ranked, &relevant, k).unwrap();
        assert_eq!((n - 1.0).abs() < 1e-12, top_all_hits, "{ranked:?} {relevant:?} {k}");
    }
}

#[test]
fn capped_denominator_can_lower_recall_below_saturation() {
    let rel = HashSet::from([0, 1]);
    assert_eq!(recall_at_k(&[0, 9], &rel, 1).unwrap(), 1.0);
    assert_eq!(recall_at_k(&[0, 9], &rel, 2).unwrap(), 0.5);
}

#[test]
fn recall_is_monotone_when_denominator_is_fixed() {
    let mut rng = ChaCha8Rng::seed_from_u64(79);
    for _ in 0..500 {
        let (ranked, relevant, _) = random_instance(&mut rng);
        let k0 = relevant.len();
        let mut last = 0.0;
        for k in k0..k0 + 10 {
            let r = recall_at_k(&ranked, &relevant, k).unwrap();
            assert!(r >= last);
            last = r;
        }
    }
}

#[test]
fn null_model_hit_rate_matches_binomial() {
    let c = 40u32;
    let k = 10;
    let users = 400u32;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let relevance: BTreeMap<u32, HashSet<u32>> =
        (0..users).map(|u| (u, HashSet::from([rng.random_range(0..c)]))).collect();
    let ranker = |u: u32, _k: usize| -> coldrec_core::Result<Vec<u32>> {
        let mut items: Vec<u32> = (0..c).collect();
        items.shuffle(&mut ChaCha8Rng::seed_from_u64(1000 + u as u64));
        Ok(items)
    };
    let catalog: Vec<u32> = (0..c).collect();
    let m = evaluate_ranker(&ranker, &relevance, &catalog, k).unwrap();
    let p = k as f64 / c as f64;
    let sigma = (p * (1.0 - p) / users as f64).sqrt();
    assert!((m.hit_rate_at_k - p).abs() <= 3.0 * sigma, "{} vs {p}", m.hit_rate_at_k);
}

#[test]
fn perfect_ranker_scores_one() {
    let relevance: BTreeMap<u32, HashSet<u32>> = (0..30).map(|u| (u, HashSet::from([u % 7]))).collect();
    let ranker = |u: u32, _k: usize| -> coldrec_core::Result<Vec<u32>> {
        let mut v = vec![u % 7];
        v.extend((0..7).filter(|&i| i != u % 7));
        Ok(v)
    };
    let m = evaluate_ranker(&ranker, &relevance, &(0..7).collect::<Vec<_>>(), 10).unwrap();
    assert_eq!((m.recall_at_k, m.ndcg_at_k, m.hit_rate_at_k), (1.0, 1.0, 1.0));
    assert_eq!(m.skipped_users, 0);
}

#[test]
fn empty_relevance_is_skipped_or_fails() {
    let ranker = |_: u32, _: usize| -> coldrec_core::Result<Vec<u32>> { Ok(vec![0, 1]) };
    let mut rel: BTreeMap<u32, HashSet<u32>> = BTreeMap::from([(0, HashSet::new())]);
    assert!(matches!(evaluate_ranker(&ranker, &rel, &[0, 1], 2), Err(coldrec_core::Error::EmptyEvaluation)));
    rel.insert(1, HashSet::from([1]));
    let m = evaluate_ranker(&ranker, &rel, &[0, 1], 2).unwrap();
    assert_eq!((m.evaluated_users, m.skipped_users), (1, 1));
}

fn small_setup(
) -> (coldrec_core::data::Dataset, coldrec_core::tokenizer::BpeVocab, coldrec_core::embedding::EmbeddingTable) {
    let cfg = SynthConfig {
        n_topics: 4,
        items_per_topic: 15,
        users: 80,
        interactions_per_user: 10,
        ..SynthConfig::default()
    };
    let d = synth_benchmark(&cfg).unwrap().dataset;
    let v = train_bpe(&d.item_text, 450).unwrap();
    let t = synth_table(&v, 16, 3).unwrap();
    (d, v, t)
}

fn small_trials() -> TrialConfig {
    TrialConfig { train: TrainConfig { epochs: 4, ..TrainConfig::default() }, ..TrialConfig::default() }
}

#[test]
fn single_trial_equals_direct_evaluation() {
    let (d, v, t) = small_setup();
    let cfg = small_trials();
    let cmp = run_trials(&d, &v, &t, &cfg, &[InitMode::Bpe], 1, 9).unwrap();
    let split = make_cold_split(&d, cfg.cold_ratio, 9).unwrap();
    let mut m = init_model(&d, Some(&split), &v, &t, &mode_config(&cfg.model, InitMode::Bpe, 9)).unwrap();
    train(&mut m, &split.train, &TrainConfig { seed: 9, ..cfg.train.clone() }, &t).unwrap();
    let direct = evaluate(&m, &d, &split, &v, &t, cfg.k, false).unwrap();
    let report = cmp.mode(InitMode::Bpe).unwrap();
    assert_eq!(report.per_trial, vec![direct.clone()]);
    assert_eq!(report.mean.recall_at_k, direct.recall_at_k);
    assert_eq!(report.std.recall_at_k, 0.0);
    // Evaluating the same state twice is identical.
    assert_eq!(evaluate(&m, &d, &split, &v, &t, cfg.k, false).unwrap(), direct);
}

#[test]
fn trials_are_paired_and_reproducible() {
    let (d, v, t) = small_setup();
    let modes = [InitMode::Random, InitMode::WordAvg, InitMode::Bpe];
    let a = run_trials(&d, &v, &t, &small_trials(), &modes, 3, 100).unwrap();
    let b = run_trials(&d, &v, &t, &small_trials(), &modes, 3, 100).unwrap();
    assert_eq!(a, b);
    assert_eq!(comparison_table(&a), comparison_table(&b));
    assert_eq!(a.seeds, vec![100, 101, 102]);
    for (trial, &seed) in a.seeds.iter().enumerate() {
        let hash = format!("{:016x}", make_cold_split(&d, 0.1, seed).unwrap().content_hash());
        assert_eq!(a.split_hashes[trial], hash);
    }
    assert_eq!(a.modes.len(), 3);
    for m in &a.modes {
        assert_eq!(m.report.trials, 3);
    }
}

#[test]
fn full_catalog_pool_widens_candidates() {
    let (d, v, t) = small_setup();
    let split = make_cold_split(&d, 0.1, 4).unwrap();
    let mut m = init_model(&d, Some(&split), &v, &t, &ModelConfig::default()).unwrap();
    train(&mut m, &split.train, &TrainConfig { epochs: 3, ..TrainConfig::default() }, &t).unwrap();
    let narrow = evaluate(&m, &d, &split, &v, &t, 10, false).unwrap();
    let wide = evaluate(&m, &d, &split, &v, &t, 10, true).unwrap();
    assert_eq!(narrow.evaluated_users, wide.evaluated_users);
    assert!(wide.hit_rate_at_k <= narrow.hit_rate_at_k + 1e-12);
}

fn ev(xs: Vec<f64>) -> EntityVector {
    EntityVector { values: xs.into_iter().map(|x| x as f32).collect(), normalized: false }
}

#[test]
fn centered_planar_data_is_rotated() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut pts: Vec<(f64, f64)> =
        (0..12).map(|_| (rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0))).collect();
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / 12.0, pts.iter().map(|p| p.1).sum::<f64>() / 12.0);
    for p in pts.iter_mut() {
        *p = (p.0 - mx, p.1 - my);
    }
    let vs: Vec<EntityVector> = pts.iter().map(|p| ev(vec![p.0, p.1])).collect();
    let proj = pca_2d(&vs).unwrap().points;
    // Compare against the f32-rounded inputs the projection actually saw.
    let seen: Vec<(f64, f64)> = vs.iter().map(|v| (v.values[0] as f64, v.values[1] as f64)).collect();
    for i in 0..12 {
        for j in 0..12 {
            let d0 = ((seen[i].0 - seen[j].0).powi(2) + (seen[i].1 - seen[j].1).powi(2)).sqrt();
            let d1 = ((proj[i].0 - proj[j].0).powi(2) + (proj[i].1 - proj[j].1).powi(2)).sqrt();
            assert!((d0 - d1).abs() < 1e-6, "{d0} vs {d1}");
        }
    }
}

#[test]
fn reconstruction_error_is_trailing_spectrum() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 30;
    let vs: Vec<EntityVector> = (0..n).map(|_| ev((0..5).map(|_| rng.random_range(-1.0..1.0)).collect())).collect();
    let fit = pca_2d(&vs).unwrap();
    let x = DMatrix::from_fn(n, 5, |r, c| vs[r].values[c] as f64 - fit.mean[c]);
    let mut err = 0.0;
    for (r, &(a, b)) in fit.points.iter().enumerate() {
        for c in 0..5 {
            let rec = a * fit.components[0][c] + b * fit.components[1][c];
            err += (x[(r, c)] - rec).powi(2);
        }
    }
    // Oracle: squared singular values of the centered data.
    let mut sv: Vec<f64> = x.svd(false, false).singular_values.iter().map(|s| s * s).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let trailing: f64 = sv[2..].iter().sum();
    assert!((err - trailing).abs() < 1e-9 * trailing.max(1.0), "{err} vs {trailing}");
    let trailing_eig: f64 = fit.eigenvalues[2..].iter().sum::<f64>() * (n as f64 - 1.0);
    assert!((err - trailing_eig).abs() < 1e-9 * trailing.max(1.0));
}

#[test]
fn projection_sign_convention() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let vs: Vec<EntityVector> = (0..10).map(|_| ev((0..4).map(|_| rng.random_range(-1.0..1.0)).collect())).collect();
    let fit = pca_2d(&vs).unwrap();
    for c in &fit.components {
        let lead = c.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
        assert!(lead > 0.0);
    }
    let flipped: Vec<EntityVector> = vs.iter().map(|v| ev(v.values.iter().map(|&x| -x as f64).collect())).collect();
    let labels: Vec<String> = (0..10).map(|i| format!("t{i}")).collect();
    let a = project_2d(&vs, &labels).unwrap();
    let b = project_2d(&flipped, &labels).unwrap();
    for (p, q) in a.iter().zip(&b) {
        assert!((p.0 + q.0).abs() < 1e-6 && (p.1 + q.1).abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn split_invariants_hold(seed in any::<u64>(), ratio in 0.05f64..0.5) {
        let cfg = SynthConfig { n_topics: 3, items_per_topic: 10, users: 30, interactions_per_user: 6, sparsity: 0.7, ..SynthConfig::default() };
        let d = synth_benchmark(&cfg).unwrap().dataset;
        let s = make_cold_split(&d, ratio, seed).unwrap();
        s.validate(&d).unwrap();
        prop_assert_eq!(s.train.len() + s.test.len(), d.interactions.len());
        let interacted: HashSet<u32> = d.interactions.iter().map(|i| i.item).collect();
        prop_assert_eq!(s.cold_items.len(), (ratio * interacted.len() as f64).ceil() as usize);
        let train_users: HashSet<u32> = s.train.iter().map(|i| i.user).collect();
        for &u in &s.cold_users {
            prop_assert!(!train_users.contains(&u));
        }
    }
}
