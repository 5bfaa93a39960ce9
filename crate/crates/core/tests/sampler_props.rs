use goldset_core::model::{
    reference_epoch, ContentItem, Embedding, GoldLabel, PolicyVersion, SemanticCode, Source,
};
use goldset_core::sampler::{
    auc, select_batch, select_scored, train_on, train_propensity, Design, PropensityConfig,
    SamplerError, SamplingMode, WEIGHT_EPSILON,
};
use goldset_core::simlab::substream_rng;
use goldset_core::store::{publish_version_at, ContentPool, GdsVersion};
use proptest::{prop_assert, proptest};
use rand::prelude::*;
use rand_distr::StandardNormal;

fn item(id: String, embedding: Vec<f64>, code: u32) -> ContentItem {
    ContentItem {
        item_id: id,
        embedding: Embedding(embedding),
        code: SemanticCode::new(code).unwrap(),
        source: Source::Synthetic,
        created_at: reference_epoch(),
    }
}

fn pool_of(items: Vec<ContentItem>) -> ContentPool {
    let mut pool = ContentPool::new();
    pool.ingest_candidates(items).unwrap();
    pool
}

fn gds_of<'a>(pool: &ContentPool, ids: impl IntoIterator<Item = &'a str>) -> GdsVersion {
    let policy = PolicyVersion::binary("p", 1);
    let labels = ids
        .into_iter()
        .map(|id| GoldLabel {
            item_id: id.to_string(),
            policy: policy.reference(),
            label: "negative".into(),
            sme_id: "sme".into(),
            adjudicated: true,
        })
        .collect();
    publish_version_at(pool, None, labels, &policy, reference_epoch()).unwrap()
}

/// Two well separated Gaussian blobs in 8 dimensions.
fn two_cluster_pool(rng: &mut impl Rng) -> ContentPool {
    let mut items = Vec::new();
    for i in 0..400 {
        let center = if i < 200 { 1.5 } else { -1.5 };
        let e: Vec<f64> = (0..8)
            .map(|_| center + 0.5 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        items.push(item(format!("{}{i:03}", if i < 200 { "a" } else { "b" }), e, 0));
    }
    pool_of(items)
}

#[test]
fn propensity_separates_member_and_novel_clusters() {
    let mut rng = substream_rng(1, "two-cluster");
    let pool = two_cluster_pool(&mut rng);
    let gds = gds_of(&pool, pool.items().map(|i| i.item_id.as_str()).filter(|id| id.starts_with('a')));
    let model = train_propensity(&pool, &gds, &PropensityConfig::default()).unwrap();
    let mean = |prefix: char| {
        let scores: Vec<f64> = pool
            .items()
            .filter(|i| i.item_id.starts_with(prefix))
            .map(|i| model.predict(i.embedding.as_slice()).unwrap())
            .collect();
        scores.iter().sum::<f64>() / scores.len() as f64
    };
    assert!(mean('a') > 0.8, "member mean {}", mean('a'));
    assert!(mean('b') < 0.2, "novel mean {}", mean('b'));
}

#[test]
fn random_membership_gives_chance_auc_on_held_out_items() {
    let mut rng = substream_rng(2, "random-membership");
    let mut draw = |n: usize, prefix: &str| {
        let items: Vec<ContentItem> = (0..n)
            .map(|i| {
                let e = (0..16).map(|_| rng.sample(StandardNormal)).collect();
                item(format!("{prefix}{i:04}"), e, 0)
            })
            .collect();
        let member: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        (pool_of(items), member)
    };
    let (train_pool, train_y) = draw(1000, "t");
    let (test_pool, test_y) = draw(1000, "h");
    let model = train_on(&Design::from_pool(&train_pool), &train_y, &PropensityConfig::default()).unwrap();
    let scores: Vec<f64> = test_pool
        .items()
        .map(|i| model.predict(i.embedding.as_slice()).unwrap())
        .collect();
    let a = auc(&scores, &test_y).unwrap();
    assert!((0.45..=0.6).contains(&a), "held-out auc {a}");
}

#[test]
fn training_needs_both_classes() {
    let mut rng = substream_rng(3, "single");
    let pool = two_cluster_pool(&mut rng);
    let empty_member = vec![false; pool.len()];
    let err = train_on(&Design::from_pool(&pool), &empty_member, &PropensityConfig::default()).unwrap_err();
    assert_eq!(err, SamplerError::SingleClass);
    let all = gds_of(&pool, pool.items().map(|i| i.item_id.as_str()));
    assert_eq!(
        train_propensity(&pool, &all, &PropensityConfig::default()).unwrap_err(),
        SamplerError::SingleClass
    );
}

#[test]
fn auc_oracle_cases() {
    assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]), Some(1.0));
    assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[false, false, true, true]), Some(0.0));
    assert_eq!(auc(&[0.5, 0.5], &[false, true]), Some(0.5));
    assert_eq!(auc(&[0.5, 0.7], &[true, true]), None);
}

fn weight(p: f64) -> f64 {
    1.0 / (p + WEIGHT_EPSILON)
}

#[test]
fn weighted_two_candidate_frequency_matches_closed_form() {
    let candidates = [("a", 0.1), ("b", 0.9)];
    let expected = weight(0.1) / (weight(0.1) + weight(0.9));
    let draws = 10_000;
    let hits = (0..draws)
        .filter(|&seed| select_scored(&candidates, 1, SamplingMode::Weighted, seed).0 == [0])
        .count();
    let freq = hits as f64 / draws as f64;
    assert!((freq - expected).abs() <= 0.02, "freq {freq} vs {expected}");
}

#[test]
fn weighted_three_candidates_prefer_lower_propensity() {
    let candidates = [("a", 0.05), ("b", 0.3), ("c", 0.8)];
    let mut firsts = [0usize; 3];
    for seed in 0..6000 {
        firsts[select_scored(&candidates, 1, SamplingMode::Weighted, seed).0[0]] += 1;
    }
    assert!(firsts[0] > firsts[1] && firsts[1] > firsts[2], "{firsts:?}");
    let total: f64 = candidates.iter().map(|c| weight(c.1)).sum();
    for (i, c) in candidates.iter().enumerate() {
        let freq = firsts[i] as f64 / 6000.0;
        assert!((freq - weight(c.1) / total).abs() < 0.02);
    }
}

#[test]
fn bottom_k_takes_the_k_lowest_with_id_ties() {
    let candidates = [("a", 0.4), ("b", 0.1), ("c", 0.1), ("d", 0.05), ("e", 0.9)];
    for seed in 0..20 {
        let (picked, _) = select_scored(&candidates, 3, SamplingMode::BottomK, seed);
        assert_eq!(picked, [3, 1, 2]);
    }
    let (all, _) = select_scored(&candidates, 10, SamplingMode::BottomK, 0);
    assert_eq!(all, [3, 1, 2, 0, 4]);
}

proptest! {
    #[test]
    fn batches_never_contain_golden_items(seed in 0u64..1000, k in 1usize..60, in_gds in 1usize..150) {
        let mut rng = substream_rng(seed, "exclusion");
        let pool = two_cluster_pool(&mut rng);
        let ids: Vec<&str> = pool.items().map(|i| i.item_id.as_str()).collect();
        let member: Vec<&str> = rand::seq::index::sample(&mut rng, ids.len(), in_gds)
            .into_iter()
            .map(|i| ids[i])
            .collect();
        let gds = gds_of(&pool, member);
        let config = PropensityConfig { iterations: 50, ..PropensityConfig::default() };
        let model = train_propensity(&pool, &gds, &config).unwrap();
        for mode in [SamplingMode::Weighted, SamplingMode::BottomK] {
            let batch = select_batch(&pool, &gds, &model, k, mode, seed).unwrap();
            prop_assert!(batch.selected.len() == k);
            prop_assert!(batch.selected.iter().all(|id| !gds.contains(id)));
            let distinct: std::collections::BTreeSet<_> = batch.selected.iter().collect();
            prop_assert!(distinct.len() == k);
        }
    }
}

#[test]
fn uniform_selection_follows_coupon_collector_expectation() {
    // Pool codes drawn uniformly from 256; equal scores make the weighted
    // mode uniform. Expected distinct codes among n draws: K (1 - (1 - 1/K)^n).
    let mut rng = substream_rng(4, "coupons");
    let codes: Vec<u32> = (0..50_000).map(|_| rng.random_range(0..256)).collect();
    let ids: Vec<String> = (0..codes.len()).map(|i| format!("i{i:05}")).collect();
    let candidates: Vec<(&str, f64)> = ids.iter().map(|id| (id.as_str(), 0.5)).collect();
    let k = 256.0f64;
    for n in [64usize, 256, 512] {
        let trials = 60;
        let mut total = 0usize;
        for seed in 0..trials {
            let (picked, _) = select_scored(&candidates, n, SamplingMode::Weighted, seed);
            let distinct: std::collections::BTreeSet<u32> = picked.iter().map(|&i| codes[i]).collect();
            total += distinct.len();
        }
        let mean = total as f64 / trials as f64;
        let expected = k * (1.0 - (1.0 - 1.0 / k).powi(n as i32));
        assert!((mean - expected).abs() < 2.0, "n={n}: {mean} vs {expected}");
    }
}

#[test]
fn selection_is_deterministic_per_seed() {
    let candidates = [("a", 0.2), ("b", 0.3), ("c", 0.1), ("d", 0.6)];
    let first = select_scored(&candidates, 2, SamplingMode::Weighted, 42);
    assert_eq!(first, select_scored(&candidates, 2, SamplingMode::Weighted, 42));
}
