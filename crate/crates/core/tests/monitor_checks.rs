use goldset_core::metrics::MetricName;
use goldset_core::model::{
    reference_epoch, AgentDecision, ContentItem, Embedding, GoldLabel, PolicyVersion, SemanticCode,
    Source,
};
use goldset_core::monitor::{
    append_alert, drift_check, stability_check, AlertReason, AlertResult, AlertStatus,
    MonitorBaseline, MonitorConfig, MonitorError,
};
use goldset_core::simlab::{simulate_agent, NoisyAgentProfile};
use goldset_core::store::{publish_version_at, ContentPool, GdsVersion, MemoryVersions};

const DIGEST: &str = "cfg-1";

struct Fixture {
    pool: ContentPool,
    policy: PolicyVersion,
}

impl Fixture {
    fn new(n: usize) -> Self {
        let mut pool = ContentPool::new();
        pool.ingest_candidates(
            (0..n)
                .map(|i| ContentItem {
                    item_id: format!("m{i:05}"),
                    embedding: Embedding(vec![0.0]),
                    code: SemanticCode::new((i % 256) as u32).unwrap(),
                    source: Source::Synthetic,
                    created_at: reference_epoch(),
                })
                .collect(),
        )
        .unwrap();
        Fixture {
            pool,
            policy: PolicyVersion::binary("fraud", 1),
        }
    }

    fn publish(&self, parent: Option<&GdsVersion>, range: std::ops::Range<usize>) -> GdsVersion {
        let labels = range
            .map(|i| GoldLabel {
                item_id: format!("m{i:05}"),
                policy: self.policy.reference(),
                label: if i % 2 == 0 { "positive" } else { "negative" }.into(),
                sme_id: "sme".into(),
                adjudicated: true,
            })
            .collect();
        publish_version_at(&self.pool, parent, labels, &self.policy, reference_epoch()).unwrap()
    }

    fn run(&self, profile: &NoisyAgentProfile, gds: &GdsVersion) -> Vec<AgentDecision> {
        simulate_agent(profile, gds, &self.policy).unwrap()
    }

    fn baseline(&self, decisions: &[AgentDecision], pinned: &GdsVersion) -> MonitorBaseline {
        MonitorBaseline::establish("llm", DIGEST, decisions, pinned, &self.policy, reference_epoch()).unwrap()
    }
}

fn perfect() -> NoisyAgentProfile {
    NoisyAgentProfile::symmetric("llm", 1.0, 0)
}

#[test]
fn rerunning_the_baseline_agent_passes_with_zero_delta() {
    let fx = Fixture::new(400);
    let pinned = fx.publish(None, 0..400);
    let run = fx.run(&NoisyAgentProfile::symmetric("llm", 0.85, 5), &pinned);
    let baseline = fx.baseline(&run, &pinned);
    let outcome = stability_check(&run, &pinned, &baseline, DIGEST, &fx.policy, &MonitorConfig::stability()).unwrap();
    let alert = outcome.alert;
    assert_eq!(alert.status, AlertStatus::Pass);
    assert_eq!(alert.primary_delta_pp, Some(0.0));
    assert!(alert.ci_low.unwrap() <= 0.0 && alert.ci_high.unwrap() >= 0.0);
    assert!(alert.metric_deltas.iter().all(|d| d.delta_pp.is_none_or(|v| v == 0.0)));
    assert_eq!(alert.sample_size, 400);
}

#[test]
fn two_percent_flips_trigger_stability_alerts() {
    let fx = Fixture::new(2000);
    let pinned = fx.publish(None, 0..2000);
    let baseline = fx.baseline(&fx.run(&perfect(), &pinned), &pinned);
    let mut alerts = 0;
    let mut deltas = Vec::new();
    for seed in 0..20u64 {
        let run = fx.run(&NoisyAgentProfile::symmetric("llm", 0.98, 1000 + seed), &pinned);
        let config = MonitorConfig {
            seed,
            ..MonitorConfig::stability()
        };
        let alert = stability_check(&run, &pinned, &baseline, DIGEST, &fx.policy, &config).unwrap().alert;
        if alert.status == AlertStatus::Alert {
            assert_eq!(alert.reason, Some(AlertReason::ThresholdExceeded));
            alerts += 1;
        }
        deltas.push(alert.primary_delta_pp.unwrap());
    }
    assert!(alerts >= 18, "{alerts}/20 alerts");
    // Informedness loses twice the flip rate on a balanced set.
    let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
    assert!((mean + 4.0).abs() < 0.5, "mean delta {mean} pp");
}

#[test]
fn gold_agent_passes_for_any_threshold() {
    let fx = Fixture::new(300);
    let pinned = fx.publish(None, 0..300);
    let run = fx.run(&perfect(), &pinned);
    let baseline = fx.baseline(&run, &pinned);
    for threshold_pp in [0.0, 0.5, 1.0, 5.0, 50.0] {
        let config = MonitorConfig {
            threshold_pp,
            ..MonitorConfig::stability()
        };
        let alert = stability_check(&run, &pinned, &baseline, DIGEST, &fx.policy, &config).unwrap().alert;
        assert_eq!(alert.status, AlertStatus::Pass, "threshold {threshold_pp}");
    }
}

#[test]
fn stability_rejects_other_versions_and_outside_items() {
    let fx = Fixture::new(300);
    let pinned = fx.publish(None, 0..200);
    let other = fx.publish(None, 0..210);
    let run = fx.run(&perfect(), &pinned);
    let baseline = fx.baseline(&run, &pinned);
    let config = MonitorConfig::stability();
    assert!(matches!(
        stability_check(&run, &other, &baseline, DIGEST, &fx.policy, &config),
        Err(MonitorError::PinnedMismatch { .. })
    ));
    let wider = fx.run(&perfect(), &other);
    assert!(matches!(
        stability_check(&wider, &pinned, &baseline, DIGEST, &fx.policy, &config),
        Err(MonitorError::OutsidePinned(_))
    ));
}

#[test]
fn changed_configuration_alerts_even_with_identical_output() {
    let fx = Fixture::new(200);
    let pinned = fx.publish(None, 0..200);
    let run = fx.run(&perfect(), &pinned);
    let baseline = fx.baseline(&run, &pinned);
    let alert = stability_check(&run, &pinned, &baseline, "cfg-2", &fx.policy, &MonitorConfig::stability())
        .unwrap()
        .alert;
    assert_eq!(alert.status, AlertStatus::Alert);
    assert_eq!(alert.reason, Some(AlertReason::ConfigDigestMismatch));
}

#[test]
fn drift_scores_only_items_new_in_the_child() {
    let fx = Fixture::new(1500);
    let parent = fx.publish(None, 0..1000);
    let child = fx.publish(Some(&parent), 1000..1500);
    let mut versions = MemoryVersions::new();
    versions.insert(parent.clone());
    versions.insert(child.clone());

    // Baseline informedness near 0.6.
    let baseline = fx.baseline(&fx.run(&NoisyAgentProfile::symmetric("llm", 0.8, 1), &parent), &parent);
    assert!((baseline.baseline_report.informedness.unwrap() - 0.6).abs() < 0.05);

    let coin = fx.run(&NoisyAgentProfile::symmetric("llm", 0.5, 2), &child);
    let outcome = drift_check(&coin, &child, &parent, &versions, &baseline, &fx.policy, &MonitorConfig::drift()).unwrap();
    assert_eq!(outcome.scored_items.len(), 500);
    assert!(outcome.scored_items.iter().all(|id| !parent.contains(id)));
    assert_eq!(outcome.alert.status, AlertStatus::Alert);
    assert_eq!(outcome.alert.reason, Some(AlertReason::ThresholdExceeded));
    assert_eq!(outcome.alert.primary_metric, MetricName::Informedness);
    assert!(outcome.alert.ci_high.unwrap() < 0.0);

    // A steady agent on the same new items stays quiet.
    let steady = fx.run(&NoisyAgentProfile::symmetric("llm", 0.8, 3), &child);
    let alert = drift_check(&steady, &child, &parent, &versions, &baseline, &fx.policy, &MonitorConfig::drift())
        .unwrap()
        .alert;
    assert_eq!(alert.status, AlertStatus::Pass, "{alert:?}");
}

#[test]
fn small_drift_sample_is_insufficient() {
    let fx = Fixture::new(200);
    let parent = fx.publish(None, 0..190);
    let child = fx.publish(Some(&parent), 190..200);
    let mut versions = MemoryVersions::new();
    versions.insert(parent.clone());
    let baseline = fx.baseline(&fx.run(&perfect(), &parent), &parent);
    let alert = drift_check(&fx.run(&perfect(), &child), &child, &parent, &versions, &baseline, &fx.policy, &MonitorConfig::drift())
        .unwrap()
        .alert;
    assert_eq!(alert.status, AlertStatus::Alert);
    assert_eq!(alert.reason, Some(AlertReason::InsufficientData));
    assert_eq!(alert.sample_size, 10);
}

#[test]
fn checks_are_deterministic_and_alerts_append() {
    let fx = Fixture::new(600);
    let pinned = fx.publish(None, 0..600);
    let baseline = fx.baseline(&fx.run(&perfect(), &pinned), &pinned);
    let run = fx.run(&NoisyAgentProfile::symmetric("llm", 0.9, 4), &pinned);
    let check = || {
        stability_check(&run, &pinned, &baseline, DIGEST, &fx.policy, &MonitorConfig::stability())
            .unwrap()
            .alert
    };
    let first = check();
    assert_eq!(first, check());

    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("alerts.jsonl");
    append_alert(&log, &first).unwrap();
    append_alert(&log, &first).unwrap();
    let text = std::fs::read_to_string(&log).unwrap();
    let lines: Vec<AlertResult> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1], first);
}
