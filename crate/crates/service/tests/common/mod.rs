#![allow(dead_code)]

use std::path::Path;

use goldset_core::model::{
    reference_epoch, AgentDecision, ContentItem, Embedding, GoldLabel, PolicyVersion, SemanticCode,
    Source,
};
use goldset_service::ops;
use goldset_service::Workspace;

pub const FIXED_CLOCK: &str = "2025-03-01T12:00:00Z";

pub fn item_id(i: usize) -> String {
    format!("c{i:03}")
}

/// Even items are positive.
pub fn gold_label_of(item_id: &str) -> &'static str {
    let i: usize = item_id[1..].parse().unwrap();
    if i.is_multiple_of(2) {
        "positive"
    } else {
        "negative"
    }
}

/// `n` items on a circle, item `i` carrying code `i % 256`.
pub fn items(n: usize) -> Vec<ContentItem> {
    (0..n)
        .map(|i| {
            let t = i as f64 * 0.37;
            ContentItem {
                item_id: item_id(i),
                embedding: Embedding(vec![t.cos(), t.sin(), (i % 7) as f64 / 7.0]),
                code: SemanticCode::new((i % 256) as u32).unwrap(),
                source: Source::FileImport,
                created_at: reference_epoch(),
            }
        })
        .collect()
}

pub fn policy(version: u32) -> PolicyVersion {
    PolicyVersion::binary("spam", version)
}

pub fn gold(ids: impl IntoIterator<Item = String>, policy: &PolicyVersion) -> Vec<GoldLabel> {
    ids.into_iter()
        .map(|id| GoldLabel {
            label: gold_label_of(&id).into(),
            item_id: id,
            policy: policy.reference(),
            sme_id: "sme-1".into(),
            adjudicated: true,
        })
        .collect()
}

/// 64 pooled items, policy `spam@1`, and a first version over items 0..10.
pub fn seeded(root: &Path) -> (Workspace, String) {
    let ws = Workspace::open(root).unwrap();
    ops::ingest(&ws, items(64)).unwrap();
    let p = policy(1);
    ops::add_policy(&ws, &p).unwrap();
    let v1 = ops::publish_labels(&ws, None, gold((0..10).map(item_id), &p), &p.reference(), reference_epoch())
        .unwrap();
    (ws, v1.version_id)
}

/// Decisions that copy the gold label of every listed item.
pub fn oracle_decisions(agent_id: &str, ids: impl IntoIterator<Item = String>, policy: &PolicyVersion) -> Vec<AgentDecision> {
    ids.into_iter()
        .map(|id| AgentDecision {
            agent_id: agent_id.into(),
            run_id: "run-1".into(),
            label: gold_label_of(&id).into(),
            item_id: id,
            policy: policy.reference(),
            decided_at: reference_epoch(),
        })
        .collect()
}

pub fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) {
    let text: String = rows
        .iter()
        .map(|r| serde_json::to_string(r).unwrap() + "\n")
        .collect();
    std::fs::write(path, text).unwrap();
}
