use std::fs;

use proptest::prelude::*;

use itemplan::content::{load_corpus, save_corpus, serialize_item, ContentItem, Sample, MAX_ITEMS};
use itemplan::Error;

fn word() -> impl Strategy<Value = String> {
    "[a-z]{1,6}"
}

fn item() -> impl Strategy<Value = ContentItem> {
    (
        proptest::collection::btree_set("[A-Z][a-z]{1,5}", 0..4),
        proptest::collection::btree_set(word(), 0..4),
        proptest::collection::btree_set(word(), 0..4),
        proptest::option::of("[A-Z][a-z]{2,6}( [a-z]{1,6}){1,5}"),
    )
        .prop_map(|(entities, core, expanded, claim)| {
            let expanded = expanded.difference(&core).cloned().collect::<Vec<_>>();
            ContentItem::new(entities, core, expanded, claim.as_deref())
        })
}

fn sample() -> impl Strategy<Value = Sample> {
    (
        "[a-z]{1,8}",
        proptest::collection::vec(word(), 1..4),
        proptest::collection::vec(item(), 1..5),
        proptest::collection::vec(word(), 0..12),
    )
        .prop_flat_map(|(id, title, items, target)| {
            let n = items.len();
            let len = target.len();
            (
                Just(id),
                Just(title),
                Just(items),
                Just(target),
                proptest::collection::vec(proptest::option::of(0..n), len),
            )
        })
        .prop_map(|(id, title, items, target, plan_labels)| Sample {
            id,
            title,
            items,
            target,
            plan_labels,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn corpus_round_trips(samples in proptest::collection::vec(sample(), 1..4)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        save_corpus(&samples, &path).unwrap();
        prop_assert_eq!(load_corpus(&path).unwrap(), samples);
    }

    #[test]
    fn segmenter_count_tracks_claim(s in sample()) {
        for it in &s.items {
            let ser = serialize_item(&s.title, it).unwrap();
            let want = if it.has_claim() { 3 } else { 2 };
            prop_assert_eq!(ser.segmenter_count(), want);
            prop_assert_eq!(&ser.tokens[..s.title.len()], &s.title[..]);
        }
    }
}

fn labeled_sample(items: usize) -> Sample {
    Sample {
        id: "cap".into(),
        title: vec!["topic".into()],
        items: (0..items)
            .map(|i| ContentItem::new([format!("E{i}")], ["run"], Vec::<String>::new(), None))
            .collect(),
        target: (0..items).map(|i| format!("w{i}")).collect(),
        plan_labels: (0..items).map(Some).collect(),
    }
}

#[test]
fn eleven_items_are_capped_to_ten() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    save_corpus(&[labeled_sample(11)], &path).unwrap();
    let loaded = load_corpus(&path).unwrap();
    assert_eq!(loaded[0].items.len(), MAX_ITEMS);
    assert_eq!(loaded[0].plan_labels[10], None);
    assert_eq!(loaded[0].plan_labels[9], Some(9));
}

#[test]
fn missing_target_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    fs::write(
        &path,
        r#"{"id":"a","title":"t","items":[{"entities":["X"]}],"plan_labels":[]}"#,
    )
    .unwrap();
    let err = load_corpus(&path).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    assert!(err.to_string().contains("target"), "{err}");
}

#[test]
fn empty_corpus_writes_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    save_corpus(&[], &path).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap(), "");
    assert!(load_corpus(&path).unwrap().is_empty());
}

#[test]
fn out_of_range_label_is_rejected() {
    let mut s = labeled_sample(2);
    s.plan_labels[0] = Some(5);
    let err = s.validated_and_truncated().unwrap_err();
    assert!(err.to_string().contains("plan_labels"), "{err}");
}
