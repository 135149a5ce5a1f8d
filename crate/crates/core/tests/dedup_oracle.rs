use corpusforge::dedup::{dedup_corpus, DedupConfig};
use corpusforge::testkit::{brute_force_near_dupes, gen_corpus, greedy_verdicts, FixtureSpec};

fn check(spec: &FixtureSpec) {
    let fixture = gen_corpus(spec);
    let cfg = DedupConfig::default();
    let result = dedup_corpus(fixture.docs.clone(), cfg).unwrap();
    let pairs = brute_force_near_dupes(&fixture.docs, cfg.threshold, cfg.shingle_len).unwrap();
    let expected = greedy_verdicts(&fixture.docs, &pairs);
    assert_eq!(result.duplicates, expected, "seed {}", spec.seed);
    assert_eq!(result.kept.len() + result.duplicates.len(), fixture.docs.len());

    // every planted copy is caught and attributed to its original
    for (orig, copy) in fixture.duplicate_pairs() {
        assert!(
            result.duplicates.iter().any(|d| d.dropped_id == copy && d.kept_id == orig),
            "planted copy {copy} of {orig} missed"
        );
    }
}

#[test]
fn matches_brute_force_on_planted_fixtures() {
    for (seed, docs, plants) in [(1, 200, 20), (2, 500, 60), (3, 2000, 150)] {
        check(&FixtureSpec {
            docs,
            duplicate_plants: plants,
            seed,
            ..FixtureSpec::default()
        });
    }
}

#[test]
fn by_source_only_matches_within_category() {
    let fixture = gen_corpus(&FixtureSpec {
        docs: 300,
        duplicate_plants: 30,
        seed: 4,
        ..FixtureSpec::default()
    });
    let mut docs = fixture.docs.clone();
    // move every planted copy to a category of its own
    for d in docs.iter_mut().filter(|d| d.id.ends_with("-dup")) {
        d.source = "Isolated".into();
    }
    let global = dedup_corpus(docs.clone(), DedupConfig::default()).unwrap();
    let split = dedup_corpus(
        docs,
        DedupConfig {
            by_source: true,
            ..DedupConfig::default()
        },
    )
    .unwrap();
    assert_eq!(global.duplicates.len(), 30);
    assert!(split.duplicates.len() < global.duplicates.len());
}
