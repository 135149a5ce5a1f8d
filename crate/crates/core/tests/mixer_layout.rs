use std::collections::BTreeMap;

use corpusforge::bpe::train_bpe;
use corpusforge::mixer::{layout, sample_mixture, GroupBy, LayoutKind, MixtureSpec, Unit};
use corpusforge::testkit::{random_en_text, random_zh_text};
use corpusforge::{BpeModel, Document, Lang};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn two_category_pool(n: usize) -> Vec<Document> {
    (0..n)
        .map(|i| Document::new(format!("d{i}"), format!("text {i}"), if i % 2 == 0 { "A" } else { "B" }, Lang::En))
        .collect()
}

fn spec(layout: LayoutKind, seed: u64, budget: u64) -> MixtureSpec {
    MixtureSpec {
        weights: BTreeMap::from([("A".into(), 1.0), ("B".into(), 1.0)]),
        total_budget: budget,
        unit: Unit::Docs,
        layout,
        block_order: Some(vec!["A".into(), "B".into()]),
        group_by: GroupBy::Source,
        sub_block_by: None,
        seed,
    }
}

#[test]
fn shuffled_windows_stay_balanced() {
    let docs = two_category_pool(10_000);
    for seed in 0..5 {
        let s = spec(LayoutKind::Shuffled, seed, 10_000);
        let pool = sample_mixture(&docs, &s, &BpeModel::byte_level()).unwrap();
        let m = layout(&pool, &s).unwrap();
        let is_a: Vec<u32> = m.entries.iter().map(|e| u32::from(e.category == "A")).collect();
        let mut window: u32 = is_a[..1000].iter().sum();
        for i in 1000..=is_a.len() {
            assert!((400..=600).contains(&window), "seed {seed} window ending {i}: {window}");
            if i < is_a.len() {
                window = window + is_a[i] - is_a[i - 1000];
            }
        }
        let blocked = spec(LayoutKind::Blocked, seed, 10_000);
        let mb = layout(&pool, &blocked).unwrap();
        assert_eq!(mb.category_runs(), 2);
        assert!(m.category_runs() > 20 * mb.category_runs());
        let mut a: Vec<_> = m.entries.iter().map(|e| &e.id).collect();
        let mut b: Vec<_> = mb.entries.iter().map(|e| &e.id).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }
}

#[test]
fn bilingual_token_ratio() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut docs = Vec::new();
    for i in 0..200 {
        let zh = i % 2 == 0;
        let text = if zh {
            let n = rng.random_range(50..150);
            random_zh_text(&mut rng, n)
        } else {
            let n = rng.random_range(20..60);
            random_en_text(&mut rng, n)
        };
        docs.push(Document::new(format!("b{i}"), text, "Webtext", if zh { Lang::Zh } else { Lang::En }));
    }
    let bpe = train_bpe(&docs, 400).unwrap();
    let s = MixtureSpec {
        weights: BTreeMap::from([("zh".into(), 1.0), ("en".into(), 1.5)]),
        total_budget: 10_000,
        unit: Unit::Tokens,
        layout: LayoutKind::Shuffled,
        block_order: None,
        group_by: GroupBy::Lang,
        sub_block_by: None,
        seed: 3,
    };
    let pool = sample_mixture(&docs, &s, &bpe).unwrap();
    let max_doc = docs.iter().map(|d| bpe.count_tokens(&d.text) as u64).max().unwrap();
    assert_eq!(pool.quotas["zh"], 4000);
    assert_eq!(pool.quotas["en"], 6000);
    for (cat, quota) in &pool.quotas {
        let got = pool.achieved[cat];
        assert!(got >= *quota && got < quota + max_doc, "{cat}: {got} vs {quota}");
    }
}
