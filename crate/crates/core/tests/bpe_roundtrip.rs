use corpusforge::bpe::train_bpe_texts;
use corpusforge::testkit::{random_en_text, random_zh_text};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EMOJI: [&str; 6] = ["😀", "👍🏽", "🇨🇳", "👨‍👩‍👧", "❤️", "🎉"];

fn mixed_docs(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut s = String::new();
            for _ in 0..rng.random_range(1..6) {
                match rng.random_range(0..4) {
                    0 => {
                        let k = rng.random_range(5..40);
                        s.push_str(&random_zh_text(&mut rng, k));
                    }
                    1 => {
                        let k = rng.random_range(3..20);
                        s.push_str(&random_en_text(&mut rng, k));
                    }
                    2 => s.push_str(EMOJI[rng.random_range(0..EMOJI.len())]),
                    _ => s.push_str(&format!(" {} \n\t", rng.random_range(0..100_000))),
                }
            }
            s
        })
        .collect()
}

#[test]
fn round_trip_on_mixed_documents() {
    let docs = mixed_docs(1000, 7);
    let model = train_bpe_texts(docs.iter().map(String::as_str).collect(), 1000).unwrap();
    for d in &docs {
        assert_eq!(&model.decode(&model.encode(d)).unwrap(), d);
    }
    let again = train_bpe_texts(docs.iter().map(String::as_str).collect(), 1000).unwrap();
    assert_eq!(model.to_json().unwrap(), again.to_json().unwrap());
}
