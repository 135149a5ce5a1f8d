use corpusforge::selector::{kmeans_1d, kmeans_cluster, EntropyScore};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

const MODES: [f64; 8] = [1.791, 2.221, 2.510, 2.761, 3.012, 3.293, 3.666, 4.365];

#[test]
fn recovers_eight_tight_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut scores = Vec::new();
    for (m, mode) in MODES.iter().enumerate() {
        let noise = Normal::new(*mode, 0.02).unwrap();
        for i in 0..400 {
            scores.push(EntropyScore {
                id: format!("m{m}-{i}"),
                entropy: noise.sample(&mut rng),
                tokens: None,
            });
        }
    }
    let clusters = kmeans_cluster(&scores, 8, 0).unwrap();
    assert_eq!(clusters.len(), 8);
    for (c, mode) in clusters.iter().zip(MODES) {
        assert!((c.centroid - mode).abs() < 0.05, "{} vs {mode}", c.centroid);
        assert_eq!(c.size, 400);
    }
    assert_eq!(kmeans_cluster(&scores, 8, 0).unwrap(), clusters);
}

#[test]
fn sse_monotone_on_100k_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let dist = Uniform::new(0.0, 5.0).unwrap();
    let values: Vec<f64> = (0..100_000).map(|_| dist.sample(&mut rng)).collect();
    let km = kmeans_1d(&values, 8, 1, 2);
    assert!(!km.sse_history.is_empty());
    for w in km.sse_history.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
    }
    assert_eq!(kmeans_1d(&values, 8, 1, 2), km);
}
