use patchwise_core::data::{
    gen_composite, gen_industrial, load_jsonl, write_jsonl, CompositeGenConfig, Corpus, CorpusSampler,
    IndustrialGenConfig, Source, TimeSeries, DEFAULT_TIER_WEIGHTS,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn corpus() -> Corpus {
    let mut series = Vec::new();
    for tier in 1..=5u8 {
        for i in 0..3 {
            series.push(TimeSeries::new(format!("t{tier}-{i}"), "hourly", Some(tier), vec![1.0; 64]));
        }
    }
    for i in 0..4 {
        series.push(TimeSeries::synthetic(format!("s{i}"), vec![0.5; 64]));
    }
    Corpus::from_series(series)
}

#[test]
fn source_mix_matches_weights_over_100k_draws() {
    let corpus = corpus();
    let sampler = CorpusSampler::default();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let n = 100_000;
    let mut counts = [0usize; 6];
    for _ in 0..n {
        match sampler.draw_source(&corpus, &mut rng).unwrap() {
            Source::Synthetic => counts[0] += 1,
            Source::Tier(t) => counts[t as usize] += 1,
        }
    }
    let share = |c: usize| c as f64 / n as f64;
    let syn = sampler.synthetic_fraction;
    assert!((share(counts[0]) - syn).abs() < 0.01, "synthetic {}", share(counts[0]));
    for t in 0..5 {
        let want = (1.0 - syn) * DEFAULT_TIER_WEIGHTS[t];
        let got = share(counts[t + 1]);
        assert!((got - want).abs() < 0.01, "tier {}: {got} vs {want}", t + 1);
    }
}

#[test]
fn empty_tiers_renormalize() {
    let corpus = Corpus::from_series(vec![
        TimeSeries::new("a", "daily", Some(1), vec![1.0; 32]),
        TimeSeries::new("b", "daily", Some(4), vec![1.0; 32]),
    ]);
    let sampler = CorpusSampler::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 100_000;
    let tier1 = (0..n)
        .filter(|_| sampler.draw_source(&corpus, &mut rng).unwrap() == Source::Tier(1))
        .count();
    let want = 0.35 / (0.35 + 0.12);
    assert!((tier1 as f64 / n as f64 - want).abs() < 0.01);
}

#[test]
fn generated_corpus_round_trips_through_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    let mut series: Vec<TimeSeries> = (0..5)
        .map(|s| gen_composite(&CompositeGenConfig { length: 300, ..CompositeGenConfig::default() }, s))
        .collect();
    series.extend((0..3).map(|s| gen_industrial(&IndustrialGenConfig { length: 300, ..IndustrialGenConfig::default() }, s)));
    series[0].mask[10] = false;
    write_jsonl(&path, &series).unwrap();
    let back = load_jsonl(&path).unwrap();
    assert_eq!(back.len(), series.len());
    for (a, b) in series.iter().zip(&back) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.mask, b.mask);
        for ((x, y), m) in a.values.iter().zip(&b.values).zip(&a.mask) {
            if *m {
                assert_eq!(x, y);
            }
        }
    }
}

#[test]
fn batches_have_model_shapes() {
    let corpus = corpus();
    let sampler = CorpusSampler::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let batch = sampler.sample_batch(&corpus, 32, 96, 48, &mut rng).unwrap();
    assert_eq!(batch.len(), 32);
    for ex in &batch {
        assert_eq!(ex.context.len(), 96);
        assert_eq!(ex.context_mask.len(), 96);
        assert_eq!(ex.target.len(), 48);
        // 64-step series: at least the first context slots are padding
        assert!(!ex.context_mask[0]);
    }
}
