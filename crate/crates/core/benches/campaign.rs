use aqi_core::campaign::{run_campaign, run_campaign_sequential, CampaignConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn config(seeds: u64) -> CampaignConfig {
    CampaignConfig { seeds, triples: 10, pairs: 2, ..CampaignConfig::default() }
}

// Without the `parallel` feature both entries take the sequential path.
fn campaign(c: &mut Criterion) {
    let mut group = c.benchmark_group("campaign");
    group.sample_size(10);
    for seeds in [16, 64] {
        let cfg = config(seeds);
        group.bench_with_input(BenchmarkId::new("rayon", seeds), &cfg, |b, cfg| {
            b.iter(|| black_box(run_campaign(cfg)))
        });
        group.bench_with_input(BenchmarkId::new("sequential", seeds), &cfg, |b, cfg| {
            b.iter(|| black_box(run_campaign_sequential(cfg)))
        });
    }
    group.finish();
}

criterion_group!(benches, campaign);
criterion_main!(benches);
