//! One full iteration of each sampler at the Study-1 cells used for the
//! efficiency comparison.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use glpm_bench::study_cell;
use glpm_core::samplers::Chain;
use glpm_core::{HmcConfig, SamplerConfig, SamplerKind};

fn iteration(c: &mut Criterion) {
    let mut group = c.benchmark_group("iteration");
    group.sample_size(10);
    for (n, tau) in [(200, 0.2), (200, 0.8), (500, 0.2), (500, 0.8)] {
        let f = study_cell(n, tau);
        let mut config = SamplerConfig::new(1);
        config.mwg.delta = 0.5;
        config.hmc = HmcConfig::with_target_length(0.2).unwrap();
        config.tau_widths = vec![0.02];
        for kind in SamplerKind::ALL {
            let mut chain = Chain::new(kind, &f.network, &f.prior, config.clone(), 5).unwrap();
            let id = BenchmarkId::new(kind.name(), format!("n={n},tau={tau}"));
            group.bench_function(id, |b| b.iter(|| chain.step().unwrap()));
        }
    }
    group.finish();
}

criterion_group!(benches, iteration);
criterion_main!(benches);
