use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use pdc_core::counting::{run_experiment, ArmDetectors, ExperimentConfig, SourceState, Topology};
use pdc_core::jsa::{build_jsa, schmidt_decompose, PumpEnvelope, SchmidtDecomposition, SpectralGridAxes};
use pdc_core::phasematch::{calibrate_offset, WaveguideSpec};

fn device() -> WaveguideSpec {
    calibrate_offset(&WaveguideSpec::default(), 1558.29).unwrap()
}

fn spectrum(c: &mut Criterion) {
    let spec = device();
    let pump = PumpEnvelope::default();
    let mut group = c.benchmark_group("jsa");
    group.sample_size(10);
    for points in [128usize, 256, 512] {
        let axes = SpectralGridAxes::centered(1558.29, 1558.29, 9.0, points).unwrap();
        group.bench_with_input(BenchmarkId::new("build", points), &axes, |b, axes| {
            b.iter(|| build_jsa(&spec, &pump, axes.clone()).unwrap())
        });
        let jsa = build_jsa(&spec, &pump, axes).unwrap();
        group.bench_with_input(BenchmarkId::new("schmidt", points), &jsa, |b, jsa| {
            b.iter(|| schmidt_decompose(jsa).unwrap())
        });
    }
    group.finish();
}

fn counting(c: &mut Criterion) {
    let state = SourceState::thermal(SchmidtDecomposition::uniform(2), 0.01).unwrap();
    let det = ArmDetectors::default();
    let pulses = 1_000_000;
    let mut group = c.benchmark_group("monte_carlo");
    group.sample_size(10).throughput(Throughput::Elements(pulses));
    for topology in [Topology::Direct, Topology::SignalSplitterG2, Topology::HeraldedG2] {
        let cfg = ExperimentConfig::lossless(topology, pulses, 1);
        group.bench_function(topology.name(), |b| {
            b.iter(|| run_experiment(&cfg, &state, &det).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, spectrum, counting);
criterion_main!(benches);
