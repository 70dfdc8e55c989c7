use rotfuse_core::config::ExperimentConfig;
use rotfuse_core::synth::generate_dataset;
use rotfuse_core::train::{run_experiment_matrix, MatrixVariant};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: u32 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(30);
    let seeds: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1);

    let cfg = ExperimentConfig::default();
    let t0 = Instant::now();
    let (dataset, report) = generate_dataset(&cfg.dataset.generation, cfg.dataset.seed).unwrap();
    println!("dataset: {} pairs in {:.1}s; occluded {:.1}%; probe single {:.2} vs two-view {:.2} ({} pairs)",
        dataset.pairs.len(), t0.elapsed().as_secs_f64(), report.occluded_fraction*100.0,
        report.discriminability.single_view_deg, report.discriminability.two_view_deg, report.discriminability.pairs);

    let mut cfg = cfg;
    cfg.train.epochs = epochs;
    let variants: Vec<MatrixVariant> = ["proposed", "no_rotation", "concat", "mlp_encoding", "blocks1"]
        .iter().map(|s| s.parse().unwrap()).collect();
    let seed_list: Vec<u64> = (1..=seeds).collect();
    let t0 = Instant::now();
    let results = run_experiment_matrix(&cfg, &dataset, &variants, &seed_list, std::path::Path::new("/tmp/pilot")).unwrap();
    println!("matrix wall: {:.1}s", t0.elapsed().as_secs_f64());
    print!("{}", results.table());
    print!("{}", results.summary_table());
}
