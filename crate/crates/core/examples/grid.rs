use rotfuse_core::config::ExperimentConfig;
use rotfuse_core::eval::{evaluate, SplitSelector};
use rotfuse_core::synth::generate_dataset;
use rotfuse_core::train::train_on;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: u32 = args[1].parse().unwrap();
    let decay: f64 = args[2].parse().unwrap();
    let extrap_lo: f64 = args[3].parse().unwrap();
    let extrap_hi: f64 = args[4].parse().unwrap();
    let seed: u64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(1);

    let mut base = ExperimentConfig::default();
    base.train.epochs = epochs;
    base.train.lr_decay = decay;
    if let Some(lr) = args.get(6) { let lr: f64 = lr.parse().unwrap(); base.train.max_lr = lr; }
    base.dataset.generation.rig.extrap_polar_deg = (extrap_lo, extrap_hi);
    let (dataset, rep) = generate_dataset(&base.dataset.generation, base.dataset.seed).unwrap();
    println!("# occl {:.1}% probe single/two {:.1}/{:.1}", rep.occluded_fraction*100.0,
        rep.discriminability.single_view_deg, rep.discriminability.two_view_deg);
    let t0 = Instant::now();
    for v in ["proposed", "no_rotation", "concat", "mlp_encoding"] {
        let mut cfg = base.clone();
        cfg.model.variant = v.parse().unwrap();
        cfg.train.seed = seed;
        let (_, ckpt) = train_on(&cfg, &dataset, std::path::Path::new("/tmp/grid")).unwrap();
        let net = ckpt.into_net();
        let seen = evaluate(&net, &dataset, SplitSelector::Seen, 0).unwrap();
        let unseen = evaluate(&net, &dataset, SplitSelector::Unseen, 0).unwrap();
        println!("{v:14} seen {:6.2}  unseen {:6.2}", seen.mean_deg, unseen.mean_deg);
    }
    println!("# wall {:.1}s for 4 variants (epochs={epochs} decay={decay} extrap=({extrap_lo},{extrap_hi}))", t0.elapsed().as_secs_f64());
}
