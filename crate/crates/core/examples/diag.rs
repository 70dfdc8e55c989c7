use rotfuse_core::config::ExperimentConfig;
use rotfuse_core::eval::{evaluate, SplitSelector};
use rotfuse_core::synth::generate_dataset;
use rotfuse_core::train::train_on;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: u32 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(60);
    let max_lr: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(5e-4);
    let decay: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let mask: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0.5);
    let variant: String = args.get(5).cloned().unwrap_or("proposed".into());

    let mut cfg = ExperimentConfig::default();
    cfg.train.epochs = epochs;
    cfg.train.max_lr = max_lr;
    cfg.train.lr_decay = decay;
    cfg.train.mask_probability = mask;
    cfg.model.variant = variant.parse().unwrap();
    let (dataset, _) = generate_dataset(&cfg.dataset.generation, cfg.dataset.seed).unwrap();
    let (report, ckpt) = train_on(&cfg, &dataset, std::path::Path::new("/tmp/diag")).unwrap();
    let net = ckpt.into_net();
    let seen = evaluate(&net, &dataset, SplitSelector::Seen, 0).unwrap();
    let unseen = evaluate(&net, &dataset, SplitSelector::Unseen, 0).unwrap();
    let l = report.per_epoch_loss.len();
    println!("{variant} epochs={epochs} lr={max_lr} decay={decay} mask={mask}");
    println!("loss: start {:.3} mid {:.3} end {:.3}", report.per_epoch_loss[0], report.per_epoch_loss[l/2], report.per_epoch_loss[l-1]);
    println!("seen {:.2}°  unseen {:.2}°  wall {:.1}s", seen.mean_deg, unseen.mean_deg, report.wall_seconds);
}
