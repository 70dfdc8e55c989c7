use rotfuse_core::config::ExperimentConfig;
use rotfuse_core::eval::{evaluate, rotatability_metric, SplitSelector};
use rotfuse_core::synth::generate_dataset;
use rotfuse_core::train::train_on;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: u32 = args[1].parse().unwrap();
    let samples: u32 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(250);
    let enc_width: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(28);
    let sequential: bool = args.get(4).map(|s| s == "seq").unwrap_or(true);
    let mut base = ExperimentConfig::default();
    base.train.epochs = epochs;
    base.train.lr_decay = 1.0;
    base.dataset.generation.rig.extrap_polar_deg = (48.0, 70.0);
    base.dataset.generation.samples_per_subject = samples;
    base.dataset.generation.observation.encoding_width = enc_width;
    base.model.sequential_block_update = sequential;
    base.model.obs_width = 0;
    if let Some(att) = args.get(5) { base.dataset.generation.observation.occlusion_attenuation = att.parse().unwrap(); }
    if let Some(th) = args.get(6) { base.dataset.generation.observation.occlusion_pitch_deg = th.parse().unwrap(); }
    if let Some(cone) = args.get(7) { base.dataset.generation.observation.gaze_cone_deg = cone.parse().unwrap(); }
    if let Some(j) = args.get(8) { base.dataset.generation.observation.jitter_deg = j.parse().unwrap(); }
    if let Some(sc) = args.get(9) { base.dataset.generation.observation.projection_scale = sc.parse().unwrap(); }
    if let Some(d) = args.get(10) { base.model.rotatable_width = d.parse().unwrap(); }
    eprintln!("enc_width={enc_width} sequential={sequential} obs={:?}", base.dataset.generation.observation);
    let (dataset, _) = generate_dataset(&base.dataset.generation, base.dataset.seed).unwrap();
    for seed in [1u64, 2, 3] {
        let mut line = format!("seed {seed}:");
        let mut vals = vec![];
        for v in ["proposed", "no_rotation", "concat", "mlp_encoding"] {
            let mut cfg = base.clone();
            cfg.model.variant = v.parse().unwrap();
            cfg.train.seed = seed;
            let (_, ckpt) = train_on(&cfg, &dataset, std::path::Path::new("/tmp/seeds")).unwrap();
            let net = ckpt.into_net();
            let unseen = evaluate(&net, &dataset, SplitSelector::Unseen, 0).unwrap();
            vals.push(unseen.mean_deg);
            line.push_str(&format!(" {v}={:.2}", unseen.mean_deg));
            if v == "proposed" {
                let pairs = dataset.unseen_pairs_for_fold(0);
                let rot = rotatability_metric(&net, &pairs).unwrap();
                let mut net2 = net.clone();
                let sub: Vec<_> = pairs.iter().take(100).cloned().collect();
                let contrib = rotfuse_core::eval::contribution_ratio(&mut net2, &sub).unwrap();
                line.push_str(&format!(" [rot mean={:.3} frac<1={:.2} refcontrib={:.2}]", rot.mean, rot.fraction_below_one, contrib.overall));
            }
        }
        line.push_str(&format!("  gap_noro={:+.2} gap_concat={:+.2} gap_mlp={:+.2}",
            vals[1]-vals[0], vals[2]-vals[0], vals[3]-vals[0]));
        println!("{line}");
    }
}
