//! Experiment matrix: trains (variant × seed) combinations and tabulates
//! seen/unseen mean angular errors with per-seed rows and per-variant means.

use super::{train_on, TrainError};
use crate::config::ExperimentConfig;
use crate::eval::{evaluate, SplitSelector};
use crate::model::Variant;
use crate::synth::Dataset;
use std::collections::BTreeMap;
use std::path::Path;

/// One matrix entry: a named model variant or a block-count sweep of the
/// proposed variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixVariant {
    Named(Variant),
    Blocks(usize),
}

impl MatrixVariant {
    pub fn label(&self) -> String {
        match self {
            MatrixVariant::Named(v) => v.name().to_string(),
            MatrixVariant::Blocks(n) => format!("blocks{n}"),
        }
    }

    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        match self {
            MatrixVariant::Named(v) => cfg.model.variant = *v,
            MatrixVariant::Blocks(n) => {
                cfg.model.variant = Variant::Proposed;
                cfg.model.blocks = *n;
            }
        }
    }
}

impl std::str::FromStr for MatrixVariant {
    type Err = TrainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(n) = s.strip_prefix("blocks") {
            let n: usize = n
                .parse()
                .map_err(|_| TrainError::ConfigMismatch(format!("bad block count in {s:?}")))?;
            if !(1..=8).contains(&n) {
                return Err(TrainError::ConfigMismatch(format!(
                    "block count {n} out of range 1..=8"
                )));
            }
            return Ok(MatrixVariant::Blocks(n));
        }
        s.parse::<Variant>()
            .map(MatrixVariant::Named)
            .map_err(|e| TrainError::ConfigMismatch(e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct MatrixRow {
    pub variant: String,
    pub seed: u64,
    pub seen_deg: f64,
    pub unseen_deg: f64,
}

#[derive(Debug, Clone)]
pub struct MatrixResults {
    pub rows: Vec<MatrixRow>,
    /// Per-variant (mean seen, mean unseen) over seeds.
    pub summary: BTreeMap<String, (f64, f64)>,
}

impl MatrixResults {
    /// Tab-separated per-seed table with a header row.
    pub fn table(&self) -> String {
        let mut out = String::from("variant\tseed\tseen_deg\tunseen_deg\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                r.variant, r.seed, r.seen_deg, r.unseen_deg
            ));
        }
        out
    }

    pub fn summary_table(&self) -> String {
        let mut out = String::from("variant\tmean_seen_deg\tmean_unseen_deg\n");
        for (variant, (seen, unseen)) in &self.summary {
            out.push_str(&format!("{variant}\t{seen}\t{unseen}\n"));
        }
        out
    }

    pub fn mean_unseen(&self, variant: &str) -> Option<f64> {
        self.summary.get(variant).map(|&(_, unseen)| unseen)
    }
}

/// Trains each (variant, seed) on the dataset and evaluates both splits of
/// the held-out fold. Checkpoints land under `out_dir/<variant>/seed_<s>/`,
/// and the tables are written next to them.
pub fn run_experiment_matrix(
    base: &ExperimentConfig,
    dataset: &Dataset,
    variants: &[MatrixVariant],
    seeds: &[u64],
    out_dir: &Path,
) -> Result<MatrixResults, TrainError> {
    if variants.is_empty() || seeds.is_empty() {
        return Err(TrainError::ConfigMismatch(
            "experiment matrix needs at least one variant and one seed".into(),
        ));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut rows = Vec::new();
    for variant in variants {
        for &seed in seeds {
            let mut cfg = base.clone();
            variant.apply(&mut cfg);
            cfg.train.seed = seed;
            let run_dir = out_dir.join(variant.label()).join(format!("seed_{seed}"));
            let (_, checkpoint) = train_on(&cfg, dataset, &run_dir)?;
            let net = checkpoint.into_net();
            let seen = evaluate(&net, dataset, SplitSelector::Seen, cfg.dataset.eval_fold)
                .map_err(|e| TrainError::ConfigMismatch(e.to_string()))?;
            let unseen = evaluate(&net, dataset, SplitSelector::Unseen, cfg.dataset.eval_fold)
                .map_err(|e| TrainError::ConfigMismatch(e.to_string()))?;
            rows.push(MatrixRow {
                variant: variant.label(),
                seed,
                seen_deg: seen.mean_deg,
                unseen_deg: unseen.mean_deg,
            });
        }
    }

    let mut summary: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
    for row in &rows {
        let entry = summary.entry(row.variant.clone()).or_insert((0.0, 0.0, 0));
        entry.0 += row.seen_deg;
        entry.1 += row.unseen_deg;
        entry.2 += 1;
    }
    let summary = summary
        .into_iter()
        .map(|(k, (seen, unseen, n))| (k, (seen / n as f64, unseen / n as f64)))
        .collect();

    let results = MatrixResults { rows, summary };
    std::fs::write(out_dir.join("matrix.tsv"), results.table())?;
    std::fs::write(out_dir.join("summary.tsv"), results.summary_table())?;
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_labels_parse_back() {
        for s in [
            "proposed",
            "concat",
            "mlp_encoding",
            "no_rotation",
            "no_backbone",
            "blocks1",
            "blocks4",
        ] {
            let v: MatrixVariant = s.parse().unwrap();
            assert_eq!(v.label(), s);
        }
        assert!("blocks0".parse::<MatrixVariant>().is_err());
        assert!("blocksx".parse::<MatrixVariant>().is_err());
        assert!("resnet".parse::<MatrixVariant>().is_err());
    }

    #[test]
    fn blocks_variant_overrides_config() {
        let mut cfg = ExperimentConfig::default();
        cfg.model.variant = Variant::Concat;
        cfg.model.blocks = 3;
        MatrixVariant::Blocks(1).apply(&mut cfg);
        assert_eq!(cfg.model.variant, Variant::Proposed);
        assert_eq!(cfg.model.blocks, 1);
    }
}
