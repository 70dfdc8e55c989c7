//! Dataset generation and serialization.
//!
//! A dataset is a header (rig, seed, config hash, observation width) plus a
//! stream of fixed-layout pair records. Generation is deterministic: every
//! (subject, sample) slot derives its own RNG seed from the master seed, so
//! identical (config, seed) inputs give byte-identical files.

use super::observe::{
    make_pair, sample_identity, sample_world, ObsConfig, ObservationModel, SamplePair,
    ViewObservation,
};
use super::probe::{discriminability_check, DiscriminabilityReport};
use super::rig::{build_rig, CameraRig, CameraSplit, RigCamera, RigConfig};
use super::DataError;
use crate::geometry::{GazeVector, NormalizationDistance, RotationMatrix};
use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

const BINARY_MAGIC: &[u8; 4] = b"RFDS";
const TEXT_MAGIC: &str = "rfds-text";
const FORMAT_VERSION: u32 = 1;

/// Generation parameters: rig layout, observation model, and pair counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub subjects: u32,
    pub samples_per_subject: u32,
    pub folds: u32,
    pub train_pairs_per_sample: u32,
    pub test_pairs_per_sample: u32,
    pub rig: RigConfig,
    pub observation: ObsConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            subjects: 6,
            samples_per_subject: 250,
            folds: 3,
            train_pairs_per_sample: 1,
            test_pairs_per_sample: 1,
            rig: RigConfig::default(),
            observation: ObsConfig::default(),
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.subjects == 0 || self.samples_per_subject == 0 {
            return Err(DataError::InvalidConfig(
                "subjects and samples_per_subject must be positive".into(),
            ));
        }
        if self.folds == 0 || self.folds > self.subjects {
            return Err(DataError::InvalidConfig(format!(
                "folds must be in 1..=subjects, got {} for {} subjects",
                self.folds, self.subjects
            )));
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML serialization.
    pub fn hash(&self) -> [u8; 32] {
        let text = toml::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        hasher.finalize().into()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub version: u32,
    pub seed: u64,
    pub config_hash: [u8; 32],
    pub rig: CameraRig,
    pub obs_width: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub pairs: Vec<SamplePair>,
}

/// Summary statistics emitted alongside generation.
#[derive(Debug, Clone)]
pub struct GenerationReport {
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub occluded_fraction: f64,
    pub discriminability: DiscriminabilityReport,
}

impl Dataset {
    pub fn train_pairs_for_fold(&self, eval_fold: u32) -> Vec<&SamplePair> {
        self.pairs
            .iter()
            .filter(|p| p.is_train_pair() && p.fold != eval_fold)
            .collect()
    }

    /// Held-out subjects, training cameras: the "seen" evaluation set.
    pub fn seen_pairs_for_fold(&self, eval_fold: u32) -> Vec<&SamplePair> {
        self.pairs
            .iter()
            .filter(|p| p.is_train_pair() && p.fold == eval_fold)
            .collect()
    }

    /// Held-out subjects, test cameras: the "unseen" evaluation set.
    pub fn unseen_pairs_for_fold(&self, eval_fold: u32) -> Vec<&SamplePair> {
        self.pairs
            .iter()
            .filter(|p| !p.is_train_pair() && p.fold == eval_fold)
            .collect()
    }

    pub fn obs_width(&self) -> usize {
        self.header.obs_width as usize
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Per-slot seed derivation; order-independent so generation could run
/// per-sample in parallel without changing the output.
fn derive_seed(base: u64, subject: u32, sample: u32, lane: u32) -> u64 {
    splitmix64(
        base ^ splitmix64(subject as u64 ^ 0xA5A5_5A5A)
            ^ splitmix64((sample as u64) << 20)
            ^ splitmix64((lane as u64) << 40),
    )
}

/// Generates the benchmark: subject-disjoint folds, training pairs drawn only
/// from training cameras, test pairs only from test cameras.
pub fn generate_dataset(
    config: &DataConfig,
    seed: u64,
) -> Result<(Dataset, GenerationReport), DataError> {
    config.validate()?;
    let rig = build_rig(&config.rig, splitmix64(seed ^ 0x5217))?;
    let model = ObservationModel::new(
        config.observation.clone(),
        &mut ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x0B5E)),
    );

    let train_cams = rig.ids_in(false);
    let test_cams = rig.ids_in(true);
    if train_cams.len() < 2 || test_cams.len() < 2 {
        return Err(DataError::InvalidConfig(
            "need at least two cameras per split to form pairs".into(),
        ));
    }

    let mut pairs = Vec::new();
    for subject in 0..config.subjects {
        let fold = subject % config.folds;
        let identity = sample_identity(
            &mut ChaCha8Rng::seed_from_u64(derive_seed(seed, subject, u32::MAX, 0)),
            config.observation.identity_width,
        );
        for sample_idx in 0..config.samples_per_subject {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, subject, sample_idx, 1));
            let world = sample_world(
                &mut rng,
                subject,
                &identity,
                config.observation.gaze_cone_deg,
            );
            for _ in 0..config.train_pairs_per_sample {
                let cams = pick_two(&train_cams, &mut rng);
                let mut pair = make_pair(&rig, &model, cams.0, cams.1, &world, &mut rng)?;
                pair.fold = fold;
                pairs.push(pair);
            }
            for _ in 0..config.test_pairs_per_sample {
                let cams = pick_two(&test_cams, &mut rng);
                let mut pair = make_pair(&rig, &model, cams.0, cams.1, &world, &mut rng)?;
                pair.fold = fold;
                pairs.push(pair);
            }
        }
    }

    let header = DatasetHeader {
        version: FORMAT_VERSION,
        seed,
        config_hash: config.hash(),
        rig,
        obs_width: config.observation.observation_width() as u32,
    };
    let dataset = Dataset { header, pairs };

    let train_refs: Vec<&SamplePair> =
        dataset.pairs.iter().filter(|p| p.is_train_pair()).collect();
    let test_refs: Vec<&SamplePair> = dataset
        .pairs
        .iter()
        .filter(|p| !p.is_train_pair())
        .collect();
    let occluded = dataset
        .pairs
        .iter()
        .flat_map(|p| [p.obs_tgt.occluded, p.obs_ref.occluded])
        .filter(|&o| o)
        .count();
    let report = GenerationReport {
        train_pairs: train_refs.len(),
        test_pairs: test_refs.len(),
        occluded_fraction: occluded as f64 / (2 * dataset.pairs.len()) as f64,
        discriminability: discriminability_check(&train_refs, &test_refs, 4000),
    };
    Ok((dataset, report))
}

fn pick_two(ids: &[u32], rng: &mut ChaCha8Rng) -> (u32, u32) {
    let mut chosen = ids.choose_multiple(rng, 2);
    let a = *chosen.next().expect("two cameras");
    let b = *chosen.next().expect("two cameras");
    (a, b)
}

// ---------------------------------------------------------------------------
// Binary format.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Binary,
    Text,
}

impl std::str::FromStr for FileFormat {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary" => Ok(FileFormat::Binary),
            "text" => Ok(FileFormat::Text),
            other => Err(DataError::Parse(format!("unknown format {other:?}"))),
        }
    }
}

struct BinWriter<W: Write> {
    inner: W,
}

impl<W: Write> BinWriter<W> {
    fn u8(&mut self, v: u8) -> std::io::Result<()> {
        self.inner.write_all(&[v])
    }
    fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }
    fn f64s(&mut self, vs: &[f64]) -> std::io::Result<()> {
        for v in vs {
            self.f64(*v)?;
        }
        Ok(())
    }
}

struct BinReader<R: Read> {
    inner: R,
}

impl<R: Read> BinReader<R> {
    fn u8(&mut self) -> std::io::Result<u8> {
        let mut b = [0u8; 1];
        self.inner.read_exact(&mut b)?;
        Ok(b[0])
    }
    fn u32(&mut self) -> std::io::Result<u32> {
        let mut b = [0u8; 4];
        self.inner.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
    fn u64(&mut self) -> std::io::Result<u64> {
        let mut b = [0u8; 8];
        self.inner.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }
    fn f64(&mut self) -> std::io::Result<f64> {
        let mut b = [0u8; 8];
        self.inner.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
    fn f64s(&mut self, n: usize) -> std::io::Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

impl Dataset {
    pub fn save(&self, path: &Path, format: FileFormat) -> Result<(), DataError> {
        let file = std::fs::File::create(path)?;
        match format {
            FileFormat::Binary => self.write_binary(BufWriter::new(file)),
            FileFormat::Text => self.write_text(BufWriter::new(file)),
        }
    }

    /// Detects the format from the magic bytes.
    pub fn load(path: &Path) -> Result<Dataset, DataError> {
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(BINARY_MAGIC) {
            Self::read_binary(&bytes[..])
        } else {
            Self::read_text(BufReader::new(&bytes[..]))
        }
    }

    fn write_binary<W: Write>(&self, w: W) -> Result<(), DataError> {
        let mut w = BinWriter { inner: w };
        w.inner.write_all(BINARY_MAGIC)?;
        w.u32(self.header.version)?;
        w.u64(self.header.seed)?;
        w.inner.write_all(&self.header.config_hash)?;
        w.f64(self.header.rig.d.value())?;
        w.u32(self.header.rig.cameras.len() as u32)?;
        for cam in &self.header.rig.cameras {
            w.u32(cam.id)?;
            w.u8(cam.split.tag())?;
            w.f64(cam.polar_deg)?;
            w.f64(cam.azimuth_deg)?;
            w.f64(cam.roll_deg)?;
            w.f64s(&cam.rotation.to_row_major())?;
        }
        w.u32(self.header.obs_width)?;
        w.u64(self.pairs.len() as u64)?;
        for p in &self.pairs {
            w.u32(p.subject)?;
            w.u32(p.fold)?;
            w.u32(p.cam_tgt)?;
            w.u32(p.cam_ref)?;
            w.u8(p.tgt_split.tag())?;
            w.u8(p.ref_split.tag())?;
            w.u8(p.obs_tgt.occluded as u8)?;
            w.u8(p.obs_ref.occluded as u8)?;
            w.f64s(&p.rotation.to_row_major())?;
            w.f64s(&p.gt_tgt.to_array())?;
            w.f64s(&p.gt_ref.to_array())?;
            w.f64s(&p.obs_tgt.features)?;
            w.f64s(&p.obs_ref.features)?;
        }
        Ok(())
    }

    fn read_binary<R: Read>(r: R) -> Result<Dataset, DataError> {
        let mut r = BinReader { inner: r };
        let mut magic = [0u8; 4];
        r.inner.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(DataError::Parse("bad dataset magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(DataError::Parse(format!(
                "unsupported dataset version {version}"
            )));
        }
        let seed = r.u64()?;
        let mut config_hash = [0u8; 32];
        r.inner.read_exact(&mut config_hash)?;
        let d = NormalizationDistance::new(r.f64()?)?;
        let n_cams = r.u32()? as usize;
        let mut cameras = Vec::with_capacity(n_cams);
        for _ in 0..n_cams {
            let id = r.u32()?;
            let split = CameraSplit::from_tag(r.u8()?)?;
            let polar_deg = r.f64()?;
            let azimuth_deg = r.f64()?;
            let roll_deg = r.f64()?;
            let rot = r.f64s(9)?;
            let rotation = RotationMatrix::from_row_major(&rot.try_into().expect("9 values"))?;
            cameras.push(RigCamera {
                id,
                rotation,
                polar_deg,
                azimuth_deg,
                roll_deg,
                split,
            });
        }
        let obs_width = r.u32()?;
        let n_pairs = r.u64()? as usize;
        let mut pairs = Vec::with_capacity(n_pairs);
        for _ in 0..n_pairs {
            let subject = r.u32()?;
            let fold = r.u32()?;
            let cam_tgt = r.u32()?;
            let cam_ref = r.u32()?;
            let tgt_split = CameraSplit::from_tag(r.u8()?)?;
            let ref_split = CameraSplit::from_tag(r.u8()?)?;
            let occ_tgt = r.u8()? != 0;
            let occ_ref = r.u8()? != 0;
            let rot = r.f64s(9)?;
            let rotation = RotationMatrix::from_row_major(&rot.try_into().expect("9 values"))?;
            let gt_tgt = read_gaze(&mut r)?;
            let gt_ref = read_gaze(&mut r)?;
            let feat_tgt = r.f64s(obs_width as usize)?;
            let feat_ref = r.f64s(obs_width as usize)?;
            pairs.push(SamplePair {
                subject,
                fold,
                cam_tgt,
                cam_ref,
                tgt_split,
                ref_split,
                rotation,
                gt_tgt,
                gt_ref,
                obs_tgt: ViewObservation {
                    camera: cam_tgt,
                    features: feat_tgt,
                    occluded: occ_tgt,
                },
                obs_ref: ViewObservation {
                    camera: cam_ref,
                    features: feat_ref,
                    occluded: occ_ref,
                },
            });
        }
        Ok(Dataset {
            header: DatasetHeader {
                version,
                seed,
                config_hash,
                rig: CameraRig { cameras, d },
                obs_width,
            },
            pairs,
        })
    }

    // -----------------------------------------------------------------------
    // Text format: whitespace-separated, shortest round-trip float encoding.
    // -----------------------------------------------------------------------

    fn write_text<W: Write>(&self, mut w: W) -> Result<(), DataError> {
        writeln!(w, "{TEXT_MAGIC} {}", self.header.version)?;
        writeln!(w, "seed {}", self.header.seed)?;
        writeln!(w, "config_hash {}", hex(&self.header.config_hash))?;
        writeln!(w, "d {}", self.header.rig.d.value())?;
        writeln!(w, "cameras {}", self.header.rig.cameras.len())?;
        for cam in &self.header.rig.cameras {
            write!(
                w,
                "camera {} {} {} {} {}",
                cam.id,
                cam.split.name(),
                cam.polar_deg,
                cam.azimuth_deg,
                cam.roll_deg
            )?;
            for v in cam.rotation.to_row_major() {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        writeln!(w, "obs_width {}", self.header.obs_width)?;
        writeln!(w, "pairs {}", self.pairs.len())?;
        for p in &self.pairs {
            write!(
                w,
                "pair {} {} {} {} {} {} {} {}",
                p.subject,
                p.fold,
                p.cam_tgt,
                p.cam_ref,
                p.tgt_split.name(),
                p.ref_split.name(),
                p.obs_tgt.occluded as u8,
                p.obs_ref.occluded as u8
            )?;
            for v in p.rotation.to_row_major() {
                write!(w, " {v}")?;
            }
            for v in p.gt_tgt.to_array() {
                write!(w, " {v}")?;
            }
            for v in p.gt_ref.to_array() {
                write!(w, " {v}")?;
            }
            for v in &p.obs_tgt.features {
                write!(w, " {v}")?;
            }
            for v in &p.obs_ref.features {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    fn read_text<R: BufRead>(r: R) -> Result<Dataset, DataError> {
        let mut lines = r.lines();
        let mut next_line = || -> Result<String, DataError> {
            lines
                .next()
                .ok_or_else(|| DataError::Parse("unexpected end of dataset text".into()))?
                .map_err(DataError::from)
        };

        let head = next_line()?;
        let mut parts = head.split_whitespace();
        if parts.next() != Some(TEXT_MAGIC) {
            return Err(DataError::Parse("bad text dataset magic".into()));
        }
        let version: u32 = parse_field(parts.next(), "version")?;
        let seed: u64 = parse_kv(&next_line()?, "seed")?;
        let hash_line = next_line()?;
        let config_hash = unhex(
            hash_line
                .strip_prefix("config_hash ")
                .ok_or_else(|| DataError::Parse("missing config_hash".into()))?,
        )?;
        let d: f64 = parse_kv(&next_line()?, "d")?;
        let n_cams: usize = parse_kv(&next_line()?, "cameras")?;
        let mut cameras = Vec::with_capacity(n_cams);
        for _ in 0..n_cams {
            let line = next_line()?;
            let mut t = line.split_whitespace();
            expect_token(&mut t, "camera")?;
            let id: u32 = parse_field(t.next(), "camera id")?;
            let split = CameraSplit::from_name(
                t.next()
                    .ok_or_else(|| DataError::Parse("missing camera split".into()))?,
            )?;
            let polar_deg: f64 = parse_field(t.next(), "polar")?;
            let azimuth_deg: f64 = parse_field(t.next(), "azimuth")?;
            let roll_deg: f64 = parse_field(t.next(), "roll")?;
            let rotation = parse_rotation(&mut t)?;
            cameras.push(RigCamera {
                id,
                rotation,
                polar_deg,
                azimuth_deg,
                roll_deg,
                split,
            });
        }
        let obs_width: u32 = parse_kv(&next_line()?, "obs_width")?;
        let n_pairs: usize = parse_kv(&next_line()?, "pairs")?;
        let mut pairs = Vec::with_capacity(n_pairs);
        for _ in 0..n_pairs {
            let line = next_line()?;
            let mut t = line.split_whitespace();
            expect_token(&mut t, "pair")?;
            let subject: u32 = parse_field(t.next(), "subject")?;
            let fold: u32 = parse_field(t.next(), "fold")?;
            let cam_tgt: u32 = parse_field(t.next(), "cam_tgt")?;
            let cam_ref: u32 = parse_field(t.next(), "cam_ref")?;
            let tgt_split = CameraSplit::from_name(
                t.next()
                    .ok_or_else(|| DataError::Parse("missing tgt split".into()))?,
            )?;
            let ref_split = CameraSplit::from_name(
                t.next()
                    .ok_or_else(|| DataError::Parse("missing ref split".into()))?,
            )?;
            let occ_tgt = parse_field::<u8>(t.next(), "occ_tgt")? != 0;
            let occ_ref = parse_field::<u8>(t.next(), "occ_ref")? != 0;
            let rotation = parse_rotation(&mut t)?;
            let gt_tgt = parse_gaze(&mut t)?;
            let gt_ref = parse_gaze(&mut t)?;
            let mut feat_tgt = Vec::with_capacity(obs_width as usize);
            for _ in 0..obs_width {
                feat_tgt.push(parse_field(t.next(), "obs_tgt feature")?);
            }
            let mut feat_ref = Vec::with_capacity(obs_width as usize);
            for _ in 0..obs_width {
                feat_ref.push(parse_field(t.next(), "obs_ref feature")?);
            }
            pairs.push(SamplePair {
                subject,
                fold,
                cam_tgt,
                cam_ref,
                tgt_split,
                ref_split,
                rotation,
                gt_tgt,
                gt_ref,
                obs_tgt: ViewObservation {
                    camera: cam_tgt,
                    features: feat_tgt,
                    occluded: occ_tgt,
                },
                obs_ref: ViewObservation {
                    camera: cam_ref,
                    features: feat_ref,
                    occluded: occ_ref,
                },
            });
        }
        Ok(Dataset {
            header: DatasetHeader {
                version,
                seed,
                config_hash,
                rig: CameraRig {
                    cameras,
                    d: NormalizationDistance::new(d)?,
                },
                obs_width,
            },
            pairs,
        })
    }
}

fn read_gaze<R: Read>(r: &mut BinReader<R>) -> Result<GazeVector, DataError> {
    let v = r.f64s(3)?;
    Ok(GazeVector::new(Vector3::new(v[0], v[1], v[2]))?)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Result<[u8; 32], DataError> {
    if s.len() != 64 {
        return Err(DataError::Parse("config hash must be 64 hex chars".into()));
    }
    let mut out = [0u8; 32];
    for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
        let hi = (chunk[0] as char)
            .to_digit(16)
            .ok_or_else(|| DataError::Parse("bad hex".into()))?;
        let lo = (chunk[1] as char)
            .to_digit(16)
            .ok_or_else(|| DataError::Parse("bad hex".into()))?;
        out[i] = (hi * 16 + lo) as u8;
    }
    Ok(out)
}

fn parse_field<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T, DataError> {
    tok.ok_or_else(|| DataError::Parse(format!("missing {what}")))?
        .parse()
        .map_err(|_| DataError::Parse(format!("bad {what}")))
}

fn parse_kv<T: std::str::FromStr>(line: &str, key: &str) -> Result<T, DataError> {
    let mut t = line.split_whitespace();
    expect_token(&mut t, key)?;
    parse_field(t.next(), key)
}

fn expect_token<'a>(
    t: &mut impl Iterator<Item = &'a str>,
    expected: &str,
) -> Result<(), DataError> {
    match t.next() {
        Some(tok) if tok == expected => Ok(()),
        other => Err(DataError::Parse(format!(
            "expected {expected:?}, got {other:?}"
        ))),
    }
}

fn parse_rotation<'a>(
    t: &mut impl Iterator<Item = &'a str>,
) -> Result<RotationMatrix, DataError> {
    let mut v = [0.0f64; 9];
    for slot in v.iter_mut() {
        *slot = parse_field(t.next(), "rotation entry")?;
    }
    Ok(RotationMatrix::from_row_major(&v)?)
}

fn parse_gaze<'a>(t: &mut impl Iterator<Item = &'a str>) -> Result<GazeVector, DataError> {
    let x: f64 = parse_field(t.next(), "gaze x")?;
    let y: f64 = parse_field(t.next(), "gaze y")?;
    let z: f64 = parse_field(t.next(), "gaze z")?;
    Ok(GazeVector::new(Vector3::new(x, y, z))?)
}

/// Applies `rng`-keyed rotation noise to a dataset's pair rotations;
/// convenience for sensitivity sweeps over stored data.
pub fn perturb_dataset_rotations(
    dataset: &Dataset,
    noise_level_rad: f64,
    seed: u64,
) -> Vec<RotationMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dataset
        .pairs
        .iter()
        .map(|p| super::observe::perturb_rotation(&p.rotation, noise_level_rad, &mut rng))
        .collect()
}
