//! Training and evaluation drivers.
//!
//! Training alternates, per minibatch, between estimating matches with the
//! current metric and taking one ADAM step on the resulting loss. One
//! minibatch is every center row of one stereo pair. Ground-truth paths in
//! the manifest are never opened here except by [`evaluate`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adam::{AdamConfig, AdamState};
use crate::checkpoint;
use crate::data::{load_ground_truth, sample_rows, write_file, Manifest, RowSampling, StereoPair};
use crate::dp::MatchPath;
use crate::embedding::{EmbeddingNetwork, FEATURES};
use crate::error::{Error, Result};
use crate::eval::{dump_similarity_image, wta_error_rate, WtaReport, DEFAULT_THRESHOLD};
use crate::losses::{LossConfig, Method};
use crate::pipeline::{
    estimate_matches, minibatch_gradients, predict_disparities, prepare_image, row_similarity, NegativeSource,
};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Negatives {
    SamePair,
    OtherPair,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub loss: LossConfig,
    /// Overrides the per-pair manifest value when set.
    pub d_max: Option<usize>,
    pub patch_size: usize,
    pub features: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// 0 means every valid row of each image.
    pub rows_per_image: usize,
    pub negatives: Negatives,
    pub manifest_path: Option<PathBuf>,
    /// Final checkpoint location; defaults to `<out>/model.ckpt`.
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            d_max: None,
            patch_size: 9,
            features: FEATURES,
            epochs: 10,
            seed: 0,
            adam: AdamConfig::default(),
            rows_per_image: 0,
            negatives: Negatives::SamePair,
            manifest_path: None,
            checkpoint_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.patch_size != 9 && self.patch_size != 11 {
            return Err(Error::Config(format!("patch_size must be 9 or 11, got {}", self.patch_size)));
        }
        if self.features == 0 {
            return Err(Error::Config("features must be positive".into()));
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::Config("invalid ADAM settings".into()));
        }
        Ok(())
    }

    /// Flat `key = value` text; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut offset = 0;
        for raw in text.split_inclusive('\n') {
            let at = offset;
            offset += raw.len();
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format(at, format!("expected key = value, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = || Error::format(at, format!("invalid value `{value}` for `{key}`"));
            macro_rules! num {
                () => {
                    value.parse().map_err(|_| bad())?
                };
            }
            match key {
                "method" => cfg.loss.method = value.parse::<Method>()?,
                "mu" => cfg.loss.mu = num!(),
                "t_sup" => cfg.loss.t_sup = num!(),
                "t_occ" => cfg.loss.t_occ = num!(),
                "d_max" => cfg.d_max = Some(num!()),
                "patch_size" => cfg.patch_size = num!(),
                "features" => cfg.features = num!(),
                "epochs" => cfg.epochs = num!(),
                "seed" => cfg.seed = num!(),
                "lr" => cfg.adam.lr = num!(),
                "beta1" => cfg.adam.beta1 = num!(),
                "beta2" => cfg.adam.beta2 = num!(),
                "eps" => cfg.adam.eps = num!(),
                "rows_per_image" => cfg.rows_per_image = num!(),
                "negatives" => {
                    cfg.negatives = match value {
                        "same-pair" | "same_pair" => Negatives::SamePair,
                        "other-pair" | "other_pair" => Negatives::OtherPair,
                        _ => return Err(bad()),
                    }
                }
                "manifest_path" => cfg.manifest_path = Some(PathBuf::from(value)),
                "checkpoint_path" => cfg.checkpoint_path = Some(PathBuf::from(value)),
                other => return Err(Error::format(at, format!("unknown key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "method = {}", self.loss.method);
        let _ = writeln!(s, "mu = {}", self.loss.mu);
        let _ = writeln!(s, "t_sup = {}", self.loss.t_sup);
        let _ = writeln!(s, "t_occ = {}", self.loss.t_occ);
        if let Some(d) = self.d_max {
            let _ = writeln!(s, "d_max = {d}");
        }
        let _ = writeln!(s, "patch_size = {}", self.patch_size);
        let _ = writeln!(s, "features = {}", self.features);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "lr = {}", self.adam.lr);
        let _ = writeln!(s, "beta1 = {}", self.adam.beta1);
        let _ = writeln!(s, "beta2 = {}", self.adam.beta2);
        let _ = writeln!(s, "eps = {}", self.adam.eps);
        let _ = writeln!(s, "rows_per_image = {}", self.rows_per_image);
        let neg = match self.negatives {
            Negatives::SamePair => "same-pair",
            Negatives::OtherPair => "other-pair",
        };
        let _ = writeln!(s, "negatives = {neg}");
        if let Some(p) = &self.manifest_path {
            let _ = writeln!(s, "manifest_path = {}", p.display());
        }
        if let Some(p) = &self.checkpoint_path {
            let _ = writeln!(s, "checkpoint_path = {}", p.display());
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub network: EmbeddingNetwork,
    pub epochs: Vec<EpochRecord>,
    pub checkpoint: PathBuf,
}

pub const LOSS_LOG: &str = "loss.log";
pub const TIMING_LOG: &str = "timing.log";

pub fn initial_network(cfg: &TrainConfig) -> Result<EmbeddingNetwork> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    EmbeddingNetwork::random(cfg.patch_size, cfg.features, &mut rng)
}

fn batch_seed(seed: u64, epoch: usize, pair: usize) -> u64 {
    seed ^ ((epoch as u64) << 32 | pair as u64).wrapping_mul(0xD134_2543_DE82_EF95)
}

struct PreparedPair {
    id: String,
    left: Tensor,
    right: Tensor,
    height: usize,
    d_max: usize,
}

/// Trains from scratch on the pairs of `manifest`, writing checkpoints and
/// logs into `out_dir`.
pub fn train(cfg: &TrainConfig, manifest: &Manifest, out_dir: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    if manifest.entries.is_empty() {
        return Err(Error::Config("manifest lists no stereo pairs".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let checkpoint_path = cfg.checkpoint_path.clone().unwrap_or_else(|| out_dir.join("model.ckpt"));

    let pairs = manifest
        .entries
        .iter()
        .map(|e| {
            let pair = e.load_pair()?;
            let d_max = cfg.d_max.unwrap_or(pair.d_max);
            Ok(PreparedPair {
                id: pair.id.clone(),
                left: prepare_image(&pair.left),
                right: prepare_image(&pair.right),
                height: pair.height(),
                d_max,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut net = initial_network(cfg)?;
    let mut adam = AdamState::new(cfg.adam);
    checkpoint::save(&net, &checkpoint_path)?;
    checkpoint::save(&net, &out_dir.join("model_epoch000.ckpt"))?;

    let mut loss_log = String::new();
    let mut timing_log = String::new();
    let mut records = Vec::new();
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let mut total = 0.0;
        for (k, pair) in pairs.iter().enumerate() {
            let seed = batch_seed(cfg.seed, epoch, k);
            let mode = match cfg.rows_per_image {
                0 => RowSampling::Exhaustive,
                n => RowSampling::Random(n),
            };
            let rows = sample_rows(pair.height, cfg.patch_size, seed, mode)?;
            let negatives = match cfg.negatives {
                Negatives::OtherPair if pairs.len() > 1 => NegativeSource::Other(&pairs[(k + 1) % pairs.len()].right),
                _ => NegativeSource::SamePair,
            };
            let (stats, grads) =
                minibatch_gradients(&net, &pair.left, &pair.right, negatives, &rows, pair.d_max, &cfg.loss)?;
            if !stats.mean_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    pair: pair.id.clone(),
                });
            }
            log::debug!(
                "epoch {epoch} pair {} loss {:.6} suppressed {} degenerate {}",
                pair.id,
                stats.mean_loss,
                stats.suppressed,
                stats.degenerate_lines
            );
            total += stats.mean_loss;
            net.load_grads(&grads)?;
            adam.step(&mut net.parameters_mut())?;
        }
        let mean_loss = total / pairs.len() as f64;
        let seconds = started.elapsed().as_secs_f64();
        log::info!("epoch {epoch}: mean loss {mean_loss:.6} ({seconds:.1}s)");
        let _ = writeln!(loss_log, "{epoch} {mean_loss}");
        let _ = writeln!(timing_log, "{epoch} {seconds:.3}");
        write_file(&out_dir.join(LOSS_LOG), loss_log.as_bytes())?;
        write_file(&out_dir.join(TIMING_LOG), timing_log.as_bytes())?;
        checkpoint::save(&net, &checkpoint_path)?;
        checkpoint::save(&net, &out_dir.join(format!("model_epoch{epoch:03}.ckpt")))?;
        records.push(EpochRecord {
            epoch,
            mean_loss,
            seconds,
        });
    }
    if cfg.epochs == 0 {
        write_file(&out_dir.join(LOSS_LOG), b"")?;
        write_file(&out_dir.join(TIMING_LOG), b"")?;
    }
    Ok(TrainOutcome {
        network: net,
        epochs: records,
        checkpoint: checkpoint_path,
    })
}

#[derive(Clone, Debug, Default)]
pub struct EvalOutcome {
    pub report: WtaReport,
    pub per_pair: Vec<(String, WtaReport)>,
    /// Pairs without ground truth.
    pub skipped: Vec<String>,
}

/// WTA error over every manifest pair that has ground truth.
pub fn evaluate(net: &EmbeddingNetwork, manifest: &Manifest) -> Result<EvalOutcome> {
    let mut out = EvalOutcome::default();
    for entry in &manifest.entries {
        let Some((gt_path, format)) = &entry.ground_truth else {
            log::warn!("skipping {}: no ground truth", entry.id());
            out.skipped.push(entry.id());
            continue;
        };
        let pair = entry.load_pair()?;
        let gt = load_ground_truth(gt_path, *format)?;
        let pred = predict_disparities(net, &pair)?;
        let report = wta_error_rate(&pred, &gt, DEFAULT_THRESHOLD)?;
        out.report.merge(&report);
        out.per_pair.push((pair.id, report));
    }
    Ok(out)
}

pub const SIMILARITY_IMAGE: &str = "similarity.pgm";
pub const PATH_DUMP: &str = "path.txt";

/// Writes the rendered `S^{r+}` of one row and its current-metric match path.
pub fn inspect(net: &EmbeddingNetwork, pair: &StereoPair, row: usize, t_occ: usize, out_dir: &Path) -> Result<MatchPath> {
    let half = net.half_patch();
    if row < half || row + half >= pair.height() {
        return Err(Error::Config(format!(
            "row {row} has no descriptors; valid rows are {half}..{}",
            pair.height().saturating_sub(half)
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let s = row_similarity(net, pair, row)?;
    dump_similarity_image(&s, &out_dir.join(SIMILARITY_IMAGE))?;
    let path = estimate_matches(&s, t_occ)?;
    write_file(&out_dir.join(PATH_DUMP), path.dump().as_bytes())?;
    Ok(path)
}
