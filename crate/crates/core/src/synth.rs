//! Synthetic rectified stereo pairs with exact disparity and occlusion.
//!
//! The scene is a textured background plane plus a few fronto-parallel
//! rectangles floating in front of it. Every layer carries its own blurred
//! noise texture wide enough to be sampled from both views, so regions
//! revealed in the right view show the background continuing behind the
//! rectangles.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{pfm, pgm, png_io, write_file, GrayImage, GroundTruthDisparity, GtFormat, Manifest, ManifestEntry, Occlusion, StereoPair};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub pairs: usize,
    pub width: usize,
    pub height: usize,
    pub d_max: usize,
    /// Random gain/offset on the right view.
    pub perturb: bool,
    /// Replace the layered scene by one plane at this disparity.
    pub constant_disparity: Option<usize>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            pairs: 20,
            width: 256,
            height: 128,
            d_max: 16,
            perturb: true,
            constant_disparity: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("synthetic images need a non-zero size".into()));
        }
        if 4 * self.d_max >= self.width {
            return Err(Error::Config(format!(
                "d_max {} must be below width / 4 ({})",
                self.d_max,
                self.width / 4
            )));
        }
        if let Some(k) = self.constant_disparity {
            if k > self.d_max {
                return Err(Error::Config(format!("constant disparity {k} exceeds d_max {}", self.d_max)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticPair {
    pub pair: StereoPair,
    pub ground_truth: GroundTruthDisparity,
}

struct Layer {
    disparity: usize,
    /// `[y0, y1) x [x0, x1)` in left-image coordinates; the background
    /// covers everything.
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<isize>,
    texture: Vec<f32>,
}

impl Layer {
    fn covers(&self, y: usize, x: isize) -> bool {
        self.rows.contains(&y) && self.cols.contains(&x)
    }
}

/// Relative contrast of the fine, match-bearing texture against the coarse
/// shading it rides on.
pub const FINE_CONTRAST: f32 = 0.06;
/// Box-blur radius of the coarse shading component.
const COARSE_RADIUS: usize = 8;
/// Standard deviation of the right-view sensor noise under perturbation.
pub const NOISE_SIGMA: f32 = 0.02;

fn blur_rows(src: &[f32], width: usize, height: usize, radius: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; src.len()];
    for y in 0..height {
        for x in 0..width {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(width - 1);
            let sum: f32 = src[y * width + lo..=y * width + hi].iter().sum();
            out[y * width + x] = sum / (hi - lo + 1) as f32;
        }
    }
    out
}

fn blur_cols(src: &[f32], width: usize, height: usize, radius: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; src.len()];
    for y in 0..height {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(height - 1);
        for x in 0..width {
            let sum: f32 = (lo..=hi).map(|yy| src[yy * width + x]).sum();
            out[y * width + x] = sum / (hi - lo + 1) as f32;
        }
    }
    out
}

fn stretch(values: &mut [f32]) {
    let (lo, hi) = values.iter().fold((f32::MAX, f32::MIN), |(l, h), &v| (l.min(v), h.max(v)));
    let span = (hi - lo).max(1e-6);
    values.iter_mut().for_each(|v| *v = (*v - lo) / span);
}

fn smoothed_noise(width: usize, height: usize, radius: usize, passes: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let mut v: Vec<f32> = (0..width * height).map(|_| rng.random::<f32>()).collect();
    for _ in 0..passes {
        v = blur_cols(&blur_rows(&v, width, height, radius), width, height, radius);
    }
    stretch(&mut v);
    v
}

/// Coarse smooth shading plus a faint fine-grained texture, in `[0, 1]`.
fn texture(width: usize, height: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let coarse = smoothed_noise(width, height, COARSE_RADIUS, 2, rng);
    let fine = smoothed_noise(width, height, 1, 1, rng);
    coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| (1.0 - FINE_CONTRAST) * c + FINE_CONTRAST * f)
        .collect()
}

/// Right-view radiometric change: smooth gain and offset ramps plus
/// zero-mean sensor noise.
fn perturb_view(view: &mut [f32], width: usize, height: usize, rng: &mut ChaCha8Rng) {
    let gain = rng.random_range(0.85f32..1.15);
    let offset = rng.random_range(-0.08f32..0.08);
    let gain_ramp = [rng.random_range(-0.15f32..0.15), rng.random_range(-0.15f32..0.15)];
    let offset_ramp = [rng.random_range(-0.1f32..0.1), rng.random_range(-0.1f32..0.1)];
    for y in 0..height {
        let v = y as f32 / height as f32 - 0.5;
        for x in 0..width {
            let u = x as f32 / width as f32 - 0.5;
            // sum of four uniforms: variance 4/12 per unit width
            let noise: f32 = (0..4).map(|_| rng.random::<f32>() - 0.5).sum::<f32>() * 3f32.sqrt();
            let g = gain + gain_ramp[0] * u + gain_ramp[1] * v;
            let o = offset + offset_ramp[0] * u + offset_ramp[1] * v;
            let p = &mut view[y * width + x];
            *p = (*p * g + o + NOISE_SIGMA * noise).clamp(0.0, 1.0);
        }
    }
}

/// Generates pair number `index` of the dataset described by `cfg`.
pub fn generate_pair(cfg: &SynthConfig, index: usize) -> Result<SyntheticPair> {
    cfg.validate()?;
    let (w, h, d_max) = (cfg.width, cfg.height, cfg.d_max);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64));
    // textures are indexed by left-image column and extend d_max columns
    // past the right edge, where right-view lookups x_r + d can land
    let tex_w = w + d_max;

    let mut layers = Vec::new();
    let background = match cfg.constant_disparity {
        Some(k) => k,
        None => rng.random_range(1..=(d_max / 2).max(1)),
    };
    layers.push(Layer {
        disparity: background,
        rows: 0..h,
        cols: isize::MIN..isize::MAX,
        texture: texture(tex_w, h, &mut rng),
    });
    if cfg.constant_disparity.is_none() && background < d_max {
        let count = rng.random_range(2..=4);
        for _ in 0..count {
            let rw = rng.random_range(w / 8..=w / 3).max(1);
            let rh = rng.random_range(h / 6..=h / 2).max(1);
            let x0 = rng.random_range(0..w.saturating_sub(rw).max(1)) as isize;
            let y0 = rng.random_range(0..h.saturating_sub(rh).max(1));
            layers.push(Layer {
                disparity: rng.random_range(background + 1..=d_max),
                rows: y0..y0 + rh,
                cols: x0..x0 + rw as isize,
                texture: texture(tex_w, h, &mut rng),
            });
        }
    }
    // frontmost (largest disparity) first; stable for equal disparities
    layers.sort_by_key(|l| std::cmp::Reverse(l.disparity));

    let front = |y: usize, x: isize| layers.iter().position(|l| l.covers(y, x)).expect("background covers all");
    let sample = |layer: &Layer, y: usize, x: isize| layer.texture[y * tex_w + x as usize];

    let mut left = vec![0.0f32; w * h];
    let mut right = vec![0.0f32; w * h];
    let mut disparity = vec![0.0f32; w * h];
    let mut occlusion = vec![Occlusion::Visible; w * h];
    for y in 0..h {
        for x in 0..w {
            let li = front(y, x as isize);
            let layer = &layers[li];
            left[y * w + x] = sample(layer, y, x as isize);
            disparity[y * w + x] = layer.disparity as f32;
            let xr = x as isize - layer.disparity as isize;
            // visible in the right view iff the same layer is frontmost where it lands
            let seen = xr >= 0 && {
                let mut visible_layer = None;
                for (k, l) in layers.iter().enumerate() {
                    if l.covers(y, xr + l.disparity as isize) {
                        visible_layer = Some(k);
                        break;
                    }
                }
                visible_layer == Some(li)
            };
            if !seen {
                occlusion[y * w + x] = Occlusion::Occluded;
            }
        }
        for xr in 0..w as isize {
            let layer = layers
                .iter()
                .find(|l| l.covers(y, xr + l.disparity as isize))
                .expect("background covers all");
            right[y * w + xr as usize] = sample(layer, y, xr + layer.disparity as isize);
        }
    }

    if cfg.perturb {
        perturb_view(&mut right, w, h, &mut rng);
    }

    // quantize exactly as the 8-bit files will store them
    let left = GrayImage::from(&GrayImage::new(w, h, left)?.to_raw8());
    let right = GrayImage::from(&GrayImage::new(w, h, right)?.to_raw8());
    let pair = StereoPair::new(format!("left_{index:03}"), left, right, d_max)?;
    let ground_truth = GroundTruthDisparity {
        width: w,
        height: h,
        values: disparity,
        known: vec![true; w * h],
        occlusion,
    };
    Ok(SyntheticPair { pair, ground_truth })
}

/// Writes `cfg.pairs` pairs plus `manifest.txt` into `out_dir`.
pub fn make_synthetic(out_dir: &Path, cfg: &SynthConfig) -> Result<Manifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut manifest = Manifest::default();
    for k in 0..cfg.pairs {
        let synth = generate_pair(cfg, k)?;
        let left = out_dir.join(format!("left_{k:03}.pgm"));
        let right = out_dir.join(format!("right_{k:03}.pgm"));
        write_file(&left, &pgm::encode(&synth.pair.left.to_raw8()))?;
        write_file(&right, &pgm::encode(&synth.pair.right.to_raw8()))?;
        let gt = &synth.ground_truth;
        // png16 cannot represent disparity 0
        let (gt_path, format) = if gt.values.contains(&0.0) {
            let path = out_dir.join(format!("disp_{k:03}.pfm"));
            let map = pfm::FloatMap {
                width: gt.width,
                height: gt.height,
                values: gt.values.clone(),
            };
            write_file(&path, &pfm::encode(&map))?;
            (path, GtFormat::Pfm)
        } else {
            let path = out_dir.join(format!("disp_{k:03}.png"));
            write_file(&path, &png_io::encode_gray16(gt.width, gt.height, &gt.to_uint16())?)?;
            (path, GtFormat::Uint16PngX256)
        };
        write_file(&out_dir.join(format!("disp_{k:03}.occ.pgm")), &pgm::encode(&gt.occlusion_mask()))?;
        manifest.entries.push(ManifestEntry {
            left,
            right,
            ground_truth: Some((gt_path, format)),
            d_max: cfg.d_max,
        });
    }
    write_file(&out_dir.join("manifest.txt"), manifest.to_text(out_dir).as_bytes())?;
    Ok(manifest)
}
