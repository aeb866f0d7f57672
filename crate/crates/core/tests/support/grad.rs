//! Central finite-difference checks of every analytic gradient.
//!
//! Each check perturbs one input coordinate by ±H and compares
//! `(L(x + H) - L(x - H)) / 2H` against the analytic derivative. The
//! objectives are piecewise linear or smooth; coordinates whose ±H window
//! straddles a kink (detected by a non-zero second difference) carry no
//! derivative and are skipped, with a cap on how many may be.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssdm::conv::{Activation, ConvGrads, ConvLayer};
use ssdm::dp::{filter_occluded_segments, max_average_path};
use ssdm::losses::{contrastive_dp_loss, contrastive_loss, mil_contrastive_loss, mil_loss, LossOutput};
use ssdm::norm::{l2_normalize, l2_normalize_backward, l2_norm};
use ssdm::similarity::{SimilarityMatrix, ValidityRanges};
use ssdm::tensor::Tensor;

const H: f64 = 1e-3;
pub const REL_TOL: f64 = 1e-3;
/// Below this magnitude both derivatives count as zero.
const ZERO_FLOOR: f64 = 1e-7;
const KINK_TOL: f64 = 1e-9;
const MAX_SKIPPED_FRACTION: f64 = 0.05;

struct Tally {
    checked: usize,
    skipped: usize,
}

impl Tally {
    fn new() -> Self {
        Self { checked: 0, skipped: 0 }
    }

    /// Checks one coordinate given the objective at `x - H`, `x`, `x + H`.
    fn check(&mut self, what: &str, analytic: f64, lo: f64, mid: f64, hi: f64) {
        if (hi - 2.0 * mid + lo).abs() > KINK_TOL * (1.0 + mid.abs()) {
            self.skipped += 1;
            return;
        }
        let numeric = (hi - lo) / (2.0 * H);
        let scale = analytic.abs().max(numeric.abs());
        self.checked += 1;
        if scale < ZERO_FLOOR {
            return;
        }
        let rel = (analytic - numeric).abs() / scale;
        assert!(rel < REL_TOL, "{what}: analytic {analytic} vs numeric {numeric} (rel {rel:e})");
    }

    fn finish(&self, what: &str) {
        let total = self.checked + self.skipped;
        assert!(self.checked > 0, "{what}: nothing checked");
        assert!(
            (self.skipped as f64) <= MAX_SKIPPED_FRACTION * total as f64,
            "{what}: {} of {total} coordinates sat on a kink",
            self.skipped
        );
    }
}

fn uniform(n: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect()
}

// ---------------------------------------------------------------------------
// conv layers, against an f64 direct-loop oracle

/// `sum(R * act(conv(x; W, b)))` evaluated in f64 with six nested loops.
fn conv_objective(x: &[f64], c: usize, h: usize, w: usize, wt: &[f64], b: &[f64], relu: bool, r: &[f64]) -> f64 {
    let m = b.len();
    let (oh, ow) = (h - 2, w - 2);
    let mut total = 0.0;
    for o in 0..m {
        for y in 0..oh {
            for xx in 0..ow {
                let mut acc = b[o];
                for ci in 0..c {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            acc += wt[((o * c + ci) * 3 + ky) * 3 + kx] * x[(ci * h + y + ky) * w + xx + kx];
                        }
                    }
                }
                if relu {
                    acc = acc.max(0.0);
                }
                total += r[(o * oh + y) * ow + xx] * acc;
            }
        }
    }
    total
}

fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

pub fn conv_layer_gradients(instances: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new();
    for instance in 0..instances {
        let (c, m) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let (h, w) = (rng.random_range(3..=6), rng.random_range(3..=7));
        let act = if instance % 2 == 0 { Activation::Relu } else { Activation::None };
        let relu = act == Activation::Relu;
        let layer = ConvLayer::from_parts(
            Tensor::from_vec(&[m, c, 3, 3], uniform(m * c * 9, &mut rng)).unwrap(),
            Tensor::from_vec(&[m], uniform(m, &mut rng)).unwrap(),
            act,
        )
        .unwrap();
        let input = Tensor::from_vec(&[c, h, w], uniform(c * h * w, &mut rng)).unwrap();
        let r = uniform(m * (h - 2) * (w - 2), &mut rng);

        let trace = layer.forward_traced(&input).unwrap();
        let mut grads = ConvGrads::zeros_like(&layer);
        let gx = layer
            .backward(&trace, &Tensor::from_vec(trace.output().shape(), r.clone()).unwrap(), &mut grads)
            .unwrap();

        let (x, wt, b, r) = (to_f64(input.values()), to_f64(layer.weights.values()), to_f64(layer.bias.values()), to_f64(&r));
        let f = |x: &[f64], wt: &[f64], b: &[f64]| conv_objective(x, c, h, w, wt, b, relu, &r);
        let mid = f(&x, &wt, &b);
        for k in 0..wt.len() {
            let mut p = wt.clone();
            p[k] += H;
            let hi = f(&x, &p, &b);
            p[k] -= 2.0 * H;
            let lo = f(&x, &p, &b);
            tally.check("conv dW", grads.weights[k] as f64, lo, mid, hi);
        }
        for k in 0..b.len() {
            let mut p = b.clone();
            p[k] += H;
            let hi = f(&x, &wt, &p);
            p[k] -= 2.0 * H;
            let lo = f(&x, &wt, &p);
            tally.check("conv db", grads.bias[k] as f64, lo, mid, hi);
        }
        for k in 0..x.len() {
            let mut p = x.clone();
            p[k] += H;
            let hi = f(&p, &wt, &b);
            p[k] -= 2.0 * H;
            let lo = f(&p, &wt, &b);
            tally.check("conv dx", gx.values()[k] as f64, lo, mid, hi);
        }
    }
    tally.finish("conv");
}

// ---------------------------------------------------------------------------
// l2 normalization, against `x / sqrt(sum x^2)` in f64

pub fn l2_normalize_gradients(instances: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new();
    for _ in 0..instances {
        let n = rng.random_range(2..=16);
        let v = uniform(n, &mut rng);
        let r = to_f64(&uniform(n, &mut rng));
        let y = l2_normalize(&v);
        let g = l2_normalize_backward(&y, l2_norm(&v), &r.iter().map(|&x| x as f32).collect::<Vec<_>>());
        let f = |x: &[f64]| {
            let norm = x.iter().map(|a| a * a).sum::<f64>().sqrt();
            x.iter().zip(&r).map(|(a, b)| a / norm * b).sum::<f64>()
        };
        let x = to_f64(&v);
        for k in 0..n {
            let mut p = x.clone();
            p[k] += H;
            let hi = f(&p);
            p[k] -= 2.0 * H;
            let lo = f(&p);
            // smooth objective: the curvature guard does not apply
            let numeric = (hi - lo) / (2.0 * H);
            let rel = (g[k] as f64 - numeric).abs() / numeric.abs().max(g[k].abs() as f64).max(ZERO_FLOOR);
            assert!(rel < REL_TOL, "l2 grad {k}: {} vs {numeric}", g[k]);
            tally.checked += 1;
        }
    }
    tally.finish("l2_normalize");
}

// ---------------------------------------------------------------------------
// losses w.r.t. similarity entries

const LOSS_DIM: usize = 12;
const LOSS_D_MAX: usize = 4;
const MU: f64 = 0.2;
const T_SUP: usize = 2;

fn random_matrix(rng: &mut ChaCha8Rng) -> SimilarityMatrix {
    SimilarityMatrix::from_fn(LOSS_DIM, LOSS_D_MAX, |_, _| rng.random_range(-1.0..1.0)).unwrap()
}

fn perturbed(s: &SimilarityMatrix, i: usize, j: usize, delta: f64) -> SimilarityMatrix {
    let mut p = s.clone();
    *p.raw_mut(i, j) += delta;
    p
}

/// Checks d loss / d s_k for each of the (up to three) matrices the loss reads.
fn check_loss(
    what: &str,
    mats: &[SimilarityMatrix; 3],
    loss: &dyn Fn(&[SimilarityMatrix; 3]) -> LossOutput,
    tally: &mut Tally,
) {
    let out = loss(mats);
    let grads = [Some(out.grad_rp.clone()), out.grad_rn.clone(), out.grad_np.clone()];
    for (which, grad) in grads.iter().enumerate() {
        for i in 0..LOSS_DIM {
            for j in mats[which].band_cols(i) {
                let at = |delta: f64| {
                    let mut m = mats.clone();
                    m[which] = perturbed(&m[which], i, j, delta);
                    loss(&m).value
                };
                let analytic = grad.as_ref().map_or(0.0, |g| g.get(i, j));
                tally.check(what, analytic, at(-H), out.value, at(H));
            }
        }
    }
}

pub fn mil_gradients(instances: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranges = ValidityRanges::new(LOSS_DIM, LOSS_D_MAX).unwrap();
    let mut tally = Tally::new();
    for _ in 0..instances {
        let mats = [random_matrix(&mut rng), random_matrix(&mut rng), random_matrix(&mut rng)];
        check_loss("mil", &mats, &|m| mil_loss(&m[0], &m[1], &m[2], &ranges, MU).unwrap(), &mut tally);
    }
    tally.finish("mil");
}

pub fn contrastive_gradients(instances: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranges = ValidityRanges::new(LOSS_DIM, LOSS_D_MAX).unwrap();
    let mut tally = Tally::new();
    for _ in 0..instances {
        let s = random_matrix(&mut rng);
        let mats = [s.clone(), s.clone(), s];
        check_loss("contrastive", &mats, &|m| contrastive_loss(&m[0], &ranges, MU, T_SUP).unwrap(), &mut tally);
    }
    tally.finish("contrastive");
}

pub fn mil_contrastive_gradients(instances: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranges = ValidityRanges::new(LOSS_DIM, LOSS_D_MAX).unwrap();
    let mut tally = Tally::new();
    for _ in 0..instances {
        let mats = [random_matrix(&mut rng), random_matrix(&mut rng), random_matrix(&mut rng)];
        check_loss(
            "mil-contrastive",
            &mats,
            &|m| mil_contrastive_loss(&m[0], &m[1], &m[2], &ranges, MU, T_SUP).unwrap(),
            &mut tally,
        );
    }
    tally.finish("mil-contrastive");
}

pub fn contrastive_dp_gradients(instances: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new();
    for _ in 0..instances {
        let s = random_matrix(&mut rng);
        // the path is a constant of the loss: estimate it once, then perturb
        let path = filter_occluded_segments(&max_average_path(&s).unwrap(), 3);
        let mats = [s.clone(), s.clone(), s];
        check_loss(
            "contrastive-dp",
            &mats,
            &|m| contrastive_dp_loss(&m[0], &path, MU, T_SUP).unwrap(),
            &mut tally,
        );
    }
    tally.finish("contrastive-dp");
}

// ---------------------------------------------------------------------------
// whole chain: image -> tower -> similarities -> MIL loss, along random
// unit directions. MIL is continuous in the parameters; the suppression
// windows of the contrastive losses and the DP path move discontinuously
// with their argmaxes, so finite differences through them are meaningless.

/// f32 forward passes limit this check to a looser tolerance than the
/// per-primitive ones above: large steps cross ReLU and argmax kinks,
/// small ones drown in rounding, so a direction passes when any step of
/// the ladder agrees.
const CHAIN_REL_TOL: f64 = 2e-2;
const CHAIN_ABS_FLOOR: f64 = 1e-4;
const CHAIN_STEPS: [f32; 3] = [1e-3, 3e-4, 1e-4];
const CHAIN_INSTANCES: usize = 10;

pub fn network_gradient_matches_directional_difference() {
    use ssdm::data::{sample_rows, GrayImage, RowSampling};
    use ssdm::embedding::EmbeddingNetwork;
    use ssdm::losses::{LossConfig, Method};
    use ssdm::pipeline::{minibatch_gradients, prepare_image, NegativeSource};

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (w, h) = (40, 30);
    let cfg = LossConfig {
        method: Method::Mil,
        ..LossConfig::default()
    };
    let mut agreed = 0;
    for _ in 0..CHAIN_INSTANCES {
        let img = |rng: &mut ChaCha8Rng| GrayImage::new(w, h, (0..w * h).map(|_| rng.random::<f32>()).collect()).unwrap();
        let (left, right) = (prepare_image(&img(&mut rng)), prepare_image(&img(&mut rng)));
        let net = EmbeddingNetwork::random(9, 8, &mut rng).unwrap();
        let rows = sample_rows(h, 9, 1, RowSampling::Random(4)).unwrap();
        let run = |n: &EmbeddingNetwork| minibatch_gradients(n, &left, &right, NegativeSource::SamePair, &rows, 6, &cfg).unwrap();
        let (_, grads) = run(&net);

        let mut direction: Vec<Vec<f32>> = net
            .layers()
            .iter()
            .map(|l| uniform(l.weights.len() + l.bias.len(), &mut rng))
            .collect();
        let norm = direction.iter().flatten().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        direction.iter_mut().flatten().for_each(|v| *v = (*v as f64 / norm) as f32);

        let analytic: f64 = grads
            .iter()
            .zip(&direction)
            .map(|(g, d)| g.weights.iter().chain(&g.bias).zip(d).map(|(a, b)| *a as f64 * *b as f64).sum::<f64>())
            .sum();
        let moved = |sign: f32, step: f32| {
            let mut n = net.clone();
            for (param, d) in n.parameters_mut().chunks_mut(2).zip(&direction) {
                let split = param[0].1.len();
                for (v, dv) in param[0].1.values_mut().iter_mut().zip(&d[..split]) {
                    *v += sign * step * dv;
                }
                for (v, dv) in param[1].1.values_mut().iter_mut().zip(&d[split..]) {
                    *v += sign * step * dv;
                }
            }
            run(&n).0.mean_loss
        };
        let numeric: Vec<f64> = CHAIN_STEPS
            .iter()
            .map(|&step| (moved(1.0, step) - moved(-1.0, step)) / (2.0 * step as f64))
            .collect();
        let close = |n: &f64| (analytic - n).abs() <= CHAIN_REL_TOL * analytic.abs().max(n.abs()) + CHAIN_ABS_FLOOR;
        if numeric.iter().any(close) {
            agreed += 1;
        } else {
            eprintln!("analytic {analytic} numeric {numeric:?}");
        }
    }
    // a ReLU or argmax kink inside the window can spoil a single direction
    assert!(agreed + 1 >= CHAIN_INSTANCES, "{agreed} of {CHAIN_INSTANCES} directions agreed");
}
