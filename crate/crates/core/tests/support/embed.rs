use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssdm::conv::{Activation, ConvLayer};
use ssdm::embedding::EmbeddingNetwork;
use ssdm::tensor::Tensor;

pub const DESCRIPTOR_TOL: f64 = 1e-5;

/// The tower applied to one isolated `p x p` patch, in f64 with direct
/// loops; the result is the normalized descriptor of the patch center.
pub fn patch_descriptor(layers: &[ConvLayer], patch: &[f64], p: usize) -> Vec<f64> {
    let mut x = patch.to_vec();
    let mut size = p;
    let mut channels = 1;
    for layer in layers {
        let out_ch = layer.bias.len();
        let wt = layer.weights.values();
        let b = layer.bias.values();
        let o = size - 2;
        let mut y = vec![0.0f64; out_ch * o * o];
        for m in 0..out_ch {
            for r in 0..o {
                for c in 0..o {
                    let mut acc = b[m] as f64;
                    for ci in 0..channels {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                acc += wt[((m * channels + ci) * 3 + ky) * 3 + kx] as f64
                                    * x[(ci * size + r + ky) * size + c + kx];
                            }
                        }
                    }
                    if layer.activation == Activation::Relu {
                        acc = acc.max(0.0);
                    }
                    y[(m * o + r) * o + c] = acc;
                }
            }
        }
        x = y;
        size = o;
        channels = out_ch;
    }
    assert_eq!(size, 1);
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter().map(|v| v / norm).collect()
}

pub fn random_band(p: usize, w: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_vec(&[1, p, w], (0..p * w).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap()
}

/// Dense line embeddings of random bands against the isolated per-patch
/// oracle, alternating patch sizes 9 and 11.
pub fn dense_matches_patchwise(bands: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..bands {
        let p = if case % 2 == 0 { 9 } else { 11 };
        let net = EmbeddingNetwork::random(p, 16, &mut rng).unwrap();
        let w = rng.random_range(p..p + 24);
        let band = random_band(p, w, &mut rng);
        let line = net.embed_line(&band).unwrap();
        assert_eq!(line.len(), w - p + 1);
        for k in 0..line.len() {
            let patch: Vec<f64> = (0..p)
                .flat_map(|r| band.values()[r * w + k..r * w + k + p].iter().map(|&v| v as f64))
                .collect();
            let want = patch_descriptor(net.layers(), &patch, p);
            for (a, b) in line.descriptor(k).iter().zip(&want) {
                assert!((*a as f64 - b).abs() < DESCRIPTOR_TOL, "case {case} col {k}: {a} vs {b}");
            }
        }
    }
}

