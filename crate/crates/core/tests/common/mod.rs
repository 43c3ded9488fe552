//! Reference implementations used as test oracles. They share no code
//! with the library paths they check.

#![allow(dead_code, clippy::needless_range_loop)]

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use whaledet_core::cnn::{ConvLayer, FcLayer, LayerSpec, Network, PoolLayer};
use whaledet_core::{seed, FeatureMapStack};

/// Direct DFT of windowed, zero-padded segments with a precomputed
/// twiddle table.
pub struct NaiveDft {
    n_fft: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl NaiveDft {
    pub fn new(n_fft: usize) -> Self {
        let ang = |i: usize| -2.0 * PI * i as f64 / n_fft as f64;
        Self {
            n_fft,
            cos: (0..n_fft).map(|i| ang(i).cos()).collect(),
            sin: (0..n_fft).map(|i| ang(i).sin()).collect(),
        }
    }

    /// One-sided magnitudes of `segment·window`, zero-padded to `n_fft`.
    pub fn magnitudes(&self, segment: &[f64], window: &[f64]) -> Vec<f64> {
        let x: Vec<f64> = segment.iter().zip(window).map(|(s, w)| s * w).collect();
        (0..=self.n_fft / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                let mut idx = 0;
                for v in &x {
                    re += v * self.cos[idx];
                    im += v * self.sin[idx];
                    idx += k;
                    if idx >= self.n_fft {
                        idx -= self.n_fft;
                    }
                }
                (re * re + im * im).sqrt()
            })
            .collect()
    }
}

pub fn hamming(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Activations as `[c][y][x]`.
pub type Maps = Vec<Vec<Vec<f64>>>;

pub fn naive_conv(input: &Maps, l: &ConvLayer) -> Maps {
    let (h, w) = (input[0].len() as isize, input[0][0].len() as isize);
    let oh = ((h + 2 * l.padding as isize - l.kernel_h as isize) / l.stride as isize + 1) as usize;
    let ow = ((w + 2 * l.padding as isize - l.kernel_w as isize) / l.stride as isize + 1) as usize;
    let mut out = vec![vec![vec![0.0; ow]; oh]; l.out_channels];
    for o in 0..l.out_channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = l.biases[o] as f64;
                for i in 0..l.in_channels {
                    for ky in 0..l.kernel_h {
                        for kx in 0..l.kernel_w {
                            let iy = (oy * l.stride + ky) as isize - l.padding as isize;
                            let ix = (ox * l.stride + kx) as isize - l.padding as isize;
                            if iy >= 0 && iy < h && ix >= 0 && ix < w {
                                let wi = ((o * l.in_channels + i) * l.kernel_h + ky) * l.kernel_w + kx;
                                acc += l.weights[wi] as f64 * input[i][iy as usize][ix as usize];
                            }
                        }
                    }
                }
                out[o][oy][ox] = if l.relu { acc.max(0.0) } else { acc };
            }
        }
    }
    out
}

pub fn naive_maxpool(input: &Maps, field: usize, stride: usize) -> Maps {
    input
        .iter()
        .map(|ch| {
            let oh = (ch.len() - field) / stride + 1;
            let ow = (ch[0].len() - field) / stride + 1;
            (0..oh)
                .map(|oy| {
                    (0..ow)
                        .map(|ox| {
                            let mut m = f64::NEG_INFINITY;
                            for dy in 0..field {
                                for dx in 0..field {
                                    m = m.max(ch[oy * stride + dy][ox * stride + dx]);
                                }
                            }
                            m
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

pub fn naive_fc(input: &[f64], l: &FcLayer) -> Vec<f64> {
    (0..l.out_dim)
        .map(|o| {
            let mut acc = l.biases[o] as f64;
            for i in 0..l.in_dim {
                acc += l.weights[o * l.in_dim + i] as f64 * input[i];
            }
            if l.relu {
                acc.max(0.0)
            } else {
                acc
            }
        })
        .collect()
}

pub enum Act {
    Maps(Maps),
    Vec(Vec<f64>),
}

pub fn flatten(m: &Maps) -> Vec<f64> {
    m.iter()
        .flat_map(|c| c.iter().flat_map(|r| r.iter().copied()))
        .collect()
}

/// Runs layers `0..=last` with the nested-loop reference.
pub fn naive_forward(net: &Network, input: Maps, last: usize) -> Vec<f64> {
    let mut act = Act::Maps(input);
    for layer in &net.layers()[..=last] {
        act = match (layer, act) {
            (LayerSpec::Conv(c), Act::Maps(m)) => Act::Maps(naive_conv(&m, c)),
            (LayerSpec::MaxPool(p), Act::Maps(m)) => Act::Maps(naive_maxpool(&m, p.field, p.stride)),
            (LayerSpec::Fc(f), Act::Maps(m)) => Act::Vec(naive_fc(&flatten(&m), f)),
            (LayerSpec::Fc(f), Act::Vec(v)) => Act::Vec(naive_fc(&v, f)),
            (LayerSpec::Relu, Act::Maps(m)) => Act::Maps(
                m.into_iter()
                    .map(|c| {
                        c.into_iter()
                            .map(|r| r.into_iter().map(|v| v.max(0.0)).collect())
                            .collect()
                    })
                    .collect(),
            ),
            (LayerSpec::Relu, Act::Vec(v)) => Act::Vec(v.into_iter().map(|x| x.max(0.0)).collect()),
            (LayerSpec::Softmax, Act::Vec(v)) => {
                let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
                let s: f64 = e.iter().sum();
                Act::Vec(e.into_iter().map(|x| x / s).collect())
            }
            _ => panic!("unsupported layer order in oracle"),
        };
    }
    match act {
        Act::Maps(m) => flatten(&m),
        Act::Vec(v) => v,
    }
}

/// Deterministic test image: a smooth ramp with a diagonal stripe.
pub fn test_image(width: usize, height: usize) -> whaledet_core::GrayImage {
    let pixels = (0..height)
        .flat_map(|y| (0..width).map(move |x| ((x * 7 + y * 13 + (x * y) % 31) % 256) as u8))
        .collect();
    whaledet_core::GrayImage { width, height, pixels }
}

/// Image → `[c][y][x]` input with `/255`, channel replication and mean.
pub fn image_to_maps(img: &whaledet_core::GrayImage, channels: usize, mean: &[f32]) -> Maps {
    (0..channels)
        .map(|c| {
            let m = mean.get(c).copied().unwrap_or(0.0) as f64;
            (0..img.height)
                .map(|y| {
                    (0..img.width)
                        .map(|x| img.pixels[y * img.width + x] as f64 / 255.0 - m)
                        .collect()
                })
                .collect()
        })
        .collect()
}

pub fn random_f32(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect()
}

/// A random valid network of at most four layers ending in a
/// fully-connected code layer, plus a matching random input.
pub fn random_case(seed: u64) -> (Network, Maps) {
    let mut rng = seed::rng(seed);
    let (mut c, mut h, mut w) = (
        rng.random_range(1..=3),
        rng.random_range(4..=16),
        rng.random_range(4..=16),
    );
    let input = (c, h, w);
    let mut layers = Vec::new();
    for _ in 0..rng.random_range(0..=2) {
        match rng.random_range(0..3) {
            0 => {
                let k = rng.random_range(1..=3.min(h).min(w));
                let stride = rng.random_range(1..=2);
                let padding = rng.random_range(0..k);
                let out = rng.random_range(1..=4);
                let conv = ConvLayer {
                    out_channels: out,
                    in_channels: c,
                    kernel_h: k,
                    kernel_w: k,
                    stride,
                    padding,
                    relu: rng.random_bool(0.5),
                    weights: random_f32(&mut rng, out * c * k * k),
                    biases: random_f32(&mut rng, out),
                };
                (h, w) = conv.output_hw(h, w).unwrap();
                c = out;
                layers.push(LayerSpec::Conv(conv));
            }
            1 if h >= 2 && w >= 2 => {
                layers.push(LayerSpec::MaxPool(PoolLayer::default()));
                (h, w) = (h / 2, w / 2);
            }
            _ => layers.push(LayerSpec::Relu),
        }
    }
    let in_dim = c * h * w;
    let out_dim = rng.random_range(1..=8);
    layers.push(LayerSpec::Fc(FcLayer {
        out_dim,
        in_dim,
        relu: rng.random_bool(0.5),
        weights: random_f32(&mut rng, out_dim * in_dim),
        biases: random_f32(&mut rng, out_dim),
    }));
    let code = layers.len() - 1;
    if layers.len() < 4 {
        layers.push(LayerSpec::Softmax);
    }
    let x: Maps = (0..input.0)
        .map(|_| {
            (0..input.1)
                .map(|_| (0..input.2).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect()
        })
        .collect();
    (Network::new(input, layers, code, Vec::new()).unwrap(), x)
}

pub fn to_stack(m: &Maps) -> FeatureMapStack {
    FeatureMapStack::from_vec(m.len(), m[0].len(), m[0][0].len(), flatten(m))
}
