use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{ConvLayer, FcLayer, LayerSpec, Network, PoolLayer};
use crate::seed;

/// Input geometry (height, width) of [`tiny_vgg`].
pub const TINY_VGG_INPUT: (usize, usize) = (256, 256);
pub const TINY_VGG_CODE_DIM: usize = 64;

fn he_normal(rng: &mut impl Rng, n: usize, fan_in: usize) -> Vec<f32> {
    let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
    (0..n).map(|_| dist.sample(rng) as f32).collect()
}

/// A small randomly initialized VGG-style network for tests and desk-scale
/// experiments: two conv/pool pairs, two fully-connected layers (the second
/// is the 64-dimensional code layer), then a 2-way classifier and softmax.
///
/// ```text
/// in  C×256×256
/// 0 conv 8 @5×5 s2 p2 + relu -> 8×128×128
/// 1 maxpool 2×2              -> 8×64×64
/// 2 conv 16 @3×3 s1 p1 + relu -> 16×64×64
/// 3 maxpool 2×2              -> 16×32×32
/// 4 fc 16384 -> 128 + relu
/// 5 fc 128 -> 64 + relu        (code layer)
/// 6 fc 64 -> 2
/// 7 softmax
/// ```
pub fn tiny_vgg(seed: u64, input_channels: usize) -> Network {
    let mut rng = seed::rng(seed);
    let (h, w) = TINY_VGG_INPUT;
    let conv = |rng: &mut _, out_channels, in_channels, k, stride, padding| {
        LayerSpec::Conv(ConvLayer {
            out_channels,
            in_channels,
            kernel_h: k,
            kernel_w: k,
            stride,
            padding,
            relu: true,
            weights: he_normal(rng, out_channels * in_channels * k * k, in_channels * k * k),
            biases: vec![0.0; out_channels],
        })
    };
    let fc = |rng: &mut _, out_dim, in_dim, relu| {
        LayerSpec::Fc(FcLayer {
            out_dim,
            in_dim,
            relu,
            weights: he_normal(rng, out_dim * in_dim, in_dim),
            biases: vec![0.0; out_dim],
        })
    };
    let layers = vec![
        conv(&mut rng, 8, input_channels, 5, 2, 2),
        LayerSpec::MaxPool(PoolLayer::default()),
        conv(&mut rng, 16, 8, 3, 1, 1),
        LayerSpec::MaxPool(PoolLayer::default()),
        fc(&mut rng, 128, 16 * (h / 8) * (w / 8), true),
        fc(&mut rng, TINY_VGG_CODE_DIM, 128, true),
        fc(&mut rng, 2, TINY_VGG_CODE_DIM, false),
        LayerSpec::Softmax,
    ];
    Network::new((input_channels, h, w), layers, 5, vec![0.5; input_channels]).expect("tiny-vgg shapes are consistent")
}
