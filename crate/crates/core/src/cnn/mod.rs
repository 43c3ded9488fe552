//! Forward-only convolutional network used as a fixed feature extractor.
//!
//! Activations are `f64`; weights are stored as `f32`, matching the weight
//! file. Convolution is cross-correlation (kernels are not flipped).
//! Feature maps are flattened channel-major, then row-major, before a
//! fully-connected layer.

mod format;
mod tiny;

use std::fmt;

use thiserror::Error;

use crate::spectrogram::GrayImage;

pub use format::{load_network, network_from_bytes, network_to_bytes, write_network, FORMAT_VERSION, MAGIC};
pub use tiny::{tiny_vgg, TINY_VGG_CODE_DIM, TINY_VGG_INPUT};

#[derive(Debug, Error)]
pub enum CnnError {
    #[error("{}{kind} layer: expected input {expected}, got {actual}", at(*layer))]
    ShapeMismatch {
        layer: Option<usize>,
        kind: &'static str,
        expected: String,
        actual: String,
    },
    #[error("shape chain broken: layer {layer} ({kind}) expects {expected} but {} produces {actual}", producer(*prev_layer, prev_kind))]
    ShapeChain {
        layer: usize,
        kind: &'static str,
        expected: String,
        prev_layer: Option<usize>,
        prev_kind: &'static str,
        actual: String,
    },
    #[error("invalid layer {layer} ({kind}): {message}")]
    InvalidLayer {
        layer: usize,
        kind: &'static str,
        message: String,
    },
    #[error("empty network")]
    EmptyNetwork,
    #[error("code layer index {index} does not point at a fully-connected layer")]
    InvalidCodeLayer { index: usize },
    #[error("bad magic {0:?}, expected \"CNNW\"")]
    BadMagic([u8; 4]),
    #[error("unsupported weight format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated payload: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("{0} unexpected trailing bytes after last layer")]
    TrailingBytes(usize),
    #[error("unknown layer kind tag {tag} at layer {layer}")]
    UnknownLayerKind { layer: usize, tag: u8 },
    #[error("image is {width}x{height} but the network expects {expected_width}x{expected_height}")]
    ImageSize {
        width: usize,
        height: usize,
        expected_width: usize,
        expected_height: usize,
    },
}

fn at(layer: Option<usize>) -> String {
    layer.map(|l| format!("layer {l}: ")).unwrap_or_default()
}

fn producer(layer: Option<usize>, kind: &str) -> String {
    match layer {
        Some(l) => format!("layer {l} ({kind})"),
        None => "the network input".to_string(),
    }
}

impl CnnError {
    fn at_layer(self, index: usize) -> Self {
        match self {
            CnnError::ShapeMismatch {
                kind, expected, actual, ..
            } => CnnError::ShapeMismatch {
                layer: Some(index),
                kind,
                expected,
                actual,
            },
            other => other,
        }
    }
}

/// A stack of 2-D feature maps, `[channels × height × width]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapStack {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMapStack {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), channels * height * width, "feature map data length");
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let area = self.height * self.width;
        &self.data[c * area..(c + 1) * area]
    }

    pub fn shape(&self) -> Shape {
        Shape::Maps {
            channels: self.channels,
            height: self.height,
            width: self.width,
        }
    }
}

/// Activations of a fully-connected layer; the CNN code when taken from the
/// code layer.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Maps {
        channels: usize,
        height: usize,
        width: usize,
    },
    Vector(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Maps {
                channels,
                height,
                width,
            } => channels * height * width,
            Shape::Vector(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Shape::Maps {
                channels,
                height,
                width,
            } => write!(f, "{channels}x{height}x{width}"),
            Shape::Vector(n) => write!(f, "[{n}]"),
        }
    }
}

/// Convolutional layer. `weights` are laid out `[out_ch][in_ch][kh][kw]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub relu: bool,
    pub weights: Vec<f32>,
    pub biases: Vec<f32>,
}

impl ConvLayer {
    pub fn output_hw(&self, height: usize, width: usize) -> Option<(usize, usize)> {
        let ph = height + 2 * self.padding;
        let pw = width + 2 * self.padding;
        if self.stride == 0 || ph < self.kernel_h || pw < self.kernel_w {
            return None;
        }
        Some((
            (ph - self.kernel_h) / self.stride + 1,
            (pw - self.kernel_w) / self.stride + 1,
        ))
    }

    #[inline]
    pub fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f32 {
        self.weights[((o * self.in_channels + i) * self.kernel_h + ky) * self.kernel_w + kx]
    }

    fn check(&self) -> Result<(), String> {
        if self.out_channels == 0 || self.in_channels == 0 || self.kernel_h == 0 || self.kernel_w == 0 {
            return Err("zero-sized dimension".into());
        }
        if self.stride == 0 {
            return Err("stride must be positive".into());
        }
        let n = self.out_channels * self.in_channels * self.kernel_h * self.kernel_w;
        if self.weights.len() != n || self.biases.len() != self.out_channels {
            return Err(format!(
                "expected {n} weights and {} biases, got {} and {}",
                self.out_channels,
                self.weights.len(),
                self.biases.len()
            ));
        }
        Ok(())
    }
}

/// Max pooling over a square `field × field` receptive field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolLayer {
    pub field: usize,
    pub stride: usize,
}

impl Default for PoolLayer {
    fn default() -> Self {
        Self { field: 2, stride: 2 }
    }
}

impl PoolLayer {
    /// Floor semantics: with a 2×2 field and stride 2 an odd trailing
    /// row/column is dropped.
    pub fn output_hw(&self, height: usize, width: usize) -> Option<(usize, usize)> {
        if self.field == 0 || self.stride == 0 || height < self.field || width < self.field {
            return None;
        }
        Some((
            (height - self.field) / self.stride + 1,
            (width - self.field) / self.stride + 1,
        ))
    }
}

/// Fully-connected layer. `weights` are laid out `[out_dim][in_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FcLayer {
    pub out_dim: usize,
    pub in_dim: usize,
    pub relu: bool,
    pub weights: Vec<f32>,
    pub biases: Vec<f32>,
}

impl FcLayer {
    fn check(&self) -> Result<(), String> {
        if self.out_dim == 0 || self.in_dim == 0 {
            return Err("zero-sized dimension".into());
        }
        if self.weights.len() != self.out_dim * self.in_dim || self.biases.len() != self.out_dim {
            return Err(format!(
                "expected {} weights and {} biases, got {} and {}",
                self.out_dim * self.in_dim,
                self.out_dim,
                self.weights.len(),
                self.biases.len()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv(ConvLayer),
    Relu,
    MaxPool(PoolLayer),
    Fc(FcLayer),
    Softmax,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv(_) => "conv",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool(_) => "maxpool",
            LayerSpec::Fc(_) => "fc",
            LayerSpec::Softmax => "softmax",
        }
    }

    /// Output shape for a given input shape; `Err(expected)` describes what
    /// the layer would have accepted.
    fn output_shape(&self, input: Shape) -> Result<Shape, String> {
        match (self, input) {
            (
                LayerSpec::Conv(c),
                Shape::Maps {
                    channels,
                    height,
                    width,
                },
            ) if channels == c.in_channels => match c.output_hw(height, width) {
                Some((h, w)) => Ok(Shape::Maps {
                    channels: c.out_channels,
                    height: h,
                    width: w,
                }),
                None => Err(format!(
                    "{}x(>={})x(>={}) after padding {}",
                    c.in_channels, c.kernel_h, c.kernel_w, c.padding
                )),
            },
            (LayerSpec::Conv(c), _) => Err(format!("{}xHxW maps", c.in_channels)),
            (
                LayerSpec::MaxPool(p),
                Shape::Maps {
                    channels,
                    height,
                    width,
                },
            ) => match p.output_hw(height, width) {
                Some((h, w)) => Ok(Shape::Maps {
                    channels,
                    height: h,
                    width: w,
                }),
                None => Err(format!("maps of at least {0}x{0}", p.field)),
            },
            (LayerSpec::MaxPool(_), _) => Err("CxHxW maps".into()),
            (LayerSpec::Fc(fc), s) if s.len() == fc.in_dim => Ok(Shape::Vector(fc.out_dim)),
            (LayerSpec::Fc(fc), _) => Err(format!("{} values", fc.in_dim)),
            (LayerSpec::Relu, s) => Ok(s),
            (LayerSpec::Softmax, Shape::Vector(n)) => Ok(Shape::Vector(n)),
            (LayerSpec::Softmax, _) => Err("a vector".into()),
        }
    }
}

/// Intermediate network state: spatial maps before the first fully-connected
/// layer, a flat vector after it.
#[derive(Debug, Clone, PartialEq)]
pub enum Activation {
    Maps(FeatureMapStack),
    Vector(FeatureVector),
}

impl Activation {
    pub fn shape(&self) -> Shape {
        match self {
            Activation::Maps(m) => m.shape(),
            Activation::Vector(v) => Shape::Vector(v.dim()),
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            Activation::Maps(m) => &m.data,
            Activation::Vector(v) => &v.values,
        }
    }
}

fn relu_in_place(values: &mut [f64]) {
    for v in values {
        *v = v.max(0.0);
    }
}

/// `h_i = g(Σ_n φ_in ⋆ h_n + b_i)` with `g` = ReLU when `layer.relu`.
pub fn conv_forward(input: &FeatureMapStack, layer: &ConvLayer) -> Result<FeatureMapStack, CnnError> {
    let mismatch = || CnnError::ShapeMismatch {
        layer: None,
        kind: "conv",
        expected: format!(
            "{}xHxW (kernel {}x{})",
            layer.in_channels, layer.kernel_h, layer.kernel_w
        ),
        actual: input.shape().to_string(),
    };
    if input.channels != layer.in_channels {
        return Err(mismatch());
    }
    let (oh, ow) = layer.output_hw(input.height, input.width).ok_or_else(mismatch)?;
    let (h, w) = (input.height as isize, input.width as isize);
    let (stride, pad) = (layer.stride as isize, layer.padding as isize);
    let mut out = FeatureMapStack::zeros(layer.out_channels, oh, ow);
    let area = oh * ow;
    for (o, plane) in out.data.chunks_exact_mut(area).enumerate() {
        plane.fill(layer.biases[o] as f64);
        for i in 0..layer.in_channels {
            let src = input.channel(i);
            for ky in 0..layer.kernel_h {
                for kx in 0..layer.kernel_w {
                    let wgt = layer.weight(o, i, ky, kx) as f64;
                    if wgt == 0.0 {
                        continue;
                    }
                    let off_x = kx as isize - pad;
                    // Output columns whose source column 0 <= ox*stride + off_x < w.
                    let x_lo = if off_x >= 0 {
                        0
                    } else {
                        ((-off_x) + stride - 1) / stride
                    };
                    let x_hi = if w - off_x <= 0 {
                        0
                    } else {
                        ((w - off_x - 1) / stride + 1).min(ow as isize)
                    };
                    if x_lo >= x_hi {
                        continue;
                    }
                    for oy in 0..oh {
                        let iy = oy as isize * stride + ky as isize - pad;
                        if iy < 0 || iy >= h {
                            continue;
                        }
                        let src_row = &src[iy as usize * input.width..(iy as usize + 1) * input.width];
                        let dst_row = &mut plane[oy * ow..(oy + 1) * ow];
                        if stride == 1 {
                            let s0 = (x_lo + off_x) as usize;
                            let n = (x_hi - x_lo) as usize;
                            for (d, s) in dst_row[x_lo as usize..x_hi as usize]
                                .iter_mut()
                                .zip(&src_row[s0..s0 + n])
                            {
                                *d += wgt * s;
                            }
                        } else {
                            for ox in x_lo..x_hi {
                                dst_row[ox as usize] += wgt * src_row[(ox * stride + off_x) as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    if layer.relu {
        relu_in_place(&mut out.data);
    }
    Ok(out)
}

/// Per-channel max over each receptive field.
pub fn maxpool_forward(input: &FeatureMapStack, layer: &PoolLayer) -> Result<FeatureMapStack, CnnError> {
    let (oh, ow) = layer
        .output_hw(input.height, input.width)
        .ok_or_else(|| CnnError::ShapeMismatch {
            layer: None,
            kind: "maxpool",
            expected: format!("maps of at least {0}x{0}", layer.field),
            actual: input.shape().to_string(),
        })?;
    let mut out = FeatureMapStack::zeros(input.channels, oh, ow);
    for c in 0..input.channels {
        let src = input.channel(c);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = f64::NEG_INFINITY;
                for dy in 0..layer.field {
                    let row = &src[(oy * layer.stride + dy) * input.width..];
                    for dx in 0..layer.field {
                        m = m.max(row[ox * layer.stride + dx]);
                    }
                }
                out.data[(c * oh + oy) * ow + ox] = m;
            }
        }
    }
    Ok(out)
}

/// `out_i = g(⟨w_i, flatten(input)⟩ + b_i)`.
pub fn fc_forward(input: &[f64], layer: &FcLayer) -> Result<FeatureVector, CnnError> {
    if input.len() != layer.in_dim {
        return Err(CnnError::ShapeMismatch {
            layer: None,
            kind: "fc",
            expected: format!("{} values", layer.in_dim),
            actual: format!("{} values", input.len()),
        });
    }
    let values = layer
        .weights
        .chunks_exact(layer.in_dim)
        .zip(&layer.biases)
        .map(|(row, &b)| {
            let z = row.iter().zip(input).map(|(&w, &x)| w as f64 * x).sum::<f64>() + b as f64;
            if layer.relu {
                z.max(0.0)
            } else {
                z
            }
        })
        .collect();
    Ok(FeatureVector { values })
}

/// Numerically stable softmax. An empty input yields an empty output.
pub fn softmax(input: &[f64]) -> FeatureVector {
    let max = input.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = input.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    FeatureVector {
        values: exps.into_iter().map(|e| e / total).collect(),
    }
}

/// Applies one layer to an activation.
pub fn layer_forward(layer: &LayerSpec, input: Activation) -> Result<Activation, CnnError> {
    Ok(match (layer, input) {
        (LayerSpec::Conv(c), Activation::Maps(m)) => Activation::Maps(conv_forward(&m, c)?),
        (LayerSpec::MaxPool(p), Activation::Maps(m)) => Activation::Maps(maxpool_forward(&m, p)?),
        (LayerSpec::Fc(fc), act) => Activation::Vector(fc_forward(act.values(), fc)?),
        (LayerSpec::Relu, mut act) => {
            match &mut act {
                Activation::Maps(m) => relu_in_place(&mut m.data),
                Activation::Vector(v) => relu_in_place(&mut v.values),
            }
            act
        }
        (LayerSpec::Softmax, Activation::Vector(v)) => Activation::Vector(softmax(&v.values)),
        (layer, act) => {
            return Err(CnnError::ShapeMismatch {
                layer: None,
                kind: layer.kind(),
                expected: match layer {
                    LayerSpec::Softmax => "a vector".into(),
                    _ => "CxHxW maps".into(),
                },
                actual: act.shape().to_string(),
            })
        }
    })
}

/// A validated, immutable feed-forward network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_channels: usize,
    input_height: usize,
    input_width: usize,
    layers: Vec<LayerSpec>,
    code_layer_index: usize,
    /// Optional per-channel mean subtracted from the `[0, 1]` scaled input.
    mean: Vec<f32>,
}

impl Network {
    pub fn new(
        input: (usize, usize, usize),
        layers: Vec<LayerSpec>,
        code_layer_index: usize,
        mean: Vec<f32>,
    ) -> Result<Self, CnnError> {
        let net = Self {
            input_channels: input.0,
            input_height: input.1,
            input_width: input.2,
            layers,
            code_layer_index,
            mean,
        };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<(), CnnError> {
        if self.layers.is_empty() {
            return Err(CnnError::EmptyNetwork);
        }
        if self.input_channels == 0 || self.input_height == 0 || self.input_width == 0 {
            return Err(CnnError::InvalidLayer {
                layer: 0,
                kind: "input",
                message: format!(
                    "input shape {}x{}x{} has a zero dimension",
                    self.input_channels, self.input_height, self.input_width
                ),
            });
        }
        if !self.mean.is_empty() && self.mean.len() != self.input_channels {
            return Err(CnnError::InvalidLayer {
                layer: 0,
                kind: "input",
                message: format!(
                    "mean has {} entries for {} channels",
                    self.mean.len(),
                    self.input_channels
                ),
            });
        }
        let mut shape = self.input_shape();
        let mut prev: Option<(usize, &'static str)> = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let checked = match layer {
                LayerSpec::Conv(c) => c.check(),
                LayerSpec::Fc(fc) => fc.check(),
                LayerSpec::MaxPool(p) if p.field == 0 || p.stride == 0 => Err("zero field or stride".into()),
                _ => Ok(()),
            };
            checked.map_err(|message| CnnError::InvalidLayer {
                layer: i,
                kind: layer.kind(),
                message,
            })?;
            shape = layer.output_shape(shape).map_err(|expected| CnnError::ShapeChain {
                layer: i,
                kind: layer.kind(),
                expected,
                prev_layer: prev.map(|p| p.0),
                prev_kind: prev.map_or("input", |p| p.1),
                actual: shape.to_string(),
            })?;
            prev = Some((i, layer.kind()));
        }
        match self.layers.get(self.code_layer_index) {
            Some(LayerSpec::Fc(_)) => Ok(()),
            _ => Err(CnnError::InvalidCodeLayer {
                index: self.code_layer_index,
            }),
        }
    }

    pub fn input_shape(&self) -> Shape {
        Shape::Maps {
            channels: self.input_channels,
            height: self.input_height,
            width: self.input_width,
        }
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn code_layer_index(&self) -> usize {
        self.code_layer_index
    }

    pub fn mean(&self) -> &[f32] {
        &self.mean
    }

    /// Length of the feature code (`O_w`).
    pub fn code_dim(&self) -> usize {
        match &self.layers[self.code_layer_index] {
            LayerSpec::Fc(fc) => fc.out_dim,
            _ => unreachable!("validated at construction"),
        }
    }

    /// Scales pixels to `[0, 1]`, replicates grayscale across the input
    /// channels and subtracts the per-channel mean.
    pub fn prepare_input(&self, image: &GrayImage) -> Result<FeatureMapStack, CnnError> {
        if image.width != self.input_width || image.height != self.input_height {
            return Err(CnnError::ImageSize {
                width: image.width,
                height: image.height,
                expected_width: self.input_width,
                expected_height: self.input_height,
            });
        }
        let mut data = Vec::with_capacity(self.input_channels * image.pixels.len());
        for c in 0..self.input_channels {
            let mean = self.mean.get(c).copied().unwrap_or(0.0) as f64;
            data.extend(image.pixels.iter().map(|&p| p as f64 / 255.0 - mean));
        }
        Ok(FeatureMapStack::from_vec(
            self.input_channels,
            image.height,
            image.width,
            data,
        ))
    }

    /// Runs layers `0..=last` on a prepared input.
    pub fn forward_to(&self, input: FeatureMapStack, last: usize) -> Result<Activation, CnnError> {
        let mut act = Activation::Maps(input);
        for (i, layer) in self.layers.iter().enumerate().take(last + 1) {
            act = layer_forward(layer, act).map_err(|e| e.at_layer(i))?;
        }
        Ok(act)
    }

    /// Full forward pass including any classifier and softmax on top.
    pub fn forward(&self, input: FeatureMapStack) -> Result<Activation, CnnError> {
        self.forward_to(input, self.layers.len() - 1)
    }
}

/// Activations of the code layer for one image. Layers above the code layer
/// are not evaluated.
pub fn extract_code(net: &Network, image: &GrayImage) -> Result<FeatureVector, CnnError> {
    let input = net.prepare_input(image)?;
    match net.forward_to(input, net.code_layer_index)? {
        Activation::Vector(v) => Ok(v),
        Activation::Maps(_) => unreachable!("code layer is fully connected"),
    }
}
