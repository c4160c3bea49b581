use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::loss::{log_softmax, softmax};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    Tanh,
    MaxPool {
        size: usize,
    },
    /// Fully connected; flattens its `[c, h, w]` input.
    Dense {
        inputs: usize,
        outputs: usize,
    },
}

impl LayerSpec {
    fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                vec![out_channels, in_channels, kernel, kernel],
                vec![out_channels],
            ],
            LayerSpec::Dense { inputs, outputs } => vec![vec![outputs, inputs], vec![outputs]],
            _ => Vec::new(),
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv2d {
                in_channels, kernel, ..
            } => in_channels * kernel * kernel,
            LayerSpec::Dense { inputs, .. } => inputs,
            _ => 0,
        }
    }

    fn output_dims(&self, [c, h, w]: [usize; 3]) -> Result<[usize; 3]> {
        let bad = |reason: String| Err(Error::Config(reason));
        let fields: &[usize] = match self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => &[*in_channels, *out_channels, *kernel, *stride, *padding],
            LayerSpec::MaxPool { size } => &[*size],
            LayerSpec::Dense { outputs, .. } => &[*outputs],
            LayerSpec::Relu | LayerSpec::Tanh => &[],
        };
        if fields.iter().any(|&v| v > MAX_DIM) {
            return bad(format!("layer {self:?} exceeds the size limit {MAX_DIM}"));
        }
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                if in_channels != c {
                    return bad(format!("conv expects {in_channels} channels, got {c}"));
                }
                if kernel == 0 || stride == 0 || h + 2 * padding < kernel || w + 2 * padding < kernel
                {
                    return bad(format!("conv kernel {kernel} does not fit {h}x{w}"));
                }
                Ok([
                    out_channels,
                    (h + 2 * padding - kernel) / stride + 1,
                    (w + 2 * padding - kernel) / stride + 1,
                ])
            }
            LayerSpec::Relu | LayerSpec::Tanh => Ok([c, h, w]),
            LayerSpec::MaxPool { size } => {
                if size == 0 || h < size || w < size {
                    return bad(format!("pool size {size} does not fit {h}x{w}"));
                }
                Ok([c, h / size, w / size])
            }
            LayerSpec::Dense { inputs, outputs } => {
                if inputs != c * h * w {
                    return bad(format!("dense expects {inputs} inputs, got {}", c * h * w));
                }
                Ok([outputs, 1, 1])
            }
        }
    }
}

/// Upper bound on any single layer dimension.
pub const MAX_DIM: usize = 1 << 12;

/// Input shape plus the ordered layer stack of a classifier.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// Two `conv3x3 -> relu -> maxpool2` stages followed by a dense head.
    pub fn small_cnn(input: [usize; 3], channels: (usize, usize), num_outputs: usize) -> Self {
        let [c, h, w] = input;
        let conv = |i, o| LayerSpec::Conv2d {
            in_channels: i,
            out_channels: o,
            kernel: 3,
            stride: 1,
            padding: 1,
        };
        Architecture {
            input,
            layers: vec![
                conv(c, channels.0),
                LayerSpec::Relu,
                LayerSpec::MaxPool { size: 2 },
                conv(channels.0, channels.1),
                LayerSpec::Relu,
                LayerSpec::MaxPool { size: 2 },
                LayerSpec::Dense {
                    inputs: channels.1 * (h / 4) * (w / 4),
                    outputs: num_outputs,
                },
            ],
        }
    }

    /// Activation shapes, input first, one entry per layer output.
    pub fn activation_dims(&self) -> Result<Vec<[usize; 3]>> {
        if self.input.iter().any(|&d| d == 0 || d > MAX_DIM) {
            return Err(Error::Config(format!("input shape {:?} out of range", self.input)));
        }
        let mut dims = vec![self.input];
        for layer in &self.layers {
            let next = layer.output_dims(*dims.last().unwrap())?;
            if next.iter().any(|&d| d > MAX_DIM) {
                return Err(Error::Config(format!("activation {next:?} exceeds the size limit {MAX_DIM}")));
            }
            dims.push(next);
        }
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.activation_dims()?;
        match self.layers.last() {
            Some(LayerSpec::Dense { .. }) => Ok(()),
            _ => Err(Error::Config(format!(
                "architecture must end in a dense layer (final dims {:?})",
                dims.last()
            ))),
        }
    }

    pub fn num_outputs(&self) -> usize {
        match self.layers.last() {
            Some(LayerSpec::Dense { outputs, .. }) => *outputs,
            _ => 0,
        }
    }

    /// Parameter shapes in storage order (weight then bias, layer by layer).
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.layers.iter().flat_map(|l| l.param_shapes()).collect()
    }

    pub fn input_len(&self) -> usize {
        self.input.iter().product()
    }
}

/// Per-sample intermediate values kept for the backward pass.
struct Trace<T> {
    activations: Vec<Vec<T>>,
    pool_argmax: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T = f32> {
    arch: Architecture,
    params: Vec<Tensor<T>>,
}

impl<T: Scalar> Network<T> {
    /// He-uniform weights scaled by fan-in, zero biases.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let mut params = Vec::new();
        for layer in &arch.layers {
            let shapes = layer.param_shapes();
            if shapes.is_empty() {
                continue;
            }
            let bound = (6.0 / layer.fan_in() as f64).sqrt();
            let wshape = shapes[0].clone();
            let n: usize = wshape.iter().product();
            let w = (0..n)
                .map(|_| T::of_f64(rng.gen_range(-bound..bound)))
                .collect();
            params.push(Tensor::new(wshape, w)?);
            params.push(Tensor::zeros(shapes[1].clone()));
        }
        Ok(Network { arch, params })
    }

    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let params = arch.param_shapes().into_iter().map(Tensor::zeros).collect();
        Ok(Network { arch, params })
    }

    pub fn from_params(arch: Architecture, params: Vec<Tensor<T>>) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.param_shapes();
        if shapes.len() != params.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for (s, p) in shapes.iter().zip(&params) {
            p.expect_shape(s)?;
        }
        Ok(Network { arch, params })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn num_outputs(&self) -> usize {
        self.arch.num_outputs()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            arch: self.arch.clone(),
            params: self.params.iter().map(|p| p.cast()).collect(),
        }
    }

    /// Logits for a batch laid out as `[B, c, h, w]`; returns `[B, outputs]`.
    pub fn forward(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let [c, h, w] = self.arch.input;
        let b = batch.shape().first().copied().unwrap_or(0);
        batch.expect_shape(&[b, c, h, w])?;
        let k = self.num_outputs();
        let mut out = Vec::with_capacity(b * k);
        for i in 0..b {
            out.extend(self.forward_sample_unchecked(batch.row(i)));
        }
        Tensor::new(vec![b, k], out)
    }

    /// Logits for one flattened `[c, h, w]` input.
    pub fn forward_sample(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.arch.input_len() {
            return Err(Error::Shape {
                expected: self.arch.input.to_vec(),
                actual: vec![x.len()],
            });
        }
        Ok(self.forward_sample_unchecked(x))
    }

    fn forward_sample_unchecked(&self, x: &[T]) -> Vec<T> {
        let trace = self.trace(x);
        trace.activations.into_iter().last().unwrap()
    }

    fn trace(&self, x: &[T]) -> Trace<T> {
        let dims = self
            .arch
            .activation_dims()
            .expect("architecture validated at construction");
        let mut activations = Vec::with_capacity(self.arch.layers.len() + 1);
        let mut pool_argmax = Vec::new();
        activations.push(x.to_vec());
        let mut p = 0;
        for (li, layer) in self.arch.layers.iter().enumerate() {
            let input = &activations[li];
            let out = match *layer {
                LayerSpec::Conv2d {
                    kernel,
                    stride,
                    padding,
                    ..
                } => {
                    let geo = ConvGeometry::new(dims[li], dims[li + 1], kernel, stride, padding);
                    let out = conv_forward(&geo, input, self.params[p].data(), self.params[p + 1].data());
                    p += 2;
                    out
                }
                LayerSpec::Relu => input.iter().map(|&v| v.max(T::zero())).collect(),
                LayerSpec::Tanh => input.iter().map(|&v| v.tanh()).collect(),
                LayerSpec::MaxPool { size } => {
                    let (out, arg) = pool_forward(dims[li], dims[li + 1], size, input);
                    pool_argmax.push(arg);
                    out
                }
                LayerSpec::Dense { inputs, outputs } => {
                    let w = self.params[p].data();
                    let b = self.params[p + 1].data();
                    p += 2;
                    (0..outputs)
                        .map(|o| {
                            let row = &w[o * inputs..(o + 1) * inputs];
                            b[o] + dot(row, input)
                        })
                        .collect()
                }
            };
            activations.push(out);
        }
        Trace {
            activations,
            pool_argmax,
        }
    }

    /// Gradients of `L(logits)` with respect to every parameter, given the
    /// derivative of `L` with respect to the logits of input `x`.
    pub fn backward_sample(&self, x: &[T], dlogits_fn: impl FnOnce(&[T]) -> Vec<T>) -> (Vec<T>, Vec<Vec<T>>) {
        let dims = self
            .arch
            .activation_dims()
            .expect("architecture validated at construction");
        let trace = self.trace(x);
        let logits = trace.activations.last().unwrap().clone();
        let mut grad = dlogits_fn(&logits);
        let mut grads: Vec<Vec<T>> = self.params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        let mut p = self.params.len();
        let mut pool_idx = trace.pool_argmax.len();
        for (li, layer) in self.arch.layers.iter().enumerate().rev() {
            let input = &trace.activations[li];
            let need_input_grad = li > 0;
            grad = match *layer {
                LayerSpec::Conv2d {
                    kernel,
                    stride,
                    padding,
                    ..
                } => {
                    p -= 2;
                    let geo = ConvGeometry::new(dims[li], dims[li + 1], kernel, stride, padding);
                    let (gw, rest) = grads[p..].split_at_mut(1);
                    conv_backward(
                        &geo,
                        input,
                        self.params[p].data(),
                        &grad,
                        &mut gw[0],
                        &mut rest[0],
                        need_input_grad,
                    )
                }
                LayerSpec::Relu => input
                    .iter()
                    .zip(&grad)
                    .map(|(&a, &g)| if a > T::zero() { g } else { T::zero() })
                    .collect(),
                LayerSpec::Tanh => trace.activations[li + 1]
                    .iter()
                    .zip(&grad)
                    .map(|(&y, &g)| g * (T::one() - y * y))
                    .collect(),
                LayerSpec::MaxPool { .. } => {
                    pool_idx -= 1;
                    let mut gin = vec![T::zero(); input.len()];
                    for (&src, &g) in trace.pool_argmax[pool_idx].iter().zip(&grad) {
                        gin[src] = gin[src] + g;
                    }
                    gin
                }
                LayerSpec::Dense { inputs, outputs } => {
                    p -= 2;
                    let w = self.params[p].data();
                    for o in 0..outputs {
                        let g = grad[o];
                        grads[p + 1][o] = grads[p + 1][o] + g;
                        let gw = &mut grads[p][o * inputs..(o + 1) * inputs];
                        for (gwi, &xi) in gw.iter_mut().zip(input) {
                            *gwi = *gwi + g * xi;
                        }
                    }
                    if need_input_grad {
                        let mut gin = vec![T::zero(); inputs];
                        for o in 0..outputs {
                            let g = grad[o];
                            let row = &w[o * inputs..(o + 1) * inputs];
                            for (gi, &wi) in gin.iter_mut().zip(row) {
                                *gi = *gi + g * wi;
                            }
                        }
                        gin
                    } else {
                        Vec::new()
                    }
                }
            };
        }
        (logits, grads)
    }

    /// Weighted cross-entropy of one sample and its parameter gradients.
    pub fn sample_ce_grad(&self, x: &[T], target: usize, weight: T) -> (T, Vec<Vec<T>>) {
        let mut loss = T::zero();
        let (_, grads) = self.backward_sample(x, |logits| {
            let lsm = log_softmax(logits);
            loss = -weight * lsm[target];
            let mut d = softmax(logits);
            d[target] = d[target] - T::one();
            d.iter_mut().for_each(|v| *v = *v * weight);
            d
        });
        (loss, grads)
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

struct ConvGeometry {
    in_dims: [usize; 3],
    out_dims: [usize; 3],
    kernel: usize,
    stride: usize,
    padding: usize,
}

impl ConvGeometry {
    fn new(in_dims: [usize; 3], out_dims: [usize; 3], kernel: usize, stride: usize, padding: usize) -> Self {
        ConvGeometry {
            in_dims,
            out_dims,
            kernel,
            stride,
            padding,
        }
    }

    /// Output index range whose input tap `o*stride + k - padding` lies in `0..len`.
    fn valid_range(&self, k: usize, len: usize, out_len: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = if k >= self.padding {
            0
        } else {
            (self.padding - k).div_ceil(s)
        };
        let top = len + self.padding;
        let hi = if top <= k {
            0
        } else {
            ((top - k - 1) / s + 1).min(out_len)
        };
        (lo, hi.max(lo))
    }
}

fn conv_forward<T: Scalar>(geo: &ConvGeometry, input: &[T], w: &[T], b: &[T]) -> Vec<T> {
    let [cin, ih, iw] = geo.in_dims;
    let [cout, oh, ow] = geo.out_dims;
    let (k, s, pad) = (geo.kernel, geo.stride, geo.padding);
    let mut out = vec![T::zero(); cout * oh * ow];
    for o in 0..cout {
        let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
        plane.iter_mut().for_each(|v| *v = b[o]);
        for c in 0..cin {
            let src = &input[c * ih * iw..(c + 1) * ih * iw];
            for ky in 0..k {
                let (y0, y1) = geo.valid_range(ky, ih, oh);
                for kx in 0..k {
                    let wv = w[((o * cin + c) * k + ky) * k + kx];
                    let (x0, x1) = geo.valid_range(kx, iw, ow);
                    for y in y0..y1 {
                        let iy = y * s + ky - pad;
                        let dst = &mut plane[y * ow..(y + 1) * ow];
                        let row = &src[iy * iw..(iy + 1) * iw];
                        if s == 1 {
                            let off = x0 + kx - pad;
                            for (d, &v) in dst[x0..x1].iter_mut().zip(&row[off..off + (x1 - x0)]) {
                                *d = *d + wv * v;
                            }
                        } else {
                            for x in x0..x1 {
                                dst[x] = dst[x] + wv * row[x * s + kx - pad];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Scalar>(
    geo: &ConvGeometry,
    input: &[T],
    w: &[T],
    gout: &[T],
    gw: &mut [T],
    gb: &mut [T],
    need_input_grad: bool,
) -> Vec<T> {
    let [cin, ih, iw] = geo.in_dims;
    let [cout, oh, ow] = geo.out_dims;
    let (k, s, pad) = (geo.kernel, geo.stride, geo.padding);
    let mut gin = if need_input_grad {
        vec![T::zero(); input.len()]
    } else {
        Vec::new()
    };
    for o in 0..cout {
        let gplane = &gout[o * oh * ow..(o + 1) * oh * ow];
        gb[o] = gb[o] + gplane.iter().copied().sum();
        for c in 0..cin {
            let src = &input[c * ih * iw..(c + 1) * ih * iw];
            for ky in 0..k {
                let (y0, y1) = geo.valid_range(ky, ih, oh);
                for kx in 0..k {
                    let widx = ((o * cin + c) * k + ky) * k + kx;
                    let wv = w[widx];
                    let (x0, x1) = geo.valid_range(kx, iw, ow);
                    let mut acc = T::zero();
                    for y in y0..y1 {
                        let iy = y * s + ky - pad;
                        let g = &gplane[y * ow..(y + 1) * ow];
                        if s == 1 {
                            let off = x0 + kx - pad;
                            let row = &src[iy * iw + off..iy * iw + off + (x1 - x0)];
                            acc = acc + dot(&g[x0..x1], row);
                            if need_input_grad {
                                let dst = &mut gin[c * ih * iw + iy * iw + off..c * ih * iw + iy * iw + off + (x1 - x0)];
                                for (d, &gv) in dst.iter_mut().zip(&g[x0..x1]) {
                                    *d = *d + wv * gv;
                                }
                            }
                        } else {
                            for x in x0..x1 {
                                let ix = x * s + kx - pad;
                                acc = acc + g[x] * src[iy * iw + ix];
                                if need_input_grad {
                                    let d = &mut gin[c * ih * iw + iy * iw + ix];
                                    *d = *d + wv * g[x];
                                }
                            }
                        }
                    }
                    gw[widx] = gw[widx] + acc;
                }
            }
        }
    }
    gin
}

fn pool_forward<T: Scalar>(in_dims: [usize; 3], out_dims: [usize; 3], size: usize, input: &[T]) -> (Vec<T>, Vec<usize>) {
    let [c, ih, iw] = in_dims;
    let [_, oh, ow] = out_dims;
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let mut best = ch * ih * iw + y * size * iw + x * size;
                for dy in 0..size {
                    for dx in 0..size {
                        let idx = ch * ih * iw + (y * size + dy) * iw + x * size + dx;
                        if input[idx] > input[best] {
                            best = idx;
                        }
                    }
                }
                out.push(input[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dense_only(inputs: usize, outputs: usize) -> Architecture {
        Architecture {
            input: [inputs, 1, 1],
            layers: vec![LayerSpec::Dense { inputs, outputs }],
        }
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let net = Network::<f32>::zeros(Architecture::small_cnn([3, 8, 8], (2, 3), 4)).unwrap();
        let x = vec![0.7; 3 * 8 * 8];
        assert_eq!(net.forward_sample(&x).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn dense_layer_matches_hand_product() {
        // W = [[1, 0], [0, 1], [2, -1]], b = [0.5, -0.5, 0]
        let arch = dense_only(2, 3);
        let params = vec![
            Tensor::new(vec![3, 2], vec![1.0, 0.0, 0.0, 1.0, 2.0, -1.0]).unwrap(),
            Tensor::new(vec![3], vec![0.5, -0.5, 0.0]).unwrap(),
        ];
        let net = Network::<f32>::from_params(arch, params).unwrap();
        assert_eq!(net.forward_sample(&[1.0, 2.0]).unwrap(), vec![1.5, 1.5, 0.0]);
    }

    #[test]
    fn identical_batch_rows_give_identical_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Network::<f32>::init(Architecture::small_cnn([3, 8, 8], (2, 3), 4), &mut rng).unwrap();
        let x: Vec<f32> = (0..192).map(|i| (i as f32 * 0.37).sin().abs()).collect();
        let batch = Tensor::new(vec![2, 3, 8, 8], [x.clone(), x].concat()).unwrap();
        let out = net.forward(&batch).unwrap();
        assert_eq!(out.row(0), out.row(1));
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let net = Network::<f32>::zeros(Architecture::small_cnn([3, 8, 8], (2, 3), 4)).unwrap();
        assert!(matches!(net.forward_sample(&[0.0; 10]), Err(Error::Shape { .. })));
        let batch = Tensor::zeros(vec![1, 3, 4, 4]);
        assert!(net.forward(&batch).is_err());
    }

    #[test]
    fn inconsistent_architecture_is_rejected() {
        let mut arch = Architecture::small_cnn([3, 8, 8], (2, 3), 4);
        arch.layers[6] = LayerSpec::Dense { inputs: 5, outputs: 4 };
        assert!(arch.validate().is_err());
    }

    #[test]
    fn strided_conv_geometry() {
        let arch = Architecture {
            input: [1, 5, 5],
            layers: vec![
                LayerSpec::Conv2d {
                    in_channels: 1,
                    out_channels: 1,
                    kernel: 3,
                    stride: 2,
                    padding: 1,
                },
                LayerSpec::Dense { inputs: 9, outputs: 1 },
            ],
        };
        assert_eq!(arch.activation_dims().unwrap()[1], [1, 3, 3]);
    }
}
