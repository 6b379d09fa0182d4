use crate::Shape;

/// Geometry shared by `conv2d` and `conv2d_transpose`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    fn check(&self) -> Result<(), String> {
        if self.stride == 0 {
            return Err("stride must be >= 1".into());
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err("channel counts must be >= 1".into());
        }
        if self.kernel_h == 0 || self.kernel_w == 0 {
            return Err("kernel extent must be >= 1".into());
        }
        Ok(())
    }

    pub fn weight_count(&self) -> usize {
        self.in_channels * self.out_channels * self.kernel_h * self.kernel_w
    }
}

/// One inference layer together with its parameters.
///
/// Weight layouts (row-major):
/// - dense: `[outputs, inputs]`
/// - conv2d: `[out_channels, in_channels, kernel_h, kernel_w]`
/// - conv2d_transpose: `[in_channels, out_channels, kernel_h, kernel_w]`
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense {
        inputs: usize,
        outputs: usize,
        weight: Vec<f32>,
        bias: Vec<f32>,
    },
    Conv2d {
        geometry: ConvGeometry,
        weight: Vec<f32>,
        bias: Option<Vec<f32>>,
    },
    Conv2dTranspose {
        geometry: ConvGeometry,
        weight: Vec<f32>,
        bias: Option<Vec<f32>>,
    },
    Flatten,
    Reshape(Shape),
    Relu,
    LeakyRelu(f32),
    Tanh,
    Sigmoid,
    Softmax,
    BatchNorm {
        channels: usize,
        eps: f32,
        gamma: Vec<f32>,
        beta: Vec<f32>,
        mean: Vec<f32>,
        var: Vec<f32>,
    },
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Conv2d { .. } => "conv2d",
            Layer::Conv2dTranspose { .. } => "conv2d_transpose",
            Layer::Flatten => "flatten",
            Layer::Reshape(_) => "reshape",
            Layer::Relu => "relu",
            Layer::LeakyRelu(_) => "leaky_relu",
            Layer::Tanh => "tanh",
            Layer::Sigmoid => "sigmoid",
            Layer::Softmax => "softmax",
            Layer::BatchNorm { .. } => "batchnorm",
        }
    }

    /// Named parameter tensors in blob order.
    pub fn params(&self) -> Vec<(&'static str, &[f32])> {
        match self {
            Layer::Dense { weight, bias, .. } => vec![("weight", weight), ("bias", bias)],
            Layer::Conv2d { weight, bias, .. } | Layer::Conv2dTranspose { weight, bias, .. } => {
                let mut p = vec![("weight", weight.as_slice())];
                if let Some(b) = bias {
                    p.push(("bias", b.as_slice()));
                }
                p
            }
            Layer::BatchNorm {
                gamma,
                beta,
                mean,
                var,
                ..
            } => vec![
                ("gamma", gamma),
                ("beta", beta),
                ("running_mean", mean),
                ("running_var", var),
            ],
            _ => Vec::new(),
        }
    }

    /// Checks parameter lengths and returns the output shape for `input`.
    pub fn output_shape(&self, input: Shape) -> Result<Shape, String> {
        match self {
            Layer::Dense {
                inputs,
                outputs,
                weight,
                bias,
            } => {
                if *inputs == 0 || *outputs == 0 {
                    return Err("dense widths must be >= 1".into());
                }
                if weight.len() != inputs * outputs || bias.len() != *outputs {
                    return Err(format!(
                        "dense({inputs}->{outputs}) expects {} weights and {outputs} biases",
                        inputs * outputs
                    ));
                }
                match input {
                    Shape::Flat(n) if n == *inputs => Ok(Shape::Flat(*outputs)),
                    other => Err(format!("dense({inputs}->{outputs}) cannot accept input {other}")),
                }
            }
            Layer::Conv2d {
                geometry: g,
                weight,
                bias,
            } => {
                g.check()?;
                check_conv_params(g, weight, bias.as_deref())?;
                let (h, w) = conv_input(g, input)?;
                let padded_h = h + 2 * g.padding;
                let padded_w = w + 2 * g.padding;
                if padded_h < g.kernel_h || padded_w < g.kernel_w {
                    return Err(format!("kernel larger than padded input {input}"));
                }
                Ok(Shape::Chw {
                    c: g.out_channels,
                    h: (padded_h - g.kernel_h) / g.stride + 1,
                    w: (padded_w - g.kernel_w) / g.stride + 1,
                })
            }
            Layer::Conv2dTranspose {
                geometry: g,
                weight,
                bias,
            } => {
                g.check()?;
                check_conv_params(g, weight, bias.as_deref())?;
                let (h, w) = conv_input(g, input)?;
                let full_h = (h - 1) * g.stride + g.kernel_h;
                let full_w = (w - 1) * g.stride + g.kernel_w;
                if full_h <= 2 * g.padding || full_w <= 2 * g.padding {
                    return Err(format!("padding {} consumes the whole output", g.padding));
                }
                Ok(Shape::Chw {
                    c: g.out_channels,
                    h: full_h - 2 * g.padding,
                    w: full_w - 2 * g.padding,
                })
            }
            Layer::Flatten => Ok(Shape::Flat(input.len())),
            Layer::Reshape(target) => {
                if target.len() == input.len() {
                    Ok(*target)
                } else {
                    Err(format!("cannot reshape {input} into {target}"))
                }
            }
            Layer::Relu | Layer::Tanh | Layer::Sigmoid | Layer::Softmax => Ok(input),
            Layer::LeakyRelu(alpha) => {
                if alpha.is_finite() {
                    Ok(input)
                } else {
                    Err("leaky_relu alpha must be finite".into())
                }
            }
            Layer::BatchNorm {
                channels,
                eps,
                gamma,
                beta,
                mean,
                var,
            } => {
                if *channels == 0 {
                    return Err("batchnorm channels must be >= 1".into());
                }
                if !(*eps > 0.0) {
                    return Err("batchnorm epsilon must be > 0".into());
                }
                if [gamma, beta, mean, var].iter().any(|p| p.len() != *channels) {
                    return Err(format!("batchnorm expects 4 x {channels} parameters"));
                }
                let have = match input {
                    Shape::Flat(n) => n,
                    Shape::Chw { c, .. } => c,
                };
                if have != *channels {
                    return Err(format!("batchnorm({channels}) cannot accept input {input}"));
                }
                Ok(input)
            }
        }
    }

    /// Forward pass; `input.len()` must match the shape validated at load time.
    pub(crate) fn forward(&self, input: Shape, x: &[f64]) -> Vec<f64> {
        match self {
            Layer::Dense {
                inputs,
                outputs,
                weight,
                bias,
            } => (0..*outputs)
                .map(|o| {
                    let row = &weight[o * inputs..(o + 1) * inputs];
                    row.iter().zip(x).map(|(&w, &v)| w as f64 * v).sum::<f64>() + bias[o] as f64
                })
                .collect(),
            Layer::Conv2d {
                geometry,
                weight,
                bias,
            } => conv2d(geometry, weight, bias.as_deref(), input, x),
            Layer::Conv2dTranspose {
                geometry,
                weight,
                bias,
            } => conv2d_transpose(geometry, weight, bias.as_deref(), input, x),
            Layer::Flatten | Layer::Reshape(_) => x.to_vec(),
            Layer::Relu => x.iter().map(|&v| v.max(0.0)).collect(),
            Layer::LeakyRelu(alpha) => {
                let a = *alpha as f64;
                x.iter().map(|&v| if v >= 0.0 { v } else { a * v }).collect()
            }
            Layer::Tanh => x.iter().map(|v| v.tanh()).collect(),
            Layer::Sigmoid => x.iter().map(|&v| sigmoid(v)).collect(),
            Layer::Softmax => softmax(x),
            Layer::BatchNorm {
                channels,
                eps,
                gamma,
                beta,
                mean,
                var,
            } => {
                let per_channel = x.len() / channels;
                x.iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        let c = i / per_channel;
                        let scale = gamma[c] as f64 / (var[c] as f64 + *eps as f64).sqrt();
                        (v - mean[c] as f64) * scale + beta[c] as f64
                    })
                    .collect()
            }
        }
    }
}

fn check_conv_params(g: &ConvGeometry, weight: &[f32], bias: Option<&[f32]>) -> Result<(), String> {
    if weight.len() != g.weight_count() {
        return Err(format!(
            "expects {} kernel weights, got {}",
            g.weight_count(),
            weight.len()
        ));
    }
    if let Some(b) = bias {
        if b.len() != g.out_channels {
            return Err(format!("expects {} biases, got {}", g.out_channels, b.len()));
        }
    }
    Ok(())
}

fn conv_input(g: &ConvGeometry, input: Shape) -> Result<(usize, usize), String> {
    match input {
        Shape::Chw { c, h, w } if c == g.in_channels => Ok((h, w)),
        other => Err(format!(
            "expects {} input channels in a [c, h, w] volume, got {other}",
            g.in_channels
        )),
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn conv2d(g: &ConvGeometry, weight: &[f32], bias: Option<&[f32]>, input: Shape, x: &[f64]) -> Vec<f64> {
    let Shape::Chw { h, w, .. } = input else {
        unreachable!("validated at load")
    };
    let (kh, kw, s, p) = (g.kernel_h, g.kernel_w, g.stride, g.padding as isize);
    let out_h = (h + 2 * g.padding - kh) / s + 1;
    let out_w = (w + 2 * g.padding - kw) / s + 1;
    let mut out = vec![0.0; g.out_channels * out_h * out_w];
    for o in 0..g.out_channels {
        let b = bias.map_or(0.0, |b| b[o] as f64);
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut acc = b;
                for i in 0..g.in_channels {
                    let plane = &x[i * h * w..(i + 1) * h * w];
                    let kernel = &weight[((o * g.in_channels + i) * kh) * kw..][..kh * kw];
                    for ky in 0..kh {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * s + kx) as isize - p;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += kernel[ky * kw + kx] as f64 * plane[iy as usize * w + ix as usize];
                        }
                    }
                }
                out[(o * out_h + oy) * out_w + ox] = acc;
            }
        }
    }
    out
}

fn conv2d_transpose(
    g: &ConvGeometry,
    weight: &[f32],
    bias: Option<&[f32]>,
    input: Shape,
    x: &[f64],
) -> Vec<f64> {
    let Shape::Chw { h, w, .. } = input else {
        unreachable!("validated at load")
    };
    let (kh, kw, s, p) = (g.kernel_h, g.kernel_w, g.stride, g.padding as isize);
    let out_h = (h - 1) * s + kh - 2 * g.padding;
    let out_w = (w - 1) * s + kw - 2 * g.padding;
    let mut out = vec![0.0; g.out_channels * out_h * out_w];
    for o in 0..g.out_channels {
        let b = bias.map_or(0.0, |b| b[o] as f64);
        out[o * out_h * out_w..(o + 1) * out_h * out_w].fill(b);
    }
    // Scatter form: every input pixel spreads its kernel footprint into the output.
    for i in 0..g.in_channels {
        for iy in 0..h {
            for ix in 0..w {
                let v = x[(i * h + iy) * w + ix];
                if v == 0.0 {
                    continue;
                }
                for o in 0..g.out_channels {
                    let kernel = &weight[((i * g.out_channels + o) * kh) * kw..][..kh * kw];
                    for ky in 0..kh {
                        let oy = (iy * s + ky) as isize - p;
                        if oy < 0 || oy >= out_h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ox = (ix * s + kx) as isize - p;
                            if ox < 0 || ox >= out_w as isize {
                                continue;
                            }
                            out[(o * out_h + oy as usize) * out_w + ox as usize] +=
                                kernel[ky * kw + kx] as f64 * v;
                        }
                    }
                }
            }
        }
    }
    out
}
