//! On-disk PFN layout: `model.json` (header) + `weights.bin` (`PFN1` magic,
//! then every parameter tensor as little-endian binary32, in layer order).
//!
//! Parameter references carry absolute byte offsets into `weights.bin`; the
//! loader requires them to be contiguous, so exporting a loaded network
//! reproduces the original blob byte for byte. See `docs/pfn.md`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{PfnError, Result};
use crate::layer::ConvGeometry;
use crate::{Layer, Network, Shape};

pub const MAGIC: &[u8; 4] = b"PFN1";
pub const HEADER_FILE: &str = "model.json";
pub const WEIGHTS_FILE: &str = "weights.bin";
const FORMAT_TAG: &str = "PFN1";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    name: String,
    input_shape: Shape,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    metadata: Map<String, Value>,
    layers: Vec<Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParamRef {
    name: String,
    offset: usize,
    count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LayerHeader {
    Dense {
        #[serde(rename = "in")]
        inputs: usize,
        #[serde(rename = "out")]
        outputs: usize,
        params: Vec<ParamRef>,
    },
    Conv2d {
        #[serde(flatten)]
        conv: ConvHeader,
        params: Vec<ParamRef>,
    },
    Conv2dTranspose {
        #[serde(flatten)]
        conv: ConvHeader,
        params: Vec<ParamRef>,
    },
    Flatten,
    Reshape {
        shape: Shape,
    },
    Relu,
    LeakyRelu {
        alpha: f32,
    },
    Tanh,
    Sigmoid,
    Softmax,
    Batchnorm {
        channels: usize,
        eps: f32,
        params: Vec<ParamRef>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct ConvHeader {
    in_channels: usize,
    out_channels: usize,
    kernel: [usize; 2],
    stride: usize,
    padding: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output_shape: Option<Shape>,
}

impl Network {
    /// Loads and validates a PFN directory.
    pub fn load(dir: impl AsRef<Path>) -> Result<Network> {
        let dir = dir.as_ref();
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read(&path).map_err(|source| PfnError::Io { path, source })
        };
        let header = read(HEADER_FILE)?;
        let header = String::from_utf8(header)
            .map_err(|_| PfnError::Header(format!("{HEADER_FILE} is not UTF-8")))?;
        let blob = read(WEIGHTS_FILE)?;
        Network::from_parts(&header, &blob)
    }

    /// Parses an in-memory header + weights blob pair.
    pub fn from_parts(header: &str, blob: &[u8]) -> Result<Network> {
        let header: Header =
            serde_json::from_str(header).map_err(|e| PfnError::Header(e.to_string()))?;
        if header.format != FORMAT_TAG {
            return Err(PfnError::Header(format!(
                "unsupported format tag {:?}, expected {FORMAT_TAG:?}",
                header.format
            )));
        }
        if blob.len() < MAGIC.len() || &blob[..MAGIC.len()] != MAGIC {
            return Err(PfnError::BadMagic);
        }

        let mut specs = Vec::with_capacity(header.layers.len());
        for (idx, raw) in header.layers.into_iter().enumerate() {
            let spec: LayerHeader = serde_json::from_value(raw).map_err(|e| PfnError::Layer {
                layer: idx,
                message: format!(
                    "{e} (supported kinds: dense, conv2d, conv2d_transpose, flatten, reshape, \
                     relu, leaky_relu, tanh, sigmoid, softmax, batchnorm)"
                ),
            })?;
            specs.push(spec);
        }

        // Pass 1: parameter references must tile the blob contiguously.
        let mut cursor = MAGIC.len();
        for (idx, spec) in specs.iter().enumerate() {
            let expected = expected_param_names(spec);
            let refs = spec_params(spec);
            let names: Vec<&str> = refs.iter().map(|r| r.name.as_str()).collect();
            if !expected.contains(&names.as_slice()) {
                return Err(PfnError::Layer {
                    layer: idx,
                    message: format!("parameter list {names:?} does not match {expected:?}"),
                });
            }
            for r in refs {
                if r.offset != cursor {
                    return Err(PfnError::Layer {
                        layer: idx,
                        message: format!(
                            "parameter {:?} at byte offset {} but the previous tensor ends at {cursor}",
                            r.name, r.offset
                        ),
                    });
                }
                cursor += 4 * r.count;
            }
        }
        if cursor != blob.len() {
            return Err(PfnError::BlobLength {
                expected: cursor,
                actual: blob.len(),
            });
        }

        // Pass 2: materialize layers.
        let mut layers = Vec::with_capacity(specs.len());
        let mut declared = Vec::new();
        for (idx, spec) in specs.into_iter().enumerate() {
            let take = |r: &ParamRef| read_f32s(&blob[r.offset..r.offset + 4 * r.count]);
            let layer = match spec {
                LayerHeader::Dense {
                    inputs,
                    outputs,
                    params,
                } => Layer::Dense {
                    inputs,
                    outputs,
                    weight: take(&params[0]),
                    bias: take(&params[1]),
                },
                LayerHeader::Conv2d { conv, params } => {
                    if let Some(s) = conv.output_shape {
                        declared.push((idx, s));
                    }
                    Layer::Conv2d {
                        geometry: conv.geometry(),
                        weight: take(&params[0]),
                        bias: params.get(1).map(take),
                    }
                }
                LayerHeader::Conv2dTranspose { conv, params } => {
                    if let Some(s) = conv.output_shape {
                        declared.push((idx, s));
                    }
                    Layer::Conv2dTranspose {
                        geometry: conv.geometry(),
                        weight: take(&params[0]),
                        bias: params.get(1).map(take),
                    }
                }
                LayerHeader::Flatten => Layer::Flatten,
                LayerHeader::Reshape { shape } => Layer::Reshape(shape),
                LayerHeader::Relu => Layer::Relu,
                LayerHeader::LeakyRelu { alpha } => Layer::LeakyRelu(alpha),
                LayerHeader::Tanh => Layer::Tanh,
                LayerHeader::Sigmoid => Layer::Sigmoid,
                LayerHeader::Softmax => Layer::Softmax,
                LayerHeader::Batchnorm {
                    channels,
                    eps,
                    params,
                } => Layer::BatchNorm {
                    channels,
                    eps,
                    gamma: take(&params[0]),
                    beta: take(&params[1]),
                    mean: take(&params[2]),
                    var: take(&params[3]),
                },
            };
            layers.push(layer);
        }

        let net = Network::with_metadata(header.name, header.input_shape, layers, header.metadata)?;
        for (idx, shape) in declared {
            let actual = net.layer_shapes()[idx];
            if actual != shape {
                return Err(PfnError::Shape {
                    layer: idx,
                    message: format!("declared output {shape} but geometry yields {actual}"),
                });
            }
        }
        Ok(net)
    }

    /// Writes `model.json` and `weights.bin` into `dir` (created if missing).
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| PfnError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let header_path = dir.join(HEADER_FILE);
        fs::write(&header_path, self.header_json()).map_err(io(&header_path))?;
        let blob_path = dir.join(WEIGHTS_FILE);
        fs::write(&blob_path, self.weights_blob()).map_err(io(&blob_path))?;
        Ok(())
    }

    /// The exact `weights.bin` contents for this network.
    pub fn weights_blob(&self) -> Vec<u8> {
        let mut blob = Vec::with_capacity(MAGIC.len() + 4 * self.param_count());
        blob.extend_from_slice(MAGIC);
        for layer in self.layers() {
            for (_, tensor) in layer.params() {
                for v in tensor {
                    blob.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        blob
    }

    /// The `model.json` text for this network, with offsets matching `weights_blob`.
    pub fn header_json(&self) -> String {
        let mut cursor = MAGIC.len();
        let mut refs = |layer: &Layer| -> Vec<ParamRef> {
            layer
                .params()
                .into_iter()
                .map(|(name, t)| {
                    let r = ParamRef {
                        name: name.to_string(),
                        offset: cursor,
                        count: t.len(),
                    };
                    cursor += 4 * t.len();
                    r
                })
                .collect()
        };
        let layers = self
            .layers()
            .iter()
            .zip(self.layer_shapes())
            .map(|(layer, &out)| {
                let params = refs(layer);
                let spec = match layer {
                    Layer::Dense {
                        inputs, outputs, ..
                    } => LayerHeader::Dense {
                        inputs: *inputs,
                        outputs: *outputs,
                        params,
                    },
                    Layer::Conv2d { geometry, .. } => LayerHeader::Conv2d {
                        conv: ConvHeader::from_geometry(geometry, out),
                        params,
                    },
                    Layer::Conv2dTranspose { geometry, .. } => LayerHeader::Conv2dTranspose {
                        conv: ConvHeader::from_geometry(geometry, out),
                        params,
                    },
                    Layer::Flatten => LayerHeader::Flatten,
                    Layer::Reshape(shape) => LayerHeader::Reshape { shape: *shape },
                    Layer::Relu => LayerHeader::Relu,
                    Layer::LeakyRelu(alpha) => LayerHeader::LeakyRelu { alpha: *alpha },
                    Layer::Tanh => LayerHeader::Tanh,
                    Layer::Sigmoid => LayerHeader::Sigmoid,
                    Layer::Softmax => LayerHeader::Softmax,
                    Layer::BatchNorm { channels, eps, .. } => LayerHeader::Batchnorm {
                        channels: *channels,
                        eps: *eps,
                        params,
                    },
                };
                serde_json::to_value(spec).expect("layer header serializes")
            })
            .collect();
        let header = Header {
            format: FORMAT_TAG.to_string(),
            name: self.name().to_string(),
            input_shape: self.input_shape(),
            metadata: self.metadata().clone(),
            layers,
        };
        let mut text = serde_json::to_string_pretty(&header).expect("header serializes");
        text.push('\n');
        text
    }
}

impl ConvHeader {
    fn geometry(&self) -> ConvGeometry {
        ConvGeometry {
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            kernel_h: self.kernel[0],
            kernel_w: self.kernel[1],
            stride: self.stride,
            padding: self.padding,
        }
    }

    fn from_geometry(g: &ConvGeometry, out: Shape) -> Self {
        ConvHeader {
            in_channels: g.in_channels,
            out_channels: g.out_channels,
            kernel: [g.kernel_h, g.kernel_w],
            stride: g.stride,
            padding: g.padding,
            output_shape: Some(out),
        }
    }
}

fn spec_params(spec: &LayerHeader) -> &[ParamRef] {
    match spec {
        LayerHeader::Dense { params, .. }
        | LayerHeader::Conv2d { params, .. }
        | LayerHeader::Conv2dTranspose { params, .. }
        | LayerHeader::Batchnorm { params, .. } => params,
        _ => &[],
    }
}

fn expected_param_names(spec: &LayerHeader) -> &'static [&'static [&'static str]] {
    match spec {
        LayerHeader::Dense { .. } => &[&["weight", "bias"]],
        LayerHeader::Conv2d { .. } | LayerHeader::Conv2dTranspose { .. } => {
            &[&["weight", "bias"], &["weight"]]
        }
        LayerHeader::Batchnorm { .. } => &[&["gamma", "beta", "running_mean", "running_var"]],
        _ => &[&[]],
    }
}

fn read_f32s(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}
