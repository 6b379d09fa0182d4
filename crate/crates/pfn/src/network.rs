use serde_json::{Map, Value};

use crate::error::{PfnError, Result};
use crate::{Layer, Shape, Tensor};

/// A validated, immutable feed-forward network.
///
/// Shapes are checked once at construction; `infer` is reentrant and may be
/// shared across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    name: String,
    input_shape: Shape,
    layers: Vec<Layer>,
    shapes: Vec<Shape>,
    metadata: Map<String, Value>,
}

impl Network {
    pub fn new(name: impl Into<String>, input_shape: Shape, layers: Vec<Layer>) -> Result<Self> {
        Self::with_metadata(name, input_shape, layers, Map::new())
    }

    pub fn with_metadata(
        name: impl Into<String>,
        input_shape: Shape,
        layers: Vec<Layer>,
        metadata: Map<String, Value>,
    ) -> Result<Self> {
        if input_shape.is_empty() {
            return Err(PfnError::Header("input shape has a zero dimension".into()));
        }
        let mut shapes = Vec::with_capacity(layers.len());
        let mut current = input_shape;
        for (idx, layer) in layers.iter().enumerate() {
            current = layer
                .output_shape(current)
                .map_err(|message| PfnError::Shape { layer: idx, message })?;
            shapes.push(current);
        }
        Ok(Network {
            name: name.into(),
            input_shape,
            layers,
            shapes,
            metadata,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn output_shape(&self) -> Shape {
        self.shapes.last().copied().unwrap_or(self.input_shape)
    }

    /// Output shape of every layer, in order.
    pub fn layer_shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn metadata(&self) -> &Map<String, Value> {
        &self.metadata
    }

    pub fn last_layer(&self) -> Option<&Layer> {
        self.layers.last()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.params())
            .map(|(_, p)| p.len())
            .sum()
    }

    /// Runs a forward pass. A flat input of the right length is also accepted
    /// by volumetric networks.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        let flat_ok = matches!(input.shape, Shape::Flat(n) if n == self.input_shape.len());
        if input.shape != self.input_shape && !flat_ok {
            return Err(PfnError::Input {
                expected: self.input_shape,
                actual: input.shape,
            });
        }
        let mut shape = self.input_shape;
        let mut data = input.data.clone();
        for (layer, &out) in self.layers.iter().zip(&self.shapes) {
            data = layer.forward(shape, &data);
            shape = out;
        }
        Ok(Tensor::new(shape, data))
    }
}
