use std::fmt;

use serde::{Deserialize, Serialize};

/// Activation shape: a flat vector or a channel-major `(channels, height, width)` volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "Vec<usize>", try_from = "Vec<usize>")]
pub enum Shape {
    Flat(usize),
    Chw { c: usize, h: usize, w: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Flat(n) => n,
            Shape::Chw { c, h, w } => c * h * w,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> Vec<usize> {
        match *self {
            Shape::Flat(n) => vec![n],
            Shape::Chw { c, h, w } => vec![c, h, w],
        }
    }
}

impl From<Shape> for Vec<usize> {
    fn from(s: Shape) -> Self {
        s.dims()
    }
}

impl TryFrom<Vec<usize>> for Shape {
    type Error = String;

    fn try_from(dims: Vec<usize>) -> Result<Self, Self::Error> {
        let shape = match dims.as_slice() {
            [n] => Shape::Flat(*n),
            [c, h, w] => Shape::Chw {
                c: *c,
                h: *h,
                w: *w,
            },
            other => return Err(format!("shape must have 1 or 3 dimensions, got {other:?}")),
        };
        if shape.is_empty() {
            return Err(format!("shape {:?} has a zero dimension", shape.dims()));
        }
        Ok(shape)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Shape::Flat(n) => write!(f, "[{n}]"),
            Shape::Chw { c, h, w } => write!(f, "[{c}, {h}, {w}]"),
        }
    }
}

/// Dense activation tensor, row-major in `(c, h, w)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Shape,
    pub data: Vec<f64>,
}

impl Tensor {
    /// Panics if `data.len()` does not match the shape.
    pub fn new(shape: Shape, data: Vec<f64>) -> Self {
        assert_eq!(shape.len(), data.len(), "tensor data does not fill shape {shape}");
        Tensor { shape, data }
    }

    pub fn flat(data: Vec<f64>) -> Self {
        Tensor {
            shape: Shape::Flat(data.len()),
            data,
        }
    }
}
