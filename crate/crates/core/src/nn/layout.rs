//! Deterministic flat layout of model parameters.
//!
//! Every matrix-valued parameter occupies one named row-major segment of a
//! flat `Vec<f64>`. The segment order is the construction order, so a layout
//! is a pure function of the config that produced it.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;

use crate::nn::graph::{Graph, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    /// Dense weight; initialized U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    Weight { fan_in: usize },
    /// Bias; initialized 0.
    Bias,
    /// Layer-norm gain; initialized 1.
    LnGain,
    /// Layer-norm offset; initialized 0.
    LnBias,
}

#[derive(Debug, Clone)]
pub struct Segment {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
    pub kind: SegmentKind,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParamLayout {
    segments: Vec<Segment>,
    total: usize,
}

impl ParamLayout {
    pub fn push(&mut self, name: impl Into<String>, rows: usize, cols: usize, kind: SegmentKind) {
        let name = name.into();
        debug_assert!(self.segment(&name).is_none(), "duplicate segment {name}");
        self.segments.push(Segment {
            name,
            rows,
            cols,
            offset: self.total,
            kind,
        });
        self.total += rows * cols;
    }

    pub fn param_count(&self) -> usize {
        self.total
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    /// Copy one segment out of a flat parameter vector.
    pub fn extract(&self, params: &[f64], name: &str) -> Array2<f64> {
        let seg = self.segment(name).unwrap_or_else(|| panic!("segment {name}"));
        Array2::from_shape_vec(
            (seg.rows, seg.cols),
            params[seg.offset..seg.offset + seg.len()].to_vec(),
        )
        .expect("segment shape")
    }

    /// Write one segment back into a flat parameter vector.
    pub fn write(&self, params: &mut [f64], name: &str, value: &Array2<f64>) {
        let seg = self.segment(name).unwrap_or_else(|| panic!("segment {name}"));
        assert_eq!(value.dim(), (seg.rows, seg.cols));
        for (i, v) in value.iter().enumerate() {
            params[seg.offset + i] = *v;
        }
    }

    /// Fresh parameter vector: weights drawn from a symmetric uniform with
    /// scale 1/sqrt(fan_in), biases zero, layer-norm gains one.
    pub fn init_params<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut params = vec![0.0; self.total];
        for seg in &self.segments {
            match seg.kind {
                SegmentKind::Weight { fan_in } => {
                    let scale = 1.0 / (fan_in as f64).sqrt();
                    for p in &mut params[seg.offset..seg.offset + seg.len()] {
                        *p = rng.random_range(-scale..scale);
                    }
                }
                SegmentKind::Bias | SegmentKind::LnBias => {}
                SegmentKind::LnGain => {
                    for p in &mut params[seg.offset..seg.offset + seg.len()] {
                        *p = 1.0;
                    }
                }
            }
        }
        params
    }
}

/// Graph leaves for every segment of a layout, so a backward pass can be
/// scattered back into a flat gradient.
pub struct ParamBinding {
    ids: BTreeMap<String, NodeId>,
}

impl ParamBinding {
    pub fn bind(g: &mut Graph, layout: &ParamLayout, params: &[f64]) -> Self {
        let mut ids = BTreeMap::new();
        for seg in layout.segments() {
            let id = g.leaf(layout.extract(params, &seg.name));
            ids.insert(seg.name.clone(), id);
        }
        Self { ids }
    }

    pub fn node(&self, name: &str) -> NodeId {
        *self
            .ids
            .get(name)
            .unwrap_or_else(|| panic!("unbound segment {name}"))
    }

    /// Assemble the flat gradient from a backward sweep.
    pub fn flat_grad(&self, layout: &ParamLayout, grads: &[Array2<f64>]) -> Vec<f64> {
        let mut flat = vec![0.0; layout.param_count()];
        for seg in layout.segments() {
            let id = self.node(&seg.name);
            for (i, v) in grads[id.0].iter().enumerate() {
                flat[seg.offset + i] = *v;
            }
        }
        flat
    }
}
