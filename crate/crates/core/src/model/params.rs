use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamRole {
    Weight,
    Bias,
}

/// One trainable tensor inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Owning block (0-based).
    pub block: usize,
    /// Layer position inside the block.
    pub layer: usize,
    pub role: ParamRole,
    pub offset: usize,
    pub len: usize,
    pub shape: Vec<usize>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Segment {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Flat parameter vector `w` plus the segment table mapping it onto layer
/// tensors. Layers never own parameter storage, they read and write their
/// segment of `flat`, so the flat view and tensor views always agree.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterStore {
    segments: Vec<Segment>,
    flat: Vec<f64>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a zero-filled tensor and returns its segment id.
    pub fn push(
        &mut self,
        block: usize,
        layer: usize,
        role: ParamRole,
        shape: &[usize],
        fan_in: usize,
        fan_out: usize,
    ) -> usize {
        let len = shape.iter().product();
        let offset = self.flat.len();
        self.flat.resize(offset + len, 0.0);
        self.segments.push(Segment {
            block,
            layer,
            role,
            offset,
            len,
            shape: shape.to_vec(),
            fan_in,
            fan_out,
        });
        self.segments.len() - 1
    }

    /// Total parameter count `d`.
    pub fn dim(&self) -> usize {
        self.flat.len()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, id: usize) -> &Segment {
        &self.segments[id]
    }

    pub fn flat(&self) -> &[f64] {
        &self.flat
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.flat.len() {
            return Err(LabError::Contract(format!(
                "flat vector length {} != d = {}",
                values.len(),
                self.flat.len()
            )));
        }
        self.flat.copy_from_slice(values);
        Ok(())
    }

    pub fn values(&self, id: usize) -> &[f64] {
        &self.flat[self.segments[id].range()]
    }

    pub fn values_mut(&mut self, id: usize) -> &mut [f64] {
        let r = self.segments[id].range();
        &mut self.flat[r]
    }

    /// Copy of a segment as a shaped tensor.
    pub fn tensor(&self, id: usize) -> Tensor {
        Tensor::from_parts(self.segments[id].shape.clone(), self.values(id).to_vec())
    }

    pub fn set_tensor(&mut self, id: usize, t: &Tensor) -> Result<()> {
        if t.shape() != self.segments[id].shape.as_slice() {
            return Err(LabError::Shape(format!(
                "segment {id} has shape {:?}, got {:?}",
                self.segments[id].shape,
                t.shape()
            )));
        }
        self.values_mut(id).copy_from_slice(t.data());
        Ok(())
    }

    /// Checks that the segments tile `[0, d)` in order with no gaps.
    pub fn check_tiling(&self) -> Result<()> {
        let mut next = 0;
        for (i, s) in self.segments.iter().enumerate() {
            if s.offset != next || s.len != s.shape.iter().product::<usize>() {
                return Err(LabError::Contract(format!("segment {i} breaks tiling")));
            }
            next += s.len;
        }
        if next != self.flat.len() {
            return Err(LabError::Contract("segments do not cover d".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_and_tensor_views_alias() {
        let mut store = ParameterStore::new();
        let w = store.push(0, 0, ParamRole::Weight, &[2, 3], 2, 3);
        let b = store.push(0, 0, ParamRole::Bias, &[3], 2, 3);
        store.check_tiling().unwrap();
        assert_eq!(store.dim(), 9);

        store.flat_mut()[7] = 4.5;
        assert_eq!(store.values(b)[1], 4.5);

        let t = Tensor::from_vec(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        store.set_tensor(w, &t).unwrap();
        assert_eq!(&store.flat()[..6], t.data());
        assert_eq!(store.tensor(w), t);
        assert!(store.set_tensor(b, &t).is_err());
    }
}
