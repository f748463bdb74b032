//! Dense tensor components with an index signature, plus the jet-valued
//! variant the geometry engine differentiates.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::jet::Jet;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variance {
    Upper,
    Lower,
}

/// Which slot of the decomposition of TTM an index refers to. `Base` marks
/// the ordinary tensor indices on M carried by g, C, N and friends.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    Horizontal,
    Vertical,
    Base,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndexInfo {
    pub name: String,
    pub variance: Variance,
    pub block: Block,
}

impl IndexInfo {
    pub fn lower(name: &str) -> IndexInfo {
        IndexInfo {
            name: name.to_string(),
            variance: Variance::Lower,
            block: Block::Base,
        }
    }

    pub fn upper(name: &str) -> IndexInfo {
        IndexInfo {
            name: name.to_string(),
            variance: Variance::Upper,
            block: Block::Base,
        }
    }

    pub fn in_block(mut self, block: Block) -> IndexInfo {
        self.block = block;
        self
    }
}

/// Iterates all index tuples of a shape in row-major order.
pub fn index_iter(shape: &[usize]) -> IndexIter {
    IndexIter {
        shape: shape.to_vec(),
        next: if shape.iter().any(|&s| s == 0) {
            None
        } else {
            Some(vec![0; shape.len()])
        },
    }
}

pub struct IndexIter {
    shape: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for IndexIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.clone()?;
        let mut bumped = current.clone();
        let mut done = true;
        for axis in (0..self.shape.len()).rev() {
            bumped[axis] += 1;
            if bumped[axis] < self.shape[axis] {
                done = false;
                break;
            }
            bumped[axis] = 0;
        }
        self.next = if done || self.shape.is_empty() {
            None
        } else {
            Some(bumped)
        };
        Some(current)
    }
}

fn flat_offset(shape: &[usize], idx: &[usize]) -> usize {
    debug_assert_eq!(shape.len(), idx.len());
    let mut offset = 0;
    for (axis, &i) in idx.iter().enumerate() {
        debug_assert!(i < shape[axis]);
        offset = offset * shape[axis] + i;
    }
    offset
}

/// Dense numeric tensor with named, block-tagged indices.
#[derive(Clone, Debug)]
pub struct TensorValue {
    data: Vec<f64>,
    shape: Vec<usize>,
    signature: Vec<IndexInfo>,
}

impl TensorValue {
    pub fn new(data: Vec<f64>, shape: Vec<usize>, signature: Vec<IndexInfo>) -> Result<TensorValue> {
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::argument(format!(
                "tensor data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        if signature.len() != shape.len() {
            return Err(Error::argument(format!(
                "signature rank {} does not match shape rank {}",
                signature.len(),
                shape.len()
            )));
        }
        Ok(TensorValue {
            data,
            shape,
            signature,
        })
    }

    pub fn zeros(shape: Vec<usize>, signature: Vec<IndexInfo>) -> TensorValue {
        let len = shape.iter().product();
        TensorValue::new(vec![0.0; len], shape, signature)
            .expect("zeros construction is always consistent")
    }

    pub fn from_fn(
        shape: Vec<usize>,
        signature: Vec<IndexInfo>,
        mut f: impl FnMut(&[usize]) -> f64,
    ) -> TensorValue {
        let mut out = TensorValue::zeros(shape, signature);
        for idx in index_iter(&out.shape.clone()) {
            let v = f(&idx);
            out.set(&idx, v);
        }
        out
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn signature(&self) -> &[IndexInfo] {
        &self.signature
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[flat_offset(&self.shape, idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let offset = flat_offset(&self.shape, idx);
        self.data[offset] = value;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &TensorValue) -> f64 {
        assert_eq!(self.shape, other.shape, "shape mismatch in tensor diff");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn scale(&self, factor: f64) -> TensorValue {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= factor;
        }
        out
    }

    pub fn add(&self, other: &TensorValue) -> TensorValue {
        assert_eq!(self.shape, other.shape, "shape mismatch in tensor add");
        let mut out = self.clone();
        for (v, w) in out.data.iter_mut().zip(&other.data) {
            *v += w;
        }
        out
    }

    /// Rank-2 view as a matrix.
    pub fn as_matrix(&self) -> DMatrix<f64> {
        assert_eq!(self.rank(), 2, "as_matrix requires a rank-2 tensor");
        DMatrix::from_fn(self.shape[0], self.shape[1], |i, j| self.get(&[i, j]))
    }
}

/// Tensor whose components are jets at a common sample; the differential
/// operators of the geometry engine consume these.
#[derive(Clone)]
pub struct JetTensor {
    comps: Vec<Jet>,
    shape: Vec<usize>,
    variances: Vec<Variance>,
}

impl JetTensor {
    pub fn from_fn(
        shape: Vec<usize>,
        variances: Vec<Variance>,
        mut f: impl FnMut(&[usize]) -> Result<Jet>,
    ) -> Result<JetTensor> {
        if variances.len() != shape.len() {
            return Err(Error::argument(
                "variance list must match tensor rank".to_string(),
            ));
        }
        let mut comps = Vec::with_capacity(shape.iter().product());
        for idx in index_iter(&shape) {
            comps.push(f(&idx)?);
        }
        Ok(JetTensor {
            comps,
            shape,
            variances,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn variances(&self) -> &[Variance] {
        &self.variances
    }

    pub fn get(&self, idx: &[usize]) -> &Jet {
        &self.comps[flat_offset(&self.shape, idx)]
    }

    pub fn order(&self) -> usize {
        self.comps.first().map(|j| j.max_order()).unwrap_or(0)
    }

    /// Drops derivative information, keeping plain component values.
    pub fn values(&self, signature: Vec<IndexInfo>) -> TensorValue {
        TensorValue::from_fn(self.shape.clone(), signature, |idx| self.get(idx).value())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_invariants() {
        assert!(TensorValue::new(vec![0.0; 4], vec![2, 2], vec![
            IndexInfo::lower("i"),
            IndexInfo::lower("j"),
        ])
        .is_ok());
        assert!(TensorValue::new(vec![0.0; 3], vec![2, 2], vec![
            IndexInfo::lower("i"),
            IndexInfo::lower("j"),
        ])
        .is_err());
        assert!(TensorValue::new(vec![0.0; 4], vec![2, 2], vec![IndexInfo::lower("i")]).is_err());
    }

    #[test]
    fn row_major_layout() {
        let t = TensorValue::from_fn(
            vec![2, 3],
            vec![IndexInfo::lower("i"), IndexInfo::lower("j")],
            |idx| (idx[0] * 10 + idx[1]) as f64,
        );
        assert_eq!(t.get(&[1, 2]), 12.0);
        assert_eq!(t.data()[5], 12.0);
        assert_eq!(index_iter(&[2, 3]).count(), 6);
    }
}
