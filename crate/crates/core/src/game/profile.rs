use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Block vector `z = (z_1, ..., z_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct OpinionProfile {
    blocks: Vec<DVector<f64>>,
}

impl From<Vec<Vec<f64>>> for OpinionProfile {
    fn from(v: Vec<Vec<f64>>) -> Self {
        OpinionProfile::new(v.into_iter().map(DVector::from_vec).collect())
    }
}

impl From<OpinionProfile> for Vec<Vec<f64>> {
    fn from(p: OpinionProfile) -> Self {
        p.blocks.into_iter().map(|b| b.as_slice().to_vec()).collect()
    }
}

impl OpinionProfile {
    pub fn new(blocks: Vec<DVector<f64>>) -> Self {
        OpinionProfile { blocks }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self::new(dims.iter().map(|&d| DVector::zeros(d)).collect())
    }

    /// Scalar opinions, one per person.
    pub fn scalars(xs: &[f64]) -> Self {
        Self::new(xs.iter().map(|&x| DVector::from_element(1, x)).collect())
    }

    pub fn from_flat(flat: &[f64], dims: &[usize]) -> Result<Self> {
        let total: usize = dims.iter().sum();
        if flat.len() != total {
            return Err(Error::DimensionMismatch {
                context: "flat profile".into(),
                expected: total,
                got: flat.len(),
            });
        }
        let mut at = 0;
        let blocks = dims
            .iter()
            .map(|&d| {
                let b = DVector::from_column_slice(&flat[at..at + d]);
                at += d;
                b
            })
            .collect();
        Ok(Self::new(blocks))
    }

    pub fn flat(&self) -> DVector<f64> {
        let total: usize = self.blocks.iter().map(|b| b.len()).sum();
        let mut out = DVector::zeros(total);
        let mut at = 0;
        for b in &self.blocks {
            out.rows_mut(at, b.len()).copy_from(b);
            at += b.len();
        }
        out
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.len()).collect()
    }

    pub fn block(&self, i: usize) -> &DVector<f64> {
        &self.blocks[i]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut DVector<f64> {
        &mut self.blocks[i]
    }

    pub fn blocks(&self) -> &[DVector<f64>] {
        &self.blocks
    }

    pub fn check_dims(&self, dims: &[usize]) -> Result<()> {
        if self.blocks.len() != dims.len() {
            return Err(Error::DimensionMismatch {
                context: "profile person count".into(),
                expected: dims.len(),
                got: self.blocks.len(),
            });
        }
        for (b, &d) in self.blocks.iter().zip(dims) {
            if b.len() != d {
                return Err(Error::DimensionMismatch {
                    context: "profile block".into(),
                    expected: d,
                    got: b.len(),
                });
            }
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `||self - other||_inf`; profiles must share block dimensions.
    pub fn max_abs_diff(&self, other: &OpinionProfile) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .flat_map(|(a, b)| a.iter().zip(b.iter()))
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.iter().all(|x| x.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_roundtrip() {
        let p = OpinionProfile::new(vec![DVector::from_vec(vec![1.0, 2.0]), DVector::from_vec(vec![3.0])]);
        let f = p.flat();
        assert_eq!(f.as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(OpinionProfile::from_flat(f.as_slice(), &[2, 1]).unwrap(), p);
        assert!(OpinionProfile::from_flat(f.as_slice(), &[2, 2]).is_err());
    }

    #[test]
    fn serde_as_nested_arrays() {
        let p = OpinionProfile::scalars(&[0.25, -1.0]);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, "[[0.25],[-1.0]]");
        assert_eq!(serde_json::from_str::<OpinionProfile>(&s).unwrap(), p);
    }
}
