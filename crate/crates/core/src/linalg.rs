//! Small dense linear-algebra helpers shared by the game and dynamics code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues at or above this are treated as nonnegative and clamped to zero.
pub const PSD_TOL: f64 = 1e-10;

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > tol * (1.0 + m[(i, j)].abs().max(m[(j, i)].abs())) {
                return false;
            }
        }
    }
    true
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.max()
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn sym_spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.amax()
}

pub fn require_symmetric(m: &DMatrix<f64>, context: &str) -> Result<()> {
    if is_symmetric(m, 1e-12) {
        Ok(())
    } else {
        Err(Error::NotSymmetric(context.to_string()))
    }
}

pub fn require_psd(m: &DMatrix<f64>, context: &str) -> Result<()> {
    require_symmetric(m, context)?;
    let min = min_eigenvalue(m);
    if min < -PSD_TOL {
        return Err(Error::NotPsd {
            context: context.to_string(),
            min_eigenvalue: min,
        });
    }
    Ok(())
}

pub fn is_pd(m: &DMatrix<f64>) -> bool {
    is_symmetric(m, 1e-12) && (m.nrows() == 0 || min_eigenvalue(m) > PSD_TOL)
}

pub fn require_pd(m: &DMatrix<f64>, context: &str) -> Result<()> {
    require_symmetric(m, context)?;
    let min = min_eigenvalue(m);
    if min <= PSD_TOL {
        return Err(Error::NotPd {
            context: context.to_string(),
            min_eigenvalue: min,
        });
    }
    Ok(())
}

/// Principal square root of a symmetric PSD matrix via eigendecomposition.
/// Eigenvalues in `[-PSD_TOL, 0)` are clamped to zero; anything lower is rejected.
pub fn psd_sqrt(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    require_symmetric(m, context)?;
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.min();
    if min < -PSD_TOL {
        return Err(Error::NotPsd {
            context: context.to_string(),
            min_eigenvalue: min,
        });
    }
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&roots) * q.transpose())
}

/// `m^{-1/2}` for a symmetric PD matrix.
pub fn pd_inv_sqrt(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    require_pd(m, context)?;
    let eig = SymmetricEigen::new(m.clone());
    let inv_roots = eig.eigenvalues.map(|v| 1.0 / v.sqrt());
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&inv_roots) * q.transpose())
}

pub fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn max_abs_mat(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Serde adapter: matrices as row-major nested arrays.
pub mod rowmajor {
    use nalgebra::DMatrix;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err("ragged matrix rows".to_string());
        }
        Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(D::Error::custom)
    }

    pub mod option {
        use nalgebra::DMatrix;
        use serde::de::Error as _;
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
            match m {
                Some(m) => s.serialize_some(&super::to_rows(m)),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DMatrix<f64>>, D::Error> {
            let rows = Option::<Vec<Vec<f64>>>::deserialize(d)?;
            rows.map(|r| super::from_rows(&r).map_err(D::Error::custom)).transpose()
        }
    }
}

/// Serde adapter: vectors as flat arrays.
pub mod flat {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let r = psd_sqrt(&m, "test").unwrap();
        assert!((r[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((r[(1, 1)] - 3.0).abs() < 1e-12);
        assert!(r[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0]);
        let r = psd_sqrt(&m, "test").unwrap();
        assert!((&r * &r - &m).amax() < 1e-12);
    }

    #[test]
    fn tiny_negative_eigenvalue_is_clamped() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1e-12]));
        let r = psd_sqrt(&m, "test").unwrap();
        assert_eq!(r[(1, 1)], 0.0);
    }

    #[test]
    fn negative_eigenvalue_is_rejected() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.1]));
        assert!(matches!(psd_sqrt(&m, "test"), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn asymmetric_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(require_psd(&m, "m"), Err(Error::NotSymmetric(_))));
    }
}
