//! Seeded generators for random undirected quadratic games and profiles.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{OpinionProfile, QuadraticGame};
use crate::error::{Error, Result};

fn uniform_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Symmetric PD matrix with eigenvalues drawn from `[lo, hi]`.
pub fn random_pd(rng: &mut impl Rng, m: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let q = uniform_matrix(rng, m, m).qr().q();
    let eig = DVector::from_fn(m, |_, _| rng.gen_range(lo..=hi));
    symmetrize(&q * DMatrix::from_diagonal(&eig) * q.transpose())
}

/// Symmetric PSD matrix `B B^T / k` with random rank `k`.
pub fn random_psd(rng: &mut impl Rng, m: usize) -> DMatrix<f64> {
    let k = rng.gen_range(1..=m);
    let b = uniform_matrix(rng, m, k);
    symmetrize(&b * b.transpose() / k as f64)
}

/// Undirected game with `R_i` eigenvalues in `[0.5, 2]`, PSD weights on
/// each pair `i < j` with probability `density`, and `s_i` in `[-1, 1]^m`.
pub fn random_undirected_quadratic(n: usize, m: usize, density: f64, rng: &mut impl Rng) -> Result<QuadraticGame> {
    let r = (0..n).map(|_| random_pd(rng, m, 0.5, 2.0)).collect();
    let s = (0..n)
        .map(|_| DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0)))
        .collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen_bool(density.clamp(0.0, 1.0)) {
                edges.push((i, j, random_psd(rng, m)));
            }
        }
    }
    QuadraticGame::undirected(r, s, edges)
}

/// [`random_undirected_quadratic`] driven by a ChaCha8 stream from `seed`.
pub fn seeded_quadratic(n: usize, m: usize, density: f64, seed: u64) -> Result<QuadraticGame> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument(format!("n = {n} and m = {m} must be positive")));
    }
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::InvalidArgument(format!("density {density} is outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_undirected_quadratic(n, m, density, &mut rng)
}

/// Profile with entries uniform on `[-scale, scale]`.
pub fn seeded_profile(dims: &[usize], scale: f64, seed: u64) -> OpinionProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    OpinionProfile::new(
        dims.iter()
            .map(|&d| DVector::from_fn(d, |_, _| rng.gen_range(-scale..=scale)))
            .collect(),
    )
}

/// `count` games with `2 <= n <= 10`, `1 <= m <= 4`, density in `[0.2, 0.9]`.
pub fn quadratic_corpus(count: usize, seed: u64) -> Vec<QuadraticGame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.gen_range(2..=10);
            let m = rng.gen_range(1..=4);
            let density = rng.gen_range(0.2..=0.9);
            random_undirected_quadratic(n, m, density, &mut rng).expect("generated matrices are PSD")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::OpinionGame;

    #[test]
    fn corpus_is_deterministic_and_valid() {
        let a = quadratic_corpus(10, 42);
        let b = quadratic_corpus(10, 42);
        assert_eq!(a, b);
        for g in &a {
            assert!(g.check_symmetric().is_symmetric());
            assert!(g.require_pd_internal().is_ok());
            assert!((2..=10).contains(&g.n()) && (1..=4).contains(&g.m()));
        }
    }
}
