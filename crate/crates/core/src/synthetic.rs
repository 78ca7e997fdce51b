//! Seeded synthetic fixtures: Gaussian matrices, random orthogonal maps and
//! similarity-transformed copies of a space.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::embedding_io::EmbeddingSpace;

pub fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    // fill row by row so the draw order is independent of storage layout
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

/// Orthogonal factor of the QR decomposition of a Gaussian matrix, with
/// column signs fixed so that `R` has a positive diagonal.
pub fn random_orthogonal<R: Rng>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let qr = gaussian_matrix(rng, d, d).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            let mut col = q.column_mut(j);
            col.neg_mut();
        }
    }
    q
}

pub fn tokens(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:05}")).collect()
}

pub fn gaussian_space(name: &str, n: usize, d: usize, seed: u64) -> EmbeddingSpace {
    let m = gaussian_matrix(&mut rng(seed), n, d);
    EmbeddingSpace::new(name, tokens("w", n), m).expect("valid synthetic space")
}

/// `scale * x * q + shift` applied to every row.
pub fn similarity_transform(x: &DMatrix<f64>, q: &DMatrix<f64>, scale: f64, shift: &DVector<f64>) -> DMatrix<f64> {
    let mut y = x * q * scale;
    for (j, mut col) in y.column_iter_mut().enumerate() {
        col.add_scalar_mut(shift[j]);
    }
    y
}

/// Source space plus a scaled, rotated and shifted copy sharing its tokens.
pub fn similarity_pair(n: usize, d: usize, scale: f64, seed: u64) -> (EmbeddingSpace, EmbeddingSpace) {
    let mut r = rng(seed);
    let x = gaussian_matrix(&mut r, n, d);
    let q = random_orthogonal(&mut r, d);
    let shift = DVector::from_iterator(d, (0..d).map(|_| r.random_range(-5.0..5.0)));
    let y = similarity_transform(&x, &q, scale, &shift);
    let toks = tokens("w", n);
    (
        EmbeddingSpace::new("source", toks.clone(), x).expect("valid"),
        EmbeddingSpace::new("reference", toks, y).expect("valid"),
    )
}

/// Root-mean-square Euclidean norm of the mean-centered rows.
pub fn rms_row_norm(x: &DMatrix<f64>) -> f64 {
    let mean = crate::linalg::column_means(x);
    let xc = crate::linalg::center(x, &mean);
    (xc.norm_squared() / x.nrows() as f64).sqrt()
}

/// Adds i.i.d. Gaussian noise with per-entry standard deviation `sigma`.
pub fn add_noise<R: Rng>(rng: &mut R, x: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
    x + gaussian_matrix(rng, x.nrows(), x.ncols()) * sigma
}
