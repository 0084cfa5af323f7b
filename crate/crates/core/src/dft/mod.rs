//! Dense DFTs: twiddle matrices, partial (column-subset) transforms and the
//! serial 3D oracle. Grids are stored x-fastest.

mod distributed;

pub use distributed::{BatchGranularity, DftReport, DistributedDft, KGrid, MIN_BRICK_POINTS};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::DftError;
use crate::simnet::PayloadMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// `exp(-2πi nk/N)`
    Forward,
    /// `exp(+2πi nk/N)`, unnormalized: `inverse(forward(x)) = N·x`.
    Inverse,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => -1.0,
            Direction::Inverse => 1.0,
        }
    }
}

/// `F_N[k][n] = ω^{kn}`, stored as the `N` distinct roots.
#[derive(Clone, Debug, PartialEq)]
pub struct TwiddleMatrix {
    n: usize,
    direction: Direction,
    roots: Vec<Complex64>,
}

impl TwiddleMatrix {
    pub fn new(n: usize, direction: Direction) -> Self {
        let roots = (0..n)
            .map(|j| Complex64::from_polar(1.0, direction.sign() * 2.0 * std::f64::consts::PI * j as f64 / n as f64))
            .collect();
        Self { n, direction, roots }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn entry(&self, k: usize, n: usize) -> Complex64 {
        self.roots[(k * n) % self.n]
    }
}

fn check_indices(indices: &[usize], n: usize) -> Result<(), DftError> {
    let mut seen = vec![false; n];
    for &i in indices {
        if i >= n {
            return Err(DftError::IndexOutOfRange { index: i, n });
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(DftError::DuplicateIndex(i));
        }
    }
    Ok(())
}

/// `F_N[:, J] · x_J`: the full-length spectrum contributed by the samples a
/// rank holds.
pub fn partial_dft_1d(values: &[Complex64], indices: &[usize], n: usize, direction: Direction) -> Result<Vec<Complex64>, DftError> {
    if values.len() != indices.len() {
        return Err(DftError::Shape(format!("{} values for {} indices", values.len(), indices.len())));
    }
    check_indices(indices, n)?;
    let tw = TwiddleMatrix::new(n, direction);
    Ok((0..n)
        .map(|k| indices.iter().zip(values).map(|(&j, &x)| tw.entry(k, j) * x).sum())
        .collect())
}

/// Separable dense 3D DFT of an x-fastest grid.
pub fn serial_dft_3d(grid: &[Complex64], dims: [usize; 3], direction: Direction) -> Result<Vec<Complex64>, DftError> {
    let total: usize = dims.iter().product();
    if grid.len() != total {
        return Err(DftError::Shape(format!("grid of {} values for mesh {:?}", grid.len(), dims)));
    }
    let strides = [1, dims[0], dims[0] * dims[1]];
    let mut data = grid.to_vec();
    let mut line = Vec::new();
    for d in 0..3 {
        let n = dims[d];
        let tw = TwiddleMatrix::new(n, direction);
        let (a, b) = match d {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for rb in 0..dims[b] {
            for ra in 0..dims[a] {
                let base = ra * strides[a] + rb * strides[b];
                line.clear();
                line.extend((0..n).map(|j| data[base + j * strides[d]]));
                for k in 0..n {
                    data[base + k * strides[d]] = line.iter().enumerate().map(|(j, &x)| tw.entry(k, j) * x).sum();
                }
            }
        }
    }
    Ok(data)
}

/// Chain operations per dimension to reduce the complex values of a brick.
pub fn reduction_count(points: usize, mode: PayloadMode) -> usize {
    mode.ops_for(2 * points)
}
