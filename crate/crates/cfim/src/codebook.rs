//! Walsh-Hadamard spreading codes and per-user codebooks.
//!
//! Codes are rows of a Sylvester-constructed Hadamard matrix scaled by
//! 1/sqrt(L), so every pair of rows has inner product 1 (same row) or 0.
//! The unit diagonal lets symbol energy pass through spreading unchanged.

use crate::error::{Error, Result};
use ndarray::Array2;

/// Orthonormal Hadamard matrix of order `l` (rows are the codes).
///
/// Row 0 is the all-positive row; every chip is +-1/sqrt(l).
pub fn hadamard_matrix(l: usize) -> Result<Array2<f64>> {
    if l == 0 || l & (l - 1) != 0 {
        return Err(Error::invalid("L", format!("{l} is not a power of two")));
    }
    let mut h = Array2::from_elem((1, 1), 1.0);
    let mut size = 1;
    while size < l {
        let mut next = Array2::zeros((2 * size, 2 * size));
        for r in 0..size {
            for c in 0..size {
                let v = h[(r, c)];
                next[(r, c)] = v;
                next[(r, c + size)] = v;
                next[(r + size, c)] = v;
                next[(r + size, c + size)] = -v;
            }
        }
        h = next;
        size *= 2;
    }
    let scale = 1.0 / (l as f64).sqrt();
    Ok(h * scale)
}

/// One user's share of the spreading-code pool.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    codes: Array2<f64>,
    user_index: usize,
}

impl Codebook {
    /// Codebook for a single user: the first `codes` Hadamard rows.
    pub fn single_user(spreading_factor: usize, codes: usize) -> Result<Self> {
        let mut books = partition_codebooks(spreading_factor, 1, codes)?;
        Ok(books.remove(0))
    }

    pub fn user_index(&self) -> usize {
        self.user_index
    }

    pub fn num_codes(&self) -> usize {
        self.codes.nrows()
    }

    pub fn spreading_factor(&self) -> usize {
        self.codes.ncols()
    }

    /// Chips of code `j` (0-based within this codebook).
    pub fn code(&self, j: usize) -> ndarray::ArrayView1<'_, f64> {
        self.codes.row(j)
    }

    /// The Nc x L chip matrix.
    pub fn codes(&self) -> &Array2<f64> {
        &self.codes
    }
}

/// Split the first `users * codes_per_user` Hadamard rows into disjoint
/// per-user codebooks; user `u` takes the contiguous rows
/// `[u*codes_per_user, (u+1)*codes_per_user)`.
pub fn partition_codebooks(
    spreading_factor: usize,
    users: usize,
    codes_per_user: usize,
) -> Result<Vec<Codebook>> {
    if users == 0 {
        return Err(Error::invalid("U", "must be at least 1"));
    }
    if codes_per_user == 0 {
        return Err(Error::invalid("Nc", "must be at least 1"));
    }
    if users * codes_per_user > spreading_factor {
        return Err(Error::Capacity {
            users,
            codes_per_user,
            spreading_factor,
            max_users: spreading_factor / codes_per_user,
        });
    }
    let h = hadamard_matrix(spreading_factor)?;
    Ok((0..users)
        .map(|u| {
            let rows = h.slice(ndarray::s![u * codes_per_user..(u + 1) * codes_per_user, ..]);
            Codebook {
                codes: rows.to_owned(),
                user_index: u,
            }
        })
        .collect())
}
