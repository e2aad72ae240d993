//! Binary sparse incidence matrices in CSR form.
//!
//! All stored entries equal 1, so only coordinates are kept: `row_ptr` offsets
//! into a sorted `col_idx` array. Score vectors stay dense `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncidenceMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<u32>,
    col_idx: Vec<u32>,
}

impl IncidenceMatrix {
    /// Builds from binary (row, col) coordinates. Coordinates may arrive in any
    /// order; duplicates and out-of-range indices are rejected.
    pub fn from_pairs(rows: usize, cols: usize, pairs: &[(u32, u32)]) -> Result<Self> {
        let mut sorted: Vec<(u32, u32)> = pairs.to_vec();
        sorted.sort_unstable();
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                return Err(Error::InvalidGraph(format!(
                    "duplicate incidence coordinate ({}, {})",
                    w[0].0, w[0].1
                )));
            }
        }
        let mut row_ptr = vec![0u32; rows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        for (r, c) in &sorted {
            if *r as usize >= rows || *c as usize >= cols {
                return Err(Error::InvalidGraph(format!(
                    "incidence coordinate ({r}, {c}) outside {rows}x{cols}"
                )));
            }
            row_ptr[*r as usize + 1] += 1;
            col_idx.push(*c);
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(IncidenceMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, r: usize) -> &[u32] {
        let a = self.row_ptr[r] as usize;
        let b = self.row_ptr[r + 1] as usize;
        &self.col_idx[a..b]
    }

    pub fn iter_pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).iter().map(move |c| (r as u32, *c)))
    }

    /// `M v`: length-`cols` input, length-`rows` output.
    pub fn mul(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                what: "incidence multiply input",
                expected: self.cols,
                actual: v.len(),
            });
        }
        let mut out = vec![0.0; self.rows];
        for r in 0..self.rows {
            let mut acc = 0.0;
            for c in self.row(r) {
                acc += v[*c as usize];
            }
            out[r] = acc;
        }
        Ok(out)
    }

    /// `M^T v`: length-`rows` input, length-`cols` output.
    pub fn transpose_mul(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::DimensionMismatch {
                what: "incidence transpose-multiply input",
                expected: self.rows,
                actual: v.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let x = v[r];
            if x == 0.0 {
                continue;
            }
            for c in self.row(r) {
                out[*c as usize] += x;
            }
        }
        Ok(out)
    }

    /// `M 1`: per-row entry counts.
    pub fn row_counts(&self) -> Vec<u32> {
        (0..self.rows)
            .map(|r| self.row_ptr[r + 1] - self.row_ptr[r])
            .collect()
    }

    /// True when every row holds exactly one entry (a partition of rows).
    pub fn is_row_partition(&self) -> bool {
        self.row_counts().iter().all(|c| *c == 1)
    }

    pub(crate) fn raw_parts(&self) -> (&[u32], &[u32]) {
        (&self.row_ptr, &self.col_idx)
    }

    pub(crate) fn from_raw_parts(
        rows: usize,
        cols: usize,
        row_ptr: Vec<u32>,
        col_idx: Vec<u32>,
    ) -> Result<Self> {
        if row_ptr.len() != rows + 1 || row_ptr[0] != 0 {
            return Err(Error::Snapshot("bad row_ptr table".into()));
        }
        if *row_ptr.last().unwrap() as usize != col_idx.len() {
            return Err(Error::Snapshot("row_ptr/col_idx length mismatch".into()));
        }
        for w in row_ptr.windows(2) {
            if w[1] < w[0] {
                return Err(Error::Snapshot("row_ptr not monotone".into()));
            }
        }
        for r in 0..rows {
            let span = &col_idx[row_ptr[r] as usize..row_ptr[r + 1] as usize];
            for w in span.windows(2) {
                if w[1] <= w[0] {
                    return Err(Error::Snapshot("row columns not strictly sorted".into()));
                }
            }
            if span.iter().any(|c| *c as usize >= cols) {
                return Err(Error::Snapshot("column index out of range".into()));
            }
        }
        Ok(IncidenceMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense(m: &IncidenceMatrix) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; m.cols()]; m.rows()];
        for (r, c) in m.iter_pairs() {
            d[r as usize][c as usize] = 1.0;
        }
        d
    }

    #[test]
    fn small_multiply_matches_hand_result() {
        // G0: entities x sentences.
        let m = IncidenceMatrix::from_pairs(2, 3, &[(0, 0), (0, 2), (1, 1)]).unwrap();
        assert_eq!(m.transpose_mul(&[1.0, 0.0]).unwrap(), vec![1.0, 0.0, 1.0]);
        let got = m.mul(&[0.4, 0.0, 0.2]).unwrap();
        assert!((got[0] - 0.6).abs() < 1e-15 && got[1] == 0.0);
        assert_eq!(m.row_counts(), vec![2, 1]);
    }

    #[test]
    fn duplicate_coordinates_rejected() {
        let err = IncidenceMatrix::from_pairs(2, 2, &[(0, 1), (0, 1)]).unwrap_err();
        assert!(matches!(err, Error::InvalidGraph(_)));
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(IncidenceMatrix::from_pairs(2, 2, &[(2, 0)]).is_err());
        assert!(IncidenceMatrix::from_pairs(2, 2, &[(0, 2)]).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let m = IncidenceMatrix::from_pairs(2, 3, &[(0, 0)]).unwrap();
        assert!(matches!(
            m.mul(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            m.transpose_mul(&[1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn multiplies_agree_with_dense_oracle(
            rows in 1usize..30,
            cols in 1usize..50,
            density in 0.0f64..0.4,
            seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut pairs = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    if rng.random_bool(density) {
                        pairs.push((r as u32, c as u32));
                    }
                }
            }
            let m = IncidenceMatrix::from_pairs(rows, cols, &pairs).unwrap();
            let d = dense(&m);
            let v: Vec<f64> = (0..cols).map(|_| rng.random_range(0.0..2.0)).collect();
            let w: Vec<f64> = (0..rows).map(|_| rng.random_range(0.0..2.0)).collect();

            let got = m.mul(&v).unwrap();
            for r in 0..rows {
                let want: f64 = (0..cols).map(|c| d[r][c] * v[c]).sum();
                prop_assert!((got[r] - want).abs() < 1e-12);
            }
            let got_t = m.transpose_mul(&w).unwrap();
            for c in 0..cols {
                let want: f64 = (0..rows).map(|r| d[r][c] * w[r]).sum();
                prop_assert!((got_t[c] - want).abs() < 1e-12);
            }
        }
    }
}
