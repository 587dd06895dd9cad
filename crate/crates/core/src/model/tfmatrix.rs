use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::rational::RationalTransfer;
use super::statespace::StateSpace;
use crate::error::{Error, Result};

/// Dense matrix of scalar rational transfers, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<RationalTransfer>,
}

/// Grid evaluation result. `poles_on_grid` lists `(grid index, row, col)`
/// for entries whose denominator vanishes at that frequency; those values are NaN.
#[derive(Debug, Clone)]
pub struct FrequencyResponse {
    pub values: Vec<DMatrix<Complex64>>,
    pub poles_on_grid: Vec<(usize, usize, usize)>,
}

impl TransferMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![RationalTransfer::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for k in 0..n {
            m.set(k, k, RationalTransfer::one());
        }
        m
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> RationalTransfer,
    ) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for k in 0..rows {
            for l in 0..cols {
                entries.push(f(k, l));
            }
        }
        Self {
            rows,
            cols,
            entries,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> &RationalTransfer {
        assert!(
            r < self.rows && c < self.cols,
            "entry ({r},{c}) out of bounds"
        );
        &self.entries[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: RationalTransfer) {
        assert!(
            r < self.rows && c < self.cols,
            "entry ({r},{c}) out of bounds"
        );
        self.entries[r * self.cols + c] = v;
    }

    /// Boolean nonzero pattern.
    pub fn pattern(&self) -> Vec<Vec<bool>> {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| !self.get(r, c).is_zero()).collect())
            .collect()
    }

    /// Constant (zero-lag) term of every entry.
    pub fn feedthrough(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |r, c| self.get(r, c).feedthrough())
    }

    pub fn freq(&self, w: f64) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.rows, self.cols, |r, c| self.get(r, c).freq(w))
    }

    pub fn frequency_response(&self, grid: &[f64]) -> FrequencyResponse {
        let mut poles_on_grid = Vec::new();
        let mut values = Vec::with_capacity(grid.len());
        for (gi, &w) in grid.iter().enumerate() {
            let x = Complex64::from_polar(1.0, -w);
            let m = DMatrix::from_fn(self.rows, self.cols, |r, c| {
                let e = self.get(r, c);
                let den = super::poly::eval(e.den(), x);
                if den.norm() < 1e-12 {
                    poles_on_grid.push((gi, r, c));
                    Complex64::new(f64::NAN, f64::NAN)
                } else {
                    super::poly::eval(e.num(), x) / den
                }
            });
            values.push(m);
        }
        FrequencyResponse {
            values,
            poles_on_grid,
        }
    }

    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self::from_fn(rows.len(), cols.len(), |r, c| {
            self.get(rows[r], cols[c]).clone()
        })
    }

    pub fn to_state_space(&self) -> StateSpace {
        StateSpace::from_transfer_matrix(self)
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(Error::Dimension("sum of differently sized matrices".into()));
        }
        Ok(self
            .to_state_space()
            .add(&rhs.to_state_space())
            .minreal()
            .to_transfer_matrix())
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(Error::Dimension(
                "difference of differently sized matrices".into(),
            ));
        }
        Ok(self
            .to_state_space()
            .sub(&rhs.to_state_space())
            .minreal()
            .to_transfer_matrix())
    }

    pub fn mul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "product of {}x{} and {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(self
            .to_state_space()
            .mul(&rhs.to_state_space())
            .minreal()
            .to_transfer_matrix())
    }

    /// Matrix inverse via the state-space realisation.
    pub fn inverse(&self) -> Result<Self> {
        if self.rows != self.cols {
            return Err(Error::Dimension("inverse of a non-square matrix".into()));
        }
        Ok(self
            .to_state_space()
            .inverse()?
            .minreal()
            .to_transfer_matrix())
    }
}
