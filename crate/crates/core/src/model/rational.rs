use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::poly;
use super::statespace::StateSpace;
use crate::error::{Error, Result};

/// Scalar rational filter `num(q^-1) / den(q^-1)` with `den[0] = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalTransfer {
    num: Vec<f64>,
    den: Vec<f64>,
    is_zero: bool,
}

impl RationalTransfer {
    /// Build from coefficient lists; the denominator is normalised to be monic.
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        if num.iter().chain(den.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coefficient".into()));
        }
        let d0 = den.first().copied().unwrap_or(0.0);
        if d0 == 0.0 {
            return Err(Error::InvalidArgument(
                "denominator constant term must be nonzero".into(),
            ));
        }
        let mut num = poly::scale(&num, 1.0 / d0);
        let mut den = poly::scale(&den, 1.0 / d0);
        poly::trim(&mut num);
        poly::trim(&mut den);
        let is_zero = num.iter().all(|&c| c == 0.0);
        if is_zero {
            return Ok(Self::zero());
        }
        Ok(Self { num, den, is_zero })
    }

    pub fn zero() -> Self {
        Self {
            num: vec![0.0],
            den: vec![1.0],
            is_zero: true,
        }
    }

    pub fn constant(c: f64) -> Self {
        if c == 0.0 {
            Self::zero()
        } else {
            Self {
                num: vec![c],
                den: vec![1.0],
                is_zero: false,
            }
        }
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    /// `c q^-k`.
    pub fn delay(c: f64, k: usize) -> Self {
        if c == 0.0 {
            return Self::zero();
        }
        let mut num = vec![0.0; k + 1];
        num[k] = c;
        Self {
            num,
            den: vec![1.0],
            is_zero: false,
        }
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.is_zero
    }

    pub fn feedthrough(&self) -> f64 {
        self.num[0]
    }

    pub fn strictly_proper(&self) -> bool {
        self.num[0] == 0.0
    }

    /// Number of leading zero numerator coefficients (input delay).
    pub fn delay_count(&self) -> usize {
        self.num.iter().take_while(|&&c| c == 0.0).count()
    }

    /// Evaluate at a point of the complex plane.
    pub fn eval_z(&self, z: Complex64) -> Complex64 {
        let x = z.inv();
        poly::eval(&self.num, x) / poly::eval(&self.den, x)
    }

    /// Evaluate at `z = e^{jw}`.
    pub fn freq(&self, w: f64) -> Complex64 {
        let x = Complex64::from_polar(1.0, -w);
        poly::eval(&self.num, x) / poly::eval(&self.den, x)
    }

    /// Modulus of the largest pole.
    pub fn pole_radius(&self) -> f64 {
        poly::spectral_radius(&self.den)
    }

    /// Modulus of the largest zero, counted for a transfer with nonzero
    /// feedthrough; returns infinity when the numerator constant term is 0.
    pub fn zero_radius(&self) -> f64 {
        if self.is_zero {
            return f64::INFINITY;
        }
        poly::spectral_radius(&self.num)
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero || other.is_zero {
            return Self::zero();
        }
        Self::new(
            poly::mul(&self.num, &other.num),
            poly::mul(&self.den, &other.den),
        )
        .unwrap_or_else(|_| Self::zero())
    }

    pub fn add(&self, other: &Self) -> Self {
        if self.is_zero {
            return other.clone();
        }
        if other.is_zero {
            return self.clone();
        }
        if self.den == other.den {
            return Self::new(poly::add(&self.num, &other.num), self.den.clone())
                .unwrap_or_else(|_| Self::zero());
        }
        let n = poly::add(
            &poly::mul(&self.num, &other.den),
            &poly::mul(&other.num, &self.den),
        );
        Self::new(n, poly::mul(&self.den, &other.den)).unwrap_or_else(|_| Self::zero())
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(poly::scale(&self.num, s), self.den.clone()).unwrap_or_else(|_| Self::zero())
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    /// `1 / self`; needs a nonzero feedthrough to stay proper.
    pub fn reciprocal(&self) -> Result<Self> {
        if self.num[0] == 0.0 {
            return Err(Error::SingularFeedthrough(
                "reciprocal of a strictly proper transfer".into(),
            ));
        }
        Self::new(self.den.clone(), self.num.clone())
    }

    /// Remove common factors through a minimal realisation.
    pub fn reduce(&self) -> Self {
        if self.is_zero {
            return Self::zero();
        }
        StateSpace::from_rational(self)
            .minreal()
            .entry_to_rational(0, 0)
    }

    /// Coefficient distance used for approximate equality.
    pub fn coeff_distance(&self, other: &Self) -> f64 {
        let dn = poly::add(&self.num, &poly::scale(&other.num, -1.0));
        let dd = poly::add(&self.den, &poly::scale(&other.den, -1.0));
        dn.iter()
            .chain(dd.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

impl Default for RationalTransfer {
    fn default() -> Self {
        Self::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delay_has_unit_gain_at_dc() {
        let g = RationalTransfer::delay(0.5, 1);
        assert!((g.freq(0.0) - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        assert!(g.strictly_proper());
    }

    #[test]
    fn normalises_denominator() {
        let g = RationalTransfer::new(vec![2.0], vec![2.0, -1.0]).unwrap();
        assert_eq!(g.den(), &[1.0, -0.5]);
        assert_eq!(g.num(), &[1.0]);
    }

    #[test]
    fn zero_flag() {
        let g = RationalTransfer::new(vec![0.0, 0.0], vec![1.0, 0.3]).unwrap();
        assert!(g.is_zero());
        assert!(RationalTransfer::zero().strictly_proper());
    }

    #[test]
    fn product_of_strictly_proper_is_strictly_proper() {
        let a = RationalTransfer::new(vec![0.0, 1.0], vec![1.0, -0.2]).unwrap();
        let b = RationalTransfer::new(vec![1.0, 0.4], vec![1.0]).unwrap();
        assert!(a.mul(&b).strictly_proper());
    }

    #[test]
    fn reduce_cancels_common_factor() {
        let a = RationalTransfer::new(vec![1.0, -0.5], vec![1.0, -0.5]).unwrap();
        let r = a.reduce();
        assert_eq!(r.den().len(), 1);
        assert!((r.num()[0] - 1.0).abs() < 1e-9);
    }
}
