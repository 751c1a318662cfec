//! Truncated Taylor polynomials ("jets") and the scalar abstraction that lets a
//! vector field be evaluated over either `f64` or jets.

use std::ops::{Add, Mul, Neg, Sub};

/// Operations a vector field may use on its scalars.
pub trait Scalar:
    Clone
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
    + Add<f64, Output = Self>
{
    /// Additive identity with the same shape as `self`.
    fn zero_like(&self) -> Self;
}

impl Scalar for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
}

/// Normalized Taylor coefficients `c₀ + c₁·t + … + c_k·t^k` of a function at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    coeffs: Vec<f64>,
}

impl Jet {
    pub fn new(coeffs: Vec<f64>) -> Self {
        assert!(!coeffs.is_empty(), "a jet needs at least one coefficient");
        Self { coeffs }
    }

    pub fn constant(value: f64, order: usize) -> Self {
        let mut coeffs = vec![0.0; order + 1];
        coeffs[0] = value;
        Self { coeffs }
    }

    /// The independent variable `value + t`.
    pub fn variable(value: f64, order: usize) -> Self {
        let mut j = Self::constant(value, order);
        if order >= 1 {
            j.coeffs[1] = 1.0;
        }
        j
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// `i`-th derivative at the expansion point, `i!·c_i`.
    pub fn derivative(&self, i: usize) -> f64 {
        let fact: f64 = (1..=i).map(|k| k as f64).product();
        self.coeffs[i] * fact
    }

    fn check(&self, other: &Self) {
        assert_eq!(self.coeffs.len(), other.coeffs.len(), "jet orders differ");
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, rhs: Jet) -> Jet {
        self.check(&rhs);
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a += b;
        }
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: Jet) -> Jet {
        self.check(&rhs);
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a -= b;
        }
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        self.check(&rhs);
        let n = self.coeffs.len();
        let coeffs = (0..n)
            .map(|k| (0..=k).map(|j| self.coeffs[j] * rhs.coeffs[k - j]).sum())
            .collect();
        Jet { coeffs }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        self.coeffs.iter_mut().for_each(|c| *c = -*c);
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, rhs: f64) -> Jet {
        self.coeffs.iter_mut().for_each(|c| *c *= rhs);
        self
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.coeffs[0] += rhs;
        self
    }
}

impl Scalar for Jet {
    fn zero_like(&self) -> Self {
        Jet::constant(0.0, self.order())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_truncates() {
        // (1 + t)(1 + t) = 1 + 2t + t², truncated at order 1.
        let x = Jet::variable(1.0, 1);
        assert_eq!((x.clone() * x).coeffs(), &[1.0, 2.0]);

        let x = Jet::variable(2.0, 3);
        let cube = x.clone() * x.clone() * x;
        // (2 + t)³ = 8 + 12t + 6t² + t³
        assert_eq!(cube.coeffs(), &[8.0, 12.0, 6.0, 1.0]);
        assert_eq!(cube.derivative(2), 12.0);
        assert_eq!(cube.derivative(3), 6.0);
    }

    #[test]
    fn affine_ops() {
        let x = Jet::variable(0.5, 2);
        let y = -(x.clone() * 3.0) + 1.0 - x.zero_like();
        assert_eq!(y.coeffs(), &[-0.5, -3.0, 0.0]);
    }
}
