//! Truncated multivariate formal power series with complex coefficients.
//!
//! Series live in the variables `(x_1, y_1, ..., x_n, y_n)` of `n` symplectic
//! pairs. A [`TruncatedSeries`] of order `N` stores coefficients up to total
//! degree `N`; products discard everything beyond the order. Coefficient
//! arithmetic is exact machine-complex arithmetic. On top of the ring
//! operations the module provides the hyperbolic vector field action
//! `X_j = -x_j d/dx_j + y_j d/dy_j` and the cohomological operator
//! `g -> X_j(g) - i h_j g` with `h_j = x_j y_j`.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex coefficient scalar. No NaN or infinity is admitted into a series.
pub type Scalar = Complex64;

/// Exponent tuple `(k_1, l_1, ..., k_n, l_n)` of a monomial
/// `x_1^{k_1} y_1^{l_1} ... x_n^{k_n} y_n^{l_n}`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        assert!(exponents.len().is_multiple_of(2), "multi-index length must be even");
        MultiIndex(exponents)
    }

    pub fn zero(arity: usize) -> Self {
        MultiIndex(vec![0; 2 * arity])
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn arity(&self) -> usize {
        self.0.len() / 2
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Exponents `(k_j, l_j)` of pair `j` (0-based).
    pub fn pair(&self, j: usize) -> (u32, u32) {
        (self.0[2 * j], self.0[2 * j + 1])
    }

    pub fn with_pair(&self, j: usize, k: u32, l: u32) -> Self {
        let mut e = self.0.clone();
        e[2 * j] = k;
        e[2 * j + 1] = l;
        MultiIndex(e)
    }

    /// Index with the pair-`j` exponents zeroed; the "parameter" part.
    pub fn without_pair(&self, j: usize) -> Self {
        self.with_pair(j, 0, 0)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

/// Multivariate formal power series truncated at a fixed total degree.
#[derive(Clone, Debug)]
pub struct TruncatedSeries {
    arity: usize,
    order: u32,
    coeffs: BTreeMap<MultiIndex, Scalar>,
}

fn check_finite(c: Scalar) -> Scalar {
    assert!(
        c.re.is_finite() && c.im.is_finite(),
        "non-finite coefficient {c}"
    );
    c
}

impl TruncatedSeries {
    pub fn zero(arity: usize, order: u32) -> Self {
        assert!(arity >= 1, "arity must be positive");
        TruncatedSeries {
            arity,
            order,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn constant(arity: usize, order: u32, c: Scalar) -> Self {
        let mut s = Self::zero(arity, order);
        s.set_coeff(MultiIndex::zero(arity), c);
        s
    }

    pub fn monomial(arity: usize, order: u32, index: MultiIndex, c: Scalar) -> Self {
        let mut s = Self::zero(arity, order);
        s.set_coeff(index, c);
        s
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn coeff(&self, index: &MultiIndex) -> Scalar {
        self.coeffs.get(index).copied().unwrap_or(Scalar::ZERO)
    }

    /// Stores a coefficient. Indices beyond the truncation order are rejected.
    pub fn set_coeff(&mut self, index: MultiIndex, c: Scalar) {
        assert_eq!(index.arity(), self.arity, "index arity mismatch");
        assert!(
            index.total_degree() <= self.order,
            "index degree {} exceeds order {}",
            index.total_degree(),
            self.order
        );
        if c == Scalar::ZERO {
            self.coeffs.remove(&index);
        } else {
            self.coeffs.insert(index, check_finite(c));
        }
    }

    pub fn add_coeff(&mut self, index: MultiIndex, c: Scalar) {
        let cur = self.coeff(&index);
        self.set_coeff(index, cur + c);
    }

    /// Iterates over the stored (possibly zero) coefficients.
    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, &Scalar)> {
        self.coeffs.iter()
    }

    pub fn support(&self) -> impl Iterator<Item = &MultiIndex> {
        self.coeffs
            .iter()
            .filter(|(_, c)| **c != Scalar::ZERO)
            .map(|(i, _)| i)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.values().all(|c| *c == Scalar::ZERO)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Largest total degree carried by a nonzero coefficient.
    pub fn degree(&self) -> u32 {
        self.coeffs
            .iter()
            .filter(|(_, c)| **c != Scalar::ZERO)
            .map(|(i, _)| i.total_degree())
            .max()
            .unwrap_or(0)
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.arity != other.arity {
            return Err(Error::ArityMismatch(self.arity, other.arity));
        }
        if self.order != other.order {
            return Err(Error::OrderMismatch(self.order, other.order));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (i, c) in other.coeffs.iter() {
            out.add_coeff(i.clone(), *c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (i, c) in other.coeffs.iter() {
            out.add_coeff(i.clone(), -*c);
        }
        Ok(out)
    }

    pub fn scale(&self, c: Scalar) -> Self {
        check_finite(c);
        let mut out = Self::zero(self.arity, self.order);
        for (i, v) in self.coeffs.iter() {
            out.set_coeff(i.clone(), v * c);
        }
        out
    }

    pub fn neg(&self) -> Self {
        self.scale(-Scalar::ONE)
    }

    /// Truncated product; terms of total degree beyond `min(order_a, order_b)`
    /// are discarded and the result carries that order.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.arity != other.arity {
            return Err(Error::ArityMismatch(self.arity, other.arity));
        }
        let order = self.order.min(other.order);
        let mut out = Self::zero(self.arity, order);
        for (ia, ca) in self.coeffs.iter() {
            if *ca == Scalar::ZERO {
                continue;
            }
            for (ib, cb) in other.coeffs.iter() {
                if *cb == Scalar::ZERO {
                    continue;
                }
                if ia.total_degree() + ib.total_degree() > order {
                    continue;
                }
                let exps: Vec<u32> = ia
                    .exponents()
                    .iter()
                    .zip(ib.exponents())
                    .map(|(a, b)| a + b)
                    .collect();
                out.add_coeff(MultiIndex::new(exps), ca * cb);
            }
        }
        Ok(out)
    }

    /// Re-truncates to a smaller order.
    pub fn truncate_to(&self, order: u32) -> Self {
        assert!(order <= self.order, "truncate_to cannot raise the order");
        let mut out = Self::zero(self.arity, order);
        for (i, c) in self.coeffs.iter() {
            if i.total_degree() <= order {
                out.set_coeff(i.clone(), *c);
            }
        }
        out
    }

    /// Reinterprets the same coefficients at a higher truncation order.
    pub fn with_order(&self, order: u32) -> Self {
        assert!(order >= self.degree(), "with_order would drop content");
        let mut out = Self::zero(self.arity, order);
        for (i, c) in self.coeffs.iter() {
            if i.total_degree() <= order {
                out.set_coeff(i.clone(), *c);
            }
        }
        out
    }

    fn check_pair(&self, j: usize) -> Result<()> {
        if j >= self.arity {
            return Err(Error::IndexOutOfRange {
                index: j,
                arity: self.arity,
            });
        }
        Ok(())
    }

    /// Applies the hyperbolic vector field `X_j = -x_j d/dx_j + y_j d/dy_j`.
    /// The monomial with pair-`j` exponents `(k, l)` is scaled by `l - k`.
    pub fn apply_x(&self, j: usize) -> Result<Self> {
        self.check_pair(j)?;
        let mut out = Self::zero(self.arity, self.order);
        for (i, c) in self.coeffs.iter() {
            let (k, l) = i.pair(j);
            let factor = l as f64 - k as f64;
            if factor != 0.0 {
                out.set_coeff(i.clone(), c * factor);
            }
        }
        Ok(out)
    }

    /// Multiplication by `h_j = x_j y_j`, truncated at the series order.
    pub fn mul_h(&self, j: usize) -> Result<Self> {
        self.check_pair(j)?;
        let mut out = Self::zero(self.arity, self.order);
        for (i, c) in self.coeffs.iter() {
            if i.total_degree() + 2 > self.order {
                continue;
            }
            let (k, l) = i.pair(j);
            out.set_coeff(i.with_pair(j, k + 1, l + 1), *c);
        }
        Ok(out)
    }

    /// The cohomological operator `g -> X_j(g) - i h_j g`.
    pub fn cohom(&self, j: usize) -> Result<Self> {
        let xg = self.apply_x(j)?;
        let hg = self.mul_h(j)?.scale(Scalar::I);
        xg.sub(&hg)
    }

    /// Polynomial evaluation at real coordinates `(x_1, y_1, ..., x_n, y_n)`.
    pub fn eval(&self, coords: &[f64]) -> Scalar {
        assert_eq!(coords.len(), 2 * self.arity, "coordinate length mismatch");
        let mut acc = Scalar::ZERO;
        for (i, c) in self.coeffs.iter() {
            let mut m = 1.0;
            for (e, v) in i.exponents().iter().zip(coords) {
                m *= v.powi(*e as i32);
            }
            acc += c * m;
        }
        acc
    }

    /// Splits into 2D slices along pair `j`: for every parameter index `p`
    /// (pair-`j` exponents zeroed) collects the map `(k, l) -> coefficient`
    /// of the monomials `p * x_j^k y_j^l`.
    pub fn slices_along(&self, j: usize) -> BTreeMap<MultiIndex, BTreeMap<(u32, u32), Scalar>> {
        let mut slices: BTreeMap<MultiIndex, BTreeMap<(u32, u32), Scalar>> = BTreeMap::new();
        for (i, c) in self.coeffs.iter() {
            if *c == Scalar::ZERO {
                continue;
            }
            let param = i.without_pair(j);
            slices.entry(param).or_default().insert(i.pair(j), *c);
        }
        slices
    }
}

/// Canonical equality: zero coefficients, stored or pruned, compare equal.
impl PartialEq for TruncatedSeries {
    fn eq(&self, other: &Self) -> bool {
        if self.arity != other.arity || self.order != other.order {
            return false;
        }
        for (i, c) in self.coeffs.iter() {
            if other.coeff(i) != *c {
                return false;
            }
        }
        for (i, c) in other.coeffs.iter() {
            if self.coeff(i) != *c {
                return false;
            }
        }
        true
    }
}

impl fmt::Display for TruncatedSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, c) in self.coeffs.iter() {
            if *c == Scalar::ZERO {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({c})*{i}")?;
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Scalar {
        Scalar::new(re, im)
    }

    fn mono1(order: u32, k: u32, l: u32, v: Scalar) -> TruncatedSeries {
        TruncatedSeries::monomial(1, order, MultiIndex::new(vec![k, l]), v)
    }

    #[test]
    fn difference_of_squares() {
        // (1 + x)(1 - x) at order 2 is 1 - x^2
        let one = TruncatedSeries::constant(1, 2, Scalar::ONE);
        let x = mono1(2, 1, 0, Scalar::ONE);
        let a = one.add(&x).unwrap();
        let b = one.sub(&x).unwrap();
        let prod = a.mul(&b).unwrap();
        let expected = one.sub(&mono1(2, 2, 0, Scalar::ONE)).unwrap();
        assert_eq!(prod, expected);
    }

    #[test]
    fn product_beyond_order_truncates_to_zero() {
        let s = mono1(1, 1, 0, Scalar::ONE)
            .add(&mono1(1, 0, 1, Scalar::ONE))
            .unwrap();
        let prod = s.mul(&s).unwrap();
        assert!(prod.is_zero());
    }

    #[test]
    fn monomial_square() {
        let h = mono1(4, 1, 1, Scalar::ONE);
        let sq = h.mul(&h).unwrap();
        assert_eq!(sq, mono1(4, 2, 2, Scalar::ONE));
    }

    #[test]
    fn apply_x_scales_by_l_minus_k() {
        let h = mono1(4, 1, 1, Scalar::ONE);
        assert!(h.apply_x(0).unwrap().is_zero());
        let y2 = mono1(4, 0, 2, Scalar::ONE);
        assert_eq!(y2.apply_x(0).unwrap(), y2.scale(c(2.0, 0.0)));
        let x3 = mono1(4, 3, 0, Scalar::ONE);
        assert_eq!(x3.apply_x(0).unwrap(), x3.scale(c(-3.0, 0.0)));
    }

    #[test]
    fn cohom_examples() {
        // f = 1 -> -i x y
        let one = TruncatedSeries::constant(1, 4, Scalar::ONE);
        assert_eq!(one.cohom(0).unwrap(), mono1(4, 1, 1, -Scalar::I));
        // f = y -> y - i x y^2
        let y = mono1(4, 0, 1, Scalar::ONE);
        let expected = y.add(&mono1(4, 1, 2, -Scalar::I)).unwrap();
        assert_eq!(y.cohom(0).unwrap(), expected);
        // f = x y -> -i x^2 y^2
        let h = mono1(4, 1, 1, Scalar::ONE);
        assert_eq!(h.cohom(0).unwrap(), mono1(4, 2, 2, -Scalar::I));
    }

    #[test]
    fn binary_ops_reject_mismatched_shapes() {
        let a = TruncatedSeries::zero(1, 4);
        let b = TruncatedSeries::zero(2, 4);
        assert!(matches!(a.add(&b), Err(Error::ArityMismatch(1, 2))));
        let d = TruncatedSeries::zero(1, 6);
        assert!(matches!(a.add(&d), Err(Error::OrderMismatch(4, 6))));
    }

    #[test]
    fn out_of_range_pair_rejected() {
        let a = TruncatedSeries::zero(2, 4);
        assert!(matches!(
            a.apply_x(2),
            Err(Error::IndexOutOfRange { index: 2, arity: 2 })
        ));
    }

    #[test]
    fn zero_pruning_equality() {
        let mut a = mono1(4, 1, 0, Scalar::ONE);
        a.set_coeff(MultiIndex::new(vec![0, 3]), c(0.5, 0.0));
        a.set_coeff(MultiIndex::new(vec![0, 3]), Scalar::ZERO);
        let b = mono1(4, 1, 0, Scalar::ONE);
        assert_eq!(a, b);
    }
}
