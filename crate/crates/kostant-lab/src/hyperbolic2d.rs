//! Solvers for the 2D hyperbolic cohomological equation
//! `X(g) - i h g = f` with `h = x y` and `X = -x d/dx + y d/dy`:
//! the jet recursion and its closed form, exact rational solutions for
//! polynomial data, the homotopy integral along the flow for Taylor-flat
//! remainders, and the flat-section constructor.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::series::{MultiIndex, Scalar, TruncatedSeries};

// ---------------------------------------------------------------------------
// one-variable polynomials (used for h-profiles and flat prefactors)
// ---------------------------------------------------------------------------

/// Dense one-variable polynomial with complex coefficients.
#[derive(Clone, PartialEq, Debug, Default)]
pub struct Polynomial1 {
    /// `coeffs[k]` multiplies `z^k`.
    pub coeffs: Vec<Scalar>,
}

impl Polynomial1 {
    pub fn new(coeffs: Vec<Scalar>) -> Self {
        let mut p = Polynomial1 { coeffs };
        p.trim();
        p
    }

    pub fn zero() -> Self {
        Polynomial1 { coeffs: Vec::new() }
    }

    pub fn constant(c: Scalar) -> Self {
        Polynomial1::new(vec![c])
    }

    fn trim(&mut self) {
        while self.coeffs.last() == Some(&Scalar::ZERO) {
            self.coeffs.pop();
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == Scalar::ZERO)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, z: f64) -> Scalar {
        let mut acc = Scalar::ZERO;
        for c in self.coeffs.iter().rev() {
            acc = acc * z + c;
        }
        acc
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![Scalar::ZERO; n];
        for (i, c) in self.coeffs.iter().enumerate() {
            out[i] += c;
        }
        for (i, c) in other.coeffs.iter().enumerate() {
            out[i] += c;
        }
        Polynomial1::new(out)
    }

    pub fn scale(&self, c: Scalar) -> Self {
        Polynomial1::new(self.coeffs.iter().map(|v| v * c).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Polynomial1::zero();
        }
        let mut out = vec![Scalar::ZERO; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial1::new(out)
    }

    /// Multiplication by `z`.
    pub fn mul_z(&self) -> Self {
        if self.is_zero() {
            return Polynomial1::zero();
        }
        let mut out = vec![Scalar::ZERO];
        out.extend_from_slice(&self.coeffs);
        Polynomial1::new(out)
    }

    /// Exact division by `z`; fails when the constant term is nonzero.
    pub fn div_z(&self) -> Option<Self> {
        if self.coeffs.first().copied().unwrap_or(Scalar::ZERO) != Scalar::ZERO {
            return None;
        }
        Some(Polynomial1::new(
            self.coeffs.iter().skip(1).copied().collect(),
        ))
    }
}

// ---------------------------------------------------------------------------
// function classes
// ---------------------------------------------------------------------------

/// One flat factor `z -> pre(z) * exp(-c / z^2)` (0 at `z = 0`), applied at
/// `z = h = x y`. Taylor flat on the whole axis set `{x y = 0}`.
#[derive(Clone, PartialEq, Debug)]
pub struct FlatFactor {
    pub c: f64,
    pub pre: Polynomial1,
}

impl FlatFactor {
    pub fn new(c: f64, pre: Polynomial1) -> Self {
        assert!(c > 0.0, "flat factor rate must be positive");
        FlatFactor { c, pre }
    }

    pub fn eval_z(&self, z: f64) -> Scalar {
        if z == 0.0 {
            return Scalar::ZERO;
        }
        self.pre.eval(z) * (-self.c / (z * z)).exp()
    }
}

/// Finite sum of flat factors; the empty sum is the zero function.
#[derive(Clone, PartialEq, Debug, Default)]
pub struct FlatSum {
    pub factors: Vec<FlatFactor>,
}

impl FlatSum {
    pub fn zero() -> Self {
        FlatSum::default()
    }

    pub fn single(c: f64, pre: Polynomial1) -> Self {
        FlatSum {
            factors: vec![FlatFactor::new(c, pre)],
        }
    }

    pub fn eval_z(&self, z: f64) -> Scalar {
        self.factors.iter().map(|f| f.eval_z(z)).sum()
    }

    /// Combines factors sharing the same decay rate and drops zero prefactors.
    pub fn normalized(&self) -> Self {
        let mut by_rate: BTreeMap<u64, (f64, Polynomial1)> = BTreeMap::new();
        for f in &self.factors {
            let e = by_rate
                .entry(f.c.to_bits())
                .or_insert_with(|| (f.c, Polynomial1::zero()));
            e.1 = e.1.add(&f.pre);
        }
        FlatSum {
            factors: by_rate
                .into_values()
                .filter(|(_, pre)| !pre.is_zero())
                .map(|(c, pre)| FlatFactor { c, pre })
                .collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.normalized().factors.is_empty()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        FlatSum { factors }.normalized()
    }

    pub fn scale(&self, c: Scalar) -> Self {
        FlatSum {
            factors: self
                .factors
                .iter()
                .map(|f| FlatFactor {
                    c: f.c,
                    pre: f.pre.scale(c),
                })
                .collect(),
        }
    }

    /// The image under `F(h) -> -i h F(h)`, the `-i h` part of the
    /// cohomological operator (the vector field kills functions of `h`).
    pub fn times_minus_i_z(&self) -> Self {
        FlatSum {
            factors: self
                .factors
                .iter()
                .map(|f| FlatFactor {
                    c: f.c,
                    pre: f.pre.mul_z().scale(-Scalar::I),
                })
                .collect(),
        }
    }
}

/// Per-quadrant flat data `(a_1, a_2, a_3, a_4)` of a flat section.
/// Quadrant order: 1: `x>0,y>0`; 2: `x>0,y<0`; 3: `x<0,y>0`; 4: `x<0,y<0`.
#[derive(Clone, PartialEq, Debug, Default)]
pub struct QuadrantKernel {
    pub a: [FlatSum; 4],
}

impl QuadrantKernel {
    pub fn is_zero(&self) -> bool {
        self.a.iter().all(FlatSum::is_zero)
    }

    fn quadrant(x: f64, y: f64) -> usize {
        match (x > 0.0, y > 0.0) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        }
    }

    /// The quadrant display of the flat-section classification:
    /// `f = a_j(h) e^{i h (ln gamma - 1)}` off the axes, `0` on them, so that
    /// `f e^{i h}` matches `a_j(h) e^{i h ln gamma}` per quadrant.
    pub fn eval(&self, x: f64, y: f64) -> Scalar {
        let h = x * y;
        if h == 0.0 {
            return Scalar::ZERO;
        }
        let lg = 0.5 * (y / x).abs().ln();
        self.a[Self::quadrant(x, y)].eval_z(h) * (Scalar::I * h * (lg - 1.0)).exp()
    }
}

/// One exact rational solution/datum term
/// `coeff * x^a y^b q(h) / prod_s (m_s - i h)` with every `m_s` a nonzero
/// integer, so the denominator never vanishes for real `h`.
#[derive(Clone, PartialEq, Debug)]
pub struct RationalTerm {
    pub coeff: Scalar,
    pub xexp: u32,
    pub yexp: u32,
    pub q: Polynomial1,
    pub denom: Vec<i64>,
}

impl RationalTerm {
    /// Canonical form: `min(xexp, yexp) = 0`, diagonal content folded into `q`,
    /// denominator factors sorted.
    pub fn new(coeff: Scalar, xexp: u32, yexp: u32, q: Polynomial1, denom: Vec<i64>) -> Self {
        assert!(denom.iter().all(|m| *m != 0), "denominator factor m = 0");
        let d = xexp.min(yexp);
        let mut q = q;
        for _ in 0..d {
            q = q.mul_z();
        }
        let mut denom = denom;
        denom.sort_unstable();
        RationalTerm {
            coeff,
            xexp: xexp - d,
            yexp: yexp - d,
            q,
            denom,
        }
    }

    /// Offset `m = yexp - xexp`, the `X`-eigenvalue of the monomial prefactor.
    pub fn offset(&self) -> i64 {
        self.yexp as i64 - self.xexp as i64
    }

    pub fn eval(&self, x: f64, y: f64) -> Scalar {
        let h = x * y;
        let mut v = self.coeff * x.powi(self.xexp as i32) * y.powi(self.yexp as i32) * self.q.eval(h);
        for m in &self.denom {
            v /= Scalar::new(*m as f64, -h);
        }
        v
    }

    pub fn is_zero(&self) -> bool {
        self.coeff == Scalar::ZERO || self.q.is_zero()
    }
}

/// A function on the hyperbolic 2D model assembled from the representable
/// classes: polynomial, exact rational, flat (as direct data), homotopy image
/// of flat data, and quadrant-kernel sections.
///
/// The `homotopy` component denotes `G[F]`, the value of the homotopy integral
/// applied to the stored flat sum, not the flat sum itself.
#[derive(Clone, Debug)]
pub struct SmoothFunction2D {
    pub poly: TruncatedSeries,
    pub rational: Vec<RationalTerm>,
    pub flat: FlatSum,
    pub homotopy: FlatSum,
    pub kernel: Option<QuadrantKernel>,
}

impl SmoothFunction2D {
    pub fn zero() -> Self {
        SmoothFunction2D {
            poly: TruncatedSeries::zero(1, 0),
            rational: Vec::new(),
            flat: FlatSum::zero(),
            homotopy: FlatSum::zero(),
            kernel: None,
        }
    }

    pub fn from_poly(poly: TruncatedSeries) -> Self {
        assert_eq!(poly.arity(), 1, "2D functions have one symplectic pair");
        SmoothFunction2D {
            poly,
            ..Self::zero()
        }
    }

    pub fn from_flat(flat: FlatSum) -> Self {
        SmoothFunction2D {
            flat,
            ..Self::zero()
        }
    }

    pub fn from_kernel(kernel: QuadrantKernel) -> Self {
        SmoothFunction2D {
            kernel: Some(kernel),
            ..Self::zero()
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> Scalar {
        let mut v = self.poly.eval(&[x, y]);
        for t in &self.rational {
            v += t.eval(x, y);
        }
        let h = x * y;
        v += self.flat.eval_z(h);
        if !self.homotopy.factors.is_empty() {
            v += homotopy_closed_form(&self.homotopy, x, y);
        }
        if let Some(k) = &self.kernel {
            v += k.eval(x, y);
        }
        v
    }

    /// Structural zero test: every component identically zero.
    pub fn is_structural_zero(&self) -> bool {
        self.poly.is_zero()
            && self.rational.iter().all(RationalTerm::is_zero)
            && self.flat.is_zero()
            && self.homotopy.is_zero()
            && self.kernel.as_ref().is_none_or(QuadrantKernel::is_zero)
    }

    pub fn add(&self, other: &Self) -> Self {
        let order = self.poly.order().max(other.poly.order());
        let poly = self
            .poly
            .with_order(order)
            .add(&other.poly.with_order(order))
            .expect("aligned orders");
        let mut rational = self.rational.clone();
        rational.extend(other.rational.iter().cloned());
        let kernel = match (&self.kernel, &other.kernel) {
            (None, None) => None,
            (Some(k), None) | (None, Some(k)) => Some(k.clone()),
            (Some(a), Some(b)) => {
                let mut merged = QuadrantKernel::default();
                for i in 0..4 {
                    merged.a[i] = a.a[i].add(&b.a[i]);
                }
                Some(merged)
            }
        };
        SmoothFunction2D {
            poly,
            rational,
            flat: self.flat.add(&other.flat),
            homotopy: self.homotopy.add(&other.homotopy),
            kernel,
        }
    }

    pub fn scale(&self, c: Scalar) -> Self {
        SmoothFunction2D {
            poly: self.poly.scale(c),
            rational: self
                .rational
                .iter()
                .map(|t| RationalTerm {
                    coeff: t.coeff * c,
                    ..t.clone()
                })
                .collect(),
            flat: self.flat.scale(c),
            homotopy: self.homotopy.scale(c),
            kernel: self.kernel.as_ref().map(|k| QuadrantKernel {
                a: [
                    k.a[0].scale(c),
                    k.a[1].scale(c),
                    k.a[2].scale(c),
                    k.a[3].scale(c),
                ],
            }),
        }
    }

    /// Taylor expansion at the origin to the given order. Flat, homotopy and
    /// kernel components are Taylor flat and contribute nothing.
    pub fn taylor(&self, order: u32) -> TruncatedSeries {
        let mut out = if self.poly.order() >= order {
            self.poly.truncate_to(order)
        } else {
            self.poly.with_order(order)
        };
        for t in &self.rational {
            if t.is_zero() {
                continue;
            }
            // x^a y^b q(h) * prod (m - i h)^{-1}
            let mut s = TruncatedSeries::monomial(
                1,
                order,
                MultiIndex::new(vec![t.xexp, t.yexp]),
                t.coeff,
            );
            let mut qh = TruncatedSeries::zero(1, order);
            for (k, c) in t.q.coeffs.iter().enumerate() {
                let k = k as u32;
                if 2 * k <= order {
                    qh.set_coeff(MultiIndex::new(vec![k, k]), *c);
                }
            }
            s = s.mul(&qh).expect("same shape");
            for m in &t.denom {
                // 1 / (m - i h) = (1/m) sum_j (i h / m)^j
                let mut inv = TruncatedSeries::zero(1, order);
                let minv = Scalar::new(1.0 / *m as f64, 0.0);
                let mut c = minv;
                let mut j = 0u32;
                while 2 * j <= order {
                    inv.set_coeff(MultiIndex::new(vec![j, j]), c);
                    c *= Scalar::I * minv;
                    j += 1;
                }
                s = s.mul(&inv).expect("same shape");
            }
            out = out.add(&s).expect("same shape");
        }
        out
    }
}

// ---------------------------------------------------------------------------
// jet solvers
// ---------------------------------------------------------------------------

fn i_pow(j: u32) -> Scalar {
    match j % 4 {
        0 => Scalar::ONE,
        1 => Scalar::I,
        2 => -Scalar::ONE,
        _ => -Scalar::I,
    }
}

fn check_jet_input(f: &TruncatedSeries) -> Result<u32> {
    assert_eq!(f.arity(), 1, "jet solvers act on one symplectic pair");
    assert!(f.order() >= 2, "input order must be at least 2");
    if f.coeff(&MultiIndex::zero(1)) != Scalar::ZERO {
        return Err(Error::NonzeroConstantTerm(0));
    }
    Ok(f.order() - 2)
}

/// Solves `X(g) - i h g = f` in jets by the recursive relations. The input is
/// demanded at order `N + 2` and the result is returned at order `N`.
///
/// The diagonal seed is `g_{k,k} = i f_{k+1,k+1}` for all `k >= 0`, and the
/// edge rows are `g_{0,k} = f_{0,k} / k`, `g_{k,0} = -f_{k,0} / k`: these are
/// the values forced by the coefficient identity
/// `(l - k) g_{k,l} = i g_{k-1,l-1} + f_{k,l}` with indices outside the
/// quadrant treated as zero.
pub fn solve_jets_recursive(f: &TruncatedSeries) -> Result<TruncatedSeries> {
    let n = check_jet_input(f)?;
    let mut g = TruncatedSeries::zero(1, n);
    let fc = |k: u32, l: u32| f.coeff(&MultiIndex::new(vec![k, l]));
    for k in 0..=n {
        for l in 0..=(n - k) {
            let v = if k == l {
                Scalar::I * fc(k + 1, l + 1)
            } else if k == 0 {
                fc(0, l) / l as f64
            } else if l == 0 {
                -fc(k, 0) / k as f64
            } else {
                let prev = g.coeff(&MultiIndex::new(vec![k - 1, l - 1]));
                (fc(k, l) + Scalar::I * prev) / (l as f64 - k as f64)
            };
            g.set_coeff(MultiIndex::new(vec![k, l]), v);
        }
    }
    Ok(g)
}

/// Closed-form jets: the summed version of the recursion,
/// `g_{k,k} = i f_{k+1,k+1}` and, for `k != l`,
/// `g_{k,l} = sum_{j=0}^{min(k,l)} i^j f_{k-j,l-j} / (l-k)^{j+1}`.
/// Agrees with [`solve_jets_recursive`] coefficientwise.
pub fn solve_jets_closed_form(f: &TruncatedSeries) -> Result<TruncatedSeries> {
    let n = check_jet_input(f)?;
    let mut g = TruncatedSeries::zero(1, n);
    let fc = |k: u32, l: u32| f.coeff(&MultiIndex::new(vec![k, l]));
    for k in 0..=n {
        for l in 0..=(n - k) {
            let v = if k == l {
                Scalar::I * fc(k + 1, l + 1)
            } else {
                let m = l as f64 - k as f64;
                let mut acc = Scalar::ZERO;
                let mut pow = m;
                for j in 0..=k.min(l) {
                    acc += i_pow(j) * fc(k - j, l - j) / pow;
                    pow *= m;
                }
                acc
            };
            g.set_coeff(MultiIndex::new(vec![k, l]), v);
        }
    }
    Ok(g)
}

// ---------------------------------------------------------------------------
// exact rational solver
// ---------------------------------------------------------------------------

/// Solves `X(g) - i h g = f` exactly for polynomial `f` with `f(0,0) = 0`.
///
/// Grouping `f = sum x^a y^b q_{a,b}(h)` by offset `m = b - a`: an off-diagonal
/// group solves to the rational term `x^a y^b q(h) / (m - i h)`, the diagonal
/// group `q(h)` (with `q(0) = 0`) solves to the polynomial `i q(h) / h` by
/// exact division.
pub fn solve_poly_exact(f: &TruncatedSeries) -> Result<SmoothFunction2D> {
    assert_eq!(f.arity(), 1, "2D solver");
    if f.coeff(&MultiIndex::zero(1)) != Scalar::ZERO {
        return Err(Error::NonzeroConstantTerm(0));
    }
    // group by reduced monomial (alpha, beta) with min(alpha, beta) = 0
    let mut groups: BTreeMap<(u32, u32), Polynomial1> = BTreeMap::new();
    for (idx, c) in f.iter() {
        if *c == Scalar::ZERO {
            continue;
        }
        let (a, b) = idx.pair(0);
        let d = a.min(b);
        let mut z = vec![Scalar::ZERO; d as usize + 1];
        z[d as usize] = *c;
        let entry = groups
            .entry((a - d, b - d))
            .or_insert_with(Polynomial1::zero);
        *entry = entry.add(&Polynomial1::new(z));
    }
    let mut g = SmoothFunction2D::zero();
    let mut poly = TruncatedSeries::zero(1, f.order());
    for ((alpha, beta), q) in groups {
        if alpha == 0 && beta == 0 {
            // diagonal group: g += i q(h)/h
            let qh = q.div_z().expect("constant term checked above");
            for (k, c) in qh.coeffs.iter().enumerate() {
                let k = k as u32;
                poly.add_coeff(MultiIndex::new(vec![k, k]), Scalar::I * c);
            }
        } else {
            let m = beta as i64 - alpha as i64;
            g.rational
                .push(RationalTerm::new(Scalar::ONE, alpha, beta, q, vec![m]));
        }
    }
    g.poly = poly;
    Ok(g)
}

// ---------------------------------------------------------------------------
// homotopy integral for flat data
// ---------------------------------------------------------------------------

/// `(e^{i h T} - 1) / (i h)`, the antiderivative of `e^{-i h t}` over
/// `[-T, 0]`; series fallback near `h T = 0` avoids cancellation.
fn phase_integral(h: f64, t: f64) -> Scalar {
    let z = h * t;
    if z.abs() < 1e-3 {
        // T * sum_k (i z)^k / (k+1)!
        let iz = Scalar::new(0.0, z);
        let mut term = Scalar::ONE;
        let mut acc = Scalar::ONE;
        for k in 1..6 {
            term = term * iz / (k as f64 + 1.0);
            acc += term;
        }
        t * acc
    } else {
        ((Scalar::new(0.0, z)).exp() - Scalar::ONE) / Scalar::new(0.0, h)
    }
}

fn homotopy_closed_form(flat: &FlatSum, x: f64, y: f64) -> Scalar {
    let h = x * y;
    if h == 0.0 {
        return Scalar::ZERO;
    }
    let lg = 0.5 * (y / x).abs().ln();
    flat.eval_z(h) * phase_integral(h, lg)
}

/// The homotopy operator `G(p) = int_{-ln gamma}^{0} e^{-i h t} F(phi_t(p)) dt`
/// for a flat sum `F` applied at `z = h`. `F` factors through the flow
/// invariant `h`, so every term has the exact antiderivative of `e^{-i h t}`
/// and the integral is closed form; on the axes the continuous extension is 0.
pub fn homotopy_flat_integral(flat: &FlatSum, x: f64, y: f64, tol: f64) -> Result<Scalar> {
    assert!(tol > 0.0, "tolerance must be positive");
    Ok(homotopy_closed_form(flat, x, y))
}

/// Quadrature route for the same integral: integrates `e^{-i h t} F(phi_t(p))`
/// adaptively along the actual flow. Independent of the closed form; used as
/// its oracle and as the fallback for data outside the flow-invariant class.
pub fn homotopy_flat_integral_quadrature(
    flat: &FlatSum,
    x: f64,
    y: f64,
    tol: f64,
) -> Result<Scalar> {
    let h = x * y;
    if h == 0.0 {
        return Ok(Scalar::ZERO);
    }
    let lg = 0.5 * (y / x).abs().ln();
    let integrand = |t: f64| {
        let (xt, yt) = ((-t).exp() * x, t.exp() * y);
        (Scalar::new(0.0, -h * t)).exp() * flat.eval_z(xt * yt)
    };
    crate::verify::adaptive_quadrature(&integrand, -lg, 0.0, tol)
}

// ---------------------------------------------------------------------------
// full 2D solve and flat sections
// ---------------------------------------------------------------------------

/// Symbolic application of the cohomological operator `X - i h` to a
/// representable function. Rational terms and flat sums are eigenobjects up to
/// an `h`-polynomial factor; the homotopy component maps back to its flat data
/// and kernel components are annihilated.
pub fn cohom_2d(f: &SmoothFunction2D) -> SmoothFunction2D {
    let order = f.poly.order().max(f.poly.degree() + 2);
    let poly = f.poly.with_order(order).cohom(0).expect("pair in range");
    let rational = f
        .rational
        .iter()
        .filter(|t| !t.is_zero())
        .map(|t| {
            // (X - i h) [x^a y^b q(h)/D(h)] = x^a y^b q(h) (m - i h) / D(h)
            let m = t.offset();
            let factor = Polynomial1::new(vec![Scalar::new(m as f64, 0.0), -Scalar::I]);
            RationalTerm {
                q: t.q.mul(&factor),
                ..t.clone()
            }
        })
        .collect();
    SmoothFunction2D {
        poly,
        rational,
        flat: f.flat.times_minus_i_z().add(&f.homotopy),
        homotopy: FlatSum::zero(),
        kernel: None,
    }
}

/// Numerator of the polynomial/rational part of `f` over the common
/// denominator `prod (m - i h)`, as exact polynomial algebra.
fn rational_numerator(f: &SmoothFunction2D) -> TruncatedSeries {
    // common denominator: per-factor multiplicity maximum over the terms
    let mut common: BTreeMap<i64, usize> = BTreeMap::new();
    for t in &f.rational {
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        for m in &t.denom {
            *counts.entry(*m).or_default() += 1;
        }
        for (m, c) in counts {
            let e = common.entry(m).or_default();
            *e = (*e).max(c);
        }
    }
    let extra: u32 = common.values().map(|c| 2 * *c as u32).sum();
    let mut order = f.poly.degree() + extra;
    for t in &f.rational {
        order = order.max(t.xexp + t.yexp + 2 * t.q.degree() as u32 + extra);
    }
    let mut num = f.poly.with_order(order);
    // multiply the polynomial part by the full common denominator
    for (m, mult) in &common {
        for _ in 0..*mult {
            let factor = denom_series(*m, order);
            num = num.mul(&factor).expect("same shape");
        }
    }
    for t in &f.rational {
        if t.is_zero() {
            continue;
        }
        let mut s = TruncatedSeries::monomial(1, order, MultiIndex::new(vec![t.xexp, t.yexp]), t.coeff);
        let mut qh = TruncatedSeries::zero(1, order);
        for (k, c) in t.q.coeffs.iter().enumerate() {
            qh.set_coeff(MultiIndex::new(vec![k as u32, k as u32]), *c);
        }
        s = s.mul(&qh).expect("same shape");
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        for m in &t.denom {
            *counts.entry(*m).or_default() += 1;
        }
        for (m, mult) in &common {
            let missing = mult - counts.get(m).copied().unwrap_or(0);
            for _ in 0..missing {
                s = s.mul(&denom_series(*m, order)).expect("same shape");
            }
        }
        num = num.add(&s).expect("same shape");
    }
    num
}

fn denom_series(m: i64, order: u32) -> TruncatedSeries {
    let mut s = TruncatedSeries::constant(1, order, Scalar::new(m as f64, 0.0));
    if order >= 2 {
        s.set_coeff(MultiIndex::new(vec![1, 1]), -Scalar::I);
    }
    s
}

/// Symbolic residual `(X - i h) g - f` of the polynomial/rational parts, as
/// the max absolute coefficient of the numerator over the common denominator.
/// Flat and homotopy parts are compared as flat sums; a nonzero mismatch there
/// is folded into the reported maximum via prefactor coefficients.
pub fn symbolic_residual_2d(g: &SmoothFunction2D, f: &SmoothFunction2D) -> f64 {
    let applied = cohom_2d(g);
    let diff = applied.add(&f.scale(-Scalar::ONE));
    let mut max = rational_numerator(&diff).max_abs_coeff();
    for factor in diff.flat.normalized().factors {
        for c in factor.pre.coeffs {
            max = max.max(c.norm());
        }
    }
    max
}

/// Full 2D solve for `f` without a kernel component: exact solve of the
/// polynomial and rational parts, homotopy image of the flat part. Satisfies
/// `(X - i h) g = f` symbolically on the rational side and pointwise on the
/// flat side.
pub fn solve_full_2d(f: &SmoothFunction2D) -> Result<SmoothFunction2D> {
    if f.kernel.as_ref().is_some_and(|k| !k.is_zero()) {
        return Err(Error::UnsolvableFactor(
            0,
            "kernel component on the right-hand side".into(),
        ));
    }
    if !f.homotopy.is_zero() {
        return Err(Error::UnsolvableFactor(
            0,
            "homotopy component on the right-hand side".into(),
        ));
    }
    let mut g = solve_poly_exact(&f.poly)?;
    for t in &f.rational {
        if t.is_zero() {
            continue;
        }
        let m = t.offset();
        if m != 0 {
            let mut denom = t.denom.clone();
            denom.push(m);
            g.rational
                .push(RationalTerm::new(t.coeff, t.xexp, t.yexp, t.q.clone(), denom));
        } else {
            // diagonal rational term: g += i q(h)/h / D(h), exact division
            let qh = t.q.div_z().ok_or(Error::NonzeroConstantTerm(0))?;
            if !qh.is_zero() {
                g.rational.push(RationalTerm::new(
                    t.coeff * Scalar::I,
                    0,
                    0,
                    qh,
                    t.denom.clone(),
                ));
            }
        }
    }
    g.homotopy = f.flat.clone();
    Ok(g)
}

/// Assembles the flat section determined by quadrant data; the result is a
/// kernel-only function `f` with `X(f) = i h f` and `f e^{i h}` the section.
pub fn flat_section_build(kernel: QuadrantKernel) -> SmoothFunction2D {
    SmoothFunction2D::from_kernel(kernel)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mono(order: u32, k: u32, l: u32, v: Scalar) -> TruncatedSeries {
        TruncatedSeries::monomial(1, order, MultiIndex::new(vec![k, l]), v)
    }

    #[test]
    fn jets_of_zero() {
        let z = TruncatedSeries::zero(1, 7);
        assert!(solve_jets_recursive(&z).unwrap().is_zero());
        assert!(solve_jets_closed_form(&z).unwrap().is_zero());
    }

    #[test]
    fn jets_reject_constant_term() {
        let f = TruncatedSeries::constant(1, 5, Scalar::ONE);
        assert!(matches!(
            solve_jets_recursive(&f),
            Err(Error::NonzeroConstantTerm(0))
        ));
        assert!(matches!(
            solve_jets_closed_form(&f),
            Err(Error::NonzeroConstantTerm(0))
        ));
    }

    #[test]
    fn jets_of_y_order_five() {
        // f = y at order 5 gives the Taylor head of y/(1 - i h) at order 3
        let f = mono(5, 0, 1, Scalar::ONE);
        let g = solve_jets_recursive(&f).unwrap();
        let expected = mono(3, 0, 1, Scalar::ONE)
            .add(&mono(3, 1, 2, Scalar::I))
            .unwrap();
        assert_eq!(g, expected);
        assert_eq!(solve_jets_closed_form(&f).unwrap(), expected);
        // one order higher the next term -x^2 y^3 appears
        let f7 = mono(7, 0, 1, Scalar::ONE);
        let g5 = solve_jets_recursive(&f7).unwrap();
        assert_eq!(g5.coeff(&MultiIndex::new(vec![2, 3])), -Scalar::ONE);
    }

    #[test]
    fn jets_diagonal_rule() {
        // f = x^2 y^2: diagonal rule at k = 1 gives g_{1,1} = i
        let f = mono(6, 2, 2, Scalar::ONE);
        let g = solve_jets_recursive(&f).unwrap();
        assert_eq!(g.coeff(&MultiIndex::new(vec![1, 1])), Scalar::I);
    }

    #[test]
    fn jets_closed_form_edge_examples() {
        let f = mono(4, 0, 1, Scalar::ONE);
        let g = solve_jets_closed_form(&f).unwrap();
        assert_eq!(g.coeff(&MultiIndex::new(vec![0, 1])), Scalar::ONE);
        let f = mono(4, 0, 2, Scalar::ONE);
        let g = solve_jets_closed_form(&f).unwrap();
        assert_eq!(
            g.coeff(&MultiIndex::new(vec![0, 2])),
            Scalar::new(0.5, 0.0)
        );
    }

    #[test]
    fn jets_solution_satisfies_equation() {
        // residual of the recursion output under the truncated operator
        let mut f = TruncatedSeries::zero(1, 10);
        for (k, l, re, im) in [(0, 1, 1.0, 0.5), (2, 0, -0.7, 0.0), (1, 1, 0.3, -0.2), (2, 3, 0.9, 1.1)] {
            f.set_coeff(MultiIndex::new(vec![k, l]), Scalar::new(re, im));
        }
        let g = solve_jets_recursive(&f).unwrap();
        let residual = g.cohom(0).unwrap().sub(&f.truncate_to(8)).unwrap();
        assert!(residual.max_abs_coeff() < 1e-13, "{residual}");
    }

    #[test]
    fn poly_exact_examples() {
        // f = y -> y/(1 - i h)
        let f = mono(6, 0, 1, Scalar::ONE);
        let g = solve_poly_exact(&f).unwrap();
        assert_eq!(g.rational.len(), 1);
        assert_eq!(g.rational[0].denom, vec![1]);
        assert!(symbolic_residual_2d(&g, &SmoothFunction2D::from_poly(f.clone())) < 1e-14);
        // Taylor head matches the recursion
        let jets = solve_jets_recursive(&f).unwrap();
        assert!(
            crate::verify::compare_series(&jets, &g.taylor(4), 1e-12)
                .unwrap()
                .within_tolerance()
        );

        // f = x -> -x/(1 + i h)
        let f = mono(6, 1, 0, Scalar::ONE);
        let g = solve_poly_exact(&f).unwrap();
        assert!(symbolic_residual_2d(&g, &SmoothFunction2D::from_poly(f.clone())) < 1e-14);
        let t = g.taylor(4);
        assert_eq!(t.coeff(&MultiIndex::new(vec![1, 0])), -Scalar::ONE);
        assert_eq!(t.coeff(&MultiIndex::new(vec![2, 1])), Scalar::I);

        // f = x y -> g = i
        let f = mono(6, 1, 1, Scalar::ONE);
        let g = solve_poly_exact(&f).unwrap();
        assert!(g.rational.is_empty());
        assert_eq!(g.poly.coeff(&MultiIndex::zero(1)), Scalar::I);
    }

    #[test]
    fn poly_exact_rejects_constant() {
        let f = TruncatedSeries::constant(1, 4, Scalar::ONE);
        assert!(matches!(
            solve_poly_exact(&f),
            Err(Error::NonzeroConstantTerm(0))
        ));
    }

    #[test]
    fn homotopy_zero_and_diagonal() {
        let zero = FlatSum::zero();
        assert_eq!(
            homotopy_flat_integral(&zero, 0.7, -0.3, 1e-10).unwrap(),
            Scalar::ZERO
        );
        let f = FlatSum::single(1.0, Polynomial1::constant(Scalar::ONE));
        // on the diagonal x = y > 0 the integration interval is empty
        let g = homotopy_flat_integral(&f, 0.8, 0.8, 1e-10).unwrap();
        assert!(g.norm() < 1e-15);
        // on the axes the continuous extension is zero
        assert_eq!(
            homotopy_flat_integral(&f, 0.0, 1.0, 1e-10).unwrap(),
            Scalar::ZERO
        );
    }

    #[test]
    fn homotopy_closed_form_example() {
        // F = exp(-1/h^2) at p = (1, e^2): F is constant along the flow and
        // the integral reduces to the e^{-i h t} antiderivative over [-1, 0]
        let f = FlatSum::single(1.0, Polynomial1::constant(Scalar::ONE));
        let h = (2.0f64).exp();
        let p = (1.0, h);
        let got = homotopy_flat_integral(&f, p.0, p.1, 1e-12).unwrap();
        let want = (-1.0 / (h * h)).exp()
            * ((Scalar::new(0.0, h)).exp() - Scalar::ONE)
            / Scalar::new(0.0, h);
        assert!((got - want).norm() < 1e-13);
    }

    #[test]
    fn homotopy_closed_form_matches_quadrature() {
        let f = FlatSum::single(
            2.0,
            Polynomial1::new(vec![Scalar::new(0.3, 0.0), Scalar::new(0.0, -1.1)]),
        );
        for p in [(0.9, 0.4), (-0.5, 0.8), (1.2, -1.0), (0.3, 0.25)] {
            let a = homotopy_flat_integral(&f, p.0, p.1, 1e-11).unwrap();
            let b = homotopy_flat_integral_quadrature(&f, p.0, p.1, 1e-11).unwrap();
            assert!((a - b).norm() < 1e-9, "{a} vs {b} at {p:?}");
        }
    }

    #[test]
    fn solve_full_2d_reduces_to_rational_solver() {
        let f = SmoothFunction2D::from_poly(mono(6, 0, 1, Scalar::ONE));
        let g = solve_full_2d(&f).unwrap();
        assert_eq!(g.rational.len(), 1);
        assert!(g.homotopy.is_zero());
        assert!(symbolic_residual_2d(&g, &f) < 1e-14);
    }

    #[test]
    fn solve_full_2d_zero() {
        let g = solve_full_2d(&SmoothFunction2D::zero()).unwrap();
        assert!(g.is_structural_zero());
    }

    #[test]
    fn flat_section_zero_kernel() {
        let f = flat_section_build(QuadrantKernel::default());
        for p in [(0.5, 0.5), (-0.3, 0.9), (0.0, 1.0)] {
            assert_eq!(f.eval(p.0, p.1), Scalar::ZERO);
        }
    }

    #[test]
    fn flat_section_supported_on_first_quadrant() {
        let mut k = QuadrantKernel::default();
        k.a[0] = FlatSum::single(1.0, Polynomial1::constant(Scalar::ONE));
        let f = flat_section_build(k);
        assert!(f.eval(0.5, 0.5).norm() > 0.0);
        assert_eq!(f.eval(-0.5, 0.5), Scalar::ZERO);
        assert_eq!(f.eval(0.5, -0.5), Scalar::ZERO);
        assert_eq!(f.eval(-0.5, -0.5), Scalar::ZERO);
        assert_eq!(f.eval(0.0, 0.7), Scalar::ZERO);
    }

    #[test]
    fn cohom_2d_matches_series_operator_on_polys() {
        let mut p = TruncatedSeries::zero(1, 8);
        p.set_coeff(MultiIndex::new(vec![1, 2]), Scalar::new(0.7, -0.1));
        p.set_coeff(MultiIndex::new(vec![3, 0]), Scalar::new(-0.2, 0.4));
        let f = SmoothFunction2D::from_poly(p.clone());
        let applied = cohom_2d(&f);
        let direct = p.cohom(0).unwrap();
        assert_eq!(applied.poly, direct);
    }
}
