//! Line-bundle-valued polarised forms on the purely hyperbolic model in `2n`
//! dimensions, the coboundary `d^nabla`, closedness checking, and the
//! constructive solvers for exact 1-forms (all `n`), top forms, and 2-forms in
//! dimension 6.
//!
//! Forms are stored coefficientwise on strictly increasing index tuples. Two
//! coefficient representations back the same solvers: `TruncatedSeries`
//! (formal mode, default) and [`SeparableFunction`] (exact mode, where
//! residuals vanish identically rather than up to truncation).

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::hyperbolic2d::{cohom_2d, solve_full_2d, SmoothFunction2D};
use crate::normal_forms::{ModelSystem, Point};
use crate::series::{MultiIndex, Scalar, TruncatedSeries};

/// Tolerance below which a formal or sampled residual counts as zero.
pub const ZERO_TOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// coefficient algebra
// ---------------------------------------------------------------------------

/// The operations a form-coefficient representation must support.
pub trait FormCoeff: Clone {
    type Ctx: Clone + PartialEq + std::fmt::Debug;

    fn zero(ctx: &Self::Ctx) -> Self;
    fn ctx(&self) -> Self::Ctx;
    /// `(X_j - i h_j)` applied to the coefficient.
    fn cohom(&self, j: usize) -> Result<Self>;
    /// Sum/difference; representations with truncation align to the common
    /// truncation first.
    fn add(&self, other: &Self) -> Result<Self>;
    fn sub(&self, other: &Self) -> Result<Self>;
    fn neg(&self) -> Self;
    /// Solves `(X_j - i h_j) g = self` in pair `j`, the other pairs as
    /// parameters.
    fn solve_pair_coeff(&self, j: usize) -> Result<Self>;
    /// Residual magnitude: max absolute series coefficient, or a sampled
    /// pointwise maximum for the exact representation.
    fn residual_norm(&self) -> f64;

    fn is_zero_within(&self, tol: f64) -> bool {
        self.residual_norm() <= tol
    }
}

impl FormCoeff for TruncatedSeries {
    type Ctx = (usize, u32);

    fn zero(ctx: &Self::Ctx) -> Self {
        TruncatedSeries::zero(ctx.0, ctx.1)
    }

    fn ctx(&self) -> Self::Ctx {
        (self.arity(), self.order())
    }

    fn cohom(&self, j: usize) -> Result<Self> {
        TruncatedSeries::cohom(self, j)
    }

    fn add(&self, other: &Self) -> Result<Self> {
        let order = self.order().min(other.order());
        self.truncate_to(order).add(&other.truncate_to(order))
    }

    fn sub(&self, other: &Self) -> Result<Self> {
        let order = self.order().min(other.order());
        self.truncate_to(order).sub(&other.truncate_to(order))
    }

    fn neg(&self) -> Self {
        TruncatedSeries::neg(self)
    }

    fn solve_pair_coeff(&self, j: usize) -> Result<Self> {
        solve_pair_formal(j, self)
    }

    fn residual_norm(&self) -> f64 {
        self.max_abs_coeff()
    }
}

/// Formal parametric solve: the equation only involves the pair-`j`
/// variables, so each 2D slice over a fixed parameter monomial is solved by
/// the jet recursion. Input order `N` yields output order `N - 2`.
fn solve_pair_formal(j: usize, f: &TruncatedSeries) -> Result<TruncatedSeries> {
    if j >= f.arity() {
        return Err(Error::IndexOutOfRange {
            index: j,
            arity: f.arity(),
        });
    }
    assert!(f.order() >= 2, "input order must be at least 2");
    let out_order = f.order() - 2;
    let mut g = TruncatedSeries::zero(f.arity(), out_order);
    for (param, slice) in f.slices_along(j) {
        let d = param.total_degree();
        if slice.get(&(0, 0)).copied().unwrap_or(Scalar::ZERO) != Scalar::ZERO {
            return Err(Error::NonzeroConstantTerm(j));
        }
        if d > out_order {
            // parameter degree saturates the output order; nothing to place
            continue;
        }
        let slice_order = f.order() - d;
        let mut fs = TruncatedSeries::zero(1, slice_order);
        for ((k, l), c) in &slice {
            fs.set_coeff(MultiIndex::new(vec![*k, *l]), *c);
        }
        let gs = crate::hyperbolic2d::solve_jets_recursive(&fs)
            .map_err(|_| Error::NonzeroConstantTerm(j))?;
        for (idx, c) in gs.iter() {
            if *c == Scalar::ZERO {
                continue;
            }
            let (k, l) = idx.pair(0);
            g.set_coeff(param.with_pair(j, k, l), *c);
        }
    }
    Ok(g)
}

// ---------------------------------------------------------------------------
// separable functions (exact mode)
// ---------------------------------------------------------------------------

/// One product term: a representable 2D factor per symplectic pair.
#[derive(Clone, Debug)]
pub struct SeparableTerm {
    pub factors: Vec<SmoothFunction2D>,
}

impl SeparableTerm {
    pub fn eval(&self, p: &Point) -> Scalar {
        self.factors
            .iter()
            .enumerate()
            .map(|(j, f)| {
                let (x, y) = p.pair(j);
                f.eval(x, y)
            })
            .product()
    }

    fn is_structural_zero(&self) -> bool {
        self.factors.iter().any(SmoothFunction2D::is_structural_zero)
    }
}

/// Finite sum of per-pair product terms; the exact-regime representation of
/// form coefficients.
#[derive(Clone, Debug)]
pub struct SeparableFunction {
    arity: usize,
    pub terms: Vec<SeparableTerm>,
}

impl SeparableFunction {
    pub fn new(arity: usize) -> Self {
        SeparableFunction {
            arity,
            terms: Vec::new(),
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn push_term(&mut self, factors: Vec<SmoothFunction2D>) {
        assert_eq!(factors.len(), self.arity, "one factor per pair");
        self.terms.push(SeparableTerm { factors });
    }

    pub fn eval(&self, p: &Point) -> Scalar {
        assert_eq!(p.arity(), self.arity, "point arity mismatch");
        self.terms.iter().map(|t| t.eval(p)).sum()
    }

    /// Terms with a structurally zero factor removed.
    pub fn pruned(&self) -> Self {
        SeparableFunction {
            arity: self.arity,
            terms: self
                .terms
                .iter()
                .filter(|t| !t.is_structural_zero())
                .cloned()
                .collect(),
        }
    }

    /// Deterministic off-axis sample points for numeric zero checks.
    fn sample_points(arity: usize) -> Vec<Point> {
        // low-discrepancy-ish lattice kept away from the axes
        let mut points = Vec::new();
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        'outer: for _ in 0..200 {
            let coords: Vec<f64> = (0..2 * arity).map(|_| next()).collect();
            for j in 0..arity {
                if (coords[2 * j] * coords[2 * j + 1]).abs() < 0.05 {
                    continue 'outer;
                }
            }
            points.push(Point::new(coords));
            if points.len() == 48 {
                break;
            }
        }
        points
    }
}

impl FormCoeff for SeparableFunction {
    type Ctx = usize;

    fn zero(ctx: &Self::Ctx) -> Self {
        SeparableFunction::new(*ctx)
    }

    fn ctx(&self) -> Self::Ctx {
        self.arity
    }

    fn cohom(&self, j: usize) -> Result<Self> {
        if j >= self.arity {
            return Err(Error::IndexOutOfRange {
                index: j,
                arity: self.arity,
            });
        }
        let mut out = SeparableFunction::new(self.arity);
        for t in &self.terms {
            if t.is_structural_zero() {
                continue;
            }
            let mut factors = t.factors.clone();
            factors[j] = cohom_2d(&factors[j]);
            if !factors[j].is_structural_zero() {
                out.terms.push(SeparableTerm { factors });
            }
        }
        Ok(out)
    }

    fn add(&self, other: &Self) -> Result<Self> {
        if self.arity != other.arity {
            return Err(Error::ArityMismatch(self.arity, other.arity));
        }
        let mut out = self.clone();
        out.terms.extend(other.terms.iter().cloned());
        Ok(out)
    }

    fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    fn neg(&self) -> Self {
        SeparableFunction {
            arity: self.arity,
            terms: self
                .terms
                .iter()
                .map(|t| {
                    let mut factors = t.factors.clone();
                    if let Some(f) = factors.first_mut() {
                        *f = f.scale(-Scalar::ONE);
                    }
                    SeparableTerm { factors }
                })
                .collect(),
        }
    }

    fn solve_pair_coeff(&self, j: usize) -> Result<Self> {
        if j >= self.arity {
            return Err(Error::IndexOutOfRange {
                index: j,
                arity: self.arity,
            });
        }
        let mut out = SeparableFunction::new(self.arity);
        for t in &self.terms {
            if t.is_structural_zero() {
                continue;
            }
            let factor = &t.factors[j];
            if factor.kernel.as_ref().is_some_and(|k| !k.is_zero()) {
                return Err(Error::UnsolvableFactor(
                    j,
                    "kernel factor in the active pair".into(),
                ));
            }
            let solved = solve_full_2d(factor).map_err(|e| match e {
                Error::NonzeroConstantTerm(_) => Error::NonzeroConstantTerm(j),
                Error::UnsolvableFactor(_, m) => Error::UnsolvableFactor(j, m),
                other => other,
            })?;
            let mut factors = t.factors.clone();
            factors[j] = solved;
            out.terms.push(SeparableTerm { factors });
        }
        Ok(out)
    }

    fn residual_norm(&self) -> f64 {
        let pruned = self.pruned();
        if pruned.terms.is_empty() {
            return 0.0;
        }
        Self::sample_points(self.arity)
            .iter()
            .map(|p| pruned.eval(p).norm())
            .fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// polarised forms
// ---------------------------------------------------------------------------

/// Degree-`k` line-bundle-valued polarised form, stored as coefficients on
/// strictly increasing index tuples. Missing tuples are zero coefficients.
#[derive(Clone, Debug)]
pub struct PolarizedForm<C: FormCoeff> {
    arity: usize,
    degree: usize,
    ctx: C::Ctx,
    coeffs: BTreeMap<Vec<usize>, C>,
}

impl<C: FormCoeff> PolarizedForm<C> {
    pub fn new(arity: usize, degree: usize, ctx: C::Ctx) -> Self {
        assert!(degree <= arity, "degree exceeds arity");
        PolarizedForm {
            arity,
            degree,
            ctx,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn ctx(&self) -> &C::Ctx {
        &self.ctx
    }

    pub fn coeffs(&self) -> impl Iterator<Item = (&Vec<usize>, &C)> {
        self.coeffs.iter()
    }

    pub fn set_coeff(&mut self, tuple: Vec<usize>, value: C) {
        assert_eq!(tuple.len(), self.degree, "tuple length must equal degree");
        assert!(
            tuple.windows(2).all(|w| w[0] < w[1]),
            "tuple must be strictly increasing"
        );
        assert!(
            tuple.iter().all(|i| *i < self.arity),
            "tuple index out of range"
        );
        self.coeffs.insert(tuple, value);
    }

    pub fn coeff(&self, tuple: &[usize]) -> Option<&C> {
        self.coeffs.get(tuple)
    }

    /// Coefficient or a zero of the form's context.
    pub fn coeff_or_zero(&self, tuple: &[usize]) -> C {
        self.coeffs
            .get(tuple)
            .cloned()
            .unwrap_or_else(|| C::zero(&self.ctx))
    }

    /// Max residual magnitude over all coefficients.
    pub fn max_norm(&self) -> f64 {
        self.coeffs
            .values()
            .map(C::residual_norm)
            .fold(0.0, f64::max)
    }
}

fn increasing_tuples(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(n, k, i + 1, cur, out);
            cur.pop();
        }
    }
    rec(n, k, 0, &mut cur, &mut out);
    out
}

fn require_hyperbolic(model: &ModelSystem) -> Result<()> {
    if !model.spec().is_purely_hyperbolic() {
        return Err(Error::ModelError(
            "solvers require Williamson type (0, n, 0)".into(),
        ));
    }
    Ok(())
}

/// The coboundary `d^nabla`: on the hyperbolic model with commuting fields and
/// `Theta(X_j) = h_j`, the coefficient on a tuple `(i_0, ..., i_k)` is the
/// alternating sum of `(X_{i_r} - i h_{i_r})` applied to the coefficient with
/// `i_r` omitted.
pub fn apply_dnabla<C: FormCoeff>(
    model: &ModelSystem,
    form: &PolarizedForm<C>,
) -> Result<PolarizedForm<C>> {
    require_hyperbolic(model)?;
    let n = form.arity();
    let k = form.degree();
    if k >= n {
        return Err(Error::DegreeOverflow(k, n));
    }
    let mut out = PolarizedForm::new(n, k + 1, form.ctx().clone());
    for tuple in increasing_tuples(n, k + 1) {
        let mut acc: Option<C> = None;
        for (r, &j) in tuple.iter().enumerate() {
            let mut sub = tuple.clone();
            sub.remove(r);
            let Some(beta) = form.coeff(&sub) else {
                continue;
            };
            let mut term = beta.cohom(j)?;
            if r % 2 == 1 {
                term = term.neg();
            }
            acc = Some(match acc {
                None => term,
                Some(a) => a.add(&term)?,
            });
        }
        if let Some(v) = acc {
            out.set_coeff(tuple, v);
        }
    }
    Ok(out)
}

/// Closedness residual of a form: the norm of its coboundary.
pub fn check_closed<C: FormCoeff>(
    model: &ModelSystem,
    form: &PolarizedForm<C>,
) -> Result<crate::verify::ResidualReport> {
    let d = apply_dnabla(model, form)?;
    Ok(crate::verify::ResidualReport::symbolic(d.max_norm(), ZERO_TOL))
}

/// Solves `(X_j - i h_j) g = f` termwise in pair `j`, all other pairs treated
/// as parameters.
pub fn solve_pair<C: FormCoeff>(model: &ModelSystem, j: usize, f: &C) -> Result<C> {
    require_hyperbolic(model)?;
    if j >= model.arity() {
        return Err(Error::IndexOutOfRange {
            index: j,
            arity: model.arity(),
        });
    }
    f.solve_pair_coeff(j)
}

/// [`solve_pair`] under kernel constraints: requires `(X_l - i h_l) f = 0` for
/// every `l` in `constraints` and returns a solution satisfying the same
/// constraints. The solve is parameter-linear and commutes with the constraint
/// operators, so the preservation comes for free once the input qualifies.
pub fn solve_preserving<C: FormCoeff>(
    model: &ModelSystem,
    j: usize,
    f: &C,
    constraints: &[usize],
) -> Result<C> {
    require_hyperbolic(model)?;
    for &l in constraints {
        let r = f.cohom(l)?.residual_norm();
        if r > ZERO_TOL {
            return Err(Error::PreconditionViolated {
                pair: l,
                residual: r,
            });
        }
    }
    let g = f.solve_pair_coeff(j)?;
    for &l in constraints {
        let r = g.cohom(l)?.residual_norm();
        assert!(
            r <= ZERO_TOL * 1e3,
            "constraint {l} not preserved by the pair-{j} solve: residual {r}"
        );
    }
    Ok(g)
}

/// Constructive `H^1` vanishing for Williamson type `(0, n, 0)`: solves
/// `(X_j - i h_j) g = alpha(X_j)` for all `j` by the sequential scheme
/// (solve pair 1, correct the pair-2 mismatch by a constrained solve, and so
/// on through pair `n`).
pub fn solve_h1<C: FormCoeff>(model: &ModelSystem, alpha: &PolarizedForm<C>) -> Result<C> {
    require_hyperbolic(model)?;
    assert_eq!(alpha.degree(), 1, "solve_h1 expects a 1-form");
    assert_eq!(alpha.arity(), model.arity(), "form/model arity mismatch");
    let n = model.arity();
    if n >= 2 {
        let closed = check_closed(model, alpha)?;
        if !closed.within_tolerance() {
            return Err(Error::NotClosed(closed.symbolic_max.unwrap_or(f64::NAN)));
        }
    }
    let mut g = match alpha.coeff(&[0]) {
        Some(f) => f.solve_pair_coeff(0)?,
        None => C::zero(alpha.ctx()),
    };
    for j in 1..n {
        let mismatch = g.cohom(j)?.sub(&alpha.coeff_or_zero(&[j]))?;
        // closedness transport: the mismatch solves the homogeneous equation
        // in every previously processed pair
        let processed: Vec<usize> = (0..j).collect();
        for &l in &processed {
            let r = mismatch.cohom(l)?.residual_norm();
            if r > ZERO_TOL {
                return Err(Error::NotClosed(r));
            }
        }
        if mismatch.is_zero_within(ZERO_TOL) {
            continue;
        }
        let correction = solve_preserving(model, j, &mismatch, &processed)?;
        g = g.sub(&correction)?;
    }
    Ok(g)
}

/// Constructive top-degree vanishing: returns `beta` with `i_{X_1} beta = 0`
/// and `d^nabla beta = alpha`; the only nontrivial coefficient equation is a
/// pair-1 solve of the single top coefficient.
pub fn solve_top<C: FormCoeff>(
    model: &ModelSystem,
    alpha: &PolarizedForm<C>,
) -> Result<PolarizedForm<C>> {
    require_hyperbolic(model)?;
    let n = model.arity();
    assert_eq!(alpha.degree(), n, "solve_top expects a top form");
    let mut beta = PolarizedForm::new(n, n - 1, alpha.ctx().clone());
    let full: Vec<usize> = (0..n).collect();
    if let Some(f) = alpha.coeff(&full) {
        let g = f.solve_pair_coeff(0)?;
        beta.set_coeff((1..n).collect(), g);
    }
    Ok(beta)
}

/// Constructive `H^2` vanishing in dimension 6 (`n = 3`): with
/// `beta(X_1) = 0`, solves the `(1,2)` coefficient for `beta(X_2)`, then the
/// reduced pair of equations for `beta(X_3)` with a constrained correction.
pub fn solve_h2_dim6<C: FormCoeff>(
    model: &ModelSystem,
    alpha: &PolarizedForm<C>,
) -> Result<PolarizedForm<C>> {
    require_hyperbolic(model)?;
    if model.arity() != 3 {
        return Err(Error::ModelError(
            "solve_h2_dim6 requires exactly three hyperbolic components".into(),
        ));
    }
    assert_eq!(alpha.degree(), 2, "solve_h2_dim6 expects a 2-form");
    let closed = check_closed(model, alpha)?;
    if !closed.within_tolerance() {
        return Err(Error::NotClosed(closed.symbolic_max.unwrap_or(f64::NAN)));
    }
    let mut beta = PolarizedForm::new(3, 1, alpha.ctx().clone());
    // beta(X_2) from the (1,2) equation
    let b2 = alpha.coeff_or_zero(&[0, 1]).solve_pair_coeff(0)?;
    // reduced data for g = beta(X_3):
    //   alpha(X_1, X_3) = (X_1 - i h_1) g
    //   alpha(X_2, X_3) + (X_3 - i h_3) beta(X_2) = (X_2 - i h_2) g
    let f13 = alpha.coeff_or_zero(&[0, 2]);
    let f23 = alpha.coeff_or_zero(&[1, 2]).add(&b2.cohom(2)?)?;
    let g13 = f13.solve_pair_coeff(0)?;
    let mismatch = g13.cohom(1)?.sub(&f23)?;
    let transport = mismatch.cohom(0)?.residual_norm();
    if transport > ZERO_TOL {
        return Err(Error::NotClosed(transport));
    }
    let g3 = if mismatch.is_zero_within(ZERO_TOL) {
        g13
    } else {
        let correction = solve_preserving(model, 1, &mismatch, &[0])?;
        g13.sub(&correction)?
    };
    beta.set_coeff(vec![1], b2);
    beta.set_coeff(vec![2], g3);
    Ok(beta)
}
