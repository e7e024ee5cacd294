//! Grid-based numerical verification: directional-derivative residuals along
//! the model flows, adaptive quadrature with error control, and coefficient
//! comparison utilities. Everything reports through [`ResidualReport`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal_forms::{ModelSystem, Point};
use crate::series::TruncatedSeries;

/// Residual diagnostics for a solve or a verification sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Max absolute coefficient of a symbolic residual, when one was computed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub symbolic_max: Option<f64>,
    /// Whether the symbolic residual vanished identically.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_zero: Option<bool>,
    /// Max absolute pointwise residual over the sample grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_max: Option<f64>,
    /// Mean absolute pointwise residual over the sample grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_mean: Option<f64>,
    /// Description of the sampling grid, when one was used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    pub tolerance_used: f64,
}

impl ResidualReport {
    pub fn symbolic(max: f64, tol: f64) -> Self {
        ResidualReport {
            symbolic_max: Some(max),
            exact_zero: Some(max <= tol),
            grid_max: None,
            grid_mean: None,
            grid: None,
            tolerance_used: tol,
        }
    }

    pub fn within_tolerance(&self) -> bool {
        let sym_ok = self.symbolic_max.is_none_or(|m| m <= self.tolerance_used);
        let grid_ok = self.grid_max.is_none_or(|m| m <= self.tolerance_used);
        sym_ok && grid_ok
    }
}

/// Rectangular sampling grid with an optional exclusion band `|x_j y_j| < delta`
/// around the axes of the active pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Per-coordinate closed intervals, one per ambient coordinate.
    #[serde(rename = "box")]
    pub intervals: Vec<[f64; 2]>,
    pub points: usize,
    #[serde(default)]
    pub exclude_abs_h_below: f64,
}

impl GridSpec {
    /// Default sweep: `[-1, 1]^{2n}`, 41 points per axis, `delta = 0.05`.
    pub fn default_for(arity: usize) -> Self {
        GridSpec {
            intervals: vec![[-1.0, 1.0]; 2 * arity],
            points: 41,
            exclude_abs_h_below: 0.05,
        }
    }

    pub fn arity(&self) -> usize {
        self.intervals.len() / 2
    }

    /// Cartesian grid points with the exclusion predicate applied on pair
    /// `active_pair`.
    pub fn sample_points(&self, active_pair: usize) -> Vec<Point> {
        assert!(self.points >= 2, "points_per_axis must be at least 2");
        let dims = self.intervals.len();
        let axes: Vec<Vec<f64>> = self
            .intervals
            .iter()
            .map(|[lo, hi]| {
                assert!(lo <= hi, "empty interval");
                (0..self.points)
                    .map(|i| lo + (hi - lo) * i as f64 / (self.points - 1) as f64)
                    .collect()
            })
            .collect();
        let mut out = Vec::new();
        let mut idx = vec![0usize; dims];
        'outer: loop {
            let coords: Vec<f64> = (0..dims).map(|d| axes[d][idx[d]]).collect();
            let h = coords[2 * active_pair] * coords[2 * active_pair + 1];
            if h.abs() >= self.exclude_abs_h_below {
                out.push(Point::new(coords));
            }
            for d in (0..dims).rev() {
                idx[d] += 1;
                if idx[d] < self.points {
                    continue 'outer;
                }
                idx[d] = 0;
                if d == 0 {
                    break 'outer;
                }
            }
        }
        out
    }
}

/// Central-difference stencil along the flow.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivativeProbe {
    pub step: f64,
    pub order: u8,
}

impl Default for DerivativeProbe {
    fn default() -> Self {
        DerivativeProbe {
            step: 1e-4,
            order: 4,
        }
    }
}

impl DerivativeProbe {
    /// `d/ds u(s)|_{s=0}` from samples of `u` along the flow parameter.
    fn differentiate(&self, u: impl Fn(f64) -> Complex64) -> Complex64 {
        let s = self.step;
        assert!(s > 0.0, "probe step must be positive");
        match self.order {
            2 => (u(s) - u(-s)) / (2.0 * s),
            4 => (-u(2.0 * s) + 8.0 * u(s) - 8.0 * u(-s) + u(-2.0 * s)) / (12.0 * s),
            o => panic!("unsupported stencil order {o}"),
        }
    }
}

/// Residual of `X_j(G) - i h_j G - F` on a grid, with `X_j(G)` evaluated as the
/// derivative of `G` along the exact flow of `X_j`. Differentiating along the
/// flow matches the defining computation and never touches `ln gamma` directly.
pub fn flow_residual(
    model: &ModelSystem,
    j: usize,
    solution: &dyn Fn(&Point) -> Complex64,
    rhs: &dyn Fn(&Point) -> Complex64,
    grid: &GridSpec,
    probe: &DerivativeProbe,
) -> Result<ResidualReport> {
    let points = grid.sample_points(j);
    if points.is_empty() {
        return Err(Error::EvaluationFailure("empty grid".into()));
    }
    let mut max = 0.0f64;
    let mut sum = 0.0f64;
    for p in &points {
        let along = |s: f64| {
            let q = model.flow(j, s, p).expect("component in range");
            solution(&q)
        };
        let deriv = probe.differentiate(along);
        let h = model.hamiltonian(j, p)?;
        let r = deriv - Complex64::I * h * solution(p) - rhs(p);
        let r = r.norm();
        if !r.is_finite() {
            return Err(Error::EvaluationFailure(format!(
                "non-finite residual at {:?}",
                p.coords
            )));
        }
        max = max.max(r);
        sum += r;
    }
    Ok(ResidualReport {
        symbolic_max: None,
        exact_zero: None,
        grid_max: Some(max),
        grid_mean: Some(sum / points.len() as f64),
        grid: Some(grid.clone()),
        tolerance_used: 0.0,
    })
}

/// Max relative coefficient discrepancy over the union of supports. The first
/// argument is the reference: a nonzero reference coefficient normalises by
/// its own magnitude. Zero against zero counts as equal.
pub fn compare_series(
    a: &TruncatedSeries,
    b: &TruncatedSeries,
    rel_tol: f64,
) -> Result<ResidualReport> {
    if a.arity() != b.arity() {
        return Err(Error::ArityMismatch(a.arity(), b.arity()));
    }
    if a.order() != b.order() {
        return Err(Error::OrderMismatch(a.order(), b.order()));
    }
    let mut max = 0.0f64;
    let mut seen = std::collections::BTreeSet::new();
    for idx in a.support().chain(b.support()) {
        if !seen.insert(idx.clone()) {
            continue;
        }
        let (ca, cb) = (a.coeff(idx), b.coeff(idx));
        let denom = if ca.norm() > 0.0 { ca.norm() } else { cb.norm() };
        if denom == 0.0 {
            continue;
        }
        max = max.max((ca - cb).norm() / denom);
    }
    Ok(ResidualReport::symbolic(max, rel_tol))
}

/// Adaptive Simpson quadrature for a complex integrand over `[a, b]` with an
/// absolute error target.
pub fn adaptive_quadrature(
    f: &dyn Fn(f64) -> Complex64,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<Complex64> {
    assert!(tol > 0.0, "tolerance must be positive");
    if a == b {
        return Ok(Complex64::ZERO);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    fn simpson(f: &dyn Fn(f64) -> Complex64, a: f64, b: f64) -> Complex64 {
        let m = 0.5 * (a + b);
        (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
    }
    fn recurse(
        f: &dyn Fn(f64) -> Complex64,
        a: f64,
        b: f64,
        whole: Complex64,
        tol: f64,
        depth: u32,
    ) -> Result<Complex64> {
        let m = 0.5 * (a + b);
        let left = simpson(f, a, m);
        let right = simpson(f, m, b);
        let estimate = (left + right - whole).norm() / 15.0;
        if estimate <= tol || b - a < 1e-14 {
            if estimate > tol {
                return Err(Error::QuadratureFailure { tol, estimate });
            }
            return Ok(left + right + (left + right - whole) / 15.0);
        }
        if depth == 0 {
            return Err(Error::QuadratureFailure { tol, estimate });
        }
        let l = recurse(f, a, m, left, 0.5 * tol, depth - 1)?;
        let r = recurse(f, m, b, right, 0.5 * tol, depth - 1)?;
        Ok(l + r)
    }
    let whole = simpson(f, lo, hi);
    Ok(sign * recurse(f, lo, hi, whole, tol, 48)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal_forms::{build_model, WilliamsonSpec};
    use crate::series::{MultiIndex, Scalar};

    #[test]
    fn compare_series_examples() {
        let x = TruncatedSeries::monomial(1, 4, MultiIndex::new(vec![1, 0]), Scalar::ONE);
        let r = compare_series(&x, &x, 1e-12).unwrap();
        assert_eq!(r.symbolic_max, Some(0.0));
        let x2 = x.scale(Scalar::new(2.0, 0.0));
        let r = compare_series(&x, &x2, 1e-12).unwrap();
        assert_eq!(r.symbolic_max, Some(1.0));
    }

    #[test]
    fn grid_exclusion_holds() {
        let grid = GridSpec::default_for(1);
        for p in grid.sample_points(0) {
            assert!((p.coords[0] * p.coords[1]).abs() >= grid.exclude_abs_h_below);
        }
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        // int_0^1 e^{i t} dt = (e^i - 1) / i
        let f = |t: f64| Complex64::new(0.0, t).exp();
        let got = adaptive_quadrature(&f, 0.0, 1.0, 1e-12).unwrap();
        let want = (Complex64::I.exp() - Complex64::ONE) / Complex64::I;
        assert!((got - want).norm() < 1e-11);
        // orientation flip
        let rev = adaptive_quadrature(&f, 1.0, 0.0, 1e-12).unwrap();
        assert!((rev + want).norm() < 1e-11);
    }

    #[test]
    fn flow_residual_zero_for_trivial_data() {
        let model = build_model(WilliamsonSpec::hyperbolic(1)).unwrap();
        let zero = |_p: &Point| Complex64::ZERO;
        let grid = GridSpec {
            points: 11,
            ..GridSpec::default_for(1)
        };
        let r = flow_residual(&model, 0, &zero, &zero, &grid, &DerivativeProbe::default()).unwrap();
        assert_eq!(r.grid_max, Some(0.0));
    }

    #[test]
    fn stencil_order_convergence() {
        // exact solution g = y / (1 - i h) for f = y; halving the step should
        // shrink the pure stencil error by about 2^order
        let model = build_model(WilliamsonSpec::hyperbolic(1)).unwrap();
        let g = |p: &Point| {
            let (x, y) = p.pair(0);
            let h = x * y;
            Complex64::new(y, 0.0) / (Complex64::ONE - Complex64::I * h)
        };
        let f = |p: &Point| Complex64::new(p.coords[1], 0.0);
        let grid = GridSpec {
            points: 9,
            ..GridSpec::default_for(1)
        };
        for order in [2u8, 4] {
            let coarse = flow_residual(
                &model,
                0,
                &g,
                &f,
                &grid,
                &DerivativeProbe { step: 2e-2, order },
            )
            .unwrap()
            .grid_max
            .unwrap();
            let fine = flow_residual(
                &model,
                0,
                &g,
                &f,
                &grid,
                &DerivativeProbe { step: 1e-2, order },
            )
            .unwrap()
            .grid_max
            .unwrap();
            let ratio = coarse / fine;
            let theory = 2f64.powi(order as i32);
            assert!(
                ratio / theory > 0.7 && ratio / theory < 1.3,
                "order {order}: ratio {ratio} vs {theory}"
            );
        }
    }
}
