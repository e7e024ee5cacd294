//! Property-based tests for the series algebra and the 2D solvers.

use proptest::prelude::*;

use kostant_lab::hyperbolic2d::{
    solve_full_2d, solve_jets_closed_form, solve_jets_recursive, symbolic_residual_2d,
    SmoothFunction2D,
};
use kostant_lab::normal_forms::{build_model, Point, WilliamsonSpec};
use kostant_lab::series::{MultiIndex, Scalar, TruncatedSeries};

const ORDER: u32 = 10;

fn arb_scalar() -> impl Strategy<Value = Scalar> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| Scalar::new(re, im))
}

/// 2D series of the fixed order with a handful of random monomials.
fn arb_series() -> impl Strategy<Value = TruncatedSeries> {
    prop::collection::vec(((0u32..=4, 0u32..=4), arb_scalar()), 0..8).prop_map(|terms| {
        let mut s = TruncatedSeries::zero(1, ORDER);
        for ((k, l), c) in terms {
            if k + l <= ORDER {
                s.add_coeff(MultiIndex::new(vec![k, l]), c);
            }
        }
        s
    })
}

/// Series with no constant term, the solvable right-hand sides.
fn arb_rhs() -> impl Strategy<Value = TruncatedSeries> {
    arb_series().prop_map(|mut s| {
        s.set_coeff(MultiIndex::zero(1), Scalar::ZERO);
        s
    })
}

proptest! {
    #[test]
    fn addition_commutes(a in arb_series(), b in arb_series()) {
        prop_assert_eq!(a.add(&b).unwrap(), b.add(&a).unwrap());
    }

    #[test]
    fn multiplication_distributes(a in arb_series(), b in arb_series(), c in arb_series()) {
        let lhs = a.mul(&b.add(&c).unwrap()).unwrap();
        let rhs = a.mul(&b).unwrap().add(&a.mul(&c).unwrap()).unwrap();
        let diff = lhs.sub(&rhs).unwrap();
        prop_assert!(diff.max_abs_coeff() <= 1e-12 * (1.0 + a.max_abs_coeff()) * (1.0 + b.max_abs_coeff() + c.max_abs_coeff()));
    }

    #[test]
    fn jet_solutions_satisfy_the_equation(f in arb_rhs()) {
        let g = solve_jets_recursive(&f).unwrap();
        let residual = g.cohom(0).unwrap().sub(&f.truncate_to(ORDER - 2)).unwrap();
        prop_assert!(residual.max_abs_coeff() <= 1e-12 * (1.0 + f.max_abs_coeff()));
    }

    #[test]
    fn recursion_agrees_with_the_closed_form(f in arb_rhs()) {
        let a = solve_jets_recursive(&f).unwrap();
        let b = solve_jets_closed_form(&f).unwrap();
        let diff = a.sub(&b).unwrap();
        prop_assert!(diff.max_abs_coeff() <= 1e-12 * (1.0 + f.max_abs_coeff()));
    }

    #[test]
    fn exact_solutions_certify_symbolically(f in arb_rhs()) {
        let rhs = SmoothFunction2D::from_poly(f.clone());
        let g = solve_full_2d(&rhs).unwrap();
        let residual = symbolic_residual_2d(&g, &rhs);
        prop_assert!(residual <= 1e-12 * (1.0 + f.max_abs_coeff()));
    }

    #[test]
    fn hyperbolic_flow_satisfies_the_group_law(
        x in -2.0f64..2.0, y in -2.0f64..2.0,
        s in -1.0f64..1.0, t in -1.0f64..1.0,
    ) {
        let m = build_model(WilliamsonSpec::hyperbolic(1)).unwrap();
        let p = Point::new(vec![x, y]);
        let a = m.flow(0, s + t, &p).unwrap();
        let b = m.flow(0, t, &m.flow(0, s, &p).unwrap()).unwrap();
        for i in 0..2 {
            prop_assert!((a.coords[i] - b.coords[i]).abs() <= 1e-12 * (1.0 + a.coords[i].abs()));
        }
    }
}
