//! Problem/report JSON formats and the dispatch that drives solves and
//! verifications end to end.
//!
//! A problem document selects a `kind`, a Williamson model, a kind-specific
//! `data` payload, and `options`; [`run`] dispatches to the solver modules,
//! always attaches residual verification, and produces a versioned [`Report`]
//! that is byte-deterministic apart from the timings block.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hyperbolic2d::{
    flat_section_build, solve_full_2d, solve_jets_closed_form, solve_jets_recursive,
    symbolic_residual_2d, FlatFactor, FlatSum, Polynomial1, QuadrantKernel, RationalTerm,
    SmoothFunction2D,
};
use crate::kostant::{
    apply_dnabla, check_closed, solve_h1, solve_h2_dim6, solve_top, FormCoeff, PolarizedForm,
    SeparableFunction,
};
use crate::normal_forms::{build_model, ModelSystem, Point, WilliamsonSpec};
use crate::series::{MultiIndex, Scalar, TruncatedSeries};
use crate::verify::{compare_series, flow_residual, DerivativeProbe, GridSpec, ResidualReport};

/// Report schema identifier.
pub const SCHEMA: &str = "kostant-lab/1";

fn schema_err(path: &str, message: impl Into<String>) -> Error {
    Error::SchemaError {
        path: path.into(),
        message: message.into(),
    }
}

// ---------------------------------------------------------------------------
// literals
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexLit {
    pub re: f64,
    pub im: f64,
}

impl ComplexLit {
    fn to_scalar(self) -> Scalar {
        Scalar::new(self.re, self.im)
    }

    fn of(c: Scalar) -> Self {
        ComplexLit { re: c.re, im: c.im }
    }
}

/// One series coefficient: exponents `[k_1, l_1, ..., k_n, l_n]` and a value.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffRec {
    pub exponents: Vec<u32>,
    pub re: f64,
    pub im: f64,
}

/// Truncated-series literal.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesLit {
    pub arity: usize,
    pub order: u32,
    pub coeffs: Vec<CoeffRec>,
}

impl SeriesLit {
    pub fn to_series(&self) -> Result<TruncatedSeries> {
        if self.arity == 0 {
            return Err(schema_err("arity", "arity must be positive"));
        }
        let mut s = TruncatedSeries::zero(self.arity, self.order);
        for (i, rec) in self.coeffs.iter().enumerate() {
            let path = format!("coeffs[{i}]");
            if rec.exponents.len() != 2 * self.arity {
                return Err(schema_err(
                    &path,
                    format!("expected {} exponents", 2 * self.arity),
                ));
            }
            let idx = MultiIndex::new(rec.exponents.clone());
            if idx.total_degree() > self.order {
                return Err(schema_err(&path, "exponent degree exceeds order"));
            }
            if !rec.re.is_finite() || !rec.im.is_finite() {
                return Err(schema_err(&path, "coefficient must be finite"));
            }
            s.add_coeff(idx, Scalar::new(rec.re, rec.im));
        }
        Ok(s)
    }

    pub fn of_series(s: &TruncatedSeries) -> Self {
        SeriesLit {
            arity: s.arity(),
            order: s.order(),
            coeffs: s
                .iter()
                .filter(|(_, c)| **c != Scalar::ZERO)
                .map(|(i, c)| CoeffRec {
                    exponents: i.exponents().to_vec(),
                    re: c.re,
                    im: c.im,
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RationalLit {
    pub re: f64,
    pub im: f64,
    pub xexp: u32,
    pub yexp: u32,
    pub q: Vec<ComplexLit>,
    pub denom: Vec<i64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussFlatLit {
    pub c: f64,
    pub pre: Vec<ComplexLit>,
}

fn flat_sum_from(lits: &[GaussFlatLit], path: &str) -> Result<FlatSum> {
    let mut sum = FlatSum::zero();
    for (i, lit) in lits.iter().enumerate() {
        if lit.c <= 0.0 || !lit.c.is_finite() {
            return Err(schema_err(
                &format!("{path}[{i}].c"),
                "flat width must be positive",
            ));
        }
        sum.factors.push(FlatFactor::new(
            lit.c,
            Polynomial1::new(lit.pre.iter().map(|c| c.to_scalar()).collect()),
        ));
    }
    Ok(sum.normalized())
}

fn flat_sum_lit(sum: &FlatSum) -> Vec<GaussFlatLit> {
    sum.factors
        .iter()
        .map(|f| GaussFlatLit {
            c: f.c,
            pre: f.pre.coeffs.iter().map(|c| ComplexLit::of(*c)).collect(),
        })
        .collect()
}

/// Quadrant-kernel literal: one flat sum of the invariant `h` per quadrant, in
/// the order `(+,+), (+,-), (-,+), (-,-)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelLit {
    pub quadrants: Vec<Vec<GaussFlatLit>>,
}

impl KernelLit {
    fn to_kernel(&self, path: &str) -> Result<QuadrantKernel> {
        if self.quadrants.len() != 4 {
            return Err(schema_err(
                &format!("{path}.quadrants"),
                "expected exactly four quadrant entries",
            ));
        }
        let mut k = QuadrantKernel::default();
        for (i, q) in self.quadrants.iter().enumerate() {
            k.a[i] = flat_sum_from(q, &format!("{path}.quadrants[{i}]"))?;
        }
        Ok(k)
    }

    fn of_kernel(k: &QuadrantKernel) -> Self {
        KernelLit {
            quadrants: k.a.iter().map(flat_sum_lit).collect(),
        }
    }
}

/// Literal for a representable 2D function: any combination of a polynomial
/// (pair exponents), exact rational terms, flat data, the homotopy image of
/// flat data, and a quadrant kernel.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fn2dLit {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub poly: Vec<CoeffRec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub poly_order: Option<u32>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub rational_term: Vec<RationalLit>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub gauss_flat: Vec<GaussFlatLit>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub homotopy_flat: Vec<GaussFlatLit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrant_kernel: Option<KernelLit>,
}

impl Fn2dLit {
    pub fn to_fn(&self, default_order: u32, path: &str) -> Result<SmoothFunction2D> {
        let degree = self
            .poly
            .iter()
            .map(|r| r.exponents.iter().sum::<u32>())
            .max()
            .unwrap_or(0);
        let order = self.poly_order.unwrap_or(default_order).max(degree);
        let poly = SeriesLit {
            arity: 1,
            order,
            coeffs: self.poly.clone(),
        }
        .to_series()
        .map_err(|e| match e {
            Error::SchemaError { path: p, message } => schema_err(&format!("{path}.poly.{p}"), message),
            other => other,
        })?;
        let mut f = SmoothFunction2D::from_poly(poly);
        for (i, t) in self.rational_term.iter().enumerate() {
            let tpath = format!("{path}.rational_term[{i}]");
            if t.denom.contains(&0) {
                return Err(schema_err(&tpath, "denominator offsets must be nonzero"));
            }
            f.rational.push(RationalTerm::new(
                Scalar::new(t.re, t.im),
                t.xexp,
                t.yexp,
                Polynomial1::new(t.q.iter().map(|c| c.to_scalar()).collect()),
                t.denom.clone(),
            ));
        }
        f.flat = flat_sum_from(&self.gauss_flat, &format!("{path}.gauss_flat"))?;
        f.homotopy = flat_sum_from(&self.homotopy_flat, &format!("{path}.homotopy_flat"))?;
        if let Some(k) = &self.quadrant_kernel {
            f.kernel = Some(k.to_kernel(&format!("{path}.quadrant_kernel"))?);
        }
        Ok(f)
    }

    pub fn of_fn(f: &SmoothFunction2D) -> Self {
        Fn2dLit {
            poly: SeriesLit::of_series(&f.poly).coeffs,
            poly_order: if f.poly.is_zero() {
                None
            } else {
                Some(f.poly.order())
            },
            rational_term: f
                .rational
                .iter()
                .filter(|t| !t.is_zero())
                .map(|t| RationalLit {
                    re: t.coeff.re,
                    im: t.coeff.im,
                    xexp: t.xexp,
                    yexp: t.yexp,
                    q: t.q.coeffs.iter().map(|c| ComplexLit::of(*c)).collect(),
                    denom: t.denom.clone(),
                })
                .collect(),
            gauss_flat: flat_sum_lit(&f.flat),
            homotopy_flat: flat_sum_lit(&f.homotopy),
            quadrant_kernel: f
                .kernel
                .as_ref()
                .filter(|k| !k.is_zero())
                .map(KernelLit::of_kernel),
        }
    }
}

/// One separable term: one factor literal per symplectic pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparableTermLit {
    pub factors: Vec<Fn2dLit>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparableLit {
    pub terms: Vec<SeparableTermLit>,
}

impl SeparableLit {
    fn to_separable(&self, arity: usize, default_order: u32, path: &str) -> Result<SeparableFunction> {
        let mut f = SeparableFunction::new(arity);
        for (i, term) in self.terms.iter().enumerate() {
            let tpath = format!("{path}.terms[{i}]");
            if term.factors.len() != arity {
                return Err(schema_err(&tpath, format!("expected {arity} factors")));
            }
            let factors = term
                .factors
                .iter()
                .enumerate()
                .map(|(j, lit)| lit.to_fn(default_order, &format!("{tpath}.factors[{j}]")))
                .collect::<Result<Vec<_>>>()?;
            f.push_term(factors);
        }
        Ok(f)
    }

    fn of_separable(f: &SeparableFunction) -> Self {
        SeparableLit {
            terms: f
                .terms
                .iter()
                .map(|t| SeparableTermLit {
                    factors: t.factors.iter().map(Fn2dLit::of_fn).collect(),
                })
                .collect(),
        }
    }
}

/// Coefficient representation selector for forms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Formal,
    Exact,
}

/// Polarised-form literal. Tuples use 1-based pair indices on the wire.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormLit {
    pub degree: usize,
    pub arity: usize,
    #[serde(default)]
    pub mode: Mode,
    pub coeffs: Vec<FormCoeffLit>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormCoeffLit {
    pub tuple: Vec<usize>,
    #[serde(rename = "fn")]
    pub func: Value,
}

fn tuple_to_internal(tuple: &[usize], degree: usize, arity: usize, path: &str) -> Result<Vec<usize>> {
    if tuple.len() != degree {
        return Err(schema_err(path, format!("tuple length must be {degree}")));
    }
    let mut out = Vec::with_capacity(tuple.len());
    for &i in tuple {
        if i == 0 || i > arity {
            return Err(schema_err(
                path,
                format!("pair indices are 1-based in 1..={arity}"),
            ));
        }
        out.push(i - 1);
    }
    if !out.windows(2).all(|w| w[0] < w[1]) {
        return Err(schema_err(path, "tuple must be strictly increasing"));
    }
    Ok(out)
}

fn tuple_to_wire(tuple: &[usize]) -> Vec<usize> {
    tuple.iter().map(|i| i + 1).collect()
}

impl FormLit {
    fn validate_against(&self, arity: usize) -> Result<()> {
        if self.arity != arity {
            return Err(schema_err(
                "data.arity",
                format!("form arity {} does not match the model arity {arity}", self.arity),
            ));
        }
        if self.degree > self.arity {
            return Err(schema_err("data.degree", "degree exceeds arity"));
        }
        Ok(())
    }

    fn to_formal(&self, order: u32) -> Result<PolarizedForm<TruncatedSeries>> {
        let mut form = PolarizedForm::new(self.arity, self.degree, (self.arity, order));
        for (i, c) in self.coeffs.iter().enumerate() {
            let path = format!("data.coeffs[{i}]");
            let tuple = tuple_to_internal(&c.tuple, self.degree, self.arity, &format!("{path}.tuple"))?;
            let lit: SeriesLit = serde_json::from_value(c.func.clone())
                .map_err(|e| schema_err(&format!("{path}.fn"), e.to_string()))?;
            if lit.arity != self.arity {
                return Err(schema_err(
                    &format!("{path}.fn.arity"),
                    "series arity must match the form arity",
                ));
            }
            let s = lit.to_series().map_err(|e| match e {
                Error::SchemaError { path: p, message } => {
                    schema_err(&format!("{path}.fn.{p}"), message)
                }
                other => other,
            })?;
            if s.degree() > order {
                return Err(schema_err(
                    &format!("{path}.fn"),
                    "coefficient degree exceeds the requested order",
                ));
            }
            let s = if s.order() >= order {
                s.truncate_to(order)
            } else {
                s.with_order(order)
            };
            form.set_coeff(tuple, s);
        }
        Ok(form)
    }

    fn to_exact(&self, default_order: u32) -> Result<PolarizedForm<SeparableFunction>> {
        let mut form = PolarizedForm::new(self.arity, self.degree, self.arity);
        for (i, c) in self.coeffs.iter().enumerate() {
            let path = format!("data.coeffs[{i}]");
            let tuple = tuple_to_internal(&c.tuple, self.degree, self.arity, &format!("{path}.tuple"))?;
            let lit: SeparableLit = serde_json::from_value(c.func.clone())
                .map_err(|e| schema_err(&format!("{path}.fn"), e.to_string()))?;
            let f = lit.to_separable(self.arity, default_order, &format!("{path}.fn"))?;
            form.set_coeff(tuple, f);
        }
        Ok(form)
    }

    fn of_formal(form: &PolarizedForm<TruncatedSeries>) -> Self {
        FormLit {
            degree: form.degree(),
            arity: form.arity(),
            mode: Mode::Formal,
            coeffs: form
                .coeffs()
                .map(|(tuple, s)| FormCoeffLit {
                    tuple: tuple_to_wire(tuple),
                    func: serde_json::to_value(SeriesLit::of_series(s)).expect("serializable"),
                })
                .collect(),
        }
    }

    fn of_exact(form: &PolarizedForm<SeparableFunction>) -> Self {
        FormLit {
            degree: form.degree(),
            arity: form.arity(),
            mode: Mode::Exact,
            coeffs: form
                .coeffs()
                .map(|(tuple, f)| FormCoeffLit {
                    tuple: tuple_to_wire(tuple),
                    func: serde_json::to_value(SeparableLit::of_separable(f)).expect("serializable"),
                })
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// problems
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Solve2d,
    SolveH1,
    SolveTop,
    SolveH2Dim6,
    FlatSection,
    Verify,
    ExpandJets,
}

impl Kind {
    fn is_solver(self) -> bool {
        !matches!(self, Kind::Verify | Kind::ExpandJets)
    }

    /// Kinds operating on a single 2D model.
    fn needs_2d_model(self) -> bool {
        matches!(
            self,
            Kind::Solve2d | Kind::FlatSection | Kind::Verify | Kind::ExpandJets
        )
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Options {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    pub kind: Kind,
    pub model: WilliamsonSpec,
    pub data: Value,
    #[serde(default)]
    pub options: Options,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyData {
    solution: Fn2dLit,
    #[serde(default)]
    rhs: Option<Fn2dLit>,
}

/// Parses and fully validates a problem document.
pub fn parse_problem(text: &str) -> Result<Problem> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| Error::ParseError(e.to_string()))?;
    let problem: Problem = serde_json::from_value(value)
        .map_err(|e| schema_err("$", e.to_string()))?;
    let model = build_model(problem.model)?;
    if problem.kind.is_solver() && !problem.model.is_purely_hyperbolic() {
        return Err(Error::ModelError(
            "solver kinds require Williamson type (0, n, 0)".into(),
        ));
    }
    if problem.kind.needs_2d_model() && model.arity() != 1 {
        return Err(Error::ModelError(format!(
            "this kind operates on a single pair, got arity {}",
            model.arity()
        )));
    }
    // kind-specific payload validation
    validate_payload(&problem, &model)?;
    Ok(problem)
}

fn validate_payload(problem: &Problem, model: &ModelSystem) -> Result<()> {
    let default_order = problem.options.order.unwrap_or(12);
    match problem.kind {
        Kind::Solve2d | Kind::ExpandJets => {
            let lit: Fn2dLit = serde_json::from_value(problem.data.clone())
                .map_err(|e| schema_err("data", e.to_string()))?;
            lit.to_fn(default_order, "data")?;
            if problem.kind == Kind::ExpandJets
                && (!lit.rational_term.is_empty()
                    || !lit.gauss_flat.is_empty()
                    || !lit.homotopy_flat.is_empty()
                    || lit.quadrant_kernel.is_some())
            {
                return Err(schema_err("data", "expand_jets takes polynomial data only"));
            }
        }
        Kind::SolveH1 | Kind::SolveTop | Kind::SolveH2Dim6 => {
            let lit: FormLit = serde_json::from_value(problem.data.clone())
                .map_err(|e| schema_err("data", e.to_string()))?;
            lit.validate_against(model.arity())?;
            let want = match problem.kind {
                Kind::SolveH1 => 1,
                Kind::SolveTop => model.arity(),
                _ => 2,
            };
            if lit.degree != want {
                return Err(schema_err(
                    "data.degree",
                    format!("this kind expects a degree-{want} form"),
                ));
            }
            match lit.mode {
                Mode::Formal => {
                    lit.to_formal(default_order)?;
                }
                Mode::Exact => {
                    lit.to_exact(default_order)?;
                }
            }
        }
        Kind::FlatSection => {
            let lit: KernelLit = serde_json::from_value(problem.data.clone())
                .map_err(|e| schema_err("data", e.to_string()))?;
            lit.to_kernel("data")?;
        }
        Kind::Verify => {
            let lit: VerifyData = serde_json::from_value(problem.data.clone())
                .map_err(|e| schema_err("data", e.to_string()))?;
            lit.solution.to_fn(default_order, "data.solution")?;
            if let Some(rhs) = &lit.rhs {
                rhs.to_fn(default_order, "data.rhs")?;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Timings {
    pub solve_ms: f64,
    pub verify_ms: f64,
    pub total_ms: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub status: Status,
    pub kind: Kind,
    pub tool_version: String,
    pub input_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solution: Option<Value>,
    pub residuals: Vec<ResidualReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
    pub timings: Timings,
}

fn digest_of(problem: &Problem) -> String {
    // canonical form: serde_json maps are sorted, so semantically identical
    // documents hash identically
    let canon = serde_json::to_string(problem).expect("serializable");
    let mut hasher = Sha256::new();
    hasher.update(canon.as_bytes());
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

struct Outcome {
    solution: Option<Value>,
    residuals: Vec<ResidualReport>,
}

/// Runs a validated problem and assembles the report; module errors are
/// embedded with their stable codes rather than propagated.
pub fn run(problem: &Problem) -> Report {
    let t0 = Instant::now();
    let digest = digest_of(problem);
    let mut verify_ms = 0.0;
    let result = dispatch(problem, &mut verify_ms);
    let total = t0.elapsed().as_secs_f64() * 1e3;
    match result {
        Ok(outcome) => {
            let all_within = outcome.residuals.iter().all(ResidualReport::within_tolerance);
            let error = if all_within {
                None
            } else {
                Some(ErrorInfo {
                    code: "RESIDUAL_EXCEEDS_TOLERANCE".into(),
                    message: "a residual check exceeded its tolerance".into(),
                    residual: outcome
                        .residuals
                        .iter()
                        .filter_map(|r| r.grid_max.or(r.symbolic_max))
                        .fold(None, |acc: Option<f64>, v| {
                            Some(acc.map_or(v, |a| a.max(v)))
                        }),
                })
            };
            Report {
                schema: SCHEMA.into(),
                status: if all_within { Status::Ok } else { Status::Error },
                kind: problem.kind,
                tool_version: env!("CARGO_PKG_VERSION").into(),
                input_digest: digest,
                solution: outcome.solution,
                residuals: outcome.residuals,
                error,
                timings: Timings {
                    solve_ms: total - verify_ms,
                    verify_ms,
                    total_ms: total,
                },
            }
        }
        Err(e) => Report {
            schema: SCHEMA.into(),
            status: Status::Error,
            kind: problem.kind,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            input_digest: digest,
            solution: None,
            residuals: Vec::new(),
            error: Some(ErrorInfo {
                code: e.code().into(),
                message: e.to_string(),
                residual: match &e {
                    Error::NotClosed(r) => Some(*r),
                    Error::PreconditionViolated { residual, .. } => Some(*residual),
                    _ => None,
                },
            }),
            timings: Timings {
                solve_ms: total - verify_ms,
                verify_ms,
                total_ms: total,
            },
        },
    }
}

fn dispatch(problem: &Problem, verify_ms: &mut f64) -> Result<Outcome> {
    let model = build_model(problem.model)?;
    let order = problem.options.order.unwrap_or(12);
    let tol_sym = problem.options.tolerance.unwrap_or(1e-9);
    let grid = problem
        .options
        .grid
        .clone()
        .unwrap_or_else(|| GridSpec::default_for(model.arity()));
    match problem.kind {
        Kind::Solve2d => run_solve2d(problem, &model, order, tol_sym, &grid, verify_ms),
        Kind::ExpandJets => run_expand_jets(problem, order),
        Kind::FlatSection => run_flat_section(problem, &model, &grid, verify_ms),
        Kind::Verify => run_verify(problem, &model, order, &grid, verify_ms),
        Kind::SolveH1 | Kind::SolveTop | Kind::SolveH2Dim6 => {
            run_form_solver(problem, &model, order, tol_sym, verify_ms)
        }
    }
}

fn grid_tolerance(problem: &Problem) -> f64 {
    problem.options.tolerance.unwrap_or(1e-6)
}

fn run_solve2d(
    problem: &Problem,
    model: &ModelSystem,
    order: u32,
    tol_sym: f64,
    grid: &GridSpec,
    verify_ms: &mut f64,
) -> Result<Outcome> {
    let lit: Fn2dLit = serde_json::from_value(problem.data.clone())
        .map_err(|e| schema_err("data", e.to_string()))?;
    let f = lit.to_fn(order, "data")?;
    let mode = problem.options.mode.unwrap_or(Mode::Exact);
    let mut residuals = Vec::new();
    let (solution, g) = match mode {
        Mode::Formal => {
            if !f.rational.is_empty()
                || !f.flat.is_zero()
                || !f.homotopy.is_zero()
                || f.kernel.is_some()
            {
                return Err(schema_err(
                    "data",
                    "formal-mode solve2d takes polynomial data only",
                ));
            }
            let g = solve_jets_recursive(&f.poly)?;
            let r = FormCoeff::sub(&g.cohom(0)?, &f.poly)?.max_abs_coeff();
            residuals.push(ResidualReport::symbolic(r, tol_sym));
            let sol = SmoothFunction2D::from_poly(g.clone());
            (
                serde_json::to_value(SeriesLit::of_series(&g)).expect("serializable"),
                sol,
            )
        }
        Mode::Exact => {
            let g = solve_full_2d(&f)?;
            let r = symbolic_residual_2d(&g, &f);
            residuals.push(ResidualReport::symbolic(r, tol_sym));
            (
                serde_json::to_value(Fn2dLit::of_fn(&g)).expect("serializable"),
                g,
            )
        }
    };
    let tv = Instant::now();
    let rr = flow_residual(
        model,
        0,
        &|p: &Point| {
            let (x, y) = p.pair(0);
            g.eval(x, y)
        },
        &|p: &Point| {
            let (x, y) = p.pair(0);
            f.eval(x, y)
        },
        grid,
        &DerivativeProbe::default(),
    );
    *verify_ms += tv.elapsed().as_secs_f64() * 1e3;
    let mut rr = rr?;
    rr.tolerance_used = grid_tolerance(problem);
    residuals.push(rr);
    Ok(Outcome {
        solution: Some(solution),
        residuals,
    })
}

fn run_expand_jets(problem: &Problem, order: u32) -> Result<Outcome> {
    let lit: Fn2dLit = serde_json::from_value(problem.data.clone())
        .map_err(|e| schema_err("data", e.to_string()))?;
    let f = lit.to_fn(order, "data")?;
    if !f.rational.is_empty() || !f.flat.is_zero() || !f.homotopy.is_zero() || f.kernel.is_some() {
        return Err(schema_err("data", "expand_jets takes polynomial data only"));
    }
    let poly = if f.poly.order() >= order {
        f.poly.truncate_to(order)
    } else {
        f.poly.with_order(order)
    };
    let rec = solve_jets_recursive(&poly)?;
    let closed = solve_jets_closed_form(&poly)?;
    let cmp = compare_series(&rec, &closed, 1e-12)?;
    let solution = serde_json::json!({
        "recursion": SeriesLit::of_series(&rec),
        "closed_form": SeriesLit::of_series(&closed),
    });
    Ok(Outcome {
        solution: Some(solution),
        residuals: vec![cmp],
    })
}

fn run_flat_section(
    problem: &Problem,
    model: &ModelSystem,
    grid: &GridSpec,
    verify_ms: &mut f64,
) -> Result<Outcome> {
    let lit: KernelLit = serde_json::from_value(problem.data.clone())
        .map_err(|e| schema_err("data", e.to_string()))?;
    let kernel = lit.to_kernel("data")?;
    let f = flat_section_build(kernel);
    let tv = Instant::now();
    // kernel equation: (X - i h) f = 0
    let rr = flow_residual(
        model,
        0,
        &|p: &Point| {
            let (x, y) = p.pair(0);
            f.eval(x, y)
        },
        &|_: &Point| Scalar::ZERO,
        grid,
        &DerivativeProbe::default(),
    );
    *verify_ms += tv.elapsed().as_secs_f64() * 1e3;
    let mut rr = rr?;
    rr.tolerance_used = problem.options.tolerance.unwrap_or(1e-8);
    Ok(Outcome {
        solution: Some(serde_json::to_value(Fn2dLit::of_fn(&f)).expect("serializable")),
        residuals: vec![rr],
    })
}

fn run_verify(
    problem: &Problem,
    model: &ModelSystem,
    order: u32,
    grid: &GridSpec,
    verify_ms: &mut f64,
) -> Result<Outcome> {
    let lit: VerifyData = serde_json::from_value(problem.data.clone())
        .map_err(|e| schema_err("data", e.to_string()))?;
    let g = lit.solution.to_fn(order, "data.solution")?;
    let f = match &lit.rhs {
        Some(rhs) => rhs.to_fn(order, "data.rhs")?,
        None => SmoothFunction2D::zero(),
    };
    let tv = Instant::now();
    let rr = flow_residual(
        model,
        0,
        &|p: &Point| {
            let (x, y) = p.pair(0);
            g.eval(x, y)
        },
        &|p: &Point| {
            let (x, y) = p.pair(0);
            f.eval(x, y)
        },
        grid,
        &DerivativeProbe::default(),
    );
    *verify_ms += tv.elapsed().as_secs_f64() * 1e3;
    let mut rr = rr?;
    rr.tolerance_used = grid_tolerance(problem);
    Ok(Outcome {
        solution: None,
        residuals: vec![rr],
    })
}

fn run_form_solver(
    problem: &Problem,
    model: &ModelSystem,
    order: u32,
    tol_sym: f64,
    verify_ms: &mut f64,
) -> Result<Outcome> {
    let lit: FormLit = serde_json::from_value(problem.data.clone())
        .map_err(|e| schema_err("data", e.to_string()))?;
    lit.validate_against(model.arity())?;
    let mode = problem.options.mode.unwrap_or(lit.mode);
    match mode {
        Mode::Formal => {
            let alpha = lit.to_formal(order)?;
            run_form_solver_in::<TruncatedSeries>(problem.kind, model, &alpha, tol_sym, verify_ms)
        }
        Mode::Exact => {
            let alpha = lit.to_exact(order)?;
            run_form_solver_in::<SeparableFunction>(problem.kind, model, &alpha, tol_sym, verify_ms)
        }
    }
}

trait SolutionLiteral: FormCoeff {
    fn coeff_value(&self) -> Value;
    fn form_value(form: &PolarizedForm<Self>) -> Value;
}

impl SolutionLiteral for TruncatedSeries {
    fn coeff_value(&self) -> Value {
        serde_json::to_value(SeriesLit::of_series(self)).expect("serializable")
    }

    fn form_value(form: &PolarizedForm<Self>) -> Value {
        serde_json::to_value(FormLit::of_formal(form)).expect("serializable")
    }
}

impl SolutionLiteral for SeparableFunction {
    fn coeff_value(&self) -> Value {
        serde_json::to_value(SeparableLit::of_separable(self)).expect("serializable")
    }

    fn form_value(form: &PolarizedForm<Self>) -> Value {
        serde_json::to_value(FormLit::of_exact(form)).expect("serializable")
    }
}

fn form_residual<C: FormCoeff>(
    model: &ModelSystem,
    beta: &PolarizedForm<C>,
    alpha: &PolarizedForm<C>,
) -> Result<f64> {
    let d = apply_dnabla(model, beta)?;
    let mut worst = 0.0f64;
    for tuple in alpha
        .coeffs()
        .map(|(t, _)| t.clone())
        .chain(d.coeffs().map(|(t, _)| t.clone()))
        .collect::<std::collections::BTreeSet<_>>()
    {
        let r = d
            .coeff_or_zero(&tuple)
            .sub(&alpha.coeff_or_zero(&tuple))?
            .residual_norm();
        worst = worst.max(r);
    }
    Ok(worst)
}

fn run_form_solver_in<C: SolutionLiteral>(
    kind: Kind,
    model: &ModelSystem,
    alpha: &PolarizedForm<C>,
    tol_sym: f64,
    verify_ms: &mut f64,
) -> Result<Outcome> {
    let mut residuals = Vec::new();
    match kind {
        Kind::SolveH1 => {
            residuals.push(check_closed(model, alpha)?);
            let g = solve_h1(model, alpha)?;
            let tv = Instant::now();
            let mut worst = 0.0f64;
            for j in 0..model.arity() {
                let r = g.cohom(j)?.sub(&alpha.coeff_or_zero(&[j]))?.residual_norm();
                worst = worst.max(r);
            }
            *verify_ms += tv.elapsed().as_secs_f64() * 1e3;
            residuals.push(ResidualReport::symbolic(worst, tol_sym));
            Ok(Outcome {
                solution: Some(g.coeff_value()),
                residuals,
            })
        }
        Kind::SolveTop => {
            let beta = solve_top(model, alpha)?;
            let tv = Instant::now();
            let worst = form_residual(model, &beta, alpha)?;
            *verify_ms += tv.elapsed().as_secs_f64() * 1e3;
            residuals.push(ResidualReport::symbolic(worst, tol_sym));
            Ok(Outcome {
                solution: Some(C::form_value(&beta)),
                residuals,
            })
        }
        Kind::SolveH2Dim6 => {
            residuals.push(check_closed(model, alpha)?);
            let beta = solve_h2_dim6(model, alpha)?;
            let tv = Instant::now();
            let worst = form_residual(model, &beta, alpha)?;
            *verify_ms += tv.elapsed().as_secs_f64() * 1e3;
            residuals.push(ResidualReport::symbolic(worst, tol_sym));
            Ok(Outcome {
                solution: Some(C::form_value(&beta)),
                residuals,
            })
        }
        _ => unreachable!("non-form kind routed to the form solver"),
    }
}

/// Serializes a report as pretty JSON with a trailing newline.
pub fn render_report(report: &Report) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("serializable");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const SOLVE_Y: &str = r#"{
        "kind": "solve2d",
        "model": {"ke": 0, "kh": 1, "kf": 0},
        "data": {"poly": [{"exponents": [0, 1], "re": 1, "im": 0}]},
        "options": {"order": 12}
    }"#;

    #[test]
    fn parses_the_minimal_solve2d_document() {
        let p = parse_problem(SOLVE_Y).unwrap();
        assert_eq!(p.kind, Kind::Solve2d);
        assert_eq!(p.model, WilliamsonSpec::hyperbolic(1));
    }

    #[test]
    fn rejects_malformed_and_unknown_fields() {
        assert!(matches!(
            parse_problem("{\"kind\": \"solve2d\""),
            Err(Error::ParseError(_))
        ));
        let doc = SOLVE_Y.replace("\"options\"", "\"optionz\"");
        assert!(matches!(
            parse_problem(&doc),
            Err(Error::SchemaError { .. })
        ));
    }

    #[test]
    fn rejects_non_hyperbolic_model_for_solvers() {
        let doc = SOLVE_Y.replace("\"kh\": 1", "\"kh\": 0").replace("\"ke\": 0", "\"ke\": 1");
        assert!(matches!(parse_problem(&doc), Err(Error::ModelError(_))));
    }

    #[test]
    fn solve2d_of_y_reports_ok_with_rational_solution() {
        let p = parse_problem(SOLVE_Y).unwrap();
        let report = run(&p);
        assert_eq!(report.status, Status::Ok);
        let sol: Fn2dLit = serde_json::from_value(report.solution.unwrap()).unwrap();
        assert_eq!(sol.rational_term.len(), 1);
        assert_eq!(sol.rational_term[0].denom, vec![1]);
        assert!(report.residuals[0].exact_zero.unwrap());
    }

    #[test]
    fn h1_of_nonclosed_form_reports_not_closed() {
        let doc = r#"{
            "kind": "solve_h1",
            "model": {"ke": 0, "kh": 2, "kf": 0},
            "data": {
                "degree": 1, "arity": 2, "mode": "formal",
                "coeffs": [{"tuple": [1], "fn": {"arity": 2, "order": 8,
                    "coeffs": [{"exponents": [0, 1, 0, 0], "re": 1, "im": 0}]}}]
            },
            "options": {"order": 8}
        }"#;
        let p = parse_problem(doc).unwrap();
        let report = run(&p);
        assert_eq!(report.status, Status::Error);
        let err = report.error.unwrap();
        assert_eq!(err.code, "NOT_CLOSED");
        assert!(err.residual.unwrap() > 0.0);
    }

    #[test]
    fn reports_are_deterministic_modulo_timings() {
        let p = parse_problem(SOLVE_Y).unwrap();
        let mut a = run(&p);
        let mut b = run(&p);
        a.timings = Timings::default();
        b.timings = Timings::default();
        assert_eq!(render_report(&a), render_report(&b));
    }

    #[test]
    fn one_based_tuples_on_the_wire() {
        let doc = r#"{
            "kind": "solve_top",
            "model": {"ke": 0, "kh": 2, "kf": 0},
            "data": {
                "degree": 2, "arity": 2, "mode": "formal",
                "coeffs": [{"tuple": [1, 2], "fn": {"arity": 2, "order": 10,
                    "coeffs": [{"exponents": [0, 1, 0, 0], "re": 1, "im": 0}]}}]
            },
            "options": {"order": 10}
        }"#;
        let p = parse_problem(doc).unwrap();
        let report = run(&p);
        assert_eq!(report.status, Status::Ok);
        let form: FormLit = serde_json::from_value(report.solution.unwrap()).unwrap();
        assert_eq!(form.coeffs.len(), 1);
        assert_eq!(form.coeffs[0].tuple, vec![2]);
        // tuple [0, ...] is rejected
        let bad = doc.replace("\"tuple\": [1, 2]", "\"tuple\": [0, 1]");
        assert!(matches!(parse_problem(&bad), Err(Error::SchemaError { .. })));
    }

    #[test]
    fn verify_kind_checks_a_solution_against_its_rhs() {
        let doc = r#"{
            "kind": "verify",
            "model": {"ke": 0, "kh": 1, "kf": 0},
            "data": {
                "solution": {"rational_term": [
                    {"re": 1, "im": 0, "xexp": 0, "yexp": 1,
                     "q": [{"re": 1, "im": 0}], "denom": [1]}]},
                "rhs": {"poly": [{"exponents": [0, 1], "re": 1, "im": 0}]}
            }
        }"#;
        let p = parse_problem(doc).unwrap();
        let report = run(&p);
        assert_eq!(report.status, Status::Ok);
        assert!(report.residuals[0].grid_max.unwrap() < 1e-6);
    }
}
