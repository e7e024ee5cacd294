//! Williamson normal-form catalog: model Hamiltonians, their linear
//! Hamiltonian vector fields, closed-form flows, the hyperbolic time function
//! `ln gamma`, and the pairing of the prequantum connection potential
//! `Theta = 1/2 sum (x_j dy_j - y_j dx_j)` with the catalog fields.
//!
//! All flows are closed form: every catalog field is linear, so no numerical
//! integration is involved and downstream quadrature endpoints are exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Williamson type `(k_e, k_h, k_f)` of a nondegenerate singularity.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WilliamsonSpec {
    pub ke: usize,
    pub kh: usize,
    pub kf: usize,
}

impl WilliamsonSpec {
    pub fn hyperbolic(n: usize) -> Self {
        WilliamsonSpec { ke: 0, kh: n, kf: 0 }
    }

    /// Number of symplectic pairs `n = k_e + k_h + 2 k_f`.
    pub fn arity(&self) -> usize {
        self.ke + self.kh + 2 * self.kf
    }

    pub fn is_purely_hyperbolic(&self) -> bool {
        self.ke == 0 && self.kf == 0 && self.kh >= 1
    }
}

/// A point in the model coordinates `(x_1, y_1, ..., x_n, y_n)`.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Point {
    pub coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        assert!(coords.len().is_multiple_of(2), "coordinate count must be even");
        assert!(coords.iter().all(|v| v.is_finite()), "non-finite coordinate");
        Point { coords }
    }

    pub fn arity(&self) -> usize {
        self.coords.len() / 2
    }

    pub fn pair(&self, j: usize) -> (f64, f64) {
        (self.coords[2 * j], self.coords[2 * j + 1])
    }
}

/// Block descriptor; the stored index is the first component (0-based).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Block {
    Elliptic(usize),
    Hyperbolic(usize),
    /// Occupies components `i` and `i + 1`.
    FocusFocus(usize),
}

/// A Williamson-type normal form on `R^{2n}` with the standard symplectic
/// structure: component Hamiltonians, vector fields and flows.
#[derive(Clone, Debug)]
pub struct ModelSystem {
    spec: WilliamsonSpec,
    blocks: Vec<Block>,
    n: usize,
}

/// Builds the model for a Williamson type. Components are ordered elliptic,
/// then hyperbolic, then focus-focus pairs.
pub fn build_model(spec: WilliamsonSpec) -> Result<ModelSystem> {
    if spec.arity() == 0 {
        return Err(Error::InvalidSpec);
    }
    let mut blocks = Vec::new();
    let mut i = 0;
    for _ in 0..spec.ke {
        blocks.push(Block::Elliptic(i));
        i += 1;
    }
    for _ in 0..spec.kh {
        blocks.push(Block::Hyperbolic(i));
        i += 1;
    }
    for _ in 0..spec.kf {
        blocks.push(Block::FocusFocus(i));
        i += 2;
    }
    Ok(ModelSystem {
        spec,
        blocks,
        n: spec.arity(),
    })
}

impl ModelSystem {
    pub fn spec(&self) -> WilliamsonSpec {
        self.spec
    }

    pub fn arity(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Block containing component `j`.
    pub fn block_of(&self, j: usize) -> Result<Block> {
        if j >= self.n {
            return Err(Error::IndexOutOfRange {
                index: j,
                arity: self.n,
            });
        }
        for b in &self.blocks {
            match *b {
                Block::Elliptic(i) | Block::Hyperbolic(i) if i == j => return Ok(*b),
                Block::FocusFocus(i) if i == j || i + 1 == j => return Ok(*b),
                _ => {}
            }
        }
        unreachable!("blocks partition the component range")
    }

    pub fn is_hyperbolic(&self, j: usize) -> bool {
        matches!(self.block_of(j), Ok(Block::Hyperbolic(_)))
    }

    /// Component Hamiltonian `h_j` at a point.
    pub fn hamiltonian(&self, j: usize, p: &Point) -> Result<f64> {
        let block = self.block_of(j)?;
        Ok(match block {
            Block::Elliptic(_) => {
                let (x, y) = p.pair(j);
                x * x + y * y
            }
            Block::Hyperbolic(_) => {
                let (x, y) = p.pair(j);
                x * y
            }
            Block::FocusFocus(i) => {
                let (x1, y1) = p.pair(i);
                let (x2, y2) = p.pair(i + 1);
                if j == i {
                    x1 * y1 + x2 * y2
                } else {
                    x1 * y2 - x2 * y1
                }
            }
        })
    }

    /// Components of the vector field `X_j` at a point, as a `2n`-vector in
    /// the coordinate order `(x_1, y_1, ..., x_n, y_n)`.
    pub fn vector_field(&self, j: usize, p: &Point) -> Result<Vec<f64>> {
        let block = self.block_of(j)?;
        let mut v = vec![0.0; 2 * self.n];
        match block {
            Block::Elliptic(i) => {
                let (x, y) = p.pair(i);
                v[2 * i] = -2.0 * y;
                v[2 * i + 1] = 2.0 * x;
            }
            Block::Hyperbolic(i) => {
                let (x, y) = p.pair(i);
                v[2 * i] = -x;
                v[2 * i + 1] = y;
            }
            Block::FocusFocus(i) => {
                let (x1, y1) = p.pair(i);
                let (x2, y2) = p.pair(i + 1);
                if j == i {
                    v[2 * i] = -x1;
                    v[2 * i + 1] = y1;
                    v[2 * i + 2] = -x2;
                    v[2 * i + 3] = y2;
                } else {
                    // X_{i+1} = -x_i d/dx_{i+1} + y_{i+1} d/dy_i
                    //           + x_{i+1} d/dx_i - y_i d/dy_{i+1}
                    v[2 * i] = x2;
                    v[2 * i + 1] = y2;
                    v[2 * i + 2] = -x1;
                    v[2 * i + 3] = -y1;
                }
            }
        }
        Ok(v)
    }

    /// Time-`t` flow of `X_j` applied to `p` (closed form).
    pub fn flow(&self, j: usize, t: f64, p: &Point) -> Result<Point> {
        let block = self.block_of(j)?;
        let mut c = p.coords.clone();
        match block {
            Block::Elliptic(i) => {
                // rotation by angle 2t in the (x_i, y_i) plane
                let (x, y) = p.pair(i);
                let (s, co) = (2.0 * t).sin_cos();
                c[2 * i] = x * co - y * s;
                c[2 * i + 1] = x * s + y * co;
            }
            Block::Hyperbolic(i) => {
                let (x, y) = p.pair(i);
                c[2 * i] = (-t).exp() * x;
                c[2 * i + 1] = t.exp() * y;
            }
            Block::FocusFocus(i) => {
                let (x1, y1) = p.pair(i);
                let (x2, y2) = p.pair(i + 1);
                if j == i {
                    let (em, ep) = ((-t).exp(), t.exp());
                    c[2 * i] = em * x1;
                    c[2 * i + 1] = ep * y1;
                    c[2 * i + 2] = em * x2;
                    c[2 * i + 3] = ep * y2;
                } else {
                    // simultaneous rotation of (x_i, x_{i+1}) and (y_i, y_{i+1})
                    let (s, co) = t.sin_cos();
                    c[2 * i] = x1 * co + x2 * s;
                    c[2 * i + 2] = -x1 * s + x2 * co;
                    c[2 * i + 1] = y1 * co + y2 * s;
                    c[2 * i + 3] = -y1 * s + y2 * co;
                }
            }
        }
        Ok(Point::new(c))
    }

    /// Flow time from the diagonal to `p` along the hyperbolic field `X_j`:
    /// `ln gamma = 1/2 ln |y_j / x_j|`, defined off the axes; a single
    /// formula covers every quadrant.
    pub fn log_gamma(&self, j: usize, p: &Point) -> Result<f64> {
        match self.block_of(j)? {
            Block::Hyperbolic(i) => {
                let (x, y) = p.pair(i);
                if x * y == 0.0 {
                    return Err(Error::UndefinedOnAxes);
                }
                Ok(0.5 * (y / x).abs().ln())
            }
            _ => Err(Error::ModelError(format!(
                "log_gamma requires a hyperbolic component, got block {:?}",
                self.block_of(j)?
            ))),
        }
    }

    /// Pairings `Theta(X_j)(p)` of the connection potential with every catalog
    /// field, computed from the vector-field components. For every block type
    /// this evaluates to `h_j(p)`.
    pub fn connection_potential(&self, p: &Point) -> Vec<f64> {
        (0..self.n)
            .map(|j| {
                let v = self.vector_field(j, p).expect("component in range");
                // Theta(X) = 1/2 sum_j (x_j * Xy_j - y_j * Xx_j)
                (0..self.n)
                    .map(|i| {
                        let (x, y) = p.pair(i);
                        0.5 * (x * v[2 * i + 1] - y * v[2 * i])
                    })
                    .sum()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn build_model_catalog() {
        let m = build_model(WilliamsonSpec::hyperbolic(1)).unwrap();
        let p = Point::new(vec![2.0, 3.0]);
        assert_eq!(m.hamiltonian(0, &p).unwrap(), 6.0);
        assert_eq!(m.vector_field(0, &p).unwrap(), vec![-2.0, 3.0]);

        let m = build_model(WilliamsonSpec { ke: 1, kh: 0, kf: 0 }).unwrap();
        assert_eq!(m.hamiltonian(0, &p).unwrap(), 13.0);
        assert_eq!(m.vector_field(0, &p).unwrap(), vec![-6.0, 4.0]);

        let m = build_model(WilliamsonSpec { ke: 0, kh: 0, kf: 1 }).unwrap();
        assert_eq!(m.arity(), 2);
        let q = Point::new(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.hamiltonian(0, &q).unwrap(), 1.0 * 2.0 + 3.0 * 4.0);
        assert_eq!(m.hamiltonian(1, &q).unwrap(), 1.0 * 4.0 - 3.0 * 2.0);
    }

    #[test]
    fn invalid_spec_rejected() {
        assert!(matches!(
            build_model(WilliamsonSpec { ke: 0, kh: 0, kf: 0 }),
            Err(Error::InvalidSpec)
        ));
    }

    #[test]
    fn hyperbolic_flow_example() {
        let m = build_model(WilliamsonSpec::hyperbolic(1)).unwrap();
        let p = Point::new(vec![1.0, 1.0]);
        let q = m.flow(0, 2f64.ln(), &p).unwrap();
        close(q.coords[0], 0.5, 1e-14);
        close(q.coords[1], 2.0, 1e-14);
    }

    #[test]
    fn zero_time_is_identity() {
        let specs = [
            WilliamsonSpec { ke: 1, kh: 1, kf: 1 },
            WilliamsonSpec::hyperbolic(2),
        ];
        for spec in specs {
            let m = build_model(spec).unwrap();
            let p = Point::new((0..2 * m.arity()).map(|i| 0.3 * i as f64 - 1.0).collect());
            for j in 0..m.arity() {
                let q = m.flow(j, 0.0, &p).unwrap();
                assert_eq!(q, p);
            }
        }
    }

    #[test]
    fn elliptic_half_period() {
        // rotation by angle 2t: t = pi/2 maps (1, 0) to (-1, 0)
        let m = build_model(WilliamsonSpec { ke: 1, kh: 0, kf: 0 }).unwrap();
        let p = Point::new(vec![1.0, 0.0]);
        let q = m.flow(0, std::f64::consts::FRAC_PI_2, &p).unwrap();
        close(q.coords[0], -1.0, 1e-14);
        close(q.coords[1], 0.0, 1e-14);
    }

    #[test]
    fn log_gamma_examples() {
        let m = build_model(WilliamsonSpec::hyperbolic(1)).unwrap();
        close(
            m.log_gamma(0, &Point::new(vec![1.0, 1.0])).unwrap(),
            0.0,
            1e-15,
        );
        close(
            m.log_gamma(0, &Point::new(vec![1.0, (2.0f64).exp().powi(1)]))
                .unwrap(),
            1.0,
            1e-15,
        );
        assert!(matches!(
            m.log_gamma(0, &Point::new(vec![1.0, 0.0])),
            Err(Error::UndefinedOnAxes)
        ));
    }

    #[test]
    fn log_gamma_reaches_diagonal_magnitude() {
        let m = build_model(WilliamsonSpec::hyperbolic(1)).unwrap();
        for p in [
            Point::new(vec![0.7, 1.9]),
            Point::new(vec![-0.4, 0.8]),
            Point::new(vec![1.3, -2.2]),
            Point::new(vec![-0.9, -0.1]),
        ] {
            let h = m.hamiltonian(0, &p).unwrap();
            let t = m.log_gamma(0, &p).unwrap();
            let q = m.flow(0, -t, &p).unwrap();
            close(q.coords[0].abs(), h.abs().sqrt(), 1e-12);
            close(q.coords[1].abs(), h.abs().sqrt(), 1e-12);
        }
    }

    #[test]
    fn connection_potential_pairs_to_hamiltonians() {
        let m = build_model(WilliamsonSpec { ke: 1, kh: 1, kf: 1 }).unwrap();
        let p = Point::new(vec![0.3, -1.2, 2.0, 3.0, 0.5, -0.7, 1.1, 0.2]);
        let theta = m.connection_potential(&p);
        for (j, th) in theta.iter().enumerate() {
            close(*th, m.hamiltonian(j, &p).unwrap(), 1e-13);
        }
        // origin pairs to zero
        let origin = Point::new(vec![0.0; 8]);
        assert!(m.connection_potential(&origin).iter().all(|v| *v == 0.0));
        // elliptic example from the catalog: p = (1, 0) gives x^2 + y^2 = 1
        let me = build_model(WilliamsonSpec { ke: 1, kh: 0, kf: 0 }).unwrap();
        close(
            me.connection_potential(&Point::new(vec![1.0, 0.0]))[0],
            1.0,
            1e-15,
        );
    }

    #[test]
    fn focus_focus_flow_group_law() {
        let m = build_model(WilliamsonSpec { ke: 0, kh: 0, kf: 1 }).unwrap();
        let p = Point::new(vec![0.3, -1.2, 0.8, 0.5]);
        for j in 0..2 {
            let (s, t) = (0.37, -0.81);
            let a = m.flow(j, t, &m.flow(j, s, &p).unwrap()).unwrap();
            let b = m.flow(j, t + s, &p).unwrap();
            for i in 0..4 {
                close(a.coords[i], b.coords[i], 1e-12);
            }
        }
    }

    #[test]
    fn focus_focus_flow_matches_field_derivative() {
        // forward difference of the flow reproduces the listed field
        let m = build_model(WilliamsonSpec { ke: 0, kh: 0, kf: 1 }).unwrap();
        let p = Point::new(vec![0.3, -1.2, 0.8, 0.5]);
        let eps = 1e-6;
        for j in 0..2 {
            let v = m.vector_field(j, &p).unwrap();
            let qp = m.flow(j, eps, &p).unwrap();
            let qm = m.flow(j, -eps, &p).unwrap();
            for (i, vi) in v.iter().enumerate() {
                let d = (qp.coords[i] - qm.coords[i]) / (2.0 * eps);
                close(d, *vi, 1e-8);
            }
        }
    }
}
