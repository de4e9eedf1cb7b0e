// SPDX-License-Identifier: Apache-2.0

//! Trivariate Bernstein free-form deformation.
//!
//! A point's local coordinates `(s, t, u)` in the lattice domain box weight
//! every control point by `B_i^l(s) · B_j^m(t) · B_k^n(u)`. Local coordinates
//! are clamped to the unit cube, so points outside the box follow its faces.

use super::AlignError;
use crate::{Point3, Vec3};

pub const INVERSE_MAX_ITERATIONS: usize = 50;
pub const INVERSE_TOLERANCE_MM: f64 = 1e-6;

/// Bernstein basis polynomial `C(n, i) x^i (1 - x)^(n - i)`.
pub fn bernstein(n: usize, i: usize, x: f64) -> f64 {
    binomial(n, i) * x.powi(i as i32) * (1.0 - x).powi((n - i) as i32)
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

fn basis_row(n: usize, x: f64) -> Vec<f64> {
    (0..=n).map(|i| bernstein(n, i, x)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FfdLattice {
    degree: [usize; 3],
    domain_min: Point3,
    domain_max: Point3,
    /// `(l+1)(m+1)(n+1)` points, `i` varying fastest.
    points: Vec<Point3>,
}

impl FfdLattice {
    pub fn new(
        degree: [usize; 3],
        domain_min: Point3,
        domain_max: Point3,
        points: Vec<Point3>,
    ) -> Result<Self, AlignError> {
        if degree.contains(&0) {
            return Err(AlignError::InvalidLattice("degree components must be positive".into()));
        }
        for a in 0..3 {
            let extent = domain_max[a] - domain_min[a];
            if !(extent.is_finite() && extent > 0.0) {
                return Err(AlignError::InvalidLattice(format!(
                    "domain has no positive extent on axis {a}"
                )));
            }
        }
        let expected = degree.iter().map(|d| d + 1).product::<usize>();
        if points.len() != expected {
            return Err(AlignError::InvalidLattice(format!(
                "expected {expected} control points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(AlignError::InvalidLattice("control points must be finite".into()));
        }
        Ok(Self {
            degree,
            domain_min,
            domain_max,
            points,
        })
    }

    /// Lattice whose control points sit on the regular grid over the domain,
    /// which makes the deformation the identity.
    pub fn undisplaced(degree: [usize; 3], domain_min: Point3, domain_max: Point3) -> Result<Self, AlignError> {
        let [l, m, n] = degree;
        if degree.contains(&0) {
            return Err(AlignError::InvalidLattice("degree components must be positive".into()));
        }
        let extent = domain_max - domain_min;
        let mut points = Vec::with_capacity((l + 1) * (m + 1) * (n + 1));
        for k in 0..=n {
            for j in 0..=m {
                for i in 0..=l {
                    let frac = Vec3::new(i as f64 / l as f64, j as f64 / m as f64, k as f64 / n as f64);
                    points.push(domain_min + extent.component_mul(&frac));
                }
            }
        }
        Self::new(degree, domain_min, domain_max, points)
    }

    pub fn degree(&self) -> [usize; 3] {
        self.degree
    }

    pub fn domain(&self) -> (Point3, Point3) {
        (self.domain_min, self.domain_max)
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    fn flat_index(&self, [i, j, k]: [usize; 3]) -> usize {
        let [l, m, _] = self.degree;
        i + (l + 1) * (j + (m + 1) * k)
    }

    fn check_index(&self, index: [usize; 3]) -> Result<(), AlignError> {
        if (0..3).any(|a| index[a] > self.degree[a]) {
            return Err(AlignError::IndexOutOfRange {
                index,
                degree: self.degree,
            });
        }
        Ok(())
    }

    /// Panics if `index` is outside the lattice.
    pub fn control_point(&self, index: [usize; 3]) -> Point3 {
        self.check_index(index).expect("control point index");
        self.points[self.flat_index(index)]
    }

    pub fn move_control_point(&self, index: [usize; 3], position: Point3) -> Result<Self, AlignError> {
        self.check_index(index)?;
        if position.iter().any(|c| !c.is_finite()) {
            return Err(AlignError::InvalidLattice("control points must be finite".into()));
        }
        let mut next = self.clone();
        let flat = self.flat_index(index);
        next.points[flat] = position;
        Ok(next)
    }

    /// Applies `f` to every control point.
    pub fn map_points(&self, f: impl Fn(&Point3) -> Point3) -> Self {
        Self {
            points: self.points.iter().map(f).collect(),
            ..self.clone()
        }
    }

    /// Local coordinates of `p`, clamped to the unit cube.
    pub fn local_coordinates(&self, p: &Point3) -> [f64; 3] {
        [0, 1, 2].map(|a| {
            let s = (p[a] - self.domain_min[a]) / (self.domain_max[a] - self.domain_min[a]);
            s.clamp(0.0, 1.0)
        })
    }

    pub fn deform(&self, p: &Point3) -> Point3 {
        let [s, t, u] = self.local_coordinates(p);
        let [l, m, n] = self.degree;
        let (bs, bt, bu) = (basis_row(l, s), basis_row(m, t), basis_row(n, u));
        let mut out = Vec3::zeros();
        let mut idx = 0;
        for wk in &bu {
            for wj in &bt {
                let wjk = wj * wk;
                for wi in &bs {
                    out += self.points[idx].coords * (wi * wjk);
                    idx += 1;
                }
            }
        }
        Point3::from(out)
    }

    fn clamp_to_domain(&self, p: &Point3) -> Point3 {
        Point3::from([0, 1, 2].map(|a| p[a].clamp(self.domain_min[a], self.domain_max[a])))
    }

    /// Solves `deform(x) = target` by damped fixed-point iteration
    /// `x ← x + λ (target − deform(x))`, halving λ whenever a step fails to
    /// reduce the residual. Iterates stay inside the domain box: outside it
    /// the map is constant along the clamped axes, so the solution found is
    /// the preimage inside the box. Targets outside the image of the box do
    /// not converge.
    pub fn invert(&self, target: &Point3) -> Result<Point3, AlignError> {
        let mut x = self.clamp_to_domain(target);
        let mut residual = target - self.deform(&x);
        let mut damping = 1.0;
        for _ in 0..INVERSE_MAX_ITERATIONS {
            if residual.norm() <= INVERSE_TOLERANCE_MM {
                return Ok(x);
            }
            let candidate = self.clamp_to_domain(&(x + residual * damping));
            let next = target - self.deform(&candidate);
            if next.norm() < residual.norm() {
                x = candidate;
                residual = next;
                damping = (damping * 2.0).min(1.0);
            } else {
                damping *= 0.5;
            }
        }
        if residual.norm() <= INVERSE_TOLERANCE_MM {
            Ok(x)
        } else {
            Err(AlignError::InverseDidNotConverge {
                residual: residual.norm(),
            })
        }
    }
}
