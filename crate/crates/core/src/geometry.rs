//! Prox-functions, compact domains and their exact prox-operators.

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::Point;

/// Tolerance for domain membership and for deciding whether a bound is active.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Distance-generating function `omega` and its Bregman divergence
/// `W(y, x) = omega(y) - omega(x) - <grad omega(x), y - x>`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Geometry {
    /// `omega(x) = ||x||^2 / 2`, so `W(y, x) = ||y - x||^2 / 2`.
    #[default]
    Euclidean,
}

impl Geometry {
    pub fn omega(&self, x: &Point) -> f64 {
        match self {
            Geometry::Euclidean => 0.5 * x.norm_squared(),
        }
    }

    pub fn omega_gradient(&self, x: &Point) -> Point {
        match self {
            Geometry::Euclidean => x.clone(),
        }
    }

    /// Lipschitz constant of the gradient of `omega`.
    pub fn smoothness(&self) -> f64 {
        match self {
            Geometry::Euclidean => 1.0,
        }
    }

    /// Gradient of `x -> W(x, center)`.
    pub fn divergence_gradient(&self, x: &Point, center: &Point) -> Point {
        self.omega_gradient(x) - self.omega_gradient(center)
    }
}

/// `W(y, x)` from the definition.
pub fn bregman_divergence(geom: &Geometry, y: &Point, x: &Point) -> Result<f64> {
    check_dim(x.len(), y.len())?;
    let value = match geom {
        Geometry::Euclidean => 0.5 * (y - x).norm_squared(),
    };
    Ok(value)
}

/// Known compact convex set `X`.
#[derive(Clone, Debug, PartialEq)]
pub enum Domain {
    Box { lower: Point, upper: Point },
    Ball { center: Point, radius: f64 },
}

impl Domain {
    pub fn new_box(lower: Point, upper: Point) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::InvalidParameter("domain dimension must be >= 1".into()));
        }
        for (l, u) in lower.iter().zip(upper.iter()) {
            if !l.is_finite() || !u.is_finite() || l > u {
                return Err(Error::InvalidParameter(format!(
                    "box bounds must be finite with lower <= upper, got [{l}, {u}]"
                )));
            }
        }
        Ok(Domain::Box { lower, upper })
    }

    /// `[-half_width, half_width]^n`.
    pub fn cube(n: usize, half_width: f64) -> Result<Self> {
        Self::new_box(
            DVector::from_element(n, -half_width),
            DVector::from_element(n, half_width),
        )
    }

    pub fn ball(center: Point, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidParameter("domain dimension must be >= 1".into()));
        }
        if !radius.is_finite() || radius < 0.0 || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "ball needs a finite center and radius >= 0, got radius {radius}"
            )));
        }
        Ok(Domain::Ball { center, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Box { lower, .. } => lower.len(),
            Domain::Ball { center, .. } => center.len(),
        }
    }

    /// Amount by which `x` lies outside the set (0 inside).
    pub fn violation(&self, x: &Point) -> f64 {
        match self {
            Domain::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .map(|(xi, (l, u))| (l - xi).max(xi - u).max(0.0))
                .fold(0.0, f64::max),
            Domain::Ball { center, radius } => ((x - center).norm() - radius).max(0.0),
        }
    }

    pub fn contains(&self, x: &Point, tol: f64) -> bool {
        x.len() == self.dim() && x.iter().all(|v| v.is_finite()) && self.violation(x) <= tol
    }

    pub(crate) fn require_member(&self, x: &Point) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        let violation = self.violation(x);
        if violation > MEMBERSHIP_TOL || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::OutsideDomain { violation });
        }
        Ok(())
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, x: &Point) -> Point {
        match self {
            Domain::Box { lower, upper } => DVector::from_iterator(
                x.len(),
                x.iter()
                    .zip(lower.iter().zip(upper.iter()))
                    .map(|(v, (l, u))| v.max(*l).min(*u)),
            ),
            Domain::Ball { center, radius } => {
                let d = x - center;
                let norm = d.norm();
                if norm <= *radius {
                    x.clone()
                } else {
                    let mut scale = *radius / norm;
                    let mut p = center + &d * scale;
                    while (&p - center).norm() > *radius {
                        scale = scale.next_down();
                        p = center + &d * scale;
                    }
                    p
                }
            }
        }
    }

    /// `sup_{x in X} ||x - c||`.
    pub fn farthest_distance(&self, c: &Point) -> f64 {
        match self {
            Domain::Box { lower, upper } => c
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .map(|(ci, (l, u))| (ci - l).abs().max((u - ci).abs()).powi(2))
                .sum::<f64>()
                .sqrt(),
            Domain::Ball { center, radius } => (c - center).norm() + radius,
        }
    }

    /// Projection of the origin, the default starting point.
    pub fn default_start(&self) -> Point {
        self.project(&DVector::zeros(self.dim()))
    }

    /// Moves every coordinate within `delta` of a box bound onto that bound;
    /// for a ball, a point within `delta` of the sphere moves onto it.
    pub fn snap_to_faces(&self, x: &Point, delta: f64) -> Point {
        match self {
            Domain::Box { lower, upper } => DVector::from_fn(x.len(), |j, _| {
                if x[j] - lower[j] <= delta {
                    lower[j]
                } else if upper[j] - x[j] <= delta {
                    upper[j]
                } else {
                    x[j]
                }
            }),
            Domain::Ball { center, radius } => {
                let d = x - center;
                let norm = d.norm();
                if norm > 0.0 && radius - norm <= delta {
                    self.project(&(center + d * (*radius / norm) * (1.0 + 1e-12)))
                } else {
                    x.clone()
                }
            }
        }
    }

    /// `g + w*` where `w*` is the element of the normal cone `N_X(x)` closest
    /// to `-g`; its norm is `d(g + N_X(x), 0)`.
    pub fn normal_cone_residual(&self, x: &Point, g: &Point) -> Result<Point> {
        check_dim(self.dim(), g.len())?;
        self.require_member(x)?;
        let r = match self {
            Domain::Box { lower, upper } => {
                DVector::from_iterator(
                    g.len(),
                    g.iter().enumerate().map(|(j, &gj)| {
                        let at_lower = x[j] <= lower[j] + MEMBERSHIP_TOL;
                        let at_upper = x[j] >= upper[j] - MEMBERSHIP_TOL;
                        match (at_lower, at_upper) {
                            (true, true) => 0.0,
                            // N = (-inf, 0]: only a positive g_j is cancelled
                            (true, false) => gj.min(0.0),
                            // N = [0, inf): only a negative g_j is cancelled
                            (false, true) => gj.max(0.0),
                            (false, false) => gj,
                        }
                    }),
                )
            }
            Domain::Ball { center, radius } => {
                let d = x - center;
                let norm = d.norm();
                if *radius == 0.0 {
                    DVector::zeros(g.len())
                } else if norm >= radius - MEMBERSHIP_TOL {
                    let n_hat = d / norm;
                    let inward = -g.dot(&n_hat);
                    if inward > 0.0 {
                        g + n_hat * inward
                    } else {
                        g.clone()
                    }
                } else {
                    g.clone()
                }
            }
        };
        Ok(r)
    }
}

/// `argmin_{x in X} <v, x> + eta * W(x, x_tilde)`, exact for the shipped
/// domains under the Euclidean geometry.
pub fn prox_step(
    geom: &Geometry,
    domain: &Domain,
    v: &Point,
    x_tilde: &Point,
    eta: f64,
) -> Result<Point> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "prox step size must be positive and finite, got {eta}"
        )));
    }
    check_dim(domain.dim(), v.len())?;
    domain.require_member(x_tilde)?;
    match geom {
        Geometry::Euclidean => Ok(domain.project(&(x_tilde - v / eta))),
    }
}

/// `(D_X, M_X)`: the prox-diameter `sup sqrt(W(x, y))` and `sup ||x||`.
pub fn domain_diameter(geom: &Geometry, domain: &Domain) -> (f64, f64) {
    match geom {
        Geometry::Euclidean => {
            let (width, m_x) = match domain {
                Domain::Box { lower, upper } => {
                    let width = (upper - lower).norm();
                    let m_x = lower
                        .iter()
                        .zip(upper.iter())
                        .map(|(l, u)| l.abs().max(u.abs()).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    (width, m_x)
                }
                Domain::Ball { center, radius } => (2.0 * radius, center.norm() + radius),
            };
            ((0.5 * width * width).sqrt(), m_x)
        }
    }
}

/// Coordinate-wise `max(y, 0)`.
pub fn project_nonneg(y: &DVector<f64>) -> DVector<f64> {
    y.map(|v| v.max(0.0))
}

/// `d(g + N_X(x), 0)`.
pub fn normal_cone_distance(domain: &Domain, x: &Point, g: &Point) -> Result<f64> {
    Ok(domain.normal_cone_residual(x, g)?.norm())
}
