//! Closed convex target sets with exact nearest-point projection.

use crate::error::GeometryError;
use crate::game_model::GameModel;
use crate::scalar::{dist, dot, norm, Scalar};

/// Stopping tolerance of the halfspace projection.
pub const DYKSTRA_TOL: f64 = 1e-10;
pub const DYKSTRA_SWEEP_CAP: usize = 100_000;
/// Default distance under which a point counts as inside the target.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum TargetShape<T> {
    /// Per-coordinate bounds; infinite entries leave that side open.
    Box {
        lower: Vec<T>,
        upper: Vec<T>,
    },
    Ball {
        center: Vec<T>,
        radius: T,
    },
    /// `normals[i] . y <= offsets[i]`, stored with unit normals.
    Halfspaces {
        normals: Vec<Vec<T>>,
        offsets: Vec<T>,
    },
}

/// Nonempty closed convex set `D̄ ⊂ ℝ^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexTarget<T> {
    shape: TargetShape<T>,
    dim: usize,
    witness: Vec<T>,
}

impl<T: Scalar> ConvexTarget<T> {
    pub fn bounded_box(lower: Vec<T>, upper: Vec<T>) -> Result<Self, GeometryError> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(GeometryError::InvalidShape(format!(
                "box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        let mut witness = Vec::with_capacity(lower.len());
        for (k, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == T::infinity() || hi == T::neg_infinity() {
                return Err(GeometryError::InvalidShape(format!(
                    "box coordinate {k} has empty range"
                )));
            }
            witness.push(T::zero().max(lo).min(hi));
        }
        Ok(Self {
            dim: lower.len(),
            shape: TargetShape::Box { lower, upper },
            witness,
        })
    }

    /// The closed orthant `{y : y <= 0}`.
    pub fn negative_orthant(dim: usize) -> Self {
        Self::bounded_box(vec![T::neg_infinity(); dim], vec![T::zero(); dim]).expect("orthant is a valid box")
    }

    pub fn ball(center: Vec<T>, radius: T) -> Result<Self, GeometryError> {
        if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::InvalidShape(
                "ball center must be finite and nonempty".into(),
            ));
        }
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(GeometryError::InvalidShape(
                "ball radius must be positive and finite".into(),
            ));
        }
        Ok(Self {
            dim: center.len(),
            witness: center.clone(),
            shape: TargetShape::Ball { center, radius },
        })
    }

    /// Intersection of halfspaces `a_i . y <= b_i`. When no witness is given,
    /// one is searched for by projecting the origin; an empty intersection is
    /// reported as [`GeometryError::Infeasible`].
    pub fn halfspaces(normals: Vec<Vec<T>>, offsets: Vec<T>, witness: Option<Vec<T>>) -> Result<Self, GeometryError> {
        if normals.is_empty() || normals.len() != offsets.len() {
            return Err(GeometryError::InvalidShape(format!(
                "{} normals but {} offsets",
                normals.len(),
                offsets.len()
            )));
        }
        let dim = normals[0].len();
        if dim == 0 {
            return Err(GeometryError::InvalidShape("halfspace normals must be nonempty".into()));
        }
        let mut unit_normals = Vec::with_capacity(normals.len());
        let mut unit_offsets = Vec::with_capacity(normals.len());
        for (i, (a, &b)) in normals.iter().zip(&offsets).enumerate() {
            if a.len() != dim {
                return Err(GeometryError::InvalidShape(format!("normal {i} has wrong dimension")));
            }
            let len = norm(a);
            if !(len > T::zero()) || !len.is_finite() || !b.is_finite() {
                return Err(GeometryError::InvalidShape(format!("halfspace {i} is degenerate")));
            }
            unit_normals.push(a.iter().map(|&v| v / len).collect::<Vec<_>>());
            unit_offsets.push(b / len);
        }
        let mut target = Self {
            dim,
            shape: TargetShape::Halfspaces {
                normals: unit_normals,
                offsets: unit_offsets,
            },
            witness: vec![T::zero(); dim],
        };
        let feas_tol = T::tol(1e-9);
        let witness = match witness {
            Some(w) => {
                if w.len() != dim {
                    return Err(GeometryError::DimensionMismatch {
                        expected: dim,
                        found: w.len(),
                    });
                }
                let v = target.max_violation(&w);
                if v > feas_tol {
                    return Err(GeometryError::Infeasible { residual: v.as_f64() });
                }
                w
            }
            None => {
                let origin = vec![T::zero(); dim];
                let w = match target.project(&origin) {
                    Ok(w) => w,
                    Err(GeometryError::NoConvergence { residual, .. }) => {
                        return Err(GeometryError::Infeasible { residual })
                    }
                    Err(e) => return Err(e),
                };
                let v = target.max_violation(&w);
                if v > feas_tol {
                    return Err(GeometryError::Infeasible { residual: v.as_f64() });
                }
                w
            }
        };
        target.witness = witness;
        Ok(target)
    }

    pub fn shape(&self) -> &TargetShape<T> {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// A point known to lie in the set.
    pub fn witness(&self) -> &[T] {
        &self.witness
    }

    fn check_dim(&self, x: &[T]) -> Result<(), GeometryError> {
        if x.len() == self.dim {
            Ok(())
        } else {
            Err(GeometryError::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            })
        }
    }

    /// Largest constraint violation (zero for points inside). Only meaningful
    /// as a distance for the halfspace form, whose normals are unit length.
    fn max_violation(&self, x: &[T]) -> T {
        match &self.shape {
            TargetShape::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&v, (&lo, &hi))| (lo - v).max(v - hi).max(T::zero()))
                .fold(T::zero(), T::max),
            TargetShape::Ball { center, radius } => (dist(x, center) - *radius).max(T::zero()),
            TargetShape::Halfspaces { normals, offsets } => normals
                .iter()
                .zip(offsets)
                .map(|(a, &b)| (dot(a, x) - b).max(T::zero()))
                .fold(T::zero(), T::max),
        }
    }

    /// Nearest point of the set to `x`.
    pub fn project(&self, x: &[T]) -> Result<Vec<T>, GeometryError> {
        self.check_dim(x)?;
        match &self.shape {
            TargetShape::Box { lower, upper } => Ok(x
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&v, (&lo, &hi))| v.max(lo).min(hi))
                .collect()),
            TargetShape::Ball { center, radius } => {
                let r = dist(x, center);
                if r <= *radius {
                    Ok(x.to_vec())
                } else {
                    let scale = *radius / r;
                    Ok(x.iter().zip(center).map(|(&v, &c)| c + (v - c) * scale).collect())
                }
            }
            TargetShape::Halfspaces { normals, offsets } => project_halfspaces(normals, offsets, x),
        }
    }

    pub fn distance(&self, x: &[T]) -> Result<T, GeometryError> {
        let p = self.project(x)?;
        Ok(dist(x, &p))
    }

    /// Projection and distance in one call.
    pub fn project_with_distance(&self, x: &[T]) -> Result<(Vec<T>, T), GeometryError> {
        let p = self.project(x)?;
        let d = dist(x, &p);
        Ok((p, d))
    }

    pub fn contains(&self, x: &[T], membership_tol: T) -> Result<bool, GeometryError> {
        Ok(self.distance(x)? <= membership_tol)
    }

    /// True when the set stays away from the box `[lower, upper]`, judged by
    /// alternating projections between the two sets.
    pub fn disjoint_from_box(&self, lower: &[T], upper: &[T]) -> Result<bool, GeometryError> {
        self.check_dim(lower)?;
        let clamp = |y: &[T]| -> Vec<T> {
            y.iter()
                .zip(lower.iter().zip(upper))
                .map(|(&v, (&lo, &hi))| v.max(lo).min(hi))
                .collect()
        };
        let mut x: Vec<T> = lower.iter().zip(upper).map(|(&a, &b)| (a + b) / T::lit(2.0)).collect();
        let mut gap = T::infinity();
        for _ in 0..10_000 {
            let y = self.project(&x)?;
            gap = dist(&x, &y);
            let next = clamp(&y);
            let moved = dist(&next, &x);
            x = next;
            if gap <= T::tol(1e-9) || moved <= T::tol(1e-13) {
                break;
            }
        }
        Ok(gap > T::tol(1e-6))
    }
}

fn project_onto_halfspace<T: Scalar>(a: &[T], b: T, y: &[T]) -> Vec<T> {
    let excess = dot(a, y) - b;
    if excess <= T::zero() {
        y.to_vec()
    } else {
        y.iter().zip(a).map(|(&v, &ai)| v - excess * ai).collect()
    }
}

/// Dykstra's alternating projection onto an intersection of halfspaces with
/// unit normals. When `x` violates a single constraint and its one-shot
/// projection satisfies the rest, that projection is exact and returned.
fn project_halfspaces<T: Scalar>(normals: &[Vec<T>], offsets: &[T], x: &[T]) -> Result<Vec<T>, GeometryError> {
    let slack = T::tol(1e-14);
    let violated: Vec<usize> = (0..normals.len())
        .filter(|&i| dot(&normals[i], x) - offsets[i] > T::zero())
        .collect();
    match violated.as_slice() {
        [] => return Ok(x.to_vec()),
        [i] => {
            let y = project_onto_halfspace(&normals[*i], offsets[*i], x);
            if normals.iter().zip(offsets).all(|(a, &b)| dot(a, &y) - b <= slack) {
                return Ok(y);
            }
        }
        _ => {}
    }

    let tol = T::tol(DYKSTRA_TOL);
    let mut current = x.to_vec();
    let mut increments = vec![vec![T::zero(); x.len()]; normals.len()];
    let mut residual = T::infinity();
    for _ in 0..DYKSTRA_SWEEP_CAP {
        let mut change = T::zero();
        for (i, (a, &b)) in normals.iter().zip(offsets).enumerate() {
            let y: Vec<T> = current.iter().zip(&increments[i]).map(|(&c, &p)| c + p).collect();
            let projected = project_onto_halfspace(a, b, &y);
            for ((p, &yk), &zk) in increments[i].iter_mut().zip(&y).zip(&projected) {
                let new_p = yk - zk;
                change += (new_p - *p) * (new_p - *p);
                *p = new_p;
            }
            current = projected;
        }
        residual = change.sqrt();
        if residual <= tol {
            return Ok(current);
        }
    }
    Err(GeometryError::NoConvergence {
        iterations: DYKSTRA_SWEEP_CAP,
        residual: residual.as_f64(),
    })
}

/// Size of the reward set: the largest distance between a one-step reward and
/// any point of its convex hull, which is the largest pairwise distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardGeometry<T> {
    pub v_max: T,
    pub diam_k: T,
}

pub fn compute_vmax<T: Scalar>(model: &GameModel<T>) -> RewardGeometry<T> {
    let vectors = model.reward_vectors();
    let mut best = T::zero();
    for (i, a) in vectors.iter().enumerate() {
        for b in &vectors[i + 1..] {
            best = best.max(dist(a, b));
        }
    }
    RewardGeometry {
        v_max: best,
        diam_k: best,
    }
}
