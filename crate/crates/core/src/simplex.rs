//! Points of the probability simplex `{ x in R^n : x_i >= 0, sum x_i = 1 }`.
//!
//! The same type carries Born weights over detector regions, the image of a
//! joint state under the sector-norm map, and the state of a random walk.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Allowed deviation of the coordinate sum from 1.
pub const SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    /// Validates an explicit coordinate vector.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidSimplex("empty coordinate vector".into()));
        }
        if let Some((i, x)) = coords.iter().enumerate().find(|(_, x)| !x.is_finite() || **x < 0.0) {
            return Err(Error::InvalidSimplex(format!(
                "coordinate {i} is {x}, expected a finite non-negative value"
            )));
        }
        let sum: f64 = coords.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidSimplex(format!("coordinates sum to {sum}, not 1")));
        }
        Ok(SimplexPoint(coords))
    }

    /// Clamps negative coordinates to 0 and divides by the sum.
    pub fn normalized(mut coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidSimplex("non-finite coordinate".into()));
        }
        for x in coords.iter_mut() {
            *x = x.max(0.0);
        }
        let sum: f64 = coords.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidSimplex("all coordinates are zero".into()));
        }
        if sum != 1.0 {
            for x in coords.iter_mut() {
                *x /= sum;
            }
        }
        SimplexPoint::new(coords)
    }

    /// The vertex `e_i` (0-based).
    pub fn vertex(n: usize, i: usize) -> Self {
        assert!(i < n, "vertex {i} out of range for dimension {n}");
        let mut coords = vec![0.0; n];
        coords[i] = 1.0;
        SimplexPoint(coords)
    }

    /// Builds a point without validation. Callers guarantee the invariants.
    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        SimplexPoint(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Indices of strictly positive coordinates.
    pub fn support(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i] > 0.0).collect()
    }

    /// Returns the vertex index (0-based) when exactly one coordinate is
    /// nonzero; every other coordinate must be exactly 0.
    pub fn absorbed_vertex(&self) -> Option<usize> {
        let mut found = None;
        for (i, &x) in self.0.iter().enumerate() {
            if x != 0.0 {
                if found.is_some() {
                    return None;
                }
                found = Some(i);
            }
        }
        found.filter(|&i| self.0[i] == 1.0)
    }
}

impl<'de> Deserialize<'de> for SimplexPoint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let coords = Vec::<f64>::deserialize(d)?;
        SimplexPoint::new(coords).map_err(serde::de::Error::custom)
    }
}

impl std::ops::Index<usize> for SimplexPoint {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}
