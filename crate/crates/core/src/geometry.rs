//! Detector partition of the x-y plane.
//!
//! An array holds `n - 1` axis-aligned rectangular cells. The catch-all region
//! (everything outside the cells) is never stored; it is region `n - 1` in the
//! 0-based indexing used throughout the crate. Each region `i` extends to the
//! half-space `cell_i x (0, inf)` above it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Rect {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    /// Closed-set membership.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0) * (self.y_max - self.y_min).max(0.0)
    }

    fn interiors_overlap(&self, other: &Rect) -> bool {
        self.x_min < other.x_max && other.x_min < self.x_max && self.y_min < other.y_max && other.y_min < self.y_max
    }

    fn is_finite(&self) -> bool {
        [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// A problem found by [`DetectorArray::validate`]. Cell indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Overlap { first: usize, second: usize },
    Degenerate { cell: usize },
    NonFinite { cell: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ArrayFile")]
pub struct DetectorArray {
    cells: Vec<Rect>,
}

#[derive(Deserialize)]
struct ArrayFile {
    cells: Vec<Rect>,
}

impl TryFrom<ArrayFile> for DetectorArray {
    type Error = Error;

    fn try_from(f: ArrayFile) -> Result<Self> {
        DetectorArray::new(f.cells)
    }
}

impl DetectorArray {
    /// Builds an array and rejects it if `validate` reports anything.
    pub fn new(cells: Vec<Rect>) -> Result<Self> {
        let array = DetectorArray { cells };
        let violations = array.validate();
        if let Some(v) = violations.first() {
            return Err(Error::config("cells", format!("{v:?}")));
        }
        Ok(array)
    }

    /// Builds an array without checking it. Use [`validate`](Self::validate)
    /// to inspect the result.
    pub fn new_unchecked(cells: Vec<Rect>) -> Self {
        DetectorArray { cells }
    }

    pub fn cells(&self) -> &[Rect] {
        &self.cells
    }

    /// Total number of regions, including the catch-all.
    pub fn regions(&self) -> usize {
        self.cells.len() + 1
    }

    /// Every pairwise overlap and every zero-area or non-finite cell.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (i, c) in self.cells.iter().enumerate() {
            if !c.is_finite() {
                out.push(Violation::NonFinite { cell: i });
            } else if !(c.x_max > c.x_min && c.y_max > c.y_min) {
                out.push(Violation::Degenerate { cell: i });
            }
        }
        for i in 0..self.cells.len() {
            for j in i + 1..self.cells.len() {
                if self.cells[i].interiors_overlap(&self.cells[j]) {
                    out.push(Violation::Overlap { first: i, second: j });
                }
            }
        }
        out
    }

    /// Region containing `(x, y)`, 0-based. Points on a shared edge go to the
    /// lowest-index cell; points in no cell go to the catch-all.
    pub fn region_index(&self, x: f64, y: f64) -> usize {
        self.cells
            .iter()
            .position(|c| c.contains(x, y))
            .unwrap_or(self.cells.len())
    }

    /// `strips` equal-width strips tiling `[-extent, extent]` in x, each
    /// spanning `[-extent, extent]` in y.
    pub fn strips(strips: usize, extent: f64) -> Result<Self> {
        if strips < 1 {
            return Err(Error::config("strips", "need at least one strip"));
        }
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(Error::config("extent", "must be positive and finite"));
        }
        let width = 2.0 * extent / strips as f64;
        let edge = |i: usize| {
            if i == strips {
                extent
            } else {
                -extent + width * i as f64
            }
        };
        let cells = (0..strips)
            .map(|i| Rect::new(edge(i), edge(i + 1), -extent, extent))
            .collect();
        DetectorArray::new(cells)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_squares() -> DetectorArray {
        DetectorArray::new(vec![Rect::new(0.0, 1.0, 0.0, 1.0), Rect::new(1.0, 2.0, 0.0, 1.0)]).unwrap()
    }

    #[test]
    fn membership() {
        let a = two_squares();
        assert_eq!(a.regions(), 3);
        assert_eq!(a.region_index(0.5, 0.5), 0);
        assert_eq!(a.region_index(1.5, 0.5), 1);
        assert_eq!(a.region_index(5.0, 5.0), 2);
        // shared edge goes to the lower index
        assert_eq!(a.region_index(1.0, 0.5), 0);
    }

    #[test]
    fn validate_reports_problems() {
        assert!(two_squares().validate().is_empty());

        let dup = DetectorArray::new_unchecked(vec![Rect::new(0.0, 1.0, 0.0, 1.0), Rect::new(0.0, 1.0, 0.0, 1.0)]);
        assert_eq!(dup.validate(), vec![Violation::Overlap { first: 0, second: 1 }]);

        let flat = DetectorArray::new_unchecked(vec![Rect::new(1.0, 1.0, 0.0, 1.0)]);
        assert_eq!(flat.validate(), vec![Violation::Degenerate { cell: 0 }]);
        assert!(DetectorArray::new(flat.cells().to_vec()).is_err());
    }

    #[test]
    fn json_shape() {
        let a: DetectorArray =
            serde_json::from_str(r#"{"cells":[{"x_min":0,"x_max":1,"y_min":0,"y_max":1}]}"#).unwrap();
        assert_eq!(a.regions(), 2);
        let back = serde_json::to_string(&a).unwrap();
        assert!(back.starts_with(r#"{"cells":[{"x_min":0.0"#));
        let overlapping =
            r#"{"cells":[{"x_min":0,"x_max":1,"y_min":0,"y_max":1},{"x_min":0.5,"x_max":1,"y_min":0,"y_max":1}]}"#;
        assert!(serde_json::from_str::<DetectorArray>(overlapping).is_err());
    }

    #[test]
    fn strips_tile_the_interval() {
        let a = DetectorArray::strips(8, 4.0).unwrap();
        assert_eq!(a.regions(), 9);
        assert_eq!(a.cells()[0].x_min, -4.0);
        assert_eq!(a.cells()[7].x_max, 4.0);
        assert!(a.validate().is_empty());
    }

    proptest! {
        #[test]
        fn at_most_one_cell_per_point(x in -5.0f64..5.0, y in -5.0f64..5.0, strips in 1usize..12) {
            let a = DetectorArray::strips(strips, 3.0).unwrap();
            let idx = a.region_index(x, y);
            prop_assert!(idx < a.regions());
            // interior points lie in at most one cell
            let hits = a.cells().iter().filter(|c| c.x_min < x && x < c.x_max && c.y_min < y && y < c.y_max).count();
            prop_assert!(hits <= 1);
            if hits == 1 {
                prop_assert!(idx < strips);
            }
        }
    }
}
