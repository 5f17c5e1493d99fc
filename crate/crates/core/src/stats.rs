//! Goodness-of-fit statistics for absorption counts.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::simplex::SimplexPoint;

/// Categories whose expected count is below this are pooled.
pub const MIN_EXPECTED_COUNT: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub p_value: f64,
    pub dof: usize,
}

/// Pearson chi-square of `counts` against `expected`, with upper-tail
/// p-value on `categories - 1` degrees of freedom.
///
/// A category with expected count below 5 is merged into whichever
/// neighbour has the smaller expected count, smallest first, until every
/// pooled category reaches 5.
pub fn chi_square(counts: &[u64], expected: &SimplexPoint) -> Result<ChiSquare> {
    if counts.len() != expected.dim() {
        return Err(Error::DimensionMismatch {
            expected: expected.dim(),
            got: counts.len(),
        });
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::DegenerateExpected("no observations".into()));
    }
    if expected.support().len() < 2 {
        return Err(Error::DegenerateExpected("all expected mass in one category".into()));
    }
    let n = total as f64;
    // (expected count, observed count) per pooled category
    let mut groups: Vec<(f64, f64)> = counts
        .iter()
        .zip(expected.coords())
        .map(|(&o, &p)| (n * p, o as f64))
        .collect();
    while groups.len() > 1 {
        let (idx, smallest) = groups
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
            .map(|(i, g)| (i, g.0))
            .unwrap();
        if smallest >= MIN_EXPECTED_COUNT {
            break;
        }
        let neighbour = match (idx.checked_sub(1), groups.get(idx + 1)) {
            (Some(l), Some(r)) => {
                if groups[l].0 <= r.0 {
                    l
                } else {
                    idx + 1
                }
            }
            (Some(l), None) => l,
            (None, _) => idx + 1,
        };
        let g = groups.remove(idx);
        let target = if neighbour > idx { neighbour - 1 } else { neighbour };
        groups[target].0 += g.0;
        groups[target].1 += g.1;
    }
    if groups.len() < 2 {
        return Err(Error::DegenerateExpected(
            "fewer than two categories after pooling".into(),
        ));
    }
    let statistic: f64 = groups.iter().map(|(e, o)| (o - e) * (o - e) / e).sum();
    let dof = groups.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::DegenerateExpected(e.to_string()))?;
    let p_value = if statistic == 0.0 { 1.0 } else { dist.sf(statistic) };
    Ok(ChiSquare {
        statistic,
        p_value,
        dof,
    })
}

/// `p +/- z * sqrt(p (1 - p) / n)`, clipped to `[0, 1]`.
pub fn binomial_band(p: f64, n: u64, z: f64) -> (f64, f64) {
    let half = z * (p * (1.0 - p) / n as f64).sqrt();
    ((p - half).max(0.0), (p + half).min(1.0))
}
