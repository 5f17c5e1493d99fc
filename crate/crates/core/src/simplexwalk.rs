//! Absorbing martingale random walks on the probability simplex.
//!
//! Every kernel here satisfies the same contract: the one-step expectation of
//! each coordinate equals the coordinate, steps stay on the simplex, and a
//! coordinate that reaches exactly 0 is never touched again. By optional
//! stopping the probability of ending at vertex `e_i` is the starting
//! coordinate `a_i`.
//!
//! A walk is a deterministic function of its start, kernel and 64-bit seed.
//! Ensemble walk `k` uses the seed `walk_seed(master_seed, k)`, so results do
//! not depend on how walks are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::simplex::SimplexPoint;
use crate::stats::chi_square;

pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;

/// Largest tolerated fraction of walks still active at `max_steps`.
pub const MAX_UNABSORBED_FRACTION: f64 = 0.01;

/// Coordinates below this after a Dirichlet step are settled by a fair
/// transfer of their whole mass against the largest other coordinate.
pub const DUST_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WalkKernel {
    /// Pick an unordered pair of positive coordinates uniformly, move
    /// `eps = min(a_i, a_j, h)` from one to the other with a fair coin.
    PairTransfer { h: f64 },
    /// Draw `y ~ Dirichlet(gamma * x)` on the active coordinates `x` and move
    /// to `(1 - beta) x + beta y`. Coordinates left below [`DUST_FLOOR`] are
    /// then either zeroed or doubled with probability 1/2 each, the
    /// difference going to the largest other coordinate.
    DirichletMix { gamma: f64, beta: f64 },
}

impl WalkKernel {
    pub fn pair(h: f64) -> Result<Self> {
        let k = WalkKernel::PairTransfer { h };
        k.validate()?;
        Ok(k)
    }

    pub fn dirichlet(gamma: f64, beta: f64) -> Result<Self> {
        let k = WalkKernel::DirichletMix { gamma, beta };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            WalkKernel::PairTransfer { h } => {
                if !(h > 0.0 && h <= 0.5) {
                    return Err(Error::config("kernel.h", "step size must lie in (0, 0.5]"));
                }
            }
            WalkKernel::DirichletMix { gamma, beta } => {
                if !(gamma > 0.0 && gamma.is_finite()) {
                    return Err(Error::config("kernel.gamma", "concentration must be positive"));
                }
                if !(beta > 0.0 && beta <= 1.0) {
                    return Err(Error::config("kernel.beta", "mixing weight must lie in (0, 1]"));
                }
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for WalkKernel {
    type Err = Error;

    /// `pair:H` or `dirichlet:GAMMA:BETA`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str, field: &str| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::config(format!("kernel.{field}"), format!("not a number: {p:?}")))
        };
        match parts.as_slice() {
            ["pair", h] => WalkKernel::pair(num(h, "h")?),
            ["dirichlet", g, b] => WalkKernel::dirichlet(num(g, "gamma")?, num(b, "beta")?),
            _ => Err(Error::config(
                "kernel",
                format!("expected `pair:H` or `dirichlet:GAMMA:BETA`, got {s:?}"),
            )),
        }
    }
}

/// Vertex index (0-based) if `a` sits exactly on a vertex.
pub fn is_absorbed(a: &SimplexPoint) -> Option<usize> {
    a.absorbed_vertex()
}

/// Snaps a lone surviving coordinate to exactly 1.
fn settle(coords: &mut [f64]) {
    let mut alive = coords.iter().enumerate().filter(|(_, x)| **x > 0.0);
    if let (Some((i, _)), None) = (alive.next(), alive.next()) {
        coords[i] = 1.0;
    }
}

/// One step of the walk from `a`.
pub fn step<R: Rng + ?Sized>(a: &SimplexPoint, kernel: &WalkKernel, rng: &mut R) -> Result<SimplexPoint> {
    let active = a.support();
    if active.len() < 2 {
        return Err(Error::NoActivePair);
    }
    let mut x = a.coords().to_vec();
    match *kernel {
        WalkKernel::PairTransfer { h } => {
            let k = active.len();
            let first = rng.random_range(0..k);
            let mut second = rng.random_range(0..k - 1);
            if second >= first {
                second += 1;
            }
            let (i, j) = (active[first], active[second]);
            let eps = x[i].min(x[j]).min(h);
            if rng.random::<bool>() {
                transfer(&mut x, j, i, eps);
            } else {
                transfer(&mut x, i, j, eps);
            }
        }
        WalkKernel::DirichletMix { gamma, beta } => {
            let y = dirichlet_centered(&active.iter().map(|&i| x[i]).collect::<Vec<_>>(), gamma, rng);
            for (&i, yi) in active.iter().zip(y) {
                x[i] = (1.0 - beta) * x[i] + beta * yi;
            }
            for &i in &active {
                let c = x[i];
                if c > 0.0 && c < DUST_FLOOR {
                    let partner = active
                        .iter()
                        .copied()
                        .filter(|&j| j != i)
                        .max_by(|&p, &q| x[p].total_cmp(&x[q]))
                        .unwrap();
                    if rng.random::<bool>() {
                        transfer(&mut x, i, partner, c);
                    } else {
                        transfer(&mut x, partner, i, c);
                    }
                }
            }
        }
    }
    settle(&mut x);
    Ok(SimplexPoint::from_raw(x))
}

/// Moves `eps` from coordinate `from` to `to`; a source that is used up
/// becomes exactly 0.
fn transfer(x: &mut [f64], from: usize, to: usize, eps: f64) {
    if eps >= x[from] {
        x[to] += x[from];
        x[from] = 0.0;
    } else {
        x[from] -= eps;
        x[to] += eps;
    }
}

/// Dirichlet sample with mean `x` and total concentration `gamma`.
fn dirichlet_centered<R: Rng + ?Sized>(x: &[f64], gamma: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let g: Vec<f64> = x
            .iter()
            .map(|&xi| match Gamma::new(gamma * xi, 1.0) {
                Ok(d) => d.sample(rng),
                // shape underflowed to 0
                Err(_) => 0.0,
            })
            .collect();
        let sum: f64 = g.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            return g.into_iter().map(|v| v / sum).collect();
        }
    }
}

/// Per-walk seed: the `index`-th output of a SplitMix64 stream seeded with
/// `master_seed`.
pub fn walk_seed(master_seed: u64, index: u64) -> u64 {
    let mut z = master_seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkRun {
    pub seed: u64,
    pub start: SimplexPoint,
    pub steps_taken: u64,
    /// 0-based vertex index.
    pub absorbed_at: Option<usize>,
    pub end: SimplexPoint,
    /// `(step, point)` every `thin` steps, plus the final point.
    pub path: Option<Vec<(u64, SimplexPoint)>>,
}

impl Serialize for WalkRun {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Sample<'a> {
            step: u64,
            a: &'a SimplexPoint,
        }
        #[derive(Serialize)]
        struct Record<'a> {
            seed: u64,
            start: &'a SimplexPoint,
            steps_taken: u64,
            /// 1-based, null when not absorbed.
            absorbed_at: Option<usize>,
            end: &'a SimplexPoint,
            #[serde(skip_serializing_if = "Option::is_none")]
            path: Option<Vec<Sample<'a>>>,
        }
        Record {
            seed: self.seed,
            start: &self.start,
            steps_taken: self.steps_taken,
            absorbed_at: self.absorbed_at.map(|i| i + 1),
            end: &self.end,
            path: self
                .path
                .as_ref()
                .map(|p| p.iter().map(|(step, a)| Sample { step: *step, a }).collect()),
        }
        .serialize(s)
    }
}

impl WalkRun {
    /// CSV `step,a_1,...,a_n` of the recorded path.
    pub fn path_csv(&self) -> String {
        let mut out = String::from("step");
        for i in 1..=self.start.dim() {
            out.push_str(&format!(",a_{i}"));
        }
        out.push('\n');
        for (step, a) in self.path.iter().flatten() {
            out.push_str(&step.to_string());
            for x in a.coords() {
                out.push_str(&format!(",{x}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Steps from `start` until absorption or `max_steps`. With `thin > 0` every
/// `thin`-th point is recorded, along with the start and the end.
pub fn run_walk(start: &SimplexPoint, kernel: &WalkKernel, seed: u64, max_steps: u64, thin: u64) -> Result<WalkRun> {
    kernel.validate()?;
    if max_steps < 1 {
        return Err(Error::config("max_steps", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = start.clone();
    let mut path = (thin > 0).then(|| vec![(0, a.clone())]);
    let mut steps = 0;
    let mut absorbed = is_absorbed(&a);
    while absorbed.is_none() && steps < max_steps {
        a = step(&a, kernel, &mut rng)?;
        steps += 1;
        absorbed = is_absorbed(&a);
        if let Some(p) = path.as_mut() {
            if steps % thin == 0 || absorbed.is_some() || steps == max_steps {
                p.push((steps, a.clone()));
            }
        }
    }
    Ok(WalkRun {
        seed,
        start: start.clone(),
        steps_taken: steps,
        absorbed_at: absorbed,
        end: a,
        path,
    })
}

/// `count` walks with seeds `walk_seed(master_seed, k)`, in index order.
pub fn walks(
    start: &SimplexPoint,
    kernel: &WalkKernel,
    count: u64,
    master_seed: u64,
    max_steps: u64,
    thin: u64,
) -> Result<Vec<WalkRun>> {
    (0..count)
        .into_par_iter()
        .map(|k| run_walk(start, kernel, walk_seed(master_seed, k), max_steps, thin))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleReport {
    pub counts: Vec<u64>,
    pub freq: Vec<f64>,
    pub unabsorbed: u64,
    /// Pearson statistic against the start point; null when the test is
    /// undefined (start on a vertex).
    pub chi2: Option<f64>,
    pub p: Option<f64>,
    pub master_seed: u64,
}

/// Absorption counts and goodness of fit for `count` independent walks.
pub fn ensemble(
    start: &SimplexPoint,
    kernel: &WalkKernel,
    count: u64,
    master_seed: u64,
    max_steps: u64,
) -> Result<EnsembleReport> {
    if count < 1 {
        return Err(Error::config("count", "need at least one walk"));
    }
    kernel.validate()?;
    let outcomes: Vec<Option<usize>> = (0..count)
        .into_par_iter()
        .map(|k| run_walk(start, kernel, walk_seed(master_seed, k), max_steps, 0).map(|r| r.absorbed_at))
        .collect::<Result<_>>()?;

    let mut counts = vec![0u64; start.dim()];
    let mut unabsorbed = 0u64;
    for o in &outcomes {
        match o {
            Some(i) => counts[*i] += 1,
            None => unabsorbed += 1,
        }
    }
    if unabsorbed as f64 > MAX_UNABSORBED_FRACTION * count as f64 {
        return Err(Error::TooManyUnabsorbed {
            unabsorbed: unabsorbed as usize,
            count: count as usize,
            max_steps,
        });
    }
    let absorbed = count - unabsorbed;
    let freq = counts
        .iter()
        .map(|&c| if absorbed > 0 { c as f64 / absorbed as f64 } else { 0.0 })
        .collect();
    let (chi2, p) = match chi_square(&counts, start) {
        Ok(c) => (Some(c.statistic), Some(c.p_value)),
        Err(Error::DegenerateExpected(_)) => (None, None),
        Err(e) => return Err(e),
    };
    Ok(EnsembleReport {
        counts,
        freq,
        unabsorbed,
        chi2,
        p,
        master_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn point(v: &[f64]) -> SimplexPoint {
        SimplexPoint::new(v.to_vec()).unwrap()
    }

    #[test]
    fn kernel_parsing() {
        assert_eq!(
            "pair:0.1".parse::<WalkKernel>().unwrap(),
            WalkKernel::PairTransfer { h: 0.1 }
        );
        assert_eq!(
            "dirichlet:4:0.5".parse::<WalkKernel>().unwrap(),
            WalkKernel::DirichletMix { gamma: 4.0, beta: 0.5 }
        );
        assert!("pair:0.7".parse::<WalkKernel>().is_err());
        assert!("pair".parse::<WalkKernel>().is_err());
        assert!("dirichlet:0:0.5".parse::<WalkKernel>().is_err());
        assert!("dirichlet:1:0".parse::<WalkKernel>().is_err());
    }

    #[test]
    fn kernel_json_shape() {
        let k: WalkKernel = serde_json::from_str(r#"{"kind":"pair_transfer","h":0.05}"#).unwrap();
        assert_eq!(k, WalkKernel::PairTransfer { h: 0.05 });
        let k: WalkKernel = serde_json::from_str(r#"{"kind":"dirichlet_mix","gamma":2,"beta":1}"#).unwrap();
        assert_eq!(k, WalkKernel::DirichletMix { gamma: 2.0, beta: 1.0 });
    }

    #[test]
    fn vertex_cannot_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e1 = SimplexPoint::vertex(3, 0);
        assert_eq!(is_absorbed(&e1), Some(0));
        assert!(matches!(
            step(&e1, &WalkKernel::PairTransfer { h: 0.1 }, &mut rng),
            Err(Error::NoActivePair)
        ));
    }

    #[test]
    fn two_point_step_outcomes() {
        let a = point(&[0.5, 0.5]);
        let k = WalkKernel::PairTransfer { h: 0.1 };
        let mut up = 0;
        let trials = 20_000;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..trials {
            let b = step(&a, &k, &mut rng).unwrap();
            let c = b.coords();
            assert!((c == [0.6, 0.4]) || (c == [0.4, 0.6]), "{c:?}");
            if c[0] > 0.5 {
                up += 1;
            }
        }
        // fair coin: 3 sigma = 0.0106
        assert!((up as f64 / trials as f64 - 0.5).abs() < 0.0107);
    }

    #[test]
    fn consuming_step_absorbs_exactly() {
        let a = point(&[0.5, 0.5]);
        let k = WalkKernel::PairTransfer { h: 0.5 };
        for seed in 0..50 {
            let run = run_walk(&a, &k, seed, 100, 0).unwrap();
            assert_eq!(run.steps_taken, 1);
            let v = run.absorbed_at.unwrap();
            assert_eq!(run.end, SimplexPoint::vertex(2, v));
        }
    }

    #[test]
    fn start_on_vertex_is_absorbed_immediately() {
        let run = run_walk(
            &SimplexPoint::vertex(3, 2),
            &WalkKernel::PairTransfer { h: 0.1 },
            9,
            10,
            1,
        )
        .unwrap();
        assert_eq!(run.absorbed_at, Some(2));
        assert_eq!(run.steps_taken, 0);
        let json = serde_json::to_string(&run).unwrap();
        assert!(json.contains(r#""absorbed_at":3"#));
    }

    #[test]
    fn walk_is_deterministic() {
        let a = point(&[0.2, 0.8]);
        let k = WalkKernel::PairTransfer { h: 0.1 };
        let r1 = run_walk(&a, &k, 77, 1_000_000, 1).unwrap();
        let r2 = run_walk(&a, &k, 77, 1_000_000, 1).unwrap();
        assert_eq!(r1, r2);
        assert!(r1.absorbed_at.is_some());
        let csv = r1.path_csv();
        assert!(csv.starts_with("step,a_1,a_2\n0,0.2,0.8\n"));
    }

    #[test]
    fn max_steps_limits_the_walk() {
        let a = point(&[0.2, 0.3, 0.5]);
        let run = run_walk(&a, &WalkKernel::PairTransfer { h: 0.001 }, 3, 10, 4).unwrap();
        assert_eq!(run.steps_taken, 10);
        assert_eq!(run.absorbed_at, None);
        let steps: Vec<u64> = run.path.unwrap().iter().map(|(s, _)| *s).collect();
        assert_eq!(steps, vec![0, 4, 8, 10]);
    }

    #[test]
    fn ensemble_from_vertex() {
        let r = ensemble(
            &SimplexPoint::vertex(3, 0),
            &WalkKernel::PairTransfer { h: 0.1 },
            1000,
            5,
            10,
        )
        .unwrap();
        assert_eq!(r.counts, vec![1000, 0, 0]);
        assert_eq!(r.freq, vec![1.0, 0.0, 0.0]);
        assert_eq!(r.chi2, None);
    }

    #[test]
    fn ensemble_flags_unabsorbed() {
        let a = point(&[0.2, 0.3, 0.5]);
        let err = ensemble(&a, &WalkKernel::PairTransfer { h: 0.01 }, 100, 1, 5).unwrap_err();
        assert!(matches!(err, Error::TooManyUnabsorbed { unabsorbed: 100, .. }));
    }

    #[test]
    fn seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for k in 0..10_000 {
            assert!(seen.insert(walk_seed(42, k)));
        }
        assert_ne!(walk_seed(1, 0), walk_seed(2, 0));
    }

    fn arb_point(n: usize) -> impl Strategy<Value = SimplexPoint> {
        proptest::collection::vec(0.0f64..1.0, n).prop_filter_map("needs two positive", |v| {
            let mut v = v;
            // zero out small entries to exercise faces
            for x in v.iter_mut() {
                if *x < 0.2 {
                    *x = 0.0;
                }
            }
            let p = SimplexPoint::normalized(v).ok()?;
            (p.support().len() >= 2).then_some(p)
        })
    }

    fn arb_kernel() -> impl Strategy<Value = WalkKernel> {
        prop_oneof![
            (0.001f64..0.5).prop_map(|h| WalkKernel::PairTransfer { h }),
            (0.1f64..20.0, 0.05f64..1.0).prop_map(|(gamma, beta)| WalkKernel::DirichletMix { gamma, beta }),
        ]
    }

    proptest! {
        #[test]
        fn steps_stay_on_the_simplex(a in arb_point(5), k in arb_kernel(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut cur = a.clone();
            for _ in 0..50 {
                if is_absorbed(&cur).is_some() {
                    break;
                }
                let next = step(&cur, &k, &mut rng).unwrap();
                prop_assert!(next.coords().iter().all(|x| *x >= 0.0 && *x <= 1.0));
                let sum: f64 = next.coords().iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-12);
                for i in 0..cur.dim() {
                    if cur[i] == 0.0 {
                        prop_assert_eq!(next[i], 0.0);
                    }
                }
                cur = next;
            }
        }
    }
}
