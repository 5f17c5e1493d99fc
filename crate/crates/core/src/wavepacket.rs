//! Incoming wave functions and their Born weights over a detector array.
//!
//! A wave function is a coherent superposition of separable Gaussian packets,
//! truncated to the half-space `z > 0`. Each packet is
//!
//! ```text
//! amp * f(x; x0, sx, kx) * f(y; y0, sy, ky) * f(z; z0, sz, kz)
//! f(u; u0, s, k) = (pi s^2)^(-1/4) * exp(-(u - u0)^2 / (2 s^2)) * exp(i k (u - u0))
//! ```
//!
//! so `|f|^2` is a normal density with standard deviation `s / sqrt(2)` and a
//! packet with `|amp| = 1` has unit norm over all of space. The peak value of
//! a unit packet is `pi^(-3/4) (sx sy sz)^(-1/2)`.
//!
//! Integrals are taken on the bounding box that extends `half_width * sigma`
//! past every packet centre, clipped to `z >= 0`. The box is cut along every
//! cell edge so that each sub-rectangle lies in exactly one region, and each
//! axis interval is integrated with composite 8-point Gauss-Legendre panels.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DetectorArray;
use crate::simplex::SimplexPoint;

/// Points per Gauss-Legendre panel.
pub const PANEL_ORDER: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPacket {
    pub center: [f64; 3],
    pub sigma: [f64; 3],
    #[serde(default)]
    pub k: [f64; 3],
    pub amp: Complex64,
}

impl GaussianPacket {
    /// Unit-amplitude packet at rest with isotropic width.
    pub fn isotropic(center: [f64; 3], sigma: f64) -> Self {
        GaussianPacket {
            center,
            sigma: [sigma; 3],
            k: [0.0; 3],
            amp: Complex64::new(1.0, 0.0),
        }
    }

    fn validate(&self, path: &str) -> Result<()> {
        if self.sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::config(format!("{path}.sigma"), "widths must be positive"));
        }
        if !(self.center[2] > 0.0) || self.center.iter().any(|c| !c.is_finite()) {
            return Err(Error::config(
                format!("{path}.center"),
                "centre must be finite with z > 0",
            ));
        }
        if self.k.iter().any(|k| !k.is_finite()) || !self.amp.is_finite() {
            return Err(Error::config(path, "wave vector and amplitude must be finite"));
        }
        Ok(())
    }

    /// Value of the packet's factor along one axis, without the amplitude.
    fn axis_factor(&self, axis: usize, u: f64) -> Complex64 {
        let s = self.sigma[axis];
        let du = u - self.center[axis];
        let envelope = (std::f64::consts::PI * s * s).powf(-0.25) * (-du * du / (2.0 * s * s)).exp();
        Complex64::from_polar(envelope, self.k[axis] * du)
    }

    pub fn evaluate(&self, x: f64, y: f64, z: f64) -> Complex64 {
        if z <= 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        self.amp * self.axis_factor(0, x) * self.axis_factor(1, y) * self.axis_factor(2, z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveFunction {
    pub packets: Vec<GaussianPacket>,
}

impl WaveFunction {
    pub fn new(packets: Vec<GaussianPacket>) -> Result<Self> {
        let wave = WaveFunction { packets };
        wave.validate()?;
        Ok(wave)
    }

    pub fn validate(&self) -> Result<()> {
        if self.packets.is_empty() {
            return Err(Error::config("packets", "need at least one packet"));
        }
        for (i, p) in self.packets.iter().enumerate() {
            p.validate(&format!("packets[{i}]"))?;
        }
        Ok(())
    }

    /// `phi(x, y, z)`; identically zero for `z <= 0`.
    pub fn evaluate(&self, x: f64, y: f64, z: f64) -> Complex64 {
        if z <= 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        self.packets.iter().map(|p| p.evaluate(x, y, z)).sum()
    }

    /// Multiplies every amplitude by `c`.
    pub fn scaled(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        for p in out.packets.iter_mut() {
            p.amp *= c;
        }
        out
    }

    /// Bounding box `[lo, hi]` per axis at `half_width` sigmas, z clipped at 0.
    fn bounding_box(&self, half_width: f64) -> [(f64, f64); 3] {
        let mut bx = [(f64::INFINITY, f64::NEG_INFINITY); 3];
        for p in &self.packets {
            for (axis, b) in bx.iter_mut().enumerate() {
                b.0 = b.0.min(p.center[axis] - half_width * p.sigma[axis]);
                b.1 = b.1.max(p.center[axis] + half_width * p.sigma[axis]);
            }
        }
        bx[2].0 = bx[2].0.max(0.0);
        bx
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Target node count across the bounding box along x, y and z. Each
    /// sub-interval receives a share proportional to its width, rounded up to
    /// whole panels, with at least one panel.
    pub nodes: [usize; 3],
    /// Box half-width in units of each packet's sigma.
    pub half_width: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            nodes: [128; 3],
            half_width: 8.0,
        }
    }
}

impl QuadratureSpec {
    pub fn uniform(nodes: usize) -> Self {
        QuadratureSpec {
            nodes: [nodes; 3],
            ..Default::default()
        }
    }

    /// Same box, `factor` times the nodes on every axis.
    pub fn refined(&self, factor: usize) -> Self {
        QuadratureSpec {
            nodes: self.nodes.map(|n| n * factor),
            half_width: self.half_width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.iter().any(|&n| n < 8) {
            return Err(Error::config("quadrature.nodes", "need at least 8 nodes per axis"));
        }
        if !(self.half_width >= 4.0 && self.half_width.is_finite()) {
            return Err(Error::config("quadrature.half_width", "must be at least 4"));
        }
        Ok(())
    }
}

/// Nodes and weights on `[-1, 1]` for an n-point Gauss-Legendre rule.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite rule on `[a, b]` with `panels` equal panels.
fn composite(a: f64, b: f64, panels: usize, base: &(Vec<f64>, Vec<f64>)) -> (Vec<f64>, Vec<f64>) {
    let h = (b - a) / panels as f64;
    let mut xs = Vec::with_capacity(panels * base.0.len());
    let mut ws = Vec::with_capacity(panels * base.0.len());
    for p in 0..panels {
        let lo = a + h * p as f64;
        for (t, w) in base.0.iter().zip(&base.1) {
            xs.push(lo + 0.5 * h * (t + 1.0));
            ws.push(0.5 * h * w);
        }
    }
    (xs, ws)
}

/// One axis cut at sorted breakpoints, with a rule per interval.
struct AxisGrid {
    intervals: Vec<(f64, f64)>,
    rules: Vec<(Vec<f64>, Vec<f64>)>,
}

impl AxisGrid {
    fn new(lo: f64, hi: f64, cuts: impl Iterator<Item = f64>, nodes: usize, base: &(Vec<f64>, Vec<f64>)) -> Self {
        let mut points: Vec<f64> = cuts.filter(|c| *c > lo && *c < hi).collect();
        points.push(lo);
        points.push(hi);
        points.sort_by(|a, b| a.total_cmp(b));
        points.dedup();
        let total_panels = nodes as f64 / PANEL_ORDER as f64;
        let width = hi - lo;
        let mut intervals = Vec::new();
        let mut rules = Vec::new();
        for w in points.windows(2) {
            let (a, b) = (w[0], w[1]);
            let panels = ((total_panels * (b - a) / width).ceil() as usize).max(1);
            intervals.push((a, b));
            rules.push(composite(a, b, panels, base));
        }
        AxisGrid { intervals, rules }
    }
}

/// Integrates `|phi|^2` over every (x-interval, y-interval) column of the
/// cut bounding box. Returns `(column midpoint, integral)` in a fixed order.
fn column_integrals(
    wave: &WaveFunction,
    q: &QuadratureSpec,
    x_cuts: Vec<f64>,
    y_cuts: Vec<f64>,
) -> Result<Vec<((f64, f64), f64)>> {
    wave.validate()?;
    q.validate()?;
    let base = gauss_legendre(PANEL_ORDER);
    let bx = wave.bounding_box(q.half_width);
    if bx[2].1 <= bx[2].0 {
        return Err(Error::DegenerateState(
            "wave function has no support above z = 0".into(),
        ));
    }
    let gx = AxisGrid::new(bx[0].0, bx[0].1, x_cuts.into_iter(), q.nodes[0], &base);
    let gy = AxisGrid::new(bx[1].0, bx[1].1, y_cuts.into_iter(), q.nodes[1], &base);
    let gz = AxisGrid::new(bx[2].0, bx[2].1, std::iter::empty(), q.nodes[2], &base);
    let (zs, zw) = &gz.rules[0];

    // Per-packet axis factors, tabulated once.
    let tabulate = |grid: &AxisGrid, axis: usize| -> Vec<Vec<Vec<Complex64>>> {
        grid.rules
            .iter()
            .map(|(us, _)| {
                wave.packets
                    .iter()
                    .map(|p| us.iter().map(|&u| p.axis_factor(axis, u)).collect())
                    .collect()
            })
            .collect()
    };
    let fx = tabulate(&gx, 0);
    let fy = tabulate(&gy, 1);
    let fz: Vec<Vec<Complex64>> = wave
        .packets
        .iter()
        .map(|p| zs.iter().map(|&z| p.axis_factor(2, z)).collect())
        .collect();
    let amps: Vec<Complex64> = wave.packets.iter().map(|p| p.amp).collect();
    let np = amps.len();

    let columns: Vec<(usize, usize)> = (0..gx.intervals.len())
        .flat_map(|i| (0..gy.intervals.len()).map(move |j| (i, j)))
        .collect();

    let integrals: Vec<f64> = columns
        .par_iter()
        .map(|&(i, j)| {
            let (_, wx) = &gx.rules[i];
            let (_, wy) = &gy.rules[j];
            let mut u = vec![Complex64::new(0.0, 0.0); np];
            let mut total = 0.0;
            for (ix, wxi) in wx.iter().enumerate() {
                let mut row = 0.0;
                for (iy, wyj) in wy.iter().enumerate() {
                    for p in 0..np {
                        u[p] = amps[p] * fx[i][p][ix] * fy[j][p][iy];
                    }
                    let mut col = 0.0;
                    for (iz, wzk) in zw.iter().enumerate() {
                        let mut s = Complex64::new(0.0, 0.0);
                        for p in 0..np {
                            s += u[p] * fz[p][iz];
                        }
                        col += wzk * s.norm_sqr();
                    }
                    row += wyj * col;
                }
                total += wxi * row;
            }
            total
        })
        .collect();

    let out: Vec<_> = columns
        .iter()
        .zip(integrals)
        .map(|(&(i, j), v)| {
            let (x0, x1) = gx.intervals[i];
            let (y0, y1) = gy.intervals[j];
            (((x0 + x1) / 2.0, (y0 + y1) / 2.0), v)
        })
        .collect();
    if let Some((_, bad)) = out.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFiniteResult(format!("column integral {bad}")));
    }
    Ok(out)
}

/// Quadrature estimate of the squared norm over `z > 0`.
pub fn norm_squared(wave: &WaveFunction, q: &QuadratureSpec) -> Result<f64> {
    let cols = column_integrals(wave, q, Vec::new(), Vec::new())?;
    let total: f64 = cols.iter().map(|(_, v)| v).sum();
    if !total.is_finite() {
        return Err(Error::NonFiniteResult(format!("norm {total}")));
    }
    Ok(total)
}

/// Fraction of `|phi|^2` above each region, catch-all last.
///
/// The input need not be normalized. Mass beyond the bounding box is
/// neglected; mass inside the box but outside every cell goes to the
/// catch-all.
pub fn born_weights(wave: &WaveFunction, array: &DetectorArray, q: &QuadratureSpec) -> Result<SimplexPoint> {
    let x_cuts = array.cells().iter().flat_map(|c| [c.x_min, c.x_max]).collect();
    let y_cuts = array.cells().iter().flat_map(|c| [c.y_min, c.y_max]).collect();
    let cols = column_integrals(wave, q, x_cuts, y_cuts)?;

    let mut mass = vec![0.0; array.regions()];
    for ((x, y), v) in &cols {
        mass[array.region_index(*x, *y)] += v;
    }
    let norm: f64 = mass.iter().sum();
    if !norm.is_finite() {
        return Err(Error::NonFiniteResult(format!("norm {norm}")));
    }
    if norm < 1e-12 {
        return Err(Error::DegenerateState(format!("squared norm {norm:e} below 1e-12")));
    }
    SimplexPoint::normalized(mass.into_iter().map(|m| m / norm).collect())
}

/// CSV rows `region_index,weight` with 1-based region indices.
pub fn weights_csv(weights: &SimplexPoint) -> String {
    let mut out = String::from("region_index,weight\n");
    for (i, w) in weights.coords().iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, w));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // exact up to degree 15
        let i14: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((i14 - 2.0 / 15.0).abs() < 1e-14);
        let odd: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(15)).sum();
        assert!(odd.abs() < 1e-15);
    }

    #[test]
    fn vanishes_below_the_plane() {
        let w = WaveFunction::new(vec![GaussianPacket::isotropic([0.0, 0.0, 3.0], 1.0)]).unwrap();
        assert_eq!(w.evaluate(0.0, 0.0, -1.0), Complex64::new(0.0, 0.0));
        assert_eq!(w.evaluate(0.0, 0.0, 0.0), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn peak_value_convention() {
        let mut p = GaussianPacket::isotropic([0.5, -1.0, 4.0], 1.0);
        p.sigma = [0.5, 2.0, 1.5];
        p.k = [0.3, -2.0, 1.0];
        let v = p.evaluate(0.5, -1.0, 4.0);
        let expected = std::f64::consts::PI.powf(-0.75) / (0.5f64 * 2.0 * 1.5).sqrt();
        assert!((v.re - expected).abs() < 1e-14);
        assert!(v.im.abs() < 1e-15);
    }

    #[test]
    fn opposite_amplitudes_cancel() {
        let p = GaussianPacket::isotropic([0.0, 0.0, 5.0], 1.0);
        let mut q = p.clone();
        q.amp = Complex64::new(-1.0, 0.0);
        let w = WaveFunction::new(vec![p, q]).unwrap();
        for &(x, y, z) in &[(0.0, 0.0, 5.0), (1.0, -0.5, 4.0), (3.0, 2.0, 7.5)] {
            assert_eq!(w.evaluate(x, y, z).norm(), 0.0);
        }
        let err = born_weights(
            &w,
            &DetectorArray::strips(2, 4.0).unwrap(),
            &QuadratureSpec::uniform(16),
        );
        assert!(matches!(err, Err(Error::DegenerateState(_))));
    }

    #[test]
    fn amplitude_scales_norm_quadratically() {
        let p = GaussianPacket::isotropic([0.0, 0.0, 8.0], 1.0);
        let w = WaveFunction::new(vec![p]).unwrap();
        let q = QuadratureSpec::default();
        let n1 = norm_squared(&w, &q).unwrap();
        let n2 = norm_squared(&w.scaled(Complex64::new(2.0, 0.0)), &q).unwrap();
        assert!((n1 - 1.0).abs() < 1e-6);
        assert!((n2 / n1 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn concentrated_packet_lands_in_its_cell() {
        let array = DetectorArray::new(vec![
            Rect::new(-20.0, 0.0, -20.0, 20.0),
            Rect::new(0.0, 20.0, -20.0, 20.0),
        ])
        .unwrap();
        let w = WaveFunction::new(vec![GaussianPacket::isotropic([10.0, 0.0, 8.0], 1.0)]).unwrap();
        let a = born_weights(&w, &array, &QuadratureSpec::default()).unwrap();
        assert!(a[1] >= 1.0 - 1e-6);
    }

    #[test]
    fn half_plane_split_is_even() {
        let array = DetectorArray::new(vec![
            Rect::new(-100.0, 0.0, -100.0, 100.0),
            Rect::new(0.0, 100.0, -100.0, 100.0),
        ])
        .unwrap();
        let w = WaveFunction::new(vec![GaussianPacket::isotropic([0.0, 0.0, 8.0], 1.0)]).unwrap();
        let a = born_weights(&w, &array, &QuadratureSpec::default()).unwrap();
        assert!((a[0] - 0.5).abs() < 1e-6);
        assert!((a[1] - 0.5).abs() < 1e-6);
        assert!(a[2].abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut p = GaussianPacket::isotropic([0.0, 0.0, 1.0], 1.0);
        p.sigma[1] = 0.0;
        assert!(WaveFunction::new(vec![p]).is_err());
        let p = GaussianPacket::isotropic([0.0, 0.0, -1.0], 1.0);
        assert!(WaveFunction::new(vec![p]).is_err());
        assert!(WaveFunction::new(vec![]).is_err());
        assert!(QuadratureSpec::uniform(4).validate().is_err());
        let q = QuadratureSpec {
            half_width: 2.0,
            ..Default::default()
        };
        assert!(q.validate().is_err());
    }

    #[test]
    fn json_shape() {
        let w: WaveFunction =
            serde_json::from_str(r#"{"packets":[{"center":[0,0,8],"sigma":[1,1,1],"k":[0,0,2],"amp":[1,0]}]}"#)
                .unwrap();
        assert_eq!(w.packets[0].amp, Complex64::new(1.0, 0.0));
        let text = serde_json::to_string(&w).unwrap();
        assert!(text.contains(r#""amp":[1.0,0.0]"#));
    }
}
