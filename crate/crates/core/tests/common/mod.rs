//! Independent reference computations used by the integration tests. None of
//! these share code with the crate's quadrature or evolution paths.
#![allow(dead_code)]

use bornwalk_core::blockop::CMatrix;
use bornwalk_core::geometry::{DetectorArray, Rect};
use bornwalk_core::wavepacket::GaussianPacket;
use num_complex::Complex64;
use statrs::function::erf::erf;

const SQRT_PI: f64 = 1.772_453_850_905_516;

/// `int_u^v exp(-(x - c)^2 / s^2) dx`.
fn gauss_sq_integral(u: f64, v: f64, c: f64, s: f64) -> f64 {
    0.5 * SQRT_PI * s * (erf((v - c) / s) - erf((u - c) / s))
}

/// Mass of `|packet|^2` along one axis in `[u, v]` (the density has variance
/// `sigma^2 / 2`).
fn axis_mass(u: f64, v: f64, c: f64, s: f64) -> f64 {
    gauss_sq_integral(u, v, c, s) / (SQRT_PI * s)
}

/// Closed-form region weights of a single packet. The density separates, so
/// the z factor cancels between each cell and the total.
pub fn single_packet_weights(p: &GaussianPacket, array: &DetectorArray) -> Vec<f64> {
    let mut w: Vec<f64> = array
        .cells()
        .iter()
        .map(|r| {
            axis_mass(r.x_min, r.x_max, p.center[0], p.sigma[0]) * axis_mass(r.y_min, r.y_max, p.center[1], p.sigma[1])
        })
        .collect();
    let inside: f64 = w.iter().sum();
    w.push(1.0 - inside);
    w
}

/// `||packet||^2` restricted to `z > 0`.
pub fn single_packet_norm(p: &GaussianPacket) -> f64 {
    0.5 * (1.0 + erf(p.center[2] / p.sigma[2]))
}

/// Closed-form weights for two packets that share widths, wave vector and
/// the y and z centre, differing only in x centre and amplitude. The
/// interference term of the x density is
/// `2 Re(a1 conj(a2) e^{i kx (c2 - c1)}) exp(-(c1 - c2)^2 / (4 s^2)) exp(-(x - mid)^2 / s^2)`.
pub fn two_packet_weights(p1: &GaussianPacket, p2: &GaussianPacket, array: &DetectorArray) -> Vec<f64> {
    assert_eq!(p1.sigma, p2.sigma);
    assert_eq!(p1.k, p2.k);
    assert_eq!(p1.center[1..], p2.center[1..]);
    let s = p1.sigma[0];
    let (c1, c2) = (p1.center[0], p2.center[0]);
    let phase = Complex64::from_polar(1.0, p1.k[0] * (c2 - c1));
    let cross = 2.0 * (p1.amp * p2.amp.conj() * phase).re * (-(c1 - c2).powi(2) / (4.0 * s * s)).exp();
    let mid = 0.5 * (c1 + c2);
    let x_mass = |u: f64, v: f64| {
        p1.amp.norm_sqr() * gauss_sq_integral(u, v, c1, s)
            + p2.amp.norm_sqr() * gauss_sq_integral(u, v, c2, s)
            + cross * gauss_sq_integral(u, v, mid, s)
    };
    let total = x_mass(f64::NEG_INFINITY, f64::INFINITY);
    let mut w: Vec<f64> = array
        .cells()
        .iter()
        .map(|r: &Rect| x_mass(r.x_min, r.x_max) / total * axis_mass(r.y_min, r.y_max, p1.center[1], p1.sigma[1]))
        .collect();
    let inside: f64 = w.iter().sum();
    w.push(1.0 - inside);
    w
}

/// `exp(-i H t)` by Taylor series with scaling and squaring.
pub fn expm_taylor(h: &CMatrix, t: f64) -> CMatrix {
    let n = h.nrows();
    let a = h * Complex64::new(0.0, -t);
    let norm = a.iter().map(|z| z.norm()).fold(0.0, f64::max) * n as f64;
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let a = a * Complex64::new(scale, 0.0);
    let mut term = CMatrix::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=30 {
        term = &term * &a * Complex64::new(1.0 / k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
