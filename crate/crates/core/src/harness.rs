//! End-to-end scenarios: Born weights of a wave over a detector array become
//! the start of a walk ensemble, whose absorption frequencies are tested
//! against those weights.
//!
//! Reports carry SHA-256 digests of the scenario and of the weights, and
//! contain nothing time- or machine-dependent, so a rerun with the same
//! scenario reproduces them byte for byte.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blockop::{
    all_subsets, check_invariance, evolve_many, product_state, simplex_map, verify_form, BlockHamiltonian, CMatrix,
    CVector, Dims,
};
use crate::error::{Error, Result};
use crate::geometry::DetectorArray;
use crate::simplex::SimplexPoint;
use crate::simplexwalk::{ensemble, WalkKernel, DEFAULT_MAX_STEPS};
use crate::stats::binomial_band;
use crate::wavepacket::{born_weights, weights_csv, GaussianPacket, QuadratureSpec, WaveFunction};

pub use crate::stats::{chi_square, ChiSquare};

/// Width of the per-vertex bands, in binomial standard errors.
pub const BAND_SIGMAS: f64 = 3.0;

/// Two-slit packets start this many `sigma_z` above the detector plane.
pub const TWO_SLIT_HEIGHT: f64 = 8.0;

fn default_max_steps() -> u64 {
    DEFAULT_MAX_STEPS
}

/// Optional sector-structure check run alongside a scenario: the apparatus
/// blocks are assembled, checked, and used to evolve the product state whose
/// sector weights are the scenario's Born weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCheck {
    pub dims: Dims,
    /// One row-major `m x m` matrix per sector.
    pub apparatus_blocks: Vec<Vec<Complex64>>,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub array: DetectorArray,
    pub wave: WaveFunction,
    pub kernel: WalkKernel,
    pub walks: u64,
    pub master_seed: u64,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_check: Option<BlockCheck>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if let Some(v) = self.array.validate().first() {
            return Err(Error::config("array.cells", format!("{v:?}")));
        }
        self.wave.validate().map_err(|e| prefix("wave", e))?;
        self.kernel.validate()?;
        self.quadrature.validate()?;
        if self.walks < 1 {
            return Err(Error::config("walks", "need at least one walk"));
        }
        if self.max_steps < 1 {
            return Err(Error::config("max_steps", "must be at least 1"));
        }
        if let Some(bc) = &self.block_check {
            if bc.dims.n() != self.array.regions() {
                return Err(Error::config(
                    "block_check.dims.d",
                    format!("{} sectors for {} regions", bc.dims.n(), self.array.regions()),
                ));
            }
            if bc.times.iter().any(|t| !t.is_finite()) {
                return Err(Error::config("block_check.times", "times must be finite"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("scenario serializes"))
    }
}

fn prefix(path: &str, e: Error) -> Error {
    match e {
        Error::ConfigInvalid { path: p, reason } => Error::config(format!("{path}.{p}"), reason),
        other => other,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 over the little-endian bytes of the weights.
pub fn weights_digest(weights: &SimplexPoint) -> String {
    let bytes: Vec<u8> = weights.coords().iter().flat_map(|w| w.to_le_bytes()).collect();
    sha256_hex(&bytes)
}

/// Coherent equal-amplitude packets at `(+-separation/2, 0, 8 sigma)` moving
/// with `kz`, over `strips` strips tiling `[-extent, extent]` in x.
pub fn two_slit(separation: f64, sigma: f64, kz: f64, strips: usize, extent: f64) -> Result<Scenario> {
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::config("separation", "must be finite and non-negative"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::config("sigma", "must be positive"));
    }
    if !kz.is_finite() {
        return Err(Error::config("kz", "must be finite"));
    }
    if strips < 2 {
        return Err(Error::config("strips", "need at least two strips"));
    }
    let z0 = TWO_SLIT_HEIGHT * sigma;
    let packet = |x: f64| GaussianPacket {
        k: [0.0, 0.0, kz],
        ..GaussianPacket::isotropic([x, 0.0, z0], sigma)
    };
    let wave = WaveFunction::new(vec![packet(-separation / 2.0), packet(separation / 2.0)])?;
    Ok(Scenario {
        name: format!("two-slit d={separation} sigma={sigma} kz={kz} strips={strips} extent={extent}"),
        array: DetectorArray::strips(strips, extent)?,
        wave,
        kernel: WalkKernel::PairTransfer { h: 0.05 },
        walks: 100_000,
        master_seed: 0,
        quadrature: QuadratureSpec::default(),
        max_steps: DEFAULT_MAX_STEPS,
        block_check: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub master_seed: u64,
    pub config_digest: String,
    pub weights_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockCheckReport {
    pub verify_form: bool,
    pub all_subsets_invariant: bool,
    /// Largest deviation of any sector weight from the Born weights over the
    /// time grid.
    pub max_sector_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub walks: u64,
    pub expected: Vec<f64>,
    /// Absorbed walks per vertex; unabsorbed walks are counted separately.
    pub counts: Vec<u64>,
    pub freq: Vec<f64>,
    pub unabsorbed: u64,
    pub chi2: Option<f64>,
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi2_skipped: Option<String>,
    pub bands: Vec<Band>,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_check: Option<BlockCheckReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub scenario: Scenario,
    pub config_digest: String,
    pub weights_digest: String,
    pub report_digest: String,
    pub master_seed: u64,
    pub files: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub weights: SimplexPoint,
    pub report: ScenarioReport,
    pub manifest: Manifest,
}

pub const REPORT_FILE: &str = "report.json";
pub const WEIGHTS_FILE: &str = "weights.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

impl ScenarioOutcome {
    pub fn report_json(&self) -> Result<Vec<u8>> {
        to_json_bytes(&self.report)
    }

    /// Writes the report, the weights CSV and the manifest into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let files = [
            (REPORT_FILE, self.report_json()?),
            (WEIGHTS_FILE, weights_csv(&self.weights).into_bytes()),
            (MANIFEST_FILE, to_json_bytes(&self.manifest)?),
        ];
        let mut written = Vec::new();
        for (name, bytes) in files {
            let path = dir.join(name);
            std::fs::write(&path, bytes)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn run_block_check(bc: &BlockCheck, weights: &SimplexPoint) -> Result<BlockCheckReport> {
    let m = bc.dims.m();
    let blocks = bc
        .apparatus_blocks
        .iter()
        .map(|b| {
            if b.len() != m * m {
                return Err(Error::config(
                    "block_check.apparatus_blocks",
                    format!("expected {} entries, got {}", m * m, b.len()),
                ));
            }
            Ok(CMatrix::from_row_slice(m, m, b))
        })
        .collect::<Result<Vec<_>>>()?;
    let h = BlockHamiltonian::assemble(bc.dims.clone(), blocks)?;
    let dense = h.to_dense();
    let form = verify_form(&dense, &bc.dims)?;
    let mut subsets = true;
    for w in all_subsets(bc.dims.n()) {
        subsets &= check_invariance(&dense, &bc.dims, &w)?;
    }

    let mut g = CVector::zeros(m);
    g[0] = Complex64::new(1.0, 0.0);
    let phi: Vec<CVector> = bc
        .dims
        .d()
        .iter()
        .zip(weights.coords())
        .map(|(&d, &w)| {
            let mut v = CVector::zeros(d);
            v[0] = Complex64::new(w.sqrt(), 0.0);
            v
        })
        .collect();
    let s0 = product_state(&g, &phi, &bc.dims)?;
    let states = evolve_many(&h, &s0, &bc.times)?;
    let drift = states
        .iter()
        .flat_map(|s| {
            simplex_map(s)
                .coords()
                .iter()
                .zip(weights.coords())
                .map(|(a, w)| (a - w).abs())
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max);
    Ok(BlockCheckReport {
        verify_form: form,
        all_subsets_invariant: subsets,
        max_sector_drift: drift,
    })
}

/// Born weights, walk ensemble from those weights, statistics, manifest.
pub fn run_scenario(s: &Scenario) -> Result<ScenarioOutcome> {
    s.validate()?;
    let weights = born_weights(&s.wave, &s.array, &s.quadrature)?;
    let ens = ensemble(&weights, &s.kernel, s.walks, s.master_seed, s.max_steps)?;
    let absorbed = s.walks - ens.unabsorbed;
    let bands = weights
        .coords()
        .iter()
        .zip(&ens.freq)
        .map(|(&p, &f)| {
            let (lo, hi) = binomial_band(p, absorbed, BAND_SIGMAS);
            Band {
                lo,
                hi,
                within: f >= lo && f <= hi,
            }
        })
        .collect();
    let chi2_skipped = ens
        .chi2
        .is_none()
        .then(|| "expected weights concentrated in one category".to_string());
    let block_check = s
        .block_check
        .as_ref()
        .map(|bc| run_block_check(bc, &weights))
        .transpose()?;

    let config_digest = s.digest();
    let wdigest = weights_digest(&weights);
    let report = ScenarioReport {
        name: s.name.clone(),
        walks: s.walks,
        expected: weights.coords().to_vec(),
        counts: ens.counts,
        freq: ens.freq,
        unabsorbed: ens.unabsorbed,
        chi2: ens.chi2,
        p: ens.p,
        chi2_skipped,
        bands,
        provenance: Provenance {
            master_seed: s.master_seed,
            config_digest: config_digest.clone(),
            weights_digest: wdigest.clone(),
        },
        block_check,
    };
    let report_digest = sha256_hex(&to_json_bytes(&report)?);
    let manifest = Manifest {
        tool: "bornwalk".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        scenario: s.clone(),
        config_digest,
        weights_digest: wdigest,
        report_digest,
        master_seed: s.master_seed,
        files: [REPORT_FILE, WEIGHTS_FILE, MANIFEST_FILE].map(String::from).to_vec(),
    };
    Ok(ScenarioOutcome {
        weights,
        report,
        manifest,
    })
}
