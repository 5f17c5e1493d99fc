use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bornwalk_core::blockop::{
    all_subsets, check_invariance, evolve_many, hermitian_defect, product_state, simplex_map, trajectory_csv,
    verify_form, BlockHamiltonian, BlockHamiltonianFile, CVector, DenseOperatorFile, Dims, JointState, JointStateFile,
};
use bornwalk_core::harness::{self, run_scenario, sha256_hex, to_json_bytes, Scenario};
use bornwalk_core::oracle::{gamblers_ruin, lattice_absorption, LatticeChain, OracleReport};
use bornwalk_core::simplexwalk::{ensemble, run_walk, WalkKernel, DEFAULT_MAX_STEPS};
use bornwalk_core::wavepacket::{born_weights, weights_csv, QuadratureSpec, WaveFunction};
use bornwalk_core::{DetectorArray, Error, Result, SimplexPoint};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Start points further than this from summing to one are renormalized with a
/// warning.
const START_SUM_WARN: f64 = 1e-9;

const EXIT_CONFIG: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "bornwalk",
    version,
    about = "Born weights, absorbing simplex walks and sector-structure checks"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Seed for every stochastic operation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write outputs and a manifest into this directory instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Suppress diagnostics on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Born weights of a wave over a detector array.
    Born {
        #[arg(long)]
        wave: PathBuf,
        #[arg(long)]
        array: PathBuf,
        /// Quadrature nodes per axis.
        #[arg(long, default_value_t = 128)]
        nodes: usize,
        #[arg(long, default_value_t = 8.0)]
        half_width: f64,
    },
    /// One walk, optionally with its path.
    Walk {
        #[arg(long)]
        start: String,
        /// `pair:H` or `dirichlet:GAMMA:BETA`.
        #[arg(long)]
        kernel: WalkKernel,
        #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
        max_steps: u64,
        /// Record every THIN-th point; 0 records no path.
        #[arg(long, default_value_t = 1)]
        thin: u64,
    },
    /// Absorption frequencies and goodness of fit for many walks.
    Ensemble {
        #[arg(long)]
        start: String,
        #[arg(long)]
        kernel: WalkKernel,
        #[arg(long, default_value_t = 10_000)]
        count: u64,
        #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
        max_steps: u64,
    },
    /// Exact absorption probabilities of the lattice walks.
    Oracle {
        #[arg(long, conflicts_with = "lattice", required_unless_present = "lattice")]
        gamblers_ruin: bool,
        #[arg(long)]
        lattice: bool,
        /// Integer start: K for gambler's ruin, comma-separated counts for the lattice.
        #[arg(long)]
        start: String,
        /// Grid resolution M.
        #[arg(long)]
        grid: u32,
    },
    /// Sector weights along a block-Hamiltonian trajectory.
    Evolve {
        /// Block Hamiltonian file.
        #[arg(long)]
        hamiltonian: PathBuf,
        /// Joint state file.
        #[arg(long, conflicts_with = "start", required_unless_present = "start")]
        state: Option<PathBuf>,
        /// Sector weights of a product initial state.
        #[arg(long)]
        start: Option<String>,
        /// Comma-separated times.
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<f64>,
    },
    /// Sector-invariance and block-form checks on a dense operator.
    Check {
        #[arg(long)]
        hamiltonian: PathBuf,
        /// `m,d_1,...,d_n`; defaults to the dims stored in the file.
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
    },
    /// Full pipeline from a scenario file or the two-slit builder.
    Scenario(ScenarioArgs),
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    #[arg(long, conflicts_with = "two_slit", required_unless_present = "two_slit")]
    config: Option<PathBuf>,
    #[arg(long)]
    two_slit: bool,
    #[arg(long, default_value_t = 4.0)]
    separation: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    kz: f64,
    #[arg(long, default_value_t = 16)]
    strips: usize,
    #[arg(long, default_value_t = 8.0)]
    extent: f64,
    /// Override the number of walks.
    #[arg(long)]
    walks: Option<u64>,
    /// Override the kernel.
    #[arg(long)]
    kernel: Option<WalkKernel>,
    /// Override quadrature nodes per axis.
    #[arg(long)]
    nodes: Option<usize>,
}

enum Outcome {
    Ok,
    CheckFailed,
}

/// One named output file.
struct Artifact {
    name: String,
    bytes: Vec<u8>,
}

#[derive(Serialize)]
struct FileEntry {
    name: String,
    sha256: String,
}

#[derive(Serialize)]
struct CliManifest {
    tool: &'static str,
    version: &'static str,
    command: String,
    args: Vec<String>,
    seed: Option<u64>,
    files: Vec<FileEntry>,
}

struct Ctx {
    global: Global,
    argv: Vec<String>,
}

impl Ctx {
    fn warn(&self, msg: &str) {
        if !self.global.quiet {
            eprintln!("warning: {msg}");
        }
    }

    fn info(&self, msg: &str) {
        if !self.global.quiet {
            eprintln!("{msg}");
        }
    }

    fn format(&self, default: Format) -> Format {
        self.global.format.unwrap_or(default)
    }

    fn seed(&self) -> u64 {
        self.global.seed.unwrap_or(0)
    }

    /// Prints the artifact to stdout, or writes it with a manifest under `--out`.
    fn emit(&self, command: &str, artifact: Artifact) -> Result<()> {
        match &self.global.out {
            None => {
                use std::io::Write;
                std::io::stdout().write_all(&artifact.bytes)?;
                Ok(())
            }
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join(&artifact.name), &artifact.bytes)?;
                let manifest = CliManifest {
                    tool: "bornwalk",
                    version: env!("CARGO_PKG_VERSION"),
                    command: command.into(),
                    args: self.argv.clone(),
                    seed: self.global.seed,
                    files: vec![FileEntry {
                        sha256: sha256_hex(&artifact.bytes),
                        name: artifact.name,
                    }],
                };
                std::fs::write(dir.join(harness::MANIFEST_FILE), to_json_bytes(&manifest)?)?;
                self.info(&format!("wrote {}", dir.display()));
                Ok(())
            }
        }
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))
}

fn json_artifact<T: Serialize>(stem: &str, value: &T) -> Result<Artifact> {
    Ok(Artifact {
        name: format!("{stem}.json"),
        bytes: to_json_bytes(value)?,
    })
}

fn csv_artifact(stem: &str, text: String) -> Artifact {
    Artifact {
        name: format!("{stem}.csv"),
        bytes: text.into_bytes(),
    }
}

fn parse_reals(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::config(what, format!("'{t}' is not a number")))
        })
        .collect()
}

/// Comma-separated start point; renormalized with a warning when its sum is
/// off by more than `START_SUM_WARN`.
fn parse_start(ctx: &Ctx, s: &str) -> Result<SimplexPoint> {
    let v = parse_reals(s, "start")?;
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::config("start", "coordinates must be finite and non-negative"));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > START_SUM_WARN {
        ctx.warn(&format!("start sums to {sum}; normalizing"));
    }
    SimplexPoint::normalized(v)
}

/// Shortest decimal that is stable at 15 significant digits.
fn trim_float(x: f64) -> String {
    let s = format!("{x:.15}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".into()
    } else {
        s.into()
    }
}

fn cmd_born(ctx: &Ctx, wave: &Path, array: &Path, nodes: usize, half_width: f64) -> Result<Outcome> {
    let wave: WaveFunction = read_json(wave)?;
    wave.validate()?;
    let array: DetectorArray = read_json(array)?;
    let q = QuadratureSpec {
        nodes: [nodes; 3],
        half_width,
    };
    let w = born_weights(&wave, &array, &q)?;
    let artifact = match ctx.format(Format::Json) {
        Format::Json => {
            #[derive(Serialize)]
            struct Weights<'a> {
                weights: &'a SimplexPoint,
                digest: String,
            }
            json_artifact(
                "weights",
                &Weights {
                    weights: &w,
                    digest: harness::weights_digest(&w),
                },
            )?
        }
        Format::Csv => csv_artifact("weights", weights_csv(&w)),
    };
    ctx.emit("born", artifact)?;
    Ok(Outcome::Ok)
}

fn cmd_walk(ctx: &Ctx, start: &str, kernel: &WalkKernel, max_steps: u64, thin: u64) -> Result<Outcome> {
    let start = parse_start(ctx, start)?;
    let run = run_walk(&start, kernel, ctx.seed(), max_steps, thin)?;
    if run.absorbed_at.is_none() {
        ctx.warn(&format!("walk not absorbed after {max_steps} steps"));
    }
    let artifact = match ctx.format(Format::Json) {
        Format::Json => json_artifact("walk", &run)?,
        Format::Csv => csv_artifact("path", run.path_csv()),
    };
    ctx.emit("walk", artifact)?;
    Ok(Outcome::Ok)
}

fn cmd_ensemble(ctx: &Ctx, start: &str, kernel: &WalkKernel, count: u64, max_steps: u64) -> Result<Outcome> {
    let start = parse_start(ctx, start)?;
    let report = ensemble(&start, kernel, count, ctx.seed(), max_steps)?;
    let artifact = match ctx.format(Format::Json) {
        Format::Json => json_artifact("ensemble", &report)?,
        Format::Csv => {
            let mut out = String::from("vertex,expected,count,freq\n");
            for (i, (c, f)) in report.counts.iter().zip(&report.freq).enumerate() {
                out.push_str(&format!("{},{},{c},{f}\n", i + 1, start[i]));
            }
            csv_artifact("ensemble", out)
        }
    };
    ctx.emit("ensemble", artifact)?;
    Ok(Outcome::Ok)
}

fn cmd_oracle(ctx: &Ctx, gamblers: bool, start: &str, grid: u32) -> Result<Outcome> {
    let counts = start
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| Error::config("start", format!("'{t}' is not a non-negative integer")))
        })
        .collect::<Result<Vec<u32>>>()?;
    let artifact = if gamblers {
        let [k] = counts[..] else {
            return Err(Error::config("start", "gambler's ruin takes a single integer"));
        };
        let p = gamblers_ruin(k as u64, grid as u64)?;
        match ctx.global.format {
            None => Artifact {
                name: "oracle.txt".into(),
                bytes: format!("{}\n", trim_float(p)).into_bytes(),
            },
            Some(Format::Json) => json_artifact(
                "oracle",
                &OracleReport {
                    start: vec![k, grid - k.min(grid)],
                    absorption: vec![p, 1.0 - p],
                    m: grid,
                },
            )?,
            Some(Format::Csv) => csv_artifact("oracle", format!("k,M,probability\n{k},{grid},{p}\n")),
        }
    } else {
        let chain = LatticeChain::new(counts.len(), grid)?;
        let absorption = lattice_absorption(&chain, &counts)?;
        let report = OracleReport {
            start: counts,
            absorption,
            m: grid,
        };
        match ctx.format(Format::Json) {
            Format::Json => json_artifact("oracle", &report)?,
            Format::Csv => {
                let mut out = String::from("vertex,probability\n");
                for (i, p) in report.absorption.iter().enumerate() {
                    out.push_str(&format!("{},{p}\n", i + 1));
                }
                csv_artifact("oracle", out)
            }
        }
    };
    ctx.emit("oracle", artifact)?;
    Ok(Outcome::Ok)
}

/// Apparatus in its first basis state, particle amplitude `sqrt(a_i)` on the
/// first basis state of each sector.
fn product_from_weights(dims: &Dims, a: &SimplexPoint) -> Result<JointState> {
    if a.dim() != dims.n() {
        return Err(Error::DimensionMismatch {
            expected: dims.n(),
            got: a.dim(),
        });
    }
    let mut g = CVector::zeros(dims.m());
    g[0] = Complex64::new(1.0, 0.0);
    let phi: Vec<CVector> = dims
        .d()
        .iter()
        .zip(a.coords())
        .map(|(&d, &w)| {
            let mut v = CVector::zeros(d);
            v[0] = Complex64::new(w.sqrt(), 0.0);
            v
        })
        .collect();
    product_state(&g, &phi, dims)
}

fn cmd_evolve(
    ctx: &Ctx,
    hamiltonian: &Path,
    state: Option<&Path>,
    start: Option<&str>,
    times: &[f64],
) -> Result<Outcome> {
    let file: BlockHamiltonianFile = read_json(hamiltonian)?;
    let h = BlockHamiltonian::try_from(file)?;
    let s0 = match (state, start) {
        (Some(p), _) => {
            let f: JointStateFile = read_json(p)?;
            if &f.dims != h.dims() {
                return Err(Error::config("state.dims", "does not match the Hamiltonian"));
            }
            JointState::try_from(f)?
        }
        (None, Some(a)) => product_from_weights(h.dims(), &parse_start(ctx, a)?)?,
        (None, None) => unreachable!("clap requires one of --state, --start"),
    };
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::config("times", "times must be finite"));
    }
    let states = evolve_many(&h, &s0, times)?;
    let artifact = match ctx.format(Format::Json) {
        Format::Json => {
            #[derive(Serialize)]
            struct Sample {
                t: f64,
                a: SimplexPoint,
            }
            let traj: Vec<Sample> = times
                .iter()
                .zip(&states)
                .map(|(&t, s)| Sample { t, a: simplex_map(s) })
                .collect();
            json_artifact("trajectory", &traj)?
        }
        Format::Csv => csv_artifact("trajectory", trajectory_csv(times, &states)),
    };
    ctx.emit("evolve", artifact)?;
    Ok(Outcome::Ok)
}

fn cmd_check(ctx: &Ctx, hamiltonian: &Path, dims: Option<&[usize]>) -> Result<Outcome> {
    let file: DenseOperatorFile = read_json(hamiltonian)?;
    let dims = match (dims, &file.dims) {
        (Some(v), _) => {
            let (&m, d) = v
                .split_first()
                .ok_or_else(|| Error::config("dims", "expected m,d_1,...,d_n"))?;
            Dims::new(m, d.to_vec())?
        }
        (None, Some(d)) => d.clone(),
        (None, None) => return Err(Error::config("dims", "not given and not stored in the operator file")),
    };
    let h = file.matrix()?;

    #[derive(Serialize)]
    struct Subset {
        /// 1-based sector labels.
        sectors: Vec<usize>,
        invariant: bool,
    }
    #[derive(Serialize)]
    struct CheckReport {
        hermitian_defect: f64,
        verify_form: bool,
        subsets: Vec<Subset>,
        pass: bool,
    }
    let form = verify_form(&h, &dims)?;
    let subsets = all_subsets(dims.n())
        .map(|w| {
            Ok(Subset {
                invariant: check_invariance(&h, &dims, &w)?,
                sectors: w.iter().map(|i| i + 1).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pass = form && subsets.iter().all(|s| s.invariant);
    let report = CheckReport {
        hermitian_defect: hermitian_defect(&h),
        verify_form: form,
        subsets,
        pass,
    };
    let artifact = match ctx.format(Format::Json) {
        Format::Json => json_artifact("check", &report)?,
        Format::Csv => {
            let mut out = String::from("sectors,invariant\n");
            for s in &report.subsets {
                let label: Vec<String> = s.sectors.iter().map(|i| i.to_string()).collect();
                out.push_str(&format!("{},{}\n", label.join(" "), s.invariant));
            }
            out.push_str(&format!("verify_form,{}\n", report.verify_form));
            csv_artifact("check", out)
        }
    };
    ctx.emit("check", artifact)?;
    if pass {
        Ok(Outcome::Ok)
    } else {
        ctx.info("check failed");
        Ok(Outcome::CheckFailed)
    }
}

fn cmd_scenario(ctx: &Ctx, a: &ScenarioArgs) -> Result<Outcome> {
    let mut s: Scenario = match &a.config {
        Some(p) => read_json(p)?,
        None => harness::two_slit(a.separation, a.sigma, a.kz, a.strips, a.extent)?,
    };
    if let Some(seed) = ctx.global.seed {
        s.master_seed = seed;
    }
    if let Some(w) = a.walks {
        s.walks = w;
    }
    if let Some(k) = a.kernel {
        s.kernel = k;
    }
    if let Some(n) = a.nodes {
        s.quadrature.nodes = [n; 3];
    }
    let out = run_scenario(&s)?;
    if out.report.unabsorbed > 0 {
        ctx.warn(&format!("{} walks were not absorbed", out.report.unabsorbed));
    }
    match &ctx.global.out {
        Some(dir) => {
            out.write_to(dir)?;
            ctx.info(&format!("wrote {}", dir.display()));
        }
        None => {
            use std::io::Write;
            let bytes = match ctx.format(Format::Json) {
                Format::Json => out.report_json()?,
                Format::Csv => {
                    let mut csv = String::from("region_index,expected,count,freq\n");
                    let r = &out.report;
                    for i in 0..r.expected.len() {
                        csv.push_str(&format!("{},{},{},{}\n", i + 1, r.expected[i], r.counts[i], r.freq[i]));
                    }
                    csv.into_bytes()
                }
            };
            std::io::stdout().write_all(&bytes)?;
        }
    }
    Ok(Outcome::Ok)
}

fn dispatch(ctx: &Ctx, command: &Command) -> Result<Outcome> {
    match command {
        Command::Born {
            wave,
            array,
            nodes,
            half_width,
        } => cmd_born(ctx, wave, array, *nodes, *half_width),
        Command::Walk {
            start,
            kernel,
            max_steps,
            thin,
        } => cmd_walk(ctx, start, kernel, *max_steps, *thin),
        Command::Ensemble {
            start,
            kernel,
            count,
            max_steps,
        } => cmd_ensemble(ctx, start, kernel, *count, *max_steps),
        Command::Oracle {
            gamblers_ruin,
            lattice: _,
            start,
            grid,
        } => cmd_oracle(ctx, *gamblers_ruin, start, *grid),
        Command::Evolve {
            hamiltonian,
            state,
            start,
            times,
        } => cmd_evolve(ctx, hamiltonian, state.as_deref(), start.as_deref(), times),
        Command::Check { hamiltonian, dims } => cmd_check(ctx, hamiltonian, dims.as_deref()),
        Command::Scenario(a) => cmd_scenario(ctx, a),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let ctx = Ctx {
        global: cli.global,
        argv: argv.into_iter().skip(1).collect(),
    };

    let result = match ctx.global.threads {
        Some(0) => Err(Error::config("threads", "must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config("threads", e.to_string()))
            .and_then(|pool| pool.install(|| dispatch(&ctx, &cli.command))),
        None => dispatch(&ctx, &cli.command),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_CONFIG })
        }
    }
}
