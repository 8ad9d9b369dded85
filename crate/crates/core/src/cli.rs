//! Command-line front end.
//!
//! Exit codes: 0 success, 2 unreadable or malformed input, 3 numerical
//! failure (the message names the failing module and operation), 4 a
//! condition check failed. Every run writes `<output>.manifest.json` next
//! to its main output, holding the input digests and numerical settings.
//!
//! `forward` CSV columns: `lambda_re, lambda_im, S_re, S_im, S1_re, S1_im,
//! C_re, C_im, C1_re, C1_im, Delta_re, Delta_im, W_re, W_im`.
//! `roundtrip` CSV columns: `quantity, error`.

use crate::coefficients::CoefficientPair;
use crate::conditions::{self, ConditionError};
use crate::entire::{EntireExpr, ExprJson};
use crate::forward::{dirichlet, Composite, ForwardError, ForwardSolver, Medium, Subspectrum};
use crate::halfinverse::{doubled_spectrum, solve_half_with, HalfError, HalfProblem};
use crate::inverse::{invert, parity_fix, InverseError};
use crate::kernels::{extract_triple, BoundaryTriple, Kernel, KernelError};
use crate::recovery::{fit_pq, recover_pq, RecoveryConfig, RecoveryError};
use crate::roots::Rect;
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::f64::consts::PI;

type C = Complex64;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numeric(String),
    Condition(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Condition(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Numeric(m) | CliError::Condition(m) => m,
        }
    }
}

fn numeric(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

impl From<InverseError> for CliError {
    fn from(e: InverseError) -> Self {
        match e {
            InverseError::Incomplete { .. } => CliError::Condition(e.to_string()),
            _ => numeric(e),
        }
    }
}

impl From<HalfError> for CliError {
    fn from(e: HalfError) -> Self {
        match &e {
            HalfError::Condition(_)
            | HalfError::Inverse {
                source: InverseError::Incomplete { .. },
                ..
            } => CliError::Condition(e.to_string()),
            HalfError::Labels(..) | HalfError::Interval(..) => CliError::Input(e.to_string()),
            _ => numeric(e),
        }
    }
}

impl From<ConditionError> for CliError {
    fn from(e: ConditionError) -> Self {
        numeric(e)
    }
}

impl From<RecoveryError> for CliError {
    fn from(e: RecoveryError) -> Self {
        match e {
            RecoveryError::Config(_) | RecoveryError::TooFewData { .. } => CliError::Input(e.to_string()),
            _ => numeric(e),
        }
    }
}

impl From<ForwardError> for CliError {
    fn from(e: ForwardError) -> Self {
        numeric(e)
    }
}

impl From<KernelError> for CliError {
    fn from(e: KernelError) -> Self {
        numeric(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "pencilspec", version, about = "Forward and inverse spectral problems for quadratic pencils")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Tabulate S, S^[1], C, C^[1], Delta and the Wronskian on a lambda grid.
    Forward(ForwardArgs),
    /// Eigenvalues inside a search box.
    Spectrum(SpectrumArgs),
    /// Boundary triple (and optionally Weyl data) from a subspectrum.
    Invert(InvertArgs),
    /// Coefficients from Weyl data.
    Recover(RecoverArgs),
    /// Condition diagnostics for a subspectrum.
    Check(CheckArgs),
    /// Half-interval inverse problem on (0, 2pi).
    Half(HalfArgs),
    /// Generate a problem, invert its Dirichlet spectrum and tabulate the errors.
    Roundtrip(RoundtripArgs),
}

#[derive(Args, Debug)]
pub struct ForwardArgs {
    #[arg(long)]
    pub problem: PathBuf,
    /// `a:b:n` on the real axis.
    #[arg(long, allow_hyphen_values = true)]
    pub lambda_grid: String,
    /// Imaginary part added to every grid point.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub im: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub problem: PathBuf,
    /// `re0:re1:im0:im1`.
    #[arg(long, allow_hyphen_values = true)]
    pub search: String,
    /// Expected offset of the eigenvalues from the lattice; defaults to the mean of p.
    #[arg(long, allow_hyphen_values = true)]
    pub hint: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct InvertArgs {
    #[arg(long)]
    pub subspectrum: PathBuf,
    /// `re` or `re,im`; overrides the value stored with the subspectrum.
    #[arg(long, allow_hyphen_values = true)]
    pub omega0_mod1: Option<String>,
    #[arg(long)]
    pub f1: Option<PathBuf>,
    #[arg(long)]
    pub f2: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub trunc: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub emit_weyl: Option<PathBuf>,
    /// Number K of zeros theta_k on each side.
    #[arg(long, default_value_t = 24)]
    pub weyl_count: usize,
}

#[derive(Args, Debug)]
pub struct RecoverArgs {
    #[arg(long)]
    pub weyl: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[arg(long)]
    pub subspectrum: PathBuf,
    #[arg(long)]
    pub f1: Option<PathBuf>,
    #[arg(long)]
    pub f2: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub trunc: usize,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Args, Debug)]
pub struct HalfArgs {
    #[arg(long)]
    pub problem: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub trunc: usize,
    #[arg(long)]
    pub recover: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Largest accepted spread of the sigma shift across probes.
    #[arg(long, default_value_t = crate::inverse::SHIFT_SPREAD)]
    pub tol: f64,
    #[arg(long)]
    pub verify: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Case {
    Free,
    Constant,
    Cosine,
    Random,
}

#[derive(Args, Debug)]
pub struct RoundtripArgs {
    #[arg(long, value_enum, default_value_t = Case::Free)]
    pub case: Case,
    /// Coefficients on (0, pi); overrides `--case`.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub trunc: usize,
    #[arg(long)]
    pub recover: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Input file with its digest.
struct Loaded<T> {
    value: T,
    digest: InputDigest,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub inputs: Vec<InputDigest>,
    pub tolerances: BTreeMap<String, f64>,
    pub truncation: Option<usize>,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: Vec::new(),
            tolerances: BTreeMap::new(),
            truncation: None,
            seed: None,
            outputs: Vec::new(),
        }
    }

    fn write_next_to(&self, out: &Path) -> Result<(), CliError> {
        let mut name = out.as_os_str().to_owned();
        name.push(".manifest.json");
        write_json(Path::new(&name), self)
    }
}

fn load<T: DeserializeOwned>(path: &Path) -> Result<Loaded<T>, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Input(format!("cli: read {}: {e}", path.display())))?;
    let value = serde_json::from_slice(&bytes).map_err(|e| CliError::Input(format!("cli: parse {}: {e}", path.display())))?;
    Ok(Loaded {
        value,
        digest: InputDigest {
            path: path.display().to_string(),
            sha256: format!("{:x}", Sha256::digest(&bytes)),
        },
    })
}

fn load_expr(path: Option<&PathBuf>, default: EntireExpr, m: &mut RunManifest) -> Result<EntireExpr, CliError> {
    let Some(p) = path else { return Ok(default) };
    let l: Loaded<ExprJson> = load(p)?;
    m.inputs.push(l.digest);
    let e: EntireExpr = l.value.into();
    if has_solver(&e) {
        return Err(CliError::Input(format!("cli: {}: solver-backed expressions cannot be read from a file", p.display())));
    }
    Ok(e)
}

fn has_solver(e: &EntireExpr) -> bool {
    serde_json::to_string(&e.to_json()).map(|s| s.contains("\"solver\"")).unwrap_or(true)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), CliError> {
    let s = serde_json::to_string_pretty(v).map_err(numeric)?;
    std::fs::write(path, s + "\n").map_err(|e| CliError::Input(format!("cli: write {}: {e}", path.display())))
}

fn write_text(path: &Path, s: &str) -> Result<(), CliError> {
    std::fs::write(path, s).map_err(|e| CliError::Input(format!("cli: write {}: {e}", path.display())))
}

fn parse_floats(s: &str, n: usize, what: &str) -> Result<Vec<f64>, CliError> {
    let v: Vec<f64> = s
        .split(':')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Input(format!("cli: {what} `{s}`: {e}")))?;
    if v.len() != n || v.iter().any(|x| !x.is_finite()) {
        return Err(CliError::Input(format!("cli: {what} `{s}`: expected {n} finite fields")));
    }
    Ok(v)
}

fn parse_complex(s: &str) -> Result<C, CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| CliError::Input(format!("cli: complex `{s}`: {e}")));
    match parts.as_slice() {
        [re] => Ok(C::new(num(re)?, 0.0)),
        [re, im] => Ok(C::new(num(re)?, num(im)?)),
        _ => Err(CliError::Input(format!("cli: complex `{s}`: expected re or re,im"))),
    }
}

/// Coefficient pieces and boundary functions for `forward` and `spectrum`.
#[derive(Debug, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub pieces: Vec<CoefficientPair>,
    #[serde(default)]
    pub f1: Option<ExprJson>,
    #[serde(default)]
    pub f2: Option<ExprJson>,
}

fn load_problem(path: &Path, m: &mut RunManifest) -> Result<(Composite, EntireExpr, EntireExpr), CliError> {
    let l: Loaded<ProblemFile> = load(path)?;
    m.inputs.push(l.digest);
    let medium = Composite::new(l.value.pieces).map_err(|e| CliError::Input(e.to_string()))?;
    let (d1, d2) = dirichlet();
    let f1 = l.value.f1.map(EntireExpr::from).unwrap_or(d1);
    let f2 = l.value.f2.map(EntireExpr::from).unwrap_or(d2);
    if has_solver(&f1) || has_solver(&f2) {
        return Err(CliError::Input(format!("cli: {}: solver-backed expressions cannot be read from a file", path.display())));
    }
    Ok((medium, f1, f2))
}

fn cmd_forward(a: &ForwardArgs) -> Result<(), CliError> {
    let mut m = RunManifest::new("forward");
    let (medium, f1, f2) = load_problem(&a.problem, &mut m)?;
    let g = parse_floats(&a.lambda_grid, 3, "lambda grid")?;
    let n = g[2] as usize;
    if n == 0 || g[2].fract() != 0.0 {
        return Err(CliError::Input(format!("cli: lambda grid `{}`: n must be a positive integer", a.lambda_grid)));
    }
    let solver = ForwardSolver::default();
    let mut csv = String::from("lambda_re,lambda_im,S_re,S_im,S1_re,S1_im,C_re,C_im,C1_re,C1_im,Delta_re,Delta_im,W_re,W_im\n");
    for j in 0..n {
        let t = if n == 1 { 0.0 } else { j as f64 / (n - 1) as f64 };
        let lam = C::new(g[0] + (g[1] - g[0]) * t, a.im);
        let fm = solver.fundamental(&medium, lam)?;
        let ent = |e: crate::entire::EntireError| numeric(format!("forward: char_fn: {e}"));
        let delta = f1.eval(lam).map_err(ent)? * fm.s.y1 + f2.eval(lam).map_err(ent)? * fm.s.y;
        let cols = [lam, fm.s.y, fm.s.y1, fm.c.y, fm.c.y1, delta, fm.wronskian()];
        let line: Vec<String> = cols.iter().flat_map(|z| [format!("{:e}", z.re), format!("{:e}", z.im)]).collect();
        csv.push_str(&line.join(","));
        csv.push('\n');
    }
    write_text(&a.out, &csv)?;
    m.outputs.push(a.out.display().to_string());
    m.write_next_to(&a.out)
}

fn cmd_spectrum(a: &SpectrumArgs) -> Result<(), CliError> {
    let mut m = RunManifest::new("spectrum");
    let (medium, f1, f2) = load_problem(&a.problem, &mut m)?;
    let b = parse_floats(&a.search, 4, "search box")?;
    let hint = C::new(a.hint.unwrap_or(medium.mean_p().re), 0.0);
    let sub = ForwardSolver::default().eigenvalues(&medium, &f1, &f2, Rect::new((b[0], b[1]), (b[2], b[3])), Some(hint))?;
    write_json(&a.out, &sub)?;
    m.outputs.push(a.out.display().to_string());
    m.write_next_to(&a.out)
}

fn cmd_invert(a: &InvertArgs) -> Result<(), CliError> {
    let mut m = RunManifest::new("invert");
    let l: Loaded<Subspectrum> = load(&a.subspectrum)?;
    m.inputs.push(l.digest);
    let mut sub = l.value;
    if let Some(w) = &a.omega0_mod1 {
        sub = Subspectrum::new(sub.values().to_vec(), parse_complex(w)?).map_err(|e| CliError::Input(e.to_string()))?;
    }
    let (d1, d2) = dirichlet();
    let f1 = load_expr(a.f1.as_ref(), d1, &mut m)?;
    let f2 = load_expr(a.f2.as_ref(), d2, &mut m)?;
    m.truncation = Some(a.trunc);
    m.tolerances.insert("ridge".into(), crate::inverse::RIDGE);
    let inv = invert(&sub, &f1, &f2, a.trunc)?;
    write_json(&a.out, &inv.triple)?;
    m.outputs.push(a.out.display().to_string());
    if let Some(w) = &a.emit_weyl {
        let wd = inv.weyl(a.weyl_count)?;
        write_json(w, &wd)?;
        m.outputs.push(w.display().to_string());
    }
    eprintln!(
        "rows {} rank {} of {} condition {:.3e}",
        inv.rows,
        inv.solve.rank,
        inv.solve.needed,
        inv.solve.condition()
    );
    m.write_next_to(&a.out)
}

fn load_config(path: Option<&PathBuf>, m: &mut RunManifest) -> Result<RecoveryConfig, CliError> {
    let cfg = match path {
        Some(p) => {
            let l: Loaded<RecoveryConfig> = load(p)?;
            m.inputs.push(l.digest);
            l.value
        }
        None => RecoveryConfig::default(),
    };
    cfg.validate()?;
    m.tolerances.insert("misfit_tol".into(), cfg.misfit_tol);
    m.tolerances.insert("tikhonov".into(), cfg.tikhonov);
    Ok(cfg)
}

fn cmd_recover(a: &RecoverArgs) -> Result<(), CliError> {
    let mut m = RunManifest::new("recover");
    let l: Loaded<crate::inverse::WeylData> = load(&a.weyl)?;
    m.inputs.push(l.digest);
    let cfg = load_config(a.config.as_ref(), &mut m)?;
    let rec = recover_pq(&l.value, &cfg)?;
    eprintln!("misfit {:.3e} after {} iterations", rec.misfit, rec.iterations);
    write_json(&a.out, &rec.pair)?;
    m.outputs.push(a.out.display().to_string());
    m.write_next_to(&a.out)
}

fn cmd_check(a: &CheckArgs) -> Result<(), CliError> {
    let mut m = RunManifest::new("check");
    let l: Loaded<Subspectrum> = load(&a.subspectrum)?;
    m.inputs.push(l.digest);
    let (d1, d2) = dirichlet();
    let f1 = load_expr(a.f1.as_ref(), d1, &mut m)?;
    let f2 = load_expr(a.f2.as_ref(), d2, &mut m)?;
    m.truncation = Some(a.trunc);
    m.tolerances.insert("S_threshold".into(), conditions::S_THRESHOLD);
    m.tolerances.insert("A_im_bound".into(), conditions::IM_BOUND);
    let r = conditions::report(&l.value, &f1, &f2, a.trunc)?;
    write_json(&a.report, &r)?;
    m.outputs.push(a.report.display().to_string());
    m.write_next_to(&a.report)?;
    if r.passed() {
        Ok(())
    } else {
        Err(CliError::Condition(format!(
            "conditions: report: S {} A {} moment section {} ({})",
            r.s_ok, r.a_ok, r.moments.complete, r.label
        )))
    }
}

fn cmd_half(a: &HalfArgs) -> Result<(), CliError> {
    let mut m = RunManifest::new("half");
    let l: Loaded<HalfProblem> = load(&a.problem)?;
    m.inputs.push(l.digest);
    let cfg = load_config(a.recover.as_ref(), &mut m)?;
    m.truncation = Some(a.trunc);
    m.tolerances.insert("shift_spread".into(), a.tol);
    let hp = l.value;
    let sol = solve_half_with(&hp, &cfg, a.trunc, a.tol)?;
    write_json(&a.out, &sol.left)?;
    m.outputs.push(a.out.display().to_string());
    println!("omega0 {} misfit {:.3e} sigma shift {}", sol.omega0, sol.misfit, sol.sigma_shift);
    if a.verify {
        let count = hp.spectrum.len() / 2;
        let again = doubled_spectrum(&sol.left, &hp.known_half, count)?;
        if again.len() != hp.spectrum.len() {
            println!("verify: {} eigenvalues versus {} given", again.len(), hp.spectrum.len());
        } else {
            let d = again.values().iter().zip(hp.spectrum.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            println!("verify: max spectrum misfit {d:.3e}");
        }
    }
    m.write_next_to(&a.out)
}

/// Errors of one inverse round trip from Dirichlet data.
#[derive(Debug, Clone, Serialize)]
pub struct RoundtripReport {
    /// `‖c_rec - c_true‖ / ‖c_true‖` over the `K` coefficients, absolute when they vanish.
    pub kernel: f64,
    /// Distance of each recovered `θ_k` to the nearest Dirichlet eigenvalue.
    pub theta: f64,
    /// `max|ΔS| / max|S|` on 200 points of `[-10, 10]`.
    pub s: f64,
    /// Relative `L₂` errors on `(0, π)`, absolute when the truth vanishes; `None` when the fit failed.
    pub p: Option<f64>,
    pub sigma: Option<f64>,
    pub misfit: Option<f64>,
    /// Set when the fit failed or ended above `misfit_tol`; the errors above then describe where it stopped.
    pub recovery_error: Option<String>,
    pub eigenvalues: usize,
    pub condition: f64,
}

impl RoundtripReport {
    pub fn table(&self) -> String {
        let mut s = String::from("quantity,error\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_else(|| "nan".into());
        let _ = writeln!(s, "kernel_l2,{:e}", self.kernel);
        let _ = writeln!(s, "theta_max,{:e}", self.theta);
        let _ = writeln!(s, "s_rel,{:e}", self.s);
        let _ = writeln!(s, "p_l2,{}", opt(self.p));
        let _ = writeln!(s, "sigma_l2,{}", opt(self.sigma));
        let _ = writeln!(s, "misfit,{}", opt(self.misfit));
        s
    }
}

/// `‖a - b‖ / ‖b‖` in `L₂(0, π)` by the midpoint rule; absolute when `b` vanishes.
pub fn relative_l2(a: impl Fn(f64) -> C, b: impl Fn(f64) -> C) -> f64 {
    let n = 512;
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..n {
        let x = PI * (j as f64 + 0.5) / n as f64;
        num += (a(x) - b(x)).norm_sqr();
        den += b(x).norm_sqr();
    }
    if den > 1e-24 * n as f64 {
        (num / den).sqrt()
    } else {
        (num / n as f64).sqrt()
    }
}

/// Dirichlet spectrum `|λ - ω₀| ≤ T + 1/2`, inversion at truncation `T`, recovery and error table.
pub fn roundtrip(cp: &CoefficientPair, truncation: usize, cfg: &RecoveryConfig) -> Result<RoundtripReport, CliError> {
    let (f1, f2) = dirichlet();
    let mean = cp.mean_p();
    let half = truncation as f64 + 0.5;
    let sub = ForwardSolver::default().eigenvalues(cp, &f1, &f2, Rect::new((mean.re - half, mean.re + half), (mean.im - 3.0, mean.im + 3.0)), Some(mean))?;
    let inv = invert(&sub, &f1, &f2, truncation)?;
    let truth = extract_triple(cp, truncation)?;
    let fixed = parity_fix(&inv.triple, mean)?;
    let kernel = coeff_error(&fixed, &truth);
    let solver = ForwardSolver::default();
    let (mut worst, mut smax) = (0.0f64, 0.0f64);
    for j in 0..200 {
        let lam = C::new(-10.0 + 20.0 * (j as f64 + 0.5) / 200.0, 0.0);
        let s = solver.boundary_s(cp, lam)?.y;
        worst = worst.max((fixed.eval_s(lam) - s).norm());
        smax = smax.max(s.norm());
    }
    let count = cfg.max_index.min(truncation.saturating_sub(4));
    let wd = inv.weyl(count)?;
    let theta = wd
        .thetas
        .iter()
        .map(|t| sub.values().iter().map(|v| (v - t).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    let sigma0 = cp.eval_sigma(0.0).unwrap_or_default();
    let (p, sigma, misfit, recovery_error) = match fit_pq(&wd, cfg) {
        Ok(r) => (
            Some(relative_l2(|x| r.pair.eval_p(x).unwrap_or_default(), |x| cp.eval_p(x).unwrap_or_default())),
            Some(relative_l2(|x| r.pair.eval_sigma(x).unwrap_or_default(), |x| cp.eval_sigma(x).unwrap_or_default() - sigma0)),
            Some(r.misfit),
            (r.misfit > cfg.misfit_tol).then(|| {
                RecoveryError::NotConverged {
                    iterations: r.iterations,
                    misfit: r.misfit,
                    tol: cfg.misfit_tol,
                }
                .to_string()
            }),
        ),
        Err(e) => (None, None, None, Some(e.to_string())),
    };
    Ok(RoundtripReport {
        kernel,
        theta,
        s: worst / smax.max(f64::MIN_POSITIVE),
        p,
        sigma,
        misfit,
        recovery_error,
        eigenvalues: sub.len(),
        condition: inv.solve.condition(),
    })
}

fn coeff_error(a: &BoundaryTriple, b: &BoundaryTriple) -> f64 {
    let n = a.truncation().min(b.truncation()) as i64;
    let (mut num, mut den) = (0.0, 0.0);
    for j in -n..=n {
        num += (a.coeff(Kernel::K, j) - b.coeff(Kernel::K, j)).norm_sqr();
        den += b.coeff(Kernel::K, j).norm_sqr();
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

/// Coefficients for the generated round-trip cases.
pub fn case_pair(case: Case, seed: u64) -> CoefficientPair {
    let zero = |_: f64| C::new(0.0, 0.0);
    match case {
        Case::Free => CoefficientPair::zero((0.0, PI)),
        Case::Constant => CoefficientPair::constant((0.0, PI), C::new(1.0, 0.0), C::new(0.0, 0.0)),
        Case::Cosine => CoefficientPair::from_fns((0.0, PI), 257, |x| C::new(0.3 * x.cos(), 0.0), zero, vec![]).expect("smooth samples"),
        Case::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.3..0.3)).collect();
            CoefficientPair::from_fns(
                (0.0, PI),
                257,
                move |x| C::new(a.iter().enumerate().map(|(j, c)| c * (j as f64 * x).cos()).sum(), 0.0),
                zero,
                vec![],
            )
            .expect("smooth samples")
        }
    }
}

fn cmd_roundtrip(a: &RoundtripArgs) -> Result<(), CliError> {
    let mut m = RunManifest::new("roundtrip");
    let cp = match &a.problem {
        Some(p) => {
            let l: Loaded<CoefficientPair> = load(p)?;
            m.inputs.push(l.digest);
            l.value
        }
        None => case_pair(a.case, a.seed),
    };
    let cfg = load_config(a.recover.as_ref(), &mut m)?;
    m.truncation = Some(a.trunc);
    m.seed = Some(a.seed);
    let r = roundtrip(&cp, a.trunc, &cfg)?;
    let table = r.table();
    print!("{table}");
    write_text(&a.out, &table)?;
    m.outputs.push(a.out.display().to_string());
    m.write_next_to(&a.out)?;
    match r.recovery_error {
        Some(e) => Err(CliError::Numeric(e)),
        None => Ok(()),
    }
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Forward(a) => cmd_forward(a),
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::Invert(a) => cmd_invert(a),
        Command::Recover(a) => cmd_recover(a),
        Command::Check(a) => cmd_check(a),
        Command::Half(a) => cmd_half(a),
        Command::Roundtrip(a) => cmd_roundtrip(a),
    }
}

/// Parse, run, report; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}
