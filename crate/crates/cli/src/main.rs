//! Batch experiment driver. Parses a JSON experiment config, dispatches to
//! the numerical library, and writes fields, convergence tables, and
//! diagnostic CSVs plus a `manifest.json` hashing every artifact.
//!
//! Exit codes: 0 ok, 2 config/validation error (no partial outputs),
//! 3 numerical abort (boundary mass, caustics, non-convergent integral).

use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use heisen::field::AxisSpec;
use heisen::heat::{
    chernoff_evolve_heat, convergence_study, heat_step, write_convergence_csv, ConvergenceRow,
    HeatStepMethod, PotentialSpec,
};
use heisen::hgroup::{group_inv, group_mul, koranyi_gauge};
use heisen::magnetic::{
    export_kernel_csv, mehler_heat_kernel, oracle_evolve, KernelFlavor, MehlerKernelSpec,
};
use heisen::schrodinger::{
    chernoff_evolve_schrodinger, schrodinger_step, ShearMethod, StepOrder, VPotentialSpec,
};
use heisen::stochastic::{
    export_path_csv, export_tightness_csv, fk_estimate, interpolate_geodesic, sample_bm_levy,
    sample_jump_path, tightness_diagnostic, RngStream,
};
use heisen::{CoreError, Field, GaussianPacketSpec, GridSpec, HPoint};

// ---------------------------------------------------------------------------
// command line

#[derive(Parser)]
#[command(name = "heisen", version, about = "Heisenberg-group evolution experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Heat-semigroup Chernoff iteration (convergence table + field dump)
    Heat(RunArgs),
    /// Schrödinger-group Chernoff iteration
    Schrodinger(RunArgs),
    /// Feynman–Kac Monte-Carlo probe estimates
    Fk(RunArgs),
    /// Random-walk paths, geodesic interpolation, tightness table
    Walk(RunArgs),
    /// Sample an exact magnetic kernel onto a CSV
    DumpKernel(RunArgs),
    /// Run the built-in invariant suite; exits 0 on a clean tree
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config
    #[arg(long)]
    config: PathBuf,
    /// Override the config's output directory
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override the config's RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Cap worker parallelism
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    threads: Option<usize>,
}

// ---------------------------------------------------------------------------
// config schema

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentConfig {
    kind: Kind,
    #[serde(default)]
    grid: Option<GridConfig>,
    #[serde(default)]
    initial: Option<InitialConfig>,
    out_dir: PathBuf,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    heat: Option<HeatPlan>,
    #[serde(default)]
    schrodinger: Option<SchrodingerPlan>,
    #[serde(default)]
    fk: Option<FkPlan>,
    #[serde(default)]
    walk: Option<WalkPlan>,
    #[serde(default)]
    kernel: Option<KernelPlan>,
}

#[derive(Deserialize, PartialEq, Clone, Copy, Debug)]
#[serde(rename_all = "kebab-case")]
enum Kind {
    Heat,
    Schrodinger,
    Fk,
    Walk,
    DumpKernel,
    Verify,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AxisConfig {
    l: f64,
    n: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridConfig {
    z_axes: Vec<AxisConfig>,
    s_axis: AxisConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialConfig {
    center_z: Vec<f64>,
    #[serde(default)]
    center_s: f64,
    widths: Vec<f64>,
    #[serde(default)]
    momentum: Option<Vec<f64>>,
}

#[derive(Deserialize, Clone)]
#[serde(rename_all = "kebab-case")]
enum MethodConfig {
    Dense,
    Quadrature { q: usize },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HeatPlan {
    t: f64,
    n_list: Vec<usize>,
    #[serde(default = "default_dense")]
    method: MethodConfig,
    #[serde(default)]
    potential_c: f64,
    /// compare against the exact magnetic evolution (requires d = 1, c = 0)
    #[serde(default = "default_true")]
    oracle: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SchrodingerPlan {
    t: f64,
    n_list: Vec<usize>,
    #[serde(default = "default_dense")]
    shear: MethodConfig,
    #[serde(default = "default_sm")]
    order: String,
    #[serde(default)]
    potential_c: f64,
    #[serde(default = "default_true")]
    oracle: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FkPlan {
    t: f64,
    paths: usize,
    steps: usize,
    /// probe points, `2d + 1` coordinates each: `x¹..x^d, y¹..y^d, s`
    probes: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WalkPlan {
    d: usize,
    n: usize,
    horizon: f64,
    #[serde(default = "default_refine")]
    refine: usize,
    #[serde(default)]
    tightness: Option<TightnessPlan>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TightnessPlan {
    n_list: Vec<usize>,
    delta_list: Vec<f64>,
    eps: f64,
    paths: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelPlan {
    alpha: f64,
    t: f64,
    flavor: String,
    /// left kernel argument z; the CSV sweeps z' over a square grid
    #[serde(default)]
    z: [f64; 2],
    extent: f64,
    samples: usize,
}

fn default_dense() -> MethodConfig {
    MethodConfig::Dense
}
fn default_true() -> bool {
    true
}
fn default_sm() -> String {
    "sm".into()
}
fn default_refine() -> usize {
    4
}

// ---------------------------------------------------------------------------
// error handling / exit codes

enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::BoundaryMassAbort { .. }
            | CoreError::CausticProximity { .. }
            | CoreError::OscillatoryNonConvergent(_) => CliError::Numerical(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

fn bail(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

// ---------------------------------------------------------------------------

type Artifact = (String, Vec<u8>);

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            let (kind, msg, code) = match &e {
                CliError::Config(m) => ("config", m, 2),
                CliError::Numerical(m) => ("numerical", m, 3),
            };
            let payload = serde_json::json!({
                "error": { "kind": kind, "exit_code": code, "message": msg }
            });
            eprintln!("{payload}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}

fn cap_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // a second global-pool build (e.g. in tests) is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (args, kind): (RunArgs, Kind) = match cli.cmd {
        Cmd::Verify(v) => {
            cap_threads(v.threads);
            return verify();
        }
        Cmd::Heat(a) => (a, Kind::Heat),
        Cmd::Schrodinger(a) => (a, Kind::Schrodinger),
        Cmd::Fk(a) => (a, Kind::Fk),
        Cmd::Walk(a) => (a, Kind::Walk),
        Cmd::DumpKernel(a) => (a, Kind::DumpKernel),
    };
    cap_threads(args.threads);
    let raw = std::fs::read(&args.config)
        .map_err(|e| bail(format!("cannot read config {}: {e}", args.config.display())))?;
    let mut cfg: ExperimentConfig =
        serde_json::from_slice(&raw).map_err(|e| bail(format!("malformed config: {e}")))?;
    if cfg.kind != kind {
        return Err(bail(format!(
            "config kind {:?} does not match the invoked subcommand",
            cfg.kind
        )));
    }
    if let Some(dir) = args.out_dir {
        cfg.out_dir = dir;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }

    // all computation happens in memory; files are written only on success,
    // so validation or abort failures leave no partial outputs
    let artifacts = match kind {
        Kind::Heat => run_heat(&cfg)?,
        Kind::Schrodinger => run_schrodinger(&cfg)?,
        Kind::Fk => run_fk(&cfg)?,
        Kind::Walk => run_walk(&cfg)?,
        Kind::DumpKernel => run_dump_kernel(&cfg)?,
        Kind::Verify => unreachable!(),
    };
    write_artifacts(&cfg.out_dir, &raw, artifacts)
}

// ---------------------------------------------------------------------------
// config → core objects

fn build_grid(cfg: &ExperimentConfig) -> Result<GridSpec, CliError> {
    let g = cfg.grid.as_ref().ok_or_else(|| bail("missing \"grid\""))?;
    let z_axes: Vec<AxisSpec> = g.z_axes.iter().map(|a| AxisSpec { l: a.l, n: a.n }).collect();
    Ok(GridSpec::new(z_axes, AxisSpec { l: g.s_axis.l, n: g.s_axis.n })?)
}

fn build_packet(cfg: &ExperimentConfig, grid: &GridSpec) -> Result<Field, CliError> {
    let init = cfg.initial.as_ref().ok_or_else(|| bail("missing \"initial\""))?;
    let d = grid.dim();
    if init.center_z.len() != 2 * d {
        return Err(bail(format!(
            "initial.center_z needs {} coordinates for d = {d}",
            2 * d
        )));
    }
    let momentum = init.momentum.clone().unwrap_or_else(|| vec![0.0; 2 * d + 1]);
    let spec = GaussianPacketSpec {
        center: HPoint::new(init.center_z.clone(), init.center_s)?,
        widths: init.widths.clone(),
        momentum,
    };
    Ok(Field::make_packet(&spec, grid)?)
}

fn heat_method(m: &MethodConfig) -> HeatStepMethod {
    match m {
        MethodConfig::Dense => HeatStepMethod::DenseSpectral,
        MethodConfig::Quadrature { q } => HeatStepMethod::Quadrature { q: *q },
    }
}

// ---------------------------------------------------------------------------
// subcommands

fn run_heat(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    let plan = cfg.heat.as_ref().ok_or_else(|| bail("missing \"heat\" plan"))?;
    if plan.n_list.is_empty() {
        return Err(bail("heat.n_list must be non-empty"));
    }
    let grid = build_grid(cfg)?;
    let f0 = build_packet(cfg, &grid)?;
    let c = if plan.potential_c == 0.0 {
        PotentialSpec::Zero
    } else {
        PotentialSpec::Constant(plan.potential_c)
    };
    let method = heat_method(&plan.method);
    let mut artifacts = Vec::new();

    if plan.oracle {
        if grid.dim() != 1 {
            return Err(bail("heat.oracle requires d = 1"));
        }
        if plan.potential_c != 0.0 {
            return Err(bail("heat.oracle requires potential_c = 0"));
        }
        let oracle = oracle_evolve(&f0, plan.t, KernelFlavor::Heat)?;
        let mut rows = convergence_study(&f0, plan.t, &plan.n_list, &c, &method, &oracle)?;
        // wall time is not reproducible; zero it so reruns are byte-identical
        for r in &mut rows {
            r.wall_time = 0.0;
        }
        let mut csv = Vec::new();
        write_convergence_csv(&rows, &mut csv)?;
        artifacts.push(("convergence.csv".into(), csv));
    }

    let n_max = *plan.n_list.iter().max().unwrap();
    let out = chernoff_evolve_heat(&f0, plan.t, n_max, &c, &method)?;
    artifacts.push(("final.hfld".into(), dump_field(&out.field)?));
    artifacts.push(("summary.json".into(), evolve_summary(&f0, &out.field, &out.log, n_max)));
    Ok(artifacts)
}

fn run_schrodinger(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    let plan = cfg
        .schrodinger
        .as_ref()
        .ok_or_else(|| bail("missing \"schrodinger\" plan"))?;
    if plan.n_list.is_empty() {
        return Err(bail("schrodinger.n_list must be non-empty"));
    }
    let grid = build_grid(cfg)?;
    let f0 = build_packet(cfg, &grid)?;
    let shear = match &plan.shear {
        MethodConfig::Dense => ShearMethod::Dense,
        MethodConfig::Quadrature { .. } => {
            return Err(bail("schrodinger.shear must be \"dense\" or \"interpolated\""))
        }
    };
    let order = match plan.order.as_str() {
        "sm" => StepOrder::SM,
        "ms" => StepOrder::MS,
        o => return Err(bail(format!("unknown step order {o:?} (expected sm or ms)"))),
    };
    let v = if plan.potential_c == 0.0 {
        VPotentialSpec::zero()
    } else {
        VPotentialSpec::constant(plan.potential_c)
    };
    let mut artifacts = Vec::new();

    if plan.oracle {
        if grid.dim() != 1 {
            return Err(bail("schrodinger.oracle requires d = 1"));
        }
        if plan.potential_c != 0.0 {
            return Err(bail("schrodinger.oracle requires potential_c = 0"));
        }
        let oracle = oracle_evolve(&f0, plan.t, KernelFlavor::Schrodinger)?;
        let norm0 = f0.l2_norm();
        let mut rows = Vec::new();
        for &n in &plan.n_list {
            let out = chernoff_evolve_schrodinger(&f0, plan.t, n, &v, shear, order)?;
            let last = out.log.last().unwrap();
            rows.push(ConvergenceRow {
                n,
                method: "schrodinger-dense".into(),
                l2_error_vs_oracle: out.field.rel_l2_distance(&oracle),
                norm_drift: (last.l2_norm - norm0).abs(),
                boundary_mass: last.boundary_mass,
                wall_time: 0.0,
            });
        }
        let mut csv = Vec::new();
        write_convergence_csv(&rows, &mut csv)?;
        artifacts.push(("convergence.csv".into(), csv));
    }

    let n_max = *plan.n_list.iter().max().unwrap();
    let out = chernoff_evolve_schrodinger(&f0, plan.t, n_max, &v, shear, order)?;
    artifacts.push(("final.hfld".into(), dump_field(&out.field)?));
    artifacts.push(("summary.json".into(), evolve_summary(&f0, &out.field, &out.log, n_max)));
    Ok(artifacts)
}

fn run_fk(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    let plan = cfg.fk.as_ref().ok_or_else(|| bail("missing \"fk\" plan"))?;
    let grid = build_grid(cfg)?;
    let f0 = build_packet(cfg, &grid)?;
    let d = grid.dim();
    if plan.probes.is_empty() {
        return Err(bail("fk.probes must be non-empty"));
    }
    for p in &plan.probes {
        if p.len() != 2 * d + 1 {
            return Err(bail(format!("each probe needs {} coordinates for d = {d}", 2 * d + 1)));
        }
    }
    let mut csv = Vec::new();
    for i in 1..=d {
        write!(csv, "x{i},").unwrap();
    }
    for i in 1..=d {
        write!(csv, "y{i},").unwrap();
    }
    writeln!(csv, "s,mean_re,mean_im,se,paths").unwrap();
    for (i, probe) in plan.probes.iter().enumerate() {
        let p = HPoint::new(probe[..2 * d].to_vec(), probe[2 * d])?;
        let est = fk_estimate(
            &f0,
            &p,
            plan.t,
            plan.paths,
            plan.steps,
            RngStream::new(cfg.seed, i as u64),
        )?;
        for c in probe {
            write!(csv, "{c},").unwrap();
        }
        writeln!(csv, "{:e},{:e},{:e},{}", est.mean.re, est.mean.im, est.se, est.paths).unwrap();
    }
    Ok(vec![("fk.csv".into(), csv)])
}

fn run_walk(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    let plan = cfg.walk.as_ref().ok_or_else(|| bail("missing \"walk\" plan"))?;
    let start = HPoint::identity(plan.d);
    let jump = sample_jump_path(&start, plan.n, plan.horizon, RngStream::new(cfg.seed, 0))?;
    let geo = interpolate_geodesic(&jump, plan.refine)?;
    let mut jump_csv = Vec::new();
    export_path_csv(&jump, &mut jump_csv)?;
    let mut geo_csv = Vec::new();
    export_path_csv(&geo, &mut geo_csv)?;
    let mut artifacts = vec![("jump.csv".into(), jump_csv), ("path.csv".into(), geo_csv)];
    if let Some(tp) = &plan.tightness {
        let rows = tightness_diagnostic(
            &tp.n_list,
            &tp.delta_list,
            tp.eps,
            plan.horizon,
            plan.d,
            tp.paths,
            RngStream::new(cfg.seed, 1),
        )?;
        let mut csv = Vec::new();
        export_tightness_csv(&rows, &mut csv)?;
        artifacts.push(("tightness.csv".into(), csv));
    }
    Ok(artifacts)
}

fn run_dump_kernel(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    let plan = cfg.kernel.as_ref().ok_or_else(|| bail("missing \"kernel\" plan"))?;
    let flavor = match plan.flavor.as_str() {
        "heat" => KernelFlavor::Heat,
        "schrodinger" => KernelFlavor::Schrodinger,
        f => return Err(bail(format!("unknown kernel flavor {f:?}"))),
    };
    if plan.samples < 2 || plan.extent <= 0.0 {
        return Err(bail("kernel.samples must be >= 2 and kernel.extent > 0"));
    }
    let spec = MehlerKernelSpec { alpha: plan.alpha, t: plan.t, flavor };
    let m = plan.samples;
    let h = 2.0 * plan.extent / (m - 1) as f64;
    let mut pairs = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            let zp = [-plan.extent + i as f64 * h, -plan.extent + j as f64 * h];
            pairs.push((plan.z, zp));
        }
    }
    let mut csv = Vec::new();
    export_kernel_csv(&spec, &pairs, &mut csv)?;
    Ok(vec![("kernel.csv".into(), csv)])
}

// ---------------------------------------------------------------------------
// artifact plumbing

fn dump_field(f: &Field) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f.dump(&mut buf)?;
    Ok(buf)
}

fn evolve_summary(
    f0: &Field,
    final_field: &Field,
    log: &[heisen::heat::StepRecord],
    n: usize,
) -> Vec<u8> {
    let last = log.last().unwrap();
    let v = serde_json::json!({
        "n": n,
        "initial_l2_norm": f0.l2_norm(),
        "final_l2_norm": final_field.l2_norm(),
        "norm_drift": (last.l2_norm - f0.l2_norm()).abs(),
        "final_boundary_mass": last.boundary_mass,
    });
    let mut buf = serde_json::to_vec_pretty(&v).unwrap();
    buf.push(b'\n');
    buf
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_artifacts(
    out_dir: &PathBuf,
    config_bytes: &[u8],
    mut artifacts: Vec<Artifact>,
) -> Result<(), CliError> {
    artifacts.sort_by(|a, b| a.0.cmp(&b.0));
    std::fs::create_dir_all(out_dir)
        .map_err(|e| bail(format!("cannot create {}: {e}", out_dir.display())))?;
    let mut listed = Vec::new();
    for (name, bytes) in &artifacts {
        let path = out_dir.join(name);
        std::fs::write(&path, bytes)
            .map_err(|e| bail(format!("cannot write {}: {e}", path.display())))?;
        listed.push(serde_json::json!({
            "path": name,
            "bytes": bytes.len(),
            "sha256": sha256_hex(bytes),
        }));
        println!("wrote {}", path.display());
    }
    let manifest = serde_json::json!({
        "config_sha256": sha256_hex(config_bytes),
        "outputs": listed,
    });
    let mut buf = serde_json::to_vec_pretty(&manifest).unwrap();
    buf.push(b'\n');
    let path = out_dir.join("manifest.json");
    std::fs::write(&path, buf).map_err(|e| bail(format!("cannot write manifest: {e}")))?;
    println!("wrote {}", path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// verify

fn verify() -> Result<(), CliError> {
    let mut checks: Vec<(&str, Box<dyn FnOnce() -> Result<(), String>>)> = Vec::new();

    checks.push((
        "group algebra exact",
        Box::new(|| {
            let p = HPoint::new(vec![0.7, -1.3], -0.9).unwrap();
            let q = HPoint::new(vec![-0.4, 0.6], 1.7).unwrap();
            let r = HPoint::new(vec![2.0, 0.3], 0.4).unwrap();
            let a = group_mul(&group_mul(&p, &q).unwrap(), &r).unwrap();
            let b = group_mul(&p, &group_mul(&q, &r).unwrap()).unwrap();
            let gap = a
                .z
                .iter()
                .zip(&b.z)
                .map(|(u, v)| (u - v).abs())
                .fold((a.s - b.s).abs(), f64::max);
            if gap > 1e-12 {
                return Err(format!("associativity off by {gap:.3e}"));
            }
            let e = group_mul(&p, &group_inv(&p)).unwrap();
            if e.z.iter().map(|v| v.abs()).fold(e.s.abs(), f64::max) > 1e-12 {
                return Err("inverse does not cancel".into());
            }
            for lam in [0.5, 2.0] {
                let g0 = koranyi_gauge(&p).0;
                let g1 = koranyi_gauge(&p.dilate(lam)).0;
                if (g1 - lam * g0).abs() > 1e-12 * (1.0 + g1) {
                    return Err(format!("gauge not homogeneous at {lam}"));
                }
            }
            Ok(())
        }),
    ));

    checks.push((
        "partial transform round trip",
        Box::new(|| {
            let grid = GridSpec::isotropic(1, 5.0, 16, 5.0, 16).unwrap();
            let f = test_packet(&grid);
            let back = f.partial_ft().unwrap().partial_ift().unwrap();
            let gap = back.rel_l2_distance(&f);
            if gap > 1e-12 {
                return Err(format!("round trip residual {gap:.3e}"));
            }
            Ok(())
        }),
    ));

    checks.push((
        "zero-step operators are the identity",
        Box::new(|| {
            let grid = GridSpec::isotropic(1, 5.0, 16, 5.0, 16).unwrap();
            let f = test_packet(&grid);
            let h = heat_step(&f, 0.0, &PotentialSpec::Zero, &HeatStepMethod::DenseSpectral)
                .map_err(|e| e.to_string())?;
            let s = schrodinger_step(&f, 0.0, ShearMethod::Dense).map_err(|e| e.to_string())?;
            if h.values != f.values || s.values != f.values {
                return Err("zero step altered the field".into());
            }
            Ok(())
        }),
    ));

    checks.push((
        "heat step is non-expansive",
        Box::new(|| {
            let grid = GridSpec::isotropic(1, 5.0, 16, 5.0, 16).unwrap();
            let f = test_packet(&grid);
            let g = heat_step(&f, 0.05, &PotentialSpec::Zero, &HeatStepMethod::DenseSpectral)
                .map_err(|e| e.to_string())?;
            if g.l2_norm() > f.l2_norm() + 1e-8 {
                return Err(format!("norm grew to {}", g.l2_norm()));
            }
            Ok(())
        }),
    ));

    checks.push((
        "kernel free limit",
        Box::new(|| {
            let z = [0.4f64, -0.3];
            let zp = [-0.2f64, 0.5];
            let t = 0.3;
            let dz2 = (z[0] - zp[0]).powi(2) + (z[1] - zp[1]).powi(2);
            let k = mehler_heat_kernel(
                &MehlerKernelSpec { alpha: 0.0, t, flavor: KernelFlavor::Heat },
                &z,
                &zp,
            )
            .map_err(|e| e.to_string())?;
            let free = (-dz2 / (2.0 * t)).exp() / (2.0 * std::f64::consts::PI * t);
            if (k.re - free).abs() > 1e-14 || k.im.abs() > 1e-14 {
                return Err(format!("α = 0 kernel {k} vs free {free}"));
            }
            Ok(())
        }),
    ));

    checks.push((
        "area accumulators coincide",
        Box::new(|| {
            let path = sample_bm_levy(1, 0.7, 200, RngStream::new(11, 0))
                .map_err(|e| e.to_string())?;
            let gap = (path.levy.last().unwrap() - path.levy_midpoint()).abs();
            if gap > 1e-12 {
                return Err(format!("Itô vs midpoint gap {gap:.3e}"));
            }
            Ok(())
        }),
    ));

    let mut failed = false;
    for (name, f) in checks {
        match f() {
            Ok(()) => println!("ok   {name}"),
            Err(msg) => {
                println!("FAIL {name}: {msg}");
                failed = true;
            }
        }
    }
    if failed {
        Err(CliError::Numerical("verify found failing invariants".into()))
    } else {
        println!("verify: clean");
        Ok(())
    }
}

fn test_packet(grid: &GridSpec) -> Field {
    Field::make_packet(
        &GaussianPacketSpec {
            center: HPoint::identity(grid.dim()),
            widths: vec![0.7; 2 * grid.dim() + 1],
            momentum: vec![0.0; 2 * grid.dim() + 1],
        },
        grid,
    )
    .unwrap()
}
