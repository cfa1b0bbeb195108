//! `curveflow`: batch experiments on space curves with monodromy.

mod output;
mod spec;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use curveflow_core::associated::{
    angle_scan_csv, hamiltonians_from_angle, hamiltonians_from_contour, log_grid, monodromy_angle_scan, CONTOUR_POINTS,
    CONTOUR_RADIUS,
};
use curveflow_core::curve::{polyline_text, Stencil};
use curveflow_core::darboux::{darboux_transform, spectral_image_scan, spectral_scan_csv, Sheet};
use curveflow_core::flow::{commutator_defect, default_axis, evolve_with_axis, FlowField, FlowSpec, Integrator, Trajectory};
use curveflow_core::functionals::{energy_report_with, MAX_K, MIN_K};
use curveflow_core::hierarchy::{fit_gradient_multipliers, fit_multipliers, AxisVector, Calculus};
use curveflow_core::loops::{finite_gap_residual, lax_evolve, spectral_polynomial, LoopElement};
use curveflow_core::{Curve, Error};

use output::{num, table, Run};

#[derive(Parser)]
#[command(name = "curveflow", version, about = "Commuting Hamiltonian flows on space curves with monodromy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a flow of the hierarchy and log energies.
    Flow(FlowArgs),
    /// Evaluate E_-2 .. E_6.
    Energies(EnergiesArgs),
    /// Energy drift at dt and dt/2.
    Conserve(FlowArgs),
    /// Flow-composition defect at dt, dt/2, dt/4.
    Commute(CommuteArgs),
    /// Lax flows on a truncated loop algebra.
    Lax(LaxArgs),
    /// Monodromy angle over a real λ grid, with optional Hamiltonian fit.
    AngleScan(AngleArgs),
    /// Ideal fixed points S± over a complex λ grid.
    SpectralScan(SpectralArgs),
    /// Darboux transforms η± at a complex λ.
    Darboux(DarbouxArgs),
    /// Constrained-criticality and finite-gap residuals.
    Criticality(CriticalityArgs),
}

#[derive(Args, Serialize)]
struct Common {
    /// Builtin spec (circle:r=1,n=256, helix:a=1,b=1,turns=1,n=256, line:length=1,n=64,
    /// perturbed:r=1,amp=0.05,seed=0,n=256) or a curve JSON file.
    #[arg(long)]
    curve: String,
    /// Output directory.
    #[arg(long, default_value = "curveflow-out")]
    out: PathBuf,
    /// Seed for random perturbations.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Serialize)]
struct FlowArgs {
    #[command(flatten)]
    common: Common,
    /// Flow index k, or weights k:w,k:w.
    #[arg(long, default_value = "1", allow_hyphen_values = true)]
    flow: String,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    /// rk4, midpoint or euler.
    #[arg(long, default_value = "rk4")]
    integrator: String,
    /// Resample to arclength every this many steps (0 = never).
    #[arg(long, default_value_t = 0)]
    resample_every: usize,
    /// Derivative stencil order: 4 or 8.
    #[arg(long, default_value = "4")]
    stencil: String,
    /// Axis x,y,z for E_-2, E_-1 and the rotation flows.
    #[arg(long, allow_hyphen_values = true)]
    axis: Option<String>,
}

#[derive(Args, Serialize)]
struct EnergiesArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, allow_hyphen_values = true)]
    axis: Option<String>,
    #[arg(long, default_value = "4")]
    stencil: String,
}

#[derive(Args, Serialize)]
struct CommuteArgs {
    #[command(flatten)]
    common: Common,
    /// Flow indices i,j.
    #[arg(long, default_value = "1,2", allow_hyphen_values = true)]
    pair: String,
    #[arg(long, default_value_t = 2e-3)]
    dt: f64,
    #[arg(long, default_value = "euler")]
    integrator: String,
}

#[derive(Args, Serialize)]
struct LaxArgs {
    /// Loop element JSON; a seeded random element of --degree otherwise.
    #[arg(long = "loop")]
    loop_file: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    degree: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Flow weights k:w,k:w (k ≥ 0).
    #[arg(long, default_value = "0")]
    flow: String,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value = "rk4")]
    integrator: String,
    #[arg(long, default_value = "curveflow-out")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct AngleArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, allow_hyphen_values = true)]
    lmin: f64,
    #[arg(long, allow_hyphen_values = true)]
    lmax: f64,
    /// Grid points (logarithmic when 0 < lmin).
    #[arg(long, default_value_t = 32)]
    points: usize,
    /// Fit E_0 .. E_k from the scan.
    #[arg(long)]
    fit: Option<usize>,
    /// Also fit from the contour |λ| = 16 (all k ≤ 6).
    #[arg(long)]
    contour: bool,
}

#[derive(Args, Serialize)]
struct SpectralArgs {
    #[command(flatten)]
    common: Common,
    /// Real parts lo,hi,count.
    #[arg(long, default_value = "0.5,2,8", allow_hyphen_values = true)]
    re: String,
    /// Imaginary parts lo,hi,count.
    #[arg(long, default_value = "0.1,1,8", allow_hyphen_values = true)]
    im: String,
}

#[derive(Args, Serialize)]
struct DarbouxArgs {
    #[command(flatten)]
    common: Common,
    /// Spectral parameter re,im with im ≠ 0.
    #[arg(long, allow_hyphen_values = true)]
    lambda: String,
}

#[derive(Args, Serialize)]
struct CriticalityArgs {
    #[command(flatten)]
    common: Common,
    /// Target order k of G_k = Σ_{i<k} c_i G_i (over i ≥ 1).
    #[arg(long, default_value_t = 3)]
    k: usize,
}

/// Exit 2 for invalid input, 3 for numerical failure.
enum Failure {
    Validation(String),
    Numerical(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::BlowUp { .. }
            | Error::Unstable { .. }
            | Error::IllConditioned { .. }
            | Error::SingularSector { .. }
            | Error::BranchPoint { .. }
            | Error::Resampling { .. } => Failure::Numerical(e.to_string()),
            Error::Io(m) => Failure::Io(m),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation(msg.into())
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T, Failure> {
    s.parse().map_err(Failure::from)
}

fn load(common: &Common) -> Result<Curve, Failure> {
    spec::load_curve(&common.curve, common.seed).map_err(invalid)
}

fn axis_for(curve: &Curve, axis: &Option<String>) -> Result<AxisVector, Failure> {
    match axis {
        Some(s) => {
            let a = AxisVector::new(spec::parse_vec3(s).map_err(invalid)?)?;
            a.validate(curve)?;
            Ok(a)
        }
        None => Ok(default_axis(curve)),
    }
}

fn flow_spec(a: &FlowArgs, curve: &Curve, dt: f64, steps: usize) -> Result<(FlowSpec, AxisVector), Failure> {
    let weights = spec::parse_weights(&a.flow).map_err(invalid)?;
    let axis = axis_for(curve, &a.axis)?;
    let terms: Vec<(i32, f64)> = weights.into_iter().collect();
    let field = FlowField::new(&terms, Some(axis))?.with_stencil(parse::<Stencil>(&a.stencil)?);
    let spec = FlowSpec::new(field, dt, steps)?
        .with_integrator(parse::<Integrator>(&a.integrator)?)
        .with_resample_every(a.resample_every);
    Ok((spec, axis))
}

fn logged_orders() -> Vec<i32> {
    (MIN_K..=MAX_K).filter(|k| *k != 0).collect()
}

fn drift_summary(traj: &Trajectory) -> BTreeMap<String, f64> {
    logged_orders().into_iter().filter_map(|k| traj.max_relative_drift(k).map(|d| (format!("E_{k}"), d))).collect()
}

fn run_flow(a: &FlowArgs) -> Outcome {
    let curve = load(&a.common)?;
    let (spec, axis) = flow_spec(a, &curve, a.dt, a.steps)?;
    let mut run = Run::create(&a.common.out)?;
    let traj = match evolve_with_axis(&curve, &spec, axis) {
        Ok(t) => t,
        Err(e @ Error::BlowUp { .. }) => {
            run.write("diagnostics.json", serde_json::to_string_pretty(&json!({ "error": e.to_string() })).unwrap())?;
            run.finish("flow", a)?;
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    traj.write(&run.dir().join("trajectory"))?;
    run.record("trajectory");
    run.write("energies.csv", traj.energy_csv())?;
    run.summary("relative_drift", drift_summary(&traj));
    let last = traj.diagnostics.last().copied();
    run.summary("final_diagnostics", last);
    run.summary("snapshots", traj.snapshots.len());
    run.finish("flow", a)?;
    Ok(())
}

fn run_conserve(a: &FlowArgs) -> Outcome {
    let curve = load(&a.common)?;
    let (spec1, axis) = flow_spec(a, &curve, a.dt, a.steps)?;
    let (spec2, _) = flow_spec(a, &curve, 0.5 * a.dt, 2 * a.steps)?;
    let t1 = evolve_with_axis(&curve, &spec1, axis)?;
    let t2 = evolve_with_axis(&curve, &spec2, axis)?;
    let mut run = Run::create(&a.common.out)?;
    let mut csv = String::from("k,initial,drift_dt,drift_half_dt,ratio\n");
    let mut worst: f64 = 0.0;
    for k in logged_orders() {
        let (Some(d1), Some(d2)) = (t1.max_relative_drift(k), t2.max_relative_drift(k)) else { continue };
        let e0 = t1.energy_log[0].get(k).unwrap_or(f64::NAN);
        worst = worst.max(d1);
        csv.push_str(&format!("{k},{},{},{},{}\n", num(e0), num(d1), num(d2), num(d1 / d2)));
    }
    run.write("conservation.csv", csv)?;
    run.summary("max_relative_drift", worst);
    run.finish("conserve", a)?;
    Ok(())
}

fn run_energies(a: &EnergiesArgs) -> Outcome {
    let curve = load(&a.common)?;
    let axis = axis_for(&curve, &a.axis)?;
    let calc = Calculus::with_stencil(&curve, parse::<Stencil>(&a.stencil)?);
    let ks = logged_orders();
    let rep = energy_report_with(&calc, &ks, Some(&axis))?;
    let header: Vec<String> = ks.iter().map(|k| format!("E_{k}")).collect();
    let row: Vec<String> = ks.iter().map(|k| rep.get(*k).map_or(String::new(), num)).collect();
    let mut run = Run::create(&a.common.out)?;
    run.write("energies.csv", format!("{}\n{}\n", header.join(","), row.join(",")))?;
    run.summary("axis", axis.get().as_slice());
    run.summary("torsion_branch", rep.torsion_branch);
    run.summary("invariants", curve.check_invariants().holds());
    run.finish("energies", a)?;
    Ok(())
}

fn run_commute(a: &CommuteArgs) -> Outcome {
    let curve = load(&a.common)?;
    let (i, j) = spec::parse_pair(&a.pair).map_err(invalid)?;
    let integ = parse::<Integrator>(&a.integrator)?;
    if !(a.dt > 0.0 && a.dt.is_finite()) {
        return Err(invalid("dt must be positive"));
    }
    let dts = [a.dt, 0.5 * a.dt, 0.25 * a.dt];
    let defects = dts.iter().map(|dt| commutator_defect(&curve, i, j, *dt, integ)).collect::<Result<Vec<_>, _>>()?;
    let ratios: Vec<f64> = defects.windows(2).map(|w| w[0] / w[1]).collect();
    let rows = dts.iter().zip(&defects).enumerate().map(|(n, (dt, d))| {
        vec![*dt, *d, if n == 0 { f64::NAN } else { ratios[n - 1] }]
    });
    let mut run = Run::create(&a.common.out)?;
    run.write("commute.csv", table(&["dt", "defect", "ratio"], rows))?;
    run.summary("defects", &defects);
    run.summary("ratios", &ratios);
    run.finish("commute", a)?;
    Ok(())
}

fn run_lax(a: &LaxArgs) -> Outcome {
    let xi = match &a.loop_file {
        Some(p) => LoopElement::load(p)?,
        None => LoopElement::random(a.degree, a.seed),
    };
    let mut weights = BTreeMap::new();
    for (k, w) in spec::parse_weights(&a.flow).map_err(invalid)? {
        let k = usize::try_from(k).map_err(|_| invalid("Lax flow indices are k ≥ 0"))?;
        weights.insert(k, w);
    }
    let traj = lax_evolve(&xi, &weights, a.dt, a.steps, parse::<Integrator>(&a.integrator)?)?;
    let p0 = spectral_polynomial(&xi);
    let drift: Vec<f64> = traj.iter().map(|x| spectral_polynomial(x).distance(&p0)).collect();
    let rows = drift.iter().enumerate().map(|(s, d)| vec![s as f64 * a.dt, *d]);
    let mut run = Run::create(&a.out)?;
    run.write("isospectral.csv", table(&["t", "drift"], rows))?;
    run.write("spectral_polynomial.csv", p0.to_csv())?;
    run.write("final_loop.json", traj.last().unwrap_or(&xi).to_json()?)?;
    let worst = drift.iter().cloned().fold(0.0, f64::max);
    let t = a.dt * a.steps as f64;
    run.summary("max_drift", worst);
    run.summary("drift_per_unit_time", if t > 0.0 { worst / t } else { 0.0 });
    run.finish("lax", a)?;
    Ok(())
}

fn energies_csv(e: &[f64]) -> String {
    let mut s = String::from("k,value\n");
    for (k, v) in e.iter().enumerate() {
        s.push_str(&format!("{k},{}\n", num(*v)));
    }
    s
}

fn run_angle(a: &AngleArgs) -> Outcome {
    let curve = load(&a.common)?;
    if !(a.lmin < a.lmax) || a.points < 2 {
        return Err(invalid("need lmin < lmax and at least 2 points"));
    }
    let grid = if a.lmin > 0.0 {
        log_grid(a.lmin, a.lmax, a.points)
    } else {
        (0..a.points).map(|i| a.lmin + (a.lmax - a.lmin) * i as f64 / (a.points - 1) as f64).collect()
    };
    let mut run = Run::create(&a.common.out)?;
    if let Some(kmax) = a.fit {
        let fit = hamiltonians_from_angle(&curve, &grid, kmax)?;
        run.write("angle_scan.csv", angle_scan_csv(&fit.scan))?;
        run.write("hamiltonians.csv", energies_csv(&fit.energies))?;
        run.summary("energies", &fit.energies);
        run.summary("condition", fit.condition);
        run.summary("rms_residual", fit.rms_residual);
    } else {
        let scan = monodromy_angle_scan(&curve, &grid)?;
        run.write("angle_scan.csv", angle_scan_csv(&scan))?;
        let gb = scan.iter().filter_map(|s| s.gauss_bonnet_residual).map(f64::abs).fold(0.0, f64::max);
        run.summary("max_gauss_bonnet_residual", gb);
    }
    if a.contour {
        let fit = hamiltonians_from_contour(&curve, CONTOUR_RADIUS, CONTOUR_POINTS, 6)?;
        run.write("hamiltonians_contour.csv", energies_csv(&fit.energies))?;
        run.summary("contour_energies", &fit.energies);
        run.summary("contour_closure_defect", fit.closure_defect);
    }
    run.finish("angle-scan", a)?;
    Ok(())
}

fn run_spectral(a: &SpectralArgs) -> Outcome {
    let curve = load(&a.common)?;
    let re = spec::parse_range(&a.re).map_err(invalid)?;
    let im = spec::parse_range(&a.im).map_err(invalid)?;
    let scan = spectral_image_scan(&curve, &re, &im);
    let mut run = Run::create(&a.common.out)?;
    run.write("spectral_scan.csv", spectral_scan_csv(&scan))?;
    run.summary("branch_points", scan.iter().filter(|s| s.branch_point).count());
    let dmin = scan.iter().map(|s| s.discriminant.norm()).fold(f64::INFINITY, f64::min);
    run.summary("min_discriminant", dmin);
    run.finish("spectral-scan", a)?;
    Ok(())
}

fn run_darboux(a: &DarbouxArgs) -> Outcome {
    let curve = load(&a.common)?;
    let lambda = spec::parse_complex(&a.lambda).map_err(invalid)?;
    let mut run = Run::create(&a.common.out)?;
    let mut meta = serde_json::Map::new();
    for (sheet, name) in [(Sheet::Plus, "plus"), (Sheet::Minus, "minus")] {
        let d = darboux_transform(&curve, lambda, sheet)?;
        run.write(&format!("eta_{name}.txt"), polyline_text(d.curve.samples()))?;
        let deltas: BTreeMap<String, f64> =
            d.energy_deltas(&curve)?.into_iter().map(|(k, v)| (format!("E_{k}"), v)).collect();
        meta.insert(
            name.into(),
            json!({
                "distance": d.offset,
                "distance_defect": d.distance_defect,
                "arclength_defect": d.arclength_defect,
                "wrap_defect_per_dx": d.wrap_defect,
                "transport_defect": d.transport_defect,
                "energy_deltas": deltas,
            }),
        );
    }
    let record = json!({ "lambda": [lambda.re, lambda.im], "sheets": meta });
    run.write("darboux.json", serde_json::to_string_pretty(&record).unwrap() + "\n")?;
    run.summary("sheets", meta);
    run.finish("darboux", a)?;
    Ok(())
}

fn run_criticality(a: &CriticalityArgs) -> Outcome {
    let curve = load(&a.common)?;
    if a.k < 2 || a.k > 6 {
        return Err(invalid("k must be in 2..=6"));
    }
    let lower: Vec<usize> = (1..a.k).collect();
    let g = fit_gradient_multipliers(&curve, a.k, &lower);
    let y = fit_multipliers(&curve, a.k, false);
    let gap = finite_gap_residual(&curve, a.k - 1, &y.coefficients)?;
    let mut run = Run::create(&a.common.out)?;
    let mut csv = String::from("quantity,value\n");
    for (i, c) in lower.iter().zip(&g.coefficients) {
        csv.push_str(&format!("c_{i},{}\n", num(*c)));
    }
    csv.push_str(&format!("gradient_residual,{}\n", num(g.residual)));
    csv.push_str(&format!("finite_gap_residual,{}\n", num(gap)));
    run.write("criticality.csv", csv)?;
    run.summary("gradient_multipliers", &g.coefficients);
    run.summary("gradient_residual", g.residual);
    run.summary("gradient_condition", g.condition);
    run.summary("finite_gap_residual", gap);
    run.finish("criticality", a)?;
    Ok(())
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("CURVEFLOW_THREADS") else { return Ok(()) };
    let n: usize = v.parse().ok().filter(|n| *n > 0).ok_or_else(|| invalid(format!("CURVEFLOW_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| invalid(e.to_string()))
}

fn out_dir(cmd: &Command) -> &Path {
    match cmd {
        Command::Flow(a) | Command::Conserve(a) => &a.common.out,
        Command::Energies(a) => &a.common.out,
        Command::Commute(a) => &a.common.out,
        Command::Lax(a) => &a.out,
        Command::AngleScan(a) => &a.common.out,
        Command::SpectralScan(a) => &a.common.out,
        Command::Darboux(a) => &a.common.out,
        Command::Criticality(a) => &a.common.out,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| match &cli.command {
        Command::Flow(a) => run_flow(a),
        Command::Energies(a) => run_energies(a),
        Command::Conserve(a) => run_conserve(a),
        Command::Commute(a) => run_commute(a),
        Command::Lax(a) => run_lax(a),
        Command::AngleScan(a) => run_angle(a),
        Command::SpectralScan(a) => run_spectral(a),
        Command::Darboux(a) => run_darboux(a),
        Command::Criticality(a) => run_criticality(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            let dir = out_dir(&cli.command);
            let path = dir.join("diagnostics.json");
            if !path.exists() && std::fs::create_dir_all(dir).is_ok() {
                let _ = std::fs::write(&path, serde_json::to_string_pretty(&json!({ "error": m })).unwrap() + "\n");
            }
            ExitCode::from(3)
        }
        Err(Failure::Io(m)) => {
            eprintln!("i/o error: {m}");
            ExitCode::from(1)
        }
    }
}
