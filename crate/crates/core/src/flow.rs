//! Time integration of `γ̇ = Σ c_k Y_k`, conservation logs and commutator tests.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Matrix3, Rotation3};
use serde::{Deserialize, Serialize};

use crate::curve::{resample_arclength, Curve, CurveField, Monodromy, Stencil, Vec3, D8};
use crate::error::{Error, Result};
use crate::functionals::{energy_report_with, EnergyReport, MAX_K, MIN_K};
use crate::hierarchy::{hierarchy_with, AxisVector, Calculus};

/// Any sample norm above this aborts a flow.
pub const BLOW_UP_NORM: f64 = 1e6;

/// Explicit one-step methods.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Rk4,
    Midpoint,
    Euler,
}

impl Integrator {
    /// Default constant of the stability guard `dt·ρ ≤ C`.
    pub fn default_cfl(self) -> f64 {
        match self {
            Integrator::Rk4 => 2.5,
            Integrator::Midpoint | Integrator::Euler => 1.0,
        }
    }
}

impl FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk4" => Ok(Integrator::Rk4),
            "midpoint" => Ok(Integrator::Midpoint),
            "euler" => Ok(Integrator::Euler),
            _ => Err(Error::InvalidInput(format!("unknown integrator '{s}' (rk4, midpoint, euler)"))),
        }
    }
}

impl fmt::Display for Integrator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Integrator::Rk4 => "rk4",
            Integrator::Midpoint => "midpoint",
            Integrator::Euler => "euler",
        })
    }
}

/// Vector field `Σ c_k Y_k`; `k = −1, −2` need an axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowField {
    pub coefficients: BTreeMap<i32, f64>,
    pub axis: Option<AxisVector>,
    #[serde(default)]
    pub stencil: Stencil,
}

impl FlowField {
    pub fn new(coefficients: &[(i32, f64)], axis: Option<AxisVector>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for &(k, c) in coefficients {
            if k < MIN_K {
                return Err(Error::OutOfRange { k, min: MIN_K, max: i32::MAX });
            }
            if !c.is_finite() {
                return Err(Error::InvalidInput(format!("coefficient of Y_{k} is not finite")));
            }
            if k < 0 && axis.is_none() {
                return Err(Error::MissingAxis { k });
            }
            *map.entry(k).or_insert(0.0) += c;
        }
        if map.is_empty() {
            return Err(Error::InvalidInput("flow needs at least one term".into()));
        }
        Ok(Self { coefficients: map, axis, stencil: Stencil::Fourth })
    }

    pub fn single(k: i32) -> Result<Self> {
        Self::new(&[(k, 1.0)], None)
    }

    pub fn with_stencil(mut self, stencil: Stencil) -> Self {
        self.stencil = stencil;
        self
    }

    /// Highest `k ≥ 0` with a nonzero coefficient.
    fn max_order(&self) -> Option<usize> {
        self.coefficients.iter().filter(|(k, c)| **k >= 0 && **c != 0.0).map(|(k, _)| *k as usize).max()
    }

    /// Field values and the rate `b` with `F(x + L) = A F(x) + b`.
    pub fn eval(&self, curve: &Curve) -> Result<(CurveField, Vec3)> {
        let n = curve.n();
        let mut out = CurveField::zeros(n);
        let mut rate = Vec3::zeros();
        if let Some(kmax) = self.max_order() {
            let ys = hierarchy_with(&Calculus::with_stencil(curve, self.stencil), kmax);
            for (&k, &c) in &self.coefficients {
                if k >= 0 && c != 0.0 {
                    for (o, y) in out.values.iter_mut().zip(&ys[k as usize].values) {
                        *o += y * c;
                    }
                }
            }
        }
        for (&k, &c) in self.coefficients.iter().filter(|(k, _)| **k < 0) {
            let axis = self.axis.ok_or(Error::MissingAxis { k })?;
            axis.validate(curve)?;
            let v = axis.get();
            match k {
                -1 => out.values.iter_mut().for_each(|o| *o += v * c),
                _ => {
                    for (o, p) in out.values.iter_mut().zip(curve.samples()) {
                        *o += v.cross(p) * c;
                    }
                    rate += v.cross(&curve.monodromy().translation) * c;
                }
            }
        }
        Ok((out, rate))
    }

    /// Largest stable `dt` for the guard constant `cfl`.
    pub fn stability_bound(&self, curve: &Curve, cfl: f64) -> f64 {
        let h = curve.seg_len() * min_speed(curve);
        let rate: f64 = self
            .coefficients
            .iter()
            .filter(|(k, _)| **k >= 0)
            .map(|(&k, &c)| c.abs() * symbol_radius(self.stencil, k as usize) / h.powi(k + 1))
            .sum();
        if rate > 0.0 {
            cfl / rate
        } else {
            f64::INFINITY
        }
    }
}

fn min_speed(curve: &Curve) -> f64 {
    curve.velocity().iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min)
}

/// `max_θ |d(θ)|^k |d₈(θ)|` for the calculus stencil `d`: spectral radius of
/// the discrete `Y_k` operator on a unit grid.
fn symbol_radius(st: Stencil, k: usize) -> f64 {
    let sym = |c: &[f64; 4], th: f64| 2.0 * c.iter().enumerate().map(|(j, w)| w * ((j + 1) as f64 * th).sin()).sum::<f64>();
    (0..=4096)
        .map(|i| {
            let th = PI * i as f64 / 4096.0;
            sym(st.weights(), th).abs().powi(k as i32) * sym(&D8, th).abs()
        })
        .fold(0.0, f64::max)
}

/// Full flow configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub field: FlowField,
    pub dt: f64,
    pub steps: usize,
    pub integrator: Integrator,
    /// Resample to arclength every this many steps (0 = never).
    pub resample_every: usize,
    /// Guard constant; `None` uses the integrator default, `∞` disables.
    pub cfl: Option<f64>,
}

impl FlowSpec {
    pub fn new(field: FlowField, dt: f64, steps: usize) -> Result<Self> {
        let spec = Self { field, dt, steps, integrator: Integrator::Rk4, resample_every: 0, cfl: None };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn with_resample_every(mut self, every: usize) -> Self {
        self.resample_every = every;
        self
    }

    pub fn with_cfl(mut self, cfl: f64) -> Self {
        self.cfl = Some(cfl);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        if self.steps == 0 {
            return Err(Error::InvalidInput("steps must be at least 1".into()));
        }
        Ok(())
    }

    /// Steps between logged snapshots.
    pub fn log_every(&self) -> usize {
        (self.steps / 200).max(1)
    }

    fn check_stability(&self, curve: &Curve) -> Result<()> {
        let cfl = self.cfl.unwrap_or_else(|| self.integrator.default_cfl());
        let bound = self.field.stability_bound(curve, cfl);
        if self.dt > bound {
            Err(Error::Unstable { dt: self.dt, bound })
        } else {
            Ok(())
        }
    }
}

fn stage(curve: &Curve, base: &Curve, k: &(CurveField, Vec3), h: f64, step: usize) -> Result<Curve> {
    let samples: Vec<Vec3> = base.samples().iter().zip(&k.0.values).map(|(p, v)| p + v * h).collect();
    for p in &samples {
        let r = p.norm();
        if !r.is_finite() {
            return Err(Error::BlowUp { step, reason: "non-finite sample".into() });
        }
        if r > BLOW_UP_NORM {
            return Err(Error::BlowUp { step, reason: format!("sample norm {r:e} exceeds {BLOW_UP_NORM:e}") });
        }
    }
    let m = base.monodromy();
    let mono = Monodromy::new(m.rotation, m.translation + k.1 * h);
    Curve::new(samples, curve.seg_len(), mono, curve.basepoint_index())
        .map_err(|e| Error::BlowUp { step, reason: e.to_string() })
}

fn combine(parts: &[(&(CurveField, Vec3), f64)]) -> (CurveField, Vec3) {
    let n = parts[0].0 .0.len();
    let mut vals = vec![Vec3::zeros(); n];
    let mut rate = Vec3::zeros();
    for (k, w) in parts {
        for (o, v) in vals.iter_mut().zip(&k.0.values) {
            *o += v * *w;
        }
        rate += k.1 * *w;
    }
    (CurveField::new(vals), rate)
}

/// One step of `γ̇ = F(γ)` with signed `dt`; `step` labels errors.
pub fn integrate_step(curve: &Curve, field: &FlowField, dt: f64, integrator: Integrator, step: usize) -> Result<Curve> {
    let k1 = field.eval(curve)?;
    match integrator {
        Integrator::Euler => stage(curve, curve, &k1, dt, step),
        Integrator::Midpoint => {
            let k2 = field.eval(&stage(curve, curve, &k1, 0.5 * dt, step)?)?;
            stage(curve, curve, &k2, dt, step)
        }
        Integrator::Rk4 => {
            let k2 = field.eval(&stage(curve, curve, &k1, 0.5 * dt, step)?)?;
            let k3 = field.eval(&stage(curve, curve, &k2, 0.5 * dt, step)?)?;
            let k4 = field.eval(&stage(curve, curve, &k3, dt, step)?)?;
            let sum = combine(&[(&k1, 1.0 / 6.0), (&k2, 1.0 / 3.0), (&k3, 1.0 / 3.0), (&k4, 1.0 / 6.0)]);
            stage(curve, curve, &sum, dt, step)
        }
    }
}

fn resample(curve: &Curve, step: usize) -> Result<Curve> {
    let c = resample_arclength(curve.samples(), curve.monodromy(), curve.n())
        .map_err(|e| Error::BlowUp { step, reason: format!("resampling: {e}") })?;
    c.with_basepoint(curve.basepoint_index())
}

/// One time step, followed by resampling when `resample_every == 1`.
pub fn step(curve: &Curve, spec: &FlowSpec) -> Result<Curve> {
    spec.validate()?;
    spec.check_stability(curve)?;
    let next = integrate_step(curve, &spec.field, spec.dt, spec.integrator, 0)?;
    if spec.resample_every == 1 {
        resample(&next, 0)
    } else {
        Ok(next)
    }
}

/// Geometric diagnostics at a snapshot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Max relative deviation of interpolant segment lengths from the initial `Δx`.
    pub seg_len_drift: f64,
    /// Angle of `A(t) A(0)⁻¹`.
    pub rotation_drift: f64,
    /// `|a(t) − a(0)|`.
    pub translation_drift: f64,
}

/// Snapshots of a flow with energies and diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Curve>,
    pub energy_log: Vec<EnergyReport>,
    pub time_grid: Vec<f64>,
    pub diagnostics: Vec<Diagnostics>,
}

/// Axis used for `E₋₂, E₋₁` when none is given: the monodromy axis, the
/// translation direction of a pure translation, else `e_z`.
pub fn default_axis(curve: &Curve) -> AxisVector {
    let m = curve.monodromy();
    if let Some(a) = m.axis() {
        return AxisVector::new(a).unwrap_or_else(|_| AxisVector::e_z());
    }
    if m.translation.norm() > 0.0 {
        return AxisVector::new(m.translation).unwrap_or_else(|_| AxisVector::e_z());
    }
    AxisVector::e_z()
}

fn all_orders() -> Vec<i32> {
    (MIN_K..=MAX_K).filter(|k| *k != 0).collect()
}

fn diagnostics(curve: &Curve, start: &Curve) -> Diagnostics {
    let dx = start.seg_len();
    let seg_len_drift = curve.segment_arclengths().iter().map(|l| (l - dx).abs() / dx).fold(0.0, f64::max);
    let rel = curve.monodromy().rotation * start.monodromy().rotation.inverse();
    Diagnostics {
        seg_len_drift,
        rotation_drift: rel.angle(),
        translation_drift: (curve.monodromy().translation - start.monodromy().translation).norm(),
    }
}

/// Run `spec.steps` steps, logging every [`FlowSpec::log_every`] steps.
pub fn evolve(curve: &Curve, spec: &FlowSpec) -> Result<Trajectory> {
    evolve_with_axis(curve, spec, spec.field.axis.unwrap_or_else(|| default_axis(curve)))
}

/// [`evolve`] with an explicit axis for the logged flux energies.
pub fn evolve_with_axis(curve: &Curve, spec: &FlowSpec, axis: AxisVector) -> Result<Trajectory> {
    spec.validate()?;
    spec.check_stability(curve)?;
    let ks = all_orders();
    let axis = axis.validate(curve).is_ok().then_some(axis);
    let cadence = spec.log_every();
    let mut traj = Trajectory { snapshots: vec![], energy_log: vec![], time_grid: vec![], diagnostics: vec![] };
    let record = |c: &Curve, t: f64, traj: &mut Trajectory| -> Result<()> {
        let mut rep = energy_report_with(&Calculus::with_stencil(c, spec.field.stencil), &ks, axis.as_ref())?;
        // Keep E₂ on a continuous branch.
        if let (Some(prev), Some(e2)) = (traj.energy_log.last().and_then(|r| r.get(2)), rep.get(2)) {
            let shift = ((prev - e2) / (2.0 * PI)).round();
            rep.values.insert(2, e2 + 2.0 * PI * shift);
            rep.torsion_branch += shift as i64;
        }
        traj.diagnostics.push(diagnostics(c, curve));
        traj.energy_log.push(rep);
        traj.snapshots.push(c.clone());
        traj.time_grid.push(t);
        Ok(())
    };
    record(curve, 0.0, &mut traj)?;
    let mut cur = curve.clone();
    for s in 1..=spec.steps {
        cur = integrate_step(&cur, &spec.field, spec.dt, spec.integrator, s)?;
        if spec.resample_every > 0 && s % spec.resample_every == 0 {
            cur = resample(&cur, s)?;
        }
        if s % cadence == 0 || s == spec.steps {
            record(&cur, s as f64 * spec.dt, &mut traj)?;
        }
    }
    Ok(traj)
}

impl Trajectory {
    pub fn last(&self) -> &Curve {
        self.snapshots.last().expect("trajectory has the initial snapshot")
    }

    /// `max_t |E_k(t) − E_k(0)| / max(|E_k(0)|, 1)`.
    pub fn max_relative_drift(&self, k: i32) -> Option<f64> {
        let e0 = self.energy_log.first()?.get(k)?;
        let scale = e0.abs().max(1.0);
        self.energy_log.iter().map(|r| r.get(k).map(|e| (e - e0).abs() / scale)).try_fold(0.0f64, |m, d| d.map(|d| m.max(d)))
    }

    /// CSV with columns `t, E_-2 .. E_6, seg_len_drift, rotation_drift, translation_drift`.
    pub fn energy_csv(&self) -> String {
        let ks = all_orders();
        let mut s = String::from("t");
        for k in &ks {
            s.push_str(&format!(",E_{k}"));
        }
        s.push_str(",seg_len_drift,rotation_drift,translation_drift\n");
        for ((t, rep), d) in self.time_grid.iter().zip(&self.energy_log).zip(&self.diagnostics) {
            s.push_str(&format!("{t:.17e}"));
            for k in &ks {
                match rep.get(*k) {
                    Some(v) => s.push_str(&format!(",{v:.17e}")),
                    None => s.push(','),
                }
            }
            s.push_str(&format!(",{:.17e},{:.17e},{:.17e}\n", d.seg_len_drift, d.rotation_drift, d.translation_drift));
        }
        s
    }

    /// Write `curve_NNNN.json` per snapshot and `energies.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (i, c) in self.snapshots.iter().enumerate() {
            c.save(&dir.join(format!("curve_{i:04}.json")))?;
        }
        std::fs::write(dir.join("energies.csv"), self.energy_csv())?;
        Ok(())
    }
}

/// `‖Φ_i(Φ_j(γ)) − Φ_j(Φ_i(γ))‖_{L²}` for single steps Φ of `γ̇ = Y_k`.
pub fn commutator_defect(curve: &Curve, i: i32, j: i32, dt: f64, integrator: Integrator) -> Result<f64> {
    let (a, b) = commuted_pair(curve, i, j, dt, integrator)?;
    let diff = CurveField::new(a.samples().iter().zip(b.samples()).map(|(p, q)| p - q).collect());
    Ok(diff.l2_norm(curve.seg_len()))
}

/// Shape distance between the two compositions after resampling both.
pub fn commutator_shape_defect(curve: &Curve, i: i32, j: i32, dt: f64, integrator: Integrator) -> Result<f64> {
    let (a, b) = commuted_pair(curve, i, j, dt, integrator)?;
    let a = resample(&a, 0)?;
    let b = resample(&b, 0)?;
    Ok(hausdorff(&a, &b))
}

fn commuted_pair(curve: &Curve, i: i32, j: i32, dt: f64, integrator: Integrator) -> Result<(Curve, Curve)> {
    let axis = Some(default_axis(curve));
    let fi = FlowField::new(&[(i, 1.0)], axis)?;
    let fj = FlowField::new(&[(j, 1.0)], axis)?;
    let ij = integrate_step(&integrate_step(curve, &fj, dt, integrator, 0)?, &fi, dt, integrator, 1)?;
    let ji = integrate_step(&integrate_step(curve, &fi, dt, integrator, 0)?, &fj, dt, integrator, 1)?;
    Ok((ij, ji))
}

/// Symmetric Hausdorff distance between two curves through their
/// interpolants, over one fundamental domain each.
pub fn hausdorff(a: &Curve, b: &Curve) -> f64 {
    let ab = b.closest_points(a.samples(), 1).iter().map(|(_, d)| *d).fold(0.0, f64::max);
    let ba = a.closest_points(b.samples(), 1).iter().map(|(_, d)| *d).fold(0.0, f64::max);
    ab.max(ba)
}

/// Rigid motion `p ↦ R p + t` registering one curve onto another.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidFit {
    pub rotation: Rotation3<f64>,
    pub translation: Vec3,
    /// Symmetric Hausdorff distance after registration.
    pub hausdorff: f64,
    pub iterations: usize,
}

fn kabsch(p: &[Vec3], q: &[Vec3]) -> (Rotation3<f64>, Vec3) {
    let m = p.len() as f64;
    let cp = p.iter().sum::<Vec3>() / m;
    let cq = q.iter().sum::<Vec3>() / m;
    let mut h = Matrix3::zeros();
    for (a, b) in p.iter().zip(q) {
        h += (a - cp) * (b - cq).transpose();
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let d = (vt.transpose() * u.transpose()).determinant().signum();
    let r = vt.transpose() * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * u.transpose();
    let rot = Rotation3::from_matrix_unchecked(r);
    (rot, cq - rot * cp)
}

/// Iterated closest point registration of `moving` onto `target`,
/// starting from the sample-wise Kabsch fit.
pub fn rigid_registration(moving: &Curve, target: &Curve) -> Result<RigidFit> {
    if moving.n() != target.n() {
        return Err(Error::InvalidInput("registration needs equal sample counts".into()));
    }
    let p = moving.samples();
    let (mut rot, mut tr) = kabsch(p, target.samples());
    let mut iterations = 0;
    let mut last = f64::INFINITY;
    for it in 0..100 {
        iterations = it + 1;
        let moved: Vec<Vec3> = p.iter().map(|x| rot * x + tr).collect();
        let cps = target.closest_points(&moved, 1);
        let err = cps.iter().map(|(_, d)| d * d).sum::<f64>();
        let q: Vec<Vec3> = cps.into_iter().map(|(c, _)| c).collect();
        (rot, tr) = kabsch(p, &q);
        if (last - err).abs() <= 1e-15 * (1.0 + err) || err < 1e-28 {
            break;
        }
        last = err;
    }
    let moved = moving.with_samples(p.iter().map(|x| rot * x + tr).collect())?;
    let moved = Curve::new(
        moved.samples().to_vec(),
        moving.seg_len(),
        conjugated(moving.monodromy(), &rot, &tr),
        moving.basepoint_index(),
    )?;
    Ok(RigidFit { rotation: rot, translation: tr, hausdorff: hausdorff(&moved, target), iterations })
}

/// Monodromy of `g∘γ` for the rigid motion `g(p) = R p + t`.
fn conjugated(m: &Monodromy, rot: &Rotation3<f64>, tr: &Vec3) -> Monodromy {
    let q = nalgebra::UnitQuaternion::from_rotation_matrix(rot);
    let rotation = q * m.rotation * q.inverse();
    // g h g⁻¹ (p) = R(A(R⁻¹(p − t)) + a) + t
    let translation = rot * m.translation + tr - rotation * tr;
    Monodromy::new(rotation, translation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::{make_circle, make_helix, make_line, make_perturbed_circle};

    #[test]
    fn circle_smoke_ring() {
        let c = make_circle(1.0, 256).unwrap();
        let spec = FlowSpec::new(FlowField::single(1).unwrap(), 1e-3, 1).unwrap();
        let next = step(&c, &spec).unwrap();
        for (p, q) in c.samples().iter().zip(next.samples()) {
            let d = q - p;
            assert!((d - Vec3::z() * 1e-3).norm() < 1e-6, "{d:?}");
        }
    }

    #[test]
    fn line_is_fixed() {
        let l = make_line(2.0, 64).unwrap();
        let spec = FlowSpec::new(FlowField::single(1).unwrap(), 1e-4, 1).unwrap();
        let next = step(&l, &spec).unwrap();
        for (p, q) in l.samples().iter().zip(next.samples()) {
            assert!((p - q).norm() <= 1e-12);
        }
    }

    #[test]
    fn reparametrization_flow_keeps_shape() {
        let c = make_circle(1.0, 256).unwrap();
        let spec = FlowSpec::new(FlowField::single(0).unwrap(), 1e-3, 1).unwrap();
        let next = step(&c, &spec).unwrap();
        assert!(hausdorff(&c, &next) <= 1e-10, "{}", hausdorff(&c, &next));
        assert!((next.samples()[0] - c.samples()[0]).norm() > 9e-4);
    }

    #[test]
    fn rotation_flow_moves_translation() {
        // Off-axis screw monodromy: the rotation term must carry `a` along.
        let h = make_helix(1.0, 0.5, 1.0, 128).unwrap().translated(&Vec3::new(0.3, 0.0, 0.0)).unwrap();
        let field = FlowField::new(&[(-2, 1.0)], Some(AxisVector::e_z())).unwrap();
        let next = integrate_step(&h, &field, 0.1, Integrator::Rk4, 0).unwrap();
        assert!(next.check_invariants().holds(), "{:?}", next.check_invariants());
        let rot = Rotation3::from_axis_angle(&Vec3::z_axis(), 0.1);
        for (p, q) in h.samples().iter().zip(next.samples()) {
            assert!((rot * p - q).norm() < 1e-6);
        }
    }

    #[test]
    fn guard_rejects_large_steps() {
        let c = make_circle(1.0, 256).unwrap();
        let spec = FlowSpec::new(FlowField::single(3).unwrap(), 1e-3, 10).unwrap();
        assert!(matches!(evolve(&c, &spec), Err(Error::Unstable { .. })));
        let runaway = FlowField::new(&[(-1, 1e9)], Some(AxisVector::e_z())).unwrap();
        let spec = FlowSpec::new(runaway, 1e-2, 5).unwrap();
        assert!(matches!(evolve(&c, &spec), Err(Error::BlowUp { step: 1, .. })));
    }

    #[test]
    fn validation() {
        assert!(FlowSpec::new(FlowField::single(1).unwrap(), 0.0, 1).is_err());
        assert!(FlowSpec::new(FlowField::single(1).unwrap(), 1e-3, 0).is_err());
        assert!(matches!(FlowField::single(-1), Err(Error::MissingAxis { k: -1 })));
        assert!("rk5".parse::<Integrator>().is_err());
        assert_eq!("midpoint".parse::<Integrator>().unwrap(), Integrator::Midpoint);
    }

    #[test]
    fn reversibility() {
        let c = make_perturbed_circle(1.0, 0.05, 2, 128).unwrap();
        let f = FlowField::single(1).unwrap();
        let err = |dt: f64| {
            let fwd = integrate_step(&c, &f, dt, Integrator::Rk4, 0).unwrap();
            let back = integrate_step(&fwd, &f, -dt, Integrator::Rk4, 1).unwrap();
            c.samples().iter().zip(back.samples()).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
        };
        let (a, b) = (err(1e-3), err(5e-4));
        assert!(a < 1e-11, "{a}");
        assert!(a / b > 20.0, "{a} {b}");
    }

    #[test]
    fn helix_registration() {
        let h = make_helix(1.0, 1.0, 1.0, 128).unwrap();
        let rot = Rotation3::from_axis_angle(&Vec3::x_axis(), 0.4);
        let moved = Curve::new(
            h.samples().iter().map(|p| rot * p + Vec3::new(1.0, -2.0, 0.5)).collect(),
            h.seg_len(),
            conjugated(h.monodromy(), &rot, &Vec3::new(1.0, -2.0, 0.5)),
            0,
        )
        .unwrap();
        assert!(moved.check_invariants().holds());
        let fit = rigid_registration(&h, &moved).unwrap();
        assert!(fit.hausdorff < 1e-9, "{fit:?}");
    }

    #[test]
    fn trajectory_logs_and_csv() {
        let c = make_circle(1.0, 64).unwrap();
        let spec = FlowSpec::new(FlowField::single(1).unwrap(), 1e-3, 10).unwrap();
        let t = evolve(&c, &spec).unwrap();
        assert_eq!(t.snapshots.len(), 11);
        assert!(t.max_relative_drift(1).unwrap() < 1e-12);
        let csv = t.energy_csv();
        assert!(csv.starts_with("t,E_-2,E_-1,E_1,"));
        assert_eq!(csv.lines().count(), 12);
    }
}
