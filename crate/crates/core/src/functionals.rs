//! The Hamiltonians `E_{−2} … E_6` as quadratures over the fundamental domain.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::curve::{resample_arclength, Curve, CurveField, Stencil, Vec3};
use crate::error::{Error, Result};
use crate::frame::{total_torsion, TotalTorsion};
use crate::hierarchy::{gradient, AxisVector, Calculus};

pub const MIN_K: i32 = -2;
pub const MAX_K: i32 = 6;

/// Energies `E_k` for a range of `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub values: BTreeMap<i32, f64>,
    pub axis: Option<[f64; 3]>,
    /// Winding hint of the continuous total torsion branch.
    pub torsion_branch: i64,
}

impl EnergyReport {
    pub fn get(&self, k: i32) -> Option<f64> {
        self.values.get(&k).copied()
    }

    /// CSV rows `k,value,axis,branch`.
    pub fn to_csv(&self) -> String {
        let axis = self.axis.map_or(String::new(), |a| format!("{:.17e} {:.17e} {:.17e}", a[0], a[1], a[2]));
        let mut s = String::from("k,value,axis,branch\n");
        for (k, v) in &self.values {
            s.push_str(&format!("{k},{v:.17e},{axis},{}\n", self.torsion_branch));
        }
        s
    }
}

/// Kind of infinitesimal isometry whose flux defines `E_{−1}` or `E_{−2}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FluxKind {
    Translation,
    Rotation,
}

/// Flux functional: translation gives `½∫(γ×dγ, v)`, rotation gives
/// `−½∫(|γ − (γ,v)v|² dγ, v)`. The sign makes `−½|p⊥|²(v, dp)` the primitive
/// of `i_V det` for `V = v×p`, so that the gradient is `γ'×(v×γ)`.
/// The axis must be fixed by the monodromy.
pub fn flux_energy(kind: FluxKind, v: &AxisVector, curve: &Curve) -> Result<f64> {
    v.validate(curve)?;
    let v = v.get();
    let vel = curve.velocity();
    let dx = curve.seg_len();
    let sum: f64 = curve
        .samples()
        .iter()
        .zip(&vel)
        .map(|(p, d)| match kind {
            FluxKind::Translation => p.cross(d).dot(&v),
            FluxKind::Rotation => {
                let perp = p - v * p.dot(&v);
                -perp.norm_squared() * d.dot(&v)
            }
        })
        .sum();
    Ok(0.5 * sum * dx)
}

/// Pointwise Frenet-free data: `T, T', T'', T'''`.
fn derivatives(calc: &Calculus, order: usize) -> Vec<CurveField> {
    let mut out = vec![calc.tangent()];
    for i in 0..order {
        let next = calc.d(&out[i]);
        out.push(next);
    }
    out
}

fn det3(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    a.dot(&b.cross(c))
}

/// `E_k` for `−2 ≤ k ≤ 6`; `axis` is required for `k < 0`.
pub fn energy(k: i32, curve: &Curve, axis: Option<&AxisVector>) -> Result<f64> {
    let calc = Calculus::new(curve);
    energy_with(k, &calc, axis)
}

/// [`energy`] with a prepared calculus.
pub fn energy_with(k: i32, calc: &Calculus, axis: Option<&AxisVector>) -> Result<f64> {
    let curve = calc.curve();
    let n = curve.n();
    match k {
        -2 => flux_energy(FluxKind::Rotation, axis.ok_or(Error::MissingAxis { k })?, curve),
        -1 => flux_energy(FluxKind::Translation, axis.ok_or(Error::MissingAxis { k })?, curve),
        0 => Ok(0.0),
        1 => Ok(curve.arclength()),
        2 => Ok(torsion_energy(calc, &total_torsion(curve)).0),
        3 => {
            let d = derivatives(calc, 1);
            Ok(0.5 * calc.integrate(&d[1].values.iter().map(|v| v.norm_squared()).collect::<Vec<_>>()))
        }
        4 => {
            let d = derivatives(calc, 2);
            let f: Vec<f64> = (0..n).map(|i| det3(&d[0].values[i], &d[1].values[i], &d[2].values[i])).collect();
            Ok(-0.5 * calc.integrate(&f))
        }
        5 => {
            let d = derivatives(calc, 2);
            let f: Vec<f64> = (0..n)
                .map(|i| 0.5 * d[2].values[i].norm_squared() - 0.625 * d[1].values[i].norm_squared().powi(2))
                .collect();
            Ok(calc.integrate(&f))
        }
        6 => {
            let d = derivatives(calc, 3);
            let f: Vec<f64> = (0..n)
                .map(|i| {
                    let (t, a, b, c) = (&d[0].values[i], &d[1].values[i], &d[2].values[i], &d[3].values[i]);
                    -0.5 * det3(t, b, c) + 0.875 * a.norm_squared() * det3(t, a, b)
                })
                .collect();
            Ok(calc.integrate(&f))
        }
        _ => Err(Error::OutOfRange { k, min: MIN_K, max: MAX_K }),
    }
}

/// Total torsion as `(value, winding)`. With the 8th-order calculus and
/// curvature away from zero this is `∫τ ds`, equal to the holonomy mod 2π
/// because the Frenet frame is equivariant, placed on the holonomy branch.
/// Otherwise the parallel-transport holonomy itself.
fn torsion_energy(calc: &Calculus, hol: &TotalTorsion) -> (f64, i64) {
    let h = hol.value();
    if calc.stencil() != Stencil::Eighth {
        return (h, hol.winding);
    }
    let d = derivatives(calc, 2);
    let len = calc.curve().nominal_length();
    let kmin = d[1].values.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
    if !(kmin * len > 0.1) {
        return (h, hol.winding);
    }
    let tau: Vec<f64> = (0..d[0].len())
        .map(|i| det3(&d[0].values[i], &d[1].values[i], &d[2].values[i]) / d[1].values[i].norm_squared())
        .collect();
    let integral = calc.integrate(&tau);
    let shift = ((h - integral) / (2.0 * PI)).round();
    let value = integral + 2.0 * PI * shift;
    (value, ((value - hol.wrapped) / (2.0 * PI)).round() as i64)
}

/// All energies in `ks`; axis-dependent ones are skipped when `axis` is absent.
pub fn energy_report(curve: &Curve, ks: &[i32], axis: Option<&AxisVector>) -> Result<EnergyReport> {
    energy_report_with(&Calculus::new(curve), ks, axis)
}

/// [`energy_report`] with a prepared calculus.
pub fn energy_report_with(calc: &Calculus, ks: &[i32], axis: Option<&AxisVector>) -> Result<EnergyReport> {
    let mut values = BTreeMap::new();
    let mut branch = 0;
    for &k in ks {
        if k < 0 && axis.is_none() {
            continue;
        }
        if k == 2 {
            let (v, w) = torsion_energy(calc, &total_torsion(calc.curve()));
            branch = w;
            values.insert(k, v);
        } else {
            values.insert(k, energy_with(k, calc, axis)?);
        }
    }
    Ok(EnergyReport { values, axis: axis.map(|a| a.get().into()), torsion_branch: branch })
}

/// Result of a directional-derivative comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionalCheck {
    /// Richardson-extrapolated central difference of `E_k` along `δ`.
    pub finite_difference: f64,
    /// `⟨G_k, δ⟩` in `L²(ds)`.
    pub inner_product: f64,
    /// `‖G_k‖ ‖δ‖`, the natural scale of both numbers.
    pub scale: f64,
}

impl DirectionalCheck {
    /// `|fd − ip| / max(|fd|, |ip|, ‖G‖‖δ‖)`, zero when all vanish.
    pub fn relative_error(&self) -> f64 {
        let d = (self.finite_difference - self.inner_product).abs();
        let s = self.finite_difference.abs().max(self.inner_product.abs()).max(self.scale);
        if s > 0.0 {
            d / s
        } else {
            0.0
        }
    }

    /// Agreement within `rel` relative, or `1e-9` absolute.
    pub fn agrees(&self, rel: f64) -> bool {
        (self.finite_difference - self.inner_product).abs() <= 1e-9 || self.relative_error() <= rel
    }
}

fn perturbed(curve: &Curve, dir: &CurveField, h: f64) -> Result<Curve> {
    let pts: Vec<Vec3> = curve.samples().iter().zip(&dir.values).map(|(p, d)| p + d * h).collect();
    resample_arclength(&pts, curve.monodromy(), curve.n())
}

/// Compare the central difference of `E_k` with `⟨G_k, δ⟩`.
///
/// `E_k` is evaluated on arclength-resampled copies of `γ ± hδ`, so the
/// check is of the geometric functional. Two step sizes are combined by
/// Richardson extrapolation.
pub fn directional_derivative_check(
    k: i32,
    curve: &Curve,
    direction: &CurveField,
    h: f64,
    axis: Option<&AxisVector>,
) -> Result<DirectionalCheck> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput("step must be positive".into()));
    }
    if direction.len() != curve.n() {
        return Err(Error::InvalidInput("direction length does not match the curve".into()));
    }
    if k == 0 {
        return Ok(DirectionalCheck { finite_difference: 0.0, inner_product: 0.0, scale: 0.0 });
    }
    let e = |c: &Curve| energy(k, c, axis);
    let central = |s: f64| -> Result<f64> { Ok((e(&perturbed(curve, direction, s)?)? - e(&perturbed(curve, direction, -s)?)?) / (2.0 * s)) };
    let (d1, d2) = (central(h)?, central(0.5 * h)?);
    let fd = (4.0 * d2 - d1) / 3.0;
    let calc = Calculus::new(curve);
    let g = gradient(k, curve, axis)?;
    let ip = calc.dot(&g, direction);
    Ok(DirectionalCheck { finite_difference: fd, inner_product: ip, scale: calc.norm(&g) * calc.norm(direction) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::{make_circle, make_helix, make_line, make_perturbed_circle, random_direction};
    use std::f64::consts::PI;

    #[test]
    fn circle_energies() {
        let c = make_circle(1.0, 256).unwrap();
        let z = AxisVector::e_z();
        assert!((energy(1, &c, None).unwrap() - 2.0 * PI).abs() < 1e-10);
        assert!((energy(3, &c, None).unwrap() - PI).abs() < 1e-6);
        assert!((energy(-1, &c, Some(&z)).unwrap() - PI).abs() < 1e-8);
        assert!(energy(4, &c, None).unwrap().abs() < 1e-8);
        assert!((energy(5, &c, None).unwrap() + PI / 4.0).abs() < 1e-6);
        assert!(energy(-2, &c, Some(&z)).unwrap().abs() < 1e-8);
        assert!(energy(6, &c, None).unwrap().abs() < 1e-8);
        assert_eq!(energy(0, &c, None).unwrap(), 0.0);
    }

    #[test]
    fn helix_energies() {
        let h = make_helix(1.0, 1.0, 1.0, 512).unwrap();
        assert!((energy(2, &h, None).unwrap() - PI * 2f64.sqrt()).abs() < 1e-5);
        // κ = τ = 1/2, L = 2π√2.
        let l = 2.0 * PI * 2f64.sqrt();
        assert!((energy(3, &h, None).unwrap() - 0.125 * l).abs() < 1e-6);
        assert!((energy(4, &h, None).unwrap() + 0.5 * 0.125 * l).abs() < 1e-6);
    }

    #[test]
    fn flux_examples() {
        let c = make_circle(1.0, 256).unwrap();
        assert!((flux_energy(FluxKind::Translation, &AxisVector::e_z(), &c).unwrap() - PI).abs() < 1e-10);
        let x = AxisVector::new(Vec3::x()).unwrap();
        assert!(flux_energy(FluxKind::Translation, &x, &c).unwrap().abs() < 1e-10);
        let h = make_helix(1.0, 1.0, 0.3, 128).unwrap();
        assert!(matches!(flux_energy(FluxKind::Translation, &x, &h), Err(Error::MonodromyMismatch { .. })));
    }

    #[test]
    fn pappus_volume() {
        // Unit circle in the xz-plane centered at (2, 0, 0), revolved about e_z:
        // solid torus volume 2π·R·πr² = 4π².
        let n = 256;
        let pts: Vec<Vec3> = (0..n)
            .map(|i| {
                let phi = 2.0 * PI * i as f64 / n as f64;
                Vec3::new(2.0 + phi.cos(), 0.0, phi.sin())
            })
            .collect();
        let c = Curve::new(pts, 2.0 * PI / n as f64, crate::curve::Monodromy::identity(), 0).unwrap();
        let e = flux_energy(FluxKind::Rotation, &AxisVector::e_z(), &c).unwrap();
        let volume = 4.0 * PI * PI;
        assert!((e.abs() - volume / (2.0 * PI)).abs() < 1e-8, "{e}");
    }

    #[test]
    fn scaling_laws() {
        let c = make_perturbed_circle(1.0, 0.1, 5, 512).unwrap();
        let s = c.scaled(2.0).unwrap();
        for (k, p) in [(1, 1), (2, 0), (3, -1), (4, -2), (5, -3), (6, -4)] {
            let a = energy(k, &c, None).unwrap();
            let b = energy(k, &s, None).unwrap();
            let expect = a * 2f64.powi(p);
            assert!((b - expect).abs() <= 1e-8 * expect.abs().max(1e-12), "k={k} {a} {b}");
        }
    }

    #[test]
    fn planar_vanishing() {
        let pts: Vec<Vec3> = (0..256)
            .map(|i| {
                let phi = 2.0 * PI * i as f64 / 256.0;
                Vec3::new(phi.cos() * (1.0 + 0.2 * (3.0 * phi).cos()), phi.sin() * (1.0 + 0.2 * (3.0 * phi).cos()), 0.0)
            })
            .collect();
        let c = resample_arclength(&pts, &crate::curve::Monodromy::identity(), 256).unwrap();
        assert!(energy(4, &c, None).unwrap().abs() < 1e-10);
    }

    #[test]
    fn line_length() {
        assert!((energy(1, &make_line(3.0, 64).unwrap(), None).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn directional_checks() {
        let c = make_circle(1.0, 256).unwrap();
        let d = random_direction(&c, 1, 4);
        let r = directional_derivative_check(1, &c, &d, 1e-4, None).unwrap();
        assert!(r.agrees(1e-5), "{r:?}");
        let r0 = directional_derivative_check(0, &c, &d, 1e-4, None).unwrap();
        assert_eq!((r0.finite_difference, r0.inner_product), (0.0, 0.0));
        let h = make_helix(1.0, 1.0, 1.0, 256).unwrap();
        let d = random_direction(&h, 2, 4);
        let r = directional_derivative_check(3, &h, &d, 1e-4, None).unwrap();
        assert!(r.agrees(1e-4), "{r:?}");
    }

    #[test]
    fn gradients_match_all_orders() {
        let z = AxisVector::e_z();
        for c in [make_circle(1.0, 512).unwrap(), make_helix(1.0, 1.0, 1.0, 512).unwrap()] {
            for k in [-2, -1, 1, 2, 3, 4, 5, 6] {
                for s in 0..16 {
                    let d = random_direction(&c, s, 4);
                    let r = directional_derivative_check(k, &c, &d, 1e-4, Some(&z)).unwrap();
                    assert!(r.agrees(1e-4), "k={k} seed={s} {r:?}");
                }
            }
        }
    }

    #[test]
    fn torsion_integral_matches_holonomy() {
        for seed in 0..3 {
            let c = make_perturbed_circle(1.0, 0.05, seed, 512).unwrap();
            let hol = total_torsion(&c).value();
            let e2 = energy_with(2, &Calculus::with_stencil(&c, Stencil::Eighth), None).unwrap();
            assert!((hol - e2).abs() < 1e-8, "{hol} {e2}");
        }
        let h = make_helix(1.0, 1.0, 1.0, 128).unwrap();
        let calc = Calculus::with_stencil(&h, Stencil::Eighth);
        assert!((energy_with(2, &calc, None).unwrap() - PI * 2f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn eighth_order_energies_converge() {
        let e = |n| {
            let c = make_perturbed_circle(1.0, 0.05, 0, n).unwrap();
            let calc = Calculus::with_stencil(&c, Stencil::Eighth);
            [energy_with(2, &calc, None).unwrap(), energy_with(3, &calc, None).unwrap()]
        };
        let (a, b, c) = (e(128), e(256), e(512));
        for i in 0..2 {
            let r = (a[i] - b[i]).abs() / (b[i] - c[i]).abs();
            assert!(r > 100.0, "{i} {r}");
        }
    }
}
