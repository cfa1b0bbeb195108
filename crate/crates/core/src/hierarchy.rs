//! Variational gradients `G_k` and symplectic vector fields `Y_k`.
//!
//! `Y_0 = T` and `Y_{k+1} = T×Y_k' − ½ Σ_{i=1}^{k} (Y_i, Y_{k−i+1}) T` solve
//! the recursion `Y_k' + T×Y_{k+1} = 0` with zero integration constants.
//! Derivatives are taken in the actual arclength of the samples,
//! `d/ds = (d/dx)/σ` with `σ = |γ_x|`, so fields stay correct when a flow
//! lets `Δx` drift.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::curve::{ddx_with, Curve, CurveField, Stencil, Vec3};
use crate::error::{Error, Result};

/// Default maximum order of the hierarchy.
pub const DEFAULT_MAX_K: usize = 8;

/// Unit vector fixed by the monodromy rotation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisVector {
    v: Vec3,
}

impl AxisVector {
    pub fn new(v: Vec3) -> Result<Self> {
        let n = v.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidInput("axis must be a nonzero vector".into()));
        }
        Ok(Self { v: v / n })
    }

    pub fn e_z() -> Self {
        Self { v: Vec3::z() }
    }

    pub fn get(&self) -> Vec3 {
        self.v
    }

    /// Check `|A v − v| ≤ 1e-8` against a curve's monodromy.
    pub fn validate(&self, curve: &Curve) -> Result<()> {
        let defect = curve.monodromy().eigen_defect(&self.v);
        if defect > 1e-8 {
            Err(Error::MonodromyMismatch { defect })
        } else {
            Ok(())
        }
    }
}

/// Arclength calculus along one curve.
#[derive(Clone, Debug)]
pub struct Calculus<'a> {
    curve: &'a Curve,
    velocity: Vec<Vec3>,
    sigma: Vec<f64>,
    stencil: Stencil,
}

impl<'a> Calculus<'a> {
    pub fn new(curve: &'a Curve) -> Self {
        Self::with_stencil(curve, Stencil::Fourth)
    }

    pub fn with_stencil(curve: &'a Curve, stencil: Stencil) -> Self {
        let velocity = curve.velocity();
        let sigma = velocity.iter().map(|v| v.norm()).collect();
        Self { curve, velocity, sigma, stencil }
    }

    pub fn stencil(&self) -> Stencil {
        self.stencil
    }

    pub fn curve(&self) -> &Curve {
        self.curve
    }

    /// Speed `σ_i = |γ_x|` relative to the stored `Δx`.
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Parameter velocity `γ_x` (8th order).
    pub fn velocity(&self) -> &[Vec3] {
        &self.velocity
    }

    pub fn tangent(&self) -> CurveField {
        CurveField::new(self.velocity.iter().zip(&self.sigma).map(|(v, s)| v / *s).collect())
    }

    /// Arclength derivative `(d/dx f)/σ`.
    pub fn d(&self, f: &CurveField) -> CurveField {
        let mut out = ddx_with(f, self.curve, self.stencil);
        for (v, s) in out.values.iter_mut().zip(&self.sigma) {
            *v /= *s;
        }
        out
    }

    /// `∫ f ds` by the trapezoid rule on the uniform parameter grid.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.sigma).map(|(a, s)| a * s).sum::<f64>() * self.curve.seg_len()
    }

    /// `∫ (u, v) ds`.
    pub fn dot(&self, u: &CurveField, v: &CurveField) -> f64 {
        self.integrate(&u.dots(v))
    }

    /// `(∫ |u|² ds)^{1/2}`.
    pub fn norm(&self, u: &CurveField) -> f64 {
        self.dot(u, u).max(0.0).sqrt()
    }
}

/// `Y_0 .. Y_kmax` by the explicit recursion.
pub fn hierarchy(curve: &Curve, kmax: usize) -> Vec<CurveField> {
    hierarchy_with(&Calculus::new(curve), kmax)
}

/// [`hierarchy`] with a prepared calculus.
pub fn hierarchy_with(calc: &Calculus, kmax: usize) -> Vec<CurveField> {
    let t = calc.tangent();
    let mut ys = vec![t.clone()];
    for k in 0..kmax {
        let dy = calc.d(&ys[k]);
        let mut next = t.cross(&dy);
        let mut f = vec![0.0; t.len()];
        for i in 1..=k {
            for (fj, d) in f.iter_mut().zip(ys[i].dots(&ys[k - i + 1])) {
                *fj += d;
            }
        }
        for ((v, tj), fj) in next.values.iter_mut().zip(&t.values).zip(&f) {
            *v -= tj * (0.5 * fj);
        }
        ys.push(next);
    }
    ys
}

/// Symplectic gradient `Y_k` from the recursion.
pub fn symplectic_y(k: usize, curve: &Curve) -> CurveField {
    hierarchy(curve, k).pop().expect("non-empty hierarchy")
}

/// Symplectic gradients from Table 1 for `−2 ≤ k ≤ 3`.
pub fn table_y(k: i32, curve: &Curve, axis: Option<&AxisVector>) -> Result<CurveField> {
    let calc = Calculus::new(curve);
    let t = calc.tangent();
    match k {
        -2 | -1 => {
            let v = axis.ok_or(Error::MissingAxis { k })?.get();
            let vals = if k == -1 {
                vec![v; curve.n()]
            } else {
                curve.samples().iter().map(|p| v.cross(p)).collect()
            };
            Ok(CurveField::new(vals))
        }
        0 => Ok(t),
        1 => Ok(t.cross(&calc.d(&t))),
        2 => {
            let k1 = calc.d(&t);
            let k2 = calc.d(&k1);
            Ok(CurveField::new(
                k2.values.iter().zip(&k1.values).zip(&t.values).map(|((a, b), t)| -a - t * (1.5 * b.norm_squared())).collect(),
            ))
        }
        3 => {
            let k1 = calc.d(&t);
            let k2 = calc.d(&k1);
            let k3 = calc.d(&k2);
            Ok(CurveField::new(
                (0..curve.n())
                    .map(|i| {
                        let (t, a, b, c) = (t.values[i], k1.values[i], k2.values[i], k3.values[i]);
                        -t.cross(&c) - t.cross(&a) * (1.5 * a.norm_squared()) + t * t.dot(&a.cross(&b))
                    })
                    .collect(),
            ))
        }
        _ => Err(Error::OutOfRange { k, min: -2, max: 3 }),
    }
}

/// Variational gradients from Table 1 for `−2 ≤ k ≤ 3`.
pub fn gradient_g(k: i32, curve: &Curve, axis: Option<&AxisVector>) -> Result<CurveField> {
    let calc = Calculus::new(curve);
    let t = calc.tangent();
    match k {
        -2 | -1 => {
            let v = axis.ok_or(Error::MissingAxis { k })?.get();
            let vals = if k == -1 {
                t.values.iter().map(|t| t.cross(&v)).collect()
            } else {
                t.values.iter().zip(curve.samples()).map(|(t, p)| t.cross(&v.cross(p))).collect()
            };
            Ok(CurveField::new(vals))
        }
        0 => Ok(CurveField::zeros(curve.n())),
        1 => Ok(calc.d(&t).scale(-1.0)),
        2 => {
            let k2 = calc.d(&calc.d(&t));
            Ok(t.cross(&k2).scale(-1.0))
        }
        3 => {
            let k1 = calc.d(&t);
            let k2 = calc.d(&k1);
            let inner = CurveField::new(
                k2.values.iter().zip(&k1.values).zip(&t.values).map(|((a, b), t)| a + t * (1.5 * b.norm_squared())).collect(),
            );
            Ok(calc.d(&inner))
        }
        _ => Err(Error::OutOfRange { k, min: -2, max: 3 }),
    }
}

/// `G_k = T×Y_k` for any `k ≥ 0`.
pub fn gradient_from_y(k: usize, curve: &Curve) -> CurveField {
    let calc = Calculus::new(curve);
    let y = hierarchy_with(&calc, k).pop().expect("non-empty");
    calc.tangent().cross(&y)
}

/// Gradient for any `k ≥ −2`: Table 1 for `k < 0`, `T×Y_k` otherwise.
pub fn gradient(k: i32, curve: &Curve, axis: Option<&AxisVector>) -> Result<CurveField> {
    if k < 0 {
        gradient_g(k, curve, axis)
    } else {
        Ok(gradient_from_y(k as usize, curve))
    }
}

/// Symplectic field for any `k ≥ −2`.
pub fn symplectic(k: i32, curve: &Curve, axis: Option<&AxisVector>) -> Result<CurveField> {
    if k < 0 {
        table_y(k, curve, axis)
    } else {
        Ok(symplectic_y(k as usize, curve))
    }
}

/// `‖Y_k' + T×Y_{k+1}‖_{L²}`.
pub fn recursion_residual(k: usize, curve: &Curve) -> f64 {
    let calc = Calculus::new(curve);
    let ys = hierarchy_with(&calc, k + 1);
    let r = calc.d(&ys[k]).add(&calc.tangent().cross(&ys[k + 1]));
    calc.norm(&r)
}

/// `‖Y_k − Σ_{i<k} c_i Y_i − v‖_{L²}`.
pub fn criticality_residual(curve: &Curve, k: usize, multipliers: &[f64], axis_term: Option<Vec3>) -> Result<f64> {
    if multipliers.len() != k {
        return Err(Error::InvalidInput(format!("expected {k} multipliers, got {}", multipliers.len())));
    }
    let calc = Calculus::new(curve);
    let ys = hierarchy_with(&calc, k);
    let v = axis_term.unwrap_or_else(Vec3::zeros);
    let mut r = ys[k].clone();
    for (i, v_i) in r.values.iter_mut().enumerate() {
        for (j, c) in multipliers.iter().enumerate() {
            *v_i -= ys[j].values[i] * *c;
        }
        *v_i -= v;
    }
    Ok(calc.norm(&r))
}

/// Least-squares fit of a target field against a list of basis fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierFit {
    pub coefficients: Vec<f64>,
    /// Constant translation term `v` (zero when not fitted).
    pub axis_term: [f64; 3],
    /// L² norm of the residual field.
    pub residual: f64,
    /// Residual relative to the L² norm of the target.
    pub relative_residual: f64,
    /// Ratio of extreme singular values of the column-normalized matrix.
    pub condition: f64,
}

/// Minimize `‖target − Σ c_i basis_i − v‖` in `L²(ds)`.
pub fn fit_fields(calc: &Calculus, target: &CurveField, basis: &[CurveField], with_constant: bool) -> MultiplierFit {
    let n = target.len();
    let cols = basis.len() + if with_constant { 3 } else { 0 };
    let w: Vec<f64> = calc.sigma().iter().map(|s| (s * calc.curve().seg_len()).sqrt()).collect();
    let mut a = DMatrix::<f64>::zeros(3 * n, cols);
    let mut b = DVector::<f64>::zeros(3 * n);
    for i in 0..n {
        for c in 0..3 {
            let r = 3 * i + c;
            b[r] = target.values[i][c] * w[i];
            for (j, f) in basis.iter().enumerate() {
                a[(r, j)] = f.values[i][c] * w[i];
            }
            if with_constant {
                a[(r, basis.len() + c)] = w[i];
            }
        }
    }
    let scales: Vec<f64> = (0..cols).map(|j| a.column(j).norm().max(1e-300)).collect();
    for (j, s) in scales.iter().enumerate() {
        a.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let x = svd.solve(&b, 1e-12 * smax).expect("svd solve");
    let resid = (&a * &x - &b).norm();
    let mut coefficients: Vec<f64> = (0..basis.len()).map(|j| x[j] / scales[j]).collect();
    let mut axis_term = [0.0; 3];
    if with_constant {
        for c in 0..3 {
            axis_term[c] = x[basis.len() + c] / scales[basis.len() + c];
        }
    }
    for c in coefficients.iter_mut() {
        if c.abs() < 1e-300 {
            *c = 0.0;
        }
    }
    let tn = b.norm();
    MultiplierFit {
        coefficients,
        axis_term,
        residual: resid,
        relative_residual: if tn > 0.0 { resid / tn } else { 0.0 },
        condition: if smin > 0.0 { smax / smin } else { f64::INFINITY },
    }
}

/// Fit `Y_k = Σ_{i<k} c_i Y_i + v` (the constrained-criticality form).
pub fn fit_multipliers(curve: &Curve, k: usize, with_axis_term: bool) -> MultiplierFit {
    let calc = Calculus::new(curve);
    let ys = hierarchy_with(&calc, k);
    fit_fields(&calc, &ys[k], &ys[..k], with_axis_term)
}

/// Fit `G_target = Σ c_i G_i` over the listed lower gradients (`k ≥ 1`).
pub fn fit_gradient_multipliers(curve: &Curve, target: usize, lower: &[usize]) -> MultiplierFit {
    let calc = Calculus::new(curve);
    let kmax = lower.iter().copied().chain(std::iter::once(target)).max().unwrap_or(0);
    let ys = hierarchy_with(&calc, kmax);
    let t = calc.tangent();
    let g = |k: usize| t.cross(&ys[k]);
    let basis: Vec<CurveField> = lower.iter().map(|&k| g(k)).collect();
    fit_fields(&calc, &g(target), &basis, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::{make_circle, make_helix, make_line, make_perturbed_circle};

    fn max_diff(a: &CurveField, b: &CurveField) -> f64 {
        a.sub(b).max_norm()
    }

    #[test]
    fn circle_values() {
        let c = make_circle(1.0, 256).unwrap();
        let g1 = gradient_g(1, &c, None).unwrap();
        for (g, p) in g1.values.iter().zip(c.samples()) {
            assert!((g - p).norm() < 1e-6);
        }
        assert!(gradient_g(2, &c, None).unwrap().max_norm() < 1e-6);
        let g3 = gradient_g(3, &c, None).unwrap();
        for (g, p) in g3.values.iter().zip(c.samples()) {
            assert!((g + p * 0.5).norm() < 1e-6);
        }
        let y1 = symplectic_y(1, &c);
        assert!(y1.values.iter().all(|v| (v - Vec3::z()).norm() < 1e-6));
        let y2 = symplectic_y(2, &c);
        let t = c.tangent();
        assert!(max_diff(&y2, &t.scale(-0.5)) < 1e-6);
    }

    #[test]
    fn table_matches_recursion() {
        for c in [make_circle(1.0, 256).unwrap(), make_helix(1.0, 1.0, 1.0, 512).unwrap()] {
            for k in 0..=3 {
                let a = table_y(k, &c, None).unwrap();
                let b = symplectic_y(k as usize, &c);
                assert!(max_diff(&a, &b) < 1e-6, "k={k} {}", max_diff(&a, &b));
                let ga = gradient_g(k, &c, None).unwrap();
                let gb = gradient_from_y(k as usize, &c);
                assert!(max_diff(&ga, &gb) < 1e-6, "k={k} {}", max_diff(&ga, &gb));
            }
            assert!(gradient_from_y(0, &c).max_norm() < 1e-12);
        }
        // Different discretizations of the same fields agree at 4th order.
        let diff = |n| {
            let p = make_perturbed_circle(1.0, 0.1, 7, n).unwrap();
            (max_diff(&table_y(3, &p, None).unwrap(), &symplectic_y(3, &p)),
             max_diff(&gradient_g(3, &p, None).unwrap(), &gradient_from_y(3, &p)))
        };
        let (a, b) = (diff(256), diff(512));
        assert!(a.0 / b.0 > 12.0 && a.1 / b.1 > 12.0, "{a:?} {b:?}");
    }

    #[test]
    fn missing_axis_and_range() {
        let c = make_circle(1.0, 64).unwrap();
        assert!(matches!(gradient_g(-1, &c, None), Err(Error::MissingAxis { k: -1 })));
        assert!(matches!(gradient_g(4, &c, None), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn recursion_residual_examples() {
        assert!(recursion_residual(0, &make_circle(1.0, 256).unwrap()) < 1e-6);
        assert!(recursion_residual(1, &make_line(1.0, 64).unwrap()) < 1e-12);
        assert!(recursion_residual(2, &make_helix(1.0, 1.0, 1.0, 512).unwrap()) < 1e-5);
        let r = |n| recursion_residual(2, &make_perturbed_circle(1.0, 0.1, 7, n).unwrap());
        let ratio = r(256) / r(512);
        assert!((ratio - 16.0).abs() < 3.2, "{ratio}");
    }

    #[test]
    fn tangential_components() {
        let c = make_perturbed_circle(1.0, 0.1, 2, 512).unwrap();
        let ys = hierarchy(&c, 5);
        let t = &ys[0];
        for i in (0..512).step_by(37) {
            assert!((t.values[i].dot(&ys[0].values[i]) - 1.0).abs() < 1e-8);
            assert!(t.values[i].dot(&ys[1].values[i]).abs() < 1e-8);
            for k in 2..=5 {
                let f: f64 = (1..k).map(|j| ys[k - j].values[i].dot(&ys[j].values[i])).sum();
                assert!((t.values[i].dot(&ys[k].values[i]) + 0.5 * f).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn planarity() {
        let ys = hierarchy(&make_circle(1.5, 256).unwrap(), 7);
        for (k, y) in ys.iter().enumerate() {
            for v in &y.values {
                if k % 2 == 0 {
                    assert!(v.z.abs() < 1e-8);
                } else {
                    assert!(v.x.abs() < 1e-8 && v.y.abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn formal_unit_norm() {
        let c = make_perturbed_circle(1.0, 0.05, 4, 512).unwrap();
        let ys = hierarchy(&c, 6);
        for m in 1..=6 {
            for i in (0..512).step_by(29) {
                let s: f64 = (0..=m).map(|k| ys[k].values[i].dot(&ys[m - k].values[i])).sum();
                assert!(s.abs() < 1e-6, "m={m} {s}");
            }
        }
    }

    #[test]
    fn degree_scaling() {
        for k in 1..=4 {
            let m = |r: f64| symplectic_y(k, &make_circle(r, 256).unwrap()).max_norm();
            let (a, b, c) = (m(1.0), m(2.0), m(4.0));
            let s = 2f64.powi(k as i32);
            assert!((a / b / s - 1.0).abs() < 0.05);
            assert!((b / c / s - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn equivariance_of_fields() {
        let h = make_helix(1.0, 0.7, 0.6, 256).unwrap();
        let ys = hierarchy(&h, 3);
        // Y_k at the copy of the curve shifted by one period is A Y_k.
        let shifted = {
            let n = h.n();
            let pts: Vec<Vec3> = (0..n).map(|i| h.point((i + n) as isize)).collect();
            h.with_samples(pts).unwrap()
        };
        let ys2 = hierarchy(&shifted, 3);
        for k in 0..=3 {
            for i in 0..256 {
                let a = h.monodromy().rotate(&ys[k].values[i]);
                assert!((a - ys2[k].values[i]).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn elastica_fits() {
        let c = make_circle(1.0, 256).unwrap();
        let fit = fit_multipliers(&c, 2, true);
        assert!(fit.residual < 1e-6, "{fit:?}");
        assert!((fit.coefficients[0] + 0.5).abs() < 1e-6);
        let residual =
            criticality_residual(&c, 2, &fit.coefficients, Some(Vec3::from(fit.axis_term))).unwrap();
        assert!((residual - fit.residual).abs() < 1e-9);
        let h = make_helix(1.0, 1.0, 1.0, 512).unwrap();
        assert!(fit_multipliers(&h, 2, true).residual < 1e-5);
        let p = make_perturbed_circle(1.0, 0.1, 0, 512).unwrap();
        assert!(fit_multipliers(&p, 2, true).residual > 1e-2);
    }
}
