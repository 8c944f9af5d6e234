//! L_p and sup norms of diffusion polynomials under the normalized measure.
//!
//! Paths by exponent:
//! - p = 2: Parseval, ‖P‖₂ = ‖a‖₂ exactly (orthonormal basis).
//! - even integer p: quadrature on a rule whose exactness covers |P|^p;
//!   tensor-equispaced FFT grids on tori, Gauss-Legendre × azimuthal FFT on
//!   the sphere.
//! - p = 1 and non-even p: sign-segment integration. On T¹ the zeros of P are
//!   located and each smooth segment is integrated by antiderivative (p = 1,
//!   machine accuracy) or chunked Gauss-Legendre. On S² the azimuthal
//!   integral is handled segment-exactly per polar row and the polar
//!   direction by Gauss-Legendre with a doubling convergence check. Tensor
//!   grids with a doubling check cover T², T³.
//! - p = ∞: oversampled grid maximum with local parabola refinement, with
//!   the ρ vs 2ρ difference as the declared accuracy.

use crate::error::{Error, Result};
use crate::manifold::{ManifoldKind, ManifoldModel, Point};
use crate::numerics::gauss_legendre;
use crate::pointsets::MZRule;
use crate::spectrum::{normalized_assoc_legendre_table, packed_lm, BasisLabel, SpectralSpace};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2, TAU};
use std::sync::{Arc, Mutex, RwLock};

/// A norm exponent in [1, ∞]; ∞ is spelled "inf" in CLI and file formats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t == "∞" {
            return Ok(Exponent::Infinity);
        }
        let v: f64 = t
            .parse()
            .map_err(|_| Error::invalid(format!("cannot parse exponent {s:?}")))?;
        if !(v >= 1.0) {
            return Err(Error::domain(format!("exponent must be in [1, inf], got {v}")));
        }
        Ok(Exponent::Finite(v))
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Exponent::Infinity)
    }

    /// Total order with ∞ greatest.
    pub fn le(&self, other: &Exponent) -> bool {
        match (self, other) {
            (Exponent::Infinity, Exponent::Infinity) => true,
            (Exponent::Infinity, _) => false,
            (_, Exponent::Infinity) => true,
            (Exponent::Finite(a), Exponent::Finite(b)) => a <= b,
        }
    }
}

impl std::fmt::Display for Exponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Exponent::Infinity => write!(f, "inf"),
            Exponent::Finite(v) => write!(f, "{v}"),
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NormMethod {
    #[serde(rename = "exact-quadrature")]
    ExactQuadrature,
    #[serde(rename = "oversampled-quadrature")]
    OversampledQuadrature,
    #[serde(rename = "grid-max-refined")]
    GridMaxRefined,
}

/// A computed norm with its method and declared relative accuracy.
#[derive(Debug, Clone, Copy)]
pub struct NormReport {
    pub p: Exponent,
    pub value: f64,
    pub method: NormMethod,
    /// Relative accuracy declaration; exact paths report the roundoff floor,
    /// adaptive paths the final doubling difference. `INFINITY` marks a
    /// caller-supplied rule whose accuracy was not assessed.
    pub declared_accuracy: f64,
}

impl Serialize for NormReport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("NormReport", 4)?;
        st.serialize_field("p", &self.p)?;
        st.serialize_field("value", &self.value)?;
        st.serialize_field("method", &self.method)?;
        st.serialize_field("declared_accuracy", &self.declared_accuracy)?;
        st.end()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NormOptions {
    /// Grid density per unit frequency for oversampled paths and the sup
    /// norm (ρ ≥ 2).
    pub oversample: f64,
    /// Accept an adaptive value when the R vs 2R relative difference falls
    /// below this tolerance.
    pub convergence_tol: f64,
    /// Cap on resolution doublings before reporting an accuracy failure.
    pub max_refinements: u32,
    /// Grid local maxima refined when locating the sup.
    pub sup_candidates: usize,
}

impl Default for NormOptions {
    fn default() -> Self {
        NormOptions {
            oversample: 8.0,
            convergence_tol: 1e-6,
            max_refinements: 6,
            sup_candidates: 12,
        }
    }
}

/// Explicit quadrature rule (nodes, positive weights summing to 1) with a
/// declared exactness contract: products of basis functions whose total
/// degree (torus: lattice frequency; sphere: harmonic degree) does not
/// exceed `exactness_degree` integrate exactly.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub exactness_degree: Option<f64>,
}

impl QuadratureRule {
    pub fn from_uniform_grid(m: &ManifoldModel, resolution: usize) -> Result<Self> {
        let grid = m.uniform_grid(resolution)?;
        let exactness = match m.kind() {
            ManifoldKind::Torus(_) => resolution as f64 - 1.0,
            ManifoldKind::Sphere2 => 2.0 * resolution as f64 - 1.0,
        };
        let (points, weights) = grid.into_iter().unzip();
        Ok(QuadratureRule { points, weights, exactness_degree: Some(exactness) })
    }
}

/// Rule argument for [`lp_norm_with_rule`].
pub enum NormRule<'a> {
    Quadrature(&'a QuadratureRule),
    Mz(&'a MZRule),
}

/// Norm of P_a through a caller-supplied rule. Even integer p with
/// sufficient declared exactness is exact; anything else requires the
/// explicit `allow_oversample` opt-in and is never silently approximated.
pub fn lp_norm_with_rule(
    space: &SpectralSpace,
    coeffs: &[f64],
    p: Exponent,
    rule: NormRule<'_>,
    allow_oversample: bool,
) -> Result<NormReport> {
    if coeffs.len() != space.dim() {
        return Err(Error::invalid(format!(
            "coefficient length {} != space dimension {}",
            coeffs.len(),
            space.dim()
        )));
    }
    let (points, weights, exactness): (&[Point], &[f64], Option<f64>) = match &rule {
        NormRule::Quadrature(q) => (&q.points, &q.weights, q.exactness_degree),
        NormRule::Mz(mz) => (mz.set().points(), mz.weights(), None),
    };
    if points.first().map(|p| space.manifold().validate_point(p)).transpose()?.is_none() {
        return Err(Error::invalid("empty rule".to_string()));
    }
    let needed_exactness = |p: f64| -> f64 {
        match space.manifold().kind() {
            ManifoldKind::Torus(_) => p * space.degree().floor(),
            ManifoldKind::Sphere2 => p * space.max_sphere_degree().unwrap_or(0) as f64,
        }
    };
    let exact = match p {
        Exponent::Finite(pf) if is_even_integer(pf) => {
            exactness.is_some_and(|e| e + 1e-9 >= needed_exactness(pf))
        }
        _ => false,
    };
    if !exact && !allow_oversample {
        return Err(Error::Precondition(format!(
            "rule exactness {exactness:?} insufficient for p = {p} at degree {} and \
             oversampling not allowed",
            space.degree()
        )));
    }
    let mat = space.evaluate_basis(points)?;
    let values: Vec<f64> = (0..mat.rows)
        .map(|i| mat.row(i).iter().zip(coeffs).map(|(b, c)| b * c).sum())
        .collect();
    let value = match p {
        Exponent::Infinity => values.iter().fold(0.0f64, |acc, v| acc.max(v.abs())),
        Exponent::Finite(pf) => {
            if !(pf >= 1.0) {
                return Err(Error::domain(format!("exponent must be >= 1, got {pf}")));
            }
            let s: f64 = weights.iter().zip(&values).map(|(w, v)| w * v.abs().powf(pf)).sum();
            s.powf(1.0 / pf)
        }
    };
    Ok(NormReport {
        p,
        value,
        method: if exact {
            NormMethod::ExactQuadrature
        } else if p.is_infinite() {
            NormMethod::GridMaxRefined
        } else {
            NormMethod::OversampledQuadrature
        },
        declared_accuracy: if exact { 1e-13 } else { f64::INFINITY },
    })
}

fn is_even_integer(p: f64) -> bool {
    p >= 2.0 && (p - p.round()).abs() < 1e-9 && (p.round() as i64) % 2 == 0
}

fn next_pow2(x: usize) -> usize {
    x.next_power_of_two()
}

/// Trigonometric polynomial c₀ + Re Σ_{m≥1} v_m e^{imθ} (+ optional linear
/// term), evaluated by complex Horner: one sin_cos per call instead of one
/// per frequency.
struct CirclePoly {
    constant: f64,
    linear: f64,
    coef: Vec<Complex<f64>>,
}

impl CirclePoly {
    fn value(&self, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        let z = Complex::new(c, s);
        let mut acc = Complex::new(0.0, 0.0);
        for v in self.coef.iter().rev() {
            acc = *v + z * acc;
        }
        self.constant + self.linear * theta + (z * acc).re
    }

    /// Termwise antiderivative (the mean term becomes linear).
    fn antiderivative(&self) -> CirclePoly {
        CirclePoly {
            constant: 0.0,
            linear: self.constant,
            coef: self
                .coef
                .iter()
                .enumerate()
                .map(|(i, v)| v * Complex::new(0.0, -1.0) / (i as f64 + 1.0))
                .collect(),
        }
    }
}

/// Norm engine for one spectral space: caches FFT plans, sphere Legendre
/// tables, and grids across calls. All methods are pure given the
/// coefficient vector, so one engine can serve many concurrent trials.
pub struct NormEngine {
    space: Arc<SpectralSpace>,
    opts: NormOptions,
    planner: Mutex<FftPlanner<f64>>,
    plans: RwLock<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>,
    sphere_tables: RwLock<HashMap<usize, Arc<SphereTables>>>,
    /// (frequency m, cos index, sin index) triples for torus spaces.
    torus_terms: Option<TorusTerms>,
}

struct TorusTerms {
    d: usize,
    /// Half-lattice vectors with the positions of their cos/sin coefficients.
    entries: Vec<(Vec<i64>, usize, usize)>,
}

pub(crate) struct SphereTables {
    g: usize,
    /// cos θ_i Gauss-Legendre nodes and normalized weights (sum 1).
    cos_nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Packed normalized associated Legendre values per node.
    rows: Vec<Vec<f64>>,
}

/// Discrete grid used by the worst-factor ascent as a norm surrogate.
pub(crate) enum AscentGrid {
    Torus { r: usize },
    Sphere { tables: Arc<SphereTables>, a: usize },
}

impl NormEngine {
    pub fn new(space: Arc<SpectralSpace>) -> Self {
        Self::with_options(space, NormOptions::default())
    }

    pub fn with_options(space: Arc<SpectralSpace>, opts: NormOptions) -> Self {
        let torus_terms = match space.manifold().kind() {
            ManifoldKind::Torus(d) => {
                let mut entries = Vec::new();
                let pairs = space.eigenpairs();
                let mut k = 0;
                while k < pairs.len() {
                    match &pairs[k].label {
                        BasisLabel::Constant => k += 1,
                        BasisLabel::TorusCos(m) => {
                            debug_assert!(matches!(&pairs[k + 1].label, BasisLabel::TorusSin(m2) if m2 == m));
                            entries.push((m.clone(), k, k + 1));
                            k += 2;
                        }
                        other => unreachable!("unexpected torus label {other:?}"),
                    }
                }
                Some(TorusTerms { d, entries })
            }
            ManifoldKind::Sphere2 => None,
        };
        NormEngine {
            space,
            opts,
            planner: Mutex::new(FftPlanner::new()),
            plans: RwLock::new(HashMap::new()),
            sphere_tables: RwLock::new(HashMap::new()),
            torus_terms,
        }
    }

    pub fn space(&self) -> &Arc<SpectralSpace> {
        &self.space
    }

    pub fn options(&self) -> &NormOptions {
        &self.opts
    }

    fn check_coeffs(&self, coeffs: &[f64]) -> Result<()> {
        if coeffs.len() != self.space.dim() {
            return Err(Error::invalid(format!(
                "coefficient length {} != space dimension {}",
                coeffs.len(),
                self.space.dim()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("coefficients must be finite".to_string()));
        }
        Ok(())
    }

    /// Norm for any exponent in [1, ∞].
    pub fn norm(&self, coeffs: &[f64], p: Exponent) -> Result<NormReport> {
        match p {
            Exponent::Infinity => self.sup_norm(coeffs),
            Exponent::Finite(pf) => self.lp_norm(coeffs, pf),
        }
    }

    /// L_p norm for finite p ≥ 1.
    pub fn lp_norm(&self, coeffs: &[f64], p: f64) -> Result<NormReport> {
        self.check_coeffs(coeffs)?;
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::domain(format!("lp_norm requires p in [1, inf), got {p}")));
        }
        if self.space.dim() == 1 {
            return Ok(NormReport {
                p: Exponent::Finite(p),
                value: coeffs[0].abs(),
                method: NormMethod::ExactQuadrature,
                declared_accuracy: 0.0,
            });
        }
        if (p - 2.0).abs() < 1e-12 {
            // Parseval: exact in O(N).
            let value = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
            return Ok(NormReport {
                p: Exponent::Finite(2.0),
                value,
                method: NormMethod::ExactQuadrature,
                declared_accuracy: 1e-15,
            });
        }
        if is_even_integer(p) {
            return self.even_norm(coeffs, p.round() as usize);
        }
        match self.space.manifold().kind() {
            ManifoldKind::Torus(1) => self.torus1_segment_norm(coeffs, p),
            ManifoldKind::Torus(_) => self.torus_adaptive_norm(coeffs, p),
            ManifoldKind::Sphere2 => self.sphere_hybrid_norm(coeffs, p),
        }
    }

    /// Sup norm with the engine's default oversampling.
    pub fn sup_norm(&self, coeffs: &[f64]) -> Result<NormReport> {
        self.sup_norm_with(coeffs, self.opts.oversample)
    }

    /// Sup norm with explicit oversampling ρ ≥ 2: grid maximum at densities
    /// ρ and 2ρ with local parabola refinement; declared accuracy is their
    /// relative difference.
    pub fn sup_norm_with(&self, coeffs: &[f64], rho: f64) -> Result<NormReport> {
        self.check_coeffs(coeffs)?;
        if !(rho >= 2.0) {
            return Err(Error::precondition(format!("sup_norm requires rho >= 2, got {rho}")));
        }
        if self.space.dim() == 1 {
            return Ok(NormReport {
                p: Exponent::Infinity,
                value: coeffs[0].abs(),
                method: NormMethod::GridMaxRefined,
                declared_accuracy: 0.0,
            });
        }
        let coarse = self.sup_pass(coeffs, rho)?;
        let fine = self.sup_pass(coeffs, 2.0 * rho)?;
        let value = coarse.max(fine);
        let declared = (coarse - fine).abs() / value.max(f64::MIN_POSITIVE);
        Ok(NormReport {
            p: Exponent::Infinity,
            value,
            method: NormMethod::GridMaxRefined,
            declared_accuracy: declared,
        })
    }

    // ---- even integer p ------------------------------------------------

    fn even_norm(&self, coeffs: &[f64], p: usize) -> Result<NormReport> {
        let value = match self.space.manifold().kind() {
            ManifoldKind::Torus(_) => {
                let max_freq = self.space.degree().floor() as usize;
                let r = next_pow2((p * max_freq + 2).max(4));
                let values = self.torus_grid_values(coeffs, r);
                let mean: f64 = values.iter().map(|v| v.abs().powi(p as i32)).sum::<f64>()
                    / values.len() as f64;
                mean.powf(1.0 / p as f64)
            }
            ManifoldKind::Sphere2 => {
                let l = self.space.max_sphere_degree().unwrap_or(0) as usize;
                let g = (p * l + 2).div_ceil(2).max(2);
                let a = next_pow2((p * l + 2).max(8));
                let tables = self.sphere_tables(g);
                let values = self.sphere_grid_values(coeffs, &tables, a);
                let mut acc = 0.0;
                for (i, w) in tables.weights.iter().enumerate() {
                    let row = &values[i * a..(i + 1) * a];
                    let row_mean: f64 =
                        row.iter().map(|v| v.abs().powi(p as i32)).sum::<f64>() / a as f64;
                    acc += w * row_mean;
                }
                acc.powf(1.0 / p as f64)
            }
        };
        Ok(NormReport {
            p: Exponent::Finite(p as f64),
            value,
            method: NormMethod::ExactQuadrature,
            declared_accuracy: 1e-13,
        })
    }

    // ---- torus grids ----------------------------------------------------

    fn plan(&self, len: usize) -> Arc<dyn Fft<f64>> {
        self.plan_dir(len, false)
    }

    fn plan_dir(&self, len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
        if let Some(p) = self.plans.read().unwrap().get(&(len, forward)) {
            return p.clone();
        }
        let plan = if forward {
            self.planner.lock().unwrap().plan_fft_forward(len)
        } else {
            self.planner.lock().unwrap().plan_fft_inverse(len)
        };
        self.plans.write().unwrap().insert((len, forward), plan.clone());
        plan
    }

    /// Values of P on the tensor grid (2πj/r)_{j<r} per axis, via zero-padded
    /// inverse FFTs; length r^d, axis-0 fastest.
    fn torus_grid_values(&self, coeffs: &[f64], r: usize) -> Vec<f64> {
        let terms = self.torus_terms.as_ref().expect("torus engine");
        let d = terms.d;
        let total = r.pow(d as u32);
        let mut buf = vec![Complex::new(0.0, 0.0); total];
        buf[0] = Complex::new(coeffs[0], 0.0);
        let idx_of = |m: &[i64]| -> usize {
            let mut idx = 0usize;
            let mut stride = 1usize;
            for &mi in m {
                let wrapped = mi.rem_euclid(r as i64) as usize;
                idx += wrapped * stride;
                stride *= r;
            }
            idx
        };
        for (m, ci, si) in &terms.entries {
            debug_assert!(m.iter().all(|&mi| (mi.unsigned_abs() as usize) < r));
            let c = Complex::new(coeffs[*ci] / SQRT_2, -coeffs[*si] / SQRT_2);
            let neg: Vec<i64> = m.iter().map(|&mi| -mi).collect();
            buf[idx_of(m)] += c;
            buf[idx_of(&neg)] += c.conj();
        }
        let plan = self.plan(r);
        if d == 1 {
            plan.process(&mut buf);
        } else {
            // FFT along each axis in turn.
            let mut line = vec![Complex::new(0.0, 0.0); r];
            for axis in 0..d {
                let stride = r.pow(axis as u32);
                let lines = total / r;
                for l in 0..lines {
                    // Start offset of this line in the cube.
                    let block = l / stride;
                    let within = l % stride;
                    let base = block * stride * r + within;
                    for (j, slot) in line.iter_mut().enumerate() {
                        *slot = buf[base + j * stride];
                    }
                    plan.process(&mut line);
                    for (j, v) in line.iter().enumerate() {
                        buf[base + j * stride] = *v;
                    }
                }
            }
        }
        buf.into_iter().map(|z| z.re).collect()
    }

    /// Adaptive tensor-trapezoid norm for non-even p on T², T³.
    fn torus_adaptive_norm(&self, coeffs: &[f64], p: f64) -> Result<NormReport> {
        let max_freq = self.space.degree().floor().max(1.0);
        let mut r = next_pow2(((self.opts.oversample * max_freq) as usize).max(16));
        let eval = |r: usize| -> f64 {
            let values = self.torus_grid_values(coeffs, r);
            let mean: f64 =
                values.iter().map(|v| v.abs().powf(p)).sum::<f64>() / values.len() as f64;
            mean.powf(1.0 / p)
        };
        let mut prev = eval(r);
        for _ in 0..self.opts.max_refinements {
            r *= 2;
            let value = eval(r);
            let diff = (value - prev).abs() / value.abs().max(f64::MIN_POSITIVE);
            if diff <= self.opts.convergence_tol {
                return Ok(NormReport {
                    p: Exponent::Finite(p),
                    value,
                    method: NormMethod::OversampledQuadrature,
                    declared_accuracy: diff,
                });
            }
            prev = value;
        }
        Err(Error::accuracy(format!(
            "torus L_{p} norm did not converge to {} within {} doublings (last grid {r})",
            self.opts.convergence_tol, self.opts.max_refinements
        )))
    }

    // ---- T¹ segment path -------------------------------------------------

    /// Dense complex-coefficient form of a T¹ polynomial for fast pointwise
    /// evaluation.
    fn circle_poly(&self, coeffs: &[f64]) -> CirclePoly {
        let terms = self.torus_terms.as_ref().expect("torus engine");
        let max_freq = self.space.degree().floor() as usize;
        let mut coef = vec![Complex::new(0.0, 0.0); max_freq];
        for (m, ci, si) in &terms.entries {
            let idx = m[0] as usize - 1;
            coef[idx] = Complex::new(SQRT_2 * coeffs[*ci], -SQRT_2 * coeffs[*si]);
        }
        CirclePoly { constant: coeffs[0], linear: 0.0, coef }
    }

    /// Exact-by-segments L_p on the circle: locate the zeros of P, then
    /// integrate each sign-constant segment by antiderivative (p = 1) or
    /// chunked Gauss-Legendre (fractional p).
    fn torus1_segment_norm(&self, coeffs: &[f64], p: f64) -> Result<NormReport> {
        let terms = self.torus_terms.as_ref().expect("torus engine");
        if terms.entries.is_empty() {
            return Ok(NormReport {
                p: Exponent::Finite(p),
                value: coeffs[0].abs(),
                method: NormMethod::ExactQuadrature,
                declared_accuracy: 0.0,
            });
        }
        let poly = self.circle_poly(coeffs);
        let eval = |theta: f64| poly.value(theta);
        let max_freq = self.space.degree().floor().max(1.0);
        let r = next_pow2(((self.opts.oversample * max_freq) as usize).max(64));
        let grid = self.torus_grid_values(coeffs, r);
        let step = TAU / r as f64;
        // Zero-location tolerance 1e-7: the induced integral error per zero
        // is |P'|·δ², summing to well under 1e-10 relative at these degrees.
        let mut zeros: Vec<f64> = Vec::new();
        for i in 0..r {
            let a = grid[i];
            let b = grid[(i + 1) % r];
            if a == 0.0 {
                zeros.push(i as f64 * step);
            } else if a * b < 0.0 {
                let lo = i as f64 * step;
                let z = crate::numerics::brent_root(eval, lo, lo + step, 1e-7);
                zeros.push(z);
            }
        }
        let declared = (max_freq * max_freq * 4e-14).max(1e-13);
        let is_p1 = (p - 1.0).abs() < 1e-12;
        if zeros.is_empty() {
            // Single-signed: the mean-absolute value is |mean| for p = 1;
            // otherwise integrate the smooth |P|^p over the whole circle.
            if is_p1 {
                return Ok(NormReport {
                    p: Exponent::Finite(1.0),
                    value: coeffs[0].abs(),
                    method: NormMethod::ExactQuadrature,
                    declared_accuracy: 1e-14,
                });
            }
            let value = self
                .segment_integral_gl(&eval, 0.0, TAU, p, max_freq)
                .powf(1.0 / p);
            return Ok(NormReport {
                p: Exponent::Finite(p),
                value,
                method: NormMethod::OversampledQuadrature,
                declared_accuracy: 1e-9,
            });
        }
        let mut value_acc = 0.0;
        if is_p1 {
            let anti = poly.antiderivative();
            for j in 0..zeros.len() {
                let lo = zeros[j];
                let hi = if j + 1 < zeros.len() { zeros[j + 1] } else { zeros[0] + TAU };
                value_acc += (anti.value(hi) - anti.value(lo)).abs();
            }
            return Ok(NormReport {
                p: Exponent::Finite(1.0),
                value: value_acc / TAU,
                method: NormMethod::ExactQuadrature,
                declared_accuracy: declared,
            });
        }
        for j in 0..zeros.len() {
            let lo = zeros[j];
            let hi = if j + 1 < zeros.len() { zeros[j + 1] } else { zeros[0] + TAU };
            value_acc += self.segment_integral_gl(&eval, lo, hi, p, max_freq);
        }
        Ok(NormReport {
            p: Exponent::Finite(p),
            value: (value_acc / TAU).powf(1.0 / p),
            method: NormMethod::OversampledQuadrature,
            declared_accuracy: declared.max(1e-9),
        })
    }

    /// ∫ |f|^p over [lo, hi] in chunks short enough for the fixed
    /// Gauss-Legendre order to resolve the oscillation.
    fn segment_integral_gl<F: Fn(f64) -> f64>(
        &self,
        f: &F,
        lo: f64,
        hi: f64,
        p: f64,
        max_freq: f64,
    ) -> f64 {
        let (xs, ws) = gauss_legendre(16);
        let chunk = PI / max_freq;
        let chunks = ((hi - lo) / chunk).ceil().max(1.0) as usize;
        let h = (hi - lo) / chunks as f64;
        let mut acc = 0.0;
        for c in 0..chunks {
            let a = lo + c as f64 * h;
            let mid = a + h / 2.0;
            let half = h / 2.0;
            for (x, w) in xs.iter().zip(&ws) {
                acc += w * half * f(mid + half * x).abs().powf(p);
            }
        }
        acc
    }

    // ---- sphere ----------------------------------------------------------

    fn sphere_tables(&self, g: usize) -> Arc<SphereTables> {
        if let Some(t) = self.sphere_tables.read().unwrap().get(&g) {
            return t.clone();
        }
        let lmax = self.space.max_sphere_degree().unwrap_or(0);
        let (nodes, raw_w) = gauss_legendre(g);
        let rows = nodes
            .iter()
            .map(|&x| {
                let sin_theta = (1.0 - x * x).max(0.0).sqrt();
                normalized_assoc_legendre_table(lmax, x, sin_theta)
            })
            .collect();
        let tables = Arc::new(SphereTables {
            g,
            cos_nodes: nodes,
            weights: raw_w.iter().map(|w| w / 2.0).collect(),
            rows,
        });
        self.sphere_tables.write().unwrap().insert(g, tables.clone());
        tables
    }

    /// Azimuthal Fourier profile of P along one polar row: c_m, s_m with
    /// P(θ_i, φ) = c_0 + Σ_{m≥1} c_m cos(mφ) + s_m sin(mφ).
    fn sphere_row_profile(&self, coeffs: &[f64], table: &[f64], c: &mut [f64], s: &mut [f64]) {
        c.fill(0.0);
        s.fill(0.0);
        for (pair, &a) in self.space.eigenpairs().iter().zip(coeffs) {
            match pair.label {
                BasisLabel::Constant => c[0] += a,
                BasisLabel::SphereZonal { l } => c[0] += a * table[packed_lm(l, 0)],
                BasisLabel::SphereCos { l, m } => {
                    c[m as usize] += SQRT_2 * a * table[packed_lm(l, m)]
                }
                BasisLabel::SphereSin { l, m } => {
                    s[m as usize] += SQRT_2 * a * table[packed_lm(l, m)]
                }
                _ => unreachable!("sphere space holds sphere labels"),
            }
        }
    }

    /// Values of P on the g × a product grid (row-major over polar rows).
    fn sphere_grid_values(&self, coeffs: &[f64], tables: &SphereTables, a: usize) -> Vec<f64> {
        let lmax = self.space.max_sphere_degree().unwrap_or(0) as usize;
        debug_assert!(a > lmax);
        let plan = self.plan(a);
        let mut out = vec![0.0; tables.g * a];
        let mut c = vec![0.0; lmax + 1];
        let mut s = vec![0.0; lmax + 1];
        let mut buf = vec![Complex::new(0.0, 0.0); a];
        for (i, table) in tables.rows.iter().enumerate() {
            self.sphere_row_profile(coeffs, table, &mut c, &mut s);
            buf.fill(Complex::new(0.0, 0.0));
            for m in 0..=lmax {
                buf[m] = Complex::new(c[m], -s[m]);
            }
            plan.process(&mut buf);
            for (j, z) in buf.iter().enumerate() {
                out[i * a + j] = z.re;
            }
        }
        out
    }

    /// Non-even p on the sphere: azimuthal integral handled segment-exactly
    /// per polar row; the polar direction uses composite Gauss-Legendre,
    /// split where the azimuthal zero count changes (the kinks of the row
    /// integral), with a node-doubling convergence check.
    fn sphere_hybrid_norm(&self, coeffs: &[f64], p: f64) -> Result<NormReport> {
        let lmax = self.space.max_sphere_degree().unwrap_or(0) as usize;
        // Probe rows locate topology changes of the zero set.
        let probes = (4 * (lmax + 1)).max(32);
        let mut splits = vec![-1.0f64];
        let mut prev_count: Option<usize> = None;
        let mut prev_x = -1.0;
        for i in 0..probes {
            let x = -1.0 + (i as f64 + 0.5) * 2.0 / probes as f64;
            let count = self.sphere_row_data(coeffs, x, p, true)?.1;
            if let Some(pc) = prev_count {
                if pc != count {
                    splits.push(0.5 * (prev_x + x));
                }
            }
            prev_count = Some(count);
            prev_x = x;
        }
        splits.push(1.0);

        let mut k = 12usize;
        let mut prev = self.sphere_composite_pass(coeffs, p, &splits, k)?;
        for _ in 0..self.opts.max_refinements {
            k *= 2;
            let value = self.sphere_composite_pass(coeffs, p, &splits, k)?;
            let diff = (value - prev).abs() / value.abs().max(f64::MIN_POSITIVE);
            if diff <= self.opts.convergence_tol {
                return Ok(NormReport {
                    p: Exponent::Finite(p),
                    value,
                    method: NormMethod::OversampledQuadrature,
                    declared_accuracy: diff,
                });
            }
            prev = value;
        }
        Err(Error::accuracy(format!(
            "sphere L_{p} norm did not converge to {} within {} doublings ({} intervals, {k} nodes)",
            self.opts.convergence_tol,
            self.opts.max_refinements,
            splits.len() - 1
        )))
    }

    fn sphere_composite_pass(&self, coeffs: &[f64], p: f64, splits: &[f64], k: usize) -> Result<f64> {
        let (xs, ws) = gauss_legendre(k);
        let mut acc = 0.0;
        for pair in splits.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            for (x, w) in xs.iter().zip(&ws) {
                let row = self.sphere_row_data(coeffs, mid + half * x, p, false)?.0;
                // μ = dx/2 × dφ/(2π); the row value is already the φ-mean.
                acc += 0.5 * w * half * row;
            }
        }
        Ok(acc.powf(1.0 / p))
    }

    /// Azimuthal mean ∫|P(θ, ·)|^p dφ/(2π) at cos θ = x, plus the zero count
    /// of the row. With `count_only` the integral is skipped.
    fn sphere_row_data(&self, coeffs: &[f64], x: f64, p: f64, count_only: bool) -> Result<(f64, usize)> {
        let lmax = self.space.max_sphere_degree().unwrap_or(0) as usize;
        let sin_theta = (1.0 - x * x).max(0.0).sqrt();
        let table = normalized_assoc_legendre_table(lmax as u32, x, sin_theta);
        let mut c = vec![0.0; lmax + 1];
        let mut s = vec![0.0; lmax + 1];
        self.sphere_row_profile(coeffs, &table, &mut c, &mut s);
        let a = next_pow2((8 * (lmax + 1)).max(64));
        let plan = self.plan(a);
        let mut buf = vec![Complex::new(0.0, 0.0); a];
        for m in 0..=lmax {
            buf[m] = Complex::new(c[m], -s[m]);
        }
        plan.process(&mut buf);
        if count_only {
            let mut count = 0usize;
            for j in 0..a {
                let va = buf[j].re;
                let vb = buf[(j + 1) % a].re;
                if va == 0.0 || va * vb < 0.0 {
                    count += 1;
                }
            }
            return Ok((0.0, count));
        }
        let row_poly = CirclePoly {
            constant: c[0],
            linear: 0.0,
            coef: (1..=lmax).map(|m| Complex::new(c[m], -s[m])).collect(),
        };
        let eval = |phi: f64| row_poly.value(phi);
        let step = TAU / a as f64;
        let mut zeros: Vec<f64> = Vec::new();
        for j in 0..a {
            let va = buf[j].re;
            let vb = buf[(j + 1) % a].re;
            if va == 0.0 {
                zeros.push(j as f64 * step);
            } else if va * vb < 0.0 {
                let lo = j as f64 * step;
                zeros.push(crate::numerics::brent_root(eval, lo, lo + step, 1e-7));
            }
        }
        let is_p1 = (p - 1.0).abs() < 1e-12;
        let integral = if zeros.is_empty() {
            if is_p1 {
                c[0].abs()
            } else {
                self.segment_integral_gl(&eval, 0.0, TAU, p, lmax.max(1) as f64) / TAU
            }
        } else if is_p1 {
            let anti = row_poly.antiderivative();
            let mut total = 0.0;
            for j in 0..zeros.len() {
                let lo = zeros[j];
                let hi = if j + 1 < zeros.len() { zeros[j + 1] } else { zeros[0] + TAU };
                total += (anti.value(hi) - anti.value(lo)).abs();
            }
            total / TAU
        } else {
            let mut total = 0.0;
            for j in 0..zeros.len() {
                let lo = zeros[j];
                let hi = if j + 1 < zeros.len() { zeros[j + 1] } else { zeros[0] + TAU };
                total += self.segment_integral_gl(&eval, lo, hi, p, lmax.max(1) as f64);
            }
            total / TAU
        };
        Ok((integral, zeros.len()))
    }

    // ---- discrete surrogate grids for the worst-factor ascent -------------

    /// Fixed discrete grid dense enough for the ascent objective: at least
    /// the engine's oversampling density and exact for |P|^p with even
    /// p ≤ `even_exactness`.
    pub(crate) fn ascent_grid(&self, even_exactness: usize) -> AscentGrid {
        match self.space.manifold().kind() {
            ManifoldKind::Torus(_) => {
                let max_freq = self.space.degree().floor().max(1.0) as usize;
                let r = next_pow2(
                    ((self.opts.oversample * max_freq as f64) as usize)
                        .max(even_exactness * max_freq + 2)
                        .max(64),
                );
                AscentGrid::Torus { r }
            }
            ManifoldKind::Sphere2 => {
                let l = self.space.max_sphere_degree().unwrap_or(0) as usize;
                let g = ((self.opts.oversample as usize) * (l + 1))
                    .max((even_exactness * l + 2).div_ceil(2))
                    .max(16);
                let a = next_pow2((2 * g).max(8 * (l + 1)).max(64));
                AscentGrid::Sphere { tables: self.sphere_tables(g), a }
            }
        }
    }

    pub(crate) fn ascent_values(&self, grid: &AscentGrid, coeffs: &[f64]) -> Vec<f64> {
        match grid {
            AscentGrid::Torus { r } => self.torus_grid_values(coeffs, *r),
            AscentGrid::Sphere { tables, a } => self.sphere_grid_values(coeffs, tables, *a),
        }
    }

    /// Quadrature weight of each grid node (summing to 1).
    pub(crate) fn ascent_weights(&self, grid: &AscentGrid) -> Vec<f64> {
        match grid {
            AscentGrid::Torus { r } => {
                let d = self.space.manifold().dim();
                let total = r.pow(d as u32);
                vec![1.0 / total as f64; total]
            }
            AscentGrid::Sphere { tables, a } => {
                let mut w = Vec::with_capacity(tables.g * a);
                for gw in &tables.weights {
                    for _ in 0..*a {
                        w.push(gw / *a as f64);
                    }
                }
                w
            }
        }
    }

    /// Adjoint of grid evaluation: g_k = Σ_i ψ_i φ_k(x_i).
    pub(crate) fn ascent_adjoint(&self, grid: &AscentGrid, psi: &[f64]) -> Vec<f64> {
        match grid {
            AscentGrid::Torus { r } => self.torus_grid_adjoint(psi, *r),
            AscentGrid::Sphere { tables, a } => self.sphere_grid_adjoint(psi, tables, *a),
        }
    }

    fn torus_grid_adjoint(&self, psi: &[f64], r: usize) -> Vec<f64> {
        let terms = self.torus_terms.as_ref().expect("torus engine");
        let d = terms.d;
        let total = r.pow(d as u32);
        debug_assert_eq!(psi.len(), total);
        let mut buf: Vec<Complex<f64>> =
            psi.iter().map(|&v| Complex::new(v, 0.0)).collect();
        let plan = self.plan_dir(r, true);
        if d == 1 {
            plan.process(&mut buf);
        } else {
            let mut line = vec![Complex::new(0.0, 0.0); r];
            for axis in 0..d {
                let stride = r.pow(axis as u32);
                let lines = total / r;
                for l in 0..lines {
                    let block = l / stride;
                    let within = l % stride;
                    let base = block * stride * r + within;
                    for (j, slot) in line.iter_mut().enumerate() {
                        *slot = buf[base + j * stride];
                    }
                    plan.process(&mut line);
                    for (j, v) in line.iter().enumerate() {
                        buf[base + j * stride] = *v;
                    }
                }
            }
        }
        let idx_of = |m: &[i64]| -> usize {
            let mut idx = 0usize;
            let mut stride = 1usize;
            for &mi in m {
                idx += (mi.rem_euclid(r as i64) as usize) * stride;
                stride *= r;
            }
            idx
        };
        let mut grad = vec![0.0; self.space.dim()];
        grad[0] = buf[0].re;
        for (m, ci, si) in &terms.entries {
            let z = buf[idx_of(m)];
            grad[*ci] = SQRT_2 * z.re;
            grad[*si] = -SQRT_2 * z.im;
        }
        grad
    }

    fn sphere_grid_adjoint(&self, psi: &[f64], tables: &SphereTables, a: usize) -> Vec<f64> {
        let plan = self.plan_dir(a, true);
        let mut grad = vec![0.0; self.space.dim()];
        let mut buf = vec![Complex::new(0.0, 0.0); a];
        for (i, table) in tables.rows.iter().enumerate() {
            for (j, slot) in buf.iter_mut().enumerate() {
                *slot = Complex::new(psi[i * a + j], 0.0);
            }
            plan.process(&mut buf);
            for (pair, slot) in self.space.eigenpairs().iter().zip(grad.iter_mut()) {
                match pair.label {
                    BasisLabel::Constant => *slot += buf[0].re,
                    BasisLabel::SphereZonal { l } => {
                        *slot += buf[0].re * table[packed_lm(l, 0)]
                    }
                    BasisLabel::SphereCos { l, m } => {
                        *slot += SQRT_2 * buf[m as usize].re * table[packed_lm(l, m)]
                    }
                    BasisLabel::SphereSin { l, m } => {
                        *slot -= SQRT_2 * buf[m as usize].im * table[packed_lm(l, m)]
                    }
                    _ => unreachable!("sphere space holds sphere labels"),
                }
            }
        }
        grad
    }

    // ---- sup norm ---------------------------------------------------------

    fn sup_pass(&self, coeffs: &[f64], rho: f64) -> Result<f64> {
        match self.space.manifold().kind() {
            ManifoldKind::Torus(_) => self.sup_pass_torus(coeffs, rho),
            ManifoldKind::Sphere2 => self.sup_pass_sphere(coeffs, rho),
        }
    }

    fn point_eval(&self, coeffs: &[f64], point: &Point) -> Result<f64> {
        let mut row = vec![0.0; self.space.dim()];
        self.space.evaluate_basis_row(point, &mut row)?;
        Ok(row.iter().zip(coeffs).map(|(b, c)| b * c).sum())
    }

    fn sup_pass_torus(&self, coeffs: &[f64], rho: f64) -> Result<f64> {
        let terms = self.torus_terms.as_ref().expect("torus engine");
        let d = terms.d;
        let max_freq = self.space.degree().floor().max(1.0);
        let r = next_pow2(((rho * max_freq) as usize).max(16));
        let values = self.torus_grid_values(coeffs, r);
        let total = values.len();
        // Local maxima of |P| over the grid.
        let mut candidates: Vec<(f64, usize)> = Vec::new();
        for idx in 0..total {
            let v = values[idx].abs();
            let mut is_max = true;
            for axis in 0..d {
                let up = values[neighbor_idx(idx, axis, 1, r)].abs();
                let down = values[neighbor_idx(idx, axis, -1, r)].abs();
                if v < up || v < down {
                    is_max = false;
                    break;
                }
            }
            if is_max {
                candidates.push((v, idx));
            }
        }
        candidates.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        candidates.truncate(self.opts.sup_candidates.max(1));
        let step = TAU / r as f64;
        let fast = (d == 1).then(|| self.circle_poly(coeffs));
        let eval_at = |angles: &[f64]| -> Result<f64> {
            if let Some(poly) = &fast {
                Ok(poly.value(angles[0]))
            } else {
                self.point_eval(coeffs, &Point::torus(angles))
            }
        };
        let mut best = candidates.first().map_or(0.0, |c| c.0);
        for &(_, idx) in &candidates {
            let mut angles: Vec<f64> = (0..d)
                .map(|axis| ((idx / r.pow(axis as u32)) % r) as f64 * step)
                .collect();
            let sign = eval_at(&angles)?.signum();
            let mut h = step / 2.0;
            for _ in 0..4 {
                for axis in 0..d {
                    let f = |t: f64| -> f64 {
                        let mut a = angles.clone();
                        a[axis] = t;
                        sign * eval_at(&a).unwrap_or(f64::MIN)
                    };
                    let x = angles[axis];
                    let (fm, f0, fp) = (f(x - h), f(x), f(x + h));
                    let denom = fm - 2.0 * f0 + fp;
                    if denom.abs() > 1e-300 {
                        let delta = 0.5 * h * (fm - fp) / denom;
                        angles[axis] = x + delta.clamp(-h, h);
                    }
                }
                h /= 4.0;
            }
            let refined = eval_at(&angles)?.abs();
            best = best.max(refined);
        }
        Ok(best)
    }

    fn sup_pass_sphere(&self, coeffs: &[f64], rho: f64) -> Result<f64> {
        let lmax = self.space.max_sphere_degree().unwrap_or(0) as usize;
        let g = ((rho as usize) * (lmax + 1)).max(16);
        let a = next_pow2((2 * g).max(64));
        let tables = self.sphere_tables(g);
        let values = self.sphere_grid_values(coeffs, &tables, a);
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for i in 0..g {
            for j in 0..a {
                let v = values[i * a + j].abs();
                let left = values[i * a + (j + a - 1) % a].abs();
                let right = values[i * a + (j + 1) % a].abs();
                let up = if i > 0 { values[(i - 1) * a + j].abs() } else { 0.0 };
                let down = if i + 1 < g { values[(i + 1) * a + j].abs() } else { 0.0 };
                if v >= left && v >= right && v >= up && v >= down {
                    candidates.push((v, i, j));
                }
            }
        }
        candidates.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
        candidates.truncate(self.opts.sup_candidates.max(1));
        let mut best: f64 = 0.0;
        // Poles are not grid rows; include them as candidates directly.
        for pole in [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]] {
            best = best.max(self.point_eval(coeffs, &Point::sphere(pole))?.abs());
        }
        for &(v0, i, j) in &candidates {
            let mut theta = tables.cos_nodes[i].clamp(-1.0, 1.0).acos();
            let mut phi = TAU * j as f64 / a as f64;
            let sign = self
                .point_eval(coeffs, &Point::sphere_polar(theta, phi))?
                .signum();
            let mut h_theta = PI / g as f64 / 2.0;
            let mut h_phi = TAU / a as f64 / 2.0;
            for _ in 0..4 {
                for axis in 0..2 {
                    let f = |t: f64| -> f64 {
                        let (th, ph) = if axis == 0 { (t, phi) } else { (theta, t) };
                        sign * self
                            .point_eval(coeffs, &Point::sphere_polar(th.clamp(0.0, PI), ph))
                            .unwrap_or(f64::MIN)
                    };
                    let (x, h) = if axis == 0 { (theta, h_theta) } else { (phi, h_phi) };
                    let (fm, f0, fp) = (f(x - h), f(x), f(x + h));
                    let denom = fm - 2.0 * f0 + fp;
                    if denom.abs() > 1e-300 {
                        let delta = 0.5 * h * (fm - fp) / denom;
                        if axis == 0 {
                            theta = (x + delta.clamp(-h, h)).clamp(0.0, PI);
                        } else {
                            phi = x + delta.clamp(-h, h);
                        }
                    }
                }
                h_theta /= 4.0;
                h_phi /= 4.0;
            }
            let refined = self
                .point_eval(coeffs, &Point::sphere_polar(theta, phi))?
                .abs();
            best = best.max(refined.max(v0));
        }
        Ok(best)
    }
}

fn neighbor_idx(idx: usize, axis: usize, delta: i64, r: usize) -> usize {
    let stride = r.pow(axis as u32);
    let coord = (idx / stride) % r;
    let next = (coord as i64 + delta).rem_euclid(r as i64) as usize;
    idx - coord * stride + next * stride
}
