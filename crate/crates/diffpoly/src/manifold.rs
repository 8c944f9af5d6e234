//! Concrete closed-manifold models: the flat torus T^d (d = 1, 2, 3) with
//! period 2π, and the unit round 2-sphere. Both carry the normalized
//! Riemannian measure (total mass 1), exact geodesic distances, and
//! quadrature-grid generators.
//!
//! Measured Ahlfors regularity bands (ratio μ(B(x,r))/r^d over radii
//! diam·2^{-j}, j = 1..6): T¹ exactly 1/π; T² in [1/(4π), 0.086]; T³ in
//! [(4π/3)/(2π)³, 0.0223]; S² in [0.101, 0.25]. These are recorded from the
//! closed forms below, not assumed.

use crate::error::{Error, Result};
use crate::numerics::gauss_legendre;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ManifoldKind {
    /// Flat torus (R/2πZ)^d with the product metric and measure dθ/(2π)^d.
    Torus(usize),
    /// Unit round sphere in R³ with measure dσ/(4π).
    Sphere2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldModel {
    kind: ManifoldKind,
}

/// A point of a model manifold, kept in canonical form: torus angles reduced
/// to [0, 2π), sphere vectors renormalized to unit length.
#[derive(Debug, Clone, PartialEq)]
pub enum Point {
    Torus(Vec<f64>),
    Sphere([f64; 3]),
}

impl Point {
    pub fn torus(angles: &[f64]) -> Self {
        Point::Torus(angles.iter().map(|&a| wrap_angle(a)).collect())
    }

    pub fn sphere(v: [f64; 3]) -> Self {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        assert!(norm > 0.0, "sphere point must be nonzero");
        Point::Sphere([v[0] / norm, v[1] / norm, v[2] / norm])
    }

    /// Sphere point from colatitude θ in [0, π] and azimuth φ.
    pub fn sphere_polar(theta: f64, phi: f64) -> Self {
        let st = theta.sin();
        Point::Sphere([st * phi.cos(), st * phi.sin(), theta.cos()])
    }

    /// (colatitude, azimuth in [0, 2π)) of a sphere point.
    pub fn to_polar(&self) -> Option<(f64, f64)> {
        match self {
            Point::Sphere(v) => {
                let theta = v[2].clamp(-1.0, 1.0).acos();
                let mut phi = v[1].atan2(v[0]);
                if phi < 0.0 {
                    phi += TAU;
                }
                Some((theta, phi))
            }
            Point::Torus(_) => None,
        }
    }

    pub fn coords(&self) -> &[f64] {
        match self {
            Point::Torus(a) => a,
            Point::Sphere(v) => v,
        }
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut r = a % TAU;
    if r < 0.0 {
        r += TAU;
    }
    // `% TAU` can return TAU itself after the correction when a is a tiny
    // negative number; fold that back to 0.
    if r >= TAU {
        r -= TAU;
    }
    r
}

impl ManifoldModel {
    pub fn torus(d: usize) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::domain(format!("torus dimension must be 1..=3, got {d}")));
        }
        Ok(ManifoldModel { kind: ManifoldKind::Torus(d) })
    }

    pub fn sphere2() -> Self {
        ManifoldModel { kind: ManifoldKind::Sphere2 }
    }

    /// Parse the CLI spelling: t1, t2, t3, s2.
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "t1" => ManifoldModel::torus(1),
            "t2" => ManifoldModel::torus(2),
            "t3" => ManifoldModel::torus(3),
            "s2" => Ok(ManifoldModel::sphere2()),
            other => Err(Error::invalid(format!(
                "unknown manifold {other:?}; expected one of t1, t2, t3, s2"
            ))),
        }
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ManifoldKind::Torus(1) => "t1",
            ManifoldKind::Torus(2) => "t2",
            ManifoldKind::Torus(_) => "t3",
            ManifoldKind::Sphere2 => "s2",
        }
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Torus(d) => d,
            ManifoldKind::Sphere2 => 2,
        }
    }

    pub fn diameter(&self) -> f64 {
        match self.kind {
            ManifoldKind::Torus(d) => PI * (d as f64).sqrt(),
            ManifoldKind::Sphere2 => PI,
        }
    }

    /// Total Riemannian volume before normalization: (2π)^d resp. 4π.
    pub fn riemannian_volume(&self) -> f64 {
        match self.kind {
            ManifoldKind::Torus(d) => TAU.powi(d as i32),
            ManifoldKind::Sphere2 => 4.0 * PI,
        }
    }

    pub fn validate_point(&self, p: &Point) -> Result<()> {
        match (self.kind, p) {
            (ManifoldKind::Torus(d), Point::Torus(a)) if a.len() == d => Ok(()),
            (ManifoldKind::Sphere2, Point::Sphere(_)) => Ok(()),
            _ => Err(Error::invalid(format!(
                "point {p:?} does not belong to manifold {}",
                self.name()
            ))),
        }
    }

    /// Geodesic distance d(x, y).
    pub fn geodesic_distance(&self, x: &Point, y: &Point) -> Result<f64> {
        self.validate_point(x)?;
        self.validate_point(y)?;
        if x == y {
            // Identical coordinates must give exactly zero; the sphere
            // arccos would otherwise amplify 1-ulp dot-product roundoff.
            return Ok(0.0);
        }
        Ok(match (x, y) {
            (Point::Torus(a), Point::Torus(b)) => {
                let mut s = 0.0;
                for (ai, bi) in a.iter().zip(b) {
                    let mut diff = (ai - bi).abs();
                    if diff > PI {
                        diff = TAU - diff;
                    }
                    s += diff * diff;
                }
                s.sqrt()
            }
            (Point::Sphere(u), Point::Sphere(v)) => {
                let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
                dot.clamp(-1.0, 1.0).acos()
            }
            _ => unreachable!("validated above"),
        })
    }

    /// μ(B(x, r)) by closed form where available, quadrature otherwise.
    ///
    /// Closed forms: T¹ gives r/π (r ≤ π), S² gives (1 − cos r)/2, and the
    /// flat-ball formula covers T², T³ for r ≤ π. Wrapped radii on T², T³
    /// fall back to the grid estimate at the given resolution.
    pub fn ball_measure_estimate(&self, x: &Point, r: f64, resolution: usize) -> Result<f64> {
        self.validate_point(x)?;
        self.check_radius(r)?;
        if let Some(v) = self.ball_measure_closed_form(r) {
            return Ok(v);
        }
        self.ball_measure_quadrature(x, r, resolution)
    }

    /// Closed-form ball measure when one exists for this model and radius.
    pub fn ball_measure_closed_form(&self, r: f64) -> Option<f64> {
        match self.kind {
            ManifoldKind::Torus(1) => (r <= PI).then_some(r / PI),
            ManifoldKind::Torus(2) => (r <= PI).then(|| PI * r * r / TAU.powi(2)),
            ManifoldKind::Torus(_) => (r <= PI).then(|| 4.0 * PI * r.powi(3) / (3.0 * TAU.powi(3))),
            ManifoldKind::Sphere2 => Some((1.0 - r.cos()) / 2.0),
        }
    }

    /// Grid estimate of μ(B(x, r)); the independent cross-check for the
    /// closed forms and the only path for wrapped torus radii.
    pub fn ball_measure_quadrature(&self, x: &Point, r: f64, resolution: usize) -> Result<f64> {
        self.validate_point(x)?;
        self.check_radius(r)?;
        if resolution == 0 {
            return Err(Error::domain("resolution must be >= 1".to_string()));
        }
        let mut acc = 0.0;
        for (p, w) in self.uniform_grid(resolution)? {
            if self.geodesic_distance(x, &p)? <= r {
                acc += w;
            }
        }
        Ok(acc)
    }

    fn check_radius(&self, r: f64) -> Result<()> {
        if !(r > 0.0 && r <= self.diameter() + 1e-12) {
            return Err(Error::domain(format!(
                "radius {r} outside (0, diam = {}]",
                self.diameter()
            )));
        }
        Ok(())
    }

    /// Quadrature grid with positive weights summing to 1.
    ///
    /// Torus: tensor-equispaced grid, `resolution` points per axis. Sphere:
    /// `resolution` Gauss-Legendre nodes in cos θ times 2·`resolution`
    /// equispaced azimuths; exact for spherical polynomials of degree
    /// min(2·resolution − 1, 2·resolution − 1).
    pub fn uniform_grid(&self, resolution: usize) -> Result<Vec<(Point, f64)>> {
        if resolution == 0 {
            return Err(Error::domain("resolution must be >= 1".to_string()));
        }
        match self.kind {
            ManifoldKind::Torus(d) => {
                let count = resolution.pow(d as u32);
                let w = 1.0 / count as f64;
                let step = TAU / resolution as f64;
                let mut out = Vec::with_capacity(count);
                let mut idx = vec![0usize; d];
                loop {
                    let angles: Vec<f64> = idx.iter().map(|&i| i as f64 * step).collect();
                    out.push((Point::Torus(angles), w));
                    // Odometer increment.
                    let mut axis = 0;
                    loop {
                        idx[axis] += 1;
                        if idx[axis] < resolution {
                            break;
                        }
                        idx[axis] = 0;
                        axis += 1;
                        if axis == d {
                            return Ok(out);
                        }
                    }
                }
            }
            ManifoldKind::Sphere2 => {
                let g = resolution;
                let a = 2 * resolution;
                let (nodes, weights) = gauss_legendre(g);
                let mut out = Vec::with_capacity(g * a);
                for (ct, gw) in nodes.iter().zip(&weights) {
                    let theta = ct.clamp(-1.0, 1.0).acos();
                    let w = gw / 2.0 / a as f64;
                    for j in 0..a {
                        let phi = TAU * j as f64 / a as f64;
                        out.push((Point::sphere_polar(theta, phi), w));
                    }
                }
                Ok(out)
            }
        }
    }

    /// Uniformly distributed random point.
    pub fn random_point<R: Rng>(&self, rng: &mut R) -> Point {
        match self.kind {
            ManifoldKind::Torus(d) => {
                Point::Torus((0..d).map(|_| rng.random::<f64>() * TAU).collect())
            }
            ManifoldKind::Sphere2 => {
                use rand_distr::StandardNormal;
                loop {
                    let v = [
                        rng.sample::<f64, _>(StandardNormal),
                        rng.sample::<f64, _>(StandardNormal),
                        rng.sample::<f64, _>(StandardNormal),
                    ];
                    let norm2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
                    if norm2 > 1e-12 {
                        return Point::sphere(v);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::trial_rng;

    #[test]
    fn distance_examples() {
        let t1 = ManifoldModel::torus(1).unwrap();
        let d = t1
            .geodesic_distance(&Point::torus(&[0.0]), &Point::torus(&[PI]))
            .unwrap();
        assert!((d - PI).abs() < 1e-15);

        let s2 = ManifoldModel::sphere2();
        let d = s2
            .geodesic_distance(&Point::sphere([1.0, 0.0, 0.0]), &Point::sphere([0.0, 0.0, 1.0]))
            .unwrap();
        assert!((d - PI / 2.0).abs() < 1e-15);

        // Wrap-around minimum on T².
        let t2 = ManifoldModel::torus(2).unwrap();
        let d = t2
            .geodesic_distance(&Point::torus(&[0.0, 0.0]), &Point::torus(&[1.5 * PI, 0.0]))
            .unwrap();
        assert!((d - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_invalid_argument() {
        let t2 = ManifoldModel::torus(2).unwrap();
        let err = t2
            .geodesic_distance(&Point::torus(&[0.0]), &Point::torus(&[0.0, 0.0]))
            .unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
        let s2 = ManifoldModel::sphere2();
        assert!(s2
            .geodesic_distance(&Point::torus(&[0.0]), &Point::sphere([0.0, 0.0, 1.0]))
            .is_err());
    }

    #[test]
    fn metric_properties_on_random_triples() {
        for m in [
            ManifoldModel::torus(1).unwrap(),
            ManifoldModel::torus(2).unwrap(),
            ManifoldModel::torus(3).unwrap(),
            ManifoldModel::sphere2(),
        ] {
            let mut rng = trial_rng(11, 0);
            for _ in 0..10_000 {
                let x = m.random_point(&mut rng);
                let y = m.random_point(&mut rng);
                let z = m.random_point(&mut rng);
                let dxy = m.geodesic_distance(&x, &y).unwrap();
                let dyx = m.geodesic_distance(&y, &x).unwrap();
                let dxz = m.geodesic_distance(&x, &z).unwrap();
                let dzy = m.geodesic_distance(&z, &y).unwrap();
                assert!(dxy >= 0.0 && dxy <= m.diameter() + 1e-12);
                assert!((dxy - dyx).abs() < 1e-12);
                assert!(dxy <= dxz + dzy + 1e-12);
                assert!(m.geodesic_distance(&x, &x).unwrap() < 1e-12);
            }
        }
    }

    #[test]
    fn ball_measure_examples() {
        let t1 = ManifoldModel::torus(1).unwrap();
        let x = Point::torus(&[0.3]);
        assert!((t1.ball_measure_estimate(&x, PI, 64).unwrap() - 1.0).abs() < 1e-12);

        let s2 = ManifoldModel::sphere2();
        let p = Point::sphere([0.0, 0.0, 1.0]);
        assert!((s2.ball_measure_estimate(&p, PI / 2.0, 64).unwrap() - 0.5).abs() < 1e-12);

        let t2 = ManifoldModel::torus(2).unwrap();
        let y = Point::torus(&[1.0, 2.0]);
        let flat = PI * (PI / 4.0) * (PI / 4.0) / (TAU * TAU);
        assert!((t2.ball_measure_estimate(&y, PI / 4.0, 64).unwrap() - flat).abs() < 1e-12);
        assert!((flat - 0.049087).abs() < 1e-5);
    }

    #[test]
    fn ball_measure_quadrature_converges_and_is_center_independent() {
        let mut rng = trial_rng(5, 1);
        for m in [ManifoldModel::torus(2).unwrap(), ManifoldModel::sphere2()] {
            let r = 0.8;
            let exact = m.ball_measure_closed_form(r).unwrap();
            let mut worst: f64 = 0.0;
            for _ in 0..100 {
                let x = m.random_point(&mut rng);
                let est = m.ball_measure_quadrature(&x, r, 96).unwrap();
                worst = worst.max((est - exact).abs());
            }
            // Grid tolerance: indicator quadrature converges like 1/resolution.
            assert!(worst < 0.02, "{}: worst deviation {worst}", m.name());
        }
    }

    #[test]
    fn ball_measure_domain_errors() {
        let t1 = ManifoldModel::torus(1).unwrap();
        let x = Point::torus(&[0.0]);
        assert!(matches!(
            t1.ball_measure_estimate(&x, 0.0, 8),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            t1.ball_measure_estimate(&x, 4.0, 8),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn uniform_grid_weights_and_symmetry() {
        let t1 = ManifoldModel::torus(1).unwrap();
        let grid = t1.uniform_grid(4).unwrap();
        assert_eq!(grid.len(), 4);
        for (k, (p, w)) in grid.iter().enumerate() {
            assert!((p.coords()[0] - k as f64 * PI / 2.0).abs() < 1e-15);
            assert!((w - 0.25).abs() < 1e-15);
        }

        for m in [
            ManifoldModel::torus(2).unwrap(),
            ManifoldModel::torus(3).unwrap(),
            ManifoldModel::sphere2(),
        ] {
            for res in [3, 8, 17] {
                let grid = m.uniform_grid(res).unwrap();
                let total: f64 = grid.iter().map(|(_, w)| *w).sum();
                assert!((total - 1.0).abs() < 1e-12, "{} res {res}", m.name());
                assert!(grid.iter().all(|(_, w)| *w > 0.0));
            }
        }

        // Odd moment of z vanishes on the sphere grid (8 polar x 16 azimuthal).
        let s2 = ManifoldModel::sphere2();
        let grid = s2.uniform_grid(8).unwrap();
        let z_mean: f64 = grid.iter().map(|(p, w)| w * p.coords()[2]).sum();
        assert!(z_mean.abs() < 1e-12);
    }

    #[test]
    fn ahlfors_band_over_dyadic_radii() {
        // Bands recorded in the module docs; checked here from closed forms
        // plus quadrature on the wrapped-torus radii.
        let mut rng = trial_rng(7, 0);
        for m in [
            ManifoldModel::torus(1).unwrap(),
            ManifoldModel::torus(2).unwrap(),
            ManifoldModel::sphere2(),
        ] {
            let d = m.dim() as i32;
            let mut lo = f64::INFINITY;
            let mut hi = 0.0f64;
            for j in 1..=6 {
                let r = m.diameter() / f64::powi(2.0, j);
                for _ in 0..20 {
                    let x = m.random_point(&mut rng);
                    let mu = m.ball_measure_estimate(&x, r, 64).unwrap();
                    let ratio = mu / r.powi(d);
                    lo = lo.min(ratio);
                    hi = hi.max(ratio);
                }
            }
            let c = ManifoldModel::ahlfors_constant_doc(m.name());
            assert!(lo >= 1.0 / c - 1e-9 && hi <= c + 1e-9, "{}: [{lo}, {hi}] vs C = {c}", m.name());
        }
    }

    impl ManifoldModel {
        fn ahlfors_constant_doc(name: &str) -> f64 {
            // One fixed two-sided constant per model, from the measured bands.
            match name {
                "t1" => PI,
                "t2" => 4.0 * PI,
                "t3" => 12.0,
                _ => 10.0, // s2: ratios within [0.101, 0.25]
            }
        }
    }

    #[test]
    fn point_canonicalization() {
        let p = Point::torus(&[-0.5, 7.0]);
        let c = p.coords();
        assert!((0.0..TAU).contains(&c[0]) && (0.0..TAU).contains(&c[1]));
        let q = Point::sphere([0.0, 3.0, 4.0]);
        let v = q.coords();
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }
}
