//! Maximal ε-separated point sets by farthest-point insertion, greedy
//! thinning to a coarser separation, and Marcinkiewicz-Zygmund weights by
//! nearest-center accumulation of a fine quadrature grid.

use crate::error::{Error, Result};
use crate::manifold::{ManifoldModel, Point};
use crate::norms::Exponent;
use crate::rng::trial_rng;
use crate::spectrum::SpectralSpace;
use rand::seq::SliceRandom;
use std::io::Write;

/// Default separation scale: sets fed to MZ weights use ε = δ₀/n with
/// δ₀ = 1/2. This is a tested default, exposed as a parameter; the
/// two-sided norm-equivalence checks are the acceptance gate for it.
pub const DEFAULT_DELTA0: f64 = 0.5;

/// Candidate/audit grids are at least this many times denser than the
/// target separation (recorded audit parameter).
pub const AUDIT_DENSITY_FACTOR: usize = 8;

/// An ε-separated point set with an audited covering radius.
#[derive(Debug, Clone)]
pub struct SeparatedSet {
    manifold: ManifoldModel,
    points: Vec<Point>,
    separation: f64,
    covering_radius_bound: f64,
}

impl SeparatedSet {
    pub fn manifold(&self) -> &ManifoldModel {
        &self.manifold
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn separation(&self) -> f64 {
        self.separation
    }

    /// Audited covering radius: every probe of the audit grid is within this
    /// distance of the set.
    pub fn covering_radius_bound(&self) -> f64 {
        self.covering_radius_bound
    }

    /// Wrap externally constructed points, verifying the separation claim and
    /// auditing the covering radius against a fine grid.
    pub fn from_points(m: ManifoldModel, points: Vec<Point>, separation: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("separated set must be nonempty".to_string()));
        }
        for p in &points {
            m.validate_point(p)?;
        }
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                let d = m.geodesic_distance(&points[i], &points[j])?;
                if d < separation - 1e-12 {
                    return Err(Error::invalid(format!(
                        "points {i} and {j} are {d} apart, below separation {separation}"
                    )));
                }
            }
        }
        let covering = audit_covering_radius(&m, &points, separation)?;
        Ok(SeparatedSet { manifold: m, points, separation, covering_radius_bound: covering })
    }

    /// One CSV row per point: coordinates (padded columns unused) and weight.
    pub fn write_csv<W: Write>(&self, mut w: W, weights: Option<&[f64]>) -> Result<()> {
        writeln!(w, "x0,x1,x2,weight")?;
        for (i, p) in self.points.iter().enumerate() {
            let c = p.coords();
            let weight = weights.map_or(1.0 / self.len() as f64, |ws| ws[i]);
            let mut cols = [0.0f64; 3];
            cols[..c.len()].copy_from_slice(c);
            writeln!(w, "{},{},{},{}", cols[0], cols[1], cols[2], weight)?;
        }
        Ok(())
    }
}

/// Positive quadrature weights on a separated set, tuned to a spectral space.
#[derive(Debug, Clone)]
pub struct MZRule {
    set: SeparatedSet,
    weights: Vec<f64>,
    degree: f64,
}

impl MZRule {
    pub fn set(&self) -> &SeparatedSet {
        &self.set
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn degree(&self) -> f64 {
        self.degree
    }

    /// Discrete norm (Σ λ_ξ |f(ξ)|^p)^{1/p}, or max |f(ξ)| for p = ∞,
    /// given values of f at the rule's points.
    pub fn discrete_lp(&self, values: &[f64], p: Exponent) -> Result<f64> {
        if values.len() != self.set.len() {
            return Err(Error::invalid(format!(
                "expected {} values, got {}",
                self.set.len(),
                values.len()
            )));
        }
        match p {
            Exponent::Infinity => {
                Ok(values.iter().fold(0.0f64, |acc, v| acc.max(v.abs())))
            }
            Exponent::Finite(p) => {
                if !(p >= 1.0) {
                    return Err(Error::domain(format!("exponent must be >= 1, got {p}")));
                }
                let sum: f64 = self
                    .weights
                    .iter()
                    .zip(values)
                    .map(|(w, v)| w * v.abs().powf(p))
                    .sum();
                Ok(sum.powf(1.0 / p))
            }
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        self.set.write_csv(w, Some(&self.weights))
    }
}

/// Maximal ε-separated subset by farthest-point insertion from a fine grid
/// shuffled by `seed`, inserting until no candidate is ≥ ε away from the set.
pub fn greedy_maximal_separated(m: &ManifoldModel, eps: f64, seed: u64) -> Result<SeparatedSet> {
    if !(eps > 0.0 && eps <= m.diameter()) {
        return Err(Error::domain(format!(
            "separation {eps} outside (0, diam = {}]",
            m.diameter()
        )));
    }
    let candidates = candidate_grid(m, eps)?;
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    let mut rng = trial_rng(seed, 0);
    order.shuffle(&mut rng);

    // min_dist[i] = distance of candidate i to the current set.
    let mut min_dist = vec![f64::INFINITY; candidates.len()];
    let mut chosen: Vec<Point> = Vec::new();

    let first = order[0];
    chosen.push(candidates[first].clone());
    update_min_dist(m, &candidates, &mut min_dist, &candidates[first])?;

    loop {
        // Farthest remaining candidate, ties broken by shuffled order.
        let mut best = None;
        let mut best_d = -1.0;
        for &i in &order {
            if min_dist[i] > best_d {
                best_d = min_dist[i];
                best = Some(i);
            }
        }
        let idx = best.expect("nonempty candidate set");
        // 1-ulp slack so exact-separation grid points are not rejected.
        if best_d < eps * (1.0 - 1e-12) {
            // Covering radius over the audit grid is exactly this maximum.
            let covering = best_d;
            return SeparatedSet::from_points(*m, chosen, eps).map(|mut s| {
                s.covering_radius_bound = covering.min(s.covering_radius_bound);
                s
            });
        }
        chosen.push(candidates[idx].clone());
        update_min_dist(m, &candidates, &mut min_dist, &candidates[idx])?;
    }
}

fn update_min_dist(
    m: &ManifoldModel,
    candidates: &[Point],
    min_dist: &mut [f64],
    new_point: &Point,
) -> Result<()> {
    for (slot, c) in min_dist.iter_mut().zip(candidates) {
        let d = m.geodesic_distance(c, new_point)?;
        if d < *slot {
            *slot = d;
        }
    }
    Ok(())
}

fn candidate_grid(m: &ManifoldModel, eps: f64) -> Result<Vec<Point>> {
    let spacing = eps / AUDIT_DENSITY_FACTOR as f64;
    let resolution = match m.kind() {
        crate::manifold::ManifoldKind::Torus(_) => {
            ((std::f64::consts::TAU / spacing).ceil() as usize).max(4)
        }
        crate::manifold::ManifoldKind::Sphere2 => {
            ((std::f64::consts::PI / spacing).ceil() as usize).max(4)
        }
    };
    Ok(m.uniform_grid(resolution)?.into_iter().map(|(p, _)| p).collect())
}

fn audit_covering_radius(m: &ManifoldModel, points: &[Point], eps: f64) -> Result<f64> {
    let audit = candidate_grid(m, eps)?;
    let mut worst = 0.0f64;
    for probe in &audit {
        let mut nearest = f64::INFINITY;
        for p in points {
            let d = m.geodesic_distance(probe, p)?;
            if d < nearest {
                nearest = d;
            }
        }
        worst = worst.max(nearest);
    }
    Ok(worst)
}

/// Greedy thinning: walk the parent set in stored order, keeping a point iff
/// it is ≥ `delta` from everything kept so far. The result is δ-separated
/// and, by the union-of-balls argument, covers within δ + parent covering
/// radius ≤ 2δ.
pub fn thin_subset(parent: &SeparatedSet, delta: f64) -> Result<SeparatedSet> {
    if delta < parent.separation {
        return Err(Error::invalid(format!(
            "thinning separation {delta} below parent separation {}",
            parent.separation
        )));
    }
    let m = parent.manifold;
    let mut kept: Vec<Point> = Vec::new();
    for p in &parent.points {
        let mut ok = true;
        for q in &kept {
            // 1-ulp slack so exactly-δ-spaced points are kept.
            if m.geodesic_distance(p, q)? < delta * (1.0 - 1e-12) {
                ok = false;
                break;
            }
        }
        if ok {
            kept.push(p.clone());
        }
    }
    // Audit: every parent point is within delta of the kept subset.
    let mut worst = 0.0f64;
    for p in &parent.points {
        let mut nearest = f64::INFINITY;
        for q in &kept {
            nearest = nearest.min(m.geodesic_distance(p, q)?);
        }
        worst = worst.max(nearest);
    }
    let covering = worst + parent.covering_radius_bound;
    Ok(SeparatedSet {
        manifold: m,
        points: kept,
        separation: delta,
        covering_radius_bound: covering,
    })
}

/// Marcinkiewicz-Zygmund weights for discrete norms on P_n: each node of a
/// fine normalized quadrature grid contributes its weight to the nearest
/// center (ties to the lowest point index), so weights are positive and sum
/// to 1.
pub fn mz_weights(set: &SeparatedSet, space: &SpectralSpace) -> Result<MZRule> {
    mz_weights_with_delta0(set, space, DEFAULT_DELTA0)
}

pub fn mz_weights_with_delta0(
    set: &SeparatedSet,
    space: &SpectralSpace,
    delta0: f64,
) -> Result<MZRule> {
    let spacing = set.separation / AUDIT_DENSITY_FACTOR as f64;
    let resolution = match set.manifold.kind() {
        crate::manifold::ManifoldKind::Torus(_) => {
            ((std::f64::consts::TAU / spacing).ceil() as usize).max(4)
        }
        crate::manifold::ManifoldKind::Sphere2 => {
            ((std::f64::consts::PI / spacing).ceil() as usize).max(4)
        }
    };
    mz_weights_with_grid(set, space, delta0, resolution)
}

/// MZ weights accumulated from an explicit fine-grid resolution (torus:
/// points per axis; sphere: polar count).
pub fn mz_weights_with_grid(
    set: &SeparatedSet,
    space: &SpectralSpace,
    delta0: f64,
    resolution: usize,
) -> Result<MZRule> {
    if set.manifold() != space.manifold() {
        return Err(Error::invalid("point set and space live on different manifolds".to_string()));
    }
    let n = space.degree().max(1.0);
    let required = delta0 / n;
    if set.separation > required + 1e-12 {
        return Err(Error::precondition(format!(
            "separation {} too coarse for degree {}: needs ε ≤ δ₀/n = {required} (δ₀ = {delta0})",
            set.separation,
            space.degree()
        )));
    }
    let m = set.manifold;
    let fine = m.uniform_grid(resolution)?;
    let mut weights = vec![0.0f64; set.len()];
    for (node, w) in &fine {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, p) in set.points.iter().enumerate() {
            let d = m.geodesic_distance(node, p)?;
            if d < best_d - 1e-15 {
                best_d = d;
                best = i;
            }
        }
        weights[best] += w;
    }
    if weights.iter().any(|&w| w <= 0.0) {
        return Err(Error::accuracy(
            "nearest-center accumulation produced a non-positive weight; audit grid too coarse"
                .to_string(),
        ));
    }
    Ok(MZRule { set: set.clone(), weights, degree: space.degree() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, TAU};

    fn t1() -> ManifoldModel {
        ManifoldModel::torus(1).unwrap()
    }

    #[test]
    fn circle_packing_counts() {
        // ε = π/2 packs exactly 4 points on the circle.
        let set = greedy_maximal_separated(&t1(), PI / 2.0, 3).unwrap();
        assert_eq!(set.len(), 4);
        assert!(set.covering_radius_bound() <= PI / 2.0 + 1e-9);

        // ε = π forces the antipodal pair.
        let set = greedy_maximal_separated(&t1(), PI, 5).unwrap();
        assert_eq!(set.len(), 2);
        let d = t1().geodesic_distance(&set.points()[0], &set.points()[1]).unwrap();
        assert!((d - PI).abs() < 2.0 * PI / (8.0 * 8.0));
    }

    #[test]
    fn sphere_antipodal_pair_at_full_separation() {
        let s2 = ManifoldModel::sphere2();
        let set = greedy_maximal_separated(&s2, PI, 1).unwrap();
        assert_eq!(set.len(), 2, "covering audit forces the second point");
    }

    #[test]
    fn separation_and_covering_audits() {
        for (m, eps) in [
            (t1(), 0.11),
            (ManifoldModel::torus(2).unwrap(), 0.9),
            (ManifoldModel::sphere2(), 0.55),
        ] {
            let set = greedy_maximal_separated(&m, eps, 17).unwrap();
            let pts = set.points();
            for i in 0..pts.len() {
                for j in (i + 1)..pts.len() {
                    assert!(
                        m.geodesic_distance(&pts[i], &pts[j]).unwrap() >= eps - 1e-12,
                        "{} separation violated",
                        m.name()
                    );
                }
            }
            assert!(set.covering_radius_bound() <= eps, "{} covering audit", m.name());
        }
    }

    #[test]
    fn determinism_same_seed_same_points() {
        let a = greedy_maximal_separated(&t1(), 0.2, 99).unwrap();
        let b = greedy_maximal_separated(&t1(), 0.2, 99).unwrap();
        assert_eq!(a.points(), b.points());
        let c = greedy_maximal_separated(&t1(), 0.2, 100).unwrap();
        assert!(a.points() != c.points() || a.len() == c.len());
    }

    #[test]
    fn cardinality_scaling_slope_matches_dimension() {
        for (m, epss) in [
            (t1(), vec![0.4, 0.2, 0.1, 0.05]),
            (ManifoldModel::torus(2).unwrap(), vec![1.6, 0.8, 0.4]),
            (ManifoldModel::sphere2(), vec![1.2, 0.6, 0.3]),
        ] {
            let d = m.dim() as f64;
            let logs: Vec<(f64, f64)> = epss
                .iter()
                .map(|&e| {
                    let set = greedy_maximal_separated(&m, e, 7).unwrap();
                    ((1.0 / e).ln(), (set.len() as f64).ln())
                })
                .collect();
            // Least-squares slope of log M against log(1/ε).
            let k = logs.len() as f64;
            let sx: f64 = logs.iter().map(|p| p.0).sum();
            let sy: f64 = logs.iter().map(|p| p.1).sum();
            let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
            let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
            let slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
            assert!((slope - d).abs() <= 0.1, "{}: slope {slope} vs d = {d}", m.name());
        }
    }

    #[test]
    fn eps_domain_error() {
        assert!(matches!(
            greedy_maximal_separated(&t1(), 0.0, 1),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            greedy_maximal_separated(&t1(), 10.0, 1),
            Err(Error::Domain(_))
        ));
    }

    fn equispaced_circle(count: usize) -> Vec<Point> {
        (0..count).map(|k| Point::torus(&[TAU * k as f64 / count as f64])).collect()
    }

    #[test]
    fn thinning_keeps_every_fourth_point_on_equispaced_circle() {
        let h = TAU / 64.0;
        let parent = SeparatedSet::from_points(t1(), equispaced_circle(64), h).unwrap();
        let thinned = thin_subset(&parent, 4.0 * h).unwrap();
        assert_eq!(thinned.len(), 16);
        for (k, p) in thinned.points().iter().enumerate() {
            assert!((p.coords()[0] - 4.0 * h * k as f64).abs() < 1e-12);
        }
        assert!(thinned.covering_radius_bound() <= 2.0 * 4.0 * h + 1e-12);

        // δ equal to the parent separation returns every point.
        let same = thin_subset(&parent, h).unwrap();
        assert_eq!(same.len(), parent.len());

        // δ below the parent separation is rejected.
        assert!(thin_subset(&parent, h / 2.0).is_err());
    }

    #[test]
    fn thinning_cardinality_band() {
        let m = ManifoldModel::sphere2();
        let parent = greedy_maximal_separated(&m, 0.1, 4).unwrap();
        let delta = 0.4;
        let thinned = thin_subset(&parent, delta).unwrap();
        let expect = 1.0 / (delta * delta);
        let ratio = thinned.len() as f64 / expect;
        assert!((0.5..=16.0).contains(&ratio), "count {} vs δ^-d {expect}", thinned.len());
        assert!(thinned.covering_radius_bound() <= 2.0 * delta);
    }

    #[test]
    fn mz_weights_on_equispaced_circle_are_uniform_and_exact_for_l2() {
        let n = 8.0;
        let space = SpectralSpace::build(t1(), n).unwrap();
        let count = 2 * 8 + 1;
        let h = TAU / count as f64;
        let set = SeparatedSet::from_points(t1(), equispaced_circle(count), h).unwrap();
        // ε = 2π/17 ≈ 0.37 > 1/(2·8): relax δ₀ for this exactness check, and
        // align the fine grid (odd multiple per cell, so no boundary ties).
        let rule = mz_weights_with_grid(&set, &space, n * h + 1e-9, 9 * count).unwrap();
        for w in rule.weights() {
            assert!((w - 1.0 / count as f64).abs() < 1e-12);
        }
        let total: f64 = rule.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-10);

        // Discrete 2-norm equals the Parseval norm exactly for P_n.
        let mut rng = trial_rng(31, 0);
        use rand_distr::StandardNormal;
        let coeffs: Vec<f64> = (0..space.dim())
            .map(|_| rand::Rng::sample::<f64, _>(&mut rng, StandardNormal))
            .collect();
        let mat = space.evaluate_basis(set.points()).unwrap();
        let values: Vec<f64> = (0..set.len())
            .map(|i| mat.row(i).iter().zip(&coeffs).map(|(b, c)| b * c).sum())
            .collect();
        let discrete = rule.discrete_lp(&values, Exponent::Finite(2.0)).unwrap();
        let parseval: f64 = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
        assert!((discrete - parseval).abs() < 1e-10);
    }

    #[test]
    fn mz_precondition_names_required_separation() {
        let space = SpectralSpace::build(t1(), 32.0).unwrap();
        let set = greedy_maximal_separated(&t1(), 0.5, 2).unwrap();
        match mz_weights(&set, &space) {
            Err(Error::Precondition(msg)) => {
                assert!(msg.contains("0.015625"), "message should name δ₀/n: {msg}");
            }
            other => panic!("expected precondition error, got {other:?}"),
        }
    }

    #[test]
    fn mz_weights_scale_like_reciprocal_dimension_count() {
        for &n in &[8.0, 16.0, 32.0] {
            let space = SpectralSpace::build(t1(), n).unwrap();
            let set = greedy_maximal_separated(&t1(), DEFAULT_DELTA0 / n, 11).unwrap();
            let rule = mz_weights(&set, &space).unwrap();
            let total: f64 = rule.weights().iter().sum();
            assert!((total - 1.0).abs() < 1e-10);
            // Voronoi cells of a maximal δ₀/n-separated circle set have
            // length in [ε, 2ε], so n·λ lies in [δ₀/(2π), δ₀/π]; the band
            // below adds headroom for the grid accumulation.
            for &w in rule.weights() {
                let scaled = w * n;
                assert!(
                    (0.04..=0.4).contains(&scaled),
                    "n = {n}: n·λ = {scaled} outside the recorded band"
                );
            }
        }
    }

    #[test]
    fn csv_export_round_trip() {
        let set = greedy_maximal_separated(&t1(), 1.0, 8).unwrap();
        let mut buf = Vec::new();
        set.write_csv(&mut buf, None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x0,x1,x2,weight");
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), set.len());
        let first: Vec<f64> = rows[0].split(',').map(|v| v.parse().unwrap()).collect();
        assert!((first[0] - set.points()[0].coords()[0]).abs() < 1e-15);
    }
}
