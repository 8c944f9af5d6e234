//! Laplace-Beltrami eigenpairs with frequency at most n, the real orthonormal
//! eigenbasis, and the diffusion polynomial space they span.
//!
//! Torus basis: {1} ∪ {√2 cos(m·θ), √2 sin(m·θ)} over a canonical half
//! lattice (first nonzero component positive), frequency |m|₂. Sphere basis:
//! real spherical harmonics with frequency √(l(l+1)), normalized so that
//! ∫ |φ|² dμ = 1 under the normalized measure dσ/(4π).

use crate::error::{Error, Result};
use crate::manifold::{ManifoldKind, ManifoldModel, Point};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum BasisLabel {
    /// φ_0 = 1.
    Constant,
    /// √2 cos(m·θ) for a canonical half-lattice vector m.
    TorusCos(Vec<i64>),
    /// √2 sin(m·θ).
    TorusSin(Vec<i64>),
    /// Zonal harmonic (m = 0) of degree l.
    SphereZonal { l: u32 },
    /// √2 · p̄_{l,m}(cos θ) cos(mφ), m ≥ 1.
    SphereCos { l: u32, m: u32 },
    /// √2 · p̄_{l,m}(cos θ) sin(mφ), m ≥ 1.
    SphereSin { l: u32, m: u32 },
}

#[derive(Debug, Clone, Serialize)]
pub struct Eigenpair {
    /// Position in the canonical ordering.
    pub index: usize,
    /// Frequency λ_k (the eigenvalue is −λ_k²).
    pub lambda: f64,
    pub label: BasisLabel,
}

/// The diffusion polynomial space P_n = span{φ_k : λ_k ≤ n}.
#[derive(Debug, Clone)]
pub struct SpectralSpace {
    manifold: ManifoldModel,
    degree: f64,
    eigenpairs: Vec<Eigenpair>,
    /// Largest spherical-harmonic degree included (sphere only).
    max_l: Option<u32>,
}

/// Compact description of a space for serialized reports.
#[derive(Debug, Clone, Serialize)]
pub struct SpaceDescriptor {
    pub manifold: String,
    pub d: usize,
    pub n: f64,
    pub dim: usize,
}

/// Row-major matrix of basis values: entry (i, k) = φ_k(pts[i]).
#[derive(Debug, Clone)]
pub struct BasisMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl BasisMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

impl SpectralSpace {
    /// Build P_n on the given manifold. Inclusion is λ_k ≤ n, non-strict.
    pub fn build(manifold: ManifoldModel, n: f64) -> Result<Self> {
        if !(n >= 0.0) {
            return Err(Error::domain(format!("degree n must be >= 0, got {n}")));
        }
        let (eigenpairs, max_l) = match manifold.kind() {
            ManifoldKind::Torus(d) => (torus_eigenpairs(d, n), None),
            ManifoldKind::Sphere2 => {
                let (pairs, l) = sphere_eigenpairs(n);
                (pairs, Some(l))
            }
        };
        Ok(SpectralSpace { manifold, degree: n, eigenpairs, max_l })
    }

    pub fn manifold(&self) -> &ManifoldModel {
        &self.manifold
    }

    pub fn degree(&self) -> f64 {
        self.degree
    }

    /// N = dim P_n.
    pub fn dim(&self) -> usize {
        self.eigenpairs.len()
    }

    pub fn eigenpairs(&self) -> &[Eigenpair] {
        &self.eigenpairs
    }

    /// Largest included spherical-harmonic degree L (sphere only).
    pub fn max_sphere_degree(&self) -> Option<u32> {
        self.max_l
    }

    pub fn descriptor(&self) -> SpaceDescriptor {
        SpaceDescriptor {
            manifold: self.manifold.name().to_string(),
            d: self.manifold.dim(),
            n: self.degree,
            dim: self.dim(),
        }
    }

    /// N / n^d; requires n ≥ 1.
    pub fn weyl_ratio(&self) -> Result<f64> {
        if self.degree < 1.0 {
            return Err(Error::precondition("weyl_ratio requires n >= 1".to_string()));
        }
        Ok(self.dim() as f64 / self.degree.powi(self.manifold.dim() as i32))
    }

    /// Fill `out` (length N) with φ_k(pt) for all k in canonical order.
    pub fn evaluate_basis_row(&self, pt: &Point, out: &mut [f64]) -> Result<()> {
        self.manifold.validate_point(pt)?;
        if out.len() != self.dim() {
            return Err(Error::invalid(format!(
                "output length {} != dimension {}",
                out.len(),
                self.dim()
            )));
        }
        match pt {
            Point::Torus(angles) => {
                for (slot, pair) in out.iter_mut().zip(&self.eigenpairs) {
                    *slot = match &pair.label {
                        BasisLabel::Constant => 1.0,
                        BasisLabel::TorusCos(m) => {
                            std::f64::consts::SQRT_2 * dot_mi(m, angles).cos()
                        }
                        BasisLabel::TorusSin(m) => {
                            std::f64::consts::SQRT_2 * dot_mi(m, angles).sin()
                        }
                        _ => unreachable!("torus space holds torus labels"),
                    };
                }
            }
            Point::Sphere(_) => {
                let (theta, phi) = pt.to_polar().expect("sphere point");
                let lmax = self.max_l.unwrap_or(0);
                let table = normalized_assoc_legendre_table(lmax, theta.cos(), theta.sin());
                for (slot, pair) in out.iter_mut().zip(&self.eigenpairs) {
                    *slot = match pair.label {
                        BasisLabel::Constant => 1.0,
                        BasisLabel::SphereZonal { l } => table[packed_lm(l, 0)],
                        BasisLabel::SphereCos { l, m } => {
                            std::f64::consts::SQRT_2
                                * table[packed_lm(l, m)]
                                * (m as f64 * phi).cos()
                        }
                        BasisLabel::SphereSin { l, m } => {
                            std::f64::consts::SQRT_2
                                * table[packed_lm(l, m)]
                                * (m as f64 * phi).sin()
                        }
                        _ => unreachable!("sphere space holds sphere labels"),
                    };
                }
            }
        }
        Ok(())
    }

    /// Basis values at many points; row i is φ_·(pts[i]).
    pub fn evaluate_basis(&self, pts: &[Point]) -> Result<BasisMatrix> {
        let cols = self.dim();
        let mut data = vec![0.0; pts.len() * cols];
        for (i, p) in pts.iter().enumerate() {
            self.evaluate_basis_row(p, &mut data[i * cols..(i + 1) * cols])?;
        }
        Ok(BasisMatrix { rows: pts.len(), cols, data })
    }
}

fn dot_mi(m: &[i64], angles: &[f64]) -> f64 {
    m.iter().zip(angles).map(|(&mi, &a)| mi as f64 * a).sum()
}

/// Index of (l, m) in the packed lower-triangular Legendre table.
pub(crate) fn packed_lm(l: u32, m: u32) -> usize {
    (l as usize) * (l as usize + 1) / 2 + m as usize
}

fn torus_eigenpairs(d: usize, n: f64) -> Vec<Eigenpair> {
    let bound = n.floor() as i64;
    let n2 = n * n;
    // Collect canonical half-lattice vectors with |m|² ≤ n².
    let mut vectors: Vec<(i64, Vec<i64>)> = Vec::new();
    let mut current = vec![-bound; d];
    if bound >= 0 {
        'outer: loop {
            let norm2: i64 = current.iter().map(|&c| c * c).sum();
            if (norm2 as f64) <= n2 {
                if let Some(first) = current.iter().find(|&&c| c != 0) {
                    if *first > 0 {
                        vectors.push((norm2, current.clone()));
                    }
                }
            }
            // Odometer over the box [-bound, bound]^d.
            let mut axis = 0;
            loop {
                current[axis] += 1;
                if current[axis] <= bound {
                    break;
                }
                current[axis] = -bound;
                axis += 1;
                if axis == d {
                    break 'outer;
                }
            }
        }
    }
    vectors.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));

    let mut pairs = Vec::with_capacity(1 + 2 * vectors.len());
    pairs.push(Eigenpair { index: 0, lambda: 0.0, label: BasisLabel::Constant });
    for (norm2, m) in vectors {
        let lambda = (norm2 as f64).sqrt();
        pairs.push(Eigenpair {
            index: pairs.len(),
            lambda,
            label: BasisLabel::TorusCos(m.clone()),
        });
        pairs.push(Eigenpair { index: pairs.len(), lambda, label: BasisLabel::TorusSin(m) });
    }
    pairs
}

fn sphere_eigenpairs(n: f64) -> (Vec<Eigenpair>, u32) {
    // Largest l with l(l+1) ≤ n².
    let n2 = n * n;
    let mut lmax = 0u32;
    while (lmax as f64 + 1.0) * (lmax as f64 + 2.0) <= n2 {
        lmax += 1;
    }
    let mut pairs = Vec::new();
    for l in 0..=lmax {
        let lambda = (l as f64 * (l as f64 + 1.0)).sqrt();
        if l == 0 {
            pairs.push(Eigenpair { index: 0, lambda: 0.0, label: BasisLabel::Constant });
            continue;
        }
        pairs.push(Eigenpair {
            index: pairs.len(),
            lambda,
            label: BasisLabel::SphereZonal { l },
        });
        for m in 1..=l {
            pairs.push(Eigenpair {
                index: pairs.len(),
                lambda,
                label: BasisLabel::SphereCos { l, m },
            });
            pairs.push(Eigenpair {
                index: pairs.len(),
                lambda,
                label: BasisLabel::SphereSin { l, m },
            });
        }
    }
    (pairs, lmax)
}

/// Packed table of normalized associated Legendre values p̄_{l,m}(x) for all
/// 0 ≤ m ≤ l ≤ lmax, where p̄_{l,m} = √((2l+1)(l−m)!/(l+m)!) · P_l^m without
/// the Condon-Shortley sign, so that (1/2)∫ p̄² dx = 1.
///
/// Upward recurrence normalized at every step; stable for l up to a few
/// hundred.
pub(crate) fn normalized_assoc_legendre_table(lmax: u32, x: f64, sin_theta: f64) -> Vec<f64> {
    let lm = lmax as usize;
    let mut table = vec![0.0; (lm + 1) * (lm + 2) / 2];
    table[0] = 1.0;
    if lmax == 0 {
        return table;
    }
    // Sectoral seeds p̄_{m,m}.
    for m in 1..=lm {
        let prev = table[packed_lm(m as u32 - 1, m as u32 - 1)];
        let factor = ((2.0 * m as f64 + 1.0) / (2.0 * m as f64)).sqrt();
        table[packed_lm(m as u32, m as u32)] = factor * sin_theta * prev;
    }
    // First off-diagonal p̄_{m+1,m} = √(2m+3) · x · p̄_{m,m}.
    for m in 0..lm {
        let diag = table[packed_lm(m as u32, m as u32)];
        table[packed_lm(m as u32 + 1, m as u32)] = (2.0 * m as f64 + 3.0).sqrt() * x * diag;
    }
    // Three-term recurrence in l for l ≥ m + 2.
    for m in 0..=lm {
        for l in (m + 2)..=lm {
            let lf = l as f64;
            let mf = m as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((2.0 * lf + 1.0) * ((lf - 1.0) * (lf - 1.0) - mf * mf))
                / ((2.0 * lf - 3.0) * (lf * lf - mf * mf)))
                .sqrt();
            table[packed_lm(l as u32, m as u32)] = a * x * table[packed_lm(l as u32 - 1, m as u32)]
                - b * table[packed_lm(l as u32 - 2, m as u32)];
        }
    }
    table
}
