//! Monte Carlo estimators for average Nikolskii factors, norm moments and
//! inverse moments, normalized point-evaluation diagnostics, and worst-case
//! factor computation by projected gradient ascent.
//!
//! Every estimator draws trial t from the substream (master_seed, t), so
//! results are reproducible bit for bit and independent of thread
//! scheduling: trials are collected in index order and reduced sequentially.

use crate::error::{Error, Result};
use crate::kernel::kernel_diagonal;
use crate::norms::{Exponent, NormEngine};
use crate::numerics::{kahan_sum, mean_stderr};
use crate::pointsets::SeparatedSet;
use crate::randpoly::sample_coefficients;
use crate::rng::trial_rng;
use crate::spectrum::SpectralSpace;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use std::sync::Arc;

/// A Monte Carlo value with its standard error and reproduction key.
#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub trials: u64,
    pub master_seed: u64,
    pub meta: EstimateMeta,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateMeta {
    pub manifold: String,
    pub d: usize,
    pub n: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<Exponent>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<Exponent>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

fn meta(engine: &NormEngine) -> EstimateMeta {
    let space = engine.space();
    EstimateMeta {
        manifold: space.manifold().name().to_string(),
        d: space.manifold().dim(),
        n: space.degree(),
        p: None,
        q: None,
        s: None,
        r: None,
    }
}

/// Run trials 0..trials on independent substreams; results are collected in
/// trial order so any later reduction is deterministic.
fn run_trials<F>(trials: u64, f: F) -> Result<Vec<f64>>
where
    F: Fn(u64) -> Result<f64> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..trials).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..trials).map(f).collect()
    }
}

fn check_trials(trials: u64) -> Result<()> {
    if trials < 2 {
        return Err(Error::precondition(format!("need at least 2 trials, got {trials}")));
    }
    Ok(())
}

fn trial_norm(engine: &NormEngine, trial: u64, seed: u64, p: Exponent) -> Result<f64> {
    let a = sample_coefficients(engine.space(), 1.0, seed, trial)?;
    let report = engine
        .norm(&a.values, p)
        .map_err(|e| Error::accuracy(format!("trial {trial} (p = {p}): {e}")))?;
    Ok(report.value)
}

fn trial_ratio(engine: &NormEngine, trial: u64, seed: u64, p: Exponent, q: Exponent) -> Result<f64> {
    let a = sample_coefficients(engine.space(), 1.0, seed, trial)?;
    let np = engine
        .norm(&a.values, p)
        .map_err(|e| Error::accuracy(format!("trial {trial} (p = {p}): {e}")))?;
    let nq = engine
        .norm(&a.values, q)
        .map_err(|e| Error::accuracy(format!("trial {trial} (q = {q}): {e}")))?;
    if np.value <= 0.0 {
        return Err(Error::accuracy(format!("trial {trial}: vanishing denominator norm")));
    }
    Ok(nq.value / np.value)
}

/// Average Nikolskii factor E ‖P_a‖_q / ‖P_a‖_p with a ~ N(0, I_N).
///
/// The ratio is scale-invariant per sample, so σ is fixed to 1 internally.
pub fn estimate_average_factor(
    engine: &NormEngine,
    p: Exponent,
    q: Exponent,
    trials: u64,
    master_seed: u64,
) -> Result<Estimate> {
    check_trials(trials)?;
    let samples = run_trials(trials, |t| trial_ratio(engine, t, master_seed, p, q))?;
    let (value, stderr) = mean_stderr(&samples);
    let mut m = meta(engine);
    m.p = Some(p);
    m.q = Some(q);
    Ok(Estimate { value, stderr, trials, master_seed, meta: m })
}

/// Average factor and duality product from one sample pass; the suites use
/// this to avoid recomputing norms for the duality verdict.
pub fn average_factor_with_duality(
    engine: &NormEngine,
    p: Exponent,
    q: Exponent,
    trials: u64,
    master_seed: u64,
) -> Result<(Estimate, DualityReport)> {
    check_trials(trials)?;
    let samples = run_trials(trials, |t| trial_ratio(engine, t, master_seed, p, q))?;
    let (value, stderr) = mean_stderr(&samples);
    let mean_inverse = kahan_sum(samples.iter().map(|r| 1.0 / r)) / trials as f64;
    let product = value * mean_inverse;
    let mut m = meta(engine);
    m.p = Some(p);
    m.q = Some(q);
    Ok((
        Estimate { value, stderr, trials, master_seed, meta: m },
        DualityReport {
            p,
            q,
            n: engine.space().degree(),
            trials,
            master_seed,
            mean_ratio: value,
            mean_inverse_ratio: mean_inverse,
            product,
            pass: product >= 1.0 - 1e-12,
        },
    ))
}

/// Moment E ‖P_a‖_q^s.
pub fn estimate_moment(
    engine: &NormEngine,
    q: Exponent,
    s_power: f64,
    trials: u64,
    master_seed: u64,
) -> Result<Estimate> {
    check_trials(trials)?;
    if !(s_power >= 1.0) {
        return Err(Error::domain(format!("moment power must be >= 1, got {s_power}")));
    }
    let samples = run_trials(trials, |t| {
        trial_norm(engine, t, master_seed, q).map(|v| v.powf(s_power))
    })?;
    let (value, stderr) = mean_stderr(&samples);
    let mut m = meta(engine);
    m.q = Some(q);
    m.s = Some(s_power);
    Ok(Estimate { value, stderr, trials, master_seed, meta: m })
}

/// Inverse sup-norm moment E ‖P_a‖_∞^{−r}, r in (0, N).
pub fn estimate_inverse_sup_moment(
    engine: &NormEngine,
    r: f64,
    trials: u64,
    master_seed: u64,
) -> Result<Estimate> {
    check_trials(trials)?;
    if !(r > 0.0) {
        return Err(Error::domain(format!("inverse-moment order must be > 0, got {r}")));
    }
    let n_dim = engine.space().dim() as f64;
    if r >= n_dim {
        return Err(Error::precondition(format!(
            "inverse-moment order r = {r} must be below the dimension N = {n_dim}"
        )));
    }
    let samples = run_trials(trials, |t| {
        let sup = trial_norm(engine, t, master_seed, Exponent::Infinity)?;
        if sup < 1e-300 {
            return Err(Error::accuracy(format!("trial {t}: sup norm underflow")));
        }
        Ok(sup.powf(-r))
    })?;
    let (value, stderr) = mean_stderr(&samples);
    let mut m = meta(engine);
    m.r = Some(r);
    Ok(Estimate { value, stderr, trials, master_seed, meta: m })
}

/// Empirical check of the duality bound mean(r)·mean(1/r) ≥ 1, both means
/// over the same sample set.
#[derive(Debug, Clone, Serialize)]
pub struct DualityReport {
    pub p: Exponent,
    pub q: Exponent,
    pub n: f64,
    pub trials: u64,
    pub master_seed: u64,
    pub mean_ratio: f64,
    pub mean_inverse_ratio: f64,
    pub product: f64,
    pub pass: bool,
}

pub fn duality_check(
    engine: &NormEngine,
    p: Exponent,
    q: Exponent,
    trials: u64,
    master_seed: u64,
) -> Result<DualityReport> {
    check_trials(trials)?;
    let samples = run_trials(trials, |t| trial_ratio(engine, t, master_seed, p, q))?;
    let mean_ratio = kahan_sum(samples.iter().copied()) / trials as f64;
    let mean_inverse = kahan_sum(samples.iter().map(|r| 1.0 / r)) / trials as f64;
    let product = mean_ratio * mean_inverse;
    Ok(DualityReport {
        p,
        q,
        n: engine.space().degree(),
        trials,
        master_seed,
        mean_ratio,
        mean_inverse_ratio: mean_inverse,
        product,
        pass: product >= 1.0 - 1e-12,
    })
}

/// Which moment-decoupling identity to check empirically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DecouplingRelation {
    /// E[‖P‖_q^k / ‖P‖₂^l] against n^{−dl/2}·E‖P‖_q^k (requires l < k + N).
    QNormOverL2,
    /// E[‖P‖₂^k / ‖P‖_p^l] against n^{dk/2}·E‖P‖_p^{−l} (requires l < N).
    L2OverPNorm,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecouplingReport {
    pub relation: DecouplingRelation,
    pub k: f64,
    pub l: f64,
    pub exponent: Exponent,
    pub n: f64,
    pub trials: u64,
    pub master_seed: u64,
    pub lhs: f64,
    pub rhs: f64,
    /// lhs / rhs; the sweep-stability of this ratio is the testable claim.
    pub ratio: f64,
}

/// Both sides of a moment-decoupling comparison on the same sample set.
pub fn ratio_decoupling_check(
    engine: &NormEngine,
    relation: DecouplingRelation,
    k: f64,
    l: f64,
    exponent: Exponent,
    trials: u64,
    master_seed: u64,
) -> Result<DecouplingReport> {
    check_trials(trials)?;
    if !(k > 0.0 && l > 0.0) {
        return Err(Error::domain(format!("powers must be positive, got k = {k}, l = {l}")));
    }
    let n_dim = engine.space().dim() as f64;
    match relation {
        DecouplingRelation::QNormOverL2 => {
            if l >= k + n_dim {
                return Err(Error::precondition(format!(
                    "requires l < k + N (l = {l}, k = {k}, N = {n_dim})"
                )));
            }
        }
        DecouplingRelation::L2OverPNorm => {
            if l >= n_dim {
                return Err(Error::precondition(format!("requires l < N (l = {l}, N = {n_dim})")));
            }
        }
    }
    let n = engine.space().degree();
    let d = engine.space().manifold().dim() as f64;
    let f = |t: u64| -> Result<(f64, f64)> {
        let a = sample_coefficients(engine.space(), 1.0, master_seed, t)?;
        let l2 = engine.norm(&a.values, Exponent::Finite(2.0))?.value;
        let other = engine.norm(&a.values, exponent)?.value;
        Ok(match relation {
            DecouplingRelation::QNormOverL2 => (other.powf(k) / l2.powf(l), other.powf(k)),
            DecouplingRelation::L2OverPNorm => (l2.powf(k) / other.powf(l), other.powf(-l)),
        })
    };
    let pairs: Result<Vec<(f64, f64)>> = {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            (0..trials).into_par_iter().map(f).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..trials).map(f).collect()
        }
    };
    let pairs = pairs?;
    let lhs = kahan_sum(pairs.iter().map(|p| p.0)) / trials as f64;
    let scale = match relation {
        DecouplingRelation::QNormOverL2 => n.powf(-d * l / 2.0),
        DecouplingRelation::L2OverPNorm => n.powf(d * k / 2.0),
    };
    let rhs = scale * kahan_sum(pairs.iter().map(|p| p.1)) / trials as f64;
    Ok(DecouplingReport {
        relation,
        k,
        l,
        exponent,
        n,
        trials,
        master_seed,
        lhs,
        rhs,
        ratio: lhs / rhs,
    })
}

// ---- worst-case factor ----------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WorstStatus {
    /// Closed-form extremal value.
    Exact,
    /// Certified lower bound from multi-start ascent.
    LowerBound,
}

/// Worst Nikolskii factor sup ‖P‖_q/‖P‖_p: exact where a closed form exists
/// (q ≤ p, and (2, ∞) via the kernel diagonal), a certified lower bound from
/// multi-start projected gradient ascent otherwise.
#[derive(Debug, Clone, Serialize)]
pub struct WorstFactor {
    pub p: Exponent,
    pub q: Exponent,
    pub n: f64,
    pub value: f64,
    pub status: WorstStatus,
    /// Maximizing (or best-found) unit coefficient vector.
    pub witness: Vec<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct AscentOptions {
    pub starts: usize,
    pub max_iters: usize,
    /// Random probes mixed into the certified maximum.
    pub probes: usize,
    pub seed: u64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        AscentOptions { starts: 16, max_iters: 150, probes: 32, seed: 0x5eed }
    }
}

pub fn worst_factor(
    engine: &NormEngine,
    p: Exponent,
    q: Exponent,
    opts: &AscentOptions,
) -> Result<WorstFactor> {
    let space = engine.space().clone();
    let n_dim = space.dim();
    let make = |status: WorstStatus, value: f64, witness: Vec<f64>, notes: Vec<String>| WorstFactor {
        p,
        q,
        n: space.degree(),
        value,
        status,
        witness,
        notes,
    };
    // q ≤ p: constants are extremal on a probability space.
    if q.le(&p) {
        let mut w = vec![0.0; n_dim];
        w[0] = 1.0;
        return Ok(make(WorstStatus::Exact, 1.0, w, Vec::new()));
    }
    // (2, ∞): the normalized reproducing-kernel column attains √e(x, x, n).
    if p == Exponent::Finite(2.0) && q.is_infinite() {
        let mut rng = trial_rng(opts.seed, crate::rng::RESERVED_STREAM_BASE + 7);
        let mut best = f64::NEG_INFINITY;
        let mut best_point = space.manifold().random_point(&mut rng);
        for _ in 0..32 {
            let x = space.manifold().random_point(&mut rng);
            let diag = kernel_diagonal(&space, &x)?;
            if diag > best {
                best = diag;
                best_point = x;
            }
        }
        let mut witness = vec![0.0; n_dim];
        space.evaluate_basis_row(&best_point, &mut witness)?;
        let scale = 1.0 / best.sqrt();
        for w in &mut witness {
            *w *= scale;
        }
        return Ok(make(WorstStatus::Exact, best.sqrt(), witness, Vec::new()));
    }
    ascend_worst(engine, p, q, opts).map(|(value, witness, notes)| {
        make(WorstStatus::LowerBound, value, witness, notes)
    })
}

fn ascend_worst(
    engine: &NormEngine,
    p: Exponent,
    q: Exponent,
    opts: &AscentOptions,
) -> Result<(f64, Vec<f64>, Vec<String>)> {
    let space = engine.space();
    let n_dim = space.dim();
    let even_need = [p, q]
        .iter()
        .filter_map(|e| match e {
            Exponent::Finite(v) if (v - v.round()).abs() < 1e-9 => Some(v.round() as usize),
            _ => None,
        })
        .max()
        .unwrap_or(0);
    let grid = engine.ascent_grid(even_need);
    let weights = engine.ascent_weights(&grid);

    // powi fast path keeps the hot loops off powf for integer exponents.
    let abs_pow = |v: f64, pf: f64| -> f64 {
        if (pf - pf.round()).abs() < 1e-12 {
            v.abs().powi(pf.round() as i32)
        } else {
            v.abs().powf(pf)
        }
    };
    let disc_norm = |values: &[f64], e: Exponent| -> f64 {
        match e {
            Exponent::Infinity => values.iter().fold(0.0f64, |a, v| a.max(v.abs())),
            Exponent::Finite(pf) => {
                let s: f64 = weights.iter().zip(values).map(|(w, v)| w * abs_pow(*v, pf)).sum();
                s.powf(1.0 / pf)
            }
        }
    };
    let objective = |a: &[f64]| -> (f64, Vec<f64>) {
        let values = engine.ascent_values(&grid, a);
        let f = disc_norm(&values, q).ln() - disc_norm(&values, p).ln();
        (f, values)
    };
    // ∇ ln‖·‖ via the evaluation adjoint; the ∞ case uses the subgradient at
    // the grid argmax.
    let grad_ln_norm = |values: &[f64], e: Exponent| -> Vec<f64> {
        match e {
            Exponent::Infinity => {
                let (mut best, mut idx) = (0.0f64, 0usize);
                for (i, v) in values.iter().enumerate() {
                    if v.abs() > best {
                        best = v.abs();
                        idx = i;
                    }
                }
                let mut psi = vec![0.0; values.len()];
                psi[idx] = values[idx].signum() / best.max(f64::MIN_POSITIVE);
                engine.ascent_adjoint(&grid, &psi)
            }
            Exponent::Finite(pf) => {
                let norm_p: f64 =
                    weights.iter().zip(values).map(|(w, v)| w * abs_pow(*v, pf)).sum();
                let psi: Vec<f64> = weights
                    .iter()
                    .zip(values)
                    .map(|(w, v)| w * abs_pow(*v, pf - 1.0) * v.signum() / norm_p)
                    .collect();
                engine.ascent_adjoint(&grid, &psi)
            }
        }
    };

    let normalize = |a: &mut [f64]| {
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in a.iter_mut() {
                *v /= norm;
            }
        }
    };

    // Start set: localized kernel column, tapered kernel column, random.
    let mut starts: Vec<Vec<f64>> = Vec::new();
    let x0 = match space.manifold().kind() {
        crate::manifold::ManifoldKind::Torus(d) => crate::manifold::Point::torus(&vec![0.0; d]),
        crate::manifold::ManifoldKind::Sphere2 => crate::manifold::Point::sphere([0.0, 0.0, 1.0]),
    };
    let mut kernel_col = vec![0.0; n_dim];
    space.evaluate_basis_row(&x0, &mut kernel_col)?;
    starts.push(kernel_col.clone());
    let n_deg = space.degree().max(1.0);
    let tapered: Vec<f64> = kernel_col
        .iter()
        .zip(space.eigenpairs())
        .map(|(v, pair)| v * (1.0 - pair.lambda / (n_deg + 1.0)))
        .collect();
    starts.push(tapered);
    while starts.len() < opts.starts.max(2) {
        let idx = starts.len() as u64;
        let mut rng = trial_rng(opts.seed, crate::rng::RESERVED_STREAM_BASE + 100 + idx);
        starts.push((0..n_dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
    }

    let mut notes = Vec::new();
    let mut finishers: Vec<(f64, Vec<f64>)> = Vec::new();
    for mut a in starts {
        normalize(&mut a);
        let (mut f_cur, mut values) = objective(&a);
        let mut eta = 0.5;
        let mut converged = false;
        for _ in 0..opts.max_iters {
            let mut g = grad_ln_norm(&values, q);
            let gp = grad_ln_norm(&values, p);
            for (gi, pi) in g.iter_mut().zip(&gp) {
                *gi -= pi;
            }
            // Project onto the tangent space of the unit sphere.
            let along: f64 = g.iter().zip(&a).map(|(gi, ai)| gi * ai).sum();
            for (gi, ai) in g.iter_mut().zip(&a) {
                *gi -= along * ai;
            }
            let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gnorm < 1e-12 {
                converged = true;
                break;
            }
            let mut accepted = false;
            let mut try_eta = eta;
            for _ in 0..30 {
                let mut cand: Vec<f64> =
                    a.iter().zip(&g).map(|(ai, gi)| ai + try_eta * gi / gnorm).collect();
                normalize(&mut cand);
                let (f_new, vals_new) = objective(&cand);
                if f_new > f_cur + 1e-13 {
                    a = cand;
                    f_cur = f_new;
                    values = vals_new;
                    eta = (try_eta * 1.5).min(1.0);
                    accepted = true;
                    break;
                }
                try_eta /= 2.0;
            }
            if !accepted {
                converged = true;
                break;
            }
        }
        if !converged {
            notes.push("ascent hit the iteration cap; value is a lower bound".to_string());
        }
        finishers.push((f_cur, a));
    }
    finishers.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

    // Certify the top finishers and a batch of random probes with the
    // engine's accurate norm paths; the reported value is their maximum.
    let certify = |a: &[f64]| -> Result<f64> {
        let np = engine.norm(a, p)?.value;
        let nq = engine.norm(a, q)?.value;
        Ok(nq / np)
    };
    let mut best_value = f64::NEG_INFINITY;
    let mut best_witness = vec![0.0; n_dim];
    for (_, a) in finishers.iter().take(3) {
        let v = certify(a)?;
        if v > best_value {
            best_value = v;
            best_witness = a.clone();
        }
    }
    for j in 0..opts.probes {
        let mut rng = trial_rng(opts.seed, crate::rng::RESERVED_STREAM_BASE + 500 + j as u64);
        let mut a: Vec<f64> = (0..n_dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        normalize(&mut a);
        let v = certify(&a)?;
        if v > best_value {
            best_value = v;
            best_witness = a;
            notes.push(format!("random probe {j} beat the ascent finishers"));
        }
    }
    Ok((best_value, best_witness, notes))
}

// ---- normalized point process and small-ball diagnostics -------------------

#[derive(Debug, Clone, Serialize)]
pub struct SmallBallPoint {
    pub t: f64,
    pub empirical: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Diagnostics of X_j = P_a(ξ_j)/√e(ξ_j, ξ_j, n) over a separated set:
/// per-coordinate variances, pair variance identities, the maximum's mean,
/// its ratio to √(ln M), the median, and small-ball probabilities against
/// the ½·exp(−¼·m²·ln(1/(2t))) bound evaluated with the measured median.
#[derive(Debug, Clone, Serialize)]
pub struct SmallBallReport {
    pub manifold: String,
    pub n: f64,
    pub point_count: usize,
    pub trials: u64,
    pub master_seed: u64,
    pub e_max: f64,
    pub e_max_stderr: f64,
    /// E max_j |X_j| / √(ln M).
    pub sqrt_log_ratio: f64,
    pub median: f64,
    pub variance_min: f64,
    pub variance_max: f64,
    /// Worst |MC − closed form| over the audited pairs, in stderr units.
    pub pair_deviation_sigmas: f64,
    pub small_ball: Vec<SmallBallPoint>,
    pub all_bounds_hold: bool,
}

pub fn normalized_point_process(
    space: &Arc<SpectralSpace>,
    set: &SeparatedSet,
    trials: u64,
    master_seed: u64,
) -> Result<SmallBallReport> {
    check_trials(trials)?;
    if set.len() < 2 {
        return Err(Error::invalid(format!(
            "point process needs at least 2 points, got {}",
            set.len()
        )));
    }
    if set.manifold() != space.manifold() {
        return Err(Error::invalid("point set and space live on different manifolds".to_string()));
    }
    let m_count = set.len();
    let basis = space.evaluate_basis(set.points())?;
    let inv_sqrt_diag: Vec<f64> = (0..m_count)
        .map(|j| 1.0 / basis.row(j).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    // Audited pairs: a handful spread over the index range.
    let pair_count = 8.min(m_count - 1);
    let pairs: Vec<(usize, usize)> = (0..pair_count)
        .map(|k| {
            let i = k * m_count / (pair_count + 1);
            let j = (k + 1) * m_count / (pair_count + 1);
            (i.min(m_count - 1), j.min(m_count - 1))
        })
        .filter(|(i, j)| i != j)
        .collect();

    #[derive(Clone)]
    struct Partial {
        sum: Vec<f64>,
        sumsq: Vec<f64>,
        pair_sq: Vec<f64>,
        pair_sq2: Vec<f64>,
        maxima: Vec<f64>,
    }
    let chunk_size = 1024u64;
    let chunks: Vec<u64> = (0..trials.div_ceil(chunk_size)).collect();
    let run_chunk = |c: &u64| -> Result<Partial> {
        let lo = c * chunk_size;
        let hi = ((c + 1) * chunk_size).min(trials);
        let mut part = Partial {
            sum: vec![0.0; m_count],
            sumsq: vec![0.0; m_count],
            pair_sq: vec![0.0; pairs.len()],
            pair_sq2: vec![0.0; pairs.len()],
            maxima: Vec::with_capacity((hi - lo) as usize),
        };
        let mut x = vec![0.0; m_count];
        for t in lo..hi {
            let a = sample_coefficients(space, 1.0, master_seed, t)?;
            let mut max_abs = 0.0f64;
            for j in 0..m_count {
                let v: f64 = basis.row(j).iter().zip(&a.values).map(|(b, c)| b * c).sum::<f64>()
                    * inv_sqrt_diag[j];
                x[j] = v;
                part.sum[j] += v;
                part.sumsq[j] += v * v;
                max_abs = max_abs.max(v.abs());
            }
            for (k, (i, j)) in pairs.iter().enumerate() {
                let d = x[*i] - x[*j];
                part.pair_sq[k] += d * d;
                part.pair_sq2[k] += d * d * d * d;
            }
            part.maxima.push(max_abs);
        }
        Ok(part)
    };
    let partials: Result<Vec<Partial>> = {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            chunks.par_iter().map(run_chunk).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            chunks.iter().map(run_chunk).collect()
        }
    };
    let partials = partials?;
    let mut sum = vec![0.0; m_count];
    let mut sumsq = vec![0.0; m_count];
    let mut pair_sq = vec![0.0; pairs.len()];
    let mut pair_sq2 = vec![0.0; pairs.len()];
    let mut maxima = Vec::with_capacity(trials as usize);
    for part in &partials {
        for j in 0..m_count {
            sum[j] += part.sum[j];
            sumsq[j] += part.sumsq[j];
        }
        for k in 0..pairs.len() {
            pair_sq[k] += part.pair_sq[k];
            pair_sq2[k] += part.pair_sq2[k];
        }
        maxima.extend_from_slice(&part.maxima);
    }
    let tf = trials as f64;
    let mut variance_min = f64::INFINITY;
    let mut variance_max = f64::NEG_INFINITY;
    for j in 0..m_count {
        let mean = sum[j] / tf;
        let var = sumsq[j] / tf - mean * mean;
        variance_min = variance_min.min(var);
        variance_max = variance_max.max(var);
    }
    // Pair identity E(X_i − X_j)² = 2 − 2e_ij/√(e_ii e_jj).
    let mut pair_dev_sigmas = 0.0f64;
    for (k, (i, j)) in pairs.iter().enumerate() {
        let mc = pair_sq[k] / tf;
        let mc_var = (pair_sq2[k] / tf - mc * mc).max(0.0);
        let se = (mc_var / tf).sqrt().max(1e-12);
        let e_ij: f64 = basis.row(*i).iter().zip(basis.row(*j)).map(|(a, b)| a * b).sum();
        let expect = 2.0 - 2.0 * e_ij * inv_sqrt_diag[*i] * inv_sqrt_diag[*j];
        pair_dev_sigmas = pair_dev_sigmas.max((mc - expect).abs() / se);
    }
    let (e_max, e_max_stderr) = mean_stderr(&maxima);
    let mut sorted = maxima;
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if sorted.len() % 2 == 0 {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    } else {
        sorted[sorted.len() / 2]
    };
    let mut small_ball = Vec::new();
    let mut all_hold = true;
    for step in 1..=9 {
        let t = 0.05 * step as f64;
        let cutoff = t * median;
        let empirical = sorted.partition_point(|v| *v <= cutoff) as f64 / tf;
        let bound = 0.5 * (-0.25 * median * median * (1.0 / (2.0 * t)).ln()).exp();
        let pass = empirical <= bound * 1.05;
        all_hold &= pass;
        small_ball.push(SmallBallPoint { t, empirical, bound, pass });
    }
    Ok(SmallBallReport {
        manifold: space.manifold().name().to_string(),
        n: space.degree(),
        point_count: m_count,
        trials,
        master_seed,
        e_max,
        e_max_stderr,
        sqrt_log_ratio: e_max / (m_count as f64).ln().sqrt(),
        median,
        variance_min,
        variance_max,
        pair_deviation_sigmas: pair_dev_sigmas,
        small_ball,
        all_bounds_hold: all_hold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::ManifoldModel;
    use crate::norms::NormOptions;
    use crate::pointsets::greedy_maximal_separated;

    fn engine(m: ManifoldModel, n: f64) -> NormEngine {
        let opts = NormOptions { convergence_tol: 1e-4, ..Default::default() };
        NormEngine::with_options(Arc::new(SpectralSpace::build(m, n).unwrap()), opts)
    }

    fn t1(n: f64) -> NormEngine {
        engine(ManifoldModel::torus(1).unwrap(), n)
    }

    #[test]
    fn equal_exponents_give_unit_ratio_zero_spread() {
        let e = t1(8.0);
        let est =
            estimate_average_factor(&e, Exponent::Finite(2.0), Exponent::Finite(2.0), 16, 3)
                .unwrap();
        assert_eq!(est.value, 1.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn degree_zero_space_has_unit_ratio() {
        let e = t1(0.0);
        let est =
            estimate_average_factor(&e, Exponent::Finite(1.0), Exponent::Infinity, 16, 3).unwrap();
        assert_eq!(est.value, 1.0);
    }

    #[test]
    fn trials_precondition() {
        let e = t1(4.0);
        assert!(matches!(
            estimate_average_factor(&e, Exponent::Finite(1.0), Exponent::Finite(2.0), 1, 3),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn reproducibility_bitwise() {
        let e = t1(16.0);
        let a = estimate_average_factor(&e, Exponent::Finite(1.0), Exponent::Finite(2.0), 64, 9)
            .unwrap();
        let b = estimate_average_factor(&e, Exponent::Finite(1.0), Exponent::Finite(2.0), 64, 9)
            .unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }

    #[test]
    fn moment_chi_square_identities() {
        // E‖P‖₂² = N (χ²_N mean).
        let e = t1(8.0);
        let n_dim = e.space().dim() as f64;
        let est = estimate_moment(&e, Exponent::Finite(2.0), 2.0, 4000, 11).unwrap();
        assert!(
            (est.value - n_dim).abs() <= 3.0 * est.stderr,
            "{} vs {n_dim} ± {}",
            est.value,
            3.0 * est.stderr
        );
        // E‖P‖₂ / √N in (0.9, 1.0) for N ≥ 50 (χ_N mean vs √N).
        let e = t1(32.0);
        let n_dim = e.space().dim() as f64;
        let est = estimate_moment(&e, Exponent::Finite(2.0), 1.0, 4000, 12).unwrap();
        let ratio = est.value / n_dim.sqrt();
        assert!((0.9..1.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn inverse_sup_moment_r_limits() {
        let e = t1(4.0);
        // r → 0: estimate → 1.
        let est = estimate_inverse_sup_moment(&e, 1e-9, 64, 5).unwrap();
        assert!((est.value - 1.0).abs() < 1e-6);
        // r must stay below N.
        assert!(matches!(
            estimate_inverse_sup_moment(&t1(0.0), 1.5, 64, 5),
            Err(Error::Precondition(_))
        ));
        assert!(estimate_inverse_sup_moment(&e, -1.0, 64, 5).is_err());
    }

    #[test]
    fn inverse_moment_matches_gaussian_quadrature_oracle_at_degree_zero() {
        // N = 1: ‖P‖_∞ = |a₀|, so E|a₀|^{−1/2} has a 1-d integral oracle:
        // with x = u², E|Z|^{−1/2} = 4∫_0^∞ φ(u²) du.
        let e = t1(0.0);
        let est = estimate_inverse_sup_moment(&e, 0.5, 200_000, 21).unwrap();
        let (xs, ws) = crate::numerics::gauss_legendre(400);
        let oracle: f64 = xs
            .iter()
            .zip(&ws)
            .map(|(x, w)| {
                let u = (x + 1.0) * 3.0; // maps to [0, 6]; the tail is negligible
                w * 3.0 * 4.0 * (-u.powi(4) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
            })
            .sum();
        // The summand has infinite variance, so allow a generous band.
        assert!(
            (est.value - oracle).abs() < 0.02,
            "mc {} vs oracle {oracle}",
            est.value
        );
    }

    #[test]
    fn worst_factor_exact_cases() {
        let e = t1(16.0);
        let w = worst_factor(&e, Exponent::Finite(4.0), Exponent::Finite(2.0), &AscentOptions::default())
            .unwrap();
        assert_eq!(w.value, 1.0);
        assert_eq!(w.status, WorstStatus::Exact);
        assert_eq!(w.witness[0], 1.0);

        let w = worst_factor(&e, Exponent::Finite(2.0), Exponent::Infinity, &AscentOptions::default())
            .unwrap();
        assert!((w.value - 33.0f64.sqrt()).abs() < 1e-10);
        assert_eq!(w.status, WorstStatus::Exact);

        let s2 = engine(ManifoldModel::sphere2(), 10.0);
        let w = worst_factor(&s2, Exponent::Finite(2.0), Exponent::Infinity, &AscentOptions::default())
            .unwrap();
        assert!((w.value - 10.0).abs() < 1e-9);
    }

    #[test]
    fn worst_factor_ascent_beats_kernel_candidates_and_probes() {
        let e = t1(16.0);
        let opts = AscentOptions { starts: 8, max_iters: 80, ..Default::default() };
        let w = worst_factor(&e, Exponent::Finite(1.0), Exponent::Finite(4.0), &opts).unwrap();
        assert_eq!(w.status, WorstStatus::LowerBound);

        // Tapered-kernel candidate (positive, Fejér-like): its true ratio is
        // a floor the ascent must not fall below.
        let space = e.space();
        let x0 = crate::manifold::Point::torus(&[0.0]);
        let mut col = vec![0.0; space.dim()];
        space.evaluate_basis_row(&x0, &mut col).unwrap();
        let n = space.degree();
        let taper: Vec<f64> = col
            .iter()
            .zip(space.eigenpairs())
            .map(|(v, pair)| v * (1.0 - pair.lambda / (n + 1.0)))
            .collect();
        let taper_ratio =
            e.lp_norm(&taper, 4.0).unwrap().value / e.lp_norm(&taper, 1.0).unwrap().value;
        assert!(
            w.value >= taper_ratio - 1e-9,
            "ascent {} below tapered-kernel ratio {taper_ratio}",
            w.value
        );

        // Certified value dominates random probes.
        let mut probe_max = 0.0f64;
        for t in 0..1000 {
            let a = sample_coefficients(space, 1.0, 999, t).unwrap();
            let r =
                e.lp_norm(&a.values, 4.0).unwrap().value / e.lp_norm(&a.values, 1.0).unwrap().value;
            probe_max = probe_max.max(r);
        }
        assert!(w.value >= probe_max, "{} vs probe max {probe_max}", w.value);
    }

    #[test]
    fn duality_product_at_least_one() {
        let e = t1(16.0);
        let r = duality_check(&e, Exponent::Finite(2.0), Exponent::Infinity, 500, 4).unwrap();
        assert!(r.pass);
        assert!(r.product >= 1.0 - 1e-12);
        // Non-constant ratios give a strictly larger product.
        assert!(r.product > 1.0 + 1e-6, "product {}", r.product);
        let eq = duality_check(&e, Exponent::Finite(2.0), Exponent::Finite(2.0), 50, 4).unwrap();
        assert!((eq.product - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decoupling_ratio_stable_over_sweep() {
        // E[‖P‖_q^s/‖P‖₂^s] vs n^{−ds/2}·E‖P‖_q^s with s = 1, q = 4.
        let mut ratios = Vec::new();
        for &n in &[16.0, 32.0, 64.0] {
            let e = t1(n);
            let rep = ratio_decoupling_check(
                &e,
                DecouplingRelation::QNormOverL2,
                1.0,
                1.0,
                Exponent::Finite(4.0),
                600,
                31,
            )
            .unwrap();
            ratios.push(rep.ratio);
        }
        let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
        let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max / min < 1.5, "ratios {ratios:?}");

        // Hypothesis guards.
        let e = t1(2.0);
        assert!(matches!(
            ratio_decoupling_check(
                &e,
                DecouplingRelation::L2OverPNorm,
                1.0,
                1e9,
                Exponent::Finite(1.0),
                4,
                1
            ),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn decoupling_l2_over_p_matches_inverse_moment_pathway() {
        // E[‖P‖₂²/‖P‖_∞²] vs n^d·E‖P‖_∞^{−2}: a stable band over the sweep.
        let mut ratios = Vec::new();
        for &n in &[16.0, 32.0] {
            let e = t1(n);
            let rep = ratio_decoupling_check(
                &e,
                DecouplingRelation::L2OverPNorm,
                2.0,
                2.0,
                Exponent::Infinity,
                400,
                37,
            )
            .unwrap();
            ratios.push(rep.ratio);
        }
        assert!(ratios.iter().all(|r| (0.2..5.0).contains(r)), "{ratios:?}");
    }

    #[test]
    fn point_process_statistics() {
        let m = ManifoldModel::torus(1).unwrap();
        let space = Arc::new(SpectralSpace::build(m, 16.0).unwrap());
        let set = greedy_maximal_separated(&m, 0.5 / 16.0, 77).unwrap();
        let rep = normalized_point_process(&space, &set, 3000, 13).unwrap();
        // Construction normalizes every coordinate to unit variance.
        assert!(
            rep.variance_min > 0.9 && rep.variance_max < 1.1,
            "variances [{}, {}]",
            rep.variance_min,
            rep.variance_max
        );
        // Pair variance identity within Monte Carlo resolution.
        assert!(rep.pair_deviation_sigmas <= 4.0, "{} sigmas", rep.pair_deviation_sigmas);
        // The maximum of ~200 standard normals sits near √(2 ln M).
        assert!(rep.e_max > 1.5 && rep.e_max < 4.0, "E max = {}", rep.e_max);
        assert!((0.8..2.5).contains(&rep.sqrt_log_ratio), "{}", rep.sqrt_log_ratio);
        assert!(rep.median > 0.0);
        assert!(rep.all_bounds_hold);
        // Degenerate sets are rejected.
        let tiny = crate::pointsets::SeparatedSet::from_points(
            m,
            vec![crate::manifold::Point::torus(&[0.0])],
            1.0,
        )
        .unwrap();
        assert!(normalized_point_process(&space, &tiny, 100, 1).is_err());
    }

    #[test]
    fn average_factor_monotone_in_q() {
        let e = t1(16.0);
        let a = estimate_average_factor(&e, Exponent::Finite(1.0), Exponent::Finite(2.0), 400, 8)
            .unwrap();
        let b = estimate_average_factor(&e, Exponent::Finite(1.0), Exponent::Finite(4.0), 400, 8)
            .unwrap();
        assert!(a.value <= b.value + 3.0 * (a.stderr + b.stderr));
    }
}
