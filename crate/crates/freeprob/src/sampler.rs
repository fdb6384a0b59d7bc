//! Coulomb-gas eigenvalue ensembles: joint log densities, a Metropolis
//! sampler on eigenvalue space, a direct Gaussian sampler for the
//! quadratic ensemble, brute-force normalizers at tiny matrix size, and
//! empirical summaries.
//!
//! All ensembles use the squared-Vandermonde weight
//! `exp(−n ΣQ(x_i)) ∏_{i<j} |x_i − x_j|²`; the orthogonal variant halves
//! both the exponent and the Vandermonde power. Special unitary chains
//! carry `n − 1` free angles, the last angle is always determined by the
//! unit-determinant constraint and participates in every term.

use crate::equilibrium::suggested_domain;
use crate::matrixfn::{hermitian_eigenvalues, CMat};
use crate::measure::{cdf_quantile, wrap_angle, Domain, EmpiricalMeasure, GridMeasure};
use crate::potential::Potential;
use crate::{Error, Result};
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

/// Which joint eigenvalue law the chain targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnsembleKind {
    /// Self-adjoint matrices, eigenvalues on the whole line.
    SelfAdjoint,
    /// Self-adjoint with operator norm capped at the given radius.
    Restricted(f64),
    /// Special unitary matrices, angles on the circle with the determinant
    /// constraint.
    SpecialUnitary,
    /// Positive self-adjoint matrices, eigenvalues on the half-line.
    Positive,
}

/// A joint eigenvalue ensemble: kind, external potential, matrix size.
#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub q: Potential,
    pub n: usize,
    /// First-power Vandermonde with half the exponent (orthogonal and
    /// special orthogonal ensembles).
    pub orthogonal_variant: bool,
}

impl EnsembleSpec {
    pub fn new(kind: EnsembleKind, q: Potential, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "ensembles need matrix size at least 2, got {n}"
            )));
        }
        if let EnsembleKind::Restricted(r) = kind {
            if !(r > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "restricted ensembles need a positive radius, got {r}"
                )));
            }
        }
        let expected = match kind {
            EnsembleKind::SelfAdjoint | EnsembleKind::Restricted(_) => "line",
            EnsembleKind::SpecialUnitary => "circle",
            EnsembleKind::Positive => "halfline",
        };
        if q.domain_label() != expected {
            return Err(Error::DomainMismatch {
                expected,
                got: q.domain_label(),
            });
        }
        Ok(EnsembleSpec {
            kind,
            q,
            n,
            orthogonal_variant: false,
        })
    }

    pub fn orthogonal(mut self) -> Self {
        self.orthogonal_variant = true;
        self
    }

    /// Vandermonde power: 2, or 1 for the orthogonal variant.
    pub fn beta(&self) -> f64 {
        if self.orthogonal_variant {
            1.0
        } else {
            2.0
        }
    }

    /// Coefficient of `ΣQ` in the exponent: `n·β/2`.
    fn exponent_scale(&self) -> f64 {
        self.n as f64 * self.beta() / 2.0
    }

    /// Number of coordinates the chain actually moves.
    pub fn free_coordinates(&self) -> usize {
        match self.kind {
            EnsembleKind::SpecialUnitary => self.n - 1,
            _ => self.n,
        }
    }

    fn check_positions(&self, positions: &[f64]) -> Result<()> {
        if positions.len() != self.free_coordinates() {
            return Err(Error::InvalidParameter(format!(
                "expected {} coordinates, got {}",
                self.free_coordinates(),
                positions.len()
            )));
        }
        Ok(())
    }

    /// Full angle vector for a special unitary state: the free angles plus
    /// the determined one that keeps the angle sum at zero mod 2π.
    pub fn full_angles(&self, free: &[f64]) -> Vec<f64> {
        let mut th: Vec<f64> = free.to_vec();
        let sum: f64 = free.iter().sum();
        th.push(wrap_angle(-sum));
        th
    }
}

/// One Metropolis chain: coordinates, cached log density, and move
/// statistics.
#[derive(Debug, Clone)]
pub struct ChainState {
    positions: Vec<f64>,
    log_density: f64,
    step: f64,
    accepted: u64,
    proposed: u64,
    sweeps_done: u64,
}

impl ChainState {
    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn log_density(&self) -> f64 {
        self.log_density
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Chain summary reported next to the samples.
#[derive(Debug, Clone, Serialize)]
pub struct SampleDiagnostics {
    pub n: usize,
    pub sweeps: usize,
    pub burn_in: usize,
    pub acceptance_rate: f64,
    pub step: f64,
}

fn log_pair(beta: f64, d: f64) -> f64 {
    let a = d.abs();
    if a == 0.0 {
        f64::NEG_INFINITY
    } else {
        beta * a.ln()
    }
}

fn circle_gap(a: f64, b: f64) -> f64 {
    2.0 * (0.5 * (a - b)).sin()
}

/// Unnormalized log of the joint eigenvalue density.
///
/// Line kinds: `−(nβ/2) ΣQ(x_i) + β Σ_{i<j} ln|x_i − x_j|`, with a `−∞`
/// indicator outside the restricted or positive domain. The special
/// unitary case evaluates all `n` angles (the determined one included)
/// with chord gaps `|2 sin((θ_i−θ_j)/2)|`. Coincident coordinates give
/// `−∞`.
pub fn log_joint_density(spec: &EnsembleSpec, positions: &[f64]) -> Result<f64> {
    spec.check_positions(positions)?;
    let beta = spec.beta();
    let c = spec.exponent_scale();
    match spec.kind {
        EnsembleKind::SpecialUnitary => {
            let th = spec.full_angles(positions);
            let mut acc = 0.0;
            for &t in &th {
                acc -= c * spec.q.q(t);
            }
            for i in 0..th.len() {
                for j in i + 1..th.len() {
                    acc += log_pair(beta, circle_gap(th[i], th[j]));
                }
            }
            Ok(acc)
        }
        kind => {
            for &x in positions {
                let inside = match kind {
                    EnsembleKind::Restricted(r) => x.abs() <= r,
                    EnsembleKind::Positive => x >= 0.0,
                    _ => true,
                };
                if !inside {
                    return Ok(f64::NEG_INFINITY);
                }
            }
            let mut acc = 0.0;
            for &x in positions {
                acc -= c * spec.q.q(x);
            }
            for i in 0..positions.len() {
                for j in i + 1..positions.len() {
                    acc += log_pair(beta, positions[i] - positions[j]);
                }
            }
            Ok(acc)
        }
    }
}

/// Log-density change of replacing coordinate `k` by `new_x`, computed
/// from the O(n) terms that move.
fn delta_log(spec: &EnsembleSpec, positions: &[f64], k: usize, new_x: f64) -> f64 {
    let beta = spec.beta();
    let c = spec.exponent_scale();
    match spec.kind {
        EnsembleKind::SpecialUnitary => {
            let th = spec.full_angles(positions);
            let last = th.len() - 1;
            let old_k = th[k];
            let old_n = th[last];
            let new_n = wrap_angle(old_n - (new_x - old_k));
            let local = |tk: f64, tn: f64| -> f64 {
                let mut acc = -c * (spec.q.q(tk) + spec.q.q(tn));
                for (j, &tj) in th.iter().enumerate().take(last) {
                    if j == k {
                        continue;
                    }
                    acc += log_pair(beta, circle_gap(tk, tj));
                    acc += log_pair(beta, circle_gap(tn, tj));
                }
                acc + log_pair(beta, circle_gap(tk, tn))
            };
            local(new_x, new_n) - local(old_k, old_n)
        }
        _ => {
            let old_x = positions[k];
            let mut acc = -c * (spec.q.q(new_x) - spec.q.q(old_x));
            for (j, &xj) in positions.iter().enumerate() {
                if j == k {
                    continue;
                }
                acc += log_pair(beta, new_x - xj) - log_pair(beta, old_x - xj);
            }
            acc
        }
    }
}

/// Fold a proposal back into the allowed region by reflection (line
/// kinds) or wrapping (circle). Both maps keep the proposal symmetric.
fn constrain(spec: &EnsembleSpec, x: f64) -> f64 {
    match spec.kind {
        EnsembleKind::SelfAdjoint => x,
        EnsembleKind::Restricted(r) => {
            let w = 2.0 * r;
            let p = (x + r).rem_euclid(2.0 * w);
            let folded = if p <= w { p } else { 2.0 * w - p };
            folded - r
        }
        EnsembleKind::Positive => x.abs(),
        EnsembleKind::SpecialUnitary => wrap_angle(x),
    }
}

fn init_span(spec: &EnsembleSpec) -> (f64, f64) {
    let suggested = suggested_domain(&spec.q).map(|d| d.span());
    match spec.kind {
        EnsembleKind::SelfAdjoint => suggested.unwrap_or((-3.0, 3.0)),
        EnsembleKind::Restricted(r) => {
            let (a, b) = suggested.unwrap_or((-r, r));
            (a.max(-r), b.min(r))
        }
        EnsembleKind::Positive => {
            let (_, b) = suggested.unwrap_or((0.0, 6.0));
            (0.0, b)
        }
        EnsembleKind::SpecialUnitary => (-PI, PI),
    }
}

/// Deterministic spread start: coordinates at the mid-quantiles of the
/// uniform law on the initial span, plus a small jitter.
fn default_init(spec: &EnsembleSpec, rng: &mut ChaCha8Rng) -> Result<ChainState> {
    let m = spec.free_coordinates();
    let (a, b) = init_span(spec);
    let spread = b - a;
    let mut positions = Vec::with_capacity(m);
    for j in 0..spec.n {
        if positions.len() == m {
            break;
        }
        let x = a + spread * (j as f64 + 0.5) / spec.n as f64;
        let jitter: f64 = rng.sample::<f64, _>(StandardNormal) * 0.02 * spread / spec.n as f64;
        positions.push(constrain(spec, x + jitter));
    }
    let log_density = log_joint_density(spec, &positions)?;
    Ok(ChainState {
        positions,
        log_density,
        step: 0.5 * spread / spec.n as f64,
        accepted: 0,
        proposed: 0,
        sweeps_done: 0,
    })
}

/// Chain start at the target's mid-quantiles `(j − ½)/n`.
pub fn quantile_init(spec: &EnsembleSpec, target: &GridMeasure) -> Result<ChainState> {
    let circle_target = target.domain().is_circle();
    let circle_spec = spec.kind == EnsembleKind::SpecialUnitary;
    if circle_target != circle_spec {
        return Err(Error::DomainMismatch {
            expected: if circle_spec { "circle" } else { "line or halfline" },
            got: if circle_target { "circle" } else { "line" },
        });
    }
    let quantile = cdf_quantile(target);
    let m = spec.free_coordinates();
    let positions: Vec<f64> = (0..m)
        .map(|j| constrain(spec, quantile.value((j as f64 + 0.5) / spec.n as f64)))
        .collect();
    let log_density = log_joint_density(spec, &positions)?;
    let (a, b) = init_span(spec);
    Ok(ChainState {
        positions,
        log_density,
        step: 0.5 * (b - a) / spec.n as f64,
        accepted: 0,
        proposed: 0,
        sweeps_done: 0,
    })
}

fn sweep(spec: &EnsembleSpec, state: &mut ChainState, rng: &mut ChaCha8Rng) {
    for k in 0..state.positions.len() {
        let noise: f64 = rng.sample(StandardNormal);
        let proposal = constrain(spec, state.positions[k] + state.step * noise);
        let dlog = delta_log(spec, &state.positions, k, proposal);
        state.proposed += 1;
        if dlog >= 0.0 || rng.gen::<f64>() < dlog.exp() {
            state.positions[k] = proposal;
            state.log_density += dlog;
            state.accepted += 1;
        }
    }
    state.sweeps_done += 1;
}

/// Refresh the cached log density from scratch; incremental updates drift
/// by rounding over long runs.
fn refresh_cache(spec: &EnsembleSpec, state: &mut ChainState) -> Result<()> {
    let fresh = log_joint_density(spec, &state.positions)?;
    debug_assert!(
        !fresh.is_finite()
            || (state.log_density - fresh).abs() <= 1e-6 * (1.0 + fresh.abs()),
        "incremental log density drifted: cached {} vs fresh {fresh}",
        state.log_density
    );
    state.log_density = fresh;
    Ok(())
}

fn state_measure(spec: &EnsembleSpec, state: &ChainState) -> Result<EmpiricalMeasure> {
    match spec.kind {
        EnsembleKind::SpecialUnitary => {
            EmpiricalMeasure::new_circle(spec.full_angles(&state.positions))
        }
        _ => EmpiricalMeasure::new_line(state.positions.clone()),
    }
}

const TUNE_LOW: f64 = 0.2;
const TUNE_HIGH: f64 = 0.5;
const STALL_SWEEPS: u64 = 50;

fn run_chain(
    spec: &EnsembleSpec,
    sweeps: usize,
    burn_in: usize,
    rng: &mut ChaCha8Rng,
    init: Option<&ChainState>,
) -> Result<(Vec<EmpiricalMeasure>, SampleDiagnostics)> {
    let mut state = match init {
        Some(s) => s.clone(),
        None => default_init(spec, rng)?,
    };
    let (a, b) = init_span(spec);
    let max_step = b - a;
    for s in 0..burn_in {
        let before = (state.accepted, state.proposed);
        sweep(spec, &mut state, rng);
        // Step adaptation runs during burn-in only; afterwards the kernel
        // is frozen so detailed balance holds exactly.
        let acc = state.accepted - before.0;
        let prop = state.proposed - before.1;
        if prop > 0 {
            let rate = acc as f64 / prop as f64;
            if rate < TUNE_LOW {
                state.step *= 0.8;
            } else if rate > TUNE_HIGH {
                state.step *= 1.25;
            }
            state.step = state.step.clamp(1e-8 * max_step, max_step);
        }
        if s % 64 == 63 {
            refresh_cache(spec, &mut state)?;
        }
    }
    state.accepted = 0;
    state.proposed = 0;
    let mut out = Vec::with_capacity(sweeps);
    let mut dry_sweeps = 0u64;
    for s in 0..sweeps {
        let before = state.accepted;
        sweep(spec, &mut state, rng);
        if state.accepted == before {
            dry_sweeps += 1;
            if dry_sweeps >= STALL_SWEEPS {
                return Err(Error::SamplerStall(format!(
                    "no accepted move in {STALL_SWEEPS} consecutive sweeps at step {}",
                    state.step
                )));
            }
        } else {
            dry_sweeps = 0;
        }
        if s % 64 == 63 {
            refresh_cache(spec, &mut state)?;
        }
        out.push(state_measure(spec, &state)?);
    }
    let diagnostics = SampleDiagnostics {
        n: spec.n,
        sweeps,
        burn_in,
        acceptance_rate: state.acceptance_rate(),
        step: state.step,
    };
    Ok((out, diagnostics))
}

/// Metropolis samples of the joint eigenvalue law: one empirical measure
/// per post-burn-in sweep. Deterministic under a fixed seed.
pub fn sample(
    spec: &EnsembleSpec,
    sweeps: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Vec<EmpiricalMeasure>> {
    Ok(sample_with_diagnostics(spec, sweeps, burn_in, seed)?.0)
}

/// As [`sample`], also returning acceptance statistics.
pub fn sample_with_diagnostics(
    spec: &EnsembleSpec,
    sweeps: usize,
    burn_in: usize,
    seed: u64,
) -> Result<(Vec<EmpiricalMeasure>, SampleDiagnostics)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_chain(spec, sweeps, burn_in, &mut rng, None)
}

/// Independent parallel chains with per-chain rng streams split off one
/// master seed; results come back in chain order.
pub fn sample_chains(
    spec: &EnsembleSpec,
    chains: usize,
    sweeps: usize,
    burn_in: usize,
    master_seed: u64,
) -> Result<Vec<(Vec<EmpiricalMeasure>, SampleDiagnostics)>> {
    (0..chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
            rng.set_stream(c as u64 + 1);
            run_chain(spec, sweeps, burn_in, &mut rng, None)
        })
        .collect()
}

/// Direct sampler for the quadratic ensemble `Q(x) = ρx²/2`: a dense
/// Hermitian Gaussian matrix with entry variances matched so its
/// eigenvalue law equals the Metropolis target; eigenvalues come back
/// sorted.
pub fn gue_direct(n: usize, rho: f64, seed: u64) -> Result<EmpiricalMeasure> {
    if n == 0 {
        return Err(Error::InvalidParameter("empty matrix".into()));
    }
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "quadratic coefficient must be positive, got {rho}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma_diag = 1.0 / (n as f64 * rho).sqrt();
    let sigma_off = 1.0 / (2.0 * n as f64 * rho).sqrt();
    let mut a = CMat::zeros(n, n);
    for i in 0..n {
        let g: f64 = rng.sample(StandardNormal);
        a[(i, i)] = Complex64::new(sigma_diag * g, 0.0);
        for j in i + 1..n {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            a[(i, j)] = Complex64::new(sigma_off * re, sigma_off * im);
            a[(j, i)] = a[(i, j)].conj();
        }
    }
    EmpiricalMeasure::new_line(hermitian_eigenvalues(&a)?)
}

/// Histogram average of empirical measures on the requested grid.
pub fn mean_eigenvalue_distribution(
    samples: &[EmpiricalMeasure],
    domain: Domain,
    cells: usize,
) -> Result<GridMeasure> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("no samples to average".into()));
    }
    let mut pooled = Vec::new();
    for s in samples {
        pooled.extend_from_slice(s.atoms());
    }
    let pooled = if domain.is_circle() {
        EmpiricalMeasure::new_circle(pooled)?
    } else {
        EmpiricalMeasure::new_line(pooled)?
    };
    pooled.to_grid(domain, cells)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn normalizer_integrand(spec: &EnsembleSpec, point: &[f64]) -> f64 {
    let beta = spec.beta();
    let c = spec.exponent_scale();
    match spec.kind {
        EnsembleKind::SpecialUnitary => {
            let th = spec.full_angles(point);
            let mut logw = 0.0;
            for &t in &th {
                logw -= c * spec.q.q(t);
            }
            let mut v = 1.0f64;
            for i in 0..th.len() {
                for j in i + 1..th.len() {
                    v *= circle_gap(th[i], th[j]).abs().powf(beta);
                }
            }
            v * logw.exp()
        }
        _ => {
            let mut logw = 0.0;
            for &x in point {
                logw -= c * spec.q.q(x);
            }
            let mut v = 1.0f64;
            for i in 0..point.len() {
                for j in i + 1..point.len() {
                    v *= (point[i] - point[j]).abs().powf(beta);
                }
            }
            v * logw.exp()
        }
    }
}

/// Mean of `(1/n)Σf(x_i)` over the full coordinate vector, including the
/// determined special unitary angle.
fn point_average(spec: &EnsembleSpec, point: &[f64], f: &dyn Fn(f64) -> f64) -> f64 {
    match spec.kind {
        EnsembleKind::SpecialUnitary => {
            let th = spec.full_angles(point);
            th.iter().map(|&t| f(t)).sum::<f64>() / th.len() as f64
        }
        _ => point.iter().map(|&x| f(x)).sum::<f64>() / point.len() as f64,
    }
}

/// `(∫ weight, ∫ (1/n)Σf(x_i) · weight)` by tensor Gauss–Legendre on a box.
fn tensor_gl(
    spec: &EnsembleSpec,
    lo: f64,
    hi: f64,
    m: usize,
    f: Option<&dyn Fn(f64) -> f64>,
) -> (f64, f64) {
    let (nodes, weights) = crate::quad::gauss_legendre(m);
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let xs: Vec<f64> = nodes.iter().map(|&t| mid + half * t).collect();
    let ws: Vec<f64> = weights.iter().map(|&w| w * half).collect();
    let d = spec.n;
    let mut total = 0.0;
    let mut num = 0.0;
    let mut idx = vec![0usize; d];
    let mut point = vec![0.0f64; d];
    loop {
        let mut w = 1.0;
        for (dim, &i) in idx.iter().enumerate() {
            point[dim] = xs[i];
            w *= ws[i];
        }
        let g = w * normalizer_integrand(spec, &point);
        total += g;
        if let Some(f) = f {
            num += g * point_average(spec, &point, f);
        }
        let mut dim = 0;
        loop {
            idx[dim] += 1;
            if idx[dim] < m {
                break;
            }
            idx[dim] = 0;
            dim += 1;
            if dim == d {
                return (total, num);
            }
        }
    }
}

/// As [`tensor_gl`] on the torus: periodic trapezoid over the free angles
/// against `∏ dθ/2π`, divided by `n!`.
fn tensor_torus(spec: &EnsembleSpec, m: usize, f: Option<&dyn Fn(f64) -> f64>) -> (f64, f64) {
    // Trapezoid on the periodic torus is spectrally accurate; the measure
    // per free angle is dθ/2π.
    let d = spec.n - 1;
    let xs: Vec<f64> = (0..m).map(|k| -PI + 2.0 * PI * k as f64 / m as f64).collect();
    let mut total = 0.0;
    let mut num = 0.0;
    let mut idx = vec![0usize; d];
    let mut point = vec![0.0f64; d];
    loop {
        for (dim, &i) in idx.iter().enumerate() {
            point[dim] = xs[i];
        }
        let g = normalizer_integrand(spec, &point);
        total += g;
        if let Some(f) = f {
            num += g * point_average(spec, &point, f);
        }
        let mut dim = 0;
        loop {
            idx[dim] += 1;
            if idx[dim] < m {
                break;
            }
            idx[dim] = 0;
            dim += 1;
            if dim == d {
                let scale = (m as f64).powi(d as i32) * factorial(spec.n);
                return (total / scale, num / scale);
            }
        }
    }
}

/// Brute-force log normalizer of the joint density at `n ∈ {2, 3}`.
///
/// Line kinds integrate `∏|Δ|^β exp(−(nβ/2)ΣQ)` over the domain power by
/// tensor Gauss–Legendre quadrature with node doubling to relative
/// accuracy 1e-6 (the unbounded directions get a widening box whose
/// truncation must also settle to 1e-6). The special unitary case uses
/// the periodic trapezoid rule over `𝕋^{n−1}` against `∏ dθ/2π` and
/// divides by `n!`, so a zero potential integrates to exactly one, the
/// mass of the underlying probability law.
pub fn brute_normalizer(spec: &EnsembleSpec) -> Result<f64> {
    let (z, _) = brute_integrals(spec, None)?;
    if z <= 0.0 {
        return Err(Error::Numerical("normalizer is not positive".into()));
    }
    Ok(z.ln())
}

/// Ensemble average `E[(1/n)Σf(x_i)]` under the normalized joint law at
/// `n ∈ {2, 3}`, by the same quadrature routes as [`brute_normalizer`].
pub fn brute_ensemble_average(spec: &EnsembleSpec, f: &dyn Fn(f64) -> f64) -> Result<f64> {
    let (z, num) = brute_integrals(spec, Some(f))?;
    if z <= 0.0 {
        return Err(Error::Numerical("normalizer is not positive".into()));
    }
    Ok(num / z)
}

fn brute_integrals(
    spec: &EnsembleSpec,
    f: Option<&dyn Fn(f64) -> f64>,
) -> Result<(f64, f64)> {
    if spec.n > 3 {
        return Err(Error::Unsupported(format!(
            "brute-force normalizers are capped at 3×3, got {}",
            spec.n
        )));
    }
    let tol = 1e-6;
    // Scale-aware settling of both the mass and the f-moment; the moment
    // change is measured against the mass so a near-zero moment does not
    // demand impossible relative accuracy.
    let settled = |prev: (f64, f64), next: (f64, f64)| -> bool {
        (next.0 - prev.0).abs() <= tol * next.0.abs()
            && (next.1 - prev.1).abs() <= tol * (next.1.abs() + next.0.abs())
    };
    if spec.kind == EnsembleKind::SpecialUnitary {
        let mut m = 64;
        let mut prev = tensor_torus(spec, m, f);
        loop {
            m *= 2;
            let next = tensor_torus(spec, m, f);
            if settled(prev, next) {
                return Ok(next);
            }
            if m >= 2048 {
                return Err(Error::NoConvergence {
                    iterations: m,
                    residual: (next.0 - prev.0).abs() / next.0.abs(),
                });
            }
            prev = next;
        }
    }
    let converge_box = |lo: f64, hi: f64| -> Result<(f64, f64)> {
        let mut m = 32;
        let mut prev = tensor_gl(spec, lo, hi, m, f);
        loop {
            m *= 2;
            let next = tensor_gl(spec, lo, hi, m, f);
            if settled(prev, next) {
                return Ok(next);
            }
            if m >= 512 {
                return Err(Error::NoConvergence {
                    iterations: m,
                    residual: (next.0 - prev.0).abs() / next.0.abs(),
                });
            }
            prev = next;
        }
    };
    let (mut lo, mut hi) = init_span(spec);
    if let EnsembleKind::Restricted(r) = spec.kind {
        // The indicator is the box; no widening.
        return converge_box(-r, r);
    }
    let mut value = converge_box(lo, hi)?;
    for _ in 0..4 {
        let w = hi - lo;
        let (nlo, nhi) = match spec.kind {
            EnsembleKind::Positive => (0.0, hi + 0.5 * w),
            _ => (lo - 0.5 * w, hi + 0.5 * w),
        };
        let wider = converge_box(nlo, nhi)?;
        let done = settled(value, wider);
        lo = nlo;
        hi = nhi;
        value = wider;
        if done {
            return Ok(value);
        }
    }
    Err(Error::NoConvergence {
        iterations: 4,
        residual: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{make_nu_lambda, make_quarter_circle, make_semicircle, make_uniform};
    use crate::potential::Potential;
    use crate::transport::{
        wasserstein_r_mixed, wasserstein_r_points, wasserstein_t_geodesic_mixed,
    };
    use approx::assert_abs_diff_eq;

    fn quadratic() -> Potential {
        Potential::quadratic_line(1.0).unwrap()
    }

    fn zero_line() -> Potential {
        Potential::zero("line")
    }

    #[test]
    fn log_density_closed_cases() {
        // Two eigenvalues at 0 and 1 under Q = x²/2.
        let spec = EnsembleSpec::new(EnsembleKind::SelfAdjoint, quadratic(), 2).unwrap();
        let v = log_joint_density(&spec, &[0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(v, -1.0, epsilon = 1e-14);

        // Coincident points kill the Vandermonde.
        let v = log_joint_density(&spec, &[0.7, 0.7]).unwrap();
        assert!(v == f64::NEG_INFINITY);

        // Outside the restricted radius the indicator clamps.
        let spec = EnsembleSpec::new(EnsembleKind::Restricted(1.0), zero_line(), 2).unwrap();
        assert!(log_joint_density(&spec, &[0.2, 1.4]).unwrap() == f64::NEG_INFINITY);
        assert!(log_joint_density(&spec, &[0.2, 0.9]).unwrap().is_finite());

        // Free special unitary angles determine the last one; at n = 2 the
        // log density is log(4 sin²θ) plus the potential terms.
        let spec =
            EnsembleSpec::new(EnsembleKind::SpecialUnitary, Potential::zero("circle"), 2)
                .unwrap();
        for theta in [0.3, 1.2, -2.0] {
            let v = log_joint_density(&spec, &[theta]).unwrap();
            let gap = 2.0 * theta.sin();
            assert_abs_diff_eq!(v, (gap * gap).ln(), epsilon = 1e-12);
        }

        // The orthogonal variant halves the zero-potential log density.
        let spec = EnsembleSpec::new(EnsembleKind::SelfAdjoint, zero_line(), 3).unwrap();
        let full = log_joint_density(&spec, &[0.1, 0.5, 2.0]).unwrap();
        let half = log_joint_density(&spec.clone().orthogonal(), &[0.1, 0.5, 2.0]).unwrap();
        assert_abs_diff_eq!(half, 0.5 * full, epsilon = 1e-12);
    }

    #[test]
    fn incremental_delta_matches_full_recompute() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let specs = vec![
            EnsembleSpec::new(EnsembleKind::SelfAdjoint, quadratic(), 6).unwrap(),
            EnsembleSpec::new(EnsembleKind::Restricted(2.0), zero_line(), 5).unwrap(),
            EnsembleSpec::new(EnsembleKind::Positive, Potential::linear_halfline(1.0).unwrap(), 5)
                .unwrap(),
            EnsembleSpec::new(EnsembleKind::SpecialUnitary, Potential::cosine_circle(4.0).unwrap(), 6)
                .unwrap(),
        ];
        for spec in &specs {
            for _ in 0..40 {
                let m = spec.free_coordinates();
                let positions: Vec<f64> = (0..m)
                    .map(|_| constrain(spec, 3.0 * (rng.gen::<f64>() - 0.5)))
                    .collect();
                let k = rng.gen_range(0..m);
                let new_x = constrain(spec, positions[k] + 0.3 * (rng.gen::<f64>() - 0.5));
                let before = log_joint_density(spec, &positions).unwrap();
                let mut moved = positions.clone();
                moved[k] = new_x;
                let after = log_joint_density(spec, &moved).unwrap();
                let delta = delta_log(spec, &positions, k, new_x);
                if before.is_finite() && after.is_finite() {
                    assert!(
                        (delta - (after - before)).abs() <= 1e-9 * (1.0 + after.abs()),
                        "delta {delta} vs {}",
                        after - before
                    );
                }
            }
        }
    }

    #[test]
    fn acceptance_ratio_balances_density() {
        // min(1, d_y/d_x)·d_x = min(1, d_x/d_y)·d_y, in logs.
        let spec = EnsembleSpec::new(EnsembleKind::SelfAdjoint, quadratic(), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| 2.0 * (rng.gen::<f64>() - 0.5)).collect();
            let y: Vec<f64> = (0..4).map(|_| 2.0 * (rng.gen::<f64>() - 0.5)).collect();
            let lx = log_joint_density(&spec, &x).unwrap();
            let ly = log_joint_density(&spec, &y).unwrap();
            let lhs = (ly - lx).min(0.0) + lx;
            let rhs = (lx - ly).min(0.0) + ly;
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
        }
    }

    #[test]
    fn quantile_init_examples() {
        let target = make_semicircle(2.0, 2048).unwrap();
        let spec = EnsembleSpec::new(EnsembleKind::SelfAdjoint, quadratic(), 4).unwrap();
        let state = quantile_init(&spec, &target).unwrap();
        let q = cdf_quantile(&target);
        for (j, &x) in state.positions().iter().enumerate() {
            assert_abs_diff_eq!(x, q.value((j as f64 + 0.5) / 4.0), epsilon = 1e-12);
        }

        // Uniform circle target: the three free angles plus the determined
        // one come out equispaced.
        let target = make_uniform(Domain::Circle, 256).unwrap();
        let spec =
            EnsembleSpec::new(EnsembleKind::SpecialUnitary, Potential::zero("circle"), 4)
                .unwrap();
        let state = quantile_init(&spec, &target).unwrap();
        let th = spec.full_angles(state.positions());
        for (j, &t) in th.iter().enumerate() {
            let want = -PI + 2.0 * PI * (j as f64 + 0.5) / 4.0;
            assert_abs_diff_eq!(wrap_angle(t - want), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn su_constraint_holds_every_sample() {
        let spec =
            EnsembleSpec::new(EnsembleKind::SpecialUnitary, Potential::cosine_circle(4.0).unwrap(), 5)
                .unwrap();
        let samples = sample(&spec, 120, 150, 11).unwrap();
        assert_eq!(samples.len(), 120);
        for s in &samples {
            assert_eq!(s.len(), 5);
            let sum: f64 = s.atoms().iter().sum();
            assert!(
                wrap_angle(sum).abs() <= 1e-10,
                "determinant constraint broken: angle sum {sum}"
            );
        }
    }

    #[test]
    fn gue_direct_matches_semicircle() {
        let draw = gue_direct(500, 1.0, 101).unwrap();
        let target = make_semicircle(2.0, 2048).unwrap();
        let w = wasserstein_r_mixed(&draw, &target).unwrap();
        assert!(w <= 0.04, "single draw W = {w}");

        // Q = 2x² shrinks the support radius to 1.
        let draw = gue_direct(400, 4.0, 7).unwrap();
        let extreme = draw
            .atoms()
            .iter()
            .fold(0.0f64, |m, &x| m.max(x.abs()));
        assert!(extreme < 1.2, "support {extreme} too wide for rho=4");
        assert!(extreme > 0.85, "support {extreme} too narrow for rho=4");

        // Mean squared eigenvalue ≈ second moment 1/ρ.
        for rho in [1.0, 4.0] {
            let mut acc = 0.0;
            let draws = 10;
            for k in 0..draws {
                let d = gue_direct(200, rho, 300 + k).unwrap();
                acc += d.atoms().iter().map(|x| x * x).sum::<f64>() / 200.0;
            }
            let mean = acc / draws as f64;
            assert!(
                (mean - 1.0 / rho).abs() < 0.02 / rho,
                "rho={rho}: tr A²/n = {mean}"
            );
        }
    }

    #[test]
    fn metropolis_reaches_the_quadratic_equilibrium() {
        let spec = EnsembleSpec::new(EnsembleKind::SelfAdjoint, quadratic(), 200).unwrap();
        let (samples, diag) = sample_with_diagnostics(&spec, 400, 600, 21).unwrap();
        assert!(
            diag.acceptance_rate > 0.1 && diag.acceptance_rate < 0.7,
            "acceptance {}",
            diag.acceptance_rate
        );
        let mut pooled = Vec::new();
        for s in samples.iter().step_by(4) {
            pooled.extend_from_slice(s.atoms());
        }
        let pooled = EmpiricalMeasure::new_line(pooled).unwrap();
        let target = make_semicircle(2.0, 2048).unwrap();
        let w = wasserstein_r_mixed(&pooled, &target).unwrap();
        assert!(w <= 0.05, "W to the semicircle = {w}");
    }

    #[test]
    fn metropolis_agrees_with_direct_gaussian_sampler() {
        let n = 100;
        let spec = EnsembleSpec::new(EnsembleKind::SelfAdjoint, quadratic(), n).unwrap();
        let (samples, _) = sample_with_diagnostics(&spec, 600, 500, 33).unwrap();
        let mut mc = Vec::new();
        for s in samples.iter().step_by(3) {
            mc.extend_from_slice(s.atoms());
        }
        let mc = EmpiricalMeasure::new_line(mc).unwrap();
        let mut direct = Vec::new();
        for k in 0..40 {
            direct.extend_from_slice(gue_direct(n, 1.0, 500 + k).unwrap().atoms());
        }
        let direct = EmpiricalMeasure::new_line(direct).unwrap();
        let w = wasserstein_r_points(&mc, &direct).unwrap();
        assert!(w <= 0.03, "Metropolis vs direct W = {w}");
    }

    #[test]
    fn su2_eigenangles_follow_the_sine_square_law() {
        let spec =
            EnsembleSpec::new(EnsembleKind::SpecialUnitary, Potential::zero("circle"), 2)
                .unwrap();
        let samples = sample(&spec, 100_000, 500, 55).unwrap();
        let mut angles: Vec<f64> = samples.iter().flat_map(|s| s.atoms().to_vec()).collect();
        angles.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        // CDF of sin²θ/π on [−π, π).
        let cdf = |t: f64| (t + PI) / (2.0 * PI) - (2.0 * t).sin() / (4.0 * PI);
        let n = angles.len() as f64;
        let mut ks = 0.0f64;
        for (i, &t) in angles.iter().enumerate() {
            let f = cdf(t);
            ks = ks.max((f - i as f64 / n).abs());
            ks = ks.max((f - (i + 1) as f64 / n).abs());
        }
        assert!(ks <= 0.02, "KS statistic {ks}");
    }

    #[test]
    fn su_cosine_potential_reaches_its_equilibrium() {
        let spec =
            EnsembleSpec::new(EnsembleKind::SpecialUnitary, Potential::cosine_circle(8.0).unwrap(), 64)
                .unwrap();
        let samples = sample(&spec, 1500, 800, 71).unwrap();
        let mut pooled = Vec::new();
        for s in samples.iter().step_by(5) {
            pooled.extend_from_slice(s.atoms());
        }
        let pooled = EmpiricalMeasure::new_circle(pooled).unwrap();
        let target = make_nu_lambda(8.0, 512).unwrap();
        let w = wasserstein_t_geodesic_mixed(&pooled, &target).unwrap();
        assert!(w <= 0.06, "W to the cosine equilibrium = {w}");
    }

    #[test]
    fn positive_ensemble_stays_positive_and_reaches_quarter_circle() {
        let spec =
            EnsembleSpec::new(EnsembleKind::Positive, Potential::linear_halfline(1.0).unwrap(), 60)
                .unwrap();
        let samples = sample(&spec, 800, 600, 17).unwrap();
        let mut pooled = Vec::new();
        for s in &samples {
            assert!(s.atoms().iter().all(|&x| x >= 0.0));
        }
        for s in samples.iter().step_by(4) {
            pooled.extend_from_slice(s.atoms());
        }
        let pooled = EmpiricalMeasure::new_line(pooled).unwrap();
        let target = make_quarter_circle(1.0, 1024).unwrap();
        let w = wasserstein_r_mixed(&pooled, &target).unwrap();
        assert!(w <= 0.06, "W to the quarter circle = {w}");
    }

    #[test]
    fn restricted_ensemble_reaches_the_solver_equilibrium() {
        use crate::equilibrium::solve_equilibrium;
        let spec = EnsembleSpec::new(EnsembleKind::Restricted(1.0), zero_line(), 80).unwrap();
        let samples = sample(&spec, 800, 600, 13).unwrap();
        let mut pooled = Vec::new();
        for s in samples.iter().step_by(4) {
            assert!(s.atoms().iter().all(|&x| x.abs() <= 1.0));
            pooled.extend_from_slice(s.atoms());
        }
        let pooled = EmpiricalMeasure::new_line(pooled).unwrap();
        let eq = solve_equilibrium(&zero_line(), Domain::Line { a: -1.0, b: 1.0 }, 512)
            .unwrap();
        let w = wasserstein_r_mixed(&pooled, &eq.mu_q).unwrap();
        assert!(w <= 0.05, "W to the restricted equilibrium = {w}");
    }

    #[test]
    fn parallel_chains_are_deterministic_and_ordered() {
        let spec = EnsembleSpec::new(EnsembleKind::SelfAdjoint, quadratic(), 12).unwrap();
        let a = sample_chains(&spec, 3, 40, 60, 99).unwrap();
        let b = sample_chains(&spec, 3, 40, 60, 99).unwrap();
        assert_eq!(a.len(), 3);
        for (ca, cb) in a.iter().zip(&b) {
            for (ma, mb) in ca.0.iter().zip(&cb.0) {
                assert_eq!(ma.atoms(), mb.atoms());
            }
        }
        // Different chains explore differently.
        assert_ne!(a[0].0[0].atoms(), a[1].0[0].atoms());
    }

    #[test]
    fn normalizer_closed_forms() {
        // ∫∫ e^{−(x²+y²)} (x−y)² dx dy = π.
        let spec = EnsembleSpec::new(EnsembleKind::SelfAdjoint, quadratic(), 2).unwrap();
        let z = brute_normalizer(&spec).unwrap();
        assert_abs_diff_eq!(z, std::f64::consts::PI.ln(), epsilon = 2e-6);

        // Zero potential in radius 1: ∫∫_{[−1,1]²} (x−y)² = 8/3.
        let spec = EnsembleSpec::new(EnsembleKind::Restricted(1.0), zero_line(), 2).unwrap();
        let z = brute_normalizer(&spec).unwrap();
        assert_abs_diff_eq!(z, (8.0f64 / 3.0).ln(), epsilon = 2e-6);

        // The special unitary law is normalized: zero potential has unit
        // mass at n = 2 and n = 3.
        for n in [2usize, 3] {
            let spec =
                EnsembleSpec::new(EnsembleKind::SpecialUnitary, Potential::zero("circle"), n)
                    .unwrap();
            let z = brute_normalizer(&spec).unwrap();
            assert_abs_diff_eq!(z, 0.0, epsilon = 2e-6);
        }

        let spec = EnsembleSpec::new(EnsembleKind::SelfAdjoint, quadratic(), 4);
        assert!(matches!(
            brute_normalizer(&spec.unwrap()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn ensemble_averages_match_closed_moments() {
        // n = 2 with Q = x²/2: density ∝ e^{−(x²+y²)}(x−y)², and Gaussian
        // moments give E[(x²+y²)/2] = 1 exactly.
        let spec = EnsembleSpec::new(EnsembleKind::SelfAdjoint, quadratic(), 2).unwrap();
        let m2 = brute_ensemble_average(&spec, &|x| x * x).unwrap();
        assert_abs_diff_eq!(m2, 1.0, epsilon = 1e-5);

        // SU(2) with zero potential: marginal sin²θ/π gives E[cos 2θ] = −½.
        let spec =
            EnsembleSpec::new(EnsembleKind::SpecialUnitary, Potential::zero("circle"), 2)
                .unwrap();
        let c2 = brute_ensemble_average(&spec, &|t| (2.0 * t).cos()).unwrap();
        assert_abs_diff_eq!(c2, -0.5, epsilon = 1e-6);
    }

    #[test]
    fn normalizer_matches_monte_carlo() {
        // Monte-Carlo oracle over the same kind of box for n = 3.
        let spec = EnsembleSpec::new(EnsembleKind::SelfAdjoint, quadratic(), 3).unwrap();
        let z = brute_normalizer(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let (lo, hi) = (-6.0f64, 6.0f64);
        let vol = (hi - lo).powi(3);
        let m = 400_000;
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for _ in 0..m {
            let p = [
                lo + (hi - lo) * rng.gen::<f64>(),
                lo + (hi - lo) * rng.gen::<f64>(),
                lo + (hi - lo) * rng.gen::<f64>(),
            ];
            let f = normalizer_integrand(&spec, &p);
            acc += f;
            acc2 += f * f;
        }
        let mean = acc / m as f64;
        let var = (acc2 / m as f64 - mean * mean).max(0.0);
        let se = (var / m as f64).sqrt() * vol;
        let mc = mean * vol;
        assert!(
            (z.exp() - mc).abs() <= 3.0 * se + 1e-9,
            "quadrature {} vs MC {mc} ± {se}",
            z.exp()
        );
    }

    #[test]
    fn mean_distribution_averages_histograms() {
        let a = EmpiricalMeasure::new_line(vec![-0.6, 0.6]).unwrap();
        let b = EmpiricalMeasure::new_line(vec![-0.3, 0.3]).unwrap();
        let g = mean_eigenvalue_distribution(&[a, b], Domain::Line { a: -1.0, b: 1.0 }, 8)
            .unwrap();
        // All four atoms land symmetrically; the histogram is even.
        let d = g.density();
        for i in 0..4 {
            assert_abs_diff_eq!(d[i], d[7 - i], epsilon = 1e-12);
        }
        let mass: f64 = g.masses().iter().sum();
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-12);
    }
}
