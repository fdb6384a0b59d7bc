//! Quadratic Wasserstein distances in the `½d²` convention on the line and
//! the circle, the optimal matching distance on circle configurations, an
//! exact discrete transport LP, and eigenvalue-contraction checks.
//!
//! Line distances use the monotone quantile coupling, which is optimal for
//! convex costs in one dimension; the LP oracle re-verifies that on every
//! test corpus. Circle distances with the geodesic metric minimize the
//! quantile-coupling cost over the monotone shift parameter of the lifted
//! quantiles; the chord metric is not convex in the angle, so that one goes
//! through the LP.

use crate::matrixfn::{eigenangles, geodesic_distance_su, hermitian_eigenvalues, CMat};
use crate::measure::{
    cdf_quantile, wrap_angle, EmpiricalMeasure, GridMeasure, QuantileTable, Topology,
};
use crate::{Error, Result};
use std::f64::consts::PI;

/// A transport plan together with its cost `∫ ½d² dπ`.
#[derive(Debug, Clone)]
pub enum CouplingPlan {
    /// Point-to-point shipments `(x, y, mass)`.
    Discrete { pairs: Vec<(f64, f64, f64)>, cost: f64 },
    /// Monotone quantile map; on the circle, `shift` is the mass offset of
    /// the lifted quantiles (0 on the line).
    Monotone { shift: f64, cost: f64 },
}

impl CouplingPlan {
    pub fn cost(&self) -> f64 {
        match self {
            CouplingPlan::Discrete { cost, .. } => *cost,
            CouplingPlan::Monotone { cost, .. } => *cost,
        }
    }
}

fn seg_eval(seg: (f64, f64, f64, f64), t: f64) -> f64 {
    let (t0, t1, x0, x1) = seg;
    x0 + (x1 - x0) * ((t - t0) / (t1 - t0))
}

/// `∫₀¹ ½(Q_a(t) − Q_b(t))² dt` for piecewise-linear quantiles, exactly.
///
/// On each interval between merged breakpoints both quantiles are linear,
/// so the squared difference integrates in closed form.
fn quantile_cost(a: &QuantileTable, b: &QuantileTable) -> f64 {
    let sa = a.segments();
    let sb = b.segments();
    let mut ts: Vec<f64> = Vec::with_capacity(2 * (sa.len() + sb.len()));
    for s in sa.iter().chain(sb.iter()) {
        ts.push(s.0);
        ts.push(s.1);
    }
    ts.sort_unstable_by(|x, y| x.partial_cmp(y).unwrap());
    ts.dedup();
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut acc = 0.0;
    for w in ts.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        if t1 <= t0 {
            continue;
        }
        let tm = 0.5 * (t0 + t1);
        while ia + 1 < sa.len() && sa[ia].1 <= tm {
            ia += 1;
        }
        while ib + 1 < sb.len() && sb[ib].1 <= tm {
            ib += 1;
        }
        let u0 = seg_eval(sa[ia], t0) - seg_eval(sb[ib], t0);
        let u1 = seg_eval(sa[ia], t1) - seg_eval(sb[ib], t1);
        // ∫ of the squared linear interpolant between u0 and u1.
        acc += (t1 - t0) * (u0 * u0 + u0 * u1 + u1 * u1) / 3.0;
    }
    0.5 * acc
}

/// `W(μ,ν) = √(∫₀¹ ½(F_μ⁻¹ − F_ν⁻¹)² dt)` from quantile tables.
pub fn wasserstein_r(mu: &QuantileTable, nu: &QuantileTable) -> f64 {
    quantile_cost(mu, nu).sqrt()
}

fn require_line(mu: &GridMeasure) -> Result<()> {
    if mu.domain().is_circle() {
        return Err(Error::DomainMismatch {
            expected: "line or halfline",
            got: "circle",
        });
    }
    Ok(())
}

/// Line Wasserstein distance between two grid measures.
pub fn wasserstein_r_grids(mu: &GridMeasure, nu: &GridMeasure) -> Result<f64> {
    require_line(mu)?;
    require_line(nu)?;
    Ok(wasserstein_r(&cdf_quantile(mu), &cdf_quantile(nu)))
}

/// Line Wasserstein distance between two empirical measures.
pub fn wasserstein_r_points(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    if a.topology() != Topology::Line || b.topology() != Topology::Line {
        return Err(Error::DomainMismatch {
            expected: "line atoms",
            got: "circle",
        });
    }
    Ok(wasserstein_r(
        &QuantileTable::from_empirical(a),
        &QuantileTable::from_empirical(b),
    ))
}

/// Line Wasserstein distance between an empirical and a grid measure.
pub fn wasserstein_r_mixed(a: &EmpiricalMeasure, nu: &GridMeasure) -> Result<f64> {
    if a.topology() != Topology::Line {
        return Err(Error::DomainMismatch {
            expected: "line atoms",
            got: "circle",
        });
    }
    require_line(nu)?;
    Ok(wasserstein_r(
        &QuantileTable::from_empirical(a),
        &cdf_quantile(nu),
    ))
}

/// Quantile table of a circle grid measure, anchored at `−π`.
pub fn circle_quantile_grid(mu: &GridMeasure) -> Result<QuantileTable> {
    if !mu.domain().is_circle() {
        return Err(Error::DomainMismatch {
            expected: "circle",
            got: "line",
        });
    }
    Ok(cdf_quantile(mu))
}

/// Quantile table of circle atoms, anchored at `−π`.
pub fn circle_quantile_points(e: &EmpiricalMeasure) -> Result<QuantileTable> {
    if e.topology() != Topology::Circle {
        return Err(Error::DomainMismatch {
            expected: "circle atoms",
            got: "line",
        });
    }
    Ok(QuantileTable::from_empirical(e))
}

/// Table of `t ↦ Q̃(t − α)` on `[0, 1]`, where `Q̃` is the lift of a circle
/// quantile: `Q̃(s + k) = Q(s) + 2πk`.
///
/// Two consecutive periods of the lift always cover the shifted window, so
/// the table is an exact trim of that vertex list. Trimming segment by
/// segment keeps every jump pair intact; rounding can move a jump by one
/// ulp but never drop one side of it.
fn lifted_shifted(q: &QuantileTable, alpha: f64) -> QuantileTable {
    let two_pi = 2.0 * PI;
    let s0 = -alpha;
    let s1 = s0 + 1.0;
    let k0 = s0.floor();
    let v = q.vertices();
    let mut w: Vec<(f64, f64)> = Vec::with_capacity(2 * v.len());
    for k in [k0, k0 + 1.0] {
        for &(tb, xb) in v {
            w.push((tb + k, xb + two_pi * k));
        }
    }
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(w.len() + 2);
    let push = |t: f64, x: f64, out: &mut Vec<(f64, f64)>| {
        let tc = t.clamp(0.0, 1.0);
        if out.last() != Some(&(tc, x)) {
            out.push((tc, x));
        }
    };
    for i in 0..w.len() - 1 {
        let (sa, xa) = w[i];
        let (sb, xb) = w[i + 1];
        debug_assert!(sb >= sa, "lift vertices out of order");
        let lo = sa.max(s0);
        let hi = sb.min(s1);
        if hi < lo {
            continue;
        }
        if sb == sa {
            push(sa + alpha, xa, &mut out);
            push(sa + alpha, xb, &mut out);
        } else {
            let xl = xa + (xb - xa) * ((lo - sa) / (sb - sa));
            let xh = xa + (xb - xa) * ((hi - sa) / (sb - sa));
            push(lo + alpha, xl, &mut out);
            push(hi + alpha, xh, &mut out);
        }
    }
    // The window endpoints are exact in s; pin their images in t.
    out.first_mut().expect("trim covers the window").0 = 0.0;
    out.last_mut().expect("trim covers the window").0 = 1.0;
    QuantileTable::from_vertices(out).expect("lifted shift preserves monotonicity")
}

/// Minimizes the shifted quantile cost `C(α)` for two circle quantiles.
///
/// `C` is convex in the shift for convex ground costs, so a coarse scan
/// brackets the minimum and golden-section search refines it; if the scan
/// sees several local minima (loss of convexity through discretization),
/// a fine full scan takes over before refining.
fn geodesic_shift_min(qa: &QuantileTable, qb: &QuantileTable) -> (f64, f64) {
    let cost = |alpha: f64| quantile_cost(qa, &lifted_shifted(qb, alpha));
    let scan = |lo: f64, hi: f64, m: usize| -> Vec<(f64, f64)> {
        (0..m)
            .map(|k| {
                let a = lo + (hi - lo) * k as f64 / (m - 1) as f64;
                (a, cost(a))
            })
            .collect()
    };
    let mut lo = -1.0;
    let mut hi = 1.0;
    let mut vals = scan(lo, hi, 129);
    let argmin = |vals: &[(f64, f64)]| {
        vals.iter()
            .enumerate()
            .min_by(|x, y| (x.1).1.partial_cmp(&(y.1).1).unwrap())
            .map(|(k, _)| k)
            .unwrap()
    };
    let mut k = argmin(&vals);
    if k == 0 || k == vals.len() - 1 {
        // Optimum at the window edge: widen once.
        lo = -2.0;
        hi = 2.0;
        vals = scan(lo, hi, 257);
        k = argmin(&vals);
    }
    let local_minima = vals
        .windows(3)
        .filter(|w| w[1].1 < w[0].1 - 1e-14 && w[1].1 < w[2].1 - 1e-14)
        .count();
    if local_minima > 1 {
        vals = scan(lo, hi, 4097);
        k = argmin(&vals);
    }
    let mut a = vals[k.saturating_sub(1)].0;
    let mut b = vals[(k + 1).min(vals.len() - 1)].0;
    // Golden-section refinement.
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = cost(x1);
    let mut f2 = cost(x2);
    for _ in 0..70 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = cost(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = cost(x2);
        }
    }
    let alpha = 0.5 * (a + b);
    (alpha, cost(alpha))
}

/// Circle Wasserstein distance in the geodesic metric, from quantile
/// tables, together with the optimal monotone shift.
pub fn wasserstein_t_geodesic_with_plan(
    qa: &QuantileTable,
    qb: &QuantileTable,
) -> (f64, CouplingPlan) {
    let (shift, cost) = geodesic_shift_min(qa, qb);
    (cost.sqrt(), CouplingPlan::Monotone { shift, cost })
}

/// Circle Wasserstein distance in the geodesic metric between grid measures.
pub fn wasserstein_t_geodesic(mu: &GridMeasure, nu: &GridMeasure) -> Result<f64> {
    let qa = circle_quantile_grid(mu)?;
    let qb = circle_quantile_grid(nu)?;
    Ok(wasserstein_t_geodesic_with_plan(&qa, &qb).0)
}

/// Circle Wasserstein distance in the geodesic metric between atom sets.
pub fn wasserstein_t_geodesic_points(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
) -> Result<f64> {
    let qa = circle_quantile_points(a)?;
    let qb = circle_quantile_points(b)?;
    Ok(wasserstein_t_geodesic_with_plan(&qa, &qb).0)
}

/// Circle Wasserstein distance in the geodesic metric, atoms against a grid.
pub fn wasserstein_t_geodesic_mixed(a: &EmpiricalMeasure, nu: &GridMeasure) -> Result<f64> {
    let qa = circle_quantile_points(a)?;
    let qb = circle_quantile_grid(nu)?;
    Ok(wasserstein_t_geodesic_with_plan(&qa, &qb).0)
}

/// Mass resolution of the transport LP: weights are rounded to integer
/// grains so flow conservation is exact.
const GRAIN: f64 = (1u64 << 40) as f64;

/// Exact discrete transportation problem by successive shortest paths.
///
/// Returns the optimal cost `Σ π_{ij} c(i,j)` and the support of the
/// optimal plan as `(i, j, mass)` triples. Masses are quantized to `2⁻⁴⁰`
/// grains (the largest atom absorbs the rounding remainder), so reported
/// costs carry an error below `10⁻¹⁰` times the cost scale. Costs must be
/// nonnegative and finite.
pub fn transport_lp(
    a: &[f64],
    b: &[f64],
    cost: &dyn Fn(usize, usize) -> f64,
) -> Result<(f64, Vec<(usize, usize, f64)>)> {
    let na = a.len();
    let nb = b.len();
    if na == 0 || nb == 0 {
        return Err(Error::InvalidParameter(
            "transport needs nonempty supports".into(),
        ));
    }
    if a.iter().chain(b.iter()).any(|&w| !w.is_finite() || w < 0.0) {
        return Err(Error::InvalidParameter(
            "transport weights must be finite and nonnegative".into(),
        ));
    }
    let ta: f64 = a.iter().sum();
    let tb: f64 = b.iter().sum();
    if ta <= 0.0 || tb <= 0.0 {
        return Err(Error::ZeroMass);
    }
    if ((ta - tb) / ta).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "transport marginals carry different total mass: {ta} vs {tb}"
        )));
    }
    let to_grains = |w: &[f64], total: f64| -> Vec<u64> {
        let mut g: Vec<u64> = w
            .iter()
            .map(|&x| (x / total * GRAIN).round() as u64)
            .collect();
        let sum: i128 = g.iter().map(|&x| x as i128).sum();
        let imax = (0..g.len()).max_by_key(|&i| g[i]).unwrap();
        g[imax] = (g[imax] as i128 + (GRAIN as i128 - sum)) as u64;
        g
    };
    let mut supply = to_grains(a, ta);
    let mut demand = to_grains(b, tb);

    let mut c = vec![0.0f64; na * nb];
    for i in 0..na {
        for j in 0..nb {
            let v = cost(i, j);
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "transport cost({i},{j}) = {v} is not a finite nonnegative value"
                )));
            }
            c[i * nb + j] = v;
        }
    }

    // Nodes: sources 0..na, sinks na..na+nb, virtual source S, sink T.
    let s_id = na + nb;
    let t_id = na + nb + 1;
    let n_nodes = na + nb + 2;
    let mut h = vec![0.0f64; n_nodes];
    let mut flow = vec![0u64; na * nb];
    let mut remaining: u64 = GRAIN as u64;
    let max_aug = 16 * (na + nb) + 64;
    let mut aug = 0usize;
    while remaining > 0 {
        aug += 1;
        if aug > max_aug {
            return Err(Error::Numerical(format!(
                "flow solver exceeded {max_aug} augmentations"
            )));
        }
        let mut dist = vec![f64::INFINITY; n_nodes];
        let mut done = vec![false; n_nodes];
        let mut prev = vec![usize::MAX; n_nodes];
        dist[s_id] = 0.0;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..n_nodes {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX || u == t_id {
                break;
            }
            done[u] = true;
            // Rounding can leave residual arcs with reduced cost ~ -1e-16;
            // never re-relaxing a finalized node keeps the predecessor
            // graph acyclic regardless.
            let relax = |v: usize, nd: f64, dist: &mut Vec<f64>, prev: &mut Vec<usize>, done: &[bool]| {
                if !done[v] && nd < dist[v] {
                    dist[v] = nd;
                    prev[v] = u;
                }
            };
            if u == s_id {
                for i in 0..na {
                    if supply[i] > 0 {
                        relax(i, h[s_id] - h[i], &mut dist, &mut prev, &done);
                    }
                }
            } else if u < na {
                for j in 0..nb {
                    let v = na + j;
                    relax(v, dist[u] + c[u * nb + j] + h[u] - h[v], &mut dist, &mut prev, &done);
                }
            } else {
                let j = u - na;
                if demand[j] > 0 {
                    relax(t_id, dist[u] + h[u] - h[t_id], &mut dist, &mut prev, &done);
                }
                for i in 0..na {
                    if flow[i * nb + j] > 0 {
                        relax(i, dist[u] - c[i * nb + j] + h[u] - h[i], &mut dist, &mut prev, &done);
                    }
                }
            }
        }
        if !dist[t_id].is_finite() {
            return Err(Error::Numerical(
                "transport network disconnected before all mass shipped".into(),
            ));
        }
        let d_t = dist[t_id];
        // Bottleneck along the augmenting path.
        let mut delta = remaining;
        let mut v = t_id;
        while v != s_id {
            let u = prev[v];
            if u == s_id {
                delta = delta.min(supply[v]);
            } else if v == t_id {
                delta = delta.min(demand[u - na]);
            } else if u < na {
                // forward arc: unbounded
            } else {
                delta = delta.min(flow[v * nb + (u - na)]);
            }
            v = u;
        }
        let mut v = t_id;
        while v != s_id {
            let u = prev[v];
            if u == s_id {
                supply[v] -= delta;
            } else if v == t_id {
                demand[u - na] -= delta;
            } else if u < na {
                flow[u * nb + (v - na)] += delta;
            } else {
                flow[v * nb + (u - na)] -= delta;
            }
            v = u;
        }
        remaining -= delta;
        for v in 0..n_nodes {
            h[v] += dist[v].min(d_t);
        }
    }

    let mut total = 0.0;
    let mut pairs = Vec::new();
    for i in 0..na {
        for j in 0..nb {
            let f = flow[i * nb + j];
            if f > 0 {
                let m = f as f64 / GRAIN;
                total += m * c[i * nb + j];
                pairs.push((i, j, m));
            }
        }
    }
    Ok((total, pairs))
}

/// Largest support the chord-metric LP accepts per side.
const CHORD_SUPPORT_CAP: usize = 512;

fn circle_support(mu: &GridMeasure) -> Result<(Vec<f64>, Vec<f64>)> {
    if !mu.domain().is_circle() {
        return Err(Error::DomainMismatch {
            expected: "circle",
            got: "line",
        });
    }
    if mu.cells() > CHORD_SUPPORT_CAP {
        return Err(Error::Unsupported(format!(
            "chord transport accepts at most {CHORD_SUPPORT_CAP} support points, got {}",
            mu.cells()
        )));
    }
    let total: f64 = mu.masses().iter().sum();
    let mut angles = Vec::with_capacity(mu.cells());
    let mut weights = Vec::with_capacity(mu.cells());
    for i in 0..mu.cells() {
        let (lo, hi) = mu.cell_bounds(i);
        angles.push(0.5 * (lo + hi));
        weights.push(mu.cell_mass(i) / total);
    }
    Ok((angles, weights))
}

/// `½|ζ−η|²` for unit-circle points at the given angles.
fn chord_cost(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    2.0 * (0.5 * d).sin().powi(2)
}

/// Circle Wasserstein distance in the chord metric `|ζ−η|`, with the plan.
///
/// The squared chord is not convex in the angle difference, so the value
/// comes from the exact discrete LP on the grid supports.
pub fn wasserstein_t_chord_with_plan(
    mu: &GridMeasure,
    nu: &GridMeasure,
) -> Result<(f64, CouplingPlan)> {
    let (xa, wa) = circle_support(mu)?;
    let (xb, wb) = circle_support(nu)?;
    let (cost, pairs) = transport_lp(&wa, &wb, &|i, j| chord_cost(xa[i], xb[j]))?;
    let plan = CouplingPlan::Discrete {
        pairs: pairs.iter().map(|&(i, j, m)| (xa[i], xb[j], m)).collect(),
        cost,
    };
    Ok((cost.sqrt(), plan))
}

/// Circle Wasserstein distance in the chord metric between grid measures.
pub fn wasserstein_t_chord(mu: &GridMeasure, nu: &GridMeasure) -> Result<f64> {
    Ok(wasserstein_t_chord_with_plan(mu, nu)?.0)
}

/// Chord-metric Wasserstein distance between circle atom sets.
pub fn wasserstein_t_chord_points(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    if a.topology() != Topology::Circle || b.topology() != Topology::Circle {
        return Err(Error::DomainMismatch {
            expected: "circle atoms",
            got: "line",
        });
    }
    if a.len() > CHORD_SUPPORT_CAP || b.len() > CHORD_SUPPORT_CAP {
        return Err(Error::Unsupported(format!(
            "chord transport accepts at most {CHORD_SUPPORT_CAP} atoms"
        )));
    }
    let wa = vec![1.0 / a.len() as f64; a.len()];
    let wb = vec![1.0 / b.len() as f64; b.len()];
    let (cost, _) = transport_lp(&wa, &wb, &|i, j| chord_cost(a.atoms()[i], b.atoms()[j]))?;
    Ok(cost.sqrt())
}

/// Geodesic distance between two angles.
fn angle_dist(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

/// Optimal matching distance on circle configurations:
/// `min_σ √(Σᵢ d(ζᵢ, η_{σ(i)})²)` with `d` the geodesic angle distance.
///
/// Fast path: both lists sorted on the circle, minimum over the `n` cyclic
/// shifts of the sorted matching (optimal matchings do not cross). Debug
/// builds shadow every call with `n ≤ 8` by the brute-force optimum.
pub fn optimal_matching_distance(zeta: &[f64], eta: &[f64]) -> Result<f64> {
    if zeta.len() != eta.len() || zeta.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "matching needs equal nonempty angle lists, got {} and {}",
            zeta.len(),
            eta.len()
        )));
    }
    let mut za: Vec<f64> = zeta.iter().map(|&t| wrap_angle(t)).collect();
    let mut eb: Vec<f64> = eta.iter().map(|&t| wrap_angle(t)).collect();
    za.sort_unstable_by(|x, y| x.partial_cmp(y).unwrap());
    eb.sort_unstable_by(|x, y| x.partial_cmp(y).unwrap());
    let n = za.len();
    let mut best = f64::INFINITY;
    for k in 0..n {
        let c: f64 = (0..n)
            .map(|i| angle_dist(za[i], eb[(i + k) % n]).powi(2))
            .sum();
        best = best.min(c);
    }
    let fast = best.sqrt();
    #[cfg(debug_assertions)]
    if n <= 8 {
        let brute = matching_distance_brute(zeta, eta)?;
        debug_assert!(
            (fast - brute).abs() <= 1e-9 * (1.0 + brute),
            "cyclic-shift matching {fast} disagrees with brute force {brute}"
        );
    }
    Ok(fast)
}

/// Brute-force matching distance over all permutations, `n ≤ 8`.
pub fn matching_distance_brute(zeta: &[f64], eta: &[f64]) -> Result<f64> {
    let n = zeta.len();
    if n != eta.len() || n == 0 {
        return Err(Error::InvalidParameter(
            "matching needs equal nonempty angle lists".into(),
        ));
    }
    if n > 8 {
        return Err(Error::Unsupported(format!(
            "brute-force matching is capped at 8 points, got {n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    // Heap's algorithm over permutations of eta.
    fn walk(k: usize, perm: &mut Vec<usize>, zeta: &[f64], eta: &[f64], best: &mut f64) {
        if k == 1 {
            let c: f64 = perm
                .iter()
                .enumerate()
                .map(|(i, &j)| angle_dist(zeta[i], eta[j]).powi(2))
                .sum();
            *best = best.min(c);
            return;
        }
        for i in 0..k {
            walk(k - 1, perm, zeta, eta, best);
            if k % 2 == 0 {
                perm.swap(i, k - 1);
            } else {
                perm.swap(0, k - 1);
            }
        }
    }
    walk(n, &mut perm, zeta, eta, &mut best);
    Ok(best.sqrt())
}

/// Two-sided inequality check: `value ≤ bound` up to a slack tolerance.
#[derive(Debug, Clone, Copy)]
pub struct SlackReport {
    /// Upper bound side of the inequality.
    pub bound: f64,
    /// Quantity the bound dominates.
    pub value: f64,
}

impl SlackReport {
    pub fn slack(&self) -> f64 {
        self.bound - self.value
    }
}

/// Exact `W` between two weighted atom lists on the line (step quantiles).
pub fn weighted_quantile_w2(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidParameter("empty atom list".into()));
    }
    let prep = |xs: &[(f64, f64)]| -> Result<Vec<(f64, f64)>> {
        if xs.iter().any(|&(x, w)| !x.is_finite() || !(w > 0.0)) {
            return Err(Error::InvalidParameter(
                "atoms need finite positions and positive weights".into(),
            ));
        }
        let total: f64 = xs.iter().map(|&(_, w)| w).sum();
        let mut v: Vec<(f64, f64)> = xs.iter().map(|&(x, w)| (x, w / total)).collect();
        v.sort_unstable_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
        Ok(v)
    };
    let xa = prep(a)?;
    let xb = prep(b)?;
    let (mut i, mut j) = (0usize, 0usize);
    let (mut ca, mut cb) = (xa[0].1, xb[0].1);
    let mut t = 0.0;
    let mut cost = 0.0;
    loop {
        let next = ca.min(cb).min(1.0);
        let d = xa[i].0 - xb[j].0;
        cost += (next - t) * 0.5 * d * d;
        t = next;
        if t >= 1.0 - 1e-15 {
            break;
        }
        if ca <= cb && i + 1 < xa.len() {
            i += 1;
            ca += xa[i].1;
        } else if j + 1 < xb.len() {
            j += 1;
            cb += xb[j].1;
        } else if i + 1 < xa.len() {
            i += 1;
            ca += xa[i].1;
        } else {
            break;
        }
    }
    Ok(cost.sqrt())
}

/// Eigenvalue contraction for discrete measures on self-adjoint matrices:
/// the mean eigenvalue distributions `μ̂, ν̂` satisfy
/// `W(μ̂, ν̂) ≤ W(μ̃, ν̃)/√n`.
///
/// `W(μ̃, ν̃)` is the exact LP with Hilbert-Schmidt ground cost `½‖A−B‖²`;
/// the eigenvalue side is the exact weighted quantile coupling. The report
/// carries `bound = W(μ̃,ν̃)/√n` and `value = W(μ̂,ν̂)`.
pub fn check_matrix_contraction(
    mu: &[(CMat, f64)],
    nu: &[(CMat, f64)],
) -> Result<SlackReport> {
    if mu.is_empty() || nu.is_empty() {
        return Err(Error::InvalidParameter("empty matrix measure".into()));
    }
    if mu.len() > 6 || nu.len() > 6 {
        return Err(Error::Unsupported(
            "matrix measures are capped at 6 atoms".into(),
        ));
    }
    let n = mu[0].0.nrows();
    if n > 4 {
        return Err(Error::Unsupported(
            "matrix contraction checks are capped at 4×4".into(),
        ));
    }
    for (m, _) in mu.iter().chain(nu.iter()) {
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::InvalidParameter(
                "all matrix atoms must share one square size".into(),
            ));
        }
    }
    let ta: f64 = mu.iter().map(|&(_, w)| w).sum();
    let tb: f64 = nu.iter().map(|&(_, w)| w).sum();
    if !(ta > 0.0) || !(tb > 0.0) {
        return Err(Error::ZeroMass);
    }
    let wa: Vec<f64> = mu.iter().map(|&(_, w)| w / ta).collect();
    let wb: Vec<f64> = nu.iter().map(|&(_, w)| w / tb).collect();
    let (cost_m, _) = transport_lp(&wa, &wb, &|i, j| {
        0.5 * (&mu[i].0 - &nu[j].0).norm_squared()
    })?;
    let w_matrix = cost_m.sqrt();

    let eig_atoms = |m: &[(CMat, f64)]| -> Result<Vec<(f64, f64)>> {
        let total: f64 = m.iter().map(|&(_, w)| w).sum();
        let mut out = Vec::with_capacity(m.len() * n);
        for (a, w) in m {
            for lam in hermitian_eigenvalues(a)? {
                out.push((lam, w / total / n as f64));
            }
        }
        Ok(out)
    };
    let w_hat = weighted_quantile_w2(&eig_atoms(mu)?, &eig_atoms(nu)?)?;
    Ok(SlackReport {
        bound: w_matrix / (n as f64).sqrt(),
        value: w_hat,
    })
}

/// Eigenvalue matching bound on `SU(n)`: the matching distance of the
/// eigenangle configurations is dominated by the geodesic distance.
///
/// The report carries `bound = d(U, V)` and `value = δ(λ(U), λ(V))`.
/// Branch-ambiguous pairs propagate the underlying error so callers can
/// skip them.
pub fn check_su_matching_bound(u: &CMat, v: &CMat) -> Result<SlackReport> {
    let d = geodesic_distance_su(u, v)?;
    let (za, _) = eigenangles(u)?;
    let (zb, _) = eigenangles(v)?;
    let delta = optimal_matching_distance(&za, &zb)?;
    Ok(SlackReport {
        bound: d,
        value: delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixfn::{random_special_unitary, unitary_exp, SuTangentBasis};
    use crate::measure::{make_nu_lambda, make_semicircle, make_uniform, mollify, Domain};
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn line_distance_closed_forms() {
        let mu = make_semicircle(2.0, 1024).unwrap();
        assert_abs_diff_eq!(wasserstein_r_grids(&mu, &mu).unwrap(), 0.0, epsilon = 1e-14);

        // Single atoms: the only plan pays ½(a−b)².
        let a = EmpiricalMeasure::new_line(vec![0.3]).unwrap();
        let b = EmpiricalMeasure::new_line(vec![-1.1]).unwrap();
        assert_abs_diff_eq!(
            wasserstein_r_points(&a, &b).unwrap(),
            1.4 / 2.0f64.sqrt(),
            epsilon = 1e-14
        );

        // Dilating the standard semicircle by s scales quantiles by s, so
        // W = |1−s|·√(variance/2) = |1−s|/√2.
        for s in [0.6, 1.5] {
            let nu = make_semicircle(2.0 * s, 2048).unwrap();
            let got = wasserstein_r_grids(&mu, &nu).unwrap();
            let want = (1.0f64 - s).abs() / 2.0f64.sqrt();
            assert!(
                (got - want).abs() < 2e-4,
                "s={s}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn monotone_coupling_matches_lp_on_atoms() {
        // The quantile coupling and the LP solve the same discrete problem;
        // agreement validates 1-D optimality of the monotone plan.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..12 {
            let na = rng.gen_range(2..30);
            let nb = rng.gen_range(2..30);
            let atoms = |rng: &mut ChaCha8Rng, n: usize| -> Vec<(f64, f64)> {
                (0..n)
                    .map(|_| (4.0 * rng.gen::<f64>() - 2.0, rng.gen::<f64>() + 0.05))
                    .collect()
            };
            let xa = atoms(&mut rng, na);
            let xb = atoms(&mut rng, nb);
            let quantile = weighted_quantile_w2(&xa, &xb).unwrap();
            let ta: f64 = xa.iter().map(|p| p.1).sum();
            let tb: f64 = xb.iter().map(|p| p.1).sum();
            let wa: Vec<f64> = xa.iter().map(|p| p.1 / ta).collect();
            let wb: Vec<f64> = xb.iter().map(|p| p.1 / tb).collect();
            let (lp_cost, pairs) = transport_lp(&wa, &wb, &|i, j| {
                0.5 * (xa[i].0 - xb[j].0).powi(2)
            })
            .unwrap();
            assert!(
                (quantile - lp_cost.sqrt()).abs() < 1e-6,
                "trial {trial}: quantile {quantile} vs LP {}",
                lp_cost.sqrt()
            );
            // Plan marginals reproduce the inputs.
            let mut ma = vec![0.0; na];
            let mut mb = vec![0.0; nb];
            for &(i, j, m) in &pairs {
                ma[i] += m;
                mb[j] += m;
            }
            for i in 0..na {
                assert!((ma[i] - wa[i]).abs() < 1e-10);
            }
            for j in 0..nb {
                assert!((mb[j] - wb[j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn line_metric_axioms() {
        let a = make_semicircle(2.0, 256).unwrap();
        let b = make_semicircle(1.0, 256).unwrap();
        let c = make_uniform(Domain::Line { a: -1.0, b: 1.0 }, 256).unwrap();
        let wab = wasserstein_r_grids(&a, &b).unwrap();
        let wba = wasserstein_r_grids(&b, &a).unwrap();
        assert_abs_diff_eq!(wab, wba, epsilon = 1e-13);
        let wbc = wasserstein_r_grids(&b, &c).unwrap();
        let wac = wasserstein_r_grids(&a, &c).unwrap();
        assert!(wac <= wab + wbc + 1e-9);
        assert!(wab > 0.0 && wbc > 0.0 && wac > 0.0);
    }

    #[test]
    fn lower_semicontinuity_along_mollification() {
        let mu = make_semicircle(2.0, 512).unwrap();
        let nu = make_uniform(Domain::Line { a: -1.0, b: 1.0 }, 512).unwrap();
        let base = wasserstein_r_grids(&mu, &nu).unwrap();
        for eps in [0.2, 0.1, 0.05] {
            let smoothed = mollify(&mu, eps).unwrap();
            let w = wasserstein_r_grids(&smoothed, &nu).unwrap();
            assert!(
                w >= base - 1e-4,
                "eps={eps}: {w} dips below limit {base}"
            );
        }
    }

    #[test]
    fn geodesic_distance_basics() {
        let nu4 = make_nu_lambda(4.0, 512).unwrap();
        assert!(wasserstein_t_geodesic(&nu4, &nu4).unwrap() < 1e-9);

        // Rotation coupling bounds the distance by |φ|/√2.
        let phi = 0.3;
        let rotated = GridMeasure::new(
            Domain::Circle,
            (0..512)
                .map(|i| {
                    let t = -PI + (i as f64 + 0.5) * 2.0 * PI / 512.0;
                    1.0 + 0.5 * (t - phi).cos()
                })
                .collect(),
        )
        .unwrap();
        let w = wasserstein_t_geodesic(&rotated, &nu4).unwrap();
        assert!(
            w <= phi / 2.0f64.sqrt() + 5e-3,
            "rotation distance {w} above coupling bound"
        );
        assert!(w > 0.05);

        // Symmetry.
        let uniform = make_uniform(Domain::Circle, 512).unwrap();
        let w1 = wasserstein_t_geodesic(&uniform, &nu4).unwrap();
        let w2 = wasserstein_t_geodesic(&nu4, &uniform).unwrap();
        assert_abs_diff_eq!(w1, w2, epsilon = 1e-10);

        // Energy bound: W(ν_λ, uniform) ≤ √(1/λ²·2)/... = √(2)/λ² form:
        // the log-energy of ν_4 is −1/16, so the bound is √(2/16).
        assert!(w1 <= (2.0f64 / 16.0).sqrt() + 1e-9);
    }

    #[test]
    fn geodesic_matches_lp_oracle_on_coarse_grids() {
        let nu4 = make_nu_lambda(4.0, 64).unwrap();
        let uniform = make_uniform(Domain::Circle, 64).unwrap();
        let bumpy = GridMeasure::new(
            Domain::Circle,
            (0..64)
                .map(|i| {
                    let t = -PI + (i as f64 + 0.5) * 2.0 * PI / 64.0;
                    (1.0 + 0.8 * (2.0 * t).sin()).max(0.05)
                })
                .collect(),
        )
        .unwrap();
        for (a, b) in [(&nu4, &uniform), (&nu4, &bumpy), (&uniform, &bumpy)] {
            // Midpoint-atomized LP against the continuous shift search.
            let (xa, wa) = circle_support(a).unwrap();
            let (xb, wb) = circle_support(b).unwrap();
            let (lp_cost, _) = transport_lp(&wa, &wb, &|i, j| {
                0.5 * angle_dist(xa[i], xb[j]).powi(2)
            })
            .unwrap();
            let w_shift = wasserstein_t_geodesic(a, b).unwrap();
            // The continuous quantile spreads mass inside cells while the LP
            // sits on midpoint atoms; at 64 cells the two differ by O(h).
            assert!(
                (w_shift - lp_cost.sqrt()).abs() < 2e-2,
                "shift {w_shift} vs LP {}",
                lp_cost.sqrt()
            );
        }
    }

    #[test]
    fn shift_family_is_exact_on_atoms() {
        // On atomized measures the shift search solves the same discrete
        // problem as the LP, so agreement is tight.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..6 {
            let n = 24usize;
            let a = EmpiricalMeasure::new_circle(
                (0..n).map(|_| PI * (2.0 * rng.gen::<f64>() - 1.0)).collect(),
            )
            .unwrap();
            let b = EmpiricalMeasure::new_circle(
                (0..n).map(|_| PI * (2.0 * rng.gen::<f64>() - 1.0)).collect(),
            )
            .unwrap();
            let w = wasserstein_t_geodesic_points(&a, &b).unwrap();
            let weights = vec![1.0 / n as f64; n];
            let (lp, _) = transport_lp(&weights, &weights, &|i, j| {
                0.5 * angle_dist(a.atoms()[i], b.atoms()[j]).powi(2)
            })
            .unwrap();
            assert!(
                (w - lp.sqrt()).abs() < 1e-6,
                "shift {w} vs LP {}",
                lp.sqrt()
            );
        }
    }

    #[test]
    fn chord_distance_two_point_and_ordering() {
        // Atoms at angles 0 and π sit at unit-circle points 1 and −1.
        let a = EmpiricalMeasure::new_circle(vec![0.0]).unwrap();
        let b = EmpiricalMeasure::new_circle(vec![PI]).unwrap();
        let chord = wasserstein_t_chord_points(&a, &b).unwrap();
        assert_abs_diff_eq!(chord, 2.0f64.sqrt(), epsilon = 1e-9);
        let geo = wasserstein_t_geodesic_points(&a, &b).unwrap();
        assert_abs_diff_eq!(geo, PI / 2.0f64.sqrt(), epsilon = 1e-9);
        assert!(chord <= geo);

        // Chord ≤ geodesic: on one support the plans are interchangeable
        // and the chord cost is dominated pointwise, so the ordering is
        // exact; against the continuous quantile route the discretization
        // gap is O(h).
        let nu8 = make_nu_lambda(8.0, 128).unwrap();
        let uniform = make_uniform(Domain::Circle, 128).unwrap();
        let chord = wasserstein_t_chord(&nu8, &uniform).unwrap();
        let (xa, wa) = circle_support(&nu8).unwrap();
        let (xb, wb) = circle_support(&uniform).unwrap();
        let (geo_lp, _) = transport_lp(&wa, &wb, &|i, j| {
            0.5 * angle_dist(xa[i], xb[j]).powi(2)
        })
        .unwrap();
        assert!(
            chord <= geo_lp.sqrt() + 1e-9,
            "chord {chord} exceeds same-support geodesic {}",
            geo_lp.sqrt()
        );
        let geo = wasserstein_t_geodesic(&nu8, &uniform).unwrap();
        assert!(
            chord <= geo + 2e-2,
            "chord {chord} far above quantile geodesic {geo}"
        );
        let same = wasserstein_t_chord(&nu8, &nu8).unwrap();
        assert!(same < 1e-9);
    }

    #[test]
    fn matching_distance_examples() {
        assert_abs_diff_eq!(
            optimal_matching_distance(&[0.4, -1.0], &[0.4, -1.0]).unwrap(),
            0.0,
            epsilon = 1e-14
        );
        // Permutation absorbs a swap.
        assert_abs_diff_eq!(
            optimal_matching_distance(&[0.0, PI], &[PI, 0.0]).unwrap(),
            0.0,
            epsilon = 1e-14
        );
        // Wrap-around pairing beats the naive sorted pairing.
        let z = [-3.0, 3.0];
        let e = [3.1, -3.1];
        let d = optimal_matching_distance(&z, &e).unwrap();
        let direct = (angle_dist(-3.0, -3.1).powi(2) + angle_dist(3.0, 3.1).powi(2)).sqrt();
        assert_abs_diff_eq!(d, direct, epsilon = 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let z: Vec<f64> = (0..6).map(|_| PI * (2.0 * rng.gen::<f64>() - 1.0)).collect();
            let e: Vec<f64> = (0..6).map(|_| PI * (2.0 * rng.gen::<f64>() - 1.0)).collect();
            let fast = optimal_matching_distance(&z, &e).unwrap();
            let brute = matching_distance_brute(&z, &e).unwrap();
            assert_abs_diff_eq!(fast, brute, epsilon = 1e-10);
        }
    }

    fn random_hermitian(n: usize, rng: &mut impl Rng) -> CMat {
        let g = CMat::from_fn(n, n, |_, _| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        (&g + g.adjoint()).map(|z| z * Complex64::new(0.5, 0.0))
    }

    #[test]
    fn matrix_contraction_examples() {
        use nalgebra::DVector;
        let diag = |v: &[f64]| {
            CMat::from_diagonal(&DVector::from_iterator(
                v.len(),
                v.iter().map(|&x| Complex64::new(x, 0.0)),
            ))
        };
        // Identical measures: both sides vanish.
        let mu = vec![(diag(&[0.0, 1.0]), 1.0)];
        let rep = check_matrix_contraction(&mu, &mu).unwrap();
        assert!(rep.bound.abs() < 1e-12 && rep.value.abs() < 1e-12);

        // Commuting atoms make the eigenvalue step tight.
        let nu = vec![(diag(&[2.0, 3.0]), 1.0)];
        let rep = check_matrix_contraction(&mu, &nu).unwrap();
        assert_abs_diff_eq!(rep.bound, 2.0 / 2.0f64.sqrt(), epsilon = 1e-10);
        assert_abs_diff_eq!(rep.value, 2.0f64.sqrt(), epsilon = 1e-10);
        assert!(rep.slack().abs() < 1e-9);

        // Random two-point measures on 3×3 matrices.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for trial in 0..100 {
            let atoms = |rng: &mut ChaCha8Rng| -> Vec<(CMat, f64)> {
                vec![
                    (random_hermitian(3, rng), 0.3 + rng.gen::<f64>()),
                    (random_hermitian(3, rng), 0.3 + rng.gen::<f64>()),
                ]
            };
            let mu = atoms(&mut rng);
            let nu = atoms(&mut rng);
            let rep = check_matrix_contraction(&mu, &nu).unwrap();
            assert!(
                rep.slack() >= -1e-9,
                "trial {trial}: slack {}",
                rep.slack()
            );
        }
    }

    #[test]
    fn su_matching_bound_examples() {
        let u = CMat::identity(2, 2);
        let rep = check_su_matching_bound(&u, &u).unwrap();
        assert!(rep.bound.abs() < 1e-9 && rep.value.abs() < 1e-9);

        // Diagonal pair: both sides equal √2·θ.
        let theta = 0.7;
        let v = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::from_polar(1.0, theta),
            Complex64::from_polar(1.0, -theta),
        ]));
        let rep = check_su_matching_bound(&u, &v).unwrap();
        assert_abs_diff_eq!(rep.bound, 2.0f64.sqrt() * theta, epsilon = 1e-9);
        assert_abs_diff_eq!(rep.value, 2.0f64.sqrt() * theta, epsilon = 1e-9);

        // Small perturbation pairs stay on the right side.
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let basis = SuTangentBasis::new(3).unwrap();
        for trial in 0..20 {
            let base = random_special_unitary(3, &mut rng);
            let mut y = CMat::zeros(3, 3);
            for k in 0..basis.dim() {
                let c = Complex64::new(0.1 * (rng.gen::<f64>() - 0.5), 0.0);
                y += basis.direction(k).map(|z| z * c);
            }
            let other = &base * unitary_exp(&y).unwrap();
            match check_su_matching_bound(&base, &other) {
                Ok(rep) => assert!(
                    rep.slack() >= -1e-7,
                    "trial {trial}: slack {}",
                    rep.slack()
                ),
                Err(Error::AmbiguousBranch(_)) => {}
                Err(e) => panic!("unexpected error {e}"),
            }
        }
    }

    #[test]
    fn mixed_inputs_share_the_quantile_route() {
        // Empirical draws from the semicircle against the smooth density.
        let mu = make_semicircle(2.0, 1024).unwrap();
        let q = cdf_quantile(&mu);
        let n = 400;
        let atoms: Vec<f64> = (0..n)
            .map(|k| q.value((k as f64 + 0.5) / n as f64))
            .collect();
        let emp = EmpiricalMeasure::new_line(atoms).unwrap();
        let w = wasserstein_r_mixed(&emp, &mu).unwrap();
        assert!(w < 0.01, "quantile-sampled atoms sit close, got {w}");

        let nu4 = make_nu_lambda(4.0, 512).unwrap();
        let qc = circle_quantile_grid(&nu4).unwrap();
        let atoms: Vec<f64> = (0..n)
            .map(|k| qc.value((k as f64 + 0.5) / n as f64))
            .collect();
        let emp = EmpiricalMeasure::new_circle(atoms).unwrap();
        let w = wasserstein_t_geodesic_mixed(&emp, &nu4).unwrap();
        assert!(w < 0.01, "circle quantile atoms sit close, got {w}");
    }
}
