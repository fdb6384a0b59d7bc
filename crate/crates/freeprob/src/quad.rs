//! Quadrature for the logarithmic kernel on uniform grids.
//!
//! The double integrals of `log|x−y|` (line) and `log(2|sin((s−t)/2)|)`
//! (circle) over pairs of grid cells have closed forms through the second
//! antiderivative `T(w) = (w²/2)·log|w| − (3/4)·w²`, with the smooth circle
//! remainder handled by Gauss–Legendre. Everything downstream (free entropy,
//! equilibrium energies, log-potentials) reduces to Toeplitz or circulant
//! quadratic forms in these cell-pair integrals, evaluated either directly or
//! through FFT embeddings.

use crate::{Error, Result};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::f64::consts::PI;

/// First antiderivative of `log|w|`: `F(w) = w·log|w| − w`, `F(0) = 0`.
pub fn f_log(w: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * w.abs().ln() - w
    }
}

/// Second antiderivative of `log|w|`: `T(w) = (w²/2)·log|w| − (3/4)w²`.
pub fn t_log(w: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        0.5 * w * w * w.abs().ln() - 0.75 * w * w
    }
}

/// `∬ log|x−y| dx dy` over `[a0,b0] × [a1,b1]`, exact via `T`.
pub fn log_cell_pair(a0: f64, b0: f64, a1: f64, b1: f64) -> f64 {
    t_log(b0 - a1) - t_log(b0 - b1) - t_log(a0 - a1) + t_log(a0 - b1)
}

/// Normalized second difference `½·Δ²(k² log k) − 3/2`, so that the line
/// cell-pair integral at offset `k` is `h²·(log h + g_hat(k))`.
///
/// Direct evaluation loses accuracy to cancellation for large `k`; the tail
/// switches to the series `log k − 1/(12k²) − 1/(60k⁴) − …`.
pub fn g_hat(k: usize) -> f64 {
    if k == 0 {
        return -1.5;
    }
    let kf = k as f64;
    if k < 256 {
        let f = |m: f64| if m == 0.0 { 0.0 } else { m * m * m.ln() };
        0.5 * (f(kf + 1.0) + f(kf - 1.0) - 2.0 * f(kf)) - 1.5
    } else {
        let k2 = kf * kf;
        kf.ln() - 1.0 / (12.0 * k2) - 1.0 / (60.0 * k2 * k2)
    }
}

/// Cell-pair integrals of `log|x−y|` for a uniform line grid.
///
/// `offsets()[k]` is the exact double integral over two cells of width `h`
/// whose midpoints are `k·h` apart.
pub struct LineLogKernel {
    h: f64,
    offsets: Vec<f64>,
}

impl LineLogKernel {
    pub fn new(cells: usize, h: f64) -> LineLogKernel {
        let log_h = h.ln();
        let offsets = (0..cells)
            .map(|k| h * h * (log_h + g_hat(k)))
            .collect();
        LineLogKernel { h, offsets }
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn h(&self) -> f64 {
        self.h
    }
}

/// Smooth part of the circle kernel:
/// `r(u) = log(2|sin(u/2)|) − log|u| = log(|sin(u/2)| / (|u|/2))`,
/// analytic on `(−2π, 2π)` with `r(0) = 0`.
pub fn circle_kernel_remainder(u: f64) -> f64 {
    let t = 0.5 * u.abs();
    if t < 1e-4 {
        // log(sin t / t) = −t²/6 − t⁴/180 − t⁶/2835 − …
        let t2 = t * t;
        return -t2 / 6.0 - t2 * t2 / 180.0;
    }
    (t.sin() / t).ln()
}

/// Cell-pair integrals of `log(2|sin((s−t)/2)|)` for a uniform circle grid,
/// one value per wrapped offset (circulant structure).
pub struct CircleLogKernel {
    offsets: Vec<f64>,
}

impl CircleLogKernel {
    pub fn new(cells: usize) -> CircleLogKernel {
        let h = 2.0 * PI / cells as f64;
        let (nodes, weights) = gauss_legendre(16);
        let offsets = (0..cells)
            .map(|k| {
                // Wrapped midpoint separation in (−π, π].
                let mut delta = k as f64 * h;
                if delta > PI {
                    delta -= 2.0 * PI;
                }
                // log|u| part through the hat-weight identity.
                let mut val = t_log(delta + h) - 2.0 * t_log(delta) + t_log(delta - h);
                // Smooth remainder ∫ r(δ+v)(h−|v|) dv on [−h,0] and [0,h].
                for half in 0..2 {
                    let (lo, hi) = if half == 0 { (-h, 0.0) } else { (0.0, h) };
                    let mid = 0.5 * (lo + hi);
                    let rad = 0.5 * (hi - lo);
                    for (x, w) in nodes.iter().zip(&weights) {
                        let v = mid + rad * x;
                        val += w * rad * circle_kernel_remainder(delta + v) * (h - v.abs());
                    }
                }
                val
            })
            .collect();
        CircleLogKernel { offsets }
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }
}

/// Antiderivative `Λ(u) = ∫₀ᵘ log(2|sin(v/2)|) dv` of the circle kernel,
/// extended periodically (`Λ(u + 2π) = Λ(u)`, odd).
pub fn circle_log_antiderivative(u: f64) -> f64 {
    let w = crate::measure::wrap_angle(u);
    // Λ on [−π, π): odd, so reduce to [0, π].
    let s = w.abs();
    let mut val = f_log(s);
    let (nodes, weights) = gauss_legendre(32);
    let mid = 0.5 * s;
    for (x, wt) in nodes.iter().zip(&weights) {
        val += wt * mid * circle_kernel_remainder(mid + mid * x);
    }
    if w < 0.0 {
        -val
    } else {
        val
    }
}

/// Toeplitz matrix–vector product `y_i = Σ_j K(i−j)·x_j` via circulant FFT
/// embedding, with `K(k) = pos[k]` for `k ≥ 0` and `K(−k) = neg[k−1]`.
///
/// Falls back to the direct O(n²) loop below 512 cells, where FFT setup
/// costs more than it saves.
pub struct ToeplitzOperator {
    n: usize,
    direct: Option<(Vec<f64>, Vec<f64>)>,
    fft_len: usize,
    kernel_hat: Vec<Complex<f64>>,
}

impl ToeplitzOperator {
    /// Symmetric kernel `K(k) = K(−k) = offsets[|k|]`.
    pub fn from_symmetric_offsets(offsets: &[f64]) -> ToeplitzOperator {
        let neg = offsets[1..].to_vec();
        ToeplitzOperator::from_offsets(offsets, &neg)
    }

    /// Antisymmetric kernel `K(−k) = −K(k)`, `K(0) = offsets[0]`.
    pub fn from_antisymmetric_offsets(offsets: &[f64]) -> ToeplitzOperator {
        let neg: Vec<f64> = offsets[1..].iter().map(|v| -v).collect();
        ToeplitzOperator::from_offsets(offsets, &neg)
    }

    /// General kernel from `pos = [K(0), …, K(n−1)]` and
    /// `neg = [K(−1), …, K(−(n−1))]`.
    pub fn from_offsets(pos: &[f64], neg: &[f64]) -> ToeplitzOperator {
        let n = pos.len();
        assert_eq!(neg.len(), n - 1);
        if n < 512 {
            return ToeplitzOperator {
                n,
                direct: Some((pos.to_vec(), neg.to_vec())),
                fft_len: 0,
                kernel_hat: Vec::new(),
            };
        }
        let m = (2 * n).next_power_of_two();
        let mut c = vec![Complex::new(0.0, 0.0); m];
        for (k, &g) in pos.iter().enumerate() {
            c[k] = Complex::new(g, 0.0);
        }
        for (k, &g) in neg.iter().enumerate() {
            c[m - 1 - k] = Complex::new(g, 0.0);
        }
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(m);
        fft.process(&mut c);
        ToeplitzOperator {
            n,
            direct: None,
            fft_len: m,
            kernel_hat: c,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        if let Some((pos, neg)) = &self.direct {
            let n = self.n;
            let mut y = vec![0.0; n];
            for (i, yi) in y.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (j, &xj) in x.iter().enumerate() {
                    let k = if j <= i { pos[i - j] } else { neg[j - i - 1] };
                    acc += k * xj;
                }
                *yi = acc;
            }
            return y;
        }
        let m = self.fft_len;
        let mut buf = vec![Complex::new(0.0, 0.0); m];
        for (i, &xi) in x.iter().enumerate() {
            buf[i] = Complex::new(xi, 0.0);
        }
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(m);
        let ifft = planner.plan_fft_inverse(m);
        fft.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        ifft.process(&mut buf);
        buf[..self.n].iter().map(|z| z.re / m as f64).collect()
    }
}

/// Circulant matrix–vector product `y_i = Σ_j offsets[(i−j) mod n]·x_j`.
pub fn circulant_apply(offsets: &[f64], x: &[f64]) -> Vec<f64> {
    let n = offsets.len();
    assert_eq!(x.len(), n);
    if n < 512 {
        let mut y = vec![0.0; n];
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, &xj) in x.iter().enumerate() {
                acc += offsets[(n + i - j) % n] * xj;
            }
            *yi = acc;
        }
        return y;
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut a: Vec<Complex<f64>> = offsets.iter().map(|&g| Complex::new(g, 0.0)).collect();
    let mut b: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft.process(&mut a);
    fft.process(&mut b);
    for (u, v) in b.iter_mut().zip(&a) {
        *u *= v;
    }
    ifft.process(&mut b);
    b.iter().map(|z| z.re / n as f64).collect()
}

/// Quadratic form `Σ_{ij} x_i·offsets[|i−j|]·y_j` for a symmetric Toeplitz
/// kernel, via one matvec.
pub fn toeplitz_quadratic_form(offsets: &[f64], x: &[f64], y: &[f64]) -> f64 {
    let op = ToeplitzOperator::from_symmetric_offsets(offsets);
    op.apply(y).iter().zip(x).map(|(ky, xi)| ky * xi).sum()
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
///
/// Computed by Newton iteration on the Legendre recurrence; nodes are
/// accurate to machine precision for the orders used here (≤ 64).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-like initial guess.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Legendre P_n(x) and derivative via the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let dpn = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dpn;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let mut p0 = 1.0;
        let mut p1 = x;
        for k in 2..=n {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        let dpn = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        let w = 2.0 / ((1.0 - x * x) * dpn * dpn);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Integrates `f` over `[a, b]` with Gauss–Legendre of the given order.
pub fn gl_integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, order: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(order);
    let mid = 0.5 * (a + b);
    let rad = 0.5 * (b - a);
    nodes
        .iter()
        .zip(&weights)
        .map(|(x, w)| w * rad * f(mid + rad * x))
        .sum()
}

/// Adaptive Simpson quadrature, used as an independent oracle in tests.
pub fn adaptive_quad(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(Error::Numerical(format!(
                "adaptive quadrature failed to converge on [{a}, {b}]"
            )));
        }
        Ok(
            rec(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)?
                + rec(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)?,
        )
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

/// Dyadically graded subdivision of `[a, b]` refining toward one endpoint,
/// for integrands with an endpoint log singularity.
pub fn graded_subdivision(a: f64, b: f64, toward_a: bool, levels: usize) -> Vec<(f64, f64)> {
    let mut cuts = Vec::with_capacity(levels + 1);
    let mut frac = 1.0f64;
    cuts.push(1.0);
    for _ in 0..levels {
        frac *= 0.5;
        cuts.push(frac);
    }
    cuts.push(0.0);
    // cuts descends 1 → 0; fractions measured from the singular endpoint.
    let mut out = Vec::with_capacity(levels + 1);
    for w in cuts.windows(2) {
        let (far, near) = (w[0], w[1]);
        let (lo, hi) = if toward_a {
            (a + near * (b - a), a + far * (b - a))
        } else {
            (a + (1.0 - far) * (b - a), a + (1.0 - near) * (b - a))
        };
        out.push((lo, hi));
    }
    out
}
