//! Trace-function calculus on Hermitian matrices and geometry on `SU(n)`.
//!
//! Derivatives of `A ↦ Tr f(A)` use eigendecomposition functional calculus
//! with divided differences (first derivative `Tr(f′(A)H)`, second the
//! Schur-product formula with the first divided difference of `f′`).
//! Unitary eigenstructure goes through the Cayley transform
//! `K = i(I−U)(I+U)⁻¹`, which is Hermitian whenever `U` is unitary, so a
//! single Hermitian eigensolver serves both worlds. Traces are plain
//! (unnormalized) throughout; `Ψ(U) = Tr Q(U) = Σ_j q(θ_j)`.

use crate::potential::Potential;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::PI;

/// Complex dynamic matrix used for all unitary/Hermitian work here.
pub type CMat = DMatrix<Complex64>;

/// A scalar function with two derivatives, as used by the trace calculus.
pub struct C2Fn {
    f: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    df: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    d2f: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl C2Fn {
    pub fn new(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> C2Fn {
        C2Fn {
            f: Box::new(f),
            df: Box::new(df),
            d2f: Box::new(d2f),
        }
    }

    pub fn f(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn df(&self, x: f64) -> f64 {
        (self.df)(x)
    }

    pub fn d2f(&self, x: f64) -> f64 {
        (self.d2f)(x)
    }

    /// Monomial `t^k` with its derivatives, `k ≥ 2`.
    pub fn monomial(k: u32) -> C2Fn {
        C2Fn::new(
            move |x| x.powi(k as i32),
            move |x| k as f64 * x.powi(k as i32 - 1),
            move |x| (k * (k - 1)) as f64 * x.powi(k as i32 - 2),
        )
    }

    pub fn exp() -> C2Fn {
        C2Fn::new(f64::exp, f64::exp, f64::exp)
    }

    pub fn cosh() -> C2Fn {
        C2Fn::new(f64::cosh, f64::sinh, f64::cosh)
    }
}

/// Relative gap below which two nodes are treated as coincident and the
/// divided difference switches to its derivative (confluent) form.
const CONFLUENT_GAP: f64 = 1e-7;

/// Triangular divided-difference table over a node list, with confluent
/// entries filled from derivatives when nodes coincide.
///
/// Entry conventions: `f^[0](x) = f(x)`, `f^[1](x,x) = f′(x)`,
/// `f^[2](x,x,x) = f″(x)/2`. Nodes closer than a relative gap of `1e-7`
/// take the derivative branch evaluated at their midpoint, which is
/// second-order accurate where the recursive quotient has cancelled.
pub struct DividedDifferenceTable {
    points: Vec<f64>,
    /// `table[r]` holds `f^[r]` over consecutive node windows.
    table: Vec<Vec<f64>>,
}

impl DividedDifferenceTable {
    /// Builds orders `0..=order` over the given nodes (`order ≤ 2`,
    /// `order < points.len()`). Nodes are sorted internally so confluent
    /// runs are consecutive.
    pub fn new(f: &C2Fn, points: &[f64], order: usize) -> Result<DividedDifferenceTable> {
        if order > 2 {
            return Err(Error::Unsupported(
                "divided differences beyond second order are not needed here".into(),
            ));
        }
        if points.is_empty() || order >= points.len() {
            return Err(Error::InvalidParameter(format!(
                "divided-difference table needs more than {order} nodes, got {}",
                points.len()
            )));
        }
        let mut pts = points.to_vec();
        pts.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let mut table = vec![pts.iter().map(|&x| f.f(x)).collect::<Vec<f64>>()];
        for r in 1..=order {
            let prev = &table[r - 1];
            let mut row = Vec::with_capacity(pts.len() - r);
            for i in 0..pts.len() - r {
                row.push(divided_entry(f, &pts[i..=i + r], prev.get(i + 1), prev.get(i), r));
            }
            table.push(row);
        }
        Ok(DividedDifferenceTable {
            points: pts,
            table,
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// `f^[r]` over the window starting at sorted node `i`.
    pub fn value(&self, r: usize, i: usize) -> f64 {
        self.table[r][i]
    }

    /// The full-window value `f^[order](x_0, …, x_order)`.
    pub fn top(&self) -> f64 {
        self.table.last().unwrap()[0]
    }
}

fn divided_entry(f: &C2Fn, window: &[f64], hi: Option<&f64>, lo: Option<&f64>, r: usize) -> f64 {
    let (a, b) = (window[0], window[r]);
    let scale = 1.0 + a.abs().max(b.abs());
    if (b - a).abs() > CONFLUENT_GAP * scale {
        return (hi.unwrap() - lo.unwrap()) / (b - a);
    }
    let mid = 0.5 * (a + b);
    match r {
        1 => f.df(mid),
        2 => 0.5 * f.d2f(mid),
        _ => unreachable!("order capped at 2"),
    }
}

/// First divided difference of `f` with the confluent/derivative switch.
pub fn first_divided_difference(f: &C2Fn, a: f64, b: f64) -> f64 {
    let scale = 1.0 + a.abs().max(b.abs());
    if (b - a).abs() > CONFLUENT_GAP * scale {
        (f.f(b) - f.f(a)) / (b - a)
    } else {
        f.df(0.5 * (a + b))
    }
}

/// First divided difference of `f′`; the confluent value is `f″`.
fn derivative_divided_difference(f: &C2Fn, a: f64, b: f64) -> f64 {
    let scale = 1.0 + a.abs().max(b.abs());
    if (b - a).abs() > CONFLUENT_GAP * scale {
        (f.df(b) - f.df(a)) / (b - a)
    } else {
        f.d2f(0.5 * (a + b))
    }
}

fn ensure_hermitian(a: &CMat, what: &str) -> Result<()> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidParameter(format!("{what} must be square")));
    }
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
            scale = scale.max(a[(i, j)].norm());
        }
    }
    if worst > 1e-10 * (1.0 + scale) {
        return Err(Error::InvalidParameter(format!(
            "{what} is not Hermitian (defect {worst:.3e})"
        )));
    }
    Ok(())
}

/// Eigendecomposition of a Hermitian matrix: ascending eigenvalues and the
/// matching unitary of column eigenvectors.
fn hermitian_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    // Symmetrize first: the eigensolver assumes exact Hermitian input.
    let n = a.nrows();
    let mut sym = a.clone();
    for i in 0..n {
        for j in 0..n {
            sym[(i, j)] = 0.5 * (a[(i, j)] + a[(j, i)].conj());
        }
    }
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Ascending eigenvalues of a self-adjoint matrix.
pub fn hermitian_eigenvalues(a: &CMat) -> Result<Vec<f64>> {
    ensure_hermitian(a, "matrix")?;
    Ok(hermitian_eigen(a).0)
}

/// `d/dt Tr f(A + tH) |_{t=0} = Tr(f′(A)H)` by functional calculus.
pub fn trace_derivative(f: &C2Fn, a: &CMat, h: &CMat) -> Result<f64> {
    ensure_hermitian(a, "argument matrix")?;
    ensure_hermitian(h, "direction matrix")?;
    let (lam, u) = hermitian_eigen(a);
    let hu = u.adjoint() * h * &u;
    Ok((0..a.nrows()).map(|i| f.df(lam[i]) * hu[(i, i)].re).sum())
}

/// Second derivative `∂²/∂s∂t Tr f(A + sH₁ + tH₂)` at the origin:
/// `Σ_{ij} (f′)^[1](λ_i, λ_j)·(U*H₁U)_{ij}(U*H₂U)_{ji}`.
pub fn trace_hessian(f: &C2Fn, a: &CMat, h1: &CMat, h2: &CMat) -> Result<f64> {
    ensure_hermitian(a, "argument matrix")?;
    ensure_hermitian(h1, "first direction")?;
    ensure_hermitian(h2, "second direction")?;
    let (lam, u) = hermitian_eigen(a);
    let b1 = u.adjoint() * h1 * &u;
    let b2 = u.adjoint() * h2 * &u;
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let dd = derivative_divided_difference(f, lam[i], lam[j]);
            acc += dd * (b1[(i, j)] * b2[(j, i)]).re;
        }
    }
    Ok(acc)
}

/// Orthonormal basis of the tangent space `su(n)`: `n²−1` skew-Hermitian
/// traceless matrices `Y_k = i·X_k`, orthonormal for `Re Tr(A*B)`.
pub struct SuTangentBasis {
    n: usize,
    basis: Vec<CMat>,
}

impl SuTangentBasis {
    /// Generalized Gell-Mann construction: real and imaginary off-diagonal
    /// pairs scaled by `1/√2`, plus `n−1` diagonal matrices whose last
    /// entry is set to minus the float sum of the others, making the trace
    /// exactly zero.
    pub fn new(n: usize) -> Result<SuTangentBasis> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "su(n) basis needs n ≥ 2, got {n}"
            )));
        }
        let i = Complex64::new(0.0, 1.0);
        let s = 1.0 / 2.0f64.sqrt();
        let mut basis = Vec::with_capacity(n * n - 1);
        for j in 0..n {
            for k in j + 1..n {
                let mut re = CMat::zeros(n, n);
                re[(j, k)] = Complex64::new(s, 0.0);
                re[(k, j)] = Complex64::new(s, 0.0);
                basis.push(re.map(|z| i * z));
                let mut im = CMat::zeros(n, n);
                im[(j, k)] = Complex64::new(0.0, -s);
                im[(k, j)] = Complex64::new(0.0, s);
                basis.push(im.map(|z| i * z));
            }
        }
        for l in 1..n {
            let v = 1.0 / ((l * (l + 1)) as f64).sqrt();
            let mut d = CMat::zeros(n, n);
            let mut sum = 0.0;
            for j in 0..l {
                d[(j, j)] = Complex64::new(v, 0.0);
                sum += v;
            }
            d[(l, l)] = Complex64::new(-sum, 0.0);
            basis.push(d.map(|z| i * z));
        }
        Ok(SuTangentBasis { n, basis })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// The `k`-th tangent direction `Y_k` (skew-Hermitian, traceless).
    pub fn direction(&self, k: usize) -> &CMat {
        &self.basis[k]
    }
}

/// Eigen-angles of a unitary matrix in `(-π, π]` with matching eigenvector
/// columns, via the Cayley transform of a phase-shifted copy.
///
/// The shift `φ` is chosen so that `I + e^{-iφ}U` is comfortably
/// invertible; some candidate always works because the spectrum is finite.
pub fn eigenangles(u: &CMat) -> Result<(Vec<f64>, CMat)> {
    let n = u.nrows();
    if u.ncols() != n || n == 0 {
        return Err(Error::InvalidParameter("unitary must be square".into()));
    }
    let defect = (u.adjoint() * u - CMat::identity(n, n)).norm();
    if defect > 1e-8 * (n as f64) {
        return Err(Error::InvalidParameter(format!(
            "matrix is not unitary (defect {defect:.3e})"
        )));
    }
    let mut best: Option<(f64, f64)> = None;
    for &phi in &[0.0, 1.9106332362490186, 3.9760782859526024, 0.7853981633974483] {
        let shift = Complex64::from_polar(1.0, -phi);
        let m = CMat::identity(n, n) + u.map(|z| shift * z);
        let det = m.clone().lu().determinant().norm();
        if best.map_or(true, |(d, _)| det > d) {
            best = Some((det, phi));
        }
    }
    let (det, phi) = best.unwrap();
    if det < 1e-12 {
        return Err(Error::AmbiguousBranch(
            "unitary spectrum blocks every Cayley shift".into(),
        ));
    }
    let shift = Complex64::from_polar(1.0, -phi);
    let s = u.map(|z| shift * z);
    let inv = (CMat::identity(n, n) + &s)
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::AmbiguousBranch("Cayley transform not invertible".into()))?;
    let k = (CMat::identity(n, n) - &s) * inv;
    let k = k.map(|z| Complex64::new(0.0, 1.0) * z);
    let (kappa, vectors) = hermitian_eigen(&k);
    let angles: Vec<f64> = kappa
        .iter()
        .map(|&x| {
            let t = 2.0 * x.atan() + phi;
            // Wrap to (-π, π].
            let mut w = (t + PI).rem_euclid(2.0 * PI) - PI;
            if w == -PI {
                w = PI;
            }
            w
        })
        .collect();
    Ok((angles, vectors))
}

/// `Ψ(U) = Tr Q(U) = Σ_j q(θ_j)` for a circle potential.
pub fn su_potential_trace(q: &Potential, u: &CMat) -> Result<f64> {
    let (angles, _) = eigenangles(u)?;
    Ok(angles.iter().map(|&t| q.q(t)).sum())
}

/// Riemannian gradient of `Ψ(U) = Tr Q(U)` on `SU(n)` at `U`:
/// `i(Q′(U) − mean(q′)·I)`, traceless and skew-Hermitian, where `Q′(U)` is
/// functional calculus of the angle derivative on the eigenangles.
pub fn su_gradient(q: &Potential, u: &CMat) -> Result<CMat> {
    let n = u.nrows();
    let (angles, v) = eigenangles(u)?;
    let dq: Vec<f64> = angles.iter().map(|&t| q.dq(t)).collect();
    let mean = dq.iter().sum::<f64>() / n as f64;
    let diag = CMat::from_diagonal(&DVector::from_iterator(
        n,
        dq.iter().map(|&d| Complex64::new(0.0, d - mean)),
    ));
    Ok(&v * diag * v.adjoint())
}

/// Margin kept from the angle branch cut by the Hessian stencil.
const BRANCH_MARGIN: f64 = 0.05;

/// Outcome of a Hessian convexity check at one base point.
#[derive(Debug, Clone, Copy)]
pub struct HessianBound {
    /// Smallest eigenvalue of the finite-difference Hessian.
    pub eigmin: f64,
    /// Convexity parameter claimed for the potential.
    pub rho: f64,
}

impl HessianBound {
    /// Signed margin `eigmin − ρ`; admissible pairs keep this above `−1e-4`.
    pub fn slack(&self) -> f64 {
        self.eigmin - self.rho
    }

    pub fn satisfied(&self) -> bool {
        self.slack() >= -1e-4
    }
}

/// Smallest eigenvalue of the finite-difference Hessian of
/// `Ψ(U) = Tr Q(U)` in geodesic normal coordinates at `U`, packaged with
/// the convexity parameter `rho` claimed for `q` so callers can read the
/// margin of `Hess Ψ ≥ ρ` directly.
///
/// Entries come from the second derivative along `t ↦ U e^{t(Y_k ± Y_l)}`
/// with central differences at step `1e-4` and polarization for the off
/// diagonal. Errors out when an eigenangle sits within `0.05` of the cut
/// at `±π`, where `Ψ` is not smooth for lifted potentials; retry at a
/// different base point in that case.
pub fn hessian_lower_bound(
    q: &Potential,
    rho: f64,
    u: &CMat,
    basis: &SuTangentBasis,
) -> Result<HessianBound> {
    let (angles, _) = eigenangles(u)?;
    if angles.iter().any(|&t| PI - t.abs() < BRANCH_MARGIN) {
        return Err(Error::AmbiguousBranch(format!(
            "eigenangle within {BRANCH_MARGIN} of the cut; move the base point"
        )));
    }
    let dim = basis.dim();
    let eps = 1e-4;
    let psi = |m: &CMat| -> Result<f64> { su_potential_trace(q, m) };
    let second = |dir: &CMat| -> Result<f64> {
        let step = unitary_exp(&dir.map(|z| z * Complex64::new(eps, 0.0)))?;
        let plus = psi(&(u * &step))?;
        let minus = psi(&(u * step.adjoint()))?;
        let base = psi(u)?;
        Ok((plus - 2.0 * base + minus) / (eps * eps))
    };
    let mut hess = DMatrix::<f64>::zeros(dim, dim);
    for k in 0..dim {
        hess[(k, k)] = second(basis.direction(k))?;
    }
    for k in 0..dim {
        for l in k + 1..dim {
            let sum_dir = basis.direction(k) + basis.direction(l);
            let diff_dir = basis.direction(k) - basis.direction(l);
            let v = 0.25 * (second(&sum_dir)? - second(&diff_dir)?);
            hess[(k, l)] = v;
            hess[(l, k)] = v;
        }
    }
    let eig = hess.symmetric_eigen();
    let eigmin = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(HessianBound { eigmin, rho })
}

/// Exponential of a skew-Hermitian matrix via the Hermitian generator.
pub fn unitary_exp(y: &CMat) -> Result<CMat> {
    // Y = iX with X Hermitian; exp(Y) = V diag(e^{iλ}) V*.
    let x = y.map(|z| z * Complex64::new(0.0, -1.0));
    ensure_hermitian(&x, "exponential generator (i·Y)")?;
    let (lam, v) = hermitian_eigen(&x);
    let n = y.nrows();
    let diag = CMat::from_diagonal(&DVector::from_iterator(
        n,
        lam.iter().map(|&t| Complex64::from_polar(1.0, t)),
    ));
    Ok(&v * diag * v.adjoint())
}

/// Ricci curvature constant of `SU(n)` in the plain Hilbert-Schmidt
/// metric: the scalar `n/2` (times the identity on the `n²−1` tangent).
pub fn ricci_su(n: usize) -> f64 {
    n as f64 / 2.0
}

/// Geodesic distance on `SU(n)`: the Hilbert-Schmidt norm of the minimal
/// traceless self-adjoint logarithm of `U*V`.
///
/// Principal angles of `U*V` sum to `2πm`; the branch correction subtracts
/// full turns from the `m` largest angles (or adds to the `m` smallest),
/// which minimizes the norm among trace-compatible branches. Eigenangles
/// within `1e-6` of `±π` are rejected as ambiguous.
pub fn geodesic_distance_su(u: &CMat, v: &CMat) -> Result<f64> {
    let w = u.adjoint() * v;
    let (mut angles, _) = eigenangles(&w)?;
    if angles.iter().any(|&t| PI - t.abs() < 1e-6) {
        return Err(Error::AmbiguousBranch(
            "antipodal spectrum in U*V; geodesic branch ambiguous".into(),
        ));
    }
    let total: f64 = angles.iter().sum();
    let m = (total / (2.0 * PI)).round();
    if (total - 2.0 * PI * m).abs() > 1e-6 {
        return Err(Error::Numerical(format!(
            "angle sum {total:.3e} is not a multiple of 2π; input not special unitary"
        )));
    }
    let m = m as i64;
    angles.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = angles.len();
    if m.unsigned_abs() as usize > n {
        return Err(Error::Numerical(format!("branch winding {m} out of range")));
    }
    if m > 0 {
        for j in 0..m as usize {
            angles[n - 1 - j] -= 2.0 * PI;
        }
    } else {
        for a in angles.iter_mut().take((-m) as usize) {
            *a += 2.0 * PI;
        }
    }
    Ok(angles.iter().map(|t| t * t).sum::<f64>().sqrt())
}

/// Squared gradient norm of the log relative density of two `SU(n)`
/// Coulomb ensembles at `U`: `n²Σ_j d_j² − n(Σ_j d_j)²` with
/// `d_j = q_μ′(θ_j) − q′(θ_j)` over the eigenangles. Invariant under
/// adding a constant to the derivative difference.
pub fn relative_fisher_matrix_norm(
    dq_mu: impl Fn(f64) -> f64,
    dq: impl Fn(f64) -> f64,
    u: &CMat,
) -> Result<f64> {
    let n = u.nrows() as f64;
    let (angles, _) = eigenangles(u)?;
    let d: Vec<f64> = angles.iter().map(|&t| dq_mu(t) - dq(t)).collect();
    let sum: f64 = d.iter().sum();
    let sum_sq: f64 = d.iter().map(|x| x * x).sum();
    Ok(n * n * sum_sq - n * sum * sum)
}

/// Haar-distributed special unitary matrix.
///
/// QR of a complex Gaussian matrix with the R-diagonal phase fix gives
/// Haar on `U(n)`; multiplying by the inverse principal `n`-th root of the
/// determinant is an `SU(n)`-equivariant retraction, so the pushforward is
/// Haar on `SU(n)`.
pub fn random_special_unitary(n: usize, rng: &mut impl Rng) -> CMat {
    use rand_distr::StandardNormal;
    let g = CMat::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = g.qr();
    let r_diag: Vec<Complex64> = (0..n).map(|i| qr.r()[(i, i)]).collect();
    let mut u = qr.q();
    for (j, d) in r_diag.iter().enumerate() {
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..n {
            u[(i, j)] *= phase;
        }
    }
    let det = u.clone().lu().determinant();
    let root = Complex64::from_polar(1.0, -det.arg() / n as f64);
    u.map(|z| z * root)
}
