//! Entropy and Fisher functionals on the line, the circle, and the
//! half-line.
//!
//! Entropy-side quantities are built on the exact log-kernel cell-pair
//! integrals from [`crate::quad`], so the only error against a smooth
//! density is the grid representation itself. Fisher-side quantities use
//! the cube of the density as the primary route wherever an identity
//! permits (no principal values involved) and Hilbert-transform routes as
//! independent cross-checks or, for relative versions, as the integrand.
//!
//! Conventions: `Σ(μ) = ∬ log|x−y| dμ dμ`; `χ(μ) = Σ(μ) + 3/4 + ½·log 2π`;
//! `Φ(μ) = (4π²/3)∫p³` on the line; `F(μ) = (1/3)(−1 + ∫p³ dζ)` on the
//! circle; `Φ⁺(μ) = (4π²/3)∫ y·p(y)³ dy` on the half-line. Relative
//! versions subtract the potential's derivative inside the square:
//! `Φ_Q = 4∫(Hp − Q′/2)² dμ`, `F_Q = ∫(Hp − Q′)² dμ − (∫Q′ dμ)²`,
//! `Φ⁺_Q = 4∫ x(Hp − Q′/2)² dμ`.

use crate::hilbert::{
    hilbert_circle_spectral, hilbert_halfline, hilbert_line_smooth,
    hilbert_line_smooth_at_offset,
};
#[cfg(test)]
use crate::hilbert::hilbert_circle_smooth;
use crate::measure::{symmetrize_sqrt, Domain, GridMeasure};
use crate::potential::Potential;
use crate::quad::{
    circulant_apply, f_log, gauss_legendre, log_cell_pair, toeplitz_quadratic_form,
    CircleLogKernel, LineLogKernel,
};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

/// Extended real value: finite, or the +∞ sentinel that several
/// functionals take off their natural domain. Kept out of float
/// arithmetic deliberately; serialized as a number or the string "+inf".
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    PlusInfinity,
}

impl ExtReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    /// The finite value, if any.
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::PlusInfinity => None,
        }
    }
}

impl From<f64> for ExtReal {
    fn from(v: f64) -> Self {
        ExtReal::Finite(v)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v:.12e}"),
            ExtReal::PlusInfinity => write!(f, "+inf"),
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(v) => s.serialize_f64(*v),
            ExtReal::PlusInfinity => s.serialize_str("+inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Tag(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(ExtReal::Finite(v)),
            Raw::Tag(t) if t == "+inf" => Ok(ExtReal::PlusInfinity),
            Raw::Tag(t) => Err(serde::de::Error::custom(format!(
                "expected a number or \"+inf\", got {t:?}"
            ))),
        }
    }
}

/// Which functional a [`FunctionalValue`] reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FunctionalName {
    Sigma,
    Chi,
    #[serde(rename = "E_Q")]
    EQ,
    #[serde(rename = "SigmaTilde_Q")]
    SigmaTildeQ,
    Phi,
    #[serde(rename = "Phi_Q")]
    PhiQ,
    F,
    #[serde(rename = "F_Q")]
    FQ,
    PhiPlus,
    #[serde(rename = "PhiPlus_Q")]
    PhiPlusQ,
    #[serde(rename = "SigmaTildePlus_Q")]
    SigmaTildePlusQ,
    #[serde(rename = "S_rel")]
    SRel,
    SigmaTwoMeasure,
}

impl FunctionalName {
    pub const ALL: [FunctionalName; 13] = [
        FunctionalName::Sigma,
        FunctionalName::Chi,
        FunctionalName::EQ,
        FunctionalName::SigmaTildeQ,
        FunctionalName::Phi,
        FunctionalName::PhiQ,
        FunctionalName::F,
        FunctionalName::FQ,
        FunctionalName::PhiPlus,
        FunctionalName::PhiPlusQ,
        FunctionalName::SigmaTildePlusQ,
        FunctionalName::SRel,
        FunctionalName::SigmaTwoMeasure,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FunctionalName::Sigma => "Sigma",
            FunctionalName::Chi => "Chi",
            FunctionalName::EQ => "E_Q",
            FunctionalName::SigmaTildeQ => "SigmaTilde_Q",
            FunctionalName::Phi => "Phi",
            FunctionalName::PhiQ => "Phi_Q",
            FunctionalName::F => "F",
            FunctionalName::FQ => "F_Q",
            FunctionalName::PhiPlus => "PhiPlus",
            FunctionalName::PhiPlusQ => "PhiPlus_Q",
            FunctionalName::SigmaTildePlusQ => "SigmaTildePlus_Q",
            FunctionalName::SRel => "S_rel",
            FunctionalName::SigmaTwoMeasure => "SigmaTwoMeasure",
        }
    }

    /// Whether the functional takes a potential argument.
    pub fn needs_potential(self) -> bool {
        matches!(
            self,
            FunctionalName::EQ
                | FunctionalName::SigmaTildeQ
                | FunctionalName::PhiQ
                | FunctionalName::FQ
                | FunctionalName::PhiPlusQ
                | FunctionalName::SigmaTildePlusQ
        )
    }

    /// Whether the functional compares against a second measure.
    pub fn needs_second_measure(self) -> bool {
        matches!(self, FunctionalName::SRel | FunctionalName::SigmaTwoMeasure)
    }
}

impl fmt::Display for FunctionalName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FunctionalName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FunctionalName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown functional {s:?}")))
    }
}

/// One evaluated functional, with a short digest of what it was applied to.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FunctionalValue {
    pub name: FunctionalName,
    pub value: ExtReal,
    pub inputs: String,
}

impl FunctionalValue {
    pub fn new(name: FunctionalName, value: impl Into<ExtReal>, inputs: impl Into<String>) -> Self {
        FunctionalValue {
            name,
            value: value.into(),
            inputs: inputs.into(),
        }
    }
}

fn same_grid(mu: &GridMeasure, nu: &GridMeasure) -> bool {
    mu.domain() == nu.domain() && mu.cells() == nu.cells()
}

/// `∬ log|x−y| dμ dν` with analytic cell-pair integrals.
///
/// Line and half-line measures may live on different grids (the cross-grid
/// path evaluates every cell pair exactly); circle measures must share one
/// grid. Mixing a circle with a line domain is a domain mismatch.
pub fn log_energy(mu: &GridMeasure, nu: &GridMeasure) -> Result<f64> {
    match (mu.domain().is_circle(), nu.domain().is_circle()) {
        (true, true) => {
            if !same_grid(mu, nu) {
                return Err(Error::Unsupported(
                    "circle log-energy requires both measures on the same grid".into(),
                ));
            }
            let n = mu.cells();
            let kernel = CircleLogKernel::new(n);
            let conv = circulant_apply(kernel.offsets(), nu.density());
            let form: f64 = conv
                .iter()
                .zip(mu.density())
                .map(|(c, p)| c * p)
                .sum();
            Ok(form / (4.0 * PI * PI))
        }
        (false, false) => {
            if same_grid(mu, nu) {
                let kernel = LineLogKernel::new(mu.cells(), mu.h());
                Ok(toeplitz_quadratic_form(
                    kernel.offsets(),
                    mu.density(),
                    nu.density(),
                ))
            } else {
                let mut acc = 0.0;
                for i in 0..mu.cells() {
                    let (a0, b0) = mu.cell_bounds(i);
                    let pi = mu.density()[i];
                    if pi == 0.0 {
                        continue;
                    }
                    for j in 0..nu.cells() {
                        let qj = nu.density()[j];
                        if qj == 0.0 {
                            continue;
                        }
                        let (a1, b1) = nu.cell_bounds(j);
                        acc += pi * qj * log_cell_pair(a0, b0, a1, b1);
                    }
                }
                Ok(acc)
            }
        }
        _ => Err(Error::DomainMismatch {
            expected: "matching domain families",
            got: "circle paired with line",
        }),
    }
}

/// `Σ(μ) = ∬ log|x−y| dμ dμ`.
pub fn sigma(mu: &GridMeasure) -> Result<f64> {
    log_energy(mu, mu)
}

/// Free entropy on the line: `χ(μ) = Σ(μ) + 3/4 + ½·log 2π`.
pub fn chi(mu: &GridMeasure) -> Result<f64> {
    if mu.domain().is_circle() {
        return Err(Error::DomainMismatch {
            expected: "line or halfline",
            got: "circle",
        });
    }
    Ok(sigma(mu)? + 0.75 + 0.5 * (2.0 * PI).ln())
}

fn potential_integral(mu: &GridMeasure, q: &Potential) -> Result<f64> {
    if !q.matches_domain(mu.domain()) {
        return Err(Error::DomainMismatch {
            expected: q.domain_label(),
            got: mu.domain().label(),
        });
    }
    Ok(mu.integrate(|x| q.q(x)))
}

/// Weighted energy `E_Q(μ) = −Σ(μ) + ∫Q dμ`.
pub fn weighted_energy(mu: &GridMeasure, q: &Potential) -> Result<f64> {
    Ok(-sigma(mu)? + potential_integral(mu, q)?)
}

/// Relative free entropy `Σ̃_Q(μ) = −Σ(μ) + ∫Q dμ + B`.
///
/// `B` is the equilibrium constant `B(Q)` (or `B⁺(Q)` on the half-line) and
/// must be supplied explicitly so its provenance (closed form or solver)
/// stays auditable.
pub fn relative_free_entropy(mu: &GridMeasure, q: &Potential, b: f64) -> Result<f64> {
    Ok(weighted_energy(mu, q)? + b)
}

/// Two-measure free relative entropy
/// `Σ(μ,ν) = −∬ log|x−y| d(μ−ν)(x) d(μ−ν)(y)`.
///
/// The log kernel is negative semidefinite on signed measures of total mass
/// zero, so this is ≥ 0 and vanishes only at μ = ν; with `ν = μ_Q` and
/// `supp μ ⊆ supp μ_Q` it reproduces `Σ̃_Q(μ)`.
pub fn free_relative_entropy_two_measures(mu: &GridMeasure, nu: &GridMeasure) -> Result<f64> {
    Ok(2.0 * log_energy(mu, nu)? - log_energy(mu, mu)? - log_energy(nu, nu)?)
}

/// Classical relative entropy `S(μ,ν) = ∫ log(dμ/dν) dμ` on one grid.
///
/// Returns the +∞ sentinel when ν vanishes on a cell carrying μ-mass;
/// `0·log 0` counts as zero.
pub fn relative_entropy(mu: &GridMeasure, nu: &GridMeasure) -> Result<ExtReal> {
    if !same_grid(mu, nu) {
        return Err(Error::DomainMismatch {
            expected: "both measures on one grid",
            got: "mismatched grids",
        });
    }
    let w = mu.cell_weight();
    let mut acc = 0.0;
    for (&p, &q) in mu.density().iter().zip(nu.density()) {
        if p == 0.0 {
            continue;
        }
        if q == 0.0 {
            return Ok(ExtReal::PlusInfinity);
        }
        acc += p * (p / q).ln() * w;
    }
    Ok(ExtReal::Finite(acc))
}

/// Free Fisher information on the line, `Φ(μ) = (4π²/3)∫p³ dx`: the
/// cube-integral route, exact for the grid density.
pub fn fisher_r(mu: &GridMeasure) -> Result<f64> {
    match mu.domain() {
        Domain::Line { .. } => Ok(4.0 * PI * PI / 3.0 * mu.cube_integral()),
        other => Err(Error::DomainMismatch {
            expected: "line",
            got: other.label(),
        }),
    }
}

/// Hilbert-route Fisher information `4∫(Hp)² dμ` on the line, via the
/// piecewise-linear transform. Cross-check for [`fisher_r`], never the
/// primary value.
pub fn fisher_r_hilbert(mu: &GridMeasure) -> Result<f64> {
    match mu.domain() {
        Domain::Line { .. } => {}
        other => {
            return Err(Error::DomainMismatch {
                expected: "line",
                got: other.label(),
            })
        }
    }
    let hp = hilbert_line_smooth(mu)?;
    let h = mu.h();
    Ok(4.0
        * hp.iter()
            .zip(mu.density())
            .map(|(t, p)| t * t * p * h)
            .sum::<f64>())
}

/// Shared quadrature engine: `4·∫ weight(x)·(Hp(x) − shift(x))² dμ(x)` on a
/// line or half-line grid, with `Hp` from the piecewise-linear kernel.
///
/// Per cell the integrand is polynomial-smooth except for the kernel's
/// kinks at cell midpoints, so fixed Gauss–Legendre nodes per cell suffice;
/// each node offset costs one Toeplitz convolution for all cells at once.
pub fn weighted_fisher_line(
    mu: &GridMeasure,
    shift: impl Fn(f64) -> f64,
    weight: impl Fn(f64) -> f64,
) -> Result<f64> {
    if mu.domain().is_circle() {
        return Err(Error::DomainMismatch {
            expected: "line or halfline",
            got: "circle",
        });
    }
    let (nodes, wts) = gauss_legendre(8);
    let h = mu.h();
    let mut acc = 0.0;
    for (xi, wg) in nodes.iter().zip(&wts) {
        let o = 0.5 * h * xi;
        let hp = hilbert_line_smooth_at_offset(mu, o)?;
        for i in 0..mu.cells() {
            let x = mu.midpoint(i) + o;
            let d = hp[i] - shift(x);
            acc += wg * weight(x) * d * d * mu.density()[i];
        }
    }
    Ok(4.0 * acc * 0.5 * h)
}

/// Relative free Fisher information on the line,
/// `Φ_Q(μ) = 4∫(Hp − Q′/2)² dμ`.
pub fn fisher_rel_r(mu: &GridMeasure, q: &Potential) -> Result<f64> {
    match mu.domain() {
        Domain::Line { .. } => {}
        other => {
            return Err(Error::DomainMismatch {
                expected: "line",
                got: other.label(),
            })
        }
    }
    if !q.matches_domain(mu.domain()) {
        return Err(Error::DomainMismatch {
            expected: q.domain_label(),
            got: mu.domain().label(),
        });
    }
    weighted_fisher_line(mu, |x| 0.5 * q.dq(x), |_| 1.0)
}

/// Circle Fisher information `F(μ) = (1/3)(−1 + ∫p³ dζ)`: the cube route.
pub fn fisher_t(mu: &GridMeasure) -> Result<f64> {
    if !mu.domain().is_circle() {
        return Err(Error::DomainMismatch {
            expected: "circle",
            got: mu.domain().label(),
        });
    }
    Ok((mu.cube_integral() - 1.0) / 3.0)
}

/// Hilbert-route circle Fisher information `∫(Hp)² dμ`, using the spectral
/// transform. Cross-check for [`fisher_t`].
pub fn fisher_t_hilbert(mu: &GridMeasure) -> Result<f64> {
    let hp = hilbert_circle_spectral(mu)?;
    let w = mu.cell_weight();
    Ok(hp
        .iter()
        .zip(mu.density())
        .map(|(t, p)| t * t * p * w)
        .sum())
}

/// Relative circle Fisher information
/// `F_Q(μ) = ∫(Hp − Q′)² dμ − (∫Q′ dμ)²`, where `Q′` differentiates
/// `Q(e^{iθ})` in θ.
pub fn fisher_rel_t(mu: &GridMeasure, q: &Potential) -> Result<f64> {
    if !mu.domain().is_circle() {
        return Err(Error::DomainMismatch {
            expected: "circle",
            got: mu.domain().label(),
        });
    }
    if !q.matches_domain(mu.domain()) {
        return Err(Error::DomainMismatch {
            expected: q.domain_label(),
            got: mu.domain().label(),
        });
    }
    let hp = hilbert_circle_spectral(mu)?;
    let w = mu.cell_weight();
    let mut quad = 0.0;
    let mut mean_dq = 0.0;
    for i in 0..mu.cells() {
        let dq = q.dq(mu.midpoint(i));
        let d = hp[i] - dq;
        quad += d * d * mu.density()[i] * w;
        mean_dq += dq * mu.density()[i] * w;
    }
    Ok(quad - mean_dq * mean_dq)
}

/// Half-line Fisher information `Φ⁺(μ) = (4π²/3)∫ y·p(y)³ dy`: the cube
/// route, exact for the grid density (equivalent to `Φ(μ̃)` under the
/// square-root symmetrization).
pub fn fisher_halfline(mu: &GridMeasure) -> Result<f64> {
    match mu.domain() {
        Domain::HalfLine { .. } => {}
        other => {
            return Err(Error::DomainMismatch {
                expected: "halfline",
                got: other.label(),
            })
        }
    }
    let h = mu.h();
    let total: f64 = (0..mu.cells())
        .map(|i| {
            let p = mu.density()[i];
            mu.midpoint(i) * p * p * p * h
        })
        .sum();
    Ok(4.0 * PI * PI / 3.0 * total)
}

/// Hilbert-route half-line Fisher information `4∫ y·(Hp)² dμ`, with the
/// transform from the symmetrized square-root route. Cross-check only;
/// flagged cells near the origin are included as computed.
pub fn fisher_halfline_hilbert(mu: &GridMeasure) -> Result<f64> {
    let t = hilbert_halfline(mu)?;
    let h = mu.h();
    Ok(4.0
        * t.values
            .iter()
            .enumerate()
            .map(|(i, v)| mu.midpoint(i) * v * v * mu.density()[i] * h)
            .sum::<f64>())
}

/// Relative half-line Fisher information
/// `Φ⁺_Q(μ) = 4∫ x·(Hp − Q′/2)² dμ`.
///
/// Computed through the symmetrization identity `Φ⁺_Q(μ) = Φ_{Q̃}(μ̃)` with
/// `Q̃(x) = ½Q(x²)`, which turns the weighted half-line integral into an
/// unweighted line integral handled by [`weighted_fisher_line`].
pub fn fisher_rel_halfline(mu: &GridMeasure, q: &Potential) -> Result<f64> {
    match mu.domain() {
        Domain::HalfLine { .. } => {}
        other => {
            return Err(Error::DomainMismatch {
                expected: "halfline",
                got: other.label(),
            })
        }
    }
    if !q.matches_domain(mu.domain()) {
        return Err(Error::DomainMismatch {
            expected: q.domain_label(),
            got: mu.domain().label(),
        });
    }
    let tilde = symmetrize_sqrt(mu, 2 * mu.cells())?;
    // Q̃′(x) = x·Q′(x²).
    weighted_fisher_line(&tilde, |x| 0.5 * x * q.dq(x * x), |_| 1.0)
}

/// Direct-route relative half-line Fisher information: midpoint quadrature
/// of `4∫ y(Hp − Q′/2)² dμ` with the transform values of
/// [`hilbert_halfline`]. Cross-check for [`fisher_rel_halfline`].
pub fn fisher_rel_halfline_direct(mu: &GridMeasure, q: &Potential) -> Result<f64> {
    if !q.matches_domain(mu.domain()) {
        return Err(Error::DomainMismatch {
            expected: q.domain_label(),
            got: mu.domain().label(),
        });
    }
    let t = hilbert_halfline(mu)?;
    let h = mu.h();
    let mut acc = 0.0;
    for i in 0..mu.cells() {
        let y = mu.midpoint(i);
        let d = t.values[i] - 0.5 * q.dq(y);
        acc += y * d * d * mu.density()[i] * h;
    }
    Ok(4.0 * acc)
}

/// The log potential `Q_μ(x) = 2∫ log|x−y| dμ(y)` of a grid measure,
/// tabulated at the grid midpoints and evaluable anywhere via the analytic
/// cell integrals.
#[derive(Clone, Debug)]
pub struct LogPotential {
    mu: GridMeasure,
    values: Vec<f64>,
}

impl LogPotential {
    /// Values at the grid midpoints of the source measure.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The source measure's midpoints (evaluation abscissae for `values`).
    pub fn midpoints(&self) -> Vec<f64> {
        self.mu.midpoints()
    }

    /// Evaluate at an arbitrary point (angle on the circle).
    pub fn at(&self, x: f64) -> f64 {
        let n = self.mu.cells();
        let mut acc = 0.0;
        if self.mu.domain().is_circle() {
            let lam = crate::quad::circle_log_antiderivative;
            for j in 0..n {
                let (a, b) = self.mu.cell_bounds(j);
                acc += self.mu.density()[j] * (lam(x - a) - lam(x - b));
            }
            2.0 * acc / (2.0 * PI)
        } else {
            for j in 0..n {
                let (a, b) = self.mu.cell_bounds(j);
                acc += self.mu.density()[j] * (f_log(x - a) - f_log(x - b));
            }
            2.0 * acc
        }
    }
}

/// Compute the log potential of `mu` (any domain).
pub fn log_potential(mu: &GridMeasure) -> LogPotential {
    let n = mu.cells();
    let h = mu.h();
    let values = if mu.domain().is_circle() {
        let lam = crate::quad::circle_log_antiderivative;
        let offsets: Vec<f64> = (0..n)
            .map(|k| {
                let w = k as f64 * h;
                lam(w + 0.5 * h) - lam(w - 0.5 * h)
            })
            .collect();
        circulant_apply(&offsets, mu.density())
            .into_iter()
            .map(|v| 2.0 * v / (2.0 * PI))
            .collect()
    } else {
        let offsets: Vec<f64> = (0..n)
            .map(|k| {
                let w = k as f64 * h;
                f_log(w + 0.5 * h) - f_log(w - 0.5 * h)
            })
            .collect();
        let op = crate::quad::ToeplitzOperator::from_symmetric_offsets(&offsets);
        op.apply(mu.density()).into_iter().map(|v| 2.0 * v).collect()
    };
    LogPotential {
        mu: mu.clone(),
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{
        make_nu_lambda, make_power_density, make_semicircle, make_spike, make_uniform,
        pushforward_sqrt,
    };
    use approx::assert_abs_diff_eq;

    fn scaled_semicircle(alpha: f64, cells: usize) -> GridMeasure {
        // γ_{0,2/√α}: the semicircle of radius 2/√α.
        make_semicircle(2.0 / alpha.sqrt(), cells).unwrap()
    }

    #[test]
    fn sigma_of_semicircle() {
        let mu = make_semicircle(2.0, 4096).unwrap();
        assert_abs_diff_eq!(sigma(&mu).unwrap(), -0.25, epsilon = 1e-6);
    }

    #[test]
    fn sigma_of_cosine_family() {
        // Midpoint sampling of the density carries an O(h²) representation
        // error near 5e-8 at 2048 cells; the kernel itself is exact.
        for lambda in [4.0, 8.0] {
            let mu = make_nu_lambda(lambda, 2048).unwrap();
            assert_abs_diff_eq!(
                sigma(&mu).unwrap(),
                -1.0 / (lambda * lambda),
                epsilon = 2e-7
            );
        }
    }

    #[test]
    fn sigma_of_uniform_measures() {
        let circle = make_uniform(Domain::Circle, 1024).unwrap();
        assert_abs_diff_eq!(sigma(&circle).unwrap(), 0.0, epsilon = 1e-12);
        let unit = make_uniform(Domain::Line { a: 0.0, b: 1.0 }, 2048).unwrap();
        assert_abs_diff_eq!(sigma(&unit).unwrap(), -1.5, epsilon = 1e-9);
    }

    #[test]
    fn circle_energy_matches_fourier_series() {
        // Σ(μ) = −Σ_{k≥1} |μ̂_k|²/k. The grid measure is piecewise constant,
        // so its true coefficients are the midpoint DFT damped by the cell
        // smearing factor sinc(kh/2) and alias with period n; summing the
        // aliased series gives an independent spectral oracle that matches
        // the cell-pair kernel to roundoff.
        let mu = GridMeasure::from_fn(Domain::Circle, 1024, |t| {
            (0.7 * t.sin() - 0.2 * (3.0 * t).cos()).exp()
        })
        .unwrap();
        let n = mu.cells();
        let mut dft = vec![(0.0, 0.0); n];
        for (m, slot) in dft.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for i in 0..n {
                let t = mu.midpoint(i);
                re += mu.density()[i] * (m as f64 * t).cos();
                im += mu.density()[i] * (m as f64 * t).sin();
            }
            *slot = (re / n as f64, im / n as f64);
        }
        let mut by_series = 0.0;
        for k in 1..=4 * n {
            let (re, im) = dft[k % n];
            let x = k as f64 * PI / n as f64;
            let sinc = x.sin() / x;
            by_series -= (re * re + im * im) * sinc * sinc / k as f64;
        }
        assert_abs_diff_eq!(sigma(&mu).unwrap(), by_series, epsilon = 1e-10);
    }

    #[test]
    fn chi_of_semicircle() {
        let mu = make_semicircle(2.0, 4096).unwrap();
        let expected = 0.5 + 0.5 * (2.0 * PI).ln();
        assert_abs_diff_eq!(chi(&mu).unwrap(), expected, epsilon = 1e-6);
        // Translation invariance of the log kernel: shift the window.
        let shifted = GridMeasure::new(
            Domain::Line { a: -1.0, b: 3.0 },
            mu.density().to_vec(),
        )
        .unwrap();
        assert_abs_diff_eq!(chi(&shifted).unwrap(), expected, epsilon = 1e-6);
    }

    #[test]
    fn weighted_energy_closed_forms() {
        let mu = make_semicircle(2.0, 2048).unwrap();
        let q = Potential::quadratic_line(1.0).unwrap();
        assert_abs_diff_eq!(weighted_energy(&mu, &q).unwrap(), 0.75, epsilon = 1e-5);

        let uniform = make_uniform(Domain::Circle, 512).unwrap();
        let zero = Potential::zero("circle");
        assert_abs_diff_eq!(weighted_energy(&uniform, &zero).unwrap(), 0.0, epsilon = 1e-12);

        // E_Q(ν_λ) = −Σ(ν_λ) + ∫Q dν_λ = 1/λ² − 2/λ².
        let lambda = 4.0;
        let nu = make_nu_lambda(lambda, 2048).unwrap();
        let qc = Potential::cosine_circle(lambda).unwrap();
        assert_abs_diff_eq!(
            weighted_energy(&nu, &qc).unwrap(),
            -1.0 / (lambda * lambda),
            epsilon = 2e-7
        );
    }

    #[test]
    fn relative_free_entropy_closed_forms() {
        // Σ̃_Q(γ_{0,2/√α}) = ½logα + ρ/(2α) − ½logρ − ½ for Q = ρx²/2,
        // with B(Q) = −½logρ − 3/4.
        let (rho, alpha) = (1.0, 2.0);
        let mu = scaled_semicircle(alpha, 4096);
        let q = Potential::quadratic_line(rho).unwrap();
        let b = -0.5 * rho.ln() - 0.75;
        let expected = 0.5 * alpha.ln() + rho / (2.0 * alpha) - 0.5 * rho.ln() - 0.5;
        assert_abs_diff_eq!(
            relative_free_entropy(&mu, &q, b).unwrap(),
            expected,
            epsilon = 1e-5
        );

        // Vanishes at the minimizer.
        let gamma = make_semicircle(2.0, 4096).unwrap();
        assert_abs_diff_eq!(
            relative_free_entropy(&gamma, &q, b).unwrap(),
            0.0,
            epsilon = 1e-5
        );

        // Σ̃_Q(ν_α) = (1/α − 1/λ)² with B = 1/λ² for the cosine potential.
        let (lambda, alpha) = (8.0, 4.0);
        let nu = make_nu_lambda(alpha, 2048).unwrap();
        let qc = Potential::cosine_circle(lambda).unwrap();
        assert_abs_diff_eq!(
            relative_free_entropy(&nu, &qc, 1.0 / (lambda * lambda)).unwrap(),
            (1.0 / alpha - 1.0 / lambda) * (1.0 / alpha - 1.0 / lambda),
            epsilon = 2e-7
        );
    }

    #[test]
    fn two_measure_entropy_matches_relative_form() {
        // Σ(μ, μ_Q) = Σ̃_Q(μ) when supp μ ⊆ supp μ_Q; grids differ, which
        // exercises the cross-grid cell-pair path.
        let alpha = 2.0;
        let mu = scaled_semicircle(alpha, 1536);
        let gamma = make_semicircle(2.0, 2048).unwrap();
        let two = free_relative_entropy_two_measures(&mu, &gamma).unwrap();
        let expected = 0.5 * alpha.ln() + 1.0 / (2.0 * alpha) - 0.5;
        assert_abs_diff_eq!(two, expected, epsilon = 1e-4);
        // Symmetry and vanishing diagonal.
        let flipped = free_relative_entropy_two_measures(&gamma, &mu).unwrap();
        assert_abs_diff_eq!(two, flipped, epsilon = 1e-12);
        assert_abs_diff_eq!(
            free_relative_entropy_two_measures(&gamma, &gamma).unwrap(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn relative_entropy_closed_forms() {
        let nu = make_nu_lambda(4.0, 2048).unwrap();
        let uniform = make_uniform(Domain::Circle, 2048).unwrap();
        assert_eq!(relative_entropy(&nu, &nu).unwrap(), ExtReal::Finite(0.0));

        // S(ν_λ, uniform), λ=4: closed form via the log integral of the
        // cosine density; the periodic midpoint sum is spectrally accurate.
        let lambda: f64 = 4.0;
        let root = (1.0 - 4.0 / (lambda * lambda)).sqrt();
        let expected = (0.5 * (1.0 + root)).ln() + 1.0
            + 4.0 / (lambda * (lambda * lambda - 4.0).sqrt())
            - 1.0 / root;
        let got = relative_entropy(&nu, &uniform).unwrap().finite().unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-10);

        // Spike arcs of height n: S(μ_k(n), uniform) = log n exactly.
        let spike = make_spike(2, 16, 2048).unwrap();
        let uniform = make_uniform(Domain::Circle, 2048).unwrap();
        let got = relative_entropy(&spike, &uniform).unwrap().finite().unwrap();
        assert_abs_diff_eq!(got, (16.0f64).ln(), epsilon = 1e-12);

        // ν carrying mass where μ vanishes stays finite the other way.
        assert_eq!(
            relative_entropy(&uniform, &spike).unwrap(),
            ExtReal::PlusInfinity
        );
    }

    #[test]
    fn relative_entropy_joint_convexity_spot_check() {
        let a = make_nu_lambda(4.0, 512).unwrap();
        let b = make_nu_lambda(8.0, 512).unwrap();
        let nu = GridMeasure::from_fn(Domain::Circle, 512, |t| (0.4 * t.cos()).exp()).unwrap();
        let mix_density: Vec<f64> = a
            .density()
            .iter()
            .zip(b.density())
            .map(|(x, y)| 0.5 * (x + y))
            .collect();
        let mix = GridMeasure::new(Domain::Circle, mix_density).unwrap();
        let lhs = relative_entropy(&mix, &nu).unwrap().finite().unwrap();
        let rhs = 0.5 * relative_entropy(&a, &nu).unwrap().finite().unwrap()
            + 0.5 * relative_entropy(&b, &nu).unwrap().finite().unwrap();
        assert!(lhs <= rhs + 1e-12, "{lhs} > {rhs}");
    }

    #[test]
    fn fisher_line_routes_agree() {
        // Φ(γ_{0,2}) = 1; the cube route is primary and the Hilbert route
        // must agree within the corpus bound.
        let mu = make_semicircle(2.0, 4096).unwrap();
        let cube = fisher_r(&mu).unwrap();
        assert_abs_diff_eq!(cube, 1.0, epsilon = 1e-4);
        let hil = fisher_r_hilbert(&mu).unwrap();
        assert!(
            (cube - hil).abs() <= 1e-5 * (1.0 + cube),
            "routes differ: {cube} vs {hil}"
        );
    }

    #[test]
    fn relative_fisher_line_closed_forms() {
        // Φ_Q(γ_{0,2/√α}) = (α−ρ)²/α for Q = ρx²/2.
        let (rho, alpha) = (1.0, 4.0);
        let mu = scaled_semicircle(alpha, 4096);
        let q = Potential::quadratic_line(rho).unwrap();
        let expected = (alpha - rho) * (alpha - rho) / alpha;
        let got = fisher_rel_r(&mu, &q).unwrap();
        assert!(
            (got - expected).abs() / expected < 1e-3,
            "{got} vs {expected}"
        );

        // Zero at the minimizer.
        let gamma = make_semicircle(2.0, 4096).unwrap();
        let at_min = fisher_rel_r(&gamma, &q).unwrap();
        assert!(at_min.abs() < 1e-5, "Φ_Q(μ_Q) = {at_min}");
        assert!(at_min >= -1e-9);
    }

    #[test]
    fn fisher_circle_routes_and_closed_forms() {
        let uniform = make_uniform(Domain::Circle, 512).unwrap();
        assert_abs_diff_eq!(fisher_t(&uniform).unwrap(), 0.0, epsilon = 1e-14);

        let alpha = 4.0;
        let nu = make_nu_lambda(alpha, 2048).unwrap();
        let expected = 2.0 / (alpha * alpha);
        let cube = fisher_t(&nu).unwrap();
        let hil = fisher_t_hilbert(&nu).unwrap();
        assert_abs_diff_eq!(cube, expected, epsilon = 1e-7);
        assert_abs_diff_eq!(hil, expected, epsilon = 1e-7);
        assert!((cube - hil).abs() <= 1e-5 * (1.0 + cube));
    }

    #[test]
    fn relative_fisher_circle_closed_forms() {
        // F_Q(ν_α) = 2(1/α − 1/λ)².
        let (lambda, alpha) = (8.0, 4.0);
        let nu = make_nu_lambda(alpha, 2048).unwrap();
        let q = Potential::cosine_circle(lambda).unwrap();
        let d = 1.0 / alpha - 1.0 / lambda;
        assert_abs_diff_eq!(fisher_rel_t(&nu, &q).unwrap(), 2.0 * d * d, epsilon = 1e-8);

        // F_Q(μ_Q) = 0 at α = λ.
        let at_min = fisher_rel_t(&make_nu_lambda(lambda, 2048).unwrap(), &q).unwrap();
        assert!(at_min.abs() < 1e-10, "F_Q(ν_λ) = {at_min}");
    }

    #[test]
    fn fisher_halfline_power_density_family() {
        // p = (α+1)x^α on (0,1]: Φ = π²·4(α+1)³/(3(3α+1)) and
        // Φ⁺ = π²·4(α+1)³/(3(3α+2)); at α=1 the factors are 8/3 and 32/15.
        let mu = make_power_density(1.0, 2048).unwrap();
        let phi_plus = fisher_halfline(&mu).unwrap();
        assert!(
            (phi_plus - PI * PI * 32.0 / 15.0).abs() / phi_plus < 1e-6,
            "Φ⁺ = {phi_plus}"
        );

        // The line Fisher of the same density placed on a line grid.
        let line = GridMeasure::new(
            Domain::Line { a: 0.0, b: 1.0 },
            mu.density().to_vec(),
        )
        .unwrap();
        let phi = fisher_r(&line).unwrap();
        assert!((phi - PI * PI * 8.0 / 3.0).abs() / phi < 1e-6, "Φ = {phi}");

        // Hilbert cross-route for Φ⁺ (looser: interpolation + edge cells).
        let hil = fisher_halfline_hilbert(&mu).unwrap();
        assert!(
            (phi_plus - hil).abs() / phi_plus < 1e-3,
            "{phi_plus} vs {hil}"
        );

        // Φ⁺(μ) = Φ(μ̃) under symmetrization, cube routes on both sides.
        let tilde = symmetrize_sqrt(&mu, 4096).unwrap();
        let phi_tilde = fisher_r(&tilde).unwrap();
        assert!(
            (phi_plus - phi_tilde).abs() / phi_plus < 1e-5,
            "{phi_plus} vs {phi_tilde}"
        );
    }

    #[test]
    fn relative_fisher_halfline_routes_and_minimizer() {
        // Quarter-circle minimizer for Q(x) = x, ρ = 1: Φ⁺_Q(μ_Q) = 0.
        let n = 2048;
        let h = 4.0 / n as f64;
        let mass = |y: f64| {
            let phi = (0.5 * y.sqrt()).asin();
            (phi + phi.sin() * phi.cos()) * 2.0 / PI
        };
        let density: Vec<f64> = (0..n)
            .map(|i| (mass((i as f64 + 1.0) * h) - mass(i as f64 * h)) / h)
            .collect();
        let min = GridMeasure::new(Domain::HalfLine { b: 4.0 }, density).unwrap();
        let q = Potential::linear_halfline(1.0).unwrap();
        let at_min = fisher_rel_halfline(&min, &q).unwrap();
        assert!(at_min.abs() < 1e-5, "Φ⁺_Q(μ_Q) = {at_min}");
        assert!(at_min >= -1e-9);

        // Symmetrized and direct routes agree tightly on a soft-edged
        // density (exact cell averages of 30·y²(1−y)² on [0,1]).
        let m = 2048;
        let hm = 1.0 / m as f64;
        let anti = |y: f64| 10.0 * y.powi(3) - 15.0 * y.powi(4) + 6.0 * y.powi(5);
        let soft: Vec<f64> = (0..m)
            .map(|i| (anti((i as f64 + 1.0) * hm) - anti(i as f64 * hm)) / hm)
            .collect();
        let mu = GridMeasure::new(Domain::HalfLine { b: 1.0 }, soft).unwrap();
        let a = fisher_rel_halfline(&mu, &q).unwrap();
        let b = fisher_rel_halfline_direct(&mu, &q).unwrap();
        assert!((a - b).abs() <= 1e-4 * (1.0 + a), "{a} vs {b}");

        // A hard edge at y = 1 puts a log singularity in the transform, so
        // the two quadratures split at the measured few-permille level there.
        let mu = make_power_density(1.0, 2048).unwrap();
        let a = fisher_rel_halfline(&mu, &q).unwrap();
        let b = fisher_rel_halfline_direct(&mu, &q).unwrap();
        assert!((a - b).abs() <= 5e-3 * (1.0 + a), "{a} vs {b}");
    }

    #[test]
    fn halfline_entropy_symmetrization_identities() {
        // Σ(μ) = 2Σ(μ̃) under the square-root symmetrization.
        let mu = make_power_density(1.0, 2048).unwrap();
        let tilde = symmetrize_sqrt(&mu, 4096).unwrap();
        let s = sigma(&mu).unwrap();
        let s_tilde = sigma(&tilde).unwrap();
        assert_abs_diff_eq!(s, 2.0 * s_tilde, epsilon = 1e-6);

        // Σ̃⁺_Q(μ) = 2Σ̃_{Q̃}(μ̃) with Q̃ = ½Q(x²): for Q = ρx the tilde
        // potential is the quadratic ρx²/2, and B⁺(ρx) = 2B(ρx²/2).
        let rho: f64 = 1.5;
        let q = Potential::linear_halfline(rho).unwrap();
        let b_plus = -rho.ln() - 1.5;
        let lhs = relative_free_entropy(&mu, &q, b_plus).unwrap();
        let q_tilde = Potential::quadratic_line(rho).unwrap();
        let b_tilde = -0.5 * rho.ln() - 0.75;
        let rhs = 2.0 * relative_free_entropy(&tilde, &q_tilde, b_tilde).unwrap();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-5);
        assert!(lhs >= -1e-9);

        // Φ⁺ via pushforward consistency: the square-root image of the
        // quarter-circle law is the radius-2 semicircle's positive half.
        let mu = make_power_density(0.0, 1024).unwrap();
        let hat = pushforward_sqrt(&mu, 1024).unwrap();
        assert_abs_diff_eq!(hat.total_mass(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn log_potential_closed_forms() {
        // Uniform circle measure: identically zero.
        let uniform = make_uniform(Domain::Circle, 512).unwrap();
        let lp = log_potential(&uniform);
        for &v in lp.values() {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        }

        // Semicircle: Q_μ(x) = x²/2 − 1 on the support (pinned by
        // Σ(γ_{0,2}) = −1/4 and the x/2 Hilbert transform).
        let mu = make_semicircle(2.0, 4096).unwrap();
        let lp = log_potential(&mu);
        for i in (0..mu.cells()).step_by(101) {
            let x = mu.midpoint(i);
            if x.abs() < 1.9 {
                assert_abs_diff_eq!(lp.values()[i], 0.5 * x * x - 1.0, epsilon = 1e-4);
            }
        }
        // Off-grid evaluation agrees with the tabulated midpoints.
        for i in (0..mu.cells()).step_by(511) {
            assert_abs_diff_eq!(lp.at(mu.midpoint(i)), lp.values()[i], epsilon = 1e-11);
        }

        // Circle derivative identity: Q_μ′(θ) = (Hp)(θ).
        let nu = make_nu_lambda(4.0, 2048).unwrap();
        let lp = log_potential(&nu);
        let hp = hilbert_circle_smooth(&nu).unwrap();
        let h = nu.h();
        for i in 0..nu.cells() {
            let up = lp.values()[(i + 1) % nu.cells()];
            let down = lp.values()[(i + nu.cells() - 1) % nu.cells()];
            let deriv = (up - down) / (2.0 * h);
            assert_abs_diff_eq!(deriv, hp[i], epsilon = 1e-4);
        }
    }

    #[test]
    fn functional_value_serialization() {
        let v = FunctionalValue::new(FunctionalName::PhiQ, 2.25, "domain=line cells=4096");
        let json = serde_json::to_string(&v).unwrap();
        assert!(json.contains("\"Phi_Q\""), "{json}");
        let back: FunctionalValue = serde_json::from_str(&json).unwrap();
        assert_eq!(back.name, FunctionalName::PhiQ);
        assert_eq!(back.value, ExtReal::Finite(2.25));

        let inf = FunctionalValue::new(FunctionalName::SRel, ExtReal::PlusInfinity, "spike");
        let json = serde_json::to_string(&inf).unwrap();
        assert!(json.contains("+inf"), "{json}");
        let back: FunctionalValue = serde_json::from_str(&json).unwrap();
        assert_eq!(back.value, ExtReal::PlusInfinity);

        assert_eq!(
            "SigmaTilde_Q".parse::<FunctionalName>().unwrap(),
            FunctionalName::SigmaTildeQ
        );
        assert!("NoSuch".parse::<FunctionalName>().is_err());
    }
}
