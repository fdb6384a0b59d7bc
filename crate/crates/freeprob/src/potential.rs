//! External potentials for equilibrium problems and Coulomb-gas ensembles.
//!
//! A [`Potential`] evaluates `Q` and its derivative on the measure's domain.
//! On the circle the derivative is taken in the angle: `Q'(θ) = d/dθ Q(e^{iθ})`.
//! Closed-form families carry their equilibrium data (see
//! [`crate::equilibrium::closed_form_equilibrium`]).

use crate::measure::{wrap_angle, Domain};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Closed-form family tag, used to route equilibrium lookups.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ClosedForm {
    /// `Q(x) = ρx²/2` on the line.
    QuadraticLine { rho: f64 },
    /// `Q(e^{iθ}) = -(2/λ)·cos θ` on the circle.
    CosineCircle { lambda: f64 },
    /// `Q(x) = ρx` on the half-line.
    LinearHalfLine { rho: f64 },
    /// `Q(e^{iθ}) = θ²/2` on `[-π, π)`; convex on the cut circle.
    AngleQuadratic,
    /// No closed-form equilibrium attached.
    Custom,
}

enum Eval {
    Quadratic { rho: f64 },
    Cosine { lambda: f64 },
    Linear { rho: f64 },
    AngleQuadratic,
    Zero,
    Table(Table),
    Closure {
        q: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        dq: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

/// Tabulated potential with linear interpolation between nodes.
///
/// Stores `Q` and `Q'` sampled on a uniform grid; evaluation outside the
/// table clamps to the end nodes with linear continuation of `Q`.
struct Table {
    a: f64,
    h: f64,
    q: Vec<f64>,
    dq: Vec<f64>,
}

impl Table {
    fn eval(&self, x: f64) -> f64 {
        let n = self.q.len();
        let pos = (x - self.a) / self.h;
        if pos <= 0.0 {
            return self.q[0] + self.dq[0] * (x - self.a);
        }
        let last = self.a + (n - 1) as f64 * self.h;
        if pos >= (n - 1) as f64 {
            return self.q[n - 1] + self.dq[n - 1] * (x - last);
        }
        let i = pos as usize;
        let f = pos - i as f64;
        self.q[i] * (1.0 - f) + self.q[i + 1] * f
    }

    fn eval_dq(&self, x: f64) -> f64 {
        let n = self.dq.len();
        let pos = (x - self.a) / self.h;
        if pos <= 0.0 {
            return self.dq[0];
        }
        if pos >= (n - 1) as f64 {
            return self.dq[n - 1];
        }
        let i = pos as usize;
        let f = pos - i as f64;
        self.dq[i] * (1.0 - f) + self.dq[i + 1] * f
    }
}

/// External potential on a line, circle or half-line domain.
pub struct Potential {
    kind: &'static str,
    domain_label: &'static str,
    closed_form: ClosedForm,
    eval: Eval,
    display: String,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Potential({})", self.display)
    }
}

impl Clone for Potential {
    fn clone(&self) -> Self {
        let eval = match &self.eval {
            Eval::Quadratic { rho } => Eval::Quadratic { rho: *rho },
            Eval::Cosine { lambda } => Eval::Cosine { lambda: *lambda },
            Eval::Linear { rho } => Eval::Linear { rho: *rho },
            Eval::AngleQuadratic => Eval::AngleQuadratic,
            Eval::Zero => Eval::Zero,
            Eval::Table(t) => Eval::Table(Table {
                a: t.a,
                h: t.h,
                q: t.q.clone(),
                dq: t.dq.clone(),
            }),
            Eval::Closure { q, dq } => Eval::Closure {
                q: Arc::clone(q),
                dq: Arc::clone(dq),
            },
        };
        Potential {
            kind: self.kind,
            domain_label: self.domain_label,
            closed_form: self.closed_form,
            eval,
            display: self.display.clone(),
        }
    }
}

impl Potential {
    /// `Q(x) = ρx²/2` on the line; equilibrium is the semicircle law of
    /// radius `2/√ρ`.
    pub fn quadratic_line(rho: f64) -> Result<Potential> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "quadratic potential needs ρ > 0, got {rho}"
            )));
        }
        Ok(Potential {
            kind: "quadratic",
            domain_label: "line",
            closed_form: ClosedForm::QuadraticLine { rho },
            eval: Eval::Quadratic { rho },
            display: format!("quadratic:rho={rho}"),
        })
    }

    /// `Q(e^{iθ}) = -(2/λ)·cos θ` on the circle; equilibrium is the density
    /// `1 + (2/λ)cos θ` for `λ ≥ 2`. `λ = ∞` gives the zero potential whose
    /// equilibrium is uniform.
    pub fn cosine_circle(lambda: f64) -> Result<Potential> {
        if lambda.is_nan() || lambda < 2.0 {
            return Err(Error::InvalidParameter(format!(
                "cosine potential needs λ ≥ 2 (or ∞), got {lambda}"
            )));
        }
        Ok(Potential {
            kind: "cosine",
            domain_label: "circle",
            closed_form: ClosedForm::CosineCircle { lambda },
            eval: Eval::Cosine { lambda },
            display: format!("cosine:lambda={lambda}"),
        })
    }

    /// `Q(x) = ρx` on the half-line; equilibrium has density
    /// `(ρ/2π)·√((4/ρ − x)/x)` on `(0, 4/ρ]`.
    pub fn linear_halfline(rho: f64) -> Result<Potential> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "linear potential needs ρ > 0, got {rho}"
            )));
        }
        Ok(Potential {
            kind: "linear-halfline",
            domain_label: "halfline",
            closed_form: ClosedForm::LinearHalfLine { rho },
            eval: Eval::Linear { rho },
            display: format!("linear-halfline:rho={rho}"),
        })
    }

    /// Mollification of the quadratic potential with the width-`ε` bump:
    /// convolving `ρx²/2` with a kernel of second moment `ε²m₂` adds the
    /// constant `ρε²m₂/2` and nothing else, so the mollified potential is
    /// exact (no quadrature) and converges uniformly as `ε → 0`.
    pub fn mollified_quadratic_line(rho: f64, eps: f64) -> Result<Potential> {
        if !(rho.is_finite() && rho > 0.0 && eps.is_finite() && eps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mollified quadratic needs ρ > 0 and ε > 0, got ρ={rho}, ε={eps}"
            )));
        }
        let shift = 0.5 * rho * eps * eps * crate::measure::mollifier_second_moment();
        Ok(Potential {
            kind: "mollified-quadratic",
            domain_label: "line",
            closed_form: ClosedForm::Custom,
            eval: Eval::Closure {
                q: Arc::new(move |x| 0.5 * rho * x * x + shift),
                dq: Arc::new(move |x| rho * x),
            },
            display: format!("mollified-quadratic:rho={rho},eps={eps}"),
        })
    }

    /// `Q(e^{iθ}) = θ²/2` with the angle cut at `±π`.
    pub fn angle_quadratic() -> Potential {
        Potential {
            kind: "angle-quadratic",
            domain_label: "circle",
            closed_form: ClosedForm::AngleQuadratic,
            eval: Eval::AngleQuadratic,
            display: "angle-quadratic".into(),
        }
    }

    /// Identically zero potential on the given domain.
    pub fn zero(domain_label: &'static str) -> Potential {
        Potential {
            kind: "zero",
            domain_label,
            closed_form: ClosedForm::Custom,
            eval: Eval::Zero,
            display: "zero".into(),
        }
    }

    /// Potential tabulated on a uniform grid with an explicit derivative
    /// column; evaluation interpolates linearly.
    pub fn from_table(
        domain_label: &'static str,
        a: f64,
        h: f64,
        q: Vec<f64>,
        dq: Vec<f64>,
    ) -> Result<Potential> {
        if q.len() < 2 || q.len() != dq.len() {
            return Err(Error::InvalidParameter(
                "potential table needs ≥ 2 rows with matching derivative column".into(),
            ));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidParameter(format!("bad table step {h}")));
        }
        let display = format!("table[{} nodes from {a}]", q.len());
        Ok(Potential {
            kind: "table",
            domain_label,
            closed_form: ClosedForm::Custom,
            eval: Eval::Table(Table { a, h, q, dq }),
            display,
        })
    }

    /// Potential given by closures for `Q` and `Q'`.
    pub fn from_fns(
        domain_label: &'static str,
        q: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dq: impl Fn(f64) -> f64 + Send + Sync + 'static,
        display: impl Into<String>,
    ) -> Potential {
        Potential {
            kind: "custom",
            domain_label,
            closed_form: ClosedForm::Custom,
            eval: Eval::Closure {
                q: Arc::new(q),
                dq: Arc::new(dq),
            },
            display: display.into(),
        }
    }

    pub fn closed_form(&self) -> ClosedForm {
        self.closed_form
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }

    /// Domain family this potential is defined on: "line", "circle" or
    /// "halfline".
    pub fn domain_label(&self) -> &'static str {
        self.domain_label
    }

    pub fn matches_domain(&self, domain: Domain) -> bool {
        self.domain_label == domain.label()
    }

    /// Evaluates `Q` at `x` (an angle for circle potentials).
    pub fn q(&self, x: f64) -> f64 {
        match &self.eval {
            Eval::Quadratic { rho } => 0.5 * rho * x * x,
            Eval::Cosine { lambda } => {
                if lambda.is_infinite() {
                    0.0
                } else {
                    -(2.0 / lambda) * x.cos()
                }
            }
            Eval::Linear { rho } => rho * x,
            Eval::AngleQuadratic => {
                let t = wrap_angle(x);
                0.5 * t * t
            }
            Eval::Zero => 0.0,
            Eval::Table(t) => t.eval(x),
            Eval::Closure { q, .. } => q(x),
        }
    }

    /// Evaluates `Q'` at `x`; on the circle this is the angle derivative.
    pub fn dq(&self, x: f64) -> f64 {
        match &self.eval {
            Eval::Quadratic { rho } => rho * x,
            Eval::Cosine { lambda } => {
                if lambda.is_infinite() {
                    0.0
                } else {
                    (2.0 / lambda) * x.sin()
                }
            }
            Eval::Linear { rho } => *rho,
            Eval::AngleQuadratic => wrap_angle(x),
            Eval::Zero => 0.0,
            Eval::Table(t) => t.eval_dq(x),
            Eval::Closure { dq, .. } => dq(x),
        }
    }

    pub fn display(&self) -> &str {
        &self.display
    }

    /// Convexity parameter of `Q − ρ·(reference)²`, when the family carries
    /// one: `ρ` for quadratic and linear families, `-2/λ` for the cosine
    /// family on the circle.
    pub fn convexity_rho(&self) -> Option<f64> {
        match self.closed_form {
            ClosedForm::QuadraticLine { rho } => Some(rho),
            ClosedForm::CosineCircle { lambda } => {
                if lambda.is_infinite() {
                    Some(0.0)
                } else {
                    Some(-2.0 / lambda)
                }
            }
            ClosedForm::LinearHalfLine { rho } => Some(rho),
            ClosedForm::AngleQuadratic => Some(1.0),
            ClosedForm::Custom => None,
        }
    }

    /// Smallest second difference of `x ↦ Q(x) − (ρ/2)x²` over the grid
    /// midpoints, normalized by the step; nonnegative means the shifted
    /// potential passes the discrete convexity test.
    pub fn convexity_margin(&self, rho: f64, a: f64, b: f64, nodes: usize) -> f64 {
        let h = (b - a) / (nodes - 1) as f64;
        let shifted = |x: f64| self.q(x) - 0.5 * rho * x * x;
        let mut worst = f64::INFINITY;
        for i in 1..nodes - 1 {
            let x = a + i as f64 * h;
            let d2 = (shifted(x + h) - 2.0 * shifted(x) + shifted(x - h)) / (h * h);
            worst = worst.min(d2);
        }
        worst
    }
}

/// Parses the CLI potential grammar.
///
/// Accepted forms: `quadratic:rho=R`, `cosine:lambda=L` (`lambda=inf` for the
/// zero circle potential), `linear-halfline:rho=R`, `angle-quadratic`,
/// `zero:line|circle|halfline`, and `file:PATH` for a CSV table with header
/// `x,q,dq`.
pub fn parse_potential(text: &str) -> Result<Potential> {
    let (head, rest) = match text.split_once(':') {
        Some((h, r)) => (h, r),
        None => (text, ""),
    };
    match head {
        "quadratic" => Potential::quadratic_line(parse_kv(rest, "rho")?),
        "cosine" => {
            let raw = kv_value(rest, "lambda")?;
            let lambda = if raw == "inf" || raw == "infinity" {
                f64::INFINITY
            } else {
                raw.parse()
                    .map_err(|_| Error::Parse(format!("bad lambda '{raw}'")))?
            };
            Potential::cosine_circle(lambda)
        }
        "linear-halfline" => Potential::linear_halfline(parse_kv(rest, "rho")?),
        "angle-quadratic" => Ok(Potential::angle_quadratic()),
        "zero" => match rest {
            "line" => Ok(Potential::zero("line")),
            "circle" => Ok(Potential::zero("circle")),
            "halfline" => Ok(Potential::zero("halfline")),
            other => Err(Error::Parse(format!(
                "zero potential needs a domain (line|circle|halfline), got '{other}'"
            ))),
        },
        "file" => read_potential_table(rest),
        other => Err(Error::Parse(format!("unknown potential family '{other}'"))),
    }
}

fn kv_value<'a>(rest: &'a str, key: &str) -> Result<&'a str> {
    let (k, v) = rest
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("expected {key}=VALUE, got '{rest}'")))?;
    if k != key {
        return Err(Error::Parse(format!("expected key '{key}', got '{k}'")));
    }
    Ok(v)
}

fn parse_kv(rest: &str, key: &str) -> Result<f64> {
    let v = kv_value(rest, key)?;
    v.parse()
        .map_err(|_| Error::Parse(format!("bad value '{v}' for {key}")))
}

/// Reads a tabulated potential CSV: header `domain,x,q,dq` is not required;
/// the file starts with a `domain` line (`line`, `circle` or `halfline`),
/// then a `x,q,dq` header and uniformly spaced rows.
fn read_potential_table(path: &str) -> Result<Potential> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let domain_label = match lines.next().map(str::trim) {
        Some("line") => "line",
        Some("circle") => "circle",
        Some("halfline") => "halfline",
        other => {
            return Err(Error::Parse(format!(
                "potential table must start with a domain line, got {other:?}"
            )))
        }
    };
    match lines.next().map(str::trim) {
        Some("x,q,dq") => {}
        other => {
            return Err(Error::Parse(format!(
                "potential table needs header 'x,q,dq', got {other:?}"
            )))
        }
    }
    let mut xs = Vec::new();
    let mut q = Vec::new();
    let mut dq = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split(',');
        let x: f64 = it
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad table row '{line}'")))?;
        let qa: f64 = it
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad table row '{line}'")))?;
        let da: f64 = it
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad table row '{line}'")))?;
        xs.push(x);
        q.push(qa);
        dq.push(da);
    }
    if xs.len() < 2 {
        return Err(Error::Parse("potential table needs at least 2 rows".into()));
    }
    let h = xs[1] - xs[0];
    for w in xs.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1.0) {
            return Err(Error::Parse("potential table must be uniformly spaced".into()));
        }
    }
    Potential::from_table(domain_label, xs[0], h, q, dq)
}

/// Writes a tabulated potential in the format read by `file:` specs.
pub fn write_potential_table(
    path: impl AsRef<std::path::Path>,
    domain_label: &str,
    xs: &[f64],
    q: &[f64],
    dq: &[f64],
) -> Result<()> {
    let mut s = String::new();
    s.push_str(domain_label);
    s.push('\n');
    s.push_str("x,q,dq\n");
    for i in 0..xs.len() {
        s.push_str(&format!("{:.17e},{:.17e},{:.17e}\n", xs[i], q[i], dq[i]));
    }
    crate::cli::write_atomic(path.as_ref(), s.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quadratic_values() {
        let p = Potential::quadratic_line(2.0).unwrap();
        assert_abs_diff_eq!(p.q(3.0), 9.0);
        assert_abs_diff_eq!(p.dq(3.0), 6.0);
        assert_eq!(p.convexity_rho(), Some(2.0));
        assert!(p.convexity_margin(2.0, -4.0, 4.0, 101) > -1e-9);
        assert!(p.convexity_margin(2.5, -4.0, 4.0, 101) < -0.4);
    }

    #[test]
    fn cosine_values() {
        let p = Potential::cosine_circle(8.0).unwrap();
        assert_abs_diff_eq!(p.q(0.0), -0.25);
        assert_abs_diff_eq!(p.dq(std::f64::consts::FRAC_PI_2), 0.25);
        assert_abs_diff_eq!(p.convexity_rho().unwrap(), -0.25);
        let z = Potential::cosine_circle(f64::INFINITY).unwrap();
        assert_abs_diff_eq!(z.q(1.0), 0.0);
    }

    #[test]
    fn parse_grammar() {
        assert!(parse_potential("quadratic:rho=1.5").is_ok());
        assert!(parse_potential("cosine:lambda=8").is_ok());
        assert!(parse_potential("cosine:lambda=inf").is_ok());
        assert!(parse_potential("linear-halfline:rho=1").is_ok());
        assert!(parse_potential("zero:circle").is_ok());
        assert!(parse_potential("nope:x=1").is_err());
        assert!(parse_potential("quadratic:r=1").is_err());
    }

    #[test]
    fn table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pot.csv");
        let xs: Vec<f64> = (0..64).map(|i| -3.0 + 0.1 * i as f64).collect();
        let q: Vec<f64> = xs.iter().map(|x| 0.5 * x * x).collect();
        let dq: Vec<f64> = xs.clone();
        write_potential_table(&path, "line", &xs, &q, &dq).unwrap();
        let p = parse_potential(&format!("file:{}", path.display())).unwrap();
        assert_abs_diff_eq!(p.q(0.55), 0.5 * 0.55f64 * 0.55, epsilon = 1e-2);
        assert_abs_diff_eq!(p.dq(0.55), 0.55, epsilon = 1e-9);
        // Linear continuation outside the table.
        assert!(p.q(10.0) > 10.0);
    }
}
