//! System parameters and the standing assumptions on them.
//!
//! The potential is fixed to the power family `W(x) = |x|^{-alpha}`, which lies
//! in weak `L^r` with `r = N / alpha` and is homogeneous of degree `-alpha`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    pub space_dim: usize,
    pub components: usize,
    pub power: f64,
    pub kernel_exponent: f64,
    pub masses: Vec<f64>,
    pub box_length: f64,
    pub points_per_dim: usize,
}

impl SystemParams {
    /// Structural checks that do not depend on the analytic assumptions.
    pub fn check_structure(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.space_dim == 0 {
            return bad("space_dim must be positive".into());
        }
        if !(1..=3).contains(&self.components) {
            return bad(format!(
                "components must be 1, 2 or 3, got {}",
                self.components
            ));
        }
        if self.masses.len() != self.components {
            return bad(format!(
                "expected {} masses, got {}",
                self.components,
                self.masses.len()
            ));
        }
        for (j, &m) in self.masses.iter().enumerate() {
            if !m.is_finite() || m <= 0.0 {
                return bad(format!("mass {j} must be finite and positive, got {m}"));
            }
        }
        if !self.power.is_finite() {
            return bad(format!("power must be finite, got {}", self.power));
        }
        if !self.kernel_exponent.is_finite() || self.kernel_exponent <= 0.0 {
            return bad(format!(
                "kernel exponent must be finite and positive, got {}",
                self.kernel_exponent
            ));
        }
        if !self.box_length.is_finite() || self.box_length <= 0.0 {
            return bad(format!(
                "box length must be finite and positive, got {}",
                self.box_length
            ));
        }
        if self.points_per_dim < 8 || !self.points_per_dim.is_multiple_of(2) {
            return bad(format!(
                "points_per_dim must be even and at least 8, got {}",
                self.points_per_dim
            ));
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Same physics with a different mass vector (and matching component count).
    pub fn with_masses(&self, masses: Vec<f64>) -> Self {
        Self {
            components: masses.len(),
            masses,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedExponents {
    /// `r = N / alpha`, the weak-Lebesgue index of the kernel.
    pub weak_lr_index: f64,
    /// `t = 2r / (2r - 1)`, the dual index in the HLS pairing.
    pub hls_dual_index: f64,
    /// `mu = (Nrp - 2Nr + N) / (2rp)`, the interpolation exponent.
    pub gn_exponent: f64,
    /// Homogeneity of the kernel; equals `alpha` for the power law.
    pub growth_exponent: f64,
    /// `2pr / (2r - 1)`, the Lebesgue exponent controlling the interaction.
    pub interp_index: f64,
}

impl DerivedExponents {
    /// `2 mu p`, which must stay below 2 for the energy to be coercive.
    pub fn coercivity_exponent(&self, power: f64) -> f64 {
        2.0 * self.gn_exponent * power
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Clause {
    pub name: &'static str,
    pub description: &'static str,
    /// `rhs - lhs`; strict clauses fail on a margin of zero.
    pub margin: f64,
    pub strict: bool,
    pub passed: bool,
}

impl Clause {
    fn new(name: &'static str, description: &'static str, margin: f64, strict: bool) -> Self {
        let passed = if strict { margin > 0.0 } else { margin >= 0.0 };
        Self {
            name,
            description,
            margin,
            strict,
            passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub clauses: Vec<Clause>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn first_failure(&self) -> Option<&Clause> {
        self.clauses.iter().find(|c| !c.passed)
    }

    pub fn into_result(self) -> Result<Self> {
        match self.first_failure() {
            Some(c) => Err(Error::AssumptionViolated {
                clause: c.name,
                margin: c.margin,
            }),
            None => Ok(self),
        }
    }
}

fn check_finite(params: &SystemParams) -> Result<()> {
    let scalars = [params.power, params.kernel_exponent, params.box_length];
    if scalars
        .iter()
        .chain(params.masses.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::InvalidParameter("non-finite input".into()));
    }
    if params.kernel_exponent <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "kernel exponent must be positive, got {}",
            params.kernel_exponent
        )));
    }
    if params.space_dim == 0 {
        return Err(Error::InvalidParameter("space_dim must be positive".into()));
    }
    Ok(())
}

/// Evaluate every assumption clause and report its margin.
pub fn validate_assumptions(params: &SystemParams) -> Result<ValidationReport> {
    check_finite(params)?;
    let dim = params.space_dim as f64;
    let alpha = params.kernel_exponent;
    let p = params.power;
    let r = dim / alpha;

    let clauses = vec![
        Clause::new(
            "(h1)",
            "W = |x|^-alpha in weak L^r with 1/r < 2/N",
            2.0 / dim - 1.0 / r,
            true,
        ),
        Clause::new("(h0)", "p >= 2", p - 2.0, false),
        Clause::new(
            "(h0)",
            "p < (2r - 1)/r + 2/N",
            (2.0 * r - 1.0) / r + 2.0 / dim - p,
            true,
        ),
        Clause::new(
            "(h2)",
            "growth exponent alpha < 2 + 2N - pN",
            2.0 + 2.0 * dim - p * dim - alpha,
            true,
        ),
        // Nonnegative, radial and decreasing for every alpha > 0.
        Clause::new("(h1)", "W >= 0, radial, decaying", alpha, true),
    ];
    let passed = clauses.iter().all(|c| c.passed);
    Ok(ValidationReport { clauses, passed })
}

/// Derived exponents; call only after validation has passed.
pub fn derive_exponents(params: &SystemParams) -> Result<DerivedExponents> {
    check_finite(params)?;
    let dim = params.space_dim as f64;
    let p = params.power;
    let r = dim / params.kernel_exponent;
    let mu = (dim * r * p - 2.0 * dim * r + dim) / (2.0 * r * p);
    let exps = DerivedExponents {
        weak_lr_index: r,
        hls_dual_index: 2.0 * r / (2.0 * r - 1.0),
        gn_exponent: mu,
        growth_exponent: params.kernel_exponent,
        interp_index: 2.0 * p * r / (2.0 * r - 1.0),
    };
    let all_finite = [
        exps.weak_lr_index,
        exps.hls_dual_index,
        exps.gn_exponent,
        exps.interp_index,
    ]
    .iter()
    .all(|v| v.is_finite());
    if !all_finite {
        return Err(Error::NonFinite("derived exponent".into()));
    }
    Ok(exps)
}
