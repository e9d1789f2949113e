//! Quadrature-variance algebra for squeezed vacuum.
//!
//! Variances are normalized so that vacuum has variance 1 in every
//! quadrature. A squeezing level of `s` dB means the squeezed quadrature has
//! variance `10^(-s/10)` (power dB throughout).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack on the uncertainty-product check.
const HEISENBERG_RTOL: f64 = 1e-12;

/// Largest accepted RMS phase jitter. Beyond this the two quadratures would
/// swap roles and the small-angle treatment no longer applies.
pub const MAX_PHASE_RMS: f64 = std::f64::consts::FRAC_PI_4;

/// A Gaussian squeezed state described by its two principal-axis variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezedState {
    v_plus: f64,
    v_minus: f64,
    angle: f64,
}

impl SqueezedState {
    /// Builds a state from two variances in either order. The larger one is
    /// stored as the antisqueezed variance.
    pub fn new(a: f64, b: f64, angle: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
            return Err(Error::invalid(format!(
                "variances must be positive and finite, got ({a}, {b})"
            )));
        }
        if !angle.is_finite() {
            return Err(Error::invalid("squeeze angle must be finite"));
        }
        let (v_plus, v_minus) = if a >= b { (a, b) } else { (b, a) };
        if v_plus * v_minus < 1.0 - HEISENBERG_RTOL {
            return Err(Error::invalid(format!(
                "variance product {} violates the uncertainty bound",
                v_plus * v_minus
            )));
        }
        Ok(Self {
            v_plus,
            v_minus,
            angle,
        })
    }

    pub fn vacuum() -> Self {
        Self {
            v_plus: 1.0,
            v_minus: 1.0,
            angle: 0.0,
        }
    }

    /// Variance of the elongated quadrature.
    pub fn v_plus(&self) -> f64 {
        self.v_plus
    }

    /// Variance of the squeezed quadrature.
    pub fn v_minus(&self) -> f64 {
        self.v_minus
    }

    /// Angle of the squeezed (minor) axis relative to the in-phase quadrature.
    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn with_angle(self, angle: f64) -> Self {
        Self { angle, ..self }
    }

    pub fn product(&self) -> f64 {
        self.v_plus * self.v_minus
    }

    /// Variance seen along the quadrature at `theta`.
    pub fn variance_along(&self, theta: f64) -> f64 {
        let (s, c) = (theta - self.angle).sin_cos();
        self.v_minus * c * c + self.v_plus * s * s
    }
}

/// How the RMS phase jitter is folded into the quadrature mixing weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseAveraging {
    /// Substitute the RMS angle directly: weights `cos²θ` and `sin²θ`.
    #[default]
    RmsSubstitution,
    /// Exact average over a zero-mean Gaussian jitter:
    /// weights `(1 ± e^{-2θ²}) / 2`.
    Gaussian,
}

/// RMS jitter of the relative phase between squeezed and interferometer light.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseNoise {
    theta_rms: f64,
    #[serde(default)]
    averaging: PhaseAveraging,
}

impl PhaseNoise {
    pub fn new(theta_rms: f64) -> Result<Self> {
        Self::with_averaging(theta_rms, PhaseAveraging::default())
    }

    pub fn with_averaging(theta_rms: f64, averaging: PhaseAveraging) -> Result<Self> {
        if !(theta_rms.is_finite() && theta_rms >= 0.0) {
            return Err(Error::invalid(format!(
                "phase noise must be non-negative, got {theta_rms} rad"
            )));
        }
        if theta_rms >= MAX_PHASE_RMS {
            return Err(Error::invalid(format!(
                "phase noise {theta_rms} rad is not below pi/4"
            )));
        }
        Ok(Self {
            theta_rms,
            averaging,
        })
    }

    pub fn from_mrad(mrad: f64) -> Result<Self> {
        Self::new(mrad * 1e-3)
    }

    pub fn none() -> Self {
        Self {
            theta_rms: 0.0,
            averaging: PhaseAveraging::default(),
        }
    }

    pub fn theta_rms(&self) -> f64 {
        self.theta_rms
    }

    pub fn averaging(&self) -> PhaseAveraging {
        self.averaging
    }

    /// `(keep, leak)` weights: the fraction of a quadrature's own variance
    /// that survives and the fraction picked up from the orthogonal one.
    pub fn weights(&self) -> (f64, f64) {
        let t = self.theta_rms;
        match self.averaging {
            PhaseAveraging::RmsSubstitution => {
                let (s, c) = t.sin_cos();
                (c * c, s * s)
            }
            PhaseAveraging::Gaussian => {
                let e = (-2.0 * t * t).exp();
                (0.5 * (1.0 + e), 0.5 * (1.0 - e))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossElement {
    pub label: String,
    pub efficiency: f64,
}

/// Ordered optical path from the squeezer to the photodetector. Each element
/// is a power transmission in `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<LossElement>", into = "Vec<LossElement>")]
pub struct LossChain {
    elements: Vec<LossElement>,
}

impl LossChain {
    pub fn new() -> Self {
        Self::default()
    }

    /// A chain with a single element carrying the whole efficiency.
    pub fn single(label: impl Into<String>, efficiency: f64) -> Result<Self> {
        let mut chain = Self::new();
        chain.push(label, efficiency)?;
        Ok(chain)
    }

    pub fn push(&mut self, label: impl Into<String>, efficiency: f64) -> Result<()> {
        let label = label.into();
        if !(efficiency > 0.0 && efficiency <= 1.0) {
            return Err(Error::invalid(format!(
                "efficiency of '{label}' must lie in (0, 1], got {efficiency}"
            )));
        }
        self.elements.push(LossElement { label, efficiency });
        Ok(())
    }

    pub fn elements(&self) -> &[LossElement] {
        &self.elements
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn total(&self) -> f64 {
        chain_total(self)
    }
}

impl TryFrom<Vec<LossElement>> for LossChain {
    type Error = Error;

    fn try_from(elements: Vec<LossElement>) -> Result<Self> {
        let mut chain = LossChain::new();
        for e in elements {
            chain.push(e.label, e.efficiency)?;
        }
        Ok(chain)
    }
}

impl From<LossChain> for Vec<LossElement> {
    fn from(chain: LossChain) -> Self {
        chain.elements
    }
}

/// Pure squeezed state carrying `squeeze_db` of squeezing.
pub fn state_from_db(squeeze_db: f64, angle: f64) -> Result<SqueezedState> {
    if !(squeeze_db.is_finite() && squeeze_db >= 0.0) {
        return Err(Error::invalid(format!(
            "squeezing level must be a non-negative number of dB, got {squeeze_db}"
        )));
    }
    let v_minus = 10f64.powf(-squeeze_db / 10.0);
    let v_plus = 10f64.powf(squeeze_db / 10.0);
    SqueezedState::new(v_plus, v_minus, angle)
}

/// Mixes in vacuum: each variance maps to `η·v + (1 − η)`.
pub fn apply_loss(state: SqueezedState, efficiency: f64) -> Result<SqueezedState> {
    if !(0.0..=1.0).contains(&efficiency) {
        return Err(Error::invalid(format!(
            "efficiency must lie in [0, 1], got {efficiency}"
        )));
    }
    let mix = |v: f64| efficiency * v + (1.0 - efficiency);
    Ok(SqueezedState {
        v_plus: mix(state.v_plus),
        v_minus: mix(state.v_minus),
        angle: state.angle,
    })
}

/// Leaks a fraction of each quadrature's variance into the other. The sum
/// of the two variances is unchanged.
pub fn apply_phase_noise(state: SqueezedState, noise: PhaseNoise) -> SqueezedState {
    if noise.theta_rms == 0.0 {
        return state;
    }
    let (keep, leak) = noise.weights();
    let v_minus = state.v_minus * keep + state.v_plus * leak;
    // Taking the complement keeps the trace exact in floating point.
    let v_plus = (state.v_plus + state.v_minus) - v_minus;
    SqueezedState {
        v_plus: v_plus.max(v_minus),
        v_minus: v_minus.min(v_plus),
        angle: state.angle,
    }
}

/// Squeezing seen in the minor quadrature, in dB below vacuum.
pub fn detected_db(state: &SqueezedState) -> f64 {
    if state.v_minus == 1.0 {
        return 0.0;
    }
    -10.0 * state.v_minus.log10()
}

/// Product of every element's efficiency; 1 for an empty chain.
pub fn chain_total(chain: &LossChain) -> f64 {
    chain.elements.iter().map(|e| e.efficiency).product()
}

/// Every intermediate of the injection → loss → phase-noise chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Propagation {
    pub inject_db: f64,
    pub efficiency: f64,
    pub injected: SqueezedState,
    pub after_loss: SqueezedState,
    pub detected: SqueezedState,
    pub detected_db: f64,
}

/// Runs the full degradation chain for a loss path.
pub fn propagate(inject_db: f64, chain: &LossChain, noise: PhaseNoise) -> Result<Propagation> {
    propagate_with_efficiency(inject_db, chain_total(chain), noise)
}

/// Same as [`propagate`] with the total efficiency given directly. Accepts
/// `η = 0`, which a [`LossChain`] cannot express.
pub fn propagate_with_efficiency(
    inject_db: f64,
    efficiency: f64,
    noise: PhaseNoise,
) -> Result<Propagation> {
    let injected = state_from_db(inject_db, 0.0)?;
    let after_loss = apply_loss(injected, efficiency)?;
    let detected = apply_phase_noise(after_loss, noise);
    Ok(Propagation {
        inject_db,
        efficiency,
        injected,
        after_loss,
        detected,
        detected_db: detected_db(&detected),
    })
}
