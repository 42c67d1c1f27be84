//! Winner-flip geometry for a single input and two competing weight
//! vectors. With `e = η/N` and `a = b = 1`, an over-active winner `j`
//! moving away from `x` while an under-active loser `j'` moves towards it
//! ends with `j` farther than `j'` exactly when
//! `(1 + e)·‖x − W_j‖ > (1 − e)·‖x − W_j'‖`. Moving both the same way never
//! changes which one is closer.

use serde::Serialize;

use crate::encoder::WtaLayer;
use crate::error::{Error, Result};
use crate::numerics::{euclid_dist, Matrix, SeededRng};
use crate::rules::{neaw_update, ActivityState, RuleConfig, RuleKind};

/// Relative half-width of the band around the flip condition's boundary
/// inside which instances are rejected.
pub const BOUNDARY_BAND: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometryInstance {
    pub x: Vec<f64>,
    /// Current winner (closer to `x`).
    pub w_j: Vec<f64>,
    /// Current loser.
    pub w_jp: Vec<f64>,
    pub eta_over_n: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem1Outcome {
    pub condition: bool,
    pub flipped: bool,
    pub before: (f64, f64),
    pub after: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorollaryMode {
    BothHebbian,
    BothAnti,
}

/// Deliberate defect for mutation tests of the verification suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateFault {
    #[default]
    None,
    /// Swap the Hebbian and anti-Hebbian branches.
    SignFlip,
}

impl GeometryInstance {
    fn validate(&self) -> Result<(f64, f64)> {
        let n = self.x.len();
        if n == 0 || self.w_j.len() != n || self.w_jp.len() != n {
            return Err(Error::invalid("geometry vectors must share a positive dimension"));
        }
        if self.x.iter().chain(&self.w_j).chain(&self.w_jp).any(|v| !v.is_finite()) {
            return Err(Error::invalid("geometry vectors must be finite"));
        }
        if !(self.eta_over_n > 0.0 && self.eta_over_n < 1.0) {
            return Err(Error::invalid(format!("eta/N must be in (0, 1), got {}", self.eta_over_n)));
        }
        let dj = euclid_dist(&self.x, &self.w_j)?;
        let djp = euclid_dist(&self.x, &self.w_jp)?;
        if dj >= djp {
            return Err(Error::invalid(format!("premise fails: ‖x − W_j‖ = {dj} ≥ ‖x − W_j'‖ = {djp}")));
        }
        Ok((dj, djp))
    }

    /// True when the instance sits inside the rejection band around the
    /// flip boundary.
    pub fn near_boundary(&self) -> Result<bool> {
        let (dj, djp) = self.validate()?;
        let e = self.eta_over_n;
        Ok(((1.0 + e) * dj - (1.0 - e) * djp).abs() < BOUNDARY_BAND * dj.max(djp))
    }
}

/// Runs the production NeAW update on a two-neuron layer with a single
/// input; neuron 0 is `W_j`. `over_active` picks which neuron won the batch.
fn update_pair(g: &GeometryInstance, kind: RuleKind, over_active: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let w = Matrix::from_columns(&[g.w_j.clone(), g.w_jp.clone()])?;
    let mut layer = WtaLayer::new(w)?;
    let state = ActivityState::from_winners(2, &[over_active])?;
    let cfg = RuleConfig::new(kind, g.eta_over_n);
    neaw_update(&mut layer, std::slice::from_ref(&g.x), &state, &cfg)?;
    Ok((layer.column(0), layer.column(1)))
}

pub fn theorem1_check(g: &GeometryInstance) -> Result<Theorem1Outcome> {
    theorem1_check_with(g, UpdateFault::None)
}

/// Over-active `W_j` takes the anti-Hebbian step and under-active `W_j'`
/// the Hebbian one; reports whether `j` ends up farther from `x` and
/// whether the flip condition predicted it. Instances inside the boundary
/// band are rejected.
pub fn theorem1_check_with(g: &GeometryInstance, fault: UpdateFault) -> Result<Theorem1Outcome> {
    let (dj, djp) = g.validate()?;
    if g.near_boundary()? {
        return Err(Error::invalid("instance lies inside the boundary band"));
    }
    let e = g.eta_over_n;
    let over_active = match fault {
        UpdateFault::None => 0,
        UpdateFault::SignFlip => 1,
    };
    let (wj, wjp) = update_pair(g, RuleKind::Neaw, over_active)?;
    let aj = euclid_dist(&g.x, &wj)?;
    let ajp = euclid_dist(&g.x, &wjp)?;
    Ok(Theorem1Outcome {
        condition: (1.0 + e) * dj > (1.0 - e) * djp,
        flipped: aj > ajp,
        before: (dj, djp),
        after: (aj, ajp),
    })
}

/// Applies the same branch to both neurons; returns whether the winner
/// changed.
pub fn corollary_check(g: &GeometryInstance, mode: CorollaryMode) -> Result<bool> {
    g.validate()?;
    let kind = match mode {
        CorollaryMode::BothHebbian => RuleKind::NeawH,
        CorollaryMode::BothAnti => RuleKind::NeawAh,
    };
    let (wj, wjp) = update_pair(g, kind, 0)?;
    Ok(euclid_dist(&g.x, &wj)? > euclid_dist(&g.x, &wjp)?)
}

/// Draws an instance with dimension in 1..=16, Gaussian vectors (a random
/// scale per vector so both outcomes are common) and `η/N` uniform in
/// (0.01, 0.99). Draws that violate the premise or fall in the boundary
/// band are redrawn.
pub fn sample_instance(rng: &mut SeededRng) -> GeometryInstance {
    loop {
        let dim = 1 + rng.below(16);
        let draw = |rng: &mut SeededRng| {
            let s = (rng.uniform_range(-2.0, 1.0) * std::f64::consts::LN_10).exp();
            (0..dim).map(|_| s * rng.normal()).collect::<Vec<f64>>()
        };
        let x = draw(rng);
        let mut w_j = draw(rng);
        let mut w_jp = draw(rng);
        let eta_over_n = rng.uniform_range(0.01, 0.99);
        let dj = euclid_dist(&x, &w_j).expect("same length");
        let djp = euclid_dist(&x, &w_jp).expect("same length");
        if dj == djp {
            continue;
        }
        if dj > djp {
            std::mem::swap(&mut w_j, &mut w_jp);
        }
        let g = GeometryInstance {
            x,
            w_j,
            w_jp,
            eta_over_n,
        };
        if !g.near_boundary().unwrap_or(true) {
            return g;
        }
    }
}
