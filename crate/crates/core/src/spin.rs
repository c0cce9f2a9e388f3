//! Spin-J picture of the lowest diagonal ladder.
//!
//! The pivotal states `|m>`, `m = 0 ..= n-1`, map onto `|J, M>` with
//! `J = (n-1)/2` and `M = m - J`. Basis phases from
//! [`BasisModel::spin_phase`] make the RF coupling act as `+J_+`.

use num_complex::Complex64;
use thiserror::Error;

use crate::propagator::{Frame, QuantumState};
use crate::stark::BasisModel;

#[derive(Debug, Error)]
pub enum SpinError {
    #[error("the Bloch vector has zero length; the closest coherent state is undefined")]
    UndefinedDirection,
    #[error("the model has no pivotal states")]
    NoPivotal,
    #[error("polar angle {0} is outside [0, pi]")]
    InvalidAngle(f64),
    #[error("spin projection has {got} amplitudes, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Amplitudes `c_M`, `M = -J ..= J`, stored at index `M + J`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinProjection {
    amps: Vec<Complex64>,
    leakage: f64,
}

/// `(X, Y, Z) = <J_{x,y,z}> / J`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub frame: Frame,
    /// More than half of the population lies outside the lowest ladder.
    pub leakage_flag: bool,
}

impl BlochVector {
    pub fn length(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

fn rotating_phase(frame: Frame, t_ns: f64) -> f64 {
    match frame {
        Frame::Lab => 0.0,
        Frame::Rotating { carrier_mhz } => 2.0 * std::f64::consts::PI * carrier_mhz * 1e-3 * t_ns,
    }
}

impl SpinProjection {
    /// Direct construction from `c_M` (index `M + J`).
    pub fn new(amps: Vec<Complex64>) -> Self {
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        Self { amps, leakage: (1.0 - norm).max(0.0) }
    }

    /// Projects basis amplitudes onto the lowest ladder. In a rotating frame
    /// the amplitudes are multiplied by `exp(i w t M)`.
    pub fn from_amplitudes(model: &BasisModel, psi: &[Complex64], frame: Frame, t_ns: f64) -> Self {
        let j = (model.pivotal().len() as f64 - 1.0) / 2.0;
        let wt = rotating_phase(frame, t_ns);
        let amps: Vec<Complex64> = model
            .pivotal()
            .iter()
            .zip(model.spin_phase())
            .enumerate()
            .map(|(k, (&i, &s))| psi[i] * s * Complex64::from_polar(1.0, wt * (k as f64 - j)))
            .collect();
        let inside: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        let total: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
        Self { amps, leakage: (total - inside).max(0.0) }
    }

    pub fn from_state(model: &BasisModel, psi: &QuantumState, frame: Frame, t_ns: f64) -> Result<Self, SpinError> {
        if model.pivotal().is_empty() {
            return Err(SpinError::NoPivotal);
        }
        Ok(Self::from_amplitudes(model, psi.amplitudes(), frame, t_ns))
    }

    /// Embeds the projection back into the model basis (lab frame).
    pub fn to_state(&self, model: &BasisModel) -> Result<QuantumState, SpinError> {
        if model.pivotal().len() != self.amps.len() {
            return Err(SpinError::DimensionMismatch { expected: model.pivotal().len(), got: self.amps.len() });
        }
        let mut v = vec![Complex64::new(0.0, 0.0); model.dim()];
        for ((&i, &s), a) in model.pivotal().iter().zip(model.spin_phase()).zip(&self.amps) {
            v[i] = a * s;
        }
        Ok(QuantumState::from_raw(v))
    }

    pub fn j(&self) -> f64 {
        (self.amps.len() as f64 - 1.0) / 2.0
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    /// Population outside the lowest ladder.
    pub fn leakage(&self) -> f64 {
        self.leakage
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `(<J_+>, <J_z>)` on the raw amplitudes.
    fn moments(&self) -> (Complex64, f64) {
        let j = self.j();
        let mut plus = Complex64::new(0.0, 0.0);
        let mut jz = 0.0;
        for (k, c) in self.amps.iter().enumerate() {
            let m = k as f64 - j;
            jz += m * c.norm_sqr();
            if k + 1 < self.amps.len() {
                plus += self.amps[k + 1].conj() * c * ((j - m) * (j + m + 1.0)).sqrt();
            }
        }
        (plus, jz)
    }

    pub fn bloch(&self) -> BlochVector {
        self.bloch_in(Frame::Lab)
    }

    fn bloch_in(&self, frame: Frame) -> BlochVector {
        let j = self.j();
        let (plus, jz) = self.moments();
        let scale = if j > 0.0 { 1.0 / j } else { 0.0 };
        BlochVector { x: plus.re * scale, y: plus.im * scale, z: jz * scale, frame, leakage_flag: self.leakage > 0.5 }
    }

    /// `<self|other>`
    pub fn overlap(&self, other: &SpinProjection) -> Complex64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }
}

/// Bloch coordinates of the lowest-ladder part of `psi` at time `t_ns`.
pub fn bloch_coordinates(model: &BasisModel, psi: &QuantumState, frame: Frame, t_ns: f64) -> Result<BlochVector, SpinError> {
    Ok(SpinProjection::from_state(model, psi, frame, t_ns)?.bloch_in(frame))
}

fn ln_binomial(n: u64, k: u64) -> f64 {
    let lf = |x: u64| (1..=x).map(|v| (v as f64).ln()).sum::<f64>();
    lf(n) - lf(k) - lf(n - k)
}

/// Spin coherent state pointing along `(sin t cos p, sin t sin p, cos t)`:
/// `c_M = C(2J, J+M)^{1/2} cos^{J+M}(t/2) sin^{J-M}(t/2) exp(i (J-M) p)`.
pub fn scs_state(theta: f64, phi: f64, two_j: u32) -> Result<SpinProjection, SpinError> {
    if !(0.0..=std::f64::consts::PI + 1e-12).contains(&theta) {
        return Err(SpinError::InvalidAngle(theta));
    }
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let n = two_j as u64;
    let amps = (0..=n)
        .map(|k| {
            // k = J + M, J - M = n - k
            let down = n - k;
            let mag = (0.5 * ln_binomial(n, k)).exp() * c.powi(k as i32) * s.powi(down as i32);
            Complex64::from_polar(mag, down as f64 * phi)
        })
        .collect();
    Ok(SpinProjection::new(amps))
}

/// Closest coherent state and its overlap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestScs {
    pub theta: f64,
    pub phi: f64,
    /// `|<SCS|psi>|^2` against the full (not renormalized) state.
    pub overlap: f64,
}

/// Coherent state along the Bloch vector of the renormalized projection.
pub fn closest_scs_projection(p: &SpinProjection) -> Result<ClosestScs, SpinError> {
    let b = p.bloch();
    let norm = p.norm_sqr();
    if norm <= 0.0 {
        return Err(SpinError::UndefinedDirection);
    }
    let (x, y, z) = (b.x / norm, b.y / norm, b.z / norm);
    let r = (x * x + y * y + z * z).sqrt();
    if r < 1e-12 {
        return Err(SpinError::UndefinedDirection);
    }
    let theta = (z / r).clamp(-1.0, 1.0).acos();
    let phi = y.atan2(x).rem_euclid(2.0 * std::f64::consts::PI);
    let scs = scs_state(theta, phi, (p.amps.len() - 1) as u32)?;
    Ok(ClosestScs { theta, phi, overlap: scs.overlap(p).norm_sqr() })
}

pub fn closest_scs(model: &BasisModel, psi: &QuantumState, frame: Frame, t_ns: f64) -> Result<ClosestScs, SpinError> {
    closest_scs_projection(&SpinProjection::from_state(model, psi, frame, t_ns)?)
}
