//! Time-dependent Schrödinger propagation in the Stark eigenbasis.
//!
//! Each grid interval is treated with a constant Hamiltonian built from the
//! interval field (the mean of its two end samples), and `exp(-i H dt)` is
//! applied by a Chebyshev expansion whose Bessel coefficients are truncated
//! below `1e-14`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{inner, norm_sqr};
use crate::pulse::Waveform;
use crate::spin;
use crate::stark::BasisModel;
use crate::units;

/// Allowed norm drift of a single propagation step before the expansion is
/// considered divergent.
const STEP_NORM_TOLERANCE: f64 = 1e-10;

/// Largest scaled step `half_width * dt` of one Chebyshev series; longer
/// intervals are split into equal sub-steps.
const MAX_ALPHA: f64 = 40.0;

#[derive(Debug, Error)]
pub enum PropagationError {
    #[error("state dimension {got} does not match the basis size {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("state is not normalized (norm^2 = {0})")]
    NotNormalized(f64),
    #[error("Chebyshev series diverged at step {step}: norm changed by {norm_change:e} (spectral radius x dt = {alpha}, field {field:e} a.u., bound {bound:e})")]
    SeriesDivergence { step: usize, norm_change: f64, alpha: f64, field: f64, bound: f64 },
    #[error("non-finite amplitude at step {0}")]
    NonFinite(usize),
}

/// Normalized amplitudes over the levels of a [`BasisModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amps: Vec<Complex64>,
}

impl QuantumState {
    pub fn new(amps: Vec<Complex64>) -> Result<Self, PropagationError> {
        let n = norm_sqr(&amps);
        if (n - 1.0).abs() > 1e-9 {
            return Err(PropagationError::NotNormalized(n));
        }
        Ok(Self { amps })
    }

    /// Wraps amplitudes without checking the norm.
    pub fn from_raw(amps: Vec<Complex64>) -> Self {
        Self { amps }
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[index] = Complex64::new(1.0, 0.0);
        Self { amps }
    }

    /// `|m>` on the lowest diagonal of `model`.
    pub fn pivotal(model: &BasisModel, m: usize) -> Option<Self> {
        model.pivotal().get(m).map(|&i| Self::basis(model.dim(), i))
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amps)
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `<self|other>`
    pub fn overlap(&self, other: &QuantumState) -> Result<Complex64, PropagationError> {
        if self.dim() != other.dim() {
            return Err(PropagationError::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        Ok(inner(&self.amps, &other.amps))
    }
}

/// `|<psi|target>|^2`.
pub fn fidelity(psi: &QuantumState, target: &QuantumState) -> Result<f64, PropagationError> {
    Ok(psi.overlap(target)?.norm_sqr().min(1.0))
}

/// Bessel functions `J_0 .. J_{n-1}` at `x` by Miller's backward recurrence.
pub fn bessel_j_sequence(x: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let start = {
        let m = n.max(x.ceil() as usize) + 20 + (x.sqrt() * 10.0) as usize;
        m + (m % 2)
    };
    let (mut j_next, mut j_cur) = (0.0f64, 1e-300f64);
    let mut norm = 0.0;
    let mut values = vec![0.0; start + 1];
    values[start] = j_cur;
    for k in (1..=start).rev() {
        let j_prev = 2.0 * k as f64 / x * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        values[k - 1] = j_cur;
        if j_cur.abs() > 1e250 {
            for v in &mut values[k - 1..] {
                *v *= 1e-250;
            }
            j_cur *= 1e-250;
            j_next *= 1e-250;
        }
    }
    for (k, v) in values.iter().enumerate() {
        if k == 0 {
            norm += v;
        } else if k % 2 == 0 {
            norm += 2.0 * v;
        }
    }
    for (k, o) in out.iter_mut().enumerate() {
        *o = values[k] / norm;
    }
    out
}

/// Chebyshev stepper for `exp(-/+ i H dt)` with
/// `H = H0 + (k/2)(conj(eps) L + eps L^T)`.
#[derive(Debug, Clone)]
pub struct ChebyshevStepper<'a> {
    model: &'a BasisModel,
    dt_au: f64,
    /// `sum_j |L_ij| + |L_ji|` per row, for Gershgorin discs.
    row_weight: Vec<f64>,
    field_bound: f64,
    center: f64,
    half_width: f64,
    /// Sub-steps per interval, keeping `half_width * dt` below `MAX_ALPHA`.
    substeps: usize,
    coeffs: Vec<f64>,
    work: [Vec<Complex64>; 3],
}

impl<'a> ChebyshevStepper<'a> {
    /// `field_bound` is the largest nominal field magnitude (a.u.) the
    /// spectral bounds must cover; it grows on demand.
    pub fn new(model: &'a BasisModel, dt_au: f64, field_bound: f64) -> Self {
        let dim = model.dim();
        let mut row_weight = vec![0.0; dim];
        for &(i, j, v) in &model.raising().entries {
            row_weight[i] += v.abs();
            row_weight[j] += v.abs();
        }
        let zero = vec![Complex64::new(0.0, 0.0); dim];
        let mut s = Self {
            model,
            dt_au,
            row_weight,
            field_bound: 0.0,
            center: 0.0,
            half_width: 0.0,
            substeps: 1,
            coeffs: Vec::new(),
            work: [zero.clone(), zero.clone(), zero],
        };
        s.set_bounds(field_bound);
        s
    }

    fn set_bounds(&mut self, field_bound: f64) {
        let c = 0.5 * self.model.rf_calibration() * field_bound;
        let h0 = self.model.h0();
        let lo = h0.iter().zip(&self.row_weight).map(|(e, w)| e - c * w).fold(f64::INFINITY, f64::min);
        let hi = h0.iter().zip(&self.row_weight).map(|(e, w)| e + c * w).fold(f64::NEG_INFINITY, f64::max);
        self.field_bound = field_bound;
        self.center = 0.5 * (lo + hi);
        // a small margin keeps the scaled spectrum strictly inside [-1, 1]
        self.half_width = (0.5 * (hi - lo)).max(1e-300) * 1.01;
        self.substeps = ((self.half_width * self.dt_au) / MAX_ALPHA).ceil().max(1.0) as usize;
        let alpha = self.half_width * self.dt_au / self.substeps as f64;
        let j = bessel_j_sequence(alpha, alpha.ceil() as usize + 40);
        let last = j.iter().rposition(|v| v.abs() > 1e-14).unwrap_or(0);
        self.coeffs = j[..=last.max(1)].to_vec();
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    pub fn dt_au(&self) -> f64 {
        self.dt_au
    }

    /// `y = (H - center) x / half_width`.
    fn apply_scaled(&self, field: Complex64, x: &[Complex64], y: &mut [Complex64]) {
        let inv = 1.0 / self.half_width;
        for ((yi, xi), e) in y.iter_mut().zip(x).zip(self.model.h0()) {
            *yi = *xi * ((e - self.center) * inv);
        }
        let c = 0.5 * self.model.rf_calibration() * inv;
        let (a, b) = (field.conj() * c, field * c);
        self.model.raising().mul_add(a, x, y);
        self.model.raising().mul_add_transpose(b, x, y);
    }

    /// Applies `exp(-i H dt)` (`forward`) or its adjoint in place. `field`
    /// is the nominal `E_x + i E_y` in atomic units.
    pub fn step(&mut self, psi: &mut [Complex64], field: Complex64, forward: bool) {
        if field.norm() > self.field_bound {
            self.set_bounds(field.norm() * 1.2);
        }
        for _ in 0..self.substeps {
            self.substep(psi, field, forward);
        }
    }

    fn substep(&mut self, psi: &mut [Complex64], field: Complex64, forward: bool) {
        let [mut prev, mut cur, mut next] = std::mem::take(&mut self.work);
        let sign = if forward { -1.0 } else { 1.0 };
        // (-i)^k forward, (+i)^k for the adjoint
        let phase = |k: usize| -> Complex64 {
            match k % 4 {
                0 => Complex64::new(1.0, 0.0),
                1 => Complex64::new(0.0, sign),
                2 => Complex64::new(-1.0, 0.0),
                _ => Complex64::new(0.0, -sign),
            }
        };
        prev.copy_from_slice(psi);
        self.apply_scaled(field, &prev, &mut cur);
        let c0 = self.coeffs[0];
        let c1 = 2.0 * self.coeffs[1] * phase(1);
        for ((p, a), b) in psi.iter_mut().zip(&prev).zip(&cur) {
            *p = a * c0 + b * c1;
        }
        for k in 2..self.coeffs.len() {
            self.apply_scaled(field, &cur, &mut next);
            let ck = 2.0 * self.coeffs[k] * phase(k);
            for ((p, n), q) in psi.iter_mut().zip(next.iter_mut()).zip(&prev) {
                *n = 2.0 * *n - q;
                *p += *n * ck;
            }
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
        }
        self.work = [prev, cur, next];
        let global = Complex64::from_polar(1.0, sign * self.center * self.dt_au / self.substeps as f64);
        psi.iter_mut().for_each(|v| *v *= global);
    }

    fn bounds_snapshot(&self) -> (f64, f64) {
        (self.half_width * self.dt_au / self.substeps as f64, self.field_bound)
    }
}

/// One step followed by the finiteness and norm-drift checks; returns the
/// new squared norm.
pub(crate) fn checked_step(
    stepper: &mut ChebyshevStepper,
    psi: &mut [Complex64],
    field: Complex64,
    forward: bool,
    step: usize,
    norm: f64,
) -> Result<f64, PropagationError> {
    stepper.step(psi, field, forward);
    let new_norm = norm_sqr(psi);
    if !new_norm.is_finite() {
        return Err(PropagationError::NonFinite(step));
    }
    if (new_norm - norm).abs() > STEP_NORM_TOLERANCE * norm.max(1e-300) {
        let (alpha, bound) = stepper.bounds_snapshot();
        return Err(PropagationError::SeriesDivergence { step, norm_change: new_norm - norm, alpha, field: field.norm(), bound });
    }
    Ok(new_norm)
}

/// Nominal interval field of `w` in atomic units.
pub fn interval_field_au(w: &Waveform, i: usize) -> Complex64 {
    w.interval_field(i) * units::mv_per_cm_to_au(1.0)
}

pub(crate) fn peak_interval_field_au(w: &Waveform) -> f64 {
    (0..w.steps()).map(|i| interval_field_au(w, i).norm()).fold(0.0, f64::max)
}

fn check_dim(model: &BasisModel, psi: &QuantumState) -> Result<(), PropagationError> {
    if psi.dim() != model.dim() {
        return Err(PropagationError::DimensionMismatch { expected: model.dim(), got: psi.dim() });
    }
    Ok(())
}

/// Steps a state through `w`, calling `observe(step, psi)` before the first
/// step and after every step (`step` counts completed intervals).
pub fn propagate_observed(
    model: &BasisModel,
    psi0: &QuantumState,
    w: &Waveform,
    mut observe: impl FnMut(usize, &[Complex64]),
) -> Result<QuantumState, PropagationError> {
    check_dim(model, psi0)?;
    let mut stepper = ChebyshevStepper::new(model, units::ns_to_au(w.dt_ns()), peak_interval_field_au(w));
    let mut psi = psi0.amps.clone();
    let mut norm = norm_sqr(&psi);
    observe(0, &psi);
    for i in 0..w.steps() {
        norm = checked_step(&mut stepper, &mut psi, interval_field_au(w, i), true, i, norm)?;
        observe(i + 1, &psi);
    }
    Ok(QuantumState { amps: psi })
}

/// Final state only.
pub fn propagate_final(model: &BasisModel, psi0: &QuantumState, w: &Waveform) -> Result<QuantumState, PropagationError> {
    propagate_observed(model, psi0, w, |_, _| {})
}

/// Applies `U^dagger` of the whole waveform to a state given at `t_stop`,
/// returning the state at `t = 0`.
pub fn propagate_backward(model: &BasisModel, chi_t: &QuantumState, w: &Waveform) -> Result<QuantumState, PropagationError> {
    check_dim(model, chi_t)?;
    let mut stepper = ChebyshevStepper::new(model, units::ns_to_au(w.dt_ns()), peak_interval_field_au(w));
    let mut chi = chi_t.amps.clone();
    let mut norm = norm_sqr(&chi);
    for i in (0..w.steps()).rev() {
        norm = checked_step(&mut stepper, &mut chi, interval_field_au(w, i), false, i, norm)?;
    }
    Ok(QuantumState { amps: chi })
}

/// Reference frame for recorded Bloch coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "frame", rename_all = "kebab-case")]
pub enum Frame {
    #[default]
    Lab,
    Rotating {
        carrier_mhz: f64,
    },
}

/// What to record along a propagation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordSpec {
    /// Record every `stride` steps (and always the final step).
    pub stride: usize,
    /// Bloch coordinates and closest-SCS overlap of the lowest ladder.
    pub spin: bool,
    pub frame: Frame,
    pub snapshots: bool,
}

impl Default for RecordSpec {
    fn default() -> Self {
        Self { stride: 50, spin: false, frame: Frame::Lab, snapshots: false }
    }
}

/// Time series recorded by [`propagate`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryRecord {
    pub times_ns: Vec<f64>,
    /// Populations of `|m>`, `m = 0 ..= n-1`, per recorded time.
    pub pivotal_populations: Vec<Vec<f64>>,
    /// Expectation and spread of `m_l` over the whole basis.
    pub mean_m: Vec<f64>,
    pub sigma_m: Vec<f64>,
    /// `(X, Y, Z)`; empty unless requested.
    pub bloch: Vec<[f64; 3]>,
    /// `(theta, phi, overlap)` of the closest spin coherent state.
    pub closest_scs: Vec<[f64; 3]>,
    pub snapshots: Vec<Vec<Complex64>>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times_ns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_ns.is_empty()
    }
}

/// Propagates `psi0` through `w` and records the requested observables.
pub fn propagate(
    model: &BasisModel,
    psi0: &QuantumState,
    w: &Waveform,
    spec: &RecordSpec,
) -> Result<(QuantumState, TrajectoryRecord), PropagationError> {
    let stride = spec.stride.max(1);
    let steps = w.steps();
    let mut rec = TrajectoryRecord::default();
    let m_labels: Vec<f64> = model.levels().iter().map(|l| l.m as f64).collect();
    let psi = propagate_observed(model, psi0, w, |step, psi| {
        if step % stride != 0 && step != steps {
            return;
        }
        let t_ns = step as f64 * w.dt_ns();
        rec.times_ns.push(t_ns);
        rec.pivotal_populations.push(model.pivotal().iter().map(|&i| psi[i].norm_sqr()).collect());
        let pops: Vec<f64> = psi.iter().map(|a| a.norm_sqr()).collect();
        let total: f64 = pops.iter().sum();
        let mean = pops.iter().zip(&m_labels).map(|(p, m)| p * m).sum::<f64>() / total;
        let var = pops.iter().zip(&m_labels).map(|(p, m)| p * (m - mean).powi(2)).sum::<f64>() / total;
        rec.mean_m.push(mean);
        rec.sigma_m.push(var.max(0.0).sqrt());
        if spec.spin && !model.pivotal().is_empty() {
            let projection = spin::SpinProjection::from_amplitudes(model, psi, spec.frame, t_ns);
            let b = projection.bloch();
            rec.bloch.push([b.x, b.y, b.z]);
            let scs = spin::closest_scs_projection(&projection).map(|c| [c.theta, c.phi, c.overlap]).unwrap_or([
                f64::NAN,
                f64::NAN,
                0.0,
            ]);
            rec.closest_scs.push(scs);
        }
        if spec.snapshots {
            rec.snapshots.push(psi.to_vec());
        }
    })?;
    Ok((psi, rec))
}
