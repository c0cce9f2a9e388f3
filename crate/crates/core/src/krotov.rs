//! Krotov's method for state-to-state transfer.
//!
//! The figure of merit is `J_T = 1 - |<tgt|psi(T)>|^2` and the running cost
//! `g = (lambda / S(t)) |E(t) - E_ref(t)|^2` with the previous iterate as
//! reference. Each iteration propagates the co-state
//! `chi(T) = <tgt|psi(T)> |tgt>` backward under the old field, then sweeps
//! forward, updating every sample from the already-updated state:
//!
//! `dE(t) = (S(t) / lambda) Im <chi(t)| dH/dE |psi(t)>`.
//!
//! Controls are the field samples on the propagation grid. Sample `t_{j+1}`
//! enters the interval `[t_j, t_{j+1}]`, so the forward sweep first steps
//! with the old value (predictor), computes the update from that state and
//! then repeats the step with the new value.
//!
//! `lambda` is in `1 / ((mV/cm)^2 a.u. time)`; the running cost integrates
//! over atomic-unit time, so `J` is dimensionless.

use std::ops::ControlFlow;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{inner, norm_sqr};
use crate::propagator::{checked_step, ChebyshevStepper, PropagationError, QuantumState};
use crate::pulse::{self, Envelope, PulseError, Waveform};
use crate::stark::BasisModel;
use crate::units;

#[derive(Debug, Error)]
pub enum KrotovError {
    #[error("invalid optimization config: {0}")]
    InvalidConfig(String),
    #[error("target state is not normalized (norm^2 = {0})")]
    TargetNotNormalized(f64),
    #[error("state dimension {got} does not match the basis size {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite update in iteration {iteration} at sample {sample}")]
    NonFiniteUpdate {
        iteration: usize,
        sample: usize,
        /// Iterations completed before the failure.
        log: Vec<IterationRecord>,
    },
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error(transparent)]
    Pulse(#[from] PulseError),
}

/// What the optimizer updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "domain", rename_all = "kebab-case")]
pub enum Domain {
    /// `E_x` and `E_y` directly.
    #[default]
    Lab,
    /// `Re S` and `Im S` of the envelope about `carrier_mhz`.
    Quadrature { carrier_mhz: f64 },
}

impl Domain {
    /// `exp(i w t_j)` in the quadrature domain, 1 in the lab.
    fn rotation(&self, t_ns: f64) -> Complex64 {
        match *self {
            Domain::Lab => Complex64::new(1.0, 0.0),
            Domain::Quadrature { carrier_mhz } => {
                Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * carrier_mhz * 1e-3 * t_ns)
            }
        }
    }
}

/// Amplitude and spectral limits enforced after every update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraints {
    pub e_max_mv: f64,
    /// Sigma+/sigma- components beyond `+/- cutoff` are removed.
    pub cutoff_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizationConfig {
    /// Update weight; `None` picks it so the first update peaks at
    /// `auto_lambda_fraction` of the guess peak.
    pub lambda: Option<f64>,
    pub auto_lambda_fraction: f64,
    /// Rise and fall time of the update shape `S(t)`.
    pub shape_rise_ns: f64,
    pub constraints: Option<Constraints>,
    pub j_t_threshold: f64,
    pub max_iterations: usize,
    pub domain: Domain,
    /// Store the co-state only every this many samples and recompute the
    /// segments in between; 0 keeps all of them.
    pub chi_checkpoint: usize,
    /// Consecutive `J_T` increases that end the run as stagnated.
    pub stagnation_window: usize,
    /// Carrier about which the logged bandwidth is measured.
    pub bandwidth_carrier_mhz: f64,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            auto_lambda_fraction: 0.05,
            shape_rise_ns: 2.0,
            constraints: None,
            j_t_threshold: 1e-2,
            max_iterations: 10_000,
            domain: Domain::Lab,
            chi_checkpoint: 0,
            stagnation_window: 50,
            bandwidth_carrier_mhz: 230.0,
        }
    }
}

impl OptimizationConfig {
    pub fn validate(&self) -> Result<(), KrotovError> {
        let bad = |m: &str| Err(KrotovError::InvalidConfig(m.into()));
        if let Some(l) = self.lambda {
            if !(l > 0.0) || !l.is_finite() {
                return bad("lambda must be positive and finite");
            }
        }
        if !(self.auto_lambda_fraction > 0.0) {
            return bad("auto_lambda_fraction must be positive");
        }
        if !(self.shape_rise_ns >= 0.0) {
            return bad("shape_rise_ns must be non-negative");
        }
        if !(self.j_t_threshold > 0.0 && self.j_t_threshold < 1.0) {
            return bad("j_t_threshold must lie in (0, 1)");
        }
        if self.stagnation_window == 0 {
            return bad("stagnation_window must be at least 1");
        }
        if let Some(c) = self.constraints {
            if !(c.e_max_mv > 0.0) || !(c.cutoff_mhz > 0.0) {
                return bad("constraints need E_max > 0 and cutoff > 0");
            }
        }
        if let Domain::Quadrature { carrier_mhz } = self.domain {
            if !(carrier_mhz > 0.0) {
                return bad("quadrature carrier must be positive");
            }
        }
        Ok(())
    }
}

/// One row of the iteration log. Iteration 0 describes the guess.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub j_t: f64,
    /// `int g dt` of the Krotov update (before any constraint projection).
    pub running_cost: f64,
    /// `J_T + int g dt`.
    pub total: f64,
    pub peak_mv: f64,
    /// Full 99% bandwidth of the wider sigma component.
    pub bandwidth_mhz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Converged,
    IterationCap,
    /// `J_T` rose for `stagnation_window` consecutive iterations.
    Stagnated,
    /// Stopped by the progress callback.
    Interrupted,
}

#[derive(Debug, Clone)]
pub struct OptimizationRun {
    pub log: Vec<IterationRecord>,
    pub waveform: Waveform,
    pub status: Status,
    pub lambda: f64,
}

impl OptimizationRun {
    /// Iterations performed (the guess row excluded).
    pub fn iterations(&self) -> usize {
        self.log.last().map_or(0, |r| r.iteration)
    }

    pub fn final_j_t(&self) -> f64 {
        self.log.last().map_or(f64::NAN, |r| r.j_t)
    }
}

/// Resumable state after a completed iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub lambda: f64,
    pub waveform: Waveform,
    pub log: Vec<IterationRecord>,
    /// Current run of consecutive `J_T` increases.
    pub increases: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Functional {
    pub j_t: f64,
    pub running_cost: f64,
    pub total: f64,
}

fn transfer_error(psi_t: &[Complex64], target: &[Complex64]) -> f64 {
    (1.0 - inner(target, psi_t).norm_sqr()).max(0.0)
}

fn shape(w: &Waveform, cfg: &OptimizationConfig) -> Vec<f64> {
    (0..w.len()).map(|j| pulse::shape_function(w.time_ns(j), w.t_stop_ns(), cfg.shape_rise_ns)).collect()
}

/// `int (lambda / S) |E - E_ref|^2 dt` by the trapezoid rule; infinite if
/// the fields differ where `S = 0`.
fn running_cost(delta: &[Complex64], shape: &[f64], lambda: f64, dt_au: f64) -> f64 {
    let last = delta.len() - 1;
    let mut sum = 0.0;
    for (j, (d, s)) in delta.iter().zip(shape).enumerate() {
        let p = d.norm_sqr();
        if p == 0.0 {
            continue;
        }
        if *s <= 0.0 {
            return f64::INFINITY;
        }
        let weight = if j == 0 || j == last { 0.5 } else { 1.0 };
        sum += weight * p / s;
    }
    lambda * sum * dt_au
}

/// `J_T`, the running cost against `reference` and their sum.
pub fn evaluate_functional(
    psi_t: &QuantumState,
    target: &QuantumState,
    w: &Waveform,
    reference: &Waveform,
    cfg: &OptimizationConfig,
    lambda: f64,
) -> Result<Functional, KrotovError> {
    if psi_t.dim() != target.dim() {
        return Err(KrotovError::DimensionMismatch { expected: target.dim(), got: psi_t.dim() });
    }
    w.same_grid(reference)?;
    let j_t = transfer_error(psi_t.amplitudes(), target.amplitudes());
    let delta: Vec<Complex64> = (0..w.len()).map(|j| w.field(j) - reference.field(j)).collect();
    let running = running_cost(&delta, &shape(w, cfg), lambda, units::ns_to_au(w.dt_ns()));
    Ok(Functional { j_t, running_cost: running, total: j_t + running })
}

/// `Im <chi| dH/dE |psi>` for `E = E_x + i E_y` packed as `g_x + i g_y`,
/// per mV/cm. With `A = <chi|L|psi>` and `B = <chi|L^T|psi>` this is
/// `(k c / 2) i (conj(B) - A)`.
fn field_gradient(model: &BasisModel, chi: &[Complex64], psi: &[Complex64]) -> Complex64 {
    let mut a = Complex64::new(0.0, 0.0);
    let mut b = Complex64::new(0.0, 0.0);
    for &(r, c, v) in &model.raising().entries {
        a += chi[r].conj() * psi[c] * v;
        b += chi[c].conj() * psi[r] * v;
    }
    let k = 0.5 * model.rf_calibration() * units::mv_per_cm_to_au(1.0);
    Complex64::new(0.0, k) * (b.conj() - a)
}

/// Backward-propagated co-states, optionally stored only at checkpoints.
struct CoStates<'a> {
    stepper: ChebyshevStepper<'a>,
    /// Interval fields (a.u.) of the pulse the co-state belongs to.
    fields: Vec<Complex64>,
    stride: usize,
    /// `(index, chi)` at every stride multiple and at the final sample.
    checkpoints: Vec<(usize, Vec<Complex64>)>,
    segment_start: usize,
    segment: Vec<Vec<Complex64>>,
}

impl<'a> CoStates<'a> {
    fn new(
        model: &'a BasisModel,
        fields: Vec<Complex64>,
        dt_au: f64,
        chi_t: Vec<Complex64>,
        stride: usize,
    ) -> Result<Self, PropagationError> {
        let steps = fields.len();
        let stride = if stride == 0 { steps } else { stride.min(steps) };
        let bound = fields.iter().map(|f| f.norm()).fold(0.0, f64::max);
        let mut s = Self {
            stepper: ChebyshevStepper::new(model, dt_au, bound),
            fields,
            stride,
            checkpoints: Vec::new(),
            segment_start: usize::MAX,
            segment: Vec::new(),
        };
        if stride == steps {
            s.segment = s.sweep(steps, 0, chi_t, true)?;
            s.segment_start = 0;
        } else {
            let mut chi = chi_t;
            let mut norm = norm_sqr(&chi);
            s.checkpoints.push((steps, chi.clone()));
            for i in (0..steps).rev() {
                norm = checked_step(&mut s.stepper, &mut chi, s.fields[i], false, i, norm)?;
                if i % stride == 0 {
                    s.checkpoints.push((i, chi.clone()));
                }
            }
        }
        Ok(s)
    }

    /// Co-states at `from, from-1, .., to`, returned in increasing order.
    fn sweep(
        &mut self,
        from: usize,
        to: usize,
        chi: Vec<Complex64>,
        keep: bool,
    ) -> Result<Vec<Vec<Complex64>>, PropagationError> {
        let mut chi = chi;
        let mut norm = norm_sqr(&chi);
        let mut out = Vec::with_capacity(if keep { from - to + 1 } else { 0 });
        out.push(chi.clone());
        for i in (to..from).rev() {
            norm = checked_step(&mut self.stepper, &mut chi, self.fields[i], false, i, norm)?;
            out.push(chi.clone());
        }
        out.reverse();
        Ok(out)
    }

    fn get(&mut self, j: usize) -> Result<&[Complex64], PropagationError> {
        let inside = self.segment_start != usize::MAX && j >= self.segment_start && j < self.segment_start + self.segment.len();
        if !inside {
            let start = (j / self.stride) * self.stride;
            let end = (start + self.stride).min(self.fields.len());
            let chi_end = self
                .checkpoints
                .iter()
                .find(|(i, _)| *i == end)
                .map(|(_, c)| c.clone())
                .expect("checkpoint at every stride multiple");
            self.segment = self.sweep(end, start, chi_end, true)?;
            self.segment_start = start;
        }
        Ok(&self.segment[j - self.segment_start])
    }
}

fn check_inputs(model: &BasisModel, psi0: &QuantumState, target: &QuantumState) -> Result<(), KrotovError> {
    for s in [psi0, target] {
        if s.dim() != model.dim() {
            return Err(KrotovError::DimensionMismatch { expected: model.dim(), got: s.dim() });
        }
    }
    let n = target.norm_sqr();
    if (n - 1.0).abs() > 1e-9 {
        return Err(KrotovError::TargetNotNormalized(n));
    }
    Ok(())
}

struct Problem<'a> {
    model: &'a BasisModel,
    psi0: &'a QuantumState,
    target: &'a QuantumState,
    cfg: &'a OptimizationConfig,
    dt_ns: f64,
    dt_au: f64,
    shape: Vec<f64>,
    /// Domain rotation per sample.
    rot: Vec<Complex64>,
}

impl<'a> Problem<'a> {
    fn lab(&self, ctrl: &[Complex64]) -> Vec<Complex64> {
        ctrl.iter().zip(&self.rot).map(|(c, r)| c * r).collect()
    }

    fn waveform(&self, ctrl: &[Complex64]) -> Result<Waveform, PulseError> {
        Waveform::from_complex(self.dt_ns, &self.lab(ctrl))
    }

    fn interval_fields(&self, lab: &[Complex64]) -> Vec<Complex64> {
        let c = units::mv_per_cm_to_au(1.0);
        (0..lab.len() - 1).map(|i| pulse::midpoint_field(lab.len(), i, |k| lab[k]) * c).collect()
    }

    fn forward(&self, ctrl: &[Complex64]) -> Result<Vec<Complex64>, PropagationError> {
        let fields = self.interval_fields(&self.lab(ctrl));
        let bound = fields.iter().map(|f| f.norm()).fold(0.0, f64::max);
        let mut stepper = ChebyshevStepper::new(self.model, self.dt_au, bound);
        let mut psi = self.psi0.amplitudes().to_vec();
        let mut norm = norm_sqr(&psi);
        for (i, f) in fields.iter().enumerate() {
            norm = checked_step(&mut stepper, &mut psi, *f, true, i, norm)?;
        }
        Ok(psi)
    }

    fn co_states(&self, ctrl: &[Complex64], psi_t: &[Complex64]) -> Result<CoStates<'a>, PropagationError> {
        let tau = inner(self.target.amplitudes(), psi_t);
        let chi_t: Vec<Complex64> = self.target.amplitudes().iter().map(|t| t * tau).collect();
        let fields = self.interval_fields(&self.lab(ctrl));
        CoStates::new(self.model, fields, self.dt_au, chi_t, self.cfg.chi_checkpoint)
    }

    /// Update of sample `j` in the control domain, with `lambda = 1`.
    fn raw_update(&self, j: usize, chi: &[Complex64], psi: &[Complex64]) -> Complex64 {
        if self.shape[j] == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        self.rot[j].conj() * field_gradient(self.model, chi, psi) * self.shape[j]
    }

    /// `lambda` making the first-order update peak at the configured
    /// fraction of the guess peak.
    fn auto_lambda(&self, ctrl: &[Complex64], chis: &mut CoStates) -> Result<f64, KrotovError> {
        let peak = ctrl.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if peak == 0.0 {
            return Err(KrotovError::InvalidConfig("automatic lambda needs a non-zero guess".into()));
        }
        let fields = self.interval_fields(&self.lab(ctrl));
        let bound = fields.iter().map(|f| f.norm()).fold(0.0, f64::max);
        let mut stepper = ChebyshevStepper::new(self.model, self.dt_au, bound);
        let mut psi = self.psi0.amplitudes().to_vec();
        let mut norm = norm_sqr(&psi);
        let mut largest = self.raw_update(0, chis.get(0)?, &psi).norm();
        for (i, f) in fields.iter().enumerate() {
            norm = checked_step(&mut stepper, &mut psi, *f, true, i, norm)?;
            largest = largest.max(self.raw_update(i + 1, chis.get(i + 1)?, &psi).norm());
        }
        if !(largest > 0.0) || !largest.is_finite() {
            return Err(KrotovError::InvalidConfig("the guess has zero gradient; set lambda explicitly".into()));
        }
        Ok(largest / (self.cfg.auto_lambda_fraction * peak))
    }

    /// Sequential forward sweep. Returns the updated controls and the
    /// running cost of the update.
    fn sweep(
        &self,
        ctrl: &[Complex64],
        chis: &mut CoStates,
        lambda: f64,
        iteration: usize,
        log: &[IterationRecord],
    ) -> Result<(Vec<Complex64>, f64), KrotovError> {
        let c = units::mv_per_cm_to_au(1.0);
        let n = ctrl.len();
        let mut new = ctrl.to_vec();
        let mut delta = vec![Complex64::new(0.0, 0.0); n];
        let bound = self.lab(ctrl).iter().map(|v| v.norm() * c).fold(0.0, f64::max);
        let mut stepper = ChebyshevStepper::new(self.model, self.dt_au, bound);
        let mut psi = self.psi0.amplitudes().to_vec();
        let mut norm = norm_sqr(&psi);
        let non_finite = |sample: usize| KrotovError::NonFiniteUpdate { iteration, sample, log: log.to_vec() };

        delta[0] = self.raw_update(0, chis.get(0)?, &psi) / lambda;
        if !(delta[0].re.is_finite() && delta[0].im.is_finite()) {
            return Err(non_finite(0));
        }
        new[0] += delta[0];
        let mut start = psi.clone();
        for i in 0..n - 1 {
            start.copy_from_slice(&psi);
            // samples up to i are already updated, i + 1 is predicted by
            // its old value and corrected once its update is known
            let field = |new: &[Complex64], next: Complex64| {
                pulse::midpoint_field(n, i, |k| match k {
                    k if k <= i => new[k] * self.rot[k],
                    k if k == i + 1 => next * self.rot[k],
                    k => ctrl[k] * self.rot[k],
                }) * c
            };
            let predicted = field(&new, ctrl[i + 1]);
            let new_norm = checked_step(&mut stepper, &mut psi, predicted, true, i, norm)?;
            let d = self.raw_update(i + 1, chis.get(i + 1)?, &psi) / lambda;
            if !(d.re.is_finite() && d.im.is_finite()) {
                return Err(non_finite(i + 1));
            }
            if d != Complex64::new(0.0, 0.0) {
                delta[i + 1] = d;
                new[i + 1] += d;
                psi.copy_from_slice(&start);
                let corrected = field(&new, new[i + 1]);
                norm = checked_step(&mut stepper, &mut psi, corrected, true, i, norm)?;
            } else {
                norm = new_norm;
            }
        }
        let cost = running_cost(&delta, &self.shape, lambda, self.dt_au);
        Ok((new, cost))
    }

    fn project(&self, ctrl: Vec<Complex64>) -> Result<Vec<Complex64>, PulseError> {
        let Some(limits) = self.cfg.constraints else {
            return Ok(ctrl);
        };
        match self.cfg.domain {
            Domain::Lab => {
                let w = Waveform::from_complex(self.dt_ns, &ctrl)?;
                let w = pulse::clip_amplitude(&pulse::filter_spectrum(&w, limits.cutoff_mhz)?, limits.e_max_mv)?;
                Ok(w.complex())
            }
            Domain::Quadrature { carrier_mhz } => {
                let e = Envelope::new(self.dt_ns, carrier_mhz, ctrl)?;
                let e = pulse::filter_envelope(&e, limits.cutoff_mhz)?;
                Ok(e.samples()
                    .iter()
                    .map(|s| if s.norm() > limits.e_max_mv { s * (limits.e_max_mv / s.norm()) } else { *s })
                    .collect())
            }
        }
    }

    fn record(&self, iteration: usize, ctrl: &[Complex64], j_t: f64, running: f64) -> Result<IterationRecord, PulseError> {
        let w = self.waveform(ctrl)?;
        Ok(IterationRecord {
            iteration,
            j_t,
            running_cost: running,
            total: j_t + running,
            peak_mv: w.peak(),
            bandwidth_mhz: pulse::bandwidth(&w, self.cfg.bandwidth_carrier_mhz).width_mhz(),
        })
    }
}

/// Optimizes `guess` to transfer `psi0` into `target`.
pub fn optimize(
    model: &BasisModel,
    psi0: &QuantumState,
    target: &QuantumState,
    guess: &Waveform,
    cfg: &OptimizationConfig,
) -> Result<OptimizationRun, KrotovError> {
    optimize_with(model, psi0, target, guess, cfg, |_| ControlFlow::Continue(()))
}

/// [`optimize`] with a callback after every iteration; returning
/// `ControlFlow::Break` stops the run with [`Status::Interrupted`].
pub fn optimize_with(
    model: &BasisModel,
    psi0: &QuantumState,
    target: &QuantumState,
    guess: &Waveform,
    cfg: &OptimizationConfig,
    on_iteration: impl FnMut(&Checkpoint) -> ControlFlow<()>,
) -> Result<OptimizationRun, KrotovError> {
    run(model, psi0, target, guess, None, cfg, on_iteration)
}

/// Continues a run from a checkpoint. The checkpoint's `lambda` is kept.
pub fn resume(
    model: &BasisModel,
    psi0: &QuantumState,
    target: &QuantumState,
    checkpoint: &Checkpoint,
    cfg: &OptimizationConfig,
    on_iteration: impl FnMut(&Checkpoint) -> ControlFlow<()>,
) -> Result<OptimizationRun, KrotovError> {
    run(model, psi0, target, &checkpoint.waveform, Some(checkpoint), cfg, on_iteration)
}

fn run(
    model: &BasisModel,
    psi0: &QuantumState,
    target: &QuantumState,
    start: &Waveform,
    from: Option<&Checkpoint>,
    cfg: &OptimizationConfig,
    mut on_iteration: impl FnMut(&Checkpoint) -> ControlFlow<()>,
) -> Result<OptimizationRun, KrotovError> {
    cfg.validate()?;
    check_inputs(model, psi0, target)?;
    let rot: Vec<Complex64> = (0..start.len()).map(|j| cfg.domain.rotation(start.time_ns(j))).collect();
    let problem = Problem {
        model,
        psi0,
        target,
        cfg,
        dt_ns: start.dt_ns(),
        dt_au: units::ns_to_au(start.dt_ns()),
        shape: shape(start, cfg),
        rot,
    };
    let mut ctrl: Vec<Complex64> = start.complex().iter().zip(&problem.rot).map(|(z, r)| z * r.conj()).collect();
    let mut psi_t = problem.forward(&ctrl)?;
    let mut j_t = transfer_error(&psi_t, target.amplitudes());

    let (mut log, mut increases, mut lambda) = match from {
        Some(c) => (c.log.clone(), c.increases, Some(c.lambda)),
        None => (vec![problem.record(0, &ctrl, j_t, 0.0)?], 0, cfg.lambda),
    };
    let mut iteration = log.last().map_or(0, |r| r.iteration);

    let status = loop {
        if j_t <= cfg.j_t_threshold {
            break Status::Converged;
        }
        if increases >= cfg.stagnation_window {
            break Status::Stagnated;
        }
        if iteration >= cfg.max_iterations {
            break Status::IterationCap;
        }
        iteration += 1;
        let mut chis = problem.co_states(&ctrl, &psi_t)?;
        let l = match lambda {
            Some(l) => l,
            None => {
                let l = problem.auto_lambda(&ctrl, &mut chis)?;
                lambda = Some(l);
                l
            }
        };
        let (updated, cost) = problem.sweep(&ctrl, &mut chis, l, iteration, &log)?;
        // the sweep saw sample i + 2 at its old value while stepping interval
        // i, so psi(T) is always recomputed from the accepted field
        ctrl = problem.project(updated)?;
        psi_t = problem.forward(&ctrl)?;
        let new_j_t = transfer_error(&psi_t, target.amplitudes());
        increases = if new_j_t > j_t { increases + 1 } else { 0 };
        j_t = new_j_t;
        log.push(problem.record(iteration, &ctrl, j_t, cost)?);
        let checkpoint = Checkpoint { lambda: l, waveform: problem.waveform(&ctrl)?, log: log.clone(), increases };
        if on_iteration(&checkpoint).is_break() {
            break Status::Interrupted;
        }
    };
    Ok(OptimizationRun { log, waveform: problem.waveform(&ctrl)?, status, lambda: lambda.unwrap_or(f64::NAN) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SparseReal;
    use crate::propagator::{fidelity, propagate_final};

    const GAP: f64 = 3.5e-8;

    fn two_level() -> BasisModel {
        let mut l = SparseReal::new(2, 2);
        l.push(1, 0, 1000.0);
        BasisModel::toy(&[0.0, GAP], l, vec![0, 1], 2.0).unwrap()
    }

    fn guess(dt: f64) -> Waveform {
        pulse::make_flat_top(8.0, units::au_to_mhz(GAP), 20.0, 4.0, dt).unwrap()
    }

    fn j_t(model: &BasisModel, w: &Waveform) -> f64 {
        let psi = propagate_final(model, &QuantumState::basis(2, 0), w).unwrap();
        1.0 - fidelity(&psi, &QuantumState::basis(2, 1)).unwrap()
    }

    #[test]
    fn two_level_converges_monotonically() {
        let model = two_level();
        let cfg = OptimizationConfig { j_t_threshold: 1e-6, max_iterations: 100, lambda: Some(2e-10), ..Default::default() };
        let (psi0, tgt) = (QuantumState::basis(2, 0), QuantumState::basis(2, 1));
        let run = optimize(&model, &psi0, &tgt, &guess(0.02), &cfg).unwrap();
        assert_eq!(run.status, Status::Converged, "J_T = {}", run.final_j_t());
        assert!(run.iterations() <= 100);
        for pair in run.log.windows(2) {
            assert!(pair[1].j_t <= pair[0].j_t);
            assert!(pair[1].total <= pair[0].j_t + 1e-14, "{:?}", pair);
        }
        assert!((j_t(&model, &run.waveform) - run.final_j_t()).abs() < 1e-12);
    }

    #[test]
    fn converged_guess_is_returned_unchanged() {
        let model = two_level();
        let w = guess(0.02);
        let cfg = OptimizationConfig { j_t_threshold: 0.99, lambda: Some(1.0), ..Default::default() };
        let run = optimize(&model, &QuantumState::basis(2, 0), &QuantumState::basis(2, 1), &w, &cfg).unwrap();
        assert_eq!(run.iterations(), 0);
        assert_eq!(run.status, Status::Converged);
        assert_eq!(run.waveform, w);
    }

    #[test]
    fn update_matches_finite_difference_gradient() {
        // with a large lambda the update is (S / lambda) times the field
        // gradient at the guess, so dJ_T / dE_j = -2 dt lambda dE_j / S_j
        let model = two_level();
        let w = guess(0.05);
        let lambda = 1e-6;
        let cfg = OptimizationConfig { lambda: Some(lambda), max_iterations: 1, j_t_threshold: 1e-9, ..Default::default() };
        let run = optimize(&model, &QuantumState::basis(2, 0), &QuantumState::basis(2, 1), &w, &cfg).unwrap();
        let dt_au = units::ns_to_au(w.dt_ns());
        let h = 1e-4;
        for j in [40usize, 100, 200, 333] {
            let s = pulse::shape_function(w.time_ns(j), w.t_stop_ns(), cfg.shape_rise_ns);
            let d = run.waveform.field(j) - w.field(j);
            for (k, predicted) in [(0, -2.0 * dt_au * lambda * d.re / s), (1, -2.0 * dt_au * lambda * d.im / s)] {
                let bump = |sign: f64| {
                    let (mut ex, mut ey) = (w.ex().to_vec(), w.ey().to_vec());
                    if k == 0 {
                        ex[j] += sign * h;
                    } else {
                        ey[j] += sign * h;
                    }
                    j_t(&model, &Waveform::new(w.dt_ns(), ex, ey).unwrap())
                };
                let fd = (bump(1.0) - bump(-1.0)) / (2.0 * h);
                assert!((fd - predicted).abs() < 1e-3 * fd.abs(), "sample {j}, component {k}: {fd} vs {predicted}");
            }
        }
    }

    #[test]
    fn quadrature_domain_matches_lab_without_constraints() {
        let model = two_level();
        let w = guess(0.02);
        let carrier = units::au_to_mhz(GAP);
        let base = OptimizationConfig { lambda: Some(2e-10), max_iterations: 5, j_t_threshold: 1e-12, ..Default::default() };
        let quad = OptimizationConfig { domain: Domain::Quadrature { carrier_mhz: carrier }, ..base.clone() };
        let (psi0, tgt) = (QuantumState::basis(2, 0), QuantumState::basis(2, 1));
        let a = optimize(&model, &psi0, &tgt, &w, &base).unwrap();
        let b = optimize(&model, &psi0, &tgt, &w, &quad).unwrap();
        for (x, y) in a.log.iter().zip(&b.log) {
            assert!((x.j_t - y.j_t).abs() < 1e-10);
        }
    }

    #[test]
    fn checkpointed_costates_give_identical_updates() {
        let model = two_level();
        let w = guess(0.02);
        let base = OptimizationConfig { lambda: Some(2e-10), max_iterations: 3, j_t_threshold: 1e-12, ..Default::default() };
        let sparse = OptimizationConfig { chi_checkpoint: 64, ..base.clone() };
        let (psi0, tgt) = (QuantumState::basis(2, 0), QuantumState::basis(2, 1));
        let a = optimize(&model, &psi0, &tgt, &w, &base).unwrap();
        let b = optimize(&model, &psi0, &tgt, &w, &sparse).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.waveform, b.waveform);
    }

    #[test]
    fn resume_continues_the_same_trajectory() {
        let model = two_level();
        let w = guess(0.02);
        let cfg = OptimizationConfig { lambda: Some(2e-10), max_iterations: 6, j_t_threshold: 1e-12, ..Default::default() };
        let (psi0, tgt) = (QuantumState::basis(2, 0), QuantumState::basis(2, 1));
        let full = optimize(&model, &psi0, &tgt, &w, &cfg).unwrap();
        let mut saved = None;
        let part = optimize_with(&model, &psi0, &tgt, &w, &cfg, |c| {
            saved = Some(c.clone());
            if c.log.len() == 4 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })
        .unwrap();
        assert_eq!(part.status, Status::Interrupted);
        let resumed = resume(&model, &psi0, &tgt, &saved.unwrap(), &cfg, |_| ControlFlow::Continue(())).unwrap();
        assert_eq!(resumed.log.len(), full.log.len());
        for (a, b) in resumed.log.iter().zip(&full.log) {
            assert!((a.j_t - b.j_t).abs() < 1e-12 && (a.total - b.total).abs() < 1e-12);
        }
        for (a, b) in resumed.waveform.complex().iter().zip(full.waveform.complex()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn functional_terms() {
        let model = two_level();
        let w = guess(0.02);
        let cfg = OptimizationConfig::default();
        let tgt = QuantumState::basis(2, 1);
        let f = evaluate_functional(&tgt, &tgt, &w, &w, &cfg, 3.0).unwrap();
        assert_eq!((f.j_t, f.running_cost, f.total), (0.0, 0.0, 0.0));
        let psi = propagate_final(&model, &QuantumState::basis(2, 0), &w).unwrap();
        let g = evaluate_functional(&psi, &tgt, &w.scaled(1.01), &w, &cfg, 3.0).unwrap();
        assert!(g.running_cost > 0.0 && (g.total - g.j_t - g.running_cost).abs() < 1e-15);
        // a change where S = 0 costs infinitely much
        let mut ex = w.ex().to_vec();
        ex[0] += 1.0;
        let moved = Waveform::new(w.dt_ns(), ex, w.ey().to_vec()).unwrap();
        assert!(evaluate_functional(&psi, &tgt, &moved, &w, &cfg, 3.0).unwrap().running_cost.is_infinite());
    }

    #[test]
    fn config_validation() {
        assert!(OptimizationConfig { lambda: Some(0.0), ..Default::default() }.validate().is_err());
        assert!(OptimizationConfig { j_t_threshold: 1.5, ..Default::default() }.validate().is_err());
        let c = Constraints { e_max_mv: -1.0, cutoff_mhz: 460.0 };
        assert!(OptimizationConfig { constraints: Some(c), ..Default::default() }.validate().is_err());
        assert!(OptimizationConfig::default().validate().is_ok());
    }
}
