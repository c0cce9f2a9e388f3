//! Fidelity under AWG coarse graining, DC-field offsets and RF amplitude
//! noise.
//!
//! RF noise multiplies each field component by `1 + R f_noise` with `R`
//! uniform on `[-1, 1]`, redrawn every half period of the nominal carrier
//! and independently for `E_x` and `E_y`. Half periods are counted from the
//! zeros of `cos(w t)` for `E_x` and of `sin(w t)` for `E_y`. Realization `r`
//! draws from the ChaCha8 stream `r` of the seed, so a realization does not
//! depend on how many others run or in which order, and the same draws are
//! reused at every noise level of a sweep.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::CompensatedSum;
use crate::propagator::{fidelity, propagate_final, PropagationError, QuantumState};
use crate::pulse::{self, Interpolation, PulseError, Waveform};
use crate::stark::{BasisModel, StarkError};

#[derive(Debug, Error)]
pub enum RobustnessError {
    #[error("invalid noise parameters: {0}")]
    Invalid(String),
    #[error("pivotal state |{0}> does not exist in the model")]
    MissingState(usize),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error(transparent)]
    Pulse(#[from] PulseError),
    #[error(transparent)]
    Stark(#[from] StarkError),
}

/// Where a coarse graining is applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "domain", rename_all = "kebab-case")]
pub enum CoarseDomain {
    Lab,
    /// On the envelope about `carrier_mhz`.
    Quadrature {
        carrier_mhz: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseSpec {
    RfAmplitude { f_noise: f64, realizations: usize, seed: u64, carrier_mhz: f64 },
    DcOffset { delta_uv_per_cm: f64 },
    CoarseGrain { period_ns: f64, domain: CoarseDomain, interpolation: Interpolation },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), RobustnessError> {
        let bad = |m: &str| Err(RobustnessError::Invalid(m.into()));
        match *self {
            NoiseSpec::RfAmplitude { f_noise, realizations, carrier_mhz, .. } => {
                if !(0.0..=1.0).contains(&f_noise) {
                    return bad("f_noise must lie in [0, 1]");
                }
                if realizations == 0 {
                    return bad("need at least one realization");
                }
                if !(carrier_mhz > 0.0) {
                    return bad("carrier must be positive");
                }
            }
            NoiseSpec::DcOffset { delta_uv_per_cm } => {
                if !delta_uv_per_cm.is_finite() {
                    return bad("DC offset must be finite");
                }
            }
            NoiseSpec::CoarseGrain { period_ns, .. } => {
                if !(period_ns > 0.0) {
                    return bad("sample period must be positive");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseResult {
    pub spec: NoiseSpec,
    pub fidelities: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (0 for a single realization).
    pub std: f64,
}

impl NoiseResult {
    fn new(spec: NoiseSpec, fidelities: Vec<f64>) -> Self {
        let n = fidelities.len() as f64;
        let mean = fidelities.iter().copied().collect::<CompensatedSum>().value() / n;
        let var = if fidelities.len() > 1 {
            fidelities.iter().map(|f| (f - mean).powi(2)).collect::<CompensatedSum>().value() / (n - 1.0)
        } else {
            0.0
        };
        Self { spec, fidelities, mean, std: var.sqrt() }
    }
}

/// Half-period index of `E_x` (zeros of `cos`) and `E_y` (zeros of `sin`).
fn half_periods(carrier_mhz: f64, t_ns: f64) -> (usize, usize) {
    let wt = 2.0 * PI * carrier_mhz * 1e-3 * t_ns;
    (((wt + 0.5 * PI) / PI).floor() as usize, (wt / PI).floor() as usize)
}

/// Uniform draws on `[-1, 1]` for the `E_x` and `E_y` half periods of
/// realization `realization`.
pub fn noise_draws(seed: u64, realization: u64, segments: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(realization);
    let x = (0..segments).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let y = (0..segments).map(|_| rng.random_range(-1.0..=1.0)).collect();
    (x, y)
}

/// One noisy copy of `w`.
pub fn noisy_waveform(w: &Waveform, f_noise: f64, carrier_mhz: f64, seed: u64, realization: u64) -> Result<Waveform, PulseError> {
    let (last_x, last_y) = half_periods(carrier_mhz, w.t_stop_ns());
    let (rx, ry) = noise_draws(seed, realization, last_x.max(last_y) + 1);
    let mut ex = w.ex().to_vec();
    let mut ey = w.ey().to_vec();
    for i in 0..w.len() {
        let (kx, ky) = half_periods(carrier_mhz, w.time_ns(i));
        ex[i] *= 1.0 + rx[kx] * f_noise;
        ey[i] *= 1.0 + ry[ky] * f_noise;
    }
    Waveform::new(w.dt_ns(), ex, ey)
}

fn map_realizations<T: Send>(
    count: usize,
    f: impl Fn(u64) -> Result<T, RobustnessError> + Sync + Send,
) -> Result<Vec<T>, RobustnessError> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count as u64).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count as u64).map(f).collect()
    }
}

/// Fidelities of `realizations` noisy copies of `w` at one noise level.
pub fn rf_noise(
    model: &BasisModel,
    psi0: &QuantumState,
    target: &QuantumState,
    w: &Waveform,
    spec: NoiseSpec,
) -> Result<NoiseResult, RobustnessError> {
    spec.validate()?;
    let NoiseSpec::RfAmplitude { f_noise, realizations, seed, carrier_mhz } = spec else {
        return Err(RobustnessError::Invalid("expected an rf-amplitude spec".into()));
    };
    let fidelities = map_realizations(realizations, |r| {
        let noisy = noisy_waveform(w, f_noise, carrier_mhz, seed, r)?;
        Ok(fidelity(&propagate_final(model, psi0, &noisy)?, target)?)
    })?;
    Ok(NoiseResult::new(spec, fidelities))
}

/// [`rf_noise`] at each level of `f_noise`, sharing the random draws.
#[allow(clippy::too_many_arguments)]
pub fn rf_noise_sweep(
    model: &BasisModel,
    psi0: &QuantumState,
    target: &QuantumState,
    w: &Waveform,
    f_noise: &[f64],
    realizations: usize,
    seed: u64,
    carrier_mhz: f64,
) -> Result<Vec<NoiseResult>, RobustnessError> {
    f_noise
        .iter()
        .map(|&f| rf_noise(model, psi0, target, w, NoiseSpec::RfAmplitude { f_noise: f, realizations, seed, carrier_mhz }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcOffsetPoint {
    pub delta_uv_per_cm: f64,
    pub nominal: f64,
    /// Fidelity at `E_DC - delta/2`.
    pub fidelity_low: f64,
    /// Fidelity at `E_DC + delta/2`.
    pub fidelity_high: f64,
    /// Largest `|F - F_nominal|` of the two.
    pub max_change: f64,
}

fn pivotal_pair(model: &BasisModel, initial_m: usize, target_m: usize) -> Result<(QuantumState, QuantumState), RobustnessError> {
    let psi0 = QuantumState::pivotal(model, initial_m).ok_or(RobustnessError::MissingState(initial_m))?;
    let target = QuantumState::pivotal(model, target_m).ok_or(RobustnessError::MissingState(target_m))?;
    Ok((psi0, target))
}

fn pivotal_fidelity(model: &BasisModel, initial_m: usize, target_m: usize, w: &Waveform) -> Result<f64, RobustnessError> {
    let (psi0, target) = pivotal_pair(model, initial_m, target_m)?;
    Ok(fidelity(&propagate_final(model, &psi0, w)?, &target)?)
}

/// Rebuilds the model at `E_DC -/+ delta/2` through `build` (DC field in
/// V/cm) and propagates the unchanged pulse between the pivotal states
/// `|initial_m>` and `|target_m>`. The carrier is not retuned.
pub fn dc_offset_test(
    build: impl Fn(f64) -> Result<BasisModel, StarkError> + Sync,
    e_dc_v_per_cm: f64,
    initial_m: usize,
    target_m: usize,
    w: &Waveform,
    deltas_uv_per_cm: &[f64],
) -> Result<Vec<DcOffsetPoint>, RobustnessError> {
    for &d in deltas_uv_per_cm {
        NoiseSpec::DcOffset { delta_uv_per_cm: d }.validate()?;
    }
    let nominal = pivotal_fidelity(&build(e_dc_v_per_cm)?, initial_m, target_m, w)?;
    let mut fields: Vec<f64> = Vec::new();
    for &d in deltas_uv_per_cm {
        if d != 0.0 {
            let half = 0.5 * d * 1e-6;
            fields.push(e_dc_v_per_cm - half);
            fields.push(e_dc_v_per_cm + half);
        }
    }
    let shifted = map_realizations(fields.len(), |k| pivotal_fidelity(&build(fields[k as usize])?, initial_m, target_m, w))?;
    let mut next = shifted.into_iter();
    Ok(deltas_uv_per_cm
        .iter()
        .map(|&d| {
            let (low, high) =
                if d == 0.0 { (nominal, nominal) } else { (next.next().unwrap_or(f64::NAN), next.next().unwrap_or(f64::NAN)) };
            DcOffsetPoint {
                delta_uv_per_cm: d,
                nominal,
                fidelity_low: low,
                fidelity_high: high,
                max_change: (low - nominal).abs().max((high - nominal).abs()),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseGrainResult {
    pub fidelity: f64,
    /// Pivotal `m` with the largest final population.
    pub most_populated_m: usize,
    pub pivotal_populations: Vec<f64>,
}

/// The pulse after resampling at `period_ns` in the given domain.
pub fn coarse_grained(w: &Waveform, period_ns: f64, domain: CoarseDomain, mode: Interpolation) -> Result<Waveform, PulseError> {
    match domain {
        CoarseDomain::Lab => pulse::coarse_grain(w, period_ns, mode),
        CoarseDomain::Quadrature { carrier_mhz } => {
            let e = pulse::rotate_to_envelope(w, carrier_mhz)?;
            pulse::remodulate(&pulse::coarse_grain_envelope(&e, period_ns, mode)?)
        }
    }
}

pub fn coarse_grain_test(
    model: &BasisModel,
    psi0: &QuantumState,
    target: &QuantumState,
    w: &Waveform,
    period_ns: f64,
    domain: CoarseDomain,
    mode: Interpolation,
) -> Result<CoarseGrainResult, RobustnessError> {
    NoiseSpec::CoarseGrain { period_ns, domain, interpolation: mode }.validate()?;
    let coarse = coarse_grained(w, period_ns, domain, mode)?;
    let psi = propagate_final(model, psi0, &coarse)?;
    let pops: Vec<f64> = model.pivotal().iter().map(|&i| psi.amplitudes()[i].norm_sqr()).collect();
    let most = pops.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |(m, _)| m);
    Ok(CoarseGrainResult { fidelity: fidelity(&psi, target)?, most_populated_m: most, pivotal_populations: pops })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SparseReal;

    #[test]
    fn draws_are_uniform_on_the_interval() {
        let (x, y) = noise_draws(7, 0, 5000);
        let all: Vec<f64> = x.into_iter().chain(y).collect();
        assert!(all.iter().all(|r| (-1.0..=1.0).contains(r)));
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let var = all.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var * 3.0 - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn streams_are_independent_of_order() {
        assert_eq!(noise_draws(3, 5, 10), noise_draws(3, 5, 10));
        assert_ne!(noise_draws(3, 5, 10), noise_draws(3, 6, 10));
        // a longer draw extends the shorter one for x
        assert_eq!(noise_draws(3, 5, 20).0[..10], noise_draws(3, 5, 10).0[..10]);
    }

    #[test]
    fn noise_is_constant_between_carrier_zeros() {
        let w = pulse::make_flat_top(10.0, 230.0, 20.0, 2.0, 0.01).unwrap();
        let noisy = noisy_waveform(&w, 0.5, 230.0, 1, 0).unwrap();
        let mut factors_x = Vec::new();
        for i in 0..w.len() {
            if w.ex()[i].abs() > 1e-6 {
                factors_x.push((half_periods(230.0, w.time_ns(i)).0, noisy.ex()[i] / w.ex()[i]));
            }
        }
        for pair in factors_x.windows(2) {
            if pair[0].0 == pair[1].0 {
                assert!((pair[0].1 - pair[1].1).abs() < 1e-12);
            }
        }
        assert!(factors_x.iter().all(|f| (0.5..=1.5).contains(&f.1)));
        // the x segment changes exactly where cos(w t) changes sign
        for i in 1..w.len() {
            let (a, b) = (half_periods(230.0, w.time_ns(i - 1)).0, half_periods(230.0, w.time_ns(i)).0);
            if a != b {
                let c0 = (2.0 * PI * 0.23 * w.time_ns(i - 1)).cos();
                let c1 = (2.0 * PI * 0.23 * w.time_ns(i)).cos();
                assert!(c0 * c1 <= 0.0);
            }
        }
    }

    fn toy() -> (BasisModel, QuantumState, QuantumState, Waveform) {
        let gap = 3.5e-8;
        let mut l = SparseReal::new(2, 2);
        l.push(1, 0, 1000.0);
        let model = BasisModel::toy(&[0.0, gap], l, vec![0, 1], 2.0).unwrap();
        let w = pulse::make_flat_top(8.0, crate::units::au_to_mhz(gap), 20.0, 4.0, 0.02).unwrap();
        (model, QuantumState::basis(2, 0), QuantumState::basis(2, 1), w)
    }

    #[test]
    fn zero_noise_reproduces_the_noiseless_fidelity() {
        let (model, psi0, tgt, w) = toy();
        let clean = fidelity(&propagate_final(&model, &psi0, &w).unwrap(), &tgt).unwrap();
        let r = rf_noise(
            &model,
            &psi0,
            &tgt,
            &w,
            NoiseSpec::RfAmplitude { f_noise: 0.0, realizations: 8, seed: 1, carrier_mhz: 230.0 },
        )
        .unwrap();
        assert!(r.fidelities.iter().all(|&f| f == clean));
        assert_eq!(r.std, 0.0);
    }

    #[test]
    fn single_realization_is_reproducible() {
        let (model, psi0, tgt, w) = toy();
        let spec = NoiseSpec::RfAmplitude { f_noise: 0.2, realizations: 1, seed: 99, carrier_mhz: 230.0 };
        let a = rf_noise(&model, &psi0, &tgt, &w, spec).unwrap();
        let by_hand = noisy_waveform(&w, 0.2, 230.0, 99, 0).unwrap();
        let f = fidelity(&propagate_final(&model, &psi0, &by_hand).unwrap(), &tgt).unwrap();
        assert_eq!(a.fidelities, vec![f]);
        assert_eq!(rf_noise(&model, &psi0, &tgt, &w, spec).unwrap(), a);
    }

    #[test]
    fn coarse_graining_at_the_grid_step_is_the_identity() {
        let (model, psi0, tgt, w) = toy();
        let clean = fidelity(&propagate_final(&model, &psi0, &w).unwrap(), &tgt).unwrap();
        for domain in [CoarseDomain::Lab, CoarseDomain::Quadrature { carrier_mhz: 230.0 }] {
            let r = coarse_grain_test(&model, &psi0, &tgt, &w, w.dt_ns(), domain, Interpolation::Linear).unwrap();
            assert!((r.fidelity - clean).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let spec = NoiseSpec::RfAmplitude { f_noise: 1.5, realizations: 1, seed: 0, carrier_mhz: 230.0 };
        assert!(spec.validate().is_err());
        let spec = NoiseSpec::RfAmplitude { f_noise: 0.1, realizations: 0, seed: 0, carrier_mhz: 230.0 };
        assert!(spec.validate().is_err());
    }
}
