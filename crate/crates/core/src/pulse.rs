//! Sampled RF control fields.
//!
//! A [`Waveform`] holds the two lab-frame components `E_x, E_y` on a uniform
//! grid starting at `t = 0`, in ns and mV/cm. An [`Envelope`] holds the
//! complex quadrature signal `S(t)` relative to a carrier, with
//! `E_x + i E_y = S(t) exp(i w t)`; a real `S` is a pure sigma+ field.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Spectral energy fraction above half the carrier that flags a demodulated
/// envelope as aliased.
pub const ALIASING_WARNING: f64 = 1e-3;

/// Sampling period of a 1.2 GS/s arbitrary waveform generator, ns.
pub const AWG_PERIOD_NS: f64 = 1.0 / 1.2;

#[derive(Debug, Error)]
pub enum PulseError {
    #[error("invalid pulse parameters: {0}")]
    InvalidParameters(String),
    #[error("waveform components have different lengths ({0} and {1})")]
    LengthMismatch(usize, usize),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("time grids differ (dt {0} ns vs {1} ns, {2} vs {3} samples)")]
    GridMismatch(f64, f64, usize, usize),
}

fn invalid(msg: impl Into<String>) -> PulseError {
    PulseError::InvalidParameters(msg.into())
}

/// Field at the midpoint of interval `i` of an `n`-sample grid, by cubic
/// interpolation through the four nearest samples (quadratic on the first
/// and last interval, the chord mean for two samples). The chord mean alone
/// shrinks a carrier of phase step `x` per sample by `cos(x/2)`, which at
/// the default grid shifts fidelities by ~1e-4.
pub fn midpoint_field(n: usize, i: usize, f: impl Fn(usize) -> Complex64) -> Complex64 {
    debug_assert!(i + 1 < n);
    if n < 3 {
        0.5 * (f(i) + f(i + 1))
    } else if i == 0 {
        (3.0 * f(0) + 6.0 * f(1) - f(2)) / 8.0
    } else if i + 2 == n {
        (3.0 * f(i + 1) + 6.0 * f(i) - f(i - 1)) / 8.0
    } else {
        (9.0 * (f(i) + f(i + 1)) - f(i - 1) - f(i + 2)) / 16.0
    }
}

/// Number of grid intervals for a duration, rejecting non-integer ratios.
pub fn interval_count(t_stop_ns: f64, dt_ns: f64) -> Result<usize, PulseError> {
    if !(dt_ns > 0.0) || !(t_stop_ns > 0.0) || !dt_ns.is_finite() || !t_stop_ns.is_finite() {
        return Err(invalid(format!("need t_stop > 0 and dt > 0, got {t_stop_ns} and {dt_ns}")));
    }
    let steps = (t_stop_ns / dt_ns).round();
    if (steps * dt_ns - t_stop_ns).abs() > 1e-9 * t_stop_ns.max(1.0) {
        return Err(invalid(format!("t_stop = {t_stop_ns} ns is not a multiple of dt = {dt_ns} ns")));
    }
    Ok(steps as usize)
}

/// Lab-frame field on a uniform grid `t_i = i dt`, `i = 0 .. N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    dt_ns: f64,
    ex: Vec<f64>,
    ey: Vec<f64>,
}

impl Waveform {
    pub fn new(dt_ns: f64, ex: Vec<f64>, ey: Vec<f64>) -> Result<Self, PulseError> {
        if !(dt_ns > 0.0) || !dt_ns.is_finite() {
            return Err(invalid(format!("dt must be positive, got {dt_ns}")));
        }
        if ex.len() != ey.len() {
            return Err(PulseError::LengthMismatch(ex.len(), ey.len()));
        }
        if ex.len() < 2 {
            return Err(invalid("a waveform needs at least two samples"));
        }
        if let Some(i) = ex.iter().zip(&ey).position(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(PulseError::NonFinite(i));
        }
        Ok(Self { dt_ns, ex, ey })
    }

    pub fn zeros(dt_ns: f64, t_stop_ns: f64) -> Result<Self, PulseError> {
        let n = interval_count(t_stop_ns, dt_ns)? + 1;
        Self::new(dt_ns, vec![0.0; n], vec![0.0; n])
    }

    pub fn from_complex(dt_ns: f64, z: &[Complex64]) -> Result<Self, PulseError> {
        Self::new(dt_ns, z.iter().map(|v| v.re).collect(), z.iter().map(|v| v.im).collect())
    }

    pub fn dt_ns(&self) -> f64 {
        self.dt_ns
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.ex.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ex.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.ex.len() - 1
    }

    pub fn t_stop_ns(&self) -> f64 {
        self.steps() as f64 * self.dt_ns
    }

    pub fn time_ns(&self, i: usize) -> f64 {
        i as f64 * self.dt_ns
    }

    /// `E_x`, mV/cm.
    pub fn ex(&self) -> &[f64] {
        &self.ex
    }

    /// `E_y`, mV/cm.
    pub fn ey(&self) -> &[f64] {
        &self.ey
    }

    /// `E_x + i E_y` at sample `i`.
    pub fn field(&self, i: usize) -> Complex64 {
        Complex64::new(self.ex[i], self.ey[i])
    }

    pub fn complex(&self) -> Vec<Complex64> {
        (0..self.len()).map(|i| self.field(i)).collect()
    }

    /// Field held on interval `[t_i, t_{i+1}]`, see [`midpoint_field`].
    pub fn interval_field(&self, i: usize) -> Complex64 {
        midpoint_field(self.len(), i, |k| self.field(k))
    }

    /// Largest `|E(t)|`, mV/cm.
    pub fn peak(&self) -> f64 {
        (0..self.len()).map(|i| self.field(i).norm()).fold(0.0, f64::max)
    }

    /// `∫ |E|^2 dt` by the trapezoid rule, (mV/cm)^2 ns.
    pub fn energy(&self) -> f64 {
        let p: Vec<f64> = (0..self.len()).map(|i| self.field(i).norm_sqr()).collect();
        let inner: f64 = p[1..p.len() - 1].iter().sum();
        (inner + 0.5 * (p[0] + p[p.len() - 1])) * self.dt_ns
    }

    /// The field played backwards in time.
    pub fn time_reversed(&self) -> Self {
        let mut ex = self.ex.clone();
        let mut ey = self.ey.clone();
        ex.reverse();
        ey.reverse();
        Self { dt_ns: self.dt_ns, ex, ey }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dt_ns: self.dt_ns,
            ex: self.ex.iter().map(|v| v * factor).collect(),
            ey: self.ey.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn same_grid(&self, other: &Waveform) -> Result<(), PulseError> {
        if self.len() != other.len() || (self.dt_ns - other.dt_ns).abs() > 1e-12 * self.dt_ns {
            return Err(PulseError::GridMismatch(self.dt_ns, other.dt_ns, self.len(), other.len()));
        }
        Ok(())
    }
}

/// Complex quadrature signal relative to a carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    dt_ns: f64,
    carrier_mhz: f64,
    samples: Vec<Complex64>,
    aliasing_fraction: f64,
}

impl Envelope {
    pub fn new(dt_ns: f64, carrier_mhz: f64, samples: Vec<Complex64>) -> Result<Self, PulseError> {
        if !(dt_ns > 0.0) || !(carrier_mhz > 0.0) {
            return Err(invalid("envelope needs dt > 0 and a positive carrier"));
        }
        if samples.len() < 2 {
            return Err(invalid("an envelope needs at least two samples"));
        }
        if let Some(i) = samples.iter().position(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(PulseError::NonFinite(i));
        }
        Ok(Self { dt_ns, carrier_mhz, samples, aliasing_fraction: 0.0 })
    }

    pub fn dt_ns(&self) -> f64 {
        self.dt_ns
    }

    pub fn carrier_mhz(&self) -> f64 {
        self.carrier_mhz
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Spectral energy fraction of the envelope above half the carrier.
    pub fn aliasing_fraction(&self) -> f64 {
        self.aliasing_fraction
    }

    pub fn is_aliased(&self) -> bool {
        self.aliasing_fraction > ALIASING_WARNING
    }
}

fn carrier_phase(carrier_mhz: f64, t_ns: f64) -> f64 {
    2.0 * PI * carrier_mhz * 1e-3 * t_ns
}

/// Frequency of FFT bin `k` for `n` samples spaced `dt_ns`, in MHz.
fn bin_frequency_mhz(k: usize, n: usize, dt_ns: f64) -> f64 {
    let signed = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    signed / (n as f64 * dt_ns) * 1e3
}

fn fft(data: &mut [Complex64], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let plan = if inverse { planner.plan_fft_inverse(data.len()) } else { planner.plan_fft_forward(data.len()) };
    plan.process(data);
    if inverse {
        let scale = 1.0 / data.len() as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }
}

/// Zeroes every spectral bin for which `keep(frequency_mhz)` is false.
fn spectral_mask(signal: &[Complex64], dt_ns: f64, keep: impl Fn(f64) -> bool) -> Vec<Complex64> {
    let n = signal.len();
    let mut spec = signal.to_vec();
    fft(&mut spec, false);
    for (k, v) in spec.iter_mut().enumerate() {
        if !keep(bin_frequency_mhz(k, n, dt_ns)) {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    fft(&mut spec, true);
    spec
}

fn flat_top_amplitude(t: f64, amplitude: f64, t_stop: f64, edge: f64) -> f64 {
    if edge > 0.0 && t < edge {
        amplitude * (PI * t / (2.0 * edge)).sin().powi(2)
    } else if edge > 0.0 && t > t_stop - edge {
        amplitude * (PI * (t_stop - t) / (2.0 * edge)).sin().powi(2)
    } else {
        amplitude
    }
}

fn from_amplitude(dt_ns: f64, t_stop_ns: f64, carrier_mhz: f64, amplitude: impl Fn(f64) -> f64) -> Result<Waveform, PulseError> {
    let n = interval_count(t_stop_ns, dt_ns)? + 1;
    let mut ex = Vec::with_capacity(n);
    let mut ey = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * dt_ns;
        let a = amplitude(t);
        let phase = carrier_phase(carrier_mhz, t);
        ex.push(a * phase.cos());
        ey.push(a * phase.sin());
    }
    Waveform::new(dt_ns, ex, ey)
}

/// Sigma+ pulse with a flat top and sine-squared edges.
pub fn make_flat_top(
    amplitude_mv: f64,
    carrier_mhz: f64,
    t_stop_ns: f64,
    edge_ns: f64,
    dt_ns: f64,
) -> Result<Waveform, PulseError> {
    if !(edge_ns >= 0.0) || 2.0 * edge_ns > t_stop_ns {
        return Err(invalid(format!("edges of {edge_ns} ns do not fit in {t_stop_ns} ns")));
    }
    if !(amplitude_mv >= 0.0) || !amplitude_mv.is_finite() {
        return Err(invalid("amplitude must be finite and non-negative"));
    }
    from_amplitude(dt_ns, t_stop_ns, carrier_mhz, |t| flat_top_amplitude(t, amplitude_mv, t_stop_ns, edge_ns))
}

/// Parameters of the two-level amplitude guess.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoStep {
    pub a_low_mv: f64,
    pub a_high_mv: f64,
    /// Start of the ramp from `a_low` to `a_high`.
    pub t_step_ns: f64,
    pub ramp_ns: f64,
    pub carrier_mhz: f64,
    pub t_stop_ns: f64,
    pub edge_ns: f64,
}

impl TwoStep {
    pub fn amplitude(&self, t: f64) -> f64 {
        let s = self;
        if t > s.t_stop_ns - s.edge_ns {
            return flat_top_amplitude(t, s.a_high_mv, s.t_stop_ns, s.edge_ns);
        }
        if t < s.t_step_ns {
            return flat_top_amplitude(t, s.a_low_mv, f64::INFINITY, s.edge_ns);
        }
        if t < s.t_step_ns + s.ramp_ns {
            let x = (PI * (t - s.t_step_ns) / (2.0 * s.ramp_ns)).sin().powi(2);
            return s.a_low_mv + (s.a_high_mv - s.a_low_mv) * x;
        }
        s.a_high_mv
    }
}

/// Flat-top pulse whose plateau steps from `a_low` to `a_high` through a
/// sine-squared ramp.
pub fn make_two_step(p: &TwoStep, dt_ns: f64) -> Result<Waveform, PulseError> {
    if !(p.edge_ns >= 0.0 && p.ramp_ns >= 0.0) {
        return Err(invalid("edge and ramp durations must be non-negative"));
    }
    if p.edge_ns + p.ramp_ns + p.edge_ns > p.t_stop_ns + 1e-12 {
        return Err(invalid("edge + ramp + edge exceeds the pulse duration"));
    }
    if p.t_step_ns < p.edge_ns || p.t_step_ns + p.ramp_ns > p.t_stop_ns - p.edge_ns + 1e-12 {
        return Err(invalid("the ramp must lie between the rising and falling edges"));
    }
    if !(0.0 <= p.a_low_mv && p.a_low_mv <= p.a_high_mv) {
        return Err(invalid("need 0 <= a_low <= a_high"));
    }
    from_amplitude(dt_ns, p.t_stop_ns, p.carrier_mhz, |t| p.amplitude(t))
}

/// Krotov update shape `S(t)`: sine-squared switch-on and switch-off over
/// `rise_ns`, zero at both ends.
pub fn shape_function(t_ns: f64, t_stop_ns: f64, rise_ns: f64) -> f64 {
    if t_ns <= 0.0 || t_ns >= t_stop_ns {
        return 0.0;
    }
    if rise_ns <= 0.0 {
        return 1.0;
    }
    flat_top_amplitude(t_ns, 1.0, t_stop_ns, rise_ns.min(0.5 * t_stop_ns))
}

/// Quadrature demodulation `S = (E_x + i E_y) exp(-i w t)` followed by a
/// zero-phase spectral mask that removes the sigma- image at `-2 w`.
///
/// The mask edge sits at `-w`, halfway between the sigma+ band (around 0)
/// and the image. A pure sigma+ field demodulates to its envelope up to
/// the envelope's own spectral content below `-w`.
pub fn demodulate(w: &Waveform, carrier_mhz: f64) -> Result<Envelope, PulseError> {
    if !(carrier_mhz > 0.0) {
        return Err(invalid("carrier must be positive"));
    }
    let shifted: Vec<Complex64> =
        (0..w.len()).map(|i| w.field(i) * Complex64::from_polar(1.0, -carrier_phase(carrier_mhz, w.time_ns(i)))).collect();
    let samples = spectral_mask(&shifted, w.dt_ns(), |f| f > -carrier_mhz);
    let mut spec = samples.clone();
    fft(&mut spec, false);
    let total: f64 = spec.iter().map(|v| v.norm_sqr()).sum();
    let high: f64 = spec
        .iter()
        .enumerate()
        .filter(|(k, _)| bin_frequency_mhz(*k, spec.len(), w.dt_ns()).abs() > 0.5 * carrier_mhz)
        .map(|(_, v)| v.norm_sqr())
        .sum();
    let mut env = Envelope::new(w.dt_ns(), carrier_mhz, samples)?;
    env.aliasing_fraction = if total > 0.0 { high / total } else { 0.0 };
    Ok(env)
}

/// Exact change of frame `S = (E_x + i E_y) exp(-i w t)` with no filtering:
/// sigma- content stays in `S` at frequencies near `-2 w`.
pub fn rotate_to_envelope(w: &Waveform, carrier_mhz: f64) -> Result<Envelope, PulseError> {
    if !(carrier_mhz > 0.0) {
        return Err(invalid("carrier must be positive"));
    }
    let s = (0..w.len()).map(|i| w.field(i) * Complex64::from_polar(1.0, -carrier_phase(carrier_mhz, w.time_ns(i)))).collect();
    Envelope::new(w.dt_ns(), carrier_mhz, s)
}

/// Inverse of [`demodulate`]: `E_x + i E_y = S exp(i w t)`.
pub fn remodulate(e: &Envelope) -> Result<Waveform, PulseError> {
    let z: Vec<Complex64> = e
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| s * Complex64::from_polar(1.0, carrier_phase(e.carrier_mhz, i as f64 * e.dt_ns)))
        .collect();
    Waveform::from_complex(e.dt_ns, &z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    #[default]
    Linear,
    Hold,
}

fn coarse_grain_samples(
    data: &[Complex64],
    dt_ns: f64,
    period_ns: f64,
    mode: Interpolation,
) -> Result<Vec<Complex64>, PulseError> {
    if !(period_ns > 0.0) {
        return Err(invalid("sample period must be positive"));
    }
    if period_ns < dt_ns * (1.0 - 1e-12) {
        return Err(invalid(format!("sample period {period_ns} ns is shorter than dt = {dt_ns} ns")));
    }
    if (period_ns - dt_ns).abs() <= 1e-12 * dt_ns {
        return Ok(data.to_vec());
    }
    let t_stop = (data.len() - 1) as f64 * dt_ns;
    // knots that fall on a grid point take its sample exactly
    let at = |t: f64| -> Complex64 {
        let x = (t / dt_ns).clamp(0.0, (data.len() - 1) as f64);
        let nearest = x.round();
        if (x - nearest).abs() < 1e-9 {
            return data[nearest as usize];
        }
        let i = (x.floor() as usize).min(data.len() - 2);
        let frac = x - i as f64;
        data[i] * (1.0 - frac) + data[i + 1] * frac
    };
    let count = (t_stop / period_ns + 1e-9).floor() as usize + 1;
    let mut knots_t: Vec<f64> = (0..count).map(|k| k as f64 * period_ns).collect();
    if mode == Interpolation::Linear && t_stop - knots_t[count - 1] > 1e-12 {
        knots_t.push(t_stop);
    }
    let knots: Vec<Complex64> = knots_t.iter().map(|&t| at(t)).collect();
    Ok((0..data.len())
        .map(|i| {
            let t = i as f64 * dt_ns;
            let k = ((t / period_ns + 1e-9).floor() as usize).min(knots.len() - 1);
            match mode {
                Interpolation::Hold => knots[k],
                Interpolation::Linear => {
                    if k + 1 >= knots.len() {
                        knots[k]
                    } else {
                        let frac = (t - knots_t[k]) / (knots_t[k + 1] - knots_t[k]);
                        knots[k] * (1.0 - frac) + knots[k + 1] * frac
                    }
                }
            }
        })
        .collect())
}

/// Resamples the lab-frame field at `period_ns` and interpolates back onto
/// the simulation grid.
pub fn coarse_grain(w: &Waveform, period_ns: f64, mode: Interpolation) -> Result<Waveform, PulseError> {
    let z = coarse_grain_samples(&w.complex(), w.dt_ns(), period_ns, mode)?;
    Waveform::from_complex(w.dt_ns(), &z)
}

/// As [`coarse_grain`], applied to the quadratures.
pub fn coarse_grain_envelope(e: &Envelope, period_ns: f64, mode: Interpolation) -> Result<Envelope, PulseError> {
    let s = coarse_grain_samples(&e.samples, e.dt_ns, period_ns, mode)?;
    Envelope::new(e.dt_ns, e.carrier_mhz, s)
}

/// Scales every sample with `|E| > e_max` down to `e_max`, keeping the
/// instantaneous polarization direction.
pub fn clip_amplitude(w: &Waveform, e_max_mv: f64) -> Result<Waveform, PulseError> {
    if !(e_max_mv > 0.0) {
        return Err(invalid("E_max must be positive"));
    }
    let z: Vec<Complex64> = w
        .complex()
        .into_iter()
        .map(|v| {
            let a = v.norm();
            if a > e_max_mv {
                v * (e_max_mv / a)
            } else {
                v
            }
        })
        .collect();
    Waveform::from_complex(w.dt_ns(), &z)
}

/// Removes sigma+ components above `+cutoff` and sigma- components below
/// `-cutoff` (the positive and negative frequencies of `E_x + i E_y`).
pub fn filter_spectrum(w: &Waveform, cutoff_mhz: f64) -> Result<Waveform, PulseError> {
    if !(cutoff_mhz > 0.0) {
        return Err(invalid("cutoff must be positive"));
    }
    let z = spectral_mask(&w.complex(), w.dt_ns(), |f| f.abs() <= cutoff_mhz);
    Waveform::from_complex(w.dt_ns(), &z)
}

/// [`filter_spectrum`] expressed on the quadratures: lab frequency is the
/// envelope frequency plus the carrier.
pub fn filter_envelope(e: &Envelope, cutoff_mhz: f64) -> Result<Envelope, PulseError> {
    if !(cutoff_mhz > 0.0) {
        return Err(invalid("cutoff must be positive"));
    }
    let carrier = e.carrier_mhz;
    let s = spectral_mask(&e.samples, e.dt_ns, |f| (f + carrier).abs() <= cutoff_mhz);
    Envelope::new(e.dt_ns, carrier, s)
}

/// Fraction of spectral energy of `E_x + i E_y` beyond `+/- cutoff`.
pub fn energy_above(w: &Waveform, cutoff_mhz: f64) -> f64 {
    let mut spec = w.complex();
    fft(&mut spec, false);
    let n = spec.len();
    let (mut total, mut high) = (0.0, 0.0);
    for (k, v) in spec.iter().enumerate() {
        let p = v.norm_sqr();
        total += p;
        if bin_frequency_mhz(k, n, w.dt_ns()).abs() > cutoff_mhz {
            high += p;
        }
    }
    if total > 0.0 {
        high / total
    } else {
        0.0
    }
}

/// Half-widths (MHz) of the smallest intervals about `+carrier` (sigma+)
/// and `-carrier` (sigma-) that hold 99% of each component's energy. A
/// component carrying less than `1e-6` of the total energy has zero width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth {
    pub sigma_plus_mhz: f64,
    pub sigma_minus_mhz: f64,
}

impl Bandwidth {
    /// Full width of the wider component.
    pub fn width_mhz(&self) -> f64 {
        2.0 * self.sigma_plus_mhz.max(self.sigma_minus_mhz)
    }
}

pub fn bandwidth(w: &Waveform, carrier_mhz: f64) -> Bandwidth {
    let mut spec = w.complex();
    fft(&mut spec, false);
    let n = spec.len();
    let total: f64 = spec.iter().map(|v| v.norm_sqr()).sum();
    let half_width = |sign: f64| -> f64 {
        let mut bins: Vec<(f64, f64)> = spec
            .iter()
            .enumerate()
            .filter_map(|(k, v)| {
                let f = bin_frequency_mhz(k, n, w.dt_ns());
                (f * sign > 0.0).then(|| ((f - sign * carrier_mhz).abs(), v.norm_sqr()))
            })
            .collect();
        let energy: f64 = bins.iter().map(|b| b.1).sum();
        if energy <= 1e-6 * total || energy == 0.0 {
            return 0.0;
        }
        bins.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut acc = 0.0;
        for (d, p) in bins {
            acc += p;
            if acc >= 0.99 * energy {
                return d;
            }
        }
        f64::INFINITY
    };
    Bandwidth { sigma_plus_mhz: half_width(1.0), sigma_minus_mhz: half_width(-1.0) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_top_shape() {
        let w = make_flat_top(18.0, 230.0, 138.0, 10.0, 0.02).unwrap();
        assert_eq!(w.len(), 6901);
        assert!((w.peak() - 18.0).abs() < 1e-12);
        let amp: Vec<f64> = (0..w.len()).map(|i| w.field(i).norm()).collect();
        assert!(amp[..500].windows(2).all(|p| p[1] >= p[0] - 1e-12));
        assert!(amp[6400..].windows(2).all(|p| p[1] <= p[0] + 1e-12));
        assert_eq!(amp[0], 0.0);
        let zero = make_flat_top(0.0, 230.0, 138.0, 10.0, 0.02).unwrap();
        assert!(zero.ex().iter().chain(zero.ey()).all(|&v| v == 0.0));
    }

    #[test]
    fn degenerate_two_step_is_flat_top() {
        let p = TwoStep {
            a_low_mv: 40.0,
            a_high_mv: 40.0,
            t_step_ns: 10.0,
            ramp_ns: 10.0,
            carrier_mhz: 230.0,
            t_stop_ns: 65.0,
            edge_ns: 10.0,
        };
        let a = make_two_step(&p, 0.02).unwrap();
        let b = make_flat_top(40.0, 230.0, 65.0, 10.0, 0.02).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn two_step_energy_matches_piecewise_integral() {
        let p = TwoStep {
            a_low_mv: 30.0,
            a_high_mv: 45.0,
            t_step_ns: 10.0,
            ramp_ns: 10.0,
            carrier_mhz: 230.0,
            t_stop_ns: 65.0,
            edge_ns: 10.0,
        };
        let w = make_two_step(&p, 0.01).unwrap();
        // rise: a^2 * 3e/8; ramp: ∫ (a + d s)^2 with s = sin^2 over the ramp,
        // mean of s = 1/2, of s^2 = 3/8; plateau; fall: b^2 * 3e/8
        let (a, b, e, r) = (30.0f64, 45.0f64, 10.0, 10.0);
        let d = b - a;
        let rise = a * a * 3.0 * e / 8.0;
        let ramp = r * (a * a + a * d + d * d * 3.0 / 8.0);
        let plateau = b * b * (65.0 - 10.0 - 20.0);
        let fall = b * b * 3.0 * e / 8.0;
        let exact = rise + ramp + plateau + fall;
        assert!((w.energy() - exact).abs() / exact < 1e-6, "{} vs {exact}", w.energy());
    }

    #[test]
    fn sigma_plus_demodulates_to_real_envelope() {
        // sin^2 edges leave a 1/f^3 tail past the mask; 20 ns edges keep it
        // below 1e-3 of the plateau (10 ns edges sit right at it)
        let w = make_flat_top(18.0, 230.0, 138.0, 20.0, 0.02).unwrap();
        let e = demodulate(&w, 230.0).unwrap();
        for (i, s) in e.samples().iter().enumerate() {
            let t = i as f64 * 0.02;
            let a = flat_top_amplitude(t, 18.0, 138.0, 20.0);
            assert!((s.re - a).abs() < 1e-3 * 18.0 && s.im.abs() < 1e-3 * 18.0, "t = {t}: {s}");
        }
        assert!(!e.is_aliased());
    }

    #[test]
    fn sigma_minus_tone_is_removed() {
        let dt = 0.02;
        let n = 5001;
        let env = |t: f64| flat_top_amplitude(t, 1.0, 100.0, 20.0);
        let z: Vec<Complex64> = (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                Complex64::from_polar(env(t), -carrier_phase(230.0, t))
            })
            .collect();
        let w = Waveform::from_complex(dt, &z).unwrap();
        let e = demodulate(&w, 230.0).unwrap();
        let residual = e.samples().iter().map(|s| s.norm()).fold(0.0, f64::max);
        assert!(residual < 1e-3, "{residual}");
    }

    #[test]
    fn remodulate_inverts_demodulate() {
        let w = make_flat_top(30.0, 230.0, 65.0, 10.0, 0.02).unwrap();
        let e = demodulate(&w, 230.0).unwrap();
        let e2 = demodulate(&remodulate(&e).unwrap(), 230.0).unwrap();
        for (a, b) in e.samples().iter().zip(e2.samples()) {
            assert!((a - b).norm() < 1e-6 * 30.0);
        }
    }

    #[test]
    fn coarse_grain_identity_and_hold() {
        let w = make_flat_top(30.0, 230.0, 20.0, 5.0, 0.02).unwrap();
        assert_eq!(coarse_grain(&w, 0.02, Interpolation::Linear).unwrap(), w);
        let h = coarse_grain(&w, 0.2, Interpolation::Hold).unwrap();
        for i in 0..w.len() {
            let k = (i / 10) * 10;
            assert!((h.field(i) - w.field(k)).norm() < 1e-12, "{i}");
        }
        assert!(coarse_grain(&w, 0.01, Interpolation::Linear).is_err());
    }

    #[test]
    fn clip_to_plateau() {
        let w = make_flat_top(50.0, 230.0, 65.0, 10.0, 0.02).unwrap();
        let c = clip_amplitude(&w, 46.0).unwrap();
        assert!((c.field(1600).norm() - 46.0).abs() < 1e-12);
        assert!(c.energy() <= w.energy());
        let within = clip_amplitude(&w, 60.0).unwrap();
        assert_eq!(within, w);
    }

    #[test]
    fn stopband_tone_vanishes_and_filter_is_projection() {
        let w = make_flat_top(10.0, 500.0, 100.0, 0.0, 0.02).unwrap();
        // a constant-amplitude tone on a non-periodic grid leaks a little;
        // the bulk must go
        let f = filter_spectrum(&w, 460.0).unwrap();
        assert!(f.energy() < 1e-2 * w.energy());
        let g = make_flat_top(40.0, 230.0, 65.0, 10.0, 0.02).unwrap();
        let once = filter_spectrum(&g, 460.0).unwrap();
        let twice = filter_spectrum(&once, 460.0).unwrap();
        for i in 0..once.len() {
            assert!((once.field(i) - twice.field(i)).norm() < 1e-12 * 40.0);
        }
    }

    #[test]
    fn bandwidth_of_smooth_pulse_is_narrow() {
        let g = make_flat_top(40.0, 230.0, 65.0, 10.0, 0.02).unwrap();
        let b = bandwidth(&g, 230.0);
        assert!(b.sigma_plus_mhz < 100.0, "{b:?}");
        assert_eq!(b.sigma_minus_mhz, 0.0);
    }

    #[test]
    fn shape_function_bounds() {
        assert_eq!(shape_function(0.0, 65.0, 5.0), 0.0);
        assert_eq!(shape_function(65.0, 65.0, 5.0), 0.0);
        assert_eq!(shape_function(30.0, 65.0, 5.0), 1.0);
        assert!((shape_function(2.5, 65.0, 5.0) - 0.5).abs() < 1e-12);
    }
}
