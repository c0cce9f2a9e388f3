//! wasm-bindgen bindings for the static page in `www/`.
//!
//! Build with
//! `cargo build -p circulon-web --release --target wasm32-unknown-unknown`
//! and `wasm-bindgen --target web --out-dir www/pkg` on the resulting
//! `circulon_web.wasm`.

use circulon::atom::QuantumDefectTable;
use circulon::propagator::{self, QuantumState, RecordSpec};
use circulon::pulse;
use circulon::qsl::{self, ValidityFlags};
use circulon::stark::{assemble_model, BasisModel, ModelConfig, StarkError};
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// A rubidium-85 two-diagonal model held across calls.
#[wasm_bindgen]
pub struct Demo {
    model: BasisModel,
}

impl Demo {
    pub fn build(n: u32, e_dc_v_per_cm: f64) -> Result<Demo, StarkError> {
        let cfg = ModelConfig { n, e_dc_v_per_cm, ..ModelConfig::default() };
        Ok(Demo { model: assemble_model(&cfg, &QuantumDefectTable::rubidium85())? })
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(n: u32, e_dc_v_per_cm: f64) -> Result<Demo, JsError> {
        Demo::build(n, e_dc_v_per_cm).map_err(js_err)
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Lowest-ladder transition frequencies in MHz followed by the mean
    /// ladder frequency.
    pub fn frequencies(&self) -> Vec<f64> {
        let mut f = self.model.ladder_frequencies_mhz();
        f.push(self.model.omega0_mhz());
        f
    }

    /// Propagates `|initial>` through a sigma+ flat-top pulse.
    pub fn flat_top(
        &self,
        amplitude_mv: f64,
        carrier_mhz: f64,
        t_stop_ns: f64,
        edge_ns: f64,
        initial: usize,
    ) -> Result<Trajectory, JsError> {
        let w = pulse::make_flat_top(amplitude_mv, carrier_mhz, t_stop_ns, edge_ns, 0.02).map_err(js_err)?;
        let psi0 = QuantumState::pivotal(&self.model, initial).ok_or_else(|| JsError::new("no such pivotal state"))?;
        let steps = w.steps();
        let spec = RecordSpec { stride: (steps / 200).max(1), ..RecordSpec::default() };
        let (_, rec) = propagator::propagate(&self.model, &psi0, &w, &spec).map_err(js_err)?;
        let last = rec.len() - 1;
        Ok(Trajectory {
            circular: rec.pivotal_populations.iter().map(|p| p.last().copied().unwrap_or(0.0)).collect(),
            final_populations: rec.pivotal_populations[last].clone(),
            times_ns: rec.times_ns,
            mean_m: rec.mean_m,
        })
    }
}

/// Recorded observables of one propagation.
#[wasm_bindgen]
pub struct Trajectory {
    times_ns: Vec<f64>,
    mean_m: Vec<f64>,
    circular: Vec<f64>,
    final_populations: Vec<f64>,
}

#[wasm_bindgen]
impl Trajectory {
    #[wasm_bindgen(getter)]
    pub fn times_ns(&self) -> Vec<f64> {
        self.times_ns.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn mean_m(&self) -> Vec<f64> {
        self.mean_m.clone()
    }

    /// Population of the circular state over time.
    #[wasm_bindgen(getter)]
    pub fn circular(&self) -> Vec<f64> {
        self.circular.clone()
    }

    /// Populations of `|m>`, `m = 0 ..= n-1`, at the final time.
    #[wasm_bindgen(getter)]
    pub fn final_populations(&self) -> Vec<f64> {
        self.final_populations.clone()
    }
}

/// Field limits of the two-diagonal model and the validity of a pulse.
#[wasm_bindgen]
pub struct Limits {
    pub critical_v_per_cm: f64,
    pub ionization_v_per_cm: f64,
    pub below_crossing: bool,
    pub below_ionization: bool,
    pub valid: bool,
}

#[wasm_bindgen]
pub fn limits(n: u32, e_dc_v_per_cm: f64, peak_mv: f64, t_stop_ns: f64) -> Limits {
    let flags = ValidityFlags::evaluate(peak_mv, t_stop_ns, n, e_dc_v_per_cm);
    Limits {
        critical_v_per_cm: qsl::critical_rf_field(n, e_dc_v_per_cm),
        ionization_v_per_cm: qsl::ionization_threshold(n),
        below_crossing: flags.below_crossing,
        below_ionization: flags.below_ionization,
        valid: flags.valid,
    }
}
