//! Run configuration, read from TOML. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use circulon::krotov::OptimizationConfig;
use circulon::propagator::Frame;
use circulon::pulse::Interpolation;
use circulon::qsl::GuessFamily;
use circulon::robustness::CoarseDomain;
use circulon::stark::ModelConfig;
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub threads: usize,
    /// Quantum-defect table; the shipped rubidium-85 table when absent.
    pub species_file: Option<PathBuf>,
    /// Prebuilt model bundle, used instead of `[model]` when given.
    pub model_file: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub states: States,
    pub pulse: Option<PulseSource>,
    #[serde(default)]
    pub propagate: PropagateBlock,
    pub optimize: Option<OptimizeBlock>,
    pub noise: Option<NoiseBlock>,
    pub qsl: Option<QslBlock>,
    pub demodulate: Option<DemodulateBlock>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Pivotal labels `|m>` of the lowest ladder.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct States {
    pub initial: usize,
    pub target: usize,
}

impl Default for States {
    fn default() -> Self {
        Self { initial: 2, target: 50 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PulseSource {
    File {
        path: PathBuf,
    },
    FlatTop {
        amplitude_mv: f64,
        carrier_mhz: f64,
        t_stop_ns: f64,
        edge_ns: f64,
        #[serde(default = "default_dt")]
        dt_ns: f64,
    },
    TwoStep {
        a_low_mv: f64,
        a_high_mv: f64,
        t_step_ns: f64,
        ramp_ns: f64,
        carrier_mhz: f64,
        t_stop_ns: f64,
        edge_ns: f64,
        #[serde(default = "default_dt")]
        dt_ns: f64,
    },
}

fn default_dt() -> f64 {
    0.02
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagateBlock {
    pub stride: usize,
    pub spin: bool,
    /// Bloch coordinates in the frame rotating at this carrier; lab frame
    /// when absent.
    pub rotating_frame_mhz: Option<f64>,
}

impl Default for PropagateBlock {
    fn default() -> Self {
        Self { stride: 50, spin: true, rotating_frame_mhz: None }
    }
}

impl PropagateBlock {
    pub fn frame(&self) -> Frame {
        match self.rotating_frame_mhz {
            Some(carrier_mhz) => Frame::Rotating { carrier_mhz },
            None => Frame::Lab,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeBlock {
    #[serde(default)]
    pub krotov: OptimizationConfig,
    /// Continue from a checkpoint written by an earlier run.
    pub resume: Option<PathBuf>,
    /// Write a resumable checkpoint every this many iterations.
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
    /// Exit code 4 unless the threshold was reached; when false a run that
    /// hits the iteration cap also succeeds.
    #[serde(default = "yes")]
    pub require_convergence: bool,
}

fn default_checkpoint_every() -> usize {
    100
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseBlock {
    pub rf: Option<RfNoiseBlock>,
    pub dc: Option<DcBlock>,
    pub coarse: Option<CoarseBlock>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfNoiseBlock {
    pub f_noise: Vec<f64>,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    pub carrier_mhz: f64,
}

fn default_realizations() -> usize {
    1000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcBlock {
    pub deltas_uv_per_cm: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoarseBlock {
    pub period_ns: f64,
    pub domain: CoarseDomainName,
    /// Needed for the quadrature domain.
    pub carrier_mhz: Option<f64>,
    #[serde(default)]
    pub interpolation: Interpolation,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoarseDomainName {
    Lab,
    Quadrature,
}

impl CoarseBlock {
    pub fn domain(&self) -> Result<CoarseDomain, String> {
        match (self.domain, self.carrier_mhz) {
            (CoarseDomainName::Lab, _) => Ok(CoarseDomain::Lab),
            (CoarseDomainName::Quadrature, Some(carrier_mhz)) => Ok(CoarseDomain::Quadrature { carrier_mhz }),
            (CoarseDomainName::Quadrature, None) => Err("noise.coarse: the quadrature domain needs carrier_mhz".into()),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QslBlock {
    pub t_stops_ns: Vec<f64>,
    pub family: GuessFamily,
    #[serde(default)]
    pub optimize: OptimizationConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemodulateBlock {
    pub carrier_mhz: f64,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Paths in the config are relative to the config file.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        if let Some(p) = &mut self.species_file {
            fix(p);
        }
        if let Some(p) = &mut self.model_file {
            fix(p);
        }
        if let Some(PulseSource::File { path }) = &mut self.pulse {
            fix(path);
        }
        if let Some(p) = self.optimize.as_mut().and_then(|o| o.resume.as_mut()) {
            fix(p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_configs_parse() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut seen = 0;
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "toml") {
                let text = std::fs::read_to_string(&path).unwrap();
                let cfg = RunConfig::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
                if let Some(c) = cfg.noise.as_ref().and_then(|n| n.coarse.as_ref()) {
                    c.domain().unwrap();
                }
                seen += 1;
            }
        }
        assert!(seen >= 5);
    }
}
