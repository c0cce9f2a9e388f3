//! Text and JSON interchange formats.
//!
//! Every file starts with a provenance header naming the software version
//! and the SHA-256 of the config text that produced it. Floating-point
//! samples are written in shortest round-trip form, so a waveform or model
//! read back is bit-identical to the one written.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::krotov::{Checkpoint, IterationRecord};
use crate::linalg::SparseReal;
use crate::propagator::TrajectoryRecord;
use crate::pulse::{Envelope, PulseError, Waveform};
use crate::qsl::SweepPoint;
use crate::robustness::{CoarseGrainResult, DcOffsetPoint, NoiseResult, NoiseSpec};
use crate::stark::{BasisModel, LadderGap, ModelConfig, StarkError, StarkLevel};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Pulse(#[from] PulseError),
    #[error(transparent)]
    Stark(#[from] StarkError),
}

/// Hex SHA-256 of `text`.
pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub software: String,
    pub config_sha256: Option<String>,
}

impl Provenance {
    pub fn new(config_text: Option<&str>) -> Self {
        Self { software: format!("circulon {}", crate::VERSION), config_sha256: config_text.map(config_hash) }
    }

    fn header(&self, kind: &str) -> String {
        format!(
            "# circulon {kind}\n# software: {}\n# config-sha256: {}\n",
            self.software,
            self.config_sha256.as_deref().unwrap_or("none")
        )
    }
}

pub fn read_text(path: impl AsRef<Path>) -> Result<String, IoError> {
    let p = path.as_ref();
    std::fs::read_to_string(p).map_err(|source| IoError::File { path: p.display().to_string(), source })
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<(), IoError> {
    let p = path.as_ref();
    std::fs::write(p, text).map_err(|source| IoError::File { path: p.display().to_string(), source })
}

/// Header values (`# key: value`) and data rows with their line numbers.
struct Parsed<'a> {
    kind: Option<&'a str>,
    keys: Vec<(&'a str, &'a str)>,
    rows: Vec<(usize, Vec<&'a str>)>,
}

impl<'a> Parsed<'a> {
    fn new(text: &'a str) -> Self {
        let mut kind = None;
        let mut keys = Vec::new();
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                let c = c.trim();
                if let Some((k, v)) = c.split_once(':') {
                    keys.push((k.trim(), v.trim()));
                } else if let Some(k) = c.strip_prefix("circulon ") {
                    kind.get_or_insert(k.trim());
                }
                continue;
            }
            rows.push((i + 1, line.split_whitespace().collect()));
        }
        Self { kind, keys, rows }
    }

    fn key(&self, k: &str) -> Result<&'a str, IoError> {
        self.keys
            .iter()
            .find(|(key, _)| *key == k)
            .map(|(_, v)| *v)
            .ok_or_else(|| IoError::Format(format!("missing header `{k}`")))
    }

    fn number(&self, k: &str) -> Result<f64, IoError> {
        self.key(k)?.parse().map_err(|_| IoError::Format(format!("header `{k}` is not a number")))
    }

    fn expect_kind(&self, kind: &str) -> Result<(), IoError> {
        match self.kind {
            Some(k) if k == kind => Ok(()),
            other => Err(IoError::Format(format!("expected a {kind} file, found {}", other.unwrap_or("no header")))),
        }
    }

    /// Columns 1 and 2 of each row; column 0 is the time and must match the
    /// grid.
    fn sample_pairs(&self, dt_ns: f64) -> Result<(Vec<f64>, Vec<f64>), IoError> {
        let samples = self.number("samples")? as usize;
        if self.rows.len() != samples {
            return Err(IoError::Format(format!("header says {samples} samples, found {}", self.rows.len())));
        }
        let mut a = Vec::with_capacity(samples);
        let mut b = Vec::with_capacity(samples);
        for (k, (line, cols)) in self.rows.iter().enumerate() {
            if cols.len() != 3 {
                return Err(IoError::Parse { line: *line, msg: format!("expected 3 columns, found {}", cols.len()) });
            }
            let num =
                |s: &str| s.parse::<f64>().map_err(|_| IoError::Parse { line: *line, msg: format!("`{s}` is not a number") });
            let t = num(cols[0])?;
            if (t - k as f64 * dt_ns).abs() > 1e-9 * (1.0 + t.abs()) {
                return Err(IoError::Parse { line: *line, msg: format!("time {t} is off the grid") });
            }
            a.push(num(cols[1])?);
            b.push(num(cols[2])?);
        }
        Ok((a, b))
    }
}

pub fn waveform_to_string(w: &Waveform, prov: &Provenance) -> String {
    let mut s = prov.header("waveform");
    let _ = writeln!(s, "# dt_ns: {:e}\n# samples: {}\n# columns: t_ns ex_mv_per_cm ey_mv_per_cm", w.dt_ns(), w.len());
    for i in 0..w.len() {
        let _ = writeln!(s, "{} {:e} {:e}", w.time_ns(i), w.ex()[i], w.ey()[i]);
    }
    s
}

pub fn parse_waveform(text: &str) -> Result<Waveform, IoError> {
    let p = Parsed::new(text);
    p.expect_kind("waveform")?;
    let dt = p.number("dt_ns")?;
    let (ex, ey) = p.sample_pairs(dt)?;
    Ok(Waveform::new(dt, ex, ey)?)
}

pub fn envelope_to_string(e: &Envelope, prov: &Provenance) -> String {
    let mut s = prov.header("envelope");
    let _ = writeln!(
        s,
        "# dt_ns: {:e}\n# carrier_mhz: {:e}\n# samples: {}\n# columns: t_ns re_mv_per_cm im_mv_per_cm",
        e.dt_ns(),
        e.carrier_mhz(),
        e.len()
    );
    for (i, v) in e.samples().iter().enumerate() {
        let _ = writeln!(s, "{} {:e} {:e}", i as f64 * e.dt_ns(), v.re, v.im);
    }
    s
}

pub fn parse_envelope(text: &str) -> Result<Envelope, IoError> {
    let p = Parsed::new(text);
    p.expect_kind("envelope")?;
    let dt = p.number("dt_ns")?;
    let carrier = p.number("carrier_mhz")?;
    let (re, im) = p.sample_pairs(dt)?;
    let s = re.into_iter().zip(im).map(|(a, b)| crate::Complex64::new(a, b)).collect();
    Ok(Envelope::new(dt, carrier, s)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LevelRecord {
    index: usize,
    n: u32,
    m: i32,
    mu: i32,
    rank: usize,
    energy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    basis: Option<Vec<(u32, u32)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eigenvector: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelBundle {
    format: String,
    provenance: Provenance,
    config: ModelConfig,
    species: String,
    dim: usize,
    levels: Vec<LevelRecord>,
    raising: Vec<(usize, usize, f64)>,
    pivotal: Vec<usize>,
    gaps: Vec<LadderGap>,
}

const MODEL_FORMAT: &str = "circulon-model-1";

/// JSON bundle of a model; eigenvectors are optional and only needed to
/// map states back onto the spherical basis.
pub fn model_to_json(model: &BasisModel, include_vectors: bool, prov: &Provenance) -> Result<String, IoError> {
    let levels = model
        .levels()
        .iter()
        .map(|l| LevelRecord {
            index: l.index,
            n: l.n,
            m: l.m,
            mu: l.mu,
            rank: l.rank,
            energy: l.energy,
            basis: include_vectors.then(|| l.basis.as_ref().clone()),
            eigenvector: include_vectors.then(|| l.eigenvector.clone()),
        })
        .collect();
    let bundle = ModelBundle {
        format: MODEL_FORMAT.into(),
        provenance: prov.clone(),
        config: model.config().clone(),
        species: model.species().into(),
        dim: model.dim(),
        levels,
        raising: model.raising().entries.clone(),
        pivotal: model.pivotal().to_vec(),
        gaps: model.gaps().to_vec(),
    };
    Ok(serde_json::to_string_pretty(&bundle)?)
}

pub fn model_from_json(text: &str) -> Result<BasisModel, IoError> {
    let b: ModelBundle = serde_json::from_str(text)?;
    if b.format != MODEL_FORMAT {
        return Err(IoError::Format(format!("unknown model format `{}`", b.format)));
    }
    if b.levels.len() != b.dim {
        return Err(IoError::Format(format!("{} levels listed for dimension {}", b.levels.len(), b.dim)));
    }
    // levels of one block share their basis
    let mut bases: Vec<Arc<Vec<(u32, u32)>>> = Vec::new();
    let levels = b
        .levels
        .into_iter()
        .map(|l| {
            let basis = match l.basis {
                Some(v) => match bases.iter().find(|a| a.as_slice() == v.as_slice()) {
                    Some(a) => a.clone(),
                    None => {
                        let a = Arc::new(v);
                        bases.push(a.clone());
                        a
                    }
                },
                None => Arc::new(Vec::new()),
            };
            StarkLevel {
                index: l.index,
                n: l.n,
                m: l.m,
                mu: l.mu,
                rank: l.rank,
                energy: l.energy,
                basis,
                eigenvector: l.eigenvector.unwrap_or_default(),
            }
        })
        .collect();
    let mut raising = SparseReal::new(b.dim, b.dim);
    for (i, j, v) in b.raising {
        if i >= b.dim || j >= b.dim {
            return Err(IoError::Format(format!("coupling ({i}, {j}) outside the basis")));
        }
        raising.push(i, j, v);
    }
    Ok(BasisModel::from_parts(b.config, b.species, levels, raising, b.pivotal, b.gaps)?)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: String,
    provenance: Provenance,
    lambda: f64,
    increases: usize,
    dt_ns: f64,
    ex: Vec<f64>,
    ey: Vec<f64>,
    log: Vec<IterationRecord>,
}

const CHECKPOINT_FORMAT: &str = "circulon-checkpoint-1";

pub fn checkpoint_to_json(c: &Checkpoint, prov: &Provenance) -> Result<String, IoError> {
    Ok(serde_json::to_string(&CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        provenance: prov.clone(),
        lambda: c.lambda,
        increases: c.increases,
        dt_ns: c.waveform.dt_ns(),
        ex: c.waveform.ex().to_vec(),
        ey: c.waveform.ey().to_vec(),
        log: c.log.clone(),
    })?)
}

pub fn checkpoint_from_json(text: &str) -> Result<Checkpoint, IoError> {
    let f: CheckpointFile = serde_json::from_str(text)?;
    if f.format != CHECKPOINT_FORMAT {
        return Err(IoError::Format(format!("unknown checkpoint format `{}`", f.format)));
    }
    Ok(Checkpoint { lambda: f.lambda, increases: f.increases, waveform: Waveform::new(f.dt_ns, f.ex, f.ey)?, log: f.log })
}

/// Pivotal populations, `<m>`, `sigma_m` and, when recorded, the Bloch
/// vector and closest coherent state per time.
pub fn trajectory_table(rec: &TrajectoryRecord, prov: &Provenance) -> String {
    let mut s = prov.header("trajectory");
    let pops = rec.pivotal_populations.first().map_or(0, |p| p.len());
    let spin = !rec.bloch.is_empty();
    s.push_str("# columns: t_ns mean_m sigma_m");
    if spin {
        s.push_str(" X Y Z scs_theta scs_phi scs_overlap");
    }
    for m in 0..pops {
        let _ = write!(s, " P{m}");
    }
    s.push('\n');
    for k in 0..rec.len() {
        let _ = write!(s, "{} {:e} {:e}", rec.times_ns[k], rec.mean_m[k], rec.sigma_m[k]);
        if spin {
            let b = rec.bloch[k];
            let c = rec.closest_scs[k];
            let _ = write!(s, " {:e} {:e} {:e} {:e} {:e} {:e}", b[0], b[1], b[2], c[0], c[1], c[2]);
        }
        for p in &rec.pivotal_populations[k] {
            let _ = write!(s, " {p:e}");
        }
        s.push('\n');
    }
    s
}

pub fn iteration_table(log: &[IterationRecord], prov: &Provenance) -> String {
    let mut s = prov.header("iteration-log");
    s.push_str("# columns: iter J_T running_cost J peak_mv_per_cm bandwidth_mhz\n");
    for r in log {
        let _ =
            writeln!(s, "{} {:e} {:e} {:e} {:e} {:e}", r.iteration, r.j_t, r.running_cost, r.total, r.peak_mv, r.bandwidth_mhz);
    }
    s
}

pub fn noise_table(results: &[NoiseResult], prov: &Provenance) -> String {
    let mut s = prov.header("noise-sweep");
    s.push_str("# columns: f_noise mean sigma N seed\n");
    for r in results {
        if let NoiseSpec::RfAmplitude { f_noise, seed, .. } = r.spec {
            let _ = writeln!(s, "{} {:e} {:e} {} {}", f_noise, r.mean, r.std, r.fidelities.len(), seed);
        }
    }
    s
}

pub fn dc_offset_table(points: &[DcOffsetPoint], prov: &Provenance) -> String {
    let mut s = prov.header("dc-offset");
    s.push_str("# columns: delta_uv_per_cm F_nominal F_low F_high max_change\n");
    for p in points {
        let _ =
            writeln!(s, "{} {:e} {:e} {:e} {:e}", p.delta_uv_per_cm, p.nominal, p.fidelity_low, p.fidelity_high, p.max_change);
    }
    s
}

/// Final pivotal populations after coarse graining.
pub fn coarse_grain_table(r: &CoarseGrainResult, period_ns: f64, prov: &Provenance) -> String {
    let mut s = prov.header("coarse-grain");
    let _ = writeln!(s, "# period_ns: {period_ns}\n# fidelity: {:e}\n# most_populated_m: {}", r.fidelity, r.most_populated_m);
    s.push_str("# columns: m population\n");
    for (m, p) in r.pivotal_populations.iter().enumerate() {
        let _ = writeln!(s, "{m} {p:e}");
    }
    s
}

pub fn qsl_table(points: &[SweepPoint], prov: &Provenance) -> String {
    let mut s = prov.header("qsl-sweep");
    s.push_str(
        "# columns: t_stop_ns N_iter J_T peak_mv_per_cm bandwidth_mhz converged below_crossing below_ionization valid guess_edge_ns guess_amplitude_mv failed\n",
    );
    for p in points {
        let _ = writeln!(
            s,
            "{} {} {:e} {:e} {:e} {} {} {} {} {} {:e} {}",
            p.t_stop_ns,
            p.iterations,
            p.final_j_t,
            p.peak_mv,
            p.bandwidth_mhz,
            u8::from(p.converged),
            u8::from(p.flags.below_crossing),
            u8::from(p.flags.below_ionization),
            u8::from(p.flags.valid),
            p.guess.edge_ns,
            p.guess.amplitude_mv,
            u8::from(p.failed)
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulse::make_flat_top;

    #[test]
    fn waveform_round_trip_is_bit_exact() {
        let w = make_flat_top(18.0, 230.0, 13.0, 2.0, 0.02).unwrap();
        let text = waveform_to_string(&w, &Provenance::new(Some("n = 51")));
        assert!(text.contains(&config_hash("n = 51")));
        let back = parse_waveform(&text).unwrap();
        assert_eq!(back, w);
        let again = waveform_to_string(&back, &Provenance::new(Some("n = 51")));
        assert_eq!(again, text);
    }

    #[test]
    fn envelope_round_trip_is_bit_exact() {
        let w = make_flat_top(18.0, 230.0, 13.0, 2.0, 0.02).unwrap();
        let e = crate::pulse::demodulate(&w, 230.0).unwrap();
        let back = parse_envelope(&envelope_to_string(&e, &Provenance::new(None))).unwrap();
        assert_eq!(back.samples(), e.samples());
        assert_eq!(back.carrier_mhz(), 230.0);
    }

    #[test]
    fn malformed_waveforms_are_rejected() {
        let w = make_flat_top(1.0, 230.0, 0.1, 0.0, 0.02).unwrap();
        let text = waveform_to_string(&w, &Provenance::new(None));
        assert!(matches!(parse_waveform(&text.replace("samples: 6", "samples: 7")), Err(IoError::Format(_))));
        let broken = text.replacen("\n0.02 ", "\n0.02 x", 1);
        assert!(matches!(parse_waveform(&broken), Err(IoError::Parse { .. })));
        assert!(parse_waveform(&text.replace("circulon waveform", "circulon envelope")).is_err());
    }

    #[test]
    fn hash_is_sha256() {
        assert_eq!(config_hash(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn toy_model_round_trip() {
        let mut l = SparseReal::new(3, 3);
        l.push(1, 0, 0.3);
        l.push(2, 1, -1.7);
        let model = BasisModel::toy(&[-1e-4, -0.9e-4, -0.7e-4], l, vec![0, 1, 2], 2.0).unwrap();
        let text = model_to_json(&model, true, &Provenance::new(None)).unwrap();
        let back = model_from_json(&text).unwrap();
        assert_eq!(back.h0(), model.h0());
        assert_eq!(back.raising(), model.raising());
        assert_eq!(back.spin_phase(), model.spin_phase());
        assert_eq!(back.levels(), model.levels());
    }
}
