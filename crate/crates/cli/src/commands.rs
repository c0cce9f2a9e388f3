use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use circulon::atom::QuantumDefectTable;
use circulon::io::{self, Provenance};
use circulon::krotov::{self, Checkpoint, Status};
use circulon::propagator::{self, QuantumState, RecordSpec};
use circulon::pulse::{self, TwoStep, Waveform};
use circulon::qsl;
use circulon::robustness;
use circulon::stark::{self, BasisModel};
use serde_json::{json, Value};

use crate::config::{PulseSource, RunConfig};
use crate::Failure;

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn numeric(e: impl std::fmt::Display) -> Failure {
    Failure::Numeric(e.to_string())
}

pub struct Context {
    pub cfg: RunConfig,
    pub prov: Provenance,
    out: PathBuf,
}

impl Context {
    pub fn load(path: &Path, out: Option<PathBuf>, seed: Option<u64>, threads: Option<usize>) -> Result<Self, Failure> {
        let text = io::read_text(path).map_err(config_err)?;
        let mut cfg = RunConfig::parse(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.model.validate().map_err(config_err)?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        if let Some(t) = threads {
            cfg.threads = t;
        }
        if cfg.threads > 0 {
            // fails only if a pool already exists, which cannot happen here
            let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
        }
        let out = out.unwrap_or_else(|| cfg.out_dir.clone());
        std::fs::create_dir_all(&out).map_err(|e| numeric(format!("{}: {e}", out.display())))?;
        Ok(Self { cfg, prov: Provenance::new(Some(&text)), out })
    }

    fn write(&self, name: &str, text: &str) -> Result<(), Failure> {
        io::write_text(self.out.join(name), text).map_err(numeric)
    }

    pub fn write_summary(&self, summary: &Value) -> Result<(), Failure> {
        let text = serde_json::to_string_pretty(summary).map_err(numeric)?;
        self.write("summary.json", &(text + "\n"))
    }

    fn provenance(&self) -> Value {
        json!({ "software": self.prov.software, "config_sha256": self.prov.config_sha256 })
    }

    fn table(&self) -> Result<QuantumDefectTable, Failure> {
        match &self.cfg.species_file {
            Some(p) => QuantumDefectTable::load(p).map_err(config_err),
            None => Ok(QuantumDefectTable::rubidium85()),
        }
    }

    fn model(&self) -> Result<BasisModel, Failure> {
        match &self.cfg.model_file {
            Some(p) => io::model_from_json(&io::read_text(p).map_err(config_err)?).map_err(config_err),
            None => stark::assemble_model(&self.cfg.model, &self.table()?).map_err(numeric),
        }
    }

    fn states(&self, model: &BasisModel) -> Result<(QuantumState, QuantumState), Failure> {
        let s = self.cfg.states;
        let get = |m: usize| {
            QuantumState::pivotal(model, m).ok_or_else(|| {
                Failure::Config(format!("the model has no pivotal state |{m}> ({} available)", model.pivotal().len()))
            })
        };
        Ok((get(s.initial)?, get(s.target)?))
    }

    fn pulse(&self) -> Result<Waveform, Failure> {
        let source = self.cfg.pulse.as_ref().ok_or_else(|| Failure::Config("missing [pulse] block".into()))?;
        match *source {
            PulseSource::File { ref path } => io::parse_waveform(&io::read_text(path).map_err(config_err)?).map_err(config_err),
            PulseSource::FlatTop { amplitude_mv, carrier_mhz, t_stop_ns, edge_ns, dt_ns } => {
                pulse::make_flat_top(amplitude_mv, carrier_mhz, t_stop_ns, edge_ns, dt_ns).map_err(config_err)
            }
            PulseSource::TwoStep { a_low_mv, a_high_mv, t_step_ns, ramp_ns, carrier_mhz, t_stop_ns, edge_ns, dt_ns } => {
                let p = TwoStep { a_low_mv, a_high_mv, t_step_ns, ramp_ns, carrier_mhz, t_stop_ns, edge_ns };
                pulse::make_two_step(&p, dt_ns).map_err(config_err)
            }
        }
    }
}

pub fn build_model(ctx: &Context) -> Result<Value, Failure> {
    let model = ctx.model()?;
    ctx.write("model.json", &io::model_to_json(&model, true, &ctx.prov).map_err(numeric)?)?;
    let f = model.ladder_frequencies_mhz();
    let at = |k: usize| f.get(k).copied();
    eprintln!("basis size {}", model.dim());
    if let (Some(a), Some(b), Some(c)) = (at(0), at(1), at(2)) {
        eprintln!("w01 = {a:.3} MHz, w12 = {b:.3} MHz, w23 = {c:.3} MHz, w0 = {:.3} MHz", model.omega0_mhz());
    }
    Ok(json!({
        "command": "build-model",
        "provenance": ctx.provenance(),
        "dim": model.dim(),
        "pivotal_states": model.pivotal().len(),
        "omega_01_mhz": at(0),
        "omega_12_mhz": at(1),
        "omega_23_mhz": at(2),
        "omega_0_mhz": model.omega0_mhz(),
    }))
}

pub fn propagate(ctx: &Context) -> Result<Value, Failure> {
    let model = ctx.model()?;
    let (psi0, target) = ctx.states(&model)?;
    let w = ctx.pulse()?;
    let block = &ctx.cfg.propagate;
    let spec = RecordSpec { stride: block.stride, spin: block.spin, frame: block.frame(), snapshots: false };
    let (psi, rec) = propagator::propagate(&model, &psi0, &w, &spec).map_err(numeric)?;
    ctx.write("trajectory.txt", &io::trajectory_table(&rec, &ctx.prov))?;
    let f = propagator::fidelity(&psi, &target).map_err(numeric)?;
    let last = rec.len() - 1;
    let best_scs = rec.closest_scs.iter().enumerate().max_by(|a, b| a.1[2].total_cmp(&b.1[2]));
    Ok(json!({
        "command": "propagate",
        "provenance": ctx.provenance(),
        "fidelity": f,
        "norm": psi.norm_sqr(),
        "mean_m": rec.mean_m[last],
        "sigma_m": rec.sigma_m[last],
        "pivotal_populations": rec.pivotal_populations[last],
        "best_scs_overlap": best_scs.map(|(_, c)| c[2]),
        "best_scs_time_ns": best_scs.map(|(k, _)| rec.times_ns[k]),
    }))
}

pub fn optimize(ctx: &Context) -> Result<Value, Failure> {
    let block = ctx.cfg.optimize.as_ref().ok_or_else(|| Failure::Config("missing [optimize] block".into()))?;
    block.krotov.validate().map_err(config_err)?;
    let model = ctx.model()?;
    let (psi0, target) = ctx.states(&model)?;
    let every = block.checkpoint_every.max(1);
    let mut write_error = None;
    let on_iteration = |c: &Checkpoint| {
        let last = c.log.last().map_or(0, |r| r.iteration);
        if last.is_multiple_of(every) {
            let saved = io::checkpoint_to_json(c, &ctx.prov).map_err(numeric).and_then(|t| ctx.write("checkpoint.json", &t));
            if let Err(e) = saved {
                write_error = Some(e);
                return ControlFlow::Break(());
            }
        }
        ControlFlow::Continue(())
    };
    let run = match &block.resume {
        Some(p) => {
            let c = io::checkpoint_from_json(&io::read_text(p).map_err(config_err)?).map_err(config_err)?;
            krotov::resume(&model, &psi0, &target, &c, &block.krotov, on_iteration)
        }
        None => krotov::optimize_with(&model, &psi0, &target, &ctx.pulse()?, &block.krotov, on_iteration),
    }
    .map_err(|e| match e {
        krotov::KrotovError::InvalidConfig(_)
        | krotov::KrotovError::TargetNotNormalized(_)
        | krotov::KrotovError::DimensionMismatch { .. } => config_err(e),
        krotov::KrotovError::NonFiniteUpdate { ref log, .. } => {
            // keep the iterations up to the failure for inspection
            let _ = ctx.write("iterations.txt", &io::iteration_table(log, &ctx.prov));
            numeric(e)
        }
        e => numeric(e),
    })?;
    if let Some(e) = write_error {
        return Err(e);
    }
    ctx.write("iterations.txt", &io::iteration_table(&run.log, &ctx.prov))?;
    ctx.write("optimized_pulse.txt", &io::waveform_to_string(&run.waveform, &ctx.prov))?;
    let final_checkpoint = Checkpoint { lambda: run.lambda, waveform: run.waveform.clone(), log: run.log.clone(), increases: 0 };
    ctx.write("checkpoint.json", &io::checkpoint_to_json(&final_checkpoint, &ctx.prov).map_err(numeric)?)?;

    let constraints = block.krotov.constraints.map(|c| {
        let peak = run.waveform.peak();
        let above = pulse::energy_above(&run.waveform, c.cutoff_mhz);
        json!({
            "e_max_mv": c.e_max_mv,
            "cutoff_mhz": c.cutoff_mhz,
            "peak_mv": peak,
            "energy_above_cutoff": above,
            "satisfied": peak <= c.e_max_mv + 1e-9 && above <= 1e-6,
        })
    });
    let monotonic = run.log.windows(2).all(|p| p[1].j_t <= p[0].j_t);
    let summary = json!({
        "command": "optimize",
        "provenance": ctx.provenance(),
        "status": run.status,
        "iterations": run.iterations(),
        "final_j_t": run.final_j_t(),
        "fidelity": 1.0 - run.final_j_t(),
        "lambda": run.lambda,
        "j_t_monotonic": monotonic,
        "constraints": constraints,
    });
    let accepted = match run.status {
        Status::Converged => true,
        Status::IterationCap => !block.require_convergence,
        Status::Stagnated | Status::Interrupted => false,
    };
    if accepted {
        Ok(summary)
    } else {
        ctx.write_summary(&summary)?;
        Err(Failure::Unconverged(format!(
            "status {:?}, J_T = {:.4e} after {} iterations",
            run.status,
            run.final_j_t(),
            run.iterations()
        )))
    }
}

pub fn noise_sweep(ctx: &Context) -> Result<Value, Failure> {
    let block = ctx.cfg.noise.as_ref().ok_or_else(|| Failure::Config("missing [noise] block".into()))?;
    if block.rf.is_none() && block.dc.is_none() && block.coarse.is_none() {
        return Err(Failure::Config("[noise] needs at least one of rf, dc, coarse".into()));
    }
    let model = ctx.model()?;
    let (psi0, target) = ctx.states(&model)?;
    let w = ctx.pulse()?;
    let mut summary = json!({ "command": "noise-sweep", "provenance": ctx.provenance(), "seed": ctx.cfg.seed });

    if let Some(rf) = &block.rf {
        let results =
            robustness::rf_noise_sweep(&model, &psi0, &target, &w, &rf.f_noise, rf.realizations, ctx.cfg.seed, rf.carrier_mhz)
                .map_err(robustness_err)?;
        ctx.write("rf_noise.txt", &io::noise_table(&results, &ctx.prov))?;
        summary["rf"] =
            results.iter().zip(&rf.f_noise).map(|(r, f)| json!({ "f_noise": f, "mean": r.mean, "std": r.std })).collect();
    }
    if let Some(dc) = &block.dc {
        if ctx.cfg.model_file.is_some() {
            return Err(Failure::Config("the DC-offset study rebuilds the model and cannot use model_file".into()));
        }
        let table = ctx.table()?;
        let base = ctx.cfg.model.clone();
        let build = |e_dc: f64| stark::assemble_model(&stark::ModelConfig { e_dc_v_per_cm: e_dc, ..base.clone() }, &table);
        let s = ctx.cfg.states;
        let points = robustness::dc_offset_test(build, base.e_dc_v_per_cm, s.initial, s.target, &w, &dc.deltas_uv_per_cm)
            .map_err(robustness_err)?;
        ctx.write("dc_offset.txt", &io::dc_offset_table(&points, &ctx.prov))?;
        summary["dc"] = serde_json::to_value(&points).map_err(numeric)?;
    }
    if let Some(c) = &block.coarse {
        let domain = c.domain().map_err(Failure::Config)?;
        let nominal =
            propagator::fidelity(&propagator::propagate_final(&model, &psi0, &w).map_err(numeric)?, &target).map_err(numeric)?;
        let r = robustness::coarse_grain_test(&model, &psi0, &target, &w, c.period_ns, domain, c.interpolation)
            .map_err(robustness_err)?;
        ctx.write("coarse_grain.txt", &io::coarse_grain_table(&r, c.period_ns, &ctx.prov))?;
        summary["coarse"] = json!({
            "period_ns": c.period_ns,
            "nominal_fidelity": nominal,
            "fidelity": r.fidelity,
            "most_populated_m": r.most_populated_m,
        });
    }
    Ok(summary)
}

fn robustness_err(e: robustness::RobustnessError) -> Failure {
    match e {
        robustness::RobustnessError::Invalid(_) | robustness::RobustnessError::MissingState(_) => config_err(e),
        e => numeric(e),
    }
}

pub fn qsl_sweep(ctx: &Context) -> Result<Value, Failure> {
    let block = ctx.cfg.qsl.as_ref().ok_or_else(|| Failure::Config("missing [qsl] block".into()))?;
    block.optimize.validate().map_err(config_err)?;
    let model = ctx.model()?;
    let (psi0, target) = ctx.states(&model)?;
    let points = qsl::qsl_sweep(&model, &psi0, &target, &block.t_stops_ns, &block.family, &block.optimize).map_err(numeric)?;
    ctx.write("qsl.txt", &io::qsl_table(&points, &ctx.prov))?;
    let converged: Vec<&qsl::SweepPoint> = points.iter().filter(|p| p.converged).collect();
    Ok(json!({
        "command": "qsl-sweep",
        "provenance": ctx.provenance(),
        "points": points.len(),
        "converged": converged.len(),
        "critical_rf_field_v_per_cm": qsl::critical_rf_field(model.n(), model.config().e_dc_v_per_cm),
        "ionization_threshold_v_per_cm": qsl::ionization_threshold(model.n()),
        "sweep": points.iter().map(|p| json!({
            "t_stop_ns": p.t_stop_ns,
            "iterations": p.iterations,
            "final_j_t": p.final_j_t,
            "peak_mv": p.peak_mv,
            "converged": p.converged,
            "valid": p.flags.valid,
        })).collect::<Vec<_>>(),
    }))
}

pub fn demodulate(ctx: &Context) -> Result<Value, Failure> {
    let block = ctx.cfg.demodulate.as_ref().ok_or_else(|| Failure::Config("missing [demodulate] block".into()))?;
    let w = ctx.pulse()?;
    let e = pulse::demodulate(&w, block.carrier_mhz).map_err(config_err)?;
    ctx.write("envelope.txt", &io::envelope_to_string(&e, &ctx.prov))?;
    let peak = e.samples().iter().map(|s| s.norm()).fold(0.0, f64::max);
    Ok(json!({
        "command": "demodulate",
        "provenance": ctx.provenance(),
        "samples": e.len(),
        "carrier_mhz": e.carrier_mhz(),
        "peak_envelope_mv": peak,
        "aliasing_fraction": e.aliasing_fraction(),
        "aliased": e.is_aliased(),
    }))
}
