//! DC Stark structure and the truncated basis used for dynamics.
//!
//! Each `m_l` block of `H_atom + F z` is diagonalized in the spherical basis
//! of a window of principal quantum numbers. Eigenstates of the target
//! manifold are then labelled by the parabolic quantum number `mu` and by
//! their rank on the diagonal ladders, and the RF coupling is rotated into
//! the Stark eigenbasis.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atom::{self, AtomError, QuantumDefectTable, RadialCache};
use crate::linalg::SparseReal;
use crate::units;

#[derive(Debug, Error)]
pub enum StarkError {
    #[error(transparent)]
    Atom(#[from] AtomError),
    #[error("DC field must be finite and non-negative, got {0}")]
    InvalidField(f64),
    #[error("no spherical state with l >= |m| = {m} in the n window")]
    EmptyBlock { m: i32 },
    #[error("n window {window:?} does not contain the manifold n = {n} and its neighbours")]
    WindowTooSmall { n: u32, window: Vec<u32> },
    #[error("pivotal state |{m}> is missing from the manifold window")]
    MissingPivotal { m: i32 },
    #[error("basis of {states} states needs about {bytes} bytes, above the cap of {cap} bytes")]
    MemoryCap { states: usize, bytes: u64, cap: u64 },
    #[error("invalid model configuration: {0}")]
    Config(String),
}

/// Which Stark levels enter the dynamics basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Truncation {
    /// The lowest and second-lowest diagonal ladders, `m >= 0`.
    TwoDiagonal,
    /// Every manifold state (`m >= 0`) whose coupling to some pivotal state
    /// exceeds `threshold` times the largest pivotal coupling.
    Coupled { threshold: f64 },
    /// The full target manifold, all `m`.
    FullManifold,
    /// Full manifolds `n - radius ..= n + radius`, all `m`.
    ExtendedN { radius: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Principal quantum number of the working manifold.
    pub n: u32,
    pub e_dc_v_per_cm: f64,
    pub truncation: Truncation,
    /// Stark blocks include principal quantum numbers `n +/- n_radius`.
    pub n_radius: u32,
    /// Ratio of the physical circular-field amplitude to the nominal
    /// amplitude stored in waveforms.
    pub rf_calibration: f64,
    /// Step of the `sqrt(r)` Numerov grid.
    pub grid_step: f64,
    pub memory_cap_bytes: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n: 51,
            e_dc_v_per_cm: 2.346,
            truncation: Truncation::TwoDiagonal,
            n_radius: 4,
            rf_calibration: 2.0,
            grid_step: atom::DEFAULT_GRID_STEP,
            memory_cap_bytes: 4 << 30,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), StarkError> {
        if self.n < 2 {
            return Err(StarkError::Config(format!("n must be at least 2, got {}", self.n)));
        }
        if !(self.e_dc_v_per_cm >= 0.0) || !self.e_dc_v_per_cm.is_finite() {
            return Err(StarkError::InvalidField(self.e_dc_v_per_cm));
        }
        if !(self.rf_calibration > 0.0) || !self.rf_calibration.is_finite() {
            return Err(StarkError::Config("rf_calibration must be positive".into()));
        }
        if !(self.grid_step > 0.0 && self.grid_step < 0.5) {
            return Err(StarkError::Config("grid_step must lie in (0, 0.5)".into()));
        }
        if let Truncation::Coupled { threshold } = self.truncation {
            if !(threshold > 0.0 && threshold < 1.0) {
                return Err(StarkError::Config("coupling threshold must lie in (0, 1)".into()));
            }
        }
        Ok(())
    }

    pub fn e_dc_au(&self) -> f64 {
        units::v_per_cm_to_au(self.e_dc_v_per_cm)
    }

    /// Principal quantum numbers spanned by the Stark blocks.
    pub fn n_window(&self) -> Vec<u32> {
        let radius = match self.truncation {
            Truncation::ExtendedN { radius } => self.n_radius.max(radius + 2),
            _ => self.n_radius,
        };
        let lo = self.n.saturating_sub(radius).max(1);
        (lo..=self.n + radius).collect()
    }
}

/// Eigenpairs of one fixed-`m_l` block.
#[derive(Debug, Clone)]
pub struct StarkBlock {
    pub m: i32,
    /// Spherical basis `(n, l)` of the block.
    pub basis: Arc<Vec<(u32, u32)>>,
    /// Ascending eigenvalues.
    pub energies: Vec<f64>,
    /// Eigenvectors as columns, phase fixed so the largest component is positive.
    pub vectors: DMatrix<f64>,
}

/// Diagonalizes `H_atom + F z` in the block of fixed `m` spanned by every
/// `l >= |m|` of the principal quantum numbers in `cache`.
pub fn build_stark_block(
    cache: &RadialCache,
    n_window: &[u32],
    table: &QuantumDefectTable,
    m: i32,
    e_dc_au: f64,
) -> Result<StarkBlock, StarkError> {
    if !(e_dc_au >= 0.0) || !e_dc_au.is_finite() {
        return Err(StarkError::InvalidField(e_dc_au));
    }
    let am = m.unsigned_abs();
    let basis: Vec<(u32, u32)> = n_window.iter().flat_map(|&n| (am..n).map(move |l| (n, l))).collect();
    if basis.is_empty() {
        return Err(StarkError::EmptyBlock { m });
    }
    let dim = basis.len();
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for (i, &(n, l)) in basis.iter().enumerate() {
        h[(i, i)] = atom::level_energy(n, l, table)?;
    }
    if e_dc_au > 0.0 {
        for (i, &(ni, li)) in basis.iter().enumerate() {
            for (j, &(nj, lj)) in basis.iter().enumerate().skip(i + 1) {
                if lj == li + 1 || li == lj + 1 {
                    let v = e_dc_au * cache.r_element(ni, li, nj, lj) * atom::angular_z(li, lj, m);
                    h[(i, j)] = v;
                    h[(j, i)] = v;
                }
            }
        }
    }
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let energies = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::<f64>::zeros(dim, dim);
    for (col, &k) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let pivot = v.iamax();
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        vectors.set_column(col, &(v * sign));
    }
    Ok(StarkBlock { m, basis: Arc::new(basis), energies, vectors })
}

/// Energy interval holding the Stark manifold `n` at field `f` (a.u.).
pub fn manifold_window(n: u32, f: f64) -> (f64, f64) {
    let nf = n as f64;
    let center = -0.5 / (nf * nf);
    let half = 1.5 * nf * (nf - 1.0) * f + (1.8 * nf * f).max(0.05 / (nf * nf * nf));
    (center - half, center + half)
}

/// Hydrogenic Stark energy through second order for parabolic label `mu`.
pub fn perturbative_energy(n: u32, m: i32, mu: i32, f: f64) -> f64 {
    let (nf, mf, muf) = (n as f64, m as f64, mu as f64);
    -0.5 / (nf * nf) + 1.5 * nf * muf * f - f * f / 16.0 * nf.powi(4) * (17.0 * nf * nf - 3.0 * muf * muf - 9.0 * mf * mf + 19.0)
}

/// A Stark eigenstate of the working manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct StarkLevel {
    /// Position in the owning basis (or block, before assembly).
    pub index: usize,
    pub n: u32,
    pub m: i32,
    pub mu: i32,
    /// Diagonal-ladder rank: energy order within the manifold window of the
    /// block, 0 on the lowest diagonal.
    pub rank: usize,
    pub energy: f64,
    /// Spherical basis of the parent block; empty when loaded without vectors.
    pub basis: Arc<Vec<(u32, u32)>>,
    pub eigenvector: Vec<f64>,
}

/// A parabolic label with no eigenstate inside the manifold window, usually
/// a low-`l` state pushed away by its quantum defect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LadderGap {
    pub n: u32,
    pub m: i32,
    pub mu: i32,
}

#[derive(Debug, Clone)]
pub struct LadderClassification {
    pub levels: Vec<StarkLevel>,
    pub gaps: Vec<LadderGap>,
}

impl LadderClassification {
    /// Ranks-0 levels, `|m>` for `m = 0 ..= n-1`.
    pub fn pivotal(&self, n: u32) -> Result<Vec<&StarkLevel>, StarkError> {
        (0..n as i32)
            .map(|m| self.levels.iter().find(|l| l.n == n && l.m == m && l.rank == 0).ok_or(StarkError::MissingPivotal { m }))
            .collect()
    }
}

/// Assigns the manifold-`n` eigenstates of each block to diagonal ladders.
///
/// `mu` is read off the first-order lattice `E - E_n = 1.5 n mu F` after
/// removing the hydrogenic second-order shift; without a field the labels
/// follow energy order. Lattice sites with no eigenstate are returned as gaps.
pub fn classify_diagonal_ladders(blocks: &[StarkBlock], n: u32, e_dc_au: f64) -> LadderClassification {
    let (lo, hi) = manifold_window(n, e_dc_au);
    let nf = n as f64;
    let mut levels = Vec::new();
    let mut gaps = Vec::new();
    for block in blocks {
        let am = block.m.unsigned_abs();
        if am >= n {
            continue;
        }
        let mu_max = (n - am - 1) as i32;
        let inside: Vec<usize> =
            (0..block.energies.len()).filter(|&k| block.energies[k] > lo && block.energies[k] < hi).collect();
        let mut taken = Vec::new();
        for (rank, &k) in inside.iter().enumerate() {
            let e = block.energies[k];
            let mu = if e_dc_au > 0.0 {
                let mut est = (e + 0.5 / (nf * nf)) / (1.5 * nf * e_dc_au);
                for _ in 0..2 {
                    let second = perturbative_energy(n, block.m, est.round() as i32, e_dc_au)
                        - (-0.5 / (nf * nf) + 1.5 * nf * est.round() * e_dc_au);
                    est = (e + 0.5 / (nf * nf) - second) / (1.5 * nf * e_dc_au);
                }
                snap_to_lattice(est, mu_max)
            } else {
                (-mu_max + 2 * rank as i32).min(mu_max)
            };
            taken.push(mu);
            levels.push(StarkLevel {
                index: k,
                n,
                m: block.m,
                mu,
                rank,
                energy: e,
                basis: block.basis.clone(),
                eigenvector: block.vectors.column(k).iter().copied().collect(),
            });
        }
        for mu in (-mu_max..=mu_max).step_by(2) {
            if !taken.contains(&mu) {
                gaps.push(LadderGap { n, m: block.m, mu });
            }
        }
    }
    LadderClassification { levels, gaps }
}

fn snap_to_lattice(est: f64, mu_max: i32) -> i32 {
    // allowed values share the parity of mu_max
    let k = ((est + mu_max as f64) / 2.0).round() as i32;
    (2 * k - mu_max).clamp(-mu_max, mu_max)
}

/// Immutable dynamics model: Stark energies plus the RF coupling in the
/// Stark eigenbasis.
///
/// The RF coupling is stored as the real position raising matrix
/// `L_ab = <a| x + i y |b>`, non-zero only for `m_a = m_b + 1`. For a field
/// `eps = E_x + i E_y` (nominal units) the Hamiltonian is
/// `H = H0 + (k/2) (conj(eps) L + eps L^T)` with `k` the RF calibration, which
/// equals `H0 - E_x D_x - E_y D_y` for the physical field.
#[derive(Debug, Clone)]
pub struct BasisModel {
    config: ModelConfig,
    species: String,
    levels: Vec<StarkLevel>,
    h0: Vec<f64>,
    raising: SparseReal,
    pivotal: Vec<usize>,
    spin_phase: Vec<f64>,
    gaps: Vec<LadderGap>,
}

impl BasisModel {
    /// Builds a model from explicit parts. `pivotal` lists the lowest-ladder
    /// states in order of `m` and may be empty for toy models.
    pub fn from_parts(
        config: ModelConfig,
        species: impl Into<String>,
        levels: Vec<StarkLevel>,
        raising: SparseReal,
        pivotal: Vec<usize>,
        gaps: Vec<LadderGap>,
    ) -> Result<Self, StarkError> {
        let dim = levels.len();
        if raising.rows != dim || raising.cols != dim {
            return Err(StarkError::Config(format!(
                "raising matrix is {}x{} but there are {dim} levels",
                raising.rows, raising.cols
            )));
        }
        if pivotal.iter().any(|&p| p >= dim) {
            return Err(StarkError::Config("pivotal index out of range".into()));
        }
        let h0 = levels.iter().map(|l| l.energy).collect();
        let mut spin_phase = vec![1.0; pivotal.len()];
        for k in 1..pivotal.len() {
            let c = raising.get(pivotal[k], pivotal[k - 1]);
            spin_phase[k] = if c * spin_phase[k - 1] < 0.0 { -1.0 } else { 1.0 };
        }
        Ok(Self { config, species: species.into(), levels, h0, raising, pivotal, spin_phase, gaps })
    }

    /// Minimal model from energies and couplings alone.
    pub fn toy(energies: &[f64], raising: SparseReal, pivotal: Vec<usize>, rf_calibration: f64) -> Result<Self, StarkError> {
        let levels = energies
            .iter()
            .enumerate()
            .map(|(i, &e)| StarkLevel {
                index: i,
                n: 0,
                m: i as i32,
                mu: 0,
                rank: 0,
                energy: e,
                basis: Arc::new(Vec::new()),
                eigenvector: Vec::new(),
            })
            .collect();
        let config = ModelConfig { rf_calibration, ..ModelConfig::default() };
        Self::from_parts(config, "toy", levels, raising, pivotal, Vec::new())
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn species(&self) -> &str {
        &self.species
    }

    pub fn n(&self) -> u32 {
        self.config.n
    }

    pub fn e_dc_au(&self) -> f64 {
        self.config.e_dc_au()
    }

    pub fn rf_calibration(&self) -> f64 {
        self.config.rf_calibration
    }

    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[StarkLevel] {
        &self.levels
    }

    pub fn h0(&self) -> &[f64] {
        &self.h0
    }

    pub fn raising(&self) -> &SparseReal {
        &self.raising
    }

    /// Basis indices of `|m>`, `m = 0 ..= n-1`.
    pub fn pivotal(&self) -> &[usize] {
        &self.pivotal
    }

    /// Signs `s_m` such that `s_{m+1} s_m <m+1|L|m> > 0`, mapping the lowest
    /// ladder onto a spin with positive `J_+` elements.
    pub fn spin_phase(&self) -> &[f64] {
        &self.spin_phase
    }

    pub fn gaps(&self) -> &[LadderGap] {
        &self.gaps
    }

    pub fn level_index(&self, m: i32, rank: usize) -> Option<usize> {
        self.levels.iter().position(|l| l.m == m && l.rank == rank && l.n == self.config.n)
    }

    /// Unit vector on basis state `index`.
    pub fn basis_state(&self, index: usize) -> Vec<Complex64> {
        let mut v = vec![Complex64::new(0.0, 0.0); self.dim()];
        v[index] = Complex64::new(1.0, 0.0);
        v
    }

    /// `|m>` on the lowest diagonal ladder.
    pub fn pivotal_state(&self, m: usize) -> Option<Vec<Complex64>> {
        self.pivotal.get(m).map(|&i| self.basis_state(i))
    }

    /// Transition frequencies `|m> -> |m+1>` along the lowest ladder, MHz.
    pub fn ladder_frequencies_mhz(&self) -> Vec<f64> {
        self.pivotal.windows(2).map(|w| units::au_to_mhz(self.h0[w[1]] - self.h0[w[0]])).collect()
    }

    /// Linear-Stark ladder frequency `1.5 n F`, MHz.
    pub fn omega0_mhz(&self) -> f64 {
        units::au_to_mhz(1.5 * self.config.n as f64 * self.e_dc_au())
    }

    /// Dense `D_x = -x` (a.u.).
    pub fn dipole_x(&self) -> DMatrix<Complex64> {
        let l = self.raising.to_dense();
        (&l + l.transpose()).map(|v| Complex64::new(-0.5 * v, 0.0))
    }

    /// Dense `D_y = -y` (a.u.), imaginary hermitian.
    pub fn dipole_y(&self) -> DMatrix<Complex64> {
        let l = self.raising.to_dense();
        (&l - l.transpose()).map(|v| Complex64::new(0.0, 0.5 * v))
    }

    /// Populations outside the listed states.
    pub fn leakage(&self, psi: &[Complex64], keep: &[usize]) -> f64 {
        let inside: f64 = keep.iter().map(|&i| psi[i].norm_sqr()).sum();
        (crate::linalg::norm_sqr(psi) - inside).max(0.0)
    }
}

/// Builds the dynamics model described by `config`.
pub fn assemble_model(config: &ModelConfig, table: &QuantumDefectTable) -> Result<BasisModel, StarkError> {
    config.validate()?;
    let n = config.n;
    let f = config.e_dc_au();
    let window = config.n_window();
    if !window.contains(&n) {
        return Err(StarkError::WindowTooSmall { n, window });
    }
    let (manifolds, m_values): (Vec<u32>, Vec<i32>) = match config.truncation {
        Truncation::TwoDiagonal | Truncation::Coupled { .. } => (vec![n], (0..n as i32).collect()),
        Truncation::FullManifold => (vec![n], (-(n as i32 - 1)..n as i32).collect()),
        Truncation::ExtendedN { radius } => {
            let ns: Vec<u32> = (n.saturating_sub(radius).max(2)..=n + radius).collect();
            let top = *ns.last().unwrap_or(&n) as i32;
            (ns, (-(top - 1)..top).collect())
        }
    };
    // refuse before doing any work
    let estimate: usize = match config.truncation {
        Truncation::TwoDiagonal => 2 * n as usize,
        Truncation::Coupled { .. } => (n * (n + 1) / 2) as usize,
        _ => manifolds.iter().map(|&k| (k * k) as usize).sum(),
    };
    let bytes = 2 * (estimate as u64).pow(2) * 16;
    if bytes > config.memory_cap_bytes {
        return Err(StarkError::MemoryCap { states: estimate, bytes, cap: config.memory_cap_bytes });
    }

    let cache = RadialCache::new(&window, table, config.grid_step)?;
    // +m and -m blocks share their spectrum; only |m| is diagonalized
    let distinct: Vec<i32> = {
        let mut v: Vec<i32> = m_values.iter().map(|m| m.abs()).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let build = |&m: &i32| build_stark_block(&cache, &window, table, m, f);
    #[cfg(feature = "parallel")]
    let built: Result<Vec<StarkBlock>, StarkError> = {
        use rayon::prelude::*;
        distinct.par_iter().map(build).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let built: Result<Vec<StarkBlock>, StarkError> = distinct.iter().map(build).collect();
    let by_abs: BTreeMap<i32, StarkBlock> = built?.into_iter().map(|b| (b.m, b)).collect();
    let blocks: BTreeMap<i32, StarkBlock> = m_values
        .iter()
        .map(|&m| {
            let mut b = by_abs[&m.abs()].clone();
            b.m = m;
            (m, b)
        })
        .collect();
    let block_list: Vec<StarkBlock> = blocks.values().cloned().collect();

    let mut all_gaps = Vec::new();
    let mut candidates: Vec<StarkLevel> = Vec::new();
    for &k in &manifolds {
        let c = classify_diagonal_ladders(&block_list, k, f);
        all_gaps.extend(c.gaps);
        candidates.extend(c.levels);
    }
    candidates.sort_by_key(|l| (l.m, l.n, l.rank));

    let selected: Vec<StarkLevel> = match config.truncation {
        Truncation::TwoDiagonal => candidates.into_iter().filter(|l| l.rank < 2).collect(),
        Truncation::Coupled { threshold } => {
            let couplings = raising_matrix(&candidates, &blocks, &cache);
            let pivots: Vec<usize> = (0..candidates.len()).filter(|&i| candidates[i].rank == 0).collect();
            let mut strength = vec![0.0f64; candidates.len()];
            for &(i, j, v) in &couplings.entries {
                if pivots.contains(&j) {
                    strength[i] = strength[i].max(v.abs());
                }
                if pivots.contains(&i) {
                    strength[j] = strength[j].max(v.abs());
                }
            }
            let max = strength.iter().copied().fold(0.0, f64::max);
            candidates
                .into_iter()
                .enumerate()
                .filter(|(i, l)| l.rank == 0 || strength[*i] > threshold * max)
                .map(|(_, l)| l)
                .collect()
        }
        Truncation::FullManifold | Truncation::ExtendedN { .. } => candidates,
    };
    let mut levels = selected;
    for (i, l) in levels.iter_mut().enumerate() {
        l.index = i;
    }
    let raising = raising_matrix(&levels, &blocks, &cache);
    let pivotal = (0..n as i32)
        .map(|m| levels.iter().position(|l| l.n == n && l.m == m && l.rank == 0).ok_or(StarkError::MissingPivotal { m }))
        .collect::<Result<Vec<_>, _>>()?;
    all_gaps.retain(|g| m_values.contains(&g.m));
    BasisModel::from_parts(config.clone(), table.species(), levels, raising, pivotal, all_gaps)
}

/// `<a| x + i y |b>` between the given levels, rotated from the spherical basis.
fn raising_matrix(levels: &[StarkLevel], blocks: &BTreeMap<i32, StarkBlock>, cache: &RadialCache) -> SparseReal {
    let dim = levels.len();
    let mut out = SparseReal::new(dim, dim);
    let mut by_m: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, l) in levels.iter().enumerate() {
        by_m.entry(l.m).or_default().push(i);
    }
    for (&m, lower) in &by_m {
        let Some(upper) = by_m.get(&(m + 1)) else { continue };
        let (bl, bu) = (&blocks[&m], &blocks[&(m + 1)]);
        // spherical <n' l' m+1| x + iy |n l m>
        let mut a = DMatrix::<f64>::zeros(bu.basis.len(), bl.basis.len());
        for (i, &(nu, lu)) in bu.basis.iter().enumerate() {
            for (j, &(nl, ll)) in bl.basis.iter().enumerate() {
                if lu.abs_diff(ll) == 1 {
                    let ang = atom::angular_raise(lu, ll, m);
                    if ang != 0.0 {
                        a[(i, j)] = cache.r_element(nu, lu, nl, ll) * ang;
                    }
                }
            }
        }
        let vl = DMatrix::from_fn(bl.basis.len(), lower.len(), |r, c| levels[lower[c]].eigenvector[r]);
        let vu = DMatrix::from_fn(bu.basis.len(), upper.len(), |r, c| levels[upper[c]].eigenvector[r]);
        let rotated = vu.transpose() * a * vl;
        for (ci, &i) in upper.iter().enumerate() {
            for (cj, &j) in lower.iter().enumerate() {
                out.push(i, j, rotated[(ci, cj)]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hydrogen_blocks(n_window: &[u32], ms: &[i32], f: f64) -> Vec<StarkBlock> {
        let t = QuantumDefectTable::hydrogenic();
        let cache = RadialCache::new(n_window, &t, 0.01).unwrap();
        ms.iter().map(|&m| build_stark_block(&cache, n_window, &t, m, f).unwrap()).collect()
    }

    #[test]
    fn field_free_hydrogen_is_degenerate() {
        let b = hydrogen_blocks(&[6], &[1], 0.0);
        for e in &b[0].energies {
            assert!((e + 0.5 / 36.0).abs() < 1e-15);
        }
    }

    #[test]
    fn eigenvectors_orthonormal_and_phase_fixed() {
        let f = units::v_per_cm_to_au(2000.0);
        let b = &hydrogen_blocks(&[7, 8, 9], &[2], f)[0];
        let g = b.vectors.transpose() * &b.vectors;
        let id = DMatrix::<f64>::identity(g.nrows(), g.ncols());
        assert!((g - id).amax() < 1e-10);
        for c in b.vectors.column_iter() {
            assert!(c[c.iamax()] > 0.0);
        }
    }

    #[test]
    fn hydrogenic_ladder_spacing_is_linear_stark() {
        let n = 12u32;
        let f = units::v_per_cm_to_au(500.0);
        let blocks = hydrogen_blocks(&[10, 11, 12, 13, 14], &[0, 3], f);
        let c = classify_diagonal_ladders(&blocks, n, f);
        for m in [0, 3] {
            let lv: Vec<&StarkLevel> = c.levels.iter().filter(|l| l.m == m).collect();
            assert_eq!(lv.len(), (n as i32 - m) as usize);
            assert!(c.gaps.iter().all(|g| g.m != m));
            for w in lv.windows(2) {
                assert_eq!(w[1].mu - w[0].mu, 2);
                let spacing = w[1].energy - w[0].energy;
                assert!((spacing / (3.0 * n as f64 * f) - 1.0).abs() < 1e-2);
            }
        }
    }

    #[test]
    fn perturbative_agreement_at_working_field() {
        let n = 51u32;
        let f = units::v_per_cm_to_au(2.5);
        let blocks = hydrogen_blocks(&(47..=55).collect::<Vec<_>>(), &[0, 20], f);
        let c = classify_diagonal_ladders(&blocks, n, f);
        for l in c.levels.iter().filter(|l| l.mu.abs() <= n as i32 / 2) {
            let pert = perturbative_energy(n, l.m, l.mu, f);
            let (nf, muf, mf) = (n as f64, l.mu as f64, l.m as f64);
            let third = 3.0 / 32.0 * nf.powi(7) * muf * (23.0 * nf * nf - muf * muf + 11.0 * mf * mf + 39.0) * f.powi(3);
            // relative scale: one unit of the linear Stark shift
            let tol = 3.0 * third.abs() + 1e-3 * 1.5 * nf * f;
            assert!((l.energy - pert).abs() < tol, "m={} mu={} diff={:e} tol={tol:e}", l.m, l.mu, l.energy - pert);
        }
    }

    #[test]
    fn n3_toy_manifold_labels() {
        let f = units::v_per_cm_to_au(1e4);
        let blocks = hydrogen_blocks(&[2, 3, 4], &[0, 1, 2], f);
        let c = classify_diagonal_ladders(&blocks, 3, f);
        let mut labels: Vec<(i32, i32, usize)> = c.levels.iter().map(|l| (l.m, l.mu, l.rank)).collect();
        labels.sort();
        assert_eq!(labels, vec![(0, -2, 0), (0, 0, 1), (0, 2, 2), (1, -1, 0), (1, 1, 1), (2, 0, 0)]);
    }

    #[test]
    fn plus_minus_m_spectra_identical() {
        let f = units::v_per_cm_to_au(100.0);
        let b = hydrogen_blocks(&[9, 10, 11], &[3, -3], f);
        for (a, c) in b[0].energies.iter().zip(&b[1].energies) {
            assert!((a - c).abs() <= 1e-13 * a.abs());
        }
    }

    #[test]
    fn memory_cap_refuses_extended_basis() {
        let cfg =
            ModelConfig { truncation: Truncation::ExtendedN { radius: 1 }, memory_cap_bytes: 1 << 20, ..ModelConfig::default() };
        let err = assemble_model(&cfg, &QuantumDefectTable::rubidium85()).unwrap_err();
        assert!(matches!(err, StarkError::MemoryCap { states, .. } if states == 50 * 50 + 51 * 51 + 52 * 52));
    }

    #[test]
    fn lattice_snapping() {
        assert_eq!(snap_to_lattice(-0.2, 49), -1);
        assert_eq!(snap_to_lattice(0.4, 48), 0);
        assert_eq!(snap_to_lattice(-60.0, 10), -10);
    }
}
