//! Field-free alkali Rydberg structure.
//!
//! Energies come from the quantum-defect formula, radial functions from a
//! Numerov integration of the Coulomb radial equation at the defect-shifted
//! energy, and angular factors from Clebsch-Gordan algebra. Spin-orbit
//! coupling is ignored; every state carries `j = l + 1/2`.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

/// Quantum defects are neglected above this orbital angular momentum.
pub const MAX_DEFECT_L: u32 = 7;

const RB85_TABLE: &str = include_str!("../data/rb85_defects.txt");

#[derive(Debug, Error)]
pub enum AtomError {
    #[error("no quantum defect for l = {l}, j = {j} in table '{species}'")]
    MissingDefect { species: String, l: u32, j: f64 },
    #[error("n = {n} is below the validity floor n_min = {n_min} of the defect table")]
    BelowValidityFloor { n: u32, n_min: u32 },
    #[error("invalid spherical state (n = {n}, l = {l}, m = {m})")]
    InvalidState { n: u32, l: u32, m: i32 },
    #[error("defect table line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(
        "radial integration failed for l = {l}, E = {energy:e}: {reason} ({points} grid points, inner cutoff r = {r_inner:.3e})"
    )]
    IntegrationFailure { l: u32, energy: f64, reason: String, points: usize, r_inner: f64 },
    #[error("radial solutions live on different grids")]
    GridMismatch,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One `(l, j)` row of a quantum-defect table.
#[derive(Debug, Clone, PartialEq)]
pub struct DefectEntry {
    pub l: u32,
    pub j: f64,
    pub delta0: f64,
    pub delta2: f64,
    pub n_min: u32,
}

impl DefectEntry {
    /// Two-term Rydberg-Ritz expansion.
    pub fn delta(&self, n: u32) -> f64 {
        let nd = n as f64 - self.delta0;
        self.delta0 + self.delta2 / (nd * nd)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumDefectTable {
    species: String,
    entries: Vec<DefectEntry>,
}

impl QuantumDefectTable {
    /// The shipped rubidium-85 table.
    pub fn rubidium85() -> Self {
        Self::parse(RB85_TABLE).expect("bundled defect table is valid")
    }

    /// All defects zero: the hydrogen atom.
    pub fn hydrogenic() -> Self {
        let mut entries = Vec::new();
        for l in 0..=MAX_DEFECT_L {
            for j in [l as f64 - 0.5, l as f64 + 0.5] {
                if j > 0.0 {
                    entries.push(DefectEntry { l, j, delta0: 0.0, delta2: 0.0, n_min: 1 });
                }
            }
        }
        Self { species: "H".into(), entries }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AtomError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Parses the whitespace-separated species format:
    ///
    /// ```text
    /// species: Rb85
    /// # l  j    delta0     delta2   n_min
    /// 0    0.5  3.1311804  0.1784   20
    /// ```
    pub fn parse(text: &str) -> Result<Self, AtomError> {
        let mut species = None;
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("species:") {
                species = Some(rest.trim().to_string());
                continue;
            }
            let err = |message: String| AtomError::Parse { line: line_no, message };
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 5 {
                return Err(err(format!("expected 5 columns, found {}", cols.len())));
            }
            let l: u32 = cols[0].parse().map_err(|e| err(format!("l: {e}")))?;
            let num = |s: &str, what: &str| -> Result<f64, AtomError> {
                let v: f64 = s.parse().map_err(|e| err(format!("{what}: {e}")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(err(format!("{what} is not finite")))
                }
            };
            let j = num(cols[1], "j")?;
            let delta0 = num(cols[2], "delta0")?;
            let delta2 = num(cols[3], "delta2")?;
            let n_min: u32 = cols[4].parse().map_err(|e| err(format!("n_min: {e}")))?;
            if n_min < 1 {
                return Err(err("n_min must be at least 1".into()));
            }
            if (j - (l as f64 + 0.5)).abs() > 1e-12 && (j - (l as f64 - 0.5)).abs() > 1e-12 {
                return Err(err(format!("j = {j} is not l +/- 1/2")));
            }
            if l > MAX_DEFECT_L {
                return Err(err(format!("defects above l = {MAX_DEFECT_L} are fixed to zero")));
            }
            entries.push(DefectEntry { l, j, delta0, delta2, n_min });
        }
        let species = species.ok_or(AtomError::Parse { line: 0, message: "missing 'species:' line".into() })?;
        Ok(Self { species, entries })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("species: {}\n# l  j  delta0  delta2  n_min\n", self.species);
        for e in &self.entries {
            out.push_str(&format!("{} {} {} {} {}\n", e.l, e.j, e.delta0, e.delta2, e.n_min));
        }
        out
    }

    pub fn species(&self) -> &str {
        &self.species
    }

    pub fn entries(&self) -> &[DefectEntry] {
        &self.entries
    }

    /// Largest principal-quantum-number floor over all rows.
    pub fn n_min(&self) -> u32 {
        self.entries.iter().map(|e| e.n_min).max().unwrap_or(1)
    }

    /// Largest constant defect; a proxy for how far low-l states stray from
    /// their manifold.
    pub fn max_delta0(&self) -> f64 {
        self.entries.iter().map(|e| e.delta0.abs()).fold(0.0, f64::max)
    }

    pub fn delta(&self, n: u32, l: u32, j: f64) -> Result<f64, AtomError> {
        if l > MAX_DEFECT_L {
            let n_min = self.n_min();
            if n < n_min {
                return Err(AtomError::BelowValidityFloor { n, n_min });
            }
            return Ok(0.0);
        }
        let entry = self.entries.iter().find(|e| e.l == l && (e.j - j).abs() < 1e-9).ok_or_else(|| AtomError::MissingDefect {
            species: self.species.clone(),
            l,
            j,
        })?;
        if n < entry.n_min {
            return Err(AtomError::BelowValidityFloor { n, n_min: entry.n_min });
        }
        Ok(entry.delta(n))
    }
}

/// A field-free `|n, l, m_l>` state with `j = l + 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SphericalState {
    pub n: u32,
    pub l: u32,
    pub m: i32,
}

impl SphericalState {
    pub fn new(n: u32, l: u32, m: i32) -> Result<Self, AtomError> {
        if n == 0 || l >= n || m.unsigned_abs() > l {
            return Err(AtomError::InvalidState { n, l, m });
        }
        Ok(Self { n, l, m })
    }

    pub fn j(&self) -> f64 {
        self.l as f64 + 0.5
    }
}

/// Field-free energy `-1 / (2 (n - delta)^2)` in hartree.
pub fn energy(state: &SphericalState, table: &QuantumDefectTable) -> Result<f64, AtomError> {
    level_energy(state.n, state.l, table)
}

pub(crate) fn level_energy(n: u32, l: u32, table: &QuantumDefectTable) -> Result<f64, AtomError> {
    let delta = table.delta(n, l, l as f64 + 0.5)?;
    let n_eff = n as f64 - delta;
    Ok(-0.5 / (n_eff * n_eff))
}

/// Default step of the `x = sqrt(r)` grid.
pub const DEFAULT_GRID_STEP: f64 = 0.01;

/// Uniform grid in `x = sqrt(r)`.
///
/// On this grid the Coulomb radial equation keeps a roughly constant local
/// wavelength from the core out to the outer turning point.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    step: f64,
    x: Vec<f64>,
}

impl RadialGrid {
    /// Grid reaching `r_out = 2 n (n + 15)`, enough for every state with
    /// principal quantum number up to `n_max`.
    pub fn for_principal(n_max: u32, step: f64) -> Self {
        let n = n_max as f64;
        let x_out = (2.0 * n * (n + 15.0)).sqrt();
        let points = (x_out / step).ceil() as usize;
        let x = (1..=points).map(|i| i as f64 * step).collect();
        Self { step, x }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn r_out(&self) -> f64 {
        let x = self.x.last().copied().unwrap_or(0.0);
        x * x
    }
}

/// Numerov solution of the radial equation on a [`RadialGrid`].
///
/// Stores `X(x) = x^{-1/2} P(r)` where `P = r R` is the usual reduced radial
/// function; `X'' = [(2l+1/2)(2l+3/2)/x^2 - 8 - 8 E x^2] X`.
#[derive(Debug, Clone)]
pub struct RadialSolution {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
    l: u32,
    energy: f64,
    inner_index: usize,
}

impl RadialSolution {
    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn l(&self) -> u32 {
        self.l
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Radius below which the solution was truncated to zero.
    pub fn r_inner(&self) -> f64 {
        let x = self.grid.x[self.inner_index];
        x * x
    }

    pub fn r_outer(&self) -> f64 {
        self.grid.r_out()
    }

    /// Reduced radial function `P(r)` at grid point `i` (with `r = x_i^2`).
    pub fn reduced(&self, i: usize) -> f64 {
        self.grid.x[i].sqrt() * self.values[i]
    }

    /// `∫ P_a(r) r^power P_b(r) dr`.
    pub fn radial_integral(&self, other: &RadialSolution, power: i32) -> Result<f64, AtomError> {
        if !Arc::ptr_eq(&self.grid, &other.grid) && *self.grid != *other.grid {
            return Err(AtomError::GridMismatch);
        }
        Ok(overlap_kernel(&self.grid, &self.values, &other.values, power))
    }

    pub fn norm(&self) -> f64 {
        overlap_kernel(&self.grid, &self.values, &self.values, 0)
    }

    pub fn expectation_r(&self) -> f64 {
        overlap_kernel(&self.grid, &self.values, &self.values, 1)
    }
}

fn overlap_kernel(grid: &RadialGrid, a: &[f64], b: &[f64], power: i32) -> f64 {
    // P_a r^p P_b dr = 2 x^(2p+2) X_a X_b dx
    let exp = 2 * power + 2;
    let sum: f64 = grid.x.iter().zip(a.iter().zip(b)).map(|(&x, (&u, &v))| x.powi(exp) * u * v).sum();
    2.0 * sum * grid.step
}

/// Solve the radial equation for `state` at `energy` on a grid sized for
/// that state alone.
pub fn radial_wavefunction(state: &SphericalState, energy: f64) -> Result<RadialSolution, AtomError> {
    let grid = Arc::new(RadialGrid::for_principal(state.n, DEFAULT_GRID_STEP));
    solve_radial(&grid, state.l, energy)
}

/// Inward Numerov integration from the outer edge of `grid`.
///
/// The integration stops early once the solution starts growing inside the
/// inner classically forbidden region, which is where the irregular solution
/// takes over for defect-shifted energies. Phase: positive at large `r`.
pub fn solve_radial(grid: &Arc<RadialGrid>, l: u32, energy: f64) -> Result<RadialSolution, AtomError> {
    let x = &grid.x;
    let n = x.len();
    let fail = |reason: &str, inner: usize| AtomError::IntegrationFailure {
        l,
        energy,
        reason: reason.to_string(),
        points: n,
        r_inner: x.get(inner).map(|v| v * v).unwrap_or(0.0),
    };
    if !(energy < 0.0) || !energy.is_finite() {
        return Err(fail("energy must be negative (bound state)", 0));
    }
    if n < 8 {
        return Err(fail("grid too short", 0));
    }
    let h2 = grid.step * grid.step;
    let centrifugal = (2.0 * l as f64 + 0.5) * (2.0 * l as f64 + 1.5);
    let k = |xi: f64| centrifugal / (xi * xi) - 8.0 - 8.0 * energy * xi * xi;

    // local wavelength check: at least 10 points per wavelength
    let k_min = x.iter().map(|&xi| k(xi)).fold(f64::INFINITY, f64::min);
    if k_min < 0.0 && grid.step * (-k_min).sqrt() > 2.0 * std::f64::consts::PI / 10.0 {
        return Err(fail("grid coarser than 10 points per local wavelength", 0));
    }

    // bottom of the effective potential; the inner forbidden region lies below it
    let x_well = (centrifugal / (8.0 * -energy)).powf(0.25);

    let mut values = vec![0.0; n];
    values[n - 1] = 0.0;
    values[n - 2] = 1e-30;
    let f = |xi: f64| 1.0 - h2 * k(xi) / 12.0;
    let mut inner_index = 0;
    for i in (1..n - 1).rev() {
        let next = (2.0 * values[i] * (1.0 + 5.0 * h2 * k(x[i]) / 12.0) - values[i + 1] * f(x[i + 1])) / f(x[i - 1]);
        values[i - 1] = next;
        if next.abs() > 1e100 {
            for v in &mut values[i - 1..] {
                *v *= 1e-100;
            }
        }
        if x[i - 1] < x_well && k(x[i - 1]) > 0.0 && values[i - 1].abs() > values[i].abs() {
            for v in &mut values[..i] {
                *v = 0.0;
            }
            inner_index = i;
            break;
        }
    }

    let norm = overlap_kernel(grid, &values, &values, 0);
    if !norm.is_finite() || norm <= 0.0 {
        return Err(fail("normalization is not finite", inner_index));
    }
    let mut scale = 1.0 / norm.sqrt();
    // positive at the outer turning point: take the sign of the outermost lobe
    let outer_sign = values.iter().rev().find(|v| v.abs() > 0.0).map(|v| v.signum()).unwrap_or(1.0);
    scale *= outer_sign;
    for v in &mut values {
        *v *= scale;
    }
    let solution = RadialSolution { grid: grid.clone(), values, l, energy, inner_index };
    if (solution.norm() - 1.0).abs() > 1e-8 {
        return Err(fail("normalization did not converge", inner_index));
    }
    Ok(solution)
}

/// Radial functions for every `(n, l)` of a window of principal quantum
/// numbers, on one shared grid, with memoised `r` integrals.
#[derive(Debug)]
pub struct RadialCache {
    grid: Arc<RadialGrid>,
    solutions: HashMap<(u32, u32), RadialSolution>,
    integrals: std::sync::Mutex<HashMap<(u32, u32, u32, u32), f64>>,
}

impl RadialCache {
    pub fn new(n_values: &[u32], table: &QuantumDefectTable, step: f64) -> Result<Self, AtomError> {
        let n_max = n_values.iter().copied().max().unwrap_or(1);
        let grid = Arc::new(RadialGrid::for_principal(n_max, step));
        let keys: Vec<(u32, u32)> = n_values.iter().flat_map(|&n| (0..n).map(move |l| (n, l))).collect();
        let solve = |&(n, l): &(u32, u32)| -> Result<((u32, u32), RadialSolution), AtomError> {
            let e = level_energy(n, l, table)?;
            Ok(((n, l), solve_radial(&grid, l, e)?))
        };
        #[cfg(feature = "parallel")]
        let solved: Result<Vec<_>, _> = {
            use rayon::prelude::*;
            keys.par_iter().map(solve).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let solved: Result<Vec<_>, _> = keys.iter().map(solve).collect();
        Ok(Self { grid, solutions: solved?.into_iter().collect(), integrals: Default::default() })
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn solution(&self, n: u32, l: u32) -> Option<&RadialSolution> {
        self.solutions.get(&(n, l))
    }

    /// `<n1 l1| r |n2 l2>`; zero for states missing from the cache.
    pub fn r_element(&self, n1: u32, l1: u32, n2: u32, l2: u32) -> f64 {
        let key = if (n1, l1) <= (n2, l2) { (n1, l1, n2, l2) } else { (n2, l2, n1, l1) };
        if let Some(v) = self.integrals.lock().expect("cache lock").get(&key) {
            return *v;
        }
        let value = match (self.solutions.get(&(n1, l1)), self.solutions.get(&(n2, l2))) {
            (Some(a), Some(b)) => overlap_kernel(&self.grid, &a.values, &b.values, 1),
            _ => 0.0,
        };
        self.integrals.lock().expect("cache lock").insert(key, value);
        value
    }
}

fn ln_factorial(n: i64) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// Clebsch-Gordan coefficient `<j1 m1; j2 m2 | j m>` for integer angular
/// momenta (Racah's closed form, Condon-Shortley phase).
pub fn clebsch_gordan(j1: i64, m1: i64, j2: i64, m2: i64, j: i64, m: i64) -> f64 {
    if m1 + m2 != m || m1.abs() > j1 || m2.abs() > j2 || m.abs() > j {
        return 0.0;
    }
    if j < (j1 - j2).abs() || j > j1 + j2 {
        return 0.0;
    }
    let prefactor = 0.5 * ((2 * j + 1) as f64).ln()
        + 0.5
            * (ln_factorial(j1 + j2 - j) + ln_factorial(j1 - j2 + j) + ln_factorial(-j1 + j2 + j)
                - ln_factorial(j1 + j2 + j + 1))
        + 0.5
            * (ln_factorial(j1 + m1)
                + ln_factorial(j1 - m1)
                + ln_factorial(j2 + m2)
                + ln_factorial(j2 - m2)
                + ln_factorial(j + m)
                + ln_factorial(j - m));
    let k_min = 0.max(j2 - j - m1).max(j1 - j + m2);
    let k_max = (j1 + j2 - j).min(j1 - m1).min(j2 + m2);
    let mut sum = 0.0;
    for k in k_min..=k_max {
        let ln_den = ln_factorial(k)
            + ln_factorial(j1 + j2 - j - k)
            + ln_factorial(j1 - m1 - k)
            + ln_factorial(j2 + m2 - k)
            + ln_factorial(j - j2 + m1 + k)
            + ln_factorial(j - j1 - m2 + k);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * (prefactor - ln_den).exp();
    }
    sum
}

/// `<l' m'| C^1_q |l m>` for the rank-1 normalized spherical tensor.
pub fn spherical_tensor_element(l_out: u32, m_out: i32, l_in: u32, m_in: i32, q: i32) -> f64 {
    let (lo, li) = (l_out as i64, l_in as i64);
    ((2 * li + 1) as f64 / (2 * lo + 1) as f64).sqrt()
        * clebsch_gordan(li, 0, 1, 0, lo, 0)
        * clebsch_gordan(li, m_in as i64, 1, q as i64, lo, m_out as i64)
}

/// `<l', m| cos(theta) |l, m>`.
pub fn angular_z(l_out: u32, l_in: u32, m: i32) -> f64 {
    spherical_tensor_element(l_out, m, l_in, m, 0)
}

/// `<l', m+1| sin(theta) e^{i phi} |l, m>`, i.e. the angular part of `x + i y`.
pub fn angular_raise(l_out: u32, l_in: u32, m: i32) -> f64 {
    -std::f64::consts::SQRT_2 * spherical_tensor_element(l_out, m + 1, l_in, m, 1)
}

/// Field polarization for matrix elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    X,
    Y,
    Z,
    /// `(x + i y) / sqrt(2)`
    SigmaPlus,
    /// `(x - i y) / sqrt(2)`
    SigmaMinus,
}

/// Angular part of `<a| r_pol / r |b>`.
pub fn angular_factor(a: &SphericalState, b: &SphericalState, pol: Polarization) -> Complex64 {
    if a.l.abs_diff(b.l) != 1 {
        return Complex64::new(0.0, 0.0);
    }
    let raise = |lo: u32, mo: i32, li: u32, mi: i32| {
        if mo == mi + 1 {
            angular_raise(lo, li, mi)
        } else {
            0.0
        }
    };
    // <a|x - iy|b> = conj(<b|x + iy|a>), real in this phase convention
    let plus = raise(a.l, a.m, b.l, b.m);
    let minus = raise(b.l, b.m, a.l, a.m);
    match pol {
        Polarization::Z => {
            if a.m == b.m {
                Complex64::new(angular_z(a.l, b.l, a.m), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }
        Polarization::X => Complex64::new(0.5 * (plus + minus), 0.0),
        Polarization::Y => Complex64::new(0.0, -0.5 * (plus - minus)),
        Polarization::SigmaPlus => Complex64::new(plus / std::f64::consts::SQRT_2, 0.0),
        Polarization::SigmaMinus => Complex64::new(minus / std::f64::consts::SQRT_2, 0.0),
    }
}

/// `<a| r_pol |b>` in atomic units.
pub fn position_matrix_element(
    a: &SphericalState,
    b: &SphericalState,
    pol: Polarization,
    table: &QuantumDefectTable,
) -> Result<Complex64, AtomError> {
    let ang = angular_factor(a, b, pol);
    if ang.norm() == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let grid = Arc::new(RadialGrid::for_principal(a.n.max(b.n), DEFAULT_GRID_STEP));
    let ua = solve_radial(&grid, a.l, energy(a, table)?)?;
    let ub = solve_radial(&grid, b.l, energy(b, table)?)?;
    Ok(ang * ua.radial_integral(&ub, 1)?)
}

/// Electric dipole `<a| d_pol |b>` with `d = q r`, `q = -1`.
pub fn dipole_matrix_element(
    a: &SphericalState,
    b: &SphericalState,
    pol: Polarization,
    table: &QuantumDefectTable,
) -> Result<Complex64, AtomError> {
    Ok(-position_matrix_element(a, b, pol, table)?)
}
