//! Conversions between atomic units and laboratory units.
//!
//! Frequencies in MHz are ordinary frequencies (`E / h`), matching how Stark
//! splittings and RF carriers are quoted in the lab. CODATA 2018 values.

/// Hartree energy expressed as an ordinary frequency, in MHz.
pub const HARTREE_MHZ: f64 = 6.579_683_920_502e9;
/// Atomic unit of time in ns.
pub const AU_TIME_NS: f64 = 2.418_884_326_585_7e-8;
/// Atomic unit of electric field in V/cm.
pub const AU_FIELD_V_PER_CM: f64 = 5.142_206_747_63e9;

pub fn v_per_cm_to_au(field: f64) -> f64 {
    field / AU_FIELD_V_PER_CM
}

pub fn au_to_v_per_cm(field: f64) -> f64 {
    field * AU_FIELD_V_PER_CM
}

pub fn mv_per_cm_to_au(field: f64) -> f64 {
    field * 1e-3 / AU_FIELD_V_PER_CM
}

pub fn au_to_mv_per_cm(field: f64) -> f64 {
    field * AU_FIELD_V_PER_CM * 1e3
}

pub fn uv_per_cm_to_v_per_cm(field: f64) -> f64 {
    field * 1e-6
}

pub fn ns_to_au(t: f64) -> f64 {
    t / AU_TIME_NS
}

pub fn au_to_ns(t: f64) -> f64 {
    t * AU_TIME_NS
}

/// Energy (or angular frequency) in a.u. to an ordinary frequency in MHz.
pub fn au_to_mhz(energy: f64) -> f64 {
    energy * HARTREE_MHZ
}

/// Ordinary frequency in MHz to an angular frequency in a.u.
pub fn mhz_to_au(freq: f64) -> f64 {
    freq / HARTREE_MHZ
}

/// Angular frequency (rad/ns) of a carrier given in MHz.
pub fn mhz_to_rad_per_ns(freq: f64) -> f64 {
    2.0 * std::f64::consts::PI * freq * 1e-3
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn carrier_phase_consistent_between_unit_systems() {
        // omega * t must not depend on the unit system used to form it.
        let f = 230.0;
        let t_ns = 17.3;
        let a = mhz_to_au(f) * ns_to_au(t_ns);
        let b = mhz_to_rad_per_ns(f) * t_ns;
        assert!((a - b).abs() < 1e-9 * b);
    }

    #[test]
    fn first_order_ladder_frequency() {
        // 1.5 n E_DC at n = 51, 2.346 V/cm
        let w0 = au_to_mhz(1.5 * 51.0 * v_per_cm_to_au(2.346));
        assert!((w0 - 229.6).abs() < 0.2, "{w0}");
    }
}
