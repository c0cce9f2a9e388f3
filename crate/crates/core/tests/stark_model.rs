use circulon::atom::QuantumDefectTable;
use circulon::stark::{assemble_model, ModelConfig, Truncation};

fn spin_coupling(j: f64, m: f64) -> f64 {
    ((j - m) * (j + m + 1.0)).sqrt()
}

#[test]
fn rubidium_two_diagonal_model() {
    let model = assemble_model(&ModelConfig::default(), &QuantumDefectTable::rubidium85()).unwrap();
    assert_eq!(model.dim(), 101);
    let f = model.ladder_frequencies_mhz();
    println!("w01 = {:.3}, w12 = {:.3}, w23 = {:.3}, w0 = {:.3}", f[0], f[1], f[2], model.omega0_mhz());
    assert!((f[0] - 70.36).abs() < 0.5);
    assert!((f[1] - 182.95).abs() < 0.5);
    assert!((f[2] - 227.46).abs() < 0.5);
    assert!((model.omega0_mhz() - 229.6).abs() < 0.2);

    // lowest-diagonal couplings follow the spin-J pattern near the centre
    let j = 25.0;
    let piv = model.pivotal();
    let scale = 1.5 * 51.0;
    for m in 20..30 {
        let c = model.raising().get(piv[m + 1], piv[m]).abs();
        let spin = scale * spin_coupling(j, m as f64 - j);
        assert!((c / spin - 1.0).abs() < 0.05, "m = {m}: {c} vs {spin}");
    }
}

#[test]
fn dipole_matrices_hermitian_and_delta_m_one() {
    let model = assemble_model(&ModelConfig::default(), &QuantumDefectTable::rubidium85()).unwrap();
    let (dx, dy) = (model.dipole_x(), model.dipole_y());
    assert!((&dx - dx.adjoint()).camax() < 1e-10);
    assert!((&dy - dy.adjoint()).camax() < 1e-10);
    let lv = model.levels();
    for i in 0..model.dim() {
        for k in 0..model.dim() {
            if (lv[i].m - lv[k].m).abs() != 1 {
                assert_eq!(dx[(i, k)].norm(), 0.0);
                assert_eq!(dy[(i, k)].norm(), 0.0);
            }
        }
    }
}

#[test]
fn full_manifold_size() {
    let cfg = ModelConfig { truncation: Truncation::FullManifold, ..ModelConfig::default() };
    let model = assemble_model(&cfg, &QuantumDefectTable::rubidium85()).unwrap();
    println!("full manifold: {} states, {} gaps", model.dim(), model.gaps().len());
    assert!(model.dim() > 2400 && model.dim() <= 2601);
}
