mod common;

use std::sync::Arc;

use gustrom::aerofoil::{AerofoilModel, AerofoilParams};
use gustrom::gust::DiscreteGustSpec;
use gustrom::nmor::io::{from_bytes, to_bytes};
use gustrom::nmor::{build_rom, RomBuildOptions, RomSystem, SelectionCriteria};
use gustrom::sim::{extract_metrics, simulate_fom, simulate_rom};
use gustrom::test_models::{DuffingModel, QuadraticModel};
use gustrom::Model;

fn full_options(order: u8, n: usize) -> RomBuildOptions {
    RomBuildOptions {
        order,
        selection: SelectionCriteria {
            modes: n,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn full_basis_linear_rom_is_exact() {
    let model = common::random_linear_model(21, 14, 5);
    let rom = build_rom(&model, &full_options(1, 14)).unwrap().rom;
    assert_eq!(rom.m(), 14);
    let sys = Arc::new(RomSystem::compile(&rom));
    for (w0, h) in [(1.0, 3.0), (0.3, 20.0)] {
        let g = DiscreteGustSpec::new(w0, h, 0.5, 1.0).unwrap();
        let fom = simulate_fom(&model, &rom.base_point, &g, 0.01, 40.0).unwrap();
        let red = simulate_rom(&sys, &[0.0; 14], &g, 0.01, 40.0).unwrap();
        let err = common::rel_l2(&red, &fom, 14);
        assert!(err <= 1e-8, "relative L2 {err:.3e}");
    }
}

#[test]
fn linear_model_has_no_higher_order_terms() {
    let model = common::random_linear_model(22, 14, 5);
    let rom = build_rom(&model, &full_options(3, 14)).unwrap().rom;
    assert!(rom.d.as_ref().unwrap().max_abs() < 1e-6);
    assert!(rom.e.as_ref().unwrap().max_abs() < 1e-6);
}

#[test]
fn quadratic_tensor_matches_projection() {
    let model = QuadraticModel::new([[-0.7, 1.3], [-0.4, -0.2]]);
    let rom = build_rom(&model, &full_options(3, 2)).unwrap().rom;
    let (phi, psi) = (&rom.basis.phi, &rom.basis.psi);
    let d = rom.d.as_ref().unwrap();
    for k in 0..2 {
        for i in 0..2 {
            for j in 0..2 {
                // R contains w_0^2 in row 0 only
                let want = psi[(0, k)].conj() * phi[(0, i)] * phi[(0, j)];
                assert!((d.get(k, i, j) - want).norm() < 1e-4, "D[{k}{i}{j}]");
            }
        }
    }
    assert!(rom.e.as_ref().unwrap().max_abs() < 1e-4);
}

#[test]
fn duffing_tensor_matches_projection() {
    let model = DuffingModel::default();
    let rom = build_rom(&model, &full_options(3, 2)).unwrap().rom;
    let (phi, psi) = (&rom.basis.phi, &rom.basis.psi);
    let e = rom.e.as_ref().unwrap();
    for k in 0..2 {
        for i in 0..2 {
            for j in 0..2 {
                for l in 0..2 {
                    // -x^3 in the velocity row
                    let want = -psi[(1, k)].conj() * phi[(0, i)] * phi[(0, j)] * phi[(0, l)];
                    assert!((e.get(k, i, j, l) - want).norm() < 1e-4, "E[{k}{i}{j}{l}]");
                }
            }
        }
    }
    assert!(rom.d.as_ref().unwrap().max_abs() < 1e-4);
}

#[test]
fn aerofoil_basis_quality() {
    let model = common::aerofoil();
    let b = build_rom(&model, &common::aerofoil_rom_options(3, 4)).unwrap();
    assert_eq!(b.rom.m(), 4);
    assert!(b.rom.basis.biorthonormality_error() <= 1e-10);
    assert!(b.rom.basis.eigen_residual(&b.jacobian.entries) <= 1e-8);
    let loaded = from_bytes(&to_bytes(&b.rom).unwrap()).unwrap();
    assert!(loaded.basis.biorthonormality_error() <= 1e-10);
    assert_eq!(loaded, b.rom);
}

#[test]
fn tensors_are_symmetric() {
    let model = common::aerofoil();
    let rom = build_rom(&model, &common::aerofoil_rom_options(3, 5)).unwrap().rom;
    let (d, e) = (rom.d.as_ref().unwrap(), rom.e.as_ref().unwrap());
    let m = rom.m();
    for k in 0..m {
        for i in 0..m {
            for j in 0..m {
                assert_eq!(d.get(k, i, j), d.get(k, j, i));
                for l in 0..m {
                    let v = e.get(k, i, j, l);
                    for p in [(i, l, j), (j, i, l), (j, l, i), (l, i, j), (l, j, i)] {
                        assert_eq!(v, e.get(k, p.0, p.1, p.2));
                    }
                }
            }
        }
    }
}

#[test]
fn odd_nonlinearity_leaves_no_quadratic_part() {
    let model = common::aerofoil();
    let rom = build_rom(&model, &common::aerofoil_rom_options(2, 4)).unwrap().rom;
    let d = rom.d.as_ref().unwrap().max_abs();
    let noise = rom.fd.richardson_d.unwrap();
    assert!(d <= 10.0 * noise.max(1e-9), "max |D| {d:.3e}, fd noise {noise:.3e}");
    let sys = RomSystem::compile(&rom);
    assert_eq!(sys.term_counts().0, 0);
}

#[test]
fn reduced_rhs_pair_consistency() {
    // the conjugate member's derivative is the conjugate of its representative's
    let model = common::aerofoil();
    let rom = build_rom(&model, &common::aerofoil_rom_options(3, 5)).unwrap().rom;
    let y = [0.05, -0.02, 0.01, 0.03, -0.04];
    let z = gustrom::nmor::rom::unpack(&rom.basis, &y);
    let dz = rom.reduced_rhs(&z, &[0.1]);
    for k in 0..rom.m() {
        let c = rom.basis.conj_index[k];
        assert!((dz[c] - dz[k].conj()).norm() < 1e-14 * (1.0 + dz[k].norm()));
    }
    assert!(z.iter().all(|v| v.re.is_finite()));
}

/// Relative peak-plunge error of a ROM against `model` for gust amplitude `w0`.
fn peak_error(model: &AerofoilModel, order: u8, modes: usize, w0: f64, h_g: f64) -> f64 {
    let rom = build_rom(model, &common::aerofoil_rom_options(order, modes)).unwrap().rom;
    let sys = Arc::new(RomSystem::compile(&rom));
    let g = DiscreteGustSpec::new(w0, h_g, 1.0, 1.0).unwrap();
    let dur = 1.0 + h_g + 200.0;
    let ch = ["xi".to_string()];
    let f = extract_metrics(&simulate_fom(model, &rom.base_point, &g, 0.01, dur).unwrap(), &ch).unwrap();
    let r = extract_metrics(&simulate_rom(&sys, &vec![0.0; sys.dim()], &g, 0.01, dur).unwrap(), &ch).unwrap();
    (r.channels[0].peak_abs - f.channels[0].peak_abs) / f.channels[0].peak_abs
}

#[test]
fn linear_rom_converges_quadratically_in_amplitude() {
    // the truncation error of the linear ROM is amplitude independent; it is
    // measured on the spring-free model and the remainder must shrink as w0^2
    let model = common::aerofoil();
    let linear = AerofoilModel::new(AerofoilParams {
        k_xi3: 0.0,
        k_alpha3: 0.0,
        ..AerofoilParams::default()
    })
    .unwrap();
    let h_g = 60.0;
    let truncation = peak_error(&linear, 1, 4, 0.01, h_g);
    let ladder = [0.04, 0.02, 0.01];
    let excess: Vec<f64> = ladder
        .iter()
        .map(|&a| (peak_error(&model, 1, 4, a, h_g) - truncation).abs())
        .collect();
    for p in excess.windows(2) {
        let ratio = p[0] / p[1];
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}, ladder {excess:?}");
    }
}

#[test]
fn descriptor_survives_reduction() {
    let model = common::aerofoil();
    let rom = build_rom(&model, &common::aerofoil_rom_options(1, 4)).unwrap().rom;
    assert_eq!(&rom.descriptor, model.descriptor());
}
