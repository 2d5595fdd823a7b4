//! `rom.bin` container.
//!
//! CBOR envelope `{ format, version, sha256, payload }` where `payload` is the
//! CBOR encoding of the model in half-pair storage: only real modes and the
//! first member of each conjugate pair are written, together with their rows
//! of `D`, `E` and `Psi^H B_g`. Conjugate members are rebuilt exactly on load.
//! `sha256` is the hex digest of the payload bytes.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{ModelDescriptor, StateVector};
use crate::nmor::coeffs::{Tensor3, Tensor4};
use crate::nmor::eigen::{EigenBasis, SelectionReport};
use crate::nmor::rom::{assemble_rom, FdMetadata, RomModel};

pub const FORMAT: &str = "gustrom-rom";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    sha256: String,
    payload: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct StoredMode {
    lambda: Complex64,
    phi: Vec<Complex64>,
    psi: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct Payload {
    descriptor: ModelDescriptor,
    base_point: Vec<f64>,
    order: u8,
    /// Full mode count `m`; tensor index ranges refer to it.
    m: usize,
    modes: Vec<StoredMode>,
    /// Representative rows, `reps x m x m`.
    d_rows: Option<Vec<Complex64>>,
    /// Representative rows, `reps x m x m x m`.
    e_rows: Option<Vec<Complex64>>,
    /// Representative rows, `reps x n_disturbance_inputs`.
    bg_rows: Vec<Complex64>,
    fd: FdMetadata,
    report: SelectionReport,
}

fn half(rom: &RomModel) -> Payload {
    let basis = &rom.basis;
    let m = basis.m();
    let reps = basis.representatives();
    let modes = reps
        .iter()
        .map(|&k| StoredMode {
            lambda: basis.lambdas[k],
            phi: basis.phi.column(k).iter().copied().collect(),
            psi: basis.psi.column(k).iter().copied().collect(),
        })
        .collect();
    let d_rows = rom.d.as_ref().map(|d| {
        reps.iter()
            .flat_map(|&k| (0..m).flat_map(move |i| (0..m).map(move |j| d.get(k, i, j))))
            .collect()
    });
    let e_rows = rom.e.as_ref().map(|e| {
        reps.iter()
            .flat_map(|&k| {
                (0..m).flat_map(move |i| (0..m).flat_map(move |j| (0..m).map(move |l| e.get(k, i, j, l))))
            })
            .collect()
    });
    let bg_rows = reps
        .iter()
        .flat_map(|&k| rom.bg_reduced.row(k).iter().copied().collect::<Vec<_>>())
        .collect();
    Payload {
        descriptor: rom.descriptor.clone(),
        base_point: rom.base_point.as_slice().to_vec(),
        order: rom.order,
        m,
        modes,
        d_rows,
        e_rows,
        bg_rows,
        fd: rom.fd.clone(),
        report: rom.basis.report.clone(),
    }
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Consistency(format!("ROM file: {}", msg.into()))
}

fn full(p: Payload) -> Result<RomModel> {
    let n = p.descriptor.n_states;
    let m = p.m;
    let n_in = p.descriptor.n_disturbance_inputs;
    let mut lambdas = Vec::with_capacity(m);
    let mut phi_cols: Vec<Vec<Complex64>> = Vec::with_capacity(m);
    let mut psi_cols: Vec<Vec<Complex64>> = Vec::with_capacity(m);
    let mut rep_index = Vec::with_capacity(p.modes.len());
    for mode in &p.modes {
        if mode.phi.len() != n || mode.psi.len() != n {
            return Err(corrupt("eigenvector length differs from the state count"));
        }
        rep_index.push(lambdas.len());
        lambdas.push(mode.lambda);
        phi_cols.push(mode.phi.clone());
        psi_cols.push(mode.psi.clone());
        if mode.lambda.im != 0.0 {
            lambdas.push(mode.lambda.conj());
            phi_cols.push(mode.phi.iter().map(|v| v.conj()).collect());
            psi_cols.push(mode.psi.iter().map(|v| v.conj()).collect());
        }
    }
    if lambdas.len() != m {
        return Err(corrupt(format!("{} modes rebuilt, header says {m}", lambdas.len())));
    }
    let phi = DMatrix::from_fn(n, m, |i, k| phi_cols[k][i]);
    let psi = DMatrix::from_fn(n, m, |i, k| psi_cols[k][i]);
    let basis = EigenBasis::from_parts(lambdas, phi, psi, p.report)?;
    let c = basis.conj_index.clone();
    let reps = rep_index.len();

    let d = match p.d_rows {
        None => None,
        Some(rows) => {
            if rows.len() != reps * m * m {
                return Err(corrupt("bilinear tensor has the wrong size"));
            }
            let mut d = Tensor3::zeros(m);
            for (r, &k) in rep_index.iter().enumerate() {
                for i in 0..m {
                    for j in 0..m {
                        let v = rows[(r * m + i) * m + j];
                        d.set(k, i, j, v);
                        if c[k] != k {
                            d.set(c[k], c[i], c[j], v.conj());
                        }
                    }
                }
            }
            Some(d)
        }
    };
    let e = match p.e_rows {
        None => None,
        Some(rows) => {
            if rows.len() != reps * m * m * m {
                return Err(corrupt("trilinear tensor has the wrong size"));
            }
            let mut e = Tensor4::zeros(m);
            for (r, &k) in rep_index.iter().enumerate() {
                for i in 0..m {
                    for j in 0..m {
                        for l in 0..m {
                            let v = rows[((r * m + i) * m + j) * m + l];
                            e.set(k, i, j, l, v);
                            if c[k] != k {
                                e.set(c[k], c[i], c[j], c[l], v.conj());
                            }
                        }
                    }
                }
            }
            Some(e)
        }
    };
    if p.bg_rows.len() != reps * n_in {
        return Err(corrupt("reduced input matrix has the wrong size"));
    }
    let mut bg = DMatrix::<Complex64>::zeros(m, n_in);
    for (r, &k) in rep_index.iter().enumerate() {
        for ch in 0..n_in {
            let v = p.bg_rows[r * n_in + ch];
            bg[(k, ch)] = v;
            bg[(c[k], ch)] = if c[k] == k { v } else { v.conj() };
        }
    }
    let rom = assemble_rom(
        p.descriptor,
        StateVector::new(p.base_point)?,
        basis,
        d,
        e,
        bg,
        p.order,
        p.fd,
    )?;
    let err = rom.basis.biorthonormality_error();
    if err > 1e-10 {
        return Err(corrupt(format!("biorthonormality error {err:.3e} exceeds 1e-10")));
    }
    Ok(rom)
}

fn encode<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    ciborium::into_writer(value, &mut buf).map_err(|e| Error::Consistency(format!("CBOR encoding failed: {e}")))?;
    Ok(buf)
}

pub fn to_bytes(rom: &RomModel) -> Result<Vec<u8>> {
    let payload = encode(&half(rom))?;
    let envelope = Envelope {
        format: FORMAT.into(),
        version: VERSION,
        sha256: hex::encode(Sha256::digest(&payload)),
        payload,
    };
    encode(&envelope)
}

pub fn from_bytes(bytes: &[u8]) -> Result<RomModel> {
    let env: Envelope = ciborium::from_reader(bytes).map_err(|e| corrupt(format!("not a CBOR envelope: {e}")))?;
    if env.format != FORMAT {
        return Err(corrupt(format!("unexpected format tag `{}`", env.format)));
    }
    if env.version != VERSION {
        return Err(corrupt(format!("unsupported version {}", env.version)));
    }
    let digest = hex::encode(Sha256::digest(&env.payload));
    if digest != env.sha256 {
        return Err(corrupt("content hash mismatch"));
    }
    let payload: Payload =
        ciborium::from_reader(env.payload.as_slice()).map_err(|e| corrupt(format!("payload: {e}")))?;
    full(payload)
}

/// Hex SHA-256 of the serialized payload; stable across save/load.
pub fn content_hash(rom: &RomModel) -> Result<String> {
    Ok(hex::encode(Sha256::digest(encode(&half(rom))?)))
}

pub fn save_rom(rom: &RomModel, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(rom)?).map_err(|e| Error::io(path, e))
}

pub fn load_rom(path: &Path) -> Result<RomModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nmor::eigen::SelectionCriteria;
    use crate::nmor::rom::{build_rom, RomBuildOptions};
    use crate::test_models::DuffingModel;

    fn rom() -> RomModel {
        let opts = RomBuildOptions {
            order: 3,
            selection: SelectionCriteria {
                modes: 2,
                ..Default::default()
            },
            ..Default::default()
        };
        build_rom(&DuffingModel::default(), &opts).unwrap().rom
    }

    #[test]
    fn round_trip_is_exact() {
        let r = rom();
        let back = from_bytes(&to_bytes(&r).unwrap()).unwrap();
        assert_eq!(back, r);
        assert_eq!(content_hash(&back).unwrap(), content_hash(&r).unwrap());
    }

    #[test]
    fn tampering_detected() {
        let mut bytes = to_bytes(&rom()).unwrap();
        let n = bytes.len();
        bytes[n - 20] ^= 0x01;
        assert!(matches!(from_bytes(&bytes), Err(Error::Consistency(_))));
        assert!(from_bytes(b"not cbor").is_err());
    }
}
