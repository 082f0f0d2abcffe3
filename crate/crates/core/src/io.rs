//! Binary container, CSV, and structured-report serialization.
//!
//! The container is a flat little-endian layout: a 4-byte magic, a u32
//! version, shape fields, then raw f64 payloads. Token ids are stored as
//! f64 (exact below 2^53) so every payload shares one element type.

use crate::coeffs::{DomainMode, SequenceInput, StepCoefficients};
use crate::error::Error;
use crate::params::{AnyParams, PolarizationConfig, Variant};
use crate::scalar::ScanScalar;
use crate::scan::StateTrajectory;
use crate::tasks::data::{ARConfig, ARExample};
use crate::tasks::model::{ModelConfig, TinyModel};
use crate::Result;
use std::io::{Read, Write};
use std::path::Path;

pub const CONTAINER_VERSION: u32 = 1;

const MAGIC_COEFFS: &[u8; 4] = b"SSMC";
const MAGIC_TRAJ: &[u8; 4] = b"SSMT";
const MAGIC_PARAMS: &[u8; 4] = b"SSMP";
const MAGIC_DATASET: &[u8; 4] = b"SSMD";
const MAGIC_MODEL: &[u8; 4] = b"SSMM";

// ---------------------------------------------------------------- primitives

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}
fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}
fn put_f64s(buf: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(data: &'a [u8]) -> Self {
        Reader { data, pos: 0 }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Format(format!(
                "truncated container: wanted {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn magic(&mut self, want: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != want {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                got, want
            )));
        }
        let version = self.u32()?;
        if version != CONTAINER_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        Ok(())
    }
}

fn header(magic: &[u8; 4]) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(magic);
    put_u32(&mut buf, CONTAINER_VERSION);
    buf
}

fn put_named_tensors(buf: &mut Vec<u8>, tensors: &[(String, &[f64])]) {
    put_u32(buf, tensors.len() as u32);
    for (name, data) in tensors {
        let nb = name.as_bytes();
        put_u32(buf, nb.len() as u32);
        buf.extend_from_slice(nb);
        put_u64(buf, data.len() as u64);
        put_f64s(buf, data);
    }
}

fn read_named_tensors(r: &mut Reader) -> Result<Vec<(String, Vec<f64>)>> {
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let nlen = r.u32()? as usize;
        let name = String::from_utf8(r.take(nlen)?.to_vec())
            .map_err(|e| Error::Format(format!("bad tensor name: {e}")))?;
        let len = r.u64()? as usize;
        out.push((name, r.f64s(len)?));
    }
    Ok(out)
}

/// FNV-1a 64 over raw bytes; recorded in dataset manifests.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

// --------------------------------------------------------------- coefficients

/// Encode per-channel coefficient streams (real or complex entries become
/// re/im pairs; the kind flag distinguishes them).
pub fn encode_coefficients<S: ScanScalar>(channels: &[StepCoefficients<S>]) -> Vec<u8> {
    assert!(!channels.is_empty());
    let complex = channels[0].a().iter().any(|v| v.im() != 0.0)
        || channels[0].b().iter().any(|v| v.im() != 0.0)
        || channels[0].c().iter().any(|v| v.im() != 0.0);
    let c0 = &channels[0];
    let mut buf = header(MAGIC_COEFFS);
    buf.push(complex as u8);
    buf.push(match c0.mode() {
        DomainMode::Discrete => 0,
        DomainMode::Continuous => 1,
    });
    put_u64(&mut buf, c0.t_len() as u64);
    put_u64(&mut buf, c0.state_dim() as u64);
    put_u64(&mut buf, channels.len() as u64);
    let put_values = |buf: &mut Vec<u8>, vs: &[S]| {
        for v in vs {
            buf.extend_from_slice(&v.re().to_le_bytes());
            if complex {
                buf.extend_from_slice(&v.im().to_le_bytes());
            }
        }
    };
    for ch in channels {
        put_values(&mut buf, ch.a());
        put_values(&mut buf, ch.b());
        put_values(&mut buf, ch.c());
        put_f64s(&mut buf, ch.delta());
    }
    buf
}

/// Decode a real-mode coefficient container.
pub fn decode_coefficients(bytes: &[u8]) -> Result<Vec<StepCoefficients<f64>>> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC_COEFFS)?;
    let complex = r.u8()? != 0;
    if complex {
        return Err(Error::Format(
            "complex coefficient container; real decoder requested".into(),
        ));
    }
    let mode = match r.u8()? {
        0 => DomainMode::Discrete,
        1 => DomainMode::Continuous,
        m => return Err(Error::Format(format!("unknown mode flag {m}"))),
    };
    let t_len = r.u64()? as usize;
    let n = r.u64()? as usize;
    let d = r.u64()? as usize;
    let mut out = Vec::with_capacity(d);
    for _ in 0..d {
        let a = r.f64s(t_len * n)?;
        let b = r.f64s(t_len * n)?;
        let c = r.f64s(t_len * n)?;
        let delta = r.f64s(t_len)?;
        out.push(StepCoefficients::new(t_len, n, mode, a, b, c, delta)?);
    }
    Ok(out)
}

/// Encode a trajectory (states and outputs).
pub fn encode_trajectory<S: ScanScalar>(traj: &StateTrajectory<S>) -> Vec<u8> {
    let complex = traj.states().iter().any(|v| v.im() != 0.0)
        || traj.outputs().iter().any(|v| v.im() != 0.0);
    let mut buf = header(MAGIC_TRAJ);
    buf.push(complex as u8);
    put_u64(&mut buf, traj.t_len() as u64);
    put_u64(&mut buf, traj.state_dim() as u64);
    let put_values = |buf: &mut Vec<u8>, vs: &[S]| {
        for v in vs {
            buf.extend_from_slice(&v.re().to_le_bytes());
            if complex {
                buf.extend_from_slice(&v.im().to_le_bytes());
            }
        }
    };
    put_values(&mut buf, traj.states());
    put_values(&mut buf, traj.outputs());
    buf
}

/// Decode a real-mode trajectory container into ((T+1)×N states, outputs).
pub fn decode_trajectory(bytes: &[u8]) -> Result<(Vec<f64>, Vec<f64>, usize, usize)> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC_TRAJ)?;
    let complex = r.u8()? != 0;
    if complex {
        return Err(Error::Format(
            "complex trajectory container; real decoder requested".into(),
        ));
    }
    let t_len = r.u64()? as usize;
    let n = r.u64()? as usize;
    let states = r.f64s((t_len + 1) * n)?;
    let outputs = r.f64s(t_len)?;
    Ok((states, outputs, t_len, n))
}

// -------------------------------------------------------------------- params

fn variant_tag(v: Variant) -> u8 {
    match v {
        Variant::S4 => 0,
        Variant::Mamba => 1,
        Variant::La => 2,
        Variant::RetNet => 3,
        Variant::Gla => 4,
        Variant::Rwkv => 5,
        Variant::Griffin => 6,
    }
}

fn variant_from_tag(t: u8) -> Result<Variant> {
    Ok(match t {
        0 => Variant::S4,
        1 => Variant::Mamba,
        2 => Variant::La,
        3 => Variant::RetNet,
        4 => Variant::Gla,
        5 => Variant::Rwkv,
        6 => Variant::Griffin,
        _ => return Err(Error::Format(format!("unknown variant tag {t}"))),
    })
}

fn polar_flags(p: PolarizationConfig) -> u8 {
    (p.one_channel as u8) | ((p.zero_channel as u8) << 1)
}

fn polar_from_flags(f: u8) -> PolarizationConfig {
    PolarizationConfig {
        one_channel: f & 1 != 0,
        zero_channel: f & 2 != 0,
    }
}

pub fn encode_params(params: &AnyParams, channels: usize) -> Vec<u8> {
    let mut buf = header(MAGIC_PARAMS);
    buf.push(variant_tag(params.variant()));
    put_u64(&mut buf, params.state_dim() as u64);
    put_u64(&mut buf, channels as u64);
    let polar = match params {
        AnyParams::Mamba(m) => m.polarization,
        _ => PolarizationConfig::none(),
    };
    buf.push(polar_flags(polar));
    let tensors: Vec<(String, &[f64])> = params
        .tensors()
        .into_iter()
        .map(|(n, t)| (n.to_string(), t))
        .collect();
    put_named_tensors(&mut buf, &tensors);
    buf
}

/// Rebuild parameters: initialize the right shapes, then overwrite every
/// tensor from the container.
pub fn decode_params(bytes: &[u8]) -> Result<AnyParams> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC_PARAMS)?;
    let variant = variant_from_tag(r.u8()?)?;
    let n = r.u64()? as usize;
    let d = r.u64()? as usize;
    let polar = polar_from_flags(r.u8()?);
    let tensors = read_named_tensors(&mut r)?;
    let mut params = AnyParams::init(variant, n.max(1), d, polar, 0)?;
    load_tensors(&mut params.tensors_mut(), &tensors)?;
    Ok(params)
}

fn load_tensors(dst: &mut [(&'static str, &mut [f64])], src: &[(String, Vec<f64>)]) -> Result<()> {
    for (name, data) in src {
        let slot = dst
            .iter_mut()
            .find(|(n, _)| n == name)
            .ok_or_else(|| Error::Format(format!("unknown tensor '{name}' in container")))?;
        if slot.1.len() != data.len() {
            return Err(Error::Format(format!(
                "tensor '{name}' has {} entries, expected {}",
                data.len(),
                slot.1.len()
            )));
        }
        slot.1.copy_from_slice(data);
    }
    Ok(())
}

// --------------------------------------------------------------------- model

pub fn encode_model(model: &TinyModel) -> Vec<u8> {
    let mut buf = header(MAGIC_MODEL);
    let c = &model.config;
    put_u64(&mut buf, c.vocab as u64);
    put_u64(&mut buf, c.dim as u64);
    put_u64(&mut buf, c.state_dim as u64);
    put_u64(&mut buf, c.layers as u64);
    buf.push(variant_tag(c.variant));
    buf.push(polar_flags(c.polarization));
    buf.push(c.conv as u8);
    put_u64(&mut buf, c.seed);
    let tensors: Vec<(String, &[f64])> = model.tensors();
    put_named_tensors(&mut buf, &tensors);
    buf
}

pub fn decode_model(bytes: &[u8]) -> Result<TinyModel> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC_MODEL)?;
    let config = ModelConfig {
        vocab: r.u64()? as usize,
        dim: r.u64()? as usize,
        state_dim: r.u64()? as usize,
        layers: r.u64()? as usize,
        variant: variant_from_tag(r.u8()?)?,
        polarization: polar_from_flags(r.u8()?),
        conv: r.u8()? != 0,
        seed: r.u64()?,
    };
    let tensors = read_named_tensors(&mut r)?;
    let mut model = TinyModel::init(config)?;
    let mut views = model.tensors_mut();
    for (name, data) in &tensors {
        let slot = views
            .iter_mut()
            .find(|(n, _)| n == name)
            .ok_or_else(|| Error::Format(format!("unknown tensor '{name}' in checkpoint")))?;
        if slot.1.len() != data.len() {
            return Err(Error::Format(format!(
                "tensor '{name}' has {} entries, expected {}",
                data.len(),
                slot.1.len()
            )));
        }
        slot.1.copy_from_slice(data);
    }
    Ok(model)
}

// ------------------------------------------------------------------- dataset

pub fn encode_examples(examples: &[ARExample]) -> Vec<u8> {
    let mut buf = header(MAGIC_DATASET);
    put_u64(&mut buf, examples.len() as u64);
    for ex in examples {
        put_u64(&mut buf, ex.input.len() as u64);
        put_f64s(&mut buf, &ex.input.iter().map(|&t| t as f64).collect::<Vec<_>>());
        put_f64s(&mut buf, &ex.target.iter().map(|&t| t as f64).collect::<Vec<_>>());
        put_f64s(
            &mut buf,
            &ex.mask.iter().map(|&m| m as u8 as f64).collect::<Vec<_>>(),
        );
    }
    buf
}

pub fn decode_examples(bytes: &[u8]) -> Result<Vec<ARExample>> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC_DATASET)?;
    let count = r.u64()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u64()? as usize;
        let input: Vec<u32> = r.f64s(len)?.iter().map(|&v| v as u32).collect();
        let target: Vec<u32> = r.f64s(len)?.iter().map(|&v| v as u32).collect();
        let mask: Vec<bool> = r.f64s(len)?.iter().map(|&v| v != 0.0).collect();
        out.push(ARExample { input, target, mask });
    }
    Ok(out)
}

/// Dataset manifest: config echo, counts, checksum of the binary payload.
pub fn dataset_manifest(cfg: &ARConfig, train_len: usize, eval: &[(usize, usize)], checksum: u64) -> serde_json::Value {
    serde_json::json!({
        "config": cfg,
        "train_examples": train_len,
        "eval_splits": eval.iter().map(|(k, n)| serde_json::json!({"kv_pairs": k, "examples": n})).collect::<Vec<_>>(),
        "checksum_fnv1a64": format!("{checksum:016x}"),
    })
}

// ----------------------------------------------------------------------- csv

/// Write a CSV file: header row then data rows. Floats use Rust's shortest
/// round-trip formatting, so identical values print identically.
pub fn write_csv<P: AsRef<Path>>(path: P, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Coefficient inspection CSV (one input channel): t, n, a_re, a_im, b, c,
/// delta, h. Time indices are 1-based to align h with the recurrence.
pub fn write_coefficients_csv<P: AsRef<Path>>(
    path: P,
    coeffs: &StepCoefficients<f64>,
    traj: &StateTrajectory<f64>,
) -> Result<()> {
    let mut rows = Vec::new();
    for t in 0..coeffs.t_len() {
        for n in 0..coeffs.state_dim() {
            rows.push(vec![
                (t + 1).to_string(),
                n.to_string(),
                coeffs.a_at(t, n).to_string(),
                "0".to_string(),
                coeffs.b_at(t, n).to_string(),
                coeffs.c_at(t, n).to_string(),
                coeffs.delta()[t].to_string(),
                traj.state(t + 1)[n].to_string(),
            ]);
        }
    }
    write_csv(path, &["t", "n", "a_re", "a_im", "b", "c", "delta", "h"], &rows)
}

pub fn write_bytes<P: AsRef<Path>>(path: P, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

pub fn read_bytes<P: AsRef<Path>>(path: P) -> Result<Vec<u8>> {
    let mut f = std::fs::File::open(path)?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf)?;
    Ok(buf)
}

pub fn write_json<P: AsRef<Path>>(path: P, value: &serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Random-input helper shared by CLI commands.
pub fn random_input(t_len: usize, channels: usize, seed: u64) -> SequenceInput {
    let mut rng = crate::rng::Rng64::new(seed);
    SequenceInput::random(t_len, channels, &mut rng)
}
