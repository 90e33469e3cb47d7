//! Bit-exact output formats: diagnostics CSV, binary snapshots and key-value summaries.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use jflow_core::flow::DiagnosticsRow;
use jflow_core::{Lattice, ScalarField};

use crate::CliError;

pub const CSV_HEADER: &str =
    "step,t,dt,c,J,E,I,min_sigma,max_sigma,residual,min_eig_g,max_F,max_eig_T,dissipation";

pub const MAGIC: &[u8; 4] = b"JFLW";
pub const SNAPSHOT_VERSION: u32 = 1;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(io_err(path))
}

pub fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn row_to_csv(r: &DiagnosticsRow) -> String {
    let fields = [
        r.t,
        r.dt,
        r.c,
        r.j,
        r.e,
        r.i,
        r.min_sigma,
        r.max_sigma,
        r.residual,
        r.min_eig_g,
        r.max_f,
        r.max_eig_t,
        r.dissipation,
    ];
    let mut s = r.step.to_string();
    for v in fields {
        s.push(',');
        s.push_str(&fmt_f64(v));
    }
    s
}

pub fn diagnostics_csv(rows: &[DiagnosticsRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&row_to_csv(r));
        s.push('\n');
    }
    s
}

pub fn parse_diagnostics(text: &str) -> Result<Vec<DiagnosticsRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        _ => return Err("diagnostics header does not match".into()),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 14 {
                return Err(format!("row {}: expected 14 fields, found {}", i + 1, f.len()));
            }
            let step = f[0].parse::<usize>().map_err(|_| format!("row {}: bad step", i + 1))?;
            let mut v = [0.0; 13];
            for (k, x) in f[1..].iter().enumerate() {
                v[k] = x.parse().map_err(|_| format!("row {}: bad number `{x}`", i + 1))?;
            }
            Ok(DiagnosticsRow {
                step,
                t: v[0],
                dt: v[1],
                c: v[2],
                j: v[3],
                e: v[4],
                i: v[5],
                min_sigma: v[6],
                max_sigma: v[7],
                residual: v[8],
                min_eig_g: v[9],
                max_f: v[10],
                max_eig_t: v[11],
                dissipation: v[12],
            })
        })
        .collect()
}

pub fn encode_snapshot(phi: &ScalarField, t: f64) -> Vec<u8> {
    let lat = phi.lattice();
    let mut out = Vec::with_capacity(32 + 8 * lat.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(lat.n() as u32).to_le_bytes());
    out.extend_from_slice(&(lat.points() as u32).to_le_bytes());
    out.extend_from_slice(&lat.period().to_le_bytes());
    out.extend_from_slice(&t.to_le_bytes());
    for v in phi.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub phi: ScalarField,
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<Snapshot, String> {
    let take = |at: usize, len: usize| bytes.get(at..at + len).ok_or("snapshot is truncated");
    if take(0, 4)? != MAGIC {
        return Err("not a snapshot (bad magic)".into());
    }
    let u32_at = |at| -> Result<u32, String> { Ok(u32::from_le_bytes(take(at, 4)?.try_into().unwrap())) };
    let f64_at = |at| -> Result<f64, String> { Ok(f64::from_le_bytes(take(at, 8)?.try_into().unwrap())) };
    let version = u32_at(4)?;
    if version != SNAPSHOT_VERSION {
        return Err(format!("unsupported snapshot version {version}"));
    }
    let lat = Lattice::new(u32_at(8)? as usize, u32_at(12)? as usize, f64_at(16)?).map_err(|e| e.to_string())?;
    let t = f64_at(24)?;
    if bytes.len() != 32 + 8 * lat.len() {
        return Err(format!("snapshot has {} bytes, expected {}", bytes.len(), 32 + 8 * lat.len()));
    }
    let values = bytes[32..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let phi = ScalarField::new(lat, values).map_err(|e| e.to_string())?;
    Ok(Snapshot { t, phi })
}

pub fn snapshot_path(dir: &Path, step: usize) -> PathBuf {
    dir.join(format!("snapshot_{step:06}.bin"))
}

/// Ordered `key = value` lines.
#[derive(Clone, Debug, Default)]
pub struct Summary {
    entries: Vec<(String, String)>,
}

impl Summary {
    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn num(&mut self, key: &str, value: f64) -> &mut Self {
        self.set(key, fmt_f64(value))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Self { entries }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_row(step: usize, x: f64) -> DiagnosticsRow {
        DiagnosticsRow {
            step,
            t: x,
            dt: x / 3.0,
            c: 0.5,
            j: -x * 1e-17,
            e: 1.0 / 7.0,
            i: 0.0,
            min_sigma: 0.1,
            max_sigma: 0.9,
            residual: 1e-300,
            min_eig_g: 2.0,
            max_f: f64::MIN_POSITIVE,
            max_eig_t: -0.3,
            dissipation: 12345.678,
        }
    }

    #[test]
    fn header_and_row_count() {
        let csv = diagnostics_csv(&[sample_row(0, 0.0)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 2);
        assert_eq!(parse_diagnostics(&csv).unwrap(), vec![sample_row(0, 0.0)]);
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(parse_diagnostics("step,t\n").is_err());
    }

    #[test]
    fn snapshot_layout() {
        let lat = Lattice::new(1, 8, 2.0).unwrap();
        let phi = ScalarField::from_fn(lat, |x| x[0] - x[1]);
        let bytes = encode_snapshot(&phi, 0.25);
        assert_eq!(&bytes[0..4], b"JFLW");
        assert_eq!(bytes[4..8], 1u32.to_le_bytes());
        assert_eq!(bytes[8..12], 1u32.to_le_bytes());
        assert_eq!(bytes[12..16], 8u32.to_le_bytes());
        assert_eq!(bytes[16..24], 2.0f64.to_le_bytes());
        assert_eq!(bytes[24..32], 0.25f64.to_le_bytes());
        assert_eq!(bytes.len(), 32 + 8 * 64);
        assert_eq!(bytes[40..48], phi.values()[1].to_le_bytes());
        assert!(decode_snapshot(&bytes[..100]).is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(x in proptest::num::f64::NORMAL, step in 0usize..1_000_000) {
            let r = sample_row(step, x);
            let back = parse_diagnostics(&diagnostics_csv(&[r])).unwrap();
            prop_assert_eq!(back[0].t.to_bits(), r.t.to_bits());
            prop_assert_eq!(back[0].dt.to_bits(), r.dt.to_bits());
            prop_assert_eq!(back[0].j.to_bits(), r.j.to_bits());
        }

        #[test]
        fn snapshot_round_trip_is_bitwise(vals in proptest::collection::vec(proptest::num::f64::ANY, 64), t in -1e3f64..1e3) {
            let lat = Lattice::unit(1, 8).unwrap();
            let vals: Vec<f64> = vals.into_iter().map(|v| if v.is_finite() { v } else { 0.5 }).collect();
            let phi = ScalarField::new(lat, vals).unwrap();
            let back = decode_snapshot(&encode_snapshot(&phi, t)).unwrap();
            prop_assert_eq!(back.t.to_bits(), t.to_bits());
            for (a, b) in back.phi.values().iter().zip(phi.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
