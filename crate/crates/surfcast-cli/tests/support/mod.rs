//! Shared helpers for driving the binary and checking its files with
//! independent readers.

#![allow(dead_code)]

use std::io::{Cursor, Read, Write};
use std::path::Path;
use std::process::Command;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_surfcast")
}

pub struct RunOut {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Runs the binary with a scrubbed thread-pool environment plus `envs`.
pub fn run_env(args: &[&str], envs: &[(&str, &str)]) -> RunOut {
    let mut cmd = Command::new(bin());
    cmd.args(args).env_remove("SURFCAST_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary spawns");
    RunOut {
        code: out.status.code().expect("binary exits normally"),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

pub fn run(args: &[&str]) -> RunOut {
    run_env(args, &[])
}

/// Runs the binary and demands success, echoing its streams on failure.
pub fn run_ok(args: &[&str]) -> RunOut {
    let out = run(args);
    assert_eq!(out.code, 0, "command {args:?} failed:\n{}\n{}", out.stdout, out.stderr);
    out
}

/// A decoded FTS2 file, parsed with byte arithmetic independent of the
/// binary's own reader.
pub struct Fts2 {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub mask: Option<Array2<bool>>,
    pub timestamps: Option<Vec<String>>,
    pub frames: Vec<Array2<f64>>,
}

pub fn read_fts2(path: &Path) -> Fts2 {
    let bytes = std::fs::read(path).expect("file exists");
    let mut r = Cursor::new(&bytes);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).unwrap();
    assert_eq!(&magic, b"FTS2", "magic");
    assert_eq!(r.read_u16::<LittleEndian>().unwrap(), 1, "version");
    let n1 = r.read_u32::<LittleEndian>().unwrap() as usize;
    let n2 = r.read_u32::<LittleEndian>().unwrap() as usize;
    let t = r.read_u32::<LittleEndian>().unwrap() as usize;
    let flags = r.read_u8().unwrap();
    assert_eq!(flags & !0b11, 0, "unknown flag bits");

    let mask = if flags & 0b01 != 0 {
        let mut raw = vec![0u8; n1 * n2];
        r.read_exact(&mut raw).unwrap();
        Some(Array2::from_shape_vec((n1, n2), raw.iter().map(|&b| b == 1).collect()).unwrap())
    } else {
        None
    };
    let mut axis = |n: usize| -> Vec<f64> {
        (0..n).map(|_| r.read_f64::<LittleEndian>().unwrap()).collect()
    };
    let u = axis(n1);
    let v = axis(n2);
    let timestamps = if flags & 0b10 != 0 {
        let mut stamps = Vec::with_capacity(t);
        for _ in 0..t {
            let len = r.read_u16::<LittleEndian>().unwrap() as usize;
            let mut raw = vec![0u8; len];
            r.read_exact(&mut raw).unwrap();
            stamps.push(String::from_utf8(raw).unwrap());
        }
        Some(stamps)
    } else {
        None
    };
    let mut frames = Vec::with_capacity(t);
    for _ in 0..t {
        let vals: Vec<f64> = (0..n1 * n2).map(|_| r.read_f64::<LittleEndian>().unwrap()).collect();
        frames.push(Array2::from_shape_vec((n1, n2), vals).unwrap());
    }
    assert_eq!(r.position() as usize, bytes.len(), "no trailing bytes");
    Fts2 { u, v, mask, timestamps, frames }
}

/// Writes an FTS2 file with the same byte arithmetic, for crafting inputs.
pub fn write_fts2(
    path: &Path,
    frames: &[Array2<f64>],
    mask: Option<&Array2<bool>>,
    u: &[f64],
    v: &[f64],
    timestamps: Option<&[String]>,
) {
    let (n1, n2) = frames[0].dim();
    assert_eq!((u.len(), v.len()), (n1, n2));
    let mut w: Vec<u8> = Vec::new();
    w.write_all(b"FTS2").unwrap();
    w.write_u16::<LittleEndian>(1).unwrap();
    w.write_u32::<LittleEndian>(n1 as u32).unwrap();
    w.write_u32::<LittleEndian>(n2 as u32).unwrap();
    w.write_u32::<LittleEndian>(frames.len() as u32).unwrap();
    let mut flags = 0u8;
    if mask.is_some() {
        flags |= 0b01;
    }
    if timestamps.is_some() {
        flags |= 0b10;
    }
    w.write_u8(flags).unwrap();
    if let Some(m) = mask {
        for &inside in m.iter() {
            w.write_u8(inside as u8).unwrap();
        }
    }
    for &x in u.iter().chain(v.iter()) {
        w.write_f64::<LittleEndian>(x).unwrap();
    }
    if let Some(stamps) = timestamps {
        for s in stamps {
            w.write_u16::<LittleEndian>(s.len() as u16).unwrap();
            w.write_all(s.as_bytes()).unwrap();
        }
    }
    for frame in frames {
        for &x in frame.iter() {
            w.write_f64::<LittleEndian>(x).unwrap();
        }
    }
    std::fs::write(path, w).unwrap();
}

/// Midpoint coordinates of the unit grid, matching the library's arithmetic.
pub fn unit_axis(n: usize) -> Vec<f64> {
    (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect()
}

/// log(n!) by direct summation; exact enough for binomial tails at n <= 10^4.
fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

fn ln_choose(n: usize, k: usize) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// P(X = k) for X ~ Binomial(n, p), via logs.
pub fn binom_pmf(n: usize, k: usize, p: f64) -> f64 {
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    (ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
}

/// The central 99% acceptance region for the success count of
/// Binomial(n, p): the largest lo with P(X < lo) <= 0.005 and the smallest
/// hi with P(X > hi) <= 0.005. A count inside [lo, hi] is consistent with p
/// at the 1% level.
pub fn binomial_99_region(n: usize, p: f64) -> (usize, usize) {
    let pmf: Vec<f64> = (0..=n).map(|k| binom_pmf(n, k, p)).collect();
    let mut lo = 0usize;
    let mut below = 0.0;
    while lo < n && below + pmf[lo] <= 0.005 {
        below += pmf[lo];
        lo += 1;
    }
    let mut hi = n;
    let mut above = 0.0;
    while hi > 0 && above + pmf[hi] <= 0.005 {
        above += pmf[hi];
        hi -= 1;
    }
    (lo, hi)
}

/// Parses a CSV written by the binary into header + rows of fields.
pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).expect("csv exists");
    let mut lines = text.lines();
    let header: Vec<String> =
        lines.next().expect("header line").split(',').map(str::to_string).collect();
    let rows = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    (header, rows)
}
