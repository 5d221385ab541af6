//! The FTS2 binary dataset container and the JSON kernel sidecar.
//!
//! FTS2 layout, all integers and floats little-endian:
//!
//! ```text
//! magic    4 bytes  "FTS2"
//! version  u16      currently 1
//! n1       u32      first-axis grid size
//! n2       u32      second-axis grid size
//! t        u32      number of frames
//! flags    u8       bit0: mask present; bit1: timestamps present
//! mask     n1*n2 bytes, 0/1 row-major            (iff flags bit0)
//! u        n1 f64   first-axis coordinates
//! v        n2 f64   second-axis coordinates
//! stamps   t * (u16 length + UTF-8 bytes)        (iff flags bit1)
//! frames   t * n1*n2 f64, row-major per frame
//! ```
//!
//! Readers reject unknown versions, unknown flag bits, mask bytes other than
//! 0/1, and any file whose length does not match the header exactly, so a
//! write → read → write cycle is byte-identical.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use surfcast::basis::{BasisKind, BasisSystem1D, TensorBasis};
use surfcast::far::TrueKernel;
use surfcast::grid::{FtsDataset, GridDomain, Mask, SurfaceField};
use surfcast::{Dataset, Domain, Field};

use crate::errors::{CliError, CliResult, PathContext};

const MAGIC: &[u8; 4] = b"FTS2";
const VERSION: u16 = 1;
const FLAG_MASK: u8 = 0b01;
const FLAG_TIMESTAMPS: u8 = 0b10;

/// Hard ceilings that keep a corrupt header from driving allocations.
const MAX_AXIS: u32 = 65_536;
const MAX_FRAMES: u32 = 16_777_216;
const MAX_CELLS_TOTAL: u64 = 1 << 31;

pub fn write_dataset(path: &Path, ds: &Dataset) -> CliResult<()> {
    let file = File::create(path).at_path(path)?;
    let mut w = BufWriter::new(file);
    let (n1, n2) = ds.domain().shape();
    let t = ds.t_len();

    w.write_all(MAGIC)?;
    w.write_u16::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(n1 as u32)?;
    w.write_u32::<LittleEndian>(n2 as u32)?;
    w.write_u32::<LittleEndian>(t as u32)?;
    let mut flags = 0u8;
    if ds.mask().is_some() {
        flags |= FLAG_MASK;
    }
    if ds.timestamps().is_some() {
        flags |= FLAG_TIMESTAMPS;
    }
    w.write_u8(flags)?;

    if let Some(m) = ds.mask() {
        for &inside in m.values().iter() {
            w.write_u8(inside as u8)?;
        }
    }
    for &x in ds.domain().u() {
        w.write_f64::<LittleEndian>(x)?;
    }
    for &x in ds.domain().v() {
        w.write_f64::<LittleEndian>(x)?;
    }
    if let Some(stamps) = ds.timestamps() {
        for s in stamps {
            let bytes = s.as_bytes();
            if bytes.len() > u16::MAX as usize {
                return Err(CliError::data(format!(
                    "format::write_dataset: timestamp of {} bytes exceeds the 65535-byte limit",
                    bytes.len()
                )));
            }
            w.write_u16::<LittleEndian>(bytes.len() as u16)?;
            w.write_all(bytes)?;
        }
    }
    for frame in ds.frames() {
        for &v in frame.values().iter() {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    w.flush().at_path(path)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> CliResult<Dataset> {
    let file = File::open(path).at_path(path)?;
    let mut r = BufReader::new(file);
    read_dataset_from(&mut r).at_path(path)
}

fn read_dataset_from(r: &mut impl Read) -> CliResult<Dataset> {
    const OP: &str = "format::read_dataset";
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| CliError::data(format!("{OP}: file too short for an FTS2 header")))?;
    if &magic != MAGIC {
        return Err(CliError::data(format!("{OP}: bad magic (not an FTS2 file)")));
    }
    let version = r.read_u16::<LittleEndian>()?;
    if version != VERSION {
        return Err(CliError::data(format!(
            "{OP}: unsupported format version {version} (expected {VERSION})"
        )));
    }
    let n1 = r.read_u32::<LittleEndian>()?;
    let n2 = r.read_u32::<LittleEndian>()?;
    let t = r.read_u32::<LittleEndian>()?;
    let flags = r.read_u8()?;
    if n1 == 0 || n2 == 0 || t == 0 {
        return Err(CliError::data(format!("{OP}: empty dimensions {n1}x{n2}x{t}")));
    }
    if n1 > MAX_AXIS || n2 > MAX_AXIS || t > MAX_FRAMES {
        return Err(CliError::data(format!(
            "{OP}: header dimensions {n1}x{n2}x{t} exceed the format limits"
        )));
    }
    let cells = n1 as u64 * n2 as u64;
    if cells * t as u64 > MAX_CELLS_TOTAL {
        return Err(CliError::data(format!(
            "{OP}: header declares {} cells, over the {MAX_CELLS_TOTAL} limit",
            cells * t as u64
        )));
    }
    if flags & !(FLAG_MASK | FLAG_TIMESTAMPS) != 0 {
        return Err(CliError::data(format!("{OP}: unknown flag bits 0x{flags:02x}")));
    }
    let (n1, n2, t) = (n1 as usize, n2 as usize, t as usize);

    let mask = if flags & FLAG_MASK != 0 {
        let mut bytes = vec![0u8; n1 * n2];
        r.read_exact(&mut bytes)
            .map_err(|_| CliError::data(format!("{OP}: truncated mask block")))?;
        let mut inside = Array2::from_elem((n1, n2), false);
        for (slot, &b) in inside.iter_mut().zip(bytes.iter()) {
            *slot = match b {
                0 => false,
                1 => true,
                other => {
                    return Err(CliError::data(format!(
                        "{OP}: mask byte {other} is neither 0 nor 1"
                    )))
                }
            };
        }
        Some(Mask::new(inside)?)
    } else {
        None
    };

    let mut read_axis = |n: usize, name: &str| -> CliResult<Vec<f64>> {
        let mut axis = Vec::with_capacity(n);
        for _ in 0..n {
            axis.push(
                r.read_f64::<LittleEndian>()
                    .map_err(|_| CliError::data(format!("{OP}: truncated {name} coordinates")))?,
            );
        }
        Ok(axis)
    };
    let u = read_axis(n1, "first-axis")?;
    let v = read_axis(n2, "second-axis")?;
    let domain: Domain = GridDomain::with_coords(u, v)?;

    let timestamps = if flags & FLAG_TIMESTAMPS != 0 {
        let mut stamps = Vec::with_capacity(t);
        for k in 0..t {
            let len = r
                .read_u16::<LittleEndian>()
                .map_err(|_| CliError::data(format!("{OP}: truncated timestamp {k}")))?;
            let mut bytes = vec![0u8; len as usize];
            r.read_exact(&mut bytes)
                .map_err(|_| CliError::data(format!("{OP}: truncated timestamp {k}")))?;
            let s = String::from_utf8(bytes).map_err(|_| {
                CliError::data(format!("{OP}: timestamp {k} is not valid UTF-8"))
            })?;
            stamps.push(s);
        }
        Some(stamps)
    } else {
        None
    };

    let mut frames: Vec<Field> = Vec::with_capacity(t);
    for k in 0..t {
        let mut values = Vec::with_capacity(n1 * n2);
        for _ in 0..n1 * n2 {
            values.push(
                r.read_f64::<LittleEndian>()
                    .map_err(|_| CliError::data(format!("{OP}: truncated frame {k}")))?,
            );
        }
        let arr = Array2::from_shape_vec((n1, n2), values)
            .expect("length checked by construction");
        frames.push(SurfaceField::new(arr));
    }

    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(CliError::data(format!(
            "{OP}: trailing bytes after the declared payload"
        )));
    }

    Ok(FtsDataset::new(domain, frames, mask, timestamps)?)
}

/// Writes a single surface as a one-frame dataset reusing the source
/// dataset's domain and mask.
pub fn write_grid(path: &Path, field: &Field, like: &Dataset) -> CliResult<()> {
    let ds = FtsDataset::new(
        like.domain().clone(),
        vec![field.clone()],
        like.mask().cloned(),
        None,
    )?;
    write_dataset(path, &ds)
}

/// Serialized form of a known autoregression kernel.
///
/// The Gram matrix is stored rather than recomputed so the loaded operator is
/// bit-identical to the one that generated the data, whatever grid the
/// consumer happens to hold.
#[derive(Serialize, Deserialize)]
struct KernelFile {
    basis_u_kind: String,
    basis_u_n: usize,
    basis_v_kind: String,
    basis_v_n: usize,
    /// Coefficient matrix, K×K with K = basis_u_n · basis_v_n, row-major.
    psi: Vec<Vec<f64>>,
    /// Basis Gram matrix on the generating grid, K×K row-major.
    gram: Vec<Vec<f64>>,
}

fn kind_name(kind: BasisKind) -> &'static str {
    match kind {
        BasisKind::BsplineCubic => "bspline-cubic",
        BasisKind::Fourier => "fourier",
    }
}

fn parse_kind(name: &str) -> CliResult<BasisKind> {
    match name {
        "bspline-cubic" => Ok(BasisKind::BsplineCubic),
        "fourier" => Ok(BasisKind::Fourier),
        other => Err(CliError::data(format!(
            "format::read_kernel: unknown basis kind {other:?} (expected bspline-cubic or fourier)"
        ))),
    }
}

fn matrix_rows(m: &ndarray::Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn rows_matrix(rows: &[Vec<f64>], what: &str) -> CliResult<Array2<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::data(format!("format::read_kernel: {what} is not square")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Array2::from_shape_vec((n, n), flat).expect("length checked above"))
}

pub fn write_kernel(path: &Path, kernel: &TrueKernel<f64>) -> CliResult<()> {
    let dto = KernelFile {
        basis_u_kind: kind_name(kernel.basis().u().kind()).to_string(),
        basis_u_n: kernel.basis().u().n_basis(),
        basis_v_kind: kind_name(kernel.basis().v().kind()).to_string(),
        basis_v_n: kernel.basis().v().n_basis(),
        psi: matrix_rows(kernel.psi()),
        gram: matrix_rows(kernel.gram()),
    };
    let file = File::create(path).at_path(path)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &dto).at_path(path)?;
    w.write_all(b"\n")?;
    w.flush().at_path(path)?;
    Ok(())
}

pub fn read_kernel(path: &Path) -> CliResult<TrueKernel<f64>> {
    let file = File::open(path).at_path(path)?;
    let dto: KernelFile = serde_json::from_reader(BufReader::new(file)).at_path(path)?;
    let basis = TensorBasis::new(
        BasisSystem1D::new(parse_kind(&dto.basis_u_kind)?, dto.basis_u_n)?,
        BasisSystem1D::new(parse_kind(&dto.basis_v_kind)?, dto.basis_v_n)?,
    );
    let psi = rows_matrix(&dto.psi, "psi")?;
    let gram = rows_matrix(&dto.gram, "gram")?;
    Ok(TrueKernel::new(basis, psi, gram)?)
}
