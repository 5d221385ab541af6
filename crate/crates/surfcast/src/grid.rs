//! Gridded surface data: domains, masks, fields, and datasets.
//!
//! A surface is observed on a fixed N1 x N2 rectangular grid. Integrals are
//! Riemann sums with constant cell weights 1/N1 and 1/N2 per axis, so the
//! quadrature weight of a cell is always 1/(N1·N2) regardless of the stored
//! coordinates; coordinates are metadata for plotting and export. The default
//! unit-domain coordinates are cell midpoints (i + 0.5)/N, which makes the
//! Riemann sums of smooth periodic integrands (notably products of the
//! trigonometric basis functions) exact to roundoff.
//!
//! Fields are vectorized row-major: grid point (i, j) maps to flat index
//! i·N2 + j. Every matrix built from vectorized frames uses that order.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Rectangular evaluation grid with per-axis coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDomain<S> {
    u: Vec<S>,
    v: Vec<S>,
}

impl<S: Scalar> GridDomain<S> {
    /// Unit-square grid with midpoint coordinates (i + 0.5)/N per axis.
    pub fn unit(n1: usize, n2: usize) -> Result<Self> {
        const OP: &str = "grid::unit";
        if n1 == 0 || n2 == 0 {
            return Err(Error::argument(OP, format!("grid {n1}x{n2} is empty")));
        }
        let coord = |n: usize, i: usize| (S::from_index(i) + S::cast(0.5)) / S::from_index(n);
        let u = (0..n1).map(|i| coord(n1, i)).collect();
        let v = (0..n2).map(|j| coord(n2, j)).collect();
        Ok(GridDomain { u, v })
    }

    /// Grid with explicit coordinates; each axis must be finite and strictly
    /// increasing. Quadrature weights stay 1/N per axis regardless.
    pub fn with_coords(u: Vec<S>, v: Vec<S>) -> Result<Self> {
        const OP: &str = "grid::with_coords";
        for (name, axis) in [("u", &u), ("v", &v)] {
            if axis.is_empty() {
                return Err(Error::argument(OP, format!("{name} axis is empty")));
            }
            if axis.iter().any(|x| !x.is_finite()) {
                return Err(Error::argument(OP, format!("{name} axis has non-finite entries")));
            }
            if axis.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::argument(
                    OP,
                    format!("{name} axis is not strictly increasing"),
                ));
            }
        }
        Ok(GridDomain { u, v })
    }

    pub fn n1(&self) -> usize {
        self.u.len()
    }

    pub fn n2(&self) -> usize {
        self.v.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.u.len(), self.v.len())
    }

    /// First-axis coordinates.
    pub fn u(&self) -> &[S] {
        &self.u
    }

    /// Second-axis coordinates.
    pub fn v(&self) -> &[S] {
        &self.v
    }

    /// Cell weight along the first axis: 1/N1.
    pub fn omega1(&self) -> S {
        S::one() / S::from_index(self.n1())
    }

    /// Cell weight along the second axis: 1/N2.
    pub fn omega2(&self) -> S {
        S::one() / S::from_index(self.n2())
    }

    /// Weight of one grid cell in the surface quadrature: 1/(N1·N2).
    pub fn quad_scale(&self) -> S {
        S::one() / S::from_index(self.n1() * self.n2())
    }
}

/// Boolean membership map for a (possibly non-rectangular) region of interest.
///
/// At least one cell must be inside. Cells outside the mask are excluded from
/// inner products, moduli, scores, and coverage counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    inside: Array2<bool>,
}

impl Mask {
    pub fn new(inside: Array2<bool>) -> Result<Self> {
        if !inside.iter().any(|&b| b) {
            return Err(Error::argument("grid::mask", "mask has no interior cells"));
        }
        Ok(Mask { inside })
    }

    /// All-true mask of the given shape.
    pub fn full(n1: usize, n2: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::argument("grid::mask", "mask shape is empty"));
        }
        Ok(Mask { inside: Array2::from_elem((n1, n2), true) })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.inside.dim()
    }

    #[inline]
    pub fn is_inside(&self, i: usize, j: usize) -> bool {
        self.inside[[i, j]]
    }

    pub fn values(&self) -> &Array2<bool> {
        &self.inside
    }

    /// Number of interior cells.
    pub fn count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    /// Quadrature area of the interior: count/(N1·N2).
    pub fn area<S: Scalar>(&self) -> S {
        let (n1, n2) = self.shape();
        S::from_index(self.count()) / S::from_index(n1 * n2)
    }
}

/// One surface observation on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceField<S> {
    values: Array2<S>,
}

impl<S: Scalar> SurfaceField<S> {
    pub fn new(values: Array2<S>) -> Self {
        SurfaceField { values }
    }

    pub fn zeros(n1: usize, n2: usize) -> Self {
        SurfaceField { values: Array2::zeros((n1, n2)) }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn values(&self) -> &Array2<S> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<S> {
        &mut self.values
    }

    pub fn into_values(self) -> Array2<S> {
        self.values
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    /// Sets cells outside the mask to zero; no-op for `None`.
    pub fn zero_outside(&mut self, mask: Option<&Mask>) {
        if let Some(m) = mask {
            ndarray::Zip::from(&mut self.values).and(m.values()).for_each(|x, &inside| {
                if !inside {
                    *x = S::zero();
                }
            });
        }
    }
}

/// A time-ordered collection of surfaces on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FtsDataset<S> {
    domain: GridDomain<S>,
    frames: Vec<SurfaceField<S>>,
    mask: Option<Mask>,
    timestamps: Option<Vec<String>>,
}

impl<S: Scalar> FtsDataset<S> {
    /// Validates shapes, finiteness, and optional metadata lengths.
    pub fn new(
        domain: GridDomain<S>,
        frames: Vec<SurfaceField<S>>,
        mask: Option<Mask>,
        timestamps: Option<Vec<String>>,
    ) -> Result<Self> {
        const OP: &str = "grid::dataset";
        if frames.is_empty() {
            return Err(Error::argument(OP, "dataset has no frames"));
        }
        let shape = domain.shape();
        for (t, f) in frames.iter().enumerate() {
            if f.shape() != shape {
                return Err(Error::dimension(
                    OP,
                    format!("frame {t} has shape {:?}, domain is {:?}", f.shape(), shape),
                ));
            }
            if !f.is_finite() {
                return Err(Error::argument(OP, format!("frame {t} has non-finite entries")));
            }
        }
        if let Some(m) = &mask {
            if m.shape() != shape {
                return Err(Error::dimension(
                    OP,
                    format!("mask shape {:?} does not match domain {:?}", m.shape(), shape),
                ));
            }
        }
        if let Some(ts) = &timestamps {
            if ts.len() != frames.len() {
                return Err(Error::dimension(
                    OP,
                    format!("{} timestamps for {} frames", ts.len(), frames.len()),
                ));
            }
        }
        Ok(FtsDataset { domain, frames, mask, timestamps })
    }

    pub fn t_len(&self) -> usize {
        self.frames.len()
    }

    pub fn domain(&self) -> &GridDomain<S> {
        &self.domain
    }

    pub fn frame(&self, t: usize) -> &SurfaceField<S> {
        &self.frames[t]
    }

    pub fn frames(&self) -> &[SurfaceField<S>] {
        &self.frames
    }

    pub fn mask(&self) -> Option<&Mask> {
        self.mask.as_ref()
    }

    pub fn timestamps(&self) -> Option<&[String]> {
        self.timestamps.as_deref()
    }
}

fn check_field_shapes<S: Scalar>(
    op: &'static str,
    f: &SurfaceField<S>,
    g: &SurfaceField<S>,
) -> Result<()> {
    if f.shape() != g.shape() {
        return Err(Error::dimension(
            op,
            format!("field shapes {:?} and {:?} differ", f.shape(), g.shape()),
        ));
    }
    Ok(())
}

/// Quadrature inner product of two fields, optionally restricted to a mask.
///
/// Computes sum over (masked) cells of f·g, scaled by the cell weight
/// 1/(N1·N2).
pub fn inner_product<S: Scalar>(
    f: &SurfaceField<S>,
    g: &SurfaceField<S>,
    domain: &GridDomain<S>,
    mask: Option<&Mask>,
) -> Result<S> {
    const OP: &str = "grid::inner_product";
    check_field_shapes(OP, f, g)?;
    if f.shape() != domain.shape() {
        return Err(Error::dimension(
            OP,
            format!("fields {:?} do not match domain {:?}", f.shape(), domain.shape()),
        ));
    }
    if let Some(m) = mask {
        if m.shape() != domain.shape() {
            return Err(Error::dimension(OP, "mask shape does not match domain"));
        }
    }
    let mut sum = S::zero();
    match mask {
        None => {
            for (a, b) in f.values().iter().zip(g.values().iter()) {
                sum += *a * *b;
            }
        }
        Some(m) => {
            for ((a, b), inside) in
                f.values().iter().zip(g.values().iter()).zip(m.values().iter())
            {
                if *inside {
                    sum += *a * *b;
                }
            }
        }
    }
    Ok(sum * domain.quad_scale())
}

fn check_indices(op: &'static str, indices: &[usize], t_len: usize) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::argument(op, "index set is empty"));
    }
    if let Some(&bad) = indices.iter().find(|&&t| t >= t_len) {
        return Err(Error::argument(op, format!("index {bad} out of range (T = {t_len})")));
    }
    Ok(())
}

/// Pointwise average of the selected frames.
pub fn pointwise_mean<S: Scalar>(ds: &FtsDataset<S>, indices: &[usize]) -> Result<SurfaceField<S>> {
    const OP: &str = "grid::pointwise_mean";
    check_indices(OP, indices, ds.t_len())?;
    let (n1, n2) = ds.domain().shape();
    let mut acc = Array2::<S>::zeros((n1, n2));
    for &t in indices {
        acc += ds.frame(t).values();
    }
    let inv = S::one() / S::from_index(indices.len());
    acc.mapv_inplace(|x| x * inv);
    Ok(SurfaceField::new(acc))
}

/// Pointwise sample standard deviation (divisor n-1) of the selected frames.
///
/// Cells outside the dataset mask are set to zero. Requires at least two
/// indices.
pub fn pointwise_std<S: Scalar>(ds: &FtsDataset<S>, indices: &[usize]) -> Result<SurfaceField<S>> {
    const OP: &str = "grid::pointwise_std";
    check_indices(OP, indices, ds.t_len())?;
    if indices.len() < 2 {
        return Err(Error::argument(OP, "need at least two frames for a standard deviation"));
    }
    let mean = pointwise_mean(ds, indices)?;
    let (n1, n2) = ds.domain().shape();
    let mut acc = Array2::<S>::zeros((n1, n2));
    for &t in indices {
        ndarray::Zip::from(&mut acc)
            .and(ds.frame(t).values())
            .and(mean.values())
            .for_each(|a, &x, &mu| {
                let d = x - mu;
                *a += d * d;
            });
    }
    let inv = S::one() / S::from_index(indices.len() - 1);
    acc.mapv_inplace(|x| (x * inv).sqrt());
    let mut out = SurfaceField::new(acc);
    out.zero_outside(ds.mask());
    Ok(out)
}

/// Mean squared difference between two fields over the full grid.
pub fn mse<S: Scalar>(f: &SurfaceField<S>, g: &SurfaceField<S>) -> Result<S> {
    const OP: &str = "grid::mse";
    check_field_shapes(OP, f, g)?;
    let (n1, n2) = f.shape();
    let mut sum = S::zero();
    for (a, b) in f.values().iter().zip(g.values().iter()) {
        let d = *a - *b;
        sum += d * d;
    }
    Ok(sum / S::from_index(n1 * n2))
}
