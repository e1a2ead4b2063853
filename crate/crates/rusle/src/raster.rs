//! Grid data model and the cellwise combinators every other module builds on.
//!
//! A [`Raster`] is a row-major grid of `f64` cells with row 0 at the top
//! (north), matching the on-disk ASCII grid order. Missing cells ("nodata")
//! are stored as NaN internally; the numeric sentinel in [`GridSpec::nodata`]
//! is only used at the I/O boundary. Valid cells are always finite: any
//! operation whose result is NaN or infinite masks that cell to nodata
//! instead of letting the value escape.
//!
//! All operations are pure. Row partitions are processed in parallel with
//! rayon; because every cell is computed independently, the result is
//! bit-identical to sequential evaluation regardless of thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Geometry of a grid: dimensions, cell size, lower-left corner, and the
/// numeric nodata sentinel used when the grid is written to disk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub ncols: usize,
    pub nrows: usize,
    /// Cell edge length in map units; cells are square.
    pub cellsize: f64,
    /// X coordinate of the lower-left corner of the grid extent.
    pub x_ll: f64,
    /// Y coordinate of the lower-left corner of the grid extent.
    pub y_ll: f64,
    /// Sentinel written for missing cells on disk. Never compared against
    /// computed values; validity is tracked by masking.
    pub nodata: f64,
}

impl GridSpec {
    pub fn new(
        ncols: usize,
        nrows: usize,
        cellsize: f64,
        x_ll: f64,
        y_ll: f64,
        nodata: f64,
    ) -> Result<Self> {
        if ncols == 0 || nrows == 0 {
            return Err(Error::InvalidGrid(format!(
                "ncols and nrows must be >= 1, got {ncols}x{nrows}"
            )));
        }
        if cellsize <= 0.0 || !cellsize.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "cellsize must be a positive finite number, got {cellsize}"
            )));
        }
        if !x_ll.is_finite() || !y_ll.is_finite() || !nodata.is_finite() {
            return Err(Error::InvalidGrid(
                "corner coordinates and nodata sentinel must be finite".into(),
            ));
        }
        Ok(GridSpec {
            ncols,
            nrows,
            cellsize,
            x_ll,
            y_ll,
            nodata,
        })
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        self.ncols * self.nrows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when `other` describes the same grid geometry (dimensions, cell
    /// size, origin). The nodata sentinel is an I/O detail and is ignored.
    pub fn same_grid(&self, other: &GridSpec) -> bool {
        self.ncols == other.ncols
            && self.nrows == other.nrows
            && self.cellsize == other.cellsize
            && self.x_ll == other.x_ll
            && self.y_ll == other.y_ll
    }

    /// Map coordinates of the center of cell (row, col); row 0 is the
    /// northernmost row.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let x = self.x_ll + (col as f64 + 0.5) * self.cellsize;
        let y = self.y_top() - (row as f64 + 0.5) * self.cellsize;
        (x, y)
    }

    /// Y coordinate of the top (north) edge of the grid extent.
    pub fn y_top(&self) -> f64 {
        self.y_ll + self.nrows as f64 * self.cellsize
    }

    /// X coordinate of the right (east) edge of the grid extent.
    pub fn x_right(&self) -> f64 {
        self.x_ll + self.ncols as f64 * self.cellsize
    }
}

/// A georeferenced grid of values with explicit nodata.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    spec: GridSpec,
    values: Vec<f64>,
}

impl Raster {
    /// Build a raster from row-major values (row 0 = north). NaN marks
    /// nodata; every other value must be finite.
    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::InvalidGrid(format!(
                "value count {} does not match {}x{} grid",
                values.len(),
                spec.ncols,
                spec.nrows
            )));
        }
        if values.iter().any(|v| v.is_infinite()) {
            return Err(Error::InvalidGrid(
                "raster values must be finite or NaN (nodata)".into(),
            ));
        }
        Ok(Raster { spec, values })
    }

    /// Constant raster with every cell set to `value`.
    pub fn filled(spec: GridSpec, value: f64) -> Self {
        Raster {
            spec,
            values: vec![value; spec.len()],
        }
    }

    /// Raster with every cell nodata.
    pub fn all_nodata(spec: GridSpec) -> Self {
        Raster::filled(spec, f64::NAN)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Replace the nodata sentinel recorded for I/O without touching values.
    pub fn with_sentinel(mut self, nodata: f64) -> Self {
        self.spec.nodata = nodata;
        self
    }

    /// Row-major cell values; NaN is nodata.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn index(&self, row: usize, col: usize) -> usize {
        row * self.spec.ncols + col
    }

    /// Value at (row, col), or None when the cell is nodata.
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let v = self.values[self.index(row, col)];
        if v.is_nan() {
            None
        } else {
            Some(v)
        }
    }

    /// Raw cell value at (row, col); NaN when nodata.
    pub fn raw(&self, row: usize, col: usize) -> f64 {
        self.values[self.index(row, col)]
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        !self.values[self.index(row, col)].is_nan()
    }

    /// Number of non-nodata cells.
    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|v| !v.is_nan()).count()
    }

    /// Iterate over (row, col, value) for valid cells.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let ncols = self.spec.ncols;
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_nan())
            .map(move |(i, v)| (i / ncols, i % ncols, *v))
    }

    /// Minimum and maximum over valid cells, if any exist.
    pub fn value_range(&self) -> Option<(f64, f64)> {
        let mut range: Option<(f64, f64)> = None;
        for &v in &self.values {
            if v.is_nan() {
                continue;
            }
            range = Some(match range {
                None => (v, v),
                Some((lo, hi)) => (lo.min(v), hi.max(v)),
            });
        }
        range
    }

    /// Cellwise map. Nodata cells stay nodata; a non-finite result masks the
    /// cell to nodata so NaN/Inf never escape an operation boundary.
    pub fn map<F>(&self, f: F) -> Raster
    where
        F: Fn(f64) -> f64 + Sync,
    {
        let mut out = vec![f64::NAN; self.values.len()];
        out.par_chunks_mut(self.spec.ncols)
            .zip(self.values.par_chunks(self.spec.ncols))
            .for_each(|(dst, src)| {
                for (d, &v) in dst.iter_mut().zip(src) {
                    if !v.is_nan() {
                        let r = f(v);
                        *d = if r.is_finite() { r } else { f64::NAN };
                    }
                }
            });
        Raster {
            spec: self.spec,
            values: out,
        }
    }

    /// Copy of this raster with nodata wherever `mask` is nodata.
    pub fn masked_by(&self, mask: &Raster) -> Result<Raster> {
        zip_map(self, mask, |v, _| v)
    }
}

/// Resampling method for [`align`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    Nearest,
    Bilinear,
}

/// Resample `src` onto the `target` grid.
///
/// Cell centers of the target are sampled in the source. Points outside the
/// source extent become nodata. Bilinear interpolation uses the four
/// surrounding source cell centers and falls back to nearest-neighbor
/// whenever any of the four is nodata or lies outside the grid, so the
/// nodata sentinel never bleeds into interpolated values.
///
/// When source and target describe the same grid the input is returned
/// unchanged for both methods.
pub fn align(src: &Raster, target: &GridSpec, method: Resampling) -> Result<Raster> {
    let s = src.spec();
    let overlap_x = target.x_ll.max(s.x_ll) < target.x_right().min(s.x_right());
    let overlap_y = target.y_ll.max(s.y_ll) < target.y_top().min(s.y_top());
    if !(overlap_x && overlap_y) {
        return Err(Error::ExtentMismatch);
    }
    if s.same_grid(target) {
        let mut out = src.clone();
        out.spec = *target;
        return Ok(out);
    }

    let mut values = vec![f64::NAN; target.len()];
    values
        .par_chunks_mut(target.ncols)
        .enumerate()
        .for_each(|(row, dst)| {
            for (col, d) in dst.iter_mut().enumerate() {
                let x = target.x_ll + (col as f64 + 0.5) * target.cellsize;
                let y = target.y_top() - (row as f64 + 0.5) * target.cellsize;
                *d = sample(src, x, y, method);
            }
        });
    Ok(Raster {
        spec: *target,
        values,
    })
}

fn sample(src: &Raster, x: f64, y: f64, method: Resampling) -> f64 {
    let s = src.spec();
    if x < s.x_ll || x > s.x_right() || y < s.y_ll || y > s.y_top() {
        return f64::NAN;
    }
    match method {
        Resampling::Nearest => sample_nearest(src, x, y),
        Resampling::Bilinear => sample_bilinear(src, x, y),
    }
}

fn sample_nearest(src: &Raster, x: f64, y: f64) -> f64 {
    let s = src.spec();
    let fx = (x - s.x_ll) / s.cellsize - 0.5;
    let fy = (s.y_top() - y) / s.cellsize - 0.5;
    let col = ((fx + 0.5).floor() as isize).clamp(0, s.ncols as isize - 1) as usize;
    let row = ((fy + 0.5).floor() as isize).clamp(0, s.nrows as isize - 1) as usize;
    src.raw(row, col)
}

fn sample_bilinear(src: &Raster, x: f64, y: f64) -> f64 {
    let s = src.spec();
    let fx = (x - s.x_ll) / s.cellsize - 0.5;
    let fy = (s.y_top() - y) / s.cellsize - 0.5;
    let c0 = fx.floor();
    let r0 = fy.floor();
    let tx = fx - c0;
    let ty = fy - r0;
    let (c0, r0) = (c0 as isize, r0 as isize);
    // Outside the hull of cell centers there is no surrounding quad.
    if c0 < 0 || r0 < 0 || c0 + 1 > s.ncols as isize - 1 || r0 + 1 > s.nrows as isize - 1 {
        return sample_nearest(src, x, y);
    }
    let (r0, c0) = (r0 as usize, c0 as usize);
    let v00 = src.raw(r0, c0);
    let v01 = src.raw(r0, c0 + 1);
    let v10 = src.raw(r0 + 1, c0);
    let v11 = src.raw(r0 + 1, c0 + 1);
    if v00.is_nan() || v01.is_nan() || v10.is_nan() || v11.is_nan() {
        return sample_nearest(src, x, y);
    }
    let top = v00 * (1.0 - tx) + v01 * tx;
    let bottom = v10 * (1.0 - tx) + v11 * tx;
    top * (1.0 - ty) + bottom * ty
}

/// Cellwise combination of two aligned rasters. The output is nodata
/// wherever either input is nodata (mask union) and wherever `f` produces a
/// non-finite value.
pub fn zip_map<F>(a: &Raster, b: &Raster, f: F) -> Result<Raster>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    if !a.spec().same_grid(b.spec()) {
        return Err(Error::AlignmentRequired(format!(
            "{}x{} vs {}x{} grids",
            a.spec().ncols,
            a.spec().nrows,
            b.spec().ncols,
            b.spec().nrows
        )));
    }
    let ncols = a.spec().ncols;
    let mut out = vec![f64::NAN; a.values.len()];
    out.par_chunks_mut(ncols)
        .zip(a.values.par_chunks(ncols).zip(b.values.par_chunks(ncols)))
        .for_each(|(dst, (ra, rb))| {
            for ((d, &va), &vb) in dst.iter_mut().zip(ra).zip(rb) {
                if !va.is_nan() && !vb.is_nan() {
                    let r = f(va, vb);
                    *d = if r.is_finite() { r } else { f64::NAN };
                }
            }
        });
    Ok(Raster {
        spec: *a.spec(),
        values: out,
    })
}

/// Per-cell reduction over a stack of aligned rasters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reducer {
    Mean,
    Median,
    Min,
    Max,
    GeometricMean,
    Sum,
}

/// Reduce a non-empty stack of aligned rasters cell by cell.
///
/// Each cell is reduced over the stack members that are valid there; a cell
/// is nodata only when every member is nodata. `GeometricMean` requires all
/// valid inputs to be non-negative.
///
/// Mean and geometric mean are clamped into the range of the contributing
/// values after evaluation, so the orderings min <= geometric mean <= mean
/// <= max hold exactly despite floating-point rounding.
pub fn reduce_stack(rasters: &[Raster], reducer: Reducer) -> Result<Raster> {
    let first = rasters.first().ok_or(Error::EmptyStack)?;
    for r in rasters {
        if !r.spec().same_grid(first.spec()) {
            return Err(Error::AlignmentRequired(
                "all stack members must share one grid".into(),
            ));
        }
    }
    if reducer == Reducer::GeometricMean {
        for r in rasters {
            if r.values.iter().any(|v| !v.is_nan() && *v < 0.0) {
                return Err(Error::Domain(
                    "geometric mean requires non-negative inputs".into(),
                ));
            }
        }
    }

    let spec = *first.spec();
    let ncols = spec.ncols;
    let mut out = vec![f64::NAN; spec.len()];
    out.par_chunks_mut(ncols)
        .enumerate()
        .for_each(|(row, dst)| {
            let mut cell = Vec::with_capacity(rasters.len());
            for (col, d) in dst.iter_mut().enumerate() {
                cell.clear();
                for r in rasters {
                    let v = r.raw(row, col);
                    if !v.is_nan() {
                        cell.push(v);
                    }
                }
                if !cell.is_empty() {
                    *d = reduce_cell(&mut cell, reducer);
                }
            }
        });
    Ok(Raster { spec, values: out })
}

fn reduce_cell(values: &mut [f64], reducer: Reducer) -> f64 {
    let n = values.len() as f64;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    match reducer {
        Reducer::Min => lo,
        Reducer::Max => hi,
        Reducer::Sum => values.iter().sum(),
        Reducer::Mean => {
            let m = values.iter().sum::<f64>() / n;
            m.clamp(lo, hi)
        }
        Reducer::GeometricMean => {
            if values.contains(&0.0) {
                0.0
            } else {
                let g = (values.iter().map(|v| v.ln()).sum::<f64>() / n).exp();
                g.clamp(lo, hi)
            }
        }
        Reducer::Median => {
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mid = values.len() / 2;
            if values.len() % 2 == 1 {
                values[mid]
            } else {
                let m = 0.5 * (values[mid - 1] + values[mid]);
                m.clamp(lo, hi)
            }
        }
    }
}
