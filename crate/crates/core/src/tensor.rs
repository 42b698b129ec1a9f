//! Dense 2D/4D arrays and the convolution-like kernels used by the forward
//! and backward passes.
//!
//! All kernels anchor output pixel `(m, n)` at kernel element `(0, 0)`, so
//! `out(m, n) = Σ k(r, t) · in(m + r, n + t)`. Sums run row-major over the
//! kernel indices for every output pixel, which makes every result
//! bit-reproducible.

use serde::{Deserialize, Serialize};

use crate::error::{OnnError, Result};

/// Real-valued 2D map stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Map2D {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Map2D {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Map2D {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(OnnError::dims(format!(
                "{} values cannot fill a {rows}x{cols} map",
                data.len()
            )));
        }
        Ok(Map2D { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Map2D { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    /// Reads `(r, c)` with zero outside the map.
    #[inline]
    pub fn get_or_zero(&self, r: isize, c: isize) -> f64 {
        if r < 0 || c < 0 || r as usize >= self.rows || c as usize >= self.cols {
            0.0
        } else {
            self.data[r as usize * self.cols + c as usize]
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Map2D {
        Map2D {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Map2D, f: impl Fn(f64, f64) -> f64) -> Result<Map2D> {
        self.ensure_same_dims(other, "zip_map")?;
        Ok(Map2D {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &Map2D) -> Result<()> {
        self.ensure_same_dims(other, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Map2D) -> Result<f64> {
        self.ensure_same_dims(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn rot180(&self) -> Map2D {
        let mut data = self.data.clone();
        data.reverse();
        Map2D {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Top-left `rows x cols` sub-map.
    pub fn crop(&self, rows: usize, cols: usize) -> Result<Map2D> {
        if rows > self.rows || cols > self.cols {
            return Err(OnnError::dims(format!(
                "cannot crop {}x{} to {rows}x{cols}",
                self.rows, self.cols
            )));
        }
        Ok(Map2D::from_fn(rows, cols, |r, c| self.get(r, c)))
    }

    pub(crate) fn ensure_same_dims(&self, other: &Map2D, what: &str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(OnnError::dims(format!(
                "{what}: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }
}

/// 4D array indexed `(m, n, r, t)`: a kernel-sized patch at every pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct Cache4D {
    rows: usize,
    cols: usize,
    krows: usize,
    kcols: usize,
    data: Vec<f64>,
}

impl Cache4D {
    pub fn zeros(rows: usize, cols: usize, krows: usize, kcols: usize) -> Self {
        Cache4D {
            rows,
            cols,
            krows,
            kcols,
            data: vec![0.0; rows * cols * krows * kcols],
        }
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        krows: usize,
        kcols: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(rows * cols * krows * kcols);
        for m in 0..rows {
            for n in 0..cols {
                for r in 0..krows {
                    for t in 0..kcols {
                        data.push(f(m, n, r, t));
                    }
                }
            }
        }
        Cache4D {
            rows,
            cols,
            krows,
            kcols,
            data,
        }
    }

    /// The same kernel at every pixel.
    pub fn constant(rows: usize, cols: usize, kernel: &Map2D) -> Self {
        Self::from_fn(rows, cols, kernel.rows(), kernel.cols(), |_, _, r, t| {
            kernel.get(r, t)
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn krows(&self) -> usize {
        self.krows
    }

    #[inline]
    pub fn kcols(&self) -> usize {
        self.kcols
    }

    #[inline]
    pub fn index(&self, m: usize, n: usize, r: usize, t: usize) -> usize {
        ((m * self.cols + n) * self.krows + r) * self.kcols + t
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize, r: usize, t: usize) -> f64 {
        self.data[self.index(m, n, r, t)]
    }

    #[inline]
    pub fn set(&mut self, m: usize, n: usize, r: usize, t: usize, value: f64) {
        let i = self.index(m, n, r, t);
        self.data[i] = value;
    }

    /// Kernel-sized patch at pixel `(m, n)`, row-major over `(r, t)`.
    pub fn patch(&self, m: usize, n: usize) -> &[f64] {
        let start = self.index(m, n, 0, 0);
        &self.data[start..start + self.krows * self.kcols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Elementwise product of two caches with equal shape.
    pub fn hadamard(&self, other: &Cache4D) -> Result<Cache4D> {
        if self.shape() != other.shape() {
            return Err(OnnError::dims(format!(
                "cache shapes {:?} and {:?} differ",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Cache4D {
            rows: self.rows,
            cols: self.cols,
            krows: self.krows,
            kcols: self.kcols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.rows, self.cols, self.krows, self.kcols)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum PaddingMode {
    /// Valid correlation: output shrinks by `K - 1` per axis.
    #[default]
    NoZeroPad,
    /// Output keeps the input dims; reads past the bottom/right edge are 0.
    SamePad,
}

impl PaddingMode {
    /// Output dims for an `input` map and a `kernel` of the given dims.
    pub fn output_dims(self, input: (usize, usize), kernel: (usize, usize)) -> Result<(usize, usize)> {
        if kernel.0 == 0 || kernel.1 == 0 {
            return Err(OnnError::dims("kernel has a zero dimension"));
        }
        if kernel.0 > input.0 || kernel.1 > input.1 {
            return Err(OnnError::dims(format!(
                "kernel {}x{} larger than input {}x{}",
                kernel.0, kernel.1, input.0, input.1
            )));
        }
        Ok(match self {
            PaddingMode::NoZeroPad => (input.0 - kernel.0 + 1, input.1 - kernel.1 + 1),
            PaddingMode::SamePad => input,
        })
    }
}

/// Correlation of `input` with `kernel`, anchored at the kernel's top-left element.
pub fn conv2d(input: &Map2D, kernel: &Map2D, mode: PaddingMode) -> Result<Map2D> {
    let (orows, ocols) = mode.output_dims(input.dims(), kernel.dims())?;
    let (kr, kc) = kernel.dims();
    let mut out = Map2D::zeros(orows, ocols);
    for m in 0..orows {
        for n in 0..ocols {
            let mut acc = 0.0;
            for r in 0..kr {
                for t in 0..kc {
                    acc += kernel.get(r, t) * input.get_or_zero((m + r) as isize, (n + t) as isize);
                }
            }
            out.set(m, n, acc);
        }
    }
    Ok(out)
}

/// Full correlation of the zero-extended `delta` with `kernel`.
///
/// Output dims grow by `K - 1` per axis:
/// `out(m, n) = Σ k(r, t) · delta(m + r - (Kx - 1), n + t - (Ky - 1))`.
/// With `rot180(w)` as the kernel this is the classic CNN delta
/// back-propagation through a valid convolution.
pub fn conv2d_full(delta: &Map2D, kernel: &Map2D) -> Result<Map2D> {
    let (kr, kc) = kernel.dims();
    if kr == 0 || kc == 0 {
        return Err(OnnError::dims("kernel has a zero dimension"));
    }
    let orows = delta.rows() + kr - 1;
    let ocols = delta.cols() + kc - 1;
    let (pr, pc) = ((kr - 1) as isize, (kc - 1) as isize);
    let mut out = Map2D::zeros(orows, ocols);
    for m in 0..orows {
        for n in 0..ocols {
            let mut acc = 0.0;
            for r in 0..kr {
                for t in 0..kc {
                    acc += kernel.get(r, t)
                        * delta.get_or_zero(m as isize + r as isize - pr, n as isize + t as isize - pc);
                }
            }
            out.set(m, n, acc);
        }
    }
    Ok(out)
}

fn check_varying(delta: &Map2D, kernel: &Cache4D) -> Result<()> {
    let (kr, kc) = (kernel.krows(), kernel.kcols());
    if kr == 0 || kc == 0 || kernel.rows() + 1 < kr || kernel.cols() + 1 < kc {
        return Err(OnnError::dims(format!(
            "varying kernel shape {:?} is degenerate",
            kernel.shape()
        )));
    }
    let expect = (kernel.rows() + 1 - kr, kernel.cols() + 1 - kc);
    if delta.dims() != expect {
        return Err(OnnError::dims(format!(
            "delta is {}x{} but a {:?} varying kernel needs {}x{}",
            delta.rows(),
            delta.cols(),
            kernel.shape(),
            expect.0,
            expect.1
        )));
    }
    Ok(())
}

/// Varying 2D convolution, delta mode:
/// `out(m, n) = Σ_{r,t} delta(m - r, n - t) · K(m, n, r, t)`.
///
/// The output has the kernel's pixel dims; delta reads outside its extent are 0.
pub fn conv2dvar_delta(delta: &Map2D, kernel: &Cache4D) -> Result<Map2D> {
    check_varying(delta, kernel)?;
    let mut out = Map2D::zeros(kernel.rows(), kernel.cols());
    varying_delta_accumulate(&mut out, delta, kernel.krows(), kernel.kcols(), |i| {
        kernel.as_slice()[i]
    });
    Ok(out)
}

/// Varying 2D convolution, weight mode:
/// `out(r, t) = Σ_{m,n} delta(m, n) · K(m + r, n + t, r, t)`.
pub fn conv2dvar_weight(delta: &Map2D, kernel: &Cache4D) -> Result<Map2D> {
    check_varying(delta, kernel)?;
    let mut out = Map2D::zeros(kernel.krows(), kernel.kcols());
    varying_weight_accumulate(&mut out, delta, kernel.cols(), |i| kernel.as_slice()[i]);
    Ok(out)
}

/// `out += conv2dvar_delta(delta, K)` where `K` is read through `kernel_at`
/// by flat `(m, n, r, t)` index. `out` has the kernel's pixel dims.
#[inline]
pub(crate) fn varying_delta_accumulate(
    out: &mut Map2D,
    delta: &Map2D,
    kr: usize,
    kc: usize,
    kernel_at: impl Fn(usize) -> f64,
) {
    let (rows, cols) = out.dims();
    let (dr, dc) = delta.dims();
    for m in 0..rows {
        for n in 0..cols {
            let mut acc = 0.0;
            let base = (m * cols + n) * kr * kc;
            for r in 0..kr {
                if m < r || m - r >= dr {
                    continue;
                }
                for t in 0..kc {
                    if n < t || n - t >= dc {
                        continue;
                    }
                    acc += delta.get(m - r, n - t) * kernel_at(base + r * kc + t);
                }
            }
            let i = m * cols + n;
            out.as_mut_slice()[i] += acc;
        }
    }
}

/// `out += conv2dvar_weight(delta, K)`; `cache_cols` is the kernel's pixel
/// column count, `out` has the kernel's patch dims.
#[inline]
pub(crate) fn varying_weight_accumulate(
    out: &mut Map2D,
    delta: &Map2D,
    cache_cols: usize,
    kernel_at: impl Fn(usize) -> f64,
) {
    let (kr, kc) = out.dims();
    let (dr, dc) = delta.dims();
    for r in 0..kr {
        for t in 0..kc {
            let mut acc = 0.0;
            for m in 0..dr {
                for n in 0..dc {
                    let idx = (((m + r) * cache_cols + (n + t)) * kr + r) * kc + t;
                    acc += delta.get(m, n) * kernel_at(idx);
                }
            }
            let i = r * kc + t;
            out.as_mut_slice()[i] += acc;
        }
    }
}

fn check_factor(fx: usize, fy: usize) -> Result<()> {
    if fx == 0 || fy == 0 {
        return Err(OnnError::invalid("sampling factor must be at least 1"));
    }
    Ok(())
}

/// Average pooling over non-overlapping `fx x fy` blocks. Trailing partial
/// blocks average over the pixels they contain.
pub fn downsample(map: &Map2D, fx: usize, fy: usize) -> Result<Map2D> {
    check_factor(fx, fy)?;
    let (rows, cols) = map.dims();
    let orows = rows.div_ceil(fx);
    let ocols = cols.div_ceil(fy);
    let mut out = Map2D::zeros(orows, ocols);
    for i in 0..orows {
        for j in 0..ocols {
            let r1 = ((i + 1) * fx).min(rows);
            let c1 = ((j + 1) * fy).min(cols);
            let mut acc = 0.0;
            for r in i * fx..r1 {
                for c in j * fy..c1 {
                    acc += map.get(r, c);
                }
            }
            out.set(i, j, acc / ((r1 - i * fx) * (c1 - j * fy)) as f64);
        }
    }
    Ok(out)
}

/// Zero-order up-sampling: every pixel becomes a `fx x fy` block.
pub fn upsample(map: &Map2D, fx: usize, fy: usize) -> Result<Map2D> {
    check_factor(fx, fy)?;
    Ok(Map2D::from_fn(map.rows() * fx, map.cols() * fy, |r, c| {
        map.get(r / fx, c / fy)
    }))
}

/// Adjoint of [`downsample`]: spreads each pooled gradient back over its
/// block, divided by the block's pixel count.
pub fn downsample_adjoint(grad: &Map2D, rows: usize, cols: usize, fx: usize, fy: usize) -> Result<Map2D> {
    check_factor(fx, fy)?;
    if grad.dims() != (rows.div_ceil(fx), cols.div_ceil(fy)) {
        return Err(OnnError::dims(format!(
            "pooled gradient {}x{} does not match {rows}x{cols} down-sampled by {fx}x{fy}",
            grad.rows(),
            grad.cols()
        )));
    }
    Ok(Map2D::from_fn(rows, cols, |r, c| {
        let (i, j) = (r / fx, c / fy);
        let br = ((i + 1) * fx).min(rows) - i * fx;
        let bc = ((j + 1) * fy).min(cols) - j * fy;
        grad.get(i, j) / (br * bc) as f64
    }))
}

/// Adjoint of [`upsample`]: sums each replicated block.
pub fn upsample_adjoint(grad: &Map2D, fx: usize, fy: usize) -> Result<Map2D> {
    check_factor(fx, fy)?;
    if !grad.rows().is_multiple_of(fx) || !grad.cols().is_multiple_of(fy) {
        return Err(OnnError::dims(format!(
            "gradient {}x{} is not a multiple of {fx}x{fy}",
            grad.rows(),
            grad.cols()
        )));
    }
    let mut out = Map2D::zeros(grad.rows() / fx, grad.cols() / fy);
    for r in 0..grad.rows() {
        for c in 0..grad.cols() {
            let (i, j) = (r / fx, c / fy);
            let v = out.get(i, j) + grad.get(r, c);
            out.set(i, j, v);
        }
    }
    Ok(out)
}
