use rand::Rng;

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "Tensor2::from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    /// Column vector.
    pub fn column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-scale..scale))
            .collect();
        Self { rows, cols, data }
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn add_assign(&mut self, other: &Tensor2) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|x| *x *= k);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// `y = W·x + b`.
pub fn affine(x: &[f64], w: &Tensor2, b: &[f64]) -> Result<Vec<f64>> {
    if x.len() != w.cols() {
        return Err(Error::Shape {
            op: "affine (x vs W)",
            left: w.shape(),
            right: (x.len(), 1),
        });
    }
    if b.len() != w.rows() {
        return Err(Error::Shape {
            op: "affine (b vs W)",
            left: w.shape(),
            right: (b.len(), 1),
        });
    }
    let mut y = b.to_vec();
    matvec_acc(w, x, &mut y);
    Ok(y)
}

/// Backward pass of [`affine`]: accumulates `dW += dy·xᵀ`, `db += dy` and,
/// when requested, `dx += Wᵀ·dy`.
pub fn affine_backward(
    x: &[f64],
    w: &Tensor2,
    dy: &[f64],
    dw: &mut Tensor2,
    db: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    debug_assert_eq!(dy.len(), w.rows());
    outer_acc(dw, dy, x);
    for (d, g) in db.iter_mut().zip(dy) {
        *d += g;
    }
    if let Some(dx) = dx {
        matvec_t_acc(w, dy, dx);
    }
}

/// `y += W·x`
#[inline]
pub(crate) fn matvec_acc(w: &Tensor2, x: &[f64], y: &mut [f64]) {
    let cols = w.cols();
    for (r, out) in y.iter_mut().enumerate() {
        let row = &w.data()[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(x) {
            acc += a * b;
        }
        *out += acc;
    }
}

/// `y += Wᵀ·v`
#[inline]
pub(crate) fn matvec_t_acc(w: &Tensor2, v: &[f64], y: &mut [f64]) {
    let cols = w.cols();
    for (r, &g) in v.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &w.data()[r * cols..(r + 1) * cols];
        for (out, a) in y.iter_mut().zip(row) {
            *out += a * g;
        }
    }
}

/// `W += u·vᵀ`
#[inline]
pub(crate) fn outer_acc(w: &mut Tensor2, u: &[f64], v: &[f64]) {
    let cols = w.cols();
    for (r, &g) in u.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &mut w.data_mut()[r * cols..(r + 1) * cols];
        for (out, b) in row.iter_mut().zip(v) {
            *out += g * b;
        }
    }
}
