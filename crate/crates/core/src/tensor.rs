//! Dense row-major matrices and the differentiable primitives the model is
//! assembled from.
//!
//! Every forward primitive here has a matching `*_backward` function; the
//! model composes them by hand instead of recording a tape.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Floor added inside the logarithm of [`nll_loss`] so a zero probability
/// yields a large finite loss instead of infinity.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2D<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Tensor2D<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "tensor shape ({rows}, {cols}) has a zero dimension"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "data length {} does not match shape ({rows}, {cols})",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must share a length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "tensor dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(rows > 0 && cols > 0, "tensor dimensions must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { T::one() } else { T::zero() })
    }

    /// A `(len, 1)` column vector.
    pub fn column(values: Vec<T>) -> Result<Self> {
        let n = values.len();
        Self::new(n, 1, values)
    }

    /// A `(1, len)` row vector.
    pub fn row(values: Vec<T>) -> Result<Self> {
        let n = values.len();
        Self::new(1, n, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row_slice(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_slice_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn squared_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    /// `self += other`, shapes must agree.
    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: T) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        matmul(self, other)
    }

    /// `self · x` for a dense vector `x` of length `cols`.
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row_slice(r), x)).collect()
    }

    /// `self · x + bias`.
    pub fn affine(&self, x: &[T], bias: &[T]) -> Vec<T> {
        debug_assert_eq!(bias.len(), self.rows);
        let mut out = self.matvec(x);
        for (o, &b) in out.iter_mut().zip(bias) {
            *o += b;
        }
        out
    }

    /// `out += selfᵀ · y` for `y` of length `rows`.
    pub fn matvec_t_acc(&self, y: &[T], out: &mut [T]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &yr) in y.iter().enumerate() {
            if yr == T::zero() {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.row_slice(r)) {
                *o += w * yr;
            }
        }
    }

    /// `self += a · bᵀ` (outer-product accumulation).
    pub fn add_outer(&mut self, a: &[T], b: &[T]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (r, &ar) in a.iter().enumerate() {
            if ar == T::zero() {
                continue;
            }
            for (s, &bc) in self.row_slice_mut(r).iter_mut().zip(b) {
                *s += ar * bc;
            }
        }
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn matmul<T: Scalar>(a: &Tensor2D<T>, b: &Tensor2D<T>) -> Result<Tensor2D<T>> {
    if a.cols != b.rows {
        return Err(Error::Dimension(format!(
            "matmul of ({}, {}) by ({}, {})",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Tensor2D::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a.get(i, k);
            let brow = b.row_slice(k);
            for (o, &bkj) in out.row_slice_mut(i).iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// Accumulates the gradients of `a · b` into `grad_a` and `grad_b` given
/// the upstream gradient of the product.
pub fn matmul_backward<T: Scalar>(
    a: &Tensor2D<T>,
    b: &Tensor2D<T>,
    grad_out: &Tensor2D<T>,
    grad_a: &mut Tensor2D<T>,
    grad_b: &mut Tensor2D<T>,
) -> Result<()> {
    if grad_out.shape() != (a.rows, b.cols)
        || grad_a.shape() != a.shape()
        || grad_b.shape() != b.shape()
    {
        return Err(Error::Dimension("matmul_backward shape mismatch".into()));
    }
    grad_a.add_assign(&matmul(grad_out, &b.transpose())?);
    grad_b.add_assign(&matmul(&a.transpose(), grad_out)?);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Sigmoid,
    Tanh,
    Add,
    Mul,
}

impl Elementwise {
    pub fn arity(self) -> usize {
        match self {
            Elementwise::Sigmoid | Elementwise::Tanh => 1,
            Elementwise::Add | Elementwise::Mul => 2,
        }
    }
}

fn check_args<T: Scalar>(op: Elementwise, args: &[&Tensor2D<T>]) -> Result<()> {
    if args.len() != op.arity() {
        return Err(Error::Argument(format!(
            "{op:?} takes {} argument(s), got {}",
            op.arity(),
            args.len()
        )));
    }
    let shape = args[0].shape();
    if let Some(bad) = args.iter().find(|t| t.shape() != shape) {
        return Err(Error::Dimension(format!(
            "{op:?} operands have shapes {:?} and {:?}",
            shape,
            bad.shape()
        )));
    }
    Ok(())
}

pub fn elementwise<T: Scalar>(op: Elementwise, args: &[&Tensor2D<T>]) -> Result<Tensor2D<T>> {
    check_args(op, args)?;
    let out = match op {
        Elementwise::Sigmoid => args[0].map(sigmoid),
        Elementwise::Tanh => args[0].map(T::tanh),
        Elementwise::Add | Elementwise::Mul => {
            let (a, b) = (args[0], args[1]);
            let data = a
                .data
                .iter()
                .zip(&b.data)
                .map(|(&x, &y)| if op == Elementwise::Add { x + y } else { x * y })
                .collect();
            Tensor2D::new(a.rows, a.cols, data)?
        }
    };
    Ok(out)
}

/// Gradients of each argument of `elementwise(op, args)`; `output` is the
/// forward result.
pub fn elementwise_backward<T: Scalar>(
    op: Elementwise,
    args: &[&Tensor2D<T>],
    output: &Tensor2D<T>,
    grad_out: &Tensor2D<T>,
) -> Result<Vec<Tensor2D<T>>> {
    check_args(op, args)?;
    if output.shape() != args[0].shape() || grad_out.shape() != args[0].shape() {
        return Err(Error::Dimension("elementwise_backward shape mismatch".into()));
    }
    let zip = |f: &dyn Fn(usize) -> T| {
        let n = output.len();
        Tensor2D::new(output.rows, output.cols, (0..n).map(f).collect())
    };
    let g = &grad_out.data;
    let y = &output.data;
    Ok(match op {
        Elementwise::Sigmoid => vec![zip(&|i| g[i] * y[i] * (T::one() - y[i]))?],
        Elementwise::Tanh => vec![zip(&|i| g[i] * (T::one() - y[i] * y[i]))?],
        Elementwise::Add => vec![grad_out.clone(), grad_out.clone()],
        Elementwise::Mul => {
            let (a, b) = (&args[0].data, &args[1].data);
            vec![zip(&|i| g[i] * b[i])?, zip(&|i| g[i] * a[i])?]
        }
    })
}

/// Max-subtracted softmax over a slice.
pub fn softmax<T: Scalar>(v: &[T]) -> Result<Vec<T>> {
    if v.is_empty() {
        return Err(Error::Argument("softmax of an empty vector".into()));
    }
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = v.iter().map(|&x| (x - max).exp()).collect();
    let total: T = out.iter().copied().sum();
    out.iter_mut().for_each(|x| *x /= total);
    Ok(out)
}

/// Softmax of a row vector tensor.
pub fn softmax_row<T: Scalar>(v: &Tensor2D<T>) -> Result<Tensor2D<T>> {
    if v.rows != 1 {
        return Err(Error::Dimension(format!(
            "softmax expects a row vector, got {:?}",
            v.shape()
        )));
    }
    Tensor2D::row(softmax(&v.data)?)
}

/// Gradient of the softmax input given its output `y` and upstream `grad_y`.
pub fn softmax_backward<T: Scalar>(y: &[T], grad_y: &[T]) -> Vec<T> {
    let inner = dot(y, grad_y);
    y.iter()
        .zip(grad_y)
        .map(|(&yi, &gi)| yi * (gi - inner))
        .collect()
}

/// `-ln(dist[target] + LOG_FLOOR)`.
pub fn nll_loss<T: Scalar>(dist: &[T], target: usize) -> Result<T> {
    if target >= dist.len() {
        return Err(Error::Index {
            index: target,
            len: dist.len(),
        });
    }
    let total: T = dist.iter().copied().sum();
    if (total - T::one()).abs() > T::lit(1e-6) {
        return Err(Error::Argument(format!(
            "distribution sums to {total}, not 1"
        )));
    }
    Ok(-(dist[target] + T::lit(LOG_FLOOR)).ln())
}

/// Gradient of [`nll_loss`] with respect to the distribution.
pub fn nll_loss_backward<T: Scalar>(dist: &[T], target: usize) -> Result<Vec<T>> {
    if target >= dist.len() {
        return Err(Error::Index {
            index: target,
            len: dist.len(),
        });
    }
    let mut grad = vec![T::zero(); dist.len()];
    grad[target] = -T::one() / (dist[target] + T::lit(LOG_FLOOR));
    Ok(grad)
}
