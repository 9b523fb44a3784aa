//! Small dense linear algebra, root finding and a fixed-step RK4 stepper.
//!
//! Everything here is sized for games with a handful of players: dense
//! `O(n^3)` factorizations, no sparsity, no external BLAS.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Index, IndexMut};

/// Largest matrix accepted by the eigenvalue routines.
pub const MAX_EIGEN_DIM: usize = 64;

/// Relative pivot threshold below which a matrix is treated as singular.
pub const SINGULAR_PIVOT_RTOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub enum NumericsError {
    /// Operand shapes do not conform.
    Shape {
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// Partial pivoting met a pivot below `1e-13 * ||A||_inf` at column `pivot`.
    Singular { pivot: usize },
    /// Shifted QR did not deflate within the iteration cap.
    NoConvergence { iterations: usize },
    /// Eigenvalue routines are capped at [`MAX_EIGEN_DIM`].
    TooLarge { dim: usize },
    /// `f(lo)` and `f(hi)` do not have opposite signs.
    NoBracket { f_lo: f64, f_hi: f64 },
    /// Bisection closed the bracket on a sign change that is not a root
    /// (a pole or jump of `f`).
    NotARoot { at: f64, residual: f64 },
    /// A function evaluation produced a non-finite value or was undefined.
    NotFinite { at: f64 },
    /// Damped Newton hit the iteration cap or stalled.
    NewtonFailed {
        last: Vec<f64>,
        residual: f64,
        iterations: usize,
    },
}

impl fmt::Display for NumericsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Shape { expected, found } => write!(
                f,
                "shape mismatch: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Self::Singular { pivot } => write!(f, "matrix is singular (pivot {pivot})"),
            Self::NoConvergence { iterations } => {
                write!(f, "eigenvalue iteration did not converge after {iterations} sweeps")
            }
            Self::TooLarge { dim } => {
                write!(f, "matrix of size {dim} exceeds eigensolver cap {MAX_EIGEN_DIM}")
            }
            Self::NoBracket { f_lo, f_hi } => {
                write!(f, "no sign change in bracket: f(lo)={f_lo:e}, f(hi)={f_hi:e}")
            }
            Self::NotARoot { at, residual } => {
                write!(f, "sign change at {at} is a discontinuity (|f|={residual:e})")
            }
            Self::NotFinite { at } => write!(f, "function not finite at {at}"),
            Self::NewtonFailed {
                residual,
                iterations,
                ..
            } => write!(
                f,
                "newton iteration failed after {iterations} iterations (residual {residual:e})"
            ),
        }
    }
}

impl core::error::Error for NumericsError {}

/// Row-major dense real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row-major entries.
    ///
    /// Panics if `data.len() != rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data has wrong length");
        Self {
            rows,
            cols,
            data: data.to_vec(),
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "vector length does not match columns");
        (0..self.rows)
            .map(|i| dot(self.row(i), x))
            .collect()
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    /// `diag(d) * self`.
    pub fn scale_rows(&self, d: &[f64]) -> DenseMatrix {
        assert_eq!(d.len(), self.rows);
        let mut out = self.clone();
        for (i, &di) in d.iter().enumerate() {
            out.row_mut(i).iter_mut().for_each(|v| *v *= di);
        }
        out
    }

    pub fn scaled(&self, s: f64) -> DenseMatrix {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| f64::max(m, x.abs()))
}

/// LU factorization with partial pivoting, `P A = L U` packed in place.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &DenseMatrix) -> Result<Self, NumericsError> {
        if !a.is_square() {
            return Err(NumericsError::Shape {
                expected: (a.rows, a.rows),
                found: (a.rows, a.cols),
            });
        }
        let n = a.rows;
        let threshold = SINGULAR_PIVOT_RTOL * a.norm_inf();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
            if !(pmax > threshold) {
                return Err(NumericsError::Singular { pivot: k });
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    lu.data.swap(p * n + j, k * n + j);
                }
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let l = lu[(i, k)] / pivot;
                lu[(i, k)] = l;
                if l != 0.0 {
                    for j in k + 1..n {
                        lu[(i, j)] -= l * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n, "rhs length mismatch");
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }

    pub fn inverse(&self) -> DenseMatrix {
        let n = self.dim();
        let mut inv = DenseMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for col in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[col] = 1.0;
            let x = self.solve(&e);
            for row in 0..n {
                inv[(row, col)] = x[row];
            }
        }
        inv
    }

    pub fn determinant(&self) -> f64 {
        let n = self.dim();
        let mut det: f64 = (0..n).map(|i| self.lu[(i, i)]).product();
        // parity of the permutation
        let mut seen = vec![false; n];
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut j = start;
            while !seen[j] {
                seen[j] = true;
                j = self.perm[j];
                len += 1;
            }
            if len % 2 == 0 {
                det = -det;
            }
        }
        det
    }
}

/// Solves `A x = b` by partially pivoted elimination.
pub fn solve_linear(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>, NumericsError> {
    if b.len() != a.rows {
        return Err(NumericsError::Shape {
            expected: (a.rows, 1),
            found: (b.len(), 1),
        });
    }
    Ok(Lu::factor(a)?.solve(b))
}

/// Infinity-norm condition number `||A|| ||A^-1||`.
pub fn condition_inf(a: &DenseMatrix) -> Result<f64, NumericsError> {
    let lu = Lu::factor(a)?;
    Ok(a.norm_inf() * lu.inverse().norm_inf())
}

/// Determinant via LU; a singular factorization reports zero.
pub fn determinant(a: &DenseMatrix) -> f64 {
    match Lu::factor(a) {
        Ok(lu) => lu.determinant(),
        Err(_) => 0.0,
    }
}

/// Complex eigenvalue as `(re, im)`.
pub type Eigenvalue = (f64, f64);

/// All eigenvalues of a real square matrix.
///
/// Reduces to upper Hessenberg form by stabilized elementary similarity
/// transforms, then runs Francis double-shift QR with deflation.
pub fn eigenvalues(a: &DenseMatrix) -> Result<Vec<Eigenvalue>, NumericsError> {
    if !a.is_square() {
        return Err(NumericsError::Shape {
            expected: (a.rows, a.rows),
            found: (a.rows, a.cols),
        });
    }
    let n = a.rows;
    if n > MAX_EIGEN_DIM {
        return Err(NumericsError::TooLarge { dim: n });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut h = a.clone();
    hessenberg(&mut h);
    hqr(&mut h)
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(a: &DenseMatrix) -> Result<f64, NumericsError> {
    let eig = eigenvalues(a)?;
    Ok(eig.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max))
}

/// `M` is Hurwitz iff `max Re(lambda) < -1e-8 (1 + ||M||_inf)`.
pub fn is_hurwitz(m: &DenseMatrix) -> Result<bool, NumericsError> {
    Ok(spectral_abscissa(m)? < -hurwitz_margin(m))
}

pub fn hurwitz_margin(m: &DenseMatrix) -> f64 {
    1e-8 * (1.0 + m.norm_inf())
}

fn hessenberg(a: &mut DenseMatrix) {
    let n = a.rows;
    for m in 1..n.saturating_sub(1) {
        let mut x = 0.0_f64;
        let mut piv = m;
        for j in m..n {
            if a[(j, m - 1)].abs() > x.abs() {
                x = a[(j, m - 1)];
                piv = j;
            }
        }
        if piv != m {
            for j in m - 1..n {
                let t = a[(piv, j)];
                a[(piv, j)] = a[(m, j)];
                a[(m, j)] = t;
            }
            for j in 0..n {
                let t = a[(j, piv)];
                a[(j, piv)] = a[(j, m)];
                a[(j, m)] = t;
            }
        }
        if x != 0.0 {
            for i in m + 1..n {
                let mut y = a[(i, m - 1)];
                if y != 0.0 {
                    y /= x;
                    a[(i, m - 1)] = y;
                    for j in m..n {
                        a[(i, j)] -= y * a[(m, j)];
                    }
                    for j in 0..n {
                        a[(j, m)] += y * a[(j, i)];
                    }
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..i.saturating_sub(1) {
            a[(i, j)] = 0.0;
        }
    }
}

const HQR_MAX_ITS: usize = 60;

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

#[allow(clippy::many_single_char_names)]
fn hqr(a: &mut DenseMatrix) -> Result<Vec<Eigenvalue>, NumericsError> {
    let n = a.rows as isize;
    let mut wr = vec![0.0; n as usize];
    let mut wi = vec![0.0; n as usize];
    let at = |a: &DenseMatrix, i: isize, j: isize| a[(i as usize, j as usize)];
    macro_rules! set {
        ($i:expr, $j:expr, $v:expr) => {
            a[(($i) as usize, ($j) as usize)] = $v
        };
    }
    let mut anorm = 0.0;
    for i in 0..n {
        for j in (i - 1).max(0)..n {
            anorm += at(a, i, j).abs();
        }
    }
    let eps = f64::EPSILON;
    let mut nn = n - 1;
    let mut t = 0.0;
    let (mut p, mut q, mut r): (f64, f64, f64);
    while nn >= 0 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l > 0 {
                let mut s = at(a, l - 1, l - 1).abs() + at(a, l, l).abs();
                if s == 0.0 {
                    s = anorm;
                }
                if at(a, l, l - 1).abs() <= eps * s {
                    set!(l, l - 1, 0.0);
                    break;
                }
                l -= 1;
            }
            let mut x = at(a, nn, nn);
            if l == nn {
                wr[nn as usize] = x + t;
                wi[nn as usize] = 0.0;
                nn -= 1;
            } else {
                let mut y = at(a, nn - 1, nn - 1);
                let mut w = at(a, nn, nn - 1) * at(a, nn - 1, nn);
                if l == nn - 1 {
                    p = 0.5 * (y - x);
                    q = p * p + w;
                    let mut z = libm::sqrt(q.abs());
                    x += t;
                    if q >= 0.0 {
                        z = p + sign(z, p);
                        wr[(nn - 1) as usize] = x + z;
                        wr[nn as usize] = x + z;
                        if z != 0.0 {
                            wr[nn as usize] = x - w / z;
                        }
                        wi[(nn - 1) as usize] = 0.0;
                        wi[nn as usize] = 0.0;
                    } else {
                        wr[(nn - 1) as usize] = x + p;
                        wr[nn as usize] = x + p;
                        wi[(nn - 1) as usize] = z;
                        wi[nn as usize] = -z;
                    }
                    nn -= 2;
                } else {
                    if its == HQR_MAX_ITS {
                        return Err(NumericsError::NoConvergence { iterations: its });
                    }
                    if its % 10 == 0 && its > 0 {
                        // exceptional shift
                        t += x;
                        for i in 0..=nn {
                            let v = at(a, i, i) - x;
                            set!(i, i, v);
                        }
                        let s = at(a, nn, nn - 1).abs() + at(a, nn - 1, nn - 2).abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    let mut m = nn - 2;
                    let mut z;
                    loop {
                        z = at(a, m, m);
                        r = x - z;
                        let s0 = y - z;
                        p = (r * s0 - w) / at(a, m + 1, m) + at(a, m, m + 1);
                        q = at(a, m + 1, m + 1) - z - r - s0;
                        r = at(a, m + 2, m + 1);
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = at(a, m, m - 1).abs() * (q.abs() + r.abs());
                        let v = p.abs()
                            * (at(a, m - 1, m - 1).abs() + z.abs() + at(a, m + 1, m + 1).abs());
                        if u <= eps * v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in m..nn - 1 {
                        set!(i + 2, i, 0.0);
                        if i != m {
                            set!(i + 2, i - 1, 0.0);
                        }
                    }
                    let mut k = m;
                    while k < nn {
                        if k != m {
                            p = at(a, k, k - 1);
                            q = at(a, k + 1, k - 1);
                            r = 0.0;
                            if k + 1 != nn {
                                r = at(a, k + 2, k - 1);
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = sign(libm::sqrt(p * p + q * q + r * r), p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    let v = -at(a, k, k - 1);
                                    set!(k, k - 1, v);
                                }
                            } else {
                                set!(k, k - 1, -s * x);
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nn {
                                p = at(a, k, j) + q * at(a, k + 1, j);
                                if k + 1 != nn {
                                    p += r * at(a, k + 2, j);
                                    let v = at(a, k + 2, j) - p * z;
                                    set!(k + 2, j, v);
                                }
                                let v = at(a, k + 1, j) - p * y;
                                set!(k + 1, j, v);
                                let v = at(a, k, j) - p * x;
                                set!(k, j, v);
                            }
                            let mmin = if nn < k + 3 { nn } else { k + 3 };
                            for i in l..=mmin {
                                p = x * at(a, i, k) + y * at(a, i, k + 1);
                                if k + 1 != nn {
                                    p += z * at(a, i, k + 2);
                                    let v = at(a, i, k + 2) - p * r;
                                    set!(i, k + 2, v);
                                }
                                let v = at(a, i, k + 1) - p * q;
                                set!(i, k + 1, v);
                                let v = at(a, i, k) - p;
                                set!(i, k, v);
                            }
                        }
                        k += 1;
                    }
                }
            }
            if l + 1 >= nn {
                break;
            }
        }
    }
    Ok(wr.into_iter().zip(wi).collect())
}

/// Bisection for a scalar root on a sign-changing bracket.
///
/// Runs until the bracket is narrower than `1e-12 (1 + |root|)`, then
/// requires `|f(root)| <= tol`; a sign change across a pole is reported as
/// [`NumericsError::NotARoot`].
pub fn find_root_scalar<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64, NumericsError>
where
    F: FnMut(f64) -> f64,
{
    let (mut lo, mut hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if !f_lo.is_finite() {
        return Err(NumericsError::NotFinite { at: lo });
    }
    if !f_hi.is_finite() {
        return Err(NumericsError::NotFinite { at: hi });
    }
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(NumericsError::NoBracket { f_lo, f_hi });
    }
    let mut mid = 0.5 * (lo + hi);
    let mut f_mid = f(mid);
    for _ in 0..200 {
        if !f_mid.is_finite() {
            return Err(NumericsError::NotFinite { at: mid });
        }
        if f_mid == 0.0 || hi - lo <= 1e-12 * (1.0 + mid.abs()) {
            break;
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        mid = 0.5 * (lo + hi);
        f_mid = f(mid);
    }
    if f_mid.abs() <= tol {
        Ok(mid)
    } else {
        Err(NumericsError::NotARoot {
            at: mid,
            residual: f_mid.abs(),
        })
    }
}

/// Central-difference Jacobian with a single step `h` for every coordinate.
///
/// Entry `(j, k)` is `d f_k / d x_j`, i.e. the transpose of the usual
/// Jacobian layout. Returns `None` when `f` is undefined at a probe point.
pub fn fd_jacobian<F>(f: F, x: &[f64], h: f64) -> Option<DenseMatrix>
where
    F: FnMut(&[f64]) -> Option<Vec<f64>>,
{
    let steps = vec![h; x.len()];
    fd_jacobian_with_steps(f, x, &steps)
}

/// Like [`fd_jacobian`] with per-coordinate steps.
pub fn fd_jacobian_with_steps<F>(mut f: F, x: &[f64], steps: &[f64]) -> Option<DenseMatrix>
where
    F: FnMut(&[f64]) -> Option<Vec<f64>>,
{
    assert_eq!(x.len(), steps.len());
    let mut probe = x.to_vec();
    let mut jac: Option<DenseMatrix> = None;
    for j in 0..x.len() {
        let h = steps[j];
        probe[j] = x[j] + h;
        let fp = f(&probe)?;
        probe[j] = x[j] - h;
        let fm = f(&probe)?;
        probe[j] = x[j];
        let m = jac.get_or_insert_with(|| DenseMatrix::zeros(x.len(), fp.len()));
        for k in 0..fp.len() {
            m[(j, k)] = (fp[k] - fm[k]) / (2.0 * h);
        }
    }
    Some(jac.unwrap_or_else(|| DenseMatrix::zeros(0, 0)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonSolution {
    pub root: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Damped Newton with a central-difference Jacobian and step halving.
///
/// When the Jacobian is singular the step falls back to a
/// Levenberg-regularized least-squares direction; when no halving of the
/// step reduces `||f||_inf` the iteration stops with
/// [`NumericsError::NewtonFailed`] carrying the last iterate.
pub fn newton_system<F>(
    mut f: F,
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<NewtonSolution, NumericsError>
where
    F: FnMut(&[f64]) -> Option<Vec<f64>>,
{
    let mut x = x0.to_vec();
    let fail = |x: &[f64], residual: f64, iterations: usize| NumericsError::NewtonFailed {
        last: x.to_vec(),
        residual,
        iterations,
    };
    let mut fx = match f(&x) {
        Some(v) if v.iter().all(|c| c.is_finite()) => v,
        _ => return Err(fail(&x, f64::INFINITY, 0)),
    };
    let mut res = norm_inf(&fx);
    for iter in 0..max_iter {
        if res <= tol {
            return Ok(NewtonSolution {
                root: x,
                residual: res,
                iterations: iter,
            });
        }
        let steps: Vec<f64> = x.iter().map(|v| 1e-5 * (1.0 + v.abs())).collect();
        let jt = match fd_jacobian_with_steps(&mut f, &x, &steps) {
            Some(j) if j.is_finite() => j,
            _ => return Err(fail(&x, res, iter)),
        };
        // fd_jacobian is transposed relative to the Newton system matrix.
        let jac = jt.transpose();
        let rhs: Vec<f64> = fx.iter().map(|v| -v).collect();
        let step = match solve_linear(&jac, &rhs) {
            Ok(s) => s,
            Err(_) => regularized_step(&jac, &fx),
        };
        if norm_inf(&step) == 0.0 || step.iter().any(|s| !s.is_finite()) {
            return Err(fail(&x, res, iter));
        }
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + lambda * s).collect();
            if let Some(ft) = f(&trial) {
                if ft.iter().all(|c| c.is_finite()) {
                    let rt = norm_inf(&ft);
                    if rt < res {
                        x = trial;
                        fx = ft;
                        res = rt;
                        accepted = true;
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(fail(&x, res, iter + 1));
        }
    }
    if res <= tol {
        Ok(NewtonSolution {
            root: x,
            residual: res,
            iterations: max_iter,
        })
    } else {
        Err(fail(&x, res, max_iter))
    }
}

fn regularized_step(jac: &DenseMatrix, fx: &[f64]) -> Vec<f64> {
    let jt = jac.transpose();
    let mut normal = jt.matmul(jac);
    let mu = 1e-6 * (1.0 + normal.norm_inf());
    for i in 0..normal.rows() {
        normal[(i, i)] += mu;
    }
    let g: Vec<f64> = jt.mul_vec(fx).iter().map(|v| -v).collect();
    solve_linear(&normal, &g).unwrap_or_else(|_| vec![0.0; fx.len()])
}

/// Reusable buffers for the classical fourth-order Runge-Kutta method.
#[derive(Debug, Clone, Default)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `state` from `t` to `t + dt` in place.
    pub fn step<F, E>(&mut self, mut rhs: F, t: f64, state: &mut [f64], dt: f64) -> Result<(), E>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), E>,
    {
        let n = state.len();
        if self.k1.len() != n {
            *self = Self::new(n);
        }
        rhs(t, state, &mut self.k1)?;
        for i in 0..n {
            self.tmp[i] = state[i] + 0.5 * dt * self.k1[i];
        }
        rhs(t + 0.5 * dt, &self.tmp, &mut self.k2)?;
        for i in 0..n {
            self.tmp[i] = state[i] + 0.5 * dt * self.k2[i];
        }
        rhs(t + 0.5 * dt, &self.tmp, &mut self.k3)?;
        for i in 0..n {
            self.tmp[i] = state[i] + dt * self.k3[i];
        }
        rhs(t + dt, &self.tmp, &mut self.k4)?;
        for i in 0..n {
            state[i] += dt / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        Ok(())
    }
}

/// One RK4 step returning the new state.
pub fn rk4_step<F>(mut rhs: F, state: &[f64], t: f64, dt: f64) -> Vec<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut next = state.to_vec();
    let mut rk = Rk4::new(state.len());
    let _ = rk.step::<_, core::convert::Infallible>(
        |t, y, dy| {
            rhs(t, y, dy);
            Ok(())
        },
        t,
        &mut next,
        dt,
    );
    next
}
