//! Small dense linear algebra: the handful of factorizations the model
//! needs (Cholesky, LU solve, real eigenvalues), generic over [`Scalar`].

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use crate::error::{Result, VartaError};
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(VartaError::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * m);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != m {
                return Err(VartaError::Shape(format!(
                    "row {i} has {} entries, expected {m}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: n,
            cols: m,
            data,
        })
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
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
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Copy of the `rows x cols` block starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Matrix<T>) {
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] = block[(i, j)];
            }
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(self.cols, x.len(), "matrix-vector shape mismatch");
        (0..self.rows)
            .map(|i| dot(self.row(i), x))
            .collect()
    }

    pub fn trace(&self) -> T {
        self.diagonal().into_iter().fold(T::zero(), |a, b| a + b)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Matrix<T>) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    /// Replaces the matrix by `(M + M')/2`.
    pub fn symmetrize(&mut self) {
        let two = T::lit(2.0);
        for i in 0..self.rows {
            for j in 0..i {
                let v = (self[(i, j)] + self[(j, i)]) / two;
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    /// Lower Cholesky factor `L` with `L L' = self` and positive diagonal.
    pub fn cholesky(&self) -> Result<Matrix<T>> {
        if !self.is_square() {
            return Err(VartaError::Shape("cholesky of a non-square matrix".into()));
        }
        let n = self.rows;
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d = d - l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(VartaError::NotPositiveDefinite { pivot: j });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(l)
    }

    /// Solves `A x = b` by LU decomposition with partial pivoting.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let lu = Lu::new(self)?;
        Ok(lu.solve(b))
    }

    /// Inverse via LU decomposition.
    pub fn inverse(&self) -> Result<Matrix<T>> {
        let lu = Lu::new(self)?;
        let n = self.rows;
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = T::zero());
            e[j] = T::one();
            let col = lu.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Ok(inv)
    }

    /// Eigenvalues as `(re, im)` pairs, via balancing, reduction to upper
    /// Hessenberg form and the shifted QR iteration.
    pub fn eigenvalues(&self) -> Result<Vec<(T, T)>> {
        if !self.is_square() {
            return Err(VartaError::Shape("eigenvalues of a non-square matrix".into()));
        }
        hqr_eigenvalues(self)
    }

    /// Largest eigenvalue modulus.
    pub fn spectral_radius(&self) -> Result<T> {
        Ok(self
            .eigenvalues()?
            .into_iter()
            .map(|(re, im)| re.hypot(im))
            .fold(T::zero(), T::max))
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Scalar> Mul for &Matrix<T> {
    type Output = Matrix<T>;

    fn mul(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, rhs.rows, "matrix product shape mismatch");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let src = rhs.row(k);
                let dst = out.row_mut(i);
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = *d + a * s;
                }
            }
        }
        out
    }
}

impl<T: Scalar> Add for &Matrix<T> {
    type Output = Matrix<T>;

    fn add(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect(),
        }
    }
}

impl<T: Scalar> Sub for &Matrix<T> {
    type Output = Matrix<T>;

    fn sub(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect(),
        }
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

/// Solves `L y = b` in place for lower-triangular `L`.
pub fn forward_substitute<T: Scalar>(l: &Matrix<T>, b: &mut [T]) {
    let n = l.rows();
    for i in 0..n {
        let row = l.row(i);
        let mut s = b[i];
        for k in 0..i {
            s = s - row[k] * b[k];
        }
        b[i] = s / row[i];
    }
}

/// Solves `L' x = b` in place for lower-triangular `L`.
pub fn backward_substitute_transposed<T: Scalar>(l: &Matrix<T>, b: &mut [T]) {
    let n = l.rows();
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s = s - l[(k, i)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
}

/// `log det(L L')` from a Cholesky factor.
pub fn chol_log_det<T: Scalar>(l: &Matrix<T>) -> T {
    let two = T::lit(2.0);
    l.diagonal().into_iter().fold(T::zero(), |s, d| s + two * d.ln())
}

/// Inverse of `L L'` from its Cholesky factor.
pub fn chol_inverse<T: Scalar>(l: &Matrix<T>) -> Matrix<T> {
    let n = l.rows();
    let mut inv = Matrix::zeros(n, n);
    let mut e = vec![T::zero(); n];
    for j in 0..n {
        e.iter_mut().for_each(|x| *x = T::zero());
        e[j] = T::one();
        forward_substitute(l, &mut e);
        backward_substitute_transposed(l, &mut e);
        for i in 0..n {
            inv[(i, j)] = e[i];
        }
    }
    inv.symmetrize();
    inv
}

/// LU factorization with partial pivoting (`P A = L U`, packed).
struct Lu<T> {
    lu: Matrix<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    fn new(a: &Matrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(VartaError::Shape("LU of a non-square matrix".into()));
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs().max(T::min_positive_value());
        let tiny = scale * T::epsilon() * T::from_usize_lossy(n.max(1));
        for k in 0..n {
            let (piv, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -T::one()), |best, c| if c.1 > best.1 { c } else { best });
            if !(pmax > tiny) {
                return Err(VartaError::Singular);
            }
            if piv != k {
                for j in 0..n {
                    let t = lu[(k, j)];
                    lu[(k, j)] = lu[(piv, j)];
                    lu[(piv, j)] = t;
                }
                perm.swap(k, piv);
            }
            let d = lu[(k, k)];
            for i in (k + 1)..n {
                let f = lu[(i, k)] / d;
                lu[(i, k)] = f;
                if f != T::zero() {
                    for j in (k + 1)..n {
                        let v = lu[(k, j)];
                        lu[(i, j)] = lu[(i, j)] - f * v;
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.rows();
        let mut x: Vec<T> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s = s - self.lu[(i, k)] * x[k];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s = s - self.lu[(i, k)] * x[k];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }
}

const MAX_QR_ITERATIONS: usize = 60;

/// Real nonsymmetric eigenvalue problem. Works on a 1-based copy so the
/// index arithmetic of the classical balance/elmhes/hqr sequence stays
/// readable.
fn hqr_eigenvalues<T: Scalar>(m: &Matrix<T>) -> Result<Vec<(T, T)>> {
    let n = m.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    if m.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(VartaError::Domain("eigenvalues of a non-finite matrix".into()));
    }
    let w = n + 1;
    let mut a = vec![T::zero(); w * w];
    let idx = |i: usize, j: usize| i * w + j;
    for i in 0..n {
        for j in 0..n {
            a[idx(i + 1, j + 1)] = m[(i, j)];
        }
    }

    balance(&mut a, n, w);
    to_hessenberg(&mut a, n, w);
    for i in 1..=n {
        for j in 1..i.saturating_sub(1) {
            a[idx(i, j)] = T::zero();
        }
    }

    let mut wr = vec![T::zero(); n + 1];
    let mut wi = vec![T::zero(); n + 1];
    let sign = |a: T, b: T| if b >= T::zero() { a.abs() } else { -a.abs() };

    let mut anorm = T::zero();
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            anorm = anorm + a[idx(i, j)].abs();
        }
    }
    let mut nn = n;
    let mut t = T::zero();
    let half = T::lit(0.5);
    while nn >= 1 {
        let mut its = 0usize;
        let mut l;
        loop {
            l = nn;
            while l >= 2 {
                let mut s = a[idx(l - 1, l - 1)].abs() + a[idx(l, l)].abs();
                if s == T::zero() {
                    s = anorm;
                }
                if a[idx(l, l - 1)].abs() + s == s {
                    a[idx(l, l - 1)] = T::zero();
                    break;
                }
                l -= 1;
            }
            let mut x = a[idx(nn, nn)];
            if l == nn {
                wr[nn] = x + t;
                wi[nn] = T::zero();
                nn -= 1;
            } else {
                let mut y = a[idx(nn - 1, nn - 1)];
                let mut ww = a[idx(nn, nn - 1)] * a[idx(nn - 1, nn)];
                if l == nn - 1 {
                    let p = half * (y - x);
                    let q = p * p + ww;
                    let mut z = q.abs().sqrt();
                    x = x + t;
                    if q >= T::zero() {
                        z = p + sign(z, p);
                        wr[nn - 1] = x + z;
                        wr[nn] = x + z;
                        if z != T::zero() {
                            wr[nn] = x - ww / z;
                        }
                        wi[nn - 1] = T::zero();
                        wi[nn] = T::zero();
                    } else {
                        wr[nn - 1] = x + p;
                        wr[nn] = x + p;
                        wi[nn - 1] = -z;
                        wi[nn] = z;
                    }
                    nn = nn.saturating_sub(2);
                } else {
                    if its == MAX_QR_ITERATIONS {
                        return Err(VartaError::EigenNonConvergence);
                    }
                    if its == 10 || its == 20 {
                        // exceptional shift
                        t = t + x;
                        for i in 1..=nn {
                            a[idx(i, i)] = a[idx(i, i)] - x;
                        }
                        let s = a[idx(nn, nn - 1)].abs() + a[idx(nn - 1, nn - 2)].abs();
                        x = T::lit(0.75) * s;
                        y = x;
                        ww = T::lit(-0.4375) * s * s;
                    }
                    its += 1;
                    let (mut p, mut q, mut r);
                    let mut z;
                    let mut mm = nn - 2;
                    loop {
                        z = a[idx(mm, mm)];
                        r = x - z;
                        let s0 = y - z;
                        p = (r * s0 - ww) / a[idx(mm + 1, mm)] + a[idx(mm, mm + 1)];
                        q = a[idx(mm + 1, mm + 1)] - z - r - s0;
                        r = a[idx(mm + 2, mm + 1)];
                        let s = p.abs() + q.abs() + r.abs();
                        p = p / s;
                        q = q / s;
                        r = r / s;
                        if mm == l {
                            break;
                        }
                        let u = a[idx(mm, mm - 1)].abs() * (q.abs() + r.abs());
                        let v = p.abs()
                            * (a[idx(mm - 1, mm - 1)].abs() + z.abs() + a[idx(mm + 1, mm + 1)].abs());
                        if u + v == v {
                            break;
                        }
                        mm -= 1;
                    }
                    for i in (mm + 2)..=nn {
                        a[idx(i, i - 2)] = T::zero();
                        if i != mm + 2 {
                            a[idx(i, i - 3)] = T::zero();
                        }
                    }
                    let mut k = mm;
                    while k + 1 <= nn {
                        if k != mm {
                            p = a[idx(k, k - 1)];
                            q = a[idx(k + 1, k - 1)];
                            r = T::zero();
                            if k != nn - 1 {
                                r = a[idx(k + 2, k - 1)];
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != T::zero() {
                                p = p / x;
                                q = q / x;
                                r = r / x;
                            }
                        }
                        let s = sign((p * p + q * q + r * r).sqrt(), p);
                        if s != T::zero() {
                            if k == mm {
                                if l != mm {
                                    a[idx(k, k - 1)] = -a[idx(k, k - 1)];
                                }
                            } else {
                                a[idx(k, k - 1)] = -s * x;
                            }
                            p = p + s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q = q / p;
                            r = r / p;
                            for j in k..=nn {
                                let mut pp = a[idx(k, j)] + q * a[idx(k + 1, j)];
                                if k != nn - 1 {
                                    pp = pp + r * a[idx(k + 2, j)];
                                    a[idx(k + 2, j)] = a[idx(k + 2, j)] - pp * z;
                                }
                                a[idx(k + 1, j)] = a[idx(k + 1, j)] - pp * y;
                                a[idx(k, j)] = a[idx(k, j)] - pp * x;
                            }
                            let mmin = nn.min(k + 3);
                            for i in l..=mmin {
                                let mut pp = x * a[idx(i, k)] + y * a[idx(i, k + 1)];
                                if k != nn - 1 {
                                    pp = pp + z * a[idx(i, k + 2)];
                                    a[idx(i, k + 2)] = a[idx(i, k + 2)] - pp * r;
                                }
                                a[idx(i, k + 1)] = a[idx(i, k + 1)] - pp * q;
                                a[idx(i, k)] = a[idx(i, k)] - pp;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if nn == 0 || l + 1 >= nn {
                break;
            }
        }
    }
    Ok((1..=n).map(|i| (wr[i], wi[i])).collect())
}

fn balance<T: Scalar>(a: &mut [T], n: usize, w: usize) {
    let radix = T::lit(2.0);
    let sqrdx = radix * radix;
    let idx = |i: usize, j: usize| i * w + j;
    let mut done = false;
    while !done {
        done = true;
        for i in 1..=n {
            let mut r = T::zero();
            let mut c = T::zero();
            for j in 1..=n {
                if j != i {
                    c = c + a[idx(j, i)].abs();
                    r = r + a[idx(i, j)].abs();
                }
            }
            if c != T::zero() && r != T::zero() {
                let mut g = r / radix;
                let mut f = T::one();
                let s = c + r;
                while c < g {
                    f = f * radix;
                    c = c * sqrdx;
                }
                g = r * radix;
                while c > g {
                    f = f / radix;
                    c = c / sqrdx;
                }
                if (c + r) / f < T::lit(0.95) * s {
                    done = false;
                    let g = T::one() / f;
                    for j in 1..=n {
                        a[idx(i, j)] = a[idx(i, j)] * g;
                    }
                    for j in 1..=n {
                        a[idx(j, i)] = a[idx(j, i)] * f;
                    }
                }
            }
        }
    }
}

/// Reduction to upper Hessenberg form by stabilized elementary similarity
/// transformations.
fn to_hessenberg<T: Scalar>(a: &mut [T], n: usize, w: usize) {
    let idx = |i: usize, j: usize| i * w + j;
    for m in 2..n {
        let mut x = T::zero();
        let mut piv = m;
        for j in m..=n {
            if a[idx(j, m - 1)].abs() > x.abs() {
                x = a[idx(j, m - 1)];
                piv = j;
            }
        }
        if piv != m {
            for j in (m - 1)..=n {
                a.swap(idx(piv, j), idx(m, j));
            }
            for j in 1..=n {
                a.swap(idx(j, piv), idx(j, m));
            }
        }
        if x != T::zero() {
            for i in (m + 1)..=n {
                let mut y = a[idx(i, m - 1)];
                if y != T::zero() {
                    y = y / x;
                    a[idx(i, m - 1)] = y;
                    for j in m..=n {
                        a[idx(i, j)] = a[idx(i, j)] - y * a[idx(m, j)];
                    }
                    for j in 1..=n {
                        a[idx(j, m)] = a[idx(j, m)] + y * a[idx(j, i)];
                    }
                }
            }
        }
    }
}
