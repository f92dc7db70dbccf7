// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dense linear algebra in 64-bit floating point.
//!
//! Everything here is deterministic: eigendecompositions use cyclic Jacobi
//! sweeps in a fixed pivot order and the SVD is one-sided (Hestenes) Jacobi.
//! Intended for desk-scale problems (dimensions up to a few hundred).

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};

/// Row-major dense matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(r)[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

impl Matrix {
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

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows. An empty slice gives a 0x0 matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C]) -> Result<Self> {
        Ok(Self::from_rows(columns)?.transpose())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on zero width
        (0..self.rows).map(move |r| self.row(r))
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn set_column(&mut self, c: usize, values: &[f64]) {
        for (r, v) in values.iter().enumerate() {
            self[(r, c)] = *v;
        }
    }

    /// Copies the listed rows, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Copies the listed columns, in order.
    pub fn select_columns(&self, indices: &[usize]) -> Self {
        Self::from_fn(self.rows, indices.len(), |r, c| self[(r, indices[c])])
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · v` for a vector of length `cols`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(shape(format!(
                "cannot multiply {}x{} by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok(self.row_iter().map(|row| dot(row, v)).collect())
    }

    /// `selfᵀ · v` for a vector of length `rows`.
    pub fn tr_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(shape(format!(
                "cannot multiply transpose of {}x{} by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (row, &s) in self.row_iter().zip(v) {
            axpy(s, row, &mut out);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Matrix) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(shape(format!(
                "elementwise op on {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Self {
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

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Mean of each column.
    pub fn column_means(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.cols];
        for row in self.row_iter() {
            axpy(1.0, row, &mut mean);
        }
        let n = self.rows.max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Subtracts `offset` from every row.
    pub fn center_rows(&self, offset: &[f64]) -> Self {
        let mut out = self.clone();
        for r in 0..self.rows {
            for (v, o) in out.row_mut(r).iter_mut().zip(offset) {
                *v -= o;
            }
        }
        out
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += a·x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Eigendecomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues sorted in decreasing order.
    pub values: Vec<f64>,
    /// Eigenvectors as columns, matching `values`.
    pub vectors: Matrix,
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
pub fn symmetric_eigen(a: &Matrix) -> Result<SymmetricEigen> {
    let n = a.rows();
    if a.cols() != n {
        return Err(shape(format!(
            "eigendecomposition needs a square matrix, got {:?}",
            a.shape()
        )));
    }
    if !a.is_finite() {
        return Err(invalid("matrix has non-finite entries"));
    }
    let mut m = a.clone();
    // symmetrize to absorb rounding in the caller's construction
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let mut v = Matrix::identity(n);
    let scale = m.frobenius_norm();

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps the lower index first on exact ties
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = v.select_columns(&order);
    Ok(SymmetricEigen { values, vectors })
}

/// Thin singular value decomposition `A = U·diag(s)·Vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// n×r left singular vectors (r = min(n, p)).
    pub u: Matrix,
    /// Singular values in decreasing order.
    pub singular_values: Vec<f64>,
    /// p×r right singular vectors.
    pub v: Matrix,
}

impl Svd {
    /// Singular values above the standard numerical-rank cutoff.
    pub fn rank(&self) -> usize {
        let tol = self.tolerance();
        self.singular_values.iter().filter(|&&s| s > tol).count()
    }

    fn tolerance(&self) -> f64 {
        let smax = self.singular_values.first().copied().unwrap_or(0.0);
        let dim = self.u.rows().max(self.v.rows()) as f64;
        dim * smax * f64::EPSILON
    }
}

/// One-sided Jacobi SVD.
pub fn svd(a: &Matrix) -> Result<Svd> {
    if !a.is_finite() {
        return Err(invalid("matrix has non-finite entries"));
    }
    if a.rows() < a.cols() {
        let t = svd(&a.transpose())?;
        return Ok(Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        });
    }
    let (n, p) = a.shape();
    // column-major working copies
    let mut cols: Vec<Vec<f64>> = (0..p).map(|j| a.column(j)).collect();
    let mut vcols: Vec<Vec<f64>> = (0..p)
        .map(|j| (0..p).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    for _sweep in 0..80 {
        let mut rotated = false;
        for i in 0..p {
            for j in (i + 1)..p {
                let alpha = dot(&cols[i], &cols[i]);
                let beta = dot(&cols[j], &cols[j]);
                let gamma = dot(&cols[i], &cols[j]);
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = cols.split_at_mut(j);
                rotate(&mut lo[i], &mut hi[0], c, s);
                let (lo, hi) = vcols.split_at_mut(j);
                rotate(&mut lo[i], &mut hi[0], c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let sv: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    let mut u = Matrix::zeros(n, p);
    let mut v = Matrix::zeros(p, p);
    let mut sorted = Vec::with_capacity(p);
    for (k, &j) in order.iter().enumerate() {
        let s = sv[j];
        sorted.push(s);
        if s > 0.0 {
            for r in 0..n {
                u[(r, k)] = cols[j][r] / s;
            }
        }
        v.set_column(k, &vcols[j]);
    }
    Ok(Svd {
        u,
        singular_values: sorted,
        v,
    })
}

fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

/// Moore–Penrose pseudoinverse.
pub fn pseudoinverse(p: &Matrix) -> Result<Matrix> {
    let svd = svd(p)?;
    let tol = svd.tolerance();
    let (rows, cols) = p.shape();
    let mut out = Matrix::zeros(cols, rows);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= tol {
            continue;
        }
        let inv = 1.0 / s;
        for i in 0..cols {
            let vik = svd.v[(i, k)] * inv;
            if vik == 0.0 {
                continue;
            }
            for j in 0..rows {
                out[(i, j)] += vik * svd.u[(j, k)];
            }
        }
    }
    Ok(out)
}

pub fn matrix_rank(a: &Matrix) -> Result<usize> {
    if a.rows() == 0 || a.cols() == 0 {
        return Ok(0);
    }
    Ok(svd(a)?.rank())
}

/// Minimum-norm least-squares solution `C` of `A·C ≈ B`.
pub fn least_squares(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows() != b.rows() {
        return Err(shape(format!(
            "least squares: A has {} rows, B has {}",
            a.rows(),
            b.rows()
        )));
    }
    pseudoinverse(a)?.matmul(b)
}

/// Pairwise cosine similarities between the columns of `d`.
pub fn cosine_similarity_matrix(d: &Matrix) -> Result<Matrix> {
    let m = d.cols();
    let columns: Vec<Vec<f64>> = (0..m).map(|j| d.column(j)).collect();
    let norms: Vec<f64> = columns.iter().map(|c| norm(c)).collect();
    if let Some(j) = norms.iter().position(|&n| n == 0.0 || !n.is_finite()) {
        return Err(Error::ZeroColumn(j));
    }
    let mut out = Matrix::identity(m);
    for i in 0..m {
        for j in (i + 1)..m {
            let s = (dot(&columns[i], &columns[j]) / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            out[(i, j)] = s;
            out[(j, i)] = s;
        }
    }
    Ok(out)
}

/// Principal axes of a point set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaBasis {
    /// k×d, orthonormal rows ordered by decreasing variance.
    pub components: Matrix,
    pub explained_variance: Vec<f64>,
    pub mean: Vec<f64>,
    /// Trace of the sample covariance.
    pub total_variance: f64,
    /// Components whose variance is numerically zero.
    pub zero_variance: Vec<bool>,
}

impl PcaBasis {
    pub fn k(&self) -> usize {
        self.components.rows()
    }

    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        if self.total_variance <= 0.0 {
            return vec![0.0; self.k()];
        }
        self.explained_variance
            .iter()
            .map(|v| v / self.total_variance)
            .collect()
    }

    /// Coordinates of mean-centered rows in the component basis (n×k).
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        x.center_rows(&self.mean)
            .matmul(&self.components.transpose())
    }

    /// Maps component coordinates back to the ambient space.
    pub fn inverse_transform(&self, scores: &Matrix) -> Result<Matrix> {
        let mut out = scores.matmul(&self.components)?;
        for r in 0..out.rows() {
            axpy(1.0, &self.mean, out.row_mut(r));
        }
        Ok(out)
    }
}

/// Principal component analysis through the sample covariance.
///
/// Each component is sign-fixed so that its largest-magnitude entry is
/// positive (ties go to the lowest index).
pub fn pca(x: &Matrix, k: usize) -> Result<PcaBasis> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(invalid(format!("pca needs at least 2 rows, got {n}")));
    }
    if k == 0 || k > n.min(d) {
        return Err(invalid(format!("pca: k={k} outside 1..={}", n.min(d))));
    }
    if !x.is_finite() {
        return Err(invalid("pca input has non-finite entries"));
    }
    let mean = x.column_means();
    let centered = x.center_rows(&mean);
    let mut cov = Matrix::zeros(d, d);
    for row in centered.row_iter() {
        for i in 0..d {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            for j in i..d {
                cov[(i, j)] += ri * row[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let total_variance: f64 = (0..d).map(|i| cov[(i, i)]).sum();
    let eig = symmetric_eigen(&cov)?;

    let mut components = Matrix::zeros(k, d);
    let mut explained_variance = Vec::with_capacity(k);
    for c in 0..k {
        let mut v = eig.vectors.column(c);
        let pivot = v
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (i, &x)| {
                if x.abs() > bv {
                    (i, x.abs())
                } else {
                    (bi, bv)
                }
            })
            .0;
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.row_mut(c).copy_from_slice(&v);
        explained_variance.push(eig.values[c].max(0.0));
    }
    let floor = 1e-12 * total_variance.max(f64::MIN_POSITIVE);
    let zero_variance = explained_variance.iter().map(|&v| v <= floor).collect();
    Ok(PcaBasis {
        components,
        explained_variance,
        mean,
        total_variance,
        zero_variance,
    })
}

/// Orthonormal basis for the column space of `a` via modified Gram–Schmidt
/// with one re-orthogonalization pass. Fails on rank deficiency.
pub fn orthonormalize_columns(a: &Matrix) -> Result<Matrix> {
    let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(a.cols());
    for j in 0..a.cols() {
        let mut v = a.column(j);
        let original = norm(&v);
        for _pass in 0..2 {
            for qi in &q {
                let proj = dot(qi, &v);
                axpy(-proj, qi, &mut v);
            }
        }
        let n = norm(&v);
        if n <= 1e-10 * original.max(scale * 1e-6) || n == 0.0 {
            return Err(Error::Degenerate(format!(
                "column {j} is linearly dependent"
            )));
        }
        v.iter_mut().for_each(|x| *x /= n);
        q.push(v);
    }
    Matrix::from_columns(&q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pca_rank_one_line() {
        let rows: Vec<[f64; 2]> = (0..21).map(|i| [-1.0 + 0.1 * i as f64, 0.0]).collect();
        let basis = pca(&Matrix::from_rows(&rows).unwrap(), 1).unwrap();
        assert!((basis.components[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(basis.components[(0, 1)].abs() < 1e-12);
        assert!((basis.explained_variance_ratio()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pca_circle_splits_variance() {
        let n = 360;
        let rows: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / n as f64;
                [t.cos(), t.sin()]
            })
            .collect();
        let basis = pca(&Matrix::from_rows(&rows).unwrap(), 2).unwrap();
        let r = basis.explained_variance_ratio();
        assert!((r[0] - 0.5).abs() < 1e-9 && (r[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn pca_rejects_bad_k() {
        let x = Matrix::zeros(5, 3);
        assert!(pca(&x, 4).is_err());
        assert!(pca(&x, 0).is_err());
        assert!(pca(&Matrix::zeros(1, 3), 1).is_err());
    }

    #[test]
    fn pca_flags_degenerate() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]).unwrap();
        let basis = pca(&x, 2).unwrap();
        assert_eq!(basis.zero_variance, vec![true, true]);
        assert_eq!(basis.explained_variance, vec![0.0, 0.0]);
    }

    #[test]
    fn least_squares_identity_and_intercept() {
        let a = Matrix::from_rows(&[[2.0, 1.0], [1.0, 3.0]]).unwrap();
        let c = least_squares(&a, &a).unwrap();
        assert!(c.max_abs_diff(&Matrix::identity(2)) < 1e-12);

        let ones = Matrix::from_vec(4, 1, vec![1.0; 4]).unwrap();
        let b = Matrix::from_vec(4, 1, vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        let c = least_squares(&ones, &b).unwrap();
        assert!((c[(0, 0)] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn pseudoinverse_small_cases() {
        let i3 = Matrix::identity(3);
        assert!(pseudoinverse(&i3).unwrap().max_abs_diff(&i3) < 1e-14);

        let p = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let pinv = pseudoinverse(&p).unwrap();
        assert_eq!(pinv.shape(), (2, 1));
        assert!((pinv[(0, 0)] - 1.0).abs() < 1e-14 && pinv[(1, 0)].abs() < 1e-14);

        let zero = Matrix::zeros(2, 3);
        assert_eq!(pseudoinverse(&zero).unwrap(), Matrix::zeros(3, 2));
    }

    #[test]
    fn cosine_matrix_basic() {
        let d = Matrix::from_columns(&[[1.0, 0.0], [2.0, 0.0], [0.0, 3.0]]).unwrap();
        let s = cosine_similarity_matrix(&d).unwrap();
        assert!((s[(0, 1)] - 1.0).abs() < 1e-15);
        assert!(s[(0, 2)].abs() < 1e-15);
        assert_eq!(s[(2, 2)], 1.0);
    }

    #[test]
    fn cosine_matrix_reports_zero_column() {
        let d = Matrix::from_columns(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        assert!(matches!(
            cosine_similarity_matrix(&d),
            Err(Error::ZeroColumn(1))
        ));
    }

    #[test]
    fn rank_of_redundant_columns() {
        let a = Matrix::from_columns(&[[1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 2.0]]).unwrap();
        assert_eq!(matrix_rank(&a).unwrap(), 2);
    }

    #[test]
    fn gram_schmidt_rejects_dependent_columns() {
        let a = Matrix::from_columns(&[[1.0, 2.0, 0.0], [2.0, 4.0, 0.0]]).unwrap();
        assert!(orthonormalize_columns(&a).is_err());
    }
}
