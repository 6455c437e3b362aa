//! Small dense matrices and a Householder QR, sized for regressions with a
//! handful of columns.

use std::fmt;
use std::ops::{Index, IndexMut};

/// Column-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
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

    /// Builds from a list of columns of equal length.
    pub fn from_columns(columns: &[Vec<f64>]) -> Self {
        let rows = columns.first().map_or(0, Vec::len);
        assert!(columns.iter().all(|c| c.len() == rows), "ragged columns");
        Self {
            rows,
            cols: columns.len(),
            data: columns.concat(),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(n, p);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), p, "ragged rows");
            for (j, v) in r.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Product with left-to-right summation over the inner index.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            for i in 0..self.rows {
                let mut acc = 0.0;
                for k in 0..self.cols {
                    acc += self[(i, k)] * other[(k, j)];
                }
                out[(i, j)] = acc;
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "dimension mismatch");
        (0..self.rows)
            .map(|i| (0..self.cols).map(|k| self[(i, k)] * v[k]).sum())
            .collect()
    }

    /// `Xᵀ v`.
    pub fn tr_matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "dimension mismatch");
        (0..self.cols)
            .map(|j| self.column(j).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetrized(&self) -> Matrix {
        assert_eq!(self.rows, self.cols);
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[j * self.rows + i]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[j * self.rows + i]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// Thin QR factorization via Householder reflections.
#[derive(Debug, Clone)]
pub struct Qr {
    /// Householder vectors below the diagonal, `R` on and above it.
    packed: Matrix,
    /// Scalars `τ` of each reflector `I − τ v vᵀ`.
    tau: Vec<f64>,
    /// Euclidean norms of the original columns.
    col_norms: Vec<f64>,
}

impl Qr {
    pub fn new(x: &Matrix) -> Self {
        let (n, p) = (x.rows(), x.cols());
        let col_norms = (0..p)
            .map(|j| x.column(j).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let mut a = x.clone();
        let mut tau = vec![0.0; p.min(n)];
        for k in 0..p.min(n) {
            let norm = (k..n).map(|i| a[(i, k)] * a[(i, k)]).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let alpha = if a[(k, k)] > 0.0 { -norm } else { norm };
            let v0 = a[(k, k)] - alpha;
            // v = [1, a[k+1..]/v0]; τ = -v0/alpha
            for i in (k + 1)..n {
                a[(i, k)] /= v0;
            }
            tau[k] = -v0 / alpha;
            a[(k, k)] = alpha;
            for j in (k + 1)..p {
                let mut s = a[(k, j)];
                for i in (k + 1)..n {
                    s += a[(i, k)] * a[(i, j)];
                }
                s *= tau[k];
                a[(k, j)] -= s;
                for i in (k + 1)..n {
                    let vik = a[(i, k)];
                    a[(i, j)] -= s * vik;
                }
            }
        }
        Self {
            packed: a,
            tau,
            col_norms,
        }
    }

    /// Smallest `|R_jj| / ‖x_j‖` over all columns (zero columns give 0).
    pub fn min_relative_diagonal(&self) -> f64 {
        (0..self.packed.cols())
            .map(|j| {
                let n = self.col_norms[j];
                if n == 0.0 {
                    0.0
                } else {
                    self.packed[(j, j)].abs() / n
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Applies `Qᵀ` to a vector of length `rows`.
    pub fn qt_apply(&self, y: &[f64]) -> Vec<f64> {
        let n = self.packed.rows();
        let mut out = y.to_vec();
        for (k, &t) in self.tau.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            let mut s = out[k];
            for i in (k + 1)..n {
                s += self.packed[(i, k)] * out[i];
            }
            s *= t;
            out[k] -= s;
            for i in (k + 1)..n {
                out[i] -= s * self.packed[(i, k)];
            }
        }
        out
    }

    /// Solves `R β = (Qᵀ y)[..p]` by back substitution.
    pub fn solve_least_squares(&self, y: &[f64]) -> Vec<f64> {
        let p = self.packed.cols();
        let qty = self.qt_apply(y);
        let mut beta = vec![0.0; p];
        for i in (0..p).rev() {
            let mut s = qty[i];
            for j in (i + 1)..p {
                s -= self.packed[(i, j)] * beta[j];
            }
            beta[i] = s / self.packed[(i, i)];
        }
        beta
    }

    /// `(XᵀX)⁻¹ = R⁻¹ R⁻ᵀ`.
    pub fn xtx_inverse(&self) -> Matrix {
        let p = self.packed.cols();
        let mut rinv = Matrix::zeros(p, p);
        for j in 0..p {
            rinv[(j, j)] = 1.0 / self.packed[(j, j)];
            for i in (0..j).rev() {
                let mut s = 0.0;
                for k in (i + 1)..=j {
                    s += self.packed[(i, k)] * rinv[(k, j)];
                }
                rinv[(i, j)] = -s / self.packed[(i, i)];
            }
        }
        rinv.matmul(&rinv.transpose()).symmetrized()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_solves_square_system() {
        let x = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let qr = Qr::new(&x);
        let b = qr.solve_least_squares(&[3.0, 5.0]);
        assert!((b[0] - 0.8).abs() < 1e-14 && (b[1] - 1.4).abs() < 1e-14, "{b:?}");
    }

    #[test]
    fn xtx_inverse_matches_hand_inverse() {
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]);
        // XᵀX = [[3,3],[3,5]], inverse = [[5,-3],[-3,3]] / 6
        let inv = Qr::new(&x).xtx_inverse();
        let want = [[5.0 / 6.0, -0.5], [-0.5, 0.5]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((inv[(i, j)] - want[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_column_flags_rank_deficiency() {
        let x = Matrix::from_columns(&[vec![1.0, 1.0, 1.0], vec![0.0, 0.0, 0.0]]);
        assert_eq!(Qr::new(&x).min_relative_diagonal(), 0.0);
        let y = Matrix::from_columns(&[vec![1.0, 1.0, 1.0], vec![2.0, 2.0, 2.0]]);
        assert!(Qr::new(&y).min_relative_diagonal() < 1e-12);
    }
}
