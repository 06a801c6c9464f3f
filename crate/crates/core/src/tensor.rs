//! Dense f64 matrix/vector arithmetic for the recurrence engine.
//!
//! Everything is row-major, owned, and copy-on-write-free: operations return
//! fresh buffers and never mutate their inputs. Shapes are tiny (k, d at most
//! a few hundred), so there are no strides, views, or BLAS — just loops the
//! compiler can vectorize.

/// Vectors are plain `Vec<f64>`, treated as column vectors in products.
pub type Vector = Vec<f64>;

/// Dense row-major matrix of f64.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dims must be >= 1, got {rows}x{cols}");
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        assert!(!rows.is_empty() && !rows[0].is_empty());
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows: {} vs {}", r.len(), cols);
            data.extend_from_slice(r);
        }
        Matrix { rows: rows.len(), cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length {} != {}x{}", data.len(), rows, cols);
        assert!(rows >= 1 && cols >= 1);
        Matrix { rows, cols, data }
    }

    /// Identity matrix of size n.
    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for j in 0..n {
            m.data[j * n + j] = 1.0;
        }
        m
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows >= 1 && cols >= 1);
        Matrix { rows, cols, data: vec![value; rows * cols] }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Matrix) {
        assert_shape(self, other, "add_assign");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// In-place `self += alpha * other`.
    pub fn axpy_assign(&mut self, alpha: f64, other: &Matrix) {
        assert_shape(self, other, "axpy_assign");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&self, alpha: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
fn assert_shape(a: &Matrix, b: &Matrix, op: &str) {
    assert!(
        a.rows == b.rows && a.cols == b.cols,
        "{op}: shape mismatch {}x{} vs {}x{}",
        a.rows, a.cols, b.rows, b.cols
    );
}

/// Outer product `u v^T` (len(u) x len(v)).
pub fn outer(u: &[f64], v: &[f64]) -> Matrix {
    assert!(!u.is_empty() && !v.is_empty());
    let mut data = Vec::with_capacity(u.len() * v.len());
    for &uj in u {
        data.extend(v.iter().map(|&vc| uj * vc));
    }
    Matrix { rows: u.len(), cols: v.len(), data }
}

/// Matrix product `A B`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert!(
        a.cols == b.rows,
        "matmul: shape mismatch {}x{} vs {}x{}",
        a.rows, a.cols, b.rows, b.cols
    );
    let mut out = Matrix::zeros(a.rows, b.cols);
    for r in 0..a.rows {
        let arow = a.row(r);
        let orow = &mut out.data[r * b.cols..(r + 1) * b.cols];
        for (l, &av) in arow.iter().enumerate() {
            let brow = b.row(l);
            for (dst, &bv) in orow.iter_mut().zip(brow) {
                *dst += av * bv;
            }
        }
    }
    out
}

/// Elementwise product.
pub fn hadamard(a: &Matrix, b: &Matrix) -> Matrix {
    assert!(
        a.rows == b.rows && a.cols == b.cols,
        "hadamard: shape mismatch {}x{} vs {}x{}",
        a.rows, a.cols, b.rows, b.cols
    );
    Matrix {
        rows: a.rows,
        cols: a.cols,
        data: a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect(),
    }
}

/// `m v`: (rows x cols) * (cols) -> (rows).
pub fn matvec(m: &Matrix, v: &[f64]) -> Vector {
    assert!(
        m.cols == v.len(),
        "matvec: shape mismatch {}x{} vs {}",
        m.rows, m.cols, v.len()
    );
    (0..m.rows).map(|r| dot(m.row(r), v)).collect()
}

/// `m^T s`: (rows x cols) transposed-apply * (rows) -> (cols).
pub fn matvec_t(m: &Matrix, s: &[f64]) -> Vector {
    assert!(
        m.rows == s.len(),
        "matvec_t: shape mismatch {}x{} vs {}",
        m.rows, m.cols, s.len()
    );
    let mut out = vec![0.0; m.cols];
    for (r, &sr) in s.iter().enumerate() {
        axpy(&mut out, sr, m.row(r));
    }
    out
}

/// Column broadcast `v 1^T`: row j is v[j] repeated `cols` times.
pub fn broadcast_col(v: &[f64], cols: usize) -> Matrix {
    assert!(!v.is_empty() && cols >= 1);
    let mut out = Matrix::zeros(v.len(), cols);
    for (j, &vj) in v.iter().enumerate() {
        out.row_mut(j).fill(vj);
    }
    out
}

/// Row broadcast `1 v^T`: every row is a copy of v.
pub fn broadcast_row(v: &[f64], rows: usize) -> Matrix {
    assert!(!v.is_empty() && rows >= 1);
    let mut out = Matrix::zeros(rows, v.len());
    for r in 0..rows {
        out.row_mut(r).copy_from_slice(v);
    }
    out
}

/// Diagonal matrix from a vector.
pub fn diag(v: &[f64]) -> Matrix {
    let n = v.len();
    let mut out = Matrix::zeros(n, n);
    for (j, &vj) in v.iter().enumerate() {
        out.data[j * n + j] = vj;
    }
    out
}

/// Dot product with fixed 4-way accumulation order (deterministic across runs).
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let ai = &a[i * 4..i * 4 + 4];
        let bi = &b[i * 4..i * 4 + 4];
        acc[0] += ai[0] * bi[0];
        acc[1] += ai[1] * bi[1];
        acc[2] += ai[2] * bi[2];
        acc[3] += ai[3] * bi[3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x` over slices.
#[inline]
pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

// ── Complex matrices ────────────────────────────────────────────────

/// Dense row-major complex matrix; entries stored interleaved (re, im).
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Interleaved [re0, im0, re1, im1, ...], length 2*rows*cols.
    pub data: Vec<f64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1);
        CMatrix { rows, cols, data: vec![0.0; 2 * rows * cols] }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> (f64, f64) {
        let i = 2 * (r * self.cols + c);
        (self.data[i], self.data[i + 1])
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, re: f64, im: f64) {
        let i = 2 * (r * self.cols + c);
        self.data[i] = re;
        self.data[i + 1] = im;
    }

    /// Build from a real matrix (imaginary parts zero).
    pub fn from_real(m: &Matrix) -> Self {
        let mut out = CMatrix::zeros(m.rows, m.cols);
        for (i, &v) in m.data.iter().enumerate() {
            out.data[2 * i] = v;
        }
        out
    }

    /// Unit-modulus matrix with entry exp(i*theta[r]) in every column of row r.
    pub fn from_phases_broadcast(theta: &[f64], cols: usize) -> Self {
        let mut out = CMatrix::zeros(theta.len(), cols);
        for (r, &th) in theta.iter().enumerate() {
            let (s, c) = th.sin_cos();
            for col in 0..cols {
                out.set(r, col, c, s);
            }
        }
        out
    }

    pub fn real_part(&self) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.cols);
        for i in 0..self.rows * self.cols {
            out.data[i] = self.data[2 * i];
        }
        out
    }

    pub fn imag_part(&self) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.cols);
        for i in 0..self.rows * self.cols {
            out.data[i] = self.data[2 * i + 1];
        }
        out
    }

    pub fn conj(&self) -> CMatrix {
        let mut out = self.clone();
        for i in 0..self.rows * self.cols {
            out.data[2 * i + 1] = -out.data[2 * i + 1];
        }
        out
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &CMatrix) {
        assert!(self.rows == other.rows && self.cols == other.cols);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// In-place `self += m` treating m as real.
    pub fn add_real_assign(&mut self, m: &Matrix) {
        assert!(self.rows == m.rows && self.cols == m.cols);
        for (i, &v) in m.data.iter().enumerate() {
            self.data[2 * i] += v;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.rows * self.cols {
            let (re, im) = (self.data[2 * i], self.data[2 * i + 1]);
            m = m.max(re.hypot(im));
        }
        m
    }
}

/// Elementwise complex product `a ⊙ b`.
pub fn chadamard(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert!(
        a.rows == b.rows && a.cols == b.cols,
        "chadamard: shape mismatch {}x{} vs {}x{}",
        a.rows, a.cols, b.rows, b.cols
    );
    let mut out = CMatrix::zeros(a.rows, a.cols);
    for i in 0..a.rows * a.cols {
        let (ar, ai) = (a.data[2 * i], a.data[2 * i + 1]);
        let (br, bi) = (b.data[2 * i], b.data[2 * i + 1]);
        out.data[2 * i] = ar * br - ai * bi;
        out.data[2 * i + 1] = ar * bi + ai * br;
    }
    out
}

/// Complex matrix product `A B`.
pub fn cmatmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert!(
        a.cols == b.rows,
        "cmatmul: shape mismatch {}x{} vs {}x{}",
        a.rows, a.cols, b.rows, b.cols
    );
    let mut out = CMatrix::zeros(a.rows, b.cols);
    for r in 0..a.rows {
        for l in 0..a.cols {
            let (ar, ai) = a.get(r, l);
            for c in 0..b.cols {
                let (br, bi) = b.get(l, c);
                let i = 2 * (r * b.cols + c);
                out.data[i] += ar * br - ai * bi;
                out.data[i + 1] += ar * bi + ai * br;
            }
        }
    }
    out
}

/// `A^H B` (conjugate-transposed left operand).
pub fn cmatmul_conj_t(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert!(
        a.rows == b.rows,
        "cmatmul_conj_t: shape mismatch {}x{} vs {}x{}",
        a.rows, a.cols, b.rows, b.cols
    );
    let mut out = CMatrix::zeros(a.cols, b.cols);
    for l in 0..a.rows {
        for r in 0..a.cols {
            let (ar, ai) = a.get(l, r);
            // conj(a[l,r]) * b[l,c]
            for c in 0..b.cols {
                let (br, bi) = b.get(l, c);
                let i = 2 * (r * b.cols + c);
                out.data[i] += ar * br + ai * bi;
                out.data[i + 1] += ar * bi - ai * br;
            }
        }
    }
    out
}

/// `A B^H` (conjugate-transposed right operand).
pub fn cmatmul_t_conj(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert!(
        a.cols == b.cols,
        "cmatmul_t_conj: shape mismatch {}x{} vs {}x{}",
        a.rows, a.cols, b.rows, b.cols
    );
    let mut out = CMatrix::zeros(a.rows, b.rows);
    for r in 0..a.rows {
        for c in 0..b.rows {
            let mut acc_re = 0.0;
            let mut acc_im = 0.0;
            for l in 0..a.cols {
                let (ar, ai) = a.get(r, l);
                let (br, bi) = b.get(c, l);
                // a[r,l] * conj(b[c,l])
                acc_re += ar * br + ai * bi;
                acc_im += ai * br - ar * bi;
            }
            out.set(r, c, acc_re, acc_im);
        }
    }
    out
}

/// `Re(m)^T s` readout for complex memory.
pub fn cmatvec_t_real(m: &CMatrix, s: &[f64]) -> Vector {
    assert!(
        m.rows == s.len(),
        "cmatvec_t_real: shape mismatch {}x{} vs {}",
        m.rows, m.cols, s.len()
    );
    let mut out = vec![0.0; m.cols];
    for (r, &sr) in s.iter().enumerate() {
        for c in 0..m.cols {
            out[c] += sr * m.data[2 * (r * m.cols + c)];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn outer_examples() {
        let m = outer(&[1.0, 2.0], &[3.0]);
        assert_eq!(m.rows, 2);
        assert_eq!(m.cols, 1);
        assert_eq!(m.data, vec![3.0, 6.0]);

        let z = outer(&[0.0, 0.0], &[5.0, 7.0]);
        assert!(z.data.iter().all(|&v| v == 0.0));

        let ones = outer(&[1.0], &[1.0, 1.0, 1.0]);
        assert_eq!(ones.data, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn hadamard_masks() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let mask = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(hadamard(&a, &mask).data, vec![0.0, 2.0, 3.0, 0.0]);
    }

    #[test]
    fn matmul_identity() {
        let b = Matrix::from_rows(&[vec![5.0], vec![6.0]]);
        let out = matmul(&Matrix::identity(2), &b);
        assert_eq!(out.data, vec![5.0, 6.0]);
    }

    #[test]
    fn matvec_t_hand_example() {
        // m^T s with m = [[3],[6]], s = [1,1] -> [9]
        let m = Matrix::from_rows(&[vec![3.0], vec![6.0]]);
        assert_eq!(matvec_t(&m, &[1.0, 1.0]), vec![9.0]);
    }

    #[test]
    #[should_panic(expected = "shape mismatch")]
    fn matmul_mismatch_names_shapes() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        let _ = matmul(&a, &b);
    }

    #[test]
    fn diag_matmul_equals_broadcast_hadamard() {
        // The psi=times -> psi=odot reduction at the arithmetic level: bitwise equal.
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..20 {
            let k = rng.random_range(1..6usize);
            let d = rng.random_range(1..5usize);
            let v: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let mut m = Matrix::zeros(k, d);
            for x in m.data.iter_mut() {
                *x = rng.random_range(-2.0..2.0);
            }
            let via_matmul = matmul(&diag(&v), &m);
            let via_hadamard = hadamard(&broadcast_col(&v, d), &m);
            for (a, b) in via_matmul.data.iter().zip(&via_hadamard.data) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn complex_ops_agree_with_real_when_imag_zero() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut a = Matrix::zeros(3, 4);
        let mut b = Matrix::zeros(3, 4);
        for x in a.data.iter_mut().chain(b.data.iter_mut()) {
            *x = rng.random_range(-1.0..1.0);
        }
        let ca = CMatrix::from_real(&a);
        let cb = CMatrix::from_real(&b);
        let prod = chadamard(&ca, &cb);
        let real = hadamard(&a, &b);
        for i in 0..12 {
            assert_eq!(prod.data[2 * i].to_bits(), real.data[i].to_bits());
            assert_eq!(prod.data[2 * i + 1], 0.0);
        }

        let sq_a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let sq_b = Matrix::from_rows(&[vec![-1.0, 0.5], vec![2.0, 1.5]]);
        let cprod = cmatmul(&CMatrix::from_real(&sq_a), &CMatrix::from_real(&sq_b));
        let rprod = matmul(&sq_a, &sq_b);
        for i in 0..4 {
            assert_eq!(cprod.data[2 * i].to_bits(), rprod.data[i].to_bits());
        }
    }

    #[test]
    fn phase_matrix_is_unit_modulus() {
        let theta = [0.3, -1.2, 2.9];
        let m = CMatrix::from_phases_broadcast(&theta, 5);
        for r in 0..3 {
            for c in 0..5 {
                let (re, im) = m.get(r, c);
                assert!((re.hypot(im) - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn ops_do_not_mutate_inputs() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = Matrix::identity(2);
        let a_before = a.clone();
        let b_before = b.clone();
        let _ = matmul(&a, &b);
        let _ = hadamard(&a, &Matrix::filled(2, 2, 2.0));
        let _ = matvec(&a, &[1.0, 1.0]);
        let _ = matvec_t(&a, &[1.0, 1.0]);
        assert_eq!(a, a_before);
        assert_eq!(b, b_before);
    }
}
