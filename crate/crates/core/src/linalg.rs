//! Dense linear-algebra helpers shared by the synthesis modules.
//!
//! nalgebra supplies the QR iteration, eigen-decompositions and LU/SVD
//! factorizations. Reordering of the real Schur form (moving a selected
//! set of eigenvalues to the leading block) and the Lyapunov solver live
//! here.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

const SCHUR_MAX_ITER: usize = 10_000;

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `‖M − Mᵀ‖_F ≤ rel_tol·(1 + ‖M‖_F)`.
pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).norm() <= rel_tol * (1.0 + m.norm())
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

/// Principal square root of a symmetric positive semidefinite matrix.
/// Small negative eigenvalues from round-off are clamped to zero.
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    let v = &eig.eigenvectors;
    symmetrize(&(v * d * v.transpose()))
}

pub fn inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!("{what} is not square")));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical(format!("{what} is singular")))
}

/// Stacks blocks vertically; all blocks must share the column count `cols`.
pub fn vstack(blocks: &[&DMatrix<f64>], cols: usize) -> Result<DMatrix<f64>> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        if b.ncols() != cols {
            return Err(Error::DimensionMismatch(format!(
                "vertical stack: block has {} columns, expected {cols}",
                b.ncols()
            )));
        }
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    Ok(out)
}

/// Concatenates blocks horizontally; all blocks must share the row count `rows`.
pub fn hstack(blocks: &[&DMatrix<f64>], rows: usize) -> Result<DMatrix<f64>> {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        if b.nrows() != rows {
            return Err(Error::DimensionMismatch(format!(
                "horizontal stack: block has {} rows, expected {rows}",
                b.nrows()
            )));
        }
        out.view_mut((0, c), (rows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    Ok(out)
}

/// A diagonal block of a real quasi-triangular Schur factor.
#[derive(Debug, Clone, Copy)]
struct Block {
    start: usize,
    size: usize,
}

/// Real Schur factorization `M = Z·T·Zᵀ` in standardized form: every 2×2
/// diagonal block of `T` carries a complex-conjugate eigenvalue pair.
#[derive(Debug, Clone)]
pub struct RealSchur {
    pub z: DMatrix<f64>,
    pub t: DMatrix<f64>,
}

/// The unshifted-exceptional QR sweep can stall on matrices with eigenvalue
/// pairs of equal modulus. A stalled factorization is restarted on `P·M·P`
/// for a few fixed Householder reflections `P`, and `Z` is mapped back.
fn schur_with_restarts(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if let Some(s) = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER) {
        return Ok(s.unpack());
    }
    let n = m.nrows();
    for attempt in 1..=4 {
        let v = DVector::from_fn(n, |i, _| 1.0 / (1.0 + ((i * attempt) % n) as f64 + attempt as f64 * 0.5));
        let p = DMatrix::identity(n, n) - &v * v.transpose() * (2.0 / v.norm_squared());
        if let Some(s) = Schur::try_new(&p * m * &p, f64::EPSILON, SCHUR_MAX_ITER) {
            let (z, t) = s.unpack();
            return Ok((p * z, t));
        }
    }
    Err(Error::Numerical("QR iteration did not converge".into()))
}

impl RealSchur {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch("Schur factorization needs a square matrix".into()));
        }
        let n = m.nrows();
        if n == 0 {
            return Ok(Self { z: DMatrix::zeros(0, 0), t: DMatrix::zeros(0, 0) });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite entry in Schur input".into()));
        }
        let (z, t) = schur_with_restarts(m)?;
        let mut s = Self { z, t };
        s.standardize();
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.t.nrows()
    }

    /// Zeroes negligible subdiagonal entries and splits 2×2 blocks whose
    /// eigenvalues are real.
    fn standardize(&mut self) {
        let n = self.dim();
        let mut i = 0;
        while i + 1 < n {
            let sub = self.t[(i + 1, i)];
            let scale = self.t[(i, i)].abs() + self.t[(i + 1, i + 1)].abs();
            if sub.abs() <= f64::EPSILON * scale.max(f64::MIN_POSITIVE) || sub == 0.0 {
                self.t[(i + 1, i)] = 0.0;
                i += 1;
                continue;
            }
            let (a, b, c, d) = (self.t[(i, i)], self.t[(i, i + 1)], sub, self.t[(i + 1, i + 1)]);
            let half_tr = 0.5 * (a + d);
            let disc = 0.25 * (a - d) * (a - d) + b * c;
            if disc >= 0.0 {
                // real pair: rotate an eigenvector onto e1
                let root = disc.sqrt();
                let lambda = if half_tr >= 0.0 { half_tr + root } else { half_tr - root };
                let (v0, v1) = if (lambda - d).abs() + c.abs() >= b.abs() + (lambda - a).abs() {
                    (lambda - d, c)
                } else {
                    (b, lambda - a)
                };
                let r = v0.hypot(v1);
                let (cs, sn) = (v0 / r, v1 / r);
                self.rotate(i, cs, sn);
                self.t[(i + 1, i)] = 0.0;
                i += 2;
            } else {
                i += 2;
            }
        }
    }

    /// Applies the plane rotation `[[c, −s], [s, c]]` in coordinates (i, i+1):
    /// `T ← Gᵀ T G`, `Z ← Z G`.
    fn rotate(&mut self, i: usize, c: f64, s: f64) {
        let n = self.dim();
        for k in 0..n {
            let (x, y) = (self.t[(i, k)], self.t[(i + 1, k)]);
            self.t[(i, k)] = c * x + s * y;
            self.t[(i + 1, k)] = -s * x + c * y;
        }
        for k in 0..n {
            let (x, y) = (self.t[(k, i)], self.t[(k, i + 1)]);
            self.t[(k, i)] = c * x + s * y;
            self.t[(k, i + 1)] = -s * x + c * y;
            let (x, y) = (self.z[(k, i)], self.z[(k, i + 1)]);
            self.z[(k, i)] = c * x + s * y;
            self.z[(k, i + 1)] = -s * x + c * y;
        }
    }

    fn blocks(&self) -> Vec<Block> {
        let n = self.dim();
        let mut out = Vec::new();
        let mut i = 0;
        while i < n {
            if i + 1 < n && self.t[(i + 1, i)] != 0.0 {
                out.push(Block { start: i, size: 2 });
                i += 2;
            } else {
                out.push(Block { start: i, size: 1 });
                i += 1;
            }
        }
        out
    }

    fn block_eigenvalues(&self, b: Block) -> Vec<Complex64> {
        let i = b.start;
        if b.size == 1 {
            return vec![Complex64::new(self.t[(i, i)], 0.0)];
        }
        let (a, bb, c, d) = (self.t[(i, i)], self.t[(i, i + 1)], self.t[(i + 1, i)], self.t[(i + 1, i + 1)]);
        let half_tr = 0.5 * (a + d);
        let disc = 0.25 * (a - d) * (a - d) + bb * c;
        if disc >= 0.0 {
            let r = disc.sqrt();
            vec![Complex64::new(half_tr + r, 0.0), Complex64::new(half_tr - r, 0.0)]
        } else {
            let r = (-disc).sqrt();
            vec![Complex64::new(half_tr, r), Complex64::new(half_tr, -r)]
        }
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.blocks().into_iter().flat_map(|b| self.block_eigenvalues(b)).collect()
    }

    /// Swaps the adjacent diagonal blocks starting at `j` (sizes `p`, `q`)
    /// with an orthogonal similarity.
    fn swap_blocks(&mut self, j: usize, p: usize, q: usize) -> Result<()> {
        let k = p + q;
        let a11 = self.t.view((j, j), (p, p)).clone_owned();
        let a12 = self.t.view((j, j + p), (p, q)).clone_owned();
        let a22 = self.t.view((j + p, j + p), (q, q)).clone_owned();

        // A11·X − X·A22 = A12 in Kronecker form (column-major vec).
        let mut kron = DMatrix::<f64>::zeros(p * q, p * q);
        for c in 0..q {
            for r in 0..p {
                let row = c * p + r;
                for rr in 0..p {
                    kron[(row, c * p + rr)] += a11[(r, rr)];
                }
                for cc in 0..q {
                    kron[(row, cc * p + r)] -= a22[(cc, c)];
                }
            }
        }
        let rhs = DVector::from_iterator(p * q, a12.iter().copied());
        let x = kron
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("Schur block swap: blocks share an eigenvalue".into()))?;

        // Range of [−X; I] is invariant with the spectrum of A22.
        let mut basis = DMatrix::<f64>::zeros(k, k);
        for c in 0..q {
            for r in 0..p {
                basis[(r, c)] = -x[c * p + r];
            }
            basis[(p + c, c)] = 1.0;
        }
        for c in 0..p {
            basis[(c, q + c)] = 1.0;
        }
        let qmat = basis.qr().q();

        let n = self.dim();
        let rows = self.t.view((j, 0), (k, n)).clone_owned();
        self.t.view_mut((j, 0), (k, n)).copy_from(&(qmat.transpose() * rows));
        let cols = self.t.view((0, j), (n, k)).clone_owned();
        self.t.view_mut((0, j), (n, k)).copy_from(&(cols * &qmat));
        let zc = self.z.view((0, j), (n, k)).clone_owned();
        self.z.view_mut((0, j), (n, k)).copy_from(&(zc * &qmat));

        for r in (j + q)..(j + k) {
            for c in j..(j + q) {
                self.t[(r, c)] = 0.0;
            }
        }
        if q == 2 {
            self.keep_pair(j);
        }
        if p == 2 {
            self.keep_pair(j + q);
        }
        Ok(())
    }

    /// A 2×2 block holding a complex pair must keep a nonzero subdiagonal so
    /// that later block scans still see it as one block.
    fn keep_pair(&mut self, i: usize) {
        if self.t[(i + 1, i)] == 0.0 {
            self.t[(i + 1, i)] = f64::MIN_POSITIVE;
        }
    }

    /// Reorders the factorization so that every eigenvalue accepted by
    /// `select` occupies the leading diagonal blocks. Returns how many
    /// eigenvalues (counted with multiplicity) were selected.
    pub fn reorder<F: Fn(Complex64) -> bool>(&mut self, select: F) -> Result<usize> {
        let mut blocks = self.blocks();
        let mut dest = 0usize; // index into `blocks` of the next slot to fill
        let mut selected = 0usize;
        let mut bi = 0usize;
        while bi < blocks.len() {
            let blk = blocks[bi];
            let eig = self.block_eigenvalues(blk)[0];
            if select(eig) {
                selected += blk.size;
                let mut cur = bi;
                while cur > dest {
                    let prev = blocks[cur - 1];
                    let moving = blocks[cur];
                    self.swap_blocks(prev.start, prev.size, moving.size)?;
                    blocks[cur - 1] = Block { start: prev.start, size: moving.size };
                    blocks[cur] = Block { start: prev.start + moving.size, size: prev.size };
                    cur -= 1;
                }
                dest += 1;
            }
            bi += 1;
        }
        Ok(selected)
    }
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    Ok(RealSchur::new(m)?.eigenvalues())
}

/// Largest real part of the eigenvalues of `m`.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Largest eigenvalue modulus of `m`.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    Ok(eigenvalues(m)?.iter().map(|l| l.norm()).fold(0.0, f64::max))
}

/// True iff every eigenvalue of `m` has real part `< −margin`.
pub fn is_hurwitz(m: &DMatrix<f64>, margin: f64) -> Result<bool> {
    if m.nrows() == 0 {
        return Ok(true);
    }
    Ok(spectral_abscissa(m)? < -margin)
}

/// Solves `Fᵀ·X + X·F = C` by a Bartels–Stewart sweep on the complex Schur
/// form of `F`.
pub fn solve_lyapunov(f: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = f.nrows();
    if !f.is_square() || c.shape() != (n, n) {
        return Err(Error::DimensionMismatch("Lyapunov operands must be square and equal-sized".into()));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let fc: DMatrix<Complex64> = f.map(|v| Complex64::new(v, 0.0));
    let schur = Schur::try_new(fc, f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::Numerical("complex QR iteration did not converge".into()))?;
    let (u, t) = schur.unpack();
    let cc: DMatrix<Complex64> = c.map(|v| Complex64::new(v, 0.0));
    let rhs = u.adjoint() * cc * &u;

    // Tᴴ·Y + Y·T = rhs, T upper triangular.
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    let scale = t.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1.0);
    for i in 0..n {
        for j in 0..n {
            let mut acc = rhs[(i, j)];
            for k in 0..i {
                acc -= t[(k, i)].conj() * y[(k, j)];
            }
            for k in 0..j {
                acc -= y[(i, k)] * t[(k, j)];
            }
            let denom = t[(i, i)].conj() + t[(j, j)];
            if denom.norm() <= 1e3 * f64::EPSILON * scale {
                return Err(Error::Numerical(
                    "Lyapunov operator is singular (eigenvalues symmetric about the imaginary axis)".into(),
                ));
            }
            y[(i, j)] = acc / denom;
        }
    }
    let x = &u * y * u.adjoint();
    Ok(x.map(|v| v.re))
}

/// Numerical rank of a complex matrix by singular values.
fn complex_rank(m: &DMatrix<Complex64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax.max(1.0)).count()
}

/// PBH test: `rank [λI − A, B] = n` for every eigenvalue λ of A with `Re λ ≥ 0`.
pub fn is_stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>, rel_tol: f64) -> Result<bool> {
    let n = a.nrows();
    if b.nrows() != n {
        return Err(Error::DimensionMismatch("stabilizability: B row count differs from A".into()));
    }
    for lambda in eigenvalues(a)? {
        if lambda.re < 0.0 {
            continue;
        }
        let mut pbh = DMatrix::<Complex64>::zeros(n, n + b.ncols());
        for r in 0..n {
            for c in 0..n {
                pbh[(r, c)] = -Complex64::new(a[(r, c)], 0.0);
            }
            pbh[(r, r)] += lambda;
            for c in 0..b.ncols() {
                pbh[(r, n + c)] = Complex64::new(b[(r, c)], 0.0);
            }
        }
        if complex_rank(&pbh, rel_tol) < n {
            return Ok(false);
        }
    }
    Ok(true)
}

/// PBH detectability of `(A, C)`: stabilizability of `(Aᵀ, Cᵀ)`.
pub fn is_detectable(a: &DMatrix<f64>, c: &DMatrix<f64>, rel_tol: f64) -> Result<bool> {
    is_stabilizable(&a.transpose(), &c.transpose(), rel_tol)
}

/// Rank of the controllability matrix `[B, AB, …, Aⁿ⁻¹B]`.
pub fn controllability_rank(a: &DMatrix<f64>, b: &DMatrix<f64>) -> usize {
    let n = a.nrows();
    let m = b.ncols();
    let mut ctrb = DMatrix::zeros(n, n * m);
    let mut blk = b.clone();
    for k in 0..n {
        ctrb.view_mut((0, k * m), (n, m)).copy_from(&blk);
        blk = a * blk;
    }
    let sv = ctrb.svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > 1e-10 * smax.max(1.0)).count()
}
