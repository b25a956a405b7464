//! Sparse matrices and the iterative kernels used throughout the crate.
//!
//! Everything operates on real symmetric operators. Complex arithmetic only
//! enters through time evolution, where the propagated state is complex but
//! the Hamiltonian stays real.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("iterative solver failed to converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),
}

/// Compressed sparse row matrix. Row-major; used both for the (generally
/// nonsymmetric) Markov generators and, via [`SparseSym`], for Hamiltonians.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub dim: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    /// Assemble from (row, col, value) triplets. Duplicate entries are summed.
    pub fn from_triplets(dim: usize, triplets: &mut Vec<(u32, u32, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut cols: Vec<u32> = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut rows: Vec<u32> = Vec::with_capacity(triplets.len());
        for &(r, c, v) in triplets.iter() {
            if rows.last() == Some(&r) && cols.last() == Some(&c) {
                *vals.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                cols.push(c);
                vals.push(v);
            }
        }
        let mut row_ptr = vec![0usize; dim + 1];
        for &r in &rows {
            row_ptr[r as usize + 1] += 1;
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// y = A x
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        for r in 0..self.dim {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            y[r] = acc;
        }
    }

    /// y = Aᵀ x (used for left eigenvector / distribution push-forward).
    pub fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        y.fill(0.0);
        for r in 0..self.dim {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.cols[k] as usize] += self.vals[k] * xr;
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.cols[k] as usize)] += self.vals[k];
            }
        }
        m
    }

    pub fn max_abs_asymmetry(&self) -> f64 {
        // look up (c, r) for every stored (r, c); absent entries count as 0
        let mut worst = 0.0f64;
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[k] as usize;
                let v = self.vals[k];
                let vt = self.get(c, r).unwrap_or(0.0);
                worst = worst.max((v - vt).abs());
            }
        }
        worst
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        let cols = &self.cols[lo..hi];
        cols.binary_search(&(c as u32))
            .ok()
            .map(|k| self.vals[lo + k])
    }

    /// Symmetrize in place by averaging with the transpose.
    pub fn symmetrize(&self) -> CsrMatrix {
        let mut trip = Vec::with_capacity(2 * self.nnz());
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[k];
                trip.push((r as u32, c, 0.5 * self.vals[k]));
                trip.push((c, r as u32, 0.5 * self.vals[k]));
            }
        }
        CsrMatrix::from_triplets(self.dim, &mut trip)
    }
}

/// A real symmetric sparse matrix. The full pattern is stored (both
/// triangles) so that matrix-vector products are a single CSR sweep.
#[derive(Debug, Clone)]
pub struct SparseSym {
    pub csr: CsrMatrix,
}

impl SparseSym {
    /// Wrap a CSR matrix, verifying symmetry to `tol`.
    pub fn new(csr: CsrMatrix, tol: f64) -> Result<Self, LinalgError> {
        let asym = csr.max_abs_asymmetry();
        if asym > tol {
            return Err(LinalgError::NotSymmetric(asym));
        }
        Ok(SparseSym { csr })
    }

    /// Wrap without checking (construction is known symmetric).
    pub fn new_unchecked(csr: CsrMatrix) -> Self {
        SparseSym { csr }
    }

    pub fn dim(&self) -> usize {
        self.csr.dim
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.csr.apply(x, y)
    }

    /// y = A x for a complex vector (A real).
    pub fn apply_c64(&self, x: &[Complex64], y: &mut [Complex64]) {
        let csr = &self.csr;
        for r in 0..csr.dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in csr.row_ptr[r]..csr.row_ptr[r + 1] {
                acc += x[csr.cols[k] as usize] * csr.vals[k];
            }
            y[r] = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.csr.to_dense()
    }
}

// ---------------------------------------------------------------------------
// small vector helpers

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(a: &mut [f64], s: f64) {
    for v in a.iter_mut() {
        *v *= s;
    }
}

pub fn cdot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn cnorm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Project out the components of `v` along each (orthonormal) vector in `basis`.
pub fn deflate(v: &mut [f64], basis: &[&[f64]]) {
    for b in basis {
        let c = dot(b, v);
        axpy(-c, b, v);
    }
}

// ---------------------------------------------------------------------------
// dense eigensolves

/// Full eigendecomposition of a dense symmetric matrix, eigenvalues ascending.
pub fn dense_eigh(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (j, &i) in order.iter().enumerate() {
        vecs.set_column(j, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Eigenvalues only, ascending.
pub fn dense_eigvals(m: &DMatrix<f64>) -> Vec<f64> {
    let mut vals: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

// ---------------------------------------------------------------------------
// Lanczos with full reorthogonalization

/// Lowest `k` eigenpairs of a symmetric operator, orthogonal to `deflation`.
///
/// Full reorthogonalization against the Krylov basis and the deflation
/// vectors; restarts with the current Ritz vector until the residual of the
/// lowest requested pair drops below `tol * |lambda_max_estimate|`.
pub fn lanczos_lowest<F>(
    dim: usize,
    mut apply: F,
    k: usize,
    deflation: &[&[f64]],
    start: Option<&[f64]>,
    tol: f64,
    max_basis: usize,
    max_restarts: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), LinalgError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    assert!(k >= 1 && k <= dim);
    let m_max = max_basis.min(dim).max(k + 2);
    let mut v0: Vec<f64> = match start {
        Some(s) => s.to_vec(),
        None => (0..dim)
            .map(|i| ((i as f64) * 0.7368 + 0.1).sin() + 0.5)
            .collect(),
    };
    deflate(&mut v0, deflation);
    let n0 = norm(&v0);
    if n0 < 1e-300 {
        // start vector lies in the deflated space; fall back to a generic one
        v0 = (0..dim).map(|i| ((i as f64) * 1.234 + 0.3).cos()).collect();
        deflate(&mut v0, deflation);
    }
    let n1 = norm(&v0);
    scale(&mut v0, 1.0 / n1);

    let mut scratch = vec![0.0; dim];
    let mut scale_est = 1.0f64;

    for restart in 0..max_restarts {
        let mut basis: Vec<Vec<f64>> = vec![v0.clone()];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();

        for j in 0..m_max {
            apply(&basis[j], &mut scratch);
            let alpha = dot(&basis[j], &scratch);
            alphas.push(alpha);
            // w = A v_j - alpha v_j - beta v_{j-1}, then full reorth
            axpy(-alpha, &basis[j], &mut scratch);
            if j > 0 {
                let beta_prev = betas[j - 1];
                axpy(-beta_prev, &basis[j - 1], &mut scratch);
            }
            for b in basis.iter() {
                let c = dot(b, &scratch);
                axpy(-c, b, &mut scratch);
            }
            deflate(&mut scratch, deflation);
            let beta = norm(&scratch);
            scale_est = scale_est.max(alpha.abs() + beta);
            if beta < 1e-13 * scale_est || j + 1 == m_max || basis.len() == dim {
                break;
            }
            betas.push(beta);
            let mut next = scratch.clone();
            scale(&mut next, 1.0 / beta);
            basis.push(next);
        }

        let m = alphas.len();
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alphas[i];
            if i + 1 < m {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let (tvals, tvecs) = dense_eigh(&t);

        let kk = k.min(m);
        let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(kk);
        for j in 0..kk {
            let mut v = vec![0.0; dim];
            for (i, b) in basis.iter().enumerate() {
                axpy(tvecs[(i, j)], b, &mut v);
            }
            // re-project: rounding can reintroduce deflated components
            deflate(&mut v, deflation);
            let nv = norm(&v);
            scale(&mut v, 1.0 / nv);
            vecs.push(v);
        }

        // residual of the lowest pair decides convergence
        apply(&vecs[0], &mut scratch);
        axpy(-tvals[0], &vecs[0], &mut scratch);
        deflate(&mut scratch, deflation);
        let res = norm(&scratch);
        if res <= tol * scale_est.max(1e-30) && m >= kk {
            return Ok((tvals[..kk].to_vec(), vecs));
        }
        if restart + 1 == max_restarts {
            return Err(LinalgError::NoConvergence {
                iterations: (restart + 1) * m_max,
                residual: res,
            });
        }
        v0 = vecs[0].clone();
    }
    unreachable!()
}

// ---------------------------------------------------------------------------
// deflated conjugate gradient

/// Solve (A - shift) x = b restricted to the orthogonal complement of
/// `deflation` (A - shift must be positive definite there). `b` is projected
/// onto the complement first.
pub fn cg_deflated<F>(
    dim: usize,
    mut apply: F,
    shift: f64,
    b: &[f64],
    deflation: &[&[f64]],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, LinalgError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let mut rhs = b.to_vec();
    deflate(&mut rhs, deflation);
    let bnorm = norm(&rhs);
    if bnorm == 0.0 {
        return Ok(vec![0.0; dim]);
    }
    let mut x = vec![0.0; dim];
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut ap = vec![0.0; dim];
    let mut rs = dot(&r, &r);
    for it in 0..max_iter {
        apply(&p, &mut ap);
        if shift != 0.0 {
            axpy(-shift, &p, &mut ap);
        }
        deflate(&mut ap, deflation);
        let denom = dot(&p, &ap);
        if denom <= 0.0 {
            return Err(LinalgError::NoConvergence {
                iterations: it,
                residual: rs.sqrt() / bnorm,
            });
        }
        let alpha = rs / denom;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        // periodic re-deflation controls rounding drift
        if it % 32 == 31 {
            deflate(&mut r, deflation);
        }
        let rs_new = dot(&r, &r);
        if rs_new.sqrt() <= tol * bnorm {
            deflate(&mut x, deflation);
            return Ok(x);
        }
        let beta = rs_new / rs;
        rs = rs_new;
        for i in 0..dim {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(LinalgError::NoConvergence {
        iterations: max_iter,
        residual: rs.sqrt() / bnorm,
    })
}

// ---------------------------------------------------------------------------
// Krylov propagator exp(-i H dt) psi

/// Apply exp(-i dt H) to `psi` for a real symmetric operator, by adaptive
/// Lanczos stepping. The substep is shortened until the standard a-posteriori
/// estimate (trailing Krylov component) is below `tol` per substep.
pub fn expm_apply<F>(dim: usize, mut apply: F, dt: f64, psi: &mut [Complex64], tol: f64)
where
    F: FnMut(&[Complex64], &mut [Complex64]),
{
    const M_MAX: usize = 40;
    if dt == 0.0 {
        return;
    }
    let mut remaining = dt;
    let mut scratch = vec![Complex64::new(0.0, 0.0); dim];
    // guard against pathological loops; generous for any sane spectrum
    for _ in 0..1_000_000 {
        if remaining == 0.0 {
            return;
        }
        let beta0 = cnorm(psi);
        if beta0 == 0.0 {
            return;
        }
        let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(M_MAX);
        let mut v0 = psi.to_vec();
        for v in v0.iter_mut() {
            *v /= beta0;
        }
        basis.push(v0);
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        let mut breakdown = false;
        for j in 0..M_MAX {
            apply(&basis[j], &mut scratch);
            let alpha = cdot(&basis[j], &scratch).re;
            alphas.push(alpha);
            for (s, b) in scratch.iter_mut().zip(&basis[j]) {
                *s -= alpha * b;
            }
            if j > 0 {
                let bp = betas[j - 1];
                for (s, b) in scratch.iter_mut().zip(&basis[j - 1]) {
                    *s -= bp * b;
                }
            }
            // full reorthogonalization: basis stays small
            for b in basis.iter() {
                let c = cdot(b, &scratch);
                for (s, bi) in scratch.iter_mut().zip(b) {
                    *s -= c * bi;
                }
            }
            let beta = cnorm(&scratch);
            if beta < 1e-14 * (alpha.abs() + 1.0) || j + 1 == M_MAX || basis.len() == dim {
                if beta < 1e-14 * (alpha.abs() + 1.0) {
                    breakdown = true;
                }
                break;
            }
            betas.push(beta);
            let mut next = scratch.clone();
            for v in next.iter_mut() {
                *v /= beta;
            }
            basis.push(next);
        }
        let m = alphas.len();
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alphas[i];
            if i + 1 < m {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let (tvals, tvecs) = dense_eigh(&t);

        // choose the substep: exact within the subspace, the trailing
        // component estimates the leakage error for a candidate tau
        let err_for = |tau: f64| -> f64 {
            if breakdown || m == dim {
                return 0.0;
            }
            let mut last = Complex64::new(0.0, 0.0);
            for j in 0..m {
                let phase = Complex64::from_polar(1.0, -tvals[j] * tau);
                last += tvecs[(m - 1, j)] * phase * tvecs[(0, j)];
            }
            let beta_m = if betas.len() == m { betas[m - 1] } else { *betas.last().unwrap_or(&0.0) };
            (beta_m * last.norm()).abs()
        };
        let mut tau = remaining;
        let sign = remaining.signum();
        for _ in 0..60 {
            if err_for(tau) <= tol {
                break;
            }
            tau *= 0.5;
        }
        // w = beta0 * V exp(-i T tau) e1
        let mut coeff = vec![Complex64::new(0.0, 0.0); m];
        for j in 0..m {
            let phase = Complex64::from_polar(1.0, -tvals[j] * tau);
            let cj = phase * tvecs[(0, j)] * beta0;
            for i in 0..m {
                coeff[i] += tvecs[(i, j)] * cj;
            }
        }
        for p in psi.iter_mut() {
            *p = Complex64::new(0.0, 0.0);
        }
        for (i, b) in basis.iter().enumerate() {
            let ci = coeff[i];
            for (p, bi) in psi.iter_mut().zip(b) {
                *p += ci * bi;
            }
        }
        remaining -= tau;
        if remaining * sign <= 0.0 {
            return;
        }
    }
    panic!("expm_apply: substepping failed to terminate");
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn small_sym() -> SparseSym {
        // 4x4 symmetric with known spectrum
        let mut t = vec![
            (0u32, 0u32, 2.0),
            (1, 1, 3.0),
            (2, 2, 5.0),
            (3, 3, 7.0),
            (0, 1, -1.0),
            (1, 0, -1.0),
            (2, 3, 0.5),
            (3, 2, 0.5),
        ];
        SparseSym::new(CsrMatrix::from_triplets(4, &mut t), 1e-14).unwrap()
    }

    #[test]
    fn csr_apply_matches_dense() {
        let a = small_sym();
        let d = a.to_dense();
        let x = vec![1.0, -2.0, 0.5, 3.0];
        let mut y = vec![0.0; 4];
        a.apply(&x, &mut y);
        let yd = &d * DVector::from_vec(x.clone());
        for i in 0..4 {
            assert!((y[i] - yd[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn duplicate_triplets_accumulate() {
        let mut t = vec![(0u32, 1u32, 1.0), (0, 1, 2.0), (1, 0, 3.0)];
        let m = CsrMatrix::from_triplets(2, &mut t);
        assert_eq!(m.get(0, 1), Some(3.0));
        assert_eq!(m.get(1, 0), Some(3.0));
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn lanczos_matches_dense_eig() {
        let a = small_sym();
        let dense_vals = dense_eigvals(&a.to_dense());
        let (vals, vecs) = lanczos_lowest(
            4,
            |x, y| a.apply(x, y),
            2,
            &[],
            None,
            1e-12,
            8,
            40,
        )
        .unwrap();
        assert!((vals[0] - dense_vals[0]).abs() < 1e-10);
        assert!((vals[1] - dense_vals[1]).abs() < 1e-10);
        // residual check
        let mut r = vec![0.0; 4];
        a.apply(&vecs[0], &mut r);
        axpy(-vals[0], &vecs[0], &mut r);
        assert!(norm(&r) < 1e-9);
    }

    #[test]
    fn lanczos_deflation_skips_ground() {
        let a = small_sym();
        let (vals, vecs) = lanczos_lowest(4, |x, y| a.apply(x, y), 1, &[], None, 1e-12, 8, 40).unwrap();
        let g = vecs[0].clone();
        let (vals2, _) =
            lanczos_lowest(4, |x, y| a.apply(x, y), 1, &[&g], None, 1e-12, 8, 40).unwrap();
        let dense_vals = dense_eigvals(&a.to_dense());
        assert!((vals[0] - dense_vals[0]).abs() < 1e-10);
        assert!((vals2[0] - dense_vals[1]).abs() < 1e-9);
    }

    #[test]
    fn cg_solves_shifted_system() {
        let a = small_sym();
        let b = vec![1.0, 2.0, -1.0, 0.5];
        let x = cg_deflated(4, |x, y| a.apply(x, y), 0.0, &b, &[], 1e-13, 200).unwrap();
        let mut ax = vec![0.0; 4];
        a.apply(&x, &mut ax);
        for i in 0..4 {
            assert!((ax[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn expm_matches_dense_exponential() {
        let a = small_sym();
        let d = a.to_dense();
        let (vals, vecs) = dense_eigh(&d);
        let psi0: Vec<Complex64> = vec![
            Complex64::new(0.5, 0.0),
            Complex64::new(-0.5, 0.2),
            Complex64::new(0.1, 0.0),
            Complex64::new(0.0, 0.7),
        ];
        let dt = 2.37;
        // exact: V exp(-i E dt) V^T psi
        let mut exact = vec![Complex64::new(0.0, 0.0); 4];
        for j in 0..4 {
            let mut c = Complex64::new(0.0, 0.0);
            for i in 0..4 {
                c += vecs[(i, j)] * psi0[i];
            }
            c *= Complex64::from_polar(1.0, -vals[j] * dt);
            for i in 0..4 {
                exact[i] += vecs[(i, j)] * c;
            }
        }
        let mut psi = psi0.clone();
        expm_apply(4, |x, y| a.apply_c64(x, y), dt, &mut psi, 1e-12);
        for i in 0..4 {
            assert!((psi[i] - exact[i]).norm() < 1e-10, "{:?} vs {:?}", psi[i], exact[i]);
        }
    }

    #[test]
    fn expm_preserves_norm_on_larger_operator() {
        // tridiagonal 200-dim, dt large enough to force substepping
        let n = 200;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i as u32, i as u32, (i as f64) * 0.1));
            if i + 1 < n {
                t.push((i as u32, (i + 1) as u32, -1.0));
                t.push(((i + 1) as u32, i as u32, -1.0));
            }
        }
        let a = SparseSym::new(CsrMatrix::from_triplets(n, &mut t), 1e-14).unwrap();
        let mut psi: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new((-((i as f64) - 100.0).powi(2) / 50.0).exp(), 0.0))
            .collect();
        let nrm = cnorm(&psi);
        for p in psi.iter_mut() {
            *p /= nrm;
        }
        expm_apply(n, |x, y| a.apply_c64(x, y), 35.0, &mut psi, 1e-10);
        assert!((cnorm(&psi) - 1.0).abs() < 1e-9);
    }
}
