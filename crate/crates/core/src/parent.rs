//! Parent Hamiltonians obtained from detailed-balance Markov generators.
//!
//! The similarity transform H = n (I - e^{-beta H_c/2} M e^{beta H_c/2})
//! produces a real symmetric, frustration-free operator whose ground state is
//! the Gibbs vector and whose spectrum is n(1 - lambda) for every eigenvalue
//! lambda of the generator. The transform is evaluated entrywise on the
//! sparse pattern of M and symmetrized by averaging with the transpose to
//! remove last-digit noise.

use crate::linalg::{
    cg_deflated, dense_eigh, dense_eigvals, lanczos_lowest, CsrMatrix, LinalgError, SparseSym,
};
use crate::markov::MarkovGenerator;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParentError {
    #[error("generator violates detailed balance (residual {0:.3e})")]
    DetailedBalance(f64),
    #[error("sector basis is not an isometry (max deviation {0:.3e})")]
    NotIsometric(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("dense gap method limited to dimension {limit}, got {dim}")]
    TooLargeForDense { dim: usize, limit: usize },
}

/// Which symmetry-reduced basis a Hamiltonian lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectorTag {
    Full,
    ZeroMomentum,
    PermutationSymmetric,
    EvenFermionParity,
}

/// Real symmetric operator annihilating a Gibbs vector.
#[derive(Debug, Clone)]
pub struct ParentHamiltonian {
    pub matrix: SparseSym,
    pub beta: f64,
    /// Extensivity prefactor n of the similarity transform.
    pub scale: usize,
    pub sector: SectorTag,
    /// The zero-energy ground vector, when known analytically.
    pub ground: Option<Vec<f64>>,
}

/// Detailed-balance residual above which the transform is refused.
pub const BUILD_TOL: f64 = 1e-12;

/// Tolerance used for the isometry check of sector bases.
pub const ISOMETRY_TOL: f64 = 1e-12;

/// Dense eigensolves are allowed up to this dimension.
pub const DENSE_GAP_LIMIT: usize = 6000;

impl ParentHamiltonian {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Max-norm of H applied to the stored ground vector.
    pub fn frustration_residual(&self) -> Option<f64> {
        let g = self.ground.as_ref()?;
        let mut out = vec![0.0; self.dim()];
        self.matrix.apply(g, &mut out);
        Some(out.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    }

    /// Write the matrix as `row col value` lines, 17 significant digits.
    pub fn write_coordinate_file<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let m = &self.matrix.csr;
        for r in 0..m.dim {
            for k in m.row_ptr[r]..m.row_ptr[r + 1] {
                writeln!(w, "{} {} {:.16e}", r, m.cols[k], m.vals[k])?;
            }
        }
        Ok(())
    }
}

/// Build the parent Hamiltonian of a generator:
/// H(s, s') = n [delta_{ss'} - e^{beta (H_c(s') - H_c(s))/2} M(s, s')].
pub fn build_parent(gen: &MarkovGenerator, scale: usize) -> Result<ParentHamiltonian, ParentError> {
    let res = gen.detailed_balance_residual();
    if res > BUILD_TOL {
        return Err(ParentError::DetailedBalance(res));
    }
    let sym_m = gen.symmetrized();
    let n = scale as f64;
    let dim = sym_m.dim;
    let mut trip: Vec<(u32, u32, f64)> = Vec::with_capacity(sym_m.nnz() + dim);
    for r in 0..dim {
        let mut has_diag = false;
        for k in sym_m.row_ptr[r]..sym_m.row_ptr[r + 1] {
            let c = sym_m.cols[k] as usize;
            let v = -n * sym_m.vals[k];
            if c == r {
                trip.push((r as u32, c as u32, v + n));
                has_diag = true;
            } else {
                trip.push((r as u32, c as u32, v));
            }
        }
        if !has_diag {
            trip.push((r as u32, r as u32, n));
        }
    }
    let raw = CsrMatrix::from_triplets(dim, &mut trip);
    let matrix = SparseSym::new(raw.symmetrize(), 1e-9)?;
    Ok(ParentHamiltonian {
        matrix,
        beta: gen.beta,
        scale,
        sector: SectorTag::Full,
        ground: Some(gen.gibbs_amplitudes()),
    })
}

/// Max deviation between sorted eigenvalues of H and n(1 - lambda) over the
/// symmetrized generator spectrum. Dense solves on both sides.
pub fn spectrum_correspondence_check(h: &ParentHamiltonian, gen: &MarkovGenerator) -> f64 {
    assert_eq!(h.dim(), gen.dim(), "operators must share a basis");
    let ev_h = dense_eigvals(&h.matrix.to_dense());
    let lam = dense_eigvals(&gen.symmetrized().symmetrize().to_dense());
    let n = h.scale as f64;
    let mut mapped: Vec<f64> = lam.iter().map(|l| n * (1.0 - l)).collect();
    mapped.sort_by(f64::total_cmp);
    ev_h.iter()
        .zip(&mapped)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy)]
pub enum GapMethod {
    Dense,
    /// Restarted Krylov on the operator, deflating the known ground vector.
    Iterative,
    /// Dense below the crossover, iterative above.
    Auto,
}

/// Crossover used by [`GapMethod::Auto`].
pub const AUTO_DENSE_LIMIT: usize = 1200;

#[derive(Debug, Clone, Copy)]
pub struct GapReport {
    pub ground_energy: f64,
    pub gap: f64,
    /// States within `degeneracy_tol` of the ground energy.
    pub degeneracy: usize,
    pub degeneracy_tol: f64,
}

/// Ground energy and gap. Iterative solves exploit the known zero-energy
/// ground vector for deflation; relative tolerance 1e-8.
pub fn gap(h: &ParentHamiltonian, method: GapMethod) -> Result<GapReport, ParentError> {
    let dim = h.dim();
    let deg_tol = 1e-8;
    let dense = match method {
        GapMethod::Dense => {
            if dim > DENSE_GAP_LIMIT {
                return Err(ParentError::TooLargeForDense {
                    dim,
                    limit: DENSE_GAP_LIMIT,
                });
            }
            true
        }
        GapMethod::Iterative => false,
        GapMethod::Auto => dim <= AUTO_DENSE_LIMIT,
    };
    if dense {
        let vals = dense_eigvals(&h.matrix.to_dense());
        let ground = vals[0];
        let gap = if vals.len() > 1 { vals[1] - vals[0] } else { 0.0 };
        let degeneracy = vals.iter().filter(|&&v| v - ground <= deg_tol).count();
        return Ok(GapReport {
            ground_energy: ground,
            gap,
            degeneracy,
            degeneracy_tol: deg_tol,
        });
    }
    // iterative route
    let apply = |x: &[f64], y: &mut [f64]| h.matrix.apply(x, y);
    match &h.ground {
        Some(g) => {
            let mut out = vec![0.0; dim];
            h.matrix.apply(g, &mut out);
            let ground_energy = crate::linalg::dot(g, &out);
            let (vals, _) = lanczos_lowest(dim, apply, 2, &[&g[..]], None, 1e-10, 120, 60)?;
            let gap = vals[0] - ground_energy;
            let degeneracy = 1 + vals.iter().filter(|&&v| v - ground_energy <= deg_tol).count();
            Ok(GapReport {
                ground_energy,
                gap,
                degeneracy,
                degeneracy_tol: deg_tol,
            })
        }
        None => {
            let (vals, vecs) = lanczos_lowest(dim, apply, 1, &[], None, 1e-10, 120, 60)?;
            let g = vecs.into_iter().next().unwrap();
            let (vals2, _) = lanczos_lowest(
                dim,
                |x: &[f64], y: &mut [f64]| h.matrix.apply(x, y),
                1,
                &[&g[..]],
                None,
                1e-10,
                120,
                60,
            )?;
            let gap = vals2[0] - vals[0];
            let degeneracy = if gap <= deg_tol { 2 } else { 1 };
            Ok(GapReport {
                ground_energy: vals[0],
                gap,
                degeneracy,
                degeneracy_tol: deg_tol,
            })
        }
    }
}

/// Lowest `k` eigenvalues via the same machinery (dense or deflated Lanczos).
pub fn lowest_eigenvalues(h: &ParentHamiltonian, k: usize) -> Result<Vec<f64>, ParentError> {
    let dim = h.dim();
    if dim <= AUTO_DENSE_LIMIT {
        let vals = dense_eigvals(&h.matrix.to_dense());
        return Ok(vals.into_iter().take(k).collect());
    }
    let (vals, _) = lanczos_lowest(
        dim,
        |x: &[f64], y: &mut [f64]| h.matrix.apply(x, y),
        k,
        &[],
        h.ground.as_deref(),
        1e-10,
        160,
        60,
    )?;
    Ok(vals)
}

/// An isometry W from a reduced sector onto the full basis, stored as one
/// (class, weight) pair per full-basis state: W(s, class(s)) = weight(s).
#[derive(Debug, Clone)]
pub struct SectorBasis {
    pub tag: SectorTag,
    pub dim: usize,
    /// Sector index of each full-basis state.
    pub class_of: Vec<u32>,
    /// W entries; class columns must have unit norm.
    pub weight: Vec<f64>,
}

impl SectorBasis {
    /// Build from equivalence classes of equal weight: each full-basis state
    /// belongs to one class, with weight 1/sqrt(|class|). The sector dimension
    /// is the number of distinct classes.
    pub fn from_classes(tag: SectorTag, class_of: Vec<u32>) -> Self {
        let dim = class_of.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
        let mut counts = vec![0usize; dim];
        for &c in &class_of {
            counts[c as usize] += 1;
        }
        let weight = class_of
            .iter()
            .map(|&c| 1.0 / (counts[c as usize] as f64).sqrt())
            .collect();
        SectorBasis {
            tag,
            dim,
            class_of,
            weight,
        }
    }

    /// Max deviation of W^T W from the identity.
    pub fn isometry_deviation(&self) -> f64 {
        let mut col_norms = vec![0.0f64; self.dim];
        for (c, w) in self.class_of.iter().zip(&self.weight) {
            col_norms[*c as usize] += w * w;
        }
        col_norms
            .iter()
            .map(|n| (n - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Project a full-basis vector: (W^T v).
    pub fn project_vector(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for i in 0..v.len() {
            out[self.class_of[i] as usize] += self.weight[i] * v[i];
        }
        out
    }
}

/// H_sector = W^T H W for a class-structured isometry.
pub fn project_sector(
    h: &ParentHamiltonian,
    basis: &SectorBasis,
) -> Result<ParentHamiltonian, ParentError> {
    let dev = basis.isometry_deviation();
    if dev > ISOMETRY_TOL {
        return Err(ParentError::NotIsometric(dev));
    }
    assert_eq!(basis.class_of.len(), h.dim());
    let m = &h.matrix.csr;
    let mut trip: Vec<(u32, u32, f64)> = Vec::with_capacity(m.nnz());
    for r in 0..m.dim {
        let cr = basis.class_of[r];
        let wr = basis.weight[r];
        for k in m.row_ptr[r]..m.row_ptr[r + 1] {
            let c = m.cols[k] as usize;
            trip.push((cr, basis.class_of[c], wr * basis.weight[c] * m.vals[k]));
        }
    }
    let raw = CsrMatrix::from_triplets(basis.dim, &mut trip);
    let matrix = SparseSym::new(raw.symmetrize(), 1e-9)?;
    let ground = h.ground.as_ref().map(|g| {
        let mut p = basis.project_vector(g);
        let n = crate::linalg::norm(&p);
        if n > 0.0 {
            crate::linalg::scale(&mut p, 1.0 / n);
        }
        p
    });
    Ok(ParentHamiltonian {
        matrix,
        beta: h.beta,
        scale: h.scale,
        sector: basis.tag,
        ground,
    })
}

/// Metric-style resolvent application: x = (H - e0)^{-1} Q b with Q the
/// projector orthogonal to `ground` (and shifted by `e0`). Used by the
/// adiabatic engine; lives here so both modules share one implementation.
pub fn resolvent_apply(
    h: &SparseSym,
    e0: f64,
    ground: &[f64],
    b: &[f64],
    tol: f64,
) -> Result<Vec<f64>, LinalgError> {
    cg_deflated(
        h.dim(),
        |x, y| h.apply(x, y),
        e0,
        b,
        &[ground],
        tol,
        100_000,
    )
}

/// Dense zero-momentum / parity style projector built from orbits of a basis
/// permutation group; convenience for tests on small systems.
pub fn classes_from_permutations<F>(dim: usize, orbit_of: F) -> Vec<u32>
where
    F: Fn(usize) -> usize,
{
    // orbit_of maps a basis index to a canonical representative index
    let mut class_of = vec![u32::MAX; dim];
    let mut reps: Vec<usize> = Vec::new();
    for i in 0..dim {
        let rep = orbit_of(i);
        if class_of[rep] == u32::MAX {
            class_of[rep] = reps.len() as u32;
            reps.push(rep);
        }
        class_of[i] = class_of[rep];
    }
    class_of
}

/// Ground state of a dense symmetric matrix (helper for small oracles).
pub fn dense_ground(h: &SparseSym) -> (f64, Vec<f64>) {
    let (vals, vecs) = dense_eigh(&h.to_dense());
    (vals[0], vecs.column(0).iter().copied().collect())
}
