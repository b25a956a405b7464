//! Independent sets on the periodic chain: the constrained-flip model in the
//! zero-momentum sector.
//!
//! The parent Hamiltonian of the Metropolis chain takes the projected-flip
//! form H = sum_i [(Ve - 3 Vg) n_i + Vg n_{i-1} n_{i+1}
//! - Omega (1 - n_{i-1}) sigma^x_i (1 - n_{i+1})] + n Vg, acting on the
//! Fibonacci-counted space of independent sets. Translation invariance
//! reduces it to orbit representatives; the zero-momentum state built from
//! orbit o has weight sqrt(|o|) per member, which makes the projector an
//! isometry and the projected matrix elements sqrt(|o|/|o'|) sums.

use crate::adiabatic::{HamiltonianFamily, ParameterPath};
use crate::lattice::{enumerate_basis, ClassicalModel, Graph, LatticeError};
use crate::linalg::{CsrMatrix, SparseSym};
use crate::parent::{ParentHamiltonian, SectorTag};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IndepsetError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("chain length must be at least 4, got {0}")]
    TooShort(usize),
    #[error("unknown benchmark path id {0:?}")]
    UnknownPath(String),
}

/// Rotate an n-bit word left by one site.
fn rotate(bits: u64, n: usize) -> u64 {
    ((bits << 1) | (bits >> (n - 1))) & ((1u64 << n) - 1)
}

/// Canonical representative: minimum over all rotations.
fn canonical(bits: u64, n: usize) -> (u64, u32) {
    let mut min = bits;
    let mut x = bits;
    let mut period = 0u32;
    for step in 1..=n as u32 {
        x = rotate(x, n);
        if x == bits && period == 0 {
            period = step;
        }
        if x < min {
            min = x;
        }
    }
    let orbit_len = if period == 0 { n as u32 } else { period };
    (min, orbit_len)
}

/// Zero-momentum basis of translation orbits of independent sets.
#[derive(Debug, Clone)]
pub struct MomentumSectorBasis {
    pub n: usize,
    /// Lexicographically minimal representative per orbit, ascending.
    pub reps: Vec<u64>,
    pub orbit_len: Vec<u32>,
    index: HashMap<u64, u32>,
    /// Energies -popcount of each representative (unit weights).
    pub energies: Vec<f64>,
}

impl MomentumSectorBasis {
    pub fn build(n: usize) -> Result<Self, IndepsetError> {
        if n < 4 {
            return Err(IndepsetError::TooShort(n));
        }
        let model = ClassicalModel::wis_uniform(Graph::chain_periodic(n));
        let full = enumerate_basis(&model, crate::lattice::DEFAULT_BASIS_CAP)?;
        let mut seen: HashMap<u64, u32> = HashMap::new();
        let mut reps: Vec<u64> = Vec::new();
        let mut orbit_len: Vec<u32> = Vec::new();
        for c in &full {
            let (rep, olen) = canonical(c.bits, n);
            if rep == c.bits && !seen.contains_key(&rep) {
                seen.insert(rep, reps.len() as u32);
                reps.push(rep);
                orbit_len.push(olen);
            }
        }
        // full enumeration is ascending, so reps are already sorted
        let index = seen;
        let energies = reps.iter().map(|r| -(r.count_ones() as f64)).collect();
        Ok(MomentumSectorBasis {
            n,
            reps,
            orbit_len,
            index,
            energies,
        })
    }

    pub fn dim(&self) -> usize {
        self.reps.len()
    }

    pub fn index_of(&self, rep: u64) -> Option<usize> {
        self.index.get(&rep).map(|&i| i as usize)
    }

    /// Index of the Neel orbit (maximum independent sets), even n.
    pub fn neel_index(&self) -> Option<usize> {
        if self.n % 2 != 0 {
            return None;
        }
        let mut bits = 0u64;
        for i in (0..self.n).step_by(2) {
            bits |= 1 << i;
        }
        let (rep, _) = canonical(bits, self.n);
        self.index_of(rep)
    }

    /// Number of ground configurations of the classical model at T = 0
    /// (degeneracy of the zero-temperature Gibbs weight in the full basis).
    pub fn ground_configuration_count(&self) -> usize {
        let e_min = self
            .energies
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        self.reps
            .iter()
            .zip(&self.energies)
            .zip(&self.orbit_len)
            .filter(|((_, &e), _)| e == e_min)
            .map(|((_, _), &o)| o as usize)
            .sum()
    }

    /// Sector amplitudes of the Gibbs state at inverse temperature beta:
    /// psi(orbit) = sqrt(|orbit|) e^{-beta E/2} / sqrt(Z).
    pub fn gibbs_sector_vector(&self, beta: f64) -> Vec<f64> {
        if beta.is_infinite() {
            let e_min = self
                .energies
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            let mut v: Vec<f64> = self
                .energies
                .iter()
                .zip(&self.orbit_len)
                .map(|(&e, &o)| if e == e_min { (o as f64).sqrt() } else { 0.0 })
                .collect();
            let nrm = crate::linalg::norm(&v);
            crate::linalg::scale(&mut v, 1.0 / nrm);
            return v;
        }
        // log-sum-exp over orbits with multiplicity weights
        let log_terms: Vec<f64> = self
            .energies
            .iter()
            .zip(&self.orbit_len)
            .map(|(&e, &o)| -beta * e + (o as f64).ln())
            .collect();
        let log_z = crate::lattice::log_sum_exp(log_terms.iter().copied());
        self.log_terms_to_amplitudes(&log_terms, log_z)
    }

    fn log_terms_to_amplitudes(&self, log_terms: &[f64], log_z: f64) -> Vec<f64> {
        log_terms
            .iter()
            .map(|&t| (0.5 * (t - log_z)).exp())
            .collect()
    }
}

/// Couplings of the projected-flip Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PxpCouplings {
    pub omega: f64,
    pub v_e: f64,
    pub v_g: f64,
}

impl PxpCouplings {
    /// One-parameter family of the Metropolis construction:
    /// Ve = e^{-beta}, Omega = e^{-beta/2}, Vg = 1.
    pub fn family(beta: f64) -> Self {
        PxpCouplings {
            omega: (-beta / 2.0).exp(),
            v_e: (-beta).exp(),
            v_g: 1.0,
        }
    }
}

/// The three sector operators, cached per n and shared by all couplings.
#[derive(Debug, Clone)]
pub struct SectorOperators {
    pub basis: MomentumSectorBasis,
    /// Diagonal: total occupation.
    pub occupation: SparseSym,
    /// Diagonal: sum_i n_{i-1} n_{i+1}.
    pub next_nearest: SparseSym,
    /// Off-diagonal: sum_i (1-n_{i-1}) sigma^x_i (1-n_{i+1}) with orbit
    /// normalization sqrt(|o|/|o'|).
    pub flip: SparseSym,
    pub identity: SparseSym,
}

impl SectorOperators {
    pub fn build(n: usize) -> Result<Self, IndepsetError> {
        let basis = MomentumSectorBasis::build(n)?;
        let d = basis.dim();
        let mask = (1u64 << n) - 1;
        let mut occ_t: Vec<(u32, u32, f64)> = Vec::with_capacity(d);
        let mut nn_t: Vec<(u32, u32, f64)> = Vec::with_capacity(d);
        let mut id_t: Vec<(u32, u32, f64)> = Vec::with_capacity(d);
        let mut flip_t: Vec<(u32, u32, f64)> = Vec::new();
        for (row, &rep) in basis.reps.iter().enumerate() {
            occ_t.push((row as u32, row as u32, rep.count_ones() as f64));
            let mut nn = 0.0;
            for i in 0..n {
                let left = rep >> ((i + n - 1) % n) & 1;
                let right = rep >> ((i + 1) % n) & 1;
                nn += (left & right) as f64;
            }
            nn_t.push((row as u32, row as u32, nn));
            id_t.push((row as u32, row as u32, 1.0));
            let o_row = basis.orbit_len[row] as f64;
            for i in 0..n {
                let left = rep >> ((i + n - 1) % n) & 1;
                let right = rep >> ((i + 1) % n) & 1;
                if left == 0 && right == 0 {
                    let target = (rep ^ (1 << i)) & mask;
                    let (trep, _) = canonical(target, n);
                    let col = basis.index_of(trep).expect("flip stays in the subspace");
                    let o_col = basis.orbit_len[col] as f64;
                    flip_t.push((row as u32, col as u32, (o_row / o_col).sqrt()));
                }
            }
        }
        let occupation = SparseSym::new_unchecked(CsrMatrix::from_triplets(d, &mut occ_t));
        let next_nearest = SparseSym::new_unchecked(CsrMatrix::from_triplets(d, &mut nn_t));
        let identity = SparseSym::new_unchecked(CsrMatrix::from_triplets(d, &mut id_t));
        let flip_raw = CsrMatrix::from_triplets(d, &mut flip_t);
        // orbit combinatorics make this exactly symmetric; verify cheaply
        let flip = SparseSym::new(flip_raw, 1e-12).expect("orbit-normalized flips are symmetric");
        Ok(SectorOperators {
            basis,
            occupation,
            next_nearest,
            flip,
            identity,
        })
    }

    pub fn n(&self) -> usize {
        self.basis.n
    }

    /// Materialize H(couplings) = Vg (n I - 3 occ + nn) + Ve occ - Omega flip.
    pub fn hamiltonian(&self, c: &PxpCouplings) -> SparseSym {
        let n = self.n() as f64;
        let d = self.basis.dim();
        let mut trip: Vec<(u32, u32, f64)> = Vec::new();
        let push_scaled = |trip: &mut Vec<(u32, u32, f64)>, m: &SparseSym, f: f64| {
            if f == 0.0 {
                return;
            }
            let csr = &m.csr;
            for r in 0..csr.dim {
                for k in csr.row_ptr[r]..csr.row_ptr[r + 1] {
                    trip.push((r as u32, csr.cols[k], f * csr.vals[k]));
                }
            }
        };
        push_scaled(&mut trip, &self.identity, n * c.v_g);
        push_scaled(&mut trip, &self.occupation, c.v_e - 3.0 * c.v_g);
        push_scaled(&mut trip, &self.next_nearest, c.v_g);
        push_scaled(&mut trip, &self.flip, -c.omega);
        SparseSym::new_unchecked(CsrMatrix::from_triplets(d, &mut trip))
    }

    /// Parent Hamiltonian on the family point beta (frustration-free).
    pub fn parent_at(&self, beta: f64) -> ParentHamiltonian {
        let c = PxpCouplings::family(beta);
        ParentHamiltonian {
            matrix: self.hamiltonian(&c),
            beta,
            scale: self.n(),
            sector: SectorTag::ZeroMomentum,
            ground: Some(self.basis.gibbs_sector_vector(beta)),
        }
    }

    /// Order parameter sqrt(<M2+ M2>) + sqrt(<M3+ M3>) of a sector state,
    /// with M_k = (1/n) sum_j e^{2 pi i j / k} sigma_j^z diagonal in the
    /// occupation basis (so the expectation is an orbit-weighted sum).
    pub fn order_parameter(&self, state: &[f64]) -> f64 {
        let n = self.n();
        let mut total = 0.0;
        for k in [2usize, 3] {
            let mut acc = 0.0;
            for (idx, &rep) in self.basis.reps.iter().enumerate() {
                let (mut re, mut im) = (0.0f64, 0.0f64);
                for j in 0..n {
                    let sz = 1.0 - 2.0 * ((rep >> j & 1) as f64);
                    let phi = 2.0 * std::f64::consts::PI * (j as f64) / (k as f64);
                    re += phi.cos() * sz;
                    im += phi.sin() * sz;
                }
                let m2 = (re * re + im * im) / (n as f64 * n as f64);
                acc += state[idx] * state[idx] * m2;
            }
            total += acc.max(0.0).sqrt();
        }
        total
    }

    /// Ground state at arbitrary couplings (dense below 1200, Lanczos above),
    /// optionally warm-started.
    pub fn ground_state(&self, c: &PxpCouplings, warm: Option<&[f64]>) -> (f64, Vec<f64>) {
        let h = self.hamiltonian(c);
        let d = h.dim();
        if d <= 600 {
            let (vals, vecs) = crate::linalg::dense_eigh(&h.to_dense());
            return (vals[0], vecs.column(0).iter().copied().collect());
        }
        let (vals, mut vecs) = crate::linalg::lanczos_lowest(
            d,
            |x, y| h.apply(x, y),
            1,
            &[],
            warm,
            1e-11,
            80,
            300,
        )
        .expect("sector ground state");
        (vals[0], vecs.swap_remove(0))
    }
}

/// Gap table rows for the one-parameter family.
#[derive(Debug, Clone, Copy)]
pub struct GapRow {
    pub n: usize,
    pub beta: f64,
    pub gap: f64,
}

/// Gap of the family Hamiltonian over (n, beta) grids, via deflated Lanczos
/// against the known Gibbs ground state.
pub fn gap_vs_beta(ns: &[usize], betas: &[f64]) -> Result<Vec<GapRow>, IndepsetError> {
    let mut rows = Vec::with_capacity(ns.len() * betas.len());
    for &n in ns {
        let ops = SectorOperators::build(n)?;
        let mut warm: Option<Vec<f64>> = None;
        for &beta in betas {
            let h = ops.hamiltonian(&PxpCouplings::family(beta));
            let ground = ops.basis.gibbs_sector_vector(beta);
            let (vals, vecs) = crate::linalg::lanczos_lowest(
                h.dim(),
                |x, y| h.apply(x, y),
                1,
                &[&ground],
                warm.as_deref(),
                1e-10,
                100,
                200,
            )
            .expect("gap solve");
            warm = Some(vecs.into_iter().next().unwrap());
            rows.push(GapRow {
                n,
                beta,
                gap: vals[0],
            });
        }
    }
    Ok(rows)
}

/// Result of the finite-temperature shortcut at beta_c = 2 log n.
#[derive(Debug, Clone, Copy)]
pub struct BetaCReport {
    pub n: usize,
    pub beta_c: f64,
    /// |<psi(beta_c)|psi(infinity)>|^2 in the sector.
    pub overlap: f64,
    /// Ground-configuration count of the zero-temperature limit; > 1 marks
    /// the nonergodic degeneracy of the zero-temperature chain.
    pub ground_degeneracy: usize,
}

/// Overlap of the Gibbs state at beta_c = 2 log n with the zero-temperature
/// Gibbs state (the symmetric combination of the two Neel configurations).
pub fn beta_c_protocol(n: usize) -> Result<BetaCReport, IndepsetError> {
    beta_c_overlap(n, 0.0)
}

/// Same with a constant shift added to beta_c.
pub fn beta_c_overlap(n: usize, shift: f64) -> Result<BetaCReport, IndepsetError> {
    let basis = MomentumSectorBasis::build(n)?;
    let beta_c = 2.0 * (n as f64).ln() + shift;
    let v = basis.gibbs_sector_vector(beta_c);
    let vinf = basis.gibbs_sector_vector(f64::INFINITY);
    let overlap = crate::linalg::dot(&v, &vinf).powi(2);
    Ok(BetaCReport {
        n,
        beta_c,
        overlap,
        ground_degeneracy: basis.ground_configuration_count(),
    })
}

/// Benchmark paths over (Omega/Vg, Ve/Vg).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WisPath {
    /// The one-parameter family (s, s^2), s = e^{-beta/2}, run from beta = 0
    /// toward a target beta.
    I,
    /// (s, 6 s^2 - 5 s) from the infinite-temperature point (1, 1) to the
    /// zero-temperature endpoint at the origin.
    II,
}

impl WisPath {
    pub fn parse(s: &str) -> Result<Self, IndepsetError> {
        match s {
            "i" => Ok(WisPath::I),
            "ii" => Ok(WisPath::II),
            other => Err(IndepsetError::UnknownPath(other.to_string())),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            WisPath::I => "i",
            WisPath::II => "ii",
        }
    }

    /// (Omega, Ve) at internal parameter s in [0, 1] (the table's s).
    pub fn couplings_at_table_s(&self, s: f64) -> (f64, f64) {
        match self {
            WisPath::I => (s, s * s),
            WisPath::II => (s, 6.0 * s * s - 5.0 * s),
        }
    }
}

/// Path (i) truncated at beta_target as a [`ParameterPath`] over (Omega, Ve):
/// u in [0,1] maps to s = 1 + u (s_f - 1) with s_f = e^{-beta_target/2}.
pub fn wis_path_i(beta_target: f64) -> ParameterPath {
    let s_f = (-beta_target / 2.0).exp();
    ParameterPath::with_derivative(
        2,
        move |u| {
            let s = 1.0 + u * (s_f - 1.0);
            vec![s, s * s]
        },
        move |u| {
            let s = 1.0 + u * (s_f - 1.0);
            let ds = s_f - 1.0;
            vec![ds, 2.0 * s * ds]
        },
    )
}

/// Path (ii) from (1, 1) to the origin: u in [0,1] maps to s = 1 - u.
pub fn wis_path_ii() -> ParameterPath {
    ParameterPath::with_derivative(
        2,
        |u| {
            let s = 1.0 - u;
            vec![s, 6.0 * s * s - 5.0 * s]
        },
        |u| {
            let s = 1.0 - u;
            vec![-1.0, -(12.0 * s - 5.0)]
        },
    )
}

/// A Hamiltonian family over the sector operators for a coupling path
/// (Omega, Ve) with Vg = 1.
pub fn sector_family(ops: &SectorOperators, path: ParameterPath) -> HamiltonianFamily {
    let n = ops.n() as f64;
    // constant part: Vg (n I - 3 occ + nn)
    let d = ops.basis.dim();
    let mut trip: Vec<(u32, u32, f64)> = Vec::new();
    for (m, f) in [
        (&ops.identity, n),
        (&ops.occupation, -3.0),
        (&ops.next_nearest, 1.0),
    ] {
        let csr = &m.csr;
        for r in 0..csr.dim {
            for k in csr.row_ptr[r]..csr.row_ptr[r + 1] {
                trip.push((r as u32, csr.cols[k], f * csr.vals[k]));
            }
        }
    }
    let constant = SparseSym::new_unchecked(CsrMatrix::from_triplets(d, &mut trip));
    // coupling operators: Omega -> -flip, Ve -> occ
    let mut flip_neg: Vec<(u32, u32, f64)> = Vec::new();
    {
        let csr = &ops.flip.csr;
        for r in 0..csr.dim {
            for k in csr.row_ptr[r]..csr.row_ptr[r + 1] {
                flip_neg.push((r as u32, csr.cols[k], -csr.vals[k]));
            }
        }
    }
    let op_omega = SparseSym::new_unchecked(CsrMatrix::from_triplets(d, &mut flip_neg));
    HamiltonianFamily::new(Some(constant), vec![op_omega, ops.occupation.clone()], path)
}

/// Family for one of the benchmark paths, with the analytic Gibbs ground
/// state attached along the one-parameter family.
pub fn wis_family(ops: &SectorOperators, path: WisPath, beta_target: f64) -> HamiltonianFamily {
    match path {
        WisPath::I => {
            let fam = sector_family(ops, wis_path_i(beta_target));
            let basis = ops.basis.clone();
            let s_f = (-beta_target / 2.0).exp();
            fam.with_known_ground(move |u| {
                let s = 1.0 + u * (s_f - 1.0);
                let beta = -2.0 * s.ln();
                (0.0, basis.gibbs_sector_vector(beta))
            })
        }
        WisPath::II => sector_family(ops, wis_path_ii()),
    }
}

/// Path length for (n, path); path (i) runs to beta_c = 2 log n unless a
/// target is supplied.
pub fn wis_path_length(
    n: usize,
    path: WisPath,
    beta_target: Option<f64>,
) -> Result<crate::adiabatic::PathLength, IndepsetError> {
    let ops = SectorOperators::build(n)?;
    let bt = beta_target.unwrap_or_else(|| 2.0 * (n as f64).ln());
    let fam = wis_family(&ops, path, bt);
    let opts = crate::adiabatic::QuadratureOptions {
        metric_method: crate::adiabatic::MetricMethod::Solve,
        ..Default::default()
    };
    Ok(crate::adiabatic::path_length(&fam, &opts).expect("wis path length"))
}

/// Full t_a search for (n, path) with the standard threshold.
pub fn wis_t_a(
    n: usize,
    path: WisPath,
    beta_target: Option<f64>,
) -> Result<crate::adiabatic::TaResult, IndepsetError> {
    let ops = SectorOperators::build(n)?;
    let bt = beta_target.unwrap_or_else(|| 2.0 * (n as f64).ln());
    let fam = wis_family(&ops, path, bt);
    let quad_opts = crate::adiabatic::QuadratureOptions {
        metric_method: crate::adiabatic::MetricMethod::Solve,
        ..Default::default()
    };
    let pl = crate::adiabatic::path_length(&fam, &quad_opts).expect("wis path length");
    let tdse_opts = crate::adiabatic::TdseOptions::default();
    let nodes = crate::adiabatic::prepare_tdse_nodes(&fam, &tdse_opts).expect("wis nodes");
    let psi0 = ops.basis.gibbs_sector_vector(0.0);
    let target = match path {
        WisPath::I => ops.basis.gibbs_sector_vector(bt),
        WisPath::II => ops.basis.gibbs_sector_vector(f64::INFINITY),
    };
    Ok(crate::adiabatic::find_t_a(
        pl.length,
        1e-5,
        0.3,
        crate::adiabatic::FIDELITY_THRESHOLD,
        |eps| {
            let r =
                crate::adiabatic::evolve_with_nodes(&fam, &nodes, eps, &psi0, &target, &tdse_opts)?;
            Ok(1.0 - r.fidelity)
        },
    )
    .expect("threshold reachable"))
}
