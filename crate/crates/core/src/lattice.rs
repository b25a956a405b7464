//! Configuration spaces, classical Hamiltonians, and Gibbs amplitude vectors.
//!
//! Everything downstream (Markov generators, parent Hamiltonians, sector
//! bases) shares the basis ordering defined here: configurations are packed
//! into 64-bit words, site `i` at bit `i`, and bases are listed in increasing
//! word order.

use thiserror::Error;

/// Default cap on enumerable basis sizes.
pub const DEFAULT_BASIS_CAP: usize = 1 << 24;

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("configuration has {got} sites, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("occupation violates the independent-set constraint on edge ({0}, {1})")]
    NotIndependent(u32, u32),
    #[error("basis size {size} exceeds the enumeration cap {cap}")]
    CapExceeded { size: usize, cap: usize },
    #[error("graph edge ({0}, {1}) out of range or a self-loop")]
    BadEdge(u32, u32),
    #[error("marked index {0} out of range for N = {1}")]
    BadMarkedIndex(usize, usize),
}

/// Undirected graph on `n` vertices with a deduplicated edge list.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    vertex_count: usize,
    edges: Vec<(u32, u32)>,
    neighbor_mask: Vec<u64>,
}

impl Graph {
    pub fn new(vertex_count: usize, edges: &[(u32, u32)]) -> Result<Self, LatticeError> {
        assert!(vertex_count <= 64, "packed configurations hold at most 64 sites");
        let mut normalized: Vec<(u32, u32)> = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b || a as usize >= vertex_count || b as usize >= vertex_count {
                return Err(LatticeError::BadEdge(a, b));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        normalized.dedup();
        let mut neighbor_mask = vec![0u64; vertex_count];
        for &(a, b) in &normalized {
            neighbor_mask[a as usize] |= 1 << b;
            neighbor_mask[b as usize] |= 1 << a;
        }
        Ok(Graph {
            vertex_count,
            edges: normalized,
            neighbor_mask,
        })
    }

    /// Cycle graph: n vertices, n edges, periodic boundary.
    pub fn chain_periodic(n: usize) -> Self {
        assert!(n >= 3, "periodic chain needs at least 3 vertices");
        let edges: Vec<(u32, u32)> = (0..n as u32).map(|i| (i, (i + 1) % n as u32)).collect();
        Graph::new(n, &edges).expect("chain edges are valid")
    }

    /// Star graph: central vertex 0, `b` branches of two vertices. Inner
    /// vertex of branch i is `1 + i`, outer vertex is `1 + b + i`.
    pub fn star(b: usize) -> Self {
        assert!(b >= 1);
        let mut edges = Vec::with_capacity(2 * b);
        for i in 0..b as u32 {
            edges.push((0, 1 + i));
            edges.push((1 + i, 1 + b as u32 + i));
        }
        Graph::new(2 * b + 1, &edges).expect("star edges are valid")
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    /// Bitmask of the neighbors of vertex `v`.
    pub fn neighbors(&self, v: usize) -> u64 {
        self.neighbor_mask[v]
    }

    /// Does the occupation word describe an independent set?
    pub fn is_independent(&self, bits: u64) -> bool {
        for v in 0..self.vertex_count {
            if bits >> v & 1 == 1 && bits & self.neighbor_mask[v] != 0 {
                return false;
            }
        }
        true
    }
}

/// A classical configuration: bit `i` is site `i`. For spin models the
/// convention is `s_i = 1 - 2 * bit_i`, for occupation models `n_i = bit_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Configuration {
    pub bits: u64,
    pub len: u8,
}

impl Configuration {
    pub fn new(bits: u64, len: usize) -> Self {
        assert!(len <= 64);
        debug_assert!(len == 64 || bits < (1u64 << len));
        Configuration {
            bits,
            len: len as u8,
        }
    }

    pub fn spin(&self, i: usize) -> i64 {
        1 - 2 * ((self.bits >> i) & 1) as i64
    }

    pub fn occupied(&self, i: usize) -> bool {
        self.bits >> i & 1 == 1
    }

    pub fn popcount(&self) -> u32 {
        self.bits.count_ones()
    }
}

/// The classical Hamiltonians whose Gibbs distributions we sample from.
#[derive(Debug, Clone)]
pub enum ClassicalModel {
    /// Ferromagnetic Ising chain, H = -sum_i s_i s_{i+1}.
    IsingChain { n: usize, periodic: bool },
    /// Weighted independent sets, H = -sum_i w_i n_i over independent sets.
    WeightedIndependentSet { graph: Graph, weights: Vec<f64> },
    /// Unstructured search: energy -1 on the marked configuration, 0 elsewhere.
    MarkedSearch { size: usize, marked: usize },
}

impl ClassicalModel {
    pub fn wis(graph: Graph, weights: Vec<f64>) -> Self {
        assert_eq!(graph.vertex_count(), weights.len());
        assert!(weights.iter().all(|&w| w > 0.0), "weights must be positive");
        ClassicalModel::WeightedIndependentSet { graph, weights }
    }

    pub fn wis_uniform(graph: Graph) -> Self {
        let n = graph.vertex_count();
        ClassicalModel::wis(graph, vec![1.0; n])
    }

    /// Number of sites in a configuration word.
    pub fn sites(&self) -> usize {
        match self {
            ClassicalModel::IsingChain { n, .. } => *n,
            ClassicalModel::WeightedIndependentSet { graph, .. } => graph.vertex_count(),
            // search configurations are abstract indices; the word stores the index
            ClassicalModel::MarkedSearch { size, .. } => {
                (usize::BITS - (size - 1).leading_zeros()) as usize
            }
        }
    }

    /// Extensivity scale n entering the parent-Hamiltonian prefactor.
    pub fn extensivity(&self) -> usize {
        match self {
            ClassicalModel::IsingChain { n, .. } => *n,
            ClassicalModel::WeightedIndependentSet { graph, .. } => graph.vertex_count(),
            // the log N factor is omitted for the search family
            ClassicalModel::MarkedSearch { .. } => 1,
        }
    }
}

/// H_c evaluated on a single configuration.
pub fn classical_energy(model: &ClassicalModel, c: &Configuration) -> Result<f64, LatticeError> {
    match model {
        ClassicalModel::IsingChain { n, periodic } => {
            if c.len as usize != *n {
                return Err(LatticeError::DimensionMismatch {
                    expected: *n,
                    got: c.len as usize,
                });
            }
            let bonds = if *periodic { *n } else { *n - 1 };
            let mut e = 0i64;
            for i in 0..bonds {
                e -= c.spin(i) * c.spin((i + 1) % n);
            }
            Ok(e as f64)
        }
        ClassicalModel::WeightedIndependentSet { graph, weights } => {
            if c.len as usize != graph.vertex_count() {
                return Err(LatticeError::DimensionMismatch {
                    expected: graph.vertex_count(),
                    got: c.len as usize,
                });
            }
            for &(a, b) in graph.edges() {
                if c.occupied(a as usize) && c.occupied(b as usize) {
                    return Err(LatticeError::NotIndependent(a, b));
                }
            }
            let mut e = 0.0;
            for i in 0..graph.vertex_count() {
                if c.occupied(i) {
                    e -= weights[i];
                }
            }
            Ok(e)
        }
        ClassicalModel::MarkedSearch { size, marked } => {
            if *marked >= *size {
                return Err(LatticeError::BadMarkedIndex(*marked, *size));
            }
            if (c.bits as usize) >= *size {
                return Err(LatticeError::DimensionMismatch {
                    expected: *size,
                    got: c.bits as usize,
                });
            }
            Ok(if c.bits as usize == *marked { -1.0 } else { 0.0 })
        }
    }
}

/// Enumerate the model's configuration basis in increasing word order.
///
/// For independent-set models only valid independent sets appear; they are
/// generated by a constrained depth-first walk rather than a 2^n scan.
pub fn enumerate_basis(
    model: &ClassicalModel,
    cap: usize,
) -> Result<Vec<Configuration>, LatticeError> {
    match model {
        ClassicalModel::IsingChain { n, .. } => {
            let size = 1usize << n;
            if size > cap {
                return Err(LatticeError::CapExceeded { size, cap });
            }
            Ok((0..size as u64).map(|b| Configuration::new(b, *n)).collect())
        }
        ClassicalModel::MarkedSearch { size, .. } => {
            if *size > cap {
                return Err(LatticeError::CapExceeded { size: *size, cap });
            }
            let bits = model.sites();
            Ok((0..*size as u64)
                .map(|b| Configuration::new(b, bits.max(1)))
                .collect())
        }
        ClassicalModel::WeightedIndependentSet { graph, .. } => {
            let n = graph.vertex_count();
            let mut out: Vec<Configuration> = Vec::new();
            // iterative DFS over sites; a set bit forbids its neighbors
            let mut stack: Vec<(usize, u64, u64)> = vec![(0, 0, 0)]; // (site, bits, forbidden)
            while let Some((site, bits, forbidden)) = stack.pop() {
                if site == n {
                    out.push(Configuration::new(bits, n));
                    if out.len() > cap {
                        return Err(LatticeError::CapExceeded {
                            size: out.len(),
                            cap,
                        });
                    }
                    continue;
                }
                // push occupied branch first so unoccupied pops first (ascending order)
                if forbidden >> site & 1 == 0 {
                    stack.push((site + 1, bits | 1 << site, forbidden | graph.neighbors(site)));
                }
                stack.push((site + 1, bits, forbidden));
            }
            out.sort_unstable_by_key(|c| c.bits);
            Ok(out)
        }
    }
}

/// Amplitudes of the Gibbs state: amp(s) = e^{-beta H_c(s)/2} / sqrt(Z).
#[derive(Debug, Clone)]
pub struct GibbsVector {
    pub beta: f64,
    pub amplitudes: Vec<f64>,
    pub log_partition: f64,
}

impl GibbsVector {
    /// Born-rule probabilities p(s) = amp(s)^2.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a * a).collect()
    }
}

/// log(sum_i exp(x_i)) without overflow.
pub fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() && m < 0.0 {
        return f64::NEG_INFINITY;
    }
    let s: f64 = xs.map(|x| (x - m).exp()).sum();
    m + s.ln()
}

/// Build the Gibbs vector over `basis` (which must come from `enumerate_basis`).
pub fn gibbs_vector_over(
    model: &ClassicalModel,
    basis: &[Configuration],
    beta: f64,
) -> Result<GibbsVector, LatticeError> {
    assert!(beta >= 0.0);
    let energies: Vec<f64> = basis
        .iter()
        .map(|c| classical_energy(model, c))
        .collect::<Result<_, _>>()?;
    if beta.is_infinite() {
        // zero-temperature limit: uniform weight on the ground configurations
        let e_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
        let count = energies.iter().filter(|&&e| e == e_min).count();
        let amp = (1.0 / count as f64).sqrt();
        let amplitudes = energies
            .iter()
            .map(|&e| if e == e_min { amp } else { 0.0 })
            .collect();
        return Ok(GibbsVector {
            beta,
            amplitudes,
            log_partition: f64::INFINITY,
        });
    }
    let log_z = log_sum_exp(energies.iter().map(|&e| -beta * e));
    let amplitudes: Vec<f64> = energies
        .iter()
        .map(|&e| (0.5 * (-beta * e - log_z)).exp())
        .collect();
    Ok(GibbsVector {
        beta,
        amplitudes,
        log_partition: log_z,
    })
}

/// Enumerate and build in one step.
pub fn gibbs_vector(model: &ClassicalModel, beta: f64) -> Result<GibbsVector, LatticeError> {
    let basis = enumerate_basis(model, DEFAULT_BASIS_CAP)?;
    gibbs_vector_over(model, &basis, beta)
}

/// Closed-form thermodynamics of the weighted star graph.
#[derive(Debug, Clone, Copy)]
pub struct StarThermodynamics {
    /// Helmholtz free energy -log(Z)/beta; -infinity at beta = 0.
    pub free_energy: f64,
    /// Internal energy -d log(Z)/d beta (analytic derivative).
    pub internal_energy: f64,
    /// Entropy beta (U - F), continued to log Z(0) at beta = 0.
    pub entropy: f64,
    /// Probability that the central vertex is occupied.
    pub p_center: f64,
    pub log_partition: f64,
}

/// Partition function Z = (1 + 2 e^beta)^b + e^{b beta} (1 + e^beta)^b,
/// evaluated through logarithms so that large `b * beta` cannot overflow.
pub fn star_thermodynamics(b: usize, beta: f64) -> StarThermodynamics {
    assert!(b >= 1 && beta >= 0.0);
    let bf = b as f64;
    // log of the two partition-function terms (center unoccupied / occupied)
    let t0 = bf * (1.0 + 2.0 * beta.exp()).ln();
    let t1 = bf * beta + bf * (1.0 + beta.exp()).ln();
    let log_z = log_sum_exp([t0, t1].into_iter());
    // weights of the two sectors; p_center is the occupied-sector weight
    let p_center = 1.0 / (1.0 + (t0 - t1).exp());
    // d t0/d beta and d t1/d beta
    let e = beta.exp();
    let dt0 = bf * 2.0 * e / (1.0 + 2.0 * e);
    let dt1 = bf + bf * e / (1.0 + e);
    let dlog_z = (1.0 - p_center) * dt0 + p_center * dt1;
    let internal_energy = -dlog_z;
    let (free_energy, entropy) = if beta == 0.0 {
        (f64::NEG_INFINITY, log_z)
    } else {
        let f = -log_z / beta;
        (f, beta * (internal_energy - f))
    };
    StarThermodynamics {
        free_energy,
        internal_energy,
        entropy,
        p_center,
        log_partition: log_z,
    }
}

/// F_k with F_0 = 0, F_1 = 1.
pub fn fibonacci(k: usize) -> u64 {
    let (mut a, mut b) = (0u64, 1u64);
    for _ in 0..k {
        let t = a + b;
        a = b;
        b = t;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_and_star_builders() {
        let c = Graph::chain_periodic(6);
        assert_eq!(c.vertex_count(), 6);
        assert_eq!(c.edges().len(), 6);
        let s = Graph::star(3);
        assert_eq!(s.vertex_count(), 7);
        assert_eq!(s.edges().len(), 6);
    }

    #[test]
    fn graph_rejects_self_loops() {
        assert!(Graph::new(3, &[(1, 1)]).is_err());
        assert!(Graph::new(3, &[(0, 5)]).is_err());
        // duplicates collapse
        let g = Graph::new(3, &[(0, 1), (1, 0)]).unwrap();
        assert_eq!(g.edges().len(), 1);
    }

    #[test]
    fn ising_energy_ferromagnetic_ground() {
        let m = ClassicalModel::IsingChain { n: 4, periodic: true };
        let e = classical_energy(&m, &Configuration::new(0, 4)).unwrap();
        assert_eq!(e, -4.0);
        // alternating spins on an even ring: +4
        let e2 = classical_energy(&m, &Configuration::new(0b0101, 4)).unwrap();
        assert_eq!(e2, 4.0);
    }

    #[test]
    fn wis_energy_counts_weights() {
        let m = ClassicalModel::wis_uniform(Graph::chain_periodic(4));
        let e = classical_energy(&m, &Configuration::new(0b0101, 4)).unwrap();
        assert_eq!(e, -2.0);
        // occupied neighbors rejected
        assert!(classical_energy(&m, &Configuration::new(0b0011, 4)).is_err());
    }

    #[test]
    fn star_energy_with_center() {
        // b = 3, center weight 3, others 1; center + two outer occupied
        let g = Graph::star(3);
        let mut w = vec![1.0; 7];
        w[0] = 3.0;
        let m = ClassicalModel::wis(g, w);
        let bits = 1 | 1 << 4 | 1 << 5; // center, outer of branches 0 and 1
        let e = classical_energy(&m, &Configuration::new(bits, 7)).unwrap();
        assert_eq!(e, -5.0);
    }

    #[test]
    fn wis_chain_counts_follow_fibonacci() {
        for n in 3..=24 {
            let m = ClassicalModel::wis_uniform(Graph::chain_periodic(n));
            let basis = enumerate_basis(&m, DEFAULT_BASIS_CAP).unwrap();
            let expect = fibonacci(n - 1) + fibonacci(n + 1);
            assert_eq!(basis.len() as u64, expect, "n = {n}");
        }
    }

    #[test]
    fn wis_star_b1_has_five_sets() {
        let m = ClassicalModel::wis_uniform(Graph::star(1));
        let basis = enumerate_basis(&m, DEFAULT_BASIS_CAP).unwrap();
        assert_eq!(basis.len(), 5);
    }

    #[test]
    fn ising_basis_is_full_hypercube() {
        let m = ClassicalModel::IsingChain { n: 3, periodic: true };
        assert_eq!(enumerate_basis(&m, DEFAULT_BASIS_CAP).unwrap().len(), 8);
    }

    #[test]
    fn enumeration_cap_enforced() {
        let m = ClassicalModel::IsingChain { n: 10, periodic: true };
        assert!(matches!(
            enumerate_basis(&m, 100),
            Err(LatticeError::CapExceeded { .. })
        ));
    }

    #[test]
    fn gibbs_uniform_at_beta_zero() {
        let m = ClassicalModel::wis_uniform(Graph::chain_periodic(5));
        let g = gibbs_vector(&m, 0.0).unwrap();
        let d = g.amplitudes.len() as f64;
        for a in &g.amplitudes {
            assert!((a - 1.0 / d.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn gibbs_normalized_and_monotone() {
        let m = ClassicalModel::IsingChain { n: 3, periodic: true };
        let basis = enumerate_basis(&m, DEFAULT_BASIS_CAP).unwrap();
        let g = gibbs_vector(&m, 0.7).unwrap();
        let nrm: f64 = g.amplitudes.iter().map(|a| a * a).sum();
        assert!((nrm - 1.0).abs() < 1e-12);
        // brute-force partition sum oracle
        let z: f64 = basis
            .iter()
            .map(|c| (-0.7 * classical_energy(&m, c).unwrap()).exp())
            .sum();
        assert!((g.log_partition - z.ln()).abs() < 1e-12);
        for (c, a) in basis.iter().zip(&g.amplitudes) {
            let expect = (-0.7 * classical_energy(&m, c).unwrap() / 2.0).exp() / z.sqrt();
            assert!((a - expect).abs() < 1e-14);
        }
        // larger energy, smaller amplitude
        let mut pairs: Vec<(f64, f64)> = basis
            .iter()
            .zip(&g.amplitudes)
            .map(|(c, &a)| (classical_energy(&m, c).unwrap(), a))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pairs.windows(2) {
            assert!(w[0].1 >= w[1].1 - 1e-15);
        }
    }

    #[test]
    fn star_partition_matches_closed_form() {
        // b = 2, beta = 1: Z = (1 + 2e)^2 + e^2 (1 + e)^2
        let t = star_thermodynamics(2, 1.0);
        let e = 1f64.exp();
        let z = (1.0 + 2.0 * e).powi(2) + e.powi(2) * (1.0 + e).powi(2);
        assert!((t.log_partition - z.ln()).abs() < 1e-12);
        // and the Gibbs vector over the enumerated star agrees
        let g = Graph::star(2);
        let mut w = vec![1.0; 5];
        w[0] = 2.0;
        let m = ClassicalModel::wis(g, w);
        let gv = gibbs_vector(&m, 1.0).unwrap();
        assert!((gv.log_partition - z.ln()).abs() < 1e-12);
    }

    #[test]
    fn star_p_center_limits() {
        // beta = 0: p1 = 1/(1 + (3/2)^b)
        for b in [1usize, 3, 8] {
            let t = star_thermodynamics(b, 0.0);
            let expect = 1.0 / (1.0 + 1.5f64.powi(b as i32));
            assert!((t.p_center - expect).abs() < 1e-14);
        }
        // step function deep in the thermodynamic limit
        let t = star_thermodynamics(200, 0.6);
        assert!(t.p_center > 0.999);
        let t = star_thermodynamics(200, 0.3);
        assert!(t.p_center < 1e-3);
    }

    #[test]
    fn star_entropy_against_finite_difference() {
        // S = beta (U - F) with U from a centered difference of log Z
        let b = 4;
        let beta = 1.0;
        let h = 1e-5;
        let lz = |x: f64| star_thermodynamics(b, x).log_partition;
        let u_fd = -(lz(beta + h) - lz(beta - h)) / (2.0 * h);
        let t = star_thermodynamics(b, beta);
        assert!((t.internal_energy - u_fd).abs() < 1e-6);
        let s_expect = beta * (u_fd - t.free_energy);
        assert!((t.entropy - s_expect).abs() < 1e-6);
        assert!(t.entropy >= 0.0);
    }

    #[test]
    fn star_entropy_at_infinite_temperature() {
        for b in [2usize, 5, 9] {
            let t = star_thermodynamics(b, 0.0);
            let expect = (3f64.powi(b as i32) + 2f64.powi(b as i32)).ln();
            assert!((t.entropy - expect).abs() < 1e-12);
            assert!(t.free_energy == f64::NEG_INFINITY);
        }
    }

    #[test]
    fn search_energy() {
        let m = ClassicalModel::MarkedSearch { size: 8, marked: 3 };
        assert_eq!(
            classical_energy(&m, &Configuration::new(3, 3)).unwrap(),
            -1.0
        );
        assert_eq!(
            classical_energy(&m, &Configuration::new(5, 3)).unwrap(),
            0.0
        );
    }
}
