//! Detailed-balance Markov generators and their spectral diagnostics.
//!
//! Generators are row-stochastic matrices over an enumerated basis. Detailed
//! balance, e^{-beta H(s')} M(s',s) = e^{-beta H(s)} M(s,s'), is what lets the
//! similarity transform in [`crate::parent`] produce a symmetric Hamiltonian,
//! so it is validated at construction time.

use crate::lattice::{
    classical_energy, enumerate_basis, gibbs_vector_over, ClassicalModel, Configuration,
    LatticeError, DEFAULT_BASIS_CAP,
};
use crate::linalg::{dense_eigvals, CsrMatrix};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarkovError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("row {row} sums to {sum}, expected 1")]
    NotStochastic { row: usize, sum: f64 },
    #[error("detailed balance violated: residual {0:.3e}")]
    DetailedBalance(f64),
    #[error("generator is nonergodic (eigenvalue-1 multiplicity {0})")]
    NonErgodic(usize),
}

/// Tolerance for the stochasticity and detailed-balance invariants.
pub const GENERATOR_TOL: f64 = 1e-12;

/// Update rule for the independent-set chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WisUpdateRule {
    /// Toggle one vertex per step.
    SingleSite,
    /// Single-site toggles plus moves of an occupation across an edge,
    /// which remove the thermal barrier for domain-wall motion.
    SingleSitePlusPair,
}

/// A row-stochastic generator together with the data needed downstream:
/// per-configuration energies and the stationary Gibbs weights.
#[derive(Debug, Clone)]
pub struct MarkovGenerator {
    pub matrix: CsrMatrix,
    pub basis: Vec<Configuration>,
    pub energies: Vec<f64>,
    pub stationary: Vec<f64>,
    pub beta: f64,
    /// Extensivity scale used for the parent Hamiltonian and t_m = tau_m / n.
    pub sites: usize,
}

impl MarkovGenerator {
    fn validate(&self) -> Result<(), MarkovError> {
        let m = &self.matrix;
        for r in 0..m.dim {
            let sum: f64 = (m.row_ptr[r]..m.row_ptr[r + 1]).map(|k| m.vals[k]).sum();
            if (sum - 1.0).abs() > GENERATOR_TOL {
                return Err(MarkovError::NotStochastic { row: r, sum });
            }
            for k in m.row_ptr[r]..m.row_ptr[r + 1] {
                if m.vals[k] < 0.0 {
                    return Err(MarkovError::NotStochastic { row: r, sum: m.vals[k] });
                }
            }
        }
        let res = self.detailed_balance_residual();
        if res > GENERATOR_TOL {
            return Err(MarkovError::DetailedBalance(res));
        }
        Ok(())
    }

    /// Max relative residual of e^{-beta E(s)} M(s,s') - e^{-beta E(s')} M(s',s).
    ///
    /// Evaluated through the symmetrized matrix elements so that large
    /// beta * E differences cannot overflow.
    pub fn detailed_balance_residual(&self) -> f64 {
        let m = &self.matrix;
        let mut worst = 0.0f64;
        for r in 0..m.dim {
            for k in m.row_ptr[r]..m.row_ptr[r + 1] {
                let c = m.cols[k] as usize;
                if c < r {
                    continue;
                }
                let fwd = self.symmetrized_entry(r, c);
                let bwd = self.symmetrized_entry(c, r);
                let scale = fwd.abs().max(bwd.abs());
                if scale > 0.0 {
                    worst = worst.max((fwd - bwd).abs() / scale);
                }
            }
        }
        worst
    }

    /// Entry (r, c) of e^{-beta H/2} M e^{beta H/2}, combining the exponents
    /// before exponentiating.
    fn symmetrized_entry(&self, r: usize, c: usize) -> f64 {
        let v = self.matrix.get(r, c).unwrap_or(0.0);
        if v == 0.0 {
            return 0.0;
        }
        let de = self.energies[c] - self.energies[r];
        if r == c || de == 0.0 {
            return v;
        }
        (0.5 * self.beta * de + v.ln()).exp()
    }

    /// The symmetrized generator e^{-beta H/2} M e^{beta H/2}.
    pub fn symmetrized(&self) -> CsrMatrix {
        let m = &self.matrix;
        let mut trip = Vec::with_capacity(m.nnz());
        for r in 0..m.dim {
            for k in m.row_ptr[r]..m.row_ptr[r + 1] {
                let c = m.cols[k] as usize;
                let v = m.vals[k];
                if v == 0.0 {
                    continue;
                }
                let de = self.energies[c] - self.energies[r];
                if c == r || de == 0.0 {
                    trip.push((r as u32, c as u32, v));
                } else {
                    trip.push((r as u32, c as u32, (0.5 * self.beta * de + v.ln()).exp()));
                }
            }
        }
        CsrMatrix::from_triplets(m.dim, &mut trip)
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim
    }

    /// Gibbs amplitudes sqrt(p(s)) of the stationary distribution.
    pub fn gibbs_amplitudes(&self) -> Vec<f64> {
        self.stationary.iter().map(|p| p.sqrt()).collect()
    }
}

/// Glauber dynamics on the periodic Ising chain: pick a spin uniformly and
/// redraw it from the conditional Gibbs distribution. The flip probability
/// from configuration s is
/// p_i = e^{-beta s_i (s_{i-1} + s_{i+1})} / (2 n cosh[beta (s_{i-1} + s_{i+1})]).
pub fn glauber_generator(n: usize, beta: f64) -> Result<MarkovGenerator, MarkovError> {
    assert!(n >= 3, "periodic chain needs n >= 3");
    let model = ClassicalModel::IsingChain { n, periodic: true };
    let basis = enumerate_basis(&model, DEFAULT_BASIS_CAP)?;
    let energies: Vec<f64> = basis
        .iter()
        .map(|c| classical_energy(&model, c).unwrap())
        .collect();
    let dim = basis.len();
    let mut trip: Vec<(u32, u32, f64)> = Vec::with_capacity(dim * (n + 1));
    for (row, c) in basis.iter().enumerate() {
        let mut stay = 1.0;
        for i in 0..n {
            let nb = (c.spin((i + n - 1) % n) + c.spin((i + 1) % n)) as f64;
            let p = (-beta * c.spin(i) as f64 * nb).exp() / (2.0 * n as f64 * (beta * nb).cosh());
            let target = c.bits ^ (1 << i);
            trip.push((row as u32, target as u32, p));
            stay -= p;
        }
        trip.push((row as u32, row as u32, stay));
    }
    let matrix = CsrMatrix::from_triplets(dim, &mut trip);
    let stationary = gibbs_vector_over(&model, &basis, beta)?.probabilities();
    let gen = MarkovGenerator {
        matrix,
        basis,
        energies,
        stationary,
        beta,
        sites: n,
    };
    gen.validate()?;
    Ok(gen)
}

/// Metropolis–Hastings on weighted independent sets. A vertex is proposed
/// uniformly; toggles that leave the independent-set subspace are rejected,
/// otherwise accepted with min(1, e^{-beta dE}).
pub fn metropolis_wis_generator(
    model: &ClassicalModel,
    beta: f64,
) -> Result<MarkovGenerator, MarkovError> {
    metropolis_wis_generator_with_rule(model, beta, WisUpdateRule::SingleSite)
}

pub fn metropolis_wis_generator_with_rule(
    model: &ClassicalModel,
    beta: f64,
    rule: WisUpdateRule,
) -> Result<MarkovGenerator, MarkovError> {
    let (graph, weights) = match model {
        ClassicalModel::WeightedIndependentSet { graph, weights } => (graph, weights),
        _ => panic!("metropolis_wis_generator needs an independent-set model"),
    };
    let n = graph.vertex_count();
    let basis = enumerate_basis(model, DEFAULT_BASIS_CAP)?;
    let index: std::collections::HashMap<u64, u32> = basis
        .iter()
        .enumerate()
        .map(|(i, c)| (c.bits, i as u32))
        .collect();
    let energies: Vec<f64> = basis
        .iter()
        .map(|c| classical_energy(model, c).unwrap())
        .collect();
    let dim = basis.len();
    // total proposal count per step; pair moves are directed edge hops
    let n_moves = match rule {
        WisUpdateRule::SingleSite => n,
        WisUpdateRule::SingleSitePlusPair => n + 2 * graph.edges().len(),
    } as f64;
    let mut trip: Vec<(u32, u32, f64)> = Vec::new();
    for (row, c) in basis.iter().enumerate() {
        let mut stay = 1.0;
        for i in 0..n {
            let target = c.bits ^ (1 << i);
            if let Some(&col) = index.get(&target) {
                let de = if c.occupied(i) { weights[i] } else { -weights[i] };
                let accept = if de <= 0.0 { 1.0 } else { (-beta * de).exp() };
                let p = accept / n_moves;
                if p > 0.0 {
                    trip.push((row as u32, col, p));
                    stay -= p;
                }
            }
        }
        if rule == WisUpdateRule::SingleSitePlusPair {
            for &(a, b) in graph.edges() {
                for (from, to) in [(a as usize, b as usize), (b as usize, a as usize)] {
                    if c.occupied(from) && !c.occupied(to) {
                        let target = c.bits ^ (1 << from) ^ (1 << to);
                        if let Some(&col) = index.get(&target) {
                            let de = weights[from] - weights[to];
                            let accept = if de <= 0.0 { 1.0 } else { (-beta * de).exp() };
                            let p = accept / n_moves;
                            if p > 0.0 {
                                trip.push((row as u32, col, p));
                                stay -= p;
                            }
                        }
                    }
                }
            }
        }
        trip.push((row as u32, row as u32, stay));
    }
    let matrix = CsrMatrix::from_triplets(dim, &mut trip);
    let stationary = gibbs_vector_over(model, &basis, beta)?.probabilities();
    let gen = MarkovGenerator {
        matrix,
        basis,
        energies,
        stationary,
        beta,
        sites: n,
    };
    gen.validate()?;
    Ok(gen)
}

/// Uniform-proposal Metropolis chain for the search Hamiltonian
/// H_c = -|m><m|: any configuration is proposed with probability 1/N.
pub fn search_generator(
    n_elems: usize,
    marked: usize,
    beta: f64,
) -> Result<MarkovGenerator, MarkovError> {
    assert!(n_elems >= 2);
    let model = ClassicalModel::MarkedSearch {
        size: n_elems,
        marked,
    };
    let basis = enumerate_basis(&model, DEFAULT_BASIS_CAP)?;
    let energies: Vec<f64> = basis
        .iter()
        .map(|c| classical_energy(&model, c).unwrap())
        .collect();
    let nf = n_elems as f64;
    let mut trip: Vec<(u32, u32, f64)> = Vec::with_capacity(n_elems * n_elems);
    for row in 0..n_elems {
        let mut stay = 1.0;
        for col in 0..n_elems {
            if col == row {
                continue;
            }
            let de = energies[col] - energies[row];
            let accept = if de <= 0.0 { 1.0 } else { (-beta * de).exp() };
            let p = accept / nf;
            if p > 0.0 {
                trip.push((row as u32, col as u32, p));
                stay -= p;
            }
        }
        trip.push((row as u32, row as u32, stay));
    }
    let matrix = CsrMatrix::from_triplets(n_elems, &mut trip);
    let stationary = gibbs_vector_over(&model, &basis, beta)?.probabilities();
    let gen = MarkovGenerator {
        matrix,
        basis,
        energies,
        stationary,
        beta,
        sites: model.extensivity(),
    };
    gen.validate()?;
    Ok(gen)
}

/// Spectral data of a generator: |lambda_2| and the mixing-time bounds.
#[derive(Debug, Clone, Copy)]
pub struct SpectralSummary {
    pub lambda2_magnitude: f64,
    /// 1 - |lambda_2|.
    pub gap: f64,
    /// tau_m >= |lambda_2| / (1 - |lambda_2|).
    pub mixing_lower_bound: f64,
    /// t_m = tau_m / n.
    pub per_site_bound: f64,
    /// Multiplicity of eigenvalue 1 at tolerance 1e-10.
    pub unit_multiplicity: usize,
    pub nonergodic: bool,
}

/// Eigenvalue-1 multiplicity is counted with this tolerance.
pub const NONERGODIC_TOL: f64 = 1e-10;

/// Spectrum of the symmetrized generator (real, in [-1, 1]) via dense solve.
pub fn spectral_summary(gen: &MarkovGenerator) -> SpectralSummary {
    let sym = gen.symmetrized().symmetrize(); // kill last-digit asymmetry
    let vals = dense_eigvals(&sym.to_dense());
    summary_from_eigenvalues(&vals, gen.sites)
}

pub fn summary_from_eigenvalues(vals_ascending: &[f64], sites: usize) -> SpectralSummary {
    let d = vals_ascending.len();
    let unit_multiplicity = vals_ascending
        .iter()
        .filter(|&&v| (v - 1.0).abs() <= NONERGODIC_TOL)
        .count();
    let nonergodic = unit_multiplicity != 1;
    // second-largest magnitude: drop one copy of the Perron root
    let mut lambda2 = 0.0f64;
    let top = d - 1;
    for (i, &v) in vals_ascending.iter().enumerate() {
        if i == top {
            continue;
        }
        lambda2 = lambda2.max(v.abs());
    }
    let gap = 1.0 - lambda2;
    let mixing_lower_bound = if gap > 0.0 {
        lambda2 / gap
    } else {
        f64::INFINITY
    };
    SpectralSummary {
        lambda2_magnitude: lambda2,
        gap,
        mixing_lower_bound,
        per_site_bound: mixing_lower_bound / sites as f64,
        unit_multiplicity,
        nonergodic,
    }
}

/// How the mixing diagnostic advances the distribution.
#[derive(Debug, Clone, Copy)]
pub enum MixingMode {
    /// Exact push-forward q_{t+1}(s) = sum_{s'} q_t(s') M(s', s); noise-free.
    Exact,
    /// Empirical ensemble of walkers (for bases too large to push exactly).
    Sampled { walkers: usize, seed: u64 },
}

/// Total-variation distance (1/2) sum |q - p| to the stationary distribution
/// after each step; entry 0 is the initial distance.
pub fn simulate_mixing(
    gen: &MarkovGenerator,
    initial: &[f64],
    max_steps: usize,
    mode: MixingMode,
) -> Vec<f64> {
    let tv = |q: &[f64]| -> f64 {
        0.5 * q
            .iter()
            .zip(&gen.stationary)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    };
    match mode {
        MixingMode::Exact => {
            let mut q = initial.to_vec();
            let mut next = vec![0.0; q.len()];
            let mut out = Vec::with_capacity(max_steps + 1);
            out.push(tv(&q));
            for _ in 0..max_steps {
                gen.matrix.apply_transpose(&q, &mut next);
                std::mem::swap(&mut q, &mut next);
                out.push(tv(&q));
            }
            out
        }
        MixingMode::Sampled { walkers, seed } => {
            // splitmix64 stream; cheap and reproducible
            let mut state = seed;
            let mut next_u64 = move || {
                state = state.wrapping_add(0x9E3779B97F4A7C15);
                let mut z = state;
                z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
                z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
                z ^ (z >> 31)
            };
            let mut uniform = move || (next_u64() >> 11) as f64 / (1u64 << 53) as f64;
            let dim = gen.dim();
            let mut cdf: Vec<f64> = Vec::with_capacity(dim);
            let mut acc = 0.0;
            for &p in initial {
                acc += p;
                cdf.push(acc);
            }
            let mut pos: Vec<usize> = (0..walkers)
                .map(|_| {
                    let u = uniform();
                    cdf.partition_point(|&c| c < u).min(dim - 1)
                })
                .collect();
            let empirical = |pos: &[usize]| {
                let mut q = vec![0.0; dim];
                for &p in pos {
                    q[p] += 1.0 / pos.len() as f64;
                }
                q
            };
            let mut out = Vec::with_capacity(max_steps + 1);
            out.push(tv(&empirical(&pos)));
            let m = &gen.matrix;
            for _ in 0..max_steps {
                for p in pos.iter_mut() {
                    let u = uniform();
                    let mut acc = 0.0;
                    let mut target = *p;
                    for k in m.row_ptr[*p]..m.row_ptr[*p + 1] {
                        acc += m.vals[k];
                        if u < acc {
                            target = m.cols[k] as usize;
                            break;
                        }
                    }
                    *p = target;
                }
                out.push(tv(&empirical(&pos)));
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Graph;

    #[test]
    fn glauber_beta_zero_flip_rates() {
        let g = glauber_generator(5, 0.0).unwrap();
        for r in 0..g.dim() {
            for k in g.matrix.row_ptr[r]..g.matrix.row_ptr[r + 1] {
                let c = g.matrix.cols[k] as usize;
                if c != r {
                    assert!((g.matrix.vals[k] - 1.0 / 10.0).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn glauber_aligned_neighbor_rate() {
        // n = 4, beta = 1, all spins up: flipping any spin has
        // p = e^{-2 beta} / (2 n cosh 2 beta)
        let beta = 1.0;
        let g = glauber_generator(4, beta).unwrap();
        let p = g.matrix.get(0, 1).unwrap();
        let expect = (-2.0 * beta).exp() / (8.0 * (2.0 * beta).cosh());
        assert!((p - expect).abs() < 1e-15);
    }

    #[test]
    fn glauber_stationary_vector() {
        let g = glauber_generator(6, 0.5).unwrap();
        let mut out = vec![0.0; g.dim()];
        g.matrix.apply_transpose(&g.stationary, &mut out);
        for i in 0..g.dim() {
            assert!((out[i] - g.stationary[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn wis_beta_zero_uniform_toggles() {
        let model = ClassicalModel::wis_uniform(Graph::chain_periodic(4));
        let g = metropolis_wis_generator(&model, 0.0).unwrap();
        for r in 0..g.dim() {
            for k in g.matrix.row_ptr[r]..g.matrix.row_ptr[r + 1] {
                let c = g.matrix.cols[k] as usize;
                if c != r {
                    assert!((g.matrix.vals[k] - 0.25).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn wis_deoccupy_costs_boltzmann_factor() {
        let beta = 1.0;
        let model = ClassicalModel::wis_uniform(Graph::chain_periodic(4));
        let g = metropolis_wis_generator(&model, beta).unwrap();
        // 0b0001 -> 0b0000 removes an occupied unit-weight vertex
        let from = g.basis.iter().position(|c| c.bits == 1).unwrap();
        let to = g.basis.iter().position(|c| c.bits == 0).unwrap();
        let p = g.matrix.get(from, to).unwrap();
        assert!((p - (-beta).exp() / 4.0).abs() < 1e-15);
        // reverse move is downhill: accepted with probability 1
        let q = g.matrix.get(to, from).unwrap();
        assert!((q - 0.25).abs() < 1e-15);
    }

    #[test]
    fn wis_star_detailed_balance() {
        let graph = Graph::star(2);
        let mut w = vec![1.0; 5];
        w[0] = 2.0;
        let model = ClassicalModel::wis(graph, w);
        let g = metropolis_wis_generator(&model, 0.7).unwrap();
        assert!(g.detailed_balance_residual() < 1e-14);
    }

    #[test]
    fn pair_updates_preserve_detailed_balance() {
        let model = ClassicalModel::wis_uniform(Graph::chain_periodic(6));
        let g =
            metropolis_wis_generator_with_rule(&model, 1.3, WisUpdateRule::SingleSitePlusPair)
                .unwrap();
        assert!(g.detailed_balance_residual() < 1e-13);
        let s = spectral_summary(&g);
        assert!(!s.nonergodic);
    }

    #[test]
    fn search_beta_zero_is_uniform() {
        let g = search_generator(6, 2, 0.0).unwrap();
        for r in 0..6 {
            for c in 0..6 {
                if r != c {
                    assert!((g.matrix.get(r, c).unwrap() - 1.0 / 6.0).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn search_leaving_marked_pays_energy() {
        let beta = 2.0;
        let g = search_generator(4, 1, beta).unwrap();
        let p = g.matrix.get(1, 0).unwrap();
        assert!((p - (-beta).exp() / 4.0).abs() < 1e-16);
    }

    #[test]
    fn two_state_chain_lambda2() {
        // hand-built 2-state chain with flip rates (a, b): lambda_2 = 1 - a - b
        let (a, b) = (0.3f64, 0.45f64);
        let beta = 1.0f64;
        // energy split chosen so detailed balance holds
        let e0 = 0.0f64;
        let e1 = -(a / b).ln() / beta;
        let mut trip = vec![
            (0u32, 0u32, 1.0 - a),
            (0, 1, a),
            (1, 0, b),
            (1, 1, 1.0 - b),
        ];
        let z = (-beta * e0).exp() + (-beta * e1).exp();
        let gen = MarkovGenerator {
            matrix: CsrMatrix::from_triplets(2, &mut trip),
            basis: vec![Configuration::new(0, 1), Configuration::new(1, 1)],
            energies: vec![e0, e1],
            stationary: vec![(-beta * e0).exp() / z, (-beta * e1).exp() / z],
            beta,
            sites: 1,
        };
        assert!(gen.detailed_balance_residual() < 1e-12);
        let s = spectral_summary(&gen);
        assert!((s.lambda2_magnitude - (1.0 - a - b)).abs() < 1e-12);
    }

    #[test]
    fn wis_zero_temperature_is_nonergodic() {
        let model = ClassicalModel::wis_uniform(Graph::chain_periodic(6));
        let g = metropolis_wis_generator(&model, f64::INFINITY).unwrap();
        let s = spectral_summary(&g);
        assert!(s.nonergodic);
        // every maximal independent set is absorbing at zero temperature:
        // the two Neel states plus the three size-2 maximal sets of C6
        assert_eq!(s.unit_multiplicity, 5);
    }

    #[test]
    fn spectrum_lies_in_unit_interval() {
        for beta in [0.0, 0.25, 1.0, 4.0] {
            let g = glauber_generator(4, beta).unwrap();
            let vals = dense_eigvals(&g.symmetrized().symmetrize().to_dense());
            assert!(vals[0] >= -1.0 - 1e-12);
            assert!(*vals.last().unwrap() <= 1.0 + 1e-12);
            assert!((vals.last().unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mixing_from_stationary_is_flat_zero() {
        let g = glauber_generator(4, 0.6).unwrap();
        let trace = simulate_mixing(&g, &g.stationary.clone(), 20, MixingMode::Exact);
        for t in trace {
            assert!(t < 1e-12);
        }
    }

    #[test]
    fn mixing_decay_tracks_lambda2() {
        let g = glauber_generator(6, 0.5).unwrap();
        let s = spectral_summary(&g);
        let mut q0 = vec![0.0; g.dim()];
        q0[0] = 1.0;
        let trace = simulate_mixing(&g, &q0, 400, MixingMode::Exact);
        // asymptotic decay of log TV at least as fast as log |lambda_2|
        let r1 = (trace[300] / trace[200]).powf(1.0 / 100.0);
        assert!(
            r1 <= s.lambda2_magnitude + 1e-6,
            "decay {r1} vs lambda2 {}",
            s.lambda2_magnitude
        );
        // and of the same order (the start state overlaps the slow mode)
        assert!(r1 > s.lambda2_magnitude - 0.05);
    }

    #[test]
    fn sampled_mixing_roughly_tracks_exact() {
        let g = glauber_generator(4, 0.4).unwrap();
        let mut q0 = vec![0.0; g.dim()];
        q0[3] = 1.0;
        let exact = simulate_mixing(&g, &q0, 30, MixingMode::Exact);
        let sampled = simulate_mixing(
            &g,
            &q0,
            30,
            MixingMode::Sampled {
                walkers: 20000,
                seed: 7,
            },
        );
        for (e, s) in exact.iter().zip(&sampled) {
            assert!((e - s).abs() < 0.05);
        }
    }
}
