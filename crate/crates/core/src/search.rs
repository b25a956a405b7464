//! The unstructured-search family and its exact two-level reduction.
//!
//! The uniform-proposal Metropolis chain for H_c = -|m><m| yields
//! H(beta) = I - A (|m><m| + |mp><mp|) - V0 |psi0><psi0| - Vm |m><m|
//! with A = (N-1)(1 - e^{-beta/2})/N, V0 = e^{-beta/2},
//! Vm = [1 + (N-2) e^{-beta/2} - (N-1) e^{-beta}]/N. Everything nontrivial
//! happens in span{|m>, |mp>}; the orthogonal complement is flat at energy 1.
//! The extensive log N prefactor is omitted throughout.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("unknown search path id {0:?}")]
    UnknownPath(String),
    #[error("search space needs at least two elements")]
    TooSmall,
}

/// Couplings of the extended search family. `a` acts as the identity inside
/// the two-level block and is gauge-fixed to zero off the one-parameter
/// family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchCouplings {
    pub n_elems: usize,
    pub a: f64,
    pub v0: f64,
    pub vm: f64,
}

impl SearchCouplings {
    /// The one-parameter family at inverse temperature beta.
    pub fn family(n_elems: usize, beta: f64) -> Self {
        let nf = n_elems as f64;
        let x = (-beta / 2.0).exp();
        SearchCouplings {
            n_elems,
            a: (nf - 1.0) * (1.0 - x) / nf,
            v0: x,
            vm: (1.0 + (nf - 2.0) * x - (nf - 1.0) * x * x) / nf,
        }
    }

    /// Family endpoints: (V0, Vm) = (1, 0) at beta = 0 and (0, 1/N) at
    /// beta -> infinity.
    pub fn family_endpoint(n_elems: usize) -> Self {
        let nf = n_elems as f64;
        SearchCouplings {
            n_elems,
            a: (nf - 1.0) / nf,
            v0: 0.0,
            vm: 1.0 / nf,
        }
    }
}

/// Exact 2x2 block over {|m>, |mp>}.
#[derive(Debug, Clone, Copy)]
pub struct TwoLevelSearch {
    pub h_mm: f64,
    pub h_mp: f64,
    pub h_pp: f64,
    /// Energy of the flat orthogonal complement.
    pub flat: f64,
}

impl TwoLevelSearch {
    pub fn new(c: &SearchCouplings) -> Self {
        let nf = c.n_elems as f64;
        TwoLevelSearch {
            h_mm: 1.0 - c.a - c.v0 / nf - c.vm,
            h_pp: 1.0 - c.a - c.v0 * (nf - 1.0) / nf,
            h_mp: -c.v0 * (nf - 1.0).sqrt() / nf,
            flat: 1.0,
        }
    }

    /// Relative energy difference of |m> against |mp>:
    /// Vm - (1 - 2/N) V0 with the opposite sign convention on h_mm - h_pp.
    pub fn bias(&self) -> f64 {
        self.h_pp - self.h_mm
    }

    /// Tunneling magnitude sqrt(N-1) V0 / N.
    pub fn tunneling(&self) -> f64 {
        self.h_mp.abs()
    }

    /// Eigenvalues (ascending) of the block.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mid = 0.5 * (self.h_mm + self.h_pp);
        let r = (0.25 * (self.h_mm - self.h_pp).powi(2) + self.h_mp * self.h_mp).sqrt();
        (mid - r, mid + r)
    }

    /// Gap within the block.
    pub fn gap(&self) -> f64 {
        let (lo, hi) = self.eigenvalues();
        hi - lo
    }

    /// Ground state (c_m, c_perp), normalized, continuous sign convention
    /// with c_perp >= 0.
    pub fn ground_state(&self) -> (f64, f64) {
        let (lo, _) = self.eigenvalues();
        // (H - lo) v = 0: v = (h_mp, lo - h_mm) up to normalization
        let v = (self.h_mp, lo - self.h_mm);
        let nrm = v.0.hypot(v.1);
        if nrm == 0.0 {
            return (1.0, 0.0);
        }
        let sign = if v.1 < 0.0 { -1.0 } else { 1.0 };
        (sign * v.0 / nrm, sign * v.1 / nrm)
    }

    /// Mixing angle phi with ground = (sin(phi/2), cos(phi/2)).
    pub fn mixing_angle(&self) -> f64 {
        let (cm, cp) = self.ground_state();
        2.0 * cm.atan2(cp)
    }
}

/// Dense N x N matrix of the family (oracle for the reduction).
pub fn dense_matrix(c: &SearchCouplings, marked: usize) -> DMatrix<f64> {
    let n = c.n_elems;
    let nf = n as f64;
    let mut h = DMatrix::identity(n, n);
    // -V0 |psi0><psi0|
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] -= c.v0 / nf;
        }
    }
    // -(A + Vm) |m><m|
    h[(marked, marked)] -= c.a + c.vm;
    // -A |mp><mp|
    for i in 0..n {
        if i == marked {
            continue;
        }
        for j in 0..n {
            if j == marked {
                continue;
            }
            h[(i, j)] -= c.a / (nf - 1.0);
        }
    }
    h
}

/// Benchmark paths through (V0, Vm).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SearchPath {
    /// The one-parameter family, parametrized by u = 1 - e^{-beta/2}.
    I,
    /// Straight segment (1, 0) -> (0, 1) at A = 0; the final diagonal leg to
    /// (0, 1/N) is a sudden change at zero time cost.
    II,
}

impl SearchPath {
    pub fn parse(s: &str) -> Result<Self, SearchError> {
        match s {
            "i" => Ok(SearchPath::I),
            "ii" => Ok(SearchPath::II),
            other => Err(SearchError::UnknownPath(other.to_string())),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SearchPath::I => "i",
            SearchPath::II => "ii",
        }
    }

    /// Couplings at path parameter u in [0, 1].
    pub fn couplings(&self, n_elems: usize, u: f64) -> SearchCouplings {
        let nf = n_elems as f64;
        match self {
            SearchPath::I => {
                // x = e^{-beta/2} = 1 - u keeps the path polynomial
                let x = 1.0 - u;
                SearchCouplings {
                    n_elems,
                    a: (nf - 1.0) * u / nf,
                    v0: x,
                    vm: (1.0 + (nf - 2.0) * x - (nf - 1.0) * x * x) / nf,
                }
            }
            SearchPath::II => SearchCouplings {
                n_elems,
                a: 0.0,
                v0: 1.0 - u,
                vm: u,
            },
        }
    }

    /// d(couplings)/du for the two-level dynamics.
    pub fn derivative(&self, n_elems: usize, u: f64) -> (f64, f64, f64) {
        let nf = n_elems as f64;
        match self {
            SearchPath::I => {
                let x = 1.0 - u;
                // dA/du, dV0/du, dVm/du
                (
                    (nf - 1.0) / nf,
                    -1.0,
                    (-(nf - 2.0) + 2.0 * (nf - 1.0) * x) / nf,
                )
            }
            SearchPath::II => (0.0, -1.0, 1.0),
        }
    }
}

/// Result of the two-level adiabatic run.
#[derive(Debug, Clone, Copy)]
pub struct SearchRun {
    pub fidelity: f64,
    pub t_tot: f64,
    pub l: f64,
    pub steps: usize,
}

/// Adiabatic path length of the two-level dynamics:
/// l = int du |phi'(u)| / (2 gap), since the metric of a two-level system is
/// g = (phi'/2)^2 / gap^2.
pub fn search_path_length(n_elems: usize, path: SearchPath) -> f64 {
    let f = |u: f64| -> Result<f64, SearchError> {
        let tl = TwoLevelSearch::new(&path.couplings(n_elems, u));
        Ok(mixing_angle_derivative(n_elems, path, u).abs() / (2.0 * tl.gap()))
    };
    let knots: Vec<f64> = (0..=32).map(|i| i as f64 / 32.0).collect();
    crate::adiabatic::adaptive_simpson(f, &knots, 1e-9, 60_000, f64::INFINITY)
        .expect("infallible integrand")
        .total
}

/// d phi / du via the analytic derivative of atan2(2 h_mp, h_pp - h_mm).
pub fn mixing_angle_derivative(n_elems: usize, path: SearchPath, u: f64) -> f64 {
    let c = path.couplings(n_elems, u);
    let tl = TwoLevelSearch::new(&c);
    let (da, dv0, dvm) = path.derivative(n_elems, u);
    let nf = n_elems as f64;
    // z = (h_pp - h_mm)/2, x = h_mp; phi = atan2(2x, 2z), phi' = (z x' - x z')/r^2
    let z = 0.5 * (tl.h_pp - tl.h_mm);
    let x = tl.h_mp;
    // h_mm' = -da - dv0/N - dvm; h_pp' = -da - dv0 (N-1)/N
    let dh_mm = -da - dv0 / nf - dvm;
    let dh_pp = -da - dv0 * (nf - 1.0) / nf;
    let dz = 0.5 * (dh_pp - dh_mm);
    let dx = -dv0 * (nf - 1.0).sqrt() / nf;
    let r2 = z * z + x * x;
    (z * dx - x * dz) / r2
}

/// Evolve the two-level system with the metric schedule at adiabatic rate
/// eps; step rule du |phi'|/2 = step_tol (default 1e-3).
pub fn search_tdse(n_elems: usize, path: SearchPath, epsilon: f64, step_tol: f64) -> SearchRun {
    // cumulative schedule table
    let f = |u: f64| -> Result<f64, SearchError> {
        let tl = TwoLevelSearch::new(&path.couplings(n_elems, u));
        Ok(mixing_angle_derivative(n_elems, path, u).abs() / (2.0 * tl.gap()))
    };
    let knots: Vec<f64> = (0..=32).map(|i| i as f64 / 32.0).collect();
    let quad = crate::adiabatic::adaptive_simpson(f, &knots, 1e-9, 60_000, f64::INFINITY)
        .expect("infallible integrand");
    let mut cum: Vec<(f64, f64)> = Vec::with_capacity(quad.nodes.len());
    let mut acc = 0.0;
    cum.push((quad.nodes[0].0, 0.0));
    for w in quad.nodes.windows(2) {
        acc += 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0);
        cum.push((w[1].0, acc));
    }
    let t1_of = |u: f64| -> f64 {
        let idx = cum.partition_point(|&(x, _)| x < u);
        if idx == 0 {
            return 0.0;
        }
        if idx == cum.len() {
            return cum.last().unwrap().1;
        }
        let (u0, t0) = cum[idx - 1];
        let (u1, t1) = cum[idx];
        t0 + (t1 - t0) * (u - u0) / (u1 - u0)
    };

    // evolve (c_g, c_e) in the instantaneous eigenbasis
    let mut cg = num_complex::Complex64::new(1.0, 0.0);
    let mut ce = num_complex::Complex64::new(0.0, 0.0);
    let mut u = 0.0f64;
    let mut steps = 0usize;
    let max_du = 1e-2;
    while u < 1.0 {
        let tl = TwoLevelSearch::new(&path.couplings(n_elems, u));
        let dphi = mixing_angle_derivative(n_elems, path, u);
        let du = (step_tol / (0.5 * dphi.abs()).max(1e-300))
            .min(max_du)
            .min(1.0 - u);
        let dt = (t1_of(u + du) - t1_of(u)) / epsilon;
        // i d/du (cg, ce) = [[-r dt/du, -i phi'/2], [i phi'/2, r dt/du]]
        let r = 0.5 * tl.gap();
        let phi_z = -r * dt;
        let phi_y = 0.5 * dphi * du;
        let omega = phi_z.hypot(phi_y);
        let (cos_w, sinc_w) = if omega > 1e-300 {
            (omega.cos(), omega.sin() / omega)
        } else {
            (1.0, 1.0)
        };
        let m00 = num_complex::Complex64::new(cos_w, -sinc_w * phi_z);
        let m11 = num_complex::Complex64::new(cos_w, sinc_w * phi_z);
        let m01 = num_complex::Complex64::new(-sinc_w * phi_y, 0.0);
        let m10 = num_complex::Complex64::new(sinc_w * phi_y, 0.0);
        let (g2, e2) = (m00 * cg + m01 * ce, m10 * cg + m11 * ce);
        cg = g2;
        ce = e2;
        u += du;
        steps += 1;
    }
    SearchRun {
        fidelity: cg.norm_sqr(),
        t_tot: quad.total / epsilon,
        l: quad.total,
        steps,
    }
}

/// t_a for one size and path with the standard threshold.
pub fn search_t_a(n_elems: usize, path: SearchPath) -> crate::adiabatic::TaResult {
    let l = search_path_length(n_elems, path);
    crate::adiabatic::find_t_a(l, 1e-7, 0.3, crate::adiabatic::FIDELITY_THRESHOLD, |eps| {
        Ok(1.0 - search_tdse(n_elems, path, eps, 1e-3).fidelity)
    })
    .expect("threshold reachable for the search family")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense_eigvals;

    #[test]
    fn family_endpoints() {
        let c0 = SearchCouplings::family(16, 0.0);
        assert!((c0.v0 - 1.0).abs() < 1e-15 && c0.vm.abs() < 1e-15 && c0.a.abs() < 1e-15);
        let cinf = SearchCouplings::family(16, 800.0);
        assert!((cinf.v0).abs() < 1e-15);
        assert!((cinf.vm - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn two_level_matches_dense_oracle() {
        // N = 64 dense matrix vs the 2x2 block across the family
        let n = 64;
        for beta in [0.0, 0.5, 1.5, 4.0] {
            let c = SearchCouplings::family(n, beta);
            let h = dense_matrix(&c, 7);
            let mut vals: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
            vals.sort_by(f64::total_cmp);
            let tl = TwoLevelSearch::new(&c);
            let (lo, hi) = tl.eigenvalues();
            assert!((vals[0] - lo).abs() < 1e-12, "beta {beta}");
            // the block's upper level sits somewhere in the flat band or below
            let second_block = vals.iter().find(|&&v| (v - hi).abs() < 1e-12);
            assert!(second_block.is_some(), "beta {beta}");
            // complement flat at 1
            let flat_count = vals.iter().filter(|&&v| (v - 1.0).abs() < 1e-12).count();
            assert!(flat_count >= n - 2);
        }
    }

    #[test]
    fn endpoint_gap_is_one_over_n() {
        for n in [4usize, 64, 4096] {
            let c = SearchCouplings::family_endpoint(n);
            let tl = TwoLevelSearch::new(&c);
            assert!((tl.gap() - 1.0 / n as f64).abs() < 1e-15, "n = {n}");
        }
        // the full spectrum agrees for a small case
        let c = SearchCouplings::family_endpoint(8);
        let vals = dense_eigvals(&dense_matrix(&c, 3));
        assert!((vals[1] - vals[0] - 1.0 / 8.0).abs() < 1e-13);
    }

    #[test]
    fn first_order_locus_bias_vanishes() {
        // Vm = V0, N -> infinity: bias -> 0
        let c = SearchCouplings {
            n_elems: 1 << 20,
            a: 0.0,
            v0: 0.3,
            vm: 0.3,
        };
        let tl = TwoLevelSearch::new(&c);
        assert!(tl.bias().abs() < 1e-6);
        assert!((tl.bias() - 2.0 * 0.3 / (1 << 20) as f64).abs() < 1e-15);
    }

    #[test]
    fn path_ii_matches_projector_interpolation() {
        // A = 0 along path (ii): H = I - (1-u)|psi0><psi0| - u |m><m|
        let n = 32;
        let u = 0.37;
        let c = SearchPath::II.couplings(n, u);
        let h = dense_matrix(&c, 5);
        let nf = n as f64;
        let mut expect = DMatrix::identity(n, n);
        for i in 0..n {
            for j in 0..n {
                expect[(i, j)] -= (1.0 - u) / nf;
            }
        }
        expect[(5, 5)] -= u;
        assert!((h - expect).abs().max() < 1e-14);
    }

    #[test]
    fn path_ii_min_gap_at_half() {
        for n in [16usize, 256, 4096] {
            let gap_at = |u: f64| TwoLevelSearch::new(&SearchPath::II.couplings(n, u)).gap();
            let g_half = gap_at(0.5);
            assert!((g_half - 1.0 / (n as f64).sqrt()).abs() < 1e-12, "n = {n}");
            // symmetric about u = 1/2 and minimal there
            for du in [0.1, 0.25] {
                assert!((gap_at(0.5 - du) - gap_at(0.5 + du)).abs() < 1e-12);
                assert!(gap_at(0.5 + du) > g_half);
            }
        }
    }

    #[test]
    fn path_i_critical_region_scale() {
        // the first-order locus (bias = 0) along path (i) sits where both
        // V0 and Vm are O(1/sqrt N)
        let n = 1 << 12;
        let bias = |u: f64| TwoLevelSearch::new(&SearchPath::I.couplings(n, u)).bias();
        let (mut lo, mut hi) = (0.0, 1.0);
        assert!(bias(lo) < 0.0 && bias(hi) > 0.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if bias(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let c = SearchPath::I.couplings(n, 0.5 * (lo + hi));
        let scale = 1.0 / (n as f64).sqrt();
        assert!(c.v0 / scale > 0.3 && c.v0 / scale < 3.0, "V0 = {}", c.v0);
        assert!(c.vm / scale > 0.3 && c.vm / scale < 3.0, "Vm = {}", c.vm);
    }

    #[test]
    fn marked_state_reached_in_adiabatic_limit() {
        let r = search_tdse(64, SearchPath::II, 1e-3, 1e-3);
        assert!(r.fidelity > 1.0 - 1e-5, "F = {}", r.fidelity);
        let r = search_tdse(64, SearchPath::I, 1e-3, 1e-3);
        assert!(r.fidelity > 1.0 - 1e-5, "F = {}", r.fidelity);
    }

    #[test]
    fn small_problem_finishes_fast() {
        // N = 2: t_a below a fixed small constant on both paths
        for path in [SearchPath::I, SearchPath::II] {
            let r = search_t_a(2, path);
            assert!(r.t_a < 50.0, "{path:?}: t_a = {}", r.t_a);
        }
    }

    #[test]
    fn gauge_term_shifts_only_the_flat_band() {
        // changing A moves the complement relative to the block but leaves
        // the block gap and eigenvectors unchanged
        let n = 16;
        let base = SearchCouplings {
            n_elems: n,
            a: 0.0,
            v0: 0.4,
            vm: 0.2,
        };
        let gauged = SearchCouplings { a: 0.3, ..base };
        let t0 = TwoLevelSearch::new(&base);
        let t1 = TwoLevelSearch::new(&gauged);
        assert!((t0.gap() - t1.gap()).abs() < 1e-15);
        let g0 = t0.ground_state();
        let g1 = t1.ground_state();
        assert!((g0.0 - g1.0).abs() < 1e-15 && (g0.1 - g1.1).abs() < 1e-15);
    }
}
