//! Exact solution of the Ising-chain parent Hamiltonian.
//!
//! A Jordan–Wigner transformation maps the chain Hamiltonian
//! H = n/2 - sum_i [h X_i + J1 Z_i Z_{i+1} - J2 Z_{i-1} X_i Z_{i+1}]
//! onto free fermions. In the even-parity sector the momenta are
//! k = (2 pi / n)(l + 1/2) with 0 < k < pi, each mode an independent
//! two-level system with splitting 4 E_k and mixing angle theta_k:
//! E_k cos(theta_k) = A_k = -h - J1 cos k - J2 cos 2k,
//! E_k sin(theta_k) = B_k = J1 sin k + J2 sin 2k.
//!
//! Everything here works in reduced units h = 1; the one-parameter family
//! traced by the Glauber construction is (J1/h, J2/h) = (2 tanh beta,
//! tanh^2 beta), ending at the tricritical point (2, 1) as beta -> infinity.

use crate::adiabatic::{adaptive_simpson, ParameterPath, QuadResult};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FreeFermionError {
    #[error("chain length must be even, got {0}")]
    OddLength(usize),
    #[error("dispersion vanishes at k = {0} (critical point); angle undefined")]
    GaplessMode(f64),
    #[error("unknown benchmark path id {0:?}")]
    UnknownPath(String),
}

/// Couplings (h, J1, J2) of the chain Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsingCouplings {
    pub h: f64,
    pub j1: f64,
    pub j2: f64,
}

impl IsingCouplings {
    /// Reduced units: divide by h.
    pub fn reduced(&self) -> IsingCouplings {
        IsingCouplings {
            h: 1.0,
            j1: self.j1 / self.h,
            j2: self.j2 / self.h,
        }
    }
}

/// The Glauber one-parameter family:
/// 4h = 1 + sech(2 beta), 2 J1 = tanh(2 beta), 4 J2 = 1 - sech(2 beta).
pub fn couplings_from_beta(beta: f64) -> IsingCouplings {
    assert!(beta >= 0.0);
    let sech = 1.0 / (2.0 * beta).cosh();
    IsingCouplings {
        h: (1.0 + sech) / 4.0,
        j1: (2.0 * beta).tanh() / 2.0,
        j2: (1.0 - sech) / 4.0,
    }
}

/// (E_k, theta_k) at momentum k. theta from atan2(B, A), in (-pi, pi].
pub fn dispersion(k: f64, c: &IsingCouplings) -> Result<(f64, f64), FreeFermionError> {
    let a = -c.h - c.j1 * k.cos() - c.j2 * (2.0 * k).cos();
    let b = c.j1 * k.sin() + c.j2 * (2.0 * k).sin();
    let e = a.hypot(b);
    if e == 0.0 {
        return Err(FreeFermionError::GaplessMode(k));
    }
    Ok((e, b.atan2(a)))
}

/// E_k alone (never fails; zero at critical momenta).
pub fn dispersion_energy(k: f64, c: &IsingCouplings) -> f64 {
    let a = -c.h - c.j1 * k.cos() - c.j2 * (2.0 * k).cos();
    let b = c.j1 * k.sin() + c.j2 * (2.0 * k).sin();
    a.hypot(b)
}

/// d theta_k / ds for coupling velocities (dj1, dj2) at fixed h:
/// theta' = (A B' - B A') / E^2.
pub fn theta_derivative(k: f64, c: &IsingCouplings, dj1: f64, dj2: f64) -> f64 {
    let a = -c.h - c.j1 * k.cos() - c.j2 * (2.0 * k).cos();
    let b = c.j1 * k.sin() + c.j2 * (2.0 * k).sin();
    let e2 = a * a + b * b;
    let da = -dj1 * k.cos() - dj2 * (2.0 * k).cos();
    let db = dj1 * k.sin() + dj2 * (2.0 * k).sin();
    (a * db - b * da) / e2
}

/// Even-parity momentum grid: k = (2 pi / n)(l + 1/2), 0 < k < pi.
#[derive(Debug, Clone)]
pub struct ModeSet {
    pub n: usize,
    pub momenta: Vec<f64>,
}

impl ModeSet {
    pub fn new(n: usize) -> Result<Self, FreeFermionError> {
        if n % 2 != 0 {
            return Err(FreeFermionError::OddLength(n));
        }
        let momenta = (0..n / 2)
            .map(|l| 2.0 * std::f64::consts::PI / n as f64 * (l as f64 + 0.5))
            .collect();
        Ok(ModeSet { n, momenta })
    }
}

/// Even-sector gap: 4 min_k E_k over the mode grid.
pub fn gap_even_sector(n: usize, c: &IsingCouplings) -> Result<f64, FreeFermionError> {
    let modes = ModeSet::new(n)?;
    Ok(4.0
        * modes
            .momenta
            .iter()
            .map(|&k| dispersion_energy(k, c))
            .fold(f64::INFINITY, f64::min))
}

/// Even-sector ground energy relative to the n/2 offset:
/// E_0 = n/2 - 2 sum_k E_k.
pub fn ground_energy_even(n: usize, c: &IsingCouplings) -> Result<f64, FreeFermionError> {
    let modes = ModeSet::new(n)?;
    let sum: f64 = modes.momenta.iter().map(|&k| dispersion_energy(k, c)).sum();
    Ok(n as f64 / 2.0 - 2.0 * sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Paramagnetic,
    Ferromagnetic,
    ClusterState,
    Boundary(BoundaryKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    /// h + J1 + J2 = 0; gap closes at k = 0.
    ZoneCenter,
    /// h - J1 + J2 = 0; gap closes at k = pi.
    ZoneEdge,
    /// h = J2, |J1| < 2h; gap closes at the incommensurate
    /// k = pi - arccos(J1 / 2 J2).
    Incommensurate,
    Tricritical,
}

const PHASE_TOL: f64 = 1e-12;

/// Phase of the extended parameter space (h > 0) from the three gap-closing
/// lines. The J2 = 0 cut reduces to the transverse-field Ising model and
/// anchors PM/FM; the J1 = 0 cut anchors the cluster-state-like phase.
pub fn classify_phase(c: &IsingCouplings) -> Phase {
    assert!(c.h > 0.0);
    let s1 = c.h + c.j1 + c.j2;
    let s2 = c.h - c.j1 + c.j2;
    let on_line3 = (c.h - c.j2).abs() <= PHASE_TOL;
    if on_line3 && ((c.j1.abs() - 2.0 * c.h).abs() <= PHASE_TOL) {
        return Phase::Boundary(BoundaryKind::Tricritical);
    }
    if s1.abs() <= PHASE_TOL {
        return Phase::Boundary(BoundaryKind::ZoneCenter);
    }
    if s2.abs() <= PHASE_TOL {
        return Phase::Boundary(BoundaryKind::ZoneEdge);
    }
    if on_line3 && c.j1.abs() < 2.0 * c.h {
        return Phase::Boundary(BoundaryKind::Incommensurate);
    }
    if s1 < 0.0 || s2 < 0.0 {
        Phase::Ferromagnetic
    } else if c.j2 > c.h {
        Phase::ClusterState
    } else {
        Phase::Paramagnetic
    }
}

/// Finite-n metric over (J1, J2) with h fixed:
/// g = sum_{0<k<pi} sin^2(k) / (64 E_k^6) *
///     [[(h-J2)^2, (h-J2)(2h cos k + J1)], [sym, (2h cos k + J1)^2]].
pub fn analytic_metric_finite(n: usize, c: &IsingCouplings) -> Result<[[f64; 2]; 2], FreeFermionError> {
    let modes = ModeSet::new(n)?;
    let mut g = [[0.0; 2]; 2];
    for &k in &modes.momenta {
        let e = dispersion_energy(k, c);
        if e == 0.0 {
            return Err(FreeFermionError::GaplessMode(k));
        }
        let w = k.sin().powi(2) / (64.0 * e.powi(6));
        let p = c.h - c.j2;
        let q = 2.0 * c.h * k.cos() + c.j1;
        g[0][0] += w * p * p;
        g[0][1] += w * p * q;
        g[1][1] += w * q * q;
    }
    g[1][0] = g[0][1];
    Ok(g)
}

/// Thermodynamic-limit metric per site times n: the momentum sum becomes
/// (n / 2 pi) int_0^pi dk. The quadrature splits at the dispersion minimum,
/// where the 1/E^6 integrand peaks.
pub fn analytic_metric_thermodynamic(
    n_scale: f64,
    c: &IsingCouplings,
) -> Result<[[f64; 2]; 2], FreeFermionError> {
    let kmin = dispersion_minimum(c).0;
    let pi = std::f64::consts::PI;
    let mut knots = vec![1e-12, pi - 1e-12];
    for frac in [0.25, 0.5, 0.75] {
        knots.push(pi * frac);
    }
    if kmin > 1e-6 && kmin < pi - 1e-6 {
        knots.push(kmin);
        // flank the peak
        knots.push((kmin - 1e-3).max(1e-12));
        knots.push((kmin + 1e-3).min(pi - 1e-12));
    }
    knots.sort_by(f64::total_cmp);
    knots.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    let mut g = [[0.0; 2]; 2];
    for (idx, sel) in [(0usize, 0usize), (0, 1), (1, 1)].iter().enumerate() {
        let integrand = |k: f64| -> Result<f64, FreeFermionError> {
            let e = dispersion_energy(k, c);
            let w = k.sin().powi(2) / (64.0 * e.powi(6));
            let p = c.h - c.j2;
            let q = 2.0 * c.h * k.cos() + c.j1;
            let factors = [p * p, p * q, q * q];
            Ok(w * factors[idx])
        };
        let q: QuadResult = adaptive_simpson(integrand, &knots, 1e-9, 40_000, f64::INFINITY)?;
        g[sel.0][sel.1] = q.total * n_scale / (2.0 * pi);
    }
    g[1][0] = g[0][1];
    Ok(g)
}

/// Location and value of the continuum dispersion minimum over (0, pi).
pub fn dispersion_minimum(c: &IsingCouplings) -> (f64, f64) {
    let pi = std::f64::consts::PI;
    let mut best = (0.0, f64::INFINITY);
    let coarse = 2000;
    for i in 0..=coarse {
        let k = pi * i as f64 / coarse as f64;
        let e = dispersion_energy(k, c);
        if e < best.1 {
            best = (k, e);
        }
    }
    // golden-section polish around the coarse minimum
    let (mut a, mut b) = (
        (best.0 - pi / coarse as f64).max(0.0),
        (best.0 + pi / coarse as f64).min(pi),
    );
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let x1 = b - phi * (b - a);
        let x2 = a + phi * (b - a);
        if dispersion_energy(x1, c) < dispersion_energy(x2, c) {
            b = x2;
        } else {
            a = x1;
        }
    }
    let k = 0.5 * (a + b);
    (k, dispersion_energy(k, c))
}

/// Predicted adiabatic path-length exponent for an approach direction alpha
/// toward the tricritical point (J1, J2) = (2, 1) + eta (cos a, sin a), h=1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalingPrediction {
    /// l ~ n^exponent from the finite-size scaling collapse.
    Exponent(f64),
    /// The dispersion minimum sits at an incommensurate momentum along the
    /// ray; the scaling hypothesis breaks down.
    NoPrediction,
}

/// Metric divergence exponents: rho = 5/2 on the ferromagnetic side
/// (-3pi/4 < alpha < pi/4), rho = 5 otherwise; sigma = 6 at the point.
/// The path-length exponent is (2 - 2 sigma + rho sigma) / (2 rho).
pub fn tricritical_scaling(alpha: f64) -> ScalingPrediction {
    let pi = std::f64::consts::PI;
    // normalize into (-3pi/4, 5pi/4]
    let mut a = alpha;
    while a > 1.25 * pi {
        a -= 2.0 * pi;
    }
    while a <= -0.75 * pi {
        a += 2.0 * pi;
    }
    let boundary = (a - 0.25 * pi).abs() < 1e-12 || (a - 1.25 * pi).abs() < 1e-12;
    if boundary {
        return ScalingPrediction::NoPrediction;
    }
    // check for an incommensurate dispersion minimum along the ray
    let eta = 1e-3;
    let c = IsingCouplings {
        h: 1.0,
        j1: 2.0 + eta * a.cos(),
        j2: 1.0 + eta * a.sin(),
    };
    let (kmin, _) = dispersion_minimum(&c);
    let commensurate = kmin < 0.01 || (pi - kmin) < 0.01;
    if !commensurate {
        // tolerate the sqrt(eta) drift of rays that still obey the collapse:
        // only k drifting SLOWER than sqrt(eta) signals a true incommensurate
        // scale. Probe a second eta to measure the drift rate.
        let eta2 = eta / 16.0;
        let c2 = IsingCouplings {
            h: 1.0,
            j1: 2.0 + eta2 * a.cos(),
            j2: 1.0 + eta2 * a.sin(),
        };
        let (kmin2, _) = dispersion_minimum(&c2);
        let drift1 = (pi - kmin).min(kmin);
        let drift2 = (pi - kmin2).min(kmin2);
        // sqrt scaling: drift ratio = 4 for eta ratio 16
        if drift2 > 1e-4 && drift1 / drift2 < 8.0 {
            // consistent with drift ~ sqrt(eta): commensurate in the scaling sense
        } else {
            return ScalingPrediction::NoPrediction;
        }
    }
    let fm_side = a > -0.75 * pi && a < 0.25 * pi;
    let rho = if fm_side { 2.5 } else { 5.0 };
    let sigma = 6.0;
    ScalingPrediction::Exponent((2.0 - 2.0 * sigma + rho * sigma) / (2.0 * rho))
}

/// Benchmark path ids from the reduced-unit parametrization table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IsingPath {
    I,
    II,
    III,
    IV,
}

impl IsingPath {
    pub fn parse(s: &str) -> Result<Self, FreeFermionError> {
        match s {
            "i" => Ok(IsingPath::I),
            "ii" => Ok(IsingPath::II),
            "iii" => Ok(IsingPath::III),
            "iv" => Ok(IsingPath::IV),
            other => Err(FreeFermionError::UnknownPath(other.to_string())),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            IsingPath::I => "i",
            IsingPath::II => "ii",
            IsingPath::III => "iii",
            IsingPath::IV => "iv",
        }
    }

    /// (J1/h, J2/h) at path parameter s in [0, 1].
    pub fn couplings(&self, s: f64) -> (f64, f64) {
        match self {
            IsingPath::I => (2.0 * s, s),
            // the one-parameter family, s = tanh(beta)
            IsingPath::II => (2.0 * s, s * s),
            IsingPath::III => (
                3.0 * (1.0 - s).powi(2) * s + 7.5 * (1.0 - s) * s * s + 2.0 * s.powi(3),
                1.5 * (1.0 - s) * s * s + s.powi(3),
            ),
            IsingPath::IV => (
                6.0 * (1.0 - s).powi(2) * s + 9.0 * (1.0 - s) * s * s + 2.0 * s.powi(3),
                -3.0 * (1.0 - s).powi(2) * s + 4.5 * (1.0 - s) * s * s + s.powi(3),
            ),
        }
    }

    /// d(J1, J2)/ds.
    pub fn derivative(&self, s: f64) -> (f64, f64) {
        match self {
            IsingPath::I => (2.0, 1.0),
            IsingPath::II => (2.0, 2.0 * s),
            IsingPath::III => (
                3.0 * ((1.0 - s).powi(2) - 2.0 * (1.0 - s) * s)
                    + 7.5 * (2.0 * s * (1.0 - s) - s * s)
                    + 6.0 * s * s,
                1.5 * (2.0 * s * (1.0 - s) - s * s) + 3.0 * s * s,
            ),
            IsingPath::IV => (
                6.0 * ((1.0 - s).powi(2) - 2.0 * (1.0 - s) * s)
                    + 9.0 * (2.0 * s * (1.0 - s) - s * s)
                    + 6.0 * s * s,
                -3.0 * ((1.0 - s).powi(2) - 2.0 * (1.0 - s) * s)
                    + 4.5 * (2.0 * s * (1.0 - s) - s * s)
                    + 3.0 * s * s,
            ),
        }
    }

    /// As a generic [`ParameterPath`] over (J1, J2).
    pub fn parameter_path(&self) -> ParameterPath {
        let id = *self;
        ParameterPath::with_derivative(
            2,
            move |s| {
                let (a, b) = id.couplings(s);
                vec![a, b]
            },
            move |s| {
                let (a, b) = id.derivative(s);
                vec![a, b]
            },
        )
    }

    pub fn all() -> [IsingPath; 4] {
        [IsingPath::I, IsingPath::II, IsingPath::III, IsingPath::IV]
    }
}

/// Scaling prediction for a benchmark path: classify by the approach
/// direction at s = 1, with the incommensurate-minimum caveat checked along
/// the actual path.
pub fn path_scaling_prediction(path: IsingPath) -> ScalingPrediction {
    // minimum location along the path close to the endpoint
    let (j1, j2) = path.couplings(1.0 - 1e-3);
    let c = IsingCouplings { h: 1.0, j1, j2 };
    let (kmin, _) = dispersion_minimum(&c);
    let pi = std::f64::consts::PI;
    if kmin > 0.01 && pi - kmin > 0.01 {
        return ScalingPrediction::NoPrediction;
    }
    // the branch is set by the phase the path traverses near the endpoint
    // (covers paths approaching along the FM boundary direction 5 pi / 4)
    let rho = match classify_phase(&c) {
        Phase::Ferromagnetic => 2.5,
        Phase::Paramagnetic | Phase::ClusterState => 5.0,
        Phase::Boundary(_) => return ScalingPrediction::NoPrediction,
    };
    let sigma = 6.0;
    ScalingPrediction::Exponent((2.0 - 2.0 * sigma + rho * sigma) / (2.0 * rho))
}

/// Cumulative schedule table: T1(s) = int_0^s sqrt(G) with eps = 1, where
/// G = sum g_{mu nu} dlambda_mu dlambda_nu from the analytic finite-n metric.
#[derive(Debug, Clone)]
pub struct FreeFermionSchedule {
    /// (s, T1 cumulative) samples, increasing.
    samples: Vec<(f64, f64)>,
    pub l: f64,
    pub diverged: bool,
}

impl FreeFermionSchedule {
    pub fn t1_of_s(&self, s: f64) -> f64 {
        let idx = self.samples.partition_point(|&(x, _)| x < s);
        if idx == 0 {
            return self.samples[0].1;
        }
        if idx == self.samples.len() {
            return self.samples.last().unwrap().1;
        }
        let (s0, t0) = self.samples[idx - 1];
        let (s1, t1) = self.samples[idx];
        if s1 == s0 {
            return t0;
        }
        t0 + (t1 - t0) * (s - s0) / (s1 - s0)
    }
}

/// sqrt(G(s)) for a path on the finite-n free-fermion family.
pub fn sqrt_g_at(n: usize, path: IsingPath, s: f64) -> Result<f64, FreeFermionError> {
    let (j1, j2) = path.couplings(s);
    let c = IsingCouplings { h: 1.0, j1, j2 };
    let g = analytic_metric_finite(n, &c)?;
    let (d1, d2) = path.derivative(s);
    let gg = g[0][0] * d1 * d1 + 2.0 * g[0][1] * d1 * d2 + g[1][1] * d2 * d2;
    Ok(gg.max(0.0).sqrt())
}

/// Build the schedule table for (n, path) by adaptive quadrature.
pub fn freefermion_schedule(
    n: usize,
    path: IsingPath,
    rel_tol: f64,
    max_evals: usize,
) -> Result<FreeFermionSchedule, FreeFermionError> {
    let eval = |s: f64| -> Result<f64, FreeFermionError> {
        match sqrt_g_at(n, path, s) {
            Ok(v) => Ok(v),
            // a node can land exactly on a gapless point; nudge inward
            Err(FreeFermionError::GaplessMode(_)) => sqrt_g_at(n, path, (s - 1e-9).max(0.0)),
            Err(e) => Err(e),
        }
    };
    let knots: Vec<f64> = (0..=24).map(|i| i as f64 / 24.0).collect();
    let q = adaptive_simpson(eval, &knots, rel_tol, max_evals, 1e30)?;
    // cumulative trapezoid over the refined nodes
    let mut samples = Vec::with_capacity(q.nodes.len());
    let mut acc = 0.0;
    samples.push((q.nodes[0].0, 0.0));
    for w in q.nodes.windows(2) {
        acc += 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0);
        samples.push((w[1].0, acc));
    }
    Ok(FreeFermionSchedule {
        samples,
        l: q.total,
        diverged: q.diverged,
    })
}

/// Result of one per-mode evolution.
#[derive(Debug, Clone)]
pub struct ModeRunResult {
    pub fidelity: f64,
    pub t_tot: f64,
    pub l: f64,
    pub total_steps: usize,
}

/// Per-mode step constant: ds = MODE_STEP / |d theta / ds|.
pub const MODE_STEP: f64 = 2e-3;

/// Evolve every even-sector mode through the path at adiabatic rate eps and
/// multiply the per-mode ground-state populations into the total fidelity.
///
/// Per mode the state (c_k, d_k) in the instantaneous eigenbasis obeys
/// i d/ds (c, d) = [[-2 E dt/ds, -i theta'/2], [i theta'/2, 2 E dt/ds]] (c, d),
/// integrated with piecewise-constant coefficients over
/// ds = MODE_STEP / |theta'|.
pub fn mode_tdse(
    n: usize,
    path: IsingPath,
    epsilon: f64,
    schedule: &FreeFermionSchedule,
) -> Result<ModeRunResult, FreeFermionError> {
    mode_tdse_with_step(n, path, epsilon, schedule, MODE_STEP)
}

/// Same evolution with an explicit step constant (convergence studies).
pub fn mode_tdse_with_step(
    n: usize,
    path: IsingPath,
    epsilon: f64,
    schedule: &FreeFermionSchedule,
    step: f64,
) -> Result<ModeRunResult, FreeFermionError> {
    let modes = ModeSet::new(n)?;
    let mut fidelity = 1.0;
    let mut total_steps = 0usize;
    let max_ds = 2e-2;
    for &k in &modes.momenta {
        let mut c = Complex64::new(1.0, 0.0);
        let mut d = Complex64::new(0.0, 0.0);
        let mut s = 0.0f64;
        while s < 1.0 {
            let (j1, j2) = path.couplings(s);
            let cp = IsingCouplings { h: 1.0, j1, j2 };
            let (e, _) = match dispersion(k, &cp) {
                Ok(v) => v,
                Err(FreeFermionError::GaplessMode(_)) => {
                    // perturb the node off the exact gap closure
                    let s2 = (s + 1e-9).min(1.0);
                    let (j1, j2) = path.couplings(s2);
                    dispersion(k, &IsingCouplings { h: 1.0, j1, j2 })?
                }
                Err(e) => return Err(e),
            };
            let (dj1, dj2) = path.derivative(s);
            let th_prime = theta_derivative(k, &cp, dj1, dj2);
            let ds = (step / th_prime.abs()).min(max_ds).min(1.0 - s);
            // integrated time increment over the step, exact for the table
            let dt = (schedule.t1_of_s(s + ds) - schedule.t1_of_s(s)) / epsilon;
            // U = exp(-i (phi_z sigma_z + phi_y sigma_y)) on (c, d):
            // phi_z = -2 E dt, phi_y = theta' ds / 2
            let phi_z = -2.0 * e * dt;
            let phi_y = 0.5 * th_prime * ds;
            let omega = phi_z.hypot(phi_y);
            let (cos_w, sinc_w) = if omega > 1e-300 {
                (omega.cos(), omega.sin() / omega)
            } else {
                (1.0, 1.0)
            };
            // matrix: cos w * I - i sinc w * (phi_z sigma_z + phi_y sigma_y)
            let m00 = Complex64::new(cos_w, -sinc_w * phi_z);
            let m11 = Complex64::new(cos_w, sinc_w * phi_z);
            let m01 = Complex64::new(-sinc_w * phi_y, 0.0);
            let m10 = Complex64::new(sinc_w * phi_y, 0.0);
            let (c2, d2) = (m00 * c + m01 * d, m10 * c + m11 * d);
            c = c2;
            d = d2;
            s += ds;
            total_steps += 1;
        }
        fidelity *= c.norm_sqr();
    }
    Ok(ModeRunResult {
        fidelity,
        t_tot: schedule.l / epsilon,
        l: schedule.l,
        total_steps,
    })
}
