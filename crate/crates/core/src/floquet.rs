//! Floquet eigenproblem of a periodically driven Hamiltonian and the
//! harmonic decomposition of system operators in the Floquet-mode basis.
//!
//! Production path: one-period propagator (monodromy) from fourth-order
//! Magnus steps, diagonalized sector by sector; modes reconstructed
//! stroboscopically on the uniform time grid.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Schur;
use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::linalg::{magnus4_step, unitarity_defect, CMat, GAUSS2};

/// Default number of time samples per period.
pub const DEFAULT_STEPS: usize = 1 << 10;
/// Quasienergies of one sector closer than this are flagged as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;
const UNITARITY_TOL: f64 = 1e-10;

/// Propagators `U(t_j)` at `t_j = j T / steps`, `j = 0..=steps`.
#[derive(Clone, Debug)]
pub struct Propagation {
    pub omega: f64,
    pub propagators: Vec<CMat>,
}

impl Propagation {
    pub fn steps(&self) -> usize {
        self.propagators.len() - 1
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    pub fn monodromy(&self) -> &CMat {
        self.propagators.last().unwrap()
    }
}

/// Builds `U(t_j)` over one period of `h` by products of Magnus steps.
pub fn propagate_period<H>(h: H, omega: f64, steps: usize) -> Result<Propagation>
where
    H: Fn(f64) -> CMat,
{
    assert!(steps > 0);
    let period = 2.0 * PI / omega;
    let dt = period / steps as f64;
    let dim = h(0.0).nrows();
    let mut propagators = Vec::with_capacity(steps + 1);
    let mut u = CMat::identity(dim, dim);
    propagators.push(u.clone());
    for j in 0..steps {
        let t0 = j as f64 * dt;
        let step = magnus4_step(&h(t0 + GAUSS2[0] * dt), &h(t0 + GAUSS2[1] * dt), dt);
        u = step * u;
        propagators.push(u.clone());
    }
    let deviation = propagators
        .iter()
        .map(unitarity_defect)
        .fold(0.0, f64::max);
    if deviation > UNITARITY_TOL {
        return Err(Error::StepCount { deviation });
    }
    Ok(Propagation {
        omega,
        propagators,
    })
}

/// Folds a quasienergy into `(-omega/2, omega/2]`.
pub fn fold_quasienergy(e: f64, omega: f64) -> f64 {
    let mut x = e - omega * (e / omega).round();
    if x <= -omega / 2.0 {
        x += omega;
    }
    if x > omega / 2.0 {
        x -= omega;
    }
    x
}

/// Quasienergies and time-sampled Floquet modes.
#[derive(Clone, Debug)]
pub struct FloquetBasis {
    pub omega: f64,
    /// Folded into `(-omega/2, omega/2]`.
    pub quasienergies: Vec<f64>,
    /// Particle-number sector of each mode (0 when no sectors were given).
    pub sector: Vec<usize>,
    /// `modes[j]` holds `|r(t_j)>` as column `r`, `j = 0..steps`.
    pub modes: Vec<CMat>,
    pub monodromy: CMat,
    /// Set when two modes of one sector share a quasienergy.
    pub degenerate: bool,
}

impl FloquetBasis {
    pub fn dim(&self) -> usize {
        self.quasienergies.len()
    }

    pub fn steps(&self) -> usize {
        self.modes.len()
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    pub fn time(&self, j: usize) -> f64 {
        self.period() * j as f64 / self.steps() as f64
    }

    /// Quasienergies of the modes of one particle-number sector.
    pub fn sector_quasienergies(&self, sector: usize) -> Vec<f64> {
        self.quasienergies
            .iter()
            .zip(&self.sector)
            .filter(|(_, s)| **s == sector)
            .map(|(e, _)| *e)
            .collect()
    }
}

/// Diagonalizes the monodromy within each invariant block of basis states
/// (`sectors`; pass a single block for no structure) and reconstructs the
/// modes on the propagation grid.
pub fn floquet_modes(prop: &Propagation, sectors: &[Vec<usize>]) -> Result<FloquetBasis> {
    let omega = prop.omega;
    let period = prop.period();
    let monodromy = prop.monodromy().clone();
    let dim = monodromy.nrows();
    let mut initial = CMat::zeros(dim, dim);
    let mut quasienergies = Vec::with_capacity(dim);
    let mut sector_of = Vec::with_capacity(dim);
    let mut degenerate = false;

    let mut col = 0;
    for (label, states) in sectors.iter().enumerate() {
        if states.is_empty() {
            continue;
        }
        let m = states.len();
        let block = CMat::from_fn(m, m, |a, b| monodromy[(states[a], states[b])]);
        let (q, tri) = Schur::new(block).unpack();
        let mut local = Vec::with_capacity(m);
        for r in 0..m {
            let e = fold_quasienergy(-tri[(r, r)].arg() / period, omega);
            local.push(e);
            let mut v = q.column(r).clone_owned();
            fix_gauge(v.as_mut_slice());
            for (a, &s) in states.iter().enumerate() {
                initial[(s, col)] = v[a];
            }
            quasienergies.push(e);
            sector_of.push(label);
            col += 1;
        }
        for a in 0..m {
            for b in (a + 1)..m {
                let d = fold_quasienergy(local[a] - local[b], omega).abs();
                if d < DEGENERACY_TOL {
                    degenerate = true;
                }
            }
        }
    }
    if col != dim {
        return Err(Error::InvalidParameter {
            name: "sectors",
            reason: format!("sectors cover {col} of {dim} basis states"),
        });
    }

    let steps = prop.steps();
    let modes = (0..steps)
        .map(|j| {
            let t = period * j as f64 / steps as f64;
            let mut m = &prop.propagators[j] * &initial;
            for (r, mut column) in m.column_iter_mut().enumerate() {
                column *= C64::from_polar(1.0, quasienergies[r] * t);
            }
            m
        })
        .collect();

    Ok(FloquetBasis {
        omega,
        quasienergies,
        sector: sector_of,
        modes,
        monodromy,
        degenerate,
    })
}

/// Rotates the vector so its largest-magnitude component is real positive.
fn fix_gauge(v: &mut [C64]) {
    let (idx, _) = v
        .iter()
        .enumerate()
        .fold((0, -1.0), |(bi, bv), (i, z)| {
            // ties resolved toward the lowest index
            if z.norm() > bv + 1e-12 {
                (i, z.norm())
            } else {
                (bi, bv)
            }
        });
    let phase = v[idx].conj() / v[idx].norm();
    for z in v.iter_mut() {
        *z *= phase;
    }
}

/// Propagates `h` and solves for its Floquet basis in one go.
pub fn solve_floquet<H>(h: H, omega: f64, steps: usize, sectors: &[Vec<usize>]) -> Result<FloquetBasis>
where
    H: Fn(f64) -> CMat,
{
    let prop = propagate_period(h, omega, steps)?;
    floquet_modes(&prop, sectors)
}

/// Harmonic decomposition `<k(t)|S|l(t)> = sum_n s_{kln} e^{i n Omega t}`.
#[derive(Clone, Debug)]
pub struct HarmonicOperator {
    pub dim: usize,
    pub max_harmonic: usize,
    /// `s_{kln}` at `coeffs[(k * dim + l) * (2 N_h + 1) + n + N_h]`.
    coeffs: Vec<C64>,
    /// Maximum reconstruction error on the time grid.
    pub residual: f64,
}

impl HarmonicOperator {
    #[inline]
    pub fn coeff(&self, k: usize, l: usize, n: i64) -> C64 {
        let nh = self.max_harmonic as i64;
        if n.abs() > nh {
            return C64::new(0.0, 0.0);
        }
        self.coeffs[(k * self.dim + l) * (2 * self.max_harmonic + 1) + (n + nh) as usize]
    }

    pub fn harmonics(&self) -> std::ops::RangeInclusive<i64> {
        -(self.max_harmonic as i64)..=(self.max_harmonic as i64)
    }

    /// Transition frequency `Delta_{kln} = eps_k - eps_l + n Omega`.
    pub fn frequency(basis: &FloquetBasis, k: usize, l: usize, n: i64) -> f64 {
        basis.quasienergies[k] - basis.quasienergies[l] + n as f64 * basis.omega
    }

    /// `sum_n s_{kln} e^{i n Omega t_j}`.
    pub fn reconstruct(&self, basis: &FloquetBasis, k: usize, l: usize, j: usize) -> C64 {
        let t = basis.time(j);
        self.harmonics()
            .map(|n| self.coeff(k, l, n) * C64::from_polar(1.0, n as f64 * basis.omega * t))
            .sum()
    }

    /// Dressed matrix `s_{kln} |k(t_j)><l(t_j)|`.
    pub fn dressed(&self, basis: &FloquetBasis, k: usize, l: usize, n: i64, j: usize) -> CMat {
        let modes = &basis.modes[j];
        modes.column(k) * modes.column(l).adjoint() * self.coeff(k, l, n)
    }
}

/// Matrix elements `<k(t_j)|S|l(t_j)>` for every grid point, as `[j][(k, l)]`.
fn mode_matrix_elements(op: &CMat, basis: &FloquetBasis) -> Vec<CMat> {
    basis
        .modes
        .iter()
        .map(|v| v.adjoint() * op * v)
        .collect()
}

fn fft_plan(n: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_forward(n)
}

/// Decomposes `op` into harmonics `|n| <= max_harmonic` by FFT of the grid
/// samples and reports the reconstruction residual.
pub fn decompose_operator(op: &CMat, basis: &FloquetBasis, max_harmonic: usize) -> HarmonicOperator {
    let steps = basis.steps();
    assert!(max_harmonic >= 1, "need at least the first harmonic");
    assert!(2 * max_harmonic < steps, "harmonics beyond the Nyquist limit of the grid");
    let dim = basis.dim();
    let samples = mode_matrix_elements(op, basis);
    let fft = fft_plan(steps);
    let width = 2 * max_harmonic + 1;
    let mut coeffs = vec![C64::new(0.0, 0.0); dim * dim * width];
    let mut residual: f64 = 0.0;
    let mut buffer = vec![C64::new(0.0, 0.0); steps];
    for k in 0..dim {
        for l in 0..dim {
            for (j, b) in buffer.iter_mut().enumerate() {
                *b = samples[j][(k, l)];
            }
            if buffer.iter().all(|z| z.norm() == 0.0) {
                continue;
            }
            let original = buffer.clone();
            fft.process(&mut buffer);
            let base = (k * dim + l) * width;
            for n in -(max_harmonic as i64)..=(max_harmonic as i64) {
                let idx = n.rem_euclid(steps as i64) as usize;
                coeffs[base + (n + max_harmonic as i64) as usize] = buffer[idx] / steps as f64;
            }
            // reconstruction on the grid
            for (j, value) in original.iter().enumerate() {
                let t = 2.0 * PI * j as f64 / steps as f64;
                let approx: C64 = (0..width)
                    .map(|w| coeffs[base + w] * C64::from_polar(1.0, (w as f64 - max_harmonic as f64) * t))
                    .sum();
                residual = residual.max((approx - value).norm());
            }
        }
    }
    HarmonicOperator {
        dim,
        max_harmonic,
        coeffs,
        residual,
    }
}

/// Raises the harmonic cut-off until the reconstruction residual drops below
/// `tol`.
pub fn decompose_operator_adaptive(op: &CMat, basis: &FloquetBasis, tol: f64) -> Result<HarmonicOperator> {
    let limit = basis.steps() / 2 - 1;
    let mut nh = 4;
    loop {
        let h = decompose_operator(op, basis, nh.min(limit));
        if h.residual < tol {
            return Ok(h);
        }
        if nh >= limit {
            return Err(Error::Truncation {
                residual: h.residual,
                tolerance: tol,
                advice: "raise the number of time steps per period",
            });
        }
        nh = (nh * 3 / 2).max(nh + 2);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{FockSpace, TqdParams, MODE_LEFT};
    use crate::linalg::{c, expm_neg_i_hermitian, max_abs};
    use crate::model::DrivingProtocol;
    use approx::assert_abs_diff_eq;

    fn fast_pump(lambda: f64, bias: f64, phase: f64) -> TqdParams {
        TqdParams::symmetric(
            DrivingProtocol {
                omega: 1.9,
                phase,
                dot_amplitude: 2.5,
                amp_left: 1.0,
                amp_right: 1.0,
                eps0: 1.0,
            },
            lambda,
            bias,
        )
    }

    fn tqd_basis(p: &TqdParams, steps: usize) -> FloquetBasis {
        let fock = FockSpace::triple_dot();
        solve_floquet(|t| p.fock_hamiltonian(t, &fock), p.omega(), steps, &fock.number_sectors()).unwrap()
    }

    fn single_dot(a0: f64, omega: f64, phase: f64, eps0: f64) -> impl Fn(f64) -> CMat {
        move |t| {
            let mut h = CMat::zeros(2, 2);
            h[(1, 1)] = c(eps0 + a0 * (omega * t + phase).cos());
            h
        }
    }

    /// Bessel function of the first kind by quadrature of its integral form.
    fn bessel_j(n: i64, z: f64) -> f64 {
        let m = 4000;
        let h = PI / m as f64;
        let f = |tau: f64| (n as f64 * tau - z * tau.sin()).cos();
        let mut s = 0.5 * (f(0.0) + f(PI));
        for i in 1..m {
            s += f(i as f64 * h);
        }
        s * h / PI
    }

    #[test]
    fn constant_hamiltonian_propagator() {
        let p = fast_pump(0.7, 1.0, 0.0);
        let h0 = p.fock_hamiltonian(0.3, &FockSpace::triple_dot());
        let prop = propagate_period(|_| h0.clone(), 1.9, 64).unwrap();
        let exact = expm_neg_i_hermitian(&(&h0 * c(prop.period())));
        assert!(max_abs(&(prop.monodromy() - exact)) < 1e-12);
    }

    #[test]
    fn commuting_family_integrates_the_cosine_away() {
        let (a0, omega, eps0) = (2.5, 1.9, 1.0);
        let prop = propagate_period(single_dot(a0, omega, 0.4, eps0), omega, 256).unwrap();
        let u = prop.monodromy();
        let period = prop.period();
        assert!((u[(0, 0)] - c(1.0)).norm() < 1e-12);
        assert!((u[(1, 1)] - C64::from_polar(1.0, -eps0 * period)).norm() < 1e-12);
    }

    #[test]
    fn propagator_self_convergence() {
        let p = fast_pump(0.5, 1.0, 0.8);
        let fock = FockSpace::triple_dot();
        let coarse = propagate_period(|t| p.fock_hamiltonian(t, &fock), 1.9, 1024).unwrap();
        let fine = propagate_period(|t| p.fock_hamiltonian(t, &fock), 1.9, 2048).unwrap();
        assert!(max_abs(&(coarse.monodromy() - fine.monodromy())) < 1e-8);
    }

    #[test]
    fn undriven_quasienergies_are_folded_static_levels() {
        let mut p = fast_pump(0.6, 1.5, 0.0);
        p.driving = DrivingProtocol::undriven(1.0, 1.9);
        let basis = tqd_basis(&p, 128);
        let e1 = p.tqd_matrix(0.0).symmetric_eigen().eigenvalues;
        let mut expected: Vec<f64> = e1.iter().map(|e| fold_quasienergy(*e, 1.9)).collect();
        let mut got = basis.sector_quasienergies(1);
        expected.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&expected) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
        // modes change at most by a harmonic phase
        for r in 0..8 {
            let overlap = (basis.modes[0].column(r).adjoint() * basis.modes[77].column(r))[(0, 0)];
            assert_abs_diff_eq!(overlap.norm(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn single_driven_dot_is_exact() {
        let (a0, omega, phase, eps0) = (2.5, 1.9, 0.6, 0.5);
        let prop = propagate_period(single_dot(a0, omega, phase, eps0), omega, 512).unwrap();
        let basis = floquet_modes(&prop, &[vec![0], vec![1]]).unwrap();
        assert_abs_diff_eq!(basis.quasienergies[1], fold_quasienergy(eps0, omega), epsilon = 1e-10);
        let z = a0 / omega;
        for j in [0usize, 100, 333] {
            let t = basis.time(j);
            let expected = C64::from_polar(1.0, -z * ((omega * t + phase).sin() - phase.sin()));
            assert!((basis.modes[j][(1, 1)] - expected).norm() < 1e-9);
        }
        // Jacobi-Anger: |s_{0,1,n}| = |J_n(a0/Omega)|
        let d = FockSpace::new(1).annihilator(0).clone();
        let h = decompose_operator(&d, &basis, 20);
        for n in -6..=6 {
            assert_abs_diff_eq!(h.coeff(0, 1, n).norm(), bessel_j(n, z).abs(), epsilon = 1e-9);
        }
    }

    #[test]
    fn modes_orthonormal_periodic_and_eigen() {
        let p = fast_pump(0.25, 1.9, 1.1);
        let basis = tqd_basis(&p, 512);
        let id = CMat::identity(8, 8);
        for j in (0..512).step_by(37) {
            let v = &basis.modes[j];
            assert!(max_abs(&(v.adjoint() * v - &id)) < 1e-10);
            assert!(max_abs(&(v * v.adjoint() - &id)) < 1e-10);
        }
        // U(T)|r(0)> = e^{-i eps T}|r(0)>
        let period = basis.period();
        for r in 0..8 {
            let v = basis.modes[0].column(r).clone_owned();
            let lhs = &basis.monodromy * &v;
            let rhs = &v * C64::from_polar(1.0, -basis.quasienergies[r] * period);
            assert!((lhs - rhs).norm() < 1e-10);
            assert!(basis.quasienergies[r] > -1.9 / 2.0 && basis.quasienergies[r] <= 1.9 / 2.0);
        }
    }

    #[test]
    fn two_particle_quasienergies_are_pair_sums() {
        let p = fast_pump(0.5, 0.7, 2.0);
        let basis = tqd_basis(&p, 512);
        let one = basis.sector_quasienergies(1);
        let two = basis.sector_quasienergies(2);
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            let target = one[a] + one[b];
            let hit = two
                .iter()
                .any(|e| fold_quasienergy(e - target, 1.9).abs() < 1e-8);
            assert!(hit, "pair ({a},{b}) missing");
        }
    }

    /// Quasienergies from a truncated extended-space (Sambe) diagonalization
    /// of the single-particle block.
    fn sambe_quasienergies(p: &TqdParams, harmonics: usize) -> Vec<f64> {
        let omega = p.omega();
        let steps = 64;
        // Fourier components of the 3x3 matrix by direct quadrature
        let comp = |m: i64| {
            let mut acc = CMat::zeros(3, 3);
            for j in 0..steps {
                let t = p.period() * j as f64 / steps as f64;
                let h = crate::hamiltonian::to_complex(&p.tqd_matrix(t));
                acc += h * C64::from_polar(1.0 / steps as f64, -(m as f64) * omega * t);
            }
            acc
        };
        let comps: Vec<CMat> = (-2..=2).map(comp).collect();
        let nb = 2 * harmonics + 1;
        let mut big = CMat::zeros(3 * nb, 3 * nb);
        for a in 0..nb {
            for b in 0..nb {
                let diff = a as i64 - b as i64;
                if diff.abs() <= 2 {
                    let block = &comps[(diff + 2) as usize];
                    for i in 0..3 {
                        for k in 0..3 {
                            big[(3 * a + i, 3 * b + k)] += block[(i, k)];
                        }
                    }
                }
            }
            let shift = (a as f64 - harmonics as f64) * omega;
            for i in 0..3 {
                big[(3 * a + i, 3 * a + i)] += c(shift);
            }
        }
        let eig = big.symmetric_eigen();
        // keep states localized away from the truncation edges
        let mut out = Vec::new();
        for (r, e) in eig.eigenvalues.iter().enumerate() {
            let v = eig.eigenvectors.column(r);
            let edge: f64 = (0..3 * 4).map(|i| v[i].norm_sqr() + v[3 * nb - 1 - i].norm_sqr()).sum();
            if edge < 1e-20 {
                out.push(fold_quasienergy(*e, omega));
            }
        }
        out
    }

    #[test]
    fn quasienergies_match_extended_space_oracle() {
        for (lambda, bias) in [(0.25, 1.9), (1.5, 0.0), (0.5, -3.0)] {
            let p = fast_pump(lambda, bias, 0.9);
            let basis = tqd_basis(&p, 1024);
            let sambe = sambe_quasienergies(&p, 40);
            for e in basis.sector_quasienergies(1) {
                let best = sambe
                    .iter()
                    .map(|s| fold_quasienergy(s - e, 1.9).abs())
                    .fold(f64::INFINITY, f64::min);
                assert!(best < 1e-6, "lambda={lambda} bias={bias}: mismatch {best}");
            }
        }
    }

    #[test]
    fn identity_and_reconstruction_and_parseval() {
        let p = fast_pump(1.5, 0.0, 0.5);
        let basis = tqd_basis(&p, 1024);
        let id = CMat::identity(8, 8);
        let h = decompose_operator(&id, &basis, 8);
        for k in 0..8 {
            for l in 0..8 {
                for n in -8..=8 {
                    let expected = if k == l && n == 0 { 1.0 } else { 0.0 };
                    assert!((h.coeff(k, l, n) - c(expected)).norm() < 1e-10);
                }
            }
        }
        let fock = FockSpace::triple_dot();
        let d = fock.annihilator(MODE_LEFT).clone();
        let h = decompose_operator_adaptive(&d, &basis, 1e-8).unwrap();
        assert!(h.residual < 1e-8);
        // Parseval
        let samples = mode_matrix_elements(&d, &basis);
        for (k, l) in [(0, 1), (1, 4), (2, 7)] {
            let power: f64 = h.harmonics().map(|n| h.coeff(k, l, n).norm_sqr()).sum();
            let mean: f64 = samples.iter().map(|m| m[(k, l)].norm_sqr()).sum::<f64>() / samples.len() as f64;
            assert_abs_diff_eq!(power, mean, epsilon = 1e-10);
        }
        // conjugation rule: (d^dagger)_{l,k,-n} = conj(d_{k,l,n})
        let hd = decompose_operator(&d.adjoint(), &basis, h.max_harmonic);
        for (k, l, n) in [(0, 1, 2), (3, 5, -1), (2, 6, 0)] {
            assert!((hd.coeff(l, k, -n) - h.coeff(k, l, n).conj()).norm() < 1e-12);
        }
    }
}
