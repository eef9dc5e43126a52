//! Non-secular Floquet master equation for the triple dot coupled to the two
//! residual baths, its periodic long-time state and the currents.
//!
//! Each residual bath couples to the RC fermion `d` of its side. With the
//! harmonic decomposition `d -> s_{kln}` at transition frequencies
//! `w = eps_k - eps_l + n Omega`, an electron of energy `E = -w` enters or
//! leaves the system, and the dressed operators
//!
//! `A_in(t)  = sum J(E) f(E) / 2 s_{kln} e^{i n Omega t} |k(t)><l(t)|`,
//! `A_out(t) = sum J(E) (1 - f(E)) / 2 s_{kln} e^{i n Omega t} |k(t)><l(t)|`
//!
//! enter the generator
//! `[d^dag, rho A_in] + [A_in^dag rho, d] + [A_out rho, d^dag] + [d, rho A_out^dag]`.
//!
//! Density matrices live in the number-block-diagonal subspace; coherences
//! between sectors of different particle number decouple and vanish in the
//! long-time state.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::fcs::{periodic_cumulants, CountingGenerator, CumulantRecord};
use crate::floquet::{decompose_operator_adaptive, solve_floquet, FloquetBasis, HarmonicOperator, DEFAULT_STEPS};
use crate::hamiltonian::{rc_mode, FockSpace, TqdParams};
use crate::linalg::{c, BandMatrix, CMat, CVec, I};
use crate::ode::Stepping;
use crate::model::{fermi, RcParameters, ReservoirSpec, ResidualDensity, Side};

/// A residual bath as seen by the RC of its side.
#[derive(Clone, Debug, PartialEq)]
pub struct Bath {
    pub side: Side,
    pub beta: f64,
    pub mu: f64,
    pub residual: ResidualDensity,
}

impl Bath {
    pub fn new(reservoir: &ReservoirSpec, rc: &RcParameters) -> Self {
        Bath {
            side: reservoir.side,
            beta: reservoir.beta,
            mu: reservoir.mu,
            residual: rc.residual.clone(),
        }
    }

    /// Residual bath of a Lorentzian of half-width `width`.
    pub fn flat(side: Side, beta: f64, mu: f64, width: f64) -> Self {
        Bath {
            side,
            beta,
            mu,
            residual: ResidualDensity::Flat(2.0 * width),
        }
    }

    /// `(J f / 2, J (1 - f) / 2)` at electron energy `e`.
    pub fn weights(&self, e: f64) -> (f64, f64) {
        let j = self.residual.eval(e);
        let f = fermi(e, self.beta, self.mu);
        (0.5 * j * f, 0.5 * j * (1.0 - f))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FmeOptions {
    /// Time samples per period for the Floquet modes.
    pub steps: usize,
    /// Reconstruction tolerance of the operator harmonics.
    pub operator_tol: f64,
    /// Truncation tolerance of the generator harmonics, relative to `L_0`.
    pub generator_tol: f64,
    /// Tolerance on the tail norm of the periodic state.
    pub state_tol: f64,
    pub max_state_harmonics: usize,
}

impl Default for FmeOptions {
    fn default() -> Self {
        FmeOptions {
            steps: DEFAULT_STEPS,
            operator_tol: 1e-8,
            generator_tol: 1e-11,
            state_tol: 1e-10,
            max_state_harmonics: 400,
        }
    }
}

/// Dressed absorption and emission operators of one bath on the time grid.
#[derive(Clone, Debug)]
pub struct DressedRates {
    pub side: Side,
    pub mode: usize,
    pub decomposition: HarmonicOperator,
    pub absorb: Vec<CMat>,
    pub emit: Vec<CMat>,
    /// Same operators with each weight multiplied by the electron energy.
    pub absorb_energy: Vec<CMat>,
    pub emit_energy: Vec<CMat>,
}

/// Decomposes the RC operator of `bath` and assembles its dressed operators.
pub fn build_dressed_rates(basis: &FloquetBasis, fock: &FockSpace, bath: &Bath, operator_tol: f64) -> Result<DressedRates> {
    let mode = rc_mode(bath.side);
    let dec = decompose_operator_adaptive(fock.annihilator(mode), basis, operator_tol)?;
    let dim = basis.dim();
    let steps = basis.steps();
    let omega = basis.omega;
    let mut families = vec![vec![CMat::zeros(dim, dim); steps]; 4];
    for k in 0..dim {
        for l in 0..dim {
            let active: Vec<(i64, C64)> = dec
                .harmonics()
                .map(|n| (n, dec.coeff(k, l, n)))
                .filter(|(_, s)| s.norm() > 1e-15)
                .collect();
            if active.is_empty() {
                continue;
            }
            let weights: Vec<[C64; 4]> = active
                .iter()
                .map(|&(n, s)| {
                    let e = -HarmonicOperator::frequency(basis, k, l, n);
                    let (win, wout) = bath.weights(e);
                    [s * win, s * wout, s * (win * e), s * (wout * e)]
                })
                .collect();
            for j in 0..steps {
                let t = basis.time(j);
                let mut sums = [C64::new(0.0, 0.0); 4];
                for (&(n, _), w) in active.iter().zip(&weights) {
                    let phase = C64::from_polar(1.0, n as f64 * omega * t);
                    for f in 0..4 {
                        sums[f] += w[f] * phase;
                    }
                }
                for f in 0..4 {
                    families[f][j][(k, l)] = sums[f];
                }
            }
        }
    }
    // back to the Fock basis: V C V^dag
    for fam in families.iter_mut() {
        for (j, m) in fam.iter_mut().enumerate() {
            let v = &basis.modes[j];
            *m = v * &*m * v.adjoint();
        }
    }
    let mut it = families.into_iter();
    Ok(DressedRates {
        side: bath.side,
        mode,
        decomposition: dec,
        absorb: it.next().unwrap(),
        emit: it.next().unwrap(),
        absorb_energy: it.next().unwrap(),
        emit_energy: it.next().unwrap(),
    })
}

/// Vectorization of the number-block-diagonal matrices.
#[derive(Clone, Debug)]
pub struct BlockSpace {
    dim: usize,
    pairs: Vec<(usize, usize)>,
}

impl BlockSpace {
    pub fn new(dim: usize, sectors: &[Vec<usize>]) -> Self {
        let mut pairs = Vec::new();
        for s in sectors {
            for &a in s {
                for &b in s {
                    pairs.push((a, b));
                }
            }
        }
        BlockSpace { dim, pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn vectorize(&self, m: &CMat) -> CVec {
        CVec::from_iterator(self.len(), self.pairs.iter().map(|&(a, b)| m[(a, b)]))
    }

    pub fn matrix(&self, v: &CVec) -> CMat {
        let mut m = CMat::zeros(self.dim, self.dim);
        for (&(a, b), x) in self.pairs.iter().zip(v.iter()) {
            m[(a, b)] = *x;
        }
        m
    }

    pub fn trace_weights(&self) -> CVec {
        CVec::from_iterator(self.len(), self.pairs.iter().map(|&(a, b)| c(if a == b { 1.0 } else { 0.0 })))
    }

    /// Superoperator `rho -> X rho Y` restricted to the block space.
    pub fn two_sided(&self, x: &CMat, y: &CMat) -> CMat {
        let d = self.len();
        CMat::from_fn(d, d, |p, q| {
            let (a, b) = self.pairs[p];
            let (cc, e) = self.pairs[q];
            x[(a, cc)] * y[(e, b)]
        })
    }
}

/// Fourier components of the generator and of the counted-jump parts.
#[derive(Clone, Debug)]
pub struct LiouvillianHarmonics {
    pub space: BlockSpace,
    pub omega: f64,
    pub max_harmonic: usize,
    /// Entry `k + K` holds the component `e^{i k Omega t}`.
    pub generator: Vec<CMat>,
    pub jump_in: Vec<CMat>,
    pub jump_out: Vec<CMat>,
    pub energy_in: Vec<CMat>,
    pub energy_out: Vec<CMat>,
    /// Norm of the discarded harmonics relative to `L_0`.
    pub truncation: f64,
    pub counted: Side,
}

fn series(components: &[CMat], omega: f64, t: f64) -> CMat {
    let k_max = (components.len() / 2) as i64;
    let mut out = CMat::zeros(components[0].nrows(), components[0].ncols());
    for (idx, m) in components.iter().enumerate() {
        let k = idx as i64 - k_max;
        out += m * C64::from_polar(1.0, k as f64 * omega * t);
    }
    out
}

impl LiouvillianHarmonics {
    pub fn generator_at(&self, t: f64) -> CMat {
        series(&self.generator, self.omega, t)
    }

    pub fn component(&self, k: i64) -> Option<&CMat> {
        let idx = k + self.max_harmonic as i64;
        if idx < 0 {
            return None;
        }
        self.generator.get(idx as usize)
    }

    pub fn energy_current_operator(&self, t: f64) -> CMat {
        series(&self.energy_in, self.omega, t) - series(&self.energy_out, self.omega, t)
    }
}

impl CountingGenerator for LiouvillianHarmonics {
    fn dim(&self) -> usize {
        self.space.len()
    }

    fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    fn trace_weights(&self) -> CVec {
        self.space.trace_weights()
    }

    fn generator(&self, t: f64) -> CMat {
        self.generator_at(t)
    }

    fn counted_jumps(&self, t: f64) -> (CMat, CMat) {
        (series(&self.jump_in, self.omega, t), series(&self.jump_out, self.omega, t))
    }
}

struct JumpParts {
    absorb: CMat,
    emit: CMat,
}

fn jump_parts(space: &BlockSpace, d: &CMat, a_in: &CMat, a_out: &CMat) -> JumpParts {
    let dd = d.adjoint();
    JumpParts {
        absorb: space.two_sided(&dd, a_in) + space.two_sided(&a_in.adjoint(), d),
        emit: space.two_sided(a_out, &dd) + space.two_sided(d, &a_out.adjoint()),
    }
}

/// Samples the generator on the Floquet grid and extracts its harmonics. The
/// counting field sits on the bath of side `counted`.
pub fn build_liouvillian<H>(
    hamiltonian: H,
    basis: &FloquetBasis,
    fock: &FockSpace,
    rates: &[DressedRates],
    counted: Side,
    generator_tol: f64,
) -> Result<LiouvillianHarmonics>
where
    H: Fn(f64) -> CMat,
{
    let space = BlockSpace::new(fock.dim(), &fock.number_sectors());
    let steps = basis.steps();
    let dim = fock.dim();
    let id = CMat::identity(dim, dim);
    let mut samples: [Vec<CMat>; 5] = Default::default();
    for j in 0..steps {
        let h = hamiltonian(basis.time(j));
        let mut left = &h * (-I);
        let mut right = &h * I;
        let mut gen = CMat::zeros(space.len(), space.len());
        let mut counted_parts = None;
        for r in rates {
            let d = fock.annihilator(r.mode);
            let dd = d.adjoint();
            let (a_in, a_out) = (&r.absorb[j], &r.emit[j]);
            left -= d * a_in.adjoint() + &dd * a_out;
            right -= a_in * &dd + a_out.adjoint() * d;
            let parts = jump_parts(&space, d, a_in, a_out);
            gen += &parts.absorb + &parts.emit;
            if r.side == counted {
                let energy = jump_parts(&space, d, &r.absorb_energy[j], &r.emit_energy[j]);
                counted_parts = Some((parts, energy));
            }
        }
        gen += space.two_sided(&left, &id) + space.two_sided(&id, &right);
        let (parts, energy) = counted_parts.ok_or_else(|| Error::InvalidParameter {
            name: "counted",
            reason: "no bath on the counted side".into(),
        })?;
        samples[0].push(gen);
        samples[1].push(parts.absorb);
        samples[2].push(parts.emit);
        samples[3].push(energy.absorb);
        samples[4].push(energy.emit);
    }

    let spectra: Vec<Vec<CMat>> = samples.iter().map(|s| fourier_components(s)).collect();
    let scale = spectra[0][0].iter().fold(0.0f64, |a, z| a.max(z.norm())).max(1e-300);
    // smallest K whose discarded tail is below tolerance in every family
    let half = steps / 2 - 1;
    let tail_beyond = |k: usize| -> f64 {
        spectra
            .iter()
            .map(|spec| {
                ((k + 1)..=half)
                    .map(|m| max_entry(&spec[m]).max(max_entry(&spec[steps - m])))
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
            / scale
    };
    let mut k_max = 1;
    while k_max < half && tail_beyond(k_max) > generator_tol {
        k_max += 1;
    }
    let truncation = tail_beyond(k_max);
    if truncation > generator_tol {
        return Err(Error::Truncation {
            residual: truncation,
            tolerance: generator_tol,
            advice: "raise the number of time steps per period",
        });
    }
    let pick = |spec: &Vec<CMat>| -> Vec<CMat> {
        (-(k_max as i64)..=(k_max as i64))
            .map(|k| spec[k.rem_euclid(steps as i64) as usize].clone())
            .collect()
    };
    Ok(LiouvillianHarmonics {
        omega: basis.omega,
        max_harmonic: k_max,
        generator: pick(&spectra[0]),
        jump_in: pick(&spectra[1]),
        jump_out: pick(&spectra[2]),
        energy_in: pick(&spectra[3]),
        energy_out: pick(&spectra[4]),
        truncation,
        counted,
        space,
    })
}

fn max_entry(m: &CMat) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

/// Elementwise FFT of periodic matrix samples, normalized so that entry `k`
/// is the coefficient of `e^{i k Omega t}` (negative `k` wrapped).
fn fourier_components(samples: &[CMat]) -> Vec<CMat> {
    let n = samples.len();
    let (rows, cols) = samples[0].shape();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut out = vec![CMat::zeros(rows, cols); n];
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for r in 0..rows {
        for q in 0..cols {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = samples[j][(r, q)];
            }
            if buf.iter().all(|z| *z == C64::new(0.0, 0.0)) {
                continue;
            }
            fft.process(&mut buf);
            for (k, b) in buf.iter().enumerate() {
                out[k][(r, q)] = *b / n as f64;
            }
        }
    }
    out
}

/// Fourier components `rho_n`, `n in [-N, N]`, of the periodic state.
#[derive(Clone, Debug)]
pub struct PeriodicState {
    pub omega: f64,
    pub max_harmonic: usize,
    pub components: Vec<CVec>,
    /// `max |rho_{+-N}|`.
    pub tail_norm: f64,
}

impl PeriodicState {
    pub fn component(&self, n: i64) -> &CVec {
        &self.components[(n + self.max_harmonic as i64) as usize]
    }

    pub fn at(&self, t: f64) -> CVec {
        let nh = self.max_harmonic as i64;
        let mut out = CVec::zeros(self.components[0].len());
        for (idx, v) in self.components.iter().enumerate() {
            out += v * C64::from_polar(1.0, (idx as i64 - nh) as f64 * self.omega * t);
        }
        out
    }
}

/// The harmonic-balance matrix of `i n Omega x_n = sum_k L_k x_{n-k} + b_n`
/// over `|n| <= n_max`, with one trace row of the `n = 0` block replaced by
/// the trace condition. Returns the matrix and the replaced row.
fn harmonic_system(l: &LiouvillianHarmonics, n_max: usize) -> (BandMatrix, usize) {
    let d = l.space.len();
    let k_max = l.max_harmonic;
    let blocks = 2 * n_max + 1;
    let size = blocks * d;
    let band = k_max * d + d - 1;
    let mut a = BandMatrix::zeros(size, band, band);
    let nh = n_max as i64;
    for bn in 0..blocks {
        let n = bn as i64 - nh;
        for (kidx, lk) in l.generator.iter().enumerate() {
            let k = kidx as i64 - k_max as i64;
            let m = n - k;
            if m < -nh || m > nh {
                continue;
            }
            let bm = (m + nh) as usize;
            for i in 0..d {
                for j in 0..d {
                    let v = lk[(i, j)];
                    if v != C64::new(0.0, 0.0) {
                        a.add(bn * d + i, bm * d + j, v);
                    }
                }
            }
        }
        for i in 0..d {
            a.add(bn * d + i, bn * d + i, -I * (n as f64 * l.omega));
        }
    }
    let w = l.space.trace_weights();
    let first = w.iter().position(|z| z.norm() > 0.0).unwrap();
    let row = n_max * d + first;
    a.clear_row(row);
    for (j, wj) in w.iter().enumerate() {
        if wj.norm() > 0.0 {
            a.set(row, n_max * d + j, *wj);
        }
    }
    (a, row)
}

fn edge_norm(components: &[CVec]) -> f64 {
    components[0]
        .iter()
        .chain(components[components.len() - 1].iter())
        .fold(0.0f64, |acc, z| acc.max(z.norm()))
}

fn solve_with_harmonics(l: &LiouvillianHarmonics, n_max: usize) -> Result<PeriodicState> {
    let d = l.space.len();
    let (a, row) = harmonic_system(l, n_max);
    let mut rhs = vec![C64::new(0.0, 0.0); (2 * n_max + 1) * d];
    rhs[row] = c(1.0);
    let x = a.solve(&rhs)?;
    let components: Vec<CVec> = x.chunks(d).map(CVec::from_column_slice).collect();
    Ok(PeriodicState {
        omega: l.omega,
        max_harmonic: n_max,
        tail_norm: edge_norm(&components),
        components,
    })
}

/// Period charge and noise from harmonic balance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HarmonicCumulants {
    pub charge: f64,
    pub fluctuation: f64,
    /// Largest entry of the outermost harmonics of the auxiliary `X`.
    pub auxiliary_tail: f64,
}

/// Solves the auxiliary equation `X' = L X + J' rho - I rho`, `Tr X = 0`,
/// on the harmonics of `state` and returns
/// `Q = T I_0` and `Delta Q^2 = T [w.(J'' rho + 2 J' X)]_0`.
pub fn harmonic_cumulants(l: &LiouvillianHarmonics, state: &PeriodicState) -> Result<HarmonicCumulants> {
    let d = l.space.len();
    let n_max = state.max_harmonic as i64;
    let k_max = l.max_harmonic as i64;
    let first: Vec<CMat> = l.jump_in.iter().zip(&l.jump_out).map(|(a, b)| a - b).collect();
    let second: Vec<CMat> = l.jump_in.iter().zip(&l.jump_out).map(|(a, b)| a + b).collect();
    let rho = |m: i64| (m.abs() <= n_max).then(|| state.component(m));
    // sum_k A_k rho_{n-k}
    let convolve = |ops: &[CMat], n: i64| {
        let mut out = CVec::zeros(d);
        for k in -k_max..=k_max {
            if let Some(r) = rho(n - k) {
                out += &ops[(k + k_max) as usize] * r;
            }
        }
        out
    };
    let w = l.space.trace_weights();
    let reach = n_max + k_max;
    let current: Vec<C64> = (-reach..=reach).map(|n| w.dot(&convolve(&first, n))).collect();
    let current_at = |m: i64| current[(m + reach) as usize];
    let mut rhs = Vec::with_capacity((2 * n_max + 1) as usize * d);
    for n in -n_max..=n_max {
        let mut b = convolve(&first, n);
        for m in -reach..=reach {
            if let Some(r) = rho(n - m) {
                b -= r * current_at(m);
            }
        }
        // the generator equation reads i n Omega X_n - sum L X = b_n; the
        // system matrix holds sum L - i n Omega, hence the sign
        rhs.extend(b.iter().map(|z| -z));
    }
    let (a, row) = harmonic_system(l, state.max_harmonic);
    rhs[row] = C64::new(0.0, 0.0);
    let x = a.solve(&rhs)?;
    let aux: Vec<CVec> = x.chunks(d).map(CVec::from_column_slice).collect();
    let x_at = |m: i64| (m.abs() <= n_max).then(|| &aux[(m + n_max) as usize]);
    let mut s0 = C64::new(0.0, 0.0);
    for k in -k_max..=k_max {
        let idx = (k + k_max) as usize;
        if let Some(r) = rho(-k) {
            s0 += w.dot(&(&second[idx] * r));
        }
        if let Some(xv) = x_at(-k) {
            s0 += w.dot(&(&first[idx] * xv)) * 2.0;
        }
    }
    let period = 2.0 * PI / l.omega;
    Ok(HarmonicCumulants {
        charge: period * current_at(0).re,
        fluctuation: period * s0.re,
        auxiliary_tail: edge_norm(&aux),
    })
}

/// Periodic long-time state from the harmonic balance
/// `i n Omega rho_n = sum_k L_k rho_{n-k}`, raising `N` until the tail norm
/// drops below `tol`.
pub fn solve_periodic_state(l: &LiouvillianHarmonics, tol: f64, max_harmonics: usize) -> Result<PeriodicState> {
    let mut n = (l.max_harmonic + 4).max(8).min(max_harmonics);
    loop {
        let state = solve_with_harmonics(l, n)?;
        if state.tail_norm < tol {
            return Ok(state);
        }
        if n >= max_harmonics {
            return Err(Error::Truncation {
                residual: state.tail_norm,
                tolerance: tol,
                advice: "raise the number of state harmonics",
            });
        }
        n = (2 * n).min(max_harmonics);
    }
}

/// Particle current out of the bath of `rates`, evaluated from the dressed
/// operators at grid index `j`: positive when electrons enter the system.
pub fn matter_current(rho: &CMat, fock: &FockSpace, rates: &DressedRates, j: usize) -> f64 {
    flow(rho, fock.annihilator(rates.mode), &rates.absorb[j], &rates.emit[j])
}

/// Energy current out of the bath of `rates` at grid index `j`.
pub fn energy_current(rho: &CMat, fock: &FockSpace, rates: &DressedRates, j: usize) -> f64 {
    flow(rho, fock.annihilator(rates.mode), &rates.absorb_energy[j], &rates.emit_energy[j])
}

fn flow(rho: &CMat, d: &CMat, a_in: &CMat, a_out: &CMat) -> f64 {
    let dd = d.adjoint();
    let gain = (&dd * rho * a_in).trace() + (a_in.adjoint() * rho * d).trace();
    let loss = (a_out * rho * &dd).trace() + (d * rho * a_out.adjoint()).trace();
    (gain - loss).re
}

/// Triple dot attached to its two residual baths.
#[derive(Clone, Debug)]
pub struct FloquetProblem {
    pub params: TqdParams,
    pub left: Bath,
    pub right: Bath,
}

impl FloquetProblem {
    pub fn new(params: TqdParams, left: Bath, right: Bath) -> Self {
        FloquetProblem { params, left, right }
    }

    /// Same couplings, temperatures and chemical potential on both sides,
    /// residual baths of half-width `width`.
    pub fn symmetric(params: TqdParams, beta: f64, mu: f64, width: f64) -> Self {
        FloquetProblem {
            params,
            left: Bath::flat(Side::Left, beta, mu, width),
            right: Bath::flat(Side::Right, beta, mu, width),
        }
    }

    /// Mirror image: sides exchanged, see [`TqdParams::mirrored`].
    pub fn mirrored(&self) -> Self {
        let mut left = self.right.clone();
        let mut right = self.left.clone();
        left.side = Side::Left;
        right.side = Side::Right;
        FloquetProblem {
            params: self.params.mirrored(),
            left,
            right,
        }
    }
}

/// Result of one non-secular solve.
#[derive(Clone, Debug)]
pub struct FmeSolution {
    pub basis: FloquetBasis,
    pub rates: Vec<DressedRates>,
    pub liouvillian: LiouvillianHarmonics,
    pub state: PeriodicState,
    /// Matter current out of the left bath on the grid.
    pub current_left: Vec<f64>,
    pub current_right: Vec<f64>,
    pub energy_left: Vec<f64>,
    /// Charge per period taken from the left bath.
    pub charge: f64,
    /// Energy per period taken from the left bath.
    pub energy: f64,
    /// Smallest diagonal entry of `rho(t)` on the grid.
    pub min_population: f64,
    pub max_trace_error: f64,
    pub max_hermiticity_defect: f64,
}

/// Period average of grid samples `j = 0..N` of a periodic function, times
/// the period (trapezoid rule with the periodic end point).
fn period_integral(samples: &[f64], period: f64) -> f64 {
    period * samples.iter().sum::<f64>() / samples.len() as f64
}

/// Floquet basis, dressed operators and generator, without the state solve.
pub fn prepare(problem: &FloquetProblem, opts: &FmeOptions) -> Result<(FloquetBasis, Vec<DressedRates>, LiouvillianHarmonics)> {
    let fock = FockSpace::triple_dot();
    let p = problem.params;
    let h = |t: f64| p.fock_hamiltonian(t, &fock);
    let basis = solve_floquet(h, p.omega(), opts.steps, &fock.number_sectors())?;
    let rates = vec![
        build_dressed_rates(&basis, &fock, &problem.left, opts.operator_tol)?,
        build_dressed_rates(&basis, &fock, &problem.right, opts.operator_tol)?,
    ];
    let l = build_liouvillian(h, &basis, &fock, &rates, Side::Left, opts.generator_tol)?;
    Ok((basis, rates, l))
}

pub fn solve(problem: &FloquetProblem, opts: &FmeOptions) -> Result<FmeSolution> {
    let (basis, rates, liouvillian) = prepare(problem, opts)?;
    finish(basis, rates, liouvillian, opts)
}

/// Solves for the periodic state of a prepared generator and evaluates the
/// currents on the Floquet grid.
pub fn finish(basis: FloquetBasis, rates: Vec<DressedRates>, liouvillian: LiouvillianHarmonics, opts: &FmeOptions) -> Result<FmeSolution> {
    let fock = FockSpace::triple_dot();
    let state = solve_periodic_state(&liouvillian, opts.state_tol, opts.max_state_harmonics)?;
    let mut current_left = Vec::with_capacity(basis.steps());
    let mut current_right = Vec::with_capacity(basis.steps());
    let mut energy_left = Vec::with_capacity(basis.steps());
    let mut min_population = f64::INFINITY;
    let mut max_trace_error: f64 = 0.0;
    let mut max_hermiticity_defect: f64 = 0.0;
    for j in 0..basis.steps() {
        let rho = liouvillian.space.matrix(&state.at(basis.time(j)));
        current_left.push(matter_current(&rho, &fock, &rates[0], j));
        current_right.push(matter_current(&rho, &fock, &rates[1], j));
        energy_left.push(energy_current(&rho, &fock, &rates[0], j));
        for s in 0..fock.dim() {
            min_population = min_population.min(rho[(s, s)].re);
        }
        max_trace_error = max_trace_error.max((rho.trace() - 1.0).norm());
        max_hermiticity_defect = max_hermiticity_defect.max(crate::linalg::hermiticity_defect(&rho));
    }
    let period = basis.period();
    Ok(FmeSolution {
        charge: period_integral(&current_left, period),
        energy: period_integral(&energy_left, period),
        basis,
        rates,
        liouvillian,
        state,
        current_left,
        current_right,
        energy_left,
        min_population,
        max_trace_error,
        max_hermiticity_defect,
    })
}

/// Charge and noise of the periodic state from the counting engine, on the
/// Floquet time grid.
pub fn fluctuations(sol: &FmeSolution, stepping: Stepping) -> Result<CumulantRecord> {
    periodic_cumulants(&sol.liouvillian, sol.basis.steps(), stepping)
}

/// Charge and noise of the secular generator built from the same Floquet
/// data as `sol`.
pub fn secular_cumulants(problem: &FloquetProblem, sol: &FmeSolution) -> Result<CumulantRecord> {
    let gen = build_secular(&sol.basis, &sol.rates, &[&problem.left, &problem.right]);
    // the generator is constant, so a handful of grid points is exact
    periodic_cumulants(&gen, 16, Stepping::default())
}

/// Secular (rate-equation) counterpart over Floquet-mode populations.
///
/// Coherences between Floquet modes are dropped and only populations evolve:
/// in the mode basis, `dP/dt = W P` with `W` built from `|s_{kln}|^2`
/// weights. The counting field sits on the left bath.
#[derive(Clone, Debug)]
pub struct SecularGenerator {
    pub period: f64,
    pub rates: CMat,
    pub jump_in: CMat,
    pub jump_out: CMat,
}

pub fn build_secular(basis: &FloquetBasis, rates: &[DressedRates], baths: &[&Bath]) -> SecularGenerator {
    let dim = basis.dim();
    let mut w = CMat::zeros(dim, dim);
    let mut jump_in = CMat::zeros(dim, dim);
    let mut jump_out = CMat::zeros(dim, dim);
    for (r, bath) in rates.iter().zip(baths) {
        let dec = &r.decomposition;
        for k in 0..dim {
            for l in 0..dim {
                for n in dec.harmonics() {
                    let s2 = dec.coeff(k, l, n).norm_sqr();
                    if s2 < 1e-30 {
                        continue;
                    }
                    let e = -HarmonicOperator::frequency(basis, k, l, n);
                    let (win, wout) = bath.weights(e);
                    // the weights carry J/2; the rates carry J
                    let (fill, empty) = (2.0 * win * s2, 2.0 * wout * s2);
                    // fill: k -> l, empty: l -> k
                    w[(l, k)] += fill;
                    w[(k, k)] -= fill;
                    w[(k, l)] += empty;
                    w[(l, l)] -= empty;
                    if bath.side == Side::Left {
                        jump_in[(l, k)] += fill;
                        jump_out[(k, l)] += empty;
                    }
                }
            }
        }
    }
    SecularGenerator {
        period: basis.period(),
        rates: w,
        jump_in,
        jump_out,
    }
}

impl CountingGenerator for SecularGenerator {
    fn dim(&self) -> usize {
        self.rates.nrows()
    }

    fn period(&self) -> f64 {
        self.period
    }

    fn trace_weights(&self) -> CVec {
        CVec::from_element(self.dim(), c(1.0))
    }

    fn generator(&self, _t: f64) -> CMat {
        self.rates.clone()
    }

    fn counted_jumps(&self, _t: f64) -> (CMat, CMat) {
        (self.jump_in.clone(), self.jump_out.clone())
    }
}
