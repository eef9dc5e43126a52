//! Exact benchmark: the dot and its reservoirs as one quadratic model.
//!
//! Each reservoir is discretized into `N_k` levels and the single-particle
//! correlation matrix `G_nm = <a_m^dagger a_n>` of the whole model obeys
//! `G' = -i [h(t), G]`. The driven part of `h(t)` lives on a three-dimensional
//! subspace (the dot and the two collective bath modes it couples to), so a
//! split step `E(dt/2) V(t) E(dt/2)` costs a phase multiplication in the
//! eigenbasis of the static part plus two rank-3 updates.

use nalgebra::{DMatrix, Matrix3};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamiltonian::{TqdParams, MODE_DOT, MODE_LEFT, MODE_RIGHT};
use crate::linalg::{c, CMat};
use crate::model::{fermi, DrivingProtocol, Side, SpectralDensity};

/// One reservoir as a finite set of levels.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretizedBath {
    pub side: Side,
    pub energies: Vec<f64>,
    /// `t_k = sqrt(J(e_k) de / 2 pi)`.
    pub couplings: Vec<f64>,
    pub spacing: f64,
}

impl DiscretizedBath {
    pub fn levels(&self) -> usize {
        self.energies.len()
    }

    /// `sum_k t_k^2`, the discrete `(1/2pi) int J`.
    pub fn coupling_sum(&self) -> f64 {
        self.couplings.iter().map(|t| t * t).sum()
    }

    /// Time after which a wave packet returns from the finite level spacing.
    pub fn revival_time(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.spacing
    }
}

/// Midpoint grid of `levels` cells on `[center - half_width, center + half_width]`.
pub fn discretize<J>(side: Side, j: J, center: f64, half_width: f64, levels: usize) -> Result<DiscretizedBath>
where
    J: Fn(f64) -> f64,
{
    if levels == 0 || !(half_width > 0.0) {
        return Err(Error::InvalidParameter {
            name: "levels",
            reason: format!("need at least one level on a positive window, got {levels} on {half_width}"),
        });
    }
    let spacing = 2.0 * half_width / levels as f64;
    let energies: Vec<f64> = (0..levels)
        .map(|k| center - half_width + (k as f64 + 0.5) * spacing)
        .collect();
    let couplings = energies
        .iter()
        .map(|&e| (j(e).max(0.0) * spacing / (2.0 * std::f64::consts::PI)).sqrt())
        .collect();
    Ok(DiscretizedBath {
        side,
        energies,
        couplings,
        spacing,
    })
}

/// Discretizes a spectral density around its peak (Lorentzian) or over its
/// table.
pub fn discretize_density(side: Side, sd: &SpectralDensity, half_width: f64, levels: usize) -> Result<DiscretizedBath> {
    let center = match sd {
        SpectralDensity::Lorentzian { center, .. } => *center,
        SpectralDensity::Tabulated { omega, .. } => 0.5 * (omega[0] + omega[omega.len() - 1]),
    };
    discretize(side, |w| sd.eval(w).unwrap_or(0.0), center, half_width, levels)
}

/// Numerical knobs of an oracle run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleSettings {
    pub levels: usize,
    /// Half width of the window for structured (original) reservoirs.
    pub half_width: f64,
    /// Half width of the window for flat residual reservoirs.
    pub residual_half_width: f64,
    pub steps_per_period: usize,
    pub relax_periods: usize,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            levels: 400,
            half_width: 2.0,
            residual_half_width: 6.0,
            steps_per_period: 256,
            relax_periods: 20,
        }
    }
}

struct BathBlock {
    bath: DiscretizedBath,
    offset: usize,
    site: usize,
    profile: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

/// A quadratic model `h(t) = h_0 + F d(t) F^T` with `F` an orthonormal
/// `n x 3` frame.
pub struct QuadraticModel {
    static_h: DMatrix<f64>,
    frame: DMatrix<f64>,
    drive: Box<dyn Fn(f64) -> Matrix3<f64> + Send + Sync>,
    baths: [BathBlock; 2],
    system: Vec<usize>,
    dot: usize,
    initial: Vec<f64>,
    period: f64,
}

impl QuadraticModel {
    pub fn dim(&self) -> usize {
        self.static_h.nrows()
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn bath(&self, side: Side) -> &DiscretizedBath {
        &self.baths[side_index(side)].bath
    }

    /// The full single-particle matrix at `t`.
    pub fn hamiltonian(&self, t: f64) -> DMatrix<f64> {
        &self.static_h + &self.frame * (self.drive)(t) * self.frame.transpose()
    }

    fn shortest_revival(&self) -> f64 {
        self.baths.iter().map(|b| b.bath.revival_time()).fold(f64::INFINITY, f64::min)
    }
}

fn side_index(side: Side) -> usize {
    match side {
        Side::Left => 0,
        Side::Right => 1,
    }
}

fn unit_frame_vector(n: usize, bath: &DiscretizedBath, offset: usize) -> (Vec<f64>, f64) {
    let norm = bath.coupling_sum().sqrt();
    let mut v = vec![0.0; n];
    if norm > 0.0 {
        for (k, t) in bath.couplings.iter().enumerate() {
            v[offset + k] = t / norm;
        }
    } else {
        // decoupled bath: any level will do, the drive never touches it
        v[offset] = 1.0;
    }
    (v, norm)
}

/// The single dot coupled directly to two structured reservoirs, with
/// tunnelling `t_k f_nu(t)`. Mode 0 is the dot.
pub fn original_model(
    driving: DrivingProtocol,
    left: &SpectralDensity,
    right: &SpectralDensity,
    beta: f64,
    mu: f64,
    settings: &OracleSettings,
) -> Result<QuadraticModel> {
    let nk = settings.levels;
    let lb = discretize_density(Side::Left, left, settings.half_width, nk)?;
    let rb = discretize_density(Side::Right, right, settings.half_width, nk)?;
    let n = 1 + 2 * nk;
    let (lo, ro) = (1, 1 + nk);
    let mut h = DMatrix::zeros(n, n);
    h[(0, 0)] = driving.eps0;
    let mut initial = vec![0.0; n];
    for (bath, offset) in [(&lb, lo), (&rb, ro)] {
        for k in 0..nk {
            h[(offset + k, offset + k)] = bath.energies[k];
            h[(offset + k, 0)] = bath.couplings[k];
            h[(0, offset + k)] = bath.couplings[k];
            initial[offset + k] = fermi(bath.energies[k], beta, mu);
        }
    }
    let (vl, norm_l) = unit_frame_vector(n, &lb, lo);
    let (vr, norm_r) = unit_frame_vector(n, &rb, ro);
    let mut frame = DMatrix::zeros(n, 3);
    frame[(0, 0)] = 1.0;
    frame.set_column(1, &nalgebra::DVector::from_vec(vl));
    frame.set_column(2, &nalgebra::DVector::from_vec(vr));
    let drive = move |t: f64| {
        let e = driving.dot_energy(t) - driving.eps0;
        let gl = norm_l * (driving.tunnel_profile(Side::Left, t) - 1.0);
        let gr = norm_r * (driving.tunnel_profile(Side::Right, t) - 1.0);
        Matrix3::new(e, gl, gr, gl, 0.0, 0.0, gr, 0.0, 0.0)
    };
    Ok(QuadraticModel {
        static_h: h,
        frame,
        drive: Box::new(drive),
        baths: [
            BathBlock {
                bath: lb,
                offset: lo,
                site: 0,
                profile: Box::new(move |t| driving.tunnel_profile(Side::Left, t)),
            },
            BathBlock {
                bath: rb,
                offset: ro,
                site: 0,
                profile: Box::new(move |t| driving.tunnel_profile(Side::Right, t)),
            },
        ],
        system: vec![0],
        dot: 0,
        initial,
        period: driving.period(),
    })
}

/// The triple dot with flat residual reservoirs of height `2 delta_nu`.
/// Modes 0..3 follow the triple-dot ordering; the reaction coordinates start
/// filled according to their bare energies.
pub fn mapped_model(p: &TqdParams, widths: [f64; 2], beta: f64, mu: f64, settings: &OracleSettings) -> Result<QuadraticModel> {
    let nk = settings.levels;
    let w = settings.residual_half_width;
    let lb = discretize(Side::Left, |_| 2.0 * widths[0], mu, w, nk)?;
    let rb = discretize(Side::Right, |_| 2.0 * widths[1], mu, w, nk)?;
    let n = 3 + 2 * nk;
    let (lo, ro) = (3, 3 + nk);
    let mut h = DMatrix::zeros(n, n);
    let mut average = *p;
    average.driving.dot_amplitude = 0.0;
    average.driving.amp_left = 0.0;
    average.driving.amp_right = 0.0;
    let h3 = average.tqd_matrix(0.0);
    h.view_mut((0, 0), (3, 3)).copy_from(&h3);
    let mut initial = vec![0.0; n];
    initial[MODE_LEFT] = fermi(p.eps_left, beta, mu);
    initial[MODE_RIGHT] = fermi(p.eps_right, beta, mu);
    for (bath, offset, site) in [(&lb, lo, MODE_LEFT), (&rb, ro, MODE_RIGHT)] {
        for k in 0..nk {
            h[(offset + k, offset + k)] = bath.energies[k];
            h[(offset + k, site)] = bath.couplings[k];
            h[(site, offset + k)] = bath.couplings[k];
            initial[offset + k] = fermi(bath.energies[k], beta, mu);
        }
    }
    let mut frame = DMatrix::zeros(n, 3);
    for m in [MODE_LEFT, MODE_DOT, MODE_RIGHT] {
        frame[(m, m)] = 1.0;
    }
    let params = *p;
    Ok(QuadraticModel {
        static_h: h,
        frame,
        drive: Box::new(move |t| params.tqd_matrix(t) - h3),
        baths: [
            BathBlock {
                bath: lb,
                offset: lo,
                site: MODE_LEFT,
                profile: Box::new(|_| 1.0),
            },
            BathBlock {
                bath: rb,
                offset: ro,
                site: MODE_RIGHT,
                profile: Box::new(|_| 1.0),
            },
        ],
        system: vec![MODE_LEFT, MODE_DOT, MODE_RIGHT],
        dot: MODE_DOT,
        initial,
        period: p.period(),
    })
}

/// Output of [`run`]: the last (measured) period on its step grid.
#[derive(Clone, Debug)]
pub struct OracleRun {
    pub times: Vec<f64>,
    /// `I_L(t)`, positive when electrons leave the left bath.
    pub current_left: Vec<f64>,
    pub current_right: Vec<f64>,
    pub system_occupation: Vec<f64>,
    pub dot_occupation: Vec<f64>,
    /// Electrons that left the left bath over the measured period.
    pub charge: f64,
    /// The same from the trapezoid integral of `I_L`.
    pub charge_from_current: f64,
    pub trace_drift: f64,
    pub hermiticity_defect: f64,
    /// Extreme eigenvalues of `G` at the end of the run.
    pub spectrum: (f64, f64),
}

struct Stepper {
    q: DMatrix<f64>,
    half_phase: Vec<C64>,
    /// Rows of the frame in the static eigenbasis.
    frame: Vec<[C64; 3]>,
    dt: f64,
}

impl Stepper {
    fn new(model: &QuadraticModel, dt: f64) -> Self {
        let eig = model.static_h.clone().symmetric_eigen();
        let half_phase = eig.eigenvalues.iter().map(|&e| C64::from_polar(1.0, -e * dt / 2.0)).collect();
        let f = eig.eigenvectors.transpose() * &model.frame;
        let frame = f.row_iter().map(|r| [c(r[0]), c(r[1]), c(r[2])]).collect();
        Stepper {
            q: eig.eigenvectors,
            half_phase,
            frame,
            dt,
        }
    }

    /// `W = E(dt/2) V E(dt/2)` with `V = 1 + F (U3 - 1) F^dagger`, where
    /// `U3 = exp(-i d dt)`.
    fn kick_matrix(&self, d: &Matrix3<f64>) -> [[C64; 3]; 3] {
        let eig = d.symmetric_eigen();
        let mut m = [[C64::new(0.0, 0.0); 3]; 3];
        for k in 0..3 {
            let ph = C64::from_polar(1.0, -eig.eigenvalues[k] * self.dt);
            for (i, row) in m.iter_mut().enumerate() {
                for (j, x) in row.iter_mut().enumerate() {
                    *x += eig.eigenvectors[(i, k)] * ph * eig.eigenvectors[(j, k)];
                }
            }
        }
        for (i, row) in m.iter_mut().enumerate() {
            row[i] -= 1.0;
        }
        m
    }

    /// `G <- W G` column by column.
    fn apply_left(&self, g: &mut CMat, m: &[[C64; 3]; 3]) {
        let n = g.nrows();
        g.as_mut_slice().par_chunks_mut(n).for_each(|col| {
            let mut k = [C64::new(0.0, 0.0); 3];
            for (i, x) in col.iter_mut().enumerate() {
                *x *= self.half_phase[i];
                let f = &self.frame[i];
                for a in 0..3 {
                    k[a] += f[a].conj() * *x;
                }
            }
            let mk = [0, 1, 2].map(|a| m[a][0] * k[0] + m[a][1] * k[1] + m[a][2] * k[2]);
            for (i, x) in col.iter_mut().enumerate() {
                let f = &self.frame[i];
                *x = (*x + f[0] * mk[0] + f[1] * mk[1] + f[2] * mk[2]) * self.half_phase[i];
            }
        });
    }

    /// `G <- W G W^dagger`, using `W G W^dagger = W (W G)^dagger` for
    /// Hermitian `G`.
    fn step(&self, g: &mut CMat, d: &Matrix3<f64>) {
        let m = self.kick_matrix(d);
        self.apply_left(g, &m);
        *g = g.adjoint();
        self.apply_left(g, &m);
    }

    fn to_site(&self, g: &CMat, rows: &[usize]) -> CMat {
        let qr = CMat::from_fn(rows.len(), self.q.ncols(), |i, j| c(self.q[(rows[i], j)]));
        qr * g
    }
}

/// `([I_L, I_R], N_sys, n_dot)` from `G` in the static eigenbasis.
fn observables(model: &QuadraticModel, st: &Stepper, g: &CMat, t: f64) -> ([f64; 2], f64, f64) {
    let mut currents = [0.0; 2];
    for (b, cur) in model.baths.iter().zip(currents.iter_mut()) {
        // row `site` of G in the site basis, restricted to the bath levels
        let row = st.to_site(g, &[b.site]);
        let scale = (b.profile)(t);
        let mut z = C64::new(0.0, 0.0);
        for (k, tk) in b.bath.couplings.iter().enumerate() {
            let qk = st.q.row(b.offset + k);
            let g_sk: C64 = row.iter().zip(qk.iter()).map(|(r, q)| r * q).sum();
            z += g_sk * (tk * scale);
        }
        *cur = -2.0 * z.im;
    }
    let sys = st.to_site(g, &model.system);
    let (mut n_sys, mut n_dot) = (0.0, 0.0);
    for (i, &s) in model.system.iter().enumerate() {
        let qs = st.q.row(s);
        let occ = sys.row(i).iter().zip(qs.iter()).map(|(r, q)| (r * q).re).sum::<f64>();
        n_sys += occ;
        if s == model.dot {
            n_dot = occ;
        }
    }
    (currents, n_sys, n_dot)
}

fn bath_number(model: &QuadraticModel, st: &Stepper, g: &CMat, side: Side) -> f64 {
    let b = &model.baths[side_index(side)];
    let rows: Vec<usize> = (b.offset..b.offset + b.bath.levels()).collect();
    let qg = st.to_site(g, &rows);
    rows.iter()
        .enumerate()
        .map(|(i, &r)| qg.row(i).iter().zip(st.q.row(r).iter()).map(|(x, q)| (x * q).re).sum::<f64>())
        .sum()
}

/// Evolves the thermal initial state for `relax_periods` periods and then
/// records one period.
pub fn run(model: &QuadraticModel, settings: &OracleSettings) -> Result<OracleRun> {
    let steps = settings.steps_per_period;
    let period = model.period();
    let dt = period / steps as f64;
    let horizon = period * (settings.relax_periods + 1) as f64;
    if horizon > 0.5 * model.shortest_revival() {
        log::warn!(
            "oracle horizon {horizon:.1} exceeds half the bath revival time {:.1}; refine the level spacing",
            model.shortest_revival()
        );
    }
    let st = Stepper::new(model, dt);
    let g0 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(model.initial.clone()));
    let mut g = (st.q.transpose() * g0 * &st.q).map(c);
    let trace0: C64 = g.trace();

    let mut t = 0.0;
    for _ in 0..settings.relax_periods * steps {
        st.step(&mut g, &(model.drive)(t + dt / 2.0));
        t += dt;
    }
    let start = bath_number(model, &st, &g, Side::Left);
    let mut times = Vec::with_capacity(steps + 1);
    let mut current_left = Vec::with_capacity(steps + 1);
    let mut current_right = Vec::with_capacity(steps + 1);
    let mut system_occupation = Vec::with_capacity(steps + 1);
    let mut dot_occupation = Vec::with_capacity(steps + 1);
    let t0 = t;
    for j in 0..=steps {
        let tj = t0 + j as f64 * dt;
        let (cur, n_sys, n_dot) = observables(model, &st, &g, tj);
        times.push(tj - t0);
        current_left.push(cur[0]);
        current_right.push(cur[1]);
        system_occupation.push(n_sys);
        dot_occupation.push(n_dot);
        if j < steps {
            st.step(&mut g, &(model.drive)(tj + dt / 2.0));
        }
    }
    let end = bath_number(model, &st, &g, Side::Left);
    let trace_drift = (g.trace() - trace0).norm();
    let hermiticity_defect = (&g - g.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let herm = (&g + g.adjoint()) * c(0.5);
    let spectrum = herm.symmetric_eigenvalues();
    let spectrum = (spectrum.min(), spectrum.max());
    if trace_drift > 1e-8 || hermiticity_defect > 1e-8 {
        return Err(Error::Conservation {
            deviation: trace_drift.max(hermiticity_defect),
        });
    }
    let charge_from_current = crate::fcs::trapezoid_uniform(&current_left, dt);
    Ok(OracleRun {
        times,
        current_left,
        current_right,
        system_occupation,
        dot_occupation,
        charge: start - end,
        charge_from_current,
        trace_drift,
        hermiticity_defect,
        spectrum,
    })
}

/// Agreement between the original and the mapped representation.
#[derive(Clone, Debug)]
pub struct RepresentationReport {
    pub charge_original: f64,
    pub charge_mapped: f64,
    /// `max_t |I_L^orig - I_L^mapped|` over the measured period.
    pub max_current_deviation: f64,
    pub original: OracleRun,
    pub mapped: OracleRun,
}

impl RepresentationReport {
    pub fn relative_charge_deviation(&self) -> f64 {
        (self.charge_original - self.charge_mapped).abs() / self.charge_original.abs().max(1e-300)
    }
}

/// Runs both representations of the same physical set-up: symmetric
/// Lorentzians with couplings `gamma`, widths `delta`, centred at the RC
/// energies of `p`.
pub fn compare_representations(
    p: &TqdParams,
    gamma: [f64; 2],
    delta: [f64; 2],
    beta: f64,
    mu: f64,
    settings: &OracleSettings,
) -> Result<RepresentationReport> {
    let left = SpectralDensity::lorentzian(gamma[0], delta[0], p.eps_left)?;
    let right = SpectralDensity::lorentzian(gamma[1], delta[1], p.eps_right)?;
    let original = run(&original_model(p.driving, &left, &right, beta, mu, settings)?, settings)?;
    let mapped = run(&mapped_model(p, delta, beta, mu, settings)?, settings)?;
    let max_current_deviation = original
        .current_left
        .iter()
        .zip(&mapped.current_left)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(RepresentationReport {
        charge_original: original.charge,
        charge_mapped: mapped.charge,
        max_current_deviation,
        original,
        mapped,
    })
}
