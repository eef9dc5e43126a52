//! Low-frequency limit: the triple dot as three independent channels.
//!
//! The instantaneous eigenvectors of the 3x3 single-particle matrix define
//! channel operators `c_i = sum_j T_ij d_j`. When `T` changes slowly, each
//! channel is a single level with energy `eps_i(t)` and golden-rule rates
//! `Gamma_{i,nu}(t) = J_nu |T_{i,nu}(t)|^2` to the residual baths, and the
//! channels contribute independently to charge and noise.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::fcs::{periodic_cumulants, ChannelGenerator, CumulantRecord};
use crate::hamiltonian::{TqdParams, MODE_LEFT, MODE_RIGHT};
use crate::linalg::{c, CMat};
use crate::model::fermi;
use crate::ode::{integrate_linear, Stepping};

pub const DEFAULT_POINTS: usize = 1 << 12;
/// Gaps below this are reported as near-degeneracies.
pub const GAP_THRESHOLD: f64 = 1e-6;
/// Largest adiabaticity metric accepted without override.
pub const ADIABATIC_THRESHOLD: f64 = 0.5;

pub const UPPER: usize = 0;
pub const CENTRAL: usize = 1;
pub const LOWER: usize = 2;

/// Flat residual baths and their thermal state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelBaths {
    /// Residual densities `J_L`, `J_R` (twice the Lorentzian widths).
    pub residual: [f64; 2],
    pub beta: f64,
    pub mu: f64,
}

impl ChannelBaths {
    pub fn from_widths(width_left: f64, width_right: f64, beta: f64, mu: f64) -> Self {
        ChannelBaths {
            residual: [2.0 * width_left, 2.0 * width_right],
            beta,
            mu,
        }
    }
}

/// Instantaneous channels on a uniform grid `t_j = j T / N`, `j = 0..N`.
#[derive(Clone, Debug)]
pub struct ChannelDecomposition {
    pub params: TqdParams,
    pub baths: ChannelBaths,
    pub times: Vec<f64>,
    /// `eps_u, eps_c, eps_d` per grid time.
    pub energies: Vec<[f64; 3]>,
    /// Rows are the channel vectors: `c_i = sum_j T_ij d_j`.
    pub transforms: Vec<Matrix3<f64>>,
    /// `Gamma_{i, L}`, `Gamma_{i, R}` per grid time.
    pub rates: Vec<[[f64; 2]; 3]>,
    pub min_gap: f64,
    /// Grid intervals where the gap falls below [`GAP_THRESHOLD`].
    pub degenerate_intervals: Vec<(f64, f64)>,
}

fn gauge(v: &mut Vector3<f64>) {
    let idx = v.iamax();
    if v[idx] < 0.0 {
        *v = -*v;
    }
}

fn eigen(p: &TqdParams, t: f64) -> (Vector3<f64>, Matrix3<f64>) {
    let e = p.tqd_matrix(t).symmetric_eigen();
    (e.eigenvalues, e.eigenvectors)
}

/// Assignment of new eigenvectors to the previous channels maximizing total
/// overlap.
fn best_permutation(prev: &[Vector3<f64>; 3], vecs: &Matrix3<f64>) -> [usize; 3] {
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut best = PERMS[0];
    let mut score = f64::NEG_INFINITY;
    for perm in PERMS {
        let s: f64 = (0..3).map(|i| prev[i].dot(&vecs.column(perm[i])).abs()).sum();
        if s > score {
            score = s;
            best = perm;
        }
    }
    best
}

/// Diagonalizes the triple dot on `points` grid times and tracks channels by
/// overlap with the previous step, starting in descending order.
pub fn decompose_channels(p: &TqdParams, baths: ChannelBaths, points: usize) -> ChannelDecomposition {
    let period = p.period();
    let times: Vec<f64> = (0..points).map(|j| period * j as f64 / points as f64).collect();
    let mut energies = Vec::with_capacity(points);
    let mut transforms = Vec::with_capacity(points);
    let mut rates = Vec::with_capacity(points);
    let mut prev: Option<[Vector3<f64>; 3]> = None;
    let mut min_gap = f64::INFINITY;
    let mut degenerate_intervals = Vec::new();
    for (j, &t) in times.iter().enumerate() {
        let (vals, vecs) = eigen(p, t);
        let order = match &prev {
            None => {
                let mut idx = [0, 1, 2];
                idx.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
                idx
            }
            Some(pv) => best_permutation(pv, &vecs),
        };
        let mut current = [Vector3::zeros(); 3];
        let mut e = [0.0; 3];
        for i in 0..3 {
            let mut v = vecs.column(order[i]).into_owned();
            if let Some(pv) = &prev {
                if pv[i].dot(&v) < 0.0 {
                    v = -v;
                }
            }
            current[i] = v;
            e[i] = vals[order[i]];
        }
        let gap = (e[0] - e[1]).abs().min((e[1] - e[2]).abs()).min((e[0] - e[2]).abs());
        min_gap = min_gap.min(gap);
        if gap < GAP_THRESHOLD {
            let dt = period / points as f64;
            degenerate_intervals.push((t - dt, t + dt));
        }
        let mut tm = Matrix3::zeros();
        let mut g = [[0.0; 2]; 3];
        for i in 0..3 {
            let mut v = current[i];
            gauge(&mut v);
            tm.set_row(i, &v.transpose());
            g[i] = [
                baths.residual[0] * v[MODE_LEFT].powi(2),
                baths.residual[1] * v[MODE_RIGHT].powi(2),
            ];
        }
        energies.push(e);
        transforms.push(tm);
        rates.push(g);
        prev = Some(current);
        let _ = j;
    }
    ChannelDecomposition {
        params: *p,
        baths,
        times,
        energies,
        transforms,
        rates,
        min_gap,
        degenerate_intervals,
    }
}

impl ChannelDecomposition {
    pub fn points(&self) -> usize {
        self.times.len()
    }

    pub fn period(&self) -> f64 {
        self.params.period()
    }

    /// Channel `i` at an arbitrary time: the eigenpair of `H(t)` closest to
    /// the channel vector at the nearest grid time. Returns
    /// `(eps_i, Gamma_{i,L}, Gamma_{i,R})`.
    pub fn channel_at(&self, i: usize, t: f64) -> (f64, f64, f64) {
        let period = self.period();
        let tau = t.rem_euclid(period);
        let n = self.points();
        let j = ((tau / period * n as f64).round() as usize) % n;
        let reference = self.transforms[j].row(i).transpose();
        let (vals, vecs) = eigen(&self.params, tau);
        let (k, _) = (0..3)
            .map(|k| (k, vecs.column(k).dot(&reference).abs()))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        let v = vecs.column(k);
        (
            vals[k],
            self.baths.residual[0] * v[MODE_LEFT].powi(2),
            self.baths.residual[1] * v[MODE_RIGHT].powi(2),
        )
    }

    /// `max_t |T' T^T|_F / gap(t)`, with `T'` from centred differences.
    pub fn adiabaticity_metric(&self) -> f64 {
        let n = self.points();
        let dt = self.period() / n as f64;
        let mut worst: f64 = 0.0;
        for j in 0..n {
            let (prev, next) = (&self.transforms[(j + n - 1) % n], &self.transforms[(j + 1) % n]);
            let here = &self.transforms[j];
            // align row signs with the current step before differencing
            let align = |m: &Matrix3<f64>| {
                let mut out = *m;
                for i in 0..3 {
                    if out.row(i).dot(&here.row(i)) < 0.0 {
                        let r = -out.row(i);
                        out.set_row(i, &r);
                    }
                }
                out
            };
            let deriv = (align(next) - align(prev)) / (2.0 * dt);
            let coupling = (deriv * here.transpose()).norm();
            let e = self.energies[j];
            let gap = (e[0] - e[1]).abs().min((e[1] - e[2]).abs()).min((e[0] - e[2]).abs());
            worst = worst.max(coupling / gap.max(1e-300));
        }
        worst
    }

    /// Largest violation of `sum_i Gamma_{i,nu} = J_nu` on the grid.
    pub fn sum_rule_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for g in &self.rates {
            for nu in 0..2 {
                let s: f64 = (0..3).map(|i| g[i][nu]).sum();
                worst = worst.max((s - self.baths.residual[nu]).abs());
            }
        }
        worst
    }

    /// Largest `|T T^T - 1|` entry on the grid.
    pub fn unitarity_defect(&self) -> f64 {
        self.transforms
            .iter()
            .map(|m| (m * m.transpose() - Matrix3::identity()).abs().max())
            .fold(0.0, f64::max)
    }

    pub fn require_adiabatic(&self, threshold: f64) -> Result<f64> {
        let metric = self.adiabaticity_metric();
        if metric > threshold {
            return Err(Error::NotAdiabatic { metric, threshold });
        }
        Ok(metric)
    }
}

/// Counting generator of channel `i`, counted at the left bath.
pub fn channel_generator(dec: &ChannelDecomposition, i: usize) -> ChannelGenerator<impl Fn(f64) -> (f64, f64, f64) + '_> {
    let (beta, mu) = (dec.baths.beta, dec.baths.mu);
    ChannelGenerator {
        period: dec.period(),
        rates: move |t| {
            let (e, gl, gr) = dec.channel_at(i, t);
            (gl, gr, fermi(e, beta, mu))
        },
    }
}

/// Charge and noise of one channel from the generic counting engine.
pub fn channel_cumulants(dec: &ChannelDecomposition, i: usize, stepping: Stepping) -> Result<CumulantRecord> {
    let gen = channel_generator(dec, i);
    periodic_cumulants(&gen, dec.points(), stepping)
}

/// Per-channel result of the closed-form rate-equation route.
#[derive(Clone, Debug)]
pub struct ChannelRecord {
    pub occupation: Vec<f64>,
    pub current: Vec<f64>,
    pub noise: Vec<f64>,
    pub charge: f64,
    pub fluctuation: f64,
}

/// Charge and noise of one channel from the explicit rate-equation
/// formulas `I = Gamma_L (f - n)` and
/// `S = Gamma_L [f + n - 2 f n + 2 f X_0 - 2 (1 - f) X_1]`.
///
/// With `X_1 = -X_0 = x`, the periodic `n`, `n^2` and `x` solve a linear
/// system driven by a constant, so the one-period map gives them directly.
pub fn channel_cumulants_closed_form(dec: &ChannelDecomposition, i: usize, stepping: Stepping) -> Result<ChannelRecord> {
    let (beta, mu) = (dec.baths.beta, dec.baths.mu);
    let coeffs = |t: f64| {
        let (e, gl, gr) = dec.channel_at(i, t);
        (gl, gl + gr, fermi(e, beta, mu))
    };
    // state (1, n, m = n^2, x, q, s): q and s accumulate the charge and
    // the noise along with the state, so no quadrature is needed
    let a = |t: f64| {
        let (gl, gp, f) = coeffs(t);
        let mut m = CMat::zeros(6, 6);
        m[(1, 0)] = c(f * gp);
        m[(1, 1)] = c(-gp);
        m[(2, 1)] = c(2.0 * f * gp);
        m[(2, 2)] = c(-2.0 * gp);
        m[(3, 0)] = c(gl * f);
        m[(3, 1)] = c(-2.0 * gl * f);
        m[(3, 2)] = c(gl);
        m[(3, 3)] = c(-gp);
        m[(4, 0)] = c(gl * f);
        m[(4, 1)] = c(-gl);
        m[(5, 0)] = c(gl * f);
        m[(5, 1)] = c(gl * (1.0 - 2.0 * f));
        m[(5, 3)] = c(-2.0 * gl);
        m
    };
    let period = dec.period();
    let points = dec.points();
    let times: Vec<f64> = (0..=points).map(|j| period * j as f64 / points as f64).collect();
    let traj = integrate_linear(a, CMat::identity(6, 6), &times, stepping)?;
    let map = &traj.states[points];
    // fixed point of y -> M y with y_0 = 1
    let block = CMat::identity(3, 3) - map.view((1, 1), (3, 3));
    let rhs = map.view((1, 0), (3, 1)).clone_owned();
    let tail = block.lu().solve(&rhs).ok_or(Error::Singular)?;
    let y0 = nalgebra::DVector::from_vec(vec![c(1.0), tail[0], tail[1], tail[2], c(0.0), c(0.0)]);
    let mut occupation = Vec::with_capacity(points + 1);
    let mut current = Vec::with_capacity(points + 1);
    let mut noise = Vec::with_capacity(points + 1);
    for (s, &t) in traj.states.iter().zip(&times) {
        let y = s * &y0;
        let (n, x) = (y[1].re, y[3].re);
        let (gl, _, f) = coeffs(t);
        occupation.push(n);
        current.push(gl * (f - n));
        noise.push(gl * (f + n - 2.0 * f * n - 2.0 * x));
    }
    let end = map * &y0;
    Ok(ChannelRecord {
        charge: end[4].re,
        fluctuation: end[5].re,
        occupation,
        current,
        noise,
    })
}

/// Totals over the three independent channels.
#[derive(Clone, Debug)]
pub struct AdiabaticTotals {
    pub charge: f64,
    pub fluctuation: f64,
    /// Per channel `(Q_i, Delta Q_i^2)` in the order upper, central, lower.
    pub channels: [(f64, f64); 3],
    pub metric: f64,
}

/// Sums the channel cumulants, checking adiabaticity unless `force` is set.
pub fn total_cumulants(dec: &ChannelDecomposition, stepping: Stepping, force: bool) -> Result<AdiabaticTotals> {
    let metric = dec.adiabaticity_metric();
    if !force && metric > ADIABATIC_THRESHOLD {
        return Err(Error::NotAdiabatic {
            metric,
            threshold: ADIABATIC_THRESHOLD,
        });
    }
    let mut channels = [(0.0, 0.0); 3];
    for (i, ch) in channels.iter_mut().enumerate() {
        let rec = channel_cumulants(dec, i, stepping)?;
        *ch = (rec.charge, rec.fluctuation);
    }
    Ok(AdiabaticTotals {
        charge: channels.iter().map(|c| c.0).sum(),
        fluctuation: channels.iter().map(|c| c.1).sum(),
        channels,
        metric,
    })
}

/// Driving frequency in units of the slowest channel relaxation, useful to
/// judge whether the rate equations are stiff.
pub fn stiffness_ratio(dec: &ChannelDecomposition) -> f64 {
    let slowest = dec
        .rates
        .iter()
        .flat_map(|g| g.iter().map(|r| r[0] + r[1]))
        .fold(f64::INFINITY, f64::min);
    slowest * dec.period() / (2.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DrivingProtocol;

    fn slow_pump(lambda: f64, bias: f64, phase: f64) -> (TqdParams, ChannelBaths) {
        let d = DrivingProtocol {
            omega: 5e-5,
            phase,
            dot_amplitude: 2.5,
            amp_left: 1.0,
            amp_right: 1.0,
            eps0: 1.0,
        };
        (TqdParams::symmetric(d, lambda, bias), ChannelBaths::from_widths(0.03, 0.03, 4.0, 1.0))
    }

    #[test]
    fn unbiased_central_channel_is_pinned() {
        let (p, b) = slow_pump(0.5, 0.0, PI / 2.0);
        let dec = decompose_channels(&p, b, 512);
        for e in &dec.energies {
            assert!((e[CENTRAL] - 1.0).abs() < 1e-12);
        }
        assert!(dec.sum_rule_defect() < 1e-10);
        assert!(dec.unitarity_defect() < 1e-12);
    }

    #[test]
    fn decoupled_channels_are_bare_dots() {
        let (mut p, b) = slow_pump(0.0, 3.0, 0.3);
        p.lambda_left = 0.0;
        p.lambda_right = 0.0;
        let dec = decompose_channels(&p, b, 64);
        // the dot crosses both levels, so it may sit in any channel
        for g in &dec.rates {
            let silent = g.iter().filter(|r| r[0] == 0.0 && r[1] == 0.0).count();
            assert_eq!(silent, 1, "{g:?}");
            for r in g {
                assert!(r[0] == 0.0 || r[1] == 0.0);
            }
        }
    }

    #[test]
    fn static_limit_has_no_current() {
        let d = DrivingProtocol::undriven(1.0, 5e-5);
        let p = TqdParams::symmetric(d, 0.5, 2.0);
        let dec = decompose_channels(&p, ChannelBaths::from_widths(0.03, 0.03, 4.0, 1.0), 64);
        assert!(dec.adiabaticity_metric() < 1e-12);
        for i in 0..3 {
            let rec = channel_cumulants_closed_form(&dec, i, Stepping::default()).unwrap();
            // equilibrium noise accumulates over a long period; the charge does not
            assert!(rec.charge.abs() < 1e-12 * dec.period(), "{}", rec.charge);
            assert!(rec.fluctuation > 0.0);
        }
    }

    #[test]
    fn metric_separates_frequency_regimes() {
        let (p, b) = slow_pump(0.5, 5.0, PI / 2.0);
        let slow = decompose_channels(&p, b, 2048).adiabaticity_metric();
        let mut fast = p;
        fast.driving.omega = 1.9;
        let fast = decompose_channels(&fast, b, 2048).adiabaticity_metric();
        assert!(slow < 1e-3, "{slow}");
        assert!(fast > ADIABATIC_THRESHOLD, "{fast}");
    }

    #[test]
    fn two_routes_agree() {
        let (p, b) = slow_pump(0.5, 3.0, PI / 2.0);
        let dec = decompose_channels(&p, b, 2048);
        for i in 0..3 {
            let generic = channel_cumulants(&dec, i, Stepping::Adaptive { rtol: 1e-11, atol: 1e-14 }).unwrap();
            let closed = channel_cumulants_closed_form(&dec, i, Stepping::Adaptive { rtol: 1e-11, atol: 1e-14 }).unwrap();
            assert!((generic.charge - closed.charge).abs() < 1e-8, "channel {i}: {} vs {}", generic.charge, closed.charge);
            assert!((generic.fluctuation - closed.fluctuation).abs() < 1e-8 * (1.0 + closed.fluctuation.abs()));
            for (n, st) in closed.occupation.iter().zip(&generic.state) {
                assert!((n - st[1].re).abs() < 1e-8);
                assert!((-1e-12..=1.0 + 1e-12).contains(n));
            }
        }
    }
}
