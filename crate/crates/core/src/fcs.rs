//! Full counting statistics of the charge exchanged with one reservoir.
//!
//! A generator is split as `L(t) + J(xi, t)` where
//! `J(xi, t) = (e^{i xi} - 1) J_in(t) + (e^{-i xi} - 1) J_out(t)`; `J_in`
//! collects jumps that take an electron out of the counted reservoir.
//! Current and noise follow from the auxiliary-operator equations, with the
//! periodic fixed point found from the one-period map.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{c, solve_dense, CMat, CVec, I};
use crate::ode::{integrate_affine, integrate_linear, Stepping};

/// Periodic generator with counted jumps at one reservoir.
pub trait CountingGenerator {
    fn dim(&self) -> usize;
    fn period(&self) -> f64;
    /// Row vector `w` with `Tr rho = w . rho`.
    fn trace_weights(&self) -> CVec;
    /// Generator at zero counting field.
    fn generator(&self, t: f64) -> CMat;
    /// Counted jump superoperators `(J_in, J_out)`.
    fn counted_jumps(&self, t: f64) -> (CMat, CMat);

    /// `d J / d(i xi)` at zero field.
    fn first_derivative(&self, t: f64) -> CMat {
        let (a, b) = self.counted_jumps(t);
        a - b
    }

    /// `d^2 J / d(i xi)^2` at zero field.
    fn second_derivative(&self, t: f64) -> CMat {
        let (a, b) = self.counted_jumps(t);
        a + b
    }

    /// Full tilted generator `L(t) + J(xi, t)`.
    fn tilted(&self, t: f64, xi: f64) -> CMat {
        let (a, b) = self.counted_jumps(t);
        self.generator(t) + a * (C64::from_polar(1.0, xi) - 1.0) + b * (C64::from_polar(1.0, -xi) - 1.0)
    }
}

/// Current, noise and their period integrals on a uniform grid.
#[derive(Clone, Debug)]
pub struct CumulantRecord {
    /// `t_j = j T / N`, `j = 0..=N`.
    pub times: Vec<f64>,
    pub current: Vec<f64>,
    pub noise: Vec<f64>,
    /// Periodic state at each grid time.
    pub state: Vec<CVec>,
    /// Auxiliary operator `X` at each grid time.
    pub auxiliary: Vec<CVec>,
    /// `Q`, the charge per period.
    pub charge: f64,
    /// `Delta Q^2`, the charge variance gained per period.
    pub fluctuation: f64,
    /// Largest `|Tr X|` on the grid.
    pub trace_drift: f64,
}

fn dot(w: &CVec, v: &CVec) -> C64 {
    w.iter().zip(v.iter()).map(|(a, b)| a * b).sum()
}

/// Composite trapezoid rule on a uniform grid that includes both end points.
pub fn trapezoid_uniform(values: &[f64], dt: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    dt * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1]))
}

/// Solves `(1 - P) x = b` under `w . x = norm`, replacing the equation of the
/// first component with non-zero weight.
fn constrained_fixed_point(p: &CMat, b: &CVec, w: &CVec, norm: C64) -> Result<CVec> {
    let d = p.nrows();
    let mut a = CMat::identity(d, d) - p;
    let mut rhs = b.clone();
    let row = w.iter().position(|x| x.norm() > 0.0).ok_or(Error::Singular)?;
    for j in 0..d {
        a[(row, j)] = w[j];
    }
    rhs[row] = norm;
    solve_dense(a, &rhs)
}

/// Periodic state, current and noise of `gen` sampled at `points + 1`
/// uniform times over one period.
///
/// The generator and its first jump derivative are propagated together:
/// `Phi' = L Phi`, `Psi' = L Psi + J' Phi`, from which `rho(0)` is the unit
/// trace fixed point of `Phi(T)` and `X(0)` follows from the affine period
/// map of the auxiliary equation.
pub fn periodic_cumulants<G: CountingGenerator + ?Sized>(gen: &G, points: usize, stepping: Stepping) -> Result<CumulantRecord> {
    let d = gen.dim();
    let period = gen.period();
    let times: Vec<f64> = (0..=points).map(|j| period * j as f64 / points as f64).collect();
    let augmented = |t: f64| {
        let l = gen.generator(t);
        let mut m = CMat::zeros(2 * d, 2 * d);
        m.view_mut((0, 0), (d, d)).copy_from(&l);
        m.view_mut((d, d), (d, d)).copy_from(&l);
        m.view_mut((d, 0), (d, d)).copy_from(&gen.first_derivative(t));
        m
    };
    let mut init = CMat::zeros(2 * d, d);
    init.view_mut((0, 0), (d, d)).fill_with_identity();
    let traj = integrate_linear(augmented, init, &times, stepping)?;
    let w = gen.trace_weights();
    let last = traj.states.last().unwrap();
    let p = last.rows(0, d).clone_owned();
    let r = last.rows(d, d).clone_owned();

    let rho0 = constrained_fixed_point(&p, &CVec::zeros(d), &w, c(1.0))?;
    let r_rho = &r * &rho0;
    let b = &r_rho - &rho0 * dot(&w, &r_rho);
    let x0 = constrained_fixed_point(&p, &b, &w, c(0.0))?;
    let residual = (&p * &x0 + &b - &x0).camax();
    let scale = 1.0 + x0.camax();
    if residual > 1e-8 * scale {
        return Err(Error::NoPeriodicFixedPoint {
            periods: 1,
            residual,
        });
    }

    let mut state = Vec::with_capacity(times.len());
    let mut auxiliary = Vec::with_capacity(times.len());
    let mut current = Vec::with_capacity(times.len());
    let mut noise = Vec::with_capacity(times.len());
    let mut trace_drift: f64 = 0.0;
    for (y, &t) in traj.states.iter().zip(&times) {
        let phi = y.rows(0, d);
        let psi = y.rows(d, d);
        let rho = phi * &rho0;
        let sigma = psi * &rho0;
        let n = dot(&w, &sigma);
        let mut x = phi * &x0 + sigma - &rho * n;
        let drift = dot(&w, &x);
        trace_drift = trace_drift.max(drift.norm());
        // project onto the traceless subspace along the trace direction
        let wn: C64 = w.iter().map(|z| z.norm_sqr()).sum::<f64>().into();
        x -= w.map(|z| z.conj()) * (drift / wn);
        let j1 = gen.first_derivative(t);
        let j2 = gen.second_derivative(t);
        let j1_rho = &j1 * &rho;
        current.push(dot(&w, &j1_rho).re);
        noise.push(dot(&w, &(&j2 * &rho + &j1 * &x * c(2.0))).re);
        state.push(rho);
        auxiliary.push(x);
    }
    let dt = period / points as f64;
    Ok(CumulantRecord {
        charge: trapezoid_uniform(&current, dt),
        fluctuation: trapezoid_uniform(&noise, dt),
        times,
        current,
        noise,
        state,
        auxiliary,
        trace_drift,
    })
}

/// Propagates the auxiliary equation `X' = J' rho - I rho + L X` for a given
/// state trajectory `rho(t)` from `x0` at `times[0]`.
pub fn propagate_auxiliary<G, R>(gen: &G, rho: R, x0: &CVec, times: &[f64], stepping: Stepping) -> Result<Vec<CVec>>
where
    G: CountingGenerator + ?Sized,
    R: Fn(f64) -> CVec,
{
    let w = gen.trace_weights();
    let forcing = |t: f64| {
        let r = rho(t);
        let j1r = gen.first_derivative(t) * &r;
        let current = dot(&w, &j1r);
        (j1r - r * current).iter().copied().collect::<Vec<_>>()
    };
    let x0: Vec<C64> = x0.iter().copied().collect();
    let out = integrate_affine(|t| gen.generator(t), forcing, &x0, times, stepping)?;
    Ok(out.into_iter().map(CVec::from_vec).collect())
}

/// Logarithm of the dominant eigenvalue of the tilted one-period map.
fn log_dominant(gen: &(impl CountingGenerator + ?Sized), xi: f64, steps: usize) -> Result<C64> {
    let d = gen.dim();
    let traj = integrate_linear(
        |t| gen.tilted(t, xi),
        CMat::identity(d, d),
        &[0.0, gen.period()],
        Stepping::Fixed(steps),
    )?;
    let m = &traj.states[1];
    let eig = m.clone().schur().eigenvalues().ok_or(Error::Singular)?;
    let best = eig
        .iter()
        .copied()
        .fold(C64::new(0.0, 0.0), |acc, z| if z.norm() > acc.norm() { z } else { acc });
    Ok(best.ln())
}

/// `(Q, Delta Q^2)` per period from central differences of the scaled
/// cumulant generating function, with field step `h` and a fixed step
/// sequence shared by all evaluations.
pub fn finite_difference_cumulants(gen: &(impl CountingGenerator + ?Sized), h: f64, steps: usize) -> Result<(f64, f64)> {
    let plus = log_dominant(gen, h, steps)?;
    let zero = log_dominant(gen, 0.0, steps)?;
    let minus = log_dominant(gen, -h, steps)?;
    // branch of the logarithm: the phase difference is small
    let dphase = |a: C64, b: C64| C64::new(a.re - b.re, (a.im - b.im + PI).rem_euclid(2.0 * PI) - PI);
    let first = dphase(plus, minus) / (2.0 * h);
    let second = (dphase(plus, zero) + dphase(minus, zero)) / (h * h);
    Ok(((first / I).re, -second.re))
}

/// One possible transition of a classical jump process.
pub struct Transition<'a> {
    pub from: usize,
    pub to: usize,
    /// Charge taken from the counted reservoir by this jump.
    pub charge: i64,
    pub rate: Box<dyn Fn(f64) -> f64 + Send + Sync + 'a>,
    /// Upper bound of `rate` over the period.
    pub bound: f64,
}

/// Mean and variance growth rates of the counted charge with their standard
/// errors, all per unit time.
#[derive(Clone, Copy, Debug)]
pub struct MonteCarloEstimate {
    pub mean_rate: f64,
    pub mean_error: f64,
    pub variance_rate: f64,
    pub variance_error: f64,
    pub seed: u64,
}

/// Trajectory sampling of a periodically driven jump process by thinning.
///
/// Trajectories start from `initial` (a distribution over states, usually the
/// periodic state at `t = 0`), run for `warmup + measured` periods, and the
/// statistics use the counts between the end of the warm-up and the end of
/// the run. Standard errors come from batch means over 100 batches.
pub fn mc_trajectory_oracle(
    transitions: &[Transition],
    initial: &[f64],
    period: f64,
    warmup: usize,
    measured: usize,
    samples: usize,
    seed: u64,
) -> MonteCarloEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = initial.len();
    let bounds: Vec<f64> = (0..states)
        .map(|s| transitions.iter().filter(|tr| tr.from == s).map(|tr| tr.bound).sum())
        .collect();
    let t_warm = warmup as f64 * period;
    let t_end = (warmup + measured) as f64 * period;
    let mut counts = Vec::with_capacity(samples);
    for _ in 0..samples {
        let mut u: f64 = rng.random();
        let mut s = 0;
        while s + 1 < states && u >= initial[s] {
            u -= initial[s];
            s += 1;
        }
        let mut t = 0.0;
        let mut n: i64 = 0;
        let mut n_warm: Option<i64> = None;
        loop {
            let b = bounds[s];
            let next = if b > 0.0 {
                t - (1.0 - rng.random::<f64>()).ln() / b
            } else {
                f64::INFINITY
            };
            if n_warm.is_none() && next >= t_warm {
                n_warm = Some(n);
            }
            if next >= t_end {
                break;
            }
            t = next;
            let tau = t.rem_euclid(period);
            let mut pick = rng.random::<f64>() * b;
            for tr in transitions.iter().filter(|tr| tr.from == s) {
                if pick < tr.bound {
                    if pick < (tr.rate)(tau) {
                        s = tr.to;
                        n += tr.charge;
                    }
                    break;
                }
                pick -= tr.bound;
            }
        }
        counts.push((n - n_warm.unwrap_or(0)) as f64);
    }
    let horizon = measured as f64 * period;
    let batches = 100.min(samples);
    let per = samples / batches;
    let stats = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        (m, v)
    };
    let (mean, var) = stats(&counts);
    let batch_vars: Vec<f64> = counts.chunks(per).take(batches).map(|ch| stats(ch).1).collect();
    let (_, spread) = stats(&batch_vars);
    MonteCarloEstimate {
        mean_rate: mean / horizon,
        mean_error: (var / samples as f64).sqrt() / horizon,
        variance_rate: var / horizon,
        variance_error: (spread / batches as f64).sqrt() / horizon,
        seed,
    }
}

/// Two-state channel `{empty, filled}` exchanging electrons with a counted
/// and an uncounted reservoir, with rates and occupation factor given as
/// periodic functions.
pub struct ChannelGenerator<F>
where
    F: Fn(f64) -> (f64, f64, f64),
{
    pub period: f64,
    /// `t -> (Gamma_counted, Gamma_other, f)`.
    pub rates: F,
}

impl<F> CountingGenerator for ChannelGenerator<F>
where
    F: Fn(f64) -> (f64, f64, f64),
{
    fn dim(&self) -> usize {
        2
    }

    fn period(&self) -> f64 {
        self.period
    }

    fn trace_weights(&self) -> CVec {
        CVec::from_element(2, c(1.0))
    }

    fn generator(&self, t: f64) -> CMat {
        let (gl, gr, f) = (self.rates)(t);
        let g = gl + gr;
        CMat::from_row_slice(2, 2, &[c(-f * g), c((1.0 - f) * g), c(f * g), c(-(1.0 - f) * g)])
    }

    fn counted_jumps(&self, t: f64) -> (CMat, CMat) {
        let (gl, _, f) = (self.rates)(t);
        let mut fill = CMat::zeros(2, 2);
        fill[(1, 0)] = c(f * gl);
        let mut empty = CMat::zeros(2, 2);
        empty[(0, 1)] = c((1.0 - f) * gl);
        (fill, empty)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn static_channel(gl: f64, gr: f64, f: f64) -> ChannelGenerator<impl Fn(f64) -> (f64, f64, f64)> {
        ChannelGenerator {
            period: 2.0 * PI,
            rates: move |_t| (gl, gr, f),
        }
    }

    fn driven_channel() -> ChannelGenerator<impl Fn(f64) -> (f64, f64, f64)> {
        let omega = 1.3;
        ChannelGenerator {
            period: 2.0 * PI / omega,
            rates: move |t: f64| {
                let gl = 0.4 * (1.0 - 0.9 * (omega * t).cos());
                let gr = 0.4 * (1.0 + 0.9 * (omega * t + 1.2).cos());
                let f = 1.0 / (1.0 + (1.5 * (omega * t).sin()).exp());
                (gl, gr, f)
            },
        }
    }

    /// Stationary cumulants of a static single level, from the textbook
    /// two-terminal formulas.
    fn static_oracle(gl: f64, gr: f64, fl: f64, fr: f64) -> (f64, f64) {
        // counting field on the left only; rates in/out per reservoir
        let (a, b) = (gl * fl + gr * fr, gl * (1.0 - fl) + gr * (1.0 - fr));
        let g = a + b;
        let p1 = a / g;
        let current = gl * fl * (1.0 - p1) - gl * (1.0 - fl) * p1;
        // Var rate = sum of jump rates + 2 * correlation, via the resolvent
        let jp = gl * fl * (1.0 - p1) + gl * (1.0 - fl) * p1;
        // X solves L X = -(J' - I) rho with Tr X = 0: X = (x, -x)
        // J' rho - I rho = (-gl(1-fl)p1 - I(1-p1), gl fl (1-p1) - I p1)
        let r1 = gl * fl * (1.0 - p1) - current * p1;
        // L X second component: a x - b (-x) ... L = [[-a, b], [a, -b]]
        // (L X)_1 = a x + b x = g x  => g x = -r1
        let x = -r1 / g;
        let x_vec = [x, -x];
        // J' X: counted fill takes component 0 to 1 (+), empty takes 1 to 0 (-)
        let j1x = gl * fl * x_vec[0] - gl * (1.0 - fl) * x_vec[1];
        (current, jp + 2.0 * j1x)
    }

    #[test]
    fn static_level_matches_closed_form() {
        let (gl, gr, f) = (0.3, 0.7, 0.8);
        let gen = static_channel(gl, gr, f);
        let rec = periodic_cumulants(&gen, 64, Stepping::default()).unwrap();
        let (i, s) = static_oracle(gl, gr, f, f);
        let t = gen.period;
        assert!((rec.charge - i * t).abs() < 1e-10);
        assert!((rec.fluctuation - s * t).abs() < 1e-9, "{} vs {}", rec.fluctuation, s * t);
        // equal Fermi factors: no current, finite noise
        assert!(rec.charge.abs() < 1e-12 && rec.fluctuation > 0.0);
        assert!(rec.trace_drift < 1e-10);
    }

    #[test]
    fn no_counted_jumps_means_no_auxiliary() {
        let gen = static_channel(0.0, 0.5, 0.3);
        let rec = periodic_cumulants(&gen, 32, Stepping::default()).unwrap();
        for x in &rec.auxiliary {
            assert!(x.camax() < 1e-14);
        }
        assert_eq!(rec.fluctuation, 0.0);
    }

    #[test]
    fn driven_channel_generating_function_agrees() {
        let gen = driven_channel();
        let rec = periodic_cumulants(&gen, 512, Stepping::Adaptive { rtol: 1e-11, atol: 1e-13 }).unwrap();
        let (q, dq2) = finite_difference_cumulants(&gen, 1e-4, 20_000).unwrap();
        assert!(((rec.charge - q) / q).abs() < 1e-4, "{} vs {q}", rec.charge);
        assert!(((rec.fluctuation - dq2) / dq2).abs() < 1e-4, "{} vs {dq2}", rec.fluctuation);
        assert!(rec.charge.abs() > 1e-3, "pump is active");
        for st in &rec.state {
            assert!(st[1].re >= 0.0 && st[1].re <= 1.0);
        }
        assert!(rec.trace_drift < 1e-9);
    }

    #[test]
    fn auxiliary_propagation_converges_to_periodic_solution() {
        let gen = driven_channel();
        let rec = periodic_cumulants(&gen, 256, Stepping::default()).unwrap();
        let t = gen.period;
        let points = rec.times.len() - 1;
        let rho = |time: f64| {
            // rho is smooth and periodic; use the exact propagation from rho(0)
            let tau = time.rem_euclid(t);
            let j = ((tau / t) * points as f64).round() as usize;
            rec.state[j.min(points)].clone()
        };
        // start from zero at a grid time and propagate on grid times only
        let times: Vec<f64> = (0..=points * 6).map(|j| t * j as f64 / points as f64).collect();
        let xs = propagate_auxiliary(&gen, rho, &CVec::zeros(2), &times, Stepping::Fixed(1)).unwrap();
        let end = xs.last().unwrap();
        // memory of X(0) = 0 decays with the relaxation rate; the fixed-step
        // forcing sampled on the grid limits agreement
        assert!((end - &rec.auxiliary[0]).camax() < 1e-3);
        for x in &xs {
            assert!((x[0] + x[1]).norm() < 1e-12);
        }
    }

    #[test]
    fn monte_carlo_matches_periodic_cumulants() {
        let gen = driven_channel();
        let rec = periodic_cumulants(&gen, 512, Stepping::default()).unwrap();
        let rates = |t: f64| (gen.rates)(t);
        let transitions = vec![
            Transition { from: 0, to: 1, charge: 1, rate: Box::new(move |t| rates(t).0 * rates(t).2), bound: 0.8 },
            Transition { from: 0, to: 1, charge: 0, rate: Box::new(move |t| rates(t).1 * rates(t).2), bound: 0.8 },
            Transition { from: 1, to: 0, charge: -1, rate: Box::new(move |t| rates(t).0 * (1.0 - rates(t).2)), bound: 0.8 },
            Transition { from: 1, to: 0, charge: 0, rate: Box::new(move |t| rates(t).1 * (1.0 - rates(t).2)), bound: 0.8 },
        ];
        let initial = [rec.state[0][0].re, rec.state[0][1].re];
        let est = mc_trajectory_oracle(&transitions, &initial, gen.period, 5, 20, 20_000, 7);
        let t = gen.period;
        assert!((est.mean_rate * t - rec.charge).abs() < 3.0 * est.mean_error * t);
        assert!((est.variance_rate * t - rec.fluctuation).abs() < 3.0 * est.variance_error * t);
    }
}
