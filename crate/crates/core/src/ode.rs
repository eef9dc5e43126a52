//! TR-BDF2 integration of linear complex systems `Y' = A(t) Y`.
//!
//! The scheme is L-stable, which matters for rate equations whose rates
//! exceed the driving frequency by many orders of magnitude. Step size is
//! controlled by step doubling, and accepted steps are extrapolated.

use nalgebra::LU;

use crate::error::{Error, Result};
use crate::linalg::{c, CMat};

const GAMMA: f64 = 2.0 - std::f64::consts::SQRT_2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stepping {
    /// Error-controlled steps; `rtol` and `atol` bound the local error per
    /// step in the max norm.
    Adaptive { rtol: f64, atol: f64 },
    /// A fixed number of equal steps between consecutive output times.
    Fixed(usize),
}

impl Default for Stepping {
    fn default() -> Self {
        Stepping::Adaptive {
            rtol: 1e-10,
            atol: 1e-12,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    /// `Y` at each requested output time.
    pub states: Vec<CMat>,
    pub accepted: usize,
    pub rejected: usize,
}

fn lu_of(a: &CMat, scale: f64) -> LU<num_complex::Complex64, nalgebra::Dyn, nalgebra::Dyn> {
    let n = a.nrows();
    (CMat::identity(n, n) - a * c(scale)).lu()
}

/// One TR-BDF2 step from `t` with step `h`.
fn step<A>(a: &A, t: f64, h: f64, y: &CMat, a_t: &CMat) -> Result<(CMat, CMat)>
where
    A: Fn(f64) -> CMat,
{
    let a_mid = a(t + GAMMA * h);
    let rhs = y + a_t * y * c(GAMMA * h / 2.0);
    let y_mid = lu_of(&a_mid, GAMMA * h / 2.0).solve(&rhs).ok_or(Error::Singular)?;
    let a_end = a(t + h);
    let denom = GAMMA * (2.0 - GAMMA);
    let rhs = &y_mid * c(1.0 / denom) - y * c((1.0 - GAMMA).powi(2) / denom);
    let y_end = lu_of(&a_end, (1.0 - GAMMA) / (2.0 - GAMMA) * h)
        .solve(&rhs)
        .ok_or(Error::Singular)?;
    Ok((y_end, a_end))
}

fn error_norm(fine: &CMat, coarse: &CMat, rtol: f64, atol: f64) -> f64 {
    fine.iter()
        .zip(coarse.iter())
        .map(|(f, g)| (f - g).norm() / 3.0 / (atol + rtol * f.norm().max(g.norm())))
        .fold(0.0, f64::max)
}

/// Integrates `Y' = A(t) Y` from `times[0]`, returning `Y` at every entry of
/// `times` (which must increase). Steps always land on the output times.
pub fn integrate_linear<A>(a: A, y0: CMat, times: &[f64], stepping: Stepping) -> Result<Trajectory>
where
    A: Fn(f64) -> CMat,
{
    assert!(!times.is_empty());
    let mut states = Vec::with_capacity(times.len());
    states.push(y0.clone());
    let mut y = y0;
    let mut t = times[0];
    let mut a_t = a(t);
    let (mut accepted, mut rejected) = (0, 0);
    let span = times.last().unwrap() - times[0];
    let mut h = span / (times.len().max(2) - 1) as f64 / 4.0;
    for &target in &times[1..] {
        match stepping {
            Stepping::Fixed(n) => {
                let dt = (target - t) / n as f64;
                for i in 0..n {
                    let ti = t + i as f64 * dt;
                    let (next, a_next) = step(&a, ti, dt, &y, &a_t)?;
                    y = next;
                    a_t = a_next;
                    accepted += 1;
                }
                t = target;
            }
            Stepping::Adaptive { rtol, atol } => {
                while t < target {
                    let remaining = target - t;
                    let last = h >= remaining * (1.0 - 1e-12);
                    let hh = if last { remaining } else { h };
                    if hh < 1e-14 * span.max(t.abs()) {
                        return Err(Error::Stiffness { t, h: hh });
                    }
                    let (coarse, _) = step(&a, t, hh, &y, &a_t)?;
                    let (half, a_half) = step(&a, t, hh / 2.0, &y, &a_t)?;
                    let (fine, a_end) = step(&a, t + hh / 2.0, hh / 2.0, &half, &a_half)?;
                    let err = error_norm(&fine, &coarse, rtol, atol);
                    let factor = if err == 0.0 {
                        2.0
                    } else {
                        (0.9 * err.powf(-1.0 / 3.0)).clamp(0.2, 2.0)
                    };
                    if err <= 1.0 {
                        // local extrapolation keeps R(-inf) = 0
                        y = &fine + (&fine - &coarse) * c(1.0 / 3.0);
                        a_t = a_end;
                        t = if last { target } else { t + hh };
                        accepted += 1;
                        // a clipped final step says nothing about the next one
                        if !last || factor < 1.0 {
                            h = hh * factor;
                        }
                    } else {
                        rejected += 1;
                        h = hh * factor;
                    }
                }
            }
        }
        states.push(y.clone());
    }
    Ok(Trajectory {
        states,
        accepted,
        rejected,
    })
}

/// Integrates the affine system `y' = A(t) y + g(t)` for a single vector by
/// appending a constant unit component.
pub fn integrate_affine<A, G>(a: A, g: G, y0: &[num_complex::Complex64], times: &[f64], stepping: Stepping) -> Result<Vec<Vec<num_complex::Complex64>>>
where
    A: Fn(f64) -> CMat,
    G: Fn(f64) -> Vec<num_complex::Complex64>,
{
    let d = y0.len();
    let augmented = |t: f64| {
        let mut m = CMat::zeros(d + 1, d + 1);
        m.view_mut((0, 0), (d, d)).copy_from(&a(t));
        for (i, v) in g(t).into_iter().enumerate() {
            m[(i, d)] = v;
        }
        m
    };
    let mut init = CMat::zeros(d + 1, 1);
    for (i, v) in y0.iter().enumerate() {
        init[(i, 0)] = *v;
    }
    init[(d, 0)] = c(1.0);
    let traj = integrate_linear(augmented, init, times, stepping)?;
    Ok(traj
        .states
        .iter()
        .map(|s| s.column(0).iter().take(d).copied().collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{expm_neg_i_hermitian, max_abs, I};
    use num_complex::Complex64 as C64;

    #[test]
    fn scalar_decay_and_stiff_limit() {
        for k in [1.0, 1e6] {
            let a = move |_t: f64| CMat::from_element(1, 1, c(-k));
            let times = [0.0, 0.5, 1.0];
            let traj = integrate_linear(a, CMat::from_element(1, 1, c(1.0)), &times, Stepping::default()).unwrap();
            for (s, t) in traj.states.iter().zip(times) {
                let exact = (-k * t).exp();
                assert!((s[(0, 0)].re - exact).abs() < 1e-9, "k={k} t={t} err={} steps={}", (s[(0, 0)].re - exact).abs(), traj.accepted);
            }
        }
    }

    #[test]
    fn time_dependent_scalar() {
        // y' = cos(t) y  =>  y = exp(sin t)
        let a = |t: f64| CMat::from_element(1, 1, c(t.cos()));
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.7).collect();
        let traj = integrate_linear(a, CMat::from_element(1, 1, c(1.0)), &times, Stepping::default()).unwrap();
        for (s, t) in traj.states.iter().zip(&times) {
            assert!((s[(0, 0)].re - t.sin().exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn oscillator_matches_exponential_and_fixed_converges() {
        let h = CMat::from_row_slice(2, 2, &[c(0.3), c(1.0), c(1.0), c(-0.3)]);
        let a = |_t: f64| &h * (-I);
        let exact = expm_neg_i_hermitian(&(&h * c(3.0)));
        let adaptive = integrate_linear(a, CMat::identity(2, 2), &[0.0, 3.0], Stepping::default()).unwrap();
        assert!(max_abs(&(&adaptive.states[1] - &exact)) < 1e-8);
        let e1 = max_abs(&(&integrate_linear(a, CMat::identity(2, 2), &[0.0, 3.0], Stepping::Fixed(200)).unwrap().states[1] - &exact));
        let e2 = max_abs(&(&integrate_linear(a, CMat::identity(2, 2), &[0.0, 3.0], Stepping::Fixed(400)).unwrap().states[1] - &exact));
        // second order
        assert!((e1 / e2 - 4.0).abs() < 0.2, "ratio {}", e1 / e2);
    }

    #[test]
    fn affine_forcing() {
        // y' = -y + 1, y(0) = 0  =>  y = 1 - e^{-t}
        let a = |_t: f64| CMat::from_element(1, 1, c(-1.0));
        let g = |_t: f64| vec![c(1.0)];
        let out = integrate_affine(a, g, &[C64::new(0.0, 0.0)], &[0.0, 2.0], Stepping::default()).unwrap();
        assert!((out[1][0].re - (1.0 - (-2.0f64).exp())).abs() < 1e-9);
    }
}
