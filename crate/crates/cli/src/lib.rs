//! Scenario files, parameter sweeps and CSV output for `rcpump`.

pub mod compare;
pub mod config;
pub mod output;
pub mod sweep;

use rcpump::model::rc_map_lorentzian;

use config::Scenario;

/// Reaction-coordinate parameters for the scenario coupling and any extra
/// couplings in `gamma_list`.
pub fn rc_info(s: &Scenario) -> Vec<RcLine> {
    let p = &s.physics;
    let mut gammas: Vec<f64> = p.gamma.into_iter().chain(p.lambda.map(|l| 2.0 * l * l / p.width)).collect();
    gammas.extend(&s.gamma_list);
    gammas
        .into_iter()
        .map(|gamma| {
            let rc = rc_map_lorentzian(gamma, p.width, p.eps0);
            RcLine {
                gamma,
                width: p.width,
                lambda: rc.coupling,
                residual: 2.0 * p.width,
                lambda_over_omega: rc.coupling / p.omega,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RcLine {
    pub gamma: f64,
    pub width: f64,
    pub lambda: f64,
    /// Height of the flat residual spectral density.
    pub residual: f64,
    pub lambda_over_omega: f64,
}
