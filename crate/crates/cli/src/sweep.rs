//! Evaluation of a scenario on its parameter grid.

use std::time::Instant;

use rayon::prelude::*;
use rcpump::adiabatic::{decompose_channels, total_cumulants, ChannelBaths, CENTRAL, LOWER, UPPER};
use rcpump::fme::{self, FloquetProblem};
use rcpump::model::SpectralDensity;
use rcpump::ode::Stepping;
use rcpump::oracle;

use crate::config::{Physics, Regime, Representation, Scenario};

pub const COLUMNS: [&str; 15] = [
    "axis1", "axis2", "Q", "dQ2", "Q_u", "Q_c", "Q_d", "dQ2_u", "dQ2_c", "dQ2_d", "tail_norm", "min_pop", "adiab_metric",
    "status", "wall_ms",
];

/// One output row. Quantities a regime does not produce are NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub axis1: f64,
    pub axis2: f64,
    pub charge: f64,
    pub fluctuation: f64,
    /// `(Q, Delta Q^2)` of the upper, central and lower channels.
    pub channels: [(f64, f64); 3],
    pub tail_norm: f64,
    pub min_pop: f64,
    pub adiab_metric: f64,
    pub status: String,
    pub wall_ms: f64,
}

impl Row {
    fn empty(point: (f64, f64)) -> Self {
        Row {
            axis1: point.0,
            axis2: point.1,
            charge: f64::NAN,
            fluctuation: f64::NAN,
            channels: [(f64::NAN, f64::NAN); 3],
            tail_norm: f64::NAN,
            min_pop: f64::NAN,
            adiab_metric: f64::NAN,
            status: "ok".into(),
            wall_ms: f64::NAN,
        }
    }

    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    /// Numeric fields in column order, `status` excluded.
    pub fn values(&self) -> [f64; 14] {
        let c = &self.channels;
        [
            self.axis1,
            self.axis2,
            self.charge,
            self.fluctuation,
            c[UPPER].0,
            c[CENTRAL].0,
            c[LOWER].0,
            c[UPPER].1,
            c[CENTRAL].1,
            c[LOWER].1,
            self.tail_norm,
            self.min_pop,
            self.adiab_metric,
            self.wall_ms,
        ]
    }
}

/// Evaluates every grid point. Rows come back in grid order whatever the
/// thread count; a failing point is reported in its `status` column.
pub fn run(scenario: &Scenario, timing: bool) -> Vec<Row> {
    let grid = scenario.grid();
    grid.par_iter()
        .map(|&point| {
            let start = Instant::now();
            let physics = scenario.physics_at(point);
            let mut row = Row::empty(point);
            if let Err(e) = evaluate(scenario, &physics, &mut row) {
                log::warn!("point ({}, {}): {e}", point.0, point.1);
                row.status = e.to_string().replace([',', '\n'], ";");
            }
            if timing {
                row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
            }
            row
        })
        .collect()
}

fn evaluate(scenario: &Scenario, p: &Physics, row: &mut Row) -> rcpump::Result<()> {
    let n = &scenario.numerics;
    let tqd = p.tqd();
    match scenario.regime {
        Regime::Floquet => {
            let problem = FloquetProblem::symmetric(tqd, p.beta, p.mu, p.width);
            let opts = n.fme_options();
            let sol = fme::solve(&problem, &opts)?;
            row.tail_norm = sol.state.tail_norm;
            row.min_pop = sol.min_population;
            if n.secular {
                let rec = fme::secular_cumulants(&problem, &sol)?;
                row.charge = rec.charge;
                row.fluctuation = rec.fluctuation;
            } else {
                let c = fme::harmonic_cumulants(&sol.liouvillian, &sol.state)?;
                row.charge = c.charge;
                row.fluctuation = c.fluctuation;
            }
        }
        Regime::Adiabatic => {
            let baths = ChannelBaths::from_widths(p.width, p.width, p.beta, p.mu);
            let dec = decompose_channels(&tqd, baths, n.points);
            let totals = total_cumulants(&dec, Stepping::default(), n.force)?;
            row.charge = totals.charge;
            row.fluctuation = totals.fluctuation;
            row.channels = totals.channels;
            row.adiab_metric = totals.metric;
        }
        Regime::Oracle => {
            let settings = n.oracle_settings();
            let gamma = 2.0 * tqd.lambda_left.powi(2) / p.width;
            let model = match n.representation {
                Representation::Original => {
                    let left = SpectralDensity::lorentzian(gamma, p.width, tqd.eps_left)?;
                    let right = SpectralDensity::lorentzian(gamma, p.width, tqd.eps_right)?;
                    oracle::original_model(tqd.driving, &left, &right, p.beta, p.mu, &settings)?
                }
                Representation::Mapped => oracle::mapped_model(&tqd, [p.width; 2], p.beta, p.mu, &settings)?,
            };
            let run = oracle::run(&model, &settings)?;
            row.charge = run.charge;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(regime: &str, extra: &str) -> Scenario {
        Scenario::parse(&format!(
            "name = \"t\"\nregime = \"{regime}\"\n[physics]\nomega = 1.9\nphase = 1.5\ndot_amplitude = 2.5\nbias = 1.9\nbeta = 3.3\nmu = 1.0\nwidth = 0.05\nlambda = 0.25\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn floquet_point() {
        let rows = run(&scenario("floquet", "[numerics]\nsteps = 128\n"), false);
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert!(r.ok(), "{}", r.status);
        assert!((r.charge - 0.0829).abs() < 2e-3, "{}", r.charge);
        assert!(r.fluctuation > 0.0);
        assert!(r.adiab_metric.is_nan() && r.wall_ms.is_nan());
    }

    #[test]
    fn refused_adiabatic_point_is_reported() {
        let rows = run(&scenario("adiabatic", "[numerics]\npoints = 256\n"), false);
        assert!(!rows[0].ok());
        assert!(rows[0].status.contains("adiabaticity"), "{}", rows[0].status);
        assert!(rows[0].charge.is_nan());
    }
}
