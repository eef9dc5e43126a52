//! Reservoir spectral densities, thermodynamic parameters, driving protocols
//! and the fermionic reaction-coordinate (RC) mapping.
//!
//! Units: energies in units of the static dot energy, `hbar = 1`, unit
//! electron charge. Times are in inverse energy units.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};

/// Which reservoir a quantity belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// Frequency-resolved tunnelling strength `J(w)` of a reservoir.
#[derive(Clone, Debug, PartialEq)]
pub enum SpectralDensity {
    /// `J(w) = coupling * width^2 / ((w - center)^2 + width^2)`.
    Lorentzian {
        coupling: f64,
        width: f64,
        center: f64,
    },
    /// Samples of `J` on a strictly increasing grid; zero outside the grid.
    Tabulated { omega: Vec<f64>, values: Vec<f64> },
}

impl SpectralDensity {
    pub fn lorentzian(coupling: f64, width: f64, center: f64) -> Result<Self> {
        if !(coupling > 0.0) || !coupling.is_finite() {
            return Err(Error::InvalidParameter {
                name: "coupling",
                reason: format!("Lorentzian coupling must be positive, got {coupling}"),
            });
        }
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::InvalidParameter {
                name: "width",
                reason: format!("Lorentzian width must be positive, got {width}"),
            });
        }
        if !center.is_finite() {
            return Err(Error::InvalidParameter {
                name: "center",
                reason: "center must be finite".into(),
            });
        }
        Ok(SpectralDensity::Lorentzian {
            coupling,
            width,
            center,
        })
    }

    pub fn tabulated(omega: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if omega.len() != values.len() {
            return Err(Error::InvalidParameter {
                name: "values",
                reason: format!("{} grid points but {} samples", omega.len(), values.len()),
            });
        }
        if omega.len() < 2 {
            return Err(Error::InvalidParameter {
                name: "omega",
                reason: "a tabulated spectral density needs at least two samples".into(),
            });
        }
        if omega.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter {
                name: "omega",
                reason: "grid must be strictly increasing".into(),
            });
        }
        if let Some(bad) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "values",
                reason: format!("spectral density must be finite and non-negative, found {bad}"),
            });
        }
        Ok(SpectralDensity::Tabulated { omega, values })
    }

    /// Reads a two-column `(w, J)` text file. Blank lines and lines starting
    /// with `#` are skipped.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::parse_table(&text)
    }

    pub fn parse_table(text: &str) -> Result<Self> {
        let mut omega = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .collect();
            if cols.len() != 2 {
                return Err(Error::Config(format!(
                    "line {}: expected two columns, found {}",
                    lineno + 1,
                    cols.len()
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))
            };
            omega.push(parse(cols[0])?);
            values.push(parse(cols[1])?);
        }
        Self::tabulated(omega, values)
    }

    /// Samples this spectral density on `grid`.
    pub fn tabulate(&self, grid: &[f64]) -> Result<SpectralDensity> {
        let values = grid
            .iter()
            .map(|&w| self.eval(w))
            .collect::<Result<Vec<_>>>()?;
        SpectralDensity::tabulated(grid.to_vec(), values)
    }

    /// `J(w)`. Lorentzians are evaluated in closed form, tables by linear
    /// interpolation.
    pub fn eval(&self, omega: f64) -> Result<f64> {
        match self {
            SpectralDensity::Lorentzian {
                coupling,
                width,
                center,
            } => {
                let x = omega - center;
                Ok(coupling * width * width / (x * x + width * width))
            }
            SpectralDensity::Tabulated { omega: grid, values } => {
                let (lo, hi) = (grid[0], grid[grid.len() - 1]);
                if !(omega >= lo && omega <= hi) {
                    return Err(Error::OutOfRange { omega, lo, hi });
                }
                let i = match grid.partition_point(|&w| w <= omega) {
                    0 => 0,
                    k if k >= grid.len() => grid.len() - 2,
                    k => k - 1,
                };
                let t = (omega - grid[i]) / (grid[i + 1] - grid[i]);
                Ok(values[i] * (1.0 - t) + values[i + 1] * t)
            }
        }
    }
}

/// A grid `w = center + width * sinh(u)` with `u` uniform, reaching
/// `center +- extent`. Spacing is ~`width * du` at the peak and grows
/// geometrically in the tails, so Lorentzian moments converge quickly.
pub fn peak_adapted_grid(center: f64, width: f64, extent: f64, points: usize) -> Vec<f64> {
    assert!(points >= 3, "need at least three grid points");
    let u_max = (extent / width).asinh();
    (0..points)
        .map(|i| {
            let u = -u_max + 2.0 * u_max * i as f64 / (points - 1) as f64;
            center + width * u.sinh()
        })
        .collect()
}

/// Uniform grid of `points` samples on `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2);
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

/// Thermodynamic state and coupling structure of one reservoir.
#[derive(Clone, Debug, PartialEq)]
pub struct ReservoirSpec {
    pub side: Side,
    pub beta: f64,
    pub mu: f64,
    pub spectral_density: SpectralDensity,
}

impl ReservoirSpec {
    pub fn new(side: Side, beta: f64, mu: f64, spectral_density: SpectralDensity) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: format!("inverse temperature must be positive, got {beta}"),
            });
        }
        Ok(ReservoirSpec {
            side,
            beta,
            mu,
            spectral_density,
        })
    }

    pub fn fermi(&self, omega: f64) -> f64 {
        fermi(omega, self.beta, self.mu)
    }
}

/// Fermi-Dirac occupation `1 / (exp(beta (w - mu)) + 1)`, overflow-free.
pub fn fermi(omega: f64, beta: f64, mu: f64) -> f64 {
    let x = beta * (omega - mu);
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Periodic modulation of the dot level and of both tunnelling barriers:
///
/// ```text
/// eps(t)   = eps0 + a0 cos(Omega t + phi)
/// t_R(t)   = t_R [1 + a_R cos(Omega t)]
/// t_L(t)   = t_L [1 - a_L cos(Omega t)]
/// ```
///
/// Every tunnelling amplitude of a reservoir shares one time profile, so the
/// RC energy stays static and only the RC coupling inherits the drive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DrivingProtocol {
    pub omega: f64,
    pub phase: f64,
    pub dot_amplitude: f64,
    pub amp_left: f64,
    pub amp_right: f64,
    pub eps0: f64,
}

impl DrivingProtocol {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) || !self.omega.is_finite() {
            return Err(Error::InvalidParameter {
                name: "omega",
                reason: format!("driving frequency must be positive, got {}", self.omega),
            });
        }
        for (name, v) in [
            ("phase", self.phase),
            ("dot_amplitude", self.dot_amplitude),
            ("amp_left", self.amp_left),
            ("amp_right", self.amp_right),
            ("eps0", self.eps0),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be finite".into(),
                });
            }
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    pub fn dot_energy(&self, t: f64) -> f64 {
        self.eps0 + self.dot_amplitude * (self.omega * t + self.phase).cos()
    }

    /// Time profile `f(t)` shared by every tunnelling amplitude of `side`.
    pub fn tunnel_profile(&self, side: Side, t: f64) -> f64 {
        let c = (self.omega * t).cos();
        match side {
            Side::Left => 1.0 - self.amp_left * c,
            Side::Right => 1.0 + self.amp_right * c,
        }
    }

    pub fn undriven(eps0: f64, omega: f64) -> Self {
        DrivingProtocol {
            omega,
            phase: 0.0,
            dot_amplitude: 0.0,
            amp_left: 0.0,
            amp_right: 0.0,
            eps0,
        }
    }
}

/// Splits sampled tunnelling amplitudes `table[j][k] = t_k(t_j)` into
/// `t_k * f(t_j)`. Fails when the table is not of that product form, because
/// the RC energy would then become time dependent.
pub fn factorize_tunneling(table: &[Vec<f64>], rel_tol: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = table
        .first()
        .ok_or_else(|| Error::NonFactorizedDriving("empty table".into()))?;
    let reference = table
        .iter()
        .max_by(|a, b| norm2(a).total_cmp(&norm2(b)))
        .unwrap();
    let ref_norm = norm2(reference);
    if ref_norm == 0.0 {
        return Ok((vec![0.0; first.len()], vec![1.0; table.len()]));
    }
    let amplitudes: Vec<f64> = reference.iter().map(|v| v / ref_norm).collect();
    let mut profile = Vec::with_capacity(table.len());
    for (j, row) in table.iter().enumerate() {
        if row.len() != amplitudes.len() {
            return Err(Error::NonFactorizedDriving(format!(
                "row {j} has {} levels, expected {}",
                row.len(),
                amplitudes.len()
            )));
        }
        let f: f64 = row.iter().zip(&amplitudes).map(|(a, b)| a * b).sum();
        let residual: f64 = row
            .iter()
            .zip(&amplitudes)
            .map(|(a, b)| (a - f * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual > rel_tol * ref_norm {
            return Err(Error::NonFactorizedDriving(format!(
                "sample {j} deviates from a common time profile by {residual:.3e}"
            )));
        }
        profile.push(f);
    }
    Ok((amplitudes.iter().map(|a| a * ref_norm).collect(), profile.iter().map(|f| f / ref_norm).collect()))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Spectral density of the residual bath left after the RC mapping.
#[derive(Clone, Debug, PartialEq)]
pub enum ResidualDensity {
    Flat(f64),
    Tabulated(SpectralDensity),
}

impl ResidualDensity {
    /// Residual density at `omega`. Tabulated residuals vanish off-grid.
    pub fn eval(&self, omega: f64) -> f64 {
        match self {
            ResidualDensity::Flat(v) => *v,
            ResidualDensity::Tabulated(sd) => sd.eval(omega).unwrap_or(0.0),
        }
    }
}

/// Parameters of one reaction coordinate: its coupling to the dot, its
/// energy, and the residual bath it couples to.
#[derive(Clone, Debug, PartialEq)]
pub struct RcParameters {
    pub coupling: f64,
    pub energy: f64,
    pub residual: ResidualDensity,
}

impl RcParameters {
    /// RC coupling built directly from `lambda`, with a flat residual of
    /// height `2 * width`.
    pub fn from_lambda(lambda: f64, width: f64, energy: f64) -> Self {
        RcParameters {
            coupling: lambda,
            energy,
            residual: ResidualDensity::Flat(2.0 * width),
        }
    }
}

/// Closed-form mapping of a Lorentzian: `lambda = sqrt(Gamma delta / 2)`, RC at
/// the peak, flat residual `2 delta`. A zero coupling strength maps to a
/// decoupled RC.
pub fn rc_map_lorentzian(coupling: f64, width: f64, center: f64) -> RcParameters {
    RcParameters {
        coupling: (coupling.max(0.0) * width / 2.0).sqrt(),
        energy: center,
        residual: ResidualDensity::Flat(2.0 * width),
    }
}

/// RC mapping for any spectral density. Lorentzians use the closed form,
/// tables the quadrature route of [`rc_map_generic`].
pub fn rc_map(sd: &SpectralDensity) -> Result<RcParameters> {
    match sd {
        SpectralDensity::Lorentzian {
            coupling,
            width,
            center,
        } => Ok(rc_map_lorentzian(*coupling, *width, *center)),
        SpectralDensity::Tabulated { .. } => rc_map_generic(sd),
    }
}

/// Quadrature-based RC mapping of a tabulated spectral density.
///
/// `lambda^2 = (1/2pi) int J`, `eps = (1/(2pi lambda^2)) int w J`, and
///
/// ```text
/// J~(w) = 4 lambda^2 J(w) / ( [ (1/pi) PV int J(w')/(w'-w) dw' ]^2 + J(w)^2 )
/// ```
///
/// The principal value is taken by singularity subtraction on the grid.
pub fn rc_map_generic(sd: &SpectralDensity) -> Result<RcParameters> {
    let (omega, values) = match sd {
        SpectralDensity::Tabulated { omega, values } => (omega, values),
        SpectralDensity::Lorentzian { .. } => {
            return Err(Error::InvalidParameter {
                name: "spectral_density",
                reason: "rc_map_generic expects a tabulated spectral density".into(),
            })
        }
    };
    let zeroth = trapezoid(omega, values);
    if !(zeroth > 0.0) {
        return Err(Error::DegenerateSpectralDensity(format!(
            "integral of J is {zeroth:.3e}; the RC would be decoupled"
        )));
    }
    let weighted: Vec<f64> = omega.iter().zip(values).map(|(w, j)| w * j).collect();
    let first = trapezoid(omega, &weighted);
    let lambda2 = zeroth / (2.0 * PI);
    let energy = first / zeroth;

    let residual: Vec<f64> = (0..omega.len())
        .map(|i| {
            let j = values[i];
            if j == 0.0 {
                return 0.0;
            }
            match principal_value(omega, values, i) {
                Some(pv) => {
                    let h = pv / PI;
                    4.0 * lambda2 * j / (h * h + j * j)
                }
                // logarithmic divergence at a grid edge with J > 0
                None => 0.0,
            }
        })
        .collect();

    Ok(RcParameters {
        coupling: lambda2.sqrt(),
        energy,
        residual: ResidualDensity::Tabulated(SpectralDensity::tabulated(omega.clone(), residual)?),
    })
}

/// Composite trapezoid rule on a possibly non-uniform grid.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xw, yw)| 0.5 * (xw[1] - xw[0]) * (yw[0] + yw[1]))
        .sum()
}

/// `PV int_a^b J(w')/(w' - w_i) dw'` by subtracting `J(w_i)`:
/// `int (J(w') - J(w_i))/(w' - w_i) + J(w_i) ln((b - w_i)/(w_i - a))`.
/// Returns `None` at a grid edge where the log term diverges.
fn principal_value(omega: &[f64], values: &[f64], i: usize) -> Option<f64> {
    let n = omega.len();
    let (a, b) = (omega[0], omega[n - 1]);
    let wi = omega[i];
    let ji = values[i];
    if (i == 0 || i == n - 1) && ji != 0.0 {
        return None;
    }
    // the regularised integrand at w' = w_i is J'(w_i)
    let slope = if i == 0 {
        (values[1] - values[0]) / (omega[1] - omega[0])
    } else if i == n - 1 {
        (values[n - 1] - values[n - 2]) / (omega[n - 1] - omega[n - 2])
    } else {
        let (hl, hr) = (wi - omega[i - 1], omega[i + 1] - wi);
        let dl = (ji - values[i - 1]) / hl;
        let dr = (values[i + 1] - ji) / hr;
        (dl * hr + dr * hl) / (hl + hr)
    };
    let g = |k: usize| {
        if k == i {
            slope
        } else {
            (values[k] - ji) / (omega[k] - wi)
        }
    };
    let mut integral = 0.0;
    let mut prev = g(0);
    for k in 1..n {
        let cur = g(k);
        integral += 0.5 * (omega[k] - omega[k - 1]) * (prev + cur);
        prev = cur;
    }
    let log_term = if ji == 0.0 {
        0.0
    } else {
        ji * ((b - wi) / (wi - a)).ln()
    };
    Some(integral + log_term)
}
