//! Driven single-particle matrices of the mapped triple dot and their lift to
//! the 8-dimensional Fock space.
//!
//! Mode order is `(d_L, d, d_R)` everywhere. Fock basis index `s` has bit `j`
//! set when mode `j` is occupied; annihilators carry the Jordan-Wigner string
//! over modes `0..j`.

use nalgebra::Matrix3;
use num_complex::Complex64 as C64;

use crate::linalg::{c, CMat};
use crate::model::{DrivingProtocol, RcParameters, Side};

pub const MODE_LEFT: usize = 0;
pub const MODE_DOT: usize = 1;
pub const MODE_RIGHT: usize = 2;

/// Mode index of the reaction coordinate attached to `side`.
pub fn rc_mode(side: Side) -> usize {
    match side {
        Side::Left => MODE_LEFT,
        Side::Right => MODE_RIGHT,
    }
}

/// Parameters of the driven triple dot: central dot plus the two reaction
/// coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TqdParams {
    pub driving: DrivingProtocol,
    pub lambda_left: f64,
    pub lambda_right: f64,
    pub eps_left: f64,
    pub eps_right: f64,
}

impl TqdParams {
    /// Symmetric set-up: equal RC couplings `lambda`, RC energies
    /// `eps0 -+ bias/2`.
    pub fn symmetric(driving: DrivingProtocol, lambda: f64, bias: f64) -> Self {
        TqdParams {
            driving,
            lambda_left: lambda,
            lambda_right: lambda,
            eps_left: driving.eps0 - bias / 2.0,
            eps_right: driving.eps0 + bias / 2.0,
        }
    }

    pub fn from_rcs(driving: DrivingProtocol, left: &RcParameters, right: &RcParameters) -> Self {
        TqdParams {
            driving,
            lambda_left: left.coupling,
            lambda_right: right.coupling,
            eps_left: left.energy,
            eps_right: right.energy,
        }
    }

    pub fn bias(&self) -> f64 {
        self.eps_right - self.eps_left
    }

    pub fn omega(&self) -> f64 {
        self.driving.omega
    }

    pub fn period(&self) -> f64 {
        self.driving.period()
    }

    /// `(eps(t), lambda_L(t), lambda_R(t))`.
    pub fn driving_eval(&self, t: f64) -> (f64, f64, f64) {
        (
            self.driving.dot_energy(t),
            self.lambda_left * self.driving.tunnel_profile(Side::Left, t),
            self.lambda_right * self.driving.tunnel_profile(Side::Right, t),
        )
    }

    /// The 3x3 single-particle matrix with `-lambda` hoppings.
    pub fn tqd_matrix(&self, t: f64) -> Matrix3<f64> {
        let (eps, ll, lr) = self.driving_eval(t);
        Matrix3::new(
            self.eps_left, -ll, 0.0, //
            -ll, eps, -lr, //
            0.0, -lr, self.eps_right,
        )
    }

    /// Many-body Hamiltonian `sum_ij h_ij d_i^dagger d_j` on the Fock space.
    pub fn fock_hamiltonian(&self, t: f64, fock: &FockSpace) -> CMat {
        fock.lift(&self.tqd_matrix(t))
    }

    /// Partner configuration under the left/right mirror: sides exchanged,
    /// bias reversed, driving phase shifted by pi.
    pub fn mirrored(&self) -> Self {
        let mut driving = self.driving;
        driving.phase += std::f64::consts::PI;
        std::mem::swap(&mut driving.amp_left, &mut driving.amp_right);
        TqdParams {
            driving,
            lambda_left: self.lambda_right,
            lambda_right: self.lambda_left,
            eps_left: self.eps_right,
            eps_right: self.eps_left,
        }
    }
}

/// Fermionic annihilation operators on `2^modes`-dimensional Fock space.
#[derive(Clone, Debug)]
pub struct FockSpace {
    modes: usize,
    annihilators: Vec<CMat>,
}

impl FockSpace {
    pub fn new(modes: usize) -> Self {
        let dim = 1usize << modes;
        let annihilators = (0..modes)
            .map(|j| {
                let mut a = CMat::zeros(dim, dim);
                for s in 0..dim {
                    if s & (1 << j) != 0 {
                        let parity = (s & ((1 << j) - 1)).count_ones();
                        let sign = if parity % 2 == 0 { 1.0 } else { -1.0 };
                        a[(s ^ (1 << j), s)] = c(sign);
                    }
                }
                a
            })
            .collect();
        FockSpace {
            modes,
            annihilators,
        }
    }

    pub fn triple_dot() -> Self {
        Self::new(3)
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn dim(&self) -> usize {
        1 << self.modes
    }

    pub fn annihilator(&self, mode: usize) -> &CMat {
        &self.annihilators[mode]
    }

    pub fn creator(&self, mode: usize) -> CMat {
        self.annihilators[mode].adjoint()
    }

    /// Total particle number of basis state `s`.
    pub fn particle_number(&self, s: usize) -> usize {
        s.count_ones() as usize
    }

    pub fn number_operator(&self) -> CMat {
        CMat::from_fn(self.dim(), self.dim(), |i, j| {
            if i == j {
                c(self.particle_number(i) as f64)
            } else {
                c(0.0)
            }
        })
    }

    /// `sum_ij h_ij a_i^dagger a_j` for a real symmetric `h`.
    pub fn lift(&self, h: &Matrix3<f64>) -> CMat {
        assert_eq!(self.modes, 3);
        let mut out = CMat::zeros(self.dim(), self.dim());
        for i in 0..3 {
            for j in 0..3 {
                if h[(i, j)] != 0.0 {
                    out += self.creator(i) * &self.annihilators[j] * c(h[(i, j)]);
                }
            }
        }
        out
    }

    /// Basis states grouped by particle number, in increasing number.
    pub fn number_sectors(&self) -> Vec<Vec<usize>> {
        let mut sectors = vec![Vec::new(); self.modes + 1];
        for s in 0..self.dim() {
            sectors[self.particle_number(s)].push(s);
        }
        sectors
    }
}

/// Embeds a real 3x3 matrix as complex.
pub fn to_complex(m: &Matrix3<f64>) -> CMat {
    CMat::from_fn(3, 3, |i, j| C64::new(m[(i, j)], 0.0))
}
