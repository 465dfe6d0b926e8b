//! Computational basis, parity sectors and the ZZ Hamiltonian diagonal.
//!
//! Basis index convention: `s = 4·q0 + 2·q1 + q2`, with `q = 1` the excited
//! state. Resonator 0 monitors Z0Z1, resonator 1 monitors Z1Z2. Within a
//! resonator, the pair index is `p = 2·a + b` for its qubits `(a, b)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::DeviceParams;

pub const DIM: usize = 8;
pub const N_QUBITS: usize = 3;
pub const N_RESONATORS: usize = 2;

/// Qubits coupled to each resonator.
pub const RESONATOR_QUBITS: [(usize, usize); N_RESONATORS] = [(0, 1), (1, 2)];

#[inline]
pub fn bit(s: usize, qubit: usize) -> usize {
    (s >> (N_QUBITS - 1 - qubit)) & 1
}

/// Pauli-Z eigenvalue of `qubit` in basis state `s`.
#[inline]
pub fn z(s: usize, qubit: usize) -> f64 {
    1.0 - 2.0 * bit(s, qubit) as f64
}

/// Bit mask of `qubit` in the basis index.
#[inline]
pub fn qubit_mask(qubit: usize) -> usize {
    1 << (N_QUBITS - 1 - qubit)
}

/// Pair index of basis state `s` seen by `resonator`.
#[inline]
pub fn pair_index(s: usize, resonator: usize) -> usize {
    let (a, b) = RESONATOR_QUBITS[resonator];
    2 * bit(s, a) + bit(s, b)
}

#[inline]
pub fn pair_is_odd(pair: usize) -> bool {
    pair == 0b01 || pair == 0b10
}

/// Whether `qubit` is coupled to `resonator`, and which pair bit it sets.
pub fn pair_mask(resonator: usize, qubit: usize) -> Option<usize> {
    let (a, b) = RESONATOR_QUBITS[resonator];
    if qubit == a {
        Some(0b10)
    } else if qubit == b {
        Some(0b01)
    } else {
        None
    }
}

pub fn label(s: usize) -> String {
    (0..N_QUBITS)
        .map(|q| if bit(s, q) == 1 { '1' } else { '0' })
        .collect()
}

/// Definite-parity subspace. First letter: Z0Z1 parity, second: Z1Z2 parity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sector {
    EE,
    EO,
    OE,
    OO,
}

impl Sector {
    pub const ALL: [Sector; 4] = [Sector::EE, Sector::EO, Sector::OE, Sector::OO];

    pub fn from_parities(z0z1: f64, z1z2: f64) -> Self {
        match (z0z1 > 0.0, z1z2 > 0.0) {
            (true, true) => Sector::EE,
            (true, false) => Sector::EO,
            (false, true) => Sector::OE,
            (false, false) => Sector::OO,
        }
    }

    pub fn of(s: usize) -> Self {
        Self::from_parities(z(s, 0) * z(s, 1), z(s, 1) * z(s, 2))
    }

    /// Parity eigenvalues (Z0Z1, Z1Z2).
    pub fn parities(self) -> [f64; 2] {
        match self {
            Sector::EE => [1.0, 1.0],
            Sector::EO => [1.0, -1.0],
            Sector::OE => [-1.0, 1.0],
            Sector::OO => [-1.0, -1.0],
        }
    }

    /// The two basis states spanning the sector, ordered `(|0_L⟩, |1_L⟩)`
    /// with the fewer-excitation state first.
    pub fn logical_states(self) -> (usize, usize) {
        let mut states = (0..DIM).filter(|&s| Sector::of(s) == self);
        let a = states.next().expect("two states per sector");
        let b = states.next().expect("two states per sector");
        if a.count_ones() <= b.count_ones() {
            (a, b)
        } else {
            (b, a)
        }
    }

    /// Sector reached by flipping `qubit`.
    pub fn flipped(self, qubit: usize) -> Self {
        let (s, _) = self.logical_states();
        Sector::of(s ^ qubit_mask(qubit))
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text.to_ascii_uppercase().as_str() {
            "EE" => Some(Sector::EE),
            "EO" => Some(Sector::EO),
            "OE" => Some(Sector::OE),
            "OO" => Some(Sector::OO),
            _ => None,
        }
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Sector::EE => "EE",
            Sector::EO => "EO",
            Sector::OE => "OE",
            Sector::OO => "OO",
        };
        f.write_str(s)
    }
}

/// Diagonal of the static ZZ Hamiltonian in rad/µs.
///
/// β_ij is the shift of qubit i's frequency when qubit j is excited, so in the
/// frame rotating at each qubit's frequency (others in ground) the energy of a
/// basis state is `Σ_{i<j} β_ij n_i n_j`. This differs from `½Σ β Z_iZ_j` only
/// by single-qubit Z terms absorbed in that frame.
pub fn zz_energies(params: &DeviceParams) -> [f64; DIM] {
    let beta = params.beta_angular();
    std::array::from_fn(|s| {
        let mut e = 0.0;
        for i in 0..N_QUBITS {
            for j in (i + 1)..N_QUBITS {
                e += beta[i][j] * (bit(s, i) * bit(s, j)) as f64;
            }
        }
        e
    })
}

/// Logical energy splitting E(|1_L⟩) − E(|0_L⟩) of a sector, linear MHz.
///
/// With β02 = 0 this is 0, β12, β01 and β01 + β12 for OO, OE, EO and EE.
pub fn subspace_splitting(sector: Sector, params: &DeviceParams) -> f64 {
    let e = zz_energies(params);
    let (zero, one) = sector.logical_states();
    super::params::linear(e[one] - e[zero])
}
