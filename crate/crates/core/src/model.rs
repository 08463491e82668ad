//! Lattice geometry and the tilted Ising Hamiltonian.
//!
//! H = sum_<i,j> J s^z_i s^z_j - sum_i (h_z s^z_i + h_x s^x_i)
//!
//! on an open-boundary chain (1D) or rectangular grid (2D). The Hamiltonian
//! is exposed through its diagonal and the list of single-flip off-diagonal
//! matrix elements, which is all the local-energy estimator needs.

use crate::error::{Error, Result};

/// Open-boundary lattice: a chain in 1D or a rectangular grid in 2D.
///
/// Sites are indexed 0-based; 2D grids are row-major, site = row * cols + col.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeSpec {
    dimensionality: usize,
    extents: Vec<usize>,
    bonds: Vec<(usize, usize)>,
}

impl LatticeSpec {
    pub fn dimensionality(&self) -> usize {
        self.dimensionality
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    /// Total number of sites L.
    pub fn n_sites(&self) -> usize {
        self.extents.iter().product()
    }

    /// Nearest-neighbour bonds (i, j) with i < j.
    pub fn bonds(&self) -> &[(usize, usize)] {
        &self.bonds
    }

    /// Row-major site index of (row, col). 2D only.
    pub fn site_index(&self, row: usize, col: usize) -> usize {
        debug_assert_eq!(self.dimensionality, 2);
        row * self.extents[1] + col
    }

    /// Inverse of [`site_index`](Self::site_index). 2D only.
    pub fn site_coords(&self, site: usize) -> (usize, usize) {
        debug_assert_eq!(self.dimensionality, 2);
        (site / self.extents[1], site % self.extents[1])
    }
}

/// Build an open-boundary lattice.
///
/// A 1D chain of length L has L-1 bonds; an r x c grid has
/// r(c-1) + c(r-1) bonds.
pub fn build_lattice(dimensionality: usize, extents: &[usize]) -> Result<LatticeSpec> {
    if extents.iter().any(|&e| e == 0) {
        return Err(Error::InvalidGeometry(format!(
            "extents must be positive, got {extents:?}"
        )));
    }
    match dimensionality {
        1 => {
            if extents.len() != 1 {
                return Err(Error::InvalidGeometry(format!(
                    "1D lattice takes one extent, got {extents:?}"
                )));
            }
            let l = extents[0];
            let bonds = (0..l.saturating_sub(1)).map(|i| (i, i + 1)).collect();
            Ok(LatticeSpec {
                dimensionality: 1,
                extents: extents.to_vec(),
                bonds,
            })
        }
        2 => {
            if extents.len() != 2 {
                return Err(Error::InvalidGeometry(format!(
                    "2D lattice takes two extents, got {extents:?}"
                )));
            }
            let (rows, cols) = (extents[0], extents[1]);
            let mut bonds = Vec::with_capacity(rows * (cols - 1) + cols * (rows - 1));
            // horizontal bonds first, then vertical, each in row-major order
            for r in 0..rows {
                for c in 0..cols - 1 {
                    bonds.push((r * cols + c, r * cols + c + 1));
                }
            }
            for r in 0..rows - 1 {
                for c in 0..cols {
                    bonds.push((r * cols + c, (r + 1) * cols + c));
                }
            }
            Ok(LatticeSpec {
                dimensionality: 2,
                extents: extents.to_vec(),
                bonds,
            })
        }
        d => Err(Error::InvalidGeometry(format!(
            "dimensionality must be 1 or 2, got {d}"
        ))),
    }
}

/// Tilted Ising Hamiltonian on a lattice, in units with |J| = 1 by convention.
///
/// Diagonal in the z basis except for the transverse field, which connects
/// configurations differing by one flipped spin with matrix element -h_x.
#[derive(Debug, Clone)]
pub struct TimHamiltonian {
    pub lattice: LatticeSpec,
    pub j: f64,
    pub h_x: f64,
    pub h_z: f64,
}

impl TimHamiltonian {
    pub fn new(lattice: LatticeSpec, j: f64, h_x: f64, h_z: f64) -> Self {
        Self {
            lattice,
            j,
            h_x,
            h_z,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.lattice.n_sites()
    }
}

/// A configuration of the visible spins, entries exactly +1 or -1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinConfiguration {
    spins: Vec<i8>,
}

impl SpinConfiguration {
    /// Validates that every entry is +-1.
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if spins.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidGeometry(
                "spin entries must be +1 or -1".into(),
            ));
        }
        Ok(Self { spins })
    }

    /// All spins up.
    pub fn all_up(len: usize) -> Self {
        Self {
            spins: vec![1; len],
        }
    }

    /// Decode a basis index: bit i of `index` clear means spin +1 at site i.
    pub fn from_index(index: usize, len: usize) -> Self {
        let spins = (0..len)
            .map(|i| if index >> i & 1 == 0 { 1 } else { -1 })
            .collect();
        Self { spins }
    }

    /// Basis index of this configuration; inverse of [`from_index`](Self::from_index).
    pub fn to_index(&self) -> usize {
        self.spins
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == -1)
            .map(|(i, _)| 1usize << i)
            .sum()
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    /// Spin at `site` as a float, +-1.0.
    pub fn spin_f64(&self, site: usize) -> f64 {
        f64::from(self.spins[site])
    }

    pub fn flip(&mut self, site: usize) {
        self.spins[site] = -self.spins[site];
    }
}

/// Diagonal matrix element <x|H|x> = sum_bonds J x_i x_j - h_z sum_i x_i.
///
/// Panics if the configuration length does not match the lattice.
pub fn diagonal_energy(h: &TimHamiltonian, x: &SpinConfiguration) -> f64 {
    assert_eq!(
        x.len(),
        h.n_sites(),
        "configuration length {} does not match lattice site count {}",
        x.len(),
        h.n_sites()
    );
    let s = x.spins();
    let bond_term: f64 = h
        .lattice
        .bonds()
        .iter()
        .map(|&(i, j)| f64::from(s[i] * s[j]))
        .sum();
    let field_term: f64 = s.iter().map(|&si| f64::from(si)).sum();
    h.j * bond_term - h.h_z * field_term
}

/// Off-diagonal row entries of H at configuration x: one entry per site,
/// (flip site, matrix element), every element equal to -h_x.
///
/// Together with [`diagonal_energy`] this fully specifies row x of H.
pub fn connected_configurations(
    h: &TimHamiltonian,
    x: &SpinConfiguration,
) -> impl Iterator<Item = (usize, f64)> {
    assert_eq!(
        x.len(),
        h.n_sites(),
        "configuration length {} does not match lattice site count {}",
        x.len(),
        h.n_sites()
    );
    let elem = -h.h_x;
    (0..x.len()).map(move |i| (i, elem))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_of_four_has_expected_bonds() {
        let lat = build_lattice(1, &[4]).unwrap();
        assert_eq!(lat.n_sites(), 4);
        assert_eq!(lat.bonds(), &[(0, 1), (1, 2), (2, 3)]);
    }

    #[test]
    fn two_by_two_grid_has_four_bonds() {
        let lat = build_lattice(2, &[2, 2]).unwrap();
        assert_eq!(lat.n_sites(), 4);
        let mut bonds = lat.bonds().to_vec();
        bonds.sort_unstable();
        assert_eq!(bonds, vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn eight_by_eight_grid_bond_count() {
        let lat = build_lattice(2, &[8, 8]).unwrap();
        assert_eq!(lat.n_sites(), 64);
        assert_eq!(lat.bonds().len(), 112);
    }

    #[test]
    fn bond_invariants_hold() {
        for lat in [
            build_lattice(1, &[7]).unwrap(),
            build_lattice(2, &[3, 5]).unwrap(),
            build_lattice(2, &[4, 2]).unwrap(),
        ] {
            let l = lat.n_sites();
            let mut seen = std::collections::HashSet::new();
            for &(i, j) in lat.bonds() {
                assert!(i < j && j < l, "bond ({i},{j}) out of range");
                assert!(seen.insert((i, j)), "duplicate bond ({i},{j})");
            }
            let expected = match lat.dimensionality() {
                1 => l - 1,
                2 => {
                    let (r, c) = (lat.extents()[0], lat.extents()[1]);
                    r * (c - 1) + c * (r - 1)
                }
                _ => unreachable!(),
            };
            assert_eq!(lat.bonds().len(), expected);
        }
    }

    #[test]
    fn zero_extent_is_rejected() {
        assert!(build_lattice(1, &[0]).is_err());
        assert!(build_lattice(2, &[4, 0]).is_err());
        assert!(build_lattice(3, &[2, 2]).is_err());
    }

    #[test]
    fn site_index_roundtrip_row_major() {
        let lat = build_lattice(2, &[3, 4]).unwrap();
        for r in 0..3 {
            for c in 0..4 {
                let s = lat.site_index(r, c);
                assert_eq!(s, r * 4 + c);
                assert_eq!(lat.site_coords(s), (r, c));
            }
        }
    }

    #[test]
    fn diagonal_energy_examples() {
        let h3 = TimHamiltonian::new(build_lattice(1, &[3]).unwrap(), 1.0, 0.0, 0.5);
        let x = SpinConfiguration::new(vec![1, 1, 1]).unwrap();
        assert_eq!(diagonal_energy(&h3, &x), 0.5);

        let h4 = TimHamiltonian::new(build_lattice(1, &[4]).unwrap(), 1.0, 0.0, 0.5);
        let neel = SpinConfiguration::new(vec![1, -1, 1, -1]).unwrap();
        assert_eq!(diagonal_energy(&h4, &neel), -3.0);

        let h2 = TimHamiltonian::new(build_lattice(1, &[2]).unwrap(), -1.0, 0.0, 0.0);
        let up = SpinConfiguration::all_up(2);
        assert_eq!(diagonal_energy(&h2, &up), -1.0);
    }

    #[test]
    #[should_panic(expected = "does not match lattice site count")]
    fn diagonal_energy_length_mismatch_panics() {
        let h = TimHamiltonian::new(build_lattice(1, &[3]).unwrap(), 1.0, 0.0, 0.0);
        let x = SpinConfiguration::all_up(4);
        diagonal_energy(&h, &x);
    }

    #[test]
    fn connected_configurations_examples() {
        let h = TimHamiltonian::new(build_lattice(1, &[2]).unwrap(), 1.0, 0.5, 0.0);
        let x = SpinConfiguration::all_up(2);
        let entries: Vec<_> = connected_configurations(&h, &x).collect();
        assert_eq!(entries, vec![(0, -0.5), (1, -0.5)]);

        let h0 = TimHamiltonian::new(build_lattice(1, &[4]).unwrap(), 1.0, 0.0, 0.3);
        let x4 = SpinConfiguration::from_index(5, 4);
        let entries: Vec<_> = connected_configurations(&h0, &x4).collect();
        assert_eq!(entries.len(), 4);
        assert!(entries.iter().all(|&(_, v)| v == 0.0));
    }

    #[test]
    fn global_flip_symmetry_at_zero_longitudinal_field() {
        let h = TimHamiltonian::new(build_lattice(1, &[5]).unwrap(), 1.0, 0.7, 0.0);
        for idx in 0..32usize {
            let x = SpinConfiguration::from_index(idx, 5);
            let flipped = SpinConfiguration::new(x.spins().iter().map(|s| -s).collect()).unwrap();
            assert_eq!(diagonal_energy(&h, &x), diagonal_energy(&h, &flipped));
        }
    }

    /// Dense H assembled from explicit Pauli tensor products; independent of
    /// the matrix-element functions under test.
    fn dense_from_paulis(h: &TimHamiltonian) -> Vec<Vec<f64>> {
        let l = h.n_sites();
        let dim = 1usize << l;
        // operator entries in the basis of from_index: bit clear = +1
        let sz = |bit: bool| if bit { -1.0 } else { 1.0 };
        let mut dense = vec![vec![0.0; dim]; dim];
        for row in 0..dim {
            for col in 0..dim {
                let mut val = 0.0;
                if row == col {
                    for &(i, j) in h.lattice.bonds() {
                        val += h.j * sz(col >> i & 1 == 1) * sz(col >> j & 1 == 1);
                    }
                    for i in 0..l {
                        val -= h.h_z * sz(col >> i & 1 == 1);
                    }
                }
                for i in 0..l {
                    if row == col ^ (1 << i) {
                        val -= h.h_x;
                    }
                }
                dense[row][col] = val;
            }
        }
        dense
    }

    #[test]
    fn matrix_elements_reproduce_pauli_tensor_hamiltonian() {
        let cases: Vec<TimHamiltonian> = vec![
            TimHamiltonian::new(build_lattice(1, &[2]).unwrap(), 1.0, 0.9, 0.3),
            TimHamiltonian::new(build_lattice(1, &[3]).unwrap(), -1.0, 0.5, 0.5),
            TimHamiltonian::new(build_lattice(1, &[4]).unwrap(), 1.0, 1.5, 0.5),
            TimHamiltonian::new(build_lattice(2, &[2, 2]).unwrap(), 1.0, 0.5, 0.5),
        ];
        for h in cases {
            let l = h.n_sites();
            let dim = 1usize << l;
            let dense = dense_from_paulis(&h);
            for col in 0..dim {
                let x = SpinConfiguration::from_index(col, l);
                let mut from_ops = vec![0.0; dim];
                from_ops[col] = diagonal_energy(&h, &x);
                for (site, elem) in connected_configurations(&h, &x) {
                    from_ops[col ^ (1 << site)] += elem;
                }
                for row in 0..dim {
                    assert!(
                        (from_ops[row] - dense[row][col]).abs() < 1e-12,
                        "H[{row},{col}] mismatch: {} vs {}",
                        from_ops[row],
                        dense[row][col]
                    );
                }
            }
        }
    }
}
