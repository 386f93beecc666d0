//! Lattice points, periodic boxes and discrete torus grids.
//!
//! Axis 0 is the normal direction of the half-space: a point belongs to the
//! half-space when its first coordinate is positive and the layer `z1 = 0`
//! carries the Dirichlet condition.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A point of `Z^d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatticePoint(pub Vec<i64>);

impl LatticePoint {
    pub fn new(coords: Vec<i64>) -> Self {
        Self(coords)
    }

    pub fn origin(d: usize) -> Self {
        Self(vec![0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Mirror image across the boundary layer, `(z1, z') -> (-z1, z')`.
    pub fn reflect(&self) -> Self {
        let mut c = self.0.clone();
        if let Some(first) = c.first_mut() {
            *first = -*first;
        }
        Self(c)
    }

    pub fn in_half_space(&self) -> bool {
        self.0.first().is_some_and(|&z1| z1 > 0)
    }

    pub fn on_boundary(&self) -> bool {
        self.0.first() == Some(&0)
    }

    pub fn norm_sq(&self) -> i64 {
        self.0.iter().map(|c| c * c).sum()
    }

    pub fn sup_norm(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }
}

impl From<Vec<i64>> for LatticePoint {
    fn from(v: Vec<i64>) -> Self {
        Self(v)
    }
}

/// Uniform discretisation of the torus `T^d`, optionally shifted by half a
/// cell so that no node sits on `theta = 0` in any axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusGrid {
    pub points: Vec<usize>,
    pub offset: bool,
}

impl TorusGrid {
    pub fn new(points: Vec<usize>, offset: bool) -> Result<Self> {
        if points.is_empty() {
            return invalid("torus grid needs at least one axis");
        }
        if points.iter().any(|&p| p == 0 || p % 2 != 0) {
            return invalid(format!("points per axis must be even and positive, got {points:?}"));
        }
        Ok(Self { points, offset })
    }

    pub fn uniform(d: usize, n: usize, offset: bool) -> Result<Self> {
        Self::new(vec![n; d], offset)
    }

    /// Unshifted grid matching a periodic box node for node.
    pub fn for_box(lbox: &LatticeBox) -> Self {
        Self {
            points: lbox.extents.clone(),
            offset: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.points.len()
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell volume of one node in `[0, 2pi)^d`, normalised so that the
    /// weights sum to one.
    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn axis_value(&self, axis: usize, k: usize) -> f64 {
        let shift = if self.offset { 0.5 } else { 0.0 };
        2.0 * PI * (k as f64 + shift) / self.points[axis] as f64
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for axis in (0..self.dim()).rev() {
            idx[axis] = flat % self.points[axis];
            flat /= self.points[axis];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.points)
            .fold(0, |acc, (&i, &p)| acc * p + i)
    }

    pub fn theta(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(axis, &k)| self.axis_value(axis, k))
            .collect()
    }

    /// Flat index of the node at `-theta` (mod `2pi`).
    pub fn negated(&self, flat: usize) -> usize {
        let idx: Vec<usize> = self
            .multi_index(flat)
            .iter()
            .zip(&self.points)
            .map(|(&k, &p)| if self.offset { p - 1 - k } else { (p - k) % p })
            .collect();
        self.flat_index(&idx)
    }

    pub fn refined(&self, factor: usize) -> Self {
        Self {
            points: self.points.iter().map(|p| p * factor).collect(),
            offset: self.offset,
        }
    }
}

/// Finite periodic box of lattice sites `0..L_i` per axis.
///
/// For half-space data the box holds the slab `z1 = 0..L1-1` next to the
/// boundary; evolutions run on [`LatticeBox::doubled`], whose axis-0 index
/// `k >= L1` stands for `z1 = k - 2 L1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeBox {
    pub extents: Vec<usize>,
}

impl LatticeBox {
    pub fn new(extents: Vec<usize>) -> Result<Self> {
        if extents.is_empty() || extents.iter().any(|&e| e == 0) {
            return invalid(format!("box extents must be positive, got {extents:?}"));
        }
        Ok(Self { extents })
    }

    pub fn cube(d: usize, l: usize) -> Result<Self> {
        Self::new(vec![l; d])
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn sites(&self) -> usize {
        self.extents.iter().product()
    }

    /// Periodic box with the normal axis doubled, hosting odd extensions.
    pub fn doubled(&self) -> Self {
        let mut extents = self.extents.clone();
        extents[0] *= 2;
        Self { extents }
    }

    /// Site index of an arbitrary lattice point, wrapping periodically.
    pub fn index(&self, z: &[i64]) -> usize {
        z.iter().zip(&self.extents).fold(0, |acc, (&c, &l)| {
            acc * l + c.rem_euclid(l as i64) as usize
        })
    }

    /// Site index without wrapping; `None` outside `0..L_i`.
    pub fn index_checked(&self, z: &[i64]) -> Option<usize> {
        if z.len() != self.dim() {
            return None;
        }
        let mut acc = 0;
        for (&c, &l) in z.iter().zip(&self.extents) {
            if c < 0 || c >= l as i64 {
                return None;
            }
            acc = acc * l + c as usize;
        }
        Some(acc)
    }

    /// Raw coordinates `0..L_i` of a site index.
    pub fn coords(&self, mut idx: usize) -> Vec<i64> {
        let mut c = vec![0; self.dim()];
        for axis in (0..self.dim()).rev() {
            c[axis] = (idx % self.extents[axis]) as i64;
            idx /= self.extents[axis];
        }
        c
    }

    /// Coordinates folded into `[-L_i/2, L_i/2)`.
    pub fn signed_coords(&self, idx: usize) -> Vec<i64> {
        self.coords(idx)
            .into_iter()
            .zip(&self.extents)
            .map(|(c, &l)| signed(c, l))
            .collect()
    }

    /// Coordinates in the half-space convention: axis 0 is taken as is,
    /// transverse axes are folded around zero.
    pub fn half_coords(&self, idx: usize) -> Vec<i64> {
        let mut c = self.coords(idx);
        for axis in 1..self.dim() {
            c[axis] = signed(c[axis], self.extents[axis]);
        }
        c
    }
}

fn signed(c: i64, l: usize) -> i64 {
    let l = l as i64;
    if c >= (l + 1) / 2 {
        c - l
    } else {
        c
    }
}

/// Iterates over all integer offsets with `|w|_inf <= radius` in `d` dimensions.
pub fn offsets_within(d: usize, radius: i64) -> Vec<Vec<i64>> {
    let side = (2 * radius + 1) as usize;
    let total = side.pow(d as u32);
    (0..total)
        .map(|mut flat| {
            let mut w = vec![0; d];
            for axis in (0..d).rev() {
                w[axis] = (flat % side) as i64 - radius;
                flat /= side;
            }
            w
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_is_an_involution() {
        let z = LatticePoint::new(vec![3, -2, 5]);
        assert_eq!(z.reflect().reflect(), z);
        assert_eq!(z.reflect().0, vec![-3, -2, 5]);
        assert!(z.in_half_space());
        assert!(!z.reflect().in_half_space());
        assert!(LatticePoint::new(vec![0, 1]).on_boundary());
    }

    #[test]
    fn offset_grid_avoids_zero() {
        let g = TorusGrid::uniform(2, 8, true).unwrap();
        for k in 0..g.len() {
            let th = g.theta(k);
            assert!(th.iter().all(|&t| t > 0.0 && t < 2.0 * PI));
        }
        assert!(TorusGrid::uniform(1, 7, false).is_err());
    }

    #[test]
    fn negated_node_sums_to_zero_mod_2pi() {
        for offset in [false, true] {
            let g = TorusGrid::new(vec![6, 4], offset).unwrap();
            for k in 0..g.len() {
                let a = g.theta(k);
                let b = g.theta(g.negated(k));
                for (x, y) in a.iter().zip(&b) {
                    let s = (x + y) / (2.0 * PI);
                    assert!((s - s.round()).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn box_indexing_round_trips() {
        let b = LatticeBox::new(vec![4, 6]).unwrap();
        for i in 0..b.sites() {
            assert_eq!(b.index(&b.coords(i)), i);
            assert_eq!(b.index(&b.signed_coords(i)), i);
        }
        assert_eq!(b.index(&[-1, -1]), b.index(&[3, 5]));
        assert!(b.index_checked(&[4, 0]).is_none());
    }

    #[test]
    fn offsets_cover_the_cube() {
        let w = offsets_within(2, 1);
        assert_eq!(w.len(), 9);
        assert!(w.contains(&vec![-1, 1]));
    }
}
