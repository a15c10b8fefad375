//! Periodic spatial grid and the plane-wave transform every field lives on.
//!
//! Fields are stored flat in row-major order. The mode index of a transformed
//! array uses the same flat layout, with integer wave numbers on each axis in
//! the usual FFT order `0, 1, .., n/2 - 1, -n/2, .., -1`.
//!
//! Mode functions are `exp(i k.x) / sqrt(V)` with `x` measured from the first
//! grid point, so `|alpha_k|^2` is a particle number and a constant field `c`
//! maps to `alpha_0 = c sqrt(V)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on spatial dimension.
pub const MAX_DIMS: usize = 3;

#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "LatticeShape", into = "LatticeShape")]
pub struct Lattice {
    dims: Vec<usize>,
    lengths: Vec<f64>,
    dv: f64,
    volume: f64,
    /// Wave vectors, `ndim` components per mode.
    kvecs: Vec<f64>,
    k2: Vec<f64>,
    partner: Vec<usize>,
    plans: Arc<Vec<AxisPlans>>,
}

#[derive(Clone, Serialize, Deserialize)]
struct LatticeShape {
    dims: Vec<usize>,
    lengths: Vec<f64>,
}

impl TryFrom<LatticeShape> for Lattice {
    type Error = Error;

    fn try_from(shape: LatticeShape) -> Result<Self> {
        if shape.dims.iter().all(|&n| n == 1) && shape.dims.len() == 1 {
            return Lattice::single_mode(shape.lengths[0]);
        }
        Lattice::new(&shape.dims, &shape.lengths)
    }
}

impl From<Lattice> for LatticeShape {
    fn from(lattice: Lattice) -> Self {
        LatticeShape {
            dims: lattice.dims,
            lengths: lattice.lengths,
        }
    }
}

struct AxisPlans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Lattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Lattice")
            .field("dims", &self.dims)
            .field("lengths", &self.lengths)
            .field("dv", &self.dv)
            .field("volume", &self.volume)
            .finish()
    }
}

impl PartialEq for Lattice {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims && self.lengths == other.lengths
    }
}

/// Builds a periodic lattice. Every axis needs at least two points.
pub fn build_lattice(dims: &[usize], lengths: &[f64]) -> Result<Lattice> {
    Lattice::new(dims, lengths)
}

impl Lattice {
    pub fn new(dims: &[usize], lengths: &[f64]) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_DIMS {
            return Err(Error::InvalidLattice(format!(
                "between 1 and {MAX_DIMS} dimensions are supported, got {}",
                dims.len()
            )));
        }
        if dims.len() != lengths.len() {
            return Err(Error::InvalidLattice(format!(
                "{} point counts but {} box lengths",
                dims.len(),
                lengths.len()
            )));
        }
        if let Some(&n) = dims.iter().find(|&&n| n < 2) {
            return Err(Error::InvalidLattice(format!(
                "every axis needs at least 2 points, got {n}"
            )));
        }
        if let Some(&l) = lengths.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidLattice(format!(
                "box lengths must be positive and finite, got {l}"
            )));
        }
        Ok(Self::assemble(dims.to_vec(), lengths.to_vec()))
    }

    /// One lattice site of the given volume: the single-mode limit, carrying
    /// only `k = 0`.
    pub fn single_mode(volume: f64) -> Result<Self> {
        if !(volume > 0.0 && volume.is_finite()) {
            return Err(Error::InvalidLattice(format!(
                "volume must be positive and finite, got {volume}"
            )));
        }
        Ok(Self::assemble(vec![1], vec![volume]))
    }

    fn assemble(dims: Vec<usize>, lengths: Vec<f64>) -> Self {
        let ndim = dims.len();
        let total: usize = dims.iter().product();
        let volume: f64 = lengths.iter().product();
        let dv = dims
            .iter()
            .zip(&lengths)
            .map(|(&n, &l)| l / n as f64)
            .product();

        let mut kvecs = Vec::with_capacity(total * ndim);
        let mut k2 = Vec::with_capacity(total);
        let mut partner = Vec::with_capacity(total);
        let mut idx = vec![0usize; ndim];
        for _ in 0..total {
            let mut sq = 0.0;
            for axis in 0..ndim {
                let k = 2.0 * PI * wave_number(idx[axis], dims[axis]) as f64 / lengths[axis];
                kvecs.push(k);
                sq += k * k;
            }
            k2.push(sq);
            let mirrored: Vec<usize> = idx
                .iter()
                .zip(&dims)
                .map(|(&i, &n)| (n - i) % n)
                .collect();
            partner.push(flat_index(&mirrored, &dims));
            increment(&mut idx, &dims);
        }

        let mut planner = FftPlanner::new();
        let plans = dims
            .iter()
            .map(|&n| AxisPlans {
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            })
            .collect();

        Lattice {
            dims,
            lengths,
            dv,
            volume,
            kvecs,
            k2,
            partner,
            plans: Arc::new(plans),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    /// Total number of grid points, equal to the number of modes.
    pub fn len(&self) -> usize {
        self.k2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k2.is_empty()
    }

    pub fn dv(&self) -> f64 {
        self.dv
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn kvec(&self, mode: usize) -> &[f64] {
        let d = self.ndim();
        &self.kvecs[mode * d..(mode + 1) * d]
    }

    pub fn k_squared(&self) -> &[f64] {
        &self.k2
    }

    /// Flat index of `-k`. Nyquist modes (and `k = 0`) are their own partner.
    pub fn partner(&self, mode: usize) -> usize {
        self.partner[mode]
    }

    pub fn is_self_partnered(&self, mode: usize) -> bool {
        self.partner[mode] == mode
    }

    /// Grid coordinates of a point, measured from the box center.
    pub fn position(&self, point: usize) -> Vec<f64> {
        let mut rem = point;
        let mut coords = vec![0.0; self.ndim()];
        for axis in (0..self.ndim()).rev() {
            let n = self.dims[axis];
            let i = rem % n;
            rem /= n;
            let dx = self.lengths[axis] / n as f64;
            coords[axis] = -0.5 * self.lengths[axis] + i as f64 * dx;
        }
        coords
    }

    /// Smallest nonzero `|k|^2` on the grid (zero for a single site).
    pub fn k_squared_min(&self) -> f64 {
        self.k2
            .iter()
            .copied()
            .filter(|&k| k > 0.0)
            .reduce(f64::min)
            .unwrap_or(0.0)
    }

    pub fn check_shape(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::ShapeMismatch {
                expected: self.len(),
                actual: len,
            });
        }
        Ok(())
    }

    /// Position field to plane-wave mode amplitudes.
    pub fn to_modes(&self, field: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_shape(field.len())?;
        let mut data = field.to_vec();
        self.to_modes_inplace(&mut data);
        Ok(data)
    }

    /// Plane-wave mode amplitudes to a position field.
    pub fn to_position(&self, modes: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_shape(modes.len())?;
        let mut data = modes.to_vec();
        self.to_position_inplace(&mut data);
        Ok(data)
    }

    /// In-place variant of [`Lattice::to_modes`]; the caller guarantees the shape.
    pub fn to_modes_inplace(&self, data: &mut [Complex64]) {
        debug_assert_eq!(data.len(), self.len());
        self.transform(data, true);
        let scale = self.volume.sqrt() / self.len() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    pub fn to_position_inplace(&self, data: &mut [Complex64]) {
        debug_assert_eq!(data.len(), self.len());
        self.transform(data, false);
        let scale = 1.0 / self.volume.sqrt();
        data.iter_mut().for_each(|z| *z *= scale);
    }

    /// Unnormalized multi-dimensional DFT, axis by axis.
    fn transform(&self, data: &mut [Complex64], forward: bool) {
        let ndim = self.ndim();
        let mut line = Vec::new();
        let mut scratch = Vec::new();
        for axis in 0..ndim {
            let n = self.dims[axis];
            if n == 1 {
                continue;
            }
            let plan = if forward {
                &self.plans[axis].forward
            } else {
                &self.plans[axis].inverse
            };
            scratch.resize(plan.get_inplace_scratch_len(), Complex64::default());
            let stride: usize = self.dims[axis + 1..].iter().product();
            let outer: usize = self.dims[..axis].iter().product();
            if stride == 1 {
                for chunk in data.chunks_exact_mut(n) {
                    plan.process_with_scratch(chunk, &mut scratch);
                }
                continue;
            }
            line.resize(n, Complex64::default());
            for o in 0..outer {
                for s in 0..stride {
                    let base = o * n * stride + s;
                    for (i, z) in line.iter_mut().enumerate() {
                        *z = data[base + i * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (i, z) in line.iter().enumerate() {
                        data[base + i * stride] = *z;
                    }
                }
            }
        }
    }

    /// Squared `L2` norm with the cell volume as weight: `sum |f|^2 dV`.
    pub fn norm_sqr(&self, field: &[Complex64]) -> f64 {
        field.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.dv
    }

    /// `sum conj(a) b dV`.
    pub fn inner(&self, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<Complex64>() * self.dv
    }
}

fn wave_number(i: usize, n: usize) -> i64 {
    if i < n.div_ceil(2) || n == 1 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

fn flat_index(idx: &[usize], dims: &[usize]) -> usize {
    idx.iter().zip(dims).fold(0, |acc, (&i, &n)| acc * n + i)
}

fn increment(idx: &mut [usize], dims: &[usize]) {
    for axis in (0..dims.len()).rev() {
        idx[axis] += 1;
        if idx[axis] < dims[axis] {
            return;
        }
        idx[axis] = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Direct O(N^2) evaluation of `sum_x exp(-i k.x) f(x) dV / sqrt(V)`,
    /// with `x` measured from the first grid point.
    fn naive_modes(lattice: &Lattice, field: &[Complex64]) -> Vec<Complex64> {
        let coords: Vec<Vec<f64>> = (0..lattice.len())
            .map(|x| {
                lattice
                    .position(x)
                    .iter()
                    .zip(lattice.lengths())
                    .map(|(p, l)| p + 0.5 * l)
                    .collect()
            })
            .collect();
        (0..lattice.len())
            .map(|k| {
                let kv = lattice.kvec(k);
                coords
                    .iter()
                    .zip(field)
                    .map(|(pos, f)| {
                        let phase: f64 = kv.iter().zip(pos).map(|(a, b)| a * b).sum();
                        f * Complex64::from_polar(1.0, -phase)
                    })
                    .sum::<Complex64>()
                    * lattice.dv()
                    / lattice.volume().sqrt()
            })
            .collect()
    }

    fn pseudo_random_field(n: usize, seed: u64) -> Vec<Complex64> {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        (0..n).map(|_| Complex64::new(next(), next())).collect()
    }

    #[test]
    fn one_dimensional_geometry() {
        let lat = build_lattice(&[8], &[8.0]).unwrap();
        assert_eq!(lat.len(), 8);
        assert_eq!(lat.dv(), 1.0);
        assert_eq!(lat.volume(), 8.0);
        assert_eq!(lat.kvec(0), &[0.0]);
        assert_relative_eq!(lat.kvec(1)[0], std::f64::consts::FRAC_PI_4, epsilon = 1e-15);
        assert_relative_eq!(lat.kvec(7)[0], -std::f64::consts::FRAC_PI_4, epsilon = 1e-15);
    }

    #[test]
    fn two_dimensional_volume() {
        let lat = build_lattice(&[4, 4], &[2.0, 2.0]).unwrap();
        assert_eq!(lat.volume(), 4.0);
        assert_eq!(lat.dv(), 0.25);
        assert_eq!(lat.len(), 16);
        assert_relative_eq!(lat.volume(), lat.dv() * lat.len() as f64);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(build_lattice(&[1], &[1.0]).is_err());
        assert!(build_lattice(&[8], &[0.0]).is_err());
        assert!(build_lattice(&[8], &[-2.0]).is_err());
        assert!(build_lattice(&[8, 8], &[1.0]).is_err());
        assert!(build_lattice(&[], &[]).is_err());
        assert!(build_lattice(&[2, 2, 2, 2], &[1.0; 4]).is_err());
    }

    #[test]
    fn partners_cover_all_modes() {
        for (dims, lengths) in [(vec![8], vec![3.0]), (vec![5], vec![1.0]), (vec![4, 6], vec![1.0, 2.0])] {
            let lat = build_lattice(&dims, &lengths).unwrap();
            assert_eq!(lat.partner(0), 0);
            for k in 0..lat.len() {
                let p = lat.partner(k);
                assert_eq!(lat.partner(p), k);
                assert_eq!(lat.k_squared()[k], lat.k_squared()[p]);
                // Components flip sign, except a Nyquist component which is
                // its own negation.
                for (a, b) in lat.kvec(k).iter().zip(lat.kvec(p)) {
                    assert!((a + b).abs() < 1e-12 || (a == b), "{a} vs {b}");
                }
            }
        }
        let lat = build_lattice(&[8], &[8.0]).unwrap();
        assert!(lat.is_self_partnered(4));
    }

    #[test]
    fn constant_field_maps_to_zero_mode() {
        let lat = build_lattice(&[8], &[8.0]).unwrap();
        let modes = lat.to_modes(&[Complex64::new(1.0, 0.0); 8]).unwrap();
        assert_relative_eq!(modes[0].re, 8f64.sqrt(), epsilon = 1e-14);
        for z in &modes[1..] {
            assert!(z.norm() < 1e-14);
        }
    }

    #[test]
    fn plane_wave_is_a_unit_mode() {
        let lat = build_lattice(&[16], &[5.0]).unwrap();
        for target in [1usize, 3, 8, 13] {
            let k = lat.kvec(target)[0];
            let field: Vec<Complex64> = (0..16)
                .map(|x| {
                    let xg = x as f64 * lat.dv();
                    Complex64::from_polar(1.0 / lat.volume().sqrt(), k * xg)
                })
                .collect();
            let modes = lat.to_modes(&field).unwrap();
            for (i, z) in modes.iter().enumerate() {
                let expect = if i == target { 1.0 } else { 0.0 };
                assert!((z - expect).norm() < 1e-13, "mode {i}: {z}");
            }
        }
    }

    #[test]
    fn matches_naive_transform() {
        for (dims, lengths) in [(vec![8], vec![8.0]), (vec![6, 4], vec![1.5, 3.0]), (vec![4, 2, 3], vec![1.0, 2.0, 0.5])] {
            let lat = build_lattice(&dims, &lengths).unwrap();
            let field = pseudo_random_field(lat.len(), 7);
            let fast = lat.to_modes(&field).unwrap();
            let slow = naive_modes(&lat, &field);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn rejects_wrong_shape() {
        let lat = build_lattice(&[8], &[8.0]).unwrap();
        assert!(matches!(
            lat.to_modes(&[Complex64::default(); 7]),
            Err(Error::ShapeMismatch { expected: 8, actual: 7 })
        ));
        assert!(lat.to_position(&[Complex64::default(); 9]).is_err());
    }

    #[test]
    fn single_mode_lattice() {
        let lat = Lattice::single_mode(2.0).unwrap();
        assert_eq!(lat.len(), 1);
        assert_eq!(lat.dv(), 2.0);
        let modes = lat.to_modes(&[Complex64::new(3.0, 1.0)]).unwrap();
        assert_relative_eq!(modes[0].re, 3.0 * 2f64.sqrt(), epsilon = 1e-15);
        let back = lat.to_position(&modes).unwrap();
        assert!((back[0] - Complex64::new(3.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn serde_keeps_shape() {
        let lat = build_lattice(&[4, 8], &[1.0, 2.0]).unwrap();
        let text = serde_json::to_string(&lat).unwrap();
        let back: Lattice = serde_json::from_str(&text).unwrap();
        assert_eq!(lat, back);
        assert_eq!(back.k_squared(), lat.k_squared());
    }

    fn lattice_strategy() -> impl Strategy<Value = Lattice> {
        prop_oneof![
            (2usize..40, 0.5f64..20.0).prop_map(|(n, l)| build_lattice(&[n], &[l]).unwrap()),
            (2usize..9, 2usize..9, 0.5f64..5.0)
                .prop_map(|(a, b, l)| build_lattice(&[a, b], &[l, 2.0 * l]).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn round_trip_and_parseval(lat in lattice_strategy(), seed in any::<u64>()) {
            let field = pseudo_random_field(lat.len(), seed);
            let modes = lat.to_modes(&field).unwrap();
            let back = lat.to_position(&modes).unwrap();
            let scale = field.iter().map(|z| z.norm()).fold(0.0, f64::max);
            for (a, b) in field.iter().zip(&back) {
                prop_assert!((a - b).norm() <= 1e-12 * scale.max(1e-300));
            }
            let pos_norm = lat.norm_sqr(&field);
            let mode_norm: f64 = modes.iter().map(|z| z.norm_sqr()).sum();
            prop_assert!((pos_norm - mode_norm).abs() <= 1e-10 * pos_norm);
        }

        #[test]
        fn transform_is_linear(lat in lattice_strategy(), s1 in any::<u64>(), s2 in any::<u64>(),
                               a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let f = pseudo_random_field(lat.len(), s1);
            let g = pseudo_random_field(lat.len(), s2);
            let ca = Complex64::new(a, 0.5);
            let cb = Complex64::new(-0.25, b);
            let combo: Vec<Complex64> = f.iter().zip(&g).map(|(x, y)| ca * x + cb * y).collect();
            let lhs = lat.to_modes(&combo).unwrap();
            let fm = lat.to_modes(&f).unwrap();
            let gm = lat.to_modes(&g).unwrap();
            for i in 0..lat.len() {
                let rhs = ca * fm[i] + cb * gm[i];
                prop_assert!((lhs[i] - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()) * (lat.volume().sqrt() + 1.0));
            }
        }
    }
}
