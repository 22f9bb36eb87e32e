//! Finite lattice boxes and their nearest-neighbour structure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

/// Site set and adjacency of a finite box.
///
/// `Torus` is the periodic box `[-L, L]^d` with `2L + 1` sites per axis,
/// ordered row-major (first axis most significant). `Chain` is a
/// one-dimensional segment of arbitrary length, optionally closed into a
/// ring; it exists for the tiny state spaces of the exact oracles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    Torus { d: usize, half_width: usize },
    Chain { len: usize, periodic: bool },
}

/// One lattice step: axis and direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub axis: u8,
    pub sign: i8,
}

/// Compressed adjacency lists.
#[derive(Debug, Clone)]
pub struct Adjacency {
    offsets: Vec<u32>,
    targets: Vec<u32>,
    steps: Vec<Step>,
}

impl Adjacency {
    #[inline]
    pub fn neighbors(&self, site: usize) -> &[u32] {
        let (a, b) = (self.offsets[site] as usize, self.offsets[site + 1] as usize);
        &self.targets[a..b]
    }

    #[inline]
    pub fn steps(&self, site: usize) -> &[Step] {
        let (a, b) = (self.offsets[site] as usize, self.offsets[site + 1] as usize);
        &self.steps[a..b]
    }

    pub fn are_neighbors(&self, x: usize, y: usize) -> bool {
        self.neighbors(x).iter().any(|&z| z as usize == y)
    }
}

impl Geometry {
    pub fn torus(d: usize, half_width: usize) -> Result<Self> {
        let g = Geometry::Torus { d, half_width };
        g.validate()?;
        Ok(g)
    }

    pub fn chain(len: usize, periodic: bool) -> Result<Self> {
        let g = Geometry::Chain { len, periodic };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Geometry::Torus { d, half_width } => {
                if !(1..=MAX_DIM).contains(&d) {
                    return Err(Error::param("d", format!("{d} not in 1..=3")));
                }
                if half_width < 1 {
                    return Err(Error::param("L", "box half-width must be at least 1"));
                }
                let side = 2 * half_width + 1;
                if (side as u128).pow(d as u32) > u32::MAX as u128 {
                    return Err(Error::param("L", "box too large"));
                }
            }
            Geometry::Chain { len, periodic } => {
                if len == 0 {
                    return Err(Error::param("len", "chain needs at least one site"));
                }
                if periodic && len < 3 {
                    return Err(Error::param("len", "periodic chain needs at least 3 sites"));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match *self {
            Geometry::Torus { d, .. } => d,
            Geometry::Chain { .. } => 1,
        }
    }

    pub fn is_periodic(&self) -> bool {
        match *self {
            Geometry::Torus { .. } => true,
            Geometry::Chain { periodic, .. } => periodic,
        }
    }

    /// Sites per axis.
    pub fn side(&self) -> usize {
        match *self {
            Geometry::Torus { half_width, .. } => 2 * half_width + 1,
            Geometry::Chain { len, .. } => len,
        }
    }

    pub fn half_width(&self) -> Option<usize> {
        match *self {
            Geometry::Torus { half_width, .. } => Some(half_width),
            Geometry::Chain { .. } => None,
        }
    }

    pub fn num_sites(&self) -> usize {
        self.side().pow(self.dim() as u32)
    }

    fn offset(&self) -> i64 {
        match *self {
            Geometry::Torus { half_width, .. } => half_width as i64,
            Geometry::Chain { len, .. } => (len / 2) as i64,
        }
    }

    /// Integer lattice coordinates of `site` (unused axes are zero).
    pub fn coords(&self, site: usize) -> [i64; MAX_DIM] {
        let d = self.dim();
        let side = self.side();
        let off = self.offset();
        let mut out = [0i64; MAX_DIM];
        let mut rem = site;
        for axis in (0..d).rev() {
            out[axis] = (rem % side) as i64 - off;
            rem /= side;
        }
        out
    }

    /// Site with the given coordinates, wrapped on periodic axes.
    pub fn site(&self, coords: &[i64]) -> Option<usize> {
        let d = self.dim();
        let side = self.side() as i64;
        let off = self.offset();
        let mut idx = 0usize;
        for axis in 0..d {
            let mut c = coords.get(axis).copied().unwrap_or(0) + off;
            if self.is_periodic() {
                c = c.rem_euclid(side);
            } else if !(0..side).contains(&c) {
                return None;
            }
            idx = idx * side as usize + c as usize;
        }
        Some(idx)
    }

    /// Site at the lattice origin (or the closest one for even chains).
    pub fn origin(&self) -> usize {
        self.site(&[0, 0, 0]).expect("origin lies inside every box")
    }

    /// Macroscopic position `x / n` of a site.
    pub fn position(&self, site: usize, n: f64) -> [f64; MAX_DIM] {
        let c = self.coords(site);
        [c[0] as f64 / n, c[1] as f64 / n, c[2] as f64 / n]
    }

    pub fn adjacency(&self) -> Adjacency {
        let d = self.dim();
        let side = self.side() as i64;
        let periodic = self.is_periodic();
        let n = self.num_sites();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::with_capacity(n * 2 * d);
        let mut steps = Vec::with_capacity(n * 2 * d);
        offsets.push(0u32);
        let off = self.offset();
        for site in 0..n {
            let c = self.coords(site);
            for axis in 0..d {
                for sign in [1i8, -1i8] {
                    let raw = c[axis] + off + i64::from(sign);
                    if !periodic && !(0..side).contains(&raw) {
                        continue;
                    }
                    let mut nc = c;
                    nc[axis] += i64::from(sign);
                    let target = self.site(&nc[..d]).expect("in range");
                    targets.push(target as u32);
                    steps.push(Step {
                        axis: axis as u8,
                        sign,
                    });
                }
            }
            offsets.push(targets.len() as u32);
        }
        Adjacency {
            offsets,
            targets,
            steps,
        }
    }
}
