//! Dense float32 grids in row-major order.
//!
//! 2-D grids are `h` rows of `w` cells. 3-D grids stack `d` such planes,
//! plane-major, so the linear index of `(i, j, k)` is `(k * h + i) * w + j`.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"GRD1";

/// Grid extent. `d == 1` for 2-D grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Dims {
    pub h: usize,
    pub w: usize,
    pub d: usize,
    pub rank: usize,
}

impl Dims {
    pub fn d2(h: usize, w: usize) -> Self {
        Dims { h, w, d: 1, rank: 2 }
    }

    pub fn d3(h: usize, w: usize, d: usize) -> Self {
        Dims { h, w, d, rank: 3 }
    }

    pub fn cells(&self) -> usize {
        self.h * self.w * self.d
    }

    pub fn bytes(&self) -> usize {
        self.cells() * 4
    }

    /// Cells that get updated by a stencil (everything but the boundary).
    pub fn interior_cells(&self) -> usize {
        let inner = (self.h.saturating_sub(2)) * (self.w.saturating_sub(2));
        if self.rank == 3 {
            inner * self.d.saturating_sub(2)
        } else {
            inner
        }
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.h + i) * self.w + j
    }

    /// Inverse of [`Dims::index`]: returns `(i, j, k)`.
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let k = idx / self.plane();
        let rem = idx % self.plane();
        (rem / self.w, rem % self.w, k)
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let (i, j, k) = self.coords(idx);
        let edge = |x: usize, n: usize| x == 0 || x + 1 == n;
        edge(i, self.h) || edge(j, self.w) || (self.rank == 3 && edge(k, self.d))
    }

    pub fn validate(&self) -> Result<()> {
        match self.rank {
            2 if self.d != 1 => {
                return Err(Error::Grid(format!("2-D grid must have depth 1, got {}", self.d)))
            }
            2 | 3 => {}
            r => return Err(Error::Grid(format!("unsupported rank {r}"))),
        }
        let mut axes = vec![self.h, self.w];
        if self.rank == 3 {
            axes.push(self.d);
        }
        if axes.iter().any(|&n| n < 3) {
            return Err(Error::Grid(format!("every axis must be >= 3, got {self}")));
        }
        Ok(())
    }

    /// Parses `HxW` or `HxWxD`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts = s
            .split('x')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Grid(format!("bad dims {s:?}: {e}")))?;
        let dims = match parts.as_slice() {
            [h, w] => Dims::d2(*h, *w),
            [h, w, d] => Dims::d3(*h, *w, *d),
            _ => return Err(Error::Grid(format!("bad dims {s:?}: expected HxW or HxWxD"))),
        };
        dims.validate()?;
        Ok(dims)
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.rank == 3 {
            write!(f, "{}x{}x{}", self.h, self.w, self.d)
        } else {
            write!(f, "{}x{}", self.h, self.w)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dims: Dims,
    data: Vec<f32>,
}

impl Grid {
    pub fn new(dims: Dims, data: Vec<f32>) -> Result<Self> {
        dims.validate()?;
        if data.len() != dims.cells() {
            return Err(Error::Grid(format!(
                "data length {} does not match dims {dims} ({} cells)",
                data.len(),
                dims.cells()
            )));
        }
        Ok(Grid { dims, data })
    }

    pub fn filled(dims: Dims, value: f32) -> Result<Self> {
        Grid::new(dims, vec![value; dims.cells()])
    }

    /// Zeros with a single `value` in the middle cell.
    pub fn impulse(dims: Dims, value: f32) -> Result<Self> {
        let mut g = Grid::filled(dims, 0.0)?;
        let idx = dims.index(dims.h / 2, dims.w / 2, dims.d / 2);
        g.data[idx] = value;
        Ok(g)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[self.dims.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f32) {
        let idx = self.dims.index(i, j, k);
        self.data[idx] = v;
    }

    /// Bitwise comparison; distinguishes `-0.0` from `0.0` and compares NaN payloads.
    pub fn bit_eq(&self, other: &Grid) -> bool {
        self.dims == other.dims
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_le_bytes(dims: Dims, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != dims.bytes() {
            return Err(Error::Grid(format!(
                "expected {} bytes for {dims}, got {}",
                dims.bytes(),
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Grid::new(dims, data)
    }

    /// Binary layout: magic `GRD1`, then rank, h, w, d as u32 LE (20 header bytes),
    /// then the cells as little-endian f32.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        for v in [self.dims.rank, self.dims.h, self.dims.w, self.dims.d] {
            let v = u32::try_from(v).map_err(|_| Error::Grid("dimension exceeds u32".into()))?;
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&self.to_le_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Grid(format!("bad magic {magic:?}")));
        }
        let mut hdr = [0u32; 4];
        for v in hdr.iter_mut() {
            let mut b = [0u8; 4];
            input.read_exact(&mut b)?;
            *v = u32::from_le_bytes(b);
        }
        let [rank, h, w, d] = hdr.map(|v| v as usize);
        let dims = Dims { h, w, d, rank };
        dims.validate()?;
        let mut bytes = vec![0u8; dims.bytes()];
        input.read_exact(&mut bytes)?;
        let mut rest = Vec::new();
        input.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Grid(format!("{} trailing bytes after grid data", rest.len())));
        }
        Grid::from_le_bytes(dims, &bytes)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Grid::read_from(std::io::BufReader::new(f))
    }

    /// One line per row, planes separated by a blank line.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for k in 0..self.dims.d {
            if k > 0 {
                s.push('\n');
            }
            for i in 0..self.dims.h {
                for j in 0..self.dims.w {
                    if j > 0 {
                        s.push(',');
                    }
                    let _ = write!(s, "{}", self.get(i, j, k));
                }
                s.push('\n');
            }
        }
        s
    }
}
