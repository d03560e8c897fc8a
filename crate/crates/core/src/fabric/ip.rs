//! Stencil IP model: a line buffer holding one stencil window of the stream
//! and eight processing elements reading their taps from it.

use crate::error::{Error, Result};
use crate::grid::Dims;
use crate::stencil::{line_buffer_len, window_reach, KernelKind, Laplace3dForm, StencilKernel};

pub const PE_COUNT: usize = 8;
pub const BEAT_BYTES: usize = PE_COUNT * 4;

/// One 256-bit stream word: up to eight cells. Only the final beat of a
/// transfer may be partial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamBeat {
    pub cells: [f32; PE_COUNT],
    pub valid: usize,
    pub last: bool,
}

impl StreamBeat {
    pub fn payload(&self) -> &[f32] {
        &self.cells[..self.valid]
    }
}

pub fn beats_from_cells(cells: &[f32]) -> Vec<StreamBeat> {
    let n = cells.len().div_ceil(PE_COUNT);
    cells
        .chunks(PE_COUNT)
        .enumerate()
        .map(|(i, c)| {
            let mut b = StreamBeat { cells: [0.0; PE_COUNT], valid: c.len(), last: i + 1 == n };
            b.cells[..c.len()].copy_from_slice(c);
            b
        })
        .collect()
}

pub fn cells_from_beats(beats: &[StreamBeat]) -> Vec<f32> {
    beats.iter().flat_map(|b| b.payload().iter().copied()).collect()
}

pub fn beat_count(cells: usize) -> usize {
    cells.div_ceil(PE_COUNT)
}

/// Cycles until the first window is complete.
pub fn fill_latency_cycles(dims: Dims) -> u64 {
    line_buffer_len(dims).div_ceil(PE_COUNT) as u64
}

/// Streaming evaluator. Cells go in one at a time in row-major (plane-major
/// for 3-D) order; each output cell is produced once the newest cell of its
/// window has arrived.
#[derive(Debug, Clone)]
pub struct LinePipeline {
    kernel: StencilKernel,
    dims: Dims,
    reach: usize,
    ring: Vec<f32>,
    received: usize,
    emitted: usize,
    taps: Vec<isize>,
}

impl LinePipeline {
    pub fn new(kernel: StencilKernel, dims: Dims) -> Result<Self> {
        kernel.check_dims(dims)?;
        let len = line_buffer_len(dims);
        let (row, plane) = (dims.w as isize, dims.plane() as isize);
        // tap offsets in the association order of each kernel's sum
        let taps = match (kernel.kind, kernel.laplace3d_form) {
            (KernelKind::Laplace2d, _) => vec![-1, -row, row, 1],
            (KernelKind::Diffusion2d, _) => vec![-1, -row, 0, row, 1],
            (KernelKind::Jacobi9pt2d, _) => vec![-row - 1, -1, row - 1, -row, 0, row, -row + 1, 1, row + 1],
            (KernelKind::Laplace3d, Laplace3dForm::Verbatim) => vec![-1, -row, row, 1, row, 1],
            (KernelKind::Laplace3d, Laplace3dForm::SixNeighbor) => vec![-1, -row, row, 1, -plane, plane],
            (KernelKind::Diffusion3d, _) => vec![-1, -row, -plane, 0, row, 1],
        };
        Ok(LinePipeline {
            kernel,
            dims,
            reach: window_reach(dims),
            ring: vec![0.0; len],
            received: 0,
            emitted: 0,
            taps,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn line_len(&self) -> usize {
        self.ring.len()
    }

    pub fn received(&self) -> usize {
        self.received
    }

    pub fn emitted(&self) -> usize {
        self.emitted
    }

    pub fn is_done(&self) -> bool {
        self.emitted == self.dims.cells()
    }

    fn tap(&self, center: usize, off: isize) -> f32 {
        let idx = (center as isize + off) as usize;
        self.ring[idx % self.ring.len()]
    }

    fn pe(&self, x: usize) -> f32 {
        let center = self.tap(x, 0);
        if self.dims.is_boundary(x) {
            return center;
        }
        let t = |i: usize| self.tap(x, self.taps[i]);
        let c = &self.kernel.coeffs;
        match self.kernel.kind {
            KernelKind::Laplace2d => 0.25 * (t(0) + t(1) + t(2) + t(3)),
            KernelKind::Laplace3d => {
                let s = t(0) + t(1) + t(2) + t(3) + t(4) + t(5);
                match self.kernel.laplace3d_form {
                    Laplace3dForm::Verbatim => 0.25 * s,
                    Laplace3dForm::SixNeighbor => (1.0f32 / 6.0) * s,
                }
            }
            _ => {
                let mut acc = c[0] * t(0);
                for (i, ci) in c.iter().enumerate().skip(1) {
                    acc += ci * t(i);
                }
                acc
            }
        }
    }

    fn drain_ready(&mut self, out: &mut Vec<f32>) {
        let n = self.dims.cells();
        while self.emitted < n && self.received >= (self.emitted + self.reach + 1).min(n) {
            out.push(self.pe(self.emitted));
            self.emitted += 1;
        }
    }

    /// Pushes input cells; appends every output cell that became ready.
    pub fn push(&mut self, cells: &[f32], out: &mut Vec<f32>) -> Result<()> {
        if self.received + cells.len() > self.dims.cells() {
            return Err(Error::Stream(format!(
                "stream overruns the grid: {} cells for a {} grid",
                self.received + cells.len(),
                self.dims
            )));
        }
        for &v in cells {
            let len = self.ring.len();
            self.ring[self.received % len] = v;
            self.received += 1;
            self.drain_ready(out);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpStreamOutput {
    pub beats: Vec<StreamBeat>,
    /// Fill latency plus one cycle per beat.
    pub latency_cycles: u64,
}

/// Runs one complete transfer through an IP.
pub fn ip_process_stream(kernel: &StencilKernel, dims: Dims, beats: &[StreamBeat]) -> Result<IpStreamOutput> {
    let mut pipe = LinePipeline::new(kernel.clone(), dims)?;
    let expected = beat_count(dims.cells());
    if beats.len() != expected {
        return Err(Error::Stream(format!("{} beats for a {dims} grid, expected {expected}", beats.len())));
    }
    if !beats.last().is_some_and(|b| b.last) {
        return Err(Error::Stream("stream ended without a last beat".into()));
    }
    if let Some(i) = beats[..beats.len() - 1].iter().position(|b| b.last) {
        return Err(Error::Stream(format!("last flag on beat {i} of {}", beats.len())));
    }
    let mut out = Vec::with_capacity(dims.cells());
    for b in beats {
        pipe.push(b.payload(), &mut out)?;
    }
    if !pipe.is_done() {
        return Err(Error::Stream(format!("stream carried {} of {} cells", pipe.received(), dims.cells())));
    }
    Ok(IpStreamOutput {
        beats: beats_from_cells(&out),
        latency_cycles: fill_latency_cycles(dims) + expected as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::stencil::{apply_stencil, run_iterations};

    #[test]
    fn all_ones_fixed_point() {
        let k = StencilKernel::with_default_coeffs(KernelKind::Laplace2d);
        let d = Dims::d2(4, 4);
        let g = Grid::filled(d, 1.0).unwrap();
        let out = ip_process_stream(&k, d, &beats_from_cells(g.data())).unwrap();
        assert_eq!(cells_from_beats(&out.beats), g.data());
        assert_eq!(out.latency_cycles, 2 + 2);
    }

    #[test]
    fn matches_oracle_every_kernel() {
        for kind in KernelKind::ALL {
            let d = if kind.rank() == 3 { Dims::d3(5, 6, 4) } else { Dims::d2(7, 5) };
            let data: Vec<f32> = (0..d.cells()).map(|i| ((i * 37) % 11) as f32 * 0.3 - 1.0).collect();
            let g = Grid::new(d, data).unwrap();
            let k = StencilKernel::with_default_coeffs(kind);
            let want = apply_stencil(&k, &g).unwrap();
            let got = ip_process_stream(&k, d, &beats_from_cells(g.data())).unwrap();
            let got = Grid::new(d, cells_from_beats(&got.beats)).unwrap();
            assert!(got.bit_eq(&want), "{kind}");
        }
        let k = StencilKernel::with_default_coeffs(KernelKind::Laplace3d).with_laplace3d_form(Laplace3dForm::SixNeighbor);
        let d = Dims::d3(4, 5, 6);
        let g = Grid::impulse(d, 6.0).unwrap();
        let got = ip_process_stream(&k, d, &beats_from_cells(g.data())).unwrap();
        assert!(Grid::new(d, cells_from_beats(&got.beats)).unwrap().bit_eq(&apply_stencil(&k, &g).unwrap()));
    }

    #[test]
    fn chain_of_three() {
        let k = StencilKernel::with_default_coeffs(KernelKind::Laplace2d);
        let d = Dims::d2(5, 5);
        let g = Grid::impulse(d, 1.0).unwrap();
        let mut beats = beats_from_cells(g.data());
        for _ in 0..3 {
            beats = ip_process_stream(&k, d, &beats).unwrap().beats;
        }
        assert_eq!(cells_from_beats(&beats), run_iterations(&k, &g, 3).unwrap().data());
    }

    #[test]
    fn outputs_wait_for_their_window() {
        let k = StencilKernel::with_default_coeffs(KernelKind::Laplace2d);
        let d = Dims::d2(6, 6);
        let mut p = LinePipeline::new(k, d).unwrap();
        let mut out = Vec::new();
        p.push(&[0.0; 14], &mut out).unwrap();
        // reach is w + 1 = 7
        assert_eq!(out.len(), 7);
        p.push(&[0.0; 22], &mut out).unwrap();
        assert!(p.is_done());
        assert!(p.push(&[0.0], &mut out).is_err());
    }

    #[test]
    fn malformed_streams() {
        let k = StencilKernel::with_default_coeffs(KernelKind::Laplace2d);
        let d = Dims::d2(4, 4);
        let mut beats = beats_from_cells(&[1.0; 16]);
        beats[1].last = false;
        assert!(ip_process_stream(&k, d, &beats).is_err());
        assert!(ip_process_stream(&k, d, &beats_from_cells(&[1.0; 8])).is_err());
        assert!(ip_process_stream(&k, Dims::d3(4, 4, 4), &beats_from_cells(&[1.0; 64])).is_err());
    }
}
