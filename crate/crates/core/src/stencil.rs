//! Reference implementations of the five stencil kernels.
//!
//! Every update is Jacobi-style: the output grid is computed entirely from
//! the input grid, boundary cells are copied, and the terms of each formula
//! are accumulated left to right in the order they are written below.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Dims, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Laplace2d,
    Diffusion2d,
    #[serde(rename = "jacobi9pt2d")]
    Jacobi9pt2d,
    Laplace3d,
    Diffusion3d,
}

impl KernelKind {
    pub const ALL: [KernelKind; 5] = [
        KernelKind::Laplace2d,
        KernelKind::Diffusion2d,
        KernelKind::Jacobi9pt2d,
        KernelKind::Laplace3d,
        KernelKind::Diffusion3d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Laplace2d => "laplace2d",
            KernelKind::Diffusion2d => "diffusion2d",
            KernelKind::Jacobi9pt2d => "jacobi9pt2d",
            KernelKind::Laplace3d => "laplace3d",
            KernelKind::Diffusion3d => "diffusion3d",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        KernelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown kernel kind {s:?}")))
    }

    pub fn rank(self) -> usize {
        match self {
            KernelKind::Laplace2d | KernelKind::Diffusion2d | KernelKind::Jacobi9pt2d => 2,
            KernelKind::Laplace3d | KernelKind::Diffusion3d => 3,
        }
    }

    pub fn coeff_count(self) -> usize {
        match self {
            KernelKind::Laplace2d | KernelKind::Laplace3d => 0,
            KernelKind::Diffusion2d => 5,
            KernelKind::Jacobi9pt2d => 9,
            KernelKind::Diffusion3d => 6,
        }
    }

    /// Name of the CPU base function, e.g. `do_laplace2d`.
    pub fn base_function(self) -> String {
        format!("do_{}", self.name())
    }

    /// Name of the hardware variant, e.g. `hw_laplace2d`.
    pub fn hw_function(self) -> String {
        format!("hw_{}", self.name())
    }
}

impl std::fmt::Display for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Which form of the 3-D Laplace update to use.
///
/// `Verbatim` sums the four in-plane neighbours plus the repeated `(i+1, j)`
/// and `(i, j+1)` terms and scales by 0.25. `SixNeighbor` averages the six
/// face neighbours instead.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Laplace3dForm {
    #[default]
    Verbatim,
    SixNeighbor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StencilKernel {
    pub kind: KernelKind,
    pub coeffs: Vec<f32>,
    #[serde(default)]
    pub laplace3d_form: Laplace3dForm,
}

impl StencilKernel {
    pub fn new(kind: KernelKind, coeffs: Vec<f32>) -> Result<Self> {
        let k = StencilKernel {
            kind,
            coeffs,
            laplace3d_form: Laplace3dForm::Verbatim,
        };
        k.validate()?;
        Ok(k)
    }

    /// Kernel with coefficients that sum to exactly one in binary floating point.
    pub fn with_default_coeffs(kind: KernelKind) -> Self {
        let coeffs = match kind {
            KernelKind::Laplace2d | KernelKind::Laplace3d => vec![],
            KernelKind::Diffusion2d => vec![0.125, 0.125, 0.5, 0.125, 0.125],
            KernelKind::Jacobi9pt2d => vec![
                0.0625, 0.125, 0.0625, 0.125, 0.25, 0.125, 0.0625, 0.125, 0.0625,
            ],
            KernelKind::Diffusion3d => vec![0.125, 0.125, 0.125, 0.25, 0.125, 0.25],
        };
        StencilKernel {
            kind,
            coeffs,
            laplace3d_form: Laplace3dForm::Verbatim,
        }
    }

    pub fn with_laplace3d_form(mut self, form: Laplace3dForm) -> Self {
        self.laplace3d_form = form;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.coeffs.len() != self.kind.coeff_count() {
            return Err(Error::CoeffCount {
                kernel: self.kind.name(),
                expected: self.kind.coeff_count(),
                actual: self.coeffs.len(),
            });
        }
        Ok(())
    }

    pub fn check_dims(&self, dims: Dims) -> Result<()> {
        self.validate()?;
        dims.validate()?;
        if dims.rank != self.kind.rank() {
            return Err(Error::RankMismatch {
                kernel: self.kind.name(),
                expected: self.kind.rank(),
                actual: dims.rank,
            });
        }
        Ok(())
    }
}

/// Adds and multiplies in one cell update, counting the formula as written.
pub fn flops_per_cell(kernel: &StencilKernel) -> u64 {
    match kernel.kind {
        // 3 adds + 1 multiply
        KernelKind::Laplace2d => 4,
        // 5 multiplies + 4 adds
        KernelKind::Diffusion2d => 9,
        // 9 multiplies + 8 adds
        KernelKind::Jacobi9pt2d => 17,
        // 5 adds + 1 multiply, in both forms
        KernelKind::Laplace3d => 6,
        // 6 multiplies + 5 adds
        KernelKind::Diffusion3d => 11,
    }
}

/// Window reach in cells: the largest linear offset between a cell and any
/// neighbour inside its 3x3 (or 3x3x3) window.
pub fn window_reach(dims: Dims) -> usize {
    if dims.rank == 3 {
        dims.plane() + dims.w + 1
    } else {
        dims.w + 1
    }
}

/// Length of the shift register that holds one full window:
/// `(planes-1)*plane_stride + (rows-1)*row_stride + cols`.
pub fn line_buffer_len(dims: Dims) -> usize {
    2 * window_reach(dims) + 1
}

pub fn apply_stencil(kernel: &StencilKernel, grid: &Grid) -> Result<Grid> {
    let dims = grid.dims();
    kernel.check_dims(dims)?;
    let src = grid.data();
    let mut out = src.to_vec();
    let c = &kernel.coeffs;
    let (h, w, d) = (dims.h, dims.w, dims.d);
    let at = |i: usize, j: usize, k: usize| src[dims.index(i, j, k)];

    match kernel.kind {
        KernelKind::Laplace2d => {
            for i in 1..h - 1 {
                for j in 1..w - 1 {
                    let s = at(i, j - 1, 0) + at(i - 1, j, 0) + at(i + 1, j, 0) + at(i, j + 1, 0);
                    out[dims.index(i, j, 0)] = 0.25 * s;
                }
            }
        }
        KernelKind::Diffusion2d => {
            for i in 1..h - 1 {
                for j in 1..w - 1 {
                    out[dims.index(i, j, 0)] = c[0] * at(i, j - 1, 0)
                        + c[1] * at(i - 1, j, 0)
                        + c[2] * at(i, j, 0)
                        + c[3] * at(i + 1, j, 0)
                        + c[4] * at(i, j + 1, 0);
                }
            }
        }
        KernelKind::Jacobi9pt2d => {
            for i in 1..h - 1 {
                for j in 1..w - 1 {
                    out[dims.index(i, j, 0)] = c[0] * at(i - 1, j - 1, 0)
                        + c[1] * at(i, j - 1, 0)
                        + c[2] * at(i + 1, j - 1, 0)
                        + c[3] * at(i - 1, j, 0)
                        + c[4] * at(i, j, 0)
                        + c[5] * at(i + 1, j, 0)
                        + c[6] * at(i - 1, j + 1, 0)
                        + c[7] * at(i, j + 1, 0)
                        + c[8] * at(i + 1, j + 1, 0);
                }
            }
        }
        KernelKind::Laplace3d => {
            for k in 1..d - 1 {
                for i in 1..h - 1 {
                    for j in 1..w - 1 {
                        let v = match kernel.laplace3d_form {
                            Laplace3dForm::Verbatim => {
                                let s = at(i, j - 1, k)
                                    + at(i - 1, j, k)
                                    + at(i + 1, j, k)
                                    + at(i, j + 1, k)
                                    + at(i + 1, j, k)
                                    + at(i, j + 1, k);
                                0.25 * s
                            }
                            Laplace3dForm::SixNeighbor => {
                                let s = at(i, j - 1, k)
                                    + at(i - 1, j, k)
                                    + at(i + 1, j, k)
                                    + at(i, j + 1, k)
                                    + at(i, j, k - 1)
                                    + at(i, j, k + 1);
                                (1.0f32 / 6.0) * s
                            }
                        };
                        out[dims.index(i, j, k)] = v;
                    }
                }
            }
        }
        KernelKind::Diffusion3d => {
            for k in 1..d - 1 {
                for i in 1..h - 1 {
                    for j in 1..w - 1 {
                        out[dims.index(i, j, k)] = c[0] * at(i, j - 1, k)
                            + c[1] * at(i - 1, j, k)
                            + c[2] * at(i, j, k - 1)
                            + c[3] * at(i, j, k)
                            + c[4] * at(i + 1, j, k)
                            + c[5] * at(i, j + 1, k);
                    }
                }
            }
        }
    }
    Grid::new(dims, out)
}

pub fn run_iterations(kernel: &StencilKernel, grid: &Grid, iterations: usize) -> Result<Grid> {
    kernel.check_dims(grid.dims())?;
    let mut g = grid.clone();
    for _ in 0..iterations {
        g = apply_stencil(kernel, &g)?;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn k(kind: KernelKind) -> StencilKernel {
        StencilKernel::with_default_coeffs(kind)
    }

    fn dims_for(kind: KernelKind, h: usize, w: usize, d: usize) -> Dims {
        if kind.rank() == 3 {
            Dims::d3(h, w, d)
        } else {
            Dims::d2(h, w)
        }
    }

    #[test]
    fn laplace_all_ones_fixed_point() {
        let g = Grid::filled(Dims::d2(4, 4), 1.0).unwrap();
        let out = apply_stencil(&k(KernelKind::Laplace2d), &g).unwrap();
        assert!(out.bit_eq(&g));
        let out = run_iterations(&k(KernelKind::Laplace2d), &g, 240).unwrap();
        assert!(out.bit_eq(&g));
    }

    #[test]
    fn laplace_impulse_by_hand() {
        let g = Grid::impulse(Dims::d2(5, 5), 4.0).unwrap();
        let out = apply_stencil(&k(KernelKind::Laplace2d), &g).unwrap();
        // (1,2) sees the impulse as its (i+1, j) neighbour: 0.25 * 4.
        assert_eq!(out.get(1, 2, 0), 1.0);
        assert_eq!(out.get(2, 1, 0), 1.0);
        assert_eq!(out.get(2, 2, 0), 0.0);
        assert_eq!(out.get(1, 1, 0), 0.0);
    }

    #[test]
    fn diffusion_constant_grid() {
        let kern = StencilKernel::new(KernelKind::Diffusion2d, vec![0.2; 5]).unwrap();
        let c = 3.0f32;
        let g = Grid::filled(Dims::d2(6, 7), c).unwrap();
        let out = apply_stencil(&kern, &g).unwrap();
        for (&v, &expect) in out.data().iter().zip(g.data()) {
            // 0.2 is not exact in binary; sum of five terms lands within an ulp or two.
            assert!((v - expect).abs() <= 4.0 * f32::EPSILON * c, "{v}");
        }
    }

    #[test]
    fn impulse_composition() {
        let kern = k(KernelKind::Laplace2d);
        let g = Grid::impulse(Dims::d2(5, 5), 4.0).unwrap();
        let twice = apply_stencil(&kern, &apply_stencil(&kern, &g).unwrap()).unwrap();
        assert!(run_iterations(&kern, &g, 2).unwrap().bit_eq(&twice));
        assert!(run_iterations(&kern, &g, 0).unwrap().bit_eq(&g));
        // Second step by hand: centre collects 4 * 0.25 * 1.0.
        assert_eq!(twice.get(2, 2, 0), 1.0);
    }

    #[test]
    fn flop_counts() {
        assert_eq!(flops_per_cell(&k(KernelKind::Laplace2d)), 4);
        assert_eq!(flops_per_cell(&k(KernelKind::Jacobi9pt2d)), 17);
        assert_eq!(flops_per_cell(&k(KernelKind::Diffusion3d)), 11);
        assert_eq!(flops_per_cell(&k(KernelKind::Diffusion2d)), 9);
        assert_eq!(flops_per_cell(&k(KernelKind::Laplace3d)), 6);
    }

    #[test]
    fn errors() {
        let g2 = Grid::filled(Dims::d2(4, 4), 1.0).unwrap();
        let g3 = Grid::filled(Dims::d3(4, 4, 4), 1.0).unwrap();
        assert!(matches!(
            apply_stencil(&k(KernelKind::Laplace3d), &g2),
            Err(Error::RankMismatch { .. })
        ));
        assert!(matches!(
            apply_stencil(&k(KernelKind::Laplace2d), &g3),
            Err(Error::RankMismatch { .. })
        ));
        assert!(matches!(
            StencilKernel::new(KernelKind::Diffusion2d, vec![1.0; 4]),
            Err(Error::CoeffCount { .. })
        ));
        assert!(StencilKernel::new(KernelKind::Laplace2d, vec![1.0]).is_err());
    }

    #[test]
    fn laplace3d_forms_differ() {
        let g = Grid::impulse(Dims::d3(5, 5, 5), 6.0).unwrap();
        let verb = apply_stencil(&k(KernelKind::Laplace3d), &g).unwrap();
        let six = apply_stencil(
            &k(KernelKind::Laplace3d).with_laplace3d_form(Laplace3dForm::SixNeighbor),
            &g,
        )
        .unwrap();
        // The verbatim form never looks across planes.
        assert_eq!(verb.get(2, 2, 1), 0.0);
        assert_eq!(six.get(2, 2, 1), 1.0);
        // (1,2,2) sees the impulse twice as its (i+1, j) term.
        assert_eq!(verb.get(1, 2, 2), 3.0);
    }

    #[test]
    fn window_geometry() {
        assert_eq!(line_buffer_len(Dims::d2(10, 16)), 2 * 16 + 3);
        assert_eq!(line_buffer_len(Dims::d3(4, 5, 6)), 2 * 20 + 2 * 5 + 3);
    }

    fn arb_case() -> impl Strategy<Value = (KernelKind, Grid)> {
        (0usize..5, 3usize..9, 3usize..9, 3usize..6).prop_flat_map(|(ki, h, w, d)| {
            let kind = KernelKind::ALL[ki];
            let dims = dims_for(kind, h, w, d);
            proptest::collection::vec(-100.0f32..100.0, dims.cells())
                .prop_map(move |data| (kind, Grid::new(dims, data).unwrap()))
        })
    }

    proptest! {
        #[test]
        fn boundary_preserved((kind, g) in arb_case()) {
            let out = apply_stencil(&k(kind), &g).unwrap();
            let dims = g.dims();
            for idx in 0..dims.cells() {
                if dims.is_boundary(idx) {
                    prop_assert_eq!(out.data()[idx].to_bits(), g.data()[idx].to_bits());
                }
            }
        }

        #[test]
        fn deterministic((kind, g) in arb_case()) {
            let a = apply_stencil(&k(kind), &g).unwrap();
            let b = apply_stencil(&k(kind), &g).unwrap();
            prop_assert!(a.bit_eq(&b));
        }

        #[test]
        fn power_of_two_linearity((kind, g) in arb_case(), e in -4i32..5) {
            let a = 2f32.powi(e);
            let scaled = Grid::new(g.dims(), g.data().iter().map(|v| v * a).collect()).unwrap();
            let lhs = apply_stencil(&k(kind), &scaled).unwrap();
            let rhs = apply_stencil(&k(kind), &g).unwrap();
            for (x, y) in lhs.data().iter().zip(rhs.data()) {
                prop_assert_eq!(x.to_bits(), (y * a).to_bits());
            }
        }

        #[test]
        fn constant_fixed_point(kind_i in 0usize..5, c in -8i32..8) {
            // Default coefficients are exact binary fractions summing to 1.
            let kind = KernelKind::ALL[kind_i];
            if kind == KernelKind::Laplace3d {
                // The verbatim 3-D form sums six terms times 0.25: not a fixed point.
                return Ok(());
            }
            let g = Grid::filled(dims_for(kind, 5, 6, 4), c as f32).unwrap();
            prop_assert!(apply_stencil(&k(kind), &g).unwrap().bit_eq(&g));
        }
    }
}
