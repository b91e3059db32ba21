//! Cell-centered uniform lattice over the domain's bounding box.
//!
//! Only cells whose centers lie strictly inside the domain carry unknowns;
//! they are numbered consecutively in raster order (x fastest).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{DomainSpec, Point};

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dimension: usize,
    h: f64,
    /// Center of lattice cell (0, 0).
    origin: Point,
    dims: [usize; 2],
    lattice_to_cell: Vec<u32>,
    cell_lattice: Vec<[usize; 2]>,
    coords: Vec<Point>,
    near_boundary: Vec<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridMetadata {
    pub dimension: usize,
    pub h: f64,
    pub origin: Point,
    pub dims: [usize; 2],
    pub cells: usize,
}

/// Builds the lattice of spacing `h` and classifies cells by the center-in-domain test.
pub fn build_grid(domain: &DomainSpec, h: f64) -> Result<Grid> {
    domain.validate()?;
    let diam = domain.diameter();
    if !(h.is_finite() && h > 0.0 && h <= diam / 4.0 * (1.0 + 1e-12)) {
        return Err(Error::Resolution(format!(
            "spacing h = {h} must satisfy 0 < h <= diam/4 = {}",
            diam / 4.0
        )));
    }
    let (lo, hi) = domain.bounding_box();
    let n = domain.dimension;
    let mut dims = [1usize; 2];
    let mut origin = [0.0; 2];
    for k in 0..n {
        dims[k] = ((hi[k] - lo[k]) / h - 1e-9).ceil().max(1.0) as usize;
        // center the lattice in the bounding box so symmetric domains give symmetric grids
        let slack = dims[k] as f64 * h - (hi[k] - lo[k]);
        origin[k] = lo[k] - 0.5 * slack + 0.5 * h;
    }
    let mut lattice_to_cell = vec![NONE; dims[0] * dims[1]];
    let mut cell_lattice = Vec::new();
    let mut coords = Vec::new();
    let mut near_boundary = Vec::new();
    for j in 0..dims[1] {
        for i in 0..dims[0] {
            let p = [origin[0] + i as f64 * h, if n == 2 { origin[1] + j as f64 * h } else { 0.0 }];
            let sd = domain.signed_distance(p);
            if sd > 0.0 {
                lattice_to_cell[j * dims[0] + i] = coords.len() as u32;
                cell_lattice.push([i, j]);
                coords.push(p);
                near_boundary.push(sd <= h);
            }
        }
    }
    if coords.is_empty() {
        return Err(Error::Resolution("no cell center falls inside the domain".into()));
    }
    Ok(Grid {
        dimension: n,
        h,
        origin,
        dims,
        lattice_to_cell,
        cell_lattice,
        coords,
        near_boundary,
    })
}

impl Grid {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn dims(&self) -> [usize; 2] {
        self.dims
    }

    /// Number of interior cells.
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Volume of one cell, `h^N`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dimension as i32)
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn coord(&self, cell: usize) -> Point {
        self.coords[cell]
    }

    pub fn lattice_index(&self, cell: usize) -> [usize; 2] {
        self.cell_lattice[cell]
    }

    pub fn near_boundary_mask(&self) -> &[bool] {
        &self.near_boundary
    }

    /// Lattice-level classification (raster order, x fastest).
    pub fn interior_mask(&self) -> Vec<bool> {
        self.lattice_to_cell.iter().map(|&c| c != NONE).collect()
    }

    /// Interior cell at lattice position `(i, j)`, if any.
    pub fn cell_at(&self, i: isize, j: isize) -> Option<usize> {
        if i < 0 || j < 0 || i as usize >= self.dims[0] || j as usize >= self.dims[1] {
            return None;
        }
        match self.lattice_to_cell[j as usize * self.dims[0] + i as usize] {
            NONE => None,
            c => Some(c as usize),
        }
    }

    /// Interior cell displaced from `cell` by lattice offset `(di, dj)`.
    pub fn neighbor(&self, cell: usize, di: isize, dj: isize) -> Option<usize> {
        let [i, j] = self.cell_lattice[cell];
        self.cell_at(i as isize + di, j as isize + dj)
    }

    /// Interior cell containing point `p`, if its center is inside the domain.
    pub fn locate(&self, p: Point) -> Option<usize> {
        let i = ((p[0] - self.origin[0]) / self.h).round() as isize;
        let j = if self.dimension == 2 {
            ((p[1] - self.origin[1]) / self.h).round() as isize
        } else {
            0
        };
        self.cell_at(i, j)
    }

    /// Lattice offsets of the 8- (2D) or 2- (1D) neighborhood.
    pub fn neighborhood(&self) -> &'static [(isize, isize)] {
        if self.dimension == 1 {
            &[(-1, 0), (1, 0)]
        } else {
            &[(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]
        }
    }

    /// True when both grids describe the same lattice and mask.
    pub fn same_layout(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other)
            || (self.dimension == other.dimension
                && self.h == other.h
                && self.origin == other.origin
                && self.dims == other.dims
                && self.coords.len() == other.coords.len())
    }

    pub fn metadata(&self) -> GridMetadata {
        GridMetadata {
            dimension: self.dimension,
            h: self.h,
            origin: self.origin,
            dims: self.dims,
            cells: self.len(),
        }
    }
}
