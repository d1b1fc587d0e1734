use crate::error::{Error, Result};
use crate::inr::resample::scaled_extent;

/// Continuous query positions over `[-1,1]²` with per-query cell sizes.
///
/// Coordinates are `(row, col)`: the first component runs along the image
/// height. Target pixel `(i, j)` of an `H×W` raster sits at
/// `(-1 + (2i+1)/H, -1 + (2j+1)/W)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryGrid {
    pub coords: Vec<[f64; 2]>,
    pub cells: Vec<[f64; 2]>,
    pub scale: (f64, f64),
    /// Raster extent when the grid enumerates every target pixel.
    pub target: Option<(usize, usize)>,
}

pub fn pixel_center(i: usize, n: usize) -> f64 {
    -1.0 + (2 * i + 1) as f64 / n as f64
}

impl QueryGrid {
    /// Every pixel center of a `⌊r_y·H⌋ × ⌊r_x·W⌋` target, row-major.
    pub fn full(lr_h: usize, lr_w: usize, scale: (f64, f64)) -> Result<Self> {
        let (th, tw) = (scaled_extent(lr_h, scale.0), scaled_extent(lr_w, scale.1));
        if th == 0 || tw == 0 {
            return Err(Error::contract("query_grid", format!("scale {scale:?} gives an empty target")));
        }
        Ok(Self::for_target(th, tw, scale))
    }

    pub fn for_target(th: usize, tw: usize, scale: (f64, f64)) -> Self {
        let coords = (0..th).flat_map(|i| (0..tw).map(move |j| [pixel_center(i, th), pixel_center(j, tw)])).collect();
        let cell = [2.0 / th as f64, 2.0 / tw as f64];
        Self { coords, cells: vec![cell; th * tw], scale, target: Some((th, tw)) }
    }

    /// Keeps the listed queries only; the result no longer forms a raster.
    pub fn subset(&self, index: &[usize]) -> Self {
        Self {
            coords: index.iter().map(|&i| self.coords[i]).collect(),
            cells: index.iter().map(|&i| self.cells[i]).collect(),
            scale: self.scale,
            target: None,
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.coords.len() != self.cells.len() {
            return Err(Error::shape("query_grid", format!("{} coords, {} cells", self.coords.len(), self.cells.len())));
        }
        if let Some(c) = self.coords.iter().find(|c| c.iter().any(|v| !(-1.0..=1.0).contains(v))) {
            return Err(Error::contract("query_rgb", format!("coordinate {c:?} outside [-1,1]²")));
        }
        if let Some(c) = self.cells.iter().find(|c| c.iter().any(|&v| !(v > 0.0))) {
            return Err(Error::contract("query_rgb", format!("cell {c:?} is not positive")));
        }
        Ok(())
    }
}
