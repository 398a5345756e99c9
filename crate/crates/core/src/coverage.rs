//! BSS cell geometry on a pixel grid.
//!
//! A cell is the set of pixels where one AP's field reaches the quality
//! threshold `q`. Its compactness is scored with
//! `G′(C) = Σ V(b) / (8|C| − 6√(π|C|))`, where `V(b)` counts the Moore
//! neighbours of `b` that are also in the cell. Floors are scored
//! independently (no adjacency across floors) and combined into `G_WLAN` by
//! a size-weighted mean.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use log::warn;

use crate::error::{Error, Result};
use crate::propagation::{PropagationModel, EPSILON_DISTANCE};
use crate::radio::{ApId, Environment, Position};

/// Pixel coordinate `(i, j)`: column along x, row along y.
pub type Pixel = (usize, usize);

/// Physical placement of a grid inside the building frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    pub pixel_size: f64,
    pub floors: usize,
    pub floor_height: f64,
    /// Height of the sampling plane above each floor.
    pub sample_height: f64,
}

impl GridLayout {
    /// Layout covering `width_m × height_m` meters, rounding up to whole pixels.
    pub fn covering(width_m: f64, height_m: f64, pixel_size: f64, floors: usize, floor_height: f64) -> Result<Self> {
        if !(pixel_size > 0.0) {
            return Err(Error::validation("pixel", "pixel size must be strictly positive"));
        }
        if !(width_m > 0.0 && height_m > 0.0) {
            return Err(Error::validation("grid", "grid extent must be strictly positive"));
        }
        let layout = GridLayout {
            width: (width_m / pixel_size - 1e-9).ceil().max(1.0) as usize,
            height: (height_m / pixel_size - 1e-9).ceil().max(1.0) as usize,
            pixel_size,
            floors,
            floor_height,
            sample_height: 0.5 * floor_height,
        };
        layout.validate()?;
        Ok(layout)
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::validation("grid", "grid must be at least 1×1 pixels"));
        }
        if self.floors == 0 {
            return Err(Error::validation("floors", "at least one floor is required"));
        }
        if !(self.pixel_size > 0.0) {
            return Err(Error::validation("pixel", "pixel size must be strictly positive"));
        }
        if !(self.floor_height >= 0.0) {
            return Err(Error::validation("floor_height", "must be non-negative"));
        }
        Ok(())
    }

    pub fn pixel_center(&self, floor: usize, (i, j): Pixel) -> Position {
        Position::new(
            (i as f64 + 0.5) * self.pixel_size,
            (j as f64 + 0.5) * self.pixel_size,
            floor as f64 * self.floor_height + self.sample_height,
        )
    }
}

/// Field strength per AP per floor, mW.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageGrid {
    layout: GridLayout,
    quality_threshold: f64,
    /// `floors[k][ap][j * width + i]`
    floors: Vec<BTreeMap<ApId, Vec<f64>>>,
}

impl CoverageGrid {
    pub fn from_fields(
        layout: GridLayout,
        quality_threshold: f64,
        floors: Vec<BTreeMap<ApId, Vec<f64>>>,
    ) -> Result<Self> {
        layout.validate()?;
        if !(quality_threshold >= 0.0) {
            return Err(Error::validation("q", "quality threshold must be non-negative"));
        }
        if floors.len() != layout.floors {
            return Err(Error::validation(
                "floors",
                format!("expected {} layers, got {}", layout.floors, floors.len()),
            ));
        }
        let n = layout.width * layout.height;
        for layer in &floors {
            for (id, field) in layer {
                if field.len() != n {
                    return Err(Error::validation(
                        "field",
                        format!("AP `{id}`: expected {n} pixels, got {}", field.len()),
                    ));
                }
            }
        }
        Ok(CoverageGrid {
            layout,
            quality_threshold,
            floors,
        })
    }

    /// Fills every floor with the free-space field of each AP in `env`.
    pub fn simulate(
        env: &Environment,
        model: &PropagationModel,
        layout: GridLayout,
        quality_threshold: f64,
    ) -> Result<Self> {
        layout.validate()?;
        let mut floors = Vec::with_capacity(layout.floors);
        for k in 0..layout.floors {
            let mut layer = BTreeMap::new();
            for ap in env.aps() {
                let mut field = Vec::with_capacity(layout.width * layout.height);
                for j in 0..layout.height {
                    for i in 0..layout.width {
                        let d = (layout.pixel_center(k, (i, j)) - ap.position)
                            .norm()
                            .max(EPSILON_DISTANCE);
                        field.push(model.synthesize_rss(ap, &env.receiver, d)?);
                    }
                }
                layer.insert(ap.id.clone(), field);
            }
            floors.push(layer);
        }
        Self::from_fields(layout, quality_threshold, floors)
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn quality_threshold(&self) -> f64 {
        self.quality_threshold
    }

    pub fn field(&self, floor: usize, ap: &ApId) -> Option<&[f64]> {
        self.floors.get(floor)?.get(ap).map(Vec::as_slice)
    }

    /// Pixels of `floor` where `ap`'s field is at least `q`, in `(i, j)` order.
    pub fn extract_cell(&self, floor: usize, ap: &ApId) -> Result<Cell> {
        let layer = self.floors.get(floor).ok_or(Error::IndexError {
            index: floor,
            floors: self.floors.len(),
        })?;
        let field = layer.get(ap).ok_or_else(|| Error::UnknownAp(ap.clone()))?;
        let w = self.layout.width;
        let pixels = field
            .iter()
            .enumerate()
            .filter(|(_, &f)| f >= self.quality_threshold)
            .map(|(idx, _)| (idx % w, idx / w))
            .collect();
        Ok(Cell { floor, pixels })
    }

    /// One cell per floor for `ap`.
    pub fn extract_cells(&self, ap: &ApId) -> Result<Vec<Cell>> {
        (0..self.floors.len()).map(|k| self.extract_cell(k, ap)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub floor: usize,
    pub pixels: BTreeSet<Pixel>,
}

impl Cell {
    pub fn new(floor: usize, pixels: impl IntoIterator<Item = Pixel>) -> Self {
        Cell {
            floor,
            pixels: pixels.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Moore neighbours of `pixel` that belong to the cell.
    pub fn neighbor_count(&self, pixel: Pixel) -> Result<u8> {
        if !self.pixels.contains(&pixel) {
            return Err(Error::InvalidPixel(pixel.0, pixel.1));
        }
        Ok(self.neighbors_in(pixel))
    }

    fn neighbors_in(&self, (i, j): Pixel) -> u8 {
        let mut n = 0;
        for di in -1i64..=1 {
            for dj in -1i64..=1 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let (Some(ni), Some(nj)) = (i.checked_add_signed(di as isize), j.checked_add_signed(dj as isize))
                else {
                    continue;
                };
                if self.pixels.contains(&(ni, nj)) {
                    n += 1;
                }
            }
        }
        n
    }

    /// `Σ V(b)` over the cell.
    pub fn neighbor_sum(&self) -> usize {
        self.pixels.iter().map(|&p| self.neighbors_in(p) as usize).sum()
    }
}

/// Compactness `G′(C)` of one cell.
///
/// Single-pixel cells have a non-positive denominator and are rejected.
/// Cells of 2 to 8 pixels are accepted but can score above 1.
pub fn geometric_indicator(cell: &Cell) -> Result<f64> {
    let n = cell.len();
    if n <= 1 {
        return Err(Error::CellTooSmall(n));
    }
    if n < 9 {
        warn!("cell of {n} pixels is too small for the compactness normalization; G′ may exceed 1");
    }
    let size = n as f64;
    let denominator = 8.0 * size - 6.0 * (PI * size).sqrt();
    Ok(cell.neighbor_sum() as f64 / denominator)
}

/// Size-weighted mean of the per-floor indicators, `G_WLAN`.
///
/// Empty floors carry zero weight and are skipped.
pub fn wlan_indicator(cells: &[Cell]) -> Result<f64> {
    let total: usize = cells.iter().map(Cell::len).sum();
    if total == 0 {
        return Err(Error::CellTooSmall(0));
    }
    let mut acc = 0.0;
    for cell in cells.iter().filter(|c| !c.is_empty()) {
        acc += cell.len() as f64 / total as f64 * geometric_indicator(cell)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::{AccessPoint, Dimension, Receiver};
    use proptest::prelude::*;

    fn square(n: usize) -> Cell {
        Cell::new(0, (0..n).flat_map(|i| (0..n).map(move |j| (i, j))))
    }

    fn line(n: usize) -> Cell {
        Cell::new(0, (0..n).map(|i| (i, 0)))
    }

    fn layout(w: usize, h: usize, pixel: f64, floors: usize) -> GridLayout {
        GridLayout {
            width: w,
            height: h,
            pixel_size: pixel,
            floors,
            floor_height: 3.0,
            sample_height: 1.5,
        }
    }

    #[test]
    fn neighbour_counts() {
        let c = square(3);
        assert_eq!(c.neighbor_count((1, 1)).unwrap(), 8);
        assert_eq!(c.neighbor_count((0, 0)).unwrap(), 3);
        assert_eq!(c.neighbor_count((1, 0)).unwrap(), 5);
        assert_eq!(Cell::new(0, [(4, 4)]).neighbor_count((4, 4)).unwrap(), 0);
        assert_eq!(c.neighbor_count((7, 7)), Err(Error::InvalidPixel(7, 7)));
    }

    #[test]
    fn indicator_values() {
        let g = geometric_indicator(&square(3)).unwrap();
        assert!((g - 40.0 / (72.0 - 6.0 * (9.0 * PI).sqrt())).abs() < 1e-12);
        assert!((g - 0.9976099588893249).abs() < 1e-12);
        let diag = Cell::new(0, [(0, 0), (1, 1)]);
        assert!((geometric_indicator(&diag).unwrap() - 2.0828335569570484).abs() < 1e-12);
        let l = line(8);
        assert_eq!(l.neighbor_sum(), 14);
        assert!((geometric_indicator(&l).unwrap() - 0.41273024331808184).abs() < 1e-12);
        assert_eq!(
            geometric_indicator(&Cell::new(0, [(0, 0)])),
            Err(Error::CellTooSmall(1))
        );
        assert_eq!(geometric_indicator(&Cell::new(0, [])), Err(Error::CellTooSmall(0)));
    }

    #[test]
    fn wlan_weights() {
        let a = square(3);
        let b = Cell::new(1, [(0, 0), (1, 0), (2, 0)]);
        assert_eq!(
            wlan_indicator(std::slice::from_ref(&a)).unwrap(),
            geometric_indicator(&a).unwrap()
        );
        let mut a2 = a.clone();
        a2.floor = 1;
        assert!((wlan_indicator(&[a.clone(), a2]).unwrap() - geometric_indicator(&a).unwrap()).abs() < 1e-15);
        let ga = geometric_indicator(&a).unwrap();
        let gb = geometric_indicator(&b).unwrap();
        assert!((wlan_indicator(&[a, b]).unwrap() - (9.0 * ga + 3.0 * gb) / 12.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_fields() {
        let l = layout(4, 3, 1.0, 1);
        let mut layer = BTreeMap::new();
        layer.insert(ApId::from("hi"), vec![1.0; 12]);
        layer.insert(ApId::from("lo"), vec![1e-3; 12]);
        let grid = CoverageGrid::from_fields(l, 1e-2, vec![layer]).unwrap();
        assert_eq!(grid.extract_cell(0, &"hi".into()).unwrap().len(), 12);
        assert!(grid.extract_cell(0, &"lo".into()).unwrap().is_empty());
        assert_eq!(
            grid.extract_cell(1, &"hi".into()),
            Err(Error::IndexError { index: 1, floors: 1 })
        );
        assert_eq!(grid.extract_cell(0, &"zz".into()), Err(Error::UnknownAp("zz".into())));
    }

    #[test]
    fn disc_from_forward_model() {
        let pixel = 0.5;
        let l = layout(41, 41, pixel, 1);
        let center = l.pixel_center(0, (20, 20));
        let ap = AccessPoint::new("c", center, 100.0, 1.0, 0.125).unwrap();
        let env = Environment::new(vec![ap.clone()], Receiver::default(), Dimension::Three, 0.0).unwrap();
        let model = PropagationModel::friis();
        let radius = 5.0;
        let q = model.forward_rss(&ap, &env.receiver, radius).unwrap();
        let grid = CoverageGrid::simulate(&env, &model, l, q * (1.0 - 1e-12)).unwrap();
        let cell = grid.extract_cell(0, &"c".into()).unwrap();
        let reach = (radius / pixel).ceil() as usize;
        for j in 0..l.height {
            for i in 0..l.width {
                let d = (l.pixel_center(0, (i, j)) - center).norm();
                assert_eq!(
                    cell.pixels.contains(&(i, j)),
                    d <= radius + 1e-9,
                    "pixel ({i},{j}) d={d}"
                );
            }
        }
        let max_i = cell.pixels.iter().map(|p| p.0).max().unwrap();
        assert_eq!(max_i, 20 + reach);
    }

    #[test]
    fn compact_beats_elongated() {
        for side in 3..8 {
            let n = side * side;
            assert!(geometric_indicator(&square(side)).unwrap() > geometric_indicator(&line(n)).unwrap());
        }
    }

    proptest! {
        #[test]
        fn sums_even_and_bounded(pix in prop::collection::btree_set((0usize..12, 0usize..12), 2..60)) {
            let c = Cell::new(0, pix);
            for &p in &c.pixels {
                prop_assert!(c.neighbor_count(p).unwrap() <= 8);
            }
            prop_assert_eq!(c.neighbor_sum() % 2, 0);
        }

        #[test]
        fn shift_invariant(pix in prop::collection::btree_set((0usize..10, 0usize..10), 2..40), di in 0usize..50, dj in 0usize..50) {
            let c = Cell::new(0, pix.iter().copied());
            let shifted = Cell::new(0, pix.iter().map(|&(i, j)| (i + di, j + dj)));
            prop_assert_eq!(geometric_indicator(&c).unwrap(), geometric_indicator(&shifted).unwrap());
        }

        #[test]
        fn wlan_is_convex(a in prop::collection::btree_set((0usize..8, 0usize..8), 2..30),
                          b in prop::collection::btree_set((0usize..8, 0usize..8), 2..30)) {
            let ca = Cell::new(0, a);
            let cb = Cell::new(1, b);
            let (ga, gb) = (geometric_indicator(&ca).unwrap(), geometric_indicator(&cb).unwrap());
            let g = wlan_indicator(&[ca, cb]).unwrap();
            prop_assert!(g >= ga.min(gb) - 1e-12 && g <= ga.max(gb) + 1e-12);
        }
    }
}
