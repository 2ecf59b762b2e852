//! Node placement in a square simulation area with wrap-around distances.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("{0} is not a perfect square")]
    NotPerfectSquare(usize),
    #[error("{groups} groups need one cell each but only {cells} cells exist")]
    TooManyGroups { groups: usize, cells: usize },
    #[error("area side must be positive, got {0}")]
    InvalidArea(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn euclidean(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Square simulation area `[0, side)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Area {
    side_m: f64,
}

impl Area {
    pub fn new(side_m: f64) -> Result<Self, TopologyError> {
        if side_m > 0.0 && side_m.is_finite() {
            Ok(Self { side_m })
        } else {
            Err(TopologyError::InvalidArea(side_m))
        }
    }

    pub fn side(&self) -> f64 {
        self.side_m
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0.0..self.side_m).contains(&p.x) && (0.0..self.side_m).contains(&p.y)
    }
}

/// How devices of each group are spread over the area.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DistributionMode {
    /// Devices of group `g` are uniform inside cell `g`.
    Mode1,
    /// All devices are uniform over the whole area.
    Mode2,
}

pub fn integer_sqrt(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

/// `count` points on a uniform `√count × √count` grid, one at the centre of
/// each grid cell. Index `row * √count + col` sits at
/// `((col + ½)·w, (row + ½)·w)` with `w = side / √count`.
pub fn place_aps_grid(count: usize, area: Area) -> Result<Vec<Point>, TopologyError> {
    let per_side = integer_sqrt(count)
        .filter(|&s| s > 0)
        .ok_or(TopologyError::NotPerfectSquare(count))?;
    let w = area.side() / per_side as f64;
    Ok((0..count)
        .map(|i| {
            let (row, col) = (i / per_side, i % per_side);
            Point::new((col as f64 + 0.5) * w, (row as f64 + 0.5) * w)
        })
        .collect())
}

/// Lower-left corner and side length of square cell `index` out of `cells`.
pub fn cell_bounds(index: usize, cells: usize, area: Area) -> Result<(Point, f64), TopologyError> {
    let per_side = integer_sqrt(cells)
        .filter(|&s| s > 0)
        .ok_or(TopologyError::NotPerfectSquare(cells))?;
    let w = area.side() / per_side as f64;
    let (row, col) = (index / per_side, index % per_side);
    Ok((Point::new(col as f64 * w, row as f64 * w), w))
}

/// Draws device positions. Devices are indexed group by group, so group `g`
/// owns the contiguous range after the first `g` groups.
pub fn place_devices<R: Rng + ?Sized>(
    mode: DistributionMode,
    group_sizes: &[usize],
    area: Area,
    cells: usize,
    rng: &mut R,
) -> Result<(Vec<Point>, Vec<usize>), TopologyError> {
    if mode == DistributionMode::Mode1 && group_sizes.len() > cells {
        return Err(TopologyError::TooManyGroups {
            groups: group_sizes.len(),
            cells,
        });
    }
    let total: usize = group_sizes.iter().sum();
    let mut positions = Vec::with_capacity(total);
    let mut groups = Vec::with_capacity(total);
    for (g, &size) in group_sizes.iter().enumerate() {
        let (origin, w) = match mode {
            DistributionMode::Mode1 => cell_bounds(g, cells, area)?,
            DistributionMode::Mode2 => (Point::new(0.0, 0.0), area.side()),
        };
        for _ in 0..size {
            let x = origin.x + rng.random_range(0.0..w);
            let y = origin.y + rng.random_range(0.0..w);
            positions.push(Point::new(x.min(area.side().next_down()), y.min(area.side().next_down())));
            groups.push(g);
        }
    }
    Ok((positions, groups))
}

/// Displacement from `from` to the nearest wrapped copy of `to`.
pub fn wrap_offset(from: Point, to: Point, area: Area) -> (f64, f64) {
    let side = area.side();
    let fold = |d: f64| {
        [d - side, d, d + side]
            .into_iter()
            .min_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(d)
    };
    (fold(to.x - from.x), fold(to.y - from.y))
}

/// Minimum distance over the nine translated copies of `b`.
pub fn wrap_distance(a: Point, b: Point, area: Area) -> f64 {
    let (dx, dy) = wrap_offset(a, b, area);
    dx.hypot(dy)
}

/// Where every node sits, plus group membership.
#[derive(Debug, Clone)]
pub struct NetworkGeometry {
    pub area: Area,
    pub ap_positions: Vec<Point>,
    pub bs_positions: Vec<Point>,
    pub device_positions: Vec<Point>,
    pub group_of_device: Vec<usize>,
    pub cells: usize,
}

impl NetworkGeometry {
    /// Grid APs, one BS at the centre of every cell, and randomly placed devices.
    pub fn generate<R: Rng + ?Sized>(
        area: Area,
        aps: usize,
        cells: usize,
        mode: DistributionMode,
        group_sizes: &[usize],
        rng: &mut R,
    ) -> Result<Self, TopologyError> {
        let ap_positions = place_aps_grid(aps, area)?;
        let bs_positions = place_aps_grid(cells, area)?;
        let (device_positions, group_of_device) =
            place_devices(mode, group_sizes, area, cells, rng)?;
        Ok(Self {
            area,
            ap_positions,
            bs_positions,
            device_positions,
            group_of_device,
            cells,
        })
    }

    pub fn devices(&self) -> usize {
        self.device_positions.len()
    }

    pub fn groups(&self) -> usize {
        self.group_of_device.iter().max().map_or(0, |g| g + 1)
    }

    pub fn members(&self, group: usize) -> impl Iterator<Item = usize> + '_ {
        self.group_of_device
            .iter()
            .enumerate()
            .filter(move |(_, &g)| g == group)
            .map(|(k, _)| k)
    }
}
