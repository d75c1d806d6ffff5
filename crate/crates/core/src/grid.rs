//! Uniform hyper-rectangular grids over real boxes.

use crate::error::{Error, Result};

const TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Convention {
    /// Half-open cells `[lb + i·η, lb + (i+1)·η)` tiling the box; the upper
    /// face is closed into the last cell.
    Partition,
    /// Cells of radius η/2 centered at `lb + i·η`; points go to the nearest
    /// center, ties toward the lower index.
    Centered,
}

impl Convention {
    pub fn name(self) -> &'static str {
        match self {
            Convention::Partition => "partition",
            Convention::Centered => "centered",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "partition" => Some(Convention::Partition),
            "centered" => Some(Convention::Centered),
            _ => None,
        }
    }
}

/// Closed axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct Rect {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Rect {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Rect { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn radius(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(a, b)| 0.5 * (b - a)).collect()
    }

    pub fn from_center(c: &[f64], r: &[f64]) -> Self {
        Rect {
            lower: c.iter().zip(r).map(|(c, r)| c - r).collect(),
            upper: c.iter().zip(r).map(|(c, r)| c + r).collect(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        (0..self.dim()).all(|i| self.lower[i] <= other.lower[i] && other.upper[i] <= self.upper[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutOfDomain;

#[derive(Debug, Clone, PartialEq)]
pub struct GridQuantizer {
    lower: Vec<f64>,
    eta: Vec<f64>,
    cells: Vec<usize>,
    convention: Convention,
}

impl GridQuantizer {
    pub fn new(lower: Vec<f64>, eta: Vec<f64>, cells: Vec<usize>, convention: Convention) -> Result<Self> {
        if lower.is_empty() || lower.len() != eta.len() || eta.len() != cells.len() {
            return Err(Error::Config("grid vectors must be nonempty and of equal length".into()));
        }
        for (i, (&e, &n)) in eta.iter().zip(&cells).enumerate() {
            if !(e > 0.0 && e.is_finite()) || n == 0 {
                return Err(Error::Config(format!(
                    "dimension {i}: cell width must be positive and count at least 1"
                )));
            }
        }
        if lower.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("grid origin must be finite".into()));
        }
        Ok(GridQuantizer {
            lower,
            eta,
            cells,
            convention,
        })
    }

    pub fn dim(&self) -> usize {
        self.eta.len()
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn cells_per_dim(&self) -> &[usize] {
        &self.cells
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn num_cells(&self) -> usize {
        self.cells.iter().product()
    }

    /// Hull of all cells: the box itself for partitions, the box widened by
    /// η/2 for centered grids.
    pub fn domain(&self) -> Rect {
        let mut lo = Vec::with_capacity(self.dim());
        let mut hi = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            match self.convention {
                Convention::Partition => {
                    lo.push(self.lower[i]);
                    hi.push(self.lower[i] + self.cells[i] as f64 * self.eta[i]);
                }
                Convention::Centered => {
                    lo.push(self.lower[i] - 0.5 * self.eta[i]);
                    hi.push(self.lower[i] + (self.cells[i] as f64 - 0.5) * self.eta[i]);
                }
            }
        }
        Rect::new(lo, hi)
    }

    /// Flat id with dimension 0 varying fastest.
    pub fn flat(&self, idx: &[usize]) -> usize {
        let mut id = 0;
        for i in (0..self.dim()).rev() {
            id = id * self.cells[i] + idx[i];
        }
        id
    }

    pub fn multi_index(&self, mut id: usize) -> Vec<usize> {
        let mut idx = Vec::with_capacity(self.dim());
        for &n in &self.cells {
            idx.push(id % n);
            id /= n;
        }
        idx
    }

    /// Index along one axis, or `None` outside the domain hull.
    pub fn axis_index(&self, dim: usize, v: f64) -> Option<usize> {
        let n = self.cells[dim];
        let t = (v - self.lower[dim]) / self.eta[dim];
        if !t.is_finite() {
            return None;
        }
        match self.convention {
            Convention::Partition => {
                if t < 0.0 || t > n as f64 {
                    return None;
                }
                Some((t.floor() as usize).min(n - 1))
            }
            Convention::Centered => {
                if t < -0.5 || t > n as f64 - 0.5 {
                    return None;
                }
                let i = (t - 0.5).ceil().max(0.0) as usize;
                Some(i.min(n - 1))
            }
        }
    }

    pub fn quantize(&self, x: &[f64]) -> std::result::Result<usize, OutOfDomain> {
        if x.len() != self.dim() {
            return Err(OutOfDomain);
        }
        let mut id = 0;
        for i in (0..self.dim()).rev() {
            let k = self.axis_index(i, x[i]).ok_or(OutOfDomain)?;
            id = id * self.cells[i] + k;
        }
        Ok(id)
    }

    pub fn axis_center(&self, dim: usize, k: usize) -> f64 {
        match self.convention {
            Convention::Partition => self.lower[dim] + (k as f64 + 0.5) * self.eta[dim],
            Convention::Centered => self.lower[dim] + k as f64 * self.eta[dim],
        }
    }

    /// Closed interval of cell `k` along `dim`.
    pub fn axis_interval(&self, dim: usize, k: usize) -> (f64, f64) {
        let c = self.axis_center(dim, k);
        let r = 0.5 * self.eta[dim];
        (c - r, c + r)
    }

    pub fn center(&self, id: usize) -> Vec<f64> {
        self.multi_index(id)
            .iter()
            .enumerate()
            .map(|(d, &k)| self.axis_center(d, k))
            .collect()
    }

    pub fn cell_box(&self, id: usize) -> Result<Rect> {
        let n = self.num_cells();
        if id >= n {
            return Err(Error::InvalidId { kind: "cell", id, len: n });
        }
        let c = self.center(id);
        let r: Vec<f64> = self.eta.iter().map(|e| 0.5 * e).collect();
        Ok(Rect::from_center(&c, &r))
    }

    /// Inclusive index range of cells along `dim` whose closed hull meets
    /// `[lo, hi]`, clipped to the grid.
    pub fn axis_overlap(&self, dim: usize, lo: f64, hi: f64) -> Option<(usize, usize)> {
        let n = self.cells[dim] as i64;
        let (off, e) = match self.convention {
            Convention::Partition => (0.0, self.eta[dim]),
            Convention::Centered => (0.5, self.eta[dim]),
        };
        let a = ((lo - self.lower[dim]) / e + off - 1.0).ceil() as i64;
        let b = ((hi - self.lower[dim]) / e + off).floor() as i64;
        let a = a.max(0);
        let b = b.min(n - 1);
        if a > b {
            None
        } else {
            Some((a as usize, b as usize))
        }
    }
}

fn count_cells(dim: usize, width: f64, eta: f64, convention: Convention) -> Result<usize> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::Config(format!("dimension {dim}: eta must be positive")));
    }
    if !(width >= 0.0) || !width.is_finite() {
        return Err(Error::Config(format!("dimension {dim}: empty or non-finite bounds")));
    }
    let t = width / eta;
    match convention {
        Convention::Partition => {
            let r = t.round();
            if (t - r).abs() > TOL * t.max(1.0) || r < 1.0 {
                return Err(Error::Config(format!(
                    "dimension {dim}: width {width} is not a multiple of eta {eta}"
                )));
            }
            Ok(r as usize)
        }
        Convention::Centered => Ok((t + TOL * t.max(1.0)).floor() as usize + 1),
    }
}

/// State grid over the box `[lower, upper]`.
pub fn build_state_grid(lower: &[f64], upper: &[f64], eta: &[f64], convention: Convention) -> Result<GridQuantizer> {
    if lower.len() != upper.len() || lower.len() != eta.len() || lower.is_empty() {
        return Err(Error::Config("bounds and eta must have equal nonzero length".into()));
    }
    let cells = (0..lower.len())
        .map(|i| count_cells(i, upper[i] - lower[i], eta[i], convention))
        .collect::<Result<Vec<_>>>()?;
    GridQuantizer::new(lower.to_vec(), eta.to_vec(), cells, convention)
}

/// Input grid: the integer multiples of η inside `[lower, upper]` per
/// dimension, as a centered grid.
pub fn build_input_grid(lower: &[f64], upper: &[f64], eta: &[f64]) -> Result<GridQuantizer> {
    if lower.len() != upper.len() || lower.len() != eta.len() || lower.is_empty() {
        return Err(Error::Config("input bounds and eta must have equal nonzero length".into()));
    }
    let mut lo = Vec::new();
    let mut cells = Vec::new();
    for i in 0..lower.len() {
        if !(eta[i] > 0.0) || !(upper[i] >= lower[i]) {
            return Err(Error::Config(format!("input dimension {i}: invalid bounds or eta")));
        }
        let a = (lower[i] / eta[i] - TOL).ceil();
        let b = (upper[i] / eta[i] + TOL).floor();
        if b < a {
            return Err(Error::Config(format!(
                "input dimension {i}: no multiple of {} inside [{}, {}]",
                eta[i], lower[i], upper[i]
            )));
        }
        lo.push(a * eta[i]);
        cells.push((b - a) as usize + 1);
    }
    GridQuantizer::new(lo, eta.to_vec(), cells, Convention::Centered)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pend() -> GridQuantizer {
        build_state_grid(&[-1.0, -1.0], &[1.0, 1.0], &[0.4, 0.4], Convention::Partition).unwrap()
    }

    #[test]
    fn pendulum_grid_has_25_cells() {
        assert_eq!(pend().num_cells(), 25);
    }

    #[test]
    fn dcmotor_grid_has_1085_cells() {
        let g = build_state_grid(&[-0.6, -0.3, -4.8], &[0.6, 0.3, 4.8], &[0.3, 0.02, 1.6], Convention::Centered)
            .unwrap();
        assert_eq!(g.cells_per_dim(), &[5, 31, 7]);
        assert_eq!(g.num_cells(), 1085);
        let b = g.cell_box(0).unwrap();
        let c = b.center();
        let r = b.radius();
        for (v, e) in c.iter().zip([-0.6, -0.3, -4.8]) {
            assert!((v - e).abs() < 1e-12);
        }
        for (v, e) in r.iter().zip([0.15, 0.01, 0.8]) {
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn one_cell() {
        let g = build_state_grid(&[0.0], &[1.0], &[1.0], Convention::Partition).unwrap();
        assert_eq!(g.num_cells(), 1);
    }

    #[test]
    fn non_divisible_partition_rejected() {
        assert!(matches!(
            build_state_grid(&[0.0], &[1.0], &[0.3], Convention::Partition),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn quantize_boundaries() {
        let g = build_state_grid(&[-1.0], &[1.0], &[0.4], Convention::Partition).unwrap();
        assert_eq!(g.quantize(&[-1.0]), Ok(0));
        assert_eq!(g.quantize(&[0.39]), Ok(3));
        assert_eq!(g.quantize(&[1.0]), Ok(4));
        assert_eq!(g.quantize(&[1.5]), Err(OutOfDomain));
        assert_eq!(g.quantize(&[-1.0000001]), Err(OutOfDomain));
    }

    #[test]
    fn centered_tie_goes_lower() {
        let g = build_state_grid(&[0.0], &[2.0], &[1.0], Convention::Centered).unwrap();
        assert_eq!(g.num_cells(), 3);
        assert_eq!(g.quantize(&[0.5]), Ok(0));
        assert_eq!(g.quantize(&[0.51]), Ok(1));
        assert_eq!(g.quantize(&[-0.5]), Ok(0));
        assert_eq!(g.quantize(&[2.5]), Ok(2));
        assert_eq!(g.quantize(&[2.51]), Err(OutOfDomain));
    }

    #[test]
    fn partition_cell_box() {
        let g = build_state_grid(&[-1.0], &[1.0], &[0.4], Convention::Partition).unwrap();
        let b = g.cell_box(0).unwrap();
        assert!((b.lower[0] + 1.0).abs() < 1e-12 && (b.upper[0] + 0.6).abs() < 1e-12);
        assert!(matches!(g.cell_box(5), Err(Error::InvalidId { .. })));
    }

    #[test]
    fn input_grid_multiples() {
        let g = build_input_grid(&[-4.25], &[4.25], &[0.75]).unwrap();
        assert_eq!(g.num_cells(), 11);
        assert!((g.center(5)[0]).abs() < 1e-12);
        assert!((g.center(0)[0] + 3.75).abs() < 1e-12);
        let g = build_input_grid(&[-1.5], &[1.5], &[0.15]).unwrap();
        assert_eq!(g.num_cells(), 21);
        let g = build_input_grid(&[-10.0], &[10.0], &[2.0]).unwrap();
        assert_eq!(g.num_cells(), 11);
    }

    #[test]
    fn overlap_ranges() {
        let g = pend();
        assert_eq!(g.axis_overlap(0, -0.6, -0.6), Some((0, 1)));
        assert_eq!(g.axis_overlap(0, -0.5, 0.1), Some((1, 2)));
        assert_eq!(g.axis_overlap(0, 1.2, 1.3), None);
        let c = build_state_grid(&[0.0], &[2.0], &[1.0], Convention::Centered).unwrap();
        assert_eq!(c.axis_overlap(0, 0.5, 0.5), Some((0, 1)));
        assert_eq!(c.axis_overlap(0, 0.6, 1.4), Some((1, 1)));
    }
}
