//! Output quantization: the abstract output map H_q and the static map Z
//! from concrete outputs to abstract symbols.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::{Convention, GridQuantizer, OutOfDomain};

const TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Snap {
    Inner,
    Outer,
}

impl Snap {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "inner" => Some(Snap::Inner),
            "outer" => Some(Snap::Outer),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputRelation {
    output_grid: GridQuantizer,
    coordinate: usize,
    axis: GridQuantizer,
    column_label: Vec<u32>,
    state_map: Vec<u32>,
}

fn is_integer(v: f64) -> bool {
    (v - v.round()).abs() <= TOL * v.abs().max(1.0)
}

/// Build H_q and Z for a coordinate-projection output map.
///
/// The output grid may be coarser than the state grid along the measured
/// axis (an integer multiple, boundaries on state boundaries) or finer (the
/// state width an integer multiple of the output width). In the finer case
/// each state column is labelled by the output cell holding its center.
pub fn build_output_relation(
    state_grid: &GridQuantizer,
    output_grid: &GridQuantizer,
    coordinate: usize,
) -> Result<OutputRelation> {
    if coordinate >= state_grid.dim() {
        return Err(Error::Config(format!(
            "output coordinate {coordinate} outside state dimension {}",
            state_grid.dim()
        )));
    }
    if output_grid.dim() != 1 {
        return Err(Error::Config("output grid must be one-dimensional".into()));
    }
    let es = state_grid.eta()[coordinate];
    let eo = output_grid.eta()[0];
    let coarse = eo / es;
    let fine = es / eo;
    let aligned = if coarse >= 1.0 - TOL {
        is_integer(coarse)
            && is_integer((state_grid.axis_interval(coordinate, 0).0 - output_grid.axis_interval(0, 0).0) / es)
    } else {
        // Finer output: column centers must sit on output cell centers.
        is_integer(fine)
            && is_integer((state_grid.axis_center(coordinate, 0) - output_grid.axis_center(0, 0)) / eo)
    };
    if !aligned {
        return Err(Error::Alignment {
            dim: coordinate,
            msg: format!("state width {es} and output width {eo} are not integer multiples with aligned boundaries"),
        });
    }
    let n_cols = state_grid.cells_per_dim()[coordinate];
    let axis = GridQuantizer::new(
        vec![state_grid.lower()[coordinate]],
        vec![es],
        vec![n_cols],
        state_grid.convention(),
    )?;
    let mut column_label = Vec::with_capacity(n_cols);
    for k in 0..n_cols {
        let (lo, hi) = axis.axis_interval(0, k);
        let c = axis.axis_center(0, k);
        let j = output_grid.axis_index(0, c).ok_or_else(|| Error::Alignment {
            dim: coordinate,
            msg: format!("state column {k} centered at {c} lies outside the output domain"),
        })?;
        if coarse >= 1.0 - TOL {
            let (olo, ohi) = output_grid.axis_interval(0, j);
            if lo < olo - TOL * es || hi > ohi + TOL * es {
                return Err(Error::Alignment {
                    dim: coordinate,
                    msg: format!("state column {k} straddles output cells"),
                });
            }
        }
        column_label.push(j as u32);
    }
    let state_map = (0..state_grid.num_cells())
        .map(|id| column_label[state_grid.multi_index(id)[coordinate]])
        .collect();
    let rel = OutputRelation {
        output_grid: output_grid.clone(),
        coordinate,
        axis,
        column_label,
        state_map,
    };
    rel.check_alignment()?;
    Ok(rel)
}

impl OutputRelation {
    pub fn output_grid(&self) -> &GridQuantizer {
        &self.output_grid
    }

    pub fn coordinate(&self) -> usize {
        self.coordinate
    }

    pub fn num_symbols(&self) -> usize {
        self.output_grid.num_cells()
    }

    /// H_q as a table over state cells.
    pub fn state_map(&self) -> &[u32] {
        &self.state_map
    }

    pub fn h_q(&self, cell: usize) -> u32 {
        self.state_map[cell]
    }

    /// Z: concrete output to abstract symbol.
    pub fn z(&self, y: f64) -> std::result::Result<u32, OutOfDomain> {
        self.axis
            .axis_index(0, y)
            .map(|k| self.column_label[k])
            .ok_or(OutOfDomain)
    }

    /// Symbols that are images of some state cell, ascending.
    pub fn used_symbols(&self) -> Vec<u32> {
        let mut v = self.column_label.clone();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Closed interval of concrete outputs mapped to `symbol`, or `None` if
    /// no state column carries it.
    pub fn symbol_region(&self, symbol: u32) -> Option<(f64, f64)> {
        let cols: Vec<usize> = (0..self.column_label.len())
            .filter(|&k| self.column_label[k] == symbol)
            .collect();
        let first = *cols.first()?;
        let last = *cols.last()?;
        Some((self.axis.axis_interval(0, first).0, self.axis.axis_interval(0, last).1))
    }

    /// Alignment condition: for each used symbol, the columns carrying it are
    /// contiguous, so the union of their projections is a single interval
    /// that Z maps back onto the symbol.
    pub fn check_alignment(&self) -> Result<()> {
        for s in self.used_symbols() {
            let cols: Vec<usize> = (0..self.column_label.len())
                .filter(|&k| self.column_label[k] == s)
                .collect();
            if cols.windows(2).any(|w| w[1] != w[0] + 1) {
                return Err(Error::Alignment {
                    dim: self.coordinate,
                    msg: format!("preimage of symbol {s} is not contiguous"),
                });
            }
        }
        Ok(())
    }

    /// Convert a concrete interval to a symbol set. Inner keeps symbols whose
    /// region lies inside the interval; outer keeps symbols whose region
    /// overlaps it with positive length.
    pub fn snap_interval(&self, lo: f64, hi: f64, snap: Snap) -> Result<Vec<u32>> {
        if !(lo <= hi) {
            return Err(Error::Config(format!("empty target interval [{lo}, {hi}]")));
        }
        let slack = TOL * self.axis.eta()[0];
        let out: Vec<u32> = self
            .used_symbols()
            .into_iter()
            .filter(|&s| {
                let (a, b) = self.symbol_region(s).expect("used symbol");
                match snap {
                    Snap::Inner => a >= lo - slack && b <= hi + slack,
                    Snap::Outer => a < hi - slack && b > lo + slack,
                }
            })
            .collect();
        if out.is_empty() {
            return Err(Error::Config(format!(
                "interval [{lo}, {hi}] covers no output symbol under {} snapping",
                match snap {
                    Snap::Inner => "inner",
                    Snap::Outer => "outer",
                }
            )));
        }
        Ok(out)
    }

    /// `z y_index cell_low cell_high` lines for every used symbol.
    pub fn table_text(&self) -> String {
        let mut s = String::new();
        for y in self.used_symbols() {
            let (a, b) = self.symbol_region(y).expect("used symbol");
            let _ = writeln!(s, "z {y} {a} {b}");
        }
        s
    }

    pub fn convention(&self) -> Convention {
        self.axis.convention()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_state_grid;

    fn dc_state() -> GridQuantizer {
        build_state_grid(&[-0.6, -0.3, -4.8], &[0.6, 0.3, 4.8], &[0.3, 0.02, 1.6], Convention::Centered).unwrap()
    }

    #[test]
    fn dcmotor_bijective_axis() {
        let out = build_state_grid(&[-0.3], &[0.3], &[0.02], Convention::Centered).unwrap();
        let r = build_output_relation(&dc_state(), &out, 1).unwrap();
        assert_eq!(r.num_symbols(), 31);
        let g = dc_state();
        for id in 0..g.num_cells() {
            assert_eq!(r.h_q(id) as usize, g.multi_index(id)[1]);
        }
        assert_eq!(r.z(0.2), Ok(25));
        assert_eq!(r.used_symbols().len(), 31);
    }

    #[test]
    fn pendulum_fine_output() {
        let s = build_state_grid(&[-1.0, -1.0], &[1.0, 1.0], &[0.4, 0.4], Convention::Partition).unwrap();
        let o = build_state_grid(&[-1.0], &[1.0], &[0.04], Convention::Centered).unwrap();
        assert_eq!(o.num_cells(), 51);
        let r = build_output_relation(&s, &o, 0).unwrap();
        assert_eq!(r.used_symbols(), vec![5, 15, 25, 35, 45]);
        assert_eq!(r.z(0.35), Ok(35));
        assert_eq!(r.z(-0.35), Ok(15));
        assert_eq!(r.snap_interval(0.3, 0.4, Snap::Outer).unwrap(), vec![35]);
        assert!(r.snap_interval(0.3, 0.4, Snap::Inner).is_err());
        for id in 0..s.num_cells() {
            let c = s.center(id);
            assert_eq!(r.z(c[0]), Ok(r.h_q(id)));
        }
    }

    #[test]
    fn coarse_output_aligned_and_misaligned() {
        let s = build_state_grid(&[-1.0, -5.0], &[1.0, 5.0], &[0.04, 0.02], Convention::Partition).unwrap();
        let o = build_state_grid(&[-1.0], &[1.0], &[0.08], Convention::Partition).unwrap();
        let r = build_output_relation(&s, &o, 0).unwrap();
        assert_eq!(r.used_symbols().len(), 25);
        let bad = build_state_grid(&[-0.98], &[0.98], &[0.07], Convention::Partition);
        if let Ok(bad) = bad {
            assert!(matches!(build_output_relation(&s, &bad, 0), Err(Error::Alignment { dim: 0, .. })));
        }
        let shifted = GridQuantizer::new(vec![-0.98], vec![0.08], vec![24], Convention::Partition).unwrap();
        assert!(matches!(build_output_relation(&s, &shifted, 0), Err(Error::Alignment { dim: 0, .. })));
    }

    #[test]
    fn inner_snap_double_integrator_targets() {
        let s = build_state_grid(&[-1.0, -5.0], &[1.0, 5.0], &[0.04, 0.02], Convention::Partition).unwrap();
        let o = build_state_grid(&[-1.0], &[1.0], &[0.04], Convention::Partition).unwrap();
        let r = build_output_relation(&s, &o, 0).unwrap();
        let t1 = r.snap_interval(0.65, 1.0, Snap::Inner).unwrap();
        assert_eq!(t1.first(), Some(&42));
        assert_eq!(t1.last(), Some(&49));
        let t2 = r.snap_interval(-1.0, -0.65, Snap::Inner).unwrap();
        assert_eq!(t2, (0..8).collect::<Vec<u32>>());
    }

    #[test]
    fn table_lines() {
        let s = build_state_grid(&[0.0], &[1.0], &[0.5], Convention::Partition).unwrap();
        let r = build_output_relation(&s, &s, 0).unwrap();
        assert_eq!(r.table_text(), "z 0 0 0.5\nz 1 0.5 1\n");
    }
}
