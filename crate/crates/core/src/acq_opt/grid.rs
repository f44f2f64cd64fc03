use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::set_gp::Lattice;
use crate::wake::{Layout, Turbine};

/// Candidate turbine positions: cell `(i, j)` sits at `origin + (j·pitch, i·pitch)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec<F> {
    pub rows: usize,
    pub cols: usize,
    /// m
    pub pitch: F,
    /// m
    pub min_spacing: F,
    pub origin: (F, F),
}

impl<F: Scalar> Default for GridSpec<F> {
    fn default() -> Self {
        GridSpec {
            rows: 20,
            cols: 20,
            pitch: F::lit(246.0),
            min_spacing: F::lit(246.0),
            origin: (F::zero(), F::zero()),
        }
    }
}

impl<F: Scalar> GridSpec<F> {
    pub fn new(rows: usize, cols: usize, pitch: F, min_spacing: F) -> Result<Self> {
        let g = GridSpec {
            rows,
            cols,
            pitch,
            min_spacing,
            origin: (F::zero(), F::zero()),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::param("grid needs at least one row and one column"));
        }
        if !(self.pitch > F::zero()) || !self.pitch.is_finite() {
            return Err(Error::param(format!("grid pitch must be positive, got {}", self.pitch)));
        }
        if !(self.min_spacing >= F::zero()) || !self.min_spacing.is_finite() {
            return Err(Error::param(format!(
                "minimum spacing must be non-negative, got {}",
                self.min_spacing
            )));
        }
        if !self.origin.0.is_finite() || !self.origin.1.is_finite() {
            return Err(Error::param("grid origin must be finite"));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn position(&self, cell: usize) -> Turbine<F> {
        let (i, j) = (cell / self.cols, cell % self.cols);
        Turbine::new(
            self.origin.0 + F::from_usize_lossy(j) * self.pitch,
            self.origin.1 + F::from_usize_lossy(i) * self.pitch,
        )
    }

    pub fn to_lattice(&self) -> Lattice<F> {
        Lattice {
            origin: self.origin,
            pitch: self.pitch,
        }
    }

    /// Whether cells `(Δrow, Δcol)` apart are closer than the minimum spacing.
    fn too_close(&self, dr: usize, dc: usize) -> bool {
        let d2 = F::from_usize_lossy(dr * dr + dc * dc);
        (d2.sqrt() * self.pitch) < self.min_spacing
    }

    /// Non-zero offsets `(Δrow, Δcol)` (both signs) that violate the spacing.
    fn conflict_offsets(&self) -> Vec<(isize, isize)> {
        let mut out = Vec::new();
        for dr in 0..self.rows {
            for dc in 0..self.cols {
                if (dr, dc) != (0, 0) && self.too_close(dr, dc) {
                    for (sr, sc) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
                        let o = (sr * dr as isize, sc * dc as isize);
                        if !out.contains(&o) {
                            out.push(o);
                        }
                    }
                }
            }
        }
        out
    }
}

/// Presence bits over the grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Genome {
    bits: Vec<bool>,
}

impl Genome {
    pub fn new(bits: Vec<bool>) -> Self {
        Genome { bits }
    }

    pub fn zeros(len: usize) -> Self {
        Genome {
            bits: vec![false; len],
        }
    }

    pub fn from_cells(len: usize, cells: &[usize]) -> Self {
        let mut g = Self::zeros(len);
        for &c in cells {
            g.bits[c] = true;
        }
        g
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, cell: usize) -> bool {
        self.bits[cell]
    }

    pub fn set(&mut self, cell: usize, value: bool) {
        self.bits[cell] = value;
    }

    pub fn flip(&mut self, cell: usize) {
        self.bits[cell] = !self.bits[cell];
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Indices of set bits in increasing order.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }
}

impl From<Genome> for String {
    fn from(g: Genome) -> String {
        g.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

impl TryFrom<String> for Genome {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Encoding(format!("genome character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Genome::new)
    }
}

impl std::fmt::Display for Genome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

fn check_len<F: Scalar>(genome: &Genome, grid: &GridSpec<F>) -> Result<()> {
    if genome.len() != grid.cells() {
        return Err(Error::DimensionMismatch {
            expected: grid.cells(),
            found: genome.len(),
        });
    }
    Ok(())
}

pub fn decode<F: Scalar>(genome: &Genome, grid: &GridSpec<F>) -> Result<Layout<F>> {
    check_len(genome, grid)?;
    if genome.popcount() == 0 {
        return Err(Error::Encoding("all-zero genome has no turbines".into()));
    }
    Ok(Layout::new(genome.ones().map(|c| grid.position(c)).collect()))
}

/// Snaps each turbine to its nearest cell. Turbines more than half a pitch
/// from every cell, or two turbines sharing a cell, are errors.
pub fn encode<F: Scalar>(layout: &Layout<F>, grid: &GridSpec<F>) -> Result<Genome> {
    let mut g = Genome::zeros(grid.cells());
    let half = F::lit(0.5);
    for t in layout.turbines() {
        let u = (t.x - grid.origin.0) / grid.pitch;
        let v = (t.y - grid.origin.1) / grid.pitch;
        let (j, i) = (u.round(), v.round());
        let off_grid = (u - j).abs() > half
            || (v - i).abs() > half
            || j < F::zero()
            || i < F::zero()
            || j >= F::from_usize_lossy(grid.cols)
            || i >= F::from_usize_lossy(grid.rows);
        if off_grid || !u.is_finite() || !v.is_finite() {
            return Err(Error::Encoding(format!(
                "turbine at ({}, {}) is not within half a pitch of a grid cell",
                t.x, t.y
            )));
        }
        let cell = i.to_usize().unwrap() * grid.cols + j.to_usize().unwrap();
        if g.get(cell) {
            return Err(Error::Encoding(format!(
                "two turbines snap to cell ({}, {})",
                cell / grid.cols,
                cell % grid.cols
            )));
        }
        g.set(cell, true);
    }
    Ok(g)
}

/// At least one turbine and every pair at least `min_spacing` apart.
pub fn feasible<F: Scalar>(genome: &Genome, grid: &GridSpec<F>) -> bool {
    if genome.len() != grid.cells() || genome.popcount() == 0 {
        return false;
    }
    let offsets = grid.conflict_offsets();
    genome.ones().all(|c| violations(genome, grid, &offsets, c) == 0)
}

fn violations<F: Scalar>(genome: &Genome, grid: &GridSpec<F>, offsets: &[(isize, isize)], cell: usize) -> usize {
    let (i, j) = ((cell / grid.cols) as isize, (cell % grid.cols) as isize);
    offsets
        .iter()
        .filter(|&&(dr, dc)| {
            let (r, c) = (i + dr, j + dc);
            r >= 0
                && c >= 0
                && (r as usize) < grid.rows
                && (c as usize) < grid.cols
                && genome.get(r as usize * grid.cols + c as usize)
        })
        .count()
}

/// Makes `genome` feasible. While some pair is too close, clears the set bit
/// involved in the most violations (lowest index on ties). An all-zero genome
/// gets one uniformly random bit instead.
pub fn repair<F: Scalar>(genome: &mut Genome, grid: &GridSpec<F>, rng: &mut Rng) {
    debug_assert_eq!(genome.len(), grid.cells());
    if genome.popcount() == 0 {
        let c = rng.random_range(0..grid.cells());
        genome.set(c, true);
        return;
    }
    let offsets = grid.conflict_offsets();
    if offsets.is_empty() {
        return;
    }
    loop {
        let worst = genome
            .ones()
            .map(|c| (violations(genome, grid, &offsets, c), c))
            .filter(|&(v, _)| v > 0)
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        match worst {
            Some((_, c)) => genome.set(c, false),
            None => break,
        }
    }
}

/// Uniform cardinality in `[min_count, cells]`, then uniformly chosen cells.
pub fn random_genome<F: Scalar>(grid: &GridSpec<F>, min_count: usize, rng: &mut Rng) -> Result<Genome> {
    let n = grid.cells();
    if min_count > n {
        return Err(Error::param(format!(
            "cannot place {min_count} turbines on a grid with {n} cells"
        )));
    }
    let k = rng.random_range(min_count.max(1)..=n);
    let cells = rand::seq::index::sample(rng, n, k);
    Ok(Genome::from_cells(n, &cells.into_vec()))
}
