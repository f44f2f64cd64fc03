use crate::error::{Error, Result};
use crate::objectives::cost;
use crate::pareto::PredictiveBox;
use crate::scalar::Scalar;
use crate::set_gp::SetGpModel;

use super::grid::{encode, GridSpec, Genome};

/// Per-objective predictive distribution of a genome's decoded layout.
pub trait GenomePredictor<F>: Sync {
    fn predict(&self, genome: &Genome) -> Result<PredictiveBox<F>>;
}

/// Adapts a closure.
pub struct FnPredictor<G>(pub G);

impl<F, G> GenomePredictor<F> for FnPredictor<G>
where
    G: Fn(&Genome) -> PredictiveBox<F> + Sync,
{
    fn predict(&self, genome: &Genome) -> Result<PredictiveBox<F>> {
        Ok((self.0)(genome))
    }
}

/// Set-GP posterior for layouts on a grid whose training sets lie on the same grid.
///
/// The base kernel on a lattice factorises as `e_r(|Δrow|)·e_c(|Δcol|)`, so the
/// kernel sum of every cell against training set `i` is one separable
/// convolution of that set's indicator. Predicting a genome then needs only
/// table lookups plus one triangular solve.
#[derive(Debug, Clone)]
pub struct GridGp<'m, F> {
    model: &'m SetGpModel<F>,
    rows: usize,
    cols: usize,
    e_row: Vec<F>,
    e_col: Vec<F>,
    // cell_sums[i * cells + c] = Σ_{t ∈ X_i} exp(−‖c − t‖²/2l²) / |X_i|
    cell_sums: Vec<F>,
}

impl<'m, F: Scalar> GridGp<'m, F> {
    pub fn new(model: &'m SetGpModel<F>, grid: &GridSpec<F>) -> Result<Self> {
        let h = model.hyperparams();
        let scale = grid.pitch * grid.pitch / (F::lit(2.0) * h.length_scale * h.length_scale);
        let table = |n: usize| -> Vec<F> {
            (0..n)
                .map(|k| (-F::from_usize_lossy(k * k) * scale).exp())
                .collect()
        };
        let (e_row, e_col) = (table(grid.rows), table(grid.cols));
        let cells = grid.cells();
        let mut cell_sums = Vec::with_capacity(model.training_sets().len() * cells);
        for set in model.training_sets() {
            let g = encode(set, grid)?;
            let inv = F::one() / F::from_usize_lossy(g.popcount());
            // along columns first, then rows
            let mut partial = vec![F::zero(); cells];
            for t in g.ones() {
                let (ti, tj) = (t / grid.cols, t % grid.cols);
                for j in 0..grid.cols {
                    partial[ti * grid.cols + j] = partial[ti * grid.cols + j] + e_col[j.abs_diff(tj)];
                }
            }
            for i in 0..grid.rows {
                for j in 0..grid.cols {
                    let s: F = (0..grid.rows)
                        .map(|r| e_row[i.abs_diff(r)] * partial[r * grid.cols + j])
                        .sum();
                    cell_sums.push(s * inv);
                }
            }
        }
        Ok(GridGp {
            model,
            rows: grid.rows,
            cols: grid.cols,
            e_row,
            e_col,
            cell_sums,
        })
    }

    /// Posterior in normalised units, variance unclamped.
    pub fn posterior_normalized(&self, genome: &Genome) -> Result<(F, F)> {
        let cells = self.rows * self.cols;
        if genome.len() != cells {
            return Err(Error::DimensionMismatch {
                expected: cells,
                found: genome.len(),
            });
        }
        let ones: Vec<usize> = genome.ones().collect();
        if ones.is_empty() {
            return Err(Error::EmptySet);
        }
        let amp = self.model.hyperparams().amplitude;
        let inv = F::one() / F::from_usize_lossy(ones.len());
        let cross: Vec<F> = (0..self.model.training_sets().len())
            .map(|i| {
                let row = &self.cell_sums[i * cells..(i + 1) * cells];
                amp * inv * ones.iter().map(|&c| row[c]).sum::<F>()
            })
            .collect();

        // Σ_{a,b} e_r e_c over pairs of set cells, via per-row column sums.
        let mut col_conv = vec![F::zero(); cells];
        for &c in &ones {
            let (ci, cj) = (c / self.cols, c % self.cols);
            for j in 0..self.cols {
                col_conv[ci * self.cols + j] = col_conv[ci * self.cols + j] + self.e_col[j.abs_diff(cj)];
            }
        }
        let mut pair_sum = F::zero();
        for &c in &ones {
            let (ci, cj) = (c / self.cols, c % self.cols);
            for r in 0..self.rows {
                pair_sum = pair_sum + self.e_row[ci.abs_diff(r)] * col_conv[r * self.cols + cj];
            }
        }
        let self_k = amp * pair_sum * inv * inv;
        Ok(self.model.posterior_normalized(&cross, self_k))
    }

    pub fn model(&self) -> &SetGpModel<F> {
        self.model
    }
}

/// How one objective is predicted during acquisition.
#[derive(Debug, Clone)]
pub enum Surrogate<'m, F> {
    Gp(GridGp<'m, F>),
    /// Closed-form installation cost from the turbine count, with zero variance.
    ExactCost,
}

impl<F: Scalar> Surrogate<'_, F> {
    fn mean_std(&self, genome: &Genome) -> Result<(F, F)> {
        match self {
            Surrogate::Gp(gp) => {
                let (m, v) = gp.posterior_normalized(genome)?;
                let p = gp.model.denormalize(m, v);
                Ok((p.mean, p.std_dev()))
            }
            Surrogate::ExactCost => Ok((cost(genome.popcount()), F::zero())),
        }
    }
}

/// One surrogate per objective, in canonical minimisation order.
#[derive(Debug, Clone)]
pub struct Surrogates<'m, F>(pub Vec<Surrogate<'m, F>>);

impl<F: Scalar> GenomePredictor<F> for Surrogates<'_, F> {
    fn predict(&self, genome: &Genome) -> Result<PredictiveBox<F>> {
        let (mean, std_dev) = self
            .0
            .iter()
            .map(|s| s.mean_std(genome))
            .collect::<Result<(Vec<F>, Vec<F>)>>()?;
        PredictiveBox::new(mean, std_dev)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acq_opt::grid::{decode, random_genome};
    use crate::rng::rng_from_seed;
    use crate::set_gp::Hyperparams;

    #[test]
    fn grid_posterior_matches_direct_prediction() {
        let mut grid = GridSpec::<f64>::new(4, 5, 246.0, 246.0).unwrap();
        grid.origin = (100.0, -50.0);
        let mut rng = rng_from_seed(9);
        let genomes: Vec<Genome> = (0..12).map(|_| random_genome(&grid, 1, &mut rng).unwrap()).collect();
        let sets: Vec<_> = genomes.iter().map(|g| decode(g, &grid).unwrap()).collect();
        let y: Vec<f64> = sets.iter().map(|s| (s.len() as f64).sqrt() + s.turbines()[0].x / 1000.0).collect();
        let h = Hyperparams::new(400.0, 1.3, 1e-4).unwrap();
        let model = SetGpModel::with_hyperparams(sets, &y, h, true).unwrap();
        let gp = GridGp::new(&model, &grid).unwrap();
        for _ in 0..30 {
            let g = random_genome(&grid, 1, &mut rng).unwrap();
            let (m, v) = gp.posterior_normalized(&g).unwrap();
            let (m2, v2) = model.predict_normalized(&decode(&g, &grid).unwrap()).unwrap();
            assert!((m - m2).abs() < 1e-10, "{m} vs {m2}");
            assert!((v - v2).abs() < 1e-10, "{v} vs {v2}");
        }
    }

    #[test]
    fn exact_cost_has_no_spread() {
        let s: Surrogates<'_, f64> = Surrogates(vec![Surrogate::ExactCost]);
        let b = s.predict(&Genome::from_cells(9, &[0, 4])).unwrap();
        assert_eq!(b.mean, vec![cost::<f64>(2)]);
        assert_eq!(b.std_dev, vec![0.0]);
    }
}
