//! Choosing the number of communities by held-out perplexity.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::econet::EcoNetwork;
use crate::error::{Error, Result};
use crate::lda::config::LdaConfig;
use crate::lda::perplexity::{heldout_perplexity, FoldIn};
use crate::lda::sampler::fit;
use crate::rng::{derive_seed, rng_from};

const SPLIT_STREAM: u64 = 0x5eed_5b17;

/// Cross-validation protocol: repeated individual-level train/test splits
/// scored over a grid of community counts.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionPlan {
    pub grid: Vec<usize>,
    pub replicates: usize,
    pub test_fraction: f64,
    pub foldin_sweeps: usize,
    pub foldin_averaged: usize,
}

impl SelectionPlan {
    pub fn new(grid: Vec<usize>, replicates: usize, test_fraction: f64) -> Self {
        let f = FoldIn::new(0);
        SelectionPlan {
            grid,
            replicates,
            test_fraction,
            foldin_sweeps: f.sweeps,
            foldin_averaged: f.averaged,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::validation("K grid is empty"));
        }
        if self.grid.contains(&0) {
            return Err(Error::validation("every K in the grid must be at least 1"));
        }
        if self.replicates == 0 {
            return Err(Error::validation("replicates must be at least 1"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::validation("test fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelSelectionResult {
    pub grid: Vec<usize>,
    /// `perplexities[r][g]`: replicate `r`, grid entry `g`.
    pub perplexities: Vec<Vec<f64>>,
    pub mean_perplexity: Vec<f64>,
    pub selected_k: usize,
}

impl ModelSelectionResult {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["replicate", "K", "perplexity"])?;
        for (r, row) in self.perplexities.iter().enumerate() {
            for (k, p) in self.grid.iter().zip(row) {
                w.write_record([r.to_string(), k.to_string(), p.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Summary<'a> {
            selected_k: usize,
            grid: &'a [usize],
            mean_perplexity: &'a [f64],
            replicates: usize,
        }
        let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(
            &mut file,
            &Summary {
                selected_k: self.selected_k,
                grid: &self.grid,
                mean_perplexity: &self.mean_perplexity,
                replicates: self.perplexities.len(),
            },
        )?;
        file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Train/test individual indices for one replicate, each in network order.
pub fn split_individuals(
    n: usize,
    test_fraction: f64,
    seed: u64,
    replicate: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_test = (test_fraction * n as f64).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::validation(format!(
            "a test fraction of {test_fraction} over {n} individuals leaves an empty train or test set"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(seed, &[SPLIT_STREAM, replicate as u64]));
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Fits every grid K on each replicate's training split and scores the
/// test split. The K with the smallest mean perplexity wins; ties go to the
/// smaller K. Cells run in parallel on the current rayon pool, each with
/// its own seed, so the result does not depend on scheduling.
pub fn select_k(net: &EcoNetwork, plan: &SelectionPlan, base: &LdaConfig) -> Result<ModelSelectionResult> {
    plan.validate()?;
    for &k in &plan.grid {
        base.clone().with_k(k).validate()?;
    }

    let splits = (0..plan.replicates)
        .map(|r| {
            let (train, test) = split_individuals(net.n_individuals(), plan.test_fraction, base.seed, r)?;
            Ok((net.subset(&train), net.subset(&test)))
        })
        .collect::<Result<Vec<_>>>()?;

    let cells: Vec<(usize, usize)> = (0..plan.replicates)
        .flat_map(|r| (0..plan.grid.len()).map(move |g| (r, g)))
        .collect();
    let scores = cells
        .par_iter()
        .map(|&(r, g)| {
            let k = plan.grid[g];
            let mut config = base.clone().with_k(k);
            config.seed = derive_seed(base.seed, &[r as u64, k as u64]);
            let (train, test) = &splits[r];
            let model = fit(train, &config)?;
            let foldin = FoldIn {
                sweeps: plan.foldin_sweeps,
                averaged: plan.foldin_averaged,
                seed: derive_seed(base.seed, &[r as u64, k as u64, 1]),
            };
            let score = heldout_perplexity(&model, test, &foldin)?;
            log::info!("replicate {r} K={k}: perplexity {:.4}", score.perplexity);
            Ok(score.perplexity)
        })
        .collect::<Result<Vec<f64>>>()?;

    let perplexities: Vec<Vec<f64>> = scores.chunks(plan.grid.len()).map(<[f64]>::to_vec).collect();
    let mean_perplexity: Vec<f64> = (0..plan.grid.len())
        .map(|g| perplexities.iter().map(|row| row[g]).sum::<f64>() / plan.replicates as f64)
        .collect();

    let mut best = 0;
    for g in 1..plan.grid.len() {
        let (m, b) = (mean_perplexity[g], mean_perplexity[best]);
        if m < b || (m == b && plan.grid[g] < plan.grid[best]) {
            best = g;
        }
    }
    Ok(ModelSelectionResult {
        grid: plan.grid.clone(),
        perplexities,
        mean_perplexity,
        selected_k: plan.grid[best],
    })
}
