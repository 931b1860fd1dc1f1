//! Probability that two individuals share at least one activity location,
//! simulated from fitted profiles for same- and different-community pairs,
//! alongside the exact baseline for uniformly random location sets.

use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lda::CommunityModel;
use crate::metrics::community_sizes;
use crate::rng::{rng_from, Rng};

/// Probability that two independent uniform `n`-subsets of `j` locations
/// intersect: `1 - C(j - n, n) / C(j, n)`, evaluated in log space.
pub fn analytic_share_probability(n: usize, j: usize) -> Result<f64> {
    if n == 0 || n > j {
        return Err(Error::validation(format!("need 1 <= n <= J, got n = {n}, J = {j}")));
    }
    if 2 * n > j {
        return Ok(1.0);
    }
    // ln C(j-n, n) - ln C(j, n) = sum_t ln((j - n - t) / (j - t))
    let log_disjoint: f64 = (0..n).map(|t| (-(n as f64) / (j - t) as f64).ln_1p()).sum();
    Ok(-log_disjoint.exp_m1())
}

/// How community strata are weighted when drawing pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrataWeighting {
    /// Within: proportional to modal community size. Between: ordered pairs
    /// of distinct communities proportional to the product of sizes.
    BySize,
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationPlan {
    pub n_values: Vec<usize>,
    pub pairs_per_n: usize,
    pub seed: u64,
    pub weighting: StrataWeighting,
    /// Location count for the analytic baseline; defaults to the model's J.
    pub analytic_j: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesPoint {
    /// Pooled share probability over all simulated pairs.
    pub mean: f64,
    /// Sample SD of the per-stratum share probabilities.
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShareCurve {
    pub n_values: Vec<usize>,
    pub within: Vec<SeriesPoint>,
    /// `None` when fewer than two communities can be drawn.
    pub between: Vec<Option<SeriesPoint>>,
    pub analytic: Vec<f64>,
    pub analytic_j: usize,
}

impl ShareCurve {
    /// Long-format CSV `n,series,mean,sd`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["n", "series", "mean", "sd"])?;
        for (idx, n) in self.n_values.iter().enumerate() {
            let n = n.to_string();
            let within = self.within[idx];
            w.write_record([n.as_str(), "within", &within.mean.to_string(), &within.sd.to_string()])?;
            if let Some(b) = self.between[idx] {
                w.write_record([n.as_str(), "between", &b.mean.to_string(), &b.sd.to_string()])?;
            }
            w.write_record([n.as_str(), "analytic", &self.analytic[idx].to_string(), "0"])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Draws `n` distinct locations from `profile`, each draw proportional to
/// the profile mass left among locations not yet drawn.
pub fn draw_without_replacement(profile: &[f64], n: usize, rng: &mut Rng, taken: &mut [bool]) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let remaining: f64 = profile
            .iter()
            .zip(taken.iter())
            .filter(|(_, &t)| !t)
            .map(|(p, _)| p)
            .sum();
        let u = rng.gen::<f64>() * remaining;
        let mut acc = 0.0;
        let mut pick = None;
        for (j, (&p, &t)) in profile.iter().zip(taken.iter()).enumerate() {
            if t || p <= 0.0 {
                continue;
            }
            acc += p;
            pick = Some(j);
            if u < acc {
                break;
            }
        }
        let j = pick.expect("profile has enough positive mass");
        taken[j] = true;
        out.push(j);
    }
    for &j in &out {
        taken[j] = false;
    }
    out
}

#[derive(Clone, Copy)]
enum Series {
    Within,
    Between,
}

struct Strata {
    pairs: Vec<(usize, usize)>,
    weights: Vec<f64>,
}

fn strata(sizes: &[usize], weighting: StrataWeighting, series: Series) -> Strata {
    let k = sizes.len();
    let weight = |s: usize| match weighting {
        StrataWeighting::BySize => s as f64,
        StrataWeighting::Uniform => 1.0,
    };
    let mut pairs = Vec::new();
    let mut weights = Vec::new();
    for a in 0..k {
        match series {
            Series::Within => {
                let w = weight(sizes[a]);
                if w > 0.0 {
                    pairs.push((a, a));
                    weights.push(w);
                }
            }
            Series::Between => {
                for b in (0..k).filter(|&b| b != a) {
                    let w = weight(sizes[a]) * weight(sizes[b]);
                    if w > 0.0 {
                        pairs.push((a, b));
                        weights.push(w);
                    }
                }
            }
        }
    }
    Strata { pairs, weights }
}

fn simulate_cell(profiles: &[Vec<f64>], strata: &Strata, n: usize, pairs: usize, mut rng: Rng) -> Option<SeriesPoint> {
    if strata.pairs.is_empty() {
        return None;
    }
    let pick = WeightedIndex::new(&strata.weights).expect("positive stratum weights");
    let j = profiles[0].len();
    let mut taken = vec![false; j];
    let mut marks = vec![false; j];
    let mut hits = vec![0u64; strata.pairs.len()];
    let mut trials = vec![0u64; strata.pairs.len()];
    for _ in 0..pairs {
        let s = pick.sample(&mut rng);
        let (a, b) = strata.pairs[s];
        let first = draw_without_replacement(&profiles[a], n, &mut rng, &mut taken);
        let second = draw_without_replacement(&profiles[b], n, &mut rng, &mut taken);
        first.iter().for_each(|&l| marks[l] = true);
        let shared = second.iter().any(|&l| marks[l]);
        first.iter().for_each(|&l| marks[l] = false);
        trials[s] += 1;
        hits[s] += u64::from(shared);
    }
    let mean = hits.iter().sum::<u64>() as f64 / pairs as f64;
    let stratum_means: Vec<f64> = hits
        .iter()
        .zip(&trials)
        .filter(|(_, &t)| t > 0)
        .map(|(&h, &t)| h as f64 / t as f64)
        .collect();
    let sd = if stratum_means.len() < 2 {
        0.0
    } else {
        let m = stratum_means.iter().sum::<f64>() / stratum_means.len() as f64;
        (stratum_means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (stratum_means.len() - 1) as f64).sqrt()
    };
    Some(SeriesPoint { mean, sd })
}

/// Simulates pairs of pseudo-individuals, each visiting `n` distinct
/// locations drawn from a community profile, and records whether the two
/// location sets intersect. Within-community pairs share one community,
/// between-community pairs use two distinct ones. Every (n, series) cell
/// uses its own seeded stream.
pub fn simulate_share_curve(model: &CommunityModel, plan: &SimulationPlan) -> Result<ShareCurve> {
    if plan.pairs_per_n == 0 {
        return Err(Error::validation("pairs_per_n must be at least 1"));
    }
    if plan.n_values.is_empty() {
        return Err(Error::validation("no n values to simulate"));
    }
    let profiles: Vec<Vec<f64>> = model.h().rows().into_iter().map(|r| r.to_vec()).collect();
    let sizes = community_sizes(model);
    let within = strata(&sizes, plan.weighting, Series::Within);
    let between = strata(&sizes, plan.weighting, Series::Between);

    let max_n = *plan.n_values.iter().max().expect("nonempty");
    let used: Vec<usize> = within.pairs.iter().map(|&(a, _)| a).collect();
    for &c in &used {
        let support = profiles[c].iter().filter(|&&p| p > 0.0).count();
        if max_n > support {
            return Err(Error::validation(format!(
                "n = {max_n} exceeds the {support} locations with positive mass in community {}",
                c + 1
            )));
        }
    }
    if plan.n_values.contains(&0) {
        return Err(Error::validation("n values must be at least 1"));
    }

    let analytic_j = plan.analytic_j.unwrap_or(model.locations().len());
    let analytic = plan
        .n_values
        .iter()
        .map(|&n| analytic_share_probability(n, analytic_j))
        .collect::<Result<Vec<_>>>()?;

    let cells: Vec<(usize, usize)> = (0..plan.n_values.len()).flat_map(|i| [(i, 0), (i, 1)]).collect();
    let results: Vec<Option<SeriesPoint>> = cells
        .par_iter()
        .map(|&(i, s)| {
            let n = plan.n_values[i];
            let rng = rng_from(plan.seed, &[n as u64, s as u64]);
            let st = if s == 0 { &within } else { &between };
            simulate_cell(&profiles, st, n, plan.pairs_per_n, rng)
        })
        .collect();

    let mut curve = ShareCurve {
        n_values: plan.n_values.clone(),
        within: Vec::new(),
        between: Vec::new(),
        analytic,
        analytic_j,
    };
    for pair in results.chunks(2) {
        curve.within.push(pair[0].expect("at least one community has members"));
        curve.between.push(pair[1]);
    }
    Ok(curve)
}
