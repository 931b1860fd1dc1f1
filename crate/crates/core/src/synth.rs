//! Synthetic networks drawn from the LDA generative model, with the latent
//! truth kept for recovery checks.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use crate::econet::{EcoNetwork, NetworkBuilder};
use crate::error::{Error, Result};
use crate::lda::Prior;
use crate::metrics::modal_community;
use crate::rng::{rng_from, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TokenCount {
    Fixed {
        n: usize,
    },
    /// Inclusive range.
    Uniform {
        min: usize,
        max: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NeighborhoodPlan {
    /// Neighborhoods nest inside dominant communities: each individual lands
    /// in one of `per_community` neighborhoods of its planted label.
    Aligned { per_community: usize },
    /// Neighborhoods drawn uniformly, independent of membership.
    Mixed { neighborhoods: usize },
    /// Explicit neighborhood per individual.
    Custom { neighborhoods: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub individuals: usize,
    pub locations: usize,
    pub k_true: usize,
    pub alpha_true: Prior,
    pub beta_true: Prior,
    pub tokens_per_individual: TokenCount,
    pub neighborhood_plan: NeighborhoodPlan,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.individuals == 0 || self.locations == 0 || self.k_true == 0 {
            return Err(Error::validation("I, J and K must be positive"));
        }
        if self.k_true > self.locations {
            return Err(Error::validation("K cannot exceed J"));
        }
        self.alpha_true.resolve(self.k_true)?;
        self.beta_true.resolve(self.locations)?;
        match self.tokens_per_individual {
            TokenCount::Fixed { n: 0 } => return Err(Error::validation("token counts must be >= 1")),
            TokenCount::Uniform { min, max } if min == 0 || max < min => {
                return Err(Error::validation("token range must satisfy 1 <= min <= max"))
            }
            _ => {}
        }
        match &self.neighborhood_plan {
            NeighborhoodPlan::Aligned { per_community: 0 } | NeighborhoodPlan::Mixed { neighborhoods: 0 } => {
                Err(Error::validation("neighborhood count must be positive"))
            }
            NeighborhoodPlan::Custom { neighborhoods } if neighborhoods.len() != self.individuals => Err(
                Error::validation("custom neighborhood map must have one entry per individual"),
            ),
            _ => Ok(()),
        }
    }
}

/// The latent quantities behind a generated network.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub individuals: Vec<String>,
    /// All J location ids, including any never drawn.
    pub locations: Vec<String>,
    pub w: Array2<f64>,
    pub h: Array2<f64>,
    /// Planted (modal) community of each individual, 0-based.
    pub labels: Vec<usize>,
    pub tokens: Vec<usize>,
}

impl GroundTruth {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Out<'a> {
            individuals: &'a [String],
            locations: &'a [String],
            k: usize,
            w: Vec<f64>,
            h: Vec<f64>,
            labels: &'a [usize],
            tokens: &'a [usize],
        }
        let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(
            &mut file,
            &Out {
                individuals: &self.individuals,
                locations: &self.locations,
                k: self.h.nrows(),
                w: self.w.iter().copied().collect(),
                h: self.h.iter().copied().collect(),
                labels: &self.labels,
                tokens: &self.tokens,
            },
        )?;
        file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Dirichlet draw via normalized Gamma variates. Shapes below 1 use
/// `Gamma(a) = Gamma(a + 1) * U^(1/a)` in log space so tiny concentrations
/// do not underflow to an all-zero vector.
pub fn sample_dirichlet(alpha: &[f64], rng: &mut Rng) -> Vec<f64> {
    let logs: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            if a >= 1.0 {
                Gamma::new(a, 1.0).expect("positive shape").sample(rng).ln()
            } else {
                let g = Gamma::new(a + 1.0, 1.0).expect("positive shape").sample(rng);
                let u: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
                g.ln() + u.ln() / a
            }
        })
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut v: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let sum: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= sum);
    v
}

/// Draws W_i ~ Dirichlet(alpha), H_k ~ Dirichlet(beta), then for every token
/// a community from W_i and a location (with replacement) from H_k.
pub fn generate(spec: &SynthSpec) -> Result<(EcoNetwork, GroundTruth)> {
    spec.validate()?;
    let (n_ind, n_loc, k) = (spec.individuals, spec.locations, spec.k_true);
    let alpha = spec.alpha_true.resolve(k)?;
    let beta = spec.beta_true.resolve(n_loc)?;
    let mut rng = rng_from(spec.seed, &[]);

    let mut h = Array2::zeros((k, n_loc));
    for c in 0..k {
        for (j, p) in sample_dirichlet(&beta, &mut rng).into_iter().enumerate() {
            h[[c, j]] = p;
        }
    }
    let mut w = Array2::zeros((n_ind, k));
    for i in 0..n_ind {
        for (c, p) in sample_dirichlet(&alpha, &mut rng).into_iter().enumerate() {
            w[[i, c]] = p;
        }
    }
    let labels: Vec<usize> = w
        .rows()
        .into_iter()
        .map(|r| modal_community(r.as_slice().expect("row-major")))
        .collect();

    let individuals: Vec<String> = (0..n_ind).map(|i| format!("ind{i:04}")).collect();
    let locations: Vec<String> = (0..n_loc).map(|j| format!("loc{j:04}")).collect();
    let location_draw: Vec<WeightedIndex<f64>> = h
        .rows()
        .into_iter()
        .map(|r| WeightedIndex::new(r.iter().copied()).expect("profile has positive mass"))
        .collect();

    let mut builder = NetworkBuilder::new();
    let mut tokens = Vec::with_capacity(n_ind);
    for (i, id) in individuals.iter().enumerate() {
        let n_i = match spec.tokens_per_individual {
            TokenCount::Fixed { n } => n,
            TokenCount::Uniform { min, max } => rng.gen_range(min..=max),
        };
        tokens.push(n_i);
        let community_draw = WeightedIndex::new(w.row(i).iter().copied()).expect("assignment has positive mass");
        for _ in 0..n_i {
            let c = community_draw.sample(&mut rng);
            let j = location_draw[c].sample(&mut rng);
            builder.add(id, &locations[j], 1);
        }
    }
    for i in 0..n_ind {
        let nb = match &spec.neighborhood_plan {
            NeighborhoodPlan::Aligned { per_community } => {
                format!("nb{:02}-{}", labels[i] + 1, rng.gen_range(0..*per_community))
            }
            NeighborhoodPlan::Mixed { neighborhoods } => format!("nb{:03}", rng.gen_range(0..*neighborhoods)),
            NeighborhoodPlan::Custom { neighborhoods } => neighborhoods[i].clone(),
        };
        builder.neighborhood(&individuals[i], &nb);
    }

    Ok((
        builder.build(),
        GroundTruth {
            individuals,
            locations,
            w,
            h,
            labels,
            tokens,
        },
    ))
}

/// Optimal community matching between two profile sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// `permutation[t]` is the estimated community matched to true community `t`.
    pub permutation: Vec<usize>,
    /// L1 distance of each matched pair, indexed by true community.
    pub distances: Vec<f64>,
    pub total: f64,
}

impl Matching {
    /// True community matched to estimated community `est`.
    pub fn true_label_of(&self, est: usize) -> usize {
        self.permutation
            .iter()
            .position(|&e| e == est)
            .expect("permutation covers all communities")
    }

    pub fn mean_distance(&self) -> f64 {
        self.total / self.distances.len() as f64
    }
}

/// Exhaustive search at or below this many communities.
const EXHAUSTIVE_MAX_K: usize = 8;

/// Assignment minimizing total cost, where `cost[[t, e]]` is the cost of
/// matching row `t` to column `e`. Returns `perm` with `perm[t] = e`.
pub fn optimal_assignment(cost: ArrayView2<'_, f64>) -> (Vec<usize>, f64) {
    let k = cost.nrows();
    let total = |perm: &[usize]| perm.iter().enumerate().map(|(t, &e)| cost[[t, e]]).sum::<f64>();
    if k <= EXHAUSTIVE_MAX_K {
        let mut best: Vec<usize> = (0..k).collect();
        let mut best_cost = total(&best);
        let mut perm: Vec<usize> = (0..k).collect();
        // Heap's algorithm, iterative.
        let mut c = vec![0usize; k];
        let mut i = 0;
        while i < k {
            if c[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(c[i], i);
                }
                let cur = total(&perm);
                if cur < best_cost {
                    best_cost = cur;
                    best.clone_from(&perm);
                }
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        return (best, best_cost);
    }

    // Greedy on the cheapest remaining pair, then pairwise swaps until none helps.
    let mut perm = vec![usize::MAX; k];
    let mut used = vec![false; k];
    let mut entries: Vec<(usize, usize)> = (0..k).flat_map(|t| (0..k).map(move |e| (t, e))).collect();
    entries.sort_by(|&(a, b), &(c, d)| cost[[a, b]].total_cmp(&cost[[c, d]]));
    for (t, e) in entries {
        if perm[t] == usize::MAX && !used[e] {
            perm[t] = e;
            used[e] = true;
        }
    }
    loop {
        let mut improved = false;
        for a in 0..k {
            for b in a + 1..k {
                let delta = cost[[a, perm[b]]] + cost[[b, perm[a]]] - cost[[a, perm[a]]] - cost[[b, perm[b]]];
                if delta < -1e-15 {
                    perm.swap(a, b);
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    let c = total(&perm);
    (perm, c)
}

/// Matches estimated profiles to true ones by minimum total L1 distance.
pub fn match_communities(h_est: ArrayView2<'_, f64>, h_true: ArrayView2<'_, f64>) -> Result<Matching> {
    if h_est.dim() != h_true.dim() {
        return Err(Error::validation(format!(
            "profile shapes differ: {:?} vs {:?}",
            h_est.dim(),
            h_true.dim()
        )));
    }
    let k = h_true.nrows();
    let cost = Array2::from_shape_fn((k, k), |(t, e)| {
        h_true
            .row(t)
            .iter()
            .zip(h_est.row(e))
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    });
    let (permutation, total) = optimal_assignment(cost.view());
    let distances = permutation.iter().enumerate().map(|(t, &e)| cost[[t, e]]).collect();
    Ok(Matching {
        permutation,
        distances,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn spec() -> SynthSpec {
        SynthSpec {
            individuals: 30,
            locations: 12,
            k_true: 3,
            alpha_true: Prior::Symmetric(0.1),
            beta_true: Prior::Symmetric(0.2),
            tokens_per_individual: TokenCount::Uniform { min: 3, max: 9 },
            neighborhood_plan: NeighborhoodPlan::Mixed { neighborhoods: 4 },
            seed: 42,
        }
    }

    #[test]
    fn generation_conserves_tokens_and_is_reproducible() {
        let (net, truth) = generate(&spec()).unwrap();
        assert_eq!(net.total_tokens(), truth.tokens.iter().sum::<usize>() as u64);
        net.validate().unwrap();
        for row in truth.w.rows().into_iter().chain(truth.h.rows()) {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        let (net2, truth2) = generate(&spec()).unwrap();
        assert_eq!(net, net2);
        assert_eq!(truth, truth2);
    }

    #[test]
    fn tiny_alpha_does_not_underflow() {
        let mut rng = rng_from(0, &[]);
        for _ in 0..100 {
            let v = sample_dirichlet(&[0.001; 5], &mut rng);
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(v.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        let mut s = spec();
        s.k_true = 13;
        assert!(generate(&s).is_err());
        let mut s = spec();
        s.tokens_per_individual = TokenCount::Fixed { n: 0 };
        assert!(generate(&s).is_err());
        let mut s = spec();
        s.neighborhood_plan = NeighborhoodPlan::Custom {
            neighborhoods: vec!["a".into()],
        };
        assert!(generate(&s).is_err());
    }

    #[test]
    fn two_by_two_cost_matrix() {
        let cost = array![[0.1, 0.9], [0.8, 0.2]];
        let (perm, total) = optimal_assignment(cost.view());
        assert_eq!(perm, vec![0, 1]);
        assert!((total - 0.3).abs() < 1e-15);
    }

    #[test]
    fn recovers_row_permutation() {
        let h = array![[0.5, 0.5, 0.0], [0.0, 0.2, 0.8], [1.0, 0.0, 0.0]];
        let shuffled = array![[1.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.0, 0.2, 0.8]];
        let m = match_communities(shuffled.view(), h.view()).unwrap();
        assert_eq!(m.permutation, vec![1, 2, 0]);
        assert!(m.distances.iter().all(|&d| d == 0.0));
        assert_eq!(m.true_label_of(0), 2);
    }

    #[test]
    fn greedy_path_on_large_k() {
        let k = 10;
        let cost = Array2::from_shape_fn((k, k), |(t, e)| {
            if (t + 3) % k == e {
                0.0
            } else {
                1.0 + (t * e) as f64 * 0.01
            }
        });
        let (perm, total) = optimal_assignment(cost.view());
        assert_eq!(total, 0.0);
        assert!(perm.iter().enumerate().all(|(t, &e)| (t + 3) % k == e));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = Array2::<f64>::zeros((2, 3));
        let b = Array2::<f64>::zeros((3, 3));
        assert!(match_communities(a.view(), b.view()).is_err());
    }
}
