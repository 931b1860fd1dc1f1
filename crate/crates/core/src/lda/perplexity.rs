//! Held-out perplexity with fold-in estimation of unseen individuals.

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::econet::EcoNetwork;
use crate::error::{Error, Result};
use crate::lda::model::CommunityModel;
use crate::rng::{key_hash, rng_from};

/// Fold-in Gibbs settings: `sweeps` total, the last `averaged` of them
/// contribute to the estimated assignment vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldIn {
    pub sweeps: usize,
    pub averaged: usize,
    pub seed: u64,
}

impl FoldIn {
    pub fn new(seed: u64) -> Self {
        FoldIn {
            sweeps: 50,
            averaged: 25,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.averaged == 0 || self.averaged > self.sweeps {
            return Err(Error::validation(format!(
                "fold-in must average between 1 and {} sweeps, got {}",
                self.sweeps, self.averaged
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct HeldoutScore {
    pub perplexity: f64,
    /// Held-out individuals that had at least one scorable token.
    pub individuals: Vec<String>,
    /// Folded-in assignment vectors, one row per entry of `individuals`.
    pub assignments: Array2<f64>,
    pub tokens_scored: u64,
    pub tokens_dropped: u64,
}

/// Scores `heldout` against `model`.
///
/// Each held-out individual's assignment vector is estimated by Gibbs
/// sampling its own tokens with the profiles frozen; tokens at locations the
/// model has never seen are dropped. Every individual draws from its own
/// stream keyed by its id, and tokens are visited in model-column order, so
/// the score does not depend on how the held-out network is ordered.
/// Rows of the returned assignments follow individual id order.
pub fn heldout_perplexity(model: &CommunityModel, heldout: &EcoNetwork, foldin: &FoldIn) -> Result<HeldoutScore> {
    foldin.validate()?;
    let k = model.k();
    let alpha = model.config().alpha_vector()?;
    let alpha_sum: f64 = alpha.iter().sum();
    let h = model.h();

    let lookup = model.location_lookup();
    let remap: Vec<Option<usize>> = heldout
        .locations()
        .iter()
        .map(|id| lookup.get(id.as_str()).copied())
        .collect();

    let mut individuals = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut loglik = 0.0;
    let mut scored = 0u64;
    let mut dropped = 0u64;

    let mut counts = vec![0u32; k];
    let mut cum = vec![0.0; k];
    let mut order: Vec<usize> = (0..heldout.n_individuals()).collect();
    order.sort_by(|&a, &b| heldout.individuals()[a].cmp(&heldout.individuals()[b]));
    for i in order {
        let mut tokens: Vec<usize> = Vec::new();
        for &(j, c) in heldout.row(i) {
            match remap[j] {
                Some(col) => tokens.extend(std::iter::repeat_n(col, c as usize)),
                None => dropped += c as u64,
            }
        }
        if tokens.is_empty() {
            continue;
        }
        tokens.sort_unstable();

        let id = &heldout.individuals()[i];
        let mut rng = rng_from(foldin.seed, &[key_hash(id)]);
        counts.iter_mut().for_each(|c| *c = 0);
        let mut z: Vec<usize> = tokens
            .iter()
            .map(|_| {
                let c = rng.gen_range(0..k);
                counts[c] += 1;
                c
            })
            .collect();

        let n_i = tokens.len() as f64;
        let mut theta = vec![0.0; k];
        for s in 0..foldin.sweeps {
            for (t, &col) in tokens.iter().enumerate() {
                counts[z[t]] -= 1;
                let mut acc = 0.0;
                for c in 0..k {
                    acc += (counts[c] as f64 + alpha[c]) * h[[c, col]];
                    cum[c] = acc;
                }
                let u = rng.gen::<f64>() * acc;
                let new = cum.iter().position(|&x| u < x).unwrap_or(k - 1);
                z[t] = new;
                counts[new] += 1;
            }
            if s >= foldin.sweeps - foldin.averaged {
                for c in 0..k {
                    theta[c] += (counts[c] as f64 + alpha[c]) / (n_i + alpha_sum);
                }
            }
        }
        theta.iter_mut().for_each(|x| *x /= foldin.averaged as f64);

        let mut ll_i = 0.0;
        for &col in &tokens {
            let p: f64 = (0..k).map(|c| theta[c] * h[[c, col]]).sum();
            ll_i += p.ln();
        }
        loglik += ll_i;
        scored += tokens.len() as u64;
        individuals.push(id.clone());
        rows.push(theta);
    }

    if dropped > 0 {
        log::warn!("dropped {dropped} held-out tokens at locations absent from the model");
    }
    if scored == 0 {
        return Err(Error::EmptyNetwork(
            "no held-out tokens at locations known to the model".into(),
        ));
    }
    let assignments =
        Array2::from_shape_vec((rows.len(), k), rows.into_iter().flatten().collect()).expect("rows have length k");
    let perplexity = (-loglik / scored as f64).exp();
    if !perplexity.is_finite() {
        return Err(Error::Numerical(format!("perplexity is {perplexity}")));
    }
    Ok(HeldoutScore {
        perplexity,
        individuals,
        assignments,
        tokens_scored: scored,
        tokens_dropped: dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::econet::NetworkBuilder;
    use crate::lda::LdaConfig;
    use ndarray::array;

    fn uniform_model(j: usize) -> CommunityModel {
        let locs = (0..j).map(|l| format!("l{l}")).collect();
        let h = Array2::from_elem((1, j), 1.0 / j as f64);
        CommunityModel::from_parts(LdaConfig::new(1, 0), vec!["m".into()], locs, array![[1.0]], h).unwrap()
    }

    #[test]
    fn uniform_profile_scores_j() {
        let model = uniform_model(7);
        let mut b = NetworkBuilder::new();
        b.add("a", "l0", 3).add("a", "l4", 1).add("b", "l6", 2);
        let score = heldout_perplexity(&model, &b.build(), &FoldIn::new(1)).unwrap();
        assert!((score.perplexity - 7.0).abs() < 1e-9);
        assert_eq!(score.tokens_scored, 6);
    }

    #[test]
    fn certain_tokens_score_one() {
        let model = uniform_model(1);
        let mut b = NetworkBuilder::new();
        b.add("a", "l0", 5);
        let score = heldout_perplexity(&model, &b.build(), &FoldIn::new(1)).unwrap();
        assert!((score.perplexity - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unseen_locations_dropped() {
        let model = uniform_model(4);
        let mut b = NetworkBuilder::new();
        b.add("a", "l0", 1).add("a", "new", 2).add("b", "new", 1);
        let score = heldout_perplexity(&model, &b.build(), &FoldIn::new(1)).unwrap();
        assert_eq!(score.tokens_dropped, 3);
        assert_eq!(score.individuals, ["a"]);

        let mut b = NetworkBuilder::new();
        b.add("a", "new", 2);
        assert!(matches!(
            heldout_perplexity(&model, &b.build(), &FoldIn::new(1)),
            Err(Error::EmptyNetwork(_))
        ));
    }

    #[test]
    fn bad_foldin_rejected() {
        let model = uniform_model(2);
        let mut b = NetworkBuilder::new();
        b.add("a", "l0", 1);
        let f = FoldIn {
            sweeps: 5,
            averaged: 6,
            seed: 0,
        };
        assert!(heldout_perplexity(&model, &b.build(), &f).is_err());
    }
}
