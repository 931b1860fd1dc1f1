//! Collapsed Gibbs sampling over location tokens.

use ndarray::Array2;
use rand::Rng as _;

use crate::econet::EcoNetwork;
use crate::error::{Error, Result};
use crate::lda::config::{Estimator, LdaConfig};
use crate::lda::model::CommunityModel;
use crate::rng::{rng_from, Rng};

/// Token-level community assignments with their sufficient counts.
#[derive(Debug, Clone)]
pub struct SamplerState {
    k: usize,
    n_locations: usize,
    /// Token range of individual i is `doc_start[i]..doc_start[i + 1]`.
    doc_start: Vec<usize>,
    token_location: Vec<usize>,
    assignment: Vec<usize>,
    counts_ik: Vec<u32>,
    /// Location-major (`j * k + community`) for locality in the inner loop.
    counts_jk: Vec<u32>,
    counts_k: Vec<u64>,
}

impl SamplerState {
    /// Expands the network into tokens and assigns each one a uniformly random community.
    pub fn initialize(net: &EcoNetwork, k: usize, rng: &mut Rng) -> Self {
        let n_ind = net.n_individuals();
        let n_loc = net.n_locations();
        let mut doc_start = Vec::with_capacity(n_ind + 1);
        let mut token_location = Vec::with_capacity(net.total_tokens() as usize);
        doc_start.push(0);
        for i in 0..n_ind {
            token_location.extend(net.tokens(i));
            doc_start.push(token_location.len());
        }

        let mut state = SamplerState {
            k,
            n_locations: n_loc,
            doc_start,
            assignment: vec![0; token_location.len()],
            token_location,
            counts_ik: vec![0; n_ind * k],
            counts_jk: vec![0; n_loc * k],
            counts_k: vec![0; k],
        };
        for i in 0..n_ind {
            for t in state.doc_start[i]..state.doc_start[i + 1] {
                let c = rng.gen_range(0..k);
                state.assignment[t] = c;
                state.add(i, state.token_location[t], c);
            }
        }
        state
    }

    #[inline]
    fn add(&mut self, i: usize, j: usize, c: usize) {
        self.counts_ik[i * self.k + c] += 1;
        self.counts_jk[j * self.k + c] += 1;
        self.counts_k[c] += 1;
    }

    #[inline]
    fn remove(&mut self, i: usize, j: usize, c: usize) {
        self.counts_ik[i * self.k + c] -= 1;
        self.counts_jk[j * self.k + c] -= 1;
        self.counts_k[c] -= 1;
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_individuals(&self) -> usize {
        self.doc_start.len() - 1
    }

    pub fn n_tokens(&self) -> usize {
        self.token_location.len()
    }

    /// Communities sampled for the tokens of individual `i`.
    pub fn token_assignments(&self, i: usize) -> &[usize] {
        &self.assignment[self.doc_start[i]..self.doc_start[i + 1]]
    }

    pub fn count_ik(&self, i: usize, k: usize) -> u32 {
        self.counts_ik[i * self.k + k]
    }

    pub fn count_kj(&self, k: usize, j: usize) -> u32 {
        self.counts_jk[j * self.k + k]
    }

    pub fn count_k(&self, k: usize) -> u64 {
        self.counts_k[k]
    }

    /// Checks the count identities exactly: every count table agrees with a
    /// recount of the token assignments, per-individual counts sum to N_i,
    /// per-community location counts sum to the community total, and the
    /// community totals sum to the token count.
    pub fn audit(&self) -> Result<()> {
        let k = self.k;
        let mut ik = vec![0u32; self.counts_ik.len()];
        let mut jk = vec![0u32; self.counts_jk.len()];
        let mut tot = vec![0u64; k];
        for i in 0..self.n_individuals() {
            let n_i = self.doc_start[i + 1] - self.doc_start[i];
            let row: u64 = self.counts_ik[i * k..(i + 1) * k].iter().map(|&c| c as u64).sum();
            if row != n_i as u64 {
                return Err(Error::Numerical(format!(
                    "individual {i}: community counts sum to {row}, expected {n_i}"
                )));
            }
            for t in self.doc_start[i]..self.doc_start[i + 1] {
                let c = self.assignment[t];
                ik[i * k + c] += 1;
                jk[self.token_location[t] * k + c] += 1;
                tot[c] += 1;
            }
        }
        for c in 0..k {
            let col: u64 = (0..self.n_locations).map(|j| self.counts_jk[j * k + c] as u64).sum();
            if col != self.counts_k[c] {
                return Err(Error::Numerical(format!(
                    "community {c}: location counts sum to {col}, total is {}",
                    self.counts_k[c]
                )));
            }
        }
        if self.counts_k.iter().sum::<u64>() != self.n_tokens() as u64 {
            return Err(Error::Numerical("community totals do not sum to token count".into()));
        }
        if ik != self.counts_ik || jk != self.counts_jk || tot != self.counts_k {
            return Err(Error::Numerical("count tables disagree with token assignments".into()));
        }
        Ok(())
    }
}

/// Resamples every token once from its collapsed conditional.
fn sweep(state: &mut SamplerState, alpha: &[f64], beta: &[f64], beta_sum: f64, rng: &mut Rng, cum: &mut [f64]) {
    let k = state.k;
    for i in 0..state.n_individuals() {
        for t in state.doc_start[i]..state.doc_start[i + 1] {
            let j = state.token_location[t];
            let old = state.assignment[t];
            state.remove(i, j, old);

            let doc = &state.counts_ik[i * k..(i + 1) * k];
            let loc = &state.counts_jk[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for c in 0..k {
                acc += (doc[c] as f64 + alpha[c]) * (loc[c] as f64 + beta[j]) / (state.counts_k[c] as f64 + beta_sum);
                cum[c] = acc;
            }
            let u = rng.gen::<f64>() * acc;
            let new = cum.iter().position(|&x| u < x).unwrap_or(k - 1);

            state.assignment[t] = new;
            state.add(i, j, new);
        }
    }
}

fn accumulate(state: &SamplerState, alpha: &[f64], beta: &[f64], w: &mut Array2<f64>, h: &mut Array2<f64>) {
    let k = state.k;
    let alpha_sum: f64 = alpha.iter().sum();
    let beta_sum: f64 = beta.iter().sum();
    for i in 0..state.n_individuals() {
        let n_i = (state.doc_start[i + 1] - state.doc_start[i]) as f64;
        for c in 0..k {
            w[[i, c]] += (state.counts_ik[i * k + c] as f64 + alpha[c]) / (n_i + alpha_sum);
        }
    }
    for c in 0..k {
        let denom = state.counts_k[c] as f64 + beta_sum;
        for j in 0..state.n_locations {
            h[[c, j]] += (state.counts_jk[j * k + c] as f64 + beta[j]) / denom;
        }
    }
}

/// Fits the model by collapsed Gibbs sampling.
pub fn fit(net: &EcoNetwork, config: &LdaConfig) -> Result<CommunityModel> {
    fit_with_observer(net, config, |_, _| Ok(()))
}

/// Like [`fit`], calling `observer(sweep, state)` after every completed sweep
/// (sweeps numbered from 0). An observer error aborts the fit.
pub fn fit_with_observer<F>(net: &EcoNetwork, config: &LdaConfig, mut observer: F) -> Result<CommunityModel>
where
    F: FnMut(usize, &SamplerState) -> Result<()>,
{
    config.validate()?;
    if net.is_empty() {
        return Err(Error::EmptyNetwork("cannot fit an empty network".into()));
    }
    net.validate()?;

    let k = config.k;
    let alpha = config.alpha_vector()?;
    let beta = config.beta_vector(net.n_locations())?;
    let beta_sum: f64 = beta.iter().sum();

    let mut rng = rng_from(config.seed, &[]);
    let mut state = SamplerState::initialize(net, k, &mut rng);
    let mut w = Array2::<f64>::zeros((net.n_individuals(), k));
    let mut h = Array2::<f64>::zeros((k, net.n_locations()));
    let mut cum = vec![0.0; k];

    let first_kept = match config.estimator {
        Estimator::PosteriorMean => config.burn_in,
        Estimator::LastSweep => config.iterations - 1,
    };
    for s in 0..config.iterations {
        sweep(&mut state, &alpha, &beta, beta_sum, &mut rng, &mut cum);
        observer(s, &state)?;
        if s >= first_kept {
            accumulate(&state, &alpha, &beta, &mut w, &mut h);
        }
    }

    let kept = config.retained_sweeps() as f64;
    w.mapv_inplace(|x| x / kept);
    h.mapv_inplace(|x| x / kept);
    CommunityModel::from_parts(
        config.clone(),
        net.individuals().to_vec(),
        net.locations().to_vec(),
        w,
        h,
    )
}
