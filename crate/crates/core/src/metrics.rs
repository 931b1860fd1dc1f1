//! Attachment and consistency metrics over fitted assignment vectors.

use std::collections::HashMap;
use std::path::Path;

use ndarray::ArrayView2;
use serde::Serialize;

use crate::econet::EcoNetwork;
use crate::error::{Error, Result};
use crate::lda::CommunityModel;

/// Gini coefficient of an assignment vector: the sum of absolute
/// differences over all ordered pairs of entries, divided by `2 K sum(w)`.
///
/// Zero for uniform membership and `1 - 1/K` for a one-hot vector.
pub fn gini(w: &[f64]) -> Result<f64> {
    if w.is_empty() || w.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
        return Err(Error::Domain(
            "Gini needs a nonempty vector of finite non-negative entries".into(),
        ));
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::Domain("Gini of an all-zero vector is undefined".into()));
    }
    let k = w.len();
    let mut sorted = w.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    // Sum over ordered pairs of |x_a - x_b| = 2 * sum_r (2r - K + 1) x_(r).
    let pair_sum: f64 = sorted
        .iter()
        .enumerate()
        .map(|(r, &x)| (2.0 * r as f64 - k as f64 + 1.0) * x)
        .sum::<f64>()
        * 2.0;
    Ok(pair_sum / (2.0 * k as f64 * total))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn modal_community(w: &[f64]) -> usize {
    let mut best = 0;
    for (c, &x) in w.iter().enumerate() {
        if x > w[best] {
            best = c;
        }
    }
    best
}

/// Sample total variation of a set of compositions (one per row):
/// `1/(2K) * sum over ordered component pairs (a, b) of var(log(x_a / x_b))`
/// with the `n - 1` sample variance.
///
/// Computed as the summed sample variances of the centred log-ratio
/// coordinates, which is the same quantity.
pub fn total_variation(rows: ArrayView2<'_, f64>) -> Result<f64> {
    let (n, k) = rows.dim();
    if n < 2 {
        return Err(Error::Domain(format!(
            "total variation needs at least 2 compositions, got {n}"
        )));
    }
    if rows.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
        return Err(Error::Domain("log-ratios need strictly positive entries".into()));
    }
    let clr: Vec<Vec<f64>> = rows
        .rows()
        .into_iter()
        .map(|row| {
            let logs: Vec<f64> = row.iter().map(|x| x.ln()).collect();
            let centre = logs.iter().sum::<f64>() / k as f64;
            logs.into_iter().map(|l| l - centre).collect()
        })
        .collect();
    let mut total = 0.0;
    for c in 0..k {
        let mean = clr.iter().map(|r| r[c]).sum::<f64>() / n as f64;
        total += clr.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    }
    Ok(total)
}

/// Per-individual attachment summary. `modal_community` is 0-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndividualMetrics {
    pub individual: String,
    pub modal_community: usize,
    pub modal_probability: f64,
    pub gini: f64,
    pub n_locations: u64,
    pub neighborhood: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeighborhoodSummary {
    pub neighborhood: String,
    pub n_individuals: usize,
    pub mean_gini: f64,
    pub mean_n_locations: f64,
    /// Fraction of unordered co-resident pairs with the same modal community.
    pub share_modal: f64,
    /// Share of members in the most common modal community.
    pub largest_modal_share: f64,
    pub n_modal_communities: usize,
    /// Absent for single-member neighborhoods.
    pub total_variation: Option<f64>,
    /// Set when `n_individuals == 1`; `share_modal` is then 1 by convention.
    pub singleton: bool,
}

fn check_alignment(net: &EcoNetwork, model: &CommunityModel) -> Result<()> {
    if net.individuals() != model.individuals() {
        return Err(Error::validation(
            "model individuals do not match the network (fit the model on this network)",
        ));
    }
    Ok(())
}

pub fn individual_metrics(net: &EcoNetwork, model: &CommunityModel) -> Result<Vec<IndividualMetrics>> {
    check_alignment(net, model)?;
    (0..net.n_individuals())
        .map(|i| {
            let w = model.assignment(i).to_vec();
            let modal = modal_community(&w);
            Ok(IndividualMetrics {
                individual: net.individuals()[i].clone(),
                modal_community: modal,
                modal_probability: w[modal],
                gini: gini(&w)?,
                n_locations: net.n_tokens(i),
                neighborhood: net.neighborhood(i).map(str::to_string),
            })
        })
        .collect()
}

/// Rolls individuals up by neighborhood, in order of first appearance.
/// Individuals without a neighborhood are skipped.
pub fn summarize_neighborhoods(net: &EcoNetwork, model: &CommunityModel) -> Result<Vec<NeighborhoodSummary>> {
    let people = individual_metrics(net, model)?;
    let mut order: Vec<&str> = Vec::new();
    let mut members: HashMap<&str, Vec<usize>> = HashMap::new();
    let mut unassigned = 0;
    for (i, m) in people.iter().enumerate() {
        match m.neighborhood.as_deref() {
            Some(nb) => {
                members
                    .entry(nb)
                    .or_insert_with(|| {
                        order.push(nb);
                        Vec::new()
                    })
                    .push(i);
            }
            None => unassigned += 1,
        }
    }
    if unassigned > 0 {
        log::warn!("{unassigned} individuals have no neighborhood and are not summarized");
    }

    order
        .into_iter()
        .map(|nb| {
            let idx = &members[nb];
            let n = idx.len();
            let mut modal_counts: HashMap<usize, usize> = HashMap::new();
            for &i in idx {
                *modal_counts.entry(people[i].modal_community).or_default() += 1;
            }
            let share_modal = if n < 2 {
                1.0
            } else {
                let same: usize = modal_counts.values().map(|&m| m * (m - 1) / 2).sum();
                same as f64 / (n * (n - 1) / 2) as f64
            };
            let largest = modal_counts.values().copied().max().unwrap_or(0);
            let rows = model.w().select(ndarray::Axis(0), idx);
            let total_variation = if n < 2 {
                None
            } else if rows.iter().any(|&x| x <= 0.0) {
                log::warn!("neighborhood '{nb}' has zero assignment entries; total variation left empty");
                None
            } else {
                Some(total_variation(rows.view())?)
            };
            Ok(NeighborhoodSummary {
                neighborhood: nb.to_string(),
                n_individuals: n,
                mean_gini: idx.iter().map(|&i| people[i].gini).sum::<f64>() / n as f64,
                mean_n_locations: idx.iter().map(|&i| people[i].n_locations as f64).sum::<f64>() / n as f64,
                share_modal,
                largest_modal_share: largest as f64 / n as f64,
                n_modal_communities: modal_counts.len(),
                total_variation,
                singleton: n < 2,
            })
        })
        .collect()
}

/// Number of individuals whose modal community is each community.
pub fn community_sizes(model: &CommunityModel) -> Vec<usize> {
    let mut sizes = vec![0; model.k()];
    for row in model.w().rows() {
        sizes[modal_community(row.as_slice().expect("W is row-major"))] += 1;
    }
    sizes
}

/// Per-individual CSV; communities are written 1-based.
pub fn write_individual_csv(rows: &[IndividualMetrics], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "individual_id",
        "modal",
        "modal_probability",
        "gini",
        "n_locations",
        "neighborhood_id",
    ])?;
    for m in rows {
        w.write_record([
            m.individual.clone(),
            (m.modal_community + 1).to_string(),
            m.modal_probability.to_string(),
            m.gini.to_string(),
            m.n_locations.to_string(),
            m.neighborhood.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub const NEIGHBORHOOD_COLUMNS: [&str; 9] = [
    "neighborhood_id",
    "n_individuals",
    "mean_gini",
    "mean_n_locations",
    "share_modal",
    "largest_modal_share",
    "n_modal_communities",
    "total_variation",
    "singleton",
];

pub fn write_neighborhood_csv(rows: &[NeighborhoodSummary], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(NEIGHBORHOOD_COLUMNS)?;
    for s in rows {
        w.write_record([
            s.neighborhood.clone(),
            s.n_individuals.to_string(),
            s.mean_gini.to_string(),
            s.mean_n_locations.to_string(),
            s.share_modal.to_string(),
            s.largest_modal_share.to_string(),
            s.n_modal_communities.to_string(),
            s.total_variation.map(|t| t.to_string()).unwrap_or_default(),
            u8::from(s.singleton).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::econet::NetworkBuilder;
    use crate::lda::LdaConfig;
    use ndarray::{array, Array2};

    #[test]
    fn gini_hand_cases() {
        assert_eq!(gini(&[0.25; 4]).unwrap(), 0.0);
        assert!((gini(&[1.0, 0.0, 0.0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((gini(&[0.5, 0.3, 0.2]).unwrap() - 0.2).abs() < 1e-15);
        assert!(gini(&[0.0, 0.0]).is_err());
        assert!(gini(&[]).is_err());
    }

    #[test]
    fn gini_uses_actual_sum() {
        // Unnormalized input: the denominator is 2K * sum, so scaling is a no-op.
        assert!((gini(&[5.0, 3.0, 2.0]).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn modal_ties_go_low() {
        assert_eq!(modal_community(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(modal_community(&[0.5, 0.5]), 0);
    }

    #[test]
    fn total_variation_hand_case() {
        let e = std::f64::consts::E;
        let rows = array![[0.5, 0.5], [e / (1.0 + e), 1.0 / (1.0 + e)]];
        assert!((total_variation(rows.view()).unwrap() - 0.25).abs() < 1e-12);
        let same = array![[0.2, 0.3, 0.5], [0.2, 0.3, 0.5], [0.2, 0.3, 0.5]];
        assert!(total_variation(same.view()).unwrap().abs() < 1e-15);
    }

    #[test]
    fn total_variation_domain_errors() {
        assert!(matches!(
            total_variation(array![[0.5, 0.5]].view()),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            total_variation(array![[0.5, 0.5], [1.0, 0.0]].view()),
            Err(Error::Domain(_))
        ));
    }

    fn model_for(net: &EcoNetwork, w: Array2<f64>) -> CommunityModel {
        let k = w.ncols();
        let j = net.n_locations();
        CommunityModel::from_parts(
            LdaConfig::new(k, 0),
            net.individuals().to_vec(),
            net.locations().to_vec(),
            w,
            Array2::from_elem((k, j), 1.0 / j as f64),
        )
        .unwrap()
    }

    #[test]
    fn three_member_neighborhood() {
        let mut b = NetworkBuilder::new();
        for (id, nb) in [("a", "t"), ("b", "t"), ("c", "t"), ("d", "u")] {
            b.add(id, "x", 2).neighborhood(id, nb);
        }
        let net = b.build();
        let w = array![[0.8, 0.2], [0.6, 0.4], [0.3, 0.7], [0.5, 0.5]];
        let s = summarize_neighborhoods(&net, &model_for(&net, w)).unwrap();
        assert_eq!(s.len(), 2);
        assert!((s[0].share_modal - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s[0].n_modal_communities, 2);
        assert!((s[0].largest_modal_share - 2.0 / 3.0).abs() < 1e-15);
        assert!(s[0].total_variation.is_some());
        assert!(s[1].singleton);
        assert_eq!(s[1].share_modal, 1.0);
        assert_eq!(s[1].total_variation, None);
    }

    #[test]
    fn homogeneous_neighborhood() {
        let mut b = NetworkBuilder::new();
        for id in ["a", "b", "c"] {
            b.add(id, "x", 1).neighborhood(id, "t");
        }
        let net = b.build();
        let w = array![[0.98, 0.01, 0.01], [0.98, 0.01, 0.01], [0.98, 0.01, 0.01]];
        let s = &summarize_neighborhoods(&net, &model_for(&net, w)).unwrap()[0];
        assert_eq!(s.share_modal, 1.0);
        assert_eq!(s.n_modal_communities, 1);
        assert!(s.total_variation.unwrap().abs() < 1e-15);
    }

    #[test]
    fn one_hot_rows_leave_variation_empty() {
        let mut b = NetworkBuilder::new();
        for id in ["a", "b", "c"] {
            b.add(id, "x", 1).neighborhood(id, "t");
        }
        let net = b.build();
        let w = array![[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]];
        let s = &summarize_neighborhoods(&net, &model_for(&net, w)).unwrap()[0];
        assert_eq!(s.share_modal, 1.0);
        assert_eq!(s.n_modal_communities, 1);
        assert_eq!(s.total_variation, None);
        assert!(!s.singleton);
    }

    #[test]
    fn mismatched_model_rejected() {
        let mut b = NetworkBuilder::new();
        b.add("a", "x", 1);
        let net = b.build();
        let mut other = NetworkBuilder::new();
        other.add("z", "x", 1);
        let model = model_for(&other.build(), array![[1.0]]);
        assert!(individual_metrics(&net, &model).is_err());
    }

    #[test]
    fn sizes_count_modal_labels() {
        let mut b = NetworkBuilder::new();
        for id in ["a", "b", "c"] {
            b.add(id, "x", 1);
        }
        let net = b.build();
        let w = array![[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]];
        assert_eq!(community_sizes(&model_for(&net, w)), vec![2, 1]);
    }
}
