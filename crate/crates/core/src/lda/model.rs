use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::econet::duplicates;
use crate::error::{Error, Result};
use crate::lda::config::LdaConfig;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Row-sum tolerance for W and H.
const ROW_SUM_TOL: f64 = 1e-9;

/// Fitted communities: posterior-mean assignment vectors W (I x K) and
/// activity pattern profiles H (K x J).
#[derive(Debug, Clone, PartialEq)]
pub struct CommunityModel {
    config: LdaConfig,
    individuals: Vec<String>,
    locations: Vec<String>,
    w: Array2<f64>,
    h: Array2<f64>,
}

impl CommunityModel {
    /// Assembles a model, checking shapes, id uniqueness and that every row
    /// of W and H is a strictly positive probability vector.
    pub fn from_parts(
        config: LdaConfig,
        individuals: Vec<String>,
        locations: Vec<String>,
        w: Array2<f64>,
        h: Array2<f64>,
    ) -> Result<Self> {
        let k = config.k;
        if w.dim() != (individuals.len(), k) {
            return Err(Error::validation(format!(
                "W has shape {:?}, expected ({}, {k})",
                w.dim(),
                individuals.len()
            )));
        }
        if h.dim() != (k, locations.len()) {
            return Err(Error::validation(format!(
                "H has shape {:?}, expected ({k}, {})",
                h.dim(),
                locations.len()
            )));
        }
        if let Some(d) = duplicates(&individuals).first() {
            return Err(Error::validation(format!("duplicate individual id '{d}'")));
        }
        if let Some(d) = duplicates(&locations).first() {
            return Err(Error::validation(format!("duplicate location id '{d}'")));
        }
        for (name, m) in [("W", &w), ("H", &h)] {
            for (r, row) in m.rows().into_iter().enumerate() {
                if row.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
                    return Err(Error::validation(format!(
                        "{name} row {r} has a negative or non-finite entry"
                    )));
                }
                if (row.sum() - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::validation(format!("{name} row {r} sums to {}", row.sum())));
                }
            }
        }
        Ok(CommunityModel {
            config,
            individuals,
            locations,
            w,
            h,
        })
    }

    pub fn config(&self) -> &LdaConfig {
        &self.config
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn individuals(&self) -> &[String] {
        &self.individuals
    }

    pub fn locations(&self) -> &[String] {
        &self.locations
    }

    pub fn w(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn h(&self) -> &Array2<f64> {
        &self.h
    }

    pub fn assignment(&self, i: usize) -> ArrayView1<'_, f64> {
        self.w.row(i)
    }

    pub fn profile(&self, k: usize) -> ArrayView1<'_, f64> {
        self.h.row(k)
    }

    /// Probability that a report of individual `i` is at location `j`: W_i . H_j.
    pub fn token_probability(&self, i: usize, j: usize) -> Result<f64> {
        if i >= self.individuals.len() || j >= self.locations.len() {
            return Err(Error::IndexOutOfRange(format!(
                "({i}, {j}) outside {} x {}",
                self.individuals.len(),
                self.locations.len()
            )));
        }
        Ok(self.w.row(i).dot(&self.h.column(j)))
    }

    pub fn location_lookup(&self) -> HashMap<&str, usize> {
        self.locations
            .iter()
            .enumerate()
            .map(|(j, id)| (id.as_str(), j))
            .collect()
    }

    /// Relabels communities: new community `c` is old community `perm[c]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<CommunityModel> {
        let k = self.k();
        let mut seen = vec![false; k];
        if perm.len() != k || perm.iter().any(|&p| p >= k || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::validation("not a permutation of the communities"));
        }
        let w = Array2::from_shape_fn(self.w.dim(), |(i, c)| self.w[[i, perm[c]]]);
        let h = Array2::from_shape_fn(self.h.dim(), |(c, j)| self.h[[perm[c], j]]);
        let mut config = self.config.clone();
        if let crate::lda::Alpha::Vector(a) = &self.config.alpha {
            config.alpha = crate::lda::Alpha::Vector(perm.iter().map(|&p| a[p]).collect());
        }
        Ok(CommunityModel {
            config,
            individuals: self.individuals.clone(),
            locations: self.locations.clone(),
            w,
            h,
        })
    }

    /// Profiles re-indexed onto `location_ids`; locations unknown to the
    /// model get probability 0.
    pub fn profiles_over(&self, location_ids: &[String]) -> Array2<f64> {
        let lookup = self.location_lookup();
        Array2::from_shape_fn((self.k(), location_ids.len()), |(c, j)| {
            lookup
                .get(location_ids[j].as_str())
                .map_or(0.0, |&col| self.h[[c, col]])
        })
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = BufWriter::new(file);
        serde_json::to_writer(&mut writer, &ModelFile::from(self))?;
        writer.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        writer.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<CommunityModel> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let parsed: ModelFile = serde_json::from_reader(BufReader::new(file))?;
        parsed.try_into()
    }
}

/// On-disk model container. Matrices are stored row-major.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    config: LdaConfig,
    individuals: Vec<String>,
    locations: Vec<String>,
    w: Vec<f64>,
    h: Vec<f64>,
}

impl From<&CommunityModel> for ModelFile {
    fn from(m: &CommunityModel) -> Self {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            config: m.config.clone(),
            individuals: m.individuals.clone(),
            locations: m.locations.clone(),
            w: m.w.iter().copied().collect(),
            h: m.h.iter().copied().collect(),
        }
    }
}

impl TryFrom<ModelFile> for CommunityModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::validation(format!(
                "unsupported model format version {}",
                f.format_version
            )));
        }
        let k = f.config.k;
        let w =
            Array2::from_shape_vec((f.individuals.len(), k), f.w).map_err(|e| Error::validation(format!("W: {e}")))?;
        let h =
            Array2::from_shape_vec((k, f.locations.len()), f.h).map_err(|e| Error::validation(format!("H: {e}")))?;
        CommunityModel::from_parts(f.config, f.individuals, f.locations, w, h)
    }
}
