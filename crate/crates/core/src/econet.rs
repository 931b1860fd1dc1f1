//! Two-mode individual x location networks: data model, CSV ingestion and
//! sample filtering.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Sparse individual x location count matrix plus residential neighborhoods.
///
/// Rows are stored as `(location index, count)` pairs sorted by location
/// index. Individual and location orders are first-appearance order of the
/// source data.
#[derive(Debug, Clone, PartialEq)]
pub struct EcoNetwork {
    individuals: Vec<String>,
    locations: Vec<String>,
    rows: Vec<Vec<(usize, u32)>>,
    neighborhood_of: Vec<Option<String>>,
    location_index: HashMap<String, usize>,
}

/// Accumulates edges in first-appearance order, summing duplicates.
#[derive(Debug, Default)]
pub struct NetworkBuilder {
    individuals: Vec<String>,
    individual_index: HashMap<String, usize>,
    locations: Vec<String>,
    location_index: HashMap<String, usize>,
    rows: Vec<HashMap<usize, u32>>,
    neighborhood_of: Vec<Option<String>>,
}

impl NetworkBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers an individual (possibly without any activity) and returns its index.
    pub fn individual(&mut self, id: &str) -> usize {
        if let Some(&i) = self.individual_index.get(id) {
            return i;
        }
        let i = self.individuals.len();
        self.individuals.push(id.to_string());
        self.individual_index.insert(id.to_string(), i);
        self.rows.push(HashMap::new());
        self.neighborhood_of.push(None);
        i
    }

    /// Adds `count` reports of `individual` at `location`. Zero counts register
    /// the individual only; a location enters the network with its first
    /// positive count.
    pub fn add(&mut self, individual: &str, location: &str, count: u32) -> &mut Self {
        let i = self.individual(individual);
        if count == 0 {
            return self;
        }
        let j = match self.location_index.get(location) {
            Some(&j) => j,
            None => {
                let j = self.locations.len();
                self.locations.push(location.to_string());
                self.location_index.insert(location.to_string(), j);
                j
            }
        };
        *self.rows[i].entry(j).or_insert(0) += count;
        self
    }

    pub fn neighborhood(&mut self, individual: &str, neighborhood: &str) -> &mut Self {
        let i = self.individual(individual);
        self.neighborhood_of[i] = Some(neighborhood.to_string());
        self
    }

    pub fn build(self) -> EcoNetwork {
        let rows = self
            .rows
            .into_iter()
            .map(|row| {
                let mut row: Vec<(usize, u32)> = row.into_iter().collect();
                row.sort_unstable_by_key(|&(j, _)| j);
                row
            })
            .collect();
        EcoNetwork {
            individuals: self.individuals,
            locations: self.locations,
            rows,
            neighborhood_of: self.neighborhood_of,
            location_index: self.location_index,
        }
    }
}

impl EcoNetwork {
    pub fn n_individuals(&self) -> usize {
        self.individuals.len()
    }

    pub fn n_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn individuals(&self) -> &[String] {
        &self.individuals
    }

    pub fn locations(&self) -> &[String] {
        &self.locations
    }

    /// Nonzero entries of row `i`, sorted by location index.
    pub fn row(&self, i: usize) -> &[(usize, u32)] {
        &self.rows[i]
    }

    pub fn count(&self, i: usize, j: usize) -> u32 {
        self.rows[i]
            .binary_search_by_key(&j, |&(l, _)| l)
            .map(|p| self.rows[i][p].1)
            .unwrap_or(0)
    }

    /// Row sum N_i.
    pub fn n_tokens(&self, i: usize) -> u64 {
        self.rows[i].iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn total_tokens(&self) -> u64 {
        (0..self.n_individuals()).map(|i| self.n_tokens(i)).sum()
    }

    /// Location tokens of individual `i` in bag-of-tokens form, in location order.
    pub fn tokens(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.rows[i]
            .iter()
            .flat_map(|&(j, c)| std::iter::repeat_n(j, c as usize))
    }

    pub fn neighborhood(&self, i: usize) -> Option<&str> {
        self.neighborhood_of[i].as_deref()
    }

    pub fn location_index(&self, id: &str) -> Option<usize> {
        self.location_index.get(id).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty() || self.total_tokens() == 0
    }

    /// Restricts to the given individuals (kept in the given order) and
    /// drops location columns left without any positive count.
    pub fn subset(&self, keep: &[usize]) -> EcoNetwork {
        let mut used = vec![false; self.n_locations()];
        for &i in keep {
            for &(j, _) in &self.rows[i] {
                used[j] = true;
            }
        }
        let mut remap = vec![usize::MAX; self.n_locations()];
        let mut locations = Vec::new();
        for (j, id) in self.locations.iter().enumerate() {
            if used[j] {
                remap[j] = locations.len();
                locations.push(id.clone());
            }
        }
        let rows = keep
            .iter()
            .map(|&i| self.rows[i].iter().map(|&(j, c)| (remap[j], c)).collect())
            .collect();
        let location_index = locations.iter().enumerate().map(|(j, id)| (id.clone(), j)).collect();
        EcoNetwork {
            individuals: keep.iter().map(|&i| self.individuals[i].clone()).collect(),
            locations,
            rows,
            neighborhood_of: keep.iter().map(|&i| self.neighborhood_of[i].clone()).collect(),
            location_index,
        }
    }

    /// Checks the post-filtering invariants: every row sum is positive and
    /// every location column has a nonzero entry.
    pub fn validate(&self) -> Result<()> {
        if self.n_individuals() == 0 {
            return Err(Error::EmptyNetwork("no individuals".into()));
        }
        let mut used = vec![false; self.n_locations()];
        for (i, row) in self.rows.iter().enumerate() {
            if row.iter().all(|&(_, c)| c == 0) {
                return Err(Error::validation(format!(
                    "individual '{}' has no activity locations",
                    self.individuals[i]
                )));
            }
            for &(j, c) in row {
                if c > 0 {
                    used[j] = true;
                }
            }
        }
        if let Some(j) = used.iter().position(|u| !u) {
            return Err(Error::validation(format!(
                "location '{}' has no reports",
                self.locations[j]
            )));
        }
        Ok(())
    }

    /// Writes the network as a long edge list with a `count` column.
    pub fn write_edgelist(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["individual_id", "location_id", "count"])?;
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, c) in row {
                w.write_record([self.individuals[i].as_str(), self.locations[j].as_str(), &c.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Writes a roster for the network's individuals. All individuals are
    /// written as in-area; those without a neighborhood get an empty id.
    pub fn write_roster(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["individual_id", "neighborhood_id", "in_area"])?;
        for (i, id) in self.individuals.iter().enumerate() {
            w.write_record([id.as_str(), self.neighborhood(i).unwrap_or(""), "1"])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RosterEntry {
    pub neighborhood: String,
    pub in_area: bool,
}

/// Per-individual residential neighborhood and study-area flag.
#[derive(Debug, Clone, Default)]
pub struct Roster {
    order: Vec<String>,
    entries: HashMap<String, RosterEntry>,
}

impl Roster {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, individual: &str, neighborhood: &str, in_area: bool) {
        let entry = RosterEntry {
            neighborhood: neighborhood.to_string(),
            in_area,
        };
        if self.entries.insert(individual.to_string(), entry).is_none() {
            self.order.push(individual.to_string());
        }
    }

    pub fn get(&self, individual: &str) -> Option<&RosterEntry> {
        self.entries.get(individual)
    }

    pub fn individuals(&self) -> &[String] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Reads a roster CSV with header `individual_id,neighborhood_id,in_area`.
    pub fn load(path: &Path) -> Result<Roster> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let headers = reader.headers()?.clone();
        let col = |name: &str| -> Result<usize> {
            headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("missing column '{name}'"),
            })
        };
        let (c_id, c_nb, c_area) = (col("individual_id")?, col("neighborhood_id")?, col("in_area")?);

        let mut roster = Roster::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            };
            let id = record
                .get(c_id)
                .ok_or_else(|| parse_err("missing individual_id".into()))?;
            let nb = record
                .get(c_nb)
                .ok_or_else(|| parse_err("missing neighborhood_id".into()))?;
            let in_area = match record.get(c_area) {
                Some("1") => true,
                Some("0") => false,
                other => return Err(parse_err(format!("in_area must be 0 or 1, got {other:?}"))),
            };
            if id.is_empty() {
                return Err(parse_err("empty individual_id".into()));
            }
            if roster.entries.contains_key(id) {
                return Err(Error::validation(format!(
                    "{}:{line}: duplicate roster entry for '{id}'",
                    path.display()
                )));
            }
            roster.insert(id, nb, in_area);
        }
        Ok(roster)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeListFormat {
    /// `individual_id,location_id[,count]`, one row per report or per summed edge.
    LongCsv,
}

/// Reads an edge list, summing duplicate rows. When a roster is supplied,
/// every individual in the edge list must appear in it; roster members
/// without edges are appended (in roster order) with empty rows.
pub fn load_edgelist(path: &Path, format: EdgeListFormat, roster: Option<&Roster>) -> Result<EcoNetwork> {
    let EdgeListFormat::LongCsv = format;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let (c_ind, c_loc) = match (find("individual_id"), find("location_id")) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: "header must contain individual_id and location_id".into(),
            })
        }
    };
    let c_count = find("count");

    let mut builder = NetworkBuilder::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let ind = record.get(c_ind).filter(|s| !s.is_empty());
        let loc = record.get(c_loc).filter(|s| !s.is_empty());
        let (ind, loc) = match (ind, loc) {
            (Some(i), Some(l)) => (i, l),
            _ => return Err(parse_err("missing individual_id or location_id".into())),
        };
        let count = match c_count.and_then(|c| record.get(c)) {
            None | Some("") => 1,
            Some(raw) => {
                let value: i64 = raw
                    .parse()
                    .map_err(|_| parse_err(format!("count '{raw}' is not an integer")))?;
                if value < 0 {
                    return Err(Error::validation(format!(
                        "{}:{line}: negative count {value}",
                        path.display()
                    )));
                }
                u32::try_from(value).map_err(|_| parse_err(format!("count {value} too large")))?
            }
        };
        if let Some(roster) = roster {
            if roster.get(ind).is_none() {
                return Err(Error::validation(format!(
                    "{}:{line}: individual '{ind}' missing from roster",
                    path.display()
                )));
            }
        }
        builder.add(ind, loc, count);
    }

    if let Some(roster) = roster {
        for id in roster.individuals() {
            let entry = &roster.entries[id];
            builder.individual(id);
            builder.neighborhood(id, &entry.neighborhood);
        }
    }
    Ok(builder.build())
}

/// Which individuals the sample filters removed, and why.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FilterReport {
    pub dropped_no_locations: Vec<String>,
    pub dropped_no_shared_locations: Vec<String>,
    pub dropped_out_of_area: Vec<String>,
    pub dropped_sparse_neighborhood: Vec<String>,
    pub kept: usize,
}

impl FilterReport {
    pub fn n_dropped(&self) -> usize {
        self.dropped_no_locations.len()
            + self.dropped_no_shared_locations.len()
            + self.dropped_out_of_area.len()
            + self.dropped_sparse_neighborhood.len()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(&mut file, self)?;
        file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Fate {
    Kept,
    NoLocations,
    OutOfArea,
    NoShared,
    Sparse,
}

/// Applies the sample exclusions in order: no activity locations,
/// out-of-area home, no location shared with anyone else, then
/// neighborhoods with fewer than `min_per_neighborhood` remaining members.
///
/// The last two rules are repeated until neither removes anyone, so the
/// result is a fixed point of the filter. Neighborhoods come from the roster.
pub fn apply_filters(
    net: &EcoNetwork,
    roster: &Roster,
    min_per_neighborhood: usize,
) -> Result<(EcoNetwork, FilterReport)> {
    if min_per_neighborhood == 0 {
        return Err(Error::validation("min_per_neighborhood must be at least 1"));
    }
    let entries = net
        .individuals
        .iter()
        .map(|id| {
            roster
                .get(id)
                .ok_or_else(|| Error::validation(format!("individual '{id}' missing from roster")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut fate = vec![Fate::Kept; net.n_individuals()];
    for i in 0..net.n_individuals() {
        if net.n_tokens(i) == 0 {
            fate[i] = Fate::NoLocations;
        } else if !entries[i].in_area {
            fate[i] = Fate::OutOfArea;
        }
    }

    loop {
        let mut changed = false;

        let mut visitors = vec![0usize; net.n_locations()];
        for i in (0..net.n_individuals()).filter(|&i| fate[i] == Fate::Kept) {
            for &(j, _) in net.row(i) {
                visitors[j] += 1;
            }
        }
        for (i, f) in fate.iter_mut().enumerate() {
            if *f == Fate::Kept && net.row(i).iter().all(|&(j, _)| visitors[j] < 2) {
                *f = Fate::NoShared;
                changed = true;
            }
        }

        let mut sizes: HashMap<&str, usize> = HashMap::new();
        for i in (0..net.n_individuals()).filter(|&i| fate[i] == Fate::Kept) {
            *sizes.entry(entries[i].neighborhood.as_str()).or_default() += 1;
        }
        for i in 0..net.n_individuals() {
            if fate[i] == Fate::Kept && sizes[entries[i].neighborhood.as_str()] < min_per_neighborhood {
                fate[i] = Fate::Sparse;
                changed = true;
            }
        }

        if !changed {
            break;
        }
    }

    let mut report = FilterReport::default();
    let mut keep = Vec::new();
    for (i, f) in fate.iter().enumerate() {
        let id = net.individuals[i].clone();
        match f {
            Fate::Kept => keep.push(i),
            Fate::NoLocations => report.dropped_no_locations.push(id),
            Fate::OutOfArea => report.dropped_out_of_area.push(id),
            Fate::NoShared => report.dropped_no_shared_locations.push(id),
            Fate::Sparse => report.dropped_sparse_neighborhood.push(id),
        }
    }
    report.kept = keep.len();
    if keep.is_empty() {
        return Err(Error::EmptyNetwork("every individual was filtered out".into()));
    }

    let mut filtered = net.subset(&keep);
    for (slot, &i) in filtered.neighborhood_of.iter_mut().zip(&keep) {
        *slot = Some(entries[i].neighborhood.clone());
    }
    Ok((filtered, report))
}

/// Ids that occur more than once in `ids`.
pub(crate) fn duplicates<'a>(ids: impl IntoIterator<Item = &'a String>) -> Vec<&'a String> {
    let mut seen = HashSet::new();
    ids.into_iter().filter(|id| !seen.insert(*id)).collect()
}
