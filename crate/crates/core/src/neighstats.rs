//! Standardized OLS for neighborhood-level regressions, including
//! two-way interactions between standardized main effects.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Numeric columns keyed by a row identifier. Missing cells are `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataTable {
    keys: Vec<String>,
    columns: Vec<(String, Vec<Option<f64>>)>,
}

impl DataTable {
    pub fn new(keys: Vec<String>) -> Self {
        DataTable {
            keys,
            columns: Vec::new(),
        }
    }

    pub fn with_column(mut self, name: &str, values: Vec<Option<f64>>) -> Result<Self> {
        self.push_column(name, values)?;
        Ok(self)
    }

    /// Convenience for fully observed columns.
    pub fn with_values(self, name: &str, values: &[f64]) -> Result<Self> {
        self.with_column(name, values.iter().map(|&v| Some(v)).collect())
    }

    pub fn push_column(&mut self, name: &str, values: Vec<Option<f64>>) -> Result<()> {
        if values.len() != self.keys.len() {
            return Err(Error::validation(format!(
                "column '{name}' has {} values for {} rows",
                values.len(),
                self.keys.len()
            )));
        }
        if self.column(name).is_some() {
            return Err(Error::validation(format!("duplicate column '{name}'")));
        }
        self.columns.push((name.to_string(), values));
        Ok(())
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn n_rows(&self) -> usize {
        self.keys.len()
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }

    pub fn column(&self, name: &str) -> Option<&[Option<f64>]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// Reads a CSV whose `key_column` identifies rows; every other column
    /// is parsed as numeric, with empty cells (or `NA`) treated as missing.
    pub fn load_csv(path: &Path, key_column: &str) -> Result<DataTable> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let headers = reader.headers()?.clone();
        let key_idx = headers
            .iter()
            .position(|h| h == key_column)
            .ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("missing key column '{key_column}'"),
            })?;
        let names: Vec<(usize, String)> = headers
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != key_idx)
            .map(|(i, h)| (i, h.to_string()))
            .collect();
        let mut keys = Vec::new();
        let mut values: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            keys.push(record.get(key_idx).unwrap_or_default().to_string());
            for (slot, (i, name)) in values.iter_mut().zip(&names) {
                let cell = record.get(*i).unwrap_or_default();
                slot.push(match cell {
                    "" | "NA" | "NaN" => None,
                    s => Some(s.parse::<f64>().map_err(|_| Error::Parse {
                        path: path.to_path_buf(),
                        line,
                        message: format!("column '{name}': '{s}' is not a number"),
                    })?),
                });
            }
        }
        let mut table = DataTable::new(keys);
        for ((_, name), column) in names.into_iter().zip(values) {
            table.push_column(&name, column)?;
        }
        Ok(table)
    }

    /// Left join: keeps this table's rows and adds `other`'s columns,
    /// missing where `other` has no matching key.
    pub fn join(&self, other: &DataTable) -> Result<DataTable> {
        let index: HashMap<&str, usize> = other.keys.iter().enumerate().map(|(i, k)| (k.as_str(), i)).collect();
        let mut out = self.clone();
        for (name, col) in &other.columns {
            let values = self
                .keys
                .iter()
                .map(|k| index.get(k.as_str()).and_then(|&i| col[i]))
                .collect();
            out.push_column(name, values)?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RegressionSpec {
    pub response: String,
    pub terms: Vec<String>,
    pub interactions: Vec<(String, String)>,
    pub standardize: bool,
}

impl RegressionSpec {
    pub fn new(response: &str, terms: &[&str]) -> Self {
        RegressionSpec {
            response: response.to_string(),
            terms: terms.iter().map(|t| t.to_string()).collect(),
            interactions: Vec::new(),
            standardize: true,
        }
    }

    pub fn with_interaction(mut self, a: &str, b: &str) -> Self {
        self.interactions.push((a.to_string(), b.to_string()));
        self
    }

    pub fn raw(mut self) -> Self {
        self.standardize = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.terms.iter().enumerate() {
            if self.terms[..i].contains(t) {
                return Err(Error::validation(format!("duplicate term '{t}'")));
            }
            if *t == self.response {
                return Err(Error::validation(format!("'{t}' is both response and term")));
            }
        }
        for (a, b) in &self.interactions {
            if !self.terms.contains(a) || !self.terms.contains(b) {
                return Err(Error::validation(format!(
                    "interaction {a}:{b} needs both members among the main terms"
                )));
            }
            if a == b {
                return Err(Error::validation(format!("interaction {a}:{b} repeats a term")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_value: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionFit {
    pub response: String,
    pub coefficients: Vec<Coefficient>,
    pub n: usize,
    /// Rows dropped for missing values.
    pub n_dropped: usize,
    pub df_resid: usize,
    pub r_squared: f64,
    pub standardized: bool,
}

impl RegressionFit {
    pub fn coefficient(&self, term: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.term == term)
    }

    /// Table layout: `term,estimate,se,p_value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["term", "estimate", "se", "t_value", "p_value"])?;
        for c in &self.coefficients {
            w.write_record([
                c.term.clone(),
                c.estimate.to_string(),
                c.std_error.to_string(),
                c.t_value.to_string(),
                c.p_value.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(&mut file, self)?;
        file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

pub const INTERCEPT: &str = "(Intercept)";

pub fn interaction_name(a: &str, b: &str) -> String {
    format!("{a}:{b}")
}

/// Centres on the sample mean and scales by the `n - 1` sample SD.
pub fn standardize(column: &[f64]) -> Result<Vec<f64>> {
    let n = column.len();
    if n < 2 {
        return Err(Error::validation("standardizing needs at least 2 values"));
    }
    let mean = column.iter().sum::<f64>() / n as f64;
    let var = column.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(Error::validation("cannot standardize a constant column"));
    }
    Ok(column.iter().map(|x| (x - mean) / sd).collect())
}

/// Least squares with an intercept via Householder QR. Main effects and the
/// response are standardized when `standardize` is set; interaction columns
/// are products of the (standardized) mains. Standard errors are classical
/// and p-values two-sided from Student's t with `n - p` degrees of freedom.
pub fn ols_fit(table: &DataTable, spec: &RegressionSpec) -> Result<RegressionFit> {
    spec.validate()?;
    let fetch = |name: &str| {
        table
            .column(name)
            .ok_or_else(|| Error::validation(format!("no column named '{name}'")))
    };
    let response = fetch(&spec.response)?;
    let mains = spec.terms.iter().map(|t| fetch(t)).collect::<Result<Vec<_>>>()?;

    let complete: Vec<usize> = (0..table.n_rows())
        .filter(|&r| response[r].is_some_and(f64::is_finite) && mains.iter().all(|c| c[r].is_some_and(f64::is_finite)))
        .collect();
    let n_dropped = table.n_rows() - complete.len();
    if n_dropped > 0 {
        log::warn!("dropped {n_dropped} rows with missing values");
    }
    let pick = |col: &[Option<f64>]| -> Vec<f64> { complete.iter().map(|&r| col[r].expect("complete case")).collect() };

    let prepare = |v: Vec<f64>| if spec.standardize { standardize(&v) } else { Ok(v) };
    let y = prepare(pick(response))?;
    let mut names = vec![INTERCEPT.to_string()];
    let mut columns = vec![vec![1.0; complete.len()]];
    for (t, col) in spec.terms.iter().zip(&mains) {
        names.push(t.clone());
        columns.push(prepare(pick(col))?);
    }
    for (a, b) in &spec.interactions {
        let ia = spec.terms.iter().position(|t| t == a).expect("validated") + 1;
        let ib = spec.terms.iter().position(|t| t == b).expect("validated") + 1;
        names.push(interaction_name(a, b));
        columns.push(columns[ia].iter().zip(&columns[ib]).map(|(x, y)| x * y).collect());
    }

    let n = complete.len();
    let p = columns.len();
    if n <= p {
        return Err(Error::validation(format!("{n} complete rows for {p} parameters")));
    }
    let x = DMatrix::from_fn(n, p, |r, c| columns[c][r]);
    let yv = DVector::from_vec(y);

    let qr = x.clone().qr();
    let r = qr.r();
    let max_diag = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..p).any(|i| r[(i, i)].abs() <= 1e-10 * max_diag.max(f64::MIN_POSITIVE)) {
        return Err(Error::Numerical("design matrix is rank deficient".into()));
    }
    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;

    let resid = &yv - &x * &beta;
    let ssr = resid.norm_squared();
    let y_mean = yv.mean();
    let sst: f64 = yv.iter().map(|v| (v - y_mean).powi(2)).sum();
    let df = n - p;
    let sigma2 = ssr / df as f64;

    // (X'X)^-1 = R^-1 R^-T
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::Numerical("R is singular".into()))?;
    let t_dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::Numerical(e.to_string()))?;

    let coefficients = names
        .into_iter()
        .enumerate()
        .map(|(c, term)| {
            let var = r_inv.row(c).norm_squared() * sigma2;
            let se = var.sqrt();
            let t = beta[c] / se;
            Coefficient {
                term,
                estimate: beta[c],
                std_error: se,
                t_value: t,
                p_value: if t.is_finite() { 2.0 * t_dist.sf(t.abs()) } else { 0.0 },
            }
        })
        .collect();

    Ok(RegressionFit {
        response: spec.response.clone(),
        coefficients,
        n,
        n_dropped,
        df_resid: df,
        r_squared: if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 },
        standardized: spec.standardize,
    })
}

/// [`ols_fit`] for a design with exactly one interaction term.
pub fn interaction_fit(table: &DataTable, spec: &RegressionSpec) -> Result<RegressionFit> {
    if spec.interactions.len() != 1 {
        return Err(Error::validation(format!(
            "interaction fit needs exactly one interaction, got {}",
            spec.interactions.len()
        )));
    }
    ols_fit(table, spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keys(n: usize) -> Vec<String> {
        (0..n).map(|i| i.to_string()).collect()
    }

    #[test]
    fn standardize_small() {
        assert_eq!(standardize(&[1.0, 2.0, 3.0]).unwrap(), vec![-1.0, 0.0, 1.0]);
        assert!(standardize(&[4.0, 4.0, 4.0]).is_err());
        assert!(standardize(&[4.0]).is_err());
    }

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.7 - 2.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let t = DataTable::new(keys(10))
            .with_values("x", &x)
            .unwrap()
            .with_values("y", &y)
            .unwrap();
        let fit = ols_fit(&t, &RegressionSpec::new("y", &["x"])).unwrap();
        assert!((fit.coefficient("x").unwrap().estimate - 1.0).abs() < 1e-12);
        assert!(fit.coefficient(INTERCEPT).unwrap().estimate.abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_product() {
        let a = standardize(&[1.0, 3.0, -2.0, 0.5, 4.0, -1.0, 2.5, 0.0]).unwrap();
        let b = standardize(&[2.0, -1.0, 0.0, 3.0, 1.0, -2.0, 0.5, 1.5]).unwrap();
        let y: Vec<f64> = a.iter().zip(&b).map(|(x, z)| x * z).collect();
        let t = DataTable::new(keys(8))
            .with_values("a", &a)
            .unwrap()
            .with_values("b", &b)
            .unwrap()
            .with_values("y", &y)
            .unwrap();
        let spec = RegressionSpec::new("y", &["a", "b"]).with_interaction("a", "b").raw();
        let fit = interaction_fit(&t, &spec).unwrap();
        assert!((fit.coefficient("a:b").unwrap().estimate - 1.0).abs() < 1e-9);
        assert!(fit.coefficient("a").unwrap().estimate.abs() < 1e-9);
        assert!(fit.coefficient("b").unwrap().estimate.abs() < 1e-9);
    }

    #[test]
    fn missing_rows_dropped() {
        let t = DataTable::new(keys(5))
            .with_column("x", vec![Some(1.0), Some(2.0), None, Some(4.0), Some(5.0)])
            .unwrap()
            .with_column("y", vec![Some(1.1), Some(1.9), Some(3.0), Some(4.2), Some(4.9)])
            .unwrap();
        let fit = ols_fit(&t, &RegressionSpec::new("y", &["x"])).unwrap();
        assert_eq!(fit.n, 4);
        assert_eq!(fit.n_dropped, 1);
    }

    #[test]
    fn rank_deficient_and_small_n() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let t = DataTable::new(keys(5))
            .with_values("x", &x)
            .unwrap()
            .with_values("x2", &x.map(|v| 2.0 * v + 1.0))
            .unwrap()
            .with_values("y", &[1.0, 3.0, 2.0, 5.0, 4.0])
            .unwrap();
        assert!(matches!(
            ols_fit(&t, &RegressionSpec::new("y", &["x", "x2"])),
            Err(Error::Numerical(_))
        ));
        let tiny = DataTable::new(keys(2))
            .with_values("x", &[1.0, 2.0])
            .unwrap()
            .with_values("y", &[1.0, 0.0])
            .unwrap();
        assert!(matches!(
            ols_fit(&tiny, &RegressionSpec::new("y", &["x"])),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn spec_validation() {
        assert!(RegressionSpec::new("y", &["a", "a"]).validate().is_err());
        assert!(RegressionSpec::new("y", &["a"])
            .with_interaction("a", "b")
            .validate()
            .is_err());
        assert!(RegressionSpec::new("y", &["y"]).validate().is_err());
        let t = DataTable::new(keys(3)).with_values("y", &[1.0, 2.0, 3.0]).unwrap();
        assert!(interaction_fit(&t, &RegressionSpec::new("y", &[])).is_err());
    }

    #[test]
    fn join_by_key() {
        let left = DataTable::new(vec!["a".into(), "b".into()])
            .with_values("x", &[1.0, 2.0])
            .unwrap();
        let right = DataTable::new(vec!["b".into()]).with_values("z", &[9.0]).unwrap();
        let j = left.join(&right).unwrap();
        assert_eq!(j.column("z").unwrap(), &[None, Some(9.0)]);
    }
}
