//! Inter-annotator agreement: Krippendorff's alpha (nominal) and Fleiss' kappa.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Units (rows) by annotators (columns); `None` is a missing observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMatrix {
    pub categories: Vec<String>,
    pub rows: Vec<Vec<Option<usize>>>,
}

impl LabelMatrix {
    /// Builds a matrix from category names, interning them in first-seen order.
    pub fn from_names<S: AsRef<str>>(rows: &[Vec<Option<S>>]) -> LabelMatrix {
        let mut index: BTreeMap<String, usize> = BTreeMap::new();
        let mut categories = Vec::new();
        let rows = rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|cell| {
                        cell.as_ref().map(|name| {
                            let name = name.as_ref().to_string();
                            *index.entry(name.clone()).or_insert_with(|| {
                                categories.push(name);
                                categories.len() - 1
                            })
                        })
                    })
                    .collect()
            })
            .collect();
        LabelMatrix { categories, rows }
    }

    /// Comma- or tab-separated rows; empty, `*`, `NA` and `.` cells are missing.
    /// Lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<LabelMatrix> {
        let rows: Vec<Vec<Option<String>>> = text
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
            .map(|l| {
                l.split([',', '\t'])
                    .map(|c| {
                        let c = c.trim();
                        (!matches!(c, "" | "*" | "NA" | ".")).then(|| c.to_string())
                    })
                    .collect()
            })
            .collect();
        if rows.is_empty() {
            return Err(Error::invalid("empty label matrix"));
        }
        Ok(LabelMatrix::from_names(&rows))
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.categories.len();
        if self.rows.iter().flatten().flatten().any(|&c| c >= k) {
            return Err(Error::invalid("cell refers to an unknown category"));
        }
        if self.rows.iter().flatten().flatten().count() < 2 {
            return Err(Error::invalid("label matrix needs at least two observations"));
        }
        Ok(())
    }
}

/// Nominal Krippendorff's alpha, `1 - D_o / D_e`, from the coincidence matrix.
///
/// Only units with at least two observations are pairable. When every pairable
/// value falls in one category (`D_e = 0`) and there is no disagreement the
/// result is 1.
pub fn krippendorff_alpha(m: &LabelMatrix) -> Result<f64> {
    m.validate()?;
    let k = m.categories.len();
    let mut coincidence = vec![vec![0.0f64; k]; k];
    let mut pairable_units = 0;
    for row in &m.rows {
        let mut counts = vec![0usize; k];
        row.iter().flatten().for_each(|&c| counts[c] += 1);
        let mu: usize = counts.iter().sum();
        if mu < 2 {
            continue;
        }
        pairable_units += 1;
        let w = 1.0 / (mu as f64 - 1.0);
        for c in 0..k {
            for d in 0..k {
                let pairs = if c == d { counts[c] * counts[c].saturating_sub(1) } else { counts[c] * counts[d] };
                coincidence[c][d] += pairs as f64 * w;
            }
        }
    }
    if pairable_units == 0 {
        return Err(Error::Undefined("alpha needs a unit with at least two observations".into()));
    }
    let marginals: Vec<f64> = coincidence.iter().map(|r| r.iter().sum()).collect();
    let n: f64 = marginals.iter().sum();
    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..k {
        for d in 0..k {
            if c != d {
                observed += coincidence[c][d];
                expected += marginals[c] * marginals[d];
            }
        }
    }
    if expected == 0.0 {
        return if observed == 0.0 { Ok(1.0) } else { Err(Error::Undefined("zero expected disagreement".into())) };
    }
    Ok(1.0 - (n - 1.0) * observed / expected)
}

/// Fleiss' kappa; every unit must carry the same number of observations.
pub fn fleiss_kappa(m: &LabelMatrix) -> Result<f64> {
    m.validate()?;
    let k = m.categories.len();
    let counts: Vec<Vec<usize>> = m
        .rows
        .iter()
        .map(|row| {
            let mut c = vec![0usize; k];
            row.iter().flatten().for_each(|&x| c[x] += 1);
            c
        })
        .collect();
    let raters: usize = counts[0].iter().sum();
    if counts.iter().any(|c| c.iter().sum::<usize>() != raters) {
        return Err(Error::invalid("Fleiss' kappa needs the same number of raters per unit"));
    }
    if raters < 2 {
        return Err(Error::invalid("Fleiss' kappa needs at least two raters per unit"));
    }
    let units = counts.len() as f64;
    let r = raters as f64;
    let p_bar = counts
        .iter()
        .map(|c| (c.iter().map(|&x| (x * x) as f64).sum::<f64>() - r) / (r * (r - 1.0)))
        .sum::<f64>()
        / units;
    let p_e: f64 = (0..k)
        .map(|j| {
            let pj = counts.iter().map(|c| c[j] as f64).sum::<f64>() / (units * r);
            pj * pj
        })
        .sum();
    if (1.0 - p_e).abs() < f64::EPSILON {
        return if (1.0 - p_bar).abs() < f64::EPSILON {
            Ok(1.0)
        } else {
            Err(Error::Undefined("chance agreement is 1".into()))
        };
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}
