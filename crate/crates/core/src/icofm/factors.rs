//! Quarterly factor frames and reference price series.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CATEGORIES: [&str; 5] = ["supply", "demand", "geopolitics", "finance", "macro"];

/// Factor values per quarter; columns follow `names`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorFrame {
    /// (category, name) per column.
    pub names: Vec<(String, String)>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FactorRow {
    quarter: usize,
    category: String,
    name: String,
    value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct PriceRow {
    quarter: usize,
    price: f64,
}

/// Property name of the `k`-th factor of a category.
pub fn factor_name(category: &str, k: usize) -> String {
    format!("{category}_{k:02}")
}

impl FactorFrame {
    pub fn quarters(&self) -> usize {
        self.values.len()
    }

    /// AR(1) series per factor, standardized scale, seeded.
    pub fn synthetic(per_category: usize, quarters: usize, seed: u64) -> Self {
        let names: Vec<(String, String)> =
            CATEGORIES.iter().flat_map(|c| (0..per_category).map(move |k| (c.to_string(), factor_name(c, k)))).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.6).expect("valid normal");
        let mut state = vec![0.0f64; names.len()];
        let values = (0..quarters)
            .map(|_| {
                for x in state.iter_mut() {
                    *x = 0.8 * *x + noise.sample(&mut rng);
                }
                state.clone()
            })
            .collect();
        FactorFrame { names, values }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|(_, n)| n == name)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["quarter", "category", "name", "value"])?;
        for (q, row) in self.values.iter().enumerate() {
            for ((c, n), v) in self.names.iter().zip(row) {
                w.write_record([q.to_string(), c.clone(), n.clone(), format!("{v:?}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `quarter,category,name,value` rows. Quarters must start at 0,
    /// be contiguous, and list the same factors in the same order.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        check_headers(&mut r, &["quarter", "category", "name", "value"])?;
        let mut names: Vec<(String, String)> = Vec::new();
        let mut values: Vec<Vec<f64>> = Vec::new();
        let mut slot = 0usize;
        for (i, rec) in r.deserialize::<FactorRow>().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| Error::Load { row, reason: e.to_string() })?;
            let bad = |reason: String| Error::Load { row, reason };
            if !rec.value.is_finite() {
                return Err(bad("non-finite value".into()));
            }
            let current = values.len().checked_sub(1);
            if Some(rec.quarter) != current {
                let expected = values.len();
                if rec.quarter != expected {
                    return Err(bad(format!("expected quarter {expected}, found {}", rec.quarter)));
                }
                if expected > 0 && slot != names.len() {
                    return Err(bad(format!("quarter {} has {slot} of {} factors", expected - 1, names.len())));
                }
                values.push(Vec::with_capacity(names.len()));
                slot = 0;
            }
            let key = (rec.category, rec.name);
            if values.len() == 1 {
                if names.contains(&key) {
                    return Err(bad(format!("factor `{}` repeated", key.1)));
                }
                names.push(key);
            } else if names.get(slot) != Some(&key) {
                return Err(bad(format!("expected factor `{}`", names.get(slot).map_or("<none>", |k| &k.1))));
            }
            values.last_mut().expect("pushed").push(rec.value);
            slot += 1;
        }
        if values.len() > 1 && slot != names.len() {
            return Err(Error::Load { row: 0, reason: "last quarter is incomplete".into() });
        }
        Ok(FactorFrame { names, values })
    }
}

fn check_headers<R: Read>(r: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Load { row: 1, reason: format!("expected header {}", expected.join(",")) });
    }
    Ok(())
}

pub fn write_prices<W: Write>(prices: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["quarter", "price"])?;
    for (q, p) in prices.iter().enumerate() {
        w.write_record([q.to_string(), format!("{p:?}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `quarter,price` rows with contiguous quarters from 0 and positive prices.
pub fn read_prices<R: Read>(input: R) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_reader(input);
    check_headers(&mut r, &["quarter", "price"])?;
    let mut out = Vec::new();
    for (i, rec) in r.deserialize::<PriceRow>().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Load { row, reason: e.to_string() })?;
        if rec.quarter != out.len() {
            return Err(Error::Load { row, reason: format!("expected quarter {}, found {}", out.len(), rec.quarter) });
        }
        if !(rec.price.is_finite() && rec.price > 0.0) {
            return Err(Error::Load { row, reason: format!("price {} is not positive", rec.price) });
        }
        out.push(rec.price);
    }
    Ok(out)
}

pub fn load_factors(path: &std::path::Path) -> Result<FactorFrame> {
    FactorFrame::read_csv(std::fs::File::open(path)?)
}

pub fn load_prices(path: &std::path::Path) -> Result<Vec<f64>> {
    read_prices(std::fs::File::open(path)?)
}

/// Mean of daily values per quarter (a trailing partial quarter included).
pub fn quarterly_means(daily: &[f64], days_per_quarter: usize) -> Vec<f64> {
    daily.chunks(days_per_quarter.max(1)).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
}

/// Groups frame columns by category.
pub fn by_category(frame: &FactorFrame) -> BTreeMap<&str, Vec<usize>> {
    let mut out: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, (c, _)) in frame.names.iter().enumerate() {
        out.entry(c.as_str()).or_default().push(i);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_round_trip() {
        let f = FactorFrame::synthetic(2, 4, 1);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        assert_eq!(FactorFrame::read_csv(buf.as_slice()).unwrap(), f);
    }

    #[test]
    fn gap_is_reported_with_row() {
        let csv = "quarter,category,name,value\n0,supply,a,1\n1,supply,a,1\n3,supply,a,1\n";
        match FactorFrame::read_csv(csv.as_bytes()) {
            Err(Error::Load { row, .. }) => assert_eq!(row, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn prices_validate() {
        assert_eq!(read_prices("quarter,price\n0,1.5\n1,2\n".as_bytes()).unwrap(), vec![1.5, 2.0]);
        assert!(read_prices("quarter,price\n0,1.5\n2,2\n".as_bytes()).is_err());
        assert!(read_prices("quarter,price\n0,abc\n".as_bytes()).is_err());
        assert!(read_prices("q,price\n0,1\n".as_bytes()).is_err());
    }
}
