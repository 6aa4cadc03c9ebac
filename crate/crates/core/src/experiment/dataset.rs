use std::io::Read;
use std::path::Path;

use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};
use crate::sim::MonthlyPools;

/// Weekly unit sales and the monthly pools of daily demand (millions of units) derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct WeeklySalesDataset {
    pub rows: Vec<(NaiveDate, f64)>,
    pub pools: MonthlyPools,
    pub skipped: usize,
}

/// Daily demand sample of one week: `weekly / 7 / 10⁶`, rounded half-up.
pub fn daily_sample(weekly: f64) -> f64 {
    (weekly / 7.0 / 1e6 + 0.5).floor()
}

/// Reads a `date,units` CSV with ISO dates. Malformed rows are skipped and counted.
pub fn ingest_weekly_sales<R: Read>(reader: R) -> Result<WeeklySalesDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(dc), Some(uc)) = (col("date"), col("units")) else {
        return Err(Error::Dataset(format!("expected columns `date` and `units`, found {headers:?}")));
    };
    let mut rows = Vec::new();
    let mut skipped = 0;
    for record in rdr.records() {
        let parsed = record.ok().and_then(|r| {
            let date = NaiveDate::parse_from_str(r.get(dc)?, "%Y-%m-%d").ok()?;
            let units: f64 = r.get(uc)?.parse().ok()?;
            (units.is_finite() && units >= 0.0).then_some((date, units))
        });
        match parsed {
            Some(row) => rows.push(row),
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} malformed rows");
    }
    let mut pools = vec![Vec::new(); 12];
    for (date, units) in &rows {
        pools[date.month0() as usize].push(daily_sample(*units));
    }
    if let Some(m) = pools.iter().position(Vec::is_empty) {
        return Err(Error::Dataset(format!("no samples for month {}", m + 1)));
    }
    Ok(WeeklySalesDataset {
        rows,
        pools: MonthlyPools { pools },
        skipped,
    })
}

pub fn ingest_weekly_sales_file(path: &Path) -> Result<WeeklySalesDataset> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Dataset(format!("cannot open {}: {e}", path.display())))?;
    ingest_weekly_sales(file)
}
