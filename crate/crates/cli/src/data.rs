//! CSV and Newick ingestion, and the CSV writers shared by the subcommands.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rt_pmcmc::model::{LatentPath, ObservedSeries};
use rt_pmcmc::phylo::{align_to_epidemic, discretize, parse_newick, DailyLineages, DatedTree, TreeSlices};

use crate::error::{CliError, Context, Kind, Result};

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)
        .context_kind(Kind::Io, format!("cannot open {}", path.display()))
}

fn column(headers: &csv::StringRecord, path: &Path, names: &[&str]) -> Result<usize> {
    headers
        .iter()
        .position(|h| names.contains(&h))
        .ok_or_else(|| CliError::parse(format!("{}: missing column '{}'", path.display(), names[0])))
}

fn parse_count(field: &str, path: &Path, line: u64, what: &str) -> Result<u64> {
    if field.starts_with('-') {
        return Err(CliError::parse(format!("{}:{line}: negative {what} '{field}'", path.display())));
    }
    field
        .parse()
        .map_err(|_| CliError::parse(format!("{}:{line}: {what} '{field}' is not a non-negative integer", path.display())))
}

/// Read `day,observed` rows into a dense series over days `1..=max day`.
/// Absent days and empty values are missing. An `observed_y` column is
/// accepted too, so simulated prevalence files can be fed back directly.
pub fn ingest_prevalence(path: &Path) -> Result<ObservedSeries> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let day_col = column(&headers, path, &["day"])?;
    let obs_col = column(&headers, path, &["observed", "observed_y"])?;
    let mut by_day: BTreeMap<u64, Option<u64>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let day = parse_count(&record[day_col], path, line, "day")?;
        if day == 0 {
            return Err(CliError::parse(format!("{}:{line}: days are numbered from 1", path.display())));
        }
        let value = match &record[obs_col] {
            "" | "NA" | "na" => None,
            v => Some(parse_count(v, path, line, "count")?),
        };
        if by_day.insert(day, value).is_some() {
            return Err(CliError::parse(format!("{}:{line}: duplicate day {day}", path.display())));
        }
    }
    let n = by_day.keys().next_back().copied().unwrap_or(0) as usize;
    let mut y = vec![None; n];
    for (day, v) in by_day {
        y[day as usize - 1] = v;
    }
    Ok(ObservedSeries::new(y))
}

/// Two-column `label,time` table; a header row is optional.
pub fn read_tip_dates(path: &Path) -> Result<HashMap<String, f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .context_kind(Kind::Io, format!("cannot open {}", path.display()))?;
    let mut out = HashMap::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != 2 {
            return Err(CliError::parse(format!("{}:{}: expected 2 columns", path.display(), i + 1)));
        }
        match record[1].parse::<f64>() {
            Ok(t) if t.is_finite() => {
                out.insert(record[0].to_string(), t);
            }
            _ if i == 0 => continue,
            _ => {
                return Err(CliError::parse(format!(
                    "{}:{}: '{}' is not a decimal time",
                    path.display(),
                    i + 1,
                    &record[1]
                )))
            }
        }
    }
    Ok(out)
}

/// Parse a Newick file, optionally re-dated from a tip-date table.
pub fn load_tree(newick: &Path, tip_dates: Option<&Path>, most_recent_tip_time: f64) -> Result<DatedTree> {
    let text = fs::read_to_string(newick).context_kind(Kind::Io, format!("cannot read {}", newick.display()))?;
    let tree = parse_newick(&text, most_recent_tip_time)
        .map_err(|e| CliError::from(e).with_context(newick.display()))?;
    match tip_dates {
        None => Ok(tree),
        Some(p) => Ok(tree.with_tip_dates(&read_tip_dates(p)?)?),
    }
}

/// Slice a tree and map the slices onto `n_days` epidemic days (or as many
/// days as there are slices). Returns the lineages and any dropped slices.
pub fn tree_lineages(
    tree: &DatedTree,
    day_length: f64,
    present: Option<f64>,
    n_days: Option<usize>,
) -> Result<(TreeSlices, DailyLineages, usize, u64)> {
    let present = present.or(tree.latest_time()).unwrap_or(0.0);
    let slices = discretize(tree, day_length, present)?;
    let n = n_days.unwrap_or(slices.len());
    let aligned = align_to_epidemic(&slices, n);
    Ok((slices, aligned.lineages, aligned.dropped_slices, aligned.dropped_coalescences))
}

/// `day,a,c` rows, dense over `1..=max day`.
pub fn read_lineages(path: &Path) -> Result<DailyLineages> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let (d, a, c) = (
        column(&headers, path, &["day"])?,
        column(&headers, path, &["a"])?,
        column(&headers, path, &["c"])?,
    );
    let mut rows = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let day = parse_count(&record[d], path, line, "day")?;
        if day == 0 {
            return Err(CliError::parse(format!("{}:{line}: days are numbered from 1", path.display())));
        }
        let v = (parse_count(&record[a], path, line, "a")?, parse_count(&record[c], path, line, "c")?);
        if rows.insert(day, v).is_some() {
            return Err(CliError::parse(format!("{}:{line}: duplicate day {day}", path.display())));
        }
    }
    let n = rows.keys().next_back().copied().unwrap_or(0) as usize;
    let mut out = DailyLineages::empty(n);
    for (day, (a, c)) in rows {
        out.a[day as usize - 1] = a;
        out.c[day as usize - 1] = c;
    }
    Ok(out)
}

/// Birth-rate column of a `day,beta,...` file (truth or fixed rates), ordered by day.
pub fn read_beta_column(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let (d, b) = (column(&headers, path, &["day"])?, column(&headers, path, &["beta"])?);
    let mut rows = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let day = parse_count(&record[d], path, line, "day")?;
        let beta: f64 = record[b]
            .parse()
            .map_err(|_| CliError::parse(format!("{}:{line}: bad beta '{}'", path.display(), &record[b])))?;
        rows.insert(day, beta);
    }
    Ok(rows.into_values().collect())
}

pub fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).context_kind(Kind::Io, format!("cannot create {}", path.display()))
}

pub fn write_slices(path: &Path, slices: &TreeSlices) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["days_from_present", "a", "c"])?;
    for (s, (a, c)) in slices.a.iter().zip(&slices.c).enumerate() {
        w.write_record([s.to_string(), a.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_lineages(path: &Path, lineages: &DailyLineages) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["day", "a", "c"])?;
    for (d, (a, c)) in lineages.a.iter().zip(&lineages.c).enumerate() {
        w.write_record([(d + 1).to_string(), a.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_path(path: &Path, latent: &LatentPath) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["day", "beta", "x"])?;
    for d in 1..=latent.n_days() {
        w.write_record([d.to_string(), latent.beta[d - 1].to_string(), latent.x[d].to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn opt(v: Option<u64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// `day,observed` in the ingestible format.
pub fn write_observed(path: &Path, observed: &ObservedSeries) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["day", "observed"])?;
    for (d, y) in observed.y.iter().enumerate() {
        w.write_record([(d + 1).to_string(), opt(*y)])?;
    }
    w.flush()?;
    Ok(())
}
