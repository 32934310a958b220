//! Telemetry, price and battery-spec files, plus the synthetic fleet
//! generator.
//!
//! File formats (comma separated, one header line):
//!
//! * telemetry: `home_id,timestamp,load_kw,solar_kw`, one row per home-minute
//! * prices: `timestamp,price_usd_per_mwh`, one row per 15-minute interval
//! * specs: `home_id,e_max_kwh,p_ch_max_kw,p_dis_max_kw,eta_ch,eta_dis,n_batteries`
//!
//! Timestamps are ISO-8601 local minutes (`2025-08-01T14:30`). Prices are
//! converted from USD/MWh to USD/kWh on ingest. Homes with any missing minute
//! are rejected, never imputed.

mod synth;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;

use crate::domain::{BatterySpec, HomeTelemetry, PriceSeries, TimeGrid, INTERVAL_MINUTES};
use crate::error::{Error, Result};

pub use synth::{generate_fleet, Archetype, PriceProfile, SynthConfig};

pub const TELEMETRY_HEADER: [&str; 4] = ["home_id", "timestamp", "load_kw", "solar_kw"];
pub const PRICES_HEADER: [&str; 2] = ["timestamp", "price_usd_per_mwh"];
pub const SPECS_HEADER: [&str; 7] = [
    "home_id",
    "e_max_kwh",
    "p_ch_max_kw",
    "p_dis_max_kw",
    "eta_ch",
    "eta_dis",
    "n_batteries",
];

pub const TELEMETRY_FILE: &str = "telemetry.csv";
pub const PRICES_FILE: &str = "prices.csv";
pub const SPECS_FILE: &str = "specs.csv";

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M";

#[derive(Debug, Clone, PartialEq)]
pub struct FleetDataset {
    pub grid: TimeGrid,
    pub homes: Vec<HomeTelemetry>,
    pub prices: PriceSeries,
}

/// Per-home realized interval averages.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSeries {
    pub load: Vec<f64>,
    pub solar: Vec<f64>,
}

impl FleetDataset {
    pub fn new(grid: TimeGrid, homes: Vec<HomeTelemetry>, prices: PriceSeries) -> Result<Self> {
        let ds = FleetDataset { grid, homes, prices };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.prices.len() != self.grid.n_intervals() {
            return Err(Error::Coverage(format!(
                "{} prices for {} intervals",
                self.prices.len(),
                self.grid.n_intervals()
            )));
        }
        let mut seen = HashMap::new();
        for home in &self.homes {
            if seen.insert(home.home_id.as_str(), ()).is_some() {
                return Err(Error::Validation(format!("duplicate home_id {}", home.home_id)));
            }
            home.validate(&self.grid)?;
        }
        Ok(())
    }

    pub fn home_index(&self, home_id: &str) -> Option<usize> {
        self.homes.iter().position(|h| h.home_id == home_id)
    }

    pub fn interval_series(&self, home: usize) -> IntervalSeries {
        let h = &self.homes[home];
        let avg = |v: &[f64]| crate::domain::resample_to_quarter_hour(v).expect("validated grid length");
        IntervalSeries {
            load: avg(&h.load_kw),
            solar: avg(&h.solar_kw),
        }
    }

    /// A copy restricted to the listed homes, in the given order.
    pub fn subset(&self, homes: &[usize]) -> FleetDataset {
        FleetDataset {
            grid: self.grid,
            homes: homes.iter().map(|&i| self.homes[i].clone()).collect(),
            prices: self.prices.clone(),
        }
    }
}

/// A home dropped during ingestion.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub home_id: String,
    pub reason: String,
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    ["%Y-%m-%dT%H:%M", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%d %H:%M:%S"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

pub fn format_timestamp(ts: NaiveDateTime) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

pub(crate) struct CsvRows {
    path: PathBuf,
    reader: csv::Reader<File>,
}

impl CsvRows {
    pub(crate) fn open(path: &Path, header: &[&str]) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let found = reader.headers()?.clone();
        let expected: Vec<&str> = header.to_vec();
        if found.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("expected header `{}`", expected.join(",")),
            });
        }
        Ok(CsvRows {
            path: path.to_path_buf(),
            reader,
        })
    }

    pub(crate) fn for_each(mut self, mut f: impl FnMut(&csv::StringRecord, &dyn Fn(String) -> Error) -> Result<()>) -> Result<()> {
        let mut record = csv::StringRecord::new();
        loop {
            let more = self.reader.read_record(&mut record).map_err(|e| Error::Parse {
                path: self.path.clone(),
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            if !more {
                return Ok(());
            }
            let line = record.position().map_or(0, |p| p.line());
            let path = self.path.clone();
            let err = move |message: String| Error::Parse {
                path: path.clone(),
                line,
                message,
            };
            f(&record, &err)?;
        }
    }
}

pub(crate) fn field<T: std::str::FromStr>(record: &csv::StringRecord, idx: usize, name: &str, err: &dyn Fn(String) -> Error) -> Result<T> {
    let raw = record.get(idx).ok_or_else(|| err(format!("missing field {name}")))?;
    raw.parse().map_err(|_| err(format!("cannot parse {name} from {raw:?}")))
}

fn timestamp_field(record: &csv::StringRecord, idx: usize, err: &dyn Fn(String) -> Error) -> Result<NaiveDateTime> {
    let raw = record.get(idx).ok_or_else(|| err("missing timestamp".into()))?;
    parse_timestamp(raw).ok_or_else(|| err(format!("cannot parse timestamp {raw:?}")))
}

pub fn read_prices(path: &Path) -> Result<(TimeGrid, PriceSeries)> {
    let mut rows: Vec<(NaiveDateTime, f64)> = Vec::new();
    CsvRows::open(path, &PRICES_HEADER)?.for_each(|rec, err| {
        let ts = timestamp_field(rec, 0, err)?;
        let price: f64 = field(rec, 1, "price_usd_per_mwh", err)?;
        if !price.is_finite() {
            return Err(err(format!("non-finite price {price}")));
        }
        rows.push((ts, price));
        Ok(())
    })?;
    if rows.is_empty() {
        return Err(Error::Coverage(format!("{} has no prices", path.display())));
    }
    rows.sort_by_key(|r| r.0);
    let start = rows[0].0;
    for (k, (ts, _)) in rows.iter().enumerate() {
        let expected = start + chrono::Duration::minutes((k * INTERVAL_MINUTES) as i64);
        if *ts != expected {
            return Err(Error::Coverage(format!(
                "expected a price for {} but found {}",
                format_timestamp(expected),
                format_timestamp(*ts)
            )));
        }
    }
    let grid = TimeGrid::new(start, rows.len() * INTERVAL_MINUTES)
        .map_err(|e| Error::Coverage(format!("price grid: {e}")))?;
    let prices = PriceSeries::from_usd_per_mwh(rows.into_iter().map(|r| r.1).collect())?;
    Ok((grid, prices))
}

pub fn read_specs(path: &Path) -> Result<Vec<(String, BatterySpec)>> {
    let mut specs: Vec<(String, BatterySpec)> = Vec::new();
    let mut seen = HashMap::new();
    CsvRows::open(path, &SPECS_HEADER)?.for_each(|rec, err| {
        let home_id: String = field(rec, 0, "home_id", err)?;
        let spec = BatterySpec {
            e_max: field(rec, 1, "e_max_kwh", err)?,
            p_ch_max: field(rec, 2, "p_ch_max_kw", err)?,
            p_dis_max: field(rec, 3, "p_dis_max_kw", err)?,
            eta_ch: field(rec, 4, "eta_ch", err)?,
            eta_dis: field(rec, 5, "eta_dis", err)?,
            n_batteries: field(rec, 6, "n_batteries", err)?,
        };
        spec.validate().map_err(|e| err(format!("home {home_id}: {e}")))?;
        if seen.insert(home_id.clone(), ()).is_some() {
            return Err(err(format!("duplicate home_id {home_id}")));
        }
        specs.push((home_id, spec));
        Ok(())
    })?;
    Ok(specs)
}

fn load(telemetry_path: &Path, prices_path: &Path, specs_path: &Path, drop_incomplete: bool) -> Result<(FleetDataset, Vec<Rejection>)> {
    let (grid, prices) = read_prices(prices_path)?;
    let specs: HashMap<String, BatterySpec> = read_specs(specs_path)?.into_iter().collect();

    struct Partial {
        load: Vec<f64>,
        solar: Vec<f64>,
    }
    let n = grid.n_minutes();
    let mut order: Vec<String> = Vec::new();
    let mut partial: HashMap<String, Partial> = HashMap::new();
    CsvRows::open(telemetry_path, &TELEMETRY_HEADER)?.for_each(|rec, err| {
        let home_id: String = field(rec, 0, "home_id", err)?;
        let ts = timestamp_field(rec, 1, err)?;
        let load: f64 = field(rec, 2, "load_kw", err)?;
        let solar: f64 = field(rec, 3, "solar_kw", err)?;
        if !(load.is_finite() && load >= 0.0) || !(solar.is_finite() && solar >= 0.0) {
            return Err(Error::Validation(format!(
                "home {home_id} at {}: load_kw={load}, solar_kw={solar} must be finite and nonnegative",
                format_timestamp(ts)
            )));
        }
        let minute = grid.minute_index(ts).ok_or_else(|| {
            Error::Coverage(format!(
                "home {home_id}: telemetry at {} lies outside the price grid",
                format_timestamp(ts)
            ))
        })?;
        let entry = partial.entry(home_id.clone()).or_insert_with(|| {
            order.push(home_id.clone());
            Partial {
                load: vec![f64::NAN; n],
                solar: vec![f64::NAN; n],
            }
        });
        if !entry.load[minute].is_nan() {
            return Err(err(format!("duplicate minute {} for home {home_id}", format_timestamp(ts))));
        }
        entry.load[minute] = load;
        entry.solar[minute] = solar;
        Ok(())
    })?;

    let mut homes = Vec::with_capacity(order.len());
    let mut rejected = Vec::new();
    for home_id in order {
        let p = partial.remove(&home_id).expect("every ordered home has rows");
        let missing = p.load.iter().filter(|v| v.is_nan()).count();
        if missing > 0 {
            let first = p.load.iter().position(|v| v.is_nan()).unwrap_or(0);
            let reason = format!(
                "missing {missing} of {n} minutes (first gap at {})",
                format_timestamp(grid.minute_timestamp(first))
            );
            if drop_incomplete {
                rejected.push(Rejection { home_id, reason });
                continue;
            }
            return Err(Error::Incomplete { home_id, reason });
        }
        let battery = *specs
            .get(&home_id)
            .ok_or_else(|| Error::Validation(format!("home {home_id} has no battery spec")))?;
        homes.push(HomeTelemetry {
            home_id,
            load_kw: p.load,
            solar_kw: p.solar,
            battery,
        });
    }
    Ok((FleetDataset::new(grid, homes, prices)?, rejected))
}

/// Loads and validates a fleet; any incomplete home is an error.
pub fn load_fleet(telemetry_path: &Path, prices_path: &Path, specs_path: &Path) -> Result<FleetDataset> {
    load(telemetry_path, prices_path, specs_path, false).map(|(ds, _)| ds)
}

/// Like [`load_fleet`], but drops incomplete homes and reports why.
pub fn load_fleet_partial(telemetry_path: &Path, prices_path: &Path, specs_path: &Path) -> Result<(FleetDataset, Vec<Rejection>)> {
    load(telemetry_path, prices_path, specs_path, true)
}

/// Loads `telemetry.csv`, `prices.csv` and `specs.csv` from one directory.
pub fn load_fleet_dir(dir: &Path) -> Result<FleetDataset> {
    load_fleet(&dir.join(TELEMETRY_FILE), &dir.join(PRICES_FILE), &dir.join(SPECS_FILE))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn write_telemetry(ds: &FleetDataset, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", TELEMETRY_HEADER.join(",")).map_err(io)?;
    let stamps: Vec<String> = (0..ds.grid.n_minutes())
        .map(|m| format_timestamp(ds.grid.minute_timestamp(m)))
        .collect();
    for home in &ds.homes {
        for (m, ts) in stamps.iter().enumerate() {
            writeln!(w, "{},{},{},{}", home.home_id, ts, home.load_kw[m], home.solar_kw[m]).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn write_prices(ds: &FleetDataset, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", PRICES_HEADER.join(",")).map_err(io)?;
    for (k, p) in ds.prices.usd_per_mwh().iter().enumerate() {
        writeln!(w, "{},{}", format_timestamp(ds.grid.interval_start(k)), p).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_specs(ds: &FleetDataset, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", SPECS_HEADER.join(",")).map_err(io)?;
    for h in &ds.homes {
        let b = &h.battery;
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            h.home_id, b.e_max, b.p_ch_max, b.p_dis_max, b.eta_ch, b.eta_dis, b.n_batteries
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes the three canonical files into `dir` (created if needed).
pub fn write_fleet(ds: &FleetDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_telemetry(ds, &dir.join(TELEMETRY_FILE))?;
    write_prices(ds, &dir.join(PRICES_FILE))?;
    write_specs(ds, &dir.join(SPECS_FILE))
}
