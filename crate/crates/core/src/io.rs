//! File formats: system JSON, hourly `hour,entity_id,value` series,
//! forecast history and scenario sets.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{MarketDay, PriceScenarioSet, System};

pub fn read_system(path: &Path) -> Result<System<f64>> {
    let text = fs::read_to_string(path)?;
    parse_system(&text)
}

pub fn parse_system(text: &str) -> Result<System<f64>> {
    Ok(serde_json::from_str(text)?)
}

pub fn system_to_json(system: &System<f64>) -> Result<String> {
    Ok(serde_json::to_string_pretty(system)?)
}

#[derive(Debug, Deserialize, Serialize)]
struct SeriesRow {
    hour: usize,
    entity_id: String,
    value: f64,
}

/// Hourly values keyed by entity id; `series[id][h - 1]` is hour `h`.
pub type HourlySeries = BTreeMap<String, Vec<f64>>;

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// Parses a `hour,entity_id,value` CSV. Every entity must cover hours
/// `1..=n` without gaps.
pub fn parse_series<R: Read>(reader: R) -> Result<HourlySeries> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut raw: BTreeMap<String, BTreeMap<usize, f64>> = BTreeMap::new();
    for rec in rdr.deserialize::<SeriesRow>() {
        let row = rec.map_err(csv_error)?;
        if row.hour == 0 {
            return Err(Error::Parse {
                line: 0,
                message: format!("hour must be 1-based for {}", row.entity_id),
            });
        }
        raw.entry(row.entity_id).or_default().insert(row.hour, row.value);
    }
    let mut out = BTreeMap::new();
    for (id, by_hour) in raw {
        let n = by_hour.len();
        if by_hour.keys().copied().ne(1..=n) {
            return Err(Error::Parse {
                line: 0,
                message: format!("entity {id} does not cover hours 1..={n} contiguously"),
            });
        }
        out.insert(id, by_hour.into_values().collect());
    }
    Ok(out)
}

pub fn read_series(path: &Path) -> Result<HourlySeries> {
    parse_series(fs::File::open(path)?)
}

pub fn write_series<W: Write>(writer: W, series: &HourlySeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (id, values) in series {
        for (h, v) in values.iter().enumerate() {
            w.serialize(SeriesRow {
                hour: h + 1,
                entity_id: id.clone(),
                value: *v,
            })
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Entity id of the real-time (actual) net load in the load file.
pub const LOAD_RT: &str = "rt";
/// Entity id of the day-ahead net load in the load file.
pub const LOAD_DA: &str = "da";

/// Assembles a market day from the load, DA-LMP and RT-LMP files. A load
/// file without a `da` entity uses the real-time load for day-ahead.
pub fn market_day_from_series(
    label: &str,
    load: &HourlySeries,
    da_lmp: &HourlySeries,
    rt_lmp: &HourlySeries,
) -> Result<MarketDay<f64>> {
    let net_load = load
        .get(LOAD_RT)
        .cloned()
        .ok_or_else(|| Error::config(format!("load file has no '{LOAD_RT}' entity")))?;
    let da_load = load.get(LOAD_DA).cloned().unwrap_or_else(|| net_load.clone());
    Ok(MarketDay {
        label: label.to_string(),
        net_load,
        da_load,
        da_lmp: da_lmp.clone(),
        rt_lmp_actual: rt_lmp.clone(),
    })
}

/// One row of the forecast training history.
#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct HistoryRow {
    pub hour: usize,
    pub entity_id: String,
    pub rt_lmp: f64,
    pub da_lmp: f64,
}

/// Paired RT/DA price history per node, in hour order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PriceHistory {
    pub rt: BTreeMap<String, Vec<f64>>,
    pub da: BTreeMap<String, Vec<f64>>,
}

impl PriceHistory {
    pub fn len(&self) -> usize {
        self.rt.values().map(Vec::len).min().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn parse_history<R: Read>(reader: R) -> Result<PriceHistory> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut raw: BTreeMap<String, BTreeMap<usize, (f64, f64)>> = BTreeMap::new();
    for rec in rdr.deserialize::<HistoryRow>() {
        let row = rec.map_err(csv_error)?;
        raw.entry(row.entity_id).or_default().insert(row.hour, (row.rt_lmp, row.da_lmp));
    }
    let mut out = PriceHistory::default();
    for (id, by_hour) in raw {
        let (rt, da): (Vec<f64>, Vec<f64>) = by_hour.into_values().unzip();
        out.rt.insert(id.clone(), rt);
        out.da.insert(id, da);
    }
    Ok(out)
}

pub fn read_history(path: &Path) -> Result<PriceHistory> {
    parse_history(fs::File::open(path)?)
}

pub fn write_history<W: Write>(writer: W, history: &PriceHistory) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (id, rt) in &history.rt {
        let da = &history.da[id];
        for (h, (r, d)) in rt.iter().zip(da).enumerate() {
            w.serialize(HistoryRow {
                hour: h + 1,
                entity_id: id.clone(),
                rt_lmp: *r,
                da_lmp: *d,
            })
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize, Serialize)]
struct ScenarioRow {
    scenario: usize,
    node: String,
    hour: usize,
    price: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct WeightRow {
    scenario: usize,
    weight: f64,
}

/// Writes a scenario set as `scenario,node,hour,price` plus a
/// `scenario,weight` sidecar.
pub fn write_scenarios<W1: Write, W2: Write>(prices: W1, weights: W2, set: &PriceScenarioSet<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(prices);
    for (s, by_node) in set.prices.iter().enumerate() {
        for (n, row) in by_node.iter().enumerate() {
            for (k, p) in row.iter().enumerate() {
                w.serialize(ScenarioRow {
                    scenario: s + 1,
                    node: set.nodes[n].clone(),
                    hour: set.first_hour + k,
                    price: *p,
                })
                .map_err(csv_error)?;
            }
        }
    }
    w.flush()?;
    let mut w = csv::Writer::from_writer(weights);
    for (s, p) in set.weights.iter().enumerate() {
        w.serialize(WeightRow { scenario: s + 1, weight: *p }).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_scenarios<R1: Read, R2: Read>(
    prices: R1,
    weights: R2,
    forecast_origin: usize,
    last_hour: usize,
) -> Result<PriceScenarioSet<f64>> {
    let mut rdr = csv::Reader::from_reader(weights);
    let mut w = BTreeMap::new();
    for rec in rdr.deserialize::<WeightRow>() {
        let row = rec.map_err(csv_error)?;
        w.insert(row.scenario, row.weight);
    }
    let mut rdr = csv::Reader::from_reader(prices);
    let mut raw: BTreeMap<usize, BTreeMap<String, BTreeMap<usize, f64>>> = BTreeMap::new();
    let mut nodes: Vec<String> = Vec::new();
    for rec in rdr.deserialize::<ScenarioRow>() {
        let row = rec.map_err(csv_error)?;
        if !nodes.contains(&row.node) {
            nodes.push(row.node.clone());
        }
        raw.entry(row.scenario).or_default().entry(row.node).or_default().insert(row.hour, row.price);
    }
    if raw.keys().ne(w.keys()) {
        return Err(Error::config("scenario ids in price and weight files differ"));
    }
    let first_hour = forecast_origin + 1;
    let span = (last_hour + 1).saturating_sub(first_hour);
    let mut prices = Vec::new();
    for by_node in raw.values() {
        let mut traj = Vec::new();
        for n in &nodes {
            let hours = by_node
                .get(n)
                .ok_or_else(|| Error::config(format!("scenario is missing node {n}")))?;
            let row: Vec<f64> = (first_hour..=last_hour)
                .map(|h| {
                    hours
                        .get(&h)
                        .copied()
                        .ok_or_else(|| Error::config(format!("scenario is missing hour {h} at node {n}")))
                })
                .collect::<Result<_>>()?;
            debug_assert_eq!(row.len(), span);
            traj.push(row);
        }
        prices.push(traj);
    }
    Ok(PriceScenarioSet {
        forecast_origin,
        first_hour,
        last_hour,
        nodes,
        prices,
        weights: w.into_values().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn malformed_row_reports_line() {
        let text = "hour,entity_id,value\n1,rt,10\n2,rt,abc\n";
        match parse_series(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn gaps_in_hours_are_rejected() {
        let text = "hour,entity_id,value\n1,rt,10\n3,rt,11\n";
        assert!(parse_series(text.as_bytes()).is_err());
    }

    #[test]
    fn series_round_trip() {
        let mut s = HourlySeries::new();
        s.insert("rt".into(), vec![1.5, 2.0, 3.25]);
        s.insert("da".into(), vec![1.0, 2.0, 3.0]);
        let mut buf = Vec::new();
        write_series(&mut buf, &s).unwrap();
        assert_eq!(parse_series(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn scenario_round_trip() {
        let set = PriceScenarioSet {
            forecast_origin: 2,
            first_hour: 3,
            last_hour: 4,
            nodes: vec!["a".into(), "b".into()],
            prices: vec![vec![vec![1.0, 2.0], vec![3.0, 4.0]], vec![vec![5.0, 6.0], vec![7.0, 8.0]]],
            weights: vec![0.25, 0.75],
        };
        let (mut p, mut w) = (Vec::new(), Vec::new());
        write_scenarios(&mut p, &mut w, &set).unwrap();
        let back = parse_scenarios(p.as_slice(), w.as_slice(), 2, 4).unwrap();
        assert_eq!(back, set);
    }
}
