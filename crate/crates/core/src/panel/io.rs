//! CSV ingestion and export.
//!
//! One file per feature; header `date,<asset>,<asset>,...`; first column an
//! ISO-8601 date. Recognized files in a panel directory:
//!
//! | file                 | content                                   |
//! |----------------------|-------------------------------------------|
//! | `returns.csv`        | daily returns (preferred when present)    |
//! | `prices.csv`         | adjusted close, converted to returns      |
//! | `volume.csv`         | optional                                  |
//! | `sentiment.csv`      | optional, empty cells mean neutral (0)    |
//! | `news.csv`           | optional scalar news feature, empty = 0   |
//! | `index_returns.csv`  | optional single-column index returns      |
//! | `index_prices.csv`   | optional single-column index prices       |
//!
//! Assets with an incomplete price/return or volume history are dropped.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use chrono::NaiveDate;
use log::warn;
use ndarray::Array2;

use super::{compute_returns, realized_volatility, AssetPanel, Feature, PanelError, Result, ReturnKind};

#[derive(Clone, Debug)]
pub struct LoadOptions {
    pub return_kind: ReturnKind,
    /// Rolling window for the realized-volatility feature; `None` skips it.
    pub volatility_window: Option<usize>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { return_kind: ReturnKind::Simple, volatility_window: Some(30) }
    }
}

/// Raw feature table with explicit gaps.
#[derive(Clone, Debug)]
pub struct FeatureTable {
    pub dates: Vec<NaiveDate>,
    pub ids: Vec<String>,
    /// `values[asset][day]`
    pub values: Vec<Vec<Option<f64>>>,
}

fn csv_err(path: &Path, message: impl ToString) -> PanelError {
    PanelError::Csv { path: path.display().to_string(), message: message.to_string() }
}

pub fn read_feature_csv(path: &Path) -> Result<FeatureTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.len() < 2 {
        return Err(csv_err(path, "header needs a date column and at least one series"));
    }
    let ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut dates = Vec::new();
    let mut values = vec![Vec::new(); ids.len()];
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| csv_err(path, format!("row {}: bad date `{}`: {e}", line + 2, &record[0])))?;
        dates.push(date);
        for (a, column) in values.iter_mut().enumerate() {
            let cell = record.get(a + 1).unwrap_or("");
            let v = if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
                None
            } else {
                Some(
                    cell.parse::<f64>()
                        .map_err(|e| csv_err(path, format!("row {}: bad value `{cell}`: {e}", line + 2)))?,
                )
            };
            column.push(v);
        }
    }
    Ok(FeatureTable { dates, ids, values })
}

pub fn write_feature_csv(path: &Path, dates: &[NaiveDate], ids: &[String], columns: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["date".to_string()];
    header.extend(ids.iter().cloned());
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (t, date) in dates.iter().enumerate() {
        let mut row = vec![date.format("%Y-%m-%d").to_string()];
        row.extend(columns.iter().map(|c| format!("{}", c[t])));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| PanelError::Io { path: path.display().to_string(), source: e })
}

/// Writes every stored feature except volatility (which is derived on load)
/// plus the index return series.
pub fn write_panel_dir(panel: &AssetPanel, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| PanelError::Io { path: dir.display().to_string(), source: e })?;
    for (f, m) in panel.features() {
        if f == Feature::Volatility {
            continue;
        }
        let cols: Vec<Vec<f64>> = m.columns().into_iter().map(|c| c.to_vec()).collect();
        write_feature_csv(&dir.join(format!("{}.csv", f.name())), panel.dates(), panel.assets(), &cols)?;
    }
    if let Some(idx) = panel.index_return() {
        write_feature_csv(
            &dir.join("index_returns.csv"),
            panel.dates(),
            &[crate::node::INDEX_ID.to_string()],
            &[idx.to_vec()],
        )?;
    }
    Ok(())
}

fn reindex(table: &FeatureTable, dates: &[NaiveDate], id: &str) -> Option<Vec<Option<f64>>> {
    let a = table.ids.iter().position(|x| x == id)?;
    let rows: HashMap<NaiveDate, usize> = table.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    Some(dates.iter().map(|d| rows.get(d).and_then(|&r| table.values[a][r])).collect())
}

fn single_column(table: &FeatureTable, path: &Path) -> Result<Vec<Option<f64>>> {
    if table.ids.len() != 1 {
        return Err(csv_err(path, "index file must have exactly one series column"));
    }
    Ok(table.values[0].clone())
}

pub fn load_panel_dir(dir: &Path, opts: &LoadOptions) -> Result<AssetPanel> {
    let returns_path = dir.join("returns.csv");
    let prices_path = dir.join("prices.csv");
    // (asset, return series) for assets with complete history.
    let (dates, mut base): (Vec<NaiveDate>, Vec<(String, Vec<f64>)>) = if returns_path.exists() {
        let t = read_feature_csv(&returns_path)?;
        let mut cols = Vec::new();
        for (id, col) in t.ids.iter().zip(&t.values) {
            match col.iter().copied().collect::<Option<Vec<f64>>>() {
                Some(v) => cols.push((id.clone(), v)),
                None => warn!("dropping asset {id}: incomplete return history"),
            }
        }
        (t.dates, cols)
    } else if prices_path.exists() {
        let t = read_feature_csv(&prices_path)?;
        let mut cols = Vec::new();
        for (id, col) in t.ids.iter().zip(&t.values) {
            match col.iter().copied().collect::<Option<Vec<f64>>>() {
                Some(p) => cols.push((id.clone(), compute_returns(id, &t.dates, &p, opts.return_kind)?)),
                None => warn!("dropping asset {id}: incomplete price history"),
            }
        }
        (t.dates[1..].to_vec(), cols)
    } else {
        return Err(PanelError::Csv {
            path: dir.display().to_string(),
            message: "neither returns.csv nor prices.csv present".into(),
        });
    };

    let optional = |name: &str| -> Result<Option<FeatureTable>> {
        let p = dir.join(name);
        if p.exists() {
            read_feature_csv(&p).map(Some)
        } else {
            Ok(None)
        }
    };

    let volume = optional("volume.csv")?;
    let mut volume_cols = Vec::new();
    if let Some(vt) = &volume {
        base.retain(|(id, _)| {
            match reindex(vt, &dates, id).and_then(|c| c.into_iter().collect::<Option<Vec<f64>>>()) {
                Some(c) => {
                    volume_cols.push(c);
                    true
                }
                None => {
                    warn!("dropping asset {id}: incomplete volume history");
                    false
                }
            }
        });
    }

    let n = dates.len();
    let assets: Vec<String> = base.iter().map(|(id, _)| id.clone()).collect();
    let to_matrix = |cols: &[Vec<f64>]| Array2::from_shape_fn((n, cols.len()), |(t, a)| cols[a][t]);

    let mut features = BTreeMap::new();
    let return_cols: Vec<Vec<f64>> = base.iter().map(|(_, c)| c.clone()).collect();
    features.insert(Feature::Return, to_matrix(&return_cols));
    if volume.is_some() {
        features.insert(Feature::Volume, to_matrix(&volume_cols));
    }
    for (name, feature) in [("sentiment.csv", Feature::Sentiment), ("news.csv", Feature::News)] {
        if let Some(t) = optional(name)? {
            let cols: Vec<Vec<f64>> = assets
                .iter()
                .map(|id| {
                    reindex(&t, &dates, id)
                        .map(|c| c.into_iter().map(|v| v.unwrap_or(0.0)).collect())
                        .unwrap_or_else(|| vec![0.0; n])
                })
                .collect();
            features.insert(feature, to_matrix(&cols));
        }
    }

    let index = if let Some(t) = optional("index_returns.csv")? {
        single_column(&t, &dir.join("index_returns.csv"))?;
        reindex(&t, &dates, &t.ids[0])
    } else if let Some(t) = optional("index_prices.csv")? {
        let p = single_column(&t, &dir.join("index_prices.csv"))?
            .into_iter()
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| csv_err(&dir.join("index_prices.csv"), "gap in index prices"))?;
        let r = compute_returns(&t.ids[0], &t.dates, &p, opts.return_kind)?;
        let table = FeatureTable {
            dates: t.dates[1..].to_vec(),
            ids: t.ids.clone(),
            values: vec![r.into_iter().map(Some).collect()],
        };
        Some(reindex(&table, &dates, &t.ids[0]).unwrap_or_default())
    } else {
        None
    };
    let index = match index {
        Some(col) => Some(
            col.into_iter()
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| csv_err(dir, "index series does not cover every panel date"))?,
        ),
        None => None,
    };

    let mut panel = AssetPanel::new(dates, assets, features, index)?;
    if let Some(w) = opts.volatility_window {
        panel = with_volatility(&panel, w)?;
    }
    Ok(panel)
}

/// Adds the rolling volatility feature and drops the leading `window − 1`
/// days on which it is undefined.
pub fn with_volatility(panel: &AssetPanel, window: usize) -> Result<AssetPanel> {
    let r = panel.returns();
    let n = panel.n_days();
    let cols = r.columns().into_iter().map(|c| realized_volatility(&c.to_vec(), window)).collect::<Result<Vec<_>>>()?;
    let trimmed = panel.slice_days(window - 1..n);
    let mut features: BTreeMap<Feature, Array2<f64>> = trimmed.features().map(|(f, m)| (f, m.clone())).collect();
    features.insert(Feature::Volatility, Array2::from_shape_fn((n - window + 1, cols.len()), |(t, a)| cols[a][t]));
    Ok(trimmed.with_features(features, trimmed.index_return().map(<[f64]>::to_vec)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn prices_to_panel_with_gaps() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("prices.csv"),
            "date,AAA,BBB,CCC\n2021-01-04,100,50,10\n2021-01-05,110,,11\n2021-01-06,99,52,12\n",
        )
        .unwrap();
        fs::write(dir.path().join("sentiment.csv"), "date,AAA,CCC\n2021-01-05,0.5,\n2021-01-06,-0.25,0.1\n").unwrap();
        fs::write(dir.path().join("index_prices.csv"), "date,SPX\n2021-01-04,1000\n2021-01-05,1010\n2021-01-06,1000\n")
            .unwrap();
        let opts = LoadOptions { volatility_window: None, ..Default::default() };
        let p = load_panel_dir(dir.path(), &opts).unwrap();
        assert_eq!(p.assets(), &["AAA".to_string(), "CCC".to_string()]);
        assert_eq!(p.n_days(), 2);
        let r = p.returns();
        assert!((r[[0, 0]] - 0.10).abs() < 1e-12 && (r[[1, 0]] + 0.10).abs() < 1e-12);
        let s = p.feature(Feature::Sentiment).unwrap();
        assert_eq!(s.column(1).to_vec(), vec![0.0, 0.1]);
        let idx = p.index_return().unwrap();
        assert!((idx[0] - 0.01).abs() < 1e-12);
    }

    #[test]
    fn non_positive_price_names_asset_and_date() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("prices.csv"), "date,AAA\n2021-01-04,100\n2021-01-05,0\n").unwrap();
        let err = load_panel_dir(dir.path(), &LoadOptions::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("AAA") && msg.contains("2021-01-05"), "{msg}");
    }

    #[test]
    fn write_then_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let dates = super::super::calendar::trading_days_from(NaiveDate::from_ymd_opt(2022, 3, 1).unwrap(), 40);
        let mut f = BTreeMap::new();
        f.insert(Feature::Return, Array2::from_shape_fn((40, 2), |(t, a)| ((t + a) as f64 * 0.7).sin() * 0.01));
        f.insert(Feature::Sentiment, Array2::from_shape_fn((40, 2), |(t, a)| ((t * a) as f64).cos() / 3.0));
        let idx: Vec<f64> = (0..40).map(|t| (t as f64).sin() * 1e-3).collect();
        let p = AssetPanel::new(dates, vec!["X".into(), "Y".into()], f, Some(idx)).unwrap();
        write_panel_dir(&p, dir.path()).unwrap();
        let q = load_panel_dir(dir.path(), &LoadOptions { volatility_window: None, ..Default::default() }).unwrap();
        assert_eq!(p, q);
        let v = load_panel_dir(dir.path(), &LoadOptions::default()).unwrap();
        assert_eq!(v.n_days(), 40 - 29);
        assert!(v.feature(Feature::Volatility).is_some());
        assert_eq!(v.dates()[0], p.dates()[29]);
    }
}
