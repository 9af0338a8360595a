use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use csht_core::eval::{evaluate, SeedSummary};
use csht_core::granger::{build_hypergraph, sliding_window_update, WindowRange};
use csht_core::model::{read_checkpoint, train, write_checkpoint, SampleSet};
use csht_core::panel::io::{load_panel_dir, write_panel_dir};
use csht_core::pipeline::PreparedPanel;
use csht_core::synthetic::gen_var_process;
use csht_core::{AssetPanel, CshtModel, GraphSchedule, LaggedNode, PlantedSpec, Task};
use log::info;

use crate::{CliError, RunConfig};

type Result<T> = std::result::Result<T, CliError>;

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn checkpoint_path(cfg: &RunConfig, seed: u64) -> PathBuf {
    cfg.out_dir.join(format!("checkpoint_seed{seed}.bin"))
}

fn graphs_path(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("graphs.json")
}

fn load_panel(cfg: &RunConfig) -> Result<AssetPanel> {
    let dir = cfg.panel_dir();
    if !dir.is_dir() {
        return Err(CliError::Config(format!(
            "panel directory {} not found; run `generate` or set data.panel_dir",
            dir.display()
        )));
    }
    Ok(load_panel_dir(&dir, &cfg.load_options())?)
}

fn load_schedule(cfg: &RunConfig) -> Result<GraphSchedule> {
    let path = graphs_path(cfg);
    if !path.exists() {
        return Err(CliError::Config(format!("{} not found; run `discover` first", path.display())));
    }
    Ok(GraphSchedule::from_json(&read(&path)?)?)
}

fn load_checkpoint(cfg: &RunConfig, seed: u64) -> Result<CshtModel> {
    let path = checkpoint_path(cfg, seed);
    let file = fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
    Ok(read_checkpoint(BufReader::new(file))?)
}

/// Simulates a planted panel from the `[synthetic]` section and the first
/// seed. Writes the panel CSVs and `truth.txt`.
pub fn cmd_generate(cfg: &RunConfig) -> Result<String> {
    let seed = cfg.seeds[0];
    let spec = PlantedSpec::from_template(&cfg.template(), seed)?;
    let (panel, truth) = gen_var_process(&spec)?;
    let dir = cfg.panel_dir();
    write_panel_dir(&panel, &dir)?;
    write(&cfg.out_dir.join("truth.txt"), &truth.to_text())?;
    Ok(format!(
        "generated {} days x {} assets (seed {seed}) into {}\n{}",
        panel.n_days(),
        panel.n_assets(),
        dir.display(),
        truth.to_text()
    ))
}

/// Fits the graph schedule. With `window_length = 0` a single graph is fitted
/// on the training split and applied to every date; otherwise one graph per
/// sliding window over the whole panel.
pub fn cmd_discover(cfg: &RunConfig) -> Result<String> {
    let panel = load_panel(cfg)?;
    let prep = PreparedPanel::new(&panel, &cfg.time_split(&panel)?)?;
    let dcfg = cfg.discovery_config();
    let schedule = if cfg.discovery.window_length == 0 {
        let mut graph = build_hypergraph(&prep.normalized.slice_days(prep.days[0].clone()), &dcfg)?;
        info!("single graph fitted on {}..{}", graph.window.start, graph.window.end);
        graph.window = WindowRange { start: panel.dates()[0], end: panel.dates()[panel.n_days() - 1] };
        GraphSchedule::single(graph)
    } else {
        sliding_window_update(&prep.normalized, cfg.discovery.window_length, cfg.discovery.stride, &dcfg)?
    };
    write(&cfg.out_dir.join("norm_stats.txt"), &prep.stats.to_text())?;
    write(&graphs_path(cfg), &schedule.to_json()?)?;
    write(&cfg.out_dir.join("hypergraph.txt"), &schedule.to_text())?;
    let summary = discovery_summary(&schedule);
    write(&cfg.out_dir.join("discovery_summary.txt"), &summary)?;
    Ok(summary)
}

fn discovery_summary(schedule: &GraphSchedule) -> String {
    let mut out = String::new();
    let mut hist = [0usize; 10];
    let _ = writeln!(out, "window,hyperedges,series_edges,tests,skipped_series");
    for g in &schedule.graphs {
        let _ = writeln!(
            out,
            "{}..{},{},{},{},{}",
            g.window.start,
            g.window.end,
            g.hyperedges.len(),
            g.edge_count(),
            g.n_tests,
            g.skipped.len()
        );
        for (h, c) in hist.iter_mut().zip(&g.p_histogram) {
            *h += c;
        }
    }
    let _ = writeln!(out, "p-value histogram (10 bins over [0,1]): {hist:?}");
    for g in &schedule.graphs {
        for (s, t) in g.series_edges() {
            let _ = writeln!(out, "EDGE {s} -> {t} window={}..{}", g.window.start, g.window.end);
        }
    }
    out
}

/// Trains one model per seed on the training split with early stopping on
/// the validation split.
pub fn cmd_train(cfg: &RunConfig) -> Result<String> {
    let panel = load_panel(cfg)?;
    let schedule = load_schedule(cfg)?;
    let prep = PreparedPanel::new(&panel, &cfg.time_split(&panel)?)?;
    let mut out = String::new();
    for &seed in &cfg.seeds {
        let mcfg = cfg.model_config(seed)?;
        let train_set = prep.samples(&schedule, &mcfg, 0)?;
        let valid_set = prep.samples(&schedule, &mcfg, 1)?;
        let nodes = CshtModel::node_universe(panel.assets(), &panel.source_series(), mcfg.max_lag);
        let mut model = CshtModel::new(mcfg, nodes)?;
        let log_path = cfg.out_dir.join(format!("train_log_seed{seed}.csv"));
        let log = match train(&mut model, &train_set, &valid_set, None) {
            Ok(log) => log,
            Err(csht_core::model::ModelError::Diverged { epoch, loss, log }) => {
                write(&log_path, &log.to_csv())?;
                return Err(csht_core::model::ModelError::Diverged { epoch, loss, log }.into());
            }
            Err(e) => return Err(e.into()),
        };
        write(&log_path, &log.to_csv())?;
        let path = checkpoint_path(cfg, seed);
        fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::io(&cfg.out_dir, e))?;
        let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        write_checkpoint(&model, BufWriter::new(file))?;
        let best = log.best_record().expect("training records epoch 0");
        let _ = writeln!(
            out,
            "seed {seed}: {} epochs, best epoch {} (train {:.6}, valid {:.6}){} -> {}",
            log.records.len() - 1,
            log.best_epoch,
            best.train_loss,
            best.valid_loss,
            if log.stopped_early { ", stopped early" } else { "" },
            path.display()
        );
    }
    Ok(out)
}

/// Scores every seed's checkpoint on the test split and aggregates across
/// seeds.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<String> {
    let panel = load_panel(cfg)?;
    let schedule = load_schedule(cfg)?;
    let prep = PreparedPanel::new(&panel, &cfg.time_split(&panel)?)?;
    let moments = prep.return_moments();
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let model = load_checkpoint(cfg, seed)?;
        let test_set = prep.samples(&schedule, model.config(), 2)?;
        let report = evaluate(&model, &test_set, &schedule, Some(&moments), cfg.evaluate.ndcg_k)?;
        write(&cfg.out_dir.join(format!("eval_seed{seed}.txt")), &report.to_table())?;
        write(&cfg.out_dir.join(format!("eval_seed{seed}.csv")), &report.to_csv())?;
        write(&cfg.out_dir.join(format!("per_day_seed{seed}.csv")), &report.per_day_csv())?;
        runs.push((seed, report.overall));
    }
    let summary = SeedSummary::new(runs)?;
    write(&cfg.out_dir.join("eval_summary.txt"), &summary.to_table())?;
    write(&cfg.out_dir.join("eval_summary.csv"), &summary.to_csv())?;
    Ok(summary.to_table())
}

/// Forecasts the day after `date` with the first seed's checkpoint and
/// reports where `asset`'s return token attends in the last layer.
pub fn cmd_predict(cfg: &RunConfig, date: NaiveDate, asset: Option<&str>) -> Result<String> {
    let panel = load_panel(cfg)?;
    let schedule = load_schedule(cfg)?;
    let prep = PreparedPanel::new(&panel, &cfg.time_split(&panel)?)?;
    let seed = cfg.seeds[0];
    let model = load_checkpoint(cfg, seed)?;
    let asset = asset.unwrap_or(&panel.assets()[0]);
    if panel.asset_position(asset).is_none() {
        return Err(CliError::Usage(format!("unknown asset `{asset}`")));
    }
    let mcfg = model.config();
    let set = SampleSet::at_origin(&prep.table, prep.labels.as_deref(), &schedule, date, mcfg)?;
    let sample = &set.samples[0];
    let plan = &set.plans[sample.plan];
    let (output, attention) = model.forward(plan, &sample.values)?;

    let mut out = String::new();
    let graph = &schedule.graphs[set.plan_graphs[sample.plan]];
    let _ = writeln!(
        out,
        "# forecast from the close of {date} (seed {seed}, graph window {}..{})",
        graph.window.start, graph.window.end
    );
    let _ = writeln!(out, "asset,predicted_return");
    for (i, id) in panel.assets().iter().enumerate() {
        let _ = writeln!(out, "{id},{:.8}", prep.return_moments()[i].denormalize(output.returns[i]));
    }
    if mcfg.task != Task::Regression {
        let _ = writeln!(out, "p_bull,{:.6}", 1.0 / (1.0 + (-output.logit).exp()));
    }
    let row = plan.tokens.iter().position(|t| *t == LaggedNode::target(asset)).expect("every asset has a target token");
    let layer = attention.weights.len() - 1;
    let heads = &attention.weights[layer];
    let mut weights: Vec<(String, f64)> = attention.allowed[row]
        .iter()
        .enumerate()
        .map(|(k, &j)| (plan.tokens[j].to_string(), heads.iter().map(|h| h[row][k]).sum::<f64>() / heads.len() as f64))
        .collect();
    weights.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
    let _ = writeln!(out, "\n# attention of {} (layer {}, mean over heads)", LaggedNode::target(asset), layer + 1);
    let _ = writeln!(out, "node,weight");
    for (node, w) in weights {
        let _ = writeln!(out, "{node},{w:.6}");
    }
    write(&cfg.out_dir.join(format!("predict_{date}_{asset}.txt")), &out)?;
    Ok(out)
}
