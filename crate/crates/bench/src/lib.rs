//! Shared fixtures for the criterion benchmarks.

use csht_core::granger::{build_hypergraph, WindowRange};
use csht_core::model::SampleSet;
use csht_core::pipeline::PreparedPanel;
use csht_core::synthetic::{gen_var_process, PanelTemplate};
use csht_core::{AssetPanel, CshtModel, DiscoveryConfig, GraphSchedule, ModelConfig, PlantedSpec, TimeSplit};

/// Planted panel with `assets` assets and half as many planted edges.
pub fn planted_panel(assets: usize, length: usize) -> AssetPanel {
    let template = PanelTemplate { assets, planted_edges: (assets / 2).max(1), length, ..Default::default() };
    gen_var_process(&PlantedSpec::from_template(&template, 0).expect("valid template")).expect("stable process").0
}

/// A model with a single static graph and its training samples.
pub fn model_fixture(assets: usize, cfg: ModelConfig) -> (CshtModel, SampleSet) {
    let panel = planted_panel(assets, 600);
    let split = TimeSplit::by_fractions(panel.dates(), 0.7, 0.15).expect("split");
    let prep = PreparedPanel::new(&panel, &split).expect("prepared panel");
    let mut graph = build_hypergraph(&prep.normalized.slice_days(prep.days[0].clone()), &DiscoveryConfig::default())
        .expect("discovery");
    graph.window = WindowRange { start: panel.dates()[0], end: panel.dates()[panel.n_days() - 1] };
    let schedule = GraphSchedule::single(graph);
    let samples = prep.samples(&schedule, &cfg, 0).expect("samples");
    let nodes = CshtModel::node_universe(panel.assets(), &panel.source_series(), cfg.max_lag);
    (CshtModel::new(cfg, nodes).expect("model"), samples)
}
