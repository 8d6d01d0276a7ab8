//! Benchmark tables and CFG × steps heatmaps.

pub mod heatmap;
pub mod table;

pub use heatmap::{build_heatmaps, write_heatmaps, GridAxes, HeatmapGrid, HeatmapMetric, GRID_FILE};
pub use table::{read_metrics_csv, render_table, score_table, BenchmarkTable, MetricRow, TableRow, TABLE_COLUMNS};
