//! Renders two series as an SVG line chart.

use tsc_lab::harness::{svg_line_chart, Series};

fn main() -> anyhow::Result<()> {
    let decay = Series {
        label: "queue".into(),
        points: (0..50).map(|i| (i as f64, 40.0 * (-(i as f64) / 15.0).exp() + 10.0)).collect(),
    };
    let flat = Series {
        label: "fixed time".into(),
        points: (0..50).map(|i| (i as f64, 23.0)).collect(),
    };
    let svg = svg_line_chart(&[decay, flat], "mean queue", "episode", "vehicles");
    let path = std::env::temp_dir().join("tsclab_plot.svg");
    std::fs::write(&path, &svg)?;
    println!("wrote {} ({} bytes)", path.display(), svg.len());
    Ok(())
}
