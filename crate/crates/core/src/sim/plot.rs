use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::beamalign::{write_overhead_csv, AlignmentScheme, OverheadRow};
use crate::gnnbeam::{EvalReport, Method};

use super::scenario::{write_metrics_csv, MetricsRecord};
use super::SimError;

/// Data that can be plotted.
#[derive(Debug, Clone, Copy)]
pub enum PlotData<'a> {
    /// Alignment overhead against beamwidth.
    Overhead(&'a [OverheadRow]),
    /// Per-slot capacity and alignment time of a scenario run.
    Metrics(&'a [MetricsRecord]),
    /// Capacity and run time per beamforming method.
    Eval(&'a EvalReport),
}

impl PlotData<'_> {
    fn is_empty(&self) -> bool {
        match self {
            PlotData::Overhead(rows) => rows.is_empty(),
            PlotData::Metrics(rows) => rows.is_empty(),
            PlotData::Eval(report) => report.rows.is_empty(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlotFiles {
    pub csv: PathBuf,
    pub script: PathBuf,
}

/// Writes `<stem>.csv` and a gnuplot script `<stem>.gp` rendering it to
/// `<stem>.png`, both in `dir`.
pub fn emit_plot_script(data: PlotData<'_>, dir: &Path, stem: &str) -> Result<PlotFiles, SimError> {
    if data.is_empty() {
        return Err(SimError::EmptyData);
    }
    let csv_name = format!("{stem}.csv");
    let csv = dir.join(&csv_name);
    let script = dir.join(format!("{stem}.gp"));
    let mut out = BufWriter::new(File::create(&csv)?);
    match data {
        PlotData::Overhead(rows) => write_overhead_csv(&mut out, rows)?,
        PlotData::Metrics(rows) => write_metrics_csv(&mut out, rows)?,
        PlotData::Eval(report) => report.write_csv(&mut out)?,
    }
    out.flush()?;
    std::fs::write(&script, script_text(data, &csv_name, stem))?;
    Ok(PlotFiles { csv, script })
}

fn script_text(data: PlotData<'_>, csv: &str, stem: &str) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator \",\"\n");
    s.push_str("set datafile columnheaders\n");
    s.push_str("set terminal pngcairo size 900,560\n");
    s.push_str(&format!("set output \"{stem}.png\"\n"));
    s.push_str("set grid\nset key outside right\n");
    match data {
        PlotData::Overhead(_) => {
            s.push_str("set xlabel \"beamwidth (deg)\"\n");
            s.push_str("set ylabel \"alignment overhead (s)\"\n");
            s.push_str("set logscale y\n");
            s.push_str("set y2label \"gap vs baseline (%)\"\nset y2tics\n");
            s.push_str(
                "pick(name) = (strcol(\"scheme\") eq name) ? column(\"overhead_s\") : NaN\n",
            );
            s.push_str("gap(name) = (strcol(\"scheme\") eq name) ? column(\"gap_vs_baseline_pct\") : NaN\n");
            let mut parts: Vec<String> = AlignmentScheme::ALL
                .iter()
                .map(|sc| {
                    format!(
                        "\"{csv}\" using (column(\"beamwidth_deg\")):(pick(\"{0}\")) with linespoints title \"{0}\"",
                        sc.as_str()
                    )
                })
                .collect();
            for sc in &AlignmentScheme::ALL[1..] {
                parts.push(format!(
                    "\"{csv}\" using (column(\"beamwidth_deg\")):(gap(\"{0}\")) axes x1y2 with lines dashtype 2 title \"{0} gap\"",
                    sc.as_str()
                ));
            }
            s.push_str(&format!("plot {}\n", parts.join(", \\\n     ")));
        }
        PlotData::Metrics(_) => {
            s.push_str("set multiplot layout 2,1\n");
            s.push_str("set xlabel \"slot\"\nset ylabel \"sum capacity (bit/s)\"\n");
            s.push_str(&format!(
                "plot \"{csv}\" using (column(\"slot\")):(column(\"sum_capacity_bps\")) with lines title \"sum capacity\"\n"
            ));
            s.push_str("set ylabel \"time per slot (s)\"\n");
            let cols = [
                ("overhead_baseline_s", "baseline overhead"),
                ("overhead_dsrc1_s", "dsrc1 overhead"),
                ("overhead_dsrc2_s", "dsrc2 overhead"),
                ("alignment_s", "spent aligning"),
                ("data_s", "data"),
            ];
            let parts: Vec<String> = cols
                .iter()
                .map(|(c, t)| format!("\"{csv}\" using (column(\"slot\")):(column(\"{c}\")) with lines title \"{t}\""))
                .collect();
            s.push_str(&format!("plot {}\n", parts.join(", \\\n     ")));
            s.push_str("unset multiplot\n");
        }
        PlotData::Eval(_) => {
            s.push_str("set multiplot layout 2,1\n");
            s.push_str("set xlabel \"instance\"\nset ylabel \"sum capacity (bit/s)\"\n");
            s.push_str(
                "cap(name) = (strcol(\"method\") eq name) ? column(\"sum_capacity_bps\") : NaN\n",
            );
            s.push_str(
                "wall(name) = (strcol(\"method\") eq name) ? column(\"wall_time_s\") : NaN\n",
            );
            let series = |f: &str| -> String {
                Method::ALL
                    .iter()
                    .map(|m| {
                        format!(
                            "\"{csv}\" using (column(\"instance_id\")):({f}(\"{0}\")) with linespoints title \"{0}\"",
                            m.as_str()
                        )
                    })
                    .collect::<Vec<_>>()
                    .join(", \\\n     ")
            };
            s.push_str(&format!("plot {}\n", series("cap")));
            s.push_str("set ylabel \"wall time (s)\"\nset logscale y\n");
            s.push_str(&format!("plot {}\n", series("wall")));
            s.push_str("unset multiplot\n");
        }
    }
    s
}
