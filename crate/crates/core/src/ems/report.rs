//! Text rendering of energy statistics.

use super::stats::EnergyStats;

pub const REPORT_CSV_HEADER: &str = "period,line,generation_Wh,consumption_Wh";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
}

/// Renders stats in the given format. Energies are whole watt-hours;
/// generation is PV plus generator.
pub fn render_report(stats: &[EnergyStats], format: ReportFormat) -> String {
    let rows: Vec<[String; 4]> = stats
        .iter()
        .map(|s| [s.period.to_string(), s.line.clone(), whole(s.generation_wh()), whole(s.consumption_wh)])
        .collect();
    match format {
        ReportFormat::Csv => {
            let mut out = format!("{REPORT_CSV_HEADER}\n");
            for r in rows {
                out.push_str(&r.join(","));
                out.push('\n');
            }
            out
        }
        ReportFormat::Table => {
            let header = ["period", "line", "generation_Wh", "consumption_Wh"].map(String::from);
            let mut widths = header.each_ref().map(String::len);
            for r in &rows {
                for (w, cell) in widths.iter_mut().zip(r) {
                    *w = (*w).max(cell.len());
                }
            }
            let mut out = String::new();
            for r in std::iter::once(&header).chain(&rows) {
                let line = format!(
                    "{:<w0$}  {:<w1$}  {:>w2$}  {:>w3$}",
                    r[0],
                    r[1],
                    r[2],
                    r[3],
                    w0 = widths[0],
                    w1 = widths[1],
                    w2 = widths[2],
                    w3 = widths[3]
                );
                out.push_str(line.trim_end());
                out.push('\n');
            }
            out
        }
    }
}

fn whole(wh: f64) -> String {
    let s = format!("{wh:.0}");
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}
