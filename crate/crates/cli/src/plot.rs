//! Self-contained matplotlib scripts that read the CSV files written next to them.

use std::fmt::Write as _;

pub struct Series {
    pub csv: String,
    pub x: String,
    pub y: String,
    pub label: String,
    /// Markers only, no connecting line.
    pub points: bool,
}

impl Series {
    pub fn line(csv: &str, x: &str, y: &str, label: &str) -> Self {
        Self { csv: csv.into(), x: x.into(), y: y.into(), label: label.into(), points: false }
    }

    pub fn points(csv: &str, x: &str, y: &str, label: &str) -> Self {
        Self { points: true, ..Self::line(csv, x, y, label) }
    }
}

pub struct Plot {
    pub title: String,
    pub xlabel: String,
    pub ylabel: String,
    pub logx: bool,
    pub logy: bool,
    pub series: Vec<Series>,
    pub hline: Option<(f64, String)>,
    pub image: String,
}

fn py(s: &str) -> String {
    format!("{s:?}")
}

pub fn script(p: &Plot) -> String {
    let mut s = String::from(
        "#!/usr/bin/env python3\n\
         import csv\n\
         import os\n\n\
         import matplotlib\n\
         matplotlib.use(\"Agg\")\n\
         import matplotlib.pyplot as plt\n\n\
         HERE = os.path.dirname(os.path.abspath(__file__))\n\n\n\
         def column(name, key):\n\
         \x20   with open(os.path.join(HERE, name), newline=\"\") as f:\n\
         \x20       return [float(row[key]) for row in csv.DictReader(f)]\n\n\n\
         fig, ax = plt.subplots(figsize=(7, 4.5))\n",
    );
    for se in &p.series {
        let style = if se.points { ", \"o\", ms=4" } else { ", lw=1" };
        let _ = writeln!(
            s,
            "ax.plot(column({csv}, {x}), column({csv}, {y}){style}, label={label})",
            csv = py(&se.csv),
            x = py(&se.x),
            y = py(&se.y),
            label = py(&se.label)
        );
    }
    if let Some((v, label)) = &p.hline {
        let _ = writeln!(s, "ax.axhline({v:?}, color=\"gray\", ls=\"--\", lw=0.8, label={})", py(label));
    }
    if p.logx {
        s.push_str("ax.set_xscale(\"log\")\n");
    }
    if p.logy {
        s.push_str("ax.set_yscale(\"log\")\n");
    }
    let _ = writeln!(s, "ax.set_xlabel({})", py(&p.xlabel));
    let _ = writeln!(s, "ax.set_ylabel({})", py(&p.ylabel));
    let _ = writeln!(s, "ax.set_title({})", py(&p.title));
    s.push_str("ax.legend()\nfig.tight_layout()\n");
    let _ = writeln!(s, "fig.savefig(os.path.join(HERE, {}), dpi=150)", py(&p.image));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_names_every_column() {
        let p = Plot {
            title: "curve".into(),
            xlabel: "theta".into(),
            ylabel: "lambda".into(),
            logx: true,
            logy: false,
            series: vec![
                Series::line("a.csv", "theta", "lambda", "sweep"),
                Series::points("b.csv", "theta_n", "lambda_n", "branch"),
            ],
            hline: Some((3.3, "lambda*".into())),
            image: "curve.png".into(),
        };
        let s = script(&p);
        for needle in ["\"a.csv\"", "\"lambda_n\"", "axhline(3.3", "set_xscale(\"log\")", "\"curve.png\""] {
            assert!(s.contains(needle), "{needle}");
        }
        assert!(!s.contains("set_yscale"));
    }
}
