use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tsn::EvalResult;

use super::ExperimentId;

/// One trained-and-evaluated network.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub configuration: String,
    pub config_hash: String,
    pub seed: u64,
    pub split: u8,
    pub keep_fraction: f64,
    pub synthetic_fraction: f64,
    pub real_videos: usize,
    pub synthetic_videos: usize,
    pub streams: Vec<(String, f64)>,
    pub fused_accuracy: f64,
}

/// A published number carried along for context; never a measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct LiteratureValue {
    pub setting: String,
    pub benchmark: String,
    pub accuracy_pct: f64,
}

impl LiteratureValue {
    pub fn new(setting: &str, benchmark: &str, accuracy_pct: f64) -> Self {
        LiteratureValue {
            setting: setting.into(),
            benchmark: benchmark.into(),
            accuracy_pct,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerClassTable {
    pub classes: Vec<String>,
    pub accuracy: Vec<Option<f64>>,
    pub test_videos: Vec<usize>,
}

/// Per-class accuracy in manifest class order.
pub fn report_per_class(eval: &EvalResult, classes: &[String]) -> PerClassTable {
    PerClassTable {
        classes: classes.to_vec(),
        accuracy: eval.per_class.clone(),
        test_videos: eval.confusion.iter().map(|r| r.iter().sum()).collect(),
    }
}

impl PerClassTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,accuracy,test_videos\n");
        for ((c, a), n) in self.classes.iter().zip(&self.accuracy).zip(&self.test_videos) {
            let a = a.map_or(String::new(), |v| format!("{v:.6}"));
            writeln!(s, "{c},{a},{n}").unwrap();
        }
        s
    }

    pub fn to_text(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .classes
            .iter()
            .zip(&self.accuracy)
            .zip(&self.test_videos)
            .map(|((c, a), n)| {
                vec![
                    c.clone(),
                    a.map_or("-".into(), |v| format!("{:.1}%", 100.0 * v)),
                    n.to_string(),
                ]
            })
            .collect();
        aligned(&["class", "accuracy", "test videos"], &rows)
    }
}

/// Mean fused accuracy of one configuration over its runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub configuration: String,
    pub runs: usize,
    pub mean_fused: f64,
    pub min_fused: f64,
    pub max_fused: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub experiment: ExperimentId,
    pub notes: Vec<String>,
    pub rows: Vec<RunRow>,
    pub literature: Vec<LiteratureValue>,
    pub per_class: Option<PerClassTable>,
}

/// Left-aligned text table, columns padded to their widest cell.
pub fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let s: Vec<String> = cells.iter().zip(&widths).map(|(c, &w)| format!("{c:<w$}")).collect();
        s.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out += &line(
        widths
            .iter()
            .map(|&w| "-".repeat(w))
            .collect::<Vec<_>>()
            .iter()
            .map(|s| s.as_str())
            .collect(),
    );
    for r in rows {
        out += &line(r.iter().map(|s| s.as_str()).collect());
    }
    out
}

impl ExperimentReport {
    /// Configurations in order of first appearance.
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut out: Vec<Aggregate> = Vec::new();
        for r in &self.rows {
            match out.iter_mut().find(|a| a.configuration == r.configuration) {
                Some(a) => {
                    a.mean_fused += r.fused_accuracy;
                    a.runs += 1;
                    a.min_fused = a.min_fused.min(r.fused_accuracy);
                    a.max_fused = a.max_fused.max(r.fused_accuracy);
                }
                None => out.push(Aggregate {
                    configuration: r.configuration.clone(),
                    runs: 1,
                    mean_fused: r.fused_accuracy,
                    min_fused: r.fused_accuracy,
                    max_fused: r.fused_accuracy,
                }),
            }
        }
        out.iter_mut().for_each(|a| a.mean_fused /= a.runs as f64);
        out
    }

    pub fn mean_of(&self, configuration: &str) -> Option<f64> {
        self.aggregates()
            .into_iter()
            .find(|a| a.configuration == configuration)
            .map(|a| a.mean_fused)
    }

    pub fn runs_csv(&self) -> String {
        let mut s = String::from(
            "configuration,config_hash,seed,split,keep_fraction,synthetic_fraction,real_videos,synthetic_videos,stream_accuracies,fused_accuracy\n",
        );
        for r in &self.rows {
            let streams: Vec<String> = r.streams.iter().map(|(n, a)| format!("{n}={a:.6}")).collect();
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{:.6}",
                r.configuration,
                r.config_hash,
                r.seed,
                r.split,
                r.keep_fraction,
                r.synthetic_fraction,
                r.real_videos,
                r.synthetic_videos,
                streams.join(";"),
                r.fused_accuracy
            )
            .unwrap();
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("configuration,runs,mean_fused_accuracy,min_fused_accuracy,max_fused_accuracy\n");
        for a in self.aggregates() {
            writeln!(
                s,
                "{},{},{:.6},{:.6},{:.6}",
                a.configuration, a.runs, a.mean_fused, a.min_fused, a.max_fused
            )
            .unwrap();
        }
        s
    }

    pub fn literature_csv(&self) -> String {
        let mut s = String::from("kind,setting,benchmark,accuracy_pct\n");
        for l in &self.literature {
            writeln!(s, "literature,{},{},{}", l.setting, l.benchmark, l.accuracy_pct).unwrap();
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("Experiment {}\n", self.experiment.name());
        for n in &self.notes {
            writeln!(s, "# {n}").unwrap();
        }
        s.push_str("\nMeasured (desk scale)\n\n");
        let rows: Vec<Vec<String>> = self
            .aggregates()
            .iter()
            .map(|a| {
                vec![
                    a.configuration.clone(),
                    a.runs.to_string(),
                    format!("{:.1}%", 100.0 * a.mean_fused),
                    format!("{:.1}%", 100.0 * a.min_fused),
                    format!("{:.1}%", 100.0 * a.max_fused),
                ]
            })
            .collect();
        s += &aligned(&["configuration", "runs", "mean fused", "min", "max"], &rows);
        s.push_str("\nRuns\n\n");
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let streams: Vec<String> = r
                    .streams
                    .iter()
                    .map(|(n, a)| format!("{n} {:.1}%", 100.0 * a))
                    .collect();
                vec![
                    r.configuration.clone(),
                    r.seed.to_string(),
                    r.split.to_string(),
                    r.config_hash.clone(),
                    format!("{:.1}%", 100.0 * r.fused_accuracy),
                    streams.join(", "),
                ]
            })
            .collect();
        s += &aligned(
            &["configuration", "seed", "split", "config hash", "fused", "streams"],
            &rows,
        );
        if !self.literature.is_empty() {
            s.push_str("\nLiterature values (published, NOT measured here; context only)\n\n");
            let rows: Vec<Vec<String>> = self
                .literature
                .iter()
                .map(|l| vec![l.setting.clone(), l.benchmark.clone(), format!("{}%", l.accuracy_pct)])
                .collect();
            s += &aligned(&["setting", "benchmark", "accuracy"], &rows);
        }
        if let Some(p) = &self.per_class {
            s.push_str("\nPer-class accuracy\n\n");
            s += &p.to_text();
        }
        s
    }

    /// Writes `report.txt`, `runs.csv`, `summary.csv`, `literature.csv` and,
    /// when present, `per_class.csv` / `per_class.txt`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, text: String| -> Result<()> {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(p, e))
        };
        put("report.txt", self.to_text())?;
        put("runs.csv", self.runs_csv())?;
        put("summary.csv", self.summary_csv())?;
        put("literature.csv", self.literature_csv())?;
        if let Some(p) = &self.per_class {
            put("per_class.csv", p.to_csv())?;
            put("per_class.txt", p.to_text())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use crate::tsn::evaluate;
    use rand::Rng;

    fn classes(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn oracle_per_class_is_perfect() {
        let pairs: Vec<(usize, usize)> = (0..40).map(|i| (i % 8, i % 8)).collect();
        let t = report_per_class(&evaluate(&pairs, 8).unwrap(), &classes(8));
        assert!(t.accuracy.iter().all(|&a| a == Some(1.0)));
        assert_eq!(t.to_csv().lines().count(), 9);
    }

    #[test]
    fn chance_predictor_is_near_one_eighth() {
        let mut rng = seed::rng(12);
        let pairs: Vec<(usize, usize)> = (0..320).map(|i| (i % 8, rng.random_range(0..8))).collect();
        let t = report_per_class(&evaluate(&pairs, 8).unwrap(), &classes(8));
        for a in t.accuracy {
            assert!((a.unwrap() - 0.125).abs() <= 0.10);
        }
        assert_eq!(t.test_videos, vec![40; 8]);
    }

    fn row(conf: &str, seed: u64, acc: f64) -> RunRow {
        RunRow {
            configuration: conf.into(),
            config_hash: "abc".into(),
            seed,
            split: 1,
            keep_fraction: 1.0,
            synthetic_fraction: 0.0,
            real_videos: 10,
            synthetic_videos: 0,
            streams: vec![("real_flow".into(), acc)],
            fused_accuracy: acc,
        }
    }

    #[test]
    fn aggregates_and_text() {
        let r = ExperimentReport {
            experiment: ExperimentId::E2,
            notes: vec!["desk scale".into()],
            rows: vec![row("a", 0, 0.5), row("b", 0, 0.25), row("a", 1, 0.75)],
            literature: vec![LiteratureValue::new("Real only", "HMDB-38", 71.8)],
            per_class: None,
        };
        let ag = r.aggregates();
        assert_eq!(ag.len(), 2);
        assert_eq!((ag[0].runs, ag[0].mean_fused), (2, 0.625));
        assert_eq!(r.mean_of("b"), Some(0.25));
        let text = r.to_text();
        assert!(text.contains("NOT measured"));
        assert!(text.contains("71.8%"));
        assert_eq!(r.runs_csv().lines().count(), 4);
        assert!(r.literature_csv().contains("literature,Real only,HMDB-38,71.8"));
    }

    #[test]
    fn aligned_pads_columns() {
        let t = aligned(&["a", "bbb"], &[vec!["xxxx".into(), "y".into()]]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "a     bbb");
        assert_eq!(lines[2], "xxxx  y");
    }
}
