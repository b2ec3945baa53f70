//! Benchmark harness: paired evaluation of selectors over a world set,
//! bootstrap confidence intervals on the median, and the contamination test.

use std::fmt::Write as _;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ExplicitGraph;
use crate::rng;
use crate::search::run_lazysp;
use crate::selectors::{FeatureModel, SelectorSpec};
use crate::world::World;

pub const BOOTSTRAP_RESAMPLES: usize = 10_000;
pub const CONFIDENCE: f64 = 0.95;
pub const REPORT_FORMAT: &str = "lazysp-report";
pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const EPISODE_LOG_HEADER: &str = "# lazysp-episodes 1";

pub fn median(samples: &[f64]) -> f64 {
    assert!(!samples.is_empty(), "median of an empty sample");
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Percentile-bootstrap interval for the median, clamped to contain the
/// sample median.
pub fn bootstrap_median_ci(samples: &[f64], resamples: usize, confidence: f64, seed: u64) -> (f64, f64) {
    let m = median(samples);
    if samples.len() == 1 || resamples == 0 {
        return (m, m);
    }
    let mut r = rng::seeded(seed);
    let n = samples.len();
    let mut buf = vec![0.0; n];
    let mut medians: Vec<f64> = (0..resamples)
        .map(|_| {
            for x in buf.iter_mut() {
                *x = samples[r.gen_range(0..n)];
            }
            median(&buf)
        })
        .collect();
    medians.sort_by(f64::total_cmp);
    let alpha = (1.0 - confidence) / 2.0;
    let at = |q: f64| medians[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    (at(alpha).min(m), at(1.0 - alpha).max(m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub selector: String,
    pub episode: usize,
    pub world: usize,
    pub evaluations: usize,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorSummary {
    pub selector: String,
    pub median: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub mean_evaluations: f64,
    pub mean_reward: f64,
    pub episodes: usize,
    pub infeasible: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub episodes: usize,
    pub rows: Vec<SelectorSummary>,
}

impl EvalReport {
    pub fn row(&self, selector: &str) -> Option<&SelectorSummary> {
        self.rows.iter().find(|r| r.selector == selector)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub log: Vec<EpisodeLog>,
}

/// Summary rows from a per-episode log, in order of first appearance.
pub fn summarize(log: &[EpisodeLog], seed: u64) -> Result<EvalReport> {
    let mut names: Vec<&str> = Vec::new();
    for e in log {
        if !names.contains(&e.selector.as_str()) {
            names.push(&e.selector);
        }
    }
    if names.is_empty() {
        return Err(Error::Config("no episodes to summarize".into()));
    }
    let mut rows = Vec::with_capacity(names.len());
    for (k, name) in names.iter().enumerate() {
        let eps: Vec<&EpisodeLog> = log.iter().filter(|e| e.selector == *name).collect();
        let samples: Vec<f64> = eps.iter().map(|e| e.evaluations as f64).collect();
        let (ci_lower, ci_upper) =
            bootstrap_median_ci(&samples, BOOTSTRAP_RESAMPLES, CONFIDENCE, rng::derive_seed(seed, k as u64));
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        rows.push(SelectorSummary {
            selector: name.to_string(),
            median: median(&samples),
            ci_lower,
            ci_upper,
            mean_evaluations: mean,
            mean_reward: -mean,
            episodes: samples.len(),
            infeasible: eps.iter().filter(|e| !e.feasible).count(),
        });
    }
    let episodes = rows[0].episodes;
    Ok(EvalReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_FORMAT_VERSION,
        seed,
        episodes,
        rows,
    })
}

/// Runs every selector on the same episodes: episode `i` uses world
/// `i mod |worlds|` and selector seed `derive_seed(seed, i)`.
pub fn evaluate(
    graph: &ExplicitGraph,
    worlds: &[World],
    specs: &[SelectorSpec],
    model: Option<&FeatureModel>,
    episodes: usize,
    seed: u64,
) -> Result<Evaluation> {
    if episodes == 0 {
        return Err(Error::Config("episode count must be positive".into()));
    }
    if worlds.is_empty() {
        return Err(Error::Config("world set is empty".into()));
    }
    if specs.is_empty() {
        return Err(Error::Config("no selectors given".into()));
    }
    for w in worlds {
        w.check_size(graph)?;
    }
    let mut log = Vec::with_capacity(specs.len() * episodes);
    for spec in specs {
        let name = spec.name();
        let rows = (0..episodes)
            .into_par_iter()
            .map(|i| {
                let world = i % worlds.len();
                let mut sel = spec.build(model, rng::derive_seed(seed, i as u64))?;
                let result = run_lazysp(graph, &worlds[world], &mut sel)?;
                Ok(EpisodeLog {
                    selector: name.clone(),
                    episode: i,
                    world,
                    evaluations: result.num_evaluations(),
                    feasible: result.is_feasible(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        log.extend(rows);
    }
    Ok(Evaluation {
        report: summarize(&log, seed)?,
        log,
    })
}

/// Clean set with its first `⌊λN⌋` worlds replaced by contaminant worlds.
pub fn contaminated_set(clean: &[World], contaminant: &[World], fraction: f64) -> Result<Vec<World>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!("fraction {fraction} outside [0, 1]")));
    }
    let n = clean.len();
    if contaminant.len() < n {
        return Err(Error::Config(format!(
            "contaminant set has {} worlds, need at least {n}",
            contaminant.len()
        )));
    }
    let k = (fraction * n as f64).floor() as usize;
    Ok(contaminant[..k].iter().chain(&clean[k..]).cloned().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContaminationPoint {
    pub fraction: f64,
    pub contaminated: usize,
    pub evaluation: Evaluation,
}

/// One evaluation of `spec` per fraction, each over `|clean|` episodes.
pub fn contaminate(
    graph: &ExplicitGraph,
    spec: &SelectorSpec,
    model: Option<&FeatureModel>,
    clean: &[World],
    contaminant: &[World],
    fractions: &[f64],
    seed: u64,
) -> Result<Vec<ContaminationPoint>> {
    fractions
        .iter()
        .map(|&fraction| {
            let worlds = contaminated_set(clean, contaminant, fraction)?;
            Ok(ContaminationPoint {
                fraction,
                contaminated: (fraction * clean.len() as f64).floor() as usize,
                evaluation: evaluate(graph, &worlds, std::slice::from_ref(spec), model, clean.len(), seed)?,
            })
        })
        .collect()
}

fn render(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &mut headers.iter().copied());
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "{}", rule.join("  "));
    for r in rows {
        line(&mut out, &mut r.iter().map(String::as_str));
    }
    out
}

const SUMMARY_HEADERS: [&str; 7] = ["selector", "median", "ci_lower", "ci_upper", "mean_evals", "mean_reward", "episodes"];

fn summary_cells(r: &SelectorSummary) -> Vec<String> {
    vec![
        r.selector.clone(),
        format!("{:.1}", r.median),
        format!("{:.1}", r.ci_lower),
        format!("{:.1}", r.ci_upper),
        format!("{:.3}", r.mean_evaluations),
        format!("{:.3}", r.mean_reward),
        r.episodes.to_string(),
    ]
}

/// Aligned text table of a report.
pub fn format_table(report: &EvalReport) -> String {
    let rows: Vec<_> = report.rows.iter().map(summary_cells).collect();
    render(&SUMMARY_HEADERS, &rows)
}

/// One row per fraction.
pub fn format_contamination(points: &[ContaminationPoint]) -> String {
    let mut headers = vec!["lambda", "contaminated"];
    headers.extend_from_slice(&SUMMARY_HEADERS);
    let rows: Vec<_> = points
        .iter()
        .flat_map(|p| {
            p.evaluation.report.rows.iter().map(move |r| {
                let mut cells = vec![format!("{:.2}", p.fraction), p.contaminated.to_string()];
                cells.extend(summary_cells(r));
                cells
            })
        })
        .collect();
    render(&headers, &rows)
}

pub fn episodes_csv(log: &[EpisodeLog]) -> String {
    let mut out = format!("{EPISODE_LOG_HEADER}\nselector,episode,world,evaluations,feasible\n");
    for e in log {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            e.selector, e.episode, e.world, e.evaluations, e.feasible as u8
        );
    }
    out
}

pub fn parse_episodes_csv(text: &str) -> Result<Vec<EpisodeLog>> {
    let bad = |msg: String| Error::Format {
        kind: "episode log",
        msg,
    };
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(EPISODE_LOG_HEADER) {
        return Err(bad("missing header".into()));
    }
    if lines.next().map(str::trim) != Some("selector,episode,world,evaluations,feasible") {
        return Err(bad("missing column names".into()));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.trim().split(',').collect();
            let row = i + 3;
            if f.len() != 5 {
                return Err(bad(format!("line {row}: expected 5 fields")));
            }
            let num = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("line {row}: {e}")));
            Ok(EpisodeLog {
                selector: f[0].to_string(),
                episode: num(f[1])?,
                world: num(f[2])?,
                evaluations: num(f[3])?,
                feasible: match f[4] {
                    "1" => true,
                    "0" => false,
                    other => return Err(bad(format!("line {row}: bad flag {other:?}"))),
                },
            })
        })
        .collect()
}
