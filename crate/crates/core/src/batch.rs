//! Parallel seed sweeps over parameter grids.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::engine::{run, run_direct_baseline};
use crate::metrics::Summary;
use crate::motion::MotionMode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchGrid {
    pub seeds: Vec<u64>,
    pub c_d: Vec<f64>,
    pub c_t: Vec<f64>,
    pub max_cluster_size: Vec<usize>,
    pub motion: Vec<MotionMode>,
    /// Also run the direct baseline per seed and report normalized miss ratios.
    pub paired: bool,
}

impl Default for BatchGrid {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            c_d: vec![2.0],
            c_t: vec![2.0],
            max_cluster_size: vec![8],
            motion: vec![MotionMode::FireTracking],
            paired: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Combination {
    pub c_d: f64,
    pub c_t: f64,
    pub max_cluster_size: usize,
    pub motion: MotionMode,
}

impl Combination {
    pub fn apply(&self, base: &ScenarioConfig, seed: u64) -> ScenarioConfig {
        let mut cfg = base.clone();
        cfg.seed = seed;
        cfg.propagation.c_d = self.c_d;
        cfg.propagation.c_t = self.c_t;
        cfg.protocol.max_cluster_size = self.max_cluster_size;
        cfg.motion.mode = self.motion;
        cfg
    }
}

impl BatchGrid {
    pub fn combinations(&self) -> Vec<Combination> {
        let mut out = Vec::new();
        for &motion in &self.motion {
            for &max_cluster_size in &self.max_cluster_size {
                for &c_d in &self.c_d {
                    for &c_t in &self.c_t {
                        out.push(Combination {
                            c_d,
                            c_t,
                            max_cluster_size,
                            motion,
                        });
                    }
                }
            }
        }
        out
    }
}

/// Maps `f` over `items` on a pool of `threads` workers; results keep input order.
pub fn run_all<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| items.par_iter().map(&f).collect())
}

pub fn run_configs(configs: &[ScenarioConfig], threads: usize) -> Vec<Result<Summary, String>> {
    run_all(configs, threads, |c| {
        run(c).map(|o| o.summary).map_err(|e| e.to_string())
    })
}

/// Mean and sample standard deviation of the finite values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

pub const AGGREGATE_METRICS: [&str; 7] = [
    "main_cluster_ratio",
    "avg_links",
    "avg_link_dist",
    "avg_data_rate",
    "mission_miss",
    "normalized_miss",
    "data_rate_ratio",
];

fn metric(s: &Summary, name: &str) -> f64 {
    match name {
        "main_cluster_ratio" => s.main_cluster_ratio,
        "avg_links" => s.avg_links,
        "avg_link_dist" => s.avg_link_dist,
        "avg_data_rate" => s.avg_data_rate,
        "mission_miss" => s.mission_miss,
        "normalized_miss" => s.normalized_miss.unwrap_or(f64::NAN),
        "data_rate_ratio" => s.data_rate_ratio.unwrap_or(f64::NAN),
        _ => f64::NAN,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRow {
    pub combination: Combination,
    pub runs: usize,
    pub failures: Vec<String>,
    pub stats: Vec<(f64, f64)>,
}

/// One aggregate row per combination. Per-seed failures are kept in the row.
pub fn run_grid(base: &ScenarioConfig, grid: &BatchGrid, threads: usize) -> Vec<AggregateRow> {
    let combos = grid.combinations();
    let jobs: Vec<(usize, ScenarioConfig)> = combos
        .iter()
        .enumerate()
        .flat_map(|(k, c)| grid.seeds.iter().map(move |&s| (k, c.apply(base, s))))
        .collect();

    let mut baselines: BTreeMap<(u64, MotionMode), Result<Summary, String>> = BTreeMap::new();
    if grid.paired {
        let keys: Vec<(u64, MotionMode)> = grid
            .seeds
            .iter()
            .flat_map(|&s| grid.motion.iter().map(move |&m| (s, m)))
            .collect();
        let results = run_all(&keys, threads, |&(seed, motion)| {
            let mut cfg = base.clone();
            cfg.seed = seed;
            cfg.motion.mode = motion;
            run_direct_baseline(&cfg).map(|o| o.summary).map_err(|e| e.to_string())
        });
        baselines = keys.into_iter().zip(results).collect();
    }

    let results = run_all(&jobs, threads, |(_, cfg)| {
        let mut s = run(cfg).map(|o| o.summary).map_err(|e| e.to_string())?;
        if let Some(Ok(b)) = baselines.get(&(cfg.seed, cfg.motion.mode)) {
            s.pair_with(b);
        }
        Ok::<Summary, String>(s)
    });

    combos
        .iter()
        .enumerate()
        .map(|(k, combo)| {
            let mut ok = Vec::new();
            let mut failures = Vec::new();
            for ((j, cfg), r) in jobs.iter().zip(&results) {
                if *j != k {
                    continue;
                }
                match r {
                    Ok(s) => ok.push(s.clone()),
                    Err(e) => failures.push(format!("seed {}: {e}", cfg.seed)),
                }
            }
            let stats = AGGREGATE_METRICS
                .iter()
                .map(|m| mean_std(&ok.iter().map(|s| metric(s, m)).collect::<Vec<_>>()))
                .collect();
            AggregateRow {
                combination: *combo,
                runs: ok.len(),
                failures,
                stats,
            }
        })
        .collect()
}

fn motion_name(m: MotionMode) -> &'static str {
    match m {
        MotionMode::RandomTargets => "random",
        MotionMode::ExploreOnly => "explore",
        MotionMode::FireTracking => "track",
    }
}

pub fn write_aggregate<W: Write>(rows: &[AggregateRow], mut out: W) -> std::io::Result<()> {
    let mut header = vec![
        "c_d".to_string(),
        "c_t".into(),
        "max_cluster_size".into(),
        "motion".into(),
        "runs".into(),
        "failures".into(),
    ];
    for m in AGGREGATE_METRICS {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    writeln!(out, "{}", header.join(","))?;
    for r in rows {
        let c = &r.combination;
        let mut fields = vec![
            c.c_d.to_string(),
            c.c_t.to_string(),
            c.max_cluster_size.to_string(),
            motion_name(c.motion).to_string(),
            r.runs.to_string(),
            r.failures.len().to_string(),
        ];
        for (m, s) in &r.stats {
            fields.push(m.to_string());
            fields.push(s.to_string());
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}
