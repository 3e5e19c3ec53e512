//! Runtime comparison between bare radius-graph construction and the full
//! Vietoris-Rips lift on small point clouds, with per-radius simplex
//! counts.  Timings run on the calling thread with a monotonic clock; the
//! first repeat is treated as warm-up and discarded.

use std::fs;
use std::hint::black_box;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::complex::{radius_graph, vietoris_rips};
use crate::geometry::Point;
use crate::harness::HarnessError;

/// Statistics over the kept repeats, in milliseconds per construction.
#[derive(Debug, Clone, Serialize)]
pub struct TimingSummary {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub delta: f64,
    pub radius_ms: TimingSummary,
    pub vr_ms: TimingSummary,
    /// Simplex totals over the whole cloud set, indexed by dimension.
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub max_dim: usize,
    pub repeats: usize,
    pub num_clouds: usize,
    pub rows: Vec<BenchRow>,
}

/// Molecule-sized clouds: 5 to 29 points drawn uniformly from [−5, 5]³.
pub fn qm9like_clouds(count: usize, seed: u64) -> Vec<Vec<Point<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.random_range(5..=29);
            (0..n)
                .map(|_| {
                    Point::new((0..3).map(|_| rng.random_range(-5.0..5.0)).collect())
                })
                .collect()
        })
        .collect()
}

fn summarize(samples: &[f64]) -> TimingSummary {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let std = if samples.len() > 1 {
        (samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    TimingSummary { mean, std, median }
}

/// Times radius-graph construction and the full lift over the cloud set for
/// each radius.  Each repeat times one pass over all clouds, so a summary
/// entry is the per-construction average of that pass.
pub fn run_bench(
    clouds: &[Vec<Point<f64>>],
    deltas: &[f64],
    repeats: usize,
    max_dim: usize,
) -> Result<BenchReport, HarnessError> {
    if clouds.is_empty() {
        return Err(HarnessError::Invalid("no point clouds to time".into()));
    }
    if deltas.is_empty() {
        return Err(HarnessError::Invalid("no radii to time".into()));
    }
    if repeats < 10 {
        return Err(HarnessError::Invalid(
            "need at least 10 repeats for a stable summary".into(),
        ));
    }
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        // validation + count pass; timing loops below reuse the same inputs
        let mut counts = vec![0usize; max_dim + 1];
        for cloud in clouds {
            let complex = vietoris_rips(cloud, delta, max_dim)?;
            for (d, c) in counts.iter_mut().enumerate() {
                *c += complex.num_simplices(d);
            }
        }
        let per = 1.0 / clouds.len() as f64;
        let mut radius_samples = Vec::with_capacity(repeats - 1);
        let mut vr_samples = Vec::with_capacity(repeats - 1);
        for r in 0..repeats {
            let start = Instant::now();
            for cloud in clouds {
                black_box(radius_graph(cloud, delta).expect("validated above"));
            }
            let radius_elapsed = start.elapsed().as_secs_f64() * 1e3 * per;
            let start = Instant::now();
            for cloud in clouds {
                black_box(vietoris_rips(cloud, delta, max_dim).expect("validated above"));
            }
            let vr_elapsed = start.elapsed().as_secs_f64() * 1e3 * per;
            if r > 0 {
                radius_samples.push(radius_elapsed);
                vr_samples.push(vr_elapsed);
            }
        }
        rows.push(BenchRow {
            delta,
            radius_ms: summarize(&radius_samples),
            vr_ms: summarize(&vr_samples),
            counts,
        });
    }
    Ok(BenchReport {
        max_dim,
        repeats,
        num_clouds: clouds.len(),
        rows,
    })
}

pub fn write_bench_csv(path: &Path, report: &BenchReport) -> Result<(), HarnessError> {
    let mut out = String::from("delta,radius_mean_ms,radius_std_ms,radius_median_ms,vr_mean_ms,vr_std_ms,vr_median_ms");
    for d in 0..=report.max_dim {
        out.push_str(&format!(",count_dim{d}"));
    }
    out.push('\n');
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}",
            row.delta,
            row.radius_ms.mean,
            row.radius_ms.std,
            row.radius_ms.median,
            row.vr_ms.mean,
            row.vr_ms.std,
            row.vr_ms.median
        ));
        for c in &row.counts {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}
