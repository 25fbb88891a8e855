//! Episode statistics, fairness index, moving averages and tabular export.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reward::RewardBreakdown;
use crate::workload::PriorityBand;

const JOULES_PER_KWH: f64 = 3.6e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: usize,
    pub worker_id: usize,
    pub total_reward: f64,
    /// Mean latency of completed jobs, ticks. Dismissed jobs are excluded.
    pub mean_latency: f64,
    pub total_energy_kwh: f64,
    /// Dismissed (including truncated) over arrived.
    pub dismissal_rate: f64,
    /// Jain index over per-job `T_exec / L` shares; 1 when no job completed.
    pub jain: f64,
    /// Mean latency per priority band (low, medium, high); `None` when the band had no completions.
    pub band_latency: [Option<f64>; 3],
    pub arrived: usize,
    pub completed: usize,
    pub dismissed: usize,
    pub steps: usize,
    pub wall_clock_secs: f64,
}

/// Running sums for one episode; owned by the environment.
#[derive(Debug, Clone, Default)]
pub struct EpisodeAccumulator {
    arrived: usize,
    completed: usize,
    dismissed: usize,
    truncated: usize,
    steps: usize,
    total_reward: f64,
    latency_sum: f64,
    band_sum: [f64; 3],
    band_count: [usize; 3],
    energy_joules: f64,
    shares: Vec<f64>,
}

impl EpisodeAccumulator {
    pub fn add_arrived(&mut self) {
        self.arrived += 1;
    }

    pub fn add_dismissed(&mut self, n: usize) {
        self.dismissed += n;
    }

    pub fn add_truncated(&mut self, n: usize) {
        self.truncated += n;
    }

    pub fn add_step(&mut self, reward: &RewardBreakdown) {
        self.steps += 1;
        self.total_reward += reward.total;
    }

    pub fn add_completion(&mut self, latency: f64, exec: f64, band: PriorityBand, energy_joules: f64) {
        self.completed += 1;
        self.latency_sum += latency;
        self.band_sum[band.index()] += latency;
        self.band_count[band.index()] += 1;
        self.energy_joules += energy_joules;
        self.shares.push(if latency > 0.0 { exec / latency } else { 1.0 });
    }

    pub fn finish(&self, episode: usize, worker_id: usize) -> EpisodeStats {
        let dismissed = self.dismissed + self.truncated;
        let mut band_latency = [None; 3];
        for b in 0..3 {
            if self.band_count[b] > 0 {
                band_latency[b] = Some(self.band_sum[b] / self.band_count[b] as f64);
            }
        }
        EpisodeStats {
            episode,
            worker_id,
            total_reward: self.total_reward,
            mean_latency: if self.completed > 0 {
                self.latency_sum / self.completed as f64
            } else {
                0.0
            },
            total_energy_kwh: self.energy_joules / JOULES_PER_KWH,
            dismissal_rate: if self.arrived > 0 {
                dismissed as f64 / self.arrived as f64
            } else {
                0.0
            },
            jain: jain_index(&self.shares).unwrap_or(1.0),
            band_latency,
            arrived: self.arrived,
            completed: self.completed,
            dismissed,
            steps: self.steps,
            wall_clock_secs: 0.0,
        }
    }
}

/// `(sum x)^2 / (n * sum x^2)`.
pub fn jain_index(allocations: &[f64]) -> Result<f64> {
    if allocations.is_empty() {
        return Err(Error::UndefinedMetric("Jain index of an empty allocation".into()));
    }
    let sum: f64 = allocations.iter().sum();
    let sum_sq: f64 = allocations.iter().map(|x| x * x).sum();
    if sum_sq == 0.0 {
        return Err(Error::UndefinedMetric("Jain index of an all-zero allocation".into()));
    }
    Ok(sum * sum / (allocations.len() as f64 * sum_sq))
}

/// Trailing mean over `window`; the first `window - 1` entries average the available prefix.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, x) in series.iter().enumerate() {
        sum += x;
        if i >= window {
            sum -= series[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Formats a real with 6 significant digits.
pub fn fmt_real(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let magnitude = x.abs().log10().floor() as i32;
    if (-4..6).contains(&magnitude) {
        let decimals = (5 - magnitude).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.5e}")
    }
}

/// A record that can be written as one CSV row.
pub trait Tabular: Serialize {
    fn header() -> Vec<&'static str>;
    fn row(&self) -> Vec<String>;
}

/// Training report row.
impl Tabular for EpisodeStats {
    fn header() -> Vec<&'static str> {
        vec![
            "episode",
            "worker_id",
            "total_reward",
            "mean_latency",
            "energy_kwh",
            "dismissal_rate",
            "jain_index",
        ]
    }

    fn row(&self) -> Vec<String> {
        vec![
            self.episode.to_string(),
            self.worker_id.to_string(),
            fmt_real(self.total_reward),
            fmt_real(self.mean_latency),
            fmt_real(self.total_energy_kwh),
            fmt_real(self.dismissal_rate),
            fmt_real(self.jain),
        ]
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_real).unwrap_or_default()
}

/// Writes a header plus one row per record.
pub fn export_csv<T: Tabular>(records: &[T], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(T::header()).map_err(csv_err)?;
    for r in records {
        w.write_record(r.row()).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// JSON mirror of a CSV export.
pub fn export_json<T: Serialize>(records: &[T], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, records).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Writes `<stem>.csv` and `<stem>.json` side by side.
pub fn export_tables<T: Tabular>(records: &[T], dir: impl AsRef<Path>, stem: &str) -> Result<()> {
    let dir = dir.as_ref();
    export_csv(records, dir.join(format!("{stem}.csv")))?;
    export_json(records, dir.join(format!("{stem}.json")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn jain_examples() {
        assert!((jain_index(&[3.0, 3.0, 3.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((jain_index(&[0.0, 5.0, 0.0, 0.0]).unwrap() - 0.25).abs() < 1e-12);
        assert!((jain_index(&[1.0, 1.0, 0.0, 0.0]).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(jain_index(&[0.0, 0.0]), Err(Error::UndefinedMetric(_))));
        assert!(jain_index(&[]).is_err());
    }

    #[test]
    fn moving_average_examples() {
        assert_eq!(moving_average(&[2.0; 5], 3), vec![2.0; 5]);
        assert_eq!(moving_average(&[1.0, 2.0, 3.0], 2), vec![1.0, 1.5, 2.5]);
        assert_eq!(moving_average(&[4.0, -1.0, 7.0], 1), vec![4.0, -1.0, 7.0]);
        assert!(moving_average(&[], 4).is_empty());
    }

    #[test]
    fn formats_six_significant_digits() {
        assert_eq!(fmt_real(0.0), "0");
        assert_eq!(fmt_real(1.0), "1");
        assert_eq!(fmt_real(-66.123456789), "-66.1235");
        assert_eq!(fmt_real(0.000123456789), "0.000123457");
        assert_eq!(fmt_real(123456789.0), "1.23457e8");
        assert_eq!(fmt_real(12345.678), "12345.7");
        assert_eq!(fmt_real(1.5e-7), "1.50000e-7");
    }

    fn stats(ep: usize) -> EpisodeStats {
        let mut acc = EpisodeAccumulator::default();
        acc.add_arrived();
        acc.add_arrived();
        acc.add_completion(10.0, 5.0, PriorityBand::High, 3.6e6);
        acc.add_dismissed(1);
        acc.finish(ep, 0)
    }

    #[test]
    fn accumulator_rates() {
        let s = stats(0);
        assert_eq!(s.dismissal_rate, 0.5);
        assert_eq!(s.total_energy_kwh, 1.0);
        assert_eq!(s.band_latency, [None, None, Some(10.0)]);
        assert_eq!(s.jain, 1.0);
    }

    #[test]
    fn csv_export_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.csv");
        export_csv::<EpisodeStats>(&[], &empty).unwrap();
        let text = std::fs::read_to_string(&empty).unwrap();
        assert_eq!(text.lines().collect::<Vec<_>>(), vec![EpisodeStats::header().join(",")]);

        let two = dir.path().join("two.csv");
        let records = [stats(0), stats(1)];
        export_csv(&records, &two).unwrap();
        assert_eq!(std::fs::read_to_string(&two).unwrap().lines().count(), 3);

        let again = dir.path().join("again.csv");
        export_csv(&records, &again).unwrap();
        assert_eq!(std::fs::read(&two).unwrap(), std::fs::read(&again).unwrap());
    }

    #[test]
    fn export_io_error_names_path() {
        let err = export_csv::<EpisodeStats>(&[], "/nonexistent/dir/out.csv").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/out.csv"), "{err}");
    }

    proptest! {
        #[test]
        fn jain_bounds_and_scale(xs in prop::collection::vec(0.0f64..100.0, 1..20), c in 0.01f64..100.0) {
            prop_assume!(xs.iter().any(|x| *x > 0.0));
            let j = jain_index(&xs).unwrap();
            let n = xs.len() as f64;
            prop_assert!(j >= 1.0 / n - 1e-12 && j <= 1.0 + 1e-12);
            let scaled: Vec<f64> = xs.iter().map(|x| c * x).collect();
            prop_assert!((jain_index(&scaled).unwrap() - j).abs() < 1e-12);
        }
    }
}
