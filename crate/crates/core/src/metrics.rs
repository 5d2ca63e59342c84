//! Run statistics: per-packet queueing delay, windowed link throughput,
//! drop accounting and the 100 ms time series.

use std::fmt::Write as _;

use crate::aqm::Verdict;
use crate::engine::SimTime;

/// Time-series sampling period.
pub const SAMPLES_PER_SECOND: u32 = 10;
/// Throughput averaging window.
pub const THROUGHPUT_WINDOW: SimTime = 1.0;

pub const TIMESERIES_HEADER: &str = "time_s,queue_pkts,avg_queue_pkts,max_p,drops_cum,throughput_bps";
pub const SUMMARY_HEADER: &str = "aqm,mean_delay_ms,std_delay_ms,mean_tput_bps,std_tput_bps,drop_rate";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub time: SimTime,
    pub queue: usize,
    pub avg_queue: f64,
    pub max_p: f64,
    pub drops_cum: u64,
    /// Bottleneck output rate over the preceding sample period.
    pub throughput_bps: f64,
}

/// Streaming mean / population standard deviation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std_dev(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.m2 / self.n as f64).sqrt()
        }
    }
}

pub fn mean_std(xs: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let mut s = RunningStats::default();
    for x in xs {
        s.push(x);
    }
    (s.mean(), s.std_dev())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub scenario: String,
    pub aqm: String,
    pub duration: SimTime,
    pub bottleneck_bw: f64,
    pub mean_delay_ms: f64,
    pub std_delay_ms: f64,
    pub delay_samples: u64,
    pub mean_tput_bps: f64,
    pub std_tput_bps: f64,
    /// Delivered bits per throughput window, in order.
    pub window_tput_bps: Vec<f64>,
    pub attempts: u64,
    pub drops: u64,
    pub forced_drops: u64,
    pub drop_rate: f64,
    pub series: Vec<Sample>,
}

impl RunMetrics {
    pub fn mean_utilization(&self) -> f64 {
        self.mean_tput_bps / self.bottleneck_bw
    }

    /// Mean and standard deviation of the sampled instantaneous queue,
    /// ignoring samples before `warmup`.
    pub fn queue_stats(&self, warmup: SimTime) -> (f64, f64) {
        mean_std(
            self.series
                .iter()
                .filter(|s| s.time >= warmup)
                .map(|s| s.queue as f64),
        )
    }

    /// Fraction of samples at or after `warmup` whose EWMA average queue lies
    /// within `[lo, hi]`.
    pub fn fraction_avg_within(&self, lo: f64, hi: f64, warmup: SimTime) -> f64 {
        let mut n = 0usize;
        let mut hit = 0usize;
        for s in self.series.iter().filter(|s| s.time >= warmup) {
            n += 1;
            if (lo..=hi).contains(&s.avg_queue) {
                hit += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            hit as f64 / n as f64
        }
    }

    pub fn timeseries_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.series.len() + 1));
        out.push_str(TIMESERIES_HEADER);
        out.push('\n');
        for s in &self.series {
            let _ = writeln!(
                out,
                "{:.1},{},{:.6},{:.6},{},{:.1}",
                s.time, s.queue, s.avg_queue, s.max_p, s.drops_cum, s.throughput_bps
            );
        }
        out
    }

    pub fn summary_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.3},{:.3},{:.6}",
            self.aqm,
            self.mean_delay_ms,
            self.std_delay_ms,
            self.mean_tput_bps,
            self.std_tput_bps,
            self.drop_rate
        )
    }
}

pub fn summary_csv<'a>(runs: impl IntoIterator<Item = &'a RunMetrics>) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in runs {
        out.push_str(&r.summary_row());
        out.push('\n');
    }
    out
}

/// Accumulates statistics while a simulation runs.
#[derive(Debug, Clone, Default)]
pub struct MetricsCollector {
    delay_ms: RunningStats,
    window_bits: Vec<f64>,
    bits_since_sample: f64,
    last_sample_time: SimTime,
    attempts: u64,
    drops: u64,
    forced_drops: u64,
    series: Vec<Sample>,
}

impl MetricsCollector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on_arrival(&mut self, v: Verdict) {
        self.attempts += 1;
        match v {
            Verdict::Accept => {}
            Verdict::EarlyDrop => self.drops += 1,
            Verdict::ForcedDrop => {
                self.drops += 1;
                self.forced_drops += 1;
            }
        }
    }

    pub fn on_dequeue(&mut self, waited: SimTime) {
        self.delay_ms.push(waited * 1e3);
    }

    /// A packet of `bits` finished leaving the bottleneck at `now`.
    pub fn on_departure(&mut self, now: SimTime, bits: f64) {
        let bin = (now / THROUGHPUT_WINDOW).floor() as usize;
        if self.window_bits.len() <= bin {
            self.window_bits.resize(bin + 1, 0.0);
        }
        self.window_bits[bin] += bits;
        self.bits_since_sample += bits;
    }

    pub fn drops(&self) -> u64 {
        self.drops
    }

    pub fn sample(&mut self, now: SimTime, queue: usize, avg_queue: f64, max_p: f64) {
        let span = now - self.last_sample_time;
        let throughput_bps = if span > 0.0 {
            self.bits_since_sample / span
        } else {
            0.0
        };
        self.series.push(Sample {
            time: now,
            queue,
            avg_queue,
            max_p,
            drops_cum: self.drops,
            throughput_bps,
        });
        self.bits_since_sample = 0.0;
        self.last_sample_time = now;
    }

    pub fn finish(&self, scenario: &str, aqm: &str, duration: SimTime, bottleneck_bw: f64) -> RunMetrics {
        let windows = (duration / THROUGHPUT_WINDOW + 1e-9).floor() as usize;
        let window_tput_bps: Vec<f64> = (0..windows)
            .map(|i| self.window_bits.get(i).copied().unwrap_or(0.0) / THROUGHPUT_WINDOW)
            .collect();
        let (mean_tput_bps, std_tput_bps) = mean_std(window_tput_bps.iter().copied());
        RunMetrics {
            scenario: scenario.to_owned(),
            aqm: aqm.to_owned(),
            duration,
            bottleneck_bw,
            mean_delay_ms: self.delay_ms.mean(),
            std_delay_ms: self.delay_ms.std_dev(),
            delay_samples: self.delay_ms.count(),
            mean_tput_bps,
            std_tput_bps,
            window_tput_bps,
            attempts: self.attempts,
            drops: self.drops,
            forced_drops: self.forced_drops,
            drop_rate: if self.attempts == 0 {
                0.0
            } else {
                self.drops as f64 / self.attempts as f64
            },
            series: self.series.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn running_stats_match_two_pass() {
        let xs = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let (m, s) = mean_std(xs);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!((m - mean).abs() < 1e-12);
        assert!((s - var.sqrt()).abs() < 1e-12);
        assert_eq!(mean_std(std::iter::empty()), (0.0, 0.0));
    }

    #[test]
    fn drop_rate_counts_attempts() {
        let mut c = MetricsCollector::new();
        c.on_arrival(Verdict::Accept);
        c.on_arrival(Verdict::EarlyDrop);
        c.on_arrival(Verdict::ForcedDrop);
        c.on_arrival(Verdict::Accept);
        let m = c.finish("t", "red", 1.0, 5e6);
        assert_eq!(m.drop_rate, 0.5);
        assert_eq!(m.forced_drops, 1);
    }

    #[test]
    fn throughput_windows() {
        let mut c = MetricsCollector::new();
        c.on_departure(0.5, 8000.0);
        c.on_departure(1.5, 16000.0);
        let m = c.finish("t", "red", 3.0, 5e6);
        assert_eq!(m.window_tput_bps, vec![8000.0, 16000.0, 0.0]);
        assert!((m.mean_tput_bps - 8000.0).abs() < 1e-9);
    }

    #[test]
    fn csv_header() {
        let mut c = MetricsCollector::new();
        c.sample(0.0, 0, 0.0, 0.1);
        let csv = c.finish("t", "red", 0.0, 5e6).timeseries_csv();
        assert_eq!(csv.lines().next().unwrap(), TIMESERIES_HEADER);
        assert_eq!(csv.lines().nth(1).unwrap(), "0.0,0,0.000000,0.100000,0,0.0");
    }
}
