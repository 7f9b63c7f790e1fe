//! Summaries of simulation results and the comparison CSV.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use num_rational::Ratio;
use thiserror::Error;

use crate::engine::{DeviceKind, DispatchCounts, SimResult};
use crate::expansion::NodeKind;
use crate::platform::TimePs;

pub type Rational = Ratio<u128>;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("internal error: zero makespan with {0} scheduled intervals")]
    ZeroMakespan(usize),
    #[error("baseline \"{0}\" not among the summaries")]
    MissingBaseline(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceUtilization {
    pub device: String,
    pub busy: TimePs,
    pub utilization: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Summary {
    pub config: String,
    pub makespan: TimePs,
    pub devices: Vec<DeviceUtilization>,
    /// Aggregate over all SMP cores.
    pub smp_utilization: Rational,
    /// Aggregate over all accelerator instances; zero when there are none.
    pub accel_utilization: Rational,
    pub submit_utilization: Rational,
    pub output_dma_utilization: Rational,
    pub dispatch: BTreeMap<String, DispatchCounts>,
    /// Total time spent in submit and output-DMA nodes.
    pub transfer_time: TimePs,
    /// `baseline makespan / makespan`, set by [`apply_baseline`].
    pub speedup: Option<Rational>,
}

impl Summary {
    pub fn smp_dispatches(&self) -> u64 {
        self.dispatch.values().map(|c| c.smp).sum()
    }

    pub fn fpga_dispatches(&self) -> u64 {
        self.dispatch.values().map(|c| c.fpga).sum()
    }
}

fn ratio(busy: u128, capacity: u128) -> Rational {
    if capacity == 0 {
        Rational::from_integer(0)
    } else {
        Rational::new(busy, capacity)
    }
}

/// Utilization is computed from occupancy intervals, so an accelerator that
/// is bound to a task still waiting for its inputs counts as idle.
pub fn summarize(result: &SimResult, config: &str) -> Result<Summary, MetricsError> {
    let makespan = result.makespan;
    if makespan == TimePs::ZERO && !result.timeline.is_empty() {
        return Err(MetricsError::ZeroMakespan(result.timeline.len()));
    }
    let span = u128::from(makespan.0);

    let devices = result
        .devices
        .iter()
        .map(|d| DeviceUtilization {
            device: d.to_string(),
            busy: result.busy[d.id],
            utilization: ratio(u128::from(result.busy[d.id].0), span),
        })
        .collect();

    let aggregate = |select: &dyn Fn(&DeviceKind) -> bool| {
        let (busy, count) = result
            .devices
            .iter()
            .filter(|d| select(&d.kind))
            .fold((0u128, 0u128), |(b, c), d| (b + u128::from(result.busy[d.id].0), c + 1));
        ratio(busy, count * span)
    };

    let transfer_time = result.timeline.iter().filter(|i| i.kind.is_transfer()).map(|i| i.duration()).sum();

    Ok(Summary {
        config: config.to_owned(),
        makespan,
        devices,
        smp_utilization: aggregate(&|k| matches!(k, DeviceKind::SmpMain | DeviceKind::SmpWorker(_))),
        accel_utilization: aggregate(&|k| matches!(k, DeviceKind::Accel { .. })),
        submit_utilization: aggregate(&|k| matches!(k, DeviceKind::SubmitUnit)),
        output_dma_utilization: aggregate(&|k| matches!(k, DeviceKind::OutputDmaUnit)),
        dispatch: result.dispatch.clone(),
        transfer_time,
        speedup: None,
    })
}

/// Sets every summary's speedup relative to the one named `baseline`.
pub fn apply_baseline(summaries: &mut [Summary], baseline: &str) -> Result<(), MetricsError> {
    let base = summaries
        .iter()
        .find(|s| s.config == baseline)
        .map(|s| s.makespan)
        .ok_or_else(|| MetricsError::MissingBaseline(baseline.to_owned()))?;
    for s in summaries {
        s.speedup = match (base.0, s.makespan.0) {
            (0, 0) => Some(Rational::from_integer(1)),
            (_, 0) => None,
            (b, m) => Some(Rational::new(u128::from(b), u128::from(m))),
        };
    }
    Ok(())
}

/// Name of the slowest configuration, the default normalization baseline.
pub fn slowest(summaries: &[Summary]) -> Option<&str> {
    summaries
        .iter()
        .max_by(|a, b| a.makespan.cmp(&b.makespan).then_with(|| b.config.cmp(&a.config)))
        .map(|s| s.config.as_str())
}

/// Exact decimal rendering with `digits` fractional digits, rounded half up.
pub fn format_ratio(r: &Rational, digits: u32) -> String {
    let scale = 10u128.pow(digits);
    let scaled = (2 * r.numer() * scale + r.denom()) / (2 * r.denom());
    if digits == 0 {
        return scaled.to_string();
    }
    format!("{}.{:0width$}", scaled / scale, scaled % scale, width = digits as usize)
}

pub const SUMMARY_CSV_HEADER: &str = "config,makespan_ns,speedup_vs_baseline,smp_util,accel_util,submit_util,output_dma_util,smp_dispatches,fpga_dispatches,transfer_ns";

/// A configuration that failed to simulate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub config: String,
    pub reason: String,
}

/// Ordering used for reports: fastest first, ties by name.
pub fn sort_fastest_first(summaries: &mut [Summary]) {
    summaries.sort_by(|a, b| a.makespan.cmp(&b.makespan).then_with(|| a.config.cmp(&b.config)));
}

/// Renders the comparison table. Successful rows come first, fastest
/// first, so the first data row is the recommended configuration; failed
/// configurations follow in name order.
pub fn summary_csv(summaries: &[Summary], failures: &[Failure]) -> String {
    let mut ok = summaries.to_vec();
    sort_fastest_first(&mut ok);
    let mut failed = failures.to_vec();
    failed.sort_by(|a, b| a.config.cmp(&b.config));

    let mut out = String::from(SUMMARY_CSV_HEADER);
    out.push('\n');
    for s in &ok {
        let speedup = s.speedup.as_ref().map(|r| format_ratio(r, 4)).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            csv_field(&s.config),
            s.makespan,
            speedup,
            format_ratio(&s.smp_utilization, 4),
            format_ratio(&s.accel_utilization, 4),
            format_ratio(&s.submit_utilization, 4),
            format_ratio(&s.output_dma_utilization, 4),
            s.smp_dispatches(),
            s.fpga_dispatches(),
            s.transfer_time,
        ));
    }
    for f in &failed {
        let reason = format!("error:{}", f.reason);
        out.push_str(&format!("{},{},,,,,,,,\n", csv_field(&f.config), csv_field(&reason)));
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

pub fn export_summary_csv(summaries: &[Summary], failures: &[Failure], path: impl AsRef<Path>) -> io::Result<()> {
    std::fs::write(path, summary_csv(summaries, failures))
}

/// Human-readable report for one simulation.
pub fn render_text(summary: &Summary) -> String {
    let mut s = format!("config={}\nmakespan_ns={}\n", summary.config, summary.makespan);
    for d in &summary.devices {
        s.push_str(&format!("device {} busy_ns={} util={}\n", d.device, d.busy, format_ratio(&d.utilization, 4)));
    }
    for (kernel, c) in &summary.dispatch {
        s.push_str(&format!("kernel {kernel} smp={} fpga={}\n", c.smp, c.fpga));
    }
    s.push_str(&format!("transfer_ns={}\n", summary.transfer_time));
    s
}

/// Total busy time per node kind.
pub fn busy_by_kind(result: &SimResult) -> BTreeMap<NodeKind, TimePs> {
    let mut out = BTreeMap::new();
    for i in &result.timeline {
        let e = out.entry(i.kind).or_insert(TimePs::ZERO);
        *e = *e + i.duration();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(name: &str, makespan_ns: u64) -> Summary {
        Summary {
            config: name.into(),
            makespan: TimePs(makespan_ns * 1000),
            devices: vec![],
            smp_utilization: Rational::from_integer(1),
            accel_utilization: Rational::from_integer(0),
            submit_utilization: Rational::from_integer(0),
            output_dma_utilization: Rational::from_integer(0),
            dispatch: BTreeMap::new(),
            transfer_time: TimePs::ZERO,
            speedup: None,
        }
    }

    #[test]
    fn ratio_formatting() {
        assert_eq!(format_ratio(&Rational::new(220, 251), 4), "0.8765");
        assert_eq!(format_ratio(&Rational::from_integer(1), 4), "1.0000");
        assert_eq!(format_ratio(&Rational::new(1, 8), 2), "0.13");
        assert_eq!(format_ratio(&Rational::new(5, 2), 0), "3");
    }

    #[test]
    fn single_summary_is_its_own_baseline() {
        let mut s = vec![summary("only", 10)];
        apply_baseline(&mut s, "only").unwrap();
        assert_eq!(s[0].speedup, Some(Rational::from_integer(1)));
        let csv = summary_csv(&s, &[]);
        let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[0], "only");
        assert_eq!(row[2], "1.0000");
    }

    #[test]
    fn faster_config_listed_first() {
        let mut s = vec![summary("slow", 20), summary("fast", 10)];
        apply_baseline(&mut s, "slow").unwrap();
        let csv = summary_csv(&s, &[Failure { config: "broken".into(), reason: "task unschedulable".into() }]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], SUMMARY_CSV_HEADER);
        assert!(lines[1].starts_with("fast,10,2.0000,"));
        assert!(lines[2].starts_with("slow,20,1.0000,"));
        assert_eq!(lines[3], "broken,error:task unschedulable,,,,,,,,");
        assert_eq!(slowest(&s), Some("slow"));
    }

    #[test]
    fn missing_baseline() {
        let mut s = vec![summary("a", 1)];
        assert!(matches!(apply_baseline(&mut s, "b"), Err(MetricsError::MissingBaseline(_))));
    }
}
