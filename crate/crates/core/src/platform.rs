//! Target platform description: clocks, device inventory, runtime overheads
//! and per-kernel accelerator timing digests.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, Read};
use std::ops::{Add, Sub};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{Target, TargetSet};

/// Simulation time in integer picoseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimePs(pub u64);

impl TimePs {
    pub const ZERO: TimePs = TimePs(0);

    pub fn from_ns(ns: u64) -> Result<Self, PlatformError> {
        ns.checked_mul(1_000).map(TimePs).ok_or(PlatformError::TimeOverflow)
    }

    pub fn checked_add(self, rhs: TimePs) -> Option<TimePs> {
        self.0.checked_add(rhs.0).map(TimePs)
    }

    pub fn checked_mul(self, n: u64) -> Option<TimePs> {
        self.0.checked_mul(n).map(TimePs)
    }

    pub fn as_ps(self) -> u64 {
        self.0
    }

    /// Nanoseconds, rounded half up.
    pub fn as_ns_rounded(self) -> u64 {
        self.0 / 1_000 + u64::from(self.0 % 1_000 >= 500)
    }
}

impl Add for TimePs {
    type Output = TimePs;

    /// Panics on overflow; the engine uses `checked_add`.
    fn add(self, rhs: TimePs) -> TimePs {
        TimePs(self.0.checked_add(rhs.0).expect("time overflow"))
    }
}

impl Sub for TimePs {
    type Output = TimePs;

    fn sub(self, rhs: TimePs) -> TimePs {
        TimePs(self.0 - rhs.0)
    }
}

impl std::iter::Sum for TimePs {
    fn sum<I: Iterator<Item = TimePs>>(iter: I) -> TimePs {
        iter.fold(TimePs::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for TimePs {
    /// Nanoseconds, with up to three decimals when not a whole number.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (ns, frac) = (self.0 / 1_000, self.0 % 1_000);
        if frac == 0 {
            write!(f, "{ns}")
        } else {
            let s = format!("{frac:03}");
            write!(f, "{ns}.{}", s.trim_end_matches('0'))
        }
    }
}

#[derive(Debug, Error)]
pub enum PlatformError {
    #[error("time overflow")]
    TimeOverflow,
    #[error("frequency must be positive and finite, got {0} MHz")]
    BadFrequency(f64),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("timing digest: {0}")]
    Csv(String),
    #[error("timing digest: missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("timing digest line {line}: field `{field}` is not a valid number: \"{value}\"")]
    NotNumeric { line: u64, field: &'static str, value: String },
    #[error("timing digest: duplicate kernel \"{0}\"")]
    DuplicateKernel(String),
    #[error("config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config: accelerator kernel \"{0}\" has no timing profile")]
    MissingProfile(String),
    #[error("config: accelerator kernel \"{0}\" listed twice")]
    DuplicateAccelerator(String),
    #[error("config: accelerator \"{0}\" needs count >= 1")]
    ZeroAccelerators(String),
    #[error("config: smp_workers must be >= 1")]
    NoSmpWorkers,
    #[error("config: unknown scheduler \"{0}\"")]
    UnknownScheduler(String),
    #[error("config: profile \"{0}\" has zero compute_cycles")]
    ZeroComputeCycles(String),
}

/// A clock rate, held as an integer number of hertz so that conversions stay
/// exact. Frequencies given in MHz are rounded to the nearest hertz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Frequency {
    hz: u64,
}

impl Frequency {
    pub fn from_mhz(mhz: f64) -> Result<Self, PlatformError> {
        let hz = (mhz * 1e6).round();
        if !mhz.is_finite() || hz < 1.0 || hz > u64::MAX as f64 {
            return Err(PlatformError::BadFrequency(mhz));
        }
        Ok(Self { hz: hz as u64 })
    }

    pub fn hz(self) -> u64 {
        self.hz
    }

    pub fn cycles_to_ps(self, cycles: u64) -> Result<TimePs, PlatformError> {
        let num = u128::from(cycles) * 1_000_000_000_000;
        let den = u128::from(self.hz);
        let ps = (2 * num + den) / (2 * den);
        u64::try_from(ps).map(TimePs).map_err(|_| PlatformError::TimeOverflow)
    }
}

/// `cycles` at `freq_mhz`, in picoseconds rounded half up.
pub fn cycles_to_ps(cycles: u64, freq_mhz: f64) -> Result<TimePs, PlatformError> {
    Frequency::from_mhz(freq_mhz)?.cycles_to_ps(cycles)
}

/// Accelerator timing digest for one kernel, as reported by high-level
/// synthesis. Transfer counts are per-invocation totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelProfile {
    pub kernel: String,
    pub compute_cycles: u64,
    pub in_transfer_cycles: u64,
    pub out_transfer_cycles: u64,
    pub fpga_freq_mhz: f64,
}

pub const PROFILE_HEADER: [&str; 5] =
    ["kernel", "compute_cycles", "in_transfer_cycles", "out_transfer_cycles", "fpga_freq_mhz"];

pub type Profiles = BTreeMap<String, KernelProfile>;

pub fn read_profiles<R: Read>(input: R) -> Result<Profiles, PlatformError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers().map_err(|e| PlatformError::Csv(e.to_string()))?.clone();
    for (i, expected) in PROFILE_HEADER.iter().enumerate() {
        if headers.get(i) != Some(*expected) {
            return Err(PlatformError::MissingColumn(expected));
        }
    }

    let mut out = Profiles::new();
    for record in reader.records() {
        let record = record.map_err(|e| PlatformError::Csv(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).ok_or(PlatformError::MissingColumn(PROFILE_HEADER[i]));
        let int = |i: usize| -> Result<u64, PlatformError> {
            let v = field(i)?;
            v.parse().map_err(|_| PlatformError::NotNumeric { line, field: PROFILE_HEADER[i], value: v.to_owned() })
        };
        let kernel = field(0)?.to_owned();
        let freq_text = field(4)?;
        let fpga_freq_mhz: f64 = freq_text.parse().map_err(|_| PlatformError::NotNumeric {
            line,
            field: PROFILE_HEADER[4],
            value: freq_text.to_owned(),
        })?;
        Frequency::from_mhz(fpga_freq_mhz)?;
        let profile = KernelProfile {
            compute_cycles: int(1)?,
            in_transfer_cycles: int(2)?,
            out_transfer_cycles: int(3)?,
            fpga_freq_mhz,
            kernel: kernel.clone(),
        };
        if out.insert(kernel.clone(), profile).is_some() {
            return Err(PlatformError::DuplicateKernel(kernel));
        }
    }
    Ok(out)
}

pub fn load_profiles(path: impl AsRef<Path>) -> Result<Profiles, PlatformError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| PlatformError::Io { path: path.into(), source })?;
    read_profiles(file)
}

pub fn profiles_to_csv(profiles: &Profiles) -> String {
    let mut s = PROFILE_HEADER.join(",");
    s.push('\n');
    for p in profiles.values() {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            p.kernel, p.compute_cycles, p.in_transfer_cycles, p.out_transfer_cycles, p.fpga_freq_mhz
        ));
    }
    s
}

/// Dispatch policy used by the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SchedulerKind {
    /// FIFO over ready nodes; compute goes to an available accelerator if
    /// possible, otherwise to an idle SMP core.
    #[default]
    AvailabilityGreedy,
}

impl SchedulerKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "greedy" | "availability_greedy" | "availability-greedy" => Some(SchedulerKind::AvailabilityGreedy),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::AvailabilityGreedy => "greedy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceleratorSpec {
    pub kernel: String,
    pub count: u32,
}

pub const DEFAULT_CREATION_OVERHEAD_NS: u64 = 1_000;
pub const DEFAULT_SUBMIT_COST_NS: u64 = 500;

/// A concrete hardware configuration to simulate.
#[derive(Debug, Clone, PartialEq)]
pub struct PlatformConfig {
    /// SMP cores, including the main thread that creates tasks.
    pub smp_workers: u32,
    pub accelerators: Vec<AcceleratorSpec>,
    pub creation_overhead_ns: u64,
    /// Cost of programming one DMA transfer.
    pub submit_cost_ns: u64,
    /// Clock of the SMP cores. Falls back to the trace's measurement
    /// frequency when unset.
    pub cpu_freq_mhz: Option<f64>,
    pub profiles: Profiles,
    /// Per-kernel restriction of the trace-declared targets.
    pub eligibility_overrides: BTreeMap<String, TargetSet>,
    pub scheduler: SchedulerKind,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        Self {
            smp_workers: 1,
            accelerators: Vec::new(),
            creation_overhead_ns: DEFAULT_CREATION_OVERHEAD_NS,
            submit_cost_ns: DEFAULT_SUBMIT_COST_NS,
            cpu_freq_mhz: None,
            profiles: Profiles::new(),
            eligibility_overrides: BTreeMap::new(),
            scheduler: SchedulerKind::default(),
        }
    }
}

impl PlatformConfig {
    pub fn accelerator_count(&self, kernel: &str) -> u32 {
        self.accelerators.iter().filter(|a| a.kernel == kernel).map(|a| a.count).sum()
    }

    pub fn validate(&self) -> Result<(), PlatformError> {
        if self.smp_workers == 0 {
            return Err(PlatformError::NoSmpWorkers);
        }
        if let Some(f) = self.cpu_freq_mhz {
            Frequency::from_mhz(f)?;
        }
        let mut seen = std::collections::BTreeSet::new();
        for acc in &self.accelerators {
            if !seen.insert(acc.kernel.as_str()) {
                return Err(PlatformError::DuplicateAccelerator(acc.kernel.clone()));
            }
            if acc.count == 0 {
                return Err(PlatformError::ZeroAccelerators(acc.kernel.clone()));
            }
            let profile =
                self.profiles.get(&acc.kernel).ok_or_else(|| PlatformError::MissingProfile(acc.kernel.clone()))?;
            if profile.compute_cycles == 0 {
                return Err(PlatformError::ZeroComputeCycles(acc.kernel.clone()));
            }
        }
        for p in self.profiles.values() {
            Frequency::from_mhz(p.fpga_freq_mhz)?;
        }
        Ok(())
    }

    /// Parses a config document. `base_dir` anchors a relative
    /// `profiles_path`.
    pub fn from_json(text: &str, base_dir: Option<&Path>) -> Result<Self, PlatformError> {
        let doc: ConfigDoc = serde_json::from_str(text)?;
        doc.into_config(base_dir)
    }

    pub fn from_value(value: serde_json::Value, base_dir: Option<&Path>) -> Result<Self, PlatformError> {
        let doc: ConfigDoc = serde_json::from_value(value)?;
        doc.into_config(base_dir)
    }

    /// Serializes the config with its profiles inlined.
    pub fn to_json(&self) -> String {
        let doc = ConfigDoc {
            cpu_freq_mhz: self.cpu_freq_mhz,
            smp_workers: Some(self.smp_workers),
            creation_overhead_ns: Some(self.creation_overhead_ns),
            submit_cost_ns: Some(self.submit_cost_ns),
            accelerators: self.accelerators.clone(),
            eligibility_overrides: self.eligibility_overrides.clone(),
            scheduler: Some(self.scheduler.name().to_owned()),
            profiles_path: None,
            profiles: self.profiles.values().cloned().collect(),
        };
        serde_json::to_string_pretty(&doc).expect("config serializes")
    }
}

/// On-disk configuration document.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cpu_freq_mhz: Option<f64>,
    #[serde(default)]
    smp_workers: Option<u32>,
    #[serde(default)]
    creation_overhead_ns: Option<u64>,
    #[serde(default)]
    submit_cost_ns: Option<u64>,
    #[serde(default)]
    accelerators: Vec<AcceleratorSpec>,
    #[serde(default)]
    eligibility_overrides: BTreeMap<String, TargetSet>,
    #[serde(default)]
    scheduler: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    profiles_path: Option<PathBuf>,
    /// Inline profiles, merged with (and overriding) the ones loaded from
    /// `profiles_path`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    profiles: Vec<KernelProfile>,
}

impl ConfigDoc {
    fn into_config(self, base_dir: Option<&Path>) -> Result<PlatformConfig, PlatformError> {
        let mut profiles = match &self.profiles_path {
            Some(p) => {
                let path = match base_dir {
                    Some(dir) if p.is_relative() => dir.join(p),
                    _ => p.clone(),
                };
                load_profiles(path)?
            }
            None => Profiles::new(),
        };
        for p in self.profiles {
            profiles.insert(p.kernel.clone(), p);
        }
        let scheduler = match self.scheduler {
            Some(name) => SchedulerKind::parse(&name).ok_or(PlatformError::UnknownScheduler(name))?,
            None => SchedulerKind::default(),
        };
        let config = PlatformConfig {
            smp_workers: self.smp_workers.unwrap_or(1),
            accelerators: self.accelerators,
            creation_overhead_ns: self.creation_overhead_ns.unwrap_or(DEFAULT_CREATION_OVERHEAD_NS),
            submit_cost_ns: self.submit_cost_ns.unwrap_or(DEFAULT_SUBMIT_COST_NS),
            cpu_freq_mhz: self.cpu_freq_mhz,
            profiles,
            eligibility_overrides: self.eligibility_overrides,
            scheduler,
        };
        config.validate()?;
        Ok(config)
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<PlatformConfig, PlatformError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| PlatformError::Io { path: path.into(), source })?;
    PlatformConfig::from_json(&text, path.parent())
}

pub fn write_config(config: &PlatformConfig, path: impl AsRef<Path>) -> Result<(), PlatformError> {
    let path = path.as_ref();
    std::fs::write(path, config.to_json()).map_err(|source| PlatformError::Io { path: path.into(), source })
}

/// Effective targets of a task once the config's override is applied.
/// Returns `Err(target)` for the first override entry the task never
/// declared.
pub fn effective_targets(declared: &TargetSet, override_for_kernel: Option<&TargetSet>) -> Result<TargetSet, Target> {
    match override_for_kernel {
        None => Ok(declared.clone()),
        Some(ov) => match ov.iter().find(|t| !declared.contains(t)) {
            Some(&extra) => Err(extra),
            None => Ok(ov.clone()),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_conversion_examples() {
        assert_eq!(cycles_to_ps(100, 1000.0).unwrap(), TimePs(100_000));
        assert_eq!(cycles_to_ps(0, 123.0).unwrap(), TimePs(0));
        assert_eq!(cycles_to_ps(667, 667.0).unwrap(), TimePs(1_000_000));
        // 1 cycle at 3 MHz = 333333.33.. ps, 2 cycles = 666666.66.. ps
        assert_eq!(cycles_to_ps(1, 3.0).unwrap(), TimePs(333_333));
        assert_eq!(cycles_to_ps(2, 3.0).unwrap(), TimePs(666_667));
        // 1 cycle at 400 GHz is exactly 2.5 ps
        assert_eq!(cycles_to_ps(1, 400_000.0).unwrap(), TimePs(3));
    }

    #[test]
    fn conversion_errors() {
        assert!(matches!(cycles_to_ps(u64::MAX, 1.0), Err(PlatformError::TimeOverflow)));
        assert!(matches!(cycles_to_ps(1, 0.0), Err(PlatformError::BadFrequency(_))));
        assert!(matches!(cycles_to_ps(1, -5.0), Err(PlatformError::BadFrequency(_))));
        assert!(matches!(cycles_to_ps(1, f64::NAN), Err(PlatformError::BadFrequency(_))));
    }

    #[test]
    fn time_display() {
        assert_eq!(TimePs(251_000).to_string(), "251");
        assert_eq!(TimePs(1_500).to_string(), "1.5");
        assert_eq!(TimePs(1_001).to_string(), "1.001");
        assert_eq!(TimePs(1_499).as_ns_rounded(), 1);
        assert_eq!(TimePs(1_500).as_ns_rounded(), 2);
    }

    #[test]
    fn profile_parsing() {
        let csv =
            "kernel,compute_cycles,in_transfer_cycles,out_transfer_cycles,fpga_freq_mhz\nmxm64,10000,500,500,100\n";
        let p = read_profiles(csv.as_bytes()).unwrap();
        assert_eq!(p["mxm64"].compute_cycles, 10_000);
        assert_eq!(p["mxm64"].fpga_freq_mhz, 100.0);
        assert_eq!(read_profiles(profiles_to_csv(&p).as_bytes()).unwrap(), p);

        let header_only = "kernel,compute_cycles,in_transfer_cycles,out_transfer_cycles,fpga_freq_mhz\n";
        assert!(read_profiles(header_only.as_bytes()).unwrap().is_empty());

        let dup = format!("{header_only}k,1,1,1,100\nk,2,2,2,100\n");
        let err = read_profiles(dup.as_bytes()).unwrap_err();
        assert!(matches!(err, PlatformError::DuplicateKernel(ref k) if k == "k"));

        let bad = format!("{header_only}k,lots,1,1,100\n");
        assert!(matches!(
            read_profiles(bad.as_bytes()),
            Err(PlatformError::NotNumeric { field: "compute_cycles", line: 2, .. })
        ));

        let missing = "kernel,compute_cycles,in_transfer_cycles,out_transfer_cycles\nk,1,1,1\n";
        assert!(matches!(read_profiles(missing.as_bytes()), Err(PlatformError::MissingColumn("fpga_freq_mhz"))));
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = PlatformConfig::from_json(r#"{"smp_workers":1}"#, None).unwrap();
        assert_eq!(c, PlatformConfig::default());
        assert_eq!(c.creation_overhead_ns, 1_000);
        assert_eq!(c.submit_cost_ns, 500);
        assert!(c.accelerators.is_empty());
    }

    #[test]
    fn config_errors() {
        let err = PlatformConfig::from_json(r#"{"accelerators":[{"kernel":"k","count":2}]}"#, None).unwrap_err();
        assert!(matches!(err, PlatformError::MissingProfile(ref k) if k == "k"));
        let err = PlatformConfig::from_json(r#"{"scheduler":"heft"}"#, None).unwrap_err();
        assert!(matches!(err, PlatformError::UnknownScheduler(_)));
        let err = PlatformConfig::from_json(r#"{"smp_workers":0}"#, None).unwrap_err();
        assert!(matches!(err, PlatformError::NoSmpWorkers));
        assert!(PlatformConfig::from_json(r#"{"smp_wrokers":2}"#, None).is_err());
    }

    #[test]
    fn override_restricts_only() {
        let both: TargetSet = [Target::Smp, Target::Fpga].into();
        let fpga: TargetSet = [Target::Fpga].into();
        let smp: TargetSet = [Target::Smp].into();
        assert_eq!(effective_targets(&both, Some(&fpga)), Ok(fpga.clone()));
        assert_eq!(effective_targets(&both, None), Ok(both.clone()));
        assert_eq!(effective_targets(&smp, Some(&fpga)), Err(Target::Fpga));
    }
}
