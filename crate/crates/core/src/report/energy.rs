use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// Grid-average carbon intensity used when a run configures none, kg CO2eq per kWh.
pub const DEFAULT_CARBON_INTENSITY: f64 = 0.475;

const JOULES_PER_KWH: f64 = 3.6e6;

/// Nominal component power draw; energy is estimated as power times utilization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerModel {
    pub cpu_tdp_w: f64,
    #[serde(default)]
    pub gpu_tdp_w: f64,
    pub ram_w_per_gb: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        Self {
            cpu_tdp_w: 65.0,
            gpu_tdp_w: 0.0,
            ram_w_per_gb: 0.375,
        }
    }
}

/// One sampling interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub dt_s: f64,
    /// Fraction of the whole CPU package in use, `0..=1`.
    pub cpu_util: f64,
    pub gpu_util: f64,
    /// Resident set size in GB.
    pub ram_gb: f64,
}

/// Estimated energy and emissions for one stage or a whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub stage: String,
    pub duration_s: f64,
    /// kg CO2eq.
    pub emissions: f64,
    /// kg CO2eq per hour.
    pub emissions_rate: f64,
    /// Mean modeled draw over the stage, W.
    pub cpu_power: f64,
    pub gpu_power: f64,
    /// kWh.
    pub cpu_energy: f64,
    pub gpu_energy: f64,
    pub ram_energy: f64,
    pub energy_consumed: f64,
    /// GB.
    pub peak_ram: f64,
    /// kg CO2eq per kWh.
    pub carbon_intensity: f64,
    /// Always true: figures come from a power model, not hardware counters.
    pub estimated: bool,
}

/// Integrates a sample stream under `model`. Samples with a non-positive interval
/// contribute nothing.
pub fn track_energy(stage: &str, samples: &[EnergySample], model: &PowerModel, intensity: f64) -> EnergyReport {
    let mut duration = 0.0;
    let mut cpu_j = 0.0;
    let mut gpu_j = 0.0;
    let mut ram_j = 0.0;
    let mut peak: f64 = 0.0;
    for s in samples.iter().filter(|s| s.dt_s > 0.0) {
        duration += s.dt_s;
        cpu_j += model.cpu_tdp_w * s.cpu_util * s.dt_s;
        gpu_j += model.gpu_tdp_w * s.gpu_util * s.dt_s;
        ram_j += model.ram_w_per_gb * s.ram_gb * s.dt_s;
        peak = peak.max(s.ram_gb);
    }
    let cpu_energy = cpu_j / JOULES_PER_KWH;
    let gpu_energy = gpu_j / JOULES_PER_KWH;
    let ram_energy = ram_j / JOULES_PER_KWH;
    let energy_consumed = cpu_energy + gpu_energy + ram_energy;
    let emissions = energy_consumed * intensity;
    let per = |j: f64| if duration > 0.0 { j / duration } else { 0.0 };
    EnergyReport {
        stage: stage.to_owned(),
        duration_s: duration,
        emissions,
        emissions_rate: if duration > 0.0 {
            emissions / (duration / 3600.0)
        } else {
            0.0
        },
        cpu_power: per(cpu_j),
        gpu_power: per(gpu_j),
        cpu_energy,
        gpu_energy,
        ram_energy,
        energy_consumed,
        peak_ram: peak,
        carbon_intensity: intensity,
        estimated: true,
    }
}

/// Per-stage reports plus the run total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySummary {
    pub power_model: PowerModel,
    pub stages: Vec<EnergyReport>,
    pub total: EnergyReport,
}

/// Cumulative process CPU seconds and resident GB, if the platform exposes them.
fn process_usage() -> Option<(f64, f64)> {
    // utime and stime follow the parenthesised command name
    let stat = std::fs::read_to_string("/proc/self/stat").ok()?;
    let rest = &stat[stat.rfind(')')? + 2..];
    let fields: Vec<&str> = rest.split_whitespace().collect();
    let utime: f64 = fields.get(11)?.parse().ok()?;
    let stime: f64 = fields.get(12)?.parse().ok()?;
    // USER_HZ is 100 on every mainstream Linux build
    let cpu_s = (utime + stime) / 100.0;
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let kb: f64 = status
        .lines()
        .find(|l| l.starts_with("VmRSS:"))?
        .split_whitespace()
        .nth(1)?
        .parse()
        .ok()?;
    Some((cpu_s, kb / (1024.0 * 1024.0)))
}

struct Sampler {
    stages: Vec<(String, Vec<EnergySample>)>,
    last_at: Instant,
    last_cpu: Option<f64>,
    cores: f64,
}

impl Sampler {
    fn sample(&mut self) {
        let now = Instant::now();
        let dt = now.duration_since(self.last_at).as_secs_f64();
        let usage = process_usage();
        let (cpu_util, ram_gb) = match (usage, self.last_cpu) {
            (Some((cpu, ram)), Some(prev)) if dt > 0.0 => (((cpu - prev) / dt / self.cores).clamp(0.0, 1.0), ram),
            (Some((_, ram)), _) => (0.0, ram),
            // no process accounting: assume one busy core
            (None, _) => (1.0 / self.cores, 0.0),
        };
        self.last_cpu = usage.map(|u| u.0);
        self.last_at = now;
        if let Some((_, s)) = self.stages.last_mut() {
            s.push(EnergySample {
                dt_s: dt,
                cpu_util,
                gpu_util: 0.0,
                ram_gb,
            });
        }
    }
}

/// Background sampler that attributes process resource use to named stages.
pub struct EnergyMonitor {
    state: Arc<Mutex<Sampler>>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
    model: PowerModel,
    intensity: f64,
}

impl EnergyMonitor {
    pub fn start(model: PowerModel, intensity: f64, interval: Duration) -> Self {
        let cores = std::thread::available_parallelism().map_or(1, |n| n.get()) as f64;
        let state = Arc::new(Mutex::new(Sampler {
            stages: Vec::new(),
            last_at: Instant::now(),
            last_cpu: process_usage().map(|u| u.0),
            cores,
        }));
        let stop = Arc::new(AtomicBool::new(false));
        let handle = {
            let state = Arc::clone(&state);
            let stop = Arc::clone(&stop);
            std::thread::Builder::new()
                .name("energy-sampler".into())
                .spawn(move || {
                    while !stop.load(Ordering::Relaxed) {
                        std::thread::park_timeout(interval);
                        if stop.load(Ordering::Relaxed) {
                            break;
                        }
                        state.lock().expect("sampler lock").sample();
                    }
                })
                .ok()
        };
        Self {
            state,
            stop,
            handle,
            model,
            intensity,
        }
    }

    /// Closes the current stage with a final sample and opens `name`.
    pub fn begin_stage(&self, name: &str) {
        let mut s = self.state.lock().expect("sampler lock");
        if !s.stages.is_empty() {
            s.sample();
        } else {
            s.last_at = Instant::now();
            s.last_cpu = process_usage().map(|u| u.0);
        }
        s.stages.push((name.to_owned(), Vec::new()));
    }

    pub fn finish(mut self) -> EnergySummary {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            h.thread().unpark();
            let _ = h.join();
        }
        let mut s = self.state.lock().expect("sampler lock");
        s.sample();
        let stages: Vec<EnergyReport> = s
            .stages
            .iter()
            .map(|(name, samples)| track_energy(name, samples, &self.model, self.intensity))
            .collect();
        let all: Vec<EnergySample> = s.stages.iter().flat_map(|(_, v)| v.iter().copied()).collect();
        EnergySummary {
            power_model: self.model,
            stages,
            total: track_energy("total", &all, &self.model, self.intensity),
        }
    }
}

impl Drop for EnergyMonitor {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            h.thread().unpark();
            let _ = h.join();
        }
    }
}
