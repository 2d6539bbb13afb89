//! Power-model energy and carbon estimates, from fixed samples and from a live monitor.

use std::time::Duration;

use warpbench::report::{track_energy, EnergyMonitor, EnergySample, PowerModel, DEFAULT_CARBON_INTENSITY};

fn busy(ms: u64) -> u64 {
    let end = std::time::Instant::now() + Duration::from_millis(ms);
    let mut x = 0u64;
    while std::time::Instant::now() < end {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1);
    }
    x
}

fn main() {
    let model = PowerModel {
        cpu_tdp_w: 100.0,
        gpu_tdp_w: 0.0,
        ram_w_per_gb: 0.375,
    };
    // two hours at full utilization of a 100 W CPU
    let samples = vec![EnergySample {
        dt_s: 7200.0,
        cpu_util: 1.0,
        gpu_util: 0.0,
        ram_gb: 0.0,
    }];
    let r = track_energy("offline", &samples, &model, DEFAULT_CARBON_INTENSITY);
    println!("{}: {:.3} kWh, {:.4} kg CO2eq", r.stage, r.energy_consumed, r.emissions);

    let monitor = EnergyMonitor::start(
        PowerModel::default(),
        DEFAULT_CARBON_INTENSITY,
        Duration::from_millis(50),
    );
    monitor.begin_stage("idle");
    std::thread::sleep(Duration::from_millis(300));
    monitor.begin_stage("busy");
    std::hint::black_box(busy(300));
    let summary = monitor.finish();
    for s in summary.stages.iter().chain([&summary.total]) {
        println!(
            "{:<6} {:>6.3}s  cpu {:>6.2} W  energy {:.3e} kWh  peak ram {:.3} GB",
            s.stage, s.duration_s, s.cpu_power, s.energy_consumed, s.peak_ram
        );
    }
    println!("{}", serde_json::to_string_pretty(&summary.total).unwrap());
}
