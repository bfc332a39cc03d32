//! Performance model: temporal-sparsity statistics, the closed-form
//! latency/throughput estimator, and a cycle-approximate simulator of the
//! K-PE datapath driven by engine traces.
//!
//! The estimator prices one network step at
//!
//! ```text
//! cycles = [ (3MN + 3M^2(L-1)) (1 - g_dx) + 3M^2 L (1 - g_dh) + 3M ] / K
//! ```
//!
//! where the nominal work is `Op = 2 (3MN + 3M^2(L-1) + 3M^2 L)` operations
//! per timestep and `g_dx`, `g_dh` are the mean fractions of suppressed
//! input/hidden delta elements. Effective throughput is Op divided by actual
//! latency, so it exceeds the 2*K*f peak whenever columns are skipped.
//!
//! The simulator charges each transmitted column `ceil(3M/K)` cycles (plus a
//! configurable per-burst overhead) and `ceil(3M/K)` activation cycles per
//! layer. The estimator's activation term is a single 3M/K per network step,
//! so for L > 1 the simulator sits slightly above the estimate; with zero
//! overhead and 3M divisible by K the two agree exactly for L = 1 and within
//! the per-layer activation slack otherwise.

use serde::Serialize;

use crate::engine::StepTrace;
use crate::error::{Error, Result};
use crate::model::NetworkConfig;

/// Datapath configuration. Defaults model an 8-PE array behind a 64-bit
/// DRAM interface carrying 8-bit weights, clocked at 125 MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HwConfig {
    /// Number of processing elements K.
    pub pe_count: usize,
    /// Clock frequency in Hz.
    pub clock_hz: f64,
    /// External memory interface width in bits.
    pub dram_bw_bits: u32,
    /// Weight width in bits.
    pub weight_bits: u32,
    /// Extra cycles charged per column burst (0 matches the estimator).
    pub col_overhead_cycles: u64,
    /// When false, the one-element-per-cycle delta scan is charged instead
    /// of being overlapped with the column fetch/MAC pipeline.
    pub du_overlapped: bool,
}

impl Default for HwConfig {
    fn default() -> Self {
        Self {
            pe_count: 8,
            clock_hz: 125e6,
            dram_bw_bits: 64,
            weight_bits: 8,
            col_overhead_cycles: 0,
            du_overlapped: true,
        }
    }
}

impl HwConfig {
    /// PE count that saturates the memory interface: DRAM width over weight
    /// width (64/8 = 8 at defaults).
    pub fn matched_pe_count(&self) -> usize {
        (self.dram_bw_bits / self.weight_bits) as usize
    }

    /// Peak MAC throughput 2*K*f in Op/s (2 GOp/s at defaults).
    pub fn peak_throughput_ops(&self) -> f64 {
        2.0 * self.pe_count as f64 * self.clock_hz
    }
}

/// Nominal operations per timestep: 2 (3MN + 3M^2(L-1) + 3M^2 L).
pub fn op_count(layers: usize, input_size: usize, hidden_size: usize) -> u64 {
    let l = layers as u64;
    let n = input_size as u64;
    let m = hidden_size as u64;
    2 * (3 * m * n + 3 * m * m * (l - 1) + 3 * m * m * l)
}

/// Closed-form mean (latency_s, throughput_ops) for the given sparsities.
pub fn estimate(
    layers: usize,
    input_size: usize,
    hidden_size: usize,
    gamma_dx: f64,
    gamma_dh: f64,
    hw: &HwConfig,
) -> (f64, f64) {
    let l = layers as f64;
    let n = input_size as f64;
    let m = hidden_size as f64;
    let k = hw.pe_count as f64;
    let input_macs = 3.0 * m * n + 3.0 * m * m * (l - 1.0);
    let hidden_macs = 3.0 * m * m * l;
    let cycles = (input_macs * (1.0 - gamma_dx) + hidden_macs * (1.0 - gamma_dh) + 3.0 * m) / k;
    let latency = cycles / hw.clock_hz;
    let throughput = op_count(layers, input_size, hidden_size) as f64 / latency;
    (latency, throughput)
}

/// Suppressed-delta fractions, per layer and element-weighted aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayerSparsity {
    pub gamma_dx: f64,
    pub gamma_dh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparsityStats {
    pub gamma_dx: f64,
    pub gamma_dh: f64,
    pub per_layer: Vec<LayerSparsity>,
}

/// Mean/min/max of a per-timestep quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Simulator output. Throughput statistics pair with latency reciprocally:
/// the mean is Op over mean latency, the max corresponds to the fastest
/// timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct PerfReport {
    pub op_per_step: u64,
    pub timesteps: usize,
    /// Clock the cycle counts were priced at, Hz.
    pub clock_hz: f64,
    /// Simulated cycles per timestep.
    pub cycles: Vec<u64>,
    /// Transmitted input/hidden elements per timestep (summed over layers).
    pub nz_x: Vec<u64>,
    pub nz_h: Vec<u64>,
    pub latency_s: Stats,
    pub eff_throughput_ops: Stats,
    /// Closed-form values fed with the measured sparsity.
    pub est_latency_s: f64,
    pub est_throughput_ops: f64,
    pub peak_throughput_ops: f64,
    /// Mean effective throughput over peak; above 1.0 once work is skipped.
    pub mac_efficiency: f64,
    pub sparsity: SparsityStats,
}

impl PerfReport {
    /// |simulated - estimated| / estimated mean latency.
    pub fn rel_err_vs_estimate(&self) -> f64 {
        (self.latency_s.mean - self.est_latency_s).abs() / self.est_latency_s
    }

    /// Per-timestep CSV: `t,cycles,latency_us,ops,nz_x,nz_h`.
    pub fn timestep_csv(&self) -> String {
        let mut out = String::from("t,cycles,latency_us,ops,nz_x,nz_h\n");
        for t in 0..self.timesteps {
            let latency_us = self.cycles[t] as f64 / self.clock_hz * 1e6;
            out.push_str(&format!(
                "{},{},{:.6},{},{},{}\n",
                t, self.cycles[t], latency_us, self.op_per_step, self.nz_x[t], self.nz_h[t]
            ));
        }
        out
    }
}

/// Streaming accumulator over step traces, producing sparsity statistics and
/// the cycle-approximate report without retaining the traces.
pub struct TraceCollector {
    cfg: NetworkConfig,
    hw: HwConfig,
    col_cycles: u64,
    act_cycles_per_layer: u64,
    scan_elems_per_step: u64,
    events_x: Vec<u64>,
    events_h: Vec<u64>,
    cycles: Vec<u64>,
    nz_x: Vec<u64>,
    nz_h: Vec<u64>,
}

impl TraceCollector {
    pub fn new(cfg: &NetworkConfig, hw: &HwConfig) -> Self {
        let m = cfg.hidden_size as u64;
        let k = hw.pe_count as u64;
        let col_cycles = (3 * m).div_ceil(k);
        let scan: u64 = (0..cfg.layers)
            .map(|l| (cfg.layer_input_size(l) + cfg.hidden_size) as u64)
            .sum();
        Self {
            cfg: *cfg,
            hw: *hw,
            col_cycles,
            act_cycles_per_layer: col_cycles,
            scan_elems_per_step: scan,
            events_x: vec![0; cfg.layers],
            events_h: vec![0; cfg.layers],
            cycles: Vec::new(),
            nz_x: Vec::new(),
            nz_h: Vec::new(),
        }
    }

    pub fn add(&mut self, trace: &StepTrace) -> Result<()> {
        if trace.nz_x.len() != self.cfg.layers || trace.nz_h.len() != self.cfg.layers {
            return Err(Error::ConfigMismatch(format!(
                "trace has {} layers, network has {}",
                trace.nz_x.len(),
                self.cfg.layers
            )));
        }
        let mut step_x = 0u64;
        let mut step_h = 0u64;
        for l in 0..self.cfg.layers {
            self.events_x[l] += trace.nz_x[l] as u64;
            self.events_h[l] += trace.nz_h[l] as u64;
            step_x += trace.nz_x[l] as u64;
            step_h += trace.nz_h[l] as u64;
        }
        let mut cycles = (step_x + step_h) * (self.col_cycles + self.hw.col_overhead_cycles)
            + self.cfg.layers as u64 * self.act_cycles_per_layer;
        if !self.hw.du_overlapped {
            cycles += self.scan_elems_per_step;
        }
        self.cycles.push(cycles);
        self.nz_x.push(step_x);
        self.nz_h.push(step_h);
        Ok(())
    }

    pub fn finish(self) -> Result<(SparsityStats, PerfReport)> {
        let t = self.cycles.len();
        if t == 0 {
            return Err(Error::EmptyTrace);
        }
        let cfg = &self.cfg;
        let per_layer: Vec<LayerSparsity> = (0..cfg.layers)
            .map(|l| {
                let scanned_x = (cfg.layer_input_size(l) * t) as f64;
                let scanned_h = (cfg.hidden_size * t) as f64;
                LayerSparsity {
                    gamma_dx: 1.0 - self.events_x[l] as f64 / scanned_x,
                    gamma_dh: 1.0 - self.events_h[l] as f64 / scanned_h,
                }
            })
            .collect();
        let scanned_x_total: u64 = (0..cfg.layers)
            .map(|l| (cfg.layer_input_size(l) * t) as u64)
            .sum();
        let scanned_h_total = (cfg.hidden_size * cfg.layers * t) as u64;
        let sparsity = SparsityStats {
            gamma_dx: 1.0 - self.events_x.iter().sum::<u64>() as f64 / scanned_x_total as f64,
            gamma_dh: 1.0 - self.events_h.iter().sum::<u64>() as f64 / scanned_h_total as f64,
            per_layer,
        };

        let op = op_count(cfg.layers, cfg.input_size, cfg.hidden_size);
        let f = self.hw.clock_hz;
        let lat: Vec<f64> = self.cycles.iter().map(|&c| c as f64 / f).collect();
        let mean = lat.iter().sum::<f64>() / t as f64;
        let min = lat.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = lat.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let latency_s = Stats { mean, min, max };
        let eff_throughput_ops = Stats {
            mean: op as f64 / mean,
            min: op as f64 / max,
            max: op as f64 / min,
        };
        let (est_latency_s, est_throughput_ops) = estimate(
            cfg.layers,
            cfg.input_size,
            cfg.hidden_size,
            sparsity.gamma_dx,
            sparsity.gamma_dh,
            &self.hw,
        );
        let peak = self.hw.peak_throughput_ops();
        let report = PerfReport {
            op_per_step: op,
            timesteps: t,
            clock_hz: f,
            cycles: self.cycles,
            nz_x: self.nz_x,
            nz_h: self.nz_h,
            latency_s,
            eff_throughput_ops,
            est_latency_s,
            est_throughput_ops,
            peak_throughput_ops: peak,
            mac_efficiency: eff_throughput_ops.mean / peak,
            sparsity,
        };
        Ok((report.sparsity.clone(), report))
    }
}

/// Suppressed-delta statistics of a trace sequence.
pub fn measure_sparsity(traces: &[StepTrace], cfg: &NetworkConfig) -> Result<SparsityStats> {
    let mut collector = TraceCollector::new(cfg, &HwConfig::default());
    for t in traces {
        collector.add(t)?;
    }
    Ok(collector.finish()?.0)
}

/// Cycle-approximate simulation of a trace sequence.
pub fn simulate(traces: &[StepTrace], cfg: &NetworkConfig, hw: &HwConfig) -> Result<PerfReport> {
    let mut collector = TraceCollector::new(cfg, hw);
    for t in traces {
        collector.add(t)?;
    }
    Ok(collector.finish()?.1)
}

/// Flat summary of one run, emitted as JSON by the command-line tools.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub timesteps: usize,
    pub op_per_step: u64,
    pub theta_raw: i16,
    pub pe_count: usize,
    pub clock_hz: f64,
    pub mean_latency_us: f64,
    pub min_latency_us: f64,
    pub max_latency_us: f64,
    pub mean_throughput_gops: f64,
    pub min_throughput_gops: f64,
    pub max_throughput_gops: f64,
    pub gamma_dx: f64,
    pub gamma_dh: f64,
    pub per_layer: Vec<LayerSparsity>,
    pub est_latency_us: f64,
    pub est_throughput_gops: f64,
    pub sim_vs_est_rel_err: f64,
    pub mac_efficiency: f64,
    pub peak_throughput_gops: f64,
}

impl RunSummary {
    pub fn new(report: &PerfReport, theta_raw: i16, hw: &HwConfig) -> Self {
        Self {
            timesteps: report.timesteps,
            op_per_step: report.op_per_step,
            theta_raw,
            pe_count: hw.pe_count,
            clock_hz: hw.clock_hz,
            mean_latency_us: report.latency_s.mean * 1e6,
            min_latency_us: report.latency_s.min * 1e6,
            max_latency_us: report.latency_s.max * 1e6,
            mean_throughput_gops: report.eff_throughput_ops.mean / 1e9,
            min_throughput_gops: report.eff_throughput_ops.min / 1e9,
            max_throughput_gops: report.eff_throughput_ops.max / 1e9,
            gamma_dx: report.sparsity.gamma_dx,
            gamma_dh: report.sparsity.gamma_dh,
            per_layer: report.sparsity.per_layer.clone(),
            est_latency_us: report.est_latency_s * 1e6,
            est_throughput_gops: report.est_throughput_ops / 1e9,
            sim_vs_est_rel_err: report.rel_err_vs_estimate(),
            mac_efficiency: report.mac_efficiency,
            peak_throughput_gops: report.peak_throughput_ops / 1e9,
        }
    }
}
