//! Table-shaped resource report.

use serde::Serialize;

use crate::balance::{balance_report, throughput, BalanceReport, Throughput};
use crate::cost::{accelerator_ii, residual_buffer_comparison, BramSpec, BufferComparison};
use crate::dsp::{naive_dsp_estimate, CostTable, DspBreakdown};
use crate::parallelism::ParallelismConfig;
use crate::published;
use crate::roofline::{RooflinePoint, ScenarioFile};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRow {
    pub name: String,
    pub label: String,
    pub t: usize,
    pub tt: usize,
    pub ci: usize,
    pub cit: usize,
    pub co: usize,
    pub cot: usize,
    pub instances: usize,
    pub mops: f64,
    pub p: usize,
    pub ii: u64,
    /// Weight BRAMs of one instance; static-weight matmuls only.
    pub brams: Option<u64>,
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Published {
    pub stage_ii: Vec<u64>,
    pub matmul_eta: Vec<(String, f64)>,
    pub ideal_fps: f64,
    pub measured_fps: f64,
    pub measured_gops: f64,
    pub first_image_cycles: u64,
    pub top1_a4w4: f64,
    pub top1_a3w3: f64,
    pub synth_luts: u64,
    pub synth_dsps: u64,
    pub synth_brams: f64,
    pub power_w: f64,
    pub gops_per_w: f64,
    pub naive_dsp: u64,
    pub dsp_per_aie: u64,
    pub bram_per_uram: u64,
    pub lut_per_dsp: u64,
}

impl Default for Published {
    fn default() -> Self {
        Self {
            stage_ii: published::STAGE_II.to_vec(),
            matmul_eta: published::MATMUL_ETA.iter().map(|(n, e)| (n.to_string(), *e)).collect(),
            ideal_fps: published::IDEAL_FPS,
            measured_fps: published::MEASURED_FPS,
            measured_gops: published::MEASURED_GOPS,
            first_image_cycles: published::FIRST_IMAGE_CYCLES,
            top1_a4w4: published::TOP1_A4W4,
            top1_a3w3: published::TOP1_A3W3,
            synth_luts: published::SYNTH_LUTS,
            synth_dsps: published::SYNTH_DSPS,
            synth_brams: published::SYNTH_BRAMS,
            power_w: published::POWER_W,
            gops_per_w: published::GOPS_PER_W,
            naive_dsp: published::NAIVE_DSP,
            dsp_per_aie: published::DSP_PER_AIE,
            bram_per_uram: published::BRAM_PER_URAM,
            lut_per_dsp: published::LUT_PER_DSP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResourceReport {
    pub stages: Vec<StageRow>,
    pub accelerator_ii: u64,
    pub balance: BalanceReport,
    pub clock_hz: f64,
    pub ops_per_image: f64,
    pub throughput: Throughput,
    pub buffers: BufferComparison,
    pub dsp: DspBreakdown,
    pub roofline: Vec<RooflinePoint>,
    pub published: Published,
}

/// Inputs of [`ResourceReport::build`] beyond the parallelism config.
#[derive(Debug, Clone)]
pub struct ReportInputs {
    pub clock_hz: f64,
    pub ops_per_image: f64,
    pub bram: BramSpec,
    pub cost: CostTable,
    pub scenarios: ScenarioFile,
    /// BRAMs of one residual tensor and the PIPO stages it would cross.
    pub residual_tensor_brams: u64,
    pub residual_pipo_stages: u64,
}

impl Default for ReportInputs {
    fn default() -> Self {
        Self {
            clock_hz: published::CLOCK_HZ,
            ops_per_image: published::OPS_PER_IMAGE,
            bram: BramSpec::default(),
            cost: CostTable::default(),
            scenarios: ScenarioFile::reference(),
            residual_tensor_brams: published::RESIDUAL_TENSOR_BRAMS,
            residual_pipo_stages: published::RESIDUAL_PIPO_STAGES,
        }
    }
}

impl ResourceReport {
    pub fn build(pcfg: &ParallelismConfig, inputs: &ReportInputs) -> Result<Self> {
        pcfg.validate()?;
        let mut stages = Vec::with_capacity(pcfg.stages.len());
        for s in &pcfg.stages {
            let spec = s.spec()?;
            let bram = s.bram(pcfg.weight_bits, inputs.bram)?;
            stages.push(StageRow {
                name: s.name.clone(),
                label: s.label.clone(),
                t: s.t,
                tt: spec.tt,
                ci: s.ci,
                cit: spec.cit,
                co: s.co,
                cot: spec.cot,
                instances: s.instances,
                mops: s.mops(),
                p: s.parallelism(),
                ii: s.ii()?,
                brams: bram.map(|b| b.count),
                eta: bram.map(|b| b.efficiency),
            });
        }
        let iis: Vec<u64> = stages.iter().map(|s| s.ii).collect();
        let ii = accelerator_ii(&iis)?;
        Ok(Self {
            stages,
            accelerator_ii: ii,
            balance: balance_report(pcfg)?,
            clock_hz: inputs.clock_hz,
            ops_per_image: inputs.ops_per_image,
            throughput: throughput(ii, inputs.clock_hz, inputs.ops_per_image)?,
            buffers: residual_buffer_comparison(inputs.residual_tensor_brams, inputs.residual_pipo_stages, inputs.bram)?,
            dsp: naive_dsp_estimate(pcfg, &inputs.cost)?,
            roofline: inputs.scenarios.evaluate()?,
            published: Published::default(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable table with the columns TT, CIT, COT, MOPs, P, II, eta.
    pub fn to_text(&self) -> String {
        let mut o = String::new();
        o.push_str(&format!(
            "{:<9} {:<13} {:>9} {:>10} {:>10} {:>8} {:>5} {:>7} {:>6} {:>6}\n",
            "stage", "module", "T/TP=TT", "CI/CIP=CIT", "CO/COP=COT", "MOPs", "P", "II", "BRAM", "eta"
        ));
        for r in &self.stages {
            let co = if r.co == 1 { "-".to_string() } else { format!("{}/{}={}", r.co, r.co / r.cot, r.cot) };
            o.push_str(&format!(
                "{:<9} {:<13} {:>9} {:>10} {:>10} {:>8.3} {:>5} {:>7} {:>6} {:>6}\n",
                r.name,
                r.label,
                format!("{}/{}={}", r.t, r.t / r.tt, r.tt),
                format!("{}/{}={}", r.ci, r.ci / r.cit, r.cit),
                co,
                r.mops,
                r.p,
                r.ii,
                r.brams.map_or("-".into(), |b| b.to_string()),
                r.eta.map_or("-".into(), |e| format!("{:.1}%", 100.0 * e)),
            ));
        }
        o.push_str(&format!(
            "\naccelerator II {} cycles (bottleneck {}), largest bubble {}\n",
            self.accelerator_ii, self.balance.bottleneck, self.balance.largest_bubble
        ));
        o.push_str(&format!(
            "throughput {:.1} images/s at {:.0} MHz, {:.3} TOP/s\n",
            self.throughput.images_per_s,
            self.clock_hz / 1e6,
            self.throughput.ops_per_s / 1e12
        ));
        let b = &self.buffers;
        o.push_str(&format!(
            "residual buffers: {} PIPO stages x 2 x {} = {} BRAMs, hybrid {} BRAMs, reduction {:.1}%\n",
            b.pipo_stages,
            b.tensor_brams,
            b.pipo,
            b.hybrid,
            100.0 * b.reduction
        ));
        o.push_str(&format!(
            "arithmetic non-linear units: {} DSPs per block x {} blocks = {} DSPs\n",
            self.dsp.per_block, self.dsp.blocks, self.dsp.total
        ));
        o.push_str("roofline:\n");
        for p in &self.roofline {
            o.push_str(&format!(
                "  {:<16} {:>7.2} TOP/s ({})\n",
                p.name,
                p.attainable / 1e12,
                if p.compute_bound { "compute" } else { "bandwidth" }
            ));
        }
        let q = &self.published;
        o.push_str(&format!(
            "published, not modelled: {} images/s measured, {} GOP/s, first image {} cycles, top-1 {:.2}% (A4W4) {:.2}% (A3W3), \
             {} LUTs, {} DSPs, {} BRAMs, {} W, {} GOP/s/W\n",
            q.measured_fps,
            q.measured_gops,
            q.first_image_cycles,
            100.0 * q.top1_a4w4,
            100.0 * q.top1_a3w3,
            q.synth_luts,
            q.synth_dsps,
            q.synth_brams,
            q.power_w,
            q.gops_per_w
        ));
        o
    }
}
