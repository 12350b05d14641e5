//! Monitor-mode detectors: value outliers, pathway latency, cross-point
//! consistency, acknowledgement loss and the conditioning-rate model.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::belief::Evidence;
use super::gate::{DpId, PacketKind, TelemetryPacket};
use super::pathway::FaultPathway;
use super::FdeError;

/// Linear relation expected between the values at two points:
/// `to = (from + offset) * scale`, within `tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Relation {
    pub from_dp: DpId,
    pub to_dp: DpId,
    pub offset: f64,
    pub scale: f64,
    pub tolerance: f64,
}

impl Relation {
    /// Fahrenheit at `from_dp` against Celsius at `to_dp`.
    pub fn fahrenheit_to_celsius(from_dp: DpId, to_dp: DpId) -> Self {
        Relation { from_dp, to_dp, offset: -32.0, scale: 5.0 / 9.0, tolerance: 0.5 }
    }

    pub fn expected(&self, from: f64) -> f64 {
        (from + self.offset) * self.scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Largest accepted change per 100 ms between successive values at a
    /// mainline point; longer gaps scale the limit proportionally.
    pub outlier_jump_per_100ms: f64,
    pub latency_timeout_ms: u64,
    /// Consistency relations; when absent, the first two mainline points of
    /// each pathway are checked as Fahrenheit to Celsius.
    pub relations: Option<Vec<Relation>>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { outlier_jump_per_100ms: 8.0, latency_timeout_ms: 200, relations: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AnomalyKind {
    Outlier { dp: DpId, value: f64, previous: f64 },
    Inconsistency { from_dp: DpId, to_dp: DpId, input: f64, expected: f64, observed: f64 },
    Latency { from_dp: DpId, value: f64 },
    ErrorBranch { dp: DpId },
    MissingAck { dp: DpId, implicated: String },
    RateAnomaly { rate_c_per_min: f64, p_degraded: f64, window_start_ms: u64 },
    SequenceGap { gate: usize, expected: u64, got: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Anomaly {
    pub time_ms: u64,
    pub pathway: String,
    #[serde(flatten)]
    pub kind: AnomalyKind,
}

impl Anomaly {
    pub fn evidence(&self) -> Option<Evidence> {
        match self.kind {
            AnomalyKind::Outlier { .. } => Some(Evidence::Outlier),
            AnomalyKind::Inconsistency { .. } => Some(Evidence::Inconsistency),
            AnomalyKind::Latency { .. } => Some(Evidence::Latency),
            AnomalyKind::ErrorBranch { .. } => Some(Evidence::ErrorBranch),
            AnomalyKind::MissingAck { .. } => Some(Evidence::MissingAck),
            AnomalyKind::RateAnomaly { .. } => Some(Evidence::RateAnomaly),
            AnomalyKind::SequenceGap { .. } => None,
        }
    }

    /// Whether this anomaly warrants a diagnostic intervention.
    pub fn warrants_intervention(&self) -> bool {
        matches!(
            self.kind,
            AnomalyKind::Outlier { .. }
                | AnomalyKind::Inconsistency { .. }
                | AnomalyKind::Latency { .. }
                | AnomalyKind::RateAnomaly { .. }
        )
    }

    pub fn from_rate_monitor(&self) -> bool {
        matches!(self.kind, AnomalyKind::RateAnomaly { .. })
    }
}

#[derive(Debug, Clone)]
struct Pending {
    hop: usize,
    t: u64,
    value: f64,
}

/// Detector state for one pathway.
#[derive(Debug, Clone)]
pub struct PathwayMonitor {
    pathway: FaultPathway,
    thresholds: Thresholds,
    relations: Vec<Relation>,
    accepted: HashMap<DpId, (u64, f64)>,
    pending: VecDeque<Pending>,
    rate: Option<RateMonitor>,
    zone_sample: Option<f64>,
}

impl PathwayMonitor {
    pub fn new(pathway: FaultPathway, thresholds: Thresholds, rate: Option<RateModel>) -> Self {
        let relations = match &thresholds.relations {
            Some(r) => r.iter().filter(|r| pathway.contains(r.from_dp) && pathway.contains(r.to_dp)).cloned().collect(),
            None if pathway.mainline.len() >= 2 => {
                vec![Relation::fahrenheit_to_celsius(pathway.mainline[0].id, pathway.mainline[1].id)]
            }
            None => Vec::new(),
        };
        PathwayMonitor {
            pathway,
            thresholds,
            relations,
            accepted: HashMap::new(),
            pending: VecDeque::new(),
            rate: rate.map(RateMonitor::new),
            zone_sample: None,
        }
    }

    pub fn pathway(&self) -> &FaultPathway {
        &self.pathway
    }

    /// Forgets in-flight state, e.g. after the pathway was ring-fenced.
    pub fn reset(&mut self) {
        self.accepted.clear();
        self.pending.clear();
        self.zone_sample = None;
        if let Some(r) = &mut self.rate {
            r.reset();
        }
    }

    fn anomaly(&self, time_ms: u64, kind: AnomalyKind) -> Anomaly {
        Anomaly { time_ms, pathway: self.pathway.id.clone(), kind }
    }

    /// Feeds one live packet, returning anomalies it reveals.
    pub fn observe(&mut self, p: &TelemetryPacket) -> Vec<Anomaly> {
        let mut out = Vec::new();
        if !matches!(p.kind, PacketKind::Event | PacketKind::Data) {
            return out;
        }
        if let Some(i) = self.pathway.mainline.iter().position(|d| d.id == p.dp) {
            let port = self.pathway.mainline[i].from.port.clone();
            let last = i + 1 == self.pathway.mainline.len();
            if last && self.rate.is_some() {
                self.feed_rate(p, &port, &mut out);
            }
            if p.port != port {
                return out;
            }
            let Some(v) = p.number() else { return out };
            self.check_outlier(p.dp, p.time_ms, v, &mut out);
            if i > 0 && self.pathway.successor(i - 1).is_some() {
                if let Some(k) = self.pending.iter().position(|q| q.hop == i - 1) {
                    let q = self.pending.remove(k).unwrap_or(Pending { hop: 0, t: 0, value: 0.0 });
                    let from_dp = self.pathway.mainline[i - 1].id;
                    for r in self.relations.iter().filter(|r| r.from_dp == from_dp && r.to_dp == p.dp) {
                        let expected = r.expected(q.value);
                        if (expected - v).abs() > r.tolerance {
                            out.push(self.anomaly(
                                p.time_ms,
                                AnomalyKind::Inconsistency { from_dp, to_dp: p.dp, input: q.value, expected, observed: v },
                            ));
                        }
                    }
                }
            }
            if self.pathway.successor(i).is_some() || self.pathway.branches_from_block(i).next().is_some() {
                self.pending.push_back(Pending { hop: i, t: p.time_ms, value: v });
            }
        } else if p.is_event() {
            let hops = self.pathway.mainline.len();
            for i in 0..hops {
                if self.pathway.branches_from_block(i).any(|b| b.id == p.dp) {
                    if let Some(k) = self.pending.iter().position(|q| q.hop == i) {
                        self.pending.remove(k);
                        if i + 1 < hops {
                            out.push(self.anomaly(p.time_ms, AnomalyKind::ErrorBranch { dp: p.dp }));
                        }
                    }
                }
            }
        }
        out
    }

    fn check_outlier(&mut self, dp: DpId, t: u64, v: f64, out: &mut Vec<Anomaly>) {
        match self.accepted.get(&dp) {
            Some(&(t0, v0)) => {
                let limit = self.thresholds.outlier_jump_per_100ms * ((t - t0) as f64 / 100.0).max(1.0);
                if (v - v0).abs() > limit {
                    out.push(self.anomaly(t, AnomalyKind::Outlier { dp, value: v, previous: v0 }));
                } else {
                    self.accepted.insert(dp, (t, v));
                }
            }
            None => {
                self.accepted.insert(dp, (t, v));
            }
        }
    }

    fn feed_rate(&mut self, p: &TelemetryPacket, zone_port: &str, out: &mut Vec<Anomaly>) {
        if p.port == zone_port {
            self.zone_sample = p.number();
        } else if p.port == "SETPOINT" {
            let (Some(zone), Some(set)) = (self.zone_sample.take(), p.number()) else { return };
            let Some(rate) = self.rate.as_mut() else { return };
            if let Some(d) = rate.feed(p.time_ms, zone, set) {
                if d.intervene {
                    out.push(self.anomaly(
                        p.time_ms,
                        AnomalyKind::RateAnomaly {
                            rate_c_per_min: d.rate_c_per_min,
                            p_degraded: d.p_degraded,
                            window_start_ms: d.window_start_ms,
                        },
                    ));
                }
            }
        }
    }

    /// Reports hops whose follow-up did not arrive in time.
    pub fn expire(&mut self, now: u64) -> Vec<Anomaly> {
        let timeout = self.thresholds.latency_timeout_ms;
        let mut out = Vec::new();
        let last = self.pathway.mainline.len().saturating_sub(1);
        while let Some(q) = self.pending.front() {
            if now <= q.t + timeout {
                break;
            }
            let q = self.pending.pop_front().unwrap_or(Pending { hop: 0, t: 0, value: 0.0 });
            let dp = self.pathway.mainline[q.hop].clone();
            let kind = if q.hop == last {
                AnomalyKind::MissingAck { dp: dp.id, implicated: dp.to.instance.clone() }
            } else {
                AnomalyKind::Latency { from_dp: dp.id, value: q.value }
            };
            out.push(self.anomaly(q.t + timeout, kind));
        }
        out
    }

    pub fn rate_monitor(&self) -> Option<&RateMonitor> {
        self.rate.as_ref()
    }
}

/// Two-hypothesis model of the conditioning rate after a setpoint change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateModel {
    pub expected_rate_c_per_min: f64,
    pub sigma_healthy: f64,
    pub sigma_degraded: f64,
    pub prior_degraded: f64,
    pub intervention_threshold: f64,
    pub window_ms: u64,
    /// Demand exists while |setpoint - zone| exceeds this.
    pub deadband_c: f64,
}

impl Default for RateModel {
    fn default() -> Self {
        RateModel {
            expected_rate_c_per_min: 0.3,
            sigma_healthy: 0.1,
            sigma_degraded: 0.1,
            prior_degraded: 0.5,
            intervention_threshold: 0.95,
            window_ms: 300_000,
            deadband_c: 0.5,
        }
    }
}

fn gaussian(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

impl RateModel {
    pub fn check(&self) -> Result<(), FdeError> {
        let ok = self.sigma_healthy > 0.0
            && self.sigma_degraded > 0.0
            && self.intervention_threshold > 0.5
            && self.intervention_threshold < 1.0
            && (0.0..1.0).contains(&self.prior_degraded)
            && self.prior_degraded > 0.0
            && self.window_ms > 0;
        if ok {
            Ok(())
        } else {
            Err(FdeError::BadConfig("rate model: sigmas > 0, threshold in (0.5, 1), prior in (0, 1)".into()))
        }
    }

    /// P(Degraded | rate) for a rate already oriented by demand direction.
    pub fn p_degraded(&self, rate: f64) -> f64 {
        let d = self.prior_degraded * gaussian(rate, 0.0, self.sigma_degraded);
        let n = (1.0 - self.prior_degraded) * gaussian(rate, self.expected_rate_c_per_min, self.sigma_healthy);
        if d + n == 0.0 {
            // Both densities underflow: far beyond either mean.
            return if rate.abs() < (rate - self.expected_rate_c_per_min).abs() { 1.0 } else { 0.0 };
        }
        d / (d + n)
    }
}

/// Least-squares slope in units per minute of `(time_ms, value)` samples.
pub fn lsq_slope_per_min(samples: &[(u64, f64)]) -> Result<f64, FdeError> {
    if samples.len() < 2 {
        return Err(FdeError::InsufficientSamples { have: samples.len(), need: 2 });
    }
    let n = samples.len() as f64;
    let t0 = samples[0].0;
    let xs = || samples.iter().map(|&(t, _)| (t - t0) as f64 / 60_000.0);
    let mx = xs().sum::<f64>() / n;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let sxx: f64 = xs().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(FdeError::InsufficientSamples { have: samples.len(), need: 2 });
    }
    let sxy: f64 = xs().zip(samples).map(|(x, &(_, y))| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateDecision {
    pub window_start_ms: u64,
    pub rate_c_per_min: f64,
    pub p_degraded: f64,
    pub intervene: bool,
}

/// Watches the zone temperature after each setpoint change while demand
/// persists, and judges the rate once a full window has been observed.
#[derive(Debug, Clone)]
pub struct RateMonitor {
    model: RateModel,
    last_setpoint: Option<f64>,
    armed: bool,
    direction: f64,
    window: Vec<(u64, f64)>,
    decisions: Vec<RateDecision>,
}

impl RateMonitor {
    pub fn new(model: RateModel) -> Self {
        RateMonitor { model, last_setpoint: None, armed: false, direction: 0.0, window: Vec::new(), decisions: Vec::new() }
    }

    pub fn reset(&mut self) {
        self.armed = false;
        self.window.clear();
    }

    pub fn decisions(&self) -> &[RateDecision] {
        &self.decisions
    }

    /// Judges a finished window directly.
    pub fn evaluate(&self, samples: &[(u64, f64)], direction: f64) -> Result<RateDecision, FdeError> {
        let span = samples.last().map_or(0, |s| s.0) - samples.first().map_or(0, |s| s.0);
        if samples.len() < 2 || span < self.model.window_ms {
            return Err(FdeError::InsufficientSamples { have: samples.len(), need: 2 });
        }
        let rate = lsq_slope_per_min(samples)? * direction;
        let p = self.model.p_degraded(rate);
        Ok(RateDecision {
            window_start_ms: samples[0].0,
            rate_c_per_min: rate,
            p_degraded: p,
            intervene: p > self.model.intervention_threshold,
        })
    }

    pub fn feed(&mut self, t: u64, zone: f64, setpoint: f64) -> Option<RateDecision> {
        if self.last_setpoint != Some(setpoint) {
            if self.last_setpoint.is_some() {
                self.armed = true;
                self.window.clear();
            }
            self.last_setpoint = Some(setpoint);
        }
        if !self.armed {
            return None;
        }
        let gap = setpoint - zone;
        let dir = if gap > self.model.deadband_c {
            1.0
        } else if gap < -self.model.deadband_c {
            -1.0
        } else {
            0.0
        };
        if self.window.is_empty() {
            self.direction = dir;
        }
        if dir == 0.0 || dir != self.direction {
            self.reset();
            return None;
        }
        self.window.push((t, zone));
        if t - self.window[0].0 < self.model.window_ms {
            return None;
        }
        let decision = self.evaluate(&self.window, self.direction).ok();
        self.reset();
        if let Some(d) = &decision {
            self.decisions.push(d.clone());
        }
        decision
    }
}
