//! Diagnostic agents: per-sub-application belief holders that watch their
//! pathways, intervene on anomalies and share conclusions.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::belief::{Belief, Component, Evidence, Hypothesis, LikelihoodTable};
use super::detect::{Anomaly, AnomalyKind, PathwayMonitor, RateModel, Thresholds};
use super::gate::{DpId, GateMode, Instrumentation, SeqChecker, TelemetryPacket};
use super::pathway::FaultPathway;
use super::plan::{run_plan, standard_plans, DiagnosticPlan, DiagnosticTarget, PlanOutcome, Verdict};
use super::FdeError;

/// Gap left between consecutive diagnostic steps.
pub const SETTLE_MS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyOrigin {
    /// Value, consistency or latency detectors.
    Monitor,
    /// The conditioning-rate model.
    Rate,
    /// Requested by an operator.
    Forced,
}

/// Posterior with named entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Posterior {
    #[serde(rename = "SensorFault")]
    pub sensor_fault: f64,
    #[serde(rename = "ConversionFault")]
    pub conversion_fault: f64,
    #[serde(rename = "ControllerFault")]
    pub controller_fault: f64,
    #[serde(rename = "ActuatorOrPlantFault")]
    pub actuator_or_plant_fault: f64,
    #[serde(rename = "NoFault")]
    pub no_fault: f64,
}

impl From<&Belief> for Posterior {
    fn from(b: &Belief) -> Self {
        let p = b.probabilities();
        Posterior {
            sensor_fault: p[0],
            conversion_fault: p[1],
            controller_fault: p[2],
            actuator_or_plant_fault: p[3],
            no_fault: p[4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidenceEntry {
    pub time_ms: u64,
    pub evidence: Evidence,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelineEntry {
    pub time_ms: u64,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosisReport {
    pub agent: String,
    pub pathway: String,
    pub origin: AnomalyOrigin,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trigger: Option<Anomaly>,
    pub hypothesis: Hypothesis,
    pub posterior: Posterior,
    pub evidence: Vec<EvidenceEntry>,
    pub outcomes: Vec<PlanOutcome>,
    pub timeline: Vec<TimelineEntry>,
    pub started_ms: u64,
    pub finished_ms: u64,
}

impl DiagnosisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }
}

/// Everything a diagnosis needs besides the target and the gates.
pub struct DiagnosisContext<'a> {
    pub agent: &'a str,
    pub pathway: &'a FaultPathway,
    pub plans: &'a [DiagnosticPlan],
    pub table: &'a LikelihoodTable,
    pub origin: AnomalyOrigin,
    pub trigger: Option<Anomaly>,
}

/// Ring-fences the pathway, runs its plans in order and folds the verdicts
/// into `belief`. Gates are back in Monitor mode on return.
pub fn diagnose(
    target: &mut dyn DiagnosticTarget,
    instr: &mut Instrumentation,
    ctx: DiagnosisContext<'_>,
    belief: &mut Belief,
    sink: &mut Vec<TelemetryPacket>,
) -> Result<DiagnosisReport, FdeError> {
    let DiagnosisContext { agent, pathway, plans, table, origin, trigger } = ctx;
    if plans.is_empty() {
        return Err(FdeError::PlanMissing(pathway.id.clone()));
    }
    let started = target.app().clock();
    let mut timeline = Vec::new();
    let mut evidence = Vec::new();
    let mut outcomes = Vec::new();
    let note = |timeline: &mut Vec<TimelineEntry>, t: u64, action: String| timeline.push(TimelineEntry { time_ms: t, action });

    let boundary: Vec<_> = pathway
        .boundary()
        .into_iter()
        .map(|dp| instr.gate_for_dp(dp).ok_or(FdeError::UnknownDp(dp)))
        .collect::<Result<_, _>>()?;
    instr.gate_close(target.app(), &boundary)?;
    note(&mut timeline, started, format!("gate_close DP {:?}", pathway.boundary()));

    let mut t = started + SETTLE_MS;
    for plan in plans {
        note(&mut timeline, t, format!("run plan {}", plan.id));
        let outcome = run_plan(target, instr, pathway, plan, t, sink)?;
        let e = match outcome.verdict {
            Verdict::Match => Evidence::SegmentMatch(plan.component),
            Verdict::Mismatch { .. } => Evidence::SegmentMismatch(plan.component),
        };
        table.apply(belief, e)?;
        let detail = match &outcome.verdict {
            Verdict::Match => None,
            Verdict::Mismatch { item, reason } => Some(format!("item {item}: {reason}")),
        };
        evidence.push(EvidenceEntry { time_ms: outcome.finished_ms, evidence: e, plan: Some(plan.id.clone()), detail });
        note(&mut timeline, outcome.finished_ms, format!("plan {} {}", plan.id, if outcome.verdict.is_match() { "match" } else { "mismatch" }));
        t = outcome.finished_ms + SETTLE_MS;
        outcomes.push(outcome);
    }

    let blocks_ok = outcomes.iter().filter(|o| o.component != Component::Sensor).all(|o| o.verdict.is_match());
    let exoneration = match origin {
        AnomalyOrigin::Monitor => Some(Evidence::ExonerateSensor),
        AnomalyOrigin::Rate => Some(Evidence::ExoneratePlant),
        AnomalyOrigin::Forced => None,
    };
    if let (true, Some(e)) = (blocks_ok, exoneration) {
        table.apply(belief, e)?;
        evidence.push(EvidenceEntry { time_ms: t, evidence: e, plan: None, detail: None });
    }

    target.advance_to(t)?;
    sink.extend(instr.poll(target.app())?);
    let reopen: Vec<_> = pathway
        .dp_ids()
        .into_iter()
        .filter_map(|dp| instr.gate_for_dp(dp))
        .filter(|&g| instr.gate(g).map(|g| g.mode != GateMode::Monitor).unwrap_or(false))
        .collect();
    instr.gate_open(target.app(), &reopen)?;
    note(&mut timeline, t, "gate_open".into());

    Ok(DiagnosisReport {
        agent: agent.to_string(),
        pathway: pathway.id.clone(),
        origin,
        trigger,
        hypothesis: belief.map(),
        posterior: Posterior::from(&*belief),
        evidence,
        outcomes,
        timeline,
        started_ms: started,
        finished_ms: t,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: String,
    pub subapp: String,
    pub pathways: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdeMode {
    /// No gates; the application runs untouched.
    Off,
    /// Gates forward and report, beliefs update, nothing is isolated.
    Monitor,
    /// Monitor, plus one diagnosis per agent on the first actionable anomaly.
    Auto,
}

pub struct Agent {
    pub id: String,
    pub subapp: String,
    pub belief: Belief,
    pub anomalies: Vec<Anomaly>,
    pub reports: Vec<DiagnosisReport>,
    monitors: Vec<PathwayMonitor>,
}

impl Agent {
    pub fn pathways(&self) -> impl Iterator<Item = &FaultPathway> {
        self.monitors.iter().map(|m| m.pathway())
    }

    pub fn owns(&self, dp: DpId) -> bool {
        self.pathways().any(|p| p.contains(dp))
    }

    pub fn diagnosed(&self) -> bool {
        !self.reports.is_empty()
    }

    pub fn monitor(&self, pathway: &str) -> Option<&PathwayMonitor> {
        self.monitors.iter().find(|m| m.pathway().id == pathway)
    }

    /// Instances that missed acknowledgements on this agent's pathways.
    pub fn implicated(&self) -> BTreeSet<String> {
        self.anomalies
            .iter()
            .filter_map(|a| match &a.kind {
                AnomalyKind::MissingAck { implicated, .. } => Some(implicated.clone()),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentView {
    pub agent: String,
    pub subapp: String,
    pub hypothesis: Hypothesis,
    pub posterior: Posterior,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharedComponent {
    pub instance: String,
    pub agents: Vec<String>,
}

/// Beliefs gathered over the back channel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergedView {
    pub agents: Vec<AgentView>,
    /// Instances implicated by more than one agent.
    pub shared: Vec<SharedComponent>,
}

pub fn exchange_beliefs(agents: &[&Agent]) -> MergedView {
    let mut by_instance: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for a in agents {
        for inst in a.implicated() {
            by_instance.entry(inst).or_default().push(a.id.clone());
        }
    }
    MergedView {
        agents: agents
            .iter()
            .map(|a| AgentView {
                agent: a.id.clone(),
                subapp: a.subapp.clone(),
                hypothesis: a.belief.map(),
                posterior: Posterior::from(&a.belief),
            })
            .collect(),
        shared: by_instance
            .into_iter()
            .filter(|(_, v)| v.len() > 1)
            .map(|(instance, agents)| SharedComponent { instance, agents })
            .collect(),
    }
}

/// Settings for the whole diagnostic engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdeConfig {
    pub mode: FdeMode,
    /// Points to instrument; every point of every agent pathway by default.
    pub dps: Option<Vec<DpId>>,
    /// One agent per pathway when empty.
    pub agents: Vec<AgentSpec>,
    pub thresholds: Thresholds,
    /// Enables the conditioning-rate detector.
    pub rate_model: Option<RateModel>,
    pub likelihoods: LikelihoodTable,
    pub prior: Belief,
    /// Plans per pathway; standard plans are derived when absent.
    pub plans: BTreeMap<String, Vec<DiagnosticPlan>>,
}

impl Default for FdeConfig {
    fn default() -> Self {
        FdeConfig {
            mode: FdeMode::Monitor,
            dps: None,
            agents: Vec::new(),
            thresholds: Thresholds::default(),
            rate_model: None,
            likelihoods: LikelihoodTable::default(),
            prior: Belief::default(),
            plans: BTreeMap::new(),
        }
    }
}

/// Gates plus agents, driven by periodic polling.
pub struct Fde {
    pub mode: FdeMode,
    pub instr: Instrumentation,
    pub agents: Vec<Agent>,
    table: LikelihoodTable,
    plans: BTreeMap<String, Vec<DiagnosticPlan>>,
    seq: SeqChecker,
    telemetry: Vec<TelemetryPacket>,
    pub packets_seen: u64,
}

impl Fde {
    /// Builds agents and splices gates into the application. With mode Off
    /// nothing is wired.
    pub fn new(config: &FdeConfig, target: &mut dyn DiagnosticTarget) -> Result<Self, FdeError> {
        config.likelihoods.check()?;
        if let Some(r) = &config.rate_model {
            r.check()?;
        }
        let sys = target.app().descriptor().clone();
        let specs = if config.agents.is_empty() {
            FaultPathway::all(&sys)
                .into_iter()
                .map(|p| {
                    let subapp = sys.subapp_of(&p.mainline[0].to.instance).map(|s| s.name.clone()).unwrap_or_default();
                    AgentSpec { id: format!("agent-{}", p.id), subapp, pathways: vec![p.id] }
                })
                .collect()
        } else {
            config.agents.clone()
        };
        let mut agents = Vec::new();
        for s in specs {
            let monitors = s
                .pathways
                .iter()
                .map(|id| {
                    FaultPathway::from_descriptor(&sys, id)
                        .map(|p| PathwayMonitor::new(p, config.thresholds.clone(), config.rate_model.clone()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            agents.push(Agent {
                id: s.id,
                subapp: s.subapp,
                belief: config.prior,
                anomalies: Vec::new(),
                reports: Vec::new(),
                monitors,
            });
        }
        let mut instr = Instrumentation::new();
        let mut plans = config.plans.clone();
        if config.mode != FdeMode::Off {
            let dps = match &config.dps {
                Some(d) => d.clone(),
                None => {
                    let set: BTreeSet<DpId> =
                        agents.iter().flat_map(|a| a.pathways().flat_map(|p| p.dp_ids()).collect::<Vec<_>>()).collect();
                    set.into_iter().collect()
                }
            };
            instr.rewire(target.app(), &dps)?;
            for a in &agents {
                for p in a.pathways() {
                    if let Some(list) = plans.get(&p.id) {
                        for plan in list {
                            plan.check(p)?;
                        }
                    } else if let Ok(list) = standard_plans(p, &instr) {
                        plans.insert(p.id.clone(), list);
                    }
                }
            }
        }
        Ok(Fde {
            mode: config.mode,
            instr,
            agents,
            table: config.likelihoods.clone(),
            plans,
            seq: SeqChecker::default(),
            telemetry: Vec::new(),
            packets_seen: 0,
        })
    }

    pub fn plans(&self, pathway: &str) -> Option<&[DiagnosticPlan]> {
        self.plans.get(pathway).map(Vec::as_slice)
    }

    /// Packets gathered since the last call, in observation order.
    pub fn take_telemetry(&mut self) -> Vec<TelemetryPacket> {
        std::mem::take(&mut self.telemetry)
    }

    /// Polls the gates at the target's current time and reacts to what they
    /// saw. Returns diagnoses completed during this call.
    pub fn step(&mut self, target: &mut dyn DiagnosticTarget) -> Result<Vec<DiagnosisReport>, FdeError> {
        if self.mode == FdeMode::Off {
            return Ok(Vec::new());
        }
        let mut queue: VecDeque<TelemetryPacket> = self.instr.poll(target.app())?.into();
        let mut done = Vec::new();
        loop {
            while let Some(p) = queue.pop_front() {
                self.packets_seen += 1;
                let gap = self.seq.check(&p);
                let mut found = Vec::new();
                for (i, a) in self.agents.iter_mut().enumerate() {
                    if !a.owns(p.dp) {
                        continue;
                    }
                    for m in &mut a.monitors {
                        if !m.pathway().contains(p.dp) {
                            continue;
                        }
                        if let Some(expected) = gap {
                            found.push((i, Anomaly {
                                time_ms: p.time_ms,
                                pathway: m.pathway().id.clone(),
                                kind: AnomalyKind::SequenceGap { gate: p.gate, expected, got: p.seq },
                            }));
                        }
                        found.extend(m.observe(&p).into_iter().map(|x| (i, x)));
                    }
                }
                self.telemetry.push(p);
                for (i, a) in found {
                    self.handle(i, a, target, &mut queue, &mut done)?;
                }
            }
            let now = target.app().clock();
            let mut expired = Vec::new();
            for (i, a) in self.agents.iter_mut().enumerate() {
                for m in &mut a.monitors {
                    expired.extend(m.expire(now).into_iter().map(|x| (i, x)));
                }
            }
            if expired.is_empty() {
                break;
            }
            for (i, a) in expired {
                self.handle(i, a, target, &mut queue, &mut done)?;
            }
        }
        Ok(done)
    }

    fn handle(
        &mut self,
        i: usize,
        anomaly: Anomaly,
        target: &mut dyn DiagnosticTarget,
        queue: &mut VecDeque<TelemetryPacket>,
        done: &mut Vec<DiagnosisReport>,
    ) -> Result<(), FdeError> {
        let agent = &mut self.agents[i];
        if let Some(e) = anomaly.evidence() {
            self.table.apply(&mut agent.belief, e)?;
        }
        agent.anomalies.push(anomaly.clone());
        if self.mode != FdeMode::Auto || agent.diagnosed() || !anomaly.warrants_intervention() {
            return Ok(());
        }
        let origin = if anomaly.from_rate_monitor() { AnomalyOrigin::Rate } else { AnomalyOrigin::Monitor };
        let pathway = anomaly.pathway.clone();
        let mut sink = Vec::new();
        let report = self.run_diagnosis(i, &pathway, origin, Some(anomaly), target, &mut sink)?;
        queue.extend(sink);
        done.push(report);
        Ok(())
    }

    fn run_diagnosis(
        &mut self,
        i: usize,
        pathway: &str,
        origin: AnomalyOrigin,
        trigger: Option<Anomaly>,
        target: &mut dyn DiagnosticTarget,
        sink: &mut Vec<TelemetryPacket>,
    ) -> Result<DiagnosisReport, FdeError> {
        let plans = self.plans.get(pathway).cloned().ok_or_else(|| FdeError::PlanMissing(pathway.to_string()))?;
        let agent = &mut self.agents[i];
        let p = agent
            .monitors
            .iter()
            .find(|m| m.pathway().id == pathway)
            .map(|m| m.pathway().clone())
            .ok_or_else(|| FdeError::UnknownPathway(pathway.to_string()))?;
        let ctx = DiagnosisContext { agent: &agent.id, pathway: &p, plans: &plans, table: &self.table, origin, trigger };
        let report = diagnose(target, &mut self.instr, ctx, &mut agent.belief, sink)?;
        for m in &mut agent.monitors {
            m.reset();
        }
        agent.reports.push(report.clone());
        Ok(report)
    }

    /// Runs a diagnosis of `pathway` now, regardless of detector state.
    pub fn force_diagnosis(&mut self, pathway: &str, target: &mut dyn DiagnosticTarget) -> Result<DiagnosisReport, FdeError> {
        if self.mode == FdeMode::Off {
            return Err(FdeError::BadConfig("diagnosis needs gates; FDE mode is off".into()));
        }
        let i = self
            .agents
            .iter()
            .position(|a| a.pathways().any(|p| p.id == pathway))
            .ok_or_else(|| FdeError::UnknownPathway(pathway.to_string()))?;
        let mut queue: VecDeque<TelemetryPacket> = self.instr.poll(target.app())?.into();
        let mut sink = Vec::new();
        let report = self.run_diagnosis(i, pathway, AnomalyOrigin::Forced, None, target, &mut sink)?;
        queue.extend(sink);
        self.telemetry.extend(queue);
        Ok(report)
    }

    pub fn exchange_beliefs(&self) -> MergedView {
        exchange_beliefs(&self.agents.iter().collect::<Vec<_>>())
    }

    pub fn reports(&self) -> impl Iterator<Item = &DiagnosisReport> {
        self.agents.iter().flat_map(|a| a.reports.iter())
    }

    pub fn anomalies(&self) -> impl Iterator<Item = &Anomaly> {
        self.agents.iter().flat_map(|a| a.anomalies.iter())
    }
}
