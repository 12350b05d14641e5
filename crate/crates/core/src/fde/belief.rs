//! Hypothesis beliefs and the likelihood table that turns detector output
//! and test verdicts into Bayesian updates.

use serde::{Deserialize, Serialize};

use super::FdeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hypothesis {
    SensorFault,
    ConversionFault,
    ControllerFault,
    ActuatorOrPlantFault,
    NoFault,
}

impl Hypothesis {
    /// Fixed order; also the tie-break order for the MAP hypothesis.
    pub const ALL: [Hypothesis; 5] = [
        Hypothesis::SensorFault,
        Hypothesis::ConversionFault,
        Hypothesis::ControllerFault,
        Hypothesis::ActuatorOrPlantFault,
        Hypothesis::NoFault,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// A sub-system a diagnostic segment exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Sensor,
    Conversion,
    Controller,
    ActuatorOrPlant,
}

impl Component {
    pub fn hypothesis(self) -> Hypothesis {
        match self {
            Component::Sensor => Hypothesis::SensorFault,
            Component::Conversion => Hypothesis::ConversionFault,
            Component::Controller => Hypothesis::ControllerFault,
            Component::ActuatorOrPlant => Hypothesis::ActuatorOrPlantFault,
        }
    }
}

/// Probability mass over [`Hypothesis::ALL`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 5]", into = "[f64; 5]")]
pub struct Belief([f64; 5]);

impl TryFrom<[f64; 5]> for Belief {
    type Error = FdeError;

    fn try_from(p: [f64; 5]) -> Result<Self, FdeError> {
        Belief::new(p)
    }
}

impl From<Belief> for [f64; 5] {
    fn from(b: Belief) -> Self {
        b.0
    }
}

impl Default for Belief {
    fn default() -> Self {
        Belief([0.1, 0.1, 0.1, 0.1, 0.6])
    }
}

impl Belief {
    /// Normalizes non-negative weights into a belief.
    pub fn new(weights: [f64; 5]) -> Result<Self, FdeError> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(FdeError::BadConfig("belief weights must be finite and non-negative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(FdeError::DegenerateUpdate);
        }
        Ok(Belief(weights.map(|w| w / sum)))
    }

    pub fn uniform() -> Self {
        Belief([0.2; 5])
    }

    pub fn probabilities(&self) -> [f64; 5] {
        self.0
    }

    pub fn prob(&self, h: Hypothesis) -> f64 {
        self.0[h.index()]
    }

    /// Multiplies by a likelihood row and renormalizes. A row that would
    /// zero out every hypothesis is rejected and leaves the belief unchanged.
    pub fn update(&mut self, likelihood: &[f64; 5]) -> Result<(), FdeError> {
        if likelihood.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(FdeError::BadConfig("likelihoods must be finite and non-negative".into()));
        }
        let mut post = [0.0; 5];
        for i in 0..5 {
            post[i] = self.0[i] * likelihood[i];
        }
        let sum: f64 = post.iter().sum();
        if !sum.is_finite() || sum <= 0.0 {
            return Err(FdeError::DegenerateUpdate);
        }
        self.0 = post.map(|p| p / sum);
        Ok(())
    }

    /// Maximum-a-posteriori hypothesis; ties go to the earlier one in
    /// [`Hypothesis::ALL`].
    pub fn map(&self) -> Hypothesis {
        let mut best = 0;
        for i in 1..5 {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        Hypothesis::ALL[best]
    }

    pub fn entries(&self) -> impl Iterator<Item = (Hypothesis, f64)> + '_ {
        Hypothesis::ALL.iter().copied().zip(self.0.iter().copied())
    }
}

/// Everything that can move a belief.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "evidence", content = "component", rename_all = "snake_case")]
pub enum Evidence {
    Outlier,
    Inconsistency,
    Latency,
    ErrorBranch,
    MissingAck,
    RateAnomaly,
    SegmentMatch(Component),
    SegmentMismatch(Component),
    ExonerateSensor,
    ExoneratePlant,
}

/// Likelihood rows P(observation | hypothesis) in [`Hypothesis::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LikelihoodTable {
    pub outlier: [f64; 5],
    pub inconsistency: [f64; 5],
    pub latency: [f64; 5],
    pub error_branch: [f64; 5],
    pub missing_ack: [f64; 5],
    pub rate_anomaly: [f64; 5],
    /// Segment passed: P for the exercised component being faulty.
    pub match_faulty: f64,
    pub match_other: f64,
    /// Segment failed: P for the exercised component, other faults, no fault.
    pub mismatch_faulty: f64,
    pub mismatch_other: f64,
    pub mismatch_none: f64,
    pub exonerate_sensor: [f64; 5],
    pub exonerate_plant: [f64; 5],
}

impl Default for LikelihoodTable {
    fn default() -> Self {
        LikelihoodTable {
            outlier: [0.8, 0.1, 0.05, 0.05, 0.02],
            inconsistency: [0.1, 0.9, 0.05, 0.05, 0.01],
            latency: [0.5, 0.4, 0.3, 0.05, 0.01],
            error_branch: [0.6, 0.3, 0.05, 0.05, 0.02],
            missing_ack: [0.05, 0.05, 0.3, 0.3, 0.05],
            rate_anomaly: [0.2, 0.1, 0.2, 0.9, 0.01],
            match_faulty: 0.05,
            match_other: 0.95,
            mismatch_faulty: 0.95,
            mismatch_other: 0.05,
            mismatch_none: 0.01,
            exonerate_sensor: [0.9, 0.1, 0.1, 0.3, 0.1],
            exonerate_plant: [0.3, 0.1, 0.1, 0.9, 0.1],
        }
    }
}

impl LikelihoodTable {
    pub fn row(&self, e: Evidence) -> [f64; 5] {
        match e {
            Evidence::Outlier => self.outlier,
            Evidence::Inconsistency => self.inconsistency,
            Evidence::Latency => self.latency,
            Evidence::ErrorBranch => self.error_branch,
            Evidence::MissingAck => self.missing_ack,
            Evidence::RateAnomaly => self.rate_anomaly,
            Evidence::SegmentMatch(c) => {
                let mut r = [self.match_other; 5];
                r[c.hypothesis().index()] = self.match_faulty;
                r
            }
            Evidence::SegmentMismatch(c) => {
                let mut r = [self.mismatch_other; 5];
                r[Hypothesis::NoFault.index()] = self.mismatch_none;
                r[c.hypothesis().index()] = self.mismatch_faulty;
                r
            }
            Evidence::ExonerateSensor => self.exonerate_sensor,
            Evidence::ExoneratePlant => self.exonerate_plant,
        }
    }

    pub fn check(&self) -> Result<(), FdeError> {
        let rows = [
            self.outlier,
            self.inconsistency,
            self.latency,
            self.error_branch,
            self.missing_ack,
            self.rate_anomaly,
            self.exonerate_sensor,
            self.exonerate_plant,
        ];
        let scalars = [self.match_faulty, self.match_other, self.mismatch_faulty, self.mismatch_other, self.mismatch_none];
        let ok = |x: &f64| x.is_finite() && (0.0..=1.0).contains(x);
        if rows.iter().flatten().all(ok) && scalars.iter().all(ok) {
            Ok(())
        } else {
            Err(FdeError::BadConfig("likelihoods must lie in [0, 1]".into()))
        }
    }

    pub fn apply(&self, belief: &mut Belief, e: Evidence) -> Result<(), FdeError> {
        belief.update(&self.row(e))
    }
}
