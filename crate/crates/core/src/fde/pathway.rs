//! Fault pathways: the ordered chains of diagnostic points a signal crosses.

use serde::Serialize;

use crate::model::{ConnKind, DpRole, Endpoint, SystemDescriptor};

use super::gate::DpId;
use super::FdeError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DpInfo {
    pub id: DpId,
    pub kind: ConnKind,
    pub from: Endpoint,
    pub to: Endpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaultPathway {
    pub id: String,
    /// Mainline points in declared order.
    pub mainline: Vec<DpInfo>,
    pub branches: Vec<DpInfo>,
    /// Allowed delay between adjacent points.
    pub expected_latency_ms: u64,
}

pub const DEFAULT_LATENCY_MS: u64 = 200;

impl FaultPathway {
    pub fn from_descriptor(sys: &SystemDescriptor, id: &str) -> Result<Self, FdeError> {
        let mut mainline: Vec<_> = sys
            .diagnostic_points
            .iter()
            .filter(|d| d.pathway == id && d.role == DpRole::Mainline)
            .collect();
        if mainline.is_empty() {
            return Err(FdeError::UnknownPathway(id.to_string()));
        }
        mainline.sort_by_key(|d| d.order);
        let info = |d: &crate::model::DiagnosticPointDecl| DpInfo {
            id: d.id,
            kind: d.kind,
            from: d.from.clone(),
            to: d.to.clone(),
        };
        Ok(FaultPathway {
            id: id.to_string(),
            mainline: mainline.into_iter().map(info).collect(),
            branches: sys
                .diagnostic_points
                .iter()
                .filter(|d| d.pathway == id && d.role == DpRole::Branch)
                .map(info)
                .collect(),
            expected_latency_ms: DEFAULT_LATENCY_MS,
        })
    }

    /// Every pathway of a descriptor, in first-appearance order.
    pub fn all(sys: &SystemDescriptor) -> Vec<FaultPathway> {
        let mut ids: Vec<&str> = Vec::new();
        for d in &sys.diagnostic_points {
            if !ids.contains(&d.pathway.as_str()) {
                ids.push(&d.pathway);
            }
        }
        ids.into_iter().filter_map(|id| Self::from_descriptor(sys, id).ok()).collect()
    }

    pub fn dp_ids(&self) -> Vec<DpId> {
        self.mainline.iter().chain(&self.branches).map(|d| d.id).collect()
    }

    pub fn contains(&self, dp: DpId) -> bool {
        self.mainline.iter().chain(&self.branches).any(|d| d.id == dp)
    }

    pub fn dp(&self, dp: DpId) -> Option<&DpInfo> {
        self.mainline.iter().chain(&self.branches).find(|d| d.id == dp)
    }

    /// Branch points leaving the block that mainline point `i` feeds.
    pub fn branches_from_block(&self, i: usize) -> impl Iterator<Item = &DpInfo> {
        let block = self.mainline.get(i).map(|d| d.to.instance.clone());
        self.branches.iter().filter(move |b| Some(&b.from.instance) == block.as_ref())
    }

    /// The mainline point fed by the block behind point `i`, if any.
    pub fn successor(&self, i: usize) -> Option<&DpInfo> {
        let next = self.mainline.get(i + 1)?;
        (next.from.instance == self.mainline[i].to.instance).then_some(next)
    }

    /// Outer boundary of the pathway: its first and last mainline points.
    pub fn boundary(&self) -> Vec<DpId> {
        let mut b = vec![self.mainline[0].id];
        if let Some(last) = self.mainline.last() {
            if last.id != b[0] {
                b.push(last.id);
            }
        }
        b
    }
}
