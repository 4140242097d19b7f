use serde::{Deserialize, Serialize};

use super::{Aberration, AberrationKind, KnowledgeBase};
use crate::analytics::FairnessPrinciple;
use crate::domain::{DomainExtension, NeedsProfile};

const MAX_EXPONENT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProposalKind {
    SwitchPrinciple,
    ApplyNeedsTransform,
    ExtendDomain,
    ChangeStrategy,
    NoChange,
}

/// What a proposal would do. `None` fields are left for the human to fill in
/// when deciding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "kebab-case")]
pub enum ProposalAction {
    SwitchPrinciple {
        principle: Option<FairnessPrinciple>,
    },
    ApplyNeedsTransform {
        needs: Option<NeedsProfile>,
    },
    ExtendDomain {
        extension: Option<DomainExtension>,
    },
    /// New concession exponent for the support agent.
    ChangeStrategy {
        exponent: Option<f64>,
    },
    NoChange,
}

impl ProposalAction {
    pub fn kind(&self) -> ProposalKind {
        match self {
            ProposalAction::SwitchPrinciple { .. } => ProposalKind::SwitchPrinciple,
            ProposalAction::ApplyNeedsTransform { .. } => ProposalKind::ApplyNeedsTransform,
            ProposalAction::ExtendDomain { .. } => ProposalKind::ExtendDomain,
            ProposalAction::ChangeStrategy { .. } => ProposalKind::ChangeStrategy,
            ProposalAction::NoChange => ProposalKind::NoChange,
        }
    }

    pub fn is_complete(&self) -> bool {
        match self {
            ProposalAction::SwitchPrinciple { principle } => principle.is_some(),
            ProposalAction::ApplyNeedsTransform { needs } => needs.is_some(),
            ProposalAction::ExtendDomain { extension } => extension.is_some(),
            ProposalAction::ChangeStrategy { exponent } => exponent.is_some(),
            ProposalAction::NoChange => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProposalStatus {
    Pending,
    Approved,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub id: String,
    pub aberration_id: String,
    #[serde(flatten)]
    pub action: ProposalAction,
    pub status: ProposalStatus,
    pub executed: bool,
}

impl Proposal {
    pub fn kind(&self) -> ProposalKind {
        self.action.kind()
    }
}

/// Candidate responses to an aberration, all pending. Doing nothing is always
/// among them.
pub fn plan(aberration: &Aberration, kb: &KnowledgeBase, support_exponent: f64) -> Vec<Proposal> {
    let switch = ProposalAction::SwitchPrinciple {
        principle: match kb.principle {
            FairnessPrinciple::Equality => None,
            _ => Some(FairnessPrinciple::Equality),
        },
    };
    let change_strategy = ProposalAction::ChangeStrategy {
        exponent: Some((support_exponent * 2.0).min(MAX_EXPONENT)),
    };
    let actions = match aberration.kind {
        AberrationKind::PrincipleMismatch => vec![
            switch,
            ProposalAction::ExtendDomain { extension: None },
            ProposalAction::NoChange,
        ],
        AberrationKind::TrendDivergence => vec![change_strategy, ProposalAction::NoChange],
        AberrationKind::DeadlineFairness => vec![change_strategy, switch, ProposalAction::NoChange],
        AberrationKind::PowerAsymmetry => vec![
            ProposalAction::ApplyNeedsTransform {
                needs: kb.principle.needs().copied(),
            },
            ProposalAction::NoChange,
        ],
    };
    actions
        .into_iter()
        .enumerate()
        .map(|(i, action)| Proposal {
            id: format!("{}.{}", aberration.id, i + 1),
            aberration_id: aberration.id.clone(),
            action,
            status: ProposalStatus::Pending,
            executed: false,
        })
        .collect()
}
