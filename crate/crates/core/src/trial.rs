//! Trials (experiment rooms), roles, memberships and per-actor features.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::auth::Claims;
use crate::crdt::ReplicaId;
use crate::protocol::ErrorCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    Admin,
    Wizard,
    EndUser,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Admin, Role::Wizard, Role::EndUser];

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Admin => "ADMIN",
            Role::Wizard => "WIZARD",
            Role::EndUser => "END_USER",
        }
    }

    /// Wizards and admins see collaborator-only traffic.
    pub fn is_staff(&self) -> bool {
        matches!(self, Role::Admin | Role::Wizard)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown role {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Feature {
    CollabEditor,
    MicControl,
    SpeechBoxes,
    ContentPlayback,
    LineBreak,
    PresenceCursors,
    Labels,
    Highlights,
    SummaryNotes,
    BubbleMenu,
}

impl Feature {
    pub const ALL: [Feature; 10] = [
        Feature::CollabEditor,
        Feature::MicControl,
        Feature::SpeechBoxes,
        Feature::ContentPlayback,
        Feature::LineBreak,
        Feature::PresenceCursors,
        Feature::Labels,
        Feature::Highlights,
        Feature::SummaryNotes,
        Feature::BubbleMenu,
    ];

    /// Annotation features need read access to the document.
    fn requires_editor(&self) -> bool {
        matches!(
            self,
            Feature::Labels | Feature::Highlights | Feature::SummaryNotes
        )
    }
}

/// Features enabled for one actor. Always closed under "annotation
/// features imply the collaborative editor".
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "BTreeSet<Feature>", into = "BTreeSet<Feature>")]
pub struct FeatureSet(BTreeSet<Feature>);

impl FeatureSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn all() -> Self {
        Feature::ALL.into_iter().collect()
    }

    pub fn contains(&self, feature: Feature) -> bool {
        self.0.contains(&feature)
    }

    pub fn iter(&self) -> impl Iterator<Item = Feature> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn close(mut set: BTreeSet<Feature>) -> BTreeSet<Feature> {
        if set.iter().any(Feature::requires_editor) {
            set.insert(Feature::CollabEditor);
        }
        set
    }
}

impl From<BTreeSet<Feature>> for FeatureSet {
    fn from(set: BTreeSet<Feature>) -> Self {
        FeatureSet(FeatureSet::close(set))
    }
}

impl From<FeatureSet> for BTreeSet<Feature> {
    fn from(set: FeatureSet) -> Self {
        set.0
    }
}

impl FromIterator<Feature> for FeatureSet {
    fn from_iter<T: IntoIterator<Item = Feature>>(iter: T) -> Self {
        FeatureSet::from(iter.into_iter().collect::<BTreeSet<_>>())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrialStatus {
    Created,
    Running,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Membership {
    pub actor_id: String,
    pub user_id: String,
    pub role: Role,
    pub display_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wizard_role_tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replica: Option<ReplicaId>,
}

/// Admin-supplied feature configuration for one (future) participant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FeatureAssignment {
    pub actor_id: String,
    pub features: FeatureSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role_tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TrialError {
    #[error("operation requires the {0} role")]
    Forbidden(Role),
    #[error("trial name is empty")]
    EmptyName,
    #[error("unknown trial {0}")]
    UnknownTrial(String),
    #[error("trial {0} is closed")]
    TrialClosed(String),
    #[error("trial already has an end-user")]
    DuplicateEndUser,
    #[error("unknown actor {0}")]
    UnknownActor(String),
    #[error("token is bound to another trial")]
    WrongTrial,
}

impl TrialError {
    pub fn code(&self) -> ErrorCode {
        match self {
            TrialError::Forbidden(_) | TrialError::WrongTrial => ErrorCode::Forbidden,
            TrialError::EmptyName => ErrorCode::EmptyName,
            TrialError::UnknownTrial(_) => ErrorCode::UnknownTrial,
            TrialError::TrialClosed(_) => ErrorCode::TrialClosed,
            TrialError::DuplicateEndUser => ErrorCode::DuplicateEndUser,
            TrialError::UnknownActor(_) => ErrorCode::UnknownActor,
        }
    }
}

pub fn require_role(claims: &Claims, role: Role) -> Result<(), TrialError> {
    if claims.role == role {
        Ok(())
    } else {
        Err(TrialError::Forbidden(role))
    }
}

pub const DEFAULT_PALETTE: [&str; 4] = ["yellow", "green", "pink", "blue"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Trial {
    pub trial_id: String,
    pub name: String,
    pub created_at: u64,
    pub status: TrialStatus,
    pub features: BTreeMap<String, FeatureSet>,
    #[serde(default)]
    pub role_tags: BTreeMap<String, String>,
    pub members: BTreeMap<String, Membership>,
    pub palette: Vec<String>,
    #[serde(skip)]
    next_replica: ReplicaId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinOutcome {
    pub membership: Membership,
    /// First time this actor joined the trial.
    pub new_member: bool,
    /// The join moved the trial from CREATED to RUNNING.
    pub opened: bool,
}

impl Trial {
    pub fn new(
        trial_id: impl Into<String>,
        name: &str,
        created_at: u64,
        assignments: Vec<FeatureAssignment>,
    ) -> Result<Self, TrialError> {
        if name.trim().is_empty() {
            return Err(TrialError::EmptyName);
        }
        let mut features = BTreeMap::new();
        let mut role_tags = BTreeMap::new();
        for a in assignments {
            if let Some(tag) = a.role_tag {
                role_tags.insert(a.actor_id.clone(), tag);
            }
            features.insert(a.actor_id, a.features);
        }
        Ok(Self {
            trial_id: trial_id.into(),
            name: name.trim().to_owned(),
            created_at,
            status: TrialStatus::Created,
            features,
            role_tags,
            members: BTreeMap::new(),
            palette: DEFAULT_PALETTE.iter().map(|s| s.to_string()).collect(),
            next_replica: 1,
        })
    }

    pub fn is_closed(&self) -> bool {
        self.status == TrialStatus::Closed
    }

    /// Explicit assignment if the admin made one, otherwise the role default:
    /// everything for wizards and admins, nothing for the end-user.
    pub fn features_for(&self, actor_id: &str, role: Role) -> FeatureSet {
        if let Some(set) = self.features.get(actor_id) {
            return set.clone();
        }
        match role {
            Role::Admin | Role::Wizard => FeatureSet::all(),
            Role::EndUser => FeatureSet::empty(),
        }
    }

    pub fn member(&self, actor_id: &str) -> Option<&Membership> {
        self.members.get(actor_id)
    }

    pub fn join(&mut self, claims: &Claims, display_name: Option<&str>) -> Result<JoinOutcome, TrialError> {
        if self.is_closed() {
            return Err(TrialError::TrialClosed(self.trial_id.clone()));
        }
        if claims.trial_id.as_deref().is_some_and(|t| t != self.trial_id) {
            return Err(TrialError::WrongTrial);
        }
        let actor_id = claims.user_id.clone();
        if let Some(existing) = self.members.get(&actor_id) {
            return Ok(JoinOutcome {
                membership: existing.clone(),
                new_member: false,
                opened: false,
            });
        }
        if claims.role == Role::EndUser && self.members.values().any(|m| m.role == Role::EndUser) {
            return Err(TrialError::DuplicateEndUser);
        }
        let replica = (claims.role == Role::Wizard).then(|| {
            let r = self.next_replica;
            self.next_replica += 1;
            r
        });
        let membership = Membership {
            actor_id: actor_id.clone(),
            user_id: claims.user_id.clone(),
            role: claims.role,
            display_name: display_name
                .filter(|n| !n.trim().is_empty())
                .unwrap_or(&claims.user_id)
                .to_owned(),
            wizard_role_tag: self.role_tags.get(&actor_id).cloned(),
            replica,
        };
        self.members.insert(actor_id, membership.clone());
        let opened = self.status == TrialStatus::Created && claims.role != Role::Admin;
        if opened {
            self.status = TrialStatus::Running;
        }
        Ok(JoinOutcome {
            membership,
            new_member: true,
            opened,
        })
    }

    /// Replaces an actor's feature set. Returns the stored (closed) set.
    pub fn assign_features(
        &mut self,
        claims: &Claims,
        actor_id: &str,
        features: FeatureSet,
    ) -> Result<FeatureSet, TrialError> {
        require_role(claims, Role::Admin)?;
        self.set_features(actor_id, features)
    }

    /// [`Trial::assign_features`] for callers that already checked the role.
    pub fn set_features(&mut self, actor_id: &str, features: FeatureSet) -> Result<FeatureSet, TrialError> {
        if self.is_closed() {
            return Err(TrialError::TrialClosed(self.trial_id.clone()));
        }
        if !self.members.contains_key(actor_id) && !self.features.contains_key(actor_id) {
            return Err(TrialError::UnknownActor(actor_id.to_owned()));
        }
        self.features.insert(actor_id.to_owned(), features.clone());
        Ok(features)
    }

    pub fn close(&mut self) -> bool {
        let was_open = !self.is_closed();
        self.status = TrialStatus::Closed;
        was_open
    }
}
