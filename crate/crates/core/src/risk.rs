//! Severity, exposure and controllability classes, the ASIL determination
//! table, and goal ASIL inheritance.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audit::{Action, Actor};
use crate::error::{HaraError, Result};
use crate::model::{EntityKind, EntityRef, Project, Record, ReviewStatus};

macro_rules! class_enum {
    ($(#[$meta:meta])* $name:ident, $prefix:literal, [$($variant:ident = $n:literal),+]) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            /// Class number, e.g. 3 for S3.
            pub fn ordinal(self) -> u8 {
                match self {
                    $($name::$variant => $n),+
                }
            }

            pub fn from_ordinal(n: u8) -> Option<Self> {
                match n {
                    $($n => Some($name::$variant),)+
                    _ => None,
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}{}", $prefix, self.ordinal())
            }
        }

        impl FromStr for $name {
            type Err = HaraError;

            fn from_str(s: &str) -> Result<Self> {
                let t = s.trim();
                let digits = t
                    .strip_prefix($prefix)
                    .or_else(|| t.strip_prefix(&$prefix.to_ascii_lowercase()))
                    .unwrap_or(t);
                digits
                    .parse::<u8>()
                    .ok()
                    .and_then($name::from_ordinal)
                    .ok_or_else(|| HaraError::InvariantViolation(format!("`{s}` is not a valid {} class", stringify!($name))))
            }
        }
    };
}

class_enum!(
    /// Potential harm of the hazardous event.
    Severity, "S", [S0 = 0, S1 = 1, S2 = 2, S3 = 3]
);
class_enum!(
    /// How often the operational situation occurs.
    Exposure, "E", [E0 = 0, E1 = 1, E2 = 2, E3 = 3, E4 = 4]
);
class_enum!(
    /// How avoidable the harm is through driver or system action.
    Controllability, "C", [C0 = 0, C1 = 1, C2 = 2, C3 = 3]
);

/// Automotive safety integrity level, ordered QM < A < B < C < D.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Asil {
    QM,
    A,
    B,
    C,
    D,
}

impl Asil {
    pub const ALL: [Asil; 5] = [Asil::QM, Asil::A, Asil::B, Asil::C, Asil::D];

    pub fn as_str(self) -> &'static str {
        match self {
            Asil::QM => "QM",
            Asil::A => "A",
            Asil::B => "B",
            Asil::C => "C",
            Asil::D => "D",
        }
    }

    /// Label for reports: "QM" or "ASIL X".
    pub fn label(self) -> String {
        match self {
            Asil::QM => "QM".to_string(),
            other => format!("ASIL {}", other.as_str()),
        }
    }
}

impl fmt::Display for Asil {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Asil {
    type Err = HaraError;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().trim_start_matches("ASIL").trim();
        match t.to_ascii_uppercase().as_str() {
            "QM" => Ok(Asil::QM),
            "A" => Ok(Asil::A),
            "B" => Ok(Asil::B),
            "C" => Ok(Asil::C),
            "D" => Ok(Asil::D),
            _ => Err(HaraError::InvariantViolation(format!("`{s}` is not an ASIL"))),
        }
    }
}

use Asil::{A, B, C, D, QM};

// Indexed [severity-1][exposure-1][controllability-1].
const ASIL_TABLE: [[[Asil; 3]; 4]; 3] = [
    // S1
    [[QM, QM, QM], [QM, QM, QM], [QM, QM, A], [QM, A, B]],
    // S2
    [[QM, QM, QM], [QM, QM, A], [QM, A, B], [A, B, C]],
    // S3
    [[QM, QM, A], [QM, A, B], [A, B, C], [B, C, D]],
];

/// Determines the ASIL for a classified hazardous event. Any 0-class factor
/// yields QM; all other combinations come from the determination table.
pub fn compute_asil(severity: Severity, exposure: Exposure, controllability: Controllability) -> Asil {
    let (s, e, c) = (severity.ordinal(), exposure.ordinal(), controllability.ordinal());
    if s == 0 || e == 0 || c == 0 {
        return Asil::QM;
    }
    ASIL_TABLE[usize::from(s - 1)][usize::from(e - 1)][usize::from(c - 1)]
}

/// Highest ASIL in the input, `None` when empty.
pub fn max_asil<I: IntoIterator<Item = Asil>>(levels: I) -> Option<Asil> {
    levels.into_iter().max()
}

/// Per-factor justification. All three must be non-empty for a rating to be
/// confirmed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rationale {
    pub severity: String,
    pub exposure: String,
    pub controllability: String,
}

impl Rationale {
    pub fn uniform(text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            severity: text.clone(),
            exposure: text.clone(),
            controllability: text,
        }
    }

    pub fn missing_factors(&self) -> Vec<&'static str> {
        let mut missing = Vec::new();
        if self.severity.trim().is_empty() {
            missing.push("severity");
        }
        if self.exposure.trim().is_empty() {
            missing.push("exposure");
        }
        if self.controllability.trim().is_empty() {
            missing.push("controllability");
        }
        missing
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskRating {
    pub hazard_id: String,
    pub severity: Severity,
    pub exposure: Exposure,
    pub controllability: Controllability,
    pub rationale: Rationale,
}

impl RiskRating {
    pub fn asil(&self) -> Asil {
        compute_asil(self.severity, self.exposure, self.controllability)
    }
}

/// Whether a rating submitted through [`rate_hazard`] is a backend proposal or
/// a reviewer confirmation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RateOptions {
    pub confirm: bool,
    pub supersede: bool,
}

impl RateOptions {
    pub fn confirmed() -> Self {
        Self { confirm: true, supersede: false }
    }
}

impl Project {
    /// The confirmed rating for a hazard, if any.
    pub fn confirmed_rating(&self, hazard_id: &str) -> Option<&Record<RiskRating>> {
        self.risk_ratings
            .iter()
            .find(|r| r.item.hazard_id == hazard_id && r.status.is_active())
    }

    /// Effective ASIL of a hazard: computed from its confirmed rating only.
    pub fn hazard_asil(&self, hazard_id: &str) -> Option<Asil> {
        self.confirmed_rating(hazard_id).map(|r| r.item.asil())
    }

    /// Inheritance result for a goal over its active linked hazards, or the
    /// ids of the hazards lacking a confirmed rating.
    pub(crate) fn goal_asil_of(&self, hazard_ids: &[String]) -> std::result::Result<Asil, Vec<String>> {
        let mut unrated = Vec::new();
        let mut levels = Vec::new();
        for hid in hazard_ids {
            match self.hazard_asil(hid) {
                Some(a) => levels.push(a),
                None => unrated.push(hid.clone()),
            }
        }
        if !unrated.is_empty() {
            return Err(unrated);
        }
        max_asil(levels).ok_or_else(Vec::new)
    }

    /// Recomputes the stored ASIL of every goal linked to one of `hazards`,
    /// returning the ids of goals whose value changed.
    pub(crate) fn recompute_goals_for(&mut self, hazards: &[String]) -> Vec<String> {
        let mut changed = Vec::new();
        let targets: Vec<usize> = self
            .safety_goals
            .iter()
            .enumerate()
            .filter(|(_, g)| g.item.hazard_ids.iter().any(|h| hazards.contains(h)))
            .map(|(i, _)| i)
            .collect();
        for i in targets {
            let asil = self.goal_asil_of(&self.safety_goals[i].item.hazard_ids).ok();
            if self.safety_goals[i].item.asil != asil {
                self.safety_goals[i].item.asil = asil;
                changed.push(self.safety_goals[i].id.clone());
            }
        }
        changed
    }
}

/// Inherits a goal's ASIL as the maximum over its linked hazards and stores it.
pub fn inherit_goal_asil(project: &mut Project, goal_id: &str, actor: &Actor) -> Result<Asil> {
    let idx = project
        .safety_goals
        .iter()
        .position(|g| g.id == goal_id)
        .ok_or_else(|| HaraError::UnknownEntity(goal_id.to_string()))?;
    let asil = project
        .goal_asil_of(&project.safety_goals[idx].item.hazard_ids)
        .map_err(HaraError::UnratedHazard)?;
    if project.safety_goals[idx].item.asil != Some(asil) {
        let before = serde_json::to_value(&project.safety_goals[idx]).ok();
        project.safety_goals[idx].item.asil = Some(asil);
        let after = serde_json::to_value(&project.safety_goals[idx]).ok();
        project.audit.append(
            actor.clone(),
            Action::Rate,
            EntityRef::new(EntityKind::SafetyGoal, goal_id),
            before,
            after,
        );
    }
    Ok(asil)
}

/// Stores a rating for a hazard. Confirmed ratings require rationale for all
/// three factors and refresh every goal linked to the hazard.
pub fn rate_hazard(
    project: &mut Project,
    rating: RiskRating,
    opts: RateOptions,
    actor: &Actor,
) -> Result<Record<RiskRating>> {
    let hazard_id = rating.hazard_id.clone();
    let hazard = project
        .hazards
        .iter()
        .find(|h| h.id == hazard_id)
        .ok_or_else(|| HaraError::UnknownHazard(hazard_id.clone()))?;
    if !hazard.status.is_active() {
        return Err(HaraError::InvariantViolation(format!("hazard `{hazard_id}` is not active")));
    }
    let mut superseded = None;
    if opts.confirm {
        let missing = rating.rationale.missing_factors();
        if !missing.is_empty() {
            return Err(HaraError::MissingRationale(missing.join(", ")));
        }
        if let Some(existing) = project.confirmed_rating(&hazard_id) {
            if !opts.supersede {
                return Err(HaraError::DoubleConfirm(hazard_id));
            }
            superseded = Some(existing.id.clone());
        }
    }

    let id = project.next_id(EntityKind::RiskRating);
    let record = Record {
        id: id.clone(),
        item: rating,
        status: if opts.confirm { ReviewStatus::Accepted } else { ReviewStatus::Proposed },
        provenance: None,
    };
    if let Some(old) = &superseded {
        if let Some(r) = project.risk_ratings.iter_mut().find(|r| &r.id == old) {
            r.status = ReviewStatus::Superseded;
        }
    }
    project.risk_ratings.push(record.clone());
    let goals = if opts.confirm {
        project.recompute_goals_for(std::slice::from_ref(&hazard_id))
    } else {
        Vec::new()
    };
    project.audit.append(
        actor.clone(),
        Action::Rate,
        EntityRef::new(EntityKind::RiskRating, &id),
        None,
        Some(serde_json::json!({
            "rating": record,
            "asil": record.item.asil(),
            "superseded": superseded,
            "recomputed_goals": goals,
        })),
    );
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_corners() {
        assert_eq!(compute_asil(Severity::S3, Exposure::E4, Controllability::C3), Asil::D);
        assert_eq!(compute_asil(Severity::S1, Exposure::E1, Controllability::C1), Asil::QM);
        assert_eq!(compute_asil(Severity::S3, Exposure::E2, Controllability::C2), Asil::A);
        assert_eq!(compute_asil(Severity::S2, Exposure::E4, Controllability::C3), Asil::C);
        assert_eq!(compute_asil(Severity::S0, Exposure::E4, Controllability::C3), Asil::QM);
    }

    #[test]
    fn zero_classes_force_qm() {
        for &e in Exposure::ALL {
            for &c in Controllability::ALL {
                assert_eq!(compute_asil(Severity::S0, e, c), Asil::QM);
            }
        }
        for &s in Severity::ALL {
            for &c in Controllability::ALL {
                assert_eq!(compute_asil(s, Exposure::E0, c), Asil::QM);
            }
        }
        for &s in Severity::ALL {
            for &e in Exposure::ALL {
                assert_eq!(compute_asil(s, e, Controllability::C0), Asil::QM);
            }
        }
    }

    #[test]
    fn monotone_in_every_factor() {
        for &s in Severity::ALL {
            for &e in Exposure::ALL {
                for &c in Controllability::ALL {
                    let base = compute_asil(s, e, c);
                    if let Some(s2) = Severity::from_ordinal(s.ordinal() + 1) {
                        assert!(compute_asil(s2, e, c) >= base);
                    }
                    if let Some(e2) = Exposure::from_ordinal(e.ordinal() + 1) {
                        assert!(compute_asil(s, e2, c) >= base);
                    }
                    if let Some(c2) = Controllability::from_ordinal(c.ordinal() + 1) {
                        assert!(compute_asil(s, e, c2) >= base);
                    }
                }
            }
        }
    }

    #[test]
    fn class_parsing() {
        assert_eq!("S3".parse::<Severity>().unwrap(), Severity::S3);
        assert_eq!("e0".parse::<Exposure>().unwrap(), Exposure::E0);
        assert_eq!("2".parse::<Controllability>().unwrap(), Controllability::C2);
        assert!("S4".parse::<Severity>().is_err());
        assert!("C".parse::<Controllability>().is_err());
        assert_eq!("ASIL D".parse::<Asil>().unwrap(), Asil::D);
        assert_eq!(Asil::QM.label(), "QM");
        assert_eq!(Asil::B.label(), "ASIL B");
    }

    #[test]
    fn rationale_completeness() {
        let r = Rationale { severity: "x".into(), exposure: " ".into(), controllability: String::new() };
        assert_eq!(r.missing_factors(), vec!["exposure", "controllability"]);
        assert!(Rationale::uniform("ok").missing_factors().is_empty());
    }
}
