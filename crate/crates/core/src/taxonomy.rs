//! SYNTAX segment classes, their vessel grouping and label-based routing.
//!
//! Class ids follow the left-to-right order of the challenge's class
//! distribution chart (`"1"` is id 1, `"16c"` is id 25). Annotation files
//! carry their own category ids; those are mapped through [`class_from_name`]
//! on ingestion and never trusted as-is.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Canonical class names, indexed by `id - 1`.
pub const CLASS_NAMES: [&str; 25] = [
    "1", "2", "3", "4", "5", "6", "7", "8", "9", "9a", "10", "10a", "11", "12", "12a", "12b",
    "13", "14", "14a", "14b", "15", "16", "16a", "16b", "16c",
];

const RCA_NAMES: [&str; 8] = ["1", "2", "3", "4", "16", "16a", "16b", "16c"];
const LCX_NAMES: [&str; 7] = ["11", "12", "13", "14", "14a", "14b", "15"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaxonomyError {
    #[error("unknown SYNTAX class name {0:?}")]
    UnknownClassName(String),
    #[error("SYNTAX class id {0} outside 1..=25")]
    UnknownClassId(u32),
    #[error("label set is empty")]
    EmptyLabelSet,
}

/// One of the 25 SYNTAX segment classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SegmentClass(u8);

impl SegmentClass {
    pub const COUNT: usize = 25;

    pub fn from_id(id: u32) -> Result<Self, TaxonomyError> {
        if (1..=Self::COUNT as u32).contains(&id) {
            Ok(Self(id as u8))
        } else {
            Err(TaxonomyError::UnknownClassId(id))
        }
    }

    pub fn id(self) -> u8 {
        self.0
    }

    pub fn name(self) -> &'static str {
        CLASS_NAMES[self.0 as usize - 1]
    }

    /// All classes in ascending id order.
    pub fn all() -> impl Iterator<Item = SegmentClass> + Clone {
        (1..=Self::COUNT as u8).map(SegmentClass)
    }

    pub fn group(self) -> VesselGroup {
        vessel_group(self)
    }
}

impl fmt::Display for SegmentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SegmentClass {
    type Err = TaxonomyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        class_from_name(s)
    }
}

impl Serialize for SegmentClass {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for SegmentClass {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        class_from_name(&name).map_err(serde::de::Error::custom)
    }
}

/// Top-level coronary tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VesselGroup {
    #[serde(rename = "RCA")]
    Rca,
    #[serde(rename = "LCA")]
    Lca,
}

impl VesselGroup {
    pub fn other(self) -> Self {
        match self {
            VesselGroup::Rca => VesselGroup::Lca,
            VesselGroup::Lca => VesselGroup::Rca,
        }
    }

    /// The group's classes in ascending id order (8 for RCA, 17 for LCA).
    pub fn classes(self) -> Vec<SegmentClass> {
        SegmentClass::all().filter(|c| c.group() == self).collect()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VesselGroup::Rca => "RCA",
            VesselGroup::Lca => "LCA",
        }
    }
}

impl fmt::Display for VesselGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Output alphabet of the label-based routing rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubGroup {
    #[serde(rename = "RCA")]
    Rca,
    #[serde(rename = "LCX")]
    Lcx,
    #[serde(rename = "LAD")]
    Lad,
}

impl SubGroup {
    pub fn group(self) -> VesselGroup {
        match self {
            SubGroup::Rca => VesselGroup::Rca,
            SubGroup::Lcx | SubGroup::Lad => VesselGroup::Lca,
        }
    }
}

/// Which LCX member list the routing rule uses.
///
/// `Verbatim` leaves 12a and 12b out of the LCX list, so label sets made only
/// of them route to LAD. `LcxIncludes12ab` adds both to the LCX list.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoutingVariant {
    #[default]
    Verbatim,
    LcxIncludes12ab,
}

pub fn class_from_name(name: &str) -> Result<SegmentClass, TaxonomyError> {
    CLASS_NAMES
        .iter()
        .position(|n| *n == name)
        .map(|i| SegmentClass(i as u8 + 1))
        .ok_or_else(|| TaxonomyError::UnknownClassName(name.to_string()))
}

fn in_names(c: SegmentClass, names: &[&str]) -> bool {
    names.contains(&c.name())
}

pub fn vessel_group(c: SegmentClass) -> VesselGroup {
    if in_names(c, &RCA_NAMES) {
        VesselGroup::Rca
    } else {
        VesselGroup::Lca
    }
}

fn is_lcx_member(c: SegmentClass, variant: RoutingVariant) -> bool {
    in_names(c, &LCX_NAMES)
        || (variant == RoutingVariant::LcxIncludes12ab && matches!(c.name(), "12a" | "12b"))
}

/// Routes an image by its label set: any RCA label wins, then any LCX label,
/// otherwise LAD.
pub fn subgroup_of_labels_with(
    labels: &BTreeSet<SegmentClass>,
    variant: RoutingVariant,
) -> Result<SubGroup, TaxonomyError> {
    if labels.is_empty() {
        return Err(TaxonomyError::EmptyLabelSet);
    }
    if labels.iter().any(|c| in_names(*c, &RCA_NAMES)) {
        Ok(SubGroup::Rca)
    } else if labels.iter().any(|c| is_lcx_member(*c, variant)) {
        Ok(SubGroup::Lcx)
    } else {
        Ok(SubGroup::Lad)
    }
}

pub fn subgroup_of_labels(labels: &BTreeSet<SegmentClass>) -> Result<SubGroup, TaxonomyError> {
    subgroup_of_labels_with(labels, RoutingVariant::Verbatim)
}

/// RCA iff the label set routes to RCA. The routing variant only moves
/// classes between LCX and LAD, so it never affects this result.
pub fn group_of_labels(labels: &BTreeSet<SegmentClass>) -> Result<VesselGroup, TaxonomyError> {
    subgroup_of_labels(labels).map(SubGroup::group)
}
