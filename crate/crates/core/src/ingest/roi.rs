use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

/// The twelve regions of interest that AAL labels are grouped into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Roi {
    A1,
    #[serde(rename = "STG")]
    Stg,
    #[serde(rename = "MTG")]
    Mtg,
    #[serde(rename = "ITG")]
    Itg,
    Insula,
    #[serde(rename = "TPJ")]
    Tpj,
    #[serde(rename = "Temporal_Pole")]
    TemporalPole,
    Sensorimotor,
    #[serde(rename = "IFG")]
    Ifg,
    #[serde(rename = "MFG")]
    Mfg,
    Hippocampus,
    Amygdala,
}

impl Roi {
    pub const ALL: [Roi; 12] = [
        Roi::A1,
        Roi::Stg,
        Roi::Mtg,
        Roi::Itg,
        Roi::Insula,
        Roi::Tpj,
        Roi::TemporalPole,
        Roi::Sensorimotor,
        Roi::Ifg,
        Roi::Mfg,
        Roi::Hippocampus,
        Roi::Amygdala,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Roi::A1 => "A1",
            Roi::Stg => "STG",
            Roi::Mtg => "MTG",
            Roi::Itg => "ITG",
            Roi::Insula => "Insula",
            Roi::Tpj => "TPJ",
            Roi::TemporalPole => "Temporal_Pole",
            Roi::Sensorimotor => "Sensorimotor",
            Roi::Ifg => "IFG",
            Roi::Mfg => "MFG",
            Roi::Hippocampus => "Hippocampus",
            Roi::Amygdala => "Amygdala",
        }
    }

    pub fn from_name(name: &str) -> Option<Roi> {
        Roi::ALL.into_iter().find(|r| r.name() == name)
    }
}

impl fmt::Display for Roi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const DEFAULT_MAP: [(&str, Roi); 24] = [
    ("Heschl", Roi::A1),
    ("Temporal_Sup", Roi::Stg),
    ("Temporal_Mid", Roi::Mtg),
    ("Temporal_Inf", Roi::Itg),
    ("ParaHippocampal", Roi::Itg),
    ("Fusiform", Roi::Itg),
    ("Insula", Roi::Insula),
    ("Angular", Roi::Tpj),
    ("SupraMarginal", Roi::Tpj),
    ("Parietal_Inf", Roi::Tpj),
    ("Temporal_Pole_Sup", Roi::TemporalPole),
    ("Temporal_Pole_Mid", Roi::TemporalPole),
    ("Paracentral_Lobule", Roi::Sensorimotor),
    ("Supp_Motor_Area", Roi::Sensorimotor),
    ("Rolandic_Oper", Roi::Sensorimotor),
    ("Precentral", Roi::Sensorimotor),
    ("Postcentral", Roi::Sensorimotor),
    ("Frontal_Inf_Oper", Roi::Ifg),
    ("Frontal_Inf_Tri", Roi::Ifg),
    ("Frontal_Inf_Orb", Roi::Ifg),
    ("Frontal_Mid", Roi::Mfg),
    ("Frontal_Mid_Orb", Roi::Mfg),
    ("Hippocampus", Roi::Hippocampus),
    ("Amygdala", Roi::Amygdala),
];

/// AAL label → ROI lookup.
///
/// A valid map covers all twelve ROIs. Lookups fail closed: a label that is
/// not in the map is an error, never a silent "unknown" region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoiMap {
    entries: BTreeMap<String, Roi>,
}

impl RoiMap {
    /// The 24-label grouping shipped with the toolkit.
    pub fn default_map() -> Self {
        RoiMap {
            entries: DEFAULT_MAP.iter().map(|&(label, roi)| (label.to_owned(), roi)).collect(),
        }
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (String, Roi)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (label, roi) in entries {
            if map.insert(label.clone(), roi).is_some() {
                return Err(Error::Validation(format!("duplicate AAL label {label:?}")));
            }
        }
        let covered: BTreeSet<Roi> = map.values().copied().collect();
        if covered.len() != Roi::ALL.len() {
            let missing: Vec<_> =
                Roi::ALL.iter().filter(|r| !covered.contains(r)).map(|r| r.name()).collect();
            return Err(Error::Validation(format!(
                "ROI map covers {} of 12 regions; missing {}",
                covered.len(),
                missing.join(", ")
            )));
        }
        Ok(RoiMap { entries: map })
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        let raw: RawEntries = serde_json::from_str(json)
            .map_err(|e| Error::Validation(format!("ROI map: {e}")))?;
        let mut entries = Vec::with_capacity(raw.0.len());
        for (label, roi) in raw.0 {
            let roi = Roi::from_name(&roi)
                .ok_or_else(|| Error::Validation(format!("unknown ROI {roi:?} for label {label:?}")))?;
            entries.push((label, roi));
        }
        Self::from_entries(entries)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("string map serializes")
    }

    /// Resolves an AAL label. A trailing `_L`/`_R` hemisphere suffix is
    /// accepted when the bare label is mapped.
    pub fn resolve(&self, aal_label: &str) -> Result<Roi> {
        if let Some(&roi) = self.entries.get(aal_label) {
            return Ok(roi);
        }
        aal_label
            .strip_suffix("_L")
            .or_else(|| aal_label.strip_suffix("_R"))
            .and_then(|bare| self.entries.get(bare).copied())
            .ok_or_else(|| Error::Validation(format!("AAL label {aal_label:?} is not in the ROI map")))
    }

    pub fn labels(&self) -> impl Iterator<Item = (&str, Roi)> {
        self.entries.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Default for RoiMap {
    fn default() -> Self {
        Self::default_map()
    }
}

/// JSON object entries in document order, duplicates kept so they can be
/// reported instead of silently collapsed.
struct RawEntries(Vec<(String, String)>);

impl<'de> Deserialize<'de> for RawEntries {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct EntriesVisitor;

        impl<'de> Visitor<'de> for EntriesVisitor {
            type Value = RawEntries;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object mapping AAL labels to ROI names")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> std::result::Result<RawEntries, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, String>()? {
                    out.push((k, v));
                }
                Ok(RawEntries(out))
            }
        }

        deserializer.deserialize_map(EntriesVisitor)
    }
}

/// Reads a JSON `{aal_label: roi_name}` file.
pub fn load_roi_map(path: impl AsRef<Path>) -> Result<RoiMap> {
    let text = std::fs::read_to_string(path)?;
    RoiMap::from_json_str(&text)
}
