//! MIT-BIH beat symbols to the five AAMI heartbeat classes, and the
//! record-exclusion policy.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wfdb::BeatAnnotation;

/// AAMI class. The discriminant is the class id written to label files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AamiClass {
    N = 0,
    S = 1,
    V = 2,
    F = 3,
    Q = 4,
}

pub const NUM_CLASSES: usize = 5;

impl AamiClass {
    pub const ALL: [AamiClass; NUM_CLASSES] = [AamiClass::N, AamiClass::S, AamiClass::V, AamiClass::F, AamiClass::Q];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            AamiClass::N => "N",
            AamiClass::S => "S",
            AamiClass::V => "V",
            AamiClass::F => "F",
            AamiClass::Q => "Q",
        }
    }
}

impl fmt::Display for AamiClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AamiClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "N" | "0" => Ok(AamiClass::N),
            "S" | "1" => Ok(AamiClass::S),
            "V" | "2" => Ok(AamiClass::V),
            "F" | "3" => Ok(AamiClass::F),
            "Q" | "4" => Ok(AamiClass::Q),
            other => Err(Error::Config(format!("unknown AAMI class '{other}'"))),
        }
    }
}

/// The 15 beat types grouped into AAMI classes, as (symbol, class, description).
pub const BEAT_TABLE: [(char, AamiClass, &str); 15] = [
    ('N', AamiClass::N, "Normal beat (NOR)"),
    ('L', AamiClass::N, "Left bundle branch block (LBBB)"),
    ('R', AamiClass::N, "Right bundle branch block (RBBB)"),
    ('e', AamiClass::N, "Atrial escape beat (AE)"),
    ('j', AamiClass::N, "Nodal escape beat (NE)"),
    ('A', AamiClass::S, "Atrial premature beat (AP)"),
    ('a', AamiClass::S, "Aberrant atrial premature beat (aAP)"),
    ('J', AamiClass::S, "Nodal premature beat (NP)"),
    ('S', AamiClass::S, "Supraventricular premature beat (SP)"),
    ('V', AamiClass::V, "Premature ventricular contraction (PVC)"),
    ('E', AamiClass::V, "Ventricular escape beat (VE)"),
    ('F', AamiClass::F, "Fusion of normal & ventricular beat (Fvn)"),
    ('/', AamiClass::Q, "Paced beat (P)"),
    ('f', AamiClass::Q, "Fusion of paced & normal (fPN)"),
    ('Q', AamiClass::Q, "Unclassifiable (U)"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MappedSymbol {
    Beat(AamiClass),
    NotABeat,
}

/// Symbol → class lookup. Anything not in the table is `NotABeat`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingTable {
    map: BTreeMap<char, AamiClass>,
}

impl Default for MappingTable {
    fn default() -> Self {
        Self {
            map: BEAT_TABLE.iter().map(|&(s, c, _)| (s, c)).collect(),
        }
    }
}

impl MappingTable {
    pub fn map_symbol(&self, symbol: char) -> MappedSymbol {
        self.map
            .get(&symbol)
            .map_or(MappedSymbol::NotABeat, |&c| MappedSymbol::Beat(c))
    }

    pub fn class_of(&self, symbol: char) -> Option<AamiClass> {
        match self.map_symbol(symbol) {
            MappedSymbol::Beat(c) => Some(c),
            MappedSymbol::NotABeat => None,
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (char, AamiClass)> + '_ {
        self.map.iter().map(|(&s, &c)| (s, c))
    }

    /// Loads overrides from `symbol,aami_class` CSV (header row required).
    /// Rows replace the defaults; a class of `-` removes the symbol.
    pub fn with_overrides<R: BufRead>(mut self, reader: R) -> Result<Self> {
        const CTX: &str = "mapping csv";
        let mut lines = reader.lines().enumerate();
        match lines.next() {
            Some((_, Ok(h))) if h.trim().eq_ignore_ascii_case("symbol,aami_class") => {}
            _ => return Err(Error::parse(CTX, 1, 1, "expected header 'symbol,aami_class'")),
        }
        for (i, line) in lines {
            let line = line.map_err(|e| Error::parse(CTX, i + 1, 1, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let (sym, class) = line
                .split_once(',')
                .ok_or_else(|| Error::parse(CTX, i + 1, 1, "expected 'symbol,aami_class'"))?;
            let mut chars = sym.chars();
            let symbol = match (chars.next(), chars.next()) {
                (Some(c), None) => c,
                _ => return Err(Error::parse(CTX, i + 1, 1, format!("bad symbol '{sym}'"))),
            };
            if class.trim() == "-" {
                self.map.remove(&symbol);
            } else {
                let class = class
                    .parse()
                    .map_err(|_| Error::parse(CTX, i + 1, sym.len() + 2, format!("bad class '{class}'")))?;
                self.map.insert(symbol, class);
            }
        }
        Ok(self)
    }
}

/// A beat annotation resolved to its AAMI class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappedBeat {
    pub sample_index: u64,
    pub symbol: char,
    pub class: AamiClass,
}

/// Keeps the annotations that map to an AAMI class, dropping non-beats.
pub fn map_beats(annotations: &[BeatAnnotation], table: &MappingTable) -> Vec<MappedBeat> {
    annotations
        .iter()
        .filter_map(|a| {
            table.class_of(a.symbol).map(|class| MappedBeat {
                sample_index: a.sample_index,
                symbol: a.symbol,
                class,
            })
        })
        .collect()
}

pub fn map_symbol(symbol: char) -> MappedSymbol {
    match BEAT_TABLE.iter().find(|(s, _, _)| *s == symbol) {
        Some(&(_, c, _)) => MappedSymbol::Beat(c),
        None => MappedSymbol::NotABeat,
    }
}

/// The 48 MIT-BIH Arrhythmia Database records.
pub const MITBIH_RECORDS: [&str; 48] = [
    "100", "101", "102", "103", "104", "105", "106", "107", "108", "109", "111", "112", "113", "114",
    "115", "116", "117", "118", "119", "121", "122", "123", "124", "200", "201", "202", "203", "205",
    "207", "208", "209", "210", "212", "213", "214", "215", "217", "219", "220", "221", "222", "223",
    "228", "230", "231", "232", "233", "234",
];

/// Records containing paced beats, conventionally dropped under AAMI practice.
pub const PACED_RECORDS: [&str; 4] = ["102", "104", "107", "217"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionPolicy {
    pub excluded: BTreeSet<String>,
}

impl ExclusionPolicy {
    pub fn paced() -> Self {
        Self {
            excluded: PACED_RECORDS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn none() -> Self {
        Self {
            excluded: BTreeSet::new(),
        }
    }
}

impl Default for ExclusionPolicy {
    fn default() -> Self {
        Self::paced()
    }
}

pub fn filter_records<S: AsRef<str>>(record_ids: &[S], policy: &ExclusionPolicy) -> Vec<String> {
    record_ids
        .iter()
        .map(AsRef::as_ref)
        .filter(|id| !policy.excluded.contains(*id))
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbol_mapping_examples() {
        assert_eq!(map_symbol('L'), MappedSymbol::Beat(AamiClass::N));
        assert_eq!(map_symbol('V'), MappedSymbol::Beat(AamiClass::V));
        assert_eq!(map_symbol('+'), MappedSymbol::NotABeat);
        assert_eq!(map_symbol('~'), MappedSymbol::NotABeat);
        assert_eq!(map_symbol('|'), MappedSymbol::NotABeat);
        assert_eq!(map_symbol('f'), MappedSymbol::Beat(AamiClass::Q));
        assert_eq!(map_symbol('J'), MappedSymbol::Beat(AamiClass::S));
        assert_eq!(map_symbol('j'), MappedSymbol::Beat(AamiClass::N));
    }

    #[test]
    fn total_over_all_chars_and_partitioned() {
        let table = MappingTable::default();
        for b in 0u8..=255 {
            let c = b as char;
            assert_eq!(table.map_symbol(c), map_symbol(c));
        }
        let symbols: BTreeSet<char> = BEAT_TABLE.iter().map(|r| r.0).collect();
        assert_eq!(symbols.len(), 15);
        let descriptions: BTreeSet<&str> = BEAT_TABLE.iter().map(|r| r.2).collect();
        assert_eq!(descriptions.len(), 15);
        let per_class: Vec<usize> = AamiClass::ALL
            .iter()
            .map(|c| BEAT_TABLE.iter().filter(|r| r.1 == *c).count())
            .collect();
        assert_eq!(per_class, vec![5, 4, 2, 1, 3]);
    }

    #[test]
    fn class_ids_fixed_order() {
        let names: Vec<_> = AamiClass::ALL.iter().map(|c| (c.id(), c.name())).collect();
        assert_eq!(names, vec![(0, "N"), (1, "S"), (2, "V"), (3, "F"), (4, "Q")]);
        assert_eq!(AamiClass::from_id(5), None);
    }

    #[test]
    fn exclusion() {
        assert_eq!(filter_records(&["100", "102", "106"], &ExclusionPolicy::default()), vec!["100", "106"]);
        assert_eq!(filter_records(&["102", "100"], &ExclusionPolicy::none()), vec!["102", "100"]);
        assert_eq!(filter_records(&MITBIH_RECORDS, &ExclusionPolicy::paced()).len(), 44);
    }

    #[test]
    fn map_beats_drops_non_beats() {
        let anns = [
            BeatAnnotation::new(18, 28, 360.0),
            BeatAnnotation::new(77, 1, 360.0),
            BeatAnnotation::new(370, 5, 360.0),
            BeatAnnotation::new(400, 14, 360.0),
        ];
        let beats = map_beats(&anns, &MappingTable::default());
        let got: Vec<_> = beats.iter().map(|b| (b.sample_index, b.class)).collect();
        assert_eq!(got, vec![(77, AamiClass::N), (370, AamiClass::V)]);
    }

    #[test]
    fn csv_overrides() {
        let csv = "symbol,aami_class\nQ,-\nx,S\n";
        let t = MappingTable::default().with_overrides(csv.as_bytes()).unwrap();
        assert_eq!(t.map_symbol('Q'), MappedSymbol::NotABeat);
        assert_eq!(t.class_of('x'), Some(AamiClass::S));
        assert_eq!(t.class_of('N'), Some(AamiClass::N));
        assert!(MappingTable::default().with_overrides("x,S\n".as_bytes()).is_err());
        assert!(MappingTable::default()
            .with_overrides("symbol,aami_class\nx,Z\n".as_bytes())
            .is_err());
    }
}
