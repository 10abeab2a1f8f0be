//! Per-domain entity database, belief-driven queries and the 5-bin
//! match-count vector fed to the policy network.

use std::collections::BTreeMap;
use std::path::Path;

use crate::corpus::{Ontology, DONT_CARE_IDX, NOT_MENTIONED_IDX};
use crate::dst::BeliefState;
use crate::error::{Error, Result};

/// One entity: a unique id plus slot/attribute fields.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub id: String,
    pub fields: BTreeMap<String, String>,
}

/// Immutable after load; queries are pure functions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EntityDb {
    pub records: BTreeMap<String, Vec<Record>>,
}

impl EntityDb {
    pub fn new(mut records: BTreeMap<String, Vec<Record>>) -> Self {
        for list in records.values_mut() {
            list.sort_by(|a, b| a.id.cmp(&b.id));
        }
        Self { records }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw: BTreeMap<String, Vec<BTreeMap<String, String>>> =
            serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let mut records = BTreeMap::new();
        for (domain, entries) in raw {
            let mut list = Vec::with_capacity(entries.len());
            for mut fields in entries {
                let id = fields.remove("id").ok_or_else(|| {
                    Error::Query(format!("record without id in domain '{domain}'"))
                })?;
                list.push(Record { id, fields });
            }
            records.insert(domain, list);
        }
        Ok(Self::new(records))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut raw: BTreeMap<String, Vec<BTreeMap<String, String>>> = BTreeMap::new();
        for (domain, list) in &self.records {
            let entries = list
                .iter()
                .map(|r| {
                    let mut m = r.fields.clone();
                    m.insert("id".to_string(), r.id.clone());
                    m
                })
                .collect();
            raw.insert(domain.clone(), entries);
        }
        std::fs::write(path, serde_json::to_string_pretty(&raw)?)?;
        Ok(())
    }
}

/// One-hot encoding of the match count into bins {0, 1, 2, 3, >3}.
#[derive(Clone, Debug, PartialEq)]
pub struct DbQueryVector {
    pub bins: [f64; 5],
}

impl DbQueryVector {
    pub fn from_count(count: usize) -> Self {
        let mut bins = [0.0; 5];
        bins[count.min(4)] = 1.0;
        Self { bins }
    }

    pub fn hot_bin(&self) -> usize {
        self.bins.iter().position(|&b| b == 1.0).unwrap()
    }
}

/// Records matching the belief state's concrete constraints for one
/// domain, plus the binned match count. A slot constrains the query only
/// when its belief argmax is a concrete value; `not-mentioned` and
/// `dont-care` argmaxes leave the slot unconstrained.
pub fn query<'a>(
    db: &'a EntityDb,
    belief: &BeliefState,
    ontology: &Ontology,
    domain: &str,
) -> Result<(Vec<&'a Record>, DbQueryVector)> {
    let records = db
        .records
        .get(domain)
        .ok_or_else(|| Error::Query(format!("unknown domain '{domain}'")))?;

    let mut constraints: Vec<(&str, &str)> = Vec::new();
    for ((d, s), _) in belief.dists.iter() {
        if d != domain {
            continue;
        }
        let idx = belief.argmax(d, s);
        if idx == NOT_MENTIONED_IDX || idx == DONT_CARE_IDX {
            continue;
        }
        let value = ontology
            .value_name(d, s, idx)
            .ok_or_else(|| Error::Query(format!("value index {idx} out of range for ({d}, {s})")))?;
        constraints.push((s.as_str(), value));
    }

    let matching: Vec<&Record> = records
        .iter()
        .filter(|r| {
            constraints
                .iter()
                .all(|(s, v)| r.fields.get(*s).map(|fv| fv == v).unwrap_or(false))
        })
        .collect();
    let q = DbQueryVector::from_count(matching.len());
    Ok((matching, q))
}

/// Deterministic entity choice: the first record in id order.
pub fn select_entity<'a>(matching: &[&'a Record]) -> Option<&'a Record> {
    matching.iter().min_by(|a, b| a.id.cmp(&b.id)).copied()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::NOT_MENTIONED;
    use std::collections::BTreeMap;

    fn ontology() -> Ontology {
        let mut informable = BTreeMap::new();
        informable.insert(
            ("hotel".to_string(), "pricerange".to_string()),
            vec!["cheap".to_string(), "expensive".to_string()],
        );
        informable.insert(
            ("hotel".to_string(), "area".to_string()),
            vec!["north".to_string(), "south".to_string()],
        );
        Ontology::new(informable, BTreeMap::new()).unwrap()
    }

    fn db() -> EntityDb {
        let mut records = BTreeMap::new();
        let mk = |id: &str, price: &str, area: &str| Record {
            id: id.to_string(),
            fields: [
                ("pricerange".to_string(), price.to_string()),
                ("area".to_string(), area.to_string()),
            ]
            .into_iter()
            .collect(),
        };
        records.insert(
            "hotel".to_string(),
            vec![
                mk("hotel_2", "cheap", "north"),
                mk("hotel_0", "cheap", "south"),
                mk("hotel_1", "expensive", "north"),
            ],
        );
        EntityDb::new(records)
    }

    fn belief_with(price_idx: usize, area_idx: usize) -> BeliefState {
        let ont = ontology();
        let mut b = BeliefState::initial(&ont);
        b.set_argmax("hotel", "pricerange", price_idx);
        b.set_argmax("hotel", "area", area_idx);
        b
    }

    #[test]
    fn bins_one_hot() {
        for (count, bin) in [(0, 0), (1, 1), (2, 2), (3, 3), (4, 4), (100, 4)] {
            let q = DbQueryVector::from_count(count);
            assert_eq!(q.hot_bin(), bin);
            assert_eq!(q.bins.iter().filter(|&&b| b == 1.0).count(), 1);
            assert_eq!(q.bins.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn query_matches_concrete_constraints() {
        let ont = ontology();
        let database = db();
        // cheap (index 2), area not mentioned.
        let b = belief_with(2, NOT_MENTIONED_IDX);
        let (matching, q) = query(&database, &b, &ont, "hotel").unwrap();
        assert_eq!(matching.len(), 2);
        assert_eq!(q.hot_bin(), 2);
        // All three when nothing is constrained.
        let b = belief_with(NOT_MENTIONED_IDX, NOT_MENTIONED_IDX);
        let (matching, q) = query(&database, &b, &ont, "hotel").unwrap();
        assert_eq!(matching.len(), 3);
        assert_eq!(q.hot_bin(), 3);
    }

    #[test]
    fn dont_care_equals_not_mentioned_for_matching() {
        let ont = ontology();
        let database = db();
        let a = belief_with(2, NOT_MENTIONED_IDX);
        let b = belief_with(2, DONT_CARE_IDX);
        let (ma, _) = query(&database, &a, &ont, "hotel").unwrap();
        let (mb, _) = query(&database, &b, &ont, "hotel").unwrap();
        let ids_a: Vec<&str> = ma.iter().map(|r| r.id.as_str()).collect();
        let ids_b: Vec<&str> = mb.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids_a, ids_b);
    }

    #[test]
    fn unknown_domain_errors() {
        let ont = ontology();
        let b = BeliefState::initial(&ont);
        assert!(query(&db(), &b, &ont, "train").is_err());
    }

    #[test]
    fn select_entity_by_id_order() {
        let database = db();
        let records: Vec<&Record> = database.records["hotel"].iter().collect();
        assert_eq!(select_entity(&records).unwrap().id, "hotel_0");
        assert!(select_entity(&[]).is_none());
        let one = [&database.records["hotel"][2]];
        assert_eq!(select_entity(&one).unwrap().id, one[0].id);
    }

    #[test]
    fn db_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("db.json");
        let database = db();
        database.save(&path).unwrap();
        let loaded = EntityDb::load(&path).unwrap();
        assert_eq!(database, loaded);
    }

    #[test]
    fn mention_of_not_mentioned() {
        // Sanity: constant used by the filter above matches the ontology layout.
        let ont = ontology();
        assert_eq!(
            ont.value_name("hotel", "pricerange", NOT_MENTIONED_IDX),
            Some(NOT_MENTIONED)
        );
    }
}
