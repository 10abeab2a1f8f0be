//! Synthetic corpus and entity database generator for controlled
//! experiments: templated dialogues with exact turn-level state labels,
//! Zipf-skewed attribute values, and deterministic splits.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{
    corpus_from_raw, Corpus, Ontology, RawCorpus, RawDialogue, RawGoal, RawTurn, Split, DONT_CARE,
};
use crate::error::{Error, Result};
use crate::kb::{EntityDb, Record};

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub domains: usize,
    pub slots_per_domain: usize,
    pub values_per_slot: usize,
    pub requestable_per_domain: usize,
    pub dialogues: usize,
    pub max_turns: usize,
    pub entities_per_domain: usize,
    pub multi_domain_prob: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            domains: 2,
            slots_per_domain: 2,
            values_per_slot: 8,
            requestable_per_domain: 2,
            dialogues: 500,
            max_turns: 7,
            entities_per_domain: 24,
            multi_domain_prob: 0.15,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.domains < 2 {
            return Err(Error::Config("toy corpus needs at least 2 domains".into()));
        }
        if self.slots_per_domain < 2 {
            return Err(Error::Config(
                "toy corpus needs at least 2 informable slots per domain".into(),
            ));
        }
        if self.values_per_slot < 3 {
            return Err(Error::Config(
                "toy corpus needs at least 3 values per slot".into(),
            ));
        }
        if self.requestable_per_domain < 1 {
            return Err(Error::Config(
                "toy corpus needs at least 1 requestable slot per domain".into(),
            ));
        }
        if self.dialogues == 0 || self.entities_per_domain == 0 {
            return Err(Error::Config(
                "toy corpus needs at least 1 dialogue and 1 entity per domain".into(),
            ));
        }
        if self.max_turns < 3 {
            return Err(Error::Config("toy dialogues need at least 3 turns".into()));
        }
        if !(0.0..=1.0).contains(&self.multi_domain_prob) {
            return Err(Error::Config("multi_domain_prob must be in [0, 1]".into()));
        }
        Ok(())
    }
}

const DOMAIN_POOL: &[&str] = &[
    "hotel",
    "restaurant",
    "attraction",
    "train",
    "shop",
    "museum",
];

const SLOT_POOL: &[(&str, &[&str])] = &[
    (
        "pricerange",
        &[
            "cheap",
            "moderate",
            "expensive",
            "budget",
            "premium",
            "luxury",
            "economy",
            "midrange",
            "upscale",
            "bargain",
        ],
    ),
    (
        "area",
        &[
            "north",
            "south",
            "east",
            "west",
            "centre",
            "riverside",
            "outskirts",
            "downtown",
            "uptown",
            "harbour",
        ],
    ),
    (
        "style",
        &[
            "modern",
            "classic",
            "rustic",
            "elegant",
            "cosy",
            "minimal",
            "vintage",
            "grand",
            "quaint",
            "industrial",
        ],
    ),
    (
        "rating",
        &[
            "one",
            "two",
            "three",
            "four",
            "five",
            "six",
            "seven",
            "eight",
            "nine",
            "ten",
        ],
    ),
];

const REQUESTABLE_POOL: &[&str] = &["phone", "postcode", "address", "reference", "hours", "email"];

fn domain_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            DOMAIN_POOL
                .get(i)
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("domain{i}"))
        })
        .collect()
}

/// Slots are globally unique across domains (each domain draws a
/// disjoint stretch of the pool) so that slot and value words identify
/// the (domain, slot) pair unambiguously.
fn domain_slots(config: &ToyConfig, domain_index: usize) -> Vec<(String, Vec<String>)> {
    (0..config.slots_per_domain)
        .map(|i| {
            let gi = domain_index * config.slots_per_domain + i;
            match SLOT_POOL.get(gi) {
                Some((name, pool)) => {
                    let values = (0..config.values_per_slot)
                        .map(|k| {
                            pool.get(k)
                                .map(|v| v.to_string())
                                .unwrap_or_else(|| format!("{name}{k}"))
                        })
                        .collect();
                    (name.to_string(), values)
                }
                None => {
                    let name = format!("slot{gi}");
                    let values = (0..config.values_per_slot)
                        .map(|k| format!("{name}v{k}"))
                        .collect();
                    (name, values)
                }
            }
        })
        .collect()
}

fn requestable_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            REQUESTABLE_POOL
                .get(i)
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("extra{i}"))
        })
        .collect()
}

/// Skewed choice: value k drawn with weight 1/(k+1), so later values are
/// progressively rarer.
fn zipf_pick(rng: &mut ChaCha8Rng, n: usize) -> usize {
    let weights: Vec<f64> = (0..n).map(|k| 1.0 / (k as f64 + 1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut roll = rng.gen::<f64>() * total;
    for (k, w) in weights.iter().enumerate() {
        roll -= w;
        if roll <= 0.0 {
            return k;
        }
    }
    n - 1
}

fn build_ontology(config: &ToyConfig) -> Result<Ontology> {
    let domains = domain_names(config.domains);
    let requestables = requestable_names(config.requestable_per_domain);
    let mut informable = BTreeMap::new();
    let mut requestable = BTreeMap::new();
    for (di, d) in domains.iter().enumerate() {
        for (s, values) in domain_slots(config, di) {
            informable.insert((d.clone(), s), values);
        }
        requestable.insert(d.clone(), requestables.clone());
    }
    Ontology::new(informable, requestable)
}

fn build_db(config: &ToyConfig, ontology: &Ontology, rng: &mut ChaCha8Rng) -> EntityDb {
    let requestables = requestable_names(config.requestable_per_domain);
    let names = domain_names(config.domains);
    let mut records = BTreeMap::new();
    for domain in &ontology.domains {
        let di = names.iter().position(|n| n == domain).expect("known domain");
        let slots = domain_slots(config, di);
        let mut list = Vec::with_capacity(config.entities_per_domain);
        for i in 0..config.entities_per_domain {
            let id = format!("{domain}_{i:03}");
            let mut fields = BTreeMap::new();
            fields.insert("name".to_string(), id.clone());
            for (slot, values) in &slots {
                let v = values[zipf_pick(rng, values.len())].clone();
                fields.insert(slot.clone(), v);
            }
            for r in &requestables {
                fields.insert(r.clone(), format!("{r}_{domain}_{i}"));
            }
            list.push(Record { id, fields });
        }
        records.insert(domain.clone(), list);
    }
    EntityDb::new(records)
}

struct ScriptTurn {
    user: String,
    system: String,
    belief: Vec<(String, String, String)>,
    requested: Vec<(String, String)>,
    domain: String,
}

/// One domain segment: inform the constraints over one or two turns, get
/// an entity offer, then optionally request attributes.
#[allow(clippy::too_many_arguments)]
fn domain_segment(
    rng: &mut ChaCha8Rng,
    db: &EntityDb,
    domain: &str,
    slots: &[(String, Vec<String>)],
    requestables: &[String],
    budget: usize,
    constraints_out: &mut Vec<(String, String, String)>,
    requests_out: &mut Vec<(String, String)>,
) -> Vec<ScriptTurn> {
    let entities = &db.records[domain];
    let entity = &entities[rng.gen_range(0..entities.len())];

    // Constraint per slot, drawn from the chosen entity; occasionally
    // relaxed to dont-care.
    let mut constraints: Vec<(String, String)> = Vec::new();
    for (slot, _) in slots {
        let value = if rng.gen::<f64>() < 0.1 {
            DONT_CARE.to_string()
        } else {
            entity.fields[slot].clone()
        };
        constraints.push((slot.clone(), value));
    }
    for (s, v) in &constraints {
        constraints_out.push((domain.to_string(), s.clone(), v.clone()));
    }

    let mut turns: Vec<ScriptTurn> = Vec::new();
    // Two inform turns when there are >=2 constraints and budget allows.
    let split_informs = constraints.len() >= 2 && budget >= 3 && rng.gen::<f64>() < 0.5;
    let groups: Vec<&[(String, String)]> = if split_informs {
        vec![&constraints[..1], &constraints[1..]]
    } else {
        vec![&constraints[..]]
    };
    let n_groups = groups.len();
    for (gi, group) in groups.into_iter().enumerate() {
        let mentions: Vec<String> = group
            .iter()
            .map(|(s, v)| {
                if v == DONT_CARE {
                    format!("any {s}")
                } else {
                    format!("{s} {v}")
                }
            })
            .collect();
        let user = if gi == 0 {
            format!("i want a {domain} with {}", mentions.join(" and "))
        } else {
            format!("also {} please", mentions.join(" and "))
        };
        let system = if gi + 1 < n_groups {
            let (next_slot, _) = &constraints[1];
            format!("what {next_slot} would you like ?")
        } else if rng.gen::<f64>() < 0.5 {
            "i suggest [value_name] .".to_string()
        } else {
            "how about [value_name] ?".to_string()
        };
        turns.push(ScriptTurn {
            user,
            system,
            belief: group
                .iter()
                .map(|(s, v)| (domain.to_string(), s.clone(), v.clone()))
                .collect(),
            requested: Vec::new(),
            domain: domain.to_string(),
        });
    }

    // Request turns while budget remains.
    let max_requests = requestables.len().min(2);
    let n_requests = rng.gen_range(0..=max_requests);
    let mut picked: Vec<&String> = requestables.iter().collect();
    for r in picked.drain(..).take(n_requests) {
        if turns.len() >= budget {
            break;
        }
        requests_out.push((domain.to_string(), r.clone()));
        // The domain word keeps requests unambiguous across domains.
        let user = if rng.gen::<f64>() < 0.5 {
            format!("can i get the {domain} {r} ?")
        } else {
            format!("what is the {domain} {r} ?")
        };
        turns.push(ScriptTurn {
            user,
            system: format!("the {r} is [value_{r}] ."),
            belief: Vec::new(),
            requested: vec![(domain.to_string(), r.clone())],
            domain: domain.to_string(),
        });
    }
    turns.truncate(budget);
    turns
}

/// Deterministic synthetic corpus plus its entity database. Splits are
/// interleaved by index: 8 train, 1 valid, 1 test out of every 10.
pub fn generate_toy_corpus(config: &ToyConfig, seed: u64) -> Result<(Corpus, EntityDb)> {
    config.validate()?;
    let ontology = build_ontology(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let db = build_db(config, &ontology, &mut rng);
    let requestables = requestable_names(config.requestable_per_domain);

    let mut raw_dialogues = Vec::with_capacity(config.dialogues);
    for i in 0..config.dialogues {
        let multi = config.domains >= 2 && rng.gen::<f64>() < config.multi_domain_prob;
        let first = rng.gen_range(0..config.domains);
        let mut domain_ids = vec![first];
        if multi {
            let mut second = rng.gen_range(0..config.domains - 1);
            if second >= first {
                second += 1;
            }
            domain_ids.push(second);
        }
        let names = domain_names(config.domains);

        let mut constraints = Vec::new();
        let mut requests = Vec::new();
        let mut script: Vec<ScriptTurn> = Vec::new();
        // Reserve the last turn for the goodbye exchange.
        let budget = config.max_turns - 1;
        for &d in &domain_ids {
            let remaining = budget.saturating_sub(script.len());
            if remaining == 0 {
                break;
            }
            let per_domain = if domain_ids.len() == 2 && d == domain_ids[0] {
                remaining.div_ceil(2)
            } else {
                remaining
            };
            let slots = domain_slots(config, d);
            script.extend(domain_segment(
                &mut rng,
                &db,
                &names[d],
                &slots,
                &requestables,
                per_domain,
                &mut constraints,
                &mut requests,
            ));
        }
        let last_domain = script
            .last()
            .map(|t| t.domain.clone())
            .unwrap_or_else(|| names[first].clone());
        script.push(ScriptTurn {
            user: "thank you goodbye".to_string(),
            system: "you are welcome goodbye .".to_string(),
            belief: Vec::new(),
            requested: Vec::new(),
            domain: last_domain,
        });

        let split = match i % 10 {
            8 => Split::Valid,
            9 => Split::Test,
            _ => Split::Train,
        };
        let tagged: Vec<String> = {
            let mut seen = std::collections::BTreeSet::new();
            script.iter().for_each(|t| {
                seen.insert(t.domain.clone());
            });
            seen.into_iter().collect()
        };
        raw_dialogues.push(RawDialogue {
            id: format!("toy_{i:05}"),
            domains: tagged,
            goal: RawGoal {
                constraints,
                requests,
            },
            turns: script
                .into_iter()
                .map(|t| RawTurn {
                    user: t.user,
                    system: t.system,
                    belief: t.belief,
                    requested: t.requested,
                    labelled: true,
                    domain: Some(t.domain),
                })
                .collect(),
            split: Some(split),
        });
    }

    let corpus = corpus_from_raw(RawCorpus {
        dialogues: raw_dialogues,
    }, ontology)?;
    Ok((corpus, db))
}
