use std::collections::{BTreeMap, BTreeSet, HashMap};

use limp_core::data::UserTimeline;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Reserved index for POIs and categories unseen in training.
pub const UNKNOWN: u32 = 0;
pub const UNKNOWN_TOKEN: &str = "<unk>";

/// String to index maps built from the training split. POI and category
/// index 0 is [`UNKNOWN`]; users have no unknown entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabLists", into = "VocabLists")]
pub struct Vocab {
    pois: Vec<String>,
    categories: Vec<String>,
    users: Vec<String>,
    poi_index: HashMap<String, u32>,
    category_index: HashMap<String, u32>,
    user_index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabLists {
    pois: Vec<String>,
    categories: Vec<String>,
    users: Vec<String>,
}

impl From<VocabLists> for Vocab {
    fn from(l: VocabLists) -> Self {
        Vocab::from_lists(l.pois, l.categories, l.users)
    }
}

impl From<Vocab> for VocabLists {
    fn from(v: Vocab) -> Self {
        VocabLists {
            pois: v.pois,
            categories: v.categories,
            users: v.users,
        }
    }
}

fn index_of(items: &[String]) -> HashMap<String, u32> {
    items.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect()
}

impl Vocab {
    fn from_lists(pois: Vec<String>, categories: Vec<String>, users: Vec<String>) -> Self {
        Vocab {
            poi_index: index_of(&pois),
            category_index: index_of(&categories),
            user_index: index_of(&users),
            pois,
            categories,
            users,
        }
    }

    /// Sorted vocabularies over every stay of the given timelines.
    pub fn build(train: &BTreeMap<String, UserTimeline>) -> Result<Self> {
        let mut pois = BTreeSet::new();
        let mut categories = BTreeSet::new();
        for t in train.values() {
            for s in t.stays() {
                pois.insert(s.poi_id.clone());
                categories.insert(s.category.clone());
            }
        }
        if pois.is_empty() {
            return Err(invalid("cannot build a vocabulary from an empty training split"));
        }
        let with_unknown = |set: BTreeSet<String>| {
            std::iter::once(UNKNOWN_TOKEN.to_string()).chain(set).collect::<Vec<_>>()
        };
        let users = train.keys().cloned().collect();
        Ok(Vocab::from_lists(with_unknown(pois), with_unknown(categories), users))
    }

    pub fn num_pois(&self) -> usize {
        self.pois.len()
    }

    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn poi(&self, poi_id: &str) -> u32 {
        self.poi_index.get(poi_id).copied().unwrap_or(UNKNOWN)
    }

    pub fn category(&self, category: &str) -> u32 {
        self.category_index.get(category).copied().unwrap_or(UNKNOWN)
    }

    /// Users must have been seen in training.
    pub fn user(&self, user_id: &str) -> Result<u32> {
        self.user_index
            .get(user_id)
            .copied()
            .ok_or_else(|| invalid(format!("user {user_id:?} has no training history")))
    }

    pub fn poi_id(&self, index: usize) -> Option<&str> {
        self.pois.get(index).map(String::as_str)
    }

    pub fn user_id(&self, index: usize) -> Option<&str> {
        self.users.get(index).map(String::as_str)
    }

    pub fn category_name(&self, index: usize) -> Option<&str> {
        self.categories.get(index).map(String::as_str)
    }
}
