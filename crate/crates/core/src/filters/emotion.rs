use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::FilterError;

/// Emotion name → action units that must all be present.
///
/// The built-in table has one row, `happiness = [6, 12]` (cheek raiser plus
/// lip corner puller). Further rows come from a TOML file of the same shape:
///
/// ```toml
/// sadness = [1, 4, 15]
/// surprise = [1, 2, 5, 26]
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmotionTable(BTreeMap<String, BTreeSet<u8>>);

impl Default for EmotionTable {
    fn default() -> Self {
        Self(BTreeMap::from([("happiness".to_string(), BTreeSet::from([6, 12]))]))
    }
}

impl EmotionTable {
    pub fn empty() -> Self {
        Self(BTreeMap::new())
    }

    /// The built-in table extended (and, on name clashes, overridden) by the rows in `text`.
    pub fn with_overrides(text: &str) -> Result<Self, FilterError> {
        let extra: BTreeMap<String, BTreeSet<u8>> =
            toml::from_str(text).map_err(|e| FilterError::Config(e.message().to_string()))?;
        if let Some((name, _)) = extra.iter().find(|(_, aus)| aus.is_empty()) {
            return Err(FilterError::Config(format!("emotion `{name}` lists no action units")));
        }
        let mut table = Self::default();
        table.0.extend(extra);
        Ok(table)
    }

    pub fn insert(&mut self, name: impl Into<String>, aus: impl IntoIterator<Item = u8>) {
        self.0.insert(name.into(), aus.into_iter().collect());
    }

    pub fn get(&self, name: &str) -> Option<&BTreeSet<u8>> {
        self.0.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    /// Checks that every referenced AU is among `available`.
    pub fn validate(&self, available: &[u8]) -> Result<(), FilterError> {
        for (name, aus) in &self.0 {
            if let Some(au) = aus.iter().find(|au| !available.contains(au)) {
                return Err(FilterError::UnknownAu {
                    au: *au,
                    participant: format!("emotion `{name}`"),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_happiness_only() {
        let t = EmotionTable::default();
        assert_eq!(t.names().collect::<Vec<_>>(), vec!["happiness"]);
        assert_eq!(t.get("happiness"), Some(&BTreeSet::from([6, 12])));
    }

    #[test]
    fn overrides_from_toml() {
        let t = EmotionTable::with_overrides("sadness = [1, 4, 15]\nhappiness = [12]\n").unwrap();
        assert_eq!(t.get("sadness"), Some(&BTreeSet::from([1, 4, 15])));
        assert_eq!(t.get("happiness"), Some(&BTreeSet::from([12])));
        assert!(EmotionTable::with_overrides("x = []").is_err());
        assert!(EmotionTable::with_overrides("x = 3").is_err());
    }

    #[test]
    fn validation_against_columns() {
        let t = EmotionTable::default();
        assert!(t.validate(&[1, 6, 12]).is_ok());
        assert!(matches!(t.validate(&[6]), Err(FilterError::UnknownAu { au: 12, .. })));
    }
}
