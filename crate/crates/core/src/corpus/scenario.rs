use std::collections::BTreeSet;

/// Admissible dialogue scenario tags.
///
/// The default registry carries fifteen counseling scenarios. Deployments
/// with a different taxonomy load their own list with [`ScenarioRegistry::from_lines`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioRegistry {
    tags: BTreeSet<String>,
}

const DEFAULT_TAGS: [&str; 15] = [
    "ptsd",
    "dream_analysis",
    "childhood_shadow",
    "family_relationships",
    "therapeutic_relationship",
    "romantic_relationships",
    "grief_and_loss",
    "work_stress",
    "self_esteem",
    "anxiety",
    "low_mood",
    "addiction",
    "anger_management",
    "identity",
    "social_isolation",
];

impl Default for ScenarioRegistry {
    fn default() -> Self {
        Self::new(DEFAULT_TAGS.iter().map(|s| s.to_string()))
    }
}

impl ScenarioRegistry {
    pub fn new(tags: impl IntoIterator<Item = String>) -> Self {
        Self {
            tags: tags.into_iter().collect(),
        }
    }

    /// One tag per line; blank lines and `#` comments are ignored.
    pub fn from_lines(text: &str) -> Self {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string),
        )
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.tags.contains(tag)
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tags.iter().map(String::as_str)
    }
}
