//! Bundled scenario configurations.

use super::ScenarioConfig;
use crate::error::{MarketError, Result};

const PRESETS: [(&str, &str); 6] = [
    ("scenario1", include_str!("../../presets/scenario1.json")),
    ("scenario2", include_str!("../../presets/scenario2.json")),
    ("scenario3-low", include_str!("../../presets/scenario3-low.json")),
    ("scenario3-high", include_str!("../../presets/scenario3-high.json")),
    ("iwfp-topology", include_str!("../../presets/iwfp-topology.json")),
    ("iwfp-ceiling", include_str!("../../presets/iwfp-ceiling.json")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

/// Raw JSON text of a preset.
pub fn source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load(name: &str) -> Result<ScenarioConfig> {
    let text = source(name).ok_or_else(|| MarketError::Parse(format!("unknown preset `{name}`")))?;
    ScenarioConfig::from_json(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_scenario;

    #[test]
    fn every_preset_parses_and_validates() {
        for name in names() {
            let cfg = load(name).unwrap();
            assert_eq!(cfg.name, name);
            assert!(
                validate_scenario(&cfg).is_empty(),
                "{name}: {:?}",
                validate_scenario(&cfg)
            );
        }
        assert!(load("nope").is_err());
    }
}
