//! Shipped scenario registry: configs embedded at build time plus optional
//! discovery of user configs from a directory.

use std::collections::BTreeSet;
use std::path::Path;

use crate::config::ScenarioConfig;

pub const BUILTIN: [(&str, &str); 5] = [
    (
        "thermal-number",
        include_str!("../../../scenarios/thermal-number.json"),
    ),
    (
        "heterodyne-displacement",
        include_str!("../../../scenarios/heterodyne-displacement.json"),
    ),
    (
        "phase-number",
        include_str!("../../../scenarios/phase-number.json"),
    ),
    (
        "su2-rotation",
        include_str!("../../../scenarios/su2-rotation.json"),
    ),
    (
        "fuzz-random",
        include_str!("../../../scenarios/fuzz-random.json"),
    ),
];

/// Parses a shipped scenario by name.
pub fn builtin(name: &str) -> anyhow::Result<ScenarioConfig> {
    let Some((_, text)) = BUILTIN.iter().find(|(n, _)| *n == name) else {
        anyhow::bail!(
            "unknown scenario `{name}` (shipped: {})",
            BUILTIN.map(|(n, _)| n).join(", ")
        );
    };
    let cfg: ScenarioConfig = serde_json::from_str(text)?;
    Ok(cfg)
}

/// One line per scenario: name, then a short shape summary.
#[derive(Debug)]
pub struct ScenarioEntry {
    pub name: String,
    pub summary: String,
    pub source: String,
}

fn summarize(cfg: &ScenarioConfig) -> String {
    if cfg.mode == "fuzz" {
        let f = cfg.fuzz.as_ref();
        return format!(
            "randomized bound sweep ({} pairs, dim <= {})",
            f.map_or(0, |f| f.pairs),
            f.map_or(0, |f| f.max_dim)
        );
    }
    let form = cfg
        .family
        .as_ref()
        .map_or("?".to_string(), |f| f.form.clone());
    format!("dim {}, {form}, bounds [{}]", cfg.dim, cfg.bounds.join(", "))
}

/// Lists shipped scenarios plus any `*.json` configs under `custom_dir`.
/// Names must be unique across both sources.
pub fn list(custom_dir: Option<&Path>) -> anyhow::Result<Vec<ScenarioEntry>> {
    let mut seen = BTreeSet::new();
    let mut entries = Vec::new();
    for (name, text) in BUILTIN {
        let cfg: ScenarioConfig = serde_json::from_str(text)
            .map_err(|e| anyhow::anyhow!("shipped scenario `{name}` is corrupt: {e}"))?;
        anyhow::ensure!(
            cfg.name == name,
            "shipped scenario `{name}` declares name `{}`",
            cfg.name
        );
        seen.insert(cfg.name.clone());
        entries.push(ScenarioEntry {
            name: cfg.name.clone(),
            summary: summarize(&cfg),
            source: "shipped".into(),
        });
    }
    if let Some(dir) = custom_dir {
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", dir.display()))?
            .filter_map(|r| r.ok().map(|d| d.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
            let cfg: ScenarioConfig = serde_json::from_str(&text)
                .map_err(|e| anyhow::anyhow!("{} does not parse: {e}", path.display()))?;
            anyhow::ensure!(
                seen.insert(cfg.name.clone()),
                "duplicate scenario name `{}` (from {})",
                cfg.name,
                path.display()
            );
            entries.push(ScenarioEntry {
                name: cfg.name.clone(),
                summary: summarize(&cfg),
                source: path.display().to_string(),
            });
        }
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::validate;

    #[test]
    fn all_shipped_scenarios_parse_and_validate() {
        for (name, _) in BUILTIN {
            let cfg = builtin(name).unwrap();
            let issues = validate(&cfg);
            assert!(issues.is_empty(), "{name}: {issues:?}");
            assert_eq!(cfg.name, name);
        }
    }

    #[test]
    fn listing_rejects_duplicate_names() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("dup.json"),
            r#"{"name":"thermal-number","mode":"fuzz","fuzz":{"pairs":1,"max_dim":2,"seed":0}}"#,
        )
        .unwrap();
        let err = list(Some(dir.path())).unwrap_err().to_string();
        assert!(err.contains("duplicate scenario name"), "{err}");
    }

    #[test]
    fn listing_includes_custom_configs() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("mine.json"),
            r#"{"name":"mine","mode":"fuzz","fuzz":{"pairs":1,"max_dim":2,"seed":0}}"#,
        )
        .unwrap();
        let entries = list(Some(dir.path())).unwrap();
        assert_eq!(entries.len(), BUILTIN.len() + 1);
        assert!(entries.iter().any(|e| e.name == "mine"));
    }
}
