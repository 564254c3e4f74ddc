//! Strict key-value config with one section per pipeline stage. Unknown
//! sections or keys are errors; command-line flags override config values.

use std::collections::BTreeMap;
use std::path::Path;

use overmix::{Error, Result};

/// Accepted sections and their keys.
const SCHEMA: &[(&str, &[&str])] = &[
    ("global", &["seed", "jobs", "sample_rate_hz"]),
    (
        "segment",
        &[
            "mode",
            "min_len_s",
            "frame_s",
            "step_s",
            "on_db",
            "off_db",
            "hangover_s",
            "min_pause_s",
            "energy_floor_db",
            "ratio_min_db",
            "channel",
            "target_channel",
            "other_channel",
            "speaker",
        ],
    ),
    (
        "verify",
        &["threshold", "min_enroll_s", "window", "hop", "channel"],
    ),
    (
        "pair",
        &[
            "target",
            "snr_low_db",
            "snr_high_db",
            "cv_speakers",
            "test_speakers",
            "target_train",
            "target_cv",
            "target_test",
            "trace",
        ],
    ),
    (
        "mix",
        &["mode", "format", "sad", "clip_guard", "channel"],
    ),
    ("separate", &["mask", "window", "hop", "format"]),
    ("eval", &["csv"]),
    ("stats", &["tsv"]),
    ("retarget", &[]),
];

#[derive(Debug, Default)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Config {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = "global".to_string();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            let err = |reason: String| Error::Config(format!(
                "{}:{}: {reason}",
                path.display(),
                idx + 1
            ));
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| err("unterminated section header".into()))?
                    .trim();
                if !SCHEMA.iter().any(|(s, _)| *s == name) {
                    return Err(err(format!("unknown section [{name}]")));
                }
                current = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            let key = key.trim();
            let keys = SCHEMA
                .iter()
                .find(|(s, _)| *s == current)
                .map(|(_, k)| *k)
                .unwrap();
            if !keys.contains(&key) {
                return Err(err(format!("unknown key {key:?} in section [{current}]")));
            }
            let prior = sections
                .entry(current.clone())
                .or_default()
                .insert(key.to_string(), value.trim().to_string());
            if prior.is_some() {
                return Err(err(format!("duplicate key {key:?} in section [{current}]")));
            }
        }
        Ok(Self { sections })
    }

    pub fn str(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.str(section, key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| {
                Error::Config(format!("config [{section}] {key} has invalid value {v:?}"))
            }),
        }
    }

    pub fn f64(&self, section: &str, key: &str) -> Result<Option<f64>> {
        self.parsed(section, key)
    }

    pub fn u64(&self, section: &str, key: &str) -> Result<Option<u64>> {
        self.parsed(section, key)
    }

    pub fn usize(&self, section: &str, key: &str) -> Result<Option<usize>> {
        self.parsed(section, key)
    }

    pub fn u32(&self, section: &str, key: &str) -> Result<Option<u32>> {
        self.parsed(section, key)
    }

    pub fn bool(&self, section: &str, key: &str) -> Result<Option<bool>> {
        match self.str(section, key) {
            None => Ok(None),
            Some("true" | "1" | "yes") => Ok(Some(true)),
            Some("false" | "0" | "no") => Ok(Some(false)),
            Some(v) => Err(Error::Config(format!(
                "config [{section}] {key} has invalid boolean {v:?}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load_str(text: &str) -> Result<Config> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.ini");
        std::fs::write(&path, text).unwrap();
        Config::load(&path)
    }

    #[test]
    fn parses_sections_and_types() {
        let cfg = load_str(
            "# comment\nseed = 7\n[segment]\nmin_len_s = 1.5\n[pair]\ntarget = 100\ntrace = yes\n",
        )
        .unwrap();
        assert_eq!(cfg.u64("global", "seed").unwrap(), Some(7));
        assert_eq!(cfg.f64("segment", "min_len_s").unwrap(), Some(1.5));
        assert_eq!(cfg.usize("pair", "target").unwrap(), Some(100));
        assert_eq!(cfg.bool("pair", "trace").unwrap(), Some(true));
        assert_eq!(cfg.str("verify", "threshold"), None);
    }

    #[test]
    fn strict_rejections() {
        assert!(matches!(load_str("[nosuch]\n"), Err(Error::Config(_))));
        assert!(matches!(
            load_str("[segment]\nbogus = 1\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(load_str("just words\n"), Err(Error::Config(_))));
        assert!(matches!(
            load_str("[pair]\ntarget = 1\ntarget = 2\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            load_str("[pair]\ntarget = lots\n").and_then(|c| c.usize("pair", "target")),
            Err(Error::Config(_))
        ));
    }
}
