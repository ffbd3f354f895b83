//! Flat `key = value` run configuration with flag overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{DateTime, NaiveDate, Utc};
use propdetect::corpus::{DateRange, SplitSpec};

/// Every key a config file may define.
const KNOWN_KEYS: [&str; 30] = [
    "input",
    "images",
    "corpus",
    "out",
    "seed",
    "dataset",
    "modality",
    "visual",
    "variant",
    "splits",
    "k_hashtags",
    "image_size",
    "seq_len",
    "vocab_size",
    "text_layers",
    "text_heads",
    "text_d_model",
    "learning_rate",
    "batch_size",
    "max_epochs",
    "patience",
    "dropout",
    "no_early_stop",
    "checkpoint",
    "record",
    "target_class",
    "train_range",
    "validation_range",
    "continuous_range",
    "delay_range",
];

/// Parsed config file plus helpers that implement "flags win".
#[derive(Debug, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let mut values = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((key, value)) = line.split_once('=') else {
                    bail!("{}:{}: expected 'key = value'", path.display(), lineno + 1);
                };
                let key = key.trim().to_string();
                if !KNOWN_KEYS.contains(&key.as_str()) {
                    bail!("{}:{}: unknown config key '{key}'", path.display(), lineno + 1);
                }
                values.insert(key, value.trim().to_string());
            }
        }
        Ok(RunConfig { values })
    }

    /// Flag value, then config value, then none.
    pub fn string(&self, key: &str, flag: Option<&String>) -> Option<String> {
        flag.cloned().or_else(|| self.values.get(key).cloned())
    }

    pub fn required(&self, key: &str, flag: Option<&String>) -> Result<String> {
        self.string(key, flag)
            .with_context(|| format!("missing required option '{key}' (flag or config)"))
    }

    pub fn path(&self, key: &str, flag: Option<&PathBuf>) -> Option<PathBuf> {
        flag.cloned().or_else(|| self.values.get(key).map(PathBuf::from))
    }

    pub fn required_path(&self, key: &str, flag: Option<&PathBuf>) -> Result<PathBuf> {
        self.path(key, flag)
            .with_context(|| format!("missing required path '{key}' (flag or config)"))
    }

    pub fn parse_or<T: std::str::FromStr>(
        &self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.values.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|e| anyhow::anyhow!("config key '{key}' = '{raw}': {e}")),
            None => Ok(default),
        }
    }

    pub fn flag_set(&self, key: &str, flag: bool) -> Result<bool> {
        if flag {
            return Ok(true);
        }
        match self.values.get(key).map(|s| s.as_str()) {
            None => Ok(false),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(other) => bail!("config key '{key}' = '{other}' is not a boolean"),
        }
    }

    /// Date range "YYYY-MM-DD..YYYY-MM-DD" with an inclusive end date.
    pub fn date_range(&self, key: &str, flag: Option<&String>, default: &str) -> Result<DateRange> {
        let raw = self.string(key, flag).unwrap_or_else(|| default.to_string());
        parse_date_range(&raw).with_context(|| format!("option '{key}'"))
    }

    pub fn split_spec(
        &self,
        train: Option<&String>,
        validation: Option<&String>,
        continuous: Option<&String>,
        delay: Option<&String>,
    ) -> Result<SplitSpec> {
        let spec = SplitSpec {
            train: self.date_range("train_range", train, "2015-04-01..2015-12-31")?,
            validation: self.date_range("validation_range", validation, "2016-01-01..2016-01-31")?,
            continuous: self.date_range("continuous_range", continuous, "2016-02-01..2016-02-28")?,
            delay: self.date_range("delay_range", delay, "2016-10-01..2017-06-30")?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn date_utc(s: &str) -> Result<DateTime<Utc>> {
    let date: NaiveDate = s.parse().with_context(|| format!("bad date '{s}'"))?;
    Ok(date.and_hms_opt(0, 0, 0).unwrap().and_utc())
}

/// "start..end" with both dates inclusive (the end date's whole day counts).
pub fn parse_date_range(raw: &str) -> Result<DateRange> {
    let Some((start, end)) = raw.split_once("..") else {
        bail!("expected 'YYYY-MM-DD..YYYY-MM-DD', got '{raw}'");
    };
    let start = date_utc(start.trim())?;
    let end = date_utc(end.trim())? + chrono::Duration::days(1);
    Ok(DateRange { start, end })
}

/// Minimal CSV quoting: wrap fields containing commas or quotes.
pub fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
