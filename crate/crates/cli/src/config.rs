//! Pipeline settings: built-in defaults, overridden by an optional TOML
//! file, overridden by command-line flags. Everything is validated before a
//! command starts.

use std::path::Path;

use clap::{Args, ValueEnum};
use serde::Deserialize;
use spangec::annotation::MissingSpanPolicy;
use spangec::datagen::{CorruptConfig, SpanSampleConfig};
use spangec::esd::DecodeConfig;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    #[default]
    Json,
    Tsv,
    Text,
}

/// Keys accepted in the `--config` file.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    threshold: Option<f64>,
    merge_gap: Option<usize>,
    sampled_ratio: Option<f64>,
    geometric_p: Option<f64>,
    max_span_len: Option<usize>,
    coverage_budget: Option<f64>,
    error_rate: Option<f64>,
    p_insert: Option<f64>,
    p_delete: Option<f64>,
    p_replace: Option<f64>,
    p_swap: Option<f64>,
    epochs: Option<u32>,
    seed: Option<u64>,
    missing_span: Option<MissingSpanPolicy>,
}

/// Flags shared by every subcommand.
#[derive(Clone, Debug, Default, Args)]
pub struct GlobalFlags {
    /// TOML file with pipeline settings; flags override it
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<std::path::PathBuf>,
    /// Detector probability threshold
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Fuse spans separated by at most this many tokens
    #[arg(long, global = true)]
    pub merge_gap: Option<usize>,
    /// Fraction of corrector instances built from sampled spans
    #[arg(long, global = true)]
    pub sampled_ratio: Option<f64>,
    /// Success probability of the span-length geometric law
    #[arg(long, global = true)]
    pub geometric_p: Option<f64>,
    #[arg(long, global = true)]
    pub max_span_len: Option<usize>,
    /// Fraction of tokens covered by sampled spans
    #[arg(long, global = true)]
    pub coverage_budget: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
}

/// Corruption flags of the `corrupt` command.
#[derive(Clone, Debug, Default, Args)]
pub struct CorruptFlags {
    /// Total corruption probability, split evenly over the four operations
    #[arg(long)]
    pub error_rate: Option<f64>,
    #[arg(long)]
    pub p_insert: Option<f64>,
    #[arg(long)]
    pub p_delete: Option<f64>,
    #[arg(long)]
    pub p_replace: Option<f64>,
    #[arg(long)]
    pub p_swap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub decode: DecodeConfig,
    pub sampled_ratio: f64,
    pub spans: SpanSampleConfig,
    pub p_insert: f64,
    pub p_delete: f64,
    pub p_replace: f64,
    pub p_swap: f64,
    pub epochs: u32,
    pub seed: u64,
    pub missing_span: MissingSpanPolicy,
    pub format: OutputFormat,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            decode: DecodeConfig::default(),
            sampled_ratio: 0.5,
            spans: SpanSampleConfig::default(),
            p_insert: 0.025,
            p_delete: 0.025,
            p_replace: 0.025,
            p_swap: 0.025,
            epochs: 5,
            seed: 0,
            missing_span: MissingSpanPolicy::Copy,
            format: OutputFormat::Json,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl PipelineConfig {
    pub fn load(
        flags: &GlobalFlags,
        corrupt: Option<&CorruptFlags>,
        epochs: Option<u32>,
    ) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(path) => read_file_config(path)?,
            None => FileConfig::default(),
        };
        let mut cfg = PipelineConfig::default();
        let d = &mut cfg.decode;
        d.threshold = flags.threshold.or(file.threshold).unwrap_or(d.threshold);
        d.merge_gap = flags.merge_gap.or(file.merge_gap).unwrap_or(d.merge_gap);
        cfg.sampled_ratio = flags
            .sampled_ratio
            .or(file.sampled_ratio)
            .unwrap_or(cfg.sampled_ratio);
        let s = &mut cfg.spans;
        s.geometric_p = flags.geometric_p.or(file.geometric_p).unwrap_or(s.geometric_p);
        s.max_span_len = flags.max_span_len.or(file.max_span_len).unwrap_or(s.max_span_len);
        s.coverage_budget = flags
            .coverage_budget
            .or(file.coverage_budget)
            .unwrap_or(s.coverage_budget);
        cfg.seed = flags.seed.or(file.seed).unwrap_or(cfg.seed);
        cfg.epochs = epochs.or(file.epochs).unwrap_or(cfg.epochs);
        cfg.missing_span = file.missing_span.unwrap_or(cfg.missing_span);
        cfg.format = flags.format.unwrap_or_default();

        let empty = CorruptFlags::default();
        let c = corrupt.unwrap_or(&empty);
        if let Some(rate) = c.error_rate.or(file.error_rate) {
            let p = rate / 4.0;
            (cfg.p_insert, cfg.p_delete, cfg.p_replace, cfg.p_swap) = (p, p, p, p);
        }
        cfg.p_insert = c.p_insert.or(file.p_insert).unwrap_or(cfg.p_insert);
        cfg.p_delete = c.p_delete.or(file.p_delete).unwrap_or(cfg.p_delete);
        cfg.p_replace = c.p_replace.or(file.p_replace).unwrap_or(cfg.p_replace);
        cfg.p_swap = c.p_swap.or(file.p_swap).unwrap_or(cfg.p_swap);
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let t = self.decode.threshold;
        if !(0.0..=1.0).contains(&t) {
            return Err(usage(format!("threshold must be in [0, 1], got {t}")));
        }
        let r = self.sampled_ratio;
        if !(0.0..=1.0).contains(&r) {
            return Err(usage(format!("sampled-ratio must be in [0, 1], got {r}")));
        }
        self.spans.validate().map_err(|e| usage(e.to_string()))?;
        // Vocabulary is checked once it is known.
        let probe = self.corrupt_config(vec!["x".to_string()]);
        probe.validate().map_err(|e| usage(e.to_string()))?;
        Ok(())
    }

    pub fn corrupt_config(&self, vocab: Vec<String>) -> CorruptConfig {
        CorruptConfig {
            p_insert: self.p_insert,
            p_delete: self.p_delete,
            p_replace: self.p_replace,
            p_swap: self.p_swap,
            vocab,
            seed: self.seed,
        }
    }
}

fn read_file_config(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        std::io::Write::write_all(&mut f, text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn defaults() {
        let cfg = PipelineConfig::load(&GlobalFlags::default(), None, None).unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.decode.threshold, 0.5);
        assert_eq!(cfg.spans.geometric_p, 0.2);
    }

    #[test]
    fn flags_override_file() {
        let f = write("threshold = 0.3\nseed = 9\nmissing_span = \"fail\"\n");
        let flags = GlobalFlags {
            config: Some(f.path().to_path_buf()),
            threshold: Some(0.7),
            ..GlobalFlags::default()
        };
        let cfg = PipelineConfig::load(&flags, None, None).unwrap();
        assert_eq!(cfg.decode.threshold, 0.7);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.missing_span, MissingSpanPolicy::Fail);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        let f = write("thresold = 0.3\n");
        let flags = GlobalFlags {
            config: Some(f.path().to_path_buf()),
            ..GlobalFlags::default()
        };
        assert!(matches!(
            PipelineConfig::load(&flags, None, None),
            Err(CliError::Usage(_))
        ));
        let flags = GlobalFlags {
            threshold: Some(1.5),
            ..GlobalFlags::default()
        };
        assert!(matches!(
            PipelineConfig::load(&flags, None, None),
            Err(CliError::Usage(_))
        ));
        let c = CorruptFlags {
            error_rate: Some(2.0),
            ..CorruptFlags::default()
        };
        assert!(PipelineConfig::load(&GlobalFlags::default(), Some(&c), None).is_err());
    }

    #[test]
    fn error_rate_splits_evenly() {
        let c = CorruptFlags {
            error_rate: Some(0.2),
            p_swap: Some(0.0),
            ..CorruptFlags::default()
        };
        let cfg = PipelineConfig::load(&GlobalFlags::default(), Some(&c), None).unwrap();
        assert_eq!(
            (cfg.p_insert, cfg.p_delete, cfg.p_replace, cfg.p_swap),
            (0.05, 0.05, 0.05, 0.0)
        );
    }
}
