//! Toolkit configuration: one TOML file, validated on load, with
//! environment overrides of the form `CAPTALKKIT_<SECTION>_<KEY>`.

use crate::corpus::EligibilityRule;
use crate::cot::{BinThresholds, CotVocab};
use crate::dsp::DspConfig;
use crate::error::{Error, Result};
use crate::fhvae::FhvaeConfig;
use crate::seqlayout::assemble::AssembleConfig;
use crate::seqlayout::LossWeights;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const ENV_PREFIX: &str = "CAPTALKKIT_";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ToolConfig {
    #[serde(default)]
    pub seed: u64,
    pub paths: PathsSection,
    #[serde(default)]
    pub dsp: DspSection,
    #[serde(default)]
    pub cot: CotSection,
    #[serde(default)]
    pub corpus: CorpusSection,
    #[serde(default)]
    pub seqlayout: SeqlayoutSection,
    #[serde(default)]
    pub fhvae: FhvaeSection,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub manifest: PathBuf,
    pub annotations: PathBuf,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DspSection {
    pub vad_threshold_db: f64,
    pub vad_floor_clamp_db: f64,
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    pub voicing_threshold: f64,
    pub n_mels: usize,
}

impl Default for DspSection {
    fn default() -> Self {
        let d = DspConfig::<f64>::default();
        Self {
            vad_threshold_db: d.vad_threshold_db,
            vad_floor_clamp_db: d.vad_floor_clamp_db,
            f0_min_hz: d.f0_min_hz,
            f0_max_hz: d.f0_max_hz,
            voicing_threshold: d.voicing_threshold,
            n_mels: d.n_mels,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CotSection {
    pub pitch_thresholds: [f64; 3],
    pub energy_thresholds: [f64; 3],
    pub speed_thresholds: [f64; 3],
    pub emotions: Vec<String>,
    pub tones: Vec<String>,
}

impl Default for CotSection {
    fn default() -> Self {
        let vocab = CotVocab::default();
        Self {
            pitch_thresholds: [1.0, 3.0, 6.0],
            energy_thresholds: [1.5, 4.0, 8.0],
            speed_thresholds: [0.15, 0.4, 0.8],
            emotions: vocab.emotions,
            tones: vocab.tones,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    pub window: usize,
    pub stride: usize,
    /// `"all"` or `"fraction:P"`.
    pub eligibility: String,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            window: crate::corpus::DEFAULT_WINDOW,
            stride: crate::corpus::DEFAULT_STRIDE,
            eligibility: "all".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SeqlayoutSection {
    pub codebook_size: u16,
    pub alpha: f64,
    pub lambda_spk: f64,
    pub lambda_rec: f64,
    pub lambda_kl_z2: f64,
    pub lambda_kl_z1: f64,
    pub dec_fraction: f64,
}

impl Default for SeqlayoutSection {
    fn default() -> Self {
        Self {
            codebook_size: 64,
            alpha: 0.5,
            lambda_spk: 1.0,
            lambda_rec: 1.0,
            lambda_kl_z2: 0.01,
            lambda_kl_z1: 0.01,
            dec_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FhvaeSection {
    pub d_spk: usize,
    pub d2: usize,
    pub d1: usize,
    pub seg_frames: usize,
    pub hidden: usize,
    pub cap_dim: usize,
    pub scale_floor: f64,
    pub step: f64,
    pub epochs: usize,
    /// Caption style embedded as the textual condition.
    pub caption_style: String,
}

impl Default for FhvaeSection {
    fn default() -> Self {
        let d = FhvaeConfig::default();
        Self {
            d_spk: d.d_spk,
            d2: d.d2,
            d1: d.d1,
            seg_frames: d.seg_frames,
            hidden: d.hidden,
            cap_dim: d.cap_dim,
            scale_floor: d.scale_floor,
            step: 0.01,
            epochs: 200,
            caption_style: "aps".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Speaker whose speaker-level caption seeds the reuse comparison.
    pub reuse_speaker: String,
    pub reuse_utterances: usize,
    pub reuse_segments: usize,
    pub caption_noise: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            reuse_speaker: String::new(),
            reuse_utterances: 8,
            reuse_segments: 4,
            caption_noise: 0.25,
        }
    }
}

impl ToolConfig {
    /// Loads and validates the file, then applies `CAPTALKKIT_*` overrides.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let vars: Vec<(String, String)> = std::env::vars()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX))
            .collect();
        Self::load_with_env(path, &vars)
    }

    /// Same as [`load`](Self::load) with an explicit override list (testable).
    pub fn load_with_env(path: impl AsRef<Path>, vars: &[(String, String)]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut value: toml::Value = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;

        for (key, raw) in vars {
            let spec = key.trim_start_matches(ENV_PREFIX);
            apply_override(&mut value, spec, raw)?;
        }

        let config: ToolConfig = value
            .try_into()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        self.bin_thresholds()?;
        self.loss_weights().validate()?;
        self.eligibility_rule()?;
        if !(self.seqlayout.dec_fraction > 0.0 && self.seqlayout.dec_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "seqlayout.dec_fraction must be in (0,1], got {}",
                self.seqlayout.dec_fraction
            )));
        }
        if self.corpus.window == 0 || self.corpus.stride == 0 {
            return Err(Error::Config("corpus.window and stride must be >= 1".into()));
        }
        Ok(())
    }

    pub fn dsp_config(&self) -> DspConfig<f64> {
        DspConfig {
            vad_threshold_db: self.dsp.vad_threshold_db,
            vad_floor_clamp_db: self.dsp.vad_floor_clamp_db,
            f0_min_hz: self.dsp.f0_min_hz,
            f0_max_hz: self.dsp.f0_max_hz,
            voicing_threshold: self.dsp.voicing_threshold,
            n_mels: self.dsp.n_mels,
            ..DspConfig::default()
        }
    }

    /// `(pitch, energy, speed)` thresholds.
    pub fn bin_thresholds(
        &self,
    ) -> Result<(BinThresholds<f64>, BinThresholds<f64>, BinThresholds<f64>)> {
        let mk = |t: [f64; 3]| BinThresholds::new(t[0], t[1], t[2]);
        Ok((
            mk(self.cot.pitch_thresholds)?,
            mk(self.cot.energy_thresholds)?,
            mk(self.cot.speed_thresholds)?,
        ))
    }

    pub fn cot_vocab(&self) -> CotVocab {
        CotVocab {
            emotions: self.cot.emotions.clone(),
            tones: self.cot.tones.clone(),
        }
    }

    pub fn loss_weights(&self) -> LossWeights<f64> {
        LossWeights {
            alpha: self.seqlayout.alpha,
            lambda_spk: self.seqlayout.lambda_spk,
            lambda_rec: self.seqlayout.lambda_rec,
            lambda_kl_z2: self.seqlayout.lambda_kl_z2,
            lambda_kl_z1: self.seqlayout.lambda_kl_z1,
        }
    }

    pub fn eligibility_rule(&self) -> Result<EligibilityRule> {
        EligibilityRule::parse(&self.corpus.eligibility)
    }

    pub fn fhvae_config(&self) -> FhvaeConfig {
        FhvaeConfig {
            n_bands: self.dsp.n_mels,
            d_spk: self.fhvae.d_spk,
            d2: self.fhvae.d2,
            d1: self.fhvae.d1,
            seg_frames: self.fhvae.seg_frames,
            hidden: self.fhvae.hidden,
            cap_dim: self.fhvae.cap_dim,
            scale_floor: self.fhvae.scale_floor,
        }
    }

    pub fn assemble_config(&self) -> AssembleConfig {
        AssembleConfig {
            dec_fraction: self.seqlayout.dec_fraction,
            seed: self.seed,
        }
    }

    /// Paths resolve relative to the config file's directory.
    pub fn resolve_paths(&mut self, config_path: &Path) {
        let base = config_path.parent().unwrap_or(Path::new("."));
        if self.paths.manifest.is_relative() {
            self.paths.manifest = base.join(&self.paths.manifest);
        }
        if self.paths.annotations.is_relative() {
            self.paths.annotations = base.join(&self.paths.annotations);
        }
        if self.paths.out_dir.is_relative() {
            self.paths.out_dir = base.join(&self.paths.out_dir);
        }
    }
}

/// Applies one `SECTION_KEY=value` override (or bare `SEED`). The value is
/// parsed as a TOML literal when possible, falling back to a string.
fn apply_override(root: &mut toml::Value, spec: &str, raw: &str) -> Result<()> {
    let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut table) => table.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    };

    let table = root
        .as_table_mut()
        .ok_or_else(|| Error::Config("config root is not a table".into()))?;

    if spec.eq_ignore_ascii_case("seed") {
        table.insert("seed".into(), parsed);
        return Ok(());
    }

    let (section, key) = spec
        .split_once('_')
        .ok_or_else(|| Error::Config(format!("malformed override {ENV_PREFIX}{spec}")))?;
    let section = section.to_lowercase();
    let key = key.to_lowercase();
    let entry = table
        .entry(section.clone())
        .or_insert_with(|| toml::Value::Table(Default::default()));
    let section_table = entry
        .as_table_mut()
        .ok_or_else(|| Error::Config(format!("config section {section} is not a table")))?;
    section_table.insert(key, parsed);
    Ok(())
}
