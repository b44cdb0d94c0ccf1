//! Quantitative evaluation: cross-utterance speaker similarity, the
//! timbre-reuse contrast, per-attribute controllability success rates,
//! judgment-accuracy aggregation, and pairwise-preference tallies.
//!
//! The speaker embedder is a deterministic spectral-statistics stand-in:
//! any speaker-discriminative embedding preserves the comparison structure
//! the similarity metrics need at this scale.

use crate::cot::{ProsodyAttribute, ProsodyBin};
use crate::dsp::FeatureMatrix;
use crate::error::{Error, Result};
use crate::num::Real;
use ndarray::Array1;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

/// Unit-norm vector of per-band feature statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerEmbedding<F> {
    vector: Array1<F>,
}

impl<F: Real> SpeakerEmbedding<F> {
    pub fn vector(&self) -> &Array1<F> {
        &self.vector
    }

    pub fn cosine(&self, other: &Self) -> F {
        // unit vectors: the dot product is the cosine
        self.vector
            .iter()
            .zip(other.vector.iter())
            .map(|(&a, &b)| a * b)
            .fold(F::zero(), |acc, v| acc + v)
    }
}

/// Per-band mean and standard deviation over frames, concatenated and
/// L2-normalized (80 dimensions for 40 bands).
pub fn toy_embed<F: Real>(feats: &FeatureMatrix<F>) -> Result<SpeakerEmbedding<F>> {
    if feats.n_frames() == 0 {
        return Err(Error::EmptyInput);
    }
    let bands = feats.n_bands();
    let n = F::from_f64_c(feats.n_frames() as f64);
    let mut raw = Array1::<F>::zeros(bands * 2);
    for b in 0..bands {
        let column: Vec<F> = feats.data().column(b).iter().copied().collect();
        let mean = crate::num::stable_mean(&column);
        let var = column
            .iter()
            .map(|&v| (v - mean) * (v - mean))
            .fold(F::zero(), |acc, v| acc + v)
            / n;
        raw[b] = mean;
        raw[bands + b] = var.sqrt();
    }
    let norm = raw
        .iter()
        .map(|&v| v * v)
        .fold(F::zero(), |acc, v| acc + v)
        .sqrt();
    if !(norm > F::zero()) || !norm.is_finite() {
        return Err(Error::EmptyInput);
    }
    Ok(SpeakerEmbedding {
        vector: raw.mapv(|v| v / norm),
    })
}

/// Average pairwise cosine similarity over all unordered pairs.
pub fn sim<F: Real>(embeddings: &[SpeakerEmbedding<F>]) -> Result<F> {
    if embeddings.len() < 2 {
        return Err(Error::EmptyInput);
    }
    let mut total = F::zero();
    let mut count = 0usize;
    for i in 0..embeddings.len() {
        for j in i + 1..embeddings.len() {
            total += embeddings[i].cosine(&embeddings[j]);
            count += 1;
        }
    }
    Ok(total / F::from_f64_c(count as f64))
}

/// The fixed-vs-resampled speaker-condition contrast.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TimbreReuseReport {
    pub sim_fixed: f64,
    pub sim_resampled: f64,
    /// `sim_fixed − sim_resampled`; positive when reuse preserves timbre.
    pub gap: f64,
}

pub fn timbre_reuse_report<F: Real>(
    fixed: &[SpeakerEmbedding<F>],
    resampled: &[SpeakerEmbedding<F>],
) -> Result<TimbreReuseReport> {
    let sim_fixed = sim(fixed)?.to_f64().unwrap();
    let sim_resampled = sim(resampled)?.to_f64().unwrap();
    Ok(TimbreReuseReport {
        sim_fixed,
        sim_resampled,
        gap: sim_fixed - sim_resampled,
    })
}

impl TimbreReuseReport {
    pub fn text_table(&self) -> String {
        format!(
            "setting                    sim\n\
             fixed espk (reuse)         {:.4}\n\
             resampled espk (per-utt)   {:.4}\n\
             gap                        {:.4}\n",
            self.sim_fixed, self.sim_resampled, self.gap
        )
    }
}

/// Commanded direction of a single-attribute edit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

/// One controllability probe: the same generation config with exactly one
/// attribute nudged, and the bins extracted from the paired outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControllabilityPair {
    pub attribute: ProsodyAttribute,
    pub direction: Direction,
    pub bin_before: ProsodyBin,
    pub bin_after: ProsodyBin,
}

impl ControllabilityPair {
    /// Strict success: the extracted bin moved in the commanded direction;
    /// staying in the same bin counts as failure.
    pub fn success(&self) -> bool {
        match self.direction {
            Direction::Up => self.bin_after > self.bin_before,
            Direction::Down => self.bin_after < self.bin_before,
        }
    }
}

/// Per-attribute success rates. Attributes with zero pairs are absent from
/// the map, not reported as zero.
pub fn controllability(pairs: &[ControllabilityPair]) -> BTreeMap<String, f64> {
    let mut totals: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for pair in pairs {
        let key = format!("{:?}", pair.attribute).to_lowercase();
        let entry = totals.entry(key).or_insert((0, 0));
        entry.1 += 1;
        if pair.success() {
            entry.0 += 1;
        }
    }
    totals
        .into_iter()
        .map(|(k, (succ, total))| (k, succ as f64 / total as f64))
        .collect()
}

/// One plausibility judgment over the five control attributes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub sample_id: String,
    pub emotion: bool,
    pub tone: bool,
    pub pitch: bool,
    pub energy: bool,
    pub speed: bool,
    pub overall: bool,
}

impl JudgmentRecord {
    fn attributes(&self) -> [(&'static str, bool); 5] {
        [
            ("emotion", self.emotion),
            ("tone", self.tone),
            ("pitch", self.pitch),
            ("energy", self.energy),
            ("speed", self.speed),
        ]
    }

    /// Enforced at ingestion: overall may be true only if every attribute is.
    pub fn validate(&self) -> Result<()> {
        if self.overall {
            for (name, value) in self.attributes() {
                if !value {
                    return Err(Error::InconsistentJudgment {
                        sample_id: self.sample_id.clone(),
                        attribute: name,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Loads line-delimited judgment records, enforcing the overall-implies-all
/// invariant.
pub fn load_judgments(path: impl AsRef<Path>) -> Result<Vec<JudgmentRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JudgmentRecord = serde_json::from_str(&line).map_err(|e| Error::Manifest {
            line: i + 1,
            reason: e.to_string(),
        })?;
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

/// Per-attribute and overall accuracy; overall counts records where all
/// five attributes are true.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CotAccuracy {
    pub emotion: f64,
    pub tone: f64,
    pub pitch: f64,
    pub energy: f64,
    pub speed: f64,
    pub overall: f64,
    pub n_records: usize,
}

pub fn cot_accuracy(records: &[JudgmentRecord]) -> Result<CotAccuracy> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = records.len() as f64;
    let frac = |f: fn(&JudgmentRecord) -> bool| records.iter().filter(|r| f(r)).count() as f64 / n;
    Ok(CotAccuracy {
        emotion: frac(|r| r.emotion),
        tone: frac(|r| r.tone),
        pitch: frac(|r| r.pitch),
        energy: frac(|r| r.energy),
        speed: frac(|r| r.speed),
        overall: frac(|r| r.emotion && r.tone && r.pitch && r.energy && r.speed),
        n_records: records.len(),
    })
}

impl CotAccuracy {
    pub fn text_table(&self) -> String {
        format!(
            "attribute   accuracy   (n={})\n\
             emotion     {:.4}\n\
             tone        {:.4}\n\
             pitch       {:.4}\n\
             energy      {:.4}\n\
             speed       {:.4}\n\
             overall     {:.4}\n",
            self.n_records, self.emotion, self.tone, self.pitch, self.energy, self.speed,
            self.overall
        )
    }
}

/// One rater's vote on one paired item.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VoteRecord {
    pub item_id: String,
    pub rater: String,
    /// `"a"` or `"b"`.
    pub choice: Choice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    A,
    B,
}

/// Majority-vote preference shares over items; ties are reported
/// separately, and the three shares sum to one.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PreferenceReport {
    pub share_a: f64,
    pub share_b: f64,
    pub share_tie: f64,
    pub n_items: usize,
}

pub fn pairwise_preference(votes: &[VoteRecord]) -> Result<PreferenceReport> {
    if votes.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut per_item: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for vote in votes {
        let entry = per_item.entry(&vote.item_id).or_insert((0, 0));
        match vote.choice {
            Choice::A => entry.0 += 1,
            Choice::B => entry.1 += 1,
        }
    }
    let n_items = per_item.len();
    let mut a = 0usize;
    let mut b = 0usize;
    let mut tie = 0usize;
    for (_, (votes_a, votes_b)) in per_item {
        match votes_a.cmp(&votes_b) {
            std::cmp::Ordering::Greater => a += 1,
            std::cmp::Ordering::Less => b += 1,
            std::cmp::Ordering::Equal => tie += 1,
        }
    }
    Ok(PreferenceReport {
        share_a: a as f64 / n_items as f64,
        share_b: b as f64 / n_items as f64,
        share_tie: tie as f64 / n_items as f64,
        n_items,
    })
}

pub fn load_votes(path: impl AsRef<Path>) -> Result<Vec<VoteRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Error::Manifest {
                line: i + 1,
                reason: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

/// Loads line-delimited controllability pairs.
pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<ControllabilityPair>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Error::Manifest {
                line: i + 1,
                reason: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    fn unit(v: &[f64]) -> SpeakerEmbedding<f64> {
        let arr = Array1::from_vec(v.to_vec());
        let norm = arr.iter().map(|x| x * x).sum::<f64>().sqrt();
        SpeakerEmbedding {
            vector: arr.mapv(|x| x / norm),
        }
    }

    #[test]
    fn sim_examples() {
        let e = unit(&[1.0, 0.0]);
        assert_abs_diff_eq!(
            sim(&[e.clone(), e.clone(), e.clone()]).unwrap(),
            1.0,
            epsilon = 1e-12
        );

        let x = unit(&[1.0, 0.0]);
        let y = unit(&[0.0, 1.0]);
        assert_abs_diff_eq!(sim(&[x.clone(), y.clone()]).unwrap(), 0.0, epsilon = 1e-12);

        // pairwise cosines {1, 0, 0} → mean 1/3
        assert_abs_diff_eq!(
            sim(&[x.clone(), x.clone(), y]).unwrap(),
            1.0 / 3.0,
            epsilon = 1e-12
        );

        assert!(sim(&[x]).is_err());
    }

    #[test]
    fn sim_is_permutation_invariant_and_bounded() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let embs: Vec<_> = (0..6)
            .map(|_| {
                let v: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
                unit(&v)
            })
            .collect();
        let forward = sim(&embs).unwrap();
        let mut rev = embs.clone();
        rev.reverse();
        assert_abs_diff_eq!(forward, sim(&rev).unwrap(), epsilon = 1e-12);
        assert!((-1.0..=1.0).contains(&forward));
    }

    #[test]
    fn toy_embed_properties() {
        let data = Array2::from_shape_fn((30, 4), |(i, j)| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let feats = FeatureMatrix::new(data);
        let a = toy_embed(&feats).unwrap();
        let b = toy_embed(&feats).unwrap();
        assert_eq!(a, b);
        let norm: f64 = a.vector().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn toy_embed_separates_distinct_envelopes() {
        // two "speakers" with energy concentrated in different bands
        let speaker = |hot_band: usize, utt: usize| {
            let data = Array2::from_shape_fn((40, 6), |(i, j)| {
                let base = if j == hot_band { 3.0 } else { -20.0 };
                base + ((i * (utt + 2) + j) % 5) as f64 * 0.1
            });
            toy_embed(&FeatureMatrix::new(data)).unwrap()
        };
        let a: Vec<_> = (0..5).map(|u| speaker(1, u)).collect();
        let b: Vec<_> = (0..5).map(|u| speaker(4, u)).collect();

        let within_a = sim(&a).unwrap();
        let within_b = sim(&b).unwrap();
        let mut cross = Vec::new();
        for x in &a {
            for y in &b {
                cross.push(x.cosine(y));
            }
        }
        let between = cross.iter().sum::<f64>() / cross.len() as f64;
        assert!(within_a > between, "{within_a} vs {between}");
        assert!(within_b > between, "{within_b} vs {between}");
    }

    #[test]
    fn timbre_reuse_gap_is_antisymmetric() {
        let x = unit(&[1.0, 0.1]);
        let y = unit(&[0.2, 1.0]);
        let set1 = vec![x.clone(), x.clone(), y.clone()];
        let set2 = vec![x, y.clone(), y];
        let fwd = timbre_reuse_report(&set1, &set2).unwrap();
        let rev = timbre_reuse_report(&set2, &set1).unwrap();
        assert_abs_diff_eq!(fwd.gap, -rev.gap, epsilon = 1e-12);

        let same = timbre_reuse_report(&set1, &set1).unwrap();
        assert_abs_diff_eq!(same.gap, 0.0, epsilon = 1e-12);
    }

    fn pair(
        attribute: ProsodyAttribute,
        direction: Direction,
        before: ProsodyBin,
        after: ProsodyBin,
    ) -> ControllabilityPair {
        ControllabilityPair {
            attribute,
            direction,
            bin_before: before,
            bin_after: after,
        }
    }

    #[test]
    fn controllability_rates_and_empty_convention() {
        use ProsodyBin::*;
        let pairs = vec![
            pair(ProsodyAttribute::Pitch, Direction::Up, Normal, SlightlyHigh),
            pair(ProsodyAttribute::Pitch, Direction::Up, Normal, NoticeablyHigh),
            pair(ProsodyAttribute::Pitch, Direction::Up, Normal, Normal), // same bin: failure
            pair(ProsodyAttribute::Pitch, Direction::Up, SlightlyLow, SlightlyHigh),
            pair(ProsodyAttribute::Speed, Direction::Down, Normal, SlightlyLow),
        ];
        let rates = controllability(&pairs);
        assert_abs_diff_eq!(rates["pitch"], 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(rates["speed"], 1.0, epsilon = 1e-12);
        assert!(!rates.contains_key("energy"), "no pairs → absent, not 0");
    }

    #[test]
    fn judgment_invariant_enforced() {
        let bad = JudgmentRecord {
            sample_id: "s1".into(),
            emotion: true,
            tone: false,
            pitch: true,
            energy: true,
            speed: true,
            overall: true,
        };
        let err = bad.validate().unwrap_err();
        assert!(err.to_string().contains("tone"));

        let ok = JudgmentRecord {
            overall: false,
            ..bad
        };
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn accuracy_reconstructs_hand_counts() {
        // 400 records, 314 emotion-true → emotion accuracy 0.785
        let records: Vec<JudgmentRecord> = (0..400)
            .map(|i| JudgmentRecord {
                sample_id: format!("s{i}"),
                emotion: i < 314,
                tone: true,
                pitch: true,
                energy: true,
                speed: true,
                overall: i < 314,
            })
            .collect();
        let acc = cot_accuracy(&records).unwrap();
        assert_abs_diff_eq!(acc.emotion, 0.785, epsilon = 1e-12);
        assert_abs_diff_eq!(acc.tone, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(acc.overall, 0.785, epsilon = 1e-12);

        // overall is bounded by every per-attribute accuracy
        for a in [acc.emotion, acc.tone, acc.pitch, acc.energy, acc.speed] {
            assert!(acc.overall <= a + 1e-12);
        }
    }

    #[test]
    fn majority_vote_and_shares() {
        let vote = |item: &str, rater: &str, choice: Choice| VoteRecord {
            item_id: item.into(),
            rater: rater.into(),
            choice,
        };
        // one item, raters A,A,B → counts as A
        let report = pairwise_preference(&[
            vote("i1", "r1", Choice::A),
            vote("i1", "r2", Choice::A),
            vote("i1", "r3", Choice::B),
        ])
        .unwrap();
        assert_eq!(report.n_items, 1);
        assert_abs_diff_eq!(report.share_a, 1.0, epsilon = 1e-12);

        // 20 items, 13 majority-A, 6 majority-B, 1 tie
        let mut votes = Vec::new();
        for i in 0..20 {
            let item = format!("item{i:02}");
            if i < 13 {
                votes.push(vote(&item, "r1", Choice::A));
            } else if i < 19 {
                votes.push(vote(&item, "r1", Choice::B));
            } else {
                votes.push(vote(&item, "r1", Choice::A));
                votes.push(vote(&item, "r2", Choice::B));
            }
        }
        let report = pairwise_preference(&votes).unwrap();
        assert_abs_diff_eq!(report.share_a, 0.65, epsilon = 1e-12);
        assert_abs_diff_eq!(report.share_b, 0.30, epsilon = 1e-12);
        assert_abs_diff_eq!(report.share_tie, 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(
            report.share_a + report.share_b + report.share_tie,
            1.0,
            epsilon = 1e-12
        );
    }
}
