//! Seeded synthetic longitudinal cohorts with planted progression structure.
//!
//! Each subject carries a latent (memory, cognition) decline pair growing
//! linearly at zone-specific rates; observed features are non-negative
//! mixtures of the latents by feature group plus truncated Gaussian noise,
//! and the visit diagnosis comes from thresholds on the latent sum. The
//! planted zone of every subject is written to a ground-truth sidecar so the
//! recovered clustering can be scored.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cohort::{
    ClinicalRecord, Cohort, ColumnDescriptor, ColumnKind, Diagnosis, FeatureGroup, RawValue, Sex,
};
use crate::error::{Error, Result};
use crate::gmm::Zone;

/// Latent decline per 12 months.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoneRates {
    pub memory: f64,
    pub cognition: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgeModel {
    pub mean: f64,
    pub sd: f64,
}

/// Planted label of a subject: the diagnosis group for controls, the
/// progression zone for patients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantedZone {
    Control,
    Low,
    Moderate,
    High,
}

impl PlantedZone {
    pub fn token(self) -> &'static str {
        match self {
            PlantedZone::Control => "control",
            PlantedZone::Low => "low",
            PlantedZone::Moderate => "moderate",
            PlantedZone::High => "high",
        }
    }

    pub fn from_token(tok: &str) -> Option<Self> {
        match tok {
            "control" => Some(PlantedZone::Control),
            "low" => Some(PlantedZone::Low),
            "moderate" => Some(PlantedZone::Moderate),
            "high" => Some(PlantedZone::High),
            _ => None,
        }
    }

    pub fn as_zone(self) -> Option<Zone> {
        match self {
            PlantedZone::Control => None,
            PlantedZone::Low => Some(Zone::Low),
            PlantedZone::Moderate => Some(Zone::Moderate),
            PlantedZone::High => Some(Zone::High),
        }
    }
}

/// Generator parameters. Proportions are over baseline diagnosis groups;
/// MCI subjects split between the low and moderate zones, dementia subjects
/// plant the high zone.
#[derive(Debug, Clone)]
pub struct CohortSpec {
    pub n_subjects: usize,
    /// Baseline (control, MCI, dementia) fractions; must sum to 1.
    pub proportions: [f64; 3],
    /// (low, moderate, high) decline rates, strictly increasing in both
    /// latents.
    pub zone_rates: [ZoneRates; 3],
    pub noise_sd: f64,
    /// P(apoe4 = 0 | 1 | 2) for control, low, moderate, high.
    pub apoe4_probs: [[f64; 3]; 4],
    /// Probability that an MCI or dementia subject reverts one stage.
    pub reversion_fraction: f64,
    /// Age distribution per (control, MCI, dementia) group.
    pub ages: [AgeModel; 3],
    pub female_fraction: f64,
    /// Feature counts per (memory, cognition, function, other) group.
    pub n_features: [usize; 4],
    /// How many of the `other` features are categorical.
    pub n_categorical_other: usize,
    /// Per-cell probability of masking a feature value.
    pub missing_rate: f64,
    /// Latent sum below this is Control.
    pub mci_threshold: f64,
    /// Latent sum at or above this is Dementia.
    pub dementia_threshold: f64,
    pub seed: u64,
}

impl CohortSpec {
    /// Default profile for the 24-month horizon cohort.
    pub fn default_m24(seed: u64) -> Self {
        CohortSpec {
            n_subjects: 453,
            proportions: [0.30, 0.48, 0.22],
            zone_rates: [
                ZoneRates { memory: 0.06, cognition: 0.08 },
                ZoneRates { memory: 0.55, cognition: 0.60 },
                ZoneRates { memory: 1.30, cognition: 1.40 },
            ],
            noise_sd: 0.30,
            apoe4_probs: [
                [0.70, 0.25, 0.05],
                [0.60, 0.35, 0.05],
                [0.50, 0.35, 0.15],
                [0.30, 0.35, 0.35],
            ],
            reversion_fraction: 0.02,
            ages: [
                AgeModel { mean: 72.89, sd: 6.06 },
                AgeModel { mean: 71.61, sd: 7.49 },
                AgeModel { mean: 72.92, sd: 8.11 },
            ],
            female_fraction: 0.4591,
            n_features: [60, 60, 50, 48],
            n_categorical_other: 3,
            missing_rate: 0.05,
            mci_threshold: 2.0,
            dementia_threshold: 4.4,
            seed,
        }
    }

    /// Default profile for the 48-month horizon cohort.
    pub fn default_m48(seed: u64) -> Self {
        CohortSpec {
            n_subjects: 248,
            ages: [
                AgeModel { mean: 72.18, sd: 6.63 },
                AgeModel { mean: 71.36, sd: 6.67 },
                AgeModel { mean: 70.34, sd: 7.42 },
            ],
            female_fraction: 0.4959,
            ..Self::default_m24(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 {
            return Err(Error::InvalidSpec("n_subjects must be positive".into()));
        }
        let psum: f64 = self.proportions.iter().sum();
        if self.proportions.iter().any(|p| *p < 0.0) || (psum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSpec(format!(
                "group proportions must be non-negative and sum to 1, got {:?}",
                self.proportions
            )));
        }
        let [low, moderate, high] = self.zone_rates;
        let ordered = low.memory < moderate.memory
            && moderate.memory < high.memory
            && low.cognition < moderate.cognition
            && moderate.cognition < high.cognition
            && low.memory >= 0.0
            && low.cognition >= 0.0;
        if !ordered {
            return Err(Error::InvalidSpec(
                "zone rates must satisfy low < moderate < high in both latents".into(),
            ));
        }
        if !(self.noise_sd > 0.0) {
            return Err(Error::InvalidSpec("noise_sd must be positive".into()));
        }
        for probs in &self.apoe4_probs {
            let s: f64 = probs.iter().sum();
            if probs.iter().any(|p| *p < 0.0) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidSpec(format!("apoe4 probabilities {probs:?} must sum to 1")));
            }
        }
        if !(0.0..=0.1).contains(&self.reversion_fraction) {
            return Err(Error::InvalidSpec("reversion_fraction must lie in [0, 0.1]".into()));
        }
        if !(0.0..=0.5).contains(&self.missing_rate) {
            return Err(Error::InvalidSpec("missing_rate must lie in [0, 0.5]".into()));
        }
        if !(0.0..=1.0).contains(&self.female_fraction) {
            return Err(Error::InvalidSpec("female_fraction must lie in [0, 1]".into()));
        }
        if self.ages.iter().any(|a| a.mean <= 0.0 || a.sd <= 0.0) {
            return Err(Error::InvalidSpec("age models need positive mean and sd".into()));
        }
        if self.n_features[0] == 0 || self.n_features[1] == 0 {
            return Err(Error::InvalidSpec(
                "need at least one memory and one cognition feature".into(),
            ));
        }
        if self.n_categorical_other > self.n_features[3] {
            return Err(Error::InvalidSpec(
                "n_categorical_other exceeds the `other` feature count".into(),
            ));
        }
        if !(self.mci_threshold > 0.0 && self.dementia_threshold > self.mci_threshold) {
            return Err(Error::InvalidSpec(format!(
                "thresholds ordering violated: need 0 < {} < {}",
                self.mci_threshold, self.dementia_threshold
            )));
        }
        // Controls drift at 0.3x the low-zone rate (up to 1.25x jitter);
        // their band top plus four visit steps must stay below the MCI
        // threshold.
        let control_top = 0.875 * self.mci_threshold;
        let drift = 4.0 * 0.3 * 1.25 * (low.memory + low.cognition);
        if control_top + drift >= self.mci_threshold {
            return Err(Error::InvalidSpec(
                "control aging drift would cross the MCI threshold; lower the low-zone rates".into(),
            ));
        }
        Ok(())
    }

    fn gap(&self) -> f64 {
        self.dementia_threshold - self.mci_threshold
    }
}

/// Ground-truth sidecar row.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRecord {
    pub subject_id: String,
    pub planted_zone: PlantedZone,
    pub m0: f64,
    pub c0: f64,
    pub m_rate: f64,
    pub c_rate: f64,
    pub reverter: bool,
}

#[derive(Debug, Clone, Copy)]
struct FeatureDef {
    loading_m: f64,
    loading_c: f64,
    categorical: bool,
}

fn draw_category(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let mut target = rng.random::<f64>();
    for (i, p) in probs.iter().enumerate() {
        if target < *p {
            return i;
        }
        target -= p;
    }
    probs.len() - 1
}

fn truncated_normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let dist = Normal::new(mean, sd).expect("valid normal");
    dist.sample(rng).clamp(lo, hi)
}

pub const VISIT_MONTHS: [u32; 4] = [0, 12, 24, 48];

/// Generate a cohort with its ground-truth sidecar, deterministically from
/// the spec seed.
pub fn generate_cohort(spec: &CohortSpec) -> Result<(Cohort, Vec<TruthRecord>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Feature definitions: group loadings scaled per feature. Memory and
    // cognition features carry 10% cross-talk; function and other measures
    // track both latents without dominating either axis.
    let group_loadings = [(0.9, 0.1), (0.1, 0.9), (0.5, 0.5), (0.3, 0.3)];
    let mut schema = Vec::new();
    let mut defs = Vec::new();
    for (g, group) in FeatureGroup::ALL.iter().enumerate() {
        let prefix = match group {
            FeatureGroup::Memory => "mem",
            FeatureGroup::Cognition => "cog",
            FeatureGroup::Function => "fun",
            FeatureGroup::Other => "oth",
        };
        let n_cat = if *group == FeatureGroup::Other { spec.n_categorical_other } else { 0 };
        let n_numeric = spec.n_features[g] - n_cat;
        for i in 0..spec.n_features[g] {
            let categorical = i >= n_numeric;
            let scale = rng.random_range(0.6..1.4);
            let (lm, lc) = group_loadings[g];
            let name = if categorical {
                format!("{prefix}_cat{:03}", i - n_numeric + 1)
            } else {
                format!("{prefix}_{:03}", i + 1)
            };
            schema.push(ColumnDescriptor {
                name,
                kind: if categorical { ColumnKind::Categorical } else { ColumnKind::Numeric },
                group: *group,
            });
            defs.push(FeatureDef { loading_m: lm * scale, loading_c: lc * scale, categorical });
        }
    }

    let gap = spec.gap();
    let theta1 = spec.mci_threshold;
    let theta2 = spec.dementia_threshold;
    let band_sd = gap / 16.0;
    let band_half = 0.146 * gap;
    let low_center = theta1 + 0.25 * gap;
    let moderate_center = theta1 + 0.75 * gap;
    let high_center = theta2 + 0.25 * gap;
    let [low_rates, moderate_rates, high_rates] = spec.zone_rates;
    let control_rates = ZoneRates { memory: 0.3 * low_rates.memory, cognition: 0.3 * low_rates.cognition };

    let cat_tokens = ["A", "B", "C"];
    let cat_probs = [0.5, 0.3, 0.2];
    let id_width = spec.n_subjects.to_string().len().max(4);

    let mut records = Vec::new();
    let mut truth = Vec::new();

    for s in 0..spec.n_subjects {
        let subject_id = format!("S{:0width$}", s + 1, width = id_width);
        let group = draw_category(&mut rng, &spec.proportions); // 0 control, 1 mci, 2 dementia
        let age_model = spec.ages[group];
        let age = truncated_normal(&mut rng, age_model.mean, age_model.sd, 45.0, 95.0);
        let sex = if rng.random::<f64>() < spec.female_fraction { Sex::F } else { Sex::M };
        let reverter = group != 0 && rng.random::<f64>() < spec.reversion_fraction;

        let (planted, rates, start_sum, drop_sum) = match (group, reverter) {
            (0, _) => {
                // Controls sit low in the space; age drives most of their
                // depth so the older control cluster lands nearer the
                // patient zones.
                let z = ((age - age_model.mean) / age_model.sd).clamp(-2.5, 2.5);
                let base = truncated_normal(
                    &mut rng,
                    0.50 * theta1,
                    0.07 * theta1,
                    0.30 * theta1,
                    0.70 * theta1,
                );
                let shifted = (base + 0.14 * theta1 * z).clamp(0.15 * theta1, 0.875 * theta1);
                (PlantedZone::Control, control_rates, shifted, 0.0)
            }
            (1, false) => {
                let (zone, center) = if rng.random::<f64>() < 0.5 {
                    (PlantedZone::Low, low_center)
                } else {
                    (PlantedZone::Moderate, moderate_center)
                };
                let rates = if zone == PlantedZone::Low { low_rates } else { moderate_rates };
                let start = truncated_normal(&mut rng, center, band_sd, center - band_half, center + band_half);
                (zone, rates, start, 0.0)
            }
            (1, true) => {
                // MCI -> control reverter: starts just above the MCI
                // threshold and drops below it after month 12.
                let start = rng.random_range(theta1 + 0.02 * gap..theta1 + 0.08 * gap);
                (PlantedZone::Low, low_rates, start, 0.6 * gap)
            }
            (2, false) => {
                let start = truncated_normal(
                    &mut rng,
                    high_center,
                    band_sd,
                    high_center - band_half,
                    high_center + band_half,
                );
                (PlantedZone::High, high_rates, start, 0.0)
            }
            _ => {
                // Dementia -> MCI reverter: just above the dementia
                // threshold, slow rates, one-step drop after month 12.
                let start = rng.random_range(theta2 + 0.02 * gap..theta2 + 0.08 * gap);
                (PlantedZone::High, low_rates, start, 0.5 * gap)
            }
        };

        // Split the latent sum between memory and cognition. The spread plus
        // independent rate jitter keeps the two latents from collapsing onto
        // one axis; both stay Gaussian so each zone remains a single blob.
        let rho = truncated_normal(&mut rng, 0.5, 0.10, 0.25, 0.75);
        let m0 = start_sum * rho;
        let c0 = start_sum * (1.0 - rho);
        let rates = ZoneRates {
            memory: rates.memory * truncated_normal(&mut rng, 1.0, 0.10, 0.75, 1.25),
            cognition: rates.cognition * truncated_normal(&mut rng, 1.0, 0.10, 0.75, 1.25),
        };
        let apoe_idx = match planted {
            PlantedZone::Control => 0,
            PlantedZone::Low => 1,
            PlantedZone::Moderate => 2,
            PlantedZone::High => 3,
        };
        let apoe4 = draw_category(&mut rng, &spec.apoe4_probs[apoe_idx]) as u8;

        truth.push(TruthRecord {
            subject_id: subject_id.clone(),
            planted_zone: planted,
            m0,
            c0,
            m_rate: rates.memory,
            c_rate: rates.cognition,
            reverter,
        });

        for &month in &VISIT_MONTHS {
            let step = month as f64 / 12.0;
            let dropped = reverter && month >= 24;
            let m_t = (m0 + rates.memory * step - if dropped { drop_sum * rho } else { 0.0 }).max(0.0);
            let c_t = (c0 + rates.cognition * step - if dropped { drop_sum * (1.0 - rho) } else { 0.0 }).max(0.0);
            let latent_sum = m_t + c_t;
            let diagnosis = if latent_sum < theta1 {
                Diagnosis::Control
            } else if latent_sum < theta2 {
                Diagnosis::Mci
            } else {
                Diagnosis::Dementia
            };

            let mut features = Vec::with_capacity(defs.len());
            for def in &defs {
                let value = if def.categorical {
                    RawValue::Categorical(cat_tokens[draw_category(&mut rng, &cat_probs)].to_string())
                } else {
                    let noise = Normal::new(0.0, spec.noise_sd).unwrap().sample(&mut rng);
                    RawValue::Numeric((def.loading_m * m_t + def.loading_c * c_t + noise).max(0.0))
                };
                let masked = rng.random::<f64>() < spec.missing_rate;
                features.push(if masked { RawValue::Missing } else { value });
            }
            let apoe_missing = rng.random::<f64>() < spec.missing_rate;

            records.push(ClinicalRecord {
                subject_id: subject_id.clone(),
                visit_month: month,
                diagnosis,
                age: round2(age + step),
                sex,
                apoe4_count: if apoe_missing { None } else { Some(apoe4) },
                features,
            });
        }
    }

    let cohort = Cohort::new(schema, records)?;
    Ok((cohort, truth))
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Write the sidecar: `subject_id,planted_zone,m0,c0,m_rate,c_rate,reverter`.
pub fn write_ground_truth(truth: &[TruthRecord], path: &Path) -> Result<()> {
    let mut out = String::from("subject_id,planted_zone,m0,c0,m_rate,c_rate,reverter\n");
    for t in truth {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            t.subject_id,
            t.planted_zone.token(),
            t.m0,
            t.c0,
            t.m_rate,
            t.c_rate,
            t.reverter
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_ground_truth(path: &Path) -> Result<Vec<TruthRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 7 {
            return Err(Error::Parse { line: i + 1, msg: "expected 7 sidecar fields".into() });
        }
        let planted = PlantedZone::from_token(parts[1]).ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: format!("unknown planted zone `{}`", parts[1]),
        })?;
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse { line: i + 1, msg: format!("bad number `{s}`") })
        };
        out.push(TruthRecord {
            subject_id: parts[0].to_string(),
            planted_zone: planted,
            m0: num(parts[2])?,
            c0: num(parts[3])?,
            m_rate: num(parts[4])?,
            c_rate: num(parts[5])?,
            reverter: parts[6] == "true",
        });
    }
    if out.is_empty() {
        return Err(Error::Parse { line: 0, msg: "empty ground-truth sidecar".into() });
    }
    Ok(out)
}

/// Agreement between the pipeline's clustering and the planted structure.
#[derive(Debug, Clone, Copy)]
pub struct PlantingReport {
    /// Best-label-matching agreement between GMM zones and planted zones over
    /// the clustered subjects.
    pub zone_agreement: f64,
    /// Fraction of planted-High subjects whose progression score ranks in the
    /// top tercile of the clustered population.
    pub high_top_tercile: Option<f64>,
}

/// Score pipeline outputs against the sidecar. `clustered` carries, for every
/// subject the mixture assigned, its GMM zone and progression score.
pub fn verify_planting(
    truth: &[TruthRecord],
    clustered: &[(String, Zone, f64)],
) -> Result<PlantingReport> {
    if clustered.is_empty() {
        return Err(Error::Domain("no clustered subjects to verify".into()));
    }
    let by_id: std::collections::HashMap<&str, &TruthRecord> =
        truth.iter().map(|t| (t.subject_id.as_str(), t)).collect();
    let planted: Vec<PlantedZone> = clustered
        .iter()
        .map(|(id, _, _)| {
            by_id
                .get(id.as_str())
                .map(|t| t.planted_zone)
                .ok_or_else(|| Error::Schema(format!("subject `{id}` missing from the ground-truth sidecar")))
        })
        .collect::<Result<_>>()?;

    // Best matching over the 6 permutations of (low, moderate, high).
    let zones = [Zone::Low, Zone::Moderate, Zone::High];
    let perms: [[usize; 3]; 6] =
        [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut best = 0usize;
    for perm in &perms {
        let mut hits = 0usize;
        for ((_, gmm_zone, _), planted_zone) in clustered.iter().zip(&planted) {
            let mapped = zones.iter().position(|z| z == gmm_zone).map(|i| zones[perm[i]]);
            if let (Some(mapped), Some(true_zone)) = (mapped, planted_zone.as_zone()) {
                if mapped == true_zone {
                    hits += 1;
                }
            }
        }
        best = best.max(hits);
    }
    let zone_agreement = best as f64 / clustered.len() as f64;

    // Rank by score descending; top tercile membership of planted-High.
    let mut order: Vec<usize> = (0..clustered.len()).collect();
    order.sort_by(|&a, &b| clustered[b].2.partial_cmp(&clustered[a].2).unwrap());
    let tercile = clustered.len().div_ceil(3);
    let top: std::collections::HashSet<usize> = order[..tercile].iter().copied().collect();
    let high_ids: Vec<usize> = planted
        .iter()
        .enumerate()
        .filter(|(_, p)| **p == PlantedZone::High)
        .map(|(i, _)| i)
        .collect();
    let high_top_tercile = if high_ids.is_empty() {
        None
    } else {
        let in_top = high_ids.iter().filter(|i| top.contains(i)).count();
        Some(in_top as f64 / high_ids.len() as f64)
    };

    Ok(PlantingReport { zone_agreement, high_top_tercile })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::write_cohort_csv;

    fn small_spec(seed: u64) -> CohortSpec {
        CohortSpec {
            n_subjects: 60,
            n_features: [6, 6, 4, 4],
            n_categorical_other: 1,
            ..CohortSpec::default_m24(seed)
        }
    }

    #[test]
    fn default_profiles_match_the_cohort_sizes() {
        assert_eq!(CohortSpec::default_m24(1).n_subjects, 453);
        assert_eq!(CohortSpec::default_m48(1).n_subjects, 248);
        let total: usize = CohortSpec::default_m24(1).n_features.iter().sum();
        assert_eq!(total, 218);
    }

    #[test]
    fn generation_is_byte_identical_for_a_fixed_seed() {
        let spec = small_spec(11);
        let dir = tempfile::tempdir().unwrap();
        let (cohort_a, truth_a) = generate_cohort(&spec).unwrap();
        let (cohort_b, truth_b) = generate_cohort(&spec).unwrap();
        assert_eq!(truth_a, truth_b);
        let pa = dir.path().join("a.csv");
        let pb = dir.path().join("b.csv");
        write_cohort_csv(&cohort_a, &pa).unwrap();
        write_cohort_csv(&cohort_b, &pb).unwrap();
        assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    }

    #[test]
    fn group_counts_stay_within_three_sigma() {
        let spec = CohortSpec {
            n_subjects: 1000,
            proportions: [0.3, 0.4, 0.3],
            n_features: [4, 4, 2, 2],
            n_categorical_other: 0,
            ..CohortSpec::default_m24(5)
        };
        let (cohort, _) = generate_cohort(&spec).unwrap();
        let mut baseline = [0usize; 3];
        for rec in cohort.records.iter().filter(|r| r.visit_month == 0) {
            baseline[match rec.diagnosis {
                Diagnosis::Control => 0,
                Diagnosis::Mci => 1,
                Diagnosis::Dementia => 2,
            }] += 1;
        }
        for (count, p) in baseline.iter().zip(&spec.proportions) {
            let expectation = spec.n_subjects as f64 * p;
            let sigma = (spec.n_subjects as f64 * p * (1.0 - p)).sqrt();
            assert!(
                (*count as f64 - expectation).abs() <= 3.0 * sigma,
                "count {count} vs expectation {expectation}"
            );
        }
    }

    #[test]
    fn zero_reversion_fraction_never_improves_diagnoses() {
        let spec = CohortSpec { reversion_fraction: 0.0, ..small_spec(7) };
        let (cohort, truth) = generate_cohort(&spec).unwrap();
        assert!(truth.iter().all(|t| !t.reverter));
        for subject in cohort.subject_order() {
            let mut severities: Vec<(u32, u8)> = cohort
                .records
                .iter()
                .filter(|r| r.subject_id == subject)
                .map(|r| (r.visit_month, r.diagnosis.severity()))
                .collect();
            severities.sort_by_key(|(m, _)| *m);
            for pair in severities.windows(2) {
                assert!(pair[1].1 >= pair[0].1, "subject {subject} reverted");
            }
        }
    }

    #[test]
    fn non_reverter_latents_are_monotone() {
        let (_, truth) = generate_cohort(&small_spec(13)).unwrap();
        for t in truth.iter().filter(|t| !t.reverter) {
            assert!(t.m_rate >= 0.0 && t.c_rate >= 0.0);
        }
    }

    #[test]
    fn reverters_improve_exactly_one_stage_after_month_12() {
        let spec = CohortSpec { reversion_fraction: 0.1, ..small_spec(17) };
        let (cohort, truth) = generate_cohort(&spec).unwrap();
        let reverters: Vec<&TruthRecord> = truth.iter().filter(|t| t.reverter).collect();
        assert!(!reverters.is_empty(), "seed produced no reverters");
        for t in reverters {
            let diag = |month: u32| {
                cohort
                    .records
                    .iter()
                    .find(|r| r.subject_id == t.subject_id && r.visit_month == month)
                    .unwrap()
                    .diagnosis
            };
            let before = diag(12);
            let after = diag(24);
            assert_eq!(before.severity() - 1, after.severity(), "subject {}", t.subject_id);
        }
    }

    #[test]
    fn zone_rate_ordering_orders_month_24_latents() {
        let spec = CohortSpec { n_subjects: 400, ..small_spec(19) };
        let (_, truth) = generate_cohort(&spec).unwrap();
        let latent_at_24 = |t: &TruthRecord| t.m0 + t.c0 + (t.m_rate + t.c_rate) * 2.0;
        let mean_of = |zone: PlantedZone| {
            let xs: Vec<f64> = truth
                .iter()
                .filter(|t| t.planted_zone == zone && !t.reverter)
                .map(latent_at_24)
                .collect();
            xs.iter().sum::<f64>() / xs.len() as f64
        };
        let low = mean_of(PlantedZone::Low);
        let moderate = mean_of(PlantedZone::Moderate);
        let high = mean_of(PlantedZone::High);
        assert!(low < moderate && moderate < high, "{low} {moderate} {high}");
    }

    #[test]
    fn ground_truth_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let (_, truth) = generate_cohort(&small_spec(23)).unwrap();
        let path = dir.path().join("truth.csv");
        write_ground_truth(&truth, &path).unwrap();
        let loaded = load_ground_truth(&path).unwrap();
        assert_eq!(loaded, truth);
    }

    #[test]
    fn truth_agrees_with_itself() {
        let (_, truth) = generate_cohort(&small_spec(29)).unwrap();
        let clustered: Vec<(String, Zone, f64)> = truth
            .iter()
            .filter_map(|t| {
                t.planted_zone
                    .as_zone()
                    .map(|z| (t.subject_id.clone(), z, t.m0 + t.c0))
            })
            .collect();
        let report = verify_planting(&truth, &clustered).unwrap();
        assert_eq!(report.zone_agreement, 1.0);
    }

    #[test]
    fn shuffled_balanced_labels_agree_about_a_third() {
        // 3 balanced zones, assignment decoupled from the planted label.
        let zones = [PlantedZone::Low, PlantedZone::Moderate, PlantedZone::High];
        let n = 900;
        let truth: Vec<TruthRecord> = (0..n)
            .map(|i| TruthRecord {
                subject_id: format!("S{i:04}"),
                planted_zone: zones[i % 3],
                m0: 0.0,
                c0: 0.0,
                m_rate: 0.0,
                c_rate: 0.0,
                reverter: false,
            })
            .collect();
        let gmm_zones = [Zone::Low, Zone::Moderate, Zone::High];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let clustered: Vec<(String, Zone, f64)> = truth
            .iter()
            .map(|t| (t.subject_id.clone(), gmm_zones[rng.random_range(0..3)], 0.0))
            .collect();
        let report = verify_planting(&truth, &clustered).unwrap();
        assert!(
            (report.zone_agreement - 1.0 / 3.0).abs() < 0.06,
            "agreement {}",
            report.zone_agreement
        );
    }

    #[test]
    fn missing_sidecar_subject_is_an_error() {
        let (_, truth) = generate_cohort(&small_spec(31)).unwrap();
        let clustered = vec![("GHOST".to_string(), Zone::Low, 0.0)];
        assert!(matches!(
            verify_planting(&truth, &clustered).unwrap_err(),
            Error::Schema(_)
        ));
    }

    #[test]
    fn infeasible_specs_are_rejected() {
        let mut spec = small_spec(1);
        spec.proportions = [0.5, 0.5, 0.5];
        assert!(matches!(generate_cohort(&spec).unwrap_err(), Error::InvalidSpec(_)));

        let mut spec = small_spec(1);
        spec.zone_rates[2].memory = 0.0; // high below moderate
        assert!(matches!(generate_cohort(&spec).unwrap_err(), Error::InvalidSpec(_)));

        let mut spec = small_spec(1);
        spec.dementia_threshold = spec.mci_threshold; // ordering violated
        assert!(matches!(generate_cohort(&spec).unwrap_err(), Error::InvalidSpec(_)));
    }

    #[test]
    fn masked_cells_appear_at_roughly_the_requested_rate() {
        let spec = CohortSpec { missing_rate: 0.2, ..small_spec(37) };
        let (cohort, _) = generate_cohort(&spec).unwrap();
        let total: usize = cohort.records.iter().map(|r| r.features.len()).sum();
        let missing: usize = cohort
            .records
            .iter()
            .map(|r| r.features.iter().filter(|f| f.is_missing()).count())
            .sum();
        let rate = missing as f64 / total as f64;
        assert!((rate - 0.2).abs() < 0.03, "rate {rate}");
    }
}
