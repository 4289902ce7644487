//! Empirical CDFs of rate and position error across schemes and seeds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_tracking, SchemeId, TrackingLog};
use crate::error::{Error, Result};
use crate::scenario::ScenarioConfig;

/// Empirical distribution of a sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cdf {
    /// Finite samples in ascending order.
    pub sorted: Vec<f64>,
}

impl Cdf {
    /// Build from samples; non-finite samples are dropped.
    pub fn new(samples: impl IntoIterator<Item = f64>) -> Self {
        let mut sorted: Vec<f64> = samples.into_iter().filter(|x| x.is_finite()).collect();
        sorted.sort_by(f64::total_cmp);
        Self { sorted }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// `F(x) = #{samples <= x} / n` (0 for an empty set).
    pub fn eval(&self, x: f64) -> f64 {
        if self.sorted.is_empty() {
            return 0.0;
        }
        self.sorted.partition_point(|&s| s <= x) as f64 / self.sorted.len() as f64
    }

    /// Smallest sample `x` with `F(x) >= p`, for `p` in `(0, 1]`.
    pub fn quantile(&self, p: f64) -> Option<f64> {
        let n = self.sorted.len();
        if n == 0 {
            return None;
        }
        let idx = ((p.clamp(0.0, 1.0) * n as f64).ceil() as usize).clamp(1, n) - 1;
        Some(self.sorted[idx])
    }

    /// Step points `(x_i, i / n)`.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        self.sorted
            .iter()
            .enumerate()
            .map(|(i, &x)| (x, (i + 1) as f64 / n))
            .collect()
    }

    pub fn max(&self) -> Option<f64> {
        self.sorted.last().copied()
    }
}

/// BS layout of a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Every configured BS cooperates.
    MultiBs,
    /// Only the serving BS senses.
    SingleBs,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Self::MultiBs => "multi_bs",
            Self::SingleBs => "single_bs",
        }
    }
}

/// Metric of a [`CdfTable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    SumRate,
    PositionError,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Self::SumRate => "sum_rate",
            Self::PositionError => "position_error",
        }
    }
}

/// CDF of one metric for one scheme and layout, pooled over TTSs and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfTable {
    pub variant: Variant,
    pub scheme: SchemeId,
    pub metric: Metric,
    pub cdf: Cdf,
}

/// Output of [`compare_schemes`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeComparison {
    pub seeds: Vec<u64>,
    pub tables: Vec<CdfTable>,
    /// Flagged TTS count per (variant, scheme), summed over seeds.
    pub flagged: Vec<(Variant, SchemeId, usize)>,
}

impl SchemeComparison {
    pub fn get(&self, variant: Variant, scheme: SchemeId, metric: Metric) -> Option<&Cdf> {
        self.tables
            .iter()
            .find(|t| t.variant == variant && t.scheme == scheme && t.metric == metric)
            .map(|t| &t.cdf)
    }
}

/// Run every scheme on every seed, for all BSs and for the serving BS alone,
/// and pool the per-TTS sum rates and position errors into CDFs.
pub fn compare_schemes(
    config: &ScenarioConfig,
    schemes: &[SchemeId],
    seeds: &[u64],
) -> Result<SchemeComparison> {
    if seeds.is_empty() {
        return Err(Error::ConfigParse(
            "compare_schemes needs at least one seed".into(),
        ));
    }
    let single = config
        .with_bs_subset(&[config.serving_bs])
        .ok_or_else(|| Error::ConfigParse("serving BS index out of range".into()))?;
    let layouts = [
        (Variant::MultiBs, config.clone()),
        (Variant::SingleBs, single),
    ];
    let cells: Vec<(Variant, &ScenarioConfig, SchemeId, u64)> = layouts
        .iter()
        .flat_map(|(v, cfg)| {
            schemes
                .iter()
                .flat_map(move |&s| seeds.iter().map(move |&seed| (*v, cfg, s, seed)))
        })
        .collect();
    let logs: Vec<(Variant, SchemeId, TrackingLog)> = cells
        .into_par_iter()
        .map(|(v, cfg, s, seed)| run_tracking(cfg, s, seed).map(|log| (v, s, log)))
        .collect::<Result<_>>()?;
    let mut tables = Vec::new();
    let mut flagged = Vec::new();
    for (variant, _) in &layouts {
        for &scheme in schemes {
            let runs: Vec<&TrackingLog> = logs
                .iter()
                .filter(|(v, s, _)| v == variant && *s == scheme)
                .map(|(_, _, l)| l)
                .collect();
            let records = || runs.iter().flat_map(|l| l.records.iter());
            tables.push(CdfTable {
                variant: *variant,
                scheme,
                metric: Metric::SumRate,
                cdf: Cdf::new(records().map(|r| r.sum_rate)),
            });
            tables.push(CdfTable {
                variant: *variant,
                scheme,
                metric: Metric::PositionError,
                cdf: Cdf::new(records().map(|r| r.position_error)),
            });
            flagged.push((*variant, scheme, runs.iter().map(|l| l.flagged()).sum()));
        }
    }
    Ok(SchemeComparison {
        seeds: seeds.to_vec(),
        tables,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_basics() {
        let c = Cdf::new([3.0, 1.0, f64::NAN, 2.0, 2.0]);
        assert_eq!(c.sorted, vec![1.0, 2.0, 2.0, 3.0]);
        assert_eq!(c.eval(0.5), 0.0);
        assert_eq!(c.eval(2.0), 0.75);
        assert_eq!(c.eval(10.0), 1.0);
        assert_eq!(c.quantile(0.5), Some(2.0));
        assert_eq!(c.quantile(1.0), Some(3.0));
        assert_eq!(c.quantile(0.01), Some(1.0));
        assert_eq!(Cdf::new([]).quantile(0.5), None);
    }

    #[test]
    fn comparison_has_both_layouts() {
        let mut cfg = ScenarioConfig::desk();
        cfg.horizon = 3.0 * cfg.tts_duration;
        let cmp =
            compare_schemes(&cfg, &[SchemeId::NonoptEkf, SchemeId::FeedbackEkf], &[0, 1]).unwrap();
        assert_eq!(cmp.tables.len(), 8);
        let c = cmp
            .get(Variant::SingleBs, SchemeId::NonoptEkf, Metric::SumRate)
            .unwrap();
        assert_eq!(c.len(), 6);
        assert!(compare_schemes(&cfg, &[SchemeId::NonoptEkf], &[]).is_err());
    }
}
