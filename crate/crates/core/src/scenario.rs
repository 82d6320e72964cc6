//! Physical scenario: SBS placement on one unit grid square, file popularity,
//! per-file request rates and the coverage sets of requesting users.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Corners of the unit square, in SBS index order.
pub const SBS_POSITIONS: [(f64, f64); 4] = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];

/// Where requesting users are located.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Placement {
    /// Uniform over the square.
    Uniform,
    /// File `f` (1-based) is associated with SBS `(f mod B) + 1`; a user
    /// requesting it is within range of that SBS with probability `zeta`.
    Heterogeneous { zeta: f64 },
}

impl Serialize for Placement {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Placement::Uniform => s.serialize_str("uniform"),
            Placement::Heterogeneous { zeta } => s.serialize_f64(*zeta),
        }
    }
}

impl<'de> Deserialize<'de> for Placement {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Keyword(String),
            Value(f64),
        }
        match Repr::deserialize(d)? {
            Repr::Keyword(k) if k == "uniform" => Ok(Placement::Uniform),
            Repr::Keyword(k) => Err(serde::de::Error::custom(format!(
                "zeta must be a number in [0, 1] or \"uniform\", got {k:?}"
            ))),
            Repr::Value(zeta) => Ok(Placement::Heterogeneous { zeta }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_files: usize,
    pub num_sbs: usize,
    pub comm_range: f64,
    pub cache_capacity: f64,
    pub zipf_alpha: f64,
    pub weibull_shape: f64,
    pub aggregate_rate: f64,
    pub zeta: Placement,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_files: 20,
            num_sbs: 4,
            comm_range: FRAC_1_SQRT_2,
            cache_capacity: 4.0,
            zipf_alpha: 0.7,
            weibull_shape: 0.6,
            aggregate_rate: 100.0,
            zeta: Placement::Uniform,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.num_files == 0 {
            return fail("num_files must be positive".into());
        }
        if self.num_sbs == 0 || self.num_sbs > SBS_POSITIONS.len() {
            return fail(format!("num_sbs must be in 1..=4 (one grid square), got {}", self.num_sbs));
        }
        // Tolerate the decimal rendering of 1/sqrt(2).
        if !(self.comm_range >= FRAC_1_SQRT_2 - 1e-12 && self.comm_range <= 1.0) {
            return fail(format!("comm_range must be in [1/sqrt(2), 1], got {}", self.comm_range));
        }
        if !(self.cache_capacity >= 0.0) {
            return fail(format!("cache_capacity must be non-negative, got {}", self.cache_capacity));
        }
        if !(self.zipf_alpha >= 0.0) {
            return fail(format!("zipf_alpha must be non-negative, got {}", self.zipf_alpha));
        }
        if !(self.weibull_shape > 0.0 && self.weibull_shape <= 1.0) {
            return fail(format!("weibull_shape must be in (0, 1], got {}", self.weibull_shape));
        }
        if !(self.aggregate_rate > 0.0 && self.aggregate_rate.is_finite()) {
            return fail(format!("aggregate_rate must be positive, got {}", self.aggregate_rate));
        }
        if let Placement::Heterogeneous { zeta } = self.zeta {
            if !(0.0..=1.0).contains(&zeta) {
                return fail(format!("zeta must be in [0, 1], got {zeta}"));
            }
        }
        Ok(())
    }

    pub fn popularity(&self) -> Result<Vec<f64>> {
        zipf_popularity(self.num_files, self.zipf_alpha)
    }

    /// Request rate of each file, `p_f * aggregate_rate`.
    pub fn file_rates(&self) -> Result<Vec<f64>> {
        Ok(self.popularity()?.into_iter().map(|p| p * self.aggregate_rate).collect())
    }

    /// Weibull scale of each file's inter-request time.
    pub fn weibull_scales(&self) -> Result<Vec<f64>> {
        self.file_rates()?
            .into_iter()
            .map(|rate| weibull_scale_from_rate(self.weibull_shape, rate))
            .collect()
    }

    /// The SBS whose class file `file` (0-based) belongs to, 0-based.
    pub fn associated_sbs(&self, file: usize) -> usize {
        (file + 1) % self.num_sbs
    }
}

/// Zipf probability mass over files `1..=num_files`.
pub fn zipf_popularity(num_files: usize, alpha: f64) -> Result<Vec<f64>> {
    if num_files == 0 {
        return Err(invalid("zipf popularity needs at least one file"));
    }
    if !(alpha >= 0.0) {
        return Err(invalid(format!("zipf exponent must be non-negative, got {alpha}")));
    }
    let weights: Vec<f64> = (1..=num_files).map(|f| (f as f64).powf(-alpha)).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

/// Scale `lambda` such that Weibull(shape, lambda) has mean `1 / rate`.
pub fn weibull_scale_from_rate(shape: f64, rate: f64) -> Result<f64> {
    if !(shape > 0.0 && shape <= 1.0) {
        return Err(invalid(format!("weibull shape must be in (0, 1], got {shape}")));
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(invalid(format!("request rate must be positive, got {rate}")));
    }
    Ok(1.0 / (rate * gamma(1.0 + 1.0 / shape)))
}

/// Set of SBSs within range of a user, as a bitmask over SBS indices.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Coverage(u32);

impl Coverage {
    pub const EMPTY: Coverage = Coverage(0);

    pub fn from_bits(bits: u32) -> Self {
        Coverage(bits)
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        Coverage(indices.into_iter().fold(0, |acc, b| acc | (1 << b)))
    }

    /// All of `0..num_sbs`.
    pub fn full(num_sbs: usize) -> Self {
        Coverage::from_indices(0..num_sbs)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn contains(self, sbs: usize) -> bool {
        sbs < 32 && self.0 & (1 << sbs) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..32).filter(move |&b| self.contains(b))
    }

    pub fn insert(&mut self, sbs: usize) {
        self.0 |= 1 << sbs;
    }
}

impl fmt::Debug for Coverage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

fn distance_sq(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

/// SBSs within `range` of `point`.
pub fn coverage_at(point: (f64, f64), num_sbs: usize, range: f64) -> Coverage {
    let r2 = range * range;
    Coverage::from_indices((0..num_sbs).filter(|&b| distance_sq(point, SBS_POSITIONS[b]) <= r2))
}

fn uniform_point<R: RngCore + ?Sized>(rng: &mut R) -> (f64, f64) {
    (rng.random::<f64>(), rng.random::<f64>())
}

/// Draws a user position for a request of `file` (0-based) and returns the
/// SBSs within range.
pub fn sample_coverage<R: RngCore + ?Sized>(cfg: &ScenarioConfig, file: usize, rng: &mut R) -> Result<Coverage> {
    let point = sample_position(cfg, file, rng)?;
    Ok(coverage_at(point, cfg.num_sbs, cfg.comm_range))
}

pub fn sample_position<R: RngCore + ?Sized>(cfg: &ScenarioConfig, file: usize, rng: &mut R) -> Result<(f64, f64)> {
    match cfg.zeta {
        Placement::Uniform => Ok(uniform_point(rng)),
        Placement::Heterogeneous { zeta } => {
            if !(0.0..=1.0).contains(&zeta) {
                return Err(invalid(format!("zeta must be in [0, 1], got {zeta}")));
            }
            let anchor = SBS_POSITIONS[cfg.associated_sbs(file)];
            let r2 = cfg.comm_range * cfg.comm_range;
            let inside = rng.random::<f64>() < zeta;
            // Rejection against the unit square; both regions have
            // probability mass of at least 1 - pi/4.
            loop {
                let p = uniform_point(rng);
                if (distance_sq(p, anchor) <= r2) == inside {
                    return Ok(p);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn zipf_uniform_when_alpha_zero() {
        let p = zipf_popularity(20, 0.0).unwrap();
        assert!(p.iter().all(|&v| (v - 0.05).abs() < 1e-15));
    }

    #[test]
    fn zipf_two_files() {
        let p = zipf_popularity(2, 1.0).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zipf_head_matches_direct_sum() {
        // sum_{j=1}^{20} j^-0.7, summed in extended form by hand-rolled
        // Kahan compensation.
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for j in (1..=20).rev() {
            let y = (j as f64).powf(-0.7) - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        let p = zipf_popularity(20, 0.7).unwrap();
        assert!((p[0] - 1.0 / sum).abs() < 1e-14);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn zipf_rejects_bad_inputs() {
        assert!(zipf_popularity(0, 1.0).is_err());
        assert!(zipf_popularity(3, -0.1).is_err());
    }

    #[test]
    fn weibull_scale_values() {
        assert!((weibull_scale_from_rate(1.0, 0.5).unwrap() - 2.0).abs() < 1e-12);
        assert!((weibull_scale_from_rate(0.5, 1.0).unwrap() - 0.5).abs() < 1e-12);
        // Gamma(8/3) = 1.5045754882515...
        let expected = 1.0 / 1.504_575_488_251_556_4;
        assert!((weibull_scale_from_rate(0.6, 1.0).unwrap() - expected).abs() < 1e-10);
        assert!(weibull_scale_from_rate(0.0, 1.0).is_err());
        assert!(weibull_scale_from_rate(1.5, 1.0).is_err());
        assert!(weibull_scale_from_rate(0.6, 0.0).is_err());
    }

    #[test]
    fn file_rates_sum_to_aggregate() {
        let cfg = ScenarioConfig::default();
        let total: f64 = cfg.file_rates().unwrap().iter().sum();
        assert!((total / cfg.aggregate_rate - 1.0).abs() < 1e-9);
    }

    #[test]
    fn config_validation() {
        let ok = ScenarioConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            ScenarioConfig { comm_range: 0.5, ..ok.clone() },
            ScenarioConfig { comm_range: 1.1, ..ok.clone() },
            ScenarioConfig { num_sbs: 5, ..ok.clone() },
            ScenarioConfig { num_files: 0, ..ok.clone() },
            ScenarioConfig { weibull_shape: 1.2, ..ok.clone() },
            ScenarioConfig { zeta: Placement::Heterogeneous { zeta: 1.5 }, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn config_from_toml() {
        let cfg = ScenarioConfig::from_toml_str(
            r#"
            num_files = 5
            num_sbs = 4
            comm_range = 1.0
            cache_capacity = 2.0
            zipf_alpha = 0.7
            weibull_shape = 0.6
            aggregate_rate = 100.0
            zeta = 0.9
            seed = 7
            "#,
        )
        .unwrap();
        assert_eq!(cfg.zeta, Placement::Heterogeneous { zeta: 0.9 });
        let text = toml::to_string(&ScenarioConfig::default()).unwrap();
        assert!(text.contains("zeta = \"uniform\""));
        assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), ScenarioConfig::default());
        assert!(ScenarioConfig::from_toml_str(&format!("{text}\nbogus = 1\n")).is_err());
        assert!(ScenarioConfig::from_toml_str(&text.replace("\"uniform\"", "\"patchy\"")).is_err());
    }

    #[test]
    fn coverage_bitmask() {
        let c = Coverage::from_indices([0, 2]);
        assert_eq!(c.len(), 2);
        assert!(c.contains(2) && !c.contains(1));
        assert_eq!(c.iter().collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(Coverage::full(4).bits(), 0b1111);
        assert!(Coverage::EMPTY.is_empty());
    }

    #[test]
    fn center_of_square_is_covered_by_all_at_full_range() {
        assert_eq!(coverage_at((0.5, 0.5), 4, 1.0).len(), 4);
        assert_eq!(coverage_at((0.5, 0.5), 4, FRAC_1_SQRT_2 + 1e-12).len(), 4);
        assert_eq!(coverage_at((0.0, 0.0), 4, FRAC_1_SQRT_2).len(), 1);
    }

    #[test]
    fn full_zeta_forces_membership() {
        let cfg = ScenarioConfig {
            zeta: Placement::Heterogeneous { zeta: 1.0 },
            ..ScenarioConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for f in 0..20 {
            for _ in 0..50 {
                assert!(sample_coverage(&cfg, f, &mut rng).unwrap().contains(cfg.associated_sbs(f)));
            }
        }
        let never = ScenarioConfig {
            zeta: Placement::Heterogeneous { zeta: 0.0 },
            ..cfg
        };
        for _ in 0..50 {
            assert!(!sample_coverage(&never, 3, &mut rng).unwrap().contains(never.associated_sbs(3)));
        }
    }

    #[test]
    fn association_follows_file_modulo() {
        let cfg = ScenarioConfig::default();
        // 1-based file 4 -> class 0 -> SBS 1 (index 0); file 1 -> SBS 2.
        assert_eq!(cfg.associated_sbs(3), 0);
        assert_eq!(cfg.associated_sbs(0), 1);
        assert_eq!(cfg.associated_sbs(2), 3);
    }

    #[test]
    fn uniform_membership_rate_is_quarter_disc() {
        let cfg = ScenarioConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let hits = (0..n).filter(|_| sample_coverage(&cfg, 0, &mut rng).unwrap().contains(2)).count();
        let p = PI / 8.0;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!(((hits as f64 / n as f64) - p).abs() < 4.0 * se);
    }
}
