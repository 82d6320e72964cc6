//! Statistical checks of the generated workload.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use sttl_core::scenario::{gamma, sample_coverage, weibull_scale_from_rate, Placement, ScenarioConfig};
use sttl_core::trace::{GapSampler, WeibullGaps};
use sttl_core::{generate_trace, Horizon};

fn scenario(range: f64, zeta: Placement) -> ScenarioConfig {
    ScenarioConfig {
        comm_range: range,
        zeta,
        ..ScenarioConfig::default()
    }
}

#[test]
fn uniform_coverage_frequencies() {
    let n = 200_000;
    for (range, mean_size) in [(FRAC_1_SQRT_2, PI / 2.0), (1.0, PI)] {
        let cfg = scenario(range, Placement::Uniform);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut hits = [0u64; 4];
        let mut total = 0u64;
        for _ in 0..n {
            let c = sample_coverage(&cfg, 0, &mut rng).unwrap();
            for b in c.iter() {
                hits[b] += 1;
            }
            total += c.len() as u64;
        }
        let p = PI * range * range / 4.0;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        for h in hits {
            assert!((h as f64 / n as f64 - p).abs() < 3.0 * se, "r = {range}");
        }
        assert!((total as f64 / n as f64 / mean_size - 1.0).abs() < 0.01);
    }
}

#[test]
fn zeta_at_uniform_rate_matches_uniform_placement() {
    // Joint coverage patterns, 2 x 16 contingency table.
    let n = 100_000;
    let mut counts = [[0u64; 16]; 2];
    for (row, zeta) in [Placement::Uniform, Placement::Heterogeneous { zeta: PI / 8.0 }].into_iter().enumerate() {
        let cfg = scenario(FRAC_1_SQRT_2, zeta);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + row as u64);
        for i in 0..n {
            counts[row][sample_coverage(&cfg, i % cfg.num_files, &mut rng).unwrap().bits() as usize] += 1;
        }
    }
    let mut stat = 0.0;
    let mut cells = 0;
    for k in 0..16 {
        let col = (counts[0][k] + counts[1][k]) as f64;
        if col == 0.0 {
            continue;
        }
        cells += 1;
        for row in counts {
            let expected = col / 2.0;
            stat += (row[k] as f64 - expected).powi(2) / expected;
        }
    }
    let p = 1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat);
    assert!(p > 0.01, "chi-square {stat} over {cells} cells, p = {p}");
}

#[test]
fn weibull_gap_means() {
    let n = 200_000;
    for shape in [0.5, 0.6, 1.0] {
        let scale = weibull_scale_from_rate(shape, 1.0).unwrap();
        let gaps = WeibullGaps::new(shape, &[scale]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mean = (0..n).map(|_| gaps.gap(0, &mut rng)).sum::<f64>() / n as f64;
        let cv2 = gamma(1.0 + 2.0 / shape) / gamma(1.0 + 1.0 / shape).powi(2) - 1.0;
        let se = (cv2 / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 4.0 * se, "k = {shape}: mean {mean}");
    }
}

#[test]
fn per_file_counts_follow_rates() {
    let cfg = ScenarioConfig::default();
    let rates = cfg.file_rates().unwrap();
    let horizon = 10.0;
    let cv2 = gamma(1.0 + 2.0 / cfg.weibull_shape) / gamma(1.0 + 1.0 / cfg.weibull_shape).powi(2) - 1.0;
    // Expected excess over rate * time for a renewal process started at 0.
    let transient = (cv2 - 1.0) / 2.0;
    let trace = generate_trace(&cfg, Horizon::Time(horizon), &mut ChaCha8Rng::seed_from_u64(2024)).unwrap();
    let mut counts = vec![0usize; cfg.num_files];
    for r in trace.requests() {
        counts[r.file] += 1;
    }
    for (f, (&c, &rate)) in counts.iter().zip(&rates).enumerate() {
        let expected = rate * horizon + transient;
        let sigma = (cv2 * rate * horizon).sqrt();
        assert!((c as f64 - expected).abs() <= 3.0 * sigma, "file {f}: {c} vs {expected} +- {sigma}");
    }
    let total = trace.len() as f64;
    assert!((total - 1000.0).abs() < 3.0 * (cv2 * 1000.0).sqrt() + 20.0 * transient);
}

#[test]
fn trace_links_are_consistent() {
    let cfg = scenario(1.0, Placement::Heterogeneous { zeta: 0.9 });
    let trace = generate_trace(&cfg, Horizon::Requests(5_000), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let r = trace.requests();
    assert!(r.windows(2).all(|w| w[1].time > w[0].time));
    for (i, q) in r.iter().enumerate() {
        if let Some(n) = q.next {
            assert_eq!(r[n].file, q.file);
            assert_eq!(q.gap, Some(r[n].time - q.time));
            assert!(r[i + 1..n].iter().all(|m| m.file != q.file));
        }
    }
    for f in 0..cfg.num_files {
        assert!(r.iter().filter(|q| q.file == f && q.is_last_for_file()).count() <= 1);
    }
}

#[test]
fn heterogeneous_placement_favours_associated_sbs() {
    let cfg = scenario(FRAC_1_SQRT_2, Placement::Heterogeneous { zeta: 0.9 });
    let trace = generate_trace(&cfg, Horizon::Requests(20_000), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let hits = trace.requests().iter().filter(|r| r.coverage.contains(cfg.associated_sbs(r.file))).count();
    let p = hits as f64 / trace.len() as f64;
    assert!((p - 0.9).abs() < 3.0 * (0.09f64 / trace.len() as f64).sqrt());
}
