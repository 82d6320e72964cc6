/// Trailing mean over `window` points; the first points average the
/// available prefix.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window > 0, "window must be positive");
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, &v) in series.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= series[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ramp() {
        let ramp: Vec<f64> = (1..=1000).map(f64::from).collect();
        let ma = moving_average(&ramp, 500);
        assert_eq!(ma[999], 750.5);
        assert_eq!(ma[0], 1.0);
        assert_eq!(ma[9], 5.5);
    }

    #[test]
    fn window_one_is_identity() {
        let s = [3.0, -1.0, 2.5];
        assert_eq!(moving_average(&s, 1), s.to_vec());
    }

    proptest! {
        #[test]
        fn constant_series(c in -1e3f64..1e3, n in 1usize..600, w in 1usize..700) {
            for v in moving_average(&vec![c; n], w) {
                prop_assert!((v - c).abs() <= 1e-9 * c.abs().max(1.0));
            }
        }

        #[test]
        fn matches_direct_mean(s in proptest::collection::vec(-10f64..10.0, 1..80), w in 1usize..20) {
            let ma = moving_average(&s, w);
            for i in 0..s.len() {
                let lo = (i + 1).saturating_sub(w);
                let direct = s[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64;
                prop_assert!((ma[i] - direct).abs() < 1e-9);
            }
        }
    }
}
