//! Configurations shipped with the runner.

const PRESETS: &[(&str, &str)] = &[
    ("tiny", include_str!("../presets/tiny.toml")),
    ("desk-fig4", include_str!("../presets/desk-fig4.toml")),
    ("desk-fig5", include_str!("../presets/desk-fig5.toml")),
    ("fig3", include_str!("../presets/fig3.toml")),
    ("fig4", include_str!("../presets/fig4.toml")),
    ("fig5", include_str!("../presets/fig5.toml")),
    ("fig5-c2", include_str!("../presets/fig5-c2.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|&(n, _)| n)
}

pub fn get(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|&&(n, _)| n == name).map(|&(_, text)| text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    #[test]
    fn all_presets_parse() {
        for name in names() {
            let cfg = ExperimentConfig::parse(get(name).unwrap(), &[]).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(cfg.name, name);
        }
    }

    #[test]
    fn full_scale_settings() {
        let cfg = ExperimentConfig::parse(get("fig3").unwrap(), &[]).unwrap();
        assert_eq!((cfg.num_files, cfg.num_sbs, cfg.num_updates), (20, 4, 2));
        assert_eq!((cfg.weibull_shape, cfg.zipf_alpha, cfg.aggregate_rate), (0.6, 0.7, 100.0));
        assert_eq!((cfg.update_period, cfg.cache_capacity, cfg.update_cost), (0.5, 4.0, 0.05));
        assert_eq!((cfg.episodes, cfg.anneal_episodes), (6000, 1000));
        let cfg = ExperimentConfig::parse(get("fig5-c2").unwrap(), &[]).unwrap();
        assert_eq!((cfg.cache_capacity, cfg.update_cost), (2.0, 0.1));
    }
}
