use super::{
    asn_for_power, fit_cached, heatmap_export, point_label, run_experiment, AsnOptions, ExperimentConfig, Metric, ResultRow, ResultsTable,
    ValidationPoint,
};
use crate::scenario::{ScenarioKind, Truth};
use crate::{Error, RandomStream, Result};
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

/// Shipped configurations at published Monte Carlo sizes.
pub const CANNED: &[(&str, &str)] = &[
    ("musec", include_str!("../../configs/musec.toml")),
    ("known-sigma", include_str!("../../configs/known-sigma.toml")),
    ("unknown-sigma", include_str!("../../configs/unknown-sigma.toml")),
    ("behrens-fisher", include_str!("../../configs/behrens-fisher.toml")),
];

pub fn canned(name: &str) -> Result<ExperimentConfig> {
    let (_, text) = CANNED.iter().find(|(n, _)| *n == name).ok_or_else(|| Error::Usage(format!("no canned config named {name:?}")))?;
    ExperimentConfig::from_toml(text)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exhibit {
    T1,
    T2,
    T3,
    T4,
    T5,
    T6,
    F1,
}

impl FromStr for Exhibit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "T1" => Exhibit::T1,
            "T2" => Exhibit::T2,
            "T3" => Exhibit::T3,
            "T4" => Exhibit::T4,
            "T5" => Exhibit::T5,
            "T6" => Exhibit::T6,
            "F1" => Exhibit::F1,
            _ => return Err(Error::Usage(format!("unknown exhibit {s:?}; expected one of T1..T6, F1"))),
        })
    }
}

fn published(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn binary(pi_p: f64, pi_t: f64, values: &[(&str, f64)]) -> ValidationPoint {
    ValidationPoint { truth: Truth::Binary { pi_p, pi_t }, published: published(values) }
}

fn normal(mu: f64, sigma: f64, values: &[(&str, f64)]) -> ValidationPoint {
    ValidationPoint { truth: Truth::Normal { mu, sigma }, published: published(values) }
}

/// SSR design variants with their published rates (null rows at
/// 0.17..0.37, then Δ = 0.12, 0.13, 0.14 at π_p = 0.27).
fn ssr_configs() -> Result<Vec<ExperimentConfig>> {
    type Rates = [(f64, f64, f64); 8];
    let designs: [(f64, f64, Rates); 3] = [
        (
            0.8,
            0.005,
            [
                (0.051, 0.051, 0.050),
                (0.051, 0.050, 0.050),
                (0.050, 0.051, 0.050),
                (0.050, 0.050, 0.050),
                (0.051, 0.051, 0.051),
                (0.948, 0.891, 0.933),
                (0.976, 0.913, 0.955),
                (0.989, 0.927, 0.963),
            ],
        ),
        (
            0.75,
            0.001,
            [
                (0.049, 0.051, 0.052),
                (0.049, 0.050, 0.050),
                (0.051, 0.051, 0.052),
                (0.050, 0.050, 0.050),
                (0.051, 0.051, 0.052),
                (0.889, 0.844, 0.871),
                (0.930, 0.872, 0.900),
                (0.953, 0.893, 0.922),
            ],
        ),
        (
            0.75,
            0.005,
            [
                (0.051, 0.051, 0.051),
                (0.050, 0.051, 0.051),
                (0.050, 0.050, 0.050),
                (0.051, 0.051, 0.051),
                (0.051, 0.050, 0.051),
                (0.929, 0.872, 0.908),
                (0.962, 0.897, 0.934),
                (0.979, 0.912, 0.949),
            ],
        ),
    ];
    let base = canned("musec")?;
    let laws = [(0.17, 0.17), (0.22, 0.22), (0.27, 0.27), (0.32, 0.32), (0.37, 0.37), (0.27, 0.39), (0.27, 0.40), (0.27, 0.41)];
    designs
        .iter()
        .map(|(cep, gamma, rates)| {
            let mut c = base.clone();
            c.name = format!("ssr-cep{cep}-gamma{gamma}");
            if let ScenarioKind::AdaptiveBinomial { design, .. } = &mut c.scenario.kind {
                design.cep_target = *cep;
                design.gamma = *gamma;
            }
            c.points = laws
                .iter()
                .zip(rates)
                .map(|(&(p, t), &(dnn, incta, bm))| binary(p, t, &[("dnn", dnn), ("incta", incta), ("bm", bm)]))
                .collect();
            c.validate()?;
            Ok(c)
        })
        .collect()
}

/// One fit per (n, σ, μ1) row; published rows give (DNN, z-test) power.
fn known_sigma_configs() -> Result<Vec<ExperimentConfig>> {
    let rows =
        [(50, 1.0, 0.233, 0.500, 0.500), (50, 1.0, 0.414, 0.900, 0.899), (150, 2.0, 0.269, 0.500, 0.500), (150, 2.0, 0.478, 0.901, 0.900)];
    let base = canned("known-sigma")?;
    rows.iter()
        .enumerate()
        .map(|(i, &(n, sigma, mu1, dnn, z))| {
            let mut c = base.clone();
            c.name = format!("known-sigma-n{n}-mu{mu1}");
            c.seed = base.seed + i as u64;
            c.scenario.kind = ScenarioKind::NormalKnownSigma { mu0: 0.0, mu1, sigma, n };
            c.points = vec![normal(0.0, sigma, &[("dnn", 0.05), ("z-test", 0.05)]), normal(mu1, sigma, &[("dnn", dnn), ("z-test", z)])];
            c.validate()?;
            Ok(c)
        })
        .collect()
}

fn unknown_sigma_configs() -> Result<Vec<ExperimentConfig>> {
    let n100 = canned("unknown-sigma")?;
    let mut n200 = n100.clone();
    n200.name = "unknown-sigma-n200".into();
    n200.seed = n100.seed + 1;
    if let ScenarioKind::NormalUnknownSigma { n, .. } = &mut n200.scenario.kind {
        *n = 200;
    }
    let rows = [(1.0, 0.207, 0.898, 0.898), (1.5, 0.310, 0.898, 0.898), (2.0, 0.414, 0.897, 0.898)];
    n200.points = rows
        .iter()
        .flat_map(|&(sigma, mu, dnn, t)| {
            [normal(0.0, sigma, &[("dnn", 0.05), ("t-test", 0.05)]), normal(mu, sigma, &[("dnn", dnn), ("t-test", t)])]
        })
        .collect();
    n200.validate()?;
    Ok(vec![n100, n200])
}

/// Configs behind an exhibit, at published sizes.
pub fn exhibit_configs(exhibit: Exhibit) -> Result<Vec<ExperimentConfig>> {
    match exhibit {
        Exhibit::T1 | Exhibit::T2 | Exhibit::F1 => Ok(vec![canned("musec")?]),
        Exhibit::T3 => ssr_configs(),
        Exhibit::T4 => known_sigma_configs(),
        Exhibit::T5 => unknown_sigma_configs(),
        Exhibit::T6 => Ok(vec![canned("behrens-fisher")?]),
    }
}

/// Runs the named exhibit with every Monte Carlo size multiplied by
/// `scale`, reporting published values next to reproduced ones. With an
/// output directory, fitted tests are cached and tables written there.
pub fn reproduce(exhibit: Exhibit, scale: f64, output_dir: Option<&Path>) -> Result<ResultsTable> {
    let mut table = ResultsTable::default();
    for config in exhibit_configs(exhibit)? {
        let mut config = config.scaled(scale)?;
        config.output_dir = output_dir.map(Path::to_path_buf);
        match exhibit {
            Exhibit::T2 => table.extend(asn_table(&config)?),
            Exhibit::F1 => table.extend(heatmap_table(&config, scale, output_dir)?),
            _ => table.extend(run_experiment(&config)?.table),
        }
    }
    if let Some(dir) = output_dir {
        std::fs::create_dir_all(dir)?;
        table.write_csv(&dir.join(format!("{exhibit:?}.csv")))?;
    }
    Ok(table)
}

fn asn_table(config: &ExperimentConfig) -> Result<ResultsTable> {
    let published = [
        (0.12, [("dnn", 242.0), ("incta", 389.0), ("bm", 284.0)]),
        (0.13, [("dnn", 189.0), ("incta", 272.0), ("bm", 203.0)]),
        (0.14, [("dnn", 152.0), ("incta", 198.0), ("bm", 158.0)]),
    ];
    let (test, _) = fit_cached(config)?;
    let mut table = ResultsTable::default();
    for (delta, values) in published {
        let alt = Truth::Binary { pi_p: 0.27, pi_t: 0.27 + delta };
        for out in asn_for_power(&test, config, &AsnOptions::new(alt, 0.9))? {
            if !out.reached {
                log::warn!("{}: 90% power not reached at n2_max {} (power {:.3})", out.method, out.n2_max, out.power);
            }
            let published = values.iter().find(|(m, _)| *m == out.method).map(|(_, v)| *v);
            let row = |metric, value, se, published| ResultRow {
                experiment: "T2".into(),
                point: format!("{} n2_max={}", point_label(&alt), out.n2_max),
                method: out.method.clone(),
                metric,
                value,
                se,
                reps: out.reps,
                published,
            };
            let asn = if out.reached { out.asn } else { f64::NAN };
            table.rows.push(row(Metric::Asn, asn, out.asn_se, published));
            table.rows.push(row(Metric::Power, out.power, super::rate_se(out.power, out.reps), Some(0.9)));
        }
    }
    Ok(table)
}

fn heatmap_table(config: &ExperimentConfig, scale: f64, output_dir: Option<&Path>) -> Result<ResultsTable> {
    let (test, _) = fit_cached(config)?;
    let reps = ((2000.0 * scale).round() as usize).max(50);
    let bm = config.comparators.iter().find_map(|c| match c {
        super::Comparator::Bm { level } => Some(*level),
        _ => None,
    });
    let stream = RandomStream::new(config.seed, 0).labeled("heatmap");
    let mut table = ResultsTable::default();
    for (name, truth) in [("null", Truth::Binary { pi_p: 0.27, pi_t: 0.27 }), ("alt", Truth::Binary { pi_p: 0.27, pi_t: 0.40 })] {
        let map = heatmap_export(&test, truth, reps, bm, &stream.labeled(name))?;
        if let Some(dir) = output_dir {
            std::fs::create_dir_all(dir)?;
            map.write_csv(&dir.join(format!("F1-{name}.csv")))?;
        }
        let mut push = |point: String, method: &str, value: f64| {
            table.rows.push(ResultRow {
                experiment: "F1".into(),
                point,
                method: method.into(),
                metric: Metric::RejectGivenCell,
                value,
                se: super::rate_se(value, reps),
                reps,
                published: None,
            });
        };
        let diagonal = |f: &dyn Fn(&super::HeatmapCell) -> f64| (0..=map.n1).map(|k| f(map.cell(k, k))).fold(0.0, f64::max);
        let corner = map.cell(60, 10);
        push(format!("{} diagonal max", point_label(&truth)), "dnn", diagonal(&|c| c.dnn));
        push(format!("{} diagonal max", point_label(&truth)), "incta", diagonal(&|c| c.incta));
        push(format!("{} cell x_t1=60 x_p1=10", point_label(&truth)), "dnn", corner.dnn);
        push(format!("{} cell x_t1=60 x_p1=10", point_label(&truth)), "incta", corner.incta);
        if let Some(b) = corner.bm {
            push(format!("{} diagonal max", point_label(&truth)), "bm", diagonal(&|c| c.bm.unwrap_or(0.0)));
            push(format!("{} cell x_t1=60 x_p1=10", point_label(&truth)), "bm", b);
        }
    }
    Ok(table)
}
