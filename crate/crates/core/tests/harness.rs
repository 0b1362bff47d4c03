use nptest::harness::{
    asn_for_power, canned, exhibit_configs, fit_cached, heatmap_export, point_label, run_experiment, AsnOptions, Comparator, Exhibit,
    ExperimentConfig, Metric, ResultsTable, CANNED,
};
use nptest::scenario::Truth;
use nptest::{Error, RandomStream};

fn tiny(exhibit: Exhibit) -> ExperimentConfig {
    let mut c = exhibit_configs(exhibit).unwrap().remove(0).with_sizes(300, 300, 400, 500);
    c.statistic_train.epochs = 1;
    c.critical_train.epochs = 5;
    c
}

#[test]
fn canned_configs_round_trip_through_toml() {
    for (name, _) in CANNED {
        let c = canned(name).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c, "{name}");
    }
    for e in [Exhibit::T3, Exhibit::T4, Exhibit::T5] {
        for c in exhibit_configs(e).unwrap() {
            assert_eq!(ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c, "{}", c.name);
        }
    }
}

#[test]
fn bad_scales_are_usage_errors() {
    let c = canned("behrens-fisher").unwrap();
    for s in [0.0, -0.5, 1.5, f64::NAN] {
        assert!(matches!(c.scaled(s), Err(Error::Usage(_))), "{s}");
    }
    let half = c.scaled(0.5).unwrap();
    assert_eq!(half.b_val, c.b_val / 2);
    assert_eq!(half.scenario.counts.b0, c.scenario.counts.b0 / 2);
}

#[test]
fn exhibit_ids() {
    assert_eq!("t4".parse::<Exhibit>().unwrap(), Exhibit::T4);
    assert_eq!("F1".parse::<Exhibit>().unwrap(), Exhibit::F1);
    assert!(matches!("T9".parse::<Exhibit>(), Err(Error::Usage(_))));
    assert_eq!(exhibit_configs(Exhibit::T4).unwrap().len(), 4);
    assert_eq!(exhibit_configs(Exhibit::T3).unwrap().len(), 3);
}

#[test]
fn mismatched_comparator_is_rejected() {
    let mut c = canned("behrens-fisher").unwrap();
    c.comparators.push(Comparator::Incta);
    assert!(matches!(c.validate(), Err(Error::Config(_))));
    let mut c = canned("musec").unwrap();
    c.comparators = vec![Comparator::Bm { level: 0.7 }];
    assert!(c.validate().is_err());
}

#[test]
fn point_outside_the_scenario_is_rejected() {
    let mut c = canned("behrens-fisher").unwrap();
    c.points[0].truth = Truth::Binary { pi_p: 0.3, pi_t: 0.3 };
    assert!(c.validate().is_err());
}

#[test]
fn fit_key_tracks_only_fit_inputs() {
    let c = canned("behrens-fisher").unwrap();
    let mut other = c.clone();
    other.name = "renamed".into();
    other.b_val += 1;
    other.points.truncate(1);
    assert_eq!(other.fit_key(), c.fit_key());
    assert_ne!(other.hash(), c.hash());
    let mut reseeded = c.clone();
    reseeded.seed += 1;
    assert_ne!(reseeded.fit_key(), c.fit_key());
    let mut resized = c.clone();
    resized.scenario.counts.b0 += 1;
    assert_ne!(resized.fit_key(), c.fit_key());
    let mut retrained = c.clone();
    retrained.critical_train.learning_rate *= 2.0;
    assert_ne!(retrained.fit_key(), c.fit_key());
}

#[test]
fn second_run_hits_the_cache_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(Exhibit::T4);
    c.output_dir = Some(dir.path().to_path_buf());
    let first = run_experiment(&c).unwrap();
    let second = run_experiment(&c).unwrap();
    assert!(!first.manifest.cache_hit);
    assert!(second.manifest.cache_hit);
    assert_eq!(first.table, second.table);
    assert_eq!(first.manifest.fit_key, c.fit_key());
    for suffix in ["csv", "config.toml", "manifest.json"] {
        assert!(dir.path().join(format!("{}.{suffix}", c.name)).exists(), "{suffix}");
    }
    let back = ResultsTable::read_csv(&dir.path().join(format!("{}.csv", c.name))).unwrap();
    assert_eq!(back.rows.len(), first.table.rows.len());
    for (a, b) in back.rows.iter().zip(&first.table.rows) {
        assert_eq!((a.value.to_bits(), &a.method, a.metric), (b.value.to_bits(), &b.method, b.metric));
    }
    assert!(dir.path().join("cache").join(c.fit_key()).join("manifest.json").exists());
}

#[test]
fn unreadable_cache_entry_is_refit() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(Exhibit::T4);
    c.output_dir = Some(dir.path().to_path_buf());
    let entry = dir.path().join("cache").join(c.fit_key());
    std::fs::create_dir_all(&entry).unwrap();
    std::fs::write(entry.join("manifest.json"), "not json").unwrap();
    let (_, hit) = fit_cached(&c).unwrap();
    assert!(!hit);
    let (_, hit) = fit_cached(&c).unwrap();
    assert!(hit);
}

#[test]
fn table_rows_cover_every_point_and_comparator() {
    let c = tiny(Exhibit::T6);
    let t = run_experiment(&c).unwrap().table;
    for p in &c.points {
        let label = point_label(&p.truth);
        let null = matches!(p.truth, Truth::TwoNormal { mu_p, mu_t, .. } if mu_p == mu_t);
        let metric = if null { Metric::TypeI } else { Metric::Power };
        for method in ["dnn", "welch"] {
            let row = t.find(&label, method, metric).unwrap();
            assert!((0.0..=1.0).contains(&row.value));
            assert_eq!(row.reps, c.b_val);
        }
        let agree = t.find(&label, "welch", Metric::Agreement).unwrap();
        assert!((0.0..=1.0).contains(&agree.value));
    }
    assert!(t.render().contains("welch"));
}

#[test]
fn adaptive_asn_and_heatmap_shapes() {
    let c = tiny(Exhibit::T1);
    let run = run_experiment(&c).unwrap();
    let null = Truth::Binary { pi_p: 0.27, pi_t: 0.27 };
    let asn = run.table.find(&point_label(&null), "design", Metric::Asn).unwrap();
    assert!(asn.value >= 85.0 && asn.value <= 85.0 + 340.0);

    // a target of zero is met at the smallest cap
    let opts = AsnOptions::new(Truth::Binary { pi_p: 0.27, pi_t: 0.40 }, 0.0);
    let out = asn_for_power(&run.test, &c, &opts).unwrap();
    assert_eq!(out.len(), 3);
    for o in &out {
        assert!(o.reached);
        assert_eq!(o.n2_max, 21, "{}", o.method);
        assert!(o.asn >= 85.0 + 21.0 - 1e-9 && o.asn <= 85.0 + 21.0 + 1e-9);
    }
    let mut bad = opts.clone();
    bad.n2_cap = 10;
    assert!(asn_for_power(&run.test, &c, &bad).is_err());

    let map = heatmap_export(&run.test, null, 3, Some(0.033), &RandomStream::new(1, 0)).unwrap();
    assert_eq!(map.cells.len(), 86 * 86);
    let cell = map.cell(60, 10);
    assert_eq!((cell.x_t1, cell.x_p1), (60, 10));
    for cell in &map.cells {
        assert!((21..=340).contains(&cell.n2));
        assert!([cell.dnn, cell.incta, cell.bm.unwrap()].iter().all(|v| (0.0..=1.0).contains(v)));
    }
    assert!(heatmap_export(&run.test, null, 0, None, &RandomStream::new(1, 0)).is_err());
}

#[test]
fn heatmaps_need_an_adaptive_fit() {
    let run = run_experiment(&tiny(Exhibit::T4)).unwrap();
    let truth = Truth::Binary { pi_p: 0.3, pi_t: 0.3 };
    assert!(matches!(heatmap_export(&run.test, truth, 5, None, &RandomStream::new(1, 0)), Err(Error::Usage(_))));
}
