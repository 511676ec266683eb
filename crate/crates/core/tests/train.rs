use babynet_core::data::{
    generate_synthetic, patient_segments, AugmentPolicy, PatientRecord, Plane, SyntheticConfig, VideoTensor,
};
use babynet_core::gradcheck::{check_graph, GradCheckOptions};
use babynet_core::model::{Model, ModelConfig, Variant};
use babynet_core::train::*;
use babynet_core::{Error, Graph, Parameter, Tensor};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("P{i:03}")).collect()
}

#[test]
fn mse_examples() {
    let t = |v: &[f32]| Tensor::new(&[v.len(), 1], v.to_vec()).unwrap();
    assert_eq!(mse(&t(&[1.5, -2.0]), &t(&[1.5, -2.0])).unwrap(), 0.0);
    assert_eq!(mse(&t(&[2.0, 4.0]), &t(&[3.0, 3.0])).unwrap(), 1.0);
    assert!(matches!(mse(&t(&[1.0]), &t(&[1.0, 2.0])), Err(Error::Shape { .. })));
}

#[test]
fn mse_gradient_is_twice_the_residual_over_n() {
    let pred = Tensor::new(&[3, 1], vec![0.5, -1.0, 2.0]).unwrap();
    let target = Tensor::new(&[3, 1], vec![1.0, 1.0, 1.0]).unwrap();
    let mut g = Graph::new();
    let p = g.param(&pred);
    let t = g.constant(target.clone());
    let loss = g.mse_loss(p, t).unwrap();
    g.backward(loss).unwrap();
    let grad = g.grad(p).unwrap();
    for (i, g) in grad.iter().enumerate() {
        let expect = 2.0 * (pred.data()[i] - target.data()[i]) / 3.0;
        assert!((g - expect).abs() < 1e-6);
    }

    let mut params = vec![Parameter::new("pred", pred)];
    let report = check_graph(
        &mut params,
        |g, v| {
            let t = g.constant(target.clone());
            g.mse_loss(v[0], t)
        },
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
}

fn scalar_param(v: f32) -> Parameter {
    Parameter::new("theta", Tensor::full(&[3], v))
}

#[test]
fn adam_first_step_moves_by_the_learning_rate() {
    let mut p = vec![scalar_param(0.5)];
    p[0].tensor.accumulate_grad(&[1.0; 3]).unwrap();
    let mut adam = Adam::new(AdamConfig {
        weight_decay: 0.0,
        ..Default::default()
    });
    adam.step(&mut p, 1e-4).unwrap();
    for &v in p[0].tensor.data() {
        assert!((0.5 - v - 1e-4).abs() < 1e-7, "{v}");
    }
    assert_eq!(adam.step, 1);
}

#[test]
fn adam_without_gradient_signal_stays_put() {
    let mut p = vec![scalar_param(0.7)];
    p[0].tensor.accumulate_grad(&[0.0; 3]).unwrap();
    let mut adam = Adam::new(AdamConfig {
        weight_decay: 0.0,
        ..Default::default()
    });
    for _ in 0..5 {
        adam.step(&mut p, 0.1).unwrap();
    }
    assert!(p[0].tensor.data().iter().all(|&v| v == 0.7));
}

#[test]
fn adam_rejects_missing_gradients() {
    let mut p = vec![scalar_param(1.0)];
    let mut adam = Adam::new(AdamConfig::default());
    assert!(matches!(adam.step(&mut p, 1e-3), Err(Error::Empty(_))));
}

#[test]
fn adam_minimizes_a_parabola() {
    let mut p = vec![Parameter::new("theta", Tensor::scalar(1.0))];
    let mut adam = Adam::new(AdamConfig {
        weight_decay: 0.0,
        ..Default::default()
    });
    for _ in 0..200 {
        let theta = p[0].tensor.data()[0];
        p[0].tensor.clear_grad();
        p[0].tensor.accumulate_grad(&[2.0 * theta]).unwrap();
        adam.step(&mut p, 0.1).unwrap();
    }
    let theta = p[0].tensor.data()[0];
    assert!(theta.abs() < 0.01, "{theta}");
}

#[test]
fn adam_matches_a_scalar_reference_with_weight_decay() {
    let cfg = AdamConfig::default();
    let grads = [0.3f64, -1.2, 0.05, 2.0, -0.4];
    let (mut theta, mut m, mut v) = (0.8f64, 0.0f64, 0.0f64);
    let mut p = vec![Parameter::new("theta", Tensor::scalar(0.8))];
    let mut adam = Adam::new(cfg);
    for (t, g) in grads.iter().enumerate() {
        let lr = 0.01;
        let g_eff = g + cfg.weight_decay as f64 * theta;
        m = 0.9 * m + 0.1 * g_eff;
        v = 0.999 * v + 0.001 * g_eff * g_eff;
        let mh = m / (1.0 - 0.9f64.powi(t as i32 + 1));
        let vh = v / (1.0 - 0.999f64.powi(t as i32 + 1));
        theta -= lr * mh / (vh.sqrt() + 1e-8);

        p[0].tensor.clear_grad();
        p[0].tensor.accumulate_grad(&[*g as f32]).unwrap();
        adam.step(&mut p, lr as f32).unwrap();
        assert!((p[0].tensor.data()[0] as f64 - theta).abs() < 1e-6);
    }
}

#[test]
fn step_schedule_values() {
    let s = LrSchedule::default();
    assert_eq!(s.epochs, 200);
    assert_eq!(s.lr_at(0), 1e-4);
    assert_eq!(s.lr_at(159), 1e-4);
    assert!((s.lr_at(160) - 1e-5).abs() < 1e-12);
    assert_eq!(s.lr_at(199), s.lr_at(160));
    assert!((s.lr_at(320) - 1e-6).abs() < 1e-13);
}

proptest! {
    #[test]
    fn target_scaling_round_trips(ws in prop::collection::vec(2085.0f64..=4995.0, 1..40), w in 2085.0f64..=4995.0) {
        let s = TargetScaler::fit(&ws).unwrap();
        prop_assert!((s.inverse(s.transform(w)) - w).abs() < 1e-4);
        // and through f32, as used for training targets and predictions
        let z = s.transform(w) as f32;
        prop_assert!((s.inverse(z as f64) - w).abs() < 1e-3 * s.std.max(1.0));
    }
}

#[test]
fn scaler_fits_z_scores() {
    let s = TargetScaler::fit(&[3000.0, 4000.0]).unwrap();
    assert_eq!((s.mean, s.std), (3500.0, 500.0));
    assert_eq!(s.transform(4000.0), 1.0);
    assert_eq!(TargetScaler::fit(&[3100.0]).unwrap().std, 1.0);
    assert!(TargetScaler::fit(&[]).is_err());
}

#[test]
fn seventy_five_patients_make_five_folds_of_fifteen() {
    let all = ids(75);
    let a = grouped_kfold_split(&all, 5, 9).unwrap();
    assert_eq!(a.k(), 5);
    assert!(a.folds.iter().all(|f| f.len() == 15));
    let mut seen: Vec<&String> = a.folds.iter().flatten().collect();
    seen.sort();
    assert_eq!(seen, all.iter().collect::<Vec<_>>());
    assert_eq!(a, grouped_kfold_split(&all, 5, 9).unwrap());
    assert_ne!(a, grouped_kfold_split(&all, 5, 10).unwrap());
    for (k, fold) in a.folds.iter().enumerate() {
        let train = a.train_ids(k);
        assert_eq!(train.len(), 60);
        assert!(fold.iter().all(|id| !train.contains(id) && a.fold_of(id) == Some(k)));
    }
}

#[test]
fn fold_split_errors() {
    assert!(grouped_kfold_split(&ids(4), 5, 0).is_err());
    assert!(grouped_kfold_split(&ids(4), 1, 0).is_err());
    let mut dup = ids(6);
    dup[3] = dup[0].clone();
    assert!(grouped_kfold_split(&dup, 5, 0).is_err());
}

proptest! {
    #[test]
    fn folds_partition_every_cohort_size(n in 5usize..=100, seed in any::<u64>()) {
        let all = ids(n);
        let a = grouped_kfold_split(&all, 5, seed).unwrap();
        let sizes: Vec<usize> = a.folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for id in &all {
            prop_assert_eq!(a.folds.iter().filter(|f| f.contains(id)).count(), 1);
        }
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
    }
}

#[test]
fn metric_examples() {
    let m = evaluate_metrics(&[3000.0, 4000.0], &[3000.0, 4000.0]).unwrap();
    assert_eq!((m.mae, m.rmse, m.mape), (0.0, 0.0, 0.0));
    let m = evaluate_metrics(&[3000.0], &[3454.0]).unwrap();
    assert_eq!((m.mae, m.rmse), (454.0, 454.0));
    assert!((m.mape - 13.14).abs() < 5e-3);
    assert_eq!(m.abs_error_std, 0.0);
    assert!(evaluate_metrics(&[], &[]).is_err());
    assert!(evaluate_metrics(&[1.0], &[0.0]).is_err());
    assert!(evaluate_metrics(&[1.0, 2.0], &[1.0]).is_err());
}

/// Column-by-column computation as a spreadsheet would do it.
fn spreadsheet(preds: &[f64], targets: &[f64]) -> (f64, f64, f64, f64) {
    let n = preds.len() as f64;
    let mut abs_col = Vec::new();
    let (mut sum_abs, mut sum_sq, mut sum_pct) = (0.0, 0.0, 0.0);
    for i in 0..preds.len() {
        let err = preds[i] - targets[i];
        let abs = if err < 0.0 { -err } else { err };
        abs_col.push(abs);
        sum_abs += abs;
        sum_sq += err * err;
        sum_pct += abs / targets[i] * 100.0;
    }
    let mae = sum_abs / n;
    let var = abs_col.iter().map(|a| (a - mae) * (a - mae)).sum::<f64>() / n;
    (mae, (sum_sq / n).sqrt(), sum_pct / n, var.sqrt())
}

#[test]
fn metrics_match_a_spreadsheet_oracle() {
    use rand::Rng;
    let mut r = babynet_core::rng::seeded(20);
    let targets: Vec<f64> = (0..20).map(|_| r.gen_range(2085.0..4995.0)).collect();
    let preds: Vec<f64> = targets.iter().map(|t| t + r.gen_range(-600.0..600.0)).collect();
    let m = evaluate_metrics(&preds, &targets).unwrap();
    let (mae, rmse, mape, sd) = spreadsheet(&preds, &targets);
    assert!((m.mae - mae).abs() < 1e-6);
    assert!((m.rmse - rmse).abs() < 1e-6);
    assert!((m.mape - mape).abs() < 1e-6);
    assert!((m.abs_error_std - sd).abs() < 1e-6);
}

proptest! {
    #[test]
    fn rmse_dominates_mae(pairs in prop::collection::vec((0.0f64..6000.0, 1.0f64..6000.0), 1..50)) {
        let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let m = evaluate_metrics(&p, &t).unwrap();
        prop_assert!(m.mae >= 0.0);
        prop_assert!(m.rmse >= m.mae * (1.0 - 1e-12));
    }
}

fn table(ids: &[&str], values: &[f64]) -> Vec<(String, f64)> {
    ids.iter().map(|s| s.to_string()).zip(values.iter().copied()).collect()
}

#[test]
fn ensemble_examples_and_errors() {
    let a = table(&["A", "B"], &[3000.0, 3500.0]);
    assert_eq!(ensemble_average(&a, &a).unwrap(), a);
    let b = table(&["B", "A"], &[3700.0, 3400.0]);
    assert_eq!(ensemble_average(&a, &b).unwrap(), table(&["A", "B"], &[3200.0, 3600.0]));

    let err = ensemble_average(&a, &table(&["A", "B", "Z9"], &[1.0, 2.0, 3.0])).unwrap_err();
    assert!(err.to_string().contains("Z9"), "{err}");
    let err = ensemble_average(&a, &table(&["A"], &[1.0])).unwrap_err();
    assert!(err.to_string().contains('B'), "{err}");
    assert!(ensemble_average(&a, &table(&["A", "A"], &[1.0, 2.0])).is_err());
}

proptest! {
    #[test]
    fn ensemble_error_never_exceeds_the_mean_error(
        rows in prop::collection::vec((1000.0f32..6000.0, 1000.0f32..6000.0, 2085.0f32..4995.0), 1..30),
    ) {
        let names: Vec<String> = (0..rows.len()).map(|i| format!("P{i}")).collect();
        let a: Vec<_> = names.iter().cloned().zip(rows.iter().map(|r| r.0 as f64)).collect();
        let b: Vec<_> = names.iter().cloned().zip(rows.iter().map(|r| r.1 as f64)).collect();
        let ens = ensemble_average(&a, &b).unwrap();
        let mae = |xs: &[(String, f64)]| xs.iter().zip(&rows).map(|((_, x), r)| (x - r.2 as f64).abs()).sum::<f64>();
        for ((_, e), r) in ens.iter().zip(&rows) {
            let t = r.2 as f64;
            prop_assert!((e - t).abs() <= ((r.0 as f64 - t).abs() + (r.1 as f64 - t).abs()) / 2.0);
        }
        prop_assert!(mae(&ens) <= mae(&a).max(mae(&b)));
    }
}

#[test]
fn t_test_guards() {
    let a = [1.0, 2.0, 3.5];
    let same = paired_t_test(&a, &a).unwrap();
    assert_eq!((same.t, same.p), (0.0, 1.0));
    let shifted: Vec<f64> = a.iter().map(|x| x - 1.0).collect();
    assert!(matches!(paired_t_test(&a, &shifted), Err(Error::Degenerate(_))));
    assert!(paired_t_test(&[1.0], &[2.0]).is_err());
    assert!(paired_t_test(&[1.0, 2.0], &[2.0]).is_err());
}

#[test]
fn ten_pair_t_test_matches_an_independent_cdf() {
    let a = [7.1, 8.4, 6.2, 9.9, 7.7, 5.3, 8.8, 7.0, 6.5, 9.1];
    let b = [6.8, 7.9, 6.9, 8.7, 7.1, 5.6, 7.4, 6.1, 6.6, 8.0];
    let r = paired_t_test(&a, &b).unwrap();
    let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / 10.0;
    let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 9.0).sqrt();
    let t = mean / (sd / 10f64.sqrt());
    assert!((r.t - t).abs() < 1e-12);
    assert_eq!(r.df, 9.0);
    let dist = StudentsT::new(0.0, 1.0, 9.0).unwrap();
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    assert!((r.p - p).abs() < 1e-4, "{} vs {p}", r.p);
    assert!(r.p > 0.0 && r.p < 1.0);
}

proptest! {
    #[test]
    fn t_distribution_matches_reference(t in -40.0f64..40.0, df in 1u32..200) {
        let dist = StudentsT::new(0.0, 1.0, df as f64).unwrap();
        prop_assert!((student_t_cdf(t, df as f64) - dist.cdf(t)).abs() < 1e-6);
    }

    #[test]
    fn incomplete_beta_is_monotone_and_bounded(a in 0.1f64..50.0, b in 0.1f64..50.0, x in 0.0f64..1.0, dx in 0.0f64..0.1) {
        let lo = regularized_incomplete_beta(a, b, x);
        let hi = regularized_incomplete_beta(a, b, (x + dx).min(1.0));
        prop_assert!((0.0..=1.0).contains(&lo));
        prop_assert!(hi >= lo - 1e-12);
    }
}

#[test]
fn patient_mean_examples() {
    assert_eq!(mean_prediction(&[3454.0; 7]).unwrap(), 3454.0);
    assert_eq!(mean_prediction(&[3000.0, 4000.0]).unwrap(), 3500.0);
    assert!(mean_prediction(&[]).is_err());

    use rand::Rng;
    let mut r = babynet_core::rng::seeded(159);
    let values: Vec<f64> = (0..3 * 53).map(|_| r.gen_range(2000.0..5000.0)).collect();
    let mut total = 0.0;
    for v in &values {
        total += v;
    }
    assert!((mean_prediction(&values).unwrap() - total / 159.0).abs() < 1e-9);
}

fn tiny_patient(id: &str, weight: f32, frames: &[usize], seed: u64) -> PatientRecord {
    use rand::Rng;
    let mut r = babynet_core::rng::seeded(seed);
    let videos = frames
        .iter()
        .map(|&t| VideoTensor::new(Tensor::from_fn(&[t, 1, 16, 16], |_| r.gen()), Plane::Head).unwrap())
        .collect();
    PatientRecord::new(id, weight, videos).unwrap()
}

#[test]
fn patient_prediction_averages_every_segment() {
    let mut model = Model::build(ModelConfig::desk(Variant::RtmTpe)).unwrap();
    let warm = tiny_patient("W", 3000.0, &[16], 1);
    let segs = patient_segments(&warm, 8).unwrap();
    model.update_statistics(&stack_segments(&segs.iter().collect::<Vec<_>>()).unwrap()).unwrap();

    let scaler = TargetScaler {
        mean: 3400.0,
        std: 600.0,
    };
    let patient = tiny_patient("P1", 3100.0, &[17, 8, 24], 2);
    let segs = patient_segments(&patient, 8).unwrap();
    assert_eq!(segs.len(), 2 + 1 + 3);
    let mut total = 0.0;
    for s in &segs {
        let z = model.predict(&s.as_item().reshape(&[1, 1, 8, 16, 16]).unwrap()).unwrap().data()[0];
        total += scaler.inverse(z as f64);
    }
    let got = predict_patient(&model, &scaler, &patient).unwrap() as f64;
    assert!((got - total / 6.0).abs() < 1e-5 * total.abs() / 6.0, "{got}");

    let short = tiny_patient("P2", 3100.0, &[7, 5], 3);
    assert!(matches!(predict_patient(&model, &scaler, &short), Err(Error::Empty(_))));
}

#[test]
fn batches_never_leave_a_lone_clip() {
    let lens = |n, b| batch_ranges(n, b).iter().map(|r| r.len()).collect::<Vec<_>>();
    assert_eq!(lens(6, 2), [2, 2, 2]);
    assert_eq!(lens(7, 2), [2, 2, 3]);
    assert_eq!(lens(1, 2), [1]);
    assert_eq!(lens(5, 1), [1, 1, 1, 1, 1]);
    assert_eq!(lens(9, 4), [4, 5]);
    assert_eq!(lens(10, 4), [4, 4, 2]);
}

fn quick_config(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        schedule: LrSchedule {
            initial: 1e-3,
            epochs,
            ..Default::default()
        },
        seed,
        ..Default::default()
    }
}

fn quick_cohort(n: usize) -> Vec<PatientRecord> {
    let cfg = SyntheticConfig {
        frames_per_video: 8,
        ..SyntheticConfig::sized(n, 16, 16)
    };
    generate_synthetic(&cfg).unwrap()
}

#[test]
fn training_writes_one_loss_row_per_epoch_and_is_deterministic() {
    let cohort = quick_cohort(3);
    let run = |seed| {
        let mut model = Model::build(ModelConfig::desk(Variant::RtmTpe)).unwrap();
        let out = train(&mut model, &cohort, &quick_config(3, seed)).unwrap();
        (model, out)
    };
    let (m1, o1) = run(5);
    let (m2, o2) = run(5);
    assert_eq!(o1.losses.len(), 3);
    assert_eq!(o1.losses.iter().map(|l| l.epoch).collect::<Vec<_>>(), [0, 1, 2]);
    assert!(o1.losses.iter().all(|l| l.train_mse.is_finite() && l.lr == 1e-3));
    assert_eq!(o1, o2);
    assert_eq!(m1.params, m2.params);
    let (m3, o3) = run(6);
    assert_ne!(o1.losses, o3.losses);
    assert_ne!(m1.params, m3.params);
}

#[test]
fn training_rejects_empty_folds() {
    let mut model = Model::build(ModelConfig::desk(Variant::Base)).unwrap();
    assert!(matches!(train(&mut model, &[], &quick_config(1, 0)), Err(Error::Empty(_))));
    let short = tiny_patient("S", 3000.0, &[5], 0);
    assert!(matches!(train(&mut model, &[short], &quick_config(1, 0)), Err(Error::Empty(_))));
    let bad = TrainConfig {
        batch_size: 0,
        ..quick_config(1, 0)
    };
    let ok = tiny_patient("S", 3000.0, &[8], 0);
    assert!(matches!(train(&mut model, &[ok], &bad), Err(Error::Config(_))));
}

#[test]
fn augmentation_changes_the_training_trajectory() {
    let cohort = quick_cohort(2);
    let run = |augment: AugmentPolicy| {
        let mut model = Model::build(ModelConfig::desk(Variant::Base)).unwrap();
        let cfg = TrainConfig {
            augment,
            ..quick_config(2, 1)
        };
        train(&mut model, &cohort, &cfg).unwrap().losses
    };
    assert_ne!(run(AugmentPolicy::default()), run(AugmentPolicy::disabled()));
}

#[test]
fn raw_targets_train_on_grams() {
    let cohort = quick_cohort(2);
    let mut model = Model::build(ModelConfig::desk(Variant::Base)).unwrap();
    let cfg = TrainConfig {
        raw_targets: true,
        ..quick_config(1, 0)
    };
    let out = train(&mut model, &cohort, &cfg).unwrap();
    assert_eq!(out.scaler, TargetScaler::IDENTITY);
    // squared grams
    assert!(out.losses[0].train_mse > 1e6);
}

#[test]
fn cross_validation_predicts_each_patient_once() {
    let cohort = quick_cohort(5);
    let cfg = CvConfig {
        k: 5,
        seed: 3,
        model: ModelConfig::desk(Variant::Base),
        train: quick_config(1, 0),
    };
    let (report, folds) = run_cross_validation(&cohort, &cfg).unwrap();
    assert_eq!(folds.len(), 5);
    let mut seen: Vec<&str> = report.predictions.iter().map(|r| r.patient_id.as_str()).collect();
    seen.sort();
    assert_eq!(seen, ["P001", "P002", "P003", "P004", "P005"]);
    let assignment = assign_folds(&cohort, &cfg).unwrap();
    for row in &report.predictions {
        assert_eq!(assignment.fold_of(&row.patient_id), Some(row.fold));
        assert!(row.pred_g.is_finite());
    }
    let rebuilt = MetricsReport::from_predictions(report.predictions.clone()).unwrap();
    assert_eq!(rebuilt, report);
    assert_eq!(report.folds.len(), 5);
    let p: Vec<f64> = report.predictions.iter().map(|r| r.pred_g as f64).collect();
    let t: Vec<f64> = report.predictions.iter().map(|r| r.target_g as f64).collect();
    assert_eq!(report.overall, evaluate_metrics(&p, &t).unwrap());
}
