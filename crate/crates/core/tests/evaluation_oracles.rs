use fxcurve::curves::{CurveKind, CurveSeries, IntradayGrid};
use fxcurve::diagnostics::{autocorr_test, hetero_test};
use fxcurve::evalstat::{dm_test, mcs, Horizon, LossKind, LossSeries};
use fxcurve::fgarch::{business_dates, ou_error_curve, simulate, ErrorModel, ProjectedParams, SimulateOptions};
use fxcurve::risk::{backtest_independence, backtest_unbiasedness, Side, ViolationSeries};
use fxcurve::stats::rng_for;
use fxcurve::synth::{ar1_scores, curves_from_scores, orthonormal_functions};
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn losses(id: &str, v: Vec<f64>) -> LossSeries {
    LossSeries::new(id, Horizon::Interdaily, LossKind::Msfe, v)
}

#[test]
fn dm_power_against_mean_shift() {
    let dist = Normal::new(0.5, 1.0).unwrap();
    let mut rejections = 0;
    for r in 0..200 {
        let mut rng = rng_for(70 + r, 0);
        let a: Vec<f64> = (0..1000).map(|_| dist.sample(&mut rng)).collect();
        let b = vec![0.0; 1000];
        if dm_test(&losses("a", a), &losses("b", b), None).unwrap().statistic > 1.96 {
            rejections += 1;
        }
    }
    assert!(rejections >= 198, "{rejections}");
}

#[test]
fn mcs_keeps_only_dominant_model() {
    let noise = Normal::new(0.0, 0.2).unwrap();
    let mut alone = 0;
    for r in 0..20 {
        let mut rng = rng_for(300 + r, 0);
        let good: Vec<f64> = (0..500).map(|_| 1.0 + noise.sample(&mut rng)).collect();
        let bad: Vec<f64> = good.iter().map(|v| v + 0.3 + noise.sample(&mut rng)).collect();
        let worse: Vec<f64> = good.iter().map(|v| v + 0.5 + noise.sample(&mut rng)).collect();
        let res = mcs(&[losses("good", good), losses("bad", bad), losses("worse", worse)], 0.05, 1000, None, r).unwrap();
        if res.surviving == vec!["good".to_string()] {
            alone += 1;
        }
    }
    assert!(alone >= 19, "{alone}");
}

fn iid_panel(seed: u64, n: usize, j: usize) -> CurveSeries {
    let grid = IntradayGrid::uniform(j).unwrap();
    let mut rng = rng_for(seed, 0);
    let rows = (0..n).map(|_| ou_error_curve(&grid, &mut rng)).collect();
    CurveSeries::new(grid, business_dates(n), rows, CurveKind::Ocidr).unwrap()
}

#[test]
fn diagnostics_size_under_independence() {
    let (mut ac, mut het) = (0, 0);
    let reps = 200;
    for r in 0..reps {
        let p = iid_panel(1000 + r, 500, 30);
        if autocorr_test(&p, &[5]).unwrap().pvalues[0] < 0.05 {
            ac += 1;
        }
        if hetero_test(&p, &[5]).unwrap().pvalues[0] < 0.05 {
            het += 1;
        }
    }
    let (ac, het) = (ac as f64 / reps as f64, het as f64 / reps as f64);
    assert!((0.02..=0.10).contains(&ac), "autocorr size {ac}");
    assert!((0.02..=0.10).contains(&het), "hetero size {het}");
}

#[test]
fn diagnostics_power() {
    let grid = IntradayGrid::uniform(30).unwrap();
    let f = orthonormal_functions(&grid, 3);
    let (mut ac, mut het) = (0, 0);
    for r in 0..50 {
        let mut rng = rng_for(2000 + r, 0);
        let scores = ar1_scores(&mut rng, 500, &[0.7, 0.7], &[1.0, 0.5]);
        let p = curves_from_scores(&grid, &f[1..], &scores, &vec![0.0; 30], 0.3, &mut rng, CurveKind::Generic).unwrap();
        if autocorr_test(&p, &[1]).unwrap().pvalues[0] < 0.05 {
            ac += 1;
        }
        let sim = simulate(
            &ProjectedParams::scalar(0.2, 0.3, 0.4),
            &grid,
            &[vec![1.0; 30]],
            &ErrorModel::GaussianOu,
            500,
            3000 + r,
            &SimulateOptions::default(),
        )
        .unwrap();
        if hetero_test(&sim.returns, &[5]).unwrap().pvalues[0] < 0.05 {
            het += 1;
        }
    }
    assert!(ac >= 48, "{ac}");
    assert!(het >= 45, "{het}");
}

#[test]
fn backtests_under_bernoulli_null() {
    let reps = 300;
    let (mut unb, mut ind) = (0, 0);
    for r in 0..reps {
        let mut rng = rng_for(4000 + r, 0);
        let v = ViolationSeries {
            zeta: 0.05,
            side: Side::Lower,
            dates: business_dates(800),
            values: (0..800)
                .map(|_| (0..20).map(|_| u8::from(rng.random::<f64>() < 0.05)).collect())
                .collect(),
        };
        if backtest_unbiasedness(&v).unwrap().pvalue < 0.05 {
            unb += 1;
        }
        if backtest_independence(&v, &[1]).unwrap()[0].1.pvalue < 0.05 {
            ind += 1;
        }
    }
    let unb = unb as f64 / reps as f64;
    let ind = ind as f64 / reps as f64;
    assert!((0.02..=0.08).contains(&unb), "{unb}");
    assert!((0.02..=0.08).contains(&ind), "{ind}");
}
