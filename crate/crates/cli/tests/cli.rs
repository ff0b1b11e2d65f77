use std::path::Path;
use std::process::{Command, Output};

use fxcurve::fgarch::{BasisFamily, ModelKind};
use fxcurve_cli::config::{Combo, RunConfig};
use fxcurve_cli::dataset::{generate, write_dataset, SyntheticSpec};
use fxcurve_cli::emit::Emitter;
use fxcurve_cli::pipeline::{from_panels, run_rolling, RollingSettings};

fn fxcurve(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fxcurve"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn small_spec(assets: usize) -> SyntheticSpec {
    SyntheticSpec { assets, days: 150, grid_j: 12, ..SyntheticSpec::default() }
}

#[test]
fn subcommands_chain_on_simulated_quotes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&fxcurve(d, &["--output-dir", "data", "simulate", "--assets", "2", "--days", "150", "--grid-j", "12"]));
    let cfg = "data/config.json";
    let common = ["--config", cfg];

    let run = |extra: &[&str]| {
        let mut args: Vec<&str> = common.to_vec();
        args.extend_from_slice(extra);
        fxcurve(d, &args)
    };
    ok(&run(&["--output-dir", "ing", "ingest", "--quotes", "data/quotes_EURUSD.csv"]));
    let clean = std::fs::read_to_string(d.join("ing/quotes_clean.csv")).unwrap();
    assert!(clean.starts_with("date,time,bid,ask,mid"));
    assert_eq!(clean.lines().count(), 1 + 151 * 12);

    ok(&run(&["--output-dir", "c1", "curves", "--quotes", "data/quotes_EURUSD.csv"]));
    ok(&run(&["--output-dir", "c2", "curves", "--quotes", "data/quotes_GBPUSD.csv"]));
    for f in ["ocidr", "ocibas", "demeaned", "squared", "mean", "rv"] {
        assert!(d.join(format!("c1/{f}.csv")).exists(), "{f}");
    }

    ok(&run(&["--output-dir", "b", "basis", "--curves", "c1/squared.csv", "--method", "dfpca"]));
    assert!(d.join("b/basis.csv").exists());
    ok(&run(&["--output-dir", "bm", "basis", "--curves", "c1/squared.csv", "c2/squared.csv", "--method", "mfpca"]));
    assert!(d.join("bm/basis_common.csv").exists());
    assert!(d.join("bm/basis_specific_2.csv").exists());

    ok(&run(&[
        "--output-dir", "f", "fit", "--returns", "c1/ocidr.csv", "--exog", "c1/ocibas.csv", "--method", "tfpca",
        "--model", "fgarchx",
    ]));
    let doc = std::fs::read_to_string(d.join("f/fit_ocidr.json")).unwrap();
    assert!(doc.contains("FGARCHX"));

    ok(&run(&["--output-dir", "fc", "forecast", "--fit", "f/fit_ocidr.json", "--returns", "c1/ocidr.csv", "--exog", "c1/ocibas.csv"]));
    let fc = std::fs::read_to_string(d.join("fc/forecast.csv")).unwrap();
    assert_eq!(fc.lines().count(), 1 + 150 + 1);
    assert!(fc.lines().last().unwrap().starts_with("NEXT,"));

    ok(&run(&[
        "--output-dir", "v", "var", "--residuals", "f/residuals_ocidr.csv", "--variance", "f/sigma2_ocidr.csv",
        "--zeta", "0.05", "0.95",
    ]));
    let var = std::fs::read_to_string(d.join("v/var.csv")).unwrap();
    assert_eq!(var.lines().count(), 1 + 2 * 150);

    ok(&run(&["--output-dir", "bt", "backtest", "--returns", "c1/demeaned.csv", "--var", "v/var.csv"]));
    let bt = std::fs::read_to_string(d.join("bt/backtest.csv")).unwrap();
    assert_eq!(bt.lines().filter(|l| l.contains("UNBIASEDNESS")).count(), 2);

    ok(&run(&[
        "--output-dir", "ev", "evaluate", "--proxy", "c1/squared.csv", "--forecast", "fx=f/sigma2_ocidr.csv",
        "--forecast", "flat=fc/forecast.csv", "--rv", "c1/rv.csv",
    ]));
    for f in ["losses", "dm_intraday_msfe", "dm_interdaily_qlike", "mcs_intraday_qlike"] {
        assert!(d.join(format!("ev/{f}.csv")).exists(), "{f}");
    }

    ok(&run(&["--output-dir", "t", "trade", "--quotes", "data/quotes_EURUSD.csv", "--side", "long"]));
    let log = std::fs::read_to_string(d.join("t/trades.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 150 - 102);
}

#[test]
fn exit_codes_separate_input_and_numeric_failures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let out = fxcurve(d, &["simulate", "--spread", "-0.001"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("spread"));

    let out = fxcurve(d, &["ingest", "--quotes", "missing.csv"]);
    assert_eq!(out.status.code(), Some(1));

    std::fs::write(d.join("bad.json"), "{\"window\": 600, \"colour\": 1}").unwrap();
    let out = fxcurve(d, &["--config", "bad.json", "run"]);
    assert_eq!(out.status.code(), Some(1));

    let mut flat = String::from("date,u001,u002,u003\n");
    for t in 0..120 {
        flat.push_str(&format!("D{t:03},0,0,0\n"));
    }
    std::fs::write(d.join("flat.csv"), flat).unwrap();
    let out = fxcurve(d, &["fit", "--returns", "flat.csv", "--method", "tfpca"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn mfpca_with_one_asset_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&fxcurve(d, &["--output-dir", "data", "simulate", "--assets", "1", "--days", "120", "--grid-j", "8"]));
    let mut cfg: RunConfig = serde_json::from_str(&std::fs::read_to_string(d.join("data/config.json")).unwrap()).unwrap();
    assert!(!cfg.basis_methods.contains(&BasisFamily::Mfpca));
    cfg.basis_methods = vec![BasisFamily::Mfpca];
    std::fs::write(d.join("data/mf.json"), serde_json::to_string(&cfg).unwrap()).unwrap();
    let out = fxcurve(d, &["--config", "data/mf.json", "--output-dir", "o", "run"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("MFPCA requires at least 2 assets"));
    let manifest = std::fs::read_to_string(d.join("o/manifest.json")).unwrap();
    assert!(manifest.contains("\"FAILED\""));
}

#[test]
fn failing_stage_is_named_in_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut out = Emitter::new(&d.join("data")).unwrap();
    let mut cfg = write_dataset(&small_spec(1), &mut out).unwrap();
    cfg.window = 400;
    std::fs::write(d.join("data/long.json"), serde_json::to_string(&cfg).unwrap()).unwrap();
    let res = fxcurve(d, &["--config", "data/long.json", "--output-dir", "o", "run"]);
    assert_ne!(res.status.code(), Some(0));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("o/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "FAILED");
    assert!(manifest["failure"]["stage"].is_string());
}

#[test]
fn weekly_refits_match_daily_refits_on_refit_days() {
    let spec = small_spec(2);
    let assets = generate(&spec).unwrap();
    let names: Vec<String> = assets.iter().map(|a| a.name.clone()).collect();
    let panels: Vec<_> = assets.iter().map(|a| a.panel.clone()).collect();
    let (curves, _) = from_panels(&names, &panels).unwrap();
    let config = RunConfig { window: 120, grid_j: spec.grid_j, ..RunConfig::default() };
    let mut settings = RollingSettings::from_config(&config);
    settings.combos = vec![
        Combo { basis: BasisFamily::Tfpca, kind: ModelKind::Fgarch11 },
        Combo { basis: BasisFamily::Mfpca, kind: ModelKind::Fgarchx },
    ];
    settings.levels = vec![0.05];
    settings.refit_every = 1;
    let daily = run_rolling(&curves, &settings).unwrap();
    settings.refit_every = 5;
    let weekly = run_rolling(&curves, &settings).unwrap();
    for (a, b) in daily.assets.iter().zip(&weekly.assets) {
        for (ca, cb) in a.combos.iter().zip(&b.combos) {
            let n = ca.variance.len();
            assert_eq!(n, 30);
            for t in (0..n).step_by(5) {
                assert_eq!(ca.variance[t], cb.variance[t], "{} {} day {t}", a.name, ca.combo.id());
                assert_eq!(ca.var[0][t].curve, cb.var[0][t].curve);
            }
            let differs = (0..n).any(|t| ca.variance[t] != cb.variance[t]);
            assert!(differs, "weekly refits should differ between refit days");
        }
    }
}
