//! Full paper preset. About 15 minutes in release; run with `--ignored`.

use mabeam::metrics::evaluate;
use mabeam::optimizer::run;
use mabeam::{Preset, Scenario, ScenarioConfig, Scheme};

#[test]
#[ignore = "paper-scale optimization takes minutes"]
fn paper_scale_gains() {
    let cfg = ScenarioConfig::preset(Preset::Paper);
    let sc = Scenario::build(&cfg).unwrap();
    let eval = |scheme: Scheme| {
        let out = run(&sc.problem, &cfg.optimizer_config(scheme)).unwrap();
        let rep = evaluate(&sc.problem, &out.trajectory);
        eprintln!("{scheme}: {} after {} iterations, I = {}, SLR = {:.3} dB", out.log.termination, out.log.iterations(), rep.leakage, rep.slr_db);
        rep
    };
    let ma = eval(Scheme::Ma);
    let lc = eval(Scheme::LcMa);
    let upa = eval(Scheme::UpaOptimized);
    let gain_db = ma.slr_db - upa.slr_db;
    let ratio = ma.leakage / lc.leakage;
    assert!((gain_db - 5.0).abs() <= 2.0, "SLR gain {gain_db:.3} dB");
    assert!((ratio - 0.75).abs() <= 0.15, "MA/LC-MA leakage ratio {ratio:.3}");
}
