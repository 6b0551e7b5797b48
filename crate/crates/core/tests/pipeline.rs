//! End-to-end flows through files on disk.

use std::fs::File;

use newstrade::learning::{
    forest_train, q_train, DisclosureEnv, ForestModel, ForestParams, LearnedStrategy, QParams, QTable,
};
use newstrade::marketdata::load_market;
use newstrade::newsfeed::{first_per_day, load_news, quantile_thresholds};
use newstrade::simulator::{run_backtest, FeeSchedule, IndexStrategy, NewsStrategy};
use newstrade::strategies::StrategyConfig;
use newstrade::synth::{generate, SynthConfig};

fn small() -> SynthConfig {
    SynthConfig {
        n_stocks: 12,
        n_days: 400,
        seed: 21,
        ..Default::default()
    }
}

#[test]
fn csv_round_trip_gives_identical_backtests() {
    let dir = tempfile::tempdir().unwrap();
    let (m, feed) = generate(&small()).unwrap();
    m.write_csv(File::create(dir.path().join("market.csv")).unwrap())
        .unwrap();
    feed.write_csv(File::create(dir.path().join("news.csv")).unwrap())
        .unwrap();

    let m2 = load_market(dir.path().join("market.csv")).unwrap();
    let f2 = load_news(dir.path().join("news.csv"), None, Some(&m2)).unwrap();
    assert_eq!(m2, m);
    assert_eq!(f2, feed);

    let th = quantile_thresholds(&first_per_day(&feed).sentiments(), 0.1).unwrap();
    let fees = FeeSchedule::default();
    let w = (0, m.len() - 1);
    let a = run_backtest(&m, &mut NewsStrategy::simple(&feed, th), &fees, w).unwrap();
    let b = run_backtest(&m2, &mut NewsStrategy::simple(&f2, th), &fees, w).unwrap();
    assert_eq!(a.to_json(), b.to_json());

    let idx = run_backtest(&m, &mut IndexStrategy, &fees, w).unwrap();
    assert_eq!(idx.n_trades(), 1);
    assert!(idx.final_value <= idx.gross_final_value());
}

#[test]
fn trained_models_survive_files() {
    let dir = tempfile::tempdir().unwrap();
    let (m, feed) = generate(&small()).unwrap();
    let cfg = StrategyConfig {
        delta: 20,
        delta_index: 20,
        ..Default::default()
    };
    let mut env = DisclosureEnv::new(&feed, &m, &cfg, 0.001, (0, 250));
    let model = forest_train(
        &env.labelled_samples(),
        &ForestParams {
            n_trees: 15,
            ..Default::default()
        },
    )
    .unwrap();
    let (q, _) = q_train(&mut env, &QParams::default()).unwrap();

    std::fs::write(dir.path().join("forest.json"), model.to_json()).unwrap();
    std::fs::write(dir.path().join("q.json"), q.to_json()).unwrap();
    let model2 = ForestModel::from_json(&std::fs::read_to_string(dir.path().join("forest.json")).unwrap()).unwrap();
    let q2 = QTable::from_json(&std::fs::read_to_string(dir.path().join("q.json")).unwrap()).unwrap();
    assert_eq!(model2, model);
    assert_eq!(q2, q);

    let fees = FeeSchedule::default();
    let w = (251, m.len() - 1);
    let run = |s: &mut dyn newstrade::simulator::DecisionSource| run_backtest(&m, s, &fees, w).unwrap().to_json();
    assert_eq!(
        run(&mut LearnedStrategy::new("forest", model, &feed, &m, &cfg, w)),
        run(&mut LearnedStrategy::new("forest", model2, &feed, &m, &cfg, w))
    );
    assert_eq!(
        run(&mut LearnedStrategy::new("qlearn", q, &feed, &m, &cfg, w)),
        run(&mut LearnedStrategy::new("qlearn", q2, &feed, &m, &cfg, w))
    );
}
