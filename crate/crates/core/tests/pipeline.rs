use faircompose::composer::report::{report_json, ThresholdRecord};
use faircompose::composer::{parse_config, run_pipeline, run_pipeline_with_jobs};
use faircompose::thresholding::{default_grid, tune_threshold};
use faircompose::Error;

fn config(stages: &str, models: &str, explain: &str) -> String {
    format!(
        "dataset:\n  synth: {{n: 1200, gap: -0.3, seed: 3}}\nmodels:\n{models}\npipeline:\n{stages}\nexplain: {explain}\nseed: 11\n"
    )
}

const LR: &str = "  - kind: logistic_regression\n";
const SMALL_EXPLAIN: &str = "{count: 4, samples: 300}";

#[test]
fn no_stages_gives_only_the_baseline() {
    let cfg = parse_config(&format!(
        "dataset:\n  synth: {{n: 600, gap: -0.3}}\nmodels:\n{LR}explain: {SMALL_EXPLAIN}\n"
    ))
    .unwrap();
    let out = run_pipeline(&cfg).unwrap();
    assert_eq!(out.report.reports.len(), 1);
    assert_eq!(out.report.reports[0].stage, "base");
}

#[test]
fn pipeline_one_reports_every_prefix_with_consistent_thresholds() {
    let stages = "  pre: {name: Rew}\n  in: {name: GridSearch}\n  post: {name: ROC}\n";
    let models = format!("{LR}  - kind: naive_bayes\n");
    let cfg = parse_config(&config(stages, &models, SMALL_EXPLAIN)).unwrap();
    let out = run_pipeline(&cfg).unwrap();
    assert!(out.report.errors.is_empty(), "{:?}", out.report.errors);
    let stages: Vec<(&str, &str)> =
        out.report.reports.iter().map(|r| (r.model.as_str(), r.stage.as_str())).collect();
    assert_eq!(
        stages,
        [
            ("logistic_regression", "base"),
            ("logistic_regression", "pre"),
            ("logistic_regression", "pre+in"),
            ("logistic_regression", "pre+in+post"),
            ("naive_bayes", "base"),
            ("naive_bayes", "pre"),
            ("naive_bayes", "pre+in"),
            ("naive_bayes", "pre+in+post"),
        ]
    );
    let valid = &out.data.valid;
    for (r, t) in out.report.reports.iter().zip(&out.traces) {
        match (r.threshold, t.threshold) {
            (ThresholdRecord::Tuned(x), Some(y)) => {
                let again = tune_threshold(&t.valid_scores, valid.labels(), &default_grid()).unwrap();
                assert_eq!(x, y);
                assert_eq!(again.threshold, x);
            }
            (ThresholdRecord::Internal(_), None) => assert!(r.stage.ends_with("post")),
            other => panic!("{other:?}"),
        }
        let ids: Vec<usize> = r.explanations.iter().map(|e| e.instance).collect();
        assert_eq!(ids, out.report.explanation_instances);
    }
}

#[test]
fn reruns_and_thread_counts_are_byte_identical() {
    let stages = "  pre: {name: Rew}\n  in: {name: ExpGrad, params: {max_rounds: 5}}\n  post: {name: ThreshOptim}\n";
    let models = format!("{LR}  - kind: decision_tree\n  - kind: random_forest\n    params: {{tree_count: 5}}\n");
    let cfg = parse_config(&config(stages, &models, SMALL_EXPLAIN)).unwrap();
    let a = report_json(&run_pipeline_with_jobs(&cfg, Some(1)).unwrap().report).unwrap();
    let b = report_json(&run_pipeline_with_jobs(&cfg, Some(4)).unwrap().report).unwrap();
    let c = report_json(&run_pipeline_with_jobs(&cfg, None).unwrap().report).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn failing_post_stage_keeps_earlier_reports_and_flags_abort() {
    // an impossible cost tolerance makes CEOdds fail after the pre stage
    let stages = "  pre: {name: Rew}\n  post: {name: CEOdds, params: {cost_tol: 0.0, cost: fpr}}\n";
    let cfg = parse_config(&config(stages, LR, "{count: 0}")).unwrap();
    let out = run_pipeline(&cfg).unwrap();
    assert_eq!(out.report.reports.len(), 2);
    assert_eq!(out.report.errors.len(), 1);
    assert_eq!(out.report.errors[0].stage, "pre+post");
    assert!(out.report.reports[1].flags.iter().any(|f| f.starts_with("aborted")));
}

#[test]
fn explanation_count_beyond_test_size_is_a_parameter_error() {
    let cfg = parse_config(&config("  pre: {name: Rew}\n", LR, "{count: 100000}")).unwrap();
    assert!(matches!(run_pipeline(&cfg), Err(Error::Parameter(_))));
}

#[test]
fn lfr_and_ceodds_stages_run() {
    let stages = "  pre: {name: LFR, params: {max_iters: 100}}\n  post: {name: CEOdds, params: {cost_tol: 0.05}}\n";
    let cfg = parse_config(&config(stages, LR, SMALL_EXPLAIN)).unwrap();
    let out = run_pipeline(&cfg).unwrap();
    assert_eq!(out.report.reports.len() + out.report.errors.len(), 3, "{:?}", out.report.errors);
    for r in &out.report.reports {
        assert!(r.metrics.accuracy > 0.5, "{} {}", r.stage, r.metrics.accuracy);
    }
}
