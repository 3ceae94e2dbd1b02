//! End to end: synthetic corpus through TSV, experiment, results file and
//! classifier export.

use std::collections::BTreeMap;

use activelabel::classifier::Classifier;
use activelabel::corpus::{assign_labels, load_corpus, write_corpus, Document};
use activelabel::evaluation::read_results;
use activelabel::harness::{
    draw_starting_subsample, generate_synthetic_corpus, run_experiment, synthetic_category,
    Experiment, ExperimentPlan, RunOptions, SyntheticCorpusSpec, RESULTS_FILE,
};
use activelabel::sampling::{run_active_loop, DocPool, SamplingConfig, Strategy};

fn corpus() -> Vec<Document> {
    let spec = SyntheticCorpusSpec {
        size: 3000,
        prior: 0.02,
        seed: 5,
        ..Default::default()
    };
    let docs = generate_synthetic_corpus(&spec).unwrap();
    let mut tsv = Vec::new();
    write_corpus(&mut tsv, &docs).unwrap();
    let report = load_corpus(tsv.as_slice()).unwrap();
    assert!(report.skipped.is_empty());
    let loaded = report.corpus.into_documents();
    assert_eq!(loaded, docs);
    loaded
}

fn plan() -> ExperimentPlan {
    ExperimentPlan {
        categories: vec![synthetic_category()],
        strategies: Strategy::ALL.to_vec(),
        starts: 2,
        random_runs_per_start: 1,
        iterations: 6,
        random_max_size: Some(40),
        master_seed: 17,
        ..Default::default()
    }
}

#[test]
fn experiment_writes_complete_reproducible_results() {
    let docs = corpus();
    let experiment = Experiment::prepare(plan(), &docs).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = run_experiment(&experiment, dir.path(), &RunOptions::default()).unwrap();
    assert_eq!(summary.triples_total, 6);
    assert_eq!(summary.held_out_reads, 0);
    // Two sequential strategies x 2 runs x 6 batches of 4, plus 2 random runs of 40.
    assert_eq!(summary.oracle_reads, 2 * 2 * 24 + 2 * 40);

    let rows = read_results(std::fs::File::open(dir.path().join(RESULTS_FILE)).unwrap()).unwrap();
    let mut counts: BTreeMap<(String, usize), Vec<usize>> = BTreeMap::new();
    for r in &rows {
        counts
            .entry((r.strategy.clone(), r.run))
            .or_default()
            .push(r.labeled_count);
        let c = r.counts();
        assert_eq!(c.total() as usize, experiment.test_pool().len());
    }
    for s in ["uncertainty", "relevance"] {
        for run in 0..2 {
            assert_eq!(counts[&(s.to_string(), run)], vec![3, 7, 11, 15, 19, 23, 27]);
        }
    }
    for run in 0..2 {
        assert_eq!(counts[&("random".to_string(), run)], vec![6, 9, 13, 23, 43]);
    }

    // Any triple rerun in isolation from a fresh experiment gives the same rows.
    let fresh = Experiment::prepare(plan(), &docs).unwrap();
    for triple in fresh.triples() {
        let again = fresh.run_triple(&triple).unwrap();
        let stored: Vec<_> = rows
            .iter()
            .filter(|r| r.strategy == triple.strategy.as_str() && r.run == triple.run)
            .cloned()
            .collect();
        assert_eq!(again.rows, stored, "{triple:?}");
    }
}

#[test]
fn exported_endpoint_classifier_scores_identically() {
    let docs = corpus();
    let category = synthetic_category();
    let labels = assign_labels(&docs, &category);
    let pool = DocPool::from_documents(&docs);
    let positives: Vec<usize> = (0..pool.len())
        .filter(|&i| labels.get(&pool.doc(i).doc_id).unwrap().is_positive())
        .collect();
    let start = draw_starting_subsample(&pool, &positives, 3).unwrap();
    let config = SamplingConfig {
        iterations: 20,
        ..Default::default()
    };
    let outcome = run_active_loop(&pool, &labels, start.examples, config).map_err(|f| f.error).unwrap();
    assert_eq!(outcome.labeled.len(), 83);
    assert_eq!(outcome.logs.len(), 20);

    let json = outcome.classifier.export_json();
    let reloaded = Classifier::import_json(&json).unwrap();
    assert_eq!(reloaded.snapshot_id(), outcome.classifier.snapshot_id());
    assert_eq!(outcome.logs.last().unwrap().classifier, outcome.classifier.snapshot_id());
    let before = pool.all_posteriors(&outcome.classifier);
    let after = pool.all_posteriors(&reloaded);
    assert!(before.iter().zip(&after).all(|(a, b)| a.to_bits() == b.to_bits()));
}
