use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{train, LossMatrix};
use crate::corpus::{assign_labels, split, Document, LabelMap, LabeledExample};
use crate::evaluation::{evaluate_pool, evaluation_schedule, write_results, ResultRow, RESULTS_HEADER};
use crate::sampling::{
    random_permutation, ActiveLoop, AuditedOracle, DocPool, LabelOracle, Strategy,
};

use super::plan::ExperimentPlan;
use super::protocol::{draw_starting_subsample, random_size_schedule};
use super::seeds::{run_seed, split_seed, start_seed};
use super::HarnessError;

/// One unit of work: a single run of one strategy on one category.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub category: String,
    pub strategy: Strategy,
    pub run: usize,
}

impl Triple {
    fn fragment_name(&self) -> String {
        let key = format!("{}\0{}\0{}", self.category, self.strategy, self.run);
        let digest = hex::encode(Sha256::digest(key.as_bytes()));
        format!("{}-{:04}-{}.csv", self.strategy, self.run, &digest[..16])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TripleResult {
    pub triple: Triple,
    pub rows: Vec<ResultRow>,
    pub oracle_reads: usize,
    pub held_out_reads: usize,
}

impl TripleResult {
    /// The rows as headerless CSV, exactly as they appear in the results file.
    pub fn csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        write_results(&mut buf, &self.rows, false).expect("writing to memory");
        buf
    }
}

struct CategoryData {
    train_labels: LabelMap,
    test_labels: LabelMap,
    /// Pool indices of training positives, ascending.
    train_positives: Vec<usize>,
}

/// A plan bound to a corpus: the train/test split is made and every
/// category is labeled, ready to run triples.
pub struct Experiment {
    plan: ExperimentPlan,
    train_pool: DocPool,
    test_pool: DocPool,
    test_ids: HashSet<String>,
    categories: HashMap<String, CategoryData>,
    fingerprint: String,
}

impl Experiment {
    /// Fails if the plan is invalid or any category has fewer than three
    /// training positives, before any run starts.
    pub fn prepare(plan: ExperimentPlan, corpus: &[Document]) -> Result<Self, HarnessError> {
        plan.validate()?;
        let (train_docs, test_docs) = split(corpus, plan.test_fraction, split_seed(plan.master_seed))?;
        let train_pool = DocPool::from_documents(&train_docs);
        let test_pool = DocPool::from_documents(&test_docs);
        let test_ids: HashSet<String> = test_docs.iter().map(|d| d.doc_id.clone()).collect();

        let mut categories = HashMap::new();
        for spec in &plan.categories {
            let train_labels = assign_labels(&train_docs, spec);
            let test_labels = assign_labels(&test_docs, spec);
            let train_positives: Vec<usize> = (0..train_pool.len())
                .filter(|&i| {
                    train_labels
                        .get(&train_pool.doc(i).doc_id)
                        .is_some_and(|l| l.is_positive())
                })
                .collect();
            if train_positives.len() < super::protocol::STARTING_POSITIVES {
                return Err(HarnessError::TooFewPositives {
                    category: spec.name.clone(),
                    found: train_positives.len(),
                });
            }
            categories.insert(
                spec.name.clone(),
                CategoryData {
                    train_labels,
                    test_labels,
                    train_positives,
                },
            );
        }

        let fingerprint = fingerprint(&plan, corpus);
        Ok(Self {
            plan,
            train_pool,
            test_pool,
            test_ids,
            categories,
            fingerprint,
        })
    }

    pub fn plan(&self) -> &ExperimentPlan {
        &self.plan
    }

    pub fn train_pool(&self) -> &DocPool {
        &self.train_pool
    }

    pub fn test_pool(&self) -> &DocPool {
        &self.test_pool
    }

    pub fn is_test_doc(&self, doc_id: &str) -> bool {
        self.test_ids.contains(doc_id)
    }

    /// Hash of the plan and corpus; results from different fingerprints are
    /// never mixed in one output directory.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// All triples in canonical order: categories and strategies as listed
    /// in the plan, runs ascending.
    pub fn triples(&self) -> Vec<Triple> {
        let mut out = Vec::new();
        for c in &self.plan.categories {
            for &s in &self.plan.strategies {
                for run in 0..self.plan.runs_for(s) {
                    out.push(Triple {
                        category: c.name.clone(),
                        strategy: s,
                        run,
                    });
                }
            }
        }
        out
    }

    fn category(&self, name: &str) -> Result<&CategoryData, HarnessError> {
        self.categories
            .get(name)
            .ok_or_else(|| HarnessError::Plan(format!("unknown category {name:?}")))
    }

    /// Runs one triple from its derived seeds. The training oracle only
    /// knows training labels and every read is audited against the test set.
    pub fn run_triple(&self, triple: &Triple) -> Result<TripleResult, HarnessError> {
        let data = self.category(&triple.category)?;
        let plan = &self.plan;
        let start_index = plan.start_of(triple.strategy, triple.run);
        if triple.run >= plan.runs_for(triple.strategy) {
            return Err(HarnessError::Plan(format!("run {} is out of range", triple.run)));
        }
        let start = draw_starting_subsample(
            &self.train_pool,
            &data.train_positives,
            start_seed(plan.master_seed, &triple.category, start_index),
        )?;
        let seed = run_seed(plan.master_seed, &triple.category, triple.strategy.as_str(), triple.run);
        let oracle = AuditedOracle::new(&data.train_labels, &self.test_ids);

        let row = |labeled_count: usize, iteration: usize, classifier: &crate::classifier::Classifier| {
            let counts = evaluate_pool(classifier, &self.test_pool, &data.test_labels);
            ResultRow::new(
                &triple.category,
                triple.strategy.as_str(),
                triple.run,
                labeled_count,
                iteration,
                counts,
            )
        };

        let mut rows = Vec::new();
        match triple.strategy {
            Strategy::Uncertainty | Strategy::Relevance => {
                let config = plan.sampling_config(triple.strategy, seed);
                let schedule = evaluation_schedule(plan.iterations);
                let mut state = ActiveLoop::new(&self.train_pool, start.examples, config)?;
                rows.push(row(state.labeled().len(), 0, state.classifier()));
                for k in 1..=plan.iterations {
                    match state.step(&oracle)? {
                        Some(_) if schedule.contains(&k) => {
                            rows.push(row(state.labeled().len(), k, state.classifier()))
                        }
                        Some(_) => {}
                        None => {
                            // Pool ran out: make sure the last classifier is evaluated.
                            let last = state.iteration();
                            if rows.last().is_some_and(|r| r.iteration != last) {
                                rows.push(row(state.labeled().len(), last, state.classifier()));
                            }
                            break;
                        }
                    }
                }
            }
            Strategy::Random => {
                let taken: HashSet<String> = start.examples.iter().map(|e| e.doc_id.clone()).collect();
                let rest: Vec<usize> = (0..self.train_pool.len())
                    .filter(|&i| !taken.contains(&self.train_pool.doc(i).doc_id))
                    .collect();
                let order = random_permutation(&rest, seed);
                let mut sizes = random_size_schedule(rest.len());
                if let Some(cap) = plan.random_max_size {
                    sizes.retain(|&n| n <= cap);
                }
                let mut labeled: Vec<LabeledExample> = start.examples;
                for (step, &n) in sizes.iter().enumerate() {
                    for &i in &order[labeled.len() - taken.len()..n] {
                        let doc = self.train_pool.doc(i);
                        let label = oracle.label(&doc.doc_id)?;
                        labeled.push(LabeledExample::new(doc.doc_id.clone(), doc.tokens.clone(), label));
                    }
                    let classifier = train(
                        &labeled,
                        &start.required,
                        plan.selection_fraction,
                        LossMatrix::min_error(),
                    )?;
                    rows.push(row(labeled.len(), step, &classifier));
                }
            }
        }

        let result = TripleResult {
            triple: triple.clone(),
            rows,
            oracle_reads: oracle.reads(),
            held_out_reads: oracle.held_out_reads(),
        };
        if result.held_out_reads > 0 {
            return Err(HarnessError::Leakage {
                triple: format!("{}/{}/{}", triple.category, triple.strategy, triple.run),
                reads: result.held_out_reads,
            });
        }
        Ok(result)
    }
}

fn fingerprint(plan: &ExperimentPlan, corpus: &[Document]) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(plan).expect("plan serializes"));
    for d in corpus {
        for field in [&d.doc_id, &d.keyword, &d.title] {
            h.update((field.len() as u64).to_le_bytes());
            h.update(field.as_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// A completed triple as recorded in `manifest.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub category: String,
    pub strategy: Strategy,
    pub run: usize,
    pub rows: usize,
    pub fragment: String,
    pub sha256: String,
    pub oracle_reads: usize,
    pub held_out_reads: usize,
}

impl ManifestEntry {
    fn triple(&self) -> Triple {
        Triple {
            category: self.category.clone(),
            strategy: self.strategy,
            run: self.run,
        }
    }
}

#[derive(Default)]
pub struct RunOptions<'a> {
    /// Worker threads; 0 uses rayon's default.
    pub jobs: usize,
    /// Stop after this many new triples (the results file is then not
    /// written). Used to simulate interruptions.
    pub limit: Option<usize>,
    pub progress: Option<&'a (dyn Fn(&ManifestEntry) + Sync)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSummary {
    pub triples_total: usize,
    pub triples_run: usize,
    pub triples_skipped: usize,
    pub rows: usize,
    pub oracle_reads: usize,
    pub held_out_reads: usize,
    /// Present once every triple has completed.
    pub results: Option<PathBuf>,
}

pub const RESULTS_FILE: &str = "results.csv";
pub const MANIFEST_FILE: &str = "manifest.jsonl";
const FINGERPRINT_FILE: &str = "fingerprint";
const FRAGMENT_DIR: &str = "fragments";

fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Completed triples whose fragments are intact. A torn final line from an
/// interrupted write is ignored.
fn read_manifest(out_dir: &Path) -> Result<HashMap<Triple, ManifestEntry>, HarnessError> {
    let path = out_dir.join(MANIFEST_FILE);
    let mut done = HashMap::new();
    if !path.exists() {
        return Ok(done);
    }
    for line in BufReader::new(File::open(&path)?).lines() {
        let line = line?;
        let Ok(entry) = serde_json::from_str::<ManifestEntry>(&line) else {
            continue;
        };
        let fragment = out_dir.join(FRAGMENT_DIR).join(&entry.fragment);
        if fragment.exists() && sha256_file(&fragment)? == entry.sha256 {
            done.insert(entry.triple(), entry);
        }
    }
    Ok(done)
}

/// Runs every triple not already recorded in `out_dir`, then assembles
/// `results.csv` in canonical triple order. Rerunning after an interruption
/// produces the same file as an uninterrupted run.
pub fn run_experiment(
    experiment: &Experiment,
    out_dir: &Path,
    options: &RunOptions<'_>,
) -> Result<ExperimentSummary, HarnessError> {
    fs::create_dir_all(out_dir.join(FRAGMENT_DIR))?;
    let fp_path = out_dir.join(FINGERPRINT_FILE);
    if fp_path.exists() {
        let existing = fs::read_to_string(&fp_path)?;
        if existing.trim() != experiment.fingerprint() {
            return Err(HarnessError::PlanMismatch(out_dir.to_path_buf()));
        }
    } else {
        fs::write(&fp_path, experiment.fingerprint())?;
    }

    let triples = experiment.triples();
    let done = read_manifest(out_dir)?;
    let mut pending: Vec<&Triple> = triples.iter().filter(|t| !done.contains_key(t)).collect();
    let skipped = triples.len() - pending.len();
    if let Some(limit) = options.limit {
        pending.truncate(limit);
    }

    let manifest = Mutex::new(
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(out_dir.join(MANIFEST_FILE))?,
    );
    let work = |t: &Triple| -> Result<ManifestEntry, HarnessError> {
        let result = experiment.run_triple(t)?;
        let bytes = result.csv_bytes();
        let name = t.fragment_name();
        let fragment = out_dir.join(FRAGMENT_DIR).join(&name);
        let tmp = fragment.with_extension("tmp");
        fs::write(&tmp, &bytes)?;
        fs::rename(&tmp, &fragment)?;
        let entry = ManifestEntry {
            category: t.category.clone(),
            strategy: t.strategy,
            run: t.run,
            rows: result.rows.len(),
            fragment: name,
            sha256: hex::encode(Sha256::digest(&bytes)),
            oracle_reads: result.oracle_reads,
            held_out_reads: result.held_out_reads,
        };
        let mut line = serde_json::to_string(&entry)?;
        line.push('\n');
        {
            let mut m = manifest.lock().expect("manifest lock");
            m.write_all(line.as_bytes())?;
            m.flush()?;
        }
        if let Some(progress) = options.progress {
            progress(&entry);
        }
        Ok(entry)
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| HarnessError::Plan(format!("cannot start workers: {e}")))?;
    let new_entries: Vec<ManifestEntry> =
        pool.install(|| pending.par_iter().map(|t| work(t)).collect::<Result<_, _>>())?;

    let mut all = done;
    for e in &new_entries {
        all.insert(e.triple(), e.clone());
    }
    let complete = triples.iter().all(|t| all.contains_key(t));
    let results = if complete {
        let path = out_dir.join(RESULTS_FILE);
        let tmp = path.with_extension("csv.tmp");
        let mut w = BufWriter::new(File::create(&tmp)?);
        writeln!(w, "{RESULTS_HEADER}")?;
        for t in &triples {
            let entry = &all[t];
            w.write_all(&fs::read(out_dir.join(FRAGMENT_DIR).join(&entry.fragment))?)?;
        }
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, &path)?;
        Some(path)
    } else {
        None
    };

    let counted: Vec<&ManifestEntry> = triples.iter().filter_map(|t| all.get(t)).collect();
    Ok(ExperimentSummary {
        triples_total: triples.len(),
        triples_run: new_entries.len(),
        triples_skipped: skipped,
        rows: counted.iter().map(|e| e.rows).sum(),
        oracle_reads: counted.iter().map(|e| e.oracle_reads).sum(),
        held_out_reads: counted.iter().map(|e| e.held_out_reads).sum(),
        results,
    })
}

/// The strategies present in a result set, in first-seen order.
pub fn strategies_in(rows: &[ResultRow]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    rows.iter()
        .filter(|r| seen.insert(r.strategy.clone()))
        .map(|r| r.strategy.clone())
        .collect()
}
