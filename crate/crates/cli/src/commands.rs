use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use serde::Serialize;
use styleval::aggregate::{
    evaluate, fit_gm_params, load_preference_pairs, select_checkpoint, write_trajectory_csv,
    EvaluationSuite, FitConfig, GmParams, Granularity, MetricReport, PreferencePair, RecordScore, TrajectoryPoint,
};
use styleval::classifier::{train_classifier, ClassifierConfig, ClassifierModel};
use styleval::lm::{perplexity, train_lm, LmConfig, NGramLm};
use styleval::similarity::{load_embeddings, EmbeddingTable, IdfTable};
use styleval::text::{load_corpus, load_transfer_set, tokenize, Corpus, Sentence, StyleLabel};
use styleval::validation::{
    bleu, gm_pairwise_agreement, load_annotations, match_rate, spearman_rho, BleuInputs, Judgment, RatingAspect,
};

use crate::config::{pick, pick_list, RunConfig};
use crate::output::{emit, sha256_file, write_atomic};
use crate::{Cli, Command, CorpusArgs, SuiteArgs};

struct Globals {
    seed: u64,
    granularity: Granularity,
    params: GmParams,
    out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.global.config {
        Some(p) => RunConfig::load(p).context("config")?,
        None => RunConfig::default(),
    };
    let g = Globals {
        seed: cli.global.seed.or(cfg.seed).unwrap_or(0),
        granularity: cli.global.granularity.or(cfg.granularity).unwrap_or_default(),
        params: cli.global.params.or(cfg.params).unwrap_or_default(),
        out: cli.global.out.clone().or_else(|| cfg.out.clone()),
    };
    g.params.validate().context("params")?;

    match cli.command {
        Command::TrainClassifier {
            corpora,
            epochs,
            learning_rate,
            l2,
            batch_size,
            dev_fraction,
        } => {
            let defaults = ClassifierConfig::default();
            let clf_cfg = ClassifierConfig {
                l2: l2.unwrap_or(defaults.l2),
                learning_rate: learning_rate.unwrap_or(defaults.learning_rate),
                max_epochs: epochs.unwrap_or(defaults.max_epochs),
                batch_size: batch_size.unwrap_or(defaults.batch_size),
                dev_fraction: dev_fraction.unwrap_or(defaults.dev_fraction),
                seed: g.seed,
            };
            cmd_train_classifier(&corpora, &cfg, &clf_cfg, &g)
        }
        Command::TrainLm {
            corpora,
            order,
            min_count,
        } => {
            let defaults = LmConfig::default();
            let lm_cfg = LmConfig {
                order: order.or(cfg.order).unwrap_or(defaults.order),
                min_count: min_count.or(cfg.min_count).unwrap_or(defaults.min_count),
                discounts: None,
            };
            cmd_train_lm(&corpora, &cfg, &lm_cfg, &g)
        }
        Command::BuildIdf { corpora } => cmd_build_idf(&corpora, &cfg, &g),
        Command::Eval { transfer, suite } => {
            let transfer = pick(transfer, cfg.transfer.clone(), "transfer").context("transfer set")?;
            cmd_eval(&transfer, &suite, &cfg, &g)
        }
        Command::FitGm {
            pairs,
            learning_rate,
            epochs,
            holdout_fraction,
        } => {
            let defaults = FitConfig::default();
            let fit_cfg = FitConfig {
                learning_rate: learning_rate.unwrap_or(defaults.learning_rate),
                max_epochs: epochs.unwrap_or(defaults.max_epochs),
                seed: g.seed,
                holdout_fraction: holdout_fraction.unwrap_or(defaults.holdout_fraction),
            };
            let pairs = pick(pairs, cfg.pairs.clone(), "pairs").context("preference pairs")?;
            cmd_fit_gm(&pairs, &fit_cfg, &g)
        }
        Command::Select {
            transfers,
            suite,
            chosen,
        } => {
            let transfers = pick_list(transfers, cfg.transfers.clone(), "transfer").context("transfer sets")?;
            cmd_select(&transfers, &suite, chosen.as_deref(), &cfg, &g)
        }
        Command::Validate {
            annotations,
            reports,
            pairs,
        } => {
            let annotations = annotations.or_else(|| cfg.annotations.clone());
            let reports = if reports.is_empty() {
                cfg.reports.clone().unwrap_or_default()
            } else {
                reports
            };
            let pairs = pairs.or_else(|| cfg.pairs.clone());
            cmd_validate(annotations.as_deref(), &reports, pairs.as_deref(), &g)
        }
        Command::Bleu {
            candidates,
            references,
        } => {
            let candidates = pick(candidates, cfg.candidates.clone(), "candidates").context("candidates")?;
            let references = pick(references, cfg.references.clone(), "references").context("references")?;
            cmd_bleu(&candidates, &references, &g)
        }
    }
}

fn require_out(g: &Globals) -> Result<&Path> {
    g.out
        .as_deref()
        .ok_or_else(|| anyhow!("missing --out (or \"out\" in the config file)"))
        .context("output")
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn load_corpora(args: &CorpusArgs, cfg: &RunConfig) -> Result<(Corpus, Corpus)> {
    let p0 = pick(args.x0.clone(), cfg.x0.clone(), "x0")?;
    let p1 = pick(args.x1.clone(), cfg.x1.clone(), "x1")?;
    let name0 = args.label0.clone().or_else(|| cfg.label0.clone()).unwrap_or_else(|| file_stem(&p0));
    let name1 = args.label1.clone().or_else(|| cfg.label1.clone()).unwrap_or_else(|| file_stem(&p1));
    ensure!(name0 != name1, "both styles are named {name0:?}; pass --label0 and --label1");
    let x0 = load_corpus(&p0, StyleLabel::new(0, name0))?;
    let x1 = load_corpus(&p1, StyleLabel::new(1, name1))?;
    Ok((x0, x1))
}

fn cmd_train_classifier(args: &CorpusArgs, cfg: &RunConfig, clf_cfg: &ClassifierConfig, g: &Globals) -> Result<()> {
    let out = require_out(g)?;
    let (x0, x1) = load_corpora(args, cfg).context("corpora")?;
    let model = train_classifier(&x0, &x1, clf_cfg).context("classifier training")?;
    write_atomic(out, model.to_json()?.as_bytes()).context("output")?;
    let meta = model.train_meta();
    println!(
        "dev_accuracy={:.6} train_accuracy={:.6} best_epoch={} features={}",
        meta.final_dev_accuracy,
        meta.train_accuracy,
        meta.best_epoch,
        model.feature_vocab().len()
    );
    Ok(())
}

fn cmd_train_lm(args: &CorpusArgs, cfg: &RunConfig, lm_cfg: &LmConfig, g: &Globals) -> Result<()> {
    let out = require_out(g)?;
    let (x0, x1) = load_corpora(args, cfg).context("corpora")?;
    let all: Vec<Sentence> = x0.sentences.into_iter().chain(x1.sentences).collect();
    let lm = train_lm(&all, lm_cfg).context("language model training")?;
    let pp = perplexity(&lm, &all).context("language model training")?;
    write_atomic(out, lm.to_json()?.as_bytes()).context("output")?;
    println!("train_pp={:.6} vocab_size={}", pp.pp, lm.vocab().len());
    Ok(())
}

fn cmd_build_idf(args: &CorpusArgs, cfg: &RunConfig, g: &Globals) -> Result<()> {
    let out = require_out(g)?;
    let (x0, x1) = load_corpora(args, cfg).context("corpora")?;
    let idf = IdfTable::build(&[&x0, &x1]).context("idf")?;
    write_atomic(out, idf.to_json()?.as_bytes()).context("output")?;
    println!("sentences={} words={}", idf.corpus_size(), idf.len());
    Ok(())
}

/// Frozen models for scoring, with the content hashes of their files.
struct LoadedSuite {
    classifier: ClassifierModel,
    lm: NGramLm,
    idf: IdfTable,
    embeddings: EmbeddingTable,
    fingerprints: BTreeMap<String, String>,
}

impl LoadedSuite {
    fn as_suite(&self) -> EvaluationSuite<'_> {
        EvaluationSuite {
            classifier: &self.classifier,
            lm: &self.lm,
            embeddings: &self.embeddings,
            idf: &self.idf,
            fingerprints: self.fingerprints.clone(),
        }
    }
}

/// Dimension of a text embedding file, from its first non-blank line.
fn embedding_dim(path: &Path) -> Result<usize> {
    let f = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    for line in BufReader::new(f).lines() {
        let line = line.with_context(|| format!("cannot read {}", path.display()))?;
        let fields = line.split_whitespace().count();
        if fields > 0 {
            ensure!(fields > 1, "{}: first line has a word but no values", path.display());
            return Ok(fields - 1);
        }
    }
    bail!("{}: no embeddings found", path.display())
}

fn load_suite(args: &SuiteArgs, cfg: &RunConfig) -> Result<LoadedSuite> {
    let mut fingerprints = BTreeMap::new();

    let path = pick(args.classifier.clone(), cfg.classifier.clone(), "classifier").context("classifier")?;
    let classifier = ClassifierModel::load(&path).context("classifier")?;
    fingerprints.insert("classifier".to_owned(), sha256_file(&path).context("classifier")?);

    let path = pick(args.lm.clone(), cfg.lm.clone(), "lm").context("language model")?;
    let lm = NGramLm::load(&path).context("language model")?;
    fingerprints.insert("lm".to_owned(), sha256_file(&path).context("language model")?);

    let path = pick(args.idf.clone(), cfg.idf.clone(), "idf").context("idf")?;
    let idf = IdfTable::load(&path).context("idf")?;
    fingerprints.insert("idf".to_owned(), sha256_file(&path).context("idf")?);

    let path = pick(args.embeddings.clone(), cfg.embeddings.clone(), "embeddings").context("embeddings")?;
    let dim = match args.dim.or(cfg.dim) {
        Some(d) => d,
        None => embedding_dim(&path).context("embeddings")?,
    };
    let embeddings = load_embeddings(&path, dim).context("embeddings")?;
    fingerprints.insert("embeddings".to_owned(), sha256_file(&path).context("embeddings")?);

    Ok(LoadedSuite {
        classifier,
        lm,
        idf,
        embeddings,
        fingerprints,
    })
}

fn report_json(report: &MetricReport) -> Result<Vec<u8>> {
    let mut bytes = report.to_json()?.into_bytes();
    bytes.push(b'\n');
    Ok(bytes)
}

fn cmd_eval(transfer: &Path, suite: &SuiteArgs, cfg: &RunConfig, g: &Globals) -> Result<()> {
    let ts = load_transfer_set(transfer).context("transfer set")?;
    let loaded = load_suite(suite, cfg)?;
    let report = evaluate(&ts, &loaded.as_suite(), &g.params, g.granularity).context("scoring")?;
    emit(g.out.as_deref(), &report_json(&report)?).context("output")?;
    if g.out.is_some() {
        println!(
            "acc={:.6} sim={:.6} pp={:.6} gm={:.6}",
            report.acc, report.sim, report.pp, report.gm
        );
    }
    Ok(())
}

fn cmd_fit_gm(pairs: &Path, fit_cfg: &FitConfig, g: &Globals) -> Result<()> {
    let pairs = load_preference_pairs(pairs).context("preference pairs")?;
    let fit = fit_gm_params(&pairs, fit_cfg).context("threshold fitting")?;
    let mut bytes = serde_json::to_vec_pretty(&fit)?;
    bytes.push(b'\n');
    emit(g.out.as_deref(), &bytes).context("output")?;
    if g.out.is_some() {
        println!("params={} holdout_agreement={:.6}", fit.params, fit.holdout_agreement);
    }
    Ok(())
}

#[derive(Serialize)]
struct Chosen<'a> {
    selected: &'a TrajectoryPoint,
    report: &'a MetricReport,
}

fn cmd_select(
    transfers: &[PathBuf],
    suite: &SuiteArgs,
    chosen: Option<&Path>,
    cfg: &RunConfig,
    g: &Globals,
) -> Result<()> {
    let loaded = load_suite(suite, cfg)?;
    let suite = loaded.as_suite();
    let mut points = Vec::with_capacity(transfers.len());
    let mut reports = Vec::with_capacity(transfers.len());
    for (i, path) in transfers.iter().enumerate() {
        let ts = load_transfer_set(path).with_context(|| format!("transfer set {}", path.display()))?;
        let report = evaluate(&ts, &suite, &g.params, Granularity::Corpus)
            .with_context(|| format!("scoring {}", path.display()))?;
        // without a sidecar the checkpoint's position on the command line is its epoch
        let epoch = ts.checkpoint_meta.as_ref().map_or((i + 1) as f64, |m| m.epoch);
        points.push(TrajectoryPoint {
            epoch,
            triple: report.triple(),
            gm: report.gm,
            source_path: path.display().to_string(),
        });
        reports.push(report);
    }
    let best = select_checkpoint(&points).context("selection")?;
    let mut csv = Vec::new();
    write_trajectory_csv(&points, Some(best), &mut csv).context("selection")?;
    emit(g.out.as_deref(), &csv).context("output")?;
    if let Some(path) = chosen {
        let mut bytes = serde_json::to_vec_pretty(&Chosen {
            selected: &points[best],
            report: &reports[best],
        })?;
        bytes.push(b'\n');
        write_atomic(path, &bytes).context("output")?;
    }
    let line = format!(
        "selected={} epoch={} gm={:.6}",
        points[best].source_path, points[best].epoch, points[best].gm
    );
    if g.out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct Statistic {
    value: f64,
    n: usize,
}

#[derive(Debug, Serialize)]
struct ValidationStats {
    params: GmParams,
    /// Classifier prediction vs annotator style choice.
    style_match: Option<Statistic>,
    /// Record cosine vs similarity rating.
    similarity_spearman: Option<Statistic>,
    /// Negated sentence perplexity vs fluency rating.
    fluency_spearman: Option<Statistic>,
    /// Pairwise preferences ranked the same way by GM.
    gm_agreement: Option<Statistic>,
}

fn spearman_stat(name: &str, xs: &[f64], ys: &[f64]) -> Option<Statistic> {
    if xs.is_empty() {
        return None;
    }
    match spearman_rho(xs, ys) {
        Ok(value) => Some(Statistic { value, n: xs.len() }),
        Err(e) => {
            log::warn!("{name}: {e}");
            None
        }
    }
}

fn cmd_validate(annotations: Option<&Path>, reports: &[PathBuf], pairs: Option<&Path>, g: &Globals) -> Result<()> {
    ensure!(
        annotations.is_some() || pairs.is_some(),
        "nothing to validate: pass --annotations and --report, or --pairs"
    );
    let mut records: HashMap<String, (RecordScore, [String; 2])> = HashMap::new();
    for path in reports {
        let report = MetricReport::load(path).with_context(|| format!("report {}", path.display()))?;
        ensure!(
            !report.per_record.is_empty(),
            "report {}: no per-record scores; rerun eval with --granularity sentence",
            path.display()
        );
        for r in report.per_record {
            let id = r.id.clone();
            if records.insert(id.clone(), (r, report.labels.clone())).is_some() {
                bail!("report {}: record id {id:?} appears in more than one report", path.display());
            }
        }
    }

    let mut machine_style = Vec::new();
    let mut human_style = Vec::new();
    let (mut sim_x, mut sim_y, mut flu_x, mut flu_y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut preferences: Vec<PreferencePair> = Vec::new();

    if let Some(path) = annotations {
        ensure!(!reports.is_empty(), "annotations need at least one --report to score against");
        let items = load_annotations(path).context("annotations")?;
        let lookup = |id: &str| -> Result<&(RecordScore, [String; 2])> {
            records
                .get(id)
                .ok_or_else(|| anyhow!("annotations: record {id:?} is not in any report"))
        };
        for a in &items {
            match &a.judgment {
                Judgment::StyleChoice(choice) => {
                    let (r, labels) = lookup(&a.item_id)?;
                    let predicted = labels
                        .iter()
                        .position(|l| *l == r.predicted_style)
                        .ok_or_else(|| anyhow!("annotations: record {:?} has an unknown style", a.item_id))?;
                    machine_style.push(predicted as u8);
                    human_style.push(*choice);
                }
                Judgment::Rating(rating) => {
                    let (r, _) = lookup(&a.item_id)?;
                    match rating.aspect {
                        RatingAspect::Similarity => {
                            sim_x.push(r.cosine);
                            sim_y.push(f64::from(rating.score));
                        }
                        RatingAspect::Fluency => {
                            flu_x.push(-r.sentence_pp);
                            flu_y.push(f64::from(rating.score));
                        }
                    }
                }
                Judgment::PairwisePreference(p) => {
                    let (w, _) = lookup(&p.winner)?;
                    let (l, _) = lookup(&p.loser)?;
                    preferences.push(PreferencePair {
                        winner: w.triple(),
                        loser: l.triple(),
                        annotation_id: a.item_id.clone(),
                    });
                }
            }
        }
    }
    if let Some(path) = pairs {
        preferences.extend(load_preference_pairs(path).context("preference pairs")?);
    }

    let stats = ValidationStats {
        params: g.params,
        style_match: if machine_style.is_empty() {
            None
        } else {
            Some(Statistic {
                value: match_rate(&machine_style, &human_style)?,
                n: machine_style.len(),
            })
        },
        similarity_spearman: spearman_stat("similarity", &sim_x, &sim_y),
        fluency_spearman: spearman_stat("fluency", &flu_x, &flu_y),
        gm_agreement: if preferences.is_empty() {
            None
        } else {
            Some(Statistic {
                value: gm_pairwise_agreement(&g.params, &preferences)?,
                n: preferences.len(),
            })
        },
    };
    let mut bytes = serde_json::to_vec_pretty(&stats)?;
    bytes.push(b'\n');
    emit(g.out.as_deref(), &bytes).context("output")?;
    if g.out.is_some() {
        let show = |s: &Option<Statistic>| s.as_ref().map_or("n/a".to_owned(), |s| format!("{:.6}", s.value));
        println!(
            "style_match={} similarity_spearman={} fluency_spearman={} gm_agreement={}",
            show(&stats.style_match),
            show(&stats.similarity_spearman),
            show(&stats.fluency_spearman),
            show(&stats.gm_agreement)
        );
    }
    Ok(())
}

/// One sentence per line, blank lines kept so both files stay aligned.
fn read_aligned(path: &Path) -> Result<Vec<Sentence>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(text.lines().map(|l| tokenize(l, false)).collect())
}

fn cmd_bleu(candidates: &Path, references: &Path, g: &Globals) -> Result<()> {
    let c = read_aligned(candidates).context("candidates")?;
    let r = read_aligned(references).context("references")?;
    let inputs = BleuInputs::new(c, r).context("bleu")?;
    let score = bleu(&inputs).context("bleu")?;
    if let Some(out) = &g.out {
        let mut bytes = serde_json::to_vec_pretty(&score)?;
        bytes.push(b'\n');
        write_atomic(out, &bytes).context("output")?;
    }
    println!("{score}");
    Ok(())
}

