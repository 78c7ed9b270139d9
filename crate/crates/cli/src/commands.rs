use std::fs;
use std::io::Write;

use anyhow::{Context, Result};
use kgd_core::certify::{robustness_report, CertConfig};
use kgd_core::eval::{enumerate_path_queries, link_prediction, multihop_metrics, EvalCondition};
use kgd_core::graph::{load_dataset, FilterIndex, KnowledgeGraph, Query};
use kgd_core::models::{read_checkpoint, write_checkpoint};
use kgd_core::synthetic::generate;
use kgd_core::train::{sigma_quantile, train_with, EpochLog, TrainConfig};
use kgd_core::{EmbeddingModel, RankingMetrics, Split};
use serde::Serialize;

use crate::config::{RunConfig, ValidationError};
use crate::output::{sha256_hex, RunDir, Tsv, CONFIG_ECHO_FILE};

pub const CHECKPOINT_FILE: &str = "model.ckpt";

/// Failure classes mapped to process exit codes.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Runtime(anyhow::Error),
}

impl From<ValidationError> for Failure {
    fn from(e: ValidationError) -> Self {
        Failure::Validation(e.0)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<kgd_core::Error> for Failure {
    fn from(e: kgd_core::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

pub struct Dataset {
    pub kg: KnowledgeGraph,
    pub fingerprint: String,
}

impl Dataset {
    fn manifest_info(&self) -> (&str, usize, usize) {
        (&self.fingerprint, self.kg.num_entities(), self.kg.num_relations())
    }
}

/// Load (or generate) the graph, fingerprint its content and add reverse
/// relations.
pub fn load_data(cfg: &RunConfig) -> Result<Dataset, Failure> {
    cfg.validate_data()?;
    let d = &cfg.data;
    let (kg, fingerprint) = match (&d.train, &d.synthetic) {
        (Some(train), _) => {
            let mut hasher_input = Vec::new();
            for (name, p) in [("train", Some(train)), ("valid", d.valid.as_ref()), ("test", d.test.as_ref())] {
                if let Some(p) = p {
                    hasher_input.extend_from_slice(name.as_bytes());
                    hasher_input.push(0);
                    hasher_input.extend(fs::read(p).with_context(|| format!("reading {}", p.display()))?);
                }
            }
            let kg = load_dataset(train, d.valid.as_deref(), d.test.as_deref(), d.separator)
                .map_err(|e| Failure::Validation(e.to_string()))?;
            (kg, sha256_hex(&hasher_input))
        }
        (None, Some(spec)) => {
            let kg = generate(spec).map_err(|e| Failure::Validation(e.to_string()))?;
            let text: String = Split::ALL
                .iter()
                .map(|&s| format!("{}\0{}", s.name(), kg.to_triple_lines(s, '\t')))
                .collect();
            (kg, sha256_hex(text.as_bytes()))
        }
        (None, None) => unreachable!("validated above"),
    };
    Ok(Dataset {
        kg: kg.add_reverse_relations()?,
        fingerprint,
    })
}

/// Print and store the resolved configuration before any compute.
fn echo_config(cfg: &RunConfig, run: &mut RunDir) -> Result<()> {
    let text = cfg.to_toml();
    println!("# resolved configuration\n{text}");
    run.write_bytes(CONFIG_ECHO_FILE, text.as_bytes())
}

fn load_model(cfg: &RunConfig, kg: &KnowledgeGraph) -> Result<EmbeddingModel, Failure> {
    let path = cfg.require_checkpoint()?;
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let model = read_checkpoint(&mut bytes.as_slice())
        .map_err(|e| Failure::Validation(format!("checkpoint {}: {e}", path.display())))?;
    if cfg.family_explicit && model.family() != cfg.train.family {
        return Err(Failure::Validation(format!(
            "checkpoint family {} does not match train.family {}",
            model.family(),
            cfg.train.family
        )));
    }
    if model.num_entities() != kg.num_entities() || model.num_relations() != kg.num_relations() {
        return Err(Failure::Validation(format!(
            "checkpoint has {} entities / {} relations, dataset has {} / {} (after reverse relations)",
            model.num_entities(),
            model.num_relations(),
            kg.num_entities(),
            kg.num_relations()
        )));
    }
    Ok(model)
}

fn metric_rows(tsv: &mut Tsv, label: &str, m: &RankingMetrics) {
    for (name, v) in [
        ("mrr", m.mrr),
        ("mr", m.mr),
        ("hits1", m.hits1),
        ("hits3", m.hits3),
        ("hits10", m.hits10),
    ] {
        tsv.row(&[label.to_owned(), name.to_owned(), v.to_string()]);
    }
}

fn queries(kg: &KnowledgeGraph, split: Split, limit: Option<usize>) -> Result<Vec<Query>, Failure> {
    let mut q = kg.queries(split)?;
    if let Some(n) = limit {
        q.truncate(n);
    }
    if q.is_empty() {
        return Err(Failure::Validation(format!("the {} split has no triples", split.name())));
    }
    Ok(q)
}

#[derive(Serialize)]
struct TrainSummary {
    epochs: usize,
    final_epoch: Option<EpochLog>,
    sigma: f64,
    valid: Option<RankingMetrics>,
}

pub fn train(cfg: &RunConfig, run: &mut RunDir) -> Result<Dataset, Failure> {
    cfg.validate_train()?;
    let data = load_data(cfg)?;
    echo_config(cfg, run)?;
    let mut log = run.create_file("train_log.jsonl")?;
    let mut write_err = None;
    let outcome = train_with(&data.kg, &cfg.train, |rec| {
        eprintln!(
            "epoch {:>4}  L_o {:.5}  L_d {:.5}  L {:.5}  sigma {:.4}",
            rec.epoch, rec.original, rec.denoising, rec.joint, rec.sigma
        );
        if write_err.is_none() {
            if let Err(e) = serde_json::to_writer(&mut log, rec).map_err(anyhow::Error::from).and_then(|_| {
                log.write_all(b"\n").map_err(anyhow::Error::from)
            }) {
                write_err = Some(e);
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(Failure::Runtime(e));
    }
    let mut ckpt = Vec::new();
    write_checkpoint(&outcome.model, &mut ckpt).context("encoding checkpoint")?;
    run.write_bytes(CHECKPOINT_FILE, &ckpt)?;

    let filter = FilterIndex::build(&data.kg)?;
    let valid_q = data.kg.queries(Split::Valid)?;
    let valid = if valid_q.is_empty() {
        None
    } else {
        Some(link_prediction(&outcome.model, &valid_q, &filter, &EvalCondition::Clean)?)
    };
    let summary = TrainSummary {
        epochs: cfg.train.epochs,
        final_epoch: outcome.log.last().cloned().map(|mut r| {
            r.wall_ms = 0;
            r
        }),
        sigma: sigma_quantile(outcome.model.entity_table())?,
        valid,
    };
    run.write_json("train_summary.json", &summary)?;
    Ok(data)
}

/// Conditions for an α list: 0 is the clean condition, duplicates collapse.
pub fn eval_conditions(alphas: &[f64], seed: u64) -> Vec<EvalCondition> {
    let mut out: Vec<EvalCondition> = Vec::new();
    let mut push = |c: EvalCondition| {
        if !out.contains(&c) {
            out.push(c);
        }
    };
    if alphas.is_empty() {
        push(EvalCondition::Clean);
    }
    for &a in alphas {
        push(if a == 0.0 {
            EvalCondition::Clean
        } else {
            EvalCondition::Perturbed { alpha: a, seed }
        });
    }
    out
}

pub fn eval(cfg: &RunConfig, run: &mut RunDir) -> Result<Dataset, Failure> {
    cfg.validate_eval()?;
    let data = load_data(cfg)?;
    let model = load_model(cfg, &data.kg)?;
    echo_config(cfg, run)?;
    let filter = FilterIndex::build(&data.kg)?;
    let q = queries(&data.kg, cfg.eval.split, None)?;
    let mut reports = Vec::new();
    let mut tsv = Tsv::new(&["condition", "metric", "value"]);
    for cond in eval_conditions(&cfg.eval.alphas, cfg.seed) {
        let m = link_prediction(&model, &q, &filter, &cond)?;
        eprintln!("{:<12} mrr {:.4}  hits@10 {:.4}", cond.label(), m.mrr, m.hits10);
        metric_rows(&mut tsv, &cond.label(), &m);
        reports.push(m);
    }
    run.write_json("metrics.json", &reports)?;
    run.write_bytes("metrics.tsv", &tsv.into_bytes())?;
    Ok(data)
}

#[derive(Serialize)]
struct CertifyOutput<'a> {
    split: Split,
    config: CertConfig,
    report: &'a kgd_core::RobustnessReport,
}

pub fn certify(cfg: &RunConfig, run: &mut RunDir) -> Result<Dataset, Failure> {
    cfg.validate_certify()?;
    let data = load_data(cfg)?;
    let model = load_model(cfg, &data.kg)?;
    echo_config(cfg, run)?;
    let filter = FilterIndex::build(&data.kg)?;
    let c = &cfg.certify;
    let q = queries(&data.kg, c.split, c.max_queries)?;
    let sigma = match c.sigma {
        Some(s) => s,
        None => sigma_quantile(model.entity_table())?,
    };
    let cc = CertConfig {
        n0: c.n0,
        confidence: c.confidence,
        sigma,
        seed: cfg.seed,
    };
    let radii: Vec<f64> = c.radii_over_sigma.iter().map(|k| k * sigma).collect();
    let (records, report) = robustness_report(&model, &q, &filter, &cc, &radii)?;
    eprintln!(
        "sigma {:.5}  ACR {:.5}  ACR/sigma {:.5}  CA {:.4}  ({} queries)",
        sigma, report.acr, report.acr_over_sigma, report.ca0, report.n
    );

    let mut rec_tsv = Tsv::new(&["query_id", "head", "relation", "tail", "count", "n0", "p_lower", "cr", "certified"]);
    for r in &records {
        rec_tsv.row(&[
            r.query_id.to_string(),
            r.query.head.to_string(),
            r.query.relation.to_string(),
            r.query.target.to_string(),
            r.count.to_string(),
            r.n0.to_string(),
            r.p_lower.to_string(),
            r.cr.to_string(),
            r.certified.to_string(),
        ]);
    }
    let mut ca_tsv = Tsv::new(&["radius", "radius_over_sigma", "ca"]);
    for (&(radius, ca), k) in report.ca_curve.iter().zip(&c.radii_over_sigma) {
        ca_tsv.row(&[radius.to_string(), k.to_string(), ca.to_string()]);
    }
    run.write_json(
        "certify.json",
        &CertifyOutput {
            split: c.split,
            config: cc,
            report: &report,
        },
    )?;
    run.write_bytes("certify_records.tsv", &rec_tsv.into_bytes())?;
    run.write_bytes("ca_curve.tsv", &ca_tsv.into_bytes())?;
    Ok(data)
}

#[derive(Serialize)]
struct HopReport {
    hops: usize,
    queries: usize,
    metrics: Option<RankingMetrics>,
}

pub fn multihop(cfg: &RunConfig, run: &mut RunDir) -> Result<Dataset, Failure> {
    cfg.validate_multihop()?;
    let data = load_data(cfg)?;
    let model = load_model(cfg, &data.kg)?;
    echo_config(cfg, run)?;
    let m = &cfg.multihop;
    let mut reports = Vec::new();
    let mut tsv = Tsv::new(&["hops", "metric", "value"]);
    for &h in &m.hops {
        let qs = enumerate_path_queries(&data.kg, m.split, h, m.max_queries, cfg.seed)?;
        let metrics = if qs.is_empty() {
            eprintln!("{h}p: no path queries found");
            None
        } else {
            let r = multihop_metrics(&model, &qs, m.beam)?;
            eprintln!("{h}p: {} queries  mrr {:.4}  hits@10 {:.4}", qs.len(), r.mrr, r.hits10);
            metric_rows(&mut tsv, &format!("{h}p"), &r);
            Some(r)
        };
        reports.push(HopReport {
            hops: h,
            queries: qs.len(),
            metrics,
        });
    }
    run.write_json("multihop.json", &reports)?;
    run.write_bytes("multihop.tsv", &tsv.into_bytes())?;
    Ok(data)
}

#[derive(Debug, Clone, Serialize)]
pub struct GridCell {
    pub alpha: f64,
    pub lambda: f64,
    pub valid_mrr: Option<f64>,
    pub acr: Option<f64>,
    pub acr_over_sigma: Option<f64>,
    pub ca0: Option<f64>,
    pub error: Option<String>,
}

fn run_cell(cfg: &RunConfig, data: &Dataset, filter: &FilterIndex, alpha: f64, lambda: f64) -> Result<GridCell, Failure> {
    let tc = TrainConfig {
        alpha,
        lambda,
        ..cfg.train.clone()
    };
    let model = kgd_core::train::train(&data.kg, &tc)?.model;
    let valid = queries(&data.kg, Split::Valid, None)?;
    let mrr = link_prediction(&model, &valid, filter, &EvalCondition::Clean)?.mrr;
    let q = queries(&data.kg, cfg.certify.split, cfg.certify.max_queries)?;
    let sigma = match cfg.certify.sigma {
        Some(s) => s,
        None => sigma_quantile(model.entity_table())?,
    };
    let cc = CertConfig {
        n0: cfg.certify.n0,
        confidence: cfg.certify.confidence,
        sigma,
        seed: cfg.seed,
    };
    let (_, rep) = robustness_report(&model, &q, filter, &cc, &[])?;
    Ok(GridCell {
        alpha,
        lambda,
        valid_mrr: Some(mrr),
        acr: Some(rep.acr),
        acr_over_sigma: Some(rep.acr_over_sigma),
        ca0: Some(rep.ca0),
        error: None,
    })
}

/// Train and certify every (α, λ) cell. Returns the dataset and whether
/// any cell failed; failed cells are reported, not fatal.
pub fn grid(cfg: &RunConfig, run: &mut RunDir) -> Result<(Dataset, bool), Failure> {
    cfg.validate_train()?;
    cfg.validate_certify()?;
    cfg.validate_grid()?;
    let data = load_data(cfg)?;
    echo_config(cfg, run)?;
    let filter = FilterIndex::build(&data.kg)?;
    let mut cells = Vec::new();
    for &alpha in &cfg.grid.alphas {
        for &lambda in &cfg.grid.lambdas {
            let cell = match run_cell(cfg, &data, &filter, alpha, lambda) {
                Ok(c) => c,
                Err(f) => GridCell {
                    alpha,
                    lambda,
                    valid_mrr: None,
                    acr: None,
                    acr_over_sigma: None,
                    ca0: None,
                    error: Some(match f {
                        Failure::Validation(m) => m,
                        Failure::Runtime(e) => format!("{e:#}"),
                    }),
                },
            };
            match &cell.error {
                None => eprintln!(
                    "alpha {alpha:<5} lambda {lambda:<5} valid MRR {:.4}  ACR/sigma {:.4}",
                    cell.valid_mrr.unwrap_or(f64::NAN),
                    cell.acr_over_sigma.unwrap_or(f64::NAN)
                ),
                Some(e) => eprintln!("alpha {alpha:<5} lambda {lambda:<5} failed: {e}"),
            }
            cells.push(cell);
        }
    }
    let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_owned(), |x| x.to_string());
    let mut tsv = Tsv::new(&["alpha", "lambda", "valid_mrr", "acr", "acr_over_sigma", "ca0", "status"]);
    for c in &cells {
        tsv.row(&[
            c.alpha.to_string(),
            c.lambda.to_string(),
            opt(c.valid_mrr),
            opt(c.acr),
            opt(c.acr_over_sigma),
            opt(c.ca0),
            c.error.clone().map_or_else(|| "ok".to_owned(), |e| format!("error: {}", e.replace(['\t', '\n'], " "))),
        ]);
    }
    run.write_bytes("grid.tsv", &tsv.into_bytes())?;
    run.write_json("grid.json", &cells)?;
    let failed = cells.iter().any(|c| c.error.is_some());
    Ok((data, failed))
}

/// Write a synthetic graph as triple files.
pub fn synth(cfg: &RunConfig, run: &mut RunDir) -> Result<(), Failure> {
    let spec = cfg.data.synthetic.clone().unwrap_or_default();
    let kg = generate(&spec).map_err(|e| Failure::Validation(e.to_string()))?;
    echo_config(cfg, run)?;
    for s in Split::ALL {
        run.write_bytes(&format!("{}.txt", s.name()), kg.to_triple_lines(s, cfg.data.separator).as_bytes())?;
    }
    eprintln!(
        "{} entities, {} relations, {} / {} / {} triples",
        kg.num_entities(),
        kg.num_relations(),
        kg.split(Split::Train).len(),
        kg.split(Split::Valid).len(),
        kg.split(Split::Test).len()
    );
    Ok(())
}

pub fn manifest_dataset(d: &Option<Dataset>) -> Option<(&str, usize, usize)> {
    d.as_ref().map(Dataset::manifest_info)
}
