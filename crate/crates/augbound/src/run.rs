//! Experiment drivers. Each sweep point is computed independently (in
//! parallel) and results are written in sweep order.

use crate::config::{EncoderSpec, ExperimentConfig, ExperimentKind};
use crate::error::{HarnessError, Result};
use crate::io::{self, Cell};
use augbound_core::bounds::{
    self, BoundInputs, BoundReport, GeneralizationInputs, PixelBoundInputs, Quantity, CENTERING_TOLERANCE,
};
use augbound_core::decomposition::{DecompositionReport, DiscreteWorld, InnerBoundSummary, RbarCheck};
use augbound_core::encoder::{linear_probe, train};
use augbound_core::metrics::{centering_residual, class_distance_terms, lipschitz_estimate, ClassDistanceTerms};
use augbound_core::pixel_model::sample_semantic_image;
use augbound_core::risk::{
    self, conditional_sup_risk_embeddings, empirical_unsup_risk, intermediate_sup_risk_embeddings,
    population_unsup_risk_mc, sup_risk_embeddings, Estimate, GenerativeSource, MeanClassifier, TupleSource,
};
use augbound_core::seed::{derive_seed, rng_for};
use augbound_core::{Architecture, AugDistribution, Embedder, Encoder, GenerativeConfig, Image};
use log::info;
use rayon::prelude::*;
use serde::Serialize;
use std::path::PathBuf;

// Independent random streams under the experiment seed.
const DATA: u64 = 1;
const TEST_DATA: u64 = 2;
const INIT: u64 = 3;
const TRAIN: u64 = 4;
const DISTANCES: u64 = 5;
const UNSUP: u64 = 6;
const SUP: u64 = 7;
const SAMPLE: u64 = 8;
const RADEMACHER: u64 = 9;
const CENTERING: u64 = 10;
const WORLD: u64 = 11;
const LIPSCHITZ: u64 = 12;

/// Files written by a run, in write order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
}

/// Runs a validated experiment and writes its outputs under `output_dir`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| HarnessError::io(&cfg.output_dir, e))?;
    info!("{} (seed {}) -> {}", cfg.kind, cfg.seed, cfg.output_dir.display());
    match cfg.kind {
        ExperimentKind::PixelDistances | ExperimentKind::ReprDistances => run_distances(cfg),
        ExperimentKind::BoundReport => run_bound_report(cfg),
        ExperimentKind::DecompCheck => run_decomp_check(cfg),
        ExperimentKind::TrainSweep => run_train_sweep(cfg),
    }
}

/// Class-balanced dataset: image `i` has class `i mod C` and its own seed.
pub fn generate_dataset(g: &GenerativeConfig, per_class: usize, seed: u64) -> Result<Vec<(Image, usize)>> {
    (0..g.num_classes * per_class)
        .into_par_iter()
        .map(|i| {
            let class = i % g.num_classes;
            Ok((sample_semantic_image(g, class, &mut rng_for(seed, i as u64))?.image, class))
        })
        .collect()
}

/// Loads the configured checkpoint or draws a fresh encoder.
pub fn build_encoder(spec: &EncoderSpec, input_dim: usize, seed: u64) -> Result<Encoder> {
    if let Some(path) = &spec.checkpoint {
        let enc = io::load_checkpoint(path)?;
        if enc.input_dim() != input_dim {
            return Err(HarnessError::config(
                "encoder.checkpoint",
                format!("checkpoint expects {} inputs, images have {input_dim}", enc.input_dim()),
            ));
        }
        return Ok(enc);
    }
    let mut rng = rng_for(seed, INIT);
    let enc = match spec.architecture {
        Architecture::FlattenIdentity => Encoder::flatten_identity(input_dim, spec.normalize),
        Architecture::Linear => Encoder::linear(input_dim, spec.output_dim, &mut rng),
        Architecture::Mlp1 => Encoder::mlp1(input_dim, spec.hidden_dim, spec.output_dim, &mut rng),
    };
    if enc.normalize() == spec.normalize {
        Ok(enc)
    } else {
        let (h, o) = (enc.hidden_dim(), enc.output_dim());
        Ok(Encoder::from_parts(spec.architecture, input_dim, h, o, spec.normalize, enc.params().to_vec())?)
    }
}

fn input_dim(g: &GenerativeConfig) -> usize {
    g.side * g.side * augbound_core::pixel_model::CHANNELS
}

fn out_path(cfg: &ExperimentConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

/// Spearman rank correlation with average ranks for ties; `None` when
/// either side is constant or there are fewer than two points.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for &k in &idx[i..=j] {
                r[k] = (i + j) as f64 / 2.0 + 1.0;
            }
            i = j + 1;
        }
        r
    }
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean) * (a - mean);
        syy += (b - mean) * (b - mean);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct DistancePoint {
    pub value: f64,
    pub augmentation: AugDistribution,
    pub terms: ClassDistanceTerms,
    pub sum: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DistanceSummary {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub parameter: &'static str,
    pub points: Vec<DistancePoint>,
    pub spearman_min_term: Option<f64>,
    pub spearman_max_term: Option<f64>,
}

const DISTANCE_HEADER: [&str; 8] =
    ["point", "parameter", "value", "min_term", "min_std_error", "max_term", "max_std_error", "sum"];

fn distance_row(i: usize, parameter: &str, value: f64, t: &ClassDistanceTerms) -> Vec<Cell> {
    vec![
        i.into(),
        parameter.into(),
        value.into(),
        t.min_term.value.into(),
        t.min_term.std_error.into(),
        t.max_term.value.into(),
        t.max_term.std_error.into(),
        (t.min_term.value + t.max_term.value).into(),
    ]
}

fn run_distances(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let g = cfg.generative.as_ref().expect("validated");
    let sweep = cfg.sweep.as_ref().expect("validated");
    let data = generate_dataset(g, cfg.dataset.images_per_class, derive_seed(cfg.seed, DATA))?;
    let encoder = match cfg.kind {
        ExperimentKind::ReprDistances => {
            Some(build_encoder(cfg.encoder.as_ref().expect("validated"), input_dim(g), cfg.seed)?)
        }
        _ => None,
    };
    let seed = derive_seed(cfg.seed, DISTANCES);
    let points = cfg
        .sweep_points()
        .into_par_iter()
        .map(|(value, aug)| {
            let embed = encoder.as_ref().map(|e| e as &dyn Embedder);
            let terms = class_distance_terms(&data, &aug, embed, &cfg.counts, seed)?;
            let sum = terms.min_term.value + terms.max_term.value;
            Ok(DistancePoint { value, augmentation: aug, terms, sum })
        })
        .collect::<Result<Vec<_>>>()?;

    let parameter = sweep.parameter.name();
    let rows: Vec<Vec<Cell>> =
        points.iter().enumerate().map(|(i, p)| distance_row(i, parameter, p.value, &p.terms)).collect();
    let values: Vec<f64> = points.iter().map(|p| p.value).collect();
    let mins: Vec<f64> = points.iter().map(|p| p.terms.min_term.value).collect();
    let maxs: Vec<f64> = points.iter().map(|p| p.terms.max_term.value).collect();
    let summary = DistanceSummary {
        kind: cfg.kind,
        seed: cfg.seed,
        parameter,
        spearman_min_term: spearman(&values, &mins),
        spearman_max_term: spearman(&values, &maxs),
        points,
    };
    let csv = out_path(cfg, &format!("{}.csv", cfg.kind));
    let json = out_path(cfg, &format!("{}.json", cfg.kind));
    io::write_plot_data(&csv, &DISTANCE_HEADER, &rows)?;
    io::write_json(&json, &summary)?;
    Ok(RunOutput { files: vec![csv, json] })
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundPoint {
    pub value: f64,
    pub augmentation: AugDistribution,
    pub r_sup_all: f64,
    pub rbar_sup: Estimate,
    pub embedding_terms: ClassDistanceTerms,
    pub pixel_terms: ClassDistanceTerms,
    pub reports: Vec<BoundReport>,
}

/// Supervised-side quantities computed from an external embedding table.
#[derive(Debug, Clone, Serialize)]
pub struct EmbeddingAudit {
    pub rows: usize,
    pub dim: usize,
    pub classes: usize,
    pub prior: Vec<f64>,
    pub tau_k: f64,
    pub col_term: f64,
    pub r_sup_all: f64,
    pub rbar_sup: Estimate,
    pub r_sup_conditional: Option<Estimate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundSummary {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub parameter: &'static str,
    pub k: usize,
    pub points: Vec<BoundPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedding_audit: Option<EmbeddingAudit>,
}

fn embed_all(f: &dyn Embedder, data: &[(Image, usize)]) -> Result<Vec<(Vec<f64>, usize)>> {
    Ok(data.iter().map(|(x, c)| Ok((f.embed(x)?, *c))).collect::<augbound_core::Result<Vec<_>>>()?)
}

fn bound_point(
    cfg: &ExperimentConfig,
    g: &GenerativeConfig,
    f: &Encoder,
    data: &[(Image, usize)],
    value: f64,
    aug: AugDistribution,
) -> Result<BoundPoint> {
    let b = &cfg.bound;
    let k = b.k;
    let seed = cfg.seed;
    let source = GenerativeSource::new(g.clone(), aug)?;
    let r_un = population_unsup_risk_mc(&source, f, b.unsup_samples, k, derive_seed(seed, UNSUP))?;
    let embedding_terms = class_distance_terms(data, &aug, Some(f), &cfg.counts, derive_seed(seed, DISTANCES))?;
    let pixel_terms = class_distance_terms(data, &aug, None, &cfg.counts, derive_seed(seed, DISTANCES))?;

    let prior = &g.class_prior;
    let tau = risk::tau_k(prior, k);
    let col = risk::col_term(prior, k);
    let embedded = embed_all(f, data)?;
    let w = MeanClassifier::from_embeddings(&embedded, g.num_classes)?;
    let r_sup_all = sup_risk_embeddings(&w, &embedded)?;
    let rbar_sup = intermediate_sup_risk_embeddings(&w, prior, k, b.sup_samples, &embedded, derive_seed(seed, SUP))?;
    let r_sup = if tau < bounds::VACUITY_THRESHOLD {
        let e = conditional_sup_risk_embeddings(&w, prior, k, b.sup_samples, &embedded, derive_seed(seed, SUP))?;
        Some(Quantity::monte_carlo(e.value, e.std_error))
    } else {
        None
    };

    let mc = |e: &Estimate| Quantity::monte_carlo(e.value, e.std_error);
    let dist = |d: &augbound_core::DistanceEstimate| Quantity::monte_carlo(d.value, d.std_error);
    let inputs = BoundInputs {
        r_un: mc(&r_un),
        tau: Quantity::exact(tau),
        col_term: Quantity::exact(col),
        min_term: dist(&embedding_terms.min_term),
        max_term: dist(&embedding_terms.max_term),
        r_sup,
    };

    let residuals = data
        .iter()
        .take(b.centering_images)
        .enumerate()
        .map(|(i, (x, _))| {
            centering_residual(f, x, &aug, b.centering_views, derive_seed(derive_seed(seed, CENTERING), i as u64))
        })
        .collect::<augbound_core::Result<Vec<_>>>()?;

    let mut reports = vec![bounds::bound_thm1(&inputs)?, bounds::bound_thm2(&inputs, &residuals, CENTERING_TOLERANCE)?];

    // The closed-form complexity covers the linear class only.
    if f.architecture() == Architecture::Linear {
        let tuples = (0..b.sample_size)
            .map(|i| source.sample_tuple(k, &mut rng_for(derive_seed(seed, SAMPLE), i as u64)))
            .collect::<augbound_core::Result<Vec<_>>>()?;
        let r_hat = empirical_unsup_risk(&tuples, f)?;
        let w_max = f.params().iter().map(|p| p * p).sum::<f64>().sqrt();
        let rad =
            risk::rademacher_linear(&tuples, w_max, f.output_dim(), b.rademacher_draws, derive_seed(seed, RADEMACHER))?;
        let r = 1.0;
        let gen = GeneralizationInputs {
            base: BoundInputs { r_un: Quantity::estimated(r_hat), ..inputs },
            rademacher: mc(&rad),
            r,
            b: risk::loss_bound(k, r),
            n: b.sample_size,
            delta: b.delta,
        };
        reports.push(bounds::bound_thm3(&gen)?);
    }

    let mut rng = rng_for(seed, LIPSCHITZ);
    let pairs: Vec<(Image, Image)> = data
        .iter()
        .map(|(x, _)| {
            let a = augbound_core::augment::sample_augmentation(&aug, &mut rng);
            (x.clone(), a.apply(x))
        })
        .chain(data.windows(2).map(|w| (w[0].0.clone(), w[1].0.clone())))
        .collect();
    let c_l = lipschitz_estimate(f, &pairs)?;
    let pixel = PixelBoundInputs {
        base: BoundInputs { min_term: dist(&pixel_terms.min_term), max_term: dist(&pixel_terms.max_term), ..inputs },
        c_l: Quantity::estimated(c_l),
        centering_residuals: residuals,
        centering_tolerance: CENTERING_TOLERANCE,
    };
    reports.push(bounds::bound_thm6(&pixel)?);

    Ok(BoundPoint { value, augmentation: aug, r_sup_all, rbar_sup, embedding_terms, pixel_terms, reports })
}

fn embedding_audit(cfg: &ExperimentConfig, path: &std::path::Path) -> Result<EmbeddingAudit> {
    let table = io::load_embeddings(path)?;
    let labeled = table.labeled();
    if labeled.is_empty() {
        return Err(HarnessError::format(path, "embedding table is empty"));
    }
    let c = table.num_classes();
    let mut prior = vec![0.0; c];
    for (_, y) in &labeled {
        prior[*y] += 1.0 / labeled.len() as f64;
    }
    let total: f64 = prior.iter().sum();
    prior.iter_mut().for_each(|p| *p /= total);
    let k = cfg.bound.k;
    let n = cfg.bound.sup_samples;
    let seed = derive_seed(cfg.seed, SUP);
    let w = MeanClassifier::from_embeddings(&labeled, c)?;
    let tau = risk::tau_k(&prior, k);
    Ok(EmbeddingAudit {
        rows: table.len(),
        dim: table.dim(),
        classes: c,
        tau_k: tau,
        col_term: risk::col_term(&prior, k),
        r_sup_all: sup_risk_embeddings(&w, &labeled)?,
        rbar_sup: intermediate_sup_risk_embeddings(&w, &prior, k, n, &labeled, seed)?,
        r_sup_conditional: if tau < bounds::VACUITY_THRESHOLD {
            Some(conditional_sup_risk_embeddings(&w, &prior, k, n, &labeled, seed)?)
        } else {
            None
        },
        prior,
    })
}

fn run_bound_report(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let g = cfg.generative.as_ref().expect("validated");
    let sweep = cfg.sweep.as_ref().expect("validated");
    let data = generate_dataset(g, cfg.dataset.images_per_class, derive_seed(cfg.seed, DATA))?;
    let f = build_encoder(cfg.encoder.as_ref().expect("validated"), input_dim(g), cfg.seed)?;
    if !f.normalize() {
        return Err(HarnessError::config("encoder.checkpoint", "bound reports need a unit-norm encoder"));
    }
    let points = cfg
        .sweep_points()
        .into_par_iter()
        .map(|(value, aug)| bound_point(cfg, g, &f, &data, value, aug))
        .collect::<Result<Vec<_>>>()?;
    let embedding_audit = cfg.embeddings.as_deref().map(|p| embedding_audit(cfg, p)).transpose()?;

    let parameter = sweep.parameter.name();
    let mut rows = Vec::new();
    for (i, p) in points.iter().enumerate() {
        for r in &p.reports {
            rows.push(vec![
                i.into(),
                parameter.into(),
                p.value.into(),
                r.theorem.as_str().into(),
                r.lhs.into(),
                r.rhs.into(),
                r.slack.into(),
                r.is_vacuous().into(),
            ]);
        }
    }
    let summary = BoundSummary { kind: cfg.kind, seed: cfg.seed, parameter, k: cfg.bound.k, points, embedding_audit };
    let csv = out_path(cfg, "bound-report.csv");
    let json = out_path(cfg, "bound-report.json");
    io::write_plot_data(&csv, &["point", "parameter", "value", "theorem", "lhs", "rhs", "slack", "vacuous"], &rows)?;
    io::write_json(&json, &summary)?;
    Ok(RunOutput { files: vec![csv, json] })
}

#[derive(Debug, Clone, Serialize)]
pub struct DecompSummary {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub enumeration_size: u128,
    pub decomposition: DecompositionReport,
    pub inner_risk_bound: InnerBoundSummary,
    pub rbar_bound: RbarCheck,
    pub collision_relation: augbound_core::decomposition::CurlRelation,
    pub thm1_certificate: BoundReport,
}

fn run_decomp_check(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let wc = cfg.world.as_ref().expect("validated");
    let mut rng = rng_for(cfg.seed, WORLD);
    let world = DiscreteWorld::random(wc.classes, wc.images_per_class, wc.augmentations, wc.k, wc.side, &mut rng)?;
    let f = Encoder::linear(wc.side * wc.side * augbound_core::pixel_model::CHANNELS, wc.output_dim, &mut rng);
    let embedded = world.embed(&f)?;
    let decomposition = embedded.decomposition_report()?;
    let summary = DecompSummary {
        kind: cfg.kind,
        seed: cfg.seed,
        enumeration_size: world.enumeration_size(),
        inner_risk_bound: embedded.inner_risk_bound_all()?,
        rbar_bound: embedded.rbar_bound()?,
        collision_relation: embedded.curl_relation(),
        thm1_certificate: bounds::certify_thm1_discrete(&embedded)?,
        decomposition,
    };
    info!("decomposition gap {:e}", summary.decomposition.gap);
    let rows: Vec<Vec<Cell>> = summary
        .decomposition
        .entries
        .iter()
        .map(|e| {
            let labels: Vec<String> = e.pattern.labels.iter().map(|l| l.to_string()).collect();
            vec![
                e.class.into(),
                labels.join(";").into(),
                Cell::Int(e.pattern.multiplicity as i64),
                e.p.into(),
                e.r.into(),
            ]
        })
        .collect();
    let csv = out_path(cfg, "decomp-check.csv");
    let json = out_path(cfg, "decomp-check.json");
    io::write_plot_data(&csv, &["class", "pattern", "multiplicity", "p_k", "r_k"], &rows)?;
    io::write_json(&json, &summary)?;
    Ok(RunOutput { files: vec![csv, json] })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainPoint {
    pub value: f64,
    pub augmentation: AugDistribution,
    pub final_loss: f64,
    pub terms: ClassDistanceTerms,
    pub sum: f64,
    pub accuracy: f64,
    pub degenerate_outputs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub parameter: &'static str,
    pub points: Vec<TrainPoint>,
    /// Sweep point with the smallest distance sum (first on ties).
    pub argmin_sum: usize,
    /// Sweep point with the highest probe accuracy (first on ties).
    pub argmax_accuracy: usize,
    /// The argmin-sum point attains the best accuracy of the sweep.
    pub agree: bool,
}

fn run_train_sweep(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let g = cfg.generative.as_ref().expect("validated");
    let sweep = cfg.sweep.as_ref().expect("validated");
    let train_set = generate_dataset(g, cfg.probe.train_per_class, derive_seed(cfg.seed, DATA))?;
    let test_set = generate_dataset(g, cfg.probe.test_per_class, derive_seed(cfg.seed, TEST_DATA))?;
    let init = build_encoder(cfg.encoder.as_ref().expect("validated"), input_dim(g), cfg.seed)?;
    let tc = cfg.train.to_train_config(derive_seed(cfg.seed, TRAIN));
    let probe = cfg.probe.probe_config();

    let results = cfg
        .sweep_points()
        .into_par_iter()
        .map(|(value, aug)| {
            let source = GenerativeSource::new(g.clone(), aug)?;
            let out = train(&init, &source, &tc)?;
            let enc = out.encoder;
            let terms =
                class_distance_terms(&test_set, &aug, Some(&enc), &cfg.counts, derive_seed(cfg.seed, DISTANCES))?;
            let accuracy = linear_probe(&enc, &train_set, &test_set, &probe)?;
            info!("{} = {value}: accuracy {accuracy}", sweep.parameter.name());
            let point = TrainPoint {
                value,
                augmentation: aug,
                final_loss: out.trace.last().copied().unwrap_or(f64::NAN),
                sum: terms.min_term.value + terms.max_term.value,
                terms,
                accuracy,
                degenerate_outputs: enc.degenerate_count(),
            };
            Ok((point, out.trace, enc))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut files = Vec::new();
    for (i, (_, trace, enc)) in results.iter().enumerate() {
        let trace_path = out_path(cfg, &format!("trace_{i}.csv"));
        let ckpt_path = out_path(cfg, &format!("encoder_{i}.aenc"));
        io::write_loss_trace(&trace_path, trace)?;
        io::save_checkpoint(&ckpt_path, enc)?;
        files.extend([trace_path, ckpt_path]);
    }
    let points: Vec<TrainPoint> = results.into_iter().map(|(p, _, _)| p).collect();
    let first_best = |key: &dyn Fn(&TrainPoint) -> f64| {
        (1..points.len()).fold(0, |best, i| if key(&points[i]) > key(&points[best]) { i } else { best })
    };
    let argmin_sum = first_best(&|p| -p.sum);
    let argmax_accuracy = first_best(&|p| p.accuracy);
    let agree = points[argmin_sum].accuracy == points[argmax_accuracy].accuracy;

    let parameter = sweep.parameter.name();
    let rows: Vec<Vec<Cell>> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut row = distance_row(i, parameter, p.value, &p.terms);
            row.extend([p.final_loss.into(), p.accuracy.into()]);
            row
        })
        .collect();
    let mut header = DISTANCE_HEADER.to_vec();
    header.extend(["final_loss", "accuracy"]);
    let summary =
        TrainSummary { kind: cfg.kind, seed: cfg.seed, parameter, points, argmin_sum, argmax_accuracy, agree };
    let csv = out_path(cfg, "train-sweep.csv");
    let json = out_path(cfg, "train-sweep.json");
    io::write_plot_data(&csv, &header, &rows)?;
    io::write_json(&json, &summary)?;
    files.extend([csv, json]);
    Ok(RunOutput { files })
}
