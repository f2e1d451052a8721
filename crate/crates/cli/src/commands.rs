use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use label_audit::confidence::{self, ConfidenceMethod, ProbRecord};
use label_audit::dataset::{generate_synthetic, split_aux, FeatureFormat};
use label_audit::evaluation::report::{AuditReport, Conventions, NamedHistograms, RetrainSummary};
use label_audit::evaluation::{
    detection_curve, error_reduction_rate, mean_curve, norm_histograms, random_ranking, similarity_histograms,
    spearman_matrix, test_accuracy, theory_ratio_check, DetectionCurve,
};
use label_audit::gradient::{
    aggregate_influence, aggregate_tracin, gradients_for, LastLayerHessian, LissaInverse, PairwiseMethod,
};
use label_audit::model::{
    best_checkpoint, best_index, checkpoint_file_name, load_checkpoint_dir, read_checkpoint, train, write_checkpoint,
};
use label_audit::noise::cyclic_derangement;
use label_audit::similarity::{audit, audit_features, detect, features_of, write_rectify_log};
use label_audit::{
    Activation, AuxiliarySet, Dataset, LrSchedule, ModelCheckpoint, NoiseKind, NoiseReport, Optimizer, RectifyAction,
    ScoreTable, Similarity,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::*;

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    checkpoint_dir: PathBuf,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// The flag if given, else `<out>/<stem>.bin`, falling back to `.csv`
    /// when only that exists.
    fn input(&self, flag: &Option<PathBuf>, stem: &str) -> PathBuf {
        if let Some(p) = flag {
            return p.clone();
        }
        let bin = self.path(&format!("{stem}.bin"));
        let csv = self.path(&format!("{stem}.csv"));
        if !bin.exists() && csv.exists() {
            csv
        } else {
            bin
        }
    }
}

pub(crate) fn dispatch(cli: Cli) -> CliResult<()> {
    let mut cfg = RunConfig::load(cli.global.config.as_deref())?;
    if let Some(seed) = cli.global.seed.or(cfg.seed) {
        cfg.apply_seed(seed);
    }
    cfg.validate()?;
    let out = cfg.resolve_out(cli.global.out.as_deref());
    fs::create_dir_all(&out)?;
    let checkpoint_dir = cli
        .global
        .checkpoint_dir
        .clone()
        .unwrap_or_else(|| out.join("checkpoints"));
    let mut ctx = Ctx {
        cfg,
        out,
        checkpoint_dir,
    };
    match cli.command {
        Command::Synth(a) => synth(&mut ctx, a),
        Command::Inject(a) => inject(&mut ctx, a),
        Command::Train(a) => train_cmd(&mut ctx, a),
        Command::Score(a) => score(&mut ctx, a),
        Command::Rank(a) => rank(&ctx, a),
        Command::Rectify(a) => rectify(&mut ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::TheoryCheck(a) => theory(&mut ctx, a),
        Command::Report(a) => report(&ctx, a),
    }
}

fn load(path: &Path, num_classes: Option<usize>) -> CliResult<Dataset> {
    if !path.exists() {
        return Err(CliError::argument(format!("{} does not exist", path.display())));
    }
    Ok(Dataset::load(path, FeatureFormat::from_path(path), num_classes)?)
}

fn save(d: &Dataset, path: &Path) -> CliResult<()> {
    Ok(d.save(path, FeatureFormat::from_path(path))?)
}

/// `name` with the extension of `like`.
fn sibling(ctx: &Ctx, name: &str, like: &Path) -> PathBuf {
    let ext = if FeatureFormat::from_path(like) == FeatureFormat::Csv {
        "csv"
    } else {
        "bin"
    };
    ctx.path(&format!("{name}.{ext}"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn read_noise(path: &Path) -> CliResult<NoiseReport> {
    if !path.exists() {
        return Err(CliError::undefined_metric(format!(
            "no noise report at {}: ground-truth corrupted ids are required (pass --noise)",
            path.display()
        )));
    }
    Ok(NoiseReport::read_csv(File::open(path)?)?)
}

fn read_scores(path: &Path) -> CliResult<Vec<ScoreTable>> {
    if !path.exists() {
        return Err(CliError::argument(format!(
            "{} does not exist; run `score` first",
            path.display()
        )));
    }
    Ok(ScoreTable::read_csv(File::open(path)?)?)
}

fn synth(ctx: &mut Ctx, a: SynthArgs) -> CliResult<()> {
    let cfg = &mut ctx.cfg;
    let spec = &mut cfg.synth;
    if let Some(v) = a.classes {
        spec.num_classes = v;
    }
    if let Some(v) = a.dim {
        spec.dim = v;
    }
    if let Some(v) = a.per_class {
        spec.per_class = v;
    }
    if let Some(v) = a.separation {
        spec.separation = v;
    }
    if let Some(v) = a.std {
        spec.std = v;
    }
    let aux_size = a.aux_size.unwrap_or(cfg.aux_size);
    let test_size = a.test_size.unwrap_or(cfg.test_size);
    let seed = cfg.run_seed();

    let d = generate_synthetic(&cfg.synth)?;
    let (rest, aux) = split_aux(&d, aux_size, seed)?;
    let ext = match a.format {
        FileFormat::Bin => "bin",
        FileFormat::Csv => "csv",
    };
    let (train_set, test) = if test_size > 0 {
        let (t, held) = split_aux(&rest, test_size, seed.wrapping_add(1))?;
        (t, Some(held.into_dataset()))
    } else {
        (rest, None)
    };
    save(&train_set, &ctx.path(&format!("train.{ext}")))?;
    save(aux.dataset(), &ctx.path(&format!("aux.{ext}")))?;
    if let Some(t) = test {
        save(&t, &ctx.path(&format!("test.{ext}")))?;
    }
    Ok(())
}

fn inject(ctx: &mut Ctx, a: InjectArgs) -> CliResult<()> {
    let input = ctx.input(&a.input, "train");
    let d = load(&input, None)?;
    let spec = &mut ctx.cfg.noise;
    if let Some(rate) = a.rate {
        spec.rate = rate;
    }
    let kind = match a.kind {
        None => spec.kind.clone(),
        Some(KindArg::Uniform) => NoiseKind::Uniform,
        Some(KindArg::Ambiguity) => NoiseKind::Ambiguity {
            mapping: match &spec.kind {
                NoiseKind::Ambiguity { mapping } => mapping.clone(),
                _ => cyclic_derangement(d.num_classes()),
            },
        },
        Some(KindArg::Concentrated) => match &spec.kind {
            NoiseKind::Concentrated { source, target } => NoiseKind::Concentrated {
                source: *source,
                target: *target,
            },
            _ => NoiseKind::Concentrated { source: 0, target: 1 },
        },
    };
    spec.kind = match kind {
        NoiseKind::Ambiguity { mapping } => NoiseKind::Ambiguity {
            mapping: a.mapping.clone().unwrap_or(mapping),
        },
        NoiseKind::Concentrated { source, target } => NoiseKind::Concentrated {
            source: a.source.unwrap_or(source),
            target: a.target.unwrap_or(target),
        },
        other => {
            if a.mapping.is_some() || a.source.is_some() || a.target.is_some() {
                return Err(CliError::argument(
                    "--mapping applies to ambiguity noise, --source/--target to concentrated noise",
                ));
            }
            other
        }
    };
    let (noisy, report) = spec.inject(&d)?;
    save(&noisy, &sibling(ctx, "noisy", &input))?;
    report.write_csv(BufWriter::new(File::create(ctx.path("noise.csv"))?))?;
    Ok(())
}

#[derive(Serialize)]
struct EpochSummary {
    epoch: usize,
    learning_rate: f64,
    val_accuracy: f64,
}

#[derive(Serialize)]
struct TrainingSummary {
    best_epoch: usize,
    epochs: Vec<EpochSummary>,
}

fn train_cmd(ctx: &mut Ctx, a: TrainArgs) -> CliResult<()> {
    let m = &mut ctx.cfg.model;
    if let Some(v) = a.hidden {
        m.hidden = v;
    }
    if let Some(v) = a.activation {
        m.activation = match v {
            ActivationArg::Tanh => Activation::Tanh,
            ActivationArg::Relu => Activation::Relu,
        };
    }
    if let Some(v) = a.epochs {
        m.epochs = v;
    }
    if let Some(v) = a.batch_size {
        m.batch_size = v;
    }
    if let Some(v) = a.lr {
        m.learning_rate = LrSchedule::Constant(v);
    }
    if let Some(v) = a.weight_decay {
        m.weight_decay = v;
    }
    if let Some(v) = a.optimizer {
        m.optimizer = match v {
            OptimizerArg::Adamw => Optimizer::AdamW,
            OptimizerArg::Sgd => Optimizer::Sgd,
        };
    }
    let train_path = ctx.input(&a.train, "noisy");
    let d = load(&train_path, None)?;
    let val = load(&ctx.input(&a.val, "aux"), Some(d.num_classes()))?;
    let ckpts = train(&d, &val, &ctx.cfg.model)?;

    fs::create_dir_all(&ctx.checkpoint_dir)?;
    for entry in fs::read_dir(&ctx.checkpoint_dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("epoch_") && name.ends_with(".ckpt") {
            fs::remove_file(&path)?;
        }
    }
    for c in &ckpts {
        fs::write(
            ctx.checkpoint_dir.join(checkpoint_file_name(c.epoch)),
            write_checkpoint(c),
        )?;
    }
    let best = best_checkpoint(&ckpts).expect("at least one epoch");
    write_json(
        &ctx.path("training.json"),
        &TrainingSummary {
            best_epoch: best.epoch,
            epochs: ckpts
                .iter()
                .map(|c| EpochSummary {
                    epoch: c.epoch,
                    learning_rate: c.learning_rate,
                    val_accuracy: c.val_accuracy,
                })
                .collect(),
        },
    )
}

/// The checkpoint to embed with and the history up to and including it.
struct Model {
    best: ModelCheckpoint,
    history: Vec<ModelCheckpoint>,
}

fn load_model(ctx: &Ctx, src: &ModelSource) -> CliResult<Option<Model>> {
    if src.raw_features {
        return Ok(None);
    }
    if let Some(path) = &src.checkpoint {
        let c = read_checkpoint(&fs::read(path)?)?;
        return Ok(Some(Model {
            best: c.clone(),
            history: vec![c],
        }));
    }
    if !ctx.checkpoint_dir.is_dir() {
        return Err(CliError::argument(format!(
            "no checkpoint directory at {}; run `train` first or pass --raw-features",
            ctx.checkpoint_dir.display()
        )));
    }
    let mut all = load_checkpoint_dir(&ctx.checkpoint_dir)?;
    let Some(i) = best_index(&all) else {
        return Err(CliError::argument(format!(
            "no checkpoints in {}; run `train` first or pass --raw-features",
            ctx.checkpoint_dir.display()
        )));
    };
    all.truncate(i + 1);
    Ok(Some(Model {
        best: all[i].clone(),
        history: all,
    }))
}

fn need_model<'a>(model: Option<&'a Model>, method: &str) -> CliResult<&'a Model> {
    model.ok_or_else(|| CliError::argument(format!("method {method} needs a trained model, not raw features")))
}

fn score_tables(
    ctx: &Ctx,
    d: &Dataset,
    aux: &AuxiliarySet,
    model: Option<&Model>,
    methods: &[String],
    k: usize,
) -> CliResult<Vec<ScoreTable>> {
    let mut tables = Vec::with_capacity(methods.len());
    let mut embedded: Option<(Dataset, AuxiliarySet)> = None;
    let mut records: Option<Vec<ProbRecord>> = None;
    let mut grads = None;
    for method in methods {
        let table = match method.as_str() {
            "sim-cos" | "sim-dot" => {
                if embedded.is_none() {
                    embedded = Some(match model {
                        Some(m) => label_audit::similarity::embed_pair(d, aux, &m.best)?,
                        None => (d.clone(), aux.clone()),
                    });
                }
                let (e, ea) = embedded.as_ref().expect("just set");
                let measure = if method == "sim-cos" {
                    Similarity::Cosine
                } else {
                    Similarity::Dot
                };
                detect(e, ea, k, measure)?.scores
            }
            "sc" | "nm" | "ce" => {
                let m = need_model(model, method)?;
                if records.is_none() {
                    let probs = m.best.predict_proba_batch(d.features())?;
                    records = Some(ProbRecord::from_matrix(d.ids(), d.labels(), &probs)?);
                }
                let which = match method.as_str() {
                    "sc" => ConfidenceMethod::SelfConfidence,
                    "nm" => ConfidenceMethod::NormalizedMargin,
                    _ => ConfidenceMethod::ConfidenceWeightedEntropy,
                };
                confidence::score_table(which, records.as_ref().expect("just set"))?
            }
            "gd" | "gc" | "if" => {
                let m = need_model(model, method)?;
                if grads.is_none() {
                    grads = Some((gradients_for(&m.best, d)?, gradients_for(&m.best, aux.dataset())?));
                }
                let (train_grads, ref_grads) = grads.as_ref().expect("just set");
                match method.as_str() {
                    "gd" => aggregate_influence(train_grads, ref_grads, PairwiseMethod::Dot)?,
                    "gc" => aggregate_influence(train_grads, ref_grads, PairwiseMethod::Cosine)?,
                    _ => {
                        let hessian = LastLayerHessian::new(
                            m.best.predict_proba_batch(d.features())?,
                            features_of(d, Some(&m.best))?,
                            None,
                        )?;
                        let inverse = LissaInverse {
                            hessian: &hessian,
                            config: ctx.cfg.lissa.clone(),
                        };
                        aggregate_influence(
                            train_grads,
                            ref_grads,
                            PairwiseMethod::Influence {
                                inverse: &inverse,
                                train_size: d.len(),
                            },
                        )?
                    }
                }
            }
            "tracin" => {
                let m = need_model(model, method)?;
                let mut train_grads = Vec::new();
                let mut ref_grads = Vec::new();
                let mut lrs = Vec::new();
                for c in &m.history {
                    train_grads.push(gradients_for(c, d)?);
                    ref_grads.push(gradients_for(c, aux.dataset())?);
                    lrs.push(c.learning_rate);
                }
                aggregate_tracin(&train_grads, &ref_grads, &lrs)?
            }
            other => return Err(CliError::argument(format!("unknown method {other:?}"))),
        };
        tables.push(table);
    }
    Ok(tables)
}

fn load_pair(ctx: &Ctx, data: &Option<PathBuf>, aux: &Option<PathBuf>) -> CliResult<(PathBuf, Dataset, AuxiliarySet)> {
    let path = ctx.input(data, "noisy");
    let d = load(&path, None)?;
    let aux = AuxiliarySet::new(load(&ctx.input(aux, "aux"), Some(d.num_classes()))?, &d)?;
    Ok((path, d, aux))
}

fn score(ctx: &mut Ctx, a: ScoreArgs) -> CliResult<()> {
    if let Some(m) = a.methods {
        ctx.cfg.methods = m;
        ctx.cfg.validate()?;
    }
    if let Some(k) = a.k {
        ctx.cfg.rectify.k = k;
    }
    let (_, d, aux) = load_pair(ctx, &a.data, &a.aux)?;
    let model = load_model(ctx, &a.model)?;
    let tables = score_tables(ctx, &d, &aux, model.as_ref(), &ctx.cfg.methods, ctx.cfg.rectify.k)?;
    ScoreTable::write_csv(&tables, BufWriter::new(File::create(ctx.path("scores.csv"))?))?;
    Ok(())
}

fn rank(ctx: &Ctx, a: RankArgs) -> CliResult<()> {
    let tables = read_scores(&a.scores.clone().unwrap_or_else(|| ctx.path("scores.csv")))?;
    let table = match &a.method {
        None => tables.first(),
        Some(m) => tables.iter().find(|t| &t.method == m),
    }
    .ok_or_else(|| CliError::argument("requested method not found in score tables"))?;
    let mut ranked = table.ranked_entries();
    if let Some(top) = a.top {
        if !(top > 0.0 && top <= 1.0) {
            return Err(CliError::argument("--top must be in (0, 1]"));
        }
        let keep = ((top * ranked.len() as f64) - 1e-9).ceil() as usize;
        ranked.truncate(keep);
    }
    let path = ctx.path(&format!("ranking_{}.csv", table.method));
    let mut out = String::from("rank,id,score\n");
    for (i, e) in ranked.iter().enumerate() {
        out.push_str(&format!("{},{},{:?}\n", i + 1, e.id, e.score));
    }
    fs::write(path, out)?;
    Ok(())
}

fn rectify(ctx: &mut Ctx, a: RectifyArgs) -> CliResult<()> {
    let r = &mut ctx.cfg.rectify;
    if let Some(v) = a.k {
        r.k = v;
    }
    if let Some(v) = a.p {
        r.p = v;
    }
    if let Some(v) = a.tau {
        r.tau = v;
    }
    if let Some(v) = a.action {
        r.action = match v {
            ActionArg::Rectify => RectifyAction::Rectify,
            ActionArg::Remove => RectifyAction::Remove,
        };
    }
    let measure = match a.measure {
        MeasureArg::Cos => Similarity::Cosine,
        MeasureArg::Dot => Similarity::Dot,
    };
    let (path, d, aux) = load_pair(ctx, &a.data, &a.aux)?;
    let outcome = match load_model(ctx, &a.model)? {
        Some(m) => audit(&d, &aux, &m.best, &ctx.cfg.rectify, measure)?,
        None => audit_features(&d, &aux, &ctx.cfg.rectify, measure)?,
    };
    save(&outcome.dataset, &sibling(ctx, "rectified", &path))?;
    write_rectify_log(&outcome.log, BufWriter::new(File::create(ctx.path("rectify_log.csv"))?))?;
    Ok(())
}

fn curves(
    cfg: &RunConfig,
    tables: &[ScoreTable],
    noise: &NoiseReport,
) -> CliResult<(Vec<DetectionCurve>, DetectionCurve)> {
    let curves = tables
        .iter()
        .map(|t| detection_curve(&t.method, &t.ranking(), noise, &cfg.t_grid))
        .collect::<label_audit::Result<Vec<_>>>()?;
    let mut ids: Vec<u64> = tables
        .first()
        .map(|t| t.entries.iter().map(|e| e.id).collect())
        .unwrap_or_default();
    ids.sort_unstable();
    let random = cfg
        .seeds
        .iter()
        .map(|&s| detection_curve("random", &random_ranking(&ids, s), noise, &cfg.t_grid))
        .collect::<label_audit::Result<Vec<_>>>()?;
    Ok((curves, mean_curve("random", &random)?))
}

fn optional_err(before: &Path, after: &Path) -> CliResult<Option<f64>> {
    if !(before.exists() && after.exists()) {
        return Ok(None);
    }
    let b = load(before, None)?;
    let a = load(after, Some(b.num_classes()))?;
    Ok(Some(error_reduction_rate(&b, &a)?))
}

#[derive(Serialize)]
struct Evaluation {
    conventions: Conventions,
    detection_curves: Vec<DetectionCurve>,
    random_baseline: DetectionCurve,
    error_reduction_rate: Option<f64>,
}

fn evaluate(ctx: &Ctx, a: EvaluateArgs) -> CliResult<()> {
    let noise = read_noise(&a.noise.clone().unwrap_or_else(|| ctx.path("noise.csv")))?;
    let tables = read_scores(&a.scores.clone().unwrap_or_else(|| ctx.path("scores.csv")))?;
    let (detection_curves, random_baseline) = curves(&ctx.cfg, &tables, &noise)?;
    let before = ctx.input(&a.before, "noisy");
    let after = ctx.input(&a.after, "rectified");
    let err = if a.before.is_some() || a.after.is_some() {
        Some(error_reduction_rate(&load(&before, None)?, &load(&after, None)?)?)
    } else {
        optional_err(&before, &after)?
    };
    write_json(
        &ctx.path("evaluation.json"),
        &Evaluation {
            conventions: Conventions::default(),
            detection_curves,
            random_baseline,
            error_reduction_rate: err,
        },
    )
}

fn theory(ctx: &mut Ctx, a: TheoryArgs) -> CliResult<()> {
    let pairs = a.pairs.unwrap_or(ctx.cfg.theory_pairs);
    let d = load(&ctx.input(&a.data, "noisy"), None)?;
    let model = load_model(ctx, &a.model)?;
    let m = need_model(model.as_ref(), "theory-check")?;
    let check = theory_ratio_check(&d, &m.best, pairs, ctx.cfg.run_seed())?;
    write_json(&ctx.path("theory.json"), &check)
}

fn retrain_summary(ctx: &Ctx, d: &Dataset, aux: &AuxiliarySet, test: &Dataset) -> CliResult<RetrainSummary> {
    let (mut base, mut removed, mut rectified) = (0.0, 0.0, 0.0);
    for &seed in &ctx.cfg.seeds {
        let model_cfg = label_audit::ModelConfig {
            seed,
            ..ctx.cfg.model.clone()
        };
        let ckpts = train(d, aux.dataset(), &model_cfg)?;
        let best = best_checkpoint(&ckpts).expect("at least one epoch");
        base += best.accuracy(test)?;
        for (action, acc) in [
            (RectifyAction::Remove, &mut removed),
            (RectifyAction::Rectify, &mut rectified),
        ] {
            let cfg = label_audit::RectifyConfig {
                action,
                ..ctx.cfg.rectify.clone()
            };
            let cleaned = audit(d, aux, best, &cfg, Similarity::Cosine)?.dataset;
            *acc += test_accuracy(&cleaned, aux.dataset(), test, &model_cfg)?;
        }
    }
    let k = ctx.cfg.seeds.len() as f64;
    let (base, removed, rectified) = (base / k, removed / k, rectified / k);
    Ok(RetrainSummary {
        seeds: ctx.cfg.seeds.clone(),
        baseline_accuracy: base,
        removed_accuracy: Some(removed),
        rectified_accuracy: Some(rectified),
        removed_delta: Some(removed - base),
        rectified_delta: Some(rectified - base),
    })
}

fn report(ctx: &Ctx, a: ReportArgs) -> CliResult<()> {
    let noise = read_noise(&a.noise.clone().unwrap_or_else(|| ctx.path("noise.csv")))?;
    let tables = read_scores(&a.scores.clone().unwrap_or_else(|| ctx.path("scores.csv")))?;
    let (path, d, aux) = load_pair(ctx, &a.data, &a.aux)?;
    let model = load_model(ctx, &a.model)?;
    let best = model.as_ref().map(|m| &m.best);

    let (detection_curves, random_baseline) = curves(&ctx.cfg, &tables, &noise)?;
    let rectified = a.rectified.clone().unwrap_or_else(|| sibling(ctx, "rectified", &path));
    let mut report = AuditReport {
        conventions: Conventions::default(),
        detection_curves,
        random_baseline: Some(random_baseline),
        error_reduction_rate: optional_err(&path, &rectified)?,
        spearman: if tables.is_empty() {
            None
        } else {
            Some(spearman_matrix(&tables)?)
        },
        similarity_histograms: vec![
            NamedHistograms {
                name: "cos".into(),
                histograms: similarity_histograms(&d, &noise, best, Similarity::Cosine)?,
            },
            NamedHistograms {
                name: "dot".into(),
                histograms: similarity_histograms(&d, &noise, best, Similarity::Dot)?,
            },
        ],
        norm_histograms: Some(norm_histograms(&d, &noise, best)?),
        ..AuditReport::default()
    };
    if let Some(b) = best {
        report.theory = match theory_ratio_check(&d, b, ctx.cfg.theory_pairs, ctx.cfg.run_seed()) {
            Ok(t) => Some(t),
            Err(e) => {
                log::warn!("theory check skipped: {e}");
                None
            }
        };
    }
    if a.retrain {
        let test_path = ctx.input(&a.test, "test");
        let test = load(&test_path, Some(d.num_classes()))?;
        report.retrain = Some(retrain_summary(ctx, &d, &aux, &test)?);
    }
    report.validate()?;
    report.write(&ctx.path("report"))?;
    Ok(())
}
