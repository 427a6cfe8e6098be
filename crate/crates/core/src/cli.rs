//! Command-line front end: `ingest`, `eval`, `fewshot`, `sweep`, `synth`
//! and `hist`.
//!
//! Run options can come from a TOML file (`--config`) whose keys are the
//! long flag names with `_` for `-`; flags given on the command line win.
//! Outputs are written atomically. Standard output carries a short,
//! stable summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fewshot::{run_fewshot, FewShotConfig, FewShotResult, Method};
use crate::fusion::FusionParams;
use crate::knn::{knn_score, KnnParams, SimilarityBank};
use crate::metrics::report::{render_table, summary_line, to_flat_json, ReportFormat};
use crate::metrics::{evaluate_with_bins, histogram, MetricReport, DEFAULT_BINS};
use crate::outcomes::{classify_outcomes, Outcome, OutcomeVector};
use crate::scorers::{max_probability, predictions_from_logits, LogitScorer, Temperature};
use crate::sweep::{sweep, SweepGrid};
use crate::synth::{calibration_scenarios, gen_bundle, gen_scores, SynthConfig};
use crate::tensorio::{
    load_labels, load_matrix, parse_labels_csv, parse_matrix_csv, read_text, validate_bundle, write_atomic,
    write_labels, write_matrix, EvaluationBundle, FeatureMatrix, Format, LabelVector,
};

#[derive(Debug, Parser)]
#[command(name = "uosr", version, about = "Uncertainty scoring and open-set evaluation")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert CSV matrices and label files to the binary container.
    Ingest(IngestArgs),
    /// Score a bundle and write its metric report.
    Eval(RunConfig),
    /// Run the few-shot protocol and write the method comparison.
    Fewshot(RunConfig),
    /// Few-shot runs over a grid of K, alpha and beta.
    Sweep(RunConfig),
    /// Generate synthetic scores, bundles or calibration scenarios.
    Synth(SynthArgs),
    /// Per-outcome score histogram as CSV.
    Hist(HistArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// CSV feature or logit matrices.
    #[arg(long = "matrix")]
    pub matrices: Vec<PathBuf>,
    /// CSV label files (one integer per line).
    #[arg(long = "labels")]
    pub labels: Vec<PathBuf>,
    /// Output directory; each input becomes `<stem>.bin`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed in the scenario file.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct HistArgs {
    /// Scores, one per row (n x 1 matrix, binary or CSV).
    #[arg(long)]
    pub scores: PathBuf,
    /// Outcome codes 0 = InC, 1 = InW, 2 = OoD.
    #[arg(long)]
    pub outcomes: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Options shared by `eval`, `fewshot` and `sweep`. Every field may also
/// come from the `--config` file.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// TOML file with defaults for any of these options.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Directory holding a saved bundle; single-component flags override it.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    #[arg(long)]
    pub train_feats: Option<PathBuf>,
    #[arg(long)]
    pub train_labels: Option<PathBuf>,
    #[arg(long)]
    pub test_feats: Option<PathBuf>,
    #[arg(long)]
    pub test_logits: Option<PathBuf>,
    #[arg(long)]
    pub test_labels: Option<PathBuf>,
    #[arg(long)]
    pub test_preds: Option<PathBuf>,
    #[arg(long)]
    pub ood_feats: Option<PathBuf>,
    #[arg(long)]
    pub ood_logits: Option<PathBuf>,
    #[arg(long)]
    pub ood_class_ids: Option<PathBuf>,
    /// msp, entropy, maxlogit, energy, gini or knn (eval); the u0 scorer for few-shot runs.
    #[arg(long)]
    pub scorer: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub shots: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// ECE bins.
    #[arg(long)]
    pub bins: Option<usize>,
    /// json, markdown or csv.
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Few-shot table rows: u0, knn, fsknn, fsknn+s, fsknn*s, fsknns.
    #[arg(long, value_delimiter = ',')]
    pub rows: Option<Vec<String>>,
    /// Include per-repeat rows in markdown and CSV few-shot output.
    #[arg(long)]
    #[serde(default)]
    pub per_repeat: bool,
    /// Keep drawn reference samples in the evaluated OoD set.
    #[arg(long)]
    #[serde(default)]
    pub keep_drawn: bool,
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub betas: Option<Vec<f64>>,
}

macro_rules! prefer {
    ($flags:ident, $file:ident; $($field:ident),*) => {
        RunConfig {
            config: $flags.config,
            per_repeat: $flags.per_repeat || $file.per_repeat,
            keep_drawn: $flags.keep_drawn || $file.keep_drawn,
            $($field: $flags.$field.or($file.$field),)*
        }
    };
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::BadSpec(format!("config: {e}")))
    }

    /// Reads `--config` if given and fills every option the flags leave
    /// unset.
    pub fn resolve(self) -> Result<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let file = RunConfig::from_toml(&read_text(&path)?)?;
        let flags = self;
        Ok(prefer!(flags, file;
            bundle, train_feats, train_labels, test_feats, test_logits, test_labels, test_preds,
            ood_feats, ood_logits, ood_class_ids, scorer, temperature, k, alpha, beta, shots, seed,
            bins, format, out, rows, ks, alphas, betas))
    }

    fn format(&self, default: ReportFormat) -> Result<ReportFormat> {
        self.format.as_deref().map_or(Ok(default), str::parse)
    }

    fn temperature(&self) -> Result<Temperature> {
        Temperature::new(self.temperature.unwrap_or(1.0))
    }

    fn knn(&self) -> Result<KnnParams> {
        KnnParams::new(self.k.unwrap_or(KnnParams::default().k))
    }

    fn fewshot(&self) -> Result<FewShotConfig> {
        let d = FewShotConfig::default();
        let scorer0 = match self.scorer.as_deref() {
            None => d.scorer0,
            Some(s) => s.parse()?,
        };
        Ok(FewShotConfig {
            shots: self.shots.unwrap_or(d.shots),
            knn: self.knn()?,
            fusion: FusionParams::new(self.alpha.unwrap_or(d.fusion.alpha), self.beta.unwrap_or(d.fusion.beta))?,
            seed: self.seed.unwrap_or(d.seed),
            scorer0,
            temperature: self.temperature()?,
            exclude_drawn: !self.keep_drawn,
        })
    }

    /// Loads the saved bundle (if any) and overlays single-component files.
    pub fn load_bundle(&self) -> Result<EvaluationBundle> {
        let mut b = match &self.bundle {
            Some(dir) => EvaluationBundle::load_dir(dir)?,
            None => EvaluationBundle::default(),
        };
        let m = |p: &Option<PathBuf>, slot: &mut Option<FeatureMatrix>| -> Result<()> {
            if let Some(p) = p {
                *slot = Some(load_matrix(p, Format::from_path(p))?);
            }
            Ok(())
        };
        let l = |p: &Option<PathBuf>, slot: &mut Option<LabelVector>| -> Result<()> {
            if let Some(p) = p {
                *slot = Some(load_labels(p, Format::from_path(p))?);
            }
            Ok(())
        };
        m(&self.train_feats, &mut b.train_features)?;
        l(&self.train_labels, &mut b.train_labels)?;
        m(&self.test_feats, &mut b.test_features)?;
        m(&self.test_logits, &mut b.test_logits)?;
        m(&self.ood_feats, &mut b.ood_features)?;
        m(&self.ood_logits, &mut b.ood_logits)?;
        l(&self.test_preds, &mut b.test_predictions)?;
        l(&self.ood_class_ids, &mut b.ood_class_ids)?;
        match &self.test_labels {
            Some(p) => b.test_labels = load_labels(p, Format::from_path(p))?,
            None if self.bundle.is_none() => return Err(Error::MissingComponent("test labels".into())),
            None => {}
        }
        let n_classes = match (&b.test_logits, &b.train_labels) {
            (Some(l), _) => l.cols(),
            (None, Some(t)) => t.as_slice().iter().chain(b.test_labels.as_slice()).max().map_or(0, |m| *m as usize + 1),
            (None, None) => b.test_labels.as_slice().iter().max().map_or(0, |m| *m as usize + 1),
        };
        validate_bundle(&b, n_classes)?;
        Ok(b)
    }
}

/// Runs one parsed command line; `out` receives the summary text.
pub fn run(cli: Cli, out: &mut dyn std::io::Write) -> Result<()> {
    let text = match cli.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidParameter(format!("threads: {e}")))?;
            pool.install(|| dispatch(cli.command))?
        }
        None => dispatch(cli.command)?,
    };
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

fn dispatch(cmd: Command) -> Result<String> {
    match cmd {
        Command::Ingest(a) => cmd_ingest(&a),
        Command::Eval(c) => cmd_eval(&c.resolve()?),
        Command::Fewshot(c) => cmd_fewshot(&c.resolve()?),
        Command::Sweep(c) => cmd_sweep(&c.resolve()?),
        Command::Synth(a) => cmd_synth(&a),
        Command::Hist(a) => cmd_hist(&a),
    }
}

fn output_name(input: &Path, out_dir: &Path) -> PathBuf {
    let stem = input.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    out_dir.join(format!("{stem}.bin"))
}

pub fn cmd_ingest(a: &IngestArgs) -> Result<String> {
    if a.matrices.is_empty() && a.labels.is_empty() {
        return Err(Error::EmptyInput("no --matrix or --labels inputs".into()));
    }
    // parse everything first so a bad input leaves no partial output
    let matrices = a
        .matrices
        .iter()
        .map(|p| Ok((p, parse_matrix_csv(&read_text(p)?)?)))
        .collect::<Result<Vec<_>>>()?;
    let labels = a
        .labels
        .iter()
        .map(|p| Ok((p, parse_labels_csv(&read_text(p)?)?)))
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut s = String::new();
    for (p, m) in &matrices {
        let dst = output_name(p, &a.out);
        write_matrix(m, &dst)?;
        let _ = writeln!(s, "ingest {} -> {} ({} x {})", p.display(), dst.display(), m.rows(), m.cols());
    }
    for (p, l) in &labels {
        let dst = output_name(p, &a.out);
        write_labels(l, &dst)?;
        let _ = writeln!(s, "ingest {} -> {} ({} labels)", p.display(), dst.display(), l.len());
    }
    Ok(s)
}

enum EvalScorer {
    Logit(LogitScorer),
    Knn,
}

fn parse_eval_scorer(s: Option<&str>) -> Result<EvalScorer> {
    match s.unwrap_or("msp") {
        s if s.eq_ignore_ascii_case("knn") => Ok(EvalScorer::Knn),
        s if s.eq_ignore_ascii_case("fsknn") || s.eq_ignore_ascii_case("fsknns") => Err(Error::BadSpec(format!(
            "scorer `{s}` needs reference shots; use the fewshot command"
        ))),
        s => s.parse().map(EvalScorer::Logit),
    }
}

fn stacked(a: &Option<FeatureMatrix>, b: &Option<FeatureMatrix>, n_ood: usize, what: &str) -> Result<FeatureMatrix> {
    let test = a.as_ref().ok_or_else(|| Error::MissingComponent(format!("test {what}")))?;
    match b {
        Some(o) => test.vstack(o),
        None if n_ood == 0 => Ok(test.clone()),
        None => Err(Error::MissingComponent(format!("OoD {what}"))),
    }
}

/// Scores and evaluates a bundle as configured.
pub fn evaluate_bundle(c: &RunConfig, b: &EvaluationBundle) -> Result<MetricReport> {
    let scorer = parse_eval_scorer(c.scorer.as_deref())?;
    let t = c.temperature()?;
    let n_ood = b.n_ood();
    let predictions = match (&b.test_predictions, &b.test_logits) {
        (Some(p), _) => p.clone(),
        (None, Some(l)) => predictions_from_logits(l),
        (None, None) => return Err(Error::MissingComponent("test logits or predictions".into())),
    };
    let outcomes = classify_outcomes(&predictions, &b.test_labels, n_ood)?;
    let (scores, confidence) = match scorer {
        EvalScorer::Logit(s) => {
            let logits = stacked(&b.test_logits, &b.ood_logits, n_ood, "logits")?;
            let conf = (s == LogitScorer::Msp).then(|| max_probability(&logits, t));
            (s.score(&logits, t), conf)
        }
        EvalScorer::Knn => {
            let train = b
                .train_features
                .as_ref()
                .ok_or_else(|| Error::MissingComponent("train features".into()))?;
            let queries = stacked(&b.test_features, &b.ood_features, n_ood, "features")?;
            (knn_score(&queries, &SimilarityBank::new(train)?, c.knn()?)?, None)
        }
    };
    evaluate_with_bins(&scores, &outcomes, confidence.as_deref(), c.bins.unwrap_or(DEFAULT_BINS))
}

fn render_report(r: &MetricReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(&to_flat_json(r)).expect("json values serialize");
            s.push('\n');
            s
        }
        _ => render_table(&[(r.scorer_id.to_ascii_uppercase(), r.clone())], format),
    }
}

fn emit(c: &RunConfig, doc: &str, summary: &mut String) -> Result<()> {
    match &c.out {
        Some(p) => {
            write_atomic(p, doc.as_bytes())?;
            let _ = writeln!(summary, "wrote {}", p.display());
        }
        None => summary.push_str(doc),
    }
    Ok(())
}

pub fn cmd_eval(c: &RunConfig) -> Result<String> {
    let b = c.load_bundle()?;
    let r = evaluate_bundle(c, &b)?;
    let mut s = format!("eval scorer={} n_inc={} n_inw={} n_ood={}\n", r.scorer_id, r.n_inc, r.n_inw, r.n_ood);
    let _ = writeln!(s, "{}", summary_line(&r));
    emit(c, &render_report(&r, c.format(ReportFormat::Json)?), &mut s)?;
    Ok(s)
}

fn selected_rows(c: &RunConfig) -> Result<Vec<Method>> {
    match &c.rows {
        None => Ok(Method::ALL.to_vec()),
        Some(v) => v.iter().map(|s| Method::parse(s)).collect(),
    }
}

fn fewshot_document(r: &FewShotResult, methods: &[Method], per_repeat: bool, format: ReportFormat) -> String {
    let label = |m: Method| m.label(r.config.scorer0);
    if format == ReportFormat::Json {
        let rows = |reports: &std::collections::BTreeMap<Method, MetricReport>| -> Vec<serde_json::Value> {
            methods
                .iter()
                .map(|m| {
                    let mut v = to_flat_json(&reports[m]);
                    v.as_object_mut()
                        .expect("flat report is an object")
                        .insert("method".into(), label(*m).into());
                    v
                })
                .collect()
        };
        let doc = serde_json::json!({
            "config": r.config,
            "n_repeats": r.n_repeats,
            "n_unused": r.n_unused,
            "mean": rows(&r.mean),
            "repeats": r.repeats.iter().map(|rep| serde_json::json!({
                "reference": rep.reference,
                "lambda": rep.lambda,
                "ref_mean": rep.ref_stats.mean,
                "ref_std": rep.ref_stats.std,
                "reports": rows(&rep.reports),
            })).collect::<Vec<_>>(),
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("json values serialize");
        s.push('\n');
        return s;
    }
    let mut rows: Vec<(String, MetricReport)> = methods.iter().map(|m| (label(*m), r.mean[m].clone())).collect();
    if per_repeat {
        for (i, rep) in r.repeats.iter().enumerate() {
            rows.extend(methods.iter().map(|m| (format!("{}@{i}", label(*m)), rep.reports[m].clone())));
        }
    }
    render_table(&rows, format)
}

pub fn cmd_fewshot(c: &RunConfig) -> Result<String> {
    let b = c.load_bundle()?;
    let cfg = c.fewshot()?;
    let methods = selected_rows(c)?;
    let r = run_fewshot(&b, &cfg)?;
    let mut s = format!(
        "fewshot shots={} k={} alpha={} beta={} seed={} repeats={} unused={}\n",
        cfg.shots, cfg.knn.k, cfg.fusion.alpha, cfg.fusion.beta, cfg.seed, r.n_repeats, r.n_unused
    );
    for m in &methods {
        let _ = writeln!(s, "{:<9} {}", m.label(cfg.scorer0), summary_line(&r.mean[m]));
    }
    let doc = fewshot_document(&r, &methods, c.per_repeat, c.format(ReportFormat::Markdown)?);
    emit(c, &doc, &mut s)?;
    Ok(s)
}

pub fn cmd_sweep(c: &RunConfig) -> Result<String> {
    let b = c.load_bundle()?;
    let cfg = c.fewshot()?;
    let grid = SweepGrid {
        ks: c.ks.clone().unwrap_or_default(),
        alphas: c.alphas.clone().unwrap_or_default(),
        betas: c.betas.clone().unwrap_or_default(),
    };
    let method = match c.rows.as_deref() {
        None => Method::FsKnns,
        Some([one]) => Method::parse(one)?,
        Some(_) => return Err(Error::BadSpec("sweep reports exactly one method (--rows)".into())),
    };
    let cells = sweep(&b, &cfg, &grid)?;
    let doc = match c.format(ReportFormat::Csv)? {
        ReportFormat::Csv => crate::sweep::to_csv(&cells, method),
        ReportFormat::Json => crate::sweep::to_json(&cells, method),
        ReportFormat::Markdown => return Err(Error::BadSpec("sweep writes csv or json".into())),
    };
    let mut s = format!("sweep method={} cells={}\n", method.id(), cells.len());
    emit(c, &doc, &mut s)?;
    Ok(s)
}

fn outcome_code(o: Outcome) -> i64 {
    match o {
        Outcome::InC => 0,
        Outcome::InW => 1,
        Outcome::OoD => 2,
    }
}

fn column(values: &[f64]) -> Result<FeatureMatrix> {
    let rows: Vec<[f64; 1]> = values.iter().map(|&v| [v]).collect();
    FeatureMatrix::from_rows(&rows)
}

pub fn cmd_synth(a: &SynthArgs) -> Result<String> {
    let mut cfg = SynthConfig::from_toml(&read_text(&a.config)?)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    // generate everything before touching the output directory
    let scores = cfg
        .scores
        .map(|g| gen_scores(&g.inc, &g.inw, &g.ood, cfg.seed))
        .transpose()?;
    let bundle = cfg
        .bundle
        .as_ref()
        .map(|b| b.resolve().and_then(|spec| gen_bundle(&spec, cfg.seed)))
        .transpose()?;
    let scenarios = cfg.calibration.then(|| calibration_scenarios(cfg.seed));

    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut s = String::new();
    if let Some((sv, o)) = scores {
        write_matrix(&column(sv.as_slice())?, a.out.join("scores.bin"))?;
        let codes = LabelVector(o.as_slice().iter().map(|&x| outcome_code(x)).collect());
        write_labels(&codes, a.out.join("outcomes.bin"))?;
        let _ = writeln!(s, "synth scores n_inc={} n_inw={} n_ood={}", o.n_inc(), o.n_inw(), o.n_ood());
    }
    if let Some(b) = bundle {
        let written = b.save(a.out.join("bundle"))?;
        let _ = writeln!(s, "synth bundle files={} n_test={} n_ood={}", written.len(), b.n_test(), b.n_ood());
    }
    if let Some(sc) = scenarios {
        let dir = a.out.join("calibration");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut manifest = Vec::new();
        for scenario in &sc {
            let rows: Vec<[f64; 2]> = scenario
                .confidence
                .iter()
                .zip(&scenario.correct)
                .map(|(&c, &k)| [c, if k { 1.0 } else { 0.0 }])
                .collect();
            let file = format!("{}.bin", scenario.id);
            write_matrix(&FeatureMatrix::from_rows(&rows)?, dir.join(&file))?;
            manifest.push(serde_json::json!({
                "id": scenario.id,
                "description": scenario.description,
                "file": file,
                "columns": ["confidence", "correct"],
                "n": scenario.confidence.len(),
            }));
        }
        let mut text = serde_json::to_string_pretty(&manifest).expect("json values serialize");
        text.push('\n');
        write_atomic(&dir.join("manifest.json"), text.as_bytes())?;
        let _ = writeln!(s, "synth calibration scenarios={}", sc.len());
    }
    Ok(s)
}

fn decode_outcomes(codes: &LabelVector) -> Result<OutcomeVector> {
    codes
        .as_slice()
        .iter()
        .enumerate()
        .map(|(index, &c)| match c {
            0 => Ok(Outcome::InC),
            1 => Ok(Outcome::InW),
            2 => Ok(Outcome::OoD),
            label => Err(Error::LabelOutOfRange { index, label, n_classes: 3 }),
        })
        .collect::<Result<Vec<_>>>()
        .map(OutcomeVector::new)
}

pub fn cmd_hist(a: &HistArgs) -> Result<String> {
    let m = load_matrix(&a.scores, Format::from_path(&a.scores))?;
    if m.cols() != 1 {
        return Err(Error::DimMismatch {
            what: "score columns".into(),
            left: m.cols(),
            right: 1,
        });
    }
    let scores: Vec<f64> = (0..m.rows()).map(|i| m.get(i, 0)).collect();
    let outcomes = decode_outcomes(&load_labels(&a.outcomes, Format::from_path(&a.outcomes))?)?;
    let h = histogram(&scores, &outcomes, a.bins)?;
    write_atomic(&a.out, h.to_csv().as_bytes())?;
    Ok(format!(
        "hist bins={} range=[{}, {}]\nwrote {}\n",
        a.bins,
        h.edges[0],
        h.edges[a.bins],
        a.out.display()
    ))
}
