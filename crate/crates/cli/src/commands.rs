//! Subcommand implementations.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tvmix::data::{
    align_macro, align_macro_months, fmt15, group_by_interval, log_returns, read_grouped_csv, shift_to_week_end,
    write_grouped_csv, DatedSeries, GroupRule, MacroPanel, PriceSeries, Transform,
};
use tvmix::em::{fit_model1, fit_model2};
use tvmix::logistic::{fisher_std_errors, fit_model3, predict_weights};
use tvmix::mcem::mcem_fit;
use tvmix::risk::{expected_shortfall, value_at_risk, LOSS_CONVENTION};
use tvmix::simgen::{run_replications, write_track_csv, SimDesign};
use tvmix::{
    Ar1Params, CauchyParams, Error, ExogenousMatrix, GaussianParams, IntervalSeries, LogisticMixtureParams,
    MixtureParams, StdErrors,
};

use crate::args::{Cli, Command, FitArgs, Format, GroupArg, InputKind, ModelArg, PriceArgs};
use crate::error::{CliError, CliResult};
use crate::output::{read, sha256_json, Outputs, Provenance, RunConfig};

/// Seed used by `fit --model m4` when `--seed` is absent.
const DEFAULT_SEED: u64 = 0;

pub fn run(cli: &Cli) -> CliResult<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Simulate { design } => simulate(cli, &cfg, design),
        Command::Fit(args) => fit(cli, &cfg, args),
        Command::PredictWeights { fit, macro_panel, from, to } => {
            predict(cli, &cfg, fit, macro_panel, from.as_deref(), to.as_deref())
        }
        Command::Var { fit, levels, expected_shortfall } => var(cli, &cfg, fit, levels, *expected_shortfall),
        Command::Returns { prices, group } => returns(cli, &cfg, prices, *group),
    }
}

fn open(p: &Path) -> CliResult<BufReader<File>> {
    File::open(p)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
}

fn rule(g: GroupArg) -> GroupRule {
    match g {
        GroupArg::Year => GroupRule::Year,
        GroupArg::Month => GroupRule::Month,
    }
}

fn load_returns(args: &PriceArgs) -> CliResult<(DatedSeries, Vec<String>)> {
    let prices = PriceSeries::from_csv(open(&args.input)?, &args.date_column, &args.price_column)?;
    let mut r = log_returns(&prices)?;
    if args.week_end {
        r = shift_to_week_end(&r);
    }
    Ok((r, prices.notices.clone()))
}

fn announce(notes: &[String]) {
    for n in notes {
        eprintln!("note: {n}");
    }
}

fn returns(cli: &Cli, cfg: &RunConfig, args: &PriceArgs, group: Option<GroupArg>) -> CliResult<()> {
    let (r, mut notes) = load_returns(args)?;
    let grouped = match group {
        Some(g) => {
            let gr = group_by_interval(&r, rule(g))?;
            notes.extend(gr.notices.iter().cloned());
            Some(gr.series)
        }
        None => None,
    };
    announce(&notes);
    let out = Outputs::new(&cli.out, Provenance::new(cli.seed, cfg.hash()))?;
    let note_refs: Vec<&str> = notes.iter().map(String::as_str).collect();
    match cli.format {
        Format::Csv => {
            out.csv("returns.csv", &note_refs, |w| r.write_csv(w, "log_return"))?;
            if let Some(s) = &grouped {
                out.csv("grouped.csv", &note_refs, |w| write_grouped_csv(s, w))?;
            }
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Returns<'a> {
                dates: Vec<String>,
                log_returns: &'a [f64],
                grouped: Option<&'a IntervalSeries>,
                notices: &'a [String],
            }
            let dates = r.dates.iter().map(|d| d.to_string()).collect();
            let body = Returns { dates, log_returns: &r.values, grouped: grouped.as_ref(), notices: &notes };
            out.json("returns.json", "returns", &body)?;
        }
    }
    Ok(())
}

/// Everything needed to reuse a fit: written to `fit.json` by `fit`, read by
/// `var` and `predict-weights`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub model: String,
    pub labels: Vec<String>,
    /// Fitted mixture per interval; `None` where a Model-1 interval failed.
    pub mixtures: Vec<Option<MixtureParams>>,
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
    /// Panel columns behind `beta`, without the intercept.
    #[serde(default)]
    pub predictors: Option<Vec<String>>,
    #[serde(default)]
    pub transforms: Option<Vec<Transform>>,
    #[serde(default)]
    pub ar1: Option<Ar1Params>,
    #[serde(default)]
    pub std_errors: Option<StdErrors>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl FitRecord {
    fn load(p: &Path) -> CliResult<Self> {
        #[derive(Deserialize)]
        struct Wrapper {
            fit: FitRecord,
        }
        let w: Wrapper = serde_json::from_str(&read(p)?)?;
        let r = w.fit;
        if r.mixtures.len() != r.labels.len() || r.converged.len() != r.labels.len() {
            return Err(CliError::Data(format!("{}: inconsistent interval counts", p.display())));
        }
        Ok(r)
    }

    fn param_rows(&self) -> Vec<(String, f64)> {
        let mut rows = Vec::new();
        let shared = self.model != "m1";
        if shared {
            if let Some(m) = self.mixtures.iter().flatten().next() {
                rows.extend(component_rows(m, None));
            }
        }
        for (label, m) in self.labels.iter().zip(&self.mixtures) {
            let Some(m) = m else { continue };
            if !shared {
                rows.extend(component_rows(m, Some(label)));
            }
            if self.beta.is_none() {
                rows.push((format!("alpha[{label}]"), m.alpha));
            }
        }
        if let (Some(beta), Some(pred)) = (&self.beta, &self.predictors) {
            let names = std::iter::once("intercept".to_string()).chain(pred.iter().cloned());
            for (n, b) in names.zip(beta) {
                rows.push((format!("beta[{n}]"), *b));
            }
        }
        if let Some(a) = self.ar1 {
            rows.push(("phi".into(), a.phi));
            rows.push(("sigma_a".into(), a.sigma_a));
        }
        rows
    }
}

fn component_rows(m: &MixtureParams, label: Option<&str>) -> Vec<(String, f64)> {
    let name = |p: &str| match label {
        Some(l) => format!("{p}[{l}]"),
        None => p.to_string(),
    };
    vec![
        (name("mu"), m.gaussian.mu),
        (name("sigma"), m.gaussian.sigma),
        (name("theta"), m.cauchy.theta),
        (name("delta"), m.cauchy.delta),
    ]
}

fn shared(g: GaussianParams, c: CauchyParams, weights: &[f64]) -> Vec<Option<MixtureParams>> {
    weights.iter().map(|&alpha| Some(MixtureParams { gaussian: g, cauchy: c, alpha })).collect()
}

fn load_series(args: &FitArgs) -> CliResult<(IntervalSeries, Vec<String>)> {
    match args.kind {
        InputKind::Grouped => Ok((read_grouped_csv(open(&args.prices.input)?)?, Vec::new())),
        InputKind::Prices => {
            let (r, mut notes) = load_returns(&args.prices)?;
            let g = group_by_interval(&r, rule(args.group))?;
            notes.extend(g.notices);
            Ok((g.series, notes))
        }
    }
}

fn load_panel(path: &Path, columns: &[String]) -> CliResult<MacroPanel> {
    let panel = MacroPanel::from_csv(open(path)?)?;
    if columns.is_empty() {
        Ok(panel)
    } else {
        Ok(panel.select(columns)?)
    }
}

fn transforms_for(panel: &MacroPanel, diff: &[String]) -> CliResult<Vec<Transform>> {
    if let Some(bad) = diff.iter().find(|d| !panel.names().contains(d)) {
        return Err(CliError::Usage(format!("--diff column {bad:?} is not among the predictors")));
    }
    Ok(panel
        .names()
        .iter()
        .map(|n| if diff.contains(n) { Transform::FirstDifference } else { Transform::Level })
        .collect())
}

fn fit(cli: &Cli, cfg: &RunConfig, args: &FitArgs) -> CliResult<()> {
    let logistic = matches!(args.model, ModelArg::M3 | ModelArg::M4);
    if args.model == ModelArg::M4 && !args.mcem {
        return Err(CliError::Usage("model m4 uses Monte Carlo EM and requires --mcem".into()));
    }
    if args.std_errors && args.model != ModelArg::M3 {
        return Err(CliError::Usage("--std-errors is available for model m3 only".into()));
    }
    if logistic && args.macro_panel.is_none() {
        return Err(CliError::Usage("models m3 and m4 need --macro <panel.csv>".into()));
    }
    if logistic && args.kind == InputKind::Prices && args.group != GroupArg::Month {
        return Err(CliError::Usage("models m3 and m4 need monthly intervals (--group month)".into()));
    }
    if !logistic && (args.macro_panel.is_some() || !args.columns.is_empty() || !args.diff.is_empty()) {
        return Err(CliError::Usage("--macro, --columns and --diff apply to models m3 and m4".into()));
    }

    let (series, mut notes) = load_series(args)?;
    announce(&notes);
    let labels = series.labels().to_vec();
    let seed = (args.model == ModelArg::M4).then(|| cli.seed.unwrap_or(DEFAULT_SEED));

    let record = match args.model {
        ModelArg::M1 => {
            let fits = fit_model1(&series, &cfg.em);
            let mut rec = FitRecord {
                model: "m1".into(),
                labels: labels.clone(),
                mixtures: Vec::new(),
                converged: Vec::new(),
                iterations: Vec::new(),
                beta: None,
                predictors: None,
                transforms: None,
                ar1: None,
                std_errors: None,
                warnings: Vec::new(),
            };
            let mut failures = 0;
            for (label, f) in labels.iter().zip(fits) {
                match f {
                    Ok(f) => {
                        rec.mixtures.push(Some(f.params));
                        rec.converged.push(f.converged);
                        rec.iterations.push(f.iterations);
                        rec.warnings.extend(f.diagnostics.warnings.iter().map(|w| format!("{label}: {w}")));
                    }
                    Err(e) => {
                        failures += 1;
                        rec.mixtures.push(None);
                        rec.converged.push(false);
                        rec.iterations.push(0);
                        rec.warnings.push(format!("{label}: {e}"));
                    }
                }
            }
            if failures == labels.len() {
                return Err(CliError::Numerical { message: format!("all {failures} intervals failed to fit") });
            }
            rec
        }
        ModelArg::M2 => {
            let f = fit_model2(&series, &cfg.em)?;
            FitRecord {
                model: "m2".into(),
                labels: labels.clone(),
                mixtures: shared(f.params.gaussian, f.params.cauchy, &f.weights),
                converged: vec![f.converged; labels.len()],
                iterations: vec![f.iterations; labels.len()],
                beta: None,
                predictors: None,
                transforms: None,
                ar1: None,
                std_errors: None,
                warnings: f.diagnostics.warnings,
            }
        }
        ModelArg::M3 | ModelArg::M4 => {
            let panel = load_panel(args.macro_panel.as_deref().expect("checked above"), &args.columns)?;
            let transforms = transforms_for(&panel, &args.diff)?;
            let aligned = align_macro(&series, &panel, &transforms)?;
            notes.extend(aligned.warnings.iter().cloned());
            announce(&aligned.warnings);
            let x = &aligned.x;
            let mut rec = FitRecord {
                model: String::new(),
                labels: labels.clone(),
                mixtures: Vec::new(),
                converged: Vec::new(),
                iterations: Vec::new(),
                beta: None,
                predictors: Some(panel.names().to_vec()),
                transforms: Some(transforms),
                ar1: None,
                std_errors: None,
                warnings: aligned.warnings.clone(),
            };
            if args.model == ModelArg::M3 {
                let f = fit_model3(&series, x, &cfg.em)?;
                if args.std_errors {
                    let se = fisher_std_errors(&series, x, &f.params)?;
                    if !se.definite {
                        rec.warnings.push("observed information not positive definite; some standard errors omitted".into());
                    }
                    rec.std_errors = Some(se);
                }
                rec.model = "m3".into();
                rec.mixtures = shared(f.params.gaussian, f.params.cauchy, &f.weights);
                rec.converged = vec![f.converged; labels.len()];
                rec.iterations = vec![f.iterations; labels.len()];
                rec.beta = Some(f.params.beta);
                rec.warnings.extend(f.diagnostics.warnings);
            } else {
                eprintln!(
                    "warning: Monte Carlo EM runs {} iterations of a {}-sweep chain; this can take minutes",
                    cfg.mcem.em_iters, cfg.mcem.chain_length
                );
                let f = mcem_fit(&series, x, &cfg.mcem, seed.expect("set for m4"))?;
                rec.model = "m4".into();
                rec.mixtures = shared(f.params.gaussian, f.params.cauchy, &f.weights);
                rec.converged = vec![f.converged; labels.len()];
                rec.iterations = vec![f.iterations; labels.len()];
                rec.beta = Some(f.params.beta);
                rec.ar1 = Some(f.params.ar1);
                rec.warnings.extend(f.diagnostics.warnings);
            }
            rec
        }
    };
    for w in &record.warnings {
        eprintln!("warning: {w}");
    }
    if record.converged.iter().any(|c| !c) {
        eprintln!("warning: fit did not fully converge; `var` will refuse it");
    }

    let out = Outputs::new(&cli.out, Provenance::new(seed, cfg.hash()))?;
    let note_refs: Vec<&str> = notes.iter().map(String::as_str).collect();
    let params = record.param_rows();
    let se = |name: &str| record.std_errors.as_ref().and_then(|s| s.get(name));
    match cli.format {
        Format::Csv => {
            out.csv("params.csv", &note_refs, |w| {
                let mut wr = csv::Writer::from_writer(w);
                wr.write_record(["parameter", "value", "std_error"]).map_err(csv_err)?;
                for (n, v) in &params {
                    let s = se(n).map(fmt15).unwrap_or_default();
                    wr.write_record([n.as_str(), &fmt15(*v), &s]).map_err(csv_err)?;
                }
                wr.flush().map_err(|e| Error::Data(e.to_string()))
            })?;
            out.csv("weights.csv", &note_refs, |w| {
                let mut wr = csv::Writer::from_writer(w);
                wr.write_record(["interval", "label", "alpha", "cauchy_weight"]).map_err(csv_err)?;
                for (i, (l, m)) in record.labels.iter().zip(&record.mixtures).enumerate() {
                    let (a, c) = m.map_or((String::new(), String::new()), |m| (fmt15(m.alpha), fmt15(1.0 - m.alpha)));
                    wr.write_record([(i + 1).to_string().as_str(), l, &a, &c]).map_err(csv_err)?;
                }
                wr.flush().map_err(|e| Error::Data(e.to_string()))
            })?;
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Param<'a> {
                parameter: &'a str,
                value: f64,
                std_error: Option<f64>,
            }
            let rows: Vec<Param> =
                params.iter().map(|(n, v)| Param { parameter: n, value: *v, std_error: se(n) }).collect();
            out.json("params.json", "parameters", &rows)?;
        }
    }
    out.json("fit.json", "fit", &record)?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(e.to_string())
}

fn var(cli: &Cli, cfg: &RunConfig, path: &Path, levels: &[f64], want_es: bool) -> CliResult<()> {
    let rec = FitRecord::load(path)?;
    if let Some(i) = rec.converged.iter().position(|c| !c) {
        return Err(CliError::Numerical {
            message: format!("{}: interval {} did not converge; refusing to report VaR", Error::NotConverged, rec.labels[i]),
        });
    }
    let mut rows = Vec::new();
    for (label, m) in rec.labels.iter().zip(&rec.mixtures) {
        let m = m.as_ref().expect("converged intervals carry a mixture");
        for &q in levels {
            rows.push(VarLine { interval: label.clone(), level: q, var: value_at_risk(q, m)? });
        }
    }
    if want_es {
        if let Some(m) = rec.mixtures.iter().flatten().next() {
            if let Err(e) = expected_shortfall(levels.first().copied().unwrap_or(0.01), m) {
                eprintln!("expected shortfall refused: {e}");
            }
        }
    }
    let out = Outputs::new(&cli.out, Provenance::new(cli.seed, cfg.hash()))?;
    match cli.format {
        Format::Csv => {
            out.csv("var.csv", &[LOSS_CONVENTION], |w| {
                let mut wr = csv::Writer::from_writer(w);
                wr.write_record(["interval", "level", "var"]).map_err(csv_err)?;
                for r in &rows {
                    wr.write_record([r.interval.as_str(), &r.level.to_string(), &fmt15(r.var)]).map_err(csv_err)?;
                }
                wr.flush().map_err(|e| Error::Data(e.to_string()))
            })?;
        }
        Format::Json => {
            out.json("var.json", "var", &rows)?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct VarLine {
    interval: String,
    level: f64,
    var: f64,
}

fn predict(
    cli: &Cli,
    cfg: &RunConfig,
    path: &Path,
    panel_path: &Path,
    from: Option<&str>,
    to: Option<&str>,
) -> CliResult<()> {
    let rec = FitRecord::load(path)?;
    let (Some(beta), Some(pred), Some(transforms)) = (&rec.beta, &rec.predictors, &rec.transforms) else {
        return Err(CliError::Usage(format!("{} is a {} fit; predict-weights needs m3 or m4", path.display(), rec.model)));
    };
    let panel = load_panel(panel_path, pred)?;
    let all = panel.month_labels();
    // differencing consumes the first panel month
    let skip = usize::from(transforms.contains(&Transform::FirstDifference));
    let months: Vec<String> = all
        .into_iter()
        .skip(skip)
        .filter(|m| from.is_none_or(|f| m.as_str() >= f) && to.is_none_or(|t| m.as_str() <= t))
        .collect();
    if months.is_empty() {
        return Err(CliError::Data("no panel months in the requested range".into()));
    }
    let aligned = align_macro_months(&months, &panel, transforms)?;
    announce(&aligned.warnings);
    let m = rec.mixtures.iter().flatten().next().ok_or_else(|| CliError::Data("fit has no components".into()))?;
    let params = LogisticMixtureParams { gaussian: m.gaussian, cauchy: m.cauchy, beta: beta.clone() };
    let x: &ExogenousMatrix = &aligned.x;
    let w = predict_weights(&params, x)?;
    let out = Outputs::new(&cli.out, Provenance::new(cli.seed, cfg.hash()))?;
    match cli.format {
        Format::Csv => {
            out.csv("predicted_weights.csv", &[], |wtr| {
                let mut wr = csv::Writer::from_writer(wtr);
                wr.write_record(["interval", "label", "alpha", "cauchy_weight"]).map_err(csv_err)?;
                for (i, (l, a)) in months.iter().zip(&w.values).enumerate() {
                    wr.write_record([(i + 1).to_string().as_str(), l, &fmt15(*a), &fmt15(1.0 - a)]).map_err(csv_err)?;
                }
                wr.flush().map_err(|e| Error::Data(e.to_string()))
            })?;
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Pred<'a> {
                labels: &'a [String],
                alpha: &'a [f64],
            }
            out.json("predicted_weights.json", "predicted_weights", &Pred { labels: &months, alpha: &w.values })?;
        }
    }
    Ok(())
}

fn simulate(cli: &Cli, cfg: &RunConfig, path: &Path) -> CliResult<()> {
    let mut design: SimDesign = serde_json::from_str(&read(path)?)?;
    if let Some(s) = cli.seed {
        design.seed = s;
    }
    if cli.config.is_some() {
        design.em = cfg.em;
        design.mcem = cfg.mcem;
    }
    design.validate()?;
    let summary = run_replications(&design)?;
    if summary.failed > 0 {
        eprintln!("warning: {} of {} replicates failed", summary.failed, summary.replicates);
    }
    let out = Outputs::new(&cli.out, Provenance::new(Some(design.seed), sha256_json(&design)))?;
    match cli.format {
        Format::Csv => {
            let note = format!("replicates: {}, failed: {}, weight_mse: {}", summary.replicates, summary.failed, fmt15(summary.weight_mse));
            out.csv("parameters.csv", &[&note], |w| summary.write_parameters_csv(w))?;
            out.csv("weights.csv", &[&note], |w| summary.write_weights_csv(w))?;
            out.csv("track.csv", &[], |w| write_track_csv(&summary.track, w))?;
            if let Some(tt) = &summary.train_test {
                let note = format!(
                    "train_intervals: {}, test_intervals: {}, train_mse: {}, test_mse: {}",
                    tt.train_intervals,
                    tt.test_intervals,
                    fmt15(tt.train_mse),
                    fmt15(tt.test_mse)
                );
                out.csv("train_test_track.csv", &[&note], |w| write_track_csv(&tt.track, w))?;
            }
        }
        Format::Json => {
            out.json("summary.json", "summary", &summary)?;
        }
    }
    Ok(())
}
