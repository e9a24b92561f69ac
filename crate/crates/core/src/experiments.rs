//! Monte Carlo harness: replicated estimation, normalization by the regime
//! rate, comparison with limit-law draws and convergence-rate fits.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{consistency_region, theta_star, QuadratureRule};
use crate::error::{domain, Error, Result};
use crate::estimators::{preliminary_estimate, preliminary_size, stage_window, Estimator, EstimatorSettings, Stage};
use crate::intensity::{CatalogId, ContaminationPiece, IntensityModel, ParameterInterval, TrueIntensity};
use crate::limits::{limit_params, LimitParams, LimitSampler, Regime, RegimeLimit, Which};
use crate::rng::{derived_seed, replicate_base, RngStream};
use crate::simulate::{simulate_sample_seq, Sample};
use crate::stats::{mean, pairwise_sum, variance};
use crate::windows::{optimal_window, Window};

fn default_atom_epsilon() -> f64 {
    0.05
}

/// Sample size as written in the scenario: one value or a list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleSizes {
    One(usize),
    Many(Vec<usize>),
}

impl SampleSizes {
    pub fn values(&self) -> Vec<usize> {
        match self {
            SampleSizes::One(n) => vec![*n],
            SampleSizes::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrueIntensitySpec {
    #[serde(default)]
    pub contamination: Vec<ContaminationPiece>,
}

/// How events are selected before estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowMode {
    /// All events of all trajectories.
    #[default]
    None,
    /// Two-stage: preliminary estimate, then the optimal window at it.
    Optimal,
    /// Two-stage: preliminary estimate, then the vanishing window around it.
    Sufficient,
    /// The optimal window at the true value, all trajectories.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    #[serde(default)]
    pub mode: WindowMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_star: Option<f64>,
}

/// Grid for the cusp limit's fBm paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitGrid {
    pub halfwidth: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
}

/// A self-describing experiment, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub model: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub theta0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_interval: Option<ParameterInterval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_intensity: Option<TrueIntensitySpec>,
    pub regime: Regime,
    pub n: SampleSizes,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default = "default_atom_epsilon")]
    pub atom_epsilon: f64,
    #[serde(default)]
    pub estimator: EstimatorSettings,
    #[serde(default)]
    pub window: WindowSpec,
    /// Limit-law draws for the KS comparisons; 0 skips them.
    #[serde(default = "default_limit_draws")]
    pub limit_draws: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_grid: Option<LimitGrid>,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_limit_draws() -> usize {
    100_000
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn catalog_id(&self) -> Result<CatalogId> {
        self.model.parse()
    }

    pub fn build_model(&self) -> Result<IntensityModel> {
        IntensityModel::from_catalog(self.catalog_id()?, &self.params, self.theta_interval)
    }

    pub fn build_truth(&self, model: &IntensityModel) -> Result<TrueIntensity> {
        let pieces = self
            .true_intensity
            .as_ref()
            .map(|t| t.contamination.clone())
            .unwrap_or_default();
        TrueIntensity::contaminated(model.clone(), self.theta0, pieces)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.n.values()
    }

    pub fn validate(&self) -> Result<()> {
        let model = self.build_model()?;
        if !model.theta_interval().contains(self.theta0) {
            return Err(Error::Config(format!(
                "theta0 = {} lies outside the parameter set",
                self.theta0
            )));
        }
        let sizes = self.sizes();
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::Config("n must hold positive sample sizes".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if !(self.atom_epsilon > 0.0) {
            return Err(Error::Config("atom_epsilon must be positive".into()));
        }
        self.estimator.validate()?;
        match self.window.mode {
            WindowMode::None | WindowMode::Sufficient => {}
            WindowMode::Optimal | WindowMode::Oracle => {
                let mu = self
                    .window
                    .mu_star
                    .ok_or_else(|| Error::Config("window.mu_star is required for this window mode".into()))?;
                if !(mu > 0.0 && mu < model.horizon()) {
                    return Err(Error::Config(format!("window.mu_star = {mu} must lie in (0, horizon)")));
                }
            }
        }
        if let Some(g) = self.limit_grid {
            if !(g.halfwidth > 0.0) || g.points < 5 || g.points % 2 == 0 {
                return Err(Error::Config("limit_grid needs a positive halfwidth and an odd point count".into()));
            }
        }
        self.build_truth(&model)?;
        Ok(())
    }
}

/// One replicate at one sample size. Missing values mark failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub n: usize,
    pub replicate: usize,
    pub stream_base: u64,
    pub event_count: usize,
    pub preliminary: Option<f64>,
    pub mle: Option<f64>,
    pub bayes: Option<f64>,
    pub mle_normalized: Option<f64>,
    pub bayes_normalized: Option<f64>,
    pub status: String,
}

/// Summary of one estimator at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub count: usize,
    pub failures: usize,
    pub mean: f64,
    pub variance: f64,
    /// Mean squared error of the raw estimate around the target.
    pub mse: f64,
    pub normalized_mean: f64,
    pub normalized_variance: f64,
    pub normalized_second_moment: f64,
    /// Fraction with |normalized error| < atom_epsilon.
    pub atom_frequency: f64,
    /// Largest single share of the summed squared normalized errors.
    pub max_share: f64,
    pub ks: Option<f64>,
    /// Boundary regime: KS of the nonzero part against the positive limit draws.
    pub ks_nonzero: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub n: usize,
    pub mle: Option<EstimatorSummary>,
    pub bayes: Option<EstimatorSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: Scenario,
    pub limit: RegimeLimit,
    /// Centre of the normalized errors: ϑ₀, or ϑ* when misspecified.
    pub target: f64,
    pub rows: Vec<ReplicateRow>,
    pub sizes: Vec<SizeSummary>,
    pub mle_rate: Option<RateFit>,
    pub bayes_rate: Option<RateFit>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

impl ExperimentReport {
    /// Per-replicate CSV.
    pub fn write_table<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "n,replicate,stream_base,event_count,preliminary,mle,bayes,mle_normalized,bayes_normalized,status"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.n,
                r.replicate,
                r.stream_base,
                r.event_count,
                fmt_opt(r.preliminary),
                fmt_opt(r.mle),
                fmt_opt(r.bayes),
                fmt_opt(r.mle_normalized),
                fmt_opt(r.bayes_normalized),
                r.status
            )?;
        }
        Ok(())
    }

    /// Summary document: the scenario, the limit parameters under their
    /// conventional names, per-size summaries and rate fits.
    pub fn summary_json(&self) -> Value {
        let mut doc = serde_json::Map::new();
        doc.insert("scenario".into(), json!(self.scenario));
        doc.insert("regime".into(), json!(self.limit.regime));
        doc.insert("rate_exponent".into(), json!(self.limit.rate_exponent));
        doc.insert("limit".into(), json!(self.limit));
        match &self.limit.params {
            LimitParams::Regular { fisher_information } | LimitParams::Boundary { fisher_information, .. } => {
                doc.insert("fisher_information".into(), json!(fisher_information));
            }
            LimitParams::NullFisher { i3 } => {
                doc.insert("i3".into(), json!(i3));
            }
            LimitParams::DiscFisher {
                i_minus,
                i_plus,
                correlation,
            } => {
                doc.insert("fisher_information_left".into(), json!(i_minus));
                doc.insert("fisher_information_right".into(), json!(i_plus));
                doc.insert("correlation".into(), json!(correlation));
            }
            LimitParams::Cusp(c) => {
                doc.insert("gamma_sq".into(), json!(c.gamma_sq));
                doc.insert("hurst".into(), json!(c.hurst));
            }
            LimitParams::Misspecified(m) => {
                doc.insert("theta_star".into(), json!(m.theta_star));
                doc.insert("d_star_sq".into(), json!(m.d_star_sq));
                doc.insert("i_star".into(), json!(m.i_star));
                doc.insert("d_big_sq".into(), json!(m.d_big_sq));
            }
            LimitParams::Nonidentifiable { covariance, .. } => {
                doc.insert("roots".into(), json!(covariance.roots));
                doc.insert("rho".into(), json!(covariance.rho));
            }
            LimitParams::Jump {
                lambda_minus,
                lambda_plus,
                ..
            } => {
                doc.insert("lambda_minus".into(), json!(lambda_minus));
                doc.insert("lambda_plus".into(), json!(lambda_plus));
            }
        }
        doc.insert("target".into(), json!(self.target));
        doc.insert("sizes".into(), json!(self.sizes));
        if let Some(r) = self.mle_rate {
            doc.insert("rate_slope".into(), json!(r.slope));
            doc.insert("rate_stderr".into(), json!(r.stderr));
        }
        if let Some(r) = self.bayes_rate {
            doc.insert("bayes_rate_slope".into(), json!(r.slope));
            doc.insert("bayes_rate_stderr".into(), json!(r.stderr));
        }
        Value::Object(doc)
    }

    pub fn size(&self, n: usize) -> Option<&SizeSummary> {
        self.sizes.iter().find(|s| s.n == n)
    }

    /// Normalized errors at one sample size, failures dropped.
    pub fn normalized(&self, n: usize, which: Which) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.n == n)
            .filter_map(|r| match which {
                Which::Mle => r.mle_normalized,
                Which::Bayes => r.bayes_normalized,
            })
            .collect()
    }

    /// Raw estimates at one sample size, failures dropped.
    pub fn estimates(&self, n: usize, which: Which) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.n == n)
            .filter_map(|r| match which {
                Which::Mle => r.mle,
                Which::Bayes => r.bayes,
            })
            .collect()
    }
}

/// Everything shared by the replicates of a scenario.
struct Plan {
    model: IntensityModel,
    truth: TrueIntensity,
    limit: RegimeLimit,
    target: f64,
    /// Estimator over a fixed window (modes none and oracle).
    fixed: Option<Estimator>,
}

impl Plan {
    fn new(s: &Scenario) -> Result<Self> {
        s.validate()?;
        let model = s.build_model()?;
        let truth = s.build_truth(&model)?;
        let rule = QuadratureRule::default();
        let mut limit = limit_params(s.regime, &model, s.theta0, Some(&truth), &rule)?;
        if let LimitParams::Cusp(c) = &mut limit.params {
            if let Some(g) = s.limit_grid {
                *c = c.with_grid(g.halfwidth, g.points)?;
            }
        }
        if let LimitParams::Nonidentifiable {
            covariance,
            prior_weights,
        } = &mut limit.params
        {
            *prior_weights = covariance
                .roots
                .iter()
                .map(|&r| s.estimator.prior.relative_weight(&model, r))
                .collect::<Result<_>>()?;
        }
        let target = match &limit.params {
            LimitParams::Misspecified(m) => m.theta_star,
            _ => s.theta0,
        };
        let fixed = match s.window.mode {
            WindowMode::None => Some(Estimator::new(&model, &s.estimator, None)?),
            WindowMode::Oracle => {
                let w = optimal_window(&model, s.theta0, s.window.mu_star.unwrap_or_default())?;
                Some(Estimator::new(&model, &s.estimator, Some(&w))?)
            }
            WindowMode::Optimal | WindowMode::Sufficient => None,
        };
        Ok(Self {
            model,
            truth,
            limit,
            target,
            fixed,
        })
    }

    fn normalize(&self, n: usize, estimate: f64) -> f64 {
        if self.limit.regime == Regime::Nonidentifiable {
            estimate
        } else {
            (n as f64).powf(self.limit.rate_exponent) * (estimate - self.target)
        }
    }

    fn replicate(&self, s: &Scenario, n_index: usize, n: usize, r: usize) -> ReplicateRow {
        let stream_base = replicate_base(n_index, r);
        let mut row = ReplicateRow {
            n,
            replicate: r,
            stream_base,
            event_count: 0,
            preliminary: None,
            mle: None,
            bayes: None,
            mle_normalized: None,
            bayes_normalized: None,
            status: "ok".into(),
        };
        let sample = match simulate_sample_seq(&self.truth, n, RngStream::new(s.seed, stream_base)) {
            Ok(x) => x,
            Err(e) => {
                row.status = status_of(&e);
                return row;
            }
        };
        row.event_count = sample.total_events();
        if let Err(e) = self.estimate(s, &sample, &mut row) {
            row.status = status_of(&e);
        }
        row.mle_normalized = row.mle.map(|v| self.normalize(n, v));
        row.bayes_normalized = row.bayes.map(|v| self.normalize(n, v));
        row
    }

    fn estimate(&self, s: &Scenario, sample: &Sample, row: &mut ReplicateRow) -> Result<()> {
        let owned;
        let (est, data) = match &self.fixed {
            Some(e) => (e, sample.clone()),
            None => {
                let n = sample.n();
                if n < 9 {
                    return Err(Error::Precondition(format!("two-stage estimation needs n >= 9, got {n}")));
                }
                let k = preliminary_size(n);
                let prelim = preliminary_estimate(&self.model, &sample.subsample(0..k), &s.estimator)?;
                row.preliminary = Some(prelim.value);
                let stage = match s.window.mode {
                    WindowMode::Optimal => Stage::OptimalWindow {
                        mu_star: s.window.mu_star.unwrap_or_default(),
                    },
                    _ => Stage::SufficientWindow,
                };
                let window: Window = stage_window(&self.model, &prelim, stage, n)?;
                owned = Estimator::new(&self.model, &s.estimator, Some(&window))?;
                (&owned, sample.subsample(k..n))
            }
        };
        let events = est.events(&data)?;
        let mle = est.mle_events(&events);
        let bayes = if s.estimator.bayes {
            Some(est.bayes_events(&events))
        } else {
            None
        };
        let mut first_err = None;
        match mle {
            Ok(e) => row.mle = Some(e.value),
            Err(e) => first_err = Some(e),
        }
        match bayes {
            Some(Ok(e)) => row.bayes = Some(e.value),
            Some(Err(e)) => {
                first_err.get_or_insert(e);
            }
            None => {}
        }
        match first_err {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

fn status_of(e: &Error) -> String {
    let kind = match e {
        Error::Domain(_) => "domain",
        Error::Capability(_) => "capability",
        Error::Singularity(_) => "singularity",
        Error::Precondition(_) => "precondition",
        Error::Estimation(_) => "estimation",
        Error::Degenerate(_) => "degenerate",
        Error::Numerical(_) => "numerical",
        Error::Config(_) => "config",
    };
    format!("error:{kind}")
}

fn summarize(
    values: &[Option<f64>],
    normalized: &[Option<f64>],
    target: f64,
    nonident: bool,
    epsilon: f64,
    reference: Option<&[f64]>,
    boundary: bool,
) -> Option<EstimatorSummary> {
    let est: Vec<f64> = values.iter().flatten().copied().collect();
    let norm: Vec<f64> = normalized.iter().flatten().copied().collect();
    if est.is_empty() {
        return None;
    }
    let sq: Vec<f64> = norm.iter().map(|x| x * x).collect();
    let total_sq = pairwise_sum(&sq);
    let max_sq = sq.iter().copied().fold(0.0, f64::max);
    let err_sq: Vec<f64> = est.iter().map(|v| (v - target) * (v - target)).collect();
    let ks = reference.and_then(|r| ks_two_sample(&norm, r).ok());
    let ks_nonzero = if boundary {
        reference.and_then(|r| {
            let a: Vec<f64> = norm.iter().copied().filter(|x| x.abs() >= epsilon).collect();
            let b: Vec<f64> = r.iter().copied().filter(|&x| x != 0.0).collect();
            ks_two_sample(&a, &b).ok()
        })
    } else {
        None
    };
    let atoms = norm.iter().filter(|x| x.abs() < epsilon).count();
    Some(EstimatorSummary {
        count: est.len(),
        failures: values.len() - est.len(),
        mean: mean(&est),
        variance: if est.len() > 1 { variance(&est) } else { 0.0 },
        mse: if nonident { f64::NAN } else { mean(&err_sq) },
        normalized_mean: mean(&norm),
        normalized_variance: if norm.len() > 1 { variance(&norm) } else { 0.0 },
        normalized_second_moment: total_sq / norm.len() as f64,
        atom_frequency: atoms as f64 / norm.len() as f64,
        max_share: if total_sq > 0.0 { max_sq / total_sq } else { 0.0 },
        ks,
        ks_nonzero,
    })
}

/// Runs every (n, replicate) pair; deterministic for a given scenario and
/// independent of the number of worker threads.
pub fn run_scenario(s: &Scenario) -> Result<ExperimentReport> {
    let plan = Plan::new(s)?;
    let sizes = s.sizes();
    let jobs: Vec<(usize, usize, usize)> = sizes
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| (0..s.replicates).map(move |r| (i, n, r)))
        .collect();
    let rows = crate::par::map(jobs.len(), |j| {
        let (i, n, r) = jobs[j];
        plan.replicate(s, i, n, r)
    });

    let references = if s.limit_draws > 0 {
        let sampler = LimitSampler::new(&plan.limit)?;
        let draw = |salt: u64, which: Which| {
            sampler.sample_batch(s.limit_draws, RngStream::new(derived_seed(s.seed, salt), 0), which)
        };
        let mle = draw(1, Which::Mle)?;
        let bayes = if s.estimator.bayes { Some(draw(2, Which::Bayes)?) } else { None };
        Some((mle, bayes))
    } else {
        None
    };

    let nonident = plan.limit.regime == Regime::Nonidentifiable;
    let boundary = plan.limit.regime == Regime::Boundary;
    let mut summaries = Vec::with_capacity(sizes.len());
    for &n in &sizes {
        let at: Vec<&ReplicateRow> = rows.iter().filter(|r| r.n == n).collect();
        let col = |f: fn(&ReplicateRow) -> Option<f64>| at.iter().map(|r| f(r)).collect::<Vec<_>>();
        let mle = summarize(
            &col(|r| r.mle),
            &col(|r| r.mle_normalized),
            plan.target,
            nonident,
            s.atom_epsilon,
            references.as_ref().map(|r| r.0.as_slice()),
            boundary,
        );
        let bayes = summarize(
            &col(|r| r.bayes),
            &col(|r| r.bayes_normalized),
            plan.target,
            nonident,
            s.atom_epsilon,
            references.as_ref().and_then(|r| r.1.as_deref()),
            boundary,
        );
        summaries.push(SizeSummary { n, mle, bayes });
    }

    let fit = |pick: fn(&SizeSummary) -> Option<f64>| -> Option<RateFit> {
        if nonident {
            return None;
        }
        let pts: Vec<(usize, f64)> = summaries.iter().filter_map(|x| pick(x).map(|m| (x.n, m))).collect();
        let ns: Vec<usize> = pts.iter().map(|p| p.0).collect();
        let ms: Vec<f64> = pts.iter().map(|p| p.1).collect();
        rate_regression(&ns, &ms)
            .ok()
            .map(|(slope, stderr)| RateFit { slope, stderr })
    };
    let mle_rate = fit(|x| x.mle.as_ref().map(|m| m.mse));
    let bayes_rate = fit(|x| x.bayes.as_ref().map(|m| m.mse));

    Ok(ExperimentReport {
        scenario: s.clone(),
        limit: plan.limit,
        target: plan.target,
        rows,
        sizes: summaries,
        mle_rate,
        bayes_rate,
    })
}

/// sup |F_a − F_b| over the pooled sample, exact with ties.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(domain("KS statistic needs two nonempty samples"));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(domain("KS statistic is undefined for NaN values"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Least-squares slope of ln(mse) on ln(n) and its standard error.
pub fn rate_regression(ns: &[usize], mses: &[f64]) -> Result<(f64, f64)> {
    if ns.len() != mses.len() {
        return Err(domain("ns and mses differ in length"));
    }
    if let Some(m) = mses.iter().find(|m| !(**m > 0.0) || !m.is_finite()) {
        return Err(domain(format!("mean squared errors must be positive, got {m}")));
    }
    let mut distinct = ns.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 || distinct[0] == 0 {
        return Err(domain("rate regression needs at least three distinct positive n"));
    }
    let x: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = mses.iter().map(|m| m.ln()).collect();
    let (mx, my) = (mean(&x), mean(&y));
    let sxx = pairwise_sum(&x.iter().map(|v| (v - mx) * (v - mx)).collect::<Vec<_>>());
    let sxy = pairwise_sum(&x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).collect::<Vec<_>>());
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr = pairwise_sum(
        &x.iter()
            .zip(&y)
            .map(|(a, b)| {
                let e = b - intercept - slope * a;
                e * e
            })
            .collect::<Vec<_>>(),
    );
    let dof = (x.len() - 2) as f64;
    let stderr = if dof > 0.0 { (ssr / dof / sxx).sqrt() } else { 0.0 };
    Ok((slope, stderr))
}

/// Consistency of the change-point MLE under piecewise-constant
/// contamination, by direct KL minimization and by the closed-form region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionScan {
    pub x: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    /// consistent[ix][i1][i2]: ϑ* equals ϑ₀ within grid tolerance.
    pub consistent: Vec<Vec<Vec<bool>>>,
    /// The closed-form predicate h₁ < h₁max(x) and h₂ > h₂min(x).
    pub predicted: Vec<Vec<Vec<bool>>>,
}

impl RegionScan {
    /// Fraction of grid cells where both tests agree.
    pub fn agreement(&self) -> f64 {
        let mut same = 0usize;
        let mut total = 0usize;
        for (a, b) in self.consistent.iter().flatten().zip(self.predicted.iter().flatten()) {
            for (p, q) in a.iter().zip(b) {
                total += 1;
                same += usize::from(p == q);
            }
        }
        same as f64 / total.max(1) as f64
    }

    /// One CSV row per cell: x,h1,h2,consistent,predicted.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,h1,h2,consistent,predicted")?;
        for (ix, x) in self.x.iter().enumerate() {
            for (i1, h1) in self.h1.iter().enumerate() {
                for (i2, h2) in self.h2.iter().enumerate() {
                    writeln!(
                        out,
                        "{x:.16e},{h1:.16e},{h2:.16e},{},{}",
                        self.consistent[ix][i1][i2], self.predicted[ix][i1][i2]
                    )?;
                }
            }
        }
        Ok(())
    }
}

const REGION_THETA0: f64 = 0.5;

/// ϑ* for the change point g₁ = 1, g₂ = x at ϑ₀ = ½ on [0, 1], with h₁ added
/// before ϑ₀ and h₂ after it.
pub fn region_theta_star(x: f64, h1: f64, h2: f64, rule: &QuadratureRule) -> Result<f64> {
    let model = IntensityModel::with_params(CatalogId::Changepoint, &[("g1", 1.0), ("g2", x)], Some((0.0, 1.0)))?;
    let mut pieces = Vec::new();
    if h1 != 0.0 {
        pieces.push(ContaminationPiece {
            lo: 0.0,
            hi: REGION_THETA0,
            coefficients: vec![h1],
        });
    }
    if h2 != 0.0 {
        pieces.push(ContaminationPiece {
            lo: REGION_THETA0,
            hi: 1.0,
            coefficients: vec![h2],
        });
    }
    let truth = TrueIntensity::contaminated(model.clone(), REGION_THETA0, pieces)?;
    theta_star(&truth, &model, rule)
}

/// Grid steps of the non-smooth pseudo-true search on (0, 1).
const REGION_STEP: f64 = 1.0 / 20_000.0;

pub fn region_scan(x_grid: &[f64], h1_grid: &[f64], h2_grid: &[f64]) -> Result<RegionScan> {
    for &x in x_grid {
        if !(x > 1.0) {
            return Err(domain(format!("region scan needs x > 1, got {x}")));
        }
    }
    let rule = QuadratureRule::default();
    let cells: Vec<(usize, usize, usize)> = (0..x_grid.len())
        .flat_map(|a| (0..h1_grid.len()).flat_map(move |b| (0..h2_grid.len()).map(move |c| (a, b, c))))
        .collect();
    let flags = crate::par::map(cells.len(), |k| {
        let (a, b, c) = cells[k];
        region_theta_star(x_grid[a], h1_grid[b], h2_grid[c], &rule)
            .map(|star| (star - REGION_THETA0).abs() <= 1.5 * REGION_STEP)
    });
    let flags = flags.into_iter().collect::<Result<Vec<_>>>()?;
    let mut consistent = vec![vec![vec![false; h2_grid.len()]; h1_grid.len()]; x_grid.len()];
    let mut predicted = consistent.clone();
    for (k, &(a, b, c)) in cells.iter().enumerate() {
        consistent[a][b][c] = flags[k];
        let (h1_max, h2_min) = consistency_region(x_grid[a])?;
        predicted[a][b][c] = h1_grid[b] < h1_max && h2_grid[c] > h2_min;
    }
    Ok(RegionScan {
        x: x_grid.to_vec(),
        h1: h1_grid.to_vec(),
        h2: h2_grid.to_vec(),
        consistent,
        predicted,
    })
}

/// `count` equally spaced values from `lo` to `hi`.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|k| {
                if k + 1 == count {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / (count - 1) as f64
                }
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMOKE: &str = r#"
model = "REGULAR_EXP"
theta0 = 0.5
regime = "regular"
n = 50
replicates = 1
seed = 7
limit_draws = 100

[estimator]
grid_size = 101
bayes_panels = 400
"#;

    #[test]
    fn ks_examples() {
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(ks_two_sample(&[0.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(ks_two_sample(&[0.0, 1.0], &[0.5]).unwrap(), 0.5);
        assert!(ks_two_sample(&[], &[1.0]).is_err());
    }

    #[test]
    fn rate_regression_examples() {
        let ns = [100, 200, 400, 800];
        let one: Vec<f64> = ns.iter().map(|&n| 3.0 / n as f64).collect();
        let (s, e) = rate_regression(&ns, &one).unwrap();
        assert!((s + 1.0).abs() < 1e-12 && e < 1e-12);
        let three: Vec<f64> = ns.iter().map(|&n| 3.0 / (n as f64).powi(3)).collect();
        assert!((rate_regression(&ns, &three).unwrap().0 + 3.0).abs() < 1e-12);
        assert!(rate_regression(&ns, &[1.0, 0.0, 1.0, 1.0]).is_err());
        assert!(rate_regression(&[1, 2], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn smoke_scenario_has_one_row() {
        let s = Scenario::from_toml(SMOKE).unwrap();
        let r = run_scenario(&s).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].status, "ok");
        let doc = r.summary_json();
        assert!(doc["fisher_information"].as_f64().unwrap() > 0.0);
        let back: Scenario = serde_json::from_value(doc["scenario"].clone()).unwrap();
        assert_eq!(back, s);
        let mut csv = Vec::new();
        r.write_table(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 2);
    }

    #[test]
    fn scenario_rejects_unknown_and_missing_keys() {
        let e = Scenario::from_toml(&SMOKE.replace("seed = 7", "seed = 7\nbogus = 1")).unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        let e = Scenario::from_toml(&SMOKE.replace("model = \"REGULAR_EXP\"", "")).unwrap_err();
        assert!(e.to_string().contains("model"), "{e}");
        assert!(Scenario::from_toml(&SMOKE.replace("theta0 = 0.5", "theta0 = 5.0")).is_err());
    }

    #[test]
    fn toml_round_trip_keeps_shape() {
        let s = Scenario::from_toml(&SMOKE.replace("n = 50", "n = [50, 100]")).unwrap();
        assert_eq!(s.n, SampleSizes::Many(vec![50, 100]));
        let back = Scenario::from_toml(&s.to_toml().unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn region_examples() {
        let rule = QuadratureRule::default();
        assert!((region_theta_star(2.0, 0.0, 0.0, &rule).unwrap() - 0.5).abs() < 1e-12);
        assert!((region_theta_star(2.0, 0.4, 0.0, &rule).unwrap() - 0.5).abs() < 1e-12);
        assert!((region_theta_star(2.0, 0.5, 0.0, &rule).unwrap() - 0.5).abs() > 0.1);
        let scan = region_scan(&[2.0], &[0.0, 0.3, 0.6], &[-0.9, 0.0]).unwrap();
        assert_eq!(scan.agreement(), 1.0);
    }

    #[test]
    fn linspace_ends() {
        let v = linspace(-0.9, 2.1, 21);
        assert_eq!(v.len(), 21);
        assert_eq!(v[20], 2.1);
        assert!((v[1] + 0.75).abs() < 1e-15);
    }
}
