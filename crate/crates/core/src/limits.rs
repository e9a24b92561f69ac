//! Limit laws of the normalized estimation error in each regime: their
//! parameters and samplers.
//!
//! Draws are in the normalized scale φₙ⁻¹(ϑ̂ₙ − ϑ₀) with φₙ = n^{−rate_exponent},
//! except in the non-identifiable regime where they are parameter values.

use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    coincident_parameters, fisher_information, higher_order_information, misspec_asymptotics, nonident_covariance,
    MisspecAsymptotics, NonIdentCovariance, QuadratureRule,
};
use crate::error::{Error, Result};
use crate::intensity::{Family, IntensityModel, Side, TrueIntensity};
use crate::rng::RngStream;
use crate::stats::{normal_cdf, simpson_uniform};

/// Asymptotic regime of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Regular,
    Misspecified,
    Nonidentifiable,
    NullFisher,
    DiscFisher,
    Boundary,
    Cusp,
    Jump,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Regular => "regular",
            Regime::Misspecified => "misspecified",
            Regime::Nonidentifiable => "nonidentifiable",
            Regime::NullFisher => "null-fisher",
            Regime::DiscFisher => "disc-fisher",
            Regime::Boundary => "boundary",
            Regime::Cusp => "cusp",
            Regime::Jump => "jump",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let all = [
            Regime::Regular,
            Regime::Misspecified,
            Regime::Nonidentifiable,
            Regime::NullFisher,
            Regime::DiscFisher,
            Regime::Boundary,
            Regime::Cusp,
            Regime::Jump,
        ];
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        all.into_iter()
            .find(|r| r.as_str() == key)
            .ok_or_else(|| Error::Config(format!("unknown regime '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CuspParams {
    pub kappa: f64,
    pub hurst: f64,
    pub gamma_sq: f64,
    pub grid_halfwidth: f64,
    pub grid_points: usize,
}

pub const CUSP_HALFWIDTH: f64 = 20.0;
pub const CUSP_POINTS: usize = 2001;
const MAX_FBM_POINTS: usize = 4001;

impl CuspParams {
    /// Γ² = 4a² sin²(2πκ) B(1+κ, 1+κ) / (λ₀ cos(πκ)).
    pub fn new(a: f64, kappa: f64, lambda0: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa < 0.5) {
            return Err(Error::Domain(format!("cusp order must lie in (0, 1/2), got {kappa}")));
        }
        if !(lambda0 > 0.0) || a == 0.0 || !a.is_finite() {
            return Err(Error::Domain("cusp limit needs a != 0 and lambda0 > 0".into()));
        }
        let pi = std::f64::consts::PI;
        let s = (2.0 * pi * kappa).sin();
        let beta = statrs::function::beta::beta(1.0 + kappa, 1.0 + kappa);
        let gamma_sq = 4.0 * a * a * s * s * beta / (lambda0 * (pi * kappa).cos());
        Ok(Self {
            kappa,
            hurst: kappa + 0.5,
            gamma_sq,
            grid_halfwidth: CUSP_HALFWIDTH,
            grid_points: CUSP_POINTS,
        })
    }

    pub fn with_grid(self, halfwidth: f64, points: usize) -> Result<Self> {
        if !(halfwidth > 0.0) || points < 5 || points % 2 == 0 || points > MAX_FBM_POINTS {
            return Err(Error::Config(format!(
                "cusp grid needs a positive halfwidth and an odd point count in [5, {MAX_FBM_POINTS}]"
            )));
        }
        Ok(Self {
            grid_halfwidth: halfwidth,
            grid_points: points,
            ..self
        })
    }

    /// Length of one standardized unit in the u scale, Γ^{−1/H}.
    pub fn unit(&self) -> f64 {
        self.gamma_sq.powf(-0.5 / self.hurst)
    }
}

/// Regime-specific limit parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitParams {
    Regular {
        fisher_information: f64,
    },
    Misspecified(MisspecAsymptotics),
    Nonidentifiable {
        covariance: NonIdentCovariance,
        prior_weights: Vec<f64>,
    },
    NullFisher {
        i3: f64,
    },
    DiscFisher {
        i_minus: f64,
        i_plus: f64,
        correlation: f64,
    },
    Boundary {
        fisher_information: f64,
        lower: f64,
    },
    Cusp(CuspParams),
    Jump {
        lambda_minus: f64,
        lambda_plus: f64,
        u_max: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeLimit {
    pub regime: Regime,
    pub rate_exponent: f64,
    pub params: LimitParams,
}

impl RegimeLimit {
    pub fn new(params: LimitParams) -> Self {
        let (regime, rate_exponent) = match &params {
            LimitParams::Regular { .. } => (Regime::Regular, 0.5),
            LimitParams::Misspecified(_) => (Regime::Misspecified, 0.5),
            LimitParams::Nonidentifiable { .. } => (Regime::Nonidentifiable, 0.5),
            LimitParams::NullFisher { .. } => (Regime::NullFisher, 1.0 / 6.0),
            LimitParams::DiscFisher { .. } => (Regime::DiscFisher, 0.5),
            LimitParams::Boundary { .. } => (Regime::Boundary, 0.5),
            LimitParams::Cusp(c) => (Regime::Cusp, 0.5 / c.hurst),
            LimitParams::Jump { .. } => (Regime::Jump, 1.0),
        };
        Self {
            regime,
            rate_exponent,
            params,
        }
    }

    /// Jump-regime parameters from the one-sided levels λ(s*−), λ(s*+).
    pub fn jump(lambda_minus: f64, lambda_plus: f64) -> Result<Self> {
        if !(lambda_minus > 0.0 && lambda_plus > 0.0) || lambda_minus == lambda_plus {
            return Err(Error::Precondition(format!(
                "jump limit needs distinct positive levels, got {lambda_minus} and {lambda_plus}"
            )));
        }
        let gap = lambda_plus.sqrt() - lambda_minus.sqrt();
        Ok(Self::new(LimitParams::Jump {
            lambda_minus,
            lambda_plus,
            u_max: JUMP_TAIL / (gap * gap),
        }))
    }
}

/// E√Z(±U) = exp(−U(√λ₊ − √λ₋)²/2) = e^{−20}.
const JUMP_TAIL: f64 = 40.0;

/// ∫ λ̇(ϑ₀−,t) λ̇(ϑ₀+,t) / λ(ϑ₀,t) dt normalized by √(I₋I₊).
fn one_sided_correlation(model: &IntensityModel, theta0: f64, i_minus: f64, i_plus: f64, rule: &QuadratureRule) -> f64 {
    let cuts = model.time_breakpoints(theta0);
    let cross = rule.integrate(
        |t| {
            model.derivative(theta0, t, 1, Some(Side::Left)) * model.derivative(theta0, t, 1, Some(Side::Right))
                / model.value(theta0, t, None)
        },
        0.0,
        model.horizon(),
        &cuts,
        model.horizon(),
    );
    cross / (i_minus * i_plus).sqrt()
}

/// Fills the limit parameters of `regime` for `model` at ϑ₀. The
/// misspecified regime needs the true intensity.
pub fn limit_params(
    regime: Regime,
    model: &IntensityModel,
    theta0: f64,
    truth: Option<&TrueIntensity>,
    rule: &QuadratureRule,
) -> Result<RegimeLimit> {
    model.evaluate(theta0, 0.0)?;
    let params = match regime {
        Regime::Regular => LimitParams::Regular {
            fisher_information: fisher_information(model, theta0, None, None, rule)?,
        },
        Regime::Misspecified => {
            let truth = truth.ok_or_else(|| {
                Error::Precondition("the misspecified regime needs a true intensity".into())
            })?;
            LimitParams::Misspecified(misspec_asymptotics(truth, model, rule)?)
        }
        Regime::Nonidentifiable => {
            let roots = coincident_parameters(model, theta0, rule)?;
            let covariance = nonident_covariance(model, &roots, rule)?;
            let prior_weights = vec![1.0; roots.len()];
            LimitParams::Nonidentifiable {
                covariance,
                prior_weights,
            }
        }
        Regime::NullFisher => LimitParams::NullFisher {
            i3: higher_order_information(model, theta0, rule)?,
        },
        Regime::DiscFisher => {
            let i_minus = fisher_information(model, theta0, None, Some(Side::Left), rule)?;
            let i_plus = fisher_information(model, theta0, None, Some(Side::Right), rule)?;
            let correlation = one_sided_correlation(model, theta0, i_minus, i_plus, rule);
            LimitParams::DiscFisher {
                i_minus,
                i_plus,
                correlation,
            }
        }
        Regime::Boundary => {
            let ti = model.theta_interval();
            if (theta0 - ti.alpha()).abs() > 1e-12 * (1.0 + ti.alpha().abs()) {
                return Err(Error::Precondition(format!(
                    "the boundary regime needs theta0 at the lower end {}, got {theta0}",
                    ti.alpha()
                )));
            }
            LimitParams::Boundary {
                fisher_information: fisher_information(model, theta0, None, Some(Side::Right), rule)?,
                lower: ti.alpha(),
            }
        }
        Regime::Cusp => match *model.family() {
            Family::Cusp { a, kappa, lambda0 } => LimitParams::Cusp(CuspParams::new(a, kappa, lambda0)?),
            _ => {
                return Err(Error::Precondition(format!("{} is not a cusp family", model.id())));
            }
        },
        Regime::Jump => {
            let (lm, lp) = model
                .jump_levels()
                .ok_or_else(|| Error::Precondition(format!("{} has no jump levels", model.id())))?;
            return RegimeLimit::jump(lm, lp);
        }
    };
    let limit = RegimeLimit::new(params);
    check_positive(&limit)?;
    Ok(limit)
}

fn check_positive(limit: &RegimeLimit) -> Result<()> {
    let bad = |name: &str, v: f64| -> Result<()> {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::Degenerate(format!("{name} = {v} must be positive")))
        }
    };
    match &limit.params {
        LimitParams::Regular { fisher_information } | LimitParams::Boundary { fisher_information, .. } => {
            bad("Fisher information", *fisher_information)
        }
        LimitParams::NullFisher { i3 } => bad("I3", *i3),
        LimitParams::DiscFisher { i_minus, i_plus, .. } => {
            bad("I(theta0-)", *i_minus)?;
            bad("I(theta0+)", *i_plus)
        }
        LimitParams::Cusp(c) => bad("Gamma^2", c.gamma_sq),
        _ => Ok(()),
    }
}

/// Which estimator's limit to draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Which {
    Mle,
    Bayes,
}

/// Fractional Brownian motion on a fixed grid, W(0) = 0, by Cholesky
/// factorization of the covariance at the nonzero nodes.
#[derive(Debug, Clone)]
pub struct FbmSampler {
    grid: Vec<f64>,
    /// Grid indices of the nonzero nodes, in factor order.
    nodes: Vec<usize>,
    /// Packed lower-triangular factor, row i holding i+1 entries.
    factor: Vec<f64>,
}

impl FbmSampler {
    pub fn new(hurst: f64, grid: Vec<f64>) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(Error::Domain(format!("Hurst index must lie in (0, 1), got {hurst}")));
        }
        if grid.len() > MAX_FBM_POINTS {
            return Err(Error::Domain(format!(
                "fBm grid has {} points, the limit is {MAX_FBM_POINTS}",
                grid.len()
            )));
        }
        if grid.iter().any(|u| !u.is_finite()) {
            return Err(Error::Domain("fBm grid must be finite".into()));
        }
        let nodes: Vec<usize> = (0..grid.len()).filter(|&k| grid[k] != 0.0).collect();
        let m = nodes.len();
        let h2 = 2.0 * hurst;
        let cov = DMatrix::from_fn(m, m, |i, j| {
            let (u, v) = (grid[nodes[i]], grid[nodes[j]]);
            0.5 * (u.abs().powf(h2) + v.abs().powf(h2) - (u - v).abs().powf(h2))
        });
        let scale = (0..m).map(|i| cov[(i, i)]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut chol = None;
        for jitter in [0.0, 1e-14, 1e-12, 1e-10, 1e-8] {
            let mut c = cov.clone();
            for i in 0..m {
                c[(i, i)] += jitter * scale;
            }
            if let Some(ch) = c.cholesky() {
                chol = Some(ch.l());
                break;
            }
        }
        let l = chol.ok_or_else(|| Error::Numerical("fBm covariance is not positive definite after jitter".into()))?;
        let mut factor = Vec::with_capacity(m * (m + 1) / 2);
        for i in 0..m {
            for j in 0..=i {
                factor.push(l[(i, j)]);
            }
        }
        Ok(Self { grid, nodes, factor })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let m = self.nodes.len();
        let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let mut out = vec![0.0; self.grid.len()];
        let mut row = 0;
        for i in 0..m {
            let coeffs = &self.factor[row..row + i + 1];
            out[self.nodes[i]] = coeffs.iter().zip(&z).map(|(a, b)| a * b).sum();
            row += i + 1;
        }
        out
    }
}

/// One fBm path on `grid`.
pub fn simulate_fbm<R: Rng + ?Sized>(hurst: f64, grid: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    Ok(FbmSampler::new(hurst, grid.to_vec())?.sample(rng))
}

/// Symmetric uniform grid on [−halfwidth, halfwidth]; 0 is a node.
pub fn symmetric_grid(halfwidth: f64, points: usize) -> Vec<f64> {
    let half = (points - 1) / 2;
    let step = halfwidth / half as f64;
    (0..points)
        .map(|k| {
            if k == half {
                0.0
            } else {
                (k as f64 - half as f64) * step
            }
        })
        .collect()
}

/// A limit law with any expensive factorization done once.
#[derive(Debug, Clone)]
pub struct LimitSampler {
    limit: RegimeLimit,
    fbm: Option<FbmSampler>,
    /// Factor of the non-identifiable correlation matrix.
    mixing: Option<DMatrix<f64>>,
}

impl LimitSampler {
    pub fn new(limit: &RegimeLimit) -> Result<Self> {
        let mut fbm = None;
        let mut mixing = None;
        match &limit.params {
            LimitParams::Cusp(c) => {
                let c = c.with_grid(c.grid_halfwidth, c.grid_points)?;
                fbm = Some(FbmSampler::new(c.hurst, symmetric_grid(c.grid_halfwidth, c.grid_points))?);
            }
            LimitParams::Nonidentifiable {
                covariance,
                prior_weights,
            } => {
                let k = covariance.roots.len();
                if covariance.informations.len() != k || prior_weights.len() != k || covariance.rho.len() != k {
                    return Err(Error::Domain("non-identifiable limit parameters have mismatched sizes".into()));
                }
                let rho = DMatrix::from_fn(k, k, |i, j| covariance.rho[i][j]);
                let eig = SymmetricEigen::new(rho);
                let mut v = eig.eigenvectors;
                for (j, &ev) in eig.eigenvalues.iter().enumerate() {
                    let s = ev.max(0.0).sqrt();
                    for i in 0..k {
                        v[(i, j)] *= s;
                    }
                }
                mixing = Some(v);
            }
            LimitParams::DiscFisher { correlation, .. } => {
                if !(correlation.abs() <= 1.0 + 1e-9) {
                    return Err(Error::Domain(format!("correlation {correlation} outside [-1, 1]")));
                }
            }
            _ => {}
        }
        Ok(Self {
            limit: limit.clone(),
            fbm,
            mixing,
        })
    }

    pub fn limit(&self) -> &RegimeLimit {
        &self.limit
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, which: Which) -> Result<f64> {
        let normal = |rng: &mut R| -> f64 { rng.sample(StandardNormal) };
        match &self.limit.params {
            LimitParams::Regular { fisher_information: i } => Ok(normal(rng) / i.sqrt()),
            LimitParams::Misspecified(m) => Ok(normal(rng) * m.d_big_sq.sqrt()),
            LimitParams::Boundary { fisher_information: i, .. } => {
                let z = normal(rng);
                Ok(match which {
                    Which::Mle => {
                        if z >= 0.0 {
                            z / i.sqrt()
                        } else {
                            0.0
                        }
                    }
                    Which::Bayes => boundary_bayes(z, *i),
                })
            }
            LimitParams::NullFisher { i3 } => {
                let xi = normal(rng);
                Ok(match which {
                    Which::Mle => xi.signum() * (xi.abs() / i3.sqrt()).cbrt(),
                    Which::Bayes => null_fisher_bayes(xi) / i3.powf(1.0 / 6.0),
                })
            }
            LimitParams::DiscFisher {
                i_minus,
                i_plus,
                correlation,
            } => {
                let r = correlation.clamp(-1.0, 1.0);
                let z1 = normal(rng);
                let z2 = normal(rng);
                let zm = z1;
                let zp = r * z1 + (1.0 - r * r).sqrt() * z2;
                Ok(match which {
                    Which::Mle => disc_fisher_mle(zm, zp, *i_minus, *i_plus).0,
                    Which::Bayes => disc_fisher_bayes(zm, zp, *i_minus, *i_plus),
                })
            }
            LimitParams::Nonidentifiable {
                covariance,
                prior_weights,
            } => {
                let mix = self.mixing.as_ref().expect("mixing factor built in new");
                let k = covariance.roots.len();
                let z: Vec<f64> = (0..k).map(|_| normal(rng)).collect();
                let zeta: Vec<f64> = (0..k).map(|i| (0..k).map(|j| mix[(i, j)] * z[j]).sum()).collect();
                Ok(nonident_draw(&zeta, covariance, prior_weights, which))
            }
            LimitParams::Cusp(c) => {
                let fbm = self.fbm.as_ref().expect("fBm sampler built in new");
                let w = fbm.sample(rng);
                Ok(cusp_draw(fbm.grid(), &w, c.hurst, which) * c.unit())
            }
            LimitParams::Jump {
                lambda_minus,
                lambda_plus,
                u_max,
            } => {
                let path = JumpPath::simulate(*lambda_minus, *lambda_plus, *u_max, rng);
                Ok(match which {
                    Which::Mle => path.argmax().0,
                    Which::Bayes => path.posterior_mean(),
                })
            }
        }
    }

    /// `count` draws; draw i uses stream `base.offset(i)`.
    pub fn sample_batch(&self, count: usize, base: RngStream, which: Which) -> Result<Vec<f64>> {
        crate::par::map(count, |i| {
            let mut rng = base.offset(i as u64).generator();
            self.sample(&mut rng, which)
        })
        .into_iter()
        .collect()
    }
}

/// One draw of the limit variable.
pub fn sample_limit<R: Rng + ?Sized>(limit: &RegimeLimit, rng: &mut R, which: Which) -> Result<f64> {
    LimitSampler::new(limit)?.sample(rng, which)
}

/// e^{s²/2} Φ(s), finite for s ≲ 37.
fn scaled_normal_cdf(s: f64) -> f64 {
    if s > -26.0 {
        (0.5 * s * s).exp() * normal_cdf(s)
    } else {
        // Mills-ratio series
        let q = 1.0 / (s * s);
        let series = 1.0 - q * (1.0 - 3.0 * q * (1.0 - 5.0 * q * (1.0 - 7.0 * q)));
        series / (s.abs() * (2.0 * std::f64::consts::PI).sqrt())
    }
}

/// I^{−1/2}(ζ* + 1/∫_{−ζ*}^∞ e^{−(u²−ζ*²)/2} du); the integral equals
/// √(2π) e^{ζ*²/2} Φ(ζ*).
fn boundary_bayes(zeta_star: f64, info: f64) -> f64 {
    let inner = (2.0 * std::f64::consts::PI).sqrt() * scaled_normal_cdf(zeta_star);
    (zeta_star + 1.0 / inner) / info.sqrt()
}

/// Branch of the discontinuous-Fisher MLE limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscBranch {
    Left,
    Zero,
    Right,
}

/// MLE limit for standardized (ζ₋, ζ₊): the maximizer of the two-branch Z.
pub fn disc_fisher_mle(zm: f64, zp: f64, i_minus: f64, i_plus: f64) -> (f64, DiscBranch) {
    let left = zm < 0.0 && (zp < 0.0 || zm.abs() > zp.abs());
    if left {
        (zm / i_minus.sqrt(), DiscBranch::Left)
    } else if zm > 0.0 && zp < 0.0 {
        (0.0, DiscBranch::Zero)
    } else {
        (zp / i_plus.sqrt(), DiscBranch::Right)
    }
}

/// Half-line integrals (∫₀^∞ e^{av − bv²/2} dv, ∫₀^∞ v e^{av − bv²/2} dv).
fn half_gaussian_moments(a: f64, b: f64) -> (f64, f64) {
    let s = a / b.sqrt();
    let i0 = (2.0 * std::f64::consts::PI / b).sqrt() * scaled_normal_cdf(s);
    let i1 = (1.0 + a * i0) / b;
    (i0, i1)
}

/// ∫uZ/∫Z for the two-branch Z in closed form.
fn disc_fisher_bayes(zm: f64, zp: f64, i_minus: f64, i_plus: f64) -> f64 {
    let (m0, m1) = half_gaussian_moments(-zm * i_minus.sqrt(), i_minus);
    let (p0, p1) = half_gaussian_moments(zp * i_plus.sqrt(), i_plus);
    (p1 - m1) / (m0 + p0)
}

/// Bayes limit in the null-Fisher regime, standardized so that
/// ln Z(w) = w³ξ − w⁶/2; computed by Simpson on a grid covering the mass.
fn null_fisher_bayes(xi: f64) -> f64 {
    let reach = (xi.abs() + (80.0 + 2.0 * xi * xi).sqrt()).cbrt();
    let points = 4001;
    let step = 2.0 * reach / (points - 1) as f64;
    let logz: Vec<f64> = (0..points)
        .map(|k| {
            let w = -reach + k as f64 * step;
            let w3 = w * w * w;
            w3 * xi - 0.5 * w3 * w3
        })
        .collect();
    let top = logz.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: Vec<f64> = logz.iter().map(|l| (l - top).exp()).collect();
    let uz: Vec<f64> = z.iter().enumerate().map(|(k, v)| (-reach + k as f64 * step) * v).collect();
    simpson_uniform(&uz, step) / simpson_uniform(&z, step)
}

fn nonident_draw(zeta: &[f64], cov: &NonIdentCovariance, prior: &[f64], which: Which) -> f64 {
    match which {
        Which::Mle => {
            let mut best = 0;
            for (l, z) in zeta.iter().enumerate() {
                if z.abs() > zeta[best].abs() {
                    best = l;
                }
            }
            cov.roots[best]
        }
        Which::Bayes => {
            // Q_l ∝ p(ϑ_l) I(ϑ_l)^{−1/2} e^{ζ_l²/2}
            let logs: Vec<f64> = (0..zeta.len())
                .map(|l| prior[l].ln() - 0.5 * cov.informations[l].ln() + 0.5 * zeta[l] * zeta[l])
                .collect();
            let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let q: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
            let total: f64 = q.iter().sum();
            cov.roots.iter().zip(&q).map(|(r, w)| r * w).sum::<f64>() / total
        }
    }
}

/// Standardized cusp limit from one fBm path: ln Z(v) = W(v) − |v|^{2H}/2.
fn cusp_draw(grid: &[f64], w: &[f64], hurst: f64, which: Which) -> f64 {
    let logz: Vec<f64> = grid.iter().zip(w).map(|(v, wv)| wv - 0.5 * v.abs().powf(2.0 * hurst)).collect();
    match which {
        Which::Mle => {
            let mut best = 0;
            for k in 1..logz.len() {
                if logz[k] > logz[best] {
                    best = k;
                }
            }
            grid[best]
        }
        Which::Bayes => {
            let top = logz.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: Vec<f64> = logz.iter().map(|l| (l - top).exp()).collect();
            let vz: Vec<f64> = grid.iter().zip(&z).map(|(v, zv)| v * zv).collect();
            let step = grid[1] - grid[0];
            simpson_uniform(&vz, step) / simpson_uniform(&z, step)
        }
    }
}

/// A realization of the jump-regime limit likelihood ratio on [−U, U]:
/// ln Z(u) = ln(λ₊/λ₋) π₊(u) − (λ₊−λ₋)u for u ≥ 0 and
/// ln Z(u) = ln(λ₋/λ₊) π₋(−u) − (λ₊−λ₋)u for u ≤ 0,
/// with π₊ of rate λ₋ and π₋ of rate λ₊.
#[derive(Debug, Clone)]
pub struct JumpPath {
    /// Events of π₊, increasing.
    right: Vec<f64>,
    /// Events of π₋ in |u|, increasing.
    left: Vec<f64>,
    log_ratio: f64,
    gap: f64,
    u_max: f64,
}

impl JumpPath {
    pub fn simulate<R: Rng + ?Sized>(lambda_minus: f64, lambda_plus: f64, u_max: f64, rng: &mut R) -> Self {
        let mut events = |rate: f64| {
            let mut out = Vec::new();
            let mut t = 0.0;
            loop {
                let e: f64 = rng.sample(Exp1);
                t += e / rate;
                if t > u_max {
                    break out;
                }
                out.push(t);
            }
        };
        let right = events(lambda_minus);
        let left = events(lambda_plus);
        Self {
            right,
            left,
            log_ratio: (lambda_plus / lambda_minus).ln(),
            gap: lambda_plus - lambda_minus,
            u_max,
        }
    }

    /// ln Z at u given the number of events counted on u's side.
    fn log_z_count(&self, u: f64, count: usize) -> f64 {
        if u >= 0.0 {
            self.log_ratio * count as f64 - self.gap * u
        } else {
            -self.log_ratio * count as f64 - self.gap * u
        }
    }

    /// ln Z(u), right-continuous in |u| (events at |u| are counted).
    pub fn log_z(&self, u: f64) -> f64 {
        let events = if u >= 0.0 { &self.right } else { &self.left };
        let count = events.partition_point(|&e| e <= u.abs());
        self.log_z_count(u, count)
    }

    /// Maximizer over [−U, U] using the larger one-sided limit at each event;
    /// ties go to the smallest u. Returns (û, ln Z(û±)).
    pub fn argmax(&self) -> (f64, f64) {
        let mut best = (0.0, 0.0);
        let mut offer = |u: f64, v: f64| {
            if v > best.1 || (v == best.1 && u < best.0) {
                best = (u, v);
            }
        };
        for (k, &e) in self.right.iter().enumerate() {
            offer(e, self.log_z_count(e, k).max(self.log_z_count(e, k + 1)));
        }
        offer(self.u_max, self.log_z_count(self.u_max, self.right.len()));
        for (k, &e) in self.left.iter().enumerate() {
            offer(-e, self.log_z_count(-e, k).max(self.log_z_count(-e, k + 1)));
        }
        offer(-self.u_max, self.log_z_count(-self.u_max, self.left.len()));
        best
    }

    /// ∫uZ/∫Z over [−U, U], exact on each piece between events.
    pub fn posterior_mean(&self) -> f64 {
        // pieces: (start |u|, end |u|, ln Z at the start, slope in |u|, sign of u)
        let mut pieces = Vec::with_capacity(self.right.len() + self.left.len() + 2);
        for (events, sign) in [(&self.right, 1.0), (&self.left, -1.0)] {
            let slope = -sign * self.gap;
            let mut x0 = 0.0;
            for k in 0..=events.len() {
                let x1 = if k < events.len() { events[k] } else { self.u_max };
                let start = self.log_z_count(sign * x0, k);
                pieces.push((x0, x1, start, slope, sign));
                x0 = x1;
            }
        }
        let top = pieces
            .iter()
            .map(|&(x0, x1, a, s, _)| a.max(a + s * (x1 - x0)))
            .fold(f64::NEG_INFINITY, f64::max);
        let mut num = 0.0;
        let mut den = 0.0;
        for &(x0, x1, a, s, sign) in &pieces {
            let len = x1 - x0;
            if len <= 0.0 {
                continue;
            }
            // integrate from the larger end so the exponent never grows
            let (i0, ix) = if s <= 0.0 {
                let y = s * len;
                let base = (a - top).exp();
                (base * len * exprel(y), base * (x0 * len * exprel(y) + len * len * exprel_moment(y)))
            } else {
                let y = -s * len;
                let base = (a + s * len - top).exp();
                (base * len * exprel(y), base * (x1 * len * exprel(y) - len * len * exprel_moment(y)))
            };
            den += i0;
            num += sign * ix;
        }
        num / den
    }
}

/// (e^y − 1)/y.
fn exprel(y: f64) -> f64 {
    if y.abs() < 1e-8 {
        1.0 + 0.5 * y
    } else {
        y.exp_m1() / y
    }
}

/// ∫₀¹ t e^{yt} dt = ((y − 1)e^y + 1)/y².
fn exprel_moment(y: f64) -> f64 {
    if y.abs() < 1e-2 {
        0.5 + y * (1.0 / 3.0 + y * (1.0 / 8.0 + y * (1.0 / 30.0 + y / 144.0)))
    } else {
        ((y - 1.0) * y.exp() + 1.0) / (y * y)
    }
}
