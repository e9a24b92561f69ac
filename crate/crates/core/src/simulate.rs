//! Thinning simulation of inhomogeneous Poisson trajectories.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::intensity::{IntensityModel, TrueIntensity};
use crate::rng::RngStream;

/// An intensity that can be simulated: bounded by `bound()` on [0, horizon].
pub trait RateFunction: Sync {
    fn horizon(&self) -> f64;
    fn bound(&self) -> f64;
    fn rate(&self, t: f64) -> f64;
}

impl RateFunction for TrueIntensity {
    fn horizon(&self) -> f64 {
        TrueIntensity::horizon(self)
    }

    fn bound(&self) -> f64 {
        self.lambda_max()
    }

    fn rate(&self, t: f64) -> f64 {
        self.value(t)
    }
}

/// A catalog model at a fixed parameter value.
#[derive(Debug, Clone, Copy)]
pub struct ModelAt<'a> {
    pub model: &'a IntensityModel,
    pub theta: f64,
}

impl RateFunction for ModelAt<'_> {
    fn horizon(&self) -> f64 {
        self.model.horizon()
    }

    fn bound(&self) -> f64 {
        self.model.lambda_max()
    }

    fn rate(&self, t: f64) -> f64 {
        self.model.value(self.theta, t, None)
    }
}

/// Strictly increasing event times.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    events: Vec<f64>,
}

impl Trajectory {
    pub fn new(events: Vec<f64>, horizon: f64) -> Result<Self> {
        for w in events.windows(2) {
            if !(w[0] < w[1]) {
                return Err(domain("event times must be strictly increasing"));
            }
        }
        if let (Some(&first), Some(&last)) = (events.first(), events.last()) {
            if first < 0.0 || last > horizon {
                return Err(domain(format!("event times must lie in [0, {horizon}]")));
            }
        }
        Ok(Self { events })
    }

    pub fn events(&self) -> &[f64] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// n independent trajectories on a shared horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    trajectories: Vec<Trajectory>,
    horizon: f64,
}

impl Sample {
    pub fn new(trajectories: Vec<Trajectory>, horizon: f64) -> Result<Self> {
        for tr in &trajectories {
            if tr.events.last().is_some_and(|&t| t > horizon) {
                return Err(domain("trajectory exceeds the sample horizon"));
            }
        }
        Ok(Self { trajectories, horizon })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n(&self) -> usize {
        self.trajectories.len()
    }

    pub fn total_events(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    /// Trajectories `range` as a new sample.
    pub fn subsample(&self, range: std::ops::Range<usize>) -> Sample {
        Sample {
            trajectories: self.trajectories[range].to_vec(),
            horizon: self.horizon,
        }
    }

    /// One CSV row per event: `trajectory_index,event_time`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "trajectory_index,event_time")?;
        for (j, tr) in self.trajectories.iter().enumerate() {
            for t in &tr.events {
                writeln!(out, "{j},{t:.16e}")?;
            }
        }
        Ok(())
    }

    /// Reads the CSV written by [`Sample::write_csv`]. Trajectories without
    /// events are recovered up to the largest index, or up to `n` if given.
    pub fn read_csv<R: BufRead>(input: R, horizon: f64, n: Option<usize>) -> Result<Sample> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Config(format!("reading events: {e}")))?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let (j, t) = line
                .split_once(',')
                .ok_or_else(|| Error::Config(format!("line {}: expected two columns", lineno + 1)))?;
            let j: usize = j
                .trim()
                .parse()
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
            let t: f64 = t
                .trim()
                .parse()
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
            if rows.len() <= j {
                rows.resize(j + 1, Vec::new());
            }
            rows[j].push(t);
        }
        if let Some(n) = n {
            if rows.len() > n {
                return Err(Error::Config(format!("found trajectory index {} >= n = {n}", rows.len() - 1)));
            }
            rows.resize(n, Vec::new());
        }
        let trajectories = rows
            .into_iter()
            .map(|ev| Trajectory::new(ev, horizon))
            .collect::<Result<Vec<_>>>()?;
        Sample::new(trajectories, horizon)
    }
}

/// Thinning: candidates of a homogeneous process at rate `bound()`, each kept
/// with probability rate(t)/bound().
pub fn simulate_trajectory<F: RateFunction + ?Sized>(intensity: &F, stream: RngStream) -> Result<Trajectory> {
    let mut rng = stream.generator();
    simulate_with(intensity, &mut rng)
}

pub(crate) fn simulate_with<F: RateFunction + ?Sized, R: Rng>(intensity: &F, rng: &mut R) -> Result<Trajectory> {
    let tau = intensity.horizon();
    let bound = intensity.bound();
    if !(bound > 0.0) {
        let probes = 257;
        for k in 0..probes {
            let t = tau * k as f64 / (probes - 1) as f64;
            if intensity.rate(t) > 0.0 {
                return Err(Error::Config(format!(
                    "intensity bound {bound} is not positive but the intensity is"
                )));
            }
        }
        return Ok(Trajectory::default());
    }
    let mut events = Vec::new();
    let mut t = 0.0;
    loop {
        let gap: f64 = rng.sample(Exp1);
        t += gap / bound;
        if t > tau {
            break;
        }
        let u: f64 = rng.random();
        let rate = intensity.rate(t);
        if rate > bound {
            return Err(Error::Numerical(format!(
                "intensity {rate} at t = {t} exceeds its certified bound {bound}"
            )));
        }
        if u * bound < rate && events.last().is_none_or(|&last| last < t) {
            events.push(t);
        }
    }
    Ok(Trajectory { events })
}

/// n trajectories; trajectory j uses stream `base.offset(j)`.
pub fn simulate_sample<F: RateFunction + ?Sized>(intensity: &F, n: usize, base: RngStream) -> Result<Sample> {
    if n == 0 {
        return Err(domain("sample size must be at least 1"));
    }
    let trajectories = crate::par::map(n, |j| simulate_trajectory(intensity, base.offset(j as u64)));
    let trajectories = trajectories.into_iter().collect::<Result<Vec<_>>>()?;
    Sample::new(trajectories, intensity.horizon())
}

/// Sequential variant used inside already-parallel replicate loops.
pub(crate) fn simulate_sample_seq<F: RateFunction + ?Sized>(intensity: &F, n: usize, base: RngStream) -> Result<Sample> {
    if n == 0 {
        return Err(domain("sample size must be at least 1"));
    }
    let trajectories = (0..n)
        .map(|j| simulate_trajectory(intensity, base.offset(j as u64)))
        .collect::<Result<Vec<_>>>()?;
    Sample::new(trajectories, intensity.horizon())
}

/// Cuts one trajectory on [0, nτ] into n trajectories on [0, τ].
pub fn slice_periodic(long: &Trajectory, long_horizon: f64, tau: f64) -> Result<Sample> {
    if !(tau > 0.0) {
        return Err(domain("period must be positive"));
    }
    let ratio = long_horizon / tau;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
        return Err(domain(format!(
            "horizon {long_horizon} is not an integer multiple of {tau}"
        )));
    }
    let n = n as usize;
    let mut pieces = vec![Vec::new(); n];
    for &t in &long.events {
        let j = ((t / tau).floor() as usize).min(n - 1);
        let local = (t - j as f64 * tau).clamp(0.0, tau);
        pieces[j].push(local);
    }
    let trajectories = pieces
        .into_iter()
        .map(|mut ev| {
            ev.dedup();
            Trajectory { events: ev }
        })
        .collect();
    Sample::new(trajectories, tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intensity::CatalogId;

    fn flat(level: f64, horizon: f64) -> IntensityModel {
        IntensityModel::with_params(CatalogId::Flat, &[("level", level), ("horizon", horizon)], None).unwrap()
    }

    #[test]
    fn zero_intensity_gives_empty_trajectory() {
        let m = flat(0.0, 1.0);
        let tr = simulate_trajectory(&ModelAt { model: &m, theta: 0.5 }, RngStream::new(1, 0)).unwrap();
        assert!(tr.is_empty());
    }

    #[test]
    fn sample_is_deterministic_and_matches_single_trajectory() {
        let m = IntensityModel::default_for(CatalogId::NullfiSine).unwrap();
        let f = ModelAt { model: &m, theta: 0.5 };
        let base = RngStream::new(99, 1000);
        let a = simulate_sample(&f, 3, base).unwrap();
        let b = simulate_sample(&f, 3, base).unwrap();
        assert_eq!(a, b);
        assert_eq!(simulate_sample_seq(&f, 3, base).unwrap(), a);
        let one = simulate_sample(&f, 1, base).unwrap();
        assert_eq!(one.trajectories()[0], simulate_trajectory(&f, base).unwrap());
        assert!(simulate_sample(&f, 0, base).is_err());
    }

    #[test]
    fn slicing_examples() {
        let long = Trajectory::new(vec![0.5, 1.5], 2.0).unwrap();
        let s = slice_periodic(&long, 2.0, 1.0).unwrap();
        assert_eq!(s.trajectories()[0].events(), &[0.5]);
        assert_eq!(s.trajectories()[1].events(), &[0.5]);
        let s = slice_periodic(&Trajectory::default(), 3.0, 1.0).unwrap();
        assert_eq!(s.n(), 3);
        assert!(s.trajectories().iter().all(Trajectory::is_empty));
        assert!(slice_periodic(&long, 2.5, 1.0).is_err());
    }

    #[test]
    fn csv_round_trip_keeps_bits() {
        let m = flat(3.0, 1.0);
        let s = simulate_sample(&ModelAt { model: &m, theta: 0.5 }, 4, RngStream::new(5, 0)).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = Sample::read_csv(buf.as_slice(), 1.0, Some(4)).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn trajectory_validation() {
        assert!(Trajectory::new(vec![0.2, 0.2], 1.0).is_err());
        assert!(Trajectory::new(vec![0.2, 1.2], 1.0).is_err());
    }
}
