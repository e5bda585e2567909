//! Grönwall and Pachpatte comparison envelopes and series checks.
//!
//! Every implicit constant of the inequalities is an explicit multiplier
//! in [`BoundForm`], so a verdict is quantitative.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Rate k(t) ≥ 0 of a linear Grönwall inequality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Rate {
    Constant {
        value: f64,
    },
    /// k(t) = coefficient·(t − origin)^exponent for t > origin; integrable when exponent > −1.
    Power {
        coefficient: f64,
        exponent: f64,
        origin: f64,
    },
    /// Piecewise-linear interpolation of samples, e.g. a measured C(t) series.
    Samples {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

impl Rate {
    fn validate(&self, t0: f64, t1: f64, errs: &mut Vec<String>) {
        match self {
            Rate::Constant { value } => {
                if !(*value >= 0.0 && value.is_finite()) {
                    errs.push(format!("rate.value = {value}: must be finite and ≥ 0"));
                }
            }
            Rate::Power { coefficient, exponent, origin } => {
                if !(*coefficient >= 0.0 && coefficient.is_finite()) {
                    errs.push(format!("rate.coefficient = {coefficient}: must be finite and ≥ 0"));
                }
                if !exponent.is_finite() {
                    errs.push(format!("rate.exponent = {exponent}: must be finite"));
                }
                if !(*origin <= t0) {
                    errs.push(format!("rate.origin = {origin}: must not exceed t0 = {t0}"));
                }
            }
            Rate::Samples { times, values } => {
                if times.len() != values.len() || times.len() < 2 {
                    errs.push("rate.samples: need at least two (time, value) pairs of equal length".into());
                } else {
                    if times.windows(2).any(|w| !(w[1] > w[0])) {
                        errs.push("rate.times: must be strictly increasing".into());
                    }
                    if values.iter().any(|v| !(*v >= 0.0)) {
                        errs.push("rate.values: must be ≥ 0".into());
                    }
                    if !(times[0] <= t0 && times[times.len() - 1] >= t1) {
                        errs.push(format!(
                            "rate.times: [{}, {}] must cover [{t0}, {t1}]",
                            times[0],
                            times[times.len() - 1]
                        ));
                    }
                }
            }
        }
    }

    /// ∫_a^b k(t) dt, exact for every variant.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        let v = match self {
            Rate::Constant { value } => value * (b - a),
            Rate::Power { coefficient, exponent, origin } => {
                let (u, w) = (a - origin, b - origin);
                if *coefficient == 0.0 {
                    0.0
                } else if (exponent + 1.0).abs() < 1e-14 {
                    coefficient * (w / u).ln()
                } else {
                    let p = exponent + 1.0;
                    coefficient * (w.powf(p) - u.powf(p)) / p
                }
            }
            Rate::Samples { times, values } => {
                let at = |t: f64| linear(times, values, t);
                let mut knots = vec![a];
                knots.extend(times.iter().copied().filter(|&t| t > a && t < b));
                knots.push(b);
                knots.windows(2).map(|w| 0.5 * (at(w[0]) + at(w[1])) * (w[1] - w[0])).sum()
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(format!("∫k over [{a}, {b}] is not finite")))
        }
    }
}

fn linear(times: &[f64], values: &[f64], t: f64) -> f64 {
    let i = times.partition_point(|&x| x <= t).clamp(1, times.len() - 1);
    let (t0, t1) = (times[i - 1], times[i]);
    let r = (t - t0) / (t1 - t0);
    values[i - 1] + r * (values[i] - values[i - 1])
}

/// Which inequality is being bounded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundForm {
    /// u(t) ≤ c + ∫_{t₀}^t k u.
    LinearGronwall { c: f64, rate: Rate },
    /// u(t) ≤ c + single·∫_{t₀}^t u² + double·∫_{t₀}^t∫_{t₀}^{s} u².
    Pachpatte {
        c: f64,
        #[serde(default = "one")]
        single: f64,
        #[serde(default = "one")]
        double: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// A bound on [t0, t1] sampled every dt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSpec {
    pub form: BoundForm,
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
}

impl BoundSpec {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.t0.is_finite() && self.t1.is_finite() && self.t1 > self.t0) {
            errs.push(format!("interval [{}, {}]: need finite t0 < t1", self.t0, self.t1));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            errs.push(format!("dt = {}: must be positive", self.dt));
        }
        match &self.form {
            BoundForm::LinearGronwall { c, rate } => {
                if !(*c >= 0.0 && c.is_finite()) {
                    errs.push(format!("c = {c}: must be finite and ≥ 0"));
                }
                rate.validate(self.t0, self.t1, &mut errs);
            }
            BoundForm::Pachpatte { c, single, double } => {
                for (name, v) in [("c", c), ("single", single), ("double", double)] {
                    if !(*v >= 0.0 && v.is_finite()) {
                        errs.push(format!("{name} = {v}: must be finite and ≥ 0"));
                    }
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// t0, t0 + dt, ..., ending exactly at t1.
    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.t1 - self.t0) / self.dt - 1e-9).ceil().max(1.0) as usize;
        (0..=n).map(|i| if i == n { self.t1 } else { self.t0 + i as f64 * self.dt }).collect()
    }

    pub fn envelope(&self) -> Result<Envelope> {
        match &self.form {
            BoundForm::LinearGronwall { .. } => gronwall_envelope(self),
            BoundForm::Pachpatte { .. } => pachpatte_envelope(self),
        }
    }
}

/// Bounding function b on a time grid; +∞ from the blow-up time on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub blowup: Option<f64>,
}

impl Envelope {
    /// Linear interpolation in t; errors outside the grid.
    pub fn at(&self, t: f64) -> Result<f64> {
        let (a, b) = (self.times[0], self.times[self.times.len() - 1]);
        let slack = 1e-12 * (b - a).abs().max(1.0);
        if !(t >= a - slack && t <= b + slack) {
            return Err(Error::GridMismatch(format!("t = {t} is outside the envelope grid [{a}, {b}]")));
        }
        if let Some(tb) = self.blowup {
            if t >= tb {
                return Ok(f64::INFINITY);
            }
        }
        let t = t.clamp(a, b);
        let i = self.times.partition_point(|&x| x <= t).clamp(1, self.times.len() - 1);
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        if v1.is_infinite() {
            return Ok(if t == t0 { v0 } else { f64::INFINITY });
        }
        Ok(v0 + (t - t0) / (t1 - t0) * (v1 - v0))
    }
}

/// b(t) = c·exp(∫_{t₀}^t k), the solution of b′ = kb, b(t₀) = c.
pub fn gronwall_envelope(spec: &BoundSpec) -> Result<Envelope> {
    spec.validate()?;
    let BoundForm::LinearGronwall { c, rate } = &spec.form else {
        return Err(Error::Config(vec!["gronwall_envelope needs a linear_gronwall form".into()]));
    };
    let times = spec.grid();
    let mut acc = 0.0;
    let mut values = Vec::with_capacity(times.len());
    values.push(*c);
    for w in times.windows(2) {
        acc += rate.integral(w[0], w[1])?;
        values.push(c * acc.exp());
    }
    Ok(Envelope { times, values, blowup: None })
}

/// Solution of b = c + s∫b² + d∫∫b² through the system b′ = s·b² + d·B, B′ = b².
///
/// RK4 with internal steps min(dt, dt/(1 + |b′|·dt/b)) so steps shrink as the
/// solution steepens; blow-up is reported once b exceeds 1e12.
pub fn pachpatte_envelope(spec: &BoundSpec) -> Result<Envelope> {
    spec.validate()?;
    let BoundForm::Pachpatte { c, single, double } = spec.form else {
        return Err(Error::Config(vec!["pachpatte_envelope needs a pachpatte form".into()]));
    };
    const CEILING: f64 = 1e12;
    let f = |y: [f64; 2]| [single * y[0] * y[0] + double * y[1], y[0] * y[0]];
    let times = spec.grid();
    let mut values = Vec::with_capacity(times.len());
    values.push(c);
    let mut y = [c, 0.0];
    let mut t = spec.t0;
    let mut blowup = None;
    for &target in &times[1..] {
        while blowup.is_none() && t < target {
            let d = f(y);
            let steep = if y[0] > 0.0 { d[0] / y[0] } else { 0.0 };
            let h = (spec.dt / (1.0 + 1e2 * steep * spec.dt)).min(target - t);
            let k1 = d;
            let k2 = f([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
            let k3 = f([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
            let k4 = f([y[0] + h * k3[0], y[1] + h * k3[1]]);
            for i in 0..2 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            t = if t + h >= target { target } else { t + h };
            if !(y[0] < CEILING) {
                // the remaining time to blow-up of b′ ≈ s·b² is 1/(s·b)
                let rest = if single > 0.0 && y[0].is_finite() { 1.0 / (single * y[0]) } else { 0.0 };
                blowup = Some(t + rest);
            }
        }
        values.push(if blowup.is_some() { f64::INFINITY } else { y[0] });
    }
    Ok(Envelope { times, values, blowup })
}

/// Outcome of comparing a series with an envelope.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    /// Every sample is within the band; `ratio` is the largest value/envelope.
    Within { ratio: f64 },
    /// First sample above the band, with margin = value/envelope there.
    Violated { t: f64, margin: f64 },
}

/// Pointwise check u(t_i) ≤ b(t_i)·(1 + rtol).
pub fn check_series(times: &[f64], values: &[f64], envelope: &Envelope, rtol: f64) -> Result<Verdict> {
    if times.len() != values.len() {
        return Err(Error::GridMismatch(format!("{} times for {} values", times.len(), values.len())));
    }
    let mut ratio = 0.0f64;
    for (&t, &u) in times.iter().zip(values) {
        let b = envelope.at(t)?;
        if !u.is_finite() {
            return Err(Error::NonFinite(format!("series value at t = {t}")));
        }
        let r = if u <= 0.0 {
            0.0
        } else if b > 0.0 {
            u / b
        } else {
            f64::INFINITY
        };
        if r > 1.0 + rtol {
            return Ok(Verdict::Violated { t, margin: r });
        }
        ratio = ratio.max(r);
    }
    Ok(Verdict::Within { ratio })
}
