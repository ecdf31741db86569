//! Bias (weight) functions `w(x, y)` and the censoring composite weight.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sample::Sample;

/// Right-continuous non-increasing step function with value 1 before the
/// first jump.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSurvival {
    jump_times: Vec<f64>,
    values: Vec<f64>,
}

impl StepSurvival {
    pub fn new(jump_times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if jump_times.len() != values.len() {
            return Err(Error::LengthMismatch { expected: jump_times.len(), got: values.len() });
        }
        if jump_times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("jump times must be strictly increasing".into()));
        }
        let mut prev = 1.0;
        for &v in &values {
            if !(0.0..=prev).contains(&v) {
                return Err(Error::InvalidParameter("survival values must be non-increasing in [0, 1]".into()));
            }
            prev = v;
        }
        Ok(Self { jump_times, values })
    }

    /// `S ≡ 1`.
    pub fn unit() -> Self {
        Self { jump_times: Vec::new(), values: Vec::new() }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&s| s <= t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Product-limit estimate of a survival function. `events[i]` is `true`
/// when duration `i` ended in the event of interest.
pub fn kaplan_meier(durations: &[f64], events: &[bool]) -> Result<StepSurvival> {
    if durations.is_empty() {
        return Err(Error::EmptyInput);
    }
    if durations.len() != events.len() {
        return Err(Error::LengthMismatch { expected: durations.len(), got: events.len() });
    }
    if let Some(d) = durations.iter().find(|d| !d.is_finite() || **d < 0.0) {
        return Err(Error::InvalidParameter(format!("duration {d} is not a finite non-negative number")));
    }
    let mut order: Vec<usize> = (0..durations.len()).collect();
    order.sort_by(|&a, &b| durations[a].total_cmp(&durations[b]));

    let mut at_risk = durations.len();
    let mut s = 1.0;
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut k = 0;
    while k < order.len() {
        let t = durations[order[k]];
        let mut d = 0;
        let mut leaving = 0;
        while k < order.len() && durations[order[k]] == t {
            if events[order[k]] {
                d += 1;
            }
            leaving += 1;
            k += 1;
        }
        if d > 0 {
            s *= (at_risk - d) as f64 / at_risk as f64;
            times.push(t);
            values.push(s);
        }
        at_risk -= leaving;
    }
    Ok(StepSurvival { jump_times: times, values })
}

/// Weights tabulated on a rectangular grid, evaluated at the nearest grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedGrid {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Row-major over `xs × ys`.
    values: Vec<f64>,
}

impl TabulatedGrid {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != xs.len() * ys.len() || xs.is_empty() || ys.is_empty() {
            return Err(Error::InvalidParameter("grid values must cover every (x, y) node".into()));
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) || ys.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("grid axes must be strictly increasing".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidParameter(format!("grid weight {v} is not a finite non-negative number")));
        }
        Ok(Self { xs, ys, values })
    }

    /// Reads CSV with header `x,y,w` (case-insensitive). Line numbers in
    /// errors count the header as line 1.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?.clone();
        let col = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::Parse { line: 1, message: format!("missing column `{name}`") })
        };
        let (cx, cy, cw) = (col("x")?, col("y")?, col("w")?);
        let mut triples = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let line = k + 2;
            let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
            let field = |c: usize| -> Result<f64> {
                let raw = rec.get(c).unwrap_or("");
                raw.parse::<f64>()
                    .map_err(|_| Error::Parse { line, message: format!("cannot parse `{raw}` as a number") })
            };
            let t = (field(cx)?, field(cy)?, field(cw)?);
            if !t.0.is_finite() || !t.1.is_finite() || !t.2.is_finite() || t.2 < 0.0 {
                return Err(Error::Parse { line, message: "grid entries must be finite with w >= 0".into() });
            }
            triples.push((t, line));
        }
        if triples.is_empty() {
            return Err(Error::EmptyInput);
        }
        let axis = |f: fn(&(f64, f64, f64)) -> f64| {
            let mut v: Vec<f64> = triples.iter().map(|(t, _)| f(t)).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let xs = axis(|t| t.0);
        let ys = axis(|t| t.1);
        let mut values = vec![f64::NAN; xs.len() * ys.len()];
        for &((x, y, w), line) in &triples {
            let i = xs.partition_point(|&v| v < x);
            let j = ys.partition_point(|&v| v < y);
            let slot = &mut values[i * ys.len() + j];
            if !slot.is_nan() {
                return Err(Error::Parse { line, message: format!("duplicate grid node ({x}, {y})") });
            }
            *slot = w;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Parse {
                line: triples.len() + 1,
                message: format!("grid is not rectangular: expected {} x {} nodes", xs.len(), ys.len()),
            });
        }
        Self::new(xs, ys, values)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::from_reader(f)
    }

    fn nearest(axis: &[f64], v: f64) -> usize {
        let k = axis.partition_point(|&a| a < v);
        if k == 0 {
            0
        } else if k == axis.len() {
            axis.len() - 1
        } else if v - axis[k - 1] <= axis[k] - v {
            k - 1
        } else {
            k
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let i = Self::nearest(&self.xs, x);
        let j = Self::nearest(&self.ys, y);
        self.values[i * self.ys.len() + j]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BiasFunction {
    /// `1{x < y}`.
    Truncation,
    /// `w ≡ c`.
    Constant(f64),
    /// `x + y`.
    SumXY,
    /// Unnormalised standard bivariate normal density with correlation `rho`.
    GaussianDensityProduct {
        rho: f64,
    },
    /// `1{|x − y| < delta}`.
    StripIndicator {
        delta: f64,
    },
    /// `min(horizon − x − y, cap) · 1{x + y < horizon}`.
    HujiStyle {
        cap: f64,
        horizon: f64,
    },
    /// `1{x < y} · S(y − x)`.
    CensoringComposite(Arc<StepSurvival>),
    TabulatedGrid(Arc<TabulatedGrid>),
}

impl BiasFunction {
    pub fn huji() -> Self {
        BiasFunction::HujiStyle { cap: 18.0, horizon: 65.0 }
    }

    pub fn gaussian_density_product(rho: f64) -> Result<Self> {
        if !(rho.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!("correlation {rho} must lie in (-1, 1)")));
        }
        Ok(BiasFunction::GaussianDensityProduct { rho })
    }

    pub fn evaluate(&self, x: f64, y: f64) -> Result<f64> {
        let v = self.raw(x, y);
        if v < 0.0 || v.is_nan() {
            return Err(Error::NegativeWeight { x, y, value: v });
        }
        Ok(v)
    }

    fn raw(&self, x: f64, y: f64) -> f64 {
        match self {
            BiasFunction::Truncation => indicator(x < y),
            BiasFunction::Constant(c) => *c,
            BiasFunction::SumXY => x + y,
            BiasFunction::GaussianDensityProduct { rho } => {
                let q = (x * x - 2.0 * rho * x * y + y * y) / (1.0 - rho * rho);
                (-0.5 * q).exp()
            }
            BiasFunction::StripIndicator { delta } => indicator((x - y).abs() < *delta),
            BiasFunction::HujiStyle { cap, horizon } => {
                if x + y < *horizon {
                    (horizon - x - y).min(*cap)
                } else {
                    0.0
                }
            }
            BiasFunction::CensoringComposite(s) => {
                if x < y {
                    s.eval(y - x)
                } else {
                    0.0
                }
            }
            BiasFunction::TabulatedGrid(g) => g.eval(x, y),
        }
    }

    /// `(a_x, a_y, b)` with `w(x, y) = a_x·x + a_y·y + b`, for linear kinds.
    pub fn linear_coefficients(&self) -> Option<(f64, f64, f64)> {
        match self {
            BiasFunction::SumXY => Some((1.0, 1.0, 0.0)),
            BiasFunction::Constant(c) => Some((0.0, 0.0, *c)),
            _ => None,
        }
    }

    /// Supremum of `w` over the plane, when finite and known in closed form.
    pub fn upper_bound(&self) -> Option<f64> {
        match self {
            BiasFunction::Truncation | BiasFunction::StripIndicator { .. } => Some(1.0),
            BiasFunction::Constant(c) => Some(*c),
            BiasFunction::GaussianDensityProduct { .. } => Some(1.0),
            BiasFunction::HujiStyle { cap, .. } => Some(*cap),
            BiasFunction::CensoringComposite(_) => Some(1.0),
            BiasFunction::TabulatedGrid(g) => Some(g.values.iter().cloned().fold(0.0, f64::max)),
            BiasFunction::SumXY => None,
        }
    }

    pub fn is_truncation(&self) -> bool {
        matches!(self, BiasFunction::Truncation)
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

impl fmt::Display for BiasFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BiasFunction::Truncation => write!(f, "truncation"),
            BiasFunction::Constant(c) => write!(f, "const:{c}"),
            BiasFunction::SumXY => write!(f, "sum"),
            BiasFunction::GaussianDensityProduct { rho } => write!(f, "gauss-prod:{rho}"),
            BiasFunction::StripIndicator { delta } => write!(f, "strip:{delta}"),
            BiasFunction::HujiStyle { cap, horizon } => write!(f, "huji:{cap}:{horizon}"),
            BiasFunction::CensoringComposite(_) => write!(f, "censoring"),
            BiasFunction::TabulatedGrid(_) => write!(f, "table"),
        }
    }
}

/// A bias as named on the command line or from Python. `censoring` is a
/// request to estimate the composite weight from the data, so it cannot be
/// resolved to a [`BiasFunction`] without a sample.
#[derive(Debug, Clone, PartialEq)]
pub enum BiasSpec {
    Fixed(BiasFunction),
    Censoring,
}

impl BiasSpec {
    /// Resolves against a sample. For `censoring` this returns the composite
    /// weight and the uncensored subsample.
    pub fn resolve(&self, sample: &Sample) -> Result<(BiasFunction, Sample)> {
        match self {
            BiasSpec::Fixed(b) => Ok((b.clone(), sample.clone())),
            BiasSpec::Censoring => censoring_weight(sample),
        }
    }
}

impl FromStr for BiasSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (s, None),
        };
        let num = |r: &str| -> Result<f64> {
            r.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("bad numeric parameter `{r}` in bias `{s}`")))
        };
        fn need<'a>(r: Option<&'a str>, head: &str) -> Result<&'a str> {
            r.ok_or_else(|| Error::InvalidParameter(format!("bias `{head}` needs a parameter")))
        }
        let b = match head.to_ascii_lowercase().as_str() {
            "truncation" => BiasFunction::Truncation,
            "sum" => BiasFunction::SumXY,
            "const" => BiasFunction::Constant(rest.map(num).transpose()?.unwrap_or(1.0)),
            "gauss-prod" => BiasFunction::gaussian_density_product(num(need(rest, head)?)?)?,
            "strip" => {
                let delta = num(need(rest, head)?)?;
                if !(delta > 0.0) {
                    return Err(Error::InvalidParameter("strip width must be positive".into()));
                }
                BiasFunction::StripIndicator { delta }
            }
            "huji" => match rest {
                None => BiasFunction::huji(),
                Some(r) => {
                    let (c, h) = r
                        .split_once(':')
                        .ok_or_else(|| Error::InvalidParameter("huji takes `huji` or `huji:cap:horizon`".into()))?;
                    BiasFunction::HujiStyle { cap: num(c)?, horizon: num(h)? }
                }
            },
            "table" => BiasFunction::TabulatedGrid(Arc::new(TabulatedGrid::from_path(need(rest, head)?)?)),
            "censoring" => return Ok(BiasSpec::Censoring),
            _ => return Err(Error::InvalidParameter(format!("unknown bias `{s}`"))),
        };
        if let BiasFunction::Constant(c) = b {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::InvalidParameter("constant weight must be positive".into()));
            }
        }
        Ok(BiasSpec::Fixed(b))
    }
}

/// Estimates the censoring survival function from a censored, left-truncated
/// sample and returns the composite weight together with the uncensored
/// subsample.
pub fn censoring_weight(sample: &Sample) -> Result<(BiasFunction, Sample)> {
    if !sample.is_censored() {
        return Err(Error::InvalidSample("censoring weight needs a sample with event indicators".into()));
    }
    let obs = sample.observations();
    if let Some(row) = obs.iter().position(|o| o.x >= o.y) {
        return Err(Error::NonTruncatedInput { row });
    }
    let durations: Vec<f64> = obs.iter().map(|o| o.y - o.x).collect();
    let censor_events: Vec<bool> = obs.iter().map(|o| o.delta == Some(false)).collect();
    let uncensored: Vec<_> = obs.iter().filter(|o| o.delta == Some(true)).collect();
    if uncensored.len() < 2 {
        return Err(Error::TooFewUncensored { found: uncensored.len() });
    }
    let surv = kaplan_meier(&durations, &censor_events)?;
    let xs: Vec<f64> = uncensored.iter().map(|o| o.x).collect();
    let ys: Vec<f64> = uncensored.iter().map(|o| o.y).collect();
    Ok((BiasFunction::CensoringComposite(Arc::new(surv)), Sample::new(&xs, &ys)?))
}
