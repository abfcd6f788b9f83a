//! Problem-size dependent parameter schedules for sigma (ARG) and tau (GRG).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Problem size at which every calibrated schedule yields sigma = 4.
pub const CALIBRATION_N: f64 = 1000.0;
pub const CALIBRATION_SIGMA: f64 = 4.0;

/// How sigma grows with the problem size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SigmaSchedule {
    Const(f64),
    /// `sqrt(n) / ln n`, uncalibrated.
    SqrtNOverLnN,
    /// `c* ln^4 n`.
    CstarLn4N,
    /// `c* sqrt(n) / ln n`.
    CstarSqrtNOverLnN,
    /// `c* sqrt(n / ln n)`.
    CstarSqrtNOverLnNHalf,
    /// `c* sqrt(n)`.
    CstarSqrtN,
}

/// A schedule evaluated at one problem size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResolvedSigma {
    pub sigma: f64,
    /// Calibration constant, for the `cstar_*` schedules.
    pub cstar: Option<f64>,
}

impl SigmaSchedule {
    pub const NAMES: [&'static str; 5] = [
        "sqrt_n_over_ln_n",
        "cstar_ln4_n",
        "cstar_sqrt_n_over_ln_n",
        "cstar_sqrt_n_over_ln_n_half",
        "cstar_sqrt_n",
    ];

    fn shape(&self, n: f64) -> f64 {
        let ln = n.ln();
        match self {
            SigmaSchedule::Const(v) => *v,
            SigmaSchedule::SqrtNOverLnN | SigmaSchedule::CstarSqrtNOverLnN => n.sqrt() / ln,
            SigmaSchedule::CstarLn4N => ln.powi(4),
            SigmaSchedule::CstarSqrtNOverLnNHalf => (n / ln).sqrt(),
            SigmaSchedule::CstarSqrtN => n.sqrt(),
        }
    }

    pub fn is_calibrated(&self) -> bool {
        !matches!(self, SigmaSchedule::Const(_) | SigmaSchedule::SqrtNOverLnN)
    }

    /// `4 / f(1000)` for calibrated schedules.
    pub fn cstar(&self) -> Option<f64> {
        self.is_calibrated()
            .then(|| CALIBRATION_SIGMA / self.shape(CALIBRATION_N))
    }

    pub fn resolve(&self, n: usize) -> Result<ResolvedSigma> {
        if n < 3 {
            return Err(Error::param("n", "sigma schedules need n >= 3"));
        }
        let cstar = self.cstar();
        let sigma = cstar.unwrap_or(1.0) * self.shape(n as f64);
        if !(sigma.is_finite() && sigma >= 1.0) {
            return Err(Error::param(
                "sigma",
                format!("schedule {self} gives {sigma} < 1 at n = {n}"),
            ));
        }
        Ok(ResolvedSigma { sigma, cstar })
    }
}

impl fmt::Display for SigmaSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaSchedule::Const(v) => write!(f, "const:{v}"),
            SigmaSchedule::SqrtNOverLnN => f.write_str(Self::NAMES[0]),
            SigmaSchedule::CstarLn4N => f.write_str(Self::NAMES[1]),
            SigmaSchedule::CstarSqrtNOverLnN => f.write_str(Self::NAMES[2]),
            SigmaSchedule::CstarSqrtNOverLnNHalf => f.write_str(Self::NAMES[3]),
            SigmaSchedule::CstarSqrtN => f.write_str(Self::NAMES[4]),
        }
    }
}

impl FromStr for SigmaSchedule {
    type Err = Error;

    /// Accepts the schedule names, `const:<v>` or a bare number.
    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownName {
            kind: "sigma schedule",
            value: s.to_string(),
        };
        let constant = |v: &str| v.parse::<f64>().map(SigmaSchedule::Const).map_err(|_| unknown());
        match s {
            "sqrt_n_over_ln_n" => Ok(SigmaSchedule::SqrtNOverLnN),
            "cstar_ln4_n" => Ok(SigmaSchedule::CstarLn4N),
            "cstar_sqrt_n_over_ln_n" => Ok(SigmaSchedule::CstarSqrtNOverLnN),
            "cstar_sqrt_n_over_ln_n_half" => Ok(SigmaSchedule::CstarSqrtNOverLnNHalf),
            "cstar_sqrt_n" => Ok(SigmaSchedule::CstarSqrtN),
            _ => match s.strip_prefix("const:") {
                Some(v) => constant(v),
                None if s.starts_with(|c: char| c.is_ascii_digit() || c == '.') => constant(s),
                None => Err(unknown()),
            },
        }
    }
}

/// Learning period of GRG, possibly a multiple of `n ln n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TauSpec {
    Const(f64),
    /// `c * n * ln n`.
    NLnN(f64),
    Infinite,
}

impl TauSpec {
    pub fn resolve(&self, n: usize) -> f64 {
        match *self {
            TauSpec::Const(v) => v,
            TauSpec::NLnN(c) => c * n as f64 * (n as f64).ln(),
            TauSpec::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for TauSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TauSpec::Const(v) => write!(f, "{v}"),
            TauSpec::NLnN(c) => write!(f, "{c}nlnn"),
            TauSpec::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for TauSpec {
    type Err = Error;

    /// Accepts `inf`, a number, or `<c>nlnn` (also `<c>*n*ln(n)`).
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownName {
            kind: "tau",
            value: s.to_string(),
        };
        let compact: String = s.chars().filter(|c| !c.is_whitespace() && *c != '*').collect();
        let compact = compact.replace("ln(n)", "lnn");
        if compact == "inf" || compact == "infinity" {
            return Ok(TauSpec::Infinite);
        }
        let tau = if let Some(coef) = compact.strip_suffix("nlnn") {
            let c = if coef.is_empty() {
                1.0
            } else {
                coef.parse().map_err(|_| bad())?
            };
            TauSpec::NLnN(c)
        } else {
            TauSpec::Const(compact.parse().map_err(|_| bad())?)
        };
        match tau {
            TauSpec::Const(v) | TauSpec::NLnN(v) if !(v.is_finite() && v > 0.0) => Err(bad()),
            _ => Ok(tau),
        }
    }
}
