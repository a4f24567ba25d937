use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Margins and scales shared by the priors. Lengths in meters, `tau_sat` in
/// pixels, windows in frames.
#[derive(Clone, Debug, PartialEq)]
pub struct Tolerances {
    pub rho_min: f64,
    pub alpha: f64,
    pub rho_eff: f64,
    pub tau_sat: f64,
    pub sigma_contact: f64,
    pub rho_depth: f64,
    pub rho_pose: f64,
    pub window_min: usize,
    pub window_max: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rho_min: 0.01,
            alpha: 0.5,
            rho_eff: 0.05,
            tau_sat: 32.0,
            sigma_contact: 0.05,
            rho_depth: 0.10,
            rho_pose: 0.03,
            window_min: 8,
            window_max: 32,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("rho_min", self.rho_min),
            ("alpha", self.alpha),
            ("rho_eff", self.rho_eff),
            ("tau_sat", self.tau_sat),
            ("sigma_contact", self.sigma_contact),
            ("rho_depth", self.rho_depth),
            ("rho_pose", self.rho_pose),
        ];
        if let Some((k, v)) = pos.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("{k} must be positive, got {v}")));
        }
        if self.window_min < 3 || self.window_min > self.window_max {
            return Err(Error::Config(format!(
                "window bounds must satisfy 3 <= window_min <= window_max, got {}..{}",
                self.window_min, self.window_max
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Constraint {
    Silh,
    Skel,
    Com,
    Eff,
    Dist,
    Cam,
}

impl Constraint {
    pub const ALL: [Constraint; 6] = [
        Constraint::Silh,
        Constraint::Skel,
        Constraint::Com,
        Constraint::Eff,
        Constraint::Dist,
        Constraint::Cam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Constraint::Silh => "silh",
            Constraint::Skel => "skel",
            Constraint::Com => "com",
            Constraint::Eff => "eff",
            Constraint::Dist => "dist",
            Constraint::Cam => "cam",
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Constraint {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().trim_start_matches("c_");
        Constraint::ALL
            .into_iter()
            .find(|c| c.name() == t)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown constraint {s:?}; expected one of silh, skel, com, eff, dist, cam"
                ))
            })
    }
}

/// Non-negative weight per constraint; all default to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorWeights {
    pub silh: f64,
    pub skel: f64,
    pub com: f64,
    pub eff: f64,
    pub dist: f64,
    pub cam: f64,
}

impl Default for PriorWeights {
    fn default() -> Self {
        PriorWeights {
            silh: 1.0,
            skel: 1.0,
            com: 1.0,
            eff: 1.0,
            dist: 1.0,
            cam: 1.0,
        }
    }
}

impl PriorWeights {
    pub fn zero() -> Self {
        PriorWeights {
            silh: 0.0,
            skel: 0.0,
            com: 0.0,
            eff: 0.0,
            dist: 0.0,
            cam: 0.0,
        }
    }

    pub fn only(c: Constraint) -> Self {
        let mut w = Self::zero();
        *w.get_mut(c) = 1.0;
        w
    }

    pub fn get(&self, c: Constraint) -> f64 {
        match c {
            Constraint::Silh => self.silh,
            Constraint::Skel => self.skel,
            Constraint::Com => self.com,
            Constraint::Eff => self.eff,
            Constraint::Dist => self.dist,
            Constraint::Cam => self.cam,
        }
    }

    pub fn get_mut(&mut self, c: Constraint) -> &mut f64 {
        match c {
            Constraint::Silh => &mut self.silh,
            Constraint::Skel => &mut self.skel,
            Constraint::Com => &mut self.com,
            Constraint::Eff => &mut self.eff,
            Constraint::Dist => &mut self.dist,
            Constraint::Cam => &mut self.cam,
        }
    }

    pub fn disable(&mut self, c: Constraint) {
        *self.get_mut(c) = 0.0;
    }

    pub fn is_all_zero(&self) -> bool {
        Constraint::ALL.iter().all(|&c| self.get(c) == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        for c in Constraint::ALL {
            let w = self.get(c);
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!(
                    "lambda_{c} must be finite and >= 0, got {w}"
                )));
            }
        }
        Ok(())
    }
}

/// Parse `key = value` lines into weights and tolerances, starting from the
/// defaults. Keys are `lambda_<constraint>` and the [`Tolerances`] field
/// names; anything else is rejected.
pub fn parse_prior_config(text: &str) -> Result<(PriorWeights, Tolerances)> {
    let mut w = PriorWeights::default();
    let mut t = Tolerances::default();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", ln + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        let num = || -> Result<f64> {
            v.parse::<f64>().map_err(|_| {
                Error::Config(format!("line {}: {k} needs a number, got {v:?}", ln + 1))
            })
        };
        let int = || -> Result<usize> {
            v.parse::<usize>().map_err(|_| {
                Error::Config(format!("line {}: {k} needs an integer, got {v:?}", ln + 1))
            })
        };
        match k {
            "rho_min" => t.rho_min = num()?,
            "alpha" => t.alpha = num()?,
            "rho_eff" => t.rho_eff = num()?,
            "tau_sat" => t.tau_sat = num()?,
            "sigma_contact" => t.sigma_contact = num()?,
            "rho_depth" => t.rho_depth = num()?,
            "rho_pose" => t.rho_pose = num()?,
            "window_min" => t.window_min = int()?,
            "window_max" => t.window_max = int()?,
            _ => match k.strip_prefix("lambda_").map(str::parse::<Constraint>) {
                Some(Ok(c)) => *w.get_mut(c) = num()?,
                _ => return Err(Error::Config(format!("line {}: unknown key {k:?}", ln + 1))),
            },
        }
    }
    t.validate()?;
    w.validate()?;
    Ok((w, t))
}

impl Tolerances {
    pub fn from_config(text: &str) -> Result<Self> {
        parse_prior_config(text).map(|(_, t)| t)
    }
}

impl PriorWeights {
    pub fn from_config(text: &str) -> Result<Self> {
        parse_prior_config(text).map(|(w, _)| w)
    }
}
