//! Strain parameters, offspring numbers and the population state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Biological constants of one *Wolbachia* strain together with the
/// wild-population constants it is paired with.
///
/// Rates are per day, `sigma` is per individual, `nu` and `eta` are
/// probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrainParams {
    pub name: String,
    /// Fecundity of wild insects.
    pub rho_n: f64,
    /// Fecundity of infected insects.
    pub rho_w: f64,
    /// Mortality of wild insects.
    pub delta_n: f64,
    /// Mortality of infected insects.
    pub delta_w: f64,
    /// Intraspecific competition coefficient.
    pub sigma: f64,
    /// Maternal transmission probability.
    pub nu: f64,
    /// Cytoplasmic incompatibility probability.
    pub eta: f64,
    /// Infection loss rate.
    pub omega: f64,
}

/// Names accepted by [`StrainParams::preset`].
pub const PRESET_NAMES: [&str; 2] = ["wmel", "wmelpop"];

const RHO_N: f64 = 4.55;
const DELTA_N: f64 = 1.0 / 28.0;
const SIGMA: f64 = 0.1 / 140.0;

impl StrainParams {
    /// wMel strain: moderate fitness cost, high maternal transmission.
    pub fn wmel() -> Self {
        Self {
            name: "wmel".into(),
            rho_n: RHO_N,
            rho_w: 0.9 * RHO_N,
            delta_n: DELTA_N,
            delta_w: DELTA_N / 0.9,
            sigma: SIGMA,
            nu: 0.95,
            eta: 0.98,
            omega: 0.001,
        }
    }

    /// wMelPop strain: halved fecundity and doubled mortality.
    pub fn wmelpop() -> Self {
        Self {
            name: "wmelpop".into(),
            rho_n: RHO_N,
            rho_w: 0.5 * RHO_N,
            delta_n: DELTA_N,
            delta_w: DELTA_N / 0.5,
            sigma: SIGMA,
            nu: 0.99,
            eta: 0.95,
            omega: 0.00015,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "wmel" => Ok(Self::wmel()),
            "wmelpop" => Ok(Self::wmelpop()),
            other => Err(Error::UnknownStrain(other.to_string())),
        }
    }

    /// Overrides one field by name. `value` is a decimal (`"0.0357"`) or a
    /// ratio of decimals (`"1/28"`, `"0.1/140"`).
    pub fn set_field(&mut self, field: &str, value: &str) -> Result<()> {
        if field == "name" {
            self.name = value.to_string();
            return Ok(());
        }
        let v = parse_number(value)?;
        let slot = match field {
            "rho_n" => &mut self.rho_n,
            "rho_w" => &mut self.rho_w,
            "delta_n" => &mut self.delta_n,
            "delta_w" => &mut self.delta_w,
            "sigma" => &mut self.sigma,
            "nu" => &mut self.nu,
            "eta" => &mut self.eta,
            "omega" => &mut self.omega,
            _ => return Err(Error::Parse(format!("unknown parameter `{field}`"))),
        };
        *slot = v;
        Ok(())
    }

    /// Checks positivity, probability ranges and the fitness-cost ordering
    /// `rho_n > rho_w`, `delta_n < delta_w`.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho_n", self.rho_n),
            ("rho_w", self.rho_w),
            ("delta_n", self.delta_n),
            ("delta_w", self.delta_w),
            ("sigma", self.sigma),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter { field, reason: format!("must be > 0, got {v}") });
            }
        }
        for (field, v) in [("nu", self.nu), ("eta", self.eta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter { field, reason: format!("must lie in [0, 1], got {v}") });
            }
        }
        if !(self.omega.is_finite() && self.omega >= 0.0) {
            return Err(Error::InvalidParameter { field: "omega", reason: format!("must be >= 0, got {}", self.omega) });
        }
        if self.rho_n <= self.rho_w {
            return Err(Error::InvalidParameter { field: "rho_w", reason: "infected fecundity must be below wild fecundity".into() });
        }
        if self.delta_n >= self.delta_w {
            return Err(Error::InvalidParameter { field: "delta_w", reason: "infected mortality must exceed wild mortality".into() });
        }
        Ok(())
    }

    pub fn offspring_numbers(&self) -> OffspringNumbers {
        OffspringNumbers::new(self)
    }

    /// Carrying level of the wild-only equilibrium, `ln(Q_x) / sigma`.
    pub fn x_sharp(&self) -> f64 {
        self.offspring_numbers().q_x.ln() / self.sigma
    }

    /// Total population `x + y` at every coexistence equilibrium, `ln(Q_y) / sigma`.
    pub fn coexistence_total(&self) -> f64 {
        self.offspring_numbers().q_y.ln() / self.sigma
    }
}

fn parse_number(s: &str) -> Result<f64> {
    let parse = |t: &str| -> Result<f64> {
        t.trim().parse::<f64>().map_err(|_| Error::Parse(format!("not a number: `{s}`")))
    };
    match s.split_once('/') {
        Some((num, den)) => {
            let d = parse(den)?;
            if d == 0.0 {
                return Err(Error::Parse(format!("zero denominator in `{s}`")));
            }
            Ok(parse(num)? / d)
        }
        None => parse(s),
    }
}

/// Basic offspring numbers of the two populations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffspringNumbers {
    pub q_x: f64,
    pub q_y: f64,
    pub q_yx: f64,
    pub q_c: f64,
    /// `Q_x > Q_y > 1`.
    pub viable: bool,
}

impl OffspringNumbers {
    pub fn new(p: &StrainParams) -> Self {
        let q_x = p.rho_n / p.delta_n;
        let q_y = p.nu * p.rho_w / (p.omega + p.delta_w);
        let q_yx = ((1.0 - p.nu) * p.rho_w + p.omega * q_y) / p.delta_n;
        let q_c = (q_yx + q_y + p.eta * q_x) / q_x;
        Self { q_x, q_y, q_yx, q_c, viable: q_x > q_y && q_y > 1.0 }
    }

    /// Left-hand side of the second coexistence inequality,
    /// `Q_y - Q_yx - 2 sqrt(Q_yx (Q_x - Q_y))`.
    pub fn coexistence_margin(&self) -> f64 {
        self.q_y - self.q_yx - 2.0 * (self.q_yx * (self.q_x - self.q_y)).sqrt()
    }
}

/// Wild (`x`) and infected (`y`) population sizes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub y: f64,
}

impl State {
    pub const ORIGIN: State = State { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn total(&self) -> f64 {
        self.x + self.y
    }

    pub fn check_nonnegative(&self) -> Result<()> {
        if self.x >= 0.0 && self.y >= 0.0 {
            Ok(())
        } else {
            Err(Error::NegativeState { x: self.x, y: self.y })
        }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn from_array(a: [f64; 2]) -> Self {
        Self { x: a[0], y: a[1] }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn wmel_offspring_numbers() {
        let q = StrainParams::wmel().offspring_numbers();
        // 4.55 / (1/28)
        assert_relative_eq!(q.q_x, 127.4, max_relative = 1e-12);
        // 0.95 * 4.095 / (0.001 + 0.0396825...)
        let expected_qy = 0.95 * 4.095 / (0.001 + 1.0 / 28.0 / 0.9);
        assert_relative_eq!(q.q_y, expected_qy, max_relative = 1e-12);
        assert!((q.q_y - 95.6).abs() < 0.1);
        assert!(q.viable);
    }

    #[test]
    fn perfect_transmission_without_loss_has_no_cross_offspring() {
        let mut p = StrainParams::wmel();
        p.nu = 1.0;
        p.omega = 0.0;
        assert_eq!(p.offspring_numbers().q_yx, 0.0);
    }

    #[test]
    fn ratio_overrides() {
        let mut p = StrainParams::wmel();
        p.set_field("delta_n", "1/28").unwrap();
        assert_eq!(p.delta_n, 1.0 / 28.0);
        p.set_field("sigma", "0.1/140").unwrap();
        assert_eq!(p.sigma, 0.1 / 140.0);
        p.set_field("eta", "0.99").unwrap();
        assert_eq!(p.eta, 0.99);
        assert!(p.set_field("eta", "abc").is_err());
        assert!(p.set_field("kappa", "1").is_err());
        assert!(p.set_field("sigma", "1/0").is_err());
    }

    #[test]
    fn validation_rejects_bad_orderings() {
        assert!(StrainParams::wmel().validate().is_ok());
        assert!(StrainParams::wmelpop().validate().is_ok());
        let mut p = StrainParams::wmel();
        p.rho_w = 5.0;
        assert!(p.validate().is_err());
        let mut p = StrainParams::wmel();
        p.nu = 1.2;
        assert!(p.validate().is_err());
        let mut p = StrainParams::wmel();
        p.omega = -1e-3;
        assert!(p.validate().is_err());
    }

    #[test]
    fn unknown_preset() {
        assert_eq!(StrainParams::preset("wAlbB"), Err(Error::UnknownStrain("walbb".into())));
        assert_eq!(StrainParams::preset("wMel").unwrap().name, "wmel");
    }
}
