//! Timed integer releases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which construction produced a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleTag {
    Daily,
    Aggregate,
    Excess,
    Ga,
    Manual,
}

impl RuleTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            RuleTag::Daily => "daily",
            RuleTag::Aggregate => "aggregate",
            RuleTag::Excess => "excess",
            RuleTag::Ga => "ga",
            RuleTag::Manual => "manual",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "daily" => Ok(RuleTag::Daily),
            "aggregate" => Ok(RuleTag::Aggregate),
            "excess" => Ok(RuleTag::Excess),
            "ga" => Ok(RuleTag::Ga),
            "manual" => Ok(RuleTag::Manual),
            other => Err(Error::Parse(format!("unknown rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Release {
    /// Release instant (days).
    pub time: f64,
    /// Number of infected insects released.
    pub size: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpulseSchedule {
    pub entries: Vec<Release>,
    /// Days between releases (1 for daily plans).
    pub period_m: u32,
    pub rule: RuleTag,
}

impl ImpulseSchedule {
    pub fn new(entries: Vec<Release>, period_m: u32, rule: RuleTag) -> Result<Self> {
        let s = Self { entries, period_m, rule };
        s.validate()?;
        Ok(s)
    }

    pub fn empty() -> Self {
        Self { entries: Vec::new(), period_m: 1, rule: RuleTag::Manual }
    }

    /// Releases at `t_i = 1 + (i - 1) m` with the given sizes.
    pub fn periodic(sizes: &[u64], period_m: u32, rule: RuleTag) -> Self {
        let entries = sizes
            .iter()
            .enumerate()
            .map(|(i, &size)| Release { time: 1.0 + (i as f64) * period_m as f64, size })
            .collect();
        Self { entries, period_m, rule }
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.entries.windows(2) {
            if !(w[1].time > w[0].time) {
                return Err(Error::InvalidSchedule(format!(
                    "release times must be strictly increasing ({} then {})",
                    w[0].time, w[1].time
                )));
            }
        }
        if let Some(r) = self.entries.iter().find(|r| !(r.time.is_finite() && r.time >= 0.0)) {
            return Err(Error::InvalidSchedule(format!("release time {} is negative", r.time)));
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|r| r.size).sum()
    }

    /// Number of releases with a nonzero size.
    pub fn effective_releases(&self) -> usize {
        self.entries.iter().filter(|r| r.size > 0).count()
    }

    /// Keeps releases at or before `t` and drops zero-sized entries.
    pub fn truncated(&self, t: f64) -> Self {
        Self {
            entries: self.entries.iter().copied().filter(|r| r.time <= t && r.size > 0).collect(),
            period_m: self.period_m,
            rule: self.rule,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_times() {
        let s = ImpulseSchedule::periodic(&[5, 6, 7], 7, RuleTag::Aggregate);
        let t: Vec<f64> = s.entries.iter().map(|r| r.time).collect();
        assert_eq!(t, vec![1.0, 8.0, 15.0]);
        assert_eq!(s.total(), 18);
    }

    #[test]
    fn rejects_unordered() {
        let e = vec![Release { time: 2.0, size: 1 }, Release { time: 2.0, size: 1 }];
        assert!(ImpulseSchedule::new(e, 1, RuleTag::Manual).is_err());
    }

    #[test]
    fn truncation() {
        let s = ImpulseSchedule::periodic(&[5, 0, 7, 9], 1, RuleTag::Daily);
        let t = s.truncated(3.0);
        assert_eq!(t.entries.len(), 2);
        assert_eq!(t.total(), 12);
    }
}
