//! Published reference values used by the reproduction reports.
//!
//! These are read-only constants; comparisons never modify them.

/// Saddle and stable coexistence equilibria `(x_u, y_u, x_s, y_s)`.
pub struct EquilibriumRef {
    pub strain: &'static str,
    pub eu: (f64, f64),
    pub es: (f64, f64),
}

pub const EQUILIBRIA: [EquilibriumRef; 2] = [
    EquilibriumRef { strain: "wmel", eu: (4592.0, 1793.0), es: (598.0, 5787.0) },
    EquilibriumRef { strain: "wmelpop", eu: (1050.0, 3778.0), es: (135.0, 4693.0) },
];

/// Continuous optimal control: terminal time and `∫ u* dt`.
pub struct OcpRef {
    pub strain: &'static str,
    pub cap_l: f64,
    pub t_star: f64,
    pub total: f64,
}

pub const OCP: [OcpRef; 2] = [
    OcpRef { strain: "wmel", cap_l: 750.0, t_star: 13.72, total: 5961.0 },
    OcpRef { strain: "wmelpop", cap_l: 1000.0, t_star: 64.87, total: 33125.0 },
];

/// One cell of a strain × frequency table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub strain: &'static str,
    /// Release period in days.
    pub period: u32,
    pub releases: usize,
    pub total: u64,
}

/// Suboptimal impulsive strategies (Table 2).
pub const TABLE2: [Cell; 6] = [
    Cell { strain: "wmel", period: 1, releases: 14, total: 5966 },
    Cell { strain: "wmel", period: 7, releases: 2, total: 5966 },
    Cell { strain: "wmel", period: 14, releases: 1, total: 5966 },
    Cell { strain: "wmelpop", period: 1, releases: 65, total: 33169 },
    Cell { strain: "wmelpop", period: 7, releases: 9, total: 35574 },
    Cell { strain: "wmelpop", period: 14, releases: 5, total: 41804 },
];

/// Genetic-algorithm strategies (Table 4).
pub const TABLE4: [Cell; 6] = [
    Cell { strain: "wmel", period: 1, releases: 11, total: 5436 },
    Cell { strain: "wmel", period: 7, releases: 2, total: 5226 },
    Cell { strain: "wmel", period: 14, releases: 1, total: 4956 },
    Cell { strain: "wmelpop", period: 1, releases: 60, total: 24481 },
    Cell { strain: "wmelpop", period: 7, releases: 9, total: 27259 },
    Cell { strain: "wmelpop", period: 14, releases: 5, total: 31323 },
];

pub fn table2(strain: &str, period: u32) -> Option<Cell> {
    TABLE2.iter().copied().find(|c| c.strain == strain && c.period == period)
}

pub fn table4(strain: &str, period: u32) -> Option<Cell> {
    TABLE4.iter().copied().find(|c| c.strain == strain && c.period == period)
}

/// Relative deviation `(value − reference) / reference`.
pub fn deviation(value: f64, reference: f64) -> f64 {
    (value - reference) / reference
}
