use super::error::ModelError;
use super::price::PROB_SUM_TOL;

/// Scalar parameters of a device instance.
///
/// `w` bounds both the target-time offset of a request and the
/// post-target window before forced cancellation; `w_hat` is the
/// saturation bound on the no-request elapsed time; `c` is the energy
/// consumed by one standardized job; `alpha` the discount factor; and
/// `gamma` the bill-vs-dissatisfaction tradeoff weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceParams {
    pub w: i32,
    pub w_hat: i32,
    pub g_max: u32,
    pub c: f64,
    pub alpha: f64,
    pub gamma: f64,
}

impl DeviceParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.w < 0 {
            return Err(ModelError::new("params.w", format!("must be >= 0, got {}", self.w)));
        }
        if self.w_hat < 0 {
            return Err(ModelError::new(
                "params.w_hat",
                format!("must be >= 0, got {}", self.w_hat),
            ));
        }
        if self.g_max < 1 {
            return Err(ModelError::new(
                "params.g_max",
                format!("must be >= 1, got {}", self.g_max),
            ));
        }
        if !self.c.is_finite() || self.c <= 0.0 {
            return Err(ModelError::new("params.c", format!("must be > 0, got {}", self.c)));
        }
        if !self.alpha.is_finite() || self.alpha <= 0.0 || self.alpha >= 1.0 {
            return Err(ModelError::new(
                "params.alpha",
                format!("must lie in (0, 1), got {}", self.alpha),
            ));
        }
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(ModelError::new(
                "params.gamma",
                format!("must be >= 0, got {}", self.gamma),
            ));
        }
        Ok(())
    }
}

/// A "device portion" state: elapsed time and request priority,
/// excluding the price component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DevicePortion {
    pub s: i32,
    pub g: u32,
}

/// The three dissatisfaction tables.
///
/// `u_r(s, g)` is incurred when a pending request is completed at signed
/// offset `s` from its target time, `u_c(s, g)` when it is canceled at
/// offset `s`, and `u_e(s)` when the device runs a self-initiated job
/// after `s` idle steps. All entries are non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct DissatisfactionTables {
    w: i32,
    w_hat: i32,
    g_max: u32,
    /// (2w+1) x g_max, s-major with s = -w..=w.
    u_r: Vec<f64>,
    u_c: Vec<f64>,
    /// w_hat + 1 entries for s = 0..=w_hat.
    u_e: Vec<f64>,
}

impl DissatisfactionTables {
    /// `u_r` and `u_c` are given as rows over s = -w..=w, each row holding
    /// g_max entries for g = 1..=g_max; `u_e` has one entry per s = 0..=w_hat.
    pub fn new(
        w: i32,
        w_hat: i32,
        g_max: u32,
        u_r: Vec<Vec<f64>>,
        u_c: Vec<Vec<f64>>,
        u_e: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let flat_r = flatten_sg_table(&u_r, w, g_max, "dissatisfaction.u_r")?;
        let flat_c = flatten_sg_table(&u_c, w, g_max, "dissatisfaction.u_c")?;
        let expected_e = (w_hat + 1) as usize;
        if u_e.len() != expected_e {
            return Err(ModelError::new(
                "dissatisfaction.u_e",
                format!("expected {expected_e} entries (s = 0..={w_hat}), got {}", u_e.len()),
            ));
        }
        for (i, v) in u_e.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(ModelError::new(
                    format!("dissatisfaction.u_e[{i}]"),
                    format!("entry must be >= 0, got {v}"),
                ));
            }
        }
        Ok(Self {
            w,
            w_hat,
            g_max,
            u_r: flat_r,
            u_c: flat_c,
            u_e,
        })
    }

    pub fn dims(&self) -> (i32, i32, u32) {
        (self.w, self.w_hat, self.g_max)
    }

    fn sg_index(&self, s: i32, g: u32) -> usize {
        debug_assert!(s >= -self.w && s <= self.w);
        debug_assert!(g >= 1 && g <= self.g_max);
        ((s + self.w) as usize) * self.g_max as usize + (g - 1) as usize
    }

    pub fn u_r(&self, s: i32, g: u32) -> f64 {
        self.u_r[self.sg_index(s, g)]
    }

    pub fn u_c(&self, s: i32, g: u32) -> f64 {
        self.u_c[self.sg_index(s, g)]
    }

    /// Saturates at `w_hat`, matching the elapsed-time saturation of the
    /// no-request states.
    pub fn u_e(&self, s: i32) -> f64 {
        debug_assert!(s >= 0);
        self.u_e[s.min(self.w_hat) as usize]
    }

    pub fn max_entry(&self) -> f64 {
        self.u_r
            .iter()
            .chain(self.u_c.iter())
            .chain(self.u_e.iter())
            .cloned()
            .fold(0.0, f64::max)
    }
}

fn flatten_sg_table(
    rows: &[Vec<f64>],
    w: i32,
    g_max: u32,
    path: &str,
) -> Result<Vec<f64>, ModelError> {
    let expected_rows = (2 * w + 1) as usize;
    if rows.len() != expected_rows {
        return Err(ModelError::new(
            path,
            format!("expected {expected_rows} rows (s = {}..={w}), got {}", -w, rows.len()),
        ));
    }
    let mut flat = Vec::with_capacity(expected_rows * g_max as usize);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != g_max as usize {
            return Err(ModelError::new(
                format!("{path}[{i}]"),
                format!("expected {g_max} entries (g = 1..={g_max}), got {}", row.len()),
            ));
        }
        for (j, v) in row.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(ModelError::new(
                    format!("{path}[{i}][{j}]"),
                    format!("entry must be >= 0, got {v}"),
                ));
            }
        }
        flat.extend_from_slice(row);
    }
    Ok(flat)
}

/// Statistical model of user requests and cancellations plus the
/// episode-regeneration distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestModel {
    w: i32,
    w_hat: i32,
    g_max: u32,
    /// (w_hat+1) x (w+1) x g_max: probability that, from no-request
    /// elapsed time s, a request with target offset d = -w..=0 and
    /// priority g arrives at the next step.
    arrival: Vec<f64>,
    /// (2w+1) x g_max: probability that a pending request at offset s
    /// survives (is not canceled) this step. Forced to 0 at s = w.
    continuation: Vec<f64>,
    /// Regeneration distribution over device-portion states.
    regen: Vec<(DevicePortion, f64)>,
}

impl RequestModel {
    /// `arrival[s][d][g]` with s = 0..=w_hat, d = -w..=0, g = 1..=g_max;
    /// `continuation[s][g]` with s = -w..=w; `regen` lists device-portion
    /// states with probabilities summing to 1.
    pub fn new(
        w: i32,
        w_hat: i32,
        g_max: u32,
        arrival: Vec<Vec<Vec<f64>>>,
        continuation: Vec<Vec<f64>>,
        regen: Vec<(DevicePortion, f64)>,
    ) -> Result<Self, ModelError> {
        let s_rows = (w_hat + 1) as usize;
        let d_cols = (w + 1) as usize;
        let g_cols = g_max as usize;
        if arrival.len() != s_rows {
            return Err(ModelError::new(
                "requests.arrival",
                format!("expected {s_rows} rows (s = 0..={w_hat}), got {}", arrival.len()),
            ));
        }
        let mut flat_arrival = Vec::with_capacity(s_rows * d_cols * g_cols);
        for (i, by_d) in arrival.iter().enumerate() {
            if by_d.len() != d_cols {
                return Err(ModelError::new(
                    format!("requests.arrival[{i}]"),
                    format!("expected {d_cols} offset rows (d = {}..=0), got {}", -w, by_d.len()),
                ));
            }
            let mut mass = 0.0;
            for (j, by_g) in by_d.iter().enumerate() {
                if by_g.len() != g_cols {
                    return Err(ModelError::new(
                        format!("requests.arrival[{i}][{j}]"),
                        format!("expected {g_cols} entries (g = 1..={g_max}), got {}", by_g.len()),
                    ));
                }
                for (k, v) in by_g.iter().enumerate() {
                    if !v.is_finite() || *v < 0.0 || *v > 1.0 {
                        return Err(ModelError::new(
                            format!("requests.arrival[{i}][{j}][{k}]"),
                            format!("probability must lie in [0, 1], got {v}"),
                        ));
                    }
                    mass += v;
                }
                flat_arrival.extend_from_slice(by_g);
            }
            if mass > 1.0 + PROB_SUM_TOL {
                return Err(ModelError::new(
                    format!("requests.arrival[{i}]"),
                    format!("total arrival probability {mass} exceeds 1"),
                ));
            }
        }

        let flat_continuation =
            flatten_prob_sg_table(&continuation, w, g_max, "requests.continuation")?;
        for g in 1..=g_max {
            let idx = ((w + w) as usize) * g_cols + (g - 1) as usize;
            if flat_continuation[idx] != 0.0 {
                return Err(ModelError::new(
                    format!("requests.continuation[{}][{}]", 2 * w, g - 1),
                    format!(
                        "survival probability at s = w must be 0, got {}",
                        flat_continuation[idx]
                    ),
                ));
            }
        }

        if regen.is_empty() {
            return Err(ModelError::new("requests.regen", "must be non-empty"));
        }
        let mut sum = 0.0;
        let mut seen = std::collections::HashSet::new();
        for (i, (dp, p)) in regen.iter().enumerate() {
            if !p.is_finite() || *p < 0.0 || *p > 1.0 {
                return Err(ModelError::new(
                    format!("requests.regen[{i}].prob"),
                    format!("probability must lie in [0, 1], got {p}"),
                ));
            }
            let valid = if dp.g == 0 {
                dp.s >= 0 && dp.s <= w_hat
            } else {
                dp.g <= g_max && dp.s >= -w && dp.s <= w
            };
            if !valid {
                return Err(ModelError::new(
                    format!("requests.regen[{i}]"),
                    format!("invalid device-portion state [s={}, g={}]", dp.s, dp.g),
                ));
            }
            if !seen.insert(*dp) {
                return Err(ModelError::new(
                    format!("requests.regen[{i}]"),
                    format!("duplicate device-portion state [s={}, g={}]", dp.s, dp.g),
                ));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(ModelError::new(
                "requests.regen",
                format!("probabilities sum to {sum}, expected 1"),
            ));
        }

        Ok(Self {
            w,
            w_hat,
            g_max,
            arrival: flat_arrival,
            continuation: flat_continuation,
            regen,
        })
    }

    pub fn dims(&self) -> (i32, i32, u32) {
        (self.w, self.w_hat, self.g_max)
    }

    /// Arrival probability of a request with target offset `d` and
    /// priority `g` from no-request elapsed time `s` (saturated at w_hat).
    pub fn arrival(&self, s: i32, d: i32, g: u32) -> f64 {
        debug_assert!(s >= 0);
        debug_assert!(d >= -self.w && d <= 0);
        debug_assert!(g >= 1 && g <= self.g_max);
        let s = s.min(self.w_hat) as usize;
        let d = (d + self.w) as usize;
        let g = (g - 1) as usize;
        let d_cols = (self.w + 1) as usize;
        let g_cols = self.g_max as usize;
        self.arrival[(s * d_cols + d) * g_cols + g]
    }

    /// Total probability that any request arrives from elapsed time `s`.
    pub fn arrival_mass(&self, s: i32) -> f64 {
        let mut total = 0.0;
        for d in -self.w..=0 {
            for g in 1..=self.g_max {
                total += self.arrival(s, d, g);
            }
        }
        total
    }

    /// Survival probability of a pending request at offset `s`.
    pub fn continuation(&self, s: i32, g: u32) -> f64 {
        debug_assert!(s >= -self.w && s <= self.w);
        debug_assert!(g >= 1 && g <= self.g_max);
        self.continuation[((s + self.w) as usize) * self.g_max as usize + (g - 1) as usize]
    }

    pub fn regen(&self) -> &[(DevicePortion, f64)] {
        &self.regen
    }
}

fn flatten_prob_sg_table(
    rows: &[Vec<f64>],
    w: i32,
    g_max: u32,
    path: &str,
) -> Result<Vec<f64>, ModelError> {
    let expected_rows = (2 * w + 1) as usize;
    if rows.len() != expected_rows {
        return Err(ModelError::new(
            path,
            format!("expected {expected_rows} rows (s = {}..={w}), got {}", -w, rows.len()),
        ));
    }
    let mut flat = Vec::with_capacity(expected_rows * g_max as usize);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != g_max as usize {
            return Err(ModelError::new(
                format!("{path}[{i}]"),
                format!("expected {g_max} entries, got {}", row.len()),
            ));
        }
        for (j, v) in row.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 || *v > 1.0 {
                return Err(ModelError::new(
                    format!("{path}[{i}][{j}]"),
                    format!("probability must lie in [0, 1], got {v}"),
                ));
            }
        }
        flat.extend_from_slice(row);
    }
    Ok(flat)
}
