use super::error::ModelError;

/// Tolerance for row sums and distribution normalization checks.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Exogenous finite-state Markov chain of energy prices.
///
/// Prices are strictly positive and the chain must be ergodic
/// (irreducible and aperiodic), so a unique stationary distribution
/// exists. Both properties are checked at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceChain {
    prices: Vec<f64>,
    /// Row-major |P| x |P| row-stochastic matrix.
    transition: Vec<f64>,
}

impl PriceChain {
    pub fn new(prices: Vec<f64>, transition: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let n = prices.len();
        if n == 0 {
            return Err(ModelError::new("price_chain.prices", "must be non-empty"));
        }
        for (i, p) in prices.iter().enumerate() {
            if !p.is_finite() || *p <= 0.0 {
                return Err(ModelError::new(
                    format!("price_chain.prices[{i}]"),
                    format!("price must be strictly positive and finite, got {p}"),
                ));
            }
        }
        if transition.len() != n {
            return Err(ModelError::new(
                "price_chain.transition",
                format!("expected {n} rows, got {}", transition.len()),
            ));
        }
        let mut flat = Vec::with_capacity(n * n);
        for (i, row) in transition.iter().enumerate() {
            if row.len() != n {
                return Err(ModelError::new(
                    format!("price_chain.transition[{i}]"),
                    format!("expected {n} entries, got {}", row.len()),
                ));
            }
            let mut sum = 0.0;
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() || *v < 0.0 || *v > 1.0 {
                    return Err(ModelError::new(
                        format!("price_chain.transition[{i}][{j}]"),
                        format!("entry must lie in [0, 1], got {v}"),
                    ));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > PROB_SUM_TOL {
                return Err(ModelError::new(
                    format!("price_chain.transition[{i}]"),
                    format!("row sums to {sum}, expected 1"),
                ));
            }
            flat.extend_from_slice(row);
        }
        let chain = Self {
            prices,
            transition: flat,
        };
        chain.check_ergodic()?;
        Ok(chain)
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn price(&self, idx: usize) -> f64 {
        self.prices[idx]
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    /// Transition probabilities out of price state `idx`.
    pub fn row(&self, idx: usize) -> &[f64] {
        let n = self.len();
        &self.transition[idx * n..(idx + 1) * n]
    }

    pub fn p_max(&self) -> f64 {
        self.prices.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn p_min(&self) -> f64 {
        self.prices.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Irreducibility: the graph of positive-probability transitions is
    /// strongly connected. Aperiodicity: the gcd of cycle lengths is 1,
    /// computed from BFS levels via gcd over edges of d(u) + 1 - d(v).
    fn check_ergodic(&self) -> Result<(), ModelError> {
        let n = self.len();
        let edge = |i: usize, j: usize| self.transition[i * n + j] > 0.0;

        let reachable = |forward: bool| -> Vec<bool> {
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(u) = stack.pop() {
                for (v, seen_v) in seen.iter_mut().enumerate() {
                    let connected = if forward { edge(u, v) } else { edge(v, u) };
                    if connected && !*seen_v {
                        *seen_v = true;
                        stack.push(v);
                    }
                }
            }
            seen
        };
        if !reachable(true).iter().all(|&b| b) || !reachable(false).iter().all(|&b| b) {
            return Err(ModelError::new(
                "price_chain.transition",
                "chain is not irreducible (some price state is unreachable)",
            ));
        }

        // BFS levels from state 0.
        let mut level = vec![usize::MAX; n];
        let mut queue = std::collections::VecDeque::new();
        level[0] = 0;
        queue.push_back(0usize);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if edge(u, v) && level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        let mut period: u64 = 0;
        for u in 0..n {
            for v in 0..n {
                if edge(u, v) {
                    let diff = level[u] as i64 + 1 - level[v] as i64;
                    period = gcd(period, diff.unsigned_abs());
                }
            }
        }
        if period != 1 {
            return Err(ModelError::new(
                "price_chain.transition",
                format!("chain is periodic with period {period}, expected aperiodic"),
            ));
        }
        Ok(())
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_valid_chain() {
        let chain = PriceChain::new(
            vec![10.0, 20.0],
            vec![vec![0.8, 0.2], vec![0.3, 0.7]],
        )
        .unwrap();
        assert_eq!(chain.len(), 2);
        assert_eq!(chain.p_max(), 20.0);
        assert_eq!(chain.p_min(), 10.0);
        assert_eq!(chain.row(1), &[0.3, 0.7]);
    }

    #[test]
    fn rejects_nonpositive_price() {
        let err = PriceChain::new(vec![10.0, 0.0], vec![vec![0.5, 0.5], vec![0.5, 0.5]])
            .unwrap_err();
        assert_eq!(err.path, "price_chain.prices[1]");
    }

    #[test]
    fn rejects_bad_row_sum() {
        let err = PriceChain::new(vec![1.0, 2.0], vec![vec![0.5, 0.4], vec![0.5, 0.5]])
            .unwrap_err();
        assert_eq!(err.path, "price_chain.transition[0]");
        assert!(err.message.contains("0.9"));
    }

    #[test]
    fn rejects_reducible_chain() {
        let err = PriceChain::new(vec![1.0, 2.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]])
            .unwrap_err();
        assert!(err.message.contains("irreducible"));
    }

    #[test]
    fn rejects_periodic_chain() {
        // Deterministic 2-cycle has period 2.
        let err = PriceChain::new(vec![1.0, 2.0], vec![vec![0.0, 1.0], vec![1.0, 0.0]])
            .unwrap_err();
        assert!(err.message.contains("period"));
    }
}
