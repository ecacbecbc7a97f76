use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GibbsModel;
use crate::primitives::Primitives;
use crate::special::log_rising_factorial;

/// Blocks in order of appearance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionState {
    pub block_sizes: Vec<usize>,
    /// Block index of each customer.
    pub assignments: Vec<usize>,
}

impl PartitionState {
    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.block_sizes.len()
    }
}

/// Outcome of one urn step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub block: usize,
    pub opened: bool,
    /// `|Σ probabilities − 1|` before renormalization.
    pub defect: f64,
}

const CLOSED_TOL: f64 = 1e-10;
const MC_TOL: f64 = 1e-3;

/// Seats customer `n+1`: existing block `k` with probability
/// `(V_{n+1,B}/V_{n,B})(N_k − α)`, a new block with `V_{n+1,B+1}/V_{n,B}`.
pub fn urn_step<R: Rng + ?Sized>(state: &mut PartitionState, prims: &Primitives, rng: &mut R) -> Result<StepReport> {
    let n = state.n();
    if n == 0 {
        state.block_sizes.push(1);
        state.assignments.push(0);
        return Ok(StepReport { block: 0, opened: true, defect: 0.0 });
    }
    let alpha = prims.alpha();
    let b = state.num_blocks();
    let ln_now = prims.ln_v(n, b)?;
    let stay = (prims.ln_v(n + 1, b)? - ln_now).exp();
    let open = (prims.ln_v(n + 1, b + 1)? - ln_now).exp();
    let total = stay * (n as f64 - alpha * b as f64) + open;
    let defect = (total - 1.0).abs();
    let tol = if matches!(prims, Primitives::Closed { .. }) { CLOSED_TOL } else { MC_TOL };
    if defect > tol {
        return Err(Error::Normalization { total, tolerance: tol });
    }
    let mut u = rng.random::<f64>() * total;
    let mut chosen = b;
    for (k, &size) in state.block_sizes.iter().enumerate() {
        let w = stay * (size as f64 - alpha);
        if u < w {
            chosen = k;
            break;
        }
        u -= w;
    }
    if chosen == b {
        state.block_sizes.push(1);
    } else {
        state.block_sizes[chosen] += 1;
    }
    state.assignments.push(chosen);
    Ok(StepReport { block: chosen, opened: chosen == b, defect })
}

/// Partition of `n` customers from the urn scheme.
pub fn sample_partition_with<R: Rng + ?Sized>(prims: &Primitives, n: usize, rng: &mut R) -> Result<PartitionState> {
    let mut state = PartitionState::default();
    for _ in 0..n {
        urn_step(&mut state, prims, rng)?;
    }
    Ok(state)
}

pub fn sample_partition(model: &GibbsModel, n: usize, seed: u64) -> Result<PartitionState> {
    let prims = Primitives::new(model, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_partition_with(&prims, n, &mut rng)
}

/// `ln V_{n,k} + Σ_ℓ ln (1−α)_{n_ℓ−1}`.
pub fn log_eppf(prims: &Primitives, block_sizes: &[usize]) -> Result<f64> {
    if block_sizes.is_empty() || block_sizes.contains(&0) {
        return Err(Error::domain("EPPF needs at least one block and positive block sizes"));
    }
    let n: usize = block_sizes.iter().sum();
    let a = prims.alpha();
    let mut total = prims.ln_v(n, block_sizes.len())?;
    for &s in block_sizes {
        total += log_rising_factorial(1.0 - a, s - 1)?;
    }
    Ok(total)
}
