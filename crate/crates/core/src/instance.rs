//! Instance files, seeded generators and the built-in example instances.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::TftState;
use crate::econ::{normalize_money, Economy, MarketState};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// On-disk JSON form of an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub n: usize,
    pub a: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b0: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bank0: Option<Vec<f64>>,
    /// Draws random initial bids when `b0` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// An economy together with a starting state whose total money is one.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub economy: Economy,
    pub initial: MarketState,
}

impl Instance {
    /// Normalizes the money of `initial` and checks it against `economy`.
    pub fn new(economy: Economy, initial: MarketState) -> Result<Self> {
        initial.check(&economy)?;
        let initial = normalize_money(&initial)?;
        Ok(Self { economy, initial })
    }

    pub fn from_file(file: &InstanceFile) -> Result<Self> {
        let a = Matrix::from_rows(&file.a)?;
        if a.n() != file.n {
            return Err(Error::Shape(format!(
                "`n` is {} but `a` has {} rows",
                file.n,
                a.n()
            )));
        }
        let alpha = file.alpha.clone().unwrap_or_else(|| vec![1.0; file.n]);
        let economy = Economy::new(a, alpha)?;
        let initial = match &file.b0 {
            Some(b0) => {
                let bank = file.bank0.clone().unwrap_or_else(|| vec![0.0; file.n]);
                MarketState::new(Matrix::from_rows(b0)?, bank)?
            }
            None => {
                let s = match file.seed {
                    Some(seed) => random_bids(&economy, seed)?,
                    None => MarketState::uniform_normalized(&economy)?,
                };
                match &file.bank0 {
                    Some(bank) => MarketState::new(s.bids, bank.clone())?,
                    None => s,
                }
            }
        };
        Self::new(economy, initial)
    }

    pub fn to_file(&self) -> InstanceFile {
        let alpha = self.economy.alpha();
        InstanceFile {
            n: self.economy.n(),
            a: self.economy.valuations().to_rows(),
            alpha: alpha.iter().any(|&a| a != 1.0).then(|| alpha.to_vec()),
            b0: Some(self.initial.bids.to_rows()),
            bank0: self
                .initial
                .bank
                .iter()
                .any(|&b| b != 0.0)
                .then(|| self.initial.bank.clone()),
            seed: None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: InstanceFile = serde_json::from_str(&text)?;
        Self::from_file(&file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file())?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    /// Replaces the savings fractions, keeping the starting state.
    pub fn with_alpha(mut self, alpha: Vec<f64>) -> Result<Self> {
        self.economy = self.economy.with_alpha(alpha)?;
        Ok(self)
    }

    /// Starting state with `(1 - alpha_i) / alpha_i * B_i` banked, normalized
    /// to total money one.
    pub fn initial_with_matching_bank(&self) -> Result<MarketState> {
        normalize_money(
            &self
                .initial
                .clone()
                .with_matching_bank(self.economy.alpha()),
        )
    }

    /// Fractions `y_ji = b_ij / p_j` matching the starting bids.
    pub fn initial_tft(&self) -> Result<TftState> {
        TftState::from_bids(&self.initial.bids)
    }
}

/// Random bids over each row's support with equal budgets summing to one.
fn random_bids(economy: &Economy, seed: u64) -> Result<MarketState> {
    let n = economy.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bids = Matrix::zeros(n);
    for i in 0..n {
        let w: Vec<f64> = (0..n)
            .map(|j| {
                if economy.valuation(i, j) > 0.0 {
                    rng.gen_range(0.05..1.0)
                } else {
                    0.0
                }
            })
            .collect();
        let total: f64 = w.iter().sum();
        for j in 0..n {
            bids[(i, j)] = w[j] / total / n as f64;
        }
    }
    MarketState::without_bank(bids)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "k")]
pub enum Topology {
    /// Every valuation positive.
    Dense,
    /// Players split into two sides that only value the other side's goods.
    Bipartite,
    /// `k` blocks of players; block `m` values only goods of block `m + 1 (mod k)`.
    CyclicComponents(usize),
}

impl std::str::FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Self::Dense),
            "bipartite" => Ok(Self::Bipartite),
            _ => {
                let k = s
                    .strip_prefix("cyclic:")
                    .or_else(|| s.strip_prefix("cyclic-components:"))
                    .and_then(|k| k.parse().ok())
                    .ok_or_else(|| {
                        Error::InvalidSpec(format!(
                            "unknown topology `{s}` (expected dense, bipartite or cyclic:K)"
                        ))
                    })?;
                Ok(Self::CyclicComponents(k))
            }
        }
    }
}

impl std::fmt::Display for Topology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Dense => f.write_str("dense"),
            Self::Bipartite => f.write_str("bipartite"),
            Self::CyclicComponents(k) => write!(f, "cyclic:{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n: usize,
    pub topology: Topology,
    pub seed: u64,
}

/// Sizes of `k` near-equal consecutive blocks of `0..n`, the larger ones in
/// the middle: `(10, 3)` gives `[3, 4, 3]`.
pub fn block_sizes(n: usize, k: usize) -> Vec<usize> {
    let base = n / k;
    let extra = n % k;
    let start = (k - extra) / 2;
    (0..k)
        .map(|m| base + usize::from(m >= start && m < start + extra))
        .collect()
}

/// Block index of every player.
pub fn block_of(n: usize, k: usize) -> Vec<usize> {
    block_sizes(n, k)
        .iter()
        .enumerate()
        .flat_map(|(m, &size)| std::iter::repeat_n(m, size))
        .collect()
}

/// Draws valuations uniformly from `[1, 100]` on the topology's support and
/// starts from uniform bids with equal budgets.
pub fn generate(spec: &GeneratorSpec) -> Result<Instance> {
    let n = spec.n;
    if n == 0 {
        return Err(Error::InvalidSpec("n must be positive".into()));
    }
    let allowed: Box<dyn Fn(usize, usize) -> bool> = match spec.topology {
        Topology::Dense => Box::new(|_, _| true),
        Topology::Bipartite => {
            if n < 2 {
                return Err(Error::InvalidSpec("bipartite topology needs n >= 2".into()));
            }
            let half = n.div_ceil(2);
            Box::new(move |i, j| (i < half) != (j < half))
        }
        Topology::CyclicComponents(k) => {
            if k == 0 || k > n {
                return Err(Error::InvalidSpec(format!(
                    "cyclic topology needs 1 <= k <= n, got k = {k}, n = {n}"
                )));
            }
            let block = block_of(n, k);
            Box::new(move |i, j| block[j] == (block[i] + 1) % k)
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut a = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if allowed(i, j) {
                a[(i, j)] = rng.gen_range(1.0..=100.0);
            }
        }
    }
    let economy = Economy::non_lazy(a)?;
    let initial = MarketState::uniform_normalized(&economy)?;
    Instance::new(economy, initial)
}

/// Fractions `y(0)` of the three-player tit-for-tat example, indexed
/// (good, player).
pub const TFT3_Y0: [[f64; 3]; 3] = [
    [0.0, 0.2805339037254016, 0.7194660962745985],
    [0.273923422472049, 0.0, 0.726076577527951],
    [0.491752727261851, 0.5082472727381491, 0.0],
];

pub const TFT3_A: [[f64; 3]; 3] = [[0.0, 6.0, 4.0], [3.0, 0.0, 9.0], [9.0, 6.0, 0.0]];

pub const PRESETS: [&str; 5] = ["bipartite2", "fig3", "fig1-like", "tft3", "fig7"];

/// Seed of the `fig1-like` preset.
pub const FIG1_SEED: u64 = 1;

/// Built-in instances:
///
/// * `bipartite2`: two players who only value each other's good, starting
///   from bids 1/3 and 2/3; bids cycle with period two.
/// * `fig3`: dense two-player economy `[[38, 51], [79, 75]]`, uniform bids.
/// * `fig1-like`: ten players in cyclic blocks 3/4/3 with random valuations.
/// * `tft3`: three-player economy whose tit-for-tat fractions cycle; bids
///   are `y_ji / 3` so that `b_ij / p_j` gives back `y(0)`.
/// * `fig7`: `[[1, 2], [1, 2]]` from bids `[[0.4, 0.6], [0.9, 0.1]]`.
pub fn preset(name: &str) -> Result<Instance> {
    let from = |a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]| -> Result<Instance> {
        Instance::new(
            Economy::from_rows(a)?,
            MarketState::without_bank(Matrix::from_rows(b)?)?,
        )
    };
    match name {
        "bipartite2" => from(
            &[[0.0, 1.0], [1.0, 0.0]],
            &[[0.0, 1.0 / 3.0], [2.0 / 3.0, 0.0]],
        ),
        "fig3" => from(&[[38.0, 51.0], [79.0, 75.0]], &[[0.5, 0.5], [0.5, 0.5]]),
        "fig7" => from(&[[1.0, 2.0], [1.0, 2.0]], &[[0.4, 0.6], [0.9, 0.1]]),
        "fig1-like" => generate(&GeneratorSpec {
            n: 10,
            topology: Topology::CyclicComponents(3),
            seed: FIG1_SEED,
        }),
        "tft3" => {
            let bids = Matrix::from_fn(3, |i, j| TFT3_Y0[j][i] / 3.0);
            Instance::new(
                Economy::from_rows(&TFT3_A)?,
                MarketState::without_bank(bids)?,
            )
        }
        _ => Err(Error::InvalidSpec(format!(
            "unknown preset `{name}` (expected one of {})",
            PRESETS.join(", ")
        ))),
    }
}
