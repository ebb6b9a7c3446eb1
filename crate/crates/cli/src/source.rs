use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use tradepost_core::instance::{generate, preset, GeneratorSpec, Instance, Topology};

/// Where the instance comes from: a file, a preset, or the generator.
#[derive(Args, Debug, Clone)]
pub struct InstanceArgs {
    /// Instance JSON file.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["preset", "n"])]
    pub instance: Option<PathBuf>,
    /// Built-in instance: bipartite2, fig3, fig1-like, tft3 or fig7.
    #[arg(long, value_name = "NAME", conflicts_with = "n")]
    pub preset: Option<String>,
    /// Generate an instance with this many players.
    #[arg(long, value_name = "N")]
    pub n: Option<usize>,
    /// Generator topology: dense, bipartite or cyclic:K.
    #[arg(long, default_value = "dense")]
    pub topology: String,
    /// Block count of the cyclic topology; shorthand for `--topology cyclic:K`.
    #[arg(long, value_name = "K")]
    pub components: Option<usize>,
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl InstanceArgs {
    pub fn generator(&self) -> Result<Option<GeneratorSpec>> {
        let Some(n) = self.n else { return Ok(None) };
        let topology = match self.components {
            Some(k) => Topology::CyclicComponents(k),
            None => self.topology.parse::<Topology>()?,
        };
        Ok(Some(GeneratorSpec {
            n,
            topology,
            seed: self.seed,
        }))
    }

    pub fn load(&self) -> Result<Instance> {
        if let Some(path) = &self.instance {
            return Instance::load(path).with_context(|| format!("loading {}", path.display()));
        }
        if let Some(name) = &self.preset {
            return Ok(preset(name)?);
        }
        match self.generator()? {
            Some(spec) => Ok(generate(&spec)?),
            None => bail!("one of --instance, --preset or --n is required"),
        }
    }
}

/// A single value applies to every player; otherwise one value per player.
pub fn parse_alpha(text: &str, n: usize) -> Result<Vec<f64>> {
    let values = text
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .with_context(|| format!("bad alpha value `{v}`"))
        })
        .collect::<Result<Vec<_>>>()?;
    match values.len() {
        1 => Ok(vec![values[0]; n]),
        len if len == n => Ok(values),
        len => bail!("--alpha has {len} values but the instance has {n} players"),
    }
}
