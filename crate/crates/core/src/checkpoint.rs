//! Plain-text surrogate checkpoints.
//!
//! ```text
//! ptgame-checkpoint 1
//! input_dim 2
//! hidden_layers 3
//! hidden_width 32
//! activation tanh
//! barrier bounded
//! wrapper exp
//! seed 7
//! outer_iter 10
//! params 2241
//! -1.2345678901234567e-1
//! ...
//! ```
//!
//! Ten header lines of `key value`, then one parameter per line in the
//! network's layout order (per layer: row-major weights, then biases), each
//! written with 17 significant digits so the round trip is exact.

use std::fs;
use std::path::Path;

use crate::barrier::{Barrier, BarrierCandidate, Wrapper};
use crate::error::{Error, Result};
use crate::net::{Activation, Mlp, MlpConfig, SurrogateValue};

const MAGIC: &str = "ptgame-checkpoint 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: MlpConfig,
    pub barrier: Barrier,
    pub wrapper: Wrapper,
    pub outer_iter: usize,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(surrogate: &SurrogateValue, outer_iter: usize, params: Vec<f64>) -> Result<Self> {
        let expected = surrogate.net().num_params();
        if params.len() != expected {
            return Err(Error::config(format!(
                "checkpoint has {} parameters, topology needs {expected}",
                params.len()
            )));
        }
        Ok(Self {
            network: *surrogate.net().config(),
            barrier: surrogate.barrier(),
            wrapper: surrogate.wrapper(),
            outer_iter,
            params,
        })
    }

    pub fn surrogate(&self) -> Result<SurrogateValue> {
        SurrogateValue::new(
            self.network,
            BarrierCandidate {
                barrier: self.barrier,
                wrapper: self.wrapper,
            },
        )
    }

    pub fn to_text(&self) -> String {
        let c = &self.network;
        let mut out = format!(
            "{MAGIC}\ninput_dim {}\nhidden_layers {}\nhidden_width {}\nactivation {}\nbarrier {}\nwrapper {}\nseed {}\nouter_iter {}\nparams {}\n",
            c.input_dim,
            c.hidden_layers,
            c.hidden_width,
            c.activation.name(),
            self.barrier.name(),
            self.wrapper.name(),
            c.init_seed,
            self.outer_iter,
            self.params.len()
        );
        for p in &self.params {
            out.push_str(&format!("{p:.16e}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(MAGIC) {
            return Err(Error::config("not a checkpoint file (bad first line)"));
        }
        let mut field = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::config(format!("checkpoint header ends before `{key}`")))?;
            match line.trim().split_once(' ') {
                Some((k, v)) if k == key => Ok(v.trim().to_string()),
                _ => Err(Error::config(format!("checkpoint header: expected `{key}`, found `{line}`"))),
            }
        };
        let count = |key: &str, v: String| -> Result<usize> {
            v.parse().map_err(|_| Error::config(format!("checkpoint `{key}` is not a count: {v}")))
        };
        let input_dim = count("input_dim", field("input_dim")?)?;
        let hidden_layers = count("hidden_layers", field("hidden_layers")?)?;
        let hidden_width = count("hidden_width", field("hidden_width")?)?;
        let activation = match field("activation")?.as_str() {
            "tanh" => Activation::Tanh,
            "sigmoid" => Activation::Sigmoid,
            other => return Err(Error::config(format!("unknown activation `{other}`"))),
        };
        let barrier = match field("barrier")?.as_str() {
            "bounded" => Barrier::Bounded,
            "unbounded" => Barrier::Unbounded,
            other => return Err(Error::config(format!("unknown barrier `{other}`"))),
        };
        let wrapper = match field("wrapper")?.as_str() {
            "exp" => Wrapper::Exp,
            "logistic" => Wrapper::Logistic,
            other => return Err(Error::config(format!("unknown wrapper `{other}`"))),
        };
        let seed_text = field("seed")?;
        let init_seed = seed_text
            .parse()
            .map_err(|_| Error::config(format!("checkpoint `seed` is not an integer: {seed_text}")))?;
        let outer_iter = count("outer_iter", field("outer_iter")?)?;
        let n = count("params", field("params")?)?;
        let params = lines
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| l.parse::<f64>().map_err(|_| Error::config(format!("bad parameter value `{l}`"))))
            .collect::<Result<Vec<_>>>()?;
        if params.len() != n {
            return Err(Error::config(format!("checkpoint declares {n} parameters but holds {}", params.len())));
        }
        let network = MlpConfig {
            input_dim,
            hidden_layers,
            hidden_width,
            activation,
            init_seed,
        };
        let expected = Mlp::new(network)?.num_params();
        if n != expected {
            return Err(Error::config(format!("checkpoint holds {n} parameters, topology needs {expected}")));
        }
        Ok(Self {
            network,
            barrier,
            wrapper,
            outer_iter,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Fails unless the stored topology and barrier match `expected`.
    pub fn check_compatible(&self, expected: &SurrogateValue) -> Result<()> {
        let mine = self.network;
        let theirs = *expected.net().config();
        let same_topology = mine.input_dim == theirs.input_dim
            && mine.hidden_layers == theirs.hidden_layers
            && mine.hidden_width == theirs.hidden_width
            && mine.activation == theirs.activation;
        if !same_topology {
            return Err(Error::config(format!(
                "checkpoint topology {}x{} {} (input {}) does not match config {}x{} {} (input {})",
                mine.hidden_layers,
                mine.hidden_width,
                mine.activation.name(),
                mine.input_dim,
                theirs.hidden_layers,
                theirs.hidden_width,
                theirs.activation.name(),
                theirs.input_dim
            )));
        }
        if self.barrier != expected.barrier() || self.wrapper != expected.wrapper() {
            return Err(Error::config(format!(
                "checkpoint barrier/wrapper {}/{} does not match config {}/{}",
                self.barrier.name(),
                self.wrapper.name(),
                expected.barrier().name(),
                expected.wrapper().name()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::ExampleKind;

    fn surrogate(width: usize) -> SurrogateValue {
        SurrogateValue::new(
            MlpConfig {
                input_dim: 2,
                hidden_layers: 2,
                hidden_width: width,
                activation: Activation::Tanh,
                init_seed: 5,
            },
            BarrierCandidate::for_example(ExampleKind::Bounded),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let s = surrogate(4);
        let mut w = s.init_params().0;
        w[0] = 1.0 / 3.0;
        w[1] = -2.5e-300;
        let ck = Checkpoint::new(&s, 3, w.clone()).unwrap();
        let back = Checkpoint::parse(&ck.to_text()).unwrap();
        assert_eq!(back, ck);
        assert!(back.params.iter().zip(&w).all(|(a, b)| a.to_bits() == b.to_bits()));
        back.check_compatible(&s).unwrap();
    }

    #[test]
    fn file_round_trip() {
        let s = surrogate(3);
        let ck = Checkpoint::new(&s, 0, s.init_params().0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.ckpt");
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }

    #[test]
    fn mismatched_topology_is_config_error() {
        let ck = Checkpoint::new(&surrogate(4), 0, surrogate(4).init_params().0).unwrap();
        assert!(matches!(ck.check_compatible(&surrogate(5)), Err(Error::Config(_))));
        assert!(matches!(Checkpoint::new(&surrogate(4), 0, vec![0.0; 3]), Err(Error::Config(_))));
    }

    #[test]
    fn truncated_or_garbled_files_rejected() {
        let s = surrogate(2);
        let text = Checkpoint::new(&s, 1, s.init_params().0).unwrap().to_text();
        let short: String = text.lines().take(12).map(|l| format!("{l}\n")).collect();
        assert!(Checkpoint::parse(&short).is_err());
        assert!(Checkpoint::parse(&text.replace("tanh", "relu")).is_err());
        assert!(Checkpoint::parse("hello").is_err());
    }
}
