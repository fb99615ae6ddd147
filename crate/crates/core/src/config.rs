//! Flat `key = value` configuration files.
//!
//! ```text
//! # comment
//! variant = sym_haar
//! d = 2
//! steps = 1000   # trailing comments are allowed
//! ```

use crate::bench::{TrainConfig, Variant};
use crate::error::{Error, Result};

pub const TRAIN_KEYS: [&str; 11] = [
    "variant",
    "d",
    "hidden",
    "steps",
    "batch",
    "lr",
    "mc_samples",
    "seed",
    "cond_cap",
    "checkpoint_every",
    "n_test",
];

/// Keys accepted in a run file besides the training keys.
pub const RUN_KEYS: [&str; 1] = ["out_dir"];

/// Parse lines into ordered `(key, value)` pairs. Blank lines and `#`
/// comments are skipped; duplicate keys are an error.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(Error::Config(format!("line {}: empty key or value", i + 1)));
        }
        if out.iter().any(|(seen, _)| seen == k) {
            return Err(Error::Config(format!(
                "line {}: duplicate key `{k}`",
                i + 1
            )));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for `{key}`")))
}

/// Set one training field by name.
pub fn apply_setting(config: &mut TrainConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "variant" => config.variant = value.parse::<Variant>()?,
        "d" => config.d = parse(key, value)?,
        "hidden" => config.hidden = parse(key, value)?,
        "steps" => config.steps = parse(key, value)?,
        "batch" => config.batch = parse(key, value)?,
        "lr" => config.lr = parse(key, value)?,
        "mc_samples" => config.mc_samples = parse(key, value)?,
        "seed" => config.seed = parse(key, value)?,
        "cond_cap" => config.cond_cap = parse(key, value)?,
        "checkpoint_every" => config.checkpoint_every = parse(key, value)?,
        "n_test" => config.n_test = parse(key, value)?,
        _ => return Err(Error::Config(format!("unknown key `{key}`"))),
    }
    Ok(())
}

/// A parsed run file: training settings plus an optional output directory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub out_dir: Option<String>,
}

impl RunConfig {
    /// Apply a file on top of `base`. Unknown keys are rejected by name.
    pub fn parse_onto(base: TrainConfig, text: &str) -> Result<Self> {
        let mut run = RunConfig {
            train: base,
            out_dir: None,
        };
        for (k, v) in parse_key_values(text)? {
            if k == "out_dir" {
                run.out_dir = Some(v);
            } else {
                apply_setting(&mut run.train, &k, &v)?;
            }
        }
        Ok(run)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_onto(TrainConfig::default(), text)
    }

    /// The training settings as a file that parses back to the same config.
    pub fn render(config: &TrainConfig) -> String {
        format!(
            "variant = {}\nd = {}\nhidden = {}\nsteps = {}\nbatch = {}\nlr = {:?}\nmc_samples = {}\nseed = {}\ncond_cap = {:?}\ncheckpoint_every = {}\nn_test = {}\n",
            config.variant,
            config.d,
            config.hidden,
            config.steps,
            config.batch,
            config.lr,
            config.mc_samples,
            config.seed,
            config.cond_cap,
            config.checkpoint_every,
            config.n_test
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_values() {
        let run = RunConfig::parse(
            "# header\n\nvariant = sym_recursive\nd=3 # inline\nlr = 1e-3\nout_dir = runs/a\n",
        )
        .unwrap();
        assert_eq!(run.train.variant, Variant::SymRecursive);
        assert_eq!(run.train.d, 3);
        assert_eq!(run.train.lr, 1e-3);
        assert_eq!(run.train.batch, 128);
        assert_eq!(run.out_dir.as_deref(), Some("runs/a"));
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::parse("variant = plain_mlp\nlearning_rate = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
    }

    #[test]
    fn malformed_lines_rejected() {
        for text in [
            "d 2",
            "= 3",
            "d =",
            "d = 2\nd = 3",
            "d = two",
            "variant = bogus",
        ] {
            assert!(RunConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn render_round_trips() {
        let c = TrainConfig {
            variant: Variant::CanonicalDeterministic,
            lr: 3e-4,
            seed: 99,
            ..TrainConfig::default()
        };
        assert_eq!(RunConfig::parse(&RunConfig::render(&c)).unwrap().train, c);
        assert_eq!(TRAIN_KEYS.len(), RunConfig::render(&c).lines().count());
    }
}
