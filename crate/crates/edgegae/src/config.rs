//! Run configuration: per-command settings resolved from built-in defaults,
//! then an optional `key = value` file, then command-line flags.
//!
//! The resolved settings can be rendered back to the same `key = value`
//! form; feeding that file to `--config` reproduces the run.

use std::path::{Path, PathBuf};

use edgegae_core::oracle::{OracleMode, EXACT_CUTOFF};
use edgegae_core::sampler::SamplingMode;
use edgegae_core::search::Strategy;

use crate::error::{read_to_string, Error, Result};

/// A setting's textual form, shared by config files, flags and the echo.
pub trait Value: Sized {
    fn parse(s: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! from_str_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|_| format!("'{s}' is not a valid {}", stringify!($t)))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
from_str_value!(usize, u64, f64);

impl Value for bool {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        match s {
            "on" | "true" | "yes" | "1" => Ok(true),
            "off" | "false" | "no" | "0" => Ok(false),
            _ => Err(format!("'{s}' is not on/off")),
        }
    }
    fn render(&self) -> String {
        if *self { "on" } else { "off" }.to_string()
    }
}

impl Value for PathBuf {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        if s.is_empty() {
            return Err("empty path".into());
        }
        Ok(PathBuf::from(s))
    }
    fn render(&self) -> String {
        self.display().to_string()
    }
}

/// Empty text means unset.
impl<T: Value> Value for Option<T> {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        if s.is_empty() {
            Ok(None)
        } else {
            T::parse(s).map(Some)
        }
    }
    fn render(&self) -> String {
        self.as_ref().map(T::render).unwrap_or_default()
    }
}

macro_rules! keyword_value {
    ($t:ty { $($word:literal => $v:expr),* $(,)? }) => {
        impl Value for $t {
            fn parse(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($word => Ok($v),)*
                    _ => Err(format!("'{s}' is not one of {}", [$($word),*].join("|"))),
                }
            }
            fn render(&self) -> String {
                $(if *self == $v { return $word.to_string(); })*
                unreachable!()
            }
        }
    };
}
keyword_value!(OracleMode { "exact" => OracleMode::Exact, "heuristic" => OracleMode::Heuristic, "auto" => OracleMode::Auto });
keyword_value!(SamplingMode { "shuffle" => SamplingMode::Shuffle, "active" => SamplingMode::Active });
keyword_value!(Strategy { "roulette" => Strategy::Roulette, "beam" => Strategy::Beam });

pub trait Settings {
    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String>;
    fn entries(&self) -> Vec<(&'static str, String)>;

    /// `key = value` lines for every setting, in declaration order.
    fn render(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Declares a settings struct with its defaults plus the matching clap
/// argument struct, whose flags are all optional overrides.
macro_rules! settings {
    ($settings:ident, $args:ident {
        $( $(#[$meta:meta])* $field:ident : $ty:ty = $default:expr ),* $(,)?
    }) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $settings {
            $(pub $field: $ty,)*
        }

        impl Default for $settings {
            fn default() -> Self {
                Self { $($field: $default,)* }
            }
        }

        impl Settings for $settings {
            fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
                match key {
                    $(stringify!($field) => self.$field = Value::parse(value)?,)*
                    _ => return Err(format!("unknown setting '{key}'")),
                }
                Ok(())
            }

            fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$((stringify!($field), Value::render(&self.$field)),)*]
            }
        }

        #[derive(Debug, Clone, Default, clap::Args)]
        pub struct $args {
            $(
                $(#[$meta])*
                #[arg(long)]
                pub $field: Option<String>,
            )*
        }

        impl $args {
            /// Flags given on the command line, as setting keys and raw values.
            pub fn overrides(&self) -> Vec<(&'static str, &str)> {
                let mut out = Vec::new();
                $(if let Some(v) = &self.$field {
                    out.push((stringify!($field), v.as_str()));
                })*
                out
            }
        }
    };
}

settings!(GenerateSettings, GenerateArgs {
    /// Smallest city count
    n_min: usize = 50,
    /// Largest city count
    n_max: usize = 500,
    /// Number of instances
    total: usize = 50_000,
    seed: u64 = 0,
    /// Reference solver: exact, heuristic or auto
    oracle: OracleMode = OracleMode::Auto,
    /// Largest size solved exactly in auto mode
    exact_cutoff: usize = EXACT_CUTOFF,
    /// Restarts of the heuristic reference solver
    restarts: usize = 50,
    /// Output dataset file
    out: Option<PathBuf> = None,
});

settings!(TrainSettings, TrainArgs {
    /// Training dataset file
    data: Option<PathBuf> = None,
    /// Total epochs to reach (including epochs already done when resuming)
    epochs: usize = 500,
    /// Batch size
    batch: usize = 32,
    /// Adam learning rate
    lr: f64 = 1e-3,
    /// Embedding width
    hidden: usize = 64,
    /// Encoder layers
    layers: usize = 4,
    /// Neighbours per node in the sparse graph
    knn: usize = 25,
    /// Layers of the output MLP
    mlp_layers: usize = 3,
    /// Gate denominator offset
    delta: f64 = 1e-20,
    /// Batch sampler: shuffle or active
    sampling: SamplingMode = SamplingMode::Shuffle,
    /// Loss weight of positive edges
    pos_weight: f64 = 1.0,
    seed: u64 = 0,
    /// Final checkpoint path
    out: Option<PathBuf> = None,
    /// Also checkpoint every this many epochs (0 disables)
    checkpoint_every: usize = 0,
    /// Loss log CSV (default: <out>.log.csv)
    log: Option<PathBuf> = None,
    /// Continue from this checkpoint; its model and optimizer settings win
    resume: Option<PathBuf> = None,
    beta1: f64 = 0.9,
    beta2: f64 = 0.999,
    /// Adam epsilon
    adam_eps: f64 = 1e-8,
});

settings!(EvalSettings, EvalArgs {
    /// Model checkpoint
    ckpt: Option<PathBuf> = None,
    /// Test dataset file
    data: Option<PathBuf> = None,
    /// Roulette samples per instance
    samples: usize = 200,
    /// Tour construction: roulette or beam
    strategy: Strategy = Strategy::Roulette,
    beam_width: usize = 5,
    /// Apply 2-opt to constructed tours (on/off)
    two_opt: bool = true,
    /// Score floor for edges absent from the heatmap
    epsilon_prob: f64 = 1e-8,
    seed: u64 = 0,
    /// Decision threshold for F1
    threshold: f64 = 0.5,
    /// Expected neighbour count; must match the checkpoint when given
    knn: Option<usize> = None,
    /// Report CSV path
    out: Option<PathBuf> = None,
});

settings!(SolveSettings, SolveArgs {
    /// Model checkpoint
    ckpt: Option<PathBuf> = None,
    /// File with the instance coordinates
    input: Option<PathBuf> = None,
    samples: usize = 200,
    strategy: Strategy = Strategy::Roulette,
    beam_width: usize = 5,
    #[arg(num_args = 0..=1, default_missing_value = "on")]
    two_opt: bool = true,
    epsilon_prob: f64 = 1e-8,
    seed: u64 = 0,
    /// Also report the gap to a reference tour
    #[arg(num_args = 0..=1, default_missing_value = "on")]
    oracle: bool = false,
    /// Solution file (default: standard output)
    out: Option<PathBuf> = None,
    /// Also write the predicted heatmap here
    heatmap_out: Option<PathBuf> = None,
});

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
/// Returns `(line number, key, value)` triples.
pub fn parse_config(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("line {}: expected 'key = value'", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Usage(format!("line {}: empty key", i + 1)));
        }
        out.push((i + 1, k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Resolves settings: defaults, then the config file, then flags.
pub fn resolve<S: Settings + Default>(file: Option<&Path>, flags: &[(&str, &str)]) -> Result<S> {
    let mut s = S::default();
    if let Some(path) = file {
        for (line, k, v) in parse_config(&read_to_string(path)?)
            .map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?
        {
            s.set(&k, &v).map_err(|e| Error::Usage(format!("{}: line {line}: {e}", path.display())))?;
        }
    }
    for (k, v) in flags {
        s.set(k, v).map_err(|e| Error::Usage(format!("--{}: {e}", k.replace('_', "-"))))?;
    }
    Ok(s)
}
