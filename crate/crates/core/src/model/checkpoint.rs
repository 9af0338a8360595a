//! Checkpoint format: a text header (`key=value` configuration lines,
//! parameter count, `END`), the dense parameters as little-endian `f64`, then
//! the embedding table in its own header-plus-rows format, which carries the
//! node order.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::network::CshtModel;
use super::{ModelConfig, ModelError, Result};
use crate::sphere::{read_f64s, SphereEmbedding};

const MAGIC: &str = "CSHT-CHECKPOINT v1";

fn config_lines(c: &ModelConfig) -> Vec<(&'static str, String)> {
    vec![
        ("layers", c.layers.to_string()),
        ("hidden", c.hidden.to_string()),
        ("heads", c.heads.to_string()),
        ("ffn_width", c.ffn_width.to_string()),
        ("lambda", c.lambda.to_string()),
        ("learning_rate", c.learning_rate.to_string()),
        ("batch_size", c.batch_size.to_string()),
        ("max_lag", c.max_lag.to_string()),
        ("use_causal_mask", c.use_causal_mask.to_string()),
        ("use_spherical_attention", c.use_spherical_attention.to_string()),
        ("angular_cutoff", c.angular_cutoff.map_or("none".into(), |a| a.to_string())),
        ("input_noise", c.input_noise.to_string()),
        ("max_epochs", c.max_epochs.to_string()),
        ("patience", c.patience.to_string()),
        ("task", c.task.to_string()),
        ("seed", c.seed.to_string()),
    ]
}

pub fn write_checkpoint<W: Write>(model: &CshtModel, mut w: W) -> Result<()> {
    writeln!(w, "{MAGIC}")?;
    for (k, v) in config_lines(model.config()) {
        writeln!(w, "{k}={v}")?;
    }
    writeln!(w, "params={}", model.params().len())?;
    writeln!(w, "END")?;
    for p in model.params() {
        w.write_all(&p.to_le_bytes())?;
    }
    model.embedding().write_to(&mut w)?;
    Ok(())
}

fn parse<T: std::str::FromStr>(kv: &BTreeMap<String, String>, key: &str) -> Result<T> {
    kv.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| ModelError::Checkpoint(format!("missing or invalid `{key}`")))
}

pub fn read_checkpoint<R: BufRead>(mut r: R) -> Result<CshtModel> {
    let mut kv = BTreeMap::new();
    let mut line = String::new();
    let mut first = true;
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(ModelError::Checkpoint("unexpected end of header".into()));
        }
        let l = line.trim_end();
        if first {
            if l != MAGIC {
                return Err(ModelError::Checkpoint("bad magic".into()));
            }
            first = false;
            continue;
        }
        if l == "END" {
            break;
        }
        let (k, v) = l.split_once('=').ok_or_else(|| ModelError::Checkpoint(format!("bad header line `{l}`")))?;
        kv.insert(k.to_string(), v.to_string());
    }
    let cutoff = match kv.get("angular_cutoff").map(String::as_str) {
        Some("none") => None,
        _ => Some(parse(&kv, "angular_cutoff")?),
    };
    let task: String = parse(&kv, "task")?;
    let config = ModelConfig {
        layers: parse(&kv, "layers")?,
        hidden: parse(&kv, "hidden")?,
        heads: parse(&kv, "heads")?,
        ffn_width: parse(&kv, "ffn_width")?,
        lambda: parse(&kv, "lambda")?,
        learning_rate: parse(&kv, "learning_rate")?,
        batch_size: parse(&kv, "batch_size")?,
        max_lag: parse(&kv, "max_lag")?,
        use_causal_mask: parse(&kv, "use_causal_mask")?,
        use_spherical_attention: parse(&kv, "use_spherical_attention")?,
        angular_cutoff: cutoff,
        input_noise: parse(&kv, "input_noise")?,
        max_epochs: parse(&kv, "max_epochs")?,
        patience: parse(&kv, "patience")?,
        task: task.parse().map_err(ModelError::Checkpoint)?,
        seed: parse(&kv, "seed")?,
    };
    let count: usize = parse(&kv, "params")?;
    let params = read_f64s(&mut r, count)?;
    let embedding = SphereEmbedding::read_from(&mut r)?;
    CshtModel::from_parts(config, embedding, params)
}
