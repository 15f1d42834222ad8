use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::RelationSchema;

use super::params::ModelParams;
use super::train::TrainConfig;

pub const CHECKPOINT_FORMAT: &str = "handshake-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Self-describing model file. The vocabulary travels inside the encoder parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Checkpoint<F> {
    pub format: String,
    pub version: u32,
    pub scalar: String,
    pub schema: RelationSchema,
    pub train_config: Option<TrainConfig>,
    pub params: ModelParams<F>,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
    scalar: String,
}

impl<F: Scalar> Checkpoint<F> {
    pub fn new(schema: RelationSchema, train_config: Option<TrainConfig>, params: ModelParams<F>) -> Result<Self> {
        let ckpt = Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            scalar: F::NAME.into(),
            schema,
            train_config,
            params,
        };
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let header: Header =
            serde_json::from_str(s).map_err(|e| Error::Checkpoint(format!("unreadable header: {e}")))?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("not a checkpoint (format {:?})", header.format)));
        }
        if header.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", header.version)));
        }
        if header.scalar != F::NAME {
            return Err(Error::Checkpoint(format!("stored as {}, requested {}", header.scalar, F::NAME)));
        }
        let ckpt: Self = serde_json::from_str(s).map_err(|e| Error::Checkpoint(e.to_string()))?;
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    /// Checks every tensor shape against the stored config and schema.
    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let bad = |what: String| Err(Error::Checkpoint(format!("inconsistent shapes: {what}")));
        let cfg = p.config;
        let emb = &p.encoder.embedding;
        if emb.rows != p.encoder.vocab.len() || emb.cols != cfg.embed_dim || emb.data.len() != emb.rows * emb.cols {
            return bad("embedding".into());
        }
        match (&p.encoder.mixer, cfg.mixer_hidden) {
            (None, None) => {}
            (Some(m), Some(k)) => {
                for r in [&m.forward, &m.backward] {
                    let ok = r.input.rows == k
                        && r.input.cols == cfg.embed_dim
                        && r.input.data.len() == k * cfg.embed_dim
                        && r.recurrent.rows == k
                        && r.recurrent.cols == k
                        && r.recurrent.data.len() == k * k
                        && r.bias.len() == k;
                    if !ok {
                        return bad("context mixer".into());
                    }
                }
            }
            _ => return bad("context mixer presence".into()),
        }
        let e = p.encoder.output_dim();
        let kw = &p.kernel.weight;
        if kw.rows != cfg.pair_dim
            || kw.cols != 2 * e
            || kw.data.len() != kw.rows * kw.cols
            || p.kernel.bias.len() != cfg.pair_dim
        {
            return bad("kernel".into());
        }
        if p.taggers.heads.len() != 2 * self.schema.len() + 1 {
            return bad(format!("{} tagger heads for {} relations", p.taggers.heads.len(), self.schema.len()));
        }
        for (s, h) in p.taggers.heads.iter().enumerate() {
            if h.weight.rows != 3
                || h.weight.cols != cfg.pair_dim
                || h.weight.data.len() != 3 * cfg.pair_dim
                || h.bias.len() != 3
            {
                return bad(format!("tagger {s}"));
            }
        }
        if let Some(t) = p.first_non_finite() {
            return Err(Error::Numeric { tensor: t });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::{ModelConfig, Vocab};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn ckpt<F: Scalar>() -> Checkpoint<F> {
        let toks: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let cfg = ModelConfig { embed_dim: 4, mixer_hidden: Some(3), pair_dim: 5, max_len: 50 };
        let schema = RelationSchema::new(["r0", "r1"]).unwrap();
        let params =
            ModelParams::init(cfg, Arc::new(Vocab::build([&toks])), 2, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        Checkpoint::new(schema, Some(TrainConfig { seed: 7, ..TrainConfig::default() }), params).unwrap()
    }

    #[test]
    fn exact_roundtrip_both_precisions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let c64 = ckpt::<f64>();
        c64.save(&path).unwrap();
        assert_eq!(Checkpoint::<f64>::load(&path).unwrap(), c64);
        let c32 = ckpt::<f32>();
        assert_eq!(Checkpoint::<f32>::from_json(&c32.to_json().unwrap()).unwrap(), c32);
    }

    #[test]
    fn header_is_checked() {
        let json = ckpt::<f64>().to_json().unwrap();
        assert!(matches!(Checkpoint::<f32>::from_json(&json), Err(Error::Checkpoint(_))));
        let wrong = json.replacen("\"version\":1", "\"version\":99", 1);
        assert!(matches!(Checkpoint::<f64>::from_json(&wrong), Err(Error::Checkpoint(_))));
        assert!(Checkpoint::<f64>::from_json("{}").is_err());
    }

    #[test]
    fn schema_size_must_match_heads() {
        let mut c = ckpt::<f64>();
        c.schema = RelationSchema::new(["only"]).unwrap();
        assert!(c.validate().is_err());
    }
}
