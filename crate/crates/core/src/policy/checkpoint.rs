//! JSON checkpoint: a format tag, the layer-size header of each network and
//! the flat parameter vectors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Mlp, PolicyParams};
use crate::error::{Error, Result};

const FORMAT: &str = "wa3c-checkpoint/1";

#[derive(Serialize, Deserialize)]
struct Network {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u64,
    actor: Network,
    critic: Network,
}

pub fn save_checkpoint(params: &PolicyParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ckpt = Checkpoint {
        format: FORMAT.into(),
        version: params.version,
        actor: Network {
            sizes: params.actor.sizes().to_vec(),
            params: params.actor.params().to_vec(),
        },
        critic: Network {
            sizes: params.critic.sizes().to_vec(),
            params: params.critic.params().to_vec(),
        },
    };
    let text = serde_json::to_string(&ckpt).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads and validates a checkpoint. When `expect` is given as
/// `(observation length, action count)` the networks must match it.
pub fn load_checkpoint(path: impl AsRef<Path>, expect: Option<(usize, usize)>) -> Result<PolicyParams> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    let shape_err = |msg: String| Error::Shape(format!("{}: {msg}", path.display()));
    if ckpt.format != FORMAT {
        return Err(shape_err(format!("unknown checkpoint format {:?}", ckpt.format)));
    }
    let actor = Mlp::from_parts(ckpt.actor.sizes, ckpt.actor.params).map_err(|e| shape_err(format!("actor: {e}")))?;
    let critic =
        Mlp::from_parts(ckpt.critic.sizes, ckpt.critic.params).map_err(|e| shape_err(format!("critic: {e}")))?;
    let params = PolicyParams::from_networks(actor, critic, ckpt.version).map_err(|e| shape_err(e.to_string()))?;
    if let Some((obs, actions)) = expect {
        if params.obs_len() != obs || params.action_count() != actions {
            return Err(shape_err(format!(
                "checkpoint maps {} inputs to {} actions, environment needs {obs} -> {actions}",
                params.obs_len(),
                params.action_count()
            )));
        }
    }
    Ok(params)
}
