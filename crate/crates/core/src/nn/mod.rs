//! Dense and masked-autoregressive layers, initialization, and optimizers.

mod dense;
mod init;
mod made;
mod optim;

pub use dense::{mlp_forward, Activation, Mlp};
pub(crate) use dense::bind_all;
pub use init::{he_uniform, init_params, rng_from_seed, split_seed, SeededRng};
pub use made::{MadeNet, MADE_OUTPUT_SCALE, SOFTPLUS_INV_ONE};
pub use optim::{clip_global_norm, AdamState, RmspropState};
