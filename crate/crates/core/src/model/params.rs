//! Parameter layout and initialization.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{AttentionVariant, ConditionVariant, ModelConfig};
use crate::tensor::{ParamId, ParamStore, Tensor};

/// Dense affine map `x W + b` with `W: [in, out]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttnProj {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FfnParams {
    pub up: Linear,
    pub down: Linear,
}

/// Stream-specific projections for joint variate attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariateAttnParams {
    pub x: AttnProj,
    pub c: AttnProj,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockParams {
    /// `D -> 9D` (or `18D` with per-stream modulation), absent without AdaLN.
    pub modulation: Option<Linear>,
    /// Shared between streams.
    pub time_attn: AttnProj,
    pub variate_attn: Option<VariateAttnParams>,
    pub cross_attn: Option<AttnProj>,
    /// Shared between streams.
    pub ffn: FfnParams,
}

/// Where each learnable tensor lives in the [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub patch_x: Linear,
    pub patch_c: Option<Linear>,
    /// `(L'+H) -> D`, shared across covariates.
    pub variate_embed: Option<Linear>,
    /// Whole-series target token for the iTransformer variant.
    pub series_x: Option<Linear>,
    /// Projection of the time encoding into a token, for token-based conditioning.
    pub time_token: Option<Linear>,
    /// Learned `[N, D]` table added along the patch axis.
    pub pos: Option<ParamId>,
    pub blocks: Vec<BlockParams>,
    /// `D -> 2D` producing (β, γ) for the output head.
    pub final_mod: Option<Linear>,
    pub head: Linear,
}

/// Chunks of a block modulation output, in order.
pub const MOD_CHUNKS: usize = 9;

struct Builder<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl Builder<'_> {
    fn uniform(&mut self, shape: &[usize], bound: f64) -> Tensor {
        let mut t = Tensor::zeros(shape);
        for v in t.data_mut() {
            *v = if bound > 0.0 {
                self.rng.random_range(-bound..bound)
            } else {
                0.0
            };
        }
        t
    }

    fn linear(&mut self, name: &str, d_in: usize, d_out: usize) -> Linear {
        let bound = 1.0 / libm::sqrt(d_in.max(1) as f64);
        let w = self.uniform(&[d_in, d_out], bound);
        let b = self.uniform(&[d_out], bound);
        Linear {
            w: self.store.add(format!("{name}.w"), w),
            b: self.store.add(format!("{name}.b"), b),
            d_in,
            d_out,
        }
    }

    fn zero_linear(&mut self, name: &str, d_in: usize, d_out: usize) -> Linear {
        Linear {
            w: self.store.add(format!("{name}.w"), Tensor::zeros(&[d_in, d_out])),
            b: self.store.add(format!("{name}.b"), Tensor::zeros(&[d_out])),
            d_in,
            d_out,
        }
    }

    fn attn(&mut self, name: &str, d: usize) -> AttnProj {
        AttnProj {
            q: self.linear(&format!("{name}.q"), d, d),
            k: self.linear(&format!("{name}.k"), d, d),
            v: self.linear(&format!("{name}.v"), d, d),
            o: self.linear(&format!("{name}.o"), d, d),
        }
    }

    /// AdaLN modulation: α chunks zero (gated identity), γ bias one, β random.
    fn modulation(&mut self, name: &str, d: usize, groups: usize) -> Linear {
        let lin = self.linear(name, d, groups * d);
        let width = groups * d;
        for chunk in 0..groups {
            let role = chunk % 3;
            let cols = chunk * d..(chunk + 1) * d;
            if role == 0 {
                let w = self.store.get_mut(lin.w).data_mut();
                for r in 0..d {
                    w[r * width + cols.start..r * width + cols.end].fill(0.0);
                }
                self.store.get_mut(lin.b).data_mut()[cols].fill(0.0);
            } else if role == 2 {
                self.store.get_mut(lin.b).data_mut()[cols].fill(1.0);
            }
        }
        lin
    }
}

/// Role of chunk `i` of a modulation output: 0 = α (gate), 1 = β (shift), 2 = γ (scale).
pub fn modulation_role(chunk: usize) -> usize {
    chunk % 3
}

impl Layout {
    /// Allocates and initializes every parameter required by `cfg`.
    pub fn build(cfg: &ModelConfig, seed: u64) -> (Layout, ParamStore) {
        let mut store = ParamStore::new();
        let mut b = Builder {
            store: &mut store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let d = cfg.d_model;
        let t = cfg.total_len();
        let n = cfg.n_patches();
        let p = cfg.patch_len;
        let c = cfg.n_cov;
        let itrans = cfg.attention == AttentionVariant::Itransformer;

        let patch_x = b.linear("patch_x", p, d);
        let patch_c = cfg.has_cov_stream().then(|| b.linear("patch_c", p, d));
        let variate_embed = (c > 0).then(|| b.linear("variate_embed", t, d));
        let series_x = itrans.then(|| b.linear("series_x", t, d));
        let time_token = (!cfg.uses_adaln()).then(|| b.linear("time_token", d, d));
        let pos = (!itrans).then(|| {
            let table = b.uniform(&[n, d], 0.02);
            b.store.add("pos", table)
        });

        let groups = if cfg.per_stream_modulation {
            2 * MOD_CHUNKS
        } else {
            MOD_CHUNKS
        };
        let mut blocks = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let pre = format!("blocks.{l}");
            let modulation = cfg
                .uses_adaln()
                .then(|| b.modulation(&format!("{pre}.modulation"), d, groups));
            let time_attn = b.attn(&format!("{pre}.time_attn"), d);
            let variate_attn = (cfg.attention == AttentionVariant::Dits && cfg.condition == ConditionVariant::Dits)
                .then(|| VariateAttnParams {
                    x: b.attn(&format!("{pre}.variate_attn.x"), d),
                    c: b.attn(&format!("{pre}.variate_attn.c"), d),
                });
            let cross_attn = (cfg.attention == AttentionVariant::Timexer && c > 0
                || cfg.condition == ConditionVariant::Cross)
                .then(|| b.attn(&format!("{pre}.cross_attn"), d));
            let ffn = FfnParams {
                up: b.linear(&format!("{pre}.ffn.up"), d, cfg.d_ff()),
                down: b.linear(&format!("{pre}.ffn.down"), cfg.d_ff(), d),
            };
            blocks.push(BlockParams {
                modulation,
                time_attn,
                variate_attn,
                cross_attn,
                ffn,
            });
        }
        let final_mod = cfg.uses_adaln().then(|| {
            // (β, γ): β random, γ bias one
            let lin = b.linear("final_mod", d, 2 * d);
            b.store.get_mut(lin.b).data_mut()[d..].fill(1.0);
            lin
        });
        let head_out = if itrans { t } else { p };
        let head = b.zero_linear("head", d, head_out);
        let layout = Layout {
            patch_x,
            patch_c,
            variate_embed,
            series_x,
            time_token,
            pos,
            blocks,
            final_mod,
            head,
        };
        (layout, store)
    }
}

/// Names of all parameters whose path contains `fragment`.
pub fn params_matching<'a>(store: &'a ParamStore, fragment: &'a str) -> impl Iterator<Item = &'a str> {
    store.names().filter(move |n| n.contains(fragment))
}

/// Parameter count per component (`blocks.*.<part>` aggregated across layers).
pub fn count_by_component(store: &ParamStore) -> Vec<(String, usize)> {
    let mut out: Vec<(String, usize)> = Vec::new();
    for e in store.entries() {
        let mut parts = e.name.split('.');
        let key = match parts.next() {
            Some("blocks") => {
                parts.next();
                format!("blocks.*.{}", parts.next().unwrap_or(""))
            }
            Some(k) => String::from(k),
            None => e.name.clone(),
        };
        match out.iter_mut().find(|(k, _)| *k == key) {
            Some((_, n)) => *n += e.value.len(),
            None => out.push((key, e.value.len())),
        }
    }
    out
}
