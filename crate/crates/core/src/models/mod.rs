//! Outer convolutional autoencoder, inner autoencoder variants, the
//! Hamiltonian head and every loss term.

mod losses;
mod outer;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::checkpoint::{load_params, save_params};
use crate::numcore::{Activation, Bound, Graph, Mlp, NodeId, ParamSet, Rng, Tensor};
use crate::render::Geometry;

pub use losses::{
    clamp_logvar, hamilton_residual, hamilton_residual_from_grad, kl_divergence, reconstruction_loss, reparameterize,
    reparameterize_with, second_order_penalty, ResidualPoint, LOGVAR_BOUND,
};
pub use outer::{OuterAE, OUTER_CHANNELS, OUTER_LATENT};

/// Width of the compact representation the inner models consume.
pub const COMPACT_WIDTH: usize = 64;
pub const INNER_HIDDEN: usize = 32;
pub const HNN_HIDDEN: usize = 64;
/// Latent width of the variational variants.
pub const VARIATIONAL_LATENT: usize = 10;
/// Index convention for paired latents, recorded in checkpoint sidecars.
pub const PAIRING: &str = "q_i = z[i], p_i = z[L/2 + i]";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Baseline,
    PiAe,
    PiVae,
    HpiVae,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Baseline, Variant::PiAe, Variant::PiVae, Variant::HpiVae];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::PiAe => "pi-ae",
            Variant::PiVae => "pi-vae",
            Variant::HpiVae => "hpi-vae",
        }
    }

    pub fn is_variational(self) -> bool {
        matches!(self, Variant::PiVae | Variant::HpiVae)
    }

    /// Whether the loss couples consecutive samples.
    pub fn is_second_order(self) -> bool {
        self != Variant::Baseline
    }

    pub fn has_head(self) -> bool {
        self == Variant::HpiVae
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config {
                key: "train.variant".into(),
                msg: format!("unknown variant `{s}` (expected baseline, pi-ae, pi-vae or hpi-vae)"),
            })
    }
}

/// Encoder `in→32→out`, decoder `latent→32→in`, optional Hamiltonian head
/// `latent→64→64→1`. Parameters live under `enc.`, `dec.` and `hnn.`.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerModel {
    pub variant: Variant,
    pub input_width: usize,
    pub latent_width: usize,
    encoder: Mlp,
    decoder: Mlp,
    head: Option<Mlp>,
}

/// Graph nodes of one encoded batch.
#[derive(Clone, Copy, Debug)]
pub struct Encoded {
    pub mu: NodeId,
    /// Clamped log-variance (variational variants only).
    pub logvar: Option<NodeId>,
    pub logvar_clipped: bool,
}

impl InnerModel {
    pub fn new(variant: Variant, input_width: usize, latent_width: usize) -> Result<Self> {
        if input_width == 0 || latent_width == 0 {
            return Err(Error::Contract("inner model widths must be positive".into()));
        }
        if variant.is_second_order() && !latent_width.is_multiple_of(2) {
            return Err(Error::Contract(format!(
                "{variant} pairs positions with momenta and needs an even latent width, got {latent_width}"
            )));
        }
        let enc_out = if variant.is_variational() {
            2 * latent_width
        } else {
            latent_width
        };
        Ok(Self {
            variant,
            input_width,
            latent_width,
            encoder: Mlp::new(
                vec![input_width, INNER_HIDDEN, enc_out],
                Activation::Tanh,
                Activation::Identity,
            ),
            decoder: Mlp::new(
                vec![latent_width, INNER_HIDDEN, input_width],
                Activation::Tanh,
                Activation::Identity,
            ),
            head: variant.has_head().then(|| {
                Mlp::new(
                    vec![latent_width, HNN_HIDDEN, HNN_HIDDEN, 1],
                    Activation::Tanh,
                    Activation::Identity,
                )
            }),
        })
    }

    pub fn head(&self) -> Option<&Mlp> {
        self.head.as_ref()
    }

    pub fn init(&self, rng: &mut Rng) -> ParamSet {
        let mut p = ParamSet::new();
        p.extend_prefixed("enc", self.encoder.init(rng));
        p.extend_prefixed("dec", self.decoder.init(rng));
        if let Some(h) = &self.head {
            p.extend_prefixed("hnn", h.init(rng));
        }
        p
    }

    pub fn encode(&self, g: &mut Graph, bound: &Bound, x: NodeId) -> Result<Encoded> {
        let (_, width) = g.value(x).dims2()?;
        if width != self.input_width {
            return Err(Error::Contract(format!(
                "inner model expects {}-wide inputs, got {width}",
                self.input_width
            )));
        }
        let out = self.encoder.bind(bound, "enc")?.forward(g, x)?;
        if !self.variant.is_variational() {
            return Ok(Encoded {
                mu: out,
                logvar: None,
                logvar_clipped: false,
            });
        }
        let l = self.latent_width;
        let mu = g.slice_cols(out, 0, l)?;
        let raw = g.slice_cols(out, l, 2 * l)?;
        let (logvar, clipped) = clamp_logvar(g, raw)?;
        Ok(Encoded {
            mu,
            logvar: Some(logvar),
            logvar_clipped: clipped,
        })
    }

    pub fn decode(&self, g: &mut Graph, bound: &Bound, z: NodeId) -> Result<NodeId> {
        self.decoder.bind(bound, "dec")?.forward(g, z)
    }

    /// Hamiltonian head evaluated on a `B×latent` batch, `B×1`.
    pub fn hamiltonian(&self, g: &mut Graph, bound: &Bound, z: NodeId) -> Result<NodeId> {
        let head = self
            .head
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("{} has no Hamiltonian head", self.variant)))?;
        head.bind(bound, "hnn")?.forward(g, z)
    }

    /// Posterior means (or deterministic codes) for a `B×in` batch.
    pub fn posterior_means(&self, params: &ParamSet, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = params.bind_frozen(&mut g);
        let xi = g.constant(x.clone());
        let e = self.encode(&mut g, &bound, xi)?;
        Ok(g.value(e.mu).clone())
    }

    /// Head values `H(z)` for a `B×latent` batch.
    pub fn hamiltonian_values(&self, params: &ParamSet, z: &Tensor) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let bound = params.bind_frozen(&mut g);
        let zi = g.constant(z.clone());
        let h = self.hamiltonian(&mut g, &bound, zi)?;
        Ok(g.value(h).data().to_vec())
    }
}

/// Loss weights; everything but β is 1 unless configured otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// Weight on the reconstruction term of the variational variants.
    pub beta: f64,
    pub kl: f64,
    pub second_order: f64,
    pub hamilton: f64,
    /// Frame interval used by the finite differences, in frame units.
    pub dt: f64,
    pub residual_point: ResidualPoint,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            beta: 1.0,
            kl: 1.0,
            second_order: 1.0,
            hamilton: 1.0,
            dt: 1.0,
            residual_point: ResidualPoint::Start,
        }
    }
}

/// Scalar values of each loss term (zero where the variant has none).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub recon: f64,
    pub kl: f64,
    pub second_order: f64,
    pub hamilton: f64,
    pub total: f64,
}

impl LossTerms {
    /// Weighted total of the terms `variant` uses.
    pub fn combine(variant: Variant, recon: f64, kl: f64, second_order: f64, hamilton: f64, w: &LossWeights) -> Self {
        let mut t = LossTerms {
            recon,
            ..Default::default()
        };
        let mut total = recon;
        if variant.is_variational() {
            total = w.beta * recon;
            t.kl = kl;
            total += w.kl * kl;
        }
        if variant.is_second_order() {
            t.second_order = second_order;
            total += w.second_order * second_order;
        }
        if variant.has_head() {
            t.hamilton = hamilton;
            total += w.hamilton * hamilton;
        }
        t.total = total;
        t
    }
}

/// A batch of compact representations and, for second-order variants, the
/// representations one frame later.
#[derive(Clone, Debug)]
pub struct InnerBatch {
    pub x: Tensor,
    pub x_next: Option<Tensor>,
}

#[derive(Clone, Copy, Debug)]
pub struct LossOutput {
    pub total: NodeId,
    pub terms: LossTerms,
    pub logvar_clipped: bool,
}

/// Builds the variant's loss on `g`. Variational variants sample `z` with
/// `rng`, or decode `μ` when `rng` is `None`. The second-order and Hamilton
/// terms use `μ`.
pub fn total_loss(
    g: &mut Graph,
    model: &InnerModel,
    bound: &Bound,
    batch: &InnerBatch,
    weights: &LossWeights,
    rng: Option<&mut Rng>,
) -> Result<LossOutput> {
    let variant = model.variant;
    if variant.is_second_order() {
        match &batch.x_next {
            Some(n) if n.shape() == batch.x.shape() => {}
            Some(n) => {
                return Err(Error::Contract(format!(
                    "successor batch {:?} does not match {:?}",
                    n.shape(),
                    batch.x.shape()
                )))
            }
            None => {
                return Err(Error::Contract(format!("{variant} needs consecutive-sample pairs")));
            }
        }
    }
    let x = g.constant(batch.x.clone());
    let enc = model.encode(g, bound, x)?;
    let z = match (enc.logvar, rng) {
        (Some(lv), Some(rng)) => reparameterize(g, enc.mu, lv, rng)?,
        _ => enc.mu,
    };
    let recon_pred = model.decode(g, bound, z)?;
    let recon = reconstruction_loss(g, recon_pred, x)?;
    let mut total = if variant.is_variational() {
        g.scale(recon, weights.beta)?
    } else {
        recon
    };
    let mut kl_v = 0.0;
    let mut so_v = 0.0;
    let mut ham_v = 0.0;
    let mut clipped = enc.logvar_clipped;
    if let Some(lv) = enc.logvar {
        let kl = kl_divergence(g, enc.mu, lv)?;
        kl_v = g.value(kl).item()?;
        let kl = g.scale(kl, weights.kl)?;
        total = g.add(total, kl)?;
    }
    if variant.is_second_order() {
        let xn = g.constant(batch.x_next.clone().expect("checked above"));
        let next = model.encode(g, bound, xn)?;
        clipped |= next.logvar_clipped;
        let so = second_order_penalty(g, enc.mu, next.mu, weights.dt)?;
        so_v = g.value(so).item()?;
        let so = g.scale(so, weights.second_order)?;
        total = g.add(total, so)?;
        if let Some(head) = model.head() {
            let h = head.bind(bound, "hnn")?;
            let r = hamilton_residual(g, &h, enc.mu, next.mu, weights.dt, weights.residual_point)?;
            ham_v = g.value(r).item()?;
            let r = g.scale(r, weights.hamilton)?;
            total = g.add(total, r)?;
        }
    }
    let recon_v = g.value(recon).item()?;
    let mut terms = LossTerms::combine(variant, recon_v, kl_v, so_v, ham_v, weights);
    terms.total = g.value(total).item()?;
    Ok(LossOutput {
        total,
        terms,
        logvar_clipped: clipped,
    })
}

/// JSON sidecar stored next to a parameter checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelMeta {
    Inner {
        variant: Variant,
        input_width: usize,
        latent_width: usize,
        pairing: String,
    },
    Outer {
        geometry: Geometry,
        latent_width: usize,
    },
}

impl ModelMeta {
    pub fn for_inner(model: &InnerModel) -> Self {
        ModelMeta::Inner {
            variant: model.variant,
            input_width: model.input_width,
            latent_width: model.latent_width,
            pairing: PAIRING.into(),
        }
    }

    pub fn inner_model(&self) -> Result<InnerModel> {
        match self {
            ModelMeta::Inner {
                variant,
                input_width,
                latent_width,
                pairing,
            } => {
                if pairing != PAIRING {
                    return Err(Error::Contract(format!("unsupported latent pairing `{pairing}`")));
                }
                InnerModel::new(*variant, *input_width, *latent_width)
            }
            ModelMeta::Outer { .. } => Err(Error::Contract("checkpoint holds an outer model".into())),
        }
    }

    pub fn outer_model(&self) -> Result<OuterAE> {
        match self {
            ModelMeta::Outer { geometry, .. } => OuterAE::new(*geometry),
            ModelMeta::Inner { .. } => Err(Error::Contract("checkpoint holds an inner model".into())),
        }
    }
}

/// `model.bin` → `model.json`.
pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("json")
}

/// Writes parameters and their sidecar.
pub fn save_model(checkpoint: &Path, meta: &ModelMeta, params: &ParamSet) -> Result<()> {
    save_params(checkpoint, params)?;
    fs::write(sidecar_path(checkpoint), serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

pub fn load_model(checkpoint: &Path) -> Result<(ModelMeta, ParamSet)> {
    let side = sidecar_path(checkpoint);
    let text = fs::read_to_string(&side)?;
    let meta: ModelMeta = serde_json::from_str(&text).map_err(|e| Error::parse(&side, e.to_string()))?;
    Ok((meta, load_params(checkpoint)?))
}
