use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::trace::{CandidatePatches, CandidateRecord, CandidateTrace, Refinement, StageRects, TRACE_FORMAT_VERSION};
use super::{diagonal_rows, rotation_rows, scale_rows, translation_rows, PipelineConfig};
use crate::checkpoint::{encode_checkpoint, hash_json, write_checkpoint, Checkpoint};
use crate::data::MultiModalImage;
use crate::error::{contract_err, Error, Result};
use crate::geometry::GraspRect;
use crate::nn::{Dense, ParamStore, ResNetTrunk, TrunkConfig};
use crate::stn::{affine_grid_batch, compose_batch, grid_sample, transform_to_grasp, AffineTransform2D};
use crate::tensor::Tensor;

/// Independently trainable parts of the model. Parameter names start with
/// the block name followed by a dot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Stage1,
    Stage2,
    Stage3,
    Classifier,
    Baseline,
}

impl Block {
    pub const ALL: [Block; 5] = [
        Block::Stage1,
        Block::Stage2,
        Block::Stage3,
        Block::Classifier,
        Block::Baseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::Stage1 => "stage1",
            Block::Stage2 => "stage2",
            Block::Stage3 => "stage3",
            Block::Classifier => "classifier",
            Block::Baseline => "baseline",
        }
    }

    pub fn owns(self, param: &str) -> bool {
        param
            .strip_prefix(self.name())
            .is_some_and(|rest| rest.starts_with('.'))
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Block {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Block::ALL
            .into_iter()
            .find(|b| b.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown block {s:?}")))
    }
}

/// A residual trunk followed by a zero-initialized dense output layer.
#[derive(Debug, Clone)]
struct Head {
    trunk: ResNetTrunk,
    out: Dense,
}

impl Head {
    fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        block: Block,
        in_channels: usize,
        cfg: &TrunkConfig,
        input_size: usize,
        bias: Vec<f64>,
    ) -> Result<Self> {
        let name = block.name();
        let trunk = ResNetTrunk::new(store, rng, &format!("{name}.trunk"), in_channels, cfg)?;
        let fan_in = cfg.feature_dim(input_size, input_size)?;
        let out = Dense::zero_init(store, &format!("{name}.head"), fan_in, bias)?;
        Ok(Head { trunk, out })
    }

    fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        self.out.forward(store, &self.trunk.forward(store, x)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Output {
    /// Normalized `(tx, ty)` per candidate.
    pub locations: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Output {
    /// Radians in `[−π/2, π/2)`.
    pub thetas: Vec<f64>,
}

impl Stage2Output {
    pub fn degrees(&self) -> Vec<f64> {
        self.thetas.iter().map(|t| t.to_degrees()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage3Output {
    pub refinements: Vec<Refinement>,
}

/// All differentiable intermediate values of one batched forward pass.
/// Rows are ordered image-major: row `b · K + k` is candidate `k` of image `b`.
#[derive(Debug, Clone)]
pub struct PipelineForward {
    pub batch: usize,
    pub locations: Tensor,
    pub theta: Tensor,
    pub refinement: Tensor,
    pub translation: Tensor,
    pub rotation: Tensor,
    pub scaling: Tensor,
    pub stage1_patches: Tensor,
    pub rotated_patches: Tensor,
    pub final_patches: Tensor,
    pub scores: Tensor,
}

/// Parameters and architecture of the detector and the baseline head.
#[derive(Debug, Clone)]
pub struct GraspModel {
    pub config: PipelineConfig,
    pub params: ParamStore,
    stage1: Head,
    stage2: Head,
    stage3: Head,
    classifier: Head,
    baseline: Option<Head>,
}

fn wrap_half_turn(theta: f64) -> f64 {
    use std::f64::consts::{FRAC_PI_2, PI};
    if theta >= FRAC_PI_2 {
        theta - PI
    } else if theta < -FRAC_PI_2 {
        theta + PI
    } else {
        theta
    }
}

fn row6(t: &Tensor, g: usize) -> Result<AffineTransform2D> {
    let v = &t.values()[6 * g..6 * g + 6];
    AffineTransform2D::from_array([v[0], v[1], v[2], v[3], v[4], v[5]])
}

fn stack(parts: Vec<Tensor>) -> Result<Tensor> {
    if parts.len() == 1 {
        return Ok(parts.into_iter().next().expect("one part"));
    }
    let refs: Vec<&Tensor> = parts.iter().collect();
    Tensor::concat_rows(&refs)
}

impl GraspModel {
    /// Builds a model with He-initialized trunks (seeded) and
    /// zero-initialized output layers whose biases make every stage emit the
    /// identity transform and the classifier emit 0.5.
    pub fn new(config: PipelineConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let c = config.in_channels;
        let k = config.num_candidates;
        let stage1 = Head::new(&mut store, &mut rng, Block::Stage1, c, &config.stage1, config.image_size, vec![0.0; 2 * k])?;
        let stage2 = Head::new(&mut store, &mut rng, Block::Stage2, c, &config.stage2, config.stage_patch, vec![1.0, 0.0])?;
        let stage3 = Head::new(&mut store, &mut rng, Block::Stage3, c, &config.stage3, config.stage_patch, vec![0.0; 4])?;
        let classifier = Head::new(&mut store, &mut rng, Block::Classifier, c, &config.classifier, config.final_patch, vec![0.0])?;
        let baseline = match &config.baseline {
            Some(b) => Some(Head::new(
                &mut store,
                &mut rng,
                Block::Baseline,
                c,
                b,
                config.image_size,
                vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
            )?),
            None => None,
        };
        Ok(GraspModel {
            config,
            params: store,
            stage1,
            stage2,
            stage3,
            classifier,
            baseline,
        })
    }

    pub fn has_baseline(&self) -> bool {
        self.baseline.is_some()
    }

    pub fn config_hash(&self) -> Result<String> {
        hash_json(&self.config)
    }

    pub fn checkpoint_bytes(&self) -> Result<Vec<u8>> {
        encode_checkpoint(&self.config, &self.params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_checkpoint(path, &self.config, &self.params)
    }

    /// Rebuilds a model from a checkpoint. With `expected` given, the stored
    /// configuration must hash identically, otherwise [`Error::Mismatch`].
    pub fn from_checkpoint(ck: &Checkpoint, expected: Option<&PipelineConfig>) -> Result<Self> {
        let config: PipelineConfig = serde_json::from_value(ck.manifest.config.clone())
            .map_err(|e| Error::Mismatch(format!("checkpoint config unreadable: {e}")))?;
        if hash_json(&config)? != ck.manifest.config_hash {
            return Err(Error::Mismatch("checkpoint config hash does not match its config".into()));
        }
        if let Some(exp) = expected {
            if hash_json(exp)? != ck.manifest.config_hash {
                return Err(Error::Mismatch(
                    "checkpoint was produced with a different model configuration".into(),
                ));
            }
        }
        let mut model = GraspModel::new(config, 0).map_err(|e| Error::Mismatch(e.to_string()))?;
        ck.restore_into(&mut model.params)?;
        Ok(model)
    }

    pub fn load(path: &Path, expected: Option<&PipelineConfig>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::read(path)?, expected)
    }

    fn check_image(&self, image: &MultiModalImage) -> Result<()> {
        let s = self.config.image_size;
        if image.height != s || image.width != s {
            return Err(Error::Input(format!(
                "model expects {s}x{s} images, got {}x{}",
                image.width, image.height
            )));
        }
        Ok(())
    }

    /// Stage-1 network on `[B, C, H, W]`: locations `[B·K, 2]` bounded by
    /// `loc_scale · tanh`.
    pub fn locate(&self, images: &Tensor) -> Result<Tensor> {
        let b = images.shape()[0];
        let z = self.stage1.forward(&self.params, images)?;
        z.tanh()?
            .scale(self.config.loc_scale)?
            .reshape(&[b * self.config.num_candidates, 2])
    }

    /// Stage-2 network: raw `(u, v)` `[G, 2]` and `θ = atan2(v, u)/2` `[G, 1]`.
    pub fn orient(&self, patches: &Tensor) -> Result<(Tensor, Tensor)> {
        let uv = self.stage2.forward(&self.params, patches)?;
        let (u, v) = (uv.narrow_cols(0, 1)?, uv.narrow_cols(1, 1)?);
        let theta = v.atan2(&u)?.scale(0.5)?;
        Ok((uv, theta))
    }

    /// Stage-3 network: `(sw, sh, dx, dy)` `[G, 4]`. Scales lie in
    /// `(scale_min, scale_max)` and equal 1 for a zero pre-activation;
    /// offsets are `max_offset · tanh`.
    pub fn refine(&self, patches: &Tensor) -> Result<Tensor> {
        let cfg = &self.config;
        let raw = self.stage3.forward(&self.params, patches)?;
        let scales = raw
            .narrow_cols(0, 2)?
            .soft_bound(1.0 - cfg.scale_min, cfg.scale_max - 1.0)?
            .add_scalar(1.0)?;
        let offsets = raw.narrow_cols(2, 2)?.tanh()?.scale(cfg.max_offset)?;
        Tensor::concat_cols(&[&scales, &offsets])
    }

    /// Classifier: graspability scores `[G, 1]` in `(0, 1)`.
    pub fn score(&self, patches: &Tensor) -> Result<Tensor> {
        self.classifier.forward(&self.params, patches)?.sigmoid()
    }

    /// Samples `size × size` patches. `images[b]` is `[1, C, H, W]`; rows
    /// `b·per .. (b+1)·per` of `transforms` sample image `b`.
    pub fn sample(images: &[Tensor], transforms: &Tensor, per: usize, size: usize) -> Result<Tensor> {
        let parts = images
            .iter()
            .enumerate()
            .map(|(b, img)| {
                let t = transforms.narrow_rows(b * per, per)?;
                grid_sample(img, &affine_grid_batch(&t, size, size)?)
            })
            .collect::<Result<Vec<_>>>()?;
        stack(parts)
    }

    /// Rows mapping the stage patch lattice onto its field of view.
    pub fn stage_view(&self, g: usize) -> Tensor {
        let f = self.config.stage_scale();
        diagonal_rows(g, f, f)
    }

    /// Rows mapping the classifier patch lattice onto the canonical rectangle.
    pub fn canonical_view(&self, g: usize) -> Tensor {
        let s = self.config.image_size as f64;
        diagonal_rows(g, self.config.canonical_h / s, self.config.canonical_w / s)
    }

    /// Runs every stage on a batch of images.
    pub fn forward(&self, images: &[&MultiModalImage]) -> Result<PipelineForward> {
        if images.is_empty() {
            return Err(contract_err!("forward needs at least one image"));
        }
        for im in images {
            self.check_image(im)?;
        }
        let cfg = &self.config;
        let (b, k) = (images.len(), cfg.num_candidates);
        let g = b * k;
        let tensors: Vec<Tensor> = images.iter().map(|im| im.to_tensor()).collect();
        let batch = stack(tensors.clone())?;

        let locations = self.locate(&batch)?;
        let translation = translation_rows(&locations)?;
        let view1 = compose_batch(&self.stage_view(g), &translation)?;
        let stage1_patches = Self::sample(&tensors, &view1, k, cfg.stage_patch)?;

        let (_, theta) = self.orient(&stage1_patches)?;
        let rotation = rotation_rows(&theta)?;
        let tr = compose_batch(&rotation, &translation)?;
        let view2 = compose_batch(&self.stage_view(g), &tr)?;
        let rotated_patches = Self::sample(&tensors, &view2, k, cfg.stage_patch)?;

        let refinement = self.refine(&rotated_patches)?;
        let scaling = scale_rows(&refinement, cfg.stage_scale())?;
        let trs = compose_batch(&scaling, &tr)?;
        let view3 = compose_batch(&self.canonical_view(g), &trs)?;
        let final_patches = Self::sample(&tensors, &view3, k, cfg.final_patch)?;

        let scores = self.score(&final_patches)?;
        Ok(PipelineForward {
            batch: b,
            locations,
            theta,
            refinement,
            translation,
            rotation,
            scaling,
            stage1_patches,
            rotated_patches,
            final_patches,
            scores,
        })
    }

    /// Transform chain `[T, R, S]` of forward row `g`.
    pub fn chain(fwd: &PipelineForward, g: usize) -> Result<[AffineTransform2D; 3]> {
        Ok([
            row6(&fwd.translation, g)?,
            row6(&fwd.rotation, g)?,
            row6(&fwd.scaling, g)?,
        ])
    }

    /// Decodes a (prefix of a) transform chain into image pixels.
    pub fn decode(&self, chain: &[AffineTransform2D]) -> Result<GraspRect> {
        let s = self.config.image_size as f64;
        transform_to_grasp(chain, s, s, self.config.canonical_w, self.config.canonical_h)
    }

    /// Decoded rectangle of every forward row.
    pub fn decode_all(&self, fwd: &PipelineForward) -> Result<Vec<GraspRect>> {
        (0..fwd.locations.shape()[0])
            .map(|g| self.decode(&Self::chain(fwd, g)?))
            .collect()
    }

    pub fn stage1_locate(&self, image: &MultiModalImage) -> Result<Stage1Output> {
        self.check_image(image)?;
        let loc = self.locate(&image.to_tensor())?;
        Ok(Stage1Output {
            locations: loc.values().chunks(2).map(|p| [p[0], p[1]]).collect(),
        })
    }

    /// `patches`: `[G, C, P, P]` stage-1 patches.
    pub fn stage2_orient(&self, patches: &Tensor) -> Result<Stage2Output> {
        let (uv, theta) = self.orient(patches)?;
        for (i, p) in uv.values().chunks(2).enumerate() {
            if p[0] == 0.0 && p[1] == 0.0 {
                warn!("stage-2 candidate {i}: (u, v) = (0, 0), angle taken as 0");
            }
        }
        Ok(Stage2Output {
            thetas: theta.values().iter().map(|&t| wrap_half_turn(t)).collect(),
        })
    }

    /// `patches`: `[G, C, P, P]` rotated patches.
    pub fn stage3_refine(&self, patches: &Tensor) -> Result<Stage3Output> {
        let r = self.refine(patches)?;
        Ok(Stage3Output {
            refinements: r
                .values()
                .chunks(4)
                .map(|v| Refinement {
                    sw: v[0],
                    sh: v[1],
                    dx: v[2],
                    dy: v[3],
                })
                .collect(),
        })
    }

    /// `patches`: `[G, C, P, P]` classifier patches.
    pub fn classify_patch(&self, patches: &Tensor) -> Result<Vec<f64>> {
        Ok(self.score(patches)?.values().to_vec())
    }

    fn check_rect(&self, r: &GraspRect) -> Result<()> {
        let cfg = &self.config;
        let s = cfg.image_size as f64;
        let tol = 1e-9;
        let ok_center = (0.0..=s).contains(&r.x) && (0.0..=s).contains(&r.y);
        let ok_theta = (-90.0..90.0).contains(&r.theta);
        let within = |v: f64, c: f64| v >= c * cfg.scale_min - tol && v <= c * cfg.scale_max + tol;
        if !(ok_center && ok_theta && within(r.w, cfg.canonical_w) && within(r.h, cfg.canonical_h)) {
            return Err(contract_err!("decoded rectangle {r:?} violates the bounded-head ranges"));
        }
        Ok(())
    }

    /// Runs all stages for every candidate and returns the highest-scoring
    /// rectangle (ties go to the lowest index) with the full trace.
    pub fn detect(&self, image: &MultiModalImage) -> Result<(GraspRect, CandidateTrace)> {
        let fwd = self.forward(&[image])?;
        let k = self.config.num_candidates;
        let s = self.config.image_size as f64;
        let scores = fwd.scores.values();
        let mut candidates = Vec::with_capacity(k);
        for g in 0..k {
            let chain = Self::chain(&fwd, g)?;
            let stage_rects = StageRects {
                stage1: self.decode(&chain[..1])?,
                stage2: self.decode(&chain[..2])?,
                stage3: self.decode(&chain)?,
            };
            let rect = stage_rects.stage3;
            self.check_rect(&rect)?;
            let score = scores[g];
            if !(0.0..=1.0).contains(&score) {
                return Err(contract_err!("score {score} outside [0, 1]"));
            }
            let loc = &fwd.locations.values()[2 * g..2 * g + 2];
            let r = &fwd.refinement.values()[4 * g..4 * g + 4];
            let patch = |t: &Tensor| -> Result<Tensor> {
                let row = t.select_row(g)?.detach();
                row.reshape(&t.shape()[1..])
            };
            candidates.push(CandidateRecord {
                index: g,
                location: [loc[0], loc[1]],
                location_px: [(loc[0] + 1.0) * s / 2.0, (loc[1] + 1.0) * s / 2.0],
                theta_deg: wrap_half_turn(fwd.theta.values()[g]).to_degrees(),
                refinement: Refinement {
                    sw: r[0],
                    sh: r[1],
                    dx: r[2],
                    dy: r[3],
                },
                score,
                transforms: chain,
                stage_rects,
                rect,
                patches: Some(CandidatePatches {
                    stage1: patch(&fwd.stage1_patches)?.detach(),
                    rotated: patch(&fwd.rotated_patches)?.detach(),
                    final_patch: patch(&fwd.final_patches)?.detach(),
                }),
            });
        }
        let mut winner = 0;
        for g in 1..k {
            if scores[g] > scores[winner] {
                winner = g;
            }
        }
        let rect = candidates[winner].rect;
        Ok((
            rect,
            CandidateTrace {
                format_version: TRACE_FORMAT_VERSION,
                source: image.meta.source.clone(),
                image_size: self.config.image_size,
                candidates,
                winner,
            },
        ))
    }

    /// Baseline head on `[B, C, H, W]`: locations `[B, 2]` (tanh), angles
    /// `[B, 1]` and scales `[B, 2]` `(sw, sh)` with the stage-3 mapping.
    pub fn baseline_forward(&self, images: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let head = self
            .baseline
            .as_ref()
            .ok_or_else(|| Error::Config("model has no baseline head".into()))?;
        let cfg = &self.config;
        let z = head.forward(&self.params, images)?;
        let loc = z.narrow_cols(0, 2)?.tanh()?;
        let theta = z.narrow_cols(3, 1)?.atan2(&z.narrow_cols(2, 1)?)?.scale(0.5)?;
        let scales = z
            .narrow_cols(4, 2)?
            .soft_bound(1.0 - cfg.scale_min, cfg.scale_max - 1.0)?
            .add_scalar(1.0)?;
        Ok((loc, theta, scales))
    }

    /// Direct regression of one rectangle from the whole image.
    pub fn regress_baseline(&self, image: &MultiModalImage) -> Result<GraspRect> {
        self.check_image(image)?;
        let (loc, theta, scales) = self.baseline_forward(&image.to_tensor())?;
        let (l, t, sc) = (loc.values(), theta.values()[0], scales.values());
        let chain = [
            AffineTransform2D::translation(l[0], l[1]),
            AffineTransform2D::rotation(t),
            AffineTransform2D::scale_translation(sc[1], sc[0], 0.0, 0.0),
        ];
        let rect = self.decode(&chain)?;
        self.check_rect(&rect)?;
        Ok(rect)
    }
}
