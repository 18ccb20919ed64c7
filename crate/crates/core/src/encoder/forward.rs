use super::feature::{DualRep, Feature};
use super::params::{Block, EncoderParams, Gradients};
use crate::error::{Error, Result};
use crate::linalg::{self, add_outer, affine, axpy, matvec_t, normalize_backward};
use crate::synthetic::{split_subclips, Clip, Frame};

/// Saved activations of one backbone pass.
#[derive(Debug, Clone)]
pub struct BackboneTrace {
    inputs: Vec<Frame>,
    acts: Vec<Vec<f64>>,
    pooled: Vec<f64>,
    pub hidden: Vec<f64>,
}

/// Saved activations of a linear-then-normalize projection.
#[derive(Debug, Clone)]
pub struct HeadTrace {
    input: Vec<f64>,
    pre_norm: f64,
    pub feature: Feature,
}

#[derive(Debug, Clone)]
pub struct ClipTrace {
    pub backbone: BackboneTrace,
    pub head: HeadTrace,
}

#[derive(Debug, Clone)]
struct DualPart {
    backbone: BackboneTrace,
    hidden: Vec<f64>,
    head: HeadTrace,
}

#[derive(Debug, Clone)]
pub struct DualTrace {
    parts: Vec<DualPart>,
    pub rep: DualRep,
}

#[derive(Debug, Clone)]
pub struct OrderTrace {
    input: Vec<f64>,
    pub logits: Vec<f64>,
}

impl EncoderParams {
    pub fn backbone_forward(&self, frames: &[Frame]) -> Result<BackboneTrace> {
        let a = &self.arch;
        if frames.is_empty() {
            return Err(Error::shape("cannot encode an empty clip"));
        }
        if let Some(f) = frames.iter().find(|f| f.len() != a.frame_dim) {
            return Err(Error::shape(format!("frame of dim {} for encoder frame_dim {}", f.len(), a.frame_dim)));
        }
        let (w1, b1) = (self.block(Block::FrameW), self.block(Block::FrameB));
        let mut pooled = vec![0.0; a.hidden_dim];
        let acts: Vec<Vec<f64>> = frames
            .iter()
            .map(|x| {
                let u: Vec<f64> = affine(w1, b1, a.hidden_dim, a.frame_dim, x).into_iter().map(f64::tanh).collect();
                axpy(1.0, &u, &mut pooled);
                u
            })
            .collect();
        let inv_t = 1.0 / frames.len() as f64;
        pooled.iter_mut().for_each(|v| *v *= inv_t);
        let hidden =
            affine(self.block(Block::TemporalW), self.block(Block::TemporalB), a.embed_dim, a.hidden_dim, &pooled);
        Ok(BackboneTrace { inputs: frames.to_vec(), acts, pooled, hidden })
    }

    /// Backbone feature `h = f(c)` (not normalized).
    pub fn encode_backbone(&self, clip: &Clip) -> Result<Vec<f64>> {
        Ok(self.backbone_forward(&clip.frames)?.hidden)
    }

    pub fn backbone_backward(&self, trace: &BackboneTrace, dh: &[f64], grads: &mut Gradients) {
        let a = &self.arch;
        add_outer(grads.block_mut(Block::TemporalW), a.embed_dim, a.hidden_dim, dh, &trace.pooled);
        axpy(1.0, dh, grads.block_mut(Block::TemporalB));
        let dm = matvec_t(self.block(Block::TemporalW), a.embed_dim, a.hidden_dim, dh);
        let inv_t = 1.0 / trace.inputs.len() as f64;
        for (x, u) in trace.inputs.iter().zip(&trace.acts) {
            let da: Vec<f64> = dm.iter().zip(u).map(|(g, ui)| g * inv_t * (1.0 - ui * ui)).collect();
            add_outer(grads.block_mut(Block::FrameW), a.hidden_dim, a.frame_dim, &da, x);
            axpy(1.0, &da, grads.block_mut(Block::FrameB));
        }
    }

    fn head_forward(&self, w: Block, b: Block, rows: usize, input: &[f64]) -> Result<HeadTrace> {
        let cols = input.len();
        let v = affine(self.block(w), self.block(b), rows, cols, input);
        let (z, n) = linalg::normalize(&v)?;
        Ok(HeadTrace { input: input.to_vec(), pre_norm: n, feature: Feature::from_unit(z)? })
    }

    fn head_backward(&self, w: Block, b: Block, trace: &HeadTrace, dz: &[f64], grads: &mut Gradients) -> Vec<f64> {
        let rows = dz.len();
        let cols = trace.input.len();
        let dv = normalize_backward(trace.feature.as_slice(), trace.pre_norm, dz);
        add_outer(grads.block_mut(w), rows, cols, &dv, &trace.input);
        axpy(1.0, &dv, grads.block_mut(b));
        matvec_t(self.block(w), rows, cols, &dv)
    }

    pub fn clip_head_forward(&self, h: &[f64]) -> Result<HeadTrace> {
        if h.len() != self.arch.embed_dim {
            return Err(Error::shape(format!("clip head expects dim {}, got {}", self.arch.embed_dim, h.len())));
        }
        self.head_forward(Block::ClipW, Block::ClipB, self.arch.proj_dim, h)
    }

    /// Clip projection `z = f_c(h)`, unit norm.
    pub fn project_clip(&self, h: &[f64]) -> Result<Feature> {
        Ok(self.clip_head_forward(h)?.feature)
    }

    /// Returns `dL/dh`.
    pub fn clip_head_backward(&self, trace: &HeadTrace, dz: &[f64], grads: &mut Gradients) -> Vec<f64> {
        self.head_backward(Block::ClipW, Block::ClipB, trace, dz, grads)
    }

    pub fn clip_forward(&self, clip: &Clip) -> Result<ClipTrace> {
        let backbone = self.backbone_forward(&clip.frames)?;
        let head = self.clip_head_forward(&backbone.hidden)?;
        Ok(ClipTrace { backbone, head })
    }

    pub fn clip_backward(&self, trace: &ClipTrace, dz: &[f64], grads: &mut Gradients) {
        let dh = self.clip_head_backward(&trace.head, dz, grads);
        self.backbone_backward(&trace.backbone, &dh, grads);
    }

    pub fn dual_forward(&self, clip: &Clip) -> Result<DualTrace> {
        let a = &self.arch;
        let subclips = split_subclips(clip, a.segments)?;
        let parts = subclips
            .iter()
            .map(|sc| {
                let backbone = self.backbone_forward(&sc.frames)?;
                let hidden: Vec<f64> = affine(
                    self.block(Block::DualHiddenW),
                    self.block(Block::DualHiddenB),
                    a.dual_hidden_dim,
                    a.embed_dim,
                    &backbone.hidden,
                )
                .into_iter()
                .map(f64::tanh)
                .collect();
                let head = self.head_forward(Block::DualOutW, Block::DualOutB, a.proj_dim, &hidden)?;
                Ok(DualPart { backbone, hidden, head })
            })
            .collect::<Result<Vec<_>>>()?;
        let rep = DualRep::new(parts.iter().map(|p| p.head.feature.clone()).collect())?;
        Ok(DualTrace { parts, rep })
    }

    /// Dual projection: one unit feature per sub-clip, in temporal order.
    pub fn project_dual(&self, clip: &Clip) -> Result<DualRep> {
        Ok(self.dual_forward(clip)?.rep)
    }

    pub fn dual_backward(&self, trace: &DualTrace, d_parts: &[Vec<f64>], grads: &mut Gradients) {
        let a = &self.arch;
        debug_assert_eq!(d_parts.len(), trace.parts.len());
        for (part, dz) in trace.parts.iter().zip(d_parts) {
            let dg = self.head_backward(Block::DualOutW, Block::DualOutB, &part.head, dz, grads);
            let da: Vec<f64> = dg.iter().zip(&part.hidden).map(|(g, u)| g * (1.0 - u * u)).collect();
            add_outer(grads.block_mut(Block::DualHiddenW), a.dual_hidden_dim, a.embed_dim, &da, &part.backbone.hidden);
            axpy(1.0, &da, grads.block_mut(Block::DualHiddenB));
            let dh = matvec_t(self.block(Block::DualHiddenW), a.dual_hidden_dim, a.embed_dim, &da);
            self.backbone_backward(&part.backbone, &dh, grads);
        }
    }

    /// Order-prediction logits from the concatenated parts of a dual
    /// representation, in the order they appear in the (shuffled) clip.
    pub fn order_forward(&self, rep: &DualRep) -> Result<OrderTrace> {
        let a = &self.arch;
        if a.order_classes == 0 {
            return Err(Error::config("architecture has no order-prediction head"));
        }
        let input: Vec<f64> = rep.parts.iter().flat_map(|p| p.as_slice().iter().copied()).collect();
        if input.len() != a.segments * a.proj_dim {
            return Err(Error::shape("order head input size mismatch"));
        }
        let logits = affine(self.block(Block::OrderW), self.block(Block::OrderB), a.order_classes, input.len(), &input);
        Ok(OrderTrace { input, logits })
    }

    /// Returns `dL/d(parts)`.
    pub fn order_backward(&self, trace: &OrderTrace, dlogits: &[f64], grads: &mut Gradients) -> Vec<Vec<f64>> {
        let a = &self.arch;
        let cols = trace.input.len();
        add_outer(grads.block_mut(Block::OrderW), a.order_classes, cols, dlogits, &trace.input);
        axpy(1.0, dlogits, grads.block_mut(Block::OrderB));
        matvec_t(self.block(Block::OrderW), a.order_classes, cols, dlogits)
            .chunks(a.proj_dim)
            .map(<[f64]>::to_vec)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;
    use crate::encoder::Architecture;
    use crate::synthetic::shuffle_subclips;

    fn small_arch() -> Architecture {
        Architecture {
            frame_dim: 5,
            hidden_dim: 6,
            embed_dim: 4,
            proj_dim: 3,
            dual_hidden_dim: 4,
            segments: 2,
            order_classes: 2,
        }
    }

    fn random_clip(seed: u64, len: usize, dim: usize) -> Clip {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Clip {
            video_id: 0,
            start_frame: 0,
            stride: 1,
            frames: (0..len).map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()).collect(),
        }
    }

    #[test]
    fn zero_params_give_zero_hidden() {
        let p = EncoderParams::zeros(small_arch()).unwrap();
        let h = p.encode_backbone(&random_clip(0, 4, 5)).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backbone_deterministic_and_shape_checked() {
        let p = EncoderParams::init(small_arch(), 3).unwrap();
        let c = random_clip(1, 4, 5);
        assert_eq!(p.encode_backbone(&c).unwrap(), p.encode_backbone(&c).unwrap());
        assert!(matches!(p.encode_backbone(&random_clip(1, 4, 6)), Err(Error::Shape(_))));
    }

    #[test]
    fn clip_projection_is_unit_and_identity_preserving() {
        let mut p = EncoderParams::init(small_arch(), 3).unwrap();
        let z = p.project_clip(&[0.3, -2.0, 1.0, 0.1]).unwrap();
        assert!((linalg::norm(z.as_slice()) - 1.0).abs() < 1e-12);

        let arch = Architecture { embed_dim: 3, ..small_arch() };
        p = EncoderParams::zeros(arch).unwrap();
        for i in 0..3 {
            p.block_mut(Block::ClipW)[i * 3 + i] = 1.0;
        }
        let x = [0.6, 0.0, 0.8];
        assert_eq!(p.project_clip(&x).unwrap().as_slice(), &x);
        assert!(matches!(p.project_clip(&[0.0, 0.0, 0.0]), Err(Error::ZeroNorm)));
    }

    #[test]
    fn dual_identical_halves_give_equal_parts() {
        let p = EncoderParams::init(small_arch(), 3).unwrap();
        let mut c = random_clip(2, 4, 5);
        c.frames[2] = c.frames[0].clone();
        c.frames[3] = c.frames[1].clone();
        let r = p.project_dual(&c).unwrap();
        assert_eq!(r.parts[0], r.parts[1]);
    }

    #[test]
    fn dual_is_permutation_equivariant() {
        let p = EncoderParams::init(small_arch(), 4).unwrap();
        let c = random_clip(5, 6, 5);
        let (s, _) = shuffle_subclips(&c, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let r = p.project_dual(&c).unwrap();
        let rs = p.project_dual(&s).unwrap();
        assert_eq!(rs.parts[0], r.parts[1]);
        assert_eq!(rs.parts[1], r.parts[0]);
    }
}
