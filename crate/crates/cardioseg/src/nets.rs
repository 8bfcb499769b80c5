//! Network architectures.
//!
//! * [`Segmenter`]: encoder/decoder with a dilated-residual bottleneck and
//!   two outputs per slice: a softmax probability map and a surface point
//!   cloud regressed from the bottleneck features.
//! * [`PatchGan`]: fully convolutional patch discriminator (5 stride-2
//!   convolutions) for probability maps and self-information maps.
//! * [`PointNet`]: order-invariant point-set classifier used as the
//!   discriminator on predicted point clouds.

use candle_core::Tensor;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};
use crate::nn::{
    leaky_relu, max_pool2x2, relu, sigmoid, softmax, upsample2, BatchNorm, BnLayout, Conv2d,
    ConvCfg, Init, Linear, ParamStore,
};

// ---------------------------------------------------------------------------
// Specs
// ---------------------------------------------------------------------------

/// Multi-task segmenter hyper-parameters. Encoder widths are
/// `base_width * [1, 2, 4, 8]`; the bottleneck keeps `8 * base_width`
/// channels across three residual blocks with dilations 1, 2 and 4.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmenterSpec {
    pub in_channels: usize,
    pub n_classes: usize,
    pub base_width: usize,
    pub n_points: usize,
    /// Square input side; must be a multiple of 16 and at least 32 (the
    /// cloud head needs a non-empty feature map after its stride-2 conv).
    pub image_size: usize,
}

impl Default for SegmenterSpec {
    fn default() -> Self {
        Self { in_channels: 3, n_classes: 4, base_width: 32, n_points: 300, image_size: 224 }
    }
}

impl SegmenterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.base_width == 0 || self.n_points == 0 {
            return Err(CoreError::InvalidArg("widths/points must be positive".into()));
        }
        if self.n_classes < 2 {
            return Err(CoreError::InvalidArg("need at least 2 classes".into()));
        }
        if !self.image_size.is_multiple_of(16) || self.image_size < 32 {
            return Err(CoreError::Shape(format!(
                "image_size {} must be a multiple of 16 and >= 32",
                self.image_size
            )));
        }
        Ok(())
    }

    fn latent_side(&self) -> usize {
        self.image_size / 16
    }

    /// Spatial side after the cloud head's 6x6 stride-2 pad-2 conv.
    fn cloud_side(&self) -> usize {
        (self.latent_side() + 2 * 2 - 6) / 2 + 1
    }
}

/// Patch discriminator: kernel-4 stride-2 pad-1 convolutions of the given
/// widths with LeakyReLU(0.2) between them and a sigmoid on the final
/// (width-1) map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGanSpec {
    pub in_channels: usize,
    pub widths: Vec<usize>,
}

impl PatchGanSpec {
    pub fn new(in_channels: usize) -> Self {
        Self { in_channels, widths: vec![64, 128, 256, 512, 1] }
    }

    /// Same layer count, all widths scaled down by `div` (minimum 1); the
    /// final 1-channel layer is kept.
    pub fn scaled(in_channels: usize, div: usize) -> Self {
        let mut s = Self::new(in_channels);
        for w in s.widths.iter_mut().take(4) {
            *w = (*w / div).max(1);
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 {
            return Err(CoreError::InvalidArg("in_channels must be positive".into()));
        }
        if self.widths.is_empty() {
            return Err(CoreError::InvalidArg("need at least one conv layer".into()));
        }
        if *self.widths.last().unwrap() != 1 {
            return Err(CoreError::InvalidArg("final layer must have width 1".into()));
        }
        Ok(())
    }
}

/// Point-set discriminator derived from one width knob `w` (64 recovers the
/// classic layout 64/128/1024 with 512/256 heads): shared layers
/// `in -> w -> 2w -> 16w`, global max, head `16w -> 8w -> 4w -> n_out`.
/// The input transform is always on; the feature transform is optional.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointNetSpec {
    pub in_dim: usize,
    pub width: usize,
    pub feature_transform: bool,
    pub n_out: usize,
}

impl Default for PointNetSpec {
    fn default() -> Self {
        Self { in_dim: 3, width: 64, feature_transform: true, n_out: 2 }
    }
}

impl PointNetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.width == 0 || self.n_out < 2 {
            return Err(CoreError::InvalidArg(
                "point net needs in_dim, width >= 1 and n_out >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// Any network spec, for parameter counting and checkpoint fingerprints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NetSpec {
    Segmenter(SegmenterSpec),
    PatchGan(PatchGanSpec),
    PointNet(PointNetSpec),
}

/// SHA-256 of the canonical JSON encoding; stored in checkpoints so a loader
/// can refuse mismatched architectures.
pub fn spec_hash(spec: &NetSpec) -> String {
    let json = serde_json::to_string(spec).expect("specs serialize");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Exact trainable-scalar count for a spec, computed in closed form (no
/// tensors are allocated). Cross-checked against built stores in tests.
pub fn count_parameters(spec: &NetSpec) -> usize {
    match spec {
        NetSpec::Segmenter(s) => {
            let b = s.base_width;
            let rb = |cin: usize, cout: usize| {
                let convs = cin * cout * 9 + cout + cout * cout * 9 + cout;
                let bns = 4 * cout;
                let skip = if cin != cout { cin * cout + cout } else { 0 };
                convs + bns + skip
            };
            let enc = rb(s.in_channels, b) + rb(b, 2 * b) + rb(2 * b, 4 * b) + rb(4 * b, 8 * b);
            let bott = 3 * rb(8 * b, 8 * b);
            let dec = rb(16 * b, 4 * b) + rb(8 * b, 2 * b) + rb(4 * b, b) + rb(2 * b, b);
            let head = b * s.n_classes + s.n_classes;
            let pc_conv = 8 * b * 4 * b * 36 + 4 * b;
            let fc_in = 4 * b * s.cloud_side() * s.cloud_side();
            let pc_fc = fc_in * 3 * s.n_points + 3 * s.n_points;
            enc + bott + dec + head + pc_conv + pc_fc
        }
        NetSpec::PatchGan(s) => {
            let mut prev = s.in_channels;
            let mut total = 0;
            for &w in &s.widths {
                total += prev * w * 16 + w;
                prev = w;
            }
            total
        }
        NetSpec::PointNet(s) => {
            let w = s.width;
            let lin = |i: usize, o: usize| i * o + o;
            let bn = |c: usize| 2 * c;
            let tnet = |k: usize| {
                lin(k, w) + bn(w)
                    + lin(w, 2 * w) + bn(2 * w)
                    + lin(2 * w, 16 * w) + bn(16 * w)
                    + lin(16 * w, 8 * w) + bn(8 * w)
                    + lin(8 * w, 4 * w) + bn(4 * w)
                    + lin(4 * w, k * k)
            };
            let shared = lin(s.in_dim, w) + bn(w)
                + lin(w, 2 * w) + bn(2 * w)
                + lin(2 * w, 16 * w) + bn(16 * w);
            let head = lin(16 * w, 8 * w) + bn(8 * w)
                + lin(8 * w, 4 * w) + bn(4 * w)
                + lin(4 * w, s.n_out);
            let ft = if s.feature_transform { tnet(w) } else { 0 };
            tnet(s.in_dim) + ft + shared + head
        }
    }
}

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

struct ResBlock {
    conv1: Conv2d,
    bn1: BatchNorm,
    conv2: Conv2d,
    bn2: BatchNorm,
    skip: Option<Conv2d>,
}

impl ResBlock {
    fn new(
        ps: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        dilation: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let cfg = ConvCfg { stride: 1, padding: dilation, dilation };
        let conv1 = Conv2d::new(ps, &format!("{name}/conv1"), cin, cout, 3, cfg, rng)?;
        let bn1 = BatchNorm::new(ps, &format!("{name}/bn1"), cout, BnLayout::Conv, rng)?;
        let conv2 = Conv2d::new(ps, &format!("{name}/conv2"), cout, cout, 3, cfg, rng)?;
        let bn2 = BatchNorm::new(ps, &format!("{name}/bn2"), cout, BnLayout::Conv, rng)?;
        let skip = if cin != cout {
            Some(Conv2d::new(
                ps,
                &format!("{name}/skip"),
                cin,
                cout,
                1,
                ConvCfg::default(),
                rng,
            )?)
        } else {
            None
        };
        Ok(Self { conv1, bn1, conv2, bn2, skip })
    }

    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let h = relu(&self.bn1.forward(&self.conv1.forward(x)?, train)?)?;
        let h = self.bn2.forward(&self.conv2.forward(&h)?, train)?;
        let s = match &self.skip {
            Some(conv) => conv.forward(x)?,
            None => x.clone(),
        };
        relu(&(h + s)?)
    }
}

// ---------------------------------------------------------------------------
// Segmenter
// ---------------------------------------------------------------------------

/// Both outputs of one segmenter forward pass.
pub struct SegOutputs {
    /// [B, n_classes, H, W]; softmax over the class dim.
    pub prob: Tensor,
    /// [B, n_points, 3]; sigmoid coordinates in (0, 1).
    pub cloud: Tensor,
}

pub struct Segmenter {
    pub spec: SegmenterSpec,
    enc: Vec<ResBlock>,
    bott: Vec<ResBlock>,
    dec: Vec<ResBlock>,
    head: Conv2d,
    pc_conv: Conv2d,
    pc_fc: Linear,
}

impl Segmenter {
    pub fn new(ps: &mut ParamStore, spec: &SegmenterSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let b = spec.base_width;
        let enc_w = [b, 2 * b, 4 * b, 8 * b];
        let mut enc = Vec::with_capacity(4);
        let mut cin = spec.in_channels;
        for (i, &w) in enc_w.iter().enumerate() {
            enc.push(ResBlock::new(ps, &format!("enc{i}"), cin, w, 1, rng)?);
            cin = w;
        }
        let mut bott = Vec::with_capacity(3);
        for (i, d) in [1usize, 2, 4].into_iter().enumerate() {
            bott.push(ResBlock::new(ps, &format!("bott{i}"), 8 * b, 8 * b, d, rng)?);
        }
        let dec_io = [(16 * b, 4 * b), (8 * b, 2 * b), (4 * b, b), (2 * b, b)];
        let mut dec = Vec::with_capacity(4);
        for (i, &(ci, co)) in dec_io.iter().enumerate() {
            dec.push(ResBlock::new(ps, &format!("dec{i}"), ci, co, 1, rng)?);
        }
        let head = Conv2d::new(ps, "head", b, spec.n_classes, 1, ConvCfg::default(), rng)?;
        let pc_conv = Conv2d::new(
            ps,
            "cloud/conv",
            8 * b,
            4 * b,
            6,
            ConvCfg { stride: 2, padding: 2, dilation: 1 },
            rng,
        )?;
        let fc_in = 4 * b * spec.cloud_side() * spec.cloud_side();
        // Zero-initialised so coordinates start at sigmoid(0) = 0.5; a random
        // init at this fan-in saturates the sigmoid (exact 0/1 in f32) and
        // kills the head's gradient before training begins.
        let w_fc =
            ps.param("cloud/fc/weight", &[fc_in, 3 * spec.n_points], Init::Const(0.0), rng)?;
        let b_fc = ps.param("cloud/fc/bias", &[3 * spec.n_points], Init::Const(0.0), rng)?;
        let pc_fc = Linear::from_parts(w_fc, b_fc);
        Ok(Self { spec: spec.clone(), enc, bott, dec, head, pc_conv, pc_fc })
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Result<SegOutputs> {
        let (bsz, c, h, w) = x.dims4().map_err(|_| {
            CoreError::Shape(format!("expected [B,C,H,W] input, got {:?}", x.dims()))
        })?;
        let s = self.spec.image_size;
        if c != self.spec.in_channels || h != s || w != s {
            return Err(CoreError::Shape(format!(
                "input [{bsz},{c},{h},{w}] does not match [{},{s},{s}]",
                self.spec.in_channels
            )));
        }

        let mut skips = Vec::with_capacity(4);
        let mut cur = x.clone();
        for block in &self.enc {
            let e = block.forward(&cur, train)?;
            cur = max_pool2x2(&e)?;
            skips.push(e);
        }
        for block in &self.bott {
            cur = block.forward(&cur, train)?;
        }
        let z = cur.clone();
        for (block, skip) in self.dec.iter().zip(skips.iter().rev()) {
            let up = upsample2(&cur)?;
            cur = block.forward(&Tensor::cat(&[&up, skip], 1)?, train)?;
        }
        let logits = self.head.forward(&cur)?;
        let prob = softmax(&logits, 1)?;

        let pc = relu(&self.pc_conv.forward(&z)?)?;
        let flat = pc.flatten_from(1)?;
        let cloud = sigmoid(&self.pc_fc.forward(&flat)?)?
            .reshape((bsz, self.spec.n_points, 3))?;
        Ok(SegOutputs { prob, cloud })
    }
}

// ---------------------------------------------------------------------------
// Patch discriminator
// ---------------------------------------------------------------------------

pub struct PatchGan {
    pub spec: PatchGanSpec,
    convs: Vec<Conv2d>,
}

impl PatchGan {
    pub fn new(ps: &mut ParamStore, spec: &PatchGanSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let cfg = ConvCfg { stride: 2, padding: 1, dilation: 1 };
        let mut convs = Vec::with_capacity(spec.widths.len());
        let mut cin = spec.in_channels;
        for (i, &w) in spec.widths.iter().enumerate() {
            convs.push(Conv2d::new(ps, &format!("conv{i}"), cin, w, 4, cfg, rng)?);
            cin = w;
        }
        Ok(Self { spec: spec.clone(), convs })
    }

    /// [B, C, H, W] -> patch probability map [B, 1, H/2^L, W/2^L] in (0, 1).
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut cur = x.clone();
        let last = self.convs.len() - 1;
        for (i, conv) in self.convs.iter().enumerate() {
            cur = conv.forward(&cur)?;
            if i != last {
                cur = leaky_relu(&cur, 0.2)?;
            }
        }
        sigmoid(&cur)
    }
}

// ---------------------------------------------------------------------------
// Point-set discriminator
// ---------------------------------------------------------------------------

struct PointMlp {
    lin: Linear,
    bn: BatchNorm,
}

impl PointMlp {
    fn new(
        ps: &mut ParamStore,
        name: &str,
        i: usize,
        o: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            lin: Linear::new(ps, name, i, o, rng)?,
            bn: BatchNorm::new(ps, &format!("{name}/bn"), o, BnLayout::Points, rng)?,
        })
    }

    fn forward(&self, x: &Tensor, train: bool, act: bool) -> Result<Tensor> {
        let h = self.bn.forward(&self.lin.forward(x)?, train)?;
        if act {
            relu(&h)
        } else {
            Ok(h)
        }
    }
}

/// Learns a k x k alignment matrix from the point set; initialized at the
/// identity (zero final weight, identity bias).
struct TNet {
    k: usize,
    shared: Vec<PointMlp>,
    head: Vec<PointMlp>,
    out: Linear,
}

impl TNet {
    fn new(ps: &mut ParamStore, name: &str, k: usize, w: usize, rng: &mut impl Rng) -> Result<Self> {
        let shared = vec![
            PointMlp::new(ps, &format!("{name}/s0"), k, w, rng)?,
            PointMlp::new(ps, &format!("{name}/s1"), w, 2 * w, rng)?,
            PointMlp::new(ps, &format!("{name}/s2"), 2 * w, 16 * w, rng)?,
        ];
        let head = vec![
            PointMlp::new(ps, &format!("{name}/h0"), 16 * w, 8 * w, rng)?,
            PointMlp::new(ps, &format!("{name}/h1"), 8 * w, 4 * w, rng)?,
        ];
        let w_out = ps.param(
            &format!("{name}/out/weight"),
            &[4 * w, k * k],
            Init::Const(0.0),
            rng,
        )?;
        let mut ident = vec![0.0f64; k * k];
        for i in 0..k {
            ident[i * k + i] = 1.0;
        }
        let b_out = ps.param_with(&format!("{name}/out/bias"), ident, &[k * k])?;
        Ok(Self { k, shared, head, out: Linear::from_parts(w_out, b_out) })
    }

    /// [B, N, k] -> [B, k, k].
    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let mut h = x.clone();
        for m in &self.shared {
            h = m.forward(&h, train, true)?;
        }
        let g = h.max(1)?;
        let mut f = g;
        for m in &self.head {
            // Head BN sees [B, C]; insert a singleton point dim.
            f = m
                .forward(&f.unsqueeze(1)?, train, true)?
                .squeeze(1)?;
        }
        let b = x.dims3()?.0;
        self.out.forward(&f)?.reshape((b, self.k, self.k)).map_err(Into::into)
    }
}

pub struct PointNet {
    pub spec: PointNetSpec,
    tnet_in: TNet,
    tnet_feat: Option<TNet>,
    mlp1: PointMlp,
    mlp2: PointMlp,
    mlp3: PointMlp,
    fc1: PointMlp,
    fc2: PointMlp,
    out: Linear,
}

impl PointNet {
    pub fn new(ps: &mut ParamStore, spec: &PointNetSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let w = spec.width;
        let tnet_in = TNet::new(ps, "tnet_in", spec.in_dim, w, rng)?;
        let mlp1 = PointMlp::new(ps, "mlp1", spec.in_dim, w, rng)?;
        let tnet_feat = if spec.feature_transform {
            Some(TNet::new(ps, "tnet_feat", w, w, rng)?)
        } else {
            None
        };
        let mlp2 = PointMlp::new(ps, "mlp2", w, 2 * w, rng)?;
        let mlp3 = PointMlp::new(ps, "mlp3", 2 * w, 16 * w, rng)?;
        let fc1 = PointMlp::new(ps, "fc1", 16 * w, 8 * w, rng)?;
        let fc2 = PointMlp::new(ps, "fc2", 8 * w, 4 * w, rng)?;
        let out = Linear::new(ps, "out", 4 * w, spec.n_out, rng)?;
        Ok(Self { spec: spec.clone(), tnet_in, tnet_feat, mlp1, mlp2, mlp3, fc1, fc2, out })
    }

    /// [B, N, in_dim] -> class probabilities [B, n_out] (softmax). Column 1
    /// is read as "probability the cloud comes from the source domain".
    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (_b, _n, d) = x.dims3().map_err(|_| {
            CoreError::Shape(format!("expected [B,N,D] cloud, got {:?}", x.dims()))
        })?;
        if d != self.spec.in_dim {
            return Err(CoreError::Shape(format!(
                "cloud dim {d} != spec in_dim {}",
                self.spec.in_dim
            )));
        }
        let max_abs: f64 = x
            .abs()?
            .max(2)?
            .max(1)?
            .max(0)?
            .to_dtype(candle_core::DType::F64)?
            .to_scalar()?;
        if !max_abs.is_finite() {
            return Err(CoreError::NonFinite("point cloud input".into()));
        }

        let t = self.tnet_in.forward(x, train)?;
        let mut h = x.matmul(&t)?;
        h = self.mlp1.forward(&h, train, true)?;
        if let Some(ft) = &self.tnet_feat {
            let tf = ft.forward(&h, train)?;
            h = h.matmul(&tf)?;
        }
        h = self.mlp2.forward(&h, train, true)?;
        h = self.mlp3.forward(&h, train, false)?;
        let g = h.max(1)?;
        let f = self.fc1.forward(&g.unsqueeze(1)?, train, true)?;
        let f = self.fc2.forward(&f, train, true)?.squeeze(1)?;
        softmax(&self.out.forward(&f)?, 1)
    }

    /// Probability of the source class, shape [B, 1].
    pub fn source_prob(probs: &Tensor) -> Result<Tensor> {
        Ok(probs.narrow(1, 1, 1)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamStore;
    use crate::rng::rng_for;
    use candle_core::{DType, Device, Tensor};

    fn ps() -> ParamStore {
        ParamStore::new(DType::F32)
    }

    #[test]
    fn segmenter_shapes_and_simplex() {
        let spec =
            SegmenterSpec { base_width: 2, image_size: 64, ..SegmenterSpec::default() };
        let mut store = ps();
        let mut rng = rng_for(1, "seg");
        let net = Segmenter::new(&mut store, &spec, &mut rng).unwrap();
        let x = Tensor::rand(0.0f32, 1.0, (2, 3, 64, 64), &Device::Cpu).unwrap();
        let out = net.forward(&x, false).unwrap();
        assert_eq!(out.prob.dims(), &[2, 4, 64, 64]);
        assert_eq!(out.cloud.dims(), &[2, 300, 3]);
        let sums: Vec<f32> = out
            .prob
            .sum(1)
            .unwrap()
            .flatten_all()
            .unwrap()
            .to_vec1()
            .unwrap();
        assert!(sums.iter().all(|s| (s - 1.0).abs() < 1e-5));
        let cloud: Vec<f32> = out.cloud.flatten_all().unwrap().to_vec1().unwrap();
        assert!(cloud.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn segmenter_other_geometry() {
        let spec = SegmenterSpec {
            in_channels: 1,
            n_classes: 5,
            base_width: 1,
            n_points: 40,
            image_size: 96,
        };
        let mut store = ps();
        let mut rng = rng_for(2, "seg2");
        let net = Segmenter::new(&mut store, &spec, &mut rng).unwrap();
        let x = Tensor::rand(0.0f32, 1.0, (1, 1, 96, 96), &Device::Cpu).unwrap();
        let out = net.forward(&x, true).unwrap();
        assert_eq!(out.prob.dims(), &[1, 5, 96, 96]);
        assert_eq!(out.cloud.dims(), &[1, 40, 3]);
    }

    #[test]
    fn segmenter_rejects_bad_sizes() {
        let bad = SegmenterSpec { image_size: 40, ..SegmenterSpec::default() };
        assert!(bad.validate().is_err());
        let spec =
            SegmenterSpec { base_width: 1, image_size: 32, ..SegmenterSpec::default() };
        let mut store = ps();
        let mut rng = rng_for(3, "seg3");
        let net = Segmenter::new(&mut store, &spec, &mut rng).unwrap();
        let wrong = Tensor::zeros((1, 3, 64, 64), DType::F32, &Device::Cpu).unwrap();
        assert!(matches!(net.forward(&wrong, false), Err(CoreError::Shape(_))));
    }

    #[test]
    fn patchgan_shapes() {
        for (size, expect) in [(224usize, 7usize), (256, 8), (64, 2)] {
            let spec = PatchGanSpec::scaled(4, 16);
            let mut store = ps();
            let mut rng = rng_for(4, "d");
            let d = PatchGan::new(&mut store, &spec, &mut rng).unwrap();
            let x = Tensor::rand(0.0f32, 1.0, (1, 4, size, size), &Device::Cpu).unwrap();
            let y = d.forward(&x).unwrap();
            assert_eq!(y.dims(), &[1, 1, expect, expect]);
            let vals: Vec<f32> = y.flatten_all().unwrap().to_vec1().unwrap();
            assert!(vals.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn pointnet_is_permutation_invariant() {
        let spec = PointNetSpec { width: 8, ..PointNetSpec::default() };
        let mut store = ps();
        let mut rng = rng_for(5, "pn");
        let net = PointNet::new(&mut store, &spec, &mut rng).unwrap();
        let n = 60;
        let base: Vec<f32> = (0..n * 3).map(|i| ((i * 37 % 101) as f32) / 101.0).collect();
        let x = Tensor::from_vec(base.clone(), (1, n, 3), &Device::Cpu).unwrap();
        let y0: Vec<f32> = net
            .forward(&x, false)
            .unwrap()
            .flatten_all()
            .unwrap()
            .to_vec1()
            .unwrap();
        assert_eq!(y0.len(), 2);
        assert!((y0[0] + y0[1] - 1.0).abs() < 1e-5);
        let mut idx: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        for trial in 0..20 {
            idx.shuffle(&mut rng);
            let mut perm = vec![0.0f32; n * 3];
            for (new, &old) in idx.iter().enumerate() {
                perm[new * 3..new * 3 + 3].copy_from_slice(&base[old * 3..old * 3 + 3]);
            }
            let xp = Tensor::from_vec(perm, (1, n, 3), &Device::Cpu).unwrap();
            let yp: Vec<f32> = net
                .forward(&xp, false)
                .unwrap()
                .flatten_all()
                .unwrap()
                .to_vec1()
                .unwrap();
            for (a, b) in y0.iter().zip(&yp) {
                assert!((a - b).abs() <= 1e-6, "trial {trial}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn pointnet_rejects_non_finite() {
        let spec = PointNetSpec { width: 4, ..PointNetSpec::default() };
        let mut store = ps();
        let mut rng = rng_for(6, "pn2");
        let net = PointNet::new(&mut store, &spec, &mut rng).unwrap();
        let x = Tensor::from_vec(vec![f32::NAN; 9], (1, 3, 3), &Device::Cpu).unwrap();
        assert!(matches!(net.forward(&x, false), Err(CoreError::NonFinite(_))));
    }

    #[test]
    fn counts_match_built_stores() {
        let seg = SegmenterSpec { base_width: 2, image_size: 64, ..SegmenterSpec::default() };
        let mut store = ps();
        let mut rng = rng_for(7, "c1");
        Segmenter::new(&mut store, &seg, &mut rng).unwrap();
        assert_eq!(store.param_count(), count_parameters(&NetSpec::Segmenter(seg)));

        let pg = PatchGanSpec::scaled(4, 8);
        let mut store = ps();
        Segmenter::new(
            &mut ParamStore::new(DType::F32),
            &SegmenterSpec { base_width: 1, image_size: 32, ..SegmenterSpec::default() },
            &mut rng,
        )
        .unwrap();
        PatchGan::new(&mut store, &pg, &mut rng).unwrap();
        assert_eq!(store.param_count(), count_parameters(&NetSpec::PatchGan(pg)));

        for ft in [false, true] {
            let pn = PointNetSpec { width: 4, feature_transform: ft, ..Default::default() };
            let mut store = ps();
            PointNet::new(&mut store, &pn, &mut rng).unwrap();
            assert_eq!(store.param_count(), count_parameters(&NetSpec::PointNet(pn)));
        }
    }

    #[test]
    fn patchgan_hand_counted_tiny_spec() {
        // Five 4x4 convs of width 1 on 1 input channel: each holds 16
        // weights + 1 bias = 17; total 85.
        let spec = PatchGanSpec { in_channels: 1, widths: vec![1, 1, 1, 1, 1] };
        assert_eq!(count_parameters(&NetSpec::PatchGan(spec)), 85);
        let degenerate = PatchGanSpec { in_channels: 1, widths: vec![] };
        assert_eq!(count_parameters(&NetSpec::PatchGan(degenerate.clone())), 0);
        assert!(degenerate.validate().is_err());
    }

    #[test]
    fn doubling_base_width_quadruples_encoder() {
        let count_enc = |b: usize| -> usize {
            let mut store = ps();
            let mut rng = rng_for(8, "enc");
            let spec = SegmenterSpec {
                base_width: b,
                image_size: 64,
                ..SegmenterSpec::default()
            };
            Segmenter::new(&mut store, &spec, &mut rng).unwrap();
            store
                .trainable_with_prefix("enc")
                .iter()
                .map(|v| v.elem_count())
                .sum()
        };
        let ratio = count_enc(16) as f64 / count_enc(8) as f64;
        assert!((3.3..=4.2).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn spec_hash_distinguishes_architectures() {
        let a = NetSpec::PointNet(PointNetSpec::default());
        let b = NetSpec::PointNet(PointNetSpec { width: 32, ..Default::default() });
        assert_ne!(spec_hash(&a), spec_hash(&b));
        assert_eq!(spec_hash(&a), spec_hash(&a.clone()));
    }
}
