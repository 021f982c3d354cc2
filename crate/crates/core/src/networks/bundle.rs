use pathbone_tape::{Graph, ParamStore, Scalar, Tensor, Var};
use rand_distr::{Distribution, StandardNormal};

use super::decoder::Decoder;
use super::{contour, decoder, discriminator, encoder};
use crate::config::ArchConfig;
use crate::domain::{images_to_tensor, tensor_to_images, Image2D, IntensitySpace, LatentCode};
use crate::error::{Error, Result};
use crate::rng::{seeded_rng, Rng};

/// Whether [`ModelBundle::encode`] samples the latent or returns its mean.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncodeMode {
    Train,
    Infer,
}

/// Encoder, decoder, discriminator and contour network sharing one parameter store.
///
/// Parameter names are grouped by prefix: `enc`, `dec`, `disc` and `bone`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle<T> {
    arch: ArchConfig,
    params: ParamStore<T>,
}

impl<T: Scalar> ModelBundle<T> {
    /// Fresh parameters drawn from the `init` stream of `seed`.
    pub fn new(arch: ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = seeded_rng(seed, "init");
        let mut params = ParamStore::new();
        encoder::init(&arch, &mut params, &mut rng);
        decoder::init(&arch, &mut params, &mut rng);
        discriminator::init(&arch, &mut params, &mut rng);
        contour::init(&arch, &mut params, &mut rng);
        Ok(Self { arch, params })
    }

    /// Wraps existing parameters after checking names and shapes against `arch`.
    pub fn from_params(arch: ArchConfig, params: ParamStore<T>) -> Result<Self> {
        let reference = Self::new(arch.clone(), 0)?;
        for (name, t) in reference.params.iter() {
            match params.get(name) {
                None => return Err(Error::InvalidConfig(format!("missing parameter `{name}`"))),
                Some(p) if p.shape() != t.shape() => {
                    return Err(Error::ShapeMismatch {
                        expected: t.shape().to_vec(),
                        actual: p.shape().to_vec(),
                    })
                }
                Some(_) => {}
            }
        }
        if params.len() != reference.params.len() {
            let extra = params
                .names()
                .find(|n| !reference.params.contains(n))
                .unwrap_or_default();
            return Err(Error::InvalidConfig(format!(
                "unexpected parameter `{extra}`"
            )));
        }
        Ok(Self { arch, params })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore<T> {
        self.params
    }

    pub fn cast<U: Scalar>(&self) -> ModelBundle<U> {
        ModelBundle {
            arch: self.arch.clone(),
            params: self.params.cast(),
        }
    }

    /// Number of decoder blocks (and layer taps).
    pub fn num_taps(&self) -> usize {
        self.arch.decoder_blocks()
    }

    /// Checks that `h × w` survives the encoder's downsampling exactly.
    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        let f = 1usize << self.arch.downsamplings();
        if h == 0 || w == 0 || h % f != 0 || w % f != 0 {
            return Err(Error::TooSmall {
                height: h,
                width: w,
                requirement: format!("sides must be divisible by {f}"),
            });
        }
        Ok(())
    }

    pub fn decoder(&self) -> Decoder<'_, T> {
        Decoder {
            params: &self.params,
            arch: &self.arch,
        }
    }

    pub fn encode_graph<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> (Var<'g, T>, Var<'g, T>) {
        encoder::forward(g, &self.params, &self.arch, x)
    }

    /// Reparameterized sample `μ + exp(lv/2)·ε` with ε drawn from `rng`.
    pub fn sample_latent<'g>(
        &self,
        g: &'g Graph<T>,
        mean: Var<'g, T>,
        log_var: Var<'g, T>,
        rng: &mut Rng,
    ) -> Var<'g, T> {
        let eps = Tensor::from_fn(mean.shape(), |_| {
            let e: f64 = StandardNormal.sample(rng);
            T::from_f64_lossy(e)
        });
        mean + log_var.scale(0.5).exp() * g.constant(eps)
    }

    pub fn decode_graph<'g>(
        &self,
        g: &'g Graph<T>,
        z: Var<'g, T>,
        theta: &[f64],
    ) -> Vec<Var<'g, T>> {
        decoder::forward(g, &self.params, &self.arch, z, theta)
    }

    pub fn discriminate_graph<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Var<'g, T> {
        discriminator::forward(g, &self.params, &self.arch, x)
    }

    pub fn contour_graph<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Var<'g, T> {
        contour::forward(g, &self.params, &self.arch, x)
    }

    fn batch(&self, images: &[Image2D]) -> Result<Tensor<T>> {
        for img in images {
            img.require_space(IntensitySpace::Normalized)?;
        }
        let t = images_to_tensor(images)?;
        let (_, _, h, w) = t.dims4();
        self.check_input(h, w)?;
        Ok(t)
    }

    /// Latent code of a batch; `Infer` mode returns the mean as the sample.
    pub fn encode_batch(
        &self,
        images: &[Image2D],
        mode: EncodeMode,
        rng: &mut Rng,
    ) -> Result<LatentCode<T>> {
        let x = self.batch(images)?;
        let g = Graph::frozen();
        let (mean, lv) = self.encode_graph(&g, g.constant(x));
        let sample = match mode {
            EncodeMode::Infer => mean.value().as_ref().clone(),
            EncodeMode::Train => self
                .sample_latent(&g, mean, lv, rng)
                .value()
                .as_ref()
                .clone(),
        };
        LatentCode::new(
            mean.value().as_ref().clone(),
            lv.value().as_ref().clone(),
            sample,
        )
    }

    pub fn encode(&self, x: &Image2D, mode: EncodeMode, rng: &mut Rng) -> Result<LatentCode<T>> {
        self.encode_batch(std::slice::from_ref(x), mode, rng)
    }

    fn check_theta(theta: f64) -> Result<()> {
        if (0.0..=1.0).contains(&theta) {
            Ok(())
        } else {
            Err(Error::ThetaOutOfRange(theta))
        }
    }

    fn check_latent(&self, z: &Tensor<T>) -> Result<()> {
        if z.shape().len() != 4 || z.shape()[1] != self.arch.latent_channels {
            return Err(Error::ShapeMismatch {
                expected: vec![
                    z.shape().first().copied().unwrap_or(1),
                    self.arch.latent_channels,
                ],
                actual: z.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Images and all block activations at `theta` for every latent in the batch.
    pub fn decode_with_taps(
        &self,
        z: &Tensor<T>,
        theta: f64,
    ) -> Result<(Vec<Image2D>, Vec<Tensor<T>>)> {
        Self::check_theta(theta)?;
        self.check_latent(z)?;
        let g = Graph::frozen();
        let thetas = vec![theta; z.shape()[0]];
        let taps: Vec<Tensor<T>> = self
            .decode_graph(&g, g.constant(z.clone()), &thetas)
            .iter()
            .map(|v| v.value().as_ref().clone())
            .collect();
        let images = tensor_to_images(
            taps.last().expect("at least one tap"),
            IntensitySpace::Normalized,
        )?;
        Ok((images, taps))
    }

    pub fn decode(&self, z: &Tensor<T>, theta: f64) -> Result<Vec<Image2D>> {
        self.decode_with_taps(z, theta).map(|(images, _)| images)
    }

    /// `decode(encode_infer(x), θ)` for a batch.
    pub fn translate_batch(&self, images: &[Image2D], theta: f64) -> Result<Vec<Image2D>> {
        Self::check_theta(theta)?;
        let code = self.encode_batch(images, EncodeMode::Infer, &mut seeded_rng(0, "unused"))?;
        self.decode(&code.sample, theta)
    }

    pub fn translate(&self, x: &Image2D, theta: f64) -> Result<Image2D> {
        Ok(self
            .translate_batch(std::slice::from_ref(x), theta)?
            .remove(0))
    }

    /// Decodes of one image at `θ = i/(panels−1)` for `i = 0..panels`.
    ///
    /// The first and last panels are exactly `translate(x, 0)` and `translate(x, 1)`.
    pub fn trajectory(&self, x: &Image2D, panels: usize) -> Result<Vec<Image2D>> {
        if panels < 2 {
            return Err(Error::InvalidConfig(format!(
                "a trajectory needs at least 2 panels, got {panels}"
            )));
        }
        let last = (panels - 1) as f64;
        (0..panels)
            .map(|i| self.translate(x, i as f64 / last))
            .collect()
    }

    /// Patch score map of one image.
    pub fn discriminate(&self, img: &Image2D) -> Result<Tensor<T>> {
        let min = discriminator::min_input_side(&self.arch);
        if img.height() < min || img.width() < min {
            return Err(Error::TooSmall {
                height: img.height(),
                width: img.width(),
                requirement: format!("discriminator needs at least {min}x{min}"),
            });
        }
        img.require_space(IntensitySpace::Normalized)?;
        let g = Graph::frozen();
        let x = g.constant(images_to_tensor(std::slice::from_ref(img))?);
        let s = self.discriminate_graph(&g, x).value();
        let (_, _, h, w) = s.dims4();
        Ok(s.as_ref().clone().reshape([h, w]))
    }

    pub fn bone_contour_batch(&self, images: &[Image2D]) -> Result<Vec<Image2D>> {
        for img in images {
            img.require_space(IntensitySpace::Normalized)?;
            if img.height() % 2 != 0 || img.width() % 2 != 0 {
                return Err(Error::TooSmall {
                    height: img.height(),
                    width: img.width(),
                    requirement: "contour network needs even sides".into(),
                });
            }
        }
        let g = Graph::frozen();
        let out = self
            .contour_graph(&g, g.constant(images_to_tensor(images)?))
            .value();
        tensor_to_images(&out, IntensitySpace::Unit)
    }

    pub fn bone_contour(&self, x: &Image2D) -> Result<Image2D> {
        Ok(self.bone_contour_batch(std::slice::from_ref(x))?.remove(0))
    }
}
