from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from training.losses import LossWeights

Mode = Literal['single', 'content_style']


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    output_dir: str = Field(..., description="Directory receiving checkpoints and the metrics CSV")
    dataset: str = Field(..., description="Image folder, or 'toy' for the procedural shapes")
    toy_count: int = Field(default=256, ge=2, description="Number of toy images when dataset is 'toy'")
    test_fraction: float = Field(default=0.1, ge=0.0, lt=1.0, description="Held-out share of the dataset")

    resolution: int = Field(default=32, description="Training image side in pixels")
    k: int = Field(default=5, ge=2, description="Frames per generated training sequence")
    batch_size: int = Field(default=8, ge=1, description="Pairs per step")
    steps: int = Field(default=2000, ge=0, description="Optimization steps")
    epochs: int | None = Field(default=None, ge=1, description="If set, overrides steps with epochs * ceil(n / batch)")
    seed: int = Field(default=0, description="Seed for weights, pairing, pools and schedules")
    mode: Mode = Field(default='single', description="Single time axis or content/style axes")
    precision: Literal['float32', 'float64'] = Field(default='float32')

    lr: float = Field(default=2e-4, gt=0.0)
    beta1: float = Field(default=0.5, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(default=1e-8, gt=0.0)

    loss: LossWeights = Field(default_factory=LossWeights)

    base_channels: int = Field(default=64, ge=1, description="Width of the first encoder block")
    disc_channels: int = Field(default=64, ge=1, description="Width of the first discriminator block")
    grid_size: int = Field(default=5, ge=2, description="Control grid side")
    stn_channels: tuple[int, int] = Field(default=(32, 64))
    stn_hidden: int = Field(default=256, ge=1)
    perceptual_widths: tuple[int, int, int, int, int] = Field(default=(64, 128, 256, 512, 512))
    perceptual_preset: Literal['desk', 'vgg16'] = Field(default='desk')
    perceptual_seed: int = Field(default=1234)
    perceptual_weights: str | None = Field(default=None, description="Named-tensor archive with extractor weights")

    log_every: int = Field(default=50, ge=1)
    checkpoint_every: int = Field(default=500, ge=0, description="0 disables periodic checkpoints")

    @field_validator('resolution')
    @classmethod
    def check_resolution(cls, value: int) -> int:
        if value < 32 or value & (value - 1):
            raise ValueError(f"resolution must be a power of two >= 32, got {value}")
        return value

    @model_validator(mode='after')
    def check_weights_source(self) -> 'TrainConfig':
        if self.perceptual_weights == '':
            self.perceptual_weights = None
        return self

    @property
    def time_channels(self) -> int:
        return 2 if self.mode == 'content_style' else 1


class StepMetrics(BaseModel):
    step: int
    d_loss: float = Field(..., description="Discriminator loss (0 when the GAN is disabled)")
    adv: float = 0.0
    transition: float = 0.0
    recon: float = 0.0
    warp: float = 0.0
    identity: float = 0.0
    blend: float = 0.0
    total: float = Field(..., description="Weighted generator objective")


class EvalReport(BaseModel):
    pairs: int
    frames: int
    frechet_generator: float = Field(..., description="Interior-frame Frechet distance of the generator to the training set")
    frechet_blend: float = Field(..., description="Same for the STN-aligned linear blend baseline")
    pacing_mean: float = Field(..., description="Mean over pairs and steps of |PS(I_i-1, I_i) - dt PS(A, B)|")
    pacing_mean_of_max: float = Field(..., description="Mean over pairs of the per-pair maximum pacing error")
    pacing_max: float
    recon_mse: float = Field(..., description="Endpoint reconstruction MSE averaged over pairs")
