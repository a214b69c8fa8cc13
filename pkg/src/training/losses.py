"""
Training objectives of the morphing generator and its discriminators.

Naming: `lsgan_g` is the adversarial generator term (AdvG); `total_g` is the weighted
sum of every enabled component (TotalG).
"""
import logging
from typing import Callable, NamedTuple, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from autodiff import ops
from autodiff.tensor import Tensor
from models.perceptual import FeatureExtractor, ps, ps_per_sample
from models.warp import ControlGrid, identity_mesh
from training.schedules import TimeSchedule
from utils.errors import NonFiniteError

logger = logging.getLogger(__name__)

COMPONENTS = ('adv', 'transition', 'recon', 'warp', 'identity', 'blend')


class LossWeights(BaseModel):
    """ λ coefficients of the generator objective and the ablation switches. """
    model_config = ConfigDict(extra='forbid')

    lambda_g: float = Field(default=1.0, ge=0.0, description="Adversarial term weight")
    lambda_t: float = Field(default=10.0, ge=0.0, description="Transition (local PS) weight")
    lambda_r: float = Field(default=10.0, ge=0.0, description="Endpoint reconstruction weight")
    lambda_w: float = Field(default=1.0, ge=0.0, description="Shape warp weight")
    lambda_i: float = Field(default=1.0, ge=0.0, description="Identity grid regularization weight")
    lambda_e: float = Field(default=1.0, ge=0.0, description="Endpoint blend (global PS) weight")
    gan: bool = Field(default=True, description="Use the adversarial loss and train the discriminators")
    local_ps: bool = Field(default=True, description="Use the transition loss")
    global_ps: bool = Field(default=True, description="Use the endpoint blend loss")
    recon: bool = Field(default=True, description="Use the reconstruction loss")
    adain: bool = Field(default=True, description="Blend feature statistics before decoding")
    stn: bool = Field(default=True, description="Predict warps; off means identity warps")
    ps_flat: bool = Field(default=False, description="Aggregate multi-group PS as one flat MSE")

    @model_validator(mode='after')
    def stn_implies_global_ps(self) -> 'LossWeights':
        if not self.stn and self.global_ps:
            logger.debug('stn disabled: disabling global_ps as well')
            self.global_ps = False
        return self

    def enabled(self, component: str) -> bool:
        match component:
            case 'adv':
                return self.gan
            case 'transition':
                return self.local_ps
            case 'recon':
                return self.recon
            case 'warp' | 'identity':
                return self.stn
            case 'blend':
                return self.global_ps
            case _:
                raise ValueError(f"Unknown loss component: {component}")

    def weight(self, component: str) -> float:
        return {
            'adv': self.lambda_g,
            'transition': self.lambda_t,
            'recon': self.lambda_r,
            'warp': self.lambda_w,
            'identity': self.lambda_i,
            'blend': self.lambda_e,
        }[component]


class DiscriminatorScores(NamedTuple):
    local: Tensor
    global_: Tensor


def _label_mse(scores: Tensor, label: float) -> Tensor:
    return ops.mse(scores, Tensor(np.full(scores.shape, label), dtype=scores.data.dtype))


def lsgan_d(real: DiscriminatorScores, fake: DiscriminatorScores) -> Tensor:
    """ Least-squares discriminator loss over local and global scores; real -> 1, fake -> 0. """
    return (_label_mse(real.local, 1.0) + _label_mse(fake.local, 0.0)
            + _label_mse(real.global_, 1.0) + _label_mse(fake.global_, 0.0))


def lsgan_g(fake: DiscriminatorScores) -> Tensor:
    """ Generator side with inverted labels: fake scores pushed to 1. """
    return _label_mse(fake.local, 1.0) + _label_mse(fake.global_, 1.0)


def transition_loss(extractor: FeatureExtractor, frames: Sequence[Tensor], schedule: TimeSchedule,
                    a: Tensor, b: Tensor, flat: bool = False) -> Tensor:
    """
    max_i (PS_{4,5}(I_{i-1}, I_i) - (t_i - t_{i-1}) PS_{4,5}(I_A, I_B))^2 over consecutive frames,
    taken for each pair of the batch and then averaged over pairs.
    Uses the content axis of a content/style schedule.
    """
    if len(frames) != schedule.k:
        raise ValueError(f"transition_loss: {len(frames)} frames for a schedule of {schedule.k}")
    total_distance = ps_per_sample(extractor, a, b, groups=(4, 5), flat=flat)
    terms = []
    for i, dt in enumerate(schedule.increments(), start=1):
        gap = ps_per_sample(extractor, frames[i - 1], frames[i], groups=(4, 5), flat=flat) - total_distance * dt
        terms.append(gap * gap)
    return ops.mean(ops.maximum(terms))


def recon_loss(first: Tensor, last: Tensor, a: Tensor, b: Tensor) -> Tensor:
    return ops.mse(first, a) + ops.mse(last, b)


def warp_loss(extractor: FeatureExtractor, fully_warped: Tensor, target: Tensor) -> Tensor:
    """ Shape warp loss: PS over layer group 5 between the fully warped input and the other input. """
    return ps(extractor, fully_warped, target, groups=(5,))


def identity_reg(grid: ControlGrid) -> Tensor:
    identity = np.broadcast_to(identity_mesh(grid.g), grid.values.shape)
    return ops.mse(grid.values, Tensor(identity, dtype=grid.values.data.dtype))


def endpoint_blend_loss(extractor: FeatureExtractor, frames: Sequence[Tensor], warped_a: Sequence[Tensor],
                        warped_b: Sequence[Tensor], schedule: TimeSchedule) -> Tensor:
    """
    sum_i (1 - t_i) PS(I_i, I_A^{t_i}) + t_i PS(I_i, I_B^{t_i}).

    Single-axis schedules use layer group 4 and the sample times; content/style schedules
    use layer group 3 and the style axis. Terms with a zero coefficient are skipped.
    """
    group = (3,) if schedule.dual else (4,)
    total = None
    for frame, frame_a, frame_b, t in zip(frames, warped_a, warped_b, schedule.style_times):
        for coefficient, target in ((1.0 - t, frame_a), (t, frame_b)):
            if coefficient == 0.0:
                continue
            term = ps(extractor, frame, target, groups=group) * coefficient
            total = term if total is None else total + term
    return total if total is not None else Tensor(0.0)


def guarded(component: str, compute: Callable[[], Tensor]) -> Tensor:
    """ Evaluate one loss component, attributing any non-finite value to it by name. """
    try:
        value = compute()
    except NonFiniteError as exc:
        raise NonFiniteError(component, f"loss component '{component}' became non-finite (in {exc.where})") from exc
    if not np.all(np.isfinite(value.data)):
        raise NonFiniteError(component, f"loss component '{component}' became non-finite")
    return value


def total_g(components: dict[str, Tensor | float], weights: LossWeights) -> Tensor:
    """
    Weighted sum of the enabled components. Disabled components contribute exactly zero
    and may be absent from `components`.
    """
    total = None
    for name in COMPONENTS:
        if not weights.enabled(name) or weights.weight(name) == 0.0:
            continue
        if name not in components:
            raise KeyError(f"enabled loss component '{name}' was not computed")
        value = components[name]
        term = value * weights.weight(name) if isinstance(value, Tensor) else Tensor(value * weights.weight(name))
        total = term if total is None else total + term
    return total if total is not None else Tensor(0.0)


ABLATIONS: dict[str, tuple[str, ...]] = {
    'main': (),
    'no_gan': ('gan',),
    'no_local_ps': ('local_ps',),
    'no_global_ps': ('global_ps',),
    'no_recon': ('recon',),
    'no_adain': ('adain',),
    'no_stn': ('stn', 'global_ps'),
}


def ablation_weights(base: LossWeights, variant: str) -> LossWeights:
    """ Copy of `base` with the toggles of one ablation variant switched off. """
    if variant not in ABLATIONS:
        raise ValueError(f"Unknown ablation variant: {variant}. Use one of {sorted(ABLATIONS)}")
    return LossWeights(**{**base.model_dump(), **{toggle: False for toggle in ABLATIONS[variant]}})
