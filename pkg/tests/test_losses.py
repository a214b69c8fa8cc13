import numpy as np
import pytest

from autodiff import ops
from autodiff.tensor import Tensor, backward
from models.networks import LocalDiscriminator, GlobalDiscriminator, discriminate_global, discriminate_local
from models.perceptual import ps
from models.warp import ControlGrid, identity_grid, identity_mesh
from training.losses import (ABLATIONS, COMPONENTS, DiscriminatorScores, LossWeights, ablation_weights,
                             endpoint_blend_loss, guarded, identity_reg, lsgan_d, lsgan_g, recon_loss, total_g,
                             transition_loss, warp_loss)
from training.schedules import TimeSchedule, uniform_schedule
from utils.errors import NonFiniteError


def scores(value: float, n: int = 2) -> DiscriminatorScores:
    return DiscriminatorScores(Tensor(np.full((n, 1, 4, 4), value)), Tensor(np.full(n, value)))


def image(seed: int) -> Tensor:
    return Tensor(np.random.default_rng(seed).uniform(-1, 1, size=(1, 3, 32, 32)))


class TestAdversarial:
    def test_perfect_discriminator(self):
        assert lsgan_d(scores(1.0), scores(0.0)).item() == 0.0

    def test_undecided_discriminator(self):
        assert lsgan_d(scores(0.5), scores(0.5)).item() == pytest.approx(1.0)

    def test_generator_side(self):
        assert lsgan_g(scores(1.0)).item() == 0.0
        assert lsgan_g(scores(0.0)).item() == pytest.approx(2.0)

    def test_generator_loss_falls_as_fake_scores_rise(self):
        values = [lsgan_g(scores(v)).item() for v in (0.1, 0.4, 0.7, 0.95)]
        assert values == sorted(values, reverse=True)

    def test_detached_fakes_keep_generator_out_of_discriminator_loss(self, rng):
        local_d = LocalDiscriminator(np.random.default_rng(0), base_channels=4)
        global_d = GlobalDiscriminator(32, np.random.default_rng(1), base_channels=4)
        source = Tensor(rng.uniform(-1, 1, size=(1, 3, 32, 32)), requires_grad=True)
        fake = (source * 0.5).detach()
        real = image(0)

        def judge(x):
            return DiscriminatorScores(discriminate_local(local_d, x), discriminate_global(global_d, x))

        backward(lsgan_d(judge(real), judge(fake)))
        assert source.grad is None
        assert local_d.score.weight.grad is not None
        assert global_d.score.weight.grad is not None


class TestTransition:
    def test_two_frames_has_no_interior(self, tiny_extractor):
        a, b = image(1), image(2)
        loss = transition_loss(tiny_extractor, [a, b], uniform_schedule(2), a, b)
        assert loss.item() == pytest.approx(0.0, abs=1e-12)

    def test_frozen_sequence_pays_for_every_step(self, tiny_extractor):
        a, b = image(1), image(2)
        schedule = uniform_schedule(5)
        total = ps(tiny_extractor, a, b).item()
        loss = transition_loss(tiny_extractor, [a] * 5, schedule, a, b)
        assert loss.item() == pytest.approx((0.25 * total) ** 2, rel=1e-4)

    def test_matches_recomputed_maximum(self, tiny_extractor):
        a, b = image(1), image(2)
        frames = [a, image(3), image(4), b]
        schedule = TimeSchedule(content=(0.0, 0.2, 0.7, 1.0))
        total = ps(tiny_extractor, a, b).item()
        gaps = [(ps(tiny_extractor, x, y).item() - dt * total) ** 2
                for x, y, dt in zip(frames, frames[1:], schedule.increments())]
        assert transition_loss(tiny_extractor, frames, schedule, a, b).item() == pytest.approx(max(gaps), rel=1e-4)

    def test_frame_count_must_match(self, tiny_extractor):
        with pytest.raises(ValueError):
            transition_loss(tiny_extractor, [image(1)] * 3, uniform_schedule(4), image(1), image(2))

    def test_fast_and_slow_pairs_do_not_cancel(self, float64, tiny_extractor):
        x, y = image(5), image(6)
        schedule = uniform_schedule(3)
        fast = transition_loss(tiny_extractor, [x, y, y], schedule, x, y).item()
        slow = transition_loss(tiny_extractor, [y, y, x], schedule, y, x).item()
        assert fast > 1e-8 and slow > 1e-8
        frames = [ops.concat([x, y]), ops.concat([y, y]), ops.concat([y, x])]
        batched = transition_loss(tiny_extractor, frames, schedule, frames[0], frames[2]).item()
        assert batched == pytest.approx((fast + slow) / 2.0, rel=1e-9)

    def test_batch_matches_per_pair_recomputation(self, float64, tiny_extractor):
        pairs = [(image(10 + n), image(20 + n), image(30 + n)) for n in range(3)]
        schedule = uniform_schedule(3)
        per_pair = [transition_loss(tiny_extractor, [a, mid, b], schedule, a, b).item() for a, mid, b in pairs]
        stacked = [ops.concat([pair[j] for pair in pairs]) for j in range(3)]
        batched = transition_loss(tiny_extractor, stacked, schedule, stacked[0], stacked[2])
        assert batched.item() == pytest.approx(float(np.mean(per_pair)), rel=1e-9)


class TestRecon:
    def test_exact_endpoints(self):
        a, b = image(1), image(2)
        assert recon_loss(a, b, a, b).item() == 0.0

    def test_constant_offset(self, float64):
        a, b = image(1), image(2)
        assert recon_loss(a + 0.1, b, a, b).item() == pytest.approx(0.01)

    def test_symmetric_under_swap(self, float64):
        a, b, x, y = image(1), image(2), image(3), image(4)
        assert recon_loss(x, y, a, b).item() == pytest.approx(recon_loss(y, x, b, a).item())


class TestWarpTerms:
    def test_warp_loss_zero_on_match(self, tiny_extractor):
        a = image(5)
        assert warp_loss(tiny_extractor, a, a).item() == 0.0

    def test_identity_reg_zero_on_identity(self):
        assert identity_reg(identity_grid(5)).item() == 0.0

    def test_identity_reg_constant_offset(self, float64):
        grid = ControlGrid(values=Tensor(identity_mesh(5) + 0.1))
        assert identity_reg(grid).item() == pytest.approx(0.01)


class TestEndpointBlend:
    def test_zero_when_frames_match_both_warps(self, tiny_extractor):
        frames = [image(i) for i in range(3)]
        loss = endpoint_blend_loss(tiny_extractor, frames, frames, frames, uniform_schedule(3))
        assert loss.item() == 0.0

    def test_ignores_second_input_at_time_zero(self, tiny_extractor):
        frames, warped_a = [image(1), image(2)], [image(3), image(4)]
        first = endpoint_blend_loss(tiny_extractor, frames, warped_a, [image(5), image(6)], uniform_schedule(2))
        second = endpoint_blend_loss(tiny_extractor, frames, warped_a, [image(7), image(6)], uniform_schedule(2))
        assert first.item() == second.item()

    def test_matches_recomputed_sum(self, tiny_extractor):
        schedule = uniform_schedule(3)
        frames, warped_a, warped_b = [image(i) for i in range(3)], [image(i) for i in range(3, 6)], \
            [image(i) for i in range(6, 9)]
        expected = sum((1 - t) * ps(tiny_extractor, f, x, groups=(4,)).item()
                       + t * ps(tiny_extractor, f, y, groups=(4,)).item()
                       for f, x, y, t in zip(frames, warped_a, warped_b, schedule.content))
        loss = endpoint_blend_loss(tiny_extractor, frames, warped_a, warped_b, schedule)
        assert loss.item() == pytest.approx(expected, rel=1e-4)

    def test_content_style_uses_style_axis_and_group_three(self, tiny_extractor):
        schedule = TimeSchedule(content=(0.0, 0.5, 1.0), style=(0.0, 0.1, 1.0))
        frames, warped_a, warped_b = [image(i) for i in range(3)], [image(i) for i in range(3, 6)], \
            [image(i) for i in range(6, 9)]
        expected = sum((1 - t) * ps(tiny_extractor, f, x, groups=(3,)).item()
                       + t * ps(tiny_extractor, f, y, groups=(3,)).item()
                       for f, x, y, t in zip(frames, warped_a, warped_b, schedule.style))
        loss = endpoint_blend_loss(tiny_extractor, frames, warped_a, warped_b, schedule)
        assert loss.item() == pytest.approx(expected, rel=1e-4)


class TestTotal:
    def test_unit_weights_sum(self):
        weights = LossWeights(lambda_g=1, lambda_t=1, lambda_r=1, lambda_w=1, lambda_i=1, lambda_e=1)
        assert total_g({name: 1.0 for name in COMPONENTS}, weights).item() == pytest.approx(6.0)

    def test_default_weights(self):
        components = {name: 1.0 for name in COMPONENTS}
        assert total_g(components, LossWeights()).item() == pytest.approx(1 + 10 + 10 + 1 + 1 + 1)

    def test_zero_weights(self):
        weights = LossWeights(lambda_g=0, lambda_t=0, lambda_r=0, lambda_w=0, lambda_i=0, lambda_e=0)
        assert total_g({name: 5.0 for name in COMPONENTS}, weights).item() == 0.0

    def test_disabled_components_may_be_missing(self):
        weights = LossWeights(stn=False, lambda_t=1, lambda_r=1)
        assert total_g({'adv': 1.0, 'transition': 2.0, 'recon': 3.0}, weights).item() == pytest.approx(6.0)

    def test_enabled_component_missing(self):
        with pytest.raises(KeyError):
            total_g({'adv': 1.0}, LossWeights())

    def test_tensor_components_keep_gradients(self):
        x = Tensor(2.0, requires_grad=True)
        backward(total_g({'recon': x * x}, LossWeights(gan=False, local_ps=False, stn=False)))
        assert x.grad == pytest.approx(40.0)


class TestToggles:
    def test_stn_off_disables_global_ps(self):
        weights = LossWeights(stn=False)
        assert weights.global_ps is False
        assert not weights.enabled('warp') and not weights.enabled('identity') and not weights.enabled('blend')

    def test_unknown_component(self):
        with pytest.raises(ValueError):
            LossWeights().enabled('style')

    def test_unknown_weight_key(self):
        with pytest.raises(ValueError):
            LossWeights(lambda_x=1.0)

    @pytest.mark.parametrize('variant', sorted(ABLATIONS))
    def test_ablation_variants(self, variant):
        weights = ablation_weights(LossWeights(), variant)
        for toggle in ABLATIONS[variant]:
            assert getattr(weights, toggle) is False
        assert weights.lambda_t == 10.0

    def test_unknown_ablation(self):
        with pytest.raises(ValueError):
            ablation_weights(LossWeights(), 'no_everything')


def test_guarded_names_the_component():
    def explode():
        raise NonFiniteError('sqrt')

    with pytest.raises(NonFiniteError, match="transition") as info:
        guarded('transition', explode)
    assert info.value.where == 'transition'
