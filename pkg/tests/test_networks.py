import pytest
import torch

from conftest import identity_set, random_set
from jnmr.cfse import CFSE, GridFusionConfig, coarse_reconstruct, final_blend
from jnmr.config import ModelConfig
from jnmr.model import JNMR, count_parameters
from jnmr.motion import REFERENCE_TIMES, RegressedMotions, regress_backward_motion, regress_forward_motion
from jnmr.rdfl import RDFL, MotionHeads, decouple_motions, init_weights
from jnmr.regression import (
    REGRESSION_MODES,
    ConvLSTMCell,
    MotionRegressor,
    combine_variations,
    forward_variations,
    regress,
    synthesize_intermediate,
)


def frames4(gen, b=1, h=64, w=64, dtype=torch.float32):
    return torch.rand(b, 4, 3, h, w, generator=gen, dtype=dtype)


# feature extraction


def test_encoder_decoder_shapes(gen):
    net = RDFL(3, 16)
    pyr = net.encode(frames4(gen))
    assert pyr.F.shape == (1, 12, 64, 64)
    assert pyr.F0.shape[-2:] == (32, 32) and pyr.F1.shape[-2:] == (16, 16) and pyr.F2.shape[-2:] == (8, 8)
    pyr = net.decode(pyr)
    assert pyr.F3.shape[-2:] == (16, 16) and pyr.F4.shape[-2:] == (32, 32)
    assert pyr.F5.shape[-2:] == (32, 32) and pyr.F6.shape == (1, 16, 64, 64)


@pytest.mark.parametrize("size", [(8, 8), (24, 40), (48, 16)])
def test_shape_contract_for_multiples_of_eight(gen, size):
    pyr = RDFL(3, 8)(frames4(gen, h=size[0], w=size[1]))
    assert pyr.F6.shape[-2:] == size


def test_zero_frames_give_zero_features():
    net = RDFL(3, 8)
    init_weights(net)  # zero biases
    pyr = net(torch.zeros(1, 4, 3, 16, 16))
    for name in ("F0", "F1", "F2", "F3", "F5", "F6"):
        assert getattr(pyr, name).abs().max() == 0


def test_encoder_is_deterministic(gen):
    x = frames4(gen, h=32, w=32)
    torch.manual_seed(3)
    a = RDFL(3, 8).encode(x).F2
    torch.manual_seed(3)
    b = RDFL(3, 8).encode(x).F2
    assert torch.equal(a, b)


def test_encoder_rejects_wrong_frame_count(gen):
    with pytest.raises(ValueError):
        RDFL(3, 8).encode(torch.rand(1, 3, 3, 16, 16, generator=gen))


def test_decode_needs_encoder_features(gen):
    net = RDFL(3, 8)
    pyr = net.encode(frames4(gen, h=16, w=16))
    pyr.F1 = None
    with pytest.raises(RuntimeError):
        net.decode(pyr)


def test_skip_compensation_changes_output(gen):
    x = frames4(gen, h=32, w=32)
    torch.manual_seed(0)
    with_skip = RDFL(3, 8, skip_compensation=True)
    torch.manual_seed(0)
    without = RDFL(3, 8, skip_compensation=False)
    assert not torch.allclose(with_skip(x).F6, without(x).F6)


def test_five_hierarchies(gen):
    net = RDFL(3, 8, num_hierarchies=5, skip_compensation=False)
    pyr = net(frames4(gen, h=32, w=32))
    assert len(pyr.deep) == 2 and pyr.deep[-1].shape[-2:] == (1, 1)
    assert pyr.F6.shape[-2:] == (32, 32)
    with pytest.raises(ValueError):
        RDFL(3, 8, num_hierarchies=5, skip_compensation=True)


def test_decoupled_motions_are_normalised(gen):
    heads = MotionHeads(8, 3)
    ms = decouple_motions(torch.randn(2, 8, 12, 12, generator=gen) * 5, heads)
    for n in REFERENCE_TIMES:
        assert torch.allclose(ms[n].weights.sum(1), torch.ones(2, 12, 12), atol=1e-5)
    assert (ms.occlusion >= 0).all() and (ms.occlusion <= 1).all()
    with pytest.raises(ValueError):
        decouple_motions(torch.randn(1, 7, 4, 4), heads)


def test_zero_feature_with_zero_final_layers():
    heads = MotionHeads(8, 3)
    for layer in heads.final_layers():
        torch.nn.init.zeros_(layer.weight)
        torch.nn.init.zeros_(layer.bias)
    ms = heads(torch.zeros(1, 8, 5, 5))
    for n in REFERENCE_TIMES:
        assert torch.allclose(ms[n].weights, torch.full_like(ms[n].weights, 1 / 9))
        assert ms[n].alpha.abs().max() == 0 and ms[n].beta.abs().max() == 0
    assert torch.equal(ms.occlusion, torch.full_like(ms.occlusion, 0.5))


def test_parameter_counts():
    full = count_parameters(ModelConfig.full())
    assert abs(full - 5.7e6) <= 0.57e6
    desk = count_parameters(ModelConfig.desk())
    assert desk < 1_000_000
    assert count_parameters(ModelConfig.desk()) == desk


# regression


def test_combine_variations_zero_head_is_closed_form(gen):
    ms = random_set(gen, k=3)
    cell = ConvLSTMCell(27, 6).double()
    head = torch.nn.Conv2d(6, 27, 1, bias=False).double()
    torch.nn.init.zeros_(head.weight)
    out, _ = combine_variations(forward_variations(ms), cell, head, 3)
    ref = regress_forward_motion(ms[-2], ms[-1], ms[1])
    for x, y in zip((out.weights, out.alpha, out.beta), (ref.weights, ref.alpha, ref.beta)):
        assert torch.equal(x, y) or (x - y).abs().max() <= 1e-12


def test_combine_variations_zero_input_gives_zero(gen):
    cell = ConvLSTMCell(27, 6)
    head = torch.nn.Conv2d(6, 27, 1, bias=False)
    torch.nn.init.zeros_(head.weight)
    z = torch.zeros(1, 27, 5, 5)
    out, _ = combine_variations([z, z], cell, head, 3)
    assert out.alpha.abs().max() == 0 and out.beta.abs().max() == 0
    with pytest.raises(ValueError):
        combine_variations([z], cell, head, 3)


def test_combine_variations_deterministic(gen):
    ms = random_set(gen, k=3, dtype=torch.float32)
    outs = []
    for _ in range(2):
        torch.manual_seed(5)
        reg = MotionRegressor("joint_bidirectional", 3)
        torch.nn.init.normal_(reg.head_f.weight)
        outs.append(reg(ms).forward.alpha)
    assert torch.equal(*outs)


@pytest.mark.parametrize("mode", REGRESSION_MODES)
def test_static_scene_regresses_to_zero(mode):
    ms = identity_set(k=3, dtype=torch.float32)
    ms = type(ms)({n: m.with_offsets(m.alpha * 0, m.beta * 0) for n, m in ms.motions.items()}, ms.occlusion)
    reg = MotionRegressor(mode, 3)
    for p in reg.parameters():
        torch.nn.init.normal_(p)
    out = regress(ms, mode, reg)
    for f in out.fields():
        assert f.alpha.abs().max() == 0 and f.beta.abs().max() == 0


def test_unknown_mode_rejected():
    with pytest.raises(ValueError):
        MotionRegressor("cubic")
    with pytest.raises(ValueError):
        regress(identity_set(), "cubic")
    with pytest.raises(ValueError):
        regress(identity_set(k=3), "joint_bidirectional")


def test_linear_combination_is_the_closed_form(gen):
    ms = random_set(gen)
    out = regress(ms, "linear_combination")
    f = regress_forward_motion(ms[-2], ms[-1], ms[1])
    b = regress_backward_motion(ms[2], ms[1], ms[-1])
    assert (out.forward.alpha - f.alpha).abs().max() <= 1e-6
    assert (out.backward.beta - b.beta).abs().max() <= 1e-6


def test_joint_zero_head_matches_closed_form(gen):
    ms = random_set(gen, dtype=torch.float32)
    out = MotionRegressor("joint_bidirectional", 3)(ms)
    f = regress_forward_motion(ms[-2], ms[-1], ms[1])
    b = regress_backward_motion(ms[2], ms[1], ms[-1])
    assert (out.forward.alpha - f.alpha).abs().max() <= 1e-5
    assert (out.backward.alpha - b.alpha).abs().max() <= 1e-5
    assert torch.allclose(out.theta, ms.occlusion, atol=1e-5)


def test_shared_batched_joint_equals_two_branches(gen):
    ms = random_set(gen, dtype=torch.float32)
    reg = MotionRegressor("joint_bidirectional", 3)
    torch.nn.init.normal_(reg.head_f.weight, std=0.1)
    torch.nn.init.normal_(reg.theta_head.weight, std=0.1)
    both = reg(ms)
    fwd, (h_f, _) = reg.forward_branch(ms)
    bwd, (h_b, _) = reg.backward_branch(ms)
    assert torch.allclose(both.forward.alpha, fwd.alpha, atol=1e-6)
    assert torch.allclose(both.backward.beta, bwd.beta, atol=1e-6)
    assert torch.allclose(both.theta, reg.theta(ms.occlusion, h_f, h_b), atol=1e-6)


@pytest.mark.parametrize("mode", ["joint_bidirectional", "second_order_unidirectional"])
def test_theta_in_unit_interval(gen, mode):
    ms = random_set(gen, dtype=torch.float32)
    reg = MotionRegressor(mode, 3)
    torch.nn.init.normal_(reg.theta_head.weight, std=10.0)
    theta = reg(ms).theta
    assert (theta >= 0).all() and (theta <= 1).all()


def test_synthesize_identity_literal_sum(gen):
    x = torch.rand(1, 3, 8, 8, generator=gen, dtype=torch.float64)
    frames = {n: x for n in REFERENCE_TIMES}
    ms = identity_set(k=3)
    zero = ms[-1]
    reg = RegressedMotions(zero, zero, torch.full((1, 1, 8, 8), 0.5, dtype=torch.float64))
    out = synthesize_intermediate(frames, ms, reg)
    # basic term 2X plus the offset term 0.5 X + 0.5 X
    assert torch.allclose(out, 3 * x, atol=1e-12)
    assert torch.allclose(synthesize_intermediate(frames, ms, reg, normalize=True), x, atol=1e-12)
    assert torch.allclose(synthesize_intermediate(frames, ms, None), 2 * x, atol=1e-12)


def test_closed_form_reversal_equivariance(gen):
    for _ in range(5):
        ms = random_set(gen)
        frames = {n: torch.rand(1, 3, 6, 7, generator=gen, dtype=torch.float64) for n in REFERENCE_TIMES}
        out = synthesize_intermediate(frames, ms, regress(ms, "linear_combination"), normalize=True)
        rev = synthesize_intermediate({n: frames[-n] for n in REFERENCE_TIMES}, ms.reversed(),
                                      regress(ms.reversed(), "linear_combination"), normalize=True)
        assert (out - rev).abs().max() <= 1e-5


def test_convlstm_receives_gradient_after_one_step(gen):
    # the residual head starts at zero, so the cell's gradient is zero until the head moves
    reg = MotionRegressor("joint_bidirectional", 3).double()
    opt = torch.optim.Adamax(reg.parameters(), lr=1e-3)
    for step in range(2):
        ms = random_set(gen)
        opt.zero_grad()
        out = reg(ms)
        loss = sum((f.alpha ** 2).mean() + f.weights.var() for f in out.fields()) + out.theta.mean()
        loss.backward()
        if step == 0:
            opt.step()
    for name, p in reg.named_parameters():
        assert p.grad is not None and p.grad.norm() > 0, name


# coarse-to-fine enhancement


def test_coarse_reconstruct_scales(gen):
    model = JNMR(ModelConfig.desk())
    x = frames4(gen)
    pyr = model.rdfl(x)
    recons, _ = coarse_reconstruct(pyr, x, model.cfse.heads, model.cfse.sources, model.regressor)
    assert [r.shape[-2:] for r in recons] == [(8, 8), (16, 16)]
    pyr.F3 = None
    with pytest.raises(RuntimeError):
        coarse_reconstruct(pyr, x, model.cfse.heads, model.cfse.sources, model.regressor)


def test_coarse_static_scene_matches_synthesis():
    model = JNMR(ModelConfig.desk(regression_mode="linear_combination"))
    x = torch.full((1, 4, 3, 32, 32), 0.3)
    pyr = model.rdfl(x)
    recons, regs = coarse_reconstruct(pyr, x, model.cfse.heads, model.cfse.sources, model.regressor)
    for name, head, r, reg in zip(model.cfse.sources, model.cfse.heads, recons, regs):
        ms = head(getattr(pyr, name))
        small = {n: torch.full((1, 3, *r.shape[-2:]), 0.3) for n in REFERENCE_TIMES}
        assert torch.allclose(r, synthesize_intermediate(small, ms, reg, normalize=True), atol=1e-6)
        assert torch.allclose(r, torch.full_like(r, 0.3), atol=1e-5)


def test_grid_fuse_zero_init_and_shape(gen):
    model = JNMR(ModelConfig.desk())
    x = frames4(gen, h=32, w=32)
    pred = model(x)
    assert pred.bar.shape == (1, 3, 32, 32)
    # the zero-initialised grid adds nothing to the fine frame
    assert torch.equal(pred.bar, pred.tilde)


def test_grid_fuse_gradcheck(gen):
    cfse = CFSE({"F1": 8, "F2": 8, "F3": 8}, 8, 3, grid=GridFusionConfig(3, 2, (4, 4, 4))).double()
    for p in cfse.parameters():
        torch.nn.init.normal_(p, std=0.3)
    fine = torch.rand(1, 3, 8, 8, generator=gen, dtype=torch.float64, requires_grad=True)
    coarse = [torch.rand(1, 3, 2, 2, generator=gen, dtype=torch.float64, requires_grad=True),
              torch.rand(1, 3, 4, 4, generator=gen, dtype=torch.float64, requires_grad=True)]

    class Pyr:
        F6 = torch.rand(1, 8, 8, 8, generator=gen, dtype=torch.float64)
        F3 = torch.rand(1, 8, 4, 4, generator=gen, dtype=torch.float64)

    def fn(fine, c0, c1):
        return cfse.grid_fuse([c0, c1], fine, Pyr)

    assert torch.autograd.gradcheck(fn, (fine, *coarse), eps=1e-4, atol=1e-5, rtol=1e-2)


def test_final_blend_examples(gen):
    t = torch.rand(1, 3, 4, 4, generator=gen) * 3 - 1
    b = torch.rand(1, 3, 4, 4, generator=gen) * 3 - 1
    assert torch.equal(final_blend(t, b, torch.ones(1, 1, 4, 4)), t.clamp(0, 1))
    assert torch.equal(final_blend(t, b, torch.zeros(1, 1, 4, 4)), b.clamp(0, 1))
    out = final_blend(torch.full((1, 3, 2, 2), 0.2), torch.full((1, 3, 2, 2), 0.6), torch.full((1, 1, 2, 2), 0.5))
    assert torch.allclose(out, torch.full_like(out, 0.4))
    lam = torch.rand(1, 1, 4, 4, generator=gen)
    res = final_blend(t, b, lam)
    assert (res >= 0).all() and (res <= 1).all()
    with pytest.raises(ValueError):
        final_blend(t, b[..., :2], lam)


def test_forced_unit_lambda_equals_model_without_cfse(gen):
    x = frames4(gen, h=32, w=32)
    with_cfse = JNMR(ModelConfig.desk(seed=4))
    with_cfse.force_lambda = 1.0
    without = JNMR(ModelConfig.desk(seed=4, cfse_enabled=False))
    assert torch.equal(with_cfse(x).frame, without(x).frame)


def test_grid_bypass_is_a_different_function(gen):
    x = frames4(gen, h=32, w=32)
    a = JNMR(ModelConfig.desk(seed=1, cfse_gridnet=True))
    b = JNMR(ModelConfig.desk(seed=1, cfse_gridnet=False))
    a.force_lambda = b.force_lambda = 0.0
    assert not torch.allclose(a(x).frame, b(x).frame)


# full model


def test_model_output_shape_and_range(gen):
    model = JNMR(ModelConfig.desk())
    x = frames4(gen, b=2, h=40, w=36)
    pred = model(x)
    assert pred.frame.shape == (2, 3, 40, 36)
    assert (pred.frame >= 0).all() and (pred.frame <= 1).all()
    with pytest.raises(ValueError):
        model(torch.rand(1, 3, 3, 16, 16))


def test_model_static_input_is_reproduced():
    model = JNMR(ModelConfig.desk())
    x = torch.full((1, 4, 3, 32, 32), 0.4)
    assert torch.allclose(model(x).tilde, torch.full((1, 3, 32, 32), 0.4), atol=1e-5)


def test_five_hierarchy_model(gen):
    model = JNMR(ModelConfig.desk(num_hierarchies=5, skip_compensation=False))
    assert model(frames4(gen, h=32, w=32)).frame.shape == (1, 3, 32, 32)


def test_desk_model_gradcheck(gen):
    model = JNMR(ModelConfig.desk()).double()
    for p in model.parameters():
        if p.abs().sum() == 0:
            torch.nn.init.normal_(p, std=0.05)
    params = [p for p in model.parameters()]
    x = torch.rand(1, 4, 3, 16, 16, generator=gen, dtype=torch.float64)
    probe = torch.randn(1, 3, 16, 16, generator=gen, dtype=torch.float64)

    def loss():
        pred = model(x)
        # the blend before the final clamp, so every component is on the path
        return ((pred.blend * pred.tilde + (1 - pred.blend) * pred.bar) * probe).sum()

    model.zero_grad()
    loss().backward()
    check = torch.Generator().manual_seed(1)
    worst = 0.0
    for p in params[:: max(1, len(params) // 12)]:
        idx = int(torch.randint(p.numel(), (1,), generator=check))
        analytic = float(p.grad.view(-1)[idx])
        with torch.no_grad():
            flat = p.view(-1)
            old = float(flat[idx])
            flat[idx] = old + 1e-5
            up = float(loss())
            flat[idx] = old - 1e-5
            down = float(loss())
            flat[idx] = old
        numeric = (up - down) / 2e-5
        worst = max(worst, abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-3))
    assert worst <= 1e-2
