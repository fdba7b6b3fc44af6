"""Central finite-difference verification of every differentiable operation
and of the assembled network.

Each scenario builds a deterministic scalar loss (a fixed random weighting
of the op output), runs one backward pass, then compares every analytic
gradient element against (f(x+h) - f(x-h)) / 2h. An element passes if the
absolute difference is below ``atol`` or the relative difference is below
the tolerance; the reported per-op number is the worst relative error
among elements that fail the absolute test (0 when none do).

Piecewise-linear activations bias the secant wherever a perturbation
crosses a kink (batch norm centers values at zero, so composed blocks hit
this routinely); the bias is O(h), so elements failing at the default step
are re-estimated at h=1e-6 before judgment. A genuine gradient error is
step-independent and still fails.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import AugConvBlockParams, MhsaParams, aug_conv_block, mhsa
from .channel_attention import ChannelAttentionParams, channel_attention
from .layers import (
    Conv2DParams,
    batch_norm,
    conv2d,
    conv_transpose2d,
    dense,
    global_avg_pool,
    global_max_pool,
    layer_norm,
    leaky_relu,
    norm_state,
    relu,
    sigmoid,
)
from .loss import LossConfig, spatial_spectral_grad_loss, total_loss
from .model import DacnConfig, forward, init_params, named_parameters
from .tensor import Tensor, concat, matmul, softmax_rows
from .upsampler import UpsampleStageParams, nearest_resize, upsample_stage

FD_STEP = 1e-4
FD_REFINE_STEP = 1e-6
FD_ATOL = 1e-6


@dataclass
class OpCheck:
    name: str
    max_rel_error: float
    passed: bool


def _finite_diff(build_loss, tensor: Tensor, indices=None, h: float = FD_STEP) -> dict:
    flat = tensor.data.reshape(-1)
    picks = range(flat.size) if indices is None else indices
    grads = {}
    for i in picks:
        orig = flat[i]
        flat[i] = orig + h
        up = build_loss().item()
        flat[i] = orig - h
        down = build_loss().item()
        flat[i] = orig
        grads[i] = (up - down) / (2 * h)
    return grads


def _compare(build_loss, tensors, tolerance: float, sample: int | None = None,
             rng: np.random.Generator | None = None, corrupt: bool = False):
    for t in tensors:
        t.grad = None
    build_loss().backward()
    worst = 0.0
    ok = True
    for t in tensors:
        analytic = t.grad
        if analytic is None:
            return float("inf"), False
        analytic = analytic.reshape(-1).copy()
        if corrupt:
            analytic *= 1.01  # negative-control injection
        indices = None
        if sample is not None and t.data.size > sample:
            indices = rng.choice(t.data.size, size=sample, replace=False)
        fd = _finite_diff(build_loss, t, indices)
        suspects = [i for i, ref in fd.items() if not _element_ok(ref, analytic[i], tolerance)]
        if suspects:
            fd.update(_finite_diff(build_loss, t, suspects, h=FD_REFINE_STEP))
        for i, reference in fd.items():
            diff = abs(reference - analytic[i])
            if diff <= FD_ATOL:
                continue
            rel = diff / max(abs(reference), abs(analytic[i]))
            worst = max(worst, rel)
            if rel > tolerance:
                ok = False
    return worst, ok


def _element_ok(reference: float, analytic: float, tolerance: float) -> bool:
    diff = abs(reference - analytic)
    return diff <= FD_ATOL or diff / max(abs(reference), abs(analytic)) <= tolerance


def _scenarios(seed: int):
    rng = np.random.default_rng(seed)

    def t(*shape, offset=0.0):
        return Tensor(rng.normal(size=shape) + offset, requires_grad=True)

    def fixed(*shape):
        return Tensor(rng.normal(size=shape))

    scenarios = []

    def add(name, builder):
        scenarios.append((name, builder))

    def weighted(op, weight):
        return lambda: (op() * weight).sum()

    a, b, w = t(3, 4), t(3, 4), fixed(3, 4)
    add("add", (weighted(lambda: a + b, w), [a, b]))
    add("sub", (weighted(lambda: a - b, w), [a, b]))
    add("mul", (weighted(lambda: a * b, w), [a, b]))
    d = t(3, 4, offset=3.0)
    add("div", (weighted(lambda: a / d, w), [a, d]))
    sq = t(3, 4, offset=4.0)
    add("pow", (weighted(lambda: sq**2, w), [sq]))
    add("sqrt", (weighted(lambda: sq.sqrt(), w), [sq]))
    add("exp", (weighted(lambda: a.exp(), w), [a]))

    ma, mb, mw = t(3, 4), t(4, 5), fixed(3, 5)
    add("matmul", (weighted(lambda: matmul(ma, mb), mw), [ma, mb]))
    bma, bmb, bmw = t(2, 3, 4), t(2, 4, 5), fixed(2, 3, 5)
    add("matmul_batched", (weighted(lambda: matmul(bma, bmb), bmw), [bma, bmb]))
    sx, sw = t(4, 5), fixed(4, 5)
    add("softmax_rows", (weighted(lambda: softmax_rows(sx), sw), [sx]))

    ra, rw = t(2, 3, 4), fixed(3,)
    add("sum_axis", (weighted(lambda: ra.sum(axis=(0, 2)), rw), [ra]))
    add("mean_axis", (weighted(lambda: ra.mean(axis=(0, 2)), rw), [ra]))
    add("reshape_transpose", (weighted(lambda: ra.transpose((2, 0, 1)).reshape(4, 6), fixed(4, 6)), [ra]))
    add("slice", (weighted(lambda: ra[:, 1:, :-1], fixed(2, 2, 3)), [ra]))
    ca1, ca2 = t(2, 3), t(2, 2)
    add("concat", (weighted(lambda: concat([ca1, ca2], axis=1), fixed(2, 5)), [ca1, ca2]))

    # kink-free inputs for the piecewise activations
    act = Tensor(rng.choice([-1.0, 1.0], size=(3, 4)) * rng.uniform(0.5, 1.5, size=(3, 4)), requires_grad=True)
    aw = fixed(3, 4)
    add("relu", (weighted(lambda: relu(act), aw), [act]))
    add("leaky_relu", (weighted(lambda: leaky_relu(act, 0.2), aw), [act]))
    add("sigmoid", (weighted(lambda: sigmoid(act), aw), [act]))

    dx, dwt, dbs, dw = t(3, 4), t(2, 4), t(2), fixed(3, 2)
    add("dense", (weighted(lambda: dense(dx, dwt, dbs), dw), [dx, dwt, dbs]))

    cx = t(2, 5, 5, 3)
    ck, cb = t(3, 3, 3, 4), t(4)
    cw = fixed(2, 5, 5, 4)
    conv_p = Conv2DParams(kernel=ck, bias=cb, stride=1, padding="same")
    add("conv2d_same", (weighted(lambda: conv2d(cx, conv_p), cw), [cx, ck, cb]))
    vk, vb = t(2, 2, 3, 2), t(2)
    valid_p = Conv2DParams(kernel=vk, bias=vb, stride=1, padding="valid")
    add("conv2d_valid", (weighted(lambda: conv2d(cx, valid_p), fixed(2, 4, 4, 2)), [cx, vk, vb]))
    tx, tk, tb = t(1, 3, 3, 2), t(4, 4, 3, 2), t(3)
    tconv_p = Conv2DParams(kernel=tk, bias=tb, stride=2)
    add("conv_transpose2d", (weighted(lambda: conv_transpose2d(tx, tconv_p), fixed(1, 6, 6, 3)), [tx, tk, tb]))

    bx = t(2, 3, 3, 4)
    bst = norm_state(4)
    bw = fixed(2, 3, 3, 4)
    add("batch_norm", (weighted(lambda: batch_norm(bx, bst, True), bw), [bx, bst.gamma, bst.beta]))
    lg, lb = t(4, offset=1.0), t(4)
    add("layer_norm", (weighted(lambda: layer_norm(bx, lg, lb), bw), [bx, lg, lb]))

    px, pw = t(2, 3, 4, 3), fixed(2, 3)
    add("global_avg_pool", (weighted(lambda: global_avg_pool(px), pw), [px]))
    add("global_max_pool", (weighted(lambda: global_max_pool(px), pw), [px]))
    add("nearest_resize", (weighted(lambda: nearest_resize(px, 2), fixed(2, 6, 8, 3)), [px]))

    mx = t(2, 5, 4)
    mp = MhsaParams(
        w_q=t(4, 4), w_k=t(4, 4), w_v=t(4, 4), w_o=t(4, 4), heads=2, d_k=2, d_v=2
    )
    mw2 = fixed(2, 5, 4)
    add("mhsa", (weighted(lambda: mhsa(mx, mp), mw2), [mx, mp.w_q, mp.w_k, mp.w_v, mp.w_o]))

    abx = t(1, 4, 4, 2)
    abk, abb = t(3, 3, 2, 4), t(4)
    abp = AugConvBlockParams(
        conv=Conv2DParams(kernel=abk, bias=abb, stride=1, padding="same"),
        bn=norm_state(4),
        mhsa=MhsaParams(w_q=t(4, 4), w_k=t(4, 4), w_v=t(4, 4), w_o=t(4, 4), heads=2, d_k=2, d_v=2),
        ln_gamma=t(4, offset=1.0),
        ln_beta=t(4),
    )
    abw = fixed(1, 4, 4, 4)
    ab_tensors = [abx, abk, abb, abp.bn.gamma, abp.bn.beta, abp.mhsa.w_q, abp.mhsa.w_v, abp.ln_gamma]
    add("aug_conv_block", (weighted(lambda: aug_conv_block(abx, abp, True), abw), ab_tensors))

    cax = t(1, 3, 3, 2)
    cap = ChannelAttentionParams(w1=t(2, 2), b1=t(2), w2=t(2, 2), b2=t(2), reduction=1)
    caw = fixed(1, 3, 3, 2)
    add("channel_attention", (weighted(lambda: channel_attention(cax, cap), caw),
                              [cax, cap.w1, cap.b1, cap.w2, cap.b2]))

    ux = t(1, 2, 2, 3)
    us = t(1, 4, 4, 2)
    upar = UpsampleStageParams(
        tconv=Conv2DParams(kernel=t(4, 4, 3, 3), bias=t(3), stride=2),
        bn=norm_state(3),
        skip_channels=2,
    )
    uw = fixed(1, 4, 4, 5)
    add("upsample_stage", (weighted(lambda: upsample_stage(ux, us, upar, training=True), uw),
                           [ux, us, upar.tconv.kernel, upar.tconv.bias, upar.bn.gamma]))

    gt, gp, lw = t(1, 3, 3, 3), t(1, 3, 3, 3), [t(2, 2)]
    add("grad_loss", (lambda: spatial_spectral_grad_loss(gt, gp), [gt, gp]))
    add("total_loss", (lambda: total_loss(gt, gp, lw, LossConfig(alpha=1e-2)), [gp, lw[0]]))

    return scenarios


def full_model_check(tolerance: float, seed: int = 0, sample: int = 60,
                     corrupt: bool = False, config: DacnConfig | None = None) -> OpCheck:
    """Finite-difference check of the assembled model over a random sample
    of parameters plus the input patch.

    Defaults to a micro config; a caller-supplied config should stay desk
    sized, every sampled parameter costs two forward passes per element.
    """
    rng = np.random.default_rng(seed)
    if config is None:
        config = DacnConfig(
            group_size=4, stride=2, filters=(8, 8, 8), heads=4, scale=2, seed=seed
        )
    params = init_params(config)
    side = 8
    x = Tensor(rng.uniform(0, 1, size=(1, side, side, config.group_size)), requires_grad=True)
    target = Tensor(
        rng.uniform(0, 1, size=(1, side * config.scale, side * config.scale, config.group_size))
    )

    def build_loss():
        return total_loss(target, forward(x, params, config, training=True), params,
                          LossConfig(alpha=1e-4))

    tensors = [x] + list(named_parameters(params).values())
    per_tensor = max(2, sample // len(tensors))
    worst, ok = _compare(build_loss, tensors, tolerance, sample=per_tensor, rng=rng,
                         corrupt=corrupt)
    return OpCheck("full_model", worst, ok)


def run_suite(tolerance: float = 1e-4, seed: int = 0, corrupt_op: str | None = None,
              include_full_model: bool = True, model_config: DacnConfig | None = None) -> list:
    """Run every op scenario plus the assembled-model check, in declaration
    order. ``corrupt_op`` scales that op's analytic gradient by 1% as a
    negative control (the check must then fail)."""
    results = []
    for name, (build_loss, tensors) in _scenarios(seed):
        worst, ok = _compare(build_loss, tensors, tolerance,
                             corrupt=(corrupt_op == name))
        results.append(OpCheck(name, worst, ok))
    if include_full_model:
        results.append(
            full_model_check(
                tolerance, seed, corrupt=(corrupt_op == "full_model"), config=model_config
            )
        )
    return results


def suite_passed(results) -> bool:
    return all(r.passed for r in results)


def report_csv(results) -> str:
    lines = ["op,max_rel_error,passed"]
    for r in results:
        lines.append(f"{r.name},{r.max_rel_error:.6g},{str(r.passed).lower()}")
    return "\n".join(lines) + "\n"
