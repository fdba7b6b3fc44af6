"""Shared test helpers.

``fd_gradients`` is the independent gradient oracle: it only ever calls the
forward computation, so it cannot share a bug with the tape's backward
rules it is used to verify.
"""

import numpy as np
import pytest

FD_STEP = 1e-4
FD_ATOL = 1e-6
FD_RTOL = 1e-4


def fd_gradients(build_loss, tensor, h=FD_STEP):
    """Central finite differences of a scalar loss w.r.t. every element."""
    flat = tensor.data.reshape(-1)
    grads = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = build_loss().item()
        flat[i] = orig - h
        down = build_loss().item()
        flat[i] = orig
        grads[i] = (up - down) / (2 * h)
    return grads.reshape(tensor.data.shape)


def assert_grads_match(build_loss, tensors, rtol=FD_RTOL, atol=FD_ATOL, h=FD_STEP):
    """Backward pass vs the finite-difference oracle, elementwise."""
    for t in tensors:
        t.grad = None
    build_loss().backward()
    for t in tensors:
        assert t.grad is not None, "backward did not reach a leaf"
        fd = fd_gradients(build_loss, t, h=h)
        bp = t.grad
        mismatch = np.abs(fd - bp)
        scale = np.maximum(np.abs(fd), np.abs(bp))
        bad = (mismatch > atol) & (mismatch > rtol * scale)
        assert not bad.any(), (
            f"gradient mismatch: fd={fd[bad][:4]} vs backward={bp[bad][:4]}"
        )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
