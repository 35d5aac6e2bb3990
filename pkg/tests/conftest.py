"""Shared oracles for the test suite."""
from __future__ import annotations

import numpy as np
import pytest

from ppgl.tensor import Tape, zero_grad


def central_difference(f, x: np.ndarray, h: float = 1e-5, indices=None) -> np.ndarray:
    """d f / d x by central differences, perturbing ``x`` in place (restored afterwards)."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size) if indices is None else indices:
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        g[i] = (up - down) / (2 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, atol: float = 1e-8) -> float:
    """Largest elementwise relative error, ignoring entries whose absolute error is below ``atol``."""
    analytic = np.asarray(analytic, dtype=np.float64).reshape(-1)
    numeric = np.asarray(numeric, dtype=np.float64).reshape(-1)
    abs_err = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    rel = np.where(abs_err <= atol, 0.0, abs_err / np.where(scale > 0, scale, 1.0))
    return float(rel.max()) if rel.size else 0.0


def tape_gradients(loss_fn, params: dict) -> dict[str, np.ndarray]:
    zero_grad(params.values())
    with Tape() as tape:
        loss = loss_fn()
    tape.backward(loss)
    return {k: (np.zeros_like(p.data) if p.grad is None else p.grad.copy()) for k, p in params.items()}


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
