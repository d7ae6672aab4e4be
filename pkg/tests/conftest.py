"""Shared numerical helpers for the test suite."""

import numpy as np


def finite_difference(loss_fn, tensors, eps=1e-6):
    """Central-difference gradient of loss_fn for each tensor.

    loss_fn takes no arguments and must recompute the loss from the
    tensors' current .data (a fresh forward pass per call). Entries are
    perturbed in place and restored.
    """
    out = {}
    for t in tensors:
        grad = np.zeros_like(t.data)
        flat_data = t.data.ravel()
        flat_grad = grad.ravel()
        for i in range(flat_data.size):
            kept = flat_data[i]
            flat_data[i] = kept + eps
            hi = loss_fn()
            flat_data[i] = kept - eps
            lo = loss_fn()
            flat_data[i] = kept
            flat_grad[i] = (hi - lo) / (2.0 * eps)
        out[t] = grad
    return out


def rel_error(got, want, floor=1e-7):
    """Worst relative error, falling back to absolute below the floor."""
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    if got.shape != want.shape:
        raise AssertionError(f"shape mismatch: {got.shape} vs {want.shape}")
    diff = np.abs(got - want)
    scale = np.maximum(np.abs(got), np.abs(want))
    err = np.where(scale > floor, diff / np.maximum(scale, floor), diff)
    return float(err.max()) if err.size else 0.0
