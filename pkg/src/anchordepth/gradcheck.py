"""Central finite-difference gradient checks."""
from __future__ import annotations

import numpy as np

FD_STEP = 1e-5


def relative_error(analytic, numeric, floor: float = 1e-6):
    """``|a - n| / max(|a|, |n|, floor)``, elementwise."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def numeric_gradient(f, x: np.ndarray, step: float = FD_STEP, indices=None) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. entries of ``x`` (perturbed in place).

    With ``indices`` (flat positions) only those entries are probed and a 1-D
    array is returned; otherwise the full gradient with ``x``'s shape.
    """
    flat = x.reshape(-1)
    probe = range(flat.size) if indices is None else indices
    out = []
    for i in probe:
        old = flat[i]
        flat[i] = old + step
        fp = f()
        flat[i] = old - step
        fm = f()
        flat[i] = old
        out.append((fp - fm) / (2 * step))
    out = np.array(out)
    return out.reshape(x.shape) if indices is None else out


def check_model_gradients(net, images, anchor_index, loss_fn, rng, fraction=0.01,
                          step: float = FD_STEP):
    """Compare backprop with central differences on a random parameter sample.

    ``loss_fn(output)`` returns ``(loss, d_near_logits, d_far_logits, d_mask_logits)``.
    Returns a list of ``(name, flat_index, analytic, numeric)``.
    """
    out = net.forward(images, anchor_index)
    _, dn, df, dm = loss_fn(out)
    grads = net.backward(dn, df, dm)

    def f():
        return loss_fn(net.forward(images, anchor_index))[0]

    rows = []
    for name, p in net.params.items():
        n = max(1, int(round(fraction * p.size)))
        idx = rng.choice(p.size, size=n, replace=False)
        num = numeric_gradient(f, p, step, idx)
        ana = grads[name].reshape(-1)[idx]
        rows.extend(zip([name] * n, idx, ana, num))
    return rows
