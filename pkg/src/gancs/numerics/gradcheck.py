"""Central-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np


def relative_error(analytic, numeric) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def numeric_gradient(f: Callable[[], float], arr: np.ndarray, step: float = 1e-3) -> np.ndarray:
    """Central differences of the scalar ``f()`` with respect to ``arr`` (perturbed in place)."""
    grad = np.zeros(arr.shape, dtype=np.float64)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f()
        flat[i] = orig - step
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * step)
    return grad


@dataclass
class GradCheckReport:
    max_rel_error: float
    checked: int
    skipped: int
    worst: str = ""


def grad_check_report(
    loss_and_grads: Callable[[], tuple],
    params: Mapping[str, np.ndarray],
    step: float = 1e-3,
    signature: Callable[[], np.ndarray] | None = None,
) -> GradCheckReport:
    """Compare analytic gradients with central differences over every entry.

    ``loss_and_grads()`` evaluates at the current contents of ``params`` and
    returns ``(loss, {name: gradient})``. If ``signature`` is given it is
    called right after each evaluation and should return the sign pattern of
    every non-smooth point (ReLU inputs, l1 residuals); entries whose
    perturbation changes that pattern straddle a kink and are skipped.
    """
    _, analytic = loss_and_grads()
    analytic = {k: np.array(v, dtype=np.float64) for k, v in analytic.items()}
    base_sig = signature() if signature else None
    worst, worst_name, checked, skipped = 0.0, "", 0, 0
    for name, arr in params.items():
        flat = arr.reshape(-1)
        a = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = float(loss_and_grads()[0])
            sig_p = signature() if signature else None
            flat[i] = orig - step
            fm = float(loss_and_grads()[0])
            sig_m = signature() if signature else None
            flat[i] = orig
            if signature and not (np.array_equal(sig_p, base_sig) and np.array_equal(sig_m, base_sig)):
                skipped += 1
                continue
            checked += 1
            err = relative_error(a[i], (fp - fm) / (2 * step))
            if err > worst:
                worst, worst_name = err, f"{name}[{i}]"
    return GradCheckReport(worst, checked, skipped, worst_name)


def grad_check(
    loss_and_grads: Callable[[], tuple],
    params: Mapping[str, np.ndarray],
    step: float = 1e-3,
    signature: Callable[[], np.ndarray] | None = None,
) -> float:
    """Max relative error ``|a - n| / max(1e-8, |a| + |n|)`` over all checked entries."""
    return grad_check_report(loss_and_grads, params, step, signature).max_rel_error
