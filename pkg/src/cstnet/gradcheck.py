"""Central finite-difference verification of backward rules.

The checker is deliberately independent of the graph machinery: it only ever
calls the forward pass (under ``no_grad``) at perturbed leaf values and
compares the resulting difference quotients against the gradients produced by
``backward()``.  Relative error is |a - b| / max(1, |a|, |b|).
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad

DEFAULT_STEP = 1e-5
DEFAULT_TOL = 1e-4


def relative_error(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))


def max_gradcheck_error(fn: Callable[[], Tensor], leaves: Sequence[Tensor], *,
                        step: float = DEFAULT_STEP, coords_per_leaf: int | None = None,
                        rng: np.random.Generator | None = None) -> float:
    """Largest relative error between analytic and central-difference gradients.

    ``fn`` must rebuild the forward graph from the current ``leaves`` data on
    every call and return a scalar loss.  Each leaf is perturbed coordinate by
    coordinate; when a leaf has more than ``coords_per_leaf`` entries a seeded
    random subset is probed instead of every coordinate.

    A coordinate whose difference quotient disagrees at ``step`` is re-probed
    at ``step / 10``: truncation error at a ReLU kink or a stiff region
    collapses quadratically with the step, while a wrong backward rule keeps
    its O(1) mismatch, so the retry separates the two.  The better of the two
    errors is reported per coordinate.
    """
    for leaf in leaves:
        if leaf.data.dtype != np.float64:
            raise ValueError("gradient checks require float64 leaves")
        leaf.requires_grad = True
        leaf.zero_grad()

    loss = fn()
    loss.backward()
    analytic = []
    for leaf in leaves:
        analytic.append(np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad.copy())

    if rng is None:
        rng = np.random.default_rng(0)

    worst = 0.0
    for leaf, grad in zip(leaves, analytic):
        flat = leaf.data.reshape(-1)
        gflat = grad.reshape(-1)
        n = flat.size
        if coords_per_leaf is not None and n > coords_per_leaf:
            coords = rng.choice(n, size=coords_per_leaf, replace=False)
        else:
            coords = range(n)
        def central_difference(i: int, h: float) -> float:
            orig = flat[i]
            flat[i] = orig + h
            with no_grad():
                fp = fn().item()
            flat[i] = orig - h
            with no_grad():
                fm = fn().item()
            flat[i] = orig
            return (fp - fm) / (2.0 * h)

        for i in coords:
            err = relative_error(central_difference(i, step), gflat[i])
            if err > DEFAULT_TOL:
                err = min(err, relative_error(central_difference(i, step / 10.0), gflat[i]))
            worst = max(worst, err)
    return worst


def check_op(build: Callable[..., Tensor], arrays: Sequence[np.ndarray], *,
             step: float = DEFAULT_STEP, coords_per_leaf: int | None = None,
             seed: int = 0) -> float:
    """Gradcheck a pure op: ``build(*leaf_tensors)`` returns the op output.

    The output is contracted to a scalar with a fixed random projection so
    that sign errors cannot cancel; returns the max relative error.
    """
    leaves = [Tensor(np.asarray(a, dtype=np.float64).copy(), requires_grad=True) for a in arrays]
    rng = np.random.default_rng(seed)
    proj_holder = {}

    def fn() -> Tensor:
        out = build(*leaves)
        if "p" not in proj_holder:
            proj_holder["p"] = np.random.default_rng(seed + 1).standard_normal(out.shape)
        from .tensor import constant, mul, tsum
        return tsum(mul(out, constant(proj_holder["p"])))

    return max_gradcheck_error(fn, leaves, step=step, coords_per_leaf=coords_per_leaf, rng=rng)
