"""Central finite-difference oracle for the autodiff engine."""
import numpy as np

from sparsedyn import tensor as T

STEP = 1e-5
TOL = 1e-4


def numeric_grad(f, arrays, i, step=STEP):
    """d f(arrays) / d arrays[i] by central differences; ``f`` returns a float."""
    x = arrays[i]
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + step
        hi = f(arrays)
        x[idx] = orig - step
        lo = f(arrays)
        x[idx] = orig
        g[idx] = (hi - lo) / (2 * step)
    return g


def rel_error(a, n):
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-6)


def worst_error(ana, num) -> float:
    err = rel_error(ana, num)
    # near-zero gradients: fall back to an absolute criterion
    err = np.where(np.maximum(np.abs(ana), np.abs(num)) < 1e-6, np.abs(ana - num), err)
    return float(err.max(initial=0.0))


def check(build, arrays, tol=TOL):
    """Compare autodiff and numeric gradients of ``build(*tensors)`` w.r.t. every array.

    ``build`` maps Tensors to a scalar Tensor. Returns the worst relative error.
    """
    arrays = [np.array(a, dtype=float) for a in arrays]
    tensors = [T.Tensor(a.copy(), requires_grad=True) for a in arrays]
    T.backward(build(*tensors))

    def f(arrs):
        with T.no_grad():
            return float(build(*[T.Tensor(a) for a in arrs]).data)

    worst = 0.0
    for i, t in enumerate(tensors):
        num = numeric_grad(f, arrays, i)
        ana = t.grad if t.grad is not None else np.zeros_like(num)
        worst = max(worst, worst_error(ana, num))
    assert worst <= tol, f"gradient mismatch {worst:.3e} > {tol}"
    return worst


def check_model(params: dict, loss_fn, tol=TOL):
    """Like :func:`check` for a model whose parameters are Tensors in ``params``.

    ``loss_fn()`` rebuilds the scalar loss from the current parameter values.
    """
    names = list(params)
    saved = [params[k].data.copy() for k in names]
    for p in params.values():
        p.grad = None
    T.backward(loss_fn())
    analytic = [params[k].grad if params[k].grad is not None else np.zeros_like(params[k].data) for k in names]

    def f(arrs):
        for k, a in zip(names, arrs):
            params[k].data[...] = a
        with T.no_grad():
            return float(loss_fn().data)

    arrays = [a.copy() for a in saved]
    worst = 0.0
    try:
        for i in range(len(names)):
            worst = max(worst, worst_error(analytic[i], numeric_grad(f, arrays, i)))
    finally:
        for k, a in zip(names, saved):
            params[k].data[...] = a
    assert worst <= tol, f"gradient mismatch {worst:.3e} > {tol}"
    return worst
