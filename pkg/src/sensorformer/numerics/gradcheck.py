import numpy as np

from .tensor import ContractError, Tensor, no_grad


def finite_diff_check(f, params, h=1e-6):
    """Largest relative disagreement between backward() and central differences.

    ``f`` is a zero-argument callable returning a scalar Tensor built from
    ``params`` (a Tensor or a sequence of them). The per-coordinate error is
    ``|a - c| / (|a| + |c| + 1e-12)``.
    """
    if not 1e-6 <= h <= 1e-3:
        raise ContractError(f"step h={h} outside [1e-6, 1e-3]")
    if isinstance(params, Tensor):
        params = [params]
    for p in params:
        if p.dtype != np.float64:
            raise ContractError("finite-difference checks require float64 tensors")
        p.grad = None
    f().backward()
    worst = 0.0
    for p in params:
        analytic = np.zeros(p.shape) if p.grad is None else p.grad.copy()
        flat = p.data.reshape(-1)
        a_flat = analytic.reshape(-1)
        with no_grad():
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                fp = float(f().data)
                flat[i] = orig - h
                fm = float(f().data)
                flat[i] = orig
                c = (fp - fm) / (2.0 * h)
                err = abs(a_flat[i] - c) / (abs(a_flat[i]) + abs(c) + 1e-12)
                worst = max(worst, err)
        p.grad = None
    return worst
