"""Central finite-difference oracle for gradient checks."""

import numpy as np


def fd_check(f, x, grad, n_coords=50, seed=0, rel_step=1e-5):
    """Compare ``grad`` against central differences of scalar ``f`` on random coordinates.

    ``x`` is a float64 array that ``f`` reads; it is perturbed in place and
    restored.  Returns the worst relative error.  The denominator is floored
    at ``1e-8 * max(1, |f(x)|)``, the scale below which differences of ``f``
    are rounding noise, so coordinates with a vanishing gradient do not
    count as failures.
    """
    rng = np.random.default_rng(seed)
    flat = x.reshape(-1)
    g = np.asarray(grad, dtype=float).reshape(-1)
    idx = rng.choice(flat.size, size=min(n_coords, flat.size), replace=False)
    floor = 1e-8 * max(1.0, abs(float(f())))
    worst = 0.0
    for i in idx:
        orig = flat[i]
        h = rel_step * max(1.0, abs(orig))
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        fd = (fp - fm) / (2 * h)
        scale = max(abs(fd), abs(g[i]), floor)
        worst = max(worst, abs(fd - g[i]) / scale)
    return worst
