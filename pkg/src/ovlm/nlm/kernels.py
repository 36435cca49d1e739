"""GRU time-loop kernels.

Both kernels are written once in numba-compatible numpy and compiled with
``@njit`` when numba is importable. Set ``OVLM_KERNELS=numpy`` to force the
interpreted path. All arrays are float64 and C-contiguous; inputs are laid
out time-major, ``(T, B, ...)``.

Gate equations::

    z  = sigmoid(x Wz + h Uz + bz)
    r  = sigmoid(x Wr + h Ur + br)
    c  = tanh(x Wh + (r * h) Uh + bh)
    h' = (1 - z) * h + z * c
"""

from __future__ import annotations

import os

import numpy as np


def gru_forward_py(x, h0, Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh):
    T, B, _ = x.shape
    H = h0.shape[1]
    hs = np.empty((T + 1, B, H))
    zs = np.empty((T, B, H))
    rs = np.empty((T, B, H))
    cs = np.empty((T, B, H))
    hs[0] = h0
    for t in range(T):
        h = hs[t]
        xt = x[t]
        z = 1.0 / (1.0 + np.exp(-(np.dot(xt, Wz) + np.dot(h, Uz) + bz)))
        r = 1.0 / (1.0 + np.exp(-(np.dot(xt, Wr) + np.dot(h, Ur) + br)))
        c = np.tanh(np.dot(xt, Wh) + np.dot(r * h, Uh) + bh)
        hs[t + 1] = (1.0 - z) * h + z * c
        zs[t] = z
        rs[t] = r
        cs[t] = c
    return hs, zs, rs, cs


def gru_backward_py(x, hs, zs, rs, cs, dhs, Wz, Uz, Wr, Ur, Wh, Uh):
    """Backpropagate ``dhs`` (loss gradient w.r.t. each output state h[1..T]).

    Returns input gradients, the nine gate parameter gradients and the
    gradient flowing into the initial state.
    """
    T, B, D = x.shape
    H = hs.shape[2]
    dx = np.empty((T, B, D))
    dWz = np.zeros((D, H))
    dUz = np.zeros((H, H))
    dbz = np.zeros(H)
    dWr = np.zeros((D, H))
    dUr = np.zeros((H, H))
    dbr = np.zeros(H)
    dWh = np.zeros((D, H))
    dUh = np.zeros((H, H))
    dbh = np.zeros(H)
    dh_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        dh = dhs[t] + dh_next
        h = hs[t]
        z = zs[t]
        r = rs[t]
        c = cs[t]
        xt = x[t]

        dah = dh * z * (1.0 - c * c)
        daz = dh * (c - h) * z * (1.0 - z)
        dh_prev = dh * (1.0 - z)

        rh = r * h
        dWh += np.dot(xt.T, dah)
        dUh += np.dot(rh.T, dah)
        dbh += dah.sum(axis=0)
        drh = np.dot(dah, Uh.T)
        dar = drh * h * r * (1.0 - r)
        dh_prev += drh * r

        dWr += np.dot(xt.T, dar)
        dUr += np.dot(h.T, dar)
        dbr += dar.sum(axis=0)
        dWz += np.dot(xt.T, daz)
        dUz += np.dot(h.T, daz)
        dbz += daz.sum(axis=0)

        dx[t] = np.dot(daz, Wz.T) + np.dot(dar, Wr.T) + np.dot(dah, Wh.T)
        dh_prev += np.dot(daz, Uz.T) + np.dot(dar, Ur.T)
        dh_next = dh_prev
    return dx, dWz, dUz, dbz, dWr, dUr, dbr, dWh, dUh, dbh, dh_next


try:
    import numba

    gru_forward_jit = numba.njit(cache=True, fastmath=False)(gru_forward_py)
    gru_backward_jit = numba.njit(cache=True, fastmath=False)(gru_backward_py)
    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    gru_forward_jit = gru_backward_jit = None
    NUMBA_AVAILABLE = False


def select_backend(name: str | None = None) -> str:
    name = (name or os.environ.get("OVLM_KERNELS", "numba")).strip().lower()
    if name not in ("numba", "numpy"):
        raise ValueError(f"OVLM_KERNELS must be 'numba' or 'numpy', not {name!r}")
    if name == "numba" and not NUMBA_AVAILABLE:
        return "numpy"
    return name


BACKEND = select_backend()

if BACKEND == "numba":
    gru_forward = gru_forward_jit
    gru_backward = gru_backward_jit
else:
    gru_forward = gru_forward_py
    gru_backward = gru_backward_py
