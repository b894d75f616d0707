"""Backend selection for the pointwise nonlinear kernels.

The compiled extension is used when it imports; set ``NEHARI_FS_PURE=1`` to
force the numpy fallback.  The extension only beats numpy's vectorized
``pow`` for integer and half-integer exponents, so other exponents are
routed to numpy even when the extension is available.
"""
import os

import numpy as np

from . import _kernels_py

if os.environ.get("NEHARI_FS_PURE", "").strip() not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl

        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _kernels_py
        BACKEND = "python"


def _fast_exponent(e: float) -> bool:
    return 0.0 <= e <= 32.0 and float(2.0 * e).is_integer()


def select(p: float, q: float, shift: float = 0.0):
    """Implementation module used for exponents ``p - shift`` and ``q - shift``."""
    if _impl is _kernels_py or (_fast_exponent(p - shift) and _fast_exponent(q - shift)):
        return _impl
    return _kernels_py


def _flat(a):
    return None if a is None else np.ascontiguousarray(a, dtype=np.float64).reshape(-1)


def power_sums(u, b, gamma, p, q):
    return select(p, q).power_sums(_flat(u), _flat(b), _flat(gamma), float(p), float(q))


def power_terms(u, b, gamma, p, q):
    g, s_p, s_q = select(p, q, 2.0).power_terms(_flat(u), _flat(b), _flat(gamma), float(p), float(q))
    return np.asarray(g).reshape(np.shape(u)), s_p, s_q


def power_pairing(u, v, b, gamma, p, q):
    return select(p, q, 2.0).power_pairing(_flat(u), _flat(v), _flat(b), _flat(gamma), float(p), float(q))
