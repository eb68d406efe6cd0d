"""Zipf(3/2) envelope used by all counting samplers.

``floor(U**-2)`` has pmf ``b(n) = n**-0.5 - (n+1)**-0.5`` on ``n >= 1``.  The
arcsine sampler pairs it with a fair coin to cover ``n >= 2``:
``b2(2k) = b2(2k+1) = b(k) / 2``.
"""

from __future__ import annotations

import math

import numpy as np

ZETA_3_2 = 2.6123753486854883
ZETA_2 = math.pi ** 2 / 6  # 1.6449340668482264
SQRT2 = math.sqrt(2.0)

#: Dominating factor in ``z(n) <= ZIPF_ENVELOPE * b(n)`` for the Zipf(3/2) pmf.
ZIPF_ENVELOPE = SQRT2 / (ZETA_3_2 * (SQRT2 - 1.0))


def log_proposal_pmf(n):
    """``log b(n)``, written without subtractive cancellation.

    ``b(n) = 1 / (sqrt(n) sqrt(n+1) (sqrt(n) + sqrt(n+1)))``.
    """
    n = np.asarray(n, dtype=float)
    r, r1 = np.sqrt(n), np.sqrt(n + 1.0)
    return -np.log(r) - np.log(r1) - np.log(r + r1)


def proposal_pmf(n):
    """Pmf of ``floor(U**-2)``.  Vectorized; scalars in, scalar out."""
    arr = np.asarray(n)
    if np.any(arr < 1):
        raise ValueError("proposal pmf is supported on n >= 1")
    out = np.exp(log_proposal_pmf(arr))
    return float(out) if out.ndim == 0 else out


def double_zipf_pmf(n):
    """Pmf of the interleaved envelope on ``n >= 2``."""
    arr = np.asarray(n)
    if np.any(arr < 2):
        raise ValueError("double-Zipf pmf is supported on n >= 2")
    out = 0.5 * np.exp(log_proposal_pmf(arr // 2))
    return float(out) if out.ndim == 0 else out


def zipf_pmf(n):
    """The Zipf(3/2) target ``n**-1.5 / zeta(3/2)``."""
    n = np.asarray(n, dtype=float)
    return n ** -1.5 / ZETA_3_2


def proposal_from_uniform(u):
    """``floor(u**-2)`` for ``u`` in (0, 1]; returned as float to survive huge values."""
    return np.floor(np.asarray(u, dtype=float) ** -2.0)


def _open_uniform(rng, size):
    # numpy draws from [0, 1); flip to (0, 1] so u**-2 stays finite
    return 1.0 - rng.random(size)


def sample_proposal(rng, size=None):
    """Draw from ``b``.  Returns an int for ``size=None``, else a float array."""
    y = proposal_from_uniform(_open_uniform(rng, size))
    return int(y) if size is None else y


def double_zipf_from_uniforms(u1, u2):
    y = proposal_from_uniform(u1)
    return 2.0 * y + (np.asarray(u2) >= 0.5)


def sample_double_zipf(rng, size=None):
    """Draw from ``b2``: ``2Y`` or ``2Y+1`` with a fair coin, ``Y ~ b``."""
    u1 = _open_uniform(rng, size)
    u2 = rng.random(size)
    n = double_zipf_from_uniforms(u1, u2)
    return int(n) if size is None else n
