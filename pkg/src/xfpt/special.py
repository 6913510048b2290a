"""Special functions used throughout the package.

Thin, domain-checked wrappers over :mod:`scipy.special`, plus log-domain
variants needed where first-passage probabilities underflow double precision.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special as _sp

__all__ = ["erfc", "log_erfc", "erfcx", "log_gamma", "lambert_w"]

_INV_E = math.exp(-1.0)


def erfc(z):
    """Complementary error function, ``1 - erf(z)``."""
    return _sp.erfc(z)


def erfcx(z):
    """Scaled complementary error function ``exp(z**2) * erfc(z)``."""
    return _sp.erfcx(z)


def log_erfc(z):
    """Natural log of ``erfc(z)``, accurate where ``erfc`` underflows.

    Uses ``log(erfcx(z)) - z**2`` for positive arguments, which stays finite
    far past ``z = 27`` where ``erfc`` itself is zero in double precision.
    """
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z > 0
    out[pos] = np.log(_sp.erfcx(z[pos])) - z[pos] ** 2
    out[~pos] = np.log(_sp.erfc(z[~pos]))
    return out[()] if out.ndim == 0 else out


def log_gamma(x):
    """``ln Gamma(x)`` for ``x > 0``.

    Raises
    ------
    ValueError
        If any ``x <= 0``.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError("log_gamma is defined here only for x > 0")
    out = _sp.gammaln(arr)
    return out[()] if np.ndim(out) == 0 else out


def lambert_w(branch: int, x: float) -> float:
    """Real Lambert W: the ``w`` with ``w * exp(w) == x`` on ``branch``.

    Parameters
    ----------
    branch : {0, -1}
        Principal branch (``w >= -1``) or lower branch (``w <= -1``).
    x : float
        Branch 0 needs ``x >= -1/e``; branch -1 needs ``-1/e <= x < 0``.
    """
    if branch not in (0, -1):
        raise ValueError("branch must be 0 or -1")
    x = float(x)
    # Tolerate the rounding of -1/e itself.
    if x < -_INV_E - 1e-15:
        raise ValueError(f"lambert_w undefined for x={x} < -1/e")
    if branch == -1 and x >= 0:
        raise ValueError("branch -1 requires x < 0")
    x = max(x, -_INV_E)
    if x + _INV_E < 1e-10:
        # branch-point series in q = sqrt(2 (e x + 1)); scipy returns nan here
        q = math.sqrt(max(2.0 * (math.e * x + 1.0), 0.0)) * (1.0 if branch == 0 else -1.0)
        return -1.0 + q - q * q / 3.0 + 11.0 / 72.0 * q**3
    w = _sp.lambertw(x, branch).real
    # One Halley polish step; scipy is already close to machine precision.
    # Skipped next to the branch point, where the step is ill-conditioned.
    if math.isfinite(w) and abs(w + 1.0) > 1e-4:
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        if denom != 0.0:
            w -= f / denom
    return float(w)
