"""Extended-precision real arithmetic for the stratum sampler.

Only the forward sampler's log-space pmf/CDF math runs at extended
precision; everything else in the package uses native float64. The
backend is gmpy2 (MPFR) when importable, else mpmath. Both expose the
same tiny surface: number construction, log/log1p/exp, and arithmetic
at a fixed significand precision.
"""

from __future__ import annotations

try:
    import gmpy2

    HAS_GMPY2 = True
except ImportError:  # pragma: no cover - exercised via the mpmath wrapper tests
    gmpy2 = None
    HAS_GMPY2 = False

import mpmath


class _Gmpy2Backend:
    """MPFR-backed real arithmetic at a fixed precision."""

    name = "gmpy2"

    def __init__(self, bits: int):
        self.bits = bits
        self._ctx = gmpy2.context(precision=bits)

    def real(self, v):
        return gmpy2.mpfr(v, self.bits)

    @property
    def neg_inf(self):
        return gmpy2.mpfr("-inf")

    def is_neg_inf(self, x) -> bool:
        return gmpy2.is_infinite(x) and x < 0

    def add(self, x, y):
        return self._ctx.add(x, y)

    def sub(self, x, y):
        return self._ctx.sub(x, y)

    def mul(self, x, y):
        return self._ctx.mul(x, y)

    def div(self, x, y):
        return self._ctx.div(x, y)

    def log(self, x):
        return self._ctx.log(x)

    def log1p(self, x):
        return self._ctx.log1p(x)

    def exp(self, x):
        return self._ctx.exp(x)

    def to_float(self, x) -> float:
        return float(x)


class _MpmathBackend:
    """mpmath-backed real arithmetic at a fixed precision."""

    name = "mpmath"

    def __init__(self, bits: int):
        self.bits = bits
        ctx = mpmath.MPContext()
        ctx.prec = bits
        self._ctx = ctx

    def real(self, v):
        return self._ctx.mpf(v)

    @property
    def neg_inf(self):
        return self._ctx.ninf

    def is_neg_inf(self, x) -> bool:
        return x == self._ctx.ninf

    def add(self, x, y):
        return self._ctx.fadd(x, y)

    def sub(self, x, y):
        return self._ctx.fsub(x, y)

    def mul(self, x, y):
        return self._ctx.fmul(x, y)

    def div(self, x, y):
        return self._ctx.fdiv(x, y)

    def log(self, x):
        return self._ctx.log(x)

    def log1p(self, x):
        return self._ctx.log1p(x)

    def exp(self, x):
        return self._ctx.exp(x)

    def to_float(self, x) -> float:
        return float(x)


def make_backend(bits: int, prefer: str = "auto"):
    """Build an arithmetic backend at the given significand precision.

    prefer: "auto" picks gmpy2 when available; "gmpy2"/"mpmath" force one.
    """
    if prefer not in ("auto", "gmpy2", "mpmath"):
        raise ValueError(f"unknown backend {prefer!r}")
    if prefer == "gmpy2" or (prefer == "auto" and HAS_GMPY2):
        if not HAS_GMPY2:
            raise RuntimeError("gmpy2 requested but not importable")
        return _Gmpy2Backend(bits)
    return _MpmathBackend(bits)
