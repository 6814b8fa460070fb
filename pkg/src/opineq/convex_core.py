"""Proper closed convex functions on R and R^2 (identified with C).

A ConvexFunction is either a closed-form preset (quadratic, |t|, exp, ...,
squared modulus on C) or a grid-sampled function with extended-real values.
Conjugation of sampled functions runs the monotone-slope transform over the
lower convex hull of the samples.  The dual grid always contains the exact
hull-edge slopes in addition to a uniform fill, which makes the double
transform reproduce the sampled envelope node-for-node instead of losing
O(dual spacing^2 / curvature) per node.

Pairing conventions: on R the pairing is x_star * x; on R^2 = C it is
<z_star, z> = Re(z_star * conj(z)).
"""

import math
import re

import numpy as np

from .errors import (
    ConvexityError,
    DomainError,
    NonDifferentiableError,
    PreconditionError,
    WitnessError,
)
from .extreal import ExtReal

_MEMBERSHIP_RTOL = 1e-10


def pairing(x_star, x):
    """<x_star, x>: real product in 1D, Re(z_star conj(z)) in 2D."""
    if isinstance(x_star, complex) or isinstance(x, complex):
        return (complex(x_star) * complex(x).conjugate()).real
    return float(x_star) * float(x)


class AffinePair:
    """Minorant l(x) = <x_star, x> - t_star, i.e. a point of E(phi*)."""

    __slots__ = ("t_star", "x_star")

    def __init__(self, t_star, x_star):
        self.t_star = float(t_star)
        self.x_star = x_star if isinstance(x_star, complex) else float(x_star)

    def __call__(self, x):
        return pairing(self.x_star, x) - self.t_star

    def in_conjugate_epigraph(self, phi, rtol=_MEMBERSHIP_RTOL):
        """(t_star, x_star) in E(phi*) iff l <= phi at every grid node."""
        return phi._minorant_defect(self) <= rtol * phi._value_scale()

    def __repr__(self):
        return f"AffinePair(t_star={self.t_star!r}, x_star={self.x_star!r})"


# ---------------------------------------------------------------------------
# Closed-form presets
# ---------------------------------------------------------------------------

class _Preset:
    dim = 1

    def evaluate(self, x):            # float or math.inf
        raise NotImplementedError

    def evaluate_array(self, x):
        x = np.asarray(x, dtype=float)
        return np.vectorize(self.evaluate, otypes=[float])(x)

    def gradient(self, x):
        lo, hi = self._subdiff_checked(x)
        if lo != hi:
            raise NonDifferentiableError(f"{self.ident} has a kink at {x}")
        return lo

    def subdiff(self, x):
        """Subdifferential interval (lo, hi) with +-inf endpoints, or None if empty."""
        raise NotImplementedError

    def _subdiff_checked(self, x):
        iv = self.subdiff(x)
        if iv is None:
            raise NonDifferentiableError(f"{self.ident} has empty subdifferential at {x}")
        lo, hi = iv
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise NonDifferentiableError(f"{self.ident} has unbounded subdifferential at {x}")
        return lo, hi

    def conjugate(self):
        raise NotImplementedError

    @property
    def ident(self):
        raise NotImplementedError


class _Quad(_Preset):
    """a * t^2 (default a = 1/2, the self-conjugate normalization)."""

    def __init__(self, a=0.5):
        if a <= 0:
            raise PreconditionError("quadratic coefficient must be positive")
        self.a = float(a)

    def evaluate(self, x):
        return self.a * x * x

    def evaluate_array(self, x):
        return self.a * np.square(np.asarray(x, dtype=float))

    def subdiff(self, x):
        g = 2.0 * self.a * x
        return (g, g)

    def conjugate(self):
        return _Quad(1.0 / (4.0 * self.a))

    @property
    def ident(self):
        return f"quad:{self.a:g}"


class _Power(_Preset):
    """c * |t|^p with p > 1; p = 1 is handled by the indicator-dual pair."""

    def __init__(self, c=1.0, p=4.0):
        if c <= 0 or p <= 1:
            raise PreconditionError("power preset needs c > 0 and p > 1")
        self.c = float(c)
        self.p = float(p)

    def evaluate(self, x):
        return self.c * abs(x) ** self.p

    def evaluate_array(self, x):
        return self.c * np.abs(np.asarray(x, dtype=float)) ** self.p

    def subdiff(self, x):
        g = self.c * self.p * abs(x) ** (self.p - 1.0) * math.copysign(1.0, x)
        if x == 0.0:
            g = 0.0
        return (g, g)

    def conjugate(self):
        q = self.p / (self.p - 1.0)
        cstar = (1.0 - 1.0 / self.p) * (self.c * self.p) ** (-1.0 / (self.p - 1.0))
        return _Power(cstar, q)

    @property
    def ident(self):
        return f"pow:{self.c:g},{self.p:g}"


class _Abs(_Preset):
    def evaluate(self, x):
        return abs(x)

    def evaluate_array(self, x):
        return np.abs(np.asarray(x, dtype=float))

    def subdiff(self, x):
        if x < 0.0:
            return (-1.0, -1.0)
        if x > 0.0:
            return (1.0, 1.0)
        return (-1.0, 1.0)

    def conjugate(self):
        return _Indicator(-1.0, 1.0)

    @property
    def ident(self):
        return "abs"


class _Exp(_Preset):
    def evaluate(self, x):
        return math.exp(x)

    def evaluate_array(self, x):
        return np.exp(np.asarray(x, dtype=float))

    def subdiff(self, x):
        g = math.exp(x)
        return (g, g)

    def conjugate(self):
        return _XLogX()

    @property
    def ident(self):
        return "exp"


class _XLogX(_Preset):
    """s log s - s on s > 0, 0 at s = 0, +inf on s < 0 (conjugate of exp)."""

    def evaluate(self, x):
        if x < 0.0:
            return math.inf
        if x == 0.0:
            return 0.0
        return x * math.log(x) - x

    def subdiff(self, x):
        if x < 0.0:
            return None
        if x == 0.0:
            return None  # slopes run off to -inf; no supporting line at 0
        g = math.log(x)
        return (g, g)

    def conjugate(self):
        return _Exp()

    @property
    def ident(self):
        return "xlogx"


class _PosPart(_Preset):
    def evaluate(self, x):
        return max(0.0, x)

    def evaluate_array(self, x):
        return np.maximum(0.0, np.asarray(x, dtype=float))

    def subdiff(self, x):
        if x < 0.0:
            return (0.0, 0.0)
        if x > 0.0:
            return (1.0, 1.0)
        return (0.0, 1.0)

    def conjugate(self):
        return _Indicator(0.0, 1.0)

    @property
    def ident(self):
        return "pospart"


class _Cosh(_Preset):
    """cosh(t) - 1: smooth, nonnegative, vanishing at 0, cosh'' >= 1."""

    def evaluate(self, x):
        return math.cosh(x) - 1.0

    def evaluate_array(self, x):
        return np.cosh(np.asarray(x, dtype=float)) - 1.0

    def subdiff(self, x):
        g = math.sinh(x)
        return (g, g)

    def conjugate(self):
        return _CoshConj()

    @property
    def ident(self):
        return "cosh"


class _CoshConj(_Preset):
    """s asinh(s) - sqrt(1 + s^2) + 1 (conjugate of cosh(t) - 1)."""

    def evaluate(self, x):
        return x * math.asinh(x) - math.hypot(1.0, x) + 1.0

    def subdiff(self, x):
        g = math.asinh(x)
        return (g, g)

    def conjugate(self):
        return _Cosh()

    @property
    def ident(self):
        return "coshconj"


class _Affine(_Preset):
    """c1 * t + c0."""

    def __init__(self, c1, c0=0.0):
        self.c1 = float(c1)
        self.c0 = float(c0)

    def evaluate(self, x):
        return self.c1 * x + self.c0

    def evaluate_array(self, x):
        return self.c1 * np.asarray(x, dtype=float) + self.c0

    def subdiff(self, x):
        return (self.c1, self.c1)

    def conjugate(self):
        return _Indicator(self.c1, self.c1, level=-self.c0)

    @property
    def ident(self):
        return f"affine:{self.c1:g},{self.c0:g}"


class _Indicator(_Preset):
    """level on [lo, hi], +inf outside."""

    def __init__(self, lo, hi, level=0.0):
        if hi < lo:
            raise PreconditionError("indicator interval is empty")
        self.lo = float(lo)
        self.hi = float(hi)
        self.level = float(level)

    def evaluate(self, x):
        if self.lo <= x <= self.hi:
            return self.level
        return math.inf

    def subdiff(self, x):
        if x < self.lo or x > self.hi:
            return None
        lo, hi = 0.0, 0.0
        if x == self.lo:
            lo = -math.inf
        if x == self.hi:
            hi = math.inf
        if self.lo == self.hi:
            return (-math.inf, math.inf)
        return (lo, hi)

    def gradient(self, x):
        if self.lo < x < self.hi:
            return 0.0
        raise NonDifferentiableError(f"{self.ident} not differentiable at {x}")

    def conjugate(self):
        return _Support(self.lo, self.hi, level=self.level)

    @property
    def ident(self):
        if self.level:
            return f"indicator:{self.lo:g},{self.hi:g},{self.level:g}"
        return f"indicator:{self.lo:g},{self.hi:g}"


class _Support(_Preset):
    """max(lo*s, hi*s) - level (conjugate of the indicator of [lo, hi])."""

    def __init__(self, lo, hi, level=0.0):
        self.lo = float(lo)
        self.hi = float(hi)
        self.level = float(level)

    def evaluate(self, x):
        return max(self.lo * x, self.hi * x) - self.level

    def subdiff(self, x):
        if x > 0.0:
            return (self.hi, self.hi)
        if x < 0.0:
            return (self.lo, self.lo)
        return (self.lo, self.hi)

    def conjugate(self):
        return _Indicator(self.lo, self.hi, level=-self.level)

    @property
    def ident(self):
        return f"support:{self.lo:g},{self.hi:g},{self.level:g}"


class _SqMod(_Preset):
    """a * |z|^2 on C."""

    dim = 2

    def __init__(self, a=1.0):
        if a <= 0:
            raise PreconditionError("sqmod coefficient must be positive")
        self.a = float(a)

    def evaluate(self, z):
        z = complex(z)
        return self.a * (z.real * z.real + z.imag * z.imag)

    def evaluate_array(self, z):
        z = np.asarray(z, dtype=complex)
        return self.a * (z.real ** 2 + z.imag ** 2)

    def gradient(self, z):
        return 2.0 * self.a * complex(z)

    def subdiff(self, z):
        g = self.gradient(z)
        return (g, g)

    def conjugate(self):
        return _SqMod(1.0 / (4.0 * self.a))

    @property
    def ident(self):
        return f"sqmod2d:{self.a:g}"


_PRESET_GRAMMAR = {
    "quad": (_Quad, (float,)),
    "pow": (_Power, (float, float)),
    "abs": (_Abs, ()),
    "exp": (_Exp, ()),
    "xlogx": (_XLogX, ()),
    "pospart": (_PosPart, ()),
    "cosh": (_Cosh, ()),
    "affine": (_Affine, (float, float)),
    "indicator": (_Indicator, (float, float, float)),
    "support": (_Support, (float, float, float)),
    "sqmod2d": (_SqMod, (float,)),
}


def _parse_preset(spec):
    name, _, argstr = spec.partition(":")
    name = name.strip()
    if name not in _PRESET_GRAMMAR:
        raise PreconditionError(f"unknown preset id {spec!r}")
    cls, argtypes = _PRESET_GRAMMAR[name]
    if not argstr:
        args = ()
    else:
        parts = [p for p in re.split(r"[,\s]+", argstr.strip()) if p]
        if len(parts) > len(argtypes):
            raise PreconditionError(f"too many parameters in preset {spec!r}")
        args = tuple(t(p) for t, p in zip(argtypes, parts))
    return cls(*args)


# ---------------------------------------------------------------------------
# The ConvexFunction wrapper
# ---------------------------------------------------------------------------

class ConvexFunction:
    """Proper closed convex function on R or R^2, preset or grid-sampled.

    Immutable after construction; all operations are pure functions.
    """

    def __init__(self, kind, *, preset=None, x=None, y=None, values=None,
                 base=None, ident=None):
        self.kind = kind
        self.preset = preset
        self.base = base
        self.x = x
        self.y = y
        self.values = values
        self._hull_cache = None
        if kind == "preset":
            self.dim = preset.dim
            self.ident = ident or preset.ident
        elif kind == "sampled1d":
            self.dim = 1
            self.ident = ident or f"sampled1d[{len(x)}]"
        elif kind == "sampled2d":
            self.dim = 2
            self.ident = ident or f"sampled2d[{len(x)}x{len(y)}]"
        elif kind in ("lifted", "cyl"):
            self.dim = 2
            tag = "lifted" if kind == "lifted" else "cyl_re"
            self.ident = ident or f"{tag}({base.ident})"
        else:
            raise PreconditionError(f"unknown ConvexFunction kind {kind!r}")

    # -- constructors --------------------------------------------------

    @classmethod
    def from_preset(cls, spec):
        return cls("preset", preset=_parse_preset(spec))

    @classmethod
    def from_samples_1d(cls, x, values, require_convex=True, ident=None):
        x = np.asarray(x, dtype=float)
        v = np.asarray(values, dtype=float)
        if x.ndim != 1 or v.shape != x.shape:
            raise PreconditionError("1D samples need matching 1D node/value arrays")
        order = np.argsort(x, kind="stable")
        x, v = x[order], v[order]
        if np.any(np.diff(x) <= 0):
            raise PreconditionError("sample nodes must be distinct")
        if np.any(np.isnan(v)) or np.any(v == -np.inf):
            raise PreconditionError("sampled values must be in (-inf, +inf]")
        if not np.any(np.isfinite(v)):
            raise PreconditionError("improper input: no finite sample value")
        fn = cls("sampled1d", x=x, values=v, ident=ident)
        if require_convex:
            fn._check_convex_1d()
        return fn

    @classmethod
    def from_samples_2d(cls, x, y, values, require_convex=True, ident=None):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        v = np.asarray(values, dtype=float)
        if x.ndim != 1 or y.ndim != 1 or v.shape != (len(x), len(y)):
            raise PreconditionError("2D samples need a full (len(x), len(y)) value grid")
        if np.any(np.diff(x) <= 0) or np.any(np.diff(y) <= 0):
            raise PreconditionError("grid axes must be strictly increasing")
        if np.any(np.isnan(v)) or np.any(v == -np.inf):
            raise PreconditionError("sampled values must be in (-inf, +inf]")
        if not np.any(np.isfinite(v)):
            raise PreconditionError("improper input: no finite sample value")
        fn = cls("sampled2d", x=x, y=y, values=v, ident=ident)
        if require_convex:
            fn._check_convex_2d()
        return fn

    @classmethod
    def from_csv(cls, path, require_convex=True):
        """Load (x, value) or (x, y, value) rows; the literal token inf is +inf."""
        rows = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = [p.strip() for p in line.split(",")]
                rows.append(parts)
        if not rows:
            raise PreconditionError(f"empty sample file {path}")
        width = len(rows[0])
        if any(len(r) != width for r in rows) or width not in (2, 3):
            raise PreconditionError("sample CSV must have 2 or 3 columns throughout")

        def val(tok):
            return math.inf if tok == "inf" else float(tok)

        if width == 2:
            x = np.array([float(r[0]) for r in rows])
            v = np.array([val(r[1]) for r in rows])
            return cls.from_samples_1d(x, v, require_convex=require_convex, ident=str(path))
        xs = np.array([float(r[0]) for r in rows])
        ys = np.array([float(r[1]) for r in rows])
        vs = np.array([val(r[2]) for r in rows])
        ux, uy = np.unique(xs), np.unique(ys)
        if len(rows) != len(ux) * len(uy):
            raise PreconditionError("3-column CSV must cover a full rectangular grid")
        grid = np.full((len(ux), len(uy)), np.nan)
        ix = np.searchsorted(ux, xs)
        iy = np.searchsorted(uy, ys)
        grid[ix, iy] = vs
        if np.any(np.isnan(grid)):
            raise PreconditionError("3-column CSV must cover a full rectangular grid")
        return cls.from_samples_2d(ux, uy, grid, require_convex=require_convex, ident=str(path))

    # -- validation -----------------------------------------------------

    def _check_convex_1d(self):
        xf, vf = self._finite_nodes_1d()
        if len(xf) < 2:
            return
        # interior +inf between finite nodes breaks closed convexity
        lo, hi = xf[0], xf[-1]
        inside = (self.x > lo) & (self.x < hi) & ~np.isfinite(self.values)
        if np.any(inside):
            raise ConvexityError("+inf node strictly inside the finite domain")
        slopes = np.diff(vf) / np.diff(xf)
        scale = 1.0 + np.max(np.abs(slopes))
        if np.any(np.diff(slopes) < -1e-9 * scale):
            raise ConvexityError("sampled values violate discrete convexity")

    def _check_convex_2d(self):
        v = self.values
        for arr, nodes in ((v, self.y), (v.T, self.x)):
            for row in range(arr.shape[0]):
                line = arr[row]
                finite = np.isfinite(line)
                if finite.sum() < 3:
                    continue
                idx = np.where(finite)[0]
                if np.any(~finite[idx[0]:idx[-1] + 1]):
                    raise ConvexityError("+inf node strictly inside the finite domain")
                xs, vs = nodes[idx], line[idx]
                slopes = np.diff(vs) / np.diff(xs)
                scale = 1.0 + np.max(np.abs(slopes))
                if np.any(np.diff(slopes) < -1e-9 * scale):
                    raise ConvexityError("sampled values violate discrete convexity along an axis")
        # random grid-rounded midpoints catch cross-terms the axis sweep misses
        finite = np.isfinite(v)
        pts = np.argwhere(finite)
        if len(pts) >= 4:
            rng = np.random.default_rng(0)
            take = rng.integers(0, len(pts), size=(200, 2))
            hx = np.max(np.diff(self.x))
            hy = np.max(np.diff(self.y))
            sx = np.nanmax(np.abs(np.diff(v, axis=0))) / np.min(np.diff(self.x)) if v.shape[0] > 1 else 0.0
            sy = np.nanmax(np.abs(np.diff(v, axis=1))) / np.min(np.diff(self.y)) if v.shape[1] > 1 else 0.0
            sx = 0.0 if not np.isfinite(sx) else sx
            sy = 0.0 if not np.isfinite(sy) else sy
            tol = sx * hx + sy * hy + 1e-9 * (1.0 + np.max(np.abs(v[finite])))
            for a, b in take:
                ia, ib = pts[a], pts[b]
                mid = (ia + ib) // 2
                if not finite[mid[0], mid[1]]:
                    continue
                if v[mid[0], mid[1]] > 0.5 * (v[ia[0], ia[1]] + v[ib[0], ib[1]]) + tol:
                    raise ConvexityError("sampled values violate grid midpoint convexity")

    # -- basic queries ---------------------------------------------------

    def _finite_nodes_1d(self):
        finite = np.isfinite(self.values)
        return self.x[finite], self.values[finite]

    def grid_modulus(self):
        if self.kind == "sampled1d":
            return float(np.max(np.diff(self.x)))
        if self.kind == "sampled2d":
            return float(max(np.max(np.diff(self.x)), np.max(np.diff(self.y))))
        raise PreconditionError("grid modulus is defined for sampled functions only")

    def _value_scale(self):
        if self.kind == "sampled1d":
            _, vf = self._finite_nodes_1d()
            return 1.0 + float(np.max(np.abs(vf))) + float(np.max(np.abs(self.x)))
        if self.kind == "sampled2d":
            finite = np.isfinite(self.values)
            return (1.0 + float(np.max(np.abs(self.values[finite])))
                    + float(np.max(np.abs(self.x))) + float(np.max(np.abs(self.y))))
        return 1.0

    def _hull_1d(self):
        """Indices (into the finite-node arrays) of the lower convex hull."""
        if self._hull_cache is None:
            xf, vf = self._finite_nodes_1d()
            keep = []
            for i in range(len(xf)):
                while len(keep) >= 2:
                    i0, i1 = keep[-2], keep[-1]
                    # drop i1 when it sits on or above the chord i0 -> i
                    if ((vf[i1] - vf[i0]) * (xf[i] - xf[i0])
                            >= (vf[i] - vf[i0]) * (xf[i1] - xf[i0])):
                        keep.pop()
                    else:
                        break
                keep.append(i)
            self._hull_cache = (xf[keep], vf[keep])
        return self._hull_cache

    # -- membership helper -------------------------------------------------

    def _minorant_defect(self, pair):
        """max over finite grid nodes of l(x) - phi(x); <= 0 means minorant."""
        if self.kind == "sampled1d":
            xf, vf = self._finite_nodes_1d()
            return float(np.max(pair.x_star * xf - pair.t_star - vf))
        if self.kind == "sampled2d":
            finite = np.isfinite(self.values)
            X, Y = np.meshgrid(self.x, self.y, indexing="ij")
            zs = pair.x_star
            lvals = (complex(zs).real * X + complex(zs).imag * Y) - pair.t_star
            return float(np.max(lvals[finite] - self.values[finite]))
        if self.kind == "preset":
            conj = self.preset.conjugate()
            star = conj.evaluate(pair.x_star if self.dim == 2 else float(pair.x_star))
            if math.isinf(star):
                return math.inf
            return star - pair.t_star
        if self.kind == "lifted":
            sub = AffinePair(pair.t_star, complex(pair.x_star).real)
            return self.base._minorant_defect(sub)
        if self.kind == "cyl":
            zs = complex(pair.x_star)
            if abs(zs.imag) > 1e-12 * (1.0 + abs(zs)):
                return math.inf
            return self.base._minorant_defect(AffinePair(pair.t_star, zs.real))
        raise PreconditionError("unsupported kind")


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def evaluate(phi, x):
    """phi(x) as an ExtReal.

    Sampled functions interpolate by the maximum of supporting affine
    minorants (the lower convex hull), which never exceeds node-implied
    convexity; querying a node returns the stored value.
    """
    if phi.kind == "preset":
        val = phi.preset.evaluate(complex(x) if phi.dim == 2 else float(x))
        return ExtReal.pos_inf() if math.isinf(val) else ExtReal(val)
    if phi.kind == "sampled1d":
        return _eval_sampled_1d(phi, float(x))
    if phi.kind == "sampled2d":
        return _eval_sampled_2d(phi, complex(x))
    if phi.kind == "lifted":
        z = complex(x)
        if z.imag != 0.0:
            return ExtReal.pos_inf()
        return evaluate(phi.base, z.real)
    if phi.kind == "cyl":
        return evaluate(phi.base, complex(x).real)
    raise PreconditionError("unsupported kind")


def _eval_sampled_1d(phi, x):
    lo, hi = phi.x[0], phi.x[-1]
    scale = 1.0 + max(abs(lo), abs(hi))
    if x < lo - 1e-12 * scale or x > hi + 1e-12 * scale:
        raise DomainError(f"point {x} outside the sampled bounding box [{lo}, {hi}]")
    snap = np.searchsorted(phi.x, x)
    for i in (snap - 1, snap):
        if 0 <= i < len(phi.x) and abs(phi.x[i] - x) <= 1e-12 * scale:
            v = phi.values[i]
            return ExtReal.pos_inf() if math.isinf(v) else ExtReal(v)
    xh, vh = phi._hull_1d()
    if x < xh[0] or x > xh[-1]:
        return ExtReal.pos_inf()
    return ExtReal(float(np.interp(x, xh, vh)))


def _eval_sampled_2d(phi, z):
    qx, qy = z.real, z.imag
    sx = 1.0 + max(abs(phi.x[0]), abs(phi.x[-1]))
    sy = 1.0 + max(abs(phi.y[0]), abs(phi.y[-1]))
    if (qx < phi.x[0] - 1e-12 * sx or qx > phi.x[-1] + 1e-12 * sx
            or qy < phi.y[0] - 1e-12 * sy or qy > phi.y[-1] + 1e-12 * sy):
        raise DomainError(f"point {z} outside the sampled bounding box")
    ix = int(np.argmin(np.abs(phi.x - qx)))
    iy = int(np.argmin(np.abs(phi.y - qy)))
    if abs(phi.x[ix] - qx) <= 1e-12 * sx and abs(phi.y[iy] - qy) <= 1e-12 * sy:
        v = phi.values[ix, iy]
        return ExtReal.pos_inf() if math.isinf(v) else ExtReal(v)
    return _envelope_2d(phi, qx, qy)


def _envelope_2d(phi, qx, qy):
    from scipy.spatial import ConvexHull, QhullError

    finite = np.isfinite(phi.values)
    X, Y = np.meshgrid(phi.x, phi.y, indexing="ij")
    px, py, pv = X[finite], Y[finite], phi.values[finite]
    pts2 = np.column_stack([px, py])
    # collinear-domain fallback: treat as a 1D function along the line
    span = pts2 - pts2[0]
    if len(pts2) < 3 or np.linalg.matrix_rank(span, tol=1e-10) < 2:
        d = span[np.argmax(np.hypot(span[:, 0], span[:, 1]))]
        nd = np.hypot(d[0], d[1])
        if nd == 0.0:
            return ExtReal.pos_inf()
        d = d / nd
        t = span @ d
        q = np.array([qx - pts2[0, 0], qy - pts2[0, 1]])
        off = q - (q @ d) * d
        if np.hypot(off[0], off[1]) > 1e-10 * (1.0 + nd):
            return ExtReal.pos_inf()
        order = np.argsort(t)
        line = ConvexFunction.from_samples_1d(t[order], pv[order], require_convex=False)
        return _eval_sampled_1d(line, float(q @ d))
    try:
        hull2 = ConvexHull(pts2)
    except QhullError:
        return ExtReal.pos_inf()
    # outside the projected finite domain -> +inf
    he = hull2.equations
    if np.any(he[:, 0] * qx + he[:, 1] * qy + he[:, 2] > 1e-10 * (1.0 + abs(qx) + abs(qy))):
        return ExtReal.pos_inf()
    hull3 = ConvexHull(np.column_stack([px, py, pv]))
    best = -math.inf
    for a, b, c, d in hull3.equations:
        if c < -1e-12:  # lower facet: plane z = -(a x + b y + d)/c supports from below
            best = max(best, -(a * qx + b * qy + d) / c)
    if not math.isfinite(best):
        return ExtReal.pos_inf()
    return ExtReal(best)


# -- conjugation ------------------------------------------------------------

def _monotone_slope_transform(xh, vh, s):
    """max_i (s*x_i - v_i) over hull vertices for each sorted slope in s.

    Linear in len(xh) + len(s): the argmax index is nondecreasing in s
    because hull-edge slopes increase.
    """
    out = np.empty(len(s))
    k = 0
    n = len(xh)
    for j, sj in enumerate(s):
        while k + 1 < n and sj * xh[k + 1] - vh[k + 1] >= sj * xh[k] - vh[k]:
            k += 1
        out[j] = sj * xh[k] - vh[k]
    return out


def _merge_close(sorted_vals, rel=1e-11):
    """Collapse near-duplicate sorted values (relative gap below rel).

    A dual node anywhere inside a sample node's subdifferential interval
    keeps the double transform exact at that node, so merging at this
    tolerance costs at most ~rel * span^2 in the biconjugate.
    """
    if len(sorted_vals) == 0:
        return sorted_vals
    keep = [sorted_vals[0]]
    for v in sorted_vals[1:]:
        if v - keep[-1] > rel * (1.0 + abs(v)):
            keep.append(v)
    return np.asarray(keep)


def _dual_nodes(xh, vh, cardinality):
    """Hull-edge slopes plus a uniform fill over the 5%-padded slope range.

    Keeping the exact breakpoints makes the sampled conjugate agree with the
    true piecewise-linear conjugate everywhere, so the double transform is
    node-exact on the envelope.
    """
    if len(xh) >= 2:
        slopes = np.diff(vh) / np.diff(xh)
        smin, smax = float(np.min(slopes)), float(np.max(slopes))
    else:
        slopes = np.empty(0)
        smin = smax = 0.0
    pad = 0.05 * (smax - smin)
    if pad <= 1e-12 * (1.0 + abs(smin) + abs(smax)):
        pad = 0.5
    fill = np.linspace(smin - pad, smax + pad, max(int(cardinality), 2))
    return _merge_close(np.unique(np.concatenate([slopes, fill])))


def conjugate(phi):
    """Legendre-Fenchel transform phi*(x*) = sup_x { <x*, x> - phi(x) }."""
    if phi.kind == "preset":
        return ConvexFunction("preset", preset=phi.preset.conjugate())
    if phi.kind == "lifted":
        return ConvexFunction("cyl", base=conjugate(phi.base))
    if phi.kind == "cyl":
        return ConvexFunction("lifted", base=conjugate(phi.base))
    if phi.kind == "sampled1d":
        xf, _ = phi._finite_nodes_1d()
        if len(xf) < 2:
            raise PreconditionError("sampled conjugate needs at least 2 finite nodes")
        xh, vh = phi._hull_1d()
        s = _dual_nodes(xh, vh, len(phi.x))
        vals = _monotone_slope_transform(xh, vh, s)
        return ConvexFunction.from_samples_1d(
            s, vals, require_convex=False, ident=f"conj({phi.ident})")
    if phi.kind == "sampled2d":
        return _conjugate_2d(phi)
    raise PreconditionError("unsupported kind")


def _padded_union(all_slopes, cardinality):
    if all_slopes:
        smin = min(float(np.min(sl)) for sl in all_slopes)
        smax = max(float(np.max(sl)) for sl in all_slopes)
    else:
        smin = smax = 0.0
    pad = 0.05 * (smax - smin)
    if pad <= 1e-12 * (1.0 + abs(smin) + abs(smax)):
        pad = 0.5
    fill = np.linspace(smin - pad, smax + pad, max(int(cardinality), 2))
    union = np.unique(np.concatenate(all_slopes + [fill])) if all_slopes else fill
    return _merge_close(union)


def _conjugate_2d(phi, target_x=None, target_y=None):
    """Factored transform: 1D transform along y per row, then along x.

    Partial conjugation preserves convexity in the remaining variable, and
    maximizing over the grid factors exactly, so at the dual nodes this
    matches the brute-force sup over all grid nodes.  When target axes are
    given the transform is evaluated on them instead of the auto grid (used
    to read the biconjugate back on the original nodes).
    """
    nx, ny = len(phi.x), len(phi.y)
    if not np.any(np.isfinite(phi.values)):
        raise PreconditionError("improper input: no finite sample value")

    # pass 1: common eta grid from the union of per-row hull-edge slopes
    row_hulls = []
    all_slopes = []
    for i in range(nx):
        line = phi.values[i]
        finite = np.isfinite(line)
        if finite.sum() == 0:
            row_hulls.append(None)
            continue
        yf, vf = phi.y[finite], line[finite]
        sub = ConvexFunction.from_samples_1d(yf, vf, require_convex=False)
        yh, vh = sub._hull_1d()
        row_hulls.append((yh, vh))
        if len(yh) >= 2:
            all_slopes.append(np.diff(vh) / np.diff(yh))
    eta = np.asarray(target_y, dtype=float) if target_y is not None \
        else _padded_union(all_slopes, ny)

    g = np.full((nx, len(eta)), -math.inf)
    for i, hull in enumerate(row_hulls):
        if hull is None:
            continue
        g[i] = _monotone_slope_transform(hull[0], hull[1], eta)

    # pass 2: transform -g along x for every eta column
    col_hulls = []
    all_s1 = []
    for j in range(len(eta)):
        col = -g[:, j]
        finite = np.isfinite(col)
        sub = ConvexFunction.from_samples_1d(phi.x[finite], col[finite], require_convex=False)
        xh, vh = sub._hull_1d()
        col_hulls.append((xh, vh))
        if len(xh) >= 2:
            all_s1.append(np.diff(vh) / np.diff(xh))
    s1 = np.asarray(target_x, dtype=float) if target_x is not None \
        else _padded_union(all_s1, nx)

    out = np.empty((len(s1), len(eta)))
    for j, hull in enumerate(col_hulls):
        out[:, j] = _monotone_slope_transform(hull[0], hull[1], s1)
    return ConvexFunction.from_samples_2d(
        s1, eta, out, require_convex=False, ident=f"conj({phi.ident})")


def biconjugate_gap(phi):
    """max over finite-domain nodes of |phi**(x) - phi(x)|.

    Zero (to rounding) for closed convex sampled inputs; for non-convex
    input it equals the max deviation from the lower convex envelope.
    """
    cc = conjugate(conjugate(phi))
    if phi.kind == "preset":
        probe = np.linspace(-3.0, 3.0, 31)
        if phi.dim == 2:
            vals0 = np.array([phi.preset.evaluate(complex(t, u)) for t in probe for u in probe])
            vals1 = np.array([cc.preset.evaluate(complex(t, u)) for t in probe for u in probe])
        else:
            vals0 = np.array([phi.preset.evaluate(t) for t in probe])
            vals1 = np.array([cc.preset.evaluate(t) for t in probe])
        finite = np.isfinite(vals0) & np.isfinite(vals1)
        return float(np.max(np.abs(vals0[finite] - vals1[finite]))) if finite.any() else 0.0
    if phi.kind == "sampled1d":
        xf, vf = phi._finite_nodes_1d()
        gaps = [abs(float(evaluate(cc, t)) - v) for t, v in zip(xf, vf)]
        return float(max(gaps))
    if phi.kind == "sampled2d":
        star = conjugate(phi)
        back = _conjugate_2d(star, target_x=phi.x, target_y=phi.y)
        finite = np.isfinite(phi.values)
        return float(np.max(np.abs(back.values[finite] - phi.values[finite])))
    if phi.kind in ("lifted", "cyl"):
        return biconjugate_gap(phi.base)
    raise PreconditionError("unsupported kind")


# -- epsilon-subdifferential witnesses --------------------------------------

def eps_subdifferential_witness(phi, x0, eps):
    """Some (t*, x*) in E(phi*) with l(x0) >= phi(x0) - eps, or None.

    For eps > 0 and proper closed phi a witness always exists; for eps = 0
    absence is a legitimate outcome (reported as None, not an error).
    """
    if eps < 0:
        raise PreconditionError("eps must be >= 0")
    v0 = evaluate(phi, x0)
    if v0.is_inf:
        raise PreconditionError("witness point must lie in the finite domain")
    v0 = v0.value

    if phi.kind == "preset":
        pair = _preset_witness(phi, x0, v0, eps)
    elif phi.kind == "sampled1d":
        pair = _sampled_witness_1d(phi, float(x0), v0, eps)
    elif phi.kind == "lifted":
        sub = eps_subdifferential_witness(phi.base, complex(x0).real, eps)
        pair = AffinePair(sub.t_star, complex(float(sub.x_star), 0.0)) if sub else None
    elif phi.kind == "cyl":
        sub = eps_subdifferential_witness(phi.base, complex(x0).real, eps)
        pair = AffinePair(sub.t_star, complex(float(sub.x_star), 0.0)) if sub else None
    elif phi.kind == "sampled2d":
        pair = _sampled_witness_2d(phi, complex(x0), v0, eps)
    else:
        raise PreconditionError("unsupported kind")

    if pair is None and eps > 0:
        raise WitnessError(f"no witness found for eps={eps} at {x0}")
    return pair


def _touching_pair(x_star, x0, v0):
    return AffinePair(pairing(x_star, x0) - v0, x_star)


def _preset_witness(phi, x0, v0, eps):
    p = phi.preset
    if phi.dim == 2:
        g = p.gradient(complex(x0))
        return _touching_pair(g, complex(x0), v0)
    iv = p.subdiff(float(x0))
    if iv is not None:
        lo, hi = iv
        if lo <= 0.0 <= hi:
            s = 0.0
        elif math.isfinite(lo) and lo > 0.0:
            s = lo
        elif math.isfinite(hi) and hi < 0.0:
            s = hi
        else:
            s = 0.0
        return _touching_pair(s, float(x0), v0)
    if eps == 0.0:
        return None
    # empty exact subdifferential: chase the sup along the dual variable
    conj = p.conjugate()
    x0 = float(x0)

    def l_at(s):
        star = conj.evaluate(s)
        return -math.inf if math.isinf(star) else s * x0 - star

    s, step = 0.0, 1.0
    best_s, best = 0.0, l_at(0.0)
    for _ in range(200):
        for cand in (best_s - step, best_s + step):
            val = l_at(cand)
            if val > best:
                best, best_s = val, cand
        if best >= v0 - eps:
            star = conj.evaluate(best_s)
            return AffinePair(star, best_s)
        step *= 1.5 if best < v0 - eps else 0.5
    # refine around best_s
    from scipy.optimize import minimize_scalar

    res = minimize_scalar(lambda s: -l_at(s), bracket=(best_s - step, best_s, best_s + step))
    s = float(res.x)
    if l_at(s) >= v0 - eps:
        return AffinePair(conj.evaluate(s), s)
    return None


def _sampled_witness_1d(phi, x0, v0, eps):
    xh, vh = phi._hull_1d()
    cands = list(_dual_nodes(xh, vh, len(phi.x)))
    best_s, best_t, best_l = None, None, -math.inf
    for s in cands:
        t = float(np.max(s * xh - vh))
        l0 = s * x0 - t
        if l0 > best_l:
            best_s, best_t, best_l = s, t, l0
    tol = 1e-12 * phi._value_scale()
    if best_l >= v0 - eps - tol:
        return AffinePair(best_t, best_s)
    if eps == 0.0:
        return None
    # concave piecewise-linear objective: golden-section refinement
    lo, hi = cands[0], cands[-1]
    for _ in range(200):
        m1 = lo + 0.382 * (hi - lo)
        m2 = lo + 0.618 * (hi - lo)
        f1 = m1 * x0 - float(np.max(m1 * xh - vh))
        f2 = m2 * x0 - float(np.max(m2 * xh - vh))
        if f1 < f2:
            lo = m1
        else:
            hi = m2
    s = 0.5 * (lo + hi)
    t = float(np.max(s * xh - vh))
    if s * x0 - t >= v0 - eps - tol:
        return AffinePair(t, s)
    return None


def _sampled_witness_2d(phi, z0, v0, eps):
    finite = np.isfinite(phi.values)
    X, Y = np.meshgrid(phi.x, phi.y, indexing="ij")
    px, py, pv = X[finite], Y[finite], phi.values[finite]

    def support(ax, ay):
        return float(np.max(ax * px + ay * py - pv))

    # subgradient estimate from one-sided grid slopes, then a verified pair
    gx0 = _axis_slope(phi, z0, axis=0)
    gy0 = _axis_slope(phi, z0, axis=1)
    best = None
    best_l = -math.inf
    for ax, ay in [(gx0, gy0), (gx0, 0.0), (0.0, gy0), (0.0, 0.0)]:
        t = support(ax, ay)
        l0 = ax * z0.real + ay * z0.imag - t
        if l0 > best_l:
            best_l = l0
            best = AffinePair(t, complex(ax, ay))
    tol = 1e-12 * phi._value_scale()
    if best_l >= v0 - eps - tol:
        return best
    if eps == 0.0:
        return None
    from scipy.optimize import minimize

    def neg_l(a):
        return -(a[0] * z0.real + a[1] * z0.imag - support(a[0], a[1]))

    res = minimize(neg_l, x0=[gx0, gy0], method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 2000})
    ax, ay = res.x
    t = support(ax, ay)
    if ax * z0.real + ay * z0.imag - t >= v0 - eps - tol:
        return AffinePair(t, complex(ax, ay))
    return None


def _axis_slope(phi, z0, axis):
    nodes = phi.x if axis == 0 else phi.y
    q = z0.real if axis == 0 else z0.imag
    i = int(np.argmin(np.abs(nodes - q)))
    line = phi.values[:, int(np.argmin(np.abs(phi.y - z0.imag)))] if axis == 0 \
        else phi.values[int(np.argmin(np.abs(phi.x - z0.real))), :]
    lo = max(i - 1, 0)
    hi = min(i + 1, len(nodes) - 1)
    if hi == lo:
        return 0.0
    a, b = line[lo], line[hi]
    if not (np.isfinite(a) and np.isfinite(b)):
        return 0.0
    return float((b - a) / (nodes[hi] - nodes[lo]))


# -- differentiation ---------------------------------------------------------

def gradient(phi, z):
    """Gradient in the real pairing; for dim 2 a complex g with <g, w> = Re(g conj(w))."""
    if phi.kind == "preset":
        if phi.dim == 2:
            return phi.preset.gradient(complex(z))
        return phi.preset.gradient(float(z))
    if phi.kind == "sampled1d":
        return _sampled_gradient_1d(phi, float(z))
    if phi.kind in ("lifted", "cyl", "sampled2d"):
        raise NonDifferentiableError(f"gradient not defined for kind {phi.kind!r}")
    raise PreconditionError("unsupported kind")


def _sampled_gradient_1d(phi, z):
    xf, vf = phi._finite_nodes_1d()
    if len(xf) < 3:
        raise PreconditionError("gradient needs at least 3 finite nodes")
    scale = 1.0 + max(abs(xf[0]), abs(xf[-1]))
    i = int(np.argmin(np.abs(xf - z)))
    if abs(xf[i] - z) > 1e-12 * scale:
        # off-node query: symmetric difference across the straddling nodes
        j = int(np.searchsorted(xf, z))
        if j <= 0 or j >= len(xf):
            raise PreconditionError("gradient point must be interior to the sampled domain")
        i0, i1 = j - 1, j
        return float((vf[i1] - vf[i0]) / (xf[i1] - xf[i0]))
    if i == 0 or i == len(xf) - 1:
        raise PreconditionError("gradient point must be interior to the sampled domain")
    s_minus = (vf[i] - vf[i - 1]) / (xf[i] - xf[i - 1])
    s_plus = (vf[i + 1] - vf[i]) / (xf[i + 1] - xf[i])
    jump = abs(s_plus - s_minus)
    # calibrate against neighbouring slope jumps so smooth curvature passes
    lo = max(i - 10, 0)
    hi = min(i + 10, len(xf) - 1)
    xs, vs = xf[lo:hi + 1], vf[lo:hi + 1]
    slopes = np.diff(vs) / np.diff(xs)
    jumps = np.abs(np.diff(slopes))
    center = i - lo - 1
    others = np.delete(jumps, center) if 0 <= center < len(jumps) else jumps
    ref = float(np.median(others)) if len(others) else 0.0
    tol = max(50.0 * ref, 1e-7 * (1.0 + abs(s_plus) + abs(s_minus)))
    if jump > tol:
        raise NonDifferentiableError(f"one-sided slopes differ by {jump} at {z}")
    return float((vf[i + 1] - vf[i - 1]) / (xf[i + 1] - xf[i - 1]))


def subdifferential_interval(phi, t):
    """(lo, hi) with +-inf endpoints for an empty side, or None when empty.

    One-sided slopes at finite boundary nodes of sampled domains; outside
    the effective domain the subdifferential is empty.
    """
    if phi.kind == "preset":
        if phi.dim != 1:
            raise PreconditionError("subdifferential interval is a 1D notion")
        return phi.preset.subdiff(float(t))
    if phi.kind != "sampled1d":
        raise PreconditionError("subdifferential interval needs a 1D function")
    t = float(t)
    xh, vh = phi._hull_1d()
    scale = 1.0 + max(abs(xh[0]), abs(xh[-1]))
    if t < xh[0] - 1e-12 * scale or t > xh[-1] + 1e-12 * scale:
        return None
    if len(xh) == 1:
        return (-math.inf, math.inf)
    slopes = np.diff(vh) / np.diff(xh)
    j = int(np.clip(np.searchsorted(xh, t), 0, len(xh) - 1))
    if abs(xh[j] - t) <= 1e-12 * scale:
        lo = slopes[j - 1] if j - 1 >= 0 else -math.inf
        hi = slopes[j] if j < len(slopes) else math.inf
        return (float(lo), float(hi))
    if j == 0:
        return (-math.inf, float(slopes[0]))
    s = float(slopes[j - 1])
    return (s, s)


def restrict_to_real(phi_1d):
    """Lift a 1D function to C: equal to phi on R, +inf off the real axis."""
    if phi_1d.dim != 1:
        raise PreconditionError("restrict_to_real expects a 1D function")
    return ConvexFunction("lifted", base=phi_1d)


def sample_preset_1d(phi, lo, hi, n):
    """Sampled version of a 1D preset on n uniform nodes over [lo, hi]."""
    if phi.kind != "preset" or phi.dim != 1:
        raise PreconditionError("sample_preset_1d expects a 1D preset")
    x = np.linspace(float(lo), float(hi), int(n))
    v = np.array([phi.preset.evaluate(t) for t in x])
    return ConvexFunction.from_samples_1d(x, v, require_convex=False,
                                          ident=f"sampled({phi.ident})[{n}]")


def sample_preset_2d(phi, lo, hi, n):
    """Sampled version of a 2D preset on an n x n grid over [lo, hi]^2."""
    if phi.kind != "preset" or phi.dim != 2:
        raise PreconditionError("sample_preset_2d expects a 2D preset")
    x = np.linspace(float(lo), float(hi), int(n))
    v = np.array([[phi.preset.evaluate(complex(a, b)) for b in x] for a in x])
    return ConvexFunction.from_samples_2d(x, x, v, require_convex=False,
                                          ident=f"sampled({phi.ident})[{n}x{n}]")


def evaluate_many(phi, values):
    """Vectorized finite evaluation; raises DomainError on any +inf result."""
    values = np.asarray(values)
    if phi.kind == "preset":
        out = phi.preset.evaluate_array(values)
        if np.any(~np.isfinite(out)):
            raise DomainError(f"{phi.ident} is +inf at a sampled value")
        return out
    flat = values.ravel()
    out = np.empty(flat.shape, dtype=float)
    for i, t in enumerate(flat):
        w = evaluate(phi, complex(t) if phi.dim == 2 else float(t))
        if w.is_inf:
            raise DomainError(f"{phi.ident} is +inf at {t}")
        out[i] = w.value
    return out.reshape(values.shape)
