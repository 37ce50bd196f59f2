"""Scalar and vector fields with exact or finite-difference derivative oracles.

A :class:`ScalarField` is an evaluable real function on R^m exposing value,
gradient and Hessian at batches of points.  Fields built from the closed-form
leaves below (coordinates, polynomials, norms) and combined with ``+ - * /``,
powers and smooth 1D compositions keep exact derivatives through the usual
calculus rules.  Fields lacking a closed form fall back to central differences
of order 2 with step ``fd_step``; :func:`with_fd` forces that mode for any
field, which is how the difference-oracle refinement studies are run.

All evaluation methods accept a single point of shape ``(m,)`` or a batch of
shape ``(n, m)`` and are pure, so fields are safe to share across threads.
"""

from __future__ import annotations

import weakref

import numpy as np

from .errors import DomainError

DEFAULT_FD_STEP = 1e-4


def as_points(x, dim: int | None = None):
    """Normalize ``x`` to a float array of shape (n, m).

    Returns ``(points, single)`` where ``single`` records that the input was a
    bare point of shape (m,).
    """
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    if pts.ndim != 2:
        raise DomainError(f"points must have shape (m,) or (n, m), got {pts.shape}")
    if dim is not None and pts.shape[1] != dim:
        raise DomainError(f"points have dimension {pts.shape[1]}, expected {dim}")
    return pts, single


# ---------------------------------------------------------------------------
# Smooth 1D maps (for compositions and chain rules)
# ---------------------------------------------------------------------------

class SmoothMap:
    """A twice-differentiable map R -> R with explicit first two derivatives.

    ``domain_positive`` marks maps only smooth on u > 0 (log, fractional or
    negative powers); compositions propagate it into the field mask.
    """

    def __init__(self, f, d1, d2, name: str = "phi", domain_positive: bool = False):
        self.f = f
        self.d1 = d1
        self.d2 = d2
        self.name = name
        self.domain_positive = domain_positive

    def __call__(self, u):
        return self.f(u)

    def __repr__(self):
        return f"SmoothMap({self.name})"


def identity_map() -> SmoothMap:
    return SmoothMap(lambda u: u, lambda u: np.ones_like(u), lambda u: np.zeros_like(u), "id")


def power_map(p: float) -> SmoothMap:
    """u -> u**p for real p; valid on u > 0 (integer p >= 0 valid everywhere)."""
    if float(p) == int(p) and p >= 0:
        k = int(p)

        def f(u):
            return u ** k

        def d1(u):
            return np.zeros_like(u) if k == 0 else k * u ** (k - 1)

        def d2(u):
            return np.zeros_like(u) if k <= 1 else k * (k - 1) * u ** (k - 2)

        return SmoothMap(f, d1, d2, f"u^{k}")

    def f(u):
        return np.power(u, p)

    def d1(u):
        return p * np.power(u, p - 1)

    def d2(u):
        return p * (p - 1) * np.power(u, p - 2)

    return SmoothMap(f, d1, d2, f"u^{p}", domain_positive=True)


def log_map() -> SmoothMap:
    return SmoothMap(np.log, lambda u: 1.0 / u, lambda u: -1.0 / u ** 2, "log",
                     domain_positive=True)


def exp_map() -> SmoothMap:
    return SmoothMap(np.exp, np.exp, np.exp, "exp")


def poly_bump_map() -> SmoothMap:
    """The C^2 bump u -> (1 - u^2)^3 on |u| <= 1, zero outside."""

    def f(u):
        t = 1.0 - u ** 2
        return np.where(np.abs(u) < 1.0, t ** 3, 0.0)

    def d1(u):
        t = 1.0 - u ** 2
        return np.where(np.abs(u) < 1.0, -6.0 * u * t ** 2, 0.0)

    def d2(u):
        t = 1.0 - u ** 2
        return np.where(np.abs(u) < 1.0, t * (30.0 * u ** 2 - 6.0), 0.0)

    return SmoothMap(f, d1, d2, "bump")


def bump_window_map(a: float, b: float) -> SmoothMap:
    """Bump supported exactly on [a, b]: u -> (1 - v^2)^3 with v = (u-c)/rho."""
    if not b > a:
        raise ValueError("bump window needs b > a")
    c = 0.5 * (a + b)
    rho = 0.5 * (b - a)
    base = poly_bump_map()

    def f(u):
        return base.f((u - c) / rho)

    def d1(u):
        return base.d1((u - c) / rho) / rho

    def d2(u):
        return base.d2((u - c) / rho) / rho ** 2

    return SmoothMap(f, d1, d2, f"bump[{a},{b}]")


def smoothstep_map() -> SmoothMap:
    """C^2 quintic ramp: 0 on u <= 0, 1 on u >= 1, u^3(10 - 15u + 6u^2) between."""

    def f(u):
        v = np.clip(u, 0.0, 1.0)
        return v ** 3 * (10.0 - 15.0 * v + 6.0 * v ** 2)

    def d1(u):
        inside = (u > 0.0) & (u < 1.0)
        v = np.clip(u, 0.0, 1.0)
        return np.where(inside, 30.0 * v ** 2 * (1.0 - v) ** 2, 0.0)

    def d2(u):
        inside = (u > 0.0) & (u < 1.0)
        v = np.clip(u, 0.0, 1.0)
        return np.where(inside, 60.0 * v * (1.0 - v) * (1.0 - 2.0 * v), 0.0)

    return SmoothMap(f, d1, d2, "smoothstep")


def smoothed_power_profile(exponent: float, a: float, b: float,
                           ramp_factor: float = 2.0) -> SmoothMap:
    """u -> u**exponent, ramped smoothly to zero outside [a, b].

    Equals the pure power exactly on [ramp_factor*a, b/ramp_factor]; the C^2
    ramps live on [a, ramp_factor*a] and [b/ramp_factor, b] and are smooth
    in log u, which keeps their energy bounded however wide the support is.
    """
    if not (a > 0 and b > ramp_factor ** 2 * a):
        raise ValueError("need 0 < a and b > ramp_factor^2 * a for a nonempty plateau")
    step = smoothstep_map()
    w = np.log(ramp_factor)

    def pieces(u):
        u = np.asarray(u, dtype=float)
        safe = np.clip(u, a, b)
        pw = np.power(safe, exponent)
        pw1 = exponent * np.power(safe, exponent - 1.0)
        pw2 = exponent * (exponent - 1.0) * np.power(safe, exponent - 2.0)
        xa = np.log(safe / a) / w
        xb = np.log(b / safe) / w
        up = step.f(xa)
        up1 = step.d1(xa) / (w * safe)
        up2 = (step.d2(xa) / w - step.d1(xa)) / (w * safe ** 2)
        dn = step.f(xb)
        dn1 = -step.d1(xb) / (w * safe)
        dn2 = (step.d2(xb) / w + step.d1(xb)) / (w * safe ** 2)
        out = (u > a) & (u < b)
        return out, pw, pw1, pw2, up, up1, up2, dn, dn1, dn2

    def f(u):
        out, pw, _, _, up, _, _, dn, _, _ = pieces(u)
        return np.where(out, pw * up * dn, 0.0)

    def d1(u):
        out, pw, pw1, _, up, up1, _, dn, dn1, _ = pieces(u)
        return np.where(out, pw1 * up * dn + pw * (up1 * dn + up * dn1), 0.0)

    def d2(u):
        out, pw, pw1, pw2, up, up1, up2, dn, dn1, dn2 = pieces(u)
        val = (pw2 * up * dn + 2.0 * pw1 * (up1 * dn + up * dn1)
               + pw * (up2 * dn + 2.0 * up1 * dn1 + up * dn2))
        return np.where(out, val, 0.0)

    return SmoothMap(f, d1, d2, f"u^{exponent}|[{a},{b}]")


# ---------------------------------------------------------------------------
# Scalar fields
# ---------------------------------------------------------------------------

class ScalarField:
    """Base class: subclasses implement ``_value`` and optionally closed-form
    ``_grad`` / ``_hess``; missing derivatives use central differences.

    ``value_at``/``grad_at``/``hess_at`` memoize against the identity of the
    points array, so repeated evaluation on the same (never mutated) grid
    array is free; composite fields use them for their children, which keeps
    deep expression trees linear in cost.
    """

    fd_step = DEFAULT_FD_STEP

    # -- public API (shape-normalizing) -------------------------------------

    def value(self, x):
        pts, single = as_points(x)
        v = self.value_at(pts)
        return float(v[0]) if single else v

    def grad(self, x):
        pts, single = as_points(x)
        g = self.grad_at(pts)
        return g[0] if single else g

    def hess(self, x):
        pts, single = as_points(x)
        h = self.hess_at(pts)
        return h[0] if single else h

    def mask(self, x):
        pts, single = as_points(x)
        m = self._mask(pts)
        return bool(m[0]) if single else m

    def __call__(self, x):
        return self.value(x)

    # -- memoized accessors (same points-array object => cached result) ------

    def _memo(self, kind, pts, fn):
        cache = self.__dict__.get("_eval_memo")
        if cache is None or cache["ref"]() is not pts:
            cache = {"ref": weakref.ref(pts)}
            self.__dict__["_eval_memo"] = cache
        if kind not in cache:
            cache[kind] = fn(pts)
        return cache[kind]

    def value_at(self, pts):
        return self._memo("v", pts, self._value)

    def grad_at(self, pts):
        return self._memo("g", pts, self._grad)

    def hess_at(self, pts):
        return self._memo("h", pts, self._hess)

    # -- implementation hooks -----------------------------------------------

    def _value(self, pts):
        raise NotImplementedError

    def _mask(self, pts):
        return np.ones(len(pts), dtype=bool)

    def has_closed_grad(self) -> bool:
        return type(self)._grad is not ScalarField._grad

    def _grad(self, pts):
        n, m = pts.shape
        h = self.fd_step
        out = np.empty((n, m))
        for j in range(m):
            e = np.zeros(m)
            e[j] = h
            out[:, j] = (self._value(pts + e) - self._value(pts - e)) / (2.0 * h)
        return out

    def _hess(self, pts):
        n, m = pts.shape
        h = self.fd_step
        out = np.empty((n, m, m))
        if self.has_closed_grad():
            for j in range(m):
                e = np.zeros(m)
                e[j] = h
                out[:, :, j] = (self._grad(pts + e) - self._grad(pts - e)) / (2.0 * h)
            return 0.5 * (out + np.swapaxes(out, 1, 2))
        v0 = self._value(pts)
        for i in range(m):
            ei = np.zeros(m)
            ei[i] = h
            out[:, i, i] = (self._value(pts + ei) - 2.0 * v0 + self._value(pts - ei)) / h ** 2
            for k in range(i + 1, m):
                ek = np.zeros(m)
                ek[k] = h
                cross = (self._value(pts + ei + ek) - self._value(pts + ei - ek)
                         - self._value(pts - ei + ek) + self._value(pts - ei - ek)) / (4.0 * h ** 2)
                out[:, i, k] = cross
                out[:, k, i] = cross
        return out

    # -- algebra --------------------------------------------------------------

    def __add__(self, other):
        return SumField(self, _as_field(other))

    __radd__ = __add__

    def __sub__(self, other):
        return SumField(self, ScaledField(-1.0, _as_field(other)))

    def __rsub__(self, other):
        return SumField(_as_field(other), ScaledField(-1.0, self))

    def __mul__(self, other):
        if np.isscalar(other):
            return ScaledField(float(other), self)
        return ProductField(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if np.isscalar(other):
            return ScaledField(1.0 / float(other), self)
        return QuotientField(self, other)

    def __rtruediv__(self, other):
        return QuotientField(_as_field(other), self)

    def __neg__(self):
        return ScaledField(-1.0, self)

    def __pow__(self, p):
        return ComposeField(power_map(p), self)

    def log(self):
        return ComposeField(log_map(), self)

    def exp(self):
        return ComposeField(exp_map(), self)


def _as_field(x) -> ScalarField:
    if isinstance(x, ScalarField):
        return x
    if np.isscalar(x):
        return ConstField(float(x))
    raise TypeError(f"cannot coerce {type(x)} to a ScalarField")


def squared(field: ScalarField) -> ScalarField:
    """field*field, constructed once per field so evaluations stay memoized."""
    sq = field.__dict__.get("_squared_field")
    if sq is None:
        sq = ProductField(field, field)
        field.__dict__["_squared_field"] = sq
    return sq


class ConstField(ScalarField):
    def __init__(self, c: float):
        self.c = float(c)

    def _value(self, pts):
        return np.full(len(pts), self.c)

    def _grad(self, pts):
        return np.zeros_like(pts)

    def _hess(self, pts):
        m = pts.shape[1]
        return np.zeros((len(pts), m, m))


class CoordinateField(ScalarField):
    """The coordinate function x_j."""

    def __init__(self, index: int):
        self.index = int(index)

    def _value(self, pts):
        return pts[:, self.index].copy()

    def _grad(self, pts):
        g = np.zeros_like(pts)
        g[:, self.index] = 1.0
        return g

    def _hess(self, pts):
        m = pts.shape[1]
        return np.zeros((len(pts), m, m))


class AffineField(ScalarField):
    """w . x + b with constant w."""

    def __init__(self, weights, offset: float = 0.0):
        self.weights = np.asarray(weights, dtype=float)
        self.offset = float(offset)

    def _value(self, pts):
        return pts[:, :len(self.weights)] @ self.weights + self.offset

    def _grad(self, pts):
        g = np.zeros_like(pts)
        g[:, :len(self.weights)] = self.weights
        return g

    def _hess(self, pts):
        m = pts.shape[1]
        return np.zeros((len(pts), m, m))


class PolyField(ScalarField):
    """Multivariate polynomial sum_t c_t * prod_i x_i**e_{t,i}."""

    def __init__(self, terms):
        self.terms = [(float(c), tuple(int(e) for e in exps)) for c, exps in terms]

    def _value(self, pts):
        out = np.zeros(len(pts))
        for c, exps in self.terms:
            t = np.full(len(pts), c)
            for i, e in enumerate(exps):
                if e:
                    t = t * pts[:, i] ** e
            out += t
        return out

    def _grad(self, pts):
        n, m = pts.shape
        out = np.zeros((n, m))
        for c, exps in self.terms:
            for j, ej in enumerate(exps):
                if ej == 0:
                    continue
                t = np.full(n, c * ej)
                for i, e in enumerate(exps):
                    ee = e - 1 if i == j else e
                    if ee:
                        t = t * pts[:, i] ** ee
                out[:, j] += t
        return out

    def _hess(self, pts):
        n, m = pts.shape
        out = np.zeros((n, m, m))
        for c, exps in self.terms:
            for j, ej in enumerate(exps):
                if ej == 0:
                    continue
                for k, ek in enumerate(exps):
                    fac = ej * (ej - 1) if j == k else ej * ek
                    if fac == 0:
                        continue
                    t = np.full(n, c * fac)
                    for i, e in enumerate(exps):
                        ee = e - (2 if (i == j and j == k) else (1 if i in (j, k) else 0))
                        if ee:
                            t = t * pts[:, i] ** ee
                    out[:, j, k] += t
        return out


class NormField(ScalarField):
    """|x_I| over a coordinate subset I (all coordinates when I is None).

    Smooth away from {x_I = 0}; that locus is reported by the mask and is
    expected to be excised from any grid this field is differentiated on.
    """

    def __init__(self, indices=None):
        self.indices = None if indices is None else tuple(int(i) for i in indices)

    def _sel(self, pts):
        return pts if self.indices is None else pts[:, self.indices]

    def _value(self, pts):
        return np.sqrt(np.sum(self._sel(pts) ** 2, axis=1))

    def _grad(self, pts):
        n, m = pts.shape
        r = self.value_at(pts)
        rs = np.where(r > 0, r, 1.0)
        out = np.zeros((n, m))
        idx = range(m) if self.indices is None else self.indices
        sel = self._sel(pts)
        for col, i in enumerate(idx):
            out[:, i] = sel[:, col] / rs
        return out

    def _hess(self, pts):
        n, m = pts.shape
        r = self.value_at(pts)
        rs = np.where(r > 0, r, 1.0)
        out = np.zeros((n, m, m))
        idx = list(range(m)) if self.indices is None else list(self.indices)
        sel = self._sel(pts)
        for a, i in enumerate(idx):
            for b, k in enumerate(idx):
                out[:, i, k] = ((1.0 if i == k else 0.0) - sel[:, a] * sel[:, b] / rs ** 2) / rs
        return out

    def _mask(self, pts):
        return self.value_at(pts) > 0


class SquareNormField(ScalarField):
    """sum x_i^2 over a coordinate subset (smooth everywhere)."""

    def __init__(self, indices=None):
        self.indices = None if indices is None else tuple(int(i) for i in indices)

    def _value(self, pts):
        sel = pts if self.indices is None else pts[:, self.indices]
        return np.sum(sel ** 2, axis=1)

    def _grad(self, pts):
        out = np.zeros_like(pts)
        idx = range(pts.shape[1]) if self.indices is None else self.indices
        for i in idx:
            out[:, i] = 2.0 * pts[:, i]
        return out

    def _hess(self, pts):
        n, m = pts.shape
        out = np.zeros((n, m, m))
        idx = range(m) if self.indices is None else self.indices
        for i in idx:
            out[:, i, i] = 2.0
        return out


class FuncField(ScalarField):
    """Field from plain callables; derivatives fall back to differences
    unless closed forms are supplied."""

    def __init__(self, fn, grad_fn=None, hess_fn=None, mask_fn=None,
                 fd_step: float = DEFAULT_FD_STEP, name: str = "f"):
        self.fn = fn
        self.grad_fn = grad_fn
        self.hess_fn = hess_fn
        self.mask_fn = mask_fn
        self.fd_step = fd_step
        self.name = name

    def _value(self, pts):
        return np.asarray(self.fn(pts), dtype=float)

    def has_closed_grad(self):
        return self.grad_fn is not None

    def _grad(self, pts):
        if self.grad_fn is not None:
            return np.asarray(self.grad_fn(pts), dtype=float)
        return ScalarField._grad(self, pts)

    def _hess(self, pts):
        if self.hess_fn is not None:
            return np.asarray(self.hess_fn(pts), dtype=float)
        return ScalarField._hess(self, pts)

    def _mask(self, pts):
        if self.mask_fn is not None:
            return np.asarray(self.mask_fn(pts), dtype=bool)
        return np.ones(len(pts), dtype=bool)


class FDField(ScalarField):
    """View of a field that discards its closed-form derivatives.

    Used to exercise the central-difference oracle at a chosen step against
    the exact one.
    """

    def __init__(self, base: ScalarField, step: float):
        self.base = base
        self.fd_step = float(step)

    def _value(self, pts):
        return self.base._value(pts)

    def _mask(self, pts):
        return self.base._mask(pts)


def with_fd(field: ScalarField, step: float) -> ScalarField:
    return FDField(field, step)


# -- composite fields ---------------------------------------------------------

class SumField(ScalarField):
    def __init__(self, f: ScalarField, g: ScalarField):
        self.f = f
        self.g = g

    def _value(self, pts):
        return self.f.value_at(pts) + self.g.value_at(pts)

    def _grad(self, pts):
        return self.f.grad_at(pts) + self.g.grad_at(pts)

    def _hess(self, pts):
        return self.f.hess_at(pts) + self.g.hess_at(pts)

    def _mask(self, pts):
        return self.f._mask(pts) & self.g._mask(pts)


class ScaledField(ScalarField):
    def __init__(self, c: float, f: ScalarField):
        self.c = float(c)
        self.f = f

    def _value(self, pts):
        return self.c * self.f.value_at(pts)

    def _grad(self, pts):
        return self.c * self.f.grad_at(pts)

    def _hess(self, pts):
        return self.c * self.f.hess_at(pts)

    def _mask(self, pts):
        return self.f._mask(pts)


class ProductField(ScalarField):
    def __init__(self, f: ScalarField, g: ScalarField):
        self.f = f
        self.g = g

    def _value(self, pts):
        return self.f.value_at(pts) * self.g.value_at(pts)

    def _grad(self, pts):
        fv = self.f.value_at(pts)[:, None]
        gv = self.g.value_at(pts)[:, None]
        return self.f.grad_at(pts) * gv + self.g.grad_at(pts) * fv

    def _hess(self, pts):
        fv = self.f.value_at(pts)[:, None, None]
        gv = self.g.value_at(pts)[:, None, None]
        fg = self.f.grad_at(pts)
        gg = self.g.grad_at(pts)
        cross = fg[:, :, None] * gg[:, None, :]
        return (self.f.hess_at(pts) * gv + self.g.hess_at(pts) * fv
                + cross + np.swapaxes(cross, 1, 2))

    def _mask(self, pts):
        return self.f._mask(pts) & self.g._mask(pts)


class QuotientField(ScalarField):
    def __init__(self, f: ScalarField, g: ScalarField):
        self.f = f
        self.g = g

    def _value(self, pts):
        return self.f.value_at(pts) / self.g.value_at(pts)

    def _grad(self, pts):
        gv = self.g.value_at(pts)[:, None]
        q = (self.f.value_at(pts) / self.g.value_at(pts))[:, None]
        return (self.f.grad_at(pts) - q * self.g.grad_at(pts)) / gv

    def _hess(self, pts):
        gv = self.g.value_at(pts)
        q = self.f.value_at(pts) / gv
        qg = (self.f.grad_at(pts) - q[:, None] * self.g.grad_at(pts)) / gv[:, None]
        gg = self.g.grad_at(pts)
        cross = qg[:, :, None] * gg[:, None, :]
        num = (self.f.hess_at(pts) - q[:, None, None] * self.g.hess_at(pts)
               - cross - np.swapaxes(cross, 1, 2))
        return num / gv[:, None, None]

    def _mask(self, pts):
        return self.f._mask(pts) & self.g._mask(pts) & (self.g.value_at(pts) != 0)


class ComposeField(ScalarField):
    """phi(f) for a smooth 1D map phi."""

    def __init__(self, phi: SmoothMap, f: ScalarField, positive_domain: bool | None = None):
        self.phi = phi
        self.f = f
        self.positive_domain = phi.domain_positive if positive_domain is None else positive_domain

    def _value(self, pts):
        return self.phi.f(self.f.value_at(pts))

    def _grad(self, pts):
        u = self.f.value_at(pts)
        return self.phi.d1(u)[:, None] * self.f.grad_at(pts)

    def _hess(self, pts):
        u = self.f.value_at(pts)
        fg = self.f.grad_at(pts)
        outer = fg[:, :, None] * fg[:, None, :]
        return (self.phi.d2(u)[:, None, None] * outer
                + self.phi.d1(u)[:, None, None] * self.f.hess_at(pts))

    def _mask(self, pts):
        m = self.f._mask(pts)
        if self.positive_domain:
            m = m & (self.f.value_at(pts) > 0)
        return m


# ---------------------------------------------------------------------------
# Vector fields
# ---------------------------------------------------------------------------

class VectorField:
    """First-order operator sum_i c_i(x) d_i given by coefficient fields.

    Applying the field to the coordinate function x_j returns c_j.
    """

    def __init__(self, coeffs):
        self.coeffs = tuple(_as_field(c) for c in coeffs)

    @property
    def dim(self) -> int:
        return len(self.coeffs)

    def coeff_values(self, pts):
        """(n, m) array of coefficient values."""
        return np.stack([c.value_at(pts) for c in self.coeffs], axis=1)

    def coeff_grads(self, pts):
        """(n, m, m) array with [p, i, l] = d_l c_i."""
        return np.stack([c.grad_at(pts) for c in self.coeffs], axis=1)

    def apply(self, f: ScalarField, x):
        """(V f)(x) = sum_i c_i(x) d_i f(x)."""
        pts, single = as_points(x)
        v = np.einsum("ni,ni->n", self.coeff_values(pts), f.grad_at(pts))
        return float(v[0]) if single else v


def coordinate_frame(m: int) -> list[VectorField]:
    """The frame of coordinate partials on R^m."""
    frames = []
    for j in range(m):
        coeffs = [ConstField(1.0 if i == j else 0.0) for i in range(m)]
        frames.append(VectorField(coeffs))
    return frames
