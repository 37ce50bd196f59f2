r"""Diffusion generators from vector-field frames, and their carre du champ.

A diffusion is represented as L = sum_j X_j^2 + B for a frame of vector
fields X_j and a drift B, together with the density of its reversible
measure against coordinate volume.  The induced second-order coefficient
matrix is a(x) = sum_j X_j(x) X_j(x)^T and the carre du champ is

    Gamma(f, g) = sum_j (X_j f)(X_j g) = a(grad f, grad g),

which must coincide pointwise with the defining combination
(1/2)(L(fg) - f Lg - g Lf); that consistency is part of the test suite, not
assumed.  Everything here is evaluated pointwise on batches of points; all
operations are pure, so concurrent evaluation over points is safe.
"""

from __future__ import annotations

import weakref

import numpy as np

from .errors import DomainError, NumericError, PreconditionError
from .fields import (ComposeField, FDField, FuncField, ProductField,
                     ScalarField, SmoothMap, VectorField, as_points, squared,
                     with_fd)


class Diffusion:
    """Abstract generator: subclasses provide apply_L and gamma on batches."""

    dim: int
    measure_density: ScalarField
    kind = "base"

    def domain(self, pts):
        """Boolean mask of points where the generator's data is smooth."""
        return np.ones(len(pts), dtype=bool)

    def mask(self, x):
        pts, single = as_points(x, self.dim)
        m = self.domain(pts) & self.measure_density._mask(pts)
        return bool(m[0]) if single else m

    def apply_L(self, f: ScalarField, x):
        raise NotImplementedError

    def gamma(self, f: ScalarField, g: ScalarField | None, x):
        raise NotImplementedError

    def gamma_field(self, f: ScalarField, g: ScalarField | None = None) -> ScalarField:
        """Gamma(f, g) as a field (difference-oracle derivatives by default)."""
        g = f if g is None else g
        return FuncField(lambda pts: self.gamma(f, g, pts), name="Gamma(f,g)")

    def l_field(self, f: ScalarField) -> ScalarField:
        """L f as a value-exact field (difference-oracle derivatives)."""
        return FuncField(lambda pts: self.apply_L(f, pts), name="Lf")

    def frame_values(self, pts):
        """(l, n, m) frame coefficients; needed by the grid semigroup."""
        raise NotImplementedError(f"{type(self).__name__} exposes no frame")


class FrameDiffusion(Diffusion):
    """L = sum_j X_j^2 + drift with reversible-measure density.

    The drift must be the one making L symmetric against the measure; the
    catalog constructors guarantee this, and the quadrature symmetry defect
    is checked in the tests rather than enforced here.
    """

    def __init__(self, frame, drift: VectorField | None, measure_density: ScalarField,
                 dim: int, domain_mask=None, kind: str = "frame"):
        self.frame = tuple(frame)
        self.drift = drift
        self.measure_density = measure_density
        self.dim = int(dim)
        self._domain_mask = domain_mask
        self.kind = kind

    def domain(self, pts):
        if self._domain_mask is None:
            return np.ones(len(pts), dtype=bool)
        return np.asarray(self._domain_mask(pts), dtype=bool)

    # -- frame data (memoized against the points-array identity) -------------

    def _memo(self, kind, pts, fn):
        cache = self.__dict__.get("_frame_memo")
        if cache is None or cache["ref"]() is not pts:
            cache = {"ref": weakref.ref(pts)}
            self.__dict__["_frame_memo"] = cache
        if kind not in cache:
            cache[kind] = fn(pts)
        return cache[kind]

    def frame_values(self, pts):
        return self._memo("C", pts, lambda p: np.stack(
            [X.coeff_values(p) for X in self.frame], axis=0))

    def frame_grads(self, pts):
        return self._memo("G", pts, lambda p: np.stack(
            [X.coeff_grads(p) for X in self.frame], axis=0))

    def coefficient_matrix(self, pts):
        """a(x) = sum_j X_j X_j^T, shape (n, m, m)."""
        def compute(p):
            C = self.frame_values(p)
            return np.einsum("jni,jnk->nik", C, C)
        return self._memo("A", pts, compute)

    def coefficient_matrix_grad(self, pts):
        """d_l a_{ik}, shape (n, l, i, k)."""
        def compute(p):
            C = self.frame_values(p)
            G = self.frame_grads(p)  # [j, n, i, l]
            dA = np.einsum("jnil,jnk->nlik", G, C)
            return dA + np.swapaxes(dA, 2, 3)
        return self._memo("dA", pts, compute)

    # -- generator and carre du champ -----------------------------------------

    def apply_L(self, f: ScalarField, x):
        pts, single = as_points(x, self.dim)
        C = self.frame_values(pts)
        G = self.frame_grads(pts)
        gf = f.grad_at(pts)
        hf = f.hess_at(pts)
        val = np.einsum("jni,jnk,nik->n", C, C, hf)
        first = np.einsum("jni,jnki->nk", C, G)
        if self.drift is not None:
            first = first + self.drift.coeff_values(pts)
        val += np.einsum("nk,nk->n", first, gf)
        return float(val[0]) if single else val

    def gamma(self, f: ScalarField, g: ScalarField | None, x):
        pts, single = as_points(x, self.dim)
        C = self.frame_values(pts)
        gf = f.grad_at(pts)
        xf = np.einsum("jni,ni->jn", C, gf)
        if g is None or g is f:
            val = np.einsum("jn,jn->n", xf, xf)
        else:
            xg = np.einsum("jni,ni->jn", C, g.grad_at(pts))
            val = np.einsum("jn,jn->n", xf, xg)
        return float(val[0]) if single else val

    def gamma_field(self, f: ScalarField, g: ScalarField | None = None) -> ScalarField:
        return FrameGammaField(self, f, f if g is None else g)


class FrameGammaField(ScalarField):
    """Gamma(f, g) of a frame diffusion, with closed-form gradient.

    The gradient uses d_l [a_{ik} d_i f d_k g]; the Hessian (third
    derivatives of f, g) falls back to differencing the gradient.
    """

    def __init__(self, diff: FrameDiffusion, f: ScalarField, g: ScalarField):
        self.diff = diff
        self.f = f
        self.g = g

    def _value(self, pts):
        return self.diff.gamma(self.f, self.g, pts)

    def has_closed_grad(self):
        return True

    def _grad(self, pts):
        A = self.diff.coefficient_matrix(pts)
        dA = self.diff.coefficient_matrix_grad(pts)
        gf = self.f.grad_at(pts)
        hf = self.f.hess_at(pts)
        if self.g is self.f:
            gg, hg = gf, hf
        else:
            gg = self.g.grad_at(pts)
            hg = self.g.hess_at(pts)
        out = np.einsum("nlik,ni,nk->nl", dA, gf, gg)
        out += np.einsum("nik,nil,nk->nl", A, hf, gg)
        out += np.einsum("nik,ni,nkl->nl", A, gf, hg)
        return out

    def _mask(self, pts):
        return self.f._mask(pts) & self.g._mask(pts) & self.diff.domain(pts)


# ---------------------------------------------------------------------------
# Pointwise operations
# ---------------------------------------------------------------------------

def _checked(diff: Diffusion, f: ScalarField, x):
    pts, single = as_points(x, diff.dim)
    ok = diff.mask(pts) & f._mask(pts)
    if not np.all(ok):
        raise DomainError("point outside the domain mask of the field or diffusion")
    return pts, single


def eval_L(diff: Diffusion, f: ScalarField, p):
    """(L f)(p); exact when f carries closed-form derivatives."""
    pts, single = _checked(diff, f, p)
    v = np.atleast_1d(diff.apply_L(f, pts))
    if not np.all(np.isfinite(v)):
        raise NumericError("non-finite derivative in L f")
    return float(v[0]) if single else v


def gamma(diff: Diffusion, f: ScalarField, g: ScalarField | None = None, p=None):
    """Gamma(f, g)(p) = sum_j (X_j f)(X_j g)(p)."""
    if p is None:
        raise TypeError("gamma requires evaluation points")
    g = f if g is None else g
    pts, single = _checked(diff, f, p)
    if not np.all(g._mask(pts)):
        raise DomainError("point outside the domain mask of g")
    v = np.atleast_1d(diff.gamma(f, g, pts))
    if not np.all(np.isfinite(v)):
        raise NumericError("non-finite value in Gamma(f, g)")
    return float(v[0]) if single else v


def gamma_w(diff: Diffusion, W: ScalarField, f: ScalarField, p):
    """The order-zero generalized carre du champ applied to f:

    Gamma^W(f) = (1/2)(L(W^2) f^2 + 2 Gamma(W^2, f^2) + 2 W^2 Gamma(f)).
    """
    pts, single = _checked(diff, W, p)
    if not np.all(f._mask(pts)):
        raise DomainError("point outside the domain mask of f")
    W2 = squared(W)
    f2 = squared(f)
    fv = f.value_at(pts)
    val = 0.5 * (diff.apply_L(W2, pts) * fv ** 2
                 + 2.0 * diff.gamma(W2, f2, pts)
                 + 2.0 * W2.value_at(pts) * diff.gamma(f, f, pts))
    if not np.all(np.isfinite(np.atleast_1d(val))):
        raise NumericError("non-finite value in Gamma^W(f)")
    return float(val[0]) if single else val


def _match_oracle(derived: ScalarField, *parents: ScalarField) -> ScalarField:
    """Composite fields chain their children's derivatives algebraically, so
    when a parent runs in difference-oracle mode the derived field must be
    differenced directly for the identity checks to measure anything."""
    for p in parents:
        if isinstance(p, FDField):
            return with_fd(derived, p.fd_step)
    return derived


def chain_rule_defect(diff: Diffusion, phi: SmoothMap, f: ScalarField, pts) -> float:
    """max over pts of |L(phi(f)) - phi'(f) Lf - phi''(f) Gamma(f)|."""
    pts, _ = _checked(diff, f, pts)
    comp = _match_oracle(ComposeField(phi, f), f)
    u = f.value_at(pts)
    lhs = diff.apply_L(comp, pts)
    rhs = phi.d1(u) * diff.apply_L(f, pts) + phi.d2(u) * diff.gamma(f, f, pts)
    return float(np.max(np.abs(lhs - rhs)))


def gamma_chain_rule_defect(diff: Diffusion, phi: SmoothMap, f: ScalarField,
                            g: ScalarField, pts) -> float:
    """max over pts of |Gamma(phi(f), g) - phi'(f) Gamma(f, g)|."""
    pts, _ = _checked(diff, f, pts)
    comp = _match_oracle(ComposeField(phi, f), f)
    lhs = diff.gamma(comp, g, pts)
    rhs = phi.d1(f.value_at(pts)) * diff.gamma(f, g, pts)
    return float(np.max(np.abs(lhs - rhs)))


def gamma_definition_defect(diff: Diffusion, f: ScalarField, g: ScalarField, pts) -> float:
    """max over pts of |Gamma(f,g) - (1/2)(L(fg) - f Lg - g Lf)|."""
    pts, _ = _checked(diff, f, pts)
    fg = _match_oracle(ProductField(f, g), f, g)
    rhs = 0.5 * (diff.apply_L(fg, pts)
                 - f.value_at(pts) * diff.apply_L(g, pts)
                 - g.value_at(pts) * diff.apply_L(f, pts))
    return float(np.max(np.abs(diff.gamma(f, g, pts) - rhs)))


def ibp_defect(diff: Diffusion, f: ScalarField, g: ScalarField, grid) -> float:
    """Quadrature defect |int f Lg dmu + int Gamma(f, g) dmu|.

    Requires f to vanish on a margin inside the grid boundary and excised
    regions; decays at O(h^2) under refinement for smooth data.
    """
    if not grid.supports(f):
        raise PreconditionError("support of f touches the grid boundary or excision set")
    pts = grid.points
    vals = f.value_at(pts) * diff.apply_L(g, pts) + diff.gamma(f, g, pts)
    return abs(float(np.sum(vals * grid.weights)))
