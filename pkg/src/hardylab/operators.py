r"""Derived diffusions: weighted, drifted, radial and dilation operators.

Starting from a base generator L these constructors produce

* ``weighted_operator``:  L_w f = w Lf + Gamma(w, f), same measure,
  carre du champ w * Gamma;
* ``drifted_operator``:   L_s f = Lf + Gamma(s, f), same Gamma, measure
  density multiplied by e^s;
* ``radial_operator``:    L_psi = Z^2 + (L psi) Z with Z = Gamma(psi, .),
  carre du champ Gamma(psi, f)^2, same measure;
* ``dilation_operator``:  D^2 + Q_hom D for the stratum-weighted Euler field
  D = sum_j c_j y_j d_j, against coordinate volume.

Construction is pure; derived diffusions share immutable base state.
"""

from __future__ import annotations

import numpy as np

from .calculus import Diffusion, FrameDiffusion
from .errors import NumericError, PreconditionError, UsageError
from .fields import (AffineField, ComposeField, ConstField, ProductField,
                     ScalarField, VectorField, as_points, exp_map)


class WeightedDiffusion(Diffusion):
    """L_w f = w L f + Gamma(w, f) with Gamma_w = w Gamma and measure of the base."""

    kind = "weighted"

    def __init__(self, base: Diffusion, omega: ScalarField):
        self.base = base
        self.omega = omega
        self.dim = base.dim
        self.measure_density = base.measure_density

    def domain(self, pts):
        return self.base.domain(pts) & self.omega._mask(pts)

    def _omega_values(self, pts):
        w = self.omega.value_at(pts)
        bad = (w < 0) & self.domain(pts)
        if np.any(bad):
            raise PreconditionError("weight omega is negative at a masked point")
        return w

    def apply_L(self, f, x):
        pts, single = as_points(x, self.dim)
        w = self._omega_values(pts)
        val = w * np.atleast_1d(self.base.apply_L(f, pts)) \
            + np.atleast_1d(self.base.gamma(self.omega, f, pts))
        return float(val[0]) if single else val

    def gamma(self, f, g, x):
        pts, single = as_points(x, self.dim)
        val = self._omega_values(pts) * np.atleast_1d(self.base.gamma(f, g, pts))
        return float(val[0]) if single else val

    def gamma_field(self, f, g=None):
        return ProductField(self.omega, self.base.gamma_field(f, g))

    def frame_values(self, pts):
        w = self._omega_values(pts)
        return np.sqrt(np.maximum(w, 0.0))[None, :, None] * self.base.frame_values(pts)


class DriftedDiffusion(Diffusion):
    """L_s f = L f + Gamma(s, f); Gamma unchanged, measure density times e^s."""

    kind = "drifted"

    def __init__(self, base: Diffusion, sigma: ScalarField):
        self.base = base
        self.sigma = sigma
        self.dim = base.dim
        self.measure_density = ProductField(base.measure_density,
                                            ComposeField(exp_map(), sigma))

    def domain(self, pts):
        return self.base.domain(pts) & self.sigma._mask(pts)

    def apply_L(self, f, x):
        pts, single = as_points(x, self.dim)
        val = np.atleast_1d(self.base.apply_L(f, pts)) \
            + np.atleast_1d(self.base.gamma(self.sigma, f, pts))
        return float(val[0]) if single else val

    def gamma(self, f, g, x):
        return self.base.gamma(f, g, x)

    def gamma_field(self, f, g=None):
        return self.base.gamma_field(f, g)

    def frame_values(self, pts):
        return self.base.frame_values(pts)


class ZCoefficientField(ScalarField):
    """k-th coefficient of Z = Gamma(psi, .): z_k = sum_i a_{ik} d_i psi."""

    def __init__(self, base: FrameDiffusion, psi: ScalarField, k: int):
        self.base = base
        self.psi = psi
        self.k = int(k)

    def _value(self, pts):
        A = self.base.coefficient_matrix(pts)
        return np.einsum("ni,ni->n", A[:, :, self.k], self.psi.grad_at(pts))

    def has_closed_grad(self):
        return True

    def _grad(self, pts):
        A = self.base.coefficient_matrix(pts)
        dA = self.base.coefficient_matrix_grad(pts)
        gp = self.psi.grad_at(pts)
        hp = self.psi.hess_at(pts)
        return (np.einsum("nli,ni->nl", dA[:, :, :, self.k], gp)
                + np.einsum("ni,nil->nl", A[:, :, self.k], hp))

    def _mask(self, pts):
        return self.psi._mask(pts) & self.base.domain(pts)


class RadialDiffusion(FrameDiffusion):
    """One-field diffusion L_psi = Z^2 + (L psi) Z built from a base frame."""

    kind = "radial"

    def __init__(self, base: FrameDiffusion, psi: ScalarField):
        zc = [ZCoefficientField(base, psi, k) for k in range(base.dim)]
        lpsi = base.l_field(psi)
        drift = VectorField([ProductField(lpsi, c) for c in zc])
        super().__init__([VectorField(zc)], drift, base.measure_density,
                         base.dim, domain_mask=base.domain, kind="radial")
        self.base = base
        self.psi = psi


class DilationDiffusion(FrameDiffusion):
    """L = D^2 + Q_hom D for the stratum-weighted dilation derivation D."""

    kind = "dilation"

    def __init__(self, dilation: VectorField, Q_hom: float, dim: int):
        drift = VectorField([Q_hom * c for c in dilation.coeffs])
        super().__init__([dilation], drift, ConstField(1.0), dim, kind="dilation")
        self.dilation = dilation
        self.Q_hom = float(Q_hom)


def weighted_operator(base: Diffusion, omega: ScalarField) -> WeightedDiffusion:
    """Carry a nonnegative weight on the carre du champ: Gamma_w = w Gamma."""
    return WeightedDiffusion(base, omega)


def drifted_operator(base: Diffusion, sigma: ScalarField) -> DriftedDiffusion:
    """Carry a weight e^sigma on the reversible measure instead."""
    d = DriftedDiffusion(base, sigma)
    return d


def radial_operator(base: Diffusion, psi: ScalarField) -> RadialDiffusion:
    """Square of the derivation Z = Gamma(psi, .) plus its symmetrizing drift.

    Gamma_psi(f) = Gamma(psi, f)^2, measure unchanged.  Requires a frame
    base so that Z's coefficients carry closed-form gradients.
    """
    if not isinstance(base, FrameDiffusion):
        raise UsageError("radial_operator requires a frame-based diffusion")
    return RadialDiffusion(base, psi)


def dilation_operator(geo) -> DilationDiffusion:
    """The Euler-type operator of a stratified geometry, D^2 + Q_hom D.

    Coordinates in stratum k carry weight k + 1, so on an abelian geometry D
    reduces to x . grad.  The reversible measure is coordinate volume.
    """
    if geo.stratification is None:
        raise PreconditionError(f"geometry {geo.name!r} carries no stratification")
    m = geo.dim
    weights = [s + 1.0 for s in geo.stratification]
    coeffs = []
    for j in range(m):
        w = np.zeros(m)
        w[j] = weights[j]
        coeffs.append(AffineField(w))
    return DilationDiffusion(VectorField(coeffs), geo.Q_hom, m)


def drifted_measure_overflow_check(diff: DriftedDiffusion, pts) -> None:
    """Raise if e^sigma overflows at any masked point."""
    vals = diff.measure_density.value_at(pts)
    if not np.all(np.isfinite(vals[diff.domain(pts)])):
        raise NumericError("e^sigma overflow in drifted measure density")
