r"""Quadrature evaluation of the Hardy-type inequalities and sharpness probes.

Every report evaluates both sides of one inequality for one test function on
one grid and records lhs, rhs, the constant used, and their ratio; a valid
inequality never shows ratio > 1 beyond quadrature error.  The ids follow
the families

  hardy:             int psi^a (G(psi)/psi^2) f^2  <=  (2/(Q+a-2))^2 int psi^a G(f)
  log-hardy:         weights |log psi|^a G(psi)/(psi^2 log^2 psi), constant (2/(a-1))^2
  weighted-log-hardy: the log family carrying the extra factor psi^(2-Q)
  radial:            G(psi)^2/psi^2 against G(psi, f)^2 (needs G(psi, G(psi)) = 0)
  dilation:          psi^a f^2 against psi^a (D f)^2, constant (2/(Q_hom+a))^2
  funcineq:          int L(W^2) f^2 <= 2 int W^2 G(f) - 2 gamma int W^2 f^2
  homo-norm:         f^2/rho^2 against the kappa-assembled constant

``estimate_best_constant`` runs a Rayleigh-quotient search over smoothed
truncations of the near-optimal power profile; the supremum approaches the
sharp constant only as the support's log-width grows, which is why the
sharpness probes run on the 1D log-radial models from the catalog.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calculus import Diffusion
from .catalog import GeometrySpec, Weight, as_diffusion, estimate_kappa, make_weight
from .errors import DegenerateInputError, PreconditionError, UsageError
from .fields import ScalarField, squared
from .grid import Grid, integrate
from .operators import dilation_operator
from .testfunctions import smoothed_power


@dataclass
class HardyReport:
    """Both sides of one inequality for one test function."""

    inequality_id: str
    lhs: float
    rhs: float
    constant_used: float
    ratio: float | None
    params: dict = field(default_factory=dict)

    def passes(self, tol: float = 1e-6) -> bool:
        return self.ratio is None or self.ratio <= 1.0 + tol

    def row(self) -> dict:
        return {"inequality": self.inequality_id, "lhs": self.lhs, "rhs": self.rhs,
                "constant": self.constant_used,
                "ratio": float("nan") if self.ratio is None else self.ratio}


def _require_support(grid: Grid, f: ScalarField):
    if not grid.supports(f):
        raise PreconditionError("test function support touches the grid boundary "
                                "or an excised region")


def _ratio(lhs: float, rhs: float):
    return lhs / rhs if rhs > 0 else None


def _masked_quadratic(fv, weight_vals):
    """f^2 * weight, evaluated only where f != 0 (singular weights are
    multiplied by an exact zero elsewhere)."""
    out = np.zeros_like(fv)
    nz = fv != 0.0
    out[nz] = fv[nz] ** 2 * weight_vals[nz]
    return out


def _masked_product(vals, weight_vals):
    """vals * weight only where vals != 0, so singular weights never meet
    the exact zeros outside a test function's support."""
    out = np.zeros_like(vals)
    nz = vals != 0.0
    out[nz] = vals[nz] * weight_vals[nz]
    return out


def _support_side(psi_vals, fv):
    """Which side of {psi = 1} carries f; raises if the support crosses it."""
    nz = fv != 0.0
    if not np.any(nz):
        return None
    below = np.any(psi_vals[nz] < 1.0)
    above = np.any(psi_vals[nz] > 1.0)
    if below and above:
        raise PreconditionError("support crosses the level set {psi = 1}")
    return "lower" if below else "upper"


def hardy_report(geo, psi: Weight, Q: float, alpha: float, f: ScalarField,
                 grid: Grid) -> HardyReport:
    """General weighted Hardy inequality with constant (2/(Q + alpha - 2))^2."""
    if Q + alpha == 2.0:
        raise UsageError("Q + alpha = 2 is the logarithmic case; "
                         "use log_hardy_report / weighted_log_hardy_report")
    diff = as_diffusion(geo)
    _require_support(grid, f)
    pts = grid.points
    fv = f.value_at(pts)
    pv = psi.psi.value_at(pts)
    gpsi = diff.gamma(psi.psi, psi.psi, pts)
    lhs = integrate(grid, _masked_quadratic(fv, pv ** alpha * gpsi / pv ** 2))
    const = (2.0 / (Q + alpha - 2.0)) ** 2
    rhs = const * integrate(grid, pv ** alpha * diff.gamma(f, f, pts))
    return HardyReport("hardy", lhs, rhs, const, _ratio(lhs, rhs),
                       {"Q": Q, "alpha": alpha, "weight": psi.name})


def log_hardy_report(geo, psi: Weight, alpha: float, f: ScalarField,
                     grid: Grid) -> HardyReport:
    """Critical-case Hardy inequality with logarithmic weights,
    constant (2/(alpha - 1))^2; log^p psi means |log psi|^p."""
    if alpha == 1.0:
        raise UsageError("alpha = 1 is excluded in the logarithmic family")
    diff = as_diffusion(geo)
    _require_support(grid, f)
    pts = grid.points
    fv = f.value_at(pts)
    pv = psi.psi.value_at(pts)
    _support_side(pv, fv)
    gpsi = diff.gamma(psi.psi, psi.psi, pts)
    logs = np.where(fv != 0.0, np.log(np.where(fv != 0.0, pv, 1.0)), 1.0)
    la = np.abs(logs) ** alpha
    lhs = integrate(grid, _masked_quadratic(fv, la * gpsi / (pv ** 2 * logs ** 2)))
    const = (2.0 / (alpha - 1.0)) ** 2
    gf = diff.gamma(f, f, pts)
    la_full = np.abs(np.where(gf != 0.0, np.log(np.where(gf != 0.0, pv, 1.0)), 1.0)) ** alpha
    rhs = const * integrate(grid, _masked_product(gf, la_full))
    return HardyReport("log-hardy", lhs, rhs, const, _ratio(lhs, rhs),
                       {"alpha": alpha, "weight": psi.name})


def weighted_log_hardy_report(geo, psi: Weight, Q: float, alpha: float,
                              f: ScalarField, grid: Grid) -> HardyReport:
    """Log family with the extra factor psi^(2-Q) on both sides (the
    Q + alpha = 2 branch of the weighted inequalities)."""
    if Q == 2.0:
        raise UsageError("Q = 2 reduces to log_hardy_report")
    if alpha == 1.0:
        raise UsageError("alpha = 1 is excluded in the logarithmic family")
    diff = as_diffusion(geo)
    _require_support(grid, f)
    pts = grid.points
    fv = f.value_at(pts)
    pv = psi.psi.value_at(pts)
    _support_side(pv, fv)
    gpsi = diff.gamma(psi.psi, psi.psi, pts)
    logs = np.where(fv != 0.0, np.log(np.where(fv != 0.0, pv, 1.0)), 1.0)
    la = np.abs(logs) ** alpha
    w = pv ** (2.0 - Q)
    lhs = integrate(grid, _masked_quadratic(fv, w * la * gpsi / (pv ** 2 * logs ** 2)))
    const = (2.0 / (alpha - 1.0)) ** 2
    gf = diff.gamma(f, f, pts)
    la_full = np.abs(np.where(gf != 0.0, np.log(np.where(gf != 0.0, pv, 1.0)), 1.0)) ** alpha
    rhs = const * integrate(grid, _masked_product(gf, pv ** (2.0 - Q) * la_full))
    return HardyReport("weighted-log-hardy", lhs, rhs, const, _ratio(lhs, rhs),
                       {"Q": Q, "alpha": alpha, "weight": psi.name})


def secondary_condition_defect(diff: Diffusion, psi: ScalarField, pts) -> float:
    """max |Gamma(psi, Gamma(psi))| over the points."""
    gfield = diff.gamma_field(psi, psi)
    return float(np.max(np.abs(diff.gamma(psi, gfield, pts))))


def radial_hardy_report(geo, psi: Weight, Q: float, alpha: float, f: ScalarField,
                        grid: Grid, secondary_tol: float = 1e-8) -> HardyReport:
    """Radial-derivative Hardy inequality: the right side only sees
    Gamma(psi, f)^2.  Requires Gamma(psi, Gamma(psi)) = 0 on the grid."""
    if Q + alpha == 2.0:
        raise UsageError("Q + alpha = 2 is the logarithmic case; "
                         "use radial_log_hardy_report")
    diff = as_diffusion(geo)
    _require_support(grid, f)
    pts = grid.points
    defect = secondary_condition_defect(diff, psi.psi, pts)
    if defect > secondary_tol:
        raise PreconditionError(
            f"Gamma(psi, Gamma(psi)) = {defect:.3e} exceeds tolerance {secondary_tol:.1e}")
    fv = f.value_at(pts)
    pv = psi.psi.value_at(pts)
    gpsi = diff.gamma(psi.psi, psi.psi, pts)
    lhs = integrate(grid, _masked_quadratic(fv, pv ** alpha * gpsi ** 2 / pv ** 2))
    const = (2.0 / (Q + alpha - 2.0)) ** 2
    zf = diff.gamma(psi.psi, f, pts)
    rhs = const * integrate(grid, pv ** alpha * zf ** 2)
    return HardyReport("radial", lhs, rhs, const, _ratio(lhs, rhs),
                       {"Q": Q, "alpha": alpha, "weight": psi.name})


def radial_log_hardy_report(geo, psi: Weight, Q: float, alpha: float,
                            f: ScalarField, grid: Grid,
                            secondary_tol: float = 1e-8) -> HardyReport:
    """Logarithmic variant of the radial family (factor psi^(2-Q), constant
    (2/(alpha-1))^2)."""
    if alpha == 1.0:
        raise UsageError("alpha = 1 is excluded in the logarithmic family")
    diff = as_diffusion(geo)
    _require_support(grid, f)
    pts = grid.points
    defect = secondary_condition_defect(diff, psi.psi, pts)
    if defect > secondary_tol:
        raise PreconditionError(
            f"Gamma(psi, Gamma(psi)) = {defect:.3e} exceeds tolerance {secondary_tol:.1e}")
    fv = f.value_at(pts)
    pv = psi.psi.value_at(pts)
    _support_side(pv, fv)
    gpsi = diff.gamma(psi.psi, psi.psi, pts)
    logs = np.where(fv != 0.0, np.log(np.where(fv != 0.0, pv, 1.0)), 1.0)
    la = np.abs(logs) ** alpha
    w = pv ** (2.0 - Q)
    lhs = integrate(grid, _masked_quadratic(fv, w * la * gpsi ** 2 / (pv ** 2 * logs ** 2)))
    const = (2.0 / (alpha - 1.0)) ** 2
    zf2 = diff.gamma(psi.psi, f, pts) ** 2
    la_full = np.abs(np.where(zf2 != 0.0, np.log(np.where(zf2 != 0.0, pv, 1.0)), 1.0)) ** alpha
    rhs = const * integrate(grid, _masked_product(zf2, pv ** (2.0 - Q) * la_full))
    return HardyReport("radial-log", lhs, rhs, const, _ratio(lhs, rhs),
                       {"Q": Q, "alpha": alpha, "weight": psi.name})


def dilation_hardy_report(geo: GeometrySpec, psi: Weight, alpha: float,
                          f: ScalarField, grid: Grid,
                          euler_tol: float = 1e-8) -> HardyReport:
    """Hardy inequality for the dilation operator, constant (2/(Q_hom+a))^2.

    The weight must be a homogeneous quasinorm: the Euler identity
    D psi = psi is verified on the grid before reporting.
    """
    dil = dilation_operator(geo)
    if dil.Q_hom + alpha == 0.0:
        raise UsageError("alpha = -Q_hom is excluded for the dilation family")
    _require_support(grid, f)
    pts = grid.points
    pv = psi.psi.value_at(pts)
    dpsi = dil.dilation.apply(psi.psi, pts)
    scale = max(float(np.max(np.abs(pv))), 1.0)
    if float(np.max(np.abs(dpsi - pv))) > euler_tol * scale:
        raise PreconditionError("Euler identity D psi = psi fails on the grid; "
                                "the weight is not a homogeneous quasinorm")
    fv = f.value_at(pts)
    lhs = integrate(grid, _masked_quadratic(fv, pv ** alpha))
    const = (2.0 / (dil.Q_hom + alpha)) ** 2
    df = dil.dilation.apply(f, pts)
    rhs = const * integrate(grid, pv ** alpha * df ** 2)
    return HardyReport("dilation", lhs, rhs, const, _ratio(lhs, rhs),
                       {"Q_hom": dil.Q_hom, "alpha": alpha, "weight": psi.name})


def dilation_log_hardy_report(geo: GeometrySpec, psi: Weight, alpha: float,
                              f: ScalarField, grid: Grid,
                              euler_tol: float = 1e-8) -> HardyReport:
    """Critical dilation family: factor psi^(-Q_hom), weights |log psi|^a."""
    if alpha == 1.0:
        raise UsageError("alpha = 1 is excluded in the logarithmic family")
    dil = dilation_operator(geo)
    _require_support(grid, f)
    pts = grid.points
    pv = psi.psi.value_at(pts)
    dpsi = dil.dilation.apply(psi.psi, pts)
    scale = max(float(np.max(np.abs(pv))), 1.0)
    if float(np.max(np.abs(dpsi - pv))) > euler_tol * scale:
        raise PreconditionError("Euler identity D psi = psi fails on the grid")
    fv = f.value_at(pts)
    _support_side(pv, fv)
    logs = np.where(fv != 0.0, np.log(np.where(fv != 0.0, pv, 1.0)), 1.0)
    la = np.abs(logs) ** alpha
    lhs = integrate(grid, _masked_quadratic(fv, pv ** (-dil.Q_hom) * la / logs ** 2))
    const = (2.0 / (alpha - 1.0)) ** 2
    df2 = dil.dilation.apply(f, pts) ** 2
    la_full = np.abs(np.where(df2 != 0.0, np.log(np.where(df2 != 0.0, pv, 1.0)), 1.0)) ** alpha
    rhs = const * integrate(grid, _masked_product(df2, pv ** (-dil.Q_hom) * la_full))
    return HardyReport("dilation-log", lhs, rhs, const, _ratio(lhs, rhs),
                       {"Q_hom": dil.Q_hom, "alpha": alpha, "weight": psi.name})


def funcineq_report(diff, W: ScalarField, gamma: float, f: ScalarField,
                    grid: Grid) -> HardyReport:
    """The multiplier functional inequality
    int L(W^2) f^2 <= 2 int W^2 G(f) - 2 gamma int W^2 f^2."""
    diff = as_diffusion(diff)
    _require_support(grid, f)
    pts = grid.points
    fv = f.value_at(pts)
    W2 = squared(W)
    lhs = integrate(grid, _masked_quadratic(fv, diff.apply_L(W2, pts)))
    wv2 = W.value_at(pts) ** 2
    rhs = 2.0 * integrate(grid, wv2 * diff.gamma(f, f, pts)) \
        - 2.0 * gamma * integrate(grid, _masked_quadratic(fv, wv2))
    return HardyReport("funcineq", lhs, rhs, 1.0, _ratio(lhs, rhs),
                       {"gamma": gamma})


def funcineqgeneral_report(diff, W: ScalarField, beta: float, f: ScalarField,
                           grid: Grid) -> HardyReport:
    """The beta-transformed family
    (1-b) int W^(1-2b) LW f^2 + (b^2-b+1) int W^(-2b) G(W) f^2
        <= int W^(2-2b) G(f)."""
    diff = as_diffusion(diff)
    _require_support(grid, f)
    pts = grid.points
    fv = f.value_at(pts)
    wv = W.value_at(pts)
    lw = diff.apply_L(W, pts)
    gw = diff.gamma(W, W, pts)
    lhs = (1.0 - beta) * integrate(grid, _masked_quadratic(fv, wv ** (1.0 - 2.0 * beta) * lw)) \
        + (beta ** 2 - beta + 1.0) * integrate(grid, _masked_quadratic(fv, wv ** (-2.0 * beta) * gw))
    gf = diff.gamma(f, f, pts)
    rhs = integrate(grid, _masked_product(gf, wv ** (2.0 - 2.0 * beta)))
    return HardyReport("funcineq-general", lhs, rhs, 1.0, _ratio(lhs, rhs),
                       {"beta": beta})


def homogeneous_norm_report(geo: GeometrySpec, rho: Weight, f: ScalarField,
                            grid: Grid, eps: float = 1e-3) -> HardyReport:
    """Nondegenerate Hardy inequality for a homogeneous norm rho.

    The constant is assembled from grid estimates of the comparability
    constants kappa: for horizontal dimension n_0 >= 3 it is
    (2/(n_0-2))^2 k^2(|x_0|) k^2(rho); for n_0 <= 2 the single-coordinate
    route gives 4 k^2(|x_{0,1}|) k^2(rho).  ``eps`` names the shift used in
    the underlying one-sided comparison; the reported constant is its
    eps -> 0 limit.
    """
    diff = as_diffusion(geo)
    _require_support(grid, f)
    if geo.stratification is None:
        raise UsageError("homogeneous-norm reports need a stratified geometry")
    hor = [i for i, s in enumerate(geo.stratification) if s == 0]
    n0 = len(hor)
    if geo.name == "heisenberg":
        nw = make_weight(geo, "koranyi-gauge")
    elif geo.name == "euclidean":
        nw = make_weight(geo, "euclid-norm")
    else:
        raise UsageError(f"no gauge available on {geo.name!r} for the kappa estimate")
    if n0 >= 3:
        branch_const = (2.0 / (n0 - 2.0)) ** 2
        comp = make_weight(geo, "horizontal-norm", indices=hor)
    else:
        branch_const = 4.0
        comp = make_weight(geo, "coordinate", index=hor[0])
    k_comp = estimate_kappa(comp, nw, grid)
    k_rho = estimate_kappa(rho, nw, grid)
    const = branch_const * k_comp ** 2 * k_rho ** 2
    pts = grid.points
    fv = f.value_at(pts)
    rv = rho.psi.value_at(pts)
    lhs = integrate(grid, _masked_quadratic(fv, 1.0 / rv ** 2))
    rhs = const * integrate(grid, diff.gamma(f, f, pts))
    return HardyReport("homo-norm", lhs, rhs, const, _ratio(lhs, rhs),
                       {"n0": n0, "kappa_comp": k_comp, "kappa_rho": k_rho,
                        "eps": eps, "weight": rho.name})


# ---------------------------------------------------------------------------
# Sharpness probes
# ---------------------------------------------------------------------------

def rayleigh_ratio(geo, psi: Weight, alpha: float, f: ScalarField, grid: Grid) -> float:
    """R(f) = int psi^a (G(psi)/psi^2) f^2 / int psi^a G(f) (no constant)."""
    diff = as_diffusion(geo)
    pts = grid.points
    fv = f.value_at(pts)
    pv = psi.psi.value_at(pts)
    gpsi = diff.gamma(psi.psi, psi.psi, pts)
    num = integrate(grid, _masked_quadratic(fv, pv ** alpha * gpsi / pv ** 2))
    den = integrate(grid, pv ** alpha * diff.gamma(f, f, pts))
    if den <= 0:
        raise DegenerateInputError("trial function has vanishing energy")
    return num / den


@dataclass
class PowerTrialFamily:
    """Smoothed truncations of psi^(-(Q+alpha-2)/2 + eps) on supports [a, b].

    ``ramp_factors`` controls how much of each support goes to the C^2
    ramps; widening any parameter list only enlarges the family.
    """

    psi: ScalarField
    Q: float
    alpha: float
    supports: tuple
    eps_values: tuple
    ramp_factors: tuple = (2.0,)

    @property
    def base_exponent(self) -> float:
        return -(self.Q + self.alpha - 2.0) / 2.0

    def make(self, eps: float, a: float, b: float, ramp: float) -> ScalarField:
        return smoothed_power(self.psi, eps, a, b, self.base_exponent, ramp)

    def candidates(self):
        for a, b in self.supports:
            for ramp in self.ramp_factors:
                if b <= ramp ** 2 * a:
                    continue
                for eps in self.eps_values:
                    yield {"eps": float(eps), "a": float(a), "b": float(b),
                           "ramp": float(ramp)}


def default_trial_family(psi: Weight, Q: float, alpha: float, grid: Grid,
                         margin: float = 1.05) -> PowerTrialFamily:
    """Family filling the grid's resolvable psi-range, with nested sub-supports
    so that widening the family is observable."""
    pv = psi.psi.value_at(grid.points)
    lo = float(np.min(pv)) * margin
    hi = float(np.max(pv)) / margin
    if not hi > lo > 0:
        raise DegenerateInputError("grid carries no usable psi-range")
    L = np.log(hi / lo)
    supports = [(lo * np.exp(L * s), hi) for s in (0.5, 0.25, 0.0)]
    ramps = tuple(sorted({2.0} | {float(np.exp(L / d)) for d in (8.0, 5.0, 3.5)}))
    eps = (0.3, 0.1, 0.03, 0.01, 0.003)
    return PowerTrialFamily(psi.psi, Q, alpha, tuple(supports), eps, ramps)


def _golden_section_max(fun, lo: float, hi: float, iters: int = 20):
    """Golden-section maximization on [lo, hi]; returns (x, fun(x))."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return (c, fc) if fc > fd else (d, fd)


def estimate_best_constant(geo, psi: Weight, alpha: float,
                           trial_family: PowerTrialFamily | None = None,
                           grid: Grid | None = None, refine: bool = True):
    """Maximize the Rayleigh quotient over the trial family.

    Returns (sup_ratio, best_params).  The supremum is compared against the
    theoretical constant (2/(Q + alpha - 2))^2 by the caller; it approaches
    that constant from below as the family widens (smaller eps, larger b/a).
    """
    if grid is None:
        raise UsageError("estimate_best_constant requires a grid")
    Q = psi.claimed_Q
    if trial_family is None:
        if Q is None:
            raise UsageError("weight carries no claimed Q; pass a trial family")
        trial_family = default_trial_family(psi, Q, alpha, grid)

    best = (-np.inf, None)
    for cand in trial_family.candidates():
        f = trial_family.make(cand["eps"], cand["a"], cand["b"], cand["ramp"])
        if not grid.supports(f):
            continue
        r = rayleigh_ratio(geo, psi, alpha, f, grid)
        if r > best[0]:
            best = (r, cand)
    if best[1] is None:
        raise DegenerateInputError("no trial function fits inside the grid")

    sup_ratio, params = best
    if refine:
        a, b, ramp = params["a"], params["b"], params["ramp"]

        def objective(log_eps):
            f = trial_family.make(float(np.exp(log_eps)), a, b, ramp)
            if not grid.supports(f):
                return -np.inf
            return rayleigh_ratio(geo, psi, alpha, f, grid)

        eps0 = params["eps"]
        x, fx = _golden_section_max(objective, np.log(eps0) - 3.0, np.log(eps0) + 1.5)
        if fx > sup_ratio:
            sup_ratio = fx
            params = {**params, "eps": float(np.exp(x))}
    return sup_ratio, params
