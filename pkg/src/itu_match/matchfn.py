"""Matching functions: mass of matches as a function of the singles masses.

Under logit heterogeneity with temperature ``sigma``, the mass of
``(x, y)`` matches consistent with singles masses ``(mu_x0, mu_0y)`` is

    M(a, b) = exp(-D(-sigma*log a, -sigma*log b) / sigma),

where ``D`` is the pair's distance-to-frontier function.  At ``sigma = 1``
this is the standard logit matching function; lowering ``sigma`` is a
homotopy toward the equilibrium without taste heterogeneity.  ``M`` is
homogeneous of degree one in ``(a, b)`` for every ``sigma`` thanks to the
translation identity of ``D``.

Closed-form fast paths exist for the elementary technologies (selected
by variant tag, never by numeric detection):

    TU    sqrt(a*b) * exp(phi / (2*sigma))
    NTU   min(a * e^(alpha/sigma), b * e^(gamma/sigma))
    LTU   a^(lam/(lam+zeta)) * b^(zeta/(lam+zeta)) * exp(phi/(sigma*(lam+zeta)))
    ETU   ((e^(-alpha/tau) a^(-sigma/tau) + e^(-gamma/tau) b^(-sigma/tau)) / B)^(-tau/sigma)

A Dagsvik-Menzel comparison variant ``M = a * b * e^(alpha+gamma)`` is
provided for evaluation only; it is homogeneous of degree two, not one,
and is rejected by the equilibrium solvers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import bargaining as bg
from .errors import DomainError, ValidationError

__all__ = ["MatchFnSpec", "match_mass", "match_mass_grad"]


@dataclass(frozen=True)
class MatchFnSpec:
    """A matching function: a bargaining technology plus temperature.

    ``variant`` is ``"generic"`` (the default; ``distance`` required) or
    ``"dagsvik_menzel"`` (``dm_alpha``/``dm_gamma`` required, ``distance``
    ignored and may be None).
    """

    distance: bg.DistanceSpec | None = None
    sigma: float = 1.0
    variant: str = "generic"
    dm_alpha: float = 0.0
    dm_gamma: float = 0.0

    def __post_init__(self):
        if self.variant not in ("generic", "dagsvik_menzel"):
            raise ValidationError(f"unknown matching function variant {self.variant!r}", field="variant")
        if not (float(self.sigma) > 0.0):
            raise ValidationError("sigma must be strictly positive", field="sigma")
        object.__setattr__(self, "sigma", float(self.sigma))
        if self.variant == "generic" and not isinstance(self.distance, bg.DistanceSpec):
            raise ValidationError("generic matching function needs a distance spec", field="distance")

    @staticmethod
    def generic(distance: bg.DistanceSpec, sigma: float = 1.0) -> "MatchFnSpec":
        return MatchFnSpec(distance=distance, sigma=sigma, variant="generic")

    @staticmethod
    def dagsvik_menzel(alpha: float, gamma: float) -> "MatchFnSpec":
        return MatchFnSpec(distance=None, variant="dagsvik_menzel", dm_alpha=alpha, dm_gamma=gamma)


def _check_masses(mu_x0, mu_0y):
    a = np.asarray(mu_x0, dtype=float)
    b = np.asarray(mu_0y, dtype=float)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DomainError("singles masses must be finite")
    if np.any(a <= 0.0) or np.any(b <= 0.0):
        raise DomainError("singles masses must be strictly positive")
    return a, b


def _fast_path(spec, sigma, a, b):
    if isinstance(spec, bg.TU):
        return np.sqrt(a * b) * np.exp(spec.phi / (2.0 * sigma))
    if isinstance(spec, bg.NTU):
        return np.minimum(a * np.exp(spec.alpha / sigma), b * np.exp(spec.gamma / sigma))
    if isinstance(spec, bg.LTU):
        s = spec.lam + spec.zeta
        return a ** (spec.lam / s) * b ** (spec.zeta / s) * np.exp(spec.phi / (sigma * s))
    if isinstance(spec, bg.ETU):
        # the harmonic-power closed form, evaluated in log domain so that
        # extreme transferability degrees neither overflow nor underflow
        t = spec.tau
        p = (-spec.alpha - sigma * np.log(a)) / t
        q = (-spec.gamma - sigma * np.log(b)) / t
        return np.exp(-(t / sigma) * (np.logaddexp(p, q) - np.log(spec.budget)))
    return None


def match_mass(spec: MatchFnSpec, mu_x0, mu_0y):
    """Mass of matches formed at singles masses ``(mu_x0, mu_0y)``.

    Strictly positive, increasing in both arguments, and degree-one
    homogeneous for the generic variant.  Scalars or broadcastable
    arrays are accepted.
    """
    a, b = _check_masses(mu_x0, mu_0y)
    scalar = a.ndim == 0 and b.ndim == 0
    if spec.variant == "dagsvik_menzel":
        out = a * b * np.exp(spec.dm_alpha + spec.dm_gamma)
        return float(out) if scalar else out
    fast = _fast_path(spec.distance, spec.sigma, a, b)
    if fast is not None:
        return float(fast) if scalar else np.asarray(fast)
    d = bg.evaluate(spec.distance, -spec.sigma * np.log(a), -spec.sigma * np.log(b))
    out = np.exp(-np.asarray(d) / spec.sigma)
    return float(out) if scalar else out


def match_mass_generic(spec: MatchFnSpec, mu_x0, mu_0y):
    """The generic exponential-of-distance route, bypassing fast paths.

    Used to verify that the closed forms agree with the defining formula.
    """
    a, b = _check_masses(mu_x0, mu_0y)
    if spec.variant == "dagsvik_menzel":
        raise ValidationError("the Dagsvik-Menzel variant has no distance representation")
    scalar = a.ndim == 0 and b.ndim == 0
    d = bg.evaluate(spec.distance, -spec.sigma * np.log(a), -spec.sigma * np.log(b))
    out = np.exp(-np.asarray(d) / spec.sigma)
    return float(out) if scalar else out


def match_mass_grad(spec: MatchFnSpec, mu_x0, mu_0y):
    """Partial derivatives ``(dM/dmu_x0, dM/dmu_0y)``.

    For the generic variant, ``dM/da = M * dD/du / a`` (and symmetrically
    in ``b``), using active-branch distance partials at kinks.
    """
    a, b = _check_masses(mu_x0, mu_0y)
    scalar = a.ndim == 0 and b.ndim == 0
    if spec.variant == "dagsvik_menzel":
        scale = np.exp(spec.dm_alpha + spec.dm_gamma)
        ga, gb = b * scale, a * scale
        return (float(ga), float(gb)) if scalar else (np.asarray(ga), np.asarray(gb))
    m = match_mass(spec, a, b)
    du, dv = bg.partials(spec.distance, -spec.sigma * np.log(a), -spec.sigma * np.log(b))
    ga = m * np.asarray(du) / a
    gb = m * np.asarray(dv) / b
    if scalar:
        return float(ga), float(gb)
    return ga, gb
