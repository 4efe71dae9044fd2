"""Maximum-likelihood estimation of parametric bargaining technologies.

A household is a matched pair ``xy``, a single man ``x0`` or a single
woman ``0y``.  Given parameters ``theta = (lam, u, v)`` the model
predicts cell probabilities

    pi_xy = e^(-D_xy(lam; u_x, v_y)) / N,   pi_x0 = e^(-u_x) / N,
    pi_0y = e^(-v_y) / N,
    N = sum e^(-D) + sum e^(-u) + sum e^(-v),

and the per-household log-likelihood of observed frequencies ``pi_hat``
is

    l(theta) = -( sum pi_hat_xy * D_xy + sum pi_hat_x0 * u_x
                  + sum pi_hat_0y * v_y + log N ).

Families must be twice continuously differentiable in ``(lam, u, v)``,
so TU, LTU and ETU templates are supported (kinked technologies are
rejected).  The location fields (``phi``, ``alpha``, ``gamma``) are
affine in ``lam`` with user-supplied basis arrays; scale fields
(``lam``/``zeta``/``tau``/``budget``) are fixed constants of the family
so they cannot be driven out of their admissible range.

The likelihood is invariant to shifting every ``u_x`` and ``v_y`` by a
common constant (the distance translation identity makes all predicted
probabilities unchanged), so the information matrix always has this one
null direction.  Estimates are reported in the gauge
``sum u + sum v = 0`` and the variance uses the pseudo-inverse on the
identified subspace; identified functionals such as the ``lam`` block
are unaffected.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .errors import OptimizationError, ValidationError

__all__ = [
    "ParametricModel",
    "ObservedSample",
    "FitResult",
    "log_likelihood",
    "score",
    "fit_mle",
    "fisher_information",
    "sample_synthetic",
    "predicted_frequencies",
    "read_sample_csv",
]


def _as_matrix(value, shape, name) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(shape, float(arr))
    if arr.shape != shape:
        raise ValidationError(f"{name} must have shape {shape}, got {arr.shape}", field=name)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite", field=name)
    return arr


def _as_basis(value, K, shape, name) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (K,) + shape:
        raise ValidationError(f"{name} must have shape {(K,) + shape}, got {arr.shape}", field=name)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite", field=name)
    return arr


@dataclass(frozen=True)
class ParametricModel:
    """A smooth family of pair technologies, affine in the parameters.

    Use the :meth:`tu`, :meth:`ltu` or :meth:`etu` constructors.  ``K``
    is the parameter dimension; ``affine`` maps location-field names to
    ``(base [X,Y], basis [K,X,Y])`` and ``constants`` holds the fixed
    scale fields.
    """

    family: str
    x_labels: tuple[str, ...]
    y_labels: tuple[str, ...]
    K: int
    affine: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in ("TU", "LTU", "ETU"):
            raise ValidationError(
                f"family {self.family!r} is not twice continuously differentiable in "
                "(parameters, u, v); only TU, LTU and ETU families are estimable",
                field="family",
            )
        if self.K < 1:
            raise ValidationError("K must be at least 1", field="K")

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.x_labels), len(self.y_labels)

    @property
    def dim(self) -> int:
        X, Y = self.shape
        return self.K + X + Y

    @staticmethod
    def tu(x_labels, y_labels, phi_basis, phi_base=0.0) -> "ParametricModel":
        x_labels, y_labels = tuple(map(str, x_labels)), tuple(map(str, y_labels))
        shape = (len(x_labels), len(y_labels))
        basis = np.asarray(phi_basis, dtype=float)
        K = basis.shape[0]
        return ParametricModel(
            family="TU",
            x_labels=x_labels,
            y_labels=y_labels,
            K=K,
            affine={"phi": (_as_matrix(phi_base, shape, "phi_base"), _as_basis(basis, K, shape, "phi_basis"))},
        )

    @staticmethod
    def ltu(x_labels, y_labels, phi_basis, lam, zeta, phi_base=0.0) -> "ParametricModel":
        x_labels, y_labels = tuple(map(str, x_labels)), tuple(map(str, y_labels))
        shape = (len(x_labels), len(y_labels))
        basis = np.asarray(phi_basis, dtype=float)
        K = basis.shape[0]
        lam = _as_matrix(lam, shape, "lam")
        zeta = _as_matrix(zeta, shape, "zeta")
        if np.any(lam <= 0) or np.any(zeta <= 0):
            raise ValidationError("lam and zeta must be strictly positive", field="lam")
        return ParametricModel(
            family="LTU",
            x_labels=x_labels,
            y_labels=y_labels,
            K=K,
            affine={"phi": (_as_matrix(phi_base, shape, "phi_base"), _as_basis(basis, K, shape, "phi_basis"))},
            constants={"lam": lam, "zeta": zeta},
        )

    @staticmethod
    def etu(
        x_labels,
        y_labels,
        alpha_basis,
        gamma_basis,
        tau,
        budget,
        alpha_base=0.0,
        gamma_base=0.0,
    ) -> "ParametricModel":
        x_labels, y_labels = tuple(map(str, x_labels)), tuple(map(str, y_labels))
        shape = (len(x_labels), len(y_labels))
        a_basis = np.asarray(alpha_basis, dtype=float)
        g_basis = np.asarray(gamma_basis, dtype=float)
        if a_basis.shape != g_basis.shape:
            raise ValidationError("alpha and gamma bases must have equal shapes", field="gamma_basis")
        K = a_basis.shape[0]
        tau = _as_matrix(tau, shape, "tau")
        budget = _as_matrix(budget, shape, "budget")
        if np.any(tau <= 0) or np.any(budget <= 0):
            raise ValidationError("tau and budget must be strictly positive", field="tau")
        return ParametricModel(
            family="ETU",
            x_labels=x_labels,
            y_labels=y_labels,
            K=K,
            affine={
                "alpha": (_as_matrix(alpha_base, shape, "alpha_base"), _as_basis(a_basis, K, shape, "alpha_basis")),
                "gamma": (_as_matrix(gamma_base, shape, "gamma_base"), _as_basis(g_basis, K, shape, "gamma_basis")),
            },
            constants={"tau": tau, "budget": budget},
        )

    # -- theta packing ------------------------------------------------

    def split(self, theta: np.ndarray):
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.size != self.dim:
            raise ValidationError(f"theta must have length {self.dim}, got {theta.size}", field="theta")
        X, Y = self.shape
        return theta[: self.K], theta[self.K : self.K + X], theta[self.K + X :]

    def pack(self, lam, u, v) -> np.ndarray:
        return np.concatenate([np.asarray(lam, float).ravel(), np.asarray(u, float).ravel(), np.asarray(v, float).ravel()])

    def _field(self, name, lam):
        base, basis = self.affine[name]
        return base + np.tensordot(lam, basis, axes=(0, 0))

    def distance_and_grads(self, theta):
        """``D [X,Y]``, ``dD/du``, ``dD/dv`` and ``dD/dlam [K,X,Y]`` at theta."""
        lam, u, v = self.split(theta)
        uu = u[:, None]
        vv = v[None, :]
        if self.family == "TU":
            base, basis = self.affine["phi"]
            phi = base + np.tensordot(lam, basis, axes=(0, 0))
            d = 0.5 * (uu + vv - phi)
            du = np.full(d.shape, 0.5)
            dlam = -0.5 * basis
            return d, du, 1.0 - du, dlam
        if self.family == "LTU":
            base, basis = self.affine["phi"]
            phi = base + np.tensordot(lam, basis, axes=(0, 0))
            lam_c = self.constants["lam"]
            zeta_c = self.constants["zeta"]
            s = lam_c + zeta_c
            d = (lam_c * uu + zeta_c * vv - phi) / s
            du = lam_c / s
            dlam = -basis / s[None, :, :]
            return d, np.broadcast_to(du, d.shape).copy(), np.broadcast_to(zeta_c / s, d.shape).copy(), dlam
        # ETU
        a_base, a_basis = self.affine["alpha"]
        g_base, g_basis = self.affine["gamma"]
        alpha = a_base + np.tensordot(lam, a_basis, axes=(0, 0))
        gamma = g_base + np.tensordot(lam, g_basis, axes=(0, 0))
        tau = self.constants["tau"]
        budget = self.constants["budget"]
        p = (uu - alpha) / tau
        q = (vv - gamma) / tau
        d = tau * (np.logaddexp(p, q) - np.log(budget))
        s_u = np.where(p >= q, 1.0 / (1.0 + np.exp(-np.abs(p - q))), 1.0 - 1.0 / (1.0 + np.exp(-np.abs(p - q))))
        dlam = -(s_u[None, :, :] * a_basis + (1.0 - s_u)[None, :, :] * g_basis)
        return d, s_u, 1.0 - s_u, dlam


@dataclass(frozen=True)
class ObservedSample:
    """Empirical household frequencies and the sample size behind them."""

    pi_xy: np.ndarray
    pi_x0: np.ndarray
    pi_0y: np.ndarray
    n_hat: int

    def __post_init__(self):
        pi_xy = np.asarray(self.pi_xy, dtype=float)
        pi_x0 = np.asarray(self.pi_x0, dtype=float).reshape(-1)
        pi_0y = np.asarray(self.pi_0y, dtype=float).reshape(-1)
        if pi_xy.ndim != 2 or pi_xy.shape[0] != pi_x0.size or pi_xy.shape[1] != pi_0y.size:
            raise ValidationError("frequency arrays must be conformable", field="pi_xy")
        if np.any(pi_xy < 0) or np.any(pi_x0 < 0) or np.any(pi_0y < 0):
            raise ValidationError("frequencies must be nonnegative", field="pi_xy")
        total = float(pi_xy.sum() + pi_x0.sum() + pi_0y.sum())
        if abs(total - 1.0) > 1e-12:
            raise ValidationError(f"frequencies must sum to 1, got {total!r}", field="pi_xy")
        if int(self.n_hat) < 1:
            raise ValidationError("n_hat must be a positive count", field="n_hat")
        for a in (pi_xy, pi_x0, pi_0y):
            a.setflags(write=False)
        object.__setattr__(self, "pi_xy", pi_xy)
        object.__setattr__(self, "pi_x0", pi_x0)
        object.__setattr__(self, "pi_0y", pi_0y)
        object.__setattr__(self, "n_hat", int(self.n_hat))


@dataclass(frozen=True)
class FitResult:
    """MLE output: estimate, value, sampling variance and optimizer trace."""

    theta_hat: np.ndarray
    lam_hat: np.ndarray
    u_hat: np.ndarray
    v_hat: np.ndarray
    loglik: float
    variance: np.ndarray
    diagnostics: dict


def _check_sample(model: ParametricModel, sample: ObservedSample):
    if sample.pi_xy.shape != model.shape:
        raise ValidationError(
            f"sample shape {sample.pi_xy.shape} does not match model shape {model.shape}", field="pi_xy"
        )


def _log_n(d, u, v) -> float:
    stacked = np.concatenate([-d.ravel(), -u, -v])
    m = float(stacked.max())
    return m + math.log(float(np.exp(stacked - m).sum()))


def predicted_frequencies(model: ParametricModel, theta):
    """Model cell probabilities ``(pi_xy, pi_x0, pi_0y)`` at ``theta``."""
    lam, u, v = model.split(theta)
    d = model.distance_and_grads(theta)[0]
    log_n = _log_n(d, u, v)
    return np.exp(-d - log_n), np.exp(-u - log_n), np.exp(-v - log_n)


def log_likelihood(model: ParametricModel, theta, sample: ObservedSample) -> float:
    """Per-household log-likelihood of the observed frequencies."""
    _check_sample(model, sample)
    lam, u, v = model.split(theta)
    d = model.distance_and_grads(theta)[0]
    log_n = _log_n(d, u, v)
    return -float(
        (sample.pi_xy * d).sum() + (sample.pi_x0 * u).sum() + (sample.pi_0y * v).sum() + log_n
    )


def score(model: ParametricModel, theta, sample: ObservedSample) -> np.ndarray:
    """Analytic gradient of :func:`log_likelihood` in ``theta``.

    Vanishes exactly when the model frequencies reproduce the observed
    ones (the first-order conditions are moment-matching conditions).
    """
    _check_sample(model, sample)
    lam, u, v = model.split(theta)
    d, du, dv, dlam = model.distance_and_grads(theta)
    log_n = _log_n(d, u, v)
    pi_xy = np.exp(-d - log_n)
    pi_x0 = np.exp(-u - log_n)
    pi_0y = np.exp(-v - log_n)
    diff = pi_xy - sample.pi_xy
    g_lam = np.tensordot(dlam, diff, axes=((1, 2), (0, 1)))
    g_u = (diff * du).sum(axis=1) + (pi_x0 - sample.pi_x0)
    g_v = (diff * dv).sum(axis=0) + (pi_0y - sample.pi_0y)
    return np.concatenate([g_lam, g_u, g_v])


def _grad_rows(model: ParametricModel, theta):
    """Rows of the cell-level distance gradient, one per household cell.

    Cell order: couples row-major, then single men, then single women.
    Singles cells have unit derivative in their own ``u_x`` or ``v_y``.
    """
    X, Y = model.shape
    d, du, dv, dlam = model.distance_and_grads(theta)
    A = X * Y + X + Y
    R = np.zeros((A, model.dim))
    R[: X * Y, : model.K] = dlam.reshape(model.K, X * Y).T
    for x in range(X):
        R[x * Y : (x + 1) * Y, model.K + x] = du[x]
    for y in range(Y):
        R[y : X * Y : Y, model.K + X + y] = dv[:, y]
    R[X * Y : X * Y + X, model.K : model.K + X] = np.eye(X)
    R[X * Y + X :, model.K + X :] = np.eye(Y)
    return R, d


def fisher_information(model: ParametricModel, theta) -> np.ndarray:
    """Expected outer product of the score of one household at ``theta``.

    Computed exactly as the finite sum over household cells weighted by
    the model probabilities.  Symmetric positive semidefinite; always
    singular in the common-shift direction of ``(u, v)``.
    """
    lam, u, v = model.split(theta)
    R, d = _grad_rows(model, theta)
    log_n = _log_n(d, u, v)
    pi = np.concatenate([np.exp(-d.ravel() - log_n), np.exp(-u - log_n), np.exp(-v - log_n)])
    centered = R - pi @ R
    info = centered.T @ (pi[:, None] * centered)
    return 0.5 * (info + info.T)


def _gauge_normalize(model: ParametricModel, theta: np.ndarray) -> np.ndarray:
    lam, u, v = model.split(theta)
    X, Y = model.shape
    c = (u.sum() + v.sum()) / (X + Y)
    return model.pack(lam, u - c, v - c)


def sample_synthetic(model: ParametricModel, theta_true, n_hat: int, seed: int = 0) -> ObservedSample:
    """Multinomial draw of ``n_hat`` households from the model at ``theta_true``."""
    if int(n_hat) < 1:
        raise ValidationError("n_hat must be a positive count", field="n_hat")
    X, Y = model.shape
    pi_xy, pi_x0, pi_0y = predicted_frequencies(model, theta_true)
    p = np.concatenate([pi_xy.ravel(), pi_x0, pi_0y])
    p = p / p.sum()
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(int(n_hat), p)
    freq = counts / float(n_hat)
    return ObservedSample(
        pi_xy=freq[: X * Y].reshape(X, Y),
        pi_x0=freq[X * Y : X * Y + X],
        pi_0y=freq[X * Y + X :],
        n_hat=int(n_hat),
    )


_SCORE_TOL = 1e-6
_FLAT_RCOND = 1e-10


def fit_mle(
    model: ParametricModel,
    sample: ObservedSample,
    init: np.ndarray | None = None,
    max_iter: int = 1000,
) -> FitResult:
    """Maximize the likelihood with the analytic score.

    Quasi-Newton (BFGS) ascent followed by Fisher-scoring polish steps;
    converged when the score sup-norm is at most 1e-6.  The reported
    ``variance`` is the pseudo-inverse of the Fisher information divided
    by the sample size; directions with information below
    ``1e-10 * max eigenvalue`` (at least the common-shift direction) are
    reported as flat in the diagnostics rather than silently dropped.
    """
    _check_sample(model, sample)
    X, Y = model.shape
    if init is None:
        n_cells = X * Y + X + Y
        floor = 0.5 / sample.n_hat
        u0 = -np.log(np.maximum(sample.pi_x0, floor) * n_cells)
        v0 = -np.log(np.maximum(sample.pi_0y, floor) * n_cells)
        init = model.pack(np.zeros(model.K), u0, v0)
    else:
        init = np.asarray(init, dtype=float).reshape(-1)
        if init.size != model.dim or not np.all(np.isfinite(init)):
            raise ValidationError(f"init must be a finite vector of length {model.dim}", field="init")
    theta0 = _gauge_normalize(model, init)

    trace: list[float] = []

    def neg_ll(th):
        val = -log_likelihood(model, th, sample)
        trace.append(-val)
        return val

    def neg_score(th):
        return -score(model, th, sample)

    res = scipy.optimize.minimize(
        neg_ll,
        theta0,
        jac=neg_score,
        method="BFGS",
        options={"gtol": 1e-8, "maxiter": max_iter},
    )
    theta = _gauge_normalize(model, res.x)

    # Fisher-scoring polish: the information matrix is the expected
    # Hessian of -loglik at the fitted frequencies, so a few scoring
    # steps clean up what BFGS leaves on ridge-shaped likelihoods
    polish_steps = 0
    g = score(model, theta, sample)
    while float(np.abs(g).max()) > 0.1 * _SCORE_TOL and polish_steps < 80:
        info = fisher_information(model, theta)
        direction = np.linalg.pinv(info, rcond=1e-12, hermitian=True) @ g
        step = 1.0
        base = log_likelihood(model, theta, sample)
        improved = False
        for _ in range(40):
            cand = _gauge_normalize(model, theta + step * direction)
            if log_likelihood(model, cand, sample) >= base - 1e-15:
                theta = cand
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        polish_steps += 1
        g = score(model, theta, sample)

    sup_score = float(np.abs(g).max())
    if sup_score > _SCORE_TOL:
        raise OptimizationError(
            f"optimizer stalled with score sup-norm {sup_score:.3e} > {_SCORE_TOL}",
            trace=trace,
        )

    info = fisher_information(model, theta)
    eigvals, eigvecs = np.linalg.eigh(info)
    cutoff = _FLAT_RCOND * float(eigvals.max())
    flat = eigvals < cutoff
    inv_vals = np.where(flat, 0.0, 1.0 / np.where(flat, 1.0, eigvals))
    variance = (eigvecs * inv_vals) @ eigvecs.T / sample.n_hat
    variance = 0.5 * (variance + variance.T)

    lam_hat, u_hat, v_hat = model.split(theta)
    diagnostics = {
        "optimizer": "bfgs+fisher_scoring",
        "bfgs_message": res.message,
        "bfgs_iterations": int(res.nit),
        "polish_steps": polish_steps,
        "score_sup_norm": sup_score,
        "loglik_trace": trace,
        "flat_directions": int(flat.sum()),
        "flat_vectors": eigvecs[:, flat].T.copy(),
    }
    return FitResult(
        theta_hat=theta,
        lam_hat=lam_hat,
        u_hat=u_hat,
        v_hat=v_hat,
        loglik=log_likelihood(model, theta, sample),
        variance=variance,
        diagnostics=diagnostics,
    )


def read_sample_csv(path, x_labels=None, y_labels=None):
    """Read household counts from CSV rows ``(x_label, y_label, count)``.

    A ``0`` in the partner column marks singles: ``(x, 0, c)`` are single
    men, ``(0, y, c)`` single women.  Returns
    ``(sample, x_labels, y_labels)``; when labels are not supplied they
    are taken in order of first appearance.
    """
    couples: dict[tuple[str, str], float] = {}
    singles_x: dict[str, float] = {}
    singles_y: dict[str, float] = {}
    seen_x: list[str] = []
    seen_y: list[str] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row or row[0].strip().startswith("#"):
                continue
            if row[0].strip().lower() in ("x", "x_label"):  # header
                continue
            if len(row) != 3:
                raise ValidationError(f"expected 3 columns (x, y, count), got {row!r}", field="csv")
            x, y, cnt = row[0].strip(), row[1].strip(), float(row[2])
            if cnt < 0:
                raise ValidationError(f"negative count in row {row!r}", field="csv")
            if x == "0" and y == "0":
                raise ValidationError("a household cannot have both sides empty", field="csv")
            if x != "0" and x not in seen_x:
                seen_x.append(x)
            if y != "0" and y not in seen_y:
                seen_y.append(y)
            if y == "0":
                singles_x[x] = singles_x.get(x, 0.0) + cnt
            elif x == "0":
                singles_y[y] = singles_y.get(y, 0.0) + cnt
            else:
                couples[(x, y)] = couples.get((x, y), 0.0) + cnt
    xs = tuple(map(str, x_labels)) if x_labels is not None else tuple(seen_x)
    ys = tuple(map(str, y_labels)) if y_labels is not None else tuple(seen_y)
    mu = np.zeros((len(xs), len(ys)))
    for (x, y), c in couples.items():
        if x not in xs or y not in ys:
            raise ValidationError(f"label pair ({x!r}, {y!r}) not in the model's type lists", field="csv")
        mu[xs.index(x), ys.index(y)] = c
    mx = np.array([singles_x.get(x, 0.0) for x in xs])
    my = np.array([singles_y.get(y, 0.0) for y in ys])
    total = mu.sum() + mx.sum() + my.sum()
    if total <= 0:
        raise ValidationError("sample contains no households", field="csv")
    sample = ObservedSample(
        pi_xy=mu / total, pi_x0=mx / total, pi_0y=my / total, n_hat=int(round(total))
    )
    return sample, xs, ys
