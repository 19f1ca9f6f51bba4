"""Weighted nonlinear least squares for the analysis models.

The optimizer is a damped Gauss-Newton (Levenberg-Marquardt) loop with
Marquardt diagonal scaling: the damping factor is divided by 10 after an
accepted step and multiplied by 10 after a rejected one. A step is accepted
only if it strictly lowers the weighted residual sum of squares, so the
residual never increases across accepted iterations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

XTOL = 1e-8
GTOL = 1e-10
MAX_ITER = 200
LAMBDA0 = 1e-3
LAMBDA_MAX = 1e16


class ResonanceError(RuntimeError):
    def __init__(self, message: str, code: str = "E_PEAK_AT_EDGE"):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass(frozen=True)
class ModelFunction:
    """A model y = f(x; p) with its analytic Jacobian df/dp."""

    name: str
    params: tuple[str, ...]
    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray, np.ndarray], np.ndarray]
    constants: Mapping[str, float] = field(default_factory=dict)

    def __call__(self, x, *p) -> np.ndarray:
        return self.func(np.asarray(x, dtype=float), np.asarray(p, dtype=float))


# ---------------------------------------------------------------------------
# models


def _damped_sine(x, p):
    A, B, g, f = p[:4]
    phi = p[4] if len(p) > 4 else 0.0
    return A + B * np.exp(-g * x) * np.cos(TWO_PI * f * x + phi)


def _damped_sine_jac(x, p):
    A, B, g, f = p[:4]
    phi = p[4] if len(p) > 4 else 0.0
    e = np.exp(-g * x)
    arg = TWO_PI * f * x + phi
    c, s = np.cos(arg), np.sin(arg)
    cols = [np.ones_like(x), e * c, -B * x * e * c, -B * e * s * TWO_PI * x]
    if len(p) > 4:
        cols.append(-B * e * s)
    return np.stack(cols, axis=-1)


def _sine(x, p):
    A, B, f = p
    return A + B * np.cos(TWO_PI * f * x)


def _sine_jac(x, p):
    A, B, f = p
    arg = TWO_PI * f * x
    return np.stack([np.ones_like(x), np.cos(arg), -B * np.sin(arg) * TWO_PI * x], axis=-1)


def _gaussian(x, p):
    a, x0, w, c = p
    return a * np.exp(-2.0 * (x - x0) ** 2 / w**2) + c


def _gaussian_jac(x, p):
    a, x0, w, c = p
    e = np.exp(-2.0 * (x - x0) ** 2 / w**2)
    return np.stack(
        [e, a * e * 4.0 * (x - x0) / w**2, a * e * 4.0 * (x - x0) ** 2 / w**3, np.ones_like(x)],
        axis=-1,
    )


damped_sine = ModelFunction("damped_sine", ("A", "B", "gamma", "f"), _damped_sine, _damped_sine_jac)
damped_sine_phase = ModelFunction(
    "damped_sine_phase", ("A", "B", "gamma", "f", "phase"), _damped_sine, _damped_sine_jac
)
sine = ModelFunction("sine", ("A", "B", "f"), _sine, _sine_jac)
gaussian_1e2 = ModelFunction("gaussian_1e2", ("a", "x0", "w", "c"), _gaussian, _gaussian_jac)


def rabi_line(duration: float) -> ModelFunction:
    """Square-pulse excitation probability versus detuning for a pulse of
    ``duration`` us: P0 * W^2/(W^2 + d^2) * sin^2(pi sqrt(W^2 + d^2) tau),
    with d = x - delta0 and W the Rabi frequency (MHz)."""
    tau = float(duration)

    def func(x, p):
        P0, W, d0 = p
        s2 = W**2 + (x - d0) ** 2
        return P0 * W**2 / s2 * np.sin(math.pi * np.sqrt(s2) * tau) ** 2

    def jac(x, p):
        P0, W, d0 = p
        d = x - d0
        s2 = W**2 + d**2
        s = np.sqrt(s2)
        u = math.pi * s * tau
        sin2 = np.sin(u) ** 2
        base = W**2 / s2 * sin2
        # derivative of P0 W^2 sin^2(u)/s^2 with respect to s at fixed W
        dPds = P0 * W**2 * (-2.0 * sin2 / s**3 + np.sin(2.0 * u) * math.pi * tau / s2)
        dW = P0 * 2.0 * W / s2 * sin2 + dPds * W / s
        dd0 = dPds * (-d / s)
        return np.stack([base, dW, dd0], axis=-1)

    return ModelFunction("rabi_line", ("P0", "rabi", "delta0"), func, jac, {"duration": tau})


MODELS: dict[str, ModelFunction] = {
    m.name: m for m in (damped_sine, damped_sine_phase, sine, gaussian_1e2)
}


# ---------------------------------------------------------------------------
# results


@dataclass
class FitResult:
    model: str
    names: tuple[str, ...]
    values: np.ndarray
    errors: np.ndarray
    rss: float
    converged: bool
    iterations: int
    gradient_norm: float = 0.0
    fixed: tuple[str, ...] = ()
    flags: tuple[str, ...] = field(default=())
    rss_history: tuple[float, ...] = ()

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def error(self, name: str) -> float:
        return float(self.errors[self.names.index(name)])

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.values)}


# ---------------------------------------------------------------------------
# optimizer


def fit(
    model: ModelFunction,
    x,
    y,
    sigma=None,
    p0: Sequence[float] | Mapping[str, float] | None = None,
    fixed: Mapping[str, float] | None = None,
    max_iter: int = MAX_ITER,
) -> FitResult:
    """Least-squares fit of ``model`` to (x, y), weighted by 1/sigma^2.

    ``sigma=None`` fits unweighted and scales the reported uncertainties by
    the reduced chi-square. ``fixed`` pins named parameters. Failure to
    converge within ``max_iter`` is reported through ``converged=False``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n_params = len(model.params)
    weighted = sigma is not None
    if weighted:
        sigma = np.broadcast_to(np.asarray(sigma, dtype=float), y.shape)
        if np.any(~np.isfinite(sigma)) or np.any(sigma <= 0):
            raise ValueError("sigma must be finite and > 0")
    w = 1.0 / sigma if weighted else np.ones_like(y)
    fixed = dict(fixed or {})
    flags: list[str] = []
    if p0 is None:
        p0, flat = initial_guess(model, x, y)
        if flat:
            flags.append("flat")
    if isinstance(p0, Mapping):
        p0 = [p0[name] for name in model.params]
    p = np.asarray(p0, dtype=float).copy()
    for name, v in fixed.items():
        p[model.params.index(name)] = v
    free = np.array([name not in fixed for name in model.params])
    if x.size < free.sum() + 1:
        raise ValueError(f"need at least {free.sum() + 1} points, got {x.size}")

    def residual(q):
        return (y - model.func(x, q)) * w

    def jacobian(q):
        return model.jac(x, q)[:, free] * w[:, None]

    r = residual(p)
    rss = float(r @ r)
    history = [rss]
    lam = LAMBDA0
    converged = False
    it = 0
    gnorm = math.inf
    while it < max_iter:
        it += 1
        J = jacobian(p)
        g = J.T @ r
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        if gnorm < GTOL:
            converged = True
            break
        A = J.T @ J
        D = np.diag(A).copy()
        D[D <= 0.0] = max(float(D.max()) * 1e-12, 1e-300) if D.size else 1.0
        accepted = False
        while lam <= LAMBDA_MAX:
            try:
                step = np.linalg.solve(A + lam * np.diag(D), g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            q = p.copy()
            q[free] += step
            r_new = residual(q)
            rss_new = float(r_new @ r_new)
            if np.isfinite(rss_new) and rss_new < rss:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # no step lowers the residual: at a (numerical) minimum iff
            # Gauss-Newton predicts no meaningful decrease
            pred = float(g @ np.linalg.lstsq(A, g, rcond=None)[0])
            converged = pred <= 1e-12 * max(rss, 1e-300) or gnorm < math.sqrt(GTOL)
            break
        rel = np.max(np.abs(step) / (np.abs(p[free]) + XTOL))
        p, r, rss = q, r_new, rss_new
        history.append(rss)
        lam = max(lam / 10.0, 1e-12)
        if rel < XTOL:
            converged = True
            break

    errors = _uncertainties(jacobian(p), rss, x.size, int(free.sum()), weighted)
    full_err = np.zeros(n_params)
    full_err[free] = errors
    return FitResult(
        model.name, model.params, p, full_err, rss, converged, it, gnorm,
        tuple(fixed), tuple(flags), tuple(history),
    )


def _uncertainties(J: np.ndarray, rss: float, n: int, k: int, weighted: bool) -> np.ndarray:
    cov = np.linalg.pinv(J.T @ J)
    if not weighted:
        cov = cov * (rss / max(n - k, 1))
    return np.sqrt(np.clip(np.diag(cov), 0.0, None))


# ---------------------------------------------------------------------------
# initial guesses


def spectral_peak(x: np.ndarray, y: np.ndarray, oversample: int = 8) -> float:
    """Frequency of the largest discrete-Fourier peak (DC excluded)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float) - np.mean(y)
    span = float(x.max() - x.min())
    if span <= 0.0:
        return 0.0
    dx = np.diff(np.sort(x))
    dx = float(np.median(dx[dx > 0])) if np.any(dx > 0) else span
    df = 1.0 / (oversample * span)
    freqs = np.arange(1, int(0.5 / dx / df) + 1) * df
    if freqs.size == 0:
        return 1.0 / span
    power = np.abs(np.exp(-2j * math.pi * np.outer(freqs, x)) @ y)
    return float(freqs[np.argmax(power)])


def initial_guess(model: ModelFunction, x, y) -> tuple[np.ndarray, bool]:
    """Heuristic starting point; the flag marks constant (degenerate) data."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 4:
        raise ValueError("need at least 4 points for an initial guess")
    flat = bool(np.ptp(y) == 0.0)
    name = model.name
    if name in ("damped_sine", "damped_sine_phase", "sine"):
        A = float(np.mean(y))
        if flat:
            f = 1.0 / float(np.ptp(x)) if np.ptp(x) > 0 else 1.0
            guess = {"A": A, "B": 0.0, "gamma": 0.0, "f": f, "phase": 0.0}
        else:
            f = spectral_peak(x, y)
            proj = np.sum((y - A) * np.cos(TWO_PI * f * x))
            B = 0.5 * float(np.ptp(y)) * (1.0 if proj >= 0 else -1.0)
            guess = {"A": A, "B": B, "gamma": _envelope_decay(x, y - A), "f": f, "phase": 0.0}
        return np.array([guess[p] for p in model.params]), flat
    if name == "gaussian_1e2":
        c = float(np.min(y))
        i = int(np.argmax(y))
        x0 = float(x[i])
        wts = np.clip(y - c, 0.0, None)
        if flat or wts.sum() == 0.0:
            return np.array([0.0, x0, float(np.ptp(x)) or 1.0, c]), True
        var = float(np.sum(wts * (x - x0) ** 2) / wts.sum())
        width = 2.0 * math.sqrt(var) if var > 0 else float(np.ptp(x)) / 4.0
        return np.array([float(y[i]) - c, x0, width, c]), flat
    if name == "rabi_line":
        i = int(np.argmax(y))
        tau = model.constants.get("duration", 0.5)
        return np.array([float(y[i]) or 1.0, 0.5 / tau, float(x[i])]), flat
    raise ValueError(f"no initial-guess heuristic for model {name!r}")


def _envelope_decay(x: np.ndarray, y: np.ndarray) -> float:
    order = np.argsort(x)
    xs, ys = x[order], y[order]
    half = xs.size // 2
    if half < 2:
        return 0.0
    a1 = float(np.std(ys[:half]))
    a2 = float(np.std(ys[half:]))
    dt = float(np.mean(xs[half:]) - np.mean(xs[:half]))
    if a1 <= 0.0 or a2 <= 0.0 or dt <= 0.0:
        return 0.0
    return max(0.0, math.log(a1 / a2) / dt)


# ---------------------------------------------------------------------------
# resonance extraction and linear regression


def find_resonance(detunings, populations, duration: float, sigma=None) -> tuple[float, float]:
    """Line center (MHz) of a detuning scan and its 1-sigma uncertainty.

    Fits :func:`rabi_line`; falls back to a Gaussian peak fit if that fails.
    """
    x = np.asarray(detunings, dtype=float)
    y = np.asarray(populations, dtype=float)
    order = np.argsort(x)
    x, y = x[order], y[order]
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=float)[order]
    i = int(np.argmax(y))
    if i == 0 or i == x.size - 1:
        raise ResonanceError(f"maximum at scan edge (detuning {x[i]!r} MHz)")
    res = fit(rabi_line(duration), x, y, sigma)
    if res.converged and x[0] <= res["delta0"] <= x[-1] and res["rabi"] > 0:
        return res["delta0"], res.error("delta0")
    res = fit(gaussian_1e2, x, y, sigma)
    return res["x0"], res.error("x0")


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    slope_error: float
    intercept_error: float


def linear_fit(x, y, sigma=None) -> LinearFit:
    """Weighted straight-line fit y = slope * x + intercept (closed form)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(x) if sigma is None else 1.0 / np.asarray(sigma, dtype=float) ** 2
    S, Sx, Sy = w.sum(), (w * x).sum(), (w * y).sum()
    Sxx, Sxy = (w * x * x).sum(), (w * x * y).sum()
    det = S * Sxx - Sx**2
    if det == 0.0:
        raise ValueError("degenerate abscissa")
    slope = (S * Sxy - Sx * Sy) / det
    intercept = (Sxx * Sy - Sx * Sxy) / det
    var_s, var_b = S / det, Sxx / det
    if sigma is None:
        dof = x.size - 2
        s2 = float(((y - slope * x - intercept) ** 2).sum() / dof) if dof > 0 else math.nan
        var_s, var_b = var_s * s2, var_b * s2
    return LinearFit(float(slope), float(intercept), math.sqrt(var_s), math.sqrt(var_b))
