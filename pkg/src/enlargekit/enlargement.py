"""Enlarged-filtration objects on simulated paths.

Knowing X = ∫ φ dW from time 0 turns the driving Brownian motion into a
semimartingale whose finite-variation part is the accumulated
information drift A_t = Σ ρ(X, s_i) Δs_i (left-point sums).  This module
builds A, the compensated processes W̃ = W − A and M̃ = M − ∫ρ d[M,W],
stochastic integrals against a decomposition, and the jump-process
analogue pinned at its terminal value.

X is always realized from the same simulated path: the enlargement is by
a functional of the path itself, never resampled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import TimeGrid
from .integrands import DeterministicIntegrand, residual_variance, running_mean
from .classifier import SEMIMARTINGALE, classify
from .paths import PathEnsemble

# Stieltjes sums beyond this are reported as non-integrable rather than
# silently overflowing.
STIELTJES_GUARD = 1e12


class EnlargementError(ValueError):
    """Inconsistent enlargement setup."""


class RefusedNonSemimartingaleError(RuntimeError):
    """Raised instead of simulating an object that provably does not exist.

    Carries the classifier verdict; simulating past it would only produce
    grid-dependent noise.
    """

    def __init__(self, verdict):
        self.verdict = verdict
        super().__init__(
            f"refused: {verdict.family} classified {verdict.verdict}; "
            "the compensated integral is not a semimartingale under this enlargement"
        )


@dataclass(frozen=True)
class EnlargementSpec:
    """Recipe for enlarging the Brownian filtration by X = ∫ φ dW."""

    phi: DeterministicIntegrand
    grid: TimeGrid
    info_horizon: float | None = None
    sim_horizon: float | None = None
    epsilon_exclusion: float | None = None

    def __post_init__(self):
        info = self.phi.support_end if self.info_horizon is None else float(self.info_horizon)
        object.__setattr__(self, "info_horizon", info)
        eps = self.epsilon_exclusion
        if eps is None:
            eps = (info - self.grid.horizon) if math.isfinite(info) else self.grid.smallest_step
            eps = max(eps, 0.0)
        object.__setattr__(self, "epsilon_exclusion", float(eps))
        sim = self.grid.horizon if self.sim_horizon is None else float(self.sim_horizon)
        object.__setattr__(self, "sim_horizon", sim)
        if math.isfinite(info) and self.sim_horizon > info - self.epsilon_exclusion + 1e-15:
            raise EnlargementError("simulation horizon runs into the information horizon")
        if self.grid.horizon < self.sim_horizon:
            raise EnlargementError("grid does not cover the simulation horizon")

    def drift_weights(self) -> np.ndarray:
        """φ(t_i) Δt_i / σ²_{t_i} at every left node.

        Nodes where φ vanishes contribute no drift, so they never touch
        σ²; anywhere else a vanished residual variance means the grid ran
        into the information horizon.
        """
        t = self.grid.nodes[:-1]
        w = np.asarray(self.phi(t), dtype=float)
        sig2 = np.array([residual_variance(self.phi, float(s)) for s in t])
        live = w != 0.0
        if np.any(sig2[live] <= 0.0):
            raise EnlargementError("residual variance vanishes inside the grid")
        out = np.zeros_like(w)
        out[live] = w[live] * self.grid.steps[live] / sig2[live]
        return out


@dataclass(frozen=True)
class DecomposedProcess:
    """original = martingale_part + fv_part at every node, per path."""

    times: np.ndarray
    original: np.ndarray
    martingale_part: np.ndarray
    fv_part: np.ndarray
    label: str

    def __post_init__(self):
        gap = np.max(np.abs(self.original - (self.martingale_part + self.fv_part)))
        scale = max(float(np.max(np.abs(self.original), initial=0.0)), 1.0)
        if gap > 1e-9 * scale:
            raise EnlargementError(f"decomposition does not add up (gap {gap:g})")

    @property
    def n_paths(self) -> int:
        return self.original.shape[0]

    def additivity_gap(self) -> float:
        return float(np.max(np.abs(self.original - (self.martingale_part + self.fv_part))))

    def fv_total_variation(self) -> np.ndarray:
        """Σ |ΔA| per path; finite discrete variation, reported."""
        return np.sum(np.abs(np.diff(self.fv_part, axis=1)), axis=1)

    def to_csv(self, path, path_indices=None) -> None:
        """Long-format export: path,t,original,martingale_part,fv_part."""
        idx = range(self.n_paths) if path_indices is None else path_indices
        with open(path, "w", encoding="utf-8") as f:
            f.write("path,t,original,martingale_part,fv_part\n")
            for i in idx:
                for j, t in enumerate(self.times):
                    f.write(
                        f"{i},{float(t)!r},{float(self.original[i, j])!r},"
                        f"{float(self.martingale_part[i, j])!r},{float(self.fv_part[i, j])!r}\n"
                    )


def realize_X(spec: EnlargementSpec, values: np.ndarray, times: np.ndarray | None = None) -> np.ndarray:
    """Itô-sum value of ∫ φ dW over the path's full support, per path."""
    times = spec.grid.nodes if times is None else times
    if not math.isfinite(spec.phi.support_end):
        raise EnlargementError("cannot realize X: integrand support is unbounded, path is finite")
    if times[-1] < spec.phi.support_end - spec.epsilon_exclusion - 1e-15:
        raise EnlargementError("path does not cover the integrand support")
    m = running_mean(spec.phi, times, values)
    return m[..., -1]


def drift_compensator(spec: EnlargementSpec, values: np.ndarray, x) -> np.ndarray:
    """A at node k: Σ_{i<k} ρ(x, s_i) Δs_i with ρ = (x − m_s) φ(s)/σ²_s."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    m = running_mean(spec.phi, spec.grid.nodes, values)
    w = spec.drift_weights()
    a = np.zeros_like(values)
    np.cumsum((x[:, None] - m[:, :-1]) * w, axis=1, out=a[:, 1:])
    return a


def compensate_brownian(spec: EnlargementSpec, ensemble: PathEnsemble, x) -> DecomposedProcess:
    """W = W̃ + A with W̃ a Brownian motion for the enlarged information."""
    a = drift_compensator(spec, ensemble.values, x)
    return DecomposedProcess(
        spec.grid.nodes,
        ensemble.values,
        ensemble.values - a,
        a,
        f"brownian|phi={spec.phi.describe()}",
    )


def compensate_martingale(
    spec: EnlargementSpec,
    m_integrand: DeterministicIntegrand,
    ensemble: PathEnsemble,
    x,
    tol: float = 1e-9,
) -> DecomposedProcess:
    """M = m•W compensated by ∫ ρ(X, s) m_s ds.

    Refuses (rather than warns) whenever the integrability classifier
    does not certify that the compensated object exists.
    """
    verdict = classify(m_integrand, spec.info_horizon, tol)
    if verdict.verdict != SEMIMARTINGALE:
        raise RefusedNonSemimartingaleError(verdict)
    values = np.atleast_2d(np.asarray(ensemble.values, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = spec.grid.nodes
    big_m = running_mean(m_integrand, t, values)
    mean = running_mean(spec.phi, t, values)
    w = spec.drift_weights() * np.asarray(m_integrand(t[:-1]), dtype=float)
    fv = np.zeros_like(values)
    np.cumsum((x[:, None] - mean[:, :-1]) * w, axis=1, out=fv[:, 1:])
    return DecomposedProcess(
        t, big_m, big_m - fv, fv, f"martingale|m={m_integrand.describe()}|phi={spec.phi.describe()}"
    )


class NonIntegrableError(RuntimeError):
    """Path-by-path Stieltjes sum failed the existence guard."""


def integrate_under_enlargement(
    H: DeterministicIntegrand,
    decomposition: DecomposedProcess,
) -> DecomposedProcess:
    """H•M = H•M̃ + H•A, left-point sums against both parts."""
    t = decomposition.times
    h = np.asarray(H(t[:-1]), dtype=float)
    d_fv = np.diff(decomposition.fv_part, axis=1)
    stieltjes = np.sum(np.abs(h) * np.abs(d_fv), axis=1)
    if not np.all(np.isfinite(stieltjes)) or np.max(stieltjes) > STIELTJES_GUARD:
        raise NonIntegrableError(
            f"∫|H| |dA| exceeded the guard on {int(np.sum(~(stieltjes <= STIELTJES_GUARD)))} paths"
        )
    mart = np.zeros_like(decomposition.martingale_part)
    np.cumsum(h * np.diff(decomposition.martingale_part, axis=1), axis=1, out=mart[:, 1:])
    fv = np.zeros_like(decomposition.fv_part)
    np.cumsum(h * d_fv, axis=1, out=fv[:, 1:])
    return DecomposedProcess(
        t, mart + fv, mart, fv, f"integral|H={H.describe()}|{decomposition.label}"
    )


def levy_bridge_compensator(
    ensemble: PathEnsemble,
    z_terminal: np.ndarray,
    pin_time: float = 1.0,
) -> DecomposedProcess:
    """Z compensated for knowledge of its value at ``pin_time``:
    fv part = left-point sums of (Z_T − Z_s)/(T − s) ds.

    The drift is only ever evaluated at left nodes, so the grid may end
    exactly at the pinning time but never beyond it.
    """
    t = ensemble.grid.nodes
    if t[-1] > pin_time:
        raise EnlargementError("grid runs past the pinning time")
    z = ensemble.values
    zt = np.atleast_1d(np.asarray(z_terminal, dtype=float))
    w = ensemble.grid.steps / (pin_time - t[:-1])
    fv = np.zeros_like(z)
    np.cumsum((zt[:, None] - z[:, :-1]) * w, axis=1, out=fv[:, 1:])
    return DecomposedProcess(t, z, z - fv, fv, f"levy-bridge|{ensemble.process_label}")


@dataclass(frozen=True)
class SlopeReport:
    s: float
    t: float
    slope: float
    se: float
    expected: float
    n_paths: int

    @property
    def z(self) -> float:
        gap = self.slope - self.expected
        if self.se > 0:
            return gap / self.se
        return 0.0 if abs(gap) < 1e-9 else math.inf


def symmetry_identity_check(
    ensemble: PathEnsemble, s: float, t: float, pin_time: float = 1.0
) -> SlopeReport:
    """Least-squares slope of (W_t − W_s) on (W_T − W_s): should equal
    (t − s)/(T − s) when the path is pinned at T."""
    if t <= s:
        raise ValueError("need s < t")
    ws = ensemble.at_time(s)
    wt = ensemble.at_time(t)
    x = ensemble.values[:, -1] - ws
    y = wt - ws
    return _slope_through_origin(x, y, s, t, (t - s) / (pin_time - s))


def _slope_through_origin(x, y, s, t, expected) -> SlopeReport:
    n = x.size
    sxx = float(np.dot(x, x))
    slope = float(np.dot(x, y)) / sxx
    resid = y - slope * x
    se = math.sqrt(float(np.dot(resid, resid)) / (n - 1) / sxx)
    return SlopeReport(float(s), float(t), slope, se, float(expected), n)


def drift_magnitude_weights(times: np.ndarray, pin_time: float = 1.0) -> np.ndarray:
    """Exact per-interval weights ∫ ds/(T−s) = log((T−t_i)/(T−t_{i+1}));
    the singular kernel is integrated in closed form so that only the
    path factor is sampled."""
    return np.log((pin_time - times[:-1]) / (pin_time - times[1:]))


def abs_drift_integral_paths(
    values: np.ndarray,
    times: np.ndarray,
    x: np.ndarray,
    rung_indices: np.ndarray,
    pin_time: float = 1.0,
) -> np.ndarray:
    """Per-path ∫₀^{t_k} |x − W_s| / (T − s) ds at each rung node t_k.

    The 1/(T−s) kernel is integrated exactly per interval; |x − W| enters
    through the endpoint average, keeping the estimator's discretization
    bias far below its Monte Carlo error near the singular end.
    """
    values = np.atleast_2d(values)
    x = np.atleast_1d(x)
    w = drift_magnitude_weights(times, pin_time)
    dev = np.abs(x[:, None] - values)
    terms = 0.5 * (dev[:, :-1] + dev[:, 1:]) * w
    cum = np.cumsum(terms, axis=1)
    return cum[:, np.asarray(rung_indices, dtype=int) - 1]
