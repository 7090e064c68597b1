"""Experiment drivers: streamed, memory-bounded runs of the full
pipelines, shared between the command-line tool and the acceptance
suite.

Large ensembles are processed in fixed-size path blocks (per-path random
substreams make the result independent of blocking), and every consumer
is a streaming accumulator, so nothing close to the full
(paths × nodes × processes) tensor ever exists at once.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .enlargement import (
    EnlargementSpec,
    abs_drift_integral_paths,
    compensate_brownian,
    integrate_under_enlargement,
    levy_bridge_compensator,
    realize_X,
)
from .grid import TimeGrid, build_grid
from .integrands import (
    DeterministicIntegrand,
    indicator,
    log_density_identity_residual,
)
from .mgtests import (
    DEFAULT_THRESHOLD,
    BasisFunction,
    IncrementRegressionAccumulator,
    JeulinProbeAccumulator,
    QVAccumulator,
    columns_at,
    default_basis,
    info_minus_state_basis,
    non_integrator_demo,
    probe_log_divergent,
    probe_power_quarter,
)
from .paths import (
    JumpSampler,
    SeedSpec,
    simulate_brownian,
    simulate_compound_poisson,
)

BLOCK = 16384
DEFAULT_PAIRS = ((0.25, 0.5), (0.5, 0.75), (0.25, 0.9))
ABS_DRIFT_CONSTANT = 2.0 * math.sqrt(2.0 / math.pi)  # limit of E∫|drift|, pinned unit bridge


def bridge_grid(
    n_base: int,
    horizon: float = 1.0,
    ratio: float = 0.5,
    depth: int | None = None,
    include: tuple[float, ...] = (),
) -> TimeGrid:
    """Grid for enlargements whose drift blows up at the horizon."""
    return build_grid(
        horizon, n_base, singular_point=horizon, refinement_ratio=ratio, depth=depth,
        include=include,
    )


class _CorrAccumulator:
    """Streaming Pearson correlation."""

    def __init__(self):
        self._s = np.zeros(5)
        self._n = 0

    def update(self, a: np.ndarray, b: np.ndarray) -> None:
        self._s += (a.sum(), b.sum(), (a * b).sum(), (a * a).sum(), (b * b).sum())
        self._n += a.size

    def corr(self) -> float:
        sa, sb, sab, saa, sbb = self._s
        n = self._n
        cov = sab / n - (sa / n) * (sb / n)
        va = saa / n - (sa / n) ** 2
        vb = sbb / n - (sb / n) ** 2
        return float(cov / math.sqrt(va * vb))

    @property
    def n(self) -> int:
        return self._n


class _SlopeAccumulator:
    def __init__(self, s: float, t: float, expected: float):
        self.s, self.t, self.expected = float(s), float(t), float(expected)
        self._sxx = 0.0
        self._sxy = 0.0
        self._syy = 0.0
        self._n = 0

    def update(self, x: np.ndarray, y: np.ndarray) -> None:
        self._sxx += float(np.dot(x, x))
        self._sxy += float(np.dot(x, y))
        self._syy += float(np.dot(y, y))
        self._n += x.size

    def report(self) -> dict:
        slope = self._sxy / self._sxx
        rss = max(self._syy - slope * self._sxy, 0.0)
        se = math.sqrt(rss / (self._n - 1) / self._sxx)
        gap = slope - self.expected
        z = gap / se if se > 0 else (0.0 if abs(gap) < 1e-9 else math.inf)
        return {
            "s": self.s,
            "t": self.t,
            "slope": slope,
            "se": se,
            "expected": self.expected,
            "z": z,
            "n_paths": self._n,
        }


def run_enlargement_demo(
    phi: DeterministicIntegrand,
    n_paths: int,
    n_base: int,
    seed: int,
    pairs: Sequence[tuple[float, float]] = DEFAULT_PAIRS,
    threshold: float = DEFAULT_THRESHOLD,
    with_negative_control: bool = False,
    with_symmetry: bool = False,
    with_drift_ladder: bool = False,
    qv_time: float | None = 0.9,
    block: int = BLOCK,
    n_workers: int | None = None,
) -> dict:
    """Streamed compensation experiment for the enlargement by ∫ φ dW.

    Simulates the driving paths block by block, compensates, and feeds
    the martingale battery plus any requested diagnostics.  With
    ``phi = indicator(T)`` this is the pinned-bridge demonstration; other
    integrands exercise the general information drift.
    """
    observed = {float(u) for p in pairs for u in p}
    if qv_time is not None:
        observed.add(float(qv_time))
    if with_symmetry:
        observed.update((0.25, 0.5))
    grid = bridge_grid(n_base, phi.support_end, include=tuple(sorted(observed)))
    spec = EnlargementSpec(phi, grid)
    seedspec = SeedSpec(seed)
    times = grid.nodes
    pin = phi.support_end

    battery = IncrementRegressionAccumulator(pairs, default_basis())
    negative = (
        IncrementRegressionAccumulator(pairs, default_basis() + info_minus_state_basis())
        if with_negative_control
        else None
    )
    wanted = battery.times_needed
    qv = QVAccumulator(grid.index_of(qv_time), qv_time) if qv_time is not None else None
    corr_comp = _CorrAccumulator()
    corr_raw = _CorrAccumulator()
    corr_time = max(t for _, t in pairs)
    corr_col = grid.index_of(corr_time)

    slopes = []
    if with_symmetry:
        for s, t in ((0.25, 0.5), (0.0, 1.0), (0.0, 0.5)):
            tt = min(t, float(times[-1])) if t >= pin else t
            expected = (tt - s) / (pin - s) if t < pin else 1.0
            slopes.append(_SlopeAccumulator(s, tt, expected))

    ladder = None
    if with_drift_ladder:
        # rung truncations at the geometric refinement nodes: eps_k = h * ratio^k
        h = pin / n_base
        rung_idx = np.nonzero(times >= pin - h - 1e-12)[0]
        ladder = {
            "indices": rung_idx,
            "eps": pin - times[rung_idx],
            "sum": np.zeros(rung_idx.size),
            "sumsq": np.zeros(rung_idx.size),
            "n": 0,
        }

    done = 0
    while done < n_paths:
        take = min(block, n_paths - done)
        ens = simulate_brownian(grid, take, seedspec, n_workers, first_path_index=done)
        w = ens.values
        x = realize_X(spec, w)
        dec = compensate_brownian(spec, ens, x)
        wt = dec.martingale_part

        w_cols = columns_at(w, times, wanted)
        wt_cols = columns_at(wt, times, wanted)
        battery.update(wt_cols, w_cols, x)
        if negative is not None:
            negative.update(w_cols, w_cols, x)
        if qv is not None:
            qv.update(wt)
        corr_comp.update(wt[:, corr_col], x)
        corr_raw.update(w[:, corr_col], x)
        for acc in slopes:
            ws = w_cols.get(acc.s, w[:, grid.index_of(acc.s)])
            y = w[:, grid.index_of(acc.t)] - ws
            acc.update(x - ws, y)
        if ladder is not None:
            vals = abs_drift_integral_paths(w, times, x, ladder["indices"], pin)
            ladder["sum"] += vals.sum(axis=0)
            ladder["sumsq"] += (vals * vals).sum(axis=0)
            ladder["n"] += take
        done += take

    report: dict = {
        "phi": phi.describe(),
        "n_paths": n_paths,
        "n_base_steps": n_base,
        "grid_nodes": grid.n_nodes,
        "seed": seed,
        "threshold": threshold,
        "pairs": [list(p) for p in pairs],
        "battery": battery.report(threshold, seedspec).to_dict(),
        "pinning_corr_compensated": corr_comp.corr(),
        "pinning_corr_raw": corr_raw.corr(),
        "pinning_time": corr_time,
    }
    if negative is not None:
        report["negative_control"] = negative.report(threshold, seedspec).to_dict()
    if qv is not None:
        qr = qv.report(expected=qv_time, rel_tol=0.02)
        report["quadratic_variation"] = {
            "t": qr.t, "expected": qr.expected, "mean": qr.mean,
            "se": qr.se, "rel_error": qr.rel_error, "passed": qr.passed,
        }
    if slopes:
        report["symmetry"] = [acc.report() for acc in slopes]
    if ladder is not None:
        n = ladder["n"]
        mean = ladder["sum"] / n
        var = np.maximum(ladder["sumsq"] / n - mean**2, 0.0) * n / (n - 1)
        se = np.sqrt(var / n)
        rungs = []
        for eps, m, s in zip(ladder["eps"], mean, se):
            bound = ABS_DRIFT_CONSTANT * math.sqrt(eps)
            rungs.append({
                "eps": float(eps),
                "mean": float(m),
                "se": float(s),
                "truncation_bound": bound,
                "target": ABS_DRIFT_CONSTANT,
                "within": bool(abs(m - ABS_DRIFT_CONSTANT) <= 4.0 * s + bound),
            })
        report["abs_drift_ladder"] = {"constant": ABS_DRIFT_CONSTANT, "rungs": rungs}
    return report


def run_bridge_demo(
    n_paths: int,
    n_base: int,
    seed: int,
    pairs: Sequence[tuple[float, float]] = DEFAULT_PAIRS,
    threshold: float = DEFAULT_THRESHOLD,
    block: int = BLOCK,
    n_workers: int | None = None,
) -> dict:
    """Pinned-bridge experiment with the full diagnostic set: battery on
    the compensated motion, failing battery on the raw motion, symmetry
    slopes, the |drift|-integral ladder, quadratic variation."""
    return run_enlargement_demo(
        indicator(1.0),
        n_paths,
        n_base,
        seed,
        pairs,
        threshold,
        with_negative_control=True,
        with_symmetry=True,
        with_drift_ladder=True,
        qv_time=0.9,
        block=block,
        n_workers=n_workers,
    )


def run_section5_integral(
    n_paths: int,
    n_base: int,
    seed: int,
    H: DeterministicIntegrand,
    pairs: Sequence[tuple[float, float]] = ((0.25, 0.5), (0.5, 0.75)),
    threshold: float = DEFAULT_THRESHOLD,
    block: int = BLOCK,
) -> dict:
    """Integrates H against the pinned-bridge decomposition and runs the
    battery on the martingale part of H•W; also reports the worst
    additivity gap across blocks."""
    phi = indicator(1.0)
    grid = bridge_grid(n_base, include=tuple(sorted({float(u) for p in pairs for u in p})))
    spec = EnlargementSpec(phi, grid)
    seedspec = SeedSpec(seed)
    times = grid.nodes
    battery = IncrementRegressionAccumulator(pairs, default_basis())
    wanted = battery.times_needed
    worst_gap = 0.0
    done = 0
    while done < n_paths:
        take = min(block, n_paths - done)
        ens = simulate_brownian(grid, take, seedspec, first_path_index=done)
        x = realize_X(spec, ens.values)
        dec = compensate_brownian(spec, ens, x)
        integ = integrate_under_enlargement(H, dec)
        worst_gap = max(worst_gap, integ.additivity_gap())
        battery.update(
            columns_at(integ.martingale_part, times, wanted),
            columns_at(ens.values, times, wanted),
            x,
        )
        done += take
    return {
        "H": H.describe(),
        "n_paths": n_paths,
        "n_base_steps": n_base,
        "seed": seed,
        "threshold": threshold,
        "additivity_gap": worst_gap,
        "battery": battery.report(threshold, seedspec).to_dict(),
    }


def run_levy_demo(
    rate: float,
    sampler: JumpSampler,
    n_paths: int,
    n_base: int,
    seed: int,
    pairs: Sequence[tuple[float, float]] = ((0.25, 0.5), (0.5, 0.75)),
    threshold: float = DEFAULT_THRESHOLD,
    block: int = BLOCK,
) -> dict:
    """Jump-process analogue of the pinned bridge: compensates a compound
    Poisson path for knowledge of its terminal value and certifies the
    martingale property against {1, Z_s, Z_T}."""
    observed = {float(u) for p in pairs for u in p} | {0.25, 0.5}
    grid = bridge_grid(n_base, include=tuple(sorted(observed)))
    seedspec = SeedSpec(seed)
    times = grid.nodes
    pin = float(times[-1])  # discrete pinning at the last node
    basis = [
        BasisFunction("1", lambda w, x: np.ones_like(w)),
        BasisFunction("Z_s", lambda w, x: w),
        BasisFunction("Z_T", lambda w, x: x),
    ]
    battery = IncrementRegressionAccumulator(pairs, basis)
    wanted = battery.times_needed
    sums = {s: [0.0, 0.0, 0] for s in (0.25, 0.5)}
    done = 0
    while done < n_paths:
        take = min(block, n_paths - done)
        ens = simulate_compound_poisson(grid, rate, sampler, take, seedspec, first_path_index=done)
        z = ens.values
        zt = z[:, -1]
        dec = levy_bridge_compensator(ens, zt, pin_time=pin)
        battery.update(
            columns_at(dec.martingale_part, times, wanted),
            columns_at(z, times, wanted),
            zt,
        )
        for s, acc in sums.items():
            d = zt - z[:, grid.index_of(s)]
            acc[0] += float(np.sum(d))
            acc[1] += float(np.dot(d, d))
            acc[2] += take
        done += take
    terminal_mean = {}
    for s, (sm, sq, n) in sums.items():
        mean = sm / n
        se = math.sqrt(max(sq / n - mean**2, 0.0) / (n - 1))
        expected = rate * sampler.mean * (pin - s)
        terminal_mean[s] = {
            "mean": mean, "se": se, "expected": expected,
            "z": (mean - expected) / se if se > 0 else 0.0,
        }
    return {
        "rate": rate,
        "jumps": sampler.name,
        "n_paths": n_paths,
        "n_base_steps": n_base,
        "seed": seed,
        "threshold": threshold,
        "pin_time": pin,
        "battery": battery.report(threshold, seedspec).to_dict(),
        "terminal_increment_mean": terminal_mean,
    }


def run_lookahead_demo(
    epsilon: float,
    levels: Sequence[int],
    n_paths: int,
    seed: int,
    delta: float = 0.25,
) -> dict:
    """Elementary look-ahead integrands on dyadic grids: sup-norm collapse
    with integral mean pinned at 1."""
    n_max = max(levels)
    grid = build_grid(1.0, 2**n_max)
    ens = simulate_brownian(grid, n_paths, SeedSpec(seed))
    rep = non_integrator_demo(ens.values, grid.nodes, epsilon, levels, delta)
    return {
        "epsilon": epsilon,
        "delta": delta,
        "n_paths": n_paths,
        "seed": seed,
        "levels": [
            {
                "level": l.level,
                "sup_exceed_prob": l.sup_exceed_prob,
                "sup_tail_bound": l.sup_tail_bound,
                "integral_mean": l.integral_mean,
                "integral_se": l.integral_se,
                "integral_second_moment": l.integral_second_moment,
            }
            for l in rep.levels
        ],
    }


# Probe calibration (frozen from a pre-run of the deterministic oracle
# plus the empirical per-path distributions): at rung depth 40 the
# divergent integrand's deterministic mass is 6.0, putting ≥99% of paths
# above the ceiling, while the convergent integrand (mass 4/3) stays
# Cauchy on every path.
PROBE_DEPTH = 40
PROBE_CEILING = 2.5
PROBE_BASE_STEPS = 512


def run_jeulin_probe(
    case: str,
    n_paths: int,
    seed: int,
    depth: int = PROBE_DEPTH,
    ceiling: float = PROBE_CEILING,
    cauchy_tol: float = 1e-3,
    block: int = BLOCK,
) -> dict:
    """Per-path truncated integrals ∫ R_s A_s ds across a geometric
    truncation ladder, for a convergent and a (slowly) divergent A."""
    probes = {"finite": probe_power_quarter(1.0), "divergent": probe_log_divergent(0.75, 1.0)}
    if case not in probes:
        raise ValueError(f"unknown probe case {case!r}; pick from {sorted(probes)}")
    A = probes[case]
    grid = bridge_grid(PROBE_BASE_STEPS, ratio=0.5, depth=depth)
    times = grid.nodes
    rung_idx = np.arange(PROBE_BASE_STEPS - 1, grid.n_nodes)
    acc = JeulinProbeAccumulator(A, times, rung_idx, ceiling, cauchy_tol)
    seedspec = SeedSpec(seed)
    done = 0
    while done < n_paths:
        take = min(block, n_paths - done)
        ens = simulate_brownian(grid, take, seedspec, first_path_index=done)
        acc.update(ens.values, ens.values[:, -1])
        done += take
    rep = acc.report()
    return {
        "case": case,
        "integrand": rep.integrand,
        "declared_divergent": A.diverges,
        "n_paths": rep.n_paths,
        "seed": seed,
        "depth": depth,
        "ceiling": ceiling,
        "cauchy_tol": cauchy_tol,
        "deterministic_integral_deepest": rep.deterministic_integral_deepest,
        "cauchy_fraction": rep.cauchy_fraction,
        "exceed_fraction": rep.exceed_fraction,
    }


def log_density_convergence(
    n_paths: int,
    seed: int,
    base_steps: Sequence[int] = (128, 256, 512),
    x: float = 0.3,
    t: float = 0.5,
) -> dict:
    """RMS of the log-density identity residual across grid refinements;
    halving the step should shrink the RMS by about 1/√2."""
    phi = indicator(1.0)
    rms = []
    for n in base_steps:
        grid = build_grid(t, n)
        ens = simulate_brownian(grid, n_paths, SeedSpec(seed))
        res = log_density_identity_residual(phi, grid.nodes, ens.values, x, t)
        rms.append(float(np.sqrt(np.mean(res**2))))
    ratios = [rms[i + 1] / rms[i] for i in range(len(rms) - 1)]
    return {
        "base_steps": list(base_steps),
        "n_paths": n_paths,
        "seed": seed,
        "x": x,
        "t": t,
        "rms": rms,
        "ratios": ratios,
        "target_ratio": 1.0 / math.sqrt(2.0),
    }
