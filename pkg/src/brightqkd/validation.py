"""Self-checks of every closed-form prediction against Monte Carlo.

Each check pits an analytic formula against an estimate obtained through
an independent route: brute-force sampling through the full beam-splitter
pipeline, pooled covariance regression, or grid minimization. These back
the ``validate`` CLI command and the acceptance suite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gaussian import (
    DX1,
    DX2,
    DY2,
    SourceParams,
    build_covariance,
    apply_beamsplitter,
    min_conditional_variance,
    optimal_gain,
    predicted_bob_sum_variance,
    sample_phase_space,
    squeezing_variance,
)
from .seeding import substream

ETA_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)

# Canonical criteria parameter sets: vacuum boundary, the default
# squeezed pair, and a set that is entangled without an inference paradox.
CRITERIA_CASES = ((1.0, 1.0), (0.5, 2.0), (0.8, 5.0))


@dataclass(frozen=True)
class CheckRow:
    """One validation line: formula value vs independent estimate."""

    name: str
    expected: float
    observed: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return abs(self.observed - self.expected) <= self.tolerance


def sampled_sum_variance(
    source: SourceParams, eta: float, n: int, seed: int | np.random.Generator
) -> tuple[float, float]:
    """Monte Carlo unit-gain sum variance through the tap pipeline.

    Returns (estimate, standard error). Independent route for the
    loss-degraded variance formula: explicit phase-space sampling, the
    beam-splitter transform, then the plain photocurrent estimator.
    """
    rng = np.random.default_rng(seed)
    samples = sample_phase_space(build_covariance(source), n, rng)
    transmitted, _ = apply_beamsplitter(samples[:, (DX2, DY2)], eta, rng)
    est = squeezing_variance(transmitted[:, 0], samples[:, DX1], 1.0, "plus")
    return est.value, est.std_error


def sampled_gain(
    source: SourceParams, eta: float, n: int, seed: int | np.random.Generator
) -> float:
    """Empirical -Cov(bob, alice)/Var(alice) through the tap pipeline."""
    rng = np.random.default_rng(seed)
    samples = sample_phase_space(build_covariance(source), n, rng)
    transmitted, _ = apply_beamsplitter(samples[:, (DX2, DY2)], eta, rng)
    bob = transmitted[:, 0] - transmitted[:, 0].mean()
    alice = samples[:, DX1] - samples[:, DX1].mean()
    return float(-(alice @ bob) / (alice @ alice))


def fit_gain_exponent(etas, gains) -> float:
    """Least-squares exponent p in gain ~ eta**p (eta = 0 points dropped)."""
    etas = np.asarray(etas, dtype=float)
    gains = np.asarray(gains, dtype=float)
    mask = (etas > 0) & (gains > 0)
    if mask.sum() < 2:
        raise ValueError("need at least two positive (eta, gain) points to fit")
    slope, _ = np.polyfit(np.log(etas[mask]), np.log(gains[mask]), 1)
    return float(slope)


def grid_min_conditional_variance(
    v_plus: float, v_minus: float, lo: float = -2.0, hi: float = 2.0, step: float = 1e-3
) -> float:
    """Brute-force minimum of Var(a + g*b) over a gain grid.

    Evaluates the variance directly from the covariance entries on the
    grid, then refines with the exact parabola vertex through the three
    bracketing points; the objective is quadratic in g, so the vertex is
    exact up to rounding. Independent of the closed form it checks.
    """
    va = 0.5 * (v_plus + v_minus)
    cab = 0.5 * (v_plus - v_minus)
    grid = np.arange(lo, hi + step / 2, step)
    values = va + grid * grid * va + 2.0 * grid * cab
    i = int(np.argmin(values))
    if i == 0 or i == grid.size - 1:
        return float(values[i])
    g0, g1, g2 = grid[i - 1 : i + 2]
    y0, y1, y2 = values[i - 1 : i + 2]
    denom = (g0 - g1) * (g0 - g2) * (g1 - g2)
    a = (g2 * (y1 - y0) + g1 * (y0 - y2) + g0 * (y2 - y1)) / denom
    b = (g2**2 * (y0 - y1) + g1**2 * (y2 - y0) + g0**2 * (y1 - y2)) / denom
    g_vertex = -b / (2.0 * a)
    return float(va + g_vertex * g_vertex * va + 2.0 * g_vertex * cab)


def run_formula_checks(
    source: SourceParams, seed: int, samples: int = 10**6
) -> list[CheckRow]:
    """The full validation table: loss formula, gain formula and its
    square-root signature, and the criteria closed forms."""
    rows = []
    gains = []
    for i, eta in enumerate(ETA_GRID):
        expected = predicted_bob_sum_variance(
            source.v_plus_x, source.v_minus_x, eta
        )
        observed, se = sampled_sum_variance(
            source, eta, samples, substream(seed, "validate-sum", i)
        )
        rows.append(
            CheckRow(f"sum_variance[eta={eta}]", expected, observed, 5.0 * se)
        )
        gain = sampled_gain(source, eta, samples, substream(seed, "validate-gain", i))
        gains.append(gain)
        rows.append(
            CheckRow(
                f"optimal_gain[eta={eta}]",
                optimal_gain(source.v_plus_x, source.v_minus_x, eta),
                gain,
                0.01,
            )
        )
    rows.append(
        CheckRow("gain_exponent", 0.5, fit_gain_exponent(ETA_GRID, gains), 0.05)
    )
    for v_plus, v_minus in CRITERIA_CASES:
        closed = min_conditional_variance(v_plus, v_minus)
        rows.append(
            CheckRow(
                f"min_cond_variance[{v_plus},{v_minus}]",
                grid_min_conditional_variance(v_plus, v_minus),
                closed,
                1e-9 * closed,
            )
        )
    return rows


def format_check_table(rows: list[CheckRow]) -> str:
    width = max(len(r.name) for r in rows)
    lines = []
    for r in rows:
        verdict = "PASS" if r.passed else "FAIL"
        lines.append(
            f"{r.name:<{width}}  expected {r.expected: .6f}  "
            f"observed {r.observed: .6f}  tol {r.tolerance:.2e}  {verdict}"
        )
    return "\n".join(lines)
