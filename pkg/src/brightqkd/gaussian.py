"""Gaussian source model, phase-space sampling, and photocurrent statistics.

The bright beam pair is reduced to its zero-mean quadrature fluctuations
(dx1, dy1, dx2, dy2); the classical carrier drops out of every statistic
the protocol uses. All variances are in shot-noise units (vacuum = 1,
matching the X = a + a^dagger convention). Because the state is Gaussian
with a nonnegative Wigner function and each party reads a single
quadrature per beam per slot, jointly sampling all four fluctuations and
revealing only the measured ones reproduces the exact measurement
statistics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

# Column order of every (n, 4) fluctuation array.
DX1, DY1, DX2, DY2 = range(4)
QUADRATURE_COLUMNS = ("dx1", "dy1", "dx2", "dy2")

_HEISENBERG_TOL = 1e-12


class Basis(Enum):
    """Measurement choice for one beam in one time slot."""

    AQ = "AQ"  # amplitude quadrature, key bit 1
    PQ = "PQ"  # phase quadrature, key bit 0

    @property
    def bit(self) -> int:
        return 1 if self is Basis.AQ else 0

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class SourceParams:
    """Normalized joint-quadrature variances of the two-beam source.

    ``v_plus_*`` is the variance of the sum photocurrent (dA1 + dA2),
    ``v_minus_*`` of the difference, each normalized so that an
    uncorrelated vacuum pair gives exactly 1. The protocol needs the
    amplitude sum and the phase difference squeezed simultaneously
    (``v_plus_x < 1`` and ``v_minus_y < 1``): amplitudes anti-correlated,
    phases correlated.
    """

    v_plus_x: float
    v_minus_x: float
    v_minus_y: float
    v_plus_y: float

    def __post_init__(self) -> None:
        for name in ("v_plus_x", "v_minus_x", "v_minus_y", "v_plus_y"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ValueError(f"{name} must be a number, got {v!r}")
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v!r}")
        sum_product = self.v_plus_x * self.v_plus_y
        diff_product = self.v_minus_x * self.v_minus_y
        if sum_product < 1.0 - _HEISENBERG_TOL:
            raise ValueError(
                f"sum-mode uncertainty product v_plus_x * v_plus_y = "
                f"{sum_product:.6g} violates the Heisenberg bound (>= 1)"
            )
        if diff_product < 1.0 - _HEISENBERG_TOL:
            raise ValueError(
                f"difference-mode uncertainty product v_minus_x * v_minus_y = "
                f"{diff_product:.6g} violates the Heisenberg bound (>= 1)"
            )

    @classmethod
    def pure(cls, v_plus: float) -> "SourceParams":
        """Symmetric minimum-uncertainty source with squeezing ``v_plus``.

        The conjugate variances saturate the uncertainty bound
        (v_minus = 1/v_plus) in both the sum and difference modes.
        """
        if not (isinstance(v_plus, (int, float)) and math.isfinite(v_plus) and v_plus > 0):
            raise ValueError(f"squeezing parameter must be finite and > 0, got {v_plus!r}")
        return cls(v_plus, 1.0 / v_plus, v_plus, 1.0 / v_plus)


@dataclass(frozen=True)
class VarianceEstimate:
    """A variance together with its sampling provenance.

    ``std_error`` is the large-n Gaussian approximation value*sqrt(2/n);
    it is 0 only for analytically exact values.
    """

    value: float
    n: int
    std_error: float

    @classmethod
    def from_samples(cls, value: float, n: int) -> "VarianceEstimate":
        return cls(value, n, value * math.sqrt(2.0 / n))


@dataclass(frozen=True)
class CriteriaReport:
    """Entanglement verdicts for a source parameter set."""

    nonseparable: bool
    squeezed_state_entangled: bool
    epr_paradox: bool
    epr_product: float
    sum_criterion_value: float


def build_covariance(params: SourceParams) -> np.ndarray:
    """4x4 covariance of (dx1, dy1, dx2, dy2) in shot-noise units.

    Follows from the sum/difference mode decomposition
    dA1 = (s + d)/sqrt(2), dA2 = (s - d)/sqrt(2) with Var(s) = v_plus and
    Var(d) = v_minus: each beam's quadrature variance is the arithmetic
    mean of the joint variances, the cross-beam covariance is half their
    difference, and amplitude/phase blocks are uncorrelated.
    """
    vx = 0.5 * (params.v_plus_x + params.v_minus_x)
    cx = 0.5 * (params.v_plus_x - params.v_minus_x)
    vy = 0.5 * (params.v_plus_y + params.v_minus_y)
    cy = 0.5 * (params.v_plus_y - params.v_minus_y)
    return np.array(
        [
            [vx, 0.0, cx, 0.0],
            [0.0, vy, 0.0, cy],
            [cx, 0.0, vx, 0.0],
            [0.0, cy, 0.0, vy],
        ]
    )


def sample_phase_space(
    cov: np.ndarray, n: int, seed: int | np.random.Generator
) -> np.ndarray:
    """Draw n i.i.d. zero-mean fluctuation vectors with covariance ``cov``.

    Returns an (n, 4) array in QUADRATURE_COLUMNS order, bitwise
    reproducible for a fixed integer seed. Raises
    ``numpy.linalg.LinAlgError`` if the matrix fails Cholesky
    factorization (not positive definite).
    """
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (4, 4):
        raise ValueError(f"covariance must be 4x4, got shape {cov.shape}")
    if n < 0:
        raise ValueError(f"sample count must be >= 0, got {n}")
    chol = np.linalg.cholesky(cov)
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, 4)) @ chol.T


def apply_beamsplitter(
    samples: np.ndarray, eta: float, seed: int | np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Mix an (n, 2) quadrature-pair stream with fresh vacuum on a tap.

        transmitted = sqrt(eta) * input + sqrt(1 - eta) * vacuum
        tapped      = sqrt(1 - eta) * input - sqrt(eta) * vacuum

    The same vacuum mode feeds both output ports, so the transform is
    orthogonal: per quadrature, Var(transmitted) + Var(tapped) =
    Var(input) + 1, and the two ports are uncorrelated for vacuum input.
    """
    samples = np.asarray(samples, dtype=float)
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"transmissivity eta must be in [0, 1], got {eta}")
    rng = np.random.default_rng(seed)
    vacuum = rng.standard_normal(samples.shape)
    t = math.sqrt(eta)
    r = math.sqrt(1.0 - eta)
    return t * samples + r * vacuum, r * samples - t * vacuum


def _combined_variance(a, b, g: float, sign: str) -> tuple[float, int]:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or b.ndim != 1:
        raise ValueError("photocurrent inputs must be one-dimensional")
    if a.size == 0:
        raise ValueError("photocurrent inputs must be nonempty")
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if sign == "plus":
        combined = a + g * b
    elif sign == "minus":
        combined = a - g * b
    else:
        raise ValueError(f"sign must be 'plus' or 'minus', got {sign!r}")
    return float(np.var(combined)), int(a.size)


def squeezing_variance(a, b, g: float = 1.0, sign: str = "plus") -> VarianceEstimate:
    """Gain-weighted sum/difference photocurrent variance, quantum-limit normalized.

    The normalization is the variance of the same combination for two
    independent unit vacuums, 1 + g**2, so a value below 1 certifies a
    nonclassical correlation.
    """
    var, n = _combined_variance(a, b, g, sign)
    return VarianceEstimate.from_samples(var / (1.0 + g * g), n)


def conditional_variance(a, b, g: float, sign: str = "plus") -> VarianceEstimate:
    """Inference error Var(a +/- g*b) normalized to a single beam's shot noise.

    Identical combination to :func:`squeezing_variance` but divided by 1
    instead of 1 + g**2, so conditional = (1 + g**2) * squeezing at any g.
    """
    var, n = _combined_variance(a, b, g, sign)
    return VarianceEstimate.from_samples(var, n)


def optimal_gain(v_plus: float, v_minus: float, eta: float = 1.0) -> float:
    """Gain on the broadcast current that minimizes the summed-current variance.

    For a lossless channel this is (v_minus - v_plus)/(v_minus + v_plus);
    a tap of transmissivity eta in front of the measuring party scales it
    by sqrt(eta), which is what makes the gain a channel monitor.
    """
    _validate_variance_pair(v_plus, v_minus)
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"transmissivity eta must be in [0, 1], got {eta}")
    return math.sqrt(eta) * (v_minus - v_plus) / (v_minus + v_plus)


def predicted_bob_sum_variance(v_plus: float, v_minus: float, eta: float) -> float:
    """Unit-gain squeezed-channel variance seen after a tap of transmissivity eta.

    (1+sqrt(eta))^2/4 * v_plus + (1-sqrt(eta))^2/4 * v_minus + (1-eta)/2.
    At eta = 1 this collapses to v_plus; any tapping folds in the noisy
    anti-squeezed variance, which is what the receiver's excess-noise
    monitor keys on. By the x/y symmetry of the model the same expression
    with (v_minus_y, v_plus_y) predicts the phase difference channel.
    """
    _validate_variance_pair(v_plus, v_minus)
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"transmissivity eta must be in [0, 1], got {eta}")
    rt = math.sqrt(eta)
    return (
        0.25 * (1.0 + rt) ** 2 * v_plus
        + 0.25 * (1.0 - rt) ** 2 * v_minus
        + 0.5 * (1.0 - eta)
    )


def min_conditional_variance(v_plus: float, v_minus: float) -> float:
    """Conditional variance at the optimal gain: the harmonic mean of the
    joint variances, 2*v_plus*v_minus/(v_plus + v_minus)."""
    _validate_variance_pair(v_plus, v_minus)
    return 2.0 * v_plus * v_minus / (v_plus + v_minus)


def entanglement_checks(params: SourceParams) -> CriteriaReport:
    """Separability, squeezed-state entanglement, and inference-paradox tests.

    Non-separability uses the sum criterion v_plus_x + v_minus_y < 2.
    Squeezed-state entanglement requires both conjugate joint variances
    below 1 individually, which implies non-separability. The paradox
    check multiplies the optimal-gain conditional variances of the two
    conjugate inference channels and compares against 1.
    """
    sum_criterion = params.v_plus_x + params.v_minus_y
    v_cond_x = min_conditional_variance(params.v_plus_x, params.v_minus_x)
    v_cond_y = min_conditional_variance(params.v_minus_y, params.v_plus_y)
    epr_product = v_cond_x * v_cond_y
    return CriteriaReport(
        nonseparable=sum_criterion < 2.0,
        squeezed_state_entangled=(params.v_plus_x < 1.0 and params.v_minus_y < 1.0),
        epr_paradox=epr_product < 1.0,
        epr_product=epr_product,
        sum_criterion_value=sum_criterion,
    )


def _validate_variance_pair(v_plus: float, v_minus: float) -> None:
    if not (v_plus > 0 and math.isfinite(v_plus)):
        raise ValueError(f"v_plus must be finite and > 0, got {v_plus!r}")
    if not (v_minus > 0 and math.isfinite(v_minus)):
        raise ValueError(f"v_minus must be finite and > 0, got {v_minus!r}")
