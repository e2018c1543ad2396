"""Beam-splitter tap attack and the plus/minus-channel discriminator.

Eve inserts a tap of transmissivity eta close to the sender (the channel
is otherwise lossless), measures one quadrature of her tapped beam per
slot, and correlates it against the photocurrents the sender broadcasts
publicly. The difference between her minus- and plus-channel variances
tells her, statistically, whether she and the sender measured the same
quadrature. Tapping only a prefix of each slot trades information for
stealth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

from .gaussian import Basis, SourceParams, apply_beamsplitter

if TYPE_CHECKING:
    from .protocol import SessionResult


class Guess(Enum):
    """Eve's per-slot verdict on whether her quadrature matched the sender's."""

    MATCH = "match"
    MISMATCH = "mismatch"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class TapConfig:
    """Attack parameters.

    ``tap_fraction`` is the fraction of each slot's samples Eve routes
    through her beam splitter; the rest pass untouched. A ``None``
    discriminator threshold means "use the default for the source under
    attack" (half the predicted matched-slot separation).
    """

    eta: float
    g_e: float = 1.0
    tap_fraction: float = 1.0
    delta_threshold: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must be in (0, 1], got {self.eta}")
        if not (self.g_e > 0 and math.isfinite(self.g_e)):
            raise ValueError(f"g_e must be finite and > 0, got {self.g_e}")
        if not 0.0 <= self.tap_fraction <= 1.0:
            raise ValueError(f"tap_fraction must be in [0, 1], got {self.tap_fraction}")
        if self.delta_threshold is not None and not self.delta_threshold >= 0.0:
            raise ValueError(
                f"delta_threshold must be >= 0, got {self.delta_threshold}"
            )


@dataclass
class EveRecord:
    """What Eve holds for one slot: her tapped samples and her inference.

    Exactly one of ``tapped_x``/``tapped_y`` is populated (she measures a
    single quadrature); ``delta`` is NaN when she tapped too few samples
    to discriminate. ``basis_guess`` is set only when she claims a match.
    """

    slot_index: int
    eve_basis: Basis
    tapped_x: np.ndarray = field(default_factory=lambda: np.empty(0))
    tapped_y: np.ndarray = field(default_factory=lambda: np.empty(0))
    delta: float = math.nan
    guess: Guess | None = None
    basis_guess: Basis | None = None

    @property
    def tapped_count(self) -> int:
        return self.tapped_x.size + self.tapped_y.size


@dataclass(frozen=True)
class EveScore:
    discrimination_accuracy: float
    key_bits_known: int
    key_fraction_known: float


def default_delta_threshold(source: SourceParams, eta: float, g_e: float = 1.0) -> float:
    """Half the predicted matched-slot discriminator separation.

    Uses the covariance-algebra prediction for the amplitude channel,
    g_e * sqrt(1 - eta) * (v_minus_x - v_plus_x); by source symmetry the
    oriented phase-channel statistic has the same mean.
    """
    return 0.5 * g_e * math.sqrt(1.0 - eta) * (source.v_minus_x - source.v_plus_x)


def delta_predictions(
    v_plus: float, v_minus: float, eta: float, g_e: float = 1.0
) -> tuple[float, float]:
    """Analytic candidates for the matched-slot mean of the discriminator.

    Returns ``(difference_form, sum_form)``. The difference form,
    g_e*sqrt(1-eta)*(v_minus - v_plus), follows from direct covariance
    algebra of the tap transform; the sum form replaces the difference
    with v_minus + v_plus and coincides with it in the strong-squeezing
    limit v_plus -> 0. Simulations report both; only the difference form
    is asserted against data.
    """
    scale = g_e * math.sqrt(1.0 - eta)
    return scale * (v_minus - v_plus), scale * (v_minus + v_plus)


def eve_intercept(
    samples: np.ndarray,
    config: TapConfig,
    seed: int | np.random.Generator,
    slot_index: int = 0,
) -> tuple[np.ndarray, EveRecord]:
    """Tap the first ceil(tap_fraction * M) samples of one slot's beam.

    ``samples`` is the (M, 2) quadrature-pair stream headed to the
    receiver. The tapped prefix is beam-split at transmissivity eta; the
    remainder passes untouched. Eve measures one uniformly chosen
    quadrature of her tapped beam and records it. Returns the stream the
    receiver sees and Eve's partial record (discrimination happens later,
    against the public broadcast).
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != 2:
        raise ValueError(f"expected an (M, 2) quadrature stream, got {samples.shape}")
    rng = np.random.default_rng(seed)
    eve_basis = Basis.AQ if rng.integers(0, 2) else Basis.PQ
    n_tap = math.ceil(config.tap_fraction * samples.shape[0])
    if n_tap == 0:
        return samples, EveRecord(slot_index, eve_basis)
    transmitted, tapped = apply_beamsplitter(samples[:n_tap], config.eta, rng)
    receiver_stream = np.concatenate([transmitted, samples[n_tap:]], axis=0)
    record = EveRecord(slot_index, eve_basis)
    if eve_basis is Basis.AQ:
        record.tapped_x = tapped[:, 0]
    else:
        record.tapped_y = tapped[:, 1]
    return receiver_stream, record


def delta_discriminator(
    eve_samples, alice_samples, g_e: float, delta_threshold: float = 0.0
) -> tuple[float, Guess]:
    """Minus-channel minus plus-channel variance against the public stream.

    Both channels are normalized by the gain-free vacuum-pair reference
    (denominator 2). A significant positive difference means the tapped
    signal carries correlations with the broadcast, i.e. the two parties
    measured the same quadrature.
    """
    eve_samples = np.asarray(eve_samples, dtype=float)
    alice_samples = np.asarray(alice_samples, dtype=float)
    if eve_samples.shape != alice_samples.shape or eve_samples.ndim != 1:
        raise ValueError("eve and broadcast streams must be equal-length 1-D arrays")
    if eve_samples.size < 2:
        raise ValueError("discrimination needs at least 2 aligned samples")
    v_minus = float(np.var(eve_samples - g_e * alice_samples)) / 2.0
    v_plus = float(np.var(eve_samples + g_e * alice_samples)) / 2.0
    delta = v_minus - v_plus
    guess = Guess.MATCH if delta > delta_threshold else Guess.MISMATCH
    return delta, guess


def analyze_record(
    record: EveRecord,
    alice_current: np.ndarray,
    g_e: float,
    delta_threshold: float,
    guess_rng: np.random.Generator,
) -> EveRecord:
    """Run Eve's discrimination for one slot, in place.

    Her phase-quadrature samples enter negated: the source correlates
    phases but anti-correlates amplitudes, so the sign flip maps both
    cases onto the same positive-delta signature. With fewer than 2
    tapped samples she falls back to fair coin flips for both the
    match/mismatch verdict and, on a claimed match, the basis.
    """
    if record.tapped_count < 2:
        record.delta = math.nan
        record.guess = Guess.MATCH if guess_rng.integers(0, 2) else Guess.MISMATCH
        if record.guess is Guess.MATCH:
            record.basis_guess = Basis.AQ if guess_rng.integers(0, 2) else Basis.PQ
        return record
    if record.eve_basis is Basis.AQ:
        oriented = record.tapped_x
    else:
        oriented = -record.tapped_y
    aligned = np.asarray(alice_current, dtype=float)[: oriented.size]
    record.delta, record.guess = delta_discriminator(
        oriented, aligned, g_e, delta_threshold
    )
    record.basis_guess = record.eve_basis if record.guess is Guess.MATCH else None
    return record


def eve_score(session: "SessionResult", eve_records: list[EveRecord]) -> EveScore:
    """Score Eve's discrimination against the session's ground truth.

    Accuracy counts slots where her match/mismatch verdict agrees with
    whether she and the sender actually chose the same quadrature. A key
    bit counts as known only when the slot was announced, she claimed a
    match, and her claimed basis is the slot's true basis.
    """
    by_slot = {slot.slot_index: slot for slot in session.slots}
    correct = 0
    judged = 0
    for record in eve_records:
        if record.guess is None:
            continue
        truth = (
            Guess.MATCH
            if by_slot[record.slot_index].alice_basis is record.eve_basis
            else Guess.MISMATCH
        )
        judged += 1
        if record.guess is truth:
            correct += 1
    announced = set(session.channels.channel_ii)
    known = sum(
        1
        for record in eve_records
        if record.slot_index in announced
        and record.guess is Guess.MATCH
        and record.basis_guess is by_slot[record.slot_index].alice_basis
    )
    accuracy = correct / judged if judged else 0.5
    fraction = known / len(announced) if announced else 0.0
    return EveScore(accuracy, known, fraction)


EVE_TRANSCRIPT_VERSION = "brightqkd-eve-transcript-v1"
EVE_TRANSCRIPT_COLUMNS = (
    "slot_index",
    "eve_basis",
    "tapped_samples",
    "delta",
    "guess",
    "basis_guess",
)


def eve_transcript_lines(eve_records: list[EveRecord]) -> list[str]:
    """Eve's transcript in the session-transcript CSV idiom plus a delta column."""
    lines = [f"# {EVE_TRANSCRIPT_VERSION}", ",".join(EVE_TRANSCRIPT_COLUMNS)]
    for r in eve_records:
        lines.append(
            f"{r.slot_index},{r.eve_basis},{r.tapped_count},{r.delta!r},"
            f"{'' if r.guess is None else r.guess},"
            f"{'' if r.basis_guess is None else r.basis_guess}"
        )
    return lines
