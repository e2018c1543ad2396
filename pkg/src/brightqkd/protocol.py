"""Slot-synchronized key distribution session between Alice and Bob.

Both parties pick a random quadrature per time slot; the bit value IS the
choice (amplitude = 1, phase = 0). Alice broadcasts her raw photocurrents
on public channel I; Bob keeps a slot only when the matching sum or
difference photocurrent drops below the shot-noise-referenced threshold,
announces kept slot indices on channel II, and both read their key bits
out of their own basis records. Roughly half the slots survive (the
bases agree half the time), and the statistics of the kept slots double
as the channel security monitor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.stats import binomtest

from .eavesdropper import (
    EveRecord,
    Guess,
    TapConfig,
    analyze_record,
    default_delta_threshold,
)
from .gaussian import (
    DX1,
    DX2,
    DY1,
    DY2,
    Basis,
    SourceParams,
    VarianceEstimate,
    build_covariance,
    entanglement_checks,
    optimal_gain,
    squeezing_variance,
)
from .seeding import substream

# Alarm calibration: chosen so an honest session false-alarms well under
# 1% of the time. Overridable per monitor_session call.
MISMATCH_SIGNIFICANCE = 1e-3
EXCESS_NOISE_SIGMA = 5.0
GAIN_DRIFT_SIGMA = 5.0

THRESHOLD_POLICIES = ("midpoint", "calibrated")


class ProtocolError(Exception):
    """Base for session-level failures."""


class SessionRefusedError(ProtocolError):
    """The source cannot support the protocol (no usable entanglement)."""


class CalibrationError(ProtocolError):
    """The public calibration phase produced no usable slots."""


class Alarm(Enum):
    EXCESS_NOISE = "excess_noise"
    MISMATCH_RATE = "mismatch_rate"
    GAIN_DRIFT = "gain_drift"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class SessionConfig:
    """Run parameters for one key-distribution session.

    ``samples_per_slot`` sets the statistical confidence of every per-slot
    variance verdict and is the knob behind the finite-measurement-time
    trade-off, so it is first-class configuration rather than a constant.
    ``rep_rate`` (slots per second) only scales the reported bit rate.
    """

    num_slots: int
    samples_per_slot: int
    threshold_policy: str = "midpoint"
    calibration_slots: int = 0
    rep_rate: float = 1e6
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_slots < 1:
            raise ValueError(f"num_slots must be >= 1, got {self.num_slots}")
        if self.samples_per_slot < 2:
            raise ValueError(
                f"samples_per_slot must be >= 2 (a variance needs two samples), "
                f"got {self.samples_per_slot}"
            )
        if self.threshold_policy not in THRESHOLD_POLICIES:
            raise ValueError(
                f"threshold_policy must be one of {THRESHOLD_POLICIES}, "
                f"got {self.threshold_policy!r}"
            )
        if self.threshold_policy == "calibrated":
            if not 0 < self.calibration_slots < self.num_slots:
                raise ValueError(
                    "calibrated policy needs 0 < calibration_slots < num_slots, "
                    f"got {self.calibration_slots} of {self.num_slots}"
                )
        elif self.calibration_slots != 0:
            raise ValueError("calibration_slots requires the 'calibrated' policy")
        if not (self.rep_rate > 0 and math.isfinite(self.rep_rate)):
            raise ValueError(f"rep_rate must be finite and > 0, got {self.rep_rate}")
        if self.seed < 0:
            raise ValueError(f"seed must be a nonnegative integer, got {self.seed}")


@dataclass
class SlotOutcome:
    """One time slot as both parties record it."""

    slot_index: int
    alice_basis: Basis
    bob_basis: Basis
    alice_current: np.ndarray
    bob_current: np.ndarray
    v_est: VarianceEstimate
    kept: bool
    calibration: bool = False


@dataclass(eq=False)
class SiftedKey:
    """Bit string plus the slot indices each bit came from."""

    bits: np.ndarray  # uint8, values 0/1
    slot_indices: np.ndarray

    def __len__(self) -> int:
        return int(self.bits.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SiftedKey):
            return NotImplemented
        return np.array_equal(self.bits, other.bits) and np.array_equal(
            self.slot_indices, other.slot_indices
        )

    def to_hex(self) -> str:
        """Bits packed MSB-first into bytes, zero-padded at the end."""
        if self.bits.size == 0:
            return ""
        return np.packbits(self.bits.astype(np.uint8)).tobytes().hex()


@dataclass
class MonitorReport:
    """Security health of a completed session.

    ``inferred_eta`` is the channel transmissivity implied by the drop in
    the pooled correlation gain relative to calibration; an eavesdropping
    tap shows up as inferred_eta < 1. When no matched slots survive,
    ``gain_defined`` is False and the gain fields are NaN.
    """

    mismatch_fraction: float
    mean_kept_variance: float
    estimated_gain: float
    inferred_eta: float
    alarms: set[Alarm]
    gain_defined: bool = True


@dataclass
class ChannelLogs:
    """Public classical channels.

    Channel I: Alice's raw per-slot photocurrents (data, never basis
    labels). Channel II: Bob's announcement of kept slot indices. The
    quadrature choices themselves are never put on the wire.
    """

    channel_i: list[tuple[int, np.ndarray]] = field(default_factory=list)
    channel_ii: list[int] = field(default_factory=list)


@dataclass
class SessionResult:
    alice_key: SiftedKey
    bob_key: SiftedKey
    slots: list[SlotOutcome]
    monitor: MonitorReport
    channels: ChannelLogs
    threshold: float
    effective_bit_rate: float = 0.0
    eve_records: list[EveRecord] | None = None


def choose_bases(k: int, seed: int | np.random.Generator) -> list[Basis]:
    """k i.i.d. uniform AQ/PQ choices, deterministic per seed."""
    if k < 0:
        raise ValueError(f"count must be >= 0, got {k}")
    rng = np.random.default_rng(seed)
    draws = rng.integers(0, 2, size=k)
    return [Basis.AQ if d else Basis.PQ for d in draws]


def compute_threshold(
    policy: str,
    *,
    source: SourceParams | None = None,
    calibration_variances: Sequence[float] | None = None,
) -> float:
    """Keep/discard cutoff, midway between the expected correlation
    variance and shot noise.

    The midpoint policy uses the worse of the two advertised squeezing
    variances so both quadrature channels stay usable; the calibrated
    policy replaces the advertised value with the mean variance measured
    over publicly coordinated matched slots.
    """
    if policy == "midpoint":
        if source is None:
            raise ValueError("midpoint policy needs source parameters")
        return (max(source.v_plus_x, source.v_minus_y) + 1.0) / 2.0
    if policy == "calibrated":
        if calibration_variances is None or len(calibration_variances) == 0:
            raise CalibrationError(
                "no matched calibration slots; cannot establish a threshold"
            )
        return (float(np.mean(calibration_variances)) + 1.0) / 2.0
    raise ValueError(f"unknown threshold policy {policy!r}")


def bob_correlation_test(
    slot: SlotOutcome, threshold: float
) -> tuple[bool, VarianceEstimate]:
    """Bob's per-slot correlation check against Alice's broadcast current.

    Amplitude choice tests the sum channel, phase choice the difference
    channel, both at unit gain; the slot passes when the normalized
    variance drops below the threshold.
    """
    sign = "plus" if slot.bob_basis is Basis.AQ else "minus"
    v = squeezing_variance(slot.bob_current, slot.alice_current, 1.0, sign)
    if v.n < 2:
        raise ValueError("correlation test needs at least 2 samples per slot")
    return bool(v.value < threshold), v


def effective_bit_rate(result: SessionResult, config: SessionConfig) -> float:
    """Sifted bits per second: kept_bits / num_slots * rep_rate.

    Bounded by rep_rate/2 in expectation for the honest protocol, the
    factor 1/2 being the price of independent random basis choices.
    """
    return len(result.bob_key) / config.num_slots * config.rep_rate


def _gain_fit(bob: np.ndarray, alice_adj: np.ndarray) -> tuple[float, float, int]:
    """Pooled correlation gain -Cov(b, a)/Var(a) and its OLS standard error."""
    n = bob.size
    a = alice_adj - alice_adj.mean()
    b = bob - bob.mean()
    var_a = float(a @ a) / n
    cov = float(a @ b) / n
    gain = -cov / var_a
    resid = b + gain * a
    resid_var = float(resid @ resid) / n
    se = math.sqrt(resid_var / (n * var_a))
    return gain, se, n


def monitor_session(
    slots: Sequence[SlotOutcome],
    announced: Sequence[int],
    calibration_gain: float,
    reference_variance: float,
    *,
    mismatch_significance: float = MISMATCH_SIGNIFICANCE,
    excess_noise_sigma: float = EXCESS_NOISE_SIGMA,
    gain_drift_sigma: float = GAIN_DRIFT_SIGMA,
) -> MonitorReport:
    """Post-session security checks over the slot transcript.

    Three alarms: the discard fraction significantly exceeding the
    inherent 50% (two-sided binomial test, flagged only on the high
    side), kept-slot variance in excess of the calibration reference,
    and a pooled correlation gain whose implied transmissivity has
    drifted below unity. Gain statistics pool every matched kept slot,
    with the phase-slot currents sign-flipped so both quadrature
    channels share one estimator.
    """
    live = [s for s in slots if not s.calibration]
    alarms: set[Alarm] = set()

    discarded = sum(1 for s in live if not s.kept)
    mismatch_fraction = discarded / len(live) if live else 0.0
    if live and mismatch_fraction > 0.5:
        if binomtest(discarded, len(live), 0.5).pvalue < mismatch_significance:
            alarms.add(Alarm.MISMATCH_RATE)

    kept = [s for s in live if s.kept]
    kept_vals = np.array([s.v_est.value for s in kept], dtype=float)
    mean_kept = float(kept_vals.mean()) if kept_vals.size else math.nan
    if kept_vals.size >= 2:
        se_mean = float(kept_vals.std(ddof=1)) / math.sqrt(kept_vals.size)
        if se_mean > 0 and mean_kept - reference_variance > excess_noise_sigma * se_mean:
            alarms.add(Alarm.EXCESS_NOISE)

    matched_kept = [s for s in kept if s.alice_basis is s.bob_basis]
    pooled_n = sum(s.alice_current.size for s in matched_kept)
    if matched_kept and pooled_n >= 2 and calibration_gain != 0:
        bob = np.concatenate([s.bob_current for s in matched_kept])
        alice_adj = np.concatenate(
            [
                s.alice_current if s.bob_basis is Basis.AQ else -s.alice_current
                for s in matched_kept
            ]
        )
        gain, se_gain, _ = _gain_fit(bob, alice_adj)
        eta_raw = (gain / calibration_gain) ** 2
        se_eta = 2.0 * abs(gain) / calibration_gain**2 * se_gain
        if 1.0 - eta_raw > gain_drift_sigma * se_eta:
            alarms.add(Alarm.GAIN_DRIFT)
        return MonitorReport(
            mismatch_fraction=mismatch_fraction,
            mean_kept_variance=mean_kept,
            estimated_gain=gain,
            inferred_eta=min(max(eta_raw, 0.0), 1.0),
            alarms=alarms,
        )
    return MonitorReport(
        mismatch_fraction=mismatch_fraction,
        mean_kept_variance=mean_kept,
        estimated_gain=math.nan,
        inferred_eta=math.nan,
        alarms=alarms,
        gain_defined=False,
    )


# Slot-chunk sizing: keeps every scratch array around 8 MB so the working
# set stays flat while slots stream through.
_CHUNK_SAMPLES = 1 << 18


def _chunk_slices(k_slots: int, m: int):
    step = max(1, _CHUNK_SAMPLES // m)
    return [slice(lo, min(lo + step, k_slots)) for lo in range(0, k_slots, step)]


def run_session(
    source: SourceParams,
    attack: TapConfig | None,
    config: SessionConfig,
) -> SessionResult:
    """Execute a full session: sampling, measurement, channels, sifting,
    monitoring.

    Slots stream through in chunks, each chunk drawing from its own
    documented substream of the config seed (source samples and channel
    vacuum are indexed by chunk; basis choices and eavesdropper randomness
    have whole-session streams), which keeps runs reproducible and every
    slot statistically independent. Refuses to start unless the source is
    squeezed-state entangled: without both conjugate correlations there
    is nothing to carry bits or expose tampering.
    """
    report = entanglement_checks(source)
    if not report.squeezed_state_entangled:
        raise SessionRefusedError(
            "source is not squeezed-state entangled "
            f"(needs v_plus_x < 1 and v_minus_y < 1, got {source.v_plus_x} "
            f"and {source.v_minus_y}); the correlation test cannot separate "
            "matched from mismatched slots"
        )
    k_slots, m = config.num_slots, config.samples_per_slot
    root = config.seed

    alice_aq = substream(root, "alice-bases").integers(0, 2, size=k_slots).astype(bool)
    bob_aq = substream(root, "bob-bases").integers(0, 2, size=k_slots).astype(bool)
    sign = np.where(bob_aq, 1.0, -1.0)

    eve_aq = None
    tapped = None
    n_tap = 0
    if attack is not None:
        eve_aq = substream(root, "eve-bases").integers(0, 2, size=k_slots).astype(bool)
        n_tap = math.ceil(attack.tap_fraction * m)
        tapped = np.empty((k_slots, n_tap))

    chol = np.linalg.cholesky(build_covariance(source))
    alice_cur = np.empty((k_slots, m))
    bob_cur = np.empty((k_slots, m))
    v_vals = np.empty(k_slots)

    for ci, sl in enumerate(_chunk_slices(k_slots, m)):
        count = sl.stop - sl.start
        z = substream(root, "source-samples", ci).standard_normal((count, m, 4))
        z = z @ chol.T
        x1, y1 = z[..., DX1], z[..., DY1]
        x2, y2 = z[..., DX2], z[..., DY2]
        if attack is not None and n_tap > 0:
            t = math.sqrt(attack.eta)
            r = math.sqrt(1.0 - attack.eta)
            vac = substream(root, "channel-vacuum", ci).standard_normal(
                (2, count, n_tap)
            )
            px, py = x2[:, :n_tap], y2[:, :n_tap]
            tapped[sl] = np.where(
                eve_aq[sl, None], r * px - t * vac[0], r * py - t * vac[1]
            )
            # In-place tap transform of the transmitted prefix.
            px *= t
            px += r * vac[0]
            py *= t
            py += r * vac[1]
        alice_cur[sl] = np.where(alice_aq[sl, None], x1, y1)
        bob_cur[sl] = np.where(bob_aq[sl, None], x2, y2)
        # Bob's per-slot correlation test: sum channel for AQ, difference
        # for PQ, unit gain, vacuum-pair normalization.
        combined = bob_cur[sl] + sign[sl, None] * alice_cur[sl]
        combined -= combined.mean(axis=1, keepdims=True)
        v_vals[sl] = np.einsum("ij,ij->i", combined, combined) / (2.0 * m)
    se_factor = math.sqrt(2.0 / m)

    calibration_mask = np.zeros(k_slots, dtype=bool)
    if config.threshold_policy == "calibrated":
        calibration_mask[: config.calibration_slots] = True
        matched_calib = calibration_mask & (alice_aq == bob_aq)
        threshold = compute_threshold(
            "calibrated", calibration_variances=v_vals[matched_calib]
        )
        calibration_gain, reference_variance = _empirical_calibration(
            bob_cur, alice_cur, sign, v_vals, matched_calib
        )
    else:
        threshold = compute_threshold("midpoint", source=source)
        calibration_gain = 0.5 * (
            optimal_gain(source.v_plus_x, source.v_minus_x)
            + optimal_gain(source.v_minus_y, source.v_plus_y)
        )
        reference_variance = 0.5 * (source.v_plus_x + source.v_minus_y)

    kept = (v_vals < threshold) & ~calibration_mask
    announced = np.flatnonzero(kept)

    eve_records = None
    if attack is not None:
        eve_records = _discriminate(
            eve_aq, tapped, alice_cur, attack, source, root
        )

    basis_a = [Basis.AQ if x else Basis.PQ for x in alice_aq]
    basis_b = [Basis.AQ if x else Basis.PQ for x in bob_aq]
    slots = [
        SlotOutcome(
            slot_index=k,
            alice_basis=basis_a[k],
            bob_basis=basis_b[k],
            alice_current=alice_cur[k],
            bob_current=bob_cur[k],
            v_est=VarianceEstimate(float(v_vals[k]), m, float(v_vals[k]) * se_factor),
            kept=bool(kept[k]),
            calibration=bool(calibration_mask[k]),
        )
        for k in range(k_slots)
    ]

    channels = ChannelLogs(
        channel_i=[(k, alice_cur[k]) for k in range(k_slots)],
        channel_ii=[int(i) for i in announced],
    )
    alice_key = SiftedKey(
        bits=alice_aq[announced].astype(np.uint8), slot_indices=announced.copy()
    )
    bob_key = SiftedKey(
        bits=bob_aq[announced].astype(np.uint8), slot_indices=announced.copy()
    )
    monitor = monitor_session(
        slots, channels.channel_ii, calibration_gain, reference_variance
    )
    result = SessionResult(
        alice_key=alice_key,
        bob_key=bob_key,
        slots=slots,
        monitor=monitor,
        channels=channels,
        threshold=threshold,
        eve_records=eve_records,
    )
    result.effective_bit_rate = effective_bit_rate(result, config)
    return result


def _discriminate(
    eve_aq: np.ndarray,
    tapped: np.ndarray,
    alice_cur: np.ndarray,
    attack: TapConfig,
    source: SourceParams,
    root: int,
) -> list[EveRecord]:
    """Eve's per-slot discrimination against the channel-I broadcast.

    ``tapped`` holds the single quadrature she measured per slot, one row
    each. Chunked equivalent of analyze_record's matched-channel
    statistic: amplitude rows as-is, phase rows negated, then
    delta = [Var(e - g a) - Var(e + g a)] / 2.
    """
    k_slots = eve_aq.size
    n_tap = tapped.shape[1]
    threshold = (
        attack.delta_threshold
        if attack.delta_threshold is not None
        else default_delta_threshold(source, attack.eta, attack.g_e)
    )
    empty = np.empty(0)
    records = []
    for k in range(k_slots):
        basis = Basis.AQ if eve_aq[k] else Basis.PQ
        records.append(
            EveRecord(
                slot_index=k,
                eve_basis=basis,
                tapped_x=tapped[k] if basis is Basis.AQ else empty,
                tapped_y=tapped[k] if basis is Basis.PQ else empty,
            )
        )
    if n_tap < 2:
        guess_rng = substream(root, "eve-guess")
        for record in records:
            analyze_record(record, empty, attack.g_e, threshold, guess_rng)
        return records
    deltas = np.empty(k_slots)
    for sl in _chunk_slices(k_slots, n_tap):
        e = np.where(eve_aq[sl, None], tapped[sl], -tapped[sl])
        a = alice_cur[sl, :n_tap]
        minus = e - attack.g_e * a
        minus -= minus.mean(axis=1, keepdims=True)
        plus = e + attack.g_e * a
        plus -= plus.mean(axis=1, keepdims=True)
        deltas[sl] = (
            np.einsum("ij,ij->i", minus, minus) - np.einsum("ij,ij->i", plus, plus)
        ) / (2.0 * n_tap)
    for record, delta in zip(records, deltas):
        record.delta = float(delta)
        record.guess = Guess.MATCH if delta > threshold else Guess.MISMATCH
        record.basis_guess = (
            record.eve_basis if record.guess is Guess.MATCH else None
        )
    return records


def _empirical_calibration(bob_cur, alice_cur, sign, v_vals, matched_calib):
    """Reference gain and variance from the publicly coordinated slots."""
    idx = np.flatnonzero(matched_calib)
    if idx.size == 0:
        raise CalibrationError("no matched calibration slots")
    bob = bob_cur[idx].ravel()
    alice_adj = (sign[idx, None] * alice_cur[idx]).ravel()
    gain, _, _ = _gain_fit(bob, alice_adj)
    return gain, float(v_vals[idx].mean())


TRANSCRIPT_VERSION = "brightqkd-transcript-v1"
TRANSCRIPT_COLUMNS = (
    "slot_index",
    "alice_basis",
    "bob_basis",
    "v_est",
    "v_std_error",
    "kept",
    "calibration",
)


def transcript_lines(result: SessionResult) -> list[str]:
    """Per-slot transcript as versioned, headered CSV lines."""
    lines = [f"# {TRANSCRIPT_VERSION}", ",".join(TRANSCRIPT_COLUMNS)]
    for s in result.slots:
        lines.append(
            f"{s.slot_index},{s.alice_basis},{s.bob_basis},"
            f"{s.v_est.value!r},{s.v_est.std_error!r},{int(s.kept)},{int(s.calibration)}"
        )
    return lines


def key_export(key: SiftedKey) -> dict:
    """Hex-encoded bit string (MSB-first, zero-padded) plus slot indices."""
    return {
        "bit_length": len(key),
        "bits_hex": key.to_hex(),
        "slot_indices": [int(i) for i in key.slot_indices],
    }


__all__ = [
    "Alarm",
    "CalibrationError",
    "ChannelLogs",
    "MonitorReport",
    "ProtocolError",
    "SessionConfig",
    "SessionRefusedError",
    "SessionResult",
    "SiftedKey",
    "SlotOutcome",
    "bob_correlation_test",
    "choose_bases",
    "compute_threshold",
    "effective_bit_rate",
    "key_export",
    "monitor_session",
    "run_session",
    "transcript_lines",
]
