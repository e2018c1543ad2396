"""Experiment execution: single sessions, sweeps, and result records.

Summary records are JSON-lines friendly: one flat object per run, every
record carrying the seed that reproduces it and the exact parameter
values it ran with. No timestamps or host state, so reruns are
byte-identical.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass

from .config import ExperimentConfig, derive_sweep_configs, emit_config
from .eavesdropper import eve_score
from .protocol import SessionResult, run_session
from .seeding import derive_seed

RECORD_VERSION = "brightqkd-result-v1"


@dataclass
class ResultRecord:
    """Flat summary of one session run."""

    experiment_id: str
    command: str
    seed: int
    params: dict
    swept: dict | None
    kept_fraction: float
    key_bits: int
    bit_rate: float
    mismatch_fraction: float
    mean_kept_variance: float | None
    estimated_gain: float | None
    inferred_eta: float | None
    alarms: list[str]
    eve_accuracy: float | None
    eve_key_fraction_known: float | None

    def to_json(self) -> str:
        doc = {"record": RECORD_VERSION}
        doc.update(dataclasses.asdict(self))
        return json.dumps(doc, sort_keys=False)


def experiment_id(config: ExperimentConfig, seed: int) -> str:
    digest = hashlib.sha256(
        (emit_config(config) + f"|seed={seed}").encode("utf-8")
    ).hexdigest()
    return digest[:12]


def _config_params(config: ExperimentConfig) -> dict:
    doc = json.loads(emit_config(config))
    return {"source": doc["source"], "session": doc["session"], "attack": doc["attack"]}


def _finite_or_none(value: float) -> float | None:
    return None if value is None or not math.isfinite(value) else float(value)


def summarize(
    config: ExperimentConfig,
    result: SessionResult,
    command: str,
    swept: dict | None = None,
) -> ResultRecord:
    monitor = result.monitor
    score = None
    if result.eve_records is not None:
        score = eve_score(result, result.eve_records)
    return ResultRecord(
        experiment_id=experiment_id(config, config.session.seed),
        command=command,
        seed=config.session.seed,
        params=_config_params(config),
        swept=swept,
        kept_fraction=len(result.bob_key) / config.session.num_slots,
        key_bits=len(result.bob_key),
        bit_rate=result.effective_bit_rate,
        mismatch_fraction=monitor.mismatch_fraction,
        mean_kept_variance=_finite_or_none(monitor.mean_kept_variance),
        estimated_gain=_finite_or_none(monitor.estimated_gain),
        inferred_eta=_finite_or_none(monitor.inferred_eta),
        alarms=sorted(str(a) for a in monitor.alarms),
        eve_accuracy=None if score is None else score.discrimination_accuracy,
        eve_key_fraction_known=None if score is None else score.key_fraction_known,
    )


def run_single(config: ExperimentConfig) -> tuple[SessionResult, ResultRecord]:
    """Run the configured session once and summarize it."""
    session = dataclasses.replace(config.session, seed=config.seed)
    bound = dataclasses.replace(config, session=session)
    result = run_session(bound.source, bound.attack, session)
    return result, summarize(bound, result, "simulate")


def run_sweep(
    config: ExperimentConfig,
) -> list[tuple[ExperimentConfig, SessionResult, ResultRecord]]:
    """Run every sweep point in order with per-point derived seeds.

    Each point's seed comes from the (root, "sweep-point", index)
    substream derivation, so any single record can be reproduced by a
    plain simulate run with that seed.
    """
    points = derive_sweep_configs(config)
    assert config.sweep is not None
    out = []
    for i, point in enumerate(points):
        point_seed = _point_seed(config.seed, i)
        session = dataclasses.replace(point.session, seed=point_seed)
        bound = dataclasses.replace(point, session=session, seed=point_seed)
        result = run_session(bound.source, bound.attack, session)
        record = summarize(
            bound,
            result,
            "sweep",
            swept={
                "parameter": config.sweep.parameter,
                "value": config.sweep.values[i],
                "index": i,
            },
        )
        out.append((bound, result, record))
    return out


def _point_seed(root: int, index: int) -> int:
    """Deterministic 63-bit per-point seed from the documented derivation."""
    state = derive_seed(root, "sweep-point", index).generate_state(1, dtype="uint64")
    return int(state[0] >> 1)
