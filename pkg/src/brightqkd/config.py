"""Experiment configuration: JSON parsing, validation, canonical emission.

A config is a single JSON object with ``source`` and ``session`` blocks
plus optional ``attack``, ``sweep``, ``output_path``, and ``seed``.
Unknown keys are rejected so typos fail loudly, and every domain error
names the offending field. ``emit_config``/``parse_config`` round-trip.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .eavesdropper import TapConfig
from .gaussian import SourceParams
from .protocol import SessionConfig


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


@dataclass(frozen=True)
class SweepSpec:
    """One numeric field varied over a value list, e.g. attack.eta."""

    parameter: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class ExperimentConfig:
    source: SourceParams
    session: SessionConfig
    attack: TapConfig | None = None
    sweep: SweepSpec | None = None
    output_path: str | None = None
    seed: int = 0


_SOURCE_KEYS = {"v_plus_x", "v_minus_x", "v_minus_y", "v_plus_y"}
_SESSION_KEYS = {
    "num_slots",
    "samples_per_slot",
    "threshold_policy",
    "calibration_slots",
    "rep_rate",
}
_ATTACK_KEYS = {"eta", "g_e", "tap_fraction", "delta_threshold"}
_TOP_KEYS = {"source", "session", "attack", "sweep", "output_path", "seed"}

# Dataclasses a bare sweep-parameter name is resolved against, in the
# order their prefix sorts in error messages.
_SWEEP_SCOPES = {
    "attack": _ATTACK_KEYS,
    "session": _SESSION_KEYS,
    "source": _SOURCE_KEYS,
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse and fully validate a JSON experiment configuration."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(raw, _TOP_KEYS, "")

    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"seed: must be a nonnegative integer, got {seed!r}")

    source = _parse_source(_require(raw, "source", dict))
    session = _parse_session(_require(raw, "session", dict), seed)

    attack = None
    if raw.get("attack") is not None:
        attack = _parse_attack(_require(raw, "attack", dict))

    sweep = None
    if raw.get("sweep") is not None:
        sweep = _parse_sweep(_require(raw, "sweep", dict))

    output_path = raw.get("output_path")
    if output_path is not None and not isinstance(output_path, str):
        raise ConfigError(f"output_path: must be a string, got {output_path!r}")

    config = ExperimentConfig(
        source=source,
        session=session,
        attack=attack,
        sweep=sweep,
        output_path=output_path,
        seed=seed,
    )
    if sweep is not None:
        # Surfaces bad parameter names or out-of-domain values at parse time.
        derive_sweep_configs(config)
    return config


def emit_config(config: ExperimentConfig) -> str:
    """Canonical JSON for a config; parse_config inverts it exactly."""
    doc = {
        "seed": config.seed,
        "source": {
            "v_plus_x": config.source.v_plus_x,
            "v_minus_x": config.source.v_minus_x,
            "v_minus_y": config.source.v_minus_y,
            "v_plus_y": config.source.v_plus_y,
        },
        "session": {
            "num_slots": config.session.num_slots,
            "samples_per_slot": config.session.samples_per_slot,
            "threshold_policy": config.session.threshold_policy,
            "calibration_slots": config.session.calibration_slots,
            "rep_rate": config.session.rep_rate,
        },
        "attack": None
        if config.attack is None
        else {
            "eta": config.attack.eta,
            "g_e": config.attack.g_e,
            "tap_fraction": config.attack.tap_fraction,
            "delta_threshold": config.attack.delta_threshold,
        },
        "sweep": None
        if config.sweep is None
        else {
            "parameter": config.sweep.parameter,
            "values": list(config.sweep.values),
        },
        "output_path": config.output_path,
    }
    return json.dumps(doc, indent=2) + "\n"


def resolve_sweep_parameter(config: ExperimentConfig, name: str) -> tuple[str, str]:
    """Resolve a sweep parameter to (block, field).

    Accepts dotted names like "attack.eta" or bare field names when they
    are unambiguous across the attack/session/source blocks.
    """
    if "." in name:
        block, _, fieldname = name.partition(".")
        if block not in _SWEEP_SCOPES:
            raise ConfigError(f"sweep.parameter: unknown block {block!r} in {name!r}")
        if fieldname not in _SWEEP_SCOPES[block]:
            raise ConfigError(
                f"sweep.parameter: {block!r} has no field {fieldname!r}"
            )
        return block, fieldname
    hits = [
        (block, name) for block, fields in _SWEEP_SCOPES.items() if name in fields
    ]
    if not hits:
        raise ConfigError(f"sweep.parameter: no numeric field named {name!r}")
    if len(hits) > 1:
        options = ", ".join(f"{b}.{f}" for b, f in hits)
        raise ConfigError(f"sweep.parameter: {name!r} is ambiguous ({options})")
    return hits[0]


_INT_FIELDS = {"num_slots", "samples_per_slot", "calibration_slots"}


def derive_sweep_configs(config: ExperimentConfig) -> list[ExperimentConfig]:
    """One derived config per sweep value, differing only in that field."""
    if config.sweep is None:
        raise ConfigError("sweep: configuration has no sweep section")
    block, fieldname = resolve_sweep_parameter(config, config.sweep.parameter)
    derived = []
    for value in config.sweep.values:
        if fieldname in _INT_FIELDS:
            if value != int(value):
                raise ConfigError(
                    f"sweep.values: {block}.{fieldname} takes integers, got {value!r}"
                )
            value = int(value)
        base = dataclasses.replace(config, sweep=None)
        try:
            if block == "attack":
                if config.attack is None:
                    raise ConfigError(
                        "sweep.parameter: sweeping an attack field requires an "
                        "attack section"
                    )
                derived.append(
                    dataclasses.replace(
                        base,
                        attack=dataclasses.replace(
                            config.attack, **{fieldname: value}
                        ),
                    )
                )
            elif block == "session":
                derived.append(
                    dataclasses.replace(
                        base,
                        session=dataclasses.replace(
                            config.session, **{fieldname: value}
                        ),
                    )
                )
            else:
                derived.append(
                    dataclasses.replace(
                        base,
                        source=dataclasses.replace(
                            config.source, **{fieldname: value}
                        ),
                    )
                )
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(
                f"sweep.values: {value!r} is outside the domain of "
                f"{block}.{fieldname}: {exc}"
            ) from exc
    return derived


def _require(raw: dict, key: str, kind: type):
    if key not in raw:
        raise ConfigError(f"{key}: required section is missing")
    value = raw[key]
    if not isinstance(value, kind):
        raise ConfigError(f"{key}: must be a JSON object, got {value!r}")
    return value


def _reject_unknown(raw: dict, allowed: set[str], prefix: str) -> None:
    unknown = set(raw) - allowed
    if unknown:
        name = sorted(unknown)[0]
        where = f"{prefix}{name}"
        raise ConfigError(f"{where}: unknown key (allowed: {sorted(allowed)})")


def _parse_source(raw: dict) -> SourceParams:
    if "pure_squeezing" in raw:
        _reject_unknown(raw, {"pure_squeezing"}, "source.")
        value = raw["pure_squeezing"]
        _check_number("source.pure_squeezing", value)
        try:
            return SourceParams.pure(float(value))
        except ValueError as exc:
            raise ConfigError(f"source.pure_squeezing: {exc}") from exc
    _reject_unknown(raw, _SOURCE_KEYS, "source.")
    missing = _SOURCE_KEYS - set(raw)
    if missing:
        raise ConfigError(
            f"source.{sorted(missing)[0]}: required key is missing "
            "(or use source.pure_squeezing)"
        )
    for key in _SOURCE_KEYS:
        _check_number(f"source.{key}", raw[key])
    try:
        return SourceParams(
            v_plus_x=float(raw["v_plus_x"]),
            v_minus_x=float(raw["v_minus_x"]),
            v_minus_y=float(raw["v_minus_y"]),
            v_plus_y=float(raw["v_plus_y"]),
        )
    except ValueError as exc:
        raise ConfigError(f"source: {exc}") from exc


def _parse_session(raw: dict, seed: int) -> SessionConfig:
    _reject_unknown(raw, _SESSION_KEYS, "session.")
    for key in ("num_slots", "samples_per_slot"):
        if key not in raw:
            raise ConfigError(f"session.{key}: required key is missing")
        if not isinstance(raw[key], int) or isinstance(raw[key], bool):
            raise ConfigError(f"session.{key}: must be an integer, got {raw[key]!r}")
    policy = raw.get("threshold_policy", "midpoint")
    calibration = raw.get("calibration_slots", 0)
    rep_rate = raw.get("rep_rate", 1e6)
    _check_number("session.rep_rate", rep_rate)
    if not isinstance(calibration, int) or isinstance(calibration, bool):
        raise ConfigError(
            f"session.calibration_slots: must be an integer, got {calibration!r}"
        )
    try:
        return SessionConfig(
            num_slots=raw["num_slots"],
            samples_per_slot=raw["samples_per_slot"],
            threshold_policy=policy,
            calibration_slots=calibration,
            rep_rate=float(rep_rate),
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(f"session: {exc}") from exc


def _parse_attack(raw: dict) -> TapConfig:
    _reject_unknown(raw, _ATTACK_KEYS, "attack.")
    if "eta" not in raw:
        raise ConfigError("attack.eta: required key is missing")
    for key in raw:
        if raw[key] is not None:
            _check_number(f"attack.{key}", raw[key])
    try:
        return TapConfig(
            eta=float(raw["eta"]),
            g_e=float(raw.get("g_e", 1.0)),
            tap_fraction=float(raw.get("tap_fraction", 1.0)),
            delta_threshold=(
                None
                if raw.get("delta_threshold") is None
                else float(raw["delta_threshold"])
            ),
        )
    except ValueError as exc:
        raise ConfigError(f"attack: {exc}") from exc


def _parse_sweep(raw: dict) -> SweepSpec:
    _reject_unknown(raw, {"parameter", "values"}, "sweep.")
    if "parameter" not in raw or "values" not in raw:
        raise ConfigError("sweep: needs both 'parameter' and 'values'")
    if not isinstance(raw["parameter"], str):
        raise ConfigError(f"sweep.parameter: must be a string, got {raw['parameter']!r}")
    values = raw["values"]
    if not isinstance(values, list) or not values:
        raise ConfigError("sweep.values: must be a nonempty list of numbers")
    for v in values:
        _check_number("sweep.values", v)
    return SweepSpec(parameter=raw["parameter"], values=tuple(float(v) for v in values))


def _check_number(name: str, value) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name}: must be a number, got {value!r}")
