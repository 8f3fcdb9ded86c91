"""Capacity trace generation and ingestion.

Each device/resource pair draws from its own RNG stream keyed by
(seed, device id, resource kind), so adding a device never perturbs the
traces of the others.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .model import Trace

CONSTANT = "constant"
BERNOULLI = "bernoulli"
FILE = "file"

_KINDS = (CONSTANT, BERNOULLI, FILE)
_RESOURCE_CODES = {"cpu": 0, "bw": 1}


@dataclass(frozen=True)
class ChannelConfig:
    """How one device/resource capacity evolves over time.

    ``level`` is the ON capacity (always the value for constant channels);
    ``p_on`` applies to Bernoulli ON/OFF channels, where OFF means zero.
    """

    kind: str = CONSTANT
    level: float = 0.0
    p_on: float = 1.0
    path: Optional[str] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if self.level < 0:
            raise ValueError("channel level must be >= 0")
        if not 0 <= self.p_on <= 1:
            raise ValueError("p_on must lie in [0, 1]")
        if self.kind == FILE and not self.path:
            raise ValueError("file channel requires a path")

    def mean_capacity(self) -> float:
        """Expected per-slot capacity; defined for constant and Bernoulli kinds."""
        if self.kind == CONSTANT:
            return self.level
        if self.kind == BERNOULLI:
            return self.p_on * self.level
        raise ValueError(f"no closed-form mean for channel kind {self.kind!r}")


def constant_trace(level: float, T: int) -> Trace:
    if level < 0:
        raise ValueError("level must be >= 0")
    return Trace(np.full(T, float(level)))


def sample_bernoulli_trace(cfg: ChannelConfig, T: int, rng: np.random.Generator) -> Trace:
    """Length-T trace, each slot independently ``level`` w.p. ``p_on`` else 0."""
    on = rng.random(T) < cfg.p_on
    return Trace(np.where(on, cfg.level, 0.0))


def load_trace(path: str | Path, T: int) -> Trace:
    """Read one non-negative decimal per line; truncate to the first T slots."""
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                v = float(text)
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: not a number: {text!r}") from None
            if v < 0:
                raise ValueError(f"{path}: line {lineno}: negative capacity {v}")
            values.append(v)
            if len(values) == T:
                break
    if len(values) < T:
        raise ValueError(f"{path}: trace has {len(values)} values, need {T}")
    return Trace(np.array(values))


def trace_rng(seed: int, device_id: int, resource: str) -> np.random.Generator:
    """Independent stream per (run seed, device, resource)."""
    return np.random.default_rng(
        np.random.SeedSequence([int(seed), int(device_id), _RESOURCE_CODES[resource]])
    )


def realize_trace(
    cfg: ChannelConfig, T: int, seed: int, device_id: int, resource: str
) -> Trace:
    """Materialize a channel config into a concrete length-T trace."""
    if cfg.kind == CONSTANT:
        return constant_trace(cfg.level, T)
    if cfg.kind == BERNOULLI:
        rng_seed = cfg.seed if cfg.seed is not None else seed
        return sample_bernoulli_trace(cfg, T, trace_rng(rng_seed, device_id, resource))
    return load_trace(cfg.path, T)
