"""Uniform-grid quantisation of parameter vectors with bit accounting.

The grid is anchored at ``v_min`` with spacing ``P`` and
``L = ceil((v_max - v_min) / P)`` points ``v_min + i*P``. Every component is
sent as its nearest grid index, which costs ``log2(L)`` bits.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetTooSmall, DimensionMismatch, InvalidQuantizer
from .linalg import as_parameter_vector

HEADER = struct.Struct("<Iddd")
FRAMING_BYTES = HEADER.size


@dataclass(frozen=True)
class QuantizerConfig:
    v_min: float
    v_max: float
    precision: float

    def __post_init__(self):
        lo, hi, p = float(self.v_min), float(self.v_max), float(self.precision)
        if not all(math.isfinite(x) for x in (lo, hi, p)):
            raise InvalidQuantizer("quantizer bounds and precision must be finite")
        if not hi > lo:
            raise InvalidQuantizer(f"v_max ({hi}) must exceed v_min ({lo})")
        if not 0 < p <= hi - lo:
            raise InvalidQuantizer(f"precision must lie in (0, v_max - v_min], got {p}")
        object.__setattr__(self, "v_min", lo)
        object.__setattr__(self, "v_max", hi)
        object.__setattr__(self, "precision", p)

    @property
    def levels(self) -> int:
        return math.ceil((self.v_max - self.v_min) / self.precision)

    @property
    def grid_max(self) -> float:
        return self.v_min + (self.levels - 1) * self.precision

    @classmethod
    def from_bits(cls, v_min: float, v_max: float, bits: float) -> "QuantizerConfig":
        """Finest grid over the range that costs at most ``bits`` per value."""
        if not bits > 0:
            raise BudgetTooSmall(f"a budget of {bits} bits per value leaves fewer than two levels")
        levels = math.floor(2.0**bits)
        p = (v_max - v_min) / levels
        # float division can push ceil() one level over the budget
        while math.ceil((v_max - v_min) / p) > levels:
            p = math.nextafter(p, math.inf)
        return cls(v_min, v_max, p)


def bits_for_precision(cfg: QuantizerConfig) -> float:
    return math.log2(cfg.levels)


def quantize_array(values, cfg: QuantizerConfig) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-level indices for an array of any shape.

    Exact midpoints go to the lower index; out-of-range values clamp to the
    end points. Returns ``(levels, clamped_mask)``.
    """
    x = (np.asarray(values, dtype=float) - cfg.v_min) / cfg.precision
    lower = np.floor(x)
    idx = lower + ((x - lower) > 0.5)
    clamped = (idx < 0) | (idx > cfg.levels - 1)
    idx = np.clip(idx, 0, cfg.levels - 1)
    return idx.astype(np.int64), clamped


def dequantize_array(levels, cfg: QuantizerConfig) -> np.ndarray:
    return cfg.v_min + np.asarray(levels, dtype=float) * cfg.precision


@dataclass(frozen=True, eq=False)
class QuantizedMessage:
    levels: np.ndarray
    config: QuantizerConfig
    clamp_count: int = 0
    bits_per_value: float = field(init=False)
    total_bits: float = field(init=False)

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=np.int64).reshape(-1)
        if lv.size and (lv.min() < 0 or lv.max() > self.config.levels - 1):
            raise ValueError("level index outside the quantisation grid")
        lv.setflags(write=False)
        object.__setattr__(self, "levels", lv)
        b = bits_for_precision(self.config)
        object.__setattr__(self, "bits_per_value", b)
        object.__setattr__(self, "total_bits", lv.size * b)

    @property
    def dim(self) -> int:
        return self.levels.size

    def __eq__(self, other):
        if not isinstance(other, QuantizedMessage):
            return NotImplemented
        return self.config == other.config and np.array_equal(self.levels, other.levels)

    def to_bytes(self) -> bytes:
        """Canonical layout: u32 dim, f64 v_min, f64 v_max, f64 P, then u32 levels (all LE)."""
        cfg = self.config
        head = HEADER.pack(self.dim, cfg.v_min, cfg.v_max, cfg.precision)
        return head + self.levels.astype("<u4").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "QuantizedMessage":
        if len(data) < FRAMING_BYTES:
            raise ValueError("truncated message header")
        dim, lo, hi, p = HEADER.unpack_from(data)
        body = data[FRAMING_BYTES:]
        if len(body) != 4 * dim:
            raise ValueError(f"expected {4 * dim} payload bytes, got {len(body)}")
        return cls(np.frombuffer(body, dtype="<u4").astype(np.int64), QuantizerConfig(lo, hi, p))

    def to_packed_bytes(self) -> bytes:
        """Same header, then levels bit-packed at ``ceil(bits_per_value)`` bits each (MSB first)."""
        width = math.ceil(self.bits_per_value)
        cfg = self.config
        head = HEADER.pack(self.dim, cfg.v_min, cfg.v_max, cfg.precision)
        if width == 0:
            return head
        bits = ((self.levels[:, None] >> np.arange(width - 1, -1, -1)) & 1).astype(np.uint8)
        return head + np.packbits(bits.reshape(-1)).tobytes()

    @classmethod
    def from_packed_bytes(cls, data: bytes) -> "QuantizedMessage":
        dim, lo, hi, p = HEADER.unpack_from(data)
        cfg = QuantizerConfig(lo, hi, p)
        width = math.ceil(math.log2(cfg.levels))
        if width == 0:
            return cls(np.zeros(dim, dtype=np.int64), cfg)
        bits = np.unpackbits(np.frombuffer(data[FRAMING_BYTES:], dtype=np.uint8))[: dim * width]
        weights = 1 << np.arange(width - 1, -1, -1)
        return cls(bits.reshape(dim, width).astype(np.int64) @ weights, cfg)


def quantize(v, cfg: QuantizerConfig) -> QuantizedMessage:
    v = as_parameter_vector(v)
    levels, clamped = quantize_array(v, cfg)
    return QuantizedMessage(levels, cfg, clamp_count=int(clamped.sum()))


def dequantize(msg: QuantizedMessage) -> np.ndarray:
    return dequantize_array(msg.levels, msg.config)


def grid_error_bound(dim: int, cfg: QuantizerConfig) -> float:
    """Worst-case squared l2 rounding error of a ``dim``-vector inside the grid span."""
    if dim < 1:
        raise DimensionMismatch("dim must be positive")
    return dim * (cfg.precision / 2.0) ** 2
