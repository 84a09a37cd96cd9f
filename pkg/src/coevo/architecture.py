"""Bitstring genomes for (feature subset, hidden topology) and the complexity objective.

Layout of a genome with the default :class:`GenomeLayout`::

    [ 68 feature-mask bits | layer 1: 8 size bits, 1 activation bit | layer 2: ... ]

Size bits are read MSB first and clamped to ``max_size``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import EncodingError, RangeError

ACTIVATIONS = ("tansig", "logsig")
SIZE_BITS = 8


@dataclass(frozen=True)
class GenomeLayout:
    n_features: int = 68
    n_layers: int = 2
    max_size: int = 128

    @property
    def layer_bits(self) -> int:
        return SIZE_BITS + 1

    @property
    def n_bits(self) -> int:
        return self.n_features + self.n_layers * self.layer_bits


DEFAULT_LAYOUT = GenomeLayout()


@dataclass(frozen=True)
class DecodedArchitecture:
    selected_features: tuple[int, ...]
    layers: tuple[tuple[int, str], ...]
    layout: GenomeLayout = DEFAULT_LAYOUT

    def __post_init__(self):
        object.__setattr__(self, "selected_features", tuple(sorted(int(i) for i in self.selected_features)))
        object.__setattr__(self, "layers", tuple((int(s), str(f)) for s, f in self.layers))

    @property
    def active_layers(self) -> tuple[tuple[int, str], ...]:
        """Hidden layers with at least one unit, in order."""
        return tuple((s, f) for s, f in self.layers if s > 0)

    @property
    def n_inputs(self) -> int:
        return len(self.selected_features)

    def validate(self) -> None:
        lay = self.layout
        if not self.selected_features:
            raise RangeError("architecture needs at least one feature")
        if min(self.selected_features) < 0 or max(self.selected_features) >= lay.n_features:
            raise RangeError(f"feature index outside [0, {lay.n_features})")
        if len(self.layers) != lay.n_layers:
            raise RangeError(f"expected {lay.n_layers} layer tuples, got {len(self.layers)}")
        for s, f in self.layers:
            if not 0 <= s <= lay.max_size:
                raise RangeError(f"layer size {s} outside [0, {lay.max_size}]")
            if f not in ACTIVATIONS:
                raise RangeError(f"unknown activation {f!r}")
        if not self.active_layers:
            raise RangeError("architecture needs at least one non-empty hidden layer")

    def to_json(self, complexity_mode: str = "literal") -> dict:
        return {
            "features": list(self.selected_features),
            "layers": [list(t) for t in self.layers],
            "complexity": complexity(self, complexity_mode),
        }


def genome_hash(genome: np.ndarray) -> int:
    """Process-independent 64-bit hash of a genome's bits."""
    bits = np.asarray(genome, dtype=np.uint8)
    digest = hashlib.blake2b(np.packbits(bits).tobytes() + len(bits).to_bytes(4, "little"), digest_size=8)
    return int.from_bytes(digest.digest(), "little")


def genome_to_hex(genome: np.ndarray) -> str:
    return np.packbits(np.asarray(genome, dtype=np.uint8)).tobytes().hex()


def genome_from_hex(text: str, n_bits: int = DEFAULT_LAYOUT.n_bits) -> np.ndarray:
    try:
        raw = np.frombuffer(bytes.fromhex(text), dtype=np.uint8)
    except ValueError as exc:
        raise EncodingError(f"bad genome hex {text!r}: {exc}") from None
    if len(raw) != (n_bits + 7) // 8:
        raise EncodingError(f"hex genome has {len(raw) * 8} bits, expected {n_bits}")
    return np.unpackbits(raw)[:n_bits].copy()


def decode(genome: np.ndarray, layout: GenomeLayout = DEFAULT_LAYOUT) -> DecodedArchitecture:
    """Decode and repair: never returns an empty feature set or an all-empty topology."""
    bits = np.asarray(genome, dtype=np.uint8)
    if bits.ndim != 1 or len(bits) != layout.n_bits:
        raise EncodingError(f"genome length {bits.shape} != {layout.n_bits}")
    features = np.flatnonzero(bits[: layout.n_features]).tolist()
    if not features:
        features = [genome_hash(bits) % layout.n_features]
    weights = 1 << np.arange(SIZE_BITS - 1, -1, -1)
    layers = []
    for k in range(layout.n_layers):
        chunk = bits[layout.n_features + k * layout.layer_bits:][: layout.layer_bits]
        raw = int(chunk[:SIZE_BITS] @ weights)
        layers.append([min(raw, layout.max_size), ACTIVATIONS[int(chunk[SIZE_BITS])]])
    if all(s == 0 for s, _ in layers):
        layers[0][0] = 1
    return DecodedArchitecture(tuple(features), tuple(map(tuple, layers)), layout)


def encode(arch: DecodedArchitecture) -> np.ndarray:
    arch.validate()
    lay = arch.layout
    bits = np.zeros(lay.n_bits, dtype=np.uint8)
    bits[list(arch.selected_features)] = 1
    for k, (size, act) in enumerate(arch.layers):
        start = lay.n_features + k * lay.layer_bits
        bits[start:start + SIZE_BITS] = [(size >> (SIZE_BITS - 1 - j)) & 1 for j in range(SIZE_BITS)]
        bits[start + SIZE_BITS] = ACTIVATIONS.index(act)
    return bits


def complexity(arch: DecodedArchitecture, mode: str = "literal") -> float:
    """Topological-resource fraction of an architecture.

    ``literal``: mean of the feature fraction, the active-layer fraction and
    the summed layer-size fraction (reaches 4/3 with every resource in use).
    ``normalized``: same, with the size term averaged over layers, so the
    result lies in [0, 1].
    """
    lay = arch.layout
    feat = len(arch.selected_features) / lay.n_features
    active = sum(1 for s, _ in arch.layers if s != 0) / lay.n_layers
    size = sum(s for s, _ in arch.layers) / lay.max_size
    if mode == "normalized":
        size /= lay.n_layers
    elif mode != "literal":
        raise ValueError(f"unknown complexity mode {mode!r}")
    return (feat + active + size) / 3.0


def random_genome(rng: np.random.Generator, layout: GenomeLayout = DEFAULT_LAYOUT) -> np.ndarray:
    return rng.integers(0, 2, size=layout.n_bits, dtype=np.uint8)


def mutate(genome: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Independent bit-flip mutation."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError("mutation rate must lie in [0, 1]")
    flips = rng.random(len(genome)) < rate
    return np.where(flips, 1 - genome, genome).astype(np.uint8)


def architecture_json(arch: DecodedArchitecture, mode: str = "literal") -> str:
    return json.dumps(arch.to_json(mode), sort_keys=True)
