"""
Seeded random-number streams.

A SeededRng is a (seed, stream) pair. Equal pairs give identical draws;
different stream ids give independent generators (numpy SeedSequence
spawn keys), so parallel tasks stay reproducible whatever the schedule.
Stream entries may be integers or short text labels ("toy-kl", "pilot");
labels map to a stable 64-bit id.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def stream_id(label: int | str) -> int:
    if isinstance(label, str):
        return int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "little")
    return int(label) & _MASK64


@dataclass(frozen=True)
class SeededRng:
    seed: int
    stream: tuple[int, ...] = (0,)

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)
        stream = self.stream if isinstance(self.stream, tuple) else (self.stream,)
        object.__setattr__(self, "stream", tuple(stream_id(s) for s in stream))

    def child(self, *labels: int | str) -> "SeededRng":
        """Sub-stream keyed by this stream plus `labels`."""
        return SeededRng(self.seed, self.stream + tuple(labels))

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream)
        return np.random.Generator(np.random.PCG64(seq))

    def integer_seed(self) -> int:
        """A 32-bit seed for APIs that only take integers (scipy qmc)."""
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream)
        return int(seq.generate_state(1, dtype=np.uint32)[0])
