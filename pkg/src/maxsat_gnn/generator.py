"""Uniform random Max-kSAT instances and reproducible datasets.

Random streams are fully specified so that datasets can be regenerated
byte-for-byte in any language:

* ``splitmix64`` expands a 64-bit seed. The seed of instance ``i`` in a
  dataset with seed ``s`` is output number ``i + 1`` of SplitMix64 started
  from state ``s``.
* Each instance draws from ``xoshiro256**`` (Blackman & Vigna), whose 256-bit
  state is the first four SplitMix64 outputs from the instance seed.
* ``uniform(b)`` draws ``r = next()`` until ``r >= (2**64 - b) % b`` and
  returns ``r % b``.
* For every clause and every slot: draw ``v = 1 + uniform(n)``, redrawing
  while ``v`` already occurs in the clause; then draw ``next() >> 63``, where
  ``1`` means a positive literal.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, asdict
from pathlib import Path

from .cnf import CnfFormula, save_dimacs

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

PRNG_NAME = "xoshiro256**"
SEEDING_NAME = "splitmix64"
MANIFEST_NAME = "manifest.jsonl"
MANIFEST_FIELDS = ("index", "seed", "path", "split")
SPLITS = ("train", "val", "test")


def splitmix64_mix(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def splitmix64_output(state: int, i: int) -> int:
    """The ``i``-th output (1-based) of SplitMix64 started at ``state``."""
    return splitmix64_mix(int(state) + int(i) * GOLDEN_GAMMA)


def derive_seed(seed: int, index: int) -> int:
    return splitmix64_output(seed, index + 1)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256:
    """xoshiro256** 1.0, seeded through SplitMix64."""

    def __init__(self, seed: int):
        self.s = [splitmix64_output(seed, i) for i in range(1, 5)]

    def next(self) -> int:
        s = self.s
        result = (_rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def uniform(self, bound: int) -> int:
        if bound < 1:
            raise ValueError("bound must be positive")
        threshold = ((1 << 64) - bound) % bound
        while True:
            r = self.next()
            if r >= threshold:
                return r % bound

    def coin(self) -> bool:
        return (self.next() >> 63) == 1


@dataclass(frozen=True)
class GenSpec:
    k: int
    n: int
    m: int
    seed: int = 0

    def __post_init__(self):
        if self.k < 1 or self.n < 1 or self.m < 1:
            raise ValueError(f"k, n, m must be positive: {self}")
        if self.k > self.n:
            raise ValueError(f"clause width k={self.k} exceeds n={self.n}")
        if not 0 <= self.seed <= MASK64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def name(self) -> str:
        return f"R{self.k}({self.n},{self.m})"


def generate_instance(spec: GenSpec) -> CnfFormula:
    rng = Xoshiro256(spec.seed)
    clauses = []
    for _ in range(spec.m):
        clause: list[int] = []
        chosen: set[int] = set()
        for _ in range(spec.k):
            v = 1 + rng.uniform(spec.n)
            while v in chosen:
                v = 1 + rng.uniform(spec.n)
            chosen.add(v)
            clause.append(v if rng.coin() else -v)
        clauses.append(tuple(clause))
    return CnfFormula(spec.n, tuple(clauses), k=spec.k)


def split_counts(count: int) -> tuple[int, int, int]:
    """Train/val/test sizes at 8:1:1; val and test get ``count // 10`` each."""
    val = test = count // 10
    return count - val - test, val, test


def split_of(index: int, count: int) -> str:
    train, val, _ = split_counts(count)
    if index < train:
        return "train"
    return "val" if index < train + val else "test"


@dataclass(frozen=True)
class ManifestEntry:
    index: int
    seed: int
    path: str
    split: str


@dataclass
class DatasetManifest:
    """A generated dataset: its spec, and one entry per instance.

    ``root`` is the directory holding the manifest; entry paths are relative
    to it.
    """

    spec: GenSpec
    entries: list[ManifestEntry]
    root: Path

    @property
    def count(self) -> int:
        return len(self.entries)

    @property
    def path(self) -> Path:
        return self.root / MANIFEST_NAME

    def split(self, name: str) -> list[ManifestEntry]:
        if name == "all":
            return list(self.entries)
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return [e for e in self.entries if e.split == name]

    def instance_path(self, entry: ManifestEntry) -> Path:
        return self.root / entry.path

    def header(self) -> dict:
        return {
            "record": "dataset",
            "k": self.spec.k,
            "n": self.spec.n,
            "m": self.spec.m,
            "seed": self.spec.seed,
            "count": self.count,
            "prng": PRNG_NAME,
            "seeding": SEEDING_NAME,
            "instance_seed": "splitmix64 output number index+1 from state=seed",
            "fields": list(MANIFEST_FIELDS),
        }

    def dumps(self) -> str:
        lines = [json.dumps(self.header())]
        lines.extend(json.dumps(asdict(e)) for e in self.entries)
        return "\n".join(lines) + "\n"

    def write(self) -> None:
        self.path.write_text(self.dumps(), encoding="ascii")


def load_manifest(path) -> DatasetManifest:
    """Load a manifest given its file path or the directory holding it."""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    with open(path, encoding="ascii") as f:
        records = [json.loads(line) for line in f if line.strip()]
    if not records or records[0].get("record") != "dataset":
        raise ValueError(f"{path}: not a dataset manifest")
    head = records[0]
    spec = GenSpec(head["k"], head["n"], head["m"], head["seed"])
    entries = [ManifestEntry(r["index"], r["seed"], r["path"], r["split"]) for r in records[1:]]
    if len(entries) != head["count"]:
        raise ValueError(f"{path}: header count {head['count']} but {len(entries)} entries")
    if len({e.path for e in entries}) != len(entries):
        raise ValueError(f"{path}: duplicate instance paths")
    return DatasetManifest(spec, entries, path.parent)


def generate_dataset(spec: GenSpec, count: int, out_dir) -> DatasetManifest:
    """Write ``count`` instances ``inst_00000.cnf ...`` and a manifest into ``out_dir``."""
    if count < 1:
        raise ValueError("count must be positive")
    root = Path(out_dir)
    os.makedirs(root, exist_ok=True)
    entries = []
    for i in range(count):
        seed = derive_seed(spec.seed, i)
        formula = generate_instance(GenSpec(spec.k, spec.n, spec.m, seed))
        name = f"inst_{i:05d}.cnf"
        save_dimacs(formula, root / name)
        entries.append(ManifestEntry(i, seed, name, split_of(i, count)))
    manifest = DatasetManifest(spec, entries, root)
    manifest.write()
    return manifest
