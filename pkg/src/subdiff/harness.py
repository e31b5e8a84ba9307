"""Reproducible random streams, chunked Monte Carlo execution and statistical tests."""
from __future__ import annotations

import hashlib
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Callable, Sequence

import numpy as np
from scipy import stats

SEED_ENV = "SUBDIFF_SEED"
DEFAULT_SEED = 20240601
DEFAULT_CHUNK = 5000


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        if tag < 0:
            raise ValueError("stream tags must be nonnegative")
        return int(tag)
    digest = hashlib.sha256(str(tag).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def resolve_seed(seed: int | None = None) -> int:
    """Explicit seed, else the SUBDIFF_SEED environment variable, else a fixed default."""
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        return int(env)
    return DEFAULT_SEED


@dataclass(frozen=True)
class RngStream:
    """Named random stream.

    The generator is a pure function of (master_seed, stream_id); child streams
    extend the spawn key, so no two distinct ids share state.
    """

    master_seed: int
    stream_id: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "stream_id", tuple(_tag_to_int(t) for t in self.stream_id))

    def child(self, *tags) -> "RngStream":
        return RngStream(self.master_seed, self.stream_id + tuple(_tag_to_int(t) for t in tags))

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(entropy=int(self.master_seed), spawn_key=self.stream_id)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed_sequence()))


def make_stream(seed: int | None = None, *tags) -> RngStream:
    return RngStream(resolve_seed(seed)).child(*tags) if tags else RngStream(resolve_seed(seed))


def as_generator(rng) -> np.random.Generator:
    """Accept a Generator, an RngStream or an integer seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if rng is None or isinstance(rng, (int, np.integer)):
        return make_stream(rng).generator()
    raise TypeError(f"cannot build a generator from {type(rng).__name__}")


def chunk_sizes(n: int, chunk: int = DEFAULT_CHUNK) -> list[int]:
    if n < 0:
        raise ValueError("n must be nonnegative")
    full, rest = divmod(n, chunk)
    return [chunk] * full + ([rest] if rest else [])


def _call(job):
    fn, n, stream = job
    return fn(n, stream.generator())


def run_chunks(fn: Callable, n: int, stream: RngStream, workers: int = 1,
               chunk: int = DEFAULT_CHUNK) -> list:
    """Run fn(n_chunk, generator) over fixed-size chunks.

    Chunk i always draws from stream.child(i) and results come back in chunk
    order, so the output does not depend on the worker count.
    """
    jobs = [(fn, m, stream.child(i)) for i, m in enumerate(chunk_sizes(n, chunk))]
    if workers <= 1 or len(jobs) <= 1:
        return [_call(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, jobs))


def concat_chunks(parts: Sequence) -> object:
    """Concatenate chunk outputs that are arrays or tuples/dicts of arrays."""
    first = parts[0]
    if isinstance(first, dict):
        return {k: np.concatenate([p[k] for p in parts]) for k in first}
    if isinstance(first, tuple):
        return tuple(np.concatenate([p[i] for p in parts]) for i in range(len(first)))
    return np.concatenate(parts)


@dataclass
class TestReport:
    """Outcome of a statistical or numerical check."""

    name: str
    statistic: float
    threshold: float
    rejected: bool
    sample_sizes: tuple = ()
    detail: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    @property
    def passed(self) -> bool:
        return not self.rejected

    def to_row(self) -> dict:
        row = {
            "name": self.name,
            "statistic": float(self.statistic),
            "threshold": float(self.threshold),
            "rejected": bool(self.rejected),
            "sample_sizes": ";".join(str(int(s)) for s in self.sample_sizes),
        }
        for k, v in self.detail.items():
            row[k] = v
        return row


def ks_critical_value(n: int, m: int, level: float) -> float:
    """Asymptotic two-sample KS critical value c(level) * sqrt((n+m)/(n m))."""
    c = np.sqrt(-0.5 * np.log(level / 2.0))
    return float(c * np.sqrt((n + m) / (n * m)))


def ks_two_sample(a, b, level: float = 0.01, name: str = "ks") -> TestReport:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("KS test needs nonempty samples")
    if not (0.0 < level < 1.0):
        raise ValueError("level must lie in (0, 1)")
    d = stats.ks_2samp(a, b).statistic
    thr = ks_critical_value(a.size, b.size, level)
    return TestReport(name, float(d), thr, bool(d > thr), (a.size, b.size), {"level": level})


def mc_mean_ci(samples, level: float = 0.95) -> tuple[float, float]:
    """Sample mean and normal-approximation half width."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two samples")
    z = stats.norm.ppf(0.5 + level / 2.0)
    return float(x.mean()), float(z * x.std(ddof=1) / np.sqrt(x.size))


def mc_mean_se(samples) -> tuple[float, float]:
    x = np.asarray(samples, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size))


def zscore_report(name: str, estimate: float, se: float, target: float, k: float = 3.0,
                  n: int = 0, **detail) -> TestReport:
    z = (estimate - target) / se if se > 0 else (0.0 if estimate == target else np.inf)
    return TestReport(name, abs(float(z)), k, bool(abs(z) > k), (n,) if n else (),
                      {"estimate": float(estimate), "target": float(target), "se": float(se), **detail})


def report_dict(rep: TestReport) -> dict:
    return asdict(rep)
