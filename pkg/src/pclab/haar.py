"""Haar-distributed sampling on the unitary group and the chunked MC engine.

Randomness is counter-based (Philox) so that every draw is a pure function
of ``(master_seed, stream_index)``.  The Monte Carlo engine assigns one
stream per fixed-size chunk and reduces chunk statistics in chunk order,
which makes every estimate bit-reproducible regardless of how many worker
threads evaluate the chunks.  The worker count comes from the environment
variable ``PCLAB_THREADS`` (default 1) and never changes results.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .linalg import qr_phase_normalized

__all__ = [
    "DEFAULT_CHUNK_SIZE",
    "RngStream",
    "McEstimate",
    "sample_ginibre",
    "sample_haar_unitary",
    "ginibre_stack",
    "haar_unitary_stack",
    "mc_expectation",
    "mc_torus_expectation",
    "worker_count",
    "abs_trace",
    "abs_trace_squared",
    "abs_real_trace",
    "abs_coordinate_sum",
]

DEFAULT_CHUNK_SIZE = 4096

# Per-draw array size cap (complex entries).  Chunks are consumed in fixed
# sub-batches of this many entries so large-n runs stay inside memory; the
# sub-batch boundaries are a pure function of (n, chunk size), so splitting
# never changes the sampled values.
_SUBBATCH_ELEMS = 1 << 21


@dataclass(frozen=True)
class RngStream:
    """Addressable random stream: (master_seed, stream_index) -> bit stream.

    Distinct pairs give independent Philox streams; the same pair always
    reproduces the same draws, on any platform.
    """

    master_seed: int
    stream_index: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array(
            [self.master_seed % (1 << 64), self.stream_index % (1 << 64)],
            dtype=np.uint64,
        )
        return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo mean with its standard error.

    ``stderr`` is the unbiased sample standard deviation (n-1 denominator)
    divided by sqrt(n_samples).
    """

    mean: float | complex
    stderr: float
    n_samples: int
    master_seed: int


def worker_count() -> int:
    raw = os.environ.get("PCLAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _generator_of(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"rng must be RngStream or numpy Generator, got {type(rng)!r}")


def ginibre_stack(n: int, count: int, gen: np.random.Generator) -> np.ndarray:
    """``count`` iid Ginibre matrices, entries (g1 + i g2)/sqrt(2), E|z|^2 = 1."""
    re = gen.standard_normal((count, n, n))
    im = gen.standard_normal((count, n, n))
    return (re + 1j * im) * np.sqrt(0.5)


def sample_ginibre(n: int, rng) -> np.ndarray:
    """One n x n Ginibre matrix from the given stream (pure in the stream)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return ginibre_stack(n, 1, _generator_of(rng))[0]


def haar_unitary_stack(n: int, count: int, gen: np.random.Generator) -> np.ndarray:
    """``count`` iid Haar unitaries: Ginibre followed by phase-normalized QR."""
    z = ginibre_stack(n, count, gen)
    d = np.diagonal(np.linalg.qr(z)[1], axis1=-2, axis2=-1)
    bad = np.any(d == 0, axis=-1)
    if np.any(bad):
        # probability-zero event; retry the offending draws once, then fail
        z = z.copy()
        z[bad] = ginibre_stack(n, int(np.count_nonzero(bad)), gen)
    q, _ = qr_phase_normalized(z)
    return q


def sample_haar_unitary(n: int, rng) -> np.ndarray:
    """One Haar-distributed n x n unitary from the given stream."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return haar_unitary_stack(n, 1, _generator_of(rng))[0]


def _torus_stack(n: int, count: int, gen: np.random.Generator) -> np.ndarray:
    """``count`` points of the n-torus: iid uniform phases, shape (count, n)."""
    return np.exp(2j * np.pi * gen.random((count, n)))


def _chunk_plan(n_samples: int, chunk_size: int):
    sizes = [chunk_size] * (n_samples // chunk_size)
    if n_samples % chunk_size:
        sizes.append(n_samples % chunk_size)
    return sizes


def _mc_run(sampler, elems_per_sample, observable, n_samples, master_seed,
            chunk_size, stream_base) -> McEstimate:
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    sub = max(1, min(chunk_size, _SUBBATCH_ELEMS // max(1, elems_per_sample)))
    sizes = _chunk_plan(n_samples, chunk_size)

    def chunk_stats(idx_size):
        idx, size = idx_size
        gen = RngStream(master_seed, stream_base + idx).generator()
        start = idx * chunk_size
        acc = 0.0 + 0.0j
        acc_sq = 0.0
        all_real = True
        done = 0
        while done < size:
            k = min(sub, size - done)
            values = np.asarray(observable(sampler(k, gen)))
            if values.shape != (k,):
                raise ValueError(
                    f"observable must map a stack of {k} samples to {k} values, "
                    f"got shape {values.shape}"
                )
            finite = np.isfinite(values) if not np.iscomplexobj(values) else (
                np.isfinite(values.real) & np.isfinite(values.imag))
            if not np.all(finite):
                first = int(np.argmin(finite))
                raise ValueError(
                    f"observable returned a non-finite value at sample index {start + done + first}"
                )
            all_real = all_real and not np.iscomplexobj(values)
            acc += complex(values.sum())
            acc_sq += float(np.real(values * np.conj(values)).sum())
            done += k
        return acc, acc_sq, all_real

    jobs = list(enumerate(sizes))
    workers = worker_count()
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(chunk_stats, jobs))
    else:
        results = [chunk_stats(job) for job in jobs]

    # reduce in chunk order: bit-identical no matter how many workers ran
    total = 0.0 + 0.0j
    total_sq = 0.0
    all_real = True
    for acc, acc_sq, real_chunk in results:
        total += acc
        total_sq += acc_sq
        all_real = all_real and real_chunk
    mean = total / n_samples
    var = max((total_sq - n_samples * abs(mean) ** 2) / (n_samples - 1), 0.0)
    stderr = float(np.sqrt(var / n_samples))
    return McEstimate(
        mean=mean.real if all_real else mean,
        stderr=stderr,
        n_samples=n_samples,
        master_seed=master_seed,
    )


def mc_expectation(observable, n: int, n_samples: int, master_seed: int,
                   chunk_size: int = DEFAULT_CHUNK_SIZE,
                   stream_base: int = 0) -> McEstimate:
    """Estimate the Haar expectation of an observable on the unitary group.

    Parameters
    ----------
    observable : callable
        Vectorized map from a stack of unitaries ``(m, n, n)`` to ``(m,)``
        real or complex values.  Must be pure and thread-safe.
    n : int
        Matrix dimension.
    n_samples : int
        Total Haar draws, >= 2.
    master_seed : int
        Seed of the counter-based stream family.
    chunk_size : int
        Samples per stream; part of the determinism contract (changing it
        changes which substream produces which sample).
    stream_base : int
        Offset added to each chunk's stream index, so independent runs under
        one master seed (e.g. rows of a table) use disjoint streams.

    Returns
    -------
    McEstimate
        A pure function of ``(observable, n, n_samples, master_seed,
        chunk_size, stream_base)`` regardless of worker count.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    return _mc_run(
        lambda k, gen: haar_unitary_stack(n, k, gen),
        n * n, observable, n_samples, master_seed, chunk_size, stream_base,
    )


def mc_torus_expectation(observable, n: int, n_samples: int, master_seed: int,
                         chunk_size: int = DEFAULT_CHUNK_SIZE,
                         stream_base: int = 0) -> McEstimate:
    """Estimate the expectation of an observable over iid uniform phases.

    Same determinism contract as :func:`mc_expectation`; the observable maps
    a stack of torus points ``(m, n)`` (unimodular complex entries) to
    ``(m,)`` values.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    return _mc_run(
        lambda k, gen: _torus_stack(n, k, gen),
        n, observable, n_samples, master_seed, chunk_size, stream_base,
    )


def abs_trace(us: np.ndarray) -> np.ndarray:
    """|tr(U)| on a stack of matrices."""
    return np.abs(np.trace(us, axis1=-2, axis2=-1))


def abs_trace_squared(us: np.ndarray) -> np.ndarray:
    t = np.trace(us, axis1=-2, axis2=-1)
    return np.real(t * np.conj(t))


def abs_real_trace(us: np.ndarray) -> np.ndarray:
    return np.abs(np.real(np.trace(us, axis1=-2, axis2=-1)))


def abs_coordinate_sum(zs: np.ndarray) -> np.ndarray:
    """|z_1 + ... + z_n| on a stack of torus points."""
    return np.abs(zs.sum(axis=-1))
