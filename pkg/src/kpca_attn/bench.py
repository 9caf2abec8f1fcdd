"""Synthetic low-rank-plus-sparse data and the key-corruption benchmark.

Each trial draws clean low-rank keys, adds sparse spikes, and compares how far
plain symmetric softmax attention and RPC-Attention land from the attention
output computed on the clean keys.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .attention import symmetric_attention
from .rpc import PapConfig, rpc_attention

THREADS_ENV = "KPCA_ATTN_THREADS"


def make_rng(seed):
    """Counter-based (Philox) generator for a 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


@dataclass(frozen=True)
class SynthSpec:
    n_rows: int = 32
    n_cols: int = 16
    rank: int = 2
    rho: float = 0.05
    spike_magnitude: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError("n_rows and n_cols must be positive")
        if not 1 <= self.rank <= min(self.n_rows, self.n_cols):
            raise ValueError(f"rank must lie in [1, {min(self.n_rows, self.n_cols)}], got {self.rank}")
        if not 0 <= self.rho < 1:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        if not self.spike_magnitude > 0:
            raise ValueError("spike_magnitude must be positive")

    @property
    def n_spikes(self):
        return int(math.floor(self.rho * self.n_rows * self.n_cols))


def synth_lowrank_sparse(spec, rng=None):
    """Draw ``(L0, S0, M)`` with ``M = L0 + S0``.

    ``L0 = U V^T / sqrt(rank)`` with standard normal factors, so its entries
    have unit variance. ``S0`` has exactly ``floor(rho * n_rows * n_cols)``
    nonzeros at uniformly random positions, each ``+-spike_magnitude``.
    """
    rng = make_rng(spec.seed) if rng is None else rng
    U = rng.standard_normal((spec.n_rows, spec.rank))
    V = rng.standard_normal((spec.n_cols, spec.rank))
    L0 = U @ V.T / math.sqrt(spec.rank)
    S0 = np.zeros(spec.n_rows * spec.n_cols)
    idx = rng.choice(S0.size, size=spec.n_spikes, replace=False)
    S0[idx] = spec.spike_magnitude * rng.choice([-1.0, 1.0], size=idx.size)
    S0 = S0.reshape(spec.n_rows, spec.n_cols)
    return L0, S0, L0 + S0


@dataclass(frozen=True)
class Trial:
    index: int
    seed: int
    dev_softmax: float
    dev_rpc: float
    ratio: float | None
    skipped: bool = False


@dataclass
class BenchReport:
    trials: list
    config: dict

    @property
    def valid(self):
        return [t for t in self.trials if not t.skipped and t.ratio is not None]

    @property
    def median_ratio(self):
        v = self.valid
        return float(np.median([t.ratio for t in v])) if v else None

    @property
    def win_fraction(self):
        v = self.valid
        return sum(t.ratio < 1.0 for t in v) / len(v) if v else None

    @property
    def no_corruption(self):
        return self.config["synth"]["rho"] == 0 or all(t.dev_softmax == 0 for t in self.trials)

    def summary(self):
        return {
            "n_trials": len(self.trials),
            "n_valid": len(self.valid),
            "n_skipped": sum(t.skipped for t in self.trials),
            "median_ratio": self.median_ratio,
            "win_fraction": self.win_fraction,
            "no_corruption": self.no_corruption,
        }

    def to_dict(self):
        return {
            "trials": [asdict(t) for t in self.trials],
            "summary": self.summary(),
            "config": self.config,
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["seed", "dev_softmax", "dev_rpc", "ratio"])
        for t in self.trials:
            ratio = "" if t.ratio is None else format(t.ratio, ".17g")
            w.writerow([t.seed, format(t.dev_softmax, ".17g"), format(t.dev_rpc, ".17g"), ratio])
        return buf.getvalue()

    def histogram_csv(self, bins=20):
        """Ratio histogram as ``bin_lo,bin_hi,count`` rows, for external plotting."""
        ratios = np.array([t.ratio for t in self.valid])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count"])
        if ratios.size:
            counts, edges = np.histogram(ratios, bins=bins, range=(0.0, max(ratios.max(), 1.0)))
            for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
                w.writerow([format(lo, ".17g"), format(hi, ".17g"), int(c)])
        return buf.getvalue()


def run_trial(index, pap_config, synth_spec, scale=None):
    seed = synth_spec.seed ^ index
    K_clean, _, K = synth_lowrank_sparse(synth_spec, make_rng(seed))
    H_ref, _ = symmetric_attention(K_clean, K_clean, scale)
    if not np.any(H_ref):
        return Trial(index, seed, 0.0, 0.0, None, skipped=True)
    if scale is not None and pap_config.scale is None:
        pap_config = PapConfig(pap_config.n_iter, pap_config.lam, pap_config.mu,
                               pap_config.variant, scale)
    H_soft, _ = symmetric_attention(K, K, scale)
    H_rpc = rpc_attention(K, pap_config)
    dev_softmax = float(np.linalg.norm(H_soft - H_ref))
    dev_rpc = float(np.linalg.norm(H_rpc - H_ref))
    ratio = dev_rpc / dev_softmax if dev_softmax > 0 else None
    return Trial(index, seed, dev_softmax, dev_rpc, ratio)


def resolve_threads(threads=None):
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, os.cpu_count() or 1))
    return max(1, int(threads))


def corruption_bench(pap_config, synth_spec, n_trials, scale=None, threads=None):
    """Run `n_trials` independent trials; trial ``i`` is seeded with ``seed ^ i``.

    Results do not depend on `threads` (default: ``$KPCA_ATTN_THREADS`` or the
    CPU count); trials are merged in index order.
    """
    if n_trials < 1:
        raise ValueError(f"n_trials must be at least 1, got {n_trials}")
    threads = resolve_threads(threads)
    indices = range(n_trials)
    if threads == 1:
        trials = [run_trial(i, pap_config, synth_spec, scale) for i in indices]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trials = list(pool.map(lambda i: run_trial(i, pap_config, synth_spec, scale), indices))
    config = {
        "n_trials": n_trials,
        "scale": scale,
        "synth": asdict(synth_spec),
        "pap": {
            "n_iter": pap_config.n_iter,
            "lam": pap_config.lam,
            "mu": pap_config.mu,
            "variant": pap_config.variant.value,
            "scale": pap_config.scale,
        },
    }
    return BenchReport(trials, config)
