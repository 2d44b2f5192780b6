"""Seeded random streams and the IID, 2I, AV and LHS sampling schemes.

Every sample is produced from uniforms by inverse transform, and the
uniforms are kept on the sample so stratification and antithetic pairing can
be checked after the fact.
"""

from __future__ import annotations

import csv
import hashlib
import zlib
from dataclasses import dataclass

import numpy as np

from .model import MarginalDistribution, TwoStageLP

METHODS = ("IID", "2I", "AV", "LHS")
PAIRED = frozenset({"2I", "AV"})


def purpose_code(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


class RngStream:
    """Counter-based generator keyed by ``(seed, replication, purpose, k)``.

    The key becomes the spawn key of a ``numpy.random.SeedSequence`` feeding a
    Philox generator, so distinct keys give independent streams and the same
    key always gives the same sequence.
    """

    def __init__(self, seed: int, replication: int = 0, purpose: str = "assess", k: int = 0):
        self.seed = int(seed)
        self.replication = int(replication)
        self.purpose = purpose
        self.k = int(k)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.replication, purpose_code(purpose), self.k))
        self._gen = np.random.Generator(np.random.Philox(ss))

    @property
    def stream_id(self):
        return (self.replication, self.purpose, self.k)

    def uniforms(self, shape):
        return self._gen.random(shape)

    def permutation(self, n):
        return self._gen.permutation(n)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, id={self.stream_id})"


@dataclass(frozen=True, eq=False)
class Sample:
    method: str
    points: np.ndarray
    uniforms: np.ndarray
    pairing: np.ndarray | None = None  # (n/2, 2) row indices for AV/2I

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    def fingerprint(self):
        h = hashlib.sha256(self.method.encode())
        h.update(np.ascontiguousarray(self.points).tobytes())
        return h.hexdigest()[:16]

    def to_bytes(self):
        parts = [self.method.encode(), self.points.tobytes(), self.uniforms.tobytes()]
        if self.pairing is not None:
            parts.append(self.pairing.tobytes())
        return b"|".join(parts)

    def write_csv(self, path):
        d = self.d
        pair_of = np.full(self.n, -1)
        if self.pairing is not None:
            for p, (i, j) in enumerate(self.pairing):
                pair_of[i] = pair_of[j] = p
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "row", "pair"] + [f"u{j}" for j in range(d)] + [f"xi{j}" for j in range(d)])
            for i in range(self.n):
                w.writerow([self.method, i, int(pair_of[i])]
                           + [repr(float(v)) for v in self.uniforms[i]]
                           + [repr(float(v)) for v in self.points[i]])


def inverse_cdf(dist: MarginalDistribution, u):
    """Right-continuous generalized inverse; see ``MarginalDistribution.ppf``."""
    out = dist.ppf(u)
    return float(out) if np.ndim(out) == 0 else out


def transform(inst: TwoStageLP, uniforms):
    points = np.empty_like(uniforms)
    for j, m in enumerate(inst.marginals):
        points[:, j] = m.ppf(uniforms[:, j])
    return points


def _consecutive_pairs(n):
    return np.arange(n).reshape(-1, 2)


def _require_even(n, method):
    if n < 2 or n % 2:
        raise ValueError(f"{method} sampling needs an even sample size (got n={n})")


def _require_positive(n):
    if n < 1:
        raise ValueError(f"sample size must be at least 1 (got n={n})")


def sample_iid(n: int, inst: TwoStageLP, rng: RngStream) -> Sample:
    _require_positive(n)
    u = rng.uniforms((n, inst.d))
    return Sample("IID", transform(inst, u), u)


def sample_2i(n: int, inst: TwoStageLP, rng: RngStream) -> Sample:
    # same draws as IID; only the pairing differs
    _require_even(n, "2I")
    u = rng.uniforms((n, inst.d))
    return Sample("2I", transform(inst, u), u, _consecutive_pairs(n))


def sample_av(n: int, inst: TwoStageLP, rng: RngStream) -> Sample:
    _require_even(n, "AV")
    half = rng.uniforms((n // 2, inst.d))
    u = np.empty((n, inst.d))
    u[0::2] = half
    u[1::2] = 1.0 - half
    return Sample("AV", transform(inst, u), u, _consecutive_pairs(n))


def sample_lhs(n: int, inst: TwoStageLP, rng: RngStream) -> Sample:
    _require_positive(n)
    v = rng.uniforms((n, inst.d))
    u = np.empty((n, inst.d))
    for j in range(inst.d):
        u[:, j] = (rng.permutation(n) + v[:, j]) / n
    return Sample("LHS", transform(inst, u), u)


SAMPLERS = {"IID": sample_iid, "2I": sample_2i, "AV": sample_av, "LHS": sample_lhs}


def draw_sample(method: str, n: int, inst: TwoStageLP, rng: RngStream) -> Sample:
    try:
        sampler = SAMPLERS[method]
    except KeyError:
        raise ValueError(f"unknown sampling method {method!r}; choose from {', '.join(METHODS)}") from None
    return sampler(n, inst, rng)


def sample_from_points(inst: TwoStageLP, points, method="IID", uniforms=None) -> Sample:
    """Wrap explicit realizations as a Sample (useful for tests and fixed scenario lists)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[0]
    if points.shape[1] != inst.d:
        raise ValueError(f"points have {points.shape[1]} columns, instance has d_ξ = {inst.d}")
    pairing = None
    if method in PAIRED:
        _require_even(n, method)
        pairing = _consecutive_pairs(n)
    if uniforms is None:
        uniforms = np.full_like(points, np.nan)
    return Sample(method, points, np.asarray(uniforms, dtype=float), pairing)


def lhs_strata(sample: Sample):
    """1-based stratum index of every uniform (rows x dimensions)."""
    return np.floor(sample.uniforms * sample.n).astype(int) + 1
