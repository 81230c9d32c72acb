"""Seeded i.i.d. sample streams with an exactly specified covariance.

Samples are ``x = Q diag(lambdas)^{1/2} w`` where ``w`` is white (identity
covariance) and drawn from one of three families:

- ``gaussian``: standard normal entries,
- ``rademacher``: independent +/-1 entries (bounded),
- ``uniform_ball``: ``sqrt(d) u`` with ``u`` uniform on the unit sphere.

Streams are generated in chunks; the draws do not depend on the chunk size,
so a stream can be replayed or resumed at any position.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Union

import numpy as np

from .exceptions import GapViolation, ValidationError
from .linalg import qr_orthonormalize

FAMILIES = ("gaussian", "rademacher", "uniform_ball")

SeedLike = Union[int, np.random.SeedSequence, None]

BINARY_MAGIC = b"OJAS"
# magic, u32 d, u32 reserved, 4 pad bytes -> 16-byte header
BINARY_HEADER = struct.Struct("<4sII4x")


def make_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(seed))


def haar_orthogonal(d: int, seed: SeedLike) -> np.ndarray:
    """Haar-distributed d x d orthogonal matrix (Gaussian matrix, then QR)."""
    G = make_rng(seed).standard_normal((d, d))
    return qr_orthonormalize(G)


@dataclass(frozen=True)
class CovSpec:
    """Ground-truth covariance model ``Q diag(lambdas) Q^T`` with target rank ``p``.

    ``q`` marks a gap-free target: when set, the eigengap is required at
    ``q`` instead of at ``p``.
    """

    lambdas: np.ndarray
    p: int
    rotation: np.ndarray | None = None
    family: str = "gaussian"
    q: int | None = None
    _sqrt: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        object.__setattr__(self, "lambdas", lam)
        d = lam.size
        if lam.ndim != 1 or d < 2:
            raise ValidationError("lambdas must be a 1-D sequence of length >= 2")
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise ValidationError("lambdas must be finite and positive")
        if np.any(np.diff(lam) > 0):
            raise ValidationError("lambdas must be nonincreasing")
        if not 1 <= self.p < d:
            raise ValidationError(f"need 1 <= p < d, got p={self.p}, d={d}")
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        target = self.p if self.q is None else self.q
        if not self.p <= target < d:
            raise ValidationError(f"need p <= q < d, got q={self.q}")
        if not lam[target - 1] > lam[target]:
            if self.q is None:
                raise GapViolation(
                    f"zero eigengap: lambda_{self.p} = lambda_{self.p + 1}; "
                    "set a gap-free target q"
                )
            raise GapViolation(f"zero eigengap at q: lambda_{self.q} = lambda_{self.q + 1}")
        if self.rotation is not None:
            Q = np.asarray(self.rotation, dtype=float)
            if Q.shape != (d, d) or np.linalg.norm(Q.T @ Q - np.eye(d)) > 1e-10:
                raise ValidationError("rotation must be a d x d orthogonal matrix")
            object.__setattr__(self, "rotation", Q)
        object.__setattr__(self, "_sqrt", np.sqrt(lam))

    @property
    def d(self) -> int:
        return self.lambdas.size

    @property
    def gamma(self) -> float:
        """Eigengap ``lambda_p - lambda_{p+1}`` (may be zero in gap-free mode)."""
        return float(self.lambdas[self.p - 1] - self.lambdas[self.p])

    @property
    def nu(self) -> float:
        return float(self.lambda_sum(self.p + 1, self.d) / self.lambda_sum(1, self.p))

    @property
    def nu1(self) -> float:
        return max(1.0, self.nu)

    def lambda_sum(self, i1: int, i2: int) -> float:
        """``lambda_{i1} + ... + lambda_{i2}`` with 1-based inclusive indices."""
        return float(np.sum(self.lambdas[i1 - 1 : i2]))

    @property
    def basis(self) -> np.ndarray:
        """Rotation matrix (identity when unrotated)."""
        return np.eye(self.d) if self.rotation is None else self.rotation

    def target_basis(self, k: int | None = None) -> np.ndarray:
        """Orthonormal basis of the top-``k`` eigenspace (default ``p``)."""
        k = self.p if k is None else k
        return self.basis[:, :k].copy()

    @property
    def covariance(self) -> np.ndarray:
        B = self.basis
        return (B * self.lambdas) @ B.T

    def white(self, rng: np.random.Generator, k: int) -> np.ndarray:
        """``k`` draws of the whitened vector, shape (k, d)."""
        d = self.d
        if self.family == "gaussian":
            return rng.standard_normal((k, d))
        if self.family == "rademacher":
            return np.where(rng.random((k, d)) < 0.5, -1.0, 1.0)
        g = rng.standard_normal((k, d))
        return np.sqrt(d) * g / np.linalg.norm(g, axis=1, keepdims=True)

    def rotated(self, white: np.ndarray) -> np.ndarray:
        """Map whitened draws to rotated coordinates ``Y = Lambda^{1/2} w``."""
        return white * self._sqrt

    def draw(self, rng: np.random.Generator, k: int) -> np.ndarray:
        Y = self.rotated(self.white(rng, k))
        return Y if self.rotation is None else Y @ self.rotation.T

    def describe(self) -> dict:
        return {
            "lambdas": self.lambdas.tolist(),
            "p": self.p,
            "q": self.q,
            "family": self.family,
            "rotated": self.rotation is not None,
        }


def make_spec(
    lambdas,
    p: int,
    rotation_seed: SeedLike = None,
    family: str = "gaussian",
    q: int | None = None,
) -> CovSpec:
    """Build a :class:`CovSpec`, drawing a Haar rotation when ``rotation_seed`` is given."""
    lambdas = np.asarray(lambdas, dtype=float)
    rotation = None if rotation_seed is None else haar_orthogonal(lambdas.size, rotation_seed)
    return CovSpec(lambdas, int(p), rotation=rotation, family=family, q=q)


def sample(spec: CovSpec, rng: np.random.Generator) -> np.ndarray:
    """One draw, a vector of length d."""
    return spec.draw(rng, 1)[0]


class SampleStream:
    """Finite, replayable sample source of length ``n``.

    Iterating yields vectors; :meth:`take` returns the next ``k`` samples as a
    (k, d) array, which is what the engine consumes.
    """

    chunk = 4096

    def __init__(self, spec: CovSpec, seed: SeedLike, n: int):
        if n < 0:
            raise ValueError("stream length must be nonnegative")
        self.spec = spec
        self.seed = seed
        self.n = int(n)
        self.d = spec.d
        self.position = 0
        self._rng = make_rng(seed)

    @property
    def remaining(self) -> int:
        return self.n - self.position

    def take(self, k: int) -> np.ndarray:
        k = min(int(k), self.remaining)
        out = self.spec.draw(self._rng, k)
        self.position += k
        return out

    def skip(self, k: int) -> None:
        while k > 0:
            step = min(k, self.chunk)
            if step > self.remaining:
                raise ValueError("cannot skip past the end of the stream")
            self.take(step)
            k -= step

    def __iter__(self) -> Iterator[np.ndarray]:
        while self.remaining > 0:
            yield from self.take(self.chunk)

    def __len__(self) -> int:
        return self.n


def stream(spec: CovSpec, seed: SeedLike, n: int) -> SampleStream:
    return SampleStream(spec, seed, n)


def export_stream(spec: CovSpec, seed: SeedLike, n: int, path, fmt: str = "binary") -> Path:
    """Write ``n`` samples to ``path`` in the harness ingestion format.

    ``binary`` is a 16-byte header (``OJAS``, u32 d, u32 reserved, padding)
    followed by little-endian float64 rows; ``csv`` is headerless.
    """
    path = Path(path)
    src = SampleStream(spec, seed, n)
    if fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(BINARY_HEADER.pack(BINARY_MAGIC, spec.d, 0))
            while src.remaining:
                fh.write(src.take(src.chunk).astype("<f8").tobytes())
    elif fmt == "csv":
        with open(path, "w") as fh:
            while src.remaining:
                for row in src.take(src.chunk):
                    fh.write(",".join(repr(float(v)) for v in row) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return path
