"""Per-group precoder structure ``B = U_B Lambda_B V_B``.

A :class:`StreamPartition` splits the ``N_t`` equivalent subchannels into
``S`` groups of ``N_s``; group ``s`` occupies subchannels
``ell[s*N_s:(s+1)*N_s]`` (zero-based). ``Lambda_B`` and ``V_B`` are
assembled from the per-group ``Lambda_s`` and ``V_s`` on those indices, so
``V_B`` is block sparse and streams of different groups never mix.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import expm

__all__ = [
    "StreamPartition",
    "Precoder",
    "pair_subchannels",
    "assemble_precoder",
    "retract_unitary",
    "skew_direction",
    "precoder_to_dict",
    "precoder_from_dict",
]


@dataclass(frozen=True)
class StreamPartition:
    """Permutation ``ell`` of the subchannels and the group size ``N_s``."""

    ell: tuple
    N_s: int

    def __post_init__(self):
        ell = tuple(int(i) for i in self.ell)
        n_t = len(ell)
        if sorted(ell) != list(range(n_t)):
            raise ValueError(f"ell must be a permutation of 0..{n_t - 1}, got {ell}")
        if self.N_s < 1 or n_t % self.N_s:
            raise ValueError(f"group size {self.N_s} does not divide N_t = {n_t}")
        object.__setattr__(self, "ell", ell)

    @property
    def n_t(self) -> int:
        return len(self.ell)

    @property
    def S(self) -> int:
        return self.n_t // self.N_s

    def group_indices(self, s: int) -> np.ndarray:
        return np.asarray(self.ell[s * self.N_s:(s + 1) * self.N_s])

    @classmethod
    def identity(cls, n_t: int, N_s: int) -> "StreamPartition":
        return cls(tuple(range(n_t)), N_s)


def pair_subchannels(xi_diag, N_s: int) -> StreamPartition:
    """Pair strong with weak subchannels.

    Each group takes the ``ceil(N_s/2)`` strongest and ``floor(N_s/2)``
    weakest subchannels still unassigned.

    Examples
    --------
    >>> pair_subchannels([4, 3, 2, 1], 2).ell
    (0, 3, 1, 2)
    """
    xi = np.asarray(xi_diag, dtype=float)
    n_t = xi.size
    if N_s < 1 or n_t % N_s:
        raise ValueError(f"group size {N_s} does not divide N_t = {n_t}")
    order = list(np.argsort(-xi, kind="stable"))
    n_strong = (N_s + 1) // 2
    n_weak = N_s // 2
    ell = []
    while order:
        strong, order = order[:n_strong], order[n_strong:]
        weak = order[len(order) - n_weak:] if n_weak else []
        order = order[:len(order) - n_weak]
        ell.extend(strong)
        ell.extend(weak[::-1])
    return StreamPartition(tuple(ell), N_s)


@dataclass(frozen=True)
class Precoder:
    """Structured precoder.

    Attributes
    ----------
    lam : tuple of ndarray
        Diagonals of ``Lambda_s``, one nonnegative vector per group.
    V : tuple of ndarray
        Unitary ``N_s x N_s`` mixing matrices.
    partition : StreamPartition
    P : float
        Power budget; ``sum_s ||lam[s]||^2 == P``.
    U_B : ndarray or None
        Left unitary factor. ``None`` means "aligned with the eigenbasis of
        the current equivalent channel", which is how the optimizer and the
        per-group fixed point treat it until the final step fixes it.
    """

    lam: tuple
    V: tuple
    partition: StreamPartition
    P: float
    U_B: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        lam = tuple(np.asarray(l, dtype=float).ravel() for l in self.lam)
        V = tuple(np.atleast_2d(np.asarray(v, dtype=complex)) for v in self.V)
        p = self.partition
        if len(lam) != p.S or len(V) != p.S:
            raise ValueError(f"need {p.S} groups, got {len(lam)} / {len(V)}")
        for l, v in zip(lam, V):
            if l.shape != (p.N_s,) or v.shape != (p.N_s, p.N_s):
                raise ValueError("group shapes do not match N_s")
            if np.any(l < 0):
                raise ValueError("Lambda_s entries must be nonnegative")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "V", V)
        if self.U_B is not None:
            object.__setattr__(self, "U_B", np.asarray(self.U_B, dtype=complex))

    @property
    def n_t(self) -> int:
        return self.partition.n_t

    @property
    def power(self) -> float:
        return float(sum(np.sum(l**2) for l in self.lam))

    def lambda_B(self) -> np.ndarray:
        out = np.zeros(self.n_t)
        for s, l in enumerate(self.lam):
            out[self.partition.group_indices(s)] = l
        return out

    def V_B(self) -> np.ndarray:
        out = np.zeros((self.n_t, self.n_t), dtype=complex)
        for s, v in enumerate(self.V):
            idx = self.partition.group_indices(s)
            out[np.ix_(idx, idx)] = v
        return out

    def with_U_B(self, U_B) -> "Precoder":
        return replace(self, U_B=U_B)

    def aligned(self) -> "Precoder":
        return replace(self, U_B=None)

    def normalized(self) -> "Precoder":
        """Rescale the power allocation to meet the budget exactly."""
        tot = self.power
        if tot == 0:
            raise ValueError("cannot normalize an all-zero power allocation")
        f = np.sqrt(self.P / tot)
        return replace(self, lam=tuple(l * f for l in self.lam))

    @classmethod
    def uniform(cls, partition: StreamPartition, P: float, V=None, U_B=None):
        """Equal power on every subchannel; identity mixing unless given."""
        a = np.sqrt(P / partition.n_t)
        lam = [np.full(partition.N_s, a) for _ in range(partition.S)]
        if V is None:
            V = [np.eye(partition.N_s) for _ in range(partition.S)]
        return cls(tuple(lam), tuple(V), partition, float(P), U_B)


def assemble_precoder(p: Precoder) -> np.ndarray:
    """``B = U_B Lambda_B V_B``; requires ``U_B`` to be set."""
    if p.U_B is None:
        raise ValueError("precoder has no left factor U_B yet")
    return (p.U_B * p.lambda_B()) @ p.V_B()


def skew_direction(V: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Skew-Hermitian ascent direction ``V^H G - G^H V`` on the unitary group."""
    X = V.conj().T @ G
    return X - X.conj().T


def retract_unitary(V, G, step: float) -> np.ndarray:
    """Move ``V`` along the projected gradient ``G`` and stay unitary.

    Uses ``V expm(step * A)`` with ``A`` from :func:`skew_direction`, then
    re-orthonormalizes through the polar factor to scrub rounding drift.
    """
    V = np.asarray(V, dtype=complex)
    if step == 0:
        return V.copy()
    A = skew_direction(V, np.asarray(G, dtype=complex))
    W = V @ expm(step * A)
    u, _, vh = np.linalg.svd(W)
    return u @ vh


def _c2l(a):
    a = np.asarray(a, dtype=complex)
    return {"re": a.real.tolist(), "im": a.imag.tolist()}


def _l2c(d):
    return np.asarray(d["re"], dtype=float) + 1j * np.asarray(d["im"], dtype=float)


def precoder_to_dict(p: Precoder) -> dict:
    return {
        "U_B": None if p.U_B is None else _c2l(p.U_B),
        "lambda": [l.tolist() for l in p.lam],
        "V": [_c2l(v) for v in p.V],
        "ell": list(p.partition.ell),
        "S": p.partition.S,
        "N_s": p.partition.N_s,
        "P": p.P,
    }


def precoder_from_dict(d: dict) -> Precoder:
    part = StreamPartition(tuple(d["ell"]), int(d["N_s"]))
    U_B = None if d.get("U_B") is None else _l2c(d["U_B"])
    return Precoder(tuple(np.asarray(l) for l in d["lambda"]),
                    tuple(_l2c(v) for v in d["V"]), part, float(d["P"]), U_B)
