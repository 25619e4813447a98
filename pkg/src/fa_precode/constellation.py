"""Finite signal alphabets and enumeration of group signal vectors."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

import numpy as np

__all__ = [
    "AlphabetKind",
    "Constellation",
    "EnumerationCapError",
    "DEFAULT_ENUMERATION_CAP",
    "build_constellation",
    "constellation_from_name",
    "enumerate_group_vectors",
    "group_vector_matrix",
]

DEFAULT_ENUMERATION_CAP = 2**20


class EnumerationCapError(ValueError):
    """Raised when M**n vectors would exceed the enumeration cap."""


class AlphabetKind(str, Enum):
    BPSK = "bpsk"
    QPSK = "qpsk"
    QAM = "qam"


@dataclass(frozen=True)
class Constellation:
    """Equiprobable M-ary alphabet with zero mean and unit average energy.

    Attributes
    ----------
    kind : AlphabetKind
    points : np.ndarray
        Complex points in Gray order, shape (M,). Read-only.
    """

    kind: AlphabetKind
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex).copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def M(self) -> int:
        return self.points.size

    @property
    def is_real(self) -> bool:
        return bool(np.all(self.points.imag == 0))

    @property
    def bits_per_symbol(self) -> float:
        return float(np.log2(self.M))

    @property
    def name(self) -> str:
        if self.kind is AlphabetKind.QAM:
            return f"qam{self.M}"
        return self.kind.value


def _gray_pam_levels(n_bits: int) -> np.ndarray:
    """Amplitude levels of a Gray-labelled 2**n_bits-PAM, indexed by label."""
    L = 2**n_bits
    levels = np.empty(L)
    for pos in range(L):
        gray = pos ^ (pos >> 1)
        levels[gray] = 2 * pos - (L - 1)
    return levels


def build_constellation(kind, M: int | None = None) -> Constellation:
    """Build a normalized constellation.

    Parameters
    ----------
    kind : AlphabetKind or str
        ``"bpsk"``, ``"qpsk"`` or ``"qam"``.
    M : int, optional
        Cardinality. Inferred for BPSK (2) and QPSK (4); required for QAM,
        which supports 4, 16 and 64.

    Returns
    -------
    Constellation
    """
    kind = AlphabetKind(kind)
    if kind is AlphabetKind.BPSK:
        if M not in (None, 2):
            raise ValueError(f"BPSK has M=2, got M={M}")
        pts = np.array([1.0, -1.0], dtype=complex)
    elif kind is AlphabetKind.QPSK:
        if M not in (None, 4):
            raise ValueError(f"QPSK has M=4, got M={M}")
        pts = _square_qam(4)
    else:
        if M not in (4, 16, 64):
            raise ValueError(f"unsupported QAM order M={M}; use 4, 16 or 64")
        pts = _square_qam(M)
    return Constellation(kind, pts)


def _square_qam(M: int) -> np.ndarray:
    k = int(round(np.log2(M))) // 2
    levels = _gray_pam_levels(k)
    idx = np.arange(M)
    # high bits select the in-phase level, low bits the quadrature level
    re = levels[idx >> k]
    im = levels[idx & ((1 << k) - 1)]
    pts = re - 1j * im
    return pts / np.sqrt(np.mean(np.abs(pts) ** 2))


_NAMES = {
    "bpsk": (AlphabetKind.BPSK, 2),
    "qpsk": (AlphabetKind.QPSK, 4),
    "qam4": (AlphabetKind.QAM, 4),
    "qam16": (AlphabetKind.QAM, 16),
    "16qam": (AlphabetKind.QAM, 16),
    "qam64": (AlphabetKind.QAM, 64),
    "64qam": (AlphabetKind.QAM, 64),
}


def constellation_from_name(name: str) -> Constellation:
    """Look up a constellation by config name, e.g. ``"qam16"``."""
    try:
        kind, M = _NAMES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown constellation {name!r}; "
                         f"choose from {sorted(_NAMES)}") from None
    return build_constellation(kind, M)


def _check_cap(M: int, n: int, cap: int) -> None:
    if n < 1:
        raise ValueError("group size must be >= 1")
    count = M**n
    if count > cap:
        raise EnumerationCapError(
            f"enumerating {M}**{n} = {count} vectors exceeds the cap of {cap}; "
            f"raise the cap to at least {count} to proceed")


def enumerate_group_vectors(c: Constellation, n: int,
                            cap: int = DEFAULT_ENUMERATION_CAP
                            ) -> Iterator[np.ndarray]:
    """Yield all ``M**n`` signal vectors in lexicographic index order.

    The first coordinate varies slowest.
    """
    _check_cap(c.M, n, cap)
    for idx in itertools.product(range(c.M), repeat=n):
        yield c.points[list(idx)]


def group_vector_matrix(c: Constellation, n: int,
                        cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """All group vectors stacked as columns, shape ``(n, M**n)``.

    Column order matches :func:`enumerate_group_vectors`.
    """
    _check_cap(c.M, n, cap)
    grids = np.meshgrid(*([np.arange(c.M)] * n), indexing="ij")
    idx = np.stack([g.ravel() for g in grids])
    return c.points[idx]
