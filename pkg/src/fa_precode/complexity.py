"""Addition counts for evaluating MI and MMSE per optimizer iteration.

Per-group evaluation enumerates ``M**N_s`` hypotheses against ``M**N_s``
alternatives in each of ``S = N_t / N_s`` groups; the complete search does
the same over all ``N_t`` streams at once.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["CostModel", "addition_count", "complete_count", "format_count", "cost_table"]

# Counts at or above this are printed in scientific notation.
_SCI_FROM = 10**9


@dataclass(frozen=True)
class CostModel:
    M: int
    N_t: int
    N_s: int

    def __post_init__(self):
        if self.M < 2 or self.N_t < 1 or self.N_s < 1:
            raise ValueError("M >= 2, N_t >= 1 and N_s >= 1 are required")
        if self.N_t % self.N_s:
            raise ValueError(f"N_s={self.N_s} does not divide N_t={self.N_t}")

    @property
    def S(self) -> int:
        return self.N_t // self.N_s

    @property
    def per_group(self) -> int:
        return self.S * self.M ** (2 * self.N_s)

    @property
    def complete(self) -> int:
        return self.M ** (2 * self.N_t)


def addition_count(M: int, N_t: int, N_s: int) -> int:
    """``S * M**(2 N_s)`` as an exact integer."""
    return CostModel(M, N_t, N_s).per_group


def complete_count(M: int, N_t: int) -> int:
    """``M**(2 N_t)`` as an exact integer."""
    return CostModel(M, N_t, N_t).complete


def format_count(n: int) -> str:
    """Plain digits below 1e9, otherwise ``4.2950e+009`` style."""
    if n < _SCI_FROM:
        return str(n)
    digits = str(n)
    exp = len(digits) - 1
    # round on the integer itself so huge counts keep their exact leading digits
    lead = round(int(digits[:6].ljust(6, "0")) / 10) / 10**4
    if lead >= 10:
        lead /= 10
        exp += 1
    return f"{lead:.4f}e+{exp:03d}"


def cost_table(M: int, nts, nss) -> list:
    """Rows ``(N_t, [count or None per N_s], complete)``; ``None`` where ``N_s`` does not divide."""
    rows = []
    for nt in nts:
        cells = [addition_count(M, nt, ns) if nt % ns == 0 and ns <= nt else None for ns in nss]
        rows.append((nt, cells, complete_count(M, nt)))
    return rows
