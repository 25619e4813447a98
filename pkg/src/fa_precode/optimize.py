"""Gradients of the asymptotic MI and the alternating precoder optimizer.

The optimizer alternates a projected gradient step on the power split
``p = diag(Lambda)^2`` with a geodesic step on every mixing matrix ``V_s``,
re-solving the fixed point after each trial point and accepting a step only
when the Armijo condition holds. The fixed point is stationary in
``(gamma, psi)``, so gradients are taken with the state held fixed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelStatistics, random_unitary
from .constellation import DEFAULT_ENUMERATION_CAP, Constellation
from .deteq import (AsymptoticMI, DetEquivState, FixedPointOptions, asymptotic_mi,
                    solve_fixed_point)
from .metrics import LOG2E, NoiseExpectation
from .structure import (Precoder, StreamPartition, pair_subchannels,
                        retract_unitary, skew_direction)

__all__ = [
    "GroupGradient",
    "OptimizeOptions",
    "OptimizationTrace",
    "OptimizationResult",
    "OptimizationError",
    "gradients",
    "project_simplex",
    "optimize",
    "stationarity_residual",
]

log = logging.getLogger(__name__)


class OptimizationError(RuntimeError):
    """Every restart failed."""


@dataclass(frozen=True)
class GroupGradient:
    """Gradients of the asymptotic MI (bits) for one group.

    ``grad_lambda_sq[i]`` is the partial derivative with respect to
    ``lam[i]**2``. ``grad_V`` is the complex gradient ``G`` for which the
    first-order change under ``V -> V + dV`` is ``2 Re tr(G^H dV)``.
    """

    grad_lambda_sq: np.ndarray
    grad_V: np.ndarray


def gradients(state: DetEquivState, p: Precoder, c: Constellation | None = None,
              ne: NoiseExpectation | None = None) -> tuple:
    """Per-group gradients at a converged state.

    For an aligned precoder the group ``s`` sees the diagonal ``Xi_s`` and
    the formulas are ``xi_i [V_s E_s V_s^H]_ii`` and
    ``Xi_s Lambda_s^2 V_s E_s``. With ``U_B`` set the full error covariance
    and ``U_B^H Xi U_B`` are used instead. ``c`` and ``ne`` are unused;
    the error covariances stored in ``state`` are reused.
    """
    part = p.partition
    out = []
    if p.U_B is None:
        for s, gm in enumerate(state.groups):
            xi = state.xi_eig[part.group_indices(s)]
            lam, V, E = p.lam[s], p.V[s], gm.E_s
            W = V @ E @ V.conj().T
            g_lam = xi * np.real(np.diag(W))
            g_V = (xi * lam**2)[:, None] * (V @ E)
            out.append(GroupGradient(g_lam * LOG2E, g_V * LOG2E))
        return tuple(out)

    E = state.groups[0].E_s
    Xu = p.U_B.conj().T @ state.Xi @ p.U_B
    lam = p.lambda_B()
    VB = p.V_B()
    W = VB @ E @ VB.conj().T
    XLW = Xu @ (lam[:, None] * W)
    diag = np.real(np.diag(XLW))
    g_lam_full = np.where(lam > 0, diag / np.where(lam > 0, lam, 1.0),
                          np.real(np.diag(Xu)) * np.real(np.diag(W)))
    G_full = (lam[:, None] * Xu * lam[None, :]) @ VB @ E
    for s in range(part.S):
        idx = part.group_indices(s)
        out.append(GroupGradient(g_lam_full[idx] * LOG2E,
                                 G_full[np.ix_(idx, idx)] * LOG2E))
    return tuple(out)


def project_simplex(v, total: float) -> np.ndarray:
    """Euclidean projection onto ``{p >= 0, sum(p) = total}``."""
    v = np.asarray(v, dtype=float)
    if total <= 0:
        return np.zeros_like(v)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    p = np.clip(v - theta, 0.0, None)
    return p * (total / p.sum())


@dataclass(frozen=True)
class OptimizeOptions:
    """Controls for :func:`optimize`.

    ``fixed_point`` governs the inner solves, which are warm-started from the
    previous accepted state.
    """

    eps: float = 1e-4
    max_iter: int = 50
    restarts: int = 3
    seed: int = 0
    ne: NoiseExpectation | None = None
    fixed_point: FixedPointOptions = field(
        default_factory=lambda: FixedPointOptions(tol=1e-7, max_iter=500, damping=1.0,
                                                  adaptive=True, anderson=3))
    armijo: float = 0.3
    shrink: float = 0.5
    initial_step: float = 1.0
    max_halvings: int = 30
    cap: int = DEFAULT_ENUMERATION_CAP


@dataclass
class OptimizationTrace:
    mi_per_iteration: list = field(default_factory=list)
    step_sizes: list = field(default_factory=list)
    restarts: int = 0
    converged: bool = False
    failures: list = field(default_factory=list)


@dataclass(frozen=True)
class OptimizationResult:
    """Best restart: final precoder (``U_B`` fixed), its trace and MI."""

    precoder: Precoder
    trace: OptimizationTrace
    mi: AsymptoticMI
    state: DetEquivState = field(repr=False)
    restart: int = 0


class _Objective:
    def __init__(self, s, c, o: OptimizeOptions):
        self.s, self.c, self.o = s, c, o
        self.ne = o.ne or NoiseExpectation()

    def __call__(self, p: Precoder, warm: DetEquivState | None):
        init = None if warm is None else (warm.gamma, warm.psi, warm.U_Xi)
        st = solve_fixed_point(self.s, p, self.c, self.ne, self.o.fixed_point, init,
                               self.o.cap)
        return asymptotic_mi(st, self.s).total_bits, st


def _split(p_flat, part: StreamPartition):
    return tuple(p_flat[s * part.N_s:(s + 1) * part.N_s] for s in range(part.S))


def _lambda_step(f, p: Precoder, mi, st, grads, t0, o: OptimizeOptions):
    """Armijo search on the power split; returns (precoder, mi, state, step)."""
    g = np.concatenate([gg.grad_lambda_sq for gg in grads])
    q = np.concatenate([l**2 for l in p.lam])
    d = g - g.mean()
    scale = np.max(np.abs(d))
    if scale <= 1e-14 or p.P <= 0:
        return p, mi, st, 0.0
    d = p.P * d / scale
    t = t0
    for _ in range(o.max_halvings):
        q_new = project_simplex(q + t * d, p.P)
        gain = float(g @ (q_new - q))
        if gain <= 0:
            t *= o.shrink
            continue
        cand = replace(p, lam=tuple(np.sqrt(x) for x in _split(q_new, p.partition)))
        mi_new, st_new = f(cand, st)
        if mi_new >= mi + o.armijo * gain:
            return cand, mi_new, st_new, t
        t *= o.shrink
    return p, mi, st, 0.0


def _v_step(f, p: Precoder, mi, st, grads, t0, o: OptimizeOptions):
    """Armijo search along the geodesic of every ``V_s`` at once."""
    if p.partition.N_s == 1:
        return p, mi, st, 0.0
    A = [skew_direction(V, gg.grad_V) for V, gg in zip(p.V, grads)]
    scale = max(np.linalg.norm(a, 2) for a in A)
    if scale <= 1e-14:
        return p, mi, st, 0.0
    slope = sum(float(np.sum(np.abs(a) ** 2)) for a in A) / scale
    t = t0
    for _ in range(o.max_halvings):
        V_new = tuple(retract_unitary(V, gg.grad_V, t / scale) for V, gg in zip(p.V, grads))
        cand = replace(p, V=V_new)
        mi_new, st_new = f(cand, st)
        if mi_new >= mi + o.armijo * t * slope:
            return cand, mi_new, st_new, t
        t *= o.shrink
    return p, mi, st, 0.0


def _run(f: _Objective, part: StreamPartition, P, rng, o: OptimizeOptions, st0):
    n = part.S
    V0 = tuple(random_unitary(part.N_s, rng) for _ in range(n))
    p = Precoder.uniform(part, P, V0)
    mi, st = f(p, st0)
    trace = OptimizationTrace(mi_per_iteration=[mi])
    t_lam = t_v = o.initial_step
    for _ in range(o.max_iter):
        mi_prev = mi
        grads = gradients(st, p)
        p, mi, st, s_lam = _lambda_step(f, p, mi, st, grads, t_lam, o)
        if s_lam > 0:
            grads = gradients(st, p)
        p, mi, st, s_v = _v_step(f, p, mi, st, grads, t_v, o)
        # start the next search near the last accepted step
        t_lam = min(o.initial_step, 2 * s_lam) if s_lam > 0 else o.initial_step
        t_v = min(o.initial_step, 2 * s_v) if s_v > 0 else o.initial_step
        trace.mi_per_iteration.append(mi)
        trace.step_sizes.append((s_lam, s_v))
        if mi - mi_prev <= o.eps:
            trace.converged = True
            break
    return p, mi, st, trace


def optimize(s: ChannelStatistics, c: Constellation, P: float, N_s: int,
             opts: OptimizeOptions | None = None) -> OptimizationResult:
    """Maximize the asymptotic MI over per-group precoders.

    Parameters
    ----------
    s : ChannelStatistics
    c : Constellation
    P : float
        Power budget (equal to the SNR under unit noise).
    N_s : int
        Group size; must divide ``N_t``.
    opts : OptimizeOptions, optional

    Returns
    -------
    OptimizationResult
        Best of ``opts.restarts`` runs. The grouping is fixed from the
        equivalent-channel eigenvalues at uniform power, and the final
        ``U_B`` is the eigenbasis of the last ``Xi``.

    Raises
    ------
    OptimizationError
        When every restart fails.
    """
    o = opts or OptimizeOptions()
    n_t = s.n_t
    if N_s < 1 or n_t % N_s:
        raise ValueError(f"N_s={N_s} does not divide N_t={n_t}")
    if o.restarts < 1:
        raise ValueError("need at least one restart")
    f = _Objective(s, c, o)

    # uniform power with identity mixing decouples every stream, so the
    # grouping does not matter for this first solve
    _, st0 = f(Precoder.uniform(StreamPartition.identity(n_t, 1), P), None)
    part = pair_subchannels(st0.xi_eig, N_s)

    best = None
    failures = []
    for r in range(o.restarts):
        rng = np.random.default_rng([o.seed, r])
        try:
            p, mi, st, trace = _run(f, part, float(P), rng, o, st0)
        except (ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
            log.warning("restart %d failed: %s", r, exc)
            failures.append(f"restart {r}: {exc}")
            continue
        if best is None or mi > best[1]:
            best = (p, mi, st, trace, r)
    if best is None:
        raise OptimizationError("; ".join(failures) or "no restart succeeded")

    p, mi, st, trace, r = best
    trace.restarts = o.restarts
    trace.failures = failures
    final = p.with_U_B(st.U_Xi)
    return OptimizationResult(final, trace, asymptotic_mi(st, s), st, r)


def stationarity_residual(state: DetEquivState, B) -> float:
    """Relative residual of ``kappa B = Xi B Omega`` with the best scalar ``kappa``."""
    B = np.asarray(B, dtype=complex)
    lhs = state.Xi @ B @ state.Omega
    den = np.vdot(B, B).real
    if den == 0:
        return 0.0
    kappa = np.vdot(B, lhs) / den
    nrm = np.linalg.norm(lhs)
    return float(np.linalg.norm(lhs - kappa * B) / nrm) if nrm > 0 else 0.0

