"""Config-driven sweeps over SNR and Rice factor.

A config is a JSON object::

    {
      "statistics": {"type": "random", "n_r": 4, "n_t": 4, "seed": 1},
      "constellation": "qpsk",
      "snr_db": [0, 5, 10],
      "rice_k": [1.0],
      "N_s": 2,
      "optimizer": {"eps": 1e-4, "max_iter": 50, "restarts": 3, "seed": 7},
      "validation": {"channel_samples": 1000, "noise_samples": 1000,
                     "noise_method": "auto", "seed": 11},
      "baselines": ["identity", "mrt"],
      "output_dir": "out"
    }

Statistics sources are ``random``, ``inline`` (a serialized statistics
object, or ``path`` to one), ``kronecker`` and ``ray``. Rice factors given
in ``rice_k`` rescale the source; ``null`` keeps its own ``K`` and
``"inf"`` selects the deterministic channel. SNR is ``10 log10(P)`` under
unit noise power; ``"-inf"`` dB means ``P = 0``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .channel import (ChannelStatistics, kronecker_statistics, new_statistics,
                      random_statistics, random_unitary, ray_statistics,
                      statistics_from_dict)
from .constellation import DEFAULT_ENUMERATION_CAP, constellation_from_name
from .deteq import FixedPointOptions, evaluate
from .metrics import NoiseExpectation, exact_ergodic_mi
from .optimize import OptimizeOptions, optimize
from .structure import assemble_precoder, precoder_to_dict

__all__ = [
    "OUTPUT_ROOT_ENV",
    "ExperimentConfig",
    "SweepRow",
    "load_config",
    "build_statistics",
    "identity_precoder",
    "mrt_precoder",
    "run_experiment",
    "validate_asymptotics",
]

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "FA_PRECODE_OUTPUT_ROOT"
DESIGNS = ("proposed", "identity", "mrt", "complete_search")


def _num(v) -> float:
    """JSON number or one of the strings ``"inf"`` / ``"-inf"``."""
    return float(v)


@dataclass(frozen=True)
class ExperimentConfig:
    statistics: dict
    constellation: str
    snr_db: tuple
    N_s: int
    opt_seed: int
    mc_seed: int
    rice_k: tuple = (None,)
    eps: float = 1e-4
    max_iter: int = 50
    restarts: int = 3
    channel_samples: int = 1000
    noise_samples: int = 1000
    noise_method: str = "auto"
    baselines: tuple = ("identity", "mrt")
    output_dir: str = "fa_precode_out"
    timing: bool = True
    cap: int = DEFAULT_ENUMERATION_CAP
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        """Validate and normalize a parsed JSON config.

        Seeds are mandatory: ``optimizer.seed`` and ``validation.seed``.
        """
        for key in ("statistics", "constellation", "snr_db", "N_s"):
            if key not in d:
                raise ValueError(f"config is missing {key!r}")
        opt = d.get("optimizer", {})
        val = d.get("validation", {})
        if "seed" not in opt or "seed" not in val:
            raise ValueError("config needs explicit optimizer.seed and validation.seed")
        snr = tuple(_num(x) for x in d["snr_db"])
        ks = tuple(None if k is None else _num(k) for k in d.get("rice_k", [None]))
        if not snr or not ks:
            raise ValueError("snr_db and rice_k must be non-empty")
        base = tuple(d.get("baselines", ["identity", "mrt"]))
        bad = [b for b in base if b not in DESIGNS[1:]]
        if bad:
            raise ValueError(f"unknown baselines {bad}; choose from {DESIGNS[1:]}")
        return cls(
            statistics=dict(d["statistics"]),
            constellation=str(d["constellation"]),
            snr_db=snr,
            N_s=int(d["N_s"]),
            opt_seed=int(opt["seed"]),
            mc_seed=int(val["seed"]),
            rice_k=ks,
            eps=float(opt.get("eps", 1e-4)),
            max_iter=int(opt.get("max_iter", 50)),
            restarts=int(opt.get("restarts", 3)),
            channel_samples=int(val.get("channel_samples", 1000)),
            noise_samples=int(val.get("noise_samples", 1000)),
            noise_method=str(val.get("noise_method", "auto")),
            baselines=base,
            output_dir=str(d.get("output_dir", "fa_precode_out")),
            timing=bool(d.get("timing", True)),
            cap=int(d.get("enumeration_cap", DEFAULT_ENUMERATION_CAP)),
            raw=d,
        )

    def run_id(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha1(blob.encode("utf-8")).hexdigest()[:12]


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return ExperimentConfig.from_dict(json.load(fh))


def _complex(v) -> complex:
    if isinstance(v, dict):
        return complex(v["re"], v.get("im", 0.0))
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)


def _bases(spec: dict, n_r: int, n_t: int):
    kind = spec.get("bases", "random")
    if kind == "identity":
        return np.eye(n_r), np.eye(n_t)
    seed = int(spec["seed"])
    return random_unitary(n_r, [seed, 0]), random_unitary(n_t, [seed, 1])


def build_statistics(spec: dict, K=None) -> ChannelStatistics:
    """Statistics from a config block, optionally rescaled to Rice factor ``K``."""
    kind = spec.get("type")
    if kind == "random":
        k = 1.0 if K is None else K
        return random_statistics(int(spec["n_r"]), int(spec["n_t"]), k, int(spec["seed"]))
    if kind == "inline":
        if "path" in spec:
            with open(spec["path"], encoding="utf-8") as fh:
                s = statistics_from_dict(json.load(fh))
        else:
            s = statistics_from_dict(spec["statistics"])
    elif kind == "kronecker":
        lr = np.asarray(spec["lambda_r"], dtype=float)
        lt = np.asarray(spec["lambda_t"], dtype=float)
        U_R, U_T = _bases(spec, lr.size, lt.size)
        s = kronecker_statistics(lr, lt, U_R, U_T)
    elif kind == "ray":
        paths = [dict(p, c=_complex(p["c"])) for p in spec["paths"]]
        s = ray_statistics(paths, float(spec.get("lambda_c", 1.0)), int(spec["n_r"]),
                           int(spec["n_t"]), bool(spec.get("los", True)))
    else:
        raise ValueError(f"unknown statistics type {kind!r}")
    if K is None or K == s.K:
        return s
    return new_statistics(s.U_R, s.U_T, s.G_tilde, s.H_bar, K)


def identity_precoder(n_t: int, P: float) -> np.ndarray:
    """Equal power on every antenna, no mixing."""
    return np.sqrt(P / n_t) * np.eye(n_t, dtype=complex)


def mrt_precoder(s: ChannelStatistics, P: float) -> np.ndarray:
    """All power on the dominant eigenvector of ``E[H^H H] = R_t + H_bar^H H_bar``."""
    G = s.G
    R_t = (s.U_T * G.sum(axis=0)) @ s.U_T.conj().T
    mu, U = np.linalg.eigh(R_t + s.H_bar.conj().T @ s.H_bar)
    B = np.zeros((s.n_t, s.n_t), dtype=complex)
    B[:, 0] = np.sqrt(P) * U[:, -1]
    return B


@dataclass
class SweepRow:
    snr_db: float
    k: float | None
    design: str
    mi_asymptotic_bits: float | None
    mi_exact_bits: float | None
    mi_exact_stderr: float | None
    iterations: int
    wall_time_ms: float | None
    status: str
    seed_lineage: str


_ROW_FIELDS = [f for f in SweepRow.__dataclass_fields__]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _write_json(path: Path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, ensure_ascii=False)
        fh.write("\n")


def _resolve_output(out_dir) -> Path:
    p = Path(out_dir)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not p.is_absolute():
        p = Path(root) / p
    p.mkdir(parents=True, exist_ok=True)
    return p


def _point_seed(base: int, i: int, j: int) -> int:
    return int(np.random.SeedSequence([base, i, j]).generate_state(1)[0])


def _point_id(snr_db: float, k) -> str:
    ks = "src" if k is None else ("inf" if math.isinf(k) else f"{k:g}")
    return f"snr{snr_db:g}_k{ks}".replace("-", "m").replace("+", "")


@dataclass
class _Point:
    pid: str
    snr_db: float
    k: float | None
    P: float
    stats: ChannelStatistics
    opt_seed: int
    mc_seed: int
    lineage: str


class _Runner:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.c = constellation_from_name(cfg.constellation)
        self.ne = NoiseExpectation(method=cfg.noise_method, samples=cfg.noise_samples,
                                   seed=cfg.mc_seed)

    def points(self):
        cfg = self.cfg
        for i, snr in enumerate(cfg.snr_db):
            for j, k in enumerate(cfg.rice_k):
                P = 0.0 if math.isinf(snr) and snr < 0 else 10.0 ** (snr / 10.0)
                yield i, j, snr, k, P

    def make_point(self, i, j, snr, k, P) -> _Point:
        cfg = self.cfg
        s = build_statistics(cfg.statistics, k)
        opt_seed = _point_seed(cfg.opt_seed, i, j)
        mc_seed = _point_seed(cfg.mc_seed, i, j)
        lineage = f"opt={cfg.opt_seed}/{i}/{j};mc={cfg.mc_seed}/{i}/{j}"
        return _Point(_point_id(snr, k), snr, k, P, s, opt_seed, mc_seed, lineage)

    def opt_options(self, seed) -> OptimizeOptions:
        cfg = self.cfg
        return OptimizeOptions(eps=cfg.eps, max_iter=cfg.max_iter, restarts=cfg.restarts,
                               seed=seed, ne=self.ne, cap=cfg.cap)

    def exact_feasible(self, s: ChannelStatistics) -> bool:
        return self.c.M ** s.n_t <= self.cfg.cap and self.cfg.channel_samples > 0

    def exact(self, pt: _Point, B):
        ne = NoiseExpectation(method=self.cfg.noise_method, samples=self.cfg.noise_samples,
                              seed=pt.mc_seed)
        return exact_ergodic_mi(pt.stats, B, self.c, self.cfg.channel_samples, ne,
                                seed=pt.mc_seed, cap=self.cfg.cap)


def _asymptotic_for_matrix(s, B, c, ne, cap):
    opts = FixedPointOptions(tol=1e-7, max_iter=500, damping=1.0, adaptive=True, anderson=3)
    mi, _ = evaluate(s, B, c, ne, opts, cap=cap)
    return mi.total_bits


def _run_point(r: _Runner, pt: _Point):
    """Rows, trace and precoders for one sweep point."""
    cfg, c, s = r.cfg, r.c, pt.stats
    rows, precoders, trace = [], {}, None
    exact_ok = r.exact_feasible(s)
    status = "ok" if exact_ok else "asymptotic-only"
    if not exact_ok:
        log.warning("%s: exact MI needs %d^%d hypotheses; reporting asymptotic only",
                    pt.pid, c.M, s.n_t)

    designs = ["proposed"] + [b for b in DESIGNS[1:] if b in cfg.baselines]
    for name in designs:
        t0 = time.perf_counter()
        iters = 0
        if name in ("proposed", "complete_search"):
            ns = cfg.N_s if name == "proposed" else s.n_t
            if c.M ** ns > cfg.cap:
                rows.append(SweepRow(pt.snr_db, pt.k, name, None, None, None, 0, None,
                                     "skipped: enumeration cap", pt.lineage))
                continue
            res = optimize(s, c, pt.P, ns, r.opt_options(pt.opt_seed))
            B = assemble_precoder(res.precoder)
            mi_asy = res.mi.total_bits
            iters = len(res.trace.step_sizes)
            precoders[name] = precoder_to_dict(res.precoder)
            if name == "proposed":
                trace = res.trace
        else:
            # full-matrix baselines enumerate M**N_t vectors even asymptotically
            if c.M ** s.n_t > cfg.cap:
                rows.append(SweepRow(pt.snr_db, pt.k, name, None, None, None, 0, None,
                                     "skipped: enumeration cap", pt.lineage))
                continue
            B = identity_precoder(s.n_t, pt.P) if name == "identity" else mrt_precoder(s, pt.P)
            mi_asy = _asymptotic_for_matrix(s, B, c, r.ne, cfg.cap)
            precoders[name] = {"B": [[[z.real, z.imag] for z in row] for row in B]}
        mi_ex = se = None
        if exact_ok:
            ex = r.exact(pt, B)
            mi_ex, se = ex.mi_bits, ex.std_err
        wall = (time.perf_counter() - t0) * 1e3 if cfg.timing else None
        rows.append(SweepRow(pt.snr_db, pt.k, name, mi_asy, mi_ex, se, iters, wall, status,
                             pt.lineage))
    return rows, trace, precoders


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> tuple[Path, bool]:
    """Run the sweep and write ``sweep.csv``, per-point traces and precoders,
    and ``manifest.json``.

    Returns
    -------
    (output directory, True when every point succeeded)
    """
    out = _resolve_output(out_dir or cfg.output_dir)
    r = _Runner(cfg)
    all_rows, manifest_points = [], []
    ok = True
    for i, j, snr, k, P in r.points():
        entry = {"snr_db": _fmt(snr), "rice_k": _fmt(k), "P": P}
        try:
            pt = r.make_point(i, j, snr, k, P)
            entry["id"] = pt.pid
            rows, trace, precs = _run_point(r, pt)
        except Exception as exc:  # a failed point must not abort the sweep
            log.error("point snr=%s k=%s failed: %s", snr, k, exc)
            ok = False
            entry.update(status="error", error=f"{type(exc).__name__}: {exc}")
            all_rows.append(SweepRow(snr, k, "proposed", None, None, None, 0, None,
                                     f"error: {type(exc).__name__}", ""))
            manifest_points.append(entry)
            continue
        all_rows.extend(rows)
        files = []
        if trace is not None:
            name = f"trace_{pt.pid}.csv"
            _write_csv(out / name, ["iteration", "mi_bits", "step_lambda", "step_v"],
                       [(0, trace.mi_per_iteration[0], None, None)]
                       + [(n + 1, mi, sl, sv) for n, (mi, (sl, sv)) in
                          enumerate(zip(trace.mi_per_iteration[1:], trace.step_sizes))])
            files.append(name)
        name = f"precoder_{pt.pid}.json"
        _write_json(out / name, precs)
        files.append(name)
        entry.update(status="ok", files=files, seed_lineage=pt.lineage,
                     K_effective=_fmt(pt.stats.K))
        manifest_points.append(entry)

    _write_csv(out / "sweep.csv", _ROW_FIELDS, [list(asdict(x).values()) for x in all_rows])
    _write_json(out / "manifest.json", {
        "run_id": cfg.run_id(),
        "config": cfg.raw,
        "conventions": {
            "snr_db": "10*log10(P) with unit noise power",
            "mi_units": "bits per channel use",
            "rice_k": "empty means the statistics source's own K",
        },
        "points": manifest_points,
        "complete": ok,
    })
    return out, ok


def validate_asymptotics(cfg: ExperimentConfig, out_dir=None) -> tuple[Path, bool]:
    """Paired asymptotic vs Monte Carlo MI for the optimized precoder.

    Writes ``validate.csv`` with ``snr_db, k, mi_asy, mi_exact, stderr,
    rel_err``. Raises when the exact oracle would exceed the enumeration cap.
    """
    out = _resolve_output(out_dir or cfg.output_dir)
    r = _Runner(cfg)
    rows = []
    ok = True
    for i, j, snr, k, P in r.points():
        pt = r.make_point(i, j, snr, k, P)
        if r.c.M ** pt.stats.n_t > cfg.cap:
            raise ValueError(f"exact MI needs {r.c.M}^{pt.stats.n_t} hypotheses, above the cap")
        try:
            res = optimize(pt.stats, r.c, P, cfg.N_s, r.opt_options(pt.opt_seed))
        except Exception as exc:
            log.error("point %s failed: %s", pt.pid, exc)
            ok = False
            rows.append((snr, k, None, None, None, None))
            continue
        ex = r.exact(pt, assemble_precoder(res.precoder))
        asy = res.mi.total_bits
        if ex.mi_bits == 0:
            rel = 0.0 if asy == 0 else math.inf
        else:
            rel = abs(asy - ex.mi_bits) / ex.mi_bits
        rows.append((snr, k, asy, ex.mi_bits, ex.std_err, rel))
    _write_csv(out / "validate.csv", ["snr_db", "k", "mi_asy", "mi_exact", "stderr", "rel_err"],
               rows)
    return out, ok
