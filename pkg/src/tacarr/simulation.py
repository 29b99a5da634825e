"""Synthetic range paths and Monte Carlo parameter-recovery studies.

Paths are generated as ``R_t = lam_t * eps_t``. The up/down split that
drives the TACARR regime is synthetic: ``ru_t = U_t * R_t`` and
``rd_t = R_t - ru_t`` with ``U_t ~ Uniform(0, 1)`` (or ``Beta(a, b)``),
drawn independently of everything else.
"""
from __future__ import annotations

import csv
import datetime as _dt
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _recursions
from .estimation import FitOptions, fit
from .likelihood import model_loglik
from .models import Family, Innovation, ModelSpec, ParamVector
from .ranges import DEFAULT_SCALE, PriceBar, RangeSeries

__all__ = [
    "RecoveryReport",
    "SimConfig",
    "SimulatedPath",
    "recovery_study",
    "simulate_path",
    "synthetic_bars",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimConfig:
    spec: ModelSpec
    true_params: ParamVector
    T: int
    n_reps: int = 200
    burn_in: int = 500
    seed: int = 0
    split: tuple[float, float] | None = None
    fit_options: FitOptions = field(default_factory=lambda: FitOptions(compute_se=False))
    jobs: int = 1

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.burn_in < 0:
            raise ValueError("burn_in must be non-negative")
        if self.n_reps < 1:
            raise ValueError("n_reps must be >= 1")


@dataclass
class SimulatedPath:
    ranges: RangeSeries
    lam: np.ndarray
    branch: np.ndarray

    @property
    def init(self) -> np.ndarray:
        """Pre-sample conditional means that reproduce ``lam`` on the retained path."""
        return self.lam


def _pre_sample_mean(params: ParamVector) -> float:
    levels = []
    for b in params.branches:
        pers = b.persistence
        levels.append(b.omega / (1.0 - pers) if pers < 1 else b.omega)
    return float(np.mean(levels))


def simulate_path(config: SimConfig, rng: np.random.Generator | int | None = None) -> SimulatedPath:
    """Draw one path of length ``config.T`` after discarding ``config.burn_in`` steps."""
    spec, params = config.spec, config.true_params
    params.validate(spec)
    if spec.two_series:
        raise NotImplementedError("joint upward/downward data-generating processes are not provided")
    if spec.family is Family.TARR and spec.threshold is None:
        raise ValueError("simulating TARR requires a numeric threshold")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(config.seed if rng is None else rng)
    n = config.T + config.burn_in
    B = spec.n_branches
    if spec.innovation is Innovation.EXPONENTIAL:
        e = rng.standard_exponential(n)
        eps = np.tile(e, (B, 1))
    else:
        z = rng.standard_normal(n)
        th = params.theta2.reshape(-1, 1)
        eps = np.exp(-0.5 * th + np.sqrt(th) * z)
    if config.split is None:
        split = rng.uniform(0.0, 1.0, n)
    else:
        split = rng.beta(config.split[0], config.split[1], n)
    rule = {Family.CARR: 0, Family.TACARR: 1, Family.TARR: 2}[spec.family]
    omega, alpha, beta, _ = params.stacked()
    r, ru, rd, lam, branch = _recursions.simulate_threshold(
        np.ascontiguousarray(eps), split, rule, spec.l, spec.delay,
        spec.threshold if spec.threshold is not None else 0.0,
        omega, alpha, beta, spec.start, _pre_sample_mean(params),
    )
    keep = slice(config.burn_in, n)
    branch = branch[keep].copy()
    if spec.family is Family.CARR:
        branch[:] = 0
    return SimulatedPath(RangeSeries(r[keep], ru[keep], rd[keep]), lam[keep].copy(), branch)


def synthetic_bars(
    ranges: RangeSeries,
    rng: np.random.Generator | int | None = None,
    first_day: _dt.date = _dt.date(2002, 1, 2),
    price: float = 100.0,
    scale: float = DEFAULT_SCALE,
) -> list[PriceBar]:
    """OHLC bars on consecutive business days whose ranges are exactly ``ranges``.

    Each bar opens at the previous close; the close is drawn uniformly
    between the low and the high.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    days = np.busday_offset(np.datetime64(first_day, "D"), np.arange(len(ranges)), roll="forward")
    u = rng.uniform(0.0, 1.0, len(ranges))
    bars = []
    for t in range(len(ranges)):
        o = price
        hi = o * np.exp(ranges.ru[t] / scale)
        lo = o * np.exp(-ranges.rd[t] / scale)
        price = float(lo + u[t] * (hi - lo))
        bars.append(PriceBar(o, float(hi), float(lo), price, days[t].astype(object)))
    return bars


@dataclass
class RecoveryReport:
    """Mean estimate, MADE and convergence per parameter over replications."""

    spec: ModelSpec
    T: int
    names: list[str]
    truth: np.ndarray
    estimates: np.ndarray
    converged: np.ndarray
    llf_hat: np.ndarray
    llf_true: np.ndarray
    seed: int

    @property
    def n_reps(self) -> int:
        return len(self.converged)

    @property
    def convergence_rate(self) -> float:
        return float(np.mean(self.converged))

    @property
    def mean(self) -> np.ndarray:
        return self.estimates[self.converged].mean(axis=0)

    @property
    def made(self) -> np.ndarray:
        return np.abs(self.estimates[self.converged] - self.truth).mean(axis=0)

    def to_dict(self) -> dict:
        return {
            "model": self.spec.name,
            "T": self.T,
            "n_reps": self.n_reps,
            "seed": self.seed,
            "convergence_rate": self.convergence_rate,
            "parameters": [
                {"name": n, "true": float(t), "mean": float(m), "made": float(d)}
                for n, t, m, d in zip(self.names, self.truth, self.mean, self.made)
            ],
            "replications": [
                {"estimates": [float(v) for v in est], "converged": bool(c), "llf": float(lh), "llf_true": float(lt)}
                for est, c, lh, lt in zip(self.estimates, self.converged, self.llf_hat, self.llf_true)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        """Table-shaped summary: one row per parameter."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["parameter", "true", f"mean_T{self.T}", f"made_T{self.T}"])
        for n, t, m, d in zip(self.names, self.truth, self.mean, self.made):
            w.writerow([n, repr(float(t)), repr(float(m)), repr(float(d))])
        return buf.getvalue()


def _replicate(config: SimConfig, child: np.random.SeedSequence) -> dict:
    rng = np.random.default_rng(child)
    path = simulate_path(config, rng)
    fit_seed = int(rng.integers(0, 2**31 - 1))
    res = fit(path.ranges, config.spec, config.fit_options, seed=fit_seed)
    llf_true = model_loglik(path.ranges, config.true_params, config.spec)
    return {
        "estimates": [float(v) for v in res.params.to_array()],
        "converged": bool(res.converged),
        "llf": float(res.llf),
        "llf_true": float(llf_true),
    }


def _replicate_indexed(args):
    config, i, child = args
    return i, _replicate(config, child)


def recovery_study(config: SimConfig, checkpoint: str | os.PathLike | None = None) -> RecoveryReport:
    """Simulate-and-fit ``config.n_reps`` times with per-replication seeds.

    Replication ``i`` always uses the ``i``-th child of
    ``SeedSequence(config.seed)``, so results do not depend on scheduling
    or on resuming from ``checkpoint`` (a JSON-lines file that is read on
    start and appended to as replications finish).
    """
    children = np.random.SeedSequence(config.seed).spawn(config.n_reps)
    done: dict[int, dict] = {}
    if checkpoint is not None and os.path.exists(checkpoint):
        with open(checkpoint) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    rec = json.loads(line)
                    done[int(rec["rep"])] = rec
    todo = [i for i in range(config.n_reps) if i not in done]
    sink = open(checkpoint, "a") if checkpoint is not None else None
    try:
        def record(i, rec):
            done[i] = rec
            if sink is not None:
                sink.write(json.dumps({"rep": i, **rec}) + "\n")
                sink.flush()

        if config.jobs > 1 and len(todo) > 1:
            with ProcessPoolExecutor(config.jobs) as pool:
                for i, rec in pool.map(_replicate_indexed, [(config, i, children[i]) for i in todo]):
                    record(i, rec)
        else:
            for i in todo:
                record(i, _replicate(config, children[i]))
    finally:
        if sink is not None:
            sink.close()
    recs = [done[i] for i in range(config.n_reps)]
    return RecoveryReport(
        spec=config.spec,
        T=config.T,
        names=ParamVector.names(config.spec),
        truth=config.true_params.to_array(),
        estimates=np.array([r["estimates"] for r in recs]),
        converged=np.array([r["converged"] for r in recs], dtype=bool),
        llf_hat=np.array([r["llf"] for r in recs]),
        llf_true=np.array([r["llf_true"] for r in recs]),
        seed=config.seed,
    )
