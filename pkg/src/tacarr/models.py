"""Model specifications, parameter vectors and conditional-mean recursions.

Five members of the CARR family share a single recursion engine:

* ``CARR``   one branch driven by the total range;
* ``ACARR``  separate, uncoupled recursions for upward and downward ranges;
* ``FACARR`` ACARR plus lagged opposite-direction range feedback;
* ``TARR``   two branches chosen by a lagged range against a fixed threshold;
* ``TACARR`` two branches chosen by counting up days over the last ``l`` days.

Pre-sample conditional means (positions before ``spec.start``) are set to
the sample mean of the driving series unless ``init`` is given.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np

from . import _recursions
from .ranges import NO_REGIME, RangeSeries, regime_path

__all__ = [
    "Branch",
    "Family",
    "Innovation",
    "LambdaPath",
    "ModelSpec",
    "ParamVector",
    "STATIONARITY_MARGIN",
    "arma_residual_check",
    "branch_path",
    "conditional_mean",
    "lambda_acarr",
    "lambda_carr",
    "lambda_facarr",
    "lambda_tacarr",
    "lambda_tarr",
]

STATIONARITY_MARGIN = 1e-6
CONSTRAINT_ALIASES = {"paper-literal": "positivity"}


class Family(str, Enum):
    CARR = "CARR"
    ACARR = "ACARR"
    FACARR = "FACARR"
    TARR = "TARR"
    TACARR = "TACARR"


class Innovation(str, Enum):
    EXPONENTIAL = "exponential"
    LOGNORMAL = "lognormal"

    @property
    def prefix(self) -> str:
        return "E" if self is Innovation.EXPONENTIAL else "LN"


_BRANCH_LABELS = {
    Family.CARR: ("",),
    Family.ACARR: ("u", "d"),
    Family.FACARR: ("u", "d"),
    Family.TARR: ("r1", "r2"),
    Family.TACARR: ("U", "D"),
}

_NAME_RE = re.compile(r"^\s*(E|LN)?(CARR|ACARR|FACARR|TARR|TACARR)\s*(?:\(([\d\s,]*)\))?\s*$", re.I)


@dataclass(frozen=True)
class ModelSpec:
    """Which family member, its orders and its innovation law.

    ``l`` is the regime window for TACARR and the number of cross-feedback
    lags for FACARR; CARR, ACARR and TARR ignore it. ``delay`` and
    ``threshold`` only apply to TARR; a ``None`` threshold means "use the
    sample mean range of whatever series the model is applied to".
    ``constraint`` is ``"stationary"`` (per-branch coefficient sum below one)
    or ``"positivity"`` (positivity only; ``"paper-literal"`` is accepted as
    an alias).
    """

    family: Family = Family.TACARR
    p: int = 1
    q: int = 1
    l: int = 1
    innovation: Innovation = Innovation.EXPONENTIAL
    delay: int = 1
    threshold: float | None = None
    constraint: str = "stationary"

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "innovation", Innovation(self.innovation))
        for name in ("p", "q", "l", "delay"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"order {name} must be >= 1, got {getattr(self, name)}")
            object.__setattr__(self, name, int(getattr(self, name)))
        mode = CONSTRAINT_ALIASES.get(self.constraint, self.constraint)
        if mode not in ("stationary", "positivity"):
            raise ValueError(f"unknown constraint mode {self.constraint!r}")
        object.__setattr__(self, "constraint", mode)
        if self.threshold is not None:
            th = float(self.threshold)
            if np.isnan(th) or th < 0:
                raise ValueError(f"TARR threshold must be >= 0, got {self.threshold}")
            object.__setattr__(self, "threshold", th)

    @classmethod
    def parse(cls, name: str, **kwargs) -> "ModelSpec":
        """Build a spec from names like ``"LNTACARR(1,1,1)"``, ``"ACARR"`` or ``"ETARR(1,1)"``.

        Orders follow the usual conventions: ``TACARR(l,p,q)``,
        ``FACARR(p,q,l)`` and ``(p,q)`` for the rest. ACARR and FACARR default
        to exponential innovations, the others to lognormal only when the
        ``LN`` prefix is present.
        """
        m = _NAME_RE.match(name)
        if not m:
            raise ValueError(f"unrecognised model name {name!r}")
        prefix, fam, orders = m.groups()
        family = Family(fam.upper())
        fields = dict(kwargs)
        if prefix:
            fields.setdefault(
                "innovation", Innovation.LOGNORMAL if prefix.upper() == "LN" else Innovation.EXPONENTIAL
            )
        if orders and orders.strip():
            nums = [int(v) for v in orders.split(",") if v.strip()]
            if family is Family.TACARR:
                keys = ("l", "p", "q")
            elif family is Family.FACARR:
                keys = ("p", "q", "l") if len(nums) == 3 else ("p", "q")
            else:
                keys = ("p", "q")
            if len(nums) != len(keys):
                raise ValueError(f"{family.value} takes orders {keys}, got {nums}")
            fields.update(zip(keys, nums))
        return cls(family=family, **fields)

    @property
    def name(self) -> str:
        if self.family is Family.TACARR:
            orders = f"{self.l},{self.p},{self.q}"
        elif self.family is Family.FACARR:
            orders = f"{self.p},{self.q},{self.l}"
        else:
            orders = f"{self.p},{self.q}"
        return f"{self.innovation.prefix}{self.family.value}({orders})"

    @property
    def labels(self) -> tuple[str, ...]:
        return _BRANCH_LABELS[self.family]

    @property
    def n_branches(self) -> int:
        return len(self.labels)

    @property
    def two_series(self) -> bool:
        """True for the families modelling upward and downward ranges separately."""
        return self.family in (Family.ACARR, Family.FACARR)

    @property
    def n_gamma(self) -> int:
        return self.l if self.family is Family.FACARR else 0

    @property
    def start(self) -> int:
        """First position with a full lag history (0-based)."""
        lags = [self.p, self.q]
        if self.family in (Family.TACARR, Family.FACARR):
            lags.append(self.l)
        if self.family is Family.TARR:
            lags.append(self.delay)
        return max(lags)

    @property
    def n_params(self) -> int:
        per_branch = 1 + self.p + self.q + self.n_gamma
        n = self.n_branches * per_branch
        if self.innovation is Innovation.LOGNORMAL:
            n += self.n_branches
        return n

    def with_threshold(self, threshold: float | None) -> "ModelSpec":
        return replace(self, threshold=threshold)


@dataclass(frozen=True)
class Branch:
    omega: float
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray = field(default_factory=lambda: np.zeros(0))
    theta2: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "omega", float(self.omega))
        object.__setattr__(self, "alpha", np.atleast_1d(np.asarray(self.alpha, dtype=float)))
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))
        object.__setattr__(self, "gamma", np.atleast_1d(np.asarray(self.gamma, dtype=float)).ravel())
        if self.theta2 is not None:
            object.__setattr__(self, "theta2", float(self.theta2))

    @property
    def persistence(self) -> float:
        return float(self.alpha.sum() + self.beta.sum())


@dataclass(frozen=True)
class ParamVector:
    """Parameters of a model, one :class:`Branch` per regime or direction.

    The flat ordering used by :meth:`to_array` is every branch's
    ``(omega, alpha_1..p, beta_1..q, gamma_1..l)`` block in branch order,
    followed by one ``theta2`` per branch for lognormal innovations.
    """

    branches: tuple[Branch, ...]

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))

    @classmethod
    def tacarr(cls, up: Sequence[float], down: Sequence[float], theta2: Sequence[float] | None = None):
        """Shorthand for order (l,1,1) threshold models: ``up=(omega, alpha, beta)``."""
        th = theta2 if theta2 is not None else (None, None)
        return cls(tuple(Branch(b[0], [b[1]], [b[2]], theta2=t) for b, t in zip((up, down), th)))

    @classmethod
    def carr(cls, omega: float, alpha, beta, theta2: float | None = None):
        return cls((Branch(omega, alpha, beta, theta2=theta2),))

    @classmethod
    def from_array(cls, spec: ModelSpec, x: Sequence[float]) -> "ParamVector":
        x = np.asarray(x, dtype=float)
        if x.shape != (spec.n_params,):
            raise ValueError(f"{spec.name} expects {spec.n_params} parameters, got shape {x.shape}")
        branches = []
        pos = 0
        p, q, g = spec.p, spec.q, spec.n_gamma
        lognormal = spec.innovation is Innovation.LOGNORMAL
        theta_pos = spec.n_branches * (1 + p + q + g)
        for b in range(spec.n_branches):
            omega = x[pos]
            alpha = x[pos + 1 : pos + 1 + p]
            beta = x[pos + 1 + p : pos + 1 + p + q]
            gamma = x[pos + 1 + p + q : pos + 1 + p + q + g]
            pos += 1 + p + q + g
            theta2 = x[theta_pos + b] if lognormal else None
            branches.append(Branch(omega, alpha.copy(), beta.copy(), gamma.copy(), theta2))
        return cls(tuple(branches))

    def to_array(self) -> np.ndarray:
        parts = []
        for b in self.branches:
            parts.extend([[b.omega], b.alpha, b.beta, b.gamma])
        thetas = [b.theta2 for b in self.branches if b.theta2 is not None]
        parts.append(thetas)
        return np.concatenate([np.asarray(v, dtype=float) for v in parts])

    @staticmethod
    def names(spec: ModelSpec) -> list[str]:
        out = []
        for lab in spec.labels:
            suffix = f"_{lab}" if lab else ""
            out.append(f"omega{suffix}")
            out += [f"alpha{i}{suffix}" for i in range(1, spec.p + 1)]
            out += [f"beta{j}{suffix}" for j in range(1, spec.q + 1)]
            out += [f"gamma{k}{suffix}" for k in range(1, spec.n_gamma + 1)]
        if spec.innovation is Innovation.LOGNORMAL:
            out += [f"theta2_{lab}" if lab else "theta2" for lab in spec.labels]
        return out

    def to_dict(self, spec: ModelSpec) -> dict[str, float]:
        return dict(zip(self.names(spec), (float(v) for v in self.to_array())))

    @classmethod
    def from_dict(cls, spec: ModelSpec, values: dict[str, float]) -> "ParamVector":
        missing = [n for n in cls.names(spec) if n not in values]
        if missing:
            raise KeyError(f"missing parameters for {spec.name}: {missing}")
        return cls.from_array(spec, [values[n] for n in cls.names(spec)])

    def validate(self, spec: ModelSpec) -> None:
        """Raise ``ValueError`` unless the parameters are admissible for ``spec``."""
        if len(self.branches) != spec.n_branches:
            raise ValueError(f"{spec.name} needs {spec.n_branches} branches, got {len(self.branches)}")
        lognormal = spec.innovation is Innovation.LOGNORMAL
        for lab, b in zip(spec.labels, self.branches):
            tag = f"branch {lab!r}" if lab else "model"
            if b.alpha.shape != (spec.p,) or b.beta.shape != (spec.q,) or b.gamma.shape != (spec.n_gamma,):
                raise ValueError(f"{tag}: coefficient shapes do not match {spec.name}")
            values = np.concatenate(([b.omega], b.alpha, b.beta, b.gamma))
            if not np.all(np.isfinite(values)):
                raise ValueError(f"{tag}: non-finite parameter")
            if b.omega <= 0:
                raise ValueError(f"{tag}: omega must be positive, got {b.omega}")
            if np.any(b.alpha < 0) or np.any(b.beta < 0) or np.any(b.gamma < 0):
                raise ValueError(f"{tag}: alpha, beta and gamma must be non-negative")
            if spec.constraint == "stationary" and b.persistence >= 1:
                raise ValueError(f"{tag}: alpha+beta sum {b.persistence} violates stationarity")
            if lognormal:
                if b.theta2 is None or not np.isfinite(b.theta2) or b.theta2 <= 0:
                    raise ValueError(f"{tag}: lognormal theta2 must be positive, got {b.theta2}")
            elif b.theta2 is not None:
                raise ValueError(f"{tag}: theta2 given for an exponential model")

    def stacked(self, which: slice | int | None = None):
        """Branch coefficients as 2-D arrays ``(omega, alpha, beta, gamma)`` for the kernels."""
        bs = self.branches if which is None else self.branches[which : which + 1]
        omega = np.array([b.omega for b in bs])
        alpha = np.array([b.alpha for b in bs]).reshape(len(bs), -1)
        beta = np.array([b.beta for b in bs]).reshape(len(bs), -1)
        gamma = np.array([b.gamma for b in bs]).reshape(len(bs), -1)
        return omega, alpha, beta, gamma

    @property
    def theta2(self) -> np.ndarray | None:
        if self.branches[0].theta2 is None:
            return None
        return np.array([b.theta2 for b in self.branches])


@dataclass
class LambdaPath:
    """Conditional means along a series.

    ``lam`` has the full series length; entries before ``start`` are
    pre-sample initial values. ``branch`` is the parameter branch used at
    each position (``-1`` where undefined) and ``regime`` repeats it for
    the threshold families.
    """

    lam: np.ndarray
    branch: np.ndarray
    start: int

    @property
    def values(self) -> np.ndarray:
        return self.lam[self.start :]

    @property
    def regime(self) -> np.ndarray:
        return self.branch

    def __len__(self) -> int:
        return len(self.lam)


def _check_inputs(x: np.ndarray, spec: ModelSpec) -> None:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("non-finite values in range series")
    if np.any(x < 0):
        raise ValueError("range series contains negative values")
    if len(x) <= spec.start:
        raise ValueError(f"series of length {len(x)} too short for {spec.name} (needs > {spec.start})")


def _init_array(init, x: np.ndarray, start: int) -> np.ndarray:
    if init is None:
        return np.full(start, float(np.mean(x)))
    arr = np.atleast_1d(np.asarray(init, dtype=float))
    if arr.size == 1:
        return np.full(start, float(arr[0]))
    if arr.size < start:
        raise ValueError(f"init must provide {start} pre-sample values")
    return np.ascontiguousarray(arr[:start])


def resolve_threshold(spec: ModelSpec, r: np.ndarray) -> float:
    return float(np.mean(r)) if spec.threshold is None else spec.threshold


def branch_path(ranges: RangeSeries, spec: ModelSpec) -> np.ndarray:
    """Branch index per position (int64, ``-1`` before ``spec.start``).

    Depends only on the data, never on parameters, so estimation computes
    it once per sample.
    """
    n = len(ranges)
    out = np.full(n, NO_REGIME, dtype=np.int64)
    s = spec.start
    if spec.family is Family.TACARR:
        path = regime_path(ranges, spec.l)
        out[s:] = path[s:]
    elif spec.family is Family.TARR:
        th = resolve_threshold(spec, ranges.r)
        d = spec.delay
        if n > s:
            out[s:] = np.where(ranges.r[s - d : n - d] >= th, 0, 1)
    else:
        out[s:] = 0
    return out


def _run(x, z, branch, params: ParamVector, which, spec: ModelSpec, init) -> np.ndarray:
    omega, alpha, beta, gamma = params.stacked(which)
    return _recursions.cond_mean(
        x, z, branch, omega, alpha, beta, gamma, spec.start, _init_array(init, x, spec.start)
    )


def _single_series(ranges: RangeSeries, params: ParamVector, spec: ModelSpec, init, validate: bool):
    if validate:
        params.validate(spec)
        _check_inputs(ranges.r, spec)
        if spec.family is Family.TACARR:
            _check_inputs(ranges.ru, spec)
            _check_inputs(ranges.rd, spec)
    branch = branch_path(ranges, spec)
    kb = np.where(branch < 0, 0, branch)
    empty = np.zeros((len(params.branches), 0))
    omega, alpha, beta, _ = params.stacked()
    lam = _recursions.cond_mean(
        ranges.r, ranges.r, kb, omega, alpha, beta, empty, spec.start,
        _init_array(init, ranges.r, spec.start),
    )
    return LambdaPath(lam, branch, spec.start)


def _require(spec: ModelSpec, *families: Family) -> None:
    if spec.family not in families:
        names = "/".join(f.value for f in families)
        raise ValueError(f"spec family {spec.family.value} does not match {names}")


def lambda_tacarr(ranges: RangeSeries, params: ParamVector, spec: ModelSpec, init=None, validate=True) -> LambdaPath:
    """Two-branch recursion with the branch chosen by the up/down day count.

    Lagged conditional means entering either branch are the realised path
    values, whichever branch produced them.
    """
    _require(spec, Family.TACARR)
    return _single_series(ranges, params, spec, init, validate)


def lambda_carr(ranges: RangeSeries, params: ParamVector, spec: ModelSpec, init=None, validate=True) -> LambdaPath:
    _require(spec, Family.CARR)
    return _single_series(ranges, params, spec, init, validate)


def lambda_tarr(ranges: RangeSeries, params: ParamVector, spec: ModelSpec, init=None, validate=True) -> LambdaPath:
    """Branch 0 (regime 1) when ``R[t-d] >= threshold``, branch 1 otherwise."""
    _require(spec, Family.TARR)
    return _single_series(ranges, params, spec, init, validate)


def _two_series(ranges: RangeSeries, params: ParamVector, spec: ModelSpec, init, validate: bool):
    if validate:
        params.validate(spec)
        _check_inputs(ranges.ru, spec)
        _check_inputs(ranges.rd, spec)
    n = len(ranges)
    branch = np.zeros(n, dtype=np.int64)
    init_u, init_d = (None, None) if init is None else init
    paths = []
    for b, (x, z, ini) in enumerate(((ranges.ru, ranges.rd, init_u), (ranges.rd, ranges.ru, init_d))):
        omega, alpha, beta, gamma = params.stacked(b)
        lam = _recursions.cond_mean(
            x, z, branch, omega, alpha, beta, gamma, spec.start, _init_array(ini, x, spec.start)
        )
        bp = np.full(n, NO_REGIME, dtype=np.int64)
        bp[spec.start :] = b
        paths.append(LambdaPath(lam, bp, spec.start))
    return paths[0], paths[1]


def lambda_acarr(ranges: RangeSeries, params: ParamVector, spec: ModelSpec, init=None, validate=True):
    """Independent upward and downward recursions; returns ``(up_path, down_path)``."""
    _require(spec, Family.ACARR)
    return _two_series(ranges, params, spec, init, validate)


def lambda_facarr(ranges: RangeSeries, params: ParamVector, spec: ModelSpec, init=None, validate=True):
    """ACARR with ``gamma`` terms on lagged opposite-direction ranges."""
    _require(spec, Family.FACARR)
    return _two_series(ranges, params, spec, init, validate)


def conditional_mean(ranges: RangeSeries, params: ParamVector, spec: ModelSpec, init=None, validate=True) -> LambdaPath:
    """Conditional mean of the total range for any family.

    For ACARR/FACARR the total is the sum of the two directional paths.
    """
    if spec.two_series:
        up, down = _two_series(ranges, params, spec, init, validate)
        return LambdaPath(up.lam + down.lam, np.full(len(ranges), NO_REGIME, dtype=np.int64), spec.start)
    return _single_series(ranges, params, spec, init, validate)


def arma_residual_check(ranges: RangeSeries, path: LambdaPath, params: ParamVector, spec: ModelSpec) -> float:
    """Largest violation of the ARMA form of a single-series recursion.

    With ``eta = R - lam`` the recursion rearranges to
    ``R_t = omega + sum_i (alpha_i + beta_i) R_{t-i} - sum_j beta_j eta_{t-j} + eta_t``
    using the branch active at ``t``; coefficient vectors are zero-padded
    to a common length ``max(p, q)``. Returns ``max |lhs - rhs|``.
    """
    if spec.two_series:
        raise ValueError("the ARMA identity check applies to single-series families")
    r = ranges.r
    lam = path.lam
    eta = r - lam
    k = max(max(len(b.alpha) for b in params.branches), max(len(b.beta) for b in params.branches))
    s = max(path.start, k)
    n = len(r)
    if n <= s:
        return 0.0
    worst = 0.0
    for b_idx, b in enumerate(params.branches):
        a = np.zeros(k)
        a[: len(b.alpha)] = b.alpha
        bb = np.zeros(k)
        bb[: len(b.beta)] = b.beta
        ts = np.arange(s, n)
        ts = ts[path.branch[s:] == b_idx] if spec.family in (Family.TACARR, Family.TARR) else ts
        if ts.size == 0:
            continue
        rhs = np.full(ts.size, b.omega) + eta[ts]
        for i in range(1, k + 1):
            rhs += (a[i - 1] + bb[i - 1]) * r[ts - i] - bb[i - 1] * eta[ts - i]
        worst = max(worst, float(np.max(np.abs(r[ts] - rhs))))
    return worst
