"""Exact information-theoretic checks on finite joint distributions.

Mutual information (in nats), conditional mutual information, deterministic
push-forwards, and verifiers for the data-processing chain
``I(Z;Y) <= I(Z;O) <= I(Z;H) <= I(Z;X)``, the chain rule
``I(Z;O1,O2) = I(Z;O1) + I(Z;O2|O1)`` and the stochastic-decoding bound.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

MAX_CELLS = 1_000_000
DPI_TOL = 1e-9

Vars = Union[str, Sequence[str]]


@dataclass(frozen=True)
class JointDistribution:
    names: tuple
    probs: np.ndarray  # one axis per variable, in ``names`` order

    def __post_init__(self):
        names = tuple(self.names)
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "probs", probs)
        if len(set(names)) != len(names):
            raise ValueError("variable names must be unique")
        if probs.ndim != len(names):
            raise ValueError(f"{len(names)} names for a {probs.ndim}-D table")
        if probs.size > MAX_CELLS:
            raise ValueError(f"joint table exceeds {MAX_CELLS} cells")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ValueError("probabilities must be finite and non-negative")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")

    @property
    def sizes(self) -> dict:
        return dict(zip(self.names, self.probs.shape))

    def axes(self, variables: Vars) -> tuple:
        variables = [variables] if isinstance(variables, str) else list(variables)
        try:
            return tuple(self.names.index(v) for v in variables)
        except ValueError:
            raise ValueError(f"unknown variable in {variables}") from None

    def marginal(self, variables: Vars) -> np.ndarray:
        """Marginal table over ``variables`` with axes in the given order."""
        keep = self.axes(variables)
        drop = tuple(i for i in range(len(self.names)) if i not in keep)
        m = self.probs.sum(axis=drop)
        kept_sorted = sorted(keep)
        return np.transpose(m, [kept_sorted.index(k) for k in keep])

    @classmethod
    def from_json(cls, obj: dict) -> "JointDistribution":
        names = [v["name"] for v in obj["vars"]]
        sizes = [int(v["size"]) for v in obj["vars"]]
        probs = np.asarray(obj["probs"], dtype=np.float64)
        if probs.size != int(np.prod(sizes)):
            raise ValueError(f"{probs.size} probabilities for alphabet sizes {sizes}")
        return cls(tuple(names), probs.reshape(sizes))

    def to_json(self) -> dict:
        return {
            "vars": [{"name": n, "size": s} for n, s in self.sizes.items()],
            "probs": self.probs.ravel().tolist(),
        }


def load_joint(path) -> JointDistribution:
    with open(path) as fh:
        return JointDistribution.from_json(json.load(fh))


def random_joint(rng: np.random.Generator, sizes: dict, concentration: float = 1.0) -> JointDistribution:
    p = rng.dirichlet(np.full(int(np.prod(list(sizes.values()))), concentration))
    return JointDistribution(tuple(sizes), p.reshape(tuple(sizes.values())))


@dataclass(frozen=True)
class DeterministicMap:
    table: np.ndarray  # table[x] = f(x)
    out_size: int

    def __post_init__(self):
        table = np.asarray(self.table)
        object.__setattr__(self, "table", table)
        if table.ndim != 1 or not np.issubdtype(table.dtype, np.integer):
            raise ValueError("map table must be a 1-D integer array")
        if table.size and (table.min() < 0 or table.max() >= self.out_size):
            raise ValueError("map outputs fall outside the output alphabet")

    @property
    def in_size(self) -> int:
        return self.table.size

    @classmethod
    def identity(cls, n: int) -> "DeterministicMap":
        return cls(np.arange(n), n)

    @classmethod
    def constant(cls, n: int, value: int = 0, out_size: int = 1) -> "DeterministicMap":
        return cls(np.full(n, value), out_size)

    @classmethod
    def random(cls, rng: np.random.Generator, in_size: int, out_size: int) -> "DeterministicMap":
        return cls(rng.integers(0, out_size, size=in_size), out_size)


def _disjoint(*groups):
    seen = set()
    for g in groups:
        g = {g} if isinstance(g, str) else set(g)
        if not g:
            raise ValueError("variable sets must be non-empty")
        if seen & g:
            raise ValueError(f"variable sets overlap on {sorted(seen & g)}")
        seen |= g


def _flat(table: np.ndarray, n_first: int) -> np.ndarray:
    """Reshape a marginal table into 2-D: (joint of first n axes, joint of rest)."""
    a = int(np.prod(table.shape[:n_first]))
    return table.reshape(a, -1)


def _as_list(v: Vars) -> list:
    return [v] if isinstance(v, str) else list(v)


def _mi_from_table(pab: np.ndarray) -> float:
    pa = pab.sum(axis=1, keepdims=True)
    pb = pab.sum(axis=0, keepdims=True)
    nz = pab > 0
    return float(np.sum(pab[nz] * np.log(pab[nz] / (pa @ pb)[nz])))


def mutual_information(j: JointDistribution, A: Vars, B: Vars) -> float:
    """I(A;B) in nats; zero-probability cells contribute nothing."""
    _disjoint(A, B)
    A, B = _as_list(A), _as_list(B)
    return _mi_from_table(_flat(j.marginal(A + B), len(A)))


def conditional_mutual_information(j: JointDistribution, A: Vars, B: Vars, C: Vars) -> float:
    """I(A;B|C) = sum_c p(c) I(A;B | C=c)."""
    _disjoint(A, B, C)
    A, B, C = _as_list(A), _as_list(B), _as_list(C)
    t = j.marginal(C + A + B)
    nc = int(np.prod(t.shape[: len(C)]))
    na = int(np.prod(t.shape[len(C): len(C) + len(A)]))
    t = t.reshape(nc, na, -1)
    total = 0.0
    for pab in t:
        pc = pab.sum()
        if pc > 0:
            total += pc * _mi_from_table(pab / pc)
    return total


def entropy(j: JointDistribution, A: Vars) -> float:
    p = j.marginal(_as_list(A)).ravel()
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def push_forward(j: JointDistribution, var: Vars, f: DeterministicMap, new_var: str) -> JointDistribution:
    """Append ``new_var = f(var)``. A tuple ``var`` is flattened row-major into one input index."""
    if new_var in j.names:
        raise ValueError(f"variable {new_var!r} already exists")
    axes = j.axes(var)
    dims = [j.probs.shape[a] for a in axes]
    if int(np.prod(dims)) != f.in_size:
        raise ValueError(f"map expects alphabet {f.in_size}, {var} has {int(np.prod(dims))}")
    out_index = np.broadcast_to(_expand(f.table.reshape(dims), axes, j.probs.ndim), j.probs.shape)
    new = np.zeros(j.probs.shape + (f.out_size,))
    np.put_along_axis(new, out_index[..., None], j.probs[..., None], axis=-1)
    return JointDistribution(j.names + (new_var,), new)


def _expand(arr: np.ndarray, axes: tuple, ndim: int) -> np.ndarray:
    """Place ``arr`` (indexed by ``axes`` in order) into an ndim-broadcastable array."""
    order = np.argsort(axes)
    arr = np.transpose(arr, order)
    shape = [1] * ndim
    for a, s in zip(sorted(axes), arr.shape):
        shape[a] = s
    return arr.reshape(shape)


def with_independent(j: JointDistribution, name: str, probs) -> JointDistribution:
    """Append a variable drawn independently of everything already in ``j``."""
    q = np.asarray(probs, dtype=np.float64)
    if q.ndim != 1 or np.any(q < 0) or abs(q.sum() - 1) > 1e-12:
        raise ValueError("independent variable needs a 1-D probability vector")
    return JointDistribution(j.names + (name,), np.multiply.outer(j.probs, q))


@dataclass(frozen=True)
class DPIResult:
    values: dict
    holds: bool


def verify_dpi_chain(j: JointDistribution, E: DeterministicMap, P: DeterministicMap,
                     pi: DeterministicMap, z: str = "Z", x: str = "X") -> DPIResult:
    """Push X through H=E(X), O=P(H), Y=pi(O) and check the MI ordering."""
    if E.out_size != P.in_size or P.out_size != pi.in_size:
        raise ValueError("map alphabets do not chain")
    j = push_forward(j, x, E, "H")
    j = push_forward(j, "H", P, "O")
    j = push_forward(j, "O", pi, "Y")
    vals = {v: mutual_information(j, z, v) for v in (x, "H", "O", "Y")}
    chain = [vals["Y"], vals["O"], vals["H"], vals[x]]
    holds = all(a <= b + DPI_TOL for a, b in zip(chain, chain[1:]))
    return DPIResult(vals, holds)


@dataclass(frozen=True)
class ChainRuleResult:
    joint: float
    first: float
    conditional: float
    residual: float
    monotone: bool


def verify_chain_rule(j: JointDistribution, z: str = "Z", o1: str = "O1", o2: str = "O2") -> ChainRuleResult:
    joint = mutual_information(j, z, [o1, o2])
    first = mutual_information(j, z, o1)
    cond = conditional_mutual_information(j, z, o2, o1)
    return ChainRuleResult(joint, first, cond, abs(joint - first - cond), joint >= first - DPI_TOL)


def verify_stochastic_decoding(j: JointDistribution, g: DeterministicMap, z: str = "Z",
                               o: str = "O", u: str = "U", y: str = "Y") -> DPIResult:
    """With ``U`` independent of ``(Z, O)``, check ``I(Z; g(O, U)) <= I(Z; O)``."""
    if mutual_information(j, u, [z, o]) > 1e-12:
        raise ValueError(f"{u} is not independent of ({z}, {o})")
    j = push_forward(j, (o, u), g, y)
    vals = {"I(Z;O)": mutual_information(j, z, o), "I(Z;Y)": mutual_information(j, z, y)}
    return DPIResult(vals, vals["I(Z;Y)"] <= vals["I(Z;O)"] + DPI_TOL)


def random_dpi_trials(n: int, seed: int = 0, max_size: int = 8) -> list[DPIResult]:
    rng = np.random.default_rng([seed, 0xD71])
    out = []
    for _ in range(n):
        nz, nx, nh, no, ny = rng.integers(2, max_size + 1, size=5)
        j = random_joint(rng, {"Z": nz, "X": nx}, rng.choice([0.3, 1.0]))
        out.append(verify_dpi_chain(
            j,
            DeterministicMap.random(rng, nx, nh),
            DeterministicMap.random(rng, nh, no),
            DeterministicMap.random(rng, no, ny),
        ))
    return out


def random_chain_rule_trials(n: int, seed: int = 0, max_size: int = 6) -> list[ChainRuleResult]:
    rng = np.random.default_rng([seed, 0xC4A])
    sizes = lambda: {k: int(s) for k, s in zip(("Z", "O1", "O2"), rng.integers(2, max_size + 1, 3))}
    return [verify_chain_rule(random_joint(rng, sizes(), rng.choice([0.3, 1.0]))) for _ in range(n)]


def random_stochastic_trials(n: int, seed: int = 0, max_size: int = 6) -> list[DPIResult]:
    rng = np.random.default_rng([seed, 0x57C])
    out = []
    for _ in range(n):
        nz, no, nu, ny = (int(s) for s in rng.integers(2, max_size + 1, 4))
        j = random_joint(rng, {"Z": nz, "O": no})
        j = with_independent(j, "U", rng.dirichlet(np.ones(nu)))
        out.append(verify_stochastic_decoding(j, DeterministicMap.random(rng, no * nu, ny)))
    return out
