"""Lossless lowering of a binary program to QUBO and Ising form.

Pipeline: decimal scaling to integers, constraint normalization, slack-bit
expansion of inequalities, and composition of squared equality penalties
plus AND-gate penalties with the negated objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .formulation import (
    EQ,
    BinaryProgram,
    Constraint,
    Infeasible,
    LinearExpr,
    SlackBit,
    VariableRegistry,
)
from .rational import decimal_exponent, format_number

__all__ = [
    "Infeasible",
    "IsingModel",
    "PenaltyPlan",
    "QuboModel",
    "ScaleError",
    "add_slacks",
    "compose_qubo",
    "derive_penalties",
    "lower",
    "normalize_constraints",
    "scale_to_integers",
    "to_ising",
]

DEFAULT_SCALE = 3


class ScaleError(ValueError):
    def __init__(self, message: str, minimal_exponent: int | None):
        self.minimal_exponent = minimal_exponent
        super().__init__(message)


# --------------------------------------------------------------------------
# integer scaling
# --------------------------------------------------------------------------


def _program_numbers(bp: BinaryProgram):
    for con in bp.constraints:
        yield con.label, con.lhs.constant
        for c in con.lhs.terms.values():
            yield con.label, c
    yield "objective", bp.objective.constant
    for c in bp.objective.terms.values():
        yield "objective", c


def minimal_scale(bp: BinaryProgram) -> tuple[int, str]:
    """Smallest decimal exponent that makes every coefficient integral, and where it is needed."""
    need, where = 0, ""
    for label, value in _program_numbers(bp):
        n = decimal_exponent(value)
        if n is None:
            raise ScaleError(
                f"coefficient {value} in {label} has a non-terminating decimal expansion", None
            )
        if n > need:
            need, where = n, label
    return need, where


def scale_to_integers(bp: BinaryProgram, n: int = DEFAULT_SCALE) -> BinaryProgram:
    """Multiply both sides of every constraint, and the objective, by 10**n."""
    need, where = minimal_scale(bp)
    if need > n:
        raise ScaleError(f"scale exponent {n} too small for {where}; at least {need} is required", need)
    factor = 10**n
    constraints = [Constraint(c.lhs.scaled(factor), c.sense, c.label) for c in bp.constraints]
    return BinaryProgram(bp.registry, constraints, list(bp.and_gates), bp.objective.scaled(factor), bp.network)


def normalize_constraints(bp: BinaryProgram) -> BinaryProgram:
    """Divide each integer constraint by the gcd of its variable coefficients.

    ``a.x <= b`` becomes ``(a/g).x <= floor(b/g)``, which keeps the same set of
    binary solutions.  Constant rows are checked and removed; exact duplicates
    are removed.
    """
    out: list[Constraint] = []
    seen: set = set()
    for con in bp.constraints:
        lhs = con.lhs
        if not lhs.terms:
            ok = lhs.constant == 0 if con.sense == EQ else lhs.constant <= 0
            if not ok:
                raise Infeasible(con.label)
            continue
        if any(c.denominator != 1 for c in lhs.terms.values()) or lhs.constant.denominator != 1:
            raise ValueError(f"constraint {con.label} is not integral; scale it first")
        g = math.gcd(*(int(c) for c in lhs.terms.values()))
        const = int(lhs.constant)
        if con.sense == EQ:
            if const % g:
                raise Infeasible(con.label, "no integer solution")
            new_const = const // g
        else:
            new_const = -((-const) // g)  # ceil(const / g)
        new = LinearExpr({i: c / g for i, c in lhs.terms.items()}, new_const)
        key = (con.sense, new.key())
        if key in seen:
            continue
        seen.add(key)
        out.append(Constraint(new, con.sense, con.label))
    return BinaryProgram(bp.registry, out, list(bp.and_gates), bp.objective, bp.network)


# --------------------------------------------------------------------------
# slack expansion
# --------------------------------------------------------------------------


def slack_weights(span: int) -> list[int]:
    """Bit weights whose subset sums cover exactly 0..span.

    Powers of two for all but the top bit, which takes the residual so the
    largest representable value is ``span`` itself.
    """
    if span < 0:
        raise ValueError("negative slack range")
    if span == 0:
        return []
    k = span.bit_length()  # == ceil(log2(span + 1))
    low = [1 << p for p in range(k - 1)]
    return low + [span - ((1 << (k - 1)) - 1)]


def add_slacks(bp: BinaryProgram, drop_redundant: bool = False) -> BinaryProgram:
    """Turn every ``L(x) <= 0`` into ``L(x) + slack = 0`` with slack in [0, -min L].

    With ``drop_redundant`` inequalities that hold for every assignment are
    removed instead of receiving slack bits.
    """
    new_descs: list[SlackBit] = []
    pending: list[tuple[Constraint, list[int]]] = []
    out_plain: list[Constraint | None] = []
    for con in bp.constraints:
        if con.sense == EQ:
            out_plain.append(con)
            continue
        lo, hi = con.lhs.bounds()
        if lo > 0:
            raise Infeasible(con.label)
        if drop_redundant and hi <= 0:
            continue
        span = -lo
        if span.denominator != 1:
            raise ValueError(f"constraint {con.label} is not integral; scale it first")
        weights = slack_weights(int(span))
        pending.append((con, weights))
        out_plain.append(None)
        new_descs.extend(SlackBit(con.label, p) for p in range(len(weights)))

    reg = bp.registry.extended(new_descs)
    constraints: list[Constraint] = []
    it = iter(pending)
    for con in out_plain:
        if con is not None:
            constraints.append(con)
            continue
        orig, weights = next(it)
        lhs = orig.lhs.copy()
        for p, w in enumerate(weights):
            lhs.add(reg.index(SlackBit(orig.label, p)), w)
        constraints.append(Constraint(lhs, EQ, orig.label))
    return BinaryProgram(reg, constraints, list(bp.and_gates), bp.objective, bp.network)


@lru_cache(maxsize=4096)
def slack_patterns(weights: tuple[int, ...]) -> dict[int, int]:
    """Map each reachable slack value to its canonical bit mask (lowest mask wins)."""
    table: dict[int, int] = {}
    for mask in range(1 << len(weights)):
        total = 0
        for p, w in enumerate(weights):
            if mask >> p & 1:
                total += w
        table.setdefault(total, mask)
    return table


# --------------------------------------------------------------------------
# penalties and QUBO composition
# --------------------------------------------------------------------------


@dataclass
class PenaltyPlan:
    scale_exponent: int = DEFAULT_SCALE
    default_weight: int = 1
    gate_weight: int = 1
    constraint_weights: dict[str, int] = field(default_factory=dict)

    def weight(self, label: str) -> int:
        return self.constraint_weights.get(label, self.default_weight)

    def __post_init__(self):
        weights = [self.default_weight, self.gate_weight, *self.constraint_weights.values()]
        if any(int(w) != w or w < 1 for w in weights):
            raise ValueError("penalty weights must be integers >= 1")

    def to_dict(self) -> dict:
        return {
            "scale_exponent": self.scale_exponent,
            "default_weight": self.default_weight,
            "gate_weight": self.gate_weight,
            "constraint_weights": dict(sorted(self.constraint_weights.items())),
        }


def derive_penalties(bp: BinaryProgram, plan: PenaltyPlan | None = None,
                     scale_exponent: int = DEFAULT_SCALE) -> PenaltyPlan:
    """Uniform weight one above the objective's total swing, unless a plan is given.

    Every violated constraint or gate costs at least the weight, so no
    infeasible assignment can undercut a feasible one.
    """
    if plan is not None:
        return plan
    swing = sum(abs(c) for c in bp.objective.terms.values())
    if swing.denominator != 1:
        raise ValueError("objective is not integral; scale it first")
    m = int(swing) + 1
    return PenaltyPlan(scale_exponent=scale_exponent, default_weight=m, gate_weight=m)


def and_penalty(x1: int, x2: int, y: int) -> int:
    """Zero exactly when y == x1*x2, otherwise at least 1."""
    return x1 * x2 - 2 * x1 * y - 2 * x2 * y + 3 * y


class QuboModel:
    """``E(x) = sum_{i<=j} Q_ij x_i x_j + offset`` over binary x.

    When produced by :func:`compose_qubo` the model keeps the equality
    program and plan it was built from; exact solvers use that structure
    for bounding, never for the energy itself.
    """

    def __init__(self, dim: int, quadratic: Mapping[tuple[int, int], int], offset: int = 0,
                 registry: VariableRegistry | None = None, program: BinaryProgram | None = None,
                 plan: PenaltyPlan | None = None):
        self.dim = dim
        self.quadratic: dict[tuple[int, int], int] = {}
        for (i, j), c in quadratic.items():
            if c == 0:
                continue
            if not (0 <= i < dim and 0 <= j < dim):
                raise IndexError(f"term ({i}, {j}) outside dimension {dim}")
            key = (i, j) if i <= j else (j, i)
            self.quadratic[key] = self.quadratic.get(key, 0) + int(c)
        self.quadratic = {k: v for k, v in sorted(self.quadratic.items()) if v}
        self.offset = int(offset)
        self.registry = registry
        self.program = program
        self.plan = plan

    def energy(self, bits: Sequence[int]) -> int:
        if len(bits) != self.dim:
            raise ValueError(f"expected {self.dim} bits, got {len(bits)}")
        total = self.offset
        for (i, j), c in self.quadratic.items():
            if bits[i] and bits[j]:
                total += c
        return total

    def max_abs_coefficient(self) -> int:
        return max((abs(c) for c in self.quadratic.values()), default=0)

    def energy_bound(self) -> int:
        return abs(self.offset) + sum(abs(c) for c in self.quadratic.values())

    def arrays(self):
        """Linear vector and symmetric CSR couplings as int64 arrays."""
        if self.energy_bound() >= 2**62:
            raise OverflowError("QUBO coefficients too large for 64-bit energies")
        linear = np.zeros(self.dim, dtype=np.int64)
        nbrs: list[list[tuple[int, int]]] = [[] for _ in range(self.dim)]
        for (i, j), c in self.quadratic.items():
            if i == j:
                linear[i] += c
            else:
                nbrs[i].append((j, c))
                nbrs[j].append((i, c))
        indptr = np.zeros(self.dim + 1, dtype=np.int64)
        for i, row in enumerate(nbrs):
            indptr[i + 1] = indptr[i] + len(row)
        indices = np.array([j for row in nbrs for j, _ in row], dtype=np.int64)
        data = np.array([c for row in nbrs for _, c in row], dtype=np.int64)
        return linear, indptr, indices, data

    def slack_groups(self) -> dict[str, list[int]]:
        groups: dict[str, list[int]] = {}
        if self.registry is None:
            return groups
        for idx, d in enumerate(self.registry):
            if isinstance(d, SlackBit):
                groups.setdefault(d.constraint, []).append(idx)
        return groups


def _square_into(q: dict, expr: LinearExpr, weight: int) -> int:
    """Accumulate weight * expr**2 (binary x**2 == x); return the constant part."""
    items = sorted((i, int(c)) for i, c in expr.terms.items())
    const = int(expr.constant)
    for n, (i, a) in enumerate(items):
        q[(i, i)] = q.get((i, i), 0) + weight * (a * a + 2 * a * const)
        for j, b in items[n + 1:]:
            q[(i, j)] = q.get((i, j), 0) + weight * 2 * a * b
    return weight * const * const


def compose_qubo(bp: BinaryProgram, plan: PenaltyPlan) -> QuboModel:
    """Energy = -objective + sum M_c * L_c(x)**2 + sum M_g * AND-penalty."""
    q: dict[tuple[int, int], int] = {}
    offset = 0
    for idx, c in bp.objective.terms.items():
        if c.denominator != 1:
            raise ValueError("objective is not integral")
        q[(idx, idx)] = q.get((idx, idx), 0) - int(c)
    if bp.objective.constant.denominator != 1:
        raise ValueError("objective is not integral")
    offset -= int(bp.objective.constant)
    for con in bp.constraints:
        if con.sense != EQ:
            raise ValueError(f"constraint {con.label} is not an equality; add slacks first")
        if any(c.denominator != 1 for c in con.lhs.terms.values()) or con.lhs.constant.denominator != 1:
            raise ValueError(f"constraint {con.label} is not integral")
        offset += _square_into(q, con.lhs, plan.weight(con.label))
    m = plan.gate_weight
    for y, (a, b) in bp.and_gates:
        lo, hi = min(a, b), max(a, b)
        q[(lo, hi)] = q.get((lo, hi), 0) + m
        q[(min(a, y), max(a, y))] = q.get((min(a, y), max(a, y)), 0) - 2 * m
        q[(min(b, y), max(b, y))] = q.get((min(b, y), max(b, y)), 0) - 2 * m
        q[(y, y)] = q.get((y, y), 0) + 3 * m
    return QuboModel(len(bp.registry), q, offset, bp.registry, bp, plan)


def structured_energy(q: QuboModel, bits: Sequence[int]) -> int:
    """Energy recomputed from the penalty structure (must equal ``q.energy``)."""
    bp, plan = q.program, q.plan
    total = -int(bp.objective.evaluate(bits))
    for con in bp.constraints:
        total += plan.weight(con.label) * int(con.lhs.evaluate(bits)) ** 2
    for y, (a, b) in bp.and_gates:
        total += plan.gate_weight * and_penalty(bits[a], bits[b], bits[y])
    return total


def complete_assignment(q: QuboModel, values: Mapping[int, int]) -> list[int]:
    """Fill auxiliary and slack bits at their implied optimal values.

    ``values`` must cover every variable that is neither an AND output nor a
    slack bit.  AND outputs get the product of their factors; each slack group
    gets the canonical pattern closest to closing its equality.
    """
    bp = q.program
    bits = [0] * q.dim
    for i, v in values.items():
        bits[i] = int(v)
    for y, (a, b) in sorted(bp.and_gates):
        if y not in values:
            bits[y] = bits[a] * bits[b]
    groups = q.slack_groups()
    for con in bp.constraints:
        idxs = groups.get(con.label)
        if not idxs:
            continue
        weights = tuple(int(con.lhs.terms[i]) for i in idxs)
        rest = int(con.lhs.constant) + sum(
            int(c) for i, c in con.lhs.terms.items() if i not in idxs and bits[i]
        )
        table = slack_patterns(weights)
        target = min(table, key=lambda s: (abs(rest + s), s))
        mask = table[target]
        for p, i in enumerate(idxs):
            bits[i] = mask >> p & 1
    return bits


# --------------------------------------------------------------------------
# Ising form
# --------------------------------------------------------------------------


@dataclass
class IsingModel:
    """``H(z) = -sum J_jk z_j z_k - sum h_j z_j + offset`` over spins in {-1, +1}."""

    dim: int
    h: dict[int, Fraction]
    J: dict[tuple[int, int], Fraction]
    offset: Fraction = Fraction(0)

    def energy(self, spins: Sequence[int]) -> Fraction:
        total = self.offset
        for (j, k), c in self.J.items():
            total -= c * spins[j] * spins[k]
        for j, c in self.h.items():
            total -= c * spins[j]
        return total


def to_ising(q: QuboModel) -> IsingModel:
    """Exact change of variables x = (1 + z) / 2."""
    h: dict[int, Fraction] = {}
    J: dict[tuple[int, int], Fraction] = {}
    offset = Fraction(q.offset)
    for (i, j), c in q.quadratic.items():
        c = Fraction(c)
        if i == j:
            h[i] = h.get(i, Fraction(0)) - c / 2
            offset += c / 2
        else:
            J[(i, j)] = J.get((i, j), Fraction(0)) - c / 4
            h[i] = h.get(i, Fraction(0)) - c / 4
            h[j] = h.get(j, Fraction(0)) - c / 4
            offset += c / 4
    h = {i: c for i, c in sorted(h.items()) if c}
    J = {k: c for k, c in sorted(J.items()) if c}
    return IsingModel(q.dim, h, J, offset)


# --------------------------------------------------------------------------
# pipeline
# --------------------------------------------------------------------------


def lower(bp: BinaryProgram, scale_exponent: int = DEFAULT_SCALE,
          plan: PenaltyPlan | None = None) -> QuboModel:
    """Scale, normalize, add slacks, choose penalties and compose the QUBO."""
    scaled = scale_to_integers(bp, scale_exponent)
    reduced = normalize_constraints(scaled)
    equalities = add_slacks(reduced, drop_redundant=True)
    plan = derive_penalties(equalities, plan, scale_exponent)
    return compose_qubo(equalities, plan)


# --------------------------------------------------------------------------
# interchange files
# --------------------------------------------------------------------------


def qubo_to_text(q: QuboModel) -> str:
    lines = [f"{q.dim} {q.offset}"]
    lines += [f"{i} {j} {c}" for (i, j), c in q.quadratic.items()]
    return "\n".join(lines) + "\n"


def qubo_from_text(text: str) -> QuboModel:
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    dim, offset = int(rows[0][0]), int(rows[0][1])
    terms = {(int(i), int(j)): int(c) for i, j, c in rows[1:]}
    return QuboModel(dim, terms, offset)


def ising_to_text(model: IsingModel) -> str:
    lines = [f"{model.dim} {format_number(model.offset)}"]
    lines += [f"h {i} {format_number(c)}" for i, c in model.h.items()]
    lines += [f"J {j} {k} {format_number(c)}" for (j, k), c in model.J.items()]
    return "\n".join(lines) + "\n"


def ising_from_text(text: str) -> IsingModel:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    dim, offset = int(rows[0][0]), Fraction(rows[0][1])
    h: dict[int, Fraction] = {}
    J: dict[tuple[int, int], Fraction] = {}
    for row in rows[1:]:
        if row[0] == "h":
            h[int(row[1])] = Fraction(row[2])
        elif row[0] == "J":
            J[(int(row[1]), int(row[2]))] = Fraction(row[3])
        else:
            raise ValueError(f"unknown Ising record {row[0]!r}")
    return IsingModel(dim, h, J, offset)


def free_indices(q: QuboModel) -> list[int]:
    """Variables that are neither AND outputs nor slack bits."""
    if q.program is None:
        return list(range(q.dim))
    outputs = {y for y, _ in q.program.and_gates}
    slack = {i for idxs in q.slack_groups().values() for i in idxs}
    return [i for i in range(q.dim) if i not in outputs and i not in slack]
