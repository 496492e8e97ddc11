"""Classical stand-ins for a quantum annealer.

``solve_exhaustive`` returns the exact set of ground states.  Small models
are enumerated outright.  Models produced by the lowering pipeline keep
their penalty structure, which gives an exact branch-and-bound: every
subtree is either visited or discarded by a valid lower bound, and slack
bits are minimized in closed form at the leaves.

``sample_sa`` is a single-bit-flip Metropolis annealer over exact integer
energies.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .lowering import QuboModel, and_penalty, slack_patterns
from .rational import format_number


class TooLarge(RuntimeError):
    """The requested exact search exceeds its size budget."""


# --------------------------------------------------------------------------
# sample sets
# --------------------------------------------------------------------------


@dataclass
class SampleSet:
    """Samples as (bitstring, energy, multiplicity), sorted by energy then bitstring."""

    samples: list[tuple[str, int, int]]
    truncated: bool = False

    def __post_init__(self):
        merged: dict[str, list[int]] = {}
        for bits, energy, mult in self.samples:
            if bits in merged:
                if merged[bits][0] != energy:
                    raise ValueError(f"conflicting energies for {bits}")
                merged[bits][1] += mult
            else:
                merged[bits] = [int(energy), int(mult)]
        self.samples = sorted(((b, e, m) for b, (e, m) in merged.items()), key=lambda s: (s[1], s[0]))

    @classmethod
    def from_bits(cls, rows: Iterable[Sequence[int]], energies: Iterable[int]) -> "SampleSet":
        return cls([("".join(str(int(b)) for b in row), int(e), 1) for row, e in zip(rows, energies)])

    @property
    def total(self) -> int:
        return sum(m for _, _, m in self.samples)

    @property
    def min_energy(self) -> int | None:
        return self.samples[0][1] if self.samples else None

    @property
    def first(self) -> tuple[str, int, int]:
        return self.samples[0]

    def energies(self) -> list[int]:
        return [e for _, e, m in self.samples for _ in range(m)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("bitstring,energy,multiplicity\n")
        for bits, energy, mult in self.samples:
            buf.write(f"{bits},{energy},{mult}\n")
        return buf.getvalue()


def bits_of(text: str) -> list[int]:
    return [int(ch) for ch in text]


def ground_state_probability(s: SampleSet, ground_energy: int) -> float:
    if s.total == 0:
        return 0.0
    hits = sum(m for _, e, m in s.samples if e == ground_energy)
    return hits / s.total


def energy_histogram(s: SampleSet, bins: int) -> list[tuple[tuple[Fraction, Fraction], int]]:
    """Equal-width bins over [min energy, max energy]; counts sum to the multiplicity."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if not s.samples:
        return []
    lo = s.samples[0][1]
    hi = max(e for _, e, _ in s.samples)
    width = Fraction(hi - lo, bins)
    counts = [0] * bins
    for _, e, m in s.samples:
        k = 0 if hi == lo else min(int((e - lo) * bins // (hi - lo)), bins - 1)
        counts[k] += m
    return [((lo + k * width, lo + (k + 1) * width), counts[k]) for k in range(bins)]


def histogram_csv(hist) -> str:
    lines = ["bin_lo,bin_hi,count"]
    lines += [f"{format_number(a)},{format_number(b)},{n}" for (a, b), n in hist]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# exact search
# --------------------------------------------------------------------------


def _enumerate_plain(q: QuboModel, max_minima: int) -> SampleSet:
    dim = q.dim
    if dim == 0:
        return SampleSet([("", q.offset, 1)])
    n_lo = min(dim, 12)
    n_hi = dim - n_lo
    Q = np.zeros((dim, dim), dtype=np.int64)
    for (i, j), c in q.quadratic.items():
        Q[i, j] += c
    masks = np.arange(1 << n_lo, dtype=np.int64)
    X_lo = ((masks[:, None] >> np.arange(n_lo)) & 1).astype(np.int64)
    Q_lo = Q[:n_lo, :n_lo]
    E_lo = np.einsum("si,ij,sj->s", X_lo, Q_lo, X_lo)
    Q_cross = Q[n_lo:, :n_lo] + Q[:n_lo, n_lo:].T
    Q_hi = Q[n_lo:, n_lo:]

    best = None
    hits: list[tuple[int, np.ndarray]] = []
    count = 0
    for h in range(1 << n_hi):
        x_hi = np.array([(h >> p) & 1 for p in range(n_hi)], dtype=np.int64)
        e_hi = int(x_hi @ Q_hi @ x_hi) if n_hi else 0
        field = x_hi @ Q_cross if n_hi else np.zeros(n_lo, dtype=np.int64)
        energies = E_lo + X_lo @ field + e_hi + q.offset
        m = int(energies.min())
        if best is None or m < best:
            best, hits, count = m, [], 0
        if m == best:
            idx = np.flatnonzero(energies == m)
            count += len(idx)
            if len(hits) < max_minima:
                hits.append((h, idx[: max_minima]))
    rows = []
    for h, idx in hits:
        hi_bits = "".join(str((h >> p) & 1) for p in range(n_hi))
        for m in idx:
            lo_bits = "".join(str((int(m) >> p) & 1) for p in range(n_lo))
            rows.append((lo_bits + hi_bits, best, 1))
    rows.sort(key=lambda r: r[0])
    truncated = count > max_minima
    return SampleSet(rows[:max_minima], truncated=truncated)


class _Search:
    """Depth-first branch-and-bound over the non-slack bits of a lowered model."""

    def __init__(self, q: QuboModel, max_nodes: int, max_minima: int):
        bp, plan = q.program, q.plan
        self.q = q
        self.max_nodes = max_nodes
        self.max_minima = max_minima
        groups = q.slack_groups()
        slack = {i for idxs in groups.values() for i in idxs}
        self.order = [i for i in range(q.dim) if i not in slack]

        n_con = len(bp.constraints)
        self.weight = [plan.weight(c.label) for c in bp.constraints]
        self.lmin = [0] * n_con
        self.lmax = [0] * n_con
        self.var_cons: list[list[tuple[int, int]]] = [[] for _ in range(q.dim)]
        self.slack_of: list[tuple[list[int], tuple[int, ...], bool] | None] = [None] * n_con
        for c, con in enumerate(bp.constraints):
            idxs = groups.get(con.label, [])
            weights = tuple(int(con.lhs.terms[i]) for i in idxs)
            span = sum(weights)
            contiguous = set(slack_patterns(weights)) == set(range(span + 1))
            if idxs:
                self.slack_of[c] = (idxs, weights, contiguous)
            lo = hi = int(con.lhs.constant)
            for i, coef in con.lhs.terms.items():
                if i in slack:
                    continue
                coef = int(coef)
                self.var_cons[i].append((c, coef))
                if coef < 0:
                    lo += coef
                else:
                    hi += coef
            self.lmin[c], self.lmax[c] = lo, hi + span
        self.pen = [self._con_pen(c) for c in range(n_con)]

        self.gates = [(y, a, b) for y, (a, b) in bp.and_gates]
        self.gate_w = plan.gate_weight
        self.var_gates: list[list[int]] = [[] for _ in range(q.dim)]
        for g, (y, a, b) in enumerate(self.gates):
            for v in {y, a, b}:
                self.var_gates[v].append(g)
        self.value: list[int | None] = [None] * q.dim
        self.gate_pen = [self._gate_pen(g) for g in range(len(self.gates))]

        self.obj = [0] * q.dim
        for i, c in bp.objective.terms.items():
            self.obj[i] = -int(c)  # energy contribution per unit
        self.fixed_energy = -int(bp.objective.constant)
        self.free_obj_lb = sum(min(0, c) for c in self.obj)
        self.total = sum(self.pen) + sum(self.gate_pen)

        self.best = math.inf
        self.collect = False  # keep every leaf under ``best`` instead of tightening it
        self.minima: list[tuple[int, ...]] = []
        self.n_minima = 0
        self.nodes = 0

    def _con_pen(self, c: int) -> int:
        lo, hi = self.lmin[c], self.lmax[c]
        if lo > 0:
            return self.weight[c] * lo * lo
        if hi < 0:
            return self.weight[c] * hi * hi
        return 0

    def _gate_pen(self, g: int) -> int:
        y, a, b = self.gates[g]
        val = self.value
        best = None
        for vy in ((val[y],) if val[y] is not None else (0, 1)):
            for va in ((val[a],) if val[a] is not None else (0, 1)):
                if a == b:
                    cands = [and_penalty(va, va, vy)]
                else:
                    cands = [and_penalty(va, vb, vy) for vb in ((val[b],) if val[b] is not None else (0, 1))]
                m = min(cands)
                if best is None or m < best:
                    best = m
        return self.gate_w * best

    def bound(self) -> int:
        return self.fixed_energy + self.free_obj_lb + self.total

    def assign(self, v: int, bit: int) -> list:
        trail = []
        lmin, lmax, pen = self.lmin, self.lmax, self.pen
        for c, a in self.var_cons[v]:
            trail.append((c, lmin[c], lmax[c], pen[c]))
            if a > 0:
                if bit:
                    lmin[c] += a
                else:
                    lmax[c] -= a
            elif bit:
                lmax[c] += a
            else:
                lmin[c] -= a
            new = self._con_pen(c)
            self.total += new - pen[c]
            pen[c] = new
        self.value[v] = bit
        gtrail = []
        for g in self.var_gates[v]:
            old = self.gate_pen[g]
            new = self._gate_pen(g)
            gtrail.append((g, old))
            self.total += new - old
            self.gate_pen[g] = new
        c = self.obj[v]
        if c:
            self.free_obj_lb -= min(0, c)
            self.fixed_energy += c * bit
        return [trail, gtrail]

    def undo(self, v: int, bit: int, record) -> None:
        trail, gtrail = record
        for g, old in reversed(gtrail):
            self.total += old - self.gate_pen[g]
            self.gate_pen[g] = old
        for c, lo, hi, p in reversed(trail):
            self.lmin[c], self.lmax[c] = lo, hi
            self.total += p - self.pen[c]
            self.pen[c] = p
        self.value[v] = None
        c = self.obj[v]
        if c:
            self.free_obj_lb += min(0, c)
            self.fixed_energy -= c * bit

    def leaf(self) -> None:
        energy = self.bound()
        exact = all(s is None or s[2] for s in self.slack_of)
        if not exact:
            energy = self._exact_leaf_energy()
        if energy > self.best:
            return
        if self.collect:
            self.n_minima += 1
            if len(self.minima) < self.max_minima:
                self.minima.append(tuple(self.value[i] for i in self.order))
            return
        if energy < self.best or not self.minima:
            self.best = energy
            self.minima = []
            self.n_minima = 0
        self.n_minima += 1
        if len(self.minima) < self.max_minima:
            self.minima.append(tuple(self.value[i] for i in self.order))

    def _exact_leaf_energy(self) -> int:
        energy = self.fixed_energy + sum(self.gate_pen)
        for c, pen in enumerate(self.pen):
            info = self.slack_of[c]
            if info is None or info[2]:
                energy += pen
                continue
            rest = self.lmin[c]
            energy += self.weight[c] * min((rest + s) ** 2 for s in slack_patterns(info[1]))
        return energy

    def run(self, upper_bound: int | None = None) -> None:
        """Search with a growing energy threshold until some leaf falls under it.

        A pass with threshold T visits every subtree whose bound is <= T, so
        the first pass that reaches a leaf has seen every assignment at or
        below the final minimum.
        """
        ceiling = self.q.energy([0] * self.q.dim)
        if upper_bound is not None:
            ceiling = min(ceiling, upper_bound)
        step = max(1, min((abs(c) for c in self.obj if c), default=1))
        root = self.bound()
        k = 0
        while True:
            threshold = min(ceiling, root + step * ((1 << k) - 1))
            self.best = threshold
            self.minima, self.n_minima = [], 0
            self._visit(0)
            if self.minima or threshold >= ceiling:
                return
            k += 1

    def _visit(self, depth: int) -> None:
        order = self.order
        if depth == len(order):
            self.leaf()
            return
        v = order[depth]
        children = []
        for bit in (0, 1):
            rec = self.assign(v, bit)
            children.append((self.bound(), bit))
            self.undo(v, bit, rec)
        children.sort()
        for bnd, bit in children:
            if bnd > self.best:
                continue
            self.nodes += 1
            if self.nodes > self.max_nodes:
                raise TooLarge(f"exact search exceeded {self.max_nodes} nodes")
            rec = self.assign(v, bit)
            self._visit(depth + 1)
            self.undo(v, bit, rec)

    def full_bits(self, partial: tuple[int, ...]) -> list[int]:
        bits = [0] * self.q.dim
        for i, b in zip(self.order, partial):
            bits[i] = b
        bp = self.q.program
        for c, info in enumerate(self.slack_of):
            if info is None:
                continue
            idxs, weights, _ = info
            con = bp.constraints[c]
            rest = int(con.lhs.constant) + sum(
                int(a) for i, a in con.lhs.terms.items() if i not in idxs and bits[i]
            )
            table = slack_patterns(weights)
            target = min(table, key=lambda s: (abs(rest + s), s))
            for p, i in enumerate(idxs):
                bits[i] = table[target] >> p & 1
        return bits


def _structured_rows(q: QuboModel, search: _Search) -> list[tuple[str, int, int]]:
    rows = []
    for partial in search.minima:
        bits = search.full_bits(partial)
        rows.append(("".join(map(str, bits)), q.energy(bits), 1))
    return rows


def enumerate_below(q: QuboModel, threshold: int, *, max_nodes: int = 5_000_000,
                    max_rows: int = 1 << 20) -> SampleSet:
    """Every assignment of the non-slack bits whose best slack completion has energy <= threshold.

    Slack bits are reported in their canonical pattern.  Any full assignment
    at or below ``threshold`` agrees with one of the rows on its non-slack bits.
    """
    if q.program is None:
        raise ValueError("model carries no penalty structure")
    search = _Search(q, max_nodes, max_rows)
    search.collect = True
    search.best = threshold
    search._visit(0)
    rows = _structured_rows(q, search)
    if any(e > threshold for _, e, _ in rows):
        raise RuntimeError("penalty structure disagrees with the QUBO coefficients")
    return SampleSet(rows, truncated=search.n_minima > len(rows))


def solve_exhaustive(q: QuboModel, bit_limit: int = 24, *, max_nodes: int = 5_000_000,
                     max_minima: int = 1 << 20, structured: bool | None = None,
                     upper_bound: int | None = None) -> SampleSet:
    """Exact ground states of ``q``.

    Unstructured models (or ``structured=False``) are enumerated outright and
    are limited to ``bit_limit`` bits.  Lowered models are searched with
    bound pruning over their non-slack bits, limited by ``max_nodes``; there
    the ground states are listed once per assignment of the non-slack bits,
    with slack bits in their canonical pattern.
    """
    use_structure = q.program is not None if structured is None else structured
    if use_structure:
        if q.program is None:
            raise ValueError("model carries no penalty structure")
        search = _Search(q, max_nodes, max_minima)
        search.run(upper_bound)
        rows = _structured_rows(q, search)
        if any(e != search.best for _, e, _ in rows):
            raise RuntimeError("penalty structure disagrees with the QUBO coefficients")
        return SampleSet(rows, truncated=search.n_minima > len(rows))
    if q.dim > bit_limit:
        raise TooLarge(f"{q.dim} bits exceed the enumeration limit of {bit_limit}")
    return _enumerate_plain(q, max_minima)


# --------------------------------------------------------------------------
# simulated annealing
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AnnealSchedule:
    """Geometric inverse-temperature ladder.

    ``beta_initial`` and ``beta_final`` are dimensionless; the sampler divides
    them by energy scales taken from the model (see :func:`beta_ladder`).
    """

    sweeps: int = 1000
    beta_initial: float = 0.1
    beta_final: float = 10.0
    restarts: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if not 0 < self.beta_initial < self.beta_final:
            raise ValueError("need 0 < beta_initial < beta_final")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


def beta_ladder(q: QuboModel, sched: AnnealSchedule) -> np.ndarray:
    """Hot end relative to the largest coefficient, cold end to the smallest."""
    mags = [abs(c) for c in q.quadratic.values()]
    if not mags:
        return np.full(sched.sweeps, sched.beta_final)
    hot = sched.beta_initial / max(mags)
    cold = sched.beta_final / min(mags)
    if sched.sweeps == 1:
        return np.array([cold])
    t = np.arange(sched.sweeps) / (sched.sweeps - 1)
    return hot * (cold / hot) ** t


@njit(cache=True, nogil=True)
def _anneal(linear, indptr, indices, data, betas, uniforms, x):
    n = x.shape[0]
    field = linear.copy()
    for i in range(n):
        if x[i]:
            for p in range(indptr[i], indptr[i + 1]):
                field[indices[p]] += data[p]
    for s in range(betas.shape[0]):
        beta = betas[s]
        for i in range(n):
            delta = field[i] if x[i] == 0 else -field[i]
            if delta <= 0 or uniforms[s, i] < math.exp(-beta * delta):
                x[i] ^= 1
                if x[i]:
                    for p in range(indptr[i], indptr[i + 1]):
                        field[indices[p]] += data[p]
                else:
                    for p in range(indptr[i], indptr[i + 1]):
                        field[indices[p]] -= data[p]
    return x


def _energies(q: QuboModel, X: np.ndarray) -> np.ndarray:
    if not q.quadratic:
        return np.full(X.shape[0], q.offset, dtype=np.int64)
    keys = np.array(list(q.quadratic.keys()), dtype=np.int64)
    vals = np.array(list(q.quadratic.values()), dtype=np.int64)
    both = X[:, keys[:, 0]] & X[:, keys[:, 1]]
    return both.astype(np.int64) @ vals + q.offset


def sample_sa(q: QuboModel, sched: AnnealSchedule, num_samples: int, *, workers: int = 1) -> SampleSet:
    """Draw ``num_samples`` annealed states; sample r is seeded with ``seed ^ r``."""
    if q.dim == 0:
        return SampleSet([("", q.offset, num_samples)])
    linear, indptr, indices, data = q.arrays()
    betas = beta_ladder(q, sched)
    out = np.zeros((num_samples, q.dim), dtype=np.int8)

    def run(r: int) -> None:
        rng = np.random.default_rng(sched.seed ^ r)
        best_x, best_e = None, None
        for _ in range(sched.restarts):
            x = rng.integers(0, 2, q.dim, dtype=np.int8)
            uniforms = rng.random((sched.sweeps, q.dim))
            x = _anneal(linear, indptr, indices, data, betas, uniforms, x)
            e = int(_energies(q, x[None, :])[0])
            if best_e is None or e < best_e:
                best_x, best_e = x.copy(), e
        out[r] = best_x

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, range(num_samples)))
    else:
        for r in range(num_samples):
            run(r)
    energies = _energies(q, out)
    return SampleSet.from_bits(out.tolist(), energies.tolist())
