"""Qubit accounting against a discretizing baseline, and scale sweeps."""

from __future__ import annotations

import io
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from .formulation import Alpha, AuxAnd, Beta, Lambda, Pi, SlackBit, assemble
from .lowering import DEFAULT_SCALE, QuboModel, lower
from .network import NetworkModel
from .solvers import (
    AnnealSchedule,
    SampleSet,
    energy_histogram,
    ground_state_probability,
    sample_sa,
    solve_exhaustive,
)


@dataclass(frozen=True)
class QubitBudget:
    primary_bits: int
    aux_and_bits: int
    slack_bits: int
    total: int
    n2b_density: Fraction

    def to_dict(self) -> dict:
        return {
            "primary_bits": self.primary_bits,
            "aux_and_bits": self.aux_and_bits,
            "slack_bits": self.slack_bits,
            "total": self.total,
            "n2b_density": float(self.n2b_density),
        }


@dataclass(frozen=True)
class EncodingSpec:
    """Bits per continuous variable in the baseline: fractional, integer, plus a sign bit."""

    m_fractional: int = 4
    m_integer: int = 4
    continuous_variable_count: int | None = None  # None: P and Q per branch, voltage per node

    def __post_init__(self):
        if self.m_fractional < 0 or self.m_integer < 0:
            raise ValueError("bit counts must be nonnegative")


def qmgf_budget(q: QuboModel) -> QubitBudget:
    reg = q.registry
    primary = sum(1 for d in reg if isinstance(d, (Alpha, Beta, Lambda, Pi)))
    aux = reg.count(AuxAnd)
    slack = reg.count(SlackBit)
    nodes, branches = reg.shape
    support = reg.count(Pi) + sum(1 for d in reg.fixed if isinstance(d, Pi))
    density = Fraction(support, nodes * branches) if nodes * branches else Fraction(0)
    return QubitBudget(primary, aux, slack, q.dim, density)


def discrete_bit_count(net: NetworkModel) -> int:
    """Branch status, parent and pickup bits, the part shared with the baseline."""
    sources = net.source_set
    betas = sum((b.a not in sources) + (b.b not in sources) for b in net.branch_ids)
    return len(net.branches) + betas + len(net.loaded_nodes)


def dmgf_budget(net: NetworkModel, enc: EncodingSpec = EncodingSpec()) -> int:
    count = enc.continuous_variable_count
    if count is None:
        count = 2 * len(net.branches) + len(net.nodes)
    return (enc.m_fractional + enc.m_integer + 1) * count + discrete_bit_count(net)


@dataclass(frozen=True)
class SweepRow:
    fixture: str
    budget: QubitBudget
    qubits_dmgf: int
    ground_energy: int
    ground_prob: float
    min_energy: int
    samples: int
    histogram: list

    def csv_line(self) -> str:
        return (f"{self.fixture},{self.budget.total},{self.qubits_dmgf},"
                f"{self.ground_prob!r},{self.min_energy},{self.samples}")


def scale_sweep(fixtures: Iterable[tuple[str, NetworkModel]], sched: AnnealSchedule, samples: int, *,
                enc: EncodingSpec = EncodingSpec(), scale_exponent: int = DEFAULT_SCALE,
                bins: int = 10, workers: int = 1,
                ground_energies: dict[str, int] | None = None) -> list[SweepRow]:
    """Budget, annealing statistics and energy histogram per fixture.

    Ground energies come from the exact search unless supplied by name.
    """
    rows = []
    for name, net in fixtures:
        q = lower(assemble(net), scale_exponent)
        if ground_energies and name in ground_energies:
            ground = ground_energies[name]
        else:
            ground = solve_exhaustive(q).min_energy
        s: SampleSet = sample_sa(q, sched, samples, workers=workers)
        rows.append(SweepRow(
            fixture=name,
            budget=qmgf_budget(q),
            qubits_dmgf=dmgf_budget(net, enc),
            ground_energy=ground,
            ground_prob=ground_state_probability(s, ground),
            min_energy=s.min_energy,
            samples=s.total,
            histogram=energy_histogram(s, bins),
        ))
    return rows


def sweep_csv(rows: Iterable[SweepRow]) -> str:
    buf = io.StringIO()
    buf.write("fixture,qubits_qmgf,qubits_dmgf,ground_prob,min_energy,samples\n")
    for row in rows:
        buf.write(row.csv_line() + "\n")
    return buf.getvalue()
