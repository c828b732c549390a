"""JSON input schemas of the command-line experiments.

Every schema forbids unknown keys and converts itself into the validated
domain object with a ``to_*`` method.
"""

from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from coshflows.fokker_planck import Potential, named_potential
from coshflows.graph_system import MarkovGraph
from coshflows.kramers import KramersSetup
from coshflows.membrane import MembraneSetup
from coshflows.network_reduction import TwoTerminalNetwork
from coshflows.reaction_networks import ReactionNetwork


class GraphSpec(BaseModel):
    """``{nodes, pi, kappa: [[x, y, rate], ...], terminals?}``; ``pi`` is normalized on load."""

    model_config = ConfigDict(extra="forbid")

    nodes: list[str]
    pi: list[float]
    kappa: list[tuple[str, str, float]]
    terminals: tuple[str, str] | None = None

    @model_validator(mode="after")
    def _check_references(self) -> "GraphSpec":
        known = set(self.nodes)
        for x, y, _ in self.kappa:
            if x not in known or y not in known:
                raise ValueError(f"rate ({x}, {y}) refers to an unknown node")
        return self

    def to_graph(self) -> MarkovGraph:
        index = {node: i for i, node in enumerate(self.nodes)}
        kappa = np.zeros((len(self.nodes), len(self.nodes)))
        for x, y, rate in self.kappa:
            kappa[index[x], index[y]] = rate
        return MarkovGraph.build(self.nodes, kappa, self.pi)

    def to_network(self) -> TwoTerminalNetwork:
        if self.terminals is None:
            raise ValueError("graph has no terminals")
        a, b = self.terminals
        return TwoTerminalNetwork(graph=self.to_graph(), terminal_a=a, terminal_b=b)

    @classmethod
    def from_graph(cls, g: MarkovGraph, terminals: tuple[str, str] | None = None) -> "GraphSpec":
        rates = [
            (g.nodes[x], g.nodes[y], float(g.kappa[x, y]))
            for x, y in zip(*np.nonzero(g.kappa))
        ]
        return cls(nodes=list(g.nodes), pi=g.pi.tolist(), kappa=rates, terminals=terminals)


class ReactionEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    alpha: dict[str, float]
    beta: dict[str, float]
    D: float = 1.0
    E_act: float = 0.0


class ReactionSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    species: list[str]
    energies: list[float]
    reactions: list[ReactionEntry] = []
    inv_temp: float = 1.0

    def to_network(self) -> ReactionNetwork:
        return ReactionNetwork.from_dicts(
            self.species,
            self.energies,
            [entry.model_dump() for entry in self.reactions],
            inv_temp=self.inv_temp,
        )


class PotentialSpec(BaseModel):
    """A named built-in potential with its keyword parameters."""

    model_config = ConfigDict(extra="forbid")

    name: str
    params: dict[str, Any] = {}

    def to_callable(self) -> Potential:
        return named_potential(self.name, **self.params)


def _constant(value: float) -> PotentialSpec:
    return PotentialSpec(name="constant", params={"value": value})


class KramersSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    H: PotentialSpec = PotentialSpec(name="quartic_double_well")
    a: float = -1.0
    b: float = 1.0
    c: float = 0.0
    domain: tuple[float, float] = (-2.0, 2.0)
    eps: float = 0.1
    F: PotentialSpec | None = None
    m_upsilon: float = 1.0
    omega_vol: float = 1.0

    def to_setup(self) -> KramersSetup:
        return KramersSetup(
            H=self.H.to_callable(),
            a=self.a,
            b=self.b,
            c=self.c,
            domain=self.domain,
            eps=self.eps,
            F=None if self.F is None else self.F.to_callable(),
            m_upsilon=self.m_upsilon,
            omega_vol=self.omega_vol,
        )


class MembraneSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    a_minus: PotentialSpec = Field(default_factory=lambda: _constant(1.0))
    a_plus: PotentialSpec = Field(default_factory=lambda: _constant(1.0))
    a_star: PotentialSpec = Field(default_factory=lambda: _constant(1.0))
    V: PotentialSpec = Field(default_factory=lambda: _constant(0.0))
    F: PotentialSpec = Field(default_factory=lambda: _constant(0.0))
    eps: float = 0.1

    def to_setup(self) -> MembraneSetup:
        return MembraneSetup(
            a_minus=self.a_minus.to_callable(),
            a_plus=self.a_plus.to_callable(),
            a_star=self.a_star.to_callable(),
            V=self.V.to_callable(),
            F=self.F.to_callable(),
            eps=self.eps,
        )


InputSpec = GraphSpec | ReactionSpec | KramersSpec | MembraneSpec
