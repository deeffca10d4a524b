"""Cached pipeline for one resolved theory: forms, Legendre map, constraints, lifts."""

from __future__ import annotations

from functools import cached_property

from .constraints import DEFAULT_MAX_ITER, run_constraint_algorithm
from .dsl import Theory
from .exterior import DiffForm, VectorField
from .geometry import GeometryError, HamiltonianTheory, LagrangianTheory, hamiltonize, legendre, liouville_forms
from .lifts import jet_prolong, lift_to_E, lift_to_J1PiStar, lift_to_MPi, lift_to_PSub

SPACES = ("E", "J1", "MPI", "J1STAR", "P0")


class TheorySession:
    def __init__(self, theory: Theory, seed: int = 0):
        self.theory = theory
        self.tower = theory.tower
        self.seed = seed
        self._reports: dict = {}

    @property
    def max_iter(self) -> int:
        return self.theory.options.get("max_iter", DEFAULT_MAX_ITER)

    # -- theories ---------------------------------------------------------------------
    @cached_property
    def lagrangian_theory(self) -> LagrangianTheory | None:
        if self.theory.lagrangian is None:
            return None
        return LagrangianTheory(self.tower, self.theory.lagrangian, self.theory.assumptions, self.theory.name)

    @cached_property
    def legendre_map(self):
        if self.lagrangian_theory is None:
            return None
        return legendre(self.lagrangian_theory)

    @cached_property
    def hamiltonian_theory(self) -> HamiltonianTheory:
        lag = self.lagrangian_theory
        if lag is not None:
            return hamiltonize(lag, self.theory.hamiltonian, self.legendre_map)
        if self.theory.hamiltonian is None:
            raise GeometryError("theory declares neither a Lagrangian nor a Hamiltonian")
        return HamiltonianTheory(self.tower.chart("J1STAR"), self.theory.hamiltonian,
                                 assumptions=self.theory.assumptions, name=self.theory.name)

    def require_lagrangian(self) -> LagrangianTheory:
        if self.lagrangian_theory is None:
            raise GeometryError("theory declares no Lagrangian")
        return self.lagrangian_theory

    # -- forms per space ------------------------------------------------------------------
    def forms(self, space: str) -> tuple[DiffForm, DiffForm]:
        """(Theta, Omega) attached to ``space``; P0 equals J1STAR for regular theories."""
        if space == "J1":
            lag = self.require_lagrangian()
            return lag.theta, lag.omega
        if space == "MPI":
            return liouville_forms(self.tower.chart("MPI"))
        if space in ("J1STAR", "P0"):
            ham = self.hamiltonian_theory
            if space == "J1STAR" and ham.singular:
                raise GeometryError("singular theory: the Hamilton-Cartan forms live on P0")
            return ham.theta, ham.omega
        raise GeometryError(f"no multisymplectic form on {space}")

    def chart(self, space: str):
        if space == "P0":
            return self.hamiltonian_theory.chart
        return self.tower.chart(space)

    # -- constraints ------------------------------------------------------------------------
    def constraint_report(self, side: str, max_iter: int | None = None):
        key = (side, max_iter or self.max_iter)
        if key not in self._reports:
            if side == "lagrangian":
                omega = self.require_lagrangian().omega
            else:
                omega = self.hamiltonian_theory.omega
            self._reports[key] = run_constraint_algorithm(omega, side, key[1], self.seed)
        return self._reports[key]

    def final_constraints(self, space: str) -> list:
        if space == "J1" and self.lagrangian_theory is not None and not self.lagrangian_theory.is_regular:
            return self.constraint_report("lagrangian").final
        if space == "P0" and self.hamiltonian_theory.singular:
            return self.constraint_report("hamiltonian").final
        return []

    # -- lifts --------------------------------------------------------------------------------
    def generator(self, name: str):
        if name not in self.theory.generators:
            raise KeyError(f"unknown generator {name!r}; declared: {sorted(self.theory.generators)}")
        return self.theory.generators[name]

    def xi_e(self, name: str) -> VectorField:
        return lift_to_E(self.generator(name), self.tower)

    def lift(self, name: str, space: str, strict: bool = False) -> VectorField:
        xi = self.xi_e(name)
        if space == "E":
            return xi
        if space == "J1":
            return jet_prolong(xi)
        if space == "MPI":
            return lift_to_MPi(xi)
        if space == "J1STAR":
            return lift_to_J1PiStar(xi)
        if space == "P0":
            return lift_to_PSub(xi, self.hamiltonian_theory.chart, strict=strict)
        raise GeometryError(f"unknown space {space!r}; choose from {SPACES}")


__all__ = ["TheorySession", "SPACES"]
