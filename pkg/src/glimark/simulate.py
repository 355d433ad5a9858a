"""Seeded generators for the benchmark scenarios A-G.

Every scenario uses 10 independent groups of 10 standard-normal variables
(columns ``G1_1`` ... ``G10_10``). The first ``(10, 8, 6, 4, 2, 1)``
variables of groups 1-6 are active with coefficients drawn uniformly from
``{-1, +1}``; scenario E instead keeps five active variables in group 1 only.

Randomness comes from numpy's PCG64 with one ``SeedSequence`` stream per
``(seed, scenario, purpose)``, so each draw is reproducible on its own and
unaffected by changes to the others.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .data import DataSet
from .glm import Family
from .kernels import KernelSpec, PartitionManifest, linear, polynomial, rbf

N_GROUPS = 10
GROUP_SIZE = 10
ACTIVE_COUNTS = (10, 8, 6, 4, 2, 1, 0, 0, 0, 0)
RBF_SIGMA = 10.0
INTERACTION_VALUE = 1.5


class Scenario(str, enum.Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"
    E = "E"
    F = "F"
    G = "G"


class Outcome(str, enum.Enum):
    BINARY = "binary"
    COUNT = "count"


_PURPOSE = {"features": 0, "beta": 1, "pairs": 2, "gamma": 3, "outcome": 4}
# fraction of candidate pairs carrying a nonzero interaction
_PAIR_FRACTION = {Scenario.D: 0.5, Scenario.E: 0.7}


def outcome_of(scenario: Scenario) -> Outcome:
    return Outcome.COUNT if scenario is Scenario.G else Outcome.BINARY


def family_of(scenario: Scenario) -> Family:
    return Family.POISSON if outcome_of(scenario) is Outcome.COUNT else Family.BINOMIAL


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: Scenario
    n: int = 400
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(str(self.scenario).upper()
                                                      if not isinstance(self.scenario, Scenario)
                                                      else self.scenario))
        if self.n < 1:
            raise ValueError("n must be positive")

    @property
    def outcome(self) -> Outcome:
        return outcome_of(self.scenario)


def rng_for(spec: ScenarioSpec, purpose: str) -> np.random.Generator:
    code = list(Scenario).index(spec.scenario)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([spec.seed, code, _PURPOSE[purpose]])))


def feature_names() -> list[str]:
    return [f"G{g}_{k}" for g in range(1, N_GROUPS + 1) for k in range(1, GROUP_SIZE + 1)]


def active_counts(scenario: Scenario) -> tuple[int, ...]:
    if scenario is Scenario.E:
        return (5,) + (0,) * (N_GROUPS - 1)
    return ACTIVE_COUNTS


@dataclass
class Coefficients:
    beta: dict[int, np.ndarray]                       # group (1-based) -> coefficients of its active vars
    pairs: list[tuple[int, int]] = field(default_factory=list)   # candidate (j, k), 1-based within G1
    gamma: np.ndarray = field(default_factory=lambda: np.zeros(0))


def draw_coefficients(spec: ScenarioSpec) -> Coefficients:
    counts = active_counts(spec.scenario)
    rng = rng_for(spec, "beta")
    beta = {g + 1: rng.choice(np.array([-1.0, 1.0]), size=c) for g, c in enumerate(counts) if c}
    coefs = Coefficients(beta)
    if spec.scenario in _PAIR_FRACTION:
        m = counts[0]
        pairs = list(itertools.combinations(range(1, m + 1), 2))
        k_active = int(math.floor(_PAIR_FRACTION[spec.scenario] * len(pairs) + 0.5))
        chosen = rng_for(spec, "pairs").choice(len(pairs), size=k_active, replace=False)
        signs = rng_for(spec, "gamma").choice(np.array([-1.0, 1.0]), size=k_active)
        gamma = np.zeros(len(pairs))
        gamma[np.sort(chosen)] = INTERACTION_VALUE * signs
        coefs.pairs, coefs.gamma = pairs, gamma
    return coefs


def _group(Z: np.ndarray, g: int) -> np.ndarray:
    return Z[:, (g - 1) * GROUP_SIZE:g * GROUP_SIZE]


def _lin(Z, coefs: Coefficients, g: int, transform=None) -> np.ndarray:
    beta = coefs.beta[g]
    zg = _group(Z, g)[:, :beta.shape[0]]
    if transform is not None:
        zg = transform(zg)
    return zg @ beta


def _interactions(Z, coefs: Coefficients) -> np.ndarray:
    z1 = _group(Z, 1)
    out = np.zeros(Z.shape[0])
    for (j, k), gam in zip(coefs.pairs, coefs.gamma):
        if gam != 0.0:
            out += gam * z1[:, j - 1] * z1[:, k - 1]
    return out


def true_f(scenario: Scenario | str, Z: np.ndarray, coefs: Coefficients) -> np.ndarray:
    """Noise-free linear predictor of a scenario at feature rows ``Z``."""
    s = Scenario(scenario)
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if s is Scenario.A:
        return sum(_lin(Z, coefs, g) for g in range(1, 7)) + 1.0
    if s is Scenario.B:
        return (_lin(Z, coefs, 1, lambda z: z ** 3) + _lin(Z, coefs, 2, np.square)
                + _lin(Z, coefs, 1) + 1.0)
    if s is Scenario.C:
        return 3.0 * sum(_lin(Z, coefs, g, np.exp) for g in range(1, 7)) + _lin(Z, coefs, 4) + 1.0
    if s is Scenario.D:
        return _lin(Z, coefs, 1) + _lin(Z, coefs, 2) + _interactions(Z, coefs) + 1.0
    if s is Scenario.E:
        return _lin(Z, coefs, 1) + _interactions(Z, coefs) + 1.0
    first = np.abs(Z[:, 0::GROUP_SIZE]).sum(axis=1)
    second = Z[:, 1::GROUP_SIZE].sum(axis=1)
    sq3 = _lin(Z, coefs, 3, np.square)
    lin4 = _lin(Z, coefs, 4)
    if s is Scenario.F:
        return (3.0 * np.sin(2.0 * first + 1.0) + np.exp(0.0001 * second - 2.0)
                + 100.0 * sq3 + lin4 + 1.0)
    return (10.0 * np.sin(50.0 * first + 1.0) + 25.0 * np.exp(0.1 * second - 2.0)
            + 3.0 * sq3 + 5.0 * lin4 + 1.0) / 20.0


def active_mask(scenario: Scenario | str) -> np.ndarray:
    """``(10, 10)`` boolean mask of the variables entering the true function."""
    s = Scenario(scenario)
    mask = np.zeros((N_GROUPS, GROUP_SIZE), dtype=bool)
    counts = active_counts(s)
    if s in (Scenario.A, Scenario.C):
        groups = range(1, 7)
    elif s is Scenario.B:
        groups = (1, 2)
    elif s is Scenario.D:
        groups = (1, 2)
    elif s is Scenario.E:
        groups = (1,)
    else:
        mask[:, :2] = True
        groups = (3, 4)
    for g in groups:
        mask[g - 1, :counts[g - 1]] = True
    return mask


@dataclass
class SimulatedDataset:
    spec: ScenarioSpec
    features: np.ndarray
    columns: list[str]
    f_true: np.ndarray
    y: np.ndarray
    coefficients: Coefficients
    active: np.ndarray

    @property
    def family(self) -> Family:
        return family_of(self.spec.scenario)

    @property
    def active_pairs(self) -> list[tuple[int, int]]:
        c = self.coefficients
        return [p for p, g in zip(c.pairs, c.gamma) if g != 0.0]

    def to_dataset(self, manifest: PartitionManifest | None = None) -> DataSet:
        if manifest is None:
            manifest = scenario_manifest(self.spec)[0]
        return DataSet(self.features, list(self.columns), y=self.y, family=self.family,
                       manifest=manifest)

    def truth(self) -> dict:
        c = self.coefficients
        return {
            "scenario": self.spec.scenario.value,
            "seed": self.spec.seed,
            "n": self.spec.n,
            "outcome": self.spec.outcome.value,
            "beta": {f"G{g}": [float(v) for v in b] for g, b in c.beta.items()},
            "active_mask": {f"G{g + 1}": [bool(v) for v in row] for g, row in enumerate(self.active)},
            "interaction_pairs": [[f"G1_{j}", f"G1_{k}"] for j, k in c.pairs],
            "gamma": [float(v) for v in c.gamma],
            "active_interaction_pairs": [[f"G1_{j}", f"G1_{k}"] for j, k in self.active_pairs],
            "f_true": [float(v) for v in self.f_true],
        }


def generate(spec: ScenarioSpec) -> SimulatedDataset:
    """Draw features, coefficients and outcomes for one replicate."""
    Z = rng_for(spec, "features").standard_normal((spec.n, N_GROUPS * GROUP_SIZE))
    coefs = draw_coefficients(spec)
    f = true_f(spec.scenario, Z, coefs)
    rng = rng_for(spec, "outcome")
    if spec.outcome is Outcome.COUNT:
        y = rng.poisson(np.exp(f)).astype(float)
    else:
        y = (rng.random(spec.n) < expit(f)).astype(float)
    return SimulatedDataset(spec, Z, feature_names(), f, y, coefs, active_mask(spec.scenario))


# ---------------------------------------------------------------------------
# Model architectures
# ---------------------------------------------------------------------------

_DEFAULT_VARIANT = {Scenario.A: "linear", Scenario.B: "poly", Scenario.C: "rbf", Scenario.D: "poly",
                    Scenario.E: "poly", Scenario.F: "full", Scenario.G: "full"}
VARIANTS = {Scenario.A: ("linear", "rbf"), Scenario.B: ("linear", "poly"),
            Scenario.C: ("linear", "rbf"), Scenario.D: ("linear", "poly"),
            Scenario.E: ("poly", "rbf"), Scenario.F: ("full",), Scenario.G: ("full",)}


def _manifest(individuals: bool) -> PartitionManifest:
    names = feature_names()
    groups = {f"G{g}": names[(g - 1) * GROUP_SIZE:g * GROUP_SIZE] for g in range(1, N_GROUPS + 1)}
    level_of = {g: 0 for g in groups}
    levels = ["group"]
    parent = {}
    if individuals:
        levels.append("individual")
        for name in names:
            groups[name] = [name]
            level_of[name] = 1
            parent[name] = name.split("_")[0]
    return PartitionManifest(levels, groups, level_of, parent)


def scenario_manifest(spec: ScenarioSpec, variant: str | None = None):
    """Partition manifest, kernel list and level assignment for a scenario.

    Returns ``(manifest, kernels, assignment)``. Scenarios A-D apply kernels
    to the ten groups; E-G add the 100 single-variable partitions.
    """
    s = spec.scenario
    variant = variant or _DEFAULT_VARIANT[s]
    if variant not in VARIANTS[s]:
        raise ValueError(f"scenario {s.value} has variants {VARIANTS[s]}, not {variant!r}")
    lin, poly, gauss = linear(), polynomial(2, 1.0), rbf(RBF_SIGMA)
    if s is Scenario.E:
        top = poly if variant == "poly" else gauss
        kernels = [lin, top]
        return _manifest(True), kernels, {"group": [top.label], "individual": [lin.label]}
    if s in (Scenario.F, Scenario.G):
        kernels = [lin, poly, gauss]
        labels = [k.label for k in kernels]
        return _manifest(True), kernels, {"group": labels, "individual": labels}
    extra = {"linear": [], "poly": [poly], "rbf": [gauss]}[variant]
    kernels: list[KernelSpec] = [lin] + extra
    return _manifest(False), kernels, {"group": [k.label for k in kernels]}
