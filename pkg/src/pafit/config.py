"""Experiment configuration: a single strict, versioned JSON document.

Unknown keys are rejected (fail-fast reproducibility) and every field is
validated before any run. The fitness distribution and the attachment
model are tagged objects:

    {"type": "discrete", "points": [[0.5, 0.5], [1.0, 0.5]]}
    {"type": "density", "edges": [0.0, 1.0], "coeffs": [[3.0, -6.0, 3.0]],
     "atom_at_one": 0.0}
    {"type": "beta", "alpha": 2.0, "beta": 3.0, "atom_at_one": 0.0}
    {"type": "uniform"}

    {"type": "poisson"} | {"type": "multinomial"}
    | {"type": "pairs_demo"} | {"type": "uniform_demo"}
    | {"type": "bursty_demo"} | {"type": "coupled_demo"}

The demo kernels are deliberate contract violators used by the
``check-kernel`` subcommand.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from . import kernel_contract, measures, simulator

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def build_distribution(spec: dict) -> measures.FitnessDistribution:
    spec = dict(spec)
    kind = spec.pop("type", None)
    try:
        if kind == "discrete":
            points = spec.pop("points")
            dist = measures.FiniteDiscrete([(float(v), float(m)) for v, m in points])
        elif kind == "density":
            dist = measures.PiecewiseDensity(
                spec.pop("edges"), spec.pop("coeffs"), spec.pop("atom_at_one", 0.0)
            )
        elif kind == "beta":
            dist = measures.BetaShape(
                spec.pop("alpha"), spec.pop("beta"), spec.pop("atom_at_one", 0.0)
            )
        elif kind == "uniform":
            dist = measures.Uniform01()
        else:
            raise ConfigError(f"unknown fitness distribution type {kind!r}")
    except measures.MeasureError as exc:
        raise ConfigError(f"invalid fitness distribution: {exc}") from exc
    if spec:
        raise ConfigError(f"unknown fitness keys {sorted(spec)}")
    return dist


def build_model(spec: dict, lam: float) -> simulator.AttachmentModel:
    spec = dict(spec)
    kind = spec.pop("type", None)
    if spec:
        raise ConfigError(f"unknown model keys {sorted(spec)}")
    if kind == "poisson":
        return simulator.PoissonOutdegree()
    if kind == "multinomial":
        return simulator.FixedOutdegree()
    if kind == "pairs_demo":
        return kernel_contract.pair_emitting_kernel(lam)
    if kind == "uniform_demo":
        return kernel_contract.uniform_target_kernel(lam)
    if kind == "bursty_demo":
        return kernel_contract.bursty_variance_kernel(lam)
    if kind == "coupled_demo":
        return kernel_contract.coupled_pair_kernel()
    raise ConfigError(f"unknown model type {kind!r}")


_FIELDS = {
    "schema_version",
    "model",
    "lambda",
    "fitness",
    "n_target",
    "checkpoints",
    "replicas",
    "base_seed",
    "bins",
    "max_tracked_impact",
    "epsilon",
    "out_dir",
    "edge_log",
}


@dataclass(frozen=True)
class ExperimentConfig:
    model: dict
    lam: float
    fitness: dict
    n_target: int
    out_dir: str
    checkpoints: tuple[int, ...] | None = None
    replicas: int = 1
    base_seed: int = 0
    bins: int = 100
    max_tracked_impact: int = 10
    epsilon: float = 0.01
    edge_log: bool = False

    def __post_init__(self):
        if self.lam <= 0:
            raise ConfigError("lambda must be positive")
        if self.n_target < 1:
            raise ConfigError("n_target must be >= 1")
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if self.bins < 1:
            raise ConfigError("bins must be >= 1")
        if self.max_tracked_impact < 1:
            raise ConfigError("max_tracked_impact must be >= 1")
        if not 0.0 < self.epsilon <= 1.0:
            raise ConfigError("epsilon must lie in (0, 1]")
        if self.base_seed < 0:
            raise ConfigError("base_seed must be >= 0")
        if self.checkpoints is not None:
            cps = tuple(int(c) for c in self.checkpoints)
            if any(c < 1 or c > self.n_target for c in cps) or list(cps) != sorted(set(cps)):
                raise ConfigError("checkpoints must be sorted, unique, within [1, n_target]")
            object.__setattr__(self, "checkpoints", cps)
        # construct both to validate; raises ConfigError on bad specs
        dist = build_distribution(self.fitness)
        try:
            measures.require_normalized(dist)
        except measures.MeasureError as exc:
            raise ConfigError(str(exc)) from exc
        model = build_model(self.model, self.lam)
        if isinstance(model, simulator.FixedOutdegree) and self.lam != int(self.lam):
            raise ConfigError("multinomial model needs integer lambda")

    # -- construction ------------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        version = data.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r}")
        unknown = set(data) - (_FIELDS - {"schema_version"})
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        missing = {"model", "lambda", "fitness", "n_target", "out_dir"} - set(data)
        if missing:
            raise ConfigError(f"missing config keys {sorted(missing)}")
        checkpoints = data.get("checkpoints")
        return cls(
            model=dict(data["model"]),
            lam=float(data["lambda"]),
            fitness=dict(data["fitness"]),
            n_target=int(data["n_target"]),
            out_dir=str(data["out_dir"]),
            checkpoints=tuple(checkpoints) if checkpoints is not None else None,
            replicas=int(data.get("replicas", 1)),
            base_seed=int(data.get("base_seed", 0)),
            bins=int(data.get("bins", 100)),
            max_tracked_impact=int(data.get("max_tracked_impact", 10)),
            epsilon=float(data.get("epsilon", 0.01)),
            edge_log=bool(data.get("edge_log", False)),
        )

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "model": dict(self.model),
            "lambda": self.lam,
            "fitness": dict(self.fitness),
            "n_target": self.n_target,
            "checkpoints": list(self.checkpoints) if self.checkpoints is not None else None,
            "replicas": self.replicas,
            "base_seed": self.base_seed,
            "bins": self.bins,
            "max_tracked_impact": self.max_tracked_impact,
            "epsilon": self.epsilon,
            "out_dir": self.out_dir,
            "edge_log": self.edge_log,
        }

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    # -- derived objects ---------------------------------------------------

    def distribution(self) -> measures.FitnessDistribution:
        return build_distribution(self.fitness)

    def attachment_model(self) -> simulator.AttachmentModel:
        return build_model(self.model, self.lam)

    def schedule(self) -> list[int]:
        if self.checkpoints is not None:
            cps = sorted(set(self.checkpoints) | {self.n_target})
            return cps
        return simulator.default_schedule(1, self.n_target)

    def bin_edges(self):
        from . import empirics

        return empirics.collision_free_edges(self.distribution(), self.bins)
