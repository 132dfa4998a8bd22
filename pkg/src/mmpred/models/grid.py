"""Hyperparameter search grids per modality and model kind."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

TREE_GRID = {"n_estimators": [100, 200, 300], "max_depth": [2, 3, 5, 10], "random_state": [0]}
DEFAULT_GRID: dict[str, dict[str, dict[str, list]]] = {
    "static": {
        "gbt": TREE_GRID,
        "rforest": TREE_GRID,
        "logreg": {"C": [0.1, 1, 10], "penalty": ["l1", "l2"], "solver": ["liblinear"],
                   "random_state": [0]},
        "mlp": {"dropout": [0.2, 0.3], "units_multiplier": [1, 2, 3]},
    },
    "series": {
        "rocket": {"num_kernels": [1000, 5000, 10000]},
        "c22features": {"estimator": ["rforest200", "gbt200", "logreg"]},
        "gru_rnn": {"dropout": [0.2, 0.3], "units_multiplier": [1, 2, 3]},
    },
    "text": {
        "text_encoder": {"dropout": [0.2, 0.3], "units_multiplier": [1]},
    },
    "fusion": {
        "intermediate": {"dropout": [0.2, 0.3]},
    },
}
# labs and meds share the series grid; early fusion reuses the static grid
MODALITY_GRID = {"static": "static", "early": "static", "labs": "series", "meds": "series",
                 "text": "text", "intermediate": "fusion"}


def expand(space: dict[str, list]) -> list[dict]:
    """Cartesian product of a {name: values} space, in declaration order."""
    keys = list(space)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(space[k] for k in keys))]


@dataclass
class HyperGrid:
    spaces: dict[str, dict[str, dict[str, list]]] = field(
        default_factory=lambda: {g: {k: dict(v) for k, v in kinds.items()} for g, kinds in DEFAULT_GRID.items()}
    )

    def kinds(self, modality: str) -> list[str]:
        return list(self.spaces[MODALITY_GRID[modality]])

    def points(self, modality: str, kind: str) -> list[dict]:
        return expand(self.spaces[MODALITY_GRID[modality]][kind])

    def override(self, modality: str, kind: str, space: dict[str, list]) -> "HyperGrid":
        group = MODALITY_GRID[modality]
        for name, values in space.items():
            if not isinstance(values, list) or not values:
                raise ValueError(f"grid values for {kind}.{name} must be a non-empty list")
        self.spaces.setdefault(group, {})[kind] = dict(space)
        return self

    def restrict(self, modality: str, kinds: list[str]) -> "HyperGrid":
        group = MODALITY_GRID[modality]
        unknown = set(kinds) - set(self.spaces[group])
        if unknown:
            raise ValueError(f"unknown kinds for {modality}: {sorted(unknown)}")
        self.spaces[group] = {k: v for k, v in self.spaces[group].items() if k in kinds}
        return self

    @classmethod
    def from_config(cls, cfg: dict | None) -> "HyperGrid":
        """``cfg`` maps group ("static", "series", "text", "fusion") to {kind: space};
        a kind given here replaces its default space, other kinds are kept."""
        grid = cls()
        for group, kinds in (cfg or {}).items():
            if group not in grid.spaces:
                raise ValueError(f"unknown grid group {group!r}")
            for kind, space in kinds.items():
                if space is None:
                    grid.spaces[group].pop(kind, None)
                    continue
                for name, values in space.items():
                    if not isinstance(values, list) or not values:
                        raise ValueError(f"grid values for {kind}.{name} must be a non-empty list")
                grid.spaces[group][kind] = dict(space)
        return grid
