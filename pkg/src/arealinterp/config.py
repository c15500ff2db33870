"""JSON experiment configuration.

Input paths are resolved against the directory of the config file; ``output_dir``
is taken relative to the working directory. Unknown
keys anywhere in the document are errors, so typos fail fast.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .aim import AimParams
from .exceptions import ConfigError
from .field import AUX_STREAM, CountField, IntensityField, homogeneous_intensity, read_counts, read_intensity, \
    simulate_counts, two_level_intensity
from .grid import GridRegion, ZoneSystem, cells_system, read_labels

SCHEMA_VERSION = 1

_TOP_KEYS = {
    "schema_version", "description", "grid", "sources", "targets", "auxiliary", "params", "methods",
    "replicates", "base_seed", "output_dir", "scales", "models", "workers", "condition_on_x",
}
_AUX_KEYS = {
    "homogeneous": {"kind", "value"},
    "piecewise": {"kind", "high", "low", "cells"},
    "file": {"kind", "path"},
    "counts": {"kind", "path"},
}


@dataclass(frozen=True)
class AuxSpec:
    name: str
    kind: str
    value: float = 0.0
    high: float = 0.0
    low: float = 0.0
    cells: tuple[int, ...] = ()
    path: Path | None = None


@dataclass(frozen=True)
class ResponseSpec:
    name: str
    params: AimParams
    auxiliary: tuple[str, ...]


@dataclass(frozen=True)
class ModelSpec:
    label: str
    method: str
    auxiliary: tuple[str, ...]


@dataclass
class ExperimentConfig:
    grid: GridRegion
    sources: dict[str, Path]
    targets: str | Path
    auxiliary: list[AuxSpec]
    params: list[ResponseSpec]
    replicates: int
    base_seed: int
    methods: list[str] = field(default_factory=lambda: ["DAW", "DAX", "REG", "SCR", "COMPOSITE"])
    output_dir: Path = Path("out")
    scales: list[float] = field(default_factory=lambda: [1.0])
    models: list[ModelSpec] = field(default_factory=list)
    workers: int = 1
    condition_on_x: bool = True
    description: str = ""

    def with_overrides(self, seed=None, replicates=None, output_dir=None, workers=None) -> "ExperimentConfig":
        changes = {}
        if seed is not None:
            changes["base_seed"] = int(seed)
        if replicates is not None:
            if replicates < 1:
                raise ConfigError("replicates must be at least 1")
            changes["replicates"] = int(replicates)
        if output_dir is not None:
            changes["output_dir"] = Path(output_dir)
        if workers is not None:
            changes["workers"] = int(workers)
        return replace(self, **changes)

    # ---- materialisation -------------------------------------------------

    def source_systems(self) -> dict[str, ZoneSystem]:
        out = {}
        for name, path in self.sources.items():
            system = read_labels(path, self.grid.cell_area, "source")
            if system.region != self.grid:
                raise ConfigError(f"source system {name!r} is {system.region.n_rows}x{system.region.n_cols}, "
                                  f"grid is {self.grid.n_rows}x{self.grid.n_cols}")
            out[name] = system
        return out

    def target_system(self) -> ZoneSystem:
        if self.targets == "cells":
            return cells_system(self.grid)
        system = read_labels(self.targets, self.grid.cell_area, "target")
        if system.region != self.grid:
            raise ConfigError("target layout does not match the grid")
        return system

    def aux_index(self, name: str) -> int:
        names = [a.name for a in self.auxiliary]
        if name not in names:
            raise ConfigError(f"unknown auxiliary variable {name!r}; have {names}")
        return names.index(name)

    def intensity(self, spec: AuxSpec) -> IntensityField:
        if spec.kind == "homogeneous":
            return homogeneous_intensity(self.grid, spec.value)
        if spec.kind == "piecewise":
            return two_level_intensity(self.grid, spec.cells, spec.high, spec.low)
        if spec.kind == "file":
            field_ = read_intensity(spec.path, self.grid.cell_area)
            if field_.region != self.grid:
                raise ConfigError(f"intensity file for {spec.name!r} does not match the grid")
            return field_
        raise ConfigError(f"auxiliary {spec.name!r} of kind {spec.kind!r} has no intensity")

    def realize_auxiliary(self) -> list[CountField]:
        """One fixed draw of every auxiliary variable (replicate ``j`` of the auxiliary stream)."""
        out = []
        for j, spec in enumerate(self.auxiliary):
            if spec.kind == "counts":
                counts = read_counts(spec.path, self.grid.cell_area)
                if counts.region != self.grid:
                    raise ConfigError(f"count file for {spec.name!r} does not match the grid")
                out.append(counts)
            else:
                out.append(simulate_counts(self.intensity(spec), 1.0, self.base_seed, j, AUX_STREAM))
        return out


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")


def _require(obj, key, where):
    if key not in obj:
        raise ConfigError(f"{where}: missing required key {key!r}")
    return obj[key]


def _path(base: Path, value, where) -> Path:
    if not isinstance(value, str):
        raise ConfigError(f"{where}: expected a path string")
    p = (base / value).resolve()
    if not p.is_file():
        raise ConfigError(f"{where}: file not found: {p}")
    return p


def parse_config(doc: dict, base_dir: Path | str = ".") -> ExperimentConfig:
    base = Path(base_dir)
    _check_keys(doc, _TOP_KEYS, "config")
    version = _require(doc, "schema_version", "config")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}")

    g = _require(doc, "grid", "config")
    _check_keys(g, {"n_rows", "n_cols", "cell_area"}, "grid")
    try:
        grid = GridRegion(int(_require(g, "n_rows", "grid")), int(_require(g, "n_cols", "grid")),
                          float(g.get("cell_area", 1.0)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"grid: {exc}") from exc

    src = _require(doc, "sources", "config")
    if not isinstance(src, dict) or not src:
        raise ConfigError("sources: expected a non-empty object of name -> label file")
    sources = {str(k): _path(base, v, f"sources.{k}") for k, v in src.items()}

    tg = doc.get("targets", "cells")
    targets = "cells" if tg == "cells" else _path(base, tg, "targets")

    aux = []
    for name, spec in doc.get("auxiliary", {}).items():
        where = f"auxiliary.{name}"
        kind = _require(spec, "kind", where) if isinstance(spec, dict) else None
        if kind not in _AUX_KEYS:
            raise ConfigError(f"{where}: kind must be one of {sorted(_AUX_KEYS)}")
        _check_keys(spec, _AUX_KEYS[kind], where)
        if kind == "homogeneous":
            aux.append(AuxSpec(name, kind, value=float(_require(spec, "value", where))))
        elif kind == "piecewise":
            cells = tuple(int(c) for c in _require(spec, "cells", where))
            if any(c < 0 or c >= grid.n_cells for c in cells):
                raise ConfigError(f"{where}: cell index outside the grid")
            aux.append(AuxSpec(name, kind, high=float(_require(spec, "high", where)),
                               low=float(_require(spec, "low", where)), cells=cells))
        else:
            aux.append(AuxSpec(name, kind, path=_path(base, _require(spec, "path", where), where)))
    aux_names = [a.name for a in aux]

    params = []
    for i, p in enumerate(_require(doc, "params", "config")):
        where = f"params[{i}]"
        _check_keys(p, {"name", "alpha", "betas", "auxiliary"}, where)
        betas = tuple(float(b) for b in p.get("betas", []))
        names = tuple(p.get("auxiliary", aux_names[: len(betas)]))
        if len(names) != len(betas):
            raise ConfigError(f"{where}: need one auxiliary name per beta")
        for n in names:
            if n not in aux_names:
                raise ConfigError(f"{where}: unknown auxiliary {n!r}")
        try:
            ap = AimParams(float(_require(p, "alpha", where)), betas)
        except ConfigError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
        params.append(ResponseSpec(str(p.get("name", f"Y{i + 1}")), ap, names))
    if not params:
        raise ConfigError("params: at least one parameter set is required")

    replicates = _require(doc, "replicates", "config")
    if not isinstance(replicates, int) or replicates < 1:
        raise ConfigError("replicates must be an integer >= 1")
    seed = _require(doc, "base_seed", "config")
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("base_seed must be a nonnegative integer")

    models = []
    for i, m in enumerate(doc.get("models", [])):
        where = f"models[{i}]"
        _check_keys(m, {"label", "method", "auxiliary"}, where)
        names = tuple(m.get("auxiliary", []))
        for n in names:
            if n not in aux_names:
                raise ConfigError(f"{where}: unknown auxiliary {n!r}")
        models.append(ModelSpec(str(_require(m, "label", where)), str(_require(m, "method", where)).upper(), names))

    methods = [str(m).upper() for m in doc.get("methods", ["DAW", "DAX", "REG", "SCR", "COMPOSITE"])]
    for m in methods:
        if m not in ("DAW", "DAX", "REG", "SCR", "COMPOSITE"):
            raise ConfigError(f"methods: unknown method {m!r}")
    scales = [float(k) for k in doc.get("scales", [1.0])]
    if any(k <= 0 for k in scales):
        raise ConfigError("scales must be positive")
    workers = doc.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers must be an integer >= 1")

    return ExperimentConfig(
        grid=grid, sources=sources, targets=targets, auxiliary=aux, params=params,
        replicates=replicates, base_seed=seed, methods=methods,
        output_dir=Path(doc.get("output_dir", "out")), scales=scales, models=models,
        workers=workers, condition_on_x=bool(doc.get("condition_on_x", True)),
        description=str(doc.get("description", "")),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(doc, path.parent)


def default_config_path(name: str) -> Path:
    """Path of a config shipped with the package (``toy1``, ``toy2``, ``robustness``, ``asymptotics``)."""
    p = Path(str(resources.files("arealinterp") / "configs" / f"{name}.json"))
    if not p.is_file():
        raise ConfigError(f"no packaged config named {name!r}")
    return p
