"""Run configuration: one JSON document covering every subcommand.

Sections mirror the pipeline stages. Unknown keys anywhere in the document
are an error naming the offending key, so typos fail loudly instead of
silently running with a default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .boosting import GbdtParams
from .errors import DataError
from .windows import StratifiedWindows, WindowSpec


def _reject_unknown(d: dict, known: set[str], where: str) -> None:
    extra = sorted(set(d) - known)
    if extra:
        raise DataError(f"unknown config key {extra[0]!r} in {where}")


@dataclass(frozen=True)
class MowSettings:
    """Window sampling, neighborhood size, split ratios, and the model grid."""

    patch: int = 3
    windows: StratifiedWindows | tuple[WindowSpec, ...] = StratifiedWindows()
    ratios: tuple[float, float, float] = (0.70, 0.15, 0.15)
    per_window_split: bool = False
    class_weighting: bool = False
    grid: tuple[GbdtParams, ...] = (GbdtParams(),)

    @classmethod
    def from_dict(cls, d: dict) -> "MowSettings":
        known = {
            "patch",
            "windows",
            "ratios",
            "per_window_split",
            "class_weighting",
            "grid",
        }
        _reject_unknown(d, known, "mow")
        kwargs: dict = {}
        if "patch" in d:
            kwargs["patch"] = int(d["patch"])
        if "windows" in d:
            w = d["windows"]
            if isinstance(w, list):
                kwargs["windows"] = tuple(
                    WindowSpec(int(x), int(y), int(n)) for x, y, n in w
                )
            elif isinstance(w, dict):
                _reject_unknown(w, {"count", "side", "attempts"}, "mow.windows")
                kwargs["windows"] = StratifiedWindows(**{k: int(v) for k, v in w.items()})
            else:
                raise DataError("mow.windows must be a list of [x, y, n] or a sampler dict")
        if "ratios" in d:
            r = d["ratios"]
            if not (isinstance(r, list) and len(r) == 3):
                raise DataError("mow.ratios must be three numbers")
            kwargs["ratios"] = (float(r[0]), float(r[1]), float(r[2]))
        if "per_window_split" in d:
            kwargs["per_window_split"] = bool(d["per_window_split"])
        if "class_weighting" in d:
            kwargs["class_weighting"] = bool(d["class_weighting"])
        if "grid" in d:
            if not isinstance(d["grid"], list) or not d["grid"]:
                raise DataError("mow.grid must be a non-empty list of parameter dicts")
            kwargs["grid"] = tuple(GbdtParams.from_dict(g) for g in d["grid"])
        return cls(**kwargs)

    def __post_init__(self) -> None:
        if self.patch < 1 or self.patch % 2 == 0:
            raise DataError(f"neighborhood side must be odd and positive, got {self.patch}")
        if any(r <= 0 for r in self.ratios) or abs(sum(self.ratios) - 1.0) > 1e-9:
            raise DataError(f"split ratios must be positive and sum to 1, got {self.ratios}")


@dataclass(frozen=True)
class EvalSettings:
    iou_threshold: float = 0.5
    sweep_step: float = 0.01
    average: str = "macro"

    @classmethod
    def from_dict(cls, d: dict) -> "EvalSettings":
        _reject_unknown(d, {"iou_threshold", "sweep_step", "average"}, "eval")
        return cls(
            iou_threshold=float(d.get("iou_threshold", 0.5)),
            sweep_step=float(d.get("sweep_step", 0.01)),
            average=str(d.get("average", "macro")),
        )

    def __post_init__(self) -> None:
        if not (0.0 < self.iou_threshold <= 1.0):
            raise DataError(f"iou_threshold must be in (0, 1], got {self.iou_threshold}")
        if not (0.0 < self.sweep_step <= 1.0):
            raise DataError(f"sweep_step must be in (0, 1], got {self.sweep_step}")
        if self.average not in ("macro", "micro"):
            raise DataError(f"average must be macro or micro, got {self.average!r}")


@dataclass(frozen=True)
class MeshSettings:
    spacing: float = 4.0
    min_angle: float = 20.0
    rule: str = "centroid"

    @classmethod
    def from_dict(cls, d: dict) -> "MeshSettings":
        _reject_unknown(d, {"spacing", "min_angle", "rule"}, "mesh")
        return cls(
            spacing=float(d.get("spacing", 4.0)),
            min_angle=float(d.get("min_angle", 20.0)),
            rule=str(d.get("rule", "centroid")),
        )

    def __post_init__(self) -> None:
        if self.spacing <= 0:
            raise DataError(f"spacing must be positive, got {self.spacing}")
        if not (0.0 <= self.min_angle <= 34.0):
            raise DataError(f"min_angle must be in [0, 34], got {self.min_angle}")
        if self.rule not in ("centroid", "majority"):
            raise DataError(f"rule must be centroid or majority, got {self.rule!r}")


@dataclass(frozen=True)
class AnalyzeSettings:
    points: int = 4000
    point_mode: str = "grid"
    log_sizes: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "AnalyzeSettings":
        _reject_unknown(d, {"points", "point_mode", "log_sizes"}, "analyze")
        return cls(
            points=int(d.get("points", 4000)),
            point_mode=str(d.get("point_mode", "grid")),
            log_sizes=bool(d.get("log_sizes", False)),
        )

    def __post_init__(self) -> None:
        if self.points < 1:
            raise DataError(f"points must be positive, got {self.points}")
        if self.point_mode not in ("grid", "random"):
            raise DataError(f"point_mode must be grid or random, got {self.point_mode!r}")


@dataclass(frozen=True)
class SplitSettings:
    train_fraction: float = 0.8
    folds: int = 4

    @classmethod
    def from_dict(cls, d: dict) -> "SplitSettings":
        _reject_unknown(d, {"train_fraction", "folds"}, "split")
        return cls(
            train_fraction=float(d.get("train_fraction", 0.8)),
            folds=int(d.get("folds", 4)),
        )

    def __post_init__(self) -> None:
        if not (0.0 < self.train_fraction < 1.0):
            raise DataError(
                f"train_fraction must be in (0, 1), got {self.train_fraction}"
            )
        if self.folds < 1:
            raise DataError(f"folds must be positive, got {self.folds}")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    mow: MowSettings = field(default_factory=MowSettings)
    eval: EvalSettings = field(default_factory=EvalSettings)
    mesh: MeshSettings = field(default_factory=MeshSettings)
    analyze: AnalyzeSettings = field(default_factory=AnalyzeSettings)
    split: SplitSettings = field(default_factory=SplitSettings)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        _reject_unknown(d, {"seed", "mow", "eval", "mesh", "analyze", "split"}, "config")
        return cls(
            seed=int(d.get("seed", 0)),
            mow=MowSettings.from_dict(d.get("mow", {})),
            eval=EvalSettings.from_dict(d.get("eval", {})),
            mesh=MeshSettings.from_dict(d.get("mesh", {})),
            analyze=AnalyzeSettings.from_dict(d.get("analyze", {})),
            split=SplitSettings.from_dict(d.get("split", {})),
        )


def load_config(path: str | Path | None) -> RunConfig:
    """Read a JSON config file; None gives the all-defaults configuration."""
    if path is None:
        return RunConfig()
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise DataError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise DataError(f"config {path} must hold a JSON object")
    return RunConfig.from_dict(doc)
