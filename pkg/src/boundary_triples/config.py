"""Model configuration: JSON on disk, validated with pydantic before any computation."""

from __future__ import annotations

import json
from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigurationError

VertexId = Union[int, str]


class EdgeConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    from_: VertexId = Field(alias="from")
    to: VertexId
    length: float

    @field_validator("length")
    @classmethod
    def _positive(cls, v):
        if not v > 0 or v != v or v == float("inf"):
            raise ValueError("must be > 0")
        return v


class DiscretizationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_per_edge: int = Field(ge=1)
    scheme: Literal["dec-lumped", "fem-p1"] = "fem-p1"


class ModelConfig(BaseModel):
    """Validated model description.

    ``type = 'interval'`` with no edges means the unit interval with both
    endpoints on the boundary. ``fault_injection`` deliberately corrupts the
    model (used to test that verification notices).
    """

    model_config = ConfigDict(extra="forbid")

    type: Literal["interval", "metric_graph", "discrete"]
    edges: List[EdgeConfig] = Field(default_factory=list)
    boundary: List[VertexId] = Field(default_factory=list)
    quadrature_order: int = Field(default=32, ge=1)
    discretization: Optional[DiscretizationConfig] = None
    fault_injection: Optional[Literal["flip_normal_flux"]] = None

    def echo(self) -> dict:
        return self.model_dump(by_alias=True, exclude_none=True)


def _format_loc(loc) -> str:
    out = ""
    for part in loc:
        if isinstance(part, int):
            out += f"[{part}]"
        else:
            out += ("." if out else "") + str(part)
    return out


def _format_error(err) -> tuple:
    path = _format_loc(err.get("loc", ()))
    if err.get("type") == "extra_forbidden":
        return path, f"{path}: unknown field"
    msg = err.get("msg", "invalid value")
    if msg.startswith("Value error, "):
        msg = msg[len("Value error, "):]
    return path, f"{path} {msg}" if path else msg


def parse_config(data) -> ModelConfig:
    """Validate a mapping; raise :class:`ConfigurationError` naming the first bad field."""
    try:
        cfg = ModelConfig.model_validate(data)
    except ValidationError as exc:
        path, msg = _format_error(exc.errors()[0])
        raise ConfigurationError(msg, path=path) from exc
    if cfg.type == "interval":
        if not cfg.edges:
            cfg = cfg.model_copy(update={"edges": [EdgeConfig(**{"from": 0, "to": 1,
                                                                  "length": 1.0})]})
        if len(cfg.edges) != 1 or cfg.edges[0].from_ == cfg.edges[0].to:
            raise ConfigurationError("an interval model has exactly one non-loop edge",
                                     path="edges")
        ends = [cfg.edges[0].from_, cfg.edges[0].to]
        if not cfg.boundary:
            cfg = cfg.model_copy(update={"boundary": ends})
        if sorted(map(str, cfg.boundary)) != sorted(map(str, ends)):
            raise ConfigurationError("an interval model has both endpoints on the boundary",
                                     path="boundary")
    if cfg.type == "discrete" and cfg.discretization is None:
        raise ConfigurationError("discretization is required when type is 'discrete'",
                                 path="discretization")
    if cfg.type != "discrete" and cfg.discretization is not None:
        raise ConfigurationError("discretization is only allowed when type is 'discrete'",
                                 path="discretization")
    return cfg


def load_config(path) -> ModelConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
    return parse_config(data)


def build_graph_from_config(cfg: ModelConfig):
    from .metric_graph import Edge, MetricGraph

    return MetricGraph([Edge(e.from_, e.to, e.length) for e in cfg.edges], cfg.boundary,
                       cfg.quadrature_order)


def build_model(cfg: ModelConfig):
    """Backend for a validated config (metric graph, or discrete backend over its subdivision)."""
    from .core import FlippedFluxModel
    from .discrete import DiscreteBackend, discretize

    graph = build_graph_from_config(cfg)
    model = graph
    if cfg.type == "discrete":
        d = cfg.discretization
        model = DiscreteBackend(discretize(graph, d.n_per_edge, d.scheme))
    if cfg.fault_injection == "flip_normal_flux":
        model = FlippedFluxModel(model)
    return model
