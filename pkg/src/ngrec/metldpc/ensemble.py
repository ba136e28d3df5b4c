"""Multi-edge-type ensemble descriptions.

File grammar (one directive per line, ``#`` starts a comment)::

    rate 0.1
    edge_types 3
    var  <fraction> <deg_1> ... <deg_E>
    pvar <fraction> <deg_1> ... <deg_E>     # punctured variable class
    chk  <fraction> <deg_1> ... <deg_E>

Fractions are relative to the number of transmitted variable nodes ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ..exceptions import EnsembleError

SOCKET_TOLERANCE = 0.005
RATE_TOLERANCE = 1e-3


@dataclass(frozen=True)
class NodeClass:
    fraction: float
    degrees: tuple[int, ...]
    punctured: bool = False

    @property
    def total_degree(self) -> int:
        return sum(self.degrees)


@dataclass(frozen=True)
class MultiEdgeEnsemble:
    edge_types: int
    variable_classes: tuple[NodeClass, ...]
    check_classes: tuple[NodeClass, ...]
    declared_rate: float | None = None
    name: str = field(default="", compare=False)

    @property
    def design_rate(self) -> float:
        transmitted = sum(c.fraction for c in self.variable_classes if not c.punctured)
        total = sum(c.fraction for c in self.variable_classes)
        checks = sum(c.fraction for c in self.check_classes)
        return (total - checks) / transmitted

    def sockets(self, side: str) -> np.ndarray:
        classes = self.variable_classes if side == "var" else self.check_classes
        return np.array(
            [sum(c.fraction * c.degrees[t] for c in classes) for t in range(self.edge_types)]
        )

    def validate(self) -> "MultiEdgeEnsemble":
        v, c = self.sockets("var"), self.sockets("chk")
        for t in range(self.edge_types):
            scale = max(v[t], c[t])
            if scale == 0:
                continue
            if abs(v[t] - c[t]) / scale > SOCKET_TOLERANCE:
                raise EnsembleError(
                    f"socket imbalance on edge type {t + 1}: variable side {v[t]:.6g}, check side {c[t]:.6g}"
                )
        if not 0 < self.design_rate < 1:
            raise EnsembleError(f"design rate {self.design_rate:.4g} outside (0, 1)")
        if self.declared_rate is not None and abs(self.declared_rate - self.design_rate) > RATE_TOLERANCE:
            raise EnsembleError(
                f"declared rate {self.declared_rate} differs from design rate {self.design_rate:.6f}"
            )
        return self


def parse_ensemble(text: str, name: str = "") -> MultiEdgeEnsemble:
    rate = None
    edge_types = None
    var, chk = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *rest = line.split()
        try:
            if key == "rate":
                (rate,) = map(float, rest)
            elif key == "edge_types":
                (edge_types,) = map(int, rest)
                if edge_types < 1:
                    raise EnsembleError("edge_types must be positive", lineno)
            elif key in ("var", "pvar", "chk"):
                if edge_types is None:
                    raise EnsembleError("node class before edge_types header", lineno)
                frac = float(rest[0])
                degs = tuple(int(d) for d in rest[1:])
                if len(degs) != edge_types:
                    raise EnsembleError(f"expected {edge_types} degrees, got {len(degs)}", lineno)
                if frac <= 0 or any(d < 0 for d in degs) or sum(degs) == 0:
                    raise EnsembleError("fractions must be positive and degrees non-negative", lineno)
                cls = NodeClass(frac, degs, key == "pvar")
                (chk if key == "chk" else var).append(cls)
            else:
                raise EnsembleError(f"unknown directive {key!r}", lineno)
        except (ValueError, IndexError) as exc:
            if isinstance(exc, EnsembleError):
                raise
            raise EnsembleError(f"malformed {key!r} line: {raw.strip()!r}", lineno) from exc
    if edge_types is None or not var or not chk:
        raise EnsembleError("ensemble needs edge_types, var and chk lines")
    return MultiEdgeEnsemble(edge_types, tuple(var), tuple(chk), rate, name).validate()


def load_ensemble(source: str | Path) -> MultiEdgeEnsemble:
    """Load an ensemble from a path or from a bundled name such as ``"rate_0.1"``."""
    path = Path(source)
    if path.exists():
        return parse_ensemble(path.read_text(), path.stem)
    bundled = resources.files("ngrec.metldpc").joinpath("data", f"{source}.met")
    if bundled.is_file():
        return parse_ensemble(bundled.read_text(), str(source))
    raise FileNotFoundError(f"no ensemble file or bundled ensemble named {source!r}")


def bundled_ensembles() -> list[str]:
    data = resources.files("ngrec.metldpc").joinpath("data")
    return sorted(p.name[:-4] for p in data.iterdir() if p.name.endswith(".met"))
