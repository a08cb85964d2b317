"""Helpers shared by the execution backends."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .. import ir

Int3 = tuple[int, int, int]


@dataclass(frozen=True)
class ExecutableStencil:
    """Backend-built entry point.

    ``run`` takes (domain, field_args, scalar_args) where field_args maps each
    api field name to (FieldStorage, resolved origin) and scalar_args maps
    scalar names to numbers; output fields are mutated in place.
    """

    backend_id: str
    fingerprint: ir.Fingerprint
    run: Callable[[Int3, dict[str, tuple[Any, Int3]], dict[str, float]], None]
    build_info: dict = field(default_factory=dict)


def stage_region(extent: ir.Extent, domain: Int3) -> tuple[int, int, int, int]:
    """Horizontal iteration bounds (i0, i1, j0, j1) in domain coordinates."""
    return (
        extent.lo[0],
        domain[0] + extent.hi[0],
        extent.lo[1],
        domain[1] + extent.hi[1],
    )


def interval_groups(ms: ir.MultiStage) -> list[tuple[ir.Interval, list[ir.Stage]]]:
    """Group consecutive stages sharing an interval, preserving program order."""
    groups: list[tuple[ir.Interval, list[ir.Stage]]] = []
    for stage in ms.stages:
        if groups and groups[-1][0] == stage.interval:
            groups[-1][1].append(stage)
        else:
            groups.append((stage.interval, [stage]))
    return groups


def written_fields(impl: ir.StencilImplementation) -> set[str]:
    api = set(f.name for f in impl.api_fields)
    out: set[str] = set()
    for ms in impl.multistages:
        for stage in ms.stages:
            out |= {w.field for w in ir.stmt_writes(stage.body)}
    return out & api


def temp_shape(temp: ir.TempDecl, domain: Int3) -> Int3:
    e = temp.extent
    return (
        domain[0] + e.hi[0] - e.lo[0],
        domain[1] + e.hi[1] - e.lo[1],
        domain[2],
    )


def temp_origin(temp: ir.TempDecl) -> Int3:
    e = temp.extent
    return (-e.lo[0], -e.lo[1], 0)
