"""Execution backends: reference interpreter (debug), bulk whole-plane engine
(vec), and native source-emitting engine with build caching (gen)."""

from .common import ExecutableStencil

BACKEND_IDS = ("debug", "vec", "gen")

__all__ = ["BACKEND_IDS", "ExecutableStencil"]
