"""Benchmark harness: timed invocation with warm-up, and input builders for
the committed kernels. Timing uses a monotonic clock and reports medians over
the repetitions; warm-up calls are discarded."""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .kernels import kernel_source
from .oracles import make_diagonally_dominant
from .runtime import CompiledStencil, compile_stencil
from .storage import FieldStorage, allocate, default_layout

Int3 = tuple[int, int, int]


@dataclass(frozen=True)
class BenchmarkResult:
    kernel: str
    backend: str
    domain: Int3
    reps: int
    kernel_ns_median: int
    kernel_ns_min: int
    total_ns_median: int
    validated: bool

    def csv_row(self) -> str:
        return (
            f"{self.kernel},{self.backend},{self.domain[0]},{self.domain[1]},"
            f"{self.domain[2]},{self.reps},{self.kernel_ns_median},"
            f"{self.total_ns_median},{'full' if self.validated else 'skip'}"
        )


CSV_HEADER = "kernel,backend,ni,nj,nk,reps,kernel_ns_median,total_ns_median,validate"


def time_stencil(
    stencil: CompiledStencil,
    arguments: dict,
    domain: Optional[Int3] = None,
    reps: int = 20,
    warmup: int = 3,
    validate: Optional[bool] = None,
    kernel: str = "",
) -> BenchmarkResult:
    if reps < 1:
        raise ValueError("reps must be >= 1")
    kernel_ns: list[int] = []
    total_ns: list[int] = []
    validated = True
    resolved: Int3 = (0, 0, 0)
    for rep in range(warmup + reps):
        report = stencil(domain=domain, validate=validate, **arguments)
        if rep >= warmup:
            kernel_ns.append(report.kernel_ns)
            total_ns.append(report.total_ns)
        validated = report.validated
        resolved = report.domain
    return BenchmarkResult(
        kernel=kernel or stencil.name,
        backend=stencil.backend,
        domain=resolved,
        reps=reps,
        kernel_ns_median=int(statistics.median(kernel_ns)),
        kernel_ns_min=min(kernel_ns),
        total_ns_median=int(statistics.median(total_ns)),
        validated=validated,
    )


# ---------------------------------------------------------------------------
# Kernel input builders
# ---------------------------------------------------------------------------


def make_hdiff_args(
    backend: str, domain: Int3, seed: int = 0
) -> dict[str, FieldStorage | float]:
    rng = np.random.default_rng(seed)
    layout = default_layout(backend)
    inp = allocate("f64", domain, (2, 2, 0), layout)
    inp.view[...] = rng.uniform(-1.0, 1.0, inp.shape)
    out = allocate("f64", domain, (0, 0, 0), layout)
    return {"inp": inp, "coeff": 0.05, "out": out}


def make_vadv_args(
    backend: str, domain: Int3, seed: int = 0
) -> dict[str, FieldStorage]:
    rng = np.random.default_rng(seed)
    layout = default_layout(backend)
    a, b, c, d = make_diagonally_dominant(rng, domain)
    args = {}
    for name, values in zip("abcd", (a, b, c, d)):
        storage = allocate("f64", domain, (0, 0, 0), layout)
        storage.view[...] = values
        args[name] = storage
    args["x"] = allocate("f64", domain, (0, 0, 0), layout)
    return args


KERNEL_BUILDERS = {"hdiff": make_hdiff_args, "vadv": make_vadv_args}


def bench_kernel(
    kernel: str,
    backend: str,
    domain: Int3,
    reps: int = 20,
    warmup: int = 3,
    validate: bool = True,
    seed: int = 0,
    cache_dir: Optional[str] = None,
) -> BenchmarkResult:
    stencil = compile_stencil(
        kernel_source(kernel), kernel, backend=backend, cache_dir=cache_dir
    )
    args = KERNEL_BUILDERS[kernel](backend, domain, seed)
    return time_stencil(
        stencil, args, reps=reps, warmup=warmup, validate=validate, kernel=kernel
    )
