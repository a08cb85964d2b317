"""Command-line interface: compile, run, diff, and bench stencil programs.

Diagnostics go to stderr; machine-readable output (execution reports, diff
results, CSV) goes to stdout. Exit codes: 0 success, 1 compile diagnostics or
diff failure, 2 usage or runtime-validation errors.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Optional

import click
import numpy as np

from . import corpus as corpus_mod
from . import ir
from .bench import CSV_HEADER, KERNEL_BUILDERS, bench_kernel
from .errors import CompilationError, InvocationError, StencilForgeError
from .kernels import KERNEL_NAMES
from .runtime import compile_stencil
from .storage import allocate, default_layout, read_gtsf, write_gtsf


def _parse_externals(pairs: tuple[str, ...]) -> dict:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise click.UsageError(f"--externals expects name=value, got {pair!r}")
        name, _, value = pair.partition("=")
        try:
            out[name] = int(value) if ("." not in value and "e" not in value.lower()) else float(value)
        except ValueError:
            try:
                out[name] = float(value)
            except ValueError:
                raise click.UsageError(f"external '{name}' value {value!r} is not numeric")
    return out


def _parse_triple(text: str, what: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise click.UsageError(f"{what} expects i,j,k, got {text!r}")
    try:
        i, j, k = (int(p) for p in parts)
    except ValueError:
        raise click.UsageError(f"{what} expects integers, got {text!r}")
    return (i, j, k)


def _parse_named_paths(pairs: tuple[str, ...], flag: str) -> dict[str, str]:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise click.UsageError(f"{flag} expects name=path, got {pair!r}")
        name, _, path = pair.partition("=")
        out[name] = path
    return out


def _fail_compile(exc: CompilationError):
    for diag in exc.diagnostics:
        click.echo(diag.render(), err=True)
    sys.exit(1)


@click.group()
def main() -> None:
    """Stencil DSL compiler and runtime."""


@main.command("compile")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--stencil", "stencil_name", default=None, help="Stencil name within the file.")
@click.option("--backend", default="debug", show_default=True)
@click.option("--externals", multiple=True, help="Compile-time binding name=value.")
@click.option("--dump-ir", type=click.Choice(["definition", "implementation"]), default=None)
@click.option("--emit-source", type=click.Path(dir_okay=False), default=None,
              help="Write generated native source (gen backend only).")
def cmd_compile(file, stencil_name, backend, externals, dump_ir, emit_source):
    """Compile a stencil, optionally dumping IR or generated source."""
    if emit_source and backend != "gen":
        raise click.UsageError("--emit-source requires --backend gen")
    source = Path(file).read_text()
    try:
        stencil = compile_stencil(
            source,
            stencil_name,
            backend=backend,
            externals=_parse_externals(externals),
            file=file,
        )
    except CompilationError as exc:
        _fail_compile(exc)
    except StencilForgeError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)

    if dump_ir == "definition":
        from .runtime import frontend_pipeline

        bound = frontend_pipeline(source, stencil_name, _parse_externals(externals), file)
        click.echo(ir.dump_ir(bound, "definition"), nl=False)
    elif dump_ir == "implementation":
        click.echo(ir.dump_ir(stencil.implementation, "implementation"), nl=False)

    if emit_source:
        Path(emit_source).write_text(
            Path(stencil.build_info["source_path"]).read_text()
        )
    if backend == "gen":
        click.echo(f"cache: {'hit' if stencil.build_info['cache_hit'] else 'miss'}")
    click.echo(f"compiled {stencil.name} [{backend}] fingerprint {stencil.fingerprint.short}")


@main.command("run")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--stencil", "stencil_name", default=None)
@click.option("--backend", default="debug", show_default=True)
@click.option("--externals", multiple=True)
@click.option("--in", "inputs", multiple=True, help="Input field name=path.gtsf.")
@click.option("--out", "outputs", multiple=True, help="Output field name=path.gtsf.")
@click.option("--scalar", "scalars", multiple=True, help="Scalar argument name=value.")
@click.option("--domain", default=None, help="Explicit compute domain i,j,k.")
@click.option("--origin", "origins", multiple=True,
              help="Origin: 'i,j,k' for all fields or 'name=i,j,k' per field.")
@click.option("--no-validate", is_flag=True, default=False,
              help="Skip run-time argument checks.")
def cmd_run(file, stencil_name, backend, externals, inputs, outputs, scalars,
            domain, origins, no_validate):
    """Execute a stencil once on GTSF inputs; write outputs as GTSF."""
    try:
        stencil = compile_stencil(
            Path(file).read_text(),
            stencil_name,
            backend=backend,
            externals=_parse_externals(externals),
            file=file,
            validation="skip" if no_validate else "full",
        )
    except CompilationError as exc:
        _fail_compile(exc)

    layout = default_layout(backend)
    in_paths = _parse_named_paths(inputs, "--in")
    out_paths = _parse_named_paths(outputs, "--out")

    scalar_args = {}
    for pair in scalars:
        if "=" not in pair:
            raise click.UsageError(f"--scalar expects name=value, got {pair!r}")
        name, _, value = pair.partition("=")
        scalar_args[name] = float(value)

    origin_arg = None
    per_field_origins: dict[str, tuple[int, int, int]] = {}
    for spec in origins:
        if "=" in spec:
            name, _, triple = spec.partition("=")
            per_field_origins[name] = _parse_triple(triple, "--origin")
        else:
            origin_arg = _parse_triple(spec, "--origin")
    if per_field_origins:
        origin_arg = per_field_origins if origin_arg is None else per_field_origins

    domain_arg = _parse_triple(domain, "--domain") if domain else None

    try:
        from .errors import Code

        if domain_arg is not None and any(d < 1 for d in domain_arg):
            raise InvocationError(
                Code.DOMAIN_TOO_SMALL, f"domain {domain_arg} is empty"
            )
        fields = {}
        for name, path in in_paths.items():
            fields[name] = read_gtsf(path, layout)
        # allocate any output-only fields once the domain is known
        missing = [
            f for f in stencil.field_signature
            if f.name not in fields and f.name in out_paths
        ]
        if missing:
            tentative = domain_arg
            if tentative is None:
                limits = []
                for f in stencil.field_signature:
                    if f.name not in fields:
                        continue
                    st = fields[f.name]
                    o = per_field_origins.get(
                        f.name, origin_arg if isinstance(origin_arg, tuple) else st.origin
                    )
                    hi = stencil.field_extent(f.name).hi
                    limits.append(tuple(st.shape[a] - o[a] - hi[a] for a in range(3)))
                if not limits:
                    raise click.UsageError(
                        "cannot deduce domain: pass --domain or provide inputs"
                    )
                tentative = tuple(min(l[a] for l in limits) for a in range(3))
            for f in missing:
                ext = stencil.field_extent(f.name)
                halo = corpus_mod.field_halo(ext)
                fields[f.name] = allocate(f.dtype, tentative, halo, layout)
        report = stencil(
            domain=domain_arg,
            origin=origin_arg,
            validate=not no_validate,
            **fields,
            **scalar_args,
        )
    except InvocationError as exc:
        click.echo(str(exc), err=True)
        sys.exit(2)
    except StencilForgeError as exc:
        click.echo(str(exc), err=True)
        sys.exit(2)

    for name, path in out_paths.items():
        write_gtsf(fields[name], path)
    click.echo(json.dumps(report.as_dict()))


@main.command("diff")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--stencil", "stencil_name", default=None)
@click.option("--backends", default="debug,vec", show_default=True,
              help="Comma-separated backend list (at least two).")
@click.option("--sizes", default="16", show_default=True,
              help="Comma-separated sizes: 'n' for n^3 or 'i:j:k' triples.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--tol", default=1e-13, show_default=True, type=float)
@click.option("--externals", multiple=True)
@click.option("--range", "ranges", multiple=True,
              help="Input value range name=lo:hi (default -1:1).")
def cmd_diff(file, stencil_name, backends, sizes, seed, tol, externals, ranges):
    """Run a stencil on identical random inputs per backend and compare."""
    backend_list = [b.strip() for b in backends.split(",") if b.strip()]
    if len(backend_list) < 2:
        raise click.UsageError("--backends needs at least two backends")
    range_map = {}
    for spec in ranges:
        name, _, pair = spec.partition("=")
        lo, _, hi = pair.partition(":")
        try:
            range_map[name] = (float(lo), float(hi))
        except ValueError:
            raise click.UsageError(f"--range expects name=lo:hi, got {spec!r}")

    source = Path(file).read_text()
    try:
        compiled = {
            b: compile_stencil(source, stencil_name, backend=b,
                               externals=_parse_externals(externals), file=file)
            for b in backend_list
        }
    except CompilationError as exc:
        _fail_compile(exc)

    size_list = []
    for tok in sizes.split(","):
        tok = tok.strip()
        if ":" in tok:
            i, j, k = (int(p) for p in tok.split(":"))
            size_list.append((i, j, k))
        else:
            size_list.append((int(tok),) * 3)

    reference = backend_list[0]
    impl = compiled[reference].implementation
    from .backends.common import written_fields

    written = sorted(written_fields(impl))
    worst = 0.0
    failed_field = None
    for domain in size_list:
        results = {}
        for b in backend_list:
            rng = np.random.default_rng(seed)
            fields = corpus_mod.random_field_args(
                compiled[b].implementation, b, domain, rng, ranges=range_map or None
            )
            scalar_rng = np.random.default_rng(seed + 1)
            scalar_args = corpus_mod.random_scalar_args(compiled[b].implementation, scalar_rng)
            compiled[b](domain=domain, **fields, **scalar_args)
            results[b] = {
                name: np.array(fields[name].compute_view(domain)) for name in written
            }
        for b in backend_list[1:]:
            for name in written:
                x, y = results[reference][name], results[b][name]
                denom = np.maximum(np.maximum(np.abs(x), np.abs(y)), 1e-30)
                max_rel = float(np.max(np.abs(x - y) / denom)) if x.size else 0.0
                click.echo(json.dumps({
                    "domain": list(domain), "field": name,
                    "backends": [reference, b], "max_rel": max_rel,
                }))
                if max_rel > worst:
                    worst = max_rel
                    if max_rel > tol:
                        failed_field = name
    if failed_field is not None:
        click.echo(f"diff: FAIL field '{failed_field}' max_rel {worst:.3e} > tol {tol:.1e}",
                   err=True)
        sys.exit(1)
    click.echo(f"diff: ok (max_rel {worst:.3e} <= tol {tol:.1e})")


@main.command("bench")
@click.option("--kernels", default="hdiff,vadv", show_default=True)
@click.option("--backends", default="debug,vec,gen", show_default=True)
@click.option("--sizes", default="32,64,128,256", show_default=True,
              help="Horizontal sizes; domains are size x size x nk.")
@click.option("--nk", default=80, show_default=True, type=int)
@click.option("--reps", default=20, show_default=True, type=int)
@click.option("--warmup", default=3, show_default=True, type=int)
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None)
@click.option("--no-validate", is_flag=True, default=False)
@click.option("--seed", default=0, show_default=True, type=int)
def cmd_bench(kernels, backends, sizes, nk, reps, warmup, csv_path, no_validate, seed):
    """Benchmark kernels across backends; emits CSV (one row per combination)."""
    if reps < 5:
        raise click.UsageError("--reps must be >= 5 (medians need a sample)")
    kernel_list = [k.strip() for k in kernels.split(",") if k.strip()]
    for k in kernel_list:
        if k not in KERNEL_NAMES or k not in KERNEL_BUILDERS:
            raise click.UsageError(f"unknown kernel '{k}'; available: {', '.join(KERNEL_NAMES)}")
    backend_list = [b.strip() for b in backends.split(",") if b.strip()]
    size_list = [int(s) for s in sizes.split(",") if s.strip()]

    rows = [CSV_HEADER]
    for kernel in kernel_list:
        for backend in backend_list:
            for size in size_list:
                result = bench_kernel(
                    kernel, backend, (size, size, nk),
                    reps=reps, warmup=warmup, validate=not no_validate, seed=seed,
                )
                rows.append(result.csv_row())
                click.echo(rows[-1], err=True)
    text = "\n".join(rows) + "\n"
    if csv_path:
        Path(csv_path).write_text(text)
    else:
        click.echo(text, nl=False)


if __name__ == "__main__":
    main()
