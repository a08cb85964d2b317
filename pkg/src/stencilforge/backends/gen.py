"""Native source-emitting engine: generates a self-contained C file per
stencil implementation, compiles it to a shared object through the system C
compiler, and loads the entry symbol via ctypes.

Entry ABI (documented bit-exactly; see also the README): the exported symbol
``gts_run_<name>_<digest8>`` takes, in order:

  int64 ni, nj, nk                        -- compute domain sizes
  for each api field in declaration order:
      T*    base pointer (T = double for f64, float for f32)
      int64 stride_i, stride_j, stride_k  -- element strides, logical axes
      int64 origin_i, origin_j, origin_k  -- compute-domain anchor
  for each api scalar in declaration order:
      double (f64) or float (f32) value

Loop structure: one fused k-loop per interval group; at each level the group's
stages iterate their horizontal compute extents in program order. PARALLEL
multistages parallelize over k, sequential ones over rows of each stage plane
(static schedule, so results are bitwise-identical for any thread count).
Temporaries live in a per-call arena. The build cache is keyed by fingerprint;
a hit never invokes the external compiler.
"""

from __future__ import annotations

import ctypes
import json
import math
import os
import shutil
import subprocess
import sys
import tempfile
import time
import uuid
from pathlib import Path
from typing import Optional

from .. import ir
from ..errors import BackendError, Code
from .common import ExecutableStencil, Int3

# incremented on every real external-compiler subprocess call
COMPILER_INVOCATIONS = 0

_PROBE_CACHE: dict[str, str] = {}


def cc_command() -> str:
    return os.environ.get("GTS_CC", "cc")


def cache_root() -> Path:
    env = os.environ.get("GTS_CACHE_DIR")
    if env:
        return Path(env)
    if sys.platform == "darwin":
        base = Path.home() / "Library" / "Caches"
    else:
        base = Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache"))
    return base / "stencil-forge"


def _compile_flags() -> list[str]:
    # -ffp-contract=off keeps arithmetic bitwise-aligned with the reference
    # and bulk engines (no FMA contraction)
    return ["-O3", "-fPIC", "-shared", "-fopenmp", "-ffp-contract=off"]


def toolchain_version() -> str:
    """Version line of the configured C compiler; probed once per process."""
    cc = cc_command()
    if cc in _PROBE_CACHE:
        return _PROBE_CACHE[cc]
    try:
        out = subprocess.run(
            [cc, "--version"], capture_output=True, text=True, timeout=30
        )
    except (OSError, subprocess.TimeoutExpired) as exc:
        raise BackendError(Code.TOOLCHAIN_MISSING, f"cannot run '{cc} --version': {exc}")
    if out.returncode != 0:
        raise BackendError(
            Code.TOOLCHAIN_MISSING, f"'{cc} --version' failed: {out.stderr.strip()}"
        )
    version = out.stdout.splitlines()[0].strip() if out.stdout else cc
    _PROBE_CACHE[cc] = f"{cc} | {version} | {' '.join(_compile_flags())}"
    return _PROBE_CACHE[cc]


def _invoke_compiler(src_path: Path, so_path: Path) -> None:
    global COMPILER_INVOCATIONS
    cc = cc_command()
    cmd = [cc, *_compile_flags(), str(src_path), "-o", str(so_path), "-lm"]
    COMPILER_INVOCATIONS += 1
    try:
        proc = subprocess.run(cmd, capture_output=True, text=True, timeout=300)
    except OSError as exc:
        raise BackendError(Code.TOOLCHAIN_MISSING, f"cannot run '{cc}': {exc}")
    if proc.returncode != 0:
        raise BackendError(
            Code.COMPILE_FAILED,
            f"{' '.join(cmd)} failed:\n{proc.stderr.strip()}",
        )


# ---------------------------------------------------------------------------
# C source generation
# ---------------------------------------------------------------------------


def _c_float(value: float) -> str:
    if math.isnan(value):
        return "NAN"
    if math.isinf(value):
        return "-INFINITY" if value < 0 else "INFINITY"
    return float(value).hex()


_BUILTIN_C = {
    "abs": "fabs",
    "min": "gts_min",
    "max": "gts_max",
    "sqrt": "sqrt",
    "exp": "exp",
    "log": "log",
    "pow": "pow",
    "floor": "floor",
    "ceil": "ceil",
}

_BINOP_C = {"and": "&&", "or": "||"}


def _c_expr(e: ir.Expr, f32_names: set[str]) -> str:
    if isinstance(e, ir.Literal):
        return _c_float(float(e.value))
    if isinstance(e, ir.ScalarRef):
        return f"((double)sc_{e.name})"
    if isinstance(e, ir.FieldAccess):
        args = ", ".join(
            f"gts_{ax}{off:+d}" if off else f"gts_{ax}"
            for ax, off in zip("ijk", e.offset)
        )
        access = f"AT_{e.field}({args})"
        return f"((double){access})" if e.field in f32_names else access
    if isinstance(e, ir.UnaryOp):
        inner = _c_expr(e.operand, f32_names)
        return f"(!{inner})" if e.op == "not" else f"(-{inner})"
    if isinstance(e, ir.BinaryOp):
        op = _BINOP_C.get(e.op, e.op)
        return f"({_c_expr(e.left, f32_names)} {op} {_c_expr(e.right, f32_names)})"
    if isinstance(e, ir.BuiltinCall):
        args = ", ".join(_c_expr(a, f32_names) for a in e.args)
        return f"{_BUILTIN_C[e.name]}({args})"
    raise TypeError(f"cannot generate code for {type(e).__name__}")


def _c_stmt(stmt: ir.Stmt, f32_names: set[str], indent: str, out: list[str]) -> None:
    if isinstance(stmt, ir.Assign):
        value = _c_expr(stmt.value, f32_names)
        target = f"AT_{stmt.target.field}(gts_i, gts_j, gts_k)"
        if stmt.target.field in f32_names:
            out.append(f"{indent}{target} = (float)({value});")
        else:
            out.append(f"{indent}{target} = {value};")
        return
    if isinstance(stmt, ir.If):
        out.append(f"{indent}if ({_c_expr(stmt.cond, f32_names)}) {{")
        for s in stmt.then_body:
            _c_stmt(s, f32_names, indent + "  ", out)
        if stmt.else_body:
            out.append(f"{indent}}} else {{")
            for s in stmt.else_body:
                _c_stmt(s, f32_names, indent + "  ", out)
        out.append(f"{indent}}}")
        return
    raise TypeError(f"cannot generate code for {type(stmt).__name__}")


def _bound_expr(b: ir.AxisBound) -> str:
    return str(b.offset) if b.ref == ir.START else f"nk + {b.offset}"


def entry_name(impl: ir.StencilImplementation, fingerprint: ir.Fingerprint) -> str:
    return f"gts_run_{impl.name}_{fingerprint.short}"


def _stage_loops(
    stage: ir.Stage,
    f32_names: set[str],
    indent: str,
    parallel_rows: bool,
    tile_i: Optional[int],
    tile_j: Optional[int],
    out: list[str],
) -> None:
    e = stage.compute_extent
    i0, i1 = str(e.lo[0]), f"ni + {e.hi[0]}"
    j0, j1 = str(e.lo[1]), f"nj + {e.hi[1]}"
    pad = indent
    if parallel_rows:
        out.append(f"{pad}#pragma omp for schedule(static)")
    if tile_i:
        out.append(f"{pad}for (gts_int gts_ii = {i0}; gts_ii < {i1}; gts_ii += {tile_i}) {{")
        pad += "  "
        out.append(
            f"{pad}for (gts_int gts_i = gts_ii; "
            f"gts_i < (gts_ii + {tile_i} < {i1} ? gts_ii + {tile_i} : {i1}); ++gts_i) {{"
        )
    else:
        out.append(f"{pad}for (gts_int gts_i = {i0}; gts_i < {i1}; ++gts_i) {{")
    pad += "  "
    if tile_j:
        out.append(f"{pad}for (gts_int gts_jj = {j0}; gts_jj < {j1}; gts_jj += {tile_j}) {{")
        pad += "  "
        out.append(
            f"{pad}for (gts_int gts_j = gts_jj; "
            f"gts_j < (gts_jj + {tile_j} < {j1} ? gts_jj + {tile_j} : {j1}); ++gts_j) {{"
        )
    else:
        out.append(f"{pad}for (gts_int gts_j = {j0}; gts_j < {j1}; ++gts_j) {{")
    pad += "  "
    _c_stmt(stage.body, f32_names, pad, out)
    while len(pad) > len(indent):
        pad = pad[:-2]
        out.append(f"{pad}}}")


def generate_source(
    impl: ir.StencilImplementation,
    fingerprint: ir.Fingerprint,
    options: Optional[dict] = None,
) -> str:
    """Emit the self-contained C translation unit; deterministic per fingerprint."""
    opts = options or {}
    tile_i = opts.get("tile_i")
    tile_j = opts.get("tile_j")
    threaded = opts.get("parallel", True)

    f32_names = {f.name for f in impl.api_fields if f.dtype == ir.F32}
    f32_names |= {t.name for t in impl.temporaries if t.dtype == ir.F32}
    ctype = {ir.F32: "float", ir.F64: "double"}

    out: list[str] = []
    w = out.append
    w("/* generated by stencilforge; do not edit */")
    w(f"/* stencil: {impl.name}  fingerprint: {fingerprint.digest} */")
    w("#include <math.h>")
    w("#include <stdlib.h>")
    w("#include <stdint.h>")
    w("#if defined(_OPENMP)")
    w("#include <omp.h>")
    w("#endif")
    w("")
    w("typedef int64_t gts_int;")
    w("")
    w("static inline double gts_min(double a, double b) {")
    w("  if (a != a) return a;")
    w("  if (b != b) return b;")
    w("  return a <= b ? a : b;")
    w("}")
    w("static inline double gts_max(double a, double b) {")
    w("  if (a != a) return a;")
    w("  if (b != b) return b;")
    w("  return a >= b ? a : b;")
    w("}")
    w("")

    params = ["gts_int ni", "gts_int nj", "gts_int nk"]
    for f in impl.api_fields:
        # api pointers may legally alias (the same storage bound to two
        # parameters), so no restrict here; arena temporaries are private
        params.append(f"{ctype[f.dtype]}* f_{f.name}")
        params.extend(f"gts_int s_{f.name}_{ax}" for ax in "ijk")
        params.extend(f"gts_int o_{f.name}_{ax}" for ax in "ijk")
    for s in impl.api_scalars:
        params.append(f"{ctype[s.dtype]} sc_{s.name}")

    for f in impl.api_fields:
        w(
            f"#define AT_{f.name}(I, J, K) f_{f.name}[(size_t)(((I) + o_{f.name}_i) * "
            f"s_{f.name}_i + ((J) + o_{f.name}_j) * s_{f.name}_j + "
            f"((K) + o_{f.name}_k) * s_{f.name}_k)]"
        )
    for t in impl.temporaries:
        ei, ej = -t.extent.lo[0], -t.extent.lo[1]
        w(
            f"#define AT_{t.name}(I, J, K) t_{t.name}[(size_t)(((I) + {ei}) * "
            f"ts_{t.name}_i + ((J) + {ej}) * ts_{t.name}_j + (K) * ts_{t.name}_k)]"
        )
    w("")
    w("__attribute__((visibility(\"default\")))")
    w(f"void {entry_name(impl, fingerprint)}(")
    w("    " + ",\n    ".join(params) + ") {")
    w("  if (ni <= 0 || nj <= 0 || nk <= 0) return;")
    w("#if defined(_OPENMP)")
    w("  { const char* gts_nt = getenv(\"GTS_NUM_THREADS\");")
    w("    if (gts_nt) { int gts_n = atoi(gts_nt); if (gts_n > 0) omp_set_num_threads(gts_n); } }")
    w("#endif")

    # per-call arena holding all temporaries, 64-byte aligned slots
    if impl.temporaries:
        w("  size_t gts_arena_bytes = 0;")
        for t in impl.temporaries:
            e = t.extent
            di = f"(ni + {e.hi[0] - e.lo[0]})"
            dj = f"(nj + {e.hi[1] - e.lo[1]})"
            w(f"  const gts_int td_{t.name}_i = {di}, td_{t.name}_j = {dj};")
            w(
                f"  const gts_int ts_{t.name}_i = td_{t.name}_j, ts_{t.name}_j = 1, "
                f"ts_{t.name}_k = td_{t.name}_i * td_{t.name}_j;"
            )
            w(
                f"  const size_t gts_off_{t.name} = gts_arena_bytes; gts_arena_bytes += "
                f"(((size_t)(td_{t.name}_i * td_{t.name}_j * nk) * sizeof({ctype[t.dtype]}) "
                f"+ 63) / 64) * 64;"
            )
        w("  char* gts_arena = (char*)malloc(gts_arena_bytes ? gts_arena_bytes : 1);")
        for t in impl.temporaries:
            w(
                f"  {ctype[t.dtype]}* restrict t_{t.name} = "
                f"({ctype[t.dtype]}*)(gts_arena + gts_off_{t.name});"
            )
    w("")

    from .common import interval_groups  # local import to avoid cycle at module load

    for ms_idx, ms in enumerate(impl.multistages):
        w(f"  /* multistage {ms_idx}: {ms.order} */")
        groups = interval_groups(ms)
        if ms.order == ir.PARALLEL:
            for interval, stages in groups:
                w("  {")
                w(f"    const gts_int gts_k0 = {_bound_expr(interval.start)};")
                w(f"    const gts_int gts_k1 = {_bound_expr(interval.end)};")
                if threaded:
                    w("    #pragma omp parallel for schedule(static)")
                w("    for (gts_int gts_k = gts_k0; gts_k < gts_k1; ++gts_k) {")
                for stage in stages:
                    _stage_loops(stage, f32_names, "      ", False, tile_i, tile_j, out)
                w("    }")
                w("  }")
        else:
            descending = ms.order == ir.BACKWARD
            if threaded:
                w("  #pragma omp parallel")
            w("  {")
            for interval, stages in groups:
                w("  {")
                w(f"    const gts_int gts_k0 = {_bound_expr(interval.start)};")
                w(f"    const gts_int gts_k1 = {_bound_expr(interval.end)};")
                if descending:
                    w("    for (gts_int gts_k = gts_k1 - 1; gts_k >= gts_k0; --gts_k) {")
                else:
                    w("    for (gts_int gts_k = gts_k0; gts_k < gts_k1; ++gts_k) {")
                for stage in stages:
                    _stage_loops(stage, f32_names, "      ", threaded, tile_i, tile_j, out)
                w("    }")
                w("  }")
            w("  }")
    if impl.temporaries:
        w("  free(gts_arena);")
    w("}")
    for f in impl.api_fields:
        w(f"#undef AT_{f.name}")
    for t in impl.temporaries:
        w(f"#undef AT_{t.name}")
    w("")
    return "\n".join(out)


# ---------------------------------------------------------------------------
# Build cache
# ---------------------------------------------------------------------------


class BuildCache:
    """Fingerprint-keyed store of generated sources and shared objects.

    Entries are immutable once installed; concurrent builders of the same key
    resolve to one winner through an atomic directory rename.
    """

    def __init__(self, root: Optional[os.PathLike] = None):
        self.root = Path(root) if root is not None else cache_root()
        self.root.mkdir(parents=True, exist_ok=True)

    def entry_dir(self, fingerprint: ir.Fingerprint) -> Path:
        return self.root / fingerprint.digest

    def so_path(self, fingerprint: ir.Fingerprint) -> Path:
        return self.entry_dir(fingerprint) / "module.so"

    def source_path(self, fingerprint: ir.Fingerprint) -> Path:
        return self.entry_dir(fingerprint) / "source.c"

    def lookup(self, fingerprint: ir.Fingerprint) -> Optional[Path]:
        so = self.so_path(fingerprint)
        return so if so.is_file() else None

    def evict(self, fingerprint: ir.Fingerprint) -> None:
        shutil.rmtree(self.entry_dir(fingerprint), ignore_errors=True)

    def install(self, fingerprint: ir.Fingerprint, source: str, stencil_name: str) -> Path:
        """Build an entry (compiling) and atomically publish it; returns the
        shared-object path. Losing a publish race defers to the winner."""
        tmp = self.root / f".build-{fingerprint.short}-{os.getpid()}-{uuid.uuid4().hex[:8]}"
        tmp.mkdir(parents=True)
        try:
            src = tmp / "source.c"
            src.write_text(source)
            _invoke_compiler(src, tmp / "module.so")
            meta = {
                "fingerprint": fingerprint.digest,
                "stencil": stencil_name,
                "toolchain": toolchain_version(),
                "created": time.time(),
            }
            (tmp / "meta.json").write_text(json.dumps(meta, indent=2))
            try:
                os.rename(tmp, self.entry_dir(fingerprint))
            except OSError:
                if self.lookup(fingerprint) is None:
                    raise
        finally:
            shutil.rmtree(tmp, ignore_errors=True)
        return self.so_path(fingerprint)


def probe_toolchain() -> None:
    """Verify the external compiler produces loadable objects; raises
    ToolchainMissing/CompileFailed otherwise. The result is cached per process."""
    key = f"probe:{cc_command()}"
    if key in _PROBE_CACHE:
        return
    with tempfile.TemporaryDirectory(prefix="gts-probe-") as tmp:
        src = Path(tmp) / "probe.c"
        src.write_text("int gts_probe(void) { return 42; }\n")
        so = Path(tmp) / "probe.so"
        global COMPILER_INVOCATIONS
        before = COMPILER_INVOCATIONS
        _invoke_compiler(src, so)
        COMPILER_INVOCATIONS = before  # probe does not count as a stencil build
        lib = ctypes.CDLL(str(so))
        if lib.gts_probe() != 42:
            raise BackendError(Code.TOOLCHAIN_MISSING, "toolchain probe returned garbage")
    _PROBE_CACHE[key] = "ok"


# ---------------------------------------------------------------------------
# Compile, load, and marshal
# ---------------------------------------------------------------------------


_OBJECT_MAGICS = (b"\x7fELF", b"\xcf\xfa\xed\xfe", b"\xfe\xed\xfa\xcf", b"\xca\xfe\xba\xbe")


def _load_library(so_path: Path) -> ctypes.CDLL:
    """dlopen with an explicit header check: dlopen caches loaded objects by
    pathname within a process, so a corrupted cache entry must be detected
    before asking for the (possibly stale) handle."""
    with open(so_path, "rb") as f:
        magic = f.read(4)
    if magic not in _OBJECT_MAGICS:
        raise OSError(f"{so_path} is not a loadable object")
    return ctypes.CDLL(str(so_path))


def compile_and_load(
    impl: ir.StencilImplementation,
    fingerprint: ir.Fingerprint,
    cache: BuildCache,
    options: Optional[dict] = None,
) -> ExecutableStencil:
    probe_toolchain()
    source = generate_source(impl, fingerprint, options)
    cache_hit = cache.lookup(fingerprint) is not None
    if cache_hit:
        so_path = cache.so_path(fingerprint)
    else:
        so_path = cache.install(fingerprint, source, impl.name)

    symbol = entry_name(impl, fingerprint)
    try:
        lib = _load_library(so_path)
    except OSError:
        # corrupt entry: rebuild once
        cache.evict(fingerprint)
        so_path = cache.install(fingerprint, source, impl.name)
        cache_hit = False
        try:
            lib = _load_library(so_path)
        except OSError as exc:
            raise BackendError(Code.CACHE_CORRUPT, f"rebuilt object unloadable: {exc}")
    try:
        fn = getattr(lib, symbol)
    except AttributeError:
        raise BackendError(Code.SYMBOL_NOT_FOUND, f"symbol '{symbol}' missing in {so_path}")

    argtypes: list = [ctypes.c_longlong] * 3
    for f in impl.api_fields:
        argtypes.append(ctypes.c_void_p)
        argtypes.extend([ctypes.c_longlong] * 6)
    scalar_ctypes = []
    for s in impl.api_scalars:
        ct = ctypes.c_float if s.dtype == ir.F32 else ctypes.c_double
        scalar_ctypes.append(ct)
        argtypes.append(ct)
    fn.argtypes = argtypes
    fn.restype = None

    field_order = [f.name for f in impl.api_fields]
    scalar_order = [s.name for s in impl.api_scalars]

    from ..storage import export_descriptor

    def run(domain: Int3, field_args, scalar_args) -> None:
        args: list = [domain[0], domain[1], domain[2]]
        for name in field_order:
            storage, origin = field_args[name]
            desc = export_descriptor(storage)
            args.append(desc.base_address)
            args.extend(storage.strides)
            args.extend(origin)
        for name, ct in zip(scalar_order, scalar_ctypes):
            args.append(ct(scalar_args[name]))
        fn(*args)

    return ExecutableStencil(
        "gen",
        fingerprint,
        run,
        build_info={
            "cache_hit": cache_hit,
            "so_path": str(so_path),
            "source_path": str(cache.source_path(fingerprint)),
            "symbol": symbol,
        },
    )
