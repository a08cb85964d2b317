"""Random legal stencil generator for the differential-testing corpus, plus
shared input-building helpers for running any stencil on random data.

Programs are emitted as source text so each corpus run exercises the whole
pipeline from the lexer down. Generation respects the legality rules by
construction: offset reads of fields written in the same computation follow
the per-order constraints, temporaries are written before every read with
full vertical coverage, and divisions are guarded away from zero. Arithmetic
stays in the bitwise-reproducible subset (+, -, *, guarded /, abs, min, max),
so the reference and bulk engines can be compared bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ir
from .backends.common import written_fields
from .storage import FieldStorage, allocate, default_layout

_LITERALS = (0.1, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, -0.5, -1.0, -2.0)

# interval templates per order: list of (start, end) source tokens whose union
# covers the full axis; sequential orders list them in iteration direction
_TEMPLATES = {
    ir.PARALLEL: [
        [("0", "None")],
        [("0", "1"), ("1", "None")],
        [("0", "-1"), ("-1", "None")],
    ],
    ir.FORWARD: [
        [("0", "None")],
        [("0", "1"), ("1", "None")],
        [("0", "1"), ("1", "-1"), ("-1", "None")],
    ],
    ir.BACKWARD: [
        [("0", "None")],
        [("-1", "None"), ("0", "-1")],
        [("-1", "None"), ("1", "-1"), ("0", "1")],
    ],
}


@dataclass(frozen=True)
class GeneratedProgram:
    name: str
    source: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    scalars: tuple[str, ...]


class _ProgramBuilder:
    def __init__(self, rng: np.random.Generator, index: int):
        self.rng = rng
        self.name = f"rnd{index}"
        self.n_inputs = int(rng.integers(2, 4))
        self.n_outputs = int(rng.integers(1, 3))
        self.n_scalars = int(rng.integers(0, 3))
        self.inputs = [f"fin{i}" for i in range(self.n_inputs)]
        self.outputs = [f"fout{i}" for i in range(self.n_outputs)]
        self.scalars = [f"sc{i}" for i in range(self.n_scalars)]
        self.temp_counter = 0
        self.full_written: set[str] = set()  # written over the full axis, earlier comps
        self.lines: list[str] = []

    # -- expression construction ------------------------------------------

    def _literal(self) -> str:
        return repr(float(self.rng.choice(_LITERALS)))

    def _h_offset(self) -> tuple[int, int]:
        return int(self.rng.integers(-2, 3)), int(self.rng.integers(-2, 3))

    def _leaf(self, readable: list[str], target: str) -> str:
        r = self.rng.random()
        if r < 0.55 or (not readable and r < 0.8):
            name = self.inputs[int(self.rng.integers(0, self.n_inputs))]
            di, dj = self._h_offset()
            dk = int(self.rng.integers(-2, 3))
            return f"{name}[{di}, {dj}, {dk}]"
        if r < 0.8 and readable:
            name = readable[int(self.rng.integers(0, len(readable)))]
            if name == target:
                return name  # own target: zero offset only
            di, dj = self._h_offset()
            return f"{name}[{di}, {dj}, 0]"
        if self.scalars and r < 0.9:
            return self.scalars[int(self.rng.integers(0, self.n_scalars))]
        return self._literal()

    def _expr(self, depth: int, readable: list[str], target: str) -> str:
        if depth <= 0 or self.rng.random() < 0.3:
            return self._leaf(readable, target)
        roll = self.rng.random()
        a = self._expr(depth - 1, readable, target)
        if roll < 0.2:
            return f"abs({a})"
        b = self._expr(depth - 1, readable, target)
        if roll < 0.45:
            return f"({a} + {b})"
        if roll < 0.65:
            return f"({a} - {b})"
        if roll < 0.8:
            return f"({a} * {b})"
        if roll < 0.9:
            fn = "min" if self.rng.random() < 0.5 else "max"
            return f"{fn}({a}, {b})"
        return f"({a} / (1.5 + abs({b})))"

    def _cond(self, readable: list[str], target: str) -> str:
        op = str(self.rng.choice(["<", "<=", ">", ">="]))
        a = self._expr(1, readable, target)
        b = self._expr(1, readable, target)
        return f"{a} {op} {b}"

    # -- program construction ----------------------------------------------

    def _pick_target(self, block_written: list[str]) -> str:
        r = self.rng.random()
        if r < 0.45:
            self.temp_counter += 1
            return f"tmp{self.temp_counter}"
        if r < 0.6 and block_written:
            return block_written[int(self.rng.integers(0, len(block_written)))]
        return self.outputs[int(self.rng.integers(0, self.n_outputs))]

    def _emit_statement(self, indent: str, block_written: list[str]) -> None:
        target = self._pick_target(block_written)
        readable_set = set(block_written) | self.full_written
        if target in self.outputs:
            readable_set.add(target)  # api fields may read caller data at offset 0
        readable = sorted(readable_set)
        if self.rng.random() < 0.25:
            cond = self._cond(readable, target)
            then_rhs = self._expr(2, readable, target)
            else_rhs = self._expr(2, readable, target)
            self.lines.append(f"{indent}if {cond}:")
            self.lines.append(f"{indent}    {target} = {then_rhs}")
            self.lines.append(f"{indent}else:")
            self.lines.append(f"{indent}    {target} = {else_rhs}")
        else:
            self.lines.append(f"{indent}{target} = {self._expr(3, readable, target)}")
        if target not in block_written:
            block_written.append(target)

    def _emit_recurrence(self, order: str, blocksterms: list[list[str]]) -> None:
        """Seed a temporary in the boundary block and propagate it through the
        remaining levels, vadv style."""
        self.temp_counter += 1
        t = f"tmp{self.temp_counter}"
        k_off = -1 if order == ir.FORWARD else 1
        seed_rhs = self._expr(1, sorted(self.full_written), t)
        blocksterms = blocksterms
        blocksterms[0].append(f"{t} = {seed_rhs}")
        carry = self._expr(1, sorted(self.full_written), t)
        for body in blocksterms[1:]:
            body.append(f"{t} = ({carry} + (0.5 * {t}[0, 0, {k_off}]))")
        self.full_written.add(t)  # written in every block: full-axis coverage

    def build(self) -> GeneratedProgram:
        params = [f"{n}: Field[f64]" for n in self.inputs]
        params += [f"{n}: Field[f64]" for n in self.outputs]
        params += [f"{n}: f64" for n in self.scalars]
        self.lines.append(f"stencil {self.name}({', '.join(params)}):")

        n_comps = int(self.rng.integers(1, 4))
        for ci in range(n_comps):
            order = str(self.rng.choice(ir.ORDERS))
            templates = _TEMPLATES[order]
            template = templates[int(self.rng.integers(0, len(templates)))]
            self.lines.append(f"    with computation({order}):")

            # recurrences need a multi-block template in a sequential order
            recurrence_bodies: list[list[str]] | None = None
            if order in (ir.FORWARD, ir.BACKWARD) and len(template) > 1:
                if self.rng.random() < 0.5:
                    recurrence_bodies = [[] for _ in template]
                    self._emit_recurrence(order, recurrence_bodies)

            written_per_block: list[list[str]] = []
            for bi, (start, end) in enumerate(template):
                self.lines.append(f"        with interval({start}, {end}):")
                block_written: list[str] = []
                if recurrence_bodies is not None:
                    for text in recurrence_bodies[bi]:
                        self.lines.append(f"            {text}")
                        block_written.append(text.split(" = ")[0])
                n_stmts = int(self.rng.integers(1, 4))
                for _ in range(n_stmts):
                    self._emit_statement("            ", block_written)
                written_per_block.append(block_written)

            # names written in every block of this computation cover the full axis
            common = set(written_per_block[0])
            for bw in written_per_block[1:]:
                common &= set(bw)
            self.full_written |= common

        # make sure every output is written at least once, over the full axis
        unwritten = [o for o in self.outputs if o not in self.full_written]
        if unwritten:
            self.lines.append("    with computation(PARALLEL):")
            self.lines.append("        with interval(0, None):")
            readable = sorted(self.full_written)
            for o in unwritten:
                self.lines.append(f"            {o} = {self._expr(2, readable, o)}")
                self.full_written.add(o)

        return GeneratedProgram(
            name=self.name,
            source="\n".join(self.lines) + "\n",
            inputs=tuple(self.inputs),
            outputs=tuple(self.outputs),
            scalars=tuple(self.scalars),
        )


def generate_program(rng: np.random.Generator, index: int) -> GeneratedProgram:
    """One random legal stencil as source text."""
    return _ProgramBuilder(rng, index).build()


def generate_corpus(seed: int, count: int) -> list[GeneratedProgram]:
    rng = np.random.default_rng(seed)
    return [generate_program(rng, i) for i in range(count)]


# ---------------------------------------------------------------------------
# Input construction shared by the differential harness and the CLI
# ---------------------------------------------------------------------------


def field_halo(extent: ir.Extent) -> tuple[int, int, int]:
    return tuple(max(-lo, hi) for lo, hi in zip(extent.lo, extent.hi))  # type: ignore[return-value]


def random_field_args(
    impl: ir.StencilImplementation,
    backend: str,
    domain: tuple[int, int, int],
    rng: np.random.Generator,
    ranges: dict[str, tuple[float, float]] | None = None,
    poison: bool = False,
) -> dict[str, FieldStorage]:
    """Allocate per-backend storages for every api field: random values for
    pure inputs (uniform over ``ranges``, default [-1, 1)), zeros for written
    fields. With ``poison``, cells outside each field's required region
    (origin+lo .. origin+domain+hi) are NaN."""
    layout = default_layout(backend)
    written = written_fields(impl)
    out: dict[str, FieldStorage] = {}
    for f in impl.api_fields:
        ext = impl.field_extent(f.name)
        halo = field_halo(ext)
        storage = allocate(f.dtype, domain, halo, layout, fill="poison" if poison else "zeros")
        o = storage.origin
        lo_, hi_ = ranges.get(f.name, (-1.0, 1.0)) if ranges else (-1.0, 1.0)
        region = tuple(
            slice(o[a] + ext.lo[a], o[a] + domain[a] + ext.hi[a]) for a in range(3)
        )
        region_shape = tuple(s.stop - s.start for s in region)
        if f.name in written:
            storage.view[region] = 0.0
        else:
            values = rng.uniform(lo_, hi_, region_shape)
            storage.view[region] = values.astype(storage.view.dtype)
        out[f.name] = storage
    return out


def random_scalar_args(
    impl: ir.StencilImplementation, rng: np.random.Generator
) -> dict[str, float]:
    return {s.name: float(rng.uniform(-1.0, 1.0)) for s in impl.api_scalars}
