"""Acceptance criteria. One test per criterion; each prints a single
ACCEPTANCE <n> <name>: PASS/FAIL line (run with -s to see them live).

1. Backend equivalence on hdiff, vadv, and 200 random stencils (rel 1e-13).
2. Oracle correctness: vadv vs dense solve (1e-12), hdiff vs nested loops (1e-14).
3. Extent soundness: NaN-poison halo tests, plus hdiff poison-tightness.
4. Performance ordering at 128x128x80: gen <= vec/5 and vec <= debug/5.
5. Validation overhead measurable; kernel times agree; outputs bitwise equal.
6. Cache behavior: reformatting never recompiles; changed externals do.
7. gen results bitwise-identical for 1, 2, and 8 worker threads.
8. GTSF round-trip bit-exact for 1000 random fields, NaN payloads included.
"""

import contextlib
import io
import os
import statistics

import numpy as np
import pytest

import stencilforge as sf
from stencilforge import corpus
from stencilforge.backends import gen
from stencilforge.bench import make_hdiff_args, make_vadv_args, time_stencil
from stencilforge.kernels import kernel_source
from stencilforge.oracles import hdiff_reference, make_diagonally_dominant, vadv_reference
from stencilforge.storage import LayoutSpec, allocate, read_gtsf, write_gtsf

BACKENDS = ("debug", "vec", "gen")

VADV_RANGES = {"a": (0.1, 0.45), "c": (0.1, 0.45), "b": (1.0, 2.0), "d": (-1.0, 1.0)}

CORPUS_SIZE = 200
CORPUS_DOMAINS = [(4, 4, 6), (8, 7, 5), (16, 16, 16), (6, 12, 9), (16, 8, 4), (5, 5, 16)]


@contextlib.contextmanager
def criterion(number: int, name: str):
    detail = {}
    try:
        yield detail
    except BaseException:
        print(f"ACCEPTANCE {number} {name}: FAIL")
        raise
    extra = f" ({detail['note']})" if "note" in detail else ""
    print(f"ACCEPTANCE {number} {name}: PASS{extra}")


def max_rel(a: np.ndarray, b: np.ndarray) -> float:
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-30)
    return float(np.max(np.abs(a - b) / denom))


@pytest.fixture(scope="module")
def corpus_programs():
    return corpus.generate_corpus(seed=2024, count=CORPUS_SIZE)


@pytest.fixture(scope="module")
def corpus_compiled(corpus_programs):
    """program -> backend -> CompiledStencil, shared across criteria 1 and 3."""
    compiled = []
    for program in corpus_programs:
        compiled.append(
            (
                program,
                {
                    b: sf.compile_stencil(program.source, program.name, backend=b)
                    for b in BACKENDS
                },
            )
        )
    return compiled


def run_backend(stencil, backend, domain, seed, ranges=None, poison=False):
    rng = np.random.default_rng(seed)
    fields = corpus.random_field_args(
        stencil.implementation, backend, domain, rng, ranges=ranges, poison=poison
    )
    scalars = corpus.random_scalar_args(
        stencil.implementation, np.random.default_rng(seed + 1)
    )
    stencil(domain=domain, **fields, **scalars)
    return fields


def test_criterion_1_backend_equivalence(corpus_compiled):
    with criterion(1, "backend equivalence") as detail:
        worst = 0.0
        kernels = [
            ("hdiff", kernel_source("hdiff"), None),
            ("vadv", kernel_source("vadv"), VADV_RANGES),
        ]
        for name, source, ranges in kernels:
            compiled = {b: sf.compile_stencil(source, name, backend=b) for b in BACKENDS}
            from stencilforge.backends.common import written_fields

            written = written_fields(compiled["debug"].implementation)
            for domain in [(16, 16, 16), (16, 16, 8)]:
                results = {}
                for b in BACKENDS:
                    fields = run_backend(compiled[b], b, domain, seed=11, ranges=ranges)
                    results[b] = {
                        w: np.asarray(fields[w].compute_view(domain)).copy()
                        for w in written
                    }
                for b in ("vec", "gen"):
                    for w in written:
                        worst = max(worst, max_rel(results["debug"][w], results[b][w]))
        assert worst <= 1e-13, f"kernel equivalence broke: {worst}"

        for idx, (program, compiled) in enumerate(corpus_compiled):
            domain = CORPUS_DOMAINS[idx % len(CORPUS_DOMAINS)]
            results = {}
            for b in BACKENDS:
                fields = run_backend(compiled[b], b, domain, seed=50_000 + idx)
                results[b] = {
                    o: np.asarray(fields[o].compute_view(domain)).copy()
                    for o in program.outputs
                }
            for b in ("vec", "gen"):
                for o in program.outputs:
                    rel = max_rel(results["debug"][o], results[b][o])
                    worst = max(worst, rel)
                    assert rel <= 1e-13, f"{program.name}.{o} [{b}]: rel {rel}"
        detail["note"] = f"{CORPUS_SIZE} random programs + 2 kernels, max rel {worst:.2e}"


def test_criterion_2_oracle_correctness():
    with criterion(2, "oracle correctness") as detail:
        worst_vadv = 0.0
        for nk in (1, 3, 8, 80):
            rng = np.random.default_rng(300 + nk)
            a, b, c, d = make_diagonally_dominant(rng, (10, 10, nk))  # 100 columns
            st = sf.compile_stencil(kernel_source("vadv"), backend="vec")
            layout = sf.default_layout("vec")
            args = {
                n: sf.from_array(v, (0, 0, 0), layout)
                for n, v in zip("abcd", (a, b, c, d))
            }
            x = sf.from_array(np.zeros_like(a), (0, 0, 0), layout)
            st(x=x, **args)
            expected = vadv_reference(a, b, c, d)
            # per-column solve error relative to the column solution norm
            got = np.asarray(x.data())
            diff = np.max(np.abs(got - expected), axis=2)
            scale = np.maximum(np.max(np.abs(expected), axis=2), 1e-30)
            rel = float(np.max(diff / scale))
            worst_vadv = max(worst_vadv, rel)
            assert rel <= 1e-12, f"vadv K={nk}: rel {rel}"

        worst_hdiff = 0.0
        for domain in [(8, 8, 8), (16, 16, 16), (32, 32, 8), (64, 64, 80)]:
            rng = np.random.default_rng(sum(domain))
            inp_vals = rng.uniform(-1, 1, (domain[0] + 4, domain[1] + 4, domain[2]))
            st = sf.compile_stencil(kernel_source("hdiff"), backend="vec")
            layout = sf.default_layout("vec")
            inp = sf.from_array(inp_vals, (2, 2, 0), layout)
            out = sf.from_array(np.zeros(domain), (0, 0, 0), layout)
            st(inp=inp, coeff=0.05, out=out)
            expected = hdiff_reference(inp_vals, 0.05)
            rel = max_rel(np.asarray(out.data()), expected)
            worst_hdiff = max(worst_hdiff, rel)
            assert rel <= 1e-14, f"hdiff {domain}: rel {rel}"
        detail["note"] = f"vadv max rel {worst_vadv:.2e}, hdiff max rel {worst_hdiff:.2e}"


def test_criterion_3_extent_soundness(corpus_compiled):
    with criterion(3, "extent soundness (NaN poison)") as detail:
        checked = 0
        for name, source, ranges in [
            ("hdiff", kernel_source("hdiff"), None),
            ("vadv", kernel_source("vadv"), VADV_RANGES),
        ]:
            st = sf.compile_stencil(source, name, backend="debug")
            from stencilforge.backends.common import written_fields

            domain = (10, 9, 8)
            fields = run_backend(st, "debug", domain, seed=77, ranges=ranges, poison=True)
            for w in written_fields(st.implementation):
                assert not np.isnan(np.asarray(fields[w].compute_view(domain))).any(), (
                    f"{name}.{w} leaked poison"
                )
            checked += 1

        for idx, (program, compiled) in enumerate(corpus_compiled):
            st = compiled["debug"]
            domain = CORPUS_DOMAINS[idx % len(CORPUS_DOMAINS)]
            fields = run_backend(st, "debug", domain, seed=90_000 + idx, poison=True)
            for o in program.outputs:
                dom = np.asarray(fields[o].compute_view(domain))
                assert not np.isnan(dom).any(), f"{program.name}.{o} leaked poison"
            checked += 1

        # poison-tightness: shrinking hdiff's (2,2,0) halo must leak NaN
        st = sf.compile_stencil(kernel_source("hdiff"), backend="debug")
        layout = sf.default_layout("debug")
        domain = (8, 8, 4)
        leaks = 0
        for axis in (0, 1):
            for side in ("lo", "hi"):
                rng = np.random.default_rng(5)
                vals = rng.uniform(-1, 1, (domain[0] + 4, domain[1] + 4, domain[2]))
                sl = [slice(None)] * 3
                sl[axis] = slice(0, 1) if side == "lo" else slice(-1, None)
                vals[tuple(sl)] = np.nan
                inp = sf.from_array(vals, (2, 2, 0), layout)
                out = sf.from_array(np.zeros(domain), (0, 0, 0), layout)
                st(inp=inp, coeff=0.05, out=out, domain=domain)
                if np.isnan(np.asarray(out.data())).any():
                    leaks += 1
        assert leaks == 4, "hdiff extents are wider than needed"
        detail["note"] = f"{checked} poison runs clean; hdiff tightness 4/4"


def test_criterion_4_performance_ordering():
    with criterion(4, "performance ordering at 128x128x80") as detail:
        domain = (128, 128, 80)
        results = {}
        plans = {"debug": (5, 1), "vec": (5, 1), "gen": (10, 3)}
        for backend, (reps, warmup) in plans.items():
            st = sf.compile_stencil(kernel_source("hdiff"), backend=backend)
            args = make_hdiff_args(backend, domain, seed=1)
            results[backend] = time_stencil(
                st, args, reps=reps, warmup=warmup, kernel="hdiff"
            ).kernel_ns_median
        vec_over_gen = results["vec"] / results["gen"]
        debug_over_vec = results["debug"] / results["vec"]
        detail["note"] = (
            f"debug {results['debug']/1e6:.1f} ms, vec {results['vec']/1e6:.1f} ms, "
            f"gen {results['gen']/1e6:.2f} ms; vec/gen {vec_over_gen:.1f}x, "
            f"debug/vec {debug_over_vec:.1f}x"
        )
        assert results["gen"] * 5 <= results["vec"], detail["note"]
        assert results["vec"] * 5 <= results["debug"], detail["note"]


def test_criterion_5_validation_overhead():
    with criterion(5, "validation overhead") as detail:
        domain = (32, 32, 80)
        st = sf.compile_stencil(kernel_source("vadv"), backend="gen")
        args = make_vadv_args("gen", domain, seed=2)

        # bitwise identity of outputs under both policies
        outs = []
        for validate in (True, False):
            fresh = make_vadv_args("gen", domain, seed=2)
            st(validate=validate, **fresh)
            outs.append(np.asarray(fresh["x"].data()).copy())
        assert np.array_equal(outs[0], outs[1])

        reps, warmup = 200, 10
        totals = {True: [], False: []}
        kernels = {True: [], False: []}
        for validate in (True, False):
            for rep in range(warmup + reps):
                report = st(validate=validate, **args)
                if rep >= warmup:
                    totals[validate].append(report.total_ns)
                    kernels[validate].append(report.kernel_ns)
        margin = statistics.median(totals[True]) - statistics.median(totals[False])
        k_full = statistics.median(kernels[True])
        k_skip = statistics.median(kernels[False])
        detail["note"] = (
            f"median validation margin {margin/1e3:.1f} us over {reps} reps; "
            f"kernel {k_full/1e3:.0f} vs {k_skip/1e3:.0f} us"
        )
        assert margin > 0, detail["note"]
        assert abs(k_full - k_skip) <= 0.5 * max(k_full, k_skip) + 100_000, detail["note"]


def test_criterion_6_cache_behavior(tmp_path):
    with criterion(6, "cache behavior") as detail:
        cache = str(tmp_path / "cache")
        src = kernel_source("hdiff")
        before = gen.COMPILER_INVOCATIONS
        st1 = sf.compile_stencil(src, "hdiff", backend="gen", cache_dir=cache)
        assert gen.COMPILER_INVOCATIONS == before + 1

        variant = "# reformatted\n" + src.replace(
            "out = inp - coeff", "out  =  inp  -  coeff"
        ).replace("with computation(PARALLEL):", "with computation(PARALLEL):  # body")
        st2 = sf.compile_stencil(variant, "hdiff", backend="gen", cache_dir=cache)
        assert gen.COMPILER_INVOCATIONS == before + 1, "reformatting recompiled"
        assert st2.build_info["cache_hit"] is True
        assert st1.build_info["so_path"] == st2.build_info["so_path"]

        ext_src = (
            "stencil scaled(a: Field[f64], b: Field[f64]):\n"
            "    with computation(PARALLEL):\n"
            "        b = a * K0\n"
        )
        sf.compile_stencil(ext_src, backend="gen", externals={"K0": 1.0}, cache_dir=cache)
        mid = gen.COMPILER_INVOCATIONS
        sf.compile_stencil(ext_src, backend="gen", externals={"K0": 2.0}, cache_dir=cache)
        assert gen.COMPILER_INVOCATIONS == mid + 1, "changed external did not rebuild"
        detail["note"] = "reformat: 0 compiles, same object path; external change: rebuild"


def test_criterion_7_threading_determinism():
    with criterion(7, "threading determinism") as detail:
        st = sf.compile_stencil(kernel_source("hdiff"), backend="gen")
        domain = (64, 64, 80)
        outs = {}
        for n in ("1", "2", "8"):
            os.environ["GTS_NUM_THREADS"] = n
            try:
                args = make_hdiff_args("gen", domain, seed=3)
                st(**args)
                outs[n] = np.asarray(args["out"].data()).copy()
            finally:
                os.environ.pop("GTS_NUM_THREADS", None)
        assert np.array_equal(outs["1"], outs["2"])
        assert np.array_equal(outs["1"], outs["8"])
        detail["note"] = "bitwise identical for GTS_NUM_THREADS in {1,2,8}"


def test_criterion_8_gtsf_round_trip():
    with criterion(8, "GTSF round trip") as detail:
        perms = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
        rng = np.random.default_rng(8)
        count = 1000
        for case in range(count):
            dtype = "f32" if case % 2 else "f64"
            shape = tuple(int(x) for x in rng.integers(1, 6, 3))
            halo = tuple(int(x) for x in rng.integers(0, 2, 3))
            layout = LayoutSpec(perms[case % len(perms)])
            f = allocate(dtype, shape, halo, layout)
            vals = rng.uniform(-100, 100, f.shape)
            f.data()[...] = vals.astype(f.data().dtype)
            # sprinkle NaNs with distinct payloads
            if dtype == "f64":
                bits = np.uint64(0x7FF8000000000000 + case)
                f.data()[0, 0, 0] = float(bits.view(np.float64))
            else:
                bits32 = np.uint32(0x7FC00000 + case)
                f.data()[0, 0, 0] = float(bits32.view(np.float32))
            buf = io.BytesIO()
            write_gtsf(f, buf)
            buf.seek(0)
            g = read_gtsf(buf, LayoutSpec(perms[(case + 1) % len(perms)]))
            assert g.shape == f.shape and g.origin == f.origin and g.dtype == f.dtype
            assert (
                np.ascontiguousarray(g.data()).tobytes()
                == np.ascontiguousarray(f.data()).tobytes()
            ), f"case {case} not bit-exact"
        detail["note"] = f"{count} fields across dtypes/layouts, bit-exact"
