import os

import pytest


@pytest.fixture(scope="session", autouse=True)
def session_cache_dir(tmp_path_factory):
    """Isolated build cache for the whole test session so compiler-invocation
    counts are not polluted by earlier runs."""
    path = tmp_path_factory.mktemp("gts-cache")
    old = os.environ.get("GTS_CACHE_DIR")
    os.environ["GTS_CACHE_DIR"] = str(path)
    yield str(path)
    if old is None:
        os.environ.pop("GTS_CACHE_DIR", None)
    else:
        os.environ["GTS_CACHE_DIR"] = old


COPY_SRC = """\
stencil copy(a: Field[f64], b: Field[f64]):
    with computation(PARALLEL):
        with interval(0, None):
            b = a[0, 0, 0]
"""


@pytest.fixture()
def copy_src():
    return COPY_SRC
