"""Access to the committed benchmark kernels (`hdiff.gts`, `vadv.gts`)."""

from __future__ import annotations

from importlib import resources

KERNEL_NAMES = ("hdiff", "vadv")


def kernel_source(name: str) -> str:
    if name not in KERNEL_NAMES:
        raise KeyError(f"unknown kernel '{name}'; available: {', '.join(KERNEL_NAMES)}")
    return resources.files("stencilforge").joinpath(f"kernels/{name}.gts").read_text()
