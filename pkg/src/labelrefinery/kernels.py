"""Backend selection for the augmentation kernels.

The compiled extension is preferred when importable; the numpy fallback is
used otherwise. Set LABELREFINERY_KERNELS=python to force the fallback.
Both backends compute bit-identical float32 results, so the choice only
affects speed.
"""

import os

from labelrefinery import _kernels_python

try:
    from labelrefinery import _kernels_native
except ImportError:
    _kernels_native = None


def available_backends():
    names = ["python"]
    if _kernels_native is not None:
        names.insert(0, "native")
    return names


def get_backend(name):
    if name == "python":
        return _kernels_python
    if name == "native":
        if _kernels_native is None:
            raise ImportError("compiled kernels are not built in this install")
        return _kernels_native
    raise ValueError(f"unknown kernel backend {name!r}")


def _select():
    forced = os.environ.get("LABELREFINERY_KERNELS", "").strip().lower()
    if forced:
        return forced, get_backend(forced)
    if _kernels_native is not None:
        return "native", _kernels_native
    return "python", _kernels_python


ACTIVE_BACKEND, _impl = _select()

crop_resize_bilinear = _impl.crop_resize_bilinear
gaussian_blur = _impl.gaussian_blur
