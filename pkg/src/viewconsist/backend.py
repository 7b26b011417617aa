"""Kernel backend selection.

The hot pose-distance kernels exist twice: a compiled Cython extension
(``viewconsist._kernels``) and a pure-numpy fallback
(``viewconsist._kernels_np``) with identical semantics.  The compiled one is
preferred when importable; set ``VIEWCONSIST_BACKEND=python`` or
``VIEWCONSIST_BACKEND=compiled`` to force a choice (forcing ``compiled``
raises if the extension was not built).
"""

import os

from . import _kernels_np

_requested = os.environ.get("VIEWCONSIST_BACKEND", "").strip().lower()

if _requested == "python":
    _impl = _kernels_np
elif _requested == "compiled":
    from . import _kernels as _impl
elif _requested == "":
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_np
else:
    raise ImportError(
        f"VIEWCONSIST_BACKEND={_requested!r} is not one of 'python', 'compiled'"
    )

BACKEND_NAME = "compiled" if _impl.__name__.endswith("._kernels") else "python"

paired_sqdist = _impl.paired_sqdist
pairwise_sqdist = _impl.pairwise_sqdist
paired_align = _impl.paired_align
paired_grad = _impl.paired_grad
