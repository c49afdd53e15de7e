"""Hot numerical kernels with a compiled core and a numpy fallback.

The compiled extension ``_ckernels`` is used when it was built; otherwise the
numpy implementations in ``_pykernels`` are used.  Setting the environment
variable ``RIGIDFLUID_PURE_PYTHON=1`` forces the fallback.  ``BACKEND`` names
the active implementation.
"""

import os

from . import _pykernels as python

_FORCE_PY = os.environ.get("RIGIDFLUID_PURE_PYTHON", "").strip() not in ("", "0")

compiled = None
if not _FORCE_PY:
    try:
        from . import _ckernels as compiled  # type: ignore[no-redef]
    except ImportError:
        compiled = None

_active = compiled if compiled is not None else python
BACKEND = "compiled" if compiled is not None else "python"

curve_eval = _active.curve_eval
curve_project = _active.curve_project
curve_normal_inverse = _active.curve_normal_inverse
p1_assemble = _active.p1_assemble

__all__ = [
    "BACKEND",
    "compiled",
    "python",
    "curve_eval",
    "curve_project",
    "curve_normal_inverse",
    "p1_assemble",
]
