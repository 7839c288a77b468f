"""Backend selection for the hot kernels.

The compiled ``_ckernels`` extension is used when importable; otherwise the
numpy fallback in ``_pykernels``. Set ``WARMSCHED_PURE_PYTHON=1`` to force the
fallback.
"""

import os

from . import _pykernels as python_backend

compiled_backend = None
if os.environ.get("WARMSCHED_PURE_PYTHON") != "1":
    try:
        from . import _ckernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

_active = compiled_backend or python_backend
BACKEND = "compiled" if compiled_backend is not None else "python"

simulate_core = _active.simulate_core
simplex_loop = _active.simplex_loop
