"""Hot inner loops with a compiled backend and a numpy fallback.

The compiled extension is used when it was built and ``EXTRABI_PURE_PYTHON``
is unset or ``0``. ``BACKEND`` names the active implementation.
"""
import os

from . import _pykernels as python

compiled = None
if os.environ.get("EXTRABI_PURE_PYTHON", "0") in ("", "0"):
    try:
        from . import _ckernels as compiled
    except ImportError:
        compiled = None

_impl = compiled if compiled is not None else python
BACKEND = "cython" if compiled is not None else "python"

hermite_table = _impl.hermite_table
hermite_series = _impl.hermite_series
wigner_fock = _impl.wigner_fock
survival_amplitude = _impl.survival_amplitude

__all__ = [
    "BACKEND",
    "compiled",
    "python",
    "hermite_table",
    "hermite_series",
    "wigner_fock",
    "survival_amplitude",
]
