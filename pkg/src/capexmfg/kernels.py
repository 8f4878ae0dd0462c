"""Backend selection for the PSOR kernel: compiled extension with Python fallback.

The compiled and pure-Python kernels produce bit-identical results; the
extension releases the GIL so value-surface slices can run on real threads.
Set CAPEXMFG_BACKEND=python to force the fallback.
"""
import os

from . import _psor_py

if os.environ.get("CAPEXMFG_BACKEND", "").lower() == "python":
    _impl = _psor_py
    BACKEND = "python"
else:
    try:
        from . import _psor as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _psor_py
        BACKEND = "python"

psor_solve = _impl.psor_solve
lcp_residual = _impl.lcp_residual
