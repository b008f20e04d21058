"""Kernel backend selection.

The compiled extension is preferred when present; the numpy implementation is
the fallback. Set NETCP_BACKEND=c or NETCP_BACKEND=py to force a choice (the
forced compiled backend raises if the extension is missing).
"""

import os

from . import _pycore

_choice = os.environ.get("NETCP_BACKEND", "").strip().lower()

if _choice in ("py", "python"):
    _impl = _pycore
elif _choice in ("c", "cython"):
    from . import _ckernels as _impl
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pycore

BACKEND_NAME = _impl.BACKEND_NAME
pg_update = _impl.pg_update
single_site_sweep = _impl.single_site_sweep
seg_logdens = _impl.seg_logdens

# resampling primitives are shared pure-Python reference code
solve_kappa = _pycore.solve_kappa
stratified_pick = _pycore.stratified_pick
conditional_sor_core = _pycore.conditional_sor_core
