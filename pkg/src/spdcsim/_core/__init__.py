"""Hot kernels. The compiled Cython module is used when it was built and
``SPDCSIM_PURE_PYTHON`` is not set; otherwise the numpy fallback is loaded.
"""

import os

from . import _fallback

if os.environ.get("SPDCSIM_PURE_PYTHON"):
    _impl = _fallback
else:
    try:
        from . import _correlate as _impl
    except ImportError:  # extension not built
        _impl = _fallback

BACKEND = "cython" if _impl is not _fallback else "python"
correlate_into = _impl.correlate_into
is_sorted = _impl.is_sorted
