"""Kernel dispatch: compiled extension when available, numpy fallback otherwise.

Set ``TESTSIM_PURE=1`` to force the fallback (used by the benchmark and the
backend-agreement tests).
"""

from __future__ import annotations

import os

from . import _pykern

if os.environ.get("TESTSIM_PURE") == "1":
    _impl = _pykern
    BACKEND = "python"
else:
    try:
        from . import _ckern as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykern
        BACKEND = "python"

transport_solve = _impl.transport_solve
hac_merges = _impl.hac_merges


def backends() -> dict[str, object]:
    """All importable kernel backends, for benchmarks and cross-checks."""
    found: dict[str, object] = {"python": _pykern}
    try:
        from . import _ckern  # type: ignore[attr-defined]

        found["cython"] = _ckern
    except ImportError:
        pass
    return found
