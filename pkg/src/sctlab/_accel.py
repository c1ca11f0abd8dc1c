"""Numba availability and the kernel-selection switch.

Set SCTLAB_DISABLE_NUMBA=1 to force the pure-numpy kernel fallbacks even
when numba is installed (useful for debugging and for the benchmark
baseline).  The flag is read once at import time.
"""

import os


def _env_disabled() -> bool:
    return os.environ.get("SCTLAB_DISABLE_NUMBA", "").strip().lower() in {
        "1",
        "true",
        "yes",
        "on",
    }


try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _env_disabled()
