"""Hot loops of the factor-to-task message computation.

Each kernel has a numba implementation and a pure-numpy one with the same
signature. Numba is used when importable unless ``CROWDBP_DISABLE_NUMBA``
is set to a non-empty value other than ``0``.
"""

import os

from . import _numpy as numpy_backend

numba_backend = None
if os.environ.get("CROWDBP_DISABLE_NUMBA", "0") in ("", "0"):
    try:
        from . import _numba as numba_backend
    except ImportError:  # pragma: no cover - numba is a declared dependency
        numba_backend = None

backend = numba_backend if numba_backend is not None else numpy_backend
BACKEND_NAME = "numba" if backend is numba_backend else "numpy"


def onecoin_dp_messages(worker_ptr, edge_label, t2w, a1, a2, num_classes):
    """Exact one-coin worker-to-task messages for every edge.

    ``t2w`` holds the task-to-worker messages (E x K, edges grouped by worker
    via ``worker_ptr``); returns the normalised worker-to-task messages.
    """
    return backend.onecoin_dp_messages(worker_ptr, edge_label, t2w, float(a1), float(a2),
                                       int(num_classes))


def mc_worker_messages(theta, msgs, labels):
    """Monte-Carlo messages from one worker given sampled confusion matrices (S x K x K)."""
    return backend.mc_worker_messages(theta, msgs, labels)
