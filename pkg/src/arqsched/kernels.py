"""Backend selection for the hot loops.

The compiled extension is used when it imports; setting ``ARQSCHED_BACKEND=python``
forces the numpy fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
if os.environ.get("ARQSCHED_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
else:
    _impl = _pykernels

rvi_solve = _impl.rvi_solve
simulate_block = _impl.simulate_block

IDLE, TRANSMIT, BROADCAST = _pykernels.IDLE, _pykernels.TRANSMIT, _pykernels.BROADCAST
P_RELAXED, P_STRINGENT, P_TOPM, P_RANDOM = (
    _pykernels.P_RELAXED, _pykernels.P_STRINGENT, _pykernels.P_TOPM, _pykernels.P_RANDOM)


def get_backend(name: str):
    """Return the kernel module for ``"python"`` or ``"cython"``."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")
