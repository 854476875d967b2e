"""Backend selection for the edge kernels.

Prefers the compiled Cython extension; falls back to pure numpy when the
extension is missing or when MGNOLAB_BACKEND=python is set. Both backends
expose the same four functions and agree to floating-point associativity.
"""

import os

_requested = os.environ.get("MGNOLAB_BACKEND", "auto").strip().lower()
if _requested not in ("auto", "compiled", "python"):
    raise ValueError(
        f"MGNOLAB_BACKEND must be 'auto', 'compiled' or 'python', got {_requested!r}"
    )

if _requested == "python":
    from . import _edgeops_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _edgeops as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        from . import _edgeops_py as _impl

        BACKEND = "python"

edge_matvec = _impl.edge_matvec
edge_matvec_backward = _impl.edge_matvec_backward
segment_sum = _impl.segment_sum
scatter_add_rows = _impl.scatter_add_rows
msg_mean_forward = _impl.msg_mean_forward
msg_mean_backward = _impl.msg_mean_backward


def load_backend(name: str):
    """Return the named backend module (for benchmarks and equivalence tests)."""
    if name == "python":
        from . import _edgeops_py

        return _edgeops_py
    if name == "compiled":
        from . import _edgeops  # raises ImportError when not built

        return _edgeops
    raise ValueError(f"unknown backend {name!r}")
