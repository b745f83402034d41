"""Backend selection for the hot kernels.

The compiled extension is used when it was built; otherwise the numpy
fallback is used. Set ``ILDE_KERNELS=python`` to force the fallback.
"""

import os

from . import _kernels_py

python_backend = _kernels_py

try:
    from . import _kernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

if compiled_backend is not None and os.environ.get("ILDE_KERNELS", "").lower() != "python":
    _active = compiled_backend
    BACKEND = "compiled"
else:
    _active = _kernels_py
    BACKEND = "python"

sample_rollouts = _active.sample_rollouts
knn_distances = _active.knn_distances
gae = _active.gae
