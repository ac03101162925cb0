"""Select the compiled edit-distance kernels, falling back to pure Python.

Set ``CSERKIT_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _lev_py

BACKEND = "python"
levenshtein = _lev_py.levenshtein
distance_matrix = _lev_py.distance_matrix
best_matches = _lev_py.best_matches

if not os.environ.get("CSERKIT_PURE_PYTHON"):
    try:
        from . import _lev
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"
        levenshtein = _lev.levenshtein
        distance_matrix = _lev.distance_matrix
        best_matches = _lev.best_matches
