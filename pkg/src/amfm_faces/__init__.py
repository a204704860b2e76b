"""Block-based face detection on AM-FM image features.

Subpackages and modules:

- :mod:`amfm_faces.hilbert`: Hilbert FIR design, fixed-point quantization, annealing
- :mod:`amfm_faces.gabor`: the two-scale, eight-orientation kernel bank
- :mod:`amfm_faces.amfm`: analytic image, channel filtering, dominant component analysis
- :mod:`amfm_faces.dataset`: frame tiling, overlap targets, dataset files, synthetic corpus
- :mod:`amfm_faces.nets`: from-scratch layers, networks and training
- :mod:`amfm_faces.evaluation`: ROC/AUC, confusion counts, overlays and reports
- :mod:`amfm_faces.estimators`: scikit-learn style wrappers
- :mod:`amfm_faces.cli`: the ``amfm-faces`` command
"""

from .errors import AmFmError, EvaluationError, FormatError, NumericalError, ParameterError

__version__ = "0.1.0"

__all__ = [
    "AmFmError",
    "EvaluationError",
    "FormatError",
    "NumericalError",
    "ParameterError",
    "__version__",
]
