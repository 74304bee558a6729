"""Sequence-to-grid preprocessing: a differentiable grid memory fed by
a recurrent action policy, with convolutional decoders on top.

The package is self-contained: reverse-mode autodiff on numpy arrays,
the grid construction itself, task generators with exact solvers, and
a small training stack.  Hot kernels run through a compiled extension
when available (see seq2grid.kernels).
"""

from .autodiff import Tensor, no_grad
from .errors import (CapacityError, ConfigError, DimensionError,
                     NumericError, ParameterError, ParseError,
                     Seq2GridError, StateError, TokenizationError)
from .grid import Grid, discrete_oracle, encode_sequence_to_grid
from .kernels import BACKEND_NAME

__version__ = "0.1.0"

__all__ = [
    "Tensor", "no_grad", "Grid", "discrete_oracle",
    "encode_sequence_to_grid", "BACKEND_NAME", "Seq2GridError",
    "DimensionError", "ParameterError", "NumericError", "CapacityError",
    "ParseError", "ConfigError", "StateError", "TokenizationError",
    "__version__",
]
