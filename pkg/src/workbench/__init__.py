"""Numpy encoder-decoder transformer workbench for comparing architectural
modifications under one shared codebase."""

from .config import ModelConfig, VariantSpec, format_spec, load_spec, parse_spec
from .errors import ConfigError, DataError, NumericError, ParseError, WorkbenchError
from .model import Batch, Model, build_model, build_params, forward_loss
from .params import ParamStore

__all__ = ["ModelConfig", "VariantSpec", "format_spec", "load_spec", "parse_spec",
           "ConfigError", "DataError", "NumericError", "ParseError", "WorkbenchError",
           "Batch", "Model", "build_model", "build_params", "forward_loss", "ParamStore"]
__version__ = "0.1.0"
