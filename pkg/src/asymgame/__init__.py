"""Zero-sum games where one player privately watches a hidden Markov chain.

Submodules: ``expr`` and ``model`` (game files), ``stage_game`` (matrix games,
``u`` and concave envelopes), ``chain_filter`` (simulation and belief filter),
``hjb`` (limit value on a grid), ``discrete_game`` (``V_n`` and matches) and
``cli``.
"""
from .model import GameModel, ModelError, load_model, parse_model, preset_path, validate_model
from .stage_game import concave_envelope_1d, lambda_max, solve_matrix_game, u_surface, u_value

__version__ = "0.1.0"

__all__ = [
    "GameModel", "ModelError", "load_model", "parse_model", "preset_path", "validate_model",
    "concave_envelope_1d", "lambda_max", "solve_matrix_game", "u_surface", "u_value",
]
