"""pipeclean: model-aware tabular data cleaning as sequential pipeline search.

Core pieces: an immutable columnar Table, deterministic error injectors, a
9-component data-quality observer, parameterized cleaning actions and pipeline
enumeration, seven reward functions, a cached greedy pipeline search, the
fixed-horizon cleaning environment, a policy-gradient learner, and the
experiment runner behind the ``pipeclean`` CLI.
"""

__version__ = "0.1.0"

from .table import Table, SplitPair, load_table, save_table  # noqa: F401
from .actions import Action, ActionSuite, Pipeline  # noqa: F401
